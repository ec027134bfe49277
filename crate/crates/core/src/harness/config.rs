use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gaussian::DEFAULT_DIM;
use crate::inequalities::D1FlowConfig;
use crate::ot::{MonotoneConfig, WassersteinConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Talagrand,
    Gauge,
    D1flow,
    Ladder,
    Jacobian,
    Interpolation,
    Polar,
    Monotone,
    EntropyTransport,
    Submartingale,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 10] = [
        ExperimentKind::Talagrand,
        ExperimentKind::Gauge,
        ExperimentKind::D1flow,
        ExperimentKind::Ladder,
        ExperimentKind::Jacobian,
        ExperimentKind::Interpolation,
        ExperimentKind::Polar,
        ExperimentKind::Monotone,
        ExperimentKind::EntropyTransport,
        ExperimentKind::Submartingale,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Talagrand => "talagrand",
            ExperimentKind::Gauge => "gauge",
            ExperimentKind::D1flow => "d1flow",
            ExperimentKind::Ladder => "ladder",
            ExperimentKind::Jacobian => "jacobian",
            ExperimentKind::Interpolation => "interpolation",
            ExperimentKind::Polar => "polar",
            ExperimentKind::Monotone => "monotone",
            ExperimentKind::EntropyTransport => "entropy-transport",
            ExperimentKind::Submartingale => "submartingale",
        }
    }

    /// Key of the result each experiment checks, embedded in its report.
    pub fn citation(self) -> &'static str {
        match self {
            ExperimentKind::Talagrand => "talagrand-transport-entropy",
            ExperimentKind::Gauge => "cameron-martin-gauge-concentration",
            ExperimentKind::D1flow => "d1-ou-flow-bound",
            ExperimentKind::Ladder => "finite-dimensional-projection-ladder",
            ExperimentKind::Jacobian => "gaussian-jacobian-monge-ampere",
            ExperimentKind::Interpolation => "displacement-interpolation",
            ExperimentKind::Polar => "polar-factorization",
            ExperimentKind::Monotone => "cyclic-monotonicity",
            ExperimentKind::EntropyTransport => "entropy-transport-inequality",
            ExperimentKind::Submartingale => "conditioning-submartingale",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment kind `{s}`")))
    }
}

/// Deliberate corruptions used to exercise failure paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fixture {
    /// Exchange the two sides of every inequality before judging it.
    SwapSides,
}

fn default_preset() -> String {
    "unit".into()
}

fn default_dim() -> usize {
    DEFAULT_DIM
}

fn default_n() -> usize {
    4096
}

/// One fully specified run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default = "default_preset")]
    pub preset: String,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub solver: WassersteinConfig,
    /// Kind-specific settings; see the `*Params` types.
    #[serde(default)]
    pub params: Value,
    /// Output root for this run; the environment default applies otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<Fixture>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TalagrandParams {
    pub coupled: bool,
    pub batches: usize,
}

impl Default for TalagrandParams {
    fn default() -> Self {
        TalagrandParams {
            coupled: true,
            batches: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaugeParams {
    pub region: String,
    pub eps: f64,
}

impl Default for GaugeParams {
    fn default() -> Self {
        GaugeParams {
            region: "halfspace:1,0".into(),
            eps: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct D1FlowParams {
    #[serde(flatten)]
    pub flow: D1FlowConfig,
    /// Largest accepted relative deviation of `Lambda_{0,1}` from `L`.
    pub constancy_tol: f64,
}

impl Default for D1FlowParams {
    fn default() -> Self {
        D1FlowParams {
            flow: D1FlowConfig::default(),
            constancy_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LadderParams {
    /// Truncation levels; empty means `1, 2, ..., dim`.
    pub dims: Vec<usize>,
    pub coupled: bool,
    pub allow_approximate: bool,
    pub rel_tol: f64,
    /// Pooled standard errors allowed between neighbouring levels.
    pub sigma_band: f64,
}

impl Default for LadderParams {
    fn default() -> Self {
        LadderParams {
            dims: Vec::new(),
            coupled: true,
            allow_approximate: false,
            rel_tol: 0.1,
            sigma_band: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JacobianParams {
    pub tol: f64,
}

impl Default for JacobianParams {
    fn default() -> Self {
        JacobianParams { tol: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterpolationParams {
    pub times: Vec<f64>,
    /// `quadratic:b11,..,bdd` to test a potential directly instead of the
    /// transport onto the preset law.
    pub potential: Option<String>,
    pub directions: usize,
    pub tol: f64,
    /// Largest accepted `|Lambda_t (L_t o T_t) - 1|` on affine paths.
    pub residual_tol: f64,
}

impl Default for InterpolationParams {
    fn default() -> Self {
        InterpolationParams {
            times: (0..10).map(|k| k as f64 / 10.0).collect(),
            potential: None,
            directions: 8,
            tol: 1e-9,
            residual_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolarParams {
    pub angle_deg: f64,
    pub scale: f64,
    pub shift: Vec<f64>,
    pub candidates: usize,
    pub identity_tol: f64,
}

impl Default for PolarParams {
    fn default() -> Self {
        PolarParams {
            angle_deg: 30.0,
            scale: 1.0,
            shift: vec![1.0],
            candidates: 20,
            identity_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntropyTransportParams {
    pub source: String,
}

impl Default for EntropyTransportParams {
    fn default() -> Self {
        EntropyTransportParams { source: "unit".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubmartingaleParams {
    pub potential: String,
    /// Conditioning levels; empty means `0, 1, ..., dim`.
    pub levels: Vec<usize>,
    pub tol: f64,
}

impl Default for SubmartingaleParams {
    fn default() -> Self {
        SubmartingaleParams {
            potential: "abs:1".into(),
            levels: Vec::new(),
            tol: 1e-10,
        }
    }
}

fn typed<P: DeserializeOwned + Serialize>(params: &Value) -> Result<(P, Value)> {
    let raw = if params.is_null() { json!({}) } else { params.clone() };
    let p: P = serde_json::from_value(raw).map_err(|e| Error::Config(format!("params: {e}")))?;
    let canonical = serde_json::to_value(&p)?;
    Ok((p, canonical))
}

/// Typed parameters of a config.
#[derive(Debug, Clone, PartialEq)]
pub enum KindParams {
    Talagrand(TalagrandParams),
    Gauge(GaugeParams),
    D1flow(D1FlowParams),
    Ladder(LadderParams),
    Jacobian(JacobianParams),
    Interpolation(InterpolationParams),
    Polar(PolarParams),
    Monotone(MonotoneConfig),
    EntropyTransport(EntropyTransportParams),
    Submartingale(SubmartingaleParams),
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_value(serde_json::from_str(text)?)
    }

    pub fn from_value(v: Value) -> Result<Self> {
        serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn kind_params(&self) -> Result<KindParams> {
        Ok(self.typed_params()?.0)
    }

    fn typed_params(&self) -> Result<(KindParams, Value)> {
        let p = &self.params;
        Ok(match self.kind {
            ExperimentKind::Talagrand => typed(p).map(|(v, c)| (KindParams::Talagrand(v), c))?,
            ExperimentKind::Gauge => typed(p).map(|(v, c)| (KindParams::Gauge(v), c))?,
            ExperimentKind::D1flow => typed(p).map(|(v, c)| (KindParams::D1flow(v), c))?,
            ExperimentKind::Ladder => typed(p).map(|(v, c)| (KindParams::Ladder(v), c))?,
            ExperimentKind::Jacobian => typed(p).map(|(v, c)| (KindParams::Jacobian(v), c))?,
            ExperimentKind::Interpolation => typed(p).map(|(v, c)| (KindParams::Interpolation(v), c))?,
            ExperimentKind::Polar => typed(p).map(|(v, c)| (KindParams::Polar(v), c))?,
            ExperimentKind::Monotone => typed(p).map(|(v, c)| (KindParams::Monotone(v), c))?,
            ExperimentKind::EntropyTransport => typed(p).map(|(v, c)| (KindParams::EntropyTransport(v), c))?,
            ExperimentKind::Submartingale => typed(p).map(|(v, c)| (KindParams::Submartingale(v), c))?,
        })
    }

    /// The same config with every parameter default written out, so that
    /// equivalent configs serialize and hash identically.
    pub fn resolved(&self) -> Result<Self> {
        let (_, canonical) = self.typed_params()?;
        Ok(ExperimentConfig {
            params: canonical,
            ..self.clone()
        })
    }

    /// SHA-256 of the resolved config without its output location, first 16
    /// hex digits.
    pub fn hash(&self) -> Result<String> {
        let mut c = self.resolved()?;
        c.output_dir = None;
        let bytes = serde_json::to_vec(&c)?;
        Ok(hex::encode(&Sha256::digest(&bytes)[..8]))
    }

    /// Apply `a.b.c=value` overrides; `value` is read as JSON when it parses,
    /// as a string otherwise.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        let mut v = serde_json::to_value(self)?;
        for o in overrides {
            set_path(&mut v, o)?;
        }
        Self::from_value(v)
    }
}

/// Apply one `a.b.c=value` assignment to a JSON document.
pub fn set_path(doc: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not of the form path=value")))?;
    let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("bad override path `{path}`")));
    }
    let mut cur = doc;
    for (i, key) in keys.iter().enumerate() {
        if cur.is_null() {
            *cur = json!({});
        }
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("`{}` is not an object", keys[..i].join("."))))?;
        if i + 1 == keys.len() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(key.to_string()).or_insert(Value::Null);
    }
    unreachable!("loop returns on the last key")
}
