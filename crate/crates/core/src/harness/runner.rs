use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::{
    D1FlowParams, EntropyTransportParams, ExperimentConfig, Fixture, GaugeParams, InterpolationParams, JacobianParams,
    KindParams, LadderParams, PolarParams, SubmartingaleParams, TalagrandParams,
};
use crate::error::{Error, Result};
use crate::gaussian::{sample_density, sample_standard, DensityField, GaussianSpace, Provenance, SamplingMethod};
use crate::inequalities::{
    d1_flow_report, gauge_report, talagrand_report, InequalityReport, Region, TalagrandConfig,
};
use crate::maps::{brenier_from_standard, potential_of, projection_ladder, LadderConfig, Potential, QuadraticPotential};
use crate::monge_ampere::{
    entropy_transport_check, interpolation_check, jacobian_residual, submartingale_trace, ConditionedPotential,
    InterpolationConfig,
};
use crate::ot::{check_cyclic_monotone, solve_exact, support_pairs, CostOrder, MonotoneConfig};
use crate::polar::{candidate_sweep, factorize, minimality_check, CandidateKind, LinearMap, RotationCandidate};
use crate::rng;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "WTRANSPORT_OUT";
pub const DEFAULT_OUT: &str = "wtransport-out";

/// One named pass/fail check of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }

    fn inequality(name: &str, r: &InequalityReport) -> Self {
        let verdict = serde_json::to_value(r.verdict).expect("verdict serializes");
        Check::new(
            name,
            r.passes(),
            format!(
                "{} (lhs {:.6e} +/- {:.2e}, rhs {:.6e} +/- {:.2e})",
                verdict.as_str().unwrap_or_default(),
                r.lhs.value,
                r.lhs.stderr,
                r.rhs.value,
                r.rhs.stderr
            ),
        )
    }
}

/// What a run computed, before anything is written.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    /// Deterministic report document: config, citation key, result, checks.
    pub payload: Value,
    pub checks: Vec<Check>,
    /// CSV tables by file name.
    pub tables: Vec<(String, Vec<u8>)>,
}

impl Outcome {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// The bytes written to `report.json`.
    pub fn payload_bytes(&self) -> Result<Vec<u8>> {
        let mut b = serde_json::to_vec_pretty(&self.payload)?;
        b.push(b'\n');
        Ok(b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub artifact_version: String,
    pub wall_time_secs: f64,
    pub payload: Value,
    pub checks: Vec<Check>,
    pub pass: bool,
    pub output_dir: PathBuf,
}

/// Output root: the config's own, else `$WTRANSPORT_OUT`, else `wtransport-out`.
pub fn output_root(config: &ExperimentConfig) -> PathBuf {
    config
        .output_dir
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn inequalities_csv(rows: &[(&str, &InequalityReport)]) -> Result<Vec<u8>> {
    csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["inequality", "lhs", "lhs_stderr", "rhs", "rhs_stderr", "slack", "pooled_stderr", "verdict"])?;
        for (name, r) in rows {
            let verdict = serde_json::to_value(r.verdict)?;
            w.write_record(&[
                name.to_string(),
                format!("{:e}", r.lhs.value),
                format!("{:e}", r.lhs.stderr),
                format!("{:e}", r.rhs.value),
                format!("{:e}", r.rhs.stderr),
                format!("{:e}", r.slack),
                format!("{:e}", r.pooled_stderr),
                verdict.as_str().unwrap_or_default().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })
}

fn apply_fixture(config: &ExperimentConfig, r: InequalityReport) -> InequalityReport {
    match config.fixture {
        Some(Fixture::SwapSides) => r.swapped(),
        None => r,
    }
}

fn require_no_fixture(config: &ExperimentConfig) -> Result<()> {
    if config.fixture.is_some() {
        return Err(Error::Config(format!(
            "fixtures apply to inequality experiments, not `{}`",
            config.kind.name()
        )));
    }
    Ok(())
}

fn density(config: &ExperimentConfig) -> Result<DensityField> {
    DensityField::parse(&config.preset, config.dim)
}

/// Run the experiment without touching the file system.
pub fn execute(config: &ExperimentConfig) -> Result<Outcome> {
    let resolved = config.resolved()?;
    let (result, checks, tables) = match resolved.kind_params()? {
        KindParams::Talagrand(p) => talagrand(&resolved, &p)?,
        KindParams::Gauge(p) => gauge(&resolved, &p)?,
        KindParams::D1flow(p) => d1flow(&resolved, &p)?,
        KindParams::Ladder(p) => ladder(&resolved, &p)?,
        KindParams::Jacobian(p) => jacobian(&resolved, &p)?,
        KindParams::Interpolation(p) => interpolation(&resolved, &p)?,
        KindParams::Polar(p) => polar(&resolved, &p)?,
        KindParams::Monotone(p) => monotone(&resolved, &p)?,
        KindParams::EntropyTransport(p) => entropy(&resolved, &p)?,
        KindParams::Submartingale(p) => submartingale(&resolved, &p)?,
    };
    let mut embedded = resolved.clone();
    embedded.output_dir = None;
    let pass = checks.iter().all(|c| c.pass);
    let payload = json!({
        "artifact_version": ARTIFACT_VERSION,
        "citation": resolved.kind.citation(),
        "config": embedded,
        "config_hash": resolved.hash()?,
        "result": result,
        "checks": checks,
        "pass": pass,
    });
    Ok(Outcome { payload, checks, tables })
}

/// Run the experiment and write `config.json`, `report.json`, its CSV tables
/// and `metadata.json` under `<root>/<config hash>/`.
pub fn run(config: &ExperimentConfig) -> Result<RunRecord> {
    let started = Instant::now();
    let outcome = execute(config)?;
    persist(config, outcome, started.elapsed().as_secs_f64())
}

/// Write an outcome of `config` to disk, as `run` does.
pub fn persist(config: &ExperimentConfig, outcome: Outcome, wall: f64) -> Result<RunRecord> {
    let hash = config.hash()?;
    let dir = output_root(config).join(&hash);
    fs::create_dir_all(&dir)?;
    let mut cfg = config.resolved()?;
    cfg.output_dir = None;
    write_json(&dir.join("config.json"), &cfg)?;
    fs::write(dir.join("report.json"), outcome.payload_bytes()?)?;
    for (name, bytes) in &outcome.tables {
        fs::write(dir.join(name), bytes)?;
    }
    let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    write_json(
        &dir.join("metadata.json"),
        &json!({
            "config_hash": hash,
            "wall_time_secs": wall,
            "unix_timestamp": timestamp,
            "threads": rayon::current_num_threads(),
        }),
    )?;
    Ok(RunRecord {
        config_hash: hash,
        artifact_version: ARTIFACT_VERSION.into(),
        wall_time_secs: wall,
        pass: outcome.pass(),
        payload: outcome.payload,
        checks: outcome.checks,
        output_dir: dir,
    })
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<()> {
    let mut b = serde_json::to_vec_pretty(v)?;
    b.push(b'\n');
    fs::write(path, b)?;
    Ok(())
}

type Parts = (Value, Vec<Check>, Vec<(String, Vec<u8>)>);

fn talagrand(c: &ExperimentConfig, p: &TalagrandParams) -> Result<Parts> {
    let l = density(c)?;
    let cfg = TalagrandConfig {
        transport: c.solver,
        coupled: p.coupled,
        batches: p.batches,
    };
    let r = apply_fixture(c, talagrand_report(&l, c.n, c.seed, &cfg)?);
    let checks = vec![Check::inequality("talagrand", &r)];
    let tables = vec![("inequalities.csv".into(), inequalities_csv(&[("talagrand", &r)])?)];
    Ok((json!({ "report": r }), checks, tables))
}

fn gauge(c: &ExperimentConfig, p: &GaugeParams) -> Result<Parts> {
    let region = Region::parse(&p.region, c.dim)?;
    let mut g = gauge_report(&region, p.eps, c.n, c.seed)?;
    g.bound = apply_fixture(c, g.bound);
    g.separation = apply_fixture(c, g.separation);
    let checks = vec![
        Check::inequality("gauge-bound", &g.bound),
        Check::inequality("separation", &g.separation),
    ];
    let tables = vec![(
        "inequalities.csv".into(),
        inequalities_csv(&[("gauge-bound", &g.bound), ("separation", &g.separation)])?,
    )];
    Ok((json!({ "report": g }), checks, tables))
}

fn d1flow(c: &ExperimentConfig, p: &D1FlowParams) -> Result<Parts> {
    let l = density(c)?;
    let mut r = d1_flow_report(&l, c.n, c.seed, &p.flow)?;
    r.report = apply_fixture(c, r.report);
    let checks = vec![
        Check::inequality("d1-bound", &r.report),
        Check::new(
            "flow-endpoint",
            r.endpoint_error <= p.constancy_tol,
            format!("max relative |Lambda_01 - L| = {:.3e}", r.endpoint_error),
        ),
        Check::new(
            "flow-constancy",
            r.constancy_error <= p.constancy_tol,
            format!("max relative |Lambda_0t g_t - L| = {:.3e}", r.constancy_error),
        ),
        Check::new("flow-finite", !r.blow_up, if r.blow_up { "blow-up" } else { "finite" }),
    ];
    let mut trace = Vec::new();
    r.trace.write_csv(&mut trace)?;
    let tables = vec![
        ("inequalities.csv".into(), inequalities_csv(&[("d1-bound", &r.report)])?),
        ("flow_trace.csv".into(), trace),
    ];
    let result = json!({
        "report": r.report,
        "endpoint_error": r.endpoint_error,
        "constancy_error": r.constancy_error,
        "blow_up": r.blow_up,
        "exact_lhs": r.exact_lhs,
    });
    Ok((result, checks, tables))
}

fn ladder(c: &ExperimentConfig, p: &LadderParams) -> Result<Parts> {
    require_no_fixture(c)?;
    let l = density(c)?;
    let dims: Vec<usize> = if p.dims.is_empty() { (1..=c.dim).collect() } else { p.dims.clone() };
    let cfg = LadderConfig {
        coupled: p.coupled,
        allow_approximate: p.allow_approximate,
    };
    let r = projection_ladder(&l, &dims, c.n, c.seed, &cfg)?;
    let mut checks = vec![Check::new(
        "ladder-monotone",
        r.is_monotone(p.sigma_band),
        format!("levels {:?}", r.values),
    )];
    if let Some(err) = r.max_relative_error() {
        checks.push(Check::new(
            "ladder-closed-form",
            err <= p.rel_tol,
            format!("max relative error {err:.3e} against {:?}", r.theoretical.as_deref().unwrap_or_default()),
        ));
    }
    let mut table = Vec::new();
    r.write_csv(&mut table)?;
    Ok((json!({ "ladder": r }), checks, vec![("ladder.csv".into(), table)]))
}

fn jacobian(c: &ExperimentConfig, p: &JacobianParams) -> Result<Parts> {
    require_no_fixture(c)?;
    let l = density(c)?;
    let law = l
        .gaussian_law()
        .ok_or_else(|| Error::Unsupported(format!("`{}` has no closed-form transport", l.spec())))?;
    let t = brenier_from_standard(&law)?;
    let cloud = sample_standard(&GaussianSpace::new(c.dim)?, c.n, c.seed)?;
    let r = jacobian_residual(&l, &t, &cloud)?;
    let s = &r.summary;
    let checks = vec![
        Check::new(
            "jacobian-residual",
            s.max_abs_residual <= p.tol && s.invalid_points.is_empty(),
            format!("max |Lambda (L o T) - 1| = {:.3e}", s.max_abs_residual),
        ),
        Check::new(
            "det2-range",
            s.det2_min >= 0.0 && s.det2_max <= 1.0 + 1e-12,
            format!("det2 in [{:.6}, {:.6}]", s.det2_min, s.det2_max),
        ),
    ];
    let mut table = Vec::new();
    r.write_csv(&mut table)?;
    Ok((json!({ "transport": t, "summary": r.summary }), checks, vec![("jacobian.csv".into(), table)]))
}

fn quadratic_potential(spec: &str, dim: usize) -> Result<QuadraticPotential> {
    let body = spec
        .strip_prefix("quadratic:")
        .ok_or_else(|| Error::preset(spec, "expected `quadratic:b11,..,bdd`"))?;
    let b = body
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| Error::preset(spec, format!("`{s}` is not a number"))))
        .collect::<Result<Vec<f64>>>()?;
    if b.len() != dim * dim {
        return Err(Error::DimensionMismatch {
            expected: dim * dim,
            got: b.len(),
        });
    }
    QuadraticPotential::new(DMatrix::from_row_slice(dim, dim, &b), DVector::zeros(dim), 0.0)
}

fn interpolation(c: &ExperimentConfig, p: &InterpolationParams) -> Result<Parts> {
    require_no_fixture(c)?;
    let cloud = sample_standard(&GaussianSpace::new(c.dim)?, c.n, c.seed)?;
    let cfg = InterpolationConfig {
        directions: p.directions,
        tol: p.tol,
        seed: rng::derive_seed(c.seed, "interpolation"),
    };
    let (phi, transport): (Arc<dyn Potential>, _) = match &p.potential {
        Some(spec) => (Arc::new(quadratic_potential(spec, c.dim)?), None),
        None => {
            let l = density(c)?;
            let law = l
                .gaussian_law()
                .ok_or_else(|| Error::Unsupported(format!("`{}` has no closed-form transport", l.spec())))?;
            let t = brenier_from_standard(&law)?;
            (potential_of(&t)?.phi, Some(t))
        }
    };
    let r = interpolation_check(phi.as_ref(), transport.as_ref(), &p.times, &cloud, &cfg)?;
    let mut checks = vec![
        Check::new(
            "interpolation-monotone",
            r.levels.iter().all(|l| l.monotone),
            format!(
                "min over t of monotonicity - (1 - t) = {:.3e}",
                r.levels.iter().map(|l| l.min_monotonicity - (1.0 - l.t)).fold(f64::INFINITY, f64::min)
            ),
        ),
        Check::new(
            "lambda-positive",
            r.levels.iter().all(|l| l.lambda_positive),
            format!("min Lambda_t = {:.3e}", r.levels.iter().map(|l| l.min_lambda).fold(f64::INFINITY, f64::min)),
        ),
        Check::new(
            "log-det2-nonincreasing",
            r.log_det2_nonincreasing,
            format!("worst increase {:.3e}", r.worst_log_det2_increase),
        ),
    ];
    if transport.is_some() {
        let worst = r.levels.iter().filter_map(|l| l.max_residual).fold(0.0, f64::max);
        checks.push(Check::new(
            "interpolation-residual",
            worst <= p.residual_tol,
            format!("max |Lambda_t (L_t o T_t) - 1| = {worst:.3e}"),
        ));
    }
    let table = csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["t", "min_monotonicity", "min_lambda", "max_residual"])?;
        for l in &r.levels {
            w.write_record(&[
                format!("{:e}", l.t),
                format!("{:e}", l.min_monotonicity),
                format!("{:e}", l.min_lambda),
                l.max_residual.map_or_else(|| "nan".into(), |v| format!("{v:e}")),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    Ok((json!({ "interpolation": r }), checks, vec![("interpolation.csv".into(), table)]))
}

fn polar(c: &ExperimentConfig, p: &PolarParams) -> Result<Parts> {
    require_no_fixture(c)?;
    let v = LinearMap::planar(c.dim, p.angle_deg, p.scale, &p.shift)?;
    let f = factorize(&v, c.n, c.seed)?;
    let alpha = RotationCandidate::new(f.rotation_matrix(), CandidateKind::Orthogonal);
    let candidates = candidate_sweep(c.dim, p.candidates, rng::derive_seed(c.seed, "candidates"));
    let table = minimality_check(&v, &alpha, &candidates, c.n, c.seed)?;
    let checks = vec![
        Check::new(
            "polar-identity",
            f.identity_residual <= p.identity_tol,
            format!("max |T(s(x)) - V(x)| = {:.3e}", f.identity_residual),
        ),
        Check::new(
            "rotation-test",
            f.rotation_test.pass,
            format!(
                "min KS p = {:.3e}, cov deviation {:.3e}",
                f.rotation_test.ks_p_values.iter().copied().fold(f64::INFINITY, f64::min),
                f.rotation_test.max_cov_deviation
            ),
        ),
        Check::new(
            "rotation-minimality",
            table.minimal,
            format!("M_v(alpha) = {:.6e} over {} candidates", table.alpha.value, table.rows.len()),
        ),
    ];
    let mut csv = Vec::new();
    table.write_csv(&mut csv)?;
    Ok((
        json!({ "factorization": f, "minimality": table }),
        checks,
        vec![("minimality.csv".into(), csv)],
    ))
}

fn monotone(c: &ExperimentConfig, p: &MonotoneConfig) -> Result<Parts> {
    require_no_fixture(c)?;
    let l = density(c)?;
    let space = GaussianSpace::new(c.dim)?;
    let source = sample_standard(&space, c.n, c.seed)?;
    let target_seed = rng::derive_seed(c.seed, "monotone-target");
    let target = if l.has_pushforward() {
        sample_standard(&space, c.n, target_seed)?.map_points(c.dim, Provenance::Pushforward, |z| {
            l.push_standard(z).expect("pushforward available")
        })?
    } else {
        let t = sample_density(&l, c.n, target_seed, SamplingMethod::Auto)?;
        if !t.is_uniform() {
            return Err(Error::Unsupported(format!(
                "`{}` has no unweighted sampler; the exact solver needs uniform clouds",
                l.spec()
            )));
        }
        t
    };
    let coupling = solve_exact(Arc::new(source), Arc::new(target), CostOrder::Two)?;
    let r = check_cyclic_monotone(&support_pairs(&coupling), p)?;
    let checks = vec![Check::new(
        "cyclic-monotone",
        r.monotone,
        format!(
            "worst cycle sum {:.3e} over {} cycles{}",
            r.worst_cycle_sum,
            r.cycles_tested,
            if r.exhaustive { " (all)" } else { " (sampled)" }
        ),
    )];
    let mut table = Vec::new();
    coupling.write_csv(&mut table)?;
    Ok((
        json!({ "cost": coupling.cost(), "monotonicity": r }),
        checks,
        vec![("coupling.csv".into(), table)],
    ))
}

fn entropy(c: &ExperimentConfig, p: &EntropyTransportParams) -> Result<Parts> {
    let k = DensityField::parse(&p.source, c.dim)?;
    let l = density(c)?;
    let r = apply_fixture(c, entropy_transport_check(&k, &l, c.n, c.seed)?);
    let checks = vec![Check::inequality("entropy-transport", &r)];
    let tables = vec![("inequalities.csv".into(), inequalities_csv(&[("entropy-transport", &r)])?)];
    Ok((json!({ "report": r }), checks, tables))
}

fn submartingale(c: &ExperimentConfig, p: &SubmartingaleParams) -> Result<Parts> {
    require_no_fixture(c)?;
    let phi = ConditionedPotential::parse(&p.potential, c.dim)?;
    let levels: Vec<usize> = if p.levels.is_empty() { (0..=c.dim).collect() } else { p.levels.clone() };
    let cloud = sample_standard(&GaussianSpace::new(c.dim)?, c.n, c.seed)?;
    let tr = submartingale_trace(&phi, &levels, &cloud, p.tol)?;
    let checks = vec![Check::new(
        "submartingale",
        tr.submartingale,
        format!("min conditional gap {:.3e}", tr.min_gaps.iter().copied().fold(f64::INFINITY, f64::min)),
    )];
    let table = csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["from", "to", "min_gap", "mean_increment", "stderr"])?;
        for (k, win) in tr.levels.windows(2).enumerate() {
            w.write_record(&[
                win[0].to_string(),
                win[1].to_string(),
                format!("{:e}", tr.min_gaps[k]),
                format!("{:e}", tr.mean_increments[k].value),
                format!("{:e}", tr.mean_increments[k].stderr),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    let result = json!({
        "potential": phi,
        "levels": tr.levels,
        "min_gaps": tr.min_gaps,
        "mean_increments": tr.mean_increments,
        "tol": tr.tol,
        "submartingale": tr.submartingale,
    });
    Ok((result, checks, vec![("submartingale.csv".into(), table)]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> ExperimentConfig {
        ExperimentConfig::from_json(text).unwrap()
    }

    #[test]
    fn unit_talagrand_is_equality() {
        let o = execute(&cfg(r#"{"kind": "talagrand", "dim": 2, "n": 256}"#)).unwrap();
        assert!(o.pass());
        assert_eq!(o.payload["result"]["report"]["verdict"], "holds-with-equality");
        assert_eq!(o.payload["citation"], "talagrand-transport-entropy");
        assert_eq!(o.payload["config"]["params"]["batches"], 16);
    }

    #[test]
    fn swapped_sides_fail() {
        let o = execute(&cfg(
            r#"{"kind": "talagrand", "preset": "scale:2", "dim": 1, "n": 2048, "fixture": "swap-sides"}"#,
        ))
        .unwrap();
        assert!(!o.pass());
    }

    #[test]
    fn fixture_rejected_for_non_inequalities() {
        let e = execute(&cfg(r#"{"kind": "jacobian", "dim": 1, "n": 8, "fixture": "swap-sides"}"#));
        assert!(matches!(e, Err(Error::Config(_))));
    }

    #[test]
    fn jacobian_scale_is_exact() {
        let o = execute(&cfg(r#"{"kind": "jacobian", "preset": "scale:2", "dim": 1, "n": 512}"#)).unwrap();
        assert!(o.pass(), "{:?}", o.checks);
        assert_eq!(o.tables[0].0, "jacobian.csv");
    }

    #[test]
    fn run_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = cfg(r#"{"kind": "submartingale", "dim": 2, "n": 512}"#);
        c.output_dir = Some(dir.path().to_path_buf());
        let rec = run(&c).unwrap();
        assert!(rec.pass);
        assert_eq!(rec.output_dir, dir.path().join(&rec.config_hash));
        for f in ["config.json", "report.json", "metadata.json", "submartingale.csv"] {
            assert!(rec.output_dir.join(f).is_file(), "{f}");
        }
        let first = fs::read(rec.output_dir.join("report.json")).unwrap();
        run(&c).unwrap();
        assert_eq!(first, fs::read(rec.output_dir.join("report.json")).unwrap());
    }
}
