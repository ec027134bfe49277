use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::pairwise_sum;

/// Where the points of a cloud came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    /// i.i.d. draws from the reference Gaussian.
    Gaussian,
    /// Draws from `L . mu` by rejection, or Gaussian points reweighted by `L`.
    Density,
    /// Gaussian draws pushed through a transport map.
    Pushforward,
}

/// Weighted finite point set in `R^d`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleCloud {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    seed: u64,
    provenance: Provenance,
}

const WEIGHT_TOL: f64 = 1e-12;

impl SampleCloud {
    /// Build a cloud from row-major `points`. `weights` of `None` means uniform.
    /// Weights are renormalized when their sum is off by more than rounding.
    pub fn new(
        dim: usize,
        points: Vec<f64>,
        weights: Option<Vec<f64>>,
        seed: u64,
        provenance: Provenance,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("cloud dimension must be positive".into()));
        }
        if points.is_empty() || points.len() % dim != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} coordinates do not form rows of length {dim}",
                points.len()
            )));
        }
        let n = points.len() / dim;
        let weights = match weights {
            None => vec![1.0 / n as f64; n],
            Some(w) => {
                if w.len() != n {
                    return Err(Error::InvalidArgument(format!(
                        "{} weights for {n} points",
                        w.len()
                    )));
                }
                if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
                    return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
                }
                let total = pairwise_sum(&w);
                if total <= 0.0 {
                    return Err(Error::InvalidArgument("weights sum to zero".into()));
                }
                if (total - 1.0).abs() > WEIGHT_TOL {
                    w.into_iter().map(|x| x / total).collect()
                } else {
                    w
                }
            }
        };
        if points.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("points must be finite".into()));
        }
        Ok(SampleCloud {
            dim,
            points,
            weights,
            seed,
            provenance,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.points.chunks_exact(self.dim)
    }

    /// True when every weight is `1/n` to rounding.
    pub fn is_uniform(&self) -> bool {
        let u = 1.0 / self.len() as f64;
        self.weights.iter().all(|w| (w - u).abs() <= 1e-15 + 1e-12 * u)
    }

    /// Keep coordinates `coords` (in the given order).
    pub fn project(&self, coords: &[usize]) -> Result<SampleCloud> {
        if coords.is_empty() || coords.iter().any(|&c| c >= self.dim) {
            return Err(Error::InvalidArgument(format!(
                "projection {coords:?} invalid for dimension {}",
                self.dim
            )));
        }
        let mut points = Vec::with_capacity(self.len() * coords.len());
        for row in self.rows() {
            points.extend(coords.iter().map(|&c| row[c]));
        }
        Ok(SampleCloud {
            dim: coords.len(),
            points,
            weights: self.weights.clone(),
            seed: self.seed,
            provenance: self.provenance,
        })
    }

    /// Rows `range`, with their weights renormalized.
    pub fn rows_range(&self, range: std::ops::Range<usize>) -> Result<SampleCloud> {
        if range.start >= range.end || range.end > self.len() {
            return Err(Error::InvalidArgument(format!(
                "row range {range:?} invalid for {} points",
                self.len()
            )));
        }
        SampleCloud::new(
            self.dim,
            self.points[range.start * self.dim..range.end * self.dim].to_vec(),
            Some(self.weights[range].to_vec()),
            self.seed,
            self.provenance,
        )
    }

    /// Keep the first `k` coordinates.
    pub fn truncate(&self, k: usize) -> Result<SampleCloud> {
        let coords: Vec<usize> = (0..k).collect();
        self.project(&coords)
    }

    /// Apply `map` to every point.
    pub fn map_points(
        &self,
        out_dim: usize,
        provenance: Provenance,
        map: impl Fn(&[f64]) -> Vec<f64>,
    ) -> Result<SampleCloud> {
        let mut points = Vec::with_capacity(self.len() * out_dim);
        for row in self.rows() {
            let y = map(row);
            if y.len() != out_dim {
                return Err(Error::DimensionMismatch {
                    expected: out_dim,
                    got: y.len(),
                });
            }
            points.extend(y);
        }
        SampleCloud::new(out_dim, points, Some(self.weights.clone()), self.seed, provenance)
    }

    /// Flat binary layout: `dim`, `n`, `seed` as little-endian `u64`, then the
    /// points as row-major little-endian `f64`. Weights are not stored; a cloud
    /// read back is uniform.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.dim as u64).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        for x in &self.points {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R, provenance: Provenance) -> Result<SampleCloud> {
        let mut word = [0u8; 8];
        r.read_exact(&mut word)?;
        let dim = u64::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let n = u64::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let seed = u64::from_le_bytes(word);
        let count = dim
            .checked_mul(n)
            .ok_or_else(|| Error::InvalidArgument("header overflows".into()))?;
        let mut points = Vec::with_capacity(count);
        for _ in 0..count {
            r.read_exact(&mut word)?;
            points.push(f64::from_le_bytes(word));
        }
        SampleCloud::new(dim, points, None, seed, provenance)
    }

    /// CSV with header `x1,...,xd,weight`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=self.dim).map(|k| format!("x{k}")).collect();
        header.push("weight".into());
        out.write_record(&header)?;
        for (row, w) in self.rows().zip(&self.weights) {
            let mut rec: Vec<String> = row.iter().map(|x| format!("{x:e}")).collect();
            rec.push(format!("{w:e}"));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, seed: u64, provenance: Provenance) -> Result<SampleCloud> {
        let mut rdr = csv::Reader::from_reader(r);
        let width = rdr.headers()?.len();
        if width < 2 {
            return Err(Error::InvalidArgument("CSV needs coordinates and a weight column".into()));
        }
        let dim = width - 1;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            for (k, field) in rec.iter().enumerate() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad number `{field}`")))?;
                if k < dim {
                    points.push(v);
                } else {
                    weights.push(v);
                }
            }
        }
        SampleCloud::new(dim, points, Some(weights), seed, provenance)
    }
}
