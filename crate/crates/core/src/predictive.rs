//! Per-time-step predictive distributions.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::fmt_f64;
use crate::error::{Error, Result};

/// Gaussian predictive mean and variance per time step.
///
/// `offset` is the index in the source series of the first prediction
/// (non-zero for lagged models, which skip their warm-up samples).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveSeries {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub offset: usize,
}

impl PredictiveSeries {
    pub fn new(mean: Vec<f64>, variance: Vec<f64>, offset: usize) -> Result<Self> {
        if mean.len() != variance.len() {
            return Err(Error::shape(mean.len(), variance.len()));
        }
        if let Some(i) = variance.iter().position(|v| !(*v >= 0.0)) {
            return Err(Error::Domain(format!(
                "negative or NaN predictive variance {} at step {i}",
                variance[i]
            )));
        }
        Ok(Self {
            mean,
            variance,
            offset,
        })
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn std(&self) -> Vec<f64> {
        self.variance.iter().map(|v| v.sqrt()).collect()
    }

    /// Drops leading steps so the series starts at source index `offset`.
    pub fn aligned_to(&self, offset: usize) -> Result<Self> {
        if offset < self.offset || offset - self.offset > self.len() {
            return Err(Error::Bounds(format!(
                "cannot align series starting at {} to {offset}",
                self.offset
            )));
        }
        let skip = offset - self.offset;
        Ok(Self {
            mean: self.mean[skip..].to_vec(),
            variance: self.variance[skip..].to_vec(),
            offset,
        })
    }

    /// Mean width of the ±`k`σ interval.
    pub fn mean_interval_width(&self, k: f64) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        2.0 * k * self.variance.iter().map(|v| v.sqrt()).sum::<f64>() / self.len() as f64
    }

    /// CSV with columns `t,mean,variance`; `t` is indexed from `offset`.
    pub fn write_csv(&self, path: impl AsRef<Path>, t: &[f64]) -> Result<()> {
        let path = path.as_ref();
        let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(&mut file, t)
            .map_err(|e| Error::io(path, e))
    }

    pub fn write_csv_to<W: Write>(&self, w: &mut W, t: &[f64]) -> std::io::Result<()> {
        writeln!(w, "t,mean,variance")?;
        for i in 0..self.len() {
            let ti = t.get(self.offset + i).copied().unwrap_or(f64::NAN);
            writeln!(
                w,
                "{},{},{}",
                fmt_f64(ti),
                fmt_f64(self.mean[i]),
                fmt_f64(self.variance[i])
            )?;
        }
        Ok(())
    }
}

/// Monte-Carlo free-run prediction: `n_samples` sampled trajectories plus
/// their per-step sample mean and variance.
#[derive(Debug, Clone, PartialEq)]
pub struct McPredictiveSeries {
    /// `paths[k][i]` is trajectory `k` at step `i`.
    pub paths: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub n_samples: usize,
    pub offset: usize,
}

impl McPredictiveSeries {
    /// Computes per-step statistics from the paths (population variance).
    pub fn from_paths(paths: Vec<Vec<f64>>, offset: usize) -> Result<Self> {
        let n_samples = paths.len();
        if n_samples == 0 {
            return Err(Error::Domain("at least one path is required".into()));
        }
        let len = paths[0].len();
        if paths.iter().any(|p| p.len() != len) {
            return Err(Error::shape(len, "ragged paths"));
        }
        let (mean, variance) = path_moments(&paths, len);
        Ok(Self {
            paths,
            mean,
            variance,
            n_samples,
            offset,
        })
    }

    /// Moments by the law of total variance: `mean` averages the per-path
    /// conditional means and `variance` adds their spread to the average
    /// conditional variance. `paths` holds the sampled trajectories.
    pub fn from_conditional_moments(
        paths: Vec<Vec<f64>>,
        conditional_mean: &[Vec<f64>],
        conditional_variance: &[Vec<f64>],
        offset: usize,
    ) -> Result<Self> {
        let n_samples = paths.len();
        if n_samples == 0 {
            return Err(Error::Domain("at least one path is required".into()));
        }
        if conditional_mean.len() != n_samples || conditional_variance.len() != n_samples {
            return Err(Error::shape(n_samples, "conditional moments per path"));
        }
        let len = paths[0].len();
        if paths
            .iter()
            .chain(conditional_mean)
            .chain(conditional_variance)
            .any(|p| p.len() != len)
        {
            return Err(Error::shape(len, "ragged paths"));
        }
        let (mean, mut variance) = path_moments(conditional_mean, len);
        for (s, v) in variance.iter_mut().zip(shifted_mean(conditional_variance, len)) {
            *s += v;
        }
        Ok(Self {
            paths,
            mean,
            variance,
            n_samples,
            offset,
        })
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn summary(&self) -> PredictiveSeries {
        PredictiveSeries {
            mean: self.mean.clone(),
            variance: self.variance.clone(),
            offset: self.offset,
        }
    }

    /// Drops leading steps so the series starts at source index `offset`.
    pub fn aligned_to(&self, offset: usize) -> Result<Self> {
        if offset < self.offset || offset - self.offset > self.len() {
            return Err(Error::Bounds(format!(
                "cannot align series starting at {} to {offset}",
                self.offset
            )));
        }
        let skip = offset - self.offset;
        Ok(Self {
            paths: self.paths.iter().map(|p| p[skip..].to_vec()).collect(),
            mean: self.mean[skip..].to_vec(),
            variance: self.variance[skip..].to_vec(),
            n_samples: self.n_samples,
            offset,
        })
    }

    /// CSV with `t,mean,variance` and optionally one column per path.
    pub fn write_csv(&self, path: impl AsRef<Path>, t: &[f64], with_paths: bool) -> Result<()> {
        let path = path.as_ref();
        let write = || -> std::io::Result<()> {
            let mut w = std::io::BufWriter::new(File::create(path)?);
            write!(w, "t,mean,variance")?;
            if with_paths {
                for k in 0..self.n_samples {
                    write!(w, ",path_{k}")?;
                }
            }
            writeln!(w)?;
            for i in 0..self.len() {
                let ti = t.get(self.offset + i).copied().unwrap_or(f64::NAN);
                write!(
                    w,
                    "{},{},{}",
                    fmt_f64(ti),
                    fmt_f64(self.mean[i]),
                    fmt_f64(self.variance[i])
                )?;
                if with_paths {
                    for p in &self.paths {
                        write!(w, ",{}", fmt_f64(p[i]))?;
                    }
                }
                writeln!(w)?;
            }
            w.flush()
        };
        write().map_err(|e| Error::io(path, e))
    }
}

/// Column means taken about the first row, so identical rows average to
/// exactly that row.
fn shifted_mean(rows: &[Vec<f64>], len: usize) -> Vec<f64> {
    let n = rows.len() as f64;
    let first = &rows[0];
    let mut acc = vec![0.0; len];
    for r in &rows[1..] {
        for ((a, v), f) in acc.iter_mut().zip(r).zip(first) {
            *a += v - f;
        }
    }
    first.iter().zip(&acc).map(|(f, a)| f + a / n).collect()
}

fn path_moments(paths: &[Vec<f64>], len: usize) -> (Vec<f64>, Vec<f64>) {
    let n = paths.len() as f64;
    let mean = shifted_mean(paths, len);
    let mut var = vec![0.0; len];
    for p in paths {
        for ((s, v), m) in var.iter_mut().zip(p).zip(&mean) {
            let d = v - m;
            *s += d * d;
        }
    }
    var.iter_mut().for_each(|s| *s /= n);
    (mean, var)
}
