//! Linear ARX models and AICc/BIC lag selection.
//!
//! The ARX is a cheap proxy for the GP-NARX lag search: its exogenous
//! regressors are `U|U|` and `Udot` at lags `0..=l_u` (interleaved, one drag
//! and one inertia coefficient per lag) and its autoregressive regressors are
//! the output at lags `1..=l_y`.

use std::f64::consts::PI;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{LagSpec, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::predictive::PredictiveSeries;

/// Singular values below this fraction of the largest mark a rank-deficient
/// design.
const RANK_TOL: f64 = 1e-12;

/// Burnham–Anderson threshold for "substantial support".
pub const SUBSTANTIAL_SUPPORT_DELTA: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PredictionMode {
    /// One step ahead: lagged outputs are measured values.
    Osa,
    /// Model predicted output: lagged outputs are the model's own predictions.
    Mpo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArxModel {
    /// Exogenous coefficients `[cd'_0, cm'_0, cd'_1, cm'_1, ..]`; empty for a
    /// pure AR model.
    pub alpha: Vec<f64>,
    /// Autoregressive coefficients for lags `1..=l_y`.
    pub beta: Vec<f64>,
    pub spec: LagSpec,
    /// Training SSR / n_effective.
    pub residual_variance: f64,
}

impl ArxModel {
    pub fn is_autoregressive_only(&self) -> bool {
        self.alpha.is_empty()
    }

    /// Number of free parameters including the residual variance.
    pub fn n_params(&self) -> usize {
        self.alpha.len() + self.beta.len() + 1
    }
}

struct ArxSignals<'a> {
    drag: Vec<f64>,
    inertia: &'a [f64],
    y: &'a [f64],
    exogenous: bool,
}

impl<'a> ArxSignals<'a> {
    fn from_dataset(ds: &'a TimeSeriesDataset, exogenous: bool) -> Self {
        Self {
            drag: ds.u().iter().map(|u| u * u.abs()).collect(),
            inertia: ds.udot(),
            y: ds.f(),
            exogenous,
        }
    }

    fn n_regressors(&self, spec: LagSpec) -> usize {
        if self.exogenous {
            2 * (spec.lu + 1) + spec.ly
        } else {
            spec.ly
        }
    }

    fn fill_row(&self, spec: LagSpec, t: usize, lagged: &[f64], row: &mut [f64]) {
        let mut k = 0;
        if self.exogenous {
            for lag in 0..=spec.lu {
                row[k] = self.drag[t - lag];
                row[k + 1] = self.inertia[t - lag];
                k += 2;
            }
        }
        for lag in 1..=spec.ly {
            row[k] = lagged[t - lag];
            k += 1;
        }
    }
}

fn lag_of(spec: LagSpec, exogenous: bool) -> usize {
    if exogenous {
        spec.max_lag()
    } else {
        spec.ly
    }
}

fn fit_signals(sig: &ArxSignals<'_>, spec: LagSpec) -> Result<ArxModel> {
    let n = sig.y.len();
    let lag = lag_of(spec, sig.exogenous);
    let p = sig.n_regressors(spec);
    if p == 0 {
        return Err(Error::Config("ARX model has no regressors".into()));
    }
    let n_eff = n.saturating_sub(lag);
    if n_eff < p {
        return Err(Error::Singular(format!(
            "{n_eff} effective rows cannot determine {p} parameters"
        )));
    }
    let mut x = DMatrix::zeros(n_eff, p);
    let mut row = vec![0.0; p];
    let mut target = DVector::zeros(n_eff);
    for (r, t) in (lag..n).enumerate() {
        sig.fill_row(spec, t, sig.y, &mut row);
        for c in 0..p {
            x[(r, c)] = row[c];
        }
        target[r] = sig.y[t];
    }
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin <= RANK_TOL * smax {
        return Err(Error::Singular(format!(
            "rank-deficient ARX design for {spec} (condition {:.3e})",
            smax / smin
        )));
    }
    let coef = svd
        .solve(&target, RANK_TOL * smax)
        .map_err(|e| Error::Singular(e.to_string()))?;
    let resid = &target - &x * &coef;
    let residual_variance = resid.norm_squared() / n_eff as f64;
    let coef: Vec<f64> = coef.iter().copied().collect();
    let n_alpha = if sig.exogenous { 2 * (spec.lu + 1) } else { 0 };
    Ok(ArxModel {
        alpha: coef[..n_alpha].to_vec(),
        beta: coef[n_alpha..].to_vec(),
        spec,
        residual_variance,
    })
}

/// Least-squares ARX fit on `ds` (force as output).
pub fn fit_arx(ds: &TimeSeriesDataset, spec: LagSpec) -> Result<ArxModel> {
    fit_signals(&ArxSignals::from_dataset(ds, true), spec)
}

/// Pure AR fit of the force series on its own `ly` lags.
pub fn fit_ar(ds: &TimeSeriesDataset, ly: usize) -> Result<ArxModel> {
    fit_signals(&ArxSignals::from_dataset(ds, false), LagSpec::new(0, ly))
}

fn predict_signals(model: &ArxModel, sig: &ArxSignals<'_>, mode: PredictionMode) -> Result<PredictiveSeries> {
    let n = sig.y.len();
    let spec = model.spec;
    let lag = lag_of(spec, sig.exogenous);
    if n <= lag {
        return Err(Error::Bounds(format!(
            "series of length {n} too short for lags {spec}"
        )));
    }
    let coef: Vec<f64> = model.alpha.iter().chain(&model.beta).copied().collect();
    let mut row = vec![0.0; coef.len()];
    // MPO feeds back its own predictions; the warm-up keeps measured values
    let mut fed = sig.y.to_vec();
    let mut mean = Vec::with_capacity(n - lag);
    for t in lag..n {
        let lagged = match mode {
            PredictionMode::Osa => sig.y,
            PredictionMode::Mpo => &fed,
        };
        sig.fill_row(spec, t, lagged, &mut row);
        let yhat: f64 = row.iter().zip(&coef).map(|(a, b)| a * b).sum();
        fed[t] = yhat;
        mean.push(yhat);
    }
    let variance = vec![model.residual_variance; mean.len()];
    PredictiveSeries::new(mean, variance, lag)
}

/// OSA or MPO prediction over `ds`, starting after the warm-up lags.
pub fn predict_arx(model: &ArxModel, ds: &TimeSeriesDataset, mode: PredictionMode) -> Result<PredictiveSeries> {
    let sig = ArxSignals::from_dataset(ds, !model.is_autoregressive_only());
    predict_signals(model, &sig, mode)
}

/// `2k − 2 logL`.
pub fn aic(k: usize, log_likelihood: f64) -> f64 {
    2.0 * k as f64 - 2.0 * log_likelihood
}

/// Small-sample corrected AIC; requires `n > k + 1`.
pub fn aicc(k: usize, n: f64, log_likelihood: f64) -> Result<f64> {
    let kf = k as f64;
    if !(n > kf + 1.0) {
        return Err(Error::Domain(format!(
            "AICc needs n > k + 1 (n = {n}, k = {k})"
        )));
    }
    Ok(aic(k, log_likelihood) + 2.0 * kf * (kf + 1.0) / (n - kf - 1.0))
}

/// `k ln n − 2 logL`.
pub fn bic(k: usize, n: f64, log_likelihood: f64) -> f64 {
    k as f64 * n.ln() - 2.0 * log_likelihood
}

/// Gaussian log-likelihood of residuals under variance `variance`.
pub fn gaussian_log_likelihood(residuals: &[f64], variance: f64) -> f64 {
    let n = residuals.len() as f64;
    let sse: f64 = residuals.iter().map(|r| r * r).sum();
    -0.5 * n * (2.0 * PI * variance).ln() - 0.5 * sse / variance
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LagMetric {
    AiccOsa,
    AiccMpo,
    BicOsa,
    BicMpo,
}

impl LagMetric {
    pub const ALL: [LagMetric; 4] = [
        LagMetric::AiccOsa,
        LagMetric::AiccMpo,
        LagMetric::BicOsa,
        LagMetric::BicMpo,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            LagMetric::AiccOsa => "delta_aicc_osa",
            LagMetric::AiccMpo => "delta_aicc_mpo",
            LagMetric::BicOsa => "delta_bic_osa",
            LagMetric::BicMpo => "delta_bic_mpo",
        }
    }
}

/// One grid cell of the lag search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagCell {
    pub spec: LagSpec,
    /// Raw criteria indexed by [`LagMetric::index`]; `None` when the cell failed.
    pub raw: Option<[f64; 4]>,
    pub delta: Option<[f64; 4]>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagSearchResult {
    pub cells: Vec<LagCell>,
    /// Best lags per metric, indexed by [`LagMetric::index`].
    pub best_per_metric: [LagSpec; 4],
    /// Cells with Δ ≤ 2 per metric.
    pub substantial_support: [Vec<LagSpec>; 4],
    /// Validation steps scored in every cell.
    pub n_scored: usize,
}

impl LagSearchResult {
    pub fn best(&self, metric: LagMetric) -> LagSpec {
        self.best_per_metric[metric.index()]
    }

    pub fn delta(&self, spec: LagSpec, metric: LagMetric) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.spec == spec)
            .and_then(|c| c.delta.map(|d| d[metric.index()]))
    }

    /// Long-format table `l_u,l_y,metric,delta` (failed cells have an empty
    /// delta).
    pub fn write_heatmap_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_heatmap_to(&mut f).map_err(|e| Error::io(path, e))
    }

    pub fn write_heatmap_to<W: Write + ?Sized>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "l_u,l_y,metric,delta")?;
        for metric in LagMetric::ALL {
            for c in &self.cells {
                match c.delta {
                    Some(d) => writeln!(
                        w,
                        "{},{},{},{:?}",
                        c.spec.lu,
                        c.spec.ly,
                        metric.name(),
                        d[metric.index()]
                    )?,
                    None => writeln!(w, "{},{},{},", c.spec.lu, c.spec.ly, metric.name())?,
                }
            }
        }
        Ok(())
    }
}

fn score_cell(
    train: &TimeSeriesDataset,
    val: &TimeSeriesDataset,
    spec: LagSpec,
    window_start: usize,
) -> Result<[f64; 4]> {
    let model = fit_arx(train, spec)?;
    let sigma_sq = model.residual_variance.max(f64::MIN_POSITIVE);
    let k = model.n_params();
    let measured = &val.f()[window_start..];
    let n = measured.len() as f64;
    let mut out = [0.0; 4];
    for (mode, aicc_m, bic_m) in [
        (PredictionMode::Osa, LagMetric::AiccOsa, LagMetric::BicOsa),
        (PredictionMode::Mpo, LagMetric::AiccMpo, LagMetric::BicMpo),
    ] {
        let pred = predict_arx(&model, val, mode)?.aligned_to(window_start)?;
        let resid: Vec<f64> = measured.iter().zip(&pred.mean).map(|(y, m)| y - m).collect();
        let ll = gaussian_log_likelihood(&resid, sigma_sq);
        if !ll.is_finite() {
            return Err(Error::Domain(format!("non-finite {mode:?} likelihood for {spec}")));
        }
        out[aicc_m.index()] = aicc(k, n, ll)?;
        out[bic_m.index()] = bic(k, n, ll);
    }
    Ok(out)
}

/// Fits an ARX for every `(l_u, l_y)` in `[0, max_lu] × [1, max_ly]` on
/// `train`, scores OSA and MPO likelihoods on `val` and reports Δ-criteria.
///
/// Every cell is scored on the same validation window (steps from
/// `max(max_lu, max_ly)` onward) so criteria are comparable across cells.
pub fn lag_search(
    train: &TimeSeriesDataset,
    val: &TimeSeriesDataset,
    max_lu: usize,
    max_ly: usize,
) -> Result<LagSearchResult> {
    if max_ly < 1 {
        return Err(Error::Config("max_ly must be ≥ 1".into()));
    }
    let window_start = max_lu.max(max_ly);
    if val.len() <= window_start + 1 {
        return Err(Error::Bounds(format!(
            "validation set of length {} too short for maximum lag {window_start}",
            val.len()
        )));
    }
    let specs: Vec<LagSpec> = (0..=max_lu)
        .flat_map(|lu| (1..=max_ly).map(move |ly| LagSpec::new(lu, ly)))
        .collect();
    let raw: Vec<Result<[f64; 4]>> = specs
        .par_iter()
        .map(|&spec| score_cell(train, val, spec, window_start))
        .collect();

    let mut minima = [f64::INFINITY; 4];
    for r in raw.iter().flatten() {
        for m in 0..4 {
            minima[m] = minima[m].min(r[m]);
        }
    }
    if minima.iter().any(|m| !m.is_finite()) {
        return Err(Error::Singular("every lag-search cell failed".into()));
    }

    let cells: Vec<LagCell> = specs
        .iter()
        .zip(raw)
        .map(|(&spec, r)| match r {
            Ok(v) => LagCell {
                spec,
                raw: Some(v),
                delta: Some(std::array::from_fn(|m| v[m] - minima[m])),
                error: None,
            },
            Err(e) => LagCell {
                spec,
                raw: None,
                delta: None,
                error: Some(e.to_string()),
            },
        })
        .collect();

    let mut best_per_metric = [LagSpec::new(0, 1); 4];
    let mut substantial_support: [Vec<LagSpec>; 4] = Default::default();
    for metric in LagMetric::ALL {
        let m = metric.index();
        let mut ok: Vec<(&LagCell, f64)> = cells
            .iter()
            .filter_map(|c| c.delta.map(|d| (c, d[m])))
            .collect();
        // parsimony breaks ties: fewest total lags, then fewest output lags
        ok.sort_by(|(a, da), (b, db)| {
            da.total_cmp(db)
                .then((a.spec.lu + a.spec.ly).cmp(&(b.spec.lu + b.spec.ly)))
                .then(a.spec.ly.cmp(&b.spec.ly))
        });
        best_per_metric[m] = ok[0].0.spec;
        substantial_support[m] = ok
            .iter()
            .filter(|(_, d)| *d <= SUBSTANTIAL_SUPPORT_DELTA)
            .map(|(c, _)| c.spec)
            .collect();
    }

    Ok(LagSearchResult {
        cells,
        best_per_metric,
        substantial_support,
        n_scored: val.len() - window_start,
    })
}
