//! GP-NARX: a Gaussian process over lag-embedded inputs, with one-step-ahead,
//! free-run (MPO) and Monte-Carlo free-run prediction, trained on the MPO
//! negative log predictive likelihood.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{build_narx_design, Channel, DesignMatrix, LagSpec, NarxSeries, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::gp::{train_static_gp_with, GpHyperparams, GpModel, PredictScratch, Standardization};
use crate::metrics::nmse;
use crate::predictive::{McPredictiveSeries, PredictiveSeries};
use crate::qpso::{qpso_minimize, OptimResult, QpsoConfig};

/// How the black-box inputs and target relate to the white-box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExogenousTransform {
    /// `U`, `Udot` in, force out.
    Raw,
    /// `U`, `Udot`, Morison force in, force out.
    MorisonAugmented,
    /// `U`, `Udot` in, Morison residual out.
    ResidualTarget,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpNarxModel {
    pub gp: GpModel,
    pub spec: LagSpec,
    pub target_label: String,
    pub exogenous_transform: ExogenousTransform,
}

impl GpNarxModel {
    /// Fits the GP on the embedding of `series` with fixed hyperparameters;
    /// the standardization is learned from the embedding. An empty series
    /// gives a prior-only model.
    pub fn fit(series: &NarxSeries, spec: LagSpec, hyper: GpHyperparams, transform: ExogenousTransform) -> Result<Self> {
        let design = build_narx_design(series, spec)?;
        let std = if design.n_rows() == 0 {
            Standardization::identity(design.dim())
        } else {
            standardization_for(&design, transform)
        };
        let gp = GpModel::fit_with_standardization(&design.rows, &design.targets, hyper, std)?;
        Ok(Self {
            gp,
            spec,
            target_label: series.output_label.clone(),
            exogenous_transform: transform,
        })
    }

    /// Model without training data: unit signal variance and length scales in
    /// raw units, zero prior mean, noise variance `sigma_n_sq`.
    pub fn prior_only(
        n_exogenous: usize,
        spec: LagSpec,
        sigma_n_sq: f64,
        target_label: impl Into<String>,
        transform: ExogenousTransform,
    ) -> Result<Self> {
        let d = spec.design_dim(n_exogenous);
        let gp = GpModel::prior_only(
            GpHyperparams::isotropic(d, 1.0, sigma_n_sq),
            Standardization::identity(d),
        )?;
        Ok(Self {
            gp,
            spec,
            target_label: target_label.into(),
            exogenous_transform: transform,
        })
    }

    /// Exogenous channels the model expects.
    pub fn n_exogenous(&self) -> usize {
        (self.gp.dim() - self.spec.ly) / (self.spec.lu + 1)
    }

    fn check(&self, series: &NarxSeries) -> Result<()> {
        let d = self.spec.design_dim(series.n_exogenous());
        if d != self.gp.dim() {
            return Err(Error::shape(
                format!("{} inputs for lags {}", self.gp.dim(), self.spec),
                format!("{d} from {} exogenous channels", series.n_exogenous()),
            ));
        }
        if series.exogenous.iter().any(|c| c.len() != series.len()) {
            return Err(Error::shape(series.len(), "ragged exogenous channels"));
        }
        if series.len() <= self.spec.max_lag() {
            return Err(Error::Bounds(format!(
                "series of length {} too short for lags {}",
                series.len(),
                self.spec
            )));
        }
        Ok(())
    }
}

/// Residual targets keep a zero origin so far from the data the black-box
/// reverts to a zero residual.
pub fn standardization_for(design: &DesignMatrix, transform: ExogenousTransform) -> Standardization {
    match transform {
        ExogenousTransform::ResidualTarget => Standardization::fit_zero_mean(&design.rows, &design.targets),
        _ => Standardization::fit(&design.rows, &design.targets),
    }
}

fn raw_series(model: &GpNarxModel, ds: &TimeSeriesDataset) -> Result<NarxSeries> {
    if model.exogenous_transform != ExogenousTransform::Raw {
        return Err(Error::Config(format!(
            "{:?} model needs white-box inputs; predict through the greybox module",
            model.exogenous_transform
        )));
    }
    Ok(NarxSeries::from_dataset(ds, Channel::F))
}

/// One-step-ahead prediction: lagged outputs are measured values.
pub fn osa_predict_series(model: &GpNarxModel, series: &NarxSeries) -> Result<PredictiveSeries> {
    model.check(series)?;
    let lag = model.spec.max_lag();
    let d = model.gp.dim();
    let mut row = vec![0.0; d];
    let mut scratch = PredictScratch::default();
    let mut mean = Vec::with_capacity(series.len() - lag);
    let mut var = Vec::with_capacity(series.len() - lag);
    for t in lag..series.len() {
        series.fill_row(model.spec, t, &series.output, &mut row);
        let (m, v) = model.gp.predict_point(&row, true, &mut scratch);
        mean.push(m);
        var.push(v);
    }
    PredictiveSeries::new(mean, var, lag)
}

/// Runs the feedback loop; `feedback(mean, var)` returns the value fed back
/// as the next lagged output. Returns fed-back values, conditional means and
/// variances from the first post-warm-up step.
fn free_run(
    model: &GpNarxModel,
    series: &NarxSeries,
    mut feedback: impl FnMut(f64, f64) -> f64,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let lag = model.spec.max_lag();
    let n = series.len();
    let mut row = vec![0.0; model.gp.dim()];
    let mut scratch = PredictScratch::default();
    let mut fed = series.output[..lag].to_vec();
    fed.resize(n, 0.0);
    let mut mean = Vec::with_capacity(n - lag);
    let mut var = Vec::with_capacity(n - lag);
    for t in lag..n {
        series.fill_row(model.spec, t, &fed, &mut row);
        let (m, v) = model.gp.predict_point(&row, true, &mut scratch);
        fed[t] = feedback(m, v);
        mean.push(m);
        var.push(v);
    }
    fed.drain(..lag);
    (fed, mean, var)
}

/// Free-run prediction feeding back predictive means; warm-started from
/// the first `max_lag` measured outputs.
pub fn mpo_predict_series(model: &GpNarxModel, series: &NarxSeries) -> Result<PredictiveSeries> {
    model.check(series)?;
    let (_, mean, var) = free_run(model, series, |m, _| m);
    PredictiveSeries::new(mean, var, model.spec.max_lag())
}

/// Monte-Carlo free run: every path feeds back a draw from its own per-step
/// predictive Gaussian. Paths use independent streams of `seed` and are
/// reduced in path order. `paths` holds the drawn trajectories; the mean and
/// variance combine the per-path conditional moments (law of total
/// variance).
pub fn mc_mpo_predict_series(
    model: &GpNarxModel,
    series: &NarxSeries,
    n_samples: usize,
    seed: u64,
) -> Result<McPredictiveSeries> {
    model.check(series)?;
    if n_samples == 0 {
        return Err(Error::Config("n_samples must be ≥ 1".into()));
    }
    let runs: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..n_samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            free_run(model, series, |m, v| {
                let z: f64 = StandardNormal.sample(&mut rng);
                m + v.sqrt() * z
            })
        })
        .collect();
    let mut paths = Vec::with_capacity(n_samples);
    let mut means = Vec::with_capacity(n_samples);
    let mut vars = Vec::with_capacity(n_samples);
    for (p, m, v) in runs {
        paths.push(p);
        means.push(m);
        vars.push(v);
    }
    McPredictiveSeries::from_conditional_moments(paths, &means, &vars, model.spec.max_lag())
}

pub fn osa_predict(model: &GpNarxModel, ds: &TimeSeriesDataset) -> Result<PredictiveSeries> {
    osa_predict_series(model, &raw_series(model, ds)?)
}

pub fn mpo_predict(model: &GpNarxModel, ds: &TimeSeriesDataset) -> Result<PredictiveSeries> {
    mpo_predict_series(model, &raw_series(model, ds)?)
}

pub fn mc_mpo_predict(model: &GpNarxModel, ds: &TimeSeriesDataset, n_samples: usize, seed: u64) -> Result<McPredictiveSeries> {
    mc_mpo_predict_series(model, &raw_series(model, ds)?, n_samples, seed)
}

/// `½Σ[(y−E)²/V + ln V] + (n/2) ln 2π` for independent Gaussian predictions.
pub fn nlpl(y: &[f64], mean: &[f64], var: &[f64]) -> Result<f64> {
    if mean.len() != y.len() || var.len() != y.len() {
        return Err(Error::shape(y.len(), format!("{} means, {} variances", mean.len(), var.len())));
    }
    let mut s = 0.0;
    for i in 0..y.len() {
        if !(var[i] > 0.0) {
            return Err(Error::Domain(format!("predictive variance {} at step {i}", var[i])));
        }
        s += (y[i] - mean[i]).powi(2) / var[i] + var[i].ln();
    }
    Ok(0.5 * s + 0.5 * y.len() as f64 * (2.0 * PI).ln())
}

fn mpo_nlpl_design(
    design: &DesignMatrix,
    std: &Standardization,
    hyper: GpHyperparams,
    val: &NarxSeries,
    spec: LagSpec,
    transform: ExogenousTransform,
    label: &str,
) -> Result<f64> {
    let gp = GpModel::fit_with_standardization(&design.rows, &design.targets, hyper, std.clone())?;
    let model = GpNarxModel {
        gp,
        spec,
        target_label: label.to_string(),
        exogenous_transform: transform,
    };
    let pred = mpo_predict_series(&model, val)?;
    nlpl(&val.output[spec.max_lag()..], &pred.mean, &pred.variance)
}

fn training_design(
    train: &NarxSeries,
    val: &NarxSeries,
    spec: LagSpec,
    transform: ExogenousTransform,
) -> Result<(DesignMatrix, Standardization)> {
    if train.n_exogenous() != val.n_exogenous() {
        return Err(Error::shape(train.n_exogenous(), val.n_exogenous()));
    }
    for (name, s) in [("training", train), ("validation", val)] {
        if s.len() <= spec.max_lag() {
            return Err(Error::Bounds(format!(
                "{name} series of length {} too short for lags {spec}",
                s.len()
            )));
        }
    }
    let design = build_narx_design(train, spec)?;
    let std = standardization_for(&design, transform);
    Ok((design, std))
}

/// MPO negative log predictive likelihood of `val` under a GP fitted on the
/// embedding of `train` with `hyper` (standardization learned from `train`).
pub fn mpo_nlpl_series(hyper: &GpHyperparams, train: &NarxSeries, val: &NarxSeries, spec: LagSpec) -> Result<f64> {
    let (design, std) = training_design(train, val, spec, ExogenousTransform::Raw)?;
    mpo_nlpl_design(&design, &std, hyper.clone(), val, spec, ExogenousTransform::Raw, &train.output_label)
}

pub fn mpo_nlpl(hyper: &GpHyperparams, train: &TimeSeriesDataset, val: &TimeSeriesDataset, spec: LagSpec) -> Result<f64> {
    mpo_nlpl_series(
        hyper,
        &NarxSeries::from_dataset(train, Channel::F),
        &NarxSeries::from_dataset(val, Channel::F),
        spec,
    )
}

fn check_bounds(cfg: &QpsoConfig, d: usize) -> Result<()> {
    if cfg.bounds.len() != d + 2 {
        return Err(Error::Config(format!(
            "optimizer has {} bounds, a {d}-input GP needs {}",
            cfg.bounds.len(),
            d + 2
        )));
    }
    Ok(())
}

/// Minimizes the MPO-NLPL of `val` over log-hyperparameters with QPSO and
/// refits at the optimum.
pub fn train_gpnarx_series(
    train: &NarxSeries,
    val: &NarxSeries,
    spec: LagSpec,
    cfg: &QpsoConfig,
    transform: ExogenousTransform,
) -> Result<(GpNarxModel, OptimResult)> {
    let (design, std) = training_design(train, val, spec, transform)?;
    check_bounds(cfg, design.dim())?;
    let label = train.output_label.as_str();
    let cost = |theta: &[f64]| -> f64 {
        GpHyperparams::from_log_vector(theta)
            .and_then(|h| mpo_nlpl_design(&design, &std, h, val, spec, transform, label))
            .unwrap_or(f64::INFINITY)
    };
    let result = qpso_minimize(cost, cfg)?;
    let hyper = GpHyperparams::from_log_vector(&result.best_position)?;
    let gp = GpModel::fit_with_standardization(&design.rows, &design.targets, hyper, std)?;
    Ok((
        GpNarxModel {
            gp,
            spec,
            target_label: label.to_string(),
            exogenous_transform: transform,
        },
        result,
    ))
}

/// Same model class trained on the NLML of the training embedding instead
/// (the validation set is not used).
pub fn train_gpnarx_nlml_series(
    train: &NarxSeries,
    spec: LagSpec,
    cfg: &QpsoConfig,
    transform: ExogenousTransform,
) -> Result<(GpNarxModel, OptimResult)> {
    if train.len() <= spec.max_lag() {
        return Err(Error::Bounds(format!(
            "training series of length {} too short for lags {spec}",
            train.len()
        )));
    }
    let design = build_narx_design(train, spec)?;
    check_bounds(cfg, design.dim())?;
    let std = standardization_for(&design, transform);
    let (gp, result) = train_static_gp_with(&design.rows, &design.targets, cfg, std)?;
    Ok((
        GpNarxModel {
            gp,
            spec,
            target_label: train.output_label.clone(),
            exogenous_transform: transform,
        },
        result,
    ))
}

/// GP-NARX on force with `U`, `Udot` inputs, trained on the MPO-NLPL.
pub fn train_gpnarx(
    train: &TimeSeriesDataset,
    val: &TimeSeriesDataset,
    spec: LagSpec,
    cfg: &QpsoConfig,
) -> Result<(GpNarxModel, OptimResult)> {
    train_gpnarx_series(
        &NarxSeries::from_dataset(train, Channel::F),
        &NarxSeries::from_dataset(val, Channel::F),
        spec,
        cfg,
        ExogenousTransform::Raw,
    )
}

pub fn train_gpnarx_nlml(train: &TimeSeriesDataset, spec: LagSpec, cfg: &QpsoConfig) -> Result<(GpNarxModel, OptimResult)> {
    train_gpnarx_nlml_series(&NarxSeries::from_dataset(train, Channel::F), spec, cfg, ExogenousTransform::Raw)
}

/// Outcome of [`mc_mpo_until_converged`].
#[derive(Debug, Clone)]
pub struct McConvergence {
    pub series: McPredictiveSeries,
    pub n_samples: usize,
    /// |ΔNMSE| (percentage points) and |Δ mean std| between the last two
    /// sample counts.
    pub nmse_change: f64,
    pub std_change: f64,
    pub converged: bool,
}

fn mean_std(mc: &McPredictiveSeries) -> f64 {
    mc.variance.iter().map(|v| v.sqrt()).sum::<f64>() / mc.len() as f64
}

/// Reruns MC-MPO at doubling sample counts from `n_start` until the NMSE of
/// the MC mean and the mean predictive standard deviation change by less than
/// `nmse_tol` and `std_tol`, or `n_max` is reached.
pub fn mc_mpo_until_converged(
    model: &GpNarxModel,
    series: &NarxSeries,
    n_start: usize,
    n_max: usize,
    seed: u64,
    nmse_tol: f64,
    std_tol: f64,
) -> Result<McConvergence> {
    if n_start == 0 || n_max < n_start {
        return Err(Error::Config(format!("invalid sample range {n_start}..{n_max}")));
    }
    let measured = &series.output[model.spec.max_lag()..];
    let mut n = n_start;
    let mut prev = mc_mpo_predict_series(model, series, n, seed)?;
    let mut prev_nmse = nmse(measured, &prev.mean)?;
    loop {
        let next_n = (2 * n).min(n_max);
        if next_n == n {
            return Ok(McConvergence {
                series: prev,
                n_samples: n,
                nmse_change: f64::INFINITY,
                std_change: f64::INFINITY,
                converged: false,
            });
        }
        let next = mc_mpo_predict_series(model, series, next_n, seed)?;
        let next_nmse = nmse(measured, &next.mean)?;
        let nmse_change = (next_nmse - prev_nmse).abs();
        let std_change = (mean_std(&next) - mean_std(&prev)).abs();
        let converged = nmse_change < nmse_tol && std_change < std_tol;
        if converged || next_n == n_max {
            return Ok(McConvergence {
                series: next,
                n_samples: next_n,
                nmse_change,
                std_change,
                converged,
            });
        }
        n = next_n;
        prev = next;
        prev_nmse = next_nmse;
    }
}
