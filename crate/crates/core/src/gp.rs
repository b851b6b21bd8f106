//! Exact Gaussian-process regression with an ARD squared-exponential kernel.
//!
//! Inputs are standardized per column and targets are centred and scaled
//! before fitting, so hyperparameters live in standardized units. Predictions
//! are mapped back to the original target units.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictive::PredictiveSeries;
use crate::qpso::{qpso_minimize, OptimResult, QpsoConfig};

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

/// ARD squared-exponential kernel hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpHyperparams {
    pub sigma_f_sq: f64,
    pub length_scales: Vec<f64>,
    pub sigma_n_sq: f64,
}

impl GpHyperparams {
    pub fn new(sigma_f_sq: f64, length_scales: Vec<f64>, sigma_n_sq: f64) -> Result<Self> {
        let h = Self {
            sigma_f_sq,
            length_scales,
            sigma_n_sq,
        };
        h.validate()?;
        Ok(h)
    }

    /// Unit signal variance and length scales with a small noise floor.
    pub fn isotropic(dim: usize, length_scale: f64, sigma_n_sq: f64) -> Self {
        Self {
            sigma_f_sq: 1.0,
            length_scales: vec![length_scale; dim],
            sigma_n_sq,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.sigma_f_sq > 0.0
            && self.sigma_f_sq.is_finite()
            && self.sigma_n_sq >= 0.0
            && self.sigma_n_sq.is_finite()
            && self.length_scales.iter().all(|l| *l > 0.0 && l.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid GP hyperparameters {self:?}")))
        }
    }

    pub fn dim(&self) -> usize {
        self.length_scales.len()
    }

    /// Log-space vector `[ln σ_f², ln l_1, .., ln l_d, ln σ_n²]`.
    pub fn to_log_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim() + 2);
        v.push(self.sigma_f_sq.ln());
        v.extend(self.length_scales.iter().map(|l| l.ln()));
        v.push(self.sigma_n_sq.ln());
        v
    }

    pub fn from_log_vector(theta: &[f64]) -> Result<Self> {
        if theta.len() < 2 {
            return Err(Error::shape("at least 2 log-hyperparameters", theta.len()));
        }
        let d = theta.len() - 2;
        Self::new(
            theta[0].exp(),
            theta[1..=d].iter().map(|v| v.exp()).collect(),
            theta[d + 1].exp(),
        )
    }

    fn inv_sq_lengths(&self) -> Vec<f64> {
        self.length_scales.iter().map(|l| 1.0 / (l * l)).collect()
    }
}

/// `σ_f² exp(−½ Σ (x_i − x2_i)² / l_i²)`.
pub fn kernel_ard_se(x: &[f64], x2: &[f64], hyper: &GpHyperparams) -> Result<f64> {
    if x.len() != hyper.dim() || x2.len() != hyper.dim() {
        return Err(Error::shape(
            format!("{} input dimensions", hyper.dim()),
            format!("{} and {}", x.len(), x2.len()),
        ));
    }
    Ok(kernel_raw(x, x2, hyper.sigma_f_sq, &hyper.inv_sq_lengths()))
}

#[inline]
fn kernel_raw(x: &[f64], x2: &[f64], sigma_f_sq: f64, inv_sq: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..x.len() {
        let d = x[i] - x2[i];
        s += d * d * inv_sq[i];
    }
    sigma_f_sq * (-0.5 * s).exp()
}

/// Affine maps applied to inputs (per column) and targets before fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub input_mean: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub target_mean: f64,
    pub target_scale: f64,
}

impl Standardization {
    /// Column means and population standard deviations of `x`, target mean
    /// and standard deviation of `y`. Constant columns (or empty data) keep
    /// unit scale.
    pub fn fit(x: &DMatrix<f64>, y: &[f64]) -> Self {
        let n = x.nrows();
        let d = x.ncols();
        let mut input_mean = vec![0.0; d];
        let mut input_scale = vec![1.0; d];
        if n > 0 {
            for c in 0..d {
                let col = x.column(c);
                let m = col.sum() / n as f64;
                let v = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64;
                input_mean[c] = m;
                input_scale[c] = if v > 0.0 { v.sqrt() } else { 1.0 };
            }
        }
        let (target_mean, target_scale) = if y.is_empty() {
            (0.0, 1.0)
        } else {
            let m = y.iter().sum::<f64>() / y.len() as f64;
            let v = y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / y.len() as f64;
            (m, if v > 0.0 { v.sqrt() } else { 1.0 })
        };
        Self {
            input_mean,
            input_scale,
            target_mean,
            target_scale,
        }
    }

    /// Like [`Standardization::fit`] but keeps the target origin at zero and
    /// scales targets by their root mean square, so the GP prior mean is 0 in
    /// target units.
    pub fn fit_zero_mean(x: &DMatrix<f64>, y: &[f64]) -> Self {
        let mut s = Self::fit(x, y);
        s.target_mean = 0.0;
        let ms = if y.is_empty() {
            0.0
        } else {
            y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64
        };
        s.target_scale = if ms > 0.0 { ms.sqrt() } else { 1.0 };
        s
    }

    /// No transformation at all.
    pub fn identity(dim: usize) -> Self {
        Self {
            input_mean: vec![0.0; dim],
            input_scale: vec![1.0; dim],
            target_mean: 0.0,
            target_scale: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.input_mean.len()
    }

    #[inline]
    pub(crate) fn transform_row_into(&self, row: &[f64], out: &mut [f64]) {
        for i in 0..row.len() {
            out[i] = (row[i] - self.input_mean[i]) / self.input_scale[i];
        }
    }

    fn transform_matrix(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let (n, d) = x.shape();
        let mut out = vec![0.0; n * d];
        for r in 0..n {
            for c in 0..d {
                out[r * d + c] = (x[(r, c)] - self.input_mean[c]) / self.input_scale[c];
            }
        }
        out
    }

    fn transform_targets(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .map(|v| (v - self.target_mean) / self.target_scale)
            .collect()
    }
}

/// Factorized covariance of the (standardized) training data.
#[derive(Debug, Clone)]
struct Factorization {
    /// Row-major lower-triangular Cholesky factor of `K + (σ_n² + jitter) I`.
    l: Vec<f64>,
    alpha: Vec<f64>,
    jitter: f64,
    log_det: f64,
}

fn factorize(xs: &[f64], n: usize, d: usize, hyper: &GpHyperparams, ys: &[f64]) -> Result<Factorization> {
    if n == 0 {
        return Ok(Factorization {
            l: Vec::new(),
            alpha: Vec::new(),
            jitter: 0.0,
            log_det: 0.0,
        });
    }
    let inv_sq = hyper.inv_sq_lengths();
    let mut k = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let xi = &xs[i * d..(i + 1) * d];
        k[(i, i)] = hyper.sigma_f_sq + hyper.sigma_n_sq;
        for j in 0..i {
            let v = kernel_raw(xi, &xs[j * d..(j + 1) * d], hyper.sigma_f_sq, &inv_sq);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    let mut jitter = 0.0;
    let chol: Cholesky<f64, Dyn> = loop {
        let mut kj = k.clone();
        if jitter > 0.0 {
            for i in 0..n {
                kj[(i, i)] += jitter;
            }
        }
        if let Some(c) = Cholesky::new(kj) {
            break c;
        }
        jitter = if jitter == 0.0 {
            JITTER_START * hyper.sigma_f_sq
        } else {
            jitter * 10.0
        };
        if jitter > JITTER_MAX * hyper.sigma_f_sq * (1.0 + 1e-9) {
            return Err(Error::Conditioning(format!(
                "covariance of {n} points not positive definite even with jitter {:.1e}",
                JITTER_MAX * hyper.sigma_f_sq
            )));
        }
    };
    let alpha = chol.solve(&DVector::from_column_slice(ys));
    let lm = chol.l();
    let mut l = vec![0.0; n * n];
    let mut log_det = 0.0;
    for i in 0..n {
        for j in 0..=i {
            l[i * n + j] = lm[(i, j)];
        }
        log_det += 2.0 * lm[(i, i)].ln();
    }
    if !log_det.is_finite() || alpha.iter().any(|v| !v.is_finite()) {
        return Err(Error::Conditioning("non-finite factorization".into()));
    }
    Ok(Factorization {
        l,
        alpha: alpha.iter().copied().collect(),
        jitter,
        log_det,
    })
}

/// Serialized form of a [`GpModel`]; the factorization is recomputed on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpModelData {
    pub x_train: Vec<Vec<f64>>,
    pub y_train: Vec<f64>,
    pub hyper: GpHyperparams,
    pub standardization: Standardization,
}

/// Fitted exact GP.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GpModelData", into = "GpModelData")]
pub struct GpModel {
    x_train: DMatrix<f64>,
    y_train: Vec<f64>,
    hyper: GpHyperparams,
    standardization: Standardization,
    /// Row-major standardized inputs.
    xs: Vec<f64>,
    inv_sq: Vec<f64>,
    fact: Factorization,
}

impl TryFrom<GpModelData> for GpModel {
    type Error = Error;

    fn try_from(data: GpModelData) -> Result<Self> {
        let d = data.hyper.dim();
        let n = data.x_train.len();
        if data.x_train.iter().any(|r| r.len() != d) {
            return Err(Error::shape(format!("{d} input columns"), "ragged training rows"));
        }
        let x = DMatrix::from_fn(n, d, |r, c| data.x_train[r][c]);
        GpModel::fit_with_standardization(&x, &data.y_train, data.hyper, data.standardization)
    }
}

impl From<GpModel> for GpModelData {
    fn from(m: GpModel) -> Self {
        GpModelData {
            x_train: m
                .x_train
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            y_train: m.y_train,
            hyper: m.hyper,
            standardization: m.standardization,
        }
    }
}

/// Reusable buffers for single-point prediction.
#[derive(Debug, Clone, Default)]
pub struct PredictScratch {
    xs: Vec<f64>,
    k: Vec<f64>,
}

impl GpModel {
    /// Fits with standardization learned from `(x, y)`.
    pub fn fit(x: &DMatrix<f64>, y: &[f64], hyper: GpHyperparams) -> Result<Self> {
        let std = Standardization::fit(x, y);
        Self::fit_with_standardization(x, y, hyper, std)
    }

    pub fn fit_with_standardization(
        x: &DMatrix<f64>,
        y: &[f64],
        hyper: GpHyperparams,
        standardization: Standardization,
    ) -> Result<Self> {
        hyper.validate()?;
        let (n, d) = x.shape();
        if d != hyper.dim() {
            return Err(Error::shape(format!("{} input columns", hyper.dim()), d));
        }
        if standardization.dim() != d {
            return Err(Error::shape(format!("{d}-d standardization"), standardization.dim()));
        }
        if y.len() != n {
            return Err(Error::shape(n, y.len()));
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite GP training data".into()));
        }
        let xs = standardization.transform_matrix(x);
        let ys = standardization.transform_targets(y);
        let fact = factorize(&xs, n, d, &hyper, &ys)?;
        Ok(Self {
            x_train: x.clone(),
            y_train: y.to_vec(),
            inv_sq: hyper.inv_sq_lengths(),
            hyper,
            standardization,
            xs,
            fact,
        })
    }

    /// Zero-data model: predictions equal the prior everywhere.
    pub fn prior_only(hyper: GpHyperparams, standardization: Standardization) -> Result<Self> {
        let d = hyper.dim();
        Self::fit_with_standardization(&DMatrix::zeros(0, d), &[], hyper, standardization)
    }

    pub fn n_train(&self) -> usize {
        self.y_train.len()
    }

    pub fn dim(&self) -> usize {
        self.hyper.dim()
    }

    pub fn hyper(&self) -> &GpHyperparams {
        &self.hyper
    }

    pub fn standardization(&self) -> &Standardization {
        &self.standardization
    }

    pub fn x_train(&self) -> &DMatrix<f64> {
        &self.x_train
    }

    pub fn y_train(&self) -> &[f64] {
        &self.y_train
    }

    /// Jitter that was added to the diagonal to factorize.
    pub fn jitter(&self) -> f64 {
        self.fact.jitter
    }

    /// Lower Cholesky factor of `K + (σ_n² + jitter) I` in standardized units.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        let n = self.n_train();
        DMatrix::from_fn(n, n, |r, c| self.fact.l[r * n + c])
    }

    /// `(K + σ_n² I)⁻¹ y` in standardized units.
    pub fn alpha(&self) -> &[f64] {
        &self.fact.alpha
    }

    /// Predictive mean and variance at one raw input row, in target units.
    pub fn predict_point(
        &self,
        row: &[f64],
        include_noise: bool,
        scratch: &mut PredictScratch,
    ) -> (f64, f64) {
        let n = self.n_train();
        let d = self.dim();
        scratch.xs.resize(d, 0.0);
        self.standardization.transform_row_into(row, &mut scratch.xs);
        scratch.k.resize(n, 0.0);
        let mut mean = 0.0;
        for i in 0..n {
            let ki = kernel_raw(
                &scratch.xs,
                &self.xs[i * d..(i + 1) * d],
                self.hyper.sigma_f_sq,
                &self.inv_sq,
            );
            scratch.k[i] = ki;
            mean += ki * self.fact.alpha[i];
        }
        // forward substitution L v = k, in place
        let l = &self.fact.l;
        let mut quad = 0.0;
        for i in 0..n {
            let row = &l[i * n..i * n + i];
            let mut s = scratch.k[i];
            for (lij, vj) in row.iter().zip(&scratch.k[..i]) {
                s -= lij * vj;
            }
            let v = s / l[i * n + i];
            scratch.k[i] = v;
            quad += v * v;
        }
        let mut var = (self.hyper.sigma_f_sq - quad).max(0.0);
        if include_noise {
            var += self.hyper.sigma_n_sq;
        }
        let s = &self.standardization;
        (
            s.target_mean + s.target_scale * mean,
            s.target_scale * s.target_scale * var,
        )
    }

    /// NLML of the standardized training targets.
    pub fn nlml(&self) -> f64 {
        let ys = self.standardization.transform_targets(&self.y_train);
        let quad: f64 = ys.iter().zip(&self.fact.alpha).map(|(y, a)| y * a).sum();
        0.5 * quad + 0.5 * self.fact.log_det + 0.5 * ys.len() as f64 * (2.0 * PI).ln()
    }
}

/// Fits a GP with standardization learned from the data.
pub fn gp_fit(x: &DMatrix<f64>, y: &[f64], hyper: GpHyperparams) -> Result<GpModel> {
    GpModel::fit(x, y, hyper)
}

/// Predictive mean and variance at each row of `x_star`.
pub fn gp_predict(model: &GpModel, x_star: &DMatrix<f64>, include_noise: bool) -> Result<PredictiveSeries> {
    if x_star.ncols() != model.dim() {
        return Err(Error::shape(format!("{} columns", model.dim()), x_star.ncols()));
    }
    let mut scratch = PredictScratch::default();
    let mut row = vec![0.0; model.dim()];
    let mut mean = Vec::with_capacity(x_star.nrows());
    let mut var = Vec::with_capacity(x_star.nrows());
    for r in 0..x_star.nrows() {
        for c in 0..model.dim() {
            row[c] = x_star[(r, c)];
        }
        let (m, v) = model.predict_point(&row, include_noise, &mut scratch);
        mean.push(m);
        var.push(v);
    }
    PredictiveSeries::new(mean, var, 0)
}

/// `½yᵀ(K+σ²I)⁻¹y + ½log|K+σ²I| + (n/2)log 2π` on the data as given.
pub fn nlml(hyper: &GpHyperparams, x: &DMatrix<f64>, y: &[f64]) -> Result<f64> {
    nlml_with(hyper, x, y, &Standardization::identity(x.ncols()))
}

/// NLML after applying `standardization` to inputs and targets.
pub fn nlml_with(
    hyper: &GpHyperparams,
    x: &DMatrix<f64>,
    y: &[f64],
    standardization: &Standardization,
) -> Result<f64> {
    let m = GpModel::fit_with_standardization(x, y, hyper.clone(), standardization.clone())?;
    Ok(m.nlml())
}

/// Analytic gradient of [`nlml`] with respect to the log-hyperparameter vector
/// `[ln σ_f², ln l_1, .., ln l_d, ln σ_n²]`.
pub fn nlml_gradient(hyper: &GpHyperparams, x: &DMatrix<f64>, y: &[f64]) -> Result<Vec<f64>> {
    let model = GpModel::fit_with_standardization(
        x,
        y,
        hyper.clone(),
        Standardization::identity(x.ncols()),
    )?;
    let (n, d) = x.shape();
    let l = model.cholesky_factor();
    let chol = Cholesky::new(&l * l.transpose())
        .ok_or_else(|| Error::Conditioning("refactorization failed".into()))?;
    let kinv = chol.inverse();
    let alpha = &model.fact.alpha;
    let mut grad = vec![0.0; d + 2];
    let inv_sq = hyper.inv_sq_lengths();
    for i in 0..n {
        for j in 0..n {
            let w = kinv[(i, j)] - alpha[i] * alpha[j];
            let xi = x.row(i);
            let xj = x.row(j);
            let diff: Vec<f64> = (0..d).map(|c| xi[c] - xj[c]).collect();
            let kf = kernel_raw(&diff, &vec![0.0; d], hyper.sigma_f_sq, &inv_sq);
            grad[0] += w * kf;
            for c in 0..d {
                grad[1 + c] += w * kf * diff[c] * diff[c] * inv_sq[c];
            }
            if i == j {
                grad[d + 1] += w * hyper.sigma_n_sq;
            }
        }
    }
    grad.iter_mut().for_each(|g| *g *= 0.5);
    Ok(grad)
}

/// Fits a static GP by minimizing the NLML over log-hyperparameters with
/// QPSO. The standardization is learned from `(x, y)` once.
pub fn train_static_gp(x: &DMatrix<f64>, y: &[f64], cfg: &QpsoConfig) -> Result<(GpModel, OptimResult)> {
    train_static_gp_with(x, y, cfg, Standardization::fit(x, y))
}

/// [`train_static_gp`] with a given standardization.
pub fn train_static_gp_with(
    x: &DMatrix<f64>,
    y: &[f64],
    cfg: &QpsoConfig,
    std: Standardization,
) -> Result<(GpModel, OptimResult)> {
    let d = x.ncols();
    if cfg.bounds.len() != d + 2 {
        return Err(Error::Config(format!(
            "optimizer has {} bounds, GP needs {}",
            cfg.bounds.len(),
            d + 2
        )));
    }
    let cost = |theta: &[f64]| -> f64 {
        GpHyperparams::from_log_vector(theta)
            .and_then(|h| nlml_with(&h, x, y, &std))
            .unwrap_or(f64::INFINITY)
    };
    let result = qpso_minimize(cost, cfg)?;
    let hyper = GpHyperparams::from_log_vector(&result.best_position)?;
    let model = GpModel::fit_with_standardization(x, y, hyper, std)?;
    Ok((model, result))
}
