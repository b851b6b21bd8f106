//! Morison's-equation white-box with Bayesian linear regression of the
//! grouped drag and inertia coefficients (Normal-Inverse-Gamma prior, Gibbs
//! sampling).

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix2, Vector2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::TimeSeriesDataset;
use crate::error::{Error, Result};
use crate::predictive::PredictiveSeries;

/// Seawater density used when no other value is given, kg/m³.
pub const SEAWATER_DENSITY: f64 = 1025.0;

/// Dimensional inputs of Morison's equation for a rigid slender cylinder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhysicalConfig {
    pub rho: f64,
    pub diameter: f64,
    pub cd: f64,
    pub cm: f64,
}

impl Default for PhysicalConfig {
    fn default() -> Self {
        Self {
            rho: SEAWATER_DENSITY,
            diameter: 0.48,
            cd: 0.6,
            cm: 1.2,
        }
    }
}

impl PhysicalConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.rho > 0.0
            && self.diameter > 0.0
            && self.cd >= 0.0
            && self.cm >= 0.0
            && [self.rho, self.diameter, self.cd, self.cm]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid physical configuration {self:?}")))
        }
    }
}

/// `(cd', cm') = (½ρD·Cd, ¼πρD²·Cm)`.
pub fn grouped_coefficients(cfg: &PhysicalConfig) -> Result<(f64, f64)> {
    cfg.validate()?;
    let cd_prime = 0.5 * cfg.rho * cfg.diameter * cfg.cd;
    let cm_prime = 0.25 * PI * cfg.rho * cfg.diameter * cfg.diameter * cfg.cm;
    Ok((cd_prime, cm_prime))
}

/// `n × 2` regressor matrix with columns `U|U|` and `Udot`.
pub fn morison_design(u: &[f64], udot: &[f64]) -> Result<DMatrix<f64>> {
    if u.len() != udot.len() {
        return Err(Error::shape(u.len(), udot.len()));
    }
    Ok(DMatrix::from_fn(u.len(), 2, |r, c| {
        if c == 0 {
            u[r] * u[r].abs()
        } else {
            udot[r]
        }
    }))
}

/// Normal-Inverse-Gamma semiconjugate prior:
/// `β ~ N(m_beta, sigma_beta_sq)`, `σ_n² ~ IG(a, b)`.
///
/// `fixed_noise_variance` collapses the Inverse-Gamma to a point mass, which
/// reduces the sampler to the conjugate Gaussian posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NigPrior {
    pub m_beta: [f64; 2],
    pub sigma_beta_sq: [[f64; 2]; 2],
    pub a: f64,
    pub b: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_noise_variance: Option<f64>,
}

impl NigPrior {
    /// Prior centred on the grouped coefficients of `physics`, with
    /// independent components whose standard deviation is `sd_fraction`
    /// times the mean.
    pub fn from_physics(physics: &PhysicalConfig, sd_fraction: f64, a: f64, b: f64) -> Result<Self> {
        let (cd, cm) = grouped_coefficients(physics)?;
        let vd = (sd_fraction * cd).powi(2);
        let vm = (sd_fraction * cm).powi(2);
        let prior = Self {
            m_beta: [cd, cm],
            sigma_beta_sq: [[vd, 0.0], [0.0, vm]],
            a,
            b,
            fixed_noise_variance: None,
        };
        prior.validate()?;
        Ok(prior)
    }

    pub fn with_fixed_noise(mut self, variance: f64) -> Self {
        self.fixed_noise_variance = Some(variance);
        self
    }

    fn covariance(&self) -> Matrix2<f64> {
        let s = self.sigma_beta_sq;
        Matrix2::new(s[0][0], s[0][1], s[1][0], s[1][1])
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.sigma_beta_sq;
        if (s[0][1] - s[1][0]).abs() > 1e-12 * (s[0][0].abs() + s[1][1].abs()) {
            return Err(Error::Config("prior covariance must be symmetric".into()));
        }
        if self.covariance().cholesky().is_none() {
            return Err(Error::Config(
                "prior covariance must be positive definite".into(),
            ));
        }
        if !(self.a > 0.0 && self.b > 0.0) {
            return Err(Error::Config(format!(
                "Inverse-Gamma parameters must be positive (a={}, b={})",
                self.a, self.b
            )));
        }
        if let Some(v) = self.fixed_noise_variance {
            if !(v > 0.0) {
                return Err(Error::Config("fixed noise variance must be positive".into()));
            }
        }
        Ok(())
    }
}

impl Default for NigPrior {
    fn default() -> Self {
        Self::from_physics(&PhysicalConfig::default(), 0.5, 2.0, 1.0)
            .expect("default physical prior is valid")
    }
}

/// Gibbs draws of `β = (cd', cm')` and the noise variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorisonPosterior {
    pub beta_draws: Vec<[f64; 2]>,
    pub sigma_n_sq_draws: Vec<f64>,
    pub prior: NigPrior,
    pub seed: u64,
}

impl MorisonPosterior {
    pub fn n_draws(&self) -> usize {
        self.beta_draws.len()
    }

    pub fn mean_beta(&self) -> [f64; 2] {
        let n = self.n_draws() as f64;
        let mut m = [0.0; 2];
        for b in &self.beta_draws {
            m[0] += b[0];
            m[1] += b[1];
        }
        [m[0] / n, m[1] / n]
    }

    /// Population covariance of the β draws.
    pub fn beta_covariance(&self) -> [[f64; 2]; 2] {
        let n = self.n_draws() as f64;
        let m = self.mean_beta();
        let mut c = [[0.0; 2]; 2];
        for b in &self.beta_draws {
            let d = [b[0] - m[0], b[1] - m[1]];
            for i in 0..2 {
                for j in 0..2 {
                    c[i][j] += d[i] * d[j];
                }
            }
        }
        c.iter_mut().flatten().for_each(|v| *v /= n);
        c
    }

    pub fn mean_sigma_n_sq(&self) -> f64 {
        self.sigma_n_sq_draws.iter().sum::<f64>() / self.n_draws() as f64
    }

    /// Empirical `q`-quantile of component `k` of β (0 = cd', 1 = cm').
    pub fn beta_quantile(&self, k: usize, q: f64) -> f64 {
        let mut v: Vec<f64> = self.beta_draws.iter().map(|b| b[k]).collect();
        v.sort_by(f64::total_cmp);
        let pos = (q.clamp(0.0, 1.0) * (v.len() - 1) as f64).round() as usize;
        v[pos]
    }

    /// Mean prediction `E[β]·[U|U|, Udot]` per step.
    pub fn mean_prediction(&self, u: &[f64], udot: &[f64]) -> Vec<f64> {
        let m = self.mean_beta();
        u.iter()
            .zip(udot)
            .map(|(u, a)| m[0] * (u * u.abs()) + m[1] * a)
            .collect()
    }
}

/// Runs the two-block Gibbs sampler.
///
/// An empty design (`n = 0`) is accepted and yields draws from the prior.
pub fn gibbs_fit(
    x: &DMatrix<f64>,
    f: &[f64],
    prior: &NigPrior,
    n_draws: usize,
    burn_in: usize,
    seed: u64,
) -> Result<MorisonPosterior> {
    prior.validate()?;
    if x.ncols() != 2 {
        return Err(Error::shape("2 design columns", x.ncols()));
    }
    if x.nrows() != f.len() {
        return Err(Error::shape(x.nrows(), f.len()));
    }
    if n_draws == 0 {
        return Err(Error::Config("n_draws must be ≥ 1".into()));
    }
    let n = f.len();

    let xtx = x.transpose() * x;
    let fv = nalgebra::DVector::from_column_slice(f);
    let xtf: Vector2<f64> = {
        let v = x.transpose() * &fv;
        Vector2::new(v[0], v[1])
    };
    let xtx = Matrix2::new(xtx[(0, 0)], xtx[(0, 1)], xtx[(1, 0)], xtx[(1, 1)]);
    let prior_prec = prior
        .covariance()
        .try_inverse()
        .ok_or_else(|| Error::Config("prior covariance is not invertible".into()))?;
    let m = Vector2::new(prior.m_beta[0], prior.m_beta[1]);
    let prior_term = prior_prec * m;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = prior.a + 0.5 * n as f64;
    let mut sigma_sq = prior
        .fixed_noise_variance
        .unwrap_or(prior.b / (prior.a + 1.0));

    let mut beta_draws = Vec::with_capacity(n_draws);
    let mut sigma_draws = Vec::with_capacity(n_draws);
    for it in 0..burn_in + n_draws {
        // β | σ²
        let precision = prior_prec + xtx / sigma_sq;
        let cov = precision.try_inverse().ok_or_else(singular)?;
        let cov = 0.5 * (cov + cov.transpose());
        let mean = cov * (prior_term + xtf / sigma_sq);
        let chol = cov.cholesky().ok_or_else(singular)?;
        let z = Vector2::new(
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
        );
        let beta = mean + chol.l() * z;

        // σ² | β
        if let Some(fixed) = prior.fixed_noise_variance {
            sigma_sq = fixed;
        } else {
            let ssr: f64 = (0..n)
                .map(|i| {
                    let r = f[i] - x[(i, 0)] * beta[0] - x[(i, 1)] * beta[1];
                    r * r
                })
                .sum();
            let rate = prior.b + 0.5 * ssr;
            let gamma = Gamma::new(shape, 1.0 / rate)
                .map_err(|e| Error::Domain(format!("inverse-gamma update: {e}")))?;
            sigma_sq = 1.0 / gamma.sample(&mut rng);
        }

        if it >= burn_in {
            beta_draws.push([beta[0], beta[1]]);
            sigma_draws.push(sigma_sq);
        }
    }

    Ok(MorisonPosterior {
        beta_draws,
        sigma_n_sq_draws: sigma_draws,
        prior: prior.clone(),
        seed,
    })
}

fn singular() -> Error {
    Error::Singular(
        "conditional covariance of β is not positive definite; try a larger prior variance".into(),
    )
}

/// [`gibbs_fit`] on the Morison design of `ds` with the measured force.
pub fn fit_whitebox(
    ds: &TimeSeriesDataset,
    prior: &NigPrior,
    n_draws: usize,
    burn_in: usize,
    seed: u64,
) -> Result<MorisonPosterior> {
    let x = morison_design(ds.u(), ds.udot())?;
    gibbs_fit(&x, ds.f(), prior, n_draws, burn_in, seed)
}

/// Predictive mean and variance of the force over the posterior draws.
///
/// The variance is the population variance of `β⁽ᵏ⁾·x_t` over draws, plus the
/// mean of the `σ_n²` draws when `include_noise` is set.
pub fn predict_whitebox(
    post: &MorisonPosterior,
    u: &[f64],
    udot: &[f64],
    include_noise: bool,
) -> Result<PredictiveSeries> {
    if post.n_draws() == 0 {
        return Err(Error::Domain("posterior holds no draws".into()));
    }
    if u.len() != udot.len() {
        return Err(Error::shape(u.len(), udot.len()));
    }
    let m = post.mean_beta();
    let c = post.beta_covariance();
    let noise = if include_noise {
        post.mean_sigma_n_sq()
    } else {
        0.0
    };
    let mut mean = Vec::with_capacity(u.len());
    let mut variance = Vec::with_capacity(u.len());
    for (u, a) in u.iter().zip(udot) {
        let x = [u * u.abs(), *a];
        mean.push(m[0] * x[0] + m[1] * x[1]);
        let v = c[0][0] * x[0] * x[0] + 2.0 * c[0][1] * x[0] * x[1] + c[1][1] * x[1] * x[1];
        variance.push(v.max(0.0) + noise);
    }
    PredictiveSeries::new(mean, variance, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synthesize, SyntheticConfig, SyntheticResidual};

    #[test]
    fn grouped_coefficient_values() {
        let (cd, cm) = grouped_coefficients(&PhysicalConfig::default()).unwrap();
        assert!((cd - 147.6).abs() < 1e-9);
        // ¼·π·1025·0.48²·1.2
        assert!((cm - 222.575_556_321_5).abs() < 1e-6, "{cm}");
        let zero = PhysicalConfig {
            cd: 0.0,
            ..Default::default()
        };
        assert_eq!(grouped_coefficients(&zero).unwrap().0, 0.0);
        let bad = PhysicalConfig {
            rho: 0.0,
            ..Default::default()
        };
        assert!(grouped_coefficients(&bad).is_err());
    }

    #[test]
    fn design_columns() {
        let x = morison_design(&[2.0, -2.0, 0.0], &[1.0, 1.0, 3.0]).unwrap();
        assert_eq!(x[(0, 0)], 4.0);
        assert_eq!(x[(1, 0)], -4.0);
        assert_eq!((x[(2, 0)], x[(2, 1)]), (0.0, 3.0));
        assert!(morison_design(&[1.0], &[]).is_err());
    }

    #[test]
    fn single_draw_prediction() {
        let post = MorisonPosterior {
            beta_draws: vec![[1.0, 2.0]],
            sigma_n_sq_draws: vec![0.5],
            prior: NigPrior::default(),
            seed: 0,
        };
        let p = predict_whitebox(&post, &[1.0, 0.0], &[1.0, 0.0], false).unwrap();
        assert_eq!(p.mean, vec![3.0, 0.0]);
        assert_eq!(p.variance, vec![0.0, 0.0]);
        let pn = predict_whitebox(&post, &[1.0, 0.0], &[1.0, 0.0], true).unwrap();
        assert_eq!(pn.variance, vec![0.5, 0.5]);
    }

    #[test]
    fn noise_flag_adds_mean_noise_variance() {
        let post = MorisonPosterior {
            beta_draws: vec![[1.0, 2.0], [1.5, 1.0], [0.5, 3.0]],
            sigma_n_sq_draws: vec![1.0, 2.0, 4.5],
            prior: NigPrior::default(),
            seed: 0,
        };
        let u = [0.3, -1.2, 2.0];
        let a = [1.0, 0.5, -0.7];
        let p0 = predict_whitebox(&post, &u, &a, false).unwrap();
        let p1 = predict_whitebox(&post, &u, &a, true).unwrap();
        for i in 0..3 {
            assert!((p1.variance[i] - p0.variance[i] - 2.5).abs() < 1e-12);
        }
        // direct per-draw moments
        for i in 0..3 {
            let x = [u[i] * u[i].abs(), a[i]];
            let vals: Vec<f64> = post
                .beta_draws
                .iter()
                .map(|b| b[0] * x[0] + b[1] * x[1])
                .collect();
            let m = vals.iter().sum::<f64>() / 3.0;
            let v = vals.iter().map(|y| (y - m).powi(2)).sum::<f64>() / 3.0;
            assert!((p0.mean[i] - m).abs() < 1e-12);
            assert!((p0.variance[i] - v).abs() < 1e-12);
        }
    }

    #[test]
    fn no_data_samples_prior() {
        let prior = NigPrior::default();
        let x = DMatrix::zeros(0, 2);
        let post = gibbs_fit(&x, &[], &prior, 20_000, 0, 5).unwrap();
        let m = post.mean_beta();
        let c = post.beta_covariance();
        for k in 0..2 {
            let sd = prior.sigma_beta_sq[k][k].sqrt();
            let se = sd / (20_000f64).sqrt();
            assert!((m[k] - prior.m_beta[k]).abs() < 4.0 * se);
            assert!((c[k][k].sqrt() / sd - 1.0).abs() < 0.03);
        }
    }

    #[test]
    fn near_noise_free_recovery() {
        let cfg = SyntheticConfig {
            n_points: 1000,
            residual: SyntheticResidual::None,
            noise_std: 1e-6,
            true_cd_prime: 147.6,
            true_cm_prime: 222.67,
            seed: 11,
            ..Default::default()
        };
        let ds = synthesize(&cfg).unwrap();
        let x = morison_design(ds.u(), ds.udot()).unwrap();
        let post = gibbs_fit(&x, ds.f(), &NigPrior::default(), 2000, 200, 1).unwrap();
        let m = post.mean_beta();
        assert!((m[0] / 147.6 - 1.0).abs() < 1e-3, "{m:?}");
        assert!((m[1] / 222.67 - 1.0).abs() < 1e-3, "{m:?}");
    }

    #[test]
    fn deterministic_per_seed() {
        let ds = synthesize(&SyntheticConfig {
            n_points: 200,
            ..Default::default()
        })
        .unwrap();
        let x = morison_design(ds.u(), ds.udot()).unwrap();
        let a = gibbs_fit(&x, ds.f(), &NigPrior::default(), 100, 10, 9).unwrap();
        let b = gibbs_fit(&x, ds.f(), &NigPrior::default(), 100, 10, 9).unwrap();
        assert_eq!(a, b);
        let c = gibbs_fit(&x, ds.f(), &NigPrior::default(), 100, 10, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_inputs() {
        let prior = NigPrior::default();
        let x = DMatrix::zeros(3, 2);
        assert!(gibbs_fit(&x, &[1.0, 2.0], &prior, 10, 0, 0).is_err());
        assert!(gibbs_fit(&x, &[1.0, 2.0, 3.0], &prior, 0, 0, 0).is_err());
        let mut bad = prior.clone();
        bad.sigma_beta_sq = [[1.0, 2.0], [2.0, 1.0]];
        assert!(matches!(
            gibbs_fit(&x, &[1.0, 2.0, 3.0], &bad, 10, 0, 0),
            Err(Error::Config(_))
        ));
    }
}
