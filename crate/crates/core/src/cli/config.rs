//! TOML run configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::arx::LagMetric;
use crate::coverage::{BoundaryOptions, CoverageOptions, EmptyBinFill, WhiteboxMode, DEFAULT_BINS, DEFAULT_GRID};
use crate::dataset::{load_csv, split_sequential, synthesize, LagSpec, SyntheticConfig, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::greybox::{BlackBoxConfig, ForecastMode};
use crate::qpso::{QpsoConfig, DEFAULT_LOG_BOUND, DEFAULT_MAX_ITERS, DEFAULT_PATIENCE, DEFAULT_REPEAT_RUNS};
use crate::whitebox::{NigPrior, PhysicalConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 uses all cores.
    pub workers: usize,
    pub out: PathBuf,
    pub data: DataConfig,
    pub split: SplitConfig,
    /// Fixed lags. When absent, `train` runs the lag search first.
    pub lags: Option<LagSpec>,
    pub lagsearch: LagSearchConfig,
    pub models: ModelsConfig,
    pub whitebox: WhiteboxConfig,
    pub optimizer: OptimizerConfig,
    pub coverage: CoverageConfig,
    pub spectra: SpectraConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 0,
            out: PathBuf::from("out"),
            data: DataConfig::default(),
            split: SplitConfig::default(),
            lags: None,
            lagsearch: LagSearchConfig::default(),
            models: ModelsConfig::default(),
            whitebox: WhiteboxConfig::default(),
            optimizer: OptimizerConfig::default(),
            coverage: CoverageConfig::default(),
            spectra: SpectraConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// CSV with columns t, U, Udot, F. Relative paths resolve against the
    /// config file's directory.
    pub csv: Option<PathBuf>,
    /// Used when `csv` is absent.
    pub synthetic: Option<SyntheticConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train: 1000,
            val: 1000,
            test: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LagSearchConfig {
    pub max_lu: usize,
    pub max_ly: usize,
    /// One of delta_aicc_osa, delta_aicc_mpo, delta_bic_osa, delta_bic_mpo.
    pub metric: String,
}

impl Default for LagSearchConfig {
    fn default() -> Self {
        Self {
            max_lu: 20,
            max_ly: 20,
            metric: LagMetric::BicOsa.name().into(),
        }
    }
}

impl LagSearchConfig {
    pub fn metric(&self) -> Result<LagMetric> {
        LagMetric::ALL
            .into_iter()
            .find(|m| m.name() == self.metric)
            .ok_or_else(|| Error::Config(format!("unknown lag metric {:?}", self.metric)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Whitebox,
    /// Static (`l_y = 0`) black-box, residual and augmented GPs.
    StaticGp,
    Gpnarx,
    GreyResidual,
    GreyAugmented,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeName {
    Osa,
    Mpo,
    McMpo,
}

impl From<ModeName> for ForecastMode {
    fn from(m: ModeName) -> Self {
        match m {
            ModeName::Osa => ForecastMode::Osa,
            ModeName::Mpo => ForecastMode::Mpo,
            ModeName::McMpo => ForecastMode::McMpo,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelsConfig {
    pub list: Vec<ModelKind>,
    pub modes: Vec<ModeName>,
    pub mc_samples: usize,
    /// Exogenous lags of the static GPs.
    pub static_lu: usize,
}

impl Default for ModelsConfig {
    fn default() -> Self {
        Self {
            list: vec![
                ModelKind::Whitebox,
                ModelKind::StaticGp,
                ModelKind::Gpnarx,
                ModelKind::GreyResidual,
                ModelKind::GreyAugmented,
            ],
            modes: vec![ModeName::Osa, ModeName::Mpo, ModeName::McMpo],
            mc_samples: 1000,
            static_lu: 0,
        }
    }
}

impl ModelsConfig {
    pub fn has(&self, kind: ModelKind) -> bool {
        self.list.contains(&kind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WhiteboxConfig {
    pub physics: PhysicalConfig,
    /// Prior standard deviation of each grouped coefficient as a fraction of
    /// its physical value.
    pub prior_sd_fraction: f64,
    pub prior_a: f64,
    pub prior_b: f64,
    pub n_draws: usize,
    pub burn_in: usize,
}

impl Default for WhiteboxConfig {
    fn default() -> Self {
        Self {
            physics: PhysicalConfig::default(),
            prior_sd_fraction: 0.5,
            prior_a: 2.0,
            prior_b: 10.0,
            n_draws: 5000,
            burn_in: 500,
        }
    }
}

impl WhiteboxConfig {
    pub fn prior(&self) -> Result<NigPrior> {
        NigPrior::from_physics(&self.physics, self.prior_sd_fraction, self.prior_a, self.prior_b)
    }
}

/// QPSO settings. Unset swarm size and tolerance take the role defaults:
/// 1000 and 1e-5 for GP-NARX, 200 and 1e-3 for static GPs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QpsoSettings {
    pub swarm_size: Option<usize>,
    pub stability_tol: Option<f64>,
    pub max_iters: usize,
    pub patience: usize,
    pub n_repeat_runs: usize,
    /// Search box `[−log_bound, log_bound]` for every log hyperparameter.
    pub log_bound: f64,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for QpsoSettings {
    fn default() -> Self {
        Self {
            swarm_size: None,
            stability_tol: None,
            max_iters: DEFAULT_MAX_ITERS,
            patience: DEFAULT_PATIENCE,
            n_repeat_runs: DEFAULT_REPEAT_RUNS,
            log_bound: DEFAULT_LOG_BOUND,
            beta_start: 1.0,
            beta_end: 0.5,
        }
    }
}

impl QpsoSettings {
    fn to_qpso(&self, base: QpsoConfig, seed: u64) -> QpsoConfig {
        let mut q = base.with_uniform_bounds(1, -self.log_bound, self.log_bound);
        if let Some(s) = self.swarm_size {
            q.swarm_size = s;
        }
        if let Some(t) = self.stability_tol {
            q.stability_tol = t;
        }
        q.max_iters = self.max_iters;
        q.patience = self.patience;
        q.n_repeat_runs = self.n_repeat_runs;
        q.contraction_expansion = (self.beta_start, self.beta_end);
        q.seed = seed;
        q
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub narx: QpsoSettings,
    #[serde(rename = "static")]
    pub static_gp: QpsoSettings,
    /// Repeat-run agreement thresholds (log-hyperparameter max-norm, cost).
    pub position_tol: f64,
    pub cost_tol: f64,
    /// Keep models whose repeat runs disagree or did not converge.
    pub allow_unstable: bool,
    pub zero_data_noise_variance: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            narx: QpsoSettings::default(),
            static_gp: QpsoSettings::default(),
            position_tol: 0.5,
            cost_tol: 1e-2,
            allow_unstable: false,
            zero_data_noise_variance: 1.0,
        }
    }
}

impl OptimizerConfig {
    pub fn narx_qpso(&self, seed: u64) -> QpsoConfig {
        self.narx.to_qpso(QpsoConfig::gp_narx(1), seed)
    }

    pub fn static_qpso(&self, seed: u64) -> QpsoConfig {
        self.static_gp.to_qpso(QpsoConfig::static_gp(1), seed)
    }

    pub fn blackbox(&self, seed: u64) -> BlackBoxConfig {
        BlackBoxConfig {
            narx_optimizer: self.narx_qpso(seed),
            static_optimizer: self.static_qpso(seed),
            zero_data_noise_variance: self.zero_data_noise_variance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoverageConfig {
    pub targets: Vec<f64>,
    pub tolerance: f64,
    pub n_bins: usize,
    pub grid_resolution: usize,
    /// "nearest" or "neighbours".
    pub fill: String,
    pub fill_reach: usize,
    pub radius_quantile: Option<f64>,
    pub whitebox_modes: Vec<WhiteboxMode>,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        Self {
            targets: (0..=16).map(|k| 5.0 * k as f64).collect(),
            tolerance: 1.0,
            n_bins: DEFAULT_BINS,
            grid_resolution: DEFAULT_GRID,
            fill: "neighbours".into(),
            fill_reach: 1,
            radius_quantile: None,
            whitebox_modes: vec![WhiteboxMode::RefitPerSubset, WhiteboxMode::FixedExternal],
        }
    }
}

impl CoverageConfig {
    pub fn options(&self) -> Result<CoverageOptions> {
        let fill = match self.fill.as_str() {
            "neighbours" | "neighbors" => EmptyBinFill::Neighbours(self.fill_reach),
            "nearest" => EmptyBinFill::Nearest,
            other => return Err(Error::Config(format!("unknown bin fill {other:?}"))),
        };
        Ok(CoverageOptions {
            boundary: BoundaryOptions {
                n_bins: self.n_bins,
                fill,
                radius_quantile: self.radius_quantile,
            },
            grid_resolution: self.grid_resolution,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectraConfig {
    pub n_windows: usize,
}

impl Default for SpectraConfig {
    fn default() -> Self {
        Self { n_windows: 16 }
    }
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    /// Parses `path`; relative data paths are made relative to its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let (Some(csv), Some(dir)) = (&cfg.data.csv, path.parent()) {
            if csv.is_relative() {
                cfg.data.csv = Some(dir.join(csv));
            }
        }
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| cfg_err(format!("config: {}", e.message())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.csv.is_some() && self.data.synthetic.is_some() {
            return Err(cfg_err("set either data.csv or data.synthetic, not both"));
        }
        if let Some(s) = &self.data.synthetic {
            s.validate()?;
        }
        let s = self.split;
        if s.train == 0 || s.val == 0 || s.test == 0 {
            return Err(cfg_err("split sizes must all be ≥ 1"));
        }
        if self.models.list.is_empty() {
            return Err(cfg_err("models.list must name at least one model"));
        }
        if self.models.modes.is_empty() {
            return Err(cfg_err("models.modes must name at least one prediction mode"));
        }
        if self.models.mc_samples == 0 {
            return Err(cfg_err("models.mc_samples must be ≥ 1"));
        }
        if let Some(l) = self.lags {
            if l.ly == 0 {
                return Err(cfg_err("lags.ly must be ≥ 1 (static models use models.static_lu)"));
            }
        }
        if self.lagsearch.max_ly == 0 {
            return Err(cfg_err("lagsearch.max_ly must be ≥ 1"));
        }
        self.lagsearch.metric()?;
        self.whitebox.prior()?;
        if self.whitebox.n_draws == 0 {
            return Err(cfg_err("whitebox.n_draws must be ≥ 1"));
        }
        self.optimizer.narx_qpso(0).validate()?;
        self.optimizer.static_qpso(0).validate()?;
        if !(self.optimizer.zero_data_noise_variance > 0.0) {
            return Err(cfg_err("optimizer.zero_data_noise_variance must be > 0"));
        }
        let c = &self.coverage;
        if c.targets.iter().any(|t| !(0.0..=100.0).contains(t)) {
            return Err(cfg_err("coverage targets must lie in [0, 100]"));
        }
        if c.targets.windows(2).any(|w| w[1] < w[0]) {
            return Err(cfg_err("coverage targets must be ascending"));
        }
        if c.n_bins < 3 || c.grid_resolution == 0 {
            return Err(cfg_err("coverage needs n_bins ≥ 3 and grid_resolution ≥ 1"));
        }
        if c.whitebox_modes.is_empty() {
            return Err(cfg_err("coverage.whitebox_modes must not be empty"));
        }
        c.options()?;
        if self.spectra.n_windows == 0 {
            return Err(cfg_err("spectra.n_windows must be ≥ 1"));
        }
        Ok(())
    }

    pub fn synthetic(&self) -> SyntheticConfig {
        self.data.synthetic.clone().unwrap_or_default()
    }

    pub fn dataset(&self) -> Result<TimeSeriesDataset> {
        match &self.data.csv {
            Some(p) => load_csv(p),
            None => synthesize(&self.synthetic()),
        }
    }

    pub fn splits(&self) -> Result<(TimeSeriesDataset, TimeSeriesDataset, TimeSeriesDataset)> {
        let s = self.split;
        split_sequential(&self.dataset()?, [s.train, s.val, s.test])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_default() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        cfg.validate().unwrap();
        assert_eq!(cfg.coverage.targets.len(), 17);
        assert_eq!(cfg.optimizer.narx_qpso(0).swarm_size, 1000);
        assert_eq!(cfg.optimizer.static_qpso(0).stability_tol, 1e-3);
    }

    #[test]
    fn parses_sections() {
        let cfg = RunConfig::from_toml(
            r#"
            seed = 3
            lags = { lu = 1, ly = 3 }
            [data.synthetic]
            n_points = 500
            [models]
            list = ["whitebox", "grey-residual"]
            modes = ["mc-mpo"]
            [optimizer.static]
            swarm_size = 20
            [coverage]
            whitebox_modes = ["fixed-external"]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.lags, Some(LagSpec::new(1, 3)));
        assert_eq!(cfg.synthetic().n_points, 500);
        assert!(cfg.models.has(ModelKind::GreyResidual));
        let q = cfg.optimizer.static_qpso(0);
        assert_eq!((q.swarm_size, q.stability_tol), (20, 1e-3));
        assert_eq!(cfg.optimizer.narx_qpso(0).stability_tol, 1e-5);
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(RunConfig::from_toml("bogus = 1").is_err());
        assert!(RunConfig::from_toml("[models]\nlist = [\"svm\"]").is_err());
        for text in [
            "[models]\nlist = []",
            "[coverage]\ntargets = [10.0, 5.0]",
            "[lagsearch]\nmetric = \"aic\"",
            "[split]\ntest = 0",
            "[data]\ncsv = \"a.csv\"\n[data.synthetic]\nn_points = 100",
        ] {
            let cfg = RunConfig::from_toml(text).unwrap();
            assert!(matches!(cfg.validate(), Err(Error::Config(_))), "{text}");
        }
    }
}
