//! Grey-box composition of the Morison white-box with a GP black-box.
//!
//! * Residual: the black-box models `F − F_mor` and its prediction is added
//!   back to the white-box mean.
//! * Input augmentation: `F_mor` is an extra exogenous channel of a black-box
//!   that predicts `F` directly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{Channel, LagSpec, NarxSeries, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::gpnarx::{
    mc_mpo_predict_series, mpo_predict_series, osa_predict_series, train_gpnarx_nlml_series,
    train_gpnarx_series, ExogenousTransform, GpNarxModel,
};
use crate::persist::{read_json, write_json};
use crate::predictive::{McPredictiveSeries, PredictiveSeries};
use crate::qpso::{OptimResult, QpsoConfig};
use crate::whitebox::{predict_whitebox, MorisonPosterior};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    Residual,
    InputAugmentation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ForecastMode {
    Osa,
    Mpo,
    McMpo,
}

impl ForecastMode {
    pub const ALL: [ForecastMode; 3] = [ForecastMode::Osa, ForecastMode::Mpo, ForecastMode::McMpo];

    pub fn label(self) -> &'static str {
        match self {
            ForecastMode::Osa => "OSA",
            ForecastMode::Mpo => "MPO",
            ForecastMode::McMpo => "MC-MPO",
        }
    }
}

/// A Gaussian or Monte-Carlo prediction.
#[derive(Debug, Clone, PartialEq)]
pub enum Forecast {
    Gaussian(PredictiveSeries),
    MonteCarlo(McPredictiveSeries),
}

impl Forecast {
    pub fn summary(&self) -> PredictiveSeries {
        match self {
            Forecast::Gaussian(p) => p.clone(),
            Forecast::MonteCarlo(m) => m.summary(),
        }
    }

    pub fn mean(&self) -> &[f64] {
        match self {
            Forecast::Gaussian(p) => &p.mean,
            Forecast::MonteCarlo(m) => &m.mean,
        }
    }

    pub fn variance(&self) -> &[f64] {
        match self {
            Forecast::Gaussian(p) => &p.variance,
            Forecast::MonteCarlo(m) => &m.variance,
        }
    }

    pub fn offset(&self) -> usize {
        match self {
            Forecast::Gaussian(p) => p.offset,
            Forecast::MonteCarlo(m) => m.offset,
        }
    }

    pub fn aligned_to(&self, offset: usize) -> Result<Self> {
        Ok(match self {
            Forecast::Gaussian(p) => Forecast::Gaussian(p.aligned_to(offset)?),
            Forecast::MonteCarlo(m) => Forecast::MonteCarlo(m.aligned_to(offset)?),
        })
    }
}

/// Optimizer settings for black-box training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlackBoxConfig {
    /// MPO-NLPL search for dynamic models; bounds are resized to `d + 2`.
    pub narx_optimizer: QpsoConfig,
    /// NLML search for static models and short validation sets.
    pub static_optimizer: QpsoConfig,
    /// Noise variance of a black-box that has no training data.
    pub zero_data_noise_variance: f64,
}

impl Default for BlackBoxConfig {
    fn default() -> Self {
        Self {
            narx_optimizer: QpsoConfig::gp_narx(1),
            static_optimizer: QpsoConfig::static_gp(1),
            zero_data_noise_variance: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainingObjective {
    MpoNlpl,
    Nlml,
    /// No training rows: the model is the GP prior.
    PriorOnly,
}

#[derive(Debug, Clone)]
pub struct BlackBoxFit {
    pub model: GpNarxModel,
    pub objective: TrainingObjective,
    pub optim: Option<OptimResult>,
}

/// Trains a black-box on `train`/`val` series.
///
/// Static lags (`l_y = 0`) and validation sets no longer than the warm-up
/// use NLML on `train`; a training set no longer than the warm-up gives the
/// prior-only model.
pub fn train_blackbox_series(
    train: &NarxSeries,
    val: &NarxSeries,
    spec: LagSpec,
    cfg: &BlackBoxConfig,
    transform: ExogenousTransform,
) -> Result<BlackBoxFit> {
    let lag = spec.max_lag();
    let d = spec.design_dim(train.n_exogenous());
    if train.len() <= lag {
        let mut model = GpNarxModel::prior_only(
            train.n_exogenous(),
            spec,
            cfg.zero_data_noise_variance,
            train.output_label.clone(),
            transform,
        )?;
        model.target_label.clone_from(&train.output_label);
        return Ok(BlackBoxFit {
            model,
            objective: TrainingObjective::PriorOnly,
            optim: None,
        });
    }
    if spec.is_static() || val.len() <= lag {
        let qcfg = cfg.static_optimizer.resized(d + 2);
        let (model, optim) = train_gpnarx_nlml_series(train, spec, &qcfg, transform)?;
        return Ok(BlackBoxFit {
            model,
            objective: TrainingObjective::Nlml,
            optim: Some(optim),
        });
    }
    let qcfg = cfg.narx_optimizer.resized(d + 2);
    let (model, optim) = train_gpnarx_series(train, val, spec, &qcfg, transform)?;
    Ok(BlackBoxFit {
        model,
        objective: TrainingObjective::MpoNlpl,
        optim: Some(optim),
    })
}

/// Pure black-box on force with `U`, `Udot` inputs.
pub fn train_blackbox(
    train: &TimeSeriesDataset,
    val: &TimeSeriesDataset,
    spec: LagSpec,
    cfg: &BlackBoxConfig,
) -> Result<BlackBoxFit> {
    train_blackbox_series(
        &NarxSeries::from_dataset(train, Channel::F),
        &NarxSeries::from_dataset(val, Channel::F),
        spec,
        cfg,
        ExogenousTransform::Raw,
    )
}

/// `U`, `Udot` inputs with the white-box residual `F − F_mor` as output.
pub fn residual_series(whitebox: &MorisonPosterior, ds: &TimeSeriesDataset) -> Result<NarxSeries> {
    let fmor = whitebox.mean_prediction(ds.u(), ds.udot());
    let r = ds.f().iter().zip(&fmor).map(|(f, m)| f - m).collect();
    NarxSeries::from_dataset(ds, Channel::F).with_output("R", r)
}

/// `U`, `Udot`, `F_mor` inputs with force as output.
pub fn augmented_series(whitebox: &MorisonPosterior, ds: &TimeSeriesDataset) -> Result<NarxSeries> {
    let fmor = whitebox.mean_prediction(ds.u(), ds.udot());
    NarxSeries::from_dataset(ds, Channel::F).with_exogenous("F_mor", fmor)
}

#[derive(Debug, Clone)]
pub struct GreyBoxModel {
    pub whitebox: MorisonPosterior,
    pub blackbox: GpNarxModel,
    pub architecture: Architecture,
    pub spec: LagSpec,
    /// Residual architecture only: add the white-box parameter variance to
    /// the black-box variance (independence assumption).
    pub include_whitebox_variance: bool,
}

impl GreyBoxModel {
    pub fn new(whitebox: MorisonPosterior, blackbox: GpNarxModel, architecture: Architecture) -> Result<Self> {
        let expected = match architecture {
            Architecture::Residual => ExogenousTransform::ResidualTarget,
            Architecture::InputAugmentation => ExogenousTransform::MorisonAugmented,
        };
        if blackbox.exogenous_transform != expected {
            return Err(Error::Config(format!(
                "{architecture:?} grey-box needs a {expected:?} black-box, got {:?}",
                blackbox.exogenous_transform
            )));
        }
        Ok(Self {
            spec: blackbox.spec,
            whitebox,
            blackbox,
            architecture,
            include_whitebox_variance: true,
        })
    }

    /// Black-box input series for `ds`.
    pub fn series(&self, ds: &TimeSeriesDataset) -> Result<NarxSeries> {
        match self.architecture {
            Architecture::Residual => residual_series(&self.whitebox, ds),
            Architecture::InputAugmentation => augmented_series(&self.whitebox, ds),
        }
    }

    /// Writes `{stem}.json` referencing `{stem}.blackbox.json` and the
    /// white-box file; the white-box is written to `{stem}.whitebox.json`
    /// unless `whitebox_ref` names an existing file in `dir`.
    pub fn save(&self, dir: impl AsRef<Path>, stem: &str, whitebox_ref: Option<&str>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        let whitebox = match whitebox_ref {
            Some(r) => r.to_string(),
            None => {
                let name = format!("{stem}.whitebox.json");
                write_json(dir.join(&name), &self.whitebox)?;
                name
            }
        };
        let blackbox = format!("{stem}.blackbox.json");
        write_json(dir.join(&blackbox), &self.blackbox)?;
        let manifest = GreyBoxManifest {
            architecture: self.architecture,
            whitebox,
            blackbox,
            spec: self.spec,
            include_whitebox_variance: self.include_whitebox_variance,
        };
        let path = dir.join(format!("{stem}.json"));
        write_json(&path, &manifest)?;
        Ok(path)
    }

    /// Loads a model written by [`GreyBoxModel::save`]; references resolve
    /// relative to the manifest's directory.
    pub fn load(manifest_path: impl AsRef<Path>) -> Result<Self> {
        let path = manifest_path.as_ref();
        let manifest: GreyBoxManifest = read_json(path)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let whitebox: MorisonPosterior = read_json(dir.join(&manifest.whitebox))?;
        let blackbox: GpNarxModel = read_json(dir.join(&manifest.blackbox))?;
        if blackbox.spec != manifest.spec {
            return Err(Error::Config(format!(
                "manifest lags {} disagree with black-box lags {}",
                manifest.spec, blackbox.spec
            )));
        }
        let mut model = Self::new(whitebox, blackbox, manifest.architecture)?;
        model.include_whitebox_variance = manifest.include_whitebox_variance;
        Ok(model)
    }
}

/// On-disk form of a [`GreyBoxModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreyBoxManifest {
    pub architecture: Architecture,
    pub whitebox: String,
    pub blackbox: String,
    pub spec: LagSpec,
    pub include_whitebox_variance: bool,
}

fn compose(
    whitebox: &MorisonPosterior,
    train: &TimeSeriesDataset,
    val: &TimeSeriesDataset,
    spec: LagSpec,
    cfg: &BlackBoxConfig,
    architecture: Architecture,
) -> Result<(GreyBoxModel, BlackBoxFit)> {
    let (tr, va, transform) = match architecture {
        Architecture::Residual => (
            residual_series(whitebox, train)?,
            residual_series(whitebox, val)?,
            ExogenousTransform::ResidualTarget,
        ),
        Architecture::InputAugmentation => (
            augmented_series(whitebox, train)?,
            augmented_series(whitebox, val)?,
            ExogenousTransform::MorisonAugmented,
        ),
    };
    let fit = train_blackbox_series(&tr, &va, spec, cfg, transform)?;
    let model = GreyBoxModel::new(whitebox.clone(), fit.model.clone(), architecture)?;
    Ok((model, fit))
}

/// Black-box trained on the white-box residual (residual-space lags).
pub fn train_residual(
    train: &TimeSeriesDataset,
    val: &TimeSeriesDataset,
    whitebox: &MorisonPosterior,
    spec: LagSpec,
    cfg: &BlackBoxConfig,
) -> Result<(GreyBoxModel, BlackBoxFit)> {
    compose(whitebox, train, val, spec, cfg, Architecture::Residual)
}

/// Black-box on force with the white-box mean as a third exogenous channel.
pub fn train_augmented(
    train: &TimeSeriesDataset,
    val: &TimeSeriesDataset,
    whitebox: &MorisonPosterior,
    spec: LagSpec,
    cfg: &BlackBoxConfig,
) -> Result<(GreyBoxModel, BlackBoxFit)> {
    compose(whitebox, train, val, spec, cfg, Architecture::InputAugmentation)
}

/// Black-box prediction in its own output space.
pub fn predict_blackbox_series(
    model: &GpNarxModel,
    series: &NarxSeries,
    mode: ForecastMode,
    n_samples: usize,
    seed: u64,
) -> Result<Forecast> {
    Ok(match mode {
        ForecastMode::Osa => Forecast::Gaussian(osa_predict_series(model, series)?),
        ForecastMode::Mpo => Forecast::Gaussian(mpo_predict_series(model, series)?),
        ForecastMode::McMpo => Forecast::MonteCarlo(mc_mpo_predict_series(model, series, n_samples, seed)?),
    })
}

/// Pure black-box force prediction.
pub fn predict_blackbox(
    model: &GpNarxModel,
    ds: &TimeSeriesDataset,
    mode: ForecastMode,
    n_samples: usize,
    seed: u64,
) -> Result<Forecast> {
    if model.exogenous_transform != ExogenousTransform::Raw {
        return Err(Error::Config("grey-box black-boxes predict through predict_greybox".into()));
    }
    predict_blackbox_series(model, &NarxSeries::from_dataset(ds, Channel::F), mode, n_samples, seed)
}

/// Grey-box force prediction. For the residual architecture the white-box
/// mean is added to the black-box residual prediction (to every MC path)
/// and, when enabled, the white-box parameter variance to its variance.
pub fn predict_greybox(
    model: &GreyBoxModel,
    ds: &TimeSeriesDataset,
    mode: ForecastMode,
    n_samples: usize,
    seed: u64,
) -> Result<Forecast> {
    let series = model.series(ds)?;
    let bb = predict_blackbox_series(&model.blackbox, &series, mode, n_samples, seed)?;
    if model.architecture == Architecture::InputAugmentation {
        return Ok(bb);
    }
    let wb = predict_whitebox(&model.whitebox, ds.u(), ds.udot(), false)?;
    let off = bb.offset();
    let add_var = model.include_whitebox_variance;
    let shift_mean = |mean: &mut [f64]| {
        for (i, m) in mean.iter_mut().enumerate() {
            *m += wb.mean[off + i];
        }
    };
    let shift_var = |var: &mut [f64]| {
        if add_var {
            for (i, v) in var.iter_mut().enumerate() {
                *v += wb.variance[off + i];
            }
        }
    };
    Ok(match bb {
        Forecast::Gaussian(mut p) => {
            shift_mean(&mut p.mean);
            shift_var(&mut p.variance);
            Forecast::Gaussian(p)
        }
        Forecast::MonteCarlo(mut m) => {
            shift_mean(&mut m.mean);
            shift_var(&mut m.variance);
            for p in &mut m.paths {
                shift_mean(p);
            }
            Forecast::MonteCarlo(m)
        }
    })
}
