//! White-box, black-box and both grey-box architectures on a record with an
//! injected nonlinear residual.

use morison_greybox::dataset::{split_sequential, synthesize, LagSpec, SyntheticConfig, SyntheticResidual};
use morison_greybox::greybox::{
    predict_blackbox, predict_greybox, train_augmented, train_blackbox, train_residual, BlackBoxConfig, ForecastMode,
};
use morison_greybox::metrics::{msll, nmse};
use morison_greybox::qpso::QpsoConfig;
use morison_greybox::whitebox::{fit_whitebox, predict_whitebox, NigPrior, PhysicalConfig};

fn main() -> morison_greybox::Result<()> {
    let ds = synthesize(&SyntheticConfig {
        n_points: 800,
        residual: SyntheticResidual::AutoregressiveNonlinear {
            ar1: 0.5,
            ar2: 0.0,
            gain: 100.0,
        },
        seed: 1,
        ..Default::default()
    })?;
    let (train, val, test) = split_sequential(&ds, [200, 200, 400])?;
    let spec = LagSpec::new(1, 2);

    let mut q = QpsoConfig::new(1, 40, 1e-4);
    q.max_iters = 60;
    q.n_repeat_runs = 1;
    let cfg = BlackBoxConfig {
        narx_optimizer: q.clone(),
        static_optimizer: q,
        zero_data_noise_variance: 1.0,
    };

    let prior = NigPrior::from_physics(&PhysicalConfig::default(), 0.5, 2.0, 10.0)?;
    let wb = fit_whitebox(&train, &prior, 2000, 200, 3)?;
    let bb = train_blackbox(&train, &val, spec, &cfg)?;
    let (res, _) = train_residual(&train, &val, &wb, spec, &cfg)?;
    let (aug, _) = train_augmented(&train, &val, &wb, spec, &cfg)?;

    let start = spec.max_lag();
    let y = &test.f()[start..];
    let fm = train.f().iter().sum::<f64>() / train.len() as f64;
    let fv = train.f().iter().map(|v| (v - fm).powi(2)).sum::<f64>() / train.len() as f64;
    let report = |name: &str, mean: &[f64], var: &[f64]| -> morison_greybox::Result<()> {
        println!("{name:>16}: NMSE {:8.3}%  MSLL {:7.3}", nmse(y, mean)?, msll(y, mean, var, fm, fv)?);
        Ok(())
    };

    let w = predict_whitebox(&wb, test.u(), test.udot(), true)?.aligned_to(start)?;
    report("white-box", &w.mean, &w.variance)?;
    let b = predict_blackbox(&bb.model, &test, ForecastMode::McMpo, 500, 4)?.summary().aligned_to(start)?;
    report("black-box", &b.mean, &b.variance)?;
    let r = predict_greybox(&res, &test, ForecastMode::McMpo, 500, 5)?.summary().aligned_to(start)?;
    report("grey residual", &r.mean, &r.variance)?;
    let a = predict_greybox(&aug, &test, ForecastMode::McMpo, 500, 6)?.summary().aligned_to(start)?;
    report("grey augmented", &a.mean, &a.variance)?;
    Ok(())
}
