//! Trains a GP-NARX on a synthetic record and compares one-step-ahead,
//! model-predicted-output and Monte-Carlo MPO forecasts.

use morison_greybox::dataset::{split_sequential, synthesize, LagSpec, SyntheticConfig};
use morison_greybox::gpnarx::{mc_mpo_predict, mpo_predict, osa_predict, train_gpnarx};
use morison_greybox::metrics::nmse;
use morison_greybox::qpso::QpsoConfig;

fn main() -> morison_greybox::Result<()> {
    let ds = synthesize(&SyntheticConfig {
        n_points: 800,
        seed: 5,
        ..Default::default()
    })?;
    let (train, val, test) = split_sequential(&ds, [200, 200, 400])?;
    let spec = LagSpec::new(1, 2);

    let mut q = QpsoConfig::new(spec.design_dim(2) + 2, 40, 1e-4);
    q.max_iters = 60;
    q.n_repeat_runs = 1;
    let (model, opt) = train_gpnarx(&train, &val, spec, &q)?;
    println!("MPO-NLPL after training: {:.4}", opt.best_cost);

    let start = spec.max_lag();
    let y = &test.f()[start..];
    let osa = osa_predict(&model, &test)?.aligned_to(start)?;
    let mpo = mpo_predict(&model, &test)?.aligned_to(start)?;
    let mc = mc_mpo_predict(&model, &test, 1000, 9)?.summary().aligned_to(start)?;
    for (name, p) in [("OSA", &osa), ("MPO", &mpo), ("MC-MPO", &mc)] {
        let sd = p.variance.iter().map(|v| v.sqrt()).sum::<f64>() / p.variance.len() as f64;
        println!("{name:>7}: NMSE {:8.4}%  mean std {sd:.3}", nmse(y, &p.mean)?);
    }
    Ok(())
}
