//! Coverage of a test record by subsets of the training data, then a short
//! coverage-versus-error sweep written to `coverage_sweep.csv`.

use morison_greybox::coverage::{
    compute_coverage, coverage_sweep, input_points, write_sweep_file, CoverageOptions, SweepConfig, SweepModel,
    SweepSplits, WhiteboxMode,
};
use morison_greybox::dataset::{split_sequential, synthesize, LagSpec, SyntheticConfig};
use morison_greybox::greybox::BlackBoxConfig;
use morison_greybox::qpso::QpsoConfig;
use morison_greybox::whitebox::{NigPrior, PhysicalConfig};

fn main() -> morison_greybox::Result<()> {
    let ds = synthesize(&SyntheticConfig {
        n_points: 900,
        seed: 8,
        ..Default::default()
    })?;
    let (train, val, test) = split_sequential(&ds, [300, 300, 300])?;
    let opts = CoverageOptions::default();
    let test_pts = input_points(&test);
    for n in [10, 50, 100, 300] {
        let tr = input_points(&train.prefix(n)?);
        let va = input_points(&val.prefix(n)?);
        let c = compute_coverage(&tr, &va, &test_pts, &opts)?;
        println!("first {n:>3} samples: coverage {:6.2}%", c.coverage_percent);
    }

    let mut q = QpsoConfig::new(1, 12, 1e-3);
    q.max_iters = 20;
    q.n_repeat_runs = 1;
    let rows = coverage_sweep(
        SweepSplits {
            train: &train,
            val: &val,
            test: &test,
        },
        &[SweepModel::Whitebox, SweepModel::Residual],
        &SweepConfig {
            targets: vec![0.0, 20.0, 40.0],
            tolerance: 2.0,
            coverage: opts,
            spec: LagSpec::new(1, 2),
            blackbox: BlackBoxConfig {
                narx_optimizer: q.clone(),
                static_optimizer: q,
                zero_data_noise_variance: 1.0,
            },
            prior: NigPrior::from_physics(&PhysicalConfig::default(), 0.5, 2.0, 10.0)?,
            n_draws: 1000,
            burn_in: 100,
            mc_samples: 100,
            whitebox_mode: WhiteboxMode::RefitPerSubset,
            seed: 3,
        },
    )?;
    for r in &rows {
        println!(
            "target {:4.0}% -> {:6.2}%  {:>14}  NMSE {:?}",
            r.target_percent, r.coverage_percent, r.model_name, r.nmse
        );
    }
    write_sweep_file(&rows, "coverage_sweep.csv")?;
    Ok(())
}
