//! QPSO on the 10-d sphere with repeat runs and a stability check.

use morison_greybox::qpso::{qpso_minimize, stability_report, QpsoConfig};

fn main() -> morison_greybox::Result<()> {
    let mut cfg = QpsoConfig::new(10, 200, 1e-10).with_uniform_bounds(10, -5.0, 5.0);
    cfg.max_iters = 500;
    cfg.n_repeat_runs = 3;
    cfg.seed = 42;
    let r = qpso_minimize(|x: &[f64]| x.iter().map(|v| v * v).sum(), &cfg)?;
    for (i, run) in r.runs.iter().enumerate() {
        println!("run {i}: cost {:.3e} after {} iterations", run.cost, run.iterations);
    }
    let v = stability_report(&r, 1e-3, 1e-6);
    println!("stable: {} (max cost gap {:.2e})", v.stable, v.max_cost_gap);
    Ok(())
}
