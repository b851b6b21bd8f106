//! Calibrates Morison's equation on a synthetic record with the Gibbs sampler
//! and prints posterior summaries of the grouped coefficients.

use morison_greybox::dataset::{synthesize, SyntheticConfig, SyntheticResidual};
use morison_greybox::metrics::nmse;
use morison_greybox::whitebox::{fit_whitebox, predict_whitebox, NigPrior, PhysicalConfig};

fn main() -> morison_greybox::Result<()> {
    let ds = synthesize(&SyntheticConfig {
        n_points: 1500,
        residual: SyntheticResidual::None,
        noise_std: 2.0,
        seed: 4,
        ..Default::default()
    })?;
    let prior = NigPrior::from_physics(&PhysicalConfig::default(), 0.5, 2.0, 10.0)?;
    let post = fit_whitebox(&ds, &prior, 5000, 500, 11)?;

    let m = post.mean_beta();
    for (k, name) in ["cd'", "cm'"].iter().enumerate() {
        println!(
            "{name}: mean {:.3}, 95% interval [{:.3}, {:.3}]",
            m[k],
            post.beta_quantile(k, 0.025),
            post.beta_quantile(k, 0.975)
        );
    }
    println!("noise variance: {:.4}", post.mean_sigma_n_sq());

    let p = predict_whitebox(&post, ds.u(), ds.udot(), true)?;
    println!("in-sample NMSE: {:.4}%", nmse(ds.f(), &p.mean)?);
    Ok(())
}
