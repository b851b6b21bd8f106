//! Writes a synthetic irregular-sea record to `synthetic.csv` and reads it back.

use morison_greybox::dataset::{load_csv, synthesize, SyntheticConfig, WaveComponent};

fn main() -> morison_greybox::Result<()> {
    let cfg = SyntheticConfig {
        n_points: 2000,
        components: WaveComponent::irregular_sea(16, 0.05, 0.8, 0.5, 7),
        noise_std: 1.0,
        seed: 7,
        ..Default::default()
    };
    let ds = synthesize(&cfg)?;
    ds.write_csv("synthetic.csv")?;
    let back = load_csv("synthetic.csv")?;
    assert_eq!(back.len(), ds.len());
    let peak = ds.f().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    println!("{} samples at {} Hz, peak |F| {peak:.1}", ds.len(), ds.sample_rate_hz());
    Ok(())
}
