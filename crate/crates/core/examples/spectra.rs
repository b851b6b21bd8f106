use morison_greybox::dataset::{split_sequential, synthesize, SyntheticConfig};
use morison_greybox::metrics::spectra_comparison;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = synthesize(&SyntheticConfig {
        n_points: 3000,
        seed: 6,
        ..Default::default()
    })?;
    let (train, val, test) = split_sequential(&ds, [1000, 1000, 1000])?;
    let cmp = spectra_comparison(&[("train", &train), ("val", &val), ("test", &test)], 16)?;
    let mut out = std::io::stdout();
    println!("# Pearson");
    cmp.write_pearson_table(&mut out)?;
    println!("# cosine");
    cmp.write_cosine_table(&mut out)?;
    Ok(())
}
