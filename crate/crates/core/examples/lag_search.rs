//! ARX lag search on a synthetic record. Writes the information-criterion
//! heatmap to `lagsearch_heatmap.csv` in the working directory.

use morison_greybox::arx::{lag_search, LagMetric};
use morison_greybox::dataset::{synthesize, SyntheticConfig};

fn main() -> morison_greybox::Result<()> {
    let ds = synthesize(&SyntheticConfig {
        n_points: 2000,
        seed: 2,
        ..Default::default()
    })?;
    let (train, val) = (ds.slice(0..1000)?, ds.slice(1000..2000)?);
    let res = lag_search(&train, &val, 8, 8)?;
    for metric in LagMetric::ALL {
        println!("{:>16}: {}", metric.name(), res.best(metric));
    }
    res.write_heatmap_csv("lagsearch_heatmap.csv")?;
    Ok(())
}
