use nalgebra::DMatrix;

use morison_greybox::gp::{gp_fit, gp_predict, GpHyperparams};

fn main() -> morison_greybox::Result<()> {
    let xs: Vec<f64> = (0..25).map(|i| i as f64 * 0.25).collect();
    let ys: Vec<f64> = xs.iter().map(|x| x.sin() + 0.3 * x).collect();
    let x = DMatrix::from_column_slice(xs.len(), 1, &xs);

    let model = gp_fit(&x, &ys, GpHyperparams::new(1.0, vec![0.8], 1e-3)?)?;
    let grid: Vec<f64> = (0..9).map(|i| i as f64 * 0.8 - 0.4).collect();
    let pred = gp_predict(&model, &DMatrix::from_column_slice(grid.len(), 1, &grid), false)?;

    println!("{:>6} {:>9} {:>9} {:>8}", "x", "truth", "mean", "std");
    for (i, g) in grid.iter().enumerate() {
        println!(
            "{g:>6.2} {:>9.4} {:>9.4} {:>8.4}",
            g.sin() + 0.3 * g,
            pred.mean[i],
            pred.variance[i].sqrt()
        );
    }
    Ok(())
}
