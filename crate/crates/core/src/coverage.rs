//! Input-space coverage: how much of the test set's `(U, Udot)` boundary is
//! enclosed by both the training and validation boundaries.
//!
//! Boundaries are star polygons about the origin with one vertex per angular
//! bin at the largest point radius in that bin. Areas are measured by
//! rasterizing on a shared grid over the test boundary.

use std::f64::consts::PI;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{fmt_f64, LagSpec, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::greybox::{predict_blackbox, predict_greybox, train_augmented, train_blackbox, train_residual, BlackBoxConfig, ForecastMode};
use crate::metrics::{msll, nmse};
use crate::predictive::PredictiveSeries;
use crate::seed::derive_seed;
use crate::whitebox::{fit_whitebox, predict_whitebox, MorisonPosterior, NigPrior};

pub const DEFAULT_BINS: usize = 360;
pub const DEFAULT_GRID: usize = 512;

/// How bins without points get a radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "bins")]
pub enum EmptyBinFill {
    /// Radius is the largest raw radius within this many bins either side;
    /// bins further from any point stay at 0.
    Neighbours(usize),
    /// Radius of the angularly nearest non-empty bin.
    Nearest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundaryOptions {
    pub n_bins: usize,
    pub fill: EmptyBinFill,
    /// Drop points whose radius exceeds this quantile of all radii.
    pub radius_quantile: Option<f64>,
}

impl Default for BoundaryOptions {
    fn default() -> Self {
        Self {
            n_bins: DEFAULT_BINS,
            fill: EmptyBinFill::Neighbours(1),
            radius_quantile: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialBoundary {
    pub center: [f64; 2],
    /// Bin-centre angles in `[0, 2π)`.
    pub angles: Vec<f64>,
    pub radii: Vec<f64>,
}

fn bin_of(angle: f64, n: usize) -> usize {
    let a = angle.rem_euclid(2.0 * PI);
    ((a / (2.0 * PI) * n as f64) as usize).min(n - 1)
}

fn bin_centres(n: usize) -> Vec<f64> {
    (0..n).map(|k| (k as f64 + 0.5) * 2.0 * PI / n as f64).collect()
}

impl RadialBoundary {
    /// Boundary enclosing only the center.
    pub fn empty(n_bins: usize) -> Self {
        Self {
            center: [0.0, 0.0],
            angles: bin_centres(n_bins),
            radii: vec![0.0; n_bins],
        }
    }

    pub fn n_bins(&self) -> usize {
        self.radii.len()
    }

    pub fn max_radius(&self) -> f64 {
        self.radii.iter().fold(0.0, |a, b| a.max(*b))
    }

    /// Distance from the center to the polygon edge along direction `angle`.
    pub fn radius_at(&self, angle: f64) -> f64 {
        let n = self.n_bins();
        let step = 2.0 * PI / n as f64;
        let a = angle.rem_euclid(2.0 * PI);
        // vertex k sits at (k + ½)·step; find the edge (k, k+1) spanning `a`
        let pos = a / step - 0.5;
        let k = pos.floor();
        let frac = pos - k;
        let k0 = (k as i64).rem_euclid(n as i64) as usize;
        let k1 = (k0 + 1) % n;
        let (r0, r1) = (self.radii[k0], self.radii[k1]);
        if r0 == 0.0 || r1 == 0.0 {
            return 0.0;
        }
        let a0 = frac * step;
        let a1 = step - a0;
        step.sin() / (a0.sin() / r1 + a1.sin() / r0)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let dx = x - self.center[0];
        let dy = y - self.center[1];
        let r = dx.hypot(dy);
        r == 0.0 || r <= self.radius_at(dy.atan2(dx))
    }

    pub fn vertices(&self) -> Vec<[f64; 2]> {
        self.angles
            .iter()
            .zip(&self.radii)
            .map(|(a, r)| [self.center[0] + r * a.cos(), self.center[1] + r * a.sin()])
            .collect()
    }

    /// Exact polygon area (shoelace).
    pub fn polygon_area(&self) -> f64 {
        let v = self.vertices();
        let n = v.len();
        let mut s = 0.0;
        for i in 0..n {
            let j = (i + 1) % n;
            s += v[i][0] * v[j][1] - v[j][0] * v[i][1];
        }
        0.5 * s.abs()
    }

    /// `label,bin,angle,radius,x,y` rows.
    pub fn write_vertices<W: Write + ?Sized>(&self, w: &mut W, label: &str) -> std::io::Result<()> {
        for (k, (a, r)) in self.angles.iter().zip(&self.radii).enumerate() {
            let [x, y] = [self.center[0] + r * a.cos(), self.center[1] + r * a.sin()];
            writeln!(w, "{label},{k},{},{},{},{}", fmt_f64(*a), fmt_f64(*r), fmt_f64(x), fmt_f64(y))?;
        }
        Ok(())
    }
}

/// Radial boundary about the origin with default options.
pub fn radial_boundary(points: &[[f64; 2]], n_bins: usize) -> Result<RadialBoundary> {
    radial_boundary_with(
        points,
        &BoundaryOptions {
            n_bins,
            ..Default::default()
        },
    )
}

pub fn radial_boundary_with(points: &[[f64; 2]], opts: &BoundaryOptions) -> Result<RadialBoundary> {
    if points.len() < 3 {
        return Err(Error::Degenerate(format!(
            "a boundary needs at least 3 points, got {}",
            points.len()
        )));
    }
    if points.iter().all(|p| p[0] == 0.0 && p[1] == 0.0) {
        return Err(Error::Degenerate("all points lie at the center".into()));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite boundary point".into()));
    }
    Ok(boundary_unchecked(points, opts))
}

fn boundary_unchecked(points: &[[f64; 2]], opts: &BoundaryOptions) -> RadialBoundary {
    let n = opts.n_bins.max(3);
    let mut raw = vec![f64::NAN; n];
    let cutoff = opts.radius_quantile.map(|q| {
        let mut r: Vec<f64> = points.iter().map(|p| p[0].hypot(p[1])).collect();
        r.sort_by(f64::total_cmp);
        r[((q.clamp(0.0, 1.0) * (r.len() - 1) as f64).round()) as usize]
    });
    for p in points {
        let r = p[0].hypot(p[1]);
        if r == 0.0 || cutoff.is_some_and(|c| r > c) {
            continue;
        }
        let k = bin_of(p[1].atan2(p[0]), n);
        if raw[k].is_nan() || r > raw[k] {
            raw[k] = r;
        }
    }
    let radii = match opts.fill {
        EmptyBinFill::Neighbours(reach) => (0..n)
            .map(|k| {
                let reach = reach.min(n / 2) as i64;
                (-reach..=reach)
                    .map(|o| raw[(k as i64 + o).rem_euclid(n as i64) as usize])
                    .filter(|r| !r.is_nan())
                    .fold(0.0, f64::max)
            })
            .collect(),
        EmptyBinFill::Nearest => (0..n)
            .map(|k| {
                if !raw[k].is_nan() {
                    return raw[k];
                }
                for d in 1..=n / 2 {
                    let a = raw[(k + d) % n];
                    let b = raw[(k + n - d) % n];
                    match (a.is_nan(), b.is_nan()) {
                        (false, false) => return a.max(b),
                        (false, true) => return a,
                        (true, false) => return b,
                        _ => {}
                    }
                }
                0.0
            })
            .collect(),
    };
    RadialBoundary {
        center: [0.0, 0.0],
        angles: bin_centres(n),
        radii,
    }
}

/// Boundary of a possibly tiny point set: fewer than 3 points or points only
/// at the center give the empty boundary.
fn boundary_lenient(points: &[[f64; 2]], opts: &BoundaryOptions) -> RadialBoundary {
    if points.len() < 3 || points.iter().all(|p| p[0] == 0.0 && p[1] == 0.0) {
        RadialBoundary::empty(opts.n_bins.max(3))
    } else {
        boundary_unchecked(points, opts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoverageOptions {
    pub boundary: BoundaryOptions,
    /// Raster cells per side of the square grid over the test boundary.
    pub grid_resolution: usize,
}

impl Default for CoverageOptions {
    fn default() -> Self {
        Self {
            boundary: BoundaryOptions::default(),
            grid_resolution: DEFAULT_GRID,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageResult {
    pub coverage_percent: f64,
    pub area_test: f64,
    pub area_overlap: f64,
}

/// Polar coordinates of raster cell centres inside the test boundary.
struct TestRaster {
    cells: Vec<(f64, f64)>,
    cell_area: f64,
}

impl TestRaster {
    fn new(test: &RadialBoundary, resolution: usize) -> Result<Self> {
        let r = test.max_radius();
        if !(r > 0.0) || resolution == 0 {
            return Err(Error::Degenerate("test boundary encloses no area".into()));
        }
        let h = 2.0 * r / resolution as f64;
        let mut cells = Vec::new();
        for i in 0..resolution {
            let y = -r + (i as f64 + 0.5) * h;
            for j in 0..resolution {
                let x = -r + (j as f64 + 0.5) * h;
                let rad = x.hypot(y);
                let ang = y.atan2(x);
                if rad <= test.radius_at(ang) {
                    cells.push((rad, ang));
                }
            }
        }
        if cells.is_empty() {
            return Err(Error::Degenerate("test boundary smaller than one raster cell".into()));
        }
        Ok(Self {
            cells,
            cell_area: h * h,
        })
    }

    fn coverage(&self, a: &RadialBoundary, b: &RadialBoundary) -> CoverageResult {
        let inside = self
            .cells
            .iter()
            .filter(|(r, t)| *r <= a.radius_at(*t) && *r <= b.radius_at(*t))
            .count();
        CoverageResult {
            coverage_percent: 100.0 * inside as f64 / self.cells.len() as f64,
            area_test: self.cells.len() as f64 * self.cell_area,
            area_overlap: inside as f64 * self.cell_area,
        }
    }
}

/// Coverage of `test` by `train ∩ val`, in percent of the test boundary
/// area.
pub fn compute_coverage(
    train: &[[f64; 2]],
    val: &[[f64; 2]],
    test: &[[f64; 2]],
    opts: &CoverageOptions,
) -> Result<CoverageResult> {
    let b = &opts.boundary;
    let tb = radial_boundary_with(test, b)?;
    let trb = radial_boundary_with(train, b)?;
    let vb = radial_boundary_with(val, b)?;
    Ok(TestRaster::new(&tb, opts.grid_resolution)?.coverage(&trb, &vb))
}

/// `(U, Udot)` pairs of a dataset.
pub fn input_points(ds: &TimeSeriesDataset) -> Vec<[f64; 2]> {
    ds.u().iter().zip(ds.udot()).map(|(u, a)| [*u, *a]).collect()
}

/// Prefixes of the training and validation sets chosen to hit a coverage
/// target.
#[derive(Debug, Clone)]
pub struct Subsample {
    pub train: TimeSeriesDataset,
    pub val: TimeSeriesDataset,
    pub target_percent: f64,
    pub achieved_percent: f64,
    /// Whether `|achieved − target| ≤ tolerance`.
    pub reached: bool,
}

/// Grows equal-proportion prefixes of `full_train` and `full_val` and binary
/// searches the prefix length whose coverage of `test` is closest to
/// `target_percent`. Coverage never decreases as prefixes grow.
pub fn subsample_for_coverage(
    full_train: &TimeSeriesDataset,
    full_val: &TimeSeriesDataset,
    test: &TimeSeriesDataset,
    target_percent: f64,
    tolerance: f64,
    opts: &CoverageOptions,
) -> Result<Subsample> {
    if !(0.0..=100.0).contains(&target_percent) {
        return Err(Error::Config(format!("coverage target {target_percent} outside [0, 100]")));
    }
    let tb = radial_boundary_with(&input_points(test), &opts.boundary)?;
    let raster = TestRaster::new(&tb, opts.grid_resolution)?;
    let tr_pts = input_points(full_train);
    let va_pts = input_points(full_val);
    let steps = tr_pts.len().max(va_pts.len());
    let sizes = |k: usize| -> (usize, usize) {
        if steps == 0 {
            return (0, 0);
        }
        let f = |n: usize| ((k as f64 * n as f64 / steps as f64).round() as usize).min(n);
        (f(tr_pts.len()), f(va_pts.len()))
    };
    let cov = |k: usize| -> f64 {
        let (a, b) = sizes(k);
        let ba = boundary_lenient(&tr_pts[..a], &opts.boundary);
        let bb = boundary_lenient(&va_pts[..b], &opts.boundary);
        raster.coverage(&ba, &bb).coverage_percent
    };

    // smallest k with cov(k) ≥ target
    let full = cov(steps);
    let (k, achieved) = if full < target_percent {
        (steps, full)
    } else {
        let (mut lo, mut hi) = (0usize, steps);
        let mut hi_cov = full;
        let lo_cov = cov(0);
        if lo_cov >= target_percent {
            hi = 0;
            hi_cov = lo_cov;
        }
        while hi > lo + 1 && hi > 0 {
            let mid = lo + (hi - lo) / 2;
            let c = cov(mid);
            if c >= target_percent {
                hi = mid;
                hi_cov = c;
            } else {
                lo = mid;
            }
        }
        if hi > 0 {
            let below = cov(hi - 1);
            if (target_percent - below).abs() < (hi_cov - target_percent).abs() {
                (hi - 1, below)
            } else {
                (hi, hi_cov)
            }
        } else {
            (0, hi_cov)
        }
    };
    let (a, b) = sizes(k);
    Ok(Subsample {
        train: full_train.prefix(a)?,
        val: full_val.prefix(b)?,
        target_percent,
        achieved_percent: achieved,
        reached: (achieved - target_percent).abs() <= tolerance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WhiteboxMode {
    /// White-box refit from the prior on each training subset.
    RefitPerSubset,
    /// One white-box fitted on the full validation set, kept for every
    /// coverage level.
    FixedExternal,
}

impl WhiteboxMode {
    pub fn label(self) -> &'static str {
        match self {
            WhiteboxMode::RefitPerSubset => "refit-per-subset",
            WhiteboxMode::FixedExternal => "fixed-external",
        }
    }
}

/// Models evaluated at each coverage level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepModel {
    Whitebox,
    Blackbox,
    Residual,
    Augmented,
}

impl SweepModel {
    pub fn name(self) -> &'static str {
        match self {
            SweepModel::Whitebox => "whitebox",
            SweepModel::Blackbox => "blackbox",
            SweepModel::Residual => "grey-residual",
            SweepModel::Augmented => "grey-augmented",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Ascending coverage targets in percent.
    pub targets: Vec<f64>,
    pub tolerance: f64,
    pub coverage: CoverageOptions,
    pub spec: LagSpec,
    pub blackbox: BlackBoxConfig,
    pub prior: NigPrior,
    pub n_draws: usize,
    pub burn_in: usize,
    pub mc_samples: usize,
    pub whitebox_mode: WhiteboxMode,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub target_percent: f64,
    pub coverage_percent: f64,
    pub reached: bool,
    pub model_name: String,
    pub whitebox_mode: WhiteboxMode,
    pub nmse: Option<f64>,
    pub msll: Option<f64>,
    pub n_train: usize,
    pub n_val: usize,
    pub error: Option<String>,
}

pub const SWEEP_HEADER: &str =
    "coverage_percent,model_name,nmse,msll,n_train,n_val,target_percent,reached,whitebox_mode,error";

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], w: &mut W) -> std::io::Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            fmt_f64(r.coverage_percent),
            r.model_name,
            opt(r.nmse),
            opt(r.msll),
            r.n_train,
            r.n_val,
            fmt_f64(r.target_percent),
            r.reached,
            r.whitebox_mode.label(),
            r.error.as_deref().unwrap_or("").replace([',', '\n'], ";"),
        )?;
    }
    Ok(())
}

pub fn write_sweep_file(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_sweep_csv(rows, &mut f).map_err(|e| Error::io(path, e))
}

/// Train, validation and test splits of a sweep.
#[derive(Debug, Clone, Copy)]
pub struct SweepSplits<'a> {
    pub train: &'a TimeSeriesDataset,
    pub val: &'a TimeSeriesDataset,
    pub test: &'a TimeSeriesDataset,
}

fn score(
    test: &TimeSeriesDataset,
    pred: &PredictiveSeries,
    start: usize,
    baseline: (f64, f64),
) -> Result<(f64, f64)> {
    let p = pred.aligned_to(start)?;
    let y = &test.f()[start..];
    let e = nmse(y, &p.mean)?;
    let l = msll(y, &p.mean, &p.variance, baseline.0, baseline.1)?;
    Ok((e, l))
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n)
}

fn evaluate_model(
    model: SweepModel,
    sub: &Subsample,
    whitebox: &MorisonPosterior,
    test: &TimeSeriesDataset,
    cfg: &SweepConfig,
    baseline: (f64, f64),
) -> Result<(f64, f64)> {
    let start = cfg.spec.max_lag();
    let seed = derive_seed(cfg.seed, &format!("{}-{}", model.name(), sub.target_percent));
    let mode = ForecastMode::McMpo;
    let pred = match model {
        SweepModel::Whitebox => predict_whitebox(whitebox, test.u(), test.udot(), true)?,
        SweepModel::Blackbox => {
            let fit = train_blackbox(&sub.train, &sub.val, cfg.spec, &with_seed(&cfg.blackbox, seed))?;
            predict_blackbox(&fit.model, test, mode, cfg.mc_samples, seed)?.summary()
        }
        SweepModel::Residual => {
            let (g, _) = train_residual(&sub.train, &sub.val, whitebox, cfg.spec, &with_seed(&cfg.blackbox, seed))?;
            predict_greybox(&g, test, mode, cfg.mc_samples, seed)?.summary()
        }
        SweepModel::Augmented => {
            let (g, _) = train_augmented(&sub.train, &sub.val, whitebox, cfg.spec, &with_seed(&cfg.blackbox, seed))?;
            predict_greybox(&g, test, mode, cfg.mc_samples, seed)?.summary()
        }
    };
    score(test, &pred, start, baseline)
}

fn with_seed(cfg: &BlackBoxConfig, seed: u64) -> BlackBoxConfig {
    let mut c = cfg.clone();
    c.narx_optimizer.seed = seed;
    c.static_optimizer.seed = derive_seed(seed, "static");
    c
}

/// For each coverage target: subsample train/val, train every model and
/// score its MC-MPO prediction (white-box: posterior predictive) on the test
/// set after the warm-up lags. MSLL uses the full training force mean and
/// variance as baseline. Failed cells carry their error message.
pub fn coverage_sweep(splits: SweepSplits<'_>, models: &[SweepModel], cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    if cfg.targets.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Config("coverage targets must be ascending".into()));
    }
    if models.is_empty() {
        return Err(Error::Config("no models to sweep".into()));
    }
    if splits.test.len() <= cfg.spec.max_lag() + 1 {
        return Err(Error::Bounds("test set shorter than the warm-up lags".into()));
    }
    let baseline = mean_var(splits.train.f());
    let external = match cfg.whitebox_mode {
        WhiteboxMode::FixedExternal => Some(fit_whitebox(
            splits.val,
            &cfg.prior,
            cfg.n_draws,
            cfg.burn_in,
            derive_seed(cfg.seed, "whitebox-external"),
        )?),
        WhiteboxMode::RefitPerSubset => None,
    };
    let subsets: Vec<Subsample> = cfg
        .targets
        .iter()
        .map(|&t| subsample_for_coverage(splits.train, splits.val, splits.test, t, cfg.tolerance, &cfg.coverage))
        .collect::<Result<_>>()?;

    let cells: Vec<(usize, SweepModel)> = (0..subsets.len())
        .flat_map(|i| models.iter().map(move |m| (i, *m)))
        .collect();
    let whiteboxes: Vec<Result<MorisonPosterior>> = subsets
        .iter()
        .map(|s| match &external {
            Some(w) => Ok(w.clone()),
            None => fit_whitebox(
                &s.train,
                &cfg.prior,
                cfg.n_draws,
                cfg.burn_in,
                derive_seed(cfg.seed, &format!("whitebox-{}", s.target_percent)),
            ),
        })
        .collect();

    let rows = cells
        .par_iter()
        .map(|&(i, model)| {
            let sub = &subsets[i];
            let result = whiteboxes[i]
                .as_ref()
                .map_err(|e| Error::Degenerate(e.to_string()))
                .and_then(|wb| evaluate_model(model, sub, wb, splits.test, cfg, baseline));
            let (nmse_v, msll_v, error) = match result {
                Ok((e, l)) => (Some(e), Some(l), None),
                Err(e) => (None, None, Some(e.to_string())),
            };
            SweepRow {
                target_percent: sub.target_percent,
                coverage_percent: sub.achieved_percent,
                reached: sub.reached,
                model_name: model.name().to_string(),
                whitebox_mode: cfg.whitebox_mode,
                nmse: nmse_v,
                msll: msll_v,
                n_train: sub.train.len(),
                n_val: sub.val.len(),
                error,
            }
        })
        .collect();
    Ok(rows)
}
