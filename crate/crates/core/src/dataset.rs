//! Force/kinematics time series: ingestion, validation, splitting, lag
//! embedding and a synthetic generator.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const GRID_REL_TOL: f64 = 1e-9;

/// Uniformly sampled particle velocity, acceleration and measured force.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    t: Vec<f64>,
    u: Vec<f64>,
    udot: Vec<f64>,
    f: Vec<f64>,
    sample_rate_hz: f64,
}

impl TimeSeriesDataset {
    /// Builds a dataset from explicit time stamps, inferring the sample rate
    /// from the spacing of `t`.
    pub fn new(t: Vec<f64>, u: Vec<f64>, udot: Vec<f64>, f: Vec<f64>) -> Result<Self> {
        if t.len() < 2 {
            return Err(Error::Grid(
                "at least two samples are needed to infer the sample rate".into(),
            ));
        }
        let dt = t[1] - t[0];
        if !(dt > 0.0) {
            return Err(Error::Grid(format!("time step {dt} is not positive")));
        }
        let ds = Self {
            sample_rate_hz: 1.0 / dt,
            t,
            u,
            udot,
            f,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Builds a dataset on the grid `t0 + i / sample_rate_hz`.
    pub fn from_uniform(
        u: Vec<f64>,
        udot: Vec<f64>,
        f: Vec<f64>,
        sample_rate_hz: f64,
        t0: f64,
    ) -> Result<Self> {
        if !(sample_rate_hz > 0.0) || !sample_rate_hz.is_finite() {
            return Err(Error::Config(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        let t = (0..u.len())
            .map(|i| t0 + i as f64 / sample_rate_hz)
            .collect();
        let ds = Self {
            t,
            u,
            udot,
            f,
            sample_rate_hz,
        };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        let n = self.t.len();
        if n == 0 {
            return Err(Error::Bounds("dataset must hold at least one sample".into()));
        }
        for (name, ch) in [("U", &self.u), ("Udot", &self.udot), ("F", &self.f)] {
            if ch.len() != n {
                return Err(Error::shape(
                    format!("{n} samples in channel {name}"),
                    ch.len(),
                ));
            }
        }
        for i in 0..n {
            for (name, v) in [
                ("t", self.t[i]),
                ("U", self.u[i]),
                ("Udot", self.udot[i]),
                ("F", self.f[i]),
            ] {
                if !v.is_finite() {
                    return Err(Error::Data {
                        row: i + 1,
                        message: format!("non-finite value in column {name}"),
                    });
                }
            }
        }
        let dt = 1.0 / self.sample_rate_hz;
        for i in 1..n {
            let step = self.t[i] - self.t[i - 1];
            let tol = GRID_REL_TOL * dt + 8.0 * f64::EPSILON * self.t[i].abs();
            if (step - dt).abs() > tol {
                return Err(Error::Grid(format!(
                    "non-uniform time step {step} at row {} (expected {dt})",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn udot(&self) -> &[f64] {
        &self.udot
    }

    pub fn f(&self) -> &[f64] {
        &self.f
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn channel(&self, channel: Channel) -> &[f64] {
        match channel {
            Channel::U => &self.u,
            Channel::Udot => &self.udot,
            Channel::F => &self.f,
        }
    }

    /// Contiguous sub-range of the dataset. An empty range yields an empty
    /// dataset, which is only meaningful as a zero-data training set.
    pub fn slice(&self, range: Range<usize>) -> Result<Self> {
        if range.start > range.end || range.end > self.len() {
            return Err(Error::Bounds(format!(
                "range {range:?} outside dataset of length {}",
                self.len()
            )));
        }
        Ok(Self {
            t: self.t[range.clone()].to_vec(),
            u: self.u[range.clone()].to_vec(),
            udot: self.udot[range.clone()].to_vec(),
            f: self.f[range].to_vec(),
            sample_rate_hz: self.sample_rate_hz,
        })
    }

    /// First `n` samples (possibly empty).
    pub fn prefix(&self, n: usize) -> Result<Self> {
        self.slice(0..n)
    }

    /// Same kinematics with a replacement force channel.
    pub fn with_force(&self, f: Vec<f64>) -> Result<Self> {
        if f.len() != self.len() {
            return Err(Error::shape(self.len(), f.len()));
        }
        if let Some(row) = f.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data {
                row: row + 1,
                message: "non-finite replacement force".into(),
            });
        }
        Ok(Self {
            f,
            ..self.clone()
        })
    }

    /// Writes the canonical `t,U,Udot,F` CSV.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(file)
    }

    pub fn write_csv_to<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "U", "Udot", "F"])?;
        for i in 0..self.len() {
            w.write_record(&[
                fmt_f64(self.t[i]),
                fmt_f64(self.u[i]),
                fmt_f64(self.udot[i]),
                fmt_f64(self.f[i]),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// Shortest representation that round-trips exactly.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Named data channel of a [`TimeSeriesDataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Channel {
    U,
    Udot,
    F,
}

impl Channel {
    pub fn label(self) -> &'static str {
        match self {
            Channel::U => "U",
            Channel::Udot => "Udot",
            Channel::F => "F",
        }
    }
}

/// Reads a `t,U,Udot,F` CSV file (header names are case-insensitive and may
/// appear in any order; extra columns are ignored).
pub fn load_csv(path: impl AsRef<Path>) -> Result<TimeSeriesDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file)
}

pub fn read_csv<R: Read>(reader: R) -> Result<TimeSeriesDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Schema(format!("missing column \"{name}\"")))
    };
    let cols = [find("t")?, find("U")?, find("Udot")?, find("F")?];
    let names = ["t", "U", "Udot", "F"];

    let mut channels: [Vec<f64>; 4] = Default::default();
    for (idx, record) in rdr.records().enumerate() {
        let row = idx + 1;
        let record = record?;
        for (k, &col) in cols.iter().enumerate() {
            let cell = record.get(col).ok_or_else(|| Error::Data {
                row,
                message: format!("missing cell for column {}", names[k]),
            })?;
            let v: f64 = cell.parse().map_err(|_| Error::Data {
                row,
                message: format!("cannot parse {cell:?} in column {}", names[k]),
            })?;
            if !v.is_finite() {
                return Err(Error::Data {
                    row,
                    message: format!("non-finite value {cell:?} in column {}", names[k]),
                });
            }
            channels[k].push(v);
        }
    }
    let [t, u, udot, f] = channels;
    TimeSeriesDataset::new(t, u, udot, f)
}

/// Splits off three contiguous, order-preserving subsets from the start of
/// `ds`.
pub fn split_sequential(
    ds: &TimeSeriesDataset,
    sizes: [usize; 3],
) -> Result<(TimeSeriesDataset, TimeSeriesDataset, TimeSeriesDataset)> {
    if sizes.contains(&0) {
        return Err(Error::Bounds(format!("split sizes must be ≥ 1, got {sizes:?}")));
    }
    let total: usize = sizes.iter().sum();
    if total > ds.len() {
        return Err(Error::Bounds(format!(
            "split sizes {sizes:?} need {total} samples but dataset has {}",
            ds.len()
        )));
    }
    let a = sizes[0];
    let b = a + sizes[1];
    Ok((ds.slice(0..a)?, ds.slice(a..b)?, ds.slice(b..total)?))
}

/// Exogenous (`lu`) and autoregressive (`ly`) lag counts. `ly == 0` is a
/// static model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LagSpec {
    pub lu: usize,
    pub ly: usize,
}

impl LagSpec {
    pub fn new(lu: usize, ly: usize) -> Self {
        Self { lu, ly }
    }

    /// Number of leading samples consumed as lag history.
    pub fn max_lag(&self) -> usize {
        self.lu.max(self.ly)
    }

    /// Embedding width for `n_exogenous` exogenous channels.
    pub fn design_dim(&self, n_exogenous: usize) -> usize {
        n_exogenous * (self.lu + 1) + self.ly
    }

    pub fn is_static(&self) -> bool {
        self.ly == 0
    }
}

impl std::fmt::Display for LagSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(l_u={}, l_y={})", self.lu, self.ly)
    }
}

/// Exogenous channels plus an output series, the raw material of a NARX
/// embedding.
#[derive(Debug, Clone)]
pub struct NarxSeries {
    pub exogenous: Vec<Vec<f64>>,
    pub exogenous_labels: Vec<String>,
    pub output: Vec<f64>,
    pub output_label: String,
}

impl NarxSeries {
    /// `U` and `Udot` as exogenous inputs, `target` as output.
    pub fn from_dataset(ds: &TimeSeriesDataset, target: Channel) -> Self {
        Self {
            exogenous: vec![ds.u().to_vec(), ds.udot().to_vec()],
            exogenous_labels: vec!["U".into(), "Udot".into()],
            output: ds.channel(target).to_vec(),
            output_label: target.label().to_string(),
        }
    }

    pub fn len(&self) -> usize {
        self.output.len()
    }

    pub fn is_empty(&self) -> bool {
        self.output.is_empty()
    }

    pub fn n_exogenous(&self) -> usize {
        self.exogenous.len()
    }

    /// Appends another exogenous channel.
    pub fn with_exogenous(mut self, label: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.len() {
            return Err(Error::shape(self.len(), values.len()));
        }
        self.exogenous.push(values);
        self.exogenous_labels.push(label.into());
        Ok(self)
    }

    pub fn with_output(mut self, label: impl Into<String>, output: Vec<f64>) -> Result<Self> {
        if output.len() != self.len() {
            return Err(Error::shape(self.len(), output.len()));
        }
        self.output = output;
        self.output_label = label.into();
        Ok(self)
    }

    /// Writes the embedding row for time `t` into `row`, reading lagged
    /// outputs from `lagged_output` (the measured output for OSA, fed-back
    /// predictions for MPO).
    pub(crate) fn fill_row(&self, spec: LagSpec, t: usize, lagged_output: &[f64], row: &mut [f64]) {
        let mut k = 0;
        for ch in &self.exogenous {
            for lag in 0..=spec.lu {
                row[k] = ch[t - lag];
                k += 1;
            }
        }
        for lag in 1..=spec.ly {
            row[k] = lagged_output[t - lag];
            k += 1;
        }
    }

    pub(crate) fn column_labels(&self, spec: LagSpec) -> Vec<String> {
        let mut labels = Vec::with_capacity(spec.design_dim(self.n_exogenous()));
        for name in &self.exogenous_labels {
            for lag in 0..=spec.lu {
                labels.push(lag_label(name, lag));
            }
        }
        for lag in 1..=spec.ly {
            labels.push(lag_label(&self.output_label, lag));
        }
        labels
    }
}

fn lag_label(name: &str, lag: usize) -> String {
    if lag == 0 {
        format!("{name}_t")
    } else {
        format!("{name}_t-{lag}")
    }
}

/// Lag-embedded regression problem.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub rows: DMatrix<f64>,
    pub targets: Vec<f64>,
    pub column_labels: Vec<String>,
    /// Index in the source series of the first target.
    pub first_valid_index: usize,
}

impl DesignMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.nrows()
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }
}

/// Builds the NARX embedding
/// `[x1_t..x1_{t-lu}, x2_t..x2_{t-lu}, .., y_{t-1}..y_{t-ly}] -> y_t`.
///
/// An empty series yields an empty design (zero rows).
pub fn build_narx_design(series: &NarxSeries, spec: LagSpec) -> Result<DesignMatrix> {
    let n = series.len();
    for (label, ch) in series.exogenous_labels.iter().zip(&series.exogenous) {
        if ch.len() != n {
            return Err(Error::shape(format!("{n} samples in {label}"), ch.len()));
        }
    }
    let d = spec.design_dim(series.n_exogenous());
    let lag = spec.max_lag();
    if n > 0 && n <= lag {
        return Err(Error::Bounds(format!(
            "series of length {n} is too short for lags {spec} (needs > {lag})"
        )));
    }
    let n_eff = n.saturating_sub(lag);
    let mut rows = DMatrix::zeros(n_eff, d);
    let mut buf = vec![0.0; d];
    let mut targets = Vec::with_capacity(n_eff);
    for (r, t) in (lag..n).enumerate() {
        series.fill_row(spec, t, &series.output, &mut buf);
        for (c, v) in buf.iter().enumerate() {
            rows[(r, c)] = *v;
        }
        targets.push(series.output[t]);
    }
    Ok(DesignMatrix {
        rows,
        targets,
        column_labels: series.column_labels(spec),
        first_valid_index: lag,
    })
}

/// NARX embedding of `ds` with `U`, `Udot` as exogenous inputs and `target`
/// as the autoregressed output.
pub fn build_lagged_design(
    ds: &TimeSeriesDataset,
    spec: LagSpec,
    target: Channel,
) -> Result<DesignMatrix> {
    if ds.len() <= spec.max_lag() {
        return Err(Error::Bounds(format!(
            "dataset of length {} is too short for lags {spec}",
            ds.len()
        )));
    }
    build_narx_design(&NarxSeries::from_dataset(ds, target), spec)
}

/// One sinusoidal velocity component `a sin(2π f t + φ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveComponent {
    pub amplitude: f64,
    pub frequency_hz: f64,
    pub phase: f64,
}

impl WaveComponent {
    /// `n` components with equally spaced frequencies in `[f_min, f_max]`,
    /// random phases, and amplitudes scaled so the velocity standard deviation
    /// is `velocity_std`.
    pub fn irregular_sea(
        n: usize,
        f_min: f64,
        f_max: f64,
        velocity_std: f64,
        seed: u64,
    ) -> Vec<WaveComponent> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amplitude = velocity_std * (2.0 / n.max(1) as f64).sqrt();
        (0..n)
            .map(|i| {
                let frac = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
                WaveComponent {
                    amplitude,
                    frequency_hz: f_min + frac * (f_max - f_min),
                    phase: rng.random::<f64>() * 2.0 * PI,
                }
            })
            .collect()
    }
}

/// Structured force missing from Morison's equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SyntheticResidual {
    None,
    /// `r_t = ar1 r_{t-1} + ar2 r_{t-2} + gain (|U_t|³ − mean|U|³)`.
    AutoregressiveNonlinear { ar1: f64, ar2: f64, gain: f64 },
}

impl Default for SyntheticResidual {
    fn default() -> Self {
        SyntheticResidual::AutoregressiveNonlinear {
            ar1: 1.6,
            ar2: -0.7,
            gain: 6.0,
        }
    }
}

/// Generator settings for synthetic wave-loading records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_points: usize,
    pub sample_rate_hz: f64,
    pub components: Vec<WaveComponent>,
    pub true_cd_prime: f64,
    pub true_cm_prime: f64,
    pub residual: SyntheticResidual,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_points: 3000,
            sample_rate_hz: 13.25,
            components: WaveComponent::irregular_sea(12, 0.08, 0.6, 0.5, 7),
            true_cd_prime: 147.6,
            true_cm_prime: 222.67,
            residual: SyntheticResidual::default(),
            noise_std: 2.0,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_points < 10 {
            return Err(Error::Config(format!(
                "n_points must be ≥ 10, got {}",
                self.n_points
            )));
        }
        if !(self.sample_rate_hz > 0.0) || !self.sample_rate_hz.is_finite() {
            return Err(Error::Config("sample_rate_hz must be positive".into()));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(Error::Config("noise_std must be ≥ 0".into()));
        }
        if self.components.is_empty() {
            return Err(Error::Config("at least one wave component is required".into()));
        }
        let nyquist = self.sample_rate_hz / 2.0;
        for c in &self.components {
            if !(c.frequency_hz >= 0.0 && c.frequency_hz < nyquist) {
                return Err(Error::Config(format!(
                    "component frequency {} Hz outside [0, {nyquist}) Hz",
                    c.frequency_hz
                )));
            }
            if !c.amplitude.is_finite() || !c.phase.is_finite() {
                return Err(Error::Config("non-finite wave component".into()));
            }
        }
        if !self.true_cd_prime.is_finite() || !self.true_cm_prime.is_finite() {
            return Err(Error::Config("non-finite Morison coefficients".into()));
        }
        Ok(())
    }
}

/// Generates `F = cd' U|U| + cm' Udot + residual + noise` on a multi-sine
/// velocity field. Deterministic for a fixed seed.
pub fn synthesize(cfg: &SyntheticConfig) -> Result<TimeSeriesDataset> {
    cfg.validate()?;
    let n = cfg.n_points;
    let mut u = vec![0.0; n];
    let mut udot = vec![0.0; n];
    for i in 0..n {
        let t = i as f64 / cfg.sample_rate_hz;
        for c in &cfg.components {
            let w = 2.0 * PI * c.frequency_hz;
            let arg = w * t + c.phase;
            u[i] += c.amplitude * arg.sin();
            udot[i] += c.amplitude * w * arg.cos();
        }
    }
    let mut f: Vec<f64> = (0..n)
        .map(|i| cfg.true_cd_prime * u[i] * u[i].abs() + cfg.true_cm_prime * udot[i])
        .collect();

    if let SyntheticResidual::AutoregressiveNonlinear { ar1, ar2, gain } = cfg.residual {
        let cubes: Vec<f64> = u.iter().map(|v| v.abs().powi(3)).collect();
        let mean_cube = cubes.iter().sum::<f64>() / n as f64;
        let (mut r1, mut r2) = (0.0, 0.0);
        for i in 0..n {
            let r = ar1 * r1 + ar2 * r2 + gain * (cubes[i] - mean_cube);
            f[i] += r;
            r2 = r1;
            r1 = r;
        }
    }

    if cfg.noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let normal = Normal::new(0.0, cfg.noise_std).map_err(|e| Error::Config(e.to_string()))?;
        for v in f.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    TimeSeriesDataset::from_uniform(u, udot, f, cfg.sample_rate_hz, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TimeSeriesDataset {
        let n = 6;
        TimeSeriesDataset::from_uniform(
            (0..n).map(|i| i as f64).collect(),
            (0..n).map(|i| 10.0 + i as f64).collect(),
            (0..n).map(|i| 100.0 + i as f64).collect(),
            2.0,
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn three_row_csv_infers_rate() {
        let text = "t,U,Udot,F\n0.0,1,2,3\n0.5,4,5,6\n1.0,7,8,9\n";
        let ds = read_csv(text.as_bytes()).unwrap();
        assert_eq!(ds.len(), 3);
        assert!((ds.sample_rate_hz() - 2.0).abs() < 1e-12);
        assert_eq!(ds.f(), &[3.0, 6.0, 9.0]);
    }

    #[test]
    fn header_is_case_insensitive() {
        let text = "F,udot,u,T\n3,2,1,0\n6,5,4,1\n";
        let ds = read_csv(text.as_bytes()).unwrap();
        assert_eq!(ds.u(), &[1.0, 4.0]);
        assert_eq!(ds.f(), &[3.0, 6.0]);
    }

    #[test]
    fn missing_force_column_is_schema_error() {
        let text = "t,U,Udot\n0,1,2\n1,1,2\n";
        match read_csv(text.as_bytes()) {
            Err(Error::Schema(msg)) => assert!(msg.contains("\"F\""), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nan_reports_row() {
        let mut text = String::from("t,U,Udot,F\n");
        for i in 1..=9 {
            let f = if i == 7 { "NaN".to_string() } else { "1.0".to_string() };
            text.push_str(&format!("{},0,0,{f}\n", i - 1));
        }
        match read_csv(text.as_bytes()) {
            Err(Error::Data { row, .. }) => assert_eq!(row, 7),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_uniform_grid_rejected() {
        let text = "t,U,Udot,F\n0,0,0,0\n1,0,0,0\n2.5,0,0,0\n";
        assert!(matches!(read_csv(text.as_bytes()), Err(Error::Grid(_))));
    }

    #[test]
    fn split_minimal_and_bounds() {
        let ds = small().prefix(3).unwrap();
        let (a, b, c) = split_sequential(&ds, [1, 1, 1]).unwrap();
        assert_eq!((a.u()[0], b.u()[0], c.u()[0]), (0.0, 1.0, 2.0));
        assert!(matches!(
            split_sequential(&ds, [2, 1, 1]),
            Err(Error::Bounds(_))
        ));
        assert!(matches!(
            split_sequential(&ds, [0, 1, 1]),
            Err(Error::Bounds(_))
        ));
    }

    #[test]
    fn split_three_thousand() {
        let cfg = SyntheticConfig {
            n_points: 3000,
            ..Default::default()
        };
        let ds = synthesize(&cfg).unwrap();
        let (a, b, c) = split_sequential(&ds, [1000, 1000, 1000]).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (1000, 1000, 1000));
        assert_eq!(b.t()[0], ds.t()[1000]);
        assert_eq!(c.f()[999], ds.f()[2999]);
    }

    #[test]
    fn design_dimensions() {
        let ds = small();
        let d = build_lagged_design(&ds, LagSpec::new(1, 3), Channel::F).unwrap();
        assert_eq!(d.dim(), 7);
        assert_eq!(d.n_rows(), 3);
        assert_eq!(d.first_valid_index, 3);
        assert_eq!(
            d.column_labels,
            ["U_t", "U_t-1", "Udot_t", "Udot_t-1", "F_t-1", "F_t-2", "F_t-3"]
        );
        // row for t = 3
        let row: Vec<f64> = d.rows.row(0).iter().copied().collect();
        assert_eq!(row, vec![3.0, 2.0, 13.0, 12.0, 102.0, 101.0, 100.0]);
        assert_eq!(d.targets[0], 103.0);

        let s = build_lagged_design(&ds, LagSpec::new(0, 0), Channel::F).unwrap();
        assert_eq!(s.dim(), 2);
        assert_eq!(s.n_rows(), 6);
        assert_eq!(s.rows[(4, 0)], 4.0);
        assert_eq!(s.rows[(4, 1)], 14.0);

        let four = ds.prefix(4).unwrap();
        let one = build_lagged_design(&four, LagSpec::new(0, 3), Channel::F).unwrap();
        assert_eq!(one.n_rows(), 1);
        assert!(matches!(
            build_lagged_design(&ds.prefix(3).unwrap(), LagSpec::new(0, 3), Channel::F),
            Err(Error::Bounds(_))
        ));
    }

    #[test]
    fn synthetic_closed_form_point() {
        // U = sin(2π 0.1 t): U = 1, Udot = 0 at t = 2.5 s
        let cfg = SyntheticConfig {
            n_points: 40,
            sample_rate_hz: 4.0,
            components: vec![WaveComponent {
                amplitude: 1.0,
                frequency_hz: 0.1,
                phase: 0.0,
            }],
            true_cd_prime: 147.6,
            true_cm_prime: 222.7,
            residual: SyntheticResidual::None,
            noise_std: 0.0,
            seed: 1,
        };
        let ds = synthesize(&cfg).unwrap();
        let i = 10;
        assert!((ds.t()[i] - 2.5).abs() < 1e-12);
        assert!((ds.u()[i] - 1.0).abs() < 1e-12);
        assert!(ds.udot()[i].abs() < 1e-12);
        assert!((ds.f()[i] - 147.6).abs() < 1e-9);
    }

    #[test]
    fn synthetic_is_deterministic_and_exact_without_noise() {
        let cfg = SyntheticConfig {
            n_points: 500,
            seed: 3,
            ..Default::default()
        };
        assert_eq!(synthesize(&cfg).unwrap(), synthesize(&cfg).unwrap());

        let clean = SyntheticConfig {
            residual: SyntheticResidual::None,
            noise_std: 0.0,
            ..cfg
        };
        let ds = synthesize(&clean).unwrap();
        for i in 0..ds.len() {
            let morison = 147.6 * ds.u()[i] * ds.u()[i].abs() + 222.67 * ds.udot()[i];
            assert_eq!(ds.f()[i], morison);
        }
    }

    #[test]
    fn synthetic_config_validation() {
        let mut cfg = SyntheticConfig::default();
        cfg.n_points = 5;
        assert!(matches!(synthesize(&cfg), Err(Error::Config(_))));
        let mut cfg = SyntheticConfig::default();
        cfg.components[0].frequency_hz = 7.0;
        assert!(matches!(synthesize(&cfg), Err(Error::Config(_))));
        let mut cfg = SyntheticConfig::default();
        cfg.noise_std = -1.0;
        assert!(matches!(synthesize(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn udot_is_derivative_of_u() {
        let cfg = SyntheticConfig {
            n_points: 2000,
            sample_rate_hz: 200.0,
            ..Default::default()
        };
        let ds = synthesize(&cfg).unwrap();
        let h = 1.0 / ds.sample_rate_hz();
        for i in 1..ds.len() - 1 {
            let fd = (ds.u()[i + 1] - ds.u()[i - 1]) / (2.0 * h);
            assert!((fd - ds.udot()[i]).abs() < 1e-3, "{i}: {fd} vs {}", ds.udot()[i]);
        }
    }
}
