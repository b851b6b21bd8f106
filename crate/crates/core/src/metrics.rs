//! Scalar and spectral assessment metrics.

use std::f64::consts::PI;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dataset::{fmt_f64, Channel, TimeSeriesDataset};
use crate::error::{Error, Result};

/// Number of Welch segments used for dataset spectra.
pub const DEFAULT_WELCH_WINDOWS: usize = 16;

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn population_variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64
}

/// Normalized mean squared error in percent; 100 equals predicting the mean
/// of `y_true`.
pub fn nmse(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::shape(y_true.len(), y_pred.len()));
    }
    let n = y_true.len();
    if n < 2 {
        return Err(Error::Domain(format!("NMSE needs at least 2 samples, got {n}")));
    }
    let var = population_variance(y_true);
    if !(var > 0.0) {
        return Err(Error::Domain("NMSE of a constant signal is undefined".into()));
    }
    let sse: f64 = y_true.iter().zip(y_pred).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(100.0 * sse / (n as f64 * var))
}

fn neg_log_normal(y: f64, mean: f64, var: f64) -> f64 {
    0.5 * (2.0 * PI * var).ln() + 0.5 * (y - mean).powi(2) / var
}

/// Mean standardized log loss against a Gaussian baseline with the training
/// mean and variance. Zero for the baseline itself, negative when better.
pub fn msll(
    y_true: &[f64],
    pred_mean: &[f64],
    pred_var: &[f64],
    train_mean: f64,
    train_var: f64,
) -> Result<f64> {
    let n = y_true.len();
    if pred_mean.len() != n {
        return Err(Error::shape(n, pred_mean.len()));
    }
    if pred_var.len() != n {
        return Err(Error::shape(n, pred_var.len()));
    }
    if n == 0 {
        return Err(Error::Domain("MSLL of an empty series".into()));
    }
    if !(train_var > 0.0) {
        return Err(Error::Domain(format!("baseline variance {train_var} must be > 0")));
    }
    if let Some(i) = pred_var.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::Domain(format!(
            "predictive variance {} at step {i} must be > 0",
            pred_var[i]
        )));
    }
    let total: f64 = (0..n)
        .map(|t| {
            neg_log_normal(y_true[t], pred_mean[t], pred_var[t])
                - neg_log_normal(y_true[t], train_mean, train_var)
        })
        .sum();
    Ok(total / n as f64)
}

/// One-sided power spectral density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub frequencies: Vec<f64>,
    pub power: Vec<f64>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.power.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power.is_empty()
    }

    pub fn resolution(&self) -> f64 {
        if self.frequencies.len() > 1 {
            self.frequencies[1] - self.frequencies[0]
        } else {
            0.0
        }
    }

    /// Rectangle-rule integral of the density.
    pub fn total_power(&self) -> f64 {
        self.power.iter().sum::<f64>() * self.resolution()
    }

    pub fn peak_index(&self) -> usize {
        self.power
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
            .0
    }
}

/// Symmetric Hamming window of length `len`.
pub fn hamming(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let m = (len - 1) as f64;
    (0..len)
        .map(|k| 0.54 - 0.46 * (2.0 * PI * k as f64 / m).cos())
        .collect()
}

/// Welch estimate with `n_windows` equal, non-overlapping Hamming-windowed
/// segments (trailing samples that do not fill a segment are dropped).
/// Density scaling; every bin except DC and Nyquist is doubled.
pub fn welch_psd(x: &[f64], sample_rate_hz: f64, n_windows: usize) -> Result<Spectrum> {
    if n_windows == 0 {
        return Err(Error::Config("n_windows must be ≥ 1".into()));
    }
    if !(sample_rate_hz > 0.0) {
        return Err(Error::Config(format!("sample rate {sample_rate_hz} must be > 0")));
    }
    let seg = x.len() / n_windows;
    if seg < 2 {
        return Err(Error::Bounds(format!(
            "{} samples cannot form {n_windows} segments of length ≥ 2",
            x.len()
        )));
    }
    welch_psd_segmented(x, sample_rate_hz, seg)
}

/// Welch estimate with a fixed segment length, averaging as many whole
/// non-overlapping segments as fit in `x`.
pub fn welch_psd_segmented(x: &[f64], sample_rate_hz: f64, seg: usize) -> Result<Spectrum> {
    if !(sample_rate_hz > 0.0) {
        return Err(Error::Config(format!("sample rate {sample_rate_hz} must be > 0")));
    }
    if seg < 2 || x.len() < seg {
        return Err(Error::Bounds(format!(
            "{} samples cannot form a segment of length {seg} (≥ 2)",
            x.len()
        )));
    }
    let n_windows = x.len() / seg;
    let window = hamming(seg);
    let window_power: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_forward(seg);
    let n_bins = seg / 2 + 1;
    let mut power = vec![0.0; n_bins];
    let mut buf = vec![Complex::new(0.0, 0.0); seg];
    for s in 0..n_windows {
        for (k, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(x[s * seg + k] * window[k], 0.0);
        }
        fft.process(&mut buf);
        for (p, b) in power.iter_mut().zip(&buf) {
            *p += b.norm_sqr();
        }
    }
    let scale = 1.0 / (n_windows as f64 * sample_rate_hz * window_power);
    for (k, p) in power.iter_mut().enumerate() {
        *p *= scale;
        let nyquist = seg.is_multiple_of(2) && k == seg / 2;
        if k != 0 && !nyquist {
            *p *= 2.0;
        }
    }
    let frequencies = (0..n_bins).map(|k| k as f64 * sample_rate_hz / seg as f64).collect();
    Ok(Spectrum { frequencies, power })
}

fn check_pair(a: &[f64], b: &[f64], min_len: usize) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::shape(a.len(), b.len()));
    }
    if a.len() < min_len {
        return Err(Error::Domain(format!("need at least {min_len} values, got {}", a.len())));
    }
    Ok(())
}

/// Product-moment correlation coefficient.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b, 2)?;
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::Domain("correlation with a constant series is undefined".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b, 1)?;
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Domain("cosine similarity with a zero vector is undefined".into()));
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub const SPECTRA_CHANNELS: [Channel; 3] = [Channel::U, Channel::Udot, Channel::F];

fn channel_title(c: Channel) -> &'static str {
    match c {
        Channel::U => "velocity",
        Channel::Udot => "acceleration",
        Channel::F => "force",
    }
}

/// Similarity of two datasets' spectra, one value per channel in
/// [`SPECTRA_CHANNELS`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectraPair {
    pub first: String,
    pub second: String,
    pub pearson: [f64; 3],
    pub cosine: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedSpectrum {
    pub dataset: String,
    pub channel: Channel,
    pub spectrum: Spectrum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectraComparison {
    pub spectra: Vec<NamedSpectrum>,
    pub pairs: Vec<SpectraPair>,
}

impl SpectraComparison {
    /// `comparison,velocity,acceleration,force` rows of Pearson coefficients.
    pub fn write_pearson_table<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        self.write_table(w, |p| p.pearson)
    }

    pub fn write_cosine_table<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        self.write_table(w, |p| p.cosine)
    }

    fn write_table<W: Write>(&self, w: &mut W, pick: impl Fn(&SpectraPair) -> [f64; 3]) -> std::io::Result<()> {
        writeln!(w, "comparison,velocity,acceleration,force")?;
        for p in &self.pairs {
            let v = pick(p);
            writeln!(
                w,
                "{}-{},{},{},{}",
                p.first,
                p.second,
                fmt_f64(v[0]),
                fmt_f64(v[1]),
                fmt_f64(v[2])
            )?;
        }
        Ok(())
    }

    /// Long format `dataset,channel,frequency_hz,power`.
    pub fn write_spectra<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "dataset,channel,frequency_hz,power")?;
        for s in &self.spectra {
            for (f, p) in s.spectrum.frequencies.iter().zip(&s.spectrum.power) {
                writeln!(
                    w,
                    "{},{},{},{}",
                    s.dataset,
                    channel_title(s.channel),
                    fmt_f64(*f),
                    fmt_f64(*p)
                )?;
            }
        }
        Ok(())
    }

    /// Writes `spectra.csv`, `pearson.csv` and `cosine.csv` into `dir`.
    pub fn write_all(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let files: [(&str, fn(&Self, &mut File) -> std::io::Result<()>); 3] = [
            ("spectra.csv", |s, f| s.write_spectra(f)),
            ("pearson.csv", |s, f| s.write_pearson_table(f)),
            ("cosine.csv", |s, f| s.write_cosine_table(f)),
        ];
        for (name, write) in files {
            let path = dir.join(name);
            let mut f = File::create(&path).map_err(|e| Error::io(&path, e))?;
            write(self, &mut f).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

/// Welch spectra of velocity, acceleration and force for every dataset and
/// pairwise Pearson/cosine similarity of the (linear) power values. Pairs
/// are listed in input order: (0,1), (0,2), .., (1,2), .. The segment
/// length is the shortest dataset's length over `n_windows`; longer datasets
/// average more segments.
pub fn spectra_comparison(datasets: &[(&str, &TimeSeriesDataset)], n_windows: usize) -> Result<SpectraComparison> {
    if datasets.len() < 2 {
        return Err(Error::Config("spectra comparison needs at least two datasets".into()));
    }
    if n_windows == 0 {
        return Err(Error::Config("n_windows must be ≥ 1".into()));
    }
    let fs = datasets[0].1.sample_rate_hz();
    if let Some((name, ds)) = datasets.iter().find(|(_, d)| (d.sample_rate_hz() - fs).abs() > 1e-9 * fs) {
        return Err(Error::Grid(format!(
            "{name} is sampled at {} Hz, {} at {fs} Hz",
            ds.sample_rate_hz(),
            datasets[0].0
        )));
    }
    // one segment length for all, so every spectrum shares a frequency grid
    let shortest = datasets.iter().map(|(_, d)| d.len()).min().unwrap_or(0);
    let seg = shortest / n_windows;
    let mut spectra = Vec::with_capacity(3 * datasets.len());
    for (name, ds) in datasets {
        for ch in SPECTRA_CHANNELS {
            spectra.push(NamedSpectrum {
                dataset: name.to_string(),
                channel: ch,
                spectrum: welch_psd_segmented(ds.channel(ch), fs, seg)?,
            });
        }
    }
    let mut pairs = Vec::new();
    for i in 0..datasets.len() {
        for j in i + 1..datasets.len() {
            let mut pearson_v = [0.0; 3];
            let mut cosine_v = [0.0; 3];
            for c in 0..3 {
                let a = &spectra[3 * i + c].spectrum;
                let b = &spectra[3 * j + c].spectrum;
                if a.len() != b.len() {
                    return Err(Error::shape(
                        format!("{} spectral bins in {}", a.len(), datasets[i].0),
                        b.len(),
                    ));
                }
                pearson_v[c] = pearson(&a.power, &b.power)?;
                cosine_v[c] = cosine_similarity(&a.power, &b.power)?;
            }
            pairs.push(SpectraPair {
                first: datasets[i].0.to_string(),
                second: datasets[j].0.to_string(),
                pearson: pearson_v,
                cosine: cosine_v,
            });
        }
    }
    Ok(SpectraComparison { spectra, pairs })
}
