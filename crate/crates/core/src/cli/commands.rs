//! Subcommand implementations. Each validates the configuration, computes,
//! then writes its files and a `<command>.manifest.json`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use super::config::{ModelKind, RunConfig};
use crate::arx::{lag_search, LagMetric, LagSearchResult};
use crate::coverage::{
    coverage_sweep, input_points, radial_boundary_with, write_sweep_file, SweepConfig, SweepModel, SweepSplits,
};
use crate::dataset::{fmt_f64, LagSpec, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::gpnarx::GpNarxModel;
use crate::greybox::{
    predict_blackbox, predict_greybox, train_augmented, train_blackbox, train_residual, BlackBoxFit, ForecastMode,
    GreyBoxModel, TrainingObjective,
};
use crate::metrics::{msll, nmse, spectra_comparison};
use crate::persist::{read_json, write_json};
use crate::predictive::PredictiveSeries;
use crate::qpso::{stability_report, QpsoConfig};
use crate::seed::derive_seed;
use crate::whitebox::{fit_whitebox, predict_whitebox, MorisonPosterior};

/// Files written by a command, relative to the output directory.
struct Outputs {
    root: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn new(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn path(&mut self, rel: &str) -> Result<PathBuf> {
        let p = self.root.join(rel);
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        self.files.push(rel.to_string());
        Ok(p)
    }

    fn json<T: Serialize + ?Sized>(&mut self, rel: &str, value: &T) -> Result<()> {
        let p = self.path(rel)?;
        write_json(p, value)
    }

    fn text(&mut self, rel: &str, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
        let p = self.path(rel)?;
        let file = File::create(&p).map_err(|e| Error::io(&p, e))?;
        let mut w = BufWriter::new(file);
        f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(&p, e))
    }

    fn manifest(mut self, command: &str, cfg: &RunConfig) -> Result<()> {
        let mut echo = serde_json::to_value(cfg)?;
        if let Value::Object(m) = &mut echo {
            m.remove("out");
            m.remove("workers");
        }
        self.files.sort();
        let manifest = json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": cfg.seed,
            "config": echo,
            "outputs": self.files,
        });
        write_json(self.root.join(format!("{command}.manifest.json")), &manifest)
    }
}

pub fn synth(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let mut syn = cfg.synthetic();
    if cfg.data.synthetic.is_none() {
        syn.seed = derive_seed(cfg.seed, "synthetic");
    }
    let ds = crate::dataset::synthesize(&syn)?;
    let mut out = Outputs::new(&cfg.out)?;
    let p = out.path("dataset.csv")?;
    ds.write_csv(p)?;
    out.manifest("synth", cfg)
}

#[derive(Serialize)]
struct LagReport {
    metric: String,
    chosen: LagSpec,
    best_per_metric: Vec<(String, LagSpec)>,
    substantial_support: Vec<(String, Vec<LagSpec>)>,
    n_scored: usize,
}

fn lag_report(res: &LagSearchResult, metric: LagMetric) -> LagReport {
    LagReport {
        metric: metric.name().into(),
        chosen: res.best(metric),
        best_per_metric: LagMetric::ALL.iter().map(|m| (m.name().into(), res.best(*m))).collect(),
        substantial_support: LagMetric::ALL
            .iter()
            .map(|m| (m.name().into(), res.substantial_support[m.index()].clone()))
            .collect(),
        n_scored: res.n_scored,
    }
}

fn run_lag_search(cfg: &RunConfig, train: &TimeSeriesDataset, val: &TimeSeriesDataset) -> Result<LagSearchResult> {
    lag_search(train, val, cfg.lagsearch.max_lu, cfg.lagsearch.max_ly)
}

fn write_lag_search(out: &mut Outputs, res: &LagSearchResult, metric: LagMetric) -> Result<()> {
    out.text("lagsearch/heatmap.csv", |w| res.write_heatmap_to(w))?;
    out.json("lagsearch/lags.json", &lag_report(res, metric))
}

pub fn lagsearch(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let metric = cfg.lagsearch.metric()?;
    let (train, val, _) = cfg.splits()?;
    let res = run_lag_search(cfg, &train, &val)?;
    let mut out = Outputs::new(&cfg.out)?;
    write_lag_search(&mut out, &res, metric)?;
    out.manifest("lagsearch", cfg)
}

/// Configured lags, or the lag-search optimum when none are set.
fn resolve_lags(
    cfg: &RunConfig,
    train: &TimeSeriesDataset,
    val: &TimeSeriesDataset,
) -> Result<(LagSpec, Option<LagSearchResult>)> {
    match cfg.lags {
        Some(l) => Ok((l, None)),
        None => {
            let res = run_lag_search(cfg, train, val)?;
            Ok((res.best(cfg.lagsearch.metric()?), Some(res)))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Arch {
    Blackbox,
    Residual,
    Augmented,
}

/// Name, lags and architecture of a trained GP model file.
#[derive(Debug, Clone)]
struct GpJob {
    name: &'static str,
    arch: Arch,
    spec: LagSpec,
    is_static: bool,
}

fn gp_jobs(cfg: &RunConfig, spec: LagSpec) -> Vec<GpJob> {
    let m = &cfg.models;
    let stat = LagSpec::new(m.static_lu, 0);
    let mut jobs = Vec::new();
    if m.has(ModelKind::StaticGp) {
        for (name, arch) in [
            ("static-blackbox", Arch::Blackbox),
            ("static-residual", Arch::Residual),
            ("static-augmented", Arch::Augmented),
        ] {
            jobs.push(GpJob {
                name,
                arch,
                spec: stat,
                is_static: true,
            });
        }
    }
    for (kind, name, arch) in [
        (ModelKind::Gpnarx, "blackbox", Arch::Blackbox),
        (ModelKind::GreyResidual, "grey-residual", Arch::Residual),
        (ModelKind::GreyAugmented, "grey-augmented", Arch::Augmented),
    ] {
        if m.has(kind) {
            jobs.push(GpJob {
                name,
                arch,
                spec,
                is_static: false,
            });
        }
    }
    jobs
}

fn needs_whitebox(cfg: &RunConfig) -> bool {
    cfg.models.list.iter().any(|k| !matches!(k, ModelKind::Gpnarx))
}

enum Trained {
    Blackbox(GpNarxModel),
    Grey(GreyBoxModel),
}

fn train_job(
    job: &GpJob,
    cfg: &RunConfig,
    train: &TimeSeriesDataset,
    val: &TimeSeriesDataset,
    wb: Option<&MorisonPosterior>,
) -> Result<(Trained, BlackBoxFit)> {
    let bb = cfg.optimizer.blackbox(derive_seed(cfg.seed, job.name));
    let wb = || wb.ok_or_else(|| Error::Config("grey-box models need the white-box".into()));
    Ok(match job.arch {
        Arch::Blackbox => {
            let fit = train_blackbox(train, val, job.spec, &bb)?;
            (Trained::Blackbox(fit.model.clone()), fit)
        }
        Arch::Residual => {
            let (g, fit) = train_residual(train, val, wb()?, job.spec, &bb)?;
            (Trained::Grey(g), fit)
        }
        Arch::Augmented => {
            let (g, fit) = train_augmented(train, val, wb()?, job.spec, &bb)?;
            (Trained::Grey(g), fit)
        }
    })
}

fn optimizer_echo(q: &QpsoConfig) -> Value {
    json!({
        "swarm_size": q.swarm_size,
        "stability_tol": q.stability_tol,
        "max_iters": q.max_iters,
        "patience": q.patience,
        "n_repeat_runs": q.n_repeat_runs,
    })
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let (train, val, _) = cfg.splits()?;
    let (spec, searched) = if gp_jobs(cfg, LagSpec::new(0, 1)).iter().any(|j| !j.is_static) {
        let (s, r) = resolve_lags(cfg, &train, &val)?;
        (Some(s), r)
    } else {
        (None, None)
    };
    let wc = &cfg.whitebox;
    let wb = if needs_whitebox(cfg) {
        Some(fit_whitebox(&train, &wc.prior()?, wc.n_draws, wc.burn_in, derive_seed(cfg.seed, "whitebox"))?)
    } else {
        None
    };
    let jobs = gp_jobs(cfg, spec.unwrap_or(LagSpec::new(0, 1)));
    let fits: Vec<Result<(Trained, BlackBoxFit)>> = jobs
        .par_iter()
        .map(|job| train_job(job, cfg, &train, &val, wb.as_ref()))
        .collect();

    let mut out = Outputs::new(&cfg.out)?;
    if let Some(res) = &searched {
        write_lag_search(&mut out, res, cfg.lagsearch.metric()?)?;
    }
    let mut report = serde_json::Map::new();
    if let Some(spec) = spec {
        report.insert("lags".into(), json!(spec));
    }
    let mut models = Vec::new();
    if let Some(wb) = &wb {
        out.json("models/whitebox.json", wb)?;
        models.push(json!({
            "name": "whitebox",
            "n_draws": wb.n_draws(),
            "beta_mean": wb.mean_beta(),
            "beta_95": ([0, 1].map(|k| [wb.beta_quantile(k, 0.025), wb.beta_quantile(k, 0.975)])),
            "sigma_n_sq_mean": wb.mean_sigma_n_sq(),
        }));
    }
    let mut failures = Vec::new();
    for (job, fit) in jobs.iter().zip(fits) {
        let (trained, fit) = fit?;
        let file = format!("models/{}.json", job.name);
        match &trained {
            Trained::Blackbox(m) => out.json(&file, m)?,
            Trained::Grey(g) => {
                let dir = out.path(&format!("models/{}.blackbox.json", job.name))?;
                let dir = dir.parent().map(Path::to_path_buf).unwrap_or_default();
                out.files.push(file.clone());
                g.save(&dir, job.name, Some("whitebox.json"))?;
            }
        }
        let hyper = fit.model.gp.hyper();
        let mut entry = json!({
            "name": job.name,
            "lags": job.spec,
            "objective": fit.objective,
            "hyperparameters": {
                "sigma_f_sq": hyper.sigma_f_sq,
                "length_scales": hyper.length_scales,
                "sigma_n_sq": hyper.sigma_n_sq,
            },
        });
        if let Some(opt) = &fit.optim {
            let qcfg = if job.is_static || fit.objective == TrainingObjective::Nlml {
                cfg.optimizer.static_qpso(0)
            } else {
                cfg.optimizer.narx_qpso(0)
            };
            let verdict = stability_report(opt, cfg.optimizer.position_tol, cfg.optimizer.cost_tol);
            let converged = opt.runs[opt.best_run].converged;
            if !verdict.stable || !converged {
                failures.push(format!(
                    "{}: converged={converged}, outlier runs {:?}, max cost gap {}",
                    job.name, verdict.outlier_runs, verdict.max_cost_gap
                ));
            }
            entry["optimizer"] = optimizer_echo(&qcfg);
            entry["best_cost"] = json!(opt.best_cost);
            entry["best_run"] = json!(opt.best_run);
            entry["converged"] = json!(converged);
            entry["stability"] = json!(verdict);
            entry["runs"] = opt
                .runs
                .iter()
                .map(|r| json!({"cost": r.cost, "iterations": r.iterations, "converged": r.converged}))
                .collect();
            out.text(&format!("models/{}.cost_trace.csv", job.name), |w| opt.write_cost_trace_to(w))?;
        }
        models.push(entry);
    }
    report.insert("models".into(), Value::Array(models));
    report.insert("failures".into(), json!(failures));
    out.json("training_report.json", &report)?;
    out.manifest("train", cfg)?;
    if !failures.is_empty() && !cfg.optimizer.allow_unstable {
        return Err(Error::Unstable(format!(
            "{} (see training_report.json; set optimizer.allow_unstable to keep these models)",
            failures.join("; ")
        )));
    }
    Ok(())
}

fn load_trained(dir: &Path, job: &GpJob) -> Result<Trained> {
    let path = dir.join(format!("{}.json", job.name));
    let trained = match job.arch {
        Arch::Blackbox => Trained::Blackbox(read_json(&path)?),
        _ => Trained::Grey(GreyBoxModel::load(&path)?),
    };
    let spec = match &trained {
        Trained::Blackbox(m) => m.spec,
        Trained::Grey(g) => g.spec,
    };
    if spec.is_static() != job.is_static {
        return Err(Error::Config(format!("{} holds lags {spec}, which do not match its role", path.display())));
    }
    Ok(trained)
}

struct EvalRow {
    model: String,
    prediction: &'static str,
    pred: PredictiveSeries,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n)
}

pub fn evaluate(cfg: &RunConfig, models_dir: Option<&Path>) -> Result<()> {
    cfg.validate()?;
    let dir = models_dir.map(Path::to_path_buf).unwrap_or_else(|| cfg.out.join("models"));
    let (train, _, test) = cfg.splits()?;
    let wb: Option<MorisonPosterior> = if cfg.models.has(ModelKind::Whitebox) {
        Some(read_json(dir.join("whitebox.json"))?)
    } else {
        None
    };
    // lags come from the stored models; the placeholder only sets roles
    let jobs = gp_jobs(cfg, LagSpec::new(0, 1));
    let loaded: Vec<(GpJob, Trained)> = jobs
        .into_iter()
        .map(|j| load_trained(&dir, &j).map(|t| (j, t)))
        .collect::<Result<_>>()?;
    let spec_of = |t: &Trained| match t {
        Trained::Blackbox(m) => m.spec,
        Trained::Grey(g) => g.spec,
    };
    let start = loaded.iter().map(|(_, t)| spec_of(t).max_lag()).max().unwrap_or(0);
    if test.len() <= start {
        return Err(Error::Bounds(format!("test set of {} samples is within the {start}-step warm-up", test.len())));
    }

    let mut tasks: Vec<(usize, ForecastMode, &'static str)> = Vec::new();
    for (i, (job, _)) in loaded.iter().enumerate() {
        if job.is_static {
            tasks.push((i, ForecastMode::Osa, "static"));
        }
    }
    for mode in &cfg.models.modes {
        let mode = ForecastMode::from(*mode);
        for (i, (job, _)) in loaded.iter().enumerate() {
            if !job.is_static {
                tasks.push((i, mode, mode.label()));
            }
        }
    }
    let n_mc = cfg.models.mc_samples;
    let predicted: Vec<Result<EvalRow>> = tasks
        .par_iter()
        .map(|&(i, mode, label)| {
            let (job, t) = &loaded[i];
            let seed = derive_seed(cfg.seed, &format!("evaluate-{}-{}", job.name, label));
            let f = match t {
                Trained::Blackbox(m) => predict_blackbox(m, &test, mode, n_mc, seed)?,
                Trained::Grey(g) => predict_greybox(g, &test, mode, n_mc, seed)?,
            };
            Ok(EvalRow {
                model: job.name.to_string(),
                prediction: label,
                pred: f.summary(),
            })
        })
        .collect();
    let mut rows = Vec::new();
    if let Some(wb) = &wb {
        rows.push(EvalRow {
            model: "whitebox".into(),
            prediction: "posterior",
            pred: predict_whitebox(wb, test.u(), test.udot(), true)?,
        });
    }
    for r in predicted {
        rows.push(r?);
    }

    let baseline = mean_var(train.f());
    let y = &test.f()[start..];
    let t = &test.t()[start..];
    let mut out = Outputs::new(&cfg.out)?;
    let mut table = String::from("model,prediction,nmse,msll,n_eval\n");
    for r in &rows {
        let p = r.pred.aligned_to(start)?;
        let e = nmse(y, &p.mean)?;
        let l = msll(y, &p.mean, &p.variance, baseline.0, baseline.1)?;
        table.push_str(&format!("{},{},{},{},{}\n", r.model, r.prediction, fmt_f64(e), fmt_f64(l), y.len()));
        let std = p.std();
        let name = format!("evaluation/series/{}_{}.csv", r.model, r.prediction.to_lowercase());
        out.text(&name, |w| {
            writeln!(w, "t,observed,mean,std")?;
            for i in 0..y.len() {
                writeln!(w, "{},{},{},{}", fmt_f64(t[i]), fmt_f64(y[i]), fmt_f64(p.mean[i]), fmt_f64(std[i]))?;
            }
            Ok(())
        })?;
    }
    out.text("evaluation/metrics.csv", |w| w.write_all(table.as_bytes()))?;
    out.manifest("evaluate", cfg)
}

pub fn coverage(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let (train, val, test) = cfg.splits()?;
    let models: Vec<SweepModel> = [
        (ModelKind::Whitebox, SweepModel::Whitebox),
        (ModelKind::Gpnarx, SweepModel::Blackbox),
        (ModelKind::GreyResidual, SweepModel::Residual),
        (ModelKind::GreyAugmented, SweepModel::Augmented),
    ]
    .into_iter()
    .filter(|(k, _)| cfg.models.has(*k))
    .map(|(_, m)| m)
    .collect();
    if models.is_empty() {
        return Err(Error::Config(
            "coverage needs at least one of whitebox, gpnarx, grey-residual, grey-augmented".into(),
        ));
    }
    let copts = cfg.coverage.options()?;
    let (spec, searched) = resolve_lags(cfg, &train, &val)?;
    let seed = derive_seed(cfg.seed, "coverage");
    let wc = &cfg.whitebox;
    let splits = SweepSplits {
        train: &train,
        val: &val,
        test: &test,
    };
    let mut rows = Vec::new();
    for mode in &cfg.coverage.whitebox_modes {
        let sweep = SweepConfig {
            targets: cfg.coverage.targets.clone(),
            tolerance: cfg.coverage.tolerance,
            coverage: copts,
            spec,
            blackbox: cfg.optimizer.blackbox(seed),
            prior: wc.prior()?,
            n_draws: wc.n_draws,
            burn_in: wc.burn_in,
            mc_samples: cfg.models.mc_samples,
            whitebox_mode: *mode,
            seed,
        };
        rows.extend(coverage_sweep(splits, &models, &sweep)?);
    }
    let boundaries = [("train", &train), ("val", &val), ("test", &test)]
        .map(|(name, ds)| radial_boundary_with(&input_points(ds), &copts.boundary).map(|b| (name, b)));
    let mut out = Outputs::new(&cfg.out)?;
    if let Some(res) = &searched {
        write_lag_search(&mut out, res, cfg.lagsearch.metric()?)?;
    }
    let p = out.path("coverage/sweep.csv")?;
    write_sweep_file(&rows, p)?;
    let boundaries: Vec<_> = boundaries.into_iter().collect::<Result<_>>()?;
    out.text("coverage/boundaries.csv", |w| {
        writeln!(w, "set,bin,angle,radius,x,y")?;
        for (name, b) in &boundaries {
            b.write_vertices(w, name)?;
        }
        Ok(())
    })?;
    out.manifest("coverage", cfg)
}

pub fn spectra(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let (train, val, test) = cfg.splits()?;
    let cmp = spectra_comparison(&[("train", &train), ("val", &val), ("test", &test)], cfg.spectra.n_windows)?;
    let mut out = Outputs::new(&cfg.out)?;
    for f in ["spectra.csv", "pearson.csv", "cosine.csv"] {
        out.path(&format!("spectra/{f}"))?;
    }
    cmp.write_all(cfg.out.join("spectra"))?;
    out.manifest("spectra", cfg)
}
