use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use hssnb_core::data::{
    extract_patches, load_dataset, pca_apply, pca_fit, save_dataset, stratified_split, synth_generate,
};
use hssnb_core::metrics::{Report, RunScores};
use hssnb_core::network::{
    build_model, evaluate, grad_check, grad_check_case, load_checkpoint, predict, save_checkpoint, train as fit, ArchConfig,
    GradCheckOptions, GradCheckReport, HssnbModel, History, NumericPrecision, Seeds, TrainConfig,
};
use hssnb_core::{ConfusionMatrix, HsiCube, LabelMap, PatchSet, Rng};
use log::info;

use crate::args::{
    EvalArgs, GradcheckArgs, GradcheckPreset, MapArgs, PeepholeModes, Precision, SweepArgs, SynthArgs, TrainArgs,
};
use crate::config::ExperimentConfig;
use crate::failure::Failure;
use crate::ppm;

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const HISTORY_FILE: &str = "history.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const CONFIG_FILE: &str = "config.json";

const PREDICT_BATCH: usize = 64;

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Failure::io(path, e))
}

/// Seed of repetition `run`; run 0 uses the configured seed itself.
pub fn run_seed(seed: u64, run: usize) -> u64 {
    seed.wrapping_add(1000 * run as u64)
}

pub fn synth(args: &SynthArgs, config: Option<&ExperimentConfig>) -> Result<(), Failure> {
    let seed = args.seed.or(config.map(|c| c.train.seed)).unwrap_or(7);
    let (w, h, b) = args.size;
    let (cube, labels) = synth_generate(w, h, b, args.classes as usize, args.noise, &mut Rng::new(seed))?;
    save_dataset(&args.out, &args.name, &cube, &labels)?;
    println!(
        "wrote {}x{}x{} dataset with {} classes to {}",
        w,
        h,
        b,
        args.classes,
        args.out.display()
    );
    Ok(())
}

/// PCA-reduced cube; PCA is fitted on every pixel.
fn reduce(cube: &HsiCube, components: usize) -> Result<HsiCube, Failure> {
    let pca = pca_fit(cube, components)?;
    let ratio: f64 = pca.explained_variance_ratio().iter().sum();
    info!("PCA {} -> {} bands keeps {:.2}% of the variance", cube.bands(), components, 100.0 * ratio);
    Ok(pca_apply(&pca, cube)?)
}

fn split(
    reduced: &HsiCube,
    labels: &LabelMap,
    window: usize,
    fraction: f64,
    split_seed: u64,
) -> Result<(PatchSet, PatchSet), Failure> {
    let set = extract_patches(reduced, labels, window)?;
    let (train, test) = stratified_split(&set, fraction, &mut Rng::new(split_seed))?;
    info!("{} labeled patches: {} train, {} test", set.len(), train.len(), test.len());
    Ok((train, test))
}

pub struct RunResult {
    pub model: HssnbModel,
    pub history: History,
    pub test: ConfusionMatrix,
}

fn train_once(
    cfg: &ExperimentConfig,
    train_cfg: &TrainConfig,
    reduced: &HsiCube,
    labels: &LabelMap,
) -> Result<RunResult, Failure> {
    train_cfg.validate()?;
    let seeds = train_cfg.seeds();
    let (train_set, test_set) = split(reduced, labels, train_cfg.window, train_cfg.train_fraction, seeds.split)?;
    let arch = cfg.arch_config(train_cfg.window, labels.classes());
    let mut model = build_model(&arch, &mut Rng::new(seeds.init))?;
    info!("{} parameters", model.parameter_count());
    let history = fit(&mut model, &train_set, train_cfg)?;
    let test = evaluate(&model, &test_set, train_cfg.serial)?;
    Ok(RunResult { model, history, test })
}

fn save_run(dir: &Path, seed: u64, train_cfg: &TrainConfig, run: &RunResult) -> Result<RunScores, Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
    let epoch = run.history.last().map_or(0, |e| e.epoch);
    save_checkpoint(dir.join(CHECKPOINT_FILE), &run.model, seed, epoch, Some(train_cfg))?;
    write(&dir.join(HISTORY_FILE), run.history.to_csv())?;
    let scores = run.test.scores()?;
    write(&dir.join(METRICS_FILE), Report::from_runs(&[scores])?.to_json() + "\n")?;
    Ok(scores)
}

pub fn train(args: &TrainArgs, mut cfg: ExperimentConfig) -> Result<(), Failure> {
    args.flags.apply(&mut cfg);
    if let Some(r) = args.runs {
        cfg.runs = r;
    }
    if cfg.runs == 0 {
        return Err(Failure::usage("--runs must be at least 1"));
    }
    cfg.train.validate()?;
    let (cube, labels) = load_dataset(cfg.data_dir()?)?;
    let reduced = reduce(&cube, cfg.train.pca_components)?;
    write(&cfg.out.join(CONFIG_FILE), cfg.to_json() + "\n")?;

    let mut scores = Vec::with_capacity(cfg.runs);
    for r in 0..cfg.runs {
        let mut train_cfg = cfg.train.clone();
        train_cfg.seed = run_seed(cfg.train.seed, r);
        let dir = if cfg.runs == 1 {
            cfg.out.clone()
        } else {
            cfg.out.join(format!("run_{r}"))
        };
        info!("run {} of {} (seed {})", r + 1, cfg.runs, train_cfg.seed);
        let result = train_once(&cfg, &train_cfg, &reduced, &labels)?;
        scores.push(save_run(&dir, train_cfg.seed, &train_cfg, &result)?);
    }
    let report = Report::from_runs(&scores)?;
    if cfg.runs > 1 {
        write(&cfg.out.join(METRICS_FILE), report.to_json() + "\n")?;
    }
    print!("{}", report.to_text());
    println!("Kappa | AA | OA: {}", report.row());
    Ok(())
}

fn dataset_for(data: Option<&PathBuf>, checkpoint: &Path) -> Result<PathBuf, Failure> {
    data.cloned()
        .ok_or_else(|| Failure::usage(format!("no dataset given for {} (use --data)", checkpoint.display())))
}

fn check_compatible(arch: &ArchConfig, labels: &LabelMap, cube: &HsiCube, path: &Path) -> Result<(), Failure> {
    if labels.classes() != arch.classes {
        return Err(Failure::data(format!(
            "dataset has {} classes but checkpoint {} was trained for {}",
            labels.classes(),
            path.display(),
            arch.classes
        )));
    }
    if cube.bands() < arch.bands {
        return Err(Failure::data(format!(
            "dataset has {} bands but checkpoint {} expects {} PCA components",
            cube.bands(),
            path.display(),
            arch.bands
        )));
    }
    Ok(())
}

fn stored_train_config(cfg: Option<TrainConfig>, path: &Path) -> Result<TrainConfig, Failure> {
    cfg.ok_or_else(|| Failure::data(format!("checkpoint {} carries no training configuration", path.display())))
}

pub fn eval(args: &EvalArgs, config: Option<&ExperimentConfig>) -> Result<(), Failure> {
    let data = args.data.clone().or_else(|| config.and_then(|c| c.data.clone()));
    let mut scores = Vec::new();
    for path in &args.checkpoints {
        let (model, header) = load_checkpoint(path)?;
        let tc = stored_train_config(header.train, path)?;
        let (cube, labels) = load_dataset(dataset_for(data.as_ref(), path)?)?;
        check_compatible(model.arch(), &labels, &cube, path)?;
        let reduced = reduce(&cube, model.arch().bands)?;
        let split_seed = args.split_seed.unwrap_or(Seeds::derive(header.seed).split);
        let (_, test) = split(&reduced, &labels, model.arch().window, tc.train_fraction, split_seed)?;
        let cm = evaluate(&model, &test, args.serial || tc.serial)?;
        let s = cm.scores()?;
        println!(
            "{}: OA {:.4}  AA {:.4}  Kappa {:.4}  ({} test samples)",
            path.display(),
            s.overall_accuracy,
            s.average_accuracy,
            s.kappa,
            cm.total()
        );
        scores.push(s);
    }
    let report = Report::from_runs(&scores)?;
    print!("{}", report.to_text());
    println!("Kappa | AA | OA: {}", report.row());
    if let Some(out) = &args.out {
        write(out, report.to_json() + "\n")?;
    }
    Ok(())
}

pub fn map(args: &MapArgs, config: Option<&ExperimentConfig>) -> Result<(), Failure> {
    let data = args.data.clone().or_else(|| config.and_then(|c| c.data.clone()));
    let (model, _) = load_checkpoint(&args.checkpoint)?;
    let (cube, labels) = load_dataset(dataset_for(data.as_ref(), &args.checkpoint)?)?;
    check_compatible(model.arch(), &labels, &cube, &args.checkpoint)?;
    let reduced = reduce(&cube, model.arch().bands)?;
    let set = extract_patches(&reduced, &labels, model.arch().window)?;
    let predicted = predict(&model, &set, PREDICT_BATCH, args.serial)?;

    let width = labels.width();
    let mut grid = vec![0u16; width * labels.height()];
    let mut agree = 0;
    for (&(r, c), &p) in set.coords().iter().zip(&predicted) {
        grid[r * width + c] = p;
        agree += usize::from(p == labels.get(r, c));
    }
    write(&args.out, ppm::encode(width, labels.height(), &grid))?;
    println!(
        "wrote {}x{} map to {} ({} of {} labeled pixels agree with ground truth)",
        width,
        labels.height(),
        args.out.display(),
        agree,
        set.len()
    );
    Ok(())
}

fn gradcheck_arch(preset: GradcheckPreset, peepholes: bool) -> ArchConfig {
    match preset {
        GradcheckPreset::Reduced => ArchConfig::gradcheck(peepholes),
        GradcheckPreset::PaperKernels => ArchConfig::gradcheck_full_kernels(peepholes),
    }
}

pub fn gradcheck(args: &GradcheckArgs, config: Option<&ExperimentConfig>) -> Result<(), Failure> {
    if !(args.tolerance > 0.0) {
        return Err(Failure::usage("--tolerance must be positive"));
    }
    let seed = args.seed.or(config.map(|c| c.train.seed)).unwrap_or(0);
    let modes: &[bool] = match args.peepholes {
        PeepholeModes::On => &[true],
        PeepholeModes::Off => &[false],
        PeepholeModes::Both => &[false, true],
    };
    let options = GradCheckOptions {
        epsilon: args.epsilon,
        tolerance: args.tolerance,
        dropout_seed: Seeds::derive(seed).dropout,
        serial: args.serial,
        precision: match args.precision {
            Precision::DoubleDouble => NumericPrecision::DoubleDouble,
            Precision::Double => NumericPrecision::Double,
        },
        corrupt: None,
    };

    let mut reports: Vec<(bool, GradCheckReport)> = Vec::new();
    for &peep in modes {
        let arch = gradcheck_arch(args.preset, peep);
        let (model, patch, target) = grad_check_case(&arch, seed)?;

        let started = Instant::now();
        let report = grad_check(&model, &patch, &target, &options)?;
        println!(
            "== peepholes {} ({} parameters, {:.1?})",
            if peep { "on" } else { "off" },
            model.parameter_count(),
            started.elapsed()
        );
        print!("{}", report.to_text());
        reports.push((peep, report));
    }

    if let Some(path) = &args.json {
        let json: Vec<serde_json::Value> = reports
            .iter()
            .map(|(peep, r)| serde_json::json!({ "peepholes": peep, "report": r }))
            .collect();
        write(path, serde_json::to_string_pretty(&json).expect("report serializes") + "\n")?;
    }

    let mut failed = String::new();
    for (peep, r) in &reports {
        for t in r.failures() {
            let _ = write!(failed, "\n  peepholes {}: {} ({:.3e})", if *peep { "on" } else { "off" }, t.name, t.max_relative_error);
        }
        if !r.passed() && r.failures().is_empty() {
            let _ = write!(failed, "\n  reference loss mismatch {:.3e}", r.loss_gap);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::numerical(format!("gradient check failed for:{failed}")))
    }
}

pub struct SweepRow {
    pub window: usize,
    pub outcome: Result<RunScores, String>,
}

pub fn format_sweep(rows: &[SweepRow]) -> String {
    let mut s = format!("{:<8} {:>8} {:>8} {:>8}\n", "window", "OA", "AA", "Kappa");
    for r in rows {
        match &r.outcome {
            Ok(sc) => {
                let _ = writeln!(
                    s,
                    "{:<8} {:>8.2} {:>8.2} {:>8.2}",
                    format!("{0}x{0}", r.window),
                    100.0 * sc.overall_accuracy,
                    100.0 * sc.average_accuracy,
                    100.0 * sc.kappa
                );
            }
            Err(e) => {
                let _ = writeln!(s, "{:<8} failed: {e}", format!("{0}x{0}", r.window));
            }
        }
    }
    s
}

pub fn sweep(args: &SweepArgs, mut cfg: ExperimentConfig) -> Result<(), Failure> {
    args.flags.apply(&mut cfg);
    if let Some(w) = &args.windows {
        cfg.windows = w.clone();
    }
    cfg.windows.sort_unstable();
    cfg.windows.dedup();
    if cfg.windows.is_empty() {
        return Err(Failure::usage("no window sizes given"));
    }
    let (cube, labels) = load_dataset(cfg.data_dir()?)?;
    let reduced = reduce(&cube, cfg.train.pca_components)?;
    write(&cfg.out.join(CONFIG_FILE), cfg.to_json() + "\n")?;

    let mut rows = Vec::new();
    let mut first_failure: Option<Failure> = None;
    for &window in &cfg.windows {
        let mut train_cfg = cfg.train.clone();
        train_cfg.window = window;
        info!("window {window}");
        let outcome = train_once(&cfg, &train_cfg, &reduced, &labels)
            .and_then(|run| save_run(&cfg.out.join(format!("window_{window}")), train_cfg.seed, &train_cfg, &run));
        let outcome = outcome.map_err(|f| {
            log::error!("window {window}: {f}");
            let msg = f.message.clone();
            first_failure.get_or_insert(f);
            msg
        });
        rows.push(SweepRow { window, outcome });
    }

    let table = format_sweep(&rows);
    print!("{table}");
    write(&cfg.out.join("sweep.txt"), &table)?;
    let mut csv = String::from("window,oa,aa,kappa,error\n");
    for r in &rows {
        match &r.outcome {
            Ok(s) => {
                let _ = writeln!(csv, "{},{:e},{:e},{:e},", r.window, s.overall_accuracy, s.average_accuracy, s.kappa);
            }
            Err(e) => {
                let _ = writeln!(csv, "{},,,,\"{}\"", r.window, e.replace('"', "'"));
            }
        }
    }
    write(&cfg.out.join("sweep.csv"), csv)?;
    match first_failure {
        Some(f) => Err(f),
        None => Ok(()),
    }
}
