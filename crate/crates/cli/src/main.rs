//! `smokestep` command-line entry point.

mod render;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use smokestep::config::RunConfig;
use smokestep::correction::CorrectionNet;
use smokestep::datagen::{generate_corpus, Corpus, SimulationArchive};
use smokestep::fields::{Axis, GridSpec, ScalarField};
use smokestep::interpolation::InterpModels;
use smokestep::losses::FeatureExtractor;
use smokestep::metrics::{
    correction_errors, mean, per_frame_curve, perceptual_distance, ssim, write_ablation, write_curve,
    write_table2, AblationRow,
};
use smokestep::rollout::{run, run_uncorrected};
use smokestep::solver::{SceneKind, Solver};
use smokestep::training::{train_correction, train_interpolation, TrainData, CORRECTION_DIR};
use smokestep::{Error, Result};
use thiserror::Error;

const RESOLVED: &str = "resolved_config.json";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("png encoding failed: {0}")]
    Png(#[from] png::EncodingError),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) => match e {
                Error::Diverged { .. } | Error::NonFiniteLoss { .. } | Error::Degenerate(_) => 3,
                Error::Io { .. }
                | Error::Format { .. }
                | Error::Checkpoint(_)
                | Error::MissingLargeStep { .. }
                | Error::EmptyDataset(_) => 4,
                _ => 2,
            },
            CliError::Png(_) => 4,
        }
    }
}

#[derive(Parser)]
#[command(name = "smokestep", version, about = "Large-time-step smoke simulation with learned correction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a corpus of small/large-step training pairs.
    GenData(GenData),
    /// Train the first- and second-step interpolation networks.
    TrainInterp(Train),
    /// Train the correction network against frozen interpolation networks.
    TrainCorrect(Train),
    /// Run the solve/correct/interpolate loop from a stored initial state.
    Rollout(Rollout),
    /// Compare predicted frames with reference frames.
    Eval(Eval),
    /// Write one grayscale PNG per density frame.
    Render(Render),
}

#[derive(Args)]
struct GenData {
    #[arg(long)]
    scene: Option<SceneKind>,
    /// Cells per axis.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    test_count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dt_small: Option<f64>,
    #[arg(long)]
    dt_large: Option<f64>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Train {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Directory holding `interp_first` and `interp_second`.
    #[arg(long)]
    interp: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Args)]
struct Rollout {
    /// Simulation archive whose state 0 and scene start the run.
    #[arg(long)]
    init: PathBuf,
    #[arg(long)]
    correct_ckpt: Option<PathBuf>,
    #[arg(long)]
    interp_ckpt: PathBuf,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    switch_fraction: Option<f64>,
    /// Skip the correction step.
    #[arg(long)]
    baseline: bool,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Eval {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Second prediction (e.g. an uncorrected run) overlaid in curve.csv.
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// Corpus whose test split feeds table2.csv (needs --correct-ckpt).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    correct_ckpt: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "mse,ssim,perceptual")]
    metrics: Vec<String>,
    #[arg(long)]
    extractor_weights: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Render {
    /// Frame archive.
    #[arg(long)]
    frames: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "z")]
    axis: Axis,
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    let c = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    Ok(c)
}

fn finish_config(cfg: &RunConfig, out: &Path) -> Result<()> {
    cfg.validate()?;
    cfg.save(&out.join(RESOLVED))
}

fn gen_data(a: GenData) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    let d = &mut cfg.data;
    if let Some(v) = a.scene {
        d.scene = v;
        if a.grid.is_none() {
            d.extent = v.default_extent();
        }
    }
    if let Some(v) = a.grid {
        d.extent = v;
    }
    if let Some(v) = a.steps {
        d.num_steps = v;
    }
    if let Some(v) = a.count {
        d.count = v;
    }
    if let Some(v) = a.test_count {
        d.test_count = v;
    }
    if let Some(v) = a.seed {
        d.seed = v;
    }
    if let Some(v) = a.dt_small {
        d.dt_small = v;
    }
    if let Some(v) = a.dt_large {
        d.dt_large = v;
    }
    if let Some(v) = a.jobs {
        d.jobs = v;
    }
    if d.test_count >= d.count {
        d.test_count = d.count.saturating_sub(1) / 7;
    }
    d.template = cfg.scene.clone();
    finish_config(&cfg, &a.out)?;
    let corpus = generate_corpus(&cfg.data, &a.out)?;
    let stats = corpus.stats.expect("generated corpora carry stats");
    println!(
        "{} simulations: {} train / {} val / {} test pairs, velocity rms {:.4}",
        cfg.data.count, stats.train_pairs, stats.val_pairs, stats.test_pairs, stats.velocity_rms
    );
    Ok(())
}

fn train_cfg(a: &Train) -> Result<RunConfig> {
    let mut cfg = load_config(a.config.as_deref())?;
    let t = &mut cfg.train;
    if let Some(v) = a.epochs {
        t.epochs = v;
    }
    if let Some(v) = a.seed {
        t.seed = v;
    }
    if let Some(v) = a.lr {
        t.lr = v;
    }
    if let Some(v) = a.batch_size {
        t.batch_size = v;
    }
    finish_config(&cfg, &a.out)?;
    Ok(cfg)
}

fn train_interp(a: Train) -> Result<()> {
    let cfg = train_cfg(&a)?;
    let data = TrainData::from_corpus(&Corpus::open(&a.data)?)?;
    let (_, r) = train_interpolation(&data, &cfg.train, &a.out)?;
    println!("best epoch {} (validation loss {:.6})", r.best_epoch, r.best_val);
    Ok(())
}

fn train_correct(a: Train) -> Result<()> {
    let cfg = train_cfg(&a)?;
    let data = TrainData::from_corpus(&Corpus::open(&a.data)?)?;
    let interp = match &a.interp {
        Some(p) => Some(InterpModels::load(p, cfg.rollout.switch_fraction)?),
        None => None,
    };
    let (_, r) = train_correction(&data, interp.as_ref(), &cfg.train, &a.out)?;
    println!("best epoch {} (validation loss {:.6})", r.best_epoch, r.best_val);
    Ok(())
}

/// Accepts either a checkpoint directory or a training output holding one.
fn correction_dir(p: &Path) -> PathBuf {
    if p.join(CORRECTION_DIR).join("manifest.json").exists() {
        p.join(CORRECTION_DIR)
    } else {
        p.to_path_buf()
    }
}

fn rollout(a: Rollout) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(v) = a.n {
        cfg.rollout.n = v;
    }
    if let Some(v) = a.switch_fraction {
        cfg.rollout.switch_fraction = v;
    }
    finish_config(&cfg, &a.out)?;
    let archive = SimulationArchive::open(&a.init)?;
    let solver = Solver::new(archive.manifest().scene.clone())?;
    let init = archive.read_sim_state(0)?;
    let interp = InterpModels::load(&a.interp_ckpt, cfg.rollout.switch_fraction)?;
    let out = if a.baseline {
        run_uncorrected(&solver, &interp, &init, cfg.rollout.n)?
    } else {
        let path = a
            .correct_ckpt
            .as_deref()
            .ok_or_else(|| Error::Argument("--correct-ckpt is required unless --baseline is set".into()))?;
        let net = CorrectionNet::load(&correction_dir(path))?;
        run(&solver, &net, &interp, &init, cfg.rollout.n)?
    };
    out.write(&a.out, &solver, &init)?;
    let c = out.counters;
    println!(
        "{} frames: {} solver calls, {} corrections, {} interpolations in {:.2}s",
        out.densities.len(),
        c.solver_calls,
        c.corrections,
        c.interpolations,
        out.timings.total_s
    );
    Ok(())
}

fn frames(archive: &SimulationArchive) -> Result<Vec<ScalarField>> {
    (1..=archive.num_steps()).map(|i| archive.read_density(i)).collect()
}

fn eval(a: Eval) -> Result<()> {
    let known = ["mse", "ssim", "perceptual"];
    if let Some(m) = a.metrics.iter().find(|m| !known.contains(&m.as_str())) {
        return Err(Error::Argument(format!("unknown metric {m:?}")));
    }
    let want = |m: &str| a.metrics.iter().any(|x| x == m);
    std::fs::create_dir_all(&a.out).map_err(|e| Error::Io {
        path: a.out.clone(),
        source: e,
    })?;
    let pred_a = SimulationArchive::open(&a.pred)?;
    let gt_a = SimulationArchive::open(&a.gt)?;
    let pred = frames(&pred_a)?;
    if gt_a.num_steps() < pred.len() {
        return Err(Error::Argument(format!(
            "reference holds {} frames, prediction {}",
            gt_a.num_steps(),
            pred.len()
        )));
    }
    let gt: Vec<ScalarField> = (1..=pred.len()).map(|i| gt_a.read_density(i)).collect::<Result<_>>()?;
    let phi = if want("perceptual") {
        Some(match &a.extractor_weights {
            Some(p) => FeatureExtractor::load(p)?,
            None => FeatureExtractor::random(0.25, 0)?,
        })
    } else {
        None
    };
    let two_d = pred_a.spec().d() == 2 && pred_a.spec().dims().iter().all(|&n| n >= 11);
    let mut methods = vec![("pred".to_string(), pred)];
    if let Some(b) = &a.baseline {
        let base = frames(&SimulationArchive::open(b)?)?;
        methods.push(("baseline".to_string(), base));
    }
    let mut curves = Vec::new();
    let mut rows = Vec::new();
    for (name, fr) in &methods {
        let curve = per_frame_curve(fr, &gt)?;
        let s = if want("ssim") && two_d {
            Some(mean(&fr.iter().zip(&gt).map(|(p, g)| ssim(p, g)).collect::<Result<Vec<_>>>()?))
        } else {
            None
        };
        let p = match &phi {
            Some(phi) => Some(mean(
                &fr.iter().zip(&gt).map(|(p, g)| perceptual_distance(p, g, phi)).collect::<Result<Vec<_>>>()?,
            )),
            None => None,
        };
        rows.push(AblationRow {
            method: name.clone(),
            mse: mean(&curve),
            ssim: s,
            perceptual: p,
        });
        curves.push((name.clone(), curve));
    }
    if want("mse") {
        write_curve(&a.out.join("curve.csv"), &curves)?;
    }
    write_ablation(&a.out.join("ablation.csv"), &rows)?;
    for r in &rows {
        println!("{}: mse {:.4e}", r.method, r.mse);
    }
    if let (Some(data), Some(ckpt)) = (&a.data, &a.correct_ckpt) {
        let corpus = Corpus::open(data)?;
        let pairs = corpus.load_pairs(&corpus.split.test)?;
        let net = CorrectionNet::load(&correction_dir(ckpt))?;
        let t = correction_errors(&net, &pairs)?;
        write_table2(&a.out.join("table2.csv"), &t)?;
        for r in &t {
            println!("{}: {:.4e} -> {:.4e} ({:.1}% reduced)", r.field, r.before, r.after, r.reduced_pct);
        }
    }
    Ok(())
}

fn render(a: Render) -> std::result::Result<(), CliError> {
    let archive = SimulationArchive::open(&a.frames)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::Io {
        path: a.out.clone(),
        source: e,
    })?;
    let spec: &GridSpec = archive.spec();
    if spec.d() == 2 && a.axis != Axis::Z {
        log::warn!("--axis is ignored for 2D frames");
    }
    let mut n = 0;
    for i in 0..=archive.num_steps() {
        let rho = match archive.read_density(i) {
            Ok(r) => r,
            Err(Error::Io { .. }) if i == 0 => continue,
            Err(e) => return Err(e.into()),
        };
        let img = render::planar(&rho, a.axis)?;
        render::write_png(&a.out.join(format!("frame_{i:05}.png")), &img)?;
        n += 1;
    }
    println!("wrote {n} images to {}", a.out.display());
    Ok(())
}

fn dispatch(cli: Cli) -> std::result::Result<(), CliError> {
    match cli.command {
        Command::GenData(a) => gen_data(a)?,
        Command::TrainInterp(a) => train_interp(a)?,
        Command::TrainCorrect(a) => train_correct(a)?,
        Command::Rollout(a) => rollout(a)?,
        Command::Eval(a) => eval(a)?,
        Command::Render(a) => render(a)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use smokestep::fields::GridSpec;

    #[test]
    fn gray_mapping() {
        let s = GridSpec::square(2, 8).unwrap();
        assert!(render::to_gray(&ScalarField::zeros(&s)).iter().all(|&v| v == 0));
        assert!(render::to_gray(&ScalarField::constant(&s, 1.0)).iter().all(|&v| v == 255));
        let ramp = ScalarField::from_fn(&s, |p| p[1] as f32);
        let g = render::to_gray(&ramp);
        assert_eq!(g[0], 255);
        assert_eq!(g[7 * 8], 0);
        let s3 = GridSpec::square(3, 8).unwrap();
        for axis in Axis::ALL {
            let img = render::planar(&ScalarField::constant(&s3, 0.3), axis).unwrap();
            let g = render::to_gray(&img);
            assert!(g.iter().all(|&v| v == g[0]));
        }
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::from(Error::Argument("x".into())).exit_code(), 2);
        assert_eq!(CliError::from(Error::Diverged { frame: 3, what: "x".into() }).exit_code(), 3);
        assert_eq!(CliError::from(Error::EmptyDataset("x".into())).exit_code(), 4);
    }
}
