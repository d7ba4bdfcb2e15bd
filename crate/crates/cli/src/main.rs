//! `foa-reid`: scene generation, student training, reassignment runs, sweeps
//! and re-evaluation from one config file plus flag overrides.

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use foa_reid::beamform::{beamform, SteeringTrajectory, DEFAULT_PATTERN};
use foa_reid::experiment::{
    cmd_eval, cmd_gen, cmd_run, cmd_sweep, cmd_train, load_scene, ExperimentConfig, RunOutcome,
};
use foa_reid::track::read_tracks;
use foa_reid::wav::write_mono;
use foa_reid::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_TRAIN_FAILED: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "foa-reid",
    version,
    about = "Speaker re-identification experiments on simulated ambisonic scenes",
    after_help = "Any config field can be overridden with a dotted flag, \
                  e.g. --reassign.block_frames 25 or --scenes.overlap=0.4."
)]
struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a scene batch to disk.
    Gen,
    /// Distill the student extractor on the batch.
    Train,
    /// Simulate the tracker, reassign and score every scene.
    Run,
    /// Run once per value of `sweep.axis` and write one CSV table.
    Sweep,
    /// Re-score the artifacts of a previous run.
    Eval,
    /// Write the beamformed mono signal along one track of a scene.
    Beamform {
        /// Scene directory.
        scene: PathBuf,
        /// Track index.
        #[arg(long, default_value_t = 0)]
        track: usize,
        /// Track CSV to steer along instead of the ground truth.
        #[arg(long, value_name = "CSV")]
        tracks: Option<PathBuf>,
        /// Pattern parameter (0.5 = cardioid).
        #[arg(long, default_value_t = DEFAULT_PATTERN)]
        pattern: f64,
        /// Output WAV file.
        #[arg(long, short, value_name = "WAV")]
        output: PathBuf,
    },
}

type Overrides = Vec<(String, String)>;

/// Pulls `--a.b value` and `--a.b=value` out of the argument list.
fn split_overrides(args: Vec<OsString>) -> Result<(Vec<OsString>, Overrides), String> {
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let Some(s) = arg.to_str() else {
            rest.push(arg);
            continue;
        };
        if s == "--" {
            rest.push(arg);
            rest.extend(it);
            break;
        }
        let Some(body) = s.strip_prefix("--") else {
            rest.push(arg);
            continue;
        };
        let (key, inline) = match body.split_once('=') {
            Some((k, v)) => (k, Some(v.to_string())),
            None => (body, None),
        };
        if !key.contains('.') {
            rest.push(arg);
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => it
                .next()
                .and_then(|v| v.into_string().ok())
                .ok_or_else(|| format!("override --{key} needs a value"))?,
        };
        overrides.push((key.to_string(), value));
    }
    Ok((rest, overrides))
}

fn load_config(
    cli: &Cli,
    mut overrides: Vec<(String, String)>,
) -> foa_reid::Result<ExperimentConfig> {
    if let Some(s) = cli.seed {
        overrides.push(("seed".into(), s.to_string()));
    }
    if let Some(w) = cli.workers {
        overrides.push(("workers".into(), w.to_string()));
    }
    if let Some(o) = &cli.out {
        let path = o
            .to_str()
            .ok_or_else(|| Error::Config("--out is not valid UTF-8".into()))?;
        // Quoted so the value is always read as a string.
        overrides.push(("out".into(), toml::Value::String(path.into()).to_string()));
    }
    let cfg = ExperimentConfig::load(cli.config.as_deref(), &overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

fn print_run(label: &str, run: &RunOutcome) {
    println!("{label}: {} rows in {}", run.rows.len(), run.dir.display());
    for s in &run.summaries {
        let std = s
            .bootstrap
            .as_ref()
            .map(|b| format!(" ± {:.4}", b.std))
            .unwrap_or_default();
        println!(
            "  {:<20} {:>6}  scenes {:>3}  AssA {:.4}{std}  swaps {:.2}",
            s.condition, s.block_or_context_ms, s.scenes, s.mean_assa, s.mean_swaps
        );
    }
}

fn exit_for(e: &Error) -> u8 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn beamform_cmd(
    scene: &std::path::Path,
    track: usize,
    tracks: Option<&std::path::Path>,
    pattern: f64,
    output: &std::path::Path,
) -> foa_reid::Result<()> {
    let loaded = load_scene(scene)?;
    let truth = &loaded.scene.truth;
    let all = match tracks {
        Some(p) => read_tracks(p)?,
        None => truth.tracks.clone(),
    };
    let t = all.get(track).ok_or_else(|| {
        Error::InvalidInput(format!("track {track} out of range (have {})", all.len()))
    })?;
    let traj = SteeringTrajectory::new(t.directions.clone(), t.active.clone(), truth.grid)?;
    let mono = beamform(&loaded.scene.mixture, &traj, pattern)?;
    write_mono(output, &mono, loaded.scene.mixture.sample_rate())?;
    println!("beamform: {} samples -> {}", mono.len(), output.display());
    Ok(())
}

fn execute(cli: &Cli, cfg: &ExperimentConfig) -> foa_reid::Result<u8> {
    match &cli.command {
        Command::Gen => {
            let g = cmd_gen(cfg)?;
            println!(
                "gen: {} scenes in {} (mean overlap {:.3})",
                g.scenes,
                g.dir.display(),
                g.mean_overlap
            );
        }
        Command::Train => {
            let t = cmd_train(cfg)?;
            println!(
                "train: {} epochs, loss {:.6} -> {:.6}, model {}",
                t.epochs,
                t.initial_loss,
                t.final_loss,
                t.model_path.display()
            );
            if t.failed() {
                eprintln!("error: training did not reduce the loss");
                return Ok(EXIT_TRAIN_FAILED);
            }
        }
        Command::Run => print_run("run", &cmd_run(cfg)?),
        Command::Eval => print_run("eval", &cmd_eval(cfg)?),
        Command::Sweep => {
            let s = cmd_sweep(cfg)?;
            println!("sweep: {} rows -> {}", s.rows.len(), s.csv_path.display());
            for r in &s.rows {
                println!(
                    "  {}={:<8} {:<20} AssA {:.4}",
                    r.axis, r.value, r.condition, r.mean_assa
                );
            }
        }
        Command::Beamform {
            scene,
            track,
            tracks,
            pattern,
            output,
        } => beamform_cmd(scene, *track, tracks.as_deref(), *pattern, output)?,
    }
    Ok(0)
}

fn main() -> ExitCode {
    let (args, overrides) = match split_overrides(std::env::args_os().collect()) {
        Ok(v) => v,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp
                | ErrorKind::DisplayVersion
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_CONFIG),
            };
        }
    };
    let cfg = match load_config(&cli, overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match execute(&cli, &cfg) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}
