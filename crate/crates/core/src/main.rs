use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use elastoinv::calibrate::{calibrate, CalibrationResult};
use elastoinv::config::{defaults_help, RunConfig};
use elastoinv::container::Container;
use elastoinv::dataset::{load_dataset, save_dataset, Dataset};
use elastoinv::error::{Error, Result};
use elastoinv::fem::{rasterize_phantom, synthesize};
use elastoinv::fields::ScalarGrid;
use elastoinv::report::{export_heatmap, export_report, report_dir, ColorScale};
use elastoinv::train::{predict_fields, train, write_history_csv, save_checkpoint, PredictedFields, TrainOptions};

const DATASET_FILE: &str = "dataset.efd";
const PREDICTED_FILE: &str = "predicted.efd";
const CALIBRATION_FILE: &str = "calibration.efd";
const SNAPSHOT_FILE: &str = "config.txt";

#[derive(Parser, Debug)]
#[command(name = "elastoinv", version, about = "Elasticity reconstruction from 2-D displacement fields")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Flat `key = value` config file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run directory holding every artifact
    #[arg(long, global = true, default_value = "run")]
    out_dir: PathBuf,
    /// RNG seed (overrides the config)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Multiplier on every stage length (overrides the config)
    #[arg(long, global = true)]
    desk_scale: Option<f64>,
    /// Override one config key, e.g. `--set width=32`; repeatable
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Rasterize a phantom, solve the forward problem and add noise
    Generate,
    /// Train the three networks on a dataset
    Train,
    /// Scale the relative modulus to absolute units with the applied force
    Calibrate,
    /// Compare predictions against the dataset's ground truth
    Evaluate {
        /// Report the ground truth itself as the prediction
        #[arg(long)]
        truth_as_prediction: bool,
    },
    /// Render every grid in a container file as a heatmap
    Plot {
        /// Container to render (default: <out-dir>/predicted.efd)
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cmd = <Cli as clap::CommandFactory>::command().after_help(defaults_help());
    let matches = match cmd.try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let cli = match <Cli as clap::FromArgMatches>::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    let missing = matches!(e, Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound);
    if e.is_validation() || missing {
        1
    } else {
        2
    }
}

fn resolve_config(g: &Global) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for kv in &g.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(s) = g.seed {
        cfg.set("seed", &s.to_string())?;
    }
    if let Some(f) = g.desk_scale {
        cfg.set("desk_scale_factor", &f.to_string())?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli.global)?;
    let dir = cli.global.out_dir.as_path();
    // Validate everything the command needs before touching the run directory.
    match &cli.command {
        Command::Generate => {
            cfg.seed()?;
            cfg.phantom()?;
            cfg.boundary()?;
            cfg.snr()?;
        }
        Command::Train => {
            cfg.schedule()?;
            cfg.architecture()?;
            cfg.weights()?;
            cfg.e_c()?;
        }
        _ => {}
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    cfg.write_snapshot(&dir.join(SNAPSHOT_FILE))?;
    match cli.command {
        Command::Generate => cmd_generate(&cfg, dir),
        Command::Train => cmd_train(&cfg, dir),
        Command::Calibrate => cmd_calibrate(&cfg, dir),
        Command::Evaluate { truth_as_prediction } => cmd_evaluate(&cfg, dir, truth_as_prediction),
        Command::Plot { input } => cmd_plot(dir, input.as_deref()),
    }
}

fn dataset_path(cfg: &RunConfig, dir: &Path) -> PathBuf {
    cfg.dataset_path().map_or_else(|| dir.join(DATASET_FILE), PathBuf::from)
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Invalid(format!("{what} not found at {}", path.display())))
    }
}

fn open_dataset(cfg: &RunConfig, dir: &Path) -> Result<Dataset> {
    let p = dataset_path(cfg, dir);
    require_file(&p, "dataset")?;
    load_dataset(&p)
}

fn open_predicted(dir: &Path) -> Result<PredictedFields> {
    let p = dir.join(PREDICTED_FILE);
    require_file(&p, "predicted fields (run `train` first)")?;
    PredictedFields::load(&p)
}

fn cmd_generate(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let (ny, nx) = cfg.lattice()?;
    let elas = rasterize_phantom(&cfg.phantom()?, ny, nx)?;
    let ds = synthesize(&elas, &cfg.boundary()?, cfg.snr()?, cfg.seed()?)?;
    let out = dataset_path(cfg, dir);
    save_dataset(&ds, &out)?;
    println!("wrote {} ({}x{} nodes, applied force {:.6e})", out.display(), ds.dim().0, ds.dim().1, ds.applied_force.unwrap_or(0.0));
    Ok(())
}

fn cmd_train(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let ds = open_dataset(cfg, dir)?;
    let schedule = cfg.schedule()?;
    let opts = TrainOptions {
        checkpoint_dir: Some(dir.to_path_buf()),
        log_every: cfg.log_every()?,
        ..Default::default()
    };
    let state = match train(&ds, &schedule, &cfg.weights()?, cfg.e_c()?, &cfg.architecture()?, &opts) {
        Ok(s) => s,
        Err(Error::Diverged { iteration, state }) => {
            write_history_csv(&state.history, &dir.join("history.csv"))?;
            return Err(Error::Diverged { iteration, state });
        }
        Err(e) => return Err(e),
    };
    write_history_csv(&state.history, &dir.join("history.csv"))?;
    save_checkpoint(&state, &dir.join("final.npk"))?;
    predict_fields(&state, &ds)?.save(&dir.join(PREDICTED_FILE))?;
    if let Some(last) = state.final_loss() {
        let l = last.loss;
        println!(
            "trained {} iterations: L_u {:.4e} L_eps {:.4e} L_r {:.4e} L_E {:.4e} total {:.4e}",
            state.iteration, l.l_u, l.l_eps, l.l_r, l.l_e, l.total
        );
    }
    Ok(())
}

fn cmd_calibrate(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let ds = open_dataset(cfg, dir)?;
    let pred = open_predicted(dir)?;
    let force = ds
        .applied_force
        .ok_or_else(|| Error::Uncalibratable("dataset has no applied force".into()))?;
    let cal = calibrate(pred.elasticity.e(), &pred.stress, force, ds.h())?;
    cal.save(&dir.join(CALIBRATION_FILE))?;
    println!("c_hat {:.6e} (predicted boundary force {:.6e}, applied {:.6e})", cal.c_hat, cal.boundary_force_predicted, force);
    Ok(())
}

fn cmd_evaluate(cfg: &RunConfig, dir: &Path, truth_as_prediction: bool) -> Result<()> {
    let ds = open_dataset(cfg, dir)?;
    let (pred, cal) = if truth_as_prediction {
        (PredictedFields::from_truth(&ds)?, None)
    } else {
        let p = dir.join(CALIBRATION_FILE);
        let cal = if p.is_file() { Some(CalibrationResult::load(&p)?) } else { None };
        (open_predicted(dir)?, cal)
    };
    let out = report_dir(dir);
    let rows = export_report(&out, &pred, &ds, cal.as_ref())?;
    if rows.is_empty() {
        println!("no ground truth in dataset; wrote prediction heatmaps to {}", out.display());
    }
    for r in rows {
        match r.mre {
            Some(m) => println!("{:<4} mae {:.6e} mre {:.4}%", r.field, r.mae, m),
            None => println!("{:<4} mae {:.6e}", r.field, r.mae),
        }
    }
    Ok(())
}

fn cmd_plot(dir: &Path, input: Option<&Path>) -> Result<()> {
    let src = input.map_or_else(|| dir.join(PREDICTED_FILE), Path::to_path_buf);
    require_file(&src, "plot input")?;
    let c = Container::read(&src)?;
    let out = dir.join("plots");
    let mut n = 0;
    for b in c.blocks() {
        let g = ScalarGrid::from_vec(b.rows, b.cols, 1.0, 1.0, b.data.clone())?;
        export_heatmap(&g, &out.join(format!("{}.png", b.name)), ColorScale::Auto)?;
        n += 1;
    }
    println!("wrote {n} heatmaps to {}", out.display());
    Ok(())
}
