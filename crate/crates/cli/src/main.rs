//! `mvtrack`: simulate synthetic multi-view sequences, track them, score
//! trajectories and run the camera-angle and resolution sweeps.
//!
//! Exit status: 0 on success, 1 for invalid configuration or input files,
//! 2 when tracking or a sweep fails at run time. A tracked frame that is
//! lost and reset to ground truth is counted, not treated as a failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use mvtrack::harness::{
    evaluate, simulate, sweep, track, write_sequence, write_tables, write_track_output, DiskSequence,
    ExperimentConfig, HarnessError, StateDump, TrackOptions,
};
use mvtrack::io::{load_rig, load_trajectory};
use mvtrack::simulator::RigPattern;

#[derive(Parser, Debug)]
#[command(name = "mvtrack", version, about = "Multi-view 6DoF object pose tracking experiments")]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic sequence directory.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Track a sequence directory.
    Track {
        /// Sequence directory written by `simulate`.
        sequence: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Comma-separated camera indices.
        #[arg(long, env = "MVTRACK_VIEWS", value_delimiter = ',')]
        views: Vec<usize>,
        /// Track with camera 0 only.
        #[arg(long, env = "MVTRACK_MONOCULAR")]
        monocular: bool,
        /// Never reset to ground truth.
        #[arg(long)]
        no_reset: bool,
        /// Continue after the frame stored in this state dump.
        #[arg(long, env = "MVTRACK_RESUME")]
        resume: Option<PathBuf>,
        /// Write the tracker state after this frame to `state_<k>.json`.
        #[arg(long)]
        checkpoint: Option<usize>,
    },
    /// Score a predicted trajectory against ground truth.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// OBJ path or procedural mesh name.
        #[arg(long)]
        mesh: String,
        /// Express per-axis errors in camera 0 of this rig.
        #[arg(long)]
        rig: Option<PathBuf>,
        #[arg(long, env = "MVTRACK_OUT", default_value = "eval")]
        out: PathBuf,
        /// Also write the ADD curve as SVG.
        #[arg(long)]
        plot: bool,
    },
    /// Run the configured angle and resolution sweeps.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Leave out the monocular baseline column.
        #[arg(long)]
        no_monocular: bool,
    },
}

/// Config file plus the overrides shared by several subcommands.
#[derive(Args, Debug)]
struct Common {
    #[arg(long, env = "MVTRACK_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, env = "MVTRACK_OUT", default_value = "out")]
    out: PathBuf,
    #[arg(long, env = "MVTRACK_SEED")]
    seed: Option<u64>,
    /// Rig layout: plane or cone.
    #[arg(long, env = "MVTRACK_PATTERN")]
    pattern: Option<RigPattern>,
    #[arg(long, env = "MVTRACK_ROUNDS")]
    rounds: Option<u32>,
    #[arg(long, env = "MVTRACK_ITERS")]
    iters: Option<u32>,
    /// Band half-width in pixels at 640 px width.
    #[arg(long, env = "MVTRACK_BAND")]
    band: Option<f64>,
    #[arg(long, env = "MVTRACK_STRIDE")]
    stride: Option<u32>,
}

enum Failure {
    Input(String),
    Runtime(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Solver(_) | HarnessError::Sim(_) => Failure::Runtime(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, Failure> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.motion.seed = s;
        }
        if let Some(p) = self.pattern {
            cfg.rig.pattern = p;
        }
        if let Some(r) = self.rounds {
            cfg.solver.rounds = r;
        }
        if let Some(i) = self.iters {
            cfg.solver.iters_per_round = i;
        }
        if let Some(b) = self.band {
            cfg.solver.energy.band_halfwidth = b;
        }
        if let Some(s) = self.stride {
            cfg.solver.energy.stride = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate { common } => {
            let cfg = common.load()?;
            let seq = simulate(&cfg)?;
            write_sequence(&seq, &common.out)?;
            println!("{}", common.out.display());
        }
        Command::Track {
            sequence,
            common,
            views,
            monocular,
            no_reset,
            resume,
            checkpoint,
        } => {
            let cfg = common.load()?;
            let data = DiskSequence::open(&sequence)?;
            let views = if monocular { vec![0] } else { views };
            let opts = TrackOptions {
                views,
                initial: None,
                reset_with_gt: !no_reset,
                resume: resume.as_deref().map(StateDump::load).transpose()?,
                checkpoint,
            };
            let out = track(&data, &cfg, &opts)?;
            write_track_output(&out, &common.out)?;
            let lost = out.reports.iter().filter(|r| r.lost.is_some()).count();
            info!("tracked {} frames, {} lost, {} reset", out.reports.len(), lost, out.resets.len());
            let unrecovered = out.reports.iter().filter(|r| r.lost.is_some() && !r.reset).count();
            if unrecovered > 0 {
                return Err(Failure::Runtime(format!(
                    "tracking lost without reset on {unrecovered} of {} frames (outputs written)",
                    out.reports.len()
                )));
            }
        }
        Command::Evaluate {
            pred,
            gt,
            mesh,
            rig,
            out,
            plot,
        } => {
            let pred = load_trajectory(&pred).map_err(HarnessError::from)?;
            let gt = load_trajectory(&gt).map_err(HarnessError::from)?;
            let base = ExperimentConfig::default();
            let mesh = base.resolve_mesh(&mesh, "mesh")?;
            let rig = rig.as_deref().map(load_rig).transpose().map_err(HarnessError::from)?;
            let ev = evaluate(&pred, &gt, &mesh, rig.as_ref().map(|r| &r[0]), &base.lost_rule)?;
            ev.write(&out, plot)?;
            print!("{}", ev.summary_csv());
        }
        Command::Sweep { common, no_monocular } => {
            let mut cfg = common.load()?;
            if no_monocular {
                cfg.sweep.monocular = false;
            }
            let tables = sweep(&cfg)?;
            write_tables(&tables, &common.out)?;
            for (name, t) in &tables {
                for c in &t.columns {
                    for e in &c.errors {
                        warn!("{name} [{}]: {e}", c.label);
                    }
                }
                println!("{}", common.out.join(name).display());
            }
        }
    }
    Ok(())
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MVTRACK_LOG", level)).init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    init_logging(cli.verbose);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
