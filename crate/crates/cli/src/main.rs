use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use avfield::anerf::Fusion;
use avfield::dataio::Split;
use avfield::error::Result;
use avfield::simulator::DatasetKind;
use avfield_cli::commands::{self, GenDataArgs};
use avfield_cli::config::{Overrides, RunConfig};
use avfield_cli::exit_code;

/// Audio-visual neural fields: simulate scenes, train, evaluate and render.
#[derive(Parser, Debug)]
#[command(name = "avfield", version)]
struct Cli {
    /// Log more (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Only log errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a dataset from a scene description.
    GenData {
        #[arg(long)]
        scene: PathBuf,
        /// Number of poses.
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fraction of poses in the training split.
        #[arg(long, default_value_t = 0.8)]
        split: f64,
        #[arg(long, value_enum, default_value_t = KindArg::Binaural)]
        kind: KindArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on a dataset: radiance field first when the AV mapper is on, then
    /// the acoustic (or impulse-response) field.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// JSON run config; flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        flags: TrainFlags,
    },
    /// Score a checkpoint and the baselines on a dataset split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::Val)]
        split: SplitArg,
    },
    /// Render per-pose audio, views and channel energies along a pose list.
    RenderTrajectory {
        #[arg(long)]
        checkpoint: PathBuf,
        /// JSON list of poses.
        #[arg(long)]
        poses: PathBuf,
        /// Dry source clip, one per scene source in order.
        #[arg(long = "source")]
        sources: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct TrainFlags {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Hidden width of the acoustic networks.
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    lr_init: Option<f64>,
    #[arg(long)]
    lr_final: Option<f64>,
    #[arg(long, conflicts_with = "no_coordinate_transform")]
    coordinate_transform: bool,
    /// Feed absolute positions and headings instead of source-relative ones.
    #[arg(long)]
    no_coordinate_transform: bool,
    #[arg(long, conflicts_with = "no_av_mapper")]
    av_mapper: bool,
    #[arg(long)]
    no_av_mapper: bool,
    #[arg(long, value_enum)]
    fusion: Option<FusionArg>,
    #[arg(long, conflicts_with = "no_refine")]
    refine: bool,
    #[arg(long)]
    no_refine: bool,
    /// Epochs of radiance-field pretraining.
    #[arg(long)]
    vnerf_epochs: Option<usize>,
}

fn switch(on: bool, off: bool) -> Option<bool> {
    match (on, off) {
        (true, _) => Some(true),
        (_, true) => Some(false),
        _ => None,
    }
}

impl TrainFlags {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            epochs: self.epochs,
            batch_size: self.batch_size,
            width: self.width,
            lr_init: self.lr_init,
            lr_final: self.lr_final,
            coordinate_transform: switch(self.coordinate_transform, self.no_coordinate_transform),
            av_mapper: switch(self.av_mapper, self.no_av_mapper),
            fusion: self.fusion.map(Into::into),
            refine: switch(self.refine, self.no_refine),
            vnerf_epochs: self.vnerf_epochs,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KindArg {
    Binaural,
    Ir,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitArg {
    Train,
    Val,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FusionArg {
    AddInput,
    Concat,
    AddAll,
}

impl From<FusionArg> for Fusion {
    fn from(f: FusionArg) -> Self {
        match f {
            FusionArg::AddInput => Fusion::AddInput,
            FusionArg::Concat => Fusion::Concat,
            FusionArg::AddAll => Fusion::AddAll,
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenData {
            scene,
            n,
            seed,
            split,
            kind,
            out,
        } => {
            let kind = match kind {
                KindArg::Binaural => DatasetKind::Binaural,
                KindArg::Ir => DatasetKind::ImpulseResponse,
            };
            let (t, v) = commands::gen_data(&GenDataArgs {
                scene,
                n,
                seed,
                split,
                kind,
                out,
            })?;
            println!("{t} train / {v} val samples");
        }
        Command::Train {
            data,
            out,
            config,
            flags,
        } => {
            let mut cfg = match config {
                Some(p) => RunConfig::load(&p)?,
                None => RunConfig::default(),
            };
            cfg.apply(&flags.overrides());
            let o = commands::train_run(&data, &out, &cfg)?;
            match o.history.last() {
                Some(h) => println!("final loss {:.6e} after {} epochs", h.loss, o.history.len()),
                None => println!("no epochs run; checkpoint holds the initialization"),
            }
            println!("{}", o.checkpoint.display());
        }
        Command::Eval {
            checkpoint,
            data,
            out,
            split,
        } => {
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Val => Split::Val,
            };
            let reports = commands::eval_run(&checkpoint, &data, &out, split)?;
            print!("{}", commands::reports_csv(&reports));
        }
        Command::RenderTrajectory {
            checkpoint,
            poses,
            sources,
            out,
        } => {
            let poses = commands::load_poses(&poses)?;
            let frames = commands::render_trajectory(&checkpoint, &poses, &sources, &out)?;
            println!("rendered {} poses", frames.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => "error",
        (false, 0) => "warn",
        (false, 1) => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("avfield: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
