use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use roadfuse::geometry::PyramidScale;
use roadfuse::kitti_io::{ImageSize, Split};
use roadfuse::training::Profile;
use roadfuse::Backbone;
use roadfuse_cli::{
    cmd_ablate, cmd_eval, cmd_infer, cmd_project, cmd_synth, cmd_train, exit, exit_code, EvalSubset, Overrides,
    RunConfig,
};

#[derive(Debug, Parser)]
#[command(name = "roadfuse", version, about = "Camera/LiDAR road segmentation pipeline")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML key-value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    dataset_root: Option<PathBuf>,
    /// Parent directory of timestamped run directories.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_parser = parse_profile)]
    profile: Option<Profile>,
    #[arg(long, global = true, value_parser = parse_backbone)]
    backbone: Option<Backbone>,
    #[arg(long, global = true)]
    n_rfu: Option<usize>,
    /// Bilateral hole filling of LiDAR maps (`--densify` or `--densify=false`).
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    densify: Option<bool>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset in the KITTI ROAD layout.
    Synth {
        #[arg(long, default_value_t = 8)]
        n: usize,
        /// Additional unannotated frames in the testing split.
        #[arg(long, default_value_t = 0)]
        n_test: usize,
        #[arg(long, default_value_t = 96)]
        height: usize,
        #[arg(long, default_value_t = 320)]
        width: usize,
    },
    /// Write LiDAR maps and depth previews of one frame.
    Project {
        #[arg(long)]
        frame: String,
        #[arg(long, value_delimiter = ',', default_values_t = PyramidScale::DEFAULT.to_vec())]
        scales: Vec<PyramidScale>,
    },
    /// Train a network.
    Train,
    /// Score a checkpoint on annotated frames.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value_t = Subset::Val)]
        subset: Subset,
    },
    /// Write probability maps, masks and overlays.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::Testing)]
        split: SplitArg,
        /// Frame ids; all frames of the split when omitted.
        #[arg(long = "frame")]
        frames: Vec<String>,
    },
    /// Train and validate every RFU count under every seed.
    Ablate,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Subset {
    Val,
    All,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Training,
    Testing,
}

fn parse_profile(s: &str) -> Result<Profile, String> {
    s.parse()
}

fn parse_backbone(s: &str) -> Result<Backbone, String> {
    s.parse().map_err(|e: roadfuse::network::NetworkError| e.to_string())
}

fn run(cli: Cli) -> Result<()> {
    let c = cli.common;
    let overrides = Overrides {
        profile: c.profile,
        dataset_root: c.dataset_root,
        output_dir: c.out,
        backbone: c.backbone,
        n_rfu: c.n_rfu,
        densify: c.densify,
        seed: c.seed,
    };
    let config = RunConfig::load(c.config.as_deref(), &overrides)?;
    match cli.command {
        Command::Synth {
            n,
            n_test,
            height,
            width,
        } => {
            let out = cmd_synth(&config, n, n_test, ImageSize::new(height, width))?;
            println!(
                "wrote {} training and {} testing frames to {}",
                out.training.len(),
                out.testing.len(),
                out.root.display()
            );
        }
        Command::Project { frame, scales } => {
            let out = cmd_project(&config, &frame, &scales)?;
            for m in &out.maps {
                println!("{} {} occupied={} {}", m.scale, m.size, m.occupied_cells, m.map.display());
            }
            println!("run directory: {}", out.run_dir.display());
        }
        Command::Train => {
            let out = cmd_train(&config)?;
            println!(
                "{} steps, final loss {}, best val IoU {}",
                out.steps,
                out.final_train_loss.map_or("-".into(), |v| format!("{v:.4}")),
                out.best_val_iou.map_or("-".into(), |v| format!("{:.2}%", 100.0 * v))
            );
            println!("run directory: {}", out.run_dir.display());
        }
        Command::Eval { checkpoint, subset } => {
            let subset = match subset {
                Subset::Val => EvalSubset::Val,
                Subset::All => EvalSubset::All,
            };
            let out = cmd_eval(&config, &checkpoint, subset)?;
            print!("{}", out.report);
            println!("run directory: {}", out.run_dir.display());
        }
        Command::Infer {
            checkpoint,
            split,
            frames,
        } => {
            let split = match split {
                SplitArg::Training => Split::Training,
                SplitArg::Testing => Split::Testing,
            };
            let out = cmd_infer(&config, &checkpoint, split, &frames)?;
            println!("{} frames", out.frames.len());
            if let Some(report) = &out.report {
                print!("{report}");
            }
            println!("run directory: {}", out.run_dir.display());
        }
        Command::Ablate => {
            let out = cmd_ablate(&config)?;
            print!("{}", out.report.to_table());
            println!("run directory: {}", out.run_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE } else { exit::SUCCESS });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::from(exit::SUCCESS),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
