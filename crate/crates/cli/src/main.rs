//! `pcfgrasp`: scene generation, rendering, completion, features, training,
//! grasp proposals, score filtering, evaluation and kernel benchmarks.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pcfg_core::Result;
use settings::Triple;

#[derive(Parser, Debug)]
#[command(name = "pcfgrasp", version, about = "Point-completion grasp pipeline")]
struct Cli {
    /// key=value file with defaults for any long option; flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Upright cylinder scene with antipodal labels.
    Scenegen(ScenegenArgs),
    /// Render a single-view partial cloud (camera frame).
    View(ViewArgs),
    /// Coarse completion of a partial cloud.
    Complete(CompleteArgs),
    /// Write a random-init checkpoint.
    Init(InitArgs),
    /// Feature matrix of a partial cloud and its completion.
    Features(FeaturesArgs),
    /// Train on one or more rendered scenes.
    Train(TrainArgs),
    /// Grasp proposals from a frozen checkpoint.
    Propose(ProposeArgs),
    /// Re-score proposals for a robot base.
    Filter(FilterArgs),
    /// Precision, coverage and collision rate against scene labels.
    Eval(EvalArgs),
    /// Time a point-cloud kernel.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
pub struct ScenegenArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Defaults to `<out>` with extension `labels.json`.
    #[arg(long)]
    pub labels_out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub height: Option<f64>,
    /// Number of labels requested.
    #[arg(long)]
    pub labels: Option<usize>,
    #[arg(long)]
    pub friction_deg: Option<f64>,
}

#[derive(Args, Debug)]
pub struct ViewArgs {
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Defaults to `<out>` with extension `view.json`.
    #[arg(long)]
    pub view_out: Option<PathBuf>,
    #[arg(long)]
    pub eye: Option<Triple>,
    #[arg(long)]
    pub target: Option<Triple>,
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct CompleteArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `mirror`, `mirror:rear` or `file:<path>`.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub points: Option<usize>,
    /// Viewing direction in the cloud frame.
    #[arg(long)]
    pub view_dir: Option<Triple>,
}

#[derive(Args, Debug)]
pub struct InitArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `full`, `reduced` or a model JSON file.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub completion: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Scene JSON, once per training scene.
    #[arg(long)]
    pub scene: Vec<PathBuf>,
    /// View JSON written by `view`, matching each scene.
    #[arg(long)]
    pub view: Vec<PathBuf>,
    /// Partial cloud, matching each scene.
    #[arg(long)]
    pub input: Vec<PathBuf>,
    /// Completion cloud, matching each scene.
    #[arg(long)]
    pub completion: Vec<PathBuf>,
    /// Starting checkpoint; random init from `--seed` when absent.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Multiply the learning rate by `--lr-decay-factor` every this many steps.
    #[arg(long)]
    pub lr_decay_every: Option<u64>,
    #[arg(long)]
    pub lr_decay_factor: Option<f64>,
    #[arg(long)]
    pub stop_score_grad: bool,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct ProposeArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub max: Option<usize>,
    /// Recorded in the provenance block.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct FilterArgs {
    #[arg(long)]
    pub grasps: Option<PathBuf>,
    /// Robot frame JSON: {"origin", "z_axis", "R_cr", optional "t_cr"}.
    #[arg(long)]
    pub frame: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub grasps: Option<PathBuf>,
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long)]
    pub view: Option<PathBuf>,
    /// Camera-frame cloud used for collision checks.
    #[arg(long)]
    pub cloud: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub translation: Option<f64>,
    #[arg(long)]
    pub rotation_deg: Option<f64>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// `fps`, `query_ball` or `pcf_forward`.
    pub kernel: String,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Timing JSON; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<()> {
    let s = match &cli.config {
        Some(p) => settings::Settings::load(p)?,
        None => settings::Settings::default(),
    };
    match cli.cmd {
        Cmd::Scenegen(a) => commands::scenegen(&s, a),
        Cmd::View(a) => commands::view(&s, a),
        Cmd::Complete(a) => commands::complete(&s, a),
        Cmd::Init(a) => commands::init(&s, a),
        Cmd::Features(a) => commands::features(&s, a),
        Cmd::Train(a) => commands::train(&s, a),
        Cmd::Propose(a) => commands::propose(&s, a),
        Cmd::Filter(a) => commands::filter(&s, a),
        Cmd::Eval(a) => commands::eval(&s, a),
        Cmd::Bench(a) => commands::bench(&s, a),
    }
}

fn fail(code: &str, message: &str) -> ExitCode {
    eprintln!("{}", serde_json::json!({ "code": code, "message": message }));
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => return fail("ARGUMENT", e.to_string().trim()),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.code(), &e.to_string()),
    }
}

