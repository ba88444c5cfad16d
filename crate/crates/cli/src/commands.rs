use std::path::{Path, PathBuf};

use pcfg_core::bench::{bench_fps, bench_pcf_forward, bench_query_ball, TimingRecord};
use pcfg_core::cloud::{ply, Cloud};
use pcfg_core::completion::{CompletionProvider, CompletionRequest, CompletionSource, Provider};
use pcfg_core::filter::{apply_filter, FilteredGrasp, RobotFrame};
use pcfg_core::grasp::{GraspPose, Vec3};
use pcfg_core::net::{
    append_metrics, init_model, load_checkpoint, optimizer, save_checkpoint, train_step, MetricsRecord, ModelConfig,
    StepDecay, TrainSample,
};
use pcfg_core::pcf::FeatureMatrix;
use pcfg_core::pipeline::{self, CylinderSetup};
use pcfg_core::scene::{evaluate, save_labels, AntipodalConfig, EvalThresholds, Scene, ViewSpec};
use pcfg_core::{PcfError, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use pcfg_tensor::ParamStore;
use sha2::{Digest, Sha256};

use crate::settings::{Settings, Triple};
use crate::*;

fn io_err(path: &Path, e: impl std::fmt::Display) -> PcfError {
    PcfError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| PcfError::Parse {
        path: path.display().to_string(),
        msg: e.to_string(),
    })
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn sidecar(checkpoint: &Path) -> PathBuf {
    with_suffix(checkpoint, ".model.json")
}

/// `full`, `reduced` or a JSON file; without a choice, the checkpoint's
/// sidecar if one exists, else the full model.
fn model_config(s: &Settings, flag: Option<String>, checkpoint: Option<&Path>) -> Result<ModelConfig> {
    let cfg = match s.opt("model", flag)? {
        Some(m) if m == "full" => ModelConfig::default(),
        Some(m) if m == "reduced" => pipeline::reduced_model(),
        Some(path) => read_json(Path::new(&path))?,
        None => match checkpoint.map(sidecar).filter(|p| p.is_file()) {
            Some(p) => read_json(&p)?,
            None => ModelConfig::default(),
        },
    };
    cfg.validate()?;
    Ok(cfg)
}

fn save_model(path: &Path, cfg: &ModelConfig, params: &ParamStore) -> Result<()> {
    save_checkpoint(path, params)?;
    write_json(&sidecar(path), cfg)
}

/// Traceability block attached to proposal and filter outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub git_describe: String,
}

impl Provenance {
    fn new<T: Serialize>(config: &T, seed: u64) -> Result<Self> {
        let text = serde_json::to_string(config).map_err(|e| PcfError::Validation(e.to_string()))?;
        Ok(Provenance {
            config_hash: format!("{:x}", Sha256::digest(text.as_bytes())),
            seed,
            git_describe: env!("PCFG_GIT_DESCRIBE").to_string(),
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ProposalFile {
    pub provenance: Provenance,
    /// Points whose predicted axes could not form a rotation.
    pub degenerate: usize,
    pub grasps: Vec<GraspPose>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FilteredFile {
    pub provenance: Provenance,
    pub frame: RobotFrame,
    pub grasps: Vec<FilteredGrasp>,
}

/// A grasp as read for evaluation: plain proposals or filtered ones.
#[derive(Debug, Deserialize)]
struct RankedGrasp {
    #[serde(flatten)]
    pose: GraspPose,
    filtered_score: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct AnyGraspFile {
    grasps: Vec<RankedGrasp>,
}

pub fn scenegen(s: &Settings, a: ScenegenArgs) -> Result<()> {
    let out: PathBuf = s.require("out", a.out)?;
    let labels_out = s.get("labels-out", a.labels_out, out.with_extension("labels.json"))?;
    let seed = s.get("seed", a.seed, 0)?;
    let d = CylinderSetup::default();
    let setup = CylinderSetup {
        radius: s.get("radius", a.radius, d.radius)?,
        height: s.get("height", a.height, d.height)?,
        labels: AntipodalConfig {
            count: s.get("labels", a.labels, d.labels.count)?,
            friction_half_angle_deg: s.get("friction-deg", a.friction_deg, d.labels.friction_half_angle_deg)?,
            ..d.labels
        },
        ..d
    };
    let gripper = ModelConfig::default().gripper;
    let scene = setup.scene(&gripper, &mut ChaCha8Rng::seed_from_u64(seed))?;
    scene.save(&out)?;
    save_labels(&labels_out, &scene.labels)?;
    log::info!("scene with {} labels written to {}", scene.labels.len(), out.display());
    Ok(())
}

pub fn view(s: &Settings, a: ViewArgs) -> Result<()> {
    let scene = Scene::load(s.require::<PathBuf>("scene", a.scene)?)?;
    let out: PathBuf = s.require("out", a.out)?;
    let view_out = s.get("view-out", a.view_out, out.with_extension("view.json"))?;
    let d = CylinderSetup::default();
    let eye = s.get("eye", a.eye, Triple(d.eye))?;
    let target = s.get("target", a.target, Triple(d.target))?;
    let mut spec = ViewSpec::looking_at(Vec3::from(eye.0), Vec3::from(target.0))?;
    spec.samples = s.get("samples", a.samples, spec.samples)?;
    let points = s.get("points", a.points, 1024)?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.get("seed", a.seed, 0)?);
    let cloud = pipeline::partial_view(&scene, &spec, points, &mut rng)?;
    ply::write(&out, &cloud)?;
    write_json(&view_out, &spec)
}

pub fn complete(s: &Settings, a: CompleteArgs) -> Result<()> {
    let partial = ply::read(s.require::<PathBuf>("input", a.input)?)?;
    let out: PathBuf = s.require("out", a.out)?;
    let source: CompletionSource = s.get("method", a.method, "mirror".into())?.parse()?;
    let count = s.get("points", a.points, partial.len())?;
    let dir = s.get("view-dir", a.view_dir, Triple(pipeline::CAMERA_VIEW_DIR))?;
    let req = CompletionRequest::new(partial.clone(), dir.0, partial.len())?;
    let completion = Provider { source, count }.complete(&req)?;
    ply::write(&out, &completion)
}

pub fn init(s: &Settings, a: InitArgs) -> Result<()> {
    let out: PathBuf = s.require("out", a.out)?;
    let cfg = model_config(s, a.model, None)?;
    let params = init_model(&cfg, s.get("seed", a.seed, 0)?)?;
    save_model(&out, &cfg, &params)
}

fn load_model(s: &Settings, model: Option<String>, checkpoint: Option<PathBuf>) -> Result<(ModelConfig, ParamStore)> {
    let ckpt: PathBuf = s.require("checkpoint", checkpoint)?;
    let params = load_checkpoint(&ckpt)?;
    let cfg = model_config(s, model, Some(&ckpt))?;
    Ok((cfg, params))
}

pub fn features(s: &Settings, a: FeaturesArgs) -> Result<()> {
    let original = ply::read(s.require::<PathBuf>("input", a.input)?)?;
    let completion = ply::read(s.require::<PathBuf>("completion", a.completion)?)?;
    let out: PathBuf = s.require("out", a.out)?;
    let (cfg, params) = load_model(s, a.model, a.checkpoint)?;
    pipeline::features(&original, &completion, &cfg.pcf, &params)?.save(&out)
}

/// Repeated flags, or a comma-separated file entry.
fn paths(s: &Settings, key: &str, flags: Vec<PathBuf>) -> Result<Vec<PathBuf>> {
    if !flags.is_empty() {
        return Ok(flags);
    }
    let joined: Option<String> = s.opt(key, None)?;
    Ok(joined
        .map(|j| j.split(',').map(|p| PathBuf::from(p.trim())).collect())
        .unwrap_or_default())
}

pub fn train(s: &Settings, a: TrainArgs) -> Result<()> {
    let scenes = paths(s, "scene", a.scene)?;
    let views = paths(s, "view", a.view)?;
    let inputs = paths(s, "input", a.input)?;
    let completions = paths(s, "completion", a.completion)?;
    if scenes.is_empty() || [views.len(), inputs.len(), completions.len()].iter().any(|&n| n != scenes.len()) {
        return Err(PcfError::Argument(format!(
            "train needs matching --scene/--view/--input/--completion lists, got {}/{}/{}/{}",
            scenes.len(),
            views.len(),
            inputs.len(),
            completions.len()
        )));
    }
    let out: PathBuf = s.require("out", a.out)?;
    let metrics = s.get("metrics", a.metrics, with_suffix(&out, ".metrics.jsonl"))?;
    let checkpoint: Option<PathBuf> = s.opt("checkpoint", a.checkpoint)?;
    let mut cfg = model_config(s, a.model, checkpoint.as_deref())?;
    cfg.net.lr = s.get("lr", a.lr, cfg.net.lr)?;
    cfg.net.weight_decay = s.get("weight-decay", a.weight_decay, cfg.net.weight_decay)?;
    cfg.net.stop_score_grad = s.switch("stop-score-grad", a.stop_score_grad)? || cfg.net.stop_score_grad;
    if let Some(every) = s.opt("lr-decay-every", a.lr_decay_every)? {
        cfg.net.lr_decay = Some(StepDecay {
            every,
            factor: s.get("lr-decay-factor", a.lr_decay_factor, 0.5)?,
        });
    }
    cfg.validate()?;
    let steps = s.get("steps", a.steps, 500)?;
    let mut params = match &checkpoint {
        Some(p) => load_checkpoint(p)?,
        None => init_model(&cfg, s.get("seed", a.seed, 0)?)?,
    };
    let mut batch = Vec::with_capacity(scenes.len());
    for (((scene, view), input), completion) in scenes.iter().zip(&views).zip(&inputs).zip(&completions) {
        let sc = Scene::load(scene)?;
        let spec: ViewSpec = read_json(view)?;
        let labels = pipeline::camera_labels(&sc, &spec);
        let original: Cloud = ply::read(input)?;
        let comp: Cloud = ply::read(completion)?;
        batch.push(TrainSample::new(scene.display().to_string(), &original, &comp, &labels, &cfg)?);
    }
    if metrics.exists() {
        std::fs::remove_file(&metrics).map_err(|e| io_err(&metrics, e))?;
    }
    let mut opt = optimizer(&cfg.net);
    for step in 0..steps {
        let l = train_step(&batch, &cfg, &mut params, &mut opt)?;
        append_metrics(&metrics, &MetricsRecord::new(step, &l))?;
    }
    save_model(&out, &cfg, &params)
}

pub fn propose(s: &Settings, a: ProposeArgs) -> Result<()> {
    let original = ply::read(s.require::<PathBuf>("input", a.input)?)?;
    let features = FeatureMatrix::load(s.require::<PathBuf>("features", a.features)?)?;
    let out: PathBuf = s.require("out", a.out)?;
    let max = s.get("max", a.max, 1024)?;
    let seed = s.get("seed", a.seed, 0)?;
    let (cfg, params) = load_model(s, a.model, a.checkpoint)?;
    let decoded = pipeline::propose(&original, &features, &cfg, &params, max)?;
    let file = ProposalFile {
        provenance: Provenance::new(&serde_json::json!({ "model": cfg, "max": max }), seed)?,
        degenerate: decoded.degenerate,
        grasps: decoded.grasps,
    };
    write_json(&out, &file)
}

pub fn filter(s: &Settings, a: FilterArgs) -> Result<()> {
    let input: ProposalFile = read_json(&s.require::<PathBuf>("grasps", a.grasps)?)?;
    let frame: RobotFrame = read_json(&s.require::<PathBuf>("frame", a.frame)?)?;
    let out: PathBuf = s.require("out", a.out)?;
    let file = FilteredFile {
        grasps: apply_filter(&input.grasps, &frame),
        provenance: input.provenance,
        frame,
    };
    write_json(&out, &file)
}

pub fn eval(s: &Settings, a: EvalArgs) -> Result<()> {
    let file: AnyGraspFile = read_json(&s.require::<PathBuf>("grasps", a.grasps)?)?;
    let scene = Scene::load(s.require::<PathBuf>("scene", a.scene)?)?;
    let spec: ViewSpec = read_json(&s.require::<PathBuf>("view", a.view)?)?;
    let cloud = ply::read(s.require::<PathBuf>("cloud", a.cloud)?)?;
    let out: PathBuf = s.require("out", a.out)?;
    let d = EvalThresholds::default();
    let th = EvalThresholds {
        translation: s.get("translation", a.translation, d.translation)?,
        rotation_deg: s.get("rotation-deg", a.rotation_deg, d.rotation_deg)?,
        k: s.get("k", a.k, d.k)?,
    };
    // filtered files are ranked by the filtered score
    let proposals: Vec<GraspPose> = file
        .grasps
        .into_iter()
        .map(|g| GraspPose {
            score: g.filtered_score.unwrap_or(g.pose.score),
            ..g.pose
        })
        .collect();
    let gripper = ModelConfig::default().gripper;
    let labels = pipeline::label_poses(&pipeline::camera_labels(&scene, &spec), &gripper)?;
    let m = evaluate(&proposals, &labels, &cloud, &th, &gripper)?;
    write_json(&out, &m)
}

pub fn bench(s: &Settings, a: BenchArgs) -> Result<()> {
    let threads = s.get("threads", a.threads, 1)?;
    if threads != 1 {
        return Err(PcfError::Argument(format!(
            "kernels run single-threaded; --threads must be 1, got {threads}"
        )));
    }
    let repeats = s.get("repeats", a.repeats, 10)?;
    let seed = s.get("seed", a.seed, 0)?;
    let rec: TimingRecord = match a.kernel.as_str() {
        "fps" => bench_fps(s.get("n", a.n, 20_000)?, s.get("m", a.m, 2048)?, repeats, seed)?,
        "query_ball" => bench_query_ball(
            s.get("n", a.n, 20_000)?,
            s.get("m", a.m, 2048)?,
            s.get("radius", a.radius, 0.04)?,
            s.get("k", a.k, 64)?,
            repeats,
            seed,
        )?,
        "pcf_forward" => bench_pcf_forward(&model_config(s, a.model, None)?.pcf, repeats, seed)?,
        other => {
            return Err(PcfError::Argument(format!(
                "unknown kernel `{other}` (fps|query_ball|pcf_forward)"
            )))
        }
    };
    match s.opt::<PathBuf>("out", a.out)? {
        Some(p) => write_json(&p, &rec),
        None => {
            println!("{}", serde_json::to_string(&rec).map_err(|e| PcfError::Validation(e.to_string()))?);
            Ok(())
        }
    }
}
