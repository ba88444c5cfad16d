use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use pcfg_tensor::{checkpoint, AdamWConfig, OptimizerState, ParamStore, Tape, Tensor, TensorError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{init_net_params, net_tape, LossBreakdown, NetConfig, NetGeometry, PredVars, Targets};
use crate::cloud::Cloud;
use crate::error::{argument, PcfError, Result};
use crate::grasp::{ContactGrasp, GripperModel};
use crate::nn::Bound;
use crate::pcf::{concat_points, init_pcf_params, pcf_geometry, pcf_tape, PcfConfig, PcfGeometry};

/// Everything needed to run the feature layer and the network together.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub pcf: PcfConfig,
    pub net: NetConfig,
    pub gripper: GripperModel,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.pcf.validate()?;
        self.net.validate()?;
        self.gripper.validate()
    }
}

/// Seeded initialization of the feature layer and network parameters.
pub fn init_model(cfg: &ModelConfig, seed: u64) -> Result<ParamStore> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamStore::new();
    init_pcf_params(&mut params, &cfg.pcf, &mut rng);
    init_net_params(&mut params, &cfg.net, cfg.pcf.out_channels(), &mut rng);
    Ok(params)
}

/// One preprocessed scene: geometry of both stages and its targets.
#[derive(Clone, Debug)]
pub struct TrainSample {
    pub id: String,
    pub pcf: PcfGeometry,
    pub net: NetGeometry,
    pub targets: Targets,
}

impl TrainSample {
    pub fn new(
        id: impl Into<String>,
        original: &Cloud,
        completion: &Cloud,
        labels: &[ContactGrasp],
        cfg: &ModelConfig,
    ) -> Result<Self> {
        let concat = concat_points(original, completion, cfg.pcf.points)?;
        Ok(TrainSample {
            id: id.into(),
            pcf: pcf_geometry(original, &concat, &cfg.pcf)?,
            net: NetGeometry::new(original, &cfg.net)?,
            targets: Targets::new(original, labels, &cfg.gripper, cfg.net.label_radius)?,
        })
    }
}

/// Feature layer followed by the network, all on one tape.
pub fn model_tape<'t>(p: &Bound<'t>, sample: &TrainSample, cfg: &ModelConfig) -> Result<PredVars<'t>> {
    let f = pcf_tape(p, &sample.pcf, &cfg.pcf, 0..sample.pcf.points)?;
    net_tape(p, &sample.net, f, &cfg.net)
}

pub fn optimizer(cfg: &NetConfig) -> OptimizerState {
    OptimizerState::new(AdamWConfig {
        learning_rate: cfg.lr,
        weight_decay: cfg.weight_decay,
        ..AdamWConfig::default()
    })
}

fn check_finite(scene: &str, l: &LossBreakdown) -> Result<()> {
    for (term, v) in [("l_bce", l.l_bce), ("l_adds", l.l_adds), ("l_width", l.l_width), ("l_total", l.l_total)] {
        if !v.is_finite() {
            return Err(PcfError::Training {
                scene: scene.to_string(),
                term: term.to_string(),
            });
        }
    }
    Ok(())
}

/// Loss and parameter gradients of one scene.
pub fn scene_gradients(
    sample: &TrainSample,
    cfg: &ModelConfig,
    params: &ParamStore,
) -> Result<(LossBreakdown, BTreeMap<String, Tensor>)> {
    let tape = Tape::new();
    let p = Bound::new(&tape, params, true);
    let pred = model_tape(&p, sample, cfg)?;
    let loss = super::loss_tape(&pred, &sample.targets, &cfg.net, &cfg.gripper)?;
    let breakdown = loss.breakdown();
    check_finite(&sample.id, &breakdown)?;
    let grads = tape.backward(loss.total)?;
    Ok((breakdown, p.gradients(&grads)))
}

/// Batch-averaged loss, backward pass and one AdamW update. Returns the
/// averaged loss evaluated before the update.
pub fn train_step(
    batch: &[TrainSample],
    cfg: &ModelConfig,
    params: &mut ParamStore,
    opt: &mut OptimizerState,
) -> Result<LossBreakdown> {
    if batch.is_empty() {
        return argument("train_step: empty batch");
    }
    let scale = 1.0 / batch.len() as f64;
    let mut mean = LossBreakdown::default();
    let mut acc: BTreeMap<String, Tensor> = BTreeMap::new();
    for sample in batch {
        let (l, grads) = scene_gradients(sample, cfg, params)?;
        mean.l_bce += l.l_bce * scale;
        mean.l_adds += l.l_adds * scale;
        mean.l_width += l.l_width * scale;
        mean.l_total += l.l_total * scale;
        for (name, g) in grads {
            if let Some(bad) = g.data().iter().position(|v| !v.is_finite()) {
                log::error!("non-finite gradient in `{name}` at element {bad}");
                return Err(PcfError::Training {
                    scene: sample.id.clone(),
                    term: format!("gradient of {name}"),
                });
            }
            match acc.get_mut(&name) {
                Some(a) => {
                    for (x, y) in a.data_mut().iter_mut().zip(g.data()) {
                        *x += y * scale;
                    }
                }
                None => {
                    acc.insert(name, g.map(|v| v * scale));
                }
            }
        }
    }
    opt.config.learning_rate = cfg.net.learning_rate(opt.step_count());
    opt.step(params, &acc)?;
    Ok(mean)
}

/// One line of the training metrics file.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: u64,
    pub l_bce: f64,
    pub l_adds: f64,
    pub l_width: f64,
    pub l_total: f64,
}

impl MetricsRecord {
    pub fn new(step: u64, l: &LossBreakdown) -> Self {
        MetricsRecord {
            step,
            l_bce: l.l_bce,
            l_adds: l.l_adds,
            l_width: l.l_width,
            l_total: l.l_total,
        }
    }
}

pub fn append_metrics(path: impl AsRef<Path>, rec: &MetricsRecord) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| PcfError::io(path, e))?;
    let line = serde_json::to_string(rec).map_err(|e| PcfError::parse(path, e))?;
    writeln!(f, "{line}").map_err(|e| PcfError::io(path, e))
}

pub fn save_checkpoint(path: impl AsRef<Path>, params: &ParamStore) -> Result<()> {
    checkpoint::save(path.as_ref(), params).map_err(|e| PcfError::io(path.as_ref(), e))
}

/// Loads a checkpoint; a missing file is reported as such, not as IO.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ParamStore> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(PcfError::CheckpointMissing(path.display().to_string()));
    }
    checkpoint::load(path).map_err(|e| match e {
        TensorError::Io(msg) => PcfError::io(path, msg),
        other => PcfError::parse(path, other),
    })
}
