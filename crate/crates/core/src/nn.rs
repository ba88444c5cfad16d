//! Parameter binding and the small building blocks shared by the feature
//! layer and the grasp network.

use std::collections::BTreeMap;

use pcfg_tensor::{Gradients, ParamStore, Tape, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{validation, PcfError, Result};

/// Named parameters recorded on one tape, either as trainable leaves or as
/// constants (frozen inference).
pub struct Bound<'t> {
    tape: &'t Tape,
    vars: BTreeMap<String, Var<'t>>,
}

impl<'t> Bound<'t> {
    pub fn new(tape: &'t Tape, params: &ParamStore, trainable: bool) -> Self {
        let vars = params
            .iter()
            .map(|(name, t)| {
                let v = if trainable { tape.param(t.clone()) } else { tape.constant(t.clone()) };
                (name.clone(), v)
            })
            .collect();
        Bound { tape, vars }
    }

    /// Wraps vars created elsewhere (gradient checking).
    pub fn from_vars(tape: &'t Tape, names: &[String], vars: &[Var<'t>]) -> Self {
        Bound {
            tape,
            vars: names.iter().cloned().zip(vars.iter().copied()).collect(),
        }
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn get(&self, name: &str) -> Result<Var<'t>> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| PcfError::Validation(format!("missing parameter `{name}`")))
    }

    pub fn gradients(&self, grads: &Gradients) -> BTreeMap<String, Tensor> {
        self.vars.iter().map(|(n, v)| (n.clone(), grads.get_or_zeros(*v))).collect()
    }
}

/// He-uniform weights, zero bias.
pub fn init_linear(params: &mut ParamStore, prefix: &str, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    let w = (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..bound)).collect();
    params.insert(format!("{prefix}.w"), Tensor::new(&[fan_in, fan_out], w).expect("sized"));
    params.insert(format!("{prefix}.b"), Tensor::zeros(&[fan_out]));
}

/// `x·w + b` for every layer of `prefix.l{i}`, relu after each layer when
/// `relu_last` is set, otherwise after all but the last.
pub fn mlp<'t>(p: &Bound<'t>, prefix: &str, depth: usize, x: Var<'t>, relu_last: bool) -> Result<Var<'t>> {
    let mut h = x;
    for i in 0..depth {
        let relu = relu_last || i + 1 < depth;
        h = h.linear(p.get(&format!("{prefix}.l{i}.w"))?, p.get(&format!("{prefix}.l{i}.b"))?, relu)?;
    }
    Ok(h)
}

pub fn init_mlp(params: &mut ParamStore, prefix: &str, input: usize, widths: &[usize], rng: &mut ChaCha8Rng) {
    init_mlp_from(params, prefix, 0, input, widths, rng);
}

/// Grouped point features: for `centers × k` neighbor slots, the first layer
/// sees `(neighbor − center) ⊕ features[neighbor]`.
///
/// The first layer is split into its xyz and feature halves so the feature
/// product is computed once per source point and then gathered, instead of
/// once per neighbor slot. Subsequent layers and the max over neighbors
/// follow; centers with no valid neighbor get a zero row.
pub struct GroupInput<'a> {
    /// Relative coordinates, `[m·k, 3]` row-major.
    pub rel: Vec<f64>,
    /// Source row of every slot, `m·k`.
    pub idx: &'a [usize],
    pub k: usize,
    /// 1.0 for centers with a valid neighbor, 0.0 otherwise.
    pub mask: Option<Vec<f64>>,
}

pub fn grouped_mlp<'t>(
    p: &Bound<'t>,
    prefix: &str,
    depth: usize,
    group: &GroupInput<'_>,
    features: Option<Var<'t>>,
) -> Result<Var<'t>> {
    let tape = p.tape();
    let slots = group.idx.len();
    if group.rel.len() != slots * 3 || group.k == 0 || slots % group.k != 0 {
        return validation(format!("group layout: {} slots, fan-out {}", slots, group.k));
    }
    let m = slots / group.k;
    let rel = tape.constant(Tensor::new(&[slots, 3], group.rel.clone())?);
    let b0 = p.get(&format!("{prefix}.l0.b"))?;
    let mut h = rel.matmul(p.get(&format!("{prefix}.l0.wx"))?)?;
    if let Some(f) = features {
        let fw = f.matmul(p.get(&format!("{prefix}.l0.wf"))?)?;
        h = h.add(fw.gather_rows(group.idx)?)?;
    }
    h = h.add_bias(b0)?.relu();
    for i in 1..depth {
        h = h.linear(p.get(&format!("{prefix}.l{i}.w"))?, p.get(&format!("{prefix}.l{i}.b"))?, true)?;
    }
    let c = h.shape()[1];
    let pooled = h.reshape(&[m, group.k, c])?.max_pool_groups()?;
    match &group.mask {
        Some(mask) => Ok(pooled.scale_rows(tape.constant(Tensor::new(&[m, 1], mask.clone())?))?),
        None => Ok(pooled),
    }
}

/// Parameters for [`grouped_mlp`]: the first layer as `l0.wx` (3 rows) and
/// `l0.wf` (`feat` rows, only when `feat > 0`), He-scaled on the combined
/// fan-in.
pub fn init_grouped_mlp(params: &mut ParamStore, prefix: &str, feat: usize, widths: &[usize], rng: &mut ChaCha8Rng) {
    let fan_in = 3 + feat;
    let w0 = widths[0];
    let bound = (6.0 / fan_in as f64).sqrt();
    let mut draw = |rows: usize| {
        let d = (0..rows * w0).map(|_| rng.gen_range(-bound..bound)).collect();
        Tensor::new(&[rows, w0], d).expect("sized")
    };
    params.insert(format!("{prefix}.l0.wx"), draw(3));
    if feat > 0 {
        params.insert(format!("{prefix}.l0.wf"), draw(feat));
    }
    params.insert(format!("{prefix}.l0.b"), Tensor::zeros(&[w0]));
    init_mlp_from(params, prefix, 1, w0, &widths[1..], rng);
}

fn init_mlp_from(params: &mut ParamStore, prefix: &str, first: usize, input: usize, widths: &[usize], rng: &mut ChaCha8Rng) {
    let mut fan_in = input;
    for (i, &w) in widths.iter().enumerate() {
        init_linear(params, &format!("{prefix}.l{}", first + i), fan_in, w, rng);
        fan_in = w;
    }
}
