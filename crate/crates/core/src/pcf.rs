//! Point-completion-to-feature layer.
//!
//! Original and completion points are concatenated; around every original
//! point, neighbors of the concatenation are grouped at several radii, each
//! group runs through its own MLP on relative coordinates and is max-pooled,
//! and the per-scale features are concatenated into one row per original
//! point.

use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use pcfg_tensor::{ParamStore, Tape, Tensor, Var};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cloud::{query_ball, Cloud, NeighborGroup};
use crate::error::{validation, PcfError, Result};
use crate::nn::{grouped_mlp, init_grouped_mlp, Bound, GroupInput};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcfConfig {
    /// Original (and completion) point count.
    pub points: usize,
    pub radii: Vec<f64>,
    pub fanouts: Vec<usize>,
    pub mlp_widths: Vec<Vec<usize>>,
}

impl Default for PcfConfig {
    fn default() -> Self {
        PcfConfig {
            points: 1024,
            radii: vec![0.04, 0.08, 0.16],
            fanouts: vec![64, 64, 128],
            mlp_widths: vec![vec![32, 32, 64], vec![64, 64, 128], vec![64, 64, 128]],
        }
    }
}

impl PcfConfig {
    pub fn out_channels(&self) -> usize {
        self.mlp_widths.iter().map(|w| w.last().copied().unwrap_or(0)).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.radii.len() != self.fanouts.len() || self.radii.len() != self.mlp_widths.len() || self.radii.is_empty() {
            return validation(format!(
                "pcf config: {} radii, {} fan-outs, {} MLP stacks",
                self.radii.len(),
                self.fanouts.len(),
                self.mlp_widths.len()
            ));
        }
        if self.points == 0 {
            return validation("pcf config: zero points");
        }
        if self.radii.iter().any(|r| !(*r > 0.0)) || self.fanouts.contains(&0) {
            return validation("pcf config: radii and fan-outs must be positive");
        }
        if self.mlp_widths.iter().any(|w| w.is_empty() || w.contains(&0)) {
            return validation("pcf config: every MLP needs at least one non-empty layer");
        }
        Ok(())
    }
}

/// Per-point shape features, row-aligned with the original points.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return validation(format!("feature matrix {rows}x{cols} with {} values", values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return validation("feature matrix has non-finite values");
        }
        Ok(FeatureMatrix { rows, cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(&[self.rows, self.cols], self.values.clone()).expect("sized")
    }

    /// `rows: u32 | cols: u32 | f64 * rows*cols`, little-endian.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(&(self.rows as u32).to_le_bytes())?;
        w.write_all(&(self.cols as u32).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R, origin: &str) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf).map_err(|e| PcfError::io(origin, e))?;
        if buf.len() < 8 {
            return Err(PcfError::parse(origin, "feature dump shorter than its header"));
        }
        let rows = u32::from_le_bytes(buf[0..4].try_into().expect("4 bytes")) as usize;
        let cols = u32::from_le_bytes(buf[4..8].try_into().expect("4 bytes")) as usize;
        if buf.len() != 8 + rows * cols * 8 {
            return Err(PcfError::parse(
                origin,
                format!("{rows}x{cols} header but {} payload bytes", buf.len() - 8),
            ));
        }
        let values = buf[8..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        FeatureMatrix::new(rows, cols, values)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path.as_ref()).map_err(|e| PcfError::io(path.as_ref(), e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| PcfError::io(path.as_ref(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path.as_ref()).map_err(|e| PcfError::io(path.as_ref(), e))?;
        Self::read_from(f, &path.as_ref().display().to_string())
    }
}

/// Original points first, completion appended.
pub fn concat_points(original: &Cloud, completion: &Cloud, count: usize) -> Result<Cloud> {
    if original.frame() != completion.frame() {
        return validation(format!(
            "original is in the {} frame, completion in the {} frame",
            original.frame().as_str(),
            completion.frame().as_str()
        ));
    }
    if original.len() != count || completion.len() != count {
        return validation(format!(
            "expected {count}+{count} points, got {}+{}",
            original.len(),
            completion.len()
        ));
    }
    let mut pts = original.points().to_vec();
    pts.extend_from_slice(completion.points());
    Cloud::new(pts, original.frame())
}

/// One grouping scale with its relative coordinates precomputed, expressed
/// in units of the ball radius.
#[derive(Clone, Debug)]
pub struct Grouping {
    pub group: NeighborGroup,
    pub rel: Vec<f64>,
    pub mask: Option<Vec<f64>>,
}

impl Grouping {
    pub fn new(group: NeighborGroup, src: &[[f64; 3]], centers: &[[f64; 3]], radius: f64) -> Self {
        let s = 1.0 / radius;
        let k = group.k;
        let mut rel = Vec::with_capacity(group.neighbor_idx.len() * 3);
        for (m, c) in centers.iter().enumerate() {
            for &i in group.neighbors(m) {
                let p = src[i];
                rel.extend_from_slice(&[(p[0] - c[0]) * s, (p[1] - c[1]) * s, (p[2] - c[2]) * s]);
            }
        }
        debug_assert_eq!(rel.len(), centers.len() * k * 3);
        let mask = group
            .valid_count
            .contains(&0)
            .then(|| group.valid_count.iter().map(|&v| if v == 0 { 0.0 } else { 1.0 }).collect());
        Grouping { group, rel, mask }
    }

    pub fn input(&self, centers: Range<usize>) -> GroupInput<'_> {
        let k = self.group.k;
        GroupInput {
            rel: self.rel[centers.start * k * 3..centers.end * k * 3].to_vec(),
            idx: &self.group.neighbor_idx[centers.start * k..centers.end * k],
            k,
            mask: self.mask.as_ref().map(|m| m[centers].to_vec()),
        }
    }
}

/// The input-only part of the layer: one grouping per scale.
#[derive(Clone, Debug)]
pub struct PcfGeometry {
    pub scales: Vec<Grouping>,
    pub points: usize,
}

pub fn pcf_geometry(original: &Cloud, concat: &Cloud, cfg: &PcfConfig) -> Result<PcfGeometry> {
    cfg.validate()?;
    if original.len() != cfg.points {
        return validation(format!("pcf expects {} original points, got {}", cfg.points, original.len()));
    }
    if concat.len() != 2 * cfg.points {
        return validation(format!("pcf expects {} concatenated points, got {}", 2 * cfg.points, concat.len()));
    }
    if original.frame() != concat.frame() {
        return validation("original and concatenated clouds are in different frames");
    }
    let scales = cfg
        .radii
        .iter()
        .zip(&cfg.fanouts)
        .map(|(&r, &k)| {
            let g = query_ball(concat, original, r, k)?;
            Ok(Grouping::new(g, concat.points(), original.points(), r))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PcfGeometry {
        scales,
        points: original.len(),
    })
}

/// Features of the original points in `rows`, recorded on the tape.
pub fn pcf_tape<'t>(p: &Bound<'t>, geo: &PcfGeometry, cfg: &PcfConfig, rows: Range<usize>) -> Result<Var<'t>> {
    let parts = geo
        .scales
        .iter()
        .enumerate()
        .map(|(s, g)| grouped_mlp(p, &format!("pcf.s{s}"), cfg.mlp_widths[s].len(), &g.input(rows.clone()), None))
        .collect::<Result<Vec<_>>>()?;
    Var::concat_cols(&parts).map_err(Into::into)
}

pub fn init_pcf_params(params: &mut ParamStore, cfg: &PcfConfig, rng: &mut ChaCha8Rng) {
    for (s, widths) in cfg.mlp_widths.iter().enumerate() {
        init_grouped_mlp(params, &format!("pcf.s{s}"), 0, widths, rng);
    }
}

/// Centers evaluated per tape during frozen inference.
const INFERENCE_CHUNK: usize = 128;

/// Frozen-parameter feature computation, in chunks of centers so only one
/// chunk's activations are alive at a time.
pub fn pcf_forward(original: &Cloud, concat: &Cloud, cfg: &PcfConfig, params: &ParamStore) -> Result<FeatureMatrix> {
    let geo = pcf_geometry(original, concat, cfg)?;
    pcf_forward_geometry(&geo, cfg, params)
}

pub fn pcf_forward_geometry(geo: &PcfGeometry, cfg: &PcfConfig, params: &ParamStore) -> Result<FeatureMatrix> {
    let cols = cfg.out_channels();
    let mut values = Vec::with_capacity(geo.points * cols);
    let mut start = 0;
    while start < geo.points {
        let end = (start + INFERENCE_CHUNK).min(geo.points);
        let tape = Tape::new();
        let p = Bound::new(&tape, params, false);
        let f = pcf_tape(&p, geo, cfg, start..end)?;
        let v = f.value();
        if v.shape() != [end - start, cols] {
            return validation(format!("pcf output {:?}, expected [{}, {cols}]", v.shape(), end - start));
        }
        values.extend_from_slice(v.data());
        start = end;
    }
    FeatureMatrix::new(geo.points, cols, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Frame;

    #[test]
    fn default_config_has_320_channels() {
        let cfg = PcfConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.out_channels(), 64 + 128 + 128);
    }

    #[test]
    fn concat_examples() {
        let a = Cloud::new(vec![[0.0; 3], [1.0, 0.0, 0.0]], Frame::Camera).unwrap();
        let c = concat_points(&a, &a, 2).unwrap();
        assert_eq!(c.points(), &[[0.0; 3], [1.0, 0.0, 0.0], [0.0; 3], [1.0, 0.0, 0.0]]);
        let r = Cloud::new(a.points().to_vec(), Frame::Robot).unwrap();
        assert!(concat_points(&a, &r, 2).is_err());
        assert!(concat_points(&a, &a, 3).is_err());
    }

    #[test]
    fn dump_round_trip() {
        let f = FeatureMatrix::new(2, 3, vec![1.0, -2.0, 0.5, 1e-300, 7.0, 3.25]).unwrap();
        let mut buf = Vec::new();
        f.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 6 * 8);
        assert_eq!(&buf[..4], &2u32.to_le_bytes());
        assert_eq!(FeatureMatrix::read_from(&buf[..], "mem").unwrap(), f);
        assert!(FeatureMatrix::read_from(&buf[..20], "mem").is_err());
    }
}
