//! Wall-clock timing of the point-cloud kernels.

use std::time::Instant;

use pcfg_tensor::ParamStore;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cloud::{fps, query_ball, Cloud, Frame, Point};
use crate::error::{argument, Result};
use crate::pcf::{concat_points, init_pcf_params, pcf_forward, PcfConfig};

pub const MIN_REPEATS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub kernel: String,
    pub n: usize,
    pub params: Value,
    pub repeats: usize,
    pub mean_ms: f64,
    pub p95_ms: f64,
    pub threads: usize,
    pub hardware: String,
}

/// CPU model from `/proc/cpuinfo` when available, plus target triple parts.
pub fn hardware() -> String {
    let model = std::fs::read_to_string("/proc/cpuinfo").ok().and_then(|s| {
        s.lines()
            .find(|l| l.starts_with("model name"))
            .and_then(|l| l.split_once(':'))
            .map(|(_, v)| v.trim().to_string())
    });
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    format!(
        "{} ({} {}, {cores} logical cores)",
        model.unwrap_or_else(|| "unknown cpu".into()),
        std::env::consts::ARCH,
        std::env::consts::OS
    )
}

/// Mean and nearest-rank 95th percentile, in milliseconds.
pub fn summarize(samples_ms: &[f64]) -> (f64, f64) {
    let mut s = samples_ms.to_vec();
    s.sort_by(f64::total_cmp);
    let mean = s.iter().sum::<f64>() / s.len() as f64;
    let rank = ((0.95 * s.len() as f64).ceil() as usize).clamp(1, s.len());
    (mean, s[rank - 1])
}

fn time<F: FnMut() -> Result<()>>(repeats: usize, mut f: F) -> Result<Vec<f64>> {
    if repeats < MIN_REPEATS {
        return argument(format!("bench needs at least {MIN_REPEATS} repeats, got {repeats}"));
    }
    // one untimed warm-up run
    f()?;
    let mut out = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t = Instant::now();
        f()?;
        out.push(t.elapsed().as_secs_f64() * 1e3);
    }
    Ok(out)
}

fn record(kernel: &str, n: usize, params: Value, samples: &[f64]) -> TimingRecord {
    let (mean_ms, p95_ms) = summarize(samples);
    TimingRecord {
        kernel: kernel.into(),
        n,
        params,
        repeats: samples.len(),
        mean_ms,
        p95_ms,
        threads: 1,
        hardware: hardware(),
    }
}

/// Uniform points in a 0.5 m cube.
pub fn random_points(n: usize, rng: &mut ChaCha8Rng) -> Vec<Point> {
    (0..n)
        .map(|_| [rng.gen_range(0.0..0.5), rng.gen_range(0.0..0.5), rng.gen_range(0.0..0.5)])
        .collect()
}

pub fn bench_fps(n: usize, m: usize, repeats: usize, seed: u64) -> Result<TimingRecord> {
    let cloud = Cloud::new(random_points(n, &mut ChaCha8Rng::seed_from_u64(seed)), Frame::Camera)?;
    let samples = time(repeats, || fps(&cloud, m, 0).map(drop))?;
    Ok(record("fps", n, json!({ "m": m, "start": 0, "seed": seed }), &samples))
}

pub fn bench_query_ball(n: usize, m: usize, radius: f64, k: usize, repeats: usize, seed: u64) -> Result<TimingRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let src = Cloud::new(random_points(n, &mut rng), Frame::Camera)?;
    let centers = Cloud::new(random_points(m, &mut rng), Frame::Camera)?;
    let samples = time(repeats, || query_ball(&src, &centers, radius, k).map(drop))?;
    Ok(record(
        "query_ball",
        n,
        json!({ "m": m, "radius": radius, "k": k, "seed": seed }),
        &samples,
    ))
}

/// Frozen-weight feature layer on random originals and completions of
/// `cfg.points` each.
pub fn bench_pcf_forward(cfg: &PcfConfig, repeats: usize, seed: u64) -> Result<TimingRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let original = Cloud::new(random_points(cfg.points, &mut rng), Frame::Camera)?;
    let completion = Cloud::new(random_points(cfg.points, &mut rng), Frame::Camera)?;
    cfg.validate()?;
    let mut params = ParamStore::new();
    init_pcf_params(&mut params, cfg, &mut rng);
    let concat = concat_points(&original, &completion, cfg.points)?;
    let samples = time(repeats, || pcf_forward(&original, &concat, cfg, &params).map(drop))?;
    Ok(record(
        "pcf_forward",
        cfg.points,
        json!({ "radii": cfg.radii, "fanouts": cfg.fanouts, "mlp_widths": cfg.mlp_widths, "seed": seed }),
        &samples,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_percentile() {
        let s: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(summarize(&s), (10.5, 19.0));
        assert_eq!(summarize(&[3.0; 10]), (3.0, 3.0));
    }

    #[test]
    fn too_few_repeats_is_rejected() {
        assert!(bench_fps(100, 10, 5, 0).is_err());
        let r = bench_query_ball(500, 50, 0.1, 16, 10, 1).unwrap();
        assert_eq!((r.kernel.as_str(), r.n, r.repeats, r.threads), ("query_ball", 500, 10, 1));
        assert!(r.mean_ms > 0.0 && r.p95_ms > 0.0);
    }
}
