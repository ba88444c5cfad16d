//! Independent brute-force oracles shared by the integration suites.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type P = [f64; 3];

pub fn d2(a: P, b: P) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// O(n²) max-min selection, recomputing each candidate's distance to the
/// whole selected set every round.
pub fn fps_oracle(pts: &[P], n: usize, start: usize) -> Vec<usize> {
    let mut sel = vec![start];
    while sel.len() < n {
        let mut best: Option<(f64, usize)> = None;
        for i in 0..pts.len() {
            if sel.contains(&i) {
                continue;
            }
            let d = sel.iter().map(|&s| d2(pts[i], pts[s])).fold(f64::INFINITY, f64::min);
            if best.map_or(true, |(bd, _)| d > bd) {
                best = Some((d, i));
            }
        }
        sel.push(best.unwrap().1);
    }
    sel
}

/// All-pairs ball query: (neighbor rows, valid counts).
pub fn ball_oracle(src: &[P], centers: &[P], self_idx: &[usize], r: f64, k: usize) -> (Vec<Vec<usize>>, Vec<usize>) {
    let mut rows = Vec::new();
    let mut valid = Vec::new();
    for (m, c) in centers.iter().enumerate() {
        let hits: Vec<usize> = (0..src.len()).filter(|&i| d2(src[i], *c) <= r * r).take(k).collect();
        valid.push(hits.len());
        let pad = hits.first().copied().unwrap_or(self_idx[m]);
        let mut row = hits.clone();
        row.resize(k, pad);
        rows.push(row);
    }
    (rows, valid)
}

pub fn knn_oracle(src: &[P], centers: &[P], k: usize) -> Vec<Vec<usize>> {
    centers
        .iter()
        .map(|c| {
            let mut all: Vec<(f64, usize)> = src.iter().enumerate().map(|(i, p)| (d2(*p, *c), i)).collect();
            all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            all.into_iter().take(k).map(|(_, i)| i).collect()
        })
        .collect()
}

/// Random cloud in a 0.3 m cube; a few points snapped to a coarse lattice so
/// exact distance ties occur.
pub fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<P> {
    (0..n)
        .map(|_| {
            let mut p: P = [rng.gen_range(0.0..0.3), rng.gen_range(0.0..0.3), rng.gen_range(0.0..0.3)];
            if rng.gen_bool(0.25) {
                for v in &mut p {
                    *v = (*v * 20.0).round() / 20.0;
                }
            }
            p
        })
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
