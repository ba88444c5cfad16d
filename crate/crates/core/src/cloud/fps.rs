use super::{Cloud, Point};
use crate::error::{argument, Result};

/// Farthest-point sampling over a cloud. See [`fps_points`].
pub fn fps(cloud: &Cloud, n: usize, start: usize) -> Result<Vec<usize>> {
    fps_points(cloud.points(), n, start)
}

/// Greedy max-min subset selection.
///
/// The first pick is `start`; every further pick is the unselected point whose
/// squared distance to the selected set is largest, lowest index on ties.
pub fn fps_points(points: &[Point], n: usize, start: usize) -> Result<Vec<usize>> {
    fps_blocked(points, n, start, BLOCK)
}

const BLOCK: usize = 64;

/// Points of one Morton-ordered block, with its bounding box and the
/// current best candidate inside it.
struct Block {
    range: std::ops::Range<usize>,
    lo: Point,
    hi: Point,
    best: f64,
    best_idx: usize,
}

impl Block {
    fn refresh(&mut self, dist: &[f64], orig: &[usize]) {
        let mut best = f64::NEG_INFINITY;
        let mut best_idx = usize::MAX;
        for j in self.range.clone() {
            let d = dist[j];
            if d > best || (d == best && orig[j] < best_idx) {
                best = d;
                best_idx = orig[j];
            }
        }
        self.best = best;
        self.best_idx = best_idx;
    }

    fn box_dist2(&self, c: Point) -> f64 {
        let mut s = 0.0;
        for k in 0..3 {
            let d = if c[k] < self.lo[k] {
                self.lo[k] - c[k]
            } else if c[k] > self.hi[k] {
                c[k] - self.hi[k]
            } else {
                0.0
            };
            s += d * d;
        }
        s
    }
}

fn morton_order(points: &[Point]) -> Vec<usize> {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let spread = |k: usize| if hi[k] > lo[k] { 1023.0 / (hi[k] - lo[k]) } else { 0.0 };
    let scale = [spread(0), spread(1), spread(2)];
    let spread_bits = |mut v: u64| {
        v &= 0x3ff;
        v = (v | (v << 16)) & 0x030000ff;
        v = (v | (v << 8)) & 0x0300f00f;
        v = (v | (v << 4)) & 0x030c30c3;
        (v | (v << 2)) & 0x09249249
    };
    let mut keyed: Vec<(u64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let q = |k: usize| ((p[k] - lo[k]) * scale[k]) as u64;
            (spread_bits(q(0)) | (spread_bits(q(1)) << 1) | (spread_bits(q(2)) << 2), i)
        })
        .collect();
    keyed.sort_unstable();
    keyed.into_iter().map(|(_, i)| i).collect()
}

fn fps_blocked(points: &[Point], n: usize, start: usize, block: usize) -> Result<Vec<usize>> {
    let total = points.len();
    if total == 0 {
        return argument("fps on an empty cloud");
    }
    if n == 0 || n > total {
        return argument(format!("fps: cannot pick {n} of {total} points"));
    }
    if start >= total {
        return argument(format!("fps: start index {start} out of range for {total} points"));
    }

    // reordered structure-of-arrays copy; `orig` maps back to input indices
    let orig = morton_order(points);
    let mut slot = vec![0; total];
    for (j, &i) in orig.iter().enumerate() {
        slot[i] = j;
    }
    let xs: Vec<f64> = orig.iter().map(|&i| points[i][0]).collect();
    let ys: Vec<f64> = orig.iter().map(|&i| points[i][1]).collect();
    let zs: Vec<f64> = orig.iter().map(|&i| points[i][2]).collect();
    // selected points are parked at -1 so they never win again
    let mut dist = vec![f64::INFINITY; total];

    let mut blocks: Vec<Block> = (0..total)
        .step_by(block)
        .map(|s| {
            let range = s..(s + block).min(total);
            let mut lo = [f64::INFINITY; 3];
            let mut hi = [f64::NEG_INFINITY; 3];
            for j in range.clone() {
                for (k, v) in [xs[j], ys[j], zs[j]].into_iter().enumerate() {
                    lo[k] = lo[k].min(v);
                    hi[k] = hi[k].max(v);
                }
            }
            Block {
                range,
                lo,
                hi,
                best: f64::INFINITY,
                best_idx: 0,
            }
        })
        .collect();

    let mut out = Vec::with_capacity(n);
    let mut cur = start;
    loop {
        out.push(cur);
        let cs = slot[cur];
        dist[cs] = -1.0;
        if out.len() == n {
            break;
        }
        let c = [xs[cs], ys[cs], zs[cs]];
        for b in blocks.iter_mut() {
            let owns = b.range.contains(&cs);
            if !owns && b.box_dist2(c) >= b.best {
                continue;
            }
            let r = b.range.clone();
            for (((d, &x), &y), &z) in dist[r.clone()]
                .iter_mut()
                .zip(&xs[r.clone()])
                .zip(&ys[r.clone()])
                .zip(&zs[r])
            {
                let dx = x - c[0];
                let dy = y - c[1];
                let dz = z - c[2];
                let dd = dx * dx + dy * dy + dz * dz;
                if dd < *d {
                    *d = dd;
                }
            }
            b.refresh(&dist, &orig);
        }
        let mut best = f64::NEG_INFINITY;
        let mut best_idx = usize::MAX;
        for b in &blocks {
            if b.best > best || (b.best == best && b.best_idx < best_idx) {
                best = b.best;
                best_idx = b.best_idx;
            }
        }
        cur = best_idx;
    }
    Ok(out)
}
