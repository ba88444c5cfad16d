use std::collections::HashMap;

use super::{dist2, Cloud, Point};
use crate::error::{argument, Result};

/// Below this many source points a linear scan beats building the grid.
const GRID_MIN_POINTS: usize = 256;

/// Fixed fan-out neighbor lists, one row of `k` source indices per center.
///
/// Slots past `valid_count[m]` repeat the first valid neighbor; a center
/// with no neighbor is padded with its own index (see [`query_ball`]).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighborGroup {
    pub centers: Vec<usize>,
    pub k: usize,
    pub neighbor_idx: Vec<usize>,
    pub valid_count: Vec<usize>,
}

impl NeighborGroup {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn neighbors(&self, m: usize) -> &[usize] {
        &self.neighbor_idx[m * self.k..(m + 1) * self.k]
    }

    pub fn valid(&self, m: usize) -> &[usize] {
        &self.neighbors(m)[..self.valid_count[m]]
    }
}

type Cell = (i64, i64, i64);

/// Uniform hash grid over a point set; cell lists hold ascending indices.
struct Grid {
    inv_cell: f64,
    cells: HashMap<Cell, Vec<usize>>,
}

impl Grid {
    fn new(points: &[Point], cell: f64) -> Self {
        let inv_cell = 1.0 / cell;
        let mut cells: HashMap<Cell, Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(inv_cell, p)).or_default().push(i);
        }
        Grid { inv_cell, cells }
    }

    fn key(inv_cell: f64, p: &Point) -> Cell {
        (
            (p[0] * inv_cell).floor() as i64,
            (p[1] * inv_cell).floor() as i64,
            (p[2] * inv_cell).floor() as i64,
        )
    }

    /// Indices in the 27 cells around `p`, unordered.
    fn around(&self, p: &Point, out: &mut Vec<usize>) {
        out.clear();
        let (cx, cy, cz) = Self::key(self.inv_cell, p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(v) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) {
                        out.extend_from_slice(v);
                    }
                }
            }
        }
    }
}

fn ball_search(src: &[Point], centers: &[Point], self_idx: &[usize], radius: f64, k: usize) -> Result<NeighborGroup> {
    if !(radius > 0.0) || !radius.is_finite() {
        return argument(format!("query_ball: radius must be positive, got {radius}"));
    }
    if k == 0 {
        return argument("query_ball: fan-out must be at least 1");
    }
    let r2 = radius * radius;
    let m = centers.len();
    let mut neighbor_idx = Vec::with_capacity(m * k);
    let mut valid_count = Vec::with_capacity(m);
    let grid = (src.len() >= GRID_MIN_POINTS).then(|| Grid::new(src, radius));
    let mut cand = Vec::new();
    let mut hits = Vec::with_capacity(k);

    for (ci, c) in centers.iter().enumerate() {
        hits.clear();
        match &grid {
            Some(g) => {
                g.around(c, &mut cand);
                cand.retain(|&i| dist2(src[i], *c) <= r2);
                cand.sort_unstable();
                hits.extend(cand.iter().take(k));
            }
            None => {
                for (i, p) in src.iter().enumerate() {
                    if dist2(*p, *c) <= r2 {
                        hits.push(i);
                        if hits.len() == k {
                            break;
                        }
                    }
                }
            }
        }
        valid_count.push(hits.len());
        let pad = hits.first().copied().unwrap_or(self_idx[ci]);
        neighbor_idx.extend_from_slice(&hits);
        neighbor_idx.extend(std::iter::repeat(pad).take(k - hits.len()));
    }
    Ok(NeighborGroup {
        centers: self_idx.to_vec(),
        k,
        neighbor_idx,
        valid_count,
    })
}

/// Up to `k` source points within `radius` of each center, in ascending
/// source-index order.
///
/// An empty ball is padded with the center's own position in the query
/// cloud, clamped to the source range; this is a self-reference whenever the
/// query cloud is a prefix of the source cloud.
pub fn query_ball(src: &Cloud, centers: &Cloud, radius: f64, k: usize) -> Result<NeighborGroup> {
    if src.is_empty() {
        return argument("query_ball: empty source cloud");
    }
    let last = src.len() - 1;
    let self_idx: Vec<usize> = (0..centers.len()).map(|i| i.min(last)).collect();
    ball_search(src.points(), centers.points(), &self_idx, radius, k)
}

/// Ball query whose centers are themselves source points, given by index.
pub fn query_ball_indexed(src: &[Point], center_idx: &[usize], radius: f64, k: usize) -> Result<NeighborGroup> {
    if let Some(&bad) = center_idx.iter().find(|&&i| i >= src.len()) {
        return argument(format!("query_ball: center index {bad} out of range"));
    }
    let centers: Vec<Point> = center_idx.iter().map(|&i| src[i]).collect();
    ball_search(src, &centers, center_idx, radius, k)
}

/// Exact `k` nearest source points per center, ascending distance, lowest
/// index first on ties.
pub fn knn(src: &Cloud, centers: &Cloud, k: usize) -> Result<NeighborGroup> {
    knn_points(src.points(), centers.points(), k)
}

pub(crate) fn knn_points(src: &[Point], centers: &[Point], k: usize) -> Result<NeighborGroup> {
    if k == 0 || k > src.len() {
        return argument(format!("knn: k={k} with {} source points", src.len()));
    }
    let mut neighbor_idx = Vec::with_capacity(centers.len() * k);
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for c in centers {
        best.clear();
        for (i, p) in src.iter().enumerate() {
            let d = dist2(*p, *c);
            if best.len() == k && d >= best[k - 1].0 {
                continue;
            }
            // stable insert: after every entry with distance <= d
            let pos = best.partition_point(|&(bd, _)| bd <= d);
            best.insert(pos, (d, i));
            best.truncate(k);
        }
        neighbor_idx.extend(best.iter().map(|&(_, i)| i));
    }
    Ok(NeighborGroup {
        centers: (0..centers.len()).collect(),
        k,
        neighbor_idx,
        valid_count: vec![k; centers.len()],
    })
}

/// Outcome of matching one contact point against label points.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LabelMatch {
    pub positive: bool,
    pub label: Option<usize>,
}

/// Marks each contact positive iff a label point lies within `radius`; the
/// match is the nearest such label point (lowest index on ties).
pub fn associate_labels(contacts: &Cloud, label_points: &Cloud, radius: f64) -> Result<Vec<LabelMatch>> {
    if !(radius > 0.0) || !radius.is_finite() {
        return argument(format!("associate_labels: radius must be positive, got {radius}"));
    }
    let r2 = radius * radius;
    let labels = label_points.points();
    let grid = Grid::new(labels, radius);
    let mut cand = Vec::new();
    Ok(contacts
        .points()
        .iter()
        .map(|c| {
            grid.around(c, &mut cand);
            let mut best: Option<(f64, usize)> = None;
            for &i in &cand {
                let d = dist2(labels[i], *c);
                if d > r2 {
                    continue;
                }
                match best {
                    Some((bd, bi)) if d > bd || (d == bd && i > bi) => {}
                    _ => best = Some((d, i)),
                }
            }
            LabelMatch {
                positive: best.is_some(),
                label: best.map(|(_, i)| i),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::super::Frame;
    use super::*;

    fn cloud(p: Vec<Point>) -> Cloud {
        Cloud::new(p, Frame::Camera).unwrap()
    }

    #[test]
    fn underfull_ball_is_padded() {
        let src = cloud(vec![[0.01, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        let g = query_ball(&src, &cloud(vec![[0.0; 3]]), 0.04, 4).unwrap();
        assert_eq!(g.valid_count, vec![1]);
        assert_eq!(g.neighbors(0), &[0, 0, 0, 0]);
    }

    #[test]
    fn covering_radius_returns_scan_order_prefix() {
        let src = cloud((0..10).map(|i| [i as f64 * 0.01, 0.0, 0.0]).collect());
        let g = query_ball(&src, &cloud(vec![[0.05, 0.0, 0.0]]), 10.0, 4).unwrap();
        assert_eq!(g.neighbors(0), &[0, 1, 2, 3]);
    }

    #[test]
    fn empty_ball_refers_to_center() {
        let src = cloud(vec![[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        let g = query_ball(&src, &cloud(vec![[5.0, 0.0, 0.0], [9.0, 9.0, 9.0]]), 0.1, 2).unwrap();
        assert_eq!(g.valid_count, vec![0, 0]);
        assert_eq!(g.neighbors(1), &[1, 1]);
        let gi = query_ball_indexed(src.points(), &[1], 1e-9, 3).unwrap();
        assert_eq!(gi.valid_count, vec![1]);
        assert_eq!(gi.neighbors(0), &[1, 1, 1]);
    }

    #[test]
    fn query_ball_validates_arguments() {
        let src = cloud(vec![[0.0; 3]]);
        assert!(query_ball(&src, &src, 0.0, 1).is_err());
        assert!(query_ball(&src, &src, 0.1, 0).is_err());
    }

    #[test]
    fn knn_examples() {
        let src = cloud(vec![[0.0, 0.0, 0.0], [3.0, 0.0, 0.0], [10.0, 0.0, 0.0]]);
        let g = knn(&src, &cloud(vec![[2.0, 0.0, 0.0]]), 2).unwrap();
        assert_eq!(g.neighbors(0), &[1, 0]);
        let g = knn(&src, &cloud(vec![[10.0, 0.0, 0.0]]), 1).unwrap();
        assert_eq!(g.neighbors(0), &[2]);
        let dup = cloud(vec![[5.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        let g = knn(&dup, &cloud(vec![[0.0; 3]]), 2).unwrap();
        assert_eq!(g.neighbors(0), &[1, 2]);
        assert!(knn(&src, &src, 4).is_err());
    }

    #[test]
    fn two_millimeter_association() {
        let contacts = cloud(vec![[0.0; 3], [1.0, 0.0, 0.0]]);
        let labels = cloud(vec![[0.0015, 0.0, 0.0], [1.0025, 0.0, 0.0]]);
        let m = associate_labels(&contacts, &labels, 0.002).unwrap();
        assert_eq!(m[0], LabelMatch { positive: true, label: Some(0) });
        assert_eq!(m[1], LabelMatch { positive: false, label: None });
        let none = associate_labels(&contacts, &Cloud::empty(Frame::Camera), 0.002).unwrap();
        assert!(none.iter().all(|m| !m.positive));
    }

    #[test]
    fn association_prefers_nearest_then_lowest_index() {
        let contacts = cloud(vec![[0.0; 3]]);
        let labels = cloud(vec![[0.0019, 0.0, 0.0], [0.0, 0.001, 0.0], [0.0, -0.001, 0.0]]);
        let m = associate_labels(&contacts, &labels, 0.002).unwrap();
        assert_eq!(m[0].label, Some(1));
    }
}
