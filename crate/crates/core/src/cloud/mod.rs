//! Point clouds and the kernels that operate on them.

mod fps;
mod neighbors;
pub mod ply;

pub use fps::{fps, fps_points};
pub use neighbors::{associate_labels, knn, query_ball, query_ball_indexed, LabelMatch, NeighborGroup};
pub(crate) use neighbors::knn_points;

use serde::{Deserialize, Serialize};

use crate::error::{argument, validation, Result};

pub type Point = [f64; 3];

/// Coordinate frame a cloud is expressed in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    Camera,
    Robot,
    /// Scene coordinates.
    World,
}

impl Frame {
    pub fn as_str(&self) -> &'static str {
        match self {
            Frame::Camera => "camera",
            Frame::Robot => "robot",
            Frame::World => "world",
        }
    }
}

impl std::str::FromStr for Frame {
    type Err = crate::error::PcfError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "camera" => Ok(Frame::Camera),
            "robot" => Ok(Frame::Robot),
            "world" => Ok(Frame::World),
            other => argument(format!("unknown frame `{other}`")),
        }
    }
}

/// Ordered 3-D points in meters, with an optional unit normal per point.
#[derive(Clone, Debug, PartialEq)]
pub struct Cloud {
    points: Vec<Point>,
    frame: Frame,
    normals: Option<Vec<Point>>,
}

impl Cloud {
    pub fn new(points: Vec<Point>, frame: Frame) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
            return validation(format!("point {i} has a non-finite coordinate"));
        }
        Ok(Cloud {
            points,
            frame,
            normals: None,
        })
    }

    pub fn empty(frame: Frame) -> Self {
        Cloud {
            points: Vec::new(),
            frame,
            normals: None,
        }
    }

    pub fn with_normals(mut self, normals: Vec<Point>) -> Result<Self> {
        if normals.len() != self.points.len() {
            return validation(format!(
                "{} normals for {} points",
                normals.len(),
                self.points.len()
            ));
        }
        for (i, n) in normals.iter().enumerate() {
            let len = norm(*n);
            if !len.is_finite() || (len - 1.0).abs() > 1e-6 {
                return validation(format!("normal {i} has length {len}"));
            }
        }
        self.normals = Some(normals);
        Ok(self)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[Point]> {
        self.normals.as_deref()
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Sub-cloud of the given indices, normals included.
    pub fn select(&self, idx: &[usize]) -> Cloud {
        Cloud {
            points: idx.iter().map(|&i| self.points[i]).collect(),
            frame: self.frame,
            normals: self
                .normals
                .as_ref()
                .map(|n| idx.iter().map(|&i| n[i]).collect()),
        }
    }

    pub fn centroid(&self) -> Option<Point> {
        if self.points.is_empty() {
            return None;
        }
        let mut c = [0.0; 3];
        for p in &self.points {
            for k in 0..3 {
                c[k] += p[k];
            }
        }
        let n = self.points.len() as f64;
        Some([c[0] / n, c[1] / n, c[2] / n])
    }
}

pub(crate) fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: Point) -> f64 {
    dot(a, a).sqrt()
}

/// Squared distance, evaluated in a fixed operation order so every kernel
/// and its oracle agree bit for bit.
#[inline]
pub fn dist2(a: Point, b: Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}
