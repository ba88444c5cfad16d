use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{sample_mesh, scene_mesh, Mesh, Rigid, Scene, Tessellation};
use crate::cloud::{Cloud, Frame, Point};
use crate::error::{validation, Result};
use crate::grasp::Vec3;

/// Relative depth slack when comparing a sample against the rasterized
/// surface at its pixel center; covers the depth change across one pixel on
/// oblique faces.
const OCCLUSION_TOLERANCE: f64 = 0.02;

/// Pinhole camera. `camera` maps camera coordinates (x right, y down,
/// z forward) to world coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ViewSpec {
    pub camera: Rigid,
    /// Focal length in pixels.
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub near: f64,
    pub far: f64,
    /// Surface samples projected per render.
    pub samples: usize,
}

impl Default for ViewSpec {
    fn default() -> Self {
        ViewSpec {
            camera: Rigid::identity(),
            focal: 300.0,
            cx: 120.0,
            cy: 120.0,
            width: 240,
            height: 240,
            near: 0.05,
            far: 3.0,
            samples: 200_000,
        }
    }
}

impl ViewSpec {
    pub fn looking_at(eye: Vec3, target: Vec3) -> Result<ViewSpec> {
        let up = if (target - eye).normalize().z.abs() > 0.99 { Vec3::y() } else { Vec3::z() };
        Ok(ViewSpec {
            camera: Rigid::look_at(eye, target, up)?,
            ..ViewSpec::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal > 0.0) {
            return validation(format!("focal length must be positive, got {}", self.focal));
        }
        if self.width < 16 || self.height < 16 {
            return validation(format!("resolution {}x{} below 16x16", self.width, self.height));
        }
        if !(self.near > 0.0 && self.far > self.near) {
            return validation(format!("clip range [{}, {}] is invalid", self.near, self.far));
        }
        if self.samples == 0 {
            return validation("render needs at least one surface sample");
        }
        Ok(())
    }

    /// Pixel of a camera-frame point, if it lands on the sensor.
    pub fn project(&self, p: Vec3) -> Option<(usize, usize)> {
        let u = self.focal * p.x / p.z + self.cx;
        let v = self.focal * p.y / p.z + self.cy;
        if !(u >= 0.0 && v >= 0.0) {
            return None;
        }
        let (u, v) = (u.floor() as usize, v.floor() as usize);
        (u < self.width && v < self.height).then_some((u, v))
    }
}

/// Depth of the nearest triangle through every pixel center, infinite where
/// nothing is hit. Triangles reaching in front of the near plane are skipped.
fn depth_buffer(mesh: &Mesh, to_cam: &Rigid, view: &ViewSpec) -> Vec<f64> {
    let mut depth = vec![f64::INFINITY; view.width * view.height];
    for i in 0..mesh.triangles.len() {
        let c = mesh.corners(i).map(|p| to_cam.apply(p));
        if c.iter().any(|p| p.z < view.near) {
            continue;
        }
        let n = (c[1] - c[0]).cross(&(c[2] - c[0]));
        let d = n.dot(&c[0]);
        let px = c.map(|p| (view.focal * p.x / p.z + view.cx, view.focal * p.y / p.z + view.cy));
        let lo = |k: fn(&(f64, f64)) -> f64| px.iter().map(k).fold(f64::INFINITY, f64::min);
        let hi = |k: fn(&(f64, f64)) -> f64| px.iter().map(k).fold(f64::NEG_INFINITY, f64::max);
        let (u0, u1) = (lo(|p| p.0), hi(|p| p.0));
        let (v0, v1) = (lo(|p| p.1), hi(|p| p.1));
        if u1 < 0.0 || v1 < 0.0 || u0 >= view.width as f64 || v0 >= view.height as f64 {
            continue;
        }
        let area = edge(px[0], px[1], px[2]);
        if area == 0.0 {
            continue;
        }
        let first = |x: f64| (x - 0.5).ceil().max(0.0) as usize;
        let last = |x: f64, size: usize| ((x - 0.5).floor() as usize).min(size - 1);
        for v in first(v0)..=last(v1, view.height) {
            for u in first(u0)..=last(u1, view.width) {
                let q = (u as f64 + 0.5, v as f64 + 0.5);
                let w = [edge(px[1], px[2], q), edge(px[2], px[0], q), edge(px[0], px[1], q)];
                if !(w.iter().all(|&x| x * area >= 0.0)) {
                    continue;
                }
                let ray = Vec3::new((q.0 - view.cx) / view.focal, (q.1 - view.cy) / view.focal, 1.0);
                let z = d / n.dot(&ray);
                let cell = &mut depth[v * view.width + u];
                if z > 0.0 && z < *cell {
                    *cell = z;
                }
            }
        }
    }
    depth
}

fn edge(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
}

/// Camera-frame samples of the scene as one depth camera sees them:
/// back-facing samples are culled, each pixel keeps its nearest sample, and
/// a sample is dropped when the rasterized surface at its pixel center lies
/// clearly in front of it (so sparse sampling of an occluder cannot leak
/// the surface behind it). The output is a subset of the projected samples
/// in row-major pixel order, with normals.
pub fn render_view<R: Rng>(scene: &Scene, view: &ViewSpec, rng: &mut R) -> Result<Cloud> {
    view.validate()?;
    let empty = || Cloud::new(Vec::new(), Frame::Camera).and_then(|c| c.with_normals(Vec::new()));
    if scene.objects.is_empty() {
        log::warn!("render_view: scene has no objects");
        return empty();
    }
    let mesh = scene_mesh(scene, Tessellation::default());
    let world = sample_mesh(&mesh, view.samples, rng)?;
    let to_cam = view.camera.inverse();
    let raster = depth_buffer(&mesh, &to_cam, view);
    let normals = world.normals().expect("sampled with normals");
    let mut zbuf: Vec<Option<(f64, Point, Point)>> = vec![None; view.width * view.height];
    for (p, n) in world.points().iter().zip(normals) {
        let pc = to_cam.apply(Vec3::from(*p));
        let nc = to_cam.r * Vec3::from(*n);
        if pc.z < view.near || pc.z > view.far || nc.dot(&pc) >= 0.0 {
            continue;
        }
        let Some((u, v)) = view.project(pc) else { continue };
        if pc.z > raster[v * view.width + u] * (1.0 + OCCLUSION_TOLERANCE) {
            continue;
        }
        let cell = &mut zbuf[v * view.width + u];
        if cell.is_none_or(|(z, _, _)| pc.z < z) {
            *cell = Some((pc.z, pc.into(), nc.into()));
        }
    }
    let (pts, nrm): (Vec<Point>, Vec<Point>) = zbuf.into_iter().flatten().map(|(_, p, n)| (p, n)).unzip();
    if pts.is_empty() {
        log::warn!("render_view: no visible surface");
    }
    Cloud::new(pts, Frame::Camera)?.with_normals(nrm)
}
