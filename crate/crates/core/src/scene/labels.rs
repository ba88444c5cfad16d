use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{sample_mesh_indexed, scene_mesh, Rigid, Scene, Tessellation};
use crate::error::{argument, validation, PcfError, Result};
use crate::grasp::{ContactGrasp, GripperModel, Vec3};

/// A labelled grasp with an analytic quality in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Label {
    pub contact: ContactGrasp,
    pub quality: f64,
}

impl Label {
    pub fn validate(&self) -> Result<()> {
        self.contact.validate()?;
        if !(0.0..=1.0).contains(&self.quality) {
            return validation(format!("label quality {} outside [0,1]", self.quality));
        }
        Ok(())
    }

    /// The same label expressed after applying `x`.
    pub fn transformed(&self, x: &Rigid) -> Label {
        let g = &self.contact;
        let rot = |v: [f64; 3]| -> [f64; 3] { (x.r * Vec3::from(v)).into() };
        Label {
            contact: ContactGrasp {
                c: x.apply(Vec3::from(g.c)).into(),
                a: rot(g.a),
                b: rot(g.b),
                width: g.width,
            },
            quality: self.quality,
        }
    }
}

pub fn labels_to_json(labels: &[Label]) -> Result<String> {
    serde_json::to_string_pretty(labels).map_err(|e| PcfError::Validation(e.to_string()))
}

pub fn labels_from_json(text: &str, origin: &str) -> Result<Vec<Label>> {
    let labels: Vec<Label> = serde_json::from_str(text).map_err(|e| PcfError::parse(origin, e))?;
    for l in &labels {
        l.validate()?;
    }
    Ok(labels)
}

pub fn save_labels(path: impl AsRef<Path>, labels: &[Label]) -> Result<()> {
    std::fs::write(path.as_ref(), labels_to_json(labels)? + "\n").map_err(|e| PcfError::io(path.as_ref(), e))
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<Label>> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| PcfError::io(path.as_ref(), e))?;
    labels_from_json(&text, &path.as_ref().display().to_string())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AntipodalConfig {
    pub count: usize,
    pub friction_half_angle_deg: f64,
    /// Attempts per requested label before giving up.
    pub attempts_per_label: usize,
}

impl Default for AntipodalConfig {
    fn default() -> Self {
        AntipodalConfig {
            count: 200,
            friction_half_angle_deg: 21.8,
            attempts_per_label: 50,
        }
    }
}

/// Both contact normals lie within the friction cone around the grasp
/// axis: `−n_p` and `n_q` each within `half_angle` of `u = (q − p)/|q − p|`.
pub fn in_friction_cone(n_p: Vec3, n_q: Vec3, u: Vec3, half_angle_rad: f64) -> bool {
    let c = half_angle_rad.cos();
    (-n_p).dot(&u) >= c && n_q.dot(&u) >= c
}

/// Unit part of `v` orthogonal to the unit vector `u`, if longer than `min`.
fn perpendicular(v: Vec3, u: Vec3, min: f64) -> Option<Vec3> {
    let r = v - v.dot(&u) * u;
    let n = r.norm();
    (n > min).then(|| r / n)
}

/// Rejection sampling of antipodal contact pairs: from a random surface
/// sample `p` a ray is cast along its inward normal to the next surface
/// `q`. Pairs within the friction cone and no wider than the gripper become
/// labels with `b` along `p → q` and quality `−n_p·n_q`. The approach `a`
/// is the part of world up (away from the table) orthogonal to `b`; for
/// near-vertical pairs it is the part of `midpoint − object center`
/// orthogonal to `b`, and a random perpendicular if that vanishes too.
pub fn gen_antipodal_labels<R: Rng>(
    scene: &Scene,
    cfg: &AntipodalConfig,
    gripper: &GripperModel,
    rng: &mut R,
) -> Result<Vec<Label>> {
    let half = cfg.friction_half_angle_deg.to_radians();
    if !(cfg.friction_half_angle_deg > 0.0 && cfg.friction_half_angle_deg <= 45.0) {
        return argument(format!(
            "friction half-angle must be in (0°, 45°], got {}°",
            cfg.friction_half_angle_deg
        ));
    }
    if scene.objects.is_empty() {
        return argument("gen_antipodal_labels: scene has no objects");
    }
    let mesh = scene_mesh(scene, Tessellation::default());
    let budget = cfg.count * cfg.attempts_per_label;
    let (samples, tris) = sample_mesh_indexed(&mesh, budget.max(1), rng)?;
    let mut labels = Vec::with_capacity(cfg.count);
    for (p, &tri) in samples.points().iter().zip(&tris) {
        if labels.len() == cfg.count {
            break;
        }
        let p = Vec3::from(*p);
        let n_p = mesh.normal(tri);
        let Some((s, hit)) = mesh.ray_hit(p, -n_p, Some(tri)) else { continue };
        if s > gripper.w_max {
            continue;
        }
        let n_q = mesh.normal(hit);
        let u = -n_p;
        if !in_friction_cone(n_p, n_q, u, half) {
            continue;
        }
        let mid = p + 0.5 * s * u;
        let outward = mid - scene.objects[mesh.owner[tri]].pose.t;
        let a = match perpendicular(Vec3::z(), u, 0.1).or_else(|| perpendicular(outward, u, 1e-3)) {
            Some(a) => a,
            None => {
                let r = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                let Some(a) = perpendicular(r, u, 1e-3) else { continue };
                a
            }
        };
        labels.push(Label {
            contact: ContactGrasp {
                c: p.into(),
                a: a.into(),
                b: u.into(),
                width: s,
            },
            quality: (-n_p.dot(&n_q)).clamp(0.0, 1.0),
        });
    }
    if labels.is_empty() {
        log::warn!("gen_antipodal_labels: no antipodal pair found in {budget} attempts");
    }
    Ok(labels)
}
