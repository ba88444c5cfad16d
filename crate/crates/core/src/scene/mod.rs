//! Synthetic tabletop scenes built from primitives: surface sampling,
//! single-view rendering, antipodal labels and proposal evaluation.

mod eval;
mod labels;
mod mesh;
mod render;

pub use eval::*;
pub use labels::*;
pub use mesh::*;
pub use render::*;

use std::path::Path;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{validation, PcfError, Result};
use crate::grasp::Vec3;

/// Rigid transform `p ↦ R·p + t`. Serialized as `{"R": rows, "t": [..]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RigidJson", into = "RigidJson")]
pub struct Rigid {
    pub r: Matrix3<f64>,
    pub t: Vec3,
}

#[derive(Serialize, Deserialize)]
struct RigidJson {
    #[serde(rename = "R")]
    r: [[f64; 3]; 3],
    t: [f64; 3],
}

impl TryFrom<RigidJson> for Rigid {
    type Error = PcfError;
    fn try_from(j: RigidJson) -> Result<Self> {
        Rigid::new(Matrix3::from_fn(|i, k| j.r[i][k]), Vec3::from(j.t))
    }
}

impl From<Rigid> for RigidJson {
    fn from(p: Rigid) -> Self {
        RigidJson {
            r: std::array::from_fn(|i| std::array::from_fn(|k| p.r[(i, k)])),
            t: p.t.into(),
        }
    }
}

impl Rigid {
    pub fn new(r: Matrix3<f64>, t: Vec3) -> Result<Self> {
        let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
        let det = r.determinant();
        if !(ortho < 1e-9) || !((det - 1.0).abs() < 1e-9) || t.iter().any(|v| !v.is_finite()) {
            return validation(format!("not a rigid transform: |RᵀR−I|∞={ortho:e}, det={det}"));
        }
        Ok(Rigid { r, t })
    }

    pub fn identity() -> Self {
        Rigid {
            r: Matrix3::identity(),
            t: Vec3::zeros(),
        }
    }

    pub fn translation(t: Vec3) -> Self {
        Rigid {
            r: Matrix3::identity(),
            t,
        }
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        self.r * p + self.t
    }

    pub fn inverse(&self) -> Rigid {
        let rt = self.r.transpose();
        Rigid { r: rt, t: -(rt * self.t) }
    }

    /// Camera at `eye` looking at `target`, camera z forward and y pointing
    /// away from `up` (image rows grow downwards).
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Result<Rigid> {
        let z = target - eye;
        let zn = z.norm();
        if !(zn > 1e-12) {
            return validation("look_at: eye and target coincide");
        }
        let z = z / zn;
        let x = z.cross(&up);
        let xn = x.norm();
        if !(xn > 1e-9) {
            return validation("look_at: up vector parallel to the viewing direction");
        }
        let x = x / xn;
        let y = z.cross(&x);
        Rigid::new(Matrix3::from_columns(&[x, y, z]), eye)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "lowercase")]
pub enum Primitive {
    /// Full edge lengths, centered at the origin.
    Box { size: [f64; 3] },
    /// Axis along z, centered at the origin.
    Cylinder { radius: f64, height: f64 },
    Sphere { radius: f64 },
}

impl Primitive {
    pub fn validate(&self) -> Result<()> {
        let dims: Vec<f64> = match self {
            Primitive::Box { size } => size.to_vec(),
            Primitive::Cylinder { radius, height } => vec![*radius, *height],
            Primitive::Sphere { radius } => vec![*radius],
        };
        if dims.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return validation(format!("primitive dimensions must be positive: {self:?}"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    #[serde(flatten)]
    pub shape: Primitive,
    pub pose: Rigid,
}

/// Objects in world coordinates plus their grasp labels.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub objects: Vec<SceneObject>,
    #[serde(default)]
    pub labels: Vec<Label>,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        for o in &self.objects {
            o.shape.validate()?;
        }
        for l in &self.labels {
            l.validate()?;
        }
        Ok(())
    }

    /// A single upright cylinder resting on the table plane `z = 0`.
    pub fn cylinder(radius: f64, height: f64, at: [f64; 2]) -> Scene {
        Scene {
            objects: vec![SceneObject {
                shape: Primitive::Cylinder { radius, height },
                pose: Rigid::translation(Vec3::new(at[0], at[1], height / 2.0)),
            }],
            labels: Vec::new(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| PcfError::Validation(e.to_string()))
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Scene> {
        let s: Scene = serde_json::from_str(text).map_err(|e| PcfError::parse(origin, e))?;
        s.validate()?;
        Ok(s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_json()? + "\n").map_err(|e| PcfError::io(path.as_ref(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Scene> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| PcfError::io(path.as_ref(), e))?;
        Scene::from_json(&text, &path.as_ref().display().to_string())
    }
}
