use std::f64::consts::PI;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use super::{Primitive, Scene, SceneObject};
use crate::cloud::{Cloud, Frame};
use crate::error::{argument, validation, Result};
use crate::grasp::Vec3;

/// Triangle soup with outward winding.
#[derive(Clone, Debug, Default)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
    /// Scene object each triangle belongs to.
    pub owner: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Tessellation {
    /// Facets around a cylinder or sphere.
    pub segments: usize,
    /// Latitude bands of a sphere.
    pub rings: usize,
}

impl Default for Tessellation {
    fn default() -> Self {
        Tessellation { segments: 64, rings: 32 }
    }
}

impl Mesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i >= vertices.len())) {
            return validation(format!("triangle {t:?} references a missing vertex"));
        }
        let owner = vec![0; triangles.len()];
        Ok(Mesh {
            vertices,
            triangles,
            owner,
        })
    }

    pub fn corners(&self, i: usize) -> [Vec3; 3] {
        self.triangles[i].map(|v| self.vertices[v])
    }

    fn cross(&self, i: usize) -> Vec3 {
        let [a, b, c] = self.corners(i);
        (b - a).cross(&(c - a))
    }

    pub fn area(&self, i: usize) -> f64 {
        self.cross(i).norm() / 2.0
    }

    pub fn normal(&self, i: usize) -> Vec3 {
        self.cross(i).normalize()
    }

    fn append(&mut self, other: Mesh, owner: usize) {
        let base = self.vertices.len();
        self.vertices.extend(other.vertices);
        self.triangles
            .extend(other.triangles.iter().map(|t| t.map(|v| v + base)));
        self.owner.extend(std::iter::repeat(owner).take(other.triangles.len()));
    }

    /// Nearest intersection of the ray `origin + s·dir`, `s > 1e-9`, ignoring
    /// triangle `skip`; returns `(s, triangle)`.
    pub fn ray_hit(&self, origin: Vec3, dir: Vec3, skip: Option<usize>) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for i in 0..self.triangles.len() {
            if Some(i) == skip {
                continue;
            }
            let [a, b, c] = self.corners(i);
            let (e1, e2) = (b - a, c - a);
            let p = dir.cross(&e2);
            let det = e1.dot(&p);
            if det.abs() < 1e-15 {
                continue;
            }
            let inv = 1.0 / det;
            let s0 = origin - a;
            let u = s0.dot(&p) * inv;
            if !(0.0..=1.0).contains(&u) {
                continue;
            }
            let q = s0.cross(&e1);
            let v = dir.dot(&q) * inv;
            if v < 0.0 || u + v > 1.0 {
                continue;
            }
            let s = e2.dot(&q) * inv;
            if s > 1e-9 && best.is_none_or(|(bs, _)| s < bs) {
                best = Some((s, i));
            }
        }
        best
    }
}

/// Flip triangles of a mesh that is convex around its local origin so every
/// normal points away from it.
fn orient_outward(mut m: Mesh) -> Mesh {
    for i in 0..m.triangles.len() {
        let [a, b, c] = m.corners(i);
        if m.cross(i).dot(&((a + b + c) / 3.0)) < 0.0 {
            m.triangles[i].swap(1, 2);
        }
    }
    m
}

fn local_mesh(shape: &Primitive, tess: Tessellation) -> Mesh {
    let mut v = Vec::new();
    let mut t = Vec::new();
    match *shape {
        Primitive::Box { size } => {
            let h = Vec3::new(size[0] / 2.0, size[1] / 2.0, size[2] / 2.0);
            for i in 0..8 {
                let s = |bit: usize| if i & (1 << bit) != 0 { 1.0 } else { -1.0 };
                v.push(Vec3::new(s(0) * h.x, s(1) * h.y, s(2) * h.z));
            }
            // faces as corner quadruples in cyclic order
            let faces = [[0, 1, 3, 2], [4, 5, 7, 6], [0, 1, 5, 4], [2, 3, 7, 6], [0, 2, 6, 4], [1, 3, 7, 5]];
            for f in faces {
                t.push([f[0], f[1], f[2]]);
                t.push([f[0], f[2], f[3]]);
            }
        }
        Primitive::Cylinder { radius, height } => {
            let s = tess.segments.max(3);
            let h = height / 2.0;
            for z in [-h, h] {
                for i in 0..s {
                    let th = 2.0 * PI * i as f64 / s as f64;
                    v.push(Vec3::new(radius * th.cos(), radius * th.sin(), z));
                }
            }
            let (bottom, top) = (2 * s, 2 * s + 1);
            v.push(Vec3::new(0.0, 0.0, -h));
            v.push(Vec3::new(0.0, 0.0, h));
            for i in 0..s {
                let j = (i + 1) % s;
                t.push([i, j, s + j]);
                t.push([i, s + j, s + i]);
                t.push([bottom, i, j]);
                t.push([top, s + i, s + j]);
            }
        }
        Primitive::Sphere { radius } => {
            let (s, r) = (tess.segments.max(3), tess.rings.max(2));
            v.push(Vec3::new(0.0, 0.0, radius));
            for k in 1..r {
                let ph = PI * k as f64 / r as f64;
                for i in 0..s {
                    let th = 2.0 * PI * i as f64 / s as f64;
                    v.push(radius * Vec3::new(ph.sin() * th.cos(), ph.sin() * th.sin(), ph.cos()));
                }
            }
            v.push(Vec3::new(0.0, 0.0, -radius));
            let south = v.len() - 1;
            let ring = |k: usize, i: usize| 1 + (k - 1) * s + i % s;
            for i in 0..s {
                t.push([0, ring(1, i), ring(1, i + 1)]);
                t.push([south, ring(r - 1, i), ring(r - 1, i + 1)]);
                for k in 1..r - 1 {
                    t.push([ring(k, i), ring(k + 1, i), ring(k + 1, i + 1)]);
                    t.push([ring(k, i), ring(k + 1, i + 1), ring(k, i + 1)]);
                }
            }
        }
    }
    orient_outward(Mesh {
        owner: vec![0; t.len()],
        vertices: v,
        triangles: t,
    })
}

pub fn tessellate(obj: &SceneObject, tess: Tessellation) -> Mesh {
    let mut m = local_mesh(&obj.shape, tess);
    for p in &mut m.vertices {
        *p = obj.pose.apply(*p);
    }
    m
}

pub fn scene_mesh(scene: &Scene, tess: Tessellation) -> Mesh {
    let mut m = Mesh::default();
    for (i, o) in scene.objects.iter().enumerate() {
        m.append(tessellate(o, tess), i);
    }
    m
}

/// Area-weighted uniform samples with face normals; also returns the
/// source triangle of every sample.
pub fn sample_mesh_indexed<R: Rng>(mesh: &Mesh, n: usize, rng: &mut R) -> Result<(Cloud, Vec<usize>)> {
    if n == 0 {
        return argument("sample_surface: n must be at least 1");
    }
    let areas: Vec<f64> = (0..mesh.triangles.len()).map(|i| mesh.area(i)).collect();
    let pick = WeightedIndex::new(&areas).map_err(|_| crate::error::PcfError::Argument("sample_surface: mesh has no area".into()))?;
    let mut pts = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    let mut tris = Vec::with_capacity(n);
    for _ in 0..n {
        let i = pick.sample(rng);
        let [a, b, c] = mesh.corners(i);
        let (mut u, mut v): (f64, f64) = (rng.gen(), rng.gen());
        if u + v > 1.0 {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        let p = a + u * (b - a) + v * (c - a);
        pts.push(p.into());
        normals.push(mesh.normal(i).into());
        tris.push(i);
    }
    Ok((Cloud::new(pts, Frame::World)?.with_normals(normals)?, tris))
}

pub fn sample_mesh<R: Rng>(mesh: &Mesh, n: usize, rng: &mut R) -> Result<Cloud> {
    Ok(sample_mesh_indexed(mesh, n, rng)?.0)
}

/// Uniform surface samples of every object, world frame, with normals.
pub fn sample_surface<R: Rng>(scene: &Scene, n: usize, rng: &mut R) -> Result<Cloud> {
    if scene.objects.is_empty() {
        return argument("sample_surface: scene has no objects");
    }
    sample_mesh(&scene_mesh(scene, Tessellation::default()), n, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Rigid;

    fn unit(shape: Primitive) -> SceneObject {
        SceneObject {
            shape,
            pose: Rigid::identity(),
        }
    }

    fn total_area(m: &Mesh) -> f64 {
        (0..m.triangles.len()).map(|i| m.area(i)).sum()
    }

    #[test]
    fn primitive_areas() {
        let b = tessellate(&unit(Primitive::Box { size: [1.0, 2.0, 3.0] }), Tessellation::default());
        assert_eq!(b.triangles.len(), 12);
        assert!((total_area(&b) - 22.0).abs() < 1e-12);
        let c = tessellate(&unit(Primitive::Cylinder { radius: 1.0, height: 2.0 }), Tessellation { segments: 512, rings: 2 });
        assert!((total_area(&c) - (2.0 * PI * 2.0 + 2.0 * PI)).abs() < 1e-3);
        let s = tessellate(&unit(Primitive::Sphere { radius: 1.0 }), Tessellation { segments: 256, rings: 128 });
        let rel = (total_area(&s) - 4.0 * PI).abs() / (4.0 * PI);
        assert!(rel < 5e-4, "{rel}");
    }

    #[test]
    fn normals_point_outward() {
        for shape in [
            Primitive::Box { size: [0.1, 0.2, 0.3] },
            Primitive::Cylinder { radius: 0.02, height: 0.1 },
            Primitive::Sphere { radius: 0.05 },
        ] {
            let m = tessellate(&unit(shape), Tessellation::default());
            for i in 0..m.triangles.len() {
                let [a, b, c] = m.corners(i);
                assert!(m.normal(i).dot(&((a + b + c) / 3.0)) > 0.0);
            }
        }
    }

    #[test]
    fn ray_hits_far_side_of_a_box() {
        let m = tessellate(&unit(Primitive::Box { size: [0.05, 0.2, 0.2] }), Tessellation::default());
        let (s, i) = m.ray_hit(Vec3::new(0.025, 0.01, 0.02), Vec3::new(-1.0, 0.0, 0.0), None).unwrap();
        assert!((s - 0.05).abs() < 1e-12);
        assert!((m.normal(i) - Vec3::new(-1.0, 0.0, 0.0)).norm() < 1e-12);
        assert!(m.ray_hit(Vec3::new(1.0, 1.0, 1.0), Vec3::new(1.0, 0.0, 0.0), None).is_none());
    }
}
