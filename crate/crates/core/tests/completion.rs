mod common;

use common::*;
use nalgebra::{Rotation3, Vector3};
use pcfg_core::cloud::{fps_points, ply, Cloud, Frame};
use pcfg_core::completion::*;
use pcfg_core::PcfError;
use rand::Rng;

fn write_cloud(dir: &tempfile::TempDir, name: &str, pts: Vec<P>) -> std::path::PathBuf {
    let path = dir.path().join(name);
    ply::write(&path, &Cloud::new(pts, Frame::Camera).unwrap()).unwrap();
    path
}

/// Visible cap of a sphere for a camera looking along +z: points with
/// z ≤ center.z, sampled uniformly by area.
fn hemisphere(r: &mut rand_chacha::ChaCha8Rng, center: P, radius: f64, n: usize) -> Vec<P> {
    (0..n)
        .map(|_| {
            let z: f64 = -r.gen_range(0.0..1.0);
            let phi = r.gen_range(0.0..std::f64::consts::TAU);
            let s = (1.0 - z * z).sqrt();
            [center[0] + radius * s * phi.cos(), center[1] + radius * s * phi.sin(), center[2] + radius * z]
        })
        .collect()
}

#[test]
fn load_completion_counts_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng(5);

    let exact = random_cloud(&mut r, 1024);
    let c = load_completion(write_cloud(&dir, "a.ply", exact.clone()), 1024).unwrap();
    assert_eq!(c.points(), &exact[..]);

    let big = random_cloud(&mut r, 4096);
    let c = load_completion(write_cloud(&dir, "b.ply", big.clone()), 1024).unwrap();
    assert_eq!(c.len(), 1024);
    let expect: Vec<P> = fps_points(&big, 1024, 0).unwrap().into_iter().map(|i| big[i]).collect();
    assert_eq!(c.points(), &expect[..]);

    // small instance against the brute-force oracle
    let small = random_cloud(&mut r, 64);
    let c = load_completion(write_cloud(&dir, "s.ply", small.clone()), 16).unwrap();
    let expect: Vec<P> = fps_oracle(&small, 16, 0).into_iter().map(|i| small[i]).collect();
    assert_eq!(c.points(), &expect[..]);

    let few = write_cloud(&dir, "c.ply", random_cloud(&mut r, 100));
    assert!(matches!(load_completion(few, 1024), Err(PcfError::Validation(_))));
    assert!(matches!(load_completion(dir.path().join("missing.ply"), 1024), Err(PcfError::Io { .. })));
    std::fs::write(dir.path().join("bad.ply"), "ply\nformat ascii 1.0\nelement vertex 3\n").unwrap();
    assert!(matches!(load_completion(dir.path().join("bad.ply"), 1024), Err(PcfError::Parse { .. })));
}

#[test]
fn mirror_of_two_points_through_their_midplane_is_the_same_set() {
    let partial = Cloud::new(vec![[0.0, 0.0, 1.0], [0.0, 0.0, 0.0]], Frame::Camera).unwrap();
    let req = CompletionRequest::new(partial, [0.0, 0.0, 1.0], 2).unwrap();
    let mut out = mirror_complete(&req, MirrorAnchor::Centroid, 2).unwrap().points().to_vec();
    out.sort_by(|a, b| a[2].total_cmp(&b[2]));
    assert_eq!(out, vec![[0.0, 0.0, 0.0], [0.0, 0.0, 1.0]]);
}

#[test]
fn hemisphere_completion() {
    let mut r = rng(9);
    let center = [0.05, -0.02, 0.6];
    let radius = 0.04;
    let partial = Cloud::new(hemisphere(&mut r, center, radius, 1024), Frame::Camera).unwrap();
    let req = CompletionRequest::new(partial.clone(), [0.0, 0.0, 1.0], 1024).unwrap();

    // rear-anchored mirror closes the sphere
    let out = mirror_complete(&req, MirrorAnchor::Rear, 1024).unwrap();
    assert_eq!(out.len(), 1024);
    let c = out.centroid().unwrap();
    assert!(d2(c, center).sqrt() < 0.05 * radius, "centroid off by {}", d2(c, center).sqrt());

    // the centroid-anchored plane keeps the union centroid on the partial
    // centroid, half a radius in front of the center
    let out = mirror_complete(&req, MirrorAnchor::Centroid, 1024).unwrap();
    let pc = partial.centroid().unwrap();
    assert!((out.centroid().unwrap()[2] - pc[2]).abs() < 0.1 * radius);
    assert!((center[2] - pc[2] - radius / 2.0).abs() < 0.05 * radius);
}

#[test]
fn reflection_is_an_involution() {
    let mut r = rng(10);
    for _ in 0..1000 {
        let p: P = [r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)];
        let o: P = [r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)];
        let u = Vector3::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)).normalize();
        let u: P = u.into();
        let back = reflect(reflect(p, o, u), o, u);
        assert!(d2(back, p).sqrt() < 1e-12);
    }
}

fn nearest(set: &[P], p: P) -> f64 {
    set.iter().map(|q| d2(*q, p)).fold(f64::INFINITY, f64::min).sqrt()
}

#[test]
fn output_count_and_rotation_equivariance() {
    let mut r = rng(11);
    let pts: Vec<P> = (0..1024).map(|_| [r.gen_range(0.0..0.3), r.gen_range(0.0..0.3), r.gen_range(0.4..0.7)]).collect();
    let u = [0.0, 0.0, 1.0];
    let rot = Rotation3::from_euler_angles(0.3, -1.1, 2.0);
    let rp = |p: P| -> P { (rot * Vector3::from(p)).into() };
    let rotated: Vec<P> = pts.iter().map(|&p| rp(p)).collect();
    for anchor in [MirrorAnchor::Centroid, MirrorAnchor::Rear] {
        let req = CompletionRequest::new(Cloud::new(pts.clone(), Frame::Camera).unwrap(), u, 1024).unwrap();
        let req_r = CompletionRequest::new(Cloud::new(rotated.clone(), Frame::Camera).unwrap(), rp(u), 1024).unwrap();
        let out = mirror_complete(&req, anchor, 1024).unwrap();
        let out_r = mirror_complete(&req_r, anchor, 1024).unwrap();
        assert_eq!(out.len(), 1024);
        assert_eq!(out_r.len(), 1024);
        // the first pick does not depend on tie-breaking
        assert!(d2(rp(out.points()[0]), out_r.points()[0]).sqrt() < 1e-9);

        // the mirrored union is symmetric, so compare it as a set
        let full = mirror_complete(&req, anchor, 2048).unwrap();
        let full_r = mirror_complete(&req_r, anchor, 2048).unwrap();
        for p in full.points() {
            assert!(nearest(full_r.points(), rp(*p)) < 1e-9);
        }
        for p in out_r.points() {
            assert!(nearest(full_r.points(), *p) < 1e-12);
        }
    }
}
