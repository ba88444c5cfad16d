use nalgebra::Matrix3;
use pcfg_core::grasp::*;
use proptest::prelude::*;

fn vec3() -> impl Strategy<Value = Vec3> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn grasp() -> impl Strategy<Value = ContactGrasp> {
    (vec3(), vec3(), vec3(), 0.0f64..0.08).prop_filter_map("degenerate axes", |(c, z1, z2, w)| {
        let (b, a) = orthonormalize(z1, z2).ok()?;
        Some(ContactGrasp::new(c.into(), a.into(), b.into(), w).unwrap())
    })
}

fn pose() -> impl Strategy<Value = GraspPose> {
    grasp().prop_map(|g| contact_to_pose(&g, &GripperModel::default()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn poses_are_rotations(g in grasp()) {
        let p = contact_to_pose(&g, &GripperModel::default()).unwrap();
        prop_assert!((p.r.transpose() * p.r - Matrix3::identity()).abs().max() < 1e-9);
        prop_assert!((p.r.determinant() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn orthonormalize_is_scale_invariant(z1 in vec3(), z2 in vec3(), s1 in 1e-3f64..1e3, s2 in 1e-3f64..1e3) {
        if let Ok((b, a)) = orthonormalize(z1, z2) {
            let (bs, as_) = orthonormalize(z1 * s1, z2 * s2).unwrap();
            prop_assert!((b - bs).abs().max() < 1e-12);
            prop_assert!((a - as_).abs().max() < 1e-12);
            prop_assert!(a.dot(&b).abs() < 1e-9);
        }
    }

    #[test]
    fn adds_is_flip_invariant_and_zero_only_on_match(p in pose(), q in pose()) {
        let g = GripperModel::default();
        for mode in [PoseDistance::Sum, PoseDistance::Stacked] {
            let d = adds_distance(&p, &q, &g, mode);
            prop_assert!((d - adds_distance(&p, &q.flipped(), &g, mode)).abs() < 1e-12);
            prop_assert!(adds_distance(&q.flipped(), &q, &g, mode) < 1e-9);
            let same = (p.t - q.t).norm() < 1e-9
                && ((p.r - q.r).abs().max() < 1e-9 || (p.r - q.flipped().r).abs().max() < 1e-9);
            if !same {
                prop_assert!(d > 0.0);
            }
        }
    }

    #[test]
    fn control_points_are_isometric(p in pose()) {
        let g = GripperModel::default();
        let local = g.control_points();
        let world = control_points_world(&p, &g);
        for i in 0..5 {
            for j in 0..5 {
                let dl = (local[i] - local[j]).norm();
                let dw = (world[i] - world[j]).norm();
                prop_assert!((dl - dw).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pose_json_round_trips(p in pose()) {
        let back: GraspPose = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        prop_assert_eq!(back, p);
    }
}
