use proptest::prelude::*;
use t2c_core::geometry::{
    clip_segment_near, plan_to_polylines, project, vehicle_to_camera, CameraModel, Mat3, Point3, TrajectoryPlan,
    TrajectoryPoint,
};

/// Rodrigues rotation about a unit axis.
fn axis_angle(axis: [f64; 3], angle: f64) -> Mat3 {
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let [x, y, z] = [axis[0] / n, axis[1] / n, axis[2] / n];
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    Mat3([
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ])
}

fn point() -> impl Strategy<Value = Point3> {
    (-50.0f64..50.0, -50.0f64..50.0, -50.0f64..50.0).prop_map(|(x, y, z)| Point3::new(x, y, z))
}

fn camera() -> impl Strategy<Value = CameraModel> {
    (
        prop::array::uniform3(-1.0f64..1.0).prop_filter("nonzero axis", |a| a.iter().map(|v| v * v).sum::<f64>() > 1e-3),
        -3.0f64..3.0,
        point(),
    )
        .prop_map(|(axis, angle, t)| {
            let mut cam = CameraModel::toy_default();
            cam.rotation = axis_angle(axis, angle).mul_mat(&Mat3::forward_camera());
            cam.translation = t;
            cam
        })
}

fn axis_camera() -> CameraModel {
    CameraModel {
        fx: 100.0,
        fy: 100.0,
        cx: 64.0,
        cy: 64.0,
        rotation: Mat3::forward_camera(),
        translation: Point3::default(),
        width: 128,
        height: 128,
        z_near: 0.1,
    }
}

#[test]
fn rigid_transform_examples_match_matrix_arithmetic() {
    let mut cam = axis_camera();
    cam.translation = Point3::new(1.0, 0.0, 0.0);
    let p = Point3::new(11.0, 0.0, 0.0);
    // Rᵀ·(p − t) written out by hand for the axis-swap rotation
    let r = cam.rotation.0;
    let d = [10.0, 0.0, 0.0];
    let by_hand: Vec<f64> = (0..3).map(|i| (0..3).map(|k| r[k][i] * d[k]).sum()).collect();
    let got = vehicle_to_camera(&p, &cam);
    assert_eq!([got.x, got.y, got.z], [by_hand[0], by_hand[1], by_hand[2]]);
    assert_eq!([got.x, got.y, got.z], [0.0, 0.0, 10.0]);
}

#[test]
fn generated_camera_is_valid() {
    CameraModel::toy_default().validate().unwrap();
    let mut bad = CameraModel::toy_default();
    bad.rotation = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]]);
    assert!(bad.validate().is_err());
}

fn random_plan(xs: &[f64], ys: &[f64], speeds: &[f64]) -> TrajectoryPlan {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let line = |off: f64| sorted.iter().map(|&x| Point3::new(x, off, 0.0)).collect::<Vec<_>>();
    TrajectoryPlan {
        trajectory: sorted
            .iter()
            .zip(ys)
            .zip(speeds)
            .map(|((&x, &y), &v)| TrajectoryPoint {
                position: Point3::new(x, y, 0.0),
                speed: v,
            })
            .collect(),
        road_boundaries: [line(4.0), line(-4.0)],
        lane_lines: [line(1.75), line(-1.75)],
    }
}

proptest! {
    #[test]
    fn rigid_transform_preserves_distances(cam in camera(), p in point(), q in point()) {
        let (tp, tq) = (vehicle_to_camera(&p, &cam), vehicle_to_camera(&q, &cam));
        prop_assert!((p.distance(&q) - tp.distance(&tq)).abs() < 1e-9);
    }

    #[test]
    fn projection_is_ray_invariant(x in -20.0f64..20.0, y in -20.0f64..20.0, z in 0.1f64..60.0, lambda in 1.0f64..20.0) {
        let cam = axis_camera();
        let p = Point3::new(x, y, z);
        let a = project(&p, &cam).unwrap();
        let b = project(&(p * lambda), &cam).unwrap();
        prop_assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9);
    }

    #[test]
    fn clipping_is_idempotent_and_respects_near_plane(a in point(), b in point(), z_near in 0.01f64..2.0) {
        match clip_segment_near(&a, &b, z_near) {
            None => prop_assert!(a.z < z_near && b.z < z_near),
            Some((a1, b1)) => {
                prop_assert!(a1.z >= z_near && b1.z >= z_near);
                let again = clip_segment_near(&a1, &b1, z_near);
                prop_assert_eq!(again, Some((a1, b1)));
                // the clipped segment lies on the original line
                let ab = b - a;
                for p in [a1, b1] {
                    let ap = p - a;
                    let cross = Point3::new(
                        ab.y * ap.z - ab.z * ap.y,
                        ab.z * ap.x - ab.x * ap.z,
                        ab.x * ap.y - ab.y * ap.x,
                    );
                    prop_assert!(cross.norm() <= 1e-9 * (1.0 + ab.norm() * ap.norm()));
                }
            }
        }
    }

    #[test]
    fn polylines_only_come_from_visible_geometry(
        cam in camera(),
        xs in prop::collection::vec(-30.0f64..60.0, 2..12),
        ys in prop::collection::vec(-6.0f64..6.0, 12),
        speeds in prop::collection::vec(0.0f64..20.0, 12),
    ) {
        let plan = random_plan(&xs, &ys, &speeds);
        let max_extent = 200.0;
        // any vertex with source depth ≥ z_near is bounded by |x|/z_near
        let bound_u = cam.fx * max_extent / cam.z_near + cam.cx.abs();
        let bound_v = cam.fy * max_extent / cam.z_near + cam.cy.abs();
        let any_visible = [&plan.road_boundaries[0], &plan.road_boundaries[1], &plan.lane_lines[0], &plan.lane_lines[1]]
            .iter()
            .flat_map(|l| l.iter())
            .chain(plan.trajectory.iter().map(|p| &p.position))
            .any(|p| vehicle_to_camera(p, &cam).z >= cam.z_near);
        let polys = plan_to_polylines(&plan, &cam);
        if !any_visible {
            prop_assert!(polys.is_empty());
        }
        for poly in &polys {
            prop_assert!(poly.vertices.len() >= 2);
            prop_assert_eq!(poly.vertices.len(), poly.colors.len());
            for v in &poly.vertices {
                prop_assert!(v[0].is_finite() && v[1].is_finite());
                prop_assert!(v[0].abs() <= bound_u && v[1].abs() <= bound_v);
            }
        }
    }
}
