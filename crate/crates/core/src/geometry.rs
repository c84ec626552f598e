//! Rigid transforms and pinhole projection of planning polylines.
//!
//! Frames:
//! - vehicle: +x forward, +y left, +z up (meters)
//! - camera: +z along the optical axis, +x right, +y down (meters)
//!
//! A [`CameraModel`] stores the camera *pose* in the vehicle frame; the
//! vehicle-to-camera transform is its inverse, `Rᵀ·(p − t)`.

use std::ops::{Add, Mul, Sub};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{self, Rgb, SpeedScale};

/// Default near-plane distance in meters.
pub const DEFAULT_Z_NEAR: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        (*self - *other).norm()
    }

    fn lerp(&self, other: &Point3, t: f64) -> Point3 {
        *self + (*other - *self) * t
    }
}

impl Add for Point3 {
    type Output = Point3;
    fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Point3 {
    type Output = Point3;
    fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    fn mul(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Row-major 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn from_row_major(v: &[f64]) -> Option<Mat3> {
        if v.len() != 9 {
            return None;
        }
        Some(Mat3([[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]]))
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        ]
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.0;
        Mat3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn mul_mat(&self, o: &Mat3) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.0[i][k] * o.0[k][j]).sum();
            }
        }
        Mat3(out)
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        let m = &self.0;
        Point3::new(
            m[0][0] * p.x + m[0][1] * p.y + m[0][2] * p.z,
            m[1][0] * p.x + m[1][1] * p.y + m[1][2] * p.z,
            m[2][0] * p.x + m[2][1] * p.y + m[2][2] * p.z,
        )
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Rotation about the vehicle y axis (pitch), positive tilts the
    /// forward axis downwards.
    pub fn pitch_down(angle: f64) -> Mat3 {
        let (s, c) = angle.sin_cos();
        Mat3([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    }

    /// Camera axes expressed in the vehicle frame for a forward-looking
    /// camera: columns are camera x (= vehicle −y), y (= −z), z (= +x).
    pub fn forward_camera() -> Mat3 {
        Mat3([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])
    }
}

/// One trajectory vertex: position in the vehicle frame plus planned speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub position: Point3,
    /// m/s
    pub speed: f64,
}

/// Planned ego path together with the road boundaries and lane lines, all
/// in the vehicle frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPlan {
    pub trajectory: Vec<TrajectoryPoint>,
    pub road_boundaries: [Vec<Point3>; 2],
    pub lane_lines: [Vec<Point3>; 2],
}

#[derive(Serialize, Deserialize)]
struct PlanFile {
    trajectory: Vec<[f64; 4]>,
    road_boundaries: Vec<Vec<[f64; 3]>>,
    lane_lines: Vec<Vec<[f64; 3]>>,
}

fn to_points(raw: &[[f64; 3]]) -> Vec<Point3> {
    raw.iter().map(|p| Point3::new(p[0], p[1], p[2])).collect()
}

fn from_points(pts: &[Point3]) -> Vec<[f64; 3]> {
    pts.iter().map(|p| [p.x, p.y, p.z]).collect()
}

impl TrajectoryPlan {
    pub fn validate(&self) -> Result<()> {
        let check_line = |name: &str, pts: &[Point3]| -> Result<()> {
            if pts.len() < 2 {
                return Err(Error::InvalidPlan(format!(
                    "{name} has {} points, need at least 2",
                    pts.len()
                )));
            }
            if let Some(i) = pts.iter().position(|p| !p.is_finite()) {
                return Err(Error::InvalidPlan(format!("{name}[{i}] is not finite")));
            }
            Ok(())
        };
        let positions: Vec<Point3> = self.trajectory.iter().map(|p| p.position).collect();
        check_line("trajectory", &positions)?;
        for (i, p) in self.trajectory.iter().enumerate() {
            if !p.speed.is_finite() || p.speed < 0.0 {
                return Err(Error::InvalidPlan(format!(
                    "trajectory[{i}] speed {} must be finite and non-negative",
                    p.speed
                )));
            }
        }
        if let Some(i) = positions.windows(2).position(|w| w[1].x < w[0].x) {
            return Err(Error::InvalidPlan(format!(
                "trajectory x decreases between points {i} and {}",
                i + 1
            )));
        }
        for (k, line) in self.road_boundaries.iter().enumerate() {
            check_line(&format!("road_boundaries[{k}]"), line)?;
        }
        for (k, line) in self.lane_lines.iter().enumerate() {
            check_line(&format!("lane_lines[{k}]"), line)?;
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> std::result::Result<Self, serde_json::Error> {
        let raw: PlanFile = serde_json::from_str(s)?;
        Self::from_file_repr(raw).map_err(serde::de::Error::custom)
    }

    fn from_file_repr(raw: PlanFile) -> std::result::Result<Self, String> {
        let pair = |name: &str, v: Vec<Vec<[f64; 3]>>| -> std::result::Result<[Vec<Point3>; 2], String> {
            match <[Vec<[f64; 3]>; 2]>::try_from(v) {
                Ok([a, b]) => Ok([to_points(&a), to_points(&b)]),
                Err(v) => Err(format!("`{name}` must hold exactly 2 polylines, found {}", v.len())),
            }
        };
        Ok(TrajectoryPlan {
            trajectory: raw
                .trajectory
                .iter()
                .map(|p| TrajectoryPoint {
                    position: Point3::new(p[0], p[1], p[2]),
                    speed: p[3],
                })
                .collect(),
            road_boundaries: pair("road_boundaries", raw.road_boundaries)?,
            lane_lines: pair("lane_lines", raw.lane_lines)?,
        })
    }

    pub fn to_json_string(&self) -> String {
        let raw = PlanFile {
            trajectory: self
                .trajectory
                .iter()
                .map(|p| [p.position.x, p.position.y, p.position.z, p.speed])
                .collect(),
            road_boundaries: self.road_boundaries.iter().map(|l| from_points(l)).collect(),
            lane_lines: self.lane_lines.iter().map(|l| from_points(l)).collect(),
        };
        serde_json::to_string(&raw).expect("plan serializes")
    }

    /// Reads and validates a plan file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let plan = Self::from_json_str(&text).map_err(|e| Error::json(path, e))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }
}

/// Pinhole intrinsics plus the camera pose in the vehicle frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Camera orientation in the vehicle frame (columns are camera axes).
    pub rotation: Mat3,
    /// Camera position in the vehicle frame, meters.
    pub translation: Point3,
    pub width: usize,
    pub height: usize,
    pub z_near: f64,
}

#[derive(Serialize, Deserialize)]
struct CalibrationFile {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    rotation: Vec<f64>,
    translation: [f64; 3],
    width: usize,
    height: usize,
    z_near: f64,
}

impl CameraModel {
    /// Forward-looking camera 1.5 m above the ground with a slight downward
    /// pitch, sized for the 64×64 toy canvas.
    pub fn toy_default() -> Self {
        Self::forward(64, 64, 1.5, 0.08)
    }

    /// Forward-looking camera at `height_m` above the vehicle origin pitched
    /// down by `pitch` radians; focal length is 0.75 × canvas width.
    pub fn forward(width: usize, height: usize, height_m: f64, pitch: f64) -> Self {
        let f = 0.75 * width as f64;
        CameraModel {
            fx: f,
            fy: f,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            rotation: Mat3::pitch_down(pitch).mul_mat(&Mat3::forward_camera()),
            translation: Point3::new(0.0, 0.0, height_m),
            width,
            height,
            z_near: DEFAULT_Z_NEAR,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.rotation;
        let rtr = r.transpose().mul_mat(r);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                if !(rtr.0[i][j] - expect).abs().le(&1e-9) {
                    return Err(Error::InvalidCamera("rotation is not orthonormal".into()));
                }
            }
        }
        if !(r.determinant() - 1.0).abs().le(&1e-9) {
            return Err(Error::InvalidCamera("rotation determinant is not +1".into()));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidCamera("focal lengths must be positive".into()));
        }
        if !(self.z_near > 0.0) {
            return Err(Error::InvalidCamera("z_near must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidCamera("canvas must be non-empty".into()));
        }
        if !(self.cx.is_finite() && self.cy.is_finite() && self.translation.is_finite()) {
            return Err(Error::InvalidCamera("non-finite principal point or translation".into()));
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> std::result::Result<Self, serde_json::Error> {
        let raw: CalibrationFile = serde_json::from_str(s)?;
        let rotation = Mat3::from_row_major(&raw.rotation).ok_or_else(|| {
            serde::de::Error::custom(format!(
                "`rotation` must have 9 entries, found {}",
                raw.rotation.len()
            ))
        })?;
        Ok(CameraModel {
            fx: raw.fx,
            fy: raw.fy,
            cx: raw.cx,
            cy: raw.cy,
            rotation,
            translation: Point3::new(raw.translation[0], raw.translation[1], raw.translation[2]),
            width: raw.width,
            height: raw.height,
            z_near: raw.z_near,
        })
    }

    pub fn to_json_string(&self) -> String {
        let raw = CalibrationFile {
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            rotation: self.rotation.to_row_major().to_vec(),
            translation: [self.translation.x, self.translation.y, self.translation.z],
            width: self.width,
            height: self.height,
            z_near: self.z_near,
        };
        serde_json::to_string_pretty(&raw).expect("calibration serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cam = Self::from_json_str(&text).map_err(|e| Error::json(path, e))?;
        cam.validate()?;
        Ok(cam)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }
}

/// Projected polyline with one color per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline2D {
    pub vertices: Vec<[f64; 2]>,
    pub colors: Vec<Rgb>,
}

pub fn vehicle_to_camera(p: &Point3, cam: &CameraModel) -> Point3 {
    cam.rotation.transpose().apply(&(*p - cam.translation))
}

/// Pinhole projection of a camera-frame point that already lies on or
/// beyond the near plane.
pub fn project(p_cam: &Point3, cam: &CameraModel) -> Result<[f64; 2]> {
    if !(p_cam.z >= cam.z_near) {
        return Err(Error::BehindNearPlane {
            z: p_cam.z,
            z_near: cam.z_near,
        });
    }
    Ok([
        cam.fx * p_cam.x / p_cam.z + cam.cx,
        cam.fy * p_cam.y / p_cam.z + cam.cy,
    ])
}

/// Segment parameters `(t_a, t_b)` of the visible part of `a→b`.
fn clip_params(a: &Point3, b: &Point3, z_near: f64) -> Option<(f64, f64)> {
    let a_in = a.z >= z_near;
    let b_in = b.z >= z_near;
    match (a_in, b_in) {
        (true, true) => Some((0.0, 1.0)),
        (false, false) => None,
        _ => {
            let t = (z_near - a.z) / (b.z - a.z);
            if a_in {
                Some((0.0, t))
            } else {
                Some((t, 1.0))
            }
        }
    }
}

fn point_at(a: &Point3, b: &Point3, t: f64, z_near: f64) -> Point3 {
    if t == 0.0 {
        *a
    } else if t == 1.0 {
        *b
    } else {
        let mut p = a.lerp(b, t);
        p.z = z_near;
        p
    }
}

/// Clips a camera-frame segment against the plane `z = z_near`.
pub fn clip_segment_near(a: &Point3, b: &Point3, z_near: f64) -> Option<(Point3, Point3)> {
    let (ta, tb) = clip_params(a, b, z_near)?;
    Some((point_at(a, b, ta, z_near), point_at(a, b, tb, z_near)))
}

/// Transform, clip and project one polyline; a 3D polyline that dips
/// behind the near plane can split into several visible runs.
fn project_polyline(
    points: &[Point3],
    attrs: &[f64],
    cam: &CameraModel,
) -> Vec<(Vec<[f64; 2]>, Vec<f64>)> {
    let cam_pts: Vec<Point3> = points.iter().map(|p| vehicle_to_camera(p, cam)).collect();
    let mut runs = Vec::new();
    let mut verts: Vec<[f64; 2]> = Vec::new();
    let mut vals: Vec<f64> = Vec::new();
    let mut flush = |verts: &mut Vec<[f64; 2]>, vals: &mut Vec<f64>| {
        if verts.len() >= 2 {
            runs.push((std::mem::take(verts), std::mem::take(vals)));
        } else {
            verts.clear();
            vals.clear();
        }
    };
    for i in 0..cam_pts.len().saturating_sub(1) {
        let (a, b) = (&cam_pts[i], &cam_pts[i + 1]);
        let Some((ta, tb)) = clip_params(a, b, cam.z_near) else {
            flush(&mut verts, &mut vals);
            continue;
        };
        let va = attrs[i] + (attrs[i + 1] - attrs[i]) * ta;
        let vb = attrs[i] + (attrs[i + 1] - attrs[i]) * tb;
        let pa = point_at(a, b, ta, cam.z_near);
        let pb = point_at(a, b, tb, cam.z_near);
        if ta > 0.0 || verts.is_empty() {
            flush(&mut verts, &mut vals);
            verts.push(project(&pa, cam).expect("clipped point is visible"));
            vals.push(va);
        }
        verts.push(project(&pb, cam).expect("clipped point is visible"));
        vals.push(vb);
        if tb < 1.0 {
            flush(&mut verts, &mut vals);
        }
    }
    flush(&mut verts, &mut vals);
    runs
}

/// Projects all plan polylines with the default speed color scale.
pub fn plan_to_polylines(plan: &TrajectoryPlan, cam: &CameraModel) -> Vec<Polyline2D> {
    plan_to_polylines_with(plan, cam, &SpeedScale::default())
}

/// Projects plan polylines in draw order: road boundaries, lane lines,
/// trajectory. Invisible polylines are dropped.
pub fn plan_to_polylines_with(
    plan: &TrajectoryPlan,
    cam: &CameraModel,
    scale: &SpeedScale,
) -> Vec<Polyline2D> {
    let mut out = Vec::new();
    let solid = |line: &[Point3], color: Rgb, out: &mut Vec<Polyline2D>| {
        let zeros = vec![0.0; line.len()];
        for (vertices, _) in project_polyline(line, &zeros, cam) {
            let colors = vec![color; vertices.len()];
            out.push(Polyline2D { vertices, colors });
        }
    };
    for line in &plan.road_boundaries {
        solid(line, raster::BOUNDARY, &mut out);
    }
    for line in &plan.lane_lines {
        solid(line, raster::LANE, &mut out);
    }
    let positions: Vec<Point3> = plan.trajectory.iter().map(|p| p.position).collect();
    let speeds: Vec<f64> = plan.trajectory.iter().map(|p| p.speed).collect();
    for (vertices, run_speeds) in project_polyline(&positions, &speeds, cam) {
        let colors = run_speeds.iter().map(|&v| scale.color(v)).collect();
        out.push(Polyline2D { vertices, colors });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

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

    fn close(a: &Point3, b: &Point3) -> bool {
        a.distance(b) < 1e-12
    }

    #[test]
    fn identity_aligned_camera_relabels_axes() {
        let cam = axis_camera();
        assert!(close(
            &vehicle_to_camera(&Point3::new(10.0, 0.0, 0.0), &cam),
            &Point3::new(0.0, 0.0, 10.0)
        ));
        assert!(close(
            &vehicle_to_camera(&Point3::new(10.0, 2.0, 0.0), &cam),
            &Point3::new(-2.0, 0.0, 10.0)
        ));
    }

    #[test]
    fn translated_camera() {
        let mut cam = axis_camera();
        cam.translation = Point3::new(1.0, 0.0, 0.0);
        assert!(close(
            &vehicle_to_camera(&Point3::new(11.0, 0.0, 0.0), &cam),
            &Point3::new(0.0, 0.0, 10.0)
        ));
    }

    #[test]
    fn pinhole_examples() {
        let cam = axis_camera();
        assert_eq!(project(&Point3::new(0.0, 0.0, 10.0), &cam).unwrap(), [64.0, 64.0]);
        assert_eq!(project(&Point3::new(-2.0, 0.0, 10.0), &cam).unwrap(), [44.0, 64.0]);
        assert_eq!(project(&Point3::new(-2.0, 0.0, 5.0), &cam).unwrap(), [24.0, 64.0]);
    }

    #[test]
    fn projecting_unclipped_point_is_rejected() {
        let cam = axis_camera();
        assert!(matches!(
            project(&Point3::new(0.0, 0.0, 0.05), &cam),
            Err(Error::BehindNearPlane { .. })
        ));
        assert!(project(&Point3::new(0.0, 0.0, f64::NAN), &cam).is_err());
    }

    #[test]
    fn clip_cases() {
        let a = Point3::new(0.0, 0.0, 5.0);
        let b = Point3::new(0.0, 0.0, 10.0);
        assert_eq!(clip_segment_near(&a, &b, 0.1), Some((a, b)));
        assert_eq!(
            clip_segment_near(&Point3::new(0.0, 0.0, -1.0), &Point3::new(0.0, 0.0, -2.0), 0.1),
            None
        );
        let (a2, b2) =
            clip_segment_near(&Point3::new(0.0, 0.0, -1.0), &Point3::new(0.0, 0.0, 1.0), 0.1)
                .unwrap();
        assert_eq!(a2.z, 0.1);
        assert_eq!(b2, Point3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn clipped_end_lands_on_near_plane() {
        let a = Point3::new(1.0, 2.0, 3.0);
        let b = Point3::new(-4.0, 1.0, -7.0);
        let (a2, b2) = clip_segment_near(&a, &b, 0.1).unwrap();
        assert_eq!(a2, a);
        assert_eq!(b2.z, 0.1);
        // t = (0.1 - 3) / (-10) = 0.29
        assert!((b2.x - (1.0 - 5.0 * 0.29)).abs() < 1e-12);
    }

    fn straight_plan(n: usize) -> TrajectoryPlan {
        let line = |y: f64| (0..n).map(|i| Point3::new(5.0 + i as f64, y, 0.0)).collect::<Vec<_>>();
        TrajectoryPlan {
            trajectory: (0..n)
                .map(|i| TrajectoryPoint {
                    position: Point3::new(5.0 + i as f64, 0.0, 0.0),
                    speed: i as f64,
                })
                .collect(),
            road_boundaries: [line(4.0), line(-4.0)],
            lane_lines: [line(1.75), line(-1.75)],
        }
    }

    #[test]
    fn straight_trajectory_projects_to_principal_column() {
        let cam = axis_camera();
        let mut plan = straight_plan(10);
        plan.road_boundaries = [vec![Point3::new(-5.0, 0.0, 0.0); 2], vec![Point3::new(-5.0, 1.0, 0.0); 2]];
        plan.lane_lines = plan.road_boundaries.clone();
        let polys = plan_to_polylines(&plan, &cam);
        assert_eq!(polys.len(), 1);
        assert_eq!(polys[0].vertices.len(), 10);
        assert!(polys[0].vertices.iter().all(|v| v[0] == cam.cx));
    }

    #[test]
    fn full_plan_order_and_colors() {
        let cam = axis_camera();
        let polys = plan_to_polylines(&straight_plan(6), &cam);
        assert_eq!(polys.len(), 5);
        assert!(polys[0].colors.iter().all(|&c| c == raster::BOUNDARY));
        assert!(polys[1].colors.iter().all(|&c| c == raster::BOUNDARY));
        assert!(polys[2].colors.iter().all(|&c| c == raster::LANE));
        assert!(polys[3].colors.iter().all(|&c| c == raster::LANE));
        assert_eq!(polys[4].colors[0], raster::SLOW);
    }

    #[test]
    fn plan_behind_camera_is_empty() {
        let cam = axis_camera();
        let mut plan = straight_plan(4);
        let shift = |p: &mut Point3| p.x -= 100.0;
        plan.trajectory.iter_mut().for_each(|p| shift(&mut p.position));
        plan.road_boundaries.iter_mut().flatten().for_each(shift);
        plan.lane_lines.iter_mut().flatten().for_each(shift);
        assert!(plan_to_polylines(&plan, &cam).is_empty());
    }

    #[test]
    fn polyline_crossing_near_plane_splits_into_runs() {
        let cam = axis_camera();
        let pts = [
            Point3::new(5.0, 0.0, 0.0),
            Point3::new(-5.0, 0.0, 0.0),
            Point3::new(5.0, 1.0, 0.0),
            Point3::new(6.0, 1.0, 0.0),
        ];
        let runs = project_polyline(&pts, &[0.0; 4], &cam);
        assert_eq!(runs.len(), 2);
        assert_eq!(runs[0].0.len(), 2);
        assert_eq!(runs[1].0.len(), 3);
    }

    #[test]
    fn plan_validation() {
        let mut plan = straight_plan(3);
        assert!(plan.validate().is_ok());
        plan.trajectory[1].speed = -1.0;
        assert!(plan.validate().is_err());
        let mut plan = straight_plan(3);
        plan.trajectory[2].position.x = 0.0;
        assert!(plan.validate().is_err());
        let mut plan = straight_plan(3);
        plan.lane_lines[0].truncate(1);
        assert!(plan.validate().is_err());
    }

    #[test]
    fn camera_validation() {
        assert!(CameraModel::toy_default().validate().is_ok());
        let mut cam = axis_camera();
        cam.rotation.0[0][0] = 0.5;
        assert!(cam.validate().is_err());
        let mut cam = axis_camera();
        cam.rotation = Mat3([[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        assert!(cam.validate().is_err(), "reflection has det -1");
        let mut cam = axis_camera();
        cam.z_near = 0.0;
        assert!(cam.validate().is_err());
    }

    #[test]
    fn file_formats_round_trip() {
        let plan = straight_plan(4);
        assert_eq!(TrajectoryPlan::from_json_str(&plan.to_json_string()).unwrap(), plan);
        let cam = CameraModel::toy_default();
        assert_eq!(CameraModel::from_json_str(&cam.to_json_string()).unwrap(), cam);
        let bad = r#"{"trajectory":[[1,0,0,1],[2,0,0,1]],"road_boundaries":[[[0,0,0],[1,0,0]]],"lane_lines":[]}"#;
        assert!(TrajectoryPlan::from_json_str(bad).is_err());
    }
}
