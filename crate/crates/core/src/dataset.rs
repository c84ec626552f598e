//! Synthetic driving scenes, templated captions and the JSON-lines
//! manifest.
//!
//! Every sample is a pure function of its [`SceneParams`] and a per-sample
//! seed. Ambiguous pairs share one camera image but differ in plan and
//! caption, so only the trajectory input can tell them apart.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{vehicle_to_camera, CameraModel, Point3, TrajectoryPlan, TrajectoryPoint};
use crate::raster::{Rgb, RgbImage};

pub const SKY: Rgb = Rgb::new(110, 160, 220);
pub const GRASS: Rgb = Rgb::new(70, 110, 60);
pub const ROAD: Rgb = Rgb::new(90, 90, 90);
pub const MARKING: Rgb = Rgb::new(230, 230, 230);
pub const CURB: Rgb = Rgb::new(150, 140, 110);
pub const VEHICLE: Rgb = Rgb::new(170, 40, 40);

pub const VEHICLE_LENGTH: f64 = 4.5;
pub const VEHICLE_WIDTH: f64 = 1.8;
pub const VEHICLE_HEIGHT: f64 = 1.5;

/// Vertices per planning polyline.
pub const PLAN_POINTS: usize = 16;
const TRAJ_START: f64 = 3.0;
const LINE_START: f64 = 2.0;
const LINE_END: f64 = 50.0;
const MARKING_HALF_WIDTH: f64 = 0.12;
const CURB_WIDTH: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpeedProfile {
    Steady,
    Decelerating,
    Accelerating,
    Stopped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Maneuver {
    Straight,
    AvoidLeft,
    AvoidRight,
    StopBehind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    /// Distance to the rear of the lead vehicle, meters.
    pub lead_gap: Option<f64>,
    pub profile: SpeedProfile,
    pub maneuver: Maneuver,
    pub lane_width: f64,
    /// Shoulder width beyond the left and right lane lines, meters.
    pub boundary_offsets: [f64; 2],
    /// Ego offset from the lane center, meters (positive = left).
    pub lateral_offset: f64,
}

impl SceneParams {
    pub fn new(lead_gap: Option<f64>, profile: SpeedProfile, maneuver: Maneuver) -> Self {
        SceneParams {
            lead_gap,
            profile,
            maneuver,
            lane_width: 3.5,
            boundary_offsets: [1.5, 1.5],
            lateral_offset: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        use Maneuver::*;
        use SpeedProfile::*;
        let bad = |msg: String| Err(Error::InvalidScene(msg));
        if matches!(self.maneuver, StopBehind | AvoidLeft | AvoidRight) && self.lead_gap.is_none() {
            return bad(format!("{:?} requires a lead vehicle", self.maneuver));
        }
        if let Some(g) = self.lead_gap {
            if !(g.is_finite() && g > 2.0) {
                return bad(format!("lead gap {g} must exceed 2 m"));
            }
        }
        let ok = match self.maneuver {
            Straight => true,
            StopBehind => matches!(self.profile, Decelerating | Stopped),
            AvoidLeft | AvoidRight => matches!(self.profile, Steady | Decelerating),
        };
        if !ok {
            return bad(format!("{:?} profile is incompatible with {:?}", self.profile, self.maneuver));
        }
        if !(self.lane_width > 0.5 && self.lane_width.is_finite()) {
            return bad(format!("lane width {}", self.lane_width));
        }
        if self.boundary_offsets.iter().any(|o| !(o.is_finite() && *o >= 0.0)) {
            return bad("boundary offsets must be finite and non-negative".into());
        }
        if !self.lateral_offset.is_finite() {
            return bad("lateral offset must be finite".into());
        }
        Ok(())
    }

    /// y of the lane center in the vehicle frame.
    fn lane_center(&self) -> f64 {
        -self.lateral_offset
    }

    fn lane_lines_y(&self) -> [f64; 2] {
        let c = self.lane_center();
        [c + self.lane_width / 2.0, c - self.lane_width / 2.0]
    }

    fn boundaries_y(&self) -> [f64; 2] {
        let [l, r] = self.lane_lines_y();
        [l + self.boundary_offsets[0], r - self.boundary_offsets[1]]
    }
}

/// `(action, justification)` per caption template, token-spaced.
pub const TEMPLATES: [(&str, &str); 7] = [
    ("i will drive at a steady speed .", "because there is a safe distance from the front vehicle ."),
    ("i will slow down .", "because the front vehicle is stopped ."),
    ("i will slow down .", "because the front vehicle slowed down ."),
    ("i will accelerate gradually .", "because the front vehicle is accelerating gradually ."),
    ("i will maintain the parked state .", "because the traffic light is red ."),
    ("i will pass the front vehicle on the left .", "because the front vehicle is stopped in my lane ."),
    ("i will pass the front vehicle on the right .", "because the front vehicle is stopped in my lane ."),
];

fn template_index(scene: &SceneParams) -> usize {
    use Maneuver::*;
    use SpeedProfile::*;
    match (scene.maneuver, scene.profile) {
        (AvoidLeft, _) => 5,
        (AvoidRight, _) => 6,
        (_, Stopped) => 4,
        (StopBehind, _) => 1,
        (Straight, Steady) => 0,
        (Straight, Decelerating) => 2,
        (Straight, Accelerating) => 3,
    }
}

/// Caption for a scene, `"action ; justification"`.
pub fn caption_for(scene: &SceneParams) -> String {
    let (a, j) = TEMPLATES[template_index(scene)];
    format!("{a} ; {j}")
}

fn linspace(a: f64, b: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| a + (b - a) * i as f64 / (n - 1) as f64)
}

fn smoothstep(e0: f64, e1: f64, x: f64) -> f64 {
    let t = ((x - e0) / (e1 - e0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Builds the planning polylines consistent with the scene's profile and
/// maneuver.
pub fn build_plan(scene: &SceneParams) -> Result<TrajectoryPlan> {
    scene.validate()?;
    use Maneuver::*;
    use SpeedProfile::*;
    let n = PLAN_POINTS;
    let c = scene.lane_center();
    let gap = scene.lead_gap.unwrap_or(f64::INFINITY);

    let end = match (scene.maneuver, scene.profile) {
        (_, Stopped) => TRAJ_START + 1.0,
        (StopBehind, _) => (gap - 3.0).max(TRAJ_START + 1.0),
        (AvoidLeft | AvoidRight, _) => (gap + 18.0).max(30.0),
        (Straight, Decelerating) => TRAJ_START + 18.0,
        (Straight, _) => TRAJ_START + 30.0,
    };
    let (v0, v1) = match scene.profile {
        Steady => (10.0, 10.0),
        Decelerating if scene.maneuver == StopBehind => (8.0, 0.0),
        Decelerating => (10.0, 4.0),
        Accelerating => (4.0, 14.0),
        Stopped => (0.0, 0.0),
    };
    let side = match scene.maneuver {
        AvoidLeft => 1.0,
        AvoidRight => -1.0,
        _ => 0.0,
    };
    let shift = scene.lane_width * 0.8;
    let trajectory = linspace(TRAJ_START, end, n)
        .zip(linspace(v0, v1, n))
        .map(|(x, v)| {
            let bump = if side == 0.0 {
                0.0
            } else {
                smoothstep(gap - 8.0, gap - 1.0, x) * (1.0 - smoothstep(gap + 6.0, gap + 13.0, x))
            };
            TrajectoryPoint {
                position: Point3::new(x, c + side * shift * bump, 0.0),
                speed: v,
            }
        })
        .collect();

    let line = |y: f64| linspace(LINE_START, LINE_END, n).map(|x| Point3::new(x, y, 0.0)).collect::<Vec<_>>();
    let [bl, br] = scene.boundaries_y();
    let [ll, lr] = scene.lane_lines_y();
    let plan = TrajectoryPlan {
        trajectory,
        road_boundaries: [line(bl), line(br)],
        lane_lines: [line(ll), line(lr)],
    };
    plan.validate()?;
    Ok(plan)
}

/// Slab test of a ray against an axis-aligned box; returns the entry
/// distance.
fn ray_box(origin: &Point3, dir: &Point3, lo: &Point3, hi: &Point3) -> Option<f64> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for (o, d, l, h) in [
        (origin.x, dir.x, lo.x, hi.x),
        (origin.y, dir.y, lo.y, hi.y),
        (origin.z, dir.z, lo.z, hi.z),
    ] {
        if d == 0.0 {
            if o < l || o > h {
                return None;
            }
        } else {
            let (a, b) = ((l - o) / d, (h - o) / d);
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
    }
    (t0 <= t1 && t1 > 0.0).then_some(t0.max(0.0))
}

/// Flat-shaded render of the scene through `cam`: sky, grass, road with
/// markings and curbs, and the lead vehicle as a box.
pub fn render_camera_image(scene: &SceneParams, cam: &CameraModel) -> RgbImage {
    let mut img = RgbImage::new(cam.width, cam.height);
    let origin = cam.translation;
    let [ll, lr] = scene.lane_lines_y();
    let [bl, br] = scene.boundaries_y();
    let vehicle = scene.lead_gap.map(|gap| {
        let c = scene.lane_center();
        (
            Point3::new(gap, c - VEHICLE_WIDTH / 2.0, 0.0),
            Point3::new(gap + VEHICLE_LENGTH, c + VEHICLE_WIDTH / 2.0, VEHICLE_HEIGHT),
        )
    });
    for v in 0..cam.height {
        for u in 0..cam.width {
            let d_cam = Point3::new((u as f64 - cam.cx) / cam.fx, (v as f64 - cam.cy) / cam.fy, 1.0);
            let dir = cam.rotation.apply(&d_cam);
            let t_ground = if dir.z < 0.0 { -origin.z / dir.z } else { f64::INFINITY };
            let hit_vehicle = vehicle
                .as_ref()
                .and_then(|(lo, hi)| ray_box(&origin, &dir, lo, hi))
                .is_some_and(|t| t < t_ground);
            let color = if hit_vehicle {
                VEHICLE
            } else if t_ground.is_finite() {
                let p = origin + dir * t_ground;
                let y = p.y;
                if (y - ll).abs() < MARKING_HALF_WIDTH || (y - lr).abs() < MARKING_HALF_WIDTH {
                    MARKING
                } else if y <= bl && y >= br {
                    if y > bl - CURB_WIDTH || y < br + CURB_WIDTH {
                        CURB
                    } else {
                        ROAD
                    }
                } else {
                    GRASS
                }
            } else {
                SKY
            };
            img.put(u, v, color);
        }
    }
    img
}

/// Pixel bounding box `(u_min, v_min, u_max, v_max)` of the lead vehicle's
/// rear face as projected by `cam`, for scale checks.
pub fn vehicle_rear_extent(scene: &SceneParams, cam: &CameraModel) -> Option<[f64; 4]> {
    let gap = scene.lead_gap?;
    let c = scene.lane_center();
    let mut bb = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for (y, z) in [
        (c - VEHICLE_WIDTH / 2.0, 0.0),
        (c + VEHICLE_WIDTH / 2.0, 0.0),
        (c - VEHICLE_WIDTH / 2.0, VEHICLE_HEIGHT),
        (c + VEHICLE_WIDTH / 2.0, VEHICLE_HEIGHT),
    ] {
        let p = vehicle_to_camera(&Point3::new(gap, y, z), cam);
        let [u, v] = crate::geometry::project(&p, cam).ok()?;
        bb = [bb[0].min(u), bb[1].min(v), bb[2].max(u), bb[3].max(v)];
    }
    Some(bb)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split `{other}`"))),
        }
    }
}

/// `(train, val, test)` sizes for a 70/15/15 split; rounding slack goes to
/// train.
pub fn split_counts(n: usize) -> (usize, usize, usize) {
    let val = (n as f64 * 0.15).round() as usize;
    let test = (n as f64 * 0.15).round() as usize;
    let val = val.min(n);
    let test = test.min(n - val);
    (n - val - test, val, test)
}

/// An in-memory sample before it is written to disk.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSample {
    pub id: String,
    pub scene: SceneParams,
    pub image: RgbImage,
    pub plan: TrajectoryPlan,
    pub caption: String,
    pub split: Split,
}

impl GeneratedSample {
    pub fn is_ambiguous(&self) -> bool {
        self.id.starts_with(PAIR_PREFIX)
    }
}

pub const STANDARD_PREFIX: &str = "std-";
pub const PAIR_PREFIX: &str = "pair-";

fn jitter(scene: &SceneParams, rng: &mut ChaCha8Rng) -> SceneParams {
    let mut s = *scene;
    s.lead_gap = s.lead_gap.map(|g| g * rng.random_range(0.9..=1.1));
    s.lateral_offset += rng.random_range(-0.2..=0.2);
    s
}

/// Camera image, plan and caption for one scene, after seeded jitter.
pub fn generate_sample(
    id: impl Into<String>,
    scene: &SceneParams,
    cam: &CameraModel,
    seed: u64,
    split: Split,
) -> Result<GeneratedSample> {
    scene.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = jitter(scene, &mut rng);
    Ok(GeneratedSample {
        id: id.into(),
        image: render_camera_image(&scene, cam),
        plan: build_plan(&scene)?,
        caption: caption_for(&scene),
        scene,
        split,
    })
}

/// Two samples sharing one camera image: A stops behind the lead vehicle,
/// B passes it on the side chosen by the seed.
pub fn generate_ambiguous_pair(
    id: &str,
    scene: &SceneParams,
    cam: &CameraModel,
    seed: u64,
    split: Split,
) -> Result<(GeneratedSample, GeneratedSample)> {
    if scene.lead_gap.is_none() {
        return Err(Error::InvalidScene("ambiguous pairs need a lead vehicle".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = jitter(scene, &mut rng);
    let avoid = if rng.random_bool(0.5) { Maneuver::AvoidLeft } else { Maneuver::AvoidRight };
    let stop = SceneParams {
        profile: SpeedProfile::Decelerating,
        maneuver: Maneuver::StopBehind,
        ..base
    };
    let pass = SceneParams {
        profile: SpeedProfile::Steady,
        maneuver: avoid,
        ..base
    };
    stop.validate()?;
    pass.validate()?;
    let image = render_camera_image(&base, cam);
    let make = |suffix: &str, s: SceneParams| -> Result<GeneratedSample> {
        Ok(GeneratedSample {
            id: format!("{id}-{suffix}"),
            image: image.clone(),
            plan: build_plan(&s)?,
            caption: caption_for(&s),
            scene: s,
            split,
        })
    };
    Ok((make("a", stop)?, make("b", pass)?))
}

/// Draws a random standard scene covering every caption template.
pub fn random_scene<R: Rng>(rng: &mut R) -> SceneParams {
    use Maneuver::*;
    use SpeedProfile::*;
    let (gap, profile, maneuver) = match rng.random_range(0..7) {
        0 => {
            let gap = rng.random_bool(0.5).then(|| rng.random_range(25.0..45.0));
            (gap, Steady, Straight)
        }
        1 => (Some(rng.random_range(14.0..22.0)), Decelerating, Straight),
        2 => (Some(rng.random_range(6.0..12.0)), Decelerating, StopBehind),
        3 => (Some(rng.random_range(20.0..35.0)), Accelerating, Straight),
        4 => (Some(rng.random_range(4.0..7.0)), Stopped, Straight),
        5 => (Some(rng.random_range(8.0..14.0)), Steady, AvoidLeft),
        _ => (Some(rng.random_range(8.0..14.0)), Steady, AvoidRight),
    };
    SceneParams {
        lead_gap: gap,
        profile,
        maneuver,
        lane_width: rng.random_range(3.0..3.8),
        boundary_offsets: [rng.random_range(0.5..3.0), rng.random_range(0.5..3.0)],
        lateral_offset: 0.0,
    }
}

/// Scene whose image is shared by both members of an ambiguous pair.
pub fn random_pair_scene<R: Rng>(rng: &mut R) -> SceneParams {
    SceneParams {
        lead_gap: Some(rng.random_range(8.0..14.0)),
        profile: SpeedProfile::Decelerating,
        maneuver: Maneuver::StopBehind,
        lane_width: rng.random_range(3.0..3.8),
        boundary_offsets: [rng.random_range(0.5..3.0), rng.random_range(0.5..3.0)],
        lateral_offset: 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub seed: u64,
    pub standard: usize,
    pub pairs: usize,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            seed: 0,
            standard: 400,
            pairs: 200,
        }
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Assigns splits to `n` items by a seeded permutation.
fn assign_splits(n: usize, rng: &mut ChaCha8Rng) -> Vec<Split> {
    use rand::seq::SliceRandom;
    let (train, val, _) = split_counts(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut out = vec![Split::Test; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = if rank < train {
            Split::Train
        } else if rank < train + val {
            Split::Val
        } else {
            Split::Test
        };
    }
    out
}

const PAIR_STREAM_BASE: u64 = 1 << 32;
const SPLIT_STREAM: u64 = u64::MAX;

/// Generates the standard samples followed by both members of each pair.
pub fn generate_corpus(spec: &CorpusSpec, cam: &CameraModel) -> Result<Vec<GeneratedSample>> {
    if spec.standard == 0 && spec.pairs == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut split_rng = stream_rng(spec.seed, SPLIT_STREAM);
    let std_splits = assign_splits(spec.standard, &mut split_rng);
    let pair_splits = assign_splits(spec.pairs, &mut split_rng);
    let mut out = Vec::with_capacity(spec.standard + 2 * spec.pairs);
    for (i, split) in std_splits.into_iter().enumerate() {
        let mut rng = stream_rng(spec.seed, i as u64);
        let scene = random_scene(&mut rng);
        out.push(generate_sample(format!("{STANDARD_PREFIX}{i:04}"), &scene, cam, rng.random(), split)?);
    }
    for (i, split) in pair_splits.into_iter().enumerate() {
        let mut rng = stream_rng(spec.seed, PAIR_STREAM_BASE + i as u64);
        let scene = random_pair_scene(&mut rng);
        let (a, b) = generate_ambiguous_pair(&format!("{PAIR_PREFIX}{i:04}"), &scene, cam, rng.random(), split)?;
        out.push(a);
        out.push(b);
    }
    Ok(out)
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    /// Image path, relative to the manifest's directory unless absolute.
    pub image: String,
    pub plan: String,
    pub caption: String,
    pub split: Split,
}

impl Sample {
    pub fn is_ambiguous(&self) -> bool {
        self.id.starts_with(PAIR_PREFIX)
    }
}

/// Writes images, plans, the calibration and `manifest.jsonl` under `dir`.
pub fn write_corpus(dir: impl AsRef<Path>, samples: &[GeneratedSample], cam: &CameraModel) -> Result<PathBuf> {
    let dir = dir.as_ref();
    for sub in ["images", "plans"] {
        let p = dir.join(sub);
        std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    cam.save(dir.join("calibration.json"))?;
    let mut entries = Vec::with_capacity(samples.len());
    for s in samples {
        let image = format!("images/{}.ppm", s.id);
        let plan = format!("plans/{}.json", s.id);
        s.image.save_ppm(dir.join(&image))?;
        s.plan.save(dir.join(&plan))?;
        entries.push(Sample {
            id: s.id.clone(),
            image,
            plan,
            caption: s.caption.clone(),
            split: s.split,
        });
    }
    let path = dir.join("manifest.jsonl");
    write_manifest(&path, &entries)?;
    Ok(path)
}

pub fn write_manifest(path: impl AsRef<Path>, samples: &[Sample]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for s in samples {
        serde_json::to_writer(&mut out, s).expect("sample serializes");
        out.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

/// Resolves a manifest-relative path.
pub fn resolve(manifest: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        manifest.parent().unwrap_or(Path::new(".")).join(p)
    }
}

/// Reads and validates a manifest: every line must parse, reference
/// existing files and carry exactly one `;` in its caption.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<Sample>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let err = |line: usize, msg: String| Error::Manifest {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let s: Sample = serde_json::from_str(&line).map_err(|e| err(lineno, e.to_string()))?;
        for (what, rel) in [("image", &s.image), ("plan", &s.plan)] {
            let p = resolve(path, rel);
            if !p.is_file() {
                return Err(err(lineno, format!("{what} file {} does not exist", p.display())));
            }
        }
        let delims = s.caption.matches(';').count();
        if delims != 1 {
            return Err(err(lineno, format!("caption must contain exactly one ';', found {delims}")));
        }
        out.push(s);
    }
    Ok(out)
}
