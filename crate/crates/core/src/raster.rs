//! Integer-stepped polyline rasterization, trajectory image rendering and
//! opaque overlay.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{self, CameraModel, Polyline2D, TrajectoryPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Rgb(pub [u8; 3]);

impl Rgb {
    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        Rgb([r, g, b])
    }
}

pub const BACKGROUND: Rgb = Rgb::new(0, 0, 0);
pub const BOUNDARY: Rgb = Rgb::new(255, 255, 0);
pub const LANE: Rgb = Rgb::new(0, 0, 255);
/// Trajectory color at or below the slow end of the speed scale.
pub const SLOW: Rgb = Rgb::new(0, 255, 0);
/// Trajectory color at or above the fast end of the speed scale.
pub const FAST: Rgb = Rgb::new(255, 0, 0);

/// 60 km/h.
pub const DEFAULT_V_MAX: f64 = 16.67;
pub const DEFAULT_THICKNESS: usize = 3;

fn round_half_up(x: f64) -> u8 {
    (x + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Green (slow) to red (fast) linear ramp.
pub fn speed_to_color(v: f64, v_min: f64, v_max: f64) -> Result<Rgb> {
    Ok(SpeedScale::new(v_min, v_max)?.color(v))
}

/// Validated speed range for trajectory coloring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedScale {
    v_min: f64,
    v_max: f64,
}

impl Default for SpeedScale {
    fn default() -> Self {
        SpeedScale {
            v_min: 0.0,
            v_max: DEFAULT_V_MAX,
        }
    }
}

impl SpeedScale {
    pub fn new(v_min: f64, v_max: f64) -> Result<Self> {
        if !(v_min.is_finite() && v_max.is_finite() && v_min < v_max) {
            return Err(Error::InvalidArgument(format!(
                "speed range requires v_min < v_max, got [{v_min}, {v_max}]"
            )));
        }
        Ok(SpeedScale { v_min, v_max })
    }

    pub fn color(&self, v: f64) -> Rgb {
        let t = ((v - self.v_min) / (self.v_max - self.v_min)).clamp(0.0, 1.0);
        Rgb::new(round_half_up(255.0 * t), round_half_up(255.0 * (1.0 - t)), 0)
    }
}

/// Row-major 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, BACKGROUND)
    }

    pub fn filled(width: usize, height: usize, color: Rgb) -> Self {
        let pixels = color.0.iter().copied().cycle().take(width * height * 3).collect();
        RgbImage {
            width,
            height,
            pixels,
        }
    }

    pub fn from_raw(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height * 3 {
            return Err(Error::InvalidArgument(format!(
                "{}x{} image needs {} bytes, got {}",
                width,
                height,
                width * height * 3,
                pixels.len()
            )));
        }
        Ok(RgbImage {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        let i = (y * self.width + x) * 3;
        Rgb([self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]])
    }

    pub fn put(&mut self, x: usize, y: usize, c: Rgb) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&c.0);
    }

    fn put_signed(&mut self, x: i64, y: i64, c: Rgb) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            self.put(x as usize, y as usize, c);
        }
    }

    pub fn pixels(&self) -> impl Iterator<Item = Rgb> + '_ {
        self.pixels.chunks_exact(3).map(|c| Rgb([c[0], c[1], c[2]]))
    }

    /// Binary PPM (P6, maxval 255).
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn from_ppm(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err("truncated header".into());
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|e| e.to_string())?);
        }
        if fields[0] != "P6" {
            return Err(format!("expected P6 magic, found {:?}", fields[0]));
        }
        let parse = |s: &str, what: &str| s.parse::<usize>().map_err(|_| format!("bad {what}: {s:?}"));
        let width = parse(fields[1], "width")?;
        let height = parse(fields[2], "height")?;
        if parse(fields[3], "maxval")? != 255 {
            return Err("only maxval 255 is supported".into());
        }
        // exactly one whitespace byte separates the header from the payload
        pos += 1;
        let payload = bytes.get(pos..).ok_or("missing payload")?;
        if payload.len() != width * height * 3 {
            return Err(format!(
                "payload is {} bytes, expected {}",
                payload.len(),
                width * height * 3
            ));
        }
        Ok(RgbImage {
            width,
            height,
            pixels: payload.to_vec(),
        })
    }

    pub fn save_ppm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_ppm()).map_err(|e| Error::io(path, e))
    }

    pub fn load_ppm(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_ppm(&bytes).map_err(|msg| Error::Image {
            path: path.display().to_string(),
            msg,
        })
    }

    /// Hex SHA-256 of the P6 encoding.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_ppm()))
    }
}

/// Rendering parameters for trajectory images.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrawStyle {
    pub thickness: usize,
    pub speed: SpeedScale,
}

impl Default for DrawStyle {
    fn default() -> Self {
        DrawStyle {
            thickness: DEFAULT_THICKNESS,
            speed: SpeedScale::default(),
        }
    }
}

/// Coordinates beyond this are pre-clipped in floating point so the integer
/// stepper never walks millions of off-canvas pixels.
const STEP_LIMIT: f64 = 16384.0;

fn lerp_channel(c0: u8, c1: u8, i: i64, n: i64) -> u8 {
    if n == 0 {
        return c0;
    }
    // round-half-up of c0 + (c1 - c0) * i / n; the numerator is a convex
    // combination and never negative
    let num = c0 as i64 * (n - i) + c1 as i64 * i;
    ((2 * num + n) / (2 * n)) as u8
}

fn lerp_rgb(a: Rgb, b: Rgb, i: i64, n: i64) -> Rgb {
    Rgb([
        lerp_channel(a.0[0], b.0[0], i, n),
        lerp_channel(a.0[1], b.0[1], i, n),
        lerp_channel(a.0[2], b.0[2], i, n),
    ])
}

fn lerp_rgb_f(a: Rgb, b: Rgb, t: f64) -> Rgb {
    let ch = |k: usize| round_half_up(a.0[k] as f64 + (b.0[k] as f64 - a.0[k] as f64) * t);
    Rgb([ch(0), ch(1), ch(2)])
}

/// Liang–Barsky clip of `p0→p1` to a square box; returns segment parameters.
fn clip_to_box(p0: [f64; 2], p1: [f64; 2], lo: f64, hi: f64) -> Option<(f64, f64)> {
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    let d = [p1[0] - p0[0], p1[1] - p0[1]];
    for k in 0..2 {
        for (p, q) in [(-d[k], p0[k] - lo), (d[k], hi - p0[k])] {
            if p == 0.0 {
                if q < 0.0 {
                    return None;
                }
            } else {
                let r = q / p;
                if p < 0.0 {
                    t0 = t0.max(r);
                } else {
                    t1 = t1.min(r);
                }
            }
        }
    }
    (t0 <= t1).then_some((t0, t1))
}

fn stamp(img: &mut RgbImage, x: i64, y: i64, radius: i64, c: Rgb) {
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            img.put_signed(x + dx, y + dy, c);
        }
    }
}

fn draw_segment(img: &mut RgbImage, p0: [f64; 2], p1: [f64; 2], c0: Rgb, c1: Rgb, radius: i64) {
    let (mut p0, mut p1, mut c0, mut c1) = (p0, p1, c0, c1);
    let far = |p: [f64; 2]| p[0].abs() > STEP_LIMIT || p[1].abs() > STEP_LIMIT;
    if far(p0) || far(p1) {
        let Some((t0, t1)) = clip_to_box(p0, p1, -STEP_LIMIT, STEP_LIMIT) else {
            return;
        };
        let at = |t: f64| [p0[0] + (p1[0] - p0[0]) * t, p0[1] + (p1[1] - p0[1]) * t];
        let (q0, q1) = (at(t0), at(t1));
        let (d0, d1) = (lerp_rgb_f(c0, c1, t0), lerp_rgb_f(c0, c1, t1));
        (p0, p1, c0, c1) = (q0, q1, d0, d1);
    }
    let (x0, y0) = (p0[0].round() as i64, p0[1].round() as i64);
    let (x1, y1) = (p1[0].round() as i64, p1[1].round() as i64);

    let (w, h) = (img.width as i64, img.height as i64);
    if x0.max(x1) + radius < 0
        || y0.max(y1) + radius < 0
        || x0.min(x1) - radius >= w
        || y0.min(y1) - radius >= h
    {
        return;
    }

    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let n = dx.max(-dy);
    let mut err = dx + dy;
    let (mut x, mut y) = (x0, y0);
    for i in 0..=n {
        stamp(img, x, y, radius, lerp_rgb(c0, c1, i, n));
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Draws `poly` with a square brush of side `thickness` (odd). Colors are
/// interpolated per segment; later pixels overwrite earlier ones.
pub fn draw_polyline(img: &mut RgbImage, poly: &Polyline2D, thickness: usize) -> Result<()> {
    if thickness == 0 || thickness % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "line thickness must be odd and positive, got {thickness}"
        )));
    }
    if poly.vertices.len() != poly.colors.len() {
        return Err(Error::InvalidArgument("one color per vertex required".into()));
    }
    let radius = (thickness / 2) as i64;
    match poly.vertices.len() {
        0 => {}
        1 => draw_segment(img, poly.vertices[0], poly.vertices[0], poly.colors[0], poly.colors[0], radius),
        _ => {
            for i in 0..poly.vertices.len() - 1 {
                draw_segment(
                    img,
                    poly.vertices[i],
                    poly.vertices[i + 1],
                    poly.colors[i],
                    poly.colors[i + 1],
                    radius,
                );
            }
        }
    }
    Ok(())
}

/// Renders the plan with default style on a black canvas sized to the camera.
pub fn render_trajectory_image(plan: &TrajectoryPlan, cam: &CameraModel) -> RgbImage {
    render_trajectory_image_with(plan, cam, &DrawStyle::default())
        .expect("default style is valid")
}

pub fn render_trajectory_image_with(
    plan: &TrajectoryPlan,
    cam: &CameraModel,
    style: &DrawStyle,
) -> Result<RgbImage> {
    let mut img = RgbImage::new(cam.width, cam.height);
    for poly in geometry::plan_to_polylines_with(plan, cam, &style.speed) {
        draw_polyline(&mut img, &poly, style.thickness)?;
    }
    Ok(img)
}

/// Paints every non-background trajectory pixel over the camera image.
pub fn overlay(camera_img: &RgbImage, traj_img: &RgbImage) -> Result<RgbImage> {
    if camera_img.width != traj_img.width || camera_img.height != traj_img.height {
        return Err(Error::ImageSizeMismatch {
            left_w: camera_img.width,
            left_h: camera_img.height,
            right_w: traj_img.width,
            right_h: traj_img.height,
        });
    }
    let pixels = camera_img
        .pixels
        .chunks_exact(3)
        .zip(traj_img.pixels.chunks_exact(3))
        .flat_map(|(c, t)| if t == BACKGROUND.0 { [c[0], c[1], c[2]] } else { [t[0], t[1], t[2]] })
        .collect();
    Ok(RgbImage {
        width: camera_img.width,
        height: camera_img.height,
        pixels,
    })
}
