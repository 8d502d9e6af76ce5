//! Software rasterizer for the grayscale side-view observations.
//!
//! Pixel coordinates are continuous with `(0, 0)` at the centre of the
//! top-left pixel, `u` growing to the right and `v` growing downwards.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cloth::{ClothState, TrackedPoints, TRACKED_POINTS};
use crate::{Error, Range, Result, Vec3};

pub const DEFAULT_IMAGE_SIZE: usize = 100;
const NEAR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraConfig {
    pub eye: Vec3,
    pub look_at: Vec3,
    pub up: Vec3,
    /// Full vertical field of view, radians.
    pub vertical_fov: f64,
    pub image_size: usize,
}

impl Default for CameraConfig {
    /// Side view across the fold direction: 0.6 m from the cloth centre at 45° elevation.
    fn default() -> Self {
        let elevation = std::f64::consts::FRAC_PI_4;
        let distance = 0.6;
        Self {
            eye: Vec3::new(0.0, -distance * elevation.cos(), distance * elevation.sin()),
            look_at: Vec3::zeros(),
            up: Vec3::z(),
            vertical_fov: 50f64.to_radians(),
            image_size: DEFAULT_IMAGE_SIZE,
        }
    }
}

/// Orthonormal camera frame derived from a [`CameraConfig`].
#[derive(Clone, Copy, Debug)]
pub struct CameraFrame {
    eye: Vec3,
    right: Vec3,
    up: Vec3,
    forward: Vec3,
    focal: f64,
    center: f64,
}

impl CameraConfig {
    pub fn frame(&self) -> Result<CameraFrame> {
        let forward = self.look_at - self.eye;
        if !(forward.norm() > 1e-9) {
            return Err(Error::Config("camera eye coincides with look_at".into()));
        }
        if !(self.vertical_fov > 0.0 && self.vertical_fov < std::f64::consts::PI) {
            return Err(Error::Config(format!("vertical_fov must lie in (0, pi), got {}", self.vertical_fov)));
        }
        if self.image_size == 0 {
            return Err(Error::Config("image_size must be > 0".into()));
        }
        let forward = forward.normalize();
        let right = forward.cross(&self.up);
        if !(right.norm() > 1e-9) {
            return Err(Error::Config("camera up vector is parallel to the view direction".into()));
        }
        let right = right.normalize();
        let up = right.cross(&forward);
        let center = (self.image_size as f64 - 1.0) / 2.0;
        let focal = center / (0.5 * self.vertical_fov).tan();
        Ok(CameraFrame { eye: self.eye, right, up, forward, focal, center })
    }
}

impl CameraFrame {
    /// Camera-space coordinates `(right, up, depth)`.
    fn to_camera(&self, p: Vec3) -> Vec3 {
        let d = p - self.eye;
        Vec3::new(self.right.dot(&d), self.up.dot(&d), self.forward.dot(&d))
    }

    pub fn project(&self, p: Vec3) -> Result<(f64, f64)> {
        let c = self.to_camera(p);
        if !(c.z > NEAR) {
            return Err(Error::Projection(format!("point {p:?} lies at or behind the camera plane")));
        }
        Ok((self.center + self.focal * c.x / c.z, self.center - self.focal * c.y / c.z))
    }
}

/// Pinhole projection of a world point to continuous pixel coordinates.
pub fn project(point: Vec3, cam: &CameraConfig) -> Result<(f64, f64)> {
    cam.frame()?.project(point)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisualConfig {
    /// Unit vector pointing from the surface toward the light.
    pub light_direction: Vec3,
    pub ambient: f64,
    pub diffuse: f64,
    /// Standard deviation of additive pixel noise, gray levels.
    pub pixel_noise_sigma: f64,
    /// Offset applied to the nominal camera eye, meters.
    pub camera_jitter: Vec3,
}

impl Default for VisualConfig {
    fn default() -> Self {
        Self {
            light_direction: Vec3::new(0.0, -0.5, 1.0).normalize(),
            ambient: 0.2,
            diffuse: 0.7,
            pixel_noise_sigma: 2.0,
            camera_jitter: Vec3::zeros(),
        }
    }
}

impl VisualConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.ambient) || !(0.0..=1.0).contains(&self.diffuse) {
            return Err(Error::Config("ambient and diffuse must lie in [0, 1]".into()));
        }
        if self.ambient + self.diffuse > 1.0 + 1e-12 {
            return Err(Error::Config("ambient + diffuse must not exceed 1".into()));
        }
        if !(self.pixel_noise_sigma >= 0.0) {
            return Err(Error::Config("pixel_noise_sigma must be >= 0".into()));
        }
        if !((self.light_direction.norm() - 1.0).abs() < 1e-6) {
            return Err(Error::Config("light_direction must be a unit vector".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, pixels: vec![0; width * height] }
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn count_nonzero(&self) -> usize {
        self.pixels.iter().filter(|&&p| p != 0).count()
    }

    /// Binary PGM (P5).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_pgm())?;
        Ok(())
    }

    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Parse { line: 0, msg: format!("pgm: {msg}") };
        let mut fields = Vec::new();
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header not ascii"))?);
        }
        if fields[0] != "P5" || fields[3] != "255" {
            return Err(bad("expected P5 with maxval 255"));
        }
        let width: usize = fields[1].parse().map_err(|_| bad("width"))?;
        let height: usize = fields[2].parse().map_err(|_| bad("height"))?;
        let data = &bytes[pos + 1..];
        if data.len() != width * height {
            return Err(bad("pixel data length mismatch"));
        }
        Ok(Self { width, height, pixels: data.to_vec() })
    }
}

/// Index triples for the two triangles of every grid cell.
pub fn grid_triangles(grid_n: usize) -> Vec<[usize; 3]> {
    let mut tris = Vec::with_capacity(2 * (grid_n - 1) * (grid_n - 1));
    for row in 0..grid_n - 1 {
        for col in 0..grid_n - 1 {
            let a = row * grid_n + col;
            let b = a + 1;
            let c = a + grid_n;
            let d = c + 1;
            tris.push([a, b, d]);
            tris.push([a, d, c]);
        }
    }
    tris
}

/// Rasterize the cloth with flat two-sided Lambert shading, then add pixel noise.
pub fn render(
    cloth: &ClothState,
    grid_n: usize,
    cam: &CameraConfig,
    vis: &VisualConfig,
    noise_seed: u64,
) -> Result<GrayImage> {
    let frame = cam.frame()?;
    vis.validate()?;
    let size = cam.image_size;
    let mut image = GrayImage::new(size, size);
    // stores 1/depth, larger is closer
    let mut depth = vec![0.0f64; size * size];

    let cam_pts: Vec<Vec3> = cloth.positions.iter().map(|p| frame.to_camera(*p)).collect();
    for tri in grid_triangles(grid_n) {
        let [ia, ib, ic] = tri;
        let (ca, cb, cc) = (cam_pts[ia], cam_pts[ib], cam_pts[ic]);
        if ca.z <= NEAR || cb.z <= NEAR || cc.z <= NEAR {
            continue;
        }
        let (pa, pb, pc) = (cloth.positions[ia], cloth.positions[ib], cloth.positions[ic]);
        let normal = (pb - pa).cross(&(pc - pa));
        let area = normal.norm();
        if area == 0.0 {
            continue;
        }
        let mut normal = normal / area;
        if normal.dot(&(cam.eye - pa)) < 0.0 {
            normal = -normal;
        }
        let intensity = (vis.ambient + vis.diffuse * normal.dot(&vis.light_direction).max(0.0)).clamp(0.0, 1.0);
        let shade = (255.0 * intensity).round() as u8;

        let screen = |c: Vec3| (frame.center + frame.focal * c.x / c.z, frame.center - frame.focal * c.y / c.z);
        let (a, b, c) = (screen(ca), screen(cb), screen(cc));
        let edge = |p: (f64, f64), q: (f64, f64), x: f64, y: f64| (q.0 - p.0) * (y - p.1) - (q.1 - p.1) * (x - p.0);
        let signed_area = edge(a, b, c.0, c.1);
        if signed_area == 0.0 {
            continue;
        }
        let min_x = a.0.min(b.0).min(c.0).floor().max(0.0) as i64;
        let max_x = a.0.max(b.0).max(c.0).ceil().min(size as f64 - 1.0) as i64;
        let min_y = a.1.min(b.1).min(c.1).floor().max(0.0) as i64;
        let max_y = a.1.max(b.1).max(c.1).ceil().min(size as f64 - 1.0) as i64;
        let (iza, izb, izc) = (1.0 / ca.z, 1.0 / cb.z, 1.0 / cc.z);
        for py in min_y..=max_y {
            for px in min_x..=max_x {
                let (x, y) = (px as f64, py as f64);
                let wa = edge(b, c, x, y) / signed_area;
                let wb = edge(c, a, x, y) / signed_area;
                let wc = edge(a, b, x, y) / signed_area;
                if wa < 0.0 || wb < 0.0 || wc < 0.0 {
                    continue;
                }
                let inv_z = wa * iza + wb * izb + wc * izc;
                let k = py as usize * size + px as usize;
                if inv_z > depth[k] {
                    depth[k] = inv_z;
                    image.pixels[k] = shade;
                }
            }
        }
    }

    if vis.pixel_noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        for p in image.pixels.iter_mut() {
            let n: f64 = rng.sample(StandardNormal);
            *p = (*p as f64 + vis.pixel_noise_sigma * n).round().clamp(0.0, 255.0) as u8;
        }
    }
    Ok(image)
}

/// Normalized image-plane labels for the tracked points, `(u0, v0, u1, v1, ...)` in `[0, 1]`.
pub fn corner_labels(tracked: &TrackedPoints, cam: &CameraConfig) -> [f64; 2 * TRACKED_POINTS] {
    let mut out = [0.5; 2 * TRACKED_POINTS];
    let Ok(frame) = cam.frame() else { return out };
    let scale = (cam.image_size as f64 - 1.0).max(1.0);
    for (i, p) in tracked.0.iter().enumerate() {
        if let Ok((u, v)) = frame.project(p.position) {
            out[2 * i] = (u / scale).clamp(0.0, 1.0);
            out[2 * i + 1] = (v / scale).clamp(0.0, 1.0);
        }
    }
    out
}

/// Uniform ranges for the per-episode visual randomization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VisualRanges {
    /// Distance from eye to look-at point, meters.
    pub camera_distance: Range,
    /// Radians above the table plane.
    pub camera_elevation: Range,
    /// Radians about the vertical axis, zero looks along +y.
    pub camera_azimuth: Range,
    pub vertical_fov: Range,
    pub eye_offset_x: Range,
    pub eye_offset_y: Range,
    pub eye_offset_z: Range,
    pub light_elevation: Range,
    pub light_azimuth: Range,
    pub ambient: Range,
    pub diffuse: Range,
    pub pixel_noise_sigma: Range,
    /// Square image side, pixels.
    pub image_size: usize,
}

impl Default for VisualRanges {
    fn default() -> Self {
        let deg = |a: f64, b: f64| Range(a.to_radians(), b.to_radians());
        Self {
            camera_distance: Range(0.57, 0.63),
            camera_elevation: deg(42.0, 48.0),
            camera_azimuth: deg(-4.0, 4.0),
            vertical_fov: deg(48.0, 52.0),
            eye_offset_x: Range(-0.01, 0.01),
            eye_offset_y: Range(-0.01, 0.01),
            eye_offset_z: Range(-0.01, 0.01),
            light_elevation: deg(50.0, 80.0),
            light_azimuth: deg(-30.0, 30.0),
            ambient: Range(0.15, 0.3),
            diffuse: Range(0.55, 0.7),
            pixel_noise_sigma: Range(0.0, 4.0),
            image_size: DEFAULT_IMAGE_SIZE,
        }
    }
}

impl VisualRanges {
    /// Every range collapsed to a single value: the nominal camera and lighting.
    pub fn fixed() -> Self {
        let mid = |r: Range| Range::fixed(r.midpoint());
        let d = Self::default();
        Self {
            camera_distance: mid(d.camera_distance),
            camera_elevation: mid(d.camera_elevation),
            camera_azimuth: Range::fixed(0.0),
            vertical_fov: mid(d.vertical_fov),
            eye_offset_x: Range::fixed(0.0),
            eye_offset_y: Range::fixed(0.0),
            eye_offset_z: Range::fixed(0.0),
            light_elevation: mid(d.light_elevation),
            light_azimuth: Range::fixed(0.0),
            ambient: Range::fixed(0.2),
            diffuse: Range::fixed(0.7),
            pixel_noise_sigma: Range::fixed(2.0),
            image_size: d.image_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("camera_distance", self.camera_distance),
            ("camera_elevation", self.camera_elevation),
            ("camera_azimuth", self.camera_azimuth),
            ("vertical_fov", self.vertical_fov),
            ("eye_offset_x", self.eye_offset_x),
            ("eye_offset_y", self.eye_offset_y),
            ("eye_offset_z", self.eye_offset_z),
            ("light_elevation", self.light_elevation),
            ("light_azimuth", self.light_azimuth),
            ("ambient", self.ambient),
            ("diffuse", self.diffuse),
            ("pixel_noise_sigma", self.pixel_noise_sigma),
        ];
        for (name, r) in named {
            r.validate(name)?;
        }
        if self.camera_distance.low() <= 0.0 {
            return Err(Error::Config("camera_distance must be positive".into()));
        }
        if self.ambient.low() < 0.0 || self.diffuse.low() < 0.0 || self.ambient.high() + self.diffuse.high() > 1.0 {
            return Err(Error::Config("ambient/diffuse ranges must be non-negative and sum to at most 1".into()));
        }
        if self.pixel_noise_sigma.low() < 0.0 {
            return Err(Error::Config("pixel_noise_sigma range must be non-negative".into()));
        }
        if self.image_size == 0 {
            return Err(Error::Config("image_size must be > 0".into()));
        }
        Ok(())
    }
}

/// Draw a camera and lighting configuration, every field independently uniform.
pub fn sample_visual_config<R: Rng + ?Sized>(
    rng: &mut R,
    ranges: &VisualRanges,
    look_at: Vec3,
) -> Result<(CameraConfig, VisualConfig)> {
    ranges.validate()?;
    let distance = ranges.camera_distance.sample(rng);
    let elevation = ranges.camera_elevation.sample(rng);
    let azimuth = ranges.camera_azimuth.sample(rng);
    let fov = ranges.vertical_fov.sample(rng);
    let jitter = Vec3::new(
        ranges.eye_offset_x.sample(rng),
        ranges.eye_offset_y.sample(rng),
        ranges.eye_offset_z.sample(rng),
    );
    let light_elevation = ranges.light_elevation.sample(rng);
    let light_azimuth = ranges.light_azimuth.sample(rng);
    let ambient = ranges.ambient.sample(rng);
    let diffuse = ranges.diffuse.sample(rng);
    let sigma = ranges.pixel_noise_sigma.sample(rng);

    // azimuth 0 puts the eye on the -y side looking toward +y
    let horizontal = distance * elevation.cos();
    let eye = look_at
        + Vec3::new(horizontal * azimuth.sin(), -horizontal * azimuth.cos(), distance * elevation.sin())
        + jitter;
    let cam = CameraConfig { eye, look_at, up: Vec3::z(), vertical_fov: fov, image_size: ranges.image_size };
    let light_direction = Vec3::new(
        light_elevation.cos() * light_azimuth.sin(),
        -light_elevation.cos() * light_azimuth.cos(),
        light_elevation.sin(),
    )
    .normalize();
    let vis = VisualConfig { light_direction, ambient, diffuse, pixel_noise_sigma: sigma, camera_jitter: jitter };
    cam.frame()?;
    Ok((cam, vis))
}
