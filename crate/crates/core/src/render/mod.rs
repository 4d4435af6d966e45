//! Deterministic software renderer for stimulus images.
//!
//! The object is rotated in front of a fixed perspective camera, shaded
//! with a single directional Lambertian light plus an ambient term, drawn
//! with a z-buffer at 2x2 supersampling and box-downsampled. Every pixel is
//! a pure function of (mesh, view, config).

mod noise;

use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embryo::Mesh;
use crate::geom::{self, Mat3, Vec3};

pub use noise::pink_noise_mask;

pub const IMAGE_SIZE: u32 = 224;
/// Rotation step of the canonical view grid, in degrees.
pub const VIEW_STEP: i32 = 30;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("mesh is empty")]
    EmptyMesh,
    #[error("view angle {0} is not a multiple of 30 degrees in [-180, 180)")]
    BadAngle(i32),
    #[error("object leaves the frame at view {0:?}")]
    OutOfFrame(ViewSpec),
    #[error("invalid render config: {0}")]
    Config(String),
    #[error("image encoding: {0}")]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Object pose: pitch about the camera-horizontal axis, then yaw about the
/// vertical axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ViewSpec {
    pub pitch_deg: i32,
    pub yaw_deg: i32,
}

impl ViewSpec {
    pub const INITIAL: ViewSpec = ViewSpec { pitch_deg: 0, yaw_deg: 0 };

    pub fn new(pitch_deg: i32, yaw_deg: i32) -> Result<Self, RenderError> {
        for a in [pitch_deg, yaw_deg] {
            if a % VIEW_STEP != 0 || !(-180..180).contains(&a) {
                return Err(RenderError::BadAngle(a));
            }
        }
        Ok(ViewSpec { pitch_deg, yaw_deg })
    }

    /// Wraps arbitrary multiples of 30 into [-180, 180).
    pub fn wrapped(pitch_deg: i32, yaw_deg: i32) -> Result<Self, RenderError> {
        for a in [pitch_deg, yaw_deg] {
            if a % VIEW_STEP != 0 {
                return Err(RenderError::BadAngle(a));
            }
        }
        Ok(ViewSpec {
            pitch_deg: wrap_deg(pitch_deg),
            yaw_deg: wrap_deg(yaw_deg),
        })
    }

    pub fn pitch(deg: i32) -> Self {
        ViewSpec { pitch_deg: deg, yaw_deg: 0 }
    }

    pub fn yaw(deg: i32) -> Self {
        ViewSpec { pitch_deg: 0, yaw_deg: deg }
    }

    /// Object rotation `R_yaw * R_pitch`.
    pub fn rotation(&self) -> Mat3 {
        let (cp, sp) = cos_sin_deg(self.pitch_deg);
        let (cy, sy) = cos_sin_deg(self.yaw_deg);
        let rx = [[1.0, 0.0, 0.0], [0.0, cp, -sp], [0.0, sp, cp]];
        let ry = [[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]];
        geom::mat_mul(&ry, &rx)
    }

    /// Applying `self` and then `next` as a single view. Only defined when
    /// both rotations share an axis (or one is the identity).
    pub fn then(self, next: ViewSpec) -> Option<ViewSpec> {
        let self_pitch_only = self.yaw_deg == 0;
        let next_pitch_only = next.yaw_deg == 0;
        let self_yaw_only = self.pitch_deg == 0;
        let next_yaw_only = next.pitch_deg == 0;
        if (self_pitch_only && next_pitch_only) || (self_yaw_only && next_yaw_only) {
            ViewSpec::wrapped(self.pitch_deg + next.pitch_deg, self.yaw_deg + next.yaw_deg).ok()
        } else if next == ViewSpec::INITIAL {
            Some(self)
        } else {
            None
        }
    }

    /// `<object_id>_p<pitch>_y<yaw>`, the image id and PNG stem.
    pub fn image_id(&self, object_id: &str) -> String {
        format!("{object_id}_p{}_y{}", self.pitch_deg, self.yaw_deg)
    }

    /// The 23 canonical views: the initial pose, then the 11 other pitch
    /// steps, then the 11 other yaw steps.
    pub fn canonical_series() -> Vec<ViewSpec> {
        let others: Vec<i32> = (-180..180).step_by(VIEW_STEP as usize).filter(|&a| a != 0).collect();
        std::iter::once(ViewSpec::INITIAL)
            .chain(others.iter().map(|&a| ViewSpec::pitch(a)))
            .chain(others.iter().map(|&a| ViewSpec::yaw(a)))
            .collect()
    }
}

fn wrap_deg(a: i32) -> i32 {
    (a + 180).rem_euclid(360) - 180
}

/// Exact values on the 30-degree grid, so that e.g. 90 degrees maps to
/// (0, 1) rather than (6e-17, 1).
fn cos_sin_deg(deg: i32) -> (f64, f64) {
    let h = 3f64.sqrt() / 2.0;
    match deg.rem_euclid(360) {
        0 => (1.0, 0.0),
        30 => (h, 0.5),
        60 => (0.5, h),
        90 => (0.0, 1.0),
        120 => (-0.5, h),
        150 => (-h, 0.5),
        180 => (-1.0, 0.0),
        210 => (-h, -0.5),
        240 => (-0.5, -h),
        270 => (0.0, -1.0),
        300 => (0.5, -h),
        330 => (h, -0.5),
        other => {
            let (s, c) = (other as f64).to_radians().sin_cos();
            (c, s)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    /// Camera distance from the object centre, in bounding-sphere radii.
    pub camera_distance: f64,
    pub fov_deg: f64,
    /// Direction towards the light, camera space (+x right, +y up, +z
    /// towards the viewer). Normalized on use.
    pub light_dir: Vec3,
    pub albedo: f64,
    pub ambient: f64,
    pub background: u8,
    pub size: u32,
    pub supersample: u32,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            camera_distance: 3.0,
            fov_deg: 45.0,
            light_dir: [-0.5, 0.6, 0.8],
            albedo: 0.8,
            ambient: 0.15,
            background: 128,
            size: IMAGE_SIZE,
            supersample: 2,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<(), RenderError> {
        let bad = |m: &str| Err(RenderError::Config(m.to_string()));
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return bad("field of view must be in (0, 180)");
        }
        if !(self.camera_distance > 1.0) {
            return bad("camera must sit outside the bounding sphere");
        }
        let half = (self.fov_deg.to_radians() / 2.0).tan();
        if 1.0 / (self.camera_distance.powi(2) - 1.0).sqrt() >= half {
            return bad("bounding sphere does not fit the field of view");
        }
        if geom::normalize(self.light_dir).is_none() {
            return bad("light direction is zero");
        }
        if self.size == 0 || self.supersample == 0 {
            return bad("image size and supersampling must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StimulusImage {
    pub object_id: String,
    pub view: ViewSpec,
    pub pixels: RgbImage,
}

impl StimulusImage {
    pub fn image_id(&self) -> String {
        self.view.image_id(&self.object_id)
    }

    pub fn to_png(&self) -> Result<Vec<u8>, RenderError> {
        let mut buf = Cursor::new(Vec::new());
        self.pixels.write_to(&mut buf, ImageFormat::Png)?;
        Ok(buf.into_inner())
    }

    pub fn save_png(&self, path: &Path) -> Result<(), RenderError> {
        self.pixels.save_with_format(path, ImageFormat::Png)?;
        Ok(())
    }
}

/// Renders `mesh` at `view`.
pub fn render(mesh: &Mesh, view: ViewSpec, cfg: &RenderConfig) -> Result<StimulusImage, RenderError> {
    let frame = rasterize(mesh, &view.rotation(), cfg).map_err(|e| match e {
        RenderError::OutOfFrame(_) => RenderError::OutOfFrame(view),
        other => other,
    })?;
    Ok(StimulusImage {
        object_id: mesh.lineage.object_id.clone(),
        view,
        pixels: frame.downsample(cfg),
    })
}

/// Renders with an arbitrary object rotation about the bounding-sphere
/// centre. `render(m, v, c)` equals `render_with_rotation(m, &v.rotation(), c)`.
pub fn render_with_rotation(mesh: &Mesh, rotation: &Mat3, cfg: &RenderConfig) -> Result<RgbImage, RenderError> {
    Ok(rasterize(mesh, rotation, cfg)?.downsample(cfg))
}

/// The 23 canonical views of `mesh`, in `ViewSpec::canonical_series` order.
pub fn rotation_series(mesh: &Mesh, cfg: &RenderConfig) -> Result<Vec<StimulusImage>, RenderError> {
    ViewSpec::canonical_series()
        .into_iter()
        .map(|v| render(mesh, v, cfg))
        .collect()
}

/// Fraction of supersamples covered by the object.
pub fn foreground_fraction(mesh: &Mesh, view: ViewSpec, cfg: &RenderConfig) -> Result<f64, RenderError> {
    let frame = rasterize(mesh, &view.rotation(), cfg)?;
    let covered = frame.depth.iter().filter(|&&d| d > 0.0).count();
    Ok(covered as f64 / frame.depth.len() as f64)
}

struct Frame {
    side: usize,
    shade: Vec<u8>,
    /// Inverse view depth; 0 means background.
    depth: Vec<f64>,
}

impl Frame {
    fn downsample(&self, cfg: &RenderConfig) -> RgbImage {
        let ss = cfg.supersample as usize;
        let out = cfg.size as usize;
        let n = (ss * ss) as u32;
        RgbImage::from_fn(cfg.size, cfg.size, |x, y| {
            let mut sum = 0u32;
            for dy in 0..ss {
                let row = (y as usize * ss + dy) * self.side;
                for dx in 0..ss {
                    sum += self.shade[row + x as usize * ss + dx] as u32;
                }
            }
            let v = ((sum + n / 2) / n) as u8;
            debug_assert!(out == self.side / ss);
            Rgb([v, v, v])
        })
    }
}

fn rasterize(mesh: &Mesh, rotation: &Mat3, cfg: &RenderConfig) -> Result<Frame, RenderError> {
    cfg.validate()?;
    if mesh.faces.is_empty() || mesh.vertices.is_empty() {
        return Err(RenderError::EmptyMesh);
    }
    let side = (cfg.size * cfg.supersample) as usize;
    let sidef = side as f64;
    let tan_half = (cfg.fov_deg.to_radians() / 2.0).tan();
    let light = geom::normalize(cfg.light_dir).expect("validated");
    let (centre, radius) = mesh.bounding_sphere();
    if !(radius > 0.0) {
        return Err(RenderError::EmptyMesh);
    }

    // camera-space positions and screen positions
    let mut cam: Vec<Vec3> = Vec::with_capacity(mesh.vertices.len());
    let mut screen: Vec<[f64; 3]> = Vec::with_capacity(mesh.vertices.len());
    for &v in &mesh.vertices {
        let p = geom::mat_vec(rotation, geom::scale(geom::sub(v, centre), 1.0 / radius));
        let depth = cfg.camera_distance - p[2];
        let sx = (p[0] / (depth * tan_half) + 1.0) * 0.5 * sidef;
        let sy = (1.0 - p[1] / (depth * tan_half)) * 0.5 * sidef;
        if depth <= 0.0 || !(0.0..=sidef).contains(&sx) || !(0.0..=sidef).contains(&sy) {
            return Err(RenderError::OutOfFrame(ViewSpec::INITIAL));
        }
        cam.push(p);
        screen.push([sx, sy, 1.0 / depth]);
    }

    let mut shade = vec![cfg.background; side * side];
    let mut depth = vec![0.0f64; side * side];
    let eye = [0.0, 0.0, cfg.camera_distance];

    for f in &mesh.faces {
        let [ia, ib, ic] = f.map(|i| i as usize);
        let n = geom::tri_cross(cam[ia], cam[ib], cam[ic]);
        if geom::dot(n, geom::sub(eye, cam[ia])) <= 0.0 {
            continue;
        }
        let Some(unit) = geom::normalize(n) else { continue };
        let intensity = cfg.ambient + cfg.albedo * geom::dot(unit, light).max(0.0);
        let value = (intensity * 255.0).round().clamp(0.0, 255.0) as u8;

        let (a, b, c) = (screen[ia], screen[ib], screen[ic]);
        let area = edge(a, b, c);
        if area == 0.0 {
            continue;
        }
        let inv_area = 1.0 / area;
        let x0 = a[0].min(b[0]).min(c[0]).floor().max(0.0) as usize;
        let x1 = (a[0].max(b[0]).max(c[0]).ceil() as usize).min(side);
        let y0 = a[1].min(b[1]).min(c[1]).floor().max(0.0) as usize;
        let y1 = (a[1].max(b[1]).max(c[1]).ceil() as usize).min(side);
        for py in y0..y1 {
            let sy = py as f64 + 0.5;
            let row = py * side;
            for px in x0..x1 {
                let p = [px as f64 + 0.5, sy, 0.0];
                let w0 = edge(b, c, p) * inv_area;
                let w1 = edge(c, a, p) * inv_area;
                let w2 = edge(a, b, p) * inv_area;
                if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                    continue;
                }
                let iz = w0 * a[2] + w1 * b[2] + w2 * c[2];
                let idx = row + px;
                if iz > depth[idx] {
                    depth[idx] = iz;
                    shade[idx] = value;
                }
            }
        }
    }
    Ok(Frame { side, shade, depth })
}

#[inline]
fn edge(a: [f64; 3], b: [f64; 3], p: [f64; 3]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embryo::{grow, icosahedron, GrowthParams};

    fn fixture() -> Mesh {
        grow(&icosahedron(), &GrowthParams::SECOND_GENERATION, 21).unwrap()
    }

    #[test]
    fn canonical_series_shape() {
        let views = ViewSpec::canonical_series();
        assert_eq!(views.len(), 23);
        let mut sorted = views.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 23);
        assert_eq!(views[0], ViewSpec::INITIAL);
        assert!(views.contains(&ViewSpec::pitch(90)));
        assert!(views.contains(&ViewSpec::yaw(90)));
        assert!(views.iter().all(|v| v.pitch_deg == 0 || v.yaw_deg == 0));
    }

    #[test]
    fn angle_validation() {
        assert!(ViewSpec::new(45, 0).is_err());
        assert!(ViewSpec::new(180, 0).is_err());
        assert!(ViewSpec::new(-180, 0).is_ok());
        assert_eq!(ViewSpec::wrapped(360 - 360, 0).unwrap(), ViewSpec::INITIAL);
        assert_eq!(ViewSpec::wrapped(390, -210).unwrap(), ViewSpec::new(30, 150).unwrap());
    }

    #[test]
    fn full_turn_is_identity() {
        let mut v = ViewSpec::INITIAL;
        for _ in 0..12 {
            v = v.then(ViewSpec::pitch(30)).unwrap();
        }
        assert_eq!(v, ViewSpec::INITIAL);
        assert_eq!(ViewSpec::INITIAL.rotation(), geom::IDENTITY);
        assert_eq!(ViewSpec::wrapped(360, 0).unwrap().rotation(), geom::IDENTITY);
    }

    #[test]
    fn mixed_axes_do_not_compose() {
        assert_eq!(ViewSpec::pitch(30).then(ViewSpec::yaw(30)), None);
        assert_eq!(ViewSpec::pitch(30).then(ViewSpec::INITIAL), Some(ViewSpec::pitch(30)));
    }

    #[test]
    fn image_id_format() {
        assert_eq!(ViewSpec::new(-30, 0).unwrap().image_id("lauz_004"), "lauz_004_p-30_y0");
    }

    #[test]
    fn render_is_deterministic_and_view_sensitive() {
        let m = fixture();
        let cfg = RenderConfig::default();
        let a = render(&m, ViewSpec::INITIAL, &cfg).unwrap();
        let b = render(&m, ViewSpec::INITIAL, &cfg).unwrap();
        assert_eq!(a.pixels.as_raw(), b.pixels.as_raw());
        assert_eq!(a.pixels.dimensions(), (224, 224));
        let c = render(&m, ViewSpec::pitch(30), &cfg).unwrap();
        let differing = a
            .pixels
            .as_raw()
            .iter()
            .zip(c.pixels.as_raw())
            .filter(|(x, y)| x != y)
            .count();
        assert!(differing > 0);
    }

    #[test]
    fn background_is_uniform_and_corners_empty() {
        let img = render(&fixture(), ViewSpec::INITIAL, &RenderConfig::default()).unwrap();
        for (x, y) in [(0, 0), (223, 0), (0, 223), (223, 223)] {
            assert_eq!(img.pixels.get_pixel(x, y).0, [128, 128, 128]);
        }
    }

    #[test]
    fn framing_that_clips_is_a_config_error() {
        let narrow = RenderConfig {
            fov_deg: 20.0,
            ..RenderConfig::default()
        };
        assert!(matches!(
            render(&fixture(), ViewSpec::INITIAL, &narrow),
            Err(RenderError::Config(_))
        ));
    }

    #[test]
    fn empty_mesh_is_rejected() {
        let mut m = fixture();
        m.faces.clear();
        assert!(matches!(
            render(&m, ViewSpec::INITIAL, &RenderConfig::default()),
            Err(RenderError::EmptyMesh)
        ));
    }

    #[test]
    fn png_round_trip() {
        let img = render(&fixture(), ViewSpec::yaw(90), &RenderConfig::default()).unwrap();
        let bytes = img.to_png().unwrap();
        let back = image::load_from_memory(&bytes).unwrap().to_rgb8();
        assert_eq!(back, img.pixels);
    }
}
