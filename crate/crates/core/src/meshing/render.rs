//! Orthographic turntable renders: camera-space normal maps and headlight
//! shading.
//!
//! View `k` shows the mesh after a yaw of `k * interval`. Pixels use the
//! image lattice of [`crate::lattice`]; the nearest surface is the one with
//! the smallest z.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rayon::prelude::*;

use super::MeshingError;
use crate::geometry::{cross, dot, norm, rotate_yaw, sub, Mesh, Vec3};
use crate::lattice::{column_of, pixel_x, pixel_y};

/// Background of normal maps, the encoding of `(0, 0, 0)`.
pub const NORMAL_BACKGROUND: [u8; 3] = [128, 128, 128];
/// Background of shaded renders.
pub const SHADING_BACKGROUND: [u8; 3] = [255, 255, 255];

/// Light direction of the headlight (towards the camera).
const LIGHT: Vec3 = [0.0, 0.0, -1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RenderMode {
    Normal,
    Shading,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RenderSpec {
    pub views: usize,
    /// Yaw step between views, in degrees.
    pub interval_deg: f64,
    pub width: usize,
    pub height: usize,
    pub mode: RenderMode,
}

impl Default for RenderSpec {
    fn default() -> Self {
        RenderSpec {
            views: 18,
            interval_deg: 20.0,
            width: 512,
            height: 512,
            mode: RenderMode::Normal,
        }
    }
}

impl RenderSpec {
    pub fn validate(&self) -> Result<(), MeshingError> {
        if self.views == 0 || self.width == 0 || self.height == 0 {
            return Err(MeshingError::BadRenderSpec(
                "views and image size must be positive".into(),
            ));
        }
        let turn = self.views as f64 * self.interval_deg;
        if (turn - 360.0).abs() > 1e-9 {
            return Err(MeshingError::BadRenderSpec(format!(
                "{} views at {} degrees cover {turn} degrees, not 360",
                self.views, self.interval_deg
            )));
        }
        Ok(())
    }

    /// Yaw of view `k` in degrees.
    pub fn yaw_deg(&self, k: usize) -> f64 {
        k as f64 * self.interval_deg
    }
}

/// 8-bit RGB image, rows top to bottom.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl RgbImage {
    pub fn filled(width: usize, height: usize, color: [u8; 3]) -> RgbImage {
        RgbImage {
            width,
            height,
            pixels: color.repeat(width * height),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> [u8; 3] {
        let at = 3 * (j * self.width + i);
        [self.pixels[at], self.pixels[at + 1], self.pixels[at + 2]]
    }
}

/// Renders every view of `spec`.
pub fn render_views(mesh: &Mesh, spec: &RenderSpec) -> Result<Vec<RgbImage>, MeshingError> {
    spec.validate()?;
    if mesh.is_empty() {
        return Err(MeshingError::EmptyMesh);
    }
    Ok((0..spec.views)
        .into_par_iter()
        .map(|k| {
            let view = rotate_yaw(mesh, spec.yaw_deg(k).to_radians());
            rasterize(&view, spec)
        })
        .collect())
}

fn encode_normal(n: Vec3) -> [u8; 3] {
    n.map(|c| ((c + 1.0) * 0.5 * 255.0).round().clamp(0.0, 255.0) as u8)
}

fn rasterize(mesh: &Mesh, spec: &RenderSpec) -> RgbImage {
    let (w, h) = (spec.width, spec.height);
    let background = match spec.mode {
        RenderMode::Normal => NORMAL_BACKGROUND,
        RenderMode::Shading => SHADING_BACKGROUND,
    };
    let mut image = RgbImage::filled(w, h, background);
    let mut depth = vec![f64::INFINITY; w * h];
    for t in 0..mesh.triangles.len() {
        let [a, b, c] = mesh.triangle(t);
        let n = cross(sub(b, a), sub(c, a));
        let len = norm(n);
        // Edge-on triangles cover no pixel centers reliably.
        let area2 = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
        if !(len > 0.0) || area2 == 0.0 {
            continue;
        }
        let n = n.map(|v| v / len);
        let color = match spec.mode {
            RenderMode::Normal => encode_normal(n),
            RenderMode::Shading => {
                let v = (dot(n, LIGHT).max(0.0) * 255.0).round() as u8;
                [v, v, v]
            }
        };
        let xs = [a[0], b[0], c[0]];
        let ys = [a[1], b[1], c[1]];
        let fmin = |v: [f64; 3]| v[0].min(v[1]).min(v[2]);
        let fmax = |v: [f64; 3]| v[0].max(v[1]).max(v[2]);
        let i0 = column_of(fmin(xs), w).ceil().max(0.0) as usize;
        let i1 = column_of(fmax(xs), w).floor().min(w as f64 - 1.0);
        // Rows grow downwards.
        let j0 = column_of(-fmax(ys), h).ceil().max(0.0) as usize;
        let j1 = column_of(-fmin(ys), h).floor().min(h as f64 - 1.0);
        if i1 < 0.0 || j1 < 0.0 {
            continue;
        }
        let (i1, j1) = (i1 as usize, j1 as usize);
        for j in j0..=j1 {
            let y = pixel_y(j, h);
            for i in i0..=i1 {
                let x = pixel_x(i, w);
                let wa = ((b[0] - x) * (c[1] - y) - (b[1] - y) * (c[0] - x)) / area2;
                let wb = ((c[0] - x) * (a[1] - y) - (c[1] - y) * (a[0] - x)) / area2;
                let wc = 1.0 - wa - wb;
                if wa < 0.0 || wb < 0.0 || wc < 0.0 {
                    continue;
                }
                let z = wa * a[2] + wb * b[2] + wc * c[2];
                let at = j * w + i;
                if z < depth[at] {
                    depth[at] = z;
                    image.pixels[3 * at..3 * at + 3].copy_from_slice(&color);
                }
            }
        }
    }
    image
}

/// Writes an 8-bit RGB PNG.
pub fn write_png(path: &Path, image: &RgbImage) -> Result<(), MeshingError> {
    let wrap = |source| MeshingError::Png {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(|e| wrap(png::EncodingError::IoError(e)))?;
    let mut encoder = png::Encoder::new(
        BufWriter::new(file),
        image.width as u32,
        image.height as u32,
    );
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header().map_err(wrap)?;
    writer.write_image_data(&image.pixels).map_err(wrap)?;
    writer.finish().map_err(wrap)
}
