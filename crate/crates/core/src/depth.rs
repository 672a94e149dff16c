//! Depth colorization through surface normals, and RGB standardization.
//!
//! Depth chain: 5x5 median hole filling, back-projection with pinhole
//! intrinsics, central-difference normals on the organized cloud, nearest
//! neighbour resize + 224 center crop, and per-channel scaling by the
//! ImageNet standard deviations (no mean shift; normals already lie in
//! [-1, 1]).

use std::path::Path;

use image::RgbImage;

use crate::error::{Error, Result};
use crate::tensor_io::ActivationTensor;

pub const IMAGENET_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STD: [f32; 3] = [0.229, 0.224, 0.225];
pub const RESIZE_SIDE: usize = 256;
pub const CROP_SIDE: usize = 224;
pub const MEDIAN_WINDOW: usize = 5;
pub const MAX_FILL_PASSES: usize = 10;
/// Meters per raw unit of a 16-bit depth PNG.
pub const DEFAULT_DEPTH_SCALE: f32 = 0.001;

#[derive(Debug, Clone, PartialEq)]
pub struct DepthFrame {
    width: usize,
    height: usize,
    /// Meters, row-major; 0.0 marks a missing reading.
    depth: Vec<f32>,
}

impl DepthFrame {
    pub fn new(width: usize, height: usize, depth: Vec<f32>) -> Result<Self> {
        if width < MEDIAN_WINDOW || height < MEDIAN_WINDOW {
            return Err(Error::Depth(format!(
                "{width}x{height} frame is smaller than the {MEDIAN_WINDOW}x{MEDIAN_WINDOW} window"
            )));
        }
        if depth.len() != width * height {
            return Err(Error::Depth(format!(
                "{} depth values for a {width}x{height} frame",
                depth.len()
            )));
        }
        if let Some(v) = depth.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Depth(format!("invalid depth value {v}")));
        }
        Ok(Self {
            width,
            height,
            depth,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn depth(&self) -> &[f32] {
        &self.depth
    }

    pub fn at(&self, u: usize, v: usize) -> f32 {
        self.depth[v * self.width + u]
    }

    pub fn missing_count(&self) -> usize {
        self.depth.iter().filter(|&&d| d == 0.0).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0 && cx.is_finite() && cy.is_finite()) {
            return Err(Error::Depth(format!(
                "focal lengths must be positive (fx={fx}, fy={fy})"
            )));
        }
        Ok(Self { fx, fy, cx, cy })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub width: usize,
    pub height: usize,
    pub points: Vec<[f64; 3]>,
    pub valid: Vec<bool>,
}

impl PointCloud {
    fn point(&self, u: usize, v: usize) -> Option<[f64; 3]> {
        let i = v * self.width + u;
        self.valid[i].then(|| self.points[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalImage {
    pub width: usize,
    pub height: usize,
    /// Unit normals; invalid pixels hold the zero vector.
    pub normals: Vec<[f32; 3]>,
    pub valid: Vec<bool>,
}

impl NormalImage {
    pub fn at(&self, u: usize, v: usize) -> [f32; 3] {
        self.normals[v * self.width + u]
    }
}

fn median(values: &mut [f32]) -> f32 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("depth values are finite"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn fill_missing_depth(d: &DepthFrame) -> Result<DepthFrame> {
    fill_missing_depth_with(d, MAX_FILL_PASSES)
}

/// Fills missing pixels with the median of the valid readings in their 5x5
/// neighbourhood (borders replicated). Each pass reads the previous pass's
/// frame; passes repeat until nothing changes or `max_passes` is reached.
pub fn fill_missing_depth_with(d: &DepthFrame, max_passes: usize) -> Result<DepthFrame> {
    if d.depth.iter().all(|&v| v == 0.0) {
        return Err(Error::Depth(
            "frame has no valid depth to interpolate from".into(),
        ));
    }
    let (w, h) = (d.width, d.height);
    let r = (MEDIAN_WINDOW / 2) as isize;
    let mut cur = d.depth.clone();
    let mut window = Vec::with_capacity(MEDIAN_WINDOW * MEDIAN_WINDOW);
    for _ in 0..max_passes {
        let mut next = cur.clone();
        let mut changed = false;
        for v in 0..h {
            for u in 0..w {
                if cur[v * w + u] != 0.0 {
                    continue;
                }
                window.clear();
                for dy in -r..=r {
                    let y = (v as isize + dy).clamp(0, h as isize - 1) as usize;
                    for dx in -r..=r {
                        let x = (u as isize + dx).clamp(0, w as isize - 1) as usize;
                        let z = cur[y * w + x];
                        if z != 0.0 {
                            window.push(z);
                        }
                    }
                }
                if !window.is_empty() {
                    next[v * w + u] = median(&mut window);
                    changed = true;
                }
            }
        }
        cur = next;
        if !changed {
            break;
        }
    }
    DepthFrame::new(w, h, cur)
}

/// `X = (u - cx) z / fx`, `Y = (v - cy) z / fy`, `Z = z`.
pub fn depth_to_pointcloud(d: &DepthFrame, k: &CameraIntrinsics) -> PointCloud {
    let mut points = Vec::with_capacity(d.depth.len());
    let mut valid = Vec::with_capacity(d.depth.len());
    for v in 0..d.height {
        for u in 0..d.width {
            let z = f64::from(d.at(u, v));
            if z > 0.0 {
                points.push([
                    (u as f64 - k.cx) * z / k.fx,
                    (v as f64 - k.cy) * z / k.fy,
                    z,
                ]);
                valid.push(true);
            } else {
                points.push([0.0; 3]);
                valid.push(false);
            }
        }
    }
    PointCloud {
        width: d.width,
        height: d.height,
        points,
        valid,
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Central difference along one axis, one-sided where a neighbour is missing
/// or off the grid.
fn tangent(prev: Option<[f64; 3]>, center: [f64; 3], next: Option<[f64; 3]>) -> Option<[f64; 3]> {
    match (prev, next) {
        (Some(p), Some(n)) => Some(sub(n, p)),
        (None, Some(n)) => Some(sub(n, center)),
        (Some(p), None) => Some(sub(center, p)),
        (None, None) => None,
    }
}

/// Normal of `cross(dP/du, dP/dv)`, flipped to face the camera
/// (`dot(n, P) <= 0`).
pub fn estimate_normals(pc: &PointCloud) -> NormalImage {
    let (w, h) = (pc.width, pc.height);
    let mut normals = vec![[0.0f32; 3]; w * h];
    let mut valid = vec![false; w * h];
    for v in 0..h {
        for u in 0..w {
            let Some(center) = pc.point(u, v) else {
                continue;
            };
            let left = (u > 0).then(|| pc.point(u - 1, v)).flatten();
            let right = (u + 1 < w).then(|| pc.point(u + 1, v)).flatten();
            let up = (v > 0).then(|| pc.point(u, v - 1)).flatten();
            let down = (v + 1 < h).then(|| pc.point(u, v + 1)).flatten();
            let (Some(du), Some(dv)) = (tangent(left, center, right), tangent(up, center, down))
            else {
                continue;
            };
            let mut n = cross(du, dv);
            let len = dot(n, n).sqrt();
            if !(len > 0.0 && len.is_finite()) {
                continue;
            }
            n = [n[0] / len, n[1] / len, n[2] / len];
            if dot(n, center) > 0.0 {
                n = [-n[0], -n[1], -n[2]];
            }
            let i = v * w + u;
            normals[i] = [n[0] as f32, n[1] as f32, n[2] as f32];
            valid[i] = true;
        }
    }
    NormalImage {
        width: w,
        height: h,
        normals,
        valid,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResizeMode {
    /// Resize to 256x256 regardless of aspect ratio.
    #[default]
    Square,
    /// Resize so the short side is 256, keeping the aspect ratio.
    ShortSide,
}

fn resized_dims(width: usize, height: usize, mode: ResizeMode) -> (usize, usize) {
    match mode {
        ResizeMode::Square => (RESIZE_SIDE, RESIZE_SIDE),
        ResizeMode::ShortSide => {
            let short = width.min(height) as f64;
            let scale = RESIZE_SIDE as f64 / short;
            let w = ((width as f64 * scale).round() as usize).max(RESIZE_SIDE);
            let h = ((height as f64 * scale).round() as usize).max(RESIZE_SIDE);
            (w, h)
        }
    }
}

fn nearest_index(dst: usize, src_len: usize, dst_len: usize) -> usize {
    (((dst as f64 + 0.5) * src_len as f64 / dst_len as f64).floor() as usize).min(src_len - 1)
}

fn crop_offsets(width: usize, height: usize) -> (usize, usize) {
    ((width - CROP_SIDE) / 2, (height - CROP_SIDE) / 2)
}

/// Nearest-neighbour resize followed by the central 224x224 crop. Output
/// values are always copies of input values.
pub fn resize_center_crop_depthlike(img: &NormalImage, mode: ResizeMode) -> NormalImage {
    let (rw, rh) = resized_dims(img.width, img.height, mode);
    let (ox, oy) = crop_offsets(rw, rh);
    let mut normals = Vec::with_capacity(CROP_SIDE * CROP_SIDE);
    let mut valid = Vec::with_capacity(CROP_SIDE * CROP_SIDE);
    for y in 0..CROP_SIDE {
        let sy = nearest_index(y + oy, img.height, rh);
        for x in 0..CROP_SIDE {
            let sx = nearest_index(x + ox, img.width, rw);
            let i = sy * img.width + sx;
            normals.push(img.normals[i]);
            valid.push(img.valid[i]);
        }
    }
    NormalImage {
        width: CROP_SIDE,
        height: CROP_SIDE,
        normals,
        valid,
    }
}

/// Channel-first `3 x 224 x 224` tensor, each channel divided by the
/// ImageNet standard deviation.
pub fn standardize_depth(img: &NormalImage) -> Result<ActivationTensor> {
    if img.width != CROP_SIDE || img.height != CROP_SIDE {
        return Err(Error::Depth(format!(
            "expected a {CROP_SIDE}x{CROP_SIDE} image, got {}x{}",
            img.width, img.height
        )));
    }
    let plane = CROP_SIDE * CROP_SIDE;
    let mut data = vec![0.0f32; 3 * plane];
    for (p, n) in img.normals.iter().enumerate() {
        for c in 0..3 {
            data[c * plane + p] = n[c] / IMAGENET_STD[c];
        }
    }
    ActivationTensor::new(vec![3, CROP_SIDE, CROP_SIDE], data)
}

fn bilinear_sample(img: &RgbImage, x: f64, y: f64, c: usize) -> f64 {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (tx, ty) = (x - x0 as f64, y - y0 as f64);
    let px = |xx: usize, yy: usize| f64::from(img.get_pixel(xx as u32, yy as u32)[c]);
    let top = px(x0, y0) + tx * (px(x1, y0) - px(x0, y0));
    let bottom = px(x0, y1) + tx * (px(x1, y1) - px(x0, y1));
    top + ty * (bottom - top)
}

/// `(x / 255 - mean_c) / std_c` for a raw 0..=255 intensity.
pub fn zscore_rgb(raw: f64, channel: usize) -> f32 {
    ((raw / 255.0 - f64::from(IMAGENET_MEAN[channel])) / f64::from(IMAGENET_STD[channel])) as f32
}

/// Bilinear resize, 224 center crop and ImageNet z-scoring.
pub fn standardize_rgb(img: &RgbImage, mode: ResizeMode) -> Result<ActivationTensor> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::Depth("empty RGB image".into()));
    }
    let (rw, rh) = resized_dims(w, h, mode);
    let (ox, oy) = crop_offsets(rw, rh);
    let sx = w as f64 / rw as f64;
    let sy = h as f64 / rh as f64;
    let plane = CROP_SIDE * CROP_SIDE;
    let mut data = vec![0.0f32; 3 * plane];
    for y in 0..CROP_SIDE {
        let src_y = (((y + oy) as f64) + 0.5) * sy - 0.5;
        for x in 0..CROP_SIDE {
            let src_x = (((x + ox) as f64) + 0.5) * sx - 0.5;
            for c in 0..3 {
                data[c * plane + y * CROP_SIDE + x] =
                    zscore_rgb(bilinear_sample(img, src_x, src_y, c), c);
            }
        }
    }
    ActivationTensor::new(vec![3, CROP_SIDE, CROP_SIDE], data)
}

/// Full depth chain: fill, back-project, normals, resize/crop, scale.
pub fn colorize_depth(
    d: &DepthFrame,
    k: &CameraIntrinsics,
    mode: ResizeMode,
) -> Result<ActivationTensor> {
    let filled = fill_missing_depth(d)?;
    let normals = estimate_normals(&depth_to_pointcloud(&filled, k));
    standardize_depth(&resize_center_crop_depthlike(&normals, mode))
}

/// Reads a 16-bit (or 8-bit) grayscale PNG and converts raw units to meters.
pub fn load_depth_png(path: impl AsRef<Path>, depth_scale: f32) -> Result<DepthFrame> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let gray = img.to_luma16();
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let depth = gray
        .pixels()
        .map(|p| f32::from(p[0]) * depth_scale)
        .collect();
    DepthFrame::new(w, h, depth)
}

pub fn load_rgb(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    image::open(path)
        .map(|i| i.to_rgb8())
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}
