#![allow(dead_code)]

use std::path::{Path, PathBuf};

use randrnn::pipeline::RunConfig;
use randrnn::synthetic::{write_dataset, SyntheticTask};
use randrnn::tensor_io::{LevelSpec, Modality, Preprocess};

pub fn canonical_level(level: u8, k: usize, s: usize) -> LevelSpec {
    LevelSpec::new(level, vec![k, s, s], [k, s, s], Preprocess::Reshape).unwrap()
}

/// Writes a one-modality task (stored at `levels`) and returns a config over it.
pub fn single_modality(
    dir: &Path,
    task: &SyntheticTask,
    levels: &[u8],
    seeds: Vec<u64>,
) -> RunConfig {
    let samples = task.generate(&[]).unwrap();
    let manifest = write_dataset(dir.join("data"), &[(Modality::Rgb, &samples)], levels).unwrap();
    config_for(manifest, dir.join("out"), task, levels, seeds)
}

pub fn config_for(
    manifest: PathBuf,
    out: PathBuf,
    task: &SyntheticTask,
    levels: &[u8],
    seeds: Vec<u64>,
) -> RunConfig {
    let mut cfg = RunConfig::new(manifest, out, seeds);
    cfg.levels = levels
        .iter()
        .map(|&l| canonical_level(l, task.channels, task.side))
        .collect();
    cfg
}

use randrnn::depth::{CameraIntrinsics, DepthFrame, NormalImage};

pub fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn ray(k: &CameraIntrinsics, u: usize, v: usize) -> [f64; 3] {
    [(u as f64 - k.cx) / k.fx, (v as f64 - k.cy) / k.fy, 1.0]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Depth of the plane `n . P = d` seen through a pinhole camera. `n` must
/// face the camera (`d < 0`).
pub fn planar_frame(w: usize, h: usize, k: &CameraIntrinsics, n: [f64; 3], d: f64) -> DepthFrame {
    let n = unit(n);
    let mut depth = Vec::with_capacity(w * h);
    for v in 0..h {
        for u in 0..w {
            depth.push((d / dot(n, ray(k, u, v))) as f32);
        }
    }
    DepthFrame::new(w, h, depth).unwrap()
}

/// Front surface of a sphere; pixels that miss it read 0.
pub fn sphere_frame(w: usize, h: usize, k: &CameraIntrinsics, c: [f64; 3], r: f64) -> DepthFrame {
    let mut depth = Vec::with_capacity(w * h);
    for v in 0..h {
        for u in 0..w {
            let q = ray(k, u, v);
            let (a, b, cc) = (dot(q, q), dot(q, c), dot(c, c) - r * r);
            let disc = b * b - a * cc;
            depth.push(if disc > 0.0 {
                ((b - disc.sqrt()) / a) as f32
            } else {
                0.0
            });
        }
    }
    DepthFrame::new(w, h, depth).unwrap()
}

/// Largest angle (degrees) between estimated and radial sphere normals over
/// pixels whose four neighbours are on the sphere and whose surface is
/// seen at less than `max_view_deg` from head-on. Also returns the count.
pub fn sphere_normal_error(
    normals: &NormalImage,
    frame: &DepthFrame,
    k: &CameraIntrinsics,
    c: [f64; 3],
    max_view_deg: f64,
) -> (f64, usize) {
    let (w, h) = (frame.width(), frame.height());
    let mut worst = 0.0f64;
    let mut count = 0;
    for v in 1..h - 1 {
        for u in 1..w - 1 {
            let on = |uu: usize, vv: usize| frame.at(uu, vv) > 0.0;
            if !(on(u, v) && on(u - 1, v) && on(u + 1, v) && on(u, v - 1) && on(u, v + 1)) {
                continue;
            }
            let q = ray(k, u, v);
            let z = f64::from(frame.at(u, v));
            let p = [q[0] * z, q[1] * z, z];
            let radial = unit([p[0] - c[0], p[1] - c[1], p[2] - c[2]]);
            let view = unit([-p[0], -p[1], -p[2]]);
            if dot(radial, view).acos().to_degrees() > max_view_deg {
                continue;
            }
            let e = normals.at(u, v);
            let est = unit([f64::from(e[0]), f64::from(e[1]), f64::from(e[2])]);
            worst = worst.max(dot(est, radial).clamp(-1.0, 1.0).acos().to_degrees());
            count += 1;
        }
    }
    (worst, count)
}
