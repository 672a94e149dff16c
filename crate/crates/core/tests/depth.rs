mod common;

use randrnn::depth::{
    colorize_depth, depth_to_pointcloud, estimate_normals, fill_missing_depth, CameraIntrinsics,
    DepthFrame, ResizeMode,
};

fn camera() -> CameraIntrinsics {
    CameraIntrinsics::new(500.0, 500.0, 79.5, 59.5).unwrap()
}

#[test]
fn tilted_plane_normals_match_plane_normal() {
    let k = camera();
    for n in [[0.3, -0.2, -0.93], [-0.5, 0.1, -0.8], [0.0, 0.0, -1.0]] {
        let frame = common::planar_frame(160, 120, &k, n, -2.0);
        let normals = estimate_normals(&depth_to_pointcloud(&frame, &k));
        let want = common::unit(n);
        let mut worst = 0.0f64;
        for v in 1..119 {
            for u in 1..159 {
                let e = normals.at(u, v);
                for i in 0..3 {
                    worst = worst.max((f64::from(e[i]) - want[i]).abs());
                }
            }
        }
        assert!(worst < 1e-3, "plane {n:?}: {worst}");
    }
}

#[test]
fn plane_seen_from_behind_is_flipped_toward_camera() {
    let k = camera();
    let frame = common::planar_frame(40, 30, &k, [0.2, 0.1, -1.0], -1.5);
    let normals = estimate_normals(&depth_to_pointcloud(&frame, &k));
    assert!(normals.normals.iter().all(|n| n[2] < 0.0));
}

#[test]
fn sphere_normals_are_radial() {
    let k = CameraIntrinsics::new(500.0, 500.0, 99.5, 99.5).unwrap();
    let c = [0.02, -0.01, 2.0];
    let frame = common::sphere_frame(200, 200, &k, c, 0.5);
    let normals = estimate_normals(&depth_to_pointcloud(&frame, &k));
    let (worst, count) = common::sphere_normal_error(&normals, &frame, &k, c, 60.0);
    assert!(count > 10_000, "{count}");
    assert!(worst < 2.0, "{worst} degrees");
}

#[test]
fn median_fill_worked_example() {
    let mut depth = vec![0.0f32; 25];
    depth[0] = 2.0;
    depth[4] = 4.0;
    depth[24] = 6.0;
    let filled = fill_missing_depth(&DepthFrame::new(5, 5, depth).unwrap()).unwrap();
    assert_eq!(filled.at(2, 2), 4.0);
}

#[test]
fn colorized_hole_frame_is_finite_and_standardized() {
    let k = camera();
    let mut frame = common::planar_frame(160, 120, &k, [0.0, 0.0, -1.0], -1.0);
    let mut depth = frame.depth().to_vec();
    for i in (0..depth.len()).step_by(37) {
        depth[i] = 0.0;
    }
    frame = DepthFrame::new(160, 120, depth).unwrap();
    let t = colorize_depth(&frame, &k, ResizeMode::ShortSide).unwrap();
    assert_eq!(t.shape(), &[3, 224, 224]);
    // A head-on plane has normal (0, 0, -1) everywhere.
    let plane = 224 * 224;
    let z = &t.data()[2 * plane..];
    let want = -1.0 / randrnn::depth::IMAGENET_STD[2];
    assert!(z.iter().all(|v| (v - want).abs() < 1e-3));
}
