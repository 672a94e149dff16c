use std::fs;
use std::path::Path;
use std::process::Command;

use randrnn::synthetic::{write_dataset, SyntheticTask};
use randrnn::tensor_io::{read_tensor, Modality};

fn randrnn(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_randrnn"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "randrnn {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn setup(dir: &Path) -> std::path::PathBuf {
    let task = SyntheticTask {
        classes: 3,
        train_per_class: 12,
        test_per_class: 6,
        channels: 8,
        side: 4,
        ..SyntheticTask::default()
    };
    let (r, d) = task.generate_pair(&[], &[]).unwrap();
    write_dataset(
        dir.join("data"),
        &[(Modality::Rgb, &r), (Modality::Depth, &d)],
        &[2, 5],
    )
    .unwrap();
    let cfg = dir.join("run.toml");
    fs::write(
        &cfg,
        r#"
config_version = 1
seeds = [3, 4]
workers = 2

[paths]
manifest = "data/manifest.csv"
output = "out"

[encoder]
num_rnns = 4

[[levels]]
level = 2
raw_shape = [8, 4, 4]
target_shape = [8, 4, 4]
preprocess = "reshape"

[[levels]]
level = 5
raw_shape = [8, 4, 4]
target_shape = [8, 2, 2]
preprocess = "pool_spatial"

[[splits]]
id = "roles"

[[splits]]
id = "drawn"
draw_seed = 11

[fusion]
rgb_levels = [2, 5]
depth_levels = [5]
"#,
    )
    .unwrap();
    cfg
}

#[test]
fn staged_commands_match_one_shot_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path());
    let cfg = cfg.to_str().unwrap();
    let staged = dir.path().join("staged");
    let staged_s = staged.to_str().unwrap();

    let encoded = randrnn(&["encode", "--config", cfg, "--out", staged_s]);
    assert_eq!(encoded.lines().count(), 2 * 2 * 2, "{encoded}");
    randrnn(&["train", "--config", cfg, "--out", staged_s]);
    assert!(staged.join("models/drawn/seed4/depth_L5.svm").is_file());
    let eval = randrnn(&["evaluate", "--config", cfg, "--out", staged_s]);
    assert!(
        eval.starts_with("split,seed,stream,level,top1,top3,top5\n"),
        "{eval}"
    );
    randrnn(&["fuse", "--config", cfg, "--out", staged_s]);

    let report = randrnn(&["report", "--config", cfg]);
    assert!(report.contains("rgbd"), "{report}");
    let one_shot = dir.path().join("out/report");
    for name in ["results.csv", "summary.csv", "reseed.csv", "report.txt"] {
        assert_eq!(
            fs::read(staged.join("report").join(name)).unwrap(),
            fs::read(one_shot.join(name)).unwrap(),
            "{name}"
        );
    }
    assert!(one_shot
        .join("confusion_drawn_seed3_rgbd_fused.csv")
        .is_file());
    assert!(dir
        .path()
        .join("out/scores/roles/seed3/fusion_weights.csv")
        .is_file());
}

#[test]
fn split_seed_and_level_flags_narrow_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path());
    randrnn(&[
        "report",
        "--config",
        cfg.to_str().unwrap(),
        "--split",
        "roles",
        "--seed",
        "9",
        "--levels",
        "5",
    ]);
    let results = fs::read_to_string(dir.path().join("out/report/results.csv")).unwrap();
    let rows: Vec<&str> = results.lines().skip(1).collect();
    assert!(rows.iter().all(|r| r.starts_with("roles,9,")), "{results}");
    assert!(!results.contains(",L2,"));
    assert!(results.contains(",L5,"));
}

#[test]
fn stability_and_ablation_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path());
    let cfg = cfg.to_str().unwrap();
    let stab = randrnn(&["stability", "--config", cfg, "--runs", "2"]);
    assert!(
        stab.starts_with("stream,level,mean,std,seed3,seed4\n"),
        "{stab}"
    );
    let abl = randrnn(&["ablate-pooling", "--config", cfg, "--split", "roles"]);
    assert!(
        abl.starts_with("stream,level,random,max,average\n"),
        "{abl}"
    );
    assert!(dir.path().join("out/pooling_ablation.csv").is_file());
}

#[test]
fn bad_level_flag_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path());
    let out = Command::new(env!("CARGO_BIN_EXE_randrnn"))
        .args(["report", "--config", cfg.to_str().unwrap(), "--levels", "9"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("outside 1..=7"));
}

#[test]
fn colorize_writes_normal_tensors() {
    let dir = tempfile::tempdir().unwrap();
    let png = dir.path().join("frame.png");
    let (w, h) = (40u32, 30u32);
    let img = image::ImageBuffer::from_fn(w, h, |u, v| {
        // A tilted plane with one missing pixel.
        let z = if (u, v) == (10, 10) {
            0
        } else {
            1000 + 5 * u + 3 * v
        };
        image::Luma([z as u16])
    });
    img.save(&png).unwrap();
    let out = dir.path().join("normals");
    randrnn(&[
        "colorize",
        "--input",
        png.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let t = read_tensor(out.join("frame.npy")).unwrap();
    assert_eq!(t.shape(), &[3, 224, 224]);
    assert!(t.data().iter().all(|v| v.is_finite()));
}
