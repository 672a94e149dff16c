use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use randrnn::depth::{
    colorize_depth, load_depth_png, CameraIntrinsics, ResizeMode, DEFAULT_DEPTH_SCALE,
};
use randrnn::pipeline::{
    parse_level_list, pooling_ablation, reseed_stability, run_experiment, Pipeline, RunConfig,
    RunReport,
};
use randrnn::tensor_io::write_tensor;

#[derive(Parser)]
#[command(
    name = "randrnn",
    version,
    about = "RGB-D recognition with random recursive networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn depth PNGs into standardized surface-normal tensors.
    Colorize(ColorizeArgs),
    /// Preprocess and encode every configured level into the feature cache.
    Encode(RunArgs),
    /// Train per-level one-vs-rest SVMs and save them.
    Train(RunArgs),
    /// Score the test role with saved models and write score CSVs.
    Evaluate(RunArgs),
    /// Fuse saved scores across levels and modalities and write the report.
    Fuse(RunArgs),
    /// Run random, max and average pooling with the same network seeds.
    AblatePooling(RunArgs),
    /// Rerun with several master seeds and report the spread per level.
    Stability {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 5)]
        runs: usize,
    },
    /// Run every stage in memory and write the report.
    Report(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Split id, or `all`.
    #[arg(long, default_value = "all")]
    split: String,
    /// Replace the configured seeds with this one.
    #[arg(long)]
    seed: Option<u64>,
    /// Levels to run, e.g. `1-7` or `2,5`.
    #[arg(long)]
    levels: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Resize {
    Square,
    ShortSide,
}

#[derive(Args)]
struct ColorizeArgs {
    /// A depth PNG or a directory of them.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Meters per raw depth unit.
    #[arg(long, default_value_t = DEFAULT_DEPTH_SCALE)]
    depth_scale: f32,
    #[arg(long, default_value_t = 570.3)]
    fx: f64,
    #[arg(long, default_value_t = 570.3)]
    fy: f64,
    /// Principal point; defaults to the image center.
    #[arg(long)]
    cx: Option<f64>,
    #[arg(long)]
    cy: Option<f64>,
    #[arg(long, value_enum, default_value_t = Resize::Square)]
    resize: Resize,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)
            .with_context(|| format!("loading {}", self.config.display()))?;
        if let Some(out) = &self.out {
            cfg.paths.output = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.seeds = vec![seed];
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        if let Some(levels) = &self.levels {
            cfg.restrict_levels(&parse_level_list(levels)?)?;
        }
        if self.split != "all" {
            cfg.select_split(&self.split)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Colorize(args) => colorize(&args),
        Command::Encode(args) => {
            let p = Pipeline::new(args.load()?)?;
            for fs in p.encode_all()? {
                println!(
                    "{} L{}: {} samples x {} {}",
                    fs.modality,
                    fs.level,
                    fs.features.nrows(),
                    fs.features.ncols(),
                    match (&fs.cache_dir, fs.from_cache) {
                        (Some(d), true) => format!("(cached in {})", d.display()),
                        (Some(d), false) => format!("-> {}", d.display()),
                        (None, _) => "(not cached)".into(),
                    }
                );
            }
            Ok(())
        }
        Command::Train(args) => {
            let p = Pipeline::new(args.load()?)?;
            for path in p.train_all()? {
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::Evaluate(args) => {
            let p = Pipeline::new(args.load()?)?;
            let rows = p.evaluate_all()?;
            let topk = &p.config().report.topk;
            print!("split,seed,stream,level");
            for k in topk {
                print!(",top{k}");
            }
            println!();
            for r in rows {
                print!("{},{},{},{}", r.split, r.seed, r.stream.as_str(), r.level);
                for v in r.topk {
                    print!(",{}", v.map(|x| format!("{x:.4}")).unwrap_or_default());
                }
                println!();
            }
            Ok(())
        }
        Command::Fuse(args) => {
            let cfg = args.load()?;
            let report = Pipeline::new(cfg.clone())?.fuse_all()?;
            finish(&report, &cfg.paths.output.join("report"))
        }
        Command::Report(args) => {
            let cfg = args.load()?;
            let report = run_experiment(&cfg)?;
            finish(&report, &cfg.paths.output.join("report"))
        }
        Command::AblatePooling(args) => {
            let cfg = args.load()?;
            let table = pooling_ablation(&cfg)?;
            let path = cfg.paths.output.join("pooling_ablation.csv");
            write(&path, &table.to_csv())?;
            print!("{}", table.to_csv());
            Ok(())
        }
        Command::Stability { run, runs } => {
            let cfg = run.load()?;
            let mut stab_cfg = cfg.clone();
            stab_cfg.paths.output = cfg.paths.output.join("stability");
            let table = reseed_stability(&stab_cfg, runs)?;
            let path = cfg.paths.output.join("stability.csv");
            write(&path, &table.to_csv())?;
            print!("{}", table.to_csv());
            Ok(())
        }
    }
}

fn finish(report: &RunReport, dir: &Path) -> Result<()> {
    print!("{}", report.text());
    println!("\nreport written to {}", dir.display());
    Ok(())
}

fn write(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn colorize(args: &ColorizeArgs) -> Result<()> {
    let inputs: Vec<PathBuf> = if args.input.is_dir() {
        let mut v: Vec<PathBuf> = std::fs::read_dir(&args.input)
            .with_context(|| format!("reading {}", args.input.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| e.eq_ignore_ascii_case("png"))
            })
            .collect();
        v.sort();
        v
    } else {
        vec![args.input.clone()]
    };
    if inputs.is_empty() {
        bail!("no PNG files in {}", args.input.display());
    }
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let mode = match args.resize {
        Resize::Square => ResizeMode::Square,
        Resize::ShortSide => ResizeMode::ShortSide,
    };
    for input in inputs {
        let frame = load_depth_png(&input, args.depth_scale)?;
        let k = CameraIntrinsics::new(
            args.fx,
            args.fy,
            args.cx.unwrap_or((frame.width() as f64 - 1.0) / 2.0),
            args.cy.unwrap_or((frame.height() as f64 - 1.0) / 2.0),
        )?;
        let t = colorize_depth(&frame, &k, mode)
            .with_context(|| format!("colorizing {}", input.display()))?;
        let stem = input
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("depth");
        let dst = args.out.join(format!("{stem}.npy"));
        write_tensor(&t, &dst)?;
        println!("{} -> {}", input.display(), dst.display());
    }
    Ok(())
}
