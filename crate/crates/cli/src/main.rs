mod benchmark;
mod evaluate;
mod gradcheck;
mod optimize;
mod preview;
mod synth;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use photodepth::io::RunConfig;
use photodepth::Error;

/// Self-supervised photometric depth by direct optimization.
#[derive(Parser, Debug)]
#[command(name = "photodepth", version)]
struct Cli {
    /// Seed for every random draw of the run.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (defaults to all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// TOML run configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render an analytic plane scene with exact ground truth.
    Synth(synth::Args),
    /// Recover depth, poses and optionally intrinsics for a manifest.
    Optimize(optimize::Args),
    /// Align predictions to ground truth and report depth metrics.
    Eval(evaluate::Args),
    /// Compare analytic gradients with finite differences on synthetic scenes.
    Gradcheck(gradcheck::Args),
    /// Write aspect-ratio, flip and jitter augmentations of one image.
    AugmentPreview(preview::Args),
    /// Rank and improvement across metric files of several methods.
    Benchmark(benchmark::Args),
}

/// A check that ran to completion but failed its numerical tolerance.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct NumericalFailure(pub String);

pub struct RunContext {
    pub seed: u64,
    pub config: RunConfig,
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => Ok(RunConfig::load(p)?),
        None => Ok(RunConfig::default()),
    }
}

fn run(cli: Cli) -> Result<()> {
    let ctx = RunContext {
        seed: cli.seed,
        config: load_config(cli.config.as_deref())?,
    };
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = cli.threads {
            b = b.num_threads(n);
        }
        b.build().context("building the worker pool")?
    };
    pool.install(|| match cli.command {
        Command::Synth(a) => synth::run(&ctx, a),
        Command::Optimize(a) => optimize::run(&ctx, a),
        Command::Eval(a) => evaluate::run(&ctx, a),
        Command::Gradcheck(a) => gradcheck::run(&ctx, a),
        Command::AugmentPreview(a) => preview::run(&ctx, a),
        Command::Benchmark(a) => benchmark::run(&ctx, a),
    })
}

/// 2 for bad data, 3 for numerical failure.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<NumericalFailure>().is_some() {
            return 3;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Numerical { .. } | Error::DegenerateBatch | Error::DegenerateAlignment(_) => 3,
                _ => 2,
            };
        }
    }
    2
}

/// 1 for usage errors; `--help` and `--version` exit cleanly.
fn usage_code(err: &clap::Error) -> u8 {
    u8::from(err.use_stderr())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(usage_code(&e));
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use std::path::Path;

    use photodepth::io::{read_image, read_pfm, write_png, SequenceManifest};
    use photodepth::optim::SceneState;
    use photodepth::Image;

    use super::*;

    fn call(args: &[&str]) -> Result<()> {
        let cli = Cli::try_parse_from(std::iter::once("photodepth").chain(args.iter().copied()))?;
        run(cli)
    }

    fn s(p: &Path) -> &str {
        p.to_str().unwrap()
    }

    fn synth_small(dir: &Path, extra: &[&str]) {
        let mut args = vec!["synth", "--out", s(dir), "--height", "32", "--width", "48"];
        args.extend_from_slice(extra);
        call(&args).unwrap();
    }

    #[test]
    fn usage_errors_exit_one_and_help_exits_zero() {
        let e = Cli::try_parse_from(["photodepth", "optimize", "--bogus"]).unwrap_err();
        assert_eq!(usage_code(&e), 1);
        let e = Cli::try_parse_from(["photodepth", "eval"]).unwrap_err();
        assert_eq!(usage_code(&e), 1);
        let e = Cli::try_parse_from(["photodepth", "--help"]).unwrap_err();
        assert_eq!(usage_code(&e), 0);
    }

    #[test]
    fn missing_input_exits_two() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.txt");
        let err = call(&["optimize", "--manifest", s(&missing), "--out", s(dir.path())]).unwrap_err();
        assert_eq!(exit_code(&err), 2);
        let cfg = dir.path().join("bad.toml");
        std::fs::write(&cfg, "[optim]\nlearning_rate = -1.0\n").unwrap();
        let err = call(&["--config", s(&cfg), "gradcheck"]).unwrap_err();
        assert_eq!(exit_code(&err), 2);
    }

    #[test]
    fn gradcheck_passes_and_tolerance_failure_exits_three() {
        call(&["gradcheck", "--samples", "30"]).unwrap();
        let err = call(&["gradcheck", "--samples", "30", "--tolerance", "1e-30"]).unwrap_err();
        assert_eq!(exit_code(&err), 3);
    }

    #[test]
    fn zero_iterations_write_the_initialization() {
        let dir = tempfile::tempdir().unwrap();
        let (scene, out) = (dir.path().join("scene"), dir.path().join("out"));
        synth_small(&scene, &[]);
        let manifest_path = scene.join("manifest.txt");
        call(&[
            "optimize",
            "--manifest",
            s(&manifest_path),
            "--out",
            s(&out),
            "--iterations",
            "0",
        ])
        .unwrap();

        let manifest = SequenceManifest::read(&manifest_path).unwrap();
        let target = read_image(&manifest.target_path()).unwrap();
        let supports = manifest
            .support_paths()
            .into_iter()
            .map(|(k, p)| (k, read_image(&p).unwrap()))
            .collect();
        let init = SceneState::new(target, supports)
            .unwrap()
            .with_depth_range(manifest.depth_range.unwrap());
        let expected = init.depth().unwrap();
        let got = read_pfm(&out.join("depth.pfm")).unwrap();
        assert_eq!((got.height, got.width), (expected.height, expected.width));
        for (g, e) in got.values.iter().zip(&expected.values) {
            // the file stores f32
            assert!((g - e).abs() <= 1e-6 * e, "{g} vs {e}");
        }
        assert!(!out.join("metrics.txt").exists());
    }

    #[test]
    fn identical_directories_score_perfectly() {
        let dir = tempfile::tempdir().unwrap();
        let scene = dir.path().join("scene");
        synth_small(&scene, &[]);
        let gt = scene.join("gt");
        let out = dir.path().join("metrics.txt");
        call(&["eval", "--pred", s(&gt), "--gt", s(&gt), "--out", s(&out)]).unwrap();
        let line = std::fs::read_to_string(&out).unwrap();
        let r = photodepth::eval::MetricsRecord::from_line(line.trim()).unwrap();
        assert_eq!(r.absrel, 0.0);
        assert_eq!(r.delta25, 100.0);
        assert_eq!(r.fscore, 100.0);
        assert_eq!(r.images, 3);
    }

    #[test]
    fn seeded_synthesis_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let render = |name: &str, seed: &str| {
            let out = dir.path().join(name);
            call(&[
                "--seed",
                seed,
                "synth",
                "--out",
                s(&out),
                "--scene",
                "random",
                "--height",
                "32",
                "--width",
                "48",
            ])
            .unwrap();
            std::fs::read(out.join("frames/frame_001.pfm")).unwrap()
        };
        let a = render("a", "7");
        assert_eq!(a, render("b", "7"));
        assert_ne!(a, render("c", "8"));
    }

    #[test]
    fn optimization_is_reproducible_across_thread_counts() {
        let dir = tempfile::tempdir().unwrap();
        let scene = dir.path().join("scene");
        synth_small(&scene, &["--learn-camera"]);
        let manifest = scene.join("manifest.txt");
        let run_with = |threads: &str| {
            let out = dir.path().join(format!("out{threads}"));
            call(&[
                "--threads",
                threads,
                "optimize",
                "--manifest",
                s(&manifest),
                "--out",
                s(&out),
                "--learn-intrinsics",
                "--iterations",
                "20",
                "--lr",
                "0.05",
            ])
            .unwrap();
            (
                std::fs::read(out.join("depth.pfm")).unwrap(),
                std::fs::read_to_string(out.join("camera.txt")).unwrap(),
            )
        };
        assert_eq!(run_with("1"), run_with("3"));
    }

    #[test]
    fn learned_camera_needs_the_flag() {
        let dir = tempfile::tempdir().unwrap();
        let scene = dir.path().join("scene");
        synth_small(&scene, &["--learn-camera"]);
        let manifest = scene.join("manifest.txt");
        let out = dir.path().join("out");
        let err = call(&[
            "optimize",
            "--manifest",
            s(&manifest),
            "--out",
            s(&out),
            "--iterations",
            "1",
        ])
        .unwrap_err();
        assert_eq!(exit_code(&err), 2);
    }

    #[test]
    fn benchmark_ranks_methods() {
        let dir = tempfile::tempdir().unwrap();
        let write = |name: &str, absrel: f64, delta: f64, f: f64| {
            let p = dir.path().join(format!("{name}.txt"));
            std::fs::write(
                &p,
                format!("id=set images=1 absrel={absrel} delta25={delta} fscore={f}\n"),
            )
            .unwrap();
            p
        };
        let a = write("a", 10.0, 90.0, 80.0);
        let b = write("b", 12.0, 90.0, 85.0);
        let c = write("c", 10.0, 85.0, 70.0);
        let csv = dir.path().join("table.csv");
        call(&["benchmark", s(&a), s(&b), s(&c), "--csv", s(&csv)]).unwrap();
        let text = std::fs::read_to_string(&csv).unwrap();
        let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
        let rank = |i: usize| rows[i][1].parse::<f64>().unwrap();
        let imp = |i: usize| rows[i][2].parse::<f64>().unwrap();
        assert_eq!(rows[0][0], "a");
        assert!((rank(0) - 5.0 / 3.0).abs() < 1e-12);
        assert!((rank(1) - 11.0 / 6.0).abs() < 1e-12);
        assert!((rank(2) - 2.5).abs() < 1e-12);
        assert_eq!(imp(0), 0.0);
        assert!(imp(1) < 0.0 && imp(2) < imp(1));

        let err = call(&["benchmark", s(&a), s(&b), "--baseline", "zzz"]).unwrap_err();
        assert_eq!(exit_code(&err), 2);
    }

    #[test]
    fn augment_preview_writes_stride_aligned_images() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.png");
        let img = Image::from_fn(96, 128, 3, |v, u, c| ((v * 3 + u * 5 + c * 7) % 17) as f64 / 16.0).unwrap();
        write_png(&input, &img).unwrap();
        let out = dir.path().join("aug");
        call(&[
            "--seed",
            "3",
            "augment-preview",
            "--input",
            s(&input),
            "--out",
            s(&out),
            "--count",
            "4",
        ])
        .unwrap();
        let log = std::fs::read_to_string(out.join("augmentations.txt")).unwrap();
        assert_eq!(log.lines().filter(|l| !l.starts_with('#')).count(), 4);
        for i in 0..4 {
            let a = read_image(&out.join(format!("aug_{i:03}.png"))).unwrap();
            assert_eq!(a.height() % 32, 0);
            assert_eq!(a.width() % 32, 0);
        }
    }
}
