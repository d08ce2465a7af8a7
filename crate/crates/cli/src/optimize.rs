use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args as ClapArgs;
use photodepth::eval::evaluate_pair;
use photodepth::io::{
    colorize_depth, read_image, read_pfm, read_poses, write_camera, write_loss_trace, write_pfm, write_png,
    write_poses, CameraRecord, SequenceManifest,
};
use photodepth::optim::{solve, SceneState};
use photodepth::{Error, Pose};

use crate::RunContext;

#[derive(ClapArgs, Debug)]
pub struct Args {
    /// Sequence manifest.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Estimate intrinsics jointly instead of using the manifest camera.
    #[arg(long)]
    pub learn_intrinsics: bool,
    /// Hold poses at the manifest's pose file instead of optimizing them.
    #[arg(long)]
    pub fixed_poses: bool,
    /// Overrides `optim.iterations`.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Overrides `optim.learning_rate`.
    #[arg(long)]
    pub lr: Option<f64>,
}

pub fn run(ctx: &RunContext, args: Args) -> Result<()> {
    let manifest = SequenceManifest::read(&args.manifest)?;
    manifest.validate()?;
    let mut cfg = ctx.config.clone();
    if let Some(n) = args.iterations {
        cfg.optim.iterations = n;
    }
    if let Some(lr) = args.lr {
        cfg.optim.learning_rate = lr;
    }
    cfg.validate()?;

    let target = read_image(&manifest.target_path())?;
    let supports = manifest
        .support_paths()
        .into_iter()
        .map(|(k, p)| Ok((k, read_image(&p)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut state = SceneState::new(target, supports)?;
    if let Some(range) = manifest.depth_range {
        state = state.with_depth_range(range);
    }

    let known_camera = match manifest.camera {
        CameraRecord::Known(cam) => Some(cam),
        CameraRecord::Learn => None,
    };
    if !args.learn_intrinsics {
        match known_camera {
            Some(cam) => state = state.with_camera(cam)?,
            None => bail!(Error::Manifest(
                "manifest has `camera learn`; pass --learn-intrinsics".into()
            )),
        }
    }

    match &manifest.poses {
        Some(p) => {
            let known = read_poses(&manifest.resolve(p))?;
            let mut offsets = manifest.offsets.clone();
            offsets.sort_unstable();
            let poses = offsets
                .iter()
                .map(|k| {
                    known
                        .iter()
                        .find(|(j, _)| j == k)
                        .map(|(_, pose)| *pose)
                        .ok_or_else(|| Error::Manifest(format!("no pose for offset {k}")))
                })
                .collect::<std::result::Result<Vec<Pose>, _>>()?;
            state = state.with_poses(&poses)?;
        }
        None if args.fixed_poses => bail!(Error::Manifest("--fixed-poses needs a `poses` record".into())),
        None => {}
    }
    state = state.with_fixed_poses(args.fixed_poses);

    let (result, _) = solve(state, &cfg.optim, &cfg.loss)?;

    let out = &args.out;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_pfm(&out.join("depth.pfm"), &result.depth)?;
    write_png(&out.join("depth.png"), &colorize_depth(&result.depth)?)?;
    let poses: Vec<(i32, Pose)> = result
        .offsets
        .iter()
        .copied()
        .zip(result.poses.iter().copied())
        .collect();
    write_poses(&out.join("poses.txt"), &poses)?;
    write_camera(&out.join("camera.txt"), &result.camera)?;
    write_loss_trace(&out.join("loss.csv"), &result)?;

    let fmt = |v: Option<&f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.6e}"));
    println!(
        "iterations={} loss_first={} loss_last={} fx={:.4} fy={:.4} cx={:.4} cy={:.4}",
        result.loss_trace.len(),
        fmt(result.loss_trace.first()),
        fmt(result.loss_trace.last()),
        result.camera.fx,
        result.camera.fy,
        result.camera.cx,
        result.camera.cy
    );

    if let Some(gt) = &manifest.gt_depth {
        let gt = read_pfm(&manifest.resolve(gt))?;
        let cam = known_camera.unwrap_or(result.camera);
        let mut eval_cfg = cfg.eval.clone();
        eval_cfg.seed = ctx.seed;
        let record = match evaluate_pair("target", &result.depth, &gt, &cam, &eval_cfg) {
            Ok(r) => r,
            // a flat depth map (e.g. zero iterations) has nothing to align
            Err(Error::DegenerateAlignment(why)) => {
                println!("metrics skipped: {why}");
                return Ok(());
            }
            Err(e) => return Err(e.into()),
        };
        let line = record.to_line();
        println!("{line}");
        let path = out.join("metrics.txt");
        std::fs::write(&path, format!("{line}\n")).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
