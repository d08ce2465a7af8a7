use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args as ClapArgs;
use photodepth::eval::{evaluate_dataset, Alignment};
use photodepth::io::read_camera;
use photodepth::Error;

use crate::RunContext;

#[derive(ClapArgs, Debug)]
pub struct Args {
    /// Directory of predicted `.pfm` depth maps.
    #[arg(long)]
    pub pred: PathBuf,
    /// Directory of ground-truth `.pfm` depth maps with matching names.
    #[arg(long)]
    pub gt: PathBuf,
    /// Camera record used to back-project point clouds; defaults to
    /// `camera.txt` in the ground-truth directory or its parent.
    #[arg(long)]
    pub camera: Option<PathBuf>,
    /// lsq, median or none; overrides `eval.alignment`.
    #[arg(long)]
    pub align: Option<Alignment>,
    /// Ignore ground truth deeper than this.
    #[arg(long)]
    pub depth_cap: Option<f64>,
    /// Write the dataset-level metrics line here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn find_camera(args: &Args) -> Result<PathBuf> {
    if let Some(p) = &args.camera {
        return Ok(p.clone());
    }
    let candidates = [
        Some(args.gt.join("camera.txt")),
        args.gt.parent().map(|p| p.join("camera.txt")),
    ];
    candidates
        .into_iter()
        .flatten()
        .find(|p| p.is_file())
        .ok_or_else(|| Error::InvalidInput("no camera record found; pass --camera".into()).into())
}

pub fn run(ctx: &RunContext, args: Args) -> Result<()> {
    let mut cfg = ctx.config.eval.clone();
    if let Some(a) = args.align {
        cfg.alignment = a;
    }
    if args.depth_cap.is_some() {
        cfg.depth_cap = args.depth_cap;
    }
    cfg.seed = ctx.seed;
    let cam = read_camera(&find_camera(&args)?)?;
    let (mean, per_image) = evaluate_dataset(&args.pred, &args.gt, &cam, &cfg)?;
    for r in &per_image {
        println!("{}", r.to_line());
    }
    println!("{}", mean.to_line());
    println!(
        "AbsRel={:.6} Delta1.25={:.6} FScore={:.6} images={}",
        mean.absrel, mean.delta25, mean.fscore, mean.images
    );
    if let Some(out) = &args.out {
        std::fs::write(out, format!("{}\n", mean.to_line())).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}
