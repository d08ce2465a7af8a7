use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args as ClapArgs;
use photodepth::augment::{ar_aug, flip_and_jitter, FrameSet};
use photodepth::io::{read_camera, read_image, write_png};
use photodepth::optim::FOCAL_PRIOR;
use photodepth::{Camera, Rng};

use crate::RunContext;

#[derive(ClapArgs, Debug)]
pub struct Args {
    /// PNG or PFM image.
    #[arg(long)]
    pub input: PathBuf,
    /// Camera record; defaults to the focal prior with a centred principal point.
    #[arg(long)]
    pub camera: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub count: u64,
}

pub fn run(ctx: &RunContext, args: Args) -> Result<()> {
    let image = read_image(&args.input)?;
    let (h, w) = (image.height(), image.width());
    let camera = match &args.camera {
        Some(p) => read_camera(p)?,
        None => {
            let f = FOCAL_PRIOR * w as f64;
            Camera::new(f, f, (w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0, w, h)?
        }
    };
    let cfg = &ctx.config.augment;
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let root = Rng::new(ctx.seed);
    let mut log = String::from("# sample ratio_w:h fraction out_h out_w flipped fx fy cx cy\n");
    for i in 0..args.count {
        let mut rng = root.fork(i);
        let ar = ar_aug(&image, &camera, None, &mut rng, cfg)?;
        let set = FrameSet {
            target: ar.image,
            supports: Vec::new(),
            camera: Some(ar.camera),
            depth: None,
        };
        let (set, record) = flip_and_jitter(&set, &mut rng, cfg);
        write_png(&args.out.join(format!("aug_{i:03}.png")), &set.target)?;
        let cam = set.camera.expect("camera is carried through augmentation");
        let (ratio, fraction) = ar.crop.map_or(("none".to_string(), 1.0), |c| {
            (format!("{}:{}", c.ratio.1, c.ratio.0), c.fraction)
        });
        writeln!(
            log,
            "{i} {ratio} {fraction:.4} {} {} {} {:.4} {:.4} {:.4} {:.4}",
            set.target.height(),
            set.target.width(),
            record.flipped,
            cam.fx,
            cam.fy,
            cam.cx,
            cam.cy
        )?;
    }
    let path = args.out.join("augmentations.txt");
    std::fs::write(&path, &log).with_context(|| format!("writing {}", path.display()))?;
    print!("{log}");
    Ok(())
}
