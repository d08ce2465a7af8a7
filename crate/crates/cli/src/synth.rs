use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args as ClapArgs, ValueEnum};
use photodepth::io::{
    write_camera, write_mask_png, write_pfm, write_pfm_image, write_png, write_poses, CameraRecord, SequenceManifest,
};
use photodepth::synth::{
    add_dynamic_occluder, camera_locked_occluder, make_scene, occlusion_masks, render_sequence, transient_occluder,
    SceneSpec,
};
use photodepth::Rng;

use crate::RunContext;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SceneKind {
    /// Near plane over the lower image, far plane behind.
    TwoPlane,
    /// One plane facing the camera.
    Fronto,
    /// Two planes and a camera that never moves.
    Static,
    /// Random slanted planes and motion.
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OccluderKind {
    None,
    /// Visible only in the earliest support frame.
    Transient,
    /// Moves with the camera through every frame.
    CameraLocked,
}

#[derive(ClapArgs, Debug)]
pub struct Args {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = SceneKind::TwoPlane)]
    pub scene: SceneKind,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 96)]
    pub width: usize,
    /// Plane depth for the fronto scene.
    #[arg(long, default_value_t = 5.0)]
    pub depth: f64,
    #[arg(long, value_enum, default_value_t = OccluderKind::None)]
    pub occluder: OccluderKind,
    /// Write `camera learn` into the manifest instead of the true intrinsics.
    #[arg(long)]
    pub learn_camera: bool,
}

fn rel(p: &str) -> PathBuf {
    PathBuf::from(p)
}

pub fn run(ctx: &RunContext, args: Args) -> Result<()> {
    let rng = Rng::new(ctx.seed);
    let (h, w) = (args.height, args.width);
    let spec = match args.scene {
        SceneKind::TwoPlane => SceneSpec::two_plane(h, w),
        SceneKind::Fronto => SceneSpec::fronto_parallel(h, w, args.depth),
        SceneKind::Static => SceneSpec::static_two_plane(h, w),
        SceneKind::Random => SceneSpec::random(&mut rng.fork(1), h, w),
    };
    let mut scene = make_scene(&mut rng.fork(2), &spec)?;
    let occluder = match args.occluder {
        OccluderKind::None => None,
        OccluderKind::Transient => Some(transient_occluder(&scene)),
        OccluderKind::CameraLocked => Some(camera_locked_occluder(&scene)),
    };
    if let Some(o) = occluder {
        scene = add_dynamic_occluder(&scene, o, &mut rng.fork(3))?;
    }

    let out = &args.out;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let frames = render_sequence(&scene)?;
    let mut ordered: Vec<_> = frames.iter().collect();
    ordered.sort_by_key(|(k, _)| *k);

    let mut paths = Vec::new();
    for (i, (k, frame)) in ordered.iter().enumerate() {
        let stem = format!("frame_{i:03}");
        write_pfm_image(&out.join("frames").join(format!("{stem}.pfm")), &frame.image)?;
        write_png(&out.join("frames").join(format!("{stem}.png")), &frame.image)?;
        write_pfm(&out.join("gt").join(format!("depth_{i:03}.pfm")), &frame.gt_depth)?;
        if !scene.occluders.is_empty() {
            write_mask_png(
                &out.join("masks").join(format!("occluder_{k}.png")),
                h,
                w,
                &frame.occluder_mask,
            )?;
        }
        paths.push(rel(&format!("frames/{stem}.pfm")));
    }
    for (k, mask) in occlusion_masks(&scene)? {
        write_mask_png(&out.join("masks").join(format!("occluded_in_{k}.png")), h, w, &mask)?;
    }
    write_camera(&out.join("camera.txt"), &scene.camera)?;
    write_poses(&out.join("poses.txt"), &scene.trajectory)?;

    let target = ordered
        .iter()
        .position(|(k, _)| *k == 0)
        .expect("target frame is always rendered");
    let camera = if args.learn_camera {
        CameraRecord::Learn
    } else {
        CameraRecord::Known(scene.camera)
    };
    let mut manifest = SequenceManifest::new(out.clone(), paths, camera);
    manifest.target = target;
    manifest.offsets = scene.offsets();
    manifest.depth_range = Some(scene.depth_range);
    manifest.poses = Some(rel("poses.txt"));
    manifest.gt_depth = Some(rel(&format!("gt/depth_{target:03}.pfm")));
    manifest.validate()?;
    let manifest_path = out.join("manifest.txt");
    manifest.write(&manifest_path)?;
    report(&manifest_path, ordered.len());
    Ok(())
}

fn report(manifest: &Path, frames: usize) {
    println!("wrote {frames} frames, manifest {}", manifest.display());
}
