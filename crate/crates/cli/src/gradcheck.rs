use anyhow::{ensure, Result};
use clap::Args as ClapArgs;
use photodepth::optim::{gradcheck, GradcheckSubset};
use photodepth::synth::perturbed_synthetic_state;
use photodepth::{ParamTag, Rng};

use crate::{NumericalFailure, RunContext};

#[derive(ClapArgs, Debug)]
pub struct Args {
    /// Number of random scenes.
    #[arg(long, default_value_t = 1)]
    pub scenes: u64,
    #[arg(long, default_value_t = 16)]
    pub height: usize,
    #[arg(long, default_value_t = 24)]
    pub width: usize,
    /// Disparity logits probed per scene.
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}

pub fn run(ctx: &RunContext, args: Args) -> Result<()> {
    ensure!(args.scenes > 0, "--scenes must be positive");
    let subset = GradcheckSubset {
        disparity_samples: args.samples,
        poses: true,
        intrinsics: true,
    };
    let root = Rng::new(ctx.seed);
    let mut worst: f64 = 0.0;
    for i in 0..args.scenes {
        let mut rng = root.fork(i);
        let mut state = perturbed_synthetic_state(&mut rng, args.height, args.width)?;
        let report = gradcheck(&mut state, &ctx.config.loss, subset, args.step, &mut rng)?;
        println!(
            "scene={i} entries={} disparity={:.3e} pose={:.3e} intrinsics={:.3e} max={:.3e}",
            report.entries.len(),
            report.max_for(ParamTag::Disparity),
            report.max_for(ParamTag::Pose),
            report.max_for(ParamTag::Intrinsics),
            report.max_rel_error
        );
        worst = worst.max(report.max_rel_error);
    }
    println!("max_rel_error={worst:.6e} tolerance={:.1e}", args.tolerance);
    if worst < args.tolerance {
        Ok(())
    } else {
        Err(NumericalFailure(format!("max relative error {worst:.3e} exceeds {:.1e}", args.tolerance)).into())
    }
}
