//! Central finite differences against the analytic gradient.
//!
//! Numeric derivatives are taken with the discrete decisions of the base pass
//! frozen: the automask, the argmin routing, validity, the bilinear cell of
//! every sample and the sign of every L1 residual. The comparison therefore
//! never straddles a cell crossing or a gate flip, where the objective is only
//! piecewise smooth.

use rand::seq::index::sample;
use serde::Serialize;

use crate::error::Result;
use crate::losses::LossConfig;
use crate::rng::Rng;
use crate::types::ParamTag;

use super::objective::evaluate;
use super::{forward_backward, IntrinsicsParam, SceneState};

/// Denominator floor of the relative error, below which gradients count as zero.
pub const REL_ERROR_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GradcheckSubset {
    /// Number of random disparity logits to probe.
    pub disparity_samples: usize,
    pub poses: bool,
    pub intrinsics: bool,
}

impl Default for GradcheckSubset {
    fn default() -> Self {
        Self {
            disparity_samples: 200,
            poses: true,
            intrinsics: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GradientEntry {
    pub tag: ParamTag,
    /// Support index for poses, 0 otherwise.
    pub block: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub entries: Vec<GradientEntry>,
    pub max_rel_error: f64,
    pub worst: Option<GradientEntry>,
}

impl GradcheckReport {
    pub fn max_for(&self, tag: ParamTag) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.tag == tag)
            .map(|e| e.rel_error)
            .fold(0.0, f64::max)
    }
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERROR_FLOOR)
}

enum Slot {
    Disparity(usize),
    Pose(usize, usize),
    Intrinsics(usize),
}

fn value_mut<'a>(state: &'a mut SceneState, slot: &Slot) -> &'a mut f64 {
    match *slot {
        Slot::Disparity(i) => &mut state.disparity.values_mut()[i],
        Slot::Pose(k, i) => &mut state.supports[k].pose.values_mut()[i],
        Slot::Intrinsics(i) => match &mut state.intrinsics {
            IntrinsicsParam::Learned(b) => &mut b.values_mut()[i],
            IntrinsicsParam::Fixed(_) => unreachable!("fixed intrinsics are never probed"),
        },
    }
}

pub fn gradcheck(
    state: &mut SceneState,
    cfg: &LossConfig,
    subset: GradcheckSubset,
    step: f64,
    rng: &mut Rng,
) -> Result<GradcheckReport> {
    let base = forward_backward(state, cfg)?;
    let gates = base.gates;

    let mut slots = Vec::new();
    let n = state.disparity.len();
    let mut picks = sample(rng, n, subset.disparity_samples.min(n)).into_vec();
    picks.sort_unstable();
    slots.extend(picks.into_iter().map(Slot::Disparity));
    if subset.poses {
        for k in 0..state.supports.len() {
            slots.extend((0..6).map(|i| Slot::Pose(k, i)));
        }
    }
    if subset.intrinsics && matches!(state.intrinsics, IntrinsicsParam::Learned(_)) {
        slots.extend((0..4).map(Slot::Intrinsics));
    }

    let mut entries = Vec::with_capacity(slots.len());
    for slot in &slots {
        let (tag, block, index, analytic) = match *slot {
            Slot::Disparity(i) => (ParamTag::Disparity, 0, i, state.disparity.grads()[i]),
            Slot::Pose(k, i) => (ParamTag::Pose, k, i, state.supports[k].pose.grads()[i]),
            Slot::Intrinsics(i) => match &state.intrinsics {
                IntrinsicsParam::Learned(b) => (ParamTag::Intrinsics, 0, i, b.grads()[i]),
                IntrinsicsParam::Fixed(_) => unreachable!(),
            },
        };
        let original = *value_mut(state, slot);
        *value_mut(state, slot) = original + step;
        let plus = evaluate(state, cfg, Some(&gates), false)?.loss;
        *value_mut(state, slot) = original - step;
        let minus = evaluate(state, cfg, Some(&gates), false)?.loss;
        *value_mut(state, slot) = original;
        let numeric = (plus - minus) / (2.0 * step);
        entries.push(GradientEntry {
            tag,
            block,
            index,
            analytic,
            numeric,
            rel_error: relative_error(analytic, numeric),
        });
    }
    let worst = entries
        .iter()
        .copied()
        .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error));
    Ok(GradcheckReport {
        max_rel_error: worst.map_or(0.0, |w| w.rel_error),
        worst,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose;
    use crate::types::Image;
    use rand::Rng as _;

    fn smooth_image(rng: &mut Rng, h: usize, w: usize) -> Image {
        let phase: [f64; 6] = std::array::from_fn(|_| rng.random_range(0.0..std::f64::consts::TAU));
        Image::from_fn(h, w, 3, |v, u, c| {
            let (x, y) = (u as f64, v as f64);
            0.5 + 0.2 * (0.7 * x + 0.3 * y + phase[c]).sin() + 0.2 * (0.4 * y - 0.5 * x + phase[c + 3]).cos()
        })
        .unwrap()
    }

    fn random_state(seed: u64) -> SceneState {
        let mut rng = Rng::new(seed);
        let (h, w) = (16, 24);
        let target = smooth_image(&mut rng, h, w);
        let supports = vec![(-1, smooth_image(&mut rng, h, w)), (1, smooth_image(&mut rng, h, w))];
        let mut state = SceneState::new(target, supports).unwrap();
        let poses: Vec<Pose> = (0..2)
            .map(|_| {
                Pose::new(
                    std::array::from_fn(|_| rng.random_range(-0.05..0.05)),
                    std::array::from_fn(|_| rng.random_range(-0.05..0.05)),
                )
            })
            .collect();
        state = state.with_poses(&poses).unwrap();
        for r in state.disparity.values_mut() {
            *r = rng.random_range(-1.5..1.5);
        }
        state.depth_range = crate::types::DepthRange::new(0.5, 20.0).unwrap();
        state
    }

    #[test]
    fn full_objective_gradients_agree() {
        let cfg = LossConfig::default();
        let mut state = random_state(1);
        let report = gradcheck(&mut state, &cfg, GradcheckSubset::default(), 1e-5, &mut Rng::new(9)).unwrap();
        assert!(report.max_rel_error < 1e-4, "worst {:?}", report.worst);
        assert_eq!(report.entries.len(), 200 + 12 + 4);
    }

    #[test]
    fn smoothness_only_gradients_agree() {
        // alpha = 1 with identical supports still routes through the warp; a
        // pure smoothness objective needs the photometric weight removed, which
        // the gate does when nothing is retained. Use a tiny photometric share
        // dominated by smoothness instead.
        let cfg = LossConfig {
            smoothness_weight: 1e3,
            ..Default::default()
        };
        let mut state = random_state(2);
        let subset = GradcheckSubset {
            disparity_samples: 200,
            poses: false,
            intrinsics: false,
        };
        let report = gradcheck(&mut state, &cfg, subset, 1e-5, &mut Rng::new(3)).unwrap();
        assert!(report.max_rel_error < 1e-4, "worst {:?}", report.worst);
    }

    #[test]
    fn constant_images_have_zero_photometric_gradient() {
        let flat = Image::filled(16, 24, 3, 0.4).unwrap();
        let moved = Image::filled(16, 24, 3, 0.6).unwrap();
        let mut state = SceneState::new(flat, vec![(1, moved)])
            .unwrap()
            .with_poses(&[Pose::new([0.01, 0.0, 0.02], [0.1, 0.0, 0.0])])
            .unwrap();
        // Warped and unwarped losses tie everywhere; keep every pixel to expose
        // the photometric term.
        let cfg = LossConfig {
            smoothness_weight: 0.0,
            ..Default::default()
        };
        let base = forward_backward(&mut state, &cfg);
        assert!(matches!(base, Err(crate::Error::DegenerateBatch)));
        let gates = super::super::Gates {
            keep: vec![true; 384],
            argmin: vec![Some(0); 384],
            cells: vec![vec![
                crate::geometry::SampleCell {
                    x0: 0,
                    y0: 0,
                    fixed_u: None,
                    fixed_v: None
                };
                384
            ]],
            in_front: vec![vec![true; 384]],
            l1_signs: vec![vec![-1.0; 384 * 3]],
        };
        state.zero_grad();
        evaluate(&mut state, &cfg, Some(&gates), true).unwrap();
        assert!(state.disparity.grads().iter().all(|&g| g == 0.0));
        assert!(state.supports[0].pose.grads().iter().all(|&g| g == 0.0));
        let mut probe = state.clone();
        probe.supports[0].pose.values_mut()[3] += 1e-3;
        let moved_loss = evaluate(&mut probe, &cfg, Some(&gates), false).unwrap().loss;
        let base_loss = evaluate(&mut state, &cfg, Some(&gates), false).unwrap().loss;
        assert_eq!(moved_loss, base_loss);
    }
}
