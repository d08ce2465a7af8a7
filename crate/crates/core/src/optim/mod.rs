//! Direct optimization of disparity, per-support poses and (optionally)
//! intrinsics against the photometric objective.

mod gradcheck;
mod objective;

pub use gradcheck::{gradcheck, relative_error, GradcheckReport, GradcheckSubset, GradientEntry, REL_ERROR_FLOOR};
pub use objective::{evaluate, Evaluation, Gates};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{intrinsics_decode, Camera, IntrinsicsRaw, Pose};
use crate::losses::{identity_min_loss, LossConfig};
use crate::types::{disp_to_depth, softplus_inv, DepthField, DepthRange, DisparityField, Image, ParamBlock, ParamTag};

/// Focal length prior (fraction of the image width) used to initialize learned intrinsics.
pub const FOCAL_PRIOR: f64 = 0.58;

#[derive(Clone, Debug)]
pub struct SupportFrame {
    /// Temporal offset `k` of this frame relative to the target.
    pub offset: i32,
    pub image: Image,
    /// Axis-angle rotation then translation, target → support.
    pub pose: ParamBlock,
}

impl SupportFrame {
    pub fn pose(&self) -> Pose {
        Pose::from_slice(self.pose.values())
    }
}

#[derive(Clone, Debug)]
pub enum IntrinsicsParam {
    Fixed(Camera),
    /// Raw `(f_x, f_y, c_x, c_y)` decoded with softplus/sigmoid.
    Learned(ParamBlock),
}

/// Everything optimized for one target frame.
#[derive(Clone, Debug)]
pub struct SceneState {
    pub target: Image,
    pub supports: Vec<SupportFrame>,
    pub disparity: ParamBlock,
    pub intrinsics: IntrinsicsParam,
    pub depth_range: DepthRange,
    pub optimize_poses: bool,
    identity_cache: Option<(LossConfig, Vec<f64>)>,
}

impl SceneState {
    /// Disparity logits at 0, identity poses and learned intrinsics at the
    /// focal prior with a centred principal point. Supports are ordered by
    /// offset so ties in the per-pixel minimum go to the lowest offset.
    pub fn new(target: Image, supports: Vec<(i32, Image)>) -> Result<Self> {
        if supports.is_empty() {
            return Err(Error::Empty("at least one support frame is required".into()));
        }
        let mut supports = supports;
        supports.sort_by_key(|(k, _)| *k);
        for pair in supports.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(Error::InvalidInput(format!("duplicate support offset {}", pair[0].0)));
            }
        }
        let mut frames = Vec::with_capacity(supports.len());
        for (offset, image) in supports {
            if offset == 0 {
                return Err(Error::InvalidInput("support offset must be non-zero".into()));
            }
            target.ensure_same_shape(&image)?;
            frames.push(SupportFrame {
                offset,
                image,
                pose: ParamBlock::new(ParamTag::Pose, vec![0.0; 6]),
            });
        }
        let (h, w) = (target.height(), target.width());
        let prior = IntrinsicsRaw {
            raw_f: [
                softplus_inv(FOCAL_PRIOR),
                softplus_inv(FOCAL_PRIOR * w as f64 / h as f64),
            ],
            raw_c: [0.0, 0.0],
        };
        Ok(Self {
            target,
            supports: frames,
            disparity: ParamBlock::new(ParamTag::Disparity, vec![0.0; h * w]),
            intrinsics: IntrinsicsParam::Learned(ParamBlock::new(ParamTag::Intrinsics, prior.to_array().to_vec())),
            depth_range: DepthRange::default(),
            optimize_poses: true,
            identity_cache: None,
        })
    }

    pub fn with_camera(mut self, cam: Camera) -> Result<Self> {
        cam.validate()?;
        if (cam.height, cam.width) != (self.target.height(), self.target.width()) {
            return Err(Error::InvalidInput(format!(
                "camera is {}x{} but images are {}x{}",
                cam.height,
                cam.width,
                self.target.height(),
                self.target.width()
            )));
        }
        self.intrinsics = IntrinsicsParam::Fixed(cam);
        Ok(self)
    }

    pub fn with_depth_range(mut self, range: DepthRange) -> Self {
        self.depth_range = range;
        self
    }

    /// Sets poses in support order (ascending offset).
    pub fn with_poses(mut self, poses: &[Pose]) -> Result<Self> {
        if poses.len() != self.supports.len() {
            return Err(Error::InvalidInput(format!(
                "{} poses for {} supports",
                poses.len(),
                self.supports.len()
            )));
        }
        for (sf, pose) in self.supports.iter_mut().zip(poses) {
            sf.pose.values_mut().copy_from_slice(&pose.to_array());
        }
        Ok(self)
    }

    pub fn with_fixed_poses(mut self, fixed: bool) -> Self {
        self.optimize_poses = !fixed;
        self
    }

    pub fn with_disparity(mut self, disp: &DisparityField) -> Result<Self> {
        if disp.raw.len() != self.disparity.len() {
            return Err(Error::InvalidInput("disparity field does not match the target".into()));
        }
        self.disparity.values_mut().copy_from_slice(&disp.raw);
        Ok(self)
    }

    pub fn camera(&self) -> Camera {
        match &self.intrinsics {
            IntrinsicsParam::Fixed(c) => *c,
            IntrinsicsParam::Learned(b) => intrinsics_decode(
                &IntrinsicsRaw::from_slice(b.values()),
                self.target.width(),
                self.target.height(),
            ),
        }
    }

    pub fn disparity_field(&self) -> DisparityField {
        DisparityField {
            height: self.target.height(),
            width: self.target.width(),
            raw: self.disparity.values().to_vec(),
        }
    }

    pub fn depth(&self) -> Result<DepthField> {
        disp_to_depth(&self.disparity_field(), self.depth_range)
    }

    pub fn poses(&self) -> Vec<Pose> {
        self.supports.iter().map(SupportFrame::pose).collect()
    }

    pub fn zero_grad(&mut self) {
        self.disparity.zero_grad();
        for sf in &mut self.supports {
            sf.pose.zero_grad();
        }
        if let IntrinsicsParam::Learned(b) = &mut self.intrinsics {
            b.zero_grad();
        }
    }

    /// Per-pixel minimum of the unwarped photometric loss, cached per loss config.
    pub(crate) fn identity_min(&mut self, cfg: &LossConfig) -> Result<Vec<f64>> {
        if let Some((c, v)) = &self.identity_cache {
            if c == cfg {
                return Ok(v.clone());
            }
        }
        let images: Vec<Image> = self.supports.iter().map(|s| s.image.clone()).collect();
        let v = identity_min_loss(&self.target, &images, cfg)?;
        self.identity_cache = Some((*cfg, v.clone()));
        Ok(v)
    }
}

/// Zeroes every gradient, then runs one forward/backward pass.
pub fn forward_backward(state: &mut SceneState, cfg: &LossConfig) -> Result<Evaluation> {
    state.zero_grad();
    evaluate(state, cfg, None, true)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub iterations: usize,
    /// Fraction of iterations spent linearly warming up the learning rate.
    pub warmup_fraction: f64,
    /// Trailing fraction of iterations run at `learning_rate * decay_factor`.
    pub decay_fraction: f64,
    pub decay_factor: f64,
    /// Learning-rate multipliers per parameter block.
    pub pose_lr_scale: f64,
    pub intrinsics_lr_scale: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            weight_decay: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            iterations: 3000,
            warmup_fraction: 0.05,
            decay_fraction: 1.0 / 3.0,
            decay_factor: 0.1,
            pose_lr_scale: 1.0,
            intrinsics_lr_scale: 1.0,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(Error::Config("betas must lie in [0, 1)".into()));
        }
        if !(self.eps > 0.0) || self.weight_decay < 0.0 {
            return Err(Error::Config("eps must be > 0 and weight_decay >= 0".into()));
        }
        if !((0.0..=1.0).contains(&self.warmup_fraction) && (0.0..=1.0).contains(&self.decay_fraction)) {
            return Err(Error::Config("schedule fractions must lie in [0, 1]".into()));
        }
        if !(self.decay_factor > 0.0 && self.pose_lr_scale >= 0.0 && self.intrinsics_lr_scale >= 0.0) {
            return Err(Error::Config("decay_factor must be > 0 and lr scales >= 0".into()));
        }
        Ok(())
    }

    /// Learning rate at zero-based iteration `t`: linear warmup, constant,
    /// then a final decayed stretch.
    pub fn learning_rate_at(&self, t: usize) -> f64 {
        let n = self.iterations as f64;
        let warmup = (self.warmup_fraction * n).round() as usize;
        let decay_start = self.iterations - (self.decay_fraction * n).round() as usize;
        if t < warmup {
            self.learning_rate * (t + 1) as f64 / warmup as f64
        } else if t >= decay_start {
            self.learning_rate * self.decay_factor
        } else {
            self.learning_rate
        }
    }
}

/// First and second moment estimates for one parameter block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamMoments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamMoments {
    pub fn zeros(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }
}

/// One AdamW update with bias correction; `t` counts from 1. Weight decay is
/// applied to the values directly, not folded into the gradient.
pub fn adam_step(block: &mut ParamBlock, moments: &mut AdamMoments, cfg: &OptimConfig, lr: f64, t: usize) {
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    let (values, grads) = block.split_mut();
    for i in 0..values.len() {
        let g = grads[i];
        values[i] -= lr * cfg.weight_decay * values[i];
        moments.m[i] = cfg.beta1 * moments.m[i] + (1.0 - cfg.beta1) * g;
        moments.v[i] = cfg.beta2 * moments.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = moments.m[i] / bc1;
        let v_hat = moments.v[i] / bc2;
        values[i] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}

#[derive(Clone, Debug)]
pub struct OptimResult {
    pub disparity: DisparityField,
    pub depth: DepthField,
    /// One pose per support, ascending offset.
    pub poses: Vec<Pose>,
    pub offsets: Vec<i32>,
    pub camera: Camera,
    /// Loss evaluated before each update.
    pub loss_trace: Vec<f64>,
    pub mask_coverage_trace: Vec<f64>,
    pub lr_trace: Vec<f64>,
}

impl OptimResult {
    fn snapshot(state: &SceneState, loss: Vec<f64>, coverage: Vec<f64>, lr: Vec<f64>) -> Result<Self> {
        Ok(Self {
            disparity: state.disparity_field(),
            depth: state.depth()?,
            poses: state.poses(),
            offsets: state.supports.iter().map(|s| s.offset).collect(),
            camera: state.camera(),
            loss_trace: loss,
            mask_coverage_trace: coverage,
            lr_trace: lr,
        })
    }
}

/// Runs `cfg.iterations` AdamW steps on every trainable block.
pub fn solve(mut state: SceneState, cfg: &OptimConfig, loss_cfg: &LossConfig) -> Result<(OptimResult, SceneState)> {
    cfg.validate()?;
    loss_cfg.validate()?;
    let mut disp_m = AdamMoments::zeros(state.disparity.len());
    let mut pose_m: Vec<AdamMoments> = state.supports.iter().map(|_| AdamMoments::zeros(6)).collect();
    let mut intr_m = AdamMoments::zeros(4);
    let mut losses = Vec::with_capacity(cfg.iterations);
    let mut coverage = Vec::with_capacity(cfg.iterations);
    let mut lrs = Vec::with_capacity(cfg.iterations);

    for it in 0..cfg.iterations {
        let eval = forward_backward(&mut state, loss_cfg)?;
        let grads_finite = state.disparity.grads().iter().all(|g| g.is_finite())
            && state
                .supports
                .iter()
                .all(|s| s.pose.grads().iter().all(|g| g.is_finite()));
        if !eval.loss.is_finite() || !grads_finite {
            return Err(Error::Numerical {
                iteration: it,
                message: format!(
                    "loss {} (last finite {:?}), reconstruction {}, smoothness {}, camera {:?}",
                    eval.loss,
                    losses.last(),
                    eval.diagnostics.reconstruction,
                    eval.diagnostics.smoothness,
                    state.camera()
                ),
            });
        }
        losses.push(eval.loss);
        coverage.push(eval.diagnostics.mask_coverage);
        let lr = cfg.learning_rate_at(it);
        lrs.push(lr);
        let t = it + 1;
        adam_step(&mut state.disparity, &mut disp_m, cfg, lr, t);
        if state.optimize_poses {
            for (sf, m) in state.supports.iter_mut().zip(&mut pose_m) {
                adam_step(&mut sf.pose, m, cfg, lr * cfg.pose_lr_scale, t);
            }
        }
        if let IntrinsicsParam::Learned(block) = &mut state.intrinsics {
            adam_step(block, &mut intr_m, cfg, lr * cfg.intrinsics_lr_scale, t);
        }
    }
    let result = OptimResult::snapshot(&state, losses, coverage, lrs)?;
    Ok((result, state))
}
