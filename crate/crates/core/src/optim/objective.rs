//! Analytic forward/backward pass of the full objective.
//!
//! Chain per target pixel: logit → disparity → depth → 3-D point → support
//! camera → pixel coordinates → bilinear sample → SSIM/L1 → minimum over
//! supports → automask gate → mean. The automask, the argmin routing and the
//! validity flags are recomputed on every call and then held constant while
//! gradients are propagated.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{bilinear_in_cell, so3_exp, so3_exp_derivatives, Camera, SampleCell, Z_EPS};
use crate::losses::{
    l1_signs, photometric_backward_y, photometric_loss_gated, smoothness_with_grad, LossConfig, LossDiagnostics,
};
use crate::types::{logistic, Image};

use super::{IntrinsicsParam, SceneState};

/// Discrete decisions taken during a forward pass. Passing them back into
/// [`evaluate`] evaluates the smooth piece of the objective they select.
#[derive(Clone, Debug, PartialEq)]
pub struct Gates {
    pub keep: Vec<bool>,
    pub argmin: Vec<Option<usize>>,
    /// Per support, per pixel bilinear cell.
    pub cells: Vec<Vec<SampleCell>>,
    /// Per support, per pixel positive-depth flag.
    pub in_front: Vec<Vec<bool>>,
    /// Per support, per element sign of `target - synthesized`.
    pub l1_signs: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub loss: f64,
    pub diagnostics: LossDiagnostics,
    pub gates: Gates,
}

struct PixelWarp {
    /// Point in the support frame.
    y: Vector3<f64>,
    cell: SampleCell,
    front: bool,
    value: [f64; 3],
    d_u: [f64; 3],
    d_v: [f64; 3],
}

struct SupportPass {
    rot: Matrix3<f64>,
    d_rot: [Matrix3<f64>; 3],
    pixels: Vec<PixelWarp>,
    synthesized: Image,
    loss: Vec<f64>,
}

fn warp_pixels(
    support: &Image,
    depth: &[f64],
    cam: &Camera,
    rot: &Matrix3<f64>,
    translation: &Vector3<f64>,
    gates: Option<(&[SampleCell], &[bool])>,
) -> Vec<PixelWarp> {
    let (h, w) = (support.height(), support.width());
    (0..h * w)
        .into_par_iter()
        .map(|p| {
            let (u, v) = ((p % w) as f64, (p / w) as f64);
            let y = rot * (cam.ray(u, v) * depth[p]) + translation;
            let front = match gates {
                Some((_, f)) => f[p],
                None => y.z > Z_EPS,
            };
            let z = if front { y.z } else { Z_EPS };
            let uu = cam.fx * y.x / z + cam.cx;
            let vv = cam.fy * y.y / z + cam.cy;
            let cell = match gates {
                Some((c, _)) => c[p],
                None => SampleCell::locate(uu, vv, w, h),
            };
            let s = bilinear_in_cell(support, &cell, uu, vv);
            let (d_u, d_v) = if front { (s.d_u, s.d_v) } else { ([0.0; 3], [0.0; 3]) };
            PixelWarp {
                y,
                cell,
                front,
                value: s.value,
                d_u,
                d_v,
            }
        })
        .collect()
}

/// Evaluates the objective at the current parameters. With `gates` the
/// discrete decisions are taken from a previous pass instead of recomputed.
/// With `accumulate` the analytic gradient is added into every trainable
/// parameter block.
pub fn evaluate(
    state: &mut SceneState,
    cfg: &LossConfig,
    gates: Option<&Gates>,
    accumulate: bool,
) -> Result<Evaluation> {
    let (h, w, ch) = state.target.shape();
    let n = h * w;
    let range = state.depth_range;
    let raw = state.disparity.values();
    if raw.iter().any(|r| !r.is_finite()) {
        return Err(Error::InvalidInput("non-finite disparity logit".into()));
    }
    let disp: Vec<f64> = raw.iter().map(|&r| logistic(r)).collect();
    let depth: Vec<f64> = disp.iter().map(|&s| range.depth_of(s)).collect();
    let cam = state.camera();
    let identity_min = state.identity_min(cfg)?;

    let passes = state
        .supports
        .iter()
        .enumerate()
        .map(|(k, sf)| {
            let pose = sf.pose();
            let rot = so3_exp(&pose.rotation);
            let g = gates.map(|g| (g.cells[k].as_slice(), g.in_front[k].as_slice()));
            let pixels = warp_pixels(&sf.image, &depth, &cam, &rot, &pose.translation, g);
            let data = pixels.iter().flat_map(|px| px.value[..ch].to_vec()).collect();
            let synthesized = Image::new(h, w, ch, data)?;
            let signs = gates.map(|g| g.l1_signs[k].as_slice());
            let loss = photometric_loss_gated(&state.target, &synthesized, cfg, signs)?.values;
            Ok(SupportPass {
                rot,
                d_rot: so3_exp_derivatives(&pose.rotation),
                pixels,
                synthesized,
                loss,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let (keep, argmin) = match gates {
        Some(g) => (g.keep.clone(), g.argmin.clone()),
        None => {
            let mut argmin = vec![None; n];
            let mut keep = vec![false; n];
            for p in 0..n {
                let mut best = f64::INFINITY;
                for (k, pass) in passes.iter().enumerate() {
                    let px = &pass.pixels[p];
                    // earliest support wins ties
                    if px.front && px.cell.in_bounds() && pass.loss[p] < best {
                        best = pass.loss[p];
                        argmin[p] = Some(k);
                    }
                }
                keep[p] = best < identity_min[p];
            }
            (keep, argmin)
        }
    };

    let mut sum = 0.0;
    let mut retained = 0usize;
    let mut any_valid = 0usize;
    let mut wins = vec![0usize; passes.len()];
    for p in 0..n {
        if let Some(k) = argmin[p] {
            any_valid += 1;
            if keep[p] {
                sum += passes[k].loss[p];
                retained += 1;
                wins[k] += 1;
            }
        }
    }
    if retained == 0 {
        return Err(Error::DegenerateBatch);
    }
    let reconstruction = sum / retained as f64;
    let gray = state.target.gray();
    let (smoothness, smooth_grad) = smoothness_with_grad(h, w, &disp, &gray, accumulate);
    let loss = reconstruction + cfg.smoothness_weight * smoothness;

    let diagnostics = LossDiagnostics {
        reconstruction,
        smoothness,
        mask_coverage: retained as f64 / any_valid.max(1) as f64,
        argmin_share: wins.iter().map(|&c| c as f64 / retained as f64).collect(),
        retained_pixels: retained,
    };

    if accumulate {
        backward(
            state,
            cfg,
            &cam,
            &passes,
            &keep,
            &argmin,
            retained,
            &disp,
            &depth,
            &smooth_grad,
        );
    }

    let gates = Gates {
        keep,
        argmin,
        cells: passes
            .iter()
            .map(|p| p.pixels.iter().map(|px| px.cell).collect())
            .collect(),
        in_front: passes
            .iter()
            .map(|p| p.pixels.iter().map(|px| px.front).collect())
            .collect(),
        l1_signs: passes.iter().map(|p| l1_signs(&state.target, &p.synthesized)).collect(),
    };
    Ok(Evaluation {
        loss,
        diagnostics,
        gates,
    })
}

/// Gradient contributions of one pixel, summed in raster order afterwards.
#[derive(Clone, Copy, Default)]
struct PixelGrad {
    depth: f64,
    pose: [f64; 6],
    intr: [f64; 4],
}

#[allow(clippy::too_many_arguments)]
fn backward(
    state: &mut SceneState,
    cfg: &LossConfig,
    cam: &Camera,
    passes: &[SupportPass],
    keep: &[bool],
    argmin: &[Option<usize>],
    retained: usize,
    disp: &[f64],
    depth: &[f64],
    smooth_grad: &[f64],
) {
    let (h, w, ch) = state.target.shape();
    let n = h * w;
    let inv_retained = 1.0 / retained as f64;
    let learn_pose = state.optimize_poses;
    let learn_intr = matches!(state.intrinsics, IntrinsicsParam::Learned(_));
    let mut g_depth = vec![0.0; n];

    for (k, pass) in passes.iter().enumerate() {
        let weight: Vec<f64> = (0..n)
            .map(|p| {
                if keep[p] && argmin[p] == Some(k) {
                    inv_retained
                } else {
                    0.0
                }
            })
            .collect();
        if weight.iter().all(|&x| x == 0.0) {
            continue;
        }
        let g_img = photometric_backward_y(&state.target, &pass.synthesized, &weight, cfg);
        let per_pixel: Vec<PixelGrad> = (0..n)
            .into_par_iter()
            .map(|p| {
                let px = &pass.pixels[p];
                if !px.front {
                    return PixelGrad::default();
                }
                let mut gu = 0.0;
                let mut gv = 0.0;
                for c in 0..ch {
                    gu += g_img[p * ch + c] * px.d_u[c];
                    gv += g_img[p * ch + c] * px.d_v[c];
                }
                if gu == 0.0 && gv == 0.0 {
                    return PixelGrad::default();
                }
                let y = px.y;
                let iz = 1.0 / y.z;
                let g_y = Vector3::new(
                    gu * cam.fx * iz,
                    gv * cam.fy * iz,
                    -(gu * cam.fx * y.x + gv * cam.fy * y.y) * iz * iz,
                );
                let (u, v) = ((p % w) as f64, (p / w) as f64);
                let ray = cam.ray(u, v);
                let d = depth[p];
                let g_rot = pass.rot.transpose() * g_y;
                let mut out = PixelGrad {
                    depth: g_rot.dot(&ray),
                    ..Default::default()
                };
                if learn_pose {
                    let x = ray * d;
                    for i in 0..3 {
                        out.pose[i] = g_y.dot(&(pass.d_rot[i] * x));
                    }
                    out.pose[3] = g_y.x;
                    out.pose[4] = g_y.y;
                    out.pose[5] = g_y.z;
                }
                if learn_intr {
                    // x_cam = d ((u - cx) / fx, (v - cy) / fy, 1)
                    let (rx, ry) = (ray.x, ray.y);
                    out.intr[0] = gu * y.x * iz - g_rot.x * d * rx / cam.fx;
                    out.intr[1] = gv * y.y * iz - g_rot.y * d * ry / cam.fy;
                    out.intr[2] = gu - g_rot.x * d / cam.fx;
                    out.intr[3] = gv - g_rot.y * d / cam.fy;
                }
                out
            })
            .collect();

        let mut g_pose = [0.0; 6];
        let mut g_intr = [0.0; 4];
        for (p, pg) in per_pixel.iter().enumerate() {
            g_depth[p] += pg.depth;
            for (g, d) in g_pose.iter_mut().zip(&pg.pose) {
                *g += d;
            }
            for (g, d) in g_intr.iter_mut().zip(&pg.intr) {
                *g += d;
            }
        }
        if learn_pose {
            let grads = state.supports[k].pose.grads_mut();
            for i in 0..6 {
                grads[i] += g_pose[i];
            }
        }
        if let IntrinsicsParam::Learned(block) = &mut state.intrinsics {
            let raw = crate::geometry::IntrinsicsRaw::from_slice(block.values());
            let scale = raw.decode_derivatives(w, h);
            let grads = block.grads_mut();
            for i in 0..4 {
                grads[i] += g_intr[i] * scale[i];
            }
        }
    }

    let inv_span = state.depth_range.inv_span();
    let lambda = cfg.smoothness_weight;
    let grads = state.disparity.grads_mut();
    for p in 0..n {
        let s = disp[p];
        let d = depth[p];
        let g_disp = g_depth[p] * (-inv_span * d * d) + lambda * smooth_grad[p];
        grads[p] += g_disp * s * (1.0 - s);
    }
}
