//! Photometric self-supervision: SSIM + L1 appearance loss, per-pixel minimum
//! over support frames, the static-pixel automask and edge-aware smoothness.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::WarpResult;
use crate::types::{DisparityField, Image};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub alpha_ssim: f64,
    pub smoothness_weight: f64,
    pub ssim_c1: f64,
    pub ssim_c2: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha_ssim: 0.85,
            smoothness_weight: 1e-3,
            ssim_c1: 0.01 * 0.01,
            ssim_c2: 0.03 * 0.03,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha_ssim) {
            return Err(Error::Config(format!(
                "alpha_ssim must lie in [0, 1], got {}",
                self.alpha_ssim
            )));
        }
        if !(self.smoothness_weight >= 0.0 && self.smoothness_weight.is_finite()) {
            return Err(Error::Config("smoothness_weight must be >= 0".into()));
        }
        if !(self.ssim_c1 > 0.0 && self.ssim_c2 > 0.0) {
            return Err(Error::Config("ssim stabilizers must be positive".into()));
        }
        Ok(())
    }
}

/// Per-pixel non-negative loss.
#[derive(Clone, Debug, PartialEq)]
pub struct LossField {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl LossField {
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Pixels kept by the automask (`true` = contributes to the loss).
#[derive(Clone, Debug, PartialEq)]
pub struct StaticMask {
    pub height: usize,
    pub width: usize,
    pub keep: Vec<bool>,
}

impl StaticMask {
    pub fn coverage(&self) -> f64 {
        self.keep.iter().filter(|&&k| k).count() as f64 / self.keep.len() as f64
    }
}

#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    r as usize
}

/// Raster index of the 9 reflection-padded taps of the 3x3 window at `(v, u)`.
#[inline]
pub(crate) fn window_taps(v: usize, u: usize, h: usize, w: usize) -> [usize; 9] {
    let mut out = [0usize; 9];
    let mut k = 0;
    for dv in -1isize..=1 {
        let vv = reflect(v as isize + dv, h);
        for du in -1isize..=1 {
            out[k] = vv * w + reflect(u as isize + du, w);
            k += 1;
        }
    }
    out
}

/// Local statistics of one channel at one pixel.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct SsimStats {
    pub mu_x: f64,
    pub mu_y: f64,
    pub var_x: f64,
    pub var_y: f64,
    pub cov: f64,
}

impl SsimStats {
    /// Two-pass moments; the one-pass `E[y^2] - E[y]^2` form loses about
    /// eleven digits on flat windows.
    fn gather(x: &Image, y: &Image, taps: &[usize; 9], c: usize) -> Self {
        let ch = x.channels();
        let (xd, yd) = (x.data(), y.data());
        let pair = |t: usize| (xd[t * ch + c], yd[t * ch + c]);
        let (sx, sy) = taps.iter().fold((0.0, 0.0), |(sx, sy), &t| {
            let (a, b) = pair(t);
            (sx + a, sy + b)
        });
        let mu_x = sx / 9.0;
        let mu_y = sy / 9.0;
        let (mut vxx, mut vyy, mut vxy) = (0.0, 0.0, 0.0);
        for &t in taps {
            let (a, b) = pair(t);
            let (da, db) = (a - mu_x, b - mu_y);
            vxx += da * da;
            vyy += db * db;
            vxy += da * db;
        }
        Self {
            mu_x,
            mu_y,
            var_x: vxx / 9.0,
            var_y: vyy / 9.0,
            cov: vxy / 9.0,
        }
    }

    fn ssim(&self, c1: f64, c2: f64) -> f64 {
        let num = (2.0 * self.mu_x * self.mu_y + c1) * (2.0 * self.cov + c2);
        let den = (self.mu_x * self.mu_x + self.mu_y * self.mu_y + c1) * (self.var_x + self.var_y + c2);
        num / den
    }

    /// Partials of SSIM with respect to `E[y]`, `E[y^2]` and `E[xy]`.
    pub(crate) fn ssim_partials_y(&self, c1: f64, c2: f64) -> (f64, f64, f64) {
        let a = 2.0 * self.mu_x * self.mu_y + c1;
        let b = 2.0 * self.cov + c2;
        let cc = self.mu_x * self.mu_x + self.mu_y * self.mu_y + c1;
        let d = self.var_x + self.var_y + c2;
        let s = a * b / (cc * d);
        let d_mu =
            (2.0 * self.mu_x * b - 2.0 * self.mu_x * a) / (cc * d) - s * 2.0 * self.mu_y / cc + s * 2.0 * self.mu_y / d;
        let d_e2 = -s / d;
        let d_exy = 2.0 * a / (cc * d);
        (d_mu, d_e2, d_exy)
    }
}

fn check_pair(x: &Image, y: &Image) -> Result<()> {
    x.ensure_same_shape(y)
}

/// Per-pixel, per-channel SSIM with 3x3 box statistics over a reflection
/// padded border. Layout matches the image (interleaved channels).
pub fn ssim_field(x: &Image, y: &Image, cfg: &LossConfig) -> Result<Vec<f64>> {
    check_pair(x, y)?;
    let (h, w, ch) = x.shape();
    let mut out = Vec::with_capacity(h * w * ch);
    for v in 0..h {
        for u in 0..w {
            let taps = window_taps(v, u, h, w);
            for c in 0..ch {
                out.push(SsimStats::gather(x, y, &taps, c).ssim(cfg.ssim_c1, cfg.ssim_c2));
            }
        }
    }
    Ok(out)
}

/// `alpha * (1 - SSIM) / 2 + (1 - alpha) * |x - y|`, each term channel-averaged.
pub fn photometric_loss(x: &Image, y: &Image, cfg: &LossConfig) -> Result<LossField> {
    photometric_loss_gated(x, y, cfg, None)
}

/// Signs of `x - y` per element, the discrete part of the L1 term.
pub(crate) fn l1_signs(x: &Image, y: &Image) -> Vec<f64> {
    x.data()
        .iter()
        .zip(y.data())
        .map(|(a, b)| if a == b { 0.0 } else { (a - b).signum() })
        .collect()
}

/// [`photometric_loss`] with the L1 term optionally evaluated as
/// `sign · (x - y)` using frozen signs.
pub(crate) fn photometric_loss_gated(
    x: &Image,
    y: &Image,
    cfg: &LossConfig,
    signs: Option<&[f64]>,
) -> Result<LossField> {
    let ssim = ssim_field(x, y, cfg)?;
    let (h, w, ch) = x.shape();
    let inv_c = 1.0 / ch as f64;
    let values = (0..h * w)
        .map(|p| {
            let mut s = 0.0;
            let mut l1 = 0.0;
            for c in 0..ch {
                let i = p * ch + c;
                s += ssim[i];
                let r = x.data()[i] - y.data()[i];
                l1 += signs.map_or(r.abs(), |sg| sg[i] * r);
            }
            let dssim = cfg.alpha_ssim * (1.0 - s * inv_c) * 0.5;
            (dssim + (1.0 - cfg.alpha_ssim) * l1 * inv_c).max(0.0)
        })
        .collect();
    Ok(LossField {
        height: h,
        width: w,
        values,
    })
}

/// Gradient of `Σ_p weight[p] · photometric_loss(x, y)[p]` with respect to `y`.
/// `x` is treated as constant. Output is laid out like `y`.
pub(crate) fn photometric_backward_y(x: &Image, y: &Image, weight: &[f64], cfg: &LossConfig) -> Vec<f64> {
    let (h, w, ch) = x.shape();
    let inv_c = 1.0 / ch as f64;
    let (xd, yd) = (x.data(), y.data());
    let mut grad = vec![0.0; h * w * ch];
    for v in 0..h {
        for u in 0..w {
            let p = v * w + u;
            let wp = weight[p];
            if wp == 0.0 {
                continue;
            }
            let taps = window_taps(v, u, h, w);
            let g_ssim = -cfg.alpha_ssim * 0.5 * inv_c * wp;
            for c in 0..ch {
                let st = SsimStats::gather(x, y, &taps, c);
                let (d_mu, d_e2, d_exy) = st.ssim_partials_y(cfg.ssim_c1, cfg.ssim_c2);
                for &t in &taps {
                    let j = t * ch + c;
                    grad[j] += g_ssim * (d_mu + 2.0 * yd[j] * d_e2 + xd[j] * d_exy) / 9.0;
                }
                let i = p * ch + c;
                let diff = yd[i] - xd[i];
                if diff != 0.0 {
                    grad[i] += (1.0 - cfg.alpha_ssim) * inv_c * wp * diff.signum();
                }
            }
        }
    }
    grad
}

/// Per-pixel minimum over support frames.
#[derive(Clone, Debug, PartialEq)]
pub struct MinReconstruction {
    /// Mean of the per-pixel minimum over pixels valid in at least one frame.
    pub value: f64,
    /// Winning support per pixel; `None` where every frame is invalid.
    pub argmin: Vec<Option<usize>>,
    /// Per-pixel minimum, `+inf` where every frame is invalid.
    pub min_field: Vec<f64>,
}

fn pixelwise_min(fields: &[&[f64]], valid: Option<&[Vec<bool>]>) -> (Vec<f64>, Vec<Option<usize>>) {
    let n = fields[0].len();
    let mut min = vec![f64::INFINITY; n];
    let mut arg = vec![None; n];
    for (k, f) in fields.iter().enumerate() {
        for p in 0..n {
            let ok = valid.is_none_or(|m| m[k][p]);
            // strict `<` keeps the earliest frame on ties
            if ok && f[p] < min[p] {
                min[p] = f[p];
                arg[p] = Some(k);
            }
        }
    }
    (min, arg)
}

pub fn min_reconstruction(per_support: &[LossField], valid: &[Vec<bool>]) -> Result<MinReconstruction> {
    if per_support.is_empty() {
        return Err(Error::Empty(
            "min_reconstruction needs at least one support frame".into(),
        ));
    }
    let n = per_support[0].values.len();
    if per_support.iter().any(|f| f.values.len() != n)
        || valid.len() != per_support.len()
        || valid.iter().any(|m| m.len() != n)
    {
        return Err(Error::InvalidInput(
            "support loss fields and masks must share one shape".into(),
        ));
    }
    let fields: Vec<&[f64]> = per_support.iter().map(|f| f.values.as_slice()).collect();
    let (min_field, argmin) = pixelwise_min(&fields, Some(valid));
    let kept: Vec<f64> = min_field.iter().copied().filter(|v| v.is_finite()).collect();
    if kept.is_empty() {
        return Err(Error::DegenerateBatch);
    }
    let value = kept.iter().sum::<f64>() / kept.len() as f64;
    Ok(MinReconstruction {
        value,
        argmin,
        min_field,
    })
}

/// Identity (unwarped) photometric minimum across supports, the right-hand side
/// of the automask comparison.
pub fn identity_min_loss(target: &Image, supports: &[Image], cfg: &LossConfig) -> Result<Vec<f64>> {
    if supports.is_empty() {
        return Err(Error::Empty("automask needs at least one support frame".into()));
    }
    let fields = supports
        .iter()
        .map(|s| photometric_loss(target, s, cfg))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&[f64]> = fields.iter().map(|f| f.values.as_slice()).collect();
    Ok(pixelwise_min(&refs, None).0)
}

/// Keeps pixel `p` iff the best warped loss is strictly below the best
/// unwarped loss.
pub fn automask(target: &Image, supports: &[Image], warps: &[WarpResult], cfg: &LossConfig) -> Result<StaticMask> {
    if supports.len() != warps.len() {
        return Err(Error::InvalidInput("one warp per support frame required".into()));
    }
    for (s, wr) in supports.iter().zip(warps) {
        target.ensure_same_shape(s)?;
        target.ensure_same_shape(&wr.synthesized)?;
    }
    let identity = identity_min_loss(target, supports, cfg)?;
    let warped = warps
        .iter()
        .map(|wr| photometric_loss(target, &wr.synthesized, cfg))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&[f64]> = warped.iter().map(|f| f.values.as_slice()).collect();
    let valid: Vec<Vec<bool>> = warps.iter().map(|wr| wr.valid.clone()).collect();
    let (warped_min, _) = pixelwise_min(&refs, Some(&valid));
    Ok(StaticMask {
        height: target.height(),
        width: target.width(),
        keep: warped_min.iter().zip(&identity).map(|(a, b)| a < b).collect(),
    })
}

/// Edge-aware smoothness on raw disparity values (any positive field).
/// `gray` is the channel-averaged guide image.
pub fn smoothness_on_disparity(height: usize, width: usize, disp: &[f64], gray: &[f64]) -> f64 {
    smoothness_with_grad(height, width, disp, gray, false).0
}

/// Returns the loss and, if requested, its gradient with respect to `disp`.
pub(crate) fn smoothness_with_grad(
    height: usize,
    width: usize,
    disp: &[f64],
    gray: &[f64],
    want_grad: bool,
) -> (f64, Vec<f64>) {
    let n = disp.len();
    let mean = disp.iter().sum::<f64>() / n as f64;
    let norm: Vec<f64> = disp.iter().map(|d| d / mean).collect();
    let nx = height * width.saturating_sub(1);
    let ny = height.saturating_sub(1) * width;
    let mut gnorm = if want_grad { vec![0.0; n] } else { Vec::new() };
    let mut sx = 0.0;
    let mut sy = 0.0;
    for v in 0..height {
        for u in 0..width {
            let p = v * width + u;
            if u + 1 < width {
                let q = p + 1;
                let wgt = (-(gray[q] - gray[p]).abs()).exp();
                let diff = norm[q] - norm[p];
                sx += diff.abs() * wgt;
                if want_grad && diff != 0.0 {
                    let g = diff.signum() * wgt / nx as f64;
                    gnorm[q] += g;
                    gnorm[p] -= g;
                }
            }
            if v + 1 < height {
                let q = p + width;
                let wgt = (-(gray[q] - gray[p]).abs()).exp();
                let diff = norm[q] - norm[p];
                sy += diff.abs() * wgt;
                if want_grad && diff != 0.0 {
                    let g = diff.signum() * wgt / ny as f64;
                    gnorm[q] += g;
                    gnorm[p] -= g;
                }
            }
        }
    }
    let loss = if nx > 0 { sx / nx as f64 } else { 0.0 } + if ny > 0 { sy / ny as f64 } else { 0.0 };
    if !want_grad {
        return (loss, Vec::new());
    }
    // d(norm_i)/d(disp_j) = δ_ij / mean - disp_i / (mean^2 n)
    let dot: f64 = gnorm.iter().zip(disp).map(|(g, d)| g * d).sum();
    let shared = dot / (mean * mean * n as f64);
    let grad = gnorm.iter().map(|g| g / mean - shared).collect();
    (loss, grad)
}

pub fn smoothness_loss(disp: &DisparityField, img: &Image) -> Result<f64> {
    if (disp.height, disp.width) != (img.height(), img.width()) {
        return Err(Error::ShapeMismatch {
            expected: img.shape(),
            got: (disp.height, disp.width, img.channels()),
        });
    }
    let d = disp.disparity();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite disparity".into()));
    }
    Ok(smoothness_on_disparity(disp.height, disp.width, &d, &img.gray()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossDiagnostics {
    pub reconstruction: f64,
    pub smoothness: f64,
    /// Fraction of pixels (valid in at least one support) kept by the automask.
    pub mask_coverage: f64,
    /// Share of retained pixels won by each support frame.
    pub argmin_share: Vec<f64>,
    pub retained_pixels: usize,
}

/// Masked minimum reconstruction plus weighted smoothness, evaluated on
/// already-warped supports.
pub fn total_loss(
    target: &Image,
    supports: &[Image],
    warps: &[WarpResult],
    disp: &DisparityField,
    cfg: &LossConfig,
) -> Result<(f64, LossDiagnostics)> {
    let mask = automask(target, supports, warps, cfg)?;
    let warped = warps
        .iter()
        .map(|wr| photometric_loss(target, &wr.synthesized, cfg))
        .collect::<Result<Vec<_>>>()?;
    let valid: Vec<Vec<bool>> = warps.iter().map(|wr| wr.valid.clone()).collect();
    let refs: Vec<&[f64]> = warped.iter().map(|f| f.values.as_slice()).collect();
    let (min_field, argmin) = pixelwise_min(&refs, Some(&valid));
    summarize(&min_field, &argmin, &mask.keep, supports.len(), cfg, disp, target)
}

fn summarize(
    min_field: &[f64],
    argmin: &[Option<usize>],
    keep: &[bool],
    n_supports: usize,
    cfg: &LossConfig,
    disp: &DisparityField,
    target: &Image,
) -> Result<(f64, LossDiagnostics)> {
    let mut sum = 0.0;
    let mut retained = 0usize;
    let mut any_valid = 0usize;
    let mut wins = vec![0usize; n_supports];
    for p in 0..min_field.len() {
        if let Some(k) = argmin[p] {
            any_valid += 1;
            if keep[p] {
                sum += min_field[p];
                retained += 1;
                wins[k] += 1;
            }
        }
    }
    if retained == 0 {
        return Err(Error::DegenerateBatch);
    }
    let reconstruction = sum / retained as f64;
    let smoothness = smoothness_loss(disp, target)?;
    Ok((
        reconstruction + cfg.smoothness_weight * smoothness,
        LossDiagnostics {
            reconstruction,
            smoothness,
            mask_coverage: retained as f64 / any_valid as f64,
            argmin_share: wins.iter().map(|&c| c as f64 / retained as f64).collect(),
            retained_pixels: retained,
        },
    ))
}
