//! Shared rasters, the disparity/depth parametrization and optimizer parameter blocks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default near bound of the disparity-to-depth map.
pub const DEFAULT_MIN_DEPTH: f64 = 0.1;
/// Default far bound of the disparity-to-depth map.
pub const DEFAULT_MAX_DEPTH: f64 = 100.0;

#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y + (-(-y).exp()).ln_1p()
    } else {
        y.exp_m1().ln()
    }
}

/// Row-major float raster with interleaved channels, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height < 2 || width < 2 {
            return Err(Error::InvalidInput(format!(
                "image must be at least 2x2, got {height}x{width}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidInput(format!(
                "image must have 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::InvalidInput(format!(
                "image data length {} does not match {height}x{width}x{channels}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite pixel value {bad}")));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for v in 0..height {
            for u in 0..width {
                for c in 0..channels {
                    data.push(f(v, u, c));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, v: usize, u: usize, c: usize) -> f64 {
        self.data[(v * self.width + u) * self.channels + c]
    }

    /// Per-pixel channel mean, the single-channel view used for edge weights.
    pub fn gray(&self) -> Vec<f64> {
        let c = self.channels as f64;
        self.data
            .chunks_exact(self.channels)
            .map(|px| px.iter().sum::<f64>() / c)
            .collect()
    }

    pub fn ensure_same_shape(&self, other: &Image) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                expected: self.shape(),
                got: other.shape(),
            });
        }
        Ok(())
    }

    pub fn mean_abs_diff(&self, other: &Image) -> Result<f64> {
        self.ensure_same_shape(other)?;
        let sum: f64 = self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).sum();
        Ok(sum / self.data.len() as f64)
    }
}

/// Closed interval of depths the disparity sigmoid is mapped onto.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthRange {
    pub min: f64,
    pub max: f64,
}

impl Default for DepthRange {
    fn default() -> Self {
        Self {
            min: DEFAULT_MIN_DEPTH,
            max: DEFAULT_MAX_DEPTH,
        }
    }
}

impl DepthRange {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && 0.0 < min && min < max) {
            return Err(Error::Range(format!(
                "depth range requires 0 < min < max, got [{min}, {max}]"
            )));
        }
        Ok(Self { min, max })
    }

    #[inline]
    fn inv_max(&self) -> f64 {
        1.0 / self.max
    }

    /// Slope of inverse depth with respect to disparity.
    #[inline]
    pub fn inv_span(&self) -> f64 {
        1.0 / self.min - 1.0 / self.max
    }

    #[inline]
    pub fn depth_of(&self, disp: f64) -> f64 {
        1.0 / (self.inv_max() + self.inv_span() * disp)
    }

    #[inline]
    pub fn disp_of(&self, depth: f64) -> f64 {
        (1.0 / depth - self.inv_max()) / self.inv_span()
    }
}

/// Per-pixel disparity stored as unconstrained logits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisparityField {
    pub height: usize,
    pub width: usize,
    pub raw: Vec<f64>,
}

impl DisparityField {
    pub fn from_raw(height: usize, width: usize, raw: Vec<f64>) -> Result<Self> {
        if raw.len() != height * width {
            return Err(Error::InvalidInput(format!(
                "disparity length {} does not match {height}x{width}",
                raw.len()
            )));
        }
        Ok(Self { height, width, raw })
    }

    /// Builds logits from disparities in the open interval (0, 1).
    pub fn from_disparity(height: usize, width: usize, disp: &[f64]) -> Result<Self> {
        if disp.len() != height * width {
            return Err(Error::InvalidInput("disparity length mismatch".into()));
        }
        let raw = disp
            .iter()
            .map(|&d| {
                if d.is_finite() && d > 0.0 && d < 1.0 {
                    Ok(logit(d))
                } else {
                    Err(Error::Range(format!("disparity {d} outside (0, 1)")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { height, width, raw })
    }

    pub fn disparity(&self) -> Vec<f64> {
        self.raw.iter().map(|&r| logistic(r)).collect()
    }
}

/// Strictly positive per-pixel depth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthField {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl DepthField {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::InvalidInput(format!(
                "depth length {} does not match {height}x{width}",
                values.len()
            )));
        }
        Ok(Self { height, width, values })
    }

    pub fn constant(height: usize, width: usize, depth: f64) -> Self {
        Self {
            height,
            width,
            values: vec![depth; height * width],
        }
    }

    #[inline]
    pub fn get(&self, v: usize, u: usize) -> f64 {
        self.values[v * self.width + u]
    }
}

pub fn disp_to_depth(disp: &DisparityField, range: DepthRange) -> Result<DepthField> {
    let values = disp
        .raw
        .iter()
        .map(|&r| {
            if !r.is_finite() {
                return Err(Error::InvalidInput(format!("non-finite disparity logit {r}")));
            }
            Ok(range.depth_of(logistic(r)))
        })
        .collect::<Result<Vec<_>>>()?;
    DepthField::new(disp.height, disp.width, values)
}

pub fn depth_to_disp(depth: &DepthField, range: DepthRange) -> Result<DisparityField> {
    let disp = depth
        .values
        .iter()
        .map(|&d| {
            if d > range.min && d < range.max {
                Ok(range.disp_of(d))
            } else {
                Err(Error::Range(format!(
                    "depth {d} outside ({}, {})",
                    range.min, range.max
                )))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    DisparityField::from_disparity(depth.height, depth.width, &disp)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamTag {
    Disparity,
    Pose,
    Intrinsics,
}

/// Flat optimizable parameters with a gradient slot of the same length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub tag: ParamTag,
    values: Vec<f64>,
    grads: Vec<f64>,
}

impl ParamBlock {
    pub fn new(tag: ParamTag, values: Vec<f64>) -> Self {
        let grads = vec![0.0; values.len()];
        Self { tag, values, grads }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn grads(&self) -> &[f64] {
        &self.grads
    }

    pub fn grads_mut(&mut self) -> &mut [f64] {
        &mut self.grads
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = 0.0);
    }

    /// Simultaneous access for optimizer updates.
    pub fn split_mut(&mut self) -> (&mut [f64], &[f64]) {
        (&mut self.values, &self.grads)
    }
}
