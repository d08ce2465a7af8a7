//! Pinhole camera, rigid motion and the differentiable warp of a support view
//! into the target frame.
//!
//! Pixel `(u, v)` sits at continuous coordinate `(u, v)`; a pixel's centre is
//! an integer node of the bilinear grid.

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{logistic, softplus, softplus_inv, DepthField, Image};

/// Points closer than this to the camera plane after transformation are invalid.
pub const Z_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let cam = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "focal lengths must be positive and finite: {self:?}"
            )));
        }
        if !(0.0 < self.cx && self.cx < self.width as f64 && 0.0 < self.cy && self.cy < self.height as f64) {
            return Err(Error::InvalidInput(format!(
                "principal point outside the image: {self:?}"
            )));
        }
        Ok(())
    }

    /// Unit-depth ray through pixel `(u, v)`.
    #[inline]
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    #[inline]
    pub fn project(&self, p: &Vector3<f64>) -> [f64; 2] {
        [self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy]
    }
}

/// Unconstrained intrinsics: softplus focal lengths and sigmoid principal
/// point, both normalized by the image size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicsRaw {
    pub raw_f: [f64; 2],
    pub raw_c: [f64; 2],
}

impl IntrinsicsRaw {
    pub fn to_array(self) -> [f64; 4] {
        [self.raw_f[0], self.raw_f[1], self.raw_c[0], self.raw_c[1]]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            raw_f: [v[0], v[1]],
            raw_c: [v[2], v[3]],
        }
    }

    /// Raw values that decode exactly onto `cam` (up to rounding).
    pub fn from_camera(cam: &Camera) -> Self {
        let w = cam.width as f64;
        let h = cam.height as f64;
        let logit = |p: f64| (p / (1.0 - p)).ln();
        Self {
            raw_f: [softplus_inv(cam.fx / w), softplus_inv(cam.fy / h)],
            raw_c: [logit(cam.cx / w), logit(cam.cy / h)],
        }
    }

    /// Derivatives of `(fx, fy, cx, cy)` with respect to the four raw values
    /// (the map is diagonal).
    pub fn decode_derivatives(&self, width: usize, height: usize) -> [f64; 4] {
        let w = width as f64;
        let h = height as f64;
        let sc = [logistic(self.raw_c[0]), logistic(self.raw_c[1])];
        [
            logistic(self.raw_f[0]) * w,
            logistic(self.raw_f[1]) * h,
            sc[0] * (1.0 - sc[0]) * w,
            sc[1] * (1.0 - sc[1]) * h,
        ]
    }
}

pub fn intrinsics_decode(raw: &IntrinsicsRaw, width: usize, height: usize) -> Camera {
    let w = width as f64;
    let h = height as f64;
    // Saturated sigmoids are pulled back inside so the principal point never
    // lands exactly on the border.
    let inside = |x: f64, n: f64| x.clamp(f64::EPSILON * n, n * (1.0 - f64::EPSILON));
    Camera {
        fx: softplus(raw.raw_f[0]).max(f64::MIN_POSITIVE) * w,
        fy: softplus(raw.raw_f[1]).max(f64::MIN_POSITIVE) * h,
        cx: inside(logistic(raw.raw_c[0]) * w, w),
        cy: inside(logistic(raw.raw_c[1]) * h, h),
        width,
        height,
    }
}

/// Rigid transform from target-camera coordinates into a support camera.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    /// Axis-angle rotation, radians times unit axis.
    pub rotation: Vector3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

#[inline]
pub fn skew(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Rodrigues' formula with a series expansion near zero.
pub fn so3_exp(r: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = r.norm_squared();
    let k = skew(r);
    let (a, b) = if theta2 < 1e-10 {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        let theta = theta2.sqrt();
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Matrix3::identity() + k * a + k * k * b
}

/// Inverse of [`so3_exp`] for rotation angles below π.
pub fn so3_log(rot: &Matrix3<f64>) -> Vector3<f64> {
    let cos = ((rot.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = cos.acos();
    let w = Vector3::new(
        rot[(2, 1)] - rot[(1, 2)],
        rot[(0, 2)] - rot[(2, 0)],
        rot[(1, 0)] - rot[(0, 1)],
    );
    if theta < 1e-8 {
        w * 0.5
    } else {
        w * (theta / (2.0 * theta.sin()))
    }
}

/// `∂R/∂r_i` for each axis-angle component.
pub fn so3_exp_derivatives(r: &Vector3<f64>) -> [Matrix3<f64>; 3] {
    let theta2 = r.norm_squared();
    let basis = [Vector3::x(), Vector3::y(), Vector3::z()];
    if theta2 < 1e-14 {
        return basis.map(|e| skew(&e));
    }
    let rot = so3_exp(r);
    let id_minus_r = Matrix3::identity() - rot;
    basis.map(|e| {
        let ri = r.dot(&e);
        let m = skew(r) * ri + skew(&r.cross(&(id_minus_r * e)));
        (m / theta2) * rot
    })
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Vector3::zeros(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: [f64; 3], translation: [f64; 3]) -> Self {
        Self {
            rotation: Vector3::from(rotation),
            translation: Vector3::from(translation),
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.rotation.x,
            self.rotation.y,
            self.rotation.z,
            self.translation.x,
            self.translation.y,
            self.translation.z,
        ]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self::new([v[0], v[1], v[2]], [v[3], v[4], v[5]])
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        so3_exp(&self.rotation)
    }

    #[inline]
    pub fn transform(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation_matrix() * p + self.translation
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation_matrix().transpose();
        Pose {
            rotation: -self.rotation,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        let r = self.rotation_matrix();
        Pose {
            rotation: so3_log(&(r * other.rotation_matrix())),
            translation: r * other.translation + self.translation,
        }
    }
}

pub fn se3_exp(pose: &Pose) -> Matrix4<f64> {
    let r = pose.rotation_matrix();
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&pose.translation);
    m
}

pub fn backproject(depth: &DepthField, cam: &Camera) -> Vec<Vector3<f64>> {
    let mut out = Vec::with_capacity(depth.values.len());
    for v in 0..depth.height {
        for u in 0..depth.width {
            out.push(cam.ray(u as f64, v as f64) * depth.get(v, u));
        }
    }
    out
}

/// Reprojected pixel coordinates plus the positive-depth flag per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct Reprojection {
    pub coords: Vec<[f64; 2]>,
    pub in_front: Vec<bool>,
}

pub fn reproject(depth: &DepthField, cam: &Camera, pose: &Pose) -> Reprojection {
    let n = depth.values.len();
    if *pose == Pose::identity() {
        // K K^-1 round-trips with rounding error; the identity map is exact.
        let coords = (0..n)
            .map(|i| [(i % depth.width) as f64, (i / depth.width) as f64])
            .collect();
        let in_front = depth.values.iter().map(|&d| d > Z_EPS).collect();
        return Reprojection { coords, in_front };
    }
    let rot = pose.rotation_matrix();
    let mut coords = Vec::with_capacity(n);
    let mut in_front = Vec::with_capacity(n);
    for v in 0..depth.height {
        for u in 0..depth.width {
            let p = rot * (cam.ray(u as f64, v as f64) * depth.get(v, u)) + pose.translation;
            let front = p.z > Z_EPS;
            let z = if front { p.z } else { Z_EPS };
            coords.push([cam.fx * p.x / z + cam.cx, cam.fy * p.y / z + cam.cy]);
            in_front.push(front);
        }
    }
    Reprojection { coords, in_front }
}

/// Bilinear cell chosen for a sample; reused when a caller needs the smooth
/// piece of the interpolant around a fixed point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleCell {
    pub x0: usize,
    pub y0: usize,
    /// Clamped coordinate when the sample fell outside the raster on that axis.
    pub fixed_u: Option<f64>,
    pub fixed_v: Option<f64>,
}

impl SampleCell {
    pub fn locate(u: f64, v: f64, width: usize, height: usize) -> Self {
        let (x0, fixed_u) = axis_cell(u, width);
        let (y0, fixed_v) = axis_cell(v, height);
        Self {
            x0,
            y0,
            fixed_u,
            fixed_v,
        }
    }

    pub fn in_bounds(&self) -> bool {
        self.fixed_u.is_none() && self.fixed_v.is_none()
    }
}

fn axis_cell(x: f64, n: usize) -> (usize, Option<f64>) {
    let hi = (n - 1) as f64;
    let (xc, fixed) = if x < 0.0 {
        (0.0, Some(0.0))
    } else if x > hi {
        (hi, Some(hi))
    } else {
        (x, None)
    };
    let x0 = (xc.floor() as usize).min(n - 2);
    (x0, fixed)
}

/// Value and coordinate derivatives of one bilinear sample, per channel.
#[derive(Clone, Copy, Debug, Default)]
pub struct Bilinear {
    pub value: [f64; 3],
    pub d_u: [f64; 3],
    pub d_v: [f64; 3],
}

/// Evaluates the bilinear interpolant of `cell` at `(u, v)`. Axes clamped at
/// the border contribute no coordinate derivative.
pub fn bilinear_in_cell(src: &Image, cell: &SampleCell, u: f64, v: f64) -> Bilinear {
    let uc = cell.fixed_u.unwrap_or(u);
    let vc = cell.fixed_v.unwrap_or(v);
    let a = uc - cell.x0 as f64;
    let b = vc - cell.y0 as f64;
    let (x0, y0) = (cell.x0, cell.y0);
    let mut out = Bilinear::default();
    for c in 0..src.channels() {
        let p00 = src.get(y0, x0, c);
        let p01 = src.get(y0, x0 + 1, c);
        let p10 = src.get(y0 + 1, x0, c);
        let p11 = src.get(y0 + 1, x0 + 1, c);
        let top = p00 + a * (p01 - p00);
        let bottom = p10 + a * (p11 - p10);
        out.value[c] = top + b * (bottom - top);
        if cell.fixed_u.is_none() {
            out.d_u[c] = (1.0 - b) * (p01 - p00) + b * (p11 - p10);
        }
        if cell.fixed_v.is_none() {
            out.d_v[c] = bottom - top;
        }
    }
    out
}

/// Border-clamped bilinear sampling with a validity mask marking samples that
/// fell outside `[0, W-1] x [0, H-1]`.
pub fn bilinear_sample(src: &Image, coords: &[[f64; 2]]) -> Result<(Image, Vec<bool>)> {
    let (h, w, ch) = src.shape();
    if coords.len() != h * w {
        return Err(Error::InvalidInput(format!(
            "expected {} coordinates, got {}",
            h * w,
            coords.len()
        )));
    }
    if coords.iter().any(|c| !c[0].is_finite() || !c[1].is_finite()) {
        return Err(Error::InvalidInput("non-finite sample coordinate".into()));
    }
    let mut data = Vec::with_capacity(h * w * ch);
    let mut valid = Vec::with_capacity(h * w);
    for &[u, v] in coords {
        let cell = SampleCell::locate(u, v, w, h);
        let s = bilinear_in_cell(src, &cell, u, v);
        data.extend_from_slice(&s.value[..ch]);
        valid.push(cell.in_bounds());
    }
    Ok((Image::new(h, w, ch, data)?, valid))
}

#[derive(Clone, Debug, PartialEq)]
pub struct WarpResult {
    pub coords: Vec<[f64; 2]>,
    pub synthesized: Image,
    pub valid: Vec<bool>,
}

impl WarpResult {
    pub fn valid_fraction(&self) -> f64 {
        self.valid.iter().filter(|&&v| v).count() as f64 / self.valid.len() as f64
    }
}

/// Synthesizes the target view by sampling `support` at the reprojection of
/// every target pixel.
pub fn warp_support(support: &Image, depth: &DepthField, cam: &Camera, pose: &Pose) -> Result<WarpResult> {
    if (depth.height, depth.width) != (support.height(), support.width()) {
        return Err(Error::ShapeMismatch {
            expected: support.shape(),
            got: (depth.height, depth.width, support.channels()),
        });
    }
    let proj = reproject(depth, cam, pose);
    let (synthesized, mut valid) = bilinear_sample(support, &proj.coords)?;
    for (v, front) in valid.iter_mut().zip(&proj.in_front) {
        *v &= *front;
    }
    Ok(WarpResult {
        coords: proj.coords,
        synthesized,
        valid,
    })
}

/// Axis-aligned crop in pixel units.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropRect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

/// Intrinsics after cropping `crop` and resizing it to `new_height x new_width`,
/// for the resize map `u_src = x + u_out * crop_w / new_w`.
pub fn adjust_camera_for_crop_resize(
    cam: &Camera,
    crop: CropRect,
    new_height: usize,
    new_width: usize,
) -> Result<Camera> {
    if crop.width == 0 || crop.height == 0 || new_width == 0 || new_height == 0 {
        return Err(Error::InvalidInput(format!(
            "degenerate crop {crop:?} -> {new_height}x{new_width}"
        )));
    }
    if crop.x + crop.width > cam.width || crop.y + crop.height > cam.height {
        return Err(Error::InvalidInput(format!(
            "crop {crop:?} exceeds {}x{} image",
            cam.height, cam.width
        )));
    }
    let sx = new_width as f64 / crop.width as f64;
    let sy = new_height as f64 / crop.height as f64;
    Camera::new(
        cam.fx * sx,
        cam.fy * sy,
        (cam.cx - crop.x as f64) * sx,
        (cam.cy - crop.y as f64) * sy,
        new_width,
        new_height,
    )
}
