//! Aspect-ratio crops, support-frame offsets, horizontal flip and colour jitter.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{adjust_camera_for_crop_resize, bilinear_in_cell, Camera, CropRect, SampleCell};
use crate::rng::Rng;
use crate::types::{DepthField, Image};

/// Aspect ratios as `(h, w)` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AspectRatioTable {
    ratios: Vec<(u32, u32)>,
}

impl Default for AspectRatioTable {
    fn default() -> Self {
        // portrait first, then landscape; names are W:H
        let w_h: [(u32, u32); 16] = [
            (6, 13),
            (9, 16),
            (3, 5),
            (2, 3),
            (4, 5),
            (1, 1),
            (5, 4),
            (4, 3),
            (3, 2),
            (14, 9),
            (5, 3),
            (16, 9),
            (2, 1),
            (24, 10),
            (33, 10),
            (18, 5),
        ];
        Self {
            ratios: w_h.iter().map(|&(w, h)| (h, w)).collect(),
        }
    }
}

impl AspectRatioTable {
    pub fn new(ratios: Vec<(u32, u32)>) -> Result<Self> {
        if ratios.is_empty() {
            return Err(Error::Empty("aspect ratio table".into()));
        }
        if ratios.iter().any(|&(h, w)| h == 0 || w == 0) {
            return Err(Error::InvalidInput("aspect ratios must be positive".into()));
        }
        Ok(Self { ratios })
    }

    pub fn ratios(&self) -> &[(u32, u32)] {
        &self.ratios
    }

    pub fn len(&self) -> usize {
        self.ratios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratios.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OffsetProfile {
    /// One earlier and one later frame, each 1 to 4 frames away.
    Handheld,
    /// Always the adjacent frames.
    Automotive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugConfig {
    pub ar_prob: f64,
    pub flip_prob: f64,
    pub jitter_prob: f64,
    /// Brightness, contrast and saturation factors are drawn from `1 ± jitter_magnitude`.
    pub jitter_magnitude: f64,
    pub fraction_range: (f64, f64),
    pub profile: OffsetProfile,
}

impl Default for AugConfig {
    fn default() -> Self {
        Self {
            ar_prob: 0.7,
            flip_prob: 0.5,
            jitter_prob: 0.5,
            jitter_magnitude: 0.2,
            fraction_range: (0.5, 1.0),
            profile: OffsetProfile::Handheld,
        }
    }
}

impl AugConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("ar_prob", self.ar_prob),
            ("flip_prob", self.flip_prob),
            ("jitter_prob", self.jitter_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} is not a probability")));
            }
        }
        if !(0.0..1.0).contains(&self.jitter_magnitude) {
            return Err(Error::Config(format!(
                "jitter_magnitude = {} must lie in [0, 1)",
                self.jitter_magnitude
            )));
        }
        let (lo, hi) = self.fraction_range;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(Error::Config(format!(
                "fraction_range ({lo}, {hi}) must satisfy 0 < lo <= hi <= 1"
            )));
        }
        Ok(())
    }
}

/// A drawn aspect-ratio crop and the size it is resized to.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArCrop {
    pub ratio: (u32, u32),
    pub fraction: f64,
    pub crop: CropRect,
    pub out_height: usize,
    pub out_width: usize,
}

const STRIDE: usize = 32;
const MIN_SIDE: usize = 64;
const AREA_TOLERANCE: f64 = 0.05;

/// Multiple-of-32 output size with area within 5% of `area` whose shape is
/// closest to `ratio` (h / w). Falls back to per-side rounding when no size
/// satisfies the area bound.
pub fn output_size(area: f64, ratio: f64) -> (usize, usize) {
    let h_star = (area * ratio).sqrt();
    let w_star = (area / ratio).sqrt();
    let around = |x: f64| {
        let k = (x / STRIDE as f64).round() as isize;
        ((k - 4).max(0)..=k + 4)
            .map(|k| k as usize * STRIDE)
            .filter(|&s| s >= MIN_SIDE)
    };
    // quantized so that mirror-image candidates tie exactly; ties go to the smaller height
    let q = |x: f64| (x * 1e9).round() as i64;
    // (shape error, area error, height) -> (h, w)
    type Candidate = ((i64, i64, usize), (usize, usize));
    let mut best: Option<Candidate> = None;
    for h in around(h_star) {
        for w in around(w_star) {
            let a = (h * w) as f64 / area;
            if (a - 1.0).abs() > AREA_TOLERANCE {
                continue;
            }
            let key = (q(((h as f64 / w as f64) / ratio).ln().abs()), q(a.ln().abs()), h);
            if best.is_none_or(|(k, _)| key < k) {
                best = Some((key, (h, w)));
            }
        }
    }
    best.map(|(_, s)| s).unwrap_or_else(|| {
        let round = |x: f64| ((x / STRIDE as f64).round() as usize * STRIDE).max(MIN_SIDE);
        (round(h_star), round(w_star))
    })
}

/// Centred crop with ratio `(rh, rw)` spanning `fraction` of the binding side.
pub fn ar_crop_for(height: usize, width: usize, ratio: (u32, u32), fraction: f64) -> Result<ArCrop> {
    if height < MIN_SIDE || width < MIN_SIDE {
        return Err(Error::InvalidInput(format!(
            "image {height}x{width} is smaller than {MIN_SIDE}x{MIN_SIDE}"
        )));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Range(format!("crop fraction {fraction} outside (0, 1]")));
    }
    let r = ratio.0 as f64 / ratio.1 as f64;
    let (h, w) = (height as f64, width as f64);
    let (ch, cw) = if w * r <= h {
        let cw = (fraction * w).round().max(1.0);
        ((cw * r).round().clamp(1.0, h), cw)
    } else {
        let ch = (fraction * h).round().max(1.0);
        (ch, (ch / r).round().clamp(1.0, w))
    };
    let (ch, cw) = (ch as usize, cw as usize);
    let (out_height, out_width) = output_size(h * w, r);
    Ok(ArCrop {
        ratio,
        fraction,
        crop: CropRect {
            x: (width - cw) / 2,
            y: (height - ch) / 2,
            width: cw,
            height: ch,
        },
        out_height,
        out_width,
    })
}

pub fn sample_ar_crop(
    rng: &mut Rng,
    height: usize,
    width: usize,
    table: &AspectRatioTable,
    fraction_range: (f64, f64),
) -> Result<ArCrop> {
    let ratio = table.ratios[rng.random_range(0..table.len())];
    let fraction = rng.random_range(fraction_range.0..=fraction_range.1);
    ar_crop_for(height, width, ratio, fraction)
}

/// Source coordinate of output pixel `i` along an axis.
fn source_coord(start: usize, crop: usize, out: usize, i: usize) -> f64 {
    start as f64 + i as f64 * crop as f64 / out as f64
}

/// Bilinear crop-and-resize of `image`.
pub fn apply_crop_resize(image: &Image, crop: &ArCrop) -> Result<Image> {
    let (h, w, c) = image.shape();
    let (oh, ow) = (crop.out_height, crop.out_width);
    let mut data = Vec::with_capacity(oh * ow * c);
    for v in 0..oh {
        let sv = source_coord(crop.crop.y, crop.crop.height, oh, v);
        for u in 0..ow {
            let su = source_coord(crop.crop.x, crop.crop.width, ow, u);
            let cell = SampleCell::locate(su, sv, w, h);
            data.extend_from_slice(&bilinear_in_cell(image, &cell, su, sv).value[..c]);
        }
    }
    Image::new(oh, ow, c, data)
}

/// Nearest-neighbour crop-and-resize of a depth map.
pub fn apply_crop_resize_depth(depth: &DepthField, crop: &ArCrop) -> Result<DepthField> {
    let (oh, ow) = (crop.out_height, crop.out_width);
    let mut values = Vec::with_capacity(oh * ow);
    for v in 0..oh {
        let sv = source_coord(crop.crop.y, crop.crop.height, oh, v).round() as usize;
        for u in 0..ow {
            let su = source_coord(crop.crop.x, crop.crop.width, ow, u).round() as usize;
            values.push(depth.get(sv.min(depth.height - 1), su.min(depth.width - 1)));
        }
    }
    DepthField::new(oh, ow, values)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArAugOutput {
    pub image: Image,
    pub camera: Camera,
    pub depth: Option<DepthField>,
    /// `None` when the augmentation did not fire.
    pub crop: Option<ArCrop>,
}

pub fn ar_aug(
    image: &Image,
    camera: &Camera,
    depth: Option<&DepthField>,
    rng: &mut Rng,
    cfg: &AugConfig,
) -> Result<ArAugOutput> {
    ar_aug_with_table(image, camera, depth, rng, cfg, &AspectRatioTable::default())
}

pub fn ar_aug_with_table(
    image: &Image,
    camera: &Camera,
    depth: Option<&DepthField>,
    rng: &mut Rng,
    cfg: &AugConfig,
    table: &AspectRatioTable,
) -> Result<ArAugOutput> {
    let fire = rng.random_bool(cfg.ar_prob);
    if !fire {
        return Ok(ArAugOutput {
            image: image.clone(),
            camera: *camera,
            depth: depth.cloned(),
            crop: None,
        });
    }
    let crop = sample_ar_crop(rng, image.height(), image.width(), table, cfg.fraction_range)?;
    Ok(ArAugOutput {
        image: apply_crop_resize(image, &crop)?,
        camera: adjust_camera_for_crop_resize(camera, crop.crop, crop.out_height, crop.out_width)?,
        depth: depth.map(|d| apply_crop_resize_depth(d, &crop)).transpose()?,
        crop: Some(crop),
    })
}

/// Offsets of the support frames relative to the target, ascending.
pub fn sample_support_offsets(rng: &mut Rng, profile: OffsetProfile) -> Vec<i32> {
    match profile {
        OffsetProfile::Automotive => vec![-1, 1],
        OffsetProfile::Handheld => {
            let back = rng.random_range(1..=4);
            let ahead = rng.random_range(1..=4);
            vec![-back, ahead]
        }
    }
}

/// Frames of one training sample, augmented jointly.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSet {
    pub target: Image,
    pub supports: Vec<(i32, Image)>,
    pub camera: Option<Camera>,
    pub depth: Option<DepthField>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JitterFactors {
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlipJitterRecord {
    pub flipped: bool,
    pub jitter: Option<JitterFactors>,
}

pub fn flip_image(image: &Image) -> Image {
    let (h, w, c) = image.shape();
    Image::from_fn(h, w, c, |v, u, ch| image.get(v, w - 1 - u, ch)).expect("flip preserves a valid shape")
}

pub fn flip_depth(depth: &DepthField) -> DepthField {
    let (h, w) = (depth.height, depth.width);
    let values = (0..h * w).map(|p| depth.get(p / w, w - 1 - p % w)).collect();
    DepthField::new(h, w, values).expect("flip preserves a valid shape")
}

pub fn flip_camera(cam: &Camera) -> Camera {
    Camera {
        cx: (cam.width - 1) as f64 - cam.cx,
        ..*cam
    }
}

/// Brightness, then contrast about the mean grey level, then saturation about
/// the per-pixel grey level, clamping to [0, 1] after each step. Factors of
/// exactly 1 are skipped.
pub fn jitter_image(image: &Image, f: &JitterFactors) -> Image {
    let (h, w, c) = image.shape();
    let mut data = image.data().to_vec();
    let clamp = |x: f64| x.clamp(0.0, 1.0);
    if f.brightness != 1.0 {
        data.iter_mut().for_each(|x| *x = clamp(*x * f.brightness));
    }
    if f.contrast != 1.0 {
        let mean = data.iter().sum::<f64>() / data.len() as f64;
        data.iter_mut()
            .for_each(|x| *x = clamp(mean + f.contrast * (*x - mean)));
    }
    if f.saturation != 1.0 && c == 3 {
        for px in data.chunks_exact_mut(3) {
            let g = (px[0] + px[1] + px[2]) / 3.0;
            px.iter_mut().for_each(|x| *x = clamp(g + f.saturation * (*x - g)));
        }
    }
    Image::new(h, w, c, data).expect("jitter keeps values finite")
}

pub fn flip_and_jitter(set: &FrameSet, rng: &mut Rng, cfg: &AugConfig) -> (FrameSet, FlipJitterRecord) {
    let flipped = rng.random_bool(cfg.flip_prob);
    let jitter_on = rng.random_bool(cfg.jitter_prob);
    let m = cfg.jitter_magnitude;
    let mut factor = || {
        if m > 0.0 {
            rng.random_range(1.0 - m..=1.0 + m)
        } else {
            1.0
        }
    };
    let jitter = jitter_on.then(|| JitterFactors {
        brightness: factor(),
        contrast: factor(),
        saturation: factor(),
    });
    let apply = |img: &Image| {
        let img = if flipped { flip_image(img) } else { img.clone() };
        match &jitter {
            Some(f) => jitter_image(&img, f),
            None => img,
        }
    };
    let out = FrameSet {
        target: apply(&set.target),
        supports: set.supports.iter().map(|(k, img)| (*k, apply(img))).collect(),
        camera: set.camera.map(|c| if flipped { flip_camera(&c) } else { c }),
        depth: set
            .depth
            .as_ref()
            .map(|d| if flipped { flip_depth(d) } else { d.clone() }),
    };
    (out, FlipJitterRecord { flipped, jitter })
}
