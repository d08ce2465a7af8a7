//! Alignment of affine-ambiguous predictions, depth metrics and cross-dataset
//! aggregation.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::Vector3;
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Camera;
use crate::rng::Rng;
use crate::types::DepthField;

/// Floor applied to aligned disparity before inverting back to depth.
pub const MIN_ALIGNED_DISPARITY: f64 = 1e-6;

/// Prediction and ground truth with the mask of pixels both define.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthPair {
    pub prediction: DepthField,
    pub ground_truth: DepthField,
    pub valid: Vec<bool>,
}

fn usable(d: f64, cap: Option<f64>) -> bool {
    d.is_finite() && d > 0.0 && cap.is_none_or(|c| d <= c)
}

impl DepthPair {
    /// Valid pixels have finite, positive depth in both maps and ground truth
    /// no deeper than `cap`.
    pub fn new(prediction: DepthField, ground_truth: DepthField, cap: Option<f64>) -> Result<Self> {
        if (prediction.height, prediction.width) != (ground_truth.height, ground_truth.width) {
            return Err(Error::ShapeMismatch {
                expected: (ground_truth.height, ground_truth.width, 1),
                got: (prediction.height, prediction.width, 1),
            });
        }
        let valid = prediction
            .values
            .iter()
            .zip(&ground_truth.values)
            .map(|(&p, &g)| usable(g, cap) && p.is_finite() && p > 0.0)
            .collect();
        Ok(Self {
            prediction,
            ground_truth,
            valid,
        })
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    fn valid_pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.prediction
            .values
            .iter()
            .zip(&self.ground_truth.values)
            .zip(&self.valid)
            .filter(|(_, &v)| v)
            .map(|((&p, &g), _)| (p, g))
    }

    fn with_prediction(&self, prediction: DepthField) -> Self {
        Self {
            prediction,
            ground_truth: self.ground_truth.clone(),
            valid: self.valid.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alignment {
    Lsq,
    Median,
    None,
}

impl std::str::FromStr for Alignment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lsq" => Ok(Self::Lsq),
            "median" => Ok(Self::Median),
            "none" => Ok(Self::None),
            other => Err(Error::Config(format!("unknown alignment mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LsqAlignment {
    pub scale: f64,
    pub shift: f64,
    pub aligned: DepthPair,
}

/// Least-squares scale and shift in disparity space.
pub fn align_lsq(pair: &DepthPair) -> Result<LsqAlignment> {
    let n = pair.valid_count();
    if n < 2 {
        return Err(Error::DegenerateAlignment(format!("{n} valid pixels, need at least 2")));
    }
    let inv = |(p, g): (f64, f64)| (1.0 / p, 1.0 / g);
    let (sp, sg) = pair
        .valid_pairs()
        .map(inv)
        .fold((0.0, 0.0), |(a, b), (p, g)| (a + p, b + g));
    let (mp, mg) = (sp / n as f64, sg / n as f64);
    let (var, cov) = pair.valid_pairs().map(inv).fold((0.0, 0.0), |(v, c), (p, g)| {
        (v + (p - mp) * (p - mp), c + (p - mp) * (g - mg))
    });
    if var <= 1e-24 * n as f64 * mp * mp || var == 0.0 {
        return Err(Error::DegenerateAlignment("predicted disparity has no variance".into()));
    }
    let scale = cov / var;
    let shift = mg - scale * mp;
    let values = pair
        .prediction
        .values
        .iter()
        .map(|&p| {
            if p.is_finite() && p > 0.0 {
                1.0 / (scale / p + shift).max(MIN_ALIGNED_DISPARITY)
            } else {
                p
            }
        })
        .collect();
    let prediction = DepthField::new(pair.prediction.height, pair.prediction.width, values)?;
    Ok(LsqAlignment {
        scale,
        shift,
        aligned: pair.with_prediction(prediction),
    })
}

/// Median of a non-empty sample; the mean of the middle two for even counts.
pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Scale factor `median(gt) / median(pred)` and the rescaled prediction.
pub fn align_median(pair: &DepthPair) -> Result<(f64, DepthPair)> {
    if pair.valid_count() == 0 {
        return Err(Error::DegenerateAlignment("no valid pixels".into()));
    }
    let (mut p, mut g): (Vec<f64>, Vec<f64>) = pair.valid_pairs().unzip();
    let (mp, mg) = (median(&mut p), median(&mut g));
    if mp == 0.0 || mg == 0.0 {
        return Err(Error::DegenerateAlignment("zero median depth".into()));
    }
    let scale = mg / mp;
    let values = pair.prediction.values.iter().map(|&x| x * scale).collect();
    let prediction = DepthField::new(pair.prediction.height, pair.prediction.width, values)?;
    Ok((scale, pair.with_prediction(prediction)))
}

pub fn align(pair: &DepthPair, mode: Alignment) -> Result<DepthPair> {
    match mode {
        Alignment::Lsq => Ok(align_lsq(pair)?.aligned),
        Alignment::Median => Ok(align_median(pair)?.1),
        Alignment::None => Ok(pair.clone()),
    }
}

fn require_valid(pair: &DepthPair) -> Result<usize> {
    match pair.valid_count() {
        0 => Err(Error::Empty("no valid pixels to evaluate".into())),
        n => Ok(n),
    }
}

/// Mean absolute relative error over valid pixels, in percent.
pub fn absrel(pair: &DepthPair) -> Result<f64> {
    let n = require_valid(pair)?;
    let sum: f64 = pair.valid_pairs().map(|(p, g)| (g - p).abs() / g).sum();
    Ok(100.0 * sum / n as f64)
}

/// Percentage of valid pixels with `max(p/g, g/p) < threshold`.
pub fn delta_acc(pair: &DepthPair, threshold: f64) -> Result<f64> {
    let n = require_valid(pair)?;
    let hits = pair
        .valid_pairs()
        .filter(|&(p, g)| (p / g).max(g / p) < threshold)
        .count();
    Ok(100.0 * hits as f64 / n as f64)
}

/// Point clouds up to this size use exhaustive nearest-neighbour search.
pub const BRUTE_FORCE_LIMIT: usize = 10_000;
/// Larger clouds are subsampled to this many points.
pub const MAX_CLOUD_POINTS: usize = 100_000;

#[inline]
fn close(a: &Vector3<f64>, b: &Vector3<f64>, thr2: f64) -> bool {
    let d = a - b;
    d.x * d.x + d.y * d.y + d.z * d.z < thr2
}

/// For each query point, whether some reference point lies closer than `threshold`.
pub fn within_threshold_brute(query: &[Vector3<f64>], reference: &[Vector3<f64>], threshold: f64) -> Vec<bool> {
    let thr2 = threshold * threshold;
    query
        .par_iter()
        .map(|q| reference.iter().any(|r| close(q, r, thr2)))
        .collect()
}

/// Same decisions as [`within_threshold_brute`] using a uniform grid.
pub fn within_threshold_grid(query: &[Vector3<f64>], reference: &[Vector3<f64>], threshold: f64) -> Vec<bool> {
    let thr2 = threshold * threshold;
    // slightly enlarged so rounding in the division can never skip a neighbour cell
    let cell = threshold * (1.0 + 1e-6);
    let key = |p: &Vector3<f64>| {
        [
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        ]
    };
    let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (i, r) in reference.iter().enumerate() {
        grid.entry(key(r)).or_default().push(i);
    }
    query
        .par_iter()
        .map(|q| {
            let [x, y, z] = key(q);
            (-1..=1).any(|dx| {
                (-1..=1).any(|dy| {
                    (-1..=1).any(|dz| {
                        grid.get(&[x + dx, y + dy, z + dz])
                            .is_some_and(|ids| ids.iter().any(|&i| close(q, &reference[i], thr2)))
                    })
                })
            })
        })
        .collect()
}

pub fn within_threshold(query: &[Vector3<f64>], reference: &[Vector3<f64>], threshold: f64) -> Vec<bool> {
    if query.len().max(reference.len()) <= BRUTE_FORCE_LIMIT {
        within_threshold_brute(query, reference, threshold)
    } else {
        within_threshold_grid(query, reference, threshold)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FScore {
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
}

/// Precision, recall and F-score (percent) between two point clouds.
pub fn fscore_clouds(pred: &[Vector3<f64>], gt: &[Vector3<f64>], threshold: f64) -> Result<FScore> {
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::Empty("point cloud".into()));
    }
    let frac = |hits: Vec<bool>| hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64;
    let p = frac(within_threshold(pred, gt, threshold));
    let r = frac(within_threshold(gt, pred, threshold));
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    Ok(FScore {
        precision: 100.0 * p,
        recall: 100.0 * r,
        fscore: 100.0 * f,
    })
}

fn cloud(depth: &DepthField, valid: &[bool], cam: &Camera, keep: Option<&[usize]>) -> Vec<Vector3<f64>> {
    let w = depth.width;
    let point = |p: usize| cam.ray((p % w) as f64, (p / w) as f64) * depth.values[p];
    let ids: Vec<usize> = (0..valid.len()).filter(|&p| valid[p]).collect();
    match keep {
        Some(sel) => sel.iter().map(|&i| point(ids[i])).collect(),
        None => ids.into_iter().map(point).collect(),
    }
}

/// F-score of backprojected valid pixels. Clouds above [`MAX_CLOUD_POINTS`]
/// are subsampled with a generator seeded by `seed`.
pub fn fscore(pair: &DepthPair, cam: &Camera, threshold: f64, seed: u64) -> Result<FScore> {
    if (cam.height, cam.width) != (pair.ground_truth.height, pair.ground_truth.width) {
        return Err(Error::InvalidInput(format!(
            "camera is {}x{} but depth is {}x{}",
            cam.height, cam.width, pair.ground_truth.height, pair.ground_truth.width
        )));
    }
    let n = require_valid(pair)?;
    let sel = (n > MAX_CLOUD_POINTS).then(|| {
        let mut rng = Rng::new(seed);
        let mut ids = index::sample(&mut rng, n, MAX_CLOUD_POINTS).into_vec();
        ids.sort_unstable();
        ids
    });
    let pred = cloud(&pair.prediction, &pair.valid, cam, sel.as_deref());
    let gt = cloud(&pair.ground_truth, &pair.valid, cam, sel.as_deref());
    fscore_clouds(&pred, &gt, threshold)
}

/// Mean ordinal rank per method (1 = best); tied values share the mean of
/// the ranks they span.
pub fn rank_aggregate(table: &[Vec<f64>], lower_is_better: &[bool]) -> Result<Vec<f64>> {
    if table.len() < 2 {
        return Err(Error::InvalidInput("ranking needs at least two methods".into()));
    }
    let m = lower_is_better.len();
    if m == 0 || table.iter().any(|row| row.len() != m) {
        return Err(Error::InvalidInput(format!("every method needs {m} metric values")));
    }
    let mut total = vec![0.0; table.len()];
    for (j, &lower) in lower_is_better.iter().enumerate() {
        for (i, row) in table.iter().enumerate() {
            let x = row[j];
            let better = |y: f64| if lower { y < x } else { y > x };
            let ahead = table.iter().filter(|r| better(r[j])).count();
            let tied = table.iter().filter(|r| r[j] == x).count();
            total[i] += ahead as f64 + (tied as f64 + 1.0) / 2.0;
        }
    }
    Ok(total.into_iter().map(|t| t / m as f64).collect())
}

/// Mean signed relative change versus `baseline`, in percent; positive is better.
pub fn improvement_aggregate(method: &[f64], baseline: &[f64], lower_is_better: &[bool]) -> Result<f64> {
    if method.len() != baseline.len() || method.len() != lower_is_better.len() || method.is_empty() {
        return Err(Error::InvalidInput(
            "metric vectors must be non-empty and equally long".into(),
        ));
    }
    let mut sum = 0.0;
    for ((&m, &b), &lower) in method.iter().zip(baseline).zip(lower_is_better) {
        if b == 0.0 {
            return Err(Error::InvalidInput("baseline metric is zero".into()));
        }
        let sign = if lower { -1.0 } else { 1.0 };
        sum += sign * (m - b) / b;
    }
    Ok(100.0 * sum / method.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub alignment: Alignment,
    /// Ground truth deeper than this is ignored.
    pub depth_cap: Option<f64>,
    pub delta_threshold: f64,
    pub fscore_threshold: f64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            alignment: Alignment::Lsq,
            depth_cap: None,
            delta_threshold: 1.25,
            fscore_threshold: 0.10,
            seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth_cap.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::Config("depth_cap must be positive".into()));
        }
        if !(self.delta_threshold > 1.0) || !(self.fscore_threshold > 0.0) {
            return Err(Error::Config(
                "delta_threshold must exceed 1 and fscore_threshold must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub id: String,
    pub absrel: f64,
    pub delta25: f64,
    pub fscore: f64,
    pub images: usize,
}

impl MetricsRecord {
    /// `key=value` line.
    pub fn to_line(&self) -> String {
        format!(
            "id={} images={} absrel={:.6} delta25={:.6} fscore={:.6}",
            self.id, self.images, self.absrel, self.delta25, self.fscore
        )
    }

    pub fn from_line(line: &str) -> Result<Self> {
        let mut map = HashMap::new();
        for tok in line.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| Error::InvalidInput(format!("expected key=value, got `{tok}`")))?;
            map.insert(k, v);
        }
        let get = |k: &str| {
            map.get(k)
                .copied()
                .ok_or_else(|| Error::InvalidInput(format!("missing `{k}` in metrics line")))
        };
        let num = |k: &str| -> Result<f64> {
            get(k)?
                .parse()
                .map_err(|_| Error::InvalidInput(format!("`{k}` is not a number")))
        };
        Ok(Self {
            id: get("id")?.to_string(),
            images: get("images")?
                .parse()
                .map_err(|_| Error::InvalidInput("`images` is not an integer".into()))?,
            absrel: num("absrel")?,
            delta25: num("delta25")?,
            fscore: num("fscore")?,
        })
    }

    /// Metric values in `absrel, delta25, fscore` order with their orientation.
    pub fn values(&self) -> ([f64; 3], [bool; 3]) {
        ([self.absrel, self.delta25, self.fscore], [true, false, false])
    }
}

/// Aligns one prediction and computes its metrics.
pub fn evaluate_pair(
    id: &str,
    prediction: &DepthField,
    ground_truth: &DepthField,
    cam: &Camera,
    cfg: &EvalConfig,
) -> Result<MetricsRecord> {
    let pair = DepthPair::new(prediction.clone(), ground_truth.clone(), cfg.depth_cap)?;
    let aligned = align(&pair, cfg.alignment)?;
    Ok(MetricsRecord {
        id: id.to_string(),
        absrel: absrel(&aligned)?,
        delta25: delta_acc(&aligned, cfg.delta_threshold)?,
        fscore: fscore(&aligned, cam, cfg.fscore_threshold, cfg.seed)?.fscore,
        images: 1,
    })
}

/// Mean of per-image records, accumulated in id order so the result does not
/// depend on the order images are listed.
pub fn mean_record(dataset: &str, records: &[MetricsRecord]) -> Result<MetricsRecord> {
    if records.is_empty() {
        return Err(Error::Empty("no images to average".into()));
    }
    let mut sorted: Vec<&MetricsRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let n = sorted.len() as f64;
    let mean = |f: fn(&MetricsRecord) -> f64| sorted.iter().map(|r| f(r)).sum::<f64>() / n;
    Ok(MetricsRecord {
        id: dataset.to_string(),
        absrel: mean(|r| r.absrel),
        delta25: mean(|r| r.delta25),
        fscore: mean(|r| r.fscore),
        images: sorted.len(),
    })
}

/// Evaluates named `(id, prediction, ground truth)` triples in parallel.
pub fn evaluate_images(
    dataset: &str,
    images: &[(String, DepthField, DepthField)],
    cam: &Camera,
    cfg: &EvalConfig,
) -> Result<(MetricsRecord, Vec<MetricsRecord>)> {
    cfg.validate()?;
    let per_image = images
        .par_iter()
        .map(|(id, p, g)| evaluate_pair(id, p, g, cam, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok((mean_record(dataset, &per_image)?, per_image))
}

/// Evaluates every `.pfm` depth map in `gt_dir` against the file of the same
/// name in `pred_dir`.
pub fn evaluate_dataset(
    pred_dir: &Path,
    gt_dir: &Path,
    cam: &Camera,
    cfg: &EvalConfig,
) -> Result<(MetricsRecord, Vec<MetricsRecord>)> {
    let list = |dir: &Path| -> Result<Vec<String>> {
        let mut names = Vec::new();
        for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name.ends_with(".pfm") {
                names.push(name);
            }
        }
        names.sort();
        Ok(names)
    };
    let (pred_names, gt_names) = (list(pred_dir)?, list(gt_dir)?);
    if pred_names != gt_names {
        let missing: Vec<_> = gt_names.iter().filter(|n| !pred_names.contains(n)).collect();
        let extra: Vec<_> = pred_names.iter().filter(|n| !gt_names.contains(n)).collect();
        return Err(Error::Manifest(format!(
            "missing predictions {missing:?}, unexpected predictions {extra:?}"
        )));
    }
    if gt_names.is_empty() {
        return Err(Error::Empty(format!("no .pfm files in {}", gt_dir.display())));
    }
    let images = gt_names
        .iter()
        .map(|name| {
            let p = crate::io::read_pfm(&pred_dir.join(name))?;
            let g = crate::io::read_pfm(&gt_dir.join(name))?;
            Ok((name.trim_end_matches(".pfm").to_string(), p, g))
        })
        .collect::<Result<Vec<_>>>()?;
    let dataset = gt_dir
        .file_name()
        .map_or_else(|| "dataset".to_string(), |n| n.to_string_lossy().into_owned());
    evaluate_images(&dataset, &images, cam, cfg)
}
