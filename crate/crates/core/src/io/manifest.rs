//! Line-oriented sequence manifests and the frame subsampling rule.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::text::{camera_fields, camera_from_fields};
use super::{read_to_string, write_bytes};
use crate::error::{Error, Result};
use crate::geometry::Camera;
use crate::types::DepthRange;

pub const SUBSAMPLE_BLOCK: usize = 250;
pub const KEEP_PER_BLOCK: usize = 100;

/// Indices kept from `n` frames: the first 100 of every block of 250.
pub fn subsample_indices(n: usize) -> Vec<usize> {
    (0..n).filter(|i| i % SUBSAMPLE_BLOCK < KEEP_PER_BLOCK).collect()
}

pub fn subsample_frames<T: Clone>(frames: &[T]) -> Vec<T> {
    subsample_indices(frames.len())
        .into_iter()
        .map(|i| frames[i].clone())
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CameraRecord {
    Known(Camera),
    /// Intrinsics are estimated jointly with depth.
    Learn,
}

/// A frame sequence with one target and its support offsets. Relative paths
/// resolve against `root`, the manifest's directory.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceManifest {
    pub root: PathBuf,
    pub fps: f64,
    pub camera: CameraRecord,
    pub depth_range: Option<DepthRange>,
    /// Index into `frames` of the target.
    pub target: usize,
    pub offsets: Vec<i32>,
    /// Optional `k rx ry rz tx ty tz` file with known poses.
    pub poses: Option<PathBuf>,
    pub gt_depth: Option<PathBuf>,
    pub frames: Vec<PathBuf>,
    pub retained: Vec<usize>,
}

impl SequenceManifest {
    pub fn new(root: impl Into<PathBuf>, frames: Vec<PathBuf>, camera: CameraRecord) -> Self {
        let retained = subsample_indices(frames.len());
        Self {
            root: root.into(),
            fps: 10.0,
            camera,
            depth_range: None,
            target: 1.min(frames.len().saturating_sub(1)),
            offsets: vec![-1, 1],
            poses: None,
            gt_depth: None,
            frames,
            retained,
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn target_path(&self) -> PathBuf {
        self.resolve(&self.frames[self.target])
    }

    /// `(offset, path)` for every support frame.
    pub fn support_paths(&self) -> Vec<(i32, PathBuf)> {
        self.offsets
            .iter()
            .map(|&k| (k, self.resolve(&self.frames[(self.target as i64 + k as i64) as usize])))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Manifest(m));
        if self.frames.is_empty() {
            return err("no frames listed".into());
        }
        if !(self.fps > 0.0) {
            return err(format!("fps must be positive, got {}", self.fps));
        }
        if self.retained.windows(2).any(|w| w[0] >= w[1]) {
            return err("retained frame indices must be strictly increasing".into());
        }
        if self.retained.last().is_some_and(|&i| i >= self.frames.len()) {
            return err("retained index beyond the frame list".into());
        }
        if let CameraRecord::Known(cam) = &self.camera {
            cam.validate().map_err(|e| Error::Manifest(e.to_string()))?;
        }
        if self.target >= self.frames.len() {
            return err(format!("target {} beyond {} frames", self.target, self.frames.len()));
        }
        let mut seen = Vec::new();
        for &k in &self.offsets {
            let idx = self.target as i64 + k as i64;
            if k == 0 || seen.contains(&k) {
                return err(format!("support offset {k} is zero or repeated"));
            }
            if idx < 0 || idx as usize >= self.frames.len() {
                return err(format!("support offset {k} leaves the frame list"));
            }
            if !self.retained.contains(&(idx as usize)) {
                return err(format!("support frame {idx} was not retained"));
            }
            seen.push(k);
        }
        if !self.retained.contains(&self.target) {
            return err(format!("target frame {} was not retained", self.target));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let join = |v: &mut dyn Iterator<Item = String>| v.collect::<Vec<_>>().join(" ");
        let mut s = String::from("# photodepth sequence manifest\n");
        writeln!(s, "fps {}", self.fps).unwrap();
        match &self.camera {
            CameraRecord::Known(c) => writeln!(s, "camera {}", camera_fields(c)).unwrap(),
            CameraRecord::Learn => s.push_str("camera learn\n"),
        }
        if let Some(r) = self.depth_range {
            writeln!(s, "depth_range {} {}", r.min, r.max).unwrap();
        }
        writeln!(s, "target {}", self.target).unwrap();
        writeln!(s, "offsets {}", join(&mut self.offsets.iter().map(|k| k.to_string()))).unwrap();
        if let Some(p) = &self.poses {
            writeln!(s, "poses {}", p.display()).unwrap();
        }
        if let Some(p) = &self.gt_depth {
            writeln!(s, "gt_depth {}", p.display()).unwrap();
        }
        writeln!(s, "retained {}", join(&mut self.retained.iter().map(|i| i.to_string()))).unwrap();
        for f in &self.frames {
            writeln!(s, "frame {}", f.display()).unwrap();
        }
        s
    }

    pub fn parse(text: &str, root: impl Into<PathBuf>) -> Result<Self> {
        let mut m = Self::new(root, Vec::new(), CameraRecord::Learn);
        let mut camera = None;
        let mut retained = None;
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let rest = rest.trim();
            let bad = |what: &str| Error::Manifest(format!("line {}: {what}: `{line}`", n + 1));
            let nums = |s: &str| -> Result<Vec<f64>> {
                s.split_whitespace()
                    .map(|t| t.parse().map_err(|_| bad("not a number")))
                    .collect()
            };
            match key {
                "fps" => m.fps = rest.parse().map_err(|_| bad("bad fps"))?,
                "camera" if rest == "learn" => camera = Some(CameraRecord::Learn),
                "camera" => {
                    let cam = camera_from_fields(rest, &m.root).map_err(|e| bad(&e.to_string()))?;
                    camera = Some(CameraRecord::Known(cam));
                }
                "depth_range" => {
                    let v = nums(rest)?;
                    if v.len() != 2 {
                        return Err(bad("depth_range needs two values"));
                    }
                    m.depth_range = Some(DepthRange::new(v[0], v[1]).map_err(|e| bad(&e.to_string()))?);
                }
                "target" => m.target = rest.parse().map_err(|_| bad("bad target index"))?,
                "offsets" => {
                    m.offsets = rest
                        .split_whitespace()
                        .map(|t| t.parse().map_err(|_| bad("bad offset")))
                        .collect::<Result<_>>()?
                }
                "poses" => m.poses = Some(PathBuf::from(rest)),
                "gt_depth" => m.gt_depth = Some(PathBuf::from(rest)),
                "retained" => {
                    retained = Some(
                        rest.split_whitespace()
                            .map(|t| t.parse().map_err(|_| bad("bad frame index")))
                            .collect::<Result<Vec<usize>>>()?,
                    )
                }
                "frame" if !rest.is_empty() => m.frames.push(PathBuf::from(rest)),
                _ => return Err(bad("unknown record")),
            }
        }
        m.camera = camera.ok_or_else(|| Error::Manifest("missing `camera` record".into()))?;
        m.retained = retained.unwrap_or_else(|| subsample_indices(m.frames.len()));
        m.validate()?;
        Ok(m)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&read_to_string(path)?, root)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_bytes(path, self.to_text().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn subsampling_examples() {
        assert_eq!(subsample_indices(250), (0..100).collect::<Vec<_>>());
        let want: Vec<usize> = (0..100).chain(250..350).collect();
        assert_eq!(subsample_indices(500), want);
        assert_eq!(subsample_indices(80), (0..80).collect::<Vec<_>>());
        assert_eq!(subsample_frames(&["a", "b"]), vec!["a", "b"]);
    }

    proptest! {
        #[test]
        fn subsample_length_matches_block_sum(n in 0usize..2000) {
            let want: usize = (0..n).step_by(SUBSAMPLE_BLOCK).map(|s| (n - s).min(SUBSAMPLE_BLOCK).min(KEEP_PER_BLOCK)).sum();
            prop_assert_eq!(subsample_indices(n).len(), want);
        }
    }

    fn sample() -> SequenceManifest {
        let frames = (0..3).map(|i| PathBuf::from(format!("frames/{i}.pfm"))).collect();
        let mut m = SequenceManifest::new(
            "/data/seq",
            frames,
            CameraRecord::Known(Camera::new(60.0, 60.5, 47.0, 32.5, 96, 64).unwrap()),
        );
        m.depth_range = Some(DepthRange::new(2.0, 12.0).unwrap());
        m.poses = Some("poses.txt".into());
        m
    }

    #[test]
    fn text_round_trip() {
        let m = sample();
        assert_eq!(SequenceManifest::parse(&m.to_text(), "/data/seq").unwrap(), m);
        let mut learn = m.clone();
        learn.camera = CameraRecord::Learn;
        assert_eq!(SequenceManifest::parse(&learn.to_text(), "/data/seq").unwrap(), learn);
        assert_eq!(m.support_paths()[1], (1, PathBuf::from("/data/seq/frames/2.pfm")));
    }

    #[test]
    fn invalid_manifests_are_rejected() {
        let text = sample().to_text();
        assert!(SequenceManifest::parse(&text.replace("camera 60", "camera -60"), "").is_err());
        assert!(SequenceManifest::parse(&text.replace("offsets -1 1", "offsets -1 2"), "").is_err());
        assert!(SequenceManifest::parse(&text.replace("retained 0 1 2", "retained 0 2 1"), "").is_err());
        assert!(SequenceManifest::parse(&format!("{text}colour red\n"), "").is_err());
        assert!(SequenceManifest::parse("frame a.pfm\n", "").is_err());
    }
}
