//! Plain-text camera, pose and loss-trace records.

use std::fmt::Write as _;
use std::path::Path;

use super::{read_to_string, write_bytes};
use crate::error::{Error, Result};
use crate::geometry::{Camera, Pose};
use crate::optim::OptimResult;

fn numbers(line: &str, path: &Path) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::format(path, format!("`{t}` is not a number")))
        })
        .collect()
}

fn content_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
}

/// `fx fy cx cy W H`.
pub fn parse_camera(text: &str, path: &Path) -> Result<Camera> {
    let line = content_lines(text)
        .next()
        .ok_or_else(|| Error::format(path, "empty camera file"))?;
    camera_from_fields(line, path)
}

pub(crate) fn camera_from_fields(line: &str, path: &Path) -> Result<Camera> {
    let v = numbers(line, path)?;
    if v.len() != 6 {
        return Err(Error::format(path, format!("camera needs 6 fields, got {}", v.len())));
    }
    let dim = |x: f64| -> Result<usize> {
        if x.fract() == 0.0 && x > 0.0 {
            Ok(x as usize)
        } else {
            Err(Error::format(
                path,
                format!("image dimension {x} is not a positive integer"),
            ))
        }
    };
    Camera::new(v[0], v[1], v[2], v[3], dim(v[4])?, dim(v[5])?).map_err(|e| Error::format(path, e.to_string()))
}

pub(crate) fn camera_fields(cam: &Camera) -> String {
    format!(
        "{} {} {} {} {} {}",
        cam.fx, cam.fy, cam.cx, cam.cy, cam.width, cam.height
    )
}

pub fn read_camera(path: &Path) -> Result<Camera> {
    parse_camera(&read_to_string(path)?, path)
}

pub fn write_camera(path: &Path, cam: &Camera) -> Result<()> {
    write_bytes(path, format!("# fx fy cx cy W H\n{}\n", camera_fields(cam)).as_bytes())
}

/// One `k rx ry rz tx ty tz` line per support frame.
pub fn parse_poses(text: &str, path: &Path) -> Result<Vec<(i32, Pose)>> {
    content_lines(text)
        .map(|line| {
            let mut it = line.split_whitespace();
            let k: i32 = it
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::format(path, format!("bad frame offset in `{line}`")))?;
            let rest: Vec<&str> = it.collect();
            let v = numbers(&rest.join(" "), path)?;
            if v.len() != 6 {
                return Err(Error::format(path, format!("pose needs 6 values, got {}", v.len())));
            }
            Ok((k, Pose::from_slice(&v)))
        })
        .collect()
}

pub fn read_poses(path: &Path) -> Result<Vec<(i32, Pose)>> {
    parse_poses(&read_to_string(path)?, path)
}

pub fn write_poses(path: &Path, poses: &[(i32, Pose)]) -> Result<()> {
    let mut s = String::from("# k rx ry rz tx ty tz (target -> frame k)\n");
    for (k, p) in poses {
        let a = p.to_array();
        writeln!(s, "{k} {} {} {} {} {} {}", a[0], a[1], a[2], a[3], a[4], a[5]).unwrap();
    }
    write_bytes(path, s.as_bytes())
}

pub fn write_loss_trace(path: &Path, result: &OptimResult) -> Result<()> {
    let mut s = String::from("iteration,loss,mask_coverage,learning_rate\n");
    for (i, ((l, m), lr)) in result
        .loss_trace
        .iter()
        .zip(&result.mask_coverage_trace)
        .zip(&result.lr_trace)
        .enumerate()
    {
        writeln!(s, "{i},{l},{m},{lr}").unwrap();
    }
    write_bytes(path, s.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn camera_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cam.txt");
        let cam = Camera::new(59.52, 60.1, 47.04, 32.64, 96, 64).unwrap();
        write_camera(&p, &cam).unwrap();
        assert_eq!(read_camera(&p).unwrap(), cam);
    }

    #[test]
    fn poses_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("poses.txt");
        let poses = vec![
            (-2, Pose::new([0.01, -0.2, 1e-9], [0.3, 0.0, -1.5])),
            (1, Pose::identity()),
        ];
        write_poses(&p, &poses).unwrap();
        assert_eq!(read_poses(&p).unwrap(), poses);
    }

    #[test]
    fn bad_records_are_rejected() {
        let p = Path::new("x");
        assert!(parse_camera("1 2 3", p).is_err());
        assert!(parse_camera("10 10 5 5 9.5 8", p).is_err());
        assert!(parse_poses("1 0 0 0 0 0", p).is_err());
        assert!(parse_poses("a 0 0 0 0 0 0", p).is_err());
    }
}
