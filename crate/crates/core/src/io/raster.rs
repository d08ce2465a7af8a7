//! 8-bit PNG input/output and depth visualization.

use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma, RgbImage};

use super::pfm::read_pfm_image;
use crate::error::{Error, Result};
use crate::types::{DepthField, Image};

pub fn read_png(path: &Path) -> Result<Image> {
    let img = image::open(path).map_err(|e| Error::format(path, e.to_string()))?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    let data = rgb.into_raw().into_iter().map(|b| b as f64 / 255.0).collect();
    Image::new(h as usize, w as usize, 3, data).map_err(|e| Error::format(path, e.to_string()))
}

/// Reads `.pfm` losslessly and anything else through the PNG decoder.
pub fn read_image(path: &Path) -> Result<Image> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pfm") => read_pfm_image(path),
        _ => read_png(path),
    }
}

fn quantize(x: f64) -> u8 {
    (x.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn save(path: &Path, result: image::ImageResult<()>) -> Result<()> {
    result.map_err(|e| Error::format(path, e.to_string()))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

pub fn write_png(path: &Path, image: &Image) -> Result<()> {
    ensure_parent(path)?;
    let (h, w, c) = image.shape();
    let bytes: Vec<u8> = image.data().iter().map(|&x| quantize(x)).collect();
    if c == 3 {
        let buf: RgbImage = ImageBuffer::from_raw(w as u32, h as u32, bytes).expect("buffer matches shape");
        save(path, buf.save(path))
    } else {
        let buf: GrayImage = ImageBuffer::from_raw(w as u32, h as u32, bytes).expect("buffer matches shape");
        save(path, buf.save(path))
    }
}

pub fn write_mask_png(path: &Path, height: usize, width: usize, mask: &[bool]) -> Result<()> {
    ensure_parent(path)?;
    let buf = ImageBuffer::from_fn(width as u32, height as u32, |u, v| {
        Luma([if mask[v as usize * width + u as usize] {
            255u8
        } else {
            0
        }])
    });
    save(path, buf.save(path))
}

/// Linear-interpolated percentile, `q` in [0, 1].
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Colormap coordinate per pixel: disparity clipped to its 5th–95th
/// percentile and scaled to [0, 1], near surfaces high.
pub fn colormap_coordinates(depth: &DepthField) -> Vec<f64> {
    let disp: Vec<f64> = depth
        .values
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 0.0 })
        .collect();
    let (lo, hi) = (percentile(&disp, 0.05), percentile(&disp, 0.95));
    disp.iter()
        .map(|&x| {
            if hi > lo {
                ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
            } else {
                0.5
            }
        })
        .collect()
}

// magma, sampled at nine evenly spaced stops
const MAGMA: [[f64; 3]; 9] = [
    [0.001, 0.000, 0.014],
    [0.113, 0.065, 0.277],
    [0.316, 0.072, 0.485],
    [0.512, 0.128, 0.507],
    [0.716, 0.215, 0.475],
    [0.904, 0.319, 0.388],
    [0.986, 0.533, 0.382],
    [0.997, 0.766, 0.535],
    [0.987, 0.991, 0.750],
];

pub fn colormap(t: f64) -> [f64; 3] {
    let x = t.clamp(0.0, 1.0) * (MAGMA.len() - 1) as f64;
    let i = (x.floor() as usize).min(MAGMA.len() - 2);
    let a = x - i as f64;
    std::array::from_fn(|c| MAGMA[i][c] + a * (MAGMA[i + 1][c] - MAGMA[i][c]))
}

pub fn colorize_depth(depth: &DepthField) -> Result<Image> {
    if depth.values.is_empty() {
        return Err(Error::Empty("depth map".into()));
    }
    let coords = colormap_coordinates(depth);
    let data = coords.iter().flat_map(|&t| colormap(t)).collect();
    Image::new(depth.height, depth.width, 3, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_is_exact_on_8bit_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.png");
        let img = Image::from_fn(4, 6, 3, |v, u, c| ((v * 18 + u * 3 + c) * 3) as f64 / 255.0).unwrap();
        write_png(&p, &img).unwrap();
        assert_eq!(read_image(&p).unwrap(), img);
    }

    #[test]
    fn constant_depth_gives_constant_colour() {
        let img = colorize_depth(&DepthField::constant(4, 5, 3.0)).unwrap();
        assert!(img.data().chunks(3).all(|px| px == &img.data()[..3]));
    }

    #[test]
    fn ramp_maps_monotonically() {
        let d = DepthField::new(1, 50, (0..50).map(|i| 1.0 + i as f64 * 0.1).collect()).unwrap();
        let t = colormap_coordinates(&d);
        assert!(t.windows(2).all(|w| w[0] >= w[1]));
        assert!(t.windows(2).any(|w| w[0] > w[1]));
        let luminance = |c: [f64; 3]| 0.2126 * c[0] + 0.7152 * c[1] + 0.0722 * c[2];
        let l: Vec<f64> = (0..=100).map(|i| luminance(colormap(i as f64 / 100.0))).collect();
        assert!(l.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn outliers_are_clipped_at_percentiles() {
        // disparities 1..=18 plus outliers 0.001 and 1000
        let mut disp: Vec<f64> = (1..=18).map(f64::from).collect();
        disp.push(0.001);
        disp.push(1000.0);
        let d = DepthField::new(1, 20, disp.iter().map(|x| 1.0 / x).collect()).unwrap();
        // sorted positions 0.95 and 18.05 of 0..=19
        let lo = 0.001 + 0.95 * (1.0 - 0.001);
        let hi = 18.0 + 0.05 * (1000.0 - 18.0);
        let disp_f: Vec<f64> = d.values.iter().map(|x| 1.0 / x).collect();
        assert!((percentile(&disp_f, 0.05) - lo).abs() < 1e-9);
        assert!((percentile(&disp_f, 0.95) - hi).abs() < 1e-9);
        let t = colormap_coordinates(&d);
        assert_eq!(t[18], 0.0);
        assert_eq!(t[19], 1.0);
        assert!((t[9] - (10.0 - lo) / (hi - lo)).abs() < 1e-9);
    }
}
