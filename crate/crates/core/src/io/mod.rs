//! File formats and run configuration.

mod config;
mod manifest;
mod pfm;
mod raster;
mod text;

pub use config::RunConfig;
pub use manifest::{
    subsample_frames, subsample_indices, CameraRecord, SequenceManifest, KEEP_PER_BLOCK, SUBSAMPLE_BLOCK,
};
pub use pfm::{decode_pfm, encode_pfm, read_pfm, read_pfm_image, write_pfm, write_pfm_image, Endian};
pub use raster::{
    colorize_depth, colormap, colormap_coordinates, percentile, read_image, read_png, write_mask_png, write_png,
};
pub use text::{parse_camera, parse_poses, read_camera, read_poses, write_camera, write_loss_trace, write_poses};

use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
