use super::{bicubic_resize, sobel_magnitude, Plane};
use crate::error::{ensure, Result};
use crate::tensor::Tensor;

/// Low-resolution patch side length.
pub const PATCH_SIZE: usize = 16;

/// One training sample: an LR luma patch, its Sobel map, and the HR patch it
/// was downsampled from.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchPair {
    pub lr_patch: Tensor,
    pub edge_patch: Tensor,
    pub hr_patch: Tensor,
    pub scale: usize,
}

/// Tile `(patch_size * scale)`-sided HR windows over `y` every `stride` HR
/// pixels, bicubic-downsample each by `scale`, and attach its Sobel map.
///
/// Images smaller than one HR window yield an empty list.
pub fn extract_patches(
    y: &Plane,
    scale: usize,
    patch_size: usize,
    stride: usize,
) -> Result<Vec<PatchPair>> {
    ensure(scale >= 1, || "extract_patches: scale must be >= 1".into())?;
    ensure(patch_size >= 3, || {
        format!("extract_patches: patch size {patch_size} < 3")
    })?;
    ensure(stride >= 1, || {
        "extract_patches: stride must be >= 1".into()
    })?;
    let hr = patch_size * scale;
    if y.width() < hr || y.height() < hr {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for y0 in (0..=y.height() - hr).step_by(stride) {
        for x0 in (0..=y.width() - hr).step_by(stride) {
            let hr_plane = y.crop(x0, y0, hr, hr)?;
            let lr_plane = bicubic_resize(&hr_plane, patch_size, patch_size)?;
            let edge = sobel_magnitude(&lr_plane)?;
            out.push(PatchPair {
                lr_patch: lr_plane.to_tensor(),
                edge_patch: edge.to_tensor(),
                hr_patch: hr_plane.to_tensor(),
                scale,
            });
        }
    }
    Ok(out)
}
