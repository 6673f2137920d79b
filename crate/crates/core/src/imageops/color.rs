//! Full-range BT.601 (JPEG) colour conversion.

use super::{PlanarImage, Plane, RgbImage};
use crate::error::{ensure, Result};

const OFFSET: f32 = 128.0;

/// Interleaved 8-bit RGB to Y/Cb/Cr planes scaled to `[0, 1]`.
pub fn rgb_to_ycbcr(rgb: &RgbImage) -> Result<PlanarImage> {
    let (w, h) = (rgb.width, rgb.height);
    ensure(rgb.data.len() == w * h * 3, || {
        format!(
            "rgb buffer for {w}x{h} needs {} bytes, got {}",
            w * h * 3,
            rgb.data.len()
        )
    })?;
    let n = w * h;
    let (mut y, mut cb, mut cr) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for px in rgb.data.chunks_exact(3) {
        let (r, g, b) = (f32::from(px[0]), f32::from(px[1]), f32::from(px[2]));
        let luma = 0.299 * r + 0.587 * g + 0.114 * b;
        let blue = OFFSET - 0.168_736 * r - 0.331_264 * g + 0.5 * b;
        let red = OFFSET + 0.5 * r - 0.418_688 * g - 0.081_312 * b;
        // Pure blue/red push chroma to 255.5; JPEG clamps.
        y.push((luma / 255.0).clamp(0.0, 1.0));
        cb.push((blue / 255.0).clamp(0.0, 1.0));
        cr.push((red / 255.0).clamp(0.0, 1.0));
    }
    PlanarImage::new(
        Plane::new(w, h, y)?,
        Plane::new(w, h, cb)?,
        Plane::new(w, h, cr)?,
    )
}

#[inline]
fn to_u8(v: f32) -> u8 {
    // `round` is half-away-from-zero.
    v.round().clamp(0.0, 255.0) as u8
}

/// Inverse of [`rgb_to_ycbcr`], clamped and rounded to 8 bits.
pub fn ycbcr_to_rgb(img: &PlanarImage) -> RgbImage {
    let (w, h) = (img.width(), img.height());
    let mut data = Vec::with_capacity(w * h * 3);
    for ((&y, &cb), &cr) in img.y.data().iter().zip(img.cb.data()).zip(img.cr.data()) {
        let y = y * 255.0;
        let cb = cb * 255.0 - OFFSET;
        let cr = cr * 255.0 - OFFSET;
        data.push(to_u8(y + 1.402 * cr));
        data.push(to_u8(y - 0.344_136 * cb - 0.714_136 * cr));
        data.push(to_u8(y + 1.772 * cb));
    }
    RgbImage {
        width: w,
        height: h,
        data,
    }
}
