//! Keys cubic-convolution resampling.
//!
//! Coordinates follow the half-pixel-centre convention (`align_corners =
//! false`): output sample `i` maps to source position `(i + 0.5) * in / out -
//! 0.5`. Taps outside the image are clamped to the nearest edge sample.
//! Downscaling does not widen the kernel, so it is not anti-aliased.

use super::{PlanarImage, Plane};
use crate::error::{ensure, Result};

pub const KEYS_A: f64 = -0.5;

/// The Keys cubic kernel with parameter [`KEYS_A`].
#[inline]
pub fn cubic_weight(x: f64) -> f64 {
    let a = KEYS_A;
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

/// Four clamped taps and their weights for every output coordinate.
fn axis_taps(input: usize, output: usize) -> Vec<([usize; 4], [f32; 4])> {
    let ratio = input as f64 / output as f64;
    let last = input as isize - 1;
    (0..output)
        .map(|i| {
            let src = (i as f64 + 0.5) * ratio - 0.5;
            let base = src.floor();
            let t = src - base;
            let base = base as isize;
            let mut idx = [0usize; 4];
            let mut wts = [0f32; 4];
            for k in 0..4 {
                idx[k] = (base - 1 + k as isize).clamp(0, last) as usize;
                wts[k] = cubic_weight(t - (k as f64 - 1.0)) as f32;
            }
            (idx, wts)
        })
        .collect()
}

/// Resample a plane to `out_w x out_h`. Results are not clamped; ringing can
/// take values slightly outside the input range.
pub fn bicubic_resize(plane: &Plane, out_w: usize, out_h: usize) -> Result<Plane> {
    ensure(!plane.is_empty(), || {
        "bicubic_resize: empty input plane".into()
    })?;
    ensure(out_w >= 1 && out_h >= 1, || {
        format!("bicubic_resize: invalid output size {out_w}x{out_h}")
    })?;
    let (in_w, in_h) = (plane.width(), plane.height());
    if (in_w, in_h) == (out_w, out_h) {
        return Ok(plane.clone());
    }
    let src = plane.data();

    let xt = axis_taps(in_w, out_w);
    let mut horiz = vec![0f32; out_w * in_h];
    for y in 0..in_h {
        let row = &src[y * in_w..(y + 1) * in_w];
        let dst = &mut horiz[y * out_w..(y + 1) * out_w];
        for (d, (idx, wts)) in dst.iter_mut().zip(&xt) {
            *d = wts[0] * row[idx[0]]
                + wts[1] * row[idx[1]]
                + wts[2] * row[idx[2]]
                + wts[3] * row[idx[3]];
        }
    }

    let yt = axis_taps(in_h, out_h);
    let mut out = vec![0f32; out_w * out_h];
    for (y, (idx, wts)) in yt.iter().enumerate() {
        let rows = idx.map(|r| &horiz[r * out_w..(r + 1) * out_w]);
        let dst = &mut out[y * out_w..(y + 1) * out_w];
        for (x, d) in dst.iter_mut().enumerate() {
            *d = wts[0] * rows[0][x]
                + wts[1] * rows[1][x]
                + wts[2] * rows[2][x]
                + wts[3] * rows[3][x];
        }
    }
    Plane::new(out_w, out_h, out)
}

/// Bicubic upscale of all three planes by `scale`, clamped to `[0, 1]`.
pub fn bicubic_upscale_image(img: &PlanarImage, scale: usize) -> Result<PlanarImage> {
    let (w, h) = (img.width() * scale, img.height() * scale);
    let up = |p: &Plane| -> Result<Plane> {
        let mut out = bicubic_resize(p, w, h)?;
        out.clamp01();
        Ok(out)
    };
    PlanarImage::new(up(&img.y)?, up(&img.cb)?, up(&img.cr)?)
}
