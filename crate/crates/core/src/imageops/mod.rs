//! Everything between an image file and a network tensor: colour conversion,
//! bicubic resampling, edge operators and training-patch extraction.

mod color;
mod edges;
mod io;
mod patches;
mod resize;

pub use color::{rgb_to_ycbcr, ycbcr_to_rgb};
pub use edges::{
    canny_edges, gaussian_blur, sobel_gradients, sobel_magnitude, CannyThresholds, SOBEL_SCALE,
};
pub use io::{load_rgb, save_gray_png, save_rgb_png, RgbImage};
pub use patches::{extract_patches, PatchPair, PATCH_SIZE};
pub use resize::{bicubic_resize, bicubic_upscale_image, cubic_weight, KEYS_A};

use crate::error::{ensure, Result};
use crate::tensor::Tensor;

/// A single 2-D plane of `f32` samples, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        ensure(data.len() == width * height, || {
            format!(
                "plane {width}x{height} needs {} samples, got {}",
                width * height,
                data.len()
            )
        })?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Copy of the window at `(x0, y0)` of size `w x h`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Plane> {
        ensure(x0 + w <= self.width && y0 + h <= self.height, || {
            format!(
                "crop {w}x{h}+{x0}+{y0} outside {}x{} plane",
                self.width, self.height
            )
        })?;
        let mut data = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            data.extend_from_slice(&self.data[y * self.width + x0..y * self.width + x0 + w]);
        }
        Ok(Plane {
            width: w,
            height: h,
            data,
        })
    }

    /// Remove `border` samples from every side.
    pub fn shave(&self, border: usize) -> Result<Plane> {
        ensure(2 * border < self.width && 2 * border < self.height, || {
            format!(
                "cannot shave {border} from {}x{} plane",
                self.width, self.height
            )
        })?;
        self.crop(
            border,
            border,
            self.width - 2 * border,
            self.height - 2 * border,
        )
    }

    pub fn clamp01(&mut self) {
        self.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    }

    /// As a `1 x 1 x h x w` tensor.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec([1, 1, self.height, self.width], self.data.clone())
            .expect("plane length matches its dimensions")
    }

    /// Single-channel tensor item `b` back to a plane.
    pub fn from_tensor(t: &Tensor, b: usize) -> Result<Plane> {
        ensure(t.channels() == 1, || {
            format!("expected single-channel tensor, got {:?}", t.shape())
        })?;
        ensure(b < t.batch(), || format!("batch index {b} out of range"))?;
        Plane::new(t.width(), t.height(), t.item(b).to_vec())
    }
}

/// Y/Cb/Cr planes in `[0, 1]`. Chroma is stored mid-offset (`raw / 255`), so a
/// neutral grey has `cb == cr == 128/255`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarImage {
    pub y: Plane,
    pub cb: Plane,
    pub cr: Plane,
}

impl PlanarImage {
    pub fn new(y: Plane, cb: Plane, cr: Plane) -> Result<Self> {
        let dims = (y.width, y.height);
        ensure(
            (cb.width, cb.height) == dims && (cr.width, cr.height) == dims,
            || "Y, Cb and Cr planes must share dimensions".into(),
        )?;
        for p in [&y, &cb, &cr] {
            ensure(
                p.data
                    .iter()
                    .all(|v| v.is_finite() && (0.0..=1.0).contains(v)),
                || "planar image samples must be finite and within [0, 1]".into(),
            )?;
        }
        Ok(Self { y, cb, cr })
    }

    /// Luma-only image with neutral chroma.
    pub fn from_luma(y: Plane) -> Result<Self> {
        let (w, h) = (y.width, y.height);
        Self::new(
            y,
            Plane::filled(w, h, 128.0 / 255.0),
            Plane::filled(w, h, 128.0 / 255.0),
        )
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.y.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.y.height
    }
}
