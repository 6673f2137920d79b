use std::path::Path;

use super::Plane;
use crate::error::{ensure, Error, Result};

/// Interleaved 8-bit RGB, row-major. Alpha is always dropped on load.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        ensure(data.len() == width * height * 3, || {
            format!(
                "rgb {width}x{height} needs {} bytes, got {}",
                width * height * 3,
                data.len()
            )
        })?;
        Ok(Self {
            width,
            height,
            data,
        })
    }
}

/// Decode a PNG or JPEG file to 8-bit RGB.
pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    Ok(RgbImage {
        width: w as usize,
        height: h as usize,
        data: rgb.into_raw(),
    })
}

pub fn save_rgb_png(img: &RgbImage, path: &Path) -> Result<()> {
    image::save_buffer_with_format(
        path,
        &img.data,
        img.width as u32,
        img.height as u32,
        image::ExtendedColorType::Rgb8,
        image::ImageFormat::Png,
    )
    .map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Write a plane as 8-bit greyscale PNG, clamping to `[0, 1]`.
pub fn save_gray_png(plane: &Plane, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = plane
        .data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    image::save_buffer_with_format(
        path,
        &bytes,
        plane.width() as u32,
        plane.height() as u32,
        image::ExtendedColorType::L8,
        image::ImageFormat::Png,
    )
    .map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}
