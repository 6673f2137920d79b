//! PSNR, SSIM and dataset-level evaluation.
//!
//! Every image is cropped to a multiple of the scale, bicubic-downsampled to
//! make the LR input, super-resolved, and compared with the original on the
//! luma channel after removing `border_shave` pixels per side. Values stay in
//! floating point on `[0, 1]`; nothing is quantised to 8 bits in between.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Deserializer, Serialize};

use crate::bench::{duration_ms, LatencyStats};
use crate::error::{ensure, Error, Result};
use crate::imageops::{bicubic_resize, load_rgb, rgb_to_ycbcr, PlanarImage, Plane};
use crate::model::{param_count, super_resolve, ModelParams};
use crate::training::list_images;

/// Parameter count the original authors report for their network.
pub const PUBLISHED_PARAM_COUNT: usize = 57_564;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

fn same_shape(a: &Plane, b: &Plane, what: &str) -> Result<()> {
    ensure((a.width(), a.height()) == (b.width(), b.height()), || {
        format!(
            "{what}: planes are {}x{} and {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )
    })
}

pub fn mse(reference: &Plane, test: &Plane) -> Result<f64> {
    same_shape(reference, test, "mse")?;
    ensure(!reference.is_empty(), || "mse: empty planes".into())?;
    let sum: f64 = reference
        .data()
        .iter()
        .zip(test.data())
        .map(|(&a, &b)| {
            let d = f64::from(a) - f64::from(b);
            d * d
        })
        .sum();
    Ok(sum / reference.data().len() as f64)
}

/// PSNR for a given mean squared error; `+inf` when it is zero.
pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

/// `10 log10(peak^2 / MSE)` in dB, `+inf` for identical planes.
pub fn psnr(reference: &Plane, test: &Plane, peak: f64) -> Result<f64> {
    ensure(peak > 0.0 && peak.is_finite(), || {
        format!("psnr: invalid peak {peak}")
    })?;
    Ok(psnr_from_mse(mse(reference, test)?, peak))
}

/// Normalised 1-D Gaussian taps; the 2-D window is their outer product.
fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut taps = [0.0; SSIM_WINDOW];
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as f64 - r;
        *t = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Valid-mode separable filtering of a row-major `w x h` field.
fn filter_valid(src: &[f64], w: usize, h: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let k = SSIM_WINDOW;
    let (ow, oh) = (w - k + 1, h - k + 1);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..k).map(|i| taps[i] * src[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..k).map(|i| taps[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM over every fully-covered 11x11 Gaussian (sigma 1.5) window,
/// with the usual constants for a `[0, 1]` dynamic range.
pub fn ssim(reference: &Plane, test: &Plane) -> Result<f64> {
    same_shape(reference, test, "ssim")?;
    let (w, h) = (reference.width(), reference.height());
    ensure(w >= SSIM_WINDOW && h >= SSIM_WINDOW, || {
        format!("ssim: planes must be at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {w}x{h}")
    })?;
    let x: Vec<f64> = reference.data().iter().map(|&v| f64::from(v)).collect();
    let y: Vec<f64> = test.data().iter().map(|&v| f64::from(v)).collect();
    let prod = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).collect::<Vec<f64>>();
    let taps = gaussian_taps();
    let mu_x = filter_valid(&x, w, h, &taps);
    let mu_y = filter_valid(&y, w, h, &taps);
    let xx = filter_valid(&prod(&x, &x), w, h, &taps);
    let yy = filter_valid(&prod(&y, &y), w, h, &taps);
    let xy = filter_valid(&prod(&x, &y), w, h, &taps);
    let total: f64 = (0..mu_x.len())
        .map(|i| {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let vx = xx[i] - mx * mx;
            let vy = yy[i] - my * my;
            let cov = xy[i] - mx * my;
            ((2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2))
        })
        .sum();
    Ok(total / mu_x.len() as f64)
}

/// Crop to the largest top-left region whose sides are multiples of `scale`.
pub fn modcrop(img: &PlanarImage, scale: usize) -> Result<PlanarImage> {
    let (w, h) = (img.width() / scale * scale, img.height() / scale * scale);
    ensure(w > 0 && h > 0, || {
        format!(
            "{}x{} image is smaller than scale {scale}",
            img.width(),
            img.height()
        )
    })?;
    PlanarImage::new(
        img.y.crop(0, 0, w, h)?,
        img.cb.crop(0, 0, w, h)?,
        img.cr.crop(0, 0, w, h)?,
    )
}

/// Bicubic downsample by `scale`, clamped back to `[0, 1]`.
pub fn synthesize_lr(hr: &PlanarImage, scale: usize) -> Result<PlanarImage> {
    let (w, h) = (hr.width() / scale, hr.height() / scale);
    let down = |p: &Plane| -> Result<Plane> {
        let mut out = bicubic_resize(p, w, h)?;
        out.clamp01();
        Ok(out)
    };
    PlanarImage::new(down(&hr.y)?, down(&hr.cb)?, down(&hr.cr)?)
}

fn null_as_infinity<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

/// One evaluated image. JSON has no infinity, so a perfect reconstruction's
/// `psnr_db` is written as `null` and read back as `+inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub path: String,
    #[serde(deserialize_with = "null_as_infinity")]
    pub psnr_db: f64,
    pub ssim: f64,
    pub inference_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub scale: usize,
    pub border_shave: usize,
    pub channel: String,
    pub param_count: usize,
    pub published_param_count: usize,
    pub records: Vec<ImageRecord>,
    pub failures: Vec<String>,
    #[serde(deserialize_with = "null_as_infinity")]
    pub mean_psnr_db: f64,
    pub mean_ssim: f64,
    pub latency: LatencyStats,
}

impl EvalReport {
    /// Aggregate `records`. Fails on an empty list.
    pub fn from_records(
        dataset: String,
        scale: usize,
        border_shave: usize,
        records: Vec<ImageRecord>,
        failures: Vec<String>,
    ) -> Result<Self> {
        ensure(!records.is_empty(), || "no image could be evaluated".into())?;
        let n = records.len() as f64;
        let times: Vec<f64> = records.iter().map(|r| r.inference_ms).collect();
        Ok(Self {
            dataset,
            scale,
            border_shave,
            channel: "Y".into(),
            param_count: param_count(&crate::model::NetworkConfig::new(scale)?),
            published_param_count: PUBLISHED_PARAM_COUNT,
            mean_psnr_db: records.iter().map(|r| r.psnr_db).sum::<f64>() / n,
            mean_ssim: records.iter().map(|r| r.ssim).sum::<f64>() / n,
            latency: LatencyStats::from_samples(&times).expect("non-empty"),
            records,
            failures,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    /// Results table in the layout of the published comparison tables: one
    /// row per method, PSNR/SSIM per dataset and scale.
    pub fn to_table(&self, method: &str) -> String {
        format_table(&[(method, self)])
    }
}

/// Aligned text table over several `(method, report)` rows.
pub fn format_table(rows: &[(&str, &EvalReport)]) -> String {
    let mut out = String::new();
    out += &format!(
        "{:<16} {:<20} {:>5} {:>6} {:>6} {:>10} {:>8} {:>10} {:>10}\n",
        "Method", "Dataset", "Scale", "Shave", "Images", "PSNR (dB)", "SSIM", "mean ms", "p95 ms"
    );
    out += &format!("{}\n", "-".repeat(99));
    for (method, r) in rows {
        let name = Path::new(&r.dataset)
            .file_name()
            .map_or_else(|| r.dataset.clone(), |n| n.to_string_lossy().into_owned());
        out += &format!(
            "{:<16} {:<20} {:>5} {:>6} {:>6} {:>10.2} {:>8.4} {:>10.2} {:>10.2}\n",
            method,
            name,
            format!("x{}", r.scale),
            r.border_shave,
            r.records.len(),
            r.mean_psnr_db,
            r.mean_ssim,
            r.latency.mean_ms,
            r.latency.p95_ms
        );
    }
    if let Some((_, r)) = rows.first() {
        out += &format!(
            "\nchannel {}; parameters {} (published figure {}, see README)\n",
            r.channel, r.param_count, r.published_param_count
        );
        let failed: usize = rows.iter().map(|(_, r)| r.failures.len()).sum();
        if failed > 0 {
            out += &format!("{failed} image(s) could not be evaluated\n");
        }
    }
    out
}

/// Per-image evaluation of one already-loaded HR image.
pub fn evaluate_image(
    params: &ModelParams,
    hr: &PlanarImage,
    border_shave: usize,
) -> Result<(f64, f64, f64)> {
    let s = params.config.scale;
    let hr = modcrop(hr, s)?;
    let lr = synthesize_lr(&hr, s)?;
    let t = Instant::now();
    let sr = super_resolve(params, &lr)?;
    let ms = duration_ms(t.elapsed());
    let (a, b) = if border_shave > 0 {
        (hr.y.shave(border_shave)?, sr.y.shave(border_shave)?)
    } else {
        (hr.y, sr.y)
    };
    Ok((psnr(&a, &b, 1.0)?, ssim(&a, &b)?, ms))
}

/// Evaluate every image under `dir`. Images that fail to load or are too
/// small are logged and listed in `failures`; timings are taken one
/// inference at a time.
pub fn evaluate_dataset(
    params: &ModelParams,
    dir: &Path,
    border_shave: usize,
) -> Result<EvalReport> {
    let files = list_images(dir)?;
    if files.is_empty() {
        return Err(Error::Config(format!(
            "no images found under {}",
            dir.display()
        )));
    }
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for path in &files {
        let rel = relative(dir, path);
        let result = load_rgb(path)
            .and_then(|rgb| rgb_to_ycbcr(&rgb))
            .and_then(|hr| evaluate_image(params, &hr, border_shave));
        match result {
            Ok((psnr_db, ssim, inference_ms)) => records.push(ImageRecord {
                path: rel,
                psnr_db,
                ssim,
                inference_ms,
            }),
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                failures.push(rel);
            }
        }
    }
    if records.is_empty() {
        return Err(Error::Config(format!(
            "none of the {} images under {} could be evaluated",
            files.len(),
            dir.display()
        )));
    }
    EvalReport::from_records(
        dir.display().to_string(),
        params.config.scale,
        border_shave,
        records,
        failures,
    )
}

fn relative(root: &Path, path: &Path) -> String {
    path.strip_prefix(root)
        .map(PathBuf::from)
        .unwrap_or_else(|_| path.to_path_buf())
        .display()
        .to_string()
}
