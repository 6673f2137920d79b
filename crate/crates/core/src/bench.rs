//! Inference latency measurement.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::imageops::PlanarImage;
use crate::model::{super_resolve, ModelParams};
use crate::synthetic::noise_plane;

/// Per-image latency reported for the reference phone deployment; printed for
/// comparison, never asserted.
pub const REFERENCE_MS: f64 = 11.7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean_ms: f64,
    pub median_ms: f64,
    /// Nearest-rank 95th percentile.
    pub p95_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
}

impl LatencyStats {
    pub fn from_samples(samples_ms: &[f64]) -> Option<Self> {
        if samples_ms.is_empty() {
            return None;
        }
        let mut s = samples_ms.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        let median = if n % 2 == 1 {
            s[n / 2]
        } else {
            0.5 * (s[n / 2 - 1] + s[n / 2])
        };
        Some(Self {
            mean_ms: s.iter().sum::<f64>() / n as f64,
            median_ms: median,
            p95_ms: nearest_rank(&s, 95.0),
            min_ms: s[0],
            max_ms: s[n - 1],
        })
    }

    /// Tail-to-median spread; near 1 means steady timing.
    pub fn p95_over_median(&self) -> f64 {
        self.p95_ms / self.median_ms
    }
}

/// Nearest-rank percentile of an ascending, non-empty slice.
pub fn nearest_rank(sorted: &[f64], pct: f64) -> f64 {
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchConfig {
    pub width: usize,
    pub height: usize,
    pub warmup: usize,
    pub iters: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            warmup: 5,
            iters: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub width: usize,
    pub height: usize,
    pub scale: usize,
    pub warmup: usize,
    pub samples_ms: Vec<f64>,
    pub stats: LatencyStats,
    /// Input megapixels processed per second at the mean latency.
    pub megapixels_per_s: f64,
    /// Model load time, measured by the caller and kept out of `samples_ms`.
    pub load_ms: Option<f64>,
}

impl BenchReport {
    pub fn to_text(&self) -> String {
        let s = &self.stats;
        let mut out = format!(
            "input {}x{} (x{} -> {}x{}), {} warmup + {} timed runs\n",
            self.width,
            self.height,
            self.scale,
            self.width * self.scale,
            self.height * self.scale,
            self.warmup,
            self.samples_ms.len()
        );
        if let Some(load) = self.load_ms {
            out += &format!("model load    {load:9.3} ms (not included below)\n");
        }
        out += &format!("mean          {:9.3} ms\n", s.mean_ms);
        out += &format!("median        {:9.3} ms\n", s.median_ms);
        out += &format!("p95           {:9.3} ms\n", s.p95_ms);
        out += &format!("min / max     {:9.3} / {:.3} ms\n", s.min_ms, s.max_ms);
        out += &format!("p95 / median  {:9.3}\n", s.p95_over_median());
        out += &format!("throughput    {:9.3} MP/s (input)\n", self.megapixels_per_s);
        out += &format!("reference     {REFERENCE_MS:9.3} ms per image on a 2019 phone SoC, for comparison only\n");
        out
    }
}

/// Time `super_resolve` on a noise image, one call at a time.
pub fn run_bench(params: &ModelParams, cfg: &BenchConfig) -> Result<BenchReport> {
    ensure(cfg.iters >= 1, || {
        "bench needs at least one timed iteration".into()
    })?;
    ensure(cfg.width >= 3 && cfg.height >= 3, || {
        format!(
            "bench input must be at least 3x3, got {}x{}",
            cfg.width, cfg.height
        )
    })?;
    let image = PlanarImage::from_luma(noise_plane(cfg.width, cfg.height, cfg.seed))?;
    for _ in 0..cfg.warmup {
        std::hint::black_box(super_resolve(params, &image)?);
    }
    let mut samples = Vec::with_capacity(cfg.iters);
    for _ in 0..cfg.iters {
        let t = Instant::now();
        std::hint::black_box(super_resolve(params, &image)?);
        samples.push(duration_ms(t.elapsed()));
    }
    let stats = LatencyStats::from_samples(&samples).expect("at least one sample");
    Ok(BenchReport {
        width: cfg.width,
        height: cfg.height,
        scale: params.config.scale,
        warmup: cfg.warmup,
        megapixels_per_s: (cfg.width * cfg.height) as f64 / 1e6 / (stats.mean_ms / 1e3),
        samples_ms: samples,
        stats,
        load_ms: None,
    })
}

pub fn duration_ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}
