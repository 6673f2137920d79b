use std::fs;
use std::time::Instant;

use anyhow::{Context, Result};
use textsr::bench::{duration_ms, run_bench, BenchConfig};
use textsr::imageops::{
    bicubic_resize, canny_edges, load_rgb, rgb_to_ycbcr, save_gray_png, save_rgb_png, ycbcr_to_rgb,
    CannyThresholds, PlanarImage,
};
use textsr::metrics::evaluate_dataset;
use textsr::model::{self, init_params, load_params, save_params, NetworkConfig};
use textsr::training::{build_dataset, train_with, Checkpoint, TrainConfig};

use crate::{BenchArgs, EdgeDemoArgs, EvalArgs, InitArgs, SuperResolveArgs, TrainArgs};

pub const EDGE_INPUT: &str = "edge_input.png";
pub const EDGE_RECONSTRUCTED: &str = "edge_reconstructed.png";
pub const EDGE_BICUBIC: &str = "edge_bicubic.png";

pub fn train(a: TrainArgs) -> Result<()> {
    let config = TrainConfig {
        seed: a.seed,
        checkpoint_dir: Some(a.out.clone()),
        stride: a.stride,
        max_epochs: a.epochs,
        batch_size: a.batch,
        single_threaded: a.single_threaded,
        ..TrainConfig::new(a.scale, &a.data)
    };
    config.validate()?;
    let dataset = build_dataset(&config)?;
    println!(
        "dataset: {} images ({} unreadable), {} patches, {} batches per epoch",
        dataset.images_loaded,
        dataset.images_skipped,
        dataset.len(),
        dataset.batches_per_epoch(config.batch_size)
    );
    let start = match &a.resume {
        Some(path) => {
            let c = Checkpoint::load(path, &config)
                .with_context(|| format!("loading checkpoint {}", path.display()))?;
            println!("resuming after epoch {} (step {})", c.epoch, c.step);
            c
        }
        None => Checkpoint::new(init_params(NetworkConfig::new(a.scale)?, a.seed)?, &config),
    };
    let done = train_with(&config, &dataset, start, |s| {
        println!(
            "epoch {:>3}  lr {:.4e}  loss {:.6e}  batches {}  {:.1}s",
            s.epoch, s.lr, s.mean_loss, s.batches, s.elapsed_s
        );
    })?;
    let (model, _) = Checkpoint::paths(&a.out, done.epoch);
    println!(
        "finished {} epochs, {} steps; model {}",
        done.epoch,
        done.step,
        model.display()
    );
    Ok(())
}

fn load_image(path: &std::path::Path) -> Result<PlanarImage> {
    Ok(rgb_to_ycbcr(&load_rgb(path)?)?)
}

pub fn super_resolve(a: SuperResolveArgs) -> Result<()> {
    let params =
        load_params(&a.model).with_context(|| format!("loading model {}", a.model.display()))?;
    let img = load_image(&a.input)?;
    let t = Instant::now();
    let out = model::super_resolve(&params, &img)?;
    let ms = duration_ms(t.elapsed());
    save_rgb_png(&ycbcr_to_rgb(&out), &a.out)?;
    println!(
        "{}x{} -> {}x{} (x{}) in {ms:.2} ms",
        img.width(),
        img.height(),
        out.width(),
        out.height(),
        params.config.scale
    );
    Ok(())
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let params =
        load_params(&a.model).with_context(|| format!("loading model {}", a.model.display()))?;
    let shave = a.shave.unwrap_or(params.config.scale);
    let report = evaluate_dataset(&params, &a.data, shave)?;
    print!("{}", report.to_table(&a.label));
    if let Some(path) = &a.json {
        fs::write(path, report.to_json()).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

pub fn bench(a: BenchArgs) -> Result<()> {
    let t = Instant::now();
    let params =
        load_params(&a.model).with_context(|| format!("loading model {}", a.model.display()))?;
    let load_ms = duration_ms(t.elapsed());
    let cfg = BenchConfig {
        width: a.width,
        height: a.height,
        warmup: a.warmup,
        iters: a.iters as usize,
        seed: a.seed,
    };
    let mut report = run_bench(&params, &cfg)?;
    report.load_ms = Some(load_ms);
    print!("{}", report.to_text());
    if let Some(path) = &a.json {
        let json = serde_json::to_string_pretty(&report)?;
        fs::write(path, json).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

pub fn edge_demo(a: EdgeDemoArgs) -> Result<()> {
    let thresholds = CannyThresholds {
        low: a.low,
        high: a.high,
    };
    thresholds.validate()?;
    let params =
        load_params(&a.model).with_context(|| format!("loading model {}", a.model.display()))?;
    let img = load_image(&a.input)?;
    let s = params.config.scale;
    let edges = canny_edges(&img.y, thresholds)?;
    let reconstructed = model::super_resolve(&params, &PlanarImage::from_luma(edges.clone())?)?.y;
    let mut bicubic = bicubic_resize(&edges, edges.width() * s, edges.height() * s)?;
    bicubic.clamp01();
    fs::create_dir_all(&a.out_dir)?;
    for (name, plane) in [
        (EDGE_INPUT, &edges),
        (EDGE_RECONSTRUCTED, &reconstructed),
        (EDGE_BICUBIC, &bicubic),
    ] {
        save_gray_png(plane, &a.out_dir.join(name))?;
    }
    println!(
        "edge maps {}x{} -> {}x{} written to {}",
        edges.width(),
        edges.height(),
        bicubic.width(),
        bicubic.height(),
        a.out_dir.display()
    );
    Ok(())
}

pub fn init(a: InitArgs) -> Result<()> {
    let mut params = init_params(NetworkConfig::new(a.scale)?, a.seed)?;
    if a.zero_residual {
        params.zero_residual();
    }
    save_params(&params, &a.out)?;
    println!(
        "wrote x{} model with {} parameters to {}",
        a.scale,
        params.param_count(),
        a.out.display()
    );
    Ok(())
}
