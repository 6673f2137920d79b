mod common;

use std::fs;

use common::data::write_text_images;
use textsr::imageops::{bicubic_resize, load_rgb, rgb_to_ycbcr};
use textsr::metrics::{evaluate_dataset, modcrop, psnr, ssim, synthesize_lr, EvalReport};
use textsr::model::{init_params, ModelParams, NetworkConfig};
use textsr::Error;

fn zero_residual(scale: usize) -> ModelParams {
    let mut p = init_params(NetworkConfig::new(scale).unwrap(), 1).unwrap();
    p.zero_residual();
    p
}

#[test]
fn zero_residual_model_reports_bicubic_baseline() {
    let dir = tempfile::tempdir().unwrap();
    write_text_images(dir.path(), 3, 61, 47, 7);
    for scale in [2, 4] {
        let report = evaluate_dataset(&zero_residual(scale), dir.path(), scale).unwrap();
        assert_eq!(report.records.len(), 3);
        for rec in &report.records {
            let hr = modcrop(
                &rgb_to_ycbcr(&load_rgb(&dir.path().join(&rec.path)).unwrap()).unwrap(),
                scale,
            )
            .unwrap();
            let lr = synthesize_lr(&hr, scale).unwrap();
            let mut up = bicubic_resize(&lr.y, hr.width(), hr.height()).unwrap();
            up.clamp01();
            let (a, b) = (hr.y.shave(scale).unwrap(), up.shave(scale).unwrap());
            assert_eq!(rec.psnr_db, psnr(&a, &b, 1.0).unwrap(), "{}", rec.path);
            assert_eq!(rec.ssim, ssim(&a, &b).unwrap());
        }
    }
}

#[test]
fn shave_modes_differ_and_runs_repeat() {
    let dir = tempfile::tempdir().unwrap();
    write_text_images(dir.path(), 2, 64, 48, 3);
    let p = init_params(NetworkConfig::new(2).unwrap(), 4).unwrap();
    let a = evaluate_dataset(&p, dir.path(), 0).unwrap();
    let b = evaluate_dataset(&p, dir.path(), 2).unwrap();
    assert_ne!(a.mean_psnr_db, b.mean_psnr_db);
    let again = evaluate_dataset(&p, dir.path(), 2).unwrap();
    let strip = |r: &EvalReport| {
        r.records
            .iter()
            .map(|x| (x.path.clone(), x.psnr_db, x.ssim))
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&b), strip(&again));
    let n = b.records.len() as f64;
    assert_eq!(
        b.mean_psnr_db,
        b.records.iter().map(|r| r.psnr_db).sum::<f64>() / n
    );
}

#[test]
fn failures_are_counted_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    write_text_images(dir.path(), 2, 40, 40, 3);
    fs::write(dir.path().join("bad.jpg"), b"garbage").unwrap();
    let r = evaluate_dataset(&zero_residual(2), dir.path(), 2).unwrap();
    assert_eq!(r.records.len(), 2);
    assert_eq!(r.failures, vec!["bad.jpg".to_string()]);
    assert!(r
        .to_table("bicubic")
        .contains("1 image(s) could not be evaluated"));
}

#[test]
fn empty_folder_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = evaluate_dataset(&zero_residual(2), dir.path(), 2).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}
