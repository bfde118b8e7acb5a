use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use wsiqpi::io::{encode_qph, read_qph, read_real_qph, write_qph, write_real_qph, Dtype, QphArray, QphPayload};
use wsiqpi::RealImage;

fn wsiqpi(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wsiqpi")).args(args).current_dir(dir).output().expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> Output {
    let out = wsiqpi(args, dir);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write(dir: &Path, name: &str, content: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, content).unwrap();
    p
}

const ONE_CELL: &str = r#"{"rows": 256, "cols": 256, "cells": [{"center": [120, 136], "radius": 48, "peak_height_um": 0.25}]}"#;

fn masked_rms(a: &RealImage, b: &RealImage, mask: &RealImage) -> f64 {
    let n = a.data().len();
    let mut bg: Vec<f64> = (0..n).filter(|&i| mask.data()[i] == 0.0).map(|i| a.data()[i] - b.data()[i]).collect();
    bg.sort_by(f64::total_cmp);
    let off = bg[bg.len() / 2];
    let inside: Vec<f64> = (0..n).filter(|&i| mask.data()[i] > 0.0).map(|i| (a.data()[i] - b.data()[i] - off).powi(2)).collect();
    (inside.iter().sum::<f64>() / inside.len() as f64).sqrt()
}

/// Every file below `dir`, relative path and contents, sorted.
fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn synth_writes_ground_truth() {
    let t = TempDir::new().unwrap();
    write(t.path(), "spec.json", ONE_CELL);
    ok(&["synth", "--phantom", "spec.json", "--out-dir", "s"], t.path());
    let phase = read_real_qph(&t.path().join("s/phase.qph")).unwrap();
    assert!((phase.max() - 2.9742).abs() < 1e-3, "{}", phase.max());
    for f in ["hologram.qph", "hologram.png", "hologram.png.json", "mask.png", "manifest.json"] {
        assert!(t.path().join("s").join(f).exists(), "{f}");
    }
}

#[test]
fn empty_spec_gives_flat_fringes() {
    let t = TempDir::new().unwrap();
    write(t.path(), "flat.json", r#"{"rows": 64, "cols": 96, "cells": []}"#);
    ok(&["synth", "--phantom", "flat.json", "--out-dir", "f"], t.path());
    let holo = read_real_qph(&t.path().join("f/hologram.qph")).unwrap();
    assert!(holo.max() - holo.min() > 4.0);
    assert!(read_real_qph(&t.path().join("f/phase.qph")).unwrap().data().iter().all(|&v| v == 0.0));
}

#[test]
fn malformed_spec_reports_the_field() {
    let t = TempDir::new().unwrap();
    write(t.path(), "bad.json", r#"{"rows": 64, "cols": 64, "cells": [{"center": [1, 2], "radius": 5}]}"#);
    let out = wsiqpi(&["synth", "--phantom", "bad.json", "--out-dir", "x"], t.path());
    assert_eq!(code(&out), 2);
    let msg = stderr(&out);
    assert!(msg.contains("bad.json") && msg.contains("peak_height_um") && msg.contains("line 1"), "{msg}");
}

#[test]
fn too_tall_cell_is_rejected() {
    let t = TempDir::new().unwrap();
    write(t.path(), "tall.json", r#"{"rows": 64, "cols": 64, "cells": [{"center": [32, 32], "radius": 5, "peak_height_um": 0.9}]}"#);
    assert_eq!(code(&wsiqpi(&["synth", "--phantom", "tall.json", "--out-dir", "x"], t.path())), 2);
}

#[test]
fn synth_then_reconstruct_round_trip() {
    let t = TempDir::new().unwrap();
    write(t.path(), "spec.json", ONE_CELL);
    ok(&["synth", "--phantom", "spec.json", "--out-dir", "s"], t.path());
    ok(&["reconstruct", "--input", "s/hologram.qph", "--out-dir", "r"], t.path());
    let truth = read_real_qph(&t.path().join("s/phase.qph")).unwrap();
    let rec = read_real_qph(&t.path().join("r/phase.qph")).unwrap();
    let mask = wsiqpi::io::read_mask_png(&t.path().join("s/mask.png")).unwrap();
    let rms = masked_rms(&rec, &truth, &mask);
    assert!(rms < 0.05, "{rms}");
    let height = read_real_qph(&t.path().join("r/height.qph")).unwrap();
    assert!((height.max() - height.min() - 0.25).abs() < 0.02);
    for f in ["height.png", "height.png.json", "amplitude.qph", "reconstruction.json"] {
        assert!(t.path().join("r").join(f).exists(), "{f}");
    }
}

#[test]
fn cutout_with_mdi_matches_full_frame() {
    let t = TempDir::new().unwrap();
    let spec = r#"{"rows": 512, "cols": 640,
        "cells": [{"center": [250, 300], "radius": 70, "peak_height_um": 0.4}, {"center": [100, 560], "radius": 60, "peak_height_um": 0.3}],
        "background": [{"amplitude_rad": 3.0, "period_px": 1400, "angle_rad": 0.7, "offset_rad": 0.2}]}"#;
    write(t.path(), "spec.json", spec);
    write(t.path(), "flat.json", r#"{"rows": 512, "cols": 640}"#);
    ok(&["synth", "--phantom", "spec.json", "--out-dir", "s"], t.path());
    ok(&["synth", "--phantom", "flat.json", "--out-dir", "f"], t.path());
    ok(&["calibrate", "--input", "f/hologram.qph", "--out", "cal.qph"], t.path());
    ok(&["reconstruct", "--input", "s/hologram.qph", "--calibration", "cal.qph", "--variant", "mdi", "--out-dir", "full"], t.path());
    // Cell plus a 32 px margin.
    let (r0, c0, rows, cols) = (148, 198, 205, 205);
    let crop = |name: &str, out: &str| {
        let img = read_real_qph(&t.path().join(name)).unwrap();
        let cut = img.crop(wsiqpi::Rect::new(r0, c0, rows, cols)).unwrap();
        write_real_qph(&t.path().join(out), &cut, Dtype::F64).unwrap();
    };
    crop("s/hologram.qph", "cut.qph");
    crop("full/phase.qph", "ref.qph");
    let mask = RealImage::from_fn(rows, cols, |r, c| {
        let (dr, dc) = ((r + r0) as f64 - 250.0, (c + c0) as f64 - 300.0);
        if dr.hypot(dc) < 70.0 { 1.0 } else { 0.0 }
    })
    .unwrap();
    write_real_qph(&t.path().join("mask.qph"), &mask, Dtype::F32).unwrap();
    let offset = format!("{r0},{c0}");
    ok(&["reconstruct", "--input", "cut.qph", "--calibration", "cal.qph", "--cutout", &offset, "--variant", "mdi", "--out-dir", "c"], t.path());
    ok(&["eval", "--reference", "ref.qph", "--candidate", "c/phase.qph", "--mask", "mask.qph", "--out", "e.csv"], t.path());
    let csv = fs::read_to_string(t.path().join("e.csv")).unwrap();
    let l1: f64 = csv.lines().nth(1).unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert!(l1 < 0.02, "{csv}");
}

#[test]
fn corrupt_container_names_the_file() {
    let t = TempDir::new().unwrap();
    let mut bytes = encode_qph(&QphArray::new(2, 2, QphPayload::F64(vec![0.0; 4])).unwrap());
    bytes[..4].copy_from_slice(b"QPHX");
    fs::write(t.path().join("broken.qph"), bytes).unwrap();
    let out = wsiqpi(&["reconstruct", "--input", "broken.qph", "--out-dir", "r"], t.path());
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("broken.qph"), "{}", stderr(&out));
    let out = wsiqpi(&["reconstruct", "--input", "missing.qph", "--out-dir", "r"], t.path());
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("missing.qph"));
}

#[test]
fn hologram_without_lobes_is_a_domain_failure() {
    let t = TempDir::new().unwrap();
    let flat = RealImage::filled(64, 64, 1.0).unwrap();
    write_real_qph(&t.path().join("flat.qph"), &flat, Dtype::F32).unwrap();
    let out = wsiqpi(&["reconstruct", "--input", "flat.qph", "--out-dir", "r"], t.path());
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    let tiny = RealImage::filled(8, 8, 1.0).unwrap();
    write_real_qph(&t.path().join("tiny.qph"), &tiny, Dtype::F32).unwrap();
    assert_eq!(code(&wsiqpi(&["reconstruct", "--input", "tiny.qph", "--out-dir", "r"], t.path())), 2);
}

#[test]
fn config_errors_exit_two() {
    let t = TempDir::new().unwrap();
    write(t.path(), "spec.json", ONE_CELL);
    write(t.path(), "range.json", r#"{"window_fraction": 0.3}"#);
    write(t.path(), "unknown.json", r#"{"integration": {"variant": "mdi", "shift": 0.2}}"#);
    for cfg in ["range.json", "unknown.json", "absent.json"] {
        let out = wsiqpi(&["--config", cfg, "synth", "--phantom", "spec.json", "--out-dir", "s"], t.path());
        assert_eq!(code(&out), 2, "{cfg}");
        assert!(stderr(&out).contains(cfg), "{}", stderr(&out));
    }
    assert_eq!(code(&wsiqpi(&["reconstruct", "--out-dir", "r"], t.path())), 2);
    assert_eq!(code(&wsiqpi(&["--threads", "0", "synth", "--phantom", "spec.json", "--out-dir", "s"], t.path())), 2);
}

fn tile(t: &Path, name: &str, rows: usize, cols: usize, dtype: Dtype, seed: f64) {
    let img = RealImage::from_fn(rows, cols, |r, c| seed + (r * cols + c) as f64 * 0.25).unwrap();
    write_real_qph(&t.join(name), &img, dtype).unwrap();
}

#[test]
fn patch_single_tile_copies_the_payload() {
    let t = TempDir::new().unwrap();
    tile(t.path(), "a.qph", 7, 5, Dtype::F32, 1.0);
    write(t.path(), "m.json", r#"{"tile_rows": 7, "tile_cols": 5, "grid": [["a.qph"]]}"#);
    ok(&["patch", "--manifest", "m.json", "--out", "out.qph"], t.path());
    assert_eq!(fs::read(t.path().join("out.qph")).unwrap(), fs::read(t.path().join("a.qph")).unwrap());
}

#[test]
fn patch_two_by_two_reports_lines() {
    let t = TempDir::new().unwrap();
    for (i, name) in ["a", "b", "c", "d"].iter().enumerate() {
        tile(t.path(), &format!("{name}.qph"), 256, 256, Dtype::F64, i as f64 * 1000.0);
    }
    write(t.path(), "m.json", r#"{"tile_rows": 256, "tile_cols": 256, "grid": [["a.qph", "b.qph"], ["c.qph", "d.qph"]]}"#);
    ok(&["patch", "--manifest", "m.json", "--out", "out.qph"], t.path());
    let arr = read_qph(&t.path().join("out.qph")).unwrap();
    assert_eq!((arr.rows, arr.cols, arr.dtype()), (512, 512, Dtype::F64));
    let img = arr.to_real().unwrap();
    assert_eq!(img.get(256, 0), 2000.0);
    assert_eq!(img.get(0, 256), 1000.0);
    assert_eq!(img.get(511, 511), 3000.0 + (255 * 256 + 255) as f64 * 0.25);
    let layout: serde_json::Value = serde_json::from_str(&fs::read_to_string(t.path().join("out.qph.json")).unwrap()).unwrap();
    assert_eq!(layout["patch_lines_r"], serde_json::json!([256]));
    assert_eq!(layout["patch_lines_c"], serde_json::json!([256]));
}

#[test]
fn patch_rejects_bad_grids() {
    let t = TempDir::new().unwrap();
    tile(t.path(), "a.qph", 8, 8, Dtype::F32, 0.0);
    tile(t.path(), "b.qph", 8, 9, Dtype::F32, 0.0);
    tile(t.path(), "c.qph", 8, 8, Dtype::F64, 0.0);
    write(t.path(), "mixed.json", r#"{"tile_rows": 8, "tile_cols": 8, "grid": [["a.qph", "b.qph"]]}"#);
    write(t.path(), "dtype.json", r#"{"tile_rows": 8, "tile_cols": 8, "grid": [["a.qph", "c.qph"]]}"#);
    write(t.path(), "missing.json", r#"{"tile_rows": 8, "tile_cols": 8, "grid": [["a.qph", "nope.qph"]]}"#);
    write(t.path(), "ragged.json", r#"{"tile_rows": 8, "tile_cols": 8, "grid": [["a.qph", "a.qph"], ["a.qph"]]}"#);
    for m in ["mixed.json", "dtype.json", "missing.json", "ragged.json"] {
        let out = wsiqpi(&["patch", "--manifest", m, "--out", "out.qph"], t.path());
        assert_eq!(code(&out), 2, "{m}: {}", stderr(&out));
    }
}

#[test]
fn eval_identical_inputs_gives_zero_row() {
    let t = TempDir::new().unwrap();
    tile(t.path(), "p.qph", 32, 32, Dtype::F64, 0.0);
    let mask = RealImage::from_fn(32, 32, |r, c| if (8..24).contains(&r) && (8..24).contains(&c) { 1.0 } else { 0.0 }).unwrap();
    wsiqpi::io::write_mask_png(&t.path().join("m.png"), &mask).unwrap();
    ok(&["eval", "--reference", "p.qph", "--candidate", "p.qph", "--candidate-mdi", "p.qph", "--mask", "m.png", "--out", "e.csv"], t.path());
    let csv = fs::read_to_string(t.path().join("e.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    for v in &row[2..6] {
        assert_eq!(v.parse::<f64>().unwrap(), 0.0, "{csv}");
    }
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn eval_corpus_emits_summary_rows() {
    let t = TempDir::new().unwrap();
    tile(t.path(), "ref.qph", 32, 32, Dtype::F64, 0.0);
    tile(t.path(), "a.qph", 32, 32, Dtype::F64, 0.0);
    let b = RealImage::from_fn(32, 32, |r, c| (r * 32 + c) as f64 * 0.25 + if r > 10 { 0.3 } else { 0.0 }).unwrap();
    write_real_qph(&t.path().join("b.qph"), &b, Dtype::F64).unwrap();
    let mask = RealImage::from_fn(32, 32, |r, c| if (8..24).contains(&r) && (8..24).contains(&c) { 1.0 } else { 0.0 }).unwrap();
    wsiqpi::io::write_mask_png(&t.path().join("m.png"), &mask).unwrap();
    write(
        t.path(),
        "cases.json",
        r#"[{"case_id": "one", "reference": "ref.qph", "plain": "b.qph", "mdi": "a.qph", "mask": "m.png"},
            {"case_id": "two", "reference": "ref.qph", "plain": "a.qph", "mdi": "b.qph", "mask": "m.png"}]"#,
    );
    let out = ok(&["eval", "--cases", "cases.json", "--out", "e.csv", "--units", "rad"], t.path());
    let csv = fs::read_to_string(t.path().join("e.csv")).unwrap();
    let first: Vec<&str> = csv.lines().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(first, ["case_id", "one", "two", "Mean", "Max", "Min", "Var", "Median"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("Median"));
}

#[test]
fn eval_rejects_bad_inputs() {
    let t = TempDir::new().unwrap();
    tile(t.path(), "p.qph", 32, 32, Dtype::F64, 0.0);
    tile(t.path(), "q.qph", 32, 31, Dtype::F64, 0.0);
    wsiqpi::io::write_mask_png(&t.path().join("empty.png"), &RealImage::zeros(32, 32).unwrap()).unwrap();
    wsiqpi::io::write_mask_png(&t.path().join("full.png"), &RealImage::filled(32, 32, 1.0).unwrap()).unwrap();
    let empty = wsiqpi(&["eval", "--reference", "p.qph", "--candidate", "p.qph", "--mask", "empty.png", "--out", "e.csv"], t.path());
    assert_eq!(code(&empty), 2);
    let dims = wsiqpi(&["eval", "--reference", "p.qph", "--candidate", "q.qph", "--mask", "full.png", "--out", "e.csv"], t.path());
    assert_eq!(code(&dims), 2);
}

#[test]
fn reconstruct_mosaic_strategies_and_formats() {
    let t = TempDir::new().unwrap();
    write(t.path(), "spec.json", r#"{"rows": 256, "cols": 256, "cells": [{"center": [100, 120], "radius": 50, "peak_height_um": 0.3}]}"#);
    ok(&["synth", "--phantom", "spec.json", "--out-dir", "s", "--grid", "2x2"], t.path());
    write(t.path(), "csv.json", r#"{"output_format": "csv", "wsi_strategy": "per_tile"}"#);
    ok(&["--config", "csv.json", "reconstruct", "--mosaic", "s/mosaic.json", "--out-dir", "a"], t.path());
    assert!(t.path().join("a/height.csv").exists());
    let summary = fs::read_to_string(t.path().join("a/reconstruction.json")).unwrap();
    assert!(summary.contains("per_tile"));
    ok(&["reconstruct", "--mosaic", "s/mosaic.json", "--strategy", "whole_mdi", "--out-dir", "b"], t.path());
    assert!(fs::read_to_string(t.path().join("b/reconstruction.json")).unwrap().contains("whole_mdi"));
    write(t.path(), "png.json", r#"{"output_format": "png16"}"#);
    ok(&["--config", "png.json", "reconstruct", "--input", "s/hologram.qph", "--out-dir", "c"], t.path());
    assert!(t.path().join("c/phase.png").exists());
}

#[test]
fn every_command_is_bit_reproducible() {
    let t = TempDir::new().unwrap();
    write(t.path(), "spec.json", ONE_CELL);
    write(t.path(), "flat.json", r#"{"rows": 256, "cols": 256}"#);
    write(t.path(), "noisy.json", r#"{"noise_sigma": 0.05}"#);
    let run_all = |tag: &str, threads: &str| {
        let d = |p: &str| format!("{tag}/{p}");
        ok(&["--config", "noisy.json", "--seed", "7", "--threads", threads, "synth", "--phantom", "spec.json", "--out-dir", &d("s"), "--grid", "2x2"], t.path());
        ok(&["--threads", threads, "synth", "--phantom", "flat.json", "--out-dir", &d("f")], t.path());
        ok(&["--threads", threads, "calibrate", "--input", &d("f/hologram.qph"), "--out", &d("cal.qph")], t.path());
        ok(&["--threads", threads, "reconstruct", "--input", &d("s/hologram.qph"), "--calibration", &d("cal.qph"), "--out-dir", &d("r")], t.path());
        for strategy in ["per_tile", "whole_mdi", "whole_shifted"] {
            ok(&["--threads", threads, "reconstruct", "--mosaic", &d("s/mosaic.json"), "--strategy", strategy, "--out-dir", &d(strategy)], t.path());
        }
        ok(&["--threads", threads, "patch", "--manifest", &d("s/mosaic.json"), "--out", &d("p.qph")], t.path());
        ok(&["--threads", threads, "eval", "--reference", &d("s/phase.qph"), "--candidate", &d("r/phase.qph"), "--mask", &d("s/mask.png"), "--out", &d("e.csv")], t.path());
        snapshot(&t.path().join(tag))
    };
    let a = run_all("a", "1");
    let b = run_all("b", "4");
    assert_eq!(a.len(), b.len());
    for ((pa, da), (pb, db)) in a.iter().zip(&b) {
        assert_eq!(pa, pb);
        assert!(da == db, "{} differs between runs", pa.display());
    }
    ok(&["--config", "noisy.json", "--seed", "8", "synth", "--phantom", "spec.json", "--out-dir", "c"], t.path());
    assert_ne!(fs::read(t.path().join("a/s/hologram.qph")).unwrap(), fs::read(t.path().join("c/hologram.qph")).unwrap());
}

#[test]
fn qph_round_trips_every_dtype() {
    let t = TempDir::new().unwrap();
    let payloads = [
        QphPayload::F32(vec![1.5, -0.0, f32::MIN_POSITIVE, 3.25e7, -2.0, 0.1]),
        QphPayload::F64(vec![std::f64::consts::PI, -1e-300, 0.0, 7.0, 1e300, -0.5]),
        QphPayload::Complex64((0..6).map(|i| wsiqpi::io::Complex32::new(i as f32 * 0.5, -(i as f32))).collect()),
    ];
    for (k, p) in payloads.into_iter().enumerate() {
        let arr = QphArray::new(2, 3, p).unwrap();
        let path = t.path().join(format!("{k}.qph"));
        write_qph(&path, &arr).unwrap();
        let back = read_qph(&path).unwrap();
        assert_eq!(back, arr);
        assert_eq!(encode_qph(&back), fs::read(&path).unwrap());
    }
}
