//! Object-free calibration frames: construction, application, geometric
//! adaptation and persistence.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::demod::{demodulate_gradients_with, DemodOptions, GradientPair, LobeLocation, LobeSearch, SearchRegions};
use crate::error::{Error, Result};
use crate::field::{wrap_phase, RealImage, Rect, SpectralWindow};
use crate::io::{read_json, read_qph, write_json, write_qph, QphArray, QphPayload};
use crate::wsi::PatchLayout;

/// Reference gradients from an object-free recording.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationFrame {
    pub gx_ref: RealImage,
    pub gy_ref: RealImage,
    /// Dimensions of the object-free hologram the frame was built from.
    pub source_dims: (usize, usize),
    /// Lobes used to demodulate the source.
    pub lobes: LobeLocation,
}

impl CalibrationFrame {
    pub fn dims(&self) -> (usize, usize) {
        self.gx_ref.dims()
    }
}

/// Geometry a calibration frame can be adapted to.
#[derive(Debug, Clone, Copy)]
pub enum CalibrationTarget<'a> {
    /// A rectangle of the source frame.
    Cutout(Rect),
    /// A mosaic of source-sized tiles.
    Layout(&'a PatchLayout),
}

pub fn build_calibration(object_free: &RealImage, lobes: &LobeLocation) -> Result<CalibrationFrame> {
    build_calibration_with(object_free, lobes, &DemodOptions::default())
}

pub fn build_calibration_with(object_free: &RealImage, lobes: &LobeLocation, opts: &DemodOptions) -> Result<CalibrationFrame> {
    let g = demodulate_gradients_with(object_free, lobes, opts)?;
    Ok(CalibrationFrame { gx_ref: g.gx, gy_ref: g.gy, source_dims: object_free.dims(), lobes: *lobes })
}

/// Pointwise `wrap(g - g_ref)`.
pub fn apply_calibration(grads: &GradientPair, cal: &CalibrationFrame) -> Result<GradientPair> {
    if grads.dims() != cal.dims() {
        return Err(Error::param(format!(
            "calibration {:?} does not match gradients {:?}; adapt it first",
            cal.dims(),
            grads.dims()
        )));
    }
    let sub = |a: f64, b: f64| wrap_phase(a - b);
    GradientPair::new(grads.gx.zip_map(&cal.gx_ref, sub)?, grads.gy.zip_map(&cal.gy_ref, sub)?)
}

fn tile(img: &RealImage, layout: &PatchLayout) -> Result<RealImage> {
    let (rows, cols) = layout.mosaic_dims();
    let mut out = RealImage::zeros(rows, cols)?;
    for i in 0..layout.grid_rows {
        for j in 0..layout.grid_cols {
            out.paste(img, i * layout.tile_rows, j * layout.tile_cols)?;
        }
    }
    Ok(out)
}

/// Crops the frame to a cutout, or tiles it over a mosaic layout.
pub fn adapt_calibration(cal: &CalibrationFrame, target: CalibrationTarget<'_>) -> Result<CalibrationFrame> {
    let (gx_ref, gy_ref) = match target {
        CalibrationTarget::Cutout(rect) => {
            if !rect.fits_within(cal.dims().0, cal.dims().1) {
                return Err(Error::param(format!(
                    "cutout {rect:?} exceeds calibration frame {:?}",
                    cal.dims()
                )));
            }
            (cal.gx_ref.crop(rect)?, cal.gy_ref.crop(rect)?)
        }
        CalibrationTarget::Layout(layout) => {
            if (layout.tile_rows, layout.tile_cols) != cal.dims() {
                return Err(Error::param(format!(
                    "layout tiles are {}x{} but the calibration frame is {:?}",
                    layout.tile_rows,
                    layout.tile_cols,
                    cal.dims()
                )));
            }
            (tile(&cal.gx_ref, layout)?, tile(&cal.gy_ref, layout)?)
        }
    };
    Ok(CalibrationFrame { gx_ref, gy_ref, ..cal.clone() })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    source_rows: usize,
    source_cols: usize,
    x_lobe: [usize; 3],
    y_lobe: [usize; 3],
}

/// Path of the JSON sidecar accompanying a calibration container.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes `[gx_ref; gy_ref]` stacked vertically as f64 QPH, plus the sidecar.
pub fn save_calibration(path: &Path, cal: &CalibrationFrame) -> Result<()> {
    let (rows, cols) = cal.dims();
    let mut data = Vec::with_capacity(2 * rows * cols);
    data.extend_from_slice(cal.gx_ref.data());
    data.extend_from_slice(cal.gy_ref.data());
    write_qph(path, &QphArray::new(2 * rows, cols, QphPayload::F64(data))?)?;
    let win = |w: &SpectralWindow| [w.center_row, w.center_col, w.half_size];
    write_json(
        &sidecar_path(path),
        &Sidecar {
            source_rows: cal.source_dims.0,
            source_cols: cal.source_dims.1,
            x_lobe: win(&cal.lobes.x_lobe),
            y_lobe: win(&cal.lobes.y_lobe),
        },
    )
}

pub fn load_calibration(path: &Path) -> Result<CalibrationFrame> {
    let arr = read_qph(path)?;
    let side: Sidecar = read_json(&sidecar_path(path))?;
    if arr.rows % 2 != 0 {
        return Err(Error::format(path, "calibration container must hold two stacked fields"));
    }
    let stacked = arr.to_real().map_err(|e| Error::format(path, e.to_string()))?;
    let (rows, cols) = (arr.rows / 2, arr.cols);
    let gx_ref = stacked.crop(Rect::new(0, 0, rows, cols))?;
    let gy_ref = stacked.crop(Rect::new(rows, 0, rows, cols))?;
    let search = LobeSearch::default();
    let lobes = LobeLocation {
        x_lobe: SpectralWindow::new(side.x_lobe[0], side.x_lobe[1], side.x_lobe[2]),
        y_lobe: SpectralWindow::new(side.y_lobe[0], side.y_lobe[1], side.y_lobe[2]),
        search_regions: SearchRegions {
            dc_exclusion_radius: search.dc_exclusion_fraction * side.source_rows.min(side.source_cols) as f64,
            sector_half_width_deg: search.sector_half_width_deg,
            x_excluded_sector_deg: -45.0,
            y_excluded_sector_deg: 135.0,
        },
    };
    Ok(CalibrationFrame { gx_ref, gy_ref, source_dims: (side.source_rows, side.source_cols), lobes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demod::find_lobes;
    use crate::field::fft2_forward;
    use crate::forward::{synthesize_hologram, OpticalSetup, Phantom};
    use std::f64::consts::PI;

    fn object_free(rows: usize, cols: usize, setup: &OpticalSetup) -> (RealImage, LobeLocation) {
        let holo = synthesize_hologram(&Phantom::flat(rows, cols).unwrap(), setup).unwrap();
        let lobes = find_lobes(&fft2_forward(&holo).unwrap()).unwrap();
        (holo, lobes)
    }

    fn rms(img: &RealImage) -> f64 {
        (img.data().iter().map(|v| v * v).sum::<f64>() / img.data().len() as f64).sqrt()
    }

    #[test]
    fn exact_carrier_bins_give_zero_reference() {
        let (holo, lobes) = object_free(128, 128, &OpticalSetup::default());
        let cal = build_calibration(&holo, &lobes).unwrap();
        assert!(rms(&cal.gx_ref) < 1e-9 && rms(&cal.gy_ref) < 1e-9);
    }

    #[test]
    fn carrier_mismatch_appears_as_ramp() {
        let n = 256;
        let detune = 0.3 / n as f64;
        let setup = OpticalSetup { carrier_kx: 0.25 + detune, ..Default::default() };
        let (holo, lobes) = object_free(n, n, &setup);
        assert_eq!(lobes.x_lobe.offset_from_dc((n, n)), (0, 64));
        let cal = build_calibration(&holo, &lobes).unwrap();
        // The residue is 2 pi * detune * x plus window ripple; compare the mean slope.
        let slope = 2.0 * PI * detune;
        let mut total = 0.0;
        for r in 64..192 {
            for c in 64..192 {
                total += wrap_phase(cal.gx_ref.get(r, c + 1) - cal.gx_ref.get(r, c));
            }
        }
        let mean = total / (128.0 * 128.0);
        assert!((mean / slope - 1.0).abs() < 0.1, "{mean} vs {slope}");
        assert!(rms(&cal.gy_ref) < 0.02);
    }

    #[test]
    fn self_calibration_cancels() {
        let setup = OpticalSetup { carrier_kx: 0.23, carrier_ky: 0.27, ..Default::default() };
        let (holo, lobes) = object_free(96, 112, &setup);
        let cal = build_calibration(&holo, &lobes).unwrap();
        let g = demodulate_gradients_with(&holo, &lobes, &DemodOptions::default()).unwrap();
        let out = apply_calibration(&g, &cal).unwrap();
        assert!(rms(&out.gx) < 1e-6 && rms(&out.gy) < 1e-6);
    }

    #[test]
    fn apply_identities() {
        let g = GradientPair::new(
            RealImage::from_fn(8, 8, |r, c| 0.1 * r as f64 - 0.2 * c as f64).unwrap(),
            RealImage::from_fn(8, 8, |r, c| 0.05 * (r * c) as f64 % 3.0).unwrap(),
        )
        .unwrap();
        let lobes = LobeLocation {
            x_lobe: SpectralWindow::new(4, 6, 1),
            y_lobe: SpectralWindow::new(6, 4, 1),
            search_regions: SearchRegions {
                dc_exclusion_radius: 1.0,
                sector_half_width_deg: 15.0,
                x_excluded_sector_deg: -45.0,
                y_excluded_sector_deg: 135.0,
            },
        };
        let same = CalibrationFrame { gx_ref: g.gx.clone(), gy_ref: g.gy.clone(), source_dims: (8, 8), lobes };
        let zero = apply_calibration(&g, &same).unwrap();
        assert!(zero.gx.data().iter().chain(zero.gy.data()).all(|v| *v == 0.0));
        let none = CalibrationFrame {
            gx_ref: RealImage::zeros(8, 8).unwrap(),
            gy_ref: RealImage::zeros(8, 8).unwrap(),
            ..same.clone()
        };
        let kept = apply_calibration(&g, &none).unwrap();
        for (a, b) in kept.gx.data().iter().zip(g.gx.data()) {
            assert!((a - wrap_phase(*b)).abs() < 1e-15);
        }
        let ramp = RealImage::from_fn(8, 8, |_, c| 0.3 * c as f64).unwrap();
        let shifted = GradientPair::new(g.gx.zip_map(&ramp, |a, b| a + b).unwrap(), g.gy.clone()).unwrap();
        let cal = CalibrationFrame { gx_ref: ramp, ..none.clone() };
        let back = apply_calibration(&shifted, &cal).unwrap();
        for (a, b) in back.gx.data().iter().zip(g.gx.data()) {
            assert!((a - b).abs() < 1e-6);
        }
        let small = CalibrationFrame {
            gx_ref: RealImage::zeros(4, 8).unwrap(),
            gy_ref: RealImage::zeros(4, 8).unwrap(),
            ..none
        };
        assert!(matches!(apply_calibration(&g, &small), Err(Error::Parameter(_))));
    }

    #[test]
    fn cutout_adaptation_crops() {
        let (holo, lobes) = object_free(400, 600, &OpticalSetup { carrier_kx: 0.21, ..Default::default() });
        let cal = build_calibration(&holo, &lobes).unwrap();
        let full = adapt_calibration(&cal, CalibrationTarget::Cutout(Rect::new(0, 0, 400, 600))).unwrap();
        assert_eq!(full, cal);
        let rect = Rect::from_ranges(100..300, 200..500);
        let cut = adapt_calibration(&cal, CalibrationTarget::Cutout(rect)).unwrap();
        assert_eq!(cut.dims(), (200, 300));
        assert_eq!(cut.gx_ref.get(0, 0), cal.gx_ref.get(100, 200));
        assert_eq!(cut.gy_ref.get(199, 299), cal.gy_ref.get(299, 499));
        assert!(adapt_calibration(&cal, CalibrationTarget::Cutout(Rect::new(300, 0, 200, 10))).is_err());
    }

    #[test]
    fn layout_adaptation_tiles() {
        let (holo, lobes) = object_free(64, 48, &OpticalSetup { carrier_kx: 0.22, ..Default::default() });
        let cal = build_calibration(&holo, &lobes).unwrap();
        let layout = PatchLayout::new(64, 48, 2, 2).unwrap();
        let tiled = adapt_calibration(&cal, CalibrationTarget::Layout(&layout)).unwrap();
        assert_eq!(tiled.dims(), (128, 96));
        for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            assert_eq!(tiled.gx_ref.crop(Rect::new(64 * i, 48 * j, 64, 48)).unwrap(), cal.gx_ref);
        }
        let wrong = PatchLayout::new(32, 48, 2, 2).unwrap();
        assert!(matches!(adapt_calibration(&cal, CalibrationTarget::Layout(&wrong)), Err(Error::Parameter(_))));
    }

    #[test]
    fn persistence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cal.qph");
        let (holo, lobes) = object_free(64, 80, &OpticalSetup { carrier_kx: 0.2, carrier_ky: 0.3, ..Default::default() });
        let cal = build_calibration(&holo, &lobes).unwrap();
        save_calibration(&path, &cal).unwrap();
        let back = load_calibration(&path).unwrap();
        assert_eq!(back.gx_ref, cal.gx_ref);
        assert_eq!(back.gy_ref, cal.gy_ref);
        assert_eq!(back.source_dims, (64, 80));
        assert_eq!(back.lobes.x_lobe, cal.lobes.x_lobe);
        assert_eq!(back.lobes.y_lobe, cal.lobes.y_lobe);
        let side: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(sidecar_path(&path)).unwrap()).unwrap();
        assert_eq!(side["source_rows"], 64);
        assert_eq!(side["x_lobe"][2], 6);
    }
}
