//! End-to-end reconstruction: demodulation, calibration, integration and scaling.

use serde::{Deserialize, Serialize};

use crate::calibration::{adapt_calibration, apply_calibration, CalibrationFrame, CalibrationTarget};
use crate::demod::{amplitude_from_spectrum, demodulate_spectrum, find_lobes_with, CarrierReference, DemodOptions, GradientPair, LobeLocation, LobeSearch};
use crate::error::{Error, Result};
use crate::field::{fft2_forward, RealImage, Rect};
use crate::forward::{OpticalSetup, DEFAULT_MAX_HEIGHT_UM};
use crate::integrate::{integrate, scale_to_phase, IntegrationConfig, PhaseMap};
use crate::metrics::Units;
use crate::wsi::{PatchLayout, WsiStrategy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Qph,
    Png16,
    Csv,
}

/// Every tunable of the pipeline. Missing JSON fields take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub setup: OpticalSetup,
    pub integration: IntegrationConfig,
    pub window_fraction: f64,
    pub dc_exclusion_fraction: f64,
    pub sector_half_width_deg: f64,
    pub detection_ratio: f64,
    pub apodize: bool,
    /// Shift each difference field by half the shear so it samples the derivative at the pixel.
    pub recenter_shear: bool,
    pub mask_erosion_px: usize,
    pub metric_units: Units,
    pub output_format: OutputFormat,
    /// Strategy used for mosaics.
    pub wsi_strategy: WsiStrategy,
    /// Cap on phantom peak heights accepted by synthesis.
    pub max_height_um: f64,
    /// Additive Gaussian detector noise used by synthesis.
    pub noise_sigma: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let search = LobeSearch::default();
        PipelineConfig {
            setup: OpticalSetup::default(),
            integration: IntegrationConfig::default(),
            window_fraction: search.window_fraction,
            dc_exclusion_fraction: search.dc_exclusion_fraction,
            sector_half_width_deg: search.sector_half_width_deg,
            detection_ratio: search.detection_ratio,
            apodize: false,
            recenter_shear: true,
            mask_erosion_px: 2,
            metric_units: Units::Micrometres,
            output_format: OutputFormat::Qph,
            wsi_strategy: WsiStrategy::WholeShifted,
            max_height_um: DEFAULT_MAX_HEIGHT_UM,
            noise_sigma: 0.0,
        }
    }
}

impl PipelineConfig {
    pub fn lobe_search(&self) -> LobeSearch {
        LobeSearch {
            window_fraction: self.window_fraction,
            dc_exclusion_fraction: self.dc_exclusion_fraction,
            sector_half_width_deg: self.sector_half_width_deg,
            detection_ratio: self.detection_ratio,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.setup.validate()?;
        self.integration.validate()?;
        self.lobe_search().validate()?;
        if !(self.max_height_um > 0.0) {
            return Err(Error::param("max_height_um must be positive"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::param("noise_sigma must be finite and nonnegative"));
        }
        Ok(())
    }

    pub fn with_integration(&self, integration: IntegrationConfig) -> Self {
        PipelineConfig { integration, ..self.clone() }
    }
}

/// Where a hologram sits relative to the calibration source frame.
#[derive(Debug, Clone, Copy)]
pub enum Geometry<'a> {
    /// Same size as the calibration source.
    Full,
    /// A rectangle of a source-sized frame.
    Cutout(Rect),
    /// A mosaic of source-sized tiles.
    Mosaic(&'a PatchLayout),
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    /// Object phase in radians, mean-free.
    pub phase: PhaseMap,
    pub amplitude: RealImage,
    pub lobes: LobeLocation,
    /// Calibrated wrapped differences before scaling.
    pub gradients: GradientPair,
}

fn shift_cols(img: &RealImage, offset: i64) -> RealImage {
    let (rows, cols) = img.dims();
    let last = cols as i64 - 1;
    let idx: Vec<usize> = (0..cols as i64).map(|c| (c + offset).clamp(0, last) as usize).collect();
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let row = img.row(r);
        data.extend(idx.iter().map(|&i| row[i]));
    }
    RealImage::from_parts_unchecked(rows, cols, data)
}

fn shift_rows(img: &RealImage, offset: i64) -> RealImage {
    let (rows, cols) = img.dims();
    let last = rows as i64 - 1;
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows as i64 {
        data.extend_from_slice(img.row((r + offset).clamp(0, last) as usize));
    }
    RealImage::from_parts_unchecked(rows, cols, data)
}

/// Turns wrapped differences `phi(x - s) - phi(x)` into integrable fields.
///
/// Returns the prepared pair and, for equal shear magnitudes, the shear still to be
/// divided out after integration. Anisotropic shears are divided out here.
pub fn prepare_gradients(grads: &GradientPair, setup: &OpticalSetup, recenter: bool) -> Result<(GradientPair, Option<i64>)> {
    setup.validate()?;
    let (sx, sy) = (setup.shear_x_px, setup.shear_y_px);
    let (gx, gy) = if recenter {
        (shift_cols(&grads.gx, sx / 2), shift_rows(&grads.gy, sy / 2))
    } else {
        (grads.gx.clone(), grads.gy.clone())
    };
    // A negative carrier puts the conjugate lobe in the searched half-plane.
    let kx = setup.carrier_kx.signum();
    let ky = setup.carrier_ky.signum();
    if sx.unsigned_abs() == sy.unsigned_abs() {
        let fx = -kx * sx.signum() as f64;
        let fy = -ky * sy.signum() as f64;
        Ok((GradientPair::new(gx.scale(fx)?, gy.scale(fy)?)?, Some(sx.abs())))
    } else {
        let fx = -kx / sx as f64;
        let fy = -ky / sy as f64;
        Ok((GradientPair::new(gx.scale(fx)?, gy.scale(fy)?)?, None))
    }
}

/// Integrates prepared gradients and removes the shear scale.
pub fn integrate_prepared(prepared: &GradientPair, shear: Option<i64>, integration: &IntegrationConfig) -> Result<PhaseMap> {
    let raw = integrate(prepared, integration)?;
    match shear {
        Some(s) => scale_to_phase(&raw, (s, s)),
        None => Ok(raw),
    }
}

fn carrier_reference(cal: &CalibrationFrame, geometry: Geometry<'_>) -> CarrierReference {
    let base = CarrierReference::from_lobes(&cal.lobes, cal.source_dims);
    match geometry {
        Geometry::Cutout(rect) => base.with_origin(rect.row as f64, rect.col as f64),
        Geometry::Full | Geometry::Mosaic(_) => base,
    }
}

/// Demodulated and (optionally) calibrated wrapped differences, with lobes and amplitude.
pub fn demodulate(
    hologram: &RealImage,
    cfg: &PipelineConfig,
    calibration: Option<&CalibrationFrame>,
    geometry: Geometry<'_>,
) -> Result<(GradientPair, LobeLocation, RealImage)> {
    cfg.validate()?;
    let spectrum = fft2_forward(hologram)?;
    let lobes = find_lobes_with(&spectrum, &cfg.lobe_search())?;
    let opts = DemodOptions {
        apodize: cfg.apodize,
        carrier_reference: calibration.map(|cal| carrier_reference(cal, geometry)),
    };
    let grads = demodulate_spectrum(&spectrum, &lobes, &opts)?;
    let amplitude = amplitude_from_spectrum(&spectrum, &lobes)?;
    drop(spectrum);
    let grads = match calibration {
        None => grads,
        Some(cal) => {
            let adapted;
            let frame = match geometry {
                Geometry::Full => cal,
                Geometry::Cutout(rect) => {
                    adapted = adapt_calibration(cal, CalibrationTarget::Cutout(rect))?;
                    &adapted
                }
                Geometry::Mosaic(layout) => {
                    adapted = adapt_calibration(cal, CalibrationTarget::Layout(layout))?;
                    &adapted
                }
            };
            apply_calibration(&grads, frame)?
        }
    };
    Ok((grads, lobes, amplitude))
}

/// Full reconstruction of one hologram (single shot, cutout or mosaic).
pub fn reconstruct(
    hologram: &RealImage,
    cfg: &PipelineConfig,
    calibration: Option<&CalibrationFrame>,
    geometry: Geometry<'_>,
) -> Result<Reconstruction> {
    let (gradients, lobes, amplitude) = demodulate(hologram, cfg, calibration, geometry)?;
    let (prepared, shear) = prepare_gradients(&gradients, &cfg.setup, cfg.recenter_shear)?;
    let phase = integrate_prepared(&prepared, shear, &cfg.integration)?;
    Ok(Reconstruction { phase, amplitude, lobes, gradients })
}
