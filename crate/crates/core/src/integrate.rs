//! Spectral least-squares integration of gradient fields.
//!
//! The solver evaluates `W = F^-1{ (conj(Dx) Gx + conj(Dy) Gy) / (|Dx|^2 + |Dy|^2) }`
//! with `D = j 2 pi f`. With a frequency shift `delta` the gradients are first
//! modulated by `exp(-j 2 pi delta (x / cols + y / rows))`, so every sample of the
//! spectrum represents frequency `(k + delta) / n`, and the solution is
//! demodulated afterwards.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::demod::GradientPair;
use crate::error::{Error, Result};
use crate::field::{fft2_forward, fft2_inverse, ComplexField, RealImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntegrationVariant {
    Plain,
    Mdi,
    Shifted,
}

impl std::str::FromStr for IntegrationVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(IntegrationVariant::Plain),
            "mdi" => Ok(IntegrationVariant::Mdi),
            "shifted" => Ok(IntegrationVariant::Shifted),
            other => Err(Error::param(format!("unknown integration variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegrationConfig {
    pub variant: IntegrationVariant,
    /// Frequency offset in bins for the shifted variant.
    pub shift_delta: f64,
    pub iterations: usize,
    /// Combine the shifted variant with mirrored extension.
    pub shifted_with_mdi: bool,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        IntegrationConfig {
            variant: IntegrationVariant::Mdi,
            shift_delta: 0.5,
            iterations: 1,
            shifted_with_mdi: false,
        }
    }
}

impl IntegrationConfig {
    pub fn with_variant(variant: IntegrationVariant) -> Self {
        IntegrationConfig { variant, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::param("iterations must be at least 1"));
        }
        if self.variant == IntegrationVariant::Shifted && !(self.shift_delta > 0.0 && self.shift_delta < 1.0) {
            return Err(Error::param(format!("shift_delta {} must lie in (0, 1)", self.shift_delta)));
        }
        Ok(())
    }
}

/// Normalized frequencies of a centered spectrum, offset by `shift_delta` bins.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    pub fx: Vec<f64>,
    pub fy: Vec<f64>,
    pub shift_delta: f64,
}

impl FrequencyGrid {
    pub fn new(rows: usize, cols: usize, shift_delta: f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::size("frequency grid needs positive dimensions"));
        }
        if !(0.0..1.0).contains(&shift_delta) {
            return Err(Error::param(format!("shift_delta {shift_delta} must lie in [0, 1)")));
        }
        let axis = |n: usize| -> Vec<f64> {
            (0..n).map(|k| (k as f64 - (n / 2) as f64 + shift_delta) / n as f64).collect()
        };
        Ok(FrequencyGrid { fx: axis(cols), fy: axis(rows), shift_delta })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.fy.len(), self.fx.len())
    }
}

/// Integrated phase (radians, mean-free) and the configuration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMap {
    pub phase: RealImage,
    pub config: IntegrationConfig,
}

/// `exp(-j 2 pi delta (c / cols + r / rows))`, row term and column term.
fn twist_factors(rows: usize, cols: usize, delta: f64) -> (Vec<Complex64>, Vec<Complex64>) {
    let rt = (0..rows).map(|r| Complex64::from_polar(1.0, -2.0 * PI * delta * r as f64 / rows as f64)).collect();
    let ct = (0..cols).map(|c| Complex64::from_polar(1.0, -2.0 * PI * delta * c as f64 / cols as f64)).collect();
    (rt, ct)
}

fn to_complex(img: &RealImage, twist: Option<&(Vec<Complex64>, Vec<Complex64>)>) -> ComplexField {
    let (rows, cols) = img.dims();
    match twist {
        None => ComplexField::from(img),
        Some((rt, ct)) => {
            let mut data = Vec::with_capacity(rows * cols);
            for r in 0..rows {
                for (c, v) in img.row(r).iter().enumerate() {
                    data.push(rt[r] * ct[c] * *v);
                }
            }
            ComplexField::from_parts_unchecked(rows, cols, data)
        }
    }
}

/// Least-squares solution spectrum from gradient spectra, in place into `gx_hat`.
fn solve_spectrum(gx_hat: &mut ComplexField, gy_hat: &ComplexField, grid: &FrequencyGrid) {
    let cols = grid.fx.len();
    let two_pi = 2.0 * PI;
    for (r, (row_x, row_y)) in gx_hat
        .data_mut()
        .chunks_mut(cols)
        .zip(gy_hat.data().chunks(cols))
        .enumerate()
    {
        let wy = two_pi * grid.fy[r];
        for (c, (zx, zy)) in row_x.iter_mut().zip(row_y).enumerate() {
            let wx = two_pi * grid.fx[c];
            let den = wx * wx + wy * wy;
            // conj(j w) = -j w
            *zx = if den > 0.0 {
                Complex64::new(0.0, -1.0) * (*zx * wx + *zy * wy) / den
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
    }
}

/// Subtracts the spectral derivatives of `w_hat` from the gradient spectra.
fn residual_spectra(gx_hat: &mut ComplexField, gy_hat: &mut ComplexField, w_hat: &ComplexField, grid: &FrequencyGrid) {
    let cols = grid.fx.len();
    let two_pi = 2.0 * PI;
    for (i, w) in w_hat.data().iter().enumerate() {
        let (r, c) = (i / cols, i % cols);
        let dx = Complex64::new(0.0, two_pi * grid.fx[c]);
        let dy = Complex64::new(0.0, two_pi * grid.fy[r]);
        gx_hat.data_mut()[i] -= dx * w;
        gy_hat.data_mut()[i] -= dy * w;
    }
}

/// Core solve on the domain described by `grid`; returns the real, mean-free solution.
fn solve(grads: &GradientPair, grid: &FrequencyGrid, iterations: usize) -> Result<RealImage> {
    let (rows, cols) = grads.dims();
    if grid.dims() != (rows, cols) {
        return Err(Error::param(format!(
            "frequency grid {:?} does not match gradients {rows}x{cols}",
            grid.dims()
        )));
    }
    let twist = (grid.shift_delta > 0.0).then(|| twist_factors(rows, cols, grid.shift_delta));
    let (gx_hat, gy_hat) = rayon::join(
        || fft2_forward(to_complex(&grads.gx, twist.as_ref())),
        || fft2_forward(to_complex(&grads.gy, twist.as_ref())),
    );
    let (mut gx_hat, mut gy_hat) = (gx_hat?, gy_hat?);
    let w_hat = if iterations == 1 {
        solve_spectrum(&mut gx_hat, &gy_hat, grid);
        drop(gy_hat);
        gx_hat
    } else {
        let mut total = ComplexField::zeros(rows, cols)?;
        for _ in 0..iterations {
            let mut step = gx_hat.clone();
            solve_spectrum(&mut step, &gy_hat, grid);
            residual_spectra(&mut gx_hat, &mut gy_hat, &step, grid);
            total.data_mut().iter_mut().zip(step.data()).for_each(|(t, s)| *t += s);
        }
        total
    };
    let w = fft2_inverse(&w_hat)?;
    let mut data: Vec<f64> = match &twist {
        None => w.data().iter().map(|z| z.re).collect(),
        Some((rt, ct)) => {
            let mut out = Vec::with_capacity(rows * cols);
            for r in 0..rows {
                for c in 0..cols {
                    out.push((w.get(r, c) * (rt[r] * ct[c]).conj()).re);
                }
            }
            out
        }
    };
    let mean = data.iter().sum::<f64>() / data.len() as f64;
    data.iter_mut().for_each(|v| *v -= mean);
    RealImage::new(rows, cols, data).map_err(|e| Error::Internal(format!("integration produced invalid output: {e}")))
}

/// Least-squares integration on the periodic domain of the gradients.
pub fn integrate_ils(grads: &GradientPair, grid: &FrequencyGrid) -> Result<PhaseMap> {
    let variant = if grid.shift_delta > 0.0 { IntegrationVariant::Shifted } else { IntegrationVariant::Plain };
    Ok(PhaseMap {
        phase: solve(grads, grid, 1)?,
        config: IntegrationConfig { variant, shift_delta: grid.shift_delta, ..Default::default() },
    })
}

fn flip_cols(img: &RealImage) -> Vec<f64> {
    let mut out = Vec::with_capacity(img.data().len());
    for r in 0..img.rows() {
        out.extend(img.row(r).iter().rev());
    }
    out
}

/// Mirrored `2N x 2M` extension. `gx` is odd in x and even in y, `gy` even in x and odd in y:
/// `gx -> [gx, -flipx; flipy, -flipxy]`, `gy -> [gy, flipx; -flipy, -flipxy]`.
pub fn mirror_extend(grads: &GradientPair) -> Result<GradientPair> {
    let (rows, cols) = grads.dims();
    let extend = |g: &RealImage, sx: f64, sy: f64| -> RealImage {
        let flipped = flip_cols(g);
        let (er, ec) = (2 * rows, 2 * cols);
        let mut out = vec![0.0; er * ec];
        for r in 0..rows {
            let src = g.row(r);
            let fsrc = &flipped[r * cols..(r + 1) * cols];
            let top = &mut out[r * ec..(r + 1) * ec];
            top[..cols].copy_from_slice(src);
            for (d, s) in top[cols..].iter_mut().zip(fsrc) {
                *d = sx * s;
            }
            let br = 2 * rows - 1 - r;
            let bottom = &mut out[br * ec..(br + 1) * ec];
            for (d, s) in bottom[..cols].iter_mut().zip(src) {
                *d = sy * s;
            }
            for (d, s) in bottom[cols..].iter_mut().zip(fsrc) {
                *d = sx * sy * s;
            }
        }
        RealImage::from_parts_unchecked(er, ec, out)
    };
    GradientPair::new(extend(&grads.gx, -1.0, 1.0), extend(&grads.gy, 1.0, -1.0))
}

/// Integration on the mirrored extension, cropped back to the original quadrant.
/// `shift_delta` may be 0 (plain spectrum) or in (0, 1).
pub fn integrate_mdi(grads: &GradientPair, shift_delta: f64) -> Result<PhaseMap> {
    integrate_mdi_iter(grads, shift_delta, 1)
}

fn integrate_mdi_iter(grads: &GradientPair, shift_delta: f64, iterations: usize) -> Result<PhaseMap> {
    let (rows, cols) = grads.dims();
    let ext = mirror_extend(grads)?;
    let grid = FrequencyGrid::new(2 * rows, 2 * cols, shift_delta)?;
    let full = solve(&ext, &grid, iterations)?;
    drop(ext);
    let phase = full.crop(crate::field::Rect::new(0, 0, rows, cols))?.mean_free();
    Ok(PhaseMap {
        phase,
        config: IntegrationConfig {
            variant: if shift_delta > 0.0 { IntegrationVariant::Shifted } else { IntegrationVariant::Mdi },
            shift_delta,
            iterations,
            shifted_with_mdi: shift_delta > 0.0,
        },
    })
}

/// Integration with every frequency offset by `shift_delta` bins, so no denominator vanishes.
pub fn integrate_shifted(grads: &GradientPair, shift_delta: f64) -> Result<PhaseMap> {
    if !(shift_delta > 0.0 && shift_delta < 1.0) {
        return Err(Error::param(format!("shift_delta {shift_delta} must lie in (0, 1)")));
    }
    let (rows, cols) = grads.dims();
    integrate_ils(grads, &FrequencyGrid::new(rows, cols, shift_delta)?)
}

/// Dispatches on `cfg.variant`.
pub fn integrate(grads: &GradientPair, cfg: &IntegrationConfig) -> Result<PhaseMap> {
    cfg.validate()?;
    let (rows, cols) = grads.dims();
    let mut out = match cfg.variant {
        IntegrationVariant::Plain => PhaseMap {
            phase: solve(grads, &FrequencyGrid::new(rows, cols, 0.0)?, cfg.iterations)?,
            config: *cfg,
        },
        IntegrationVariant::Mdi => integrate_mdi_iter(grads, 0.0, cfg.iterations)?,
        IntegrationVariant::Shifted if cfg.shifted_with_mdi => integrate_mdi_iter(grads, cfg.shift_delta, cfg.iterations)?,
        IntegrationVariant::Shifted => PhaseMap {
            phase: solve(grads, &FrequencyGrid::new(rows, cols, cfg.shift_delta)?, cfg.iterations)?,
            config: *cfg,
        },
    };
    out.config = *cfg;
    Ok(out)
}

/// Converts integrated shear differences to phase by dividing by the shear.
/// Anisotropic shears must be handled before integration with [`scale_gradients`].
pub fn scale_to_phase(raw: &PhaseMap, shear_px: (i64, i64)) -> Result<PhaseMap> {
    let (sx, sy) = shear_px;
    if sx == 0 || sy == 0 {
        return Err(Error::param("shear must be nonzero"));
    }
    if sx.unsigned_abs() != sy.unsigned_abs() {
        return Err(Error::param(format!(
            "anisotropic shear ({sx}, {sy}) must be applied to the gradients before integration"
        )));
    }
    Ok(PhaseMap { phase: raw.phase.scale(1.0 / sx.unsigned_abs() as f64)?, config: raw.config })
}

/// Multiplies `gx` by `fx` and `gy` by `fy`.
pub fn scale_gradients(grads: &GradientPair, fx: f64, fy: f64) -> Result<GradientPair> {
    GradientPair::new(grads.gx.scale(fx)?, grads.gy.scale(fy)?)
}
