//! Three-beam lateral-shear hologram synthesis from known phantoms.
//!
//! Coordinates: `x` is the column index, `y` the row index, both starting at 0.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ComplexField, RealImage};

/// Illumination wavelength of the reference instrument, in micrometres.
pub const DEFAULT_WAVELENGTH_UM: f64 = 0.528;

/// Largest optical height observed on real specimens, in micrometres.
pub const DEFAULT_MAX_HEIGHT_UM: f64 = 0.65;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpticalSetup {
    pub wavelength_um: f64,
    pub shear_x_px: i64,
    pub shear_y_px: i64,
    /// Carrier of the x-sheared beam, cycles/pixel along columns.
    pub carrier_kx: f64,
    /// Carrier of the y-sheared beam, cycles/pixel along rows.
    pub carrier_ky: f64,
}

impl Default for OpticalSetup {
    fn default() -> Self {
        OpticalSetup {
            wavelength_um: DEFAULT_WAVELENGTH_UM,
            shear_x_px: 8,
            shear_y_px: 8,
            carrier_kx: 0.25,
            carrier_ky: 0.25,
        }
    }
}

impl OpticalSetup {
    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength_um.is_finite() && self.wavelength_um > 0.0) {
            return Err(Error::param(format!("wavelength must be positive, got {}", self.wavelength_um)));
        }
        for (name, k) in [("carrier_kx", self.carrier_kx), ("carrier_ky", self.carrier_ky)] {
            if !(k.abs() > 0.0 && k.abs() < 0.5) {
                return Err(Error::param(format!("{name} = {k} must satisfy 0 < |k| < 0.5")));
            }
        }
        for (name, s) in [("shear_x_px", self.shear_x_px), ("shear_y_px", self.shear_y_px)] {
            if s == 0 {
                return Err(Error::param(format!("{name} must be nonzero")));
            }
        }
        Ok(())
    }

    /// Phase in radians corresponding to an optical height in micrometres.
    pub fn height_to_phase(&self, height_um: f64) -> f64 {
        height_um * 2.0 * PI / self.wavelength_um
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    amplitude: RealImage,
    phase: RealImage,
}

impl Phantom {
    pub fn new(amplitude: RealImage, phase: RealImage) -> Result<Self> {
        amplitude.ensure_same_dims(&phase)?;
        if amplitude.data().iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::param("phantom amplitude must lie in [0, 1]"));
        }
        Ok(Phantom { amplitude, phase })
    }

    /// Unit amplitude, zero phase.
    pub fn flat(rows: usize, cols: usize) -> Result<Self> {
        Ok(Phantom {
            amplitude: RealImage::filled(rows, cols, 1.0)?,
            phase: RealImage::zeros(rows, cols)?,
        })
    }

    pub fn amplitude(&self) -> &RealImage {
        &self.amplitude
    }

    pub fn phase(&self) -> &RealImage {
        &self.phase
    }

    pub fn dims(&self) -> (usize, usize) {
        self.phase.dims()
    }

    /// Adds `extra` to the phase.
    pub fn with_added_phase(&self, extra: &RealImage) -> Result<Self> {
        Ok(Phantom {
            amplitude: self.amplitude.clone(),
            phase: self.phase.zip_map(extra, |a, b| a + b)?,
        })
    }

    pub fn crop(&self, rect: crate::field::Rect) -> Result<Self> {
        Ok(Phantom {
            amplitude: self.amplitude.crop(rect)?,
            phase: self.phase.crop(rect)?,
        })
    }
}

/// One raised-cosine cell: `peak * (1 + cos(pi d / radius)) / 2` for `d < radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    /// `[row, col]` in pixels; may be fractional.
    pub center: [f64; 2],
    pub radius: f64,
    pub peak_height_um: f64,
    /// Fractional amplitude loss at the cell peak.
    #[serde(default)]
    pub absorption: f64,
}

impl CellSpec {
    pub fn new(center: [f64; 2], radius: f64, peak_height_um: f64) -> Self {
        CellSpec { center, radius, peak_height_um, absorption: 0.0 }
    }

    /// Normalized profile in `[0, 1]` at a pixel.
    pub fn profile(&self, row: usize, col: usize) -> f64 {
        let d = (row as f64 - self.center[0]).hypot(col as f64 - self.center[1]);
        if d < self.radius {
            0.5 * (1.0 + (PI * d / self.radius).cos())
        } else {
            0.0
        }
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        (row as f64 - self.center[0]).hypot(col as f64 - self.center[1]) < self.radius
    }

    /// Pixel bounding box `(r0, r1, c0, c1)`, half-open and clipped to the image.
    fn bbox(&self, rows: usize, cols: usize) -> (usize, usize, usize, usize) {
        let clip = |v: f64, n: usize| v.max(0.0).min(n as f64) as usize;
        (
            clip((self.center[0] - self.radius).floor(), rows),
            clip((self.center[0] + self.radius).ceil() + 1.0, rows),
            clip((self.center[1] - self.radius).floor(), cols),
            clip((self.center[1] + self.radius).ceil() + 1.0, cols),
        )
    }
}

fn validate_cells(rows: usize, cols: usize, cells: &[CellSpec], max_height_um: f64) -> Result<()> {
    for (i, cell) in cells.iter().enumerate() {
        let [r, c] = cell.center;
        if !(r >= 0.0 && r < rows as f64 && c >= 0.0 && c < cols as f64) {
            return Err(Error::param(format!("cell {i}: center ({r}, {c}) outside {rows}x{cols} image")));
        }
        if !(cell.radius > 0.0 && cell.radius.is_finite()) {
            return Err(Error::param(format!("cell {i}: radius must be positive")));
        }
        if !(cell.peak_height_um >= 0.0 && cell.peak_height_um <= max_height_um) {
            return Err(Error::param(format!(
                "cell {i}: peak height {} um outside [0, {max_height_um}]",
                cell.peak_height_um
            )));
        }
        if !(0.0..=1.0).contains(&cell.absorption) {
            return Err(Error::param(format!("cell {i}: absorption must lie in [0, 1]")));
        }
    }
    Ok(())
}

/// Superposes raised-cosine cells into a phantom. Peak heights above
/// `max_height_um` are rejected; amplitude is clamped into `[0, 1]`.
pub fn make_cell_phantom(
    rows: usize,
    cols: usize,
    cells: &[CellSpec],
    wavelength_um: f64,
    max_height_um: f64,
) -> Result<Phantom> {
    if !(wavelength_um > 0.0) {
        return Err(Error::param("wavelength must be positive"));
    }
    validate_cells(rows, cols, cells, max_height_um)?;
    let mut phase = RealImage::zeros(rows, cols)?;
    let mut absorb = RealImage::zeros(rows, cols)?;
    for cell in cells {
        let peak = cell.peak_height_um * 2.0 * PI / wavelength_um;
        let (r0, r1, c0, c1) = cell.bbox(rows, cols);
        for r in r0..r1 {
            for c in c0..c1 {
                let p = cell.profile(r, c);
                if p > 0.0 {
                    phase.set(r, c, phase.get(r, c) + peak * p);
                    absorb.set(r, c, absorb.get(r, c) + cell.absorption * p);
                }
            }
        }
    }
    let amplitude = absorb.map(|a| (1.0 - a).clamp(0.0, 1.0))?;
    Phantom::new(amplitude, phase)
}

/// Binary mask (1 inside) of the union of the cells' disks.
pub fn cell_mask(rows: usize, cols: usize, cells: &[CellSpec]) -> Result<RealImage> {
    let mut mask = RealImage::zeros(rows, cols)?;
    for cell in cells {
        let (r0, r1, c0, c1) = cell.bbox(rows, cols);
        for r in r0..r1 {
            for c in c0..c1 {
                if cell.contains(r, c) {
                    mask.set(r, c, 1.0);
                }
            }
        }
    }
    Ok(mask)
}

/// Plane-wave phase term `amplitude * sin(2 pi (x cos a + y sin a) / period + offset)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseWave {
    pub amplitude_rad: f64,
    pub period_px: f64,
    pub angle_rad: f64,
    pub offset_rad: f64,
}

impl PhaseWave {
    pub fn render(&self, rows: usize, cols: usize) -> Result<RealImage> {
        if !(self.period_px > 0.0) {
            return Err(Error::param("wave period must be positive"));
        }
        let (ca, sa) = (self.angle_rad.cos(), self.angle_rad.sin());
        RealImage::from_fn(rows, cols, |r, c| {
            let u = c as f64 * ca + r as f64 * sa;
            self.amplitude_rad * (2.0 * PI * u / self.period_px + self.offset_rad).sin()
        })
    }
}

/// `A * exp(j phi)`.
pub fn make_object_wave(phantom: &Phantom) -> Result<ComplexField> {
    let (rows, cols) = phantom.dims();
    let data = phantom
        .amplitude
        .data()
        .iter()
        .zip(phantom.phase.data())
        .map(|(&a, &p)| Complex64::from_polar(a, p))
        .collect();
    ComplexField::new(rows, cols, data)
}

#[inline]
fn clamp_index(i: i64, n: usize) -> usize {
    i.clamp(0, n as i64 - 1) as usize
}

/// `I = |E_O + E_x + E_y|^2` with
/// `E_x(y, x) = O(y, x - s_x) exp(j 2 pi k_x x)` and
/// `E_y(y, x) = O(y - s_y, x) exp(j 2 pi k_y y)`; shifted samples replicate the edge.
pub fn synthesize_hologram(phantom: &Phantom, setup: &OpticalSetup) -> Result<RealImage> {
    setup.validate()?;
    let (rows, cols) = phantom.dims();
    let sx = setup.shear_x_px;
    let sy = setup.shear_y_px;
    if (cols as u64) < 2 * sx.unsigned_abs() || (rows as u64) < 2 * sy.unsigned_abs() {
        return Err(Error::size(format!(
            "phantom {rows}x{cols} too small for shears ({sy}, {sx})"
        )));
    }
    let o = make_object_wave(phantom)?;
    let carrier_x: Vec<Complex64> = (0..cols)
        .map(|c| Complex64::from_polar(1.0, 2.0 * PI * setup.carrier_kx * c as f64))
        .collect();
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let ry = clamp_index(r as i64 - sy, rows);
        let cy = Complex64::from_polar(1.0, 2.0 * PI * setup.carrier_ky * r as f64);
        for c in 0..cols {
            let e_o = o.get(r, c);
            let e_x = o.get(r, clamp_index(c as i64 - sx, cols)) * carrier_x[c];
            let e_y = o.get(ry, c) * cy;
            data.push((e_o + e_x + e_y).norm_sqr());
        }
    }
    RealImage::new(rows, cols, data)
}

/// Adds seeded white Gaussian noise of standard deviation `sigma`.
pub fn add_noise(img: &RealImage, sigma: f64, seed: u64) -> Result<RealImage> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::param("noise sigma must be finite and nonnegative"));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::param(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = img.data().iter().map(|v| v + normal.sample(&mut rng)).collect();
    RealImage::new(img.rows(), img.cols(), data)
}
