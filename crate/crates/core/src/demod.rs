//! Lobe search, gradient demodulation and amplitude extraction.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{fft2_forward, fft2_inverse, recenter_lobe, ComplexField, RealImage, SpectralWindow};

/// Smallest spectrum the lobe search accepts, per axis.
pub const MIN_SEARCH_DIM: usize = 32;

/// Parameters of the lobe search regions and detection test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LobeSearch {
    /// Window half-size as a fraction of `min(rows, cols)`.
    pub window_fraction: f64,
    /// DC exclusion disk radius as a fraction of `min(rows, cols)`, in bins.
    pub dc_exclusion_fraction: f64,
    /// Half-width of the excluded difference-lobe sectors, degrees.
    pub sector_half_width_deg: f64,
    /// Required ratio of 3x3-summed peak power to the region's median 3x3 power.
    pub detection_ratio: f64,
}

impl Default for LobeSearch {
    fn default() -> Self {
        LobeSearch {
            window_fraction: 0.1,
            dc_exclusion_fraction: 0.08,
            sector_half_width_deg: 15.0,
            detection_ratio: 10.0,
        }
    }
}

impl LobeSearch {
    pub fn validate(&self) -> Result<()> {
        if !(self.window_fraction > 0.0 && self.window_fraction <= 0.25) {
            return Err(Error::param(format!(
                "window_fraction {} must lie in (0, 0.25]",
                self.window_fraction
            )));
        }
        if !(self.dc_exclusion_fraction > 0.0 && self.dc_exclusion_fraction < self.window_fraction) {
            return Err(Error::param(format!(
                "dc_exclusion_fraction {} must lie in (0, window_fraction)",
                self.dc_exclusion_fraction
            )));
        }
        if !(0.0..90.0).contains(&self.sector_half_width_deg) {
            return Err(Error::param("sector_half_width_deg must lie in [0, 90)"));
        }
        if !(self.detection_ratio >= 1.0) {
            return Err(Error::param("detection_ratio must be at least 1"));
        }
        Ok(())
    }

    /// Window half-size `floor(window_fraction * min(rows, cols))`, at least 1.
    pub fn half_size(&self, rows: usize, cols: usize) -> usize {
        ((self.window_fraction * rows.min(cols) as f64).floor() as usize).max(1)
    }
}

/// Geometry of the regions actually searched.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchRegions {
    pub dc_exclusion_radius: f64,
    pub sector_half_width_deg: f64,
    /// Direction of the excluded sector in the x region (atan2 of normalized row, col frequency).
    pub x_excluded_sector_deg: f64,
    pub y_excluded_sector_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LobeLocation {
    pub x_lobe: SpectralWindow,
    pub y_lobe: SpectralWindow,
    pub search_regions: SearchRegions,
}

/// Wrapped phase differences along the two shear directions.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientPair {
    pub gx: RealImage,
    pub gy: RealImage,
}

impl GradientPair {
    pub fn new(gx: RealImage, gy: RealImage) -> Result<Self> {
        gx.ensure_same_dims(&gy)?;
        Ok(GradientPair { gx, gy })
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Ok(GradientPair { gx: RealImage::zeros(rows, cols)?, gy: RealImage::zeros(rows, cols)? })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.gx.dims()
    }

    pub fn map(&self, f: impl Fn(&RealImage) -> Result<RealImage>) -> Result<Self> {
        GradientPair::new(f(&self.gx)?, f(&self.gy)?)
    }
}

fn angle_distance_deg(a: f64, b: f64) -> f64 {
    ((a - b + 180.0).rem_euclid(360.0) - 180.0).abs()
}

/// 3x3 box sum with zero padding, row-major.
fn box3(power: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut horiz = vec![0.0; power.len()];
    for r in 0..rows {
        let row = &power[r * cols..(r + 1) * cols];
        for c in 0..cols {
            let lo = c.saturating_sub(1);
            let hi = (c + 2).min(cols);
            horiz[r * cols + c] = row[lo..hi].iter().sum();
        }
    }
    let mut out = vec![0.0; power.len()];
    for r in 0..rows {
        let lo = r.saturating_sub(1);
        let hi = (r + 2).min(rows);
        for rr in lo..hi {
            for c in 0..cols {
                out[r * cols + c] += horiz[rr * cols + c];
            }
        }
    }
    out
}

struct Region {
    indices: Vec<usize>,
}

impl Region {
    /// First index of maximal power in row-major order.
    fn argmax(&self, power: &[f64]) -> usize {
        let mut best = self.indices[0];
        for &i in &self.indices[1..] {
            if power[i] > power[best] {
                best = i;
            }
        }
        best
    }

    fn median(&self, values: &[f64]) -> f64 {
        let mut v: Vec<f64> = self.indices.iter().map(|&i| values[i]).collect();
        let mid = v.len() / 2;
        let (_, m, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
        *m
    }
}

fn build_regions(rows: usize, cols: usize, search: &LobeSearch) -> (Region, Region, SearchRegions) {
    let (cr, cc) = ((rows / 2) as f64, (cols / 2) as f64);
    let radius = search.dc_exclusion_fraction * rows.min(cols) as f64;
    let regions = SearchRegions {
        dc_exclusion_radius: radius,
        sector_half_width_deg: search.sector_half_width_deg,
        x_excluded_sector_deg: -45.0,
        y_excluded_sector_deg: 135.0,
    };
    let mut xr = Vec::new();
    let mut yr = Vec::new();
    for r in 0..rows {
        let dr = r as f64 - cr;
        for c in 0..cols {
            let dc = c as f64 - cc;
            if dr.hypot(dc) <= radius {
                continue;
            }
            let ang = (dr / rows as f64).atan2(dc / cols as f64).to_degrees();
            if dc > 0.0 && angle_distance_deg(ang, regions.x_excluded_sector_deg) > search.sector_half_width_deg {
                xr.push(r * cols + c);
            }
            if dr > 0.0 && angle_distance_deg(ang, regions.y_excluded_sector_deg) > search.sector_half_width_deg {
                yr.push(r * cols + c);
            }
        }
    }
    (Region { indices: xr }, Region { indices: yr }, regions)
}

/// Locates the x- and y-gradient lobes with default search parameters.
pub fn find_lobes(spectrum: &ComplexField) -> Result<LobeLocation> {
    find_lobes_with(spectrum, &LobeSearch::default())
}

/// Locates the x-lobe in the right half-plane and the y-lobe in the half-plane
/// of positive row frequency, each outside the DC disk and the difference-lobe sector.
pub fn find_lobes_with(spectrum: &ComplexField, search: &LobeSearch) -> Result<LobeLocation> {
    search.validate()?;
    let (rows, cols) = spectrum.dims();
    if rows < MIN_SEARCH_DIM || cols < MIN_SEARCH_DIM {
        return Err(Error::size(format!(
            "spectrum {rows}x{cols} is smaller than {MIN_SEARCH_DIM}x{MIN_SEARCH_DIM}"
        )));
    }
    let (xr, yr, regions) = build_regions(rows, cols, search);
    if xr.indices.is_empty() || yr.indices.is_empty() {
        return Err(Error::size(format!("lobe search region is empty for {rows}x{cols}")));
    }
    let power: Vec<f64> = spectrum.data().iter().map(|z| z.norm_sqr()).collect();
    let summed = box3(&power, rows, cols);
    let half = search.half_size(rows, cols);
    let locate = |region: &Region, name: &str| -> Result<SpectralWindow> {
        let peak = region.argmax(&power);
        let median = region.median(&summed);
        let ratio = summed[peak] / median;
        if !(summed[peak] > 0.0) || ratio < search.detection_ratio {
            return Err(Error::LobeNotFound(format!(
                "{name}-lobe peak/median power ratio {ratio:.2} is below {}",
                search.detection_ratio
            )));
        }
        Ok(SpectralWindow::new(peak / cols, peak % cols, half))
    };
    Ok(LobeLocation {
        x_lobe: locate(&xr, "x")?,
        y_lobe: locate(&yr, "y")?,
        search_regions: regions,
    })
}

/// Reference carrier for a lobe, used to express demodulated phase relative
/// to a fixed carrier frequency and pixel origin instead of the local bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarrierReference {
    /// `(row, col)` frequency in cycles/pixel of the reference x-lobe.
    pub x_freq: (f64, f64),
    pub y_freq: (f64, f64),
    /// Position of this image's pixel (0, 0) in the reference frame.
    pub origin: (f64, f64),
}

impl CarrierReference {
    /// Reference at the lobe bins of a frame with dimensions `dims`.
    pub fn from_lobes(lobes: &LobeLocation, dims: (usize, usize)) -> Self {
        CarrierReference {
            x_freq: lobes.x_lobe.frequency(dims),
            y_freq: lobes.y_lobe.frequency(dims),
            origin: (0.0, 0.0),
        }
    }

    pub fn with_origin(self, row: f64, col: f64) -> Self {
        CarrierReference { origin: (row, col), ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemodOptions {
    /// Hann taper inside the window instead of a hard edge.
    pub apodize: bool,
    #[serde(skip)]
    pub carrier_reference: Option<CarrierReference>,
}

fn apodize_window(field: &mut ComplexField, win: &SpectralWindow) {
    let (rows, cols) = field.dims();
    let (cr, cc) = field.center();
    let r = win.half_size as f64 + 1.0;
    let taper = |d: f64| 0.5 * (1.0 + (PI * d / r).cos());
    let r0 = cr.saturating_sub(win.half_size);
    let r1 = (cr + win.half_size + 1).min(rows);
    let c0 = cc.saturating_sub(win.half_size);
    let c1 = (cc + win.half_size + 1).min(cols);
    for row in r0..r1 {
        let wr = taper(row as f64 - cr as f64);
        for col in c0..c1 {
            let w = wr * taper(col as f64 - cc as f64);
            field.set(row, col, field.get(row, col) * w);
        }
    }
}

/// Demodulated complex lobe in the spatial domain.
fn demodulate_lobe(
    spectrum: &ComplexField,
    win: &SpectralWindow,
    apodize: bool,
    reference: Option<((f64, f64), (f64, f64))>,
) -> Result<ComplexField> {
    let mut lobe = recenter_lobe(spectrum, win)?;
    if apodize {
        apodize_window(&mut lobe, win);
    }
    let mut field = fft2_inverse(&lobe)?;
    if let Some(((fr, fc), (r0, c0))) = reference {
        let dims = spectrum.dims();
        let (br, bc) = win.frequency(dims);
        let (ur, uc) = (fr - br, fc - bc);
        let base = fr * r0 + fc * c0;
        let cols = dims.1;
        let col_terms: Vec<Complex64> =
            (0..cols).map(|c| Complex64::from_polar(1.0, -2.0 * PI * (uc * c as f64))).collect();
        for (r, row) in field.data_mut().chunks_mut(cols).enumerate() {
            let row_term = Complex64::from_polar(1.0, -2.0 * PI * (ur * r as f64 + base));
            for (z, ct) in row.iter_mut().zip(&col_terms) {
                *z *= row_term * ct;
            }
        }
    }
    Ok(field)
}

/// Wrapped phase differences from an already transformed hologram.
pub fn demodulate_spectrum(spectrum: &ComplexField, lobes: &LobeLocation, opts: &DemodOptions) -> Result<GradientPair> {
    let refs = opts.carrier_reference.map(|r| ((r.x_freq, r.origin), (r.y_freq, r.origin)));
    let (gx, gy) = rayon::join(
        || demodulate_lobe(spectrum, &lobes.x_lobe, opts.apodize, refs.map(|r| r.0)),
        || demodulate_lobe(spectrum, &lobes.y_lobe, opts.apodize, refs.map(|r| r.1)),
    );
    GradientPair::new(gx?.arg(), gy?.arg())
}

/// Extracts, recenters and inverse-transforms both lobes, returning their
/// pointwise arguments in `[-pi, pi)`.
pub fn demodulate_gradients(hologram: &RealImage, lobes: &LobeLocation) -> Result<GradientPair> {
    demodulate_gradients_with(hologram, lobes, &DemodOptions::default())
}

pub fn demodulate_gradients_with(hologram: &RealImage, lobes: &LobeLocation, opts: &DemodOptions) -> Result<GradientPair> {
    demodulate_spectrum(&fft2_forward(hologram)?, lobes, opts)
}

/// Magnitude of the inverse-transformed central lobe (same half-size as the gradient lobes).
pub fn extract_amplitude(hologram: &RealImage, lobes: &LobeLocation) -> Result<RealImage> {
    amplitude_from_spectrum(&fft2_forward(hologram)?, lobes)
}

pub fn amplitude_from_spectrum(spectrum: &ComplexField, lobes: &LobeLocation) -> Result<RealImage> {
    let (cr, cc) = spectrum.center();
    let win = SpectralWindow::new(cr, cc, lobes.x_lobe.half_size);
    Ok(fft2_inverse(&recenter_lobe(spectrum, &win)?)?.norm())
}
