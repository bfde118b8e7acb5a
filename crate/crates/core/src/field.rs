//! 2D sample containers and centered, unitary Fourier transforms.
//!
//! Spectra are always stored with DC at `(rows / 2, cols / 2)` (integer
//! division). Position `p` on an axis of length `n` holds frequency bin
//! `p - n / 2`.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn checked_len(rows: usize, cols: usize) -> Result<usize> {
    if rows == 0 || cols == 0 {
        return Err(Error::size(format!("dimensions must be positive, got {rows}x{cols}")));
    }
    rows.checked_mul(cols)
        .filter(|n| *n <= isize::MAX as usize / 16)
        .ok_or_else(|| Error::size(format!("dimensions {rows}x{cols} overflow")))
}

/// Axis-aligned pixel rectangle, `rows x cols` starting at `(row, col)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub row: usize,
    pub col: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Rect {
    pub fn new(row: usize, col: usize, rows: usize, cols: usize) -> Self {
        Rect { row, col, rows, cols }
    }

    /// Rectangle spanning `rows_range x cols_range` (half-open).
    pub fn from_ranges(rows_range: std::ops::Range<usize>, cols_range: std::ops::Range<usize>) -> Self {
        Rect {
            row: rows_range.start,
            col: cols_range.start,
            rows: rows_range.len(),
            cols: cols_range.len(),
        }
    }

    pub fn fits_within(&self, rows: usize, cols: usize) -> bool {
        self.rows > 0
            && self.cols > 0
            && self.row.checked_add(self.rows).is_some_and(|e| e <= rows)
            && self.col.checked_add(self.cols).is_some_and(|e| e <= cols)
    }
}

/// Real-valued image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RealImage {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealImage {
    /// Wraps `data`; fails on length mismatch or non-finite samples.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        let len = checked_len(rows, cols)?;
        if data.len() != len {
            return Err(Error::size(format!(
                "data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::param(format!(
                "non-finite sample at ({}, {})",
                i / cols,
                i % cols
            )));
        }
        Ok(RealImage { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Result<Self> {
        let len = checked_len(rows, cols)?;
        if !value.is_finite() {
            return Err(Error::param("fill value must be finite"));
        }
        Ok(RealImage { rows, cols, data: vec![value; len] })
    }

    /// Builds an image by evaluating `f(row, col)`.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let len = checked_len(rows, cols)?;
        let mut data = Vec::with_capacity(len);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self::new(rows, cols, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    /// Pointwise map. Fails if `f` produces a non-finite value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise combination of two images of equal dimensions.
    pub fn zip_map(&self, other: &RealImage, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.ensure_same_dims(other)?;
        Self::new(
            self.rows,
            self.cols,
            self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    pub fn scale(&self, factor: f64) -> Result<Self> {
        self.map(|v| v * factor)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Copy with the mean removed.
    pub fn mean_free(&self) -> Self {
        let m = self.mean();
        RealImage {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v - m).collect(),
        }
    }

    pub fn crop(&self, rect: Rect) -> Result<Self> {
        if !rect.fits_within(self.rows, self.cols) {
            return Err(Error::param(format!(
                "rectangle {rect:?} exceeds image {}x{}",
                self.rows, self.cols
            )));
        }
        let mut data = Vec::with_capacity(rect.rows * rect.cols);
        for r in rect.row..rect.row + rect.rows {
            let start = r * self.cols + rect.col;
            data.extend_from_slice(&self.data[start..start + rect.cols]);
        }
        Ok(RealImage { rows: rect.rows, cols: rect.cols, data })
    }

    /// Writes `src` into this image with its top-left corner at `(row, col)`.
    pub fn paste(&mut self, src: &RealImage, row: usize, col: usize) -> Result<()> {
        let rect = Rect::new(row, col, src.rows, src.cols);
        if !rect.fits_within(self.rows, self.cols) {
            return Err(Error::param(format!(
                "cannot paste {}x{} at ({row}, {col}) into {}x{}",
                src.rows, src.cols, self.rows, self.cols
            )));
        }
        for r in 0..src.rows {
            let dst = (row + r) * self.cols + col;
            self.data[dst..dst + src.cols].copy_from_slice(src.row(r));
        }
        Ok(())
    }

    pub(crate) fn ensure_same_dims(&self, other: &RealImage) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::param(format!(
                "dimension mismatch: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    pub(crate) fn from_parts_unchecked(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(rows * cols, data.len());
        RealImage { rows, cols, data }
    }

}

/// Complex-valued 2D field, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        let len = checked_len(rows, cols)?;
        if data.len() != len {
            return Err(Error::size(format!(
                "data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::param("non-finite complex sample"));
        }
        Ok(ComplexField { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        let len = checked_len(rows, cols)?;
        Ok(ComplexField { rows, cols, data: vec![Complex64::new(0.0, 0.0); len] })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Result<Self> {
        let len = checked_len(rows, cols)?;
        let mut data = Vec::with_capacity(len);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self::new(rows, cols, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: Complex64) {
        self.data[row * self.cols + col] = value;
    }

    /// DC position of a centered spectrum with these dimensions.
    pub fn center(&self) -> (usize, usize) {
        (self.rows / 2, self.cols / 2)
    }

    pub fn re(&self) -> RealImage {
        RealImage::from_parts_unchecked(self.rows, self.cols, self.data.iter().map(|z| z.re).collect())
    }

    pub fn norm(&self) -> RealImage {
        RealImage::from_parts_unchecked(self.rows, self.cols, self.data.iter().map(|z| z.norm()).collect())
    }

    /// Pointwise argument wrapped into `[-pi, pi)`.
    pub fn arg(&self) -> RealImage {
        RealImage::from_parts_unchecked(
            self.rows,
            self.cols,
            self.data.iter().map(|z| wrap_phase(z.arg())).collect(),
        )
    }

    /// Sum of squared magnitudes.
    pub fn power(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub(crate) fn from_parts_unchecked(rows: usize, cols: usize, data: Vec<Complex64>) -> Self {
        debug_assert_eq!(rows * cols, data.len());
        ComplexField { rows, cols, data }
    }

    pub(crate) fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }
}

impl From<&RealImage> for ComplexField {
    fn from(img: &RealImage) -> Self {
        ComplexField {
            rows: img.rows,
            cols: img.cols,
            data: img.data.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }
}

impl From<RealImage> for ComplexField {
    fn from(img: RealImage) -> Self {
        ComplexField::from(&img)
    }
}

impl From<&ComplexField> for ComplexField {
    fn from(f: &ComplexField) -> Self {
        f.clone()
    }
}

/// Wraps an angle into `[-pi, pi)`.
#[inline]
pub fn wrap_phase(x: f64) -> f64 {
    let w = (x + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid can round up to exactly 2*pi for inputs just below a multiple
    if w >= PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Square window of half-size `half_size` centered on a spectrum sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpectralWindow {
    pub center_row: usize,
    pub center_col: usize,
    pub half_size: usize,
}

impl SpectralWindow {
    pub fn new(center_row: usize, center_col: usize, half_size: usize) -> Self {
        SpectralWindow { center_row, center_col, half_size }
    }

    /// Side length `2R + 1`.
    pub fn side(&self) -> usize {
        2 * self.half_size + 1
    }

    /// Offset of the center from DC, in frequency bins, for a spectrum of `dims`.
    pub fn offset_from_dc(&self, dims: (usize, usize)) -> (i64, i64) {
        (
            self.center_row as i64 - (dims.0 / 2) as i64,
            self.center_col as i64 - (dims.1 / 2) as i64,
        )
    }

    /// Center frequency in cycles/pixel for a spectrum of `dims`.
    pub fn frequency(&self, dims: (usize, usize)) -> (f64, f64) {
        let (dr, dc) = self.offset_from_dc(dims);
        (dr as f64 / dims.0 as f64, dc as f64 / dims.1 as f64)
    }

    /// Window intersected with the field bounds, as half-open row and column ranges.
    fn clamped(&self, rows: usize, cols: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let r0 = self.center_row.saturating_sub(self.half_size);
        let r1 = (self.center_row + self.half_size + 1).min(rows);
        let c0 = self.center_col.saturating_sub(self.half_size);
        let c1 = (self.center_col + self.half_size + 1).min(cols);
        (r0..r1, c0..c1)
    }

    fn validate(&self, rows: usize, cols: usize) -> Result<()> {
        if self.half_size == 0 {
            return Err(Error::param("window half-size must be at least 1"));
        }
        if self.center_row >= rows || self.center_col >= cols {
            return Err(Error::param(format!(
                "window center ({}, {}) outside {rows}x{cols} field",
                self.center_row, self.center_col
            )));
        }
        Ok(())
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

/// In-place unnormalized FFT of every length-`cols` row of `data`.
fn fft_rows(data: &mut [Complex64], cols: usize, inverse: bool) {
    if cols == 1 {
        return;
    }
    let fft = plan(cols, inverse);
    let scratch_len = fft.get_inplace_scratch_len();
    // Batches of rows keep per-task overhead small while staying parallel.
    let batch = (1 << 16) / cols.max(1) + 1;
    data.par_chunks_mut(cols * batch).for_each_init(
        || vec![Complex64::new(0.0, 0.0); scratch_len],
        |scratch, chunk| fft.process_with_scratch(chunk, scratch),
    );
}

fn transpose(src: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    const BLOCK: usize = 32;
    let mut dst = vec![Complex64::new(0.0, 0.0); src.len()];
    for rb in (0..rows).step_by(BLOCK) {
        for cb in (0..cols).step_by(BLOCK) {
            for r in rb..(rb + BLOCK).min(rows) {
                for c in cb..(cb + BLOCK).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
    dst
}

/// Unnormalized 2D FFT in natural (uncentered) order.
pub(crate) fn fft2_raw(data: Vec<Complex64>, rows: usize, cols: usize, inverse: bool) -> Vec<Complex64> {
    let mut data = data;
    fft_rows(&mut data, cols, inverse);
    if rows == 1 {
        return data;
    }
    let mut t = transpose(&data, rows, cols);
    drop(data);
    fft_rows(&mut t, rows, inverse);
    transpose(&t, cols, rows)
}

/// Moves DC from index 0 to `n / 2` on both axes.
pub(crate) fn fftshift(data: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let (hr, hc) = (rows / 2, cols / 2);
    let mut out = vec![Complex64::new(0.0, 0.0); data.len()];
    for r in 0..rows {
        let dr = (r + hr) % rows;
        for c in 0..cols {
            out[dr * cols + (c + hc) % cols] = data[r * cols + c];
        }
    }
    out
}

/// Inverse of [`fftshift`].
pub(crate) fn ifftshift(data: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let (hr, hc) = (rows / 2, cols / 2);
    let mut out = vec![Complex64::new(0.0, 0.0); data.len()];
    for r in 0..rows {
        let sr = (r + hr) % rows;
        for c in 0..cols {
            out[r * cols + c] = data[sr * cols + (c + hc) % cols];
        }
    }
    out
}

/// Centered, unitary forward 2D DFT.
pub fn fft2_forward<T: Into<ComplexField>>(input: T) -> Result<ComplexField> {
    let field: ComplexField = input.into();
    let (rows, cols) = field.dims();
    checked_len(rows, cols)?;
    let scale = 1.0 / ((rows * cols) as f64).sqrt();
    let mut spec = fftshift(&fft2_raw(field.data, rows, cols, false), rows, cols);
    spec.iter_mut().for_each(|z| *z *= scale);
    Ok(ComplexField::from_parts_unchecked(rows, cols, spec))
}

/// Exact inverse of [`fft2_forward`].
pub fn fft2_inverse(field: &ComplexField) -> Result<ComplexField> {
    let (rows, cols) = field.dims();
    checked_len(rows, cols)?;
    let scale = 1.0 / ((rows * cols) as f64).sqrt();
    let mut out = fft2_raw(ifftshift(&field.data, rows, cols), rows, cols, true);
    out.iter_mut().for_each(|z| *z *= scale);
    Ok(ComplexField::from_parts_unchecked(rows, cols, out))
}

/// Copies the `(2R+1) x (2R+1)` region under `win`; samples outside the field are zero.
pub fn extract_window(field: &ComplexField, win: &SpectralWindow) -> Result<ComplexField> {
    win.validate(field.rows, field.cols)?;
    let side = win.side();
    let mut out = ComplexField::zeros(side, side)?;
    let (rr, cr) = win.clamped(field.rows, field.cols);
    let top = win.center_row as i64 - win.half_size as i64;
    let left = win.center_col as i64 - win.half_size as i64;
    for r in rr {
        let orow = (r as i64 - top) as usize;
        for c in cr.clone() {
            let ocol = (c as i64 - left) as usize;
            out.set(orow, ocol, field.get(r, c));
        }
    }
    Ok(out)
}

/// Full-size field holding only the windowed lobe, translated so the window
/// center lands on DC. Content translated past the field edge is dropped.
pub fn recenter_lobe(field: &ComplexField, win: &SpectralWindow) -> Result<ComplexField> {
    win.validate(field.rows, field.cols)?;
    let (rows, cols) = field.dims();
    let (dc_r, dc_c) = field.center();
    let mut out = ComplexField::zeros(rows, cols)?;
    let (rr, cr) = win.clamped(rows, cols);
    for r in rr {
        let tr = r as i64 - win.center_row as i64 + dc_r as i64;
        if tr < 0 || tr >= rows as i64 {
            continue;
        }
        for c in cr.clone() {
            let tc = c as i64 - win.center_col as i64 + dc_c as i64;
            if tc < 0 || tc >= cols as i64 {
                continue;
            }
            out.set(tr as usize, tc as usize, field.get(r, c));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(rows: usize, cols: usize, seed: u64) -> ComplexField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ComplexField::from_fn(rows, cols, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .unwrap()
    }

    fn random_image(rows: usize, cols: usize, seed: u64) -> RealImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RealImage::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0)).unwrap()
    }

    fn rms_diff(a: &ComplexField, b: &ComplexField) -> f64 {
        let n = a.data().len() as f64;
        (a.data().iter().zip(b.data()).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>() / n).sqrt()
    }

    // Direct O(N^2 M^2) evaluation of the centered unitary DFT.
    fn naive_centered_dft(f: &ComplexField) -> ComplexField {
        let (rows, cols) = f.dims();
        let scale = 1.0 / ((rows * cols) as f64).sqrt();
        ComplexField::from_fn(rows, cols, |pr, pc| {
            let kr = pr as f64 - (rows / 2) as f64;
            let kc = pc as f64 - (cols / 2) as f64;
            let mut acc = Complex64::new(0.0, 0.0);
            for r in 0..rows {
                for c in 0..cols {
                    let ang = -2.0 * PI * (kr * r as f64 / rows as f64 + kc * c as f64 / cols as f64);
                    acc += f.get(r, c) * Complex64::from_polar(1.0, ang);
                }
            }
            acc * scale
        })
        .unwrap()
    }

    #[test]
    fn matches_direct_dft_on_odd_and_even_sizes() {
        for (rows, cols) in [(5, 7), (6, 4), (9, 8), (1, 6), (7, 1)] {
            let f = random_field(rows, cols, (rows * 31 + cols) as u64);
            let fast = fft2_forward(&f).unwrap();
            let slow = naive_centered_dft(&f);
            assert!(rms_diff(&fast, &slow) < 1e-12, "{rows}x{cols}");
        }
    }

    #[test]
    fn constant_image_has_single_dc_sample() {
        let n = 16;
        let c = 2.5;
        let spec = fft2_forward(RealImage::filled(n, n, c).unwrap()).unwrap();
        let (cr, cc) = spec.center();
        assert!((spec.get(cr, cc) - Complex64::new(c * n as f64, 0.0)).norm() < 1e-12);
        let others: f64 = spec
            .data()
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != cr * n + cc)
            .map(|(_, z)| z.norm())
            .fold(0.0, f64::max);
        assert!(others < 1e-12);
    }

    #[test]
    fn delta_at_origin_has_flat_spectrum() {
        let mut img = RealImage::zeros(12, 10).unwrap();
        img.set(0, 0, 1.0);
        let spec = fft2_forward(&img).unwrap();
        let expected = 1.0 / (120f64).sqrt();
        for z in spec.data() {
            assert!((z.norm() - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn dc_only_spectrum_inverts_to_constant() {
        let n = 8;
        let mut spec = ComplexField::zeros(n, n).unwrap();
        spec.set(n / 2, n / 2, Complex64::new(3.0 * n as f64, 0.0));
        let img = fft2_inverse(&spec).unwrap();
        for z in img.data() {
            assert!((z - Complex64::new(3.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_field_inverts_to_zero() {
        let z = ComplexField::zeros(9, 4).unwrap();
        assert!(fft2_inverse(&z).unwrap().data().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn round_trips() {
        let img = random_image(64, 64, 1);
        let back = fft2_inverse(&fft2_forward(&img).unwrap()).unwrap();
        assert!(rms_diff(&back, &ComplexField::from(&img)) < 1e-10);

        let f = random_field(32, 48, 2);
        let back = fft2_forward(fft2_inverse(&f).unwrap()).unwrap();
        assert!(rms_diff(&back, &f) < 1e-10);
    }

    #[test]
    fn parseval_holds_for_odd_sizes() {
        for (i, (rows, cols)) in [(16, 16), (64, 48), (257, 129)].into_iter().enumerate() {
            let img = random_image(rows, cols, 10 + i as u64);
            let spatial: f64 = img.data().iter().map(|v| v * v).sum();
            let spectral = fft2_forward(&img).unwrap().power();
            assert!(((spatial - spectral) / spatial).abs() < 1e-9);
        }
    }

    #[test]
    fn forward_is_linear() {
        let x = random_field(20, 30, 3);
        let y = random_field(20, 30, 4);
        let (a, b) = (Complex64::new(0.7, -1.2), Complex64::new(-2.0, 0.3));
        let combo = ComplexField::from_fn(20, 30, |r, c| a * x.get(r, c) + b * y.get(r, c)).unwrap();
        let fx = fft2_forward(&x).unwrap();
        let fy = fft2_forward(&y).unwrap();
        let expected = ComplexField::from_fn(20, 30, |r, c| a * fx.get(r, c) + b * fy.get(r, c)).unwrap();
        assert!(rms_diff(&fft2_forward(&combo).unwrap(), &expected) < 1e-10);
    }

    #[test]
    fn rejects_zero_dimensions() {
        assert!(matches!(RealImage::zeros(0, 3), Err(Error::Size(_))));
        assert!(matches!(ComplexField::zeros(2, 0), Err(Error::Size(_))));
        assert!(matches!(RealImage::new(2, 2, vec![0.0; 3]), Err(Error::Size(_))));
        assert!(matches!(RealImage::new(1, 2, vec![0.0, f64::NAN]), Err(Error::Parameter(_))));
    }

    #[test]
    fn window_retains_dc_of_dc_only_spectrum() {
        let spec = fft2_forward(RealImage::filled(16, 16, 1.0).unwrap()).unwrap();
        let win = SpectralWindow::new(8, 8, 2);
        let w = extract_window(&spec, &win).unwrap();
        assert_eq!(w.dims(), (5, 5));
        assert!((w.get(2, 2).re - 16.0).abs() < 1e-12);
    }

    #[test]
    fn window_away_from_lone_sample_is_empty() {
        let mut f = ComplexField::zeros(32, 32).unwrap();
        f.set(16, 16, Complex64::new(1.0, 1.0));
        let w = extract_window(&f, &SpectralWindow::new(4, 4, 3)).unwrap();
        assert!(w.data().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn corner_window_zero_fills_out_of_bounds() {
        let f = ComplexField::from_fn(6, 7, |r, c| Complex64::new(r as f64, c as f64)).unwrap();
        let win = SpectralWindow::new(1, 5, 3);
        let w = extract_window(&f, &win).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                let (sr, sc) = (1 + i as i64 - 3, 5 + j as i64 - 3);
                let expected = if (0..6).contains(&sr) && (0..7).contains(&sc) {
                    Complex64::new(sr as f64, sc as f64)
                } else {
                    Complex64::new(0.0, 0.0)
                };
                assert_eq!(w.get(i, j), expected, "({i}, {j})");
            }
        }
    }

    #[test]
    fn zero_half_size_is_rejected() {
        let f = ComplexField::zeros(8, 8).unwrap();
        assert!(matches!(extract_window(&f, &SpectralWindow::new(4, 4, 0)), Err(Error::Parameter(_))));
        assert!(matches!(recenter_lobe(&f, &SpectralWindow::new(4, 4, 0)), Err(Error::Parameter(_))));
    }

    #[test]
    fn recenter_translates_lone_sample_to_dc() {
        let (rows, cols) = (33, 40);
        let mut f = ComplexField::zeros(rows, cols).unwrap();
        let v = Complex64::new(0.5, -2.0);
        f.set(rows / 2 + 5, cols / 2, v);
        let out = recenter_lobe(&f, &SpectralWindow::new(rows / 2 + 5, cols / 2, 3)).unwrap();
        assert_eq!(out.get(rows / 2, cols / 2), v);
        assert_eq!(out.data().iter().filter(|z| z.norm() > 0.0).count(), 1);
    }

    #[test]
    fn recenter_of_zero_is_zero() {
        let f = ComplexField::zeros(16, 16).unwrap();
        let out = recenter_lobe(&f, &SpectralWindow::new(3, 12, 2)).unwrap();
        assert!(out.data().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn window_output_ignores_samples_outside() {
        let mut f = random_field(24, 24, 7);
        let win = SpectralWindow::new(10, 14, 4);
        let before = extract_window(&f, &win).unwrap();
        for r in 0..24usize {
            for c in 0..24usize {
                if r.abs_diff(10) > 4 || c.abs_diff(14) > 4 {
                    f.set(r, c, Complex64::new(99.0, -99.0));
                }
            }
        }
        assert_eq!(extract_window(&f, &win).unwrap(), before);
    }

    #[test]
    fn center_convention_consistent_for_odd_dims() {
        // A pure complex exponential at bin (+2, -3) lands at center + (2, -3).
        let (rows, cols) = (15, 9);
        let f = ComplexField::from_fn(rows, cols, |r, c| {
            Complex64::from_polar(1.0, 2.0 * PI * (2.0 * r as f64 / rows as f64 - 3.0 * c as f64 / cols as f64))
        })
        .unwrap();
        let spec = fft2_forward(&f).unwrap();
        let (cr, cc) = spec.center();
        let peak = spec
            .data()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .unwrap()
            .0;
        assert_eq!((peak / cols, peak % cols), (cr + 2, cc - 3));
        let back = recenter_lobe(&spec, &SpectralWindow::new(cr + 2, cc - 3, 2)).unwrap();
        let flat = fft2_inverse(&back).unwrap();
        let v0 = flat.get(0, 0);
        assert!(flat.data().iter().all(|z| (z - v0).norm() < 1e-12));
    }

    #[test]
    fn wrap_phase_range() {
        for x in [-10.0, -PI, -PI + 1e-12, 0.0, PI - 1e-12, PI, 3.0 * PI, 7.5] {
            let w = wrap_phase(x);
            assert!((-PI..PI).contains(&w), "{x} -> {w}");
            assert!(((x - w) / (2.0 * PI)).fract().abs() < 1e-9 || ((x - w) / (2.0 * PI)).fract().abs() > 1.0 - 1e-9);
        }
    }
}
