//! Optical height, masked error measures, patch-line discontinuity and corpus tables.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::RealImage;
use crate::wsi::PatchLayout;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Units {
    #[default]
    #[serde(rename = "um")]
    Micrometres,
    #[serde(rename = "rad")]
    Radians,
}

impl Units {
    pub fn label(self) -> &'static str {
        match self {
            Units::Micrometres => "um",
            Units::Radians => "rad",
        }
    }
}

/// `h = phi * lambda / (2 pi)`, in the units of `wavelength_um`.
pub fn optical_height(phase: &RealImage, wavelength_um: f64) -> Result<RealImage> {
    if !(wavelength_um > 0.0 && wavelength_um.is_finite()) {
        return Err(Error::param("wavelength must be positive"));
    }
    phase.map(|p| p * wavelength_um / (2.0 * PI))
}

/// Binary mask; samples above zero are inside.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMask {
    mask: RealImage,
    pixel_count: usize,
}

impl CellMask {
    pub fn new(mask: &RealImage) -> Result<Self> {
        let mask = mask.map(|v| if v > 0.0 { 1.0 } else { 0.0 })?;
        let pixel_count = mask.data().iter().filter(|v| **v > 0.0).count();
        Ok(CellMask { mask, pixel_count })
    }

    pub fn pixel_count(&self) -> usize {
        self.pixel_count
    }

    pub fn image(&self) -> &RealImage {
        &self.mask
    }

    pub fn dims(&self) -> (usize, usize) {
        self.mask.dims()
    }

    #[inline]
    pub fn contains_index(&self, i: usize) -> bool {
        self.mask.data()[i] > 0.0
    }

    /// Removes every pixel with an outside pixel (or the image border) within `radius`.
    pub fn eroded(&self, radius: usize) -> Result<Self> {
        if radius == 0 {
            return Ok(self.clone());
        }
        let (rows, cols) = self.dims();
        let rad = radius as i64;
        let offsets: Vec<(i64, i64)> = (-rad..=rad)
            .flat_map(|dr| (-rad..=rad).map(move |dc| (dr, dc)))
            .filter(|(dr, dc)| dr * dr + dc * dc <= rad * rad)
            .collect();
        let out = RealImage::from_fn(rows, cols, |r, c| {
            if self.mask.get(r, c) == 0.0 {
                return 0.0;
            }
            let keep = offsets.iter().all(|&(dr, dc)| {
                let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                rr >= 0 && cc >= 0 && rr < rows as i64 && cc < cols as i64 && self.mask.get(rr as usize, cc as usize) > 0.0
            });
            if keep {
                1.0
            } else {
                0.0
            }
        })?;
        CellMask::new(&out)
    }

    fn check(&self, a: &RealImage, b: &RealImage) -> Result<()> {
        a.ensure_same_dims(b)?;
        if a.dims() != self.dims() {
            return Err(Error::param(format!("mask {:?} does not match images {:?}", self.dims(), a.dims())));
        }
        if self.pixel_count == 0 {
            return Err(Error::param("mask is empty"));
        }
        Ok(())
    }
}

/// `(1 / N_p) * sum_mask |p0 - pc|`.
pub fn masked_l1(p0: &RealImage, pc: &RealImage, mask: &CellMask) -> Result<f64> {
    mask.check(p0, pc)?;
    let s: f64 = (0..p0.data().len())
        .filter(|&i| mask.contains_index(i))
        .map(|i| (p0.data()[i] - pc.data()[i]).abs())
        .sum();
    Ok(s / mask.pixel_count as f64)
}

/// `(1 / N_p) * sum_mask |p0| - (1 / N_p) * sum_mask |pc|`.
pub fn masked_eps_mu(p0: &RealImage, pc: &RealImage, mask: &CellMask) -> Result<f64> {
    mask.check(p0, pc)?;
    let (mut a, mut b) = (0.0, 0.0);
    for i in (0..p0.data().len()).filter(|&i| mask.contains_index(i)) {
        a += p0.data()[i].abs();
        b += pc.data()[i].abs();
    }
    let n = mask.pixel_count as f64;
    Ok(a / n - b / n)
}

fn median_of(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Subtracts the median of the pixels outside `mask`; unchanged if there are none.
pub fn subtract_background_median(img: &RealImage, mask: &CellMask) -> Result<RealImage> {
    if img.dims() != mask.dims() {
        return Err(Error::param("mask does not match image"));
    }
    let bg: Vec<f64> = (0..img.data().len())
        .filter(|&i| !mask.contains_index(i))
        .map(|i| img.data()[i])
        .collect();
    match median_of(bg) {
        Some(m) => img.map(|v| v - m),
        None => Ok(img.clone()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub wavelength_um: f64,
    pub erosion_px: usize,
    pub units: Units,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { wavelength_um: crate::forward::DEFAULT_WAVELENGTH_UM, erosion_px: 2, units: Units::Micrometres }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub l1: f64,
    pub eps_mu: f64,
    pub n_pixels: usize,
    /// Candidate optical height range over the evaluated mask, micrometres.
    pub height_range: (f64, f64),
    pub units: Units,
}

/// Aligns both phase maps to their background medians (outside the full mask),
/// erodes the mask and computes L1 and eps_mu in the requested units.
pub fn evaluate(reference: &RealImage, candidate: &RealImage, mask: &RealImage, opts: &EvalOptions) -> Result<ErrorReport> {
    reference.ensure_same_dims(candidate)?;
    let full = CellMask::new(mask)?;
    if full.dims() != reference.dims() {
        return Err(Error::param("mask does not match images"));
    }
    let eroded = full.eroded(opts.erosion_px)?;
    if eroded.pixel_count() == 0 {
        return Err(Error::param(format!("mask is empty after {} px erosion", opts.erosion_px)));
    }
    let r = subtract_background_median(reference, &full)?;
    let c = subtract_background_median(candidate, &full)?;
    let heights = optical_height(&c, opts.wavelength_um)?;
    let (mut hmin, mut hmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in (0..heights.data().len()).filter(|&i| eroded.contains_index(i)) {
        hmin = hmin.min(heights.data()[i]);
        hmax = hmax.max(heights.data()[i]);
    }
    let (r, c) = match opts.units {
        Units::Radians => (r, c),
        Units::Micrometres => (optical_height(&r, opts.wavelength_um)?, heights),
    };
    Ok(ErrorReport {
        l1: masked_l1(&r, &c, &eroded)?,
        eps_mu: masked_eps_mu(&r, &c, &eroded)?,
        n_pixels: eroded.pixel_count(),
        height_range: (hmin, hmax),
        units: opts.units,
    })
}

/// Orientation of a patch line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LineAxis {
    /// A boundary between two tile rows (horizontal line at a row coordinate).
    Row,
    /// A boundary between two tile columns.
    Col,
}

/// Width in pixels of the averaged strips on either side of a line.
pub const STRIP_PX: usize = 3;
const BASELINE_OFFSETS: std::ops::RangeInclusive<usize> = 16..=48;
const BASELINE_CLEARANCE: usize = 16;
const RATIO_EPS: f64 = 1e-9;

/// `|mean(3 px after) - mean(3 px before)|` at every position along the line.
pub fn step_profile(phase: &RealImage, axis: LineAxis, position: usize) -> Result<Vec<f64>> {
    let (rows, cols) = phase.dims();
    let extent = match axis {
        LineAxis::Row => rows,
        LineAxis::Col => cols,
    };
    if position < STRIP_PX || position + STRIP_PX > extent {
        return Err(Error::param(format!(
            "{axis:?} line at {position} is outside the measurable range of a {rows}x{cols} image"
        )));
    }
    let w = STRIP_PX as f64;
    Ok(match axis {
        LineAxis::Col => (0..rows)
            .map(|r| {
                let row = phase.row(r);
                let before: f64 = row[position - STRIP_PX..position].iter().sum();
                let after: f64 = row[position..position + STRIP_PX].iter().sum();
                ((after - before) / w).abs()
            })
            .collect(),
        LineAxis::Row => (0..cols)
            .map(|c| {
                let before: f64 = (position - STRIP_PX..position).map(|r| phase.get(r, c)).sum();
                let after: f64 = (position..position + STRIP_PX).map(|r| phase.get(r, c)).sum();
                ((after - before) / w).abs()
            })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineStat {
    pub axis: LineAxis,
    pub position: usize,
    pub mean_step: f64,
    pub max_step: f64,
    /// Mean step over nearby interior lines.
    pub baseline: f64,
    /// `(mean_step + eps) / (baseline + eps)`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscontinuityReport {
    pub lines: Vec<LineStat>,
    /// Largest per-line ratio; 0 when the layout has no patch lines.
    pub max_ratio: f64,
}

fn line_mean(phase: &RealImage, axis: LineAxis, position: usize) -> Result<f64> {
    let p = step_profile(phase, axis, position)?;
    Ok(p.iter().sum::<f64>() / p.len() as f64)
}

/// Step statistics across every patch line, each compared with interior lines
/// 16 to 48 px away that keep 16 px clear of all patch lines.
pub fn patchline_discontinuity(phase: &RealImage, layout: &PatchLayout) -> Result<DiscontinuityReport> {
    if phase.dims() != layout.mosaic_dims() {
        return Err(Error::param(format!(
            "phase {:?} does not match layout {:?}",
            phase.dims(),
            layout.mosaic_dims()
        )));
    }
    let (rows, cols) = phase.dims();
    let mut lines = Vec::new();
    for (axis, positions, extent) in [
        (LineAxis::Row, &layout.patch_lines_r, rows),
        (LineAxis::Col, &layout.patch_lines_c, cols),
    ] {
        for &p in positions {
            let profile = step_profile(phase, axis, p)?;
            let mean_step = profile.iter().sum::<f64>() / profile.len() as f64;
            let max_step = profile.iter().copied().fold(0.0, f64::max);
            let candidates: Vec<usize> = BASELINE_OFFSETS
                .flat_map(|d| [p.checked_sub(d), Some(p + d)])
                .flatten()
                .filter(|&q| q >= STRIP_PX && q + STRIP_PX <= extent)
                .filter(|&q| positions.iter().all(|&l| q.abs_diff(l) >= BASELINE_CLEARANCE))
                .collect();
            if candidates.is_empty() {
                return Err(Error::param(format!(
                    "no interior baseline lines available around {axis:?} line {p}"
                )));
            }
            let baseline = candidates
                .iter()
                .map(|&q| line_mean(phase, axis, q))
                .sum::<Result<f64>>()?
                / candidates.len() as f64;
            lines.push(LineStat {
                axis,
                position: p,
                mean_step,
                max_step,
                baseline,
                ratio: (mean_step + RATIO_EPS) / (baseline + RATIO_EPS),
            });
        }
    }
    let max_ratio = lines.iter().map(|l| l.ratio).fold(0.0, f64::max);
    Ok(DiscontinuityReport { lines, max_ratio })
}

/// One evaluated case: reconstruction without and (optionally) with mirrored extension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRow {
    pub case_id: String,
    pub n_pixels: usize,
    pub l1: f64,
    pub eps_mu: f64,
    pub l1_mdi: Option<f64>,
    pub eps_mu_mdi: Option<f64>,
    pub height_min: f64,
    pub height_max: f64,
}

/// Inputs of one corpus case.
#[derive(Debug, Clone)]
pub struct CorpusCase {
    pub case_id: String,
    pub reference: RealImage,
    pub plain: RealImage,
    pub mdi: Option<RealImage>,
    pub mask: RealImage,
}

/// Evaluates cases in parallel; output order follows input order.
pub fn evaluate_corpus(cases: &[CorpusCase], opts: &EvalOptions) -> Result<Vec<CaseRow>> {
    cases
        .par_iter()
        .map(|case| {
            let plain = evaluate(&case.reference, &case.plain, &case.mask, opts)?;
            let mdi = case.mdi.as_ref().map(|m| evaluate(&case.reference, m, &case.mask, opts)).transpose()?;
            let range = mdi.map_or(plain.height_range, |m| m.height_range);
            Ok(CaseRow {
                case_id: case.case_id.clone(),
                n_pixels: plain.n_pixels,
                l1: plain.l1,
                eps_mu: plain.eps_mu,
                l1_mdi: mdi.map(|m| m.l1),
                eps_mu_mdi: mdi.map(|m| m.eps_mu),
                height_min: range.0,
                height_max: range.1,
            })
        })
        .collect()
}

/// Mean, Max, Min, population Var and Median of one column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: f64,
    pub max: f64,
    pub min: f64,
    pub var: f64,
    pub median: f64,
}

impl ColumnStats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        Some(ColumnStats {
            mean,
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            var: values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n,
            median: median_of(values.to_vec())?,
        })
    }

    fn get(&self, stat: &str) -> f64 {
        match stat {
            "Mean" => self.mean,
            "Max" => self.max,
            "Min" => self.min,
            "Var" => self.var,
            _ => self.median,
        }
    }
}

/// Summary rows over the corpus for `l1`, `eps_mu` and, when present, the MDI columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub rows: Vec<CaseRow>,
    pub l1: ColumnStats,
    pub eps_mu: ColumnStats,
    pub l1_mdi: Option<ColumnStats>,
    pub eps_mu_mdi: Option<ColumnStats>,
    pub units: Units,
}

pub const STAT_ROWS: [&str; 5] = ["Mean", "Max", "Min", "Var", "Median"];
pub const CSV_HEADER: &str = "case_id,n_pixels,l1,eps_mu,l1_mdi,eps_mu_mdi,height_min,height_max";

pub fn corpus_report(rows: Vec<CaseRow>, units: Units) -> Result<CorpusReport> {
    if rows.is_empty() {
        return Err(Error::param("corpus is empty"));
    }
    let col = |f: &dyn Fn(&CaseRow) -> Option<f64>| -> Option<ColumnStats> {
        let v: Option<Vec<f64>> = rows.iter().map(f).collect();
        v.and_then(|v| ColumnStats::of(&v))
    };
    let l1 = col(&|r| Some(r.l1)).expect("nonempty corpus");
    let eps_mu = col(&|r| Some(r.eps_mu)).expect("nonempty corpus");
    let l1_mdi = col(&|r| r.l1_mdi);
    let eps_mu_mdi = col(&|r| r.eps_mu_mdi);
    Ok(CorpusReport { rows, l1, eps_mu, l1_mdi, eps_mu_mdi, units })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

impl CorpusReport {
    /// Per-case rows followed by the summary rows, with `case_id` set to the statistic name.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{:e},{:e},{},{},{:e},{:e}",
                r.case_id,
                r.n_pixels,
                r.l1,
                r.eps_mu,
                opt(r.l1_mdi),
                opt(r.eps_mu_mdi),
                r.height_min,
                r.height_max
            );
        }
        if self.rows.len() > 1 {
            for stat in STAT_ROWS {
                let _ = writeln!(
                    out,
                    "{stat},,{:e},{:e},{},{},,",
                    self.l1.get(stat),
                    self.eps_mu.get(stat),
                    opt(self.l1_mdi.map(|s| s.get(stat))),
                    opt(self.eps_mu_mdi.map(|s| s.get(stat)))
                );
            }
        }
        out
    }

    /// Fixed-width table of the summary rows.
    pub fn to_text(&self) -> String {
        let u = self.units.label();
        let mut out = format!(
            "{:<8} {:>14} {:>14} {:>14} {:>14}\n",
            "",
            format!("L1 [{u}]"),
            format!("eps_mu [{u}]"),
            format!("L1 MDI [{u}]"),
            format!("eps_mu MDI [{u}]")
        );
        let cell = |s: Option<ColumnStats>, stat: &str| s.map_or("-".to_string(), |s| format!("{:.5}", s.get(stat)));
        for stat in STAT_ROWS {
            let _ = writeln!(
                out,
                "{stat:<8} {:>14} {:>14} {:>14} {:>14}",
                cell(Some(self.l1), stat),
                cell(Some(self.eps_mu), stat),
                cell(self.l1_mdi, stat),
                cell(self.eps_mu_mdi, stat)
            );
        }
        out
    }
}
