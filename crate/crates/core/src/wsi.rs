//! Patched whole-slide holograms and the three mosaic reconstruction strategies.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationFrame;
use crate::error::{Error, Result};
use crate::field::{RealImage, Rect};
use crate::integrate::{IntegrationConfig, IntegrationVariant, PhaseMap};
use crate::pipeline::{reconstruct, Geometry, PipelineConfig};

/// Grid geometry of an abutting-tile mosaic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchLayout {
    pub tile_rows: usize,
    pub tile_cols: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Global row of the first pixel of every tile row after the first.
    pub patch_lines_r: Vec<usize>,
    pub patch_lines_c: Vec<usize>,
}

impl PatchLayout {
    pub fn new(tile_rows: usize, tile_cols: usize, grid_rows: usize, grid_cols: usize) -> Result<Self> {
        if tile_rows == 0 || tile_cols == 0 || grid_rows == 0 || grid_cols == 0 {
            return Err(Error::param("tile and grid dimensions must be positive"));
        }
        tile_rows
            .checked_mul(grid_rows)
            .zip(tile_cols.checked_mul(grid_cols))
            .ok_or_else(|| Error::size("mosaic dimensions overflow"))?;
        Ok(PatchLayout {
            tile_rows,
            tile_cols,
            grid_rows,
            grid_cols,
            patch_lines_r: (1..grid_rows).map(|i| i * tile_rows).collect(),
            patch_lines_c: (1..grid_cols).map(|j| j * tile_cols).collect(),
        })
    }

    pub fn mosaic_dims(&self) -> (usize, usize) {
        (self.tile_rows * self.grid_rows, self.tile_cols * self.grid_cols)
    }

    pub fn tile_rect(&self, i: usize, j: usize) -> Rect {
        Rect::new(i * self.tile_rows, j * self.tile_cols, self.tile_rows, self.tile_cols)
    }
}

/// A patched hologram and its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct WsiMosaic {
    pub hologram: RealImage,
    pub layout: PatchLayout,
}

impl WsiMosaic {
    pub fn new(hologram: RealImage, layout: PatchLayout) -> Result<Self> {
        if hologram.dims() != layout.mosaic_dims() {
            return Err(Error::param(format!(
                "mosaic {:?} does not match layout {:?}",
                hologram.dims(),
                layout.mosaic_dims()
            )));
        }
        Ok(WsiMosaic { hologram, layout })
    }

    /// Splits the mosaic back into its tiles.
    pub fn tiles(&self) -> Result<Vec<Vec<RealImage>>> {
        (0..self.layout.grid_rows)
            .map(|i| (0..self.layout.grid_cols).map(|j| self.hologram.crop(self.layout.tile_rect(i, j))).collect())
            .collect()
    }
}

fn grid_shape<T>(tiles: &[Vec<T>], dims: impl Fn(&T) -> (usize, usize)) -> Result<PatchLayout> {
    let first = tiles
        .first()
        .and_then(|row| row.first())
        .ok_or_else(|| Error::param("tile grid is empty"))?;
    let (tr, tc) = dims(first);
    let grid_cols = tiles[0].len();
    for (i, row) in tiles.iter().enumerate() {
        if row.len() != grid_cols {
            return Err(Error::param(format!(
                "tile row {i} has {} tiles, expected {grid_cols}",
                row.len()
            )));
        }
        for (j, t) in row.iter().enumerate() {
            if dims(t) != (tr, tc) {
                return Err(Error::param(format!(
                    "tile ({i}, {j}) is {:?}, expected {tr}x{tc}",
                    dims(t)
                )));
            }
        }
    }
    PatchLayout::new(tr, tc, tiles.len(), grid_cols)
}

/// Places equally sized tiles in row-major grid order without overlap.
pub fn assemble_mosaic(tiles: &[Vec<RealImage>]) -> Result<WsiMosaic> {
    let layout = grid_shape(tiles, RealImage::dims)?;
    let (rows, cols) = layout.mosaic_dims();
    let mut hologram = RealImage::zeros(rows, cols)?;
    for (i, row) in tiles.iter().enumerate() {
        for (j, t) in row.iter().enumerate() {
            hologram.paste(t, i * layout.tile_rows, j * layout.tile_cols)?;
        }
    }
    WsiMosaic::new(hologram, layout)
}

/// Phase and amplitude of a whole mosaic.
#[derive(Debug, Clone)]
pub struct WsiReconstruction {
    pub phase: PhaseMap,
    pub amplitude: RealImage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WsiStrategy {
    /// Reconstruct every tile separately, then patch the phase tiles.
    PerTile,
    /// Reconstruct the whole mosaic with mirrored-extension integration.
    WholeMdi,
    /// Reconstruct the whole mosaic with frequency-shifted integration.
    WholeShifted,
}

fn annotate(err: Error, i: usize, j: usize) -> Error {
    let tag = |m: String| format!("tile ({i}, {j}): {m}");
    match err {
        Error::Size(m) => Error::Size(tag(m)),
        Error::Parameter(m) => Error::Parameter(tag(m)),
        Error::LobeNotFound(m) => Error::LobeNotFound(tag(m)),
        Error::Internal(m) => Error::Internal(tag(m)),
        other => other,
    }
}

/// Strategy 1: independent per-tile reconstructions, each mean-free, patched in grid order.
pub fn reconstruct_strategy1(
    tiles: &[Vec<RealImage>],
    cal: Option<&CalibrationFrame>,
    cfg: &PipelineConfig,
) -> Result<WsiReconstruction> {
    let layout = grid_shape(tiles, RealImage::dims)?;
    let jobs: Vec<(usize, usize)> = (0..layout.grid_rows)
        .flat_map(|i| (0..layout.grid_cols).map(move |j| (i, j)))
        .collect();
    let results: Vec<_> = jobs
        .par_iter()
        .map(|&(i, j)| reconstruct(&tiles[i][j], cfg, cal, Geometry::Full).map_err(|e| annotate(e, i, j)))
        .collect();
    let (rows, cols) = layout.mosaic_dims();
    let mut phase = RealImage::zeros(rows, cols)?;
    let mut amplitude = RealImage::zeros(rows, cols)?;
    for (&(i, j), res) in jobs.iter().zip(results) {
        let rec = res?;
        let rect = layout.tile_rect(i, j);
        phase.paste(&rec.phase.phase, rect.row, rect.col)?;
        amplitude.paste(&rec.amplitude, rect.row, rect.col)?;
    }
    Ok(WsiReconstruction { phase: PhaseMap { phase, config: cfg.integration }, amplitude })
}

fn whole(mosaic: &WsiMosaic, cal: Option<&CalibrationFrame>, cfg: &PipelineConfig) -> Result<WsiReconstruction> {
    let rec = reconstruct(&mosaic.hologram, cfg, cal, Geometry::Mosaic(&mosaic.layout))?;
    Ok(WsiReconstruction { phase: rec.phase, amplitude: rec.amplitude })
}

/// Strategy 2: the whole mosaic at once with mirrored-extension integration.
pub fn reconstruct_strategy2(mosaic: &WsiMosaic, cal: Option<&CalibrationFrame>, cfg: &PipelineConfig) -> Result<WsiReconstruction> {
    let integration = IntegrationConfig { variant: IntegrationVariant::Mdi, ..cfg.integration };
    whole(mosaic, cal, &cfg.with_integration(integration))
}

/// Strategy 3: the whole mosaic at once with frequency-shifted integration.
pub fn reconstruct_strategy3(mosaic: &WsiMosaic, cal: Option<&CalibrationFrame>, cfg: &PipelineConfig) -> Result<WsiReconstruction> {
    let integration = IntegrationConfig { variant: IntegrationVariant::Shifted, ..cfg.integration };
    whole(mosaic, cal, &cfg.with_integration(integration))
}

pub fn reconstruct_mosaic(
    strategy: WsiStrategy,
    mosaic: &WsiMosaic,
    cal: Option<&CalibrationFrame>,
    cfg: &PipelineConfig,
) -> Result<WsiReconstruction> {
    match strategy {
        WsiStrategy::PerTile => reconstruct_strategy1(&mosaic.tiles()?, cal, cfg),
        WsiStrategy::WholeMdi => reconstruct_strategy2(mosaic, cal, cfg),
        WsiStrategy::WholeShifted => reconstruct_strategy3(mosaic, cal, cfg),
    }
}
