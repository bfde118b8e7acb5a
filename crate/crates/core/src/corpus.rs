//! Seeded synthetic scenes: single cells, cutout frames and straddling mosaics.

use std::f64::consts::PI;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::field::{RealImage, Rect};
use crate::forward::{cell_mask, make_cell_phantom, synthesize_hologram, CellSpec, OpticalSetup, Phantom, PhaseWave};
use crate::wsi::{assemble_mosaic, PatchLayout, WsiMosaic};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A scene with its ground truth.
#[derive(Debug, Clone)]
pub struct Scene {
    pub phantom: Phantom,
    pub cells: Vec<CellSpec>,
    pub hologram: RealImage,
}

/// One cell fully inside a `size x size` frame with a 16 px clearance.
#[derive(Debug, Clone)]
pub struct SingleCellParams {
    pub size: usize,
    pub radius: Range<f64>,
    pub height_um: Range<f64>,
}

impl Default for SingleCellParams {
    fn default() -> Self {
        SingleCellParams { size: 512, radius: 60.0..120.0, height_um: 0.05..0.65 }
    }
}

pub fn single_cell_scene(seed: u64, params: &SingleCellParams, setup: &OpticalSetup) -> Result<Scene> {
    let mut rng = rng(seed);
    let n = params.size as f64;
    let radius = rng.gen_range(params.radius.clone());
    let lo = radius + 16.0;
    let center = [rng.gen_range(lo..n - lo), rng.gen_range(lo..n - lo)];
    let cell = CellSpec::new(center, radius, rng.gen_range(params.height_um.clone()));
    let phantom = make_cell_phantom(params.size, params.size, &[cell], setup.wavelength_um, params.height_um.end)?;
    let hologram = synthesize_hologram(&phantom, setup)?;
    Ok(Scene { phantom, cells: vec![cell], hologram })
}

/// Frames holding target clusters, loose neighbour cells and a slowly varying
/// background phase.
#[derive(Debug, Clone)]
pub struct CutoutFrameParams {
    pub rows: usize,
    pub cols: usize,
    /// Target slots per axis; one cluster per slot.
    pub slots: (usize, usize),
    pub cells_per_cluster: Range<usize>,
    pub cluster_radius: Range<f64>,
    /// Cells per cluster lie within this distance of the slot center.
    pub cluster_spread: f64,
    pub neighbours: usize,
    pub neighbour_radius: Range<f64>,
    pub height_um: Range<f64>,
    pub margin_px: usize,
    /// Maximum amplitude (radians) of each background wave.
    pub background_rad: f64,
    pub background_waves: usize,
}

impl Default for CutoutFrameParams {
    fn default() -> Self {
        CutoutFrameParams {
            rows: 1024,
            cols: 1024,
            slots: (1, 1),
            cells_per_cluster: 2..4,
            cluster_radius: 50.0..110.0,
            cluster_spread: 170.0,
            neighbours: 4,
            neighbour_radius: 40.0..100.0,
            height_um: 0.05..0.65,
            margin_px: 32,
            background_rad: 5.0,
            background_waves: 2,
        }
    }
}

/// A target cluster and its cutout rectangle in frame coordinates.
#[derive(Debug, Clone)]
pub struct CutoutTarget {
    pub rect: Rect,
    pub cells: Vec<CellSpec>,
}

impl CutoutTarget {
    /// Mask of the cluster in cutout coordinates.
    pub fn mask(&self) -> Result<RealImage> {
        let shifted: Vec<CellSpec> = self
            .cells
            .iter()
            .map(|c| CellSpec { center: [c.center[0] - self.rect.row as f64, c.center[1] - self.rect.col as f64], ..*c })
            .collect();
        cell_mask(self.rect.rows, self.rect.cols, &shifted)
    }
}

#[derive(Debug, Clone)]
pub struct CutoutFrame {
    pub scene: Scene,
    pub targets: Vec<CutoutTarget>,
}

fn bbox_rect(cells: &[CellSpec], margin: usize, rows: usize, cols: usize) -> Rect {
    let m = margin as f64;
    let r0 = cells.iter().map(|c| c.center[0] - c.radius).fold(f64::INFINITY, f64::min) - m;
    let r1 = cells.iter().map(|c| c.center[0] + c.radius).fold(f64::NEG_INFINITY, f64::max) + m;
    let c0 = cells.iter().map(|c| c.center[1] - c.radius).fold(f64::INFINITY, f64::min) - m;
    let c1 = cells.iter().map(|c| c.center[1] + c.radius).fold(f64::NEG_INFINITY, f64::max) + m;
    let r0 = r0.floor().max(0.0) as usize;
    let c0 = c0.floor().max(0.0) as usize;
    let r1 = (r1.ceil() as usize + 1).min(rows);
    let c1 = (c1.ceil() as usize + 1).min(cols);
    Rect::from_ranges(r0..r1, c0..c1)
}

pub fn cutout_frame(seed: u64, params: &CutoutFrameParams, setup: &OpticalSetup) -> Result<CutoutFrame> {
    let mut rng = rng(seed);
    let (rows, cols) = (params.rows, params.cols);
    let (sr, sc) = params.slots;
    let (slot_h, slot_w) = (rows as f64 / sr as f64, cols as f64 / sc as f64);
    let mut cells = Vec::new();
    let mut clusters = Vec::new();
    for i in 0..sr {
        for j in 0..sc {
            let center = [(i as f64 + 0.5) * slot_h, (j as f64 + 0.5) * slot_w];
            let n = rng.gen_range(params.cells_per_cluster.clone());
            let mut cluster = Vec::with_capacity(n);
            for _ in 0..n {
                let ang = rng.gen_range(0.0..2.0 * PI);
                let dist = rng.gen_range(0.0..params.cluster_spread);
                cluster.push(CellSpec::new(
                    [center[0] + dist * ang.sin(), center[1] + dist * ang.cos()],
                    rng.gen_range(params.cluster_radius.clone()),
                    rng.gen_range(params.height_um.clone()),
                ));
            }
            cells.extend_from_slice(&cluster);
            clusters.push(cluster);
        }
    }
    for _ in 0..params.neighbours {
        cells.push(CellSpec::new(
            [rng.gen_range(0.0..rows as f64), rng.gen_range(0.0..cols as f64)],
            rng.gen_range(params.neighbour_radius.clone()),
            rng.gen_range(params.height_um.clone()),
        ));
    }
    let mut phantom = make_cell_phantom(rows, cols, &cells, setup.wavelength_um, params.height_um.end)?;
    let diag = (rows as f64).hypot(cols as f64);
    for _ in 0..params.background_waves {
        let wave = PhaseWave {
            amplitude_rad: rng.gen_range(0.0..=params.background_rad),
            period_px: rng.gen_range(diag..2.0 * diag),
            angle_rad: rng.gen_range(0.0..2.0 * PI),
            offset_rad: rng.gen_range(0.0..2.0 * PI),
        };
        phantom = phantom.with_added_phase(&wave.render(rows, cols)?)?;
    }
    let hologram = synthesize_hologram(&phantom, setup)?;
    let targets = clusters
        .into_iter()
        .map(|cluster| CutoutTarget { rect: bbox_rect(&cluster, params.margin_px, rows, cols), cells: cluster })
        .collect();
    Ok(CutoutFrame { scene: Scene { phantom, cells, hologram }, targets })
}

/// A mosaic whose cells straddle the patch lines.
#[derive(Debug, Clone)]
pub struct MosaicParams {
    pub tile: usize,
    pub grid: usize,
    /// Cells centered near each patch line.
    pub cells_per_line: usize,
    pub radius: Range<f64>,
    pub height_um: Range<f64>,
    /// Maximum distance of a straddling cell's center from its line.
    pub jitter_px: f64,
}

impl Default for MosaicParams {
    fn default() -> Self {
        MosaicParams { tile: 256, grid: 2, cells_per_line: 2, radius: 40.0..80.0, height_um: 0.1..0.5, jitter_px: 30.0 }
    }
}

#[derive(Debug, Clone)]
pub struct MosaicScene {
    pub phantom: Phantom,
    pub cells: Vec<CellSpec>,
    /// Tiles synthesized independently from the phantom, row-major.
    pub tiles: Vec<Vec<RealImage>>,
    pub mosaic: WsiMosaic,
}

impl MosaicScene {
    pub fn layout(&self) -> &PatchLayout {
        &self.mosaic.layout
    }
}

pub fn straddling_mosaic(seed: u64, params: &MosaicParams, setup: &OpticalSetup) -> Result<MosaicScene> {
    let mut rng = rng(seed);
    let t = params.tile;
    let n = t * params.grid;
    let nf = n as f64;
    let edge = params.radius.end.min(nf / 4.0);
    let mut cells = Vec::new();
    for line in 1..params.grid {
        let p = (line * t) as f64;
        for _ in 0..params.cells_per_line {
            let along = rng.gen_range(edge..nf - edge);
            let across = p + rng.gen_range(-params.jitter_px..params.jitter_px);
            let radius = rng.gen_range(params.radius.clone());
            cells.push(CellSpec::new([along, across], radius, rng.gen_range(params.height_um.clone())));
            let along = rng.gen_range(edge..nf - edge);
            let across = p + rng.gen_range(-params.jitter_px..params.jitter_px);
            let radius = rng.gen_range(params.radius.clone());
            cells.push(CellSpec::new([across, along], radius, rng.gen_range(params.height_um.clone())));
        }
    }
    let phantom = make_cell_phantom(n, n, &cells, setup.wavelength_um, params.height_um.end)?;
    let layout = PatchLayout::new(t, t, params.grid, params.grid)?;
    let tiles = (0..params.grid)
        .map(|i| {
            (0..params.grid)
                .map(|j| synthesize_hologram(&phantom.crop(layout.tile_rect(i, j))?, setup))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mosaic = assemble_mosaic(&tiles)?;
    Ok(MosaicScene { phantom, cells, tiles, mosaic })
}
