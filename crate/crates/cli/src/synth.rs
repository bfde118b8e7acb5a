use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wsiqpi::forward::{add_noise, cell_mask, make_cell_phantom, synthesize_hologram, CellSpec, Phantom, PhaseWave};
use wsiqpi::io::{read_json, write_json, write_mask_png};
use wsiqpi::pipeline::PipelineConfig;
use wsiqpi::wsi::PatchLayout;
use wsiqpi::{Error, RealImage};

use crate::common::{create_dir, write_f64, write_preview, MosaicManifest};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Phantom spec: {rows, cols, cells: [{center, radius, peak_height_um}], background?}.
    #[arg(long)]
    phantom: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out_dir: PathBuf,
    /// Also synthesize each tile of an RxC grid separately and write a mosaic manifest.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<(usize, usize)>,
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s.split_once(['x', 'X']).ok_or("expected RxC, e.g. 2x2")?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((parse(r)?, parse(c)?))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PhantomSpec {
    rows: usize,
    cols: usize,
    #[serde(default)]
    cells: Vec<CellSpec>,
    /// Extra smooth phase terms added to the object, radians.
    #[serde(default)]
    background: Vec<PhaseWave>,
}

#[derive(Debug, Serialize)]
struct SynthManifest<'a> {
    rows: usize,
    cols: usize,
    seed: u64,
    noise_sigma: f64,
    hologram: &'a str,
    preview: &'a str,
    phase: &'a str,
    mask: &'a str,
    mosaic: Option<&'a str>,
    config: &'a PipelineConfig,
}

fn build_phantom(spec: &PhantomSpec, cfg: &PipelineConfig) -> anyhow::Result<Phantom> {
    let mut phantom = make_cell_phantom(spec.rows, spec.cols, &spec.cells, cfg.setup.wavelength_um, cfg.max_height_um)?;
    for wave in &spec.background {
        phantom = phantom.with_added_phase(&wave.render(spec.rows, spec.cols)?)?;
    }
    Ok(phantom)
}

fn noisy(img: RealImage, cfg: &PipelineConfig, seed: u64) -> anyhow::Result<RealImage> {
    Ok(if cfg.noise_sigma > 0.0 { add_noise(&img, cfg.noise_sigma, seed)? } else { img })
}

fn write_tiles(phantom: &Phantom, grid: (usize, usize), out: &Path, cfg: &PipelineConfig, seed: u64) -> anyhow::Result<()> {
    let (rows, cols) = phantom.dims();
    let (gr, gc) = grid;
    if gr == 0 || gc == 0 || rows % gr != 0 || cols % gc != 0 {
        return Err(Error::Parameter(format!("{rows}x{cols} phantom does not split into a {gr}x{gc} grid")).into());
    }
    let layout = PatchLayout::new(rows / gr, cols / gc, gr, gc)?;
    let tiles_dir = out.join("tiles");
    create_dir(&tiles_dir)?;
    let mut grid_paths = Vec::with_capacity(gr);
    for i in 0..gr {
        let mut row = Vec::with_capacity(gc);
        for j in 0..gc {
            let tile = synthesize_hologram(&phantom.crop(layout.tile_rect(i, j))?, &cfg.setup)?;
            // Each tile gets its own noise stream.
            let tile = noisy(tile, cfg, seed.wrapping_add(1 + (i * gc + j) as u64))?;
            let name = PathBuf::from("tiles").join(format!("tile_{i}_{j}.qph"));
            write_f64(&out.join(&name), &tile)?;
            row.push(name);
        }
        grid_paths.push(row);
    }
    let manifest = MosaicManifest { tile_rows: layout.tile_rows, tile_cols: layout.tile_cols, grid: grid_paths };
    write_json(&out.join("mosaic.json"), &manifest)?;
    Ok(())
}

pub fn run(args: &Args, cfg: &PipelineConfig, seed: u64) -> anyhow::Result<()> {
    let spec: PhantomSpec = read_json(&args.phantom)?;
    let phantom = build_phantom(&spec, cfg)?;
    let hologram = noisy(synthesize_hologram(&phantom, &cfg.setup)?, cfg, seed)?;
    let out = &args.out_dir;
    create_dir(out)?;
    write_f64(&out.join("hologram.qph"), &hologram)?;
    write_preview(&out.join("hologram.png"), &hologram, "intensity")?;
    write_f64(&out.join("phase.qph"), phantom.phase())?;
    write_mask_png(&out.join("mask.png"), &cell_mask(spec.rows, spec.cols, &spec.cells)?)?;
    if let Some(grid) = args.grid {
        write_tiles(&phantom, grid, out, cfg, seed)?;
    }
    let manifest = SynthManifest {
        rows: spec.rows,
        cols: spec.cols,
        seed,
        noise_sigma: cfg.noise_sigma,
        hologram: "hologram.qph",
        preview: "hologram.png",
        phase: "phase.qph",
        mask: "mask.png",
        mosaic: args.grid.map(|_| "mosaic.json"),
        config: cfg,
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    println!("wrote {}x{} hologram to {}", spec.rows, spec.cols, out.display());
    Ok(())
}
