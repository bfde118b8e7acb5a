use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use clap::ValueEnum;
use serde::Serialize;
use wsiqpi::calibration::{load_calibration, CalibrationFrame};
use wsiqpi::demod::LobeLocation;
use wsiqpi::integrate::{IntegrationConfig, IntegrationVariant};
use wsiqpi::io::write_json;
use wsiqpi::metrics::optical_height;
use wsiqpi::pipeline::{reconstruct, Geometry, OutputFormat, PipelineConfig};
use wsiqpi::wsi::{assemble_mosaic, reconstruct_mosaic, reconstruct_strategy1, PatchLayout, WsiStrategy};
use wsiqpi::{Error, RealImage, Rect};

use crate::common::{create_dir, read_image, write_f64, write_preview, MosaicManifest};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Variant {
    Plain,
    Mdi,
    Shifted,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Strategy {
    PerTile,
    WholeMdi,
    WholeShifted,
}

#[derive(Debug, clap::Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["input", "mosaic"]))]
pub struct Args {
    /// Single hologram (QPH or PNG).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Mosaic manifest {tile_rows, tile_cols, grid}.
    #[arg(long)]
    mosaic: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long)]
    out_dir: PathBuf,
    /// Calibration frame written by `calibrate`.
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Offset ROW,COL of the input inside the calibration frame.
    #[arg(long, value_parser = parse_offset, requires = "calibration", conflicts_with = "mosaic")]
    cutout: Option<(usize, usize)>,
    /// Mosaic strategy (overrides the config).
    #[arg(long, value_enum)]
    strategy: Option<Strategy>,
    /// Integration variant (overrides the config).
    #[arg(long, value_enum)]
    variant: Option<Variant>,
    /// Frequency shift in bins for the shifted variant.
    #[arg(long)]
    shift_delta: Option<f64>,
    /// Integration refinement passes.
    #[arg(long)]
    iterations: Option<usize>,
}

fn parse_offset(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s.split_once(',').ok_or("expected ROW,COL")?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((parse(r)?, parse(c)?))
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    rows: usize,
    cols: usize,
    wavelength_um: f64,
    integration: IntegrationConfig,
    lobes: Option<LobeLocation>,
    layout: Option<&'a PatchLayout>,
    strategy: Option<WsiStrategy>,
    height_range_um: (f64, f64),
}

fn effective_config(args: &Args, cfg: &PipelineConfig) -> anyhow::Result<PipelineConfig> {
    let mut integration = cfg.integration;
    if let Some(v) = args.variant {
        integration.variant = match v {
            Variant::Plain => IntegrationVariant::Plain,
            Variant::Mdi => IntegrationVariant::Mdi,
            Variant::Shifted => IntegrationVariant::Shifted,
        };
    }
    if let Some(d) = args.shift_delta {
        integration.shift_delta = d;
    }
    if let Some(n) = args.iterations {
        integration.iterations = n;
    }
    let mut out = cfg.with_integration(integration);
    if let Some(s) = args.strategy {
        out.wsi_strategy = match s {
            Strategy::PerTile => WsiStrategy::PerTile,
            Strategy::WholeMdi => WsiStrategy::WholeMdi,
            Strategy::WholeShifted => WsiStrategy::WholeShifted,
        };
    }
    out.validate()?;
    Ok(out)
}

fn to_csv(img: &RealImage) -> String {
    let mut s = String::new();
    for r in 0..img.rows() {
        let row: Vec<String> = img.row(r).iter().map(|v| format!("{v:e}")).collect();
        let _ = writeln!(s, "{}", row.join(","));
    }
    s
}

pub fn run(args: &Args, cfg: &PipelineConfig) -> anyhow::Result<()> {
    let cfg = effective_config(args, cfg)?;
    let cal: Option<CalibrationFrame> = args.calibration.as_deref().map(load_calibration).transpose()?;
    let (phase, amplitude, lobes, layout) = match (&args.input, &args.mosaic) {
        (Some(input), _) => {
            let holo = read_image(input)?;
            let geometry = match args.cutout {
                Some((row, col)) => Geometry::Cutout(Rect::new(row, col, holo.rows(), holo.cols())),
                None => Geometry::Full,
            };
            let rec = reconstruct(&holo, &cfg, cal.as_ref(), geometry)?;
            (rec.phase.phase, rec.amplitude, Some(rec.lobes), None)
        }
        (None, Some(manifest_path)) => {
            let (manifest, paths) = MosaicManifest::load(manifest_path)?;
            let tiles = manifest.load_tiles(&paths)?;
            let rec = match cfg.wsi_strategy {
                WsiStrategy::PerTile => reconstruct_strategy1(&tiles, cal.as_ref(), &cfg)?,
                s => reconstruct_mosaic(s, &assemble_mosaic(&tiles)?, cal.as_ref(), &cfg)?,
            };
            let layout = PatchLayout::new(manifest.tile_rows, manifest.tile_cols, tiles.len(), tiles[0].len())?;
            (rec.phase.phase, rec.amplitude, None, Some(layout))
        }
        (None, None) => return Err(Error::Parameter("either --input or --mosaic is required".into()).into()),
    };
    let height = optical_height(&phase, cfg.setup.wavelength_um)?;
    let out = &args.out_dir;
    create_dir(out)?;
    write_f64(&out.join("phase.qph"), &phase)?;
    write_f64(&out.join("height.qph"), &height)?;
    write_preview(&out.join("height.png"), &height, "um")?;
    write_f64(&out.join("amplitude.qph"), &amplitude)?;
    match cfg.output_format {
        OutputFormat::Qph => {}
        OutputFormat::Png16 => write_preview(&out.join("phase.png"), &phase, "rad")?,
        OutputFormat::Csv => {
            let p = out.join("height.csv");
            fs::write(&p, to_csv(&height)).map_err(|e| Error::Io { path: p, source: e })?;
        }
    }
    let summary = Summary {
        rows: phase.rows(),
        cols: phase.cols(),
        wavelength_um: cfg.setup.wavelength_um,
        integration: cfg.integration,
        lobes,
        layout: layout.as_ref(),
        strategy: layout.as_ref().map(|_| cfg.wsi_strategy),
        height_range_um: (height.min(), height.max()),
    };
    write_json(&out.join("reconstruction.json"), &summary)?;
    println!(
        "reconstructed {}x{}; optical height {:.4}..{:.4} um -> {}",
        phase.rows(),
        phase.cols(),
        height.min(),
        height.max(),
        out.display()
    );
    Ok(())
}
