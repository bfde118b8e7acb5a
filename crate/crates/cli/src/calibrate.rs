use std::path::PathBuf;

use wsiqpi::calibration::{build_calibration_with, save_calibration, sidecar_path};
use wsiqpi::demod::{find_lobes_with, DemodOptions};
use wsiqpi::fft2_forward;
use wsiqpi::pipeline::PipelineConfig;

use crate::common::read_image;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Object-free hologram (QPH or PNG).
    #[arg(long)]
    input: PathBuf,
    /// Calibration container; lobe metadata goes to `<out>.json`.
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: &Args, cfg: &PipelineConfig) -> anyhow::Result<()> {
    let holo = read_image(&args.input)?;
    let lobes = find_lobes_with(&fft2_forward(&holo)?, &cfg.lobe_search())?;
    let opts = DemodOptions { apodize: cfg.apodize, ..Default::default() };
    let cal = build_calibration_with(&holo, &lobes, &opts)?;
    save_calibration(&args.out, &cal)?;
    let w = |l: &wsiqpi::SpectralWindow| format!("({}, {}) R={}", l.center_row, l.center_col, l.half_size);
    println!(
        "calibration {}x{}: x lobe {}, y lobe {} -> {} (+ {})",
        holo.rows(),
        holo.cols(),
        w(&lobes.x_lobe),
        w(&lobes.y_lobe),
        args.out.display(),
        sidecar_path(&args.out).display()
    );
    Ok(())
}
