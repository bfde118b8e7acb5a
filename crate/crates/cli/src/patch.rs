use std::path::PathBuf;

use wsiqpi::calibration::sidecar_path;
use wsiqpi::io::{read_qph, write_json, write_qph, QphArray, QphPayload};
use wsiqpi::wsi::PatchLayout;
use wsiqpi::Error;

use crate::common::MosaicManifest;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Mosaic manifest {tile_rows, tile_cols, grid}.
    #[arg(long)]
    manifest: PathBuf,
    /// Output container; the layout is written next to it as `<out>.json`.
    #[arg(long)]
    out: PathBuf,
}

/// Copies `len` samples starting at `src_start` into the mosaic payload at `offset`.
fn copy_row(dst: &mut QphPayload, src: &QphPayload, src_start: usize, len: usize, offset: usize) {
    match (dst, src) {
        (QphPayload::F32(d), QphPayload::F32(s)) => d[offset..offset + len].copy_from_slice(&s[src_start..src_start + len]),
        (QphPayload::F64(d), QphPayload::F64(s)) => d[offset..offset + len].copy_from_slice(&s[src_start..src_start + len]),
        (QphPayload::Complex64(d), QphPayload::Complex64(s)) => {
            d[offset..offset + len].copy_from_slice(&s[src_start..src_start + len])
        }
        _ => unreachable!("dtypes are checked before copying"),
    }
}

fn empty_like(p: &QphPayload, n: usize) -> QphPayload {
    match p {
        QphPayload::F32(_) => QphPayload::F32(vec![0.0; n]),
        QphPayload::F64(_) => QphPayload::F64(vec![0.0; n]),
        QphPayload::Complex64(_) => QphPayload::Complex64(vec![Default::default(); n]),
    }
}

pub fn run(args: &Args) -> anyhow::Result<()> {
    let (manifest, paths) = MosaicManifest::load(&args.manifest)?;
    let grid_cols = paths[0].len();
    if let Some((i, row)) = paths.iter().enumerate().find(|(_, r)| r.len() != grid_cols) {
        return Err(Error::Parameter(format!("tile row {i} has {} tiles, expected {grid_cols}", row.len())).into());
    }
    let layout = PatchLayout::new(manifest.tile_rows, manifest.tile_cols, paths.len(), grid_cols)?;
    let (rows, cols) = layout.mosaic_dims();
    let (tr, tc) = (layout.tile_rows, layout.tile_cols);
    let mut payload: Option<QphPayload> = None;
    let mut dtype = None;
    for (i, row) in paths.iter().enumerate() {
        for (j, p) in row.iter().enumerate() {
            let tile = read_qph(p)?;
            manifest.check(p, (tile.rows, tile.cols))?;
            match dtype {
                None => dtype = Some(tile.dtype()),
                Some(d) if d != tile.dtype() => {
                    return Err(Error::Parameter(format!(
                        "{}: dtype {:?} differs from the first tile's {d:?}",
                        p.display(),
                        tile.dtype()
                    ))
                    .into())
                }
                Some(_) => {}
            }
            let dst = payload.get_or_insert_with(|| empty_like(&tile.payload, rows * cols));
            for r in 0..tr {
                copy_row(dst, &tile.payload, r * tc, tc, (i * tr + r) * cols + j * tc);
            }
        }
    }
    let payload = payload.expect("manifest has at least one tile");
    write_qph(&args.out, &QphArray::new(rows, cols, payload)?)?;
    write_json(&sidecar_path(&args.out), &layout)?;
    println!(
        "patched {}x{} tiles into {rows}x{cols} -> {}",
        layout.grid_rows,
        layout.grid_cols,
        args.out.display()
    );
    Ok(())
}
