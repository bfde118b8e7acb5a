use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use wsiqpi::io::{read_gray_png, read_json, read_mask_png, read_real_qph, write_json, write_png16, write_real_qph, Dtype};
use wsiqpi::pipeline::PipelineConfig;
use wsiqpi::{Error, RealImage};

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_DOMAIN: u8 = 3;

/// 3 for domain failures such as a missing lobe, 2 for everything else.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    let domain = err
        .chain()
        .filter_map(|e| e.downcast_ref::<Error>())
        .any(Error::is_domain_failure);
    if domain {
        EXIT_DOMAIN
    } else {
        EXIT_INPUT
    }
}

pub fn load_config(path: Option<&Path>) -> anyhow::Result<PipelineConfig> {
    let cfg: PipelineConfig = match path {
        Some(p) => read_json(p)?,
        None => PipelineConfig::default(),
    };
    cfg.validate().with_context(|| match path {
        Some(p) => format!("invalid config {}", p.display()),
        None => "invalid default config".to_string(),
    })?;
    Ok(cfg)
}

fn is_png(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Reads a real image from QPH, or raw grey levels from an 8/16-bit PNG.
pub fn read_image(path: &Path) -> anyhow::Result<RealImage> {
    Ok(if is_png(path) { read_gray_png(path)? } else { read_real_qph(path)? })
}

/// Reads a mask from PNG or QPH; samples above zero are inside.
pub fn read_mask(path: &Path) -> anyhow::Result<RealImage> {
    if is_png(path) {
        return Ok(read_mask_png(path)?);
    }
    Ok(read_real_qph(path)?.map(|v| if v > 0.0 { 1.0 } else { 0.0 })?)
}

pub fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), source: e })?;
    Ok(())
}

/// Resolves `p` against the directory of `base` unless it is absolute.
pub fn relative_to(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.parent().unwrap_or(Path::new("")).join(p)
    }
}

#[derive(Debug, Serialize)]
struct PreviewSidecar<'a> {
    min: f64,
    max: f64,
    units: &'a str,
}

/// Writes a PNG16 preview plus a `<png>.json` sidecar with its linear scale.
pub fn write_preview(path: &Path, img: &RealImage, units: &str) -> anyhow::Result<()> {
    let scale = write_png16(path, img)?;
    let mut side = path.as_os_str().to_owned();
    side.push(".json");
    write_json(Path::new(&side), &PreviewSidecar { min: scale.min, max: scale.max, units })?;
    Ok(())
}

pub fn write_f64(path: &Path, img: &RealImage) -> anyhow::Result<()> {
    Ok(write_real_qph(path, img, Dtype::F64)?)
}

/// Tiles of a mosaic, paths relative to the manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MosaicManifest {
    pub tile_rows: usize,
    pub tile_cols: usize,
    pub grid: Vec<Vec<PathBuf>>,
}

impl MosaicManifest {
    pub fn load(path: &Path) -> anyhow::Result<(Self, Vec<Vec<PathBuf>>)> {
        let m: MosaicManifest = read_json(path)?;
        if m.grid.is_empty() || m.grid.iter().any(Vec::is_empty) {
            return Err(Error::Parameter(format!("{}: tile grid has an empty row", path.display())).into());
        }
        let paths = m.grid.iter().map(|row| row.iter().map(|p| relative_to(path, p)).collect()).collect();
        Ok((m, paths))
    }

    /// Loads every tile as a real image and checks it against the declared size.
    pub fn load_tiles(&self, paths: &[Vec<PathBuf>]) -> anyhow::Result<Vec<Vec<RealImage>>> {
        paths
            .iter()
            .map(|row| {
                row.iter()
                    .map(|p| {
                        let img = read_image(p)?;
                        self.check(p, img.dims())?;
                        Ok(img)
                    })
                    .collect()
            })
            .collect()
    }

    pub fn check(&self, path: &Path, dims: (usize, usize)) -> anyhow::Result<()> {
        if dims != (self.tile_rows, self.tile_cols) {
            return Err(Error::Parameter(format!(
                "{}: tile is {}x{}, manifest declares {}x{}",
                path.display(),
                dims.0,
                dims.1,
                self.tile_rows,
                self.tile_cols
            ))
            .into());
        }
        Ok(())
    }
}
