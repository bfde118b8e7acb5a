use std::fs;
use std::path::PathBuf;

use clap::ValueEnum;
use serde::Deserialize;
use wsiqpi::io::read_json;
use wsiqpi::metrics::{corpus_report, evaluate_corpus, CorpusCase, EvalOptions, Units};
use wsiqpi::pipeline::PipelineConfig;
use wsiqpi::Error;

use crate::common::{read_image, read_mask, relative_to};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum UnitArg {
    Um,
    Rad,
}

#[derive(Debug, clap::Args)]
#[command(group = clap::ArgGroup::new("cases_or_single").required(true).args(["cases", "reference"]))]
pub struct Args {
    /// Reference phase map (radians).
    #[arg(long, requires_all = ["candidate", "mask"])]
    reference: Option<PathBuf>,
    /// Candidate phase map reconstructed without mirrored extension.
    #[arg(long)]
    candidate: Option<PathBuf>,
    /// Optional candidate reconstructed with mirrored extension.
    #[arg(long)]
    candidate_mdi: Option<PathBuf>,
    /// Cell mask (PNG or QPH, > 0 inside).
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Row label for a single case.
    #[arg(long, default_value = "case")]
    case_id: String,
    /// Corpus file: [{case_id, reference, plain, mdi?, mask}], paths relative to it.
    #[arg(long, conflicts_with_all = ["reference", "candidate", "candidate_mdi", "mask"])]
    cases: Option<PathBuf>,
    /// CSV report: one row per case, then Mean/Max/Min/Var/Median.
    #[arg(long)]
    out: PathBuf,
    /// Metric units (overrides the config).
    #[arg(long, value_enum)]
    units: Option<UnitArg>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseSpec {
    case_id: String,
    reference: PathBuf,
    plain: PathBuf,
    #[serde(default)]
    mdi: Option<PathBuf>,
    mask: PathBuf,
}

fn load_cases(args: &Args) -> anyhow::Result<Vec<CorpusCase>> {
    if let Some(path) = &args.cases {
        let specs: Vec<CaseSpec> = read_json(path)?;
        return specs
            .into_iter()
            .map(|s| {
                Ok(CorpusCase {
                    case_id: s.case_id,
                    reference: read_image(&relative_to(path, &s.reference))?,
                    plain: read_image(&relative_to(path, &s.plain))?,
                    mdi: s.mdi.map(|m| read_image(&relative_to(path, &m))).transpose()?,
                    mask: read_mask(&relative_to(path, &s.mask))?,
                })
            })
            .collect();
    }
    let need = |p: &Option<PathBuf>, flag: &str| {
        p.clone().ok_or_else(|| Error::Parameter(format!("{flag} is required without --cases")))
    };
    Ok(vec![CorpusCase {
        case_id: args.case_id.clone(),
        reference: read_image(&need(&args.reference, "--reference")?)?,
        plain: read_image(&need(&args.candidate, "--candidate")?)?,
        mdi: args.candidate_mdi.as_deref().map(read_image).transpose()?,
        mask: read_mask(&need(&args.mask, "--mask")?)?,
    }])
}

pub fn run(args: &Args, cfg: &PipelineConfig) -> anyhow::Result<()> {
    let units = match args.units {
        Some(UnitArg::Um) => Units::Micrometres,
        Some(UnitArg::Rad) => Units::Radians,
        None => cfg.metric_units,
    };
    let opts = EvalOptions { wavelength_um: cfg.setup.wavelength_um, erosion_px: cfg.mask_erosion_px, units };
    let cases = load_cases(args)?;
    let report = corpus_report(evaluate_corpus(&cases, &opts)?, units)?;
    fs::write(&args.out, report.to_csv()).map_err(|e| Error::Io { path: args.out.clone(), source: e })?;
    print!("{}", report.to_text());
    Ok(())
}
