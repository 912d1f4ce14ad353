//! Command-line driver for the field delineation pipeline.
//!
//! Every command writes its outputs plus a `manifest.json` into `--out-dir`.

mod commands;
pub mod manifest;

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use fieldmap_core::{Connectivity, PipelineConfig};

#[derive(Debug, Parser)]
#[command(
    name = "fieldmap",
    version,
    about = "Agricultural field delineation and crop-area accounting"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Field and boundary scores to a label raster and field polygons.
    Delineate(DelineateArgs),
    /// Delineation fused with a crop score map; polygons carry wheat flags.
    Pipeline(PipelineArgs),
    /// Majority-overlap crop labelling of an existing label raster.
    Fuse(FuseArgs),
    /// Pixel metrics of predicted masks against truth masks.
    Metrics(MetricsArgs),
    /// Crop area gained, kept and lost between years.
    Transitions(TransitionsArgs),
    /// Synthetic scene with known truth.
    Synth(SynthArgs),
    /// Prints a raster container header and value statistics.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Worker threads; 0 uses all cores. Results do not depend on this.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

/// Overrides on top of defaults and `--config`.
#[derive(Debug, Args, Default)]
pub struct ConfigArgs {
    /// JSON file whose keys are PipelineConfig field names.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub t_boundary: Option<f64>,
    #[arg(long)]
    pub t_field: Option<f64>,
    /// Minimum field area in map units².
    #[arg(long)]
    pub min_area: Option<f64>,
    /// Simplification tolerance in map units.
    #[arg(long)]
    pub rdp_epsilon: Option<f64>,
    /// Wheat fraction a field must strictly exceed to be flagged wheat.
    #[arg(long)]
    pub overlap: Option<f64>,
    /// 4 or 8.
    #[arg(long, value_parser = parse_connectivity)]
    pub connectivity: Option<Connectivity>,
}

fn parse_connectivity(s: &str) -> Result<Connectivity, String> {
    let n: u8 = s
        .parse()
        .map_err(|_| format!("expected 4 or 8, got {s:?}"))?;
    Connectivity::try_from(n)
}

impl ConfigArgs {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> anyhow::Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", path.display()))?
            }
            None => PipelineConfig::default(),
        };
        if let Some(v) = self.t_boundary {
            c.t_boundary = v;
        }
        if let Some(v) = self.t_field {
            c.t_field = v;
        }
        if let Some(v) = self.min_area {
            c.min_field_area = v;
        }
        if let Some(v) = self.rdp_epsilon {
            c.rdp_epsilon = v;
        }
        if let Some(v) = self.overlap {
            c.wheat_overlap_threshold = v;
        }
        if let Some(v) = self.connectivity {
            c.connectivity = v;
        }
        c.validate().context("stage config failed")?;
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct DelineateArgs {
    /// Field score raster container.
    #[arg(long)]
    pub field: PathBuf,
    /// Boundary score raster container.
    #[arg(long)]
    pub boundary: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub common: CommonArgs,
}

/// Source of the per-pixel wheat mask.
#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct WheatSource {
    /// Wheat score raster, binarized at `--wheat-threshold`.
    #[arg(long)]
    pub wheat_scores: Option<PathBuf>,
    /// Pre-binarized wheat mask container.
    #[arg(long)]
    pub wheat_mask: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub field: PathBuf,
    #[arg(long)]
    pub boundary: PathBuf,
    #[command(flatten)]
    pub wheat: WheatSource,
    /// Score at or above which a pixel is wheat.
    #[arg(long, default_value_t = 0.5)]
    pub wheat_threshold: f64,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Label raster container.
    #[arg(long)]
    pub labels: PathBuf,
    #[command(flatten)]
    pub wheat: WheatSource,
    #[arg(long, default_value_t = 0.5)]
    pub wheat_threshold: f64,
    /// Field polygons to annotate with the fusion result.
    #[arg(long)]
    pub fields: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Predicted mask containers; paired in order with `--truth`.
    #[arg(long, required = true)]
    pub pred: Vec<PathBuf>,
    #[arg(long, required = true)]
    pub truth: Vec<PathBuf>,
    /// Method name written in the method column.
    #[arg(long, default_value = "prediction")]
    pub method: String,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct TransitionsArgs {
    /// Crop mask for one year, as YEAR=PATH. Repeat for each year.
    #[arg(long = "year", required = true, value_parser = parse_year_path)]
    pub years: Vec<(i32, PathBuf)>,
    /// Year gaps to report.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub gaps: Vec<i32>,
    /// Fused polygons for one year, as YEAR=PATH; wheat features give the field count.
    #[arg(long = "fields", value_parser = parse_year_path)]
    pub fields: Vec<(i32, PathBuf)>,
    /// Connectivity used to count fields when no polygons are given.
    #[arg(long, value_parser = parse_connectivity, default_value = "4")]
    pub connectivity: Connectivity,
    #[command(flatten)]
    pub common: CommonArgs,
}

fn parse_year_path(s: &str) -> Result<(i32, PathBuf), String> {
    let (year, path) = s
        .split_once('=')
        .ok_or_else(|| format!("expected YEAR=PATH, got {s:?}"))?;
    let year = year
        .trim()
        .parse()
        .map_err(|_| format!("bad year in {s:?}"))?;
    Ok((year, PathBuf::from(path)))
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 256)]
    pub width: usize,
    #[arg(long, default_value_t = 256)]
    pub height: usize,
    #[arg(long, default_value_t = 40)]
    pub parcels: usize,
    /// Half-width of the boundary band, pixels.
    #[arg(long, default_value_t = 3.0)]
    pub boundary_width: f64,
    #[arg(long, default_value_t = 0.15)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.5)]
    pub wheat_fraction: f64,
    #[arg(long, default_value_t = 10.0)]
    pub pixel_size: f64,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// Raster container (`name`, `name.json` or `name.bin`).
    pub path: PathBuf,
}

/// Runs one parsed invocation inside a thread pool of `--jobs` workers.
pub fn run(cli: Cli) -> anyhow::Result<()> {
    let jobs = match &cli.command {
        Command::Delineate(a) => a.common.jobs,
        Command::Pipeline(a) => a.common.jobs,
        Command::Fuse(a) => a.common.jobs,
        Command::Metrics(a) => a.common.jobs,
        Command::Transitions(a) => a.common.jobs,
        Command::Synth(a) => a.common.jobs,
        Command::Inspect(_) => 1,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .context("building worker pool")?;
    let workers = pool.current_num_threads();
    pool.install(|| match cli.command {
        Command::Delineate(a) => commands::delineate(&a, workers),
        Command::Pipeline(a) => commands::pipeline(&a, workers),
        Command::Fuse(a) => commands::fuse(&a, workers),
        Command::Metrics(a) => {
            if a.pred.len() != a.truth.len() {
                bail!(
                    "{} --pred masks but {} --truth masks",
                    a.pred.len(),
                    a.truth.len()
                );
            }
            commands::metrics(&a, workers)
        }
        Command::Transitions(a) => commands::transitions(&a, workers),
        Command::Synth(a) => commands::synth(&a, workers),
        Command::Inspect(a) => commands::inspect(&a, &mut std::io::stdout().lock()),
    })
}
