use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use kmeans_mp::data::{self, BlobSpec};
use kmeans_mp::experiment::{
    diagnose, emit_curves, emit_table, run_experiment, DataSpec, ExperimentSpec, TableFormat,
};
use kmeans_mp::kmeans::Mode;
use kmeans_mp::FormatName;

/// Mixed-precision k-means benchmark harness.
#[derive(Parser)]
#[command(name = "kmeans-mp", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment over (mode x delta x seed) and emit a result table.
    Run(RunArgs),
    /// Sweep the trigger threshold delta in mixed mode and emit long-format
    /// curves.
    Sweep(SweepArgs),
    /// Stream the center-update precision bound of a working-precision run
    /// and compare the two distance formulas.
    Diagnose(DiagnoseArgs),
    /// Generate a Gaussian-blob dataset as CSV with a trailing label column.
    Blobs(BlobArgs),
}

#[derive(Args)]
struct DataArgs {
    /// CSV dataset path (rows are points).
    #[arg(long, conflicts_with = "image_table")]
    data: Option<PathBuf>,
    /// Pre-flattened RGB pixel table; channels are divided by --pixel-scale.
    #[arg(long)]
    image_table: Option<PathBuf>,
    #[arg(long, default_value_t = 255.0)]
    pixel_scale: f64,
    /// The last CSV column holds integer ground-truth labels.
    #[arg(long)]
    labels: bool,
    /// Skip one CSV header row.
    #[arg(long)]
    header: bool,
    #[arg(long, default_value_t = ',')]
    delimiter: char,
    /// Apply z-score normalization before clustering.
    #[arg(long)]
    normalize: bool,
}

impl DataArgs {
    fn to_spec(&self) -> Result<DataSpec, String> {
        match (&self.data, &self.image_table) {
            (Some(path), None) => Ok(DataSpec::Csv {
                path: path.clone(),
                has_labels: self.labels,
                has_header: self.header,
                delimiter: self.delimiter,
            }),
            (None, Some(path)) => Ok(DataSpec::Image {
                path: path.clone(),
                scale: self.pixel_scale,
            }),
            _ => Err("exactly one of --data or --image-table is required".into()),
        }
    }
}

#[derive(Args)]
struct CommonRunArgs {
    #[arg(long)]
    k: usize,
    /// Low-precision format for the low/mixed modes.
    #[arg(long, default_value = "fp16", value_parser = parse_low_format)]
    low_format: FormatName,
    /// Seeds, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [0u64, 1, 2, 3, 4])]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = 300)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Let overflow-poisoned assignments stand instead of re-evaluating the
    /// affected points in the working format.
    #[arg(long)]
    no_rescue: bool,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_low_format(s: &str) -> Result<FormatName, String> {
    match s {
        "q52" => Ok(FormatName::Q52),
        "fp16" => Ok(FormatName::Fp16),
        "fp32" => Ok(FormatName::Fp32),
        other => Err(format!(
            "unknown low format `{other}` (expected q52, fp16 or fp32)"
        )),
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    common: CommonRunArgs,
    /// Clustering modes, repeatable.
    #[arg(long = "mode", default_values_t = [Mode::Working])]
    modes: Vec<Mode>,
    /// Trigger thresholds for mixed mode, repeatable.
    #[arg(long = "delta", default_values_t = [2.0])]
    deltas: Vec<f64>,
    #[arg(long, default_value = "csv")]
    format: TableFormat,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    common: CommonRunArgs,
    /// Trigger thresholds to sweep, repeatable.
    #[arg(long = "delta", required = true)]
    deltas: Vec<f64>,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    common: CommonRunArgs,
}

#[derive(Args)]
struct BlobArgs {
    #[arg(long, default_value_t = 2000)]
    n: usize,
    /// Number of generating blobs (the ground-truth cluster count).
    #[arg(long, default_value_t = 10)]
    clusters: usize,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Half-width of the box the blob centers are drawn from.
    #[arg(long, default_value_t = 10.0)]
    center_box: f64,
    /// Minimum pairwise distance between blob centers (0 disables).
    #[arg(long, default_value_t = 0.0)]
    min_separation: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn build_spec(
    data: &DataArgs,
    common: &CommonRunArgs,
    modes: Vec<Mode>,
    deltas: Vec<f64>,
) -> Result<ExperimentSpec, String> {
    Ok(ExperimentSpec {
        data: data.to_spec()?,
        normalize: data.normalize,
        k: common.k,
        modes,
        low_format: common.low_format,
        deltas,
        seeds: common.seeds.clone(),
        max_iter: common.max_iter,
        tol: common.tol,
        rescue: !common.no_rescue,
    })
}

fn open_out(path: Option<&PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn run() -> Result<(), String> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => {
            let spec = build_spec(&args.data, &args.common, args.modes, args.deltas)?;
            let record = run_experiment(&spec).map_err(|e| e.to_string())?;
            let mut out = open_out(args.common.out.as_ref()).map_err(|e| e.to_string())?;
            emit_table(&record, args.format, &mut out).map_err(|e| e.to_string())?;
            for cell in &record.cells {
                if let Some(err) = &cell.error {
                    eprintln!(
                        "warning: cell (mode {}, delta {:?}, seed {}) failed: {err}",
                        cell.mode, cell.delta, cell.seed
                    );
                }
            }
            Ok(())
        }
        Command::Sweep(args) => {
            let spec = build_spec(&args.data, &args.common, vec![Mode::Mixed], args.deltas)?;
            let record = run_experiment(&spec).map_err(|e| e.to_string())?;
            let mut out = open_out(args.common.out.as_ref()).map_err(|e| e.to_string())?;
            emit_curves(&record, &mut out).map_err(|e| e.to_string())?;
            Ok(())
        }
        Command::Diagnose(args) => {
            let spec = build_spec(&args.data, &args.common, vec![Mode::Working], vec![2.0])?;
            let report = diagnose(&spec).map_err(|e| e.to_string())?;
            let mut out = open_out(args.common.out.as_ref()).map_err(|e| e.to_string())?;
            write!(out, "{report}").map_err(|e| e.to_string())?;
            Ok(())
        }
        Command::Blobs(args) => {
            let spec = BlobSpec {
                n: args.n,
                k_true: args.clusters,
                dim: args.dim,
                sigma: args.sigma,
                center_box: args.center_box,
                min_separation: args.min_separation,
                seed: args.seed,
            };
            let ds = data::gaussian_blobs(&spec).map_err(|e| e.to_string())?;
            data::save_csv(&ds, &args.out, b',').map_err(|e| e.to_string())?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}
