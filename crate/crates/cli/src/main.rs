use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use trendscope_core::spatial::{ClassifierKind, SimilarityMeasure};
use trendscope_cli::config::{resolve, Overrides};
use trendscope_cli::pipeline::REPORT_FILE;
use trendscope_cli::synth::{load_params, write_fixture, RUN_CONFIG_FILE};
use trendscope_cli::{run, CliError, RunReport, Target};

#[derive(Parser)]
#[command(name = "trendscope", version, about = "Spatio-temporal fashion trend analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a manifest and vector file and copy them into the output dir
    Ingest(Common),
    /// Assign records to cities by radius
    Filter(Common),
    /// Fit PCA or the configured fusion plan and write fused vectors
    Pca {
        #[command(flatten)]
        common: Common,
        /// Compress the whole vector to this many components
        #[arg(long)]
        dim: Option<usize>,
    },
    /// Fit the k-means codebook
    Codebook(Common),
    /// Per city and year codeword histograms
    Histogram(Common),
    /// Trend descriptors between consecutive years
    Ftd(Common),
    /// Train and evaluate the city classifier
    Classify(Common),
    /// City similarity graph in DOT
    Simgraph(Common),
    /// Nearest records for the strongest rising bins
    Exemplars(Common),
    /// Generate a synthetic corpus with ground truth and a run config
    Synth(SynthArgs),
    /// Run every stage
    Pipeline(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum MeasureArg {
    Cosine,
    HistogramIntersection,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassifierArg {
    NearestClassMean,
    RbfSvm,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    vectors: Option<PathBuf>,
    /// Use this codebook header instead of fitting one
    #[arg(long)]
    codebook: Option<PathBuf>,
    /// JSON city anchor table
    #[arg(long)]
    anchors: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    /// Trend threshold
    #[arg(long)]
    th: Option<f64>,
    #[arg(long)]
    radius_km: Option<f64>,
    #[arg(long)]
    graph_threshold: Option<f64>,
    #[arg(long, value_enum)]
    measure: Option<MeasureArg>,
    #[arg(long, value_enum)]
    classifier: Option<ClassifierArg>,
    #[arg(long)]
    seed_sample: Option<u64>,
    #[arg(long)]
    seed_kmeans: Option<u64>,
    #[arg(long)]
    seed_split: Option<u64>,
    #[arg(long)]
    seed_pca: Option<u64>,
    #[arg(long)]
    seed_display: Option<u64>,
}

#[derive(Args)]
struct SynthArgs {
    /// TOML generator parameters; built-in defaults when absent
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    per_bucket: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

impl Common {
    fn split(self) -> (Option<PathBuf>, Overrides) {
        let overrides = Overrides {
            manifest: self.manifest,
            vectors: self.vectors,
            codebook: self.codebook,
            anchors: self.anchors,
            out: self.out,
            k: self.k,
            threshold: self.th,
            radius_km: self.radius_km,
            graph_threshold: self.graph_threshold,
            measure: self.measure.map(|m| match m {
                MeasureArg::Cosine => SimilarityMeasure::Cosine,
                MeasureArg::HistogramIntersection => SimilarityMeasure::HistogramIntersection,
            }),
            classifier: self.classifier.map(|c| match c {
                ClassifierArg::NearestClassMean => ClassifierKind::NearestClassMean,
                ClassifierArg::RbfSvm => ClassifierKind::RbfSvm,
            }),
            seed_sample: self.seed_sample,
            seed_kmeans: self.seed_kmeans,
            seed_split: self.seed_split,
            seed_pca: self.seed_pca,
            seed_display: self.seed_display,
        };
        (self.config, overrides)
    }
}

fn staged(common: Common, target: Target, dim: Option<usize>) -> Result<(), CliError> {
    let (file, overrides) = common.split();
    let config = resolve(file.as_deref(), overrides)?;
    let report = run(&config, target, dim)?;
    summarize(&report, &config.paths.out);
    Ok(())
}

fn summarize(report: &RunReport, out: &std::path::Path) {
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for f in &report.outputs {
        println!("{}  {}", f.sha256, f.path.display());
    }
    if let Some(acc) = report.metrics.get("classify").and_then(|m| m.get("accuracy")) {
        println!("accuracy: {acc}");
    }
    println!("report: {}", out.join(REPORT_FILE).display());
}

fn synth(args: SynthArgs) -> Result<(), CliError> {
    let mut params = match &args.params {
        Some(path) => load_params(path)?,
        None => Default::default(),
    };
    if let Some(seed) = args.seed {
        params.seed = seed;
    }
    if let Some(n) = args.per_bucket {
        params.per_bucket = n;
    }
    write_fixture(&params, &args.out)?;
    println!("corpus written to {}", args.out.display());
    println!("run with: trendscope pipeline --config {}", args.out.join(RUN_CONFIG_FILE).display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(c) => staged(c, Target::Ingest, None),
        Command::Filter(c) => staged(c, Target::Filter, None),
        Command::Pca { common, dim } => staged(common, Target::Features, dim),
        Command::Codebook(c) => staged(c, Target::Codebook, None),
        Command::Histogram(c) => staged(c, Target::Histograms, None),
        Command::Ftd(c) => staged(c, Target::Trends, None),
        Command::Classify(c) => staged(c, Target::Classify, None),
        Command::Simgraph(c) => staged(c, Target::Similarity, None),
        Command::Exemplars(c) => staged(c, Target::Exemplars, None),
        Command::Pipeline(c) => staged(c, Target::All, None),
        Command::Synth(args) => synth(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
