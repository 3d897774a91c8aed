//! Command-line surface.

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use panelgwas::engine::{DEFAULT_BATCH_SIZE, DEFAULT_FULL_BUDGET_BYTES, DEFAULT_P_THRESHOLD};
use panelgwas::genotype_io::DenseOrientation;
use panelgwas::kernel::DEFAULT_RANK_TOLERANCE;
use panelgwas::oracle::SimSpec;
use panelgwas::{DfMode, GenotypeSpec, MissingPolicy, ModelOptions, Precision};

pub const THREADS_ENV: &str = "PANELGWAS_THREADS";
const TOP_K_MISSING: &str = "100";

#[derive(Debug, Parser)]
#[command(name = "panelgwas", version, about = "Batched linear association scans for large phenotype panels")]
pub struct Cli {
    /// Log verbosity on standard error.
    #[arg(long, global = true, value_enum, default_value_t = LogLevel::Info)]
    pub log_level: LogLevel,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scan every marker against every phenotype.
    Run(RunArgs),
    /// Write a synthetic cohort: PLINK trio, phenotype and covariate tables, truth table.
    Simulate(SimulateArgs),
    /// Compare the engine with per-trait least squares and report concordance.
    Validate(ValidateArgs),
    /// Time a scan on a simulated cohort and print stage timings.
    Bench(BenchArgs),
    /// Rewrite a genotype dataset as PLINK or dense .npy.
    Convert(ConvertArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LogLevel {
    Error,
    Warn,
    Info,
    Debug,
    Trace,
}

impl LogLevel {
    pub fn filter(self) -> log::LevelFilter {
        match self {
            LogLevel::Error => log::LevelFilter::Error,
            LogLevel::Warn => log::LevelFilter::Warn,
            LogLevel::Info => log::LevelFilter::Info,
            LogLevel::Debug => log::LevelFilter::Debug,
            LogLevel::Trace => log::LevelFilter::Trace,
        }
    }
}

#[derive(Debug, Clone, Args)]
#[command(next_help_heading = "Genotypes")]
pub struct GenotypeArgs {
    /// PLINK prefix; reads <PREFIX>.bed, <PREFIX>.bim, <PREFIX>.fam.
    #[arg(long, value_name = "PREFIX", conflicts_with_all = ["bed", "bim", "fam", "bgen", "dense"])]
    pub bfile: Option<PathBuf>,
    /// PLINK .bed file (with --bim and --fam).
    #[arg(long, requires_all = ["bim", "fam"], conflicts_with_all = ["bgen", "dense"])]
    pub bed: Option<PathBuf>,
    /// PLINK .bim file.
    #[arg(long, requires = "bed")]
    pub bim: Option<PathBuf>,
    /// PLINK .fam file.
    #[arg(long, requires = "bed")]
    pub fam: Option<PathBuf>,
    /// BGEN v1.2 file (layout 2, zlib).
    #[arg(long, conflicts_with = "dense")]
    pub bgen: Option<PathBuf>,
    /// Sample IDs for --bgen, one per line; overrides IDs stored in the file.
    #[arg(long, requires = "bgen")]
    pub sample: Option<PathBuf>,
    /// Dense dosage matrix in .npy format (f32 or f64).
    #[arg(long, requires = "dense_samples")]
    pub dense: Option<PathBuf>,
    /// Sample IDs for --dense, one per line.
    #[arg(long, requires = "dense")]
    pub dense_samples: Option<PathBuf>,
    /// Axis order of --dense.
    #[arg(long, value_enum, default_value_t = Orientation::MarkersBySamples, requires = "dense")]
    pub dense_orientation: Orientation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Orientation {
    MarkersBySamples,
    SamplesByMarkers,
}

impl GenotypeArgs {
    pub fn is_given(&self) -> bool {
        self.bfile.is_some() || self.bed.is_some() || self.bgen.is_some() || self.dense.is_some()
    }

    pub fn spec(&self) -> Result<GenotypeSpec> {
        if let Some(prefix) = &self.bfile {
            return Ok(GenotypeSpec::plink_prefix(prefix));
        }
        if let (Some(bed), Some(bim), Some(fam)) = (&self.bed, &self.bim, &self.fam) {
            return Ok(GenotypeSpec::Plink { bed: bed.clone(), bim: bim.clone(), fam: fam.clone() });
        }
        if let Some(path) = &self.bgen {
            return Ok(GenotypeSpec::Bgen { path: path.clone(), samples: self.sample.clone() });
        }
        if let (Some(path), Some(samples)) = (&self.dense, &self.dense_samples) {
            let orientation = match self.dense_orientation {
                Orientation::MarkersBySamples => DenseOrientation::MarkersBySamples,
                Orientation::SamplesByMarkers => DenseOrientation::SamplesByMarkers,
            };
            return Ok(GenotypeSpec::Dense { path: path.clone(), samples: samples.clone(), orientation });
        }
        bail!("a genotype input is required: --bfile, --bed/--bim/--fam, --bgen or --dense")
    }
}

#[derive(Debug, Clone, Args)]
#[command(next_help_heading = "Samples and phenotypes")]
pub struct SampleArgs {
    /// Phenotype table: header row, an ID column, one numeric column per phenotype.
    #[arg(long)]
    pub pheno: Option<PathBuf>,
    /// Covariate table, same layout as --pheno.
    #[arg(long)]
    pub covar: Option<PathBuf>,
    /// Keep only these sample IDs (one per line).
    #[arg(long)]
    pub keep: Option<PathBuf>,
    /// Drop these sample IDs (one per line).
    #[arg(long)]
    pub remove: Option<PathBuf>,
    /// Name of the sample ID column in --pheno and --covar.
    #[arg(long, default_value = "IID")]
    pub id_column: String,
    /// Field separator of --pheno and --covar.
    #[arg(long, value_enum, default_value_t = Delimiter::Tab)]
    pub delimiter: Delimiter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Delimiter {
    Tab,
    Comma,
    Space,
}

impl Delimiter {
    pub fn char(self) -> char {
        match self {
            Delimiter::Tab => '\t',
            Delimiter::Comma => ',',
            Delimiter::Space => ' ',
        }
    }
}

#[derive(Debug, Clone, Args)]
#[command(next_help_heading = "Model")]
pub struct ModelArgs {
    /// Storage precision of standardized matrices; products accumulate in f64 either way.
    #[arg(long, value_enum, default_value_t = PrecisionArg::F32)]
    pub precision: PrecisionArg,
    /// Degrees of freedom: n-minus-2 = N - 2, adjusted = N - q - 1 with q the covariate basis rank.
    #[arg(long, value_enum, default_value_t = DfModeArg::NMinus2)]
    pub df_mode: DfModeArg,
    /// Also project covariates out of genotypes.
    #[arg(long)]
    pub residualize_genotypes: bool,
    /// Leave the intercept out of the covariate basis.
    #[arg(long)]
    pub no_intercept: bool,
    /// Handling of missing phenotype values.
    #[arg(long, value_enum, default_value_t = MissingPolicyArg::MeanImpute)]
    pub missing_policy: MissingPolicyArg,
    /// Covariate columns whose residual norm falls below this fraction of their norm are dropped.
    #[arg(long, default_value_t = DEFAULT_RANK_TOLERANCE)]
    pub rank_tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PrecisionArg {
    /// f32 storage, f64 accumulation.
    F32,
    /// f64 storage; output bit-identical across batch sizes and thread counts.
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DfModeArg {
    NMinus2,
    Adjusted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MissingPolicyArg {
    MeanImpute,
    Fail,
}

impl ModelArgs {
    pub fn options(&self) -> ModelOptions {
        ModelOptions {
            precision: match self.precision {
                PrecisionArg::F32 => Precision::F32StoreF64Acc,
                PrecisionArg::F64 => Precision::F64,
            },
            df_mode: match self.df_mode {
                DfModeArg::NMinus2 => DfMode::PaperNMinus2,
                DfModeArg::Adjusted => DfMode::Adjusted,
            },
            residualize_genotypes: self.residualize_genotypes,
            include_intercept: !self.no_intercept,
            missing_policy: match self.missing_policy {
                MissingPolicyArg::MeanImpute => MissingPolicy::MeanImpute,
                MissingPolicyArg::Fail => MissingPolicy::Fail,
            },
            rank_tolerance: self.rank_tolerance,
        }
    }
}

#[derive(Debug, Clone, Args)]
#[command(next_help_heading = "Execution")]
pub struct ExecArgs {
    /// Markers per batch.
    #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
    pub batch_size: usize,
    /// Worker threads [default: available cores].
    #[arg(long, env = THREADS_ENV)]
    pub threads: Option<usize>,
}

impl ExecArgs {
    pub fn worker_count(&self) -> usize {
        self.threads.unwrap_or_else(panelgwas::engine::default_worker_count)
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub genotypes: GenotypeArgs,
    #[command(flatten)]
    pub samples: SampleArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub exec: ExecArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
#[command(next_help_heading = "Output")]
pub struct OutputArgs {
    /// Output prefix: <OUT>.tsv or <OUT>.bin, <OUT>.summary.json, ...
    #[arg(long)]
    pub out: PathBuf,
    /// Keep pairs with p at or below this value.
    #[arg(long, default_value_t = DEFAULT_P_THRESHOLD, conflicts_with_all = ["top_k", "full"])]
    pub threshold: f64,
    /// Keep the K smallest p per phenotype [default when given without K: 100].
    #[arg(long, value_name = "K", num_args = 0..=1, default_missing_value = TOP_K_MISSING, conflicts_with = "full")]
    pub top_k: Option<usize>,
    /// Write every t statistic as a dense binary matrix.
    #[arg(long)]
    pub full: bool,
    /// Largest FULL matrix, in bytes, written without --allow-over-budget.
    #[arg(long, default_value_t = DEFAULT_FULL_BUDGET_BYTES)]
    pub full_budget_bytes: u64,
    /// Write FULL output even when it exceeds --full-budget-bytes.
    #[arg(long, requires = "full")]
    pub allow_over_budget: bool,
    /// Also write <OUT>.qc.tsv listing skipped markers and phenotypes.
    #[arg(long)]
    pub write_qc: bool,
}

#[derive(Debug, Clone, Args)]
#[command(next_help_heading = "Simulation")]
pub struct SimArgs {
    /// Random seed.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Number of samples.
    #[arg(long, default_value_t = 2000)]
    pub samples: usize,
    /// Number of markers.
    #[arg(long, default_value_t = 20_000)]
    pub markers: usize,
    /// Number of phenotypes.
    #[arg(long, default_value_t = 32)]
    pub phenotypes: usize,
    /// Number of covariates.
    #[arg(long, default_value_t = 3)]
    pub covariates: usize,
    /// Fraction of markers causal for each phenotype.
    #[arg(long, default_value_t = 0.001)]
    pub causal_fraction: f64,
    /// Standard deviation of causal effects.
    #[arg(long, default_value_t = 0.1)]
    pub effect_sd: f64,
    /// Standard deviation of phenotype noise.
    #[arg(long, default_value_t = 1.0)]
    pub noise_sd: f64,
    /// Standard deviation of covariate effects.
    #[arg(long, default_value_t = 0.3)]
    pub covariate_effect_sd: f64,
    /// Fraction of genotype calls set missing.
    #[arg(long, default_value_t = 0.0)]
    pub genotype_missing_rate: f64,
    /// Fraction of phenotype values set missing.
    #[arg(long, default_value_t = 0.0)]
    pub phenotype_missing_rate: f64,
    /// Lower bound of the allele frequency range.
    #[arg(long, default_value_t = 0.05)]
    pub af_min: f64,
    /// Upper bound of the allele frequency range.
    #[arg(long, default_value_t = 0.5)]
    pub af_max: f64,
}

impl SimArgs {
    pub fn spec(&self) -> SimSpec {
        SimSpec {
            seed: self.seed,
            n_samples: self.samples,
            n_markers: self.markers,
            n_phenotypes: self.phenotypes,
            n_covariates: self.covariates,
            causal_fraction: self.causal_fraction,
            effect_sd: self.effect_sd,
            noise_sd: self.noise_sd,
            covariate_effect_sd: self.covariate_effect_sd,
            genotype_missing_rate: self.genotype_missing_rate,
            phenotype_missing_rate: self.phenotype_missing_rate,
            af_range: (self.af_min, self.af_max),
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    /// Output prefix for the simulated files.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub genotypes: GenotypeArgs,
    #[command(flatten)]
    pub samples: SampleArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub exec: ExecArgs,
    /// Simulated cohort used when no genotype input is given.
    #[command(flatten)]
    pub sim: SimArgs,
    /// Compare this results TSV instead of running the engine.
    #[arg(long, help_heading = "Validation")]
    pub engine_output: Option<PathBuf>,
    /// Fail when the Pearson correlation of -log10 p falls below this.
    #[arg(long, default_value_t = 0.999, help_heading = "Validation")]
    pub min_pearson: f64,
    /// Fail when max |t_engine - t_oracle| exceeds this [default with --df-mode adjusted and
    /// --residualize-genotypes: 1e-6 for f64, 1e-3 for f32; unchecked otherwise].
    #[arg(long, help_heading = "Validation")]
    pub max_abs_dt: Option<f64>,
    /// Prefix for engine results and <OUT>.concordance.txt [default: a temporary directory].
    #[arg(long, help_heading = "Validation")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub exec: ExecArgs,
    /// Random seed.
    #[arg(long, default_value_t = 1, help_heading = "Benchmark")]
    pub seed: u64,
    /// Number of samples.
    #[arg(long, default_value_t = 2000, help_heading = "Benchmark")]
    pub samples: usize,
    /// Number of markers.
    #[arg(long, default_value_t = 20_000, help_heading = "Benchmark")]
    pub markers: usize,
    /// Number of phenotypes.
    #[arg(long, default_value_t = 128, help_heading = "Benchmark")]
    pub phenotypes: usize,
    /// Number of covariates.
    #[arg(long, default_value_t = 3, help_heading = "Benchmark")]
    pub covariates: usize,
    /// Timed scans; the fastest is reported.
    #[arg(long, default_value_t = 1, help_heading = "Benchmark")]
    pub repeats: usize,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[command(flatten)]
    pub genotypes: GenotypeArgs,
    /// Output format.
    #[arg(long, value_enum)]
    pub to: ConvertTarget,
    /// Output prefix.
    #[arg(long)]
    pub out: PathBuf,
    /// Round non-integer dosages to the nearest hard call when writing PLINK.
    #[arg(long)]
    pub round_dosages: bool,
    /// Markers read per batch.
    #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
    pub batch_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConvertTarget {
    /// <OUT>.bed, <OUT>.bim, <OUT>.fam.
    Plink,
    /// <OUT>.npy (f32, markers by samples) and <OUT>.samples.txt.
    Npy,
}

#[cfg(test)]
mod tests {
    use clap::CommandFactory;
    use panelgwas::engine::DEFAULT_TOP_K;

    use super::*;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn bare_top_k_uses_default() {
        assert_eq!(TOP_K_MISSING.parse::<usize>().unwrap(), DEFAULT_TOP_K);
    }

    fn parse(args: &[&str]) -> std::result::Result<Cli, clap::Error> {
        Cli::try_parse_from(std::iter::once("panelgwas").chain(args.iter().copied()))
    }

    #[test]
    fn run_defaults_to_threshold_mode() {
        let cli =
            parse(&["run", "--bed", "x.bed", "--bim", "x.bim", "--fam", "x.fam", "--pheno", "y.tsv", "--out", "o"])
                .unwrap();
        let Command::Run(run) = cli.command else { panic!("expected run") };
        assert_eq!(run.output.threshold, DEFAULT_P_THRESHOLD);
        assert!(run.output.top_k.is_none() && !run.output.full);
        assert_eq!(run.exec.batch_size, DEFAULT_BATCH_SIZE);
        assert!(matches!(run.genotypes.spec().unwrap(), GenotypeSpec::Plink { .. }));
    }

    #[test]
    fn conflicting_output_modes_are_rejected() {
        let base = ["run", "--bfile", "x", "--pheno", "y.tsv", "--out", "o"];
        for extra in
            [&["--top-k", "50", "--full"][..], &["--threshold", "0.01", "--full"], &["--threshold", "0.1", "--top-k"]]
        {
            let args: Vec<&str> = base.iter().chain(extra).copied().collect();
            let err = parse(&args).unwrap_err();
            assert_eq!(err.kind(), clap::error::ErrorKind::ArgumentConflict, "{extra:?}");
        }
    }

    #[test]
    fn unknown_flags_and_partial_plink_sets_are_rejected() {
        assert!(parse(&["run", "--bfile", "x", "--pheno", "y", "--out", "o", "--frobnicate"]).is_err());
        assert!(parse(&["run", "--bed", "x.bed", "--pheno", "y", "--out", "o"]).is_err());
        assert!(parse(&["run", "--bfile", "x", "--bgen", "y.bgen", "--pheno", "y", "--out", "o"]).is_err());
    }
}
