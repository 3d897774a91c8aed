//! Subcommand implementations.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use log::{info, warn};
use ndarray::Array2;
use panelgwas::engine::{output_path, read_assoc_tsv, OutputFiles};
use panelgwas::genotype_io::{read_id_list, write_npy, PlinkWriter};
use panelgwas::oracle::{concordance_report, reference_scan, simulate_cohort, KeyedResult, OracleLoop, SimSpec};
use panelgwas::{
    load_table, open_genotype_source, plan_batches, run_scan, CountedAllele, DfMode, GenotypeSpec, OutputMode,
    Precision, ScanConfig, ScanSummary,
};

use crate::args::{
    BenchArgs, ConvertArgs, ConvertTarget, ExecArgs, ModelArgs, RunArgs, SampleArgs, SimulateArgs, ValidateArgs,
};
use crate::EXIT_VALIDATION_FAILED;

/// Default |dt| tolerance when engine and oracle solve the same model.
const EXACT_DT_F64: f64 = 1e-6;
const EXACT_DT_F32: f64 = 1e-3;

fn scan_config(
    genotypes: GenotypeSpec,
    pheno: &Path,
    covar: Option<&Path>,
    samples: &SampleArgs,
    model: &ModelArgs,
    exec: &ExecArgs,
    out: &Path,
) -> ScanConfig {
    let mut config = ScanConfig::new(genotypes, pheno, out);
    config.covariate_path = covar.map(Path::to_path_buf);
    config.keep_path = samples.keep.clone();
    config.remove_path = samples.remove.clone();
    config.id_column = samples.id_column.clone();
    config.delimiter = samples.delimiter.char();
    config.model = model.options();
    config.batch_size = exec.batch_size;
    config.worker_count = exec.worker_count();
    config
}

fn print_summary(summary: &ScanSummary) {
    let mut err = std::io::stderr().lock();
    for (k, v) in summary.to_key_values() {
        let _ = writeln!(err, "{k}={v}");
    }
}

pub fn run(a: RunArgs) -> Result<ExitCode> {
    let genotypes = a.genotypes.spec()?;
    let pheno = a.samples.pheno.as_deref().context("--pheno is required")?;
    let mut config =
        scan_config(genotypes, pheno, a.samples.covar.as_deref(), &a.samples, &a.model, &a.exec, &a.output.out);
    let o = &a.output;
    config.output_mode = if let Some(k) = o.top_k {
        config.top_k = k;
        OutputMode::TopK
    } else if o.full {
        OutputMode::Full
    } else {
        OutputMode::Threshold
    };
    config.p_threshold = o.threshold;
    config.full_budget_bytes = o.full_budget_bytes;
    config.allow_over_budget = o.allow_over_budget;
    config.write_qc = o.write_qc;

    let summary = run_scan(&config)?;
    print_summary(&summary);
    Ok(ExitCode::SUCCESS)
}

pub fn simulate(a: SimulateArgs) -> Result<ExitCode> {
    let ds = simulate_cohort(&a.sim.spec(), &a.out)?;
    info!("wrote {}.bed/.bim/.fam", ds.prefix.display());
    info!("wrote {}", ds.phenotypes.display());
    if let Some(c) = &ds.covariates {
        info!("wrote {}", c.display());
    }
    info!("wrote {}", ds.truth.display());
    Ok(ExitCode::SUCCESS)
}

struct Inputs {
    genotypes: GenotypeSpec,
    pheno: PathBuf,
    covar: Option<PathBuf>,
}

pub fn validate(a: ValidateArgs) -> Result<ExitCode> {
    let scratch;
    let out = match &a.out {
        Some(p) => p.clone(),
        None => {
            scratch = tempfile::tempdir().context("creating a temporary directory")?;
            scratch.path().join("validate")
        }
    };

    let mut samples = a.samples.clone();
    let inputs = if a.genotypes.is_given() {
        Inputs {
            genotypes: a.genotypes.spec()?,
            pheno: a.samples.pheno.clone().context("--pheno is required with a genotype input")?,
            covar: a.samples.covar.clone(),
        }
    } else {
        ensure!(
            a.samples.pheno.is_none() && a.samples.covar.is_none(),
            "--pheno and --covar need a genotype input; without one a cohort is simulated"
        );
        let ds = simulate_cohort(&a.sim.spec(), &output_path(&out, ".sim"))?;
        info!("simulated cohort at {}", ds.prefix.display());
        samples.id_column = "IID".into();
        samples.delimiter = crate::args::Delimiter::Tab;
        Inputs { genotypes: ds.genotypes(), pheno: ds.phenotypes, covar: ds.covariates }
    };

    let engine = match &a.engine_output {
        Some(path) => read_assoc_tsv(path)?,
        None => {
            let mut config = scan_config(
                inputs.genotypes.clone(),
                &inputs.pheno,
                inputs.covar.as_deref(),
                &samples,
                &a.model,
                &a.exec,
                &out,
            );
            config.output_mode = OutputMode::Threshold;
            config.p_threshold = 1.0;
            let summary = run_scan(&config)?;
            info!("engine: {} tests in {:.3}s", summary.tests(), summary.wall_seconds);
            read_assoc_tsv(&OutputFiles::for_prefix(&out).results_tsv)?
        }
    };

    let options = a.model.options();
    if !options.include_intercept {
        warn!("the reference regression always includes an intercept");
    }
    let delim = samples.delimiter.char();
    let phenotypes = load_table(&inputs.pheno, &samples.id_column, delim)?;
    let covariates = inputs.covar.as_deref().map(|p| load_table(p, &samples.id_column, delim)).transpose()?;
    let keep = samples.keep.as_deref().map(read_id_list).transpose()?;
    let remove = samples.remove.as_deref().map(read_id_list).transpose()?;
    let started = Instant::now();
    let mut source = open_genotype_source(&inputs.genotypes)?;
    let oracle = reference_scan(
        source.as_mut(),
        &phenotypes,
        covariates.as_ref(),
        keep.as_deref(),
        remove.as_deref(),
        options.missing_policy,
        OracleLoop::SharedDesign,
    )?;
    info!("reference: {} fits in {:.3}s", oracle.len(), started.elapsed().as_secs_f64());

    let engine: Vec<KeyedResult> = engine.iter().map(KeyedResult::from).collect();
    let oracle: Vec<KeyedResult> = oracle.iter().map(KeyedResult::from).collect();
    let report = concordance_report(&engine, &oracle)?;
    eprint!("{}", report.to_text());
    let metrics = output_path(&out, ".concordance.txt");
    report.write_metrics(&metrics)?;
    if a.out.is_some() {
        info!("wrote {}", metrics.display());
    }

    let same_model = options.df_mode == DfMode::Adjusted && options.residualize_genotypes;
    let max_dt = a.max_abs_dt.or(same_model.then_some(match options.precision {
        Precision::F64 => EXACT_DT_F64,
        Precision::F32StoreF64Acc => EXACT_DT_F32,
    }));
    let mut ok = true;
    if report.pearson_neg_log10_p.is_nan() || report.pearson_neg_log10_p < a.min_pearson {
        eprintln!("FAIL pearson_neg_log10_p={} < {}", report.pearson_neg_log10_p, a.min_pearson);
        ok = false;
    }
    if let Some(tol) = max_dt {
        if report.max_abs_dt.is_nan() || report.max_abs_dt > tol {
            eprintln!("FAIL max_abs_dt={} > {tol}", report.max_abs_dt);
            ok = false;
        }
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(EXIT_VALIDATION_FAILED) })
}

pub fn bench(a: BenchArgs) -> Result<ExitCode> {
    ensure!(a.repeats >= 1, "--repeats must be at least 1");
    let dir = tempfile::tempdir().context("creating a temporary directory")?;
    let spec = SimSpec {
        seed: a.seed,
        n_samples: a.samples,
        n_markers: a.markers,
        n_phenotypes: a.phenotypes,
        n_covariates: a.covariates,
        ..SimSpec::default()
    };
    let started = Instant::now();
    let ds = simulate_cohort(&spec, &dir.path().join("cohort"))?;
    let simulate_seconds = started.elapsed().as_secs_f64();

    let samples = SampleArgs {
        pheno: None,
        covar: None,
        keep: None,
        remove: None,
        id_column: "IID".into(),
        delimiter: crate::args::Delimiter::Tab,
    };
    let mut best: Option<ScanSummary> = None;
    for i in 0..a.repeats {
        let config = scan_config(
            ds.genotypes(),
            &ds.phenotypes,
            ds.covariates.as_deref(),
            &samples,
            &a.model,
            &a.exec,
            &dir.path().join(format!("scan{i}")),
        );
        let s = run_scan(&config)?;
        info!("repeat {}: {:.3}s", i + 1, s.wall_seconds);
        if best.as_ref().map_or(true, |b| s.wall_seconds < b.wall_seconds) {
            best = Some(s);
        }
    }
    let s = best.expect("at least one repeat");
    let tests = s.tests();
    let rows = [
        ("n_samples", s.n_samples.to_string()),
        ("n_markers", s.n_markers.to_string()),
        ("n_phenotypes", s.phenotypes_scanned.to_string()),
        ("n_covariates", a.covariates.to_string()),
        ("precision", format!("{:?}", a.model.precision).to_lowercase()),
        ("batch_size", a.exec.batch_size.to_string()),
        ("workers", s.worker_count.to_string()),
        ("repeats", a.repeats.to_string()),
        ("simulate_seconds", simulate_seconds.to_string()),
        ("decode_seconds", s.decode_seconds.to_string()),
        ("prepare_seconds", s.prepare_seconds.to_string()),
        ("correlate_seconds", s.correlate_seconds.to_string()),
        ("stats_seconds", s.stats_seconds.to_string()),
        ("emit_seconds", s.emit_seconds.to_string()),
        ("wall_seconds", s.wall_seconds.to_string()),
        ("tests", tests.to_string()),
        ("tests_per_second", (tests as f64 / s.wall_seconds).to_string()),
    ];
    let mut out = std::io::stdout().lock();
    for (k, v) in rows {
        writeln!(out, "{k}={v}")?;
    }
    Ok(ExitCode::SUCCESS)
}

pub fn convert(a: ConvertArgs) -> Result<ExitCode> {
    ensure!(a.batch_size > 0, "--batch-size must be positive");
    let spec = a.genotypes.spec()?;
    let mut source = open_genotype_source(&spec)?;
    let ids = source.sample_ids().to_vec();
    let (n, m) = (source.n_samples(), source.n_markers());
    // Output always counts allele 1, as PLINK and dense inputs do.
    let flip = source.counted_allele() == CountedAllele::Allele2;

    let mut plink = match a.to {
        ConvertTarget::Plink => Some(PlinkWriter::create(&a.out, &ids)?),
        ConvertTarget::Npy => None,
    };
    let mut dense: Vec<f32> = match a.to {
        ConvertTarget::Npy => Vec::with_capacity(n * m),
        ConvertTarget::Plink => Vec::new(),
    };
    let mut rounded = 0usize;
    let mut row = vec![0f32; n];
    for (start, count) in plan_batches(m, a.batch_size) {
        let batch = source.read_marker_batch(start, count)?;
        for (marker, dosages) in batch.markers.iter().zip(batch.dosages.rows()) {
            for (dst, &d) in row.iter_mut().zip(dosages) {
                *dst = if flip { 2.0 - d } else { d };
            }
            if let Some(w) = plink.as_mut() {
                for d in row.iter_mut().filter(|d| !d.is_nan() && d.fract() != 0.0) {
                    if !a.round_dosages {
                        bail!(
                            "marker {} has non-integer dosage {d}; pass --round-dosages to write hard calls",
                            marker.id
                        );
                    }
                    *d = d.round();
                    rounded += 1;
                }
                w.write_marker(marker, &row)?;
            } else {
                dense.extend_from_slice(&row);
            }
        }
    }

    if let Some(w) = plink {
        w.finish()?;
        if rounded > 0 {
            warn!("rounded {rounded} non-integer dosages to hard calls");
        }
        info!("wrote {}.bed/.bim/.fam ({m} markers, {n} samples)", a.out.display());
    } else {
        let npy = output_path(&a.out, ".npy");
        write_npy(&npy, &Array2::from_shape_vec((m, n), dense)?)?;
        let ids_path = output_path(&a.out, ".samples.txt");
        std::fs::write(&ids_path, ids.iter().map(|s| format!("{s}\n")).collect::<String>())
            .with_context(|| format!("writing {}", ids_path.display()))?;
        info!("wrote {} ({m} x {n}) and {}", npy.display(), ids_path.display());
    }
    Ok(ExitCode::SUCCESS)
}
