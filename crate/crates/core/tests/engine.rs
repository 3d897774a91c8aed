//! End-to-end scans over simulated cohorts on disk.

mod common;

use std::collections::HashSet;
use std::path::Path;

use panelgwas::engine::{read_assoc_tsv, read_full_matrix, OutputFiles, FULL_MAGIC, TSV_HEADER};
use panelgwas::oracle::{read_truth, simulate_cohort, SimSpec, SimulatedDataset};
use panelgwas::{run_scan, DfMode, Error, OutputMode, Precision, ScanConfig};

fn small_spec(seed: u64) -> SimSpec {
    SimSpec {
        seed,
        n_samples: 300,
        n_markers: 400,
        n_phenotypes: 6,
        n_covariates: 2,
        causal_fraction: 0.01,
        effect_sd: 0.5,
        ..SimSpec::default()
    }
}

fn simulate(dir: &Path, spec: &SimSpec) -> SimulatedDataset {
    simulate_cohort(spec, &dir.join("cohort")).unwrap()
}

fn config(data: &SimulatedDataset, out: &Path) -> ScanConfig {
    let mut c = ScanConfig::new(data.genotypes(), &data.phenotypes, out);
    c.covariate_path = data.covariates.clone();
    c.worker_count = 2;
    c.batch_size = 64;
    c
}

#[test]
fn threshold_scan_writes_filtered_records_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), &small_spec(5));
    let out = dir.path().join("res");
    let mut cfg = config(&data, &out);
    cfg.p_threshold = 1e-3;
    let summary = run_scan(&cfg).unwrap();
    let files = OutputFiles::for_prefix(&out);

    let text = std::fs::read_to_string(&files.results_tsv).unwrap();
    assert!(text.starts_with(TSV_HEADER));
    assert!(text.ends_with('\n'));
    let records = read_assoc_tsv(&files.results_tsv).unwrap();
    assert_eq!(records.len(), summary.records_emitted);
    assert!(records.iter().all(|r| r.p <= 1e-3 && r.df == 298.0 && r.n == 300));
    assert_eq!(summary.markers_scanned + summary.markers_skipped(), summary.n_markers);
    assert_eq!(summary.n_markers, 400);
    assert_eq!(summary.covariate_rank, 3);

    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&files.summary_json).unwrap()).unwrap();
    assert_eq!(json["n_markers"], 400);
    assert_eq!(json["phenotypes_scanned"], 6);
}

#[test]
fn strong_effects_are_recovered_by_top_k() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SimSpec { n_samples: 1000, effect_sd: 2.0, noise_sd: 0.5, af_range: (0.2, 0.5), ..small_spec(9) };
    let data = simulate(dir.path(), &spec);
    let out = dir.path().join("top");
    let mut cfg = config(&data, &out);
    cfg.output_mode = OutputMode::TopK;
    cfg.top_k = spec.causal_per_phenotype();
    run_scan(&cfg).unwrap();
    let records = read_assoc_tsv(&OutputFiles::for_prefix(&out).results_tsv).unwrap();
    assert_eq!(records.len(), 6 * spec.causal_per_phenotype());
    let hits: HashSet<(String, String)> = records.iter().map(|r| (r.id.clone(), r.phenotype.clone())).collect();
    let truth = read_truth(&data.truth).unwrap();
    let strong: Vec<_> = truth.iter().filter(|t| t.beta.abs() >= 0.5).collect();
    assert!(!strong.is_empty());
    for t in strong {
        assert!(hits.contains(&(t.marker.clone(), t.phenotype.clone())), "missed {t:?}");
    }
}

#[test]
fn full_matrix_matches_collected_t() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), &small_spec(13));
    let out = dir.path().join("full");
    let mut cfg = config(&data, &out);
    cfg.output_mode = OutputMode::Full;
    cfg.model.precision = Precision::F64;
    run_scan(&cfg).unwrap();
    let files = OutputFiles::for_prefix(&out);
    let bytes = std::fs::read(&files.full_bin).unwrap();
    assert_eq!(&bytes[..16], FULL_MAGIC);
    let full = read_full_matrix(&files.full_bin).unwrap();
    assert_eq!(full.element_bytes, 8);
    assert_eq!(full.t.dim(), (400, 6));
    let phenos = std::fs::read_to_string(&files.phenotypes_txt).unwrap();
    assert_eq!(phenos.lines().count(), 6);
    let markers = std::fs::read_to_string(&files.markers_tsv).unwrap();
    assert_eq!(markers.lines().count(), 401);

    cfg.output_mode = OutputMode::Threshold;
    cfg.p_threshold = 1.0;
    cfg.out = dir.path().join("all");
    run_scan(&cfg).unwrap();
    let names: Vec<&str> = phenos.lines().collect();
    for r in read_assoc_tsv(&OutputFiles::for_prefix(&cfg.out).results_tsv).unwrap() {
        let i: usize = r.id.trim_start_matches("snp").parse().unwrap();
        let j = names.iter().position(|n| *n == r.phenotype).unwrap();
        assert_eq!(full.t[[i, j]].to_bits(), r.t.to_bits());
    }
}

#[test]
fn full_mode_respects_budget() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), &small_spec(2));
    let mut cfg = config(&data, &dir.path().join("full"));
    cfg.output_mode = OutputMode::Full;
    cfg.full_budget_bytes = 1000;
    assert!(matches!(run_scan(&cfg), Err(Error::Config(_))));
    cfg.allow_over_budget = true;
    run_scan(&cfg).unwrap();
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), &small_spec(21));
    for mode in [OutputMode::Threshold, OutputMode::TopK, OutputMode::Full] {
        let mut outputs = Vec::new();
        for (k, workers) in [1, 3, 3].into_iter().enumerate() {
            let mut cfg = config(&data, &dir.path().join(format!("run{k}")));
            cfg.output_mode = mode;
            cfg.p_threshold = 0.05;
            cfg.worker_count = workers;
            cfg.model.precision = Precision::F64;
            run_scan(&cfg).unwrap();
            let f = OutputFiles::for_prefix(&cfg.out);
            let path = if mode == OutputMode::Full { f.full_bin } else { f.results_tsv };
            outputs.push(std::fs::read(path).unwrap());
        }
        assert!(outputs.windows(2).all(|w| w[0] == w[1]), "{mode:?}");
    }
}

#[test]
fn keep_and_remove_lists_shrink_the_sample() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), &small_spec(4));
    let keep = dir.path().join("keep.txt");
    let remove = dir.path().join("remove.txt");
    let ids: Vec<String> = (0..200).map(panelgwas::oracle::simulate::sample_id).collect();
    std::fs::write(&keep, ids.join("\n")).unwrap();
    std::fs::write(&remove, "S000000\nS000001\n").unwrap();
    let mut cfg = config(&data, &dir.path().join("sub"));
    cfg.keep_path = Some(keep);
    cfg.remove_path = Some(remove);
    let s = run_scan(&cfg).unwrap();
    assert_eq!(s.n_samples, 198);
    assert_eq!(s.samples_removed, 2);
    assert_eq!(s.samples_not_keep_listed, 100);
    assert_eq!(s.df, 196.0);
}

#[test]
fn adjusted_df_counts_covariates() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), &small_spec(6));
    let mut cfg = config(&data, &dir.path().join("adj"));
    cfg.model.df_mode = DfMode::Adjusted;
    let s = run_scan(&cfg).unwrap();
    assert_eq!(s.df, 300.0 - 3.0 - 1.0);
}

#[test]
fn qc_file_lists_skipped_markers_and_phenotypes() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SimSpec { af_range: (0.001, 0.002), n_samples: 50, ..small_spec(8) };
    let data = simulate(dir.path(), &spec);
    let pheno = std::fs::read_to_string(&data.phenotypes).unwrap();
    let with_constant: String = pheno
        .lines()
        .enumerate()
        .map(|(i, l)| if i == 0 { format!("{l}\tCONST\n") } else { format!("{l}\t3.5\n") })
        .collect();
    std::fs::write(&data.phenotypes, with_constant).unwrap();
    let mut cfg = config(&data, &dir.path().join("qc"));
    cfg.write_qc = true;
    let s = run_scan(&cfg).unwrap();
    assert!(s.markers_skipped_monomorphic > 0);
    assert_eq!(s.phenotypes_skipped, 1);
    let qc = std::fs::read_to_string(OutputFiles::for_prefix(&cfg.out).qc_tsv).unwrap();
    assert_eq!(qc.lines().filter(|l| l.ends_with("\tmonomorphic")).count(), s.markers_skipped_monomorphic);
    assert!(qc.contains("phenotype\t.\tCONST\t.\tzero_variance"));
}

#[test]
fn missing_inputs_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), &small_spec(3));
    let mut cfg = config(&data, &dir.path().join("x"));
    cfg.phenotype_path = dir.path().join("nope.tsv");
    assert!(matches!(run_scan(&cfg), Err(Error::Io { .. })));
    let empty = dir.path().join("empty.tsv");
    std::fs::write(&empty, "IID\n").unwrap();
    cfg.phenotype_path = empty;
    assert!(run_scan(&cfg).is_err());
}
