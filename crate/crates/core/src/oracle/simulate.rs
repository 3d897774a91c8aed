//! Synthetic cohorts with known causal effects.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::engine::output_path;
use crate::error::{Error, Result};
use crate::genotype_io::{GenotypeSpec, MarkerRecord, PlinkWriter, MISSING};

#[derive(Debug, Clone, PartialEq)]
pub struct SimSpec {
    pub seed: u64,
    pub n_samples: usize,
    pub n_markers: usize,
    pub n_phenotypes: usize,
    pub n_covariates: usize,
    /// Fraction of markers with a nonzero effect, per phenotype.
    pub causal_fraction: f64,
    pub effect_sd: f64,
    pub noise_sd: f64,
    pub covariate_effect_sd: f64,
    pub genotype_missing_rate: f64,
    pub phenotype_missing_rate: f64,
    pub af_range: (f64, f64),
}

impl Default for SimSpec {
    fn default() -> Self {
        SimSpec {
            seed: 1,
            n_samples: 2000,
            n_markers: 20_000,
            n_phenotypes: 32,
            n_covariates: 3,
            causal_fraction: 0.001,
            effect_sd: 0.1,
            noise_sd: 1.0,
            covariate_effect_sd: 0.3,
            genotype_missing_rate: 0.0,
            phenotype_missing_rate: 0.0,
            af_range: (0.05, 0.5),
        }
    }
}

impl SimSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_samples == 0 || self.n_markers == 0 || self.n_phenotypes == 0 {
            return bad("samples, markers and phenotypes must all be at least 1".into());
        }
        for (name, rate) in [
            ("causal fraction", self.causal_fraction),
            ("genotype missing rate", self.genotype_missing_rate),
            ("phenotype missing rate", self.phenotype_missing_rate),
        ] {
            if !(0.0..1.0).contains(&rate) {
                return bad(format!("{name} {rate} is outside [0, 1)"));
            }
        }
        let (lo, hi) = self.af_range;
        if !(lo > 0.0 && lo <= hi && hi < 1.0) {
            return bad(format!("allele-frequency range ({lo}, {hi}) must lie inside (0, 1)"));
        }
        for (name, sd) in [
            ("effect sd", self.effect_sd),
            ("noise sd", self.noise_sd),
            ("covariate effect sd", self.covariate_effect_sd),
        ] {
            if !(sd >= 0.0 && sd.is_finite()) {
                return bad(format!("{name} {sd} must be finite and non-negative"));
            }
        }
        Ok(())
    }

    /// Causal markers per phenotype.
    pub fn causal_per_phenotype(&self) -> usize {
        (self.causal_fraction * self.n_markers as f64).round() as usize
    }
}

/// Paths of a simulated dataset.
#[derive(Debug, Clone)]
pub struct SimulatedDataset {
    pub prefix: PathBuf,
    pub phenotypes: PathBuf,
    pub covariates: Option<PathBuf>,
    pub truth: PathBuf,
}

impl SimulatedDataset {
    pub fn genotypes(&self) -> GenotypeSpec {
        GenotypeSpec::plink_prefix(&self.prefix)
    }
}

/// One causal (marker, phenotype, β) triple.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthEntry {
    pub marker: String,
    pub phenotype: String,
    pub beta: f64,
}

pub fn sample_id(i: usize) -> String {
    format!("S{i:06}")
}

pub fn phenotype_name(j: usize) -> String {
    format!("Y{j:04}")
}

pub fn marker_record(i: usize) -> MarkerRecord {
    MarkerRecord {
        chrom: (1 + i % 22).to_string(),
        id: format!("snp{i:07}"),
        pos: 10_000 + 137 * i as u64,
        allele1: "A".into(),
        allele2: "G".into(),
        source_index: i,
    }
}

// Independent streams so that changing one component leaves the others intact.
const STREAM_CAUSAL: u64 = 1;
const STREAM_GENOTYPES: u64 = 2;
const STREAM_COVARIATES: u64 = 3;
const STREAM_NOISE: u64 = 4;
const STREAM_MISSING: u64 = 5;
const STREAM_PHENOTYPE_MISSING: u64 = 6;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn normal(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("sd validated")
}

/// Writes `<prefix>.{bed,bim,fam}`, `<prefix>.pheno.tsv`, `<prefix>.covar.tsv`
/// (when there are covariates) and `<prefix>.truth.tsv`. Dosages count allele 1.
pub fn simulate_cohort(spec: &SimSpec, prefix: &Path) -> Result<SimulatedDataset> {
    spec.validate()?;
    if let Some(parent) = prefix.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let (n, m, p, c) = (spec.n_samples, spec.n_markers, spec.n_phenotypes, spec.n_covariates);
    let ids: Vec<String> = (0..n).map(sample_id).collect();

    // Causal sets: per marker, the phenotypes it affects and with what β.
    let mut causal_rng = rng(spec.seed, STREAM_CAUSAL);
    let k = spec.causal_per_phenotype();
    let mut effects: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    let effect = normal(spec.effect_sd);
    for j in 0..p {
        let mut chosen = sample(&mut causal_rng, m, k).into_vec();
        chosen.sort_unstable();
        for i in chosen {
            effects[i].push((j, effect.sample(&mut causal_rng)));
        }
    }

    let mut cov_rng = rng(spec.seed, STREAM_COVARIATES);
    let covariates = Array2::from_shape_fn((n, c), |_| normal(1.0).sample(&mut cov_rng));
    let gamma = Array2::from_shape_fn((c, p), |_| normal(spec.covariate_effect_sd).sample(&mut cov_rng));
    let mut y = covariates.dot(&gamma);

    let mut geno_rng = rng(spec.seed, STREAM_GENOTYPES);
    let mut miss_rng = rng(spec.seed, STREAM_MISSING);
    let mut writer = PlinkWriter::create(prefix, &ids)?;
    let mut dosages = vec![0f32; n];
    for (i, marker_effects) in effects.iter().enumerate() {
        let af = geno_rng.random_range(spec.af_range.0..=spec.af_range.1);
        for d in dosages.iter_mut() {
            *d = f32::from(u8::from(geno_rng.random::<f64>() < af) + u8::from(geno_rng.random::<f64>() < af));
        }
        for &(j, beta) in marker_effects {
            for (s, &d) in dosages.iter().enumerate() {
                y[[s, j]] += beta * f64::from(d);
            }
        }
        if spec.genotype_missing_rate > 0.0 {
            for d in dosages.iter_mut() {
                if miss_rng.random::<f64>() < spec.genotype_missing_rate {
                    *d = MISSING;
                }
            }
        }
        writer.write_marker(&marker_record(i), &dosages)?;
    }
    writer.finish()?;

    let mut noise_rng = rng(spec.seed, STREAM_NOISE);
    let noise = normal(spec.noise_sd);
    y.mapv_inplace(|v| v + noise.sample(&mut noise_rng));

    let names: Vec<String> = (0..p).map(phenotype_name).collect();
    let phenotypes = output_path(prefix, ".pheno.tsv");
    let mut pheno_miss_rng = rng(spec.seed, STREAM_PHENOTYPE_MISSING);
    write_table(&phenotypes, &ids, &names, &y, || {
        spec.phenotype_missing_rate > 0.0 && pheno_miss_rng.random::<f64>() < spec.phenotype_missing_rate
    })?;

    let covariate_path = if c > 0 {
        let path = output_path(prefix, ".covar.tsv");
        let names: Vec<String> = (0..c).map(|j| format!("C{}", j + 1)).collect();
        write_table(&path, &ids, &names, &covariates, || false)?;
        Some(path)
    } else {
        None
    };

    let truth = output_path(prefix, ".truth.tsv");
    let io = |e| Error::io(&truth, e);
    let mut w = BufWriter::new(File::create(&truth).map_err(io)?);
    writeln!(w, "MARKER\tPHENO\tBETA").map_err(io)?;
    for (i, marker_effects) in effects.iter().enumerate() {
        for &(j, beta) in marker_effects {
            writeln!(w, "{}\t{}\t{beta:?}", marker_record(i).id, names[j]).map_err(io)?;
        }
    }
    w.flush().map_err(io)?;

    Ok(SimulatedDataset { prefix: prefix.to_path_buf(), phenotypes, covariates: covariate_path, truth })
}

fn write_table(
    path: &Path,
    ids: &[String],
    names: &[String],
    values: &Array2<f64>,
    mut missing: impl FnMut() -> bool,
) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    write!(w, "IID").map_err(io)?;
    for name in names {
        write!(w, "\t{name}").map_err(io)?;
    }
    writeln!(w).map_err(io)?;
    for (s, id) in ids.iter().enumerate() {
        write!(w, "{id}").map_err(io)?;
        for j in 0..names.len() {
            if missing() {
                write!(w, "\tNA").map_err(io)?;
            } else {
                write!(w, "\t{:?}", values[[s, j]]).map_err(io)?;
            }
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_truth(path: &Path) -> Result<Vec<TruthEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some("MARKER\tPHENO\tBETA") {
        return Err(Error::format(path, "expected header MARKER PHENO BETA"));
    }
    lines
        .map(|line| {
            let f: Vec<&str> = line.split('\t').collect();
            match f.as_slice() {
                [marker, phenotype, beta] => Ok(TruthEntry {
                    marker: marker.to_string(),
                    phenotype: phenotype.to_string(),
                    beta: beta.parse().map_err(|_| Error::format(path, format!("bad BETA {beta:?}")))?,
                }),
                _ => Err(Error::format(path, format!("expected 3 fields: {line:?}"))),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SimSpec {
        SimSpec {
            n_samples: 30,
            n_markers: 40,
            n_phenotypes: 3,
            n_covariates: 2,
            causal_fraction: 0.1,
            ..SimSpec::default()
        }
    }

    #[test]
    fn validation() {
        small().validate().unwrap();
        for edit in [
            (|s: &mut SimSpec| s.n_markers = 0) as fn(&mut SimSpec),
            |s| s.genotype_missing_rate = 1.0,
            |s| s.af_range = (0.0, 0.5),
            |s| s.af_range = (0.4, 0.2),
            |s| s.noise_sd = -1.0,
        ] {
            let mut s = small();
            edit(&mut s);
            assert!(s.validate().is_err());
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let dir = tempfile::tempdir().unwrap();
        let a = simulate_cohort(&small(), &dir.path().join("a")).unwrap();
        let b = simulate_cohort(&small(), &dir.path().join("b")).unwrap();
        for ext in [".bed", ".bim", ".fam", ".pheno.tsv", ".covar.tsv", ".truth.tsv"] {
            let fa = std::fs::read(output_path(&a.prefix, ext)).unwrap();
            let fb = std::fs::read(output_path(&b.prefix, ext)).unwrap();
            assert_eq!(fa, fb, "{ext}");
        }
        let truth = read_truth(&a.truth).unwrap();
        assert_eq!(truth.len(), 3 * 4);
    }

    #[test]
    fn no_missing_values_at_zero_rates() {
        let dir = tempfile::tempdir().unwrap();
        let d = simulate_cohort(&small(), &dir.path().join("s")).unwrap();
        assert!(!std::fs::read_to_string(&d.phenotypes).unwrap().contains("NA"));
        let mut source = crate::genotype_io::open_genotype_source(&d.genotypes()).unwrap();
        let batch = source.read_marker_batch(0, 40).unwrap();
        assert!(batch.missing_count.iter().all(|&k| k == 0));
    }

    #[test]
    fn missing_rates_produce_sentinels() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SimSpec { genotype_missing_rate: 0.2, phenotype_missing_rate: 0.2, ..small() };
        let d = simulate_cohort(&spec, &dir.path().join("s")).unwrap();
        assert!(std::fs::read_to_string(&d.phenotypes).unwrap().contains("\tNA"));
        let mut source = crate::genotype_io::open_genotype_source(&d.genotypes()).unwrap();
        let batch = source.read_marker_batch(0, 40).unwrap();
        assert!(batch.missing_count.iter().sum::<usize>() > 0);
    }
}
