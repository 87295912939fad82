//! Closed-population capture-recapture simulator.
//!
//! An algebra-free stand-in for the monodromy process: the population is
//! `{0, …, B-1}`, each loop applies a uniformly random permutation to the
//! known individuals, and each image is dropped independently with the
//! configured failure rate. The resulting [`LoopRecord`]s feed the same
//! census estimators as real runs, which lets Monte-Carlo experiments
//! check interval coverage and estimator error against a known truth.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::census::{chapman, lincoln_petersen, schnabel, Estimate, EstimatorKind};
use crate::monodromy::LoopRecord;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}

/// Configuration of one simulated capture-recapture process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// True population size B.
    pub population: usize,
    /// Number of loops to simulate.
    pub n_loops: usize,
    /// Probability that a tracked individual is lost in a loop.
    pub failure_rate: f64,
    /// Master seed; trials use independent streams derived from it.
    pub seed: u64,
    /// Individuals known before the first loop.
    pub initial_known: usize,
}

impl SimConfig {
    fn validate(&self) -> Result<(), SimError> {
        if self.population == 0 {
            return Err(SimError::InvalidConfig("population must be positive".into()));
        }
        if self.initial_known == 0 || self.initial_known > self.population {
            return Err(SimError::InvalidConfig(
                "initial_known must be in 1..=population".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.failure_rate) {
            return Err(SimError::InvalidConfig("failure_rate must be in [0, 1)".into()));
        }
        Ok(())
    }
}

fn simulate_with_rng(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Vec<LoopRecord> {
    let b = cfg.population;
    let mut known = vec![false; b];
    for k in known.iter_mut().take(cfg.initial_known) {
        *k = true;
    }
    let mut perm: Vec<usize> = (0..b).collect();
    let mut records = Vec::with_capacity(cfg.n_loops);
    for loop_index in 1..=cfg.n_loops {
        let start_ids: BTreeSet<usize> =
            known.iter().enumerate().filter(|(_, &k)| k).map(|(i, _)| i).collect();
        perm.shuffle(rng);
        let mut end_ids = BTreeSet::new();
        let mut n_failures = 0usize;
        for &i in &start_ids {
            let image = perm[i];
            if cfg.failure_rate > 0.0 && rng.gen::<f64>() < cfg.failure_rate {
                n_failures += 1;
            } else {
                end_ids.insert(image);
            }
        }
        for &i in &end_ids {
            known[i] = true;
        }
        records.push(LoopRecord::from_sets(loop_index, start_ids, end_ids, n_failures));
    }
    records
}

/// Runs one simulated process with the config's seed.
pub fn simulate_process(cfg: &SimConfig) -> Result<Vec<LoopRecord>, SimError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok(simulate_with_rng(cfg, &mut rng))
}

/// Per-loop aggregate over all trials of a coverage experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageRow {
    pub loop_index: usize,
    /// Trials whose estimate was defined at this loop.
    pub n_defined: usize,
    /// Fraction of defined trials whose 95% CI contains the population.
    /// NaN when no trial was defined.
    pub coverage: f64,
    /// Median of |β − B|/B over defined trials. NaN when none defined.
    pub median_rel_error: f64,
    /// Median over trials of the known fraction after this loop.
    pub frac_known: f64,
    /// Mean over trials of the per-loop overlap fraction #(S∩E)/#S.
    pub mean_overlap_frac: f64,
}

/// Coverage experiment output; one row per loop index.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub population: usize,
    pub n_trials: usize,
    pub estimator: EstimatorKind,
    pub rows: Vec<CoverageRow>,
}

impl CoverageReport {
    /// CSV with columns `loop_index,coverage,median_rel_error,frac_known`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("loop_index,coverage,median_rel_error,frac_known\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                row.loop_index, row.coverage, row.median_rel_error, row.frac_known
            ));
        }
        out
    }
}

fn median(sorted: &mut [f64]) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("rel errors are finite"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

struct TrialLoopOutcome {
    defined: bool,
    covers: bool,
    rel_error: f64,
    known_frac: f64,
    overlap_frac: f64,
}

/// Runs `n_trials` independent simulations and reports, per loop index,
/// how often the chosen estimator's CI covered the true population and how
/// far its point estimate was off. Coverage frequencies are meaningful
/// from roughly 100 trials up.
pub fn coverage_experiment(
    cfg: &SimConfig,
    n_trials: usize,
    estimator: EstimatorKind,
    window: usize,
) -> Result<CoverageReport, SimError> {
    cfg.validate()?;
    if n_trials == 0 {
        return Err(SimError::InvalidConfig("n_trials must be positive".into()));
    }
    if window == 0 {
        return Err(SimError::InvalidConfig("window must be positive".into()));
    }
    let b = cfg.population as f64;

    let trials: Vec<Vec<TrialLoopOutcome>> = (0..n_trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(trial as u64);
            let records = simulate_with_rng(cfg, &mut rng);
            let mut outcomes = Vec::with_capacity(records.len());
            for (k, rec) in records.iter().enumerate() {
                let est: Estimate = match estimator {
                    EstimatorKind::LincolnPetersen => lincoln_petersen(rec),
                    EstimatorKind::Chapman => chapman(rec),
                    EstimatorKind::Schnabel => {
                        schnabel(&records[..=k], window).expect("records nonempty")
                    }
                };
                let defined = est.beta.is_some();
                outcomes.push(TrialLoopOutcome {
                    defined,
                    covers: defined && est.ci_contains(b),
                    rel_error: est.beta.map_or(f64::NAN, |beta| (beta - b).abs() / b),
                    known_frac: (rec.n_start + rec.n_new) as f64 / b,
                    overlap_frac: rec.n_overlap as f64 / rec.n_start as f64,
                });
            }
            outcomes
        })
        .collect();

    let mut rows = Vec::with_capacity(cfg.n_loops);
    for k in 0..cfg.n_loops {
        let mut n_defined = 0usize;
        let mut n_covered = 0usize;
        let mut rel_errors = Vec::new();
        let mut known_fracs = Vec::new();
        let mut overlap_sum = 0.0;
        for trial in &trials {
            let o = &trial[k];
            if o.defined {
                n_defined += 1;
                if o.covers {
                    n_covered += 1;
                }
                rel_errors.push(o.rel_error);
            }
            known_fracs.push(o.known_frac);
            overlap_sum += o.overlap_frac;
        }
        rows.push(CoverageRow {
            loop_index: k + 1,
            n_defined,
            coverage: if n_defined == 0 {
                f64::NAN
            } else {
                n_covered as f64 / n_defined as f64
            },
            median_rel_error: median(&mut rel_errors),
            frac_known: median(&mut known_fracs),
            mean_overlap_frac: overlap_sum / trials.len() as f64,
        });
    }
    Ok(CoverageReport { population: cfg.population, n_trials, estimator, rows })
}
