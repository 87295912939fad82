//! Capture-mark-recapture estimators for the total root count.
//!
//! Each monodromy loop is one recapture trial: the registry entries that
//! started the loop are the marked sample `S`, the surviving endpoints the
//! second sample `E`, and `S ∩ E` the recaptures. Three estimators of the
//! population size β are provided:
//!
//! * **Lincoln-Petersen**: `β = #S·#E / #(S∩E)` with
//!   `Var(β) = (#S+1)(#E+1)·#(S\E)·#(E\S) / ((#(S∩E)+1)²·(#(S∩E)+2))`
//!   and the 95% interval `β ± 1.96·√Var`. Undefined at zero recaptures.
//! * **Chapman**: `β = (#S+1)(#E+1)/(#(S∩E)+1) − 1`, the small-sample
//!   unbiased correction, with the same variance and interval. Defined
//!   even at zero recaptures, which is the point of using it.
//! * **Schnabel**: pools the last `window` loops,
//!   `β = Σ #S⁽ᵏ⁾·#E⁽ᵏ⁾ / Σ #(S⁽ᵏ⁾∩E⁽ᵏ⁾)`, with the variance stated for
//!   `β⁻¹`; the interval comes from inverting the `β⁻¹` interval, and when
//!   the lower `β⁻¹` endpoint is non-positive the upper bound on β is
//!   reported as unbounded rather than extrapolated.
//!
//! Undefined estimates and unbounded interval ends are values here, not
//! errors; zero recaptures is a routine early-loop outcome.

use thiserror::Error;

use crate::monodromy::LoopRecord;

/// z-score of the two-sided 95% confidence interval.
pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    LincolnPetersen,
    Chapman,
    Schnabel,
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EstimatorKind::LincolnPetersen => write!(f, "lincoln-petersen"),
            EstimatorKind::Chapman => write!(f, "chapman"),
            EstimatorKind::Schnabel => write!(f, "schnabel"),
        }
    }
}

/// One end of a confidence interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    Finite(f64),
    Unbounded,
}

impl Bound {
    pub fn finite(self) -> Option<f64> {
        match self {
            Bound::Finite(v) => Some(v),
            Bound::Unbounded => None,
        }
    }
}

/// A point estimate of the population size with its 95% interval.
///
/// `beta` is `None` when the estimator is undefined (zero recaptures for
/// Lincoln-Petersen and Schnabel). For Schnabel, `variance` is the
/// variance of `β⁻¹`, matching how its interval is constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub kind: EstimatorKind,
    pub beta: Option<f64>,
    pub variance: Option<f64>,
    pub ci_low: Bound,
    pub ci_high: Bound,
    pub loops_used: Vec<usize>,
}

impl Estimate {
    fn undefined(kind: EstimatorKind, loops_used: Vec<usize>) -> Self {
        Self {
            kind,
            beta: None,
            variance: None,
            ci_low: Bound::Unbounded,
            ci_high: Bound::Unbounded,
            loops_used,
        }
    }

    /// Whether the interval contains `value`, treating unbounded ends as
    /// infinite.
    pub fn ci_contains(&self, value: f64) -> bool {
        let low_ok = match self.ci_low {
            Bound::Finite(lo) => lo <= value,
            Bound::Unbounded => true,
        };
        let high_ok = match self.ci_high {
            Bound::Finite(hi) => value <= hi,
            Bound::Unbounded => true,
        };
        low_ok && high_ok
    }
}

fn lp_variance(n_start: usize, n_end: usize, n_overlap: usize) -> f64 {
    let s = n_start as f64;
    let e = n_end as f64;
    let o = n_overlap as f64;
    (s + 1.0) * (e + 1.0) * (s - o) * (e - o) / ((o + 1.0) * (o + 1.0) * (o + 2.0))
}

/// Lincoln-Petersen estimate from a single loop.
pub fn lincoln_petersen(rec: &LoopRecord) -> Estimate {
    let loops_used = vec![rec.loop_index];
    if rec.n_overlap == 0 {
        return Estimate::undefined(EstimatorKind::LincolnPetersen, loops_used);
    }
    let beta = (rec.n_start as f64) * (rec.n_end as f64) / (rec.n_overlap as f64);
    let variance = lp_variance(rec.n_start, rec.n_end, rec.n_overlap);
    let half = Z_95 * variance.sqrt();
    Estimate {
        kind: EstimatorKind::LincolnPetersen,
        beta: Some(beta),
        variance: Some(variance),
        ci_low: Bound::Finite(beta - half),
        ci_high: Bound::Finite(beta + half),
        loops_used,
    }
}

/// Chapman estimate from a single loop; defined even at zero recaptures.
pub fn chapman(rec: &LoopRecord) -> Estimate {
    let s = rec.n_start as f64;
    let e = rec.n_end as f64;
    let o = rec.n_overlap as f64;
    let beta = (s + 1.0) * (e + 1.0) / (o + 1.0) - 1.0;
    let variance = lp_variance(rec.n_start, rec.n_end, rec.n_overlap);
    let half = Z_95 * variance.sqrt();
    Estimate {
        kind: EstimatorKind::Chapman,
        beta: Some(beta),
        variance: Some(variance),
        ci_low: Bound::Finite(beta - half),
        ci_high: Bound::Finite(beta + half),
        loops_used: vec![rec.loop_index],
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CensusError {
    #[error("schnabel estimate needs at least one loop record")]
    EmptyRecords,
    #[error("window must be at least 1")]
    ZeroWindow,
}

/// Schnabel estimate pooled over the last `min(window, #recs)` records.
pub fn schnabel(recs: &[LoopRecord], window: usize) -> Result<Estimate, CensusError> {
    if window == 0 {
        return Err(CensusError::ZeroWindow);
    }
    if recs.is_empty() {
        return Err(CensusError::EmptyRecords);
    }
    let tail = &recs[recs.len().saturating_sub(window)..];
    let loops_used: Vec<usize> = tail.iter().map(|r| r.loop_index).collect();
    let sum_se: f64 = tail.iter().map(|r| (r.n_start as f64) * (r.n_end as f64)).sum();
    let sum_overlap: f64 = tail.iter().map(|r| r.n_overlap as f64).sum();
    if sum_overlap == 0.0 {
        return Ok(Estimate::undefined(EstimatorKind::Schnabel, loops_used));
    }
    let beta = sum_se / sum_overlap;
    let var_inv = sum_overlap / (sum_se * sum_se);
    let half = Z_95 * var_inv.sqrt();
    let inv = 1.0 / beta;
    let ci_low = Bound::Finite(1.0 / (inv + half));
    let ci_high = if inv - half > 0.0 {
        Bound::Finite(1.0 / (inv - half))
    } else {
        Bound::Unbounded
    };
    Ok(Estimate {
        kind: EstimatorKind::Schnabel,
        beta: Some(beta),
        variance: Some(var_inv),
        ci_low,
        ci_high,
        loops_used,
    })
}

/// Stopping policy configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopConfig {
    /// Number of trailing loops that must all yield nothing new.
    pub consecutive_no_new: usize,
    /// Hard budget on the number of loops.
    pub max_loops: usize,
}

impl Default for StopConfig {
    fn default() -> Self {
        Self { consecutive_no_new: 3, max_loops: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    RunTraceTest,
    Abort,
}

/// Decides whether to keep looping, hand over to the trace test, or give
/// up on the loop budget.
///
/// The trace test fires when the last `consecutive_no_new` loops all found
/// nothing new and at least one of them completed without path failures
/// (so a full, clean permutation of the registry was observed).
pub fn stopping_decision(recs: &[LoopRecord], cfg: &StopConfig) -> StopDecision {
    assert!(cfg.consecutive_no_new > 0 && cfg.max_loops > 0);
    if recs.len() >= cfg.consecutive_no_new {
        let tail = &recs[recs.len() - cfg.consecutive_no_new..];
        let all_stale = tail.iter().all(|r| r.n_new == 0);
        let one_clean = tail.iter().any(|r| r.n_failures == 0);
        if all_stale && one_clean {
            return StopDecision::RunTraceTest;
        }
    }
    if recs.len() >= cfg.max_loops {
        return StopDecision::Abort;
    }
    StopDecision::Continue
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    /// Fabricates a record with the given counts; sets are synthesized to
    /// match so the count identities hold.
    pub(crate) fn mk_record(
        loop_index: usize,
        n_start: usize,
        n_end: usize,
        n_overlap: usize,
    ) -> LoopRecord {
        assert!(n_end <= n_start && n_overlap <= n_end);
        let start_ids: BTreeSet<usize> = (0..n_start).collect();
        let end_ids: BTreeSet<usize> = (0..n_overlap)
            .chain(n_start..n_start + (n_end - n_overlap))
            .collect();
        LoopRecord {
            loop_index,
            start_ids,
            end_ids,
            n_start,
            n_end,
            n_overlap,
            n_new: n_end - n_overlap,
            n_failures: n_start - n_end,
        }
    }

    #[test]
    fn lp_complete_recapture_is_exact() {
        for n in [1usize, 5, 40] {
            let est = lincoln_petersen(&mk_record(1, n, n, n));
            assert_eq!(est.beta, Some(n as f64));
            assert_eq!(est.variance, Some(0.0));
            assert_eq!(est.ci_low, Bound::Finite(n as f64));
            assert_eq!(est.ci_high, Bound::Finite(n as f64));
        }
    }

    #[test]
    fn lp_worked_numbers() {
        let est = lincoln_petersen(&mk_record(1, 10, 10, 5));
        let beta = est.beta.unwrap();
        assert!((beta - 20.0).abs() < 1e-12);
        // (11·11·5·5)/(6²·7) = 3025/252
        let var = est.variance.unwrap();
        assert!((var - 3025.0 / 252.0).abs() < 1e-9);
        let half = Z_95 * (3025.0_f64 / 252.0).sqrt();
        assert!((est.ci_low.finite().unwrap() - (20.0 - half)).abs() < 1e-9);
        assert!((est.ci_high.finite().unwrap() - (20.0 + half)).abs() < 1e-9);
        assert!((est.ci_low.finite().unwrap() - 13.209).abs() < 1e-3);
        assert!((est.ci_high.finite().unwrap() - 26.791).abs() < 1e-3);
    }

    #[test]
    fn lp_zero_recapture_is_undefined() {
        let est = lincoln_petersen(&mk_record(1, 10, 9, 0));
        assert_eq!(est.beta, None);
        assert_eq!(est.ci_low, Bound::Unbounded);
        assert_eq!(est.ci_high, Bound::Unbounded);
        assert!(est.ci_contains(1e12));
    }

    #[test]
    fn chapman_worked_numbers() {
        let est = chapman(&mk_record(1, 7, 7, 7));
        assert!((est.beta.unwrap() - 7.0).abs() < 1e-12);

        let est = chapman(&mk_record(1, 10, 10, 5));
        assert!((est.beta.unwrap() - (121.0 / 6.0 - 1.0)).abs() < 1e-12);

        let est = chapman(&mk_record(1, 10, 9, 0));
        assert!((est.beta.unwrap() - 109.0).abs() < 1e-12);
        assert!(est.ci_low.finite().is_some() && est.ci_high.finite().is_some());
    }

    #[test]
    fn schnabel_worked_numbers() {
        let single = schnabel(&[mk_record(1, 10, 10, 5)], 1).unwrap();
        let lp = lincoln_petersen(&mk_record(1, 10, 10, 5));
        assert_eq!(single.beta, lp.beta);

        let recs = vec![mk_record(1, 10, 10, 5), mk_record(2, 15, 15, 9)];
        let est = schnabel(&recs, 2).unwrap();
        assert!((est.beta.unwrap() - 325.0 / 14.0).abs() < 1e-9);
        assert_eq!(est.loops_used, vec![1, 2]);

        let stale = vec![mk_record(1, 4, 4, 0), mk_record(2, 4, 3, 0)];
        let est = schnabel(&stale, 3).unwrap();
        assert_eq!(est.beta, None);

        assert_eq!(schnabel(&[], 3), Err(CensusError::EmptyRecords));
    }

    #[test]
    fn schnabel_upper_bound_unbounded_when_inverse_crosses_zero() {
        // (10,10,1): β⁻¹ = 0.01, sd = 0.01, so β⁻¹ − 1.96·sd < 0.
        let est = schnabel(&[mk_record(1, 10, 10, 1)], 1).unwrap();
        assert_eq!(est.ci_high, Bound::Unbounded);
        assert!(est.ci_low.finite().unwrap() > 0.0);
        assert!(est.ci_contains(1e9));
    }

    #[test]
    fn schnabel_window_takes_trailing_records() {
        let recs = vec![
            mk_record(1, 100, 100, 1),
            mk_record(2, 10, 10, 5),
            mk_record(3, 15, 15, 9),
        ];
        let est = schnabel(&recs, 2).unwrap();
        assert_eq!(est.loops_used, vec![2, 3]);
        assert!((est.beta.unwrap() - 325.0 / 14.0).abs() < 1e-9);
    }

    #[test]
    fn stopping_examples() {
        let cfg = StopConfig { consecutive_no_new: 3, max_loops: 200 };
        assert_eq!(stopping_decision(&[], &cfg), StopDecision::Continue);

        let stale: Vec<_> = (1..=3).map(|i| mk_record(i, 5, 5, 5)).collect();
        assert_eq!(stopping_decision(&stale, &cfg), StopDecision::RunTraceTest);

        let mut with_new = stale.clone();
        with_new.push(mk_record(4, 5, 5, 3));
        with_new.last_mut().unwrap().n_new = 2;
        with_new.last_mut().unwrap().n_overlap = 3;
        assert_eq!(stopping_decision(&with_new, &cfg), StopDecision::Continue);

        // All stale but every loop had failures: keep going.
        let flaky: Vec<_> = (1..=3).map(|i| mk_record(i, 5, 4, 4)).collect();
        assert_eq!(stopping_decision(&flaky, &cfg), StopDecision::Continue);

        let tight = StopConfig { consecutive_no_new: 3, max_loops: 2 };
        let two: Vec<_> = (1..=2).map(|i| mk_record(i, 5, 5, 3)).collect();
        assert_eq!(stopping_decision(&two, &tight), StopDecision::Abort);
    }

    #[test]
    fn trace_test_takes_precedence_over_abort() {
        let cfg = StopConfig { consecutive_no_new: 2, max_loops: 2 };
        let stale: Vec<_> = (1..=2).map(|i| mk_record(i, 5, 5, 5)).collect();
        assert_eq!(stopping_decision(&stale, &cfg), StopDecision::RunTraceTest);
    }
}
