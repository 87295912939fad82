#![allow(dead_code)] // each test binary uses its own subset

//! Shared fixtures and independent oracles for the integration suites.
//!
//! Everything here is deliberately independent of the library internals it
//! checks: the Jacobian oracle uses central finite differences on
//! `evaluate`, and the winding oracle samples the actual tracked path.

use std::collections::BTreeSet;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rootcensus::linalg::CMat;
use rootcensus::monodromy::{Loop, LoopRecord};
use rootcensus::polysys::{Monomial, ParameterizedSystem};

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub const X2_MINUS_P: &str = r#"{
    "vars": ["x"], "params": ["p"],
    "polys": [[{"c": [1.0, 0.0], "v": {"x": 2}},
               {"c": [-1.0, 0.0], "p": {"p": 1}}]]
}"#;

pub const PPLUS1_X2_MINUS_P: &str = r#"{
    "vars": ["x"], "params": ["p"],
    "polys": [[{"c": [1.0, 0.0], "v": {"x": 2}, "p": {"p": 1}},
               {"c": [1.0, 0.0], "v": {"x": 2}},
               {"c": [-1.0, 0.0], "p": {"p": 1}}]]
}"#;

pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im)
}

/// Complex number uniform in the closed unit disk.
pub fn unit_disk<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let r = rng.gen::<f64>().sqrt();
    let theta = rng.gen::<f64>() * std::f64::consts::TAU;
    Complex64::new(r * theta.cos(), r * theta.sin())
}

/// Random sparse system with coefficients of magnitude at most one.
pub fn random_sparse_system<R: Rng + ?Sized>(
    rng: &mut R,
    n_vars: usize,
    n_params: usize,
    max_terms: usize,
    max_exp: u32,
) -> ParameterizedSystem {
    let var_names: Vec<String> = (0..n_vars).map(|i| format!("x{i}")).collect();
    let param_names: Vec<String> = (0..n_params).map(|k| format!("p{k}")).collect();
    let polys: Vec<Vec<Monomial>> = (0..n_vars)
        .map(|_| {
            let n_terms = rng.gen_range(1..=max_terms);
            (0..n_terms)
                .map(|_| {
                    let vexp: Vec<(usize, u32)> = (0..n_vars)
                        .map(|i| (i, rng.gen_range(0..=max_exp)))
                        .collect();
                    let pexp: Vec<(usize, u32)> = (0..n_params)
                        .map(|k| (k, rng.gen_range(0..=max_exp)))
                        .collect();
                    Monomial::new(unit_disk(rng), vexp, pexp)
                })
                .collect()
        })
        .collect();
    ParameterizedSystem::new(var_names, param_names, polys).expect("generated system is valid")
}

/// Random dense quadratic system `q_i(x) + p_i` with one parameter per
/// polynomial, so fabrication always succeeds.
pub fn random_quadratic_with_offset_params<R: Rng + ?Sized>(
    rng: &mut R,
    n_vars: usize,
) -> ParameterizedSystem {
    let var_names: Vec<String> = (0..n_vars).map(|i| format!("x{i}")).collect();
    let param_names: Vec<String> = (0..n_vars).map(|k| format!("p{k}")).collect();
    let polys: Vec<Vec<Monomial>> = (0..n_vars)
        .map(|row| {
            let mut terms = Vec::new();
            for i in 0..n_vars {
                for j in i..n_vars {
                    terms.push(Monomial::new(unit_disk(rng), [(i, 1), (j, 1)], []));
                }
                terms.push(Monomial::new(unit_disk(rng), [(i, 1)], []));
            }
            terms.push(Monomial::new(unit_disk(rng), [], []));
            terms.push(Monomial::new(c(1.0, 0.0), [], [(row, 1)]));
            terms
        })
        .collect();
    ParameterizedSystem::new(var_names, param_names, polys).expect("generated system is valid")
}

/// Central finite differences of `evaluate`, the oracle for the analytic
/// Jacobian. Perturbs along the real axis, which matches the complex
/// derivative for polynomial (analytic) systems.
pub fn fd_jacobian(
    sys: &ParameterizedSystem,
    x: &[Complex64],
    p: &[Complex64],
    h: f64,
) -> (CMat, CMat) {
    let n = sys.n_vars();
    let np = sys.n_params();
    let mut jx = CMat::zeros(n, n);
    let mut jp = CMat::zeros(n, np);
    for j in 0..n {
        let mut plus = x.to_vec();
        plus[j] += c(h, 0.0);
        let mut minus = x.to_vec();
        minus[j] -= c(h, 0.0);
        let fp = sys.evaluate(&plus, p).unwrap();
        let fm = sys.evaluate(&minus, p).unwrap();
        for i in 0..n {
            jx.set(i, j, (fp[i] - fm[i]) / (2.0 * h));
        }
    }
    for k in 0..np {
        let mut plus = p.to_vec();
        plus[k] += c(h, 0.0);
        let mut minus = p.to_vec();
        minus[k] -= c(h, 0.0);
        let fp = sys.evaluate(x, &plus).unwrap();
        let fm = sys.evaluate(x, &minus).unwrap();
        for i in 0..n {
            jp.set(i, k, (fp[i] - fm[i]) / (2.0 * h));
        }
    }
    (jx, jp)
}

/// Winding number of the loop's actual tracked path (including the
/// gamma-trick arcs) around a point in a one-parameter plane, by dense
/// sampling and argument accumulation.
pub fn winding_number(lp: &Loop, center: Complex64) -> i64 {
    assert_eq!(lp.base().len(), 1, "winding needs a one-parameter loop");
    let mut total = 0.0f64;
    for seg in lp.segments() {
        let samples = 512;
        let mut prev = seg.at(0.0)[0] - center;
        for i in 1..=samples {
            let cur = seg.at(i as f64 / samples as f64)[0] - center;
            total += (cur / prev).arg();
            prev = cur;
        }
    }
    (total / std::f64::consts::TAU).round() as i64
}

/// Fabricates a consistent record from bare counts (`n_end <= n_start`,
/// `n_overlap <= n_end`); sets are synthesized to match.
pub fn mk_record(loop_index: usize, n_start: usize, n_end: usize, n_overlap: usize) -> LoopRecord {
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
