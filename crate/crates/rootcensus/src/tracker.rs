//! Numerical continuation of one solution along a parameter segment.
//!
//! A [`SegmentPath`] carries the Möbius reparameterization
//! `p(t) = ((1-t)·γ_a·a + t·γ_b·b) / ((1-t)·γ_a + t·γ_b)` of the straight
//! segment from `a` to `b`; with random unit-modulus gammas the path avoids
//! the discriminant with probability one. [`track_segment`] follows one
//! solution along the path with an Euler predictor on the Davidenko system
//! `J_x·ẋ = -J_p·ṗ` and a fixed-`t` Newton corrector, halving the step on
//! corrector failure and doubling it after three consecutive accepts.
//!
//! Tracking is heuristic: paths may diverge, stall, or end at a singular
//! point, and every such outcome is reported as a non-`Success`
//! [`PathStatus`] rather than an error.

use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{inf_norm, solve};
use crate::polysys::ParameterizedSystem;

/// Points farther from the origin than this are treated as diverging.
pub const DIVERGENCE_RADIUS: f64 = 1e10;

/// Newton iterations allowed for the endpoint refinement at `t = 1`.
///
/// Kept small on purpose: a simple root converges quadratically in two or
/// three steps, while a singular endpoint contracts only linearly and runs
/// out of budget, which is how `SingularEndpoint` is detected.
const ENDPOINT_REFINE_ITERS: u32 = 6;

/// When the step underflows with `1 - t` below this bound, the failure is
/// attributed to the endpoint rather than the path interior.
const NEAR_END: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SegmentError {
    #[error("gamma constants must be nonzero")]
    ZeroGamma,
    #[error("segment endpoints have mismatched lengths ({a} vs {b})")]
    LengthMismatch { a: usize, b: usize },
    #[error("reparameterization denominator vanishes on the segment")]
    DenominatorVanishes,
}

/// One edge of a monodromy loop: a straight parameter segment with the
/// gamma-trick Möbius reparameterization built in.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentPath {
    a: Vec<Complex64>,
    b: Vec<Complex64>,
    gamma_a: Complex64,
    gamma_b: Complex64,
}

impl SegmentPath {
    pub fn new(
        a: Vec<Complex64>,
        b: Vec<Complex64>,
        gamma_a: Complex64,
        gamma_b: Complex64,
    ) -> Result<Self, SegmentError> {
        if a.len() != b.len() {
            return Err(SegmentError::LengthMismatch { a: a.len(), b: b.len() });
        }
        if gamma_a == Complex64::new(0.0, 0.0) || gamma_b == Complex64::new(0.0, 0.0) {
            return Err(SegmentError::ZeroGamma);
        }
        // The denominator (1-t)γ_a + tγ_b is linear in t, so its minimum
        // modulus over [0,1] is the distance from 0 to the segment [γ_a, γ_b].
        let d = gamma_b - gamma_a;
        let min_mod = if d.norm_sqr() == 0.0 {
            gamma_a.norm()
        } else {
            let t = ((-gamma_a).re * d.re + (-gamma_a).im * d.im) / d.norm_sqr();
            let t = t.clamp(0.0, 1.0);
            (gamma_a + d * t).norm()
        };
        if min_mod <= 1e-9 * gamma_a.norm().max(gamma_b.norm()) {
            return Err(SegmentError::DenominatorVanishes);
        }
        Ok(Self { a, b, gamma_a, gamma_b })
    }

    pub fn start(&self) -> &[Complex64] {
        &self.a
    }

    pub fn end(&self) -> &[Complex64] {
        &self.b
    }

    /// The reversed segment, exactly retracing `p(1-t)`.
    pub fn reversed(&self) -> SegmentPath {
        SegmentPath {
            a: self.b.clone(),
            b: self.a.clone(),
            gamma_a: self.gamma_b,
            gamma_b: self.gamma_a,
        }
    }

    /// p(t) for t in [0, 1]; p(0) = a and p(1) = b exactly.
    pub fn at(&self, t: f64) -> Vec<Complex64> {
        if t == 0.0 {
            return self.a.clone();
        }
        if t == 1.0 {
            return self.b.clone();
        }
        let wa = self.gamma_a * (1.0 - t);
        let wb = self.gamma_b * t;
        let denom = wa + wb;
        self.a
            .iter()
            .zip(&self.b)
            .map(|(pa, pb)| (wa * pa + wb * pb) / denom)
            .collect()
    }

    /// dp/dt at t.
    pub fn derivative(&self, t: f64) -> Vec<Complex64> {
        let wa = self.gamma_a * (1.0 - t);
        let wb = self.gamma_b * t;
        let denom = wa + wb;
        let ddenom = self.gamma_b - self.gamma_a;
        self.a
            .iter()
            .zip(&self.b)
            .map(|(pa, pb)| {
                let num = wa * pa + wb * pb;
                let dnum = self.gamma_b * pb - self.gamma_a * pa;
                (dnum - num / denom * ddenom) / denom
            })
            .collect()
    }
}

/// Step-size and tolerance knobs for [`track_segment`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrackOptions {
    pub step_initial: f64,
    pub step_min: f64,
    pub step_max: f64,
    pub corrector_tol: f64,
    pub max_corrector_iters: u32,
    pub max_steps: u32,
    pub endpoint_tol: f64,
}

impl Default for TrackOptions {
    fn default() -> Self {
        Self {
            step_initial: 0.1,
            step_min: 1e-14,
            step_max: 0.5,
            corrector_tol: 1e-10,
            max_corrector_iters: 3,
            max_steps: 10_000,
            endpoint_tol: 1e-10,
        }
    }
}

impl TrackOptions {
    fn assert_valid(&self) {
        assert!(
            0.0 < self.step_min
                && self.step_min <= self.step_initial
                && self.step_initial <= self.step_max
                && self.step_max <= 1.0,
            "step sizes must satisfy 0 < step_min <= step_initial <= step_max <= 1"
        );
        assert!(self.corrector_tol > 0.0 && self.endpoint_tol > 0.0);
    }
}

/// Terminal state of one tracked path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathStatus {
    Success,
    Diverged,
    StepLimitReached,
    SingularEndpoint,
}

/// Outcome of tracking one solution along one segment. `endpoint` is
/// present exactly when `status` is `Success`, in which case it satisfies
/// `‖F(endpoint; p(1))‖∞ < endpoint_tol`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    pub status: PathStatus,
    pub endpoint: Option<Vec<Complex64>>,
    pub steps_taken: u32,
}

impl PathResult {
    fn failed(status: PathStatus, steps_taken: u32) -> Self {
        Self { status, endpoint: None, steps_taken }
    }
}

/// Newton iteration for F(·; p) = 0 from `x0`.
///
/// Converged means both `‖F(x)‖∞ < tol` and the last update satisfied
/// `‖Δx‖∞ < tol·(1 + ‖x‖∞)`. A singular Jacobian or the iteration budget
/// running out yields `converged = false` with the best iterate so far.
pub fn newton_refine(
    sys: &ParameterizedSystem,
    x0: &[Complex64],
    p: &[Complex64],
    tol: f64,
    max_iters: u32,
) -> (Vec<Complex64>, bool) {
    debug_assert_eq!(x0.len(), sys.n_vars());
    debug_assert_eq!(p.len(), sys.n_params());
    let mut x = x0.to_vec();
    for _ in 0..max_iters {
        let f = sys.eval_unchecked(&x, p);
        let (jx, _) = sys.jacobian_unchecked(&x, p);
        let rhs: Vec<Complex64> = f.iter().map(|v| -v).collect();
        let delta = match solve(&jx, &rhs) {
            Some(d) => d,
            None => return (x, false),
        };
        for (xi, di) in x.iter_mut().zip(&delta) {
            *xi += di;
        }
        if inf_norm(&x) > DIVERGENCE_RADIUS {
            return (x, false);
        }
        let residual = inf_norm(&sys.eval_unchecked(&x, p));
        if residual < tol && inf_norm(&delta) < tol * (1.0 + inf_norm(&x)) {
            return (x, true);
        }
    }
    (x, false)
}

/// Newton corrector at fixed parameter: accepts when `‖F‖∞ < tol`.
fn correct(
    sys: &ParameterizedSystem,
    x: &mut [Complex64],
    p: &[Complex64],
    tol: f64,
    max_iters: u32,
) -> bool {
    for _ in 0..=max_iters {
        let f = sys.eval_unchecked(x, p);
        if inf_norm(&f) < tol {
            return true;
        }
        let (jx, _) = sys.jacobian_unchecked(x, p);
        let rhs: Vec<Complex64> = f.iter().map(|v| -v).collect();
        let delta = match solve(&jx, &rhs) {
            Some(d) => d,
            None => return false,
        };
        for (xi, di) in x.iter_mut().zip(&delta) {
            *xi += di;
        }
        if inf_norm(x) > DIVERGENCE_RADIUS {
            return false;
        }
    }
    false
}

/// Tracks the solution `x0` of `F(x; p(0)) = 0` along the segment to
/// `t = 1` and refines the endpoint to `opts.endpoint_tol`.
pub fn track_segment(
    sys: &ParameterizedSystem,
    x0: &[Complex64],
    path: &SegmentPath,
    opts: &TrackOptions,
) -> PathResult {
    opts.assert_valid();
    debug_assert_eq!(x0.len(), sys.n_vars());
    debug_assert_eq!(path.start().len(), sys.n_params());

    let mut x = x0.to_vec();
    let mut t = 0.0_f64;
    let mut step = opts.step_initial;
    let mut consecutive_accepts = 0u32;
    let mut steps_taken = 0u32;

    while t < 1.0 {
        if steps_taken >= opts.max_steps {
            return PathResult::failed(PathStatus::StepLimitReached, steps_taken);
        }
        if step < opts.step_min {
            let status = if 1.0 - t < NEAR_END {
                PathStatus::SingularEndpoint
            } else {
                PathStatus::StepLimitReached
            };
            return PathResult::failed(status, steps_taken);
        }
        steps_taken += 1;

        let reaches_end = step >= 1.0 - t;
        let h = if reaches_end { 1.0 - t } else { step };
        let t_next = if reaches_end { 1.0 } else { t + step };

        // Euler predictor on J_x·ẋ = -J_p·ṗ.
        let p_now = path.at(t);
        let (jx, jp) = sys.jacobian_unchecked(&x, &p_now);
        let pdot = path.derivative(t);
        let rhs: Vec<Complex64> = {
            let jp_pdot = jp.mul_vec(&pdot);
            jp_pdot.iter().map(|v| -v).collect()
        };
        let predicted = match solve(&jx, &rhs) {
            Some(xdot) => x
                .iter()
                .zip(&xdot)
                .map(|(xi, di)| xi + di * h)
                .collect::<Vec<_>>(),
            None => {
                // Tangent unavailable; treat like a corrector failure.
                step *= 0.5;
                consecutive_accepts = 0;
                continue;
            }
        };

        let p_next = path.at(t_next);
        let mut candidate = predicted;
        if correct(sys, &mut candidate, &p_next, opts.corrector_tol, opts.max_corrector_iters) {
            x = candidate;
            t = t_next;
            if inf_norm(&x) > DIVERGENCE_RADIUS {
                return PathResult::failed(PathStatus::Diverged, steps_taken);
            }
            consecutive_accepts += 1;
            if consecutive_accepts >= 3 {
                step = (step * 2.0).min(opts.step_max);
                consecutive_accepts = 0;
            }
        } else {
            step *= 0.5;
            consecutive_accepts = 0;
        }
    }

    let p_end = path.at(1.0);
    let (refined, converged) =
        newton_refine(sys, &x, &p_end, opts.endpoint_tol, ENDPOINT_REFINE_ITERS);
    if !converged {
        return PathResult::failed(PathStatus::SingularEndpoint, steps_taken);
    }
    debug_assert!(inf_norm(&sys.eval_unchecked(&refined, &p_end)) < opts.endpoint_tol);
    PathResult {
        status: PathStatus::Success,
        endpoint: Some(refined),
        steps_taken,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polysys::parse_system;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn one() -> Complex64 {
        c(1.0, 0.0)
    }

    fn square_minus_p() -> ParameterizedSystem {
        parse_system(
            r#"{"vars": ["x"], "params": ["p"],
                "polys": [[{"c": [1.0, 0.0], "v": {"x": 2}},
                           {"c": [-1.0, 0.0], "p": {"p": 1}}]]}"#,
        )
        .unwrap()
    }

    #[test]
    fn segment_rejects_zero_gamma() {
        assert!(matches!(
            SegmentPath::new(vec![one()], vec![one()], c(0.0, 0.0), one()),
            Err(SegmentError::ZeroGamma)
        ));
    }

    #[test]
    fn segment_rejects_vanishing_denominator() {
        // γ_b = -γ_a puts zero at the segment midpoint.
        assert!(matches!(
            SegmentPath::new(vec![one()], vec![one()], one(), c(-1.0, 0.0)),
            Err(SegmentError::DenominatorVanishes)
        ));
    }

    #[test]
    fn segment_endpoints_exact() {
        let seg = SegmentPath::new(vec![c(1.0, 2.0)], vec![c(-3.0, 0.5)], c(0.3, 0.7), c(-0.2, 0.9))
            .unwrap();
        assert_eq!(seg.at(0.0), vec![c(1.0, 2.0)]);
        assert_eq!(seg.at(1.0), vec![c(-3.0, 0.5)]);
    }

    #[test]
    fn segment_derivative_matches_finite_difference() {
        let seg = SegmentPath::new(
            vec![c(1.0, 0.0), c(0.0, 2.0)],
            vec![c(-1.0, 1.0), c(3.0, 0.0)],
            c(0.6, 0.8),
            c(1.0, -0.1),
        )
        .unwrap();
        let h = 1e-7;
        for &t in &[0.1, 0.5, 0.9] {
            let d = seg.derivative(t);
            let plus = seg.at(t + h);
            let minus = seg.at(t - h);
            for i in 0..2 {
                let fd = (plus[i] - minus[i]) / (2.0 * h);
                assert!((fd - d[i]).norm() < 1e-6, "t={t} i={i}");
            }
        }
    }

    #[test]
    fn track_sqrt_branch_one_to_four() {
        let sys = square_minus_p();
        let seg = SegmentPath::new(vec![one()], vec![c(4.0, 0.0)], one(), one()).unwrap();
        let res = track_segment(&sys, &[one()], &seg, &TrackOptions::default());
        assert_eq!(res.status, PathStatus::Success);
        let end = res.endpoint.unwrap();
        assert!((end[0] - c(2.0, 0.0)).norm() < 1e-8, "{:?}", end);
    }

    #[test]
    fn track_constant_path_returns_start() {
        let sys = square_minus_p();
        let seg = SegmentPath::new(vec![one()], vec![one()], one(), one()).unwrap();
        let res = track_segment(&sys, &[one()], &seg, &TrackOptions::default());
        assert_eq!(res.status, PathStatus::Success);
        let end = res.endpoint.unwrap();
        assert!((end[0] - one()).norm() < 1e-10);
    }

    #[test]
    fn track_into_branch_point_is_singular() {
        // p: 1 -> 0 with straight gammas runs into the double root at p = 0.
        let sys = square_minus_p();
        let seg = SegmentPath::new(vec![one()], vec![c(0.0, 0.0)], one(), one()).unwrap();
        let res = track_segment(&sys, &[one()], &seg, &TrackOptions::default());
        assert_eq!(res.status, PathStatus::SingularEndpoint);
        assert!(res.endpoint.is_none());
    }

    #[test]
    fn track_is_deterministic() {
        let sys = square_minus_p();
        let seg =
            SegmentPath::new(vec![one()], vec![c(-2.0, 3.0)], c(0.6, 0.8), c(-0.28, 0.96)).unwrap();
        let r1 = track_segment(&sys, &[one()], &seg, &TrackOptions::default());
        let r2 = track_segment(&sys, &[one()], &seg, &TrackOptions::default());
        assert_eq!(r1, r2);
        let e1 = r1.endpoint.unwrap();
        let e2 = r2.endpoint.unwrap();
        assert_eq!(e1[0].re.to_bits(), e2[0].re.to_bits());
        assert_eq!(e1[0].im.to_bits(), e2[0].im.to_bits());
    }

    #[test]
    fn newton_refine_examples() {
        let sys = square_minus_p();
        let p = [one()];

        let (x, ok) = newton_refine(&sys, &[c(1.0001, 0.0)], &p, 1e-12, 20);
        assert!(ok);
        assert!((x[0] - one()).norm() < 1e-12);

        let (x, ok) = newton_refine(&sys, &[c(0.2, 0.0)], &p, 1e-12, 50);
        assert!(ok);
        assert!((x[0] - one()).norm() < 1e-10, "basin of +1, got {:?}", x);

        let (_, ok) = newton_refine(&sys, &[c(0.0, 0.0)], &p, 1e-12, 20);
        assert!(!ok, "zero Jacobian must not converge");
    }
}
