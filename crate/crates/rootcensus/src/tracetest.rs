//! Completeness certification by a parallelly moving bilinear slice.
//!
//! To certify that a registry holds the whole fiber of `F(x; p*) = 0`, the
//! parameters are restricted to a generic line `p(s) = p* + s·v`, turning
//! `F` into a square-minus-one system `G(x, s)` whose solution set is a
//! curve. The slice `L_t(x, s) = λ(x)·s − t` (with `λ` a generic affine
//! form) cuts that curve in finitely many witness points; at `t = 0` the
//! slice degenerates into `{s = 0} ∪ {λ(x) = 0}` and contains the whole
//! fiber.
//!
//! As `t` translates, the centroid of the *complete* witness set moves
//! along a straight line, so the scaled second difference of the centroids
//! at `t ∈ {−τ, 0, +τ}` vanishes; a missing point bends the track. The
//! witness itself is grown by the same monodromy machinery, looping in the
//! single parameter `t`.
//!
//! The verdict certifies the *input registry*: points discovered during
//! witness extension that return to the fiber `{s ≈ 0}` without matching a
//! registry entry are evidence of an incomplete registry and are excluded
//! from the witness, so the certificate stays sound instead of silently
//! absorbing what monodromy happened to find.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::census::{stopping_decision, StopConfig, StopDecision};
use crate::linalg::{dist2, inf_norm};
use crate::monodromy::{complex_gaussian, random_loop, run_loop, unit_gamma, SolutionRegistry};
use crate::polysys::{Monomial, ParameterizedSystem};
use crate::tracker::{track_segment, PathStatus, SegmentPath, TrackOptions};

/// Affine-linear form `λ(x) = constant + Σ coeffs[i]·x[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineForm {
    pub constant: Complex64,
    pub coeffs: Vec<Complex64>,
}

impl AffineForm {
    pub fn eval(&self, x: &[Complex64]) -> Complex64 {
        debug_assert_eq!(x.len(), self.coeffs.len());
        self.constant + self.coeffs.iter().zip(x).map(|(c, xi)| c * xi).sum::<Complex64>()
    }

    fn is_zero(&self) -> bool {
        let zero = Complex64::new(0.0, 0.0);
        self.constant == zero && self.coeffs.iter().all(|c| *c == zero)
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("slice construction requires at least one parameter")]
    NoParameters,
    #[error("invalid slice: {0}")]
    InvalidSlice(String),
    #[error("fiber registry is empty")]
    EmptyFiber,
    #[error("witness set is empty")]
    EmptyWitness,
    #[error("lambda stayed degenerate on a fiber point after {retries} re-randomizations")]
    LambdaDegenerate { retries: usize },
    #[error("path failure during {stage} of witness point {point_index} ({status:?})")]
    PathFailure {
        stage: &'static str,
        point_index: usize,
        status: PathStatus,
    },
    #[error(transparent)]
    Registry(#[from] crate::monodromy::RegistryError),
}

/// Options for witness extension and the trace verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceConfig {
    /// Slice offset used for the witness, checked at `t ∈ {-τ, 0, +τ}`.
    pub tau: f64,
    /// Relative second-difference threshold for a Complete verdict.
    pub trace_tol: f64,
    /// Monodromy loop budget for witness discovery.
    pub loop_budget: usize,
    /// Trailing no-new loops that end discovery early. Defaults higher
    /// than the registry-level policy: a premature stop here has no
    /// second check behind it and shows up as a spurious Incomplete.
    pub consecutive_no_new: usize,
    /// `|s|` below this classifies a `t = 0` point as a fiber point.
    pub fiber_tol: f64,
    /// Fiber points with `|λ(x)|` below this force a λ re-randomization.
    pub lambda_min: f64,
    /// Re-randomization budget for a degenerate λ.
    pub lambda_retries: usize,
    /// Loop perturbation scale for discovery in the `t` plane.
    pub scale: f64,
    /// Extra discovery rounds [`certify`] may spend on an Incomplete
    /// verdict before accepting it.
    pub incomplete_retries: usize,
    /// Fresh random slices the pipeline may try when certification fails
    /// or stays Incomplete. Sound either way: an incomplete registry
    /// yields a strictly short witness under every slice.
    pub slice_attempts: usize,
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self {
            tau: 1.0,
            trace_tol: 1e-8,
            loop_budget: 20,
            consecutive_no_new: 5,
            fiber_tol: 1e-6,
            lambda_min: 1e-8,
            lambda_retries: 5,
            scale: 1.0,
            incomplete_retries: 2,
            slice_attempts: 2,
        }
    }
}

/// The restricted-and-sliced system: `F` on the parameter line through
/// `p*`, with the bilinear slice as an extra equation. The combined square
/// system has unknowns `(x, s)` and the single parameter `t`.
#[derive(Debug, Clone)]
pub struct SlicedSystem {
    sys: ParameterizedSystem,
    p_star: Vec<Complex64>,
    direction: Vec<Complex64>,
    lambda: AffineForm,
    combined: ParameterizedSystem,
}

fn fresh_name(taken: &[&str], base: &str) -> String {
    let mut name = base.to_string();
    while taken.contains(&name.as_str()) {
        name.push('_');
    }
    name
}

fn binomial_f64(n: u32, k: u32) -> f64 {
    let mut r = 1.0;
    for j in 0..k {
        r = r * (n - j) as f64 / (j + 1) as f64;
    }
    r
}

fn convolve(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

fn build_combined(
    sys: &ParameterizedSystem,
    p_star: &[Complex64],
    direction: &[Complex64],
    lambda: &AffineForm,
) -> Result<ParameterizedSystem, TraceError> {
    let n = sys.n_vars();
    let taken: Vec<&str> = sys
        .var_names()
        .iter()
        .chain(sys.param_names())
        .map(|s| s.as_str())
        .collect();
    let s_name = fresh_name(&taken, "s");
    let mut taken_t = taken.clone();
    taken_t.push(&s_name);
    let t_name = fresh_name(&taken_t, "t");

    let s_idx = n;
    let mut polys: Vec<Vec<Monomial>> = Vec::with_capacity(n + 1);
    for poly in sys.polynomials() {
        let mut terms = Vec::new();
        for mono in poly {
            // Substitute p_k = p*_k + v_k·s and expand the parameter part
            // into powers of s.
            let mut s_poly = vec![mono.coefficient()];
            for (&k, &e) in mono.param_exponents() {
                let factor: Vec<Complex64> = (0..=e)
                    .map(|j| {
                        p_star[k].powu(e - j) * direction[k].powu(j) * binomial_f64(e, j)
                    })
                    .collect();
                s_poly = convolve(&s_poly, &factor);
            }
            for (j, &coeff) in s_poly.iter().enumerate() {
                let vexp: Vec<(usize, u32)> = mono
                    .var_exponents()
                    .iter()
                    .map(|(&i, &e)| (i, e))
                    .chain(std::iter::once((s_idx, j as u32)))
                    .collect();
                terms.push(Monomial::new(coeff, vexp, []));
            }
        }
        polys.push(terms);
    }
    let mut slice_row = vec![Monomial::new(lambda.constant, [(s_idx, 1)], [])];
    for (i, &ci) in lambda.coeffs.iter().enumerate() {
        slice_row.push(Monomial::new(ci, [(i, 1), (s_idx, 1)], []));
    }
    slice_row.push(Monomial::new(Complex64::new(-1.0, 0.0), [], [(0, 1)]));
    polys.push(slice_row);

    let mut var_names: Vec<String> = sys.var_names().to_vec();
    var_names.push(s_name);
    ParameterizedSystem::new(var_names, vec![t_name], polys)
        .map_err(|e| TraceError::InvalidSlice(e.to_string()))
}

impl SlicedSystem {
    /// Builds a slice with explicit line direction and λ form.
    pub fn with_slice(
        sys: &ParameterizedSystem,
        p_star: &[Complex64],
        direction: Vec<Complex64>,
        lambda: AffineForm,
    ) -> Result<Self, TraceError> {
        if sys.n_params() == 0 {
            return Err(TraceError::NoParameters);
        }
        if p_star.len() != sys.n_params() {
            return Err(TraceError::InvalidSlice(format!(
                "base parameter has length {}, system has {} parameters",
                p_star.len(),
                sys.n_params()
            )));
        }
        if direction.len() != sys.n_params() {
            return Err(TraceError::InvalidSlice("direction length must equal P".into()));
        }
        if direction.iter().all(|v| *v == Complex64::new(0.0, 0.0)) {
            return Err(TraceError::InvalidSlice("direction must be nonzero".into()));
        }
        if lambda.coeffs.len() != sys.n_vars() {
            return Err(TraceError::InvalidSlice("lambda needs one coefficient per variable".into()));
        }
        if lambda.is_zero() {
            return Err(TraceError::InvalidSlice("lambda must not be identically zero".into()));
        }
        let combined = build_combined(sys, p_star, &direction, &lambda)?;
        Ok(Self {
            sys: sys.clone(),
            p_star: p_star.to_vec(),
            direction,
            lambda,
            combined,
        })
    }

    /// Builds a slice with a random complex direction and a random affine λ.
    pub fn random<R: Rng + ?Sized>(
        sys: &ParameterizedSystem,
        p_star: &[Complex64],
        rng: &mut R,
    ) -> Result<Self, TraceError> {
        if sys.n_params() == 0 {
            return Err(TraceError::NoParameters);
        }
        let direction: Vec<Complex64> =
            (0..sys.n_params()).map(|_| complex_gaussian(rng)).collect();
        let lambda = AffineForm {
            constant: complex_gaussian(rng),
            coeffs: (0..sys.n_vars()).map(|_| complex_gaussian(rng)).collect(),
        };
        Self::with_slice(sys, p_star, direction, lambda)
    }

    pub fn system(&self) -> &ParameterizedSystem {
        &self.sys
    }

    pub fn p_star(&self) -> &[Complex64] {
        &self.p_star
    }

    pub fn direction(&self) -> &[Complex64] {
        &self.direction
    }

    pub fn lambda(&self) -> &AffineForm {
        &self.lambda
    }

    /// The square system in `(x, s)` with parameter `t`.
    pub fn combined(&self) -> &ParameterizedSystem {
        &self.combined
    }

    /// The parameter point `p* + s·v`.
    pub fn parameter_at(&self, s: Complex64) -> Vec<Complex64> {
        self.p_star
            .iter()
            .zip(&self.direction)
            .map(|(p, v)| p + s * v)
            .collect()
    }

    /// Appends the `s = 0` coordinate to a fiber solution.
    pub fn lift_fiber_point(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut lifted = x.to_vec();
        lifted.push(Complex64::new(0.0, 0.0));
        lifted
    }

    fn set_lambda(&mut self, lambda: AffineForm) -> Result<(), TraceError> {
        self.combined = build_combined(&self.sys, &self.p_star, &self.direction, &lambda)?;
        self.lambda = lambda;
        Ok(())
    }
}

/// Finite witness of the sliced curve at a fixed offset `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct WitnessSet {
    pub t_value: Complex64,
    /// Points `(x, s)` of length N+1.
    pub points: Vec<Vec<Complex64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Complete,
    Incomplete,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Complete => write!(f, "Complete"),
            Verdict::Incomplete => write!(f, "Incomplete"),
        }
    }
}

/// Outcome of the trace test.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceCertificate {
    pub tau: f64,
    /// Witness centroids at `t = -τ, 0, +τ`, in that order.
    pub centroids: [Vec<Complex64>; 3],
    /// `‖c(-τ) - 2c(0) + c(τ)‖∞ / (1 + ‖c(0)‖∞)`.
    pub residual: f64,
    pub verdict: Verdict,
    /// Transported `t = 0` points with `|s| < fiber_tol`.
    pub fiber_count: usize,
    /// Remaining (λ-branch) points.
    pub other_count: usize,
}

/// Witness under construction: the lift arc, the registry of points found
/// at `t = τ`, and how many of them came from the fiber lift.
///
/// The lift arc is drawn once and shared by every transport tied to this
/// build. Continuation along a fixed path is a bijection between the
/// `t = 0` and `t = τ` witness fibers, so lifted points stay distinct and
/// the fiber/λ classification of discoveries is consistent across
/// discovery rounds. Per-point or per-round arcs would not guarantee
/// either (endpoints depend on the path's homotopy class relative to the
/// branch points).
struct WitnessBuild {
    lift_seg: SegmentPath,
    registry: SolutionRegistry,
    n_lifted: usize,
    next_loop_index: usize,
}

fn build_lifts<R: Rng + ?Sized>(
    ss: &mut SlicedSystem,
    fiber: &SolutionRegistry,
    cfg: &TraceConfig,
    topts: &TrackOptions,
    rng: &mut R,
) -> Result<WitnessBuild, TraceError> {
    if fiber.is_empty() {
        return Err(TraceError::EmptyFiber);
    }
    if fiber.base().len() != ss.p_star.len() || dist2(fiber.base(), &ss.p_star) > 1e-10 {
        return Err(TraceError::InvalidSlice(
            "registry base parameter differs from the slice base".into(),
        ));
    }

    // Generic λ keeps clear of the fiber; re-randomize if it does not.
    let mut attempt = 0;
    loop {
        let degenerate = fiber
            .entries()
            .iter()
            .find(|x| ss.lambda.eval(x).norm() < cfg.lambda_min);
        match degenerate {
            None => break,
            Some(x) => {
                if attempt >= cfg.lambda_retries {
                    return Err(TraceError::LambdaDegenerate { retries: attempt });
                }
                attempt += 1;
                log::warn!(
                    "lambda nearly vanishes on a fiber point ({:?}); re-randomizing (attempt {attempt})",
                    &x[..x.len().min(2)]
                );
                let lambda = AffineForm {
                    constant: complex_gaussian(rng),
                    coeffs: (0..ss.sys.n_vars()).map(|_| complex_gaussian(rng)).collect(),
                };
                ss.set_lambda(lambda)?;
            }
        }
    }

    let tau = Complex64::new(cfg.tau, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let combined = ss.combined().clone();

    // An arc can stray close to a branch point and stall a lift; a fresh
    // draw fixes that, and any fixed arc gives an equally valid build.
    let mut last_failure = None;
    for _ in 0..3 {
        let lift_seg = new_t_segment(zero, tau, rng);
        let lifted: Vec<Result<Vec<Complex64>, TraceError>> = fiber
            .entries()
            .par_iter()
            .enumerate()
            .map(|(i, x)| {
                let res = track_segment(&combined, &ss.lift_fiber_point(x), &lift_seg, topts);
                match res.status {
                    PathStatus::Success => Ok(res.endpoint.expect("Success carries an endpoint")),
                    status => {
                        Err(TraceError::PathFailure { stage: "fiber lift", point_index: i, status })
                    }
                }
            })
            .collect();

        let mut registry = SolutionRegistry::new(vec![tau], fiber.dedup_tol());
        let mut failed = None;
        for (i, endpoint) in lifted.into_iter().enumerate() {
            match endpoint {
                Ok(endpoint) => {
                    let (_, is_new) = registry.insert(&combined, endpoint)?;
                    if !is_new {
                        // Distinct fiber points cannot share a continuation
                        // endpoint along one arc; a merge means a lift
                        // jumped paths near a branch point.
                        failed = Some(TraceError::PathFailure {
                            stage: "fiber lift (paths merged)",
                            point_index: i,
                            status: PathStatus::Success,
                        });
                        break;
                    }
                }
                Err(err) => {
                    failed = Some(err);
                    break;
                }
            }
        }
        match failed {
            None => {
                let n_lifted = registry.len();
                return Ok(WitnessBuild { lift_seg, registry, n_lifted, next_loop_index: 1 });
            }
            Some(err) => {
                log::warn!("fiber lift failed ({err}); redrawing the lift arc");
                last_failure = Some(err);
            }
        }
    }
    Err(last_failure.expect("loop ran at least once"))
}

/// One round of monodromy discovery in the `t` plane, running until the
/// stopping policy fires or the per-round loop budget is exhausted.
///
/// The loop scale climbs a geometric ladder: the branch points of the
/// sliced cover sit at distances set by the random slice coefficients,
/// and loops of one fixed radius can permute the fiber sheets among
/// themselves forever without ever winding around the branch point that
/// connects them to the λ sheets.
fn run_discovery<R: Rng + ?Sized>(
    build: &mut WitnessBuild,
    combined: &ParameterizedSystem,
    cfg: &TraceConfig,
    topts: &TrackOptions,
    rng: &mut R,
) {
    let stop = StopConfig {
        consecutive_no_new: cfg.consecutive_no_new,
        max_loops: cfg.loop_budget.max(1),
    };
    let base = build.registry.base().to_vec();
    let mut records = Vec::new();
    while stopping_decision(&records, &stop) == StopDecision::Continue {
        let rung = (build.next_loop_index - 1) % 4;
        let scale = cfg.scale * f64::powi(2.0, rung as i32);
        let lp = random_loop(&base, rng, scale);
        records.push(run_loop(combined, &mut build.registry, &lp, topts, build.next_loop_index));
        build.next_loop_index += 1;
    }
}

/// Classifies every discovered point by transporting it back along the
/// exact reverse of the lift arc. Along that path a lifted point returns
/// to its fiber origin, so a discovery arriving on the `{s = 0}` branch
/// occupies a fiber slot the registry is missing and is excluded.
fn collect_witness(
    build: &WitnessBuild,
    ss: &SlicedSystem,
    combined: &ParameterizedSystem,
    cfg: &TraceConfig,
    topts: &TrackOptions,
) -> Result<WitnessSet, TraceError> {
    let n_lifted = build.n_lifted;
    let discovered = &build.registry.entries()[n_lifted..];
    let back_seg = build.lift_seg.reversed();
    let classified: Vec<Result<(usize, bool), TraceError>> = discovered
        .par_iter()
        .enumerate()
        .map(|(i, point)| {
            let res = track_segment(combined, point, &back_seg, topts);
            let endpoint = match res.status {
                PathStatus::Success => res.endpoint.expect("Success carries an endpoint"),
                status => {
                    return Err(TraceError::PathFailure {
                        stage: "classification",
                        point_index: n_lifted + i,
                        status,
                    })
                }
            };
            let s_mod = endpoint[endpoint.len() - 1].norm();
            let lambda_mod = ss.lambda.eval(&endpoint[..endpoint.len() - 1]).norm();
            if s_mod.min(lambda_mod) > cfg.fiber_tol {
                log::warn!(
                    "witness point {i} lands off both branches at t = 0 (|s| = {s_mod:.2e}, |λ| = {lambda_mod:.2e})"
                );
            }
            Ok((n_lifted + i, s_mod <= lambda_mod))
        })
        .collect();

    let mut points: Vec<Vec<Complex64>> = build.registry.entries()[..n_lifted].to_vec();
    for res in classified {
        let (id, is_fiber_type) = res?;
        if is_fiber_type {
            log::warn!(
                "discovered witness point {id} returns to the fiber at t = 0 but is not in \
                 the registry; excluding it (the registry looks incomplete)"
            );
        } else {
            points.push(build.registry.entries()[id].clone());
        }
    }
    Ok(WitnessSet { t_value: build.registry.base()[0], points })
}

/// Lifts the fiber into the sliced curve, tracks it to `t = τ`, and grows
/// the witness by monodromy loops in the `t` plane until the stopping
/// policy fires or the loop budget runs out.
///
/// Discovered points are classified by transporting them back to `t = 0`:
/// λ-branch points join the witness, while fiber-type points that the
/// registry does not contain are excluded (and logged), so that the later
/// verdict certifies the registry rather than the discovery.
pub fn extend_witness<R: Rng + ?Sized>(
    ss: &mut SlicedSystem,
    fiber: &SolutionRegistry,
    cfg: &TraceConfig,
    topts: &TrackOptions,
    rng: &mut R,
) -> Result<WitnessSet, TraceError> {
    let mut build = build_lifts(ss, fiber, cfg, topts, rng)?;
    let combined = ss.combined().clone();
    run_discovery(&mut build, &combined, cfg, topts, rng);
    collect_witness(&build, ss, &combined, cfg, topts)
}

/// Extends the witness and issues the verdict, spending extra discovery
/// rounds on an Incomplete result before accepting it.
///
/// An Incomplete verdict cannot distinguish a registry that misses fiber
/// points from a discovery phase that stopped before finding the whole
/// λ-branch. Re-running discovery against the same build resolves the
/// ambiguity soundly: fiber slots the registry is missing stay excluded
/// no matter how long discovery runs, so a truly incomplete registry
/// remains Incomplete, while an under-discovered witness gets completed.
pub fn certify<R: Rng + ?Sized>(
    ss: &mut SlicedSystem,
    fiber: &SolutionRegistry,
    cfg: &TraceConfig,
    topts: &TrackOptions,
    rng: &mut R,
) -> Result<(WitnessSet, TraceCertificate), TraceError> {
    let mut build = build_lifts(ss, fiber, cfg, topts, rng)?;
    let combined = ss.combined().clone();
    let mut round = 0;
    loop {
        run_discovery(&mut build, &combined, cfg, topts, rng);
        let witness = collect_witness(&build, ss, &combined, cfg, topts)?;
        round += 1;
        match trace_verdict(ss, &witness, cfg, topts, rng) {
            Ok(cert) if cert.verdict == Verdict::Complete || round > cfg.incomplete_retries => {
                return Ok((witness, cert));
            }
            Ok(cert) => {
                log::info!(
                    "trace verdict Incomplete after discovery round {round} (residual {:.3e}); \
                     spending another round",
                    cert.residual
                );
            }
            // A failed transport means an unlucky arc, not a bad witness;
            // the next round draws fresh arcs.
            Err(err @ TraceError::PathFailure { .. }) if round <= cfg.incomplete_retries => {
                log::warn!("trace transport failed on round {round} ({err}); retrying");
            }
            Err(err) => return Err(err),
        }
    }
}

fn new_t_segment<R: Rng + ?Sized>(from: Complex64, to: Complex64, rng: &mut R) -> SegmentPath {
    loop {
        if let Ok(seg) = SegmentPath::new(vec![from], vec![to], unit_gamma(rng), unit_gamma(rng)) {
            return seg;
        }
    }
}

fn centroid(points: &[Vec<Complex64>]) -> Vec<Complex64> {
    let dim = points[0].len();
    let mut c = vec![Complex64::new(0.0, 0.0); dim];
    for p in points {
        for (ci, pi) in c.iter_mut().zip(p) {
            *ci += pi;
        }
    }
    let n = points.len() as f64;
    for ci in &mut c {
        *ci /= n;
    }
    c
}

/// Transports the witness to `t = 0` and `t = -τ`, compares the three
/// centroids, and issues the verdict. Any path failure withholds the
/// verdict, since a lost point would corrupt the centroids.
pub fn trace_verdict<R: Rng + ?Sized>(
    ss: &SlicedSystem,
    witness: &WitnessSet,
    cfg: &TraceConfig,
    topts: &TrackOptions,
    rng: &mut R,
) -> Result<TraceCertificate, TraceError> {
    if witness.points.is_empty() {
        return Err(TraceError::EmptyWitness);
    }
    let combined = ss.combined();
    let tau = witness.t_value;
    let zero = Complex64::new(0.0, 0.0);

    // One shared arc per target: continuation along a fixed path maps the
    // witness at τ bijectively onto the witness at the target offset, so
    // the centroids are taken over the full fibers there.
    let seg_zero = new_t_segment(tau, zero, rng);
    let seg_minus = new_t_segment(tau, -tau, rng);

    type TransportedPair = (Vec<Complex64>, Vec<Complex64>);
    let transported: Vec<Result<TransportedPair, TraceError>> = witness
        .points
        .par_iter()
        .enumerate()
        .map(|(i, point)| {
            let to_zero = track_segment(combined, point, &seg_zero, topts);
            let at_zero = match to_zero.status {
                PathStatus::Success => to_zero.endpoint.expect("Success carries an endpoint"),
                status => {
                    return Err(TraceError::PathFailure { stage: "transport to 0", point_index: i, status })
                }
            };
            let to_minus = track_segment(combined, point, &seg_minus, topts);
            let at_minus = match to_minus.status {
                PathStatus::Success => to_minus.endpoint.expect("Success carries an endpoint"),
                status => {
                    return Err(TraceError::PathFailure { stage: "transport to -τ", point_index: i, status })
                }
            };
            Ok((at_zero, at_minus))
        })
        .collect();

    let mut at_zero = Vec::with_capacity(witness.points.len());
    let mut at_minus = Vec::with_capacity(witness.points.len());
    for res in transported {
        let (z, m) = res?;
        at_zero.push(z);
        at_minus.push(m);
    }

    let c_minus = centroid(&at_minus);
    let c_zero = centroid(&at_zero);
    let c_plus = centroid(&witness.points);
    let second_diff: Vec<Complex64> = c_minus
        .iter()
        .zip(&c_zero)
        .zip(&c_plus)
        .map(|((m, z), p)| m - 2.0 * z + p)
        .collect();
    let residual = inf_norm(&second_diff) / (1.0 + inf_norm(&c_zero));
    let verdict = if residual < cfg.trace_tol {
        Verdict::Complete
    } else {
        Verdict::Incomplete
    };

    let s_idx = combined.n_vars() - 1;
    let fiber_count = at_zero.iter().filter(|p| p[s_idx].norm() < cfg.fiber_tol).count();
    let other_count = at_zero.len() - fiber_count;

    Ok(TraceCertificate {
        tau: tau.re,
        centroids: [c_minus, c_zero, c_plus],
        residual,
        verdict,
        fiber_count,
        other_count,
    })
}

#[derive(Serialize, Deserialize)]
struct CertificateDoc {
    direction: Vec<[f64; 2]>,
    lambda_constant: [f64; 2],
    lambda_coeffs: Vec<[f64; 2]>,
    tau: f64,
    centroid_t_minus: Vec<[f64; 2]>,
    centroid_t_zero: Vec<[f64; 2]>,
    centroid_t_plus: Vec<[f64; 2]>,
    residual: f64,
    verdict: String,
    fiber_count: usize,
    other_count: usize,
}

fn pairs(v: &[Complex64]) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

impl TraceCertificate {
    /// Serializes the certificate together with the slice that produced it.
    pub fn to_json(&self, ss: &SlicedSystem) -> String {
        let doc = CertificateDoc {
            direction: pairs(ss.direction()),
            lambda_constant: [ss.lambda().constant.re, ss.lambda().constant.im],
            lambda_coeffs: pairs(&ss.lambda().coeffs),
            tau: self.tau,
            centroid_t_minus: pairs(&self.centroids[0]),
            centroid_t_zero: pairs(&self.centroids[1]),
            centroid_t_plus: pairs(&self.centroids[2]),
            residual: self.residual,
            verdict: self.verdict.to_string(),
            fiber_count: self.fiber_count,
            other_count: self.other_count,
        };
        serde_json::to_string_pretty(&doc).expect("certificate serialization cannot fail")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polysys::parse_system;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

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

    fn pplus1_x2_minus_p() -> ParameterizedSystem {
        parse_system(
            r#"{"vars": ["x"], "params": ["p"],
                "polys": [[{"c": [1.0, 0.0], "v": {"x": 2}, "p": {"p": 1}},
                           {"c": [1.0, 0.0], "v": {"x": 2}},
                           {"c": [-1.0, 0.0], "p": {"p": 1}}]]}"#,
        )
        .unwrap()
    }

    /// The worked slice: v = 1, λ(x) = 4x, so L_t = 4x·s − t under s = p−1.
    fn worked_slice() -> SlicedSystem {
        SlicedSystem::with_slice(
            &pplus1_x2_minus_p(),
            &[one()],
            vec![one()],
            AffineForm { constant: c(0.0, 0.0), coeffs: vec![c(4.0, 0.0)] },
        )
        .unwrap()
    }

    fn fiber_both(sys: &ParameterizedSystem, points: &[Complex64]) -> SolutionRegistry {
        let mut reg = SolutionRegistry::new(vec![one()], 1e-6);
        for &x in points {
            reg.insert(sys, vec![x]).unwrap();
        }
        reg
    }

    #[test]
    fn combined_matches_hand_expansion() {
        // For (p+1)x² − p on p = 1 + s: (s+2)x² − s − 1; slice 4xs − t.
        let ss = worked_slice();
        let combined = ss.combined();
        assert_eq!(combined.n_vars(), 2);
        assert_eq!(combined.n_params(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let x = complex_gaussian(&mut rng);
            let s = complex_gaussian(&mut rng);
            let t = complex_gaussian(&mut rng);
            let got = combined.evaluate(&[x, s], &[t]).unwrap();
            let want0 = (s + 2.0) * x * x - s - 1.0;
            let want1 = 4.0 * x * s - t;
            assert!((got[0] - want0).norm() < 1e-12);
            assert!((got[1] - want1).norm() < 1e-12);
        }
    }

    #[test]
    fn random_slice_shapes_and_determinism() {
        let sys3 = parse_system(
            r#"{"vars": ["x"], "params": ["a", "b", "c"],
                "polys": [[{"c": [1.0, 0.0], "v": {"x": 2}, "p": {"a": 1}},
                           {"c": [1.0, 0.0], "v": {"x": 1}, "p": {"b": 1}},
                           {"c": [1.0, 0.0], "p": {"c": 1}}]]}"#,
        )
        .unwrap();
        let p_star = [c(1.0, 0.0), c(-2.0, 0.5), c(0.5, 0.0)];
        let s1 = SlicedSystem::random(&sys3, &p_star, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let s2 = SlicedSystem::random(&sys3, &p_star, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(s1.direction(), s2.direction());
        assert_eq!(s1.lambda(), s2.lambda());
        assert_eq!(s1.direction().len(), 3);
        assert_eq!(s1.combined().n_vars(), 2);
        assert_eq!(s1.combined().n_params(), 1);
    }

    #[test]
    fn slice_rejects_degenerate_input() {
        let sys = square_minus_p();
        assert!(matches!(
            SlicedSystem::with_slice(
                &sys,
                &[one()],
                vec![c(0.0, 0.0)],
                AffineForm { constant: one(), coeffs: vec![one()] },
            ),
            Err(TraceError::InvalidSlice(_))
        ));
        let no_params = parse_system(
            r#"{"vars": ["x"], "params": [],
                "polys": [[{"c": [1.0, 0.0], "v": {"x": 1}}]]}"#,
        )
        .unwrap();
        assert!(matches!(
            SlicedSystem::random(&no_params, &[], &mut ChaCha8Rng::seed_from_u64(0)),
            Err(TraceError::NoParameters)
        ));
    }

    #[test]
    fn extend_witness_empty_fiber_is_error() {
        let sys = pplus1_x2_minus_p();
        let mut ss = worked_slice();
        let empty = SolutionRegistry::new(vec![one()], 1e-6);
        let _ = sys;
        assert!(matches!(
            extend_witness(
                &mut ss,
                &empty,
                &TraceConfig::default(),
                &TrackOptions::default(),
                &mut ChaCha8Rng::seed_from_u64(0),
            ),
            Err(TraceError::EmptyFiber)
        ));
    }

    #[test]
    fn worked_example_witness_has_three_points() {
        let sys = pplus1_x2_minus_p();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let fiber = fiber_both(&sys, &[c(r, 0.0), c(-r, 0.0)]);
        let mut ss = worked_slice();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let witness = extend_witness(
            &mut ss,
            &fiber,
            &TraceConfig::default(),
            &TrackOptions::default(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(witness.points.len(), 3, "two fiber lifts plus the x = 0 branch");
    }

    #[test]
    fn worked_example_certificate_is_complete_on_the_dashed_line() {
        let sys = pplus1_x2_minus_p();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let fiber = fiber_both(&sys, &[c(r, 0.0), c(-r, 0.0)]);
        let mut ss = worked_slice();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let cfg = TraceConfig::default();
        let topts = TrackOptions::default();
        let witness = extend_witness(&mut ss, &fiber, &cfg, &topts, &mut rng).unwrap();
        let cert = trace_verdict(&ss, &witness, &cfg, &topts, &mut rng).unwrap();
        assert_eq!(cert.verdict, Verdict::Complete);
        assert!(cert.residual < 1e-8, "residual {}", cert.residual);
        assert_eq!(cert.fiber_count, 2);
        assert_eq!(cert.other_count, 1);
        // All three centroids sit on p = 2/3.
        let s_idx = ss.combined().n_vars() - 1;
        for centroid in &cert.centroids {
            let p = ss.parameter_at(centroid[s_idx]);
            assert!((p[0] - c(2.0 / 3.0, 0.0)).norm() < 1e-8, "centroid p {:?}", p);
        }
    }

    #[test]
    fn deleting_a_fiber_point_flips_the_verdict() {
        let sys = pplus1_x2_minus_p();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let fiber = fiber_both(&sys, &[c(r, 0.0), c(-r, 0.0)]);
        let mut ss = worked_slice();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let cfg = TraceConfig::default();
        let topts = TrackOptions::default();
        let witness = extend_witness(&mut ss, &fiber, &cfg, &topts, &mut rng).unwrap();

        // Drop one fiber lift (index 0 or 1 is a fiber point by construction).
        let mut broken = witness.clone();
        broken.points.remove(1);
        let cert = trace_verdict(&ss, &broken, &cfg, &topts, &mut rng).unwrap();
        assert_eq!(cert.verdict, Verdict::Incomplete);
        assert!(cert.residual > 1e-3, "residual {}", cert.residual);
    }

    #[test]
    fn half_fiber_is_incomplete_and_full_fiber_complete() {
        let sys = square_minus_p();
        let cfg = TraceConfig::default();
        let topts = TrackOptions::default();

        let half = fiber_both(&sys, &[one()]);
        let mut ss = SlicedSystem::random(&sys, &[one()], &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let witness = extend_witness(&mut ss, &half, &cfg, &topts, &mut rng).unwrap();
        let cert = trace_verdict(&ss, &witness, &cfg, &topts, &mut rng).unwrap();
        assert_eq!(cert.verdict, Verdict::Incomplete);

        let full = fiber_both(&sys, &[one(), c(-1.0, 0.0)]);
        let mut ss = SlicedSystem::random(&sys, &[one()], &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let witness = extend_witness(&mut ss, &full, &cfg, &topts, &mut rng).unwrap();
        let cert = trace_verdict(&ss, &witness, &cfg, &topts, &mut rng).unwrap();
        assert_eq!(cert.verdict, Verdict::Complete);
        assert_eq!(cert.fiber_count, 2);
    }

    #[test]
    fn single_point_witness_of_linear_system_is_complete() {
        // F = x − p with a constant λ: the slice meets the line in one
        // point whose coordinates are linear in t.
        let sys = parse_system(
            r#"{"vars": ["x"], "params": ["p"],
                "polys": [[{"c": [1.0, 0.0], "v": {"x": 1}},
                           {"c": [-1.0, 0.0], "p": {"p": 1}}]]}"#,
        )
        .unwrap();
        let mut ss = SlicedSystem::with_slice(
            &sys,
            &[one()],
            vec![one()],
            AffineForm { constant: c(2.0, 0.0), coeffs: vec![c(0.0, 0.0)] },
        )
        .unwrap();
        let fiber = fiber_both(&sys, &[one()]);
        let cfg = TraceConfig::default();
        let topts = TrackOptions::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let witness = extend_witness(&mut ss, &fiber, &cfg, &topts, &mut rng).unwrap();
        assert_eq!(witness.points.len(), 1);
        let cert = trace_verdict(&ss, &witness, &cfg, &topts, &mut rng).unwrap();
        assert_eq!(cert.verdict, Verdict::Complete);
        assert!(cert.residual < 1e-10);
        assert_eq!(cert.fiber_count, 1);
        assert_eq!(cert.other_count, 0);
    }

    #[test]
    fn certificate_serializes_with_slice_data() {
        let sys = square_minus_p();
        let fiber = fiber_both(&sys, &[one(), c(-1.0, 0.0)]);
        let mut ss = SlicedSystem::random(&sys, &[one()], &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let cfg = TraceConfig::default();
        let topts = TrackOptions::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let witness = extend_witness(&mut ss, &fiber, &cfg, &topts, &mut rng).unwrap();
        let cert = trace_verdict(&ss, &witness, &cfg, &topts, &mut rng).unwrap();
        let json = cert.to_json(&ss);
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(value["verdict"], "Complete");
        assert!(value["residual"].as_f64().unwrap() < 1e-8);
        assert_eq!(value["fiber_count"], 2);
        assert!(value["direction"].is_array());
        assert!(value["lambda_coeffs"].is_array());
    }
}


