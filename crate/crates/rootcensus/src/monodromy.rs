//! Random monodromy loops and the deduplicated solution registry.
//!
//! Starting from one seed solution at a generic base parameter `p*`, each
//! loop transports every registered solution around a random closed
//! triangle in parameter space and back to `p*`. Endpoints that return to
//! a known solution are recaptures; endpoints that land elsewhere are new
//! marks. The registry is the closed population: it only grows, IDs are
//! stable, and every entry keeps `‖F(entry; p*)‖∞` below the residual gate
//! at all times.

use std::collections::BTreeSet;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{dist2, inf_norm, norm2, solve, CMat};
use crate::polysys::ParameterizedSystem;
use crate::tracker::{newton_refine, track_segment, PathStatus, SegmentPath, TrackOptions};

/// Residual gate for registry membership.
pub const REGISTRY_RESIDUAL_TOL: f64 = 1e-10;

/// Residual required of a seed solution after refinement.
pub const SEED_RESIDUAL_TOL: f64 = 1e-12;

/// Raw residual above which a user-supplied seed pair is rejected outright
/// instead of being handed to Newton (which could silently walk to a
/// different root).
const SEED_ACCEPT_GATE: f64 = 1e-6;

pub(crate) fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im)
}

pub(crate) fn unit_gamma<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let theta: f64 = rng.gen::<f64>() * std::f64::consts::TAU;
    Complex64::new(theta.cos(), theta.sin())
}

/// A closed triangular loop in parameter space based at `p*`.
#[derive(Debug, Clone)]
pub struct Loop {
    base: Vec<Complex64>,
    segments: [SegmentPath; 3],
    rng_label: u64,
}

impl Loop {
    /// Builds the triangle `base -> q1 -> q2 -> base` with the given gamma
    /// pair per segment.
    pub fn triangle(
        base: Vec<Complex64>,
        q1: Vec<Complex64>,
        q2: Vec<Complex64>,
        gammas: [(Complex64, Complex64); 3],
        rng_label: u64,
    ) -> Result<Self, crate::tracker::SegmentError> {
        let segments = [
            SegmentPath::new(base.clone(), q1.clone(), gammas[0].0, gammas[0].1)?,
            SegmentPath::new(q1, q2.clone(), gammas[1].0, gammas[1].1)?,
            SegmentPath::new(q2, base.clone(), gammas[2].0, gammas[2].1)?,
        ];
        Ok(Self { base, segments, rng_label })
    }

    pub fn base(&self) -> &[Complex64] {
        &self.base
    }

    pub fn segments(&self) -> &[SegmentPath; 3] {
        &self.segments
    }

    pub fn rng_label(&self) -> u64 {
        self.rng_label
    }
}

/// Draws a random triangular loop based at `base`. Vertices are complex
/// Gaussian perturbations of size `scale·(1 + ‖base‖)` and every segment
/// carries an independent random unit-modulus gamma pair, so the loop is
/// reproducible from the generator state alone.
pub fn random_loop<R: Rng + ?Sized>(base: &[Complex64], rng: &mut R, scale: f64) -> Loop {
    assert!(scale > 0.0, "loop scale must be positive");
    let radius = scale * (1.0 + norm2(base));
    loop {
        let label = rng.gen::<u64>();
        let vertex = |rng: &mut R| -> Vec<Complex64> {
            base.iter().map(|b| b + complex_gaussian(rng) * radius).collect()
        };
        let q1 = vertex(rng);
        let q2 = vertex(rng);
        let gammas = [
            (unit_gamma(rng), unit_gamma(rng)),
            (unit_gamma(rng), unit_gamma(rng)),
            (unit_gamma(rng), unit_gamma(rng)),
        ];
        // A fresh draw is astronomically unlikely to be rejected; retrying
        // keeps the constructor total.
        if let Ok(lp) = Loop::triangle(base.to_vec(), q1, q2, gammas, label) {
            return lp;
        }
    }
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("solution has wrong length: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("residual {residual:.3e} exceeds the registry gate {gate:.3e}")]
    ResidualTooLarge { residual: f64, gate: f64 },
    #[error("invalid registry document: {0}")]
    BadDocument(String),
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// Deduplicated solutions of `F(x; p*) = 0` with stable integer IDs.
#[derive(Debug, Clone)]
pub struct SolutionRegistry {
    base: Vec<Complex64>,
    entries: Vec<Vec<Complex64>>,
    dedup_tol: f64,
}

impl SolutionRegistry {
    pub const DEFAULT_DEDUP_TOL: f64 = 1e-6;

    pub fn new(base: Vec<Complex64>, dedup_tol: f64) -> Self {
        assert!(dedup_tol > 0.0);
        Self { base, entries: Vec::new(), dedup_tol }
    }

    pub fn base(&self) -> &[Complex64] {
        &self.base
    }

    pub fn dedup_tol(&self) -> f64 {
        self.dedup_tol
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Vec<Complex64>] {
        &self.entries
    }

    pub fn ids(&self) -> BTreeSet<usize> {
        (0..self.entries.len()).collect()
    }

    /// Matches `x` against the registry without inserting.
    pub fn match_id(&self, x: &[Complex64]) -> Option<usize> {
        let threshold = self.dedup_tol * (1.0 + norm2(x));
        let mut best_id = None;
        let mut best_dist = f64::INFINITY;
        for (id, entry) in self.entries.iter().enumerate() {
            let d = dist2(entry, x);
            if d < best_dist {
                best_dist = d;
                best_id = Some(id);
            }
        }
        best_id.filter(|_| best_dist <= threshold)
    }

    /// Inserts a refined solution, returning its ID and whether it was new.
    /// The caller must have refined `x`; anything failing the residual gate
    /// at the base parameter is rejected.
    pub fn insert(
        &mut self,
        sys: &ParameterizedSystem,
        x: Vec<Complex64>,
    ) -> Result<(usize, bool), RegistryError> {
        if x.len() != sys.n_vars() {
            return Err(RegistryError::DimensionMismatch {
                expected: sys.n_vars(),
                got: x.len(),
            });
        }
        let residual = inf_norm(&sys.eval_unchecked(&x, &self.base));
        if residual >= REGISTRY_RESIDUAL_TOL {
            return Err(RegistryError::ResidualTooLarge {
                residual,
                gate: REGISTRY_RESIDUAL_TOL,
            });
        }
        if let Some(id) = self.match_id(&x) {
            return Ok((id, false));
        }
        self.entries.push(x);
        Ok((self.entries.len() - 1, true))
    }

    /// Serializes the registry for checkpointing between invocations.
    pub fn to_json(&self) -> String {
        let doc = RegistryDoc {
            base: self.base.iter().map(|z| [z.re, z.im]).collect(),
            dedup_tol: self.dedup_tol,
            solutions: self
                .entries
                .iter()
                .map(|e| e.iter().map(|z| [z.re, z.im]).collect())
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("registry serialization cannot fail")
    }

    /// Restores a checkpointed registry, revalidating every entry against
    /// the system at the stored base parameter.
    pub fn from_json(sys: &ParameterizedSystem, text: &str) -> Result<Self, RegistryError> {
        let doc: RegistryDoc = serde_json::from_str(text)?;
        if doc.base.len() != sys.n_params() {
            return Err(RegistryError::BadDocument(format!(
                "base parameter has length {}, system has {} parameters",
                doc.base.len(),
                sys.n_params()
            )));
        }
        if doc.dedup_tol <= 0.0 || doc.dedup_tol.is_nan() {
            return Err(RegistryError::BadDocument("dedup_tol must be positive".into()));
        }
        let base: Vec<Complex64> = doc.base.iter().map(|[re, im]| Complex64::new(*re, *im)).collect();
        let mut registry = SolutionRegistry::new(base, doc.dedup_tol);
        for sol in &doc.solutions {
            let x: Vec<Complex64> = sol.iter().map(|[re, im]| Complex64::new(*re, *im)).collect();
            if x.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
                return Err(RegistryError::BadDocument("non-finite solution entry".into()));
            }
            registry.insert(sys, x)?;
        }
        Ok(registry)
    }
}

#[derive(Serialize, Deserialize)]
struct RegistryDoc {
    base: Vec<[f64; 2]>,
    dedup_tol: f64,
    solutions: Vec<Vec<[f64; 2]>>,
}

/// Bookkeeping for one monodromy loop: which IDs started, which IDs the
/// surviving paths landed on, and how the counts split into recaptures,
/// new marks, and failures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopRecord {
    pub loop_index: usize,
    pub start_ids: BTreeSet<usize>,
    pub end_ids: BTreeSet<usize>,
    pub n_start: usize,
    pub n_end: usize,
    pub n_overlap: usize,
    pub n_new: usize,
    pub n_failures: usize,
}

impl LoopRecord {
    /// Builds a record from explicit start/end ID sets (the collision-free
    /// case, where counts and set cardinalities agree).
    pub fn from_sets(
        loop_index: usize,
        start_ids: BTreeSet<usize>,
        end_ids: BTreeSet<usize>,
        n_failures: usize,
    ) -> Self {
        let n_start = start_ids.len();
        let n_end = end_ids.len();
        let n_overlap = start_ids.intersection(&end_ids).count();
        let n_new = end_ids.difference(&start_ids).count();
        let rec = Self {
            loop_index,
            start_ids,
            end_ids,
            n_start,
            n_end,
            n_overlap,
            n_new,
            n_failures,
        };
        debug_assert!(rec.check_invariants());
        rec
    }

    /// Count identities that hold for every well-formed record.
    pub fn check_invariants(&self) -> bool {
        self.n_end + self.n_failures == self.n_start
            && self.n_overlap + self.n_new == self.n_end
            && self.n_overlap <= self.n_start.min(self.n_end)
    }
}

/// Transports every registry entry around the loop and folds the surviving
/// endpoints back into the registry.
///
/// All paths are tracked first (concurrently; tracking consumes no
/// randomness), then matching and insertion run as a single serialized
/// phase in ID order, so results do not depend on thread scheduling.
pub fn run_loop(
    sys: &ParameterizedSystem,
    registry: &mut SolutionRegistry,
    lp: &Loop,
    opts: &TrackOptions,
    loop_index: usize,
) -> LoopRecord {
    assert!(!registry.is_empty(), "run_loop needs a nonempty registry");
    let start_ids = registry.ids();
    let n_start = start_ids.len();
    let snapshot: Vec<Vec<Complex64>> = registry.entries().to_vec();

    let endpoints: Vec<Option<Vec<Complex64>>> = snapshot
        .par_iter()
        .map(|x0| {
            let mut x = x0.clone();
            for segment in lp.segments() {
                match track_segment(sys, &x, segment, opts) {
                    res if res.status == PathStatus::Success => {
                        x = res.endpoint.expect("Success carries an endpoint");
                    }
                    _ => return None,
                }
            }
            Some(x)
        })
        .collect();

    let mut end_ids = BTreeSet::new();
    let mut seen_this_loop: BTreeSet<usize> = BTreeSet::new();
    let mut n_failures = 0usize;
    let mut n_overlap = 0usize;
    let mut n_new = 0usize;
    for (source_id, endpoint) in endpoints.into_iter().enumerate() {
        let Some(x) = endpoint else {
            n_failures += 1;
            continue;
        };
        match registry.insert(sys, x) {
            Ok((id, _)) => {
                if start_ids.contains(&id) {
                    n_overlap += 1;
                } else {
                    n_new += 1;
                }
                if !seen_this_loop.insert(id) {
                    log::warn!(
                        "loop {loop_index}: two paths merged onto registry id {id} \
                         (source id {source_id}); tracking is suspect"
                    );
                }
                end_ids.insert(id);
            }
            Err(err) => {
                log::warn!("loop {loop_index}: endpoint of id {source_id} rejected: {err}");
                n_failures += 1;
            }
        }
    }

    let rec = LoopRecord {
        loop_index,
        start_ids,
        end_ids,
        n_start,
        n_end: n_start - n_failures,
        n_overlap,
        n_new,
        n_failures,
    };
    debug_assert!(rec.check_invariants());
    rec
}

#[derive(Debug, Error)]
pub enum SeedError {
    #[error("seed pair has wrong lengths")]
    DimensionMismatch,
    #[error("seed residual {residual:.3e} exceeds {gate:.3e}")]
    ResidualTooLarge { residual: f64, gate: f64 },
    #[error("seed refinement did not converge")]
    NoConvergence,
    #[error("system is not affine-linear in the parameters (term with joint parameter degree {degree})")]
    NotLinearInParams { degree: u32 },
    #[error("parameter coefficient matrix is rank deficient at the sample point")]
    RankDeficient,
    #[error("fabrication requires at least one parameter")]
    NoParameters,
}

/// Validates a user-supplied seed pair `(x*, p*)` and polishes it to the
/// seed residual tolerance.
pub fn seed_user(
    sys: &ParameterizedSystem,
    x: &[Complex64],
    p: &[Complex64],
) -> Result<(Vec<Complex64>, Vec<Complex64>), SeedError> {
    if x.len() != sys.n_vars() || p.len() != sys.n_params() {
        return Err(SeedError::DimensionMismatch);
    }
    let raw = inf_norm(&sys.eval_unchecked(x, p));
    if raw >= SEED_ACCEPT_GATE {
        return Err(SeedError::ResidualTooLarge { residual: raw, gate: SEED_ACCEPT_GATE });
    }
    let (refined, converged) = newton_refine(sys, x, p, SEED_RESIDUAL_TOL, 50);
    if !converged {
        return Err(SeedError::NoConvergence);
    }
    Ok((refined, p.to_vec()))
}

/// Splits `F(x; p) = A(x)·p + c(x)` for systems affine-linear in the
/// parameters jointly.
fn parameter_split(
    sys: &ParameterizedSystem,
    x: &[Complex64],
) -> Result<(CMat, Vec<Complex64>), SeedError> {
    let n = sys.n_vars();
    let np = sys.n_params();
    let mut a = CMat::zeros(n, np);
    let mut constant = vec![Complex64::new(0.0, 0.0); n];
    for (row, poly) in sys.polynomials().iter().enumerate() {
        for mono in poly {
            let var_part = {
                let mut v = mono.coefficient();
                for (&i, &e) in mono.var_exponents() {
                    v *= x[i].powu(e);
                }
                v
            };
            match mono.param_degree() {
                0 => constant[row] += var_part,
                1 => {
                    let (&k, _) = mono
                        .param_exponents()
                        .iter()
                        .next()
                        .expect("degree-1 term has a parameter");
                    a.add_to(row, k, var_part);
                }
                degree => return Err(SeedError::NotLinearInParams { degree }),
            }
        }
    }
    Ok((a, constant))
}

/// Fabricates a seed for a system affine-linear in the parameters: fixes
/// the supplied `x*` and solves `A(x*)·p = -c(x*)` for a random point of
/// the solution space (minimum-norm correction of a random Gaussian start,
/// which spreads the choice over the kernel).
pub fn fabricate_from_point<R: Rng + ?Sized>(
    sys: &ParameterizedSystem,
    x_star: &[Complex64],
    rng: &mut R,
) -> Result<(Vec<Complex64>, Vec<Complex64>), SeedError> {
    if x_star.len() != sys.n_vars() {
        return Err(SeedError::DimensionMismatch);
    }
    if sys.n_params() == 0 {
        return Err(SeedError::NoParameters);
    }
    let (a, constant) = parameter_split(sys, x_star)?;
    let np = sys.n_params();
    let p0: Vec<Complex64> = if np > sys.n_vars() {
        (0..np).map(|_| complex_gaussian(rng)).collect()
    } else {
        vec![Complex64::new(0.0, 0.0); np]
    };
    // Solve A·(p0 + δ) = -c via the normal equations A·Aᴴ·y = rhs, δ = Aᴴ·y.
    let residual: Vec<Complex64> = a
        .mul_vec(&p0)
        .iter()
        .zip(&constant)
        .map(|(ap, c)| -(ap + c))
        .collect();
    let ah = a.conj_transpose();
    let gram = a.mul_mat(&ah);
    let y = solve(&gram, &residual).ok_or(SeedError::RankDeficient)?;
    let delta = ah.mul_vec(&y);
    let p_star: Vec<Complex64> = p0.iter().zip(&delta).map(|(p, d)| p + d).collect();

    let (refined, converged) = newton_refine(sys, x_star, &p_star, SEED_RESIDUAL_TOL, 50);
    if !converged {
        return Err(SeedError::NoConvergence);
    }
    let check = inf_norm(&sys.eval_unchecked(&refined, &p_star));
    if check >= SEED_RESIDUAL_TOL {
        return Err(SeedError::ResidualTooLarge { residual: check, gate: SEED_RESIDUAL_TOL });
    }
    Ok((refined, p_star))
}

/// Fabricates a seed at a random complex Gaussian `x*`.
pub fn seed_fabricate<R: Rng + ?Sized>(
    sys: &ParameterizedSystem,
    rng: &mut R,
) -> Result<(Vec<Complex64>, Vec<Complex64>), SeedError> {
    let x_star: Vec<Complex64> = (0..sys.n_vars()).map(|_| complex_gaussian(rng)).collect();
    fabricate_from_point(sys, &x_star, rng)
}
