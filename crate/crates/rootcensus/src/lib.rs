//! Find and count the isolated solutions of a parameterized polynomial
//! system F(x; p) = 0 at a generic parameter.
//!
//! The pipeline has three legs:
//!
//! 1. **Monodromy search** ([`monodromy`]): random loops in parameter space
//!    transport the known solutions and land on (possibly) new ones. The
//!    deduplicated registry is a closed population and every loop is one
//!    capture-mark-recapture event.
//! 2. **Census estimation** ([`census`]): Lincoln-Petersen, Chapman, and
//!    windowed Schnabel estimators turn loop records into point estimates
//!    and 95% confidence intervals for the total root count.
//! 3. **Trace-test certification** ([`tracetest`]): once loops stop yielding
//!    new solutions, a parallelly moving bilinear slice checks that the
//!    witness centroid moves linearly, certifying completeness.
//!
//! [`popsim`] provides an algebra-free closed-population simulator used to
//! validate the estimators, and [`cli`] wires everything into the
//! `rootcensus` command-line tool.

pub mod census;
pub mod cli;
pub mod linalg;
pub mod monodromy;
pub mod polysys;
pub mod popsim;
pub mod tracetest;
pub mod tracker;

pub use census::{chapman, lincoln_petersen, schnabel, stopping_decision};
pub use census::{Bound, Estimate, EstimatorKind, StopConfig, StopDecision};
pub use monodromy::{random_loop, run_loop, Loop, LoopRecord, SolutionRegistry};
pub use polysys::{parse_system, Monomial, ParameterizedSystem};
pub use tracetest::{certify, extend_witness, trace_verdict, SlicedSystem, TraceCertificate, Verdict, WitnessSet};
pub use tracker::{track_segment, newton_refine, PathResult, PathStatus, SegmentPath, TrackOptions};
