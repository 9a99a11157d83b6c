//! Hint-assisted adaptive control of linear quadratic regulators.
//!
//! The crate is organised bottom-up:
//!
//! * [`control`] holds exact LQR mathematics (Riccati and Lyapunov solvers,
//!   infinite-horizon cost, spectral radius, cost-based stability
//!   certificates).
//! * [`estimation`] holds the regularized least-squares identification
//!   routines and the hint-augmented Gram algebra, including the closed-form
//!   estimate identities used as oracles.
//! * [`hints`] is the privileged hint oracle. It owns the ground truth and
//!   hands controllers nothing but the combined hint matrix.
//! * [`controllers`] implements the epoch-based adaptive controllers (B-hint,
//!   A-hint with curvature search, the scalar external-estimate variant) and
//!   the comparison baselines.
//! * [`simulation`] rolls a plant forward under any [`controllers::Policy`],
//!   keeps the regret ledger and evaluates the high-probability events on a
//!   realized run.
//! * [`harness`] wires everything into seed sweeps, regret-growth fits and
//!   the `hinted-lqr` command line tool.

pub mod control;
pub mod controllers;
pub mod estimation;
pub mod harness;
pub mod hints;
pub mod linalg;
pub mod rng;
pub mod simulation;

pub use control::{RiccatiSolution, StabilityCertificate, SystemTruth};
pub use controllers::{ControllerConfig, Phase, Policy};
pub use estimation::{EstimatePair, GramAccumulator, HintedGram};
pub use hints::{HintMode, HintProvider, HintSchedule, OracleHints};
pub use rng::CounterRng;
pub use simulation::{rollout, RegretLedger, RolloutOptions, Trajectory};
