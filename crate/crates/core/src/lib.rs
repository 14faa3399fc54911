//! Overlap inequalities for epistemic models of pure quantum states.
//!
//! A preparation `ψ` may be modelled by a distribution `μ_ψ` over ontic
//! states `λ`. The model is *maximally ψ-epistemic* when the classical
//! overlap `ω_C(μ_a, μ_b) = Σ_λ min(μ_a(λ), μ_b(λ))` accounts for the full
//! quantum overlap `ω_Q(a, b) = 1 − √(1 − |⟨a|b⟩|²)` for every pair of
//! states. Such models obey
//!
//! ```text
//!     1 + Σ_{j1<j2} Σ_i P_{M_{j1 j2}}(m_i | ψ_{j_i})
//! S = ─────────────────────────────────────────────── ≥ 1,
//!               Σ_{j=1..n} ω_Q(ψ_0, ψ_j)
//! ```
//!
//! where each three-outcome measurement `M_{j1 j2}` tries to
//! antidistinguish the triple `(ψ_0, ψ_{j1}, ψ_{j2})`: outcome `m_i` is
//! the "not `ψ_{j_i}`" answer, with `(j_0, j_1, j_2) = (0, j1, j2)`.
//! Finding states and measurements with `S < 1` certifies that *no*
//! maximally ψ-epistemic model reproduces quantum theory, and bounds the
//! fraction of ω_Q explainable by ontic overlap via `κ_0 ≤ min(S, 1)`.
//!
//! The crate provides:
//!
//! - [`quantum`] — pure states, POVM effects and Born-rule plumbing;
//! - [`scenario`] — a bundle of `n + 1` states with one measurement per
//!   pair, plus probability tables keyed the same way;
//! - [`inequality`] — the score `S`, its finite-detection-efficiency
//!   variant `S^(η)`, the critical efficiency `η*` and the additive noise
//!   robustness `ε_0`;
//! - [`optimizer`] — seeded multi-restart alternating descent over states
//!   and rank-one measurement triads;
//! - [`sim`] — finite-count photon statistics with preparation,
//!   measurement and drift imperfections, plus bootstrap error bars;
//! - [`ontic`] — explicit finite ontic models, the overlap bookkeeping
//!   behind the inequality, and a brute-force check that the bound really
//!   holds for arbitrary models.
//!
//! All randomness flows from a single `u64` seed through named
//! [`rng`] substreams, so every public operation is reproducible
//! bit-for-bit for a fixed seed, independent of thread schedule.

pub use nalgebra;

pub mod error;
pub mod inequality;
pub mod ontic;
pub mod optimizer;
pub mod quantum;
pub mod rng;
pub mod scenario;
pub mod sim;

pub use error::Error;
pub use inequality::{efficiency_threshold, noise_robustness, s_eta, s_value, ScoreReport};
pub use ontic::{
    classical_overlap, model_inequality_slack, model_probabilities, psi_ontic_embedding,
    random_model, triple_overlap, FiniteOnticModel,
};
pub use optimizer::{
    optimize_measurement_for_triple, optimize_scenario, random_scenario, reoptimize,
    OptimizationResult, OptimizerOptions,
};
pub use quantum::{
    born_probability, discrimination_success, make_state, quantum_overlap, random_unit_vector,
    random_unitary, validate_measurement, Effect, Field, Measurement, MeasurementDiagnostics,
    PureState,
};
pub use scenario::{Pair, ProbabilityTable, Scenario};
pub use sim::{
    deviation_histogram, estimate_s, perturb_table, simulate_counts, CountRecord, NoiseModel,
    SEstimate,
};

/// Complex amplitude type used throughout the crate.
pub type Complex64 = num_complex::Complex64;

/// Result alias for fallible operations in this crate.
pub type Result<T> = std::result::Result<T, Error>;
