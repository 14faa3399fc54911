//! Scenarios: `n + 1` states plus one antidistinguishing measurement per
//! pair, and probability tables keyed the same way.
//!
//! The reference state carries index 0 and the remaining states 1..=n.
//! For each unordered pair `(j1, j2)` with `1 ≤ j1 < j2 ≤ n` a scenario
//! holds one three-outcome measurement acting on the triple
//! `(ψ_0, ψ_{j1}, ψ_{j2})`; outcome `m_i` is read as "the preparation
//! was not `ψ_{j_i}`" with `(j_0, j_1, j_2) = (0, j1, j2)`.
//!
//! Construction is strict: dimensions and the number field must agree
//! everywhere, the measurement key set must be exactly all pairs, every
//! measurement must be a valid POVM, and the overlap denominator
//! `Σ_j ω_Q(ψ_0, ψ_j)` must be comfortably nonzero. Anything loaded
//! through this type is therefore safe to feed to the scoring and
//! simulation routines.

use std::collections::BTreeMap;

use crate::error::Error;
use crate::quantum::{
    born_probability, clamp_unit, quantum_overlap, validate_measurement, Field, Measurement,
    PureState,
};
use crate::Result;

/// Tolerances used when admitting a scenario.
const HERMITIAN_TOL: f64 = 1e-9;
const PSD_TOL: f64 = 1e-9;
const EIGENVALUE_CAP_TOL: f64 = 1e-9;
const COMPLETENESS_TOL: f64 = 1e-8;
const MIN_OVERLAP_SUM: f64 = 1e-6;

/// An unordered pair of state indices, stored as `1 ≤ j1 < j2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pair {
    j1: usize,
    j2: usize,
}

impl Pair {
    pub fn new(j1: usize, j2: usize) -> Result<Self> {
        if j1 < 1 || j1 >= j2 {
            return Err(Error::BadOptions {
                detail: format!("pair indices must satisfy 1 ≤ j1 < j2, got ({j1},{j2})"),
            });
        }
        Ok(Self { j1, j2 })
    }

    pub fn j1(self) -> usize {
        self.j1
    }

    pub fn j2(self) -> usize {
        self.j2
    }

    /// The state indices probed by the three outcomes: `(0, j1, j2)`.
    pub fn outcome_targets(self) -> [usize; 3] {
        [0, self.j1, self.j2]
    }
}

impl std::fmt::Display for Pair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.j1, self.j2)
    }
}

/// All pairs for a given `n`, in ascending (j1, j2) order — the order in
/// which every keyed iteration in this crate proceeds.
pub fn all_pairs(n: usize) -> Vec<Pair> {
    let mut pairs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for j1 in 1..=n {
        for j2 in (j1 + 1)..=n {
            pairs.push(Pair { j1, j2 });
        }
    }
    pairs
}

/// A complete, validated bundle of states and pairwise measurements.
#[derive(Debug, Clone)]
pub struct Scenario {
    field: Field,
    states: Vec<PureState>,
    measurements: BTreeMap<Pair, Measurement>,
    /// Cached ω_Q(ψ_0, ψ_j) for j = 1..=n.
    overlaps: Vec<f64>,
    overlap_sum: f64,
}

impl Scenario {
    /// Validates and assembles a scenario.
    ///
    /// `states[0]` is the reference state; `measurements` must hold
    /// exactly one entry per pair from [`all_pairs`]`(states.len() - 1)`.
    pub fn new(
        field: Field,
        states: Vec<PureState>,
        measurements: BTreeMap<Pair, Measurement>,
    ) -> Result<Self> {
        if states.len() < 4 {
            return Err(Error::BadN {
                n: states.len().saturating_sub(1),
                detail: "a scenario needs a reference state plus n ≥ 3 others",
            });
        }
        let n = states.len() - 1;
        let dim = states[0].dim();

        for (j, s) in states.iter().enumerate() {
            if s.dim() != dim {
                return Err(Error::InvalidScenario {
                    detail: format!("state {j} has dimension {}, expected {dim}", s.dim()),
                });
            }
            if field == Field::Real && !s.is_real() {
                return Err(Error::InvalidScenario {
                    detail: format!(
                        "state {j} has a nonzero imaginary amplitude but the field is real"
                    ),
                });
            }
        }

        let expected = all_pairs(n);
        for pair in &expected {
            if !measurements.contains_key(pair) {
                return Err(Error::KeyMismatch {
                    detail: format!("missing measurement for pair {pair}"),
                });
            }
        }
        for pair in measurements.keys() {
            if pair.j2 > n {
                return Err(Error::KeyMismatch {
                    detail: format!("unexpected measurement key {pair} for n = {n}"),
                });
            }
        }

        for (pair, m) in &measurements {
            if m.dim() != dim {
                return Err(Error::InvalidScenario {
                    detail: format!(
                        "measurement {pair} has dimension {}, expected {dim}",
                        m.dim()
                    ),
                });
            }
            if field == Field::Real && !m.is_real() {
                return Err(Error::InvalidScenario {
                    detail: format!(
                        "measurement {pair} has a nonzero imaginary entry but the field is real"
                    ),
                });
            }
            for (i, e) in m.effects().iter().enumerate() {
                let res = e.hermitian_residual();
                if res > HERMITIAN_TOL {
                    return Err(Error::InvalidScenario {
                        detail: format!(
                            "measurement {pair}: effect {i} is not Hermitian (max |E − E†| = {res:.3e})"
                        ),
                    });
                }
                let (lo, hi) = e.eigenvalue_range();
                if lo < -PSD_TOL {
                    return Err(Error::InvalidScenario {
                        detail: format!(
                            "measurement {pair}: effect {i} is not positive semidefinite (min eigenvalue = {lo:.3e})"
                        ),
                    });
                }
                if hi > 1.0 + EIGENVALUE_CAP_TOL {
                    return Err(Error::InvalidScenario {
                        detail: format!(
                            "measurement {pair}: effect {i} has an eigenvalue above 1 (max eigenvalue = {hi:.6})"
                        ),
                    });
                }
            }
            let diag = validate_measurement(m, COMPLETENESS_TOL)?;
            if diag.completeness_residual > COMPLETENESS_TOL {
                return Err(Error::InvalidScenario {
                    detail: format!(
                        "measurement {pair}: effects do not sum to the identity (residual = {:.3e})",
                        diag.completeness_residual
                    ),
                });
            }
        }

        let mut overlaps = Vec::with_capacity(n);
        for j in 1..=n {
            overlaps.push(quantum_overlap(&states[0], &states[j])?);
        }
        let overlap_sum: f64 = overlaps.iter().sum();
        if overlap_sum <= MIN_OVERLAP_SUM {
            return Err(Error::DegenerateDenominator { sum: overlap_sum });
        }

        Ok(Self { field, states, measurements, overlaps, overlap_sum })
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn dim(&self) -> usize {
        self.states[0].dim()
    }

    /// Number of non-reference states.
    pub fn n(&self) -> usize {
        self.states.len() - 1
    }

    /// All states, reference first.
    pub fn states(&self) -> &[PureState] {
        &self.states
    }

    pub fn state(&self, j: usize) -> &PureState {
        &self.states[j]
    }

    pub fn measurements(&self) -> &BTreeMap<Pair, Measurement> {
        &self.measurements
    }

    pub fn measurement(&self, pair: Pair) -> Option<&Measurement> {
        self.measurements.get(&pair)
    }

    pub fn pairs(&self) -> impl Iterator<Item = Pair> + '_ {
        self.measurements.keys().copied()
    }

    /// Cached ω_Q(ψ_0, ψ_j), j = 1..=n.
    pub fn overlaps(&self) -> &[f64] {
        &self.overlaps
    }

    /// Σ_j ω_Q(ψ_0, ψ_j) — the denominator of the score.
    pub fn overlap_sum(&self) -> f64 {
        self.overlap_sum
    }

    /// Born-rule probability table: for each pair, `P(m_i | ψ_{j_i})`
    /// with targets `(0, j1, j2)`.
    pub fn born_table(&self) -> Result<ProbabilityTable> {
        let mut entries = BTreeMap::new();
        for (pair, m) in &self.measurements {
            let targets = pair.outcome_targets();
            let mut row = [0.0; 3];
            for (i, &t) in targets.iter().enumerate() {
                row[i] = born_probability(&self.states[t], &m.effects()[i])?;
            }
            entries.insert(*pair, row);
        }
        ProbabilityTable::new(entries)
    }
}

/// Outcome probabilities `P(m_i | ψ_{j_i})` for each pair, whether from
/// the Born rule, an ontic model or an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityTable {
    entries: BTreeMap<Pair, [f64; 3]>,
}

impl ProbabilityTable {
    /// Admits entries that are probabilities up to 1e-9 of float slack
    /// (which is clamped away); anything further out is rejected.
    pub fn new(entries: BTreeMap<Pair, [f64; 3]>) -> Result<Self> {
        let mut clamped = BTreeMap::new();
        for (pair, row) in entries {
            let mut out = [0.0; 3];
            for (i, &p) in row.iter().enumerate() {
                if !p.is_finite() {
                    return Err(Error::NonFinite);
                }
                let c = clamp_unit(p, 1e-9);
                if !(0.0..=1.0).contains(&c) {
                    return Err(Error::ProbabilityOutOfRange {
                        j1: pair.j1,
                        j2: pair.j2,
                        outcome: i,
                        value: p,
                    });
                }
                out[i] = c;
            }
            clamped.insert(pair, out);
        }
        Ok(Self { entries: clamped })
    }

    pub fn entries(&self) -> &BTreeMap<Pair, [f64; 3]> {
        &self.entries
    }

    pub fn get(&self, pair: Pair) -> Option<&[f64; 3]> {
        self.entries.get(&pair)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Errors unless this table is keyed by exactly the scenario's pairs.
    pub fn check_keys(&self, scenario: &Scenario) -> Result<()> {
        for pair in scenario.pairs() {
            if !self.entries.contains_key(&pair) {
                return Err(Error::KeyMismatch {
                    detail: format!("table is missing pair {pair}"),
                });
            }
        }
        for pair in self.entries.keys() {
            if scenario.measurement(*pair).is_none() {
                return Err(Error::KeyMismatch {
                    detail: format!("table has extra pair {pair}"),
                });
            }
        }
        Ok(())
    }
}
