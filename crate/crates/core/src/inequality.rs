//! The overlap inequality: score `S`, finite-efficiency score `S^(η)`,
//! the critical detection efficiency `η*` and the noise robustness `ε_0`.
//!
//! For a scenario with pair measurements `M_{j1 j2}` and a probability
//! table `p` (Born-rule, modelled or measured),
//!
//! ```text
//! S = (1 + Σ_pairs Σ_i p_i) / Σ_j ω_Q(ψ_0, ψ_j).
//! ```
//!
//! Maximally ψ-epistemic models force `S ≥ 1`, so `S < 1` excludes them;
//! in general at most a fraction `κ_0 ≤ min(S, 1)` of the quantum
//! overlap can be classical.
//!
//! When each three-outcome measurement only registers a click with
//! efficiency `η` and no-click rounds are discarded symmetrically, each
//! observed probability becomes `(1 − η)/... ` — effectively every
//! per-pair sum `Σ_i p_i` is replaced by `(1 − η) + η Σ_i p_i`, giving
//! the affine-in-η score
//!
//! ```text
//! S^(η) = (1 + Σ_pairs [(1 − η) + η Σ_i p_i]) / Σ_j ω_Q,
//! ```
//!
//! equal to 1 exactly at the threshold
//!
//! ```text
//! η* = (1 + m − Σ_j ω_Q) / (m − Σ_pairs Σ_i p_i),      m = n(n−1)/2.
//! ```
//!
//! Separately, if every probability entry is inflated additively by ε,
//! the score reaches 1 at the noise robustness
//!
//! ```text
//! ε_0 = (Σ_j ω_Q − 1 − Σ_pairs Σ_i p_i) / (3m),
//! ```
//!
//! defined only for violating tables (`S < 1`).

use std::collections::BTreeMap;

use crate::error::Error;
use crate::scenario::{Pair, ProbabilityTable, Scenario};
use crate::Result;

/// Everything [`s_value`] knows about a scored table.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    /// The score S = numerator / denominator.
    pub s: f64,
    /// 1 + Σ_pairs Σ_i p_i.
    pub numerator: f64,
    /// Σ_j ω_Q(ψ_0, ψ_j), cached by the scenario.
    pub denominator: f64,
    /// min(S, 1): an upper bound on the fraction of quantum overlap that
    /// any ψ-epistemic model can explain classically.
    pub kappa0_bound: f64,
    /// Σ_i p_i for each pair, in pair order.
    pub per_pair_sums: BTreeMap<Pair, f64>,
}

/// Sum of all table entries, accumulated in pair order; also returns the
/// per-pair row sums.
fn table_sums(table: &ProbabilityTable) -> (f64, BTreeMap<Pair, f64>) {
    let mut per_pair = BTreeMap::new();
    let mut total = 0.0;
    for (pair, row) in table.entries() {
        let s = row[0] + row[1] + row[2];
        per_pair.insert(*pair, s);
        total += s;
    }
    (total, per_pair)
}

fn checked_denominator(scenario: &Scenario) -> Result<f64> {
    let d = scenario.overlap_sum();
    if d <= 1e-6 {
        return Err(Error::DegenerateDenominator { sum: d });
    }
    Ok(d)
}

/// Scores a probability table against a scenario.
///
/// The table must be keyed by exactly the scenario's pairs.
pub fn s_value(scenario: &Scenario, table: &ProbabilityTable) -> Result<ScoreReport> {
    table.check_keys(scenario)?;
    let denominator = checked_denominator(scenario)?;
    let (total, per_pair_sums) = table_sums(table);
    let numerator = 1.0 + total;
    let s = numerator / denominator;
    Ok(ScoreReport {
        s,
        numerator,
        denominator,
        kappa0_bound: s.min(1.0),
        per_pair_sums,
    })
}

/// The score at detection efficiency `η ∈ [0, 1]`; affine in η, and equal
/// to `s_value(...).s` at η = 1 by the same arithmetic.
pub fn s_eta(scenario: &Scenario, table: &ProbabilityTable, eta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&eta) || !eta.is_finite() {
        return Err(Error::EtaOutOfRange { eta });
    }
    table.check_keys(scenario)?;
    let denominator = checked_denominator(scenario)?;
    // Accumulate in the same order as `s_value` so that η = 1 reproduces
    // its result bit for bit ((1 − η) vanishes and η·s multiplies by one).
    let mut total = 0.0;
    for (_, row) in table.entries() {
        total += (1.0 - eta) + eta * (row[0] + row[1] + row[2]);
    }
    Ok((1.0 + total) / denominator)
}

/// Critical detection efficiency η* at which `S^(η*) = 1`.
///
/// Returns the formula value even when it exceeds 1 (meaning the table
/// does not violate the inequality at any efficiency); errors with
/// [`Error::NoThreshold`] when the denominator `m − Σ Σ p` is not
/// positive, since no finite crossing exists then.
pub fn efficiency_threshold(scenario: &Scenario, table: &ProbabilityTable) -> Result<f64> {
    table.check_keys(scenario)?;
    let overlap = checked_denominator(scenario)?;
    let (total, _) = table_sums(table);
    let m = table.len() as f64;
    let denom = m - total;
    if denom <= 0.0 {
        return Err(Error::NoThreshold);
    }
    Ok((1.0 + m - overlap) / denom)
}

/// Additive noise robustness ε_0: the uniform increase of every
/// probability entry that drags the score up to exactly 1.
///
/// Only defined for violating tables (S < 1); otherwise
/// [`Error::NotViolating`].
pub fn noise_robustness(scenario: &Scenario, table: &ProbabilityTable) -> Result<f64> {
    let report = s_value(scenario, table)?;
    if report.s >= 1.0 {
        return Err(Error::NotViolating { s: report.s });
    }
    let m = table.len() as f64;
    Ok((report.denominator - report.numerator) / (3.0 * m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{Effect, Field, Measurement, PureState};
    use crate::scenario::all_pairs;
    use approx::assert_relative_eq;
    use std::collections::BTreeMap;

    fn basis_measurement() -> Measurement {
        let effects = (0..3)
            .map(|k| {
                let mut v = vec![0.0; 3];
                v[k] = 1.0;
                Effect::projector(&PureState::from_real(&v).unwrap())
            })
            .collect();
        Measurement::new(effects).unwrap()
    }

    /// ψ0 = e1, ψ1 = ψ2 = ψ3 all equal to e1: every overlap is 1 and the
    /// basis measurements give per-pair rows [1, 0, 0].
    fn coincident_scenario() -> Scenario {
        let states = (0..4)
            .map(|_| PureState::from_real(&[1.0, 0.0, 0.0]).unwrap())
            .collect();
        let meas = all_pairs(3)
            .into_iter()
            .map(|p| (p, basis_measurement()))
            .collect();
        Scenario::new(Field::Real, states, meas).unwrap()
    }

    fn tilted_scenario() -> Scenario {
        let states = vec![
            PureState::from_real(&[1.0, 0.0, 0.0]).unwrap(),
            PureState::from_real(&[0.8, 0.6, 0.0]).unwrap(),
            PureState::from_real(&[0.8, 0.0, 0.6]).unwrap(),
            PureState::from_real(&[0.8, 0.42, -0.42]).unwrap(),
        ];
        let meas = all_pairs(3)
            .into_iter()
            .map(|p| (p, basis_measurement()))
            .collect();
        Scenario::new(Field::Real, states, meas).unwrap()
    }

    fn flat_table(scenario: &Scenario, row: [f64; 3]) -> ProbabilityTable {
        let entries: BTreeMap<_, _> = scenario.pairs().map(|p| (p, row)).collect();
        ProbabilityTable::new(entries).unwrap()
    }

    #[test]
    fn s_value_on_hand_checkable_scenario() {
        // Numerator 1 + 3·(1+0+0) = 4, denominator 3 ⇒ S = 4/3,
        // κ0 bound saturates at 1.
        let sc = coincident_scenario();
        let t = sc.born_table().unwrap();
        let r = s_value(&sc, &t).unwrap();
        assert_relative_eq!(r.numerator, 4.0, epsilon = 1e-12);
        assert_relative_eq!(r.denominator, 3.0, epsilon = 1e-12);
        assert_relative_eq!(r.s, 4.0 / 3.0, epsilon = 1e-12);
        assert_eq!(r.kappa0_bound, 1.0);
        for (_, sum) in &r.per_pair_sums {
            assert_relative_eq!(*sum, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn s_value_rejects_mismatched_keys() {
        let sc = coincident_scenario();
        let mut entries: BTreeMap<_, _> =
            sc.pairs().map(|p| (p, [0.1, 0.1, 0.1])).collect();
        entries.remove(&Pair::new(2, 3).unwrap());
        let t = ProbabilityTable::new(entries).unwrap();
        assert!(matches!(
            s_value(&sc, &t),
            Err(Error::KeyMismatch { .. })
        ));
    }

    #[test]
    fn s_eta_is_affine_and_matches_s_at_full_efficiency() {
        let sc = tilted_scenario();
        let t = flat_table(&sc, [0.11, 0.23, 0.31]);
        let s1 = s_eta(&sc, &t, 1.0).unwrap();
        assert_eq!(s1, s_value(&sc, &t).unwrap().s);

        let (a, b, tt) = (0.2, 0.9, 0.37);
        let mix = s_eta(&sc, &t, tt * a + (1.0 - tt) * b).unwrap();
        let combo = tt * s_eta(&sc, &t, a).unwrap() + (1.0 - tt) * s_eta(&sc, &t, b).unwrap();
        assert_relative_eq!(mix, combo, epsilon = 1e-12);

        assert!(matches!(
            s_eta(&sc, &t, -0.01),
            Err(Error::EtaOutOfRange { .. })
        ));
        assert!(matches!(
            s_eta(&sc, &t, 1.01),
            Err(Error::EtaOutOfRange { .. })
        ));
    }

    #[test]
    fn threshold_restores_unit_score() {
        // A strongly violating (hand-made) table so that η* ≤ 1.
        let sc = tilted_scenario();
        let t = flat_table(&sc, [0.01, 0.02, 0.03]);
        let eta = efficiency_threshold(&sc, &t).unwrap();
        assert!(eta <= 1.0, "η* = {eta}");
        assert_relative_eq!(s_eta(&sc, &t, eta).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn threshold_requires_positive_denominator() {
        // Per-pair sums of 1 each ⇒ m − ΣΣp = 0 ⇒ no finite threshold.
        let sc = coincident_scenario();
        let t = sc.born_table().unwrap();
        assert!(matches!(
            efficiency_threshold(&sc, &t),
            Err(Error::NoThreshold)
        ));
    }

    #[test]
    fn noise_robustness_shifts_score_to_one() {
        let sc = tilted_scenario();
        let t = flat_table(&sc, [0.01, 0.02, 0.03]);
        let eps = noise_robustness(&sc, &t).unwrap();
        assert!(eps > 0.0);
        // Push every entry up by ε0 and re-score: S must hit 1 exactly.
        let bumped = flat_table(&sc, [0.01 + eps, 0.02 + eps, 0.03 + eps]);
        assert_relative_eq!(s_value(&sc, &bumped).unwrap().s, 1.0, epsilon = 1e-12);

        let loud = sc.born_table().unwrap();
        assert!(matches!(
            noise_robustness(&sc, &loud),
            Err(Error::NotViolating { .. })
        ));
    }
}
