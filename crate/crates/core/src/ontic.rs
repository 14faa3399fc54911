//! Explicit finite ontic models and the bookkeeping behind the bound.
//!
//! A model assigns each preparation `ψ_j` a distribution `μ_j` over
//! `L` ontic states and each pair measurement a response function
//! `ξ_i(λ) = P(m_i | λ)` with `Σ_i ξ_i(λ) = 1`. The model's outcome
//! probabilities are `P̃(m_i | ψ_{j_i}) = Σ_λ ξ_i(λ) μ_{j_i}(λ)`.
//!
//! Two pointwise facts make the inequality inescapable for *any* such
//! model:
//!
//! 1. since the three response functions sum to one at every λ,
//!    `Σ_i P̃(m_i|ψ_{j_i}) ≥ Σ_λ min(μ_0, μ_{j1}, μ_{j2})(λ)`
//!    (the triple overlap `ω̃_3`);
//! 2. writing `a_j(λ) = min(μ_0, μ_j)(λ) ≤ μ_0(λ)` and sorting,
//!    `Σ_{j1<j2} min(a_{j1}, a_{j2}) ≥ Σ_j a_j − μ_0` at every λ, hence
//!    `Σ_{j1<j2} ω̃_3(0, j1, j2) ≥ Σ_j ω_C(μ_0, μ_j) − 1`.
//!
//! Chaining the two gives `1 + Σ_pairs Σ_i P̃ ≥ Σ_j ω_C`:
//! [`model_inequality_slack`] is exactly the left side minus the right
//! and can never be negative. A maximally ψ-epistemic model additionally
//! has `ω_C = ω_Q`, which turns the slack statement into `S ≥ 1`.
//! [`random_model`] + the slack give a brute-force oracle for the
//! theorem, and [`psi_ontic_embedding`] builds the standard ψ-ontic
//! model (each state its own ontic point) that reproduces any target
//! table exactly — ψ-ontic models are unconstrained by the bound.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::Error;
use crate::rng::stream;
use crate::scenario::{all_pairs, Pair, ProbabilityTable, Scenario};
use crate::Result;

/// Largest supported number of ontic states; keeps brute-force sweeps
/// and validation costs bounded.
pub const MAX_LAMBDA: usize = 4096;

/// Row-sum tolerance for stored distributions.
const ROW_SUM_TOL: f64 = 1e-12;

/// Compensated (Kahan) sum, so validation does not accumulate error on
/// long rows.
fn kahan_sum(xs: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut carry = 0.0;
    for &x in xs {
        let y = x - carry;
        let t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    sum
}

fn check_distribution(row: &[f64], what: &str, tol: f64) -> Result<()> {
    if row.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    if let Some(bad) = row.iter().find(|&&x| x < 0.0) {
        return Err(Error::NotADistribution {
            detail: format!("{what} has a negative entry ({bad})"),
        });
    }
    let sum = kahan_sum(row);
    if (sum - 1.0).abs() > tol {
        return Err(Error::NotADistribution {
            detail: format!("{what} sums to {sum} (expected 1 within {tol:.0e})"),
        });
    }
    Ok(())
}

/// A finite ontic model for `n + 1` preparations and all pair
/// measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteOnticModel {
    /// `epistemic[j][λ] = μ_j(λ)`, j = 0..=n.
    epistemic: Vec<Vec<f64>>,
    /// `responses[pair][i][λ] = ξ_i(λ)`; for each λ the three outcomes
    /// form a distribution.
    responses: BTreeMap<Pair, [Vec<f64>; 3]>,
}

impl FiniteOnticModel {
    /// Validates normalization, positivity, key completeness and shapes.
    pub fn new(
        epistemic: Vec<Vec<f64>>,
        responses: BTreeMap<Pair, [Vec<f64>; 3]>,
    ) -> Result<Self> {
        if epistemic.len() < 4 {
            return Err(Error::BadN {
                n: epistemic.len().saturating_sub(1),
                detail: "a model needs μ_0 plus n ≥ 3 preparation distributions",
            });
        }
        let n = epistemic.len() - 1;
        let lambda = epistemic[0].len();
        if lambda == 0 || lambda > MAX_LAMBDA {
            return Err(Error::BadOptions {
                detail: format!("lambda_count must be in 1..={MAX_LAMBDA}, got {lambda}"),
            });
        }
        for (j, row) in epistemic.iter().enumerate() {
            if row.len() != lambda {
                return Err(Error::LengthMismatch { left: row.len(), right: lambda });
            }
            check_distribution(row, &format!("μ_{j}"), ROW_SUM_TOL)?;
        }

        for pair in all_pairs(n) {
            if !responses.contains_key(&pair) {
                return Err(Error::KeyMismatch {
                    detail: format!("missing response function for pair {pair}"),
                });
            }
        }
        for (pair, xi) in &responses {
            if pair.j2() > n {
                return Err(Error::KeyMismatch {
                    detail: format!("unexpected response key {pair} for n = {n}"),
                });
            }
            for row in xi {
                if row.len() != lambda {
                    return Err(Error::LengthMismatch { left: row.len(), right: lambda });
                }
                if row.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite);
                }
                if let Some(bad) = row.iter().find(|&&x| x < 0.0) {
                    return Err(Error::NotADistribution {
                        detail: format!("response {pair} has a negative entry ({bad})"),
                    });
                }
            }
            for l in 0..lambda {
                let s = xi[0][l] + xi[1][l] + xi[2][l];
                if (s - 1.0).abs() > ROW_SUM_TOL {
                    return Err(Error::NotADistribution {
                        detail: format!(
                            "response {pair} at λ = {l} sums to {s} over outcomes"
                        ),
                    });
                }
            }
        }

        Ok(Self { epistemic, responses })
    }

    pub fn n(&self) -> usize {
        self.epistemic.len() - 1
    }

    pub fn lambda_count(&self) -> usize {
        self.epistemic[0].len()
    }

    /// `μ_j` for j = 0..=n.
    pub fn epistemic(&self) -> &[Vec<f64>] {
        &self.epistemic
    }

    pub fn responses(&self) -> &BTreeMap<Pair, [Vec<f64>; 3]> {
        &self.responses
    }
}

/// Classical overlap ω_C(a, b) = Σ_λ min(a(λ), b(λ)) of two
/// distributions over the same ontic space.
pub fn classical_overlap(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    // Free-standing inputs get a looser sum tolerance than stored rows.
    check_distribution(a, "first distribution", 1e-9)?;
    check_distribution(b, "second distribution", 1e-9)?;
    Ok(a.iter().zip(b).map(|(&x, &y)| x.min(y)).sum())
}

/// Triple overlap ω̃_3(a, b, c) = Σ_λ min(a, b, c)(λ).
pub fn triple_overlap(a: &[f64], b: &[f64], c: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    if a.len() != c.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: c.len() });
    }
    Ok(a.iter()
        .zip(b)
        .zip(c)
        .map(|((&x, &y), &z)| x.min(y).min(z))
        .sum())
}

/// The model's outcome probabilities `P̃(m_i | ψ_{j_i})` for every pair,
/// with targets `(0, j1, j2)`.
pub fn model_probabilities(model: &FiniteOnticModel) -> Result<ProbabilityTable> {
    let mut entries = BTreeMap::new();
    for (pair, xi) in model.responses() {
        let targets = pair.outcome_targets();
        let mut row = [0.0; 3];
        for (i, &t) in targets.iter().enumerate() {
            row[i] = xi[i]
                .iter()
                .zip(&model.epistemic()[t])
                .map(|(&x, &m)| x * m)
                .sum();
        }
        entries.insert(*pair, row);
    }
    ProbabilityTable::new(entries)
}

/// Slack of the overlap bound for an explicit model:
///
/// ```text
/// 1 + Σ_pairs Σ_i P̃(m_i|ψ_{j_i}) − Σ_j ω_C(μ_0, μ_j)  ≥  0.
/// ```
///
/// Non-negative for every valid model; a brute-force probe of the
/// theorem the score `S` rests on.
pub fn model_inequality_slack(model: &FiniteOnticModel) -> Result<f64> {
    let table = model_probabilities(model)?;
    let mut total = 0.0;
    for (_, row) in table.entries() {
        total += row[0] + row[1] + row[2];
    }
    let mu0 = &model.epistemic()[0];
    let mut omega_c = 0.0;
    for j in 1..=model.n() {
        let mu = &model.epistemic()[j];
        omega_c += mu0
            .iter()
            .zip(mu)
            .map(|(&x, &y)| x.min(y))
            .sum::<f64>();
    }
    Ok(1.0 + total - omega_c)
}

/// The standard ψ-ontic embedding: `L = n + 1` ontic points, `μ_j` a
/// point mass at λ = j. Response functions are chosen so that the model
/// reproduces `table` exactly: at λ = j_i outcome `m_i` fires with the
/// tabulated probability and the remainder splits evenly, and λ outside
/// the pair's targets answers uniformly.
pub fn psi_ontic_embedding(
    scenario: &Scenario,
    table: &ProbabilityTable,
) -> Result<FiniteOnticModel> {
    table.check_keys(scenario)?;
    let n = scenario.n();
    let lambda = n + 1;

    let mut epistemic = vec![vec![0.0; lambda]; n + 1];
    for (j, row) in epistemic.iter_mut().enumerate() {
        row[j] = 1.0;
    }

    let mut responses = BTreeMap::new();
    for pair in scenario.pairs() {
        let targets = pair.outcome_targets();
        let row = table.get(pair).expect("checked keys");
        let mut xi = [vec![0.0; lambda], vec![0.0; lambda], vec![0.0; lambda]];
        for l in 0..lambda {
            if let Some(i) = targets.iter().position(|&t| t == l) {
                let p = row[i];
                for k in 0..3 {
                    xi[k][l] = if k == i { p } else { (1.0 - p) / 2.0 };
                }
            } else {
                for k in 0..3 {
                    xi[k][l] = 1.0 / 3.0;
                }
            }
        }
        responses.insert(pair, xi);
    }

    FiniteOnticModel::new(epistemic, responses)
}

/// A random valid model: every `μ_j` and every response column is an
/// independent flat-Dirichlet draw, seeded through named substreams so
/// the result is reproducible.
///
/// `pairs` must be exactly `all_pairs(n)` — the slack bound quantifies
/// over all pairs, so partial models are not admitted.
pub fn random_model(
    lambda_count: usize,
    n: usize,
    pairs: &[Pair],
    seed: u64,
) -> Result<FiniteOnticModel> {
    if n < 3 {
        return Err(Error::BadN { n, detail: "random models need n ≥ 3" });
    }
    if lambda_count == 0 || lambda_count > MAX_LAMBDA {
        return Err(Error::BadOptions {
            detail: format!("lambda_count must be in 1..={MAX_LAMBDA}, got {lambda_count}"),
        });
    }
    let expected = all_pairs(n);
    if pairs != expected.as_slice() {
        return Err(Error::KeyMismatch {
            detail: format!(
                "random_model needs the complete pair set for n = {n} in order, got {} pairs",
                pairs.len()
            ),
        });
    }

    let mut epistemic = Vec::with_capacity(n + 1);
    for j in 0..=n {
        let mut rng = stream(seed, "ontic/mu", j as u64);
        epistemic.push(dirichlet_row(lambda_count, &mut rng));
    }

    let mut responses = BTreeMap::new();
    for (k, pair) in expected.iter().enumerate() {
        let mut rng = stream(seed, "ontic/xi", k as u64);
        let mut xi = [
            vec![0.0; lambda_count],
            vec![0.0; lambda_count],
            vec![0.0; lambda_count],
        ];
        for l in 0..lambda_count {
            let col = dirichlet_row(3, &mut rng);
            for i in 0..3 {
                xi[i][l] = col[i];
            }
        }
        responses.insert(*pair, xi);
    }

    FiniteOnticModel::new(epistemic, responses)
}

/// Flat Dirichlet draw: normalized iid exponentials, renormalized with a
/// compensated sum so long rows still pass the 1e-12 validation.
fn dirichlet_row<R: Rng>(len: usize, rng: &mut R) -> Vec<f64> {
    let mut row: Vec<f64> = (0..len)
        .map(|_| {
            let u: f64 = rng.random();
            -(1.0 - u).ln()
        })
        .collect();
    let sum = kahan_sum(&row);
    for x in &mut row {
        *x /= sum;
    }
    // One correction pass: dividing by the sum leaves O(len·ε) residue.
    let sum = kahan_sum(&row);
    for x in &mut row {
        *x /= sum;
    }
    row
}
