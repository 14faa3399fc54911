//! Finite-count experiment simulation and error bars.
//!
//! The simulated experiment mirrors the heralded-photon workflow: for
//! each pair and each outcome `m_i` the source prepares `ψ_{j_i}` a
//! Poisson-distributed number of times (the heralds), the state is
//! slightly wrong (preparation fidelity drawn per state), the
//! three-outcome measurement is slightly depolarized (a per-setting
//! fidelity drop mixes the outcome with a uniform one), the source
//! intensity drifts between settings, and each true event is detected
//! with some efficiency. Clicks for `m_i` are then binomial in the
//! heralds.
//!
//! [`estimate_s`] turns a count record back into a score: relative
//! frequencies give the point estimate and a parametric bootstrap
//! (independently Poisson-resampling clicks and heralds per setting)
//! gives the 1σ error bar.
//!
//! Poisson sampling is implemented here rather than borrowed: small
//! means use the textbook inverse transform from k = 0, large means use
//! an inverse transform enumerated outward from the mode (numerically
//! stable where the k = 0 start underflows), and above
//! [`POISSON_NORMAL_CUTOFF`] a rounded normal approximation takes over.

use std::collections::BTreeMap;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Error;
use crate::inequality::s_value;
use crate::quantum::{born_probability, random_unit_vector, Field, PureState};
use crate::rng::stream;
use crate::scenario::{Pair, ProbabilityTable, Scenario};
use crate::Result;

/// Mean below which Poisson sampling starts its inverse transform at
/// k = 0 (exp(−mean) is comfortably above the underflow threshold).
pub const POISSON_SMALL_MEAN_CUTOFF: f64 = 30.0;
/// Mean above which a rounded `N(mean, mean)` draw replaces the exact
/// inverse transform; relative skew corrections are O(mean^−1/2) ≈ 1e−3
/// there, far below counting noise in any use this crate makes of it.
pub const POISSON_NORMAL_CUTOFF: f64 = 1e6;

/// Imperfection parameters for the simulated experiment.
///
/// Defaults match the experimental regime the score anchors to:
/// 2·10⁴ heralded events per setting, preparation fidelity
/// 0.998 ± 0.002, a measurement fidelity drop of 0.0007 ± 0.0002,
/// unit detection efficiency and no drift.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    /// Mean number of heralded preparations per (pair, outcome) setting.
    pub counts_per_setting: f64,
    /// Mean and spread of the preparation fidelity |⟨ψ'|ψ⟩|²; each state
    /// draws one fidelity, truncated into [0, 1].
    pub prep_fidelity_mean: f64,
    pub prep_fidelity_sd: f64,
    /// Mean and spread of the per-setting measurement fidelity drop f:
    /// outcome probabilities become p(1 − f) + f/3.
    pub meas_fidelity_drop_mean: f64,
    pub meas_fidelity_drop_sd: f64,
    /// Probability that a true event is detected (scales click rates).
    pub detection_efficiency: f64,
    /// Relative source-intensity drift between settings: the Poisson
    /// mean per setting is counts·(1 + N(0, drift_sd)), floored at 0.
    pub drift_sd: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            counts_per_setting: 2e4,
            prep_fidelity_mean: 0.998,
            prep_fidelity_sd: 0.002,
            meas_fidelity_drop_mean: 0.0007,
            meas_fidelity_drop_sd: 0.0002,
            detection_efficiency: 1.0,
            drift_sd: 0.0,
        }
    }
}

impl NoiseModel {
    /// The noiseless configuration: perfect preparations and
    /// measurements, unit efficiency, no drift; only counting statistics
    /// remain.
    pub fn off() -> Self {
        Self {
            counts_per_setting: 2e4,
            prep_fidelity_mean: 1.0,
            prep_fidelity_sd: 0.0,
            meas_fidelity_drop_mean: 0.0,
            meas_fidelity_drop_sd: 0.0,
            detection_efficiency: 1.0,
            drift_sd: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |detail: String| Err(Error::BadOptions { detail });
        if !(self.counts_per_setting.is_finite() && self.counts_per_setting > 0.0) {
            return bad(format!("counts_per_setting must be positive, got {}", self.counts_per_setting));
        }
        if !(0.0..=1.0).contains(&self.prep_fidelity_mean) {
            return bad(format!("prep_fidelity_mean must be in [0,1], got {}", self.prep_fidelity_mean));
        }
        if !(self.prep_fidelity_sd.is_finite() && self.prep_fidelity_sd >= 0.0) {
            return bad(format!("prep_fidelity_sd must be ≥ 0, got {}", self.prep_fidelity_sd));
        }
        if !(0.0..=1.0).contains(&self.meas_fidelity_drop_mean) {
            return bad(format!("meas_fidelity_drop_mean must be in [0,1], got {}", self.meas_fidelity_drop_mean));
        }
        if !(self.meas_fidelity_drop_sd.is_finite() && self.meas_fidelity_drop_sd >= 0.0) {
            return bad(format!("meas_fidelity_drop_sd must be ≥ 0, got {}", self.meas_fidelity_drop_sd));
        }
        if !(self.detection_efficiency > 0.0 && self.detection_efficiency <= 1.0) {
            return bad(format!("detection_efficiency must be in (0,1], got {}", self.detection_efficiency));
        }
        if !(self.drift_sd.is_finite() && self.drift_sd >= 0.0) {
            return bad(format!("drift_sd must be ≥ 0, got {}", self.drift_sd));
        }
        Ok(())
    }
}

/// Clicks out of heralded preparations for one (pair, outcome) setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Counts {
    pub clicks: u64,
    pub heralds: u64,
}

/// Simulated (or recorded) raw counts for every setting.
#[derive(Debug, Clone, PartialEq)]
pub struct CountRecord {
    entries: BTreeMap<Pair, [Counts; 3]>,
}

impl CountRecord {
    pub fn new(entries: BTreeMap<Pair, [Counts; 3]>) -> Result<Self> {
        for (pair, row) in &entries {
            for (i, c) in row.iter().enumerate() {
                if c.clicks > c.heralds {
                    return Err(Error::BadOptions {
                        detail: format!(
                            "pair {pair} outcome {i}: clicks ({}) exceed heralds ({})",
                            c.clicks, c.heralds
                        ),
                    });
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &BTreeMap<Pair, [Counts; 3]> {
        &self.entries
    }

    fn check_keys(&self, scenario: &Scenario) -> Result<()> {
        for pair in scenario.pairs() {
            if !self.entries.contains_key(&pair) {
                return Err(Error::KeyMismatch {
                    detail: format!("count record is missing pair {pair}"),
                });
            }
        }
        for pair in self.entries.keys() {
            if scenario.measurement(*pair).is_none() {
                return Err(Error::KeyMismatch {
                    detail: format!("count record has extra pair {pair}"),
                });
            }
        }
        Ok(())
    }
}

/// Point estimate and bootstrap error bar for the score.
#[derive(Debug, Clone, PartialEq)]
pub struct SEstimate {
    /// Score of the relative-frequency table.
    pub s_hat: f64,
    /// Bootstrap standard deviation of the score.
    pub sigma: f64,
    /// The relative-frequency table itself.
    pub table_hat: ProbabilityTable,
}

/// Exact-in-distribution Poisson sample (up to the documented normal
/// approximation above [`POISSON_NORMAL_CUTOFF`]).
pub fn sample_poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> Result<u64> {
    if !mean.is_finite() || mean < 0.0 {
        return Err(Error::BadOptions {
            detail: format!("Poisson mean must be finite and ≥ 0, got {mean}"),
        });
    }
    if mean == 0.0 {
        return Ok(0);
    }
    if mean <= POISSON_SMALL_MEAN_CUTOFF {
        // Inverse transform from k = 0.
        let u: f64 = rng.random();
        let mut p = (-mean).exp();
        let mut cum = p;
        let mut k = 0u64;
        let cap = (mean + 20.0 * mean.sqrt() + 100.0) as u64;
        while u >= cum && k < cap {
            k += 1;
            p *= mean / k as f64;
            cum += p;
        }
        return Ok(k);
    }
    if mean >= POISSON_NORMAL_CUTOFF {
        let z: f64 = rng.sample(StandardNormal);
        return Ok((mean + mean.sqrt() * z).round().max(0.0) as u64);
    }

    // Mode-centered inverse transform: enumerate k = m, m+1, m−1, m+2, …
    // accumulating pmf mass until the uniform draw is covered. p(m) is
    // computed in log space (Stirling), so nothing underflows for means
    // where exp(−mean) would.
    let m = mean.floor();
    let ln_pm = m * mean.ln() - mean - ln_factorial(m as u64);
    let pm = ln_pm.exp();
    let u: f64 = rng.random();
    let mut cum = pm;
    if u < cum {
        return Ok(m as u64);
    }
    let mut kr = m as u64;
    let mut pr = pm;
    let mut kl = m as u64;
    let mut pl = pm;
    loop {
        kr += 1;
        pr *= mean / kr as f64;
        cum += pr;
        if u < cum {
            return Ok(kr);
        }
        if kl > 0 {
            pl *= kl as f64 / mean;
            kl -= 1;
            cum += pl;
            if u < cum {
                return Ok(kl);
            }
        }
        // Both tails numerically exhausted: the residual mass is below
        // double precision; attribute it to the right tail cursor.
        if pr < 1e-300 && (kl == 0 || pl < 1e-300) {
            return Ok(kr);
        }
    }
}

/// ln k!, exact summation below 16 and a Stirling series above
/// (absolute error < 1e−13 for k ≥ 16).
fn ln_factorial(k: u64) -> f64 {
    if k < 16 {
        (2..=k).map(|j| (j as f64).ln()).sum()
    } else {
        let x = k as f64;
        let inv = 1.0 / x;
        let inv2 = inv * inv;
        (x + 0.5) * x.ln() - x
            + 0.5 * (2.0 * std::f64::consts::PI).ln()
            + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
    }
}

/// Binomial(n, p) sample with p clamped into [0, 1].
pub fn sample_binomial<R: Rng + ?Sized>(rng: &mut R, n: u64, p: f64) -> Result<u64> {
    if !p.is_finite() {
        return Err(Error::NonFinite);
    }
    let p = p.clamp(0.0, 1.0);
    let dist = rand_distr::Binomial::new(n, p).map_err(|e| Error::BadOptions {
        detail: format!("binomial parameters rejected: {e}"),
    })?;
    Ok(dist.sample(rng))
}

/// Normal(mean, sd) clamped into [lo, hi]; a zero sd short-circuits to
/// the clamped mean without consuming randomness.
fn truncated_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    if sd <= 0.0 {
        return mean.clamp(lo, hi);
    }
    let z: f64 = rng.sample(StandardNormal);
    (mean + sd * z).clamp(lo, hi)
}

/// Mixes `state` with a random orthogonal direction so that the overlap
/// with the original is exactly `fidelity`: ψ' = √F ψ + √(1−F) u.
pub(crate) fn perturb_state<R: Rng + ?Sized>(
    state: &PureState,
    fidelity: f64,
    field: Field,
    rng: &mut R,
) -> PureState {
    let f = fidelity.clamp(0.0, 1.0);
    if f >= 1.0 {
        return state.clone();
    }
    let psi = state.coeffs();
    let u = loop {
        let g = random_unit_vector(psi.len(), field, rng);
        let overlap = psi.dotc(&g);
        let mut orth: DVector<Complex64> = g - psi * overlap;
        let norm = orth.norm();
        if norm > 1e-8 {
            orth /= Complex64::new(norm, 0.0);
            break orth;
        }
    };
    let mixed = psi * Complex64::new(f.sqrt(), 0.0) + u * Complex64::new((1.0 - f).sqrt(), 0.0);
    let norm = mixed.norm();
    PureState::from_vector(mixed / Complex64::new(norm, 0.0))
}

/// Born table of the scenario under systematic noise: per-state
/// preparation-fidelity errors and a per-setting measurement fidelity
/// drop. With [`NoiseModel::off`] the result equals
/// [`Scenario::born_table`] exactly, bit for bit.
pub fn perturb_table(scenario: &Scenario, noise: &NoiseModel, seed: u64) -> Result<ProbabilityTable> {
    noise.validate()?;
    let field = scenario.field();

    let mut prep_rng = stream(seed, "sim/prep", 0);
    let states: Vec<PureState> = scenario
        .states()
        .iter()
        .map(|s| {
            let f = truncated_normal(
                &mut prep_rng,
                noise.prep_fidelity_mean,
                noise.prep_fidelity_sd,
                0.0,
                1.0,
            );
            perturb_state(s, f, field, &mut prep_rng)
        })
        .collect();

    let mut meas_rng = stream(seed, "sim/meas", 0);
    let mut entries = BTreeMap::new();
    for (pair, m) in scenario.measurements() {
        let targets = pair.outcome_targets();
        let mut row = [0.0; 3];
        for (i, &t) in targets.iter().enumerate() {
            let drop = truncated_normal(
                &mut meas_rng,
                noise.meas_fidelity_drop_mean,
                noise.meas_fidelity_drop_sd,
                0.0,
                1.0,
            );
            let p = born_probability(&states[t], &m.effects()[i])?;
            row[i] = (p * (1.0 - drop) + drop / 3.0).clamp(0.0, 1.0);
        }
        entries.insert(*pair, row);
    }
    ProbabilityTable::new(entries)
}

/// Draws heralds and clicks for every setting of a probability table.
///
/// Heralds are Poisson with mean `counts·(1 + drift)`; clicks are
/// binomial in the heralds with success `p·detection_efficiency`.
pub fn simulate_counts(table: &ProbabilityTable, noise: &NoiseModel, seed: u64) -> Result<CountRecord> {
    noise.validate()?;
    let mut rng = stream(seed, "sim/counts", 0);
    let mut entries = BTreeMap::new();
    for (pair, row) in table.entries() {
        let mut out = [Counts { clicks: 0, heralds: 0 }; 3];
        for (i, &p) in row.iter().enumerate() {
            let drift = if noise.drift_sd > 0.0 {
                let z: f64 = rng.sample(StandardNormal);
                noise.drift_sd * z
            } else {
                0.0
            };
            let rate = (noise.counts_per_setting * (1.0 + drift)).max(0.0);
            let heralds = sample_poisson(&mut rng, rate)?;
            let clicks = sample_binomial(&mut rng, heralds, p * noise.detection_efficiency)?;
            out[i] = Counts { clicks, heralds };
        }
        entries.insert(*pair, out);
    }
    CountRecord::new(entries)
}

/// Scores a count record: relative frequencies give `s_hat`, and a
/// parametric bootstrap (clicks and heralds independently
/// Poisson-resampled around their observed values, per-trial substreams)
/// gives `sigma`.
///
/// Frequencies estimate `p·detection_efficiency`; no efficiency
/// correction is applied here, matching how the record was produced.
pub fn estimate_s(
    record: &CountRecord,
    scenario: &Scenario,
    bootstrap: usize,
    seed: u64,
) -> Result<SEstimate> {
    record.check_keys(scenario)?;
    if bootstrap == 0 {
        return Err(Error::BadOptions {
            detail: "bootstrap must be a positive number of resamples".into(),
        });
    }

    let mut entries = BTreeMap::new();
    for (pair, row) in record.entries() {
        let mut out = [0.0; 3];
        for (i, c) in row.iter().enumerate() {
            if c.heralds == 0 {
                return Err(Error::EmptySetting { j1: pair.j1(), j2: pair.j2(), outcome: i });
            }
            out[i] = c.clicks as f64 / c.heralds as f64;
        }
        entries.insert(*pair, out);
    }
    let table_hat = ProbabilityTable::new(entries)?;
    let s_hat = s_value(scenario, &table_hat)?.s;

    let mut scores = Vec::with_capacity(bootstrap);
    for b in 0..bootstrap {
        let mut rng = stream(seed, "sim/bootstrap", b as u64);
        let mut entries = BTreeMap::new();
        for (pair, row) in record.entries() {
            let mut out = [0.0; 3];
            for (i, c) in row.iter().enumerate() {
                let clicks = sample_poisson(&mut rng, c.clicks as f64)?;
                let heralds = sample_poisson(&mut rng, c.heralds as f64)?;
                out[i] = if heralds == 0 {
                    0.0
                } else {
                    (clicks as f64 / heralds as f64).min(1.0)
                };
            }
            entries.insert(*pair, out);
        }
        let t = ProbabilityTable::new(entries)?;
        scores.push(s_value(scenario, &t)?.s);
    }
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    let sigma = if scores.len() < 2 {
        0.0
    } else {
        (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (scores.len() - 1) as f64).sqrt()
    };

    Ok(SEstimate { s_hat, sigma, table_hat })
}

/// Per-entry deviations `p̂ − p_Born`, flattened in pair order with the
/// three outcomes in sequence — the raw material for ΔP histograms.
pub fn deviation_histogram(record: &CountRecord, scenario: &Scenario) -> Result<Vec<f64>> {
    record.check_keys(scenario)?;
    let born = scenario.born_table()?;
    let mut deltas = Vec::with_capacity(record.entries().len() * 3);
    for (pair, row) in record.entries() {
        let reference = born.get(*pair).expect("checked keys");
        for (i, c) in row.iter().enumerate() {
            if c.heralds == 0 {
                return Err(Error::EmptySetting { j1: pair.j1(), j2: pair.j2(), outcome: i });
            }
            deltas.push(c.clicks as f64 / c.heralds as f64 - reference[i]);
        }
    }
    Ok(deltas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{Effect, Measurement};
    use crate::scenario::all_pairs;
    use approx::assert_relative_eq;

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

    #[test]
    fn poisson_matches_pmf_on_both_exact_paths() {
        // Frequencies vs exact pmf, small-mean path (start at k = 0) and
        // mode-centered path, each within 5 binomial standard errors.
        for &mean in &[3.0f64, 60.0] {
            let n = 200_000usize;
            let mut rng = stream(11, "test/poisson", mean as u64);
            let mut hist = vec![0u64; 400];
            for _ in 0..n {
                let k = sample_poisson(&mut rng, mean).unwrap() as usize;
                if k < hist.len() {
                    hist[k] += 1;
                }
            }
            let lo = (mean - 4.0 * mean.sqrt()).max(0.0) as usize;
            let hi = (mean + 4.0 * mean.sqrt()) as usize;
            for k in lo..=hi {
                let ln_p =
                    k as f64 * mean.ln() - mean - ln_factorial(k as u64);
                let p = ln_p.exp();
                let freq = hist[k] as f64 / n as f64;
                let se = (p * (1.0 - p) / n as f64).sqrt() + 1.0 / n as f64;
                assert!(
                    (freq - p).abs() < 5.0 * se,
                    "mean {mean}: pmf mismatch at k = {k}: freq {freq}, pmf {p}"
                );
            }
        }
    }

    #[test]
    fn poisson_moments_in_normal_regime() {
        let mean = 2e7;
        let mut rng = stream(12, "test/poisson-large", 0);
        let n = 2000;
        let samples: Vec<f64> = (0..n)
            .map(|_| sample_poisson(&mut rng, mean).unwrap() as f64)
            .collect();
        let m = samples.iter().sum::<f64>() / n as f64;
        let v = samples.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        // Mean to 5 standard errors; variance within 20%.
        assert!((m - mean).abs() < 5.0 * (mean / n as f64).sqrt(), "mean {m}");
        assert!((v / mean - 1.0).abs() < 0.2, "variance ratio {}", v / mean);
    }

    #[test]
    fn poisson_rejects_bad_means_and_handles_zero() {
        let mut rng = stream(13, "test/poisson-edge", 0);
        assert_eq!(sample_poisson(&mut rng, 0.0).unwrap(), 0);
        assert!(sample_poisson(&mut rng, -1.0).is_err());
        assert!(sample_poisson(&mut rng, f64::NAN).is_err());
    }

    #[test]
    fn ln_factorial_matches_direct_summation() {
        // Stirling branch vs exact Σ ln k across the switchover.
        for k in [14u64, 15, 16, 17, 40, 1000, 1_000_000] {
            let direct: f64 = (2..=k).map(|j| (j as f64).ln()).sum();
            let approx = ln_factorial(k);
            assert!(
                (direct - approx).abs() < 1e-9 * direct.max(1.0),
                "k = {k}: {direct} vs {approx}"
            );
        }
    }

    #[test]
    fn perturbed_state_hits_requested_fidelity() {
        let mut rng = stream(21, "test/perturb", 0);
        let psi = PureState::from_real(&[0.5, 0.5, 0.5, 0.5]).unwrap();
        for &f in &[0.9, 0.99, 0.998] {
            let p = perturb_state(&psi, f, Field::Real, &mut rng);
            let fid = psi.inner(&p).norm_sqr();
            assert_relative_eq!(fid, f, epsilon = 1e-12);
            assert!(p.is_real());
        }
    }

    #[test]
    fn mean_preparation_fidelity_matches_noise_model() {
        // 10⁴ draws of (fidelity, perturbation): the empirical mean
        // fidelity must sit at 0.998 within ±0.001.
        let noise = NoiseModel::default();
        let psi = PureState::from_real(&[1.0, 0.0, 0.0]).unwrap();
        let mut rng = stream(22, "test/prep-fid", 0);
        let reps = 10_000;
        let mut acc = 0.0;
        for _ in 0..reps {
            let f = truncated_normal(
                &mut rng,
                noise.prep_fidelity_mean,
                noise.prep_fidelity_sd,
                0.0,
                1.0,
            );
            let p = perturb_state(&psi, f, Field::Real, &mut rng);
            acc += psi.inner(&p).norm_sqr();
        }
        let mean = acc / reps as f64;
        assert!(
            (mean - 0.998).abs() < 1e-3,
            "mean preparation fidelity {mean}"
        );
    }

    #[test]
    fn perturb_table_with_noise_off_is_exactly_born() {
        let sc = tilted_scenario();
        let t = perturb_table(&sc, &NoiseModel::off(), 5).unwrap();
        let born = sc.born_table().unwrap();
        assert_eq!(t, born);
    }

    #[test]
    fn perturb_table_is_seed_deterministic() {
        let sc = tilted_scenario();
        let noise = NoiseModel::default();
        let a = perturb_table(&sc, &noise, 7).unwrap();
        let b = perturb_table(&sc, &noise, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, perturb_table(&sc, &noise, 8).unwrap());
        // Default systematics stay bounded: a fidelity-F state mixes in
        // a foreign amplitude of weight √(1−F) ≈ 0.045, so entries can
        // move by roughly twice that through the cross term, no more.
        let born = sc.born_table().unwrap();
        for (pair, row) in a.entries() {
            let reference = born.get(*pair).unwrap();
            for i in 0..3 {
                assert!(
                    (row[i] - reference[i]).abs() < 0.2,
                    "pair {pair} outcome {i}: {} vs {}",
                    row[i],
                    reference[i]
                );
            }
        }
    }

    #[test]
    fn simulated_counts_track_the_table() {
        let sc = tilted_scenario();
        let table = sc.born_table().unwrap();
        let noise = NoiseModel::off();
        let rec = simulate_counts(&table, &noise, 31).unwrap();
        for (pair, row) in rec.entries() {
            let probs = table.get(*pair).unwrap();
            for (i, c) in row.iter().enumerate() {
                // Heralds within 6σ of the Poisson mean.
                assert!(
                    (c.heralds as f64 - 2e4).abs() < 6.0 * 2e4f64.sqrt(),
                    "heralds {}",
                    c.heralds
                );
                let freq = c.clicks as f64 / c.heralds as f64;
                let se = (probs[i] * (1.0 - probs[i]) / c.heralds as f64).sqrt();
                assert!(
                    (freq - probs[i]).abs() < 6.0 * se + 1e-9,
                    "pair {pair} outcome {i}: freq {freq} vs p {}",
                    probs[i]
                );
            }
        }
    }

    #[test]
    fn detection_efficiency_scales_click_rates() {
        let sc = tilted_scenario();
        let table = sc.born_table().unwrap();
        let noise = NoiseModel { detection_efficiency: 0.5, ..NoiseModel::off() };
        let rec = simulate_counts(&table, &noise, 32).unwrap();
        let pair = Pair::new(1, 2).unwrap();
        let c = rec.entries().get(&pair).unwrap()[0];
        // p = 1 for this setting, so clicks/heralds ≈ 0.5.
        let freq = c.clicks as f64 / c.heralds as f64;
        assert!((freq - 0.5).abs() < 0.02, "freq {freq}");
    }

    #[test]
    fn estimate_recovers_score_with_sane_error_bar() {
        let sc = tilted_scenario();
        let table = sc.born_table().unwrap();
        let truth = s_value(&sc, &table).unwrap().s;
        let noise = NoiseModel::off();
        let rec = simulate_counts(&table, &noise, 41).unwrap();
        let est = estimate_s(&rec, &sc, 200, 42).unwrap();
        assert!(est.sigma > 0.0);
        assert!(
            (est.s_hat - truth).abs() < 6.0 * est.sigma,
            "s_hat {} vs truth {truth} (σ {})",
            est.s_hat,
            est.sigma
        );
    }

    #[test]
    fn bootstrap_sigma_tracks_trial_scatter() {
        // With systematics off, the bootstrap error bar must agree with
        // the actual trial-to-trial scatter of s_hat. Interior
        // probabilities keep the Poisson bootstrap close to the binomial
        // truth (the two differ by O(p) relative at large p).
        let sc = tilted_scenario();
        let entries: BTreeMap<_, _> = sc.pairs().map(|p| (p, [0.15, 0.22, 0.08])).collect();
        let table = ProbabilityTable::new(entries).unwrap();
        let noise = NoiseModel::off();
        let trials = 40;
        let mut s_hats = Vec::new();
        let mut sigmas = Vec::new();
        for t in 0..trials {
            let rec = simulate_counts(&table, &noise, 500 + t).unwrap();
            let est = estimate_s(&rec, &sc, 120, 9000 + t).unwrap();
            s_hats.push(est.s_hat);
            sigmas.push(est.sigma);
        }
        let mean = s_hats.iter().sum::<f64>() / trials as f64;
        let scatter = (s_hats.iter().map(|s| (s - mean).powi(2)).sum::<f64>()
            / (trials as f64 - 1.0))
            .sqrt();
        let sigma_mean = sigmas.iter().sum::<f64>() / trials as f64;
        let ratio = sigma_mean / scatter;
        assert!(
            (0.5..=2.0).contains(&ratio),
            "bootstrap σ {sigma_mean} vs empirical scatter {scatter} (ratio {ratio})"
        );
    }

    #[test]
    fn estimate_s_flags_empty_settings_and_bad_bootstrap() {
        let sc = tilted_scenario();
        let mut entries = BTreeMap::new();
        for pair in sc.pairs() {
            entries.insert(pair, [Counts { clicks: 0, heralds: 0 }; 3]);
        }
        let rec = CountRecord::new(entries).unwrap();
        assert!(matches!(
            estimate_s(&rec, &sc, 10, 0),
            Err(Error::EmptySetting { .. })
        ));

        let table = sc.born_table().unwrap();
        let rec = simulate_counts(&table, &NoiseModel::off(), 1).unwrap();
        assert!(matches!(
            estimate_s(&rec, &sc, 0, 0),
            Err(Error::BadOptions { .. })
        ));
    }

    #[test]
    fn deviation_histogram_matches_direct_differences() {
        let sc = tilted_scenario();
        let table = sc.born_table().unwrap();
        let rec = simulate_counts(&table, &NoiseModel::off(), 77).unwrap();
        let deltas = deviation_histogram(&rec, &sc).unwrap();
        assert_eq!(deltas.len(), 9);
        let born = sc.born_table().unwrap();
        let mut idx = 0;
        for (pair, row) in rec.entries() {
            let reference = born.get(*pair).unwrap();
            for (i, c) in row.iter().enumerate() {
                let expect = c.clicks as f64 / c.heralds as f64 - reference[i];
                assert_relative_eq!(deltas[idx], expect, epsilon = 0.0);
                idx += 1;
            }
        }
        // Counting noise at 2·10⁴ events: deviations of order 1e−3.
        let mean_abs = deltas.iter().map(|d| d.abs()).sum::<f64>() / deltas.len() as f64;
        assert!(mean_abs < 0.02, "mean |ΔP| = {mean_abs}");
    }

    #[test]
    fn noise_model_validation_rejects_nonsense() {
        let mut n = NoiseModel::default();
        n.counts_per_setting = 0.0;
        assert!(n.validate().is_err());
        let mut n = NoiseModel::default();
        n.prep_fidelity_mean = 1.5;
        assert!(n.validate().is_err());
        let mut n = NoiseModel::default();
        n.detection_efficiency = 0.0;
        assert!(n.validate().is_err());
        let mut n = NoiseModel::default();
        n.drift_sd = -0.1;
        assert!(n.validate().is_err());
        assert!(NoiseModel::default().validate().is_ok());
        assert!(NoiseModel::off().validate().is_ok());
    }
}
