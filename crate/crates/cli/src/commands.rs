//! The six workbench commands.
//!
//! Each command is a plain function taking already-parsed flag values
//! and returning `Result<(), CliError>`; the binary maps errors to the
//! exit-code contract (2 = usage, 1 = runtime/invariant failure).
//! Machine-readable results go to stdout and files; progress and
//! timings go to stderr, so output files and stdout stay byte-identical
//! across reruns with the same flags and seed.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use onticlab::rng::derived_seed;
use onticlab::scenario::all_pairs;
use onticlab::{
    efficiency_threshold, estimate_s, model_inequality_slack, noise_robustness,
    optimize_scenario, perturb_table, random_model, s_eta, s_value, simulate_counts, Field,
    OptimizerOptions, Scenario,
};

use crate::csv::{write_csv, ResultRow};
use crate::noise_spec::parse_noise_spec;
use crate::scenario_file::{from_scenario, load, to_scenario};
use crate::{write_atomic, CliError};

const DIM_RANGE: std::ops::RangeInclusive<usize> = 3..=8;
const N_RANGE: std::ops::RangeInclusive<usize> = 3..=12;
const LAMBDA_MAX: usize = 4096;

fn check_dim(dim: usize) -> Result<(), CliError> {
    if !DIM_RANGE.contains(&dim) {
        return Err(CliError::Usage(format!(
            "dim must be between {} and {}, got {dim}",
            DIM_RANGE.start(),
            DIM_RANGE.end()
        )));
    }
    Ok(())
}

fn check_n(n: usize) -> Result<(), CliError> {
    if n < *N_RANGE.start() {
        return Err(CliError::Usage(format!("n must be >= {}, got {n}", N_RANGE.start())));
    }
    if n > *N_RANGE.end() {
        return Err(CliError::Usage(format!("n must be <= {}, got {n}", N_RANGE.end())));
    }
    Ok(())
}

fn check_positive_count(name: &str, value: u64) -> Result<(), CliError> {
    if value == 0 {
        return Err(CliError::Usage(format!("{name} must be >= 1")));
    }
    Ok(())
}

fn fail(e: onticlab::Error) -> CliError {
    CliError::Failure(e.to_string())
}

fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    to_scenario(&load(path)?)
}

/// `optimize`: search for a low-S scenario and persist it.
///
/// Prints the scores as a single summary line; η* and ε₀ fall back to
/// `NaN` when the scenario does not violate the inequality.
pub fn cmd_optimize(
    dim: usize,
    n: usize,
    restarts: u32,
    seed: u64,
    field: Field,
    out: &Path,
) -> Result<(), CliError> {
    check_dim(dim)?;
    check_n(n)?;
    check_positive_count("restarts", restarts as u64)?;
    let started = Instant::now();
    let options = OptimizerOptions { restarts, seed, field, ..OptimizerOptions::default() };
    let result = optimize_scenario(dim, n, &options).map_err(fail)?;

    let report = s_value(&result.scenario, &result.theory_table).map_err(fail)?;
    let eta = efficiency_threshold(&result.scenario, &result.theory_table).unwrap_or(f64::NAN);
    let eps = noise_robustness(&result.scenario, &result.theory_table).unwrap_or(f64::NAN);

    let mut metadata = BTreeMap::new();
    metadata.insert("command".into(), serde_json::json!("optimize"));
    metadata.insert("best_restart_index".into(), serde_json::json!(result.best_restart_index));
    metadata.insert("converged".into(), serde_json::json!(result.converged));
    metadata.insert("field".into(), serde_json::json!(field.as_str()));
    metadata.insert("restarts".into(), serde_json::json!(restarts));
    metadata.insert("s".into(), serde_json::json!(result.s));
    metadata.insert("seed".into(), serde_json::json!(seed));
    let file = from_scenario(&result.scenario, metadata);
    write_atomic(out, &file.canonical_json())?;

    println!(
        "S={} kappa0_bound={} epsilon0={} eta_threshold={}",
        result.s, report.kappa0_bound, eps, eta
    );
    eprintln!(
        "optimize d={dim} n={n}: wrote {} after {} restarts in {} ms",
        out.display(),
        result.restarts_run,
        started.elapsed().as_millis()
    );
    Ok(())
}

/// `evaluate`: score a stored scenario, optionally at finite detection
/// efficiency. Output is `key = value` lines.
pub fn cmd_evaluate(scenario_path: &Path, eta: Option<f64>) -> Result<(), CliError> {
    let scenario = load_scenario(scenario_path)?;
    let table = scenario.born_table().map_err(fail)?;
    let report = s_value(&scenario, &table).map_err(fail)?;
    println!("s = {}", report.s);
    println!("numerator = {}", report.numerator);
    println!("denominator = {}", report.denominator);
    println!("kappa0_bound = {}", report.kappa0_bound);
    for (pair, sum) in &report.per_pair_sums {
        println!("pair {pair} sum = {sum}");
    }
    if let Some(eta) = eta {
        // A bad η is a flag problem, not a broken scenario.
        let value = s_eta(&scenario, &table, eta)
            .map_err(|e| CliError::Usage(format!("--eta: {e}")))?;
        println!("s_eta = {value}");
    }
    Ok(())
}

/// `simulate`: finite-count Monte-Carlo trials of a stored scenario.
///
/// The CSV holds one row per trial (seed column = that trial's derived
/// sub-seed) and a final summary row carrying the master seed, with
/// `s` = mean ŝ, `sigma` = mean bootstrap σ, and — since the fixed
/// column set has no dedicated slot — the empirical std of ŝ in
/// `kappa0_bound`.
#[allow(clippy::too_many_arguments)]
pub fn cmd_simulate(
    scenario_path: &Path,
    counts: f64,
    trials: u64,
    bootstrap: u64,
    seed: u64,
    noise_spec: &str,
    csv: &Path,
) -> Result<(), CliError> {
    if !(counts.is_finite() && counts > 0.0) {
        return Err(CliError::Usage(format!("counts must be positive, got {counts}")));
    }
    check_positive_count("trials", trials)?;
    check_positive_count("bootstrap", bootstrap)?;
    let mut noise = parse_noise_spec(noise_spec)?;
    noise.counts_per_setting = counts; // the dedicated flag wins over KEY=VAL
    noise.validate().map_err(|e| CliError::Usage(format!("noise spec: {e}")))?;

    let scenario = load_scenario(scenario_path)?;
    let started = Instant::now();
    let d = scenario.dim();
    let n = scenario.n();

    let mut rows = Vec::with_capacity(trials as usize + 1);
    let mut s_hats = Vec::with_capacity(trials as usize);
    let mut sigma_sum = 0.0;
    for t in 0..trials {
        let trial_seed = derived_seed(seed, "cli/trial", t);
        let table = perturb_table(&scenario, &noise, trial_seed).map_err(fail)?;
        let record = simulate_counts(&table, &noise, trial_seed).map_err(fail)?;
        let est = estimate_s(&record, &scenario, bootstrap as usize, trial_seed).map_err(fail)?;
        s_hats.push(est.s_hat);
        sigma_sum += est.sigma;
        rows.push(ResultRow {
            d,
            n,
            s: est.s_hat,
            sigma: est.sigma,
            kappa0_bound: est.s_hat.min(1.0),
            eta_threshold: efficiency_threshold(&scenario, &est.table_hat)
                .unwrap_or(f64::NAN),
            epsilon0: noise_robustness(&scenario, &est.table_hat).unwrap_or(f64::NAN),
            seed: trial_seed,
            wall_ms: 0,
        });
    }

    let mean_s = s_hats.iter().sum::<f64>() / trials as f64;
    let mean_sigma = sigma_sum / trials as f64;
    let std_s = if trials < 2 {
        0.0
    } else {
        (s_hats.iter().map(|s| (s - mean_s).powi(2)).sum::<f64>() / (trials - 1) as f64).sqrt()
    };
    rows.push(ResultRow {
        d,
        n,
        s: mean_s,
        sigma: mean_sigma,
        kappa0_bound: std_s,
        eta_threshold: f64::NAN,
        epsilon0: f64::NAN,
        seed,
        wall_ms: 0,
    });
    write_csv(csv, &rows)?;

    println!("trials={trials} mean_s_hat={mean_s} mean_sigma={mean_sigma} std_s_hat={std_s}");
    eprintln!(
        "simulate: wrote {} in {} ms",
        csv.display(),
        started.elapsed().as_millis()
    );
    Ok(())
}

/// `threshold`: the critical detection efficiency of a stored scenario,
/// or `no threshold` when no efficiency in (0, 1] yields a violation.
pub fn cmd_threshold(scenario_path: &Path) -> Result<(), CliError> {
    let scenario = load_scenario(scenario_path)?;
    let table = scenario.born_table().map_err(fail)?;
    match efficiency_threshold(&scenario, &table) {
        Ok(eta) if eta <= 1.0 => println!("{eta}"),
        Ok(_) | Err(onticlab::Error::NoThreshold) => println!("no threshold"),
        Err(e) => return Err(fail(e)),
    }
    Ok(())
}

/// `oracle`: brute-force the inequality over random finite ontic
/// models. Exit 0 iff no model violates it.
pub fn cmd_oracle(lambda: usize, n: usize, trials: u64, seed: u64) -> Result<(), CliError> {
    if !(1..=LAMBDA_MAX).contains(&lambda) {
        return Err(CliError::Usage(format!(
            "lambda must be between 1 and {LAMBDA_MAX}, got {lambda}"
        )));
    }
    if n < 3 {
        return Err(CliError::Usage(format!("n must be >= 3, got {n}")));
    }
    check_positive_count("trials", trials)?;
    let started = Instant::now();

    let pairs = all_pairs(n);
    let mut min_slack = f64::INFINITY;
    let mut violations: u64 = 0;
    for t in 0..trials {
        let model =
            random_model(lambda, n, &pairs, derived_seed(seed, "cli/oracle", t)).map_err(fail)?;
        let slack = model_inequality_slack(&model).map_err(fail)?;
        min_slack = min_slack.min(slack);
        if slack < -1e-9 {
            violations += 1;
        }
    }

    println!("trials={trials} violations={violations} min_slack={min_slack}");
    eprintln!("oracle: {} ms", started.elapsed().as_millis());
    if violations > 0 {
        return Err(CliError::Failure(format!(
            "{violations} of {trials} random models violate the inequality (min slack {min_slack})"
        )));
    }
    Ok(())
}

/// `sweep`: optimize for each n in the range and tabulate the theory
/// scores. Each n uses the same master seed, so a row matches what a
/// standalone `optimize` run with identical flags would report.
pub fn cmd_sweep(
    dim: usize,
    n_min: usize,
    n_max: usize,
    restarts: u32,
    seed: u64,
    csv: &Path,
) -> Result<(), CliError> {
    check_dim(dim)?;
    check_n(n_min)?;
    check_n(n_max)?;
    if n_min > n_max {
        return Err(CliError::Usage(format!("empty range: n-min {n_min} > n-max {n_max}")));
    }
    check_positive_count("restarts", restarts as u64)?;

    let options = OptimizerOptions {
        restarts,
        seed,
        field: Field::Real,
        ..OptimizerOptions::default()
    };
    let mut rows = Vec::with_capacity(n_max - n_min + 1);
    for n in n_min..=n_max {
        let started = Instant::now();
        let result = optimize_scenario(dim, n, &options).map_err(fail)?;
        let eta = efficiency_threshold(&result.scenario, &result.theory_table).unwrap_or(f64::NAN);
        let eps = noise_robustness(&result.scenario, &result.theory_table).unwrap_or(f64::NAN);
        eprintln!(
            "sweep d={dim} n={n}: S={} in {} ms",
            result.s,
            started.elapsed().as_millis()
        );
        rows.push(ResultRow {
            d: dim,
            n,
            s: result.s,
            sigma: 0.0,
            kappa0_bound: result.s.min(1.0),
            eta_threshold: eta,
            epsilon0: eps,
            seed,
            wall_ms: 0,
        });
    }
    write_csv(csv, &rows)?;
    eprintln!("sweep: wrote {}", csv.display());
    Ok(())
}
