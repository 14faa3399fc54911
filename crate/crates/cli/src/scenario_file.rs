//! Canonical JSON persistence for scenarios.
//!
//! The on-disk layout keeps keys in sorted order and floats in
//! shortest round-trip decimal form, so files produced by this module
//! diff cleanly, hash stably, and survive a parse → serialize cycle
//! byte for byte. Amplitudes are plain numbers for real-field
//! scenarios and `[re, im]` pairs for complex ones.
//!
//! Error split: anything JSON- or schema-level (syntax, unknown keys,
//! a bad `version` or `field` string) is a [`CliError::Usage`];
//! violations of scenario semantics (unnormalized states, invalid
//! POVMs, inconsistent shapes) are [`CliError::Failure`], matching the
//! exit-code contract.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use onticlab::{Complex64, Effect, Field, Measurement, Pair, PureState, Scenario};

use crate::CliError;

pub const FORMAT_VERSION: &str = "1";

/// One amplitude or matrix entry: a bare number (real) or `[re, im]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Amp {
    Real(f64),
    Pair([f64; 2]),
}

impl Amp {
    pub fn to_complex(self) -> Complex64 {
        match self {
            Amp::Real(x) => Complex64::new(x, 0.0),
            Amp::Pair([re, im]) => Complex64::new(re, im),
        }
    }

    fn from_complex(z: Complex64, field: Field) -> Self {
        match field {
            Field::Real => Amp::Real(z.re),
            Field::Complex => Amp::Pair([z.re, z.im]),
        }
    }
}

/// One pair's measurement: three effect matrices in row-major order.
///
/// Field order (alphabetical) fixes the canonical key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementEntry {
    pub effects: Vec<Vec<Vec<Amp>>>,
    pub j1: usize,
    pub j2: usize,
}

/// The file: declaration order of the fields is alphabetical, which is
/// exactly the canonical (sorted) key order in the emitted JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub dim: usize,
    pub field: String,
    pub measurements: Vec<MeasurementEntry>,
    pub metadata: BTreeMap<String, serde_json::Value>,
    pub n: usize,
    pub states: Vec<Vec<Amp>>,
    pub version: String,
}

impl ScenarioFile {
    /// Canonical text form: pretty-printed JSON (sorted keys, shortest
    /// round-trip floats) with a trailing newline.
    pub fn canonical_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("scenario files serialize");
        text.push('\n');
        text
    }
}

/// Parses and schema-checks a scenario file. JSON errors, unknown
/// keys, an unsupported version, or an unknown field string all exit 2.
pub fn parse(text: &str) -> Result<ScenarioFile, CliError> {
    let file: ScenarioFile = serde_json::from_str(text)
        .map_err(|e| CliError::Usage(format!("scenario file: {e}")))?;
    if file.version != FORMAT_VERSION {
        return Err(CliError::Usage(format!(
            "unsupported scenario file version {:?} (expected {FORMAT_VERSION:?})",
            file.version
        )));
    }
    if parse_field(&file.field).is_none() {
        return Err(CliError::Usage(format!(
            "unknown field {:?} (expected \"real\" or \"complex\")",
            file.field
        )));
    }
    Ok(file)
}

/// Reads and parses a scenario file from disk.
pub fn load(path: &Path) -> Result<ScenarioFile, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    parse(&text)
}

fn parse_field(s: &str) -> Option<Field> {
    match s {
        "real" => Some(Field::Real),
        "complex" => Some(Field::Complex),
        _ => None,
    }
}

/// Converts parsed content into a validated [`Scenario`]. Every failure
/// names the offending object (state index, pair, effect).
pub fn to_scenario(file: &ScenarioFile) -> Result<Scenario, CliError> {
    let field = parse_field(&file.field)
        .ok_or_else(|| CliError::Usage(format!("unknown field {:?}", file.field)))?;
    let fail = |m: String| CliError::Failure(m);

    // Compare without computing n + 1, which could overflow on hostile n.
    if file.states.len().checked_sub(1) != Some(file.n) {
        return Err(fail(format!(
            "file declares n = {} but contains {} states (need n + 1)",
            file.n,
            file.states.len()
        )));
    }
    let dim = file.dim;
    let mut states = Vec::with_capacity(file.states.len());
    for (j, row) in file.states.iter().enumerate() {
        if row.len() != dim {
            return Err(fail(format!(
                "state {j} has {} amplitudes, expected dim = {dim}",
                row.len()
            )));
        }
        let amps: Vec<Complex64> = row.iter().map(|a| a.to_complex()).collect();
        let norm_sq: f64 = amps.iter().map(|z| z.norm_sqr()).sum();
        if !norm_sq.is_finite() || (norm_sq.sqrt() - 1.0).abs() > 1e-8 {
            return Err(fail(format!(
                "state {j} is not normalized (norm = {})",
                norm_sq.sqrt()
            )));
        }
        states.push(
            PureState::new(&amps, field).map_err(|e| fail(format!("state {j}: {e}")))?,
        );
    }

    let mut measurements = BTreeMap::new();
    for (idx, entry) in file.measurements.iter().enumerate() {
        let pair = Pair::new(entry.j1, entry.j2)
            .map_err(|e| fail(format!("measurement {idx}: {e}")))?;
        if entry.effects.len() != 3 {
            return Err(fail(format!(
                "measurement {pair} has {} effects, expected 3",
                entry.effects.len()
            )));
        }
        let mut effects = Vec::with_capacity(3);
        for (i, matrix) in entry.effects.iter().enumerate() {
            if matrix.len() != dim {
                return Err(fail(format!(
                    "measurement {pair} effect {i} has {} rows, expected {dim}",
                    matrix.len()
                )));
            }
            let mut m = onticlab::nalgebra::DMatrix::<Complex64>::zeros(dim, dim);
            for (r, row) in matrix.iter().enumerate() {
                if row.len() != dim {
                    return Err(fail(format!(
                        "measurement {pair} effect {i} row {r} has {} entries, expected {dim}",
                        row.len()
                    )));
                }
                for (c, amp) in row.iter().enumerate() {
                    m[(r, c)] = amp.to_complex();
                }
            }
            effects.push(
                Effect::new(m).map_err(|e| fail(format!("measurement {pair} effect {i}: {e}")))?,
            );
        }
        let measurement = Measurement::new(effects)
            .map_err(|e| fail(format!("measurement {pair}: {e}")))?;
        if measurements.insert(pair, measurement).is_some() {
            return Err(fail(format!("duplicate measurement for pair {pair}")));
        }
    }

    Scenario::new(field, states, measurements).map_err(|e| fail(e.to_string()))
}

/// Renders a scenario (plus caller-supplied metadata) in canonical
/// member representation: real scenarios use bare numbers, complex
/// ones `[re, im]` pairs, measurements sorted by pair.
pub fn from_scenario(
    scenario: &Scenario,
    metadata: BTreeMap<String, serde_json::Value>,
) -> ScenarioFile {
    let field = scenario.field();
    let states = scenario
        .states()
        .iter()
        .map(|s| s.coeffs().iter().map(|&z| Amp::from_complex(z, field)).collect())
        .collect();
    let measurements = scenario
        .measurements()
        .iter()
        .map(|(pair, m)| MeasurementEntry {
            effects: m
                .effects()
                .iter()
                .map(|e| {
                    let mat = e.matrix();
                    (0..mat.nrows())
                        .map(|r| {
                            (0..mat.ncols())
                                .map(|c| Amp::from_complex(mat[(r, c)], field))
                                .collect()
                        })
                        .collect()
                })
                .collect(),
            j1: pair.j1(),
            j2: pair.j2(),
        })
        .collect();
    ScenarioFile {
        dim: scenario.dim(),
        field: field.as_str().to_owned(),
        measurements,
        metadata,
        n: scenario.n(),
        states,
        version: FORMAT_VERSION.to_owned(),
    }
}
