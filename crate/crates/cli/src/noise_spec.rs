//! Parser for the `--noise` command-line argument.
//!
//! Accepted forms:
//!
//! - `defaults` — the stock [`NoiseModel`];
//! - `off` — noiseless statistics (finite counts only);
//! - a comma-separated `KEY=VAL` list applied on top of the defaults,
//!   where each key is a [`NoiseModel`] field name, e.g.
//!   `prep_fidelity_mean=0.995,drift_sd=0.01`.
//!
//! Unknown keys, unparsable values and parameter combinations the
//! model itself rejects are all usage errors: this string arrives
//! straight from the command line.

use onticlab::NoiseModel;

use crate::CliError;

pub fn parse_noise_spec(spec: &str) -> Result<NoiseModel, CliError> {
    let usage = |m: String| CliError::Usage(m);
    match spec.trim() {
        "defaults" => return Ok(NoiseModel::default()),
        "off" => return Ok(NoiseModel::off()),
        "" => return Err(usage("noise spec is empty".to_owned())),
        _ => {}
    }

    let mut model = NoiseModel::default();
    for item in spec.split(',') {
        let item = item.trim();
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| usage(format!("noise spec item {item:?} is not KEY=VAL")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| usage(format!("noise spec {key}: {:?} is not a number", value.trim())))?;
        let slot = match key.trim() {
            "counts_per_setting" => &mut model.counts_per_setting,
            "prep_fidelity_mean" => &mut model.prep_fidelity_mean,
            "prep_fidelity_sd" => &mut model.prep_fidelity_sd,
            "meas_fidelity_drop_mean" => &mut model.meas_fidelity_drop_mean,
            "meas_fidelity_drop_sd" => &mut model.meas_fidelity_drop_sd,
            "detection_efficiency" => &mut model.detection_efficiency,
            "drift_sd" => &mut model.drift_sd,
            other => return Err(usage(format!("unknown noise parameter {other:?}"))),
        };
        *slot = value;
    }
    model.validate().map_err(|e| usage(format!("noise spec: {e}")))?;
    Ok(model)
}
