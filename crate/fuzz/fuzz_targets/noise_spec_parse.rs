//! Fuzzes the `--noise` spec parser: arbitrary strings must either be
//! rejected or produce a model that passes its own validation.

#![no_main]

use libfuzzer_sys::fuzz_target;
use onticlab_cli::noise_spec::parse_noise_spec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(model) = parse_noise_spec(text) {
        model.validate().expect("accepted specs are valid models");
    }
});
