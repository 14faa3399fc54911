//! Fuzzes the scenario-file decoder: arbitrary bytes must never panic,
//! anything that parses must serialize idempotently, and anything that
//! validates into a scenario must stay valid through a canonical
//! re-emission.

#![no_main]

use libfuzzer_sys::fuzz_target;
use onticlab_cli::scenario_file;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(file) = scenario_file::parse(text) else { return };

    // Parse → serialize reaches a fixpoint after one round.
    let canonical = file.canonical_json();
    let reparsed = scenario_file::parse(&canonical).expect("canonical form parses");
    assert_eq!(canonical, reparsed.canonical_json());

    // Semantic validation must reject or accept without panicking, and
    // an accepted scenario survives its own canonical re-emission.
    if let Ok(scenario) = scenario_file::to_scenario(&file) {
        let again = scenario_file::from_scenario(&scenario, file.metadata.clone());
        scenario_file::to_scenario(&again).expect("canonical re-emission stays valid");
    }
});
