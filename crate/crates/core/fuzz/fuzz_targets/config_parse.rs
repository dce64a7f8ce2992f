#![no_main]

use libfuzzer_sys::fuzz_target;
use relosc::harness::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::from_json(src) {
        let again = ExperimentConfig::from_json(&cfg.canonical_json()).expect("canonical form reparses");
        assert_eq!(cfg.canonical_json(), again.canonical_json());
        let _ = cfg.sweep_points();
    }
});
