#![no_main]

use libfuzzer_sys::fuzz_target;
use plasmode_core::scenario::{Preset, ScenarioConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let _ = Preset::from_json(s);
    let Ok(cfg) = ScenarioConfig::from_json(s) else { return };
    // serialization must round-trip whatever parsed
    let again = ScenarioConfig::from_json(&cfg.to_json()).expect("serialized config parses");
    assert_eq!(again, cfg);
    let _ = cfg.validate();
});
