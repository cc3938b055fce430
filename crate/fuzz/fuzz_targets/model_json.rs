#![no_main]

use libfuzzer_sys::fuzz_target;
use tod_core::gateway::json::{last_json_object, parse_model_json};
use tod_core::gateway::FixtureRecord;

fuzz_target!(|data: &str| {
    let _ = parse_model_json(data);
    if let Some(v) = last_json_object(data) {
        assert!(v.is_object());
    }
    let _ = FixtureRecord::parse_line(data);
});
