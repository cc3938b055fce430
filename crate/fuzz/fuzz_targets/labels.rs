#![no_main]

use libfuzzer_sys::fuzz_target;
use tod_core::extraction::{Method, PredictedLabel};
use tod_core::sectioning::SectionLabel;

fuzz_target!(|data: &str| {
    if let Ok(label) = data.parse::<SectionLabel>() {
        assert_eq!(label.as_str().parse::<SectionLabel>().unwrap(), label);
    }
    if let Ok(label) = data.parse::<PredictedLabel>() {
        assert_eq!(label.as_str().parse::<PredictedLabel>().unwrap(), label);
    }
    if let Ok(method) = data.parse::<Method>() {
        assert_eq!(method.as_str().parse::<Method>().unwrap(), method);
    }
});
