#![no_main]

use libfuzzer_sys::fuzz_target;
use tod_core::corpus::{reassemble, split_cases, Splitter, SplitterConfig};

fuzz_target!(|data: &str| {
    let splitter = Splitter::new(&SplitterConfig::default()).unwrap();
    if let Ok(blocks) = split_cases(data, &splitter) {
        assert!(!blocks.is_empty());
        assert_eq!(reassemble(&blocks).trim(), data.trim());
    }
});
