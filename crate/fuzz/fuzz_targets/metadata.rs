#![no_main]

use std::sync::LazyLock;

use libfuzzer_sys::fuzz_target;
use tod_core::corpus::{parse_date, MetadataExtractor, MetadataRules};

static EXTRACTOR: LazyLock<MetadataExtractor> = LazyLock::new(|| MetadataExtractor::new(&MetadataRules::default()).unwrap());

fuzz_target!(|data: &str| {
    let _ = parse_date(data);
    if let Ok(doc) = EXTRACTOR.extract(data) {
        assert!(!doc.opinion_text.trim().is_empty());
    }
});
