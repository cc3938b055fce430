#![no_main]

use std::sync::LazyLock;

use libfuzzer_sys::fuzz_target;
use tod_core::corpus::{build_graph, CitationExtractor, CitationRules, Corpus, Document};

static EXTRACTOR: LazyLock<CitationExtractor> = LazyLock::new(|| CitationExtractor::new(&CitationRules::default()).unwrap());

fuzz_target!(|data: &str| {
    let doc = Document::new("fuzz", "Fuzz v. Target", data);
    let citations = EXTRACTOR.extract(&doc);
    for c in &citations {
        assert_eq!(&data[c.offset..c.offset + c.raw_text.len()], c.raw_text);
    }
    let corpus = Corpus::new(vec![doc]).unwrap();
    let graph = build_graph(&corpus, &citations).unwrap();
    graph.validate().unwrap();
});
