#![no_main]

use libfuzzer_sys::fuzz_target;
use tod_core::corpus::{read_documents, read_gold_labels, write_documents};
use tod_core::discourse::read_trees;
use tod_core::extraction::read_results;

fuzz_target!(|data: &[u8]| {
    if let Ok(docs) = read_documents(data) {
        let mut buf = Vec::new();
        write_documents(&mut buf, &docs).unwrap();
        assert_eq!(read_documents(buf.as_slice()).unwrap(), docs);
    }
    let _ = read_gold_labels(data);
    let _ = read_trees(data);
    let _ = read_results(data);
});
