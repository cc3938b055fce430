#![no_main]

use libfuzzer_sys::fuzz_target;
use tod_core::discourse::{parse_tree, path_to_root, split_edus, TreeFormat};

fuzz_target!(|data: &str| {
    let _ = split_edus(data);
    if let Ok(tree) = parse_tree(data, TreeFormat::PipelineJson) {
        tree.validate().unwrap();
        let again = parse_tree(&tree.to_json(), TreeFormat::PipelineJson).unwrap();
        assert_eq!(again, tree);
        for edu in &tree.edus {
            path_to_root(&tree, edu.id).unwrap();
        }
    }
});
