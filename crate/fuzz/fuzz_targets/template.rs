#![no_main]

use libfuzzer_sys::fuzz_target;
use tod_core::prompts::PromptTemplate;

fuzz_target!(|data: &str| {
    if let Ok(t) = PromptTemplate::new("fuzz", data) {
        let names: Vec<String> = t.placeholders().iter().map(|s| s.to_string()).collect();
        let values: Vec<(&str, &str)> = names.iter().map(|n| (n.as_str(), "value")).collect();
        t.render(&values).unwrap();
    }
});
