#![no_main]
use libfuzzer_sys::fuzz_target;
use mutree::{format_tree_set, parse_tree_set};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(trees) = parse_tree_set(text) {
        let out = format_tree_set(&trees, &[]).expect("parsed trees serialize");
        assert_eq!(parse_tree_set(&out).expect("round trip"), trees);
    }
});
