#![no_main]
use libfuzzer_sys::fuzz_target;
use mutree::{parse_newick, serialize_newick};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(tree) = parse_newick(text) {
        let out = serialize_newick(&tree).expect("parsed trees serialize");
        let again = parse_newick(&out).expect("serialized trees parse");
        assert_eq!(tree, again);
    }
});
