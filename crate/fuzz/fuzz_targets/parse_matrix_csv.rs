#![no_main]
use libfuzzer_sys::fuzz_target;
use mutree::{matrix_to_tree, parse_matrix_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(m) = parse_matrix_csv(text) {
        if let Ok(p) = matrix_to_tree(&m) {
            assert_eq!(p.tree.n_leaves(), m.cells.len());
        }
    }
});
