//! Benchmarks live in `benches/`; this crate has no library code of its own.

use std::path::PathBuf;

/// Path to a bundled case file by stem, e.g. `"case118"`.
pub fn case_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../cases")
        .join(format!("{name}.m"))
}

pub fn load_case(name: &str) -> pfnn_core::Network {
    let text = std::fs::read_to_string(case_path(name)).expect("bundled case present");
    pfnn_core::parse_case(&text).expect("bundled case parses")
}
