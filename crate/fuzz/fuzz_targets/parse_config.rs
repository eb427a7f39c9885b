#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use unoqa::config::{parse_key_values, PipelineConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_key_values(text);
    if let Ok(cfg) = PipelineConfig::from_text(text, Path::new("/base")) {
        let _ = cfg.validate();
        let _ = cfg.hash();
    }
});
