#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use unoqa::dataset::Manifest;

fuzz_target!(|data: &[u8]| {
    let _ = Manifest::parse(data, Path::new("/base"));
});
