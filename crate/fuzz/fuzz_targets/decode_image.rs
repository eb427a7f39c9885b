#![no_main]

use libfuzzer_sys::fuzz_target;
use unoqa::dataset::decode_image;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = decode_image(data, 32) {
        assert_eq!((img.width(), img.height()), (32, 32));
    }
});
