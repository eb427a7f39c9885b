#![no_main]

use libfuzzer_sys::fuzz_target;
use unoqa::scoring::ThresholdModel;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok((model, hash)) = ThresholdModel::from_text(text) {
        let (again, again_hash) = ThresholdModel::from_text(&model.to_text(&hash)).expect("written threshold parses");
        assert_eq!(hash, again_hash);
        assert_eq!(model.tau.to_bits(), again.tau.to_bits());
    }
});
