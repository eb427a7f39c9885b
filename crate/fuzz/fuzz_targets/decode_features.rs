#![no_main]

use libfuzzer_sys::fuzz_target;
use unoqa::dataset::{decode_features, encode_features};

fuzz_target!(|data: &[u8]| {
    if let Ok((pyramids, ids)) = decode_features(data) {
        // Anything that decodes must re-encode to a file that decodes the same way.
        let bytes = encode_features(&pyramids, &ids).expect("decoded features re-encode");
        let (again, again_ids) = decode_features(&bytes).expect("re-encoded features decode");
        assert_eq!(ids, again_ids);
        assert_eq!(pyramids.len(), again.len());
    }
});
