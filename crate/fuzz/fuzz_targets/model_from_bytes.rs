#![no_main]
use libfuzzer_sys::fuzz_target;
use tbcnn::persist::{from_bytes, to_bytes};

fuzz_target!(|data: &[u8]| {
    if let Ok(model) = from_bytes(data) {
        let bytes = to_bytes(&model);
        assert_eq!(from_bytes(&bytes).unwrap(), model);
    }
});
