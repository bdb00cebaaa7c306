#![no_main]

use libfuzzer_sys::fuzz_target;
use sbdf_core::snapshot::{decode, encode};

// The decoder is strict, so anything it accepts must re-encode bit for bit.
fuzz_target!(|data: &[u8]| {
    if let Ok(field) = decode(data) {
        assert_eq!(encode(&field), data);
    }
});
