#![no_main]

use libfuzzer_sys::fuzz_target;
use motorfit::TransferFunction;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(tf) = TransferFunction::parse_literal(text) {
            // A parsed transfer function must survive its own round trip.
            let again = TransferFunction::parse_literal(&tf.to_literal()).unwrap();
            assert_eq!(tf, again);
        }
    }
});
