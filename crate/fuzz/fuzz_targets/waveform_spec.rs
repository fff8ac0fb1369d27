#![no_main]

use libfuzzer_sys::fuzz_target;
use motorfit::sim::WaveformSpec;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(spec) = text.parse::<WaveformSpec>() {
            // Accepted specs must evaluate to finite values.
            assert!(spec.value_at(0.37).is_finite());
        }
    }
});
