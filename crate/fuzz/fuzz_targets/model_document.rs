#![no_main]

use libfuzzer_sys::fuzz_target;
use motorfit::model::ModelDocument;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(doc) = ModelDocument::from_json(text) {
            // Accepted documents serialize and validate again.
            let _ = ModelDocument::from_json(&doc.to_json()).unwrap();
        }
    }
});
