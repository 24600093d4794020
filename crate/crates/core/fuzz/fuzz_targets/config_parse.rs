#![no_main]

use ampsize::config::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(c) = RunConfig::from_json(s) {
            let back = RunConfig::from_json(&c.to_json()).expect("serialized config parses");
            assert_eq!(c, back);
        }
    }
});
