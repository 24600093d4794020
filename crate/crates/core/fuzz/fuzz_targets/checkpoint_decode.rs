#![no_main]

use ampsize::neural::Checkpoint;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(c) = Checkpoint::decode(data) {
        // header JSON may be re-serialized differently, so compare decoded values
        assert_eq!(Checkpoint::decode(&c.encode()).unwrap(), c);
    }
});
