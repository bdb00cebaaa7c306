#![no_main]

use libfuzzer_sys::fuzz_target;
use sbdf_core::model::Schedule;

fuzz_target!(|text: &str| {
    if let Ok(s) = text.parse::<Schedule>() {
        let again: Schedule = s.to_string().parse().expect("display form parses");
        assert_eq!(again, s);
    }
});
