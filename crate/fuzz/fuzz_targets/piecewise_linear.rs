#![no_main]

use libfuzzer_sys::fuzz_target;
use sbdf_core::model::PiecewiseLinear;

fuzz_target!(|text: &str| {
    if let Ok(p) = text.parse::<PiecewiseLinear>() {
        let again: PiecewiseLinear = p.to_string().parse().expect("display form parses");
        assert_eq!(again, p);
        let (lo, hi) = p.range_on(0.0, 1.0);
        assert!(lo <= hi);
    }
});
