#![no_main]

use libfuzzer_sys::fuzz_target;
use sbdf_harness::config::Entries;
use sbdf_harness::Settings;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let _ = Entries::parse(text);
    if let Ok(s) = Settings::parse(text) {
        let echoed: String = s.echo.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        let again = Settings::parse(&echoed).expect("echoed settings parse");
        assert_eq!(again.echo, s.echo);
    }
});
