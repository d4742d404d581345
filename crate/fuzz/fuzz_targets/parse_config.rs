#![no_main]

use libfuzzer_sys::fuzz_target;

// The whole config surface: arbitrary bytes must never panic the parser,
// and anything that parses must also survive re-serialization.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = multiscale::config::parse_config_str(text) {
        let round = cfg.to_toml();
        let again = multiscale::config::parse_config_str(&round)
            .expect("resolved config must re-parse");
        assert_eq!(cfg, again);
    }
});
