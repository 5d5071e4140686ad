#![no_main]

use libfuzzer_sys::fuzz_target;
use nestagree::config::PipelineConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(c) = PipelineConfig::parse(text) {
        let _ = c.validate();
        assert_eq!(PipelineConfig::parse(&c.to_toml()).unwrap(), c);
    }
});
