#![no_main]

use libfuzzer_sys::fuzz_target;
use nestagree::corpus::{DatasetId, Split, TokenStream};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let id = DatasetId { p1: 0.5, p2: 0.5, split: Split::Test, seed: 0 };
    if let Ok(stream) = TokenStream::parse_text(id, text) {
        let mut out = Vec::new();
        stream.write_text(&mut out).unwrap();
        let again = TokenStream::parse_text(id, std::str::from_utf8(&out).unwrap()).unwrap();
        assert_eq!(again.ids(), stream.ids());
    }
});
