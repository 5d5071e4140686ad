#![no_main]

use libfuzzer_sys::fuzz_target;
use nestagree::grammar::{derivation_log_prob, parse_sentence, parse_tokens, render_tokens, GrammarParams};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(tokens) = parse_tokens(text) else { return };
    assert_eq!(parse_tokens(&render_tokens(&tokens)).unwrap(), tokens);
    if let Ok(d) = parse_sentence(&tokens) {
        assert_eq!(d.tokens(), tokens);
        let lp = derivation_log_prob(&GrammarParams::new(0.5, 0.5).unwrap(), &d);
        assert!(lp <= 0.0);
    }
});
