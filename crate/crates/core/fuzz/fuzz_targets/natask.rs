#![no_main]

use libfuzzer_sys::fuzz_target;
use nestagree::corpus::{check_na_sentence, NaTask};

// Task file and verb index, separated by the first NUL byte.
fuzz_target!(|data: &[u8]| {
    let Some(cut) = data.iter().position(|&b| b == 0) else { return };
    let (task, index) = (&data[..cut], &data[cut + 1..]);
    if let Ok(t) = NaTask::read(task, index) {
        for s in &t.sentences {
            assert_eq!(check_na_sentence(&t.spec, &s.tokens).unwrap(), s.nouns);
        }
        let (mut a, mut b) = (Vec::new(), Vec::new());
        t.write(&mut a, &mut b).unwrap();
        assert_eq!(NaTask::read(&a[..], &b[..]).unwrap(), t);
    }
});
