#![no_main]

use libfuzzer_sys::fuzz_target;
use nestagree::analysis::AblationReport;
use nestagree::evaluation::{AccuracyMatrix, PerVerbMatrix};
use nestagree::training::read_metrics_csv;

// The first byte picks the reader.
fuzz_target!(|data: &[u8]| {
    let Some((&which, rest)) = data.split_first() else { return };
    match which % 4 {
        0 => {
            if let Ok(m) = AccuracyMatrix::read_csv(rest) {
                let mut out = Vec::new();
                m.write_csv(&mut out, "fuzz").unwrap();
                let again = AccuracyMatrix::read_csv(&out[..]).unwrap();
                assert_eq!((again.depths, again.spacings), (m.depths, m.spacings));
            }
        }
        1 => {
            if let Ok(m) = PerVerbMatrix::read_csv(rest) {
                let mut out = Vec::new();
                m.write_csv(&mut out, "fuzz").unwrap();
                assert_eq!(PerVerbMatrix::read_csv(&out[..]).unwrap().depths, m.depths);
            }
        }
        2 => {
            if let Ok(r) = AblationReport::read_csv(rest) {
                let mut out = Vec::new();
                r.write_csv(&mut out, "fuzz").unwrap();
                assert_eq!(AblationReport::read_csv(&out[..]).unwrap().rows.len(), r.rows.len());
            }
        }
        _ => {
            let _ = read_metrics_csv(rest);
        }
    }
});
