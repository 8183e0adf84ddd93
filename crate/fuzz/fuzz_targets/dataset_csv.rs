#![no_main]

use libfuzzer_sys::fuzz_target;
use plasmode_core::scenario::dataset::{ingest_reader, write_standardized, MAX_ABS_CORRELATION};
use plasmode_core::Error;

fuzz_target!(|data: &[u8]| {
    let Ok(d) = ingest_reader(data) else { return };
    let s = &d.summary;
    assert_eq!(s.feature_names.len(), s.feature_count);
    assert!(s.max_abs_pairwise_correlation <= MAX_ABS_CORRELATION);
    for (i, row) in s.correlation.iter().enumerate() {
        assert_eq!(row[i], 1.0);
        for (j, c) in row.iter().enumerate() {
            assert!(c.is_finite());
            assert_eq!(*c, s.correlation[j][i]);
        }
    }
    let mut buf = Vec::new();
    write_standardized(&d, &mut buf).unwrap();
    match ingest_reader(buf.as_slice()) {
        Ok(again) => assert_eq!(again.summary.feature_names, s.feature_names),
        // rounding can push a correlation sitting on the bound just past it
        Err(Error::CorrelationBound { value, bound, .. }) => assert!((value.abs() - bound).abs() < 1e-9),
        Err(e) => panic!("standardized output rejected: {e}"),
    }
});
