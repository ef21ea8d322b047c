use folnerlab::gallery::{entry, NAMES};
use folnerlab::realization::{extract_realization, RealizationError};
use folnerlab::values::ShiftSampling;

#[test]
fn cocycle_certificate_has_invariant_windows_and_no_violations() {
    let e = entry("cocycle", &ShiftSampling::default()).unwrap();
    let cfg = folnerlab::realization::ExtractConfig { constants: Some(e.constants), ..e.extract.clone() };
    let cert = extract_realization(e.map.as_ref(), e.error.as_ref(), &cfg).unwrap();
    assert_eq!(cert.m, 43);
    assert!(cert.invariant_windows >= 2, "{}", cert.invariant_windows);
    assert_eq!(cert.violations, 0);
}

#[test]
fn weak_gibbs_certificate_extracts() {
    let e = entry("weak-gibbs", &ShiftSampling::default()).unwrap();
    let cfg = folnerlab::realization::ExtractConfig { constants: Some(e.constants), ..e.extract.clone() };
    let cert = extract_realization(e.map.as_ref(), e.error.as_ref(), &cfg).unwrap();
    assert_eq!(cert.violations, 0);
    let eps = cert.epsilon;
    let m = cert.m as f64;
    assert!(4.0 * m.sqrt() <= m * eps);
    assert!(4.0 * (m - 1.0).sqrt() > (m - 1.0) * eps);
}

#[test]
fn counterexample_tile_side_is_out_of_reach() {
    let e = entry("counterexample", &ShiftSampling::default()).unwrap();
    let cfg = folnerlab::realization::ExtractConfig { constants: Some(e.constants), ..e.extract.clone() };
    let err = extract_realization(e.map.as_ref(), e.error.as_ref(), &cfg).unwrap_err();
    assert!(matches!(err, RealizationError::NoTileSide { .. }), "{err}");
    assert!(NAMES.contains(&"counterexample"));
}
