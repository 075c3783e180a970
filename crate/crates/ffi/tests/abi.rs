use std::ffi::CStr;
use std::ptr;

use slowinst_ffi::*;

const RUNNING: (f64, f64, f64, f64) = (0.5, 2.7, 1.0, 1e-2);

fn running() -> *mut SiModel {
    let mut m = ptr::null_mut();
    let (a, b, c, d) = RUNNING;
    let st = unsafe { si_model_new(a, b, c, d, &mut m) };
    assert_eq!(st, SiStatus::Ok);
    assert!(!m.is_null());
    m
}

fn last_error() -> String {
    let p = si_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn phase_satisfies_both_dispersion_conditions() {
    let m = running();
    let (mut omega, mut k) = (0.0, 0.0);
    assert_eq!(
        unsafe { si_model_phase(m, &mut omega, &mut k) },
        SiStatus::Ok
    );
    // μ(k) = ω and λ(3k) = 3ω, written out independently
    let mu = (1.0 + 0.25 * k * k).sqrt();
    let lam3 = (2.7f64 * 2.7 + 9.0 * k * k).sqrt();
    assert!((mu - omega).abs() < 1e-13);
    assert!((lam3 - 3.0 * omega).abs() < 1e-12);
    assert!(si_last_error_message().is_null());
    unsafe { si_model_free(m) };
}

#[test]
fn dispersion_and_group_velocity() {
    let m = running();
    let mut v = 0.0;
    for xi in [-3.0, 0.0, 0.7, 12.0] {
        assert_eq!(unsafe { si_dispersion(m, 1, xi, &mut v) }, SiStatus::Ok);
        assert!((v - (1.0 + 0.25 * xi * xi).sqrt()).abs() < 1e-14);
        assert_eq!(unsafe { si_dispersion(m, 0, xi, &mut v) }, SiStatus::Ok);
        let lam = (2.7f64 * 2.7 + xi * xi).sqrt();
        assert!((v - lam).abs() < 1e-13);
        // central difference of λ
        let h = 1e-5;
        let fd = ((2.7f64 * 2.7 + (xi + h) * (xi + h)).sqrt()
            - (2.7f64 * 2.7 + (xi - h) * (xi - h)).sqrt())
            / (2.0 * h);
        assert_eq!(unsafe { si_group_velocity(m, 0, xi, &mut v) }, SiStatus::Ok);
        assert!((v - fd).abs() < 1e-8);
    }
    unsafe { si_model_free(m) };
}

#[test]
fn resonances_and_selection() {
    let m = running();
    let mut pts = SiResonancePoints::default();
    assert_eq!(unsafe { si_resonance_points(m, &mut pts) }, SiStatus::Ok);
    assert!((pts.xi2 - 2.18108).abs() < 1e-5);
    assert!((pts.xi3 + 8.42422).abs() < 1e-5);

    // the same points through the general root finder
    let mut len = 0usize;
    let st = unsafe { si_find_resonances(m, 0, 0, 3, 0, 1, ptr::null_mut(), 0, &mut len) };
    assert_eq!(st, SiStatus::BufferTooSmall);
    assert_eq!(len, 2);
    let mut buf = [0.0; 4];
    let st = unsafe { si_find_resonances(m, 0, 0, 3, 0, 1, buf.as_mut_ptr(), 4, &mut len) };
    assert_eq!(st, SiStatus::Ok);
    assert_eq!(len, 2);
    assert!((buf[0] - pts.xi3).abs() < 1e-10 && (buf[1] - pts.xi2).abs() < 1e-10);

    let (mut xi0, mut r) = (0.0, 0.0);
    assert_eq!(unsafe { si_select_xi0(m, &mut xi0, &mut r) }, SiStatus::Ok);
    // μ grows with |ξ|, so the point closer to zero wins
    assert_eq!(xi0, pts.xi2);
    assert_eq!(r, pts.xi3);
    let mut g = 0.0;
    assert_eq!(unsafe { si_gamma1(m, xi0, &mut g) }, SiStatus::Ok);
    assert!((g - 0.294936).abs() < 1e-5);
    unsafe { si_model_free(m) };
}

#[test]
fn analyze_returns_audit_json() {
    let m = running();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { si_analyze_json(m, &mut s) }, SiStatus::Ok);
    let text = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_owned();
    unsafe { si_string_free(s) };
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["format"], "slowinst-audit");
    assert_eq!(v["matches_closed_form"], true);
    assert_eq!(v["non_transparent"].as_array().unwrap().len(), 6);
    unsafe { si_model_free(m) };
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut m = ptr::null_mut();
    let st = unsafe { si_model_new(0.5, 2.0, 1.0, 1e-2, &mut m) };
    assert_eq!(st, SiStatus::InvalidParameter);
    assert!(m.is_null());
    assert!(last_error().contains("alpha0"));

    let st = unsafe { si_model_new(0.5, 2.7, 1.0, 1e-2, ptr::null_mut()) };
    assert_eq!(st, SiStatus::NullPointer);

    let mut v = 0.0;
    assert_eq!(
        unsafe { si_gamma1(ptr::null(), 1.0, &mut v) },
        SiStatus::NullPointer
    );
    assert!(last_error().contains("null"));

    let m = running();
    assert_eq!(
        unsafe { si_dispersion(m, 7, 1.0, &mut v) },
        SiStatus::InvalidEnum
    );
    assert_eq!(
        unsafe { si_gamma1(m, 1.0, ptr::null_mut()) },
        SiStatus::NullPointer
    );
    // success clears the message
    assert_eq!(unsafe { si_gamma1(m, 1.0, &mut v) }, SiStatus::Ok);
    assert!(si_last_error_message().is_null());
    unsafe { si_model_free(m) };
    unsafe { si_model_free(ptr::null_mut()) };
    unsafe { si_string_free(ptr::null_mut()) };
}

#[test]
fn status_names_are_static() {
    let name = |s| {
        unsafe { CStr::from_ptr(si_status_name(s)) }
            .to_str()
            .unwrap()
    };
    assert_eq!(name(SiStatus::Ok), "ok");
    assert_eq!(name(SiStatus::BufferTooSmall), "buffer_too_small");
    let v = unsafe { CStr::from_ptr(si_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
