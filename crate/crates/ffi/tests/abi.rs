use std::ffi::CStr;
use std::ptr;

use katoklab_ffi::*;

fn new_map(alpha: f64, r0: f64) -> *mut KatokMap {
    let mut m = ptr::null_mut();
    let st = unsafe { katok_map_new(alpha, r0, &mut m) };
    assert_eq!(st, KatokStatus::Ok);
    assert!(!m.is_null());
    m
}

fn last_error() -> String {
    let p = katok_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn bad_parameters_are_rejected_with_a_message() {
    let mut m = ptr::null_mut();
    let st = unsafe { katok_map_new(1.5, 0.1, &mut m) };
    assert_eq!(st, KatokStatus::InvalidParams);
    assert!(m.is_null());
    assert!(last_error().contains("alpha"));

    let st = unsafe { katok_map_new(0.5, 0.1, ptr::null_mut()) };
    assert_eq!(st, KatokStatus::NullPointer);
}

#[test]
fn forward_then_inverse_returns_the_point() {
    let m = new_map(0.5, 0.1);
    let (mut x, mut y, mut bx, mut by) = (0.0, 0.0, 0.0, 0.0);
    let mut jac = [0.0; 4];
    let mut slowed = -1;
    for &(x0, y0) in &[(0.3, 0.2), (0.05, 0.02), (0.71, 0.9)] {
        unsafe {
            assert_eq!(
                katok_map_apply(m, x0, y0, &mut x, &mut y, jac.as_mut_ptr(), &mut slowed),
                KatokStatus::Ok
            );
            assert!(slowed == 0 || slowed == 1);
            let det = jac[0] * jac[3] - jac[1] * jac[2];
            assert!((det - 1.0).abs() < 1e-6, "det {det}");
            assert_eq!(
                katok_map_apply_inverse(
                    m,
                    x,
                    y,
                    &mut bx,
                    &mut by,
                    ptr::null_mut(),
                    ptr::null_mut()
                ),
                KatokStatus::Ok
            );
        }
        let d = |a: f64, b: f64| {
            let t = (a - b).rem_euclid(1.0);
            t.min(1.0 - t)
        };
        assert!(
            d(bx, x0) < 1e-8 && d(by, y0) < 1e-8,
            "({bx}, {by}) vs ({x0}, {y0})"
        );
    }
    unsafe { katok_map_free(m) };
}

#[test]
fn far_from_the_disk_the_base_map_is_linear() {
    let m = new_map(0.5, 0.1);
    let (mut x, mut y) = (0.0, 0.0);
    let mut slowed = -1;
    unsafe {
        assert_eq!(
            katok_map_apply_base(m, 0.5, 0.5, &mut x, &mut y, ptr::null_mut(), &mut slowed),
            KatokStatus::Ok
        );
    }
    assert_eq!(slowed, 0);
    assert!(
        (x - 0.5).abs() < 1e-12 && y.min(1.0 - y) < 1e-12,
        "({x}, {y})"
    );

    let (mut a, mut r) = (0.0, 0.0);
    assert_eq!(
        unsafe { katok_map_params(m, &mut a, &mut r) },
        KatokStatus::Ok
    );
    assert_eq!((a, r), (0.5, 0.1));
    unsafe { katok_map_free(m) };
}

#[test]
fn null_handles_and_non_finite_points() {
    let (mut x, mut y) = (0.0, 0.0);
    let st = unsafe {
        katok_map_apply(
            ptr::null(),
            0.1,
            0.1,
            &mut x,
            &mut y,
            ptr::null_mut(),
            ptr::null_mut(),
        )
    };
    assert_eq!(st, KatokStatus::NullPointer);
    let m = new_map(0.5, 0.1);
    let st = unsafe {
        katok_map_apply(
            m,
            f64::NAN,
            0.1,
            &mut x,
            &mut y,
            ptr::null_mut(),
            ptr::null_mut(),
        )
    };
    assert_eq!(st, KatokStatus::InvalidParams);
    unsafe {
        katok_map_free(m);
        katok_map_free(ptr::null_mut());
    }
}

#[test]
fn lyapunov_and_log_ju() {
    let m = new_map(0.5, 0.1);
    let mut lj = f64::NAN;
    assert_eq!(
        unsafe { katok_map_log_ju(m, 0.0, 0.0, &mut lj) },
        KatokStatus::Ok
    );
    assert_eq!(lj, 0.0);
    let (mut chi, mut se) = (0.0, 0.0);
    assert_eq!(
        unsafe { katok_map_lyapunov(m, 2000, 7, &mut chi, &mut se) },
        KatokStatus::Ok
    );
    assert!(chi > 0.3 && chi < 1.0, "chi {chi}");
    assert!(se > 0.0);
    assert_eq!(
        unsafe { katok_map_lyapunov(m, 10, 7, &mut chi, ptr::null_mut()) },
        KatokStatus::InsufficientData
    );
    unsafe { katok_map_free(m) };
}

#[test]
fn header_declares_every_entry_point() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/katoklab.h"))
        .unwrap();
    for f in [
        "katok_map_new",
        "katok_map_free",
        "katok_map_apply",
        "katok_map_apply_inverse",
        "katok_map_apply_base",
        "katok_map_log_ju",
        "katok_map_lyapunov",
        "katok_last_error",
        "katok_version",
        "KATOK_STATUS_PANIC = 99",
    ] {
        assert!(h.contains(f), "{f} missing from header");
    }
    let v = unsafe { CStr::from_ptr(katok_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
