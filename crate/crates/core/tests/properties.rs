use katoklab::error::KatokError;
use katoklab::katok::KatokMap;
use katoklab::params::{KatokParams, TorusPoint, LAMBDA};
use katoklab::symbolic::primitive_orbits;
use katoklab::thermo::{log_ju, log_ju_sum};
use proptest::prelude::*;
use std::sync::OnceLock;

fn map() -> &'static KatokMap {
    static M: OnceLock<KatokMap> = OnceLock::new();
    M.get_or_init(|| KatokMap::new(KatokParams::new(0.5, 0.1).unwrap()))
}

fn torus() -> impl Strategy<Value = TorusPoint> {
    (0.0..1.0f64, 0.0..1.0f64).prop_map(|(x, y)| TorusPoint::new(x, y))
}

/// Points whose backward history lingers at the neutral fixed point have no settled
/// unstable direction within the history budget; those are skipped, not failed.
fn settled(r: Result<f64, KatokError>) -> Option<f64> {
    match r {
        Ok(v) => Some(v),
        Err(KatokError::Convergence { .. }) => None,
        Err(e) => panic!("{e}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn log_ju_is_a_cocycle(p in torus(), n in 1usize..=60, m in 1usize..=40) {
        let m0 = map();
        let whole = settled(log_ju_sum(m0, p, n + m));
        prop_assume!(whole.is_some());
        let whole = whole.unwrap();
        let mut q = p;
        for _ in 0..n {
            q = m0.apply_gt2(q).unwrap().image;
        }
        let tail = settled(log_ju_sum(m0, q, m));
        prop_assume!(tail.is_some());
        let split = log_ju_sum(m0, p, n).unwrap() + tail.unwrap();
        prop_assert!((whole - split).abs() < 1e-6, "{whole} vs {split}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn one_step_sum_is_log_ju(p in torus()) {
        let a = settled(log_ju_sum(map(), p, 1));
        prop_assume!(a.is_some());
        let a = a.unwrap();
        let b = log_ju(map(), p).unwrap();
        prop_assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn inverse_undoes_the_map(p in torus()) {
        let m0 = map();
        let q = m0.apply_gt2(p).unwrap().image;
        let back = m0.apply_gt2_inv(q).unwrap().image;
        prop_assert!(back.dist(&p) < 1e-8, "{back:?} vs {p:?}");
    }

    #[test]
    fn area_is_preserved(p in torus()) {
        let det = map().dgt2(p).unwrap().determinant();
        prop_assert!((det - 1.0).abs() < 1e-7, "det {det}");
    }
}

#[test]
fn periodic_orbit_off_the_disk_grows_like_lambda() {
    // along an orbit that stays outside the slow-down region the growth is exactly log λ
    let orbit = primitive_orbits(5)
        .unwrap()
        .into_iter()
        .find(|o| o.iter().all(|p| map().slowdown_lift(*p).is_none()))
        .expect("a period-5 orbit away from the disk");
    // primitive_orbits lists A-orbits, which are G-orbits here; Φ carries them to G_T2
    let p = map().phi(orbit[0]).unwrap();
    let s = log_ju_sum(map(), p, 5).unwrap();
    assert!((s - 5.0 * LAMBDA.ln()).abs() < 1e-8, "{s}");
}
