mod common;

use rilt::kernel::{harmonic_residual, kernel_spectral, kernel_time_sum, PotentialKernelTable};
use rilt::{Error, IncrementLaw, Site};

#[test]
fn kernel_vanishes_at_e1_and_is_symmetric() {
    let t = common::table();
    assert!(t.g(Site::E1).abs() < 1e-12);
    for (x, y) in [(3, 1), (7, -4), (0, 12), (20, 5)] {
        let g = t.g(Site::new(x, y));
        for s in [Site::new(-x, y), Site::new(x, -y), Site::new(y, x), Site::new(-y, -x)] {
            assert!((t.g(s) - g).abs() < 1e-12, "{s:?}");
        }
    }
}

#[test]
fn kernel_is_harmonic_off_the_origin() {
    let law = IncrementLaw::default_law();
    let t = common::table();
    for z in [Site::ORIGIN, Site::E1, Site::new(5, 3), Site::new(-20, 11), Site::new(30, 30)] {
        let r = harmonic_residual(t, &law, z);
        assert!(r < 1e-8, "{z:?}: {r:e}");
    }
}

#[test]
fn table_matches_pointwise_quadrature_and_time_sums() {
    let law = IncrementLaw::default_law();
    let t = common::table();
    let pts = [Site::ORIGIN, Site::new(2, 1), Site::new(6, -5)];
    let sums = kernel_time_sum(&law, &pts, 2048).unwrap();
    for (x, s) in pts.iter().zip(&sums) {
        assert!((kernel_spectral(&law, *x).unwrap() - t.g(*x)).abs() < 1e-10);
        assert!((s - t.g(*x)).abs() < 1e-6, "{x:?}: {s} vs {}", t.g(*x));
    }
}

#[test]
fn kernel_grows_logarithmically() {
    let t = common::table();
    let kappa = t.kappa();
    assert!((kappa - 0.0885308).abs() < 1e-6, "{kappa}");
    let x = Site::new(40, 9);
    let asym = -x.norm().ln() / std::f64::consts::PI + kappa;
    assert!((t.g(x) - asym).abs() < 1e-4);
}

#[test]
fn periodic_law_is_refused() {
    let err = PotentialKernelTable::build(&IncrementLaw::simple_random_walk(), 8).unwrap_err();
    assert!(matches!(err, Error::NotAperiodic { .. }), "{err}");
}

#[test]
fn cache_round_trip_preserves_values() {
    let dir = tempfile::tempdir().unwrap();
    let law = IncrementLaw::default_law();
    let a = PotentialKernelTable::load_or_build(&law, 12, Some(dir.path())).unwrap();
    let b = PotentialKernelTable::load_or_build(&law, 12, Some(dir.path())).unwrap();
    assert_eq!(a.values_hash(), b.values_hash());
    assert_eq!(a.kappa(), b.kappa());
}
