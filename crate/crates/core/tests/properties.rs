use proptest::prelude::*;

use rilt::chains::{brute_force_count, count_chains, renormalize_with, ChainSpec, CounterFamily};
use rilt::stats::{extrapolate_to_zero, ols};
use rilt::walk::{simulate, WalkPath};
use rilt::{IncrementLaw, Site};

fn site(r: i64) -> impl Strategy<Value = Site> {
    (-r..=r, -r..=r).prop_map(|(x, y)| Site::new(x, y))
}

/// Short lattice paths with small steps, so that chains actually occur.
fn path(max_len: usize) -> impl Strategy<Value = Vec<Site>> {
    prop::collection::vec(site(1), 0..max_len).prop_map(|steps| {
        let mut pos = vec![Site::ORIGIN];
        for s in steps {
            let last = *pos.last().unwrap();
            pos.push(last + s);
        }
        pos
    })
}

fn spec() -> impl Strategy<Value = ChainSpec> {
    (1usize..=4).prop_flat_map(|k| prop::collection::vec(site(1), k - 1).prop_map(move |offs| ChainSpec::new(k, offs).unwrap()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn recursion_matches_enumeration(pos in path(14), spec in spec()) {
        let c = count_chains(&pos, &spec).unwrap();
        for j in 0..pos.len() {
            prop_assert_eq!(c.running()[j], brute_force_count(&pos[..=j], &spec));
        }
    }

    #[test]
    fn counts_are_monotone_and_single_chains_count_times(pos in path(30), spec in spec()) {
        let c = count_chains(&pos, &spec).unwrap();
        prop_assert!(c.running().windows(2).all(|w| w[0] <= w[1]));
        let single = count_chains(&pos, &ChainSpec::single()).unwrap();
        prop_assert_eq!(single.total(), pos.len() as u64 - 1);
    }

    #[test]
    fn translating_the_path_leaves_counts_unchanged(pos in path(20), spec in spec(), shift in site(50)) {
        let moved: Vec<Site> = pos.iter().map(|&p| p + shift).collect();
        let (a, b) = (count_chains(&pos, &spec).unwrap(), count_chains(&moved, &spec).unwrap());
        prop_assert_eq!(a.running(), b.running());
    }

    #[test]
    fn zero_kernel_renormalization_is_the_raw_count(pos in path(20), spec in spec()) {
        let fam = CounterFamily::for_spec(&pos, &spec).unwrap();
        let series = renormalize_with(&fam, &spec, 16, |_| 0.0).unwrap();
        let raw = count_chains(&pos, &spec).unwrap();
        for (v, b) in series.values.iter().zip(raw.running()) {
            prop_assert_eq!(*v, *b as f64);
        }
    }

    #[test]
    fn simulated_steps_lie_in_the_support(n in 0usize..300, seed in any::<u64>(), stream in any::<u64>()) {
        let law = IncrementLaw::default_law();
        let walk = simulate(&law, n, seed, stream);
        prop_assert_eq!(walk.positions().len(), n + 1);
        prop_assert_eq!(walk.positions()[0], Site::ORIGIN);
        for w in walk.positions().windows(2) {
            prop_assert!(law.prob_of(w[1] - w[0]) > 0.0);
        }
        let again = simulate(&law, n, seed, stream);
        prop_assert_eq!(again.positions(), walk.positions());
    }

    #[test]
    fn prefixes_of_a_walk_are_walks(n in 1usize..200, m in 0usize..200, seed in any::<u64>()) {
        let walk = simulate(&IncrementLaw::default_law(), n, seed, 0);
        let m = m.min(n);
        let pre: WalkPath = walk.prefix(m);
        prop_assert_eq!(pre.positions(), &walk.positions()[..=m]);
    }

    #[test]
    fn least_squares_recovers_lines(a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let x = [0.05, 0.1, 0.2, 0.4];
        let y: Vec<f64> = x.iter().map(|t| a * t + b).collect();
        let (slope, intercept) = ols(&x, &y);
        prop_assert!((slope - a).abs() < 1e-9 && (intercept - b).abs() < 1e-9);
        prop_assert!((extrapolate_to_zero(&x, &y) - b).abs() < 1e-9);
    }
}
