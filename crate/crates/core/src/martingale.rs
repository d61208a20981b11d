//! Correctors that turn renormalized chain counts into martingales.
//!
//! For k = 2, M_j = Σ_{i<j} G_m(X_j − X_i − x) + B̃_{2,m}(j, x).
//!
//! For k ≥ 3 the corrector is
//!   Ũ_{k,m}(j) = Σ_{i=1}^{j} G_m(X_j − X_i − x_k) ΔB̃_{k−1,m}(i, x_{kᶜ}).
//! Summing from i = 1 drops the order-one chain that starts at time 0: with
//! B̃₁(i) = i extended to i = −1, the i = 0 increment is
//! (−1)^k Π_{l<k} G_m(x_l), which contributes the origin term
//!   (−1)^k Π_{l<k} G_m(x_l) · G_m(X_j − x_k).
//! Without it the conditional drift is ±Π G_m(x_l) · p(1, 0, X_{j−1} − x_k).
//! Ũ + origin + B̃ is a martingale started at (−1)^k Π G_m(x_l) G_m(−x_k);
//! [`MartingaleSeries`] subtracts that constant so M₀ = 0, which for k = 2
//! reproduces the i = 0..j−1 corrector exactly.

use serde::{Deserialize, Serialize};

use crate::chains::{renormalize_with, ChainSpec, CounterFamily, RenormalizedSeries};
use crate::error::{Error, Result};
use crate::increment_law::IncrementLaw;
use crate::kernel::PotentialKernelTable;
use crate::lattice::Site;

/// Which kernel enters the corrector and the renormalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelMode {
    /// G itself. The constant Ĝ(√m e₁) cancels between corrector and count.
    ExactG,
    /// G_m = G − Ĝ(√m e₁).
    CachedG,
}

/// The kernel as a function, shifted according to the mode.
#[derive(Clone, Copy)]
pub struct KernelView<'a> {
    table: &'a PotentialKernelTable,
    shift: f64,
}

impl<'a> KernelView<'a> {
    pub fn new(table: &'a PotentialKernelTable, mode: KernelMode, m: usize) -> Self {
        let shift = match mode {
            KernelMode::ExactG => 0.0,
            KernelMode::CachedG => table.g_at_scale(m),
        };
        KernelView { table, shift }
    }

    pub fn at(&self, x: Site) -> f64 {
        self.table.g(x) - self.shift
    }
}

/// Ũ₂(j, x) = Σ_{i=0}^{j−1} G_m(X_j − X_i − x) for j = 0..n. O(n²).
pub fn corrector_u2(positions: &[Site], x: Site, table: &PotentialKernelTable, m: usize) -> Vec<f64> {
    let g = KernelView::new(table, KernelMode::CachedG, m);
    (0..positions.len())
        .map(|j| (0..j).map(|i| g.at(positions[j] - positions[i] - x)).sum())
        .collect()
}

/// Ũ_{k,m}(j, x) = Σ_{i=1}^{j} G_m(X_j − X_i − x_k) ΔB̃_{k−1,m}(i) for j = 0..n.
///
/// `lower` must be the series for (k − 1, x_{kᶜ}) at the same m.
pub fn corrector_uk(positions: &[Site], spec: &ChainSpec, lower: &RenormalizedSeries, table: &PotentialKernelTable, m: usize) -> Result<Vec<f64>> {
    check_lower(spec, lower, m, positions.len())?;
    let g = KernelView::new(table, KernelMode::CachedG, m);
    let xk = *spec.offsets().last().expect("k ≥ 2");
    Ok((0..positions.len()).map(|j| corrector_uk_at(positions, xk, lower, &g, j)).collect())
}

fn check_lower(spec: &ChainSpec, lower: &RenormalizedSeries, m: usize, len: usize) -> Result<()> {
    if spec.k() < 2 {
        return Err(Error::OutOfRange("correctors need k ≥ 2".into()));
    }
    let want = spec.without_last();
    if lower.spec != want || lower.m != m || lower.values.len() < len {
        return Err(Error::MissingCounter { missing: want.offsets().to_vec() });
    }
    Ok(())
}

fn corrector_uk_at(positions: &[Site], xk: Site, lower: &RenormalizedSeries, g: &KernelView, j: usize) -> f64 {
    let xj = positions[j];
    (1..=j)
        .map(|i| {
            let d = lower.increment(i);
            if d == 0.0 {
                0.0
            } else {
                g.at(xj - positions[i] - xk) * d
            }
        })
        .sum()
}

/// (−1)^k Π_{l<k} G(x_l), the i = 0 increment of B̃_{k−1} under B̃₁(−1) = −1.
fn origin_coefficient(spec: &ChainSpec, g: &KernelView) -> f64 {
    let offs = spec.offsets();
    let sign = if spec.k() % 2 == 0 { 1.0 } else { -1.0 };
    sign * offs[..offs.len() - 1].iter().map(|&x| g.at(x)).product::<f64>()
}

/// (−1)^k Π_{l<k} G_m(x_l) · G_m(X_j − x_k) for j = 0..n.
pub fn origin_term(positions: &[Site], spec: &ChainSpec, table: &PotentialKernelTable, m: usize) -> Vec<f64> {
    let g = KernelView::new(table, KernelMode::CachedG, m);
    let c = origin_coefficient(spec, &g);
    let xk = *spec.offsets().last().expect("k ≥ 2");
    positions.iter().map(|&p| c * g.at(p - xk)).collect()
}

/// Ũ, B̃ and M along one path.
#[derive(Debug, Clone, Serialize)]
pub struct MartingaleSeries {
    pub k: usize,
    pub m: usize,
    pub offsets: Vec<Site>,
    pub mode: KernelMode,
    /// Corrector including the origin term.
    pub corrector: Vec<f64>,
    pub renormalized: Vec<f64>,
    pub values: Vec<f64>,
}

/// The whole series, O(n²).
pub fn martingale_series(positions: &[Site], spec: &ChainSpec, table: &PotentialKernelTable, m: usize, mode: KernelMode) -> Result<MartingaleSeries> {
    if spec.k() < 2 {
        return Err(Error::OutOfRange("martingale series need k ≥ 2".into()));
    }
    let g = KernelView::new(table, mode, m);
    let fam = CounterFamily::for_spec(positions, spec)?;
    let top = renormalize_with(&fam, spec, m, |x| g.at(x))?;
    let corrector: Vec<f64> = if spec.k() == 2 {
        let x = spec.offsets()[0];
        (0..positions.len())
            .map(|j| (0..j).map(|i| g.at(positions[j] - positions[i] - x)).sum())
            .collect()
    } else {
        let lower = renormalize_with(&fam, &spec.without_last(), m, |x| g.at(x))?;
        let xk = *spec.offsets().last().expect("k ≥ 3");
        let c = origin_coefficient(spec, &g);
        let shift = c * g.at(-xk);
        (0..positions.len())
            .map(|j| corrector_uk_at(positions, xk, &lower, &g, j) + c * g.at(positions[j] - xk) - shift)
            .collect()
    };
    let values = corrector.iter().zip(&top.values).map(|(u, b)| u + b).collect();
    Ok(MartingaleSeries { k: spec.k(), m, offsets: spec.offsets().to_vec(), mode, corrector, renormalized: top.values, values })
}

/// M at the final time only, O(n · 2^k).
pub fn martingale_endpoint(positions: &[Site], spec: &ChainSpec, table: &PotentialKernelTable, m: usize, mode: KernelMode) -> Result<f64> {
    if spec.k() < 2 {
        return Err(Error::OutOfRange("martingales need k ≥ 2".into()));
    }
    let g = KernelView::new(table, mode, m);
    let n = positions.len() - 1;
    let fam = CounterFamily::for_spec(positions, spec)?;
    let top = renormalize_with(&fam, spec, m, |x| g.at(x))?;
    let xk = *spec.offsets().last().expect("k ≥ 2");
    let u = if spec.k() == 2 {
        (0..n).map(|i| g.at(positions[n] - positions[i] - xk)).sum::<f64>()
    } else {
        let lower = renormalize_with(&fam, &spec.without_last(), m, |x| g.at(x))?;
        let c = origin_coefficient(spec, &g);
        corrector_uk_at(positions, xk, &lower, &g, n) + c * (g.at(positions[n] - xk) - g.at(-xk))
    };
    Ok(u + top.values[n])
}

/// |E[M_n − M_{n−1} | F_{n−1}]| by enumerating the step law's atoms.
///
/// `prefix` holds X₀ … X_{n−1}; each atom ξ extends it to X_n = X_{n−1} + ξ.
pub fn exact_onestep_check(prefix: &[Site], law: &IncrementLaw, spec: &ChainSpec, table: &PotentialKernelTable, m: usize, mode: KernelMode) -> Result<f64> {
    let before = martingale_endpoint(prefix, spec, table, m, mode)?;
    let last = *prefix.last().ok_or_else(|| Error::OutOfRange("empty prefix".into()))?;
    let mut path = prefix.to_vec();
    path.push(last);
    let mut expect = 0.0;
    for (xi, p) in law.weighted_sites() {
        *path.last_mut().expect("nonempty") = last + xi;
        expect += p * martingale_endpoint(&path, spec, table, m, mode)?;
    }
    Ok((expect - before).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walk::simulate;

    fn table() -> &'static PotentialKernelTable {
        crate::kernel::fixture::default_table()
    }

    #[test]
    fn corrector_u2_small_cases() {
        let t = table();
        let path = simulate(&IncrementLaw::default_law(), 5, 1, 1);
        let x = Site::new(1, -1);
        let u = corrector_u2(path.positions(), x, t, 5);
        assert_eq!(u[0], 0.0);
        assert_eq!(u[1], t.scaled_kernel(5, path.positions()[1] - x));
    }

    #[test]
    fn k2_discrepancy_is_origin_minus_last_term() {
        let t = table();
        let path = simulate(&IncrementLaw::default_law(), 40, 3, 0);
        let x = Site::new(2, 1);
        let m = 40;
        let spec = ChainSpec::pair(x);
        let fam = CounterFamily::for_spec(path.positions(), &ChainSpec::single()).unwrap();
        let lower = renormalize_with(&fam, &ChainSpec::single(), m, |_| 0.0).unwrap();
        let u2 = corrector_u2(path.positions(), x, t, m);
        let uk = corrector_uk(path.positions(), &spec, &lower, t, m).unwrap();
        assert_eq!(uk[0], 0.0);
        for j in 1..=40 {
            let want = t.scaled_kernel(m, path.positions()[j] - x) - t.scaled_kernel(m, -x);
            assert!((u2[j] - uk[j] - want).abs() < 1e-11, "j={j}");
        }
    }

    #[test]
    fn series_start_at_zero_and_end_at_endpoint() {
        let t = table();
        let law = IncrementLaw::default_law();
        let path = simulate(&law, 30, 5, 2);
        for spec in [ChainSpec::pair(Site::ORIGIN), ChainSpec::new(3, vec![Site::new(1, 0), Site::ORIGIN]).unwrap()] {
            for mode in [KernelMode::ExactG, KernelMode::CachedG] {
                let s = martingale_series(path.positions(), &spec, t, 30, mode).unwrap();
                assert!(s.values[0].abs() < 1e-12);
                let e = martingale_endpoint(path.positions(), &spec, t, 30, mode).unwrap();
                assert!((s.values[30] - e).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn modes_agree_for_pairs() {
        // the constant Ĝ(√m e₁) cancels between corrector and count
        let t = table();
        let path = simulate(&IncrementLaw::default_law(), 50, 8, 8);
        let spec = ChainSpec::pair(Site::new(0, 1));
        let a = martingale_series(path.positions(), &spec, t, 50, KernelMode::ExactG).unwrap();
        let b = martingale_series(path.positions(), &spec, t, 50, KernelMode::CachedG).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn one_step_residual_is_tiny() {
        let t = table();
        let law = IncrementLaw::default_law();
        let path = simulate(&law, 25, 11, 0);
        for spec in [ChainSpec::pair(Site::new(1, 0)), ChainSpec::new(3, vec![Site::ORIGIN, Site::new(0, 1)]).unwrap()] {
            for n in [1, 2, 10, 25] {
                let r = exact_onestep_check(&path.positions()[..n], &law, &spec, t, 25, KernelMode::CachedG).unwrap();
                assert!(r < 1e-10, "{spec:?} n={n} residual {r}");
            }
        }
    }
}
