//! Walk-side mollified renormalized intersection functional.
//!
//! For a path X₀ … X_n and w(y) = f_τ(y/√n),
//!   Σ_x Π f_τ(x_i) β̃_k(n, x) / n^{k−1} = Σ_{j<k} C(k−1, j) (−g_n)^j J_{k−j}
//! with g_n = Σ_y w(y) G_n(y)/n and J_m = n^{−m} Σ_{i₁<…<i_m} Π w(X_{i_l} − X_{i_{l−1}}),
//! J₁ = 1. Chains run over all n + 1 times, matching the counts B_k(n, ·).

use serde::{Deserialize, Serialize};

use crate::chains::{count_chains, renormalize, ChainSpec, CounterFamily};
use crate::coupling::binomial_components;
use crate::error::{Error, Result};
use crate::kernel::PotentialKernelTable;
use crate::lattice::Site;
use crate::mollifier::Mollifier;
use crate::spatial::{lattice_chain_sums, lattice_pair_sum, LatticeStencil};

/// Smallest τ√n accepted by default.
pub const WALK_MIN_RESOLUTION: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkMollified {
    pub k: usize,
    pub n: usize,
    pub tau: f64,
    pub value: f64,
    /// J₁ … J_k.
    pub sums: Vec<f64>,
    pub g_n: f64,
    /// Σ_y w(y)/n, a Riemann sum for ∫ f_τ = 1.
    pub psi_n: f64,
}

/// The stencil y ↦ f_τ(y/√n) and the check that τ√n reaches `min_resolution`.
pub fn walk_stencil(tau: f64, n: usize, min_resolution: f64) -> Result<LatticeStencil> {
    let moll = Mollifier::new(tau)?;
    let resolution = tau * (n as f64).sqrt();
    if n == 0 || resolution < min_resolution {
        return Err(Error::MollifierUnresolved { tau, n, resolution, required: min_resolution });
    }
    let inv = 1.0 / n as f64;
    Ok(LatticeStencil::new(resolution.ceil() as i64, |y| moll.eval_norm_sq(y.norm_sq() as f64 * inv)))
}

/// g_n(f_τ) = Σ_y w(y) G_n(y) / n.
pub fn kernel_weight(stencil: &LatticeStencil, table: &PotentialKernelTable, n: usize) -> f64 {
    let r = stencil.radius();
    let mut s = 0.0;
    for y in -r..=r {
        for x in -r..=r {
            let site = Site::new(x, y);
            let w = stencil.weight(site);
            if w != 0.0 {
                s += w * table.scaled_kernel(n, site);
            }
        }
    }
    s / n as f64
}

pub fn walk_side_mollified_beta(positions: &[Site], table: &PotentialKernelTable, tau: f64, k: usize) -> Result<WalkMollified> {
    walk_side_mollified_beta_with(positions, table, tau, k, WALK_MIN_RESOLUTION)
}

/// The pair/chain accumulation route; no per-offset counts are formed.
pub fn walk_side_mollified_beta_with(positions: &[Site], table: &PotentialKernelTable, tau: f64, k: usize, min_resolution: f64) -> Result<WalkMollified> {
    if k == 0 {
        return Err(Error::OutOfRange("k must be at least 1".into()));
    }
    let n = positions.len().saturating_sub(1);
    let stencil = walk_stencil(tau, n, min_resolution)?;
    let nf = n as f64;
    let mut sums = vec![1.0];
    if k == 2 {
        sums.push(lattice_pair_sum(positions, &stencil)? / (nf * nf));
    } else if k > 2 {
        let raw = lattice_chain_sums(positions, &stencil, k)?;
        sums.extend((2..=k).map(|m| raw[m - 1] / nf.powi(m as i32)));
    }
    let g_n = kernel_weight(&stencil, table, n);
    let value = binomial_components(&sums, g_n, k).iter().sum();
    Ok(WalkMollified { k, n, tau, value, sums, g_n, psi_n: stencil.total() / nf })
}

/// Σ_y w(y) β̃₂(n, y/√n) / n with one renormalized count per offset in the
/// mollifier's support. The slow dual of [`walk_side_mollified_beta`].
pub fn materialized_mollified_beta2(positions: &[Site], table: &PotentialKernelTable, tau: f64, min_resolution: f64) -> Result<f64> {
    let n = positions.len().saturating_sub(1);
    let stencil = walk_stencil(tau, n, min_resolution)?;
    let r = stencil.radius();
    let single = count_chains(positions, &ChainSpec::single())?;
    let mut total = 0.0;
    for y in -r..=r {
        for x in -r..=r {
            let site = Site::new(x, y);
            let w = stencil.weight(site);
            if w == 0.0 {
                continue;
            }
            let spec = ChainSpec::pair(site);
            let mut fam = CounterFamily::new();
            fam.insert(single.clone());
            fam.add_spec(positions, &spec)?;
            let series = renormalize(&fam, &spec, table, n)?;
            total += w * series.values[n] / n as f64;
        }
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::increment_law::IncrementLaw;
    use crate::kernel::fixture::default_table;
    use crate::walk::simulate;

    #[test]
    fn dual_routes_agree() {
        let table = default_table();
        let path = simulate(&IncrementLaw::default_law(), 900, 4, 4);
        let fast = walk_side_mollified_beta(path.positions(), table, 0.2, 2).unwrap();
        let slow = materialized_mollified_beta2(path.positions(), table, 0.2, WALK_MIN_RESOLUTION).unwrap();
        assert!((fast.value - slow).abs() < 1e-10 * slow.abs().max(1.0), "{} vs {slow}", fast.value);
    }

    #[test]
    fn straight_line_has_no_pairs() {
        let table = default_table();
        let line: Vec<Site> = (0..=1024).map(|i| Site::new(i, 0)).collect();
        // at n = 1024, τ = 0.125 the support is 2 ≤ |y| ≤ 4 and the line has such lags
        let near = walk_side_mollified_beta(&line, table, 0.125, 2).unwrap();
        assert!(near.sums[1] > 0.0);
        let sparse: Vec<Site> = (0..=1024).map(|i| Site::new(10 * i, 0)).collect();
        let far = walk_side_mollified_beta(&sparse, table, 0.125, 2).unwrap();
        assert_eq!(far.sums[1], 0.0);
        assert!((far.value + far.g_n).abs() < 1e-15);
    }

    #[test]
    fn riemann_mass_tends_to_one() {
        let table = default_table();
        let errs: Vec<f64> = [400usize, 1600, 25600]
            .iter()
            .map(|&n| (walk_side_mollified_beta(&vec![Site::ORIGIN; n + 1], table, 0.25, 1).unwrap().psi_n - 1.0).abs())
            .collect();
        assert!(errs[2] < errs[0] && errs[2] < 1e-6, "{errs:?}");
    }

    #[test]
    fn unresolved_width_is_refused() {
        let table = default_table();
        let path = simulate(&IncrementLaw::default_law(), 100, 1, 1);
        let err = walk_side_mollified_beta(path.positions(), table, 0.1, 2).unwrap_err();
        assert!(matches!(err, Error::MollifierUnresolved { .. }), "{err}");
        assert!(walk_side_mollified_beta_with(path.positions(), table, 0.1, 2, 0.5).is_ok());
    }

    #[test]
    fn order_one_is_identically_one() {
        let table = default_table();
        let path = simulate(&IncrementLaw::default_law(), 256, 1, 1);
        assert_eq!(walk_side_mollified_beta(path.positions(), table, 0.3, 1).unwrap().value, 1.0);
    }

    #[test]
    fn triple_expansion_uses_binomial_weights() {
        let table = default_table();
        let path = simulate(&IncrementLaw::default_law(), 400, 2, 3);
        let w = walk_side_mollified_beta(path.positions(), table, 0.3, 3).unwrap();
        let g = w.g_n;
        let want = w.sums[2] - 2.0 * g * w.sums[1] + g * g;
        assert!((w.value - want).abs() < 1e-12 * want.abs().max(1.0));
    }
}
