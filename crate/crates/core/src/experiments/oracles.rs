//! Deterministic correctness experiments: chain counting, the kernel, the
//! martingale drift and the mollified identity.

use rand::Rng;
use rayon::prelude::*;

use super::mollified::{materialized_mollified_beta2, walk_side_mollified_beta_with};
use super::{replica_index, ExperimentPlan, ExperimentReport, ReplicaTable, RunContext, RunOutput};
use crate::chains::{brute_force_count, count_chains, ChainSpec};
use crate::error::Result;
use crate::kernel::{fit_kappa, harmonic_residual, kernel_time_sum, shell_residual, KAPPA_RING};
use crate::lattice::Site;
use crate::martingale::{exact_onestep_check, KernelMode};
use crate::rng::{derive_stream, purpose, stream_rng};
use crate::walk::{simulate_with, StepSampler};

fn random_offsets<R: Rng>(rng: &mut R, k: usize) -> Vec<Site> {
    (1..k).map(|_| Site::new(rng.random_range(-2..=2), rng.random_range(-2..=2))).collect()
}

/// Recursion against enumeration on every prefix of random short walks.
pub fn counting_oracle(plan: &ExperimentPlan) -> Result<RunOutput> {
    let law = plan.law()?;
    let sampler = StepSampler::new(&law);
    let max_n = *plan.n_grid.last().expect("validated");
    let mut report = ExperimentReport::new(plan, &law, None);
    let results: Vec<(usize, usize, usize)> = (0..plan.replicas)
        .into_par_iter()
        .map(|i| {
            let stream = derive_stream(purpose::WALK, replica_index(0, i));
            let mut rng = stream_rng(plan.seed, stream);
            let n = rng.random_range(0..=max_n);
            let k = rng.random_range(1..=plan.k);
            let spec = ChainSpec::new(k, random_offsets(&mut rng, k))?;
            let path = simulate_with(&sampler, law.name(), n, plan.seed, derive_stream(stream, 1));
            let pos = path.positions();
            let counter = count_chains(pos, &spec)?;
            let bad = (0..=n).filter(|&j| counter.running()[j] != brute_force_count(&pos[..=j], &spec)).count();
            Ok((n, k, bad))
        })
        .collect::<Result<_>>()?;
    let mismatches: usize = results.iter().map(|r| r.2).sum();
    report.flag(1, "recursion equals enumeration at every prefix", mismatches == 0, format!("{mismatches} mismatches over {} instances", results.len()));
    report.value("instances", results.len() as f64);
    report.value("mismatched_prefixes", mismatches as f64);
    let mut rows = ReplicaTable::new(&["instance", "n", "k", "mismatches"]);
    rows.rows = results.iter().enumerate().map(|(i, r)| vec![i as f64, r.0 as f64, r.1 as f64, r.2 as f64]).collect();
    Ok(RunOutput { report, replicas: rows, trend: Vec::new() })
}

/// G(e₁) = 0, spectral against time sums, and P₁G − G = −p(1, 0, ·).
pub fn kernel_oracle(plan: &ExperimentPlan, ctx: &RunContext) -> Result<RunOutput> {
    let law = plan.law()?;
    let table = ctx.kernel(&law, plan.kernel_radius)?;
    let mut report = ExperimentReport::new(plan, &law, Some(&table));
    let e1 = table.g(Site::E1).abs();
    let tol = plan.tolerance("e1");
    report.flag(2, "|G(e1)| <= tolerance", e1 <= tol, format!("{e1:.3e} vs {tol:.0e}"));

    let targets: Vec<Site> = (-10..=10i64).flat_map(|y| (-10..=10i64).map(move |x| Site::new(x, y))).filter(|s| s.norm() <= 10.0).collect();
    let horizon = plan.n_grid[0].div_ceil(4) * 4;
    let sums = kernel_time_sum(&law, &targets, horizon)?;
    let mut rows = ReplicaTable::new(&["x", "y", "spectral", "time_sum"]);
    let mut worst: f64 = 0.0;
    for (s, t) in targets.iter().zip(&sums) {
        let g = table.g(*s);
        worst = worst.max((g - t).abs());
        rows.rows.push(vec![s.x as f64, s.y as f64, g, *t]);
    }
    let tol = plan.tolerance("time_sum");
    report.flag(2, "max |spectral - time sum| over |x| <= 10", worst <= tol, format!("{worst:.3e} vs {tol:.0e}"));
    report.value("time_sum_max_diff", worst);

    let harmonic = (-32..=32i64)
        .flat_map(|y| (-32..=32i64).map(move |x| Site::new(x, y)))
        .filter(|s| s.norm() <= 32.0)
        .map(|z| harmonic_residual(&table, &law, z))
        .fold(0.0, f64::max);
    let tol = plan.tolerance("harmonic");
    report.flag(2, "max harmonic residual over |z| <= 32", harmonic <= tol, format!("{harmonic:.3e} vs {tol:.0e}"));
    report.value("harmonic_max_residual", harmonic);
    report.value("kappa", table.kappa());
    Ok(RunOutput { report, replicas: rows, trend: Vec::new() })
}

/// Decay of G(x) + (1/π) log|x| − κ and agreement of κ across rings.
pub fn kernel_asymptotics(plan: &ExperimentPlan, ctx: &RunContext) -> Result<RunOutput> {
    let law = plan.law()?;
    let table = ctx.kernel(&law, plan.kernel_radius)?;
    let mut report = ExperimentReport::new(plan, &law, Some(&table));
    let kappa = table.kappa();
    let mut rows = ReplicaTable::new(&["shell", "residual"]);
    let mut at = |r: f64| {
        let v = shell_residual(&table, kappa, r).unwrap_or(f64::INFINITY);
        rows.rows.push(vec![r, v]);
        v
    };
    let (r50, r100) = (at(50.0), at(100.0));
    for r in [10.0, 25.0, 75.0, 150.0] {
        at(r);
    }
    let ratio = plan.tolerance("shell_ratio");
    report.flag(3, "shell residual at 100 <= ratio x shell residual at 50", r100 <= ratio * r50, format!("{r100:.3e} vs {ratio} x {r50:.3e}"));
    report.value("shell_residual/50", r50);
    report.value("shell_residual/100", r100);
    let mid = 0.5 * (KAPPA_RING.0 + KAPPA_RING.1);
    let inner = fit_kappa(&table, KAPPA_RING.0, mid)?;
    let outer = fit_kappa(&table, mid, KAPPA_RING.1)?;
    let gap = (inner.kappa - outer.kappa).abs();
    let tol = plan.tolerance("kappa_agreement");
    report.flag(3, "kappa fits from disjoint rings agree", gap <= tol, format!("{:.8} vs {:.8}", inner.kappa, outer.kappa));
    report.value("kappa", kappa);
    report.value("kappa/inner", inner.kappa);
    report.value("kappa/outer", outer.kappa);
    Ok(RunOutput { report, replicas: rows, trend: Vec::new() })
}

/// Exact one-step drift on random prefixes, plus a perturbed-kernel control.
pub fn martingale_exactness(plan: &ExperimentPlan, ctx: &RunContext) -> Result<RunOutput> {
    let law = plan.law()?;
    let table = ctx.kernel(&law, plan.kernel_radius)?;
    let fault = plan.tolerance("fault");
    let mut faulty = table.clone();
    faulty.perturb(Site::ORIGIN, fault);
    let sampler = StepSampler::new(&law);
    let max_n = *plan.n_grid.last().expect("validated");
    let tol = plan.tolerance("residual");
    let mut report = ExperimentReport::new(plan, &law, Some(&table));
    let mut rows = ReplicaTable::new(&["k", "prefix", "length", "residual", "faulty_residual"]);
    for k in 2..=plan.k.max(2) {
        let cap = (max_n / (k - 1)).max(1);
        let res: Vec<(usize, f64, f64)> = (0..plan.replicas)
            .into_par_iter()
            .map(|i| {
                let stream = derive_stream(purpose::WALK, replica_index(k, i));
                let mut rng = stream_rng(plan.seed, stream);
                let len = rng.random_range(1..=cap);
                let spec = ChainSpec::new(k, random_offsets(&mut rng, k))?;
                let path = simulate_with(&sampler, law.name(), len - 1, plan.seed, derive_stream(stream, 1));
                let r = exact_onestep_check(path.positions(), &law, &spec, &table, max_n, KernelMode::CachedG)?;
                let f = exact_onestep_check(path.positions(), &law, &spec, &faulty, max_n, KernelMode::CachedG)?;
                Ok((len, r, f))
            })
            .collect::<Result<_>>()?;
        let worst = res.iter().map(|r| r.1).fold(0.0, f64::max);
        let detected = res.iter().filter(|r| r.2 > tol).count();
        report.flag(4, &format!("max one-step drift for k = {k} over prefixes of length <= {cap}"), worst <= tol, format!("{worst:.3e} vs {tol:.0e}"));
        report.flag(4, &format!("kernel perturbed by {fault} at 0 is detected for k = {k}"), detected > 0, format!("{detected} of {} prefixes", res.len()));
        report.value(&format!("max_residual/k{k}"), worst);
        report.value(&format!("detected_fraction/k{k}"), detected as f64 / res.len() as f64);
        rows.rows.extend(res.iter().enumerate().map(|(i, r)| vec![k as f64, i as f64, r.0 as f64, r.1, r.2]));
    }
    Ok(RunOutput { report, replicas: rows, trend: Vec::new() })
}

/// Per-offset against pair-accumulation mollified sums.
pub fn mollified_identity(plan: &ExperimentPlan, ctx: &RunContext) -> Result<RunOutput> {
    let law = plan.law()?;
    let table = ctx.kernel(&law, plan.kernel_radius)?;
    let sampler = StepSampler::new(&law);
    let n = plan.n_grid[0];
    let tau = plan.tau_grid[0];
    let tol = plan.tolerance("agreement");
    let mut report = ExperimentReport::new(plan, &law, Some(&table));
    let res: Vec<(f64, f64, f64)> = (0..plan.replicas)
        .into_par_iter()
        .map(|i| {
            let path = simulate_with(&sampler, law.name(), n, plan.seed, derive_stream(purpose::WALK, replica_index(0, i)));
            let fast = walk_side_mollified_beta_with(path.positions(), &table, tau, 2, plan.walk_min_resolution)?;
            let slow = materialized_mollified_beta2(path.positions(), &table, tau, plan.walk_min_resolution)?;
            Ok((fast.value, slow, fast.psi_n))
        })
        .collect::<Result<_>>()?;
    let worst = res.iter().map(|r| (r.0 - r.1).abs()).fold(0.0, f64::max);
    report.flag(6, &format!("max |pair route - per-offset route| at n = {n}, tau = {tau}"), worst <= tol, format!("{worst:.3e} vs {tol:.0e}"));
    report.value("max_difference", worst);
    report.value("psi_n", res[0].2);
    let mut rows = ReplicaTable::new(&["replica", "pair_route", "per_offset_route"]);
    rows.rows = res.iter().enumerate().map(|(i, r)| vec![i as f64, r.0, r.1]).collect();
    Ok(RunOutput { report, replicas: rows, trend: Vec::new() })
}
