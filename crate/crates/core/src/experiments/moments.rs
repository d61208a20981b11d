//! Monte Carlo moment experiments on plain walks: centering of the
//! martingale, growth of p = 2 moments over an n-doubling, and the Hölder
//! moment of β̃₂ in its offset.

use rayon::prelude::*;

use super::{replica_index, ExperimentPlan, ExperimentReport, NRow, ReplicaTable, RunContext, RunOutput};
use crate::chains::{count_chains, ChainSpec};
use crate::error::{Error, Result};
use crate::kernel::{transition_probabilities, PotentialKernelTable};
use crate::lattice::Site;
use crate::martingale::{martingale_endpoint, KernelMode, KernelView};
use crate::rng::{derive_stream, purpose};
use crate::stats::{bootstrap_log_slope, mean, ols, Summary, BOOTSTRAP_RESAMPLES};
use crate::walk::{simulate_with, StepSampler, WalkPath};

/// Largest n at which the exact β̃₂ expectation is formed.
pub const EXACT_EXPECTATION_MAX_N: usize = 512;

fn walks<T: Send>(plan: &ExperimentPlan, a: usize, n: usize, f: impl Fn(&WalkPath) -> Result<T> + Sync) -> Result<Vec<T>> {
    let law = plan.law()?;
    let sampler = StepSampler::new(&law);
    (0..plan.replicas)
        .into_par_iter()
        .map(|r| {
            let path = simulate_with(&sampler, law.name(), n, plan.seed, derive_stream(purpose::WALK, replica_index(a, r)));
            f(&path)
        })
        .collect()
}

/// β̃₂(n, y/√n) = B₂(n, y)/n − G_n(y).
fn beta2(positions: &[Site], y: Site, table: &PotentialKernelTable) -> Result<f64> {
    let n = positions.len() - 1;
    let c = count_chains(positions, &ChainSpec::pair(y))?;
    Ok(c.total() as f64 / n as f64 - table.scaled_kernel(n, y))
}

/// Mean of M_n and of β̃₂(n, 0) against their exact values.
pub fn centering(plan: &ExperimentPlan, ctx: &RunContext) -> Result<RunOutput> {
    let law = plan.law()?;
    let table = ctx.kernel(&law, plan.kernel_radius)?;
    let mut report = ExperimentReport::new(plan, &law, Some(&table));
    let z_max = plan.tolerance("z_max");
    let exact_n = plan.n_grid.iter().copied().filter(|&n| n <= EXACT_EXPECTATION_MAX_N).max();
    let grid = match exact_n {
        Some(h) => Some(transition_probabilities(&law, h, 0)?),
        None => None,
    };
    let spec = ChainSpec::pair(Site::ORIGIN);
    let mut rows = ReplicaTable::new(&["n", "replica", "martingale", "beta"]);
    for (a, &n) in plan.n_grid.iter().enumerate() {
        let vals = walks(plan, a, n, |p| {
            let m = martingale_endpoint(p.positions(), &spec, &table, n, KernelMode::CachedG)?;
            Ok((m, beta2(p.positions(), Site::ORIGIN, &table)?))
        })?;
        let m: Vec<f64> = vals.iter().map(|v| v.0).collect();
        let b: Vec<f64> = vals.iter().map(|v| v.1).collect();
        let (sm, sb) = (Summary::of(&m), Summary::of(&b));
        let z = sm.mean / sm.std_error;
        report.flag(5, &format!("mean M_n within {z_max} SE of 0 at n = {n}"), z.abs() <= z_max, format!("mean {:.5e} SE {:.3e} z {z:.3}", sm.mean, sm.std_error));
        report.value(&format!("martingale_z/{n}"), z);
        if let Some(g) = grid.as_ref().filter(|_| n <= EXACT_EXPECTATION_MAX_N) {
            let exact = g.expected_pair_count(n, Site::ORIGIN).expect("n within horizon") / n as f64 - table.scaled_kernel(n, Site::ORIGIN);
            let zb = (sb.mean - exact) / sb.std_error;
            report.flag(
                5,
                &format!("mean beta_2(n,0) within {z_max} SE of the exact value at n = {n}"),
                zb.abs() <= z_max,
                format!("mean {:.6} exact {exact:.6} SE {:.3e} z {zb:.3}", sb.mean, sb.std_error),
            );
            report.value(&format!("beta_exact/{n}"), exact);
            report.value(&format!("beta_z/{n}"), zb);
        }
        let mut row = NRow { n, quantities: Default::default() };
        row.quantities.insert("martingale".into(), sm);
        row.quantities.insert("beta".into(), sb);
        report.per_n.push(row);
        rows.rows.extend(vals.iter().enumerate().map(|(r, v)| vec![n as f64, r as f64, v.0, v.1]));
    }
    Ok(RunOutput { report, replicas: rows, trend: Vec::new() })
}

/// p = 2 moment statistics at x = 0 and x′ for one path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentSample {
    /// |B₂(n,x)| + |B₂(n,x′)|.
    pub w2: f64,
    /// max_i |ΔB₂(i,x)| + |ΔB₂(i,x′)|.
    pub y2: f64,
    /// sup_j |Ũ₂(j,x) − Ũ₂(j,x′)|.
    pub z2: f64,
    /// |B₃(n,(x,x))| + |B₃(n,(x′,x′))|.
    pub w3: f64,
}

pub fn moment_sample(positions: &[Site], x: Site, xp: Site, table: &PotentialKernelTable) -> Result<MomentSample> {
    let n = positions.len() - 1;
    let a = count_chains(positions, &ChainSpec::pair(x))?;
    let b = count_chains(positions, &ChainSpec::pair(xp))?;
    let y2 = (1..=n).map(|i| a.increment(i) + b.increment(i)).max().unwrap_or(0) as f64;
    let g = KernelView::new(table, KernelMode::CachedG, n);
    let mut z2: f64 = 0.0;
    for j in 1..=n {
        let d: f64 = (0..j)
            .map(|i| {
                let v = positions[j] - positions[i];
                g.at(v - x) - g.at(v - xp)
            })
            .sum();
        z2 = z2.max(d.abs());
    }
    let t = count_chains(positions, &ChainSpec::new(3, vec![x, x])?)?;
    let tp = count_chains(positions, &ChainSpec::new(3, vec![xp, xp])?)?;
    Ok(MomentSample { w2: (a.total() + b.total()) as f64, y2, z2, w3: (t.total() + tp.total()) as f64 })
}

/// Envelope of E S(n)² for each statistic, constants dropped.
pub fn moment_envelope(stat: &str, n: f64, separation: f64) -> f64 {
    let l = n.ln();
    match stat {
        "w2" => l * l * n * n,
        "y2" => n * l * l,
        "z2" => n * n * (separation / n.sqrt()).powf(4.0 / 3.0),
        "w3" => l.powi(4) * n * n,
        _ => panic!("unknown statistic {stat}"),
    }
}

pub fn moment_trends(plan: &ExperimentPlan, ctx: &RunContext) -> Result<RunOutput> {
    let law = plan.law()?;
    let table = ctx.kernel(&law, plan.kernel_radius)?;
    let mut report = ExperimentReport::new(plan, &law, Some(&table));
    let xp = plan.pair_offset();
    let sep = xp.norm();
    let factor = plan.tolerance("envelope_factor");
    let mut rows = ReplicaTable::new(&["n", "replica", "w2", "y2", "z2", "w3"]);
    let mut second: Vec<[f64; 4]> = Vec::new();
    for (a, &n) in plan.n_grid.iter().enumerate() {
        let s = walks(plan, a, n, |p| moment_sample(p.positions(), Site::ORIGIN, xp, &table))?;
        let cols: [Vec<f64>; 4] = [
            s.iter().map(|v| v.w2).collect(),
            s.iter().map(|v| v.y2).collect(),
            s.iter().map(|v| v.z2).collect(),
            s.iter().map(|v| v.w3).collect(),
        ];
        let mut row = NRow { n, quantities: Default::default() };
        let mut m2 = [0.0; 4];
        for (i, name) in ["w2", "y2", "z2", "w3"].iter().enumerate() {
            row.quantities.insert((*name).into(), Summary::of(&cols[i]));
            m2[i] = cols[i].iter().map(|v| v * v).sum::<f64>() / cols[i].len() as f64;
            report.value(&format!("second_moment/{name}/{n}"), m2[i]);
        }
        second.push(m2);
        report.per_n.push(row);
        rows.rows.extend(s.iter().enumerate().map(|(r, v)| vec![n as f64, r as f64, v.w2, v.y2, v.z2, v.w3]));
    }
    for w in 0..plan.n_grid.len() - 1 {
        let (n0, n1) = (plan.n_grid[w] as f64, plan.n_grid[w + 1] as f64);
        for (i, name) in ["w2", "y2", "z2", "w3"].iter().enumerate() {
            let measured = second[w + 1][i] / second[w][i];
            let envelope = moment_envelope(name, n1, sep) / moment_envelope(name, n0, sep);
            report.flag(
                10,
                &format!("E {name}^2 grows by at most {factor} x the envelope ratio from n = {n0} to {n1}"),
                measured <= factor * envelope,
                format!("ratio {measured:.4} envelope {envelope:.4}"),
            );
            report.value(&format!("ratio/{name}/{n0}-{n1}"), measured);
        }
    }
    Ok(RunOutput { report, replicas: rows, trend: Vec::new() })
}

/// Lattice separations used at n, scaled so that d/√n matches the ladder at the first n.
pub fn scaled_ladder(plan: &ExperimentPlan, n: usize) -> Vec<i64> {
    let s = (n as f64 / plan.n_grid[0] as f64).sqrt();
    plan.ladder.iter().map(|&d| (d as f64 * s).round() as i64).collect()
}

pub fn holder_moment_experiment(plan: &ExperimentPlan, ctx: &RunContext) -> Result<RunOutput> {
    if plan.k != 2 {
        return Err(Error::Config { key: "k".into(), reason: "the Hoelder moment experiment is defined for k = 2".into() });
    }
    let law = plan.law()?;
    let table = ctx.kernel(&law, plan.kernel_radius)?;
    let mut report = ExperimentReport::new(plan, &law, Some(&table));
    let mut header = vec!["n", "replica", "self"];
    let names: Vec<String> = plan.ladder.iter().map(|d| format!("d{d}")).collect();
    header.extend(names.iter().map(|s| s.as_str()));
    let mut rows = ReplicaTable::new(&header);
    let mut constants = Vec::new();
    for (a, &n) in plan.n_grid.iter().enumerate() {
        let ladder = scaled_ladder(plan, n);
        if let Some(&d) = ladder.iter().find(|&&d| (d as f64) > (n as f64).sqrt()) {
            return Err(Error::Config { key: "ladder".into(), reason: format!("separation {d} exceeds sqrt(n) at n = {n}") });
        }
        let diffs = walks(plan, a, n, |p| {
            let pos = p.positions();
            let b0 = beta2(pos, Site::ORIGIN, &table)?;
            let self_diff = b0 - beta2(pos, Site::ORIGIN, &table)?;
            let mut v = vec![self_diff * self_diff];
            for &d in &ladder {
                let diff = b0 - beta2(pos, Site::new(d, 0), &table)?;
                v.push(diff * diff);
            }
            Ok(v)
        })?;
        rows.rows.extend(diffs.iter().enumerate().map(|(r, v)| {
            let mut row = vec![n as f64, r as f64];
            row.extend(v);
            row
        }));
        report.value(&format!("self_moment/{n}"), mean(&diffs.iter().map(|v| v[0]).collect::<Vec<_>>()));
        let groups: Vec<(f64, Vec<f64>)> = ladder
            .iter()
            .enumerate()
            .map(|(i, &d)| (d as f64 / (n as f64).sqrt(), diffs.iter().map(|v| v[i + 1]).collect()))
            .collect();
        let mut row = NRow { n, quantities: Default::default() };
        let mut c: f64 = 0.0;
        let l = (n as f64).ln();
        for ((sx, g), d) in groups.iter().zip(&ladder) {
            let m = mean(g);
            row.quantities.insert(format!("sq_diff/d{d}"), Summary::of(g));
            c = c.max(m / (l * l * n as f64 * sx.powf(2.0 / 3.0)));
        }
        report.value(&format!("envelope_constant/{n}"), c);
        constants.push(c);
        report.per_n.push(row);
        if a == 0 {
            let min_exp = plan.tolerance("min_exponent");
            let lx: Vec<f64> = groups.iter().map(|g| g.0.ln()).collect();
            let ly: Vec<f64> = groups.iter().map(|g| mean(&g.1).ln()).collect();
            let (slope, _) = ols(&lx, &ly);
            report.flag(11, &format!("p = 2 Hoelder exponent at n = {n} >= {min_exp}"), slope >= min_exp, format!("exponent {slope:.4}"));
            report.value("holder_exponent", slope);
            if let Some(fit) = bootstrap_log_slope(&groups, mean, BOOTSTRAP_RESAMPLES, plan.seed) {
                report.slopes.insert("holder_exponent".into(), fit);
            }
        }
    }
    let factor = plan.tolerance("constant_factor");
    for w in constants.windows(2).enumerate() {
        let (i, c) = w;
        report.flag(
            11,
            &format!("envelope constant at n = {} <= {factor} x the constant at n = {}", plan.n_grid[i + 1], plan.n_grid[i]),
            c[1] <= factor * c[0],
            format!("{:.4e} vs {:.4e}", c[1], c[0]),
        );
    }
    Ok(RunOutput { report, replicas: rows, trend: Vec::new() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::ExperimentKind;
    use crate::kernel::fixture::default_table;
    use crate::walk::simulate;
    use crate::increment_law::IncrementLaw;

    #[test]
    fn moment_sample_at_equal_offsets() {
        let path = simulate(&IncrementLaw::default_law(), 200, 3, 3);
        let s = moment_sample(path.positions(), Site::ORIGIN, Site::ORIGIN, default_table()).unwrap();
        assert_eq!(s.z2, 0.0);
        let b = count_chains(path.positions(), &ChainSpec::pair(Site::ORIGIN)).unwrap();
        assert_eq!(s.w2, 2.0 * b.total() as f64);
    }

    #[test]
    fn envelopes_double_as_expected() {
        assert!((moment_envelope("z2", 2048.0, 1.0) / moment_envelope("z2", 1024.0, 1.0) - 2f64.powf(4.0 / 3.0)).abs() < 1e-12);
        let r = moment_envelope("y2", 2048.0, 1.0) / moment_envelope("y2", 1024.0, 1.0);
        assert!((r - 2.0 * (2048f64.ln() / 1024f64.ln()).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn ladder_scales_with_root_n() {
        let plan = ExperimentPlan::acceptance(ExperimentKind::Holder);
        assert_eq!(scaled_ladder(&plan, 1 << 14), vec![2, 4, 8, 16, 32, 64]);
    }

    #[test]
    fn holder_self_moment_is_zero() {
        let plan = ExperimentPlan {
            ladder: vec![1, 2, 4],
            kernel_radius: 16,
            ..ExperimentPlan::new(ExperimentKind::Holder, vec![64, 256], 30)
        };
        let out = holder_moment_experiment(&plan, &RunContext::default()).unwrap();
        assert_eq!(out.report.values["self_moment/64"], 0.0);
        assert!(out.report.values["holder_exponent"].is_finite());
        assert_eq!(out.replicas.rows.len(), 60);
    }
}
