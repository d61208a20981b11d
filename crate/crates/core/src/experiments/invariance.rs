//! Coupling quality and the walk/Brownian invariance experiment.
//!
//! The invariance estimator extrapolates both mollified functionals to
//! τ = 0 with a least-squares line over the τ-grid, L(·). With m_X the
//! walk-side and m_W the Brownian-side mollified values,
//!   γ̂ = L(m_W) + β̃ − L(m_X),
//! so D_n = |β̃ − γ̂| = |L(m_X) − L(m_W)|: the part of β̃ that the coupling
//! transfers to the Brownian path. The raw gap |β̃ − L(m_W)|, which also
//! carries the τ-extrapolation bias, is reported alongside. The control
//! pairs the same walk with an independent Brownian path.

use serde::{Deserialize, Serialize};

use super::checkpoint::Keyed;
use super::mollified::walk_side_mollified_beta_with;
use super::{replica_index, ExperimentPlan, ExperimentReport, NRow, ReplicaTable, RunContext, RunOutput};
use crate::chains::{beta_from_path, beta2_at_origin, ChainSpec};
use crate::coupling::{brownian_view, couple, mollified_gamma_with, BrownianView, CouplingParams, MIN_RESOLUTION_RATIO};
use crate::error::{Error, Result};
use crate::increment_law::IncrementLaw;
use crate::kernel::PotentialKernelTable;
use crate::lattice::Site;
use crate::rng::{derive_stream, purpose};
use crate::stats::{bootstrap_log_slope, extrapolate_to_zero, median, root_mean_square, Summary, BOOTSTRAP_RESAMPLES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingRecord {
    pub n: usize,
    pub replica: usize,
    pub sup_distance: f64,
    /// Mean of the two coordinate clocks over n.
    pub clock_ratio: f64,
}

impl Keyed for CouplingRecord {
    fn key(&self) -> (usize, usize) {
        (self.n, self.replica)
    }
}

fn keys(plan: &ExperimentPlan) -> Vec<(usize, usize)> {
    plan.n_grid.iter().flat_map(|&n| (0..plan.replicas).map(move |r| (n, r))).collect()
}

fn grid_index(plan: &ExperimentPlan, n: usize) -> usize {
    plan.n_grid.iter().position(|&m| m == n).expect("n in grid")
}

/// Splits records by n, failing when some n has fewer than R.
pub fn group_by_n<T: Keyed>(plan: &ExperimentPlan, records: &[T], value: impl Fn(&T) -> f64) -> Result<Vec<(f64, Vec<f64>)>> {
    plan.n_grid
        .iter()
        .map(|&n| {
            let vals: Vec<f64> = records.iter().filter(|r| r.key().0 == n).map(&value).collect();
            if vals.len() < plan.replicas {
                return Err(Error::NotEnoughReplicas { id: plan.experiment.to_string(), n, found: vals.len(), needed: plan.replicas });
            }
            Ok((n as f64, vals))
        })
        .collect()
}

fn coupling_params(plan: &ExperimentPlan, n: usize, r: usize) -> CouplingParams {
    CouplingParams {
        n,
        delta: plan.delta,
        view_step: plan.view_step,
        seed: plan.seed,
        stream: derive_stream(purpose::COUPLED, replica_index(grid_index(plan, n), r)),
    }
}

pub fn coupling_rate(plan: &ExperimentPlan, ctx: &RunContext) -> Result<RunOutput> {
    let law = plan.law()?;
    let mut store = ctx.store::<CouplingRecord>(plan)?;
    let records = store.run(&keys(plan), |n, r| {
        let c = couple(&law, coupling_params(plan, n, r))?;
        Ok(CouplingRecord { n, replica: r, sup_distance: c.sup_distance, clock_ratio: (c.clock(0) + c.clock(1)) / (2.0 * n as f64) })
    })?;
    summarize_coupling(plan, &law, &records)
}

pub fn summarize_coupling(plan: &ExperimentPlan, law: &IncrementLaw, records: &[CouplingRecord]) -> Result<RunOutput> {
    let mut report = ExperimentReport::new(plan, law, None);
    let sup = group_by_n(plan, records, |r| r.sup_distance)?;
    let clock = group_by_n(plan, records, |r| r.clock_ratio)?;
    for ((n, s), (_, c)) in sup.iter().zip(&clock) {
        let mut row = NRow { n: *n as usize, quantities: Default::default() };
        row.quantities.insert("sup_distance".into(), Summary::of(s));
        row.quantities.insert("clock_ratio".into(), Summary::of(c));
        report.per_n.push(row);
    }
    let max_slope = plan.tolerance("max_slope");
    match bootstrap_log_slope(&sup, median, BOOTSTRAP_RESAMPLES, plan.seed) {
        Some(fit) => {
            report.flag(
                7,
                "median sup-distance slope <= max_slope and 95% CI excludes 0",
                fit.slope <= max_slope && fit.ci_high < 0.0,
                format!("slope {:.4} CI [{:.4}, {:.4}] vs {max_slope}", fit.slope, fit.ci_low, fit.ci_high),
            );
            report.slopes.insert("median_sup_distance".into(), fit);
        }
        None => report.flag(7, "median sup-distance slope", false, "a median is zero".into()),
    }
    let mut table = ReplicaTable::new(&["n", "replica", "sup_distance", "clock_ratio"]);
    table.rows = records.iter().map(|r| vec![r.n as f64, r.replica as f64, r.sup_distance, r.clock_ratio]).collect();
    let trend = sup.iter().map(|(n, v)| (n.ln(), median(v).ln())).collect();
    Ok(RunOutput { report, replicas: table, trend })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceRecord {
    pub n: usize,
    pub replica: usize,
    /// β̃_k(n, 0).
    pub beta: f64,
    /// Walk-side mollified values, one per τ.
    pub walk: Vec<f64>,
    /// Brownian-side values on the coupled path.
    pub brownian: Vec<f64>,
    /// Brownian-side values on an independent path.
    pub control: Vec<f64>,
    pub sup_distance: f64,
    /// |L(m_X) − L(m_W)|.
    pub distance: f64,
    /// |β̃ − L(m_W)|.
    pub raw_distance: f64,
    /// |L(m_X) − L(m_W′)| for the independent path W′.
    pub control_distance: f64,
}

impl Keyed for InvarianceRecord {
    fn key(&self) -> (usize, usize) {
        (self.n, self.replica)
    }
}

/// β̃_k(n, 0) for offsets all zero.
pub fn beta_at_origin(positions: &[Site], k: usize, table: &PotentialKernelTable) -> Result<f64> {
    match k {
        1 => Ok(1.0),
        2 => Ok(beta2_at_origin(positions, table)),
        _ => beta_from_path(positions, &ChainSpec::new(k, vec![Site::ORIGIN; k - 1])?, table),
    }
}

fn brownian_values(view: &BrownianView, taus: &[f64], k: usize) -> Result<Vec<f64>> {
    taus.iter()
        .map(|&tau| {
            let v = view.resolved_for(tau, MIN_RESOLUTION_RATIO)?;
            Ok(mollified_gamma_with(&v, tau, k, MIN_RESOLUTION_RATIO)?.value)
        })
        .collect()
}

/// One coupled replica of the invariance experiment.
pub fn invariance_replica(plan: &ExperimentPlan, law: &IncrementLaw, table: &PotentialKernelTable, n: usize, r: usize) -> Result<InvarianceRecord> {
    let params = coupling_params(plan, n, r);
    let c = couple(law, params)?;
    let pos = c.walk.positions();
    let beta = beta_at_origin(pos, plan.k, table)?;
    let taus = &plan.taus_at(n);
    let walk = taus
        .iter()
        .map(|&tau| Ok(walk_side_mollified_beta_with(pos, table, tau, plan.k, plan.walk_min_resolution)?.value))
        .collect::<Result<Vec<f64>>>()?;
    let brownian = brownian_values(&c.view, taus, plan.k)?;
    let independent = brownian_view(plan.seed, derive_stream(purpose::CONTROL, replica_index(grid_index(plan, n), r)), plan.view_step)?;
    let control = brownian_values(&independent, taus, plan.k)?;
    let lx = extrapolate_to_zero(taus, &walk);
    let lw = extrapolate_to_zero(taus, &brownian);
    let lc = extrapolate_to_zero(taus, &control);
    Ok(InvarianceRecord {
        n,
        replica: r,
        beta,
        walk,
        brownian,
        control,
        sup_distance: c.sup_distance,
        distance: (lx - lw).abs(),
        raw_distance: (beta - lw).abs(),
        control_distance: (lx - lc).abs(),
    })
}

pub fn invariance_experiment(plan: &ExperimentPlan, ctx: &RunContext) -> Result<RunOutput> {
    let law = plan.law()?;
    let table = ctx.kernel(&law, plan.kernel_radius)?;
    let mut store = ctx.store::<InvarianceRecord>(plan)?;
    let records = store.run(&keys(plan), |n, r| invariance_replica(plan, &law, &table, n, r))?;
    summarize_invariance(plan, &law, &table, &records)
}

/// Aggregates replica records into the report, fits and flags.
pub fn summarize_invariance(plan: &ExperimentPlan, law: &IncrementLaw, table: &PotentialKernelTable, records: &[InvarianceRecord]) -> Result<RunOutput> {
    let mut report = ExperimentReport::new(plan, law, Some(table));
    let d = group_by_n(plan, records, |r| r.distance)?;
    let raw = group_by_n(plan, records, |r| r.raw_distance)?;
    let ctrl = group_by_n(plan, records, |r| r.control_distance)?;
    let beta = group_by_n(plan, records, |r| r.beta)?;
    let sup = group_by_n(plan, records, |r| r.sup_distance)?;
    for i in 0..plan.n_grid.len() {
        let mut row = NRow { n: plan.n_grid[i], quantities: Default::default() };
        row.quantities.insert("distance".into(), Summary::of(&d[i].1));
        row.quantities.insert("raw_distance".into(), Summary::of(&raw[i].1));
        row.quantities.insert("control_distance".into(), Summary::of(&ctrl[i].1));
        row.quantities.insert("beta".into(), Summary::of(&beta[i].1));
        row.quantities.insert("sup_distance".into(), Summary::of(&sup[i].1));
        report.value(&format!("l2_distance/{}", plan.n_grid[i]), root_mean_square(&d[i].1));
        report.per_n.push(row);
    }
    let fits = [
        ("median_distance", bootstrap_log_slope(&d, median, BOOTSTRAP_RESAMPLES, plan.seed)),
        ("l2_distance", bootstrap_log_slope(&d, root_mean_square, BOOTSTRAP_RESAMPLES, plan.seed)),
        ("median_raw_distance", bootstrap_log_slope(&raw, median, BOOTSTRAP_RESAMPLES, plan.seed)),
        ("median_control_distance", bootstrap_log_slope(&ctrl, median, BOOTSTRAP_RESAMPLES, plan.seed)),
    ];
    if plan.tau_schedule_zeta.is_none() {
        // closeness of the two mollified functionals at each fixed width
        for (i, tau) in plan.tau_grid.iter().enumerate() {
            let gap = group_by_n(plan, records, |r| (r.walk[i] - r.brownian[i]).abs())?;
            if let Some(f) = bootstrap_log_slope(&gap, median, BOOTSTRAP_RESAMPLES, plan.seed) {
                report.slopes.insert(format!("median_gap/tau_{tau}"), f);
            }
        }
    }
    let decays = |f: &Option<crate::stats::SlopeFit>| f.as_ref().map(|f| f.slope < 0.0 && f.ci_high < 0.0).unwrap_or(false);
    let show = |f: &Option<crate::stats::SlopeFit>| match f {
        Some(f) => format!("slope {:.4} CI [{:.4}, {:.4}]", f.slope, f.ci_low, f.ci_high),
        None => "no fit (a statistic is zero)".into(),
    };
    report.flag(8, "median distance slope < 0 with 95% CI excluding 0", decays(&fits[0].1), show(&fits[0].1));
    let control_flat = fits[3].1.as_ref().map(|f| f.ci_high >= 0.0).unwrap_or(false);
    report.flag(8, "independent pairing shows no decay (CI upper bound >= 0)", control_flat, show(&fits[3].1));
    report.flag(9, "L2 distance slope < 0 with 95% CI excluding 0", decays(&fits[1].1), show(&fits[1].1));
    if let (Some(c), Some(x)) = (&fits[0].1, &fits[3].1) {
        report.value("control_minus_coupled_slope", x.slope - c.slope);
    }
    for (name, fit) in fits {
        if let Some(f) = fit {
            report.slopes.insert(name.into(), f);
        }
    }
    let mut header = vec!["n".to_string(), "replica".into(), "beta".into()];
    let widths = plan.taus_at(plan.n_grid[0]).len();
    for i in 0..widths {
        let t = match plan.tau_schedule_zeta {
            Some(_) => "n".to_string(),
            None => plan.tau_grid[i].to_string(),
        };
        header.push(format!("walk_tau_{t}"));
        header.push(format!("brownian_tau_{t}"));
        header.push(format!("control_tau_{t}"));
    }
    header.extend(["sup_distance", "distance", "raw_distance", "control_distance"].map(String::from));
    let rows = records
        .iter()
        .map(|r| {
            let mut row = vec![r.n as f64, r.replica as f64, r.beta];
            for i in 0..widths {
                row.extend([r.walk[i], r.brownian[i], r.control[i]]);
            }
            row.extend([r.sup_distance, r.distance, r.raw_distance, r.control_distance]);
            row
        })
        .collect();
    let trend = d.iter().map(|(n, v)| (n.ln(), median(v).max(f64::MIN_POSITIVE).ln())).collect();
    Ok(RunOutput { report, replicas: ReplicaTable { header, rows }, trend })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::ExperimentKind;
    use crate::kernel::fixture::default_table;

    fn small(kind: ExperimentKind) -> ExperimentPlan {
        ExperimentPlan {
            tau_grid: vec![0.5, 0.25],
            view_step: 1.0 / 4096.0,
            walk_min_resolution: 1.0,
            seed: 5,
            ..ExperimentPlan::new(kind, vec![64, 256], 30)
        }
    }

    #[test]
    fn order_one_distances_vanish() {
        let plan = ExperimentPlan { k: 1, ..small(ExperimentKind::Invariance) };
        let law = IncrementLaw::default_law();
        let rec = invariance_replica(&plan, &law, default_table(), 64, 3).unwrap();
        assert_eq!(rec.beta, 1.0);
        assert_eq!(rec.distance, 0.0);
        assert_eq!(rec.raw_distance, 0.0);
        assert_eq!(rec.control_distance, 0.0);
    }

    #[test]
    fn scheduled_width_replaces_the_grid() {
        let plan = ExperimentPlan { tau_grid: Vec::new(), tau_schedule_zeta: Some(1.0), ..small(ExperimentKind::Invariance) };
        plan.validate().unwrap();
        assert_eq!(plan.taus_at(256), vec![0.25]);
        let rec = invariance_replica(&plan, &IncrementLaw::default_law(), default_table(), 256, 0).unwrap();
        assert_eq!(rec.walk.len(), 1);
        let bad = ExperimentPlan { tau_schedule_zeta: Some(3.0), ..plan };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn replicas_are_reproducible_and_distinct() {
        let plan = small(ExperimentKind::Invariance);
        let law = IncrementLaw::default_law();
        let a = invariance_replica(&plan, &law, default_table(), 64, 1).unwrap();
        let b = invariance_replica(&plan, &law, default_table(), 64, 1).unwrap();
        let c = invariance_replica(&plan, &law, default_table(), 64, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.beta, c.beta);
        assert_ne!(a.brownian, a.control);
    }

    #[test]
    fn missing_replicas_are_an_error() {
        let plan = small(ExperimentKind::CouplingRate);
        let law = IncrementLaw::default_law();
        let recs: Vec<CouplingRecord> = (0..29).map(|r| CouplingRecord { n: 64, replica: r, sup_distance: 1.0, clock_ratio: 1.0 }).collect();
        let err = summarize_coupling(&plan, &law, &recs).unwrap_err();
        assert!(matches!(err, Error::NotEnoughReplicas { n: 64, found: 29, .. }), "{err}");
    }

    #[test]
    fn coupling_report_is_byte_reproducible() {
        let plan = small(ExperimentKind::CouplingRate);
        let ctx = RunContext::default();
        let a = coupling_rate(&plan, &ctx).unwrap();
        let b = coupling_rate(&plan, &ctx).unwrap();
        assert_eq!(a.report.to_json(), b.report.to_json());
        assert_eq!(a.report.report_hash(), b.report.report_hash());
        assert_eq!(a.replicas.rows.len(), 60);
        assert_eq!(a.report.criteria[0].criterion, 7);
    }
}
