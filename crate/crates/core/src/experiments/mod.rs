//! Experiment plans, reports and the runners behind each acceptance rule.
//!
//! A plan is a JSON document naming one experiment. Running it yields an
//! [`ExperimentReport`] whose bytes depend only on the plan and the code:
//! replicas draw from counter-based streams keyed by (n index, replica),
//! results are reduced in replica order and the report holds no timings.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coupling::MAX_DELTA;
use crate::error::{Error, Result};
use crate::increment_law::IncrementLaw;
use crate::kernel::PotentialKernelTable;
use crate::lattice::Site;
use crate::stats::{SlopeFit, Summary};

mod checkpoint;
pub mod invariance;
pub mod moments;
pub mod mollified;
pub mod oracles;

pub use checkpoint::{Keyed, ReplicaStore};
pub use mollified::{materialized_mollified_beta2, walk_side_mollified_beta, walk_side_mollified_beta_with, WalkMollified, WALK_MIN_RESOLUTION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    CountingOracle,
    KernelOracle,
    KernelAsymptotics,
    MartingaleExactness,
    Centering,
    MollifiedIdentity,
    CouplingRate,
    Invariance,
    MomentTrends,
    Holder,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 10] = [
        ExperimentKind::CountingOracle,
        ExperimentKind::KernelOracle,
        ExperimentKind::KernelAsymptotics,
        ExperimentKind::MartingaleExactness,
        ExperimentKind::Centering,
        ExperimentKind::MollifiedIdentity,
        ExperimentKind::CouplingRate,
        ExperimentKind::Invariance,
        ExperimentKind::MomentTrends,
        ExperimentKind::Holder,
    ];

    pub fn id(self) -> &'static str {
        match self {
            ExperimentKind::CountingOracle => "counting-oracle",
            ExperimentKind::KernelOracle => "kernel-oracle",
            ExperimentKind::KernelAsymptotics => "kernel-asymptotics",
            ExperimentKind::MartingaleExactness => "martingale-exactness",
            ExperimentKind::Centering => "centering",
            ExperimentKind::MollifiedIdentity => "mollified-identity",
            ExperimentKind::CouplingRate => "coupling-rate",
            ExperimentKind::Invariance => "invariance",
            ExperimentKind::MomentTrends => "moment-trends",
            ExperimentKind::Holder => "holder",
        }
    }

    /// Experiments reporting confidence intervals or standard errors.
    pub fn bears_intervals(self) -> bool {
        matches!(
            self,
            ExperimentKind::Centering | ExperimentKind::CouplingRate | ExperimentKind::Invariance | ExperimentKind::MomentTrends | ExperimentKind::Holder
        )
    }

    /// Named tolerances and their defaults.
    pub fn tolerances(self) -> &'static [(&'static str, f64)] {
        match self {
            ExperimentKind::CountingOracle => &[],
            ExperimentKind::KernelOracle => &[("e1", 1e-12), ("time_sum", 1e-6), ("harmonic", 1e-8)],
            ExperimentKind::KernelAsymptotics => &[("shell_ratio", 0.6), ("kappa_agreement", 1e-3)],
            ExperimentKind::MartingaleExactness => &[("residual", 1e-8), ("fault", 0.01)],
            ExperimentKind::Centering => &[("z_max", 3.0)],
            ExperimentKind::MollifiedIdentity => &[("agreement", 1e-10)],
            ExperimentKind::CouplingRate => &[("max_slope", -0.15)],
            ExperimentKind::Invariance => &[],
            ExperimentKind::MomentTrends => &[("envelope_factor", 3.0)],
            ExperimentKind::Holder => &[("min_exponent", 0.53), ("constant_factor", 3.0)],
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.id() == s)
            .ok_or_else(|| Error::Config { key: "experiment".into(), reason: format!("unknown experiment `{s}`") })
    }
}

/// One acceptance rule and the experiment that executes it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionRef {
    pub criterion: u8,
    pub experiment: ExperimentKind,
    pub rule: String,
}

const RULES: [(u8, ExperimentKind, &str); 11] = [
    (1, ExperimentKind::CountingOracle, "chain counts by recursion equal brute-force enumeration on every instance"),
    (2, ExperimentKind::KernelOracle, "G(e1) = 0, spectral matches time sums for |x| <= 10, harmonic identity holds for |z| <= 32"),
    (3, ExperimentKind::KernelAsymptotics, "shell residual at |x| ~ 100 <= 0.6 x residual at |x| ~ 50; kappa from disjoint rings agree"),
    (4, ExperimentKind::MartingaleExactness, "exact one-step drift <= tolerance for k = 2, 3; a perturbed kernel is detected"),
    (5, ExperimentKind::Centering, "mean of M_n within 3 SE of 0; mean of beta_2(n,0) within 3 SE of its exact value"),
    (6, ExperimentKind::MollifiedIdentity, "per-offset and pair-accumulation mollified sums agree"),
    (7, ExperimentKind::CouplingRate, "log-log slope of the sup distance <= -0.15 with CI excluding 0"),
    (8, ExperimentKind::Invariance, "median |beta - gamma_hat| decays (CI excludes 0); independent pairing does not"),
    (9, ExperimentKind::Invariance, "L2 distance decays with CI excluding 0"),
    (10, ExperimentKind::MomentTrends, "p = 2 moments grow within 3 x their envelope ratios over one doubling"),
    (11, ExperimentKind::Holder, "Hoelder exponent of the p = 2 moment >= 0.53"),
];

/// The full rule-to-experiment mapping. Every rule has exactly one owner.
pub fn criteria_map() -> Vec<CriterionRef> {
    RULES.iter().map(|&(criterion, experiment, rule)| CriterionRef { criterion, experiment, rule: rule.into() }).collect()
}

pub fn criteria_for(kind: ExperimentKind) -> Vec<CriterionRef> {
    criteria_map().into_iter().filter(|c| c.experiment == kind).collect()
}

fn default_law() -> String {
    "default".into()
}
fn default_k() -> usize {
    2
}
fn default_delta() -> f64 {
    1.0 / 256.0
}
fn default_view_step() -> f64 {
    1.0 / 32768.0
}
fn default_resolution() -> f64 {
    WALK_MIN_RESOLUTION
}
fn default_radius() -> i64 {
    64
}
fn default_pair_offset() -> [i64; 2] {
    [1, 1]
}

/// A JSON experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub experiment: ExperimentKind,
    #[serde(default = "default_law")]
    pub law: String,
    #[serde(default = "default_k")]
    pub k: usize,
    pub n_grid: Vec<usize>,
    pub replicas: usize,
    #[serde(default)]
    pub tau_grid: Vec<f64>,
    /// When set, use the single width τ_n = n^(−ζ/4) at each n instead of the grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_schedule_zeta: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Where the CLI writes its run directory; not part of the config hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Brownian grid step of the coupling, in walk time.
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Step of the stored rescaled Brownian path on [0, 1].
    #[serde(default = "default_view_step")]
    pub view_step: f64,
    /// Smallest τ√n for the walk-side mollified sum.
    #[serde(default = "default_resolution")]
    pub walk_min_resolution: f64,
    /// Lattice separations |x − x′| at the first n.
    #[serde(default)]
    pub ladder: Vec<i64>,
    /// x′ for the moment-trend statistics (x = 0).
    #[serde(default = "default_pair_offset")]
    pub pair_offset: [i64; 2],
    #[serde(default = "default_radius")]
    pub kernel_radius: i64,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
}

fn config_err(key: &str, reason: impl Into<String>) -> Error {
    Error::Config { key: key.into(), reason: reason.into() }
}

impl ExperimentPlan {
    /// A plan with every optional field at its default.
    pub fn new(experiment: ExperimentKind, n_grid: Vec<usize>, replicas: usize) -> Self {
        ExperimentPlan {
            experiment,
            law: default_law(),
            k: default_k(),
            n_grid,
            replicas,
            tau_grid: Vec::new(),
            tau_schedule_zeta: None,
            seed: 0,
            output: None,
            delta: default_delta(),
            view_step: default_view_step(),
            walk_min_resolution: default_resolution(),
            ladder: Vec::new(),
            pair_offset: default_pair_offset(),
            kernel_radius: default_radius(),
            tolerances: BTreeMap::new(),
        }
    }

    /// The configuration each acceptance rule is judged on.
    pub fn acceptance(kind: ExperimentKind) -> Self {
        use ExperimentKind::*;
        let p = |n: Vec<usize>, r: usize| ExperimentPlan { seed: 20_240_601, ..ExperimentPlan::new(kind, n, r) };
        match kind {
            CountingOracle => ExperimentPlan { k: 4, ..p(vec![12], 10_000) },
            KernelOracle => ExperimentPlan { kernel_radius: 64, ..p(vec![4096], 1) },
            KernelAsymptotics => ExperimentPlan { kernel_radius: 256, ..p(vec![], 1) },
            MartingaleExactness => ExperimentPlan { k: 3, kernel_radius: 256, ..p(vec![200], 100) },
            Centering => ExperimentPlan { kernel_radius: 256, ..p(vec![64, 256, 1024], 10_000) },
            MollifiedIdentity => ExperimentPlan { tau_grid: vec![0.1], ..p(vec![4096], 4) },
            CouplingRate => ExperimentPlan { view_step: 1.0 / 1024.0, ..p((10..=16).map(|e| 1 << e).collect(), 32) },
            Invariance => ExperimentPlan {
                tau_grid: vec![0.2, 0.1, 0.05],
                walk_min_resolution: 1.5,
                ..p(vec![1 << 10, 1 << 12, 1 << 14, 1 << 16], 64)
            },
            MomentTrends => ExperimentPlan { kernel_radius: 256, ..p(vec![512, 1024], 1000) },
            Holder => ExperimentPlan { ladder: vec![1, 2, 4, 8, 16, 32], ..p(vec![1 << 12, 1 << 14], 1000) },
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let plan: ExperimentPlan = serde_json::from_str(text).map_err(|e| config_err("plan", e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Checks every parameter, naming the first offending key.
    pub fn validate(&self) -> Result<()> {
        IncrementLaw::resolve(&self.law).map_err(|e| config_err("law", e.to_string()))?;
        if self.k == 0 || self.k > 4 {
            return Err(config_err("k", format!("order {} outside 1..=4", self.k)));
        }
        if self.experiment != ExperimentKind::KernelAsymptotics && self.n_grid.is_empty() {
            return Err(config_err("n_grid", "empty"));
        }
        if self.n_grid.iter().any(|&n| n == 0) {
            return Err(config_err("n_grid", "entries must be positive"));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(config_err("n_grid", "must be strictly increasing"));
        }
        if self.replicas == 0 {
            return Err(config_err("replicas", "must be positive"));
        }
        if self.experiment.bears_intervals() && self.replicas < 30 {
            return Err(config_err("replicas", format!("{} < 30 for an experiment reporting intervals", self.replicas)));
        }
        if self.tau_grid.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
            return Err(config_err("tau_grid", "widths must lie in (0, 1]"));
        }
        if self.tau_grid.windows(2).any(|w| w[0] == w[1]) {
            return Err(config_err("tau_grid", "widths must be distinct"));
        }
        if !(self.delta > 0.0 && self.delta <= MAX_DELTA) {
            return Err(config_err("delta", format!("must lie in (0, {MAX_DELTA}]")));
        }
        if !(self.view_step > 0.0 && self.view_step <= 0.5) || (1.0 / self.view_step).fract() != 0.0 {
            return Err(config_err("view_step", "must be 1/m for an integer m ≥ 2"));
        }
        if !(self.walk_min_resolution > 0.0) {
            return Err(config_err("walk_min_resolution", "must be positive"));
        }
        if self.ladder.iter().any(|&d| d <= 0) || self.ladder.windows(2).any(|w| w[0] >= w[1]) {
            return Err(config_err("ladder", "separations must be positive and increasing"));
        }
        if self.kernel_radius < 4 {
            return Err(config_err("kernel_radius", "must be at least 4"));
        }
        let known = self.experiment.tolerances();
        for (key, v) in &self.tolerances {
            if !known.iter().any(|(k, _)| k == key) {
                return Err(config_err(&format!("tolerances.{key}"), format!("not a tolerance of {}", self.experiment)));
            }
            if !v.is_finite() {
                return Err(config_err(&format!("tolerances.{key}"), "must be finite"));
            }
        }
        if let Some(z) = self.tau_schedule_zeta {
            if !(z > 0.0 && z <= 2.0) {
                return Err(config_err("tau_schedule_zeta", "must lie in (0, 2]"));
            }
        }
        match self.experiment {
            ExperimentKind::Invariance if self.tau_grid.is_empty() && self.tau_schedule_zeta.is_none() => {
                Err(config_err("tau_grid", "needs at least one width or a schedule"))
            }
            ExperimentKind::MollifiedIdentity if self.tau_grid.is_empty() => {
                Err(config_err("tau_grid", "needs at least one width"))
            }
            ExperimentKind::Holder if self.ladder.len() < 2 => Err(config_err("ladder", "needs at least two separations")),
            ExperimentKind::Holder | ExperimentKind::MomentTrends if self.n_grid.len() < 2 => {
                Err(config_err("n_grid", "needs two sizes for the trend check"))
            }
            ExperimentKind::CouplingRate | ExperimentKind::Invariance if self.n_grid.len() < 2 => {
                Err(config_err("n_grid", "a slope needs at least two sizes"))
            }
            _ => Ok(()),
        }
    }

    pub fn tolerance(&self, key: &str) -> f64 {
        self.tolerances.get(key).copied().unwrap_or_else(|| {
            self.experiment.tolerances().iter().find(|(k, _)| *k == key).map(|t| t.1).expect("known tolerance key")
        })
    }

    pub fn law(&self) -> Result<IncrementLaw> {
        IncrementLaw::resolve(&self.law)
    }

    /// Mollifier widths used at n.
    pub fn taus_at(&self, n: usize) -> Vec<f64> {
        match self.tau_schedule_zeta {
            Some(z) => vec![(n as f64).powf(-z / 4.0)],
            None => self.tau_grid.clone(),
        }
    }

    pub fn pair_offset(&self) -> Site {
        Site::new(self.pair_offset[0], self.pair_offset[1])
    }

    /// SHA-256 of the canonical JSON of the plan without its output path.
    pub fn config_hash(&self) -> String {
        let mut bare = self.clone();
        bare.output = None;
        sha256_hex(serde_json::to_string(&bare).expect("plan serializes").as_bytes())
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A pass/fail outcome tied to the rule it tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flag {
    pub criterion: u8,
    pub check: String,
    pub passed: bool,
    pub measured: String,
}

/// Sample statistics of the tracked quantities at one n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NRow {
    pub n: usize,
    pub quantities: BTreeMap<String, Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: ExperimentKind,
    pub law: String,
    pub law_hash: String,
    pub config_hash: String,
    pub kernel_hash: Option<String>,
    pub seed: u64,
    pub per_n: Vec<NRow>,
    pub slopes: BTreeMap<String, SlopeFit>,
    pub values: BTreeMap<String, f64>,
    pub flags: Vec<Flag>,
    pub criteria: Vec<CriterionRef>,
}

impl ExperimentReport {
    pub(crate) fn new(plan: &ExperimentPlan, law: &IncrementLaw, kernel: Option<&PotentialKernelTable>) -> Self {
        ExperimentReport {
            experiment: plan.experiment,
            law: law.name().to_string(),
            law_hash: law.content_hash(),
            config_hash: plan.config_hash(),
            kernel_hash: kernel.map(|t| t.values_hash()),
            seed: plan.seed,
            per_n: Vec::new(),
            slopes: BTreeMap::new(),
            values: BTreeMap::new(),
            flags: Vec::new(),
            criteria: criteria_for(plan.experiment),
        }
    }

    pub(crate) fn flag(&mut self, criterion: u8, check: &str, passed: bool, measured: String) {
        self.flags.push(Flag { criterion, check: check.into(), passed, measured });
    }

    /// Records a finite value; NaN or infinities are stored as absent.
    pub(crate) fn value(&mut self, key: &str, v: f64) {
        if v.is_finite() {
            self.values.insert(key.into(), v);
        }
    }

    pub fn passed(&self) -> bool {
        self.flags.iter().all(|f| f.passed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// SHA-256 of the pretty JSON; equal plans give equal hashes.
    pub fn report_hash(&self) -> String {
        sha256_hex(self.to_json().as_bytes())
    }
}

/// Per-replica rows, written as CSV.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplicaTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl ReplicaTable {
    pub fn new(header: &[&str]) -> Self {
        ReplicaTable { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|v| format!("{v:e}")).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: ExperimentReport,
    pub replicas: ReplicaTable,
    /// (log n, log median) of the headline quantity, when the experiment has one.
    pub trend: Vec<(f64, f64)>,
}

impl RunOutput {
    /// Writes report.json, replicas.csv and trend.tsv into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.report.to_json())?;
        std::fs::write(dir.join("replicas.csv"), self.replicas.to_csv())?;
        let mut tsv = String::from("log_n\tlog_median\n");
        for (a, b) in &self.trend {
            tsv.push_str(&format!("{a:.12}\t{b:.12}\n"));
        }
        std::fs::write(dir.join("trend.tsv"), tsv)?;
        Ok(())
    }
}

/// Shared inputs of a run.
#[derive(Debug, Clone, Default)]
pub struct RunContext {
    /// Kernel cache directory.
    pub cache_dir: Option<PathBuf>,
    /// Directory for per-replica checkpoints.
    pub checkpoint_dir: Option<PathBuf>,
}

impl RunContext {
    pub fn kernel(&self, law: &IncrementLaw, radius: i64) -> Result<PotentialKernelTable> {
        PotentialKernelTable::load_or_build(law, radius, self.cache_dir.as_deref())
    }

    pub(crate) fn store<T: Keyed>(&self, plan: &ExperimentPlan) -> Result<ReplicaStore<T>> {
        match &self.checkpoint_dir {
            Some(dir) => ReplicaStore::open(&dir.join(format!("{}-{}.jsonl", plan.experiment, &plan.config_hash()[..16]))),
            None => Ok(ReplicaStore::in_memory()),
        }
    }
}

/// Runs the experiment a plan names.
pub fn run(plan: &ExperimentPlan, ctx: &RunContext) -> Result<RunOutput> {
    plan.validate()?;
    match plan.experiment {
        ExperimentKind::CountingOracle => oracles::counting_oracle(plan),
        ExperimentKind::KernelOracle => oracles::kernel_oracle(plan, ctx),
        ExperimentKind::KernelAsymptotics => oracles::kernel_asymptotics(plan, ctx),
        ExperimentKind::MartingaleExactness => oracles::martingale_exactness(plan, ctx),
        ExperimentKind::MollifiedIdentity => oracles::mollified_identity(plan, ctx),
        ExperimentKind::Centering => moments::centering(plan, ctx),
        ExperimentKind::MomentTrends => moments::moment_trends(plan, ctx),
        ExperimentKind::Holder => moments::holder_moment_experiment(plan, ctx),
        ExperimentKind::CouplingRate => invariance::coupling_rate(plan, ctx),
        ExperimentKind::Invariance => invariance::invariance_experiment(plan, ctx),
    }
}

/// Stream index of replica `r` at grid position `a`.
pub(crate) fn replica_index(a: usize, r: usize) -> u64 {
    ((a as u64) << 32) | r as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_rule_has_one_owner() {
        let map = criteria_map();
        let ids: Vec<u8> = map.iter().map(|c| c.criterion).collect();
        assert_eq!(ids, (1..=11).collect::<Vec<u8>>());
        for kind in ExperimentKind::ALL {
            assert!(!criteria_for(kind).is_empty(), "{kind}");
        }
    }

    #[test]
    fn acceptance_plans_validate_and_round_trip() {
        for kind in ExperimentKind::ALL {
            let plan = ExperimentPlan::acceptance(kind);
            plan.validate().unwrap();
            let text = serde_json::to_string(&plan).unwrap();
            assert_eq!(ExperimentPlan::from_json(&text).unwrap(), plan);
            assert_eq!(kind.id().parse::<ExperimentKind>().unwrap(), kind);
        }
    }

    #[test]
    fn invalid_plans_name_the_key() {
        let key = |text: &str| match ExperimentPlan::from_json(text) {
            Err(Error::Config { key, .. }) => key,
            other => panic!("{other:?}"),
        };
        assert_eq!(key(r#"{"experiment":"coupling-rate","n_grid":[8,4],"replicas":32}"#), "n_grid");
        assert_eq!(key(r#"{"experiment":"coupling-rate","n_grid":[4,8],"replicas":10}"#), "replicas");
        assert_eq!(key(r#"{"experiment":"holder","n_grid":[4,8],"replicas":40,"ladder":[1,2],"law":"nope"}"#), "law");
        assert_eq!(key(r#"{"experiment":"invariance","n_grid":[4,8],"replicas":40,"tau_grid":[2.0]}"#), "tau_grid");
        assert_eq!(key(r#"{"experiment":"centering","n_grid":[4],"replicas":40,"tolerances":{"bogus":1}}"#), "tolerances.bogus");
        assert_eq!(key(r#"{"experiment":"centering","n_grid":[4],"replicas":40,"delta":0.5}"#), "delta");
        assert_eq!(key(r#"{"experiment":"centering","n_grid":[4]}"#), "plan");
    }

    #[test]
    fn config_hash_ignores_output() {
        let a = ExperimentPlan::acceptance(ExperimentKind::Holder);
        let b = ExperimentPlan { output: Some("/tmp/x".into()), ..a.clone() };
        assert_eq!(a.config_hash(), b.config_hash());
        let c = ExperimentPlan { seed: 1, ..a.clone() };
        assert_ne!(a.config_hash(), c.config_hash());
    }

    #[test]
    fn tolerance_overrides() {
        let mut plan = ExperimentPlan::acceptance(ExperimentKind::Holder);
        assert_eq!(plan.tolerance("min_exponent"), 0.53);
        plan.tolerances.insert("min_exponent".into(), 0.4);
        assert_eq!(plan.tolerance("min_exponent"), 0.4);
    }
}
