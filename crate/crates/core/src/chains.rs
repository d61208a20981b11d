//! Chain counts B_k(n, x) and their renormalized versions.
//!
//! B_k(n, x) counts time tuples 0 ≤ i₁ < … < i_k ≤ n with
//! X_{i_j} = X_{i_{j−1}} + x_j for j = 2..k. The renormalized count subtracts
//! every lower-order chain obtained by deleting offsets, weighted by the
//! scaled kernel at the deleted offsets.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::hash::{BuildHasherDefault, Hasher};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::PotentialKernelTable;
use crate::lattice::Site;

/// Multiplicative hasher for packed lattice keys.
#[derive(Default, Clone, Copy)]
pub struct PackedHasher(u64);

impl Hasher for PackedHasher {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = (self.0.rotate_left(8) ^ b as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        }
    }

    fn write_u64(&mut self, v: u64) {
        let z = (v ^ (v >> 29)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        self.0 = z ^ (z >> 32);
    }
}

pub type SiteMap<V> = HashMap<u64, V, BuildHasherDefault<PackedHasher>>;

/// Order k and offsets (x₂, …, x_k).
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChainSpec {
    k: usize,
    offsets: Vec<Site>,
}

impl fmt::Debug for ChainSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "k={} {:?}", self.k, self.offsets)
    }
}

impl ChainSpec {
    pub fn new(k: usize, offsets: Vec<Site>) -> Result<Self> {
        if k == 0 {
            return Err(Error::OutOfRange("chain order k must be at least 1".into()));
        }
        if offsets.len() != k - 1 {
            return Err(Error::OutOfRange(format!("k = {k} needs {} offsets, got {}", k - 1, offsets.len())));
        }
        Ok(ChainSpec { k, offsets })
    }

    pub fn single() -> Self {
        ChainSpec { k: 1, offsets: Vec::new() }
    }

    pub fn pair(x: Site) -> Self {
        ChainSpec { k: 2, offsets: vec![x] }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn offsets(&self) -> &[Site] {
        &self.offsets
    }

    /// The spec with the offsets whose bits are set in `deleted` removed
    /// (bit i ↔ offset x_{i+2}).
    pub fn reduced(&self, deleted: u32) -> ChainSpec {
        let offsets: Vec<Site> = self
            .offsets
            .iter()
            .enumerate()
            .filter(|(i, _)| deleted & (1 << i) == 0)
            .map(|(_, s)| *s)
            .collect();
        ChainSpec { k: offsets.len() + 1, offsets }
    }

    /// The spec without its last offset, (x₂, …, x_{k−1}).
    pub fn without_last(&self) -> ChainSpec {
        self.reduced(1 << (self.k - 2))
    }
}

/// Running counts B_k(i, x), i = 0..n, for one path and spec.
#[derive(Debug, Clone)]
pub struct ChainCounter {
    spec: ChainSpec,
    running: Vec<u64>,
    distinct_sites: usize,
}

impl ChainCounter {
    pub fn spec(&self) -> &ChainSpec {
        &self.spec
    }

    /// B_k(i, x) for i = 0..n.
    pub fn running(&self) -> &[u64] {
        &self.running
    }

    /// B_k(n, x).
    pub fn total(&self) -> u64 {
        *self.running.last().expect("counter holds time 0")
    }

    /// ΔB_k(i) = B_k(i) − B_k(i − 1), with ΔB_k(0) = B_k(0).
    pub fn increment(&self, i: usize) -> u64 {
        if i == 0 {
            self.running[0]
        } else {
            self.running[i] - self.running[i - 1]
        }
    }

    pub fn increments(&self) -> Vec<u64> {
        (0..self.running.len()).map(|i| self.increment(i)).collect()
    }

    pub fn steps(&self) -> usize {
        self.running.len() - 1
    }

    pub fn distinct_sites(&self) -> usize {
        self.distinct_sites
    }
}

/// Counts chains along `positions` (X₀ … X_n).
///
/// At time i, for j = k down to 2, every (j−1)-chain ending at X_i − x_j
/// extends to a j-chain ending at X_i; then the 1-chain at X_i is added.
/// By convention B₁(i) = i.
pub fn count_chains(positions: &[Site], spec: &ChainSpec) -> Result<ChainCounter> {
    if positions.is_empty() {
        return Err(Error::OutOfRange("cannot count chains on an empty path".into()));
    }
    let n = positions.len() - 1;
    if spec.k == 1 {
        return Ok(ChainCounter { spec: spec.clone(), running: (0..=n as u64).collect(), distinct_sites: 0 });
    }
    let k = spec.k;
    let mut levels: Vec<SiteMap<u64>> = (0..k).map(|_| SiteMap::default()).collect();
    let mut running = Vec::with_capacity(n + 1);
    let mut total: u64 = 0;
    for &x in positions {
        for j in (2..=k).rev() {
            let from = (x - spec.offsets[j - 2]).packed();
            let add = levels[j - 2].get(&from).copied().unwrap_or(0);
            if add > 0 {
                *levels[j - 1].entry(x.packed()).or_insert(0) += add;
                if j == k {
                    total = total.checked_add(add).expect("chain count overflows u64");
                }
            }
        }
        *levels[0].entry(x.packed()).or_insert(0) += 1;
        running.push(total);
    }
    Ok(ChainCounter { spec: spec.clone(), running, distinct_sites: levels[0].len() })
}

/// Direct enumeration of increasing time tuples. Exponential; small n only.
pub fn brute_force_count(positions: &[Site], spec: &ChainSpec) -> u64 {
    let n = positions.len() - 1;
    if spec.k == 1 {
        return n as u64;
    }
    fn extend(positions: &[Site], offsets: &[Site], last: usize) -> u64 {
        let Some((&x, rest)) = offsets.split_first() else {
            return 1;
        };
        let mut c = 0;
        for i in last + 1..positions.len() {
            if positions[i] == positions[last] + x {
                c += extend(positions, rest, i);
            }
        }
        c
    }
    (0..=n).map(|i0| extend(positions, &spec.offsets, i0)).sum()
}

/// Counters for a spec and all of its offset deletions.
#[derive(Debug, Clone, Default)]
pub struct CounterFamily {
    counters: BTreeMap<ChainSpec, ChainCounter>,
}

impl CounterFamily {
    pub fn new() -> Self {
        Self::default()
    }

    /// Counts `spec` and every spec with a subset of its offsets deleted.
    pub fn for_spec(positions: &[Site], spec: &ChainSpec) -> Result<Self> {
        let mut fam = CounterFamily::new();
        fam.add_spec(positions, spec)?;
        Ok(fam)
    }

    pub fn add_spec(&mut self, positions: &[Site], spec: &ChainSpec) -> Result<()> {
        for mask in 0..(1u32 << (spec.k - 1)) {
            let sub = spec.reduced(mask);
            if !self.counters.contains_key(&sub) {
                let c = count_chains(positions, &sub)?;
                self.counters.insert(sub, c);
            }
        }
        Ok(())
    }

    pub fn insert(&mut self, counter: ChainCounter) {
        self.counters.insert(counter.spec.clone(), counter);
    }

    pub fn get(&self, spec: &ChainSpec) -> Option<&ChainCounter> {
        self.counters.get(spec)
    }

    pub fn len(&self) -> usize {
        self.counters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counters.is_empty()
    }
}

/// B̃_{k,m}(j, x) for j = 0..n.
#[derive(Debug, Clone, Serialize)]
pub struct RenormalizedSeries {
    pub spec: ChainSpec,
    pub m: usize,
    pub values: Vec<f64>,
}

impl RenormalizedSeries {
    pub fn steps(&self) -> usize {
        self.values.len() - 1
    }

    /// B̃_{k,m}(j) − B̃_{k,m}(j − 1) for j ≥ 1.
    pub fn increment(&self, j: usize) -> f64 {
        self.values[j] - self.values[j - 1]
    }
}

/// Σ_{A ⊂ {2..k}} (−1)^{|A|} Π_{i∈A} G_m(x_i) · B_{k−|A|}(j, x_{Aᶜ}).
pub fn renormalize(family: &CounterFamily, spec: &ChainSpec, kernel: &PotentialKernelTable, m: usize) -> Result<RenormalizedSeries> {
    renormalize_with(family, spec, m, |x| kernel.scaled_kernel(m, x))
}

/// [`renormalize`] with an arbitrary weight function in place of G_m.
pub fn renormalize_with(family: &CounterFamily, spec: &ChainSpec, m: usize, g: impl Fn(Site) -> f64) -> Result<RenormalizedSeries> {
    let d = spec.k - 1;
    let mut missing = Vec::new();
    let mut terms = Vec::with_capacity(1 << d);
    let gm: Vec<f64> = spec.offsets.iter().map(|&x| g(x)).collect();
    for mask in 0..(1u32 << d) {
        let sub = spec.reduced(mask);
        match family.get(&sub) {
            Some(c) => {
                let mut coef = if mask.count_ones() % 2 == 1 { -1.0 } else { 1.0 };
                for (i, g) in gm.iter().enumerate() {
                    if mask & (1 << i) != 0 {
                        coef *= g;
                    }
                }
                terms.push((coef, c));
            }
            None => missing.extend(spec.offsets.iter().enumerate().filter(|(i, _)| mask & (1 << i) == 0).map(|(_, s)| *s)),
        }
    }
    if !missing.is_empty() {
        missing.sort();
        missing.dedup();
        return Err(Error::MissingCounter { missing });
    }
    let len = terms[0].1.running.len();
    let mut values = vec![0.0; len];
    for (coef, c) in terms {
        for (v, &b) in values.iter_mut().zip(&c.running) {
            *v += coef * b as f64;
        }
    }
    Ok(RenormalizedSeries { spec: spec.clone(), m, values })
}

/// β̃_k(n, y/√n) = B̃_{k,n}(n, y)/n for a series renormalized at m = n.
pub fn beta(series: &RenormalizedSeries, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::OutOfRange("β̃ needs n ≥ 1".into()));
    }
    if series.m != n || series.steps() != n {
        return Err(Error::OutOfRange(format!(
            "β̃ at n = {n} needs a length-{n} series renormalized at m = n (got length {}, m = {})",
            series.steps(),
            series.m
        )));
    }
    Ok(series.values[n] / n as f64)
}

/// β̃_k(n, y/√n) straight from a path.
pub fn beta_from_path(positions: &[Site], spec: &ChainSpec, kernel: &PotentialKernelTable) -> Result<f64> {
    let n = positions.len() - 1;
    let fam = CounterFamily::for_spec(positions, spec)?;
    beta(&renormalize(&fam, spec, kernel, n)?, n)
}

/// β̃₂(n, 0) = B₂(n, 0)/n − G_n(0), O(n) time.
pub fn beta2_at_origin(positions: &[Site], kernel: &PotentialKernelTable) -> f64 {
    let n = positions.len() - 1;
    let c = count_chains(positions, &ChainSpec::pair(Site::ORIGIN)).expect("nonempty path");
    c.total() as f64 / n as f64 - kernel.scaled_kernel(n, Site::ORIGIN)
}

/// CSV rows `i,B_k(i),B~_{k,m}(i)`.
pub fn write_csv(w: &mut impl Write, counter: &ChainCounter, series: &RenormalizedSeries) -> Result<()> {
    writeln!(w, "i,b_k,b_tilde_k")?;
    for (i, (b, t)) in counter.running.iter().zip(&series.values).enumerate() {
        writeln!(w, "{i},{b},{t:.17e}")?;
    }
    Ok(())
}

pub fn export_csv(path: &Path, counter: &ChainCounter, series: &RenormalizedSeries) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_csv(&mut f, counter, series)?;
    f.flush()?;
    Ok(())
}
