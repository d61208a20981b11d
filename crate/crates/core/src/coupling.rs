//! Walk and planar Brownian motion built on one probability space.
//!
//! For a product law q ⊗ q each coordinate is embedded separately. A
//! symmetric unit-variance q is a mixture of two-point laws ±b with weights
//! q(0) at b = 0 and 2q(b) for b > 0, and the exit time of (−b, b) has
//! mean b², so each embedded step takes unit time on average. Per step a
//! level b is drawn and the coordinate's Brownian path, sampled on a grid of
//! step δ, is run from its value at the previous detection until it has
//! moved b away; the walk moves ±b in the direction of the exit.
//!
//! Starting each exit problem from the Brownian value (not the walk value)
//! keeps the walk law exact: by symmetry the exit direction is fair and
//! independent of the past. Crossings are only seen at grid points, which
//! delays detection by about ρ√δ (ρ = −ζ(½)/√(2π)); the barrier is moved
//! inward by that amount so the embedding clock keeps unit mean per step.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::increment_law::IncrementLaw;
use crate::lattice::Site;
use crate::mollifier::Mollifier;
use crate::rng::{derive_stream, stream_rng};
use crate::spatial::planar_chain_integrals;
use crate::walk::WalkPath;

/// Expected overshoot of a Gaussian random walk over a far barrier, in units
/// of the step standard deviation.
pub const OVERSHOOT_CONSTANT: f64 = 0.582_597_157_939_010_7;

/// Largest grid step accepted for the embedding.
pub const MAX_DELTA: f64 = 1.0 / 64.0;

/// Largest number of stored view samples.
pub const MAX_VIEW_SAMPLES: u128 = 1 << 26;

/// Levels b and their probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelMixture {
    levels: Vec<(u32, f64)>,
}

impl LevelMixture {
    /// Mixture for the one-dimensional factor of a product law.
    pub fn for_law(law: &IncrementLaw) -> Result<Self> {
        let factor = law.product_factor()?;
        let mut levels = Vec::new();
        for (v, p) in &factor {
            let p = num_traits::ToPrimitive::to_f64(p).unwrap_or(f64::NAN);
            match v.cmp(&0) {
                std::cmp::Ordering::Equal => levels.push((0, p)),
                std::cmp::Ordering::Greater => levels.push((*v as u32, 2.0 * p)),
                std::cmp::Ordering::Less => {}
            }
        }
        levels.sort_by_key(|l| l.0);
        Ok(LevelMixture { levels })
    }

    pub fn levels(&self) -> &[(u32, f64)] {
        &self.levels
    }

    /// Σ prob · b², the mean exit time per step.
    pub fn mean_exit_time(&self) -> f64 {
        self.levels.iter().map(|&(b, p)| p * (b as f64).powi(2)).sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for &(b, p) in &self.levels {
            acc += p;
            if u < acc {
                return b;
            }
        }
        self.levels.last().expect("nonempty mixture").0
    }
}

/// Parameters of one coupled replica.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingParams {
    pub n: usize,
    /// Brownian grid step in walk time.
    pub delta: f64,
    /// Step of the stored view W^n on [0, 1].
    pub view_step: f64,
    pub seed: u64,
    pub stream: u64,
}

/// A uniformly sampled planar path on [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianView {
    pub step: f64,
    pub points: Vec<[f64; 2]>,
}

impl BrownianView {
    /// Every `factor`-th sample.
    pub fn subsample(&self, factor: usize) -> BrownianView {
        BrownianView { step: self.step * factor as f64, points: self.points.iter().step_by(factor).copied().collect() }
    }

    /// The coarsest power-of-two subsample with τ/√step ≥ `min_ratio`.
    pub fn resolved_for(&self, tau: f64, min_ratio: f64) -> Result<BrownianView> {
        let ratio = tau / self.step.sqrt();
        if ratio < min_ratio {
            return Err(Error::GridTooCoarse { tau, ratio, required: min_ratio });
        }
        let mut factor = 1;
        while tau / (self.step * (2 * factor) as f64).sqrt() >= min_ratio && (self.points.len() - 1) % (2 * factor) == 0 {
            factor *= 2;
        }
        Ok(self.subsample(factor))
    }

    /// Float64 little-endian (x, y) pairs.
    pub fn dump(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        for p in &self.points {
            w.write_all(&p[0].to_le_bytes())?;
            w.write_all(&p[1].to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }
}

/// The coupled pair and its diagnostics.
#[derive(Debug, Clone)]
pub struct CoupledPath {
    pub params: CouplingParams,
    pub walk: WalkPath,
    /// Grid indices of the detections, per coordinate; T[0] = 0.
    pub embed_times: [Vec<u64>; 2],
    /// W^n_t = W_{nt}/√n on t = j·view_step.
    pub view: BrownianView,
    /// sup over grid times t ≤ n of |X_⌊t⌋ − W_t| / √n.
    pub sup_distance: f64,
}

impl CoupledPath {
    /// Embedding clock T^c_n in walk time units.
    pub fn clock(&self, c: usize) -> f64 {
        *self.embed_times[c].last().expect("time 0 present") as f64 * self.params.delta
    }
}

fn brownian_stream(stream: u64, c: usize) -> u64 {
    derive_stream(stream, 2 * c as u64 + 1)
}

fn level_stream(stream: u64, c: usize) -> u64 {
    derive_stream(stream, 2 * c as u64 + 2)
}

/// Builds a coupled walk/Brownian pair for a product law.
pub fn couple(law: &IncrementLaw, params: CouplingParams) -> Result<CoupledPath> {
    let mixture = LevelMixture::for_law(law).map_err(|e| match e {
        Error::NotProductLaw { law, reason } => Error::NotProductLaw {
            law,
            reason: format!("{reason}; the Skorokhod coupling embeds each coordinate separately and needs q ⊗ q"),
        },
        other => other,
    })?;
    let CouplingParams { n, delta, view_step, seed, stream } = params;
    if !(delta > 0.0 && delta <= MAX_DELTA) {
        return Err(Error::OutOfRange(format!("grid step {delta} outside (0, 2^-6]")));
    }
    if !(view_step > 0.0 && view_step <= 1.0) {
        return Err(Error::OutOfRange(format!("view step {view_step} outside (0, 1]")));
    }
    let view_len = (1.0 / view_step).round() as u128 + 1;
    if view_len > MAX_VIEW_SAMPLES {
        return Err(Error::MemoryBudget { what: "Brownian view".into(), needed: view_len, limit: MAX_VIEW_SAMPLES });
    }
    let sd = delta.sqrt();
    let shift = OVERSHOOT_CONSTANT * sd;

    // Pass 1: per coordinate, the embedding itself.
    let mut coords: [Vec<i64>; 2] = [Vec::with_capacity(n + 1), Vec::with_capacity(n + 1)];
    let mut times: [Vec<u64>; 2] = [Vec::with_capacity(n + 1), Vec::with_capacity(n + 1)];
    for c in 0..2 {
        let mut bm = stream_rng(seed, brownian_stream(stream, c));
        let mut lv = stream_rng(seed, level_stream(stream, c));
        let (mut w, mut anchor, mut idx, mut x) = (0.0f64, 0.0f64, 0u64, 0i64);
        coords[c].push(0);
        times[c].push(0);
        for _ in 0..n {
            let b = mixture.sample(&mut lv);
            if b > 0 {
                let barrier = b as f64 - shift;
                loop {
                    let z: f64 = bm.sample(StandardNormal);
                    w += sd * z;
                    idx += 1;
                    if (w - anchor).abs() >= barrier {
                        break;
                    }
                }
                x += if w > anchor { b as i64 } else { -(b as i64) };
                anchor = w;
            }
            coords[c].push(x);
            times[c].push(idx);
        }
    }
    let positions: Vec<Site> = coords[0].iter().zip(&coords[1]).map(|(&a, &b)| Site::new(a, b)).collect();

    // Pass 2: both Brownian coordinates again from the same streams, for the
    // sup distance and the [0, 1] view.
    let horizon = (n as f64 / delta).ceil() as u64;
    let end = horizon.max(times[0][n]).max(times[1][n]);
    let per_view = view_step * n as f64 / delta;
    let mut rngs = [stream_rng(seed, brownian_stream(stream, 0)), stream_rng(seed, brownian_stream(stream, 1))];
    let mut w = [0.0f64; 2];
    let scale = if n > 0 { 1.0 / (n as f64).sqrt() } else { 0.0 };
    let mut view = Vec::with_capacity(view_len as usize);
    view.push([0.0, 0.0]);
    let mut next_view = 1usize;
    let mut sup2 = 0.0f64;
    for idx in 1..=end {
        for c in 0..2 {
            let z: f64 = rngs[c].sample(StandardNormal);
            w[c] += sd * z;
        }
        if idx <= horizon {
            let t = idx as f64 * delta;
            let k = (t.floor() as usize).min(n);
            let d2 = (positions[k].x as f64 - w[0]).powi(2) + (positions[k].y as f64 - w[1]).powi(2);
            sup2 = sup2.max(d2);
        }
        while (next_view as u128) < view_len && ((next_view as f64 * per_view).round() as u64) == idx {
            view.push([w[0] * scale, w[1] * scale]);
            next_view += 1;
        }
    }
    while (view.len() as u128) < view_len {
        // n = 0: the view is the constant origin
        view.push([0.0, 0.0]);
    }
    let walk = WalkPath::from_positions(positions, law.name(), seed, stream)?;
    Ok(CoupledPath {
        params,
        walk,
        embed_times: times,
        view: BrownianView { step: view_step, points: view },
        sup_distance: sup2.sqrt() * scale,
    })
}

/// A planar Brownian motion on [0, 1] sampled with the given step, not
/// coupled to anything.
pub fn brownian_view(seed: u64, stream: u64, step: f64) -> Result<BrownianView> {
    let len = (1.0 / step).round() as u128 + 1;
    if len > MAX_VIEW_SAMPLES {
        return Err(Error::MemoryBudget { what: "Brownian view".into(), needed: len, limit: MAX_VIEW_SAMPLES });
    }
    let mut rng = stream_rng(seed, stream);
    let sd = step.sqrt();
    let mut p = [0.0f64; 2];
    let mut points = Vec::with_capacity(len as usize);
    points.push(p);
    for _ in 1..len {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        p[0] += sd * a;
        p[1] += sd * b;
        points.push(p);
    }
    Ok(BrownianView { step, points })
}

/// Smallest τ/√δ accepted by [`mollified_gamma`] by default.
pub const MIN_RESOLUTION_RATIO: f64 = 8.0;

/// Mollified renormalized intersection functional of a planar path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MollifiedEstimate {
    pub k: usize,
    pub tau: f64,
    pub step: f64,
    pub value: f64,
    /// Term j of Σ_j C(k−1, j) (−l)^j I_{k−j}.
    pub components: Vec<f64>,
    /// I₁ … I_k: time-ordered mollified integrals, I₁ = 1.
    pub integrals: Vec<f64>,
    pub l_f_tau: f64,
}

/// Σ_{j<k} C(k−1, j) (−l)^j I_{k−j}, with I_m the time-ordered m-fold
/// integral of Π f_τ(W_{t_i} − W_{t_{i−1}}).
pub fn mollified_gamma(view: &BrownianView, tau: f64, k: usize) -> Result<MollifiedEstimate> {
    mollified_gamma_with(view, tau, k, MIN_RESOLUTION_RATIO)
}

pub fn mollified_gamma_with(view: &BrownianView, tau: f64, k: usize, min_ratio: f64) -> Result<MollifiedEstimate> {
    if k == 0 {
        return Err(Error::OutOfRange("k must be at least 1".into()));
    }
    let moll = Mollifier::new(tau)?;
    let ratio = tau / view.step.sqrt();
    if ratio < min_ratio {
        return Err(Error::GridTooCoarse { tau, ratio, required: min_ratio });
    }
    let mut integrals = vec![1.0];
    integrals.extend(planar_chain_integrals(&view.points, view.step, tau, k, |d2| moll.eval_norm_sq(d2)));
    let l = moll.log_moment();
    let components = binomial_components(&integrals, l, k);
    Ok(MollifiedEstimate { k, tau, step: view.step, value: components.iter().sum(), components, integrals, l_f_tau: l })
}

/// Terms C(k−1, j) (−c)^j I_{k−j} for j = 0..k−1, where integrals[m−1] = I_m.
pub fn binomial_components(integrals: &[f64], c: f64, k: usize) -> Vec<f64> {
    let mut binom = 1.0;
    (0..k)
        .map(|j| {
            if j > 0 {
                binom = binom * (k - j) as f64 / j as f64;
            }
            binom * (-c).powi(j as i32) * integrals[k - j - 1]
        })
        .collect()
}
