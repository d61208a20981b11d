//! Reproducible walk paths X_0 = 0, X_n = ξ_1 + … + ξ_n.

use std::io::{Read, Write};
use std::path::Path;

use rand::distr::Distribution;
use rand_distr::weighted::WeightedAliasIndex;

use crate::error::{Error, Result};
use crate::increment_law::IncrementLaw;
use crate::lattice::Site;
use crate::rng::stream_rng;

/// O(1) step sampler built once per law.
#[derive(Debug, Clone)]
pub struct StepSampler {
    sites: Vec<Site>,
    alias: WeightedAliasIndex<f64>,
}

impl StepSampler {
    pub fn new(law: &IncrementLaw) -> Self {
        let sites: Vec<Site> = law.sites().collect();
        let alias = WeightedAliasIndex::new(law.probs_f64().to_vec()).expect("law probabilities are positive and finite");
        StepSampler { sites, alias }
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Site {
        self.sites[self.alias.sample(rng)]
    }
}

/// A simulated path. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkPath {
    positions: Vec<Site>,
    law_id: String,
    seed: u64,
    stream: u64,
}

impl WalkPath {
    /// Wraps explicit positions (fixtures, coupled paths). `positions[0]` must be the origin.
    pub fn from_positions(positions: Vec<Site>, law_id: impl Into<String>, seed: u64, stream: u64) -> Result<Self> {
        if positions.first() != Some(&Site::ORIGIN) {
            return Err(Error::OutOfRange("walk paths start at the origin".into()));
        }
        Ok(WalkPath { positions, law_id: law_id.into(), seed, stream })
    }

    pub fn positions(&self) -> &[Site] {
        &self.positions
    }

    /// Number of steps n (the path holds n + 1 positions).
    pub fn steps(&self) -> usize {
        self.positions.len() - 1
    }

    pub fn law_id(&self) -> &str {
        &self.law_id
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Prefix X_0..X_m as a new path.
    pub fn prefix(&self, m: usize) -> WalkPath {
        WalkPath { positions: self.positions[..=m].to_vec(), ..self.clone() }
    }

    /// X^n_t = X_{⌊nt⌋} / √n.
    pub fn scaled_position(&self, t: f64) -> Result<[f64; 2]> {
        let n = self.steps();
        if n == 0 {
            return Err(Error::OutOfRange("scaled position needs at least one step".into()));
        }
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::OutOfRange(format!("t = {t} outside [0, 1]")));
        }
        let idx = ((n as f64 * t).floor() as usize).min(n);
        let s = (n as f64).sqrt();
        let p = self.positions[idx];
        Ok([p.x as f64 / s, p.y as f64 / s])
    }

    /// Little-endian i32 (x, y) pairs, one per position.
    pub fn write_binary(&self, w: &mut impl Write) -> Result<()> {
        let mut buf = Vec::with_capacity(self.positions.len() * 8);
        for p in &self.positions {
            let (x, y) = (i32::try_from(p.x), i32::try_from(p.y));
            let (Ok(x), Ok(y)) = (x, y) else {
                return Err(Error::OutOfRange(format!("position {p:?} does not fit in i32")));
            };
            buf.extend_from_slice(&x.to_le_bytes());
            buf.extend_from_slice(&y.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn dump(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_binary(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn read_binary(r: &mut impl Read) -> Result<Vec<Site>> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() % 8 != 0 {
            return Err(Error::OutOfRange("path dump length is not a multiple of 8".into()));
        }
        Ok(bytes
            .chunks_exact(8)
            .map(|c| {
                let x = i32::from_le_bytes(c[0..4].try_into().unwrap());
                let y = i32::from_le_bytes(c[4..8].try_into().unwrap());
                Site::new(x as i64, y as i64)
            })
            .collect())
    }
}

/// Simulates n steps of the walk for the key (seed, stream).
pub fn simulate(law: &IncrementLaw, n: usize, seed: u64, stream: u64) -> WalkPath {
    simulate_with(&StepSampler::new(law), law.name(), n, seed, stream)
}

/// Same as [`simulate`] with a prebuilt sampler, for replica loops.
pub fn simulate_with(sampler: &StepSampler, law_id: &str, n: usize, seed: u64, stream: u64) -> WalkPath {
    let mut rng = stream_rng(seed, stream);
    let mut positions = Vec::with_capacity(n + 1);
    let mut cur = Site::ORIGIN;
    positions.push(cur);
    for _ in 0..n {
        cur += sampler.sample(&mut rng);
        positions.push(cur);
    }
    WalkPath { positions, law_id: law_id.to_string(), seed, stream }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_steps() {
        let p = simulate(&IncrementLaw::default_law(), 0, 1, 2);
        assert_eq!(p.positions(), &[Site::ORIGIN]);
    }

    #[test]
    fn deterministic_per_key() {
        let law = IncrementLaw::default_law();
        let a = simulate(&law, 1000, 42, 7);
        let b = simulate(&law, 1000, 42, 7);
        let c = simulate(&law, 1000, 42, 8);
        assert_eq!(a, b);
        assert_ne!(a.positions(), c.positions());
    }

    #[test]
    fn steps_lie_in_support() {
        let law = IncrementLaw::default_law();
        let p = simulate(&law, 5000, 3, 0);
        let support: Vec<Site> = law.sites().collect();
        for w in p.positions().windows(2) {
            assert!(support.contains(&(w[1] - w[0])));
        }
    }

    #[test]
    fn scaled_position_examples() {
        let path = WalkPath::from_positions(
            vec![Site::ORIGIN, Site::new(1, 0), Site::new(2, 0), Site::new(2, 1), Site::new(2, 2)],
            "fixture",
            0,
            0,
        )
        .unwrap();
        assert_eq!(path.scaled_position(0.0).unwrap(), [0.0, 0.0]);
        assert_eq!(path.scaled_position(0.5).unwrap(), [1.0, 0.0]);
        assert_eq!(path.scaled_position(1.0).unwrap(), [1.0, 1.0]);
        assert!(path.scaled_position(1.5).is_err());
        assert!(path.scaled_position(-0.1).is_err());
    }

    #[test]
    fn binary_dump_round_trip() {
        let p = simulate(&IncrementLaw::default_law(), 100, 9, 9);
        let mut buf = Vec::new();
        p.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 101 * 8);
        let back = WalkPath::read_binary(&mut buf.as_slice()).unwrap();
        assert_eq!(back, p.positions());
    }
}
