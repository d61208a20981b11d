//! Step distributions on Z² and their hypothesis checks.
//!
//! Probabilities are exact rationals. Floating point only appears in the
//! characteristic function and in the sampling tables.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lattice::Site;

/// Radius of the ball around each point of 2πZ² left out of the
/// aperiodicity scan. For a law whose support generates Z², |φ| = 1 can
/// only happen on πZ², so anything below π is safe.
pub const APERIODICITY_EXCLUSION_RADIUS: f64 = PI / 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub site: Site,
    pub prob: BigRational,
}

/// A finitely supported step law on Z².
#[derive(Debug, Clone)]
pub struct IncrementLaw {
    name: String,
    atoms: Vec<Atom>,
    probs_f64: Vec<f64>,
}

/// One entry of the JSON law file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AtomRecord {
    pub dx: i64,
    pub dy: i64,
    pub num: i64,
    pub den: i64,
}

impl IncrementLaw {
    /// Builds a law, merging repeated sites. Fails unless the probabilities
    /// are positive and sum to exactly one. Whether the support generates Z²
    /// is reported by [`Self::validate`], so periodic laws stay constructible
    /// for negative tests.
    pub fn new(name: impl Into<String>, atoms: impl IntoIterator<Item = (Site, BigRational)>) -> Result<Self> {
        let name = name.into();
        let mut merged: BTreeMap<Site, BigRational> = BTreeMap::new();
        for (site, p) in atoms {
            if !p.is_positive() {
                return Err(Error::InvalidLaw(format!("{name}: probability at {site:?} is not positive")));
            }
            *merged.entry(site).or_insert_with(BigRational::zero) += p;
        }
        if merged.is_empty() {
            return Err(Error::InvalidLaw(format!("{name}: empty support")));
        }
        let total: BigRational = merged.values().cloned().sum();
        if !total.is_one() {
            return Err(Error::InvalidLaw(format!("{name}: probabilities sum to {total}, not 1")));
        }
        let atoms: Vec<Atom> = merged.into_iter().map(|(site, prob)| Atom { site, prob }).collect();
        let probs_f64 = atoms.iter().map(|a| a.prob.to_f64().unwrap_or(f64::NAN)).collect();
        Ok(IncrementLaw { name, atoms, probs_f64 })
    }

    pub fn from_records(name: impl Into<String>, records: &[AtomRecord]) -> Result<Self> {
        let name = name.into();
        let mut atoms = Vec::with_capacity(records.len());
        for r in records {
            if r.den <= 0 {
                return Err(Error::InvalidLaw(format!("{name}: non-positive denominator at ({},{})", r.dx, r.dy)));
            }
            atoms.push((Site::new(r.dx, r.dy), ratio(r.num, r.den)));
        }
        Self::new(name, atoms)
    }

    /// Reads a JSON array of `{"dx", "dy", "num", "den"}` records.
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let records: Vec<AtomRecord> = serde_json::from_str(&text)?;
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("custom").to_string();
        Self::from_records(name, &records)
    }

    /// Resolves `--law <name|path>`.
    pub fn resolve(spec: &str) -> Result<Self> {
        match Self::builtin(spec) {
            Some(law) => Ok(law),
            None => {
                let path = Path::new(spec);
                if path.exists() {
                    Self::from_json_file(path)
                } else {
                    Err(Error::InvalidLaw(format!(
                        "`{spec}` is neither a built-in law (default, srw, diagonal, king) nor a readable file"
                    )))
                }
            }
        }
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "default" => Some(Self::default_law()),
            "srw" => Some(Self::simple_random_walk()),
            "diagonal" => Some(Self::diagonal()),
            "king" => Some(Self::king()),
            _ => None,
        }
    }

    /// Product of two copies of q with q(0) = 3/16, q(±1) = 3/8, q(±2) = 1/32.
    pub fn default_law() -> Self {
        let q = default_factor();
        Self::product("default", &q).expect("default law is well formed")
    }

    pub fn simple_random_walk() -> Self {
        let p = ratio(1, 4);
        Self::new(
            "srw",
            [(1, 0), (-1, 0), (0, 1), (0, -1)].map(|(x, y)| (Site::new(x, y), p.clone())),
        )
        .expect("srw is well formed")
    }

    pub fn diagonal() -> Self {
        let p = ratio(1, 4);
        Self::new(
            "diagonal",
            [(1, 1), (1, -1), (-1, 1), (-1, -1)].map(|(x, y)| (Site::new(x, y), p.clone())),
        )
        .expect("diagonal walk is well formed")
    }

    /// Uniform on the eight king moves.
    pub fn king() -> Self {
        let p = ratio(1, 8);
        let mut atoms = Vec::new();
        for x in -1..=1 {
            for y in -1..=1 {
                if (x, y) != (0, 0) {
                    atoms.push((Site::new(x, y), p.clone()));
                }
            }
        }
        Self::new("king", atoms).expect("king walk is well formed")
    }

    /// The law of (U, V) with U, V independent copies of the 1-D law `factor`.
    pub fn product(name: &str, factor: &[(i64, BigRational)]) -> Result<Self> {
        let mut atoms = Vec::new();
        for (a, pa) in factor {
            for (b, pb) in factor {
                atoms.push((Site::new(*a, *b), pa * pb));
            }
        }
        Self::new(name, atoms)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn probs_f64(&self) -> &[f64] {
        &self.probs_f64
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        self.atoms.iter().map(|a| a.site)
    }

    /// `(site, probability)` pairs in floating point.
    pub fn weighted_sites(&self) -> impl Iterator<Item = (Site, f64)> + '_ {
        self.atoms.iter().map(|a| a.site).zip(self.probs_f64.iter().copied())
    }

    pub fn prob_of(&self, site: Site) -> f64 {
        self.weighted_sites().find(|(s, _)| *s == site).map_or(0.0, |(_, p)| p)
    }

    pub fn max_jump(&self) -> i64 {
        self.sites().map(Site::max_abs).max().unwrap_or(0)
    }

    pub fn is_symmetric(&self) -> bool {
        self.atoms.iter().all(|a| {
            self.atoms.iter().any(|b| b.site == -a.site && b.prob == a.prob)
        })
    }

    /// Stable content hash: SHA-256 over the sorted atom list, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for a in &self.atoms {
            h.update(format!("{},{}:{}/{};", a.site.x, a.site.y, a.prob.numer(), a.prob.denom()).as_bytes());
        }
        hex::encode(h.finalize())
    }

    /// φ(θ) = Σ p(x) cos(θ·x). Only defined for symmetric laws.
    pub fn characteristic_function(&self, theta: [f64; 2]) -> Result<f64> {
        if !self.is_symmetric() {
            return Err(Error::NotSymmetric { law: self.name.clone() });
        }
        Ok(self.phi(theta))
    }

    /// Unchecked φ for callers that already know the law is symmetric.
    pub fn phi(&self, theta: [f64; 2]) -> f64 {
        self.weighted_sites()
            .map(|(s, p)| p * (theta[0] * s.x as f64 + theta[1] * s.y as f64).cos())
            .sum()
    }

    /// 1 − φ(θ), evaluated as Σ p · 2 sin²(θ·x / 2) so it keeps full
    /// relative precision as θ → 0.
    pub fn one_minus_phi(&self, theta: [f64; 2]) -> f64 {
        self.weighted_sites()
            .map(|(s, p)| {
                let h = 0.5 * (theta[0] * s.x as f64 + theta[1] * s.y as f64);
                let sh = h.sin();
                2.0 * p * sh * sh
            })
            .sum()
    }

    pub fn mean(&self) -> [BigRational; 2] {
        let mut m = [BigRational::zero(), BigRational::zero()];
        for a in &self.atoms {
            m[0] += &a.prob * BigRational::from_integer(BigInt::from(a.site.x));
            m[1] += &a.prob * BigRational::from_integer(BigInt::from(a.site.y));
        }
        m
    }

    /// Covariance matrix E[ξ ξᵀ] − E[ξ] E[ξ]ᵀ.
    pub fn covariance(&self) -> [[BigRational; 2]; 2] {
        let mean = self.mean();
        let mut c: [[BigRational; 2]; 2] = Default::default();
        for a in &self.atoms {
            let v = [
                BigRational::from_integer(BigInt::from(a.site.x)),
                BigRational::from_integer(BigInt::from(a.site.y)),
            ];
            for i in 0..2 {
                for j in 0..2 {
                    c[i][j] += &a.prob * &v[i] * &v[j];
                }
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                c[i][j] -= &mean[i] * &mean[j];
            }
        }
        c
    }

    /// 1 − max |φ| over a `grid_resolution`² grid on [−π, π)², skipping
    /// points within [`APERIODICITY_EXCLUSION_RADIUS`] of 2πZ².
    pub fn aperiodicity_margin(&self, grid_resolution: usize) -> f64 {
        let n = grid_resolution;
        let step = 2.0 * PI / n as f64;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let t1 = -PI + i as f64 * step;
            for j in 0..n {
                let t2 = -PI + j as f64 * step;
                if dist_to_2pi_lattice([t1, t2]) < APERIODICITY_EXCLUSION_RADIUS {
                    continue;
                }
                worst = worst.max(self.phi([t1, t2]).abs());
            }
        }
        (1.0 - worst).max(0.0)
    }

    pub fn validate(&self, grid_resolution: usize) -> Result<LawValidationReport> {
        if grid_resolution < 64 {
            return Err(Error::OutOfRange(format!("grid resolution {grid_resolution} < 64")));
        }
        let mean = self.mean();
        let cov = self.covariance();
        let symmetric = self.is_symmetric();
        let margin = if symmetric {
            self.aperiodicity_margin(grid_resolution)
        } else {
            0.0
        };
        let zero = BigRational::zero();
        let one = BigRational::one();
        let mean_zero = mean.iter().all(|m| *m == zero);
        let identity = cov[0][0] == one && cov[1][1] == one && cov[0][1] == zero && cov[1][0] == zero;
        let full_lattice = self.generates_lattice();
        Ok(LawValidationReport {
            law: self.name.clone(),
            mean: mean.map(|m| m.to_string()),
            covariance: cov.map(|row| row.map(|c| c.to_string())),
            mean_zero,
            identity_covariance: identity,
            symmetric,
            generates_lattice: full_lattice,
            aperiodicity_margin: margin,
            phi_grid_resolution: grid_resolution,
            moment_note: "finite support: moments of every order are finite".to_string(),
            compliant: mean_zero && identity && symmetric && full_lattice && margin > MARGIN_TOLERANCE,
        })
    }

    /// True when the support generates Z² as a group.
    pub fn generates_lattice(&self) -> bool {
        generates_lattice(self.sites())
    }

    /// If the law is q ⊗ q for a symmetric 1-D law q with unit variance,
    /// returns q as `(value, probability)` pairs sorted by value.
    pub fn product_factor(&self) -> Result<Vec<(i64, BigRational)>> {
        let fail = |reason: &str| Error::NotProductLaw { law: self.name.clone(), reason: reason.to_string() };
        let mut mx: BTreeMap<i64, BigRational> = BTreeMap::new();
        let mut my: BTreeMap<i64, BigRational> = BTreeMap::new();
        for a in &self.atoms {
            *mx.entry(a.site.x).or_insert_with(BigRational::zero) += &a.prob;
            *my.entry(a.site.y).or_insert_with(BigRational::zero) += &a.prob;
        }
        if mx != my {
            return Err(fail("coordinate marginals differ"));
        }
        for (a, pa) in &mx {
            for (b, pb) in &my {
                let joint = self
                    .atoms
                    .iter()
                    .find(|t| t.site == Site::new(*a, *b))
                    .map_or_else(BigRational::zero, |t| t.prob.clone());
                if joint != pa * pb {
                    return Err(fail("joint law is not the product of its marginals"));
                }
            }
        }
        for (a, pa) in &mx {
            if mx.get(&-a) != Some(pa) {
                return Err(fail("marginal is not symmetric"));
            }
        }
        let var: BigRational = mx
            .iter()
            .map(|(a, p)| p * BigRational::from_integer(BigInt::from(a * a)))
            .sum();
        if !var.is_one() {
            return Err(fail("marginal variance is not 1"));
        }
        Ok(mx.into_iter().collect())
    }
}

/// Margins below this count as zero (|φ| = 1 up to rounding).
pub const MARGIN_TOLERANCE: f64 = 1e-9;

/// Hypothesis checklist of a law.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LawValidationReport {
    pub law: String,
    pub mean: [String; 2],
    pub covariance: [[String; 2]; 2],
    pub mean_zero: bool,
    pub identity_covariance: bool,
    pub symmetric: bool,
    pub generates_lattice: bool,
    pub aperiodicity_margin: f64,
    pub phi_grid_resolution: usize,
    pub moment_note: String,
    pub compliant: bool,
}

pub fn default_factor() -> Vec<(i64, BigRational)> {
    vec![
        (-2, ratio(1, 32)),
        (-1, ratio(3, 8)),
        (0, ratio(3, 16)),
        (1, ratio(3, 8)),
        (2, ratio(1, 32)),
    ]
}

pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

fn dist_to_2pi_lattice(t: [f64; 2]) -> f64 {
    let r = |v: f64| v - 2.0 * PI * (v / (2.0 * PI)).round();
    r(t[0]).hypot(r(t[1]))
}

/// Z² is generated by the support iff the gcd of all 2×2 minors is 1.
fn generates_lattice(sites: impl Iterator<Item = Site>) -> bool {
    let v: Vec<Site> = sites.collect();
    let mut g: i64 = 0;
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            let det = v[i].x * v[j].y - v[i].y * v[j].x;
            g = g.gcd(&det);
            if g == 1 {
                return true;
            }
        }
    }
    g == 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_at_origin_is_one() {
        for name in ["default", "srw", "diagonal", "king"] {
            let law = IncrementLaw::builtin(name).unwrap();
            assert!((law.characteristic_function([0.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn srw_phi_at_corner_is_minus_one() {
        let law = IncrementLaw::simple_random_walk();
        assert_eq!(law.characteristic_function([PI, PI]).unwrap(), -1.0);
    }

    #[test]
    fn default_phi_at_corner_is_quarter() {
        let law = IncrementLaw::default_law();
        let v = law.characteristic_function([PI, PI]).unwrap();
        assert!((v - 0.25).abs() < 1e-15, "{v}");
    }

    #[test]
    fn default_law_is_compliant() {
        let r = IncrementLaw::default_law().validate(256).unwrap();
        assert!(r.mean_zero && r.identity_covariance && r.symmetric);
        assert!(r.aperiodicity_margin >= 0.05, "margin {}", r.aperiodicity_margin);
        assert!(r.compliant);
        assert_eq!(r.covariance, [["1".to_string(), "0".to_string()], ["0".to_string(), "1".to_string()]]);
    }

    #[test]
    fn srw_fails_on_covariance_and_margin() {
        let r = IncrementLaw::simple_random_walk().validate(64).unwrap();
        assert_eq!(r.covariance[0][0], "1/2");
        assert_eq!(r.covariance[1][1], "1/2");
        assert_eq!(r.aperiodicity_margin, 0.0);
        assert!(!r.compliant);
    }

    #[test]
    fn diagonal_has_identity_covariance_but_is_periodic() {
        let law = IncrementLaw::diagonal();
        let r = law.validate(64).unwrap();
        assert!(r.identity_covariance);
        assert_eq!(law.phi([PI, PI]), 1.0);
        assert_eq!(r.aperiodicity_margin, 0.0);
        assert!(!r.compliant);
    }

    #[test]
    fn king_fails_covariance() {
        let r = IncrementLaw::king().validate(64).unwrap();
        assert!(!r.identity_covariance);
        assert!(!r.compliant);
    }

    #[test]
    fn asymmetric_law_refuses_phi() {
        let law = IncrementLaw::new(
            "drift",
            [(Site::new(1, 0), ratio(1, 2)), (Site::new(0, 1), ratio(1, 4)), (Site::new(-1, -1), ratio(1, 4))],
        )
        .unwrap();
        assert!(matches!(law.characteristic_function([0.1, 0.2]), Err(Error::NotSymmetric { .. })));
        assert!(!law.validate(64).unwrap().compliant);
    }

    #[test]
    fn rejects_bad_sums_and_flags_sublattices() {
        assert!(IncrementLaw::new("half", [(Site::new(1, 0), ratio(1, 2))]).is_err());
        let even = IncrementLaw::new(
            "even",
            [(Site::new(2, 0), ratio(1, 4)), (Site::new(-2, 0), ratio(1, 4)), (Site::new(0, 2), ratio(1, 4)), (Site::new(0, -2), ratio(1, 4))],
        )
        .unwrap();
        let report = even.validate(64).unwrap();
        assert!(!report.generates_lattice);
        assert!(!report.compliant);
        assert!(!IncrementLaw::diagonal().generates_lattice());
        assert!(IncrementLaw::default_law().generates_lattice());
    }

    #[test]
    fn json_records_round_trip() {
        let records = vec![
            AtomRecord { dx: 1, dy: 0, num: 1, den: 4 },
            AtomRecord { dx: -1, dy: 0, num: 1, den: 4 },
            AtomRecord { dx: 0, dy: 1, num: 1, den: 4 },
            AtomRecord { dx: 0, dy: -1, num: 1, den: 4 },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mine.json");
        std::fs::write(&path, serde_json::to_string(&records).unwrap()).unwrap();
        let law = IncrementLaw::resolve(path.to_str().unwrap()).unwrap();
        assert_eq!(law.content_hash(), IncrementLaw::simple_random_walk().content_hash());
    }

    #[test]
    fn product_factor_of_default() {
        let q = IncrementLaw::default_law().product_factor().unwrap();
        assert_eq!(q, default_factor());
        assert!(IncrementLaw::simple_random_walk().product_factor().is_err());
        assert!(IncrementLaw::king().product_factor().is_err());
    }

    #[test]
    fn one_minus_phi_matches_direct_form() {
        let law = IncrementLaw::default_law();
        for t in [[0.3, -1.2], [2.0, 0.5], [-3.0, 3.0]] {
            assert!((law.one_minus_phi(t) - (1.0 - law.phi(t))).abs() < 1e-14);
        }
        let tiny = [1e-7, 2e-7];
        let expected = 0.5 * (tiny[0] * tiny[0] + tiny[1] * tiny[1]);
        assert!((law.one_minus_phi(tiny) / expected - 1.0).abs() < 1e-6);
    }
}
