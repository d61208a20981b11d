//! Transition probabilities and the planar potential kernel
//!
//! G(x) = Σ_{n≥1} [p(n,0,x) − p(n,0,e₁)]
//!      = (2π)⁻² ∫_{[−π,π]²} φ(θ)/(1 − φ(θ)) · (cos θ·x − cos θ₁) dθ.
//!
//! The integral is evaluated with one fixed linear quadrature rule for every
//! x, so identities that are linear in G (P₁G − G = −p(1,0,·)) hold to the
//! accuracy with which the rule integrates trigonometric polynomials.
//!
//! Rule layout: the square [−r₀, r₀]² around the only singularity is done in
//! polar coordinates (four triangles, one per side, r running to the side),
//! where the integrand is analytic in the radial variable. The rest of the
//! torus is a tensor product of composite Gauss–Legendre panels graded
//! geometrically toward ±r₀. All box evaluations run as dense products of
//! cos/sin tables, which makes a full table a few matrix multiplies.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use num_traits::ToPrimitive;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::increment_law::{IncrementLaw, MARGIN_TOLERANCE};
use crate::lattice::Site;
use crate::quadrature::{composite, GaussLegendre};

/// Largest transition grid side accepted.
pub const MAX_GRID_SIDE: usize = 4096;

/// p(n, 0, x) for n ≤ horizon, stored on a window |x|∞ ≤ keep_radius.
#[derive(Debug, Clone)]
pub struct TransitionGrid {
    law_id: String,
    horizon: usize,
    keep_radius: i64,
    /// slices[n] is the (2r+1)² window for time n, row-major in y then x.
    slices: Vec<Vec<f64>>,
    /// Sum of each full slice (not just the stored window).
    slice_sums: Vec<f64>,
}

impl TransitionGrid {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn keep_radius(&self) -> i64 {
        self.keep_radius
    }

    pub fn law_id(&self) -> &str {
        &self.law_id
    }

    pub fn slice_sums(&self) -> &[f64] {
        &self.slice_sums
    }

    /// p(n, 0, x), or `None` if x is outside the stored window.
    pub fn p(&self, n: usize, x: Site) -> Option<f64> {
        let r = self.keep_radius;
        if n > self.horizon || x.max_abs() > r {
            return None;
        }
        let side = (2 * r + 1) as usize;
        Some(self.slices[n][(x.y + r) as usize * side + (x.x + r) as usize])
    }

    /// Σ_{0≤i<j≤n} p(j−i, 0, x) = E[B₂(n, x)].
    pub fn expected_pair_count(&self, n: usize, x: Site) -> Option<f64> {
        if n > self.horizon {
            return None;
        }
        let mut s = 0.0;
        for d in 1..=n {
            s += (n + 1 - d) as f64 * self.p(d, x)?;
        }
        Some(s)
    }
}

/// Exact dynamic-programming convolution of the step law, p(0,0,·) = δ₀.
///
/// The full reachable box of radius horizon·max_jump is propagated; only
/// the window |x|∞ ≤ keep_radius of each slice is retained.
pub fn transition_probabilities(law: &IncrementLaw, horizon: usize, keep_radius: i64) -> Result<TransitionGrid> {
    let jump = law.max_jump().max(1);
    let full_r = horizon as i64 * jump;
    let side = (2 * full_r + 1) as usize;
    if side > MAX_GRID_SIDE {
        return Err(Error::BoxTooLarge {
            side,
            limit: MAX_GRID_SIDE,
            bytes: 2 * (side as u128) * (side as u128) * 8,
        });
    }
    let keep = keep_radius.min(full_r).max(0);
    let atoms: Vec<(Site, f64)> = law.weighted_sites().collect();
    let mut cur = vec![0.0f64; side * side];
    let mut next = vec![0.0f64; side * side];
    let center = full_r;
    cur[center as usize * side + center as usize] = 1.0;

    let window = |buf: &[f64]| -> Vec<f64> {
        let w = (2 * keep + 1) as usize;
        let mut out = Vec::with_capacity(w * w);
        for y in -keep..=keep {
            let row = (y + center) as usize * side;
            out.extend_from_slice(&buf[row + (center - keep) as usize..=row + (center + keep) as usize]);
        }
        out
    };

    let mut slices = vec![window(&cur)];
    let mut slice_sums = vec![1.0];
    for n in 1..=horizon {
        let r_prev = (n as i64 - 1) * jump;
        let r = n as i64 * jump;
        let lo = (center - r) as usize;
        let hi = (center + r) as usize;
        let prev_lo = center - r_prev;
        let prev_hi = center + r_prev;
        let cur_ref = &cur;
        next.par_chunks_mut(side).enumerate().for_each(|(row, out)| {
            if row < lo || row > hi {
                return;
            }
            for o in out[lo..=hi].iter_mut() {
                *o = 0.0;
            }
            for &(s, p) in &atoms {
                let src_row = row as i64 - s.y;
                if src_row < prev_lo || src_row > prev_hi {
                    continue;
                }
                let src = &cur_ref[src_row as usize * side..(src_row as usize + 1) * side];
                // out[c] += p * src[c - s.x] for c - s.x within the previous box
                let c_lo = (prev_lo + s.x).max(lo as i64) as usize;
                let c_hi = (prev_hi + s.x).min(hi as i64) as usize;
                let shift = s.x;
                for c in c_lo..=c_hi {
                    out[c] += p * src[(c as i64 - shift) as usize];
                }
            }
        });
        std::mem::swap(&mut cur, &mut next);
        let total: f64 = cur
            .par_chunks(side)
            .enumerate()
            .filter(|(row, _)| *row >= lo && *row <= hi)
            .map(|(_, r)| r[lo..=hi].iter().sum::<f64>())
            .sum();
        slice_sums.push(total);
        slices.push(window(&cur));
    }
    Ok(TransitionGrid {
        law_id: law.name().to_string(),
        horizon,
        keep_radius: keep,
        slices,
        slice_sums,
    })
}

/// Parameters of the spectral quadrature rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub rule: String,
    /// Gauss–Legendre nodes per tensor panel.
    pub panel_nodes: usize,
    /// Upper bound on tensor panel width.
    pub max_panel_width: f64,
    /// Half-width r₀ of the central square done in polar coordinates.
    pub core_half_width: f64,
    /// Radial and angular node counts per polar triangle.
    pub radial_nodes: usize,
    pub angular_nodes: usize,
    /// Number of geometric panel doublings outward from ±r₀.
    pub origin_refinement_depth: usize,
}

impl QuadratureSpec {
    /// Rule that resolves cos(θ·x) for |x|∞ up to `radius`.
    pub fn for_radius(radius: i64) -> Self {
        let radius = radius.max(16) as f64;
        QuadratureSpec {
            rule: "gauss-legendre-tensor+polar-core".to_string(),
            panel_nodes: 24,
            max_panel_width: (12.8 / radius).min(0.1),
            core_half_width: PI / 64.0,
            radial_nodes: 32,
            angular_nodes: 48,
            origin_refinement_depth: 6,
        }
    }

    /// A strictly finer rule used to estimate the error of `self`.
    pub fn refined(&self) -> Self {
        QuadratureSpec {
            panel_nodes: self.panel_nodes + 8,
            max_panel_width: self.max_panel_width * 0.75,
            radial_nodes: self.radial_nodes + 16,
            angular_nodes: self.angular_nodes + 16,
            ..self.clone()
        }
    }

    fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("quadrature spec serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// The quadrature rule with the law's integrand h = φ/(1−φ) folded into the
/// weights.
#[derive(Debug, Clone)]
pub struct SpectralRule {
    spec: QuadratureSpec,
    /// 1-D node set of the tensor part.
    theta: Vec<f64>,
    /// Row-major A×A weights w_a w_b h(θ_a, θ_b); zero on the polar core.
    tensor: Vec<f64>,
    /// Polar core nodes: (θ₁, θ₂, weight × h).
    polar: Vec<(f64, f64, f64)>,
    /// Σ weight·h·cos θ₁ evaluated by the same code path as the table.
    e1_term: f64,
}

impl SpectralRule {
    pub fn new(law: &IncrementLaw, spec: &QuadratureSpec) -> Result<Self> {
        if !law.is_symmetric() {
            return Err(Error::NotSymmetric { law: law.name().to_string() });
        }
        let margin = law.aperiodicity_margin(64);
        if margin <= MARGIN_TOLERANCE {
            return Err(Error::NotAperiodic { law: law.name().to_string(), margin });
        }
        let h = |t: [f64; 2]| {
            let om = law.one_minus_phi(t);
            (1.0 - om) / om
        };
        let r0 = spec.core_half_width;
        let gl = GaussLegendre::new(spec.panel_nodes);

        let mut breaks = vec![r0];
        let mut b = r0;
        for _ in 0..spec.origin_refinement_depth {
            b *= 2.0;
            if b >= PI {
                break;
            }
            breaks.push(b);
        }
        breaks.push(PI);
        let mut all_breaks: Vec<f64> = breaks.iter().rev().map(|v| -v).collect();
        all_breaks.extend(breaks.iter().copied());
        // composite() walks windows of consecutive breaks; the (−r₀, r₀)
        // window becomes the core panel, which the tensor weights skip.
        let nodes = composite(&gl, &all_breaks, spec.max_panel_width);
        let theta: Vec<f64> = nodes.iter().map(|n| n.0).collect();
        let w: Vec<f64> = nodes.iter().map(|n| n.1).collect();
        let in_core: Vec<bool> = theta.iter().map(|t| t.abs() < r0).collect();
        let a = theta.len();
        // For q ⊗ q, 1 − φ = u + v − uv with u, v the one-dimensional 1 − φ₁.
        let factor_om: Option<Vec<f64>> = law.product_factor().ok().map(|q| {
            let q: Vec<(f64, f64)> = q.iter().map(|(v, p)| (*v as f64, p.to_f64().unwrap_or(f64::NAN))).collect();
            theta
                .iter()
                .map(|t| q.iter().map(|&(v, p)| 2.0 * p * (0.5 * t * v).sin().powi(2)).sum())
                .collect()
        });
        let mut tensor = vec![0.0; a * a];
        tensor.par_chunks_mut(a).enumerate().for_each(|(i, row)| {
            for j in 0..a {
                if in_core[i] && in_core[j] {
                    continue;
                }
                let hv = match &factor_om {
                    Some(om) => {
                        let o = om[i] + om[j] - om[i] * om[j];
                        (1.0 - o) / o
                    }
                    None => h([theta[i], theta[j]]),
                };
                row[j] = w[i] * w[j] * hv;
            }
        });

        let glr = GaussLegendre::new(spec.radial_nodes);
        let gla = GaussLegendre::new(spec.angular_nodes);
        let mut polar = Vec::with_capacity(4 * spec.radial_nodes * spec.angular_nodes);
        for side in 0..4 {
            let rot = side as f64 * PI / 2.0;
            for (om, wo) in gla.on_interval(-PI / 4.0, PI / 4.0) {
                let reach = r0 / om.cos();
                for (u, wu) in glr.on_interval(0.0, 1.0) {
                    let r = u * reach;
                    let ang = om + rot;
                    let t = [r * ang.cos(), r * ang.sin()];
                    let weight = wo * wu * reach * reach * u;
                    polar.push((t[0], t[1], weight * h(t)));
                }
            }
        }
        let mut rule = SpectralRule { spec: spec.clone(), theta, tensor, polar, e1_term: 0.0 };
        rule.e1_term = rule.raw_box(1, 0)[2];
        Ok(rule)
    }

    pub fn spec(&self) -> &QuadratureSpec {
        &self.spec
    }

    /// Σ weight·h·cos(θ·x) for x in [−r1, r1] × [0, r2] (only x₂ ≥ 0; G is even).
    /// Returned row-major in x₁ then x₂, length (2 r1 + 1)(r2 + 1).
    fn raw_box(&self, r1: i64, r2: i64) -> Vec<f64> {
        let xs1: Vec<i64> = (-r1..=r1).collect();
        let xs2: Vec<i64> = (0..=r2).collect();
        let n1 = xs1.len();
        let n2 = xs2.len();
        let a = self.theta.len();

        // Tensor part: P[a][x2] = Σ_b H_ab cos(θ_b x2), likewise with sin.
        let cos2: Vec<f64> = (0..a).flat_map(|b| xs2.iter().map(move |&x| (self.theta[b] * x as f64).cos())).collect();
        let sin2: Vec<f64> = (0..a).flat_map(|b| xs2.iter().map(move |&x| (self.theta[b] * x as f64).sin())).collect();
        let mut pc = vec![0.0; a * n2];
        let mut ps = vec![0.0; a * n2];
        pc.par_chunks_mut(n2).zip(ps.par_chunks_mut(n2)).enumerate().for_each(|(i, (rc, rs))| {
            let hrow = &self.tensor[i * a..(i + 1) * a];
            for (b, &hv) in hrow.iter().enumerate() {
                if hv == 0.0 {
                    continue;
                }
                let c = &cos2[b * n2..(b + 1) * n2];
                let s = &sin2[b * n2..(b + 1) * n2];
                for k in 0..n2 {
                    rc[k] += hv * c[k];
                    rs[k] += hv * s[k];
                }
            }
        });

        // Polar part as a rank-P update with the same layout.
        let p = self.polar.len();
        let mut qc = vec![0.0; p * n2];
        let mut qs = vec![0.0; p * n2];
        qc.par_chunks_mut(n2).zip(qs.par_chunks_mut(n2)).enumerate().for_each(|(i, (rc, rs))| {
            let (_, t2, wh) = self.polar[i];
            for (k, &x) in xs2.iter().enumerate() {
                let (s, c) = (t2 * x as f64).sin_cos();
                rc[k] = wh * c;
                rs[k] = wh * s;
            }
        });

        let mut out = vec![0.0; n1 * n2];
        out.par_chunks_mut(n2).enumerate().for_each(|(row, o)| {
            let x1 = xs1[row] as f64;
            for i in 0..a {
                let (s, c) = (self.theta[i] * x1).sin_cos();
                let rc = &pc[i * n2..(i + 1) * n2];
                let rs = &ps[i * n2..(i + 1) * n2];
                for k in 0..n2 {
                    o[k] += c * rc[k] - s * rs[k];
                }
            }
            for i in 0..p {
                let (s, c) = (self.polar[i].0 * x1).sin_cos();
                let rc = &qc[i * n2..(i + 1) * n2];
                let rs = &qs[i * n2..(i + 1) * n2];
                for k in 0..n2 {
                    o[k] += c * rc[k] - s * rs[k];
                }
            }
        });
        out
    }

    /// G on the box |x|∞ ≤ radius, row-major in y then x.
    pub fn kernel_box(&self, radius: i64) -> Vec<f64> {
        let half = self.raw_box(radius, radius);
        let n2 = (radius + 1) as usize;
        let side = (2 * radius + 1) as usize;
        let norm = 1.0 / (4.0 * PI * PI);
        let mut out = vec![0.0; side * side];
        for x1 in -radius..=radius {
            for x2 in -radius..=radius {
                // G(x1, x2) = G(-x1, -x2)
                let (a, b) = if x2 >= 0 { (x1, x2) } else { (-x1, -x2) };
                let v = half[(a + radius) as usize * n2 + b as usize];
                out[(x2 + radius) as usize * side + (x1 + radius) as usize] = (v - self.e1_term) * norm;
            }
        }
        out
    }

    /// G at a single point, same rule as [`Self::kernel_box`].
    pub fn kernel_at(&self, x: Site) -> f64 {
        let a = self.theta.len();
        let (x1, x2) = (x.x as f64, x.y as f64);
        let c1: Vec<(f64, f64)> = self.theta.iter().map(|t| (t * x1).sin_cos()).collect();
        let c2: Vec<(f64, f64)> = self.theta.iter().map(|t| (t * x2).sin_cos()).collect();
        let tensor: f64 = (0..a)
            .into_par_iter()
            .map(|i| {
                let hrow = &self.tensor[i * a..(i + 1) * a];
                let (mut sc, mut ss) = (0.0, 0.0);
                for (b, &hv) in hrow.iter().enumerate() {
                    sc += hv * c2[b].1;
                    ss += hv * c2[b].0;
                }
                c1[i].1 * sc - c1[i].0 * ss
            })
            .sum();
        let polar: f64 = self.polar.iter().map(|&(t1, t2, wh)| wh * (t1 * x1 + t2 * x2).cos()).sum();
        (tensor + polar - self.e1_term) / (4.0 * PI * PI)
    }
}

/// G(x) at one point by the spectral rule sized for |x|.
pub fn kernel_spectral(law: &IncrementLaw, x: Site) -> Result<f64> {
    let rule = SpectralRule::new(law, &QuadratureSpec::for_radius(x.max_abs()))?;
    Ok(rule.kernel_at(x))
}

/// Cached G on a box, with κ and the quadrature provenance.
#[derive(Debug)]
pub struct PotentialKernelTable {
    law_id: String,
    law_hash: String,
    radius: i64,
    values: Vec<f64>,
    kappa: f64,
    kappa_fit_range: (f64, f64),
    quadrature: QuadratureSpec,
    quadrature_error: f64,
    rule: Option<Arc<SpectralRule>>,
    overrides: HashMap<Site, f64>,
    slow_path: Mutex<HashMap<Site, f64>>,
}

impl Clone for PotentialKernelTable {
    fn clone(&self) -> Self {
        PotentialKernelTable {
            law_id: self.law_id.clone(),
            law_hash: self.law_hash.clone(),
            radius: self.radius,
            values: self.values.clone(),
            kappa: self.kappa,
            kappa_fit_range: self.kappa_fit_range,
            quadrature: self.quadrature.clone(),
            quadrature_error: self.quadrature_error,
            rule: self.rule.clone(),
            overrides: self.overrides.clone(),
            slow_path: Mutex::new(self.slow_path.lock().expect("slow path cache").clone()),
        }
    }
}

/// Ring used to fix κ when a table is built.
pub const KAPPA_RING: (f64, f64) = (100.0, 200.0);

/// Sample points on concentric circles in the ring, rounded to the lattice, deduplicated.
pub fn ring_sample(r_min: f64, r_max: f64, circles: usize, per_circle: usize) -> Vec<Site> {
    let mut pts = Vec::new();
    for c in 0..circles {
        let r = r_min + (r_max - r_min) * c as f64 / (circles - 1).max(1) as f64;
        for k in 0..per_circle {
            // irrational angular offset per circle so samples do not align
            let ang = 2.0 * PI * (k as f64 + 0.5 + 0.618_033_988_7 * c as f64) / per_circle as f64;
            let s = Site::round_from([r * ang.cos(), r * ang.sin()]);
            let n = s.norm();
            if n >= r_min && n <= r_max && !pts.contains(&s) {
                pts.push(s);
            }
        }
    }
    pts
}

impl PotentialKernelTable {
    /// Builds the table on |x|∞ ≤ radius and fixes κ from spectral values on
    /// the ring [`KAPPA_RING`].
    pub fn build(law: &IncrementLaw, radius: i64) -> Result<Self> {
        let spec = QuadratureSpec::for_radius(radius.max(KAPPA_RING.1 as i64));
        Self::build_with(law, radius, &spec)
    }

    pub fn build_with(law: &IncrementLaw, radius: i64, spec: &QuadratureSpec) -> Result<Self> {
        let rule = Arc::new(SpectralRule::new(law, spec)?);
        let values = rule.kernel_box(radius);

        let ring = ring_sample(KAPPA_RING.0, KAPPA_RING.1, 11, 16);
        let ring_vals: Vec<(Site, f64)> = if radius as f64 >= KAPPA_RING.1 {
            let side = (2 * radius + 1) as usize;
            ring.iter()
                .map(|&s| (s, values[(s.y + radius) as usize * side + (s.x + radius) as usize]))
                .collect()
        } else {
            ring.iter().map(|&s| (s, rule.kernel_at(s))).collect()
        };
        let kappa = kappa_from_values(&ring_vals);

        let check = [Site::ORIGIN, Site::new(3, -1), Site::new(radius / 2, radius / 3), Site::new(radius, radius), Site::new(-radius, 1)];
        let fine = SpectralRule::new(law, &spec.refined())?;
        let quadrature_error = check
            .iter()
            .map(|&s| (rule.kernel_at(s) - fine.kernel_at(s)).abs())
            .fold(0.0, f64::max);

        Ok(PotentialKernelTable {
            law_id: law.name().to_string(),
            law_hash: law.content_hash(),
            radius,
            values,
            kappa,
            kappa_fit_range: KAPPA_RING,
            quadrature: spec.clone(),
            quadrature_error,
            rule: Some(rule),
            overrides: HashMap::new(),
            slow_path: Mutex::new(HashMap::new()),
        })
    }

    /// A table from explicit values (fixtures, cache files). No slow path.
    pub fn from_values(law_id: &str, law_hash: &str, radius: i64, values: Vec<f64>, kappa: f64) -> Self {
        assert_eq!(values.len(), ((2 * radius + 1) * (2 * radius + 1)) as usize);
        PotentialKernelTable {
            law_id: law_id.to_string(),
            law_hash: law_hash.to_string(),
            radius,
            values,
            kappa,
            kappa_fit_range: (f64::NAN, f64::NAN),
            quadrature: QuadratureSpec::for_radius(radius),
            quadrature_error: f64::NAN,
            rule: None,
            overrides: HashMap::new(),
            slow_path: Mutex::new(HashMap::new()),
        }
    }

    /// Loads from `cache_dir` if a matching file exists, otherwise builds and stores it.
    pub fn load_or_build(law: &IncrementLaw, radius: i64, cache_dir: Option<&Path>) -> Result<Self> {
        let spec = QuadratureSpec::for_radius(radius.max(KAPPA_RING.1 as i64));
        if let Some(dir) = cache_dir {
            let path = cache_path(dir, law, radius, &spec);
            if path.exists() {
                match Self::read_cache(&path) {
                    Ok(mut t) if t.law_hash == law.content_hash() && t.quadrature == spec && t.radius == radius => {
                        t.rule = Some(Arc::new(SpectralRule::new(law, &spec)?));
                        log::info!("kernel cache hit {}", path.display());
                        return Ok(t);
                    }
                    Ok(_) => log::warn!("kernel cache {} does not match; rebuilding", path.display()),
                    Err(e) => log::warn!("kernel cache {} unreadable ({e}); rebuilding", path.display()),
                }
            }
            let table = Self::build_with(law, radius, &spec)?;
            std::fs::create_dir_all(dir)?;
            table.write_cache(&path)?;
            return Ok(table);
        }
        Self::build_with(law, radius, &spec)
    }

    pub fn radius(&self) -> i64 {
        self.radius
    }

    pub fn law_id(&self) -> &str {
        &self.law_id
    }

    pub fn law_hash(&self) -> &str {
        &self.law_hash
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn set_kappa(&mut self, kappa: f64, range: (f64, f64)) {
        self.kappa = kappa;
        self.kappa_fit_range = range;
    }

    pub fn kappa_fit_range(&self) -> (f64, f64) {
        self.kappa_fit_range
    }

    pub fn quadrature_spec(&self) -> &QuadratureSpec {
        &self.quadrature
    }

    /// Max |G_rule − G_refined| over a few probe points.
    pub fn quadrature_error(&self) -> f64 {
        self.quadrature_error
    }

    pub fn contains(&self, x: Site) -> bool {
        x.max_abs() <= self.radius
    }

    /// Content hash of the stored values (report provenance).
    pub fn values_hash(&self) -> String {
        let mut h = Sha256::new();
        for v in &self.values {
            h.update(v.to_le_bytes());
        }
        h.update(self.kappa.to_le_bytes());
        hex::encode(h.finalize())
    }

    /// Adds `delta` to the stored G(x). Test-harness fault injection.
    pub fn perturb(&mut self, x: Site, delta: f64) {
        let v = self.g(x);
        self.overrides.insert(x, v + delta);
    }

    /// G(x). Points outside the box fall back to a spectral evaluation.
    pub fn g(&self, x: Site) -> f64 {
        if !self.overrides.is_empty() {
            if let Some(v) = self.overrides.get(&x) {
                return *v;
            }
        }
        if x.max_abs() <= self.radius {
            let side = (2 * self.radius + 1) as usize;
            return self.values[(x.y + self.radius) as usize * side + (x.x + self.radius) as usize];
        }
        self.slow(x)
    }

    fn slow(&self, x: Site) -> f64 {
        if let Some(v) = self.slow_path.lock().expect("slow path cache").get(&x) {
            return *v;
        }
        let v = match &self.rule {
            Some(rule) if x.max_abs() <= (12.8 / rule.spec.max_panel_width).round() as i64 => rule.kernel_at(x),
            Some(_) | None => {
                log::warn!("kernel cache miss at {x:?} beyond rule resolution; using a dedicated rule");
                let law = IncrementLaw::builtin(&self.law_id);
                match law {
                    Some(l) if l.content_hash() == self.law_hash => {
                        kernel_spectral(&l, x).unwrap_or(f64::NAN)
                    }
                    _ => f64::NAN,
                }
            }
        };
        log::debug!("kernel cache miss at {x:?}; spectral slow path");
        self.slow_path.lock().expect("slow path cache").insert(x, v);
        v
    }

    /// Ĝ(√n e₁) := κ − (1/2π) log n.
    pub fn g_at_scale(&self, n: usize) -> f64 {
        self.kappa - (n as f64).ln() / (2.0 * PI)
    }

    /// G_n(x) = G(x) − Ĝ(√n e₁).
    pub fn scaled_kernel(&self, n: usize, x: Site) -> f64 {
        self.g(x) - self.g_at_scale(n)
    }

    /// Cached points with r_min ≤ |x| ≤ r_max.
    pub fn ring(&self, r_min: f64, r_max: f64) -> Vec<(Site, f64)> {
        let mut out = Vec::new();
        let r = self.radius;
        let side = (2 * r + 1) as usize;
        for y in -r..=r {
            for x in -r..=r {
                let s = Site::new(x, y);
                let n = s.norm();
                if n >= r_min && n <= r_max {
                    out.push((s, self.values[(y + r) as usize * side + (x + r) as usize]));
                }
            }
        }
        out
    }

    const MAGIC: &'static [u8; 8] = b"RILTKERN";
    const VERSION: u32 = 1;

    /// Header: magic, version, law hash, quadrature spec (JSON), radius, κ and
    /// its ring, quadrature error, record count. Then (x: i32, y: i32, G: f64)
    /// records, all little endian.
    pub fn write_cache(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        w.write_all(Self::MAGIC)?;
        w.write_all(&Self::VERSION.to_le_bytes())?;
        let law_hash = hex::decode(&self.law_hash).map_err(|e| Error::CacheFormat { path: path.into(), reason: e.to_string() })?;
        w.write_all(&(law_hash.len() as u32).to_le_bytes())?;
        w.write_all(&law_hash)?;
        let law_id = self.law_id.as_bytes();
        w.write_all(&(law_id.len() as u32).to_le_bytes())?;
        w.write_all(law_id)?;
        let spec = serde_json::to_vec(&self.quadrature)?;
        w.write_all(&(spec.len() as u32).to_le_bytes())?;
        w.write_all(&spec)?;
        w.write_all(&(self.radius as u32).to_le_bytes())?;
        for v in [self.kappa, self.kappa_fit_range.0, self.kappa_fit_range.1, self.quadrature_error] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&(self.values.len() as u64).to_le_bytes())?;
        let r = self.radius;
        let side = (2 * r + 1) as usize;
        for y in -r..=r {
            for x in -r..=r {
                w.write_all(&(x as i32).to_le_bytes())?;
                w.write_all(&(y as i32).to_le_bytes())?;
                w.write_all(&self.values[(y + r) as usize * side + (x + r) as usize].to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_cache(path: &Path) -> Result<Self> {
        let bad = |reason: &str| Error::CacheFormat { path: path.to_path_buf(), reason: reason.to_string() };
        let mut r = BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(bad("wrong magic"));
        }
        if read_u32(&mut r)? != Self::VERSION {
            return Err(bad("unsupported version"));
        }
        let n = read_u32(&mut r)? as usize;
        let mut law_hash = vec![0u8; n];
        r.read_exact(&mut law_hash)?;
        let n = read_u32(&mut r)? as usize;
        let mut law_id = vec![0u8; n];
        r.read_exact(&mut law_id)?;
        let n = read_u32(&mut r)? as usize;
        let mut spec = vec![0u8; n];
        r.read_exact(&mut spec)?;
        let quadrature: QuadratureSpec = serde_json::from_slice(&spec)?;
        let radius = read_u32(&mut r)? as i64;
        let kappa = read_f64(&mut r)?;
        let kr = (read_f64(&mut r)?, read_f64(&mut r)?);
        let qerr = read_f64(&mut r)?;
        let count = read_u64(&mut r)? as usize;
        let side = (2 * radius + 1) as usize;
        if count != side * side {
            return Err(bad("record count does not match radius"));
        }
        let mut values = vec![f64::NAN; count];
        for _ in 0..count {
            let x = read_u32(&mut r)? as i32 as i64;
            let y = read_u32(&mut r)? as i32 as i64;
            let v = read_f64(&mut r)?;
            if x.abs() > radius || y.abs() > radius {
                return Err(bad("record outside the declared box"));
            }
            values[(y + radius) as usize * side + (x + radius) as usize] = v;
        }
        Ok(PotentialKernelTable {
            law_id: String::from_utf8_lossy(&law_id).into_owned(),
            law_hash: hex::encode(law_hash),
            radius,
            values,
            kappa,
            kappa_fit_range: kr,
            quadrature,
            quadrature_error: qerr,
            rule: None,
            overrides: HashMap::new(),
            slow_path: Mutex::new(HashMap::new()),
        })
    }
}

/// Cache file path keyed by law hash and quadrature spec.
pub fn cache_path(dir: &Path, law: &IncrementLaw, radius: i64, spec: &QuadratureSpec) -> PathBuf {
    dir.join(format!("kernel-{}-{}-r{radius}.bin", &law.content_hash()[..16], &spec.hash()[..16]))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn kappa_from_values(vals: &[(Site, f64)]) -> f64 {
    vals.iter().map(|(s, g)| g + s.norm().ln() / PI).sum::<f64>() / vals.len() as f64
}

/// Result of fitting G(x) ≈ κ + (1/π) log(1/|x|) on a ring.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KappaFit {
    pub kappa: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub points: usize,
    /// (shell radius, max |G(x) + (1/π) log|x| − κ| over the shell).
    pub residual_profile: Vec<(f64, f64)>,
}

/// Minimum ring population for a κ fit.
pub const MIN_RING_POINTS: usize = 50;

pub fn fit_kappa(table: &PotentialKernelTable, r_min: f64, r_max: f64) -> Result<KappaFit> {
    let pts = table.ring(r_min, r_max);
    if pts.len() < MIN_RING_POINTS {
        return Err(Error::InsufficientRing { found: pts.len(), needed: MIN_RING_POINTS, r_min, r_max });
    }
    let kappa = kappa_from_values(&pts);
    let lo = r_min.round() as i64;
    let hi = r_max.round() as i64;
    let residual_profile = (lo..=hi)
        .filter_map(|r| {
            let v = shell_residual(table, kappa, r as f64);
            v.map(|v| (r as f64, v))
        })
        .collect();
    Ok(KappaFit { kappa, r_min, r_max, points: pts.len(), residual_profile })
}

/// max |G(x) + (1/π) log|x| − κ| over cached x with |x| ∈ [r − ½, r + ½).
pub fn shell_residual(table: &PotentialKernelTable, kappa: f64, r: f64) -> Option<f64> {
    let pts = table.ring(r - 0.5, r + 0.5 - 1e-12);
    if pts.is_empty() {
        return None;
    }
    Some(pts.iter().map(|(s, g)| (g + s.norm().ln() / PI - kappa).abs()).fold(0.0, f64::max))
}

/// Hölder ratio |G(x) − G(y)| / (|x − y| / ((1+|x|) ∧ (1+|y|)))^{2/3}.
pub fn holder_ratio(table: &PotentialKernelTable, x: Site, y: Site) -> Option<f64> {
    if x == y {
        return None;
    }
    let scale = (x - y).norm() / (1.0 + x.norm()).min(1.0 + y.norm());
    Some((table.g(x) - table.g(y)).abs() / scale.powf(2.0 / 3.0))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HolderReport {
    pub pairs: usize,
    pub max_ratio: f64,
    pub worst_pair: (Site, Site),
    pub bounded: bool,
}

/// Max Hölder ratio over the given distinct pairs. `bounded` flags a
/// finite maximum.
pub fn kernel_holder_check(table: &PotentialKernelTable, pairs: &[(Site, Site)]) -> HolderReport {
    let mut best = (0.0, (Site::ORIGIN, Site::ORIGIN));
    let mut count = 0;
    for &(x, y) in pairs {
        if let Some(r) = holder_ratio(table, x, y) {
            count += 1;
            if r > best.0 {
                best = (r, (x, y));
            }
        }
    }
    HolderReport { pairs: count, max_ratio: best.0, worst_pair: best.1, bounded: best.0.is_finite() }
}

/// Smallest c with |G(x)| ≤ c (1 + log⁺|x|) over the cached box.
pub fn log_growth_constant(table: &PotentialKernelTable) -> f64 {
    let r = table.radius();
    let mut c: f64 = 0.0;
    for y in -r..=r {
        for x in -r..=r {
            let s = Site::new(x, y);
            let bound = 1.0 + s.norm().ln().max(0.0);
            c = c.max(table.g(s).abs() / bound);
        }
    }
    c
}

/// |P₁G(z) − G(z) + p(1,0,z)| for the table's G.
pub fn harmonic_residual(table: &PotentialKernelTable, law: &IncrementLaw, z: Site) -> f64 {
    let p1g: f64 = law.weighted_sites().map(|(y, p)| p * table.g(z + y)).sum();
    (p1g - table.g(z) + law.prob_of(z)).abs()
}

/// G at `targets` by summing p(n,0,x) − p(n,0,e₁) over n ≤ `horizon`, for
/// a product law q ⊗ q.
///
/// p(n,0,x) = p₁(n,x₁) p₁(n,x₂) with p₁ by exact 1-D convolution. The partial
/// sums S_N carry a tail A/N + B/N² + C/N³ for symmetric laws, removed by two
/// Richardson steps over N/4, N/2, N.
pub fn kernel_time_sum(law: &IncrementLaw, targets: &[Site], horizon: usize) -> Result<Vec<f64>> {
    if horizon < 4 || horizon % 4 != 0 {
        return Err(Error::OutOfRange(format!("time-sum horizon {horizon} must be a positive multiple of 4")));
    }
    let cp = time_sum_partials(law, targets, &[horizon / 4, horizon / 2, horizon])?;
    Ok((0..targets.len())
        .map(|i| {
            let (s4, s2, s1) = (cp[0][i], cp[1][i], cp[2][i]);
            let a = 2.0 * s2 - s4;
            let b = 2.0 * s1 - s2;
            (4.0 * b - a) / 3.0
        })
        .collect())
}

/// Σ_{n=1}^{N} [p(n,0,x) − p(n,0,e₁)] for each N in the increasing list `at`.
fn time_sum_partials(law: &IncrementLaw, targets: &[Site], at: &[usize]) -> Result<Vec<Vec<f64>>> {
    let factor: Vec<(i64, f64)> = law.product_factor()?.iter().map(|(v, p)| (*v, p.to_f64().unwrap_or(0.0))).collect();
    let jump = factor.iter().map(|f| f.0.unsigned_abs() as usize).max().unwrap_or(1);
    let horizon = at.last().copied().unwrap_or(0);
    let reach = horizon * jump;
    let width = 2 * reach + 1;
    let mut cur = vec![0.0f64; width];
    let mut next = vec![0.0f64; width];
    cur[reach] = 1.0;
    let mut partial = vec![0.0f64; targets.len()];
    let mut out = Vec::with_capacity(at.len());
    for n in 1..=horizon {
        let r = n * jump;
        for i in reach - r..=reach + r {
            next[i] = factor
                .iter()
                .filter_map(|&(d, p)| {
                    let j = i as i64 - d;
                    (j >= 0 && (j as usize) < width).then(|| p * cur[j as usize])
                })
                .sum();
        }
        std::mem::swap(&mut cur, &mut next);
        let at_k = |k: i64| if k.unsigned_abs() as usize <= reach { cur[(reach as i64 + k) as usize] } else { 0.0 };
        let e1 = at_k(1) * at_k(0);
        for (s, t) in partial.iter_mut().zip(targets) {
            *s += at_k(t.x) * at_k(t.y) - e1;
        }
        if at.contains(&n) {
            out.push(partial.clone());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_sum_partials_match_the_planar_recursion() {
        let law = IncrementLaw::default_law();
        let grid = transition_probabilities(&law, 40, 6).unwrap();
        let targets = [Site::ORIGIN, Site::new(3, -2), Site::new(0, 5)];
        let partial = time_sum_partials(&law, &targets, &[40]).unwrap();
        for (i, &t) in targets.iter().enumerate() {
            let direct: f64 = (1..=40).map(|n| grid.p(n, t).unwrap() - grid.p(n, Site::E1).unwrap()).sum();
            assert!((partial[0][i] - direct).abs() < 1e-14);
        }
        let ts = kernel_time_sum(&law, &targets, 4000).unwrap();
        let spec = kernel_spectral(&law, Site::new(3, -2)).unwrap();
        assert!((ts[1] - spec).abs() < 1e-7, "{} vs {spec}", ts[1]);
        assert!(kernel_time_sum(&law, &targets, 6).is_err());
        assert!(matches!(kernel_time_sum(&IncrementLaw::king(), &targets, 8), Err(Error::NotProductLaw { .. })));
    }

    #[test]
    fn one_step_slice_is_the_law() {
        let law = IncrementLaw::default_law();
        let grid = transition_probabilities(&law, 1, 2).unwrap();
        for (s, p) in law.weighted_sites() {
            assert_eq!(grid.p(1, s).unwrap(), p);
        }
        assert_eq!(grid.p(0, Site::ORIGIN), Some(1.0));
    }

    #[test]
    fn two_step_return_probability() {
        let grid = transition_probabilities(&IncrementLaw::default_law(), 2, 4).unwrap();
        let want = (326.0f64 / 1024.0).powi(2);
        assert!((grid.p(2, Site::ORIGIN).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn slices_sum_to_one_and_are_symmetric() {
        let law = IncrementLaw::default_law();
        let grid = transition_probabilities(&law, 30, 12).unwrap();
        for s in grid.slice_sums() {
            assert!((s - 1.0).abs() < 1e-12);
        }
        for n in [1, 7, 30] {
            for y in -12..=12 {
                for x in -12..=12 {
                    let a = grid.p(n, Site::new(x, y)).unwrap();
                    let b = grid.p(n, Site::new(-x, -y)).unwrap();
                    assert!((a - b).abs() < 1e-17);
                }
            }
        }
    }

    #[test]
    fn oversized_box_is_refused() {
        let err = transition_probabilities(&IncrementLaw::default_law(), 2000, 1).unwrap_err();
        assert!(matches!(err, Error::BoxTooLarge { .. }), "{err}");
    }

    #[test]
    fn spectral_refuses_periodic_laws() {
        assert!(matches!(kernel_spectral(&IncrementLaw::simple_random_walk(), Site::ORIGIN), Err(Error::NotAperiodic { .. })));
        assert!(matches!(kernel_spectral(&IncrementLaw::diagonal(), Site::ORIGIN), Err(Error::NotAperiodic { .. })));
    }

    #[test]
    fn kernel_vanishes_at_e1() {
        let law = IncrementLaw::default_law();
        let rule = SpectralRule::new(&law, &QuadratureSpec::for_radius(16)).unwrap();
        let table = rule.kernel_box(4);
        let side = 9;
        assert_eq!(table[4 * side + 5], 0.0);
        assert!(rule.kernel_at(Site::E1).abs() < 1e-13);
        assert!(rule.kernel_at(-Site::E1).abs() < 1e-13);
    }

    #[test]
    fn box_and_pointwise_evaluations_agree() {
        let law = IncrementLaw::default_law();
        let rule = SpectralRule::new(&law, &QuadratureSpec::for_radius(16)).unwrap();
        let b = rule.kernel_box(6);
        for s in [Site::ORIGIN, Site::new(2, -3), Site::new(-6, 6), Site::new(5, 0)] {
            let v = b[(s.y + 6) as usize * 13 + (s.x + 6) as usize];
            assert!((v - rule.kernel_at(s)).abs() < 1e-12, "{s:?}");
        }
    }

    #[test]
    fn synthetic_kappa_fixture() {
        let r = 60;
        let side = (2 * r + 1) as usize;
        let k0 = 0.8125;
        let mut vals = vec![0.0; side * side];
        for y in -r..=r {
            for x in -r..=r {
                let n = Site::new(x, y).norm();
                vals[(y + r) as usize * side + (x + r) as usize] = if n == 0.0 { 0.0 } else { k0 - n.ln() / PI };
            }
        }
        let t = PotentialKernelTable::from_values("fixture", "00", r, vals, 0.0);
        let fit = fit_kappa(&t, 20.0, 50.0).unwrap();
        assert!((fit.kappa - k0).abs() < 1e-13);
        assert!(fit.residual_profile.iter().all(|(_, v)| *v < 1e-13));
        assert!(matches!(fit_kappa(&t, 3.0, 3.5), Err(Error::InsufficientRing { .. })));
    }

    #[test]
    fn scaled_kernel_differences_are_x_free() {
        let r = 3;
        let t = PotentialKernelTable::from_values("fixture", "00", r, vec![0.25; 49], 0.6);
        for (n, m) in [(1usize, 2usize), (16, 1024), (100, 7)] {
            let d = t.scaled_kernel(n, Site::new(1, 2)) - t.scaled_kernel(m, Site::new(1, 2));
            assert!((d - (n as f64 / m as f64).ln() / (2.0 * PI)).abs() < 1e-14);
        }
        assert!((t.scaled_kernel(1, Site::ORIGIN) - (0.25 - 0.6)).abs() < 1e-15);
    }

    #[test]
    fn cache_round_trip() {
        let law = IncrementLaw::default_law();
        let dir = tempfile::tempdir().unwrap();
        let spec = QuadratureSpec::for_radius(16);
        let t = PotentialKernelTable::build_with(&law, 8, &spec).unwrap();
        let path = dir.path().join("k.bin");
        t.write_cache(&path).unwrap();
        let back = PotentialKernelTable::read_cache(&path).unwrap();
        assert_eq!(back.radius(), 8);
        assert_eq!(back.kappa(), t.kappa());
        assert_eq!(back.law_hash(), law.content_hash());
        assert_eq!(back.quadrature_spec(), &spec);
        assert_eq!(back.values_hash(), t.values_hash());
        std::fs::write(&path, b"garbage!").unwrap();
        assert!(PotentialKernelTable::read_cache(&path).is_err());
    }
}
