//! Sums of a short-range radial weight over pairs and time-ordered chains
//! of points, visiting only pairs within the weight's range.
//!
//! Lattice paths use a dense occupancy box and a row-wise stencil; points
//! in the plane use square cells whose side is the weight's range.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::lattice::Site;

/// Cells allowed in a dense occupancy box.
pub const MAX_BOX_CELLS: u128 = 1 << 28;

/// A symmetric weight on lattice offsets |y| ≤ radius, stored row by row.
#[derive(Debug, Clone)]
pub struct LatticeStencil {
    radius: i64,
    /// (dy, first dx, weights for dx = first, first + 1, …); zero rows dropped.
    rows: Vec<(i64, i64, Vec<f64>)>,
    total: f64,
}

impl LatticeStencil {
    /// Tabulates `w` on the square |y|∞ ≤ radius, trimming zero margins per row.
    pub fn new(radius: i64, w: impl Fn(Site) -> f64) -> Self {
        let mut rows = Vec::new();
        let mut total = 0.0;
        for dy in -radius..=radius {
            let vals: Vec<f64> = (-radius..=radius).map(|dx| w(Site::new(dx, dy))).collect();
            let Some(first) = vals.iter().position(|v| *v != 0.0) else {
                continue;
            };
            let last = vals.iter().rposition(|v| *v != 0.0).expect("row has a nonzero");
            total += vals.iter().sum::<f64>();
            rows.push((dy, first as i64 - radius, vals[first..=last].to_vec()));
        }
        LatticeStencil { radius, rows, total }
    }

    pub fn radius(&self) -> i64 {
        self.radius
    }

    /// Σ_y w(y).
    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn support_size(&self) -> usize {
        self.rows.iter().map(|r| r.2.len()).sum()
    }

    pub fn weight(&self, y: Site) -> f64 {
        for (dy, first, vals) in &self.rows {
            if *dy == y.y {
                let i = y.x - first;
                return if i >= 0 && (i as usize) < vals.len() { vals[i as usize] } else { 0.0 };
            }
        }
        0.0
    }
}

/// Dense box covering a path with a margin, holding one f64 per site.
#[derive(Debug, Clone)]
pub struct DenseField {
    lo: Site,
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl DenseField {
    pub fn covering(points: &[Site], margin: i64) -> Result<Self> {
        let (mut lo, mut hi) = (points[0], points[0]);
        for p in points {
            lo = Site::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Site::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        let lo = Site::new(lo.x - margin, lo.y - margin);
        let width = (hi.x - lo.x + margin + 1) as usize;
        let height = (hi.y - lo.y + margin + 1) as usize;
        let cells = width as u128 * height as u128;
        if cells > MAX_BOX_CELLS {
            return Err(Error::MemoryBudget { what: "dense occupancy box".into(), needed: cells, limit: MAX_BOX_CELLS });
        }
        Ok(DenseField { lo, width, height, data: vec![0.0; width * height] })
    }

    fn index(&self, s: Site) -> usize {
        (s.y - self.lo.y) as usize * self.width + (s.x - self.lo.x) as usize
    }

    pub fn add(&mut self, s: Site, v: f64) {
        let i = self.index(s);
        self.data[i] += v;
    }

    pub fn get(&self, s: Site) -> f64 {
        self.data[self.index(s)]
    }

    /// Σ_y w(y) · field(center + y). `center` must sit at least the stencil
    /// radius inside the box.
    pub fn stencil_dot(&self, center: Site, stencil: &LatticeStencil) -> f64 {
        let mut s = 0.0;
        for (dy, first, vals) in &stencil.rows {
            let start = self.index(Site::new(center.x + first, center.y + dy));
            let row = &self.data[start..start + vals.len()];
            s += row.iter().zip(vals).map(|(a, b)| a * b).sum::<f64>();
        }
        s
    }

    pub fn height(&self) -> usize {
        self.height
    }
}

/// Σ_{0≤i<j≤n} w(X_j − X_i) for a symmetric stencil with w(0) = 0.
///
/// Equals ½ Σ_a L_a Σ_y w(y) L_{a+y} with L the local times.
pub fn lattice_pair_sum(positions: &[Site], stencil: &LatticeStencil) -> Result<f64> {
    if stencil.weight(Site::ORIGIN) != 0.0 {
        return Err(Error::OutOfRange("pair sums by local times need w(0) = 0".into()));
    }
    let mut field = DenseField::covering(positions, stencil.radius())?;
    let mut sites: Vec<Site> = Vec::new();
    for &p in positions {
        if field.get(p) == 0.0 {
            sites.push(p);
        }
        field.add(p, 1.0);
    }
    let s: f64 = sites.iter().map(|&a| field.get(a) * field.stencil_dot(a, stencil)).sum();
    Ok(0.5 * s)
}

/// Time-ordered chain sums h_m(i) = Σ_{l<i} w(X_i − X_l) h_{m−1}(l), h₁ ≡ 1,
/// returning Σ_i h_m(i) for m = 1..=k.
pub fn lattice_chain_sums(positions: &[Site], stencil: &LatticeStencil, k: usize) -> Result<Vec<f64>> {
    let n1 = positions.len();
    let mut prev = vec![1.0; n1];
    let mut out = vec![n1 as f64];
    let mut field = DenseField::covering(positions, stencil.radius())?;
    for _ in 2..=k {
        let mut cur = vec![0.0; n1];
        for (i, &p) in positions.iter().enumerate() {
            // w symmetric: Σ_y w(y) H(X_i − y) = Σ_y w(y) H(X_i + y)
            cur[i] = field.stencil_dot(p, stencil);
            field.add(p, prev[i]);
        }
        for &p in positions {
            let i = field.index(p);
            field.data[i] = 0.0;
        }
        out.push(cur.iter().sum());
        prev = cur;
    }
    Ok(out)
}

/// Points in the plane bucketed by square cells.
struct Cells {
    side: f64,
    map: HashMap<(i64, i64), Vec<u32>>,
}

impl Cells {
    fn new(side: f64) -> Self {
        Cells { side, map: HashMap::new() }
    }

    fn key(&self, p: [f64; 2]) -> (i64, i64) {
        ((p[0] / self.side).floor() as i64, (p[1] / self.side).floor() as i64)
    }

    fn insert(&mut self, p: [f64; 2], idx: u32) {
        self.map.entry(self.key(p)).or_default().push(idx);
    }
}

/// Time-ordered chain integrals over a uniformly sampled planar path.
///
/// With a₁ ≡ 1 and a_j(t_i) = Σ_{l<i} w(P_i − P_l) a_{j−1}(t_l) δ, returns
/// Σ_i a_j(t_i) δ for j = 2..=k (index 0 holds j = 2). `range` bounds the
/// support of w; `w` receives the squared distance.
pub fn planar_chain_integrals(points: &[[f64; 2]], step: f64, range: f64, k: usize, w: impl Fn(f64) -> f64) -> Vec<f64> {
    let n = points.len();
    let r2 = range * range;
    let mut prev = vec![1.0; n];
    let mut out = Vec::new();
    for _ in 2..=k {
        let mut cells = Cells::new(range);
        let mut cur = vec![0.0; n];
        for i in 0..n {
            let p = points[i];
            let (cx, cy) = cells.key(p);
            let mut acc = 0.0;
            for dx in -1..=1 {
                for dy in -1..=1 {
                    if let Some(list) = cells.map.get(&(cx + dx, cy + dy)) {
                        for &l in list {
                            let q = points[l as usize];
                            let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
                            if d2 < r2 {
                                acc += w(d2) * prev[l as usize];
                            }
                        }
                    }
                }
            }
            cur[i] = acc * step;
            cells.insert(p, i as u32);
        }
        out.push(cur.iter().sum::<f64>() * step);
        prev = cur;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::increment_law::IncrementLaw;
    use crate::walk::simulate;

    fn ring_weight(y: Site) -> f64 {
        let r = y.norm();
        if (1.5..4.0).contains(&r) {
            1.0 / r
        } else {
            0.0
        }
    }

    #[test]
    fn lattice_pair_sum_matches_direct_loop() {
        let path = simulate(&IncrementLaw::default_law(), 400, 1, 1);
        let st = LatticeStencil::new(4, ring_weight);
        let p = path.positions();
        let mut direct = 0.0;
        for j in 0..p.len() {
            for i in 0..j {
                direct += ring_weight(p[j] - p[i]);
            }
        }
        let fast = lattice_pair_sum(p, &st).unwrap();
        assert!((fast - direct).abs() < 1e-9 * direct.abs().max(1.0));
        let chain = lattice_chain_sums(p, &st, 3).unwrap();
        assert!((chain[1] - direct).abs() < 1e-9 * direct.abs().max(1.0));
    }

    #[test]
    fn lattice_triples_match_direct_loop() {
        let path = simulate(&IncrementLaw::default_law(), 60, 2, 2);
        let p = path.positions();
        let st = LatticeStencil::new(4, ring_weight);
        let mut direct = 0.0;
        for a in 0..p.len() {
            for b in a + 1..p.len() {
                for c in b + 1..p.len() {
                    direct += ring_weight(p[b] - p[a]) * ring_weight(p[c] - p[b]);
                }
            }
        }
        let chain = lattice_chain_sums(p, &st, 3).unwrap();
        assert!((chain[2] - direct).abs() < 1e-9 * direct.max(1.0));
    }

    #[test]
    fn stencil_lookup() {
        let st = LatticeStencil::new(4, ring_weight);
        assert_eq!(st.weight(Site::new(2, 0)), 0.5);
        assert_eq!(st.weight(Site::ORIGIN), 0.0);
        assert_eq!(st.weight(Site::new(9, 9)), 0.0);
    }

    #[test]
    fn planar_pairs_match_direct_loop() {
        let pts: Vec<[f64; 2]> = (0..500).map(|i| {
            let t = i as f64 * 0.05;
            [t.sin() * (1.0 + 0.1 * t), (1.3 * t).cos()]
        }).collect();
        let w = |d2: f64| if d2 < 0.09 { 1.0 - d2 } else { 0.0 };
        let step = 0.002;
        let mut direct = 0.0;
        for i in 0..pts.len() {
            for l in 0..i {
                let d2 = (pts[i][0] - pts[l][0]).powi(2) + (pts[i][1] - pts[l][1]).powi(2);
                direct += w(d2);
            }
        }
        direct *= step * step;
        let got = planar_chain_integrals(&pts, step, 0.3, 2, w);
        assert!((got[0] - direct).abs() < 1e-12 * direct.max(1.0));
    }
}
