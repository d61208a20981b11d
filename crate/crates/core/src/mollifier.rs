//! Radial bump f supported on the annulus ½ ≤ |y| ≤ 1 with ∫f = 1, its
//! rescalings f_τ(x) = τ⁻² f(x/τ), and the log moment
//! l(f) = (1/π) ∫ f(y) log(1/|y|) dy.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::quadrature::{composite, GaussLegendre};

fn profile(r: f64) -> f64 {
    if r <= 0.5 || r >= 1.0 {
        0.0
    } else {
        (-1.0 / ((r - 0.5) * (1.0 - r))).exp()
    }
}

/// ∫_{½}^{1} g(r) profile(r) r dr on a fine composite rule. The profile is
/// flat to all orders at both ends, so the rule converges quickly.
fn radial_integral(g: impl Fn(f64) -> f64) -> f64 {
    let rule = GaussLegendre::new(32);
    composite(&rule, &[0.5, 1.0], 1.0 / 64.0)
        .into_iter()
        .map(|(r, w)| w * profile(r) * r * g(r))
        .sum()
}

struct Constants {
    normalization: f64,
    log_moment: f64,
}

fn constants() -> &'static Constants {
    static C: OnceLock<Constants> = OnceLock::new();
    C.get_or_init(|| {
        let normalization = 1.0 / (2.0 * PI * radial_integral(|_| 1.0));
        let log_moment = normalization * 2.0 * radial_integral(|r| -r.ln());
        Constants { normalization, log_moment }
    })
}

/// The mollifier at width τ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mollifier {
    tau: f64,
}

impl Mollifier {
    pub fn new(tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::OutOfRange(format!("mollifier width {tau} outside (0, 1]")));
        }
        Ok(Mollifier { tau })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// c with ∫ c·exp(−1/((|y|−½)(1−|y|))) dy = 1.
    pub fn normalization() -> f64 {
        constants().normalization
    }

    /// l(f) for the unit-width bump.
    pub fn base_log_moment() -> f64 {
        constants().log_moment
    }

    /// l(f_τ) = l(f) + (1/π) log(1/τ).
    pub fn log_moment(&self) -> f64 {
        Self::base_log_moment() + (1.0 / self.tau).ln() / PI
    }

    /// f_τ at a point given by its squared norm.
    pub fn eval_norm_sq(&self, r2: f64) -> f64 {
        let t2 = self.tau * self.tau;
        if r2 <= 0.25 * t2 || r2 >= t2 {
            return 0.0;
        }
        constants().normalization * profile(r2.sqrt() / self.tau) / t2
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        self.eval_norm_sq(x[0] * x[0] + x[1] * x[1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mass(m: &Mollifier) -> f64 {
        // polar quadrature of f_τ over its support
        let rule = GaussLegendre::new(32);
        let t = m.tau();
        composite(&rule, &[0.5 * t, t], t / 64.0)
            .into_iter()
            .map(|(r, w)| w * 2.0 * PI * r * m.eval([r, 0.0]))
            .sum()
    }

    #[test]
    fn unit_mass_at_every_width() {
        for tau in [1.0, 0.5, 0.2, 0.05, 0.003] {
            let m = Mollifier::new(tau).unwrap();
            assert!((mass(&m) - 1.0).abs() < 1e-12, "tau={tau}");
        }
    }

    #[test]
    fn mass_by_cartesian_riemann_sum() {
        let m = Mollifier::new(1.0).unwrap();
        let h = 1.0 / 400.0;
        let mut s = 0.0;
        for i in -400..=400 {
            for j in -400..=400 {
                s += m.eval([i as f64 * h, j as f64 * h]);
            }
        }
        assert!((s * h * h - 1.0).abs() < 1e-8, "{}", s * h * h);
    }

    #[test]
    fn support_is_the_annulus() {
        let m = Mollifier::new(0.1).unwrap();
        assert_eq!(m.eval([0.049, 0.0]), 0.0);
        assert_eq!(m.eval([0.0, 0.1]), 0.0);
        assert_eq!(m.eval([0.2, 0.0]), 0.0);
        assert!(m.eval([0.075, 0.0]) > 0.0);
    }

    #[test]
    fn log_moment_scaling() {
        let base = Mollifier::base_log_moment();
        // log(1/|y|) lies in (0, log 2) on the support
        assert!(base > 0.0 && base < 2.0f64.ln() / PI);
        for tau in [0.2, 0.1, 0.05] {
            let m = Mollifier::new(tau).unwrap();
            let rule = GaussLegendre::new(32);
            let direct: f64 = composite(&rule, &[0.5 * tau, tau], tau / 64.0)
                .into_iter()
                .map(|(r, w)| w * 2.0 * PI * r * m.eval([r, 0.0]) * (1.0 / r).ln() / PI)
                .sum();
            assert!((direct - m.log_moment()).abs() < 1e-12);
        }
    }

    #[test]
    fn width_is_checked() {
        assert!(Mollifier::new(0.0).is_err());
        assert!(Mollifier::new(1.5).is_err());
    }
}
