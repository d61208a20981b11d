//! Points of the integer lattice Z².

use std::fmt;
use std::ops::{Add, AddAssign, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Site {
    pub x: i64,
    pub y: i64,
}

impl Site {
    pub const ORIGIN: Site = Site { x: 0, y: 0 };
    pub const E1: Site = Site { x: 1, y: 0 };

    pub const fn new(x: i64, y: i64) -> Self {
        Site { x, y }
    }

    pub fn norm(self) -> f64 {
        ((self.x * self.x + self.y * self.y) as f64).sqrt()
    }

    pub fn norm_sq(self) -> i64 {
        self.x * self.x + self.y * self.y
    }

    pub fn max_abs(self) -> i64 {
        self.x.abs().max(self.y.abs())
    }

    /// Packs both coordinates into one 64-bit hash key (32 bits each).
    pub fn packed(self) -> u64 {
        ((self.x as i32 as u32 as u64) << 32) | (self.y as i32 as u32 as u64)
    }

    /// Nearest lattice point to a real point, ties resolved toward −∞ in each coordinate.
    pub fn round_from(p: [f64; 2]) -> Site {
        let r = |v: f64| (v - 0.5).ceil() as i64;
        Site::new(r(p[0]), r(p[1]))
    }
}

impl Add for Site {
    type Output = Site;
    fn add(self, o: Site) -> Site {
        Site::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Site {
    fn add_assign(&mut self, o: Site) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Site {
    type Output = Site;
    fn sub(self, o: Site) -> Site {
        Site::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for Site {
    type Output = Site;
    fn neg(self) -> Site {
        Site::new(-self.x, -self.y)
    }
}

impl fmt::Debug for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.x, self.y)
    }
}

impl std::str::FromStr for Site {
    type Err = String;

    /// Parses `"x,y"`.
    fn from_str(s: &str) -> Result<Self, String> {
        let mut it = s.split(',').map(|t| t.trim().parse::<i64>());
        match (it.next(), it.next(), it.next()) {
            (Some(Ok(x)), Some(Ok(y)), None) => Ok(Site::new(x, y)),
            _ => Err(format!("expected `x,y` lattice point, got `{s}`")),
        }
    }
}
