//! Exact arithmetic in Z[φ], φ² = φ + 1.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::Serialize;

use crate::params::GOLDEN;

/// `a + b φ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Zphi {
    pub a: i64,
    pub b: i64,
}

impl Zphi {
    pub const ZERO: Zphi = Zphi { a: 0, b: 0 };
    pub const ONE: Zphi = Zphi { a: 1, b: 0 };
    pub const PHI: Zphi = Zphi { a: 0, b: 1 };
    /// λ = φ² = 1 + φ
    pub const LAMBDA: Zphi = Zphi { a: 1, b: 1 };
    /// 1/λ = 2 - φ
    pub const LAMBDA_INV: Zphi = Zphi { a: 2, b: -1 };

    pub const fn new(a: i64, b: i64) -> Self {
        Self { a, b }
    }

    pub fn to_f64(self) -> f64 {
        self.a as f64 + self.b as f64 * GOLDEN
    }

    /// Sign of a + bφ. With x = 2a + b, 2(a + bφ) = x + b√5.
    pub fn signum(self) -> i32 {
        let x = 2 * self.a as i128 + self.b as i128;
        let y = self.b as i128;
        let (sx, sy) = (x.signum() as i32, y.signum() as i32);
        if sx == sy || sy == 0 {
            return sx;
        }
        if sx == 0 {
            return sy;
        }
        match (x * x).cmp(&(5 * y * y)) {
            Ordering::Greater => sx,
            Ordering::Less => sy,
            Ordering::Equal => 0,
        }
    }

    pub fn is_positive(self) -> bool {
        self.signum() > 0
    }

    pub fn abs(self) -> Self {
        if self.signum() < 0 {
            -self
        } else {
            self
        }
    }

    pub fn max(self, other: Self) -> Self {
        if self >= other {
            self
        } else {
            other
        }
    }

    pub fn min(self, other: Self) -> Self {
        if self <= other {
            self
        } else {
            other
        }
    }

    pub fn pow(self, n: u32) -> Self {
        (0..n).fold(Zphi::ONE, |acc, _| acc * self)
    }
}

impl From<i64> for Zphi {
    fn from(a: i64) -> Self {
        Zphi { a, b: 0 }
    }
}

impl Add for Zphi {
    type Output = Zphi;
    fn add(self, o: Zphi) -> Zphi {
        Zphi::new(self.a + o.a, self.b + o.b)
    }
}

impl Sub for Zphi {
    type Output = Zphi;
    fn sub(self, o: Zphi) -> Zphi {
        Zphi::new(self.a - o.a, self.b - o.b)
    }
}

impl Neg for Zphi {
    type Output = Zphi;
    fn neg(self) -> Zphi {
        Zphi::new(-self.a, -self.b)
    }
}

impl Mul for Zphi {
    type Output = Zphi;
    fn mul(self, o: Zphi) -> Zphi {
        let bd = self.b * o.b;
        Zphi::new(self.a * o.a + bd, self.a * o.b + self.b * o.a + bd)
    }
}

impl PartialOrd for Zphi {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Zphi {
    fn cmp(&self, other: &Self) -> Ordering {
        (*self - *other).signum().cmp(&0)
    }
}

impl fmt::Display for Zphi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{:+}φ", self.a, self.b)
    }
}

/// Closed interval [lo, hi] in Z[φ].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Interval {
    pub lo: Zphi,
    pub hi: Zphi,
}

impl Interval {
    pub fn new(lo: Zphi, hi: Zphi) -> Self {
        Self { lo, hi }
    }

    pub fn len(&self) -> Zphi {
        self.hi - self.lo
    }

    pub fn scale(&self, k: Zphi) -> Self {
        // only positive scalings occur
        Self::new(self.lo * k, self.hi * k)
    }

    pub fn shift(&self, d: Zphi) -> Self {
        Self::new(self.lo + d, self.hi + d)
    }

    pub fn contains(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    /// Overlap with positive length.
    pub fn overlaps(&self, other: &Interval) -> bool {
        self.lo.max(other.lo) < self.hi.min(other.hi)
    }

    pub fn contains_f64(&self, x: f64) -> bool {
        self.lo.to_f64() <= x && x < self.hi.to_f64()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unit_identities() {
        assert_eq!(Zphi::PHI * Zphi::PHI, Zphi::PHI + Zphi::ONE);
        assert_eq!(Zphi::LAMBDA * Zphi::LAMBDA_INV, Zphi::ONE);
        assert_eq!(Zphi::LAMBDA_INV.signum(), 1);
        assert_eq!(Zphi::new(-1, 1).signum(), 1);
        assert_eq!(Zphi::new(2, -1).signum(), 1);
        assert_eq!(Zphi::new(1, -1).signum(), -1);
    }

    proptest! {
        #[test]
        fn sign_agrees_with_float(a in -100_000i64..100_000, b in -100_000i64..100_000) {
            let z = Zphi::new(a, b);
            let f = z.to_f64();
            if f.abs() > 1e-6 {
                prop_assert_eq!(z.signum(), f.signum() as i32);
            }
            prop_assert_eq!(z.signum() == 0, a == 0 && b == 0);
        }

        #[test]
        fn product_agrees_with_float(a in -1000i64..1000, b in -1000i64..1000, c in -1000i64..1000, d in -1000i64..1000) {
            let (x, y) = (Zphi::new(a, b), Zphi::new(c, d));
            let want = x.to_f64() * y.to_f64();
            prop_assert!(((x * y).to_f64() - want).abs() <= 1e-9 * want.abs().max(1.0));
        }
    }
}
