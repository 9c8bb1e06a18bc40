//! Double-double arithmetic (an unevaluated sum `hi + lo` of two f64s,
//! about 106 significant bits) with the handful of elementary functions
//! the network uses. Only used to evaluate finite differences far below
//! f64 rounding noise.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, Default, PartialEq, PartialOrd)]
pub struct Dd {
    hi: f64,
    lo: f64,
}

const LN2: Dd = Dd {
    hi: 0.6931471805599453,
    lo: 2.3190468138462996e-17,
};

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn new(hi: f64, lo: f64) -> Self {
        let (hi, lo) = two_sum(hi, lo);
        Dd { hi, lo }
    }

    pub fn hi(self) -> f64 {
        self.hi
    }

    pub fn lo(self) -> f64 {
        self.lo
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn abs(self) -> Dd {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }

    /// Multiplication by a power of two, exact barring over/underflow.
    fn ldexp(self, k: i32) -> Dd {
        let s = 2f64.powi(k);
        Dd {
            hi: self.hi * s,
            lo: self.lo * s,
        }
    }

    pub fn exp(self) -> Dd {
        if self.hi > 709.0 {
            return Dd::from(f64::INFINITY);
        }
        if self.hi < -745.0 {
            return Dd::ZERO;
        }
        // x = k·ln2 + r with |r| ≤ ln2/2
        let k = (self.hi / LN2.hi).round();
        let r = self - LN2 * Dd::from(k);
        (Dd::ONE + r.expm1_reduced()).ldexp(k as i32)
    }

    /// `e^x − 1` without cancellation for small `x`.
    pub fn exp_m1(self) -> Dd {
        if self.hi.abs() < 0.34 {
            self.expm1_reduced()
        } else {
            self.exp() - Dd::ONE
        }
    }

    /// `e^r − 1` for `|r| ≤ ln2/2`: Taylor series at `r/1024`, then ten
    /// doublings of `(1 + s)² − 1 = 2s + s²`.
    fn expm1_reduced(self) -> Dd {
        let r = self.ldexp(-10);
        let mut s = Dd::ZERO;
        let mut term = Dd::ONE;
        for n in 1..=14 {
            term = term * r / Dd::from(n as f64);
            s += term;
            if term.hi.abs() < 1e-36 * s.hi.abs() {
                break;
            }
        }
        for _ in 0..10 {
            s = s.ldexp(1) + s * s;
        }
        s
    }

    pub fn ln(self) -> Dd {
        if !(self.hi > 0.0) {
            return Dd::from(if self.hi == 0.0 { f64::NEG_INFINITY } else { f64::NAN });
        }
        // Newton on exp(y) = x, quadratically convergent from the f64 guess
        let mut y = Dd::from(self.hi.ln());
        for _ in 0..2 {
            y = y + self * (-y).exp() - Dd::ONE;
        }
        y
    }

    pub fn tanh(self) -> Dd {
        let a = self.abs();
        // (e^2a − 1) / (e^2a + 1)
        let s = a.ldexp(1).exp_m1();
        let t = if s.hi.is_infinite() {
            Dd::ONE
        } else {
            s / (s + Dd::from(2.0))
        };
        if self.hi < 0.0 {
            -t
        } else {
            t
        }
    }
}

impl From<f64> for Dd {
    fn from(v: f64) -> Self {
        Dd { hi: v, lo: 0.0 }
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, b: Dd) -> Dd {
        let (s1, s2) = two_sum(self.hi, b.hi);
        if !s1.is_finite() {
            return Dd::from(s1);
        }
        let (t1, t2) = two_sum(self.lo, b.lo);
        let (s1, s2) = quick_two_sum(s1, s2 + t1);
        let (hi, lo) = quick_two_sum(s1, s2 + t2);
        Dd { hi, lo }
    }
}

impl AddAssign for Dd {
    fn add_assign(&mut self, b: Dd) {
        *self = *self + b;
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, b: Dd) -> Dd {
        self + (-b)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, b: Dd) -> Dd {
        let (p1, p2) = two_prod(self.hi, b.hi);
        let p2 = p2 + (self.hi * b.lo + self.lo * b.hi);
        let (hi, lo) = quick_two_sum(p1, p2);
        if hi.is_finite() {
            Dd { hi, lo }
        } else {
            Dd { hi, lo: 0.0 }
        }
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, b: Dd) -> Dd {
        let q1 = self.hi / b.hi;
        if !q1.is_finite() {
            return Dd::from(q1);
        }
        let r = self - b * Dd::from(q1);
        let q2 = r.hi / b.hi;
        let r = r - b * Dd::from(q2);
        let q3 = r.hi / b.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo } + Dd::from(q3)
    }
}
