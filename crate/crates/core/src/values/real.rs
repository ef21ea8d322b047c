//! A real number that stays an exact rational for as long as every input
//! is rational, and degrades to `f64` once a float enters the computation.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

#[derive(Clone)]
pub enum Real {
    Exact(BigRational),
    Float(f64),
}

impl Real {
    pub fn int(n: i64) -> Self {
        Real::Exact(BigRational::from_integer(BigInt::from(n)))
    }

    /// `num / den` as an exact rational. Panics on a zero denominator.
    pub fn ratio(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        Real::Exact(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn float(x: f64) -> Self {
        Real::Float(x)
    }

    /// The exact dyadic rational equal to `x`. Panics on non-finite input.
    pub fn dyadic(x: f64) -> Self {
        Real::Exact(BigRational::from_float(x).expect("finite float"))
    }

    pub fn zero() -> Self {
        Real::int(0)
    }

    pub fn one() -> Self {
        Real::int(1)
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Real::Exact(_))
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Real::Exact(r) => r.to_f64().unwrap_or(f64::NAN),
            Real::Float(x) => *x,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Real::Exact(r) => r.is_zero(),
            Real::Float(x) => *x == 0.0,
        }
    }

    pub fn abs(&self) -> Self {
        match self {
            Real::Exact(r) => Real::Exact(r.abs()),
            Real::Float(x) => Real::Float(x.abs()),
        }
    }

    pub fn max(self, o: Self) -> Self {
        if o > self {
            o
        } else {
            self
        }
    }

    pub fn min(self, o: Self) -> Self {
        if o < self {
            o
        } else {
            self
        }
    }

    /// Positive part `max(x, 0)`.
    pub fn pos(&self) -> Self {
        self.clone().max(Real::zero())
    }

    /// `|x|^p` as a float (used by `L^p` norms with `p ∉ {1, ∞}`).
    pub fn abs_powf(&self, p: f64) -> f64 {
        self.to_f64().abs().powf(p)
    }

    fn combine(
        &self,
        o: &Self,
        exact: impl FnOnce(&BigRational, &BigRational) -> BigRational,
        float: impl FnOnce(f64, f64) -> f64,
    ) -> Self {
        match (self, o) {
            (Real::Exact(a), Real::Exact(b)) => Real::Exact(exact(a, b)),
            _ => Real::Float(float(self.to_f64(), o.to_f64())),
        }
    }
}

impl From<i64> for Real {
    fn from(n: i64) -> Self {
        Real::int(n)
    }
}

impl From<f64> for Real {
    fn from(x: f64) -> Self {
        Real::Float(x)
    }
}

impl fmt::Debug for Real {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Real::Exact(r) => write!(f, "{r}"),
            Real::Float(x) => write!(f, "{x:e}"),
        }
    }
}

impl fmt::Display for Real {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl PartialEq for Real {
    fn eq(&self, o: &Self) -> bool {
        self.partial_cmp(o) == Some(Ordering::Equal)
    }
}

impl PartialOrd for Real {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        match (self, o) {
            (Real::Exact(a), Real::Exact(b)) => Some(a.cmp(b)),
            _ => self.to_f64().partial_cmp(&o.to_f64()),
        }
    }
}

impl Add for &Real {
    type Output = Real;
    fn add(self, o: &Real) -> Real {
        self.combine(o, |a, b| a + b, |a, b| a + b)
    }
}

impl Sub for &Real {
    type Output = Real;
    fn sub(self, o: &Real) -> Real {
        self.combine(o, |a, b| a - b, |a, b| a - b)
    }
}

impl Mul for &Real {
    type Output = Real;
    fn mul(self, o: &Real) -> Real {
        self.combine(o, |a, b| a * b, |a, b| a * b)
    }
}

impl Div for &Real {
    type Output = Real;
    fn div(self, o: &Real) -> Real {
        match (self, o) {
            (Real::Exact(a), Real::Exact(b)) if !b.is_zero() => Real::Exact(a / b),
            _ => Real::Float(self.to_f64() / o.to_f64()),
        }
    }
}

impl Neg for &Real {
    type Output = Real;
    fn neg(self) -> Real {
        match self {
            Real::Exact(r) => Real::Exact(-r),
            Real::Float(x) => Real::Float(-x),
        }
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl $tr for Real {
            type Output = Real;
            fn $m(self, o: Real) -> Real {
                (&self).$m(&o)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);
forward_owned!(Div, div);

impl Neg for Real {
    type Output = Real;
    fn neg(self) -> Real {
        -(&self)
    }
}

impl std::iter::Sum for Real {
    fn sum<I: Iterator<Item = Real>>(it: I) -> Real {
        it.fold(Real::zero(), |a, b| a + b)
    }
}

/// Checks whether a rational equals one (handy in tests of normalization).
pub fn is_one(r: &Real) -> bool {
    match r {
        Real::Exact(q) => q.is_one(),
        Real::Float(x) => *x == 1.0,
    }
}
