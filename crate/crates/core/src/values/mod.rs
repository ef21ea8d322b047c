//! Concrete value spaces: scalars, fixed-dimension vectors, piecewise-constant
//! functions on `[0,1]`, and functions on the full shift.

pub mod pwc;
pub mod real;
pub mod shift;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use pwc::{PwcError, PwcFunction};
pub use real::Real;
pub use shift::{Regime, ShiftFn, ShiftSampling, WordMeasure};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValueError {
    #[error("values of kinds {0} and {1} cannot be combined")]
    Mismatch(&'static str, &'static str),
    #[error("vector dimensions differ: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("the {0} space carries no lattice order")]
    Unordered(&'static str),
    #[error("lattice operation on {0} values has no closed-form representation; use order_excess")]
    Unrepresentable(&'static str),
    #[error("norm exponent must lie in [1, inf], got {0}")]
    Exponent(f64),
}

/// An element of one of the supported value spaces.
#[derive(Clone, Debug)]
pub enum Value {
    Scalar(Real),
    Vector(Vec<f64>),
    Pwc(PwcFunction),
    Shift(ShiftFn),
}

impl Value {
    pub fn kind(&self) -> &'static str {
        match self {
            Value::Scalar(_) => "scalar",
            Value::Vector(_) => "vector",
            Value::Pwc(_) => "pwc",
            Value::Shift(_) => "shift",
        }
    }

    pub fn as_pwc(&self) -> Option<&PwcFunction> {
        match self {
            Value::Pwc(f) => Some(f),
            _ => None,
        }
    }

    pub fn as_vector(&self) -> Option<&[f64]> {
        match self {
            Value::Vector(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_shift(&self) -> Option<&ShiftFn> {
        match self {
            Value::Shift(f) => Some(f),
            _ => None,
        }
    }

    pub fn as_scalar(&self) -> Option<&Real> {
        match self {
            Value::Scalar(r) => Some(r),
            _ => None,
        }
    }

    pub fn add(&self, o: &Value) -> Result<Value, ValueError> {
        Ok(match (self, o) {
            (Value::Scalar(a), Value::Scalar(b)) => Value::Scalar(a + b),
            (Value::Vector(a), Value::Vector(b)) => {
                if a.len() != b.len() {
                    return Err(ValueError::Dimension(a.len(), b.len()));
                }
                Value::Vector(a.iter().zip(b).map(|(x, y)| x + y).collect())
            }
            (Value::Pwc(a), Value::Pwc(b)) => Value::Pwc(a.add(b)),
            (Value::Shift(a), Value::Shift(b)) => Value::Shift(a.add(b)),
            _ => return Err(ValueError::Mismatch(self.kind(), o.kind())),
        })
    }

    pub fn sub(&self, o: &Value) -> Result<Value, ValueError> {
        self.add(&o.neg())
    }

    pub fn neg(&self) -> Value {
        self.scale_real(&Real::int(-1))
    }

    /// Multiplication by a scalar, exact on exact kinds when `c` is exact.
    pub fn scale_real(&self, c: &Real) -> Value {
        match self {
            Value::Scalar(a) => Value::Scalar(a * c),
            Value::Vector(a) => {
                let c = c.to_f64();
                Value::Vector(a.iter().map(|x| x * c).collect())
            }
            Value::Pwc(f) => Value::Pwc(f.scale(c)),
            Value::Shift(f) => Value::Shift(f.scale(c.to_f64())),
        }
    }

    pub fn scale(&self, c: f64) -> Value {
        self.scale_real(&Real::float(c))
    }

    /// `self / n`, exact when possible.
    pub fn div_count(&self, n: usize) -> Value {
        self.scale_real(&Real::ratio(1, n as i64))
    }

    fn lattice(&self, o: &Value, op: &str) -> Result<Value, ValueError> {
        match (self, o) {
            (Value::Scalar(a), Value::Scalar(b)) => Ok(Value::Scalar(match op {
                "join" => a.clone().max(b.clone()),
                _ => a.clone().min(b.clone()),
            })),
            (Value::Pwc(a), Value::Pwc(b)) => Ok(Value::Pwc(if op == "join" { a.join(b) } else { a.meet(b) })),
            (Value::Vector(_), _) => Err(ValueError::Unordered("vector")),
            (Value::Shift(_), Value::Shift(_)) => Err(ValueError::Unrepresentable("shift")),
            _ => Err(ValueError::Mismatch(self.kind(), o.kind())),
        }
    }
}

/// `u ∨ v`.
pub fn lattice_join(u: &Value, v: &Value) -> Result<Value, ValueError> {
    u.lattice(v, "join")
}

/// `u ∧ v`.
pub fn lattice_meet(u: &Value, v: &Value) -> Result<Value, ValueError> {
    u.lattice(v, "meet")
}

/// `|u|`.
pub fn lattice_abs(u: &Value) -> Result<Value, ValueError> {
    match u {
        Value::Scalar(a) => Ok(Value::Scalar(a.abs())),
        Value::Pwc(f) => Ok(Value::Pwc(f.abs())),
        Value::Vector(_) => Err(ValueError::Unordered("vector")),
        Value::Shift(_) => Err(ValueError::Unrepresentable("shift")),
    }
}

/// `∫_0^1 f`.
pub fn integral(f: &PwcFunction) -> Real {
    f.integral()
}

/// Value-space kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpaceKind {
    Scalar,
    Vector(usize),
    Pwc,
    Shift,
}

/// A value space together with its norm exponent and sampling rules.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueSpace {
    pub kind: SpaceKind,
    /// Norm exponent `p ∈ [1, ∞]`.
    pub p: f64,
    pub sampling: ShiftSampling,
}

impl ValueSpace {
    pub fn scalar() -> Self {
        Self { kind: SpaceKind::Scalar, p: 1.0, sampling: ShiftSampling::default() }
    }

    pub fn vector(m: usize) -> Self {
        Self { kind: SpaceKind::Vector(m), p: 2.0, sampling: ShiftSampling::default() }
    }

    pub fn pwc(p: f64) -> Self {
        Self { kind: SpaceKind::Pwc, p, sampling: ShiftSampling::default() }
    }

    /// Bounded functions on the shift with the sup norm.
    pub fn shift_sup(sampling: ShiftSampling) -> Self {
        Self { kind: SpaceKind::Shift, p: f64::INFINITY, sampling }
    }

    /// `L^p` of the Bernoulli(`sampling.prob`) measure.
    pub fn shift_lp(p: f64, sampling: ShiftSampling) -> Self {
        Self { kind: SpaceKind::Shift, p, sampling }
    }

    pub fn is_ordered(&self) -> bool {
        !matches!(self.kind, SpaceKind::Vector(_))
    }

    pub fn zero(&self) -> Value {
        match self.kind {
            SpaceKind::Scalar => Value::Scalar(Real::zero()),
            SpaceKind::Vector(m) => Value::Vector(vec![0.0; m]),
            SpaceKind::Pwc => Value::Pwc(PwcFunction::zero()),
            SpaceKind::Shift => Value::Shift(ShiftFn::zero()),
        }
    }

    /// Norm, exact on scalar values and on `L^1`/`L^∞` of rational pwc values.
    pub fn norm_real(&self, v: &Value) -> Real {
        match v {
            Value::Scalar(a) => a.abs(),
            Value::Pwc(f) if self.p == 1.0 => f.l1(),
            Value::Pwc(f) if self.p.is_infinite() => f.linf(),
            _ => Real::float(self.norm(v)),
        }
    }

    pub fn norm(&self, v: &Value) -> f64 {
        self.norm_with_regime(v).0
    }

    /// Norm plus the regime for shift values (`None` for closed forms).
    pub fn norm_with_regime(&self, v: &Value) -> (f64, Option<Regime>) {
        match v {
            Value::Scalar(a) => (a.abs().to_f64(), None),
            Value::Vector(x) => (vector_norm(x, self.p), None),
            Value::Pwc(f) => (f.lp(self.p), None),
            Value::Shift(f) => {
                let (n, r) = shift::lp_norm(f, self.p, &self.sampling);
                (n, Some(r))
            }
        }
    }

    /// `ess sup (|a| − b)⁺`; zero iff `|a| ≪ b`.
    pub fn order_excess(&self, a: &Value, b: &Value) -> Result<(Real, Option<Regime>), ValueError> {
        match (a, b) {
            (Value::Scalar(x), Value::Scalar(y)) => Ok(((&x.abs() - y).pos(), None)),
            (Value::Pwc(f), Value::Pwc(g)) => Ok((f.abs().max_excess(g), None)),
            (Value::Shift(f), Value::Shift(g)) => {
                let s = shift::scan_words(&[f, g], &self.sampling, WordMeasure::Uniform, |v| v[0].abs() - v[1]);
                Ok((Real::float(s.max.max(0.0)), Some(s.regime)))
            }
            (Value::Vector(_), _) => Err(ValueError::Unordered("vector")),
            _ => Err(ValueError::Mismatch(a.kind(), b.kind())),
        }
    }
}

/// `ℓ^p` norm of a vector.
pub fn vector_norm(x: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        x.iter().fold(0.0, |m, v| m.max(v.abs()))
    } else {
        x.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// `‖f‖_p` of a value in the given space with exponent `p`.
pub fn lp_norm(f: &Value, p: f64, space: &ValueSpace) -> Result<f64, ValueError> {
    if !(p >= 1.0) {
        return Err(ValueError::Exponent(p));
    }
    let s = ValueSpace { p, ..space.clone() };
    Ok(s.norm(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vector_space_is_unordered() {
        let v = Value::Vector(vec![1.0, 2.0]);
        assert_eq!(lattice_abs(&v).unwrap_err(), ValueError::Unordered("vector"));
        assert!(!ValueSpace::vector(2).is_ordered());
    }

    #[test]
    fn scalar_ops_exact() {
        let a = Value::Scalar(Real::ratio(1, 3));
        let b = Value::Scalar(Real::ratio(-1, 2));
        let j = lattice_join(&a, &b).unwrap();
        assert_eq!(j.as_scalar().unwrap(), &Real::ratio(1, 3));
        let s = ValueSpace::scalar();
        assert_eq!(s.norm_real(&b), Real::ratio(1, 2));
        let (ex, _) = s.order_excess(&b, &a).unwrap();
        assert_eq!(ex, Real::ratio(1, 6));
    }

    #[test]
    fn mismatched_kinds() {
        let a = Value::Scalar(Real::one());
        let b = Value::Vector(vec![1.0]);
        assert!(a.add(&b).is_err());
        assert!(lp_norm(&a, 0.5, &ValueSpace::scalar()).is_err());
    }

    #[test]
    fn pwc_lp_norm_dispatch() {
        let f = Value::Pwc(PwcFunction::constant(Real::int(-3)));
        assert_eq!(lp_norm(&f, f64::INFINITY, &ValueSpace::pwc(1.0)).unwrap(), 3.0);
        assert_eq!(lp_norm(&f, 2.0, &ValueSpace::pwc(1.0)).unwrap(), 3.0);
    }
}
