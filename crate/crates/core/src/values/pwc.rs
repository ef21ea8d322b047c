//! Piecewise-constant functions on `[0,1]`, with closed-form integrals,
//! `L^p` norms and lattice operations.
//!
//! A function is a list of breakpoints `0 = b_0 < b_1 < … < b_k = 1` and a
//! level per interval `[b_i, b_{i+1})`. Functions are equal as elements of
//! `L^p`, so the value at a single breakpoint is irrelevant; [`PwcFunction::eval`]
//! reads right-continuously for convenience.

use num_rational::BigRational;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use super::real::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PwcError {
    #[error("breakpoints must start at 0, end at 1 and increase strictly")]
    Breakpoints,
    #[error("expected {expected} levels, got {got}")]
    Levels { expected: usize, got: usize },
    #[error("non-finite number in input")]
    NonFinite,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PwcFunction {
    breaks: Vec<Real>,
    levels: Vec<Real>,
}

impl PwcFunction {
    /// Validates and canonicalizes.
    pub fn new(breaks: Vec<Real>, levels: Vec<Real>) -> Result<Self, PwcError> {
        if breaks.len() < 2 || !breaks[0].is_zero() || breaks[breaks.len() - 1] != Real::one() {
            return Err(PwcError::Breakpoints);
        }
        if breaks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(PwcError::Breakpoints);
        }
        if levels.len() + 1 != breaks.len() {
            return Err(PwcError::Levels { expected: breaks.len() - 1, got: levels.len() });
        }
        Ok(Self::canonical(breaks, levels))
    }

    /// Builds from floats, reading each float as the exact dyadic rational it is.
    pub fn from_f64(breaks: &[f64], levels: &[f64]) -> Result<Self, PwcError> {
        let conv = |x: &f64| -> Result<Real, PwcError> {
            BigRational::from_float(*x).map(Real::Exact).ok_or(PwcError::NonFinite)
        };
        let b = breaks.iter().map(conv).collect::<Result<Vec<_>, _>>()?;
        let l = levels.iter().map(conv).collect::<Result<Vec<_>, _>>()?;
        Self::new(b, l)
    }

    pub fn constant(c: Real) -> Self {
        PwcFunction { breaks: vec![Real::zero(), Real::one()], levels: vec![c] }
    }

    pub fn zero() -> Self {
        Self::constant(Real::zero())
    }

    /// `height · 𝟙_{[a,b]}` with `[a,b]` clipped to `[0,1]`.
    pub fn step(a: Real, b: Real, height: Real) -> Self {
        let a = a.max(Real::zero()).min(Real::one());
        let b = b.max(Real::zero()).min(Real::one());
        if a >= b || height.is_zero() {
            return Self::zero();
        }
        let mut br = vec![Real::zero()];
        let mut lv = Vec::new();
        if !a.is_zero() {
            br.push(a.clone());
            lv.push(Real::zero());
        }
        lv.push(height);
        if b < Real::one() {
            br.push(b);
            lv.push(Real::zero());
        }
        br.push(Real::one());
        Self::canonical(br, lv)
    }

    /// `𝟙_{[a,b]}`.
    pub fn indicator(a: Real, b: Real) -> Self {
        Self::step(a, b, Real::one())
    }

    fn canonical(breaks: Vec<Real>, levels: Vec<Real>) -> Self {
        let mut b = vec![breaks[0].clone()];
        let mut l: Vec<Real> = Vec::with_capacity(levels.len());
        for (i, lev) in levels.into_iter().enumerate() {
            let right = breaks[i + 1].clone();
            if right <= b[b.len() - 1] {
                continue;
            }
            if l.last() == Some(&lev) {
                *b.last_mut().unwrap() = right;
            } else {
                l.push(lev);
                b.push(right);
            }
        }
        PwcFunction { breaks: b, levels: l }
    }

    pub fn breakpoints(&self) -> &[Real] {
        &self.breaks
    }

    pub fn levels(&self) -> &[Real] {
        &self.levels
    }

    pub fn pieces(&self) -> usize {
        self.levels.len()
    }

    /// True when every breakpoint and level is an exact rational.
    pub fn is_exact(&self) -> bool {
        self.breaks.iter().chain(&self.levels).all(Real::is_exact)
    }

    /// Right-continuous point evaluation.
    pub fn eval(&self, x: f64) -> Real {
        let i = self.breaks[1..].partition_point(|b| b.to_f64() <= x);
        self.levels[i.min(self.levels.len() - 1)].clone()
    }

    fn refine(&self, o: &Self) -> (Vec<Real>, Vec<(Real, Real)>) {
        let (mut i, mut j) = (0, 0);
        let mut br = vec![Real::zero()];
        let mut pairs = Vec::new();
        while i < self.levels.len() && j < o.levels.len() {
            pairs.push((self.levels[i].clone(), o.levels[j].clone()));
            let (a, b) = (&self.breaks[i + 1], &o.breaks[j + 1]);
            if a < b {
                br.push(a.clone());
                i += 1;
            } else if b < a {
                br.push(b.clone());
                j += 1;
            } else {
                br.push(a.clone());
                i += 1;
                j += 1;
            }
        }
        (br, pairs)
    }

    /// Pointwise combination on the common refinement.
    pub fn zip_with(&self, o: &Self, f: impl Fn(&Real, &Real) -> Real) -> Self {
        let (br, pairs) = self.refine(o);
        let lv = pairs.iter().map(|(a, b)| f(a, b)).collect();
        Self::canonical(br, lv)
    }

    pub fn map(&self, f: impl Fn(&Real) -> Real) -> Self {
        Self::canonical(self.breaks.clone(), self.levels.iter().map(f).collect())
    }

    pub fn add(&self, o: &Self) -> Self {
        self.zip_with(o, |a, b| a + b)
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.zip_with(o, |a, b| a - b)
    }

    pub fn scale(&self, c: &Real) -> Self {
        if c.is_zero() {
            return Self::zero();
        }
        self.map(|a| a * c)
    }

    pub fn neg(&self) -> Self {
        self.map(|a| -a)
    }

    pub fn join(&self, o: &Self) -> Self {
        self.zip_with(o, |a, b| a.clone().max(b.clone()))
    }

    pub fn meet(&self, o: &Self) -> Self {
        self.zip_with(o, |a, b| a.clone().min(b.clone()))
    }

    pub fn abs(&self) -> Self {
        self.map(Real::abs)
    }

    /// `∫_0^1 f`.
    pub fn integral(&self) -> Real {
        self.levels
            .iter()
            .enumerate()
            .map(|(i, l)| l * &(&self.breaks[i + 1] - &self.breaks[i]))
            .sum()
    }

    /// `‖f‖_1`, exact on the rational path.
    pub fn l1(&self) -> Real {
        self.abs().integral()
    }

    /// `‖f‖_∞` over pieces of positive length.
    pub fn linf(&self) -> Real {
        self.levels.iter().map(Real::abs).fold(Real::zero(), Real::max)
    }

    /// `‖f‖_p` for `p ∈ [1, ∞]`.
    pub fn lp(&self, p: f64) -> f64 {
        if p.is_infinite() {
            return self.linf().to_f64();
        }
        if p == 1.0 {
            return self.l1().to_f64();
        }
        let s: f64 = self
            .levels
            .iter()
            .enumerate()
            .map(|(i, l)| l.abs_powf(p) * (&self.breaks[i + 1] - &self.breaks[i]).to_f64())
            .sum();
        s.powf(1.0 / p)
    }

    /// Pointwise `self ≤ o` almost everywhere.
    pub fn le(&self, o: &Self) -> bool {
        self.refine(o).1.iter().all(|(a, b)| a <= b)
    }

    /// `ess sup (self − o)⁺`: zero iff `self ≤ o`.
    pub fn max_excess(&self, o: &Self) -> Real {
        self.refine(o).1.iter().map(|(a, b)| (a - b).pos()).fold(Real::zero(), Real::max)
    }
}

#[derive(Serialize, Deserialize)]
struct PwcWire {
    breakpoints: Vec<f64>,
    levels: Vec<f64>,
}

impl Serialize for PwcFunction {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        PwcWire {
            breakpoints: self.breaks.iter().map(Real::to_f64).collect(),
            levels: self.levels.iter().map(Real::to_f64).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PwcFunction {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let w = PwcWire::deserialize(d)?;
        PwcFunction::from_f64(&w.breakpoints, &w.levels).map_err(D::Error::custom)
    }
}
