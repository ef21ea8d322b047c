//! Real functions on the full shift `{0,1}^ℤ` (and `{0,1}^{ℤ^d}` for plain
//! cylinder evaluation).
//!
//! A [`ShiftFn`] is a finite linear combination of shifted *word functions*:
//! each [`WordFunction`] reads the coordinates `x_0 … x_{L-1}`, and a term
//! with `start = s`, `count = c` stands for `Σ_{s ≤ i < s+c} coef · w ∘ T^i`
//! where `(Tx)_j = x_{j+1}`. Sup norms are exact by enumerating every word
//! on the union support when that support is short, and are otherwise
//! estimated on seeded random words. Every norm carries the [`Regime`] that
//! produced it.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{LatticePoint, MAX_DIM};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShiftError {
    #[error("cylinder support must be nonempty, duplicate-free and at most 20 coordinates")]
    Support,
    #[error("cylinder table has {got} entries, expected {expected}")]
    Table { expected: usize, got: usize },
    #[error("word functions need a one-dimensional support with nonnegative offsets")]
    NotWord,
}

/// A function of the word `x_0 … x_{len-1}`.
pub trait WordFunction: Send + Sync + fmt::Debug {
    fn len(&self) -> usize;

    fn eval(&self, word: &[u8]) -> f64;

    /// `Σ_{i<count} eval(word[i .. i+len])`, with `word.len() = count + len - 1`.
    fn sliding_sum(&self, word: &[u8], count: usize) -> f64 {
        let l = self.len();
        (0..count).map(|i| self.eval(&word[i..i + l])).sum()
    }

    fn label(&self) -> String;
}

/// Deterministic random-access Bernoulli field: coordinate `g` of sample
/// `stream` is `1` with probability `p`.
#[derive(Clone, Debug)]
pub struct BernoulliField {
    pub seed: u64,
    pub stream: u64,
    pub p: f64,
}

const TWO32: f64 = 4_294_967_296.0;

fn zigzag(x: i64) -> u128 {
    if x >= 0 {
        2 * x as u128
    } else {
        (2 * (-(x as i128)) - 1) as u128
    }
}

impl BernoulliField {
    pub fn new(seed: u64, stream: u64, p: f64) -> Self {
        Self { seed, stream, p }
    }

    fn threshold(&self, w: u32) -> u8 {
        u8::from((w as f64 + 0.5) / TWO32 < self.p)
    }

    fn rng(&self, sub: u64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(self.stream.wrapping_mul(4).wrapping_add(sub));
        r
    }

    /// Coordinate `x_g` for `g ∈ ℤ^d`.
    pub fn bit(&self, g: &LatticePoint, dim: usize) -> u8 {
        if dim == 1 {
            return self.word(g.coord(0), g.coord(0) + 1)[0];
        }
        // Pair the zigzagged coordinates into a single word position.
        let mut idx: u128 = 0;
        for i in 0..dim.min(MAX_DIM) {
            let z = zigzag(g.coord(i));
            idx = (idx + z) * (idx + z + 1) / 2 + z;
        }
        let mut r = self.rng(2 + dim as u64 % 2);
        r.set_word_pos(idx);
        self.threshold(r.next_u32())
    }

    /// Coordinates `x_lo … x_{hi-1}` of a one-dimensional configuration.
    pub fn word(&self, lo: i64, hi: i64) -> Vec<u8> {
        let mut out = Vec::with_capacity((hi - lo).max(0) as usize);
        if lo < 0 {
            // Negative coordinates -1, -2, … live on their own stream.
            let top = hi.min(0);
            let mut r = self.rng(1);
            r.set_word_pos((-top) as u128);
            let mut neg = Vec::with_capacity((top - lo) as usize);
            for _ in lo..top {
                neg.push(self.threshold(r.next_u32()));
            }
            neg.reverse();
            out.extend(neg);
        }
        if hi > 0 {
            let start = lo.max(0);
            let mut r = self.rng(0);
            r.set_word_pos(start as u128);
            for _ in start..hi {
                out.push(self.threshold(r.next_u32()));
            }
        }
        out
    }
}

/// How norms of shift-space functions are evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftSampling {
    /// Supports of at most this many coordinates are enumerated exactly.
    pub exhaustive_max: usize,
    /// Number of random words otherwise.
    pub samples: usize,
    pub seed: u64,
    /// Bernoulli parameter of the reference measure for `L^p` norms.
    pub prob: f64,
}

impl Default for ShiftSampling {
    fn default() -> Self {
        Self { exhaustive_max: 14, samples: 10_000, seed: 0x5eed, prob: 0.5 }
    }
}

/// Which evaluation regime produced a number.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "regime", rename_all = "kebab-case")]
pub enum Regime {
    Exhaustive { coordinates: usize },
    Sampled { samples: usize, seed: u64 },
}

/// Reference measure for averages over words.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WordMeasure {
    /// Uniform; the right choice when only maxima matter.
    Uniform,
    Bernoulli(f64),
}

/// A finite-support cylinder function `x ↦ table[x|_support]`.
///
/// Bit `k` of the table index is the coordinate at `support[k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Cylinder {
    dim: usize,
    support: Vec<LatticePoint>,
    table: Vec<f64>,
}

impl Cylinder {
    pub fn new(dim: usize, support: Vec<LatticePoint>, table: Vec<f64>) -> Result<Self, ShiftError> {
        let mut s = support.clone();
        s.sort_unstable();
        s.dedup();
        if s.len() != support.len() || support.is_empty() || support.len() > 20 {
            return Err(ShiftError::Support);
        }
        let expected = 1usize << support.len();
        if table.len() != expected {
            return Err(ShiftError::Table { expected, got: table.len() });
        }
        Ok(Self { dim, support, table })
    }

    /// The monomial `∏_{j ∈ J} x_j`.
    pub fn monomial(dim: usize, coords: Vec<LatticePoint>) -> Result<Self, ShiftError> {
        let n = coords.len();
        let mut table = vec![0.0; 1 << n];
        table[(1 << n) - 1] = 1.0;
        Self::new(dim, coords, table)
    }

    /// The coordinate function `x ↦ x_0` on `{0,1}^ℤ`.
    pub fn coordinate() -> Self {
        Self::monomial(1, vec![LatticePoint::ORIGIN]).expect("valid monomial")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support(&self) -> &[LatticePoint] {
        &self.support
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    /// `h ∘ T^g`: reads `x_{s+g}` wherever `h` read `x_s`.
    pub fn shifted(&self, g: &LatticePoint) -> Self {
        Self { dim: self.dim, support: self.support.iter().map(|s| s.add(g)).collect(), table: self.table.clone() }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { dim: self.dim, support: self.support.clone(), table: self.table.iter().map(|t| t * c).collect() }
    }

    /// Evaluate given a coordinate oracle.
    pub fn eval_with(&self, mut bit: impl FnMut(&LatticePoint) -> u8) -> f64 {
        let mut idx = 0usize;
        for (k, s) in self.support.iter().enumerate() {
            idx |= (bit(s) as usize) << k;
        }
        self.table[idx]
    }

    /// Exact mean under the Bernoulli(`p`) product measure.
    pub fn mean(&self, p: f64) -> f64 {
        let n = self.support.len();
        let mut acc = 0.0;
        for (idx, v) in self.table.iter().enumerate() {
            let ones = idx.count_ones() as i32;
            acc += v * p.powi(ones) * (1.0 - p).powi(n as i32 - ones);
        }
        acc
    }

    /// Sum of cylinders, re-tabulated on the union support.
    pub fn sum(parts: &[Cylinder]) -> Result<Self, ShiftError> {
        let dim = parts.first().map_or(1, |c| c.dim);
        let mut support: Vec<LatticePoint> = parts.iter().flat_map(|c| c.support.iter().copied()).collect();
        support.sort_unstable();
        support.dedup();
        if support.len() > 20 {
            return Err(ShiftError::Support);
        }
        let positions: Vec<Vec<usize>> = parts
            .iter()
            .map(|c| c.support.iter().map(|s| support.binary_search(s).unwrap()).collect())
            .collect();
        let mut table = vec![0.0; 1 << support.len()];
        for (idx, slot) in table.iter_mut().enumerate() {
            for (c, pos) in parts.iter().zip(&positions) {
                let mut j = 0usize;
                for (k, &q) in pos.iter().enumerate() {
                    j |= ((idx >> q) & 1) << k;
                }
                *slot += c.table[j];
            }
        }
        Self::new(dim, support, table)
    }

    /// View as a word function (one-dimensional, offsets `≥ 0`).
    pub fn into_word(self) -> Result<CylinderWord, ShiftError> {
        if self.dim != 1 || self.support.iter().any(|s| s.coord(0) < 0) {
            return Err(ShiftError::NotWord);
        }
        let len = self.support.iter().map(|s| s.coord(0) as usize + 1).max().unwrap_or(1);
        let offsets = self.support.iter().map(|s| s.coord(0) as usize).collect();
        Ok(CylinderWord { cyl: self, offsets, len })
    }
}

/// A one-dimensional [`Cylinder`] viewed as a [`WordFunction`].
#[derive(Clone, Debug)]
pub struct CylinderWord {
    cyl: Cylinder,
    offsets: Vec<usize>,
    len: usize,
}

impl CylinderWord {
    pub fn cylinder(&self) -> &Cylinder {
        &self.cyl
    }
}

impl WordFunction for CylinderWord {
    fn len(&self) -> usize {
        self.len
    }

    fn eval(&self, word: &[u8]) -> f64 {
        let mut idx = 0usize;
        for (k, &o) in self.offsets.iter().enumerate() {
            idx |= (word[o] as usize) << k;
        }
        self.cyl.table[idx]
    }

    fn label(&self) -> String {
        format!("cylinder{:?}", self.offsets)
    }
}

/// `Σ_{start ≤ i < start+count} coef · base ∘ T^i`.
#[derive(Clone, Debug)]
pub struct ShiftTerm {
    pub coef: f64,
    pub base: Arc<dyn WordFunction>,
    pub start: i64,
    pub count: usize,
}

impl ShiftTerm {
    fn span(&self) -> (i64, i64) {
        let l = self.base.len().max(1) as i64;
        (self.start, self.start + self.count as i64 - 1 + l)
    }
}

/// A linear combination of shifted word functions plus a constant.
#[derive(Clone, Debug, Default)]
pub struct ShiftFn {
    pub constant: f64,
    pub terms: Vec<ShiftTerm>,
}

impl ShiftFn {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self { constant: c, terms: Vec::new() }
    }

    /// `w ∘ T^start`.
    pub fn single(base: Arc<dyn WordFunction>, start: i64) -> Self {
        Self { constant: 0.0, terms: vec![ShiftTerm { coef: 1.0, base, start, count: 1 }] }
    }

    /// `Σ_{start ≤ i < start+count} w ∘ T^i`.
    pub fn run(base: Arc<dyn WordFunction>, start: i64, count: usize) -> Self {
        Self { constant: 0.0, terms: vec![ShiftTerm { coef: 1.0, base, start, count }] }
    }

    /// Appends a term, merging with the previous one when the runs abut.
    pub fn push(&mut self, t: ShiftTerm) {
        if t.count == 0 || t.coef == 0.0 {
            return;
        }
        if let Some(last) = self.terms.last_mut() {
            if Arc::ptr_eq(&last.base, &t.base) && last.coef == t.coef && last.start + last.count as i64 == t.start {
                last.count += t.count;
                return;
            }
        }
        self.terms.push(t);
    }

    /// Sum; terms with the same base, start and count combine their
    /// coefficients, and terms that cancel exactly are dropped.
    pub fn add(&self, o: &Self) -> Self {
        fn key(t: &ShiftTerm) -> (usize, i64, usize) {
            (Arc::as_ptr(&t.base) as *const () as usize, t.start, t.count)
        }
        let mut out = self.clone();
        out.constant += o.constant;
        // Entries can go stale when `push` extends the last run, so every hit is re-checked.
        let mut index: HashMap<(usize, i64, usize), usize> =
            out.terms.iter().enumerate().map(|(i, t)| (key(t), i)).collect();
        for t in &o.terms {
            let k = key(t);
            if let Some(&i) = index.get(&k) {
                if key(&out.terms[i]) == k {
                    out.terms[i].coef += t.coef;
                    continue;
                }
            }
            out.push(t.clone());
            if let Some(last) = out.terms.last() {
                index.insert(key(last), out.terms.len() - 1);
            }
        }
        out.terms.retain(|t| t.coef != 0.0);
        out
    }

    pub fn scale(&self, c: f64) -> Self {
        if c == 0.0 {
            return Self::zero();
        }
        Self {
            constant: self.constant * c,
            terms: self.terms.iter().map(|t| ShiftTerm { coef: t.coef * c, ..t.clone() }).collect(),
        }
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.scale(-1.0))
    }

    /// `f ∘ T^s` for every term.
    pub fn compose_shift(&self, s: i64) -> Self {
        Self {
            constant: self.constant,
            terms: self.terms.iter().map(|t| ShiftTerm { start: t.start + s, ..t.clone() }).collect(),
        }
    }

    /// Union support `[lo, hi)` of the non-constant part.
    pub fn support(&self) -> Option<(i64, i64)> {
        let mut it = self.terms.iter().map(ShiftTerm::span);
        let first = it.next()?;
        Some(it.fold(first, |(a, b), (c, d)| (a.min(c), b.max(d))))
    }

    /// Value at a configuration whose coordinates `[lo, lo + word.len())` are given.
    pub fn eval_word(&self, word: &[u8], lo: i64) -> f64 {
        let mut acc = self.constant;
        for t in &self.terms {
            let off = (t.start - lo) as usize;
            let l = t.base.len().max(1);
            let slice = &word[off..off + t.count + l - 1];
            acc += t.coef * t.base.sliding_sum(slice, t.count);
        }
        acc
    }
}

/// Result of scanning words.
#[derive(Clone, Debug, PartialEq)]
pub struct WordScan {
    pub max: f64,
    pub mean: f64,
    pub regime: Regime,
}

/// Evaluates `fns` on common words and reduces `combine(values)`.
///
/// Returns the maximum and the (measure-weighted) mean of `combine`.
pub fn scan_words(
    fns: &[&ShiftFn],
    sampling: &ShiftSampling,
    measure: WordMeasure,
    combine: impl Fn(&[f64]) -> f64 + Sync,
) -> WordScan {
    let support = fns.iter().filter_map(|f| f.support()).reduce(|(a, b), (c, d)| (a.min(c), b.max(d)));
    let (lo, hi) = support.unwrap_or((0, 0));
    let width = (hi - lo) as usize;
    let eval_all = |w: &[u8]| -> f64 {
        let vals: Vec<f64> = fns.iter().map(|f| f.eval_word(w, lo)).collect();
        combine(&vals)
    };
    if width <= sampling.exhaustive_max {
        let count = 1usize << width;
        let vals: Vec<(f64, f64)> = (0..count)
            .into_par_iter()
            .map(|idx| {
                let w: Vec<u8> = (0..width).map(|k| ((idx >> k) & 1) as u8).collect();
                let weight = match measure {
                    WordMeasure::Uniform => 1.0 / count as f64,
                    WordMeasure::Bernoulli(p) => {
                        let ones = idx.count_ones() as i32;
                        p.powi(ones) * (1.0 - p).powi(width as i32 - ones)
                    }
                };
                (eval_all(&w), weight)
            })
            .collect();
        let max = vals.iter().map(|v| v.0).fold(f64::NEG_INFINITY, f64::max);
        let mean = vals.iter().map(|(v, w)| v * w).sum();
        return WordScan { max, mean, regime: Regime::Exhaustive { coordinates: width } };
    }
    let p = match measure {
        WordMeasure::Uniform => 0.5,
        WordMeasure::Bernoulli(p) => p,
    };
    let vals: Vec<f64> = (0..sampling.samples)
        .into_par_iter()
        .map(|s| {
            // Words are drawn in relative coordinates so that translates of a
            // function see the same sample set.
            let w = BernoulliField::new(sampling.seed, s as u64, p).word(0, hi - lo);
            eval_all(&w)
        })
        .collect();
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean = vals.iter().sum::<f64>() / vals.len().max(1) as f64;
    WordScan { max, mean, regime: Regime::Sampled { samples: sampling.samples, seed: sampling.seed } }
}

/// `‖f‖_∞` over the shift, with its regime.
pub fn sup_norm(f: &ShiftFn, sampling: &ShiftSampling) -> (f64, Regime) {
    let s = scan_words(&[f], sampling, WordMeasure::Uniform, |v| v[0].abs());
    (s.max, s.regime)
}

/// `‖f‖_{L^p(μ_prob)}` for finite `p`.
pub fn lp_norm(f: &ShiftFn, p: f64, sampling: &ShiftSampling) -> (f64, Regime) {
    if p.is_infinite() {
        return sup_norm(f, sampling);
    }
    let s = scan_words(&[f], sampling, WordMeasure::Bernoulli(sampling.prob), |v| v[0].abs().powf(p));
    (s.mean.powf(1.0 / p), s.regime)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x0() -> Arc<dyn WordFunction> {
        Arc::new(Cylinder::coordinate().into_word().unwrap())
    }

    #[test]
    fn identical_terms_cancel() {
        let base = x0();
        let a = ShiftFn::run(base.clone(), 3, 10).scale(0.1);
        let b = ShiftFn::single(Arc::new(Cylinder::coordinate().into_word().unwrap()), 0);
        assert!(a.sub(&a).terms.is_empty());
        let s = a.add(&b).sub(&a);
        assert_eq!(s.terms.len(), 1);
        assert_eq!(s.eval_word(&[1], 0), 1.0);
        // A run extended by `push` must not absorb a term keyed by its old extent.
        let mut c = ShiftFn::run(base.clone(), 0, 2);
        c = c.add(&ShiftFn::run(base.clone(), 2, 2));
        assert_eq!(c.terms.len(), 1);
        let d = c.add(&ShiftFn::run(base.clone(), 0, 2));
        assert_eq!(d.eval_word(&[1, 1, 1, 1], 0), 6.0);
    }

    #[test]
    fn birkhoff_sum_of_coordinate() {
        // S_{[0,3)} x_0 = x_0 + x_1 + x_2.
        let f = ShiftFn::run(x0(), 0, 3);
        assert_eq!(f.support(), Some((0, 3)));
        for idx in 0..8u8 {
            let w = [idx & 1, (idx >> 1) & 1, (idx >> 2) & 1];
            assert_eq!(f.eval_word(&w, 0), (w[0] + w[1] + w[2]) as f64);
        }
    }

    #[test]
    fn push_merges_abutting_runs() {
        let b = x0();
        let mut f = ShiftFn::zero();
        for s in 0..5 {
            f.push(ShiftTerm { coef: 1.0, base: b.clone(), start: s, count: 1 });
        }
        assert_eq!(f.terms.len(), 1);
        assert_eq!(f.terms[0].count, 5);
    }

    #[test]
    fn norms_exhaustive() {
        let f = ShiftFn::run(x0(), 0, 4).sub(&ShiftFn::constant(2.0));
        let s = ShiftSampling::default();
        let (n, r) = sup_norm(&f, &s);
        assert_eq!(n, 2.0);
        assert_eq!(r, Regime::Exhaustive { coordinates: 4 });
        // Var of a sum of 4 fair bits is 1.
        let (l2, _) = lp_norm(&f, 2.0, &s);
        assert!((l2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampled_regime_is_labelled_and_deterministic() {
        let f = ShiftFn::run(x0(), 0, 40);
        let s = ShiftSampling { samples: 500, ..Default::default() };
        let a = lp_norm(&f, 1.0, &s);
        let b = lp_norm(&f, 1.0, &s);
        assert_eq!(a, b);
        assert!(matches!(a.1, Regime::Sampled { samples: 500, .. }));
        assert!((a.0 - 20.0).abs() < 0.5);
    }

    #[test]
    fn field_words_are_consistent() {
        let fld = BernoulliField::new(7, 3, 0.5);
        let w = fld.word(-5, 10);
        assert_eq!(w.len(), 15);
        assert_eq!(&fld.word(-2, 4)[..], &w[3..9]);
        for (k, x) in (-5..10).enumerate() {
            assert_eq!(fld.bit(&LatticePoint::scalar(x), 1), w[k]);
        }
    }

    #[test]
    fn cylinder_mean_and_sum() {
        let c = Cylinder::monomial(1, vec![LatticePoint::scalar(0), LatticePoint::scalar(1)]).unwrap();
        assert!((c.mean(0.3) - 0.09).abs() < 1e-15);
        let d = c.shifted(&LatticePoint::scalar(2)).scaled(-1.0);
        let s = Cylinder::sum(&[c, d]).unwrap();
        assert!(s.mean(0.3).abs() < 1e-15);
        assert_eq!(s.support().len(), 4);
    }
}
