//! The one-dimensional sequential case: function sequences `f_n` on
//! `{0,1}^ℤ` that depend on `x_0 … x_{n-1}`, matrix cocycles, weak Gibbs
//! potentials, the typewriter sequence and the Erdős–de Bruijn approximant.

use std::fmt;
use std::sync::Arc;

use nalgebra::Matrix2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::Window;
use crate::setmaps::{Domain, FnMap, GroupAction, SetMap, SetMapError};
use crate::values::shift::{BernoulliField, WordFunction};
use crate::values::{PwcFunction, Real, Regime, ShiftFn, ShiftSampling, Value, ValueSpace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SequenceError {
    #[error("cocycle matrices must have strictly positive entries")]
    NonPositive,
    #[error("bernoulli parameter must lie in (0,1), got {0}")]
    Probability(f64),
    #[error("the error sequence is not summable against 1/n² (exponent {0} ≥ 1)")]
    Divergent(f64),
    #[error("no admissible tile length m ≤ {cap} for epsilon {epsilon}")]
    NoAdmissibleM { cap: usize, epsilon: f64 },
    #[error("invalid argument: {0}")]
    Invalid(String),
}

/// `n ↦ f_n` with `f_n` a function of the word `x_0 … x_{n-1}`.
pub trait FunctionSequence: Send + Sync + fmt::Debug {
    fn name(&self) -> String;

    /// `f_n` on `word[..n]`; `f_0 = 0`.
    fn eval(&self, n: usize, word: &[u8]) -> f64;

    /// `f_n(T^i x)` for `i < count`, given `word.len() ≥ count + n - 1`.
    fn sliding(&self, n: usize, word: &[u8], count: usize) -> Vec<f64> {
        (0..count).map(|i| self.eval(n, &word[i..])).collect()
    }
}

/// `f_n` as a word function of length `n`.
#[derive(Debug)]
pub struct SeqWord {
    pub seq: Arc<dyn FunctionSequence>,
    pub n: usize,
}

impl WordFunction for SeqWord {
    fn len(&self) -> usize {
        self.n
    }
    fn eval(&self, word: &[u8]) -> f64 {
        self.seq.eval(self.n, word)
    }
    fn sliding_sum(&self, word: &[u8], count: usize) -> f64 {
        self.seq.sliding(self.n, word, count).iter().sum()
    }
    fn label(&self) -> String {
        format!("{}[{}]", self.seq.name(), self.n)
    }
}

/// The boxes-only Koopman set map `[a, a+n) ↦ f_n ∘ T^a`.
#[derive(Clone, Debug)]
pub struct SequenceMap {
    pub seq: Arc<dyn FunctionSequence>,
    pub space: ValueSpace,
    action: GroupAction,
}

impl SequenceMap {
    pub fn new(seq: Arc<dyn FunctionSequence>, sampling: ShiftSampling) -> Self {
        Self { seq, space: ValueSpace::shift_sup(sampling), action: GroupAction::Koopman }
    }

    /// `f_n` as a shift-space value.
    pub fn term(&self, n: usize, start: i64) -> ShiftFn {
        ShiftFn::single(Arc::new(SeqWord { seq: self.seq.clone(), n }), start)
    }
}

impl SetMap for SequenceMap {
    fn name(&self) -> String {
        self.seq.name()
    }
    fn dim(&self) -> usize {
        1
    }
    fn space(&self) -> &ValueSpace {
        &self.space
    }
    fn action(&self) -> &GroupAction {
        &self.action
    }
    fn domain(&self) -> Domain {
        Domain::BoxesOnly
    }
    fn eval(&self, f: &Window) -> Result<Value, SetMapError> {
        Domain::BoxesOnly.check(f)?;
        if f.dim() != 1 {
            return Err(SetMapError::Action("sequence maps live on ℤ".into()));
        }
        let a = f.min_point().expect("nonempty").coord(0);
        Ok(Value::Shift(self.term(f.len(), a)))
    }
}

fn row_norm(m: &Matrix2<f64>) -> f64 {
    (m[(0, 0)].abs() + m[(0, 1)].abs()).max(m[(1, 0)].abs() + m[(1, 1)].abs())
}

/// A matrix with a separate binary scale: the product it represents is
/// `2^exp · mat`. Rescaling by powers of two is exact and avoids a
/// logarithm per multiplication.
#[derive(Clone, Copy, Debug)]
struct Scaled {
    mat: Matrix2<f64>,
    exp: i64,
}

/// `⌊log₂ x⌋` for positive normal `x`.
fn ilog2(x: f64) -> i64 {
    ((x.to_bits() >> 52) & 0x7ff) as i64 - 1023
}

fn pow2(e: i64) -> f64 {
    f64::from_bits(((e + 1023) as u64) << 52)
}

impl Scaled {
    const ONE: Scaled = Scaled { mat: Matrix2::new(1.0, 0.0, 0.0, 1.0), exp: 0 };

    fn of(m: Matrix2<f64>) -> Self {
        Scaled { mat: m, exp: 0 }.renormalized()
    }

    fn renormalized(self) -> Self {
        let e = ilog2(row_norm(&self.mat));
        Scaled { mat: self.mat * pow2(-e), exp: self.exp + e }
    }

    fn mul(&self, o: &Scaled) -> Scaled {
        Scaled { mat: self.mat * o.mat, exp: self.exp + o.exp }.renormalized()
    }

    fn log_norm(&self) -> f64 {
        self.exp as f64 * std::f64::consts::LN_2 + row_norm(&self.mat).ln()
    }
}

/// `f_n(x) = log ‖A_{x_0} ⋯ A_{x_{n-1}}‖` with the max-row-sum norm.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixCocycle {
    pub a: [Matrix2<f64>; 2],
}

impl MatrixCocycle {
    pub fn new(a0: Matrix2<f64>, a1: Matrix2<f64>) -> Result<Self, SequenceError> {
        if a0.iter().chain(a1.iter()).any(|x| !(*x > 0.0)) {
            return Err(SequenceError::NonPositive);
        }
        Ok(Self { a: [a0, a1] })
    }

    /// Both symbols map to `a`.
    pub fn constant(a: Matrix2<f64>) -> Result<Self, SequenceError> {
        Self::new(a, a)
    }

    pub fn from_rows(a0: [[f64; 2]; 2], a1: [[f64; 2]; 2]) -> Result<Self, SequenceError> {
        let m = |r: [[f64; 2]; 2]| Matrix2::new(r[0][0], r[0][1], r[1][0], r[1][1]);
        Self::new(m(a0), m(a1))
    }

    /// Log-norm of the product along `word`.
    pub fn log_norm(&self, word: &[u8]) -> f64 {
        word.iter().fold(Scaled::ONE, |acc, &x| acc.mul(&Scaled::of(self.a[x as usize]))).log_norm()
    }

    /// A constant `C` with `|f_{n+m} − f_n − f_m∘T^n| ≤ C`: the log of the
    /// largest within-column entry ratio. Row sums of any product then differ
    /// by at most that factor, giving `‖AB‖ ≥ ‖A‖‖B‖ / e^C`, and
    /// sub-multiplicativity gives the other side.
    pub fn constant_error_bound(&self) -> f64 {
        let mut r: f64 = 1.0;
        for a in &self.a {
            for k in 0..2 {
                r = r.max(a[(0, k)] / a[(1, k)]).max(a[(1, k)] / a[(0, k)]);
            }
        }
        r.ln()
    }

    /// `‖A_0‖` and `‖A_1‖` bound `‖f_n‖_∞ / n`.
    pub fn sup_density(&self) -> f64 {
        row_norm(&self.a[0]).max(row_norm(&self.a[1])).ln()
    }

    pub fn is_constant(&self) -> bool {
        self.a[0] == self.a[1]
    }
}

impl FunctionSequence for MatrixCocycle {
    fn name(&self) -> String {
        "cocycle".into()
    }

    fn eval(&self, n: usize, word: &[u8]) -> f64 {
        self.log_norm(&word[..n])
    }

    /// Block decomposition: a window of length `n` meets at most two
    /// consecutive blocks of length `n`, so its product is a block suffix
    /// times the next block's prefix. Only two blocks are held at a time.
    fn sliding(&self, n: usize, word: &[u8], count: usize) -> Vec<f64> {
        if n == 0 {
            return vec![0.0; count];
        }
        if count <= 1 {
            return (0..count).map(|_| self.log_norm(&word[..n])).collect();
        }
        let total = count + n - 1;
        let unit = [Scaled::of(self.a[0]), Scaled::of(self.a[1])];
        let mut out = Vec::with_capacity(count);
        let mut suffix = vec![Scaled::ONE; n];
        let mut prefix = vec![Scaled::ONE; n];
        let mut s = 0;
        while s < count {
            let e = s + n;
            let mut acc = Scaled::ONE;
            for i in (s..e).rev() {
                acc = unit[word[i] as usize].mul(&acc);
                suffix[i - s] = acc;
            }
            let mut acc = Scaled::ONE;
            for j in e..(e + n).min(total) {
                acc = acc.mul(&unit[word[j] as usize]);
                prefix[j - e] = acc;
            }
            out.push(suffix[0].log_norm());
            for i in s + 1..e.min(count) {
                out.push(suffix[i - s].mul(&prefix[i - s - 1]).log_norm());
            }
            s = e;
        }
        out
    }
}

/// Spectral radius of a 2×2 matrix with real eigenvalues.
pub fn spectral_radius(a: &Matrix2<f64>) -> f64 {
    a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Profile of the cylinder-mass sequence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GibbsProfile {
    /// `f_n = Σ log p_{x_i}`.
    Gibbs,
    /// `f_n = Σ log p_{x_i} + √n · s(x_0 … x_{n-1})` with `s = ±1` a seeded hash.
    Weak { seed: u64 },
}

/// `f_n(x) = log μ([x_0 … x_{n-1}])` for Bernoulli(`p`), optionally perturbed.
#[derive(Clone, Debug, PartialEq)]
pub struct WeakGibbs {
    pub p: f64,
    pub profile: GibbsProfile,
}

const HASH_MOD: u64 = (1 << 61) - 1;
const HASH_BASE: u64 = 1_000_003;

/// `a·b mod 2^61 − 1` for `a, b < 2^61 − 1`, by folding the high bits.
fn mulmod(a: u64, b: u64) -> u64 {
    let x = a as u128 * b as u128;
    let r = (x as u64 & HASH_MOD) + (x >> 61) as u64;
    if r >= HASH_MOD {
        r - HASH_MOD
    } else {
        r
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl WeakGibbs {
    pub fn new(p: f64, profile: GibbsProfile) -> Result<Self, SequenceError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(SequenceError::Probability(p));
        }
        Ok(Self { p, profile })
    }

    fn log_p(&self, x: u8) -> f64 {
        if x == 1 {
            self.p.ln()
        } else {
            (1.0 - self.p).ln()
        }
    }

    fn sign(&self, seed: u64, n: usize, hash: u64) -> f64 {
        if splitmix(hash ^ splitmix(seed ^ (n as u64).wrapping_mul(0xa076_1d64_78bd_642f))) & 1 == 1 {
            1.0
        } else {
            -1.0
        }
    }

    fn hash(word: &[u8]) -> u64 {
        word.iter().fold(0, |h, &x| (mulmod(h, HASH_BASE) + x as u64 + 1) % HASH_MOD)
    }

    /// The perturbation `e_n` on `word[..n]`.
    pub fn perturbation(&self, n: usize, word: &[u8]) -> f64 {
        match self.profile {
            GibbsProfile::Gibbs => 0.0,
            GibbsProfile::Weak { seed } if n > 0 => (n as f64).sqrt() * self.sign(seed, n, Self::hash(&word[..n])),
            GibbsProfile::Weak { .. } => 0.0,
        }
    }

    /// `sup_n ‖f_n‖_∞ / n`.
    pub fn sup_density(&self) -> f64 {
        let lp = self.p.ln().abs().max((1.0 - self.p).ln().abs());
        match self.profile {
            GibbsProfile::Gibbs => lp,
            GibbsProfile::Weak { .. } => lp + 1.0,
        }
    }
}

impl FunctionSequence for WeakGibbs {
    fn name(&self) -> String {
        match self.profile {
            GibbsProfile::Gibbs => "gibbs".into(),
            GibbsProfile::Weak { .. } => "weak-gibbs".into(),
        }
    }

    fn eval(&self, n: usize, word: &[u8]) -> f64 {
        word[..n].iter().map(|&x| self.log_p(x)).sum::<f64>() + self.perturbation(n, word)
    }

    /// Prefix sums for the additive part and a rolling hash for the sign.
    fn sliding(&self, n: usize, word: &[u8], count: usize) -> Vec<f64> {
        if n == 0 {
            return vec![0.0; count];
        }
        let total = count + n - 1;
        let mut pre = Vec::with_capacity(total + 1);
        pre.push(0.0);
        for &x in &word[..total] {
            pre.push(pre[pre.len() - 1] + self.log_p(x));
        }
        let mut out: Vec<f64> = (0..count).map(|i| pre[i + n] - pre[i]).collect();
        if let GibbsProfile::Weak { seed } = self.profile {
            let top = (0..n - 1).fold(1u64, |a, _| mulmod(a, HASH_BASE));
            let root = (n as f64).sqrt();
            let mut h = Self::hash(&word[..n]);
            for i in 0..count {
                out[i] += root * self.sign(seed, n, h);
                if i + 1 < count {
                    let drop = mulmod(word[i] as u64 + 1, top);
                    h = (h + HASH_MOD - drop) % HASH_MOD;
                    h = (mulmod(h, HASH_BASE) + word[i + n] as u64 + 1) % HASH_MOD;
                }
            }
        }
        out
    }
}

/// `f_n = S_n g` for a word function `g`.
#[derive(Debug)]
pub struct BirkhoffSequence {
    pub g: Arc<dyn WordFunction>,
}

impl FunctionSequence for BirkhoffSequence {
    fn name(&self) -> String {
        format!("birkhoff[{}]", self.g.label())
    }
    fn eval(&self, n: usize, word: &[u8]) -> f64 {
        let l = self.g.len().max(1);
        if n + 1 < l {
            return 0.0;
        }
        (0..n.saturating_sub(l - 1)).map(|i| self.g.eval(&word[i..i + l])).sum()
    }
}

/// `f_n + c_n` with a deterministic size correction `c_n`.
#[derive(Debug)]
pub struct Perturbed {
    pub base: Arc<dyn FunctionSequence>,
    pub shift: fn(usize) -> f64,
}

impl FunctionSequence for Perturbed {
    fn name(&self) -> String {
        format!("{}+c_n", self.base.name())
    }
    fn eval(&self, n: usize, word: &[u8]) -> f64 {
        self.base.eval(n, word) + (self.shift)(n)
    }
}

/// `f_n = 𝟙_{[(n−2^k)/2^k, (n−2^k+1)/2^k]}` with `k = ⌊log₂ n⌋`.
pub fn typewriter(n: usize) -> PwcFunction {
    let n = n.max(1);
    let k = usize::BITS - 1 - n.leading_zeros();
    let den = 1i64 << k;
    let j = n as i64 - den;
    PwcFunction::indicator(Real::ratio(j, den), Real::ratio(j + 1, den))
}

/// The boxes-only map `F ↦ |F| · f_{|F|}` on `L¹([0,1])`.
pub fn typewriter_map() -> FnMap {
    FnMap::new("typewriter", 1, ValueSpace::pwc(1.0), GroupAction::Trivial, Domain::BoxesOnly, |f| {
        Ok(Value::Pwc(typewriter(f.len()).scale(&Real::int(f.len() as i64))))
    })
}

/// Minimum and maximum of `f` over words of length `width`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Extremes {
    pub min: f64,
    pub max: f64,
    pub regime: Regime,
}

impl Extremes {
    pub fn abs_max(&self) -> f64 {
        self.max.abs().max(self.min.abs())
    }
}

/// Scans all words of length `width` when `width ≤ sampling.exhaustive_max`
/// and `sampling.samples` seeded Bernoulli(1/2) words otherwise.
pub fn word_extremes(width: usize, sampling: &ShiftSampling, f: impl Fn(&[u8]) -> f64 + Sync) -> Extremes {
    let fold = |v: Vec<f64>| v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(*x), b.max(*x)));
    if width <= sampling.exhaustive_max {
        let count = 1usize << width;
        let vals: Vec<f64> = (0..count)
            .into_par_iter()
            .map(|idx| {
                let w: Vec<u8> = (0..width).map(|k| ((idx >> k) & 1) as u8).collect();
                f(&w)
            })
            .collect();
        let (min, max) = fold(vals);
        return Extremes { min, max, regime: Regime::Exhaustive { coordinates: width } };
    }
    let vals: Vec<f64> = (0..sampling.samples)
        .into_par_iter()
        .map(|s| f(&BernoulliField::new(sampling.seed, s as u64, 0.5).word(0, width as i64)))
        .collect();
    let (min, max) = fold(vals);
    Extremes { min, max, regime: Regime::Sampled { samples: sampling.samples, seed: sampling.seed } }
}

/// How the constant-error defect is searched.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScanMode {
    /// Every split `n + m = t` of every word, `t ≤ n_max ≤ 16`.
    Exhaustive,
    /// Seeded words; splits `n ∈ {1, t/2, t−1}` at `t = 2^k, 3·2^k ≤ n_max`.
    Sampled,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConstantErrorReport {
    /// Largest defect `|f_{n+m} − f_n − f_m∘T^n|` seen.
    pub c_hat: f64,
    /// `(t, largest defect at n + m = t)`.
    pub by_length: Vec<(usize, f64)>,
    /// Least-squares slope of `log defect` against `log t` over the upper half.
    pub growth_exponent: f64,
    pub constant_error: bool,
    pub regime: Regime,
}

/// Measures the constant-error defect of `seq` up to total length `n_max`.
pub fn constant_error_measure(
    seq: &dyn FunctionSequence,
    n_max: usize,
    mode: ScanMode,
    sampling: &ShiftSampling,
    cap: f64,
) -> ConstantErrorReport {
    let defect = |w: &[u8], n: usize, m: usize| (seq.eval(n + m, w) - seq.eval(n, w) - seq.eval(m, &w[n..])).abs();
    let mut by_length = Vec::new();
    let mut regime = Regime::Exhaustive { coordinates: 0 };
    match mode {
        ScanMode::Exhaustive => {
            let s = ShiftSampling { exhaustive_max: 16, ..sampling.clone() };
            for t in 2..=n_max.min(16) {
                let e = word_extremes(t, &s, |w| (1..t).map(|n| defect(w, n, t - n)).fold(0.0, f64::max));
                regime = e.regime;
                by_length.push((t, e.max));
            }
        }
        ScanMode::Sampled => {
            let mut ts: Vec<usize> = (1..20).flat_map(|k| [1usize << k, 3usize << (k - 1)]).filter(|&t| t >= 2 && t <= n_max).collect();
            ts.sort_unstable();
            ts.dedup();
            let s = ShiftSampling { exhaustive_max: 0, ..sampling.clone() };
            for t in ts {
                let e = word_extremes(t, &s, |w| [1, t / 2, t - 1].iter().map(|&n| defect(w, n, t - n)).fold(0.0, f64::max));
                regime = e.regime;
                by_length.push((t, e.max));
            }
        }
    }
    let c_hat = by_length.iter().map(|b| b.1).fold(0.0, f64::max);
    let upper: Vec<(f64, f64)> = by_length[by_length.len() / 2..]
        .iter()
        .filter(|(_, d)| *d > 1e-12)
        .map(|(t, d)| ((*t as f64).ln(), d.ln()))
        .collect();
    let growth_exponent = if upper.len() >= 2 {
        let k = upper.len() as f64;
        let mx = upper.iter().map(|p| p.0).sum::<f64>() / k;
        let my = upper.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = upper.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = upper.iter().map(|p| (p.0 - mx).powi(2)).sum();
        if sxx > 0.0 { sxy / sxx } else { 0.0 }
    } else {
        0.0
    };
    ConstantErrorReport { c_hat, constant_error: growth_exponent < 0.25 && c_hat <= cap, growth_exponent, by_length, regime }
}

/// A non-decreasing error sequence `C_n ≥ 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ErrorSequence {
    Constant { c: f64 },
    /// `C_n = coef · n^exponent`.
    Power { coef: f64, exponent: f64 },
    /// Measured values `C_1, C_2, …`, monotonized by running max and
    /// extended by the last value.
    Tabulated { values: Vec<f64> },
}

impl ErrorSequence {
    pub fn monotonized(&self) -> Self {
        match self {
            ErrorSequence::Tabulated { values } => {
                let mut run = 0.0f64;
                ErrorSequence::Tabulated {
                    values: values
                        .iter()
                        .map(|v| {
                            run = run.max(*v);
                            run
                        })
                        .collect(),
                }
            }
            other => other.clone(),
        }
    }

    /// `C_n` for `n ≥ 1` (and `C_0 = 0`).
    pub fn value(&self, n: usize) -> f64 {
        if n == 0 {
            return 0.0;
        }
        match self {
            ErrorSequence::Constant { c } => *c,
            ErrorSequence::Power { coef, exponent } => coef * (n as f64).powf(*exponent),
            ErrorSequence::Tabulated { values } => {
                values[..n.min(values.len())].iter().cloned().fold(0.0, f64::max)
            }
        }
    }

    /// Whether `Σ C_n / n²` converges.
    pub fn summable(&self) -> bool {
        !matches!(self, ErrorSequence::Power { exponent, .. } if *exponent >= 1.0)
    }

    /// Bounds on `Σ_{k > N} C_{5k}/k²` from the integral test.
    fn tail(&self, n_terms: usize) -> (f64, f64) {
        let n = n_terms as f64;
        match self {
            ErrorSequence::Constant { c } => (c / (n + 1.0), c / n),
            ErrorSequence::Tabulated { values } => {
                let c = values.iter().cloned().fold(0.0, f64::max);
                (c / (n + 1.0), c / n)
            }
            ErrorSequence::Power { coef, exponent } => {
                let a = coef * 5f64.powf(*exponent) / (1.0 - exponent);
                (a * (n + 1.0).powf(exponent - 1.0), a * n.powf(exponent - 1.0))
            }
        }
    }
}

/// An enclosure `lo ≤ x ≤ hi`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Enclosure {
    pub lo: f64,
    pub hi: f64,
}

impl Enclosure {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// Precomputed suffix sums for `C̃_n = 5n Σ_{k≥n} C_{5k}/k²`.
#[derive(Clone, Debug)]
pub struct ErdosTable {
    pub seq: ErrorSequence,
    pub n_terms: usize,
    suffix: Vec<f64>,
    tail: (f64, f64),
}

/// Number of explicit terms in the partial sums.
pub const ERDOS_TERMS: usize = 10_000_000;

impl ErdosTable {
    /// One backward pass over `k = n_terms, …, 1`, storing suffix sums for
    /// `k ≤ store`.
    pub fn new(seq: &ErrorSequence, n_terms: usize, store: usize) -> Result<Self, SequenceError> {
        if let ErrorSequence::Power { exponent, .. } = seq {
            if *exponent >= 1.0 {
                return Err(SequenceError::Divergent(*exponent));
            }
        }
        let seq = seq.monotonized();
        let store = store.min(n_terms);
        let mut suffix = vec![0.0; store + 2];
        let mut acc = 0.0;
        for k in (1..=n_terms).rev() {
            let kf = k as f64;
            acc += seq.value(5 * k) / (kf * kf);
            if k <= store {
                suffix[k] = acc;
            }
        }
        let tail = seq.tail(n_terms);
        Ok(Self { seq, n_terms, suffix, tail })
    }

    /// Enclosure of `C̃_n` (zero at `n = 0`). Includes a worst-case bound
    /// for rounding in the summation of positive terms.
    pub fn ctilde(&self, n: usize) -> Enclosure {
        if n == 0 {
            return Enclosure { lo: 0.0, hi: 0.0 };
        }
        let partial = if n < self.suffix.len() - 1 {
            self.suffix[n]
        } else {
            (n..=self.n_terms).rev().map(|k| self.seq.value(5 * k) / (k as f64 * k as f64)).sum()
        };
        let round = partial * (self.n_terms.saturating_sub(n) as f64 + 2.0) * f64::EPSILON;
        let nf = 5.0 * n as f64;
        Enclosure { lo: nf * (partial - round + self.tail.0).max(0.0), hi: nf * (partial + round + self.tail.1) }
    }
}

/// `C̃_n` with its certified enclosure.
pub fn erdos_constant(seq: &ErrorSequence, n: usize) -> Result<Enclosure, SequenceError> {
    Ok(ErdosTable::new(seq, ERDOS_TERMS, n.max(1))?.ctilde(n))
}

#[derive(Clone, Debug, Serialize)]
pub struct ErdosRow {
    pub n: usize,
    /// `‖f_n − S_n f‖_∞ / n`.
    pub lhs: f64,
    /// `5K/n + C̃_n/n + C̃_m/m`.
    pub bound: f64,
    pub regime: Regime,
}

#[derive(Clone, Debug, Serialize)]
pub struct ErdosReport {
    pub epsilon: f64,
    pub m: usize,
    pub k_const: f64,
    pub ctilde_m: f64,
    pub n0: usize,
    pub rows: Vec<ErdosRow>,
    pub violations: usize,
    /// Violations at `n ≥ 4m`, where the bound is proved.
    pub proved_range_violations: usize,
}

/// Options for [`erdos_approximant`].
#[derive(Clone, Debug)]
pub struct ErdosOptions {
    pub m_cap: usize,
    /// Words for `n ≤ exhaustive_n` are enumerated.
    pub exhaustive_n: usize,
    /// Further `n` checked on sampled words.
    pub sampled_n: Vec<usize>,
    pub sampling: ShiftSampling,
    pub n_terms: usize,
}

impl Default for ErdosOptions {
    fn default() -> Self {
        Self {
            m_cap: 64,
            exhaustive_n: 14,
            sampled_n: vec![16, 24, 32, 48, 64, 96, 128, 192, 256, 384, 512],
            sampling: ShiftSampling::default(),
            n_terms: ERDOS_TERMS,
        }
    }
}

/// Builds the additive surrogate `f = f_m/m` and measures it against the
/// proof's bound.
pub fn erdos_approximant(
    seq: &dyn FunctionSequence,
    cseq: &ErrorSequence,
    epsilon: f64,
    opts: &ErdosOptions,
) -> Result<ErdosReport, SequenceError> {
    if !(epsilon > 0.0) {
        return Err(SequenceError::Invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    let store = (4 * opts.m_cap).max(opts.sampled_n.iter().copied().max().unwrap_or(0)) + 1;
    let table = ErdosTable::new(cseq, opts.n_terms, store)?;
    // C̃_n / n = 5 Σ_{k≥n} C_{5k}/k² is non-increasing, so checking n = m suffices.
    let m = (1..=opts.m_cap)
        .find(|&m| table.ctilde(m).hi / (m as f64) < epsilon / 3.0)
        .ok_or(SequenceError::NoAdmissibleM { cap: opts.m_cap, epsilon })?;
    let exact = ShiftSampling { exhaustive_max: opts.sampling.exhaustive_max.max(20), ..opts.sampling.clone() };
    let k_const = (0..3 * m)
        .map(|j| {
            let c = table.ctilde(j).hi;
            let e = word_extremes(j, &exact, |w| seq.eval(j, w));
            (e.max + c).abs().max((e.min + c).abs()).max((e.max - c).abs()).max((e.min - c).abs())
        })
        .fold(0.0, f64::max);
    let third = epsilon / 3.0;
    let n0 = (4 * m + 1..).find(|&n| 5.0 * k_const / (n as f64) < third).expect("unbounded search");
    let ctilde_m = table.ctilde(m).hi;
    let mut ns: Vec<(usize, &ShiftSampling)> = (1..=opts.exhaustive_n).map(|n| (n, &exact)).collect();
    let sampled = ShiftSampling { exhaustive_max: 0, ..opts.sampling.clone() };
    ns.extend(opts.sampled_n.iter().filter(|&&n| n > opts.exhaustive_n).map(|&n| (n, &sampled)));
    let rows: Vec<ErdosRow> = ns
        .into_iter()
        .map(|(n, s)| {
            let e = word_extremes(n + m - 1, s, |w| {
                let surrogate: f64 = seq.sliding(m, w, n).iter().sum::<f64>() / m as f64;
                seq.eval(n, w) - surrogate
            });
            let nf = n as f64;
            ErdosRow {
                n,
                lhs: e.abs_max() / nf,
                bound: 5.0 * k_const / nf + table.ctilde(n).hi / nf + ctilde_m / m as f64,
                regime: e.regime,
            }
        })
        .collect();
    let bad = |r: &&ErdosRow| r.lhs > r.bound;
    let violations = rows.iter().filter(bad).count();
    let proved_range_violations = rows.iter().filter(|r| r.n >= 4 * m).filter(bad).count();
    Ok(ErdosReport { epsilon, m, k_const, ctilde_m, n0, rows, violations, proved_range_violations })
}

/// Result of the corrector order-relation check.
#[derive(Clone, Debug, Serialize)]
pub struct CorrectorReport {
    pub pairs: usize,
    /// Max of `f⁺_{n+m} − f⁺_n − f⁺_m∘T^n` (must be `≤ 0`).
    pub plus_excess: f64,
    /// Max of `f⁻_n + f⁻_m∘T^n − f⁻_{n+m}` (must be `≤ 0`).
    pub minus_excess: f64,
    pub pass: bool,
}

/// Checks `f⁺_{n+m} ≪ f⁺_n + f⁺_m∘T^n` and the mirrored `f⁻` relation for
/// `m ≤ n ≤ 4m`, `n + m ≤ total_max`, over all words of length `n + m`.
pub fn corrector_relations(seq: &dyn FunctionSequence, cseq: &ErrorSequence, total_max: usize) -> Result<CorrectorReport, SequenceError> {
    let table = ErdosTable::new(cseq, ERDOS_TERMS, 5 * total_max + 1)?;
    let c = |n: usize| table.ctilde(n).mid();
    let s = ShiftSampling { exhaustive_max: 20, ..ShiftSampling::default() };
    let mut pairs = 0;
    let (mut plus, mut minus) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for m in 1..=total_max {
        for n in m..=4 * m {
            if n + m > total_max {
                break;
            }
            pairs += 1;
            let d = c(n + m) - c(n) - c(m);
            let e = word_extremes(n + m, &s, |w| seq.eval(n + m, w) - seq.eval(n, w) - seq.eval(m, &w[n..]));
            plus = plus.max(e.max + d);
            minus = minus.max(-e.min + d);
        }
    }
    Ok(CorrectorReport { pairs, plus_excess: plus, minus_excess: minus, pass: plus <= 1e-9 && minus <= 1e-9 })
}

/// One row of a Lyapunov schedule.
#[derive(Clone, Debug, Serialize)]
pub struct LyapunovRow {
    pub n: usize,
    pub estimate: f64,
    pub regime: String,
}

/// `f_n / n` along `schedule`: exact for a constant cocycle, otherwise the
/// Bernoulli(`sampling.prob`) average over seeded words.
pub fn lyapunov_schedule(c: &MatrixCocycle, schedule: &[usize], sampling: &ShiftSampling) -> Vec<LyapunovRow> {
    schedule
        .iter()
        .map(|&n| {
            let n1 = n.max(1);
            if c.is_constant() {
                return LyapunovRow { n: n1, estimate: c.log_norm(&vec![0u8; n1]) / n1 as f64, regime: "exact".into() };
            }
            let vals: Vec<f64> = (0..sampling.samples)
                .into_par_iter()
                .map(|s| c.log_norm(&BernoulliField::new(sampling.seed, s as u64, sampling.prob).word(0, n1 as i64)))
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len().max(1) as f64;
            LyapunovRow {
                n: n1,
                estimate: mean / n1 as f64,
                regime: format!("sampled({},{})", sampling.samples, sampling.seed),
            }
        })
        .collect()
}
