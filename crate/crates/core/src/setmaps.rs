//! Set maps `𝓕(ℤ^d) → V`, group actions on `V`, ergodic sums, and the two
//! semi-norms used to measure set maps.
//!
//! Conventions: `π(g)` acts on values, ergodic sums are
//! `S_F v = Σ_{g∈F} π(-g) v`, and equivariance reads `π(g) φ(F) = φ(F - g)`.
//! For the Koopman action on `{0,1}^ℤ`, `π(g) f = f ∘ T^{-g}` with
//! `(Tx)_j = x_{j+1}`, so `S_{[0,n)} f = f + f∘T + … + f∘T^{n-1}`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::folner::FolnerSequence;
use crate::lattice::{LatticeError, LatticePoint, Window};
use crate::values::{Real, ShiftFn, Value, ValueError, ValueSpace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SetMapError {
    #[error("window {0} is outside the map's domain (boxes only)")]
    Domain(String),
    #[error(transparent)]
    Value(#[from] ValueError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("action error: {0}")]
    Action(String),
}

/// A representation of `ℤ^d` on a value space.
#[derive(Clone, Debug)]
pub enum GroupAction {
    Trivial,
    /// Shift action on functions of `{0,1}^ℤ`.
    Koopman,
    Linear(LinearAction),
}

/// `π(g) = A_1^{g_1} ⋯ A_d^{g_d}` for commuting invertible generators.
#[derive(Clone, Debug)]
pub struct LinearAction {
    gens: Vec<DMatrix<f64>>,
    invs: Vec<DMatrix<f64>>,
}

impl LinearAction {
    /// Validates shapes, invertibility and commutation (to `1e-9`).
    pub fn new(gens: Vec<DMatrix<f64>>) -> Result<Self, SetMapError> {
        let m = gens.first().map(|a| a.nrows()).ok_or_else(|| SetMapError::Action("no generators".into()))?;
        let mut invs = Vec::new();
        for a in &gens {
            if a.nrows() != m || a.ncols() != m {
                return Err(SetMapError::Action("generators must be square of equal size".into()));
            }
            let inv = a.clone().try_inverse().ok_or_else(|| SetMapError::Action("singular generator".into()))?;
            invs.push(inv);
        }
        for i in 0..gens.len() {
            for j in 0..i {
                let c = &gens[i] * &gens[j] - &gens[j] * &gens[i];
                if c.amax() > 1e-9 {
                    return Err(SetMapError::Action(format!("generators {j} and {i} do not commute")));
                }
            }
        }
        Ok(Self { gens, invs })
    }

    pub fn size(&self) -> usize {
        self.gens[0].nrows()
    }

    pub fn generators(&self) -> &[DMatrix<f64>] {
        &self.gens
    }

    /// The matrix `π(g)`.
    pub fn matrix(&self, g: &LatticePoint) -> DMatrix<f64> {
        let m = self.size();
        let mut out = DMatrix::identity(m, m);
        for (i, (a, ai)) in self.gens.iter().zip(&self.invs).enumerate() {
            let e = g.coord(i);
            let base = if e >= 0 { a } else { ai };
            for _ in 0..e.unsigned_abs() {
                out = base * out;
            }
        }
        out
    }

    /// `max ‖π(g)‖_op` over `g ∈ [-r, r]^d`: a lower estimate of `C_π`.
    pub fn bound(&self, r: i64) -> f64 {
        let d = self.gens.len();
        let w = Window::centered_cube(d, r).expect("dimension checked at construction");
        w.points().iter().map(|g| operator_norm(&self.matrix(g))).fold(0.0, f64::max)
    }
}

/// Spectral norm.
pub fn operator_norm(a: &DMatrix<f64>) -> f64 {
    a.clone().svd(false, false).singular_values.iter().cloned().fold(0.0, f64::max)
}

impl GroupAction {
    pub fn linear(gens: Vec<DMatrix<f64>>) -> Result<Self, SetMapError> {
        Ok(GroupAction::Linear(LinearAction::new(gens)?))
    }

    /// `π(g) v`.
    pub fn apply(&self, g: &LatticePoint, v: &Value) -> Result<Value, SetMapError> {
        match (self, v) {
            (GroupAction::Trivial, _) => Ok(v.clone()),
            (GroupAction::Koopman, Value::Shift(f)) => Ok(Value::Shift(f.compose_shift(-g.coord(0)))),
            (GroupAction::Linear(a), Value::Vector(x)) => {
                if x.len() != a.size() {
                    return Err(ValueError::Dimension(x.len(), a.size()).into());
                }
                let y = a.matrix(g) * nalgebra::DVector::from_column_slice(x);
                Ok(Value::Vector(y.iter().copied().collect()))
            }
            _ => Err(SetMapError::Action(format!("{self} cannot act on {} values", v.kind()))),
        }
    }

    /// `C_π = sup_g ‖π(g)‖_op`; exact for trivial and Koopman actions,
    /// estimated over `[-r, r]^d` for linear ones.
    pub fn bound(&self, r: i64) -> f64 {
        match self {
            GroupAction::Trivial | GroupAction::Koopman => 1.0,
            GroupAction::Linear(a) => a.bound(r),
        }
    }
}

impl fmt::Display for GroupAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupAction::Trivial => write!(f, "trivial"),
            GroupAction::Koopman => write!(f, "koopman"),
            GroupAction::Linear(a) => write!(f, "linear({}x{})", a.size(), a.size()),
        }
    }
}

/// Which windows a map accepts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    AllWindows,
    BoxesOnly,
}

impl Domain {
    pub fn check(&self, f: &Window) -> Result<(), SetMapError> {
        if f.is_empty() {
            return Err(LatticeError::Empty.into());
        }
        match self {
            Domain::BoxesOnly if f.as_box().is_none() => Err(SetMapError::Domain(format!("{f:?}"))),
            _ => Ok(()),
        }
    }
}

/// An evaluatable set map with its value space and action.
pub trait SetMap: Send + Sync {
    fn name(&self) -> String;
    fn dim(&self) -> usize;
    fn space(&self) -> &ValueSpace;
    fn action(&self) -> &GroupAction;
    fn domain(&self) -> Domain {
        Domain::AllWindows
    }
    fn eval(&self, f: &Window) -> Result<Value, SetMapError>;
}

type EvalFn = dyn Fn(&Window) -> Result<Value, SetMapError> + Send + Sync;

/// A set map given by a closure.
#[derive(Clone)]
pub struct FnMap {
    pub name: String,
    pub dim: usize,
    pub space: ValueSpace,
    pub action: GroupAction,
    pub domain: Domain,
    rule: Arc<EvalFn>,
}

impl FnMap {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        space: ValueSpace,
        action: GroupAction,
        domain: Domain,
        rule: impl Fn(&Window) -> Result<Value, SetMapError> + Send + Sync + 'static,
    ) -> Self {
        Self { name: name.into(), dim, space, action, domain, rule: Arc::new(rule) }
    }
}

impl SetMap for FnMap {
    fn name(&self) -> String {
        self.name.clone()
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn space(&self) -> &ValueSpace {
        &self.space
    }
    fn action(&self) -> &GroupAction {
        &self.action
    }
    fn domain(&self) -> Domain {
        self.domain
    }
    fn eval(&self, f: &Window) -> Result<Value, SetMapError> {
        self.domain.check(f)?;
        (self.rule)(f)
    }
}

/// `S_F v = Σ_{g∈F} π(-g) v`.
pub fn ergodic_sum(v: &Value, f: &Window, action: &GroupAction) -> Result<Value, SetMapError> {
    match (action, v) {
        (GroupAction::Trivial, _) => Ok(v.scale_real(&Real::int(f.len() as i64))),
        (GroupAction::Koopman, Value::Shift(s)) => {
            let mut out = ShiftFn::constant(s.constant * f.len() as f64);
            let body = ShiftFn { constant: 0.0, terms: s.terms.clone() };
            for g in f.points() {
                for t in body.compose_shift(g.coord(0)).terms {
                    out.push(t);
                }
            }
            Ok(Value::Shift(out))
        }
        (GroupAction::Linear(a), Value::Vector(x)) => {
            let xv = nalgebra::DVector::from_column_slice(x);
            let mut acc = nalgebra::DVector::zeros(x.len());
            for g in f.points() {
                acc += a.matrix(&g.neg()) * &xv;
            }
            Ok(Value::Vector(acc.iter().copied().collect()))
        }
        _ => Err(SetMapError::Action(format!("{action} cannot act on {} values", v.kind()))),
    }
}

/// `A_F v = S_F v / |F|`.
pub fn ergodic_average(v: &Value, f: &Window, action: &GroupAction) -> Result<Value, SetMapError> {
    Ok(ergodic_sum(v, f, action)?.div_count(f.len()))
}

/// The additive (Birkhoff) map `F ↦ S_F v`.
#[derive(Clone, Debug)]
pub struct BirkhoffMap {
    pub v: Value,
    pub dim: usize,
    pub space: ValueSpace,
    pub action: GroupAction,
}

impl BirkhoffMap {
    pub fn new(v: Value, dim: usize, space: ValueSpace, action: GroupAction) -> Self {
        Self { v, dim, space, action }
    }
}

impl SetMap for BirkhoffMap {
    fn name(&self) -> String {
        format!("birkhoff[{}]", self.action)
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn space(&self) -> &ValueSpace {
        &self.space
    }
    fn action(&self) -> &GroupAction {
        &self.action
    }
    fn eval(&self, f: &Window) -> Result<Value, SetMapError> {
        Domain::AllWindows.check(f)?;
        ergodic_sum(&self.v, f, &self.action)
    }
}

/// Convenience constructor matching the additive-map vocabulary.
pub fn birkhoff_map(v: Value, dim: usize, space: ValueSpace, action: GroupAction) -> BirkhoffMap {
    BirkhoffMap::new(v, dim, space, action)
}

/// `max_{F ∈ family} ‖φ(F)‖ / |F|`, a lower bound for `|||φ|||_sup`.
pub fn sup_seminorm(phi: &dyn SetMap, family: &[Window]) -> Result<f64, SetMapError> {
    let vals: Vec<f64> = family
        .par_iter()
        .map(|f| phi.eval(f).map(|v| phi.space().norm(&v) / f.len() as f64))
        .collect::<Result<_, _>>()?;
    Ok(vals.into_iter().fold(0.0, f64::max))
}

/// Tail sups of `‖φ(F_n)‖/|F_n|` along a Følner sequence.
#[derive(Clone, Debug, Serialize)]
pub struct SeminormReport {
    pub sup_estimate: f64,
    /// `(n, ‖φ(F_n)‖/|F_n|)`.
    pub values: Vec<(usize, f64)>,
    /// `(n, max_{n ≤ k ≤ N} value_k)`, non-increasing in `n`.
    pub tail: Vec<(usize, f64)>,
    pub verdict: String,
}

/// Running tail maxima of a sequence, from the right.
pub fn tail_sups(values: &[(usize, f64)]) -> Vec<(usize, f64)> {
    let mut out = vec![(0, 0.0); values.len()];
    let mut m = f64::NEG_INFINITY;
    for (i, (n, v)) in values.iter().enumerate().rev() {
        m = m.max(*v);
        out[i] = (*n, m);
    }
    out
}

/// Evaluates `‖φ(F_n)‖/|F_n|` for each `n` in `schedule`.
pub fn asymptotic_seminorm_at(
    phi: &dyn SetMap,
    seq: &FolnerSequence,
    schedule: &[usize],
) -> Result<SeminormReport, SetMapError> {
    let values: Vec<(usize, f64)> = schedule
        .par_iter()
        .map(|&n| {
            let f = seq.window(n)?;
            let v = phi.eval(&f)?;
            Ok((n, phi.space().norm(&v) / f.len() as f64))
        })
        .collect::<Result<_, SetMapError>>()?;
    let tail = tail_sups(&values);
    let sup_estimate = values.iter().map(|v| v.1).fold(0.0, f64::max);
    let first = tail.first().map_or(0.0, |t| t.1);
    let last = tail.last().map_or(0.0, |t| t.1);
    let verdict = if last == 0.0 {
        "vanishing".to_string()
    } else if last < 0.5 * first {
        "decaying".to_string()
    } else {
        "not decaying at this scale".to_string()
    };
    Ok(SeminormReport { sup_estimate, values, tail, verdict })
}

/// `n = 1..=N` version of [`asymptotic_seminorm_at`].
pub fn asymptotic_seminorm(phi: &dyn SetMap, seq: &FolnerSequence, n_max: usize) -> Result<SeminormReport, SetMapError> {
    let schedule: Vec<usize> = (1..=n_max.max(2)).collect();
    asymptotic_seminorm_at(phi, seq, &schedule)
}

/// Worst equivariance defect over sampled `(g, F)`.
#[derive(Clone, Debug, Serialize)]
pub struct EquivarianceReport {
    pub trials: usize,
    pub max_defect: f64,
    pub worst_shift: Vec<i64>,
    pub worst_window: Option<Window>,
    pub pass: bool,
}

/// Tolerance for equivariance defects on float paths.
pub const EQUIVARIANCE_TOL: f64 = 1e-9;

/// Samples `g ∈ [-radius, radius]^d` and `F` from `family`, and measures
/// `‖π(g) φ(F) − φ(F − g)‖`.
pub fn equivariance_check(
    phi: &dyn SetMap,
    family: &[Window],
    trials: usize,
    radius: i64,
    seed: u64,
) -> Result<EquivarianceReport, SetMapError> {
    let d = phi.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cases: Vec<(LatticePoint, usize)> = (0..trials.max(1))
        .map(|_| {
            let c: Vec<i64> = (0..d).map(|_| rng.gen_range(-radius..=radius)).collect();
            (LatticePoint::new(&c).expect("dimension"), rng.gen_range(0..family.len()))
        })
        .collect();
    let defects: Vec<f64> = cases
        .par_iter()
        .map(|(g, i)| {
            let f = &family[*i];
            let lhs = phi.action().apply(g, &phi.eval(f)?)?;
            let rhs = phi.eval(&f.translate(&g.neg()))?;
            Ok(phi.space().norm(&lhs.sub(&rhs)?))
        })
        .collect::<Result<_, SetMapError>>()?;
    let (mut worst, mut max) = (0, 0.0);
    for (k, v) in defects.iter().enumerate() {
        if *v > max {
            max = *v;
            worst = k;
        }
    }
    let (g, i) = &cases[worst];
    Ok(EquivarianceReport {
        trials: cases.len(),
        max_defect: max,
        worst_shift: g.coords(d).to_vec(),
        worst_window: (max > 0.0).then(|| family[*i].clone()),
        pass: max <= EQUIVARIANCE_TOL,
    })
}
