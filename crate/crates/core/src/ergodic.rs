//! Ergodic-theorem experiments: Cesàro averages of finite-dimensional
//! representations, pointwise averages over Bernoulli shifts, and integrals
//! of cylinder coboundaries.
//!
//! Pointwise statements are only ever checked per sampled configuration at
//! finite `n`, against CLT tolerances built from the exact long-run variance.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::folner::FolnerSequence;
use crate::lattice::{check_dim, LatticeError, LatticePoint, Window};
use crate::sequences::typewriter;
use crate::setmaps::{operator_norm, LinearAction, SetMap, SetMapError};
use crate::values::shift::{BernoulliField, Cylinder, ShiftError};
use crate::values::{Real, Value};

/// Absolute slack for float sums that are zero in exact arithmetic.
pub const ROUNDING_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ErgodicError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    SetMap(#[from] SetMapError),
    #[error(transparent)]
    Shift(#[from] ShiftError),
    #[error("Cesàro averages do not converge by n = {n}: residual {residual:.3e}, power growth {growth:.3e} ({reason})")]
    NonConvergent { n: usize, residual: f64, growth: f64, reason: String },
    #[error("invalid experiment: {0}")]
    Invalid(String),
}

/// The Bernoulli shift on `{0,1}^{ℤ^d}`: coordinates are i.i.d. with
/// `P(x_g = 1) = p`, and sample `t` is the configuration on stream `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftSystem {
    pub dim: usize,
    pub p: f64,
    pub seed: u64,
    pub samples: usize,
}

impl ShiftSystem {
    pub fn new(dim: usize, p: f64, seed: u64, samples: usize) -> Result<Self, ErgodicError> {
        check_dim(dim)?;
        if !(0.0..=1.0).contains(&p) {
            return Err(ErgodicError::Invalid(format!("p = {p} is not a probability")));
        }
        Ok(Self { dim, p, seed, samples })
    }

    pub fn field(&self, sample: usize) -> BernoulliField {
        BernoulliField::new(self.seed, sample as u64, self.p)
    }
}

fn stacked(gens: &[DMatrix<f64>], transpose: bool) -> DMatrix<f64> {
    let m = gens[0].nrows();
    let mut out = DMatrix::zeros(m * gens.len(), m);
    for (i, a) in gens.iter().enumerate() {
        let a = if transpose { a.transpose() } else { a.clone() };
        out.view_mut((i * m, 0), (m, m)).copy_from(&(a - DMatrix::identity(m, m)));
    }
    out
}

/// Orthonormal basis (as columns) of the kernel of `a`.
fn kernel(a: &DMatrix<f64>) -> DMatrix<f64> {
    let m = a.ncols();
    let svd = a.clone().svd(false, true);
    let vt = svd.v_t.expect("requested v_t");
    let top = svd.singular_values.iter().cloned().fold(1.0, f64::max);
    let cols: Vec<_> = (0..svd.singular_values.len())
        .filter(|&j| svd.singular_values[j] <= 1e-9 * top)
        .map(|j| vt.row(j).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(m, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// The projection onto the common fixed space of the generators along the
/// span of the ranges of `A_i − I`, or `None` when those two subspaces are
/// not complementary (which rules out power-boundedness).
pub fn invariant_projection(action: &LinearAction) -> Option<DMatrix<f64>> {
    let gens = action.generators();
    let m = action.size();
    let u = kernel(&stacked(gens, false));
    let w = kernel(&stacked(gens, true));
    if u.ncols() != w.ncols() {
        return None;
    }
    if u.ncols() == 0 {
        return Some(DMatrix::zeros(m, m));
    }
    let wu = w.transpose() * &u;
    let smallest = wu.clone().svd(false, false).singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    if smallest < 1e-9 {
        return None;
    }
    Some(&u * wu.try_inverse()? * w.transpose())
}

/// `A_{F_n} = |F_n|^{-1} Σ_{g∈F_n} π(−g)` together with
/// `max_{g∈F_n} ‖π(−g)‖`.
pub fn cesaro_average(action: &LinearAction, seq: &FolnerSequence, n: usize) -> Result<(DMatrix<f64>, f64), ErgodicError> {
    let m = action.size();
    let d = action.generators().len();
    if seq.dim() != d {
        return Err(ErgodicError::Invalid(format!("{d} generators but a {}-dimensional sequence", seq.dim())));
    }
    if let Some((lo, hi)) = seq.box_corners(n) {
        // Commuting generators: the box average factors over the axes.
        let mut out = DMatrix::identity(m, m);
        let mut growth = 1.0;
        for i in 0..d {
            let mut e = [0i64; 3];
            e[i] = -lo[i];
            let start = action.matrix(&LatticePoint::new(&e[..d])?);
            e[i] = -1;
            let step = action.matrix(&LatticePoint::new(&e[..d])?);
            let mut power = start;
            let mut sum = DMatrix::zeros(m, m);
            let mut axis_growth: f64 = 0.0;
            for _ in lo[i]..hi[i] {
                axis_growth = axis_growth.max(operator_norm(&power));
                sum += &power;
                power = &step * power;
            }
            out = sum / (hi[i] - lo[i]) as f64 * out;
            growth *= axis_growth;
        }
        return Ok((out, growth));
    }
    let f = seq.window(n)?;
    let mut sum = DMatrix::zeros(m, m);
    let mut growth: f64 = 0.0;
    for g in f.points() {
        let a = action.matrix(&g.neg());
        growth = growth.max(operator_norm(&a));
        sum += a;
    }
    Ok((sum / f.len() as f64, growth))
}

#[derive(Clone, Debug, Serialize)]
pub struct ProjectionReport {
    /// Row-major entries of `P`.
    pub p: Vec<Vec<f64>>,
    pub rank: usize,
    /// `(n, ‖A_{F_n} − P‖_op)`.
    pub residuals: Vec<(usize, f64)>,
    /// First scheduled `n` with residual below the tolerance.
    pub converged_at: Option<usize>,
    pub tolerance: f64,
    /// `‖P² − P‖_op`.
    pub idempotency_defect: f64,
    /// `max_i max(‖A_i P − P‖, ‖P A_i − P‖)`; the first term also bounds
    /// how far the columns of `P` are from `Inv(π)`.
    pub intertwining_defect: f64,
    /// `max ‖π(−g)‖` over the last window.
    pub growth: f64,
}

impl ProjectionReport {
    pub fn matrix(&self) -> DMatrix<f64> {
        let m = self.p.len();
        DMatrix::from_fn(m, m, |i, j| self.p[i][j])
    }
}

/// Cesàro averages along `seq` at the scheduled `n`, compared with the
/// projection onto the invariant vectors.
///
/// A residual that never drops below `tol` is reported through
/// `converged_at = None`; it becomes an error only together with evidence
/// of unbounded powers (growth between the last two scheduled windows, or
/// fixed and co-fixed spaces that fail to be complementary).
pub fn mean_ergodic_projection(
    action: &LinearAction,
    seq: &FolnerSequence,
    schedule: &[usize],
    tol: f64,
) -> Result<ProjectionReport, ErgodicError> {
    if schedule.is_empty() {
        return Err(ErgodicError::Invalid("empty schedule".into()));
    }
    let averages = schedule
        .par_iter()
        .map(|&n| cesaro_average(action, seq, n).map(|(a, g)| (n, a, g)))
        .collect::<Result<Vec<_>, _>>()?;
    let growth_at = |k: usize| averages[k].2;
    let last = averages.len() - 1;
    let growth = growth_at(last);
    let growth_ratio = if last > 0 { growth / growth_at(last - 1) } else { 1.0 };
    let p = match invariant_projection(action) {
        Some(p) => p,
        None => {
            return Err(ErgodicError::NonConvergent {
                n: schedule[last],
                residual: f64::NAN,
                growth,
                reason: "fixed and co-fixed spaces are not complementary".into(),
            })
        }
    };
    let residuals: Vec<(usize, f64)> = averages.iter().map(|(n, a, _)| (*n, operator_norm(&(a - &p)))).collect();
    let converged_at = residuals.iter().find(|r| r.1 < tol).map(|r| r.0);
    let final_residual = residuals[last].1;
    if final_residual >= tol && growth_ratio > 1.5 {
        return Err(ErgodicError::NonConvergent {
            n: schedule[last],
            residual: final_residual,
            growth,
            reason: format!("powers grew by a factor {growth_ratio:.3} over the last step"),
        });
    }
    let idempotency_defect = operator_norm(&(&p * &p - &p));
    let intertwining_defect = action
        .generators()
        .iter()
        .map(|a| operator_norm(&(a * &p - &p)).max(operator_norm(&(&p * a - &p))))
        .fold(0.0, f64::max);
    let m = p.nrows();
    let rank = p.trace().round().max(0.0) as usize;
    Ok(ProjectionReport {
        p: (0..m).map(|i| (0..m).map(|j| p[(i, j)]).collect()).collect(),
        rank,
        residuals,
        converged_at,
        tolerance: tol,
        idempotency_defect,
        intertwining_defect,
        growth,
    })
}

/// The rotation angle `2π(√2 − 1)`.
pub fn irrational_angle() -> f64 {
    2.0 * std::f64::consts::PI * (std::f64::consts::SQRT_2 - 1.0)
}

/// `π(1) = diag(1, R_θ)` on `ℝ³`.
pub fn rotation_block_action(theta: f64) -> LinearAction {
    let (s, c) = theta.sin_cos();
    let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c]);
    LinearAction::new(vec![a]).expect("rotations are invertible")
}

/// Mean of a cylinder function under the Bernoulli(`p`) product measure.
pub fn exact_mean(f: &Cylinder, p: f64) -> f64 {
    f.mean(p)
}

/// The pointwise product of two cylinder functions.
pub fn cylinder_product(a: &Cylinder, b: &Cylinder) -> Result<Cylinder, ErgodicError> {
    let mut support: Vec<LatticePoint> = a.support().iter().chain(b.support()).copied().collect();
    support.sort_unstable();
    support.dedup();
    if support.len() > 20 {
        return Err(ShiftError::Support.into());
    }
    let pos = |c: &Cylinder| -> Vec<usize> { c.support().iter().map(|s| support.binary_search(s).expect("in union")).collect() };
    let (pa, pb) = (pos(a), pos(b));
    let pick = |idx: usize, ps: &[usize]| ps.iter().enumerate().fold(0usize, |j, (k, &q)| j | (((idx >> q) & 1) << k));
    let table = (0..1usize << support.len()).map(|idx| a.table()[pick(idx, &pa)] * b.table()[pick(idx, &pb)]).collect();
    Ok(Cylinder::new(a.dim(), support, table)?)
}

/// `Σ_k Cov(f, f∘T^k)` over the finitely many `k` with overlapping supports.
pub fn long_run_variance(f: &Cylinder, p: f64) -> Result<f64, ErgodicError> {
    let mean = f.mean(p);
    let mut lags: Vec<LatticePoint> =
        f.support().iter().flat_map(|s| f.support().iter().map(move |t| s.sub(t))).collect();
    lags.sort_unstable();
    lags.dedup();
    let mut acc = 0.0;
    for k in &lags {
        acc += cylinder_product(f, &f.shifted(k))?.mean(p) - mean * mean;
    }
    Ok(acc.max(0.0))
}

/// `Σ_{g∈F} f(T^g ω)` for the configuration `field`.
fn window_sum(f: &Cylinder, field: &BernoulliField, seq: &FolnerSequence, n: usize) -> Result<(f64, usize), ErgodicError> {
    let d = f.dim();
    if d == 1 {
        if let Some((lo, hi)) = seq.box_corners(n) {
            let smin = f.support().iter().map(|s| s.coord(0)).min().unwrap_or(0);
            let smax = f.support().iter().map(|s| s.coord(0)).max().unwrap_or(0);
            let base = lo[0] + smin;
            let word = field.word(base, hi[0] + smax);
            let mut acc = 0.0;
            for g in lo[0]..hi[0] {
                acc += f.eval_with(|s| word[(s.coord(0) + g - base) as usize]);
            }
            return Ok((acc, (hi[0] - lo[0]) as usize));
        }
    }
    let w = seq.window(n)?;
    let acc = w.points().iter().map(|g| f.eval_with(|s| field.bit(&s.add(g), d))).sum();
    Ok((acc, w.len()))
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

#[derive(Clone, Debug, Serialize)]
pub struct PointwiseRow {
    pub trial: usize,
    pub n: usize,
    pub average: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct QuantileRow {
    pub n: usize,
    pub size: usize,
    /// `3 σ_LR / √|F_n|`.
    pub tolerance: f64,
    pub q50: f64,
    pub q90: f64,
    pub q99: f64,
    pub max: f64,
    pub within: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct PointwiseReport {
    pub mean: f64,
    pub long_run_variance: f64,
    pub trials: usize,
    pub rows: Vec<PointwiseRow>,
    pub summary: Vec<QuantileRow>,
    /// Mean of the last-scale averages over trials, and its tolerance.
    pub sample_mean: f64,
    pub sample_mean_tolerance: f64,
    pub consistent: bool,
}

impl PointwiseReport {
    /// Trials within tolerance at the last scheduled scale.
    pub fn final_within(&self) -> usize {
        self.summary.last().map_or(0, |s| s.within)
    }
}

/// `n ↦ |A_{F_n} f(ω) − ∫f dμ|` for `sys.samples` sampled configurations.
pub fn pointwise_experiment(
    f: &Cylinder,
    sys: &ShiftSystem,
    seq: &FolnerSequence,
    schedule: &[usize],
) -> Result<PointwiseReport, ErgodicError> {
    if f.dim() != sys.dim || seq.dim() != sys.dim {
        return Err(ErgodicError::Invalid("function, system and sequence dimensions differ".into()));
    }
    let mean = f.mean(sys.p);
    let sigma2 = long_run_variance(f, sys.p)?;
    let per_trial = (0..sys.samples)
        .into_par_iter()
        .map(|t| {
            let field = sys.field(t);
            schedule
                .iter()
                .map(|&n| {
                    let (sum, size) = window_sum(f, &field, seq, n)?;
                    let average = sum / size as f64;
                    Ok((PointwiseRow { trial: t, n, average, residual: (average - mean).abs() }, size))
                })
                .collect::<Result<Vec<_>, ErgodicError>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut summary = Vec::new();
    for (k, &n) in schedule.iter().enumerate() {
        let size = per_trial.first().map_or(0, |r| r[k].1);
        let tolerance = 3.0 * (sigma2 / size.max(1) as f64).sqrt();
        let mut res: Vec<f64> = per_trial.iter().map(|r| r[k].0.residual).collect();
        res.sort_by(f64::total_cmp);
        let within = res.iter().filter(|&&r| r <= tolerance + ROUNDING_SLACK).count();
        summary.push(QuantileRow {
            n,
            size,
            tolerance,
            q50: quantile(&res, 0.5),
            q90: quantile(&res, 0.9),
            q99: quantile(&res, 0.99),
            max: res.last().copied().unwrap_or(0.0),
            within,
        });
    }
    let last = schedule.len().saturating_sub(1);
    let finals: Vec<f64> = per_trial.iter().filter_map(|r| r.get(last).map(|x| x.0.average)).collect();
    let sample_mean = finals.iter().sum::<f64>() / finals.len().max(1) as f64;
    let size = summary.last().map_or(1, |s| s.size).max(1);
    let sample_mean_tolerance = 3.0 * (sigma2 / (size * finals.len().max(1)) as f64).sqrt() + ROUNDING_SLACK;
    Ok(PointwiseReport {
        mean,
        long_run_variance: sigma2,
        trials: sys.samples,
        rows: per_trial.into_iter().flatten().map(|(r, _)| r).collect(),
        summary,
        sample_mean,
        consistent: (sample_mean - mean).abs() <= sample_mean_tolerance,
        sample_mean_tolerance,
    })
}

/// One row of the triangle decomposition
/// `|φ(F)/|F| − f̄| ≤ |φ(F)/|F| − A_F f| + |A_F f − f̄|` at one sample.
#[derive(Clone, Debug, Serialize)]
pub struct TriangleRow {
    pub trial: usize,
    pub n: usize,
    /// `|φ(F_n)(ω)/|F_n| − A_{F_n} f(ω)|`.
    pub realization_term: f64,
    /// `|A_{F_n} f(ω) − ∫f dμ|`.
    pub averaging_term: f64,
    /// `|φ(F_n)(ω)/|F_n| − ∫f dμ|`.
    pub direct: f64,
}

impl TriangleRow {
    pub fn holds(&self) -> bool {
        self.direct <= self.realization_term + self.averaging_term + ROUNDING_SLACK
    }
}

/// Evaluates a Koopman-equivariant map on `{0,1}^ℤ` pointwise along `seq`
/// and splits its distance to `∫v dμ` into the realization and averaging
/// terms.
pub fn asymptotically_additive_pointwise(
    phi: &dyn SetMap,
    v: &Cylinder,
    sys: &ShiftSystem,
    seq: &FolnerSequence,
    schedule: &[usize],
) -> Result<Vec<TriangleRow>, ErgodicError> {
    if phi.dim() != 1 || sys.dim != 1 || v.dim() != 1 {
        return Err(ErgodicError::Invalid("pointwise evaluation of set maps needs d = 1".into()));
    }
    let mean = v.mean(sys.p);
    let rows = (0..sys.samples)
        .into_par_iter()
        .map(|t| {
            let field = sys.field(t);
            schedule
                .iter()
                .map(|&n| {
                    let f = seq.window(n)?;
                    let value = match phi.eval(&f)? {
                        Value::Shift(s) => match s.support() {
                            Some((lo, hi)) => s.eval_word(&field.word(lo, hi), lo),
                            None => s.constant,
                        },
                        Value::Scalar(r) => r.to_f64(),
                        other => {
                            return Err(ErgodicError::Invalid(format!("{} values cannot be sampled", other.kind())))
                        }
                    };
                    let (sum, size) = window_sum(v, &field, seq, n)?;
                    let avg = sum / size as f64;
                    let scaled = value / size as f64;
                    Ok(TriangleRow {
                        trial: t,
                        n,
                        realization_term: (scaled - avg).abs(),
                        averaging_term: (avg - mean).abs(),
                        direct: (scaled - mean).abs(),
                    })
                })
                .collect::<Result<Vec<_>, ErgodicError>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(rows.into_iter().flatten().collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct TypewriterRow {
    pub n: usize,
    pub l1: f64,
    pub value: f64,
}

/// The typewriter sequence converges to 0 in `L¹` while oscillating at `omega`.
#[derive(Clone, Debug, Serialize)]
pub struct TypewriterReport {
    pub omega: f64,
    pub rows: Vec<TypewriterRow>,
    /// `max_n n ‖f_n‖₁`.
    pub max_scaled_l1: f64,
    /// Largest scanned `n` with `f_n(ω) = 1`, and with `f_n(ω) = 0`.
    pub last_one: usize,
    pub last_zero: usize,
}

impl TypewriterReport {
    /// Both values recur past every `N ≤ horizon`.
    pub fn oscillates_beyond(&self, horizon: usize) -> bool {
        self.last_one > horizon && self.last_zero > horizon
    }
}

pub fn typewriter_distinction(n_max: usize, omega: f64) -> TypewriterReport {
    let rows: Vec<TypewriterRow> = (1..=n_max)
        .map(|n| {
            let f = typewriter(n);
            TypewriterRow { n, l1: f.l1().to_f64(), value: f.eval(omega).to_f64() }
        })
        .collect();
    let max_scaled_l1 = rows.iter().map(|r| r.n as f64 * r.l1).fold(0.0, f64::max);
    let last = |v: f64| rows.iter().rev().find(|r| r.value == v).map_or(0, |r| r.n);
    TypewriterReport { omega, max_scaled_l1, last_one: last(1.0), last_zero: last(0.0), rows }
}

/// `∫ (h − h∘T^g) dμ`, computed from the product-measure moments of the
/// re-tabulated difference.
pub fn coboundary_integral_check(h: &Cylinder, g: &LatticePoint, p: f64) -> Result<f64, ErgodicError> {
    Ok(Cylinder::sum(&[h.clone(), h.shifted(g).scaled(-1.0)])?.mean(p))
}

#[derive(Clone, Debug, Serialize)]
pub struct CoboundaryIntegralReport {
    pub trials: usize,
    pub max_abs: f64,
    pub pass: bool,
}

/// Integrates random combinations `Σ c_j (h_j − h_j∘T^{g_j})` of cylinder
/// coboundaries.
pub fn random_coboundary_integrals(dim: usize, p: f64, trials: usize, seed: u64) -> Result<CoboundaryIntegralReport, ErgodicError> {
    check_dim(dim)?;
    let point = |rng: &mut ChaCha8Rng| -> Result<LatticePoint, ErgodicError> {
        let c: Vec<i64> = (0..dim).map(|_| rng.gen_range(-3..=3)).collect();
        Ok(LatticePoint::new(&c)?)
    };
    let max_abs = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let mut parts = Vec::new();
            for _ in 0..rng.gen_range(1..=2) {
                let mut support = Vec::new();
                let size = rng.gen_range(1..=4);
                while support.len() < size {
                    let s = point(&mut rng)?;
                    if !support.contains(&s) {
                        support.push(s);
                    }
                }
                let table = (0..1usize << size).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let h = Cylinder::new(dim, support, table)?.scaled(rng.gen_range(-2.0..2.0));
                let g = point(&mut rng)?;
                parts.push(h.clone());
                parts.push(h.shifted(&g).scaled(-1.0));
            }
            Ok(Cylinder::sum(&parts)?.mean(p).abs())
        })
        .collect::<Result<Vec<f64>, ErgodicError>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(CoboundaryIntegralReport { trials, max_abs, pass: max_abs <= ROUNDING_SLACK })
}

/// Empirical means of `h` and `h∘T^g` over the same samples.
#[derive(Clone, Debug, Serialize)]
pub struct InvarianceReport {
    pub mean: f64,
    pub shifted_mean: f64,
    pub tolerance: f64,
    pub pass: bool,
}

pub fn measure_preservation_check(h: &Cylinder, g: &LatticePoint, sys: &ShiftSystem) -> Result<InvarianceReport, ErgodicError> {
    let shifted = h.shifted(g);
    let at_origin = Window::singleton(sys.dim, LatticePoint::ORIGIN)?;
    let seq = FolnerSequence::Custom { windows: vec![at_origin] };
    let pairs = (0..sys.samples)
        .into_par_iter()
        .map(|t| {
            let field = sys.field(t);
            Ok((window_sum(h, &field, &seq, 1)?.0, window_sum(&shifted, &field, &seq, 1)?.0))
        })
        .collect::<Result<Vec<(f64, f64)>, ErgodicError>>()?;
    let k = pairs.len().max(1) as f64;
    let mean = pairs.iter().map(|x| x.0).sum::<f64>() / k;
    let shifted_mean = pairs.iter().map(|x| x.1).sum::<f64>() / k;
    let var = cylinder_product(h, h)?.mean(sys.p) - h.mean(sys.p).powi(2);
    // Difference of two means with equal variance, at most 2σ²/k.
    let tolerance = 3.0 * (2.0 * var.max(0.0) / k).sqrt() + ROUNDING_SLACK;
    Ok(InvarianceReport { mean, shifted_mean, tolerance, pass: (mean - shifted_mean).abs() <= tolerance })
}

/// `|sin(nθ/2) / sin(θ/2)| / n`, the norm of the rotation-block average.
pub fn rotation_average_norm(n: usize, theta: f64) -> f64 {
    ((n as f64 * theta / 2.0).sin() / (theta / 2.0).sin()).abs() / n as f64
}

/// Exact rational moment `E[∏ x_j^{e_j}] = p^{#support}` for monomials.
pub fn monomial_moment(p: &Real, degree: usize) -> Real {
    (0..degree).fold(Real::one(), |acc, _| &acc * p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::setmaps::{birkhoff_map, FnMap, GroupAction};
    use crate::values::{ShiftFn, ShiftSampling, ValueSpace};
    use std::sync::Arc;

    fn pow2_schedule(k: u32) -> Vec<usize> {
        (0..=k).map(|i| 1usize << i).collect()
    }

    #[test]
    fn identity_projects_to_identity() {
        let a = LinearAction::new(vec![DMatrix::identity(2, 2)]).unwrap();
        let r = mean_ergodic_projection(&a, &FolnerSequence::Boxes { dim: 1 }, &[1, 4], 1e-9).unwrap();
        assert!((r.matrix() - DMatrix::<f64>::identity(2, 2)).amax() < 1e-12);
        assert_eq!(r.converged_at, Some(1));
    }

    #[test]
    fn quarter_turn_cancels_on_full_cycles() {
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let a = LinearAction::new(vec![rot]).unwrap();
        let r = mean_ergodic_projection(&a, &FolnerSequence::Boxes { dim: 1 }, &[4, 8, 12], 1e-9).unwrap();
        assert_eq!(r.rank, 0);
        assert!(r.residuals.iter().all(|x| x.1 < 1e-12));
    }

    #[test]
    fn rotation_block_matches_closed_form() {
        let theta = irrational_angle();
        let a = rotation_block_action(theta);
        let r = mean_ergodic_projection(&a, &FolnerSequence::Boxes { dim: 1 }, &pow2_schedule(12), 1e-9).unwrap();
        let expect = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.0, 0.0]));
        assert!((r.matrix() - expect).amax() < 1e-9);
        for (n, res) in &r.residuals {
            assert!((res - rotation_average_norm(*n, theta)).abs() < 1e-9, "n = {n}");
            assert!(*res <= 1.04 / *n as f64);
        }
        assert!(r.idempotency_defect < 1e-9 && r.intertwining_defect < 1e-9);
    }

    #[test]
    fn jordan_block_is_reported_as_non_convergent() {
        let j = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let a = LinearAction::new(vec![j]).unwrap();
        let err = mean_ergodic_projection(&a, &FolnerSequence::Boxes { dim: 1 }, &[64, 128], 1e-9).unwrap_err();
        assert!(matches!(err, ErgodicError::NonConvergent { .. }));
        let expanding = LinearAction::new(vec![DMatrix::from_element(1, 1, 0.5)]).unwrap();
        let err = mean_ergodic_projection(&expanding, &FolnerSequence::Boxes { dim: 1 }, &[8, 16], 1e-9).unwrap_err();
        assert!(matches!(err, ErgodicError::NonConvergent { .. }));
    }

    #[test]
    fn two_dimensional_box_average_factors() {
        let theta = irrational_angle();
        let r1 = rotation_block_action(theta).generators()[0].clone();
        let r2 = rotation_block_action(2.0 * theta).generators()[0].clone();
        let a = LinearAction::new(vec![r1, r2]).unwrap();
        let brute = |w: &Window| {
            let mut sum = DMatrix::zeros(3, 3);
            for g in w.points() {
                sum += a.matrix(&g.neg());
            }
            sum / w.len() as f64
        };
        let boxed = cesaro_average(&a, &FolnerSequence::Boxes { dim: 2 }, 5).unwrap().0;
        assert!((boxed - brute(&Window::cube(2, 5).unwrap())).amax() < 1e-12);
        let ell = Window::from_coords(2, &[vec![0, 0], vec![1, 0], vec![0, 1], vec![-3, 2]]).unwrap();
        let custom = FolnerSequence::Custom { windows: vec![ell.clone()] };
        assert!(custom.box_corners(1).is_none());
        assert!((cesaro_average(&a, &custom, 1).unwrap().0 - brute(&ell)).amax() < 1e-12);
    }

    #[test]
    fn cylinder_moments_and_variance() {
        let p = 0.3;
        let x0x1 = Cylinder::monomial(1, vec![LatticePoint::scalar(0), LatticePoint::scalar(1)]).unwrap();
        assert!((exact_mean(&x0x1, p) - p * p).abs() < 1e-15);
        // Var(x0x1) + 2 Cov(x0x1, x1x2).
        let expect = p * p * (1.0 - p * p) + 2.0 * (p.powi(3) - p.powi(4));
        assert!((long_run_variance(&x0x1, p).unwrap() - expect).abs() < 1e-15);
        assert!((long_run_variance(&Cylinder::coordinate(), p).unwrap() - p * (1.0 - p)).abs() < 1e-15);
        assert_eq!(monomial_moment(&Real::ratio(1, 2), 3), Real::ratio(1, 8));
    }

    #[test]
    fn constant_function_has_zero_residual() {
        let c = Cylinder::new(1, vec![LatticePoint::scalar(0)], vec![0.7, 0.7]).unwrap();
        let sys = ShiftSystem::new(1, 0.5, 9, 8).unwrap();
        let r = pointwise_experiment(&c, &sys, &FolnerSequence::Boxes { dim: 1 }, &[1, 10, 100]).unwrap();
        assert!(r.rows.iter().all(|x| x.residual <= 1e-12));
        assert_eq!(r.final_within(), 8);
    }

    #[test]
    fn birkhoff_map_has_zero_realization_term() {
        let sys = ShiftSystem::new(1, 0.5, 3, 6).unwrap();
        let v = Cylinder::monomial(1, vec![LatticePoint::scalar(0), LatticePoint::scalar(2)]).unwrap();
        let word = Arc::new(v.clone().into_word().unwrap());
        let phi = birkhoff_map(Value::Shift(ShiftFn::single(word.clone(), 0)), 1, ValueSpace::shift_sup(ShiftSampling::default()), GroupAction::Koopman);
        let rows = asymptotically_additive_pointwise(&phi, &v, &sys, &FolnerSequence::Boxes { dim: 1 }, &[1, 7, 64]).unwrap();
        assert!(rows.iter().all(|r| r.realization_term < 1e-12 && r.holds()));

        let noisy = FnMap::new("noisy", 1, ValueSpace::shift_sup(ShiftSampling::default()), GroupAction::Koopman, crate::setmaps::Domain::BoxesOnly, {
            let word = word.clone();
            move |f| {
                let (lo, n) = (f.min_point().unwrap().coord(0), f.len());
                let coord: Arc<dyn crate::values::shift::WordFunction> = Arc::new(Cylinder::coordinate().into_word().unwrap());
                let noise = ShiftFn::single(coord, lo).scale(2.0 * (n as f64).sqrt()).sub(&ShiftFn::constant((n as f64).sqrt()));
                Ok(Value::Shift(ShiftFn::run(word.clone(), lo, n).add(&noise)))
            }
        });
        let rows = asymptotically_additive_pointwise(&noisy, &v, &sys, &FolnerSequence::Boxes { dim: 1 }, &[16, 256]).unwrap();
        for r in &rows {
            assert!((r.realization_term - 1.0 / (r.n as f64).sqrt()).abs() < 1e-12);
            assert!(r.holds());
        }
    }

    #[test]
    fn typewriter_oscillates_while_norms_vanish() {
        let r = typewriter_distinction(1 << 12, 0.3);
        assert!(r.max_scaled_l1 <= 2.0);
        assert!(r.oscillates_beyond(1 << 11));
    }

    #[test]
    fn coboundaries_integrate_to_zero() {
        let x0 = Cylinder::coordinate();
        assert!(coboundary_integral_check(&x0, &LatticePoint::scalar(1), 0.3).unwrap().abs() < 1e-15);
        let x0x1 = Cylinder::monomial(1, vec![LatticePoint::scalar(0), LatticePoint::scalar(1)]).unwrap();
        assert!(coboundary_integral_check(&x0x1, &LatticePoint::scalar(2), 0.3).unwrap().abs() < 1e-15);
        let r = random_coboundary_integrals(2, 0.37, 200, 5).unwrap();
        assert!(r.pass, "{}", r.max_abs);
    }

    #[test]
    fn shifts_preserve_empirical_means() {
        let sys = ShiftSystem::new(2, 0.4, 11, 4000).unwrap();
        let h = Cylinder::monomial(2, vec![LatticePoint::new(&[0, 0]).unwrap(), LatticePoint::new(&[1, 0]).unwrap()]).unwrap();
        let r = measure_preservation_check(&h, &LatticePoint::new(&[3, -2]).unwrap(), &sys).unwrap();
        assert!(r.pass, "{r:?}");
    }
}
