//! Additive realizations: extraction by box tilings, verification along
//! Følner sequences, and coboundary diagnostics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::additivity::ErrorMap;
use crate::folner::{window_partition_by_tiling, BoxTiling, FolnerSequence};
use crate::lattice::{boundary_control_params, invariance_defect, k_boundary, k_interior, LatticeError, Window};
use crate::setmaps::{ergodic_average, ergodic_sum, sup_seminorm, tail_sups, GroupAction, SetMap, SetMapError};
use crate::values::{Real, Regime, ShiftSampling, SpaceKind, Value, ValueSpace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RealizationError {
    #[error(transparent)]
    SetMap(#[from] SetMapError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(
        "no tile side m ≤ {cap} satisfies b([0,m)^d) ≤ m^d·ε and |||φ|||_sup ≤ m^d·ε (ε = {epsilon:.6e}); \
         the smallest admissible side is {needed}"
    )]
    NoTileSide { cap: usize, epsilon: f64, needed: String },
    #[error("epsilon0 must be positive, got {0}")]
    Epsilon(f64),
}

/// The sup semi-norms entering `ε = ε₀ / (1 + |||b||| + 2|||φ|||)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub b_sup: f64,
    pub phi_sup: f64,
    /// True when the values are family lower bounds rather than exact.
    #[serde(default)]
    pub estimated: bool,
}

/// Test windows for a certificate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatteryConfig {
    /// Boxes `[0, 2^k)^d` for `k ≤ max_exp`.
    pub max_exp: u32,
    pub random_boxes: usize,
    /// Random boxes have sides up to `2^random_exp`.
    pub random_exp: u32,
    pub seed: u64,
    /// Shift-space residuals that read more than this many coordinates
    /// (`|F| + m^d`) use `large_samples` words.
    pub large_threshold: usize,
    pub large_samples: usize,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self { max_exp: 10, random_boxes: 100, random_exp: 10, seed: 17, large_threshold: 4096, large_samples: 64 }
    }
}

/// Extraction settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractConfig {
    pub epsilon0: f64,
    #[serde(default = "default_m_cap")]
    pub m_cap: usize,
    #[serde(default)]
    pub constants: Option<Constants>,
    #[serde(default)]
    pub battery: BatteryConfig,
}

fn default_m_cap() -> usize {
    64
}

impl ExtractConfig {
    pub fn new(epsilon0: f64) -> Self {
        Self { epsilon0, m_cap: default_m_cap(), constants: None, battery: BatteryConfig::default() }
    }
}

/// One battery window.
#[derive(Clone, Debug, Serialize)]
pub struct ResidualRow {
    pub lo: Vec<i64>,
    pub side: Vec<i64>,
    pub size: usize,
    /// `‖φ(F)/|F| − A_F v‖`.
    pub residual: f64,
    /// `|KF Δ F| / |F|` for the certificate's `K`.
    pub defect: f64,
    pub invariant: bool,
    pub regime: Option<Regime>,
}

/// An `ε₀`-realization with its evidence.
#[derive(Clone, Debug, Serialize)]
pub struct Certificate {
    pub map: String,
    pub dim: usize,
    #[serde(skip)]
    pub v: Value,
    pub m: usize,
    pub epsilon0: f64,
    pub epsilon: f64,
    pub constants: Constants,
    /// `K = F_m ∪ −F_m ∪ {0}` is recorded by its bounding radius.
    pub k_size: usize,
    pub delta: f64,
    pub residuals: Vec<ResidualRow>,
    pub invariant_windows: usize,
    pub violations: usize,
    pub seed: u64,
}

/// `|||·|||_sup` estimates over boxes `[0,n)^d`, `n ≤ side_cap`.
pub fn estimate_constants(phi: &dyn SetMap, b: &dyn ErrorMap, side_cap: usize) -> Result<Constants, RealizationError> {
    let fam: Vec<Window> =
        (1..=side_cap as i64).map(|n| Window::cube(phi.dim(), n)).collect::<Result<_, _>>()?;
    let phi_sup = sup_seminorm(phi, &fam)?;
    let b_sup = crate::additivity::error_sup_seminorm(b, &fam);
    Ok(Constants { b_sup, phi_sup, estimated: true })
}

fn battery_windows(dim: usize, cfg: &BatteryConfig) -> Result<Vec<Window>, LatticeError> {
    let mut out = Vec::new();
    for k in 0..=cfg.max_exp {
        out.push(Window::cube(dim, 1i64 << k)?);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.random_boxes {
        let lo: Vec<i64> = (0..dim).map(|_| rng.gen_range(-1000..=1000)).collect();
        let top = 1i64 << cfg.random_exp.min(cfg.max_exp);
        let hi: Vec<i64> = lo.iter().map(|l| l + rng.gen_range(1..=top)).collect();
        out.push(Window::box_window(&lo, &hi)?);
    }
    Ok(out)
}

/// `‖φ(F)/|F| − A_F v‖` and its regime.
pub fn residual(
    phi: &dyn SetMap,
    v: &Value,
    f: &Window,
    space: &ValueSpace,
) -> Result<(f64, Option<Regime>), RealizationError> {
    let avg = ergodic_average(v, f, phi.action())?;
    let diff = phi.eval(f)?.div_count(f.len()).sub(&avg).map_err(SetMapError::from)?;
    Ok(match diff {
        Value::Scalar(_) | Value::Pwc(_) => (space.norm_real(&diff).to_f64(), None),
        _ => space.norm_with_regime(&diff),
    })
}

/// Extracts `v = φ([0,m)^d)/m^d` following the tiling argument and tests it
/// on a battery of windows.
pub fn extract_realization(
    phi: &dyn SetMap,
    b: &dyn ErrorMap,
    cfg: &ExtractConfig,
) -> Result<Certificate, RealizationError> {
    if !(cfg.epsilon0 > 0.0) {
        return Err(RealizationError::Epsilon(cfg.epsilon0));
    }
    let d = phi.dim();
    let constants = match cfg.constants {
        Some(c) => c,
        None => estimate_constants(phi, b, 64)?,
    };
    let epsilon = cfg.epsilon0 / (1.0 + constants.b_sup + 2.0 * constants.phi_sup);
    let admissible = |m: usize| -> Result<bool, LatticeError> {
        let vol = (m as f64).powi(d as i32);
        let bm = match b.eval_size(m.pow(d as u32)) {
            Some(r) => r,
            None => b.eval(&Window::cube(d, m as i64)?),
        };
        Ok(bm.to_f64() <= vol * epsilon && constants.phi_sup <= vol * epsilon)
    };
    let mut m = None;
    for k in 1..=cfg.m_cap {
        if admissible(k)? {
            m = Some(k);
            break;
        }
    }
    let m = match m {
        Some(m) => m,
        None => {
            // Look past the cap (geometrically) to say how far off it is.
            // Windows are only materialized up to 2^20 points.
            let mut k = cfg.m_cap.max(1);
            let mut needed = None;
            while k < (1usize << 40) {
                k *= 2;
                let vol = (k as f64).powi(d as i32);
                let bm = match b.eval_size(k.pow(d as u32)) {
                    Some(r) => r.to_f64(),
                    None if vol <= (1u64 << 20) as f64 => b.eval(&Window::cube(d, k as i64)?).to_f64(),
                    None => break,
                };
                if bm <= vol * epsilon && constants.phi_sup <= vol * epsilon {
                    needed = Some(k);
                    break;
                }
            }
            let needed = needed.map_or_else(|| format!("beyond {}", k), |k| format!("≤ {k}"));
            return Err(RealizationError::NoTileSide { cap: cfg.m_cap, epsilon, needed });
        }
    };
    let tile = Window::cube(d, m as i64)?;
    let v = phi.eval(&tile)?.div_count(tile.len());
    let params = boundary_control_params(&tile, epsilon)?;
    let windows = battery_windows(d, &cfg.battery)?;
    let space = phi.space().clone();
    let rows: Vec<ResidualRow> = windows
        .par_iter()
        .map(|f| {
            let sp = if matches!(space.kind, SpaceKind::Shift) && f.len() + tile.len() > cfg.battery.large_threshold {
                ValueSpace {
                    sampling: ShiftSampling { samples: cfg.battery.large_samples, ..space.sampling.clone() },
                    ..space.clone()
                }
            } else {
                space.clone()
            };
            let (r, regime) = residual(phi, &v, f, &sp)?;
            let defect = invariance_defect(&params.k, f);
            let (lo, hi) = f.as_box().expect("battery windows are boxes");
            Ok(ResidualRow {
                lo: lo.coords(d).to_vec(),
                side: (0..d).map(|i| hi.coord(i) - lo.coord(i)).collect(),
                size: f.len(),
                residual: r,
                defect,
                invariant: defect <= params.delta,
                regime,
            })
        })
        .collect::<Result<_, RealizationError>>()?;
    let invariant_windows = rows.iter().filter(|r| r.invariant).count();
    let violations = rows.iter().filter(|r| r.invariant && r.residual > cfg.epsilon0 + 1e-9).count();
    Ok(Certificate {
        map: phi.name(),
        dim: d,
        v,
        m,
        epsilon0: cfg.epsilon0,
        epsilon,
        constants,
        k_size: params.k.len(),
        delta: params.delta,
        residuals: rows,
        invariant_windows,
        violations,
        seed: cfg.battery.seed,
    })
}

/// `n ↦ value` together with tail sups and running infima.
#[derive(Clone, Debug, Serialize)]
pub struct ResidualSequence {
    pub values: Vec<(usize, f64)>,
    /// `max_{n ≤ k ≤ N}`, non-increasing.
    pub tail: Vec<(usize, f64)>,
    /// `min_{k ≤ n}`, non-increasing.
    pub running_inf: Vec<(usize, f64)>,
}

impl ResidualSequence {
    fn from_values(values: Vec<(usize, f64)>) -> Self {
        let tail = tail_sups(&values);
        let mut m = f64::INFINITY;
        let running_inf = values
            .iter()
            .map(|(n, v)| {
                m = m.min(*v);
                (*n, m)
            })
            .collect();
        Self { values, tail, running_inf }
    }

    pub fn last(&self) -> f64 {
        self.values.last().map_or(0.0, |v| v.1)
    }

    /// Tail sup over the upper half of the schedule.
    pub fn upper_tail(&self) -> f64 {
        self.tail.get(self.tail.len() / 2).map_or(0.0, |t| t.1)
    }
}

/// `‖φ(F_n)/|F_n| − A_{F_n} v‖` along `schedule`.
pub fn verify_realization_at(
    phi: &dyn SetMap,
    v: &Value,
    seq: &FolnerSequence,
    schedule: &[usize],
) -> Result<ResidualSequence, RealizationError> {
    let values = schedule
        .par_iter()
        .map(|&n| Ok((n, residual(phi, v, &seq.window(n)?, phi.space())?.0)))
        .collect::<Result<Vec<_>, RealizationError>>()?;
    Ok(ResidualSequence::from_values(values))
}

/// [`verify_realization_at`] for `n = 1..=N`.
pub fn verify_realization(
    phi: &dyn SetMap,
    v: &Value,
    seq: &FolnerSequence,
    n_max: usize,
) -> Result<ResidualSequence, RealizationError> {
    verify_realization_at(phi, v, seq, &(1..=n_max).collect::<Vec<_>>())
}

/// `‖A_{F_n} v‖` with tail sups and running infima.
#[derive(Clone, Debug, Serialize)]
pub struct CoboundaryReport {
    pub sequence: ResidualSequence,
    /// For isometric actions the running infimum over windows and the
    /// limsup coincide; both are reported.
    pub isometric: bool,
    pub tail_last: f64,
    pub inf_last: f64,
}

pub fn coboundary_residual(
    v: &Value,
    action: &GroupAction,
    space: &ValueSpace,
    seq: &FolnerSequence,
    schedule: &[usize],
) -> Result<CoboundaryReport, RealizationError> {
    let values = schedule
        .par_iter()
        .map(|&n| {
            let a = ergodic_average(v, &seq.window(n)?, action)?;
            Ok((n, space.norm(&a)))
        })
        .collect::<Result<Vec<_>, RealizationError>>()?;
    let sequence = ResidualSequence::from_values(values);
    let isometric = matches!(action, GroupAction::Trivial | GroupAction::Koopman) || (action.bound(8) - 1.0).abs() < 1e-9;
    Ok(CoboundaryReport {
        tail_last: sequence.tail.last().map_or(0.0, |t| t.1),
        inf_last: sequence.running_inf.last().map_or(0.0, |t| t.1),
        sequence,
        isometric,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DifferenceReport {
    pub r1: f64,
    pub r2: f64,
    pub difference: f64,
    pub tolerance: f64,
    /// Both candidates verify below `tolerance` at the last scale.
    pub precondition: bool,
    pub pass: bool,
}

/// Membership test of `v1 − v2` in the weak coboundaries: at the last scale,
/// `‖A_F(v1 − v2)‖ ≤ r1 + r2` where both residuals are below `tolerance`.
pub fn realization_difference_test(
    phi: &dyn SetMap,
    v1: &Value,
    v2: &Value,
    seq: &FolnerSequence,
    n: usize,
    tolerance: f64,
) -> Result<DifferenceReport, RealizationError> {
    let f = seq.window(n)?;
    let space = phi.space();
    let r1 = residual(phi, v1, &f, space)?.0;
    let r2 = residual(phi, v2, &f, space)?.0;
    let dv = v1.sub(v2).map_err(SetMapError::from)?;
    let difference = space.norm(&ergodic_average(&dv, &f, phi.action())?);
    let precondition = r1 <= tolerance && r2 <= tolerance;
    Ok(DifferenceReport {
        r1,
        r2,
        difference,
        tolerance,
        precondition,
        pass: precondition && difference <= r1 + r2 + 1e-9,
    })
}

/// The two intermediate estimates of the tiling argument for one `(F, m)`.
#[derive(Clone, Debug, Serialize)]
pub struct IntermediateRow {
    pub m: usize,
    pub size: usize,
    /// `‖|F_m| φ(F) − Σ_t Σ_{E∈𝓟_t} φ(E)‖`.
    pub lhs1: f64,
    /// `|Int_{F_m}(F)| b(F_m) + |∂_{F_m}(F)| |F_m| |||b|||`.
    pub bound1: f64,
    /// `‖Σ_t Σ_{E∈𝓟_t} φ(E) − Σ_{g∈F} φ(F_m + g)‖`.
    pub lhs2: f64,
    /// `2 |||φ||| |F_m| |∂_{F_m}(F)|`.
    pub bound2: f64,
    /// `‖|F_m| φ(F) − Σ_{g∈F} φ(F_m + g)‖`.
    pub lhs: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct IntermediateReport {
    pub rows: Vec<IntermediateRow>,
    pub violations1: usize,
    pub violations2: usize,
    pub violations_total: usize,
}

/// Computes both intermediate bounds for every window and tile side.
pub fn intermediate_bounds_check(
    phi: &dyn SetMap,
    b: &dyn ErrorMap,
    constants: &Constants,
    sides: &[usize],
    windows: &[Window],
    space: &ValueSpace,
) -> Result<IntermediateReport, RealizationError> {
    let jobs: Vec<(usize, &Window)> = sides.iter().flat_map(|&m| windows.iter().map(move |f| (m, f))).collect();
    let rows: Vec<IntermediateRow> = jobs
        .par_iter()
        .map(|&(m, f)| -> Result<IntermediateRow, RealizationError> {
            let d = f.dim();
            let tiling = BoxTiling::new(m, d)?;
            let tile = tiling.tile();
            let vol = tile.len();
            let phi_f = phi.eval(f)?;
            let scaled = phi_f.scale_real(&Real::int(vol as i64));
            let mut pieces_sum = space.zero();
            for t in tiling.offsets() {
                for piece in window_partition_by_tiling(f, &tiling, &t) {
                    pieces_sum = pieces_sum.add(&phi.eval(&piece.window)?).map_err(SetMapError::from)?;
                }
            }
            let tile_sum = ergodic_sum(&phi.eval(&tile)?, f, phi.action())?;
            let norm = |x: Value| space.norm_real(&x).to_f64();
            let lhs1 = norm(scaled.sub(&pieces_sum).map_err(SetMapError::from)?);
            let lhs2 = norm(pieces_sum.sub(&tile_sum).map_err(SetMapError::from)?);
            let lhs = norm(scaled.sub(&tile_sum).map_err(SetMapError::from)?);
            let interior = k_interior(&tile, f).len() as f64;
            let boundary = k_boundary(&tile, f).len() as f64;
            Ok(IntermediateRow {
                m,
                size: f.len(),
                lhs1,
                bound1: interior * b.eval(&tile).to_f64() + boundary * vol as f64 * constants.b_sup,
                lhs2,
                bound2: 2.0 * constants.phi_sup * vol as f64 * boundary,
                lhs,
            })
        })
        .collect::<Result<_, _>>()?;
    let tol = |x: f64| x * 1e-12 + 1e-9;
    let violations1 = rows.iter().filter(|r| r.lhs1 > r.bound1 + tol(r.bound1)).count();
    let violations2 = rows.iter().filter(|r| r.lhs2 > r.bound2 + tol(r.bound2)).count();
    let violations_total = rows.iter().filter(|r| r.lhs > r.bound1 + r.bound2 + tol(r.bound1 + r.bound2)).count();
    Ok(IntermediateReport { rows, violations1, violations2, violations_total })
}
