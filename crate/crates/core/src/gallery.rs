//! Named example maps with their error maps, sup constants and, where one
//! is known in closed form, an additive realization.

use std::sync::Arc;

use thiserror::Error;

use crate::additivity::{counterexample_error_doubled, counterexample_map, derive_error_from_realization, AdditivityError, ErrorMap, SizeErrorMap};
use crate::folner::CofinalScale;
use crate::lattice::{LatticeError, Window};
use crate::realization::{BatteryConfig, Constants, ExtractConfig};
use crate::sequences::{typewriter_map, GibbsProfile, MatrixCocycle, SequenceError, SequenceMap, WeakGibbs};
use crate::setmaps::{birkhoff_map, GroupAction, SetMap};
use crate::values::shift::{Cylinder, WordFunction};
use crate::values::{PwcFunction, Real, ShiftFn, ShiftSampling, Value, ValueSpace};

/// Names accepted by [`entry`].
pub const NAMES: [&str; 5] = ["counterexample", "typewriter", "cocycle", "bernoulli-birkhoff", "weak-gibbs"];

/// Bernoulli parameter and hash seed of the weak-Gibbs example.
pub const WEAK_GIBBS_P: f64 = 0.5;
pub const WEAK_GIBBS_SEED: u64 = 7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GalleryError {
    #[error("unknown gallery map `{0}` (known: counterexample, typewriter, cocycle, bernoulli-birkhoff, weak-gibbs)")]
    Unknown(String),
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error(transparent)]
    Additivity(#[from] AdditivityError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

pub struct GalleryEntry {
    pub name: &'static str,
    pub description: &'static str,
    pub map: Arc<dyn SetMap>,
    pub error: Arc<dyn ErrorMap>,
    /// `|||b|||_sup` and `|||φ|||_sup`, exact unless flagged.
    pub constants: Constants,
    pub realization: Option<Value>,
    /// Extraction settings at `ε₀ = 0.1` sized so that a tile side exists
    /// whenever the selection rule allows one.
    pub extract: ExtractConfig,
}

/// The two-matrix cocycle `A_0 = [[2,1],[1,1]]`, `A_1 = [[1,1],[1,2]]`.
pub fn gallery_cocycle() -> MatrixCocycle {
    MatrixCocycle::from_rows([[2.0, 1.0], [1.0, 1.0]], [[1.0, 1.0], [1.0, 2.0]]).expect("positive entries")
}

pub fn gallery_weak_gibbs() -> WeakGibbs {
    WeakGibbs::new(WEAK_GIBBS_P, GibbsProfile::Weak { seed: WEAK_GIBBS_SEED }).expect("p in (0,1)")
}

fn word(c: Cylinder) -> Arc<dyn WordFunction> {
    Arc::new(c.into_word().expect("one-dimensional cylinder"))
}

/// Looks up a gallery map. Shift-valued maps measure sup norms with `sampling`.
pub fn entry(name: &str, sampling: &ShiftSampling) -> Result<GalleryEntry, GalleryError> {
    let cfg = |m_cap: usize, battery: BatteryConfig| ExtractConfig { m_cap, battery, ..ExtractConfig::new(0.1) };
    Ok(match name {
        "counterexample" => GalleryEntry {
            name: "counterexample",
            description: "F ↦ |F|²·1[0, 1/(|F| log(1+|F|))] on L¹[0,1]: almost additive, not Riesz-almost additive",
            map: Arc::new(counterexample_map(1)),
            error: Arc::new(counterexample_error_doubled()),
            constants: Constants { b_sup: 1.0 + 2.0 / 2f64.ln(), phi_sup: 1.0, estimated: false },
            realization: Some(Value::Pwc(PwcFunction::zero())),
            extract: cfg(64, BatteryConfig::default()),
        },
        "typewriter" => {
            let map = typewriter_map();
            let zero = Value::Pwc(PwcFunction::zero());
            let family: Vec<Window> = (1..=256).map(|n| Window::interval(0, n)).collect::<Result<_, _>>()?;
            let b = derive_error_from_realization(&map, &zero, &family, &CofinalScale::new(1, 64)?, 64)?;
            let b_sup = crate::additivity::error_sup_seminorm(&b, &family);
            GalleryEntry {
                name: "typewriter",
                description: "F ↦ |F|·f_|F| with f_n the dyadic typewriter indicators: L¹-null, pointwise divergent",
                map: Arc::new(map),
                error: Arc::new(b),
                constants: Constants { b_sup, phi_sup: 1.0, estimated: true },
                realization: Some(zero),
                extract: cfg(64, BatteryConfig::default()),
            }
        }
        "cocycle" => {
            let c = gallery_cocycle();
            let constants = Constants { b_sup: c.constant_error_bound(), phi_sup: c.sup_density(), estimated: false };
            GalleryEntry {
                name: "cocycle",
                description: "[a,a+n) ↦ log‖A_{x_a}⋯A_{x_{a+n-1}}‖ (max-row-sum norm): almost additive with constant error log 2",
                error: Arc::new(SizeErrorMap::constant(Real::float(constants.b_sup))),
                map: Arc::new(SequenceMap::new(Arc::new(c), sampling.clone())),
                constants,
                realization: None,
                // Windows become invariant for the certificate's (K, δ) only past 2^18.
                extract: cfg(64, BatteryConfig { max_exp: 20, ..BatteryConfig::default() }),
            }
        }
        "bernoulli-birkhoff" => {
            let v = Value::Shift(ShiftFn::single(word(Cylinder::coordinate()), 0));
            GalleryEntry {
                name: "bernoulli-birkhoff",
                description: "F ↦ Σ_{g∈F} x_g on the Bernoulli shift: exactly additive",
                map: Arc::new(birkhoff_map(v.clone(), 1, ValueSpace::shift_sup(sampling.clone()), GroupAction::Koopman)),
                error: Arc::new(SizeErrorMap::constant(Real::zero())),
                constants: Constants { b_sup: 0.0, phi_sup: 1.0, estimated: false },
                realization: Some(v),
                extract: cfg(64, BatteryConfig::default()),
            }
        }
        "weak-gibbs" => {
            let g = gallery_weak_gibbs();
            let log_p = Cylinder::new(1, vec![crate::lattice::LatticePoint::ORIGIN], vec![(1.0 - g.p).ln(), g.p.ln()])
                .expect("single coordinate");
            GalleryEntry {
                name: "weak-gibbs",
                description: "[a,a+n) ↦ Σ log p_{x_i} + √n·s(x_a…x_{a+n-1}): almost additive with b(F) = 4√|F|",
                constants: Constants { b_sup: 4.0, phi_sup: g.sup_density(), estimated: false },
                map: Arc::new(SequenceMap::new(Arc::new(g), sampling.clone())),
                error: Arc::new(SizeErrorMap::new("4*sqrt(n)", |n| Real::float(4.0 * (n as f64).sqrt()))),
                realization: Some(Value::Shift(ShiftFn::single(word(log_p), 0))),
                // 4√m ≤ m·ε forces m ≈ 1.1e5; every residual then reads that many
                // coordinates, so the battery estimates sup norms on few words.
                extract: cfg(1 << 17, BatteryConfig { large_threshold: 0, large_samples: 16, ..BatteryConfig::default() }),
            }
        }
        other => return Err(GalleryError::Unknown(other.to_string())),
    })
}
