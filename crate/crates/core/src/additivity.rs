//! Error maps, partition generators and the almost-additivity certifiers.
//!
//! Partitions are admitted only when they are monotone invariant relative
//! to the cofinal chain `([-n,n]^d, 1/n)`: every piece `E` of a partition of
//! `F` must satisfy `level(E) ≤ level(F)`, so that invariance of a piece at
//! some scale of the chain forces invariance of `F` at that scale.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::folner::{window_partition_by_tiling, BoxTiling, CofinalScale};
use crate::lattice::{k_boundary, LatticePoint, Window};
use crate::setmaps::{ergodic_sum, Domain, FnMap, GroupAction, SetMap, SetMapError};
use crate::values::{PwcFunction, Real, ShiftFn, SpaceKind, Value, ValueError, ValueSpace};

/// Slack allowed on float paths.
pub const FLOAT_SLACK: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdditivityError {
    #[error(transparent)]
    SetMap(#[from] SetMapError),
    #[error(transparent)]
    Value(#[from] ValueError),
    #[error("pieces of partition `{id}` do not partition the window ({reason})")]
    NotPartition { id: String, reason: String },
    #[error("the {0} space has no order; Riesz certification is undefined")]
    Unordered(String),
}

/// A real-valued, translation-invariant error map `b`.
pub trait ErrorMap: Send + Sync {
    fn name(&self) -> String;
    fn eval(&self, f: &Window) -> Real;

    /// `b(F)` for every `F` with `|F| = n`, when `b` depends only on size.
    fn eval_size(&self, _n: usize) -> Option<Real> {
        None
    }
}

/// `b(F) = rule(|F|)`.
#[derive(Clone)]
pub struct SizeErrorMap {
    name: String,
    rule: Arc<dyn Fn(usize) -> Real + Send + Sync>,
}

impl SizeErrorMap {
    pub fn new(name: impl Into<String>, rule: impl Fn(usize) -> Real + Send + Sync + 'static) -> Self {
        Self { name: name.into(), rule: Arc::new(rule) }
    }

    pub fn constant(c: Real) -> Self {
        Self::new(format!("const({c})"), move |_| c.clone())
    }
}

impl ErrorMap for SizeErrorMap {
    fn name(&self) -> String {
        self.name.clone()
    }
    fn eval(&self, f: &Window) -> Real {
        (self.rule)(f.len())
    }
    fn eval_size(&self, n: usize) -> Option<Real> {
        Some((self.rule)(n))
    }
}

/// A general error map; the rule is always applied to the translate of `F`
/// whose minimum point is the origin, which makes it translation invariant.
#[derive(Clone)]
pub struct ShapeErrorMap {
    name: String,
    rule: Arc<dyn Fn(&Window) -> Real + Send + Sync>,
}

impl ShapeErrorMap {
    pub fn new(name: impl Into<String>, rule: impl Fn(&Window) -> Real + Send + Sync + 'static) -> Self {
        Self { name: name.into(), rule: Arc::new(rule) }
    }

    /// `b(F) = |∂_K(F)|`.
    pub fn boundary_count(k: Window) -> Self {
        Self::new(format!("boundary{k:?}"), move |f| Real::int(k_boundary(&k, f).len() as i64))
    }
}

impl ErrorMap for ShapeErrorMap {
    fn name(&self) -> String {
        self.name.clone()
    }
    fn eval(&self, f: &Window) -> Real {
        (self.rule)(&f.normalized())
    }
}

/// `max_{F ∈ family} |b(F)| / |F|`.
pub fn error_sup_seminorm(b: &dyn ErrorMap, family: &[Window]) -> f64 {
    family.iter().map(|f| b.eval(f).abs().to_f64() / f.len() as f64).fold(0.0, f64::max)
}

/// Memoized invariance levels keyed by shape.
#[derive(Default)]
pub struct LevelCache {
    map: RwLock<HashMap<Window, usize>>,
}

impl LevelCache {
    pub fn level(&self, scale: &CofinalScale, f: &Window) -> usize {
        let key = f.normalized();
        if let Some(l) = self.map.read().expect("level cache").get(&key) {
            return *l;
        }
        let l = scale.level(&key);
        self.map.write().expect("level cache").insert(key, l);
        l
    }
}

impl std::fmt::Debug for LevelCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "LevelCache({} shapes)", self.map.read().map(|m| m.len()).unwrap_or(0))
    }
}

/// `b′(F) = factor · |F| · r(level(F))`, with `r` non-increasing.
#[derive(Debug)]
pub struct RegularizedErrorMap {
    pub name: String,
    /// `r(0), r(1), …, r(n_cap)`.
    pub r: Vec<Real>,
    pub scale: CofinalScale,
    pub factor: Real,
    cache: LevelCache,
}

impl RegularizedErrorMap {
    pub fn level(&self, f: &Window) -> usize {
        self.cache.level(&self.scale, f).min(self.r.len() - 1)
    }

    /// The same profile multiplied by `c`.
    pub fn scaled(self, c: Real) -> Self {
        Self { factor: &self.factor * &c, name: format!("{c}*{}", self.name), ..self }
    }
}

impl ErrorMap for RegularizedErrorMap {
    fn name(&self) -> String {
        self.name.clone()
    }
    fn eval(&self, f: &Window) -> Real {
        &(&self.factor * &Real::int(f.len() as i64)) * &self.r[self.level(f)]
    }
}

/// Builds `b′(F) = |F| r(n(F))` from
/// `r(n) = sup { |b(F)|/|F| : F ∈ family, level(F) ≥ n }` for `n ≤ n_cap`.
///
/// Levels with no family window inherit `r(n-1)`, which keeps `r`
/// non-increasing and `b′` dominating.
pub fn regularize_error_map(
    b: &dyn ErrorMap,
    scale: &CofinalScale,
    family: &[Window],
    n_cap: usize,
) -> RegularizedErrorMap {
    let scale = CofinalScale { cap: n_cap.max(1), ..*scale };
    let cache = LevelCache::default();
    let rows: Vec<(usize, Real)> = family
        .par_iter()
        .map(|f| (cache.level(&scale, f), ratio_rounded_up(&b.eval(f), f.len())))
        .collect();
    let mut best: Vec<Option<Real>> = vec![None; scale.cap + 1];
    for (lvl, q) in rows {
        let slot = &mut best[lvl.min(scale.cap)];
        *slot = Some(match slot.take() {
            Some(old) => old.max(q),
            None => q,
        });
    }
    // Suffix maxima give the sup over level ≥ n.
    let mut r = vec![Real::zero(); scale.cap + 1];
    let mut run: Option<Real> = None;
    for n in (0..=scale.cap).rev() {
        if let Some(q) = &best[n] {
            run = Some(match run {
                Some(m) => m.max(q.clone()),
                None => q.clone(),
            });
        }
        if let Some(m) = &run {
            r[n] = m.clone();
        }
    }
    let top = best.iter().rposition(Option::is_some).unwrap_or(0);
    for n in top + 1..=scale.cap {
        r[n] = r[n - 1].clone();
    }
    RegularizedErrorMap { name: format!("reg[{}]", b.name()), r, scale, factor: Real::one(), cache }
}

/// `|x| / n`. Float ratios are raised by two ulps so that `n · ratio ≥ |x|`
/// still holds after rounding the product.
fn ratio_rounded_up(x: &Real, n: usize) -> Real {
    let q = &x.abs() / &Real::int(n as i64);
    if q.is_exact() {
        return q;
    }
    let v = q.to_f64();
    if v > 0.0 {
        Real::float(v.next_up().next_up())
    } else {
        q
    }
}

/// A named partition of a window.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    pub id: String,
    pub pieces: Vec<Window>,
}

impl Partition {
    /// Checks that the pieces are nonempty, pairwise disjoint, and cover `f`.
    pub fn validate(&self, f: &Window) -> Result<(), AdditivityError> {
        let fail = |reason: &str| AdditivityError::NotPartition { id: self.id.clone(), reason: reason.into() };
        let mut all: Vec<LatticePoint> = Vec::with_capacity(f.len());
        for e in &self.pieces {
            if e.is_empty() {
                return Err(fail("empty piece"));
            }
            all.extend_from_slice(e.points());
        }
        all.sort_unstable();
        if all.windows(2).any(|w| w[0] == w[1]) {
            return Err(fail("overlapping pieces"));
        }
        if all.as_slice() != f.points() {
            return Err(fail(if all.len() < f.len() { "uncovered point" } else { "point outside the window" }));
        }
        Ok(())
    }
}

/// Partition generators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PartitionGen {
    /// Sub-boxes of side `s` anchored at the minimum corner of `F`, plus
    /// fragments. `None` means every side up to the bounding-box extent.
    Grid {
        #[serde(default)]
        sides: Option<Vec<usize>>,
    },
    /// Tiling partitions `𝓟_t` for every `t ∈ [0,m)^d` (thinned to at most
    /// `max_offsets` evenly spaced offsets).
    Tiling {
        #[serde(default)]
        sides: Option<Vec<usize>>,
        #[serde(default = "default_offsets")]
        max_offsets: usize,
    },
    Singletons,
    /// Random axis-parallel cuts of the bounding box.
    RandomCuts { trials: usize, seed: u64 },
    All { parts: Vec<PartitionGen> },
}

fn default_offsets() -> usize {
    64
}

fn extent(f: &Window) -> usize {
    let d = f.dim();
    f.bounding_box().map_or(1, |(lo, hi)| (0..d).map(|i| (hi.coord(i) - lo.coord(i)) as usize).max().unwrap_or(1))
}

fn fingerprint(f: &Window) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in f.points() {
        for c in p.raw() {
            h ^= c as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

fn tiling_partition(f: &Window, m: usize, t: &LatticePoint) -> Vec<Window> {
    let tiling = BoxTiling::new(m, f.dim()).expect("valid tiling");
    window_partition_by_tiling(f, &tiling, t).into_iter().map(|p| p.window).collect()
}

impl PartitionGen {
    pub fn partitions(&self, f: &Window) -> Vec<Partition> {
        let d = f.dim();
        let sides = |s: &Option<Vec<usize>>| s.clone().unwrap_or_else(|| (1..=extent(f)).collect());
        match self {
            PartitionGen::Grid { sides: s } => {
                let anchor = f.min_point().unwrap_or_default();
                sides(s)
                    .into_iter()
                    .filter(|&m| m >= 1)
                    .map(|m| {
                        let t = LatticePoint::new(&anchor.coords(d).iter().map(|c| c.rem_euclid(m as i64)).collect::<Vec<_>>())
                            .expect("dimension");
                        Partition { id: format!("grid:{m}"), pieces: tiling_partition(f, m, &t) }
                    })
                    .collect()
            }
            PartitionGen::Tiling { sides: s, max_offsets } => {
                let mut out = Vec::new();
                for m in sides(s).into_iter().filter(|&m| m >= 1) {
                    let offs = BoxTiling::new(m, d).expect("valid tiling").offsets();
                    let keep = (*max_offsets).max(1).min(offs.len());
                    for k in 0..keep {
                        let t = offs[k * offs.len() / keep];
                        out.push(Partition {
                            id: format!("tile:{m}:{:?}", t.coords(d)),
                            pieces: tiling_partition(f, m, &t),
                        });
                    }
                }
                out
            }
            PartitionGen::Singletons => vec![Partition {
                id: "singletons".into(),
                pieces: f.points().iter().map(|p| Window::singleton(d, *p).expect("dimension")).collect(),
            }],
            PartitionGen::RandomCuts { trials, seed } => {
                let Some((lo, hi)) = f.bounding_box() else { return Vec::new() };
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fingerprint(f));
                (0..*trials)
                    .map(|i| {
                        let cuts: Vec<Vec<i64>> = (0..d)
                            .map(|a| {
                                let (l, h) = (lo.coord(a), hi.coord(a));
                                let k = rng.gen_range(0..=3usize);
                                let mut c: Vec<i64> =
                                    (0..k).filter(|_| h > l).map(|_| rng.gen_range(l + 1..=h)).collect();
                                c.sort_unstable();
                                c.dedup();
                                c
                            })
                            .collect();
                        let mut groups: HashMap<Vec<usize>, Vec<LatticePoint>> = HashMap::new();
                        for p in f.points() {
                            let key: Vec<usize> = (0..d).map(|a| cuts[a].partition_point(|&c| c <= p.coord(a))).collect();
                            groups.entry(key).or_default().push(*p);
                        }
                        let mut pieces: Vec<Window> =
                            groups.into_values().map(|pts| Window::from_points(d, pts).expect("nonempty")).collect();
                        pieces.sort_by_key(|w| w.min_point());
                        Partition { id: format!("cuts:{i}"), pieces }
                    })
                    .collect()
            }
            PartitionGen::All { parts } => parts.iter().flat_map(|g| g.partitions(f)).collect(),
        }
    }
}

/// One certified `(F, 𝓟)` pair.
#[derive(Clone, Debug, Serialize)]
pub struct CertRow {
    pub size: usize,
    pub partition_id: String,
    pub lhs: f64,
    pub budget: f64,
    /// `budget − lhs` for norm certification; `−excess` for order certification.
    pub margin: f64,
    pub exact: bool,
}

/// The worst `(F, 𝓟)` found.
#[derive(Clone, Debug, Serialize)]
pub struct Witness {
    pub window: Window,
    pub partition_id: String,
    pub pieces: usize,
    pub violation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CertificationReport {
    pub windows: usize,
    pub partitions_tested: usize,
    /// Generated partitions that failed the chain-monotone precondition.
    pub skipped: usize,
    pub max_violation: f64,
    pub all_exact: bool,
    pub pass: bool,
    pub witness: Option<Witness>,
    pub rows: Vec<CertRow>,
}

struct Outcome {
    row: CertRow,
    violation: Real,
    window: Window,
    pieces: usize,
}

fn violation_ok(v: &Real) -> bool {
    if v.is_exact() {
        *v <= Real::zero()
    } else {
        v.to_f64() <= FLOAT_SLACK
    }
}

/// True when every piece sits at or below the level of `f`.
pub fn chain_monotone(scale: &CofinalScale, cache: &LevelCache, f: &Window, pieces: &[Window]) -> bool {
    let lf = cache.level(scale, f);
    pieces.iter().all(|e| cache.level(scale, e) <= lf)
}

fn assemble(windows: usize, skipped: usize, outcomes: Vec<Outcome>) -> CertificationReport {
    let mut pass = true;
    let mut all_exact = true;
    let mut worst: Option<(Real, usize)> = None;
    for (i, o) in outcomes.iter().enumerate() {
        pass &= violation_ok(&o.violation);
        all_exact &= o.row.exact;
        if worst.as_ref().map_or(true, |(w, _)| o.violation > *w) {
            worst = Some((o.violation.clone(), i));
        }
    }
    let witness = worst.map(|(v, i)| Witness {
        window: outcomes[i].window.clone(),
        partition_id: outcomes[i].row.partition_id.clone(),
        pieces: outcomes[i].pieces,
        violation: v.to_f64(),
    });
    CertificationReport {
        windows,
        partitions_tested: outcomes.len(),
        skipped,
        max_violation: witness.as_ref().map_or(f64::NEG_INFINITY, |w| w.violation),
        all_exact,
        pass,
        witness,
        rows: outcomes.into_iter().map(|o| o.row).collect(),
    }
}

/// Runs `check` on every admissible generated `(F, 𝓟)`.
fn certify_with(
    gen: &PartitionGen,
    windows: &[Window],
    scale: &CofinalScale,
    check: impl Fn(&Window, &Partition) -> Result<Outcome, AdditivityError> + Sync,
) -> Result<CertificationReport, AdditivityError> {
    let cache = LevelCache::default();
    let per_window: Vec<(usize, Vec<Outcome>)> = windows
        .par_iter()
        .map(|f| {
            let mut skipped = 0;
            let mut out = Vec::new();
            for p in gen.partitions(f) {
                p.validate(f)?;
                if !chain_monotone(scale, &cache, f, &p.pieces) {
                    skipped += 1;
                    continue;
                }
                out.push(check(f, &p)?);
            }
            Ok((skipped, out))
        })
        .collect::<Result<_, AdditivityError>>()?;
    let skipped = per_window.iter().map(|p| p.0).sum();
    Ok(assemble(windows.len(), skipped, per_window.into_iter().flat_map(|p| p.1).collect()))
}

fn norm_check(phi: &dyn SetMap, b: &dyn ErrorMap, f: &Window, p: &Partition) -> Result<Outcome, AdditivityError> {
    let mut diff = phi.eval(f)?;
    let mut budget = Real::zero();
    for e in &p.pieces {
        diff = diff.sub(&phi.eval(e)?)?;
        budget = &budget + &b.eval(e);
    }
    let lhs = phi.space().norm_real(&diff);
    let violation = &lhs - &budget;
    Ok(Outcome {
        row: CertRow {
            size: f.len(),
            partition_id: p.id.clone(),
            lhs: lhs.to_f64(),
            budget: budget.to_f64(),
            margin: -violation.to_f64(),
            exact: violation.is_exact(),
        },
        violation,
        window: f.clone(),
        pieces: p.pieces.len(),
    })
}

/// Checks `‖φ(F) − Σ_E φ(E)‖ ≤ Σ_E b(E)` over every generated admissible
/// partition of every window.
pub fn certify_almost_additive(
    phi: &dyn SetMap,
    b: &dyn ErrorMap,
    gen: &PartitionGen,
    windows: &[Window],
    scale: &CofinalScale,
) -> Result<CertificationReport, AdditivityError> {
    certify_with(gen, windows, scale, |f, p| norm_check(phi, b, f, p))
}

/// Same check over explicitly supplied `(F, 𝓟)` pairs. Invalid partitions
/// are a hard error; chain-inadmissible ones are skipped and counted.
pub fn certify_partitions(
    phi: &dyn SetMap,
    b: &dyn ErrorMap,
    cases: &[(Window, Partition)],
    scale: &CofinalScale,
) -> Result<CertificationReport, AdditivityError> {
    let cache = LevelCache::default();
    let mut skipped = 0;
    let mut out = Vec::new();
    for (f, p) in cases {
        p.validate(f)?;
        if !chain_monotone(scale, &cache, f, &p.pieces) {
            skipped += 1;
            continue;
        }
        out.push(norm_check(phi, b, f, p)?);
    }
    let n = cases.len();
    Ok(assemble(n, skipped, out))
}

/// A lattice-valued error map `ξ`.
pub trait RieszErrorMap: Send + Sync {
    fn name(&self) -> String;
    fn eval(&self, f: &Window) -> Value;
}

/// `ξ(F) = rule(|F|)`.
#[derive(Clone)]
pub struct SizeRieszMap {
    name: String,
    rule: Arc<dyn Fn(usize) -> Value + Send + Sync>,
}

impl SizeRieszMap {
    pub fn new(name: impl Into<String>, rule: impl Fn(usize) -> Value + Send + Sync + 'static) -> Self {
        Self { name: name.into(), rule: Arc::new(rule) }
    }
}

impl RieszErrorMap for SizeRieszMap {
    fn name(&self) -> String {
        self.name.clone()
    }
    fn eval(&self, f: &Window) -> Value {
        (self.rule)(f.len())
    }
}

/// The constant-type lift `ξ(F) = b(F) · 𝟙`.
pub struct ConstantLift {
    pub b: Arc<dyn ErrorMap>,
    pub kind: SpaceKind,
}

impl RieszErrorMap for ConstantLift {
    fn name(&self) -> String {
        format!("lift[{}]", self.b.name())
    }
    fn eval(&self, f: &Window) -> Value {
        let c = self.b.eval(f);
        match self.kind {
            SpaceKind::Shift => Value::Shift(ShiftFn::constant(c.to_f64())),
            SpaceKind::Pwc => Value::Pwc(PwcFunction::constant(c)),
            _ => Value::Scalar(c),
        }
    }
}

/// `F ↦ ‖ξ(F)‖` as a real error map.
pub struct NormOfRiesz {
    pub xi: Arc<dyn RieszErrorMap>,
    pub space: ValueSpace,
}

impl ErrorMap for NormOfRiesz {
    fn name(&self) -> String {
        format!("norm[{}]", self.xi.name())
    }
    fn eval(&self, f: &Window) -> Real {
        self.space.norm_real(&self.xi.eval(f))
    }
}

/// Checks `|φ(F) − Σ_E φ(E)| ≤ Σ_E ξ(E)` pointwise (in the lattice order).
pub fn certify_riesz_almost_additive(
    phi: &dyn SetMap,
    xi: &dyn RieszErrorMap,
    gen: &PartitionGen,
    windows: &[Window],
    scale: &CofinalScale,
) -> Result<CertificationReport, AdditivityError> {
    let space = phi.space();
    if !space.is_ordered() {
        return Err(AdditivityError::Unordered(format!("{:?}", space.kind)));
    }
    certify_with(gen, windows, scale, |f, p| {
        let mut diff = phi.eval(f)?;
        let mut budget = space.zero();
        for e in &p.pieces {
            diff = diff.sub(&phi.eval(e)?)?;
            budget = budget.add(&xi.eval(e))?;
        }
        let (excess, _) = space.order_excess(&diff, &budget)?;
        Ok(Outcome {
            row: CertRow {
                size: f.len(),
                partition_id: p.id.clone(),
                lhs: space.norm(&diff),
                budget: space.norm(&budget),
                margin: -excess.to_f64(),
                exact: excess.is_exact(),
            },
            violation: excess,
            window: f.clone(),
            pieces: p.pieces.len(),
        })
    })
}

/// Clause-by-clause results of the boundary-term test.
#[derive(Clone, Debug, Serialize)]
pub struct BoundaryTermReport {
    pub pairs: usize,
    pub nonneg_violations: usize,
    pub invariance_violations: usize,
    pub intersection_violations: usize,
    pub union_violations: usize,
    pub difference_violations: usize,
    /// `(n, |b([0,n)^d)| / n^d)` for `n = 1, 2, 4, …`.
    pub decay: Vec<(usize, f64)>,
    pub decays: bool,
    pub class: BoundaryClass,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryClass {
    /// All clauses hold on the tested pairs.
    BoundaryTerm,
    /// Density decays but some lattice clause fails.
    DensityOnly,
    Neither,
}

fn random_window(rng: &mut ChaCha8Rng, dim: usize) -> Window {
    let side: i64 = match dim {
        1 => 24,
        2 => 7,
        _ => 4,
    };
    loop {
        let mut pts = Vec::new();
        let dense = rng.gen_bool(0.5);
        if dense {
            let lo: Vec<i64> = (0..dim).map(|_| rng.gen_range(-side..side)).collect();
            let hi: Vec<i64> = lo.iter().map(|l| l + rng.gen_range(1..=side)).collect();
            return Window::box_window(&lo, &hi).expect("valid box");
        }
        let cube = Window::centered_cube(dim, side / 2).expect("dimension");
        for p in cube.points() {
            if rng.gen_bool(0.4) {
                pts.push(*p);
            }
        }
        if let Ok(w) = Window::from_points(dim, pts) {
            return w;
        }
    }
}

/// Tests nonnegativity, translation invariance, the `∩ / ∪ / ∖`
/// subadditivity clauses on random pairs, and density decay along boxes.
pub fn boundary_term_check(b: &dyn ErrorMap, dim: usize, trials: usize, seed: u64) -> BoundaryTermReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<(Window, Window, LatticePoint)> = (0..trials.max(1))
        .map(|_| {
            let e = random_window(&mut rng, dim);
            let f = random_window(&mut rng, dim);
            let g: Vec<i64> = (0..dim).map(|_| rng.gen_range(-50..=50)).collect();
            (e, f, LatticePoint::new(&g).expect("dimension"))
        })
        .collect();
    let le = |a: &Window, e: &Window, f: &Window| -> bool {
        if a.is_empty() {
            return true;
        }
        let lhs = b.eval(a);
        let rhs = &b.eval(e) + &b.eval(f);
        if lhs.is_exact() && rhs.is_exact() {
            lhs <= rhs
        } else {
            lhs.to_f64() <= rhs.to_f64() + FLOAT_SLACK
        }
    };
    let counts: Vec<[usize; 5]> = pairs
        .par_iter()
        .map(|(e, f, g)| {
            let be = b.eval(e);
            [
                (be < Real::zero()) as usize,
                ((&b.eval(&e.translate(g)) - &be).abs().to_f64() > FLOAT_SLACK) as usize,
                !le(&e.intersection(f), e, f) as usize,
                !le(&e.union(f), e, f) as usize,
                !le(&e.difference(f), e, f) as usize,
            ]
        })
        .collect();
    let sum = |i: usize| counts.iter().map(|c| c[i]).sum::<usize>();
    let top = match dim {
        1 => 4096,
        2 => 64,
        _ => 16,
    };
    let decay: Vec<(usize, f64)> = std::iter::successors(Some(1usize), |n| (*n < top).then_some(n * 2))
        .map(|n| {
            let f = Window::cube(dim, n as i64).expect("dimension");
            (n, b.eval(&f).abs().to_f64() / f.len() as f64)
        })
        .collect();
    let first = decay.iter().map(|d| d.1).fold(0.0, f64::max);
    let last = decay.last().map_or(0.0, |d| d.1);
    let decays = last <= 0.25 * first || last == 0.0;
    let lattice_ok = sum(0) + sum(1) + sum(2) + sum(3) + sum(4) == 0;
    let class = match (lattice_ok, decays) {
        (true, true) => BoundaryClass::BoundaryTerm,
        (_, true) => BoundaryClass::DensityOnly,
        _ => BoundaryClass::Neither,
    };
    BoundaryTermReport {
        pairs: pairs.len(),
        nonneg_violations: sum(0),
        invariance_violations: sum(1),
        intersection_violations: sum(2),
        union_violations: sum(3),
        difference_violations: sum(4),
        decay,
        decays,
        class,
    }
}

/// Builds `2b′` from the raw defect `b(F) = C_π ‖S_F v − φ(F)‖`.
///
/// `C_π` stands in for the supremum over translates; it is `1` for trivial
/// and Koopman actions, where the two coincide.
pub fn derive_error_from_realization(
    phi: &dyn SetMap,
    v: &Value,
    family: &[Window],
    scale: &CofinalScale,
    n_cap: usize,
) -> Result<RegularizedErrorMap, AdditivityError> {
    let c_pi = phi.action().bound(8);
    let mut raw: HashMap<Window, Real> = HashMap::new();
    let rows: Vec<(Window, Real)> = family
        .par_iter()
        .map(|f| {
            let s = ergodic_sum(v, f, phi.action())?;
            let d = phi.space().norm_real(&s.sub(&phi.eval(f)?)?);
            let d = if c_pi == 1.0 { d } else { &d * &Real::float(c_pi) };
            Ok((f.normalized(), d))
        })
        .collect::<Result<_, AdditivityError>>()?;
    for (k, d) in rows {
        let slot = raw.entry(k).or_insert_with(Real::zero);
        if d > *slot {
            *slot = d;
        }
    }
    let table = Arc::new(raw);
    let b = ShapeErrorMap::new("realization-defect", move |f| table.get(f).cloned().unwrap_or_else(Real::zero));
    Ok(regularize_error_map(&b, scale, family, n_cap).scaled(Real::int(2)))
}

/// `φ(F) = |F|² 𝟙_{[0, 1/(|F| log(1+|F|))]}` on `L¹([0,1])`, trivial action.
///
/// The interval endpoint is rounded to the nearest double and then handled
/// exactly. For `|F| = 1` the endpoint exceeds `1` and the indicator is the
/// constant `1`.
pub fn counterexample_map(dim: usize) -> FnMap {
    FnMap::new("counterexample", dim, ValueSpace::pwc(1.0), GroupAction::Trivial, Domain::AllWindows, |f| {
        Ok(Value::Pwc(counterexample_value(f.len())))
    })
}

/// The value of the counterexample map on a window of size `n`.
pub fn counterexample_value(n: usize) -> PwcFunction {
    let nf = n as f64;
    let end = 1.0 / (nf * (1.0 + nf).ln());
    PwcFunction::step(Real::zero(), Real::dyadic(end.min(1.0)), Real::int((n * n) as i64))
}

/// `b(F) = 1 + |F| / log(1 + |F|)`.
pub fn counterexample_error() -> SizeErrorMap {
    SizeErrorMap::new("1+n/log(1+n)", |n| {
        let nf = n as f64;
        Real::float(1.0 + nf / (1.0 + nf).ln())
    })
}

/// `b(F) = 1 + 2|F| / log(1 + |F|)`.
///
/// [`counterexample_error`] undercounts the mass that `φ(F)` keeps on
/// `[0, 1/(|F| log(1+|F|))]`: that term is `(|F|² − Σ|E|²)/(|F| log(1+|F|))`,
/// which is at most `Σ_E |E|/log(1+|E|)` but not `Σ_E 1`. With the second
/// copy of `|E|/log(1+|E|)` the bound holds for every partition.
pub fn counterexample_error_doubled() -> SizeErrorMap {
    SizeErrorMap::new("1+2n/log(1+n)", |n| {
        let nf = n as f64;
        Real::float(1.0 + 2.0 * nf / (1.0 + nf).ln())
    })
}

/// Budgeted Riesz error maps for the counterexample: the spikes
/// `ξ_c(E) = |E| c 𝟙_{[0, min(1, 10/c)]}` (so `‖ξ_c({0})‖₁ ≤ 10`) and the
/// constant-type lift of [`counterexample_error`].
pub fn budgeted_riesz_family() -> Vec<Arc<dyn RieszErrorMap>> {
    let mut out: Vec<Arc<dyn RieszErrorMap>> = [1i64, 2, 5, 10, 20, 50, 100, 200, 500, 1000]
        .into_iter()
        .map(|c| {
            let xi: Arc<dyn RieszErrorMap> = Arc::new(SizeRieszMap::new(format!("spike({c})"), move |n| {
                let end = if c <= 10 { Real::one() } else { Real::ratio(10, c) };
                Value::Pwc(PwcFunction::step(Real::zero(), end, Real::int(c * n as i64)))
            }));
            xi
        })
        .collect();
    out.push(Arc::new(ConstantLift { b: Arc::new(counterexample_error()), kind: SpaceKind::Pwc }));
    out
}

/// `Σ_{lo ≤ n ≤ hi} 1 / (2 n log n)`.
pub fn divergence_partial_sum(lo: usize, hi: usize) -> f64 {
    (lo.max(2)..=hi).map(|n| 1.0 / (2.0 * n as f64 * (n as f64).ln())).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::setmaps::birkhoff_map;

    fn intervals(max: i64) -> Vec<Window> {
        (1..=max).map(|l| Window::interval(0, l).unwrap()).collect()
    }

    fn scale1() -> CofinalScale {
        CofinalScale::new(1, 64).unwrap()
    }

    #[test]
    fn counterexample_two_halves() {
        let phi = counterexample_map(1);
        let f = Window::interval(0, 4).unwrap();
        let p = Partition {
            id: "halves".into(),
            pieces: vec![Window::interval(0, 2).unwrap(), Window::interval(2, 4).unwrap()],
        };
        let rep = certify_partitions(&phi, &counterexample_error(), &[(f, p)], &scale1()).unwrap();
        let row = &rep.rows[0];
        let b = 1.0 / (2.0 * 3f64.ln());
        assert!((row.lhs - 8.0 * b).abs() < 1e-12);
        assert!((row.budget - 2.0 * (1.0 + 2.0 / 3f64.ln())).abs() < 1e-12);
        assert!(rep.pass);
    }

    #[test]
    fn birkhoff_exactly_additive() {
        let phi = birkhoff_map(Value::Scalar(Real::ratio(2, 7)), 1, ValueSpace::scalar(), GroupAction::Trivial);
        let gen = PartitionGen::All {
            parts: vec![PartitionGen::Grid { sides: None }, PartitionGen::Singletons, PartitionGen::RandomCuts { trials: 4, seed: 3 }],
        };
        let rep = certify_almost_additive(&phi, &SizeErrorMap::constant(Real::zero()), &gen, &intervals(20), &scale1()).unwrap();
        assert!(rep.pass && rep.all_exact);
        assert_eq!(rep.max_violation, 0.0);
    }

    #[test]
    fn negative_budget_fails_by_piece_count() {
        let phi = birkhoff_map(Value::Scalar(Real::one()), 1, ValueSpace::scalar(), GroupAction::Trivial);
        let rep = certify_almost_additive(
            &phi,
            &SizeErrorMap::constant(Real::int(-1)),
            &PartitionGen::Singletons,
            &[Window::interval(0, 5).unwrap()],
            &scale1(),
        )
        .unwrap();
        assert!(!rep.pass);
        assert_eq!(rep.max_violation, 5.0);
    }

    #[test]
    fn counterexample_needs_the_doubled_error() {
        let phi = counterexample_map(1);
        let gen = PartitionGen::All { parts: vec![PartitionGen::Singletons, PartitionGen::Grid { sides: None }] };
        let stated = certify_almost_additive(&phi, &counterexample_error(), &gen, &intervals(40), &scale1()).unwrap();
        assert!(!stated.pass);
        let w = stated.witness.unwrap();
        assert_eq!((w.window.len(), w.pieces), (40, 5));
        let doubled = certify_almost_additive(&phi, &counterexample_error_doubled(), &gen, &intervals(128), &scale1()).unwrap();
        assert!(doubled.pass, "max violation {}", doubled.max_violation);
    }

    #[test]
    fn overlapping_pieces_are_a_hard_error() {
        let phi = counterexample_map(1);
        let f = Window::interval(0, 4).unwrap();
        let bad = Partition { id: "bad".into(), pieces: vec![Window::interval(0, 3).unwrap(), Window::interval(2, 4).unwrap()] };
        let err = certify_partitions(&phi, &counterexample_error(), &[(f.clone(), bad)], &scale1()).unwrap_err();
        assert!(matches!(err, AdditivityError::NotPartition { .. }));
        let gap = Partition { id: "gap".into(), pieces: vec![Window::interval(0, 1).unwrap()] };
        assert!(certify_partitions(&phi, &counterexample_error(), &[(f, gap)], &scale1()).is_err());
    }

    #[test]
    fn regularized_constant_and_sqrt() {
        let fam = intervals(64);
        let c = regularize_error_map(&SizeErrorMap::constant(Real::int(3)), &scale1(), &fam, 64);
        assert_eq!(c.r[0], Real::int(3));
        for n in 1..=5 {
            assert_eq!(c.r[n], Real::ratio(3, 2 * (n * n) as i64));
        }
        let s = regularize_error_map(&SizeErrorMap::new("sqrt", |n| Real::float((n as f64).sqrt())), &scale1(), &fam, 64);
        assert!((s.r[2].to_f64() - 1.0 / (2.0 * 2f64.sqrt())).abs() < 1e-15);
        let b8 = s.eval(&Window::interval(0, 8).unwrap()).to_f64();
        assert!((b8 - 2.0 * 2f64.sqrt()).abs() < 1e-12);
        let z = regularize_error_map(&SizeErrorMap::constant(Real::zero()), &scale1(), &fam, 64);
        assert!(fam.iter().all(|f| z.eval(f).is_zero()));
    }

    #[test]
    fn boundary_term_classes() {
        let k = Window::interval(0, 2).unwrap();
        let r = boundary_term_check(&ShapeErrorMap::boundary_count(k), 1, 400, 9);
        assert_eq!(r.class, BoundaryClass::BoundaryTerm, "{r:?}");
        let r = boundary_term_check(&counterexample_error(), 1, 400, 9);
        assert_eq!(r.class, BoundaryClass::BoundaryTerm, "{r:?}");
        let r = boundary_term_check(&SizeErrorMap::constant(Real::int(-1)), 1, 50, 9);
        assert!(r.nonneg_violations > 0);
        assert_ne!(r.class, BoundaryClass::BoundaryTerm);
    }

    #[test]
    fn divergence_sum_passes_threshold() {
        assert!(divergence_partial_sum(3, 2000) >= 0.9);
    }

    #[test]
    fn random_cuts_are_partitions() {
        let f = Window::box_window(&[0, 0], &[5, 7]).unwrap();
        for p in (PartitionGen::RandomCuts { trials: 10, seed: 1 }).partitions(&f) {
            p.validate(&f).unwrap();
        }
    }
}
