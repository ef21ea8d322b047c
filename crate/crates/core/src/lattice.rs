//! Finite windows in `ℤ^d` and their basic geometry.
//!
//! A [`Window`] is a duplicate-free, sorted list of lattice points. All
//! cardinalities are exact integer counts. The group law is written
//! additively, so the product set `KF` is the Minkowski sum `{k + f}`.
//!
//! ```text
//! defect(K, F)   = |KF Δ F| / |F|
//! Int_K(F)       = { g : K + g ⊆ F }
//! ∂_K(F)         = { g : K + g meets both F and its complement }
//! ```

use std::collections::HashSet;
use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Largest supported lattice dimension.
pub const MAX_DIM: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("unsupported dimension {0} (expected 1, 2 or 3)")]
    Dimension(usize),
    #[error("point has {got} coordinates but the window dimension is {expected}")]
    Arity { expected: usize, got: usize },
    #[error("a window must contain at least one point")]
    Empty,
    #[error("delta must be positive, got {0}")]
    Delta(f64),
}

/// Checks that `d` is one of the supported dimensions.
pub fn check_dim(d: usize) -> Result<(), LatticeError> {
    if (1..=MAX_DIM).contains(&d) {
        Ok(())
    } else {
        Err(LatticeError::Dimension(d))
    }
}

/// A point of `ℤ^d`. Unused trailing coordinates are kept at zero so that
/// addition and ordering work uniformly across dimensions.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct LatticePoint([i64; MAX_DIM]);

impl LatticePoint {
    pub const ORIGIN: LatticePoint = LatticePoint([0; MAX_DIM]);

    /// Builds a point from up to three coordinates.
    pub fn new(coords: &[i64]) -> Result<Self, LatticeError> {
        check_dim(coords.len())?;
        let mut c = [0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Ok(LatticePoint(c))
    }

    /// One-dimensional shorthand.
    pub fn scalar(x: i64) -> Self {
        LatticePoint([x, 0, 0])
    }

    pub fn coord(&self, i: usize) -> i64 {
        self.0[i]
    }

    pub fn coords(&self, d: usize) -> &[i64] {
        &self.0[..d]
    }

    pub fn raw(&self) -> [i64; MAX_DIM] {
        self.0
    }

    pub fn neg(&self) -> Self {
        LatticePoint([-self.0[0], -self.0[1], -self.0[2]])
    }

    pub fn add(&self, o: &Self) -> Self {
        LatticePoint([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.neg())
    }

    pub fn scale(&self, k: i64) -> Self {
        LatticePoint([self.0[0] * k, self.0[1] * k, self.0[2] * k])
    }

    /// Sup-norm `max |x_i|`.
    pub fn sup_norm(&self) -> i64 {
        self.0.iter().map(|x| x.abs()).max().unwrap_or(0)
    }
}

impl fmt::Debug for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.0[0], self.0[1], self.0[2])
    }
}

/// A finite subset of `ℤ^d`, stored sorted and without duplicates.
///
/// Constructors that take user input reject the empty set; geometric
/// operations such as [`k_interior`] may legitimately return an empty window.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Window {
    dim: usize,
    points: Vec<LatticePoint>,
}

impl fmt::Debug for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some((lo, hi)) = self.as_box() {
            write!(f, "Box{:?}..{:?}", lo.coords(self.dim), hi.coords(self.dim))
        } else {
            f.debug_list()
                .entries(self.points.iter().map(|p| p.coords(self.dim).to_vec()))
                .finish()
        }
    }
}

impl Window {
    /// Nonempty window from arbitrary points (duplicates are removed).
    pub fn from_points(dim: usize, points: Vec<LatticePoint>) -> Result<Self, LatticeError> {
        check_dim(dim)?;
        if points.is_empty() {
            return Err(LatticeError::Empty);
        }
        if let Some(p) = points.iter().find(|p| p.0[dim..].iter().any(|&c| c != 0)) {
            let got = (0..MAX_DIM).rev().find(|&i| p.0[i] != 0).unwrap() + 1;
            return Err(LatticeError::Arity { expected: dim, got });
        }
        Ok(Self::from_points_unchecked(dim, points))
    }

    /// Nonempty window from coordinate rows, e.g. `[[0,0],[0,1]]`.
    pub fn from_coords(dim: usize, rows: &[Vec<i64>]) -> Result<Self, LatticeError> {
        check_dim(dim)?;
        let mut pts = Vec::with_capacity(rows.len());
        for r in rows {
            if r.len() != dim {
                return Err(LatticeError::Arity { expected: dim, got: r.len() });
            }
            pts.push(LatticePoint::new(r)?);
        }
        Self::from_points(dim, pts)
    }

    /// Possibly empty window; used for interiors and boundaries.
    pub(crate) fn from_points_unchecked(dim: usize, mut points: Vec<LatticePoint>) -> Self {
        points.sort_unstable();
        points.dedup();
        Window { dim, points }
    }

    pub fn empty(dim: usize) -> Self {
        Window { dim, points: Vec::new() }
    }

    /// Half-open box `∏ [lo_i, hi_i)`. Empty if any side is empty.
    pub fn box_window(lo: &[i64], hi: &[i64]) -> Result<Self, LatticeError> {
        let d = lo.len();
        check_dim(d)?;
        if hi.len() != d {
            return Err(LatticeError::Arity { expected: d, got: hi.len() });
        }
        let lo_p = LatticePoint::new(lo)?;
        let hi_p = LatticePoint::new(hi)?;
        let w = Self::box_points(d, lo_p, hi_p);
        if w.is_empty() {
            return Err(LatticeError::Empty);
        }
        Ok(w)
    }

    fn box_points(d: usize, lo: LatticePoint, hi: LatticePoint) -> Self {
        let mut ext = [1i64; MAX_DIM];
        for i in 0..d {
            ext[i] = (hi.0[i] - lo.0[i]).max(0);
        }
        let total: i64 = ext.iter().product();
        let mut pts = Vec::with_capacity(total as usize);
        for x in 0..ext[0] {
            for y in 0..ext[1] {
                for z in 0..ext[2] {
                    let mut c = [x, y, z];
                    for i in 0..d {
                        c[i] += lo.0[i];
                    }
                    for item in c.iter_mut().skip(d) {
                        *item = 0;
                    }
                    pts.push(LatticePoint(c));
                }
            }
        }
        // Lexicographic loop order already yields sorted output.
        Window { dim: d, points: pts }
    }

    /// The cube `[0,n)^d`.
    pub fn cube(dim: usize, n: i64) -> Result<Self, LatticeError> {
        Self::box_window(&vec![0; dim], &vec![n; dim])
    }

    /// The symmetric cube `[-r, r]^d`.
    pub fn centered_cube(dim: usize, r: i64) -> Result<Self, LatticeError> {
        Self::box_window(&vec![-r; dim], &vec![r + 1; dim])
    }

    /// The interval `[a, b)` in `ℤ`.
    pub fn interval(a: i64, b: i64) -> Result<Self, LatticeError> {
        Self::box_window(&[a], &[b])
    }

    pub fn singleton(dim: usize, p: LatticePoint) -> Result<Self, LatticeError> {
        Self::from_points(dim, vec![p])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[LatticePoint] {
        &self.points
    }

    pub fn contains(&self, p: &LatticePoint) -> bool {
        self.points.binary_search(p).is_ok()
    }

    /// Smallest point in the canonical order.
    pub fn min_point(&self) -> Option<LatticePoint> {
        self.points.first().copied()
    }

    /// Bounding box as half-open corners `(lo, hi)`.
    pub fn bounding_box(&self) -> Option<(LatticePoint, LatticePoint)> {
        let first = self.points.first()?;
        let mut lo = first.0;
        let mut hi = first.0;
        for p in &self.points {
            for i in 0..self.dim {
                lo[i] = lo[i].min(p.0[i]);
                hi[i] = hi[i].max(p.0[i]);
            }
        }
        for h in hi.iter_mut().take(self.dim) {
            *h += 1;
        }
        Some((LatticePoint(lo), LatticePoint(hi)))
    }

    /// Returns the corners when the window is a full box.
    pub fn as_box(&self) -> Option<(LatticePoint, LatticePoint)> {
        let (lo, hi) = self.bounding_box()?;
        let vol: i64 = (0..self.dim).map(|i| hi.0[i] - lo.0[i]).product();
        (vol as usize == self.points.len()).then_some((lo, hi))
    }

    pub fn translate(&self, g: &LatticePoint) -> Window {
        // Translation preserves the lexicographic order.
        Window { dim: self.dim, points: self.points.iter().map(|p| p.add(g)).collect() }
    }

    /// `-F = { -f : f ∈ F }`.
    pub fn negate(&self) -> Window {
        Self::from_points_unchecked(self.dim, self.points.iter().map(|p| p.neg()).collect())
    }

    /// Translate so that the smallest point sits at the origin. Two windows
    /// are translates of each other iff their normal forms agree.
    pub fn normalized(&self) -> Window {
        match self.min_point() {
            Some(m) => self.translate(&m.neg()),
            None => self.clone(),
        }
    }

    pub fn union(&self, o: &Window) -> Window {
        let mut pts = self.points.clone();
        pts.extend_from_slice(&o.points);
        Self::from_points_unchecked(self.dim, pts)
    }

    pub fn intersection(&self, o: &Window) -> Window {
        let pts = self.points.iter().copied().filter(|p| o.contains(p)).collect();
        Window { dim: self.dim, points: pts }
    }

    pub fn difference(&self, o: &Window) -> Window {
        let pts = self.points.iter().copied().filter(|p| !o.contains(p)).collect();
        Window { dim: self.dim, points: pts }
    }

    pub fn is_disjoint(&self, o: &Window) -> bool {
        self.points.iter().all(|p| !o.contains(p))
    }

    pub fn is_subset(&self, o: &Window) -> bool {
        self.points.iter().all(|p| o.contains(p))
    }

    /// Coordinate rows, the JSON wire format.
    pub fn to_coords(&self) -> Vec<Vec<i64>> {
        self.points.iter().map(|p| p.coords(self.dim).to_vec()).collect()
    }
}

impl Serialize for Window {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_coords().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Window {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows: Vec<Vec<i64>> = Vec::deserialize(d)?;
        let dim = rows.first().map(|r| r.len()).ok_or_else(|| D::Error::custom("empty window"))?;
        Window::from_coords(dim, &rows).map_err(D::Error::custom)
    }
}

/// `(K, δ)` pair describing an invariance requirement.
#[derive(Clone, Debug, PartialEq)]
pub struct InvarianceParams {
    pub k: Window,
    pub delta: f64,
}

impl InvarianceParams {
    pub fn new(k: Window, delta: f64) -> Result<Self, LatticeError> {
        if k.is_empty() {
            return Err(LatticeError::Empty);
        }
        if !(delta > 0.0) {
            return Err(LatticeError::Delta(delta));
        }
        Ok(Self { k, delta })
    }

    pub fn admits(&self, f: &Window) -> bool {
        invariance_defect(&self.k, f) <= self.delta
    }
}

/// `KF = { k + f : k ∈ K, f ∈ F }`.
pub fn product_set(k: &Window, f: &Window) -> Window {
    let d = f.dim.max(k.dim);
    if let (Some((klo, khi)), Some((flo, fhi))) = (k.as_box(), f.as_box()) {
        // Sum of two boxes is the box spanned by the summed corners.
        let mut hi = [0i64; MAX_DIM];
        for i in 0..d {
            hi[i] = khi.0[i] + fhi.0[i] - 1;
        }
        return Window::box_points(d, klo.add(&flo), LatticePoint(hi));
    }
    let mut pts = Vec::with_capacity(k.len() * f.len());
    for a in &k.points {
        for b in &f.points {
            pts.push(a.add(b));
        }
    }
    Window::from_points_unchecked(d, pts)
}

/// Size of `KF Δ F`.
pub fn symmetric_difference_size(k: &Window, f: &Window) -> usize {
    if k.is_empty() || f.is_empty() {
        return f.len();
    }
    let kf = product_set(k, f);
    let common = if k.contains(&LatticePoint::ORIGIN) {
        // KF ⊇ F when 0 ∈ K.
        f.len()
    } else {
        f.points.iter().filter(|p| kf.contains(p)).count()
    };
    (kf.len() - common) + (f.len() - common)
}

/// `|KF Δ F| / |F|`.
pub fn invariance_defect(k: &Window, f: &Window) -> f64 {
    if f.is_empty() {
        return f64::INFINITY;
    }
    symmetric_difference_size(k, f) as f64 / f.len() as f64
}

pub fn is_invariant(params: &InvarianceParams, f: &Window) -> bool {
    params.admits(f)
}

/// `Int_K(F) = { g : K + g ⊆ F }`, possibly empty.
pub fn k_interior(k: &Window, f: &Window) -> Window {
    let Some(k0) = k.points.first() else {
        return Window::empty(f.dim);
    };
    // Any g in the interior satisfies k0 + g ∈ F.
    let pts = f
        .points
        .iter()
        .map(|p| p.sub(k0))
        .filter(|g| k.points.iter().all(|kk| f.contains(&kk.add(g))))
        .collect();
    Window::from_points_unchecked(f.dim, pts)
}

/// `∂_K(F) = { g : K + g meets F and G \ F }`, possibly empty.
pub fn k_boundary(k: &Window, f: &Window) -> Window {
    let mut seen: HashSet<LatticePoint> = HashSet::new();
    let mut pts = Vec::new();
    for kk in &k.points {
        for p in &f.points {
            let g = p.sub(kk);
            if seen.insert(g) && k.points.iter().any(|k2| !f.contains(&k2.add(&g))) {
                pts.push(g);
            }
        }
    }
    Window::from_points_unchecked(f.dim, pts)
}

/// `K0 ∪ -K0 ∪ {0}` together with `δ = δ0 / (1 + |K|)`.
///
/// Every `F` with `invariance_defect(K, F) ≤ δ` then satisfies
/// `|∂_{K0}(F)| ≤ δ0 |F|`.
pub fn boundary_control_params(k0: &Window, delta0: f64) -> Result<InvarianceParams, LatticeError> {
    if !(delta0 > 0.0) {
        return Err(LatticeError::Delta(delta0));
    }
    if k0.is_empty() {
        return Err(LatticeError::Empty);
    }
    let d = k0.dim;
    let mut pts = k0.points.clone();
    pts.extend(k0.points.iter().map(|p| p.neg()));
    pts.push(LatticePoint::ORIGIN);
    let k = Window::from_points_unchecked(d, pts);
    let delta = delta0 / (1.0 + k.len() as f64);
    InvarianceParams::new(k, delta)
}
