//! Følner sequences, the canonical cofinal invariance scale, invariance
//! levels, and box tilings of `ℤ^d`.

use serde::{Deserialize, Serialize};

use crate::lattice::{
    check_dim, product_set, symmetric_difference_size, LatticeError, LatticePoint, Window, MAX_DIM,
};

/// Default saturation cap for [`invariance_level`].
pub const DEFAULT_LEVEL_CAP: usize = 64;

/// A rule `n ↦ F_n` (with `n ≥ 1`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FolnerSequence {
    /// `F_n = [0,n)^d`.
    Boxes { dim: usize },
    /// `F_n = [0,n)^d + n·drift`, a second Følner sequence that wanders off.
    TranslatedBoxes { dim: usize, drift: Vec<i64> },
    /// An explicit finite list; `F_n` is the `n`-th entry (1-based).
    Custom { windows: Vec<Window> },
}

impl FolnerSequence {
    pub fn dim(&self) -> usize {
        match self {
            FolnerSequence::Boxes { dim } | FolnerSequence::TranslatedBoxes { dim, .. } => *dim,
            FolnerSequence::Custom { windows } => windows.first().map_or(1, |w| w.dim()),
        }
    }

    /// Number of available terms (`None` for infinite rules).
    pub fn available(&self) -> Option<usize> {
        match self {
            FolnerSequence::Custom { windows } => Some(windows.len()),
            _ => None,
        }
    }

    /// The window `F_n` for `n ≥ 1`.
    pub fn window(&self, n: usize) -> Result<Window, LatticeError> {
        let n = n.max(1);
        match self {
            FolnerSequence::Boxes { dim } => Window::cube(*dim, n as i64),
            FolnerSequence::TranslatedBoxes { dim, drift } => {
                let base = Window::cube(*dim, n as i64)?;
                let shift: Vec<i64> = (0..*dim).map(|i| drift.get(i).copied().unwrap_or(0) * n as i64).collect();
                Ok(base.translate(&LatticePoint::new(&shift)?))
            }
            FolnerSequence::Custom { windows } => {
                windows.get(n - 1).cloned().ok_or(LatticeError::Empty)
            }
        }
    }
}

impl FolnerSequence {
    /// Half-open corners of `F_n` when it is a box, without building it.
    pub fn box_corners(&self, n: usize) -> Option<(Vec<i64>, Vec<i64>)> {
        let n = n.max(1) as i64;
        match self {
            FolnerSequence::Boxes { dim } => Some((vec![0; *dim], vec![n; *dim])),
            FolnerSequence::TranslatedBoxes { dim, drift } => {
                let lo: Vec<i64> = (0..*dim).map(|i| drift.get(i).copied().unwrap_or(0) * n).collect();
                let hi = lo.iter().map(|x| x + n).collect();
                Some((lo, hi))
            }
            FolnerSequence::Custom { windows } => {
                let (lo, hi) = windows.get(n as usize - 1)?.as_box()?;
                let d = self.dim();
                Some((lo.coords(d).to_vec(), hi.coords(d).to_vec()))
            }
        }
    }
}

/// `F_n = [0,n)^d`.
pub fn box_folner(dim: usize) -> Result<FolnerSequence, LatticeError> {
    check_dim(dim)?;
    Ok(FolnerSequence::Boxes { dim })
}

/// Outcome of a temperedness check over a finite prefix.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TemperedReport {
    /// Smallest `D` such that every tested `n` meets the inequality.
    pub d_min: f64,
    pub bound: f64,
    pub pass: bool,
    /// Per-`n` ratios `|(∪_{i≤n} -F_i) + F_n| / |F_n|`.
    pub ratios: Vec<f64>,
}

/// Checks `|(∪_{i≤n} -F_i) + F_n| ≤ D |F_n|` for `n = 2..=N`.
///
/// The union includes `F_n` itself; for nested sequences this matches
/// counting `-F_n + F_n`, e.g. `{-4..4}` for `F_5 = [0,5)`.
pub fn tempered_check(seq: &FolnerSequence, n_max: usize, bound: f64) -> Result<TemperedReport, LatticeError> {
    let mut union_neg: Option<Window> = None;
    let mut ratios = Vec::new();
    for n in 1..=n_max.max(2) {
        let f = seq.window(n)?;
        let neg = f.negate();
        union_neg = Some(match union_neg {
            None => neg,
            Some(u) => u.union(&neg),
        });
        if n >= 2 {
            let s = product_set(union_neg.as_ref().unwrap(), &f);
            ratios.push(s.len() as f64 / f.len() as f64);
        }
    }
    let d_min = ratios.iter().cloned().fold(0.0, f64::max);
    Ok(TemperedReport { d_min, bound, pass: d_min <= bound, ratios })
}

/// The chain `(K_n, δ_n) = ([-n,n]^d, 1/n)`, `n ≥ 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CofinalScale {
    pub dim: usize,
    pub cap: usize,
}

impl CofinalScale {
    pub fn new(dim: usize, cap: usize) -> Result<Self, LatticeError> {
        check_dim(dim)?;
        Ok(Self { dim, cap: cap.max(1) })
    }

    pub fn k(&self, n: usize) -> Window {
        Window::centered_cube(self.dim, n as i64).expect("valid dimension")
    }

    pub fn delta(&self, n: usize) -> f64 {
        1.0 / n as f64
    }

    /// Exact test of `|K_n F Δ F| ≤ |F| / n`.
    pub fn invariant_at(&self, f: &Window, n: usize) -> bool {
        if n == 0 {
            return true;
        }
        symmetric_difference_size(&self.k(n), f) * n <= f.len()
    }

    /// See [`invariance_level`].
    pub fn level(&self, f: &Window) -> usize {
        invariance_level(f, self, self.cap)
    }
}

/// Largest `n ≤ n_cap` such that `F` is `(K_m, δ_m)`-invariant for every
/// `m ≤ n`; zero when `F` already fails at `m = 1`.
pub fn invariance_level(f: &Window, scale: &CofinalScale, n_cap: usize) -> usize {
    let mut level = 0;
    for n in 1..=n_cap.max(1) {
        if !scale.invariant_at(f, n) {
            break;
        }
        level = n;
    }
    level
}

/// Tiling of `ℤ^d` by the translates `[0,m)^d + m·h + t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxTiling {
    pub m: usize,
    pub dim: usize,
}

impl BoxTiling {
    pub fn new(m: usize, dim: usize) -> Result<Self, LatticeError> {
        check_dim(dim)?;
        Ok(Self { m: m.max(1), dim })
    }

    /// The fundamental domain `[0,m)^d`.
    pub fn tile(&self) -> Window {
        Window::cube(self.dim, self.m as i64).expect("valid dimension")
    }

    pub fn tile_size(&self) -> usize {
        self.m.pow(self.dim as u32)
    }

    /// All offsets `t ∈ [0,m)^d`.
    pub fn offsets(&self) -> Vec<LatticePoint> {
        self.tile().points().to_vec()
    }

    /// Cell index `h` with `p ∈ [0,m)^d + m·h + t`.
    pub fn cell_of(&self, p: &LatticePoint, t: &LatticePoint) -> LatticePoint {
        let m = self.m as i64;
        let mut h = [0i64; MAX_DIM];
        for (i, hi) in h.iter_mut().enumerate().take(self.dim) {
            *hi = (p.coord(i) - t.coord(i)).div_euclid(m);
        }
        LatticePoint::new(&h[..self.dim]).expect("valid dimension")
    }
}

/// One piece `(F_m + g) ∩ F` of a tiling partition.
#[derive(Clone, Debug, PartialEq)]
pub struct TilePiece {
    pub window: Window,
    /// Anchor `g = m·h + t` of the tile containing the piece.
    pub anchor: LatticePoint,
    /// True when the whole tile lies in `F` (anchor in `Int_{F_m}(F)`).
    pub full: bool,
}

/// Partition of `F` by the tiles of `tiling` shifted by `t`.
pub fn window_partition_by_tiling(f: &Window, tiling: &BoxTiling, t: &LatticePoint) -> Vec<TilePiece> {
    let mut cells: Vec<(LatticePoint, LatticePoint)> =
        f.points().iter().map(|p| (tiling.cell_of(p, t), *p)).collect();
    cells.sort_unstable();
    let full_size = tiling.tile_size();
    let mut out = Vec::new();
    let mut i = 0;
    while i < cells.len() {
        let h = cells[i].0;
        let mut j = i;
        while j < cells.len() && cells[j].0 == h {
            j += 1;
        }
        let pts: Vec<LatticePoint> = cells[i..j].iter().map(|c| c.1).collect();
        let window = Window::from_points_unchecked(f.dim(), pts);
        let full = window.len() == full_size;
        out.push(TilePiece { window, anchor: h.scale(tiling.m as i64).add(t), full });
        i = j;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_folner_terms() {
        let s = box_folner(1).unwrap();
        assert_eq!(s.window(5).unwrap().len(), 5);
        let s2 = box_folner(2).unwrap();
        assert_eq!(s2.window(3).unwrap().len(), 9);
        assert!(box_folner(4).is_err());
        let k = Window::interval(0, 2).unwrap();
        for n in 1..=100usize {
            let d = crate::lattice::invariance_defect(&k, &s.window(n).unwrap());
            assert!((d - 1.0 / n as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn tempered_boxes() {
        let r = tempered_check(&box_folner(1).unwrap(), 20, 2.0).unwrap();
        assert!(r.pass);
        // n = 5: |{-4..4}| = 9.
        assert_eq!(r.ratios[3], 9.0 / 5.0);
        let r2 = tempered_check(&box_folner(2).unwrap(), 10, 4.0).unwrap();
        assert!(r2.pass && r2.d_min <= 4.0);
    }

    #[test]
    fn level_examples() {
        let sc = CofinalScale::new(1, DEFAULT_LEVEL_CAP).unwrap();
        assert_eq!(sc.level(&Window::interval(0, 8).unwrap()), 2);
        assert_eq!(sc.level(&Window::interval(0, 2).unwrap()), 1);
        assert_eq!(sc.level(&Window::interval(0, 1).unwrap()), 0);
        // Box [0,L) has level floor(sqrt(L/2)).
        for l in 1..200i64 {
            let lev = sc.level(&Window::interval(0, l).unwrap());
            let mut expect = 0;
            while 2 * (expect + 1) * (expect + 1) <= l {
                expect += 1;
            }
            assert_eq!(lev as i64, expect, "L = {l}");
        }
    }

    #[test]
    fn level_saturates_at_cap() {
        let sc = CofinalScale::new(1, 3).unwrap();
        assert_eq!(sc.level(&Window::interval(0, 1000).unwrap()), 3);
    }

    #[test]
    fn tiling_examples() {
        let t0 = LatticePoint::ORIGIN;
        let til = BoxTiling::new(3, 1).unwrap();
        let p = window_partition_by_tiling(&Window::interval(0, 9).unwrap(), &til, &t0);
        assert_eq!(p.len(), 3);
        assert!(p.iter().all(|x| x.full));
        let p = window_partition_by_tiling(&Window::interval(0, 10).unwrap(), &til, &t0);
        assert_eq!(p.len(), 4);
        assert_eq!(p[3].window, Window::interval(9, 10).unwrap());
        assert!(!p[3].full && p[..3].iter().all(|x| x.full));
        let til2 = BoxTiling::new(2, 2).unwrap();
        let p = window_partition_by_tiling(&Window::cube(2, 2).unwrap(), &til2, &t0);
        assert_eq!(p.len(), 1);
        assert!(p[0].full);
    }

    #[test]
    fn translated_boxes_drift() {
        let s = FolnerSequence::TranslatedBoxes { dim: 1, drift: vec![3] };
        assert_eq!(s.window(4).unwrap(), Window::interval(12, 16).unwrap());
    }
}
