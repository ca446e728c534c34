//! Integer box algebra and dense cell-centered fields.
//!
//! Boxes are closed integer intervals in three dimensions (`hi` inclusive).
//! Cell `i` at spacing `h` has its center at `origin + (i + 1/2) h`, so a box
//! at one level refines to twice the index range on the next finer level.
//! Regions are unions of pairwise-disjoint boxes; subtraction produces at
//! most six boxes via an axis sweep. A `Field` stores one scalar per cell of
//! `grow(bx, ghost)` in a dense vector, x fastest.

use std::fmt;

pub type Idx = [i64; 3];

/// Closed integer interval box `[lo, hi]` per dimension. Empty boxes are
/// canonicalized (`lo = [0,0,0]`, `hi = [-1,-1,-1]`) so equality is usable.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Box3 {
    lo: Idx,
    hi: Idx,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GridError {
    /// `coarsen` requires even `lo` and odd `hi` in every dimension.
    Misaligned(Box3),
}

impl fmt::Display for GridError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridError::Misaligned(b) => {
                write!(f, "box {b:?} is not aligned for coarsening (needs even lo, odd hi)")
            }
        }
    }
}

impl Box3 {
    pub const EMPTY: Box3 = Box3 { lo: [0, 0, 0], hi: [-1, -1, -1] };

    pub fn new(lo: Idx, hi: Idx) -> Box3 {
        let b = Box3 { lo, hi };
        if (0..3).any(|d| b.lo[d] > b.hi[d]) { Box3::EMPTY } else { b }
    }

    /// Box `[0, n)` in each dimension.
    pub fn from_extents(n: Idx) -> Box3 {
        Box3::new([0, 0, 0], [n[0] - 1, n[1] - 1, n[2] - 1])
    }

    pub fn lo(&self) -> Idx {
        self.lo
    }

    pub fn hi(&self) -> Idx {
        self.hi
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|d| self.lo[d] > self.hi[d])
    }

    pub fn extent(&self, d: usize) -> i64 {
        (self.hi[d] - self.lo[d] + 1).max(0)
    }

    pub fn extents(&self) -> Idx {
        [self.extent(0), self.extent(1), self.extent(2)]
    }

    pub fn min_extent(&self) -> i64 {
        (0..3).map(|d| self.extent(d)).min().unwrap()
    }

    pub fn volume(&self) -> i64 {
        self.extent(0) * self.extent(1) * self.extent(2)
    }

    pub fn contains(&self, i: Idx) -> bool {
        (0..3).all(|d| self.lo[d] <= i[d] && i[d] <= self.hi[d])
    }

    pub fn contains_box(&self, other: &Box3) -> bool {
        other.is_empty() || (0..3).all(|d| self.lo[d] <= other.lo[d] && other.hi[d] <= self.hi[d])
    }

    /// Pad by `j` cells on every side (`j >= 0`).
    pub fn grow(&self, j: i64) -> Box3 {
        debug_assert!(j >= 0);
        if self.is_empty() {
            return Box3::EMPTY;
        }
        Box3::new(
            [self.lo[0] - j, self.lo[1] - j, self.lo[2] - j],
            [self.hi[0] + j, self.hi[1] + j, self.hi[2] + j],
        )
    }

    pub fn intersect(&self, other: &Box3) -> Box3 {
        let lo = [
            self.lo[0].max(other.lo[0]),
            self.lo[1].max(other.lo[1]),
            self.lo[2].max(other.lo[2]),
        ];
        let hi = [
            self.hi[0].min(other.hi[0]),
            self.hi[1].min(other.hi[1]),
            self.hi[2].min(other.hi[2]),
        ];
        Box3::new(lo, hi)
    }

    /// Index range of the child cells on the next finer level.
    pub fn refine(&self) -> Box3 {
        if self.is_empty() {
            return Box3::EMPTY;
        }
        Box3::new(
            [2 * self.lo[0], 2 * self.lo[1], 2 * self.lo[2]],
            [2 * self.hi[0] + 1, 2 * self.hi[1] + 1, 2 * self.hi[2] + 1],
        )
    }

    /// Exact inverse of `refine`; errors unless `lo` is even and `hi` odd in
    /// every dimension.
    pub fn coarsen(&self) -> Result<Box3, GridError> {
        if self.is_empty() {
            return Ok(Box3::EMPTY);
        }
        for d in 0..3 {
            if self.lo[d].rem_euclid(2) != 0 || self.hi[d].rem_euclid(2) != 1 {
                return Err(GridError::Misaligned(*self));
            }
        }
        Ok(Box3::new(
            [self.lo[0] / 2, self.lo[1] / 2, self.lo[2] / 2],
            [(self.hi[0] - 1) / 2, (self.hi[1] - 1) / 2, (self.hi[2] - 1) / 2],
        ))
    }

    /// Smallest coarse box whose refinement covers `self` (no alignment
    /// requirement); `div_euclid` keeps negative indices correct.
    pub fn coarsen_cover(&self) -> Box3 {
        if self.is_empty() {
            return Box3::EMPTY;
        }
        Box3::new(
            [
                self.lo[0].div_euclid(2),
                self.lo[1].div_euclid(2),
                self.lo[2].div_euclid(2),
            ],
            [
                self.hi[0].div_euclid(2),
                self.hi[1].div_euclid(2),
                self.hi[2].div_euclid(2),
            ],
        )
    }

    /// `self \ other` as at most six disjoint boxes. Sweep order: x-low,
    /// x-high, then y slabs (x clamped to the overlap), then z slabs.
    pub fn subtract(&self, other: &Box3) -> Region {
        let ov = self.intersect(other);
        if ov.is_empty() {
            return Region::from_box(*self);
        }
        if ov == *self {
            return Region::empty();
        }
        let mut out = Vec::new();
        let mut push = |b: Box3| {
            if !b.is_empty() {
                out.push(b);
            }
        };
        let (lo, hi) = (self.lo, self.hi);
        push(Box3::new(lo, [ov.lo[0] - 1, hi[1], hi[2]]));
        push(Box3::new([ov.hi[0] + 1, lo[1], lo[2]], hi));
        push(Box3::new([ov.lo[0], lo[1], lo[2]], [ov.hi[0], ov.lo[1] - 1, hi[2]]));
        push(Box3::new([ov.lo[0], ov.hi[1] + 1, lo[2]], [ov.hi[0], hi[1], hi[2]]));
        push(Box3::new([ov.lo[0], ov.lo[1], lo[2]], [ov.hi[0], ov.hi[1], ov.lo[2] - 1]));
        push(Box3::new([ov.lo[0], ov.lo[1], ov.hi[2] + 1], [ov.hi[0], ov.hi[1], hi[2]]));
        Region { boxes: out }
    }

    /// Cells in z, y, x ascending order (x fastest).
    pub fn iter(&self) -> impl Iterator<Item = Idx> + '_ {
        let b = *self;
        (b.lo[2]..=b.hi[2]).flat_map(move |z| {
            (b.lo[1]..=b.hi[1])
                .flat_map(move |y| (b.lo[0]..=b.hi[0]).map(move |x| [x, y, z]))
        })
    }
}

/// Union of pairwise-disjoint boxes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Region {
    boxes: Vec<Box3>,
}

impl Region {
    pub fn empty() -> Region {
        Region { boxes: Vec::new() }
    }

    pub fn from_box(b: Box3) -> Region {
        if b.is_empty() { Region::empty() } else { Region { boxes: vec![b] } }
    }

    pub fn boxes(&self) -> &[Box3] {
        &self.boxes
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn volume(&self) -> i64 {
        self.boxes.iter().map(|b| b.volume()).sum()
    }

    pub fn contains(&self, i: Idx) -> bool {
        self.boxes.iter().any(|b| b.contains(i))
    }

    pub fn subtract_box(&self, b: &Box3) -> Region {
        let mut out = Vec::new();
        for bx in &self.boxes {
            out.extend(bx.subtract(b).boxes);
        }
        Region { boxes: out }
    }

    pub fn intersect_box(&self, b: &Box3) -> Region {
        let mut out = Vec::new();
        for bx in &self.boxes {
            let iv = bx.intersect(b);
            if !iv.is_empty() {
                out.push(iv);
            }
        }
        Region { boxes: out }
    }

    pub fn iter_cells(&self) -> impl Iterator<Item = Idx> + '_ {
        self.boxes.iter().flat_map(|b| b.iter())
    }

    /// Disjointness invariant, used by tests.
    pub fn is_disjoint(&self) -> bool {
        for (n, a) in self.boxes.iter().enumerate() {
            for b in &self.boxes[n + 1..] {
                if !a.intersect(b).is_empty() {
                    return false;
                }
            }
        }
        true
    }
}

/// Center of cell `i` at spacing `h`: `origin + (i + 1/2) h`.
pub fn cell_center(i: Idx, h: f64, origin: [f64; 3]) -> [f64; 3] {
    [
        origin[0] + (i[0] as f64 + 0.5) * h,
        origin[1] + (i[1] as f64 + 0.5) * h,
        origin[2] + (i[2] as f64 + 0.5) * h,
    ]
}

/// Dense scalar field over `grow(bx, ghost)`, x fastest. Reads and writes
/// outside the storage extent panic.
#[derive(Clone, Debug)]
pub struct Field {
    bx: Box3,
    ghost: i64,
    h: f64,
    storage: Box3,
    n: [i64; 3],
    data: Vec<f64>,
}

impl Field {
    pub fn new(bx: Box3, ghost: i64, h: f64) -> Field {
        assert!(!bx.is_empty(), "field over an empty box");
        assert!(ghost >= 0);
        let storage = bx.grow(ghost);
        let n = storage.extents();
        let len = (n[0] * n[1] * n[2]) as usize;
        Field { bx, ghost, h, storage, n, data: vec![0.0; len] }
    }

    pub fn bx(&self) -> Box3 {
        self.bx
    }

    pub fn ghost(&self) -> i64 {
        self.ghost
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn storage(&self) -> Box3 {
        self.storage
    }

    /// Strides of (x, y, z) in the flat data vector.
    pub fn strides(&self) -> [i64; 3] {
        [1, self.n[0], self.n[0] * self.n[1]]
    }

    #[inline]
    pub fn index_of(&self, i: Idx) -> usize {
        debug_assert!(self.storage.contains(i), "index {i:?} outside storage {:?}", self.storage);
        let s = self.storage.lo();
        ((i[0] - s[0]) + self.n[0] * ((i[1] - s[1]) + self.n[1] * (i[2] - s[2]))) as usize
    }

    #[inline]
    pub fn get(&self, i: Idx) -> f64 {
        assert!(self.storage.contains(i), "read at {i:?} outside storage {:?}", self.storage);
        self.data[self.index_of(i)]
    }

    #[inline]
    pub fn set(&mut self, i: Idx, v: f64) {
        assert!(self.storage.contains(i), "write at {i:?} outside storage {:?}", self.storage);
        let k = self.index_of(i);
        self.data[k] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill_all(&mut self, v: f64) {
        self.data.fill(v);
    }

    pub fn fill_box(&mut self, b: &Box3, v: f64) {
        assert!(self.storage.contains_box(b));
        for i in b.iter() {
            let k = self.index_of(i);
            self.data[k] = v;
        }
    }

    pub fn fill_region(&mut self, r: &Region, v: f64) {
        for b in r.boxes() {
            self.fill_box(b, v);
        }
    }

    /// Copy cell values over `b` from `src` (same global index space; spacing
    /// and layout may differ).
    pub fn copy_box_from(&mut self, src: &Field, b: &Box3) {
        assert!(self.storage.contains_box(b) && src.storage.contains_box(b));
        for i in b.iter() {
            let k = self.index_of(i);
            self.data[k] = src.data[src.index_of(i)];
        }
    }

    /// `self += a * x` over `r`.
    pub fn axpy_region(&mut self, a: f64, x: &Field, r: &Region) {
        for b in r.boxes() {
            assert!(self.storage.contains_box(b) && x.storage.contains_box(b));
            for i in b.iter() {
                let k = self.index_of(i);
                self.data[k] += a * x.data[x.index_of(i)];
            }
        }
    }

    pub fn inf_norm_box(&self, b: &Box3) -> f64 {
        assert!(self.storage.contains_box(b));
        let mut m = 0.0f64;
        for i in b.iter() {
            m = m.max(self.data[self.index_of(i)].abs());
        }
        m
    }

    /// Max-abs over a region; empty region gives 0.
    pub fn inf_norm_region(&self, r: &Region) -> f64 {
        r.boxes().iter().map(|b| self.inf_norm_box(b)).fold(0.0, f64::max)
    }

    pub fn snapshot(&self) -> Vec<f64> {
        self.data.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn grow_and_volume() {
        let b = Box3::new([0, 0, 0], [3, 3, 3]);
        let g = b.grow(2);
        assert_eq!(g, Box3::new([-2, -2, -2], [5, 5, 5]));
        assert_eq!(g.volume(), 512);
        assert_eq!(b.volume(), 64);
    }

    #[test]
    fn refine_coarsen_roundtrip() {
        let b = Box3::new([0, 0, 0], [3, 3, 3]);
        let f = b.refine();
        assert_eq!(f, Box3::new([0, 0, 0], [7, 7, 7]));
        assert_eq!(f.coarsen().unwrap(), b);
        // Negative indices refine with Euclidean semantics.
        let n = Box3::new([-2, 0, 0], [1, 1, 1]);
        assert_eq!(n.refine(), Box3::new([-4, 0, 0], [3, 3, 3]));
        assert_eq!(n.refine().coarsen().unwrap(), n);
    }

    #[test]
    fn coarsen_rejects_misaligned() {
        let b = Box3::new([1, 1, 1], [4, 4, 4]);
        assert!(matches!(b.coarsen(), Err(GridError::Misaligned(_))));
        // Odd hi alone is fine only with even lo.
        assert!(Box3::new([0, 0, 0], [4, 5, 5]).coarsen().is_err());
    }

    #[test]
    fn empty_box_propagates() {
        let e = Box3::new([3, 0, 0], [2, 5, 5]);
        assert!(e.is_empty());
        assert_eq!(e, Box3::EMPTY);
        assert_eq!(e.volume(), 0);
        assert_eq!(e.grow(4), Box3::EMPTY);
        assert_eq!(e.refine(), Box3::EMPTY);
        assert_eq!(e.intersect(&Box3::new([0, 0, 0], [9, 9, 9])), Box3::EMPTY);
    }

    #[test]
    fn subtract_disjoint_and_complete() {
        // Brute-force oracle: every cell of grow(a,1) is in a\b exactly when
        // it is in a and not in b; returned boxes are pairwise disjoint.
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..200 {
            let rb = |rng: &mut StdRng| {
                let lo = [rng.gen_range(-3..4), rng.gen_range(-3..4), rng.gen_range(-3..4)];
                let hi = [
                    lo[0] + rng.gen_range(-1..5),
                    lo[1] + rng.gen_range(-1..5),
                    lo[2] + rng.gen_range(-1..5),
                ];
                Box3::new(lo, hi)
            };
            let a = rb(&mut rng);
            let b = rb(&mut rng);
            let diff = a.subtract(&b);
            assert!(diff.is_disjoint());
            assert!(diff.boxes().len() <= 6);
            for i in a.grow(1).iter() {
                let want = a.contains(i) && !b.contains(i);
                assert_eq!(diff.contains(i), want, "a={a:?} b={b:?} i={i:?}");
            }
            // Volume identity: |a ∩ b| + |a \ b| = |a|.
            assert_eq!(a.intersect(&b).volume() + diff.volume(), a.volume());
        }
    }

    #[test]
    fn subtract_volume_identity_example() {
        let a = Box3::new([0, 0, 0], [7, 7, 7]);
        let b = Box3::new([2, 2, 2], [9, 4, 4]);
        let diff = a.subtract(&b);
        assert_eq!(a.intersect(&b).volume() + diff.volume(), a.volume());
    }

    #[test]
    fn region_ops() {
        let a = Box3::new([0, 0, 0], [5, 5, 5]);
        let r = Region::from_box(a)
            .subtract_box(&Box3::new([1, 1, 1], [2, 2, 2]))
            .subtract_box(&Box3::new([4, 4, 4], [5, 5, 5]));
        assert!(r.is_disjoint());
        assert_eq!(r.volume(), 216 - 8 - 8);
        let clipped = r.intersect_box(&Box3::new([0, 0, 0], [1, 5, 5]));
        assert!(clipped.is_disjoint());
        // x-slab of width 2 minus the single overlapping carved cell column.
        assert_eq!(clipped.volume(), 72 - 4);
    }

    #[test]
    fn cell_center_formula() {
        assert_eq!(cell_center([0, 0, 0], 0.5, [0.0; 3]), [0.25, 0.25, 0.25]);
        assert_eq!(cell_center([3, 1, 0], 0.25, [1.0, 0.0, 0.0]), [1.875, 0.375, 0.125]);
    }

    #[test]
    fn field_layout_x_fastest() {
        let b = Box3::new([0, 0, 0], [2, 1, 1]);
        let mut f = Field::new(b, 1, 1.0);
        assert_eq!(f.storage(), Box3::new([-1, -1, -1], [3, 2, 2]));
        assert_eq!(f.data().len(), 5 * 4 * 4);
        assert_eq!(f.index_of([-1, -1, -1]), 0);
        assert_eq!(f.index_of([0, -1, -1]), 1);
        assert_eq!(f.index_of([-1, 0, -1]), 5);
        assert_eq!(f.index_of([-1, -1, 0]), 20);
        f.set([2, 1, 1], 3.5);
        assert_eq!(f.get([2, 1, 1]), 3.5);
    }

    #[test]
    #[should_panic(expected = "outside storage")]
    fn field_read_outside_storage_panics() {
        let f = Field::new(Box3::new([0, 0, 0], [3, 3, 3]), 1, 1.0);
        f.get([5, 0, 0]);
    }

    #[test]
    fn field_region_ops() {
        let b = Box3::new([0, 0, 0], [3, 3, 3]);
        let mut f = Field::new(b, 0, 1.0);
        f.fill_box(&b, 2.0);
        let hole = Box3::new([1, 1, 1], [2, 2, 2]);
        f.fill_region(&b.subtract(&hole), -5.0);
        assert_eq!(f.get([0, 0, 0]), -5.0);
        assert_eq!(f.get([1, 1, 1]), 2.0);
        assert_eq!(f.inf_norm_region(&Region::from_box(b)), 5.0);
        assert_eq!(f.inf_norm_region(&Region::empty()), 0.0);

        let mut g = Field::new(b, 1, 1.0);
        g.copy_box_from(&f, &hole);
        assert_eq!(g.get([2, 2, 2]), 2.0);
        g.axpy_region(3.0, &f, &Region::from_box(hole));
        assert_eq!(g.get([2, 2, 2]), 8.0);
    }
}
