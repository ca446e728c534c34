//! Inter-grid transfers for cell-centered 2:1 refinement.
//!
//! Restriction is the 8-child average (exact on linears at cell centers).
//! Prolongation is cell-centered trilinear interpolation with 1D weights
//! `(3/4, 1/4)` toward the parent and the parity-side neighbor; it is also
//! exact on linears, and the two form a partition of unity.

use crate::grid::{Box3, Field, Region};

/// Coarse cells that trilinear prolongation onto `fine` reads: per dimension,
/// parent of the low end minus one if that end is even, parent of the high
/// end plus one if that end is odd. Always contained in `grow(parent box, 1)`.
pub fn prolong_footprint(fine: &Box3) -> Box3 {
    if fine.is_empty() {
        return Box3::EMPTY;
    }
    let mut lo = [0i64; 3];
    let mut hi = [0i64; 3];
    for d in 0..3 {
        let fl = fine.lo()[d];
        let fh = fine.hi()[d];
        lo[d] = fl.div_euclid(2) - (fl.rem_euclid(2) == 0) as i64;
        hi[d] = fh.div_euclid(2) + (fh.rem_euclid(2) == 1) as i64;
    }
    Box3::new(lo, hi)
}

/// `coarse[I] = mean of the 8 fine children of I` over `coarse_region`.
/// `fine` must hold valid values on the refinement of every region box.
pub fn restrict_avg(fine: &Field, coarse: &mut Field, coarse_region: &Region) {
    let fs = fine.strides();
    let corner: [i64; 8] = child_corners(fs);
    for b in coarse_region.boxes() {
        if b.is_empty() {
            continue;
        }
        assert!(fine.storage().contains_box(&b.refine()), "restriction reads outside fine storage");
        assert!(coarse.storage().contains_box(b));
        for z in b.lo()[2]..=b.hi()[2] {
            for y in b.lo()[1]..=b.hi()[1] {
                let mut cf = fine.index_of([2 * b.lo()[0], 2 * y, 2 * z]) as i64;
                let mut kc = coarse.index_of([b.lo()[0], y, z]);
                for _x in b.lo()[0]..=b.hi()[0] {
                    let mut s = 0.0;
                    for &o in &corner {
                        s += fine.data()[(cf + o) as usize];
                    }
                    coarse.data_mut()[kc] = 0.125 * s;
                    cf += 2;
                    kc += 1;
                }
            }
        }
    }
}

fn child_corners(fs: [i64; 3]) -> [i64; 8] {
    let mut c = [0i64; 8];
    for (j, item) in c.iter_mut().enumerate() {
        let j = j as i64;
        *item = (j & 1) * fs[0] + ((j >> 1) & 1) * fs[1] + ((j >> 2) & 1) * fs[2];
    }
    c
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProlongMode {
    /// `fine[i] = I(coarse)[i]`
    Set,
    /// `fine[i] += I(coarse)[i]`
    Add,
}

/// Trilinear prolongation of `coarse` onto `fine_region`. `coarse` must hold
/// valid values on `prolong_footprint` of every region box.
pub fn prolong_trilinear(coarse: &Field, fine: &mut Field, fine_region: &Region, mode: ProlongMode) {
    let cs = coarse.strides();
    for b in fine_region.boxes() {
        if b.is_empty() {
            continue;
        }
        assert!(
            coarse.storage().contains_box(&prolong_footprint(b)),
            "prolongation reads outside coarse storage"
        );
        assert!(fine.storage().contains_box(b));
        for z in b.lo()[2]..=b.hi()[2] {
            for y in b.lo()[1]..=b.hi()[1] {
                let mut kf = fine.index_of([b.lo()[0], y, z]);
                for x in b.lo()[0]..=b.hi()[0] {
                    let i = [x, y, z];
                    let mut parent = [0i64; 3];
                    let mut sign = [0i64; 3];
                    for d in 0..3 {
                        parent[d] = i[d].div_euclid(2);
                        sign[d] = if i[d].rem_euclid(2) == 0 { -1 } else { 1 };
                    }
                    let base = coarse.index_of(parent) as i64;
                    let mut v = 0.0;
                    for corner in 0..8usize {
                        let mut w = 1.0;
                        let mut off = 0i64;
                        for d in 0..3 {
                            if corner >> d & 1 == 1 {
                                w *= 0.25;
                                off += sign[d] * cs[d];
                            } else {
                                w *= 0.75;
                            }
                        }
                        v += w * coarse.data()[(base + off) as usize];
                    }
                    match mode {
                        ProlongMode::Set => fine.data_mut()[kf] = v,
                        ProlongMode::Add => fine.data_mut()[kf] += v,
                    }
                    kf += 1;
                }
            }
        }
    }
}
