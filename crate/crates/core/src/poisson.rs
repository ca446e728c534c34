//! Model problem and discrete operator.
//!
//! Poisson `∇²u = f` on the box `[0,R1]×[0,R2]×[0,R3]` (default `R = (2,1,1)`)
//! with homogeneous Dirichlet walls, discretized cell-centered with a 27-point
//! stencil that is exact on quadratics. The manufactured solution
//! `u(x) = Π_d (x_d⁴ − R_d² x_d²)` vanishes on every wall and has the
//! polynomial right-hand side `f = Σ_d (12 x_d² − 2 R_d²) Π_{e≠d} (...)`.
//!
//! Walls are imposed through one layer of ghost cells: a ghost whose mirror
//! cell (reflection through the wall face) lies inside the domain gets
//! `(−1)^m` times the mirror value, `m` the number of out-of-domain
//! dimensions — linear interpolation through zero at the face.

use crate::grid::{cell_center, Box3, Field, Region};

/// Domain shape and manufactured solution.
#[derive(Clone, Copy, Debug)]
pub struct ProblemSpec {
    /// Physical extents of the domain box.
    pub r: [f64; 3],
}

impl ProblemSpec {
    pub fn standard() -> ProblemSpec {
        ProblemSpec { r: [2.0, 1.0, 1.0] }
    }

    pub fn exact_u(&self, x: [f64; 3]) -> f64 {
        let mut p = 1.0;
        for d in 0..3 {
            p *= x[d].powi(4) - self.r[d] * self.r[d] * x[d] * x[d];
        }
        p
    }

    pub fn rhs_f(&self, x: [f64; 3]) -> f64 {
        let g: [f64; 3] =
            std::array::from_fn(|d| x[d].powi(4) - self.r[d] * self.r[d] * x[d] * x[d]);
        let mut s = 0.0;
        for d in 0..3 {
            let mut t = 12.0 * x[d] * x[d] - 2.0 * self.r[d] * self.r[d];
            for e in 0..3 {
                if e != d {
                    t *= g[e];
                }
            }
            s += t;
        }
        s
    }

    pub fn sample_exact(&self, fld: &mut Field, r: &Region) {
        let h = fld.h();
        for b in r.boxes() {
            for i in b.iter() {
                fld.set(i, self.exact_u(cell_center(i, h, [0.0; 3])));
            }
        }
    }

    pub fn sample_rhs(&self, fld: &mut Field, r: &Region) {
        let h = fld.h();
        for b in r.boxes() {
            for i in b.iter() {
                fld.set(i, self.rhs_f(cell_center(i, h, [0.0; 3])));
            }
        }
    }

    /// Max-abs of `fld − exact_u` at cell centers over `r`; empty region
    /// gives 0.
    pub fn error_inf(&self, fld: &Field, r: &Region) -> f64 {
        let h = fld.h();
        let mut m = 0.0f64;
        for b in r.boxes() {
            for i in b.iter() {
                m = m.max((fld.get(i) - self.exact_u(cell_center(i, h, [0.0; 3]))).abs());
            }
        }
        m
    }
}

/// 27-point Laplacian weights at spacing `h`: center `−8/(3h²)`, edge
/// neighbors (two nonzero offsets) `+1/(6h²)`, corners `+1/(12h²)`, faces 0.
/// Zero row sum; exact on quadratics.
#[derive(Clone, Copy, Debug)]
pub struct Stencil27 {
    pub w: [f64; 27],
    pub h: f64,
}

/// Flat index of offset `(o1,o2,o3) ∈ {−1,0,1}³`, x fastest.
#[inline]
pub fn offset_index(o: [i64; 3]) -> usize {
    ((o[0] + 1) + 3 * (o[1] + 1) + 9 * (o[2] + 1)) as usize
}

impl Stencil27 {
    pub fn poisson(h: f64) -> Stencil27 {
        let h2 = h * h;
        let mut w = [0.0; 27];
        for o1 in -1i64..=1 {
            for o2 in -1i64..=1 {
                for o3 in -1i64..=1 {
                    let nz = (o1 != 0) as u32 + (o2 != 0) as u32 + (o3 != 0) as u32;
                    w[offset_index([o1, o2, o3])] = match nz {
                        0 => -8.0 / (3.0 * h2),
                        1 => 0.0,
                        2 => 1.0 / (6.0 * h2),
                        _ => 1.0 / (12.0 * h2),
                    };
                }
            }
        }
        Stencil27 { w, h }
    }

    pub fn row_sum(&self) -> f64 {
        self.w.iter().sum()
    }
}

/// Gershgorin bound on the spectrum of `−L_h`: `(16/3)/h²`
/// (= `|center| + Σ|off-diagonal|`).
pub fn spectral_bound(h: f64) -> f64 {
    (16.0 / 3.0) / (h * h)
}

fn data_offsets(u: &Field) -> [i64; 27] {
    let s = u.strides();
    let mut o = [0i64; 27];
    for o1 in -1i64..=1 {
        for o2 in -1i64..=1 {
            for o3 in -1i64..=1 {
                o[offset_index([o1, o2, o3])] = o1 * s[0] + o2 * s[1] + o3 * s[2];
            }
        }
    }
    o
}

#[inline]
fn stencil_at(ud: &[f64], c: i64, offs: &[i64; 27], w: &[f64; 27]) -> f64 {
    let mut s = 0.0;
    for j in 0..27 {
        s += w[j] * ud[(c + offs[j]) as usize];
    }
    s
}

/// `out[i] = (L u)(i)` over `r`. `u` must hold valid values on `grow(r, 1)`.
pub fn apply_operator(st: &Stencil27, u: &Field, out: &mut Field, r: &Region) {
    let offs = data_offsets(u);
    for b in r.boxes() {
        assert!(u.storage().contains_box(&b.grow(1)), "operator footprint exceeds storage");
        assert!(out.storage().contains_box(b));
        for z in b.lo()[2]..=b.hi()[2] {
            for y in b.lo()[1]..=b.hi()[1] {
                let mut c = u.index_of([b.lo()[0], y, z]) as i64;
                let mut k = out.index_of([b.lo()[0], y, z]);
                for _x in b.lo()[0]..=b.hi()[0] {
                    let v = stencil_at(u.data(), c, &offs, &st.w);
                    out.data_mut()[k] = v;
                    c += 1;
                    k += 1;
                }
            }
        }
    }
}

/// `out[i] += (L u)(i)` over `r`.
pub fn apply_operator_add(st: &Stencil27, u: &Field, out: &mut Field, r: &Region) {
    let offs = data_offsets(u);
    for b in r.boxes() {
        assert!(u.storage().contains_box(&b.grow(1)), "operator footprint exceeds storage");
        assert!(out.storage().contains_box(b));
        for z in b.lo()[2]..=b.hi()[2] {
            for y in b.lo()[1]..=b.hi()[1] {
                let mut c = u.index_of([b.lo()[0], y, z]) as i64;
                let mut k = out.index_of([b.lo()[0], y, z]);
                for _x in b.lo()[0]..=b.hi()[0] {
                    let v = stencil_at(u.data(), c, &offs, &st.w);
                    out.data_mut()[k] += v;
                    c += 1;
                    k += 1;
                }
            }
        }
    }
}

/// `out[i] = f[i] − (L u)(i)` over `r`.
pub fn residual(st: &Stencil27, u: &Field, f: &Field, out: &mut Field, r: &Region) {
    let offs = data_offsets(u);
    for b in r.boxes() {
        assert!(u.storage().contains_box(&b.grow(1)), "operator footprint exceeds storage");
        assert!(out.storage().contains_box(b) && f.storage().contains_box(b));
        for z in b.lo()[2]..=b.hi()[2] {
            for y in b.lo()[1]..=b.hi()[1] {
                let mut c = u.index_of([b.lo()[0], y, z]) as i64;
                let mut k = out.index_of([b.lo()[0], y, z]);
                let mut kf = f.index_of([b.lo()[0], y, z]);
                for _x in b.lo()[0]..=b.hi()[0] {
                    let v = stencil_at(u.data(), c, &offs, &st.w);
                    out.data_mut()[k] = f.data()[kf] - v;
                    c += 1;
                    k += 1;
                    kf += 1;
                }
            }
        }
    }
}

/// Fill every storage cell of `u` outside `domain` by the mirror rule
/// `u_ghost = (−1)^m u_mirror`. In-domain values (owned cells and any
/// process ghosts) must already be current; mirrors always land in-domain
/// within storage for ghost width 1.
pub fn fill_bc_ghosts(u: &mut Field, domain: &Box3) {
    let outside = u.storage().subtract(domain);
    for b in outside.boxes() {
        for g in b.iter() {
            let mut m = 0u32;
            let mut mi = g;
            for d in 0..3 {
                if g[d] < domain.lo()[d] {
                    mi[d] = 2 * domain.lo()[d] - 1 - g[d];
                    m += 1;
                } else if g[d] > domain.hi()[d] {
                    mi[d] = 2 * domain.hi()[d] + 1 - g[d];
                    m += 1;
                }
            }
            let v = u.get(mi);
            u.set(g, if m % 2 == 0 { v } else { -v });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Region;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn manufactured_solution_values() {
        let p = ProblemSpec::standard();
        let x = [1.0, 0.5, 0.5];
        assert!((p.exact_u(x) - (-0.10546875)).abs() < 1e-15);
        assert!((p.rhs_f(x) - 1.265625).abs() < 1e-12);
        // Vanishes on all walls.
        for w in [[0.0, 0.3, 0.7], [2.0, 0.3, 0.7], [1.3, 0.0, 0.7], [1.3, 1.0, 0.7],
                  [1.3, 0.3, 0.0], [1.3, 0.3, 1.0]] {
            assert_eq!(p.exact_u(w), 0.0);
        }
    }

    #[test]
    fn rhs_is_laplacian_of_exact_u() {
        // Independent oracle: centered second differences of exact_u at a
        // handful of points converge to rhs_f.
        let p = ProblemSpec::standard();
        let d = 1e-4;
        for x in [[0.7, 0.3, 0.6], [1.5, 0.8, 0.2], [0.2, 0.5, 0.5]] {
            let mut lap = 0.0;
            for dim in 0..3 {
                let mut xp = x;
                let mut xm = x;
                xp[dim] += d;
                xm[dim] -= d;
                lap += (p.exact_u(xp) - 2.0 * p.exact_u(x) + p.exact_u(xm)) / (d * d);
            }
            assert!((lap - p.rhs_f(x)).abs() < 1e-4, "x={x:?} lap={lap} f={}", p.rhs_f(x));
        }
    }

    #[test]
    fn stencil_structure() {
        let st = Stencil27::poisson(0.5);
        assert!(st.row_sum().abs() < 1e-12);
        assert_eq!(st.w[offset_index([0, 0, 0])], -8.0 / (3.0 * 0.25));
        assert_eq!(st.w[offset_index([1, 0, 0])], 0.0);
        assert_eq!(st.w[offset_index([1, 1, 0])], 1.0 / (6.0 * 0.25));
        assert_eq!(st.w[offset_index([1, -1, 1])], 1.0 / (12.0 * 0.25));
        // Symmetric under offset negation.
        for o1 in -1i64..=1 {
            for o2 in -1i64..=1 {
                for o3 in -1i64..=1 {
                    assert_eq!(
                        st.w[offset_index([o1, o2, o3])],
                        st.w[offset_index([-o1, -o2, -o3])]
                    );
                }
            }
        }
    }

    #[test]
    fn stencil_exact_on_quadratics() {
        // Interior application to 1, x, y, z, x², xy, ... reproduces the
        // continuous Laplacian to machine precision.
        let h = 0.125;
        let st = Stencil27::poisson(h);
        let b = Box3::new([0, 0, 0], [7, 7, 7]);
        let interior = Region::from_box(Box3::new([1, 1, 1], [6, 6, 6]));
        let polys: &[(&str, fn([f64; 3]) -> f64, f64)] = &[
            ("1", |_| 1.0, 0.0),
            ("x", |x| x[0], 0.0),
            ("y+z", |x| x[1] + x[2], 0.0),
            ("x2", |x| x[0] * x[0], 2.0),
            ("y2", |x| x[1] * x[1], 2.0),
            ("xy", |x| x[0] * x[1], 0.0),
            ("xz+yz", |x| x[0] * x[2] + x[1] * x[2], 0.0),
            ("quad", |x| 3.0 * x[0] * x[0] - x[1] * x[1] + 0.5 * x[0] * x[1] - 2.0 * x[2], 4.0),
        ];
        for (name, f, lap) in polys {
            let mut u = Field::new(b, 0, h);
            for i in b.iter() {
                u.set(i, f(cell_center(i, h, [0.0; 3])));
            }
            let mut out = Field::new(b, 0, h);
            apply_operator(&st, &u, &mut out, &interior);
            for i in Box3::new([1, 1, 1], [6, 6, 6]).iter() {
                assert!((out.get(i) - lap).abs() < 1e-10, "{name} at {i:?}: {}", out.get(i));
            }
        }
    }

    #[test]
    fn apply_matches_brute_force() {
        let h = 0.25;
        let st = Stencil27::poisson(h);
        let b = Box3::new([0, 0, 0], [4, 3, 3]);
        let mut u = Field::new(b, 1, h);
        let mut rng = StdRng::seed_from_u64(42);
        for i in u.storage().iter() {
            u.set(i, rng.gen_range(-1.0..1.0));
        }
        let mut out = Field::new(b, 0, h);
        apply_operator(&st, &u, &mut out, &Region::from_box(b));
        for i in b.iter() {
            let mut s = 0.0;
            for o1 in -1i64..=1 {
                for o2 in -1i64..=1 {
                    for o3 in -1i64..=1 {
                        s += st.w[offset_index([o1, o2, o3])]
                            * u.get([i[0] + o1, i[1] + o2, i[2] + o3]);
                    }
                }
            }
            assert!((out.get(i) - s).abs() < 1e-11);
        }
        // residual = f − L u against the same brute force.
        let mut f = Field::new(b, 0, h);
        for i in b.iter() {
            f.set(i, rng.gen_range(-1.0..1.0));
        }
        let mut r = Field::new(b, 0, h);
        residual(&st, &u, &f, &mut r, &Region::from_box(b));
        for i in b.iter() {
            assert!((r.get(i) - (f.get(i) - out.get(i))).abs() < 1e-11);
        }
        // add mode accumulates.
        let mut acc = out.clone();
        apply_operator_add(&st, &u, &mut acc, &Region::from_box(b));
        for i in b.iter() {
            assert!((acc.get(i) - 2.0 * out.get(i)).abs() < 1e-11);
        }
    }

    #[test]
    fn bc_mirror_rule() {
        let domain = Box3::new([0, 0, 0], [3, 3, 3]);
        let mut u = Field::new(domain, 1, 0.25);
        u.fill_box(&domain, 1.0);
        fill_bc_ghosts(&mut u, &domain);
        // Face ghost: one out-of-domain dim → −1.
        assert_eq!(u.get([-1, 1, 1]), -1.0);
        assert_eq!(u.get([4, 2, 2]), -1.0);
        // Edge ghost: two out-of-domain dims → +1.
        assert_eq!(u.get([-1, -1, 1]), 1.0);
        // Corner ghost: three → −1.
        assert_eq!(u.get([-1, -1, 4]), -1.0);
    }

    #[test]
    fn bc_face_vanishes_linearly() {
        // With the mirror fill, the interpolated wall value (mean of ghost
        // and first interior cell) is exactly zero.
        let domain = Box3::new([0, 0, 0], [7, 7, 7]);
        let mut u = Field::new(domain, 1, 0.125);
        let mut rng = StdRng::seed_from_u64(3);
        for i in domain.iter() {
            u.set(i, rng.gen_range(-1.0..1.0));
        }
        fill_bc_ghosts(&mut u, &domain);
        for t in 0..8 {
            for s in 0..8 {
                assert_eq!(u.get([-1, t, s]) + u.get([0, t, s]), 0.0);
                assert_eq!(u.get([8, t, s]) + u.get([7, t, s]), 0.0);
                assert_eq!(u.get([t, -1, s]) + u.get([t, 0, s]), 0.0);
            }
        }
    }

    #[test]
    fn truncation_error_second_order() {
        // ‖L_h u_exact − f‖∞ over the domain shrinks ~4× per refinement.
        let p = ProblemSpec::standard();
        let mut errs = Vec::new();
        for n in [8i64, 16, 32] {
            let h = 1.0 / n as f64;
            let nx = [2 * n, n, n];
            let b = Box3::from_extents(nx);
            let st = Stencil27::poisson(h);
            let mut u = Field::new(b, 1, h);
            let all = Region::from_box(u.storage());
            p.sample_exact(&mut u, &all);
            // Use exact values in the ghost ring (pure truncation, no BC
            // closure error).
            let mut out = Field::new(b, 0, h);
            apply_operator(&st, &u, &mut out, &Region::from_box(b));
            let mut e = 0.0f64;
            for i in b.iter() {
                e = e.max((out.get(i) - p.rhs_f(cell_center(i, h, [0.0; 3]))).abs());
            }
            errs.push(e);
        }
        println!("truncation errors: {errs:?}");
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
        }
    }

    #[test]
    fn spectral_bound_dominates_power_iteration() {
        // Power iteration on −L_h with the Dirichlet closure on a small box;
        // the Gershgorin bound must dominate and stay within ~1.5× of it.
        let h = 0.125;
        let st = Stencil27::poisson(h);
        let domain = Box3::new([0, 0, 0], [7, 7, 7]);
        let mut v = Field::new(domain, 1, h);
        let mut rng = StdRng::seed_from_u64(11);
        for i in domain.iter() {
            v.set(i, rng.gen_range(-1.0..1.0));
        }
        let mut av = Field::new(domain, 1, h);
        let mut lam = 0.0;
        for _ in 0..300 {
            fill_bc_ghosts(&mut v, &domain);
            apply_operator(&st, &v, &mut av, &Region::from_box(domain));
            // av is ghost-1 so −L can be re-applied next sweep.
            let norm = av.inf_norm_box(&domain);
            lam = norm / v.inf_norm_box(&domain).max(1e-300);
            for i in domain.iter() {
                av.set(i, -av.get(i)); // power-iterate −L
            }
            std::mem::swap(&mut v, &mut av);
            let scale = 1.0 / v.inf_norm_box(&domain).max(1e-300);
            for i in domain.iter() {
                let val = v.get(i) * scale;
                v.set(i, val);
            }
        }
        let bound = spectral_bound(h);
        println!("lambda_max≈{lam:.3} bound={bound:.3}");
        assert!(lam <= bound * (1.0 + 1e-9));
        assert!(bound <= lam * 1.6, "bound should be within ~1.5x of true max");
    }
}
