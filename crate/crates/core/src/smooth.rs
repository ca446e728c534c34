//! Smoothers and the coarsest-level solver.
//!
//! The smoother is a Chebyshev iteration of fixed degree targeting the upper
//! part of the spectrum of the (positive) operator `A = −L`. Each step
//! refreshes ghosts once (via a caller-supplied callback that performs the
//! process exchange and/or wall fill and does any communication accounting),
//! recomputes the residual from scratch, and advances the direction
//! recurrence — so one step costs exactly one ghost refresh and one operator
//! application, and simulated ranks stay in lockstep.
//!
//! The coarsest level is solved directly by conjugate gradients on `A`.

use crate::grid::{Box3, Field};
use crate::poisson::{apply_operator, fill_bc_ghosts, residual, spectral_bound, Stencil27};

/// Chebyshev target interval `[lo_frac, hi_frac] · λ̂` where `λ̂ = (16/3)/h²`
/// is the Gershgorin bound on `A = −L`.
///
/// The default `(0.25, 1.0)` keeps the damping factor below ~0.25 in
/// magnitude over the entire upper half of the spectrum even at degree 2,
/// while leaving smooth modes to the coarse grids.
#[derive(Clone, Copy, Debug)]
pub struct ChebRange {
    pub lo_frac: f64,
    pub hi_frac: f64,
}

impl Default for ChebRange {
    fn default() -> ChebRange {
        ChebRange { lo_frac: 0.25, hi_frac: 1.0 }
    }
}

impl ChebRange {
    /// Concrete eigenvalue interval at spacing `h`.
    pub fn interval(&self, h: f64) -> (f64, f64) {
        let b = spectral_bound(h);
        (self.lo_frac * b, self.hi_frac * b)
    }
}

/// One Chebyshev smoothing sweep of the given degree applied to every rank's
/// `(u, f)` pair over its smoothing box. `refresh` is invoked exactly
/// `degree` times, each time before the residual is recomputed; it must make
/// `grow(box, 1)` of every `u` valid (exchange and/or wall fill) and is where
/// the caller records the horizontal phase.
///
/// Degree 1 is Richardson with weight `2/(λlo+λhi)`.
pub fn chebyshev_sweep(
    range: &ChebRange,
    st: &Stencil27,
    degree: u32,
    us: &mut [Field],
    fs: &[Field],
    boxes: &[Box3],
    refresh: &mut dyn FnMut(&mut [Field]),
) {
    if degree == 0 {
        return;
    }
    assert_eq!(us.len(), fs.len());
    assert_eq!(us.len(), boxes.len());
    let (lam_lo, lam_hi) = range.interval(st.h);
    let theta = 0.5 * (lam_hi + lam_lo);
    let delta = 0.5 * (lam_hi - lam_lo);
    let sigma1 = theta / delta;
    let mut rho = 1.0 / sigma1;

    // The direction fields persist across steps; the residual is transient
    // per rank per step (it shares the direction's storage box, so the two
    // line up elementwise).
    let mut ds: Vec<Field> = boxes.iter().map(|b| Field::new(*b, 0, st.h)).collect();

    for step in 0..degree {
        refresh(us);
        let rho_next = if step == 0 { rho } else { 1.0 / (2.0 * sigma1 - rho) };
        for ((u, f), (d, b)) in us
            .iter_mut()
            .zip(fs.iter())
            .zip(ds.iter_mut().zip(boxes.iter()))
        {
            if b.is_empty() {
                continue;
            }
            let reg = crate::grid::Region::from_box(*b);
            // r holds f − L u; the residual of the positive operator A = −L
            // is its negation, which the update signs below absorb.
            let mut r = Field::new(*b, 0, st.h);
            residual(st, u, f, &mut r, &reg);
            if step == 0 {
                for (dv, rv) in d.data_mut().iter_mut().zip(r.data()) {
                    *dv = -rv / theta;
                }
            } else {
                let c_d = rho_next * rho;
                let c_r = 2.0 * rho_next / delta;
                for (dv, rv) in d.data_mut().iter_mut().zip(r.data()) {
                    *dv = c_d * *dv - c_r * rv;
                }
            }
            u.axpy_region(1.0, d, &reg);
        }
        rho = rho_next;
    }
}

/// Solve `L u = f` on a single-rank level by CG on `A = −L`, with the wall
/// mirror fill as the only ghost source. `on_apply` fires once per operator
/// application (including the initial residual) so the caller can account a
/// phase. Stops when `‖r‖₂ ≤ rel_tol · ‖f‖₂` or at `max_iter`; returns the
/// iteration count. A zero right-hand side short-circuits to `u ≡ 0`.
pub fn coarse_solve_cg(
    st: &Stencil27,
    u: &mut Field,
    f: &Field,
    domain: &Box3,
    rel_tol: f64,
    max_iter: usize,
    on_apply: &mut dyn FnMut(),
) -> usize {
    let reg = crate::grid::Region::from_box(*domain);
    let bnorm2 = dot(f, f, domain);
    if bnorm2 == 0.0 {
        u.fill_box(domain, 0.0);
        return 0;
    }
    let mut r = Field::new(*domain, 0, st.h);
    fill_bc_ghosts(u, domain);
    on_apply();
    residual(st, u, f, &mut r, &reg);
    for i in domain.iter() {
        r.set(i, -r.get(i)); // b − A u for the positive operator
    }
    let mut p = Field::new(*domain, 1, st.h);
    p.copy_box_from(&r, domain);
    let mut ap = Field::new(*domain, 0, st.h);
    let mut rr = dot(&r, &r, domain);
    let stop2 = rel_tol * rel_tol * bnorm2;
    let mut iters = 0;
    while iters < max_iter && rr > stop2 {
        fill_bc_ghosts(&mut p, domain);
        on_apply();
        apply_operator(st, &p, &mut ap, &reg);
        for i in domain.iter() {
            ap.set(i, -ap.get(i)); // A p
        }
        let pap = dot(&p, &ap, domain);
        let alpha = rr / pap;
        u.axpy_region(alpha, &p, &reg);
        r.axpy_region(-alpha, &ap, &reg);
        let rr_new = dot(&r, &r, domain);
        let beta = rr_new / rr;
        for i in domain.iter() {
            p.set(i, r.get(i) + beta * p.get(i));
        }
        rr = rr_new;
        iters += 1;
    }
    iters
}

fn dot(a: &Field, b: &Field, bx: &Box3) -> f64 {
    let mut s = 0.0;
    for i in bx.iter() {
        s += a.get(i) * b.get(i);
    }
    s
}

/// Eigenvalue of `A = −L` (27-point, mirror walls) for the separable mode
/// `Π_d sin(m_d π (i_d + 1/2) / N_d)` on an `N1×N2×N3` cell grid:
/// `Σ_d s_d Π_{e≠d} c_e` with `s = 4 sin²(θ/2)/h²`, `c = (2+cos θ)/3`,
/// `θ_d = m_d π / N_d`. Exposed for spectral tests and diagnostics.
pub fn mode_eigenvalue(m: [i64; 3], n: [i64; 3], h: f64) -> f64 {
    let th: [f64; 3] = std::array::from_fn(|d| m[d] as f64 * std::f64::consts::PI / n[d] as f64);
    let s: [f64; 3] = std::array::from_fn(|d| 4.0 * (th[d] / 2.0).sin().powi(2) / (h * h));
    let c: [f64; 3] = std::array::from_fn(|d| (2.0 + th[d].cos()) / 3.0);
    let mut lam = 0.0;
    for d in 0..3 {
        let mut t = s[d];
        for e in 0..3 {
            if e != d {
                t *= c[e];
            }
        }
        lam += t;
    }
    lam
}

/// Damping factor the degree-`nu` sweep applies to an eigenvalue `lam`
/// (the shifted-Chebyshev residual polynomial on the target interval).
pub fn damping_factor(range: &ChebRange, h: f64, nu: u32, lam: f64) -> f64 {
    let (lo, hi) = range.interval(h);
    let theta = 0.5 * (hi + lo);
    let delta = 0.5 * (hi - lo);
    cheb_t(nu, (theta - lam) / delta) / cheb_t(nu, theta / delta)
}

fn cheb_t(n: u32, x: f64) -> f64 {
    let (mut a, mut b) = (1.0, x);
    if n == 0 {
        return a;
    }
    for _ in 1..n {
        let c = 2.0 * x * b - a;
        a = b;
        b = c;
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{cell_center, Region};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn bc_refresh(domain: Box3) -> impl FnMut(&mut [Field]) {
        move |us: &mut [Field]| {
            for u in us.iter_mut() {
                fill_bc_ghosts(u, &domain);
            }
        }
    }

    #[test]
    fn degree_one_is_richardson() {
        let h = 0.25;
        let st = Stencil27::poisson(h);
        let b = Box3::from_extents([4, 4, 4]);
        let mut rng = StdRng::seed_from_u64(5);
        let mut u = Field::new(b, 1, h);
        let mut f = Field::new(b, 0, h);
        for i in b.iter() {
            u.set(i, rng.gen_range(-1.0..1.0));
            f.set(i, rng.gen_range(-1.0..1.0));
        }
        let u0 = u.clone();
        let range = ChebRange::default();
        chebyshev_sweep(&range, &st, 1, std::slice::from_mut(&mut u),
                        &[f.clone()], &[b], &mut bc_refresh(b));
        // Reference: u − w (f − L u) with w = 2/(λlo+λhi).
        let (lo, hi) = range.interval(h);
        let w = 2.0 / (lo + hi);
        let mut uref = u0.clone();
        fill_bc_ghosts(&mut uref, &b);
        let mut r = Field::new(b, 0, h);
        residual(&st, &uref, &f, &mut r, &Region::from_box(b));
        for i in b.iter() {
            let want = u0.get(i) - w * r.get(i);
            assert!((u.get(i) - want).abs() < 1e-14);
        }
    }

    #[test]
    fn refresh_called_exactly_degree_times() {
        let h = 0.5;
        let st = Stencil27::poisson(h);
        let b = Box3::from_extents([2, 2, 2]);
        let mut u = Field::new(b, 1, h);
        let f = Field::new(b, 0, h);
        let mut calls = 0;
        let mut refresh = |us: &mut [Field]| {
            calls += 1;
            for u in us.iter_mut() {
                fill_bc_ghosts(u, &b);
            }
        };
        chebyshev_sweep(&ChebRange::default(), &st, 3, std::slice::from_mut(&mut u),
                        &[f], &[b], &mut refresh);
        assert_eq!(calls, 3);
    }

    #[test]
    fn eigenmode_damping_matches_polynomial() {
        // Every separable mode is an exact eigenvector of the wall-closed
        // operator, so one sweep scales it by exactly the residual
        // polynomial; the upper half of the spectrum must shrink ≥ 2×.
        let n = [8i64, 8, 8];
        let h = 1.0 / 8.0;
        let st = Stencil27::poisson(h);
        let b = Box3::from_extents(n);
        let range = ChebRange::default();
        let f = Field::new(b, 0, h);
        let lam_max = mode_eigenvalue([8, 8, 8], n, h)
            .max(mode_eigenvalue([8, 1, 1], n, h))
            .max(mode_eigenvalue([8, 8, 1], n, h));
        let mut upper_checked = 0;
        for m1 in 1..=n[0] {
            for m2 in [1i64, 3, n[1] - 1, n[1]] {
                for m3 in [2i64, n[2]] {
                    let m = [m1, m2, m3];
                    let lam = mode_eigenvalue(m, n, h);
                    let mut u = Field::new(b, 1, h);
                    for i in b.iter() {
                        let x = cell_center(i, 1.0, [0.0; 3]); // index-space centers
                        let mut v = 1.0;
                        for d in 0..3 {
                            v *= (m[d] as f64 * std::f64::consts::PI * x[d] / n[d] as f64).sin();
                        }
                        u.set(i, v);
                    }
                    let before = u.inf_norm_box(&b);
                    for nu in [1u32, 2] {
                        let mut uu = u.clone();
                        chebyshev_sweep(&range, &st, nu, std::slice::from_mut(&mut uu),
                                        &[f.clone()], &[b], &mut bc_refresh(b));
                        let after = uu.inf_norm_box(&b);
                        let q = damping_factor(&range, h, nu, lam);
                        assert!(
                            (after - q.abs() * before).abs() < 1e-9 * before.max(1.0),
                            "mode {m:?} nu={nu}: measured {} predicted {}",
                            after / before,
                            q.abs()
                        );
                        assert!(after < before, "no mode may grow: {m:?} nu={nu}");
                        if lam >= 0.5 * lam_max {
                            assert!(
                                after <= 0.5 * before,
                                "upper-half mode {m:?} nu={nu}: factor {}",
                                after / before
                            );
                        }
                    }
                    if lam >= 0.5 * lam_max {
                        upper_checked += 1;
                    }
                }
            }
        }
        assert!(upper_checked > 10, "test must actually cover the upper half");
    }

    #[test]
    fn cg_recovers_discrete_solution() {
        let h = 1.0 / 8.0;
        let st = Stencil27::poisson(h);
        let b = Box3::from_extents([8, 8, 8]);
        let mut rng = StdRng::seed_from_u64(17);
        let mut ustar = Field::new(b, 1, h);
        for i in b.iter() {
            ustar.set(i, rng.gen_range(-1.0..1.0));
        }
        fill_bc_ghosts(&mut ustar, &b);
        let mut f = Field::new(b, 0, h);
        apply_operator(&st, &ustar, &mut f, &Region::from_box(b));
        let mut u = Field::new(b, 1, h);
        let mut phases = 0;
        let iters = coarse_solve_cg(&st, &mut u, &f, &b, 1e-12, 500, &mut || phases += 1);
        assert!(iters > 0 && iters < 500);
        assert_eq!(phases, iters + 1);
        let mut e = 0.0f64;
        for i in b.iter() {
            e = e.max((u.get(i) - ustar.get(i)).abs());
        }
        assert!(e < 1e-8, "error {e}");
    }

    #[test]
    fn cg_two_cell_grid_is_immediate() {
        // The coarsest level of the standard hierarchy: 2×1×1 cells.
        let h = 1.0;
        let st = Stencil27::poisson(h);
        let b = Box3::from_extents([2, 1, 1]);
        let mut ustar = Field::new(b, 1, h);
        ustar.set([0, 0, 0], 0.7);
        ustar.set([1, 0, 0], -0.3);
        fill_bc_ghosts(&mut ustar, &b);
        let mut f = Field::new(b, 0, h);
        apply_operator(&st, &ustar, &mut f, &Region::from_box(b));
        let mut u = Field::new(b, 1, h);
        let iters = coarse_solve_cg(&st, &mut u, &f, &b, 1e-12, 50, &mut || {});
        assert!(iters <= 3, "two unknowns should converge almost immediately, took {iters}");
        assert!((u.get([0, 0, 0]) - 0.7).abs() < 1e-10);
        assert!((u.get([1, 0, 0]) + 0.3).abs() < 1e-10);
    }

    #[test]
    fn cg_zero_rhs_short_circuits() {
        let st = Stencil27::poisson(1.0);
        let b = Box3::from_extents([2, 1, 1]);
        let mut u = Field::new(b, 1, 1.0);
        u.set([0, 0, 0], 5.0);
        let f = Field::new(b, 0, 1.0);
        let mut applies = 0;
        let iters = coarse_solve_cg(&st, &mut u, &f, &b, 1e-12, 50, &mut || applies += 1);
        assert_eq!(iters, 0);
        assert_eq!(applies, 0);
        assert_eq!(u.get([0, 0, 0]), 0.0);
        assert_eq!(u.get([1, 0, 0]), 0.0);
    }
}
