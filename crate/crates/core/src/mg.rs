//! FAS multigrid: V-cycles and full multigrid over the simulated
//! decomposition.
//!
//! The V-cycle is the full approximation scheme: the solution and residual
//! are both restricted (8-child average), the coarse right-hand side is
//! `I(r) + L_c Î(u)`, and the correction `Î⁻...` — concretely
//! `u += I(w − t)` where `t` snapshots the restricted solution before the
//! coarse visit. With the solution restriction switched to zero the scheme
//! degenerates to the linear correction scheme exactly, which the tests use
//! as an independent cross-check.
//!
//! Communication phases are recorded with a fixed shape so that counts are
//! independent of the number of ranks: each smoothing step, each residual
//! evaluation, and each coarse right-hand-side assembly refreshes ghosts
//! exactly once (one horizontal phase at the level it reads), and each level
//! visit records one restriction and one prolongation phase (vertical,
//! attributed to the finer level). The full-multigrid entry prolongation is
//! its own vertical phase. Diagnostics run with the ledger muted.

use crate::dd::{exchange_and_fill, CommLedger, Direction, Distance, Hierarchy, LevelSpec};
use crate::grid::{Box3, Field, Region};
use crate::poisson::{
    apply_operator, fill_bc_ghosts, residual, ProblemSpec, Stencil27,
};
use crate::smooth::{chebyshev_sweep, coarse_solve_cg, ChebRange};
use crate::transfer::{prolong_footprint, prolong_trilinear, restrict_avg, ProlongMode};
use serde::Serialize;

/// Cycle shape `F(α, ν1, ν2)`: `α` smoothing steps after each full-multigrid
/// entry prolongation, `ν1`/`ν2` pre-/post-smoothing inside V-cycles,
/// `n_vcycles` V-cycles per entry level.
#[derive(Clone, Copy, Debug)]
pub struct CycleParams {
    pub alpha: u32,
    pub nu1: u32,
    pub nu2: u32,
    pub n_vcycles: u32,
}

impl Default for CycleParams {
    fn default() -> CycleParams {
        CycleParams { alpha: 1, nu1: 2, nu2: 2, n_vcycles: 1 }
    }
}

/// How the solution is moved to the coarse level inside the V-cycle.
/// `Average` is the full approximation scheme; `Zero` degenerates to the
/// linear correction scheme (test knob — the two must agree to rounding).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolutionRestriction {
    Average,
    Zero,
}

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    pub cheb: ChebRange,
    pub coarse_tol: f64,
    pub coarse_max_iter: usize,
    pub solution_restriction: SolutionRestriction,
}

impl Default for SolverOptions {
    fn default() -> SolverOptions {
        SolverOptions {
            cheb: ChebRange::default(),
            coarse_tol: 1e-10,
            coarse_max_iter: 200,
            solution_restriction: SolutionRestriction::Average,
        }
    }
}

/// Per-rank fields of one level: solution (one ghost layer) and right-hand
/// side (no ghosts), both over the rank's owned box.
#[derive(Clone, Debug)]
pub struct ConvLevel {
    pub us: Vec<Field>,
    pub fs: Vec<Field>,
}

#[derive(Clone, Debug, Serialize)]
pub struct LevelDiag {
    pub level: usize,
    pub n_y: i64,
    pub h: f64,
    pub error_inf: f64,
    pub residual_inf: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SolveReport {
    pub entries: Vec<LevelDiag>,
    pub coarse_iters_total: u64,
}

/// All state of one simulated solve: the hierarchy, every rank's fields at
/// every level, the communication ledger, and visit counters.
pub struct SimState {
    pub hier: Hierarchy,
    pub problem: ProblemSpec,
    pub opts: SolverOptions,
    pub cycle: CycleParams,
    /// Hierarchy index of the memory-partition boundary: horizontal traffic
    /// at levels above it is classed far, at or below near; vertical phases
    /// take the class of their finer level.
    pub transition: usize,
    pub conv: Vec<ConvLevel>,
    pub ledger: CommLedger,
    pub visits: Vec<u64>,
    pub coarse_iters: u64,
}

impl SimState {
    pub fn new(
        hier: Hierarchy,
        problem: ProblemSpec,
        opts: SolverOptions,
        cycle: CycleParams,
        transition: usize,
    ) -> SimState {
        let top = hier.levels.len() - 1;
        SimState::new_partial(hier, problem, opts, cycle, transition, top)
    }

    /// Like [`Self::new`] but only allocates fields for levels up to
    /// `alloc_top` (inclusive) — used when finer levels are managed by a
    /// different storage scheme.
    pub fn new_partial(
        hier: Hierarchy,
        problem: ProblemSpec,
        opts: SolverOptions,
        cycle: CycleParams,
        transition: usize,
        alloc_top: usize,
    ) -> SimState {
        let conv = hier.levels[..=alloc_top]
            .iter()
            .map(|l| ConvLevel {
                us: l.owned.iter().map(|b| Field::new(*b, 1, l.h)).collect(),
                fs: l.owned.iter().map(|b| Field::new(*b, 0, l.h)).collect(),
            })
            .collect();
        let visits = vec![0; hier.levels.len()];
        SimState {
            hier,
            problem,
            opts,
            cycle,
            transition,
            conv,
            ledger: CommLedger::new(),
            visits,
            coarse_iters: 0,
        }
    }

    pub fn h_dist(&self, li: usize) -> Distance {
        if li > self.transition {
            Distance::Far
        } else {
            Distance::Near
        }
    }

    /// Vertical phases between `li` and `li − 1` take the finer level's class.
    pub fn v_dist(&self, li: usize) -> Distance {
        self.h_dist(li)
    }

    /// Sample the analytic right-hand side into every level's `f`. V-cycles
    /// overwrite `f` below their entry level, which is safe because the
    /// analytic values at a level are only needed while it is the entry.
    pub fn sample_all_rhs(&mut self) {
        for (l, cl) in self.hier.levels.iter().zip(self.conv.iter_mut()) {
            for (b, f) in l.owned.iter().zip(cl.fs.iter_mut()) {
                self.problem.sample_rhs(f, &Region::from_box(*b));
            }
        }
    }

    pub fn zero_all_u(&mut self) {
        for cl in &mut self.conv {
            for u in &mut cl.us {
                u.fill_all(0.0);
            }
        }
    }

    /// One horizontal ghost refresh (exchange + wall fill) at a level;
    /// records one phase and the neighbor messages.
    pub fn refresh(&mut self, li: usize) {
        let dist = self.h_dist(li);
        exchange_and_fill(&self.hier.levels[li], &mut self.conv[li].us, &mut self.ledger, dist);
    }

    /// `nu` Chebyshev steps on every rank's owned box; `nu` phases.
    pub fn smooth(&mut self, li: usize, nu: u32) {
        if nu == 0 {
            return;
        }
        let dist = self.h_dist(li);
        let lvl = &self.hier.levels[li];
        let st = Stencil27::poisson(lvl.h);
        let cl = &mut self.conv[li];
        let ledger = &mut self.ledger;
        let mut refresh = |us: &mut [Field]| exchange_and_fill(lvl, us, ledger, dist);
        chebyshev_sweep(&self.opts.cheb, &st, nu, &mut cl.us, &cl.fs, &lvl.owned, &mut refresh);
    }

    /// Refresh then `r = f − L u` per rank; one phase, returns the residual
    /// fields.
    fn residual_phase(&mut self, li: usize) -> Vec<Field> {
        self.refresh(li);
        let lvl = &self.hier.levels[li];
        let st = Stencil27::poisson(lvl.h);
        let cl = &self.conv[li];
        lvl.owned
            .iter()
            .enumerate()
            .map(|(r, b)| {
                let mut rf = Field::new(*b, 0, lvl.h);
                residual(&st, &cl.us[r], &cl.fs[r], &mut rf, &Region::from_box(*b));
                rf
            })
            .collect()
    }

    fn coarsest_solve(&mut self) {
        let dist = self.h_dist(0);
        let lvl = &self.hier.levels[0];
        let st = Stencil27::poisson(lvl.h);
        let cl = &mut self.conv[0];
        let ledger = &mut self.ledger;
        let iters = coarse_solve_cg(
            &st,
            &mut cl.us[0],
            &cl.fs[0],
            &lvl.global,
            self.opts.coarse_tol,
            self.opts.coarse_max_iter,
            &mut || ledger.record_phase(0, Direction::Horizontal, dist),
        );
        self.coarse_iters += iters as u64;
    }

    /// One FAS V-cycle entered at level `li`, recursing to the coarsest
    /// level where CG solves exactly.
    pub fn fas_vcycle(&mut self, li: usize) {
        self.visits[li] += 1;
        if li == 0 {
            self.coarsest_solve();
            return;
        }
        self.smooth(li, self.cycle.nu1);
        let rs = self.residual_phase(li);

        // Restriction phase: solution and residual move together.
        let vd = self.v_dist(li);
        self.ledger.record_phase(li, Direction::Vertical, vd);
        let (t, ir) = {
            let hier = &self.hier;
            let (fine_lvl, coarse_lvl) = (&hier.levels[li], &hier.levels[li - 1]);
            let ledger = &mut self.ledger;
            let (below, at) = self.conv.split_at_mut(li);
            let coarse = &mut below[li - 1];
            let fine = &at[0];
            let mut ir: Vec<Field> =
                coarse_lvl.owned.iter().map(|b| Field::new(*b, 0, coarse_lvl.h)).collect();
            for rf in 0..fine_lvl.n_ranks() {
                let cb = fine_lvl.owned[rf].coarsen().expect("owned boxes stay 2-aligned");
                let rc = coarse_lvl.owner_of(cb.lo());
                let reg = Region::from_box(cb);
                match self.opts.solution_restriction {
                    SolutionRestriction::Average => {
                        restrict_avg(&fine.us[rf], &mut coarse.us[rc], &reg)
                    }
                    SolutionRestriction::Zero => coarse.us[rc].fill_box(&cb, 0.0),
                }
                restrict_avg(&rs[rf], &mut ir[rc], &reg);
                if fine_lvl.phys_of(rf, hier.p) != coarse_lvl.phys_of(rc, hier.p) {
                    ledger.record_message(li, Direction::Vertical, vd, rc, 2 * cb.volume() as u64);
                }
            }
            // Snapshot the restricted solution for the correction.
            let t: Vec<Field> = coarse_lvl
                .owned
                .iter()
                .zip(coarse.us.iter())
                .map(|(b, u)| {
                    let mut s = Field::new(*b, 0, coarse_lvl.h);
                    s.copy_box_from(u, b);
                    s
                })
                .collect();
            (t, ir)
        };
        drop(rs);

        // Coarse right-hand side f_c = L_c u_c + I(r): one phase at li − 1.
        self.refresh(li - 1);
        {
            let coarse_lvl = &self.hier.levels[li - 1];
            let st = Stencil27::poisson(coarse_lvl.h);
            let cl = &mut self.conv[li - 1];
            for rc in 0..coarse_lvl.n_ranks() {
                let b = coarse_lvl.owned[rc];
                let reg = Region::from_box(b);
                apply_operator(&st, &cl.us[rc], &mut cl.fs[rc], &reg);
                cl.fs[rc].axpy_region(1.0, &ir[rc], &reg);
            }
        }
        drop(ir);

        self.fas_vcycle(li - 1);

        // Correction prolongation: u += I(w − t); one vertical phase.
        self.ledger.record_phase(li, Direction::Vertical, vd);
        {
            let hier = &self.hier;
            let (fine_lvl, coarse_lvl) = (&hier.levels[li], &hier.levels[li - 1]);
            let ledger = &mut self.ledger;
            let (below, at) = self.conv.split_at_mut(li);
            let coarse = &below[li - 1];
            let fine = &mut at[0];
            for rf in 0..fine_lvl.n_ranks() {
                let fb = fine_lvl.owned[rf];
                let scratch = gather_correction(
                    hier, fine_lvl, coarse_lvl, rf, &fb, &coarse.us, Some(&t), ledger, li, vd,
                );
                prolong_trilinear(&scratch, &mut fine.us[rf], &Region::from_box(fb), ProlongMode::Add);
            }
        }

        self.smooth(li, self.cycle.nu2);
    }

    /// Full-multigrid entry prolongation `Π`: interpolate the coarse
    /// solution up as the fine first guess; one vertical phase at `li`.
    fn fmg_prolong_entry(&mut self, li: usize) {
        let vd = self.v_dist(li);
        self.ledger.record_phase(li, Direction::Vertical, vd);
        let hier = &self.hier;
        let (fine_lvl, coarse_lvl) = (&hier.levels[li], &hier.levels[li - 1]);
        let ledger = &mut self.ledger;
        let (below, at) = self.conv.split_at_mut(li);
        let coarse = &below[li - 1];
        let fine = &mut at[0];
        for rf in 0..fine_lvl.n_ranks() {
            let fb = fine_lvl.owned[rf];
            let scratch = gather_correction(
                hier, fine_lvl, coarse_lvl, rf, &fb, &coarse.us, None, ledger, li, vd,
            );
            prolong_trilinear(&scratch, &mut fine.us[rf], &Region::from_box(fb), ProlongMode::Set);
        }
    }

    /// Full multigrid with entries from the coarsest level up to `top`
    /// (inclusive). The coarsest entry is the bare coarse solve; each later
    /// entry interpolates, smooths `α` steps, and runs the V-cycle(s).
    /// Assumes `sample_all_rhs` + `zero_all_u` state; see [`Self::fmg`].
    pub fn fmg_up_to(&mut self, top: usize) -> SolveReport {
        let mut report = SolveReport::default();
        for entry in 0..=top {
            if entry > 0 {
                self.fmg_prolong_entry(entry);
                self.smooth(entry, self.cycle.alpha);
            }
            for _ in 0..self.cycle.n_vcycles {
                self.fas_vcycle(entry);
            }
            report.entries.push(self.diagnose(entry));
        }
        report.coarse_iters_total = self.coarse_iters;
        report
    }

    /// Full multigrid over the whole hierarchy from a fresh state.
    pub fn fmg(&mut self) -> SolveReport {
        self.sample_all_rhs();
        self.zero_all_u();
        self.fmg_up_to(self.hier.levels.len() - 1)
    }

    /// Max-abs discretization error against the manufactured solution over
    /// every rank's owned box.
    pub fn error_inf_global(&self, li: usize) -> f64 {
        let lvl = &self.hier.levels[li];
        let cl = &self.conv[li];
        let mut m = 0.0f64;
        for (b, u) in lvl.owned.iter().zip(cl.us.iter()) {
            m = m.max(self.problem.error_inf(u, &Region::from_box(*b)));
        }
        m
    }

    /// Max-abs residual over owned boxes; refreshes ghosts first (the caller
    /// controls ledger muting).
    pub fn residual_inf_global(&mut self, li: usize) -> f64 {
        self.refresh(li);
        let lvl = &self.hier.levels[li];
        let st = Stencil27::poisson(lvl.h);
        let cl = &self.conv[li];
        let mut m = 0.0f64;
        for (r, b) in lvl.owned.iter().enumerate() {
            let mut rf = Field::new(*b, 0, lvl.h);
            residual(&st, &cl.us[r], &cl.fs[r], &mut rf, &Region::from_box(*b));
            m = m.max(rf.inf_norm_box(b));
        }
        m
    }

    /// Error and residual at a level with the ledger muted.
    pub fn diagnose(&mut self, li: usize) -> LevelDiag {
        let was = self.ledger.is_muted();
        self.ledger.set_muted(true);
        let error_inf = self.error_inf_global(li);
        let residual_inf = self.residual_inf_global(li);
        self.ledger.set_muted(was);
        let lvl = &self.hier.levels[li];
        LevelDiag { level: li, n_y: lvl.global.extent(1), h: lvl.h, error_inf, residual_inf }
    }

    /// Asymptotic V-cycle residual contraction at a level: start from zero,
    /// run repeated V-cycles, report per-cycle residual norms and the worst
    /// contraction ratio observed before hitting the rounding floor.
    pub fn measure_gamma(&mut self, li: usize, n_cycles: u32) -> (Vec<f64>, f64) {
        self.sample_all_rhs();
        self.zero_all_u();
        let was = self.ledger.is_muted();
        let mut norms = Vec::with_capacity(n_cycles as usize + 1);
        self.ledger.set_muted(true);
        norms.push(self.residual_inf_global(li));
        self.ledger.set_muted(was);
        for _ in 0..n_cycles {
            self.fas_vcycle(li);
            self.ledger.set_muted(true);
            norms.push(self.residual_inf_global(li));
            self.ledger.set_muted(was);
        }
        let floor = norms[0] * 1e-12;
        let mut gamma = 0.0f64;
        for w in norms.windows(2) {
            if w[1] > floor {
                gamma = gamma.max(w[1] / w[0]);
            }
        }
        (norms, gamma)
    }
}

/// Convergence-factor model `Γ(r) = r / (4r + 3)` for one-way nested
/// iteration with work ratio `r`.
pub fn gamma_of_r(r: f64) -> f64 {
    r / (4.0 * r + 3.0)
}

/// Gather the coarse values (solution, or solution minus snapshot) that
/// prolongation onto `fine_box` reads, into a scratch field over the
/// footprint, counting one vertical message per off-rank owner overlap; then
/// close the out-of-domain rim by the wall mirror rule.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gather_correction(
    hier: &Hierarchy,
    fine_lvl: &LevelSpec,
    coarse_lvl: &LevelSpec,
    rf: usize,
    fine_box: &Box3,
    coarse_us: &[Field],
    snapshot: Option<&[Field]>,
    ledger: &mut CommLedger,
    level_of_phase: usize,
    vd: Distance,
) -> Field {
    let fp = prolong_footprint(fine_box);
    let mut scratch = Field::new(fp, 0, coarse_lvl.h);
    for rc in 0..coarse_lvl.n_ranks() {
        let o = fp.intersect(&coarse_lvl.owned[rc]);
        if o.is_empty() {
            continue;
        }
        match snapshot {
            Some(t) => {
                for i in o.iter() {
                    scratch.set(i, coarse_us[rc].get(i) - t[rc].get(i));
                }
            }
            None => scratch.copy_box_from(&coarse_us[rc], &o),
        }
        if coarse_lvl.phys_of(rc, hier.p) != fine_lvl.phys_of(rf, hier.p) {
            ledger.record_message(level_of_phase, Direction::Vertical, vd, rf, o.volume() as u64);
        }
    }
    fill_bc_ghosts(&mut scratch, &coarse_lvl.global);
    scratch
}
