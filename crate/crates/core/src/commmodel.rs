//! Analytic communication-complexity model and reconciliation against the
//! instrumented ledger.
//!
//! Everything here is reported in model units — phases, messages, cells —
//! never seconds. The phase table gives per-level-visit phase counts for the
//! three grid classes (shared coarse grids, conventional fine grids, buffered
//! fine grids) in terms of the per-phase costs `c_H` (one horizontal ghost
//! exchange) and `c_V` (one vertical transfer); the global scaling with
//! problem size is left as a labeled multiplier rather than folded into the
//! entries. Reconciliation replays the full-multigrid schedule from a solve's
//! visit counts and checks the ledger's recorded phases against the closed
//! forms, which is the artifact's end-to-end guard that the simulated solvers
//! communicate exactly as the model claims.

use crate::dd::{CommLedger, Direction};
use crate::mg::SimState;
use crate::sr::SrState;
use serde::Serialize;

/// Model inputs: `m` is the number of multigrid refinements (level count
/// minus one), `k` of them segmental, `n` the fine-grid edge in cells, and
/// `q` the memory-model granularity (cells in a small patch).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ModelInputs {
    pub m: u32,
    pub k: u32,
    pub n: u64,
    pub q: u64,
}

impl ModelInputs {
    pub fn new(m: u32, k: u32, n: u64) -> Result<ModelInputs, String> {
        if k > m {
            return Err(format!("segmental levels k = {k} exceed refinements m = {m}"));
        }
        if n < 2 || !n.is_power_of_two() {
            return Err(format!("fine edge n = {n} must be a power of 2 and at least 2"));
        }
        Ok(ModelInputs { m, k, n, q: 64 })
    }
}

/// Full-multigrid grid-visit count: 1 visit at the finest level, 2 at the
/// next, …, m+1 at the coarsest — both the exact triangular sum and the
/// common m²/2-style approximation, so neither is asserted as the other.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct GridVisits {
    pub exact: u64,
    pub approx: u64,
}

pub fn grid_visits(m: u32) -> GridVisits {
    let m = m as u64;
    GridVisits { exact: (m + 1) * (m + 2) / 2, approx: (m + 1) * m / 2 }
}

/// A phase-count expression `outer·(c_h·c_H + c_v·c_V)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct PhaseExpr {
    pub outer: u64,
    pub c_h: u64,
    pub c_v: u64,
}

impl PhaseExpr {
    pub const fn new(outer: u64, c_h: u64, c_v: u64) -> PhaseExpr {
        PhaseExpr { outer, c_h, c_v }
    }

    pub fn render(&self) -> String {
        if self.outer == 0 || (self.c_h == 0 && self.c_v == 0) {
            return "0".to_string();
        }
        let mut terms = Vec::new();
        if self.c_h > 0 {
            terms.push(format!("{}c_H", self.c_h));
        }
        if self.c_v > 0 {
            terms.push(format!("{}c_V", self.c_v));
        }
        let inner = terms.join(" + ");
        if self.outer == 1 {
            inner
        } else {
            format!("{}({inner})", self.outer)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PhaseRow {
    pub grids: &'static str,
    pub near: PhaseExpr,
    pub far: PhaseExpr,
}

/// Communication phases per level visit for a V(2,2) cycle with one
/// pre-entry smoothing step, by grid class and distance. The shared coarse
/// grids are all near and carry the agglomerated tail (weighted 3× for the
/// extra visits the full-multigrid schedule gives them); fine-grid rows
/// split by data model: the conventional one exchanges ghosts six times per
/// visit wherever it runs, the buffered one never exchanges at all and pays
/// only the two vertical transfers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PhaseTable {
    pub multiplier: &'static str,
    pub rows: [PhaseRow; 3],
    pub m: u32,
    pub k: u32,
}

pub fn phase_table(m: u32, k: u32) -> PhaseTable {
    PhaseTable {
        multiplier: "log2(N)^2/8",
        rows: [
            PhaseRow {
                grids: "coarse grids",
                near: PhaseExpr::new(3, 6, 2),
                far: PhaseExpr::new(1, 0, 0),
            },
            PhaseRow {
                grids: "conventional fine grids",
                near: PhaseExpr::new(1, 6, 0),
                far: PhaseExpr::new(1, 6, 2),
            },
            PhaseRow {
                grids: "segmental fine grids",
                near: PhaseExpr::new(1, 6, 0),
                far: PhaseExpr::new(1, 0, 2),
            },
        ],
        m,
        k,
    }
}

impl PhaseTable {
    pub fn to_csv(&self) -> String {
        let mut s = format!("# per-level-visit phases, global multiplier {}\n", self.multiplier);
        s.push_str("grids,near,far\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{}\n", r.grids, r.near.render(), r.far.render()));
        }
        s
    }
}

/// Horizontal messages one fully interior rank sends per level visit with a
/// 27-point stencil: 26 neighbors, once per exchange phase.
pub fn interior_messages_per_visit(table: &PhaseTable) -> u64 {
    26 * table.rows[1].near.c_h
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Method {
    Conventional,
    Sr,
}

/// Bisection-bandwidth model for an N³-scale solve across a machine cut:
/// the conventional data model moves a plane of N² cells per fine exchange,
/// while the buffered model's cut traffic is the coarse-interface gathers,
/// N·(log₂N)³ in model units.
pub fn bisection(n: u64, method: Method) -> u64 {
    assert!(n >= 2 && n.is_power_of_two(), "bisection model wants a power-of-2 edge ≥ 2");
    match method {
        Method::Conventional => n * n,
        Method::Sr => {
            let l = n.ilog2() as u64;
            n * l * l * l
        }
    }
}

/// CSV of both bisection curves over edges 2⁴..=2¹⁴.
pub fn bisection_csv() -> String {
    let mut s = String::from("n,conventional,segmental\n");
    for e in 4..=14u32 {
        let n = 1u64 << e;
        s.push_str(&format!(
            "{n},{},{}\n",
            bisection(n, Method::Conventional),
            bisection(n, Method::Sr)
        ));
    }
    s
}

/// The shape of a completed solve, extracted from solver state: level count,
/// the transition index, per-level visit counts, and the cycle parameters —
/// everything the replay needs to price the schedule.
#[derive(Clone, Debug, Serialize)]
pub struct CycleShape {
    pub n_levels: usize,
    pub transition: usize,
    pub k_refinements: u32,
    pub visits: Vec<u64>,
    pub alpha: u32,
    pub nu1: u32,
    pub nu2: u32,
    pub n_vcycles: u32,
}

impl CycleShape {
    pub fn conventional(s: &SimState) -> CycleShape {
        CycleShape {
            n_levels: s.hier.levels.len(),
            transition: s.transition,
            k_refinements: 0,
            visits: s.visits.clone(),
            alpha: s.cycle.alpha,
            nu1: s.cycle.nu1,
            nu2: s.cycle.nu2,
            n_vcycles: s.cycle.n_vcycles,
        }
    }

    pub fn sr(s: &SrState) -> CycleShape {
        CycleShape {
            n_levels: s.sim.hier.levels.len(),
            transition: s.sim.transition,
            k_refinements: s.k_refinements,
            visits: s.sim.visits.clone(),
            alpha: s.sim.cycle.alpha,
            nu1: s.sim.cycle.nu1,
            nu2: s.sim.cycle.nu2,
            n_vcycles: s.sim.cycle.n_vcycles,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Fact {
    pub name: String,
    pub expected: u64,
    pub observed: u64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReconcileReport {
    pub facts: Vec<Fact>,
    pub pass: bool,
}

impl ReconcileReport {
    fn push(&mut self, name: String, expected: u64, observed: u64) {
        let pass = expected == observed;
        self.pass &= pass;
        self.facts.push(Fact { name, expected, observed, pass });
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("fact,expected,observed,pass\n");
        for f in &self.facts {
            s.push_str(&format!("{},{},{},{}\n", f.name, f.expected, f.observed, f.pass));
        }
        s
    }
}

/// Replay a full-multigrid schedule against the ledger and check every
/// closed-form phase count, fact by fact.
///
/// Per exchanged level `ℓ ≥ 1` the horizontal total must be
/// `visits·(2+ν1+ν2) + α − n_vcycles`: six per visit under the default
/// V(2,2) cycle, with the entry visit trading its pre-residual refresh for
/// the entry smoothing. Vertical phases are `1 + 2·visits` at every level
/// above the coarsest in both schemes (one entry prolongation, then a
/// restriction and a correction per visit). Buffered levels must show zero
/// horizontal phases and messages, no far-horizontal traffic anywhere, and
/// vertical messages confined to the transition interface. The coarsest
/// level's horizontal phases scale with iteration counts of the bottom
/// solver, not the schedule, so they are reported nowhere here.
pub fn reconcile(ledger: &CommLedger, table: &PhaseTable, shape: &CycleShape) -> ReconcileReport {
    let mut rep = ReconcileReport { facts: Vec::new(), pass: true };
    let h_per_visit = 2 + shape.nu1 as u64 + shape.nu2 as u64;
    let v_per_visit = 2u64;
    rep.push(
        "cycle matches table per-visit horizontal cost".into(),
        table.rows[1].near.c_h,
        h_per_visit,
    );
    rep.push(
        "cycle matches table per-visit vertical cost".into(),
        table.rows[1].far.c_v,
        v_per_visit,
    );

    let t = shape.transition;
    let h_top = if shape.k_refinements == 0 { shape.n_levels - 1 } else { t };
    for li in 1..=h_top {
        let expected = shape.visits[li] * h_per_visit + shape.alpha as u64
            - shape.n_vcycles as u64;
        rep.push(
            format!("level {li} horizontal phases"),
            expected,
            ledger.level_dir(li, Direction::Horizontal).phases,
        );
    }
    for li in 1..shape.n_levels {
        rep.push(
            format!("level {li} vertical phases"),
            1 + v_per_visit * shape.visits[li],
            ledger.level_dir(li, Direction::Vertical).phases,
        );
    }
    if shape.k_refinements > 0 {
        for li in (t + 1)..shape.n_levels {
            let h = ledger.level_dir(li, Direction::Horizontal);
            rep.push(format!("level {li} buffered horizontal phases"), 0, h.phases);
            rep.push(format!("level {li} buffered horizontal messages"), 0, h.messages);
        }
        rep.push(
            "far horizontal messages".into(),
            0,
            ledger.total(Direction::Horizontal, crate::dd::Distance::Far).messages,
        );
        for li in (t + 2)..shape.n_levels {
            rep.push(
                format!("level {li} vertical messages off the interface"),
                0,
                ledger.level_dir(li, Direction::Vertical).messages,
            );
        }
    }
    rep
}
