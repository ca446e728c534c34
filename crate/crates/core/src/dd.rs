//! Simulated distributed-memory decomposition and communication accounting.
//!
//! The solver runs every "rank" of a structured process grid inside one
//! address space, but all data motion between ranks goes through an explicit
//! exchange that copies owned values into neighbor ghost cells and records
//! each message in a ledger. Phases (bulk-synchronous communication rounds)
//! and messages are counted separately so that phase counts are independent
//! of how many ranks are active.
//!
//! Level layout: level 0 is the 2×1×1 coarsest grid on one rank; each finer
//! level doubles the global grid. Coarsening halves the active rank count in
//! a dimension whenever the per-rank extent would otherwise drop below 2, so
//! per-rank boxes stay uniform and at least 2 cells wide wherever more than
//! one rank is active.

use crate::grid::{Box3, Field, Idx};
use crate::poisson::fill_bc_ghosts;
use std::collections::BTreeMap;

/// One incoming ghost message: `dest`'s ghost cells in `bx` receive `src`'s
/// owned values. Indices are linear active-slot ids at the level.
#[derive(Clone, Copy, Debug)]
pub struct ExchangeMsg {
    pub dest: usize,
    pub src: usize,
    pub bx: Box3,
}

#[derive(Clone, Debug)]
pub struct LevelSpec {
    pub index: usize,
    pub global: Box3,
    pub h: f64,
    /// Active ranks per dimension (powers of two).
    pub active: [i64; 3],
    /// Uniform per-rank extents (`global / active`).
    pub per_rank: [i64; 3],
    /// Owned box per linear slot, x-fastest slot order.
    pub owned: Vec<Box3>,
    /// All ghost messages for one exchange phase at this level.
    pub neighbor_pairs: Vec<ExchangeMsg>,
}

impl LevelSpec {
    pub fn n_ranks(&self) -> usize {
        (self.active[0] * self.active[1] * self.active[2]) as usize
    }

    pub fn slot_of(&self, lin: usize) -> [i64; 3] {
        let l = lin as i64;
        let s1 = l % self.active[0];
        let s2 = (l / self.active[0]) % self.active[1];
        let s3 = l / (self.active[0] * self.active[1]);
        [s1, s2, s3]
    }

    pub fn lin_of(&self, slot: [i64; 3]) -> usize {
        (slot[0] + self.active[0] * (slot[1] + self.active[1] * slot[2])) as usize
    }

    /// Linear slot owning global cell `i`.
    pub fn owner_of(&self, i: Idx) -> usize {
        let mut slot = [0i64; 3];
        for d in 0..3 {
            slot[d] = i[d].div_euclid(self.per_rank[d]);
            debug_assert!(slot[d] >= 0 && slot[d] < self.active[d], "cell outside domain");
        }
        self.lin_of(slot)
    }

    /// Physical rank (on the full process grid `p`) that an active slot maps
    /// to: stride placement, so slot 0 is always physical rank 0.
    pub fn phys_of(&self, lin: usize, p: [i64; 3]) -> usize {
        let s = self.slot_of(lin);
        let mut c = [0i64; 3];
        for d in 0..3 {
            c[d] = s[d] * (p[d] / self.active[d]);
        }
        (c[0] + p[0] * (c[1] + p[1] * c[2])) as usize
    }
}

#[derive(Clone, Debug)]
pub struct Hierarchy {
    /// Process grid (powers of two per dimension).
    pub p: [i64; 3],
    /// Levels from coarsest (index 0, global 2×1×1, one rank) to finest.
    pub levels: Vec<LevelSpec>,
}

impl Hierarchy {
    /// Build all levels for the `(2n, n, n)`-cell fine grid on domain
    /// `(2,1,1)`, so `h = 1/n` isotropic at the top and the coarsest level
    /// is always the 2×1×1 grid on a single rank.
    pub fn build(p: [i64; 3], n_fine_y: i64) -> Hierarchy {
        assert!(n_fine_y >= 1 && n_fine_y.count_ones() == 1, "fine y-extent must be a power of 2");
        for d in 0..3 {
            assert!(p[d] >= 1 && p[d].count_ones() == 1, "process counts must be powers of 2");
        }
        let fine = [2 * n_fine_y, n_fine_y, n_fine_y];
        for d in 0..3 {
            assert!(p[d] <= fine[d], "more ranks than cells in dimension {d}");
        }
        let n_levels = (n_fine_y.trailing_zeros() + 1) as usize;
        // Walk fine → coarse to fix active sets, then store coarse → fine.
        let mut specs: Vec<(Idx, [i64; 3])> = Vec::with_capacity(n_levels);
        let mut g = fine;
        let mut a = p;
        for _ in 0..n_levels {
            specs.push((g, a));
            for d in 0..3 {
                let gc = (g[d] / 2).max(1);
                if gc / a[d] < 2 {
                    a[d] = (a[d] / 2).max(1);
                }
                g[d] = gc;
            }
        }
        specs.reverse();
        assert_eq!(specs[0].0, [2, 1, 1]);
        assert_eq!(specs[0].1, [1, 1, 1]);
        let levels = specs
            .iter()
            .enumerate()
            .map(|(index, &(g, a))| build_level(index, g, a))
            .collect();
        Hierarchy { p, levels }
    }

    /// Fine-grid y-extent that puts `pn0v` cells per rank (per dimension with
    /// unit domain extent) on the level `k_refinements` below the finest.
    pub fn fine_y_for(p: [i64; 3], pn0v: i64, k_refinements: u32) -> i64 {
        pn0v * p[1] * (1i64 << k_refinements)
    }

    pub fn finest(&self) -> &LevelSpec {
        self.levels.last().unwrap()
    }

    /// Level index sitting `k_refinements` below the finest.
    pub fn transition_index(&self, k_refinements: u32) -> usize {
        self.levels.len() - 1 - k_refinements as usize
    }
}

fn build_level(index: usize, g: Idx, a: [i64; 3]) -> LevelSpec {
    let per_rank = [g[0] / a[0], g[1] / a[1], g[2] / a[2]];
    for d in 0..3 {
        assert_eq!(per_rank[d] * a[d], g[d], "nonuniform decomposition");
    }
    let h = 1.0 / g[1] as f64;
    let n_ranks = (a[0] * a[1] * a[2]) as usize;
    let mut owned = Vec::with_capacity(n_ranks);
    for lin in 0..n_ranks {
        let l = lin as i64;
        let s = [l % a[0], (l / a[0]) % a[1], l / (a[0] * a[1])];
        let lo = [s[0] * per_rank[0], s[1] * per_rank[1], s[2] * per_rank[2]];
        owned.push(Box3::new(lo, [
            lo[0] + per_rank[0] - 1,
            lo[1] + per_rank[1] - 1,
            lo[2] + per_rank[2] - 1,
        ]));
    }
    let mut neighbor_pairs = Vec::new();
    for dest in 0..n_ranks {
        let l = dest as i64;
        let s = [l % a[0], (l / a[0]) % a[1], l / (a[0] * a[1])];
        let halo = owned[dest].grow(1);
        for o3 in -1i64..=1 {
            for o2 in -1i64..=1 {
                for o1 in -1i64..=1 {
                    if o1 == 0 && o2 == 0 && o3 == 0 {
                        continue;
                    }
                    let t = [s[0] + o1, s[1] + o2, s[2] + o3];
                    if (0..3).any(|d| t[d] < 0 || t[d] >= a[d]) {
                        continue;
                    }
                    let src = (t[0] + a[0] * (t[1] + a[1] * t[2])) as usize;
                    let bx = halo.intersect(&owned[src]);
                    debug_assert!(!bx.is_empty());
                    neighbor_pairs.push(ExchangeMsg { dest, src, bx });
                }
            }
        }
    }
    LevelSpec { index, global: Box3::from_extents(g), h, active: a, per_rank, owned, neighbor_pairs }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Direction {
    Horizontal,
    Vertical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Distance {
    Near,
    Far,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counts {
    pub phases: u64,
    pub messages: u64,
    pub cells: u64,
}

/// Communication ledger: phase / message / cell counters keyed by
/// `(level, direction, distance)`, plus per-rank received-message tallies for
/// horizontal exchanges. Muting suspends recording (used around diagnostics
/// that would otherwise perturb the counts).
#[derive(Clone, Debug, Default)]
pub struct CommLedger {
    muted: bool,
    counts: BTreeMap<(usize, Direction, Distance), Counts>,
    per_rank_h: BTreeMap<(usize, usize), u64>,
}

impl CommLedger {
    pub fn new() -> CommLedger {
        CommLedger::default()
    }

    pub fn set_muted(&mut self, m: bool) {
        self.muted = m;
    }

    pub fn is_muted(&self) -> bool {
        self.muted
    }

    pub fn reset(&mut self) {
        self.counts.clear();
        self.per_rank_h.clear();
    }

    pub fn record_phase(&mut self, level: usize, dir: Direction, dist: Distance) {
        if self.muted {
            return;
        }
        self.counts.entry((level, dir, dist)).or_default().phases += 1;
    }

    pub fn record_message(
        &mut self,
        level: usize,
        dir: Direction,
        dist: Distance,
        dest_rank: usize,
        cells: u64,
    ) {
        if self.muted {
            return;
        }
        let c = self.counts.entry((level, dir, dist)).or_default();
        c.messages += 1;
        c.cells += cells;
        if dir == Direction::Horizontal {
            *self.per_rank_h.entry((level, dest_rank)).or_default() += 1;
        }
    }

    pub fn get(&self, level: usize, dir: Direction, dist: Distance) -> Counts {
        self.counts.get(&(level, dir, dist)).copied().unwrap_or_default()
    }

    /// Aggregate over both distance classes.
    pub fn level_dir(&self, level: usize, dir: Direction) -> Counts {
        let mut t = Counts::default();
        for dist in [Distance::Near, Distance::Far] {
            let c = self.get(level, dir, dist);
            t.phases += c.phases;
            t.messages += c.messages;
            t.cells += c.cells;
        }
        t
    }

    /// Aggregate over all levels for one (direction, distance) class.
    pub fn total(&self, dir: Direction, dist: Distance) -> Counts {
        let mut t = Counts::default();
        for (&(_, d, ds), c) in &self.counts {
            if d == dir && ds == dist {
                t.phases += c.phases;
                t.messages += c.messages;
                t.cells += c.cells;
            }
        }
        t
    }

    /// Horizontal messages received by one rank at one level.
    pub fn h_messages_rank(&self, level: usize, rank: usize) -> u64 {
        self.per_rank_h.get(&(level, rank)).copied().unwrap_or(0)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&(usize, Direction, Distance), &Counts)> {
        self.counts.iter()
    }

    /// `level,direction,distance,phases,messages,cells` rows, sorted.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("level,direction,distance,phases,messages,cells\n");
        for (&(lvl, dir, dist), c) in &self.counts {
            let d = match dir {
                Direction::Horizontal => "horizontal",
                Direction::Vertical => "vertical",
            };
            let ds = match dist {
                Distance::Near => "near",
                Distance::Far => "far",
            };
            s.push_str(&format!("{lvl},{d},{ds},{},{},{}\n", c.phases, c.messages, c.cells));
        }
        s
    }
}

/// Run one horizontal exchange phase at a level — every rank's ghost cells
/// that overlap a neighbor's owned box receive that neighbor's current
/// values — then apply the wall mirror fill everywhere, so corner ghosts
/// mirror freshly exchanged values. Records one phase plus one message per
/// neighbor pair.
pub fn exchange_and_fill(
    lvl: &LevelSpec,
    us: &mut [Field],
    ledger: &mut CommLedger,
    dist: Distance,
) {
    assert_eq!(us.len(), lvl.n_ranks());
    ledger.record_phase(lvl.index, Direction::Horizontal, dist);
    let mut buf = Vec::new();
    for m in &lvl.neighbor_pairs {
        buf.clear();
        for i in m.bx.iter() {
            buf.push(us[m.src].get(i));
        }
        let dst = &mut us[m.dest];
        for (i, v) in m.bx.iter().zip(buf.iter()) {
            dst.set(i, *v);
        }
        ledger.record_message(
            lvl.index,
            Direction::Horizontal,
            dist,
            m.dest,
            m.bx.volume() as u64,
        );
    }
    for u in us.iter_mut() {
        fill_bc_ghosts(u, &lvl.global);
    }
}

/// Wall mirror fill only, no exchange, no accounting (single-rank levels and
/// buffered regions that run without neighbor communication).
pub fn bc_fill_only(lvl: &LevelSpec, us: &mut [Field]) {
    for u in us.iter_mut() {
        fill_bc_ghosts(u, &lvl.global);
    }
}
