//! Geometric multigrid on the 3D cell-centered Poisson problem, built to study
//! the communication structure of full-multigrid solvers under two simulated
//! distributed-memory data models: conventional halo-exchange domain
//! decomposition, and segmental refinement (fine levels computed redundantly
//! inside per-rank buffer regions with no fine-level halo exchange).
//!
//! Everything runs in one process: "ranks" are simulated, every inter-rank
//! copy is routed through an instrumented exchange engine, and a ledger
//! records messages, phases, and payload volumes per level.

pub mod commmodel;
pub mod dd;
pub mod grid;
pub mod mg;
pub mod poisson;
pub mod smooth;
pub mod sr;
pub mod transfer;
