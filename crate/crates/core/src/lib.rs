//! Simulation and exact-law toolkit for the multi-block multiplicative
//! coalescent driven by Poisson tuple draws, with its branching-process
//! companions: total-progeny laws, exploration walks and the associated
//! coagulation equations.

pub mod bgw;
pub mod coag;
pub mod coalescent;
pub mod dist;
pub mod error;
pub mod exploration;
pub mod seed;

pub use bgw::{
    cramer_rate, dual_spec, extinction_prob, lattice_span, local_clt_error, simulate_progeny,
    survival_bounds, tilted_progeny_check, total_progeny_pmf, BGWSpec, Progeny, ProgenyPmf,
};
pub use coag::{
    closed_form_rho, gelation_diagnostics, integrate, kernel_kj, rhs, write_summary_csv,
    write_trajectory_csv, CoagState, GelationDiagnostics,
};
pub use coalescent::{
    finer_than_prob, merge_rate, restriction_factor, sample_tuple, simulate,
    singleton_count_pmf, Checkpoint, Partition, SimOptions, SimOutput, StopRule,
    TrajectoryObservables, TupleEvent, TupleEventLog,
};
pub use dist::{
    cpois_pmf_into, heavy_tail_example, parse_length_spec, poisson_sample, CompoundPoissonSpec,
    DiscreteCdf, LengthDistribution, LengthKind, PmfVector,
};
pub use error::{Error, Result};
pub use exploration::{dominating_walk, explore_block, neighbour_count, ExplorationTrace};
pub use seed::{derive_seed, rng_for, rng_from, Rng};
