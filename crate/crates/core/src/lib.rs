//! Nonlinear (mass-action) block and Glauber dynamics for the Ising model, with exact
//! small-n evolution, random-graph couplings, fragmentation processes and population samplers.

pub mod caps;
pub mod dense;
pub mod error;
pub mod evolution;
pub mod fields;
pub mod frag;
pub mod graph;
pub mod harness;
pub mod ising;
pub mod kac;
pub mod kernels;
pub mod spin;
pub mod stats;
pub mod tree;

pub use caps::Caps;
pub use dense::{relative_entropy, tv_distance, DenseDistribution};
pub use error::{Error, Result};
pub use evolution::{
    check_stationary, collide_dense, evolve, matched_gibbs, trajectory, Trajectory, TrajectoryStep,
};
pub use fields::solve_fields;
pub use frag::{
    estimate_extinction, phi_split, psi_split, run_coupon_noise, run_fragmentation,
    run_labeled_branching, ExtinctionOutcome, ProcessKind, ProcessSpec,
};
pub use graph::{
    closure, component_measure, coupled_chain_step, er_sample, ht_graph_distribution,
    reconstruct_gamma, star_sample, CoupledChain, CoupledState, GraphWeights, LabeledGraph,
};
pub use harness::{run_experiment, ExperimentConfig, ExperimentKind};
pub use ising::{
    dobrushin_norm, energy, gibbs_distribution, marginals, FieldVector, GibbsModel,
    InteractionMatrix, Model,
};
pub use kac::{kac_step, run_population, InitialLaw, Population};
pub use kernels::{
    alpha, audit_kernel, block_collide_pair, gamma_distribution, gamma_weight,
    glauber_collide_pair, kernel_matrix, sample_exchange_set, DynamicsKind, KernelAudit,
    KernelMatrix, TiltedInteraction,
};
pub use spin::{disagreement_set, ExchangeSet, SiteSet, SpinConfig};
pub use stats::{fit_exponential, trial_rng, ExpFit, Proportion};
pub use tree::{tree_sample_block, tree_sample_glauber_lazy, LazyGlauberTree, LazyRule};
