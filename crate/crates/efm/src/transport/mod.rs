//! Optimal transport machinery: exact assignment couplings, k-means
//! clustering, entropic multi-marginal Sinkhorn, and the cluster-factorized
//! joint coupling used by training.

pub mod assignment;
pub mod coupling;
pub mod kmeans;
pub mod plan;
pub mod sinkhorn;

pub use assignment::{exact_ot_plan, min_cost_assignment, uniform_transport_cost};
pub use coupling::{
    cluster_mmot_plan, ggc_couple, mmot_dirichlet_cost, ClusterMmotSampler, MmotParams,
    TupleSampler,
};
pub use kmeans::{kmeans, ClusterSet};
pub use plan::CouplingPlan;
pub use sinkhorn::{
    extract_deterministic, mmot_sinkhorn, scale_free_epsilon, CostTensor, SinkhornResult,
    ENTRY_CAP, SIDE_CAP,
};
