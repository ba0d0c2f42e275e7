//! Structure of finite sections: local coherences, the balancing property
//! and the Gram root `G`, G-adjusted restricted isometry constants in
//! levels, weighted level norms and the recovery-bound evaluators.

mod balancing;
mod coherence;
mod gripl;
mod weights;

pub use balancing::{balancing, balancing_scan, gram_root, GramRoot, ThetaScan};
pub use coherence::{local_coherence, CoherenceTable};
pub use gripl::{
    gripl_bruteforce, gripl_probe, restricted_norm, SupportFamily, DEFAULT_ENUMERATION_CAP,
};
pub use weights::{
    best_sm_error, error_bounds, recommended_weights, t_levels, weighted_norm, ErrorBounds,
    Weights, ERROR_C, ERROR_D,
};
