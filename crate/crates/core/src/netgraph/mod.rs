//! Network topologies, doubly-stochastic weights and spectral diagnostics.

mod topology;
mod weights;

pub use topology::{gen_complete, gen_erdos_renyi, gen_ring, gen_star, Topology, ER_MAX_ATTEMPTS};
pub use weights::{metropolis_weights, mixing_time, slem, WeightMatrix, MIXING_CAP};
