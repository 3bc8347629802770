//! Exact evolution of the joint state through the conserved-M block
//! decomposition, a brute-force ODE oracle, and the fused per-cycle maps
//! used to run millions of cycles.

mod cycle;
mod oracle;
mod propagator;
mod state;

pub use cycle::{CycleMap, DenseMap};
pub use oracle::{ode_oracle, oracle_steps, ORACLE_MAX_BINS, ORACLE_MIN_STEPS};
pub use propagator::{build_propagator, evolve, evolve_in_place, BlockKernel, Duration, Propagator};
pub use state::JointState;
