//! Finite-horizon multi-agent decision processes: outcome and value
//! computation, representational equivalence of behavior profiles,
//! representativity of substitute policies, and a discretized
//! consensus-finding environment.

pub mod consensus;
pub mod equivalence;
pub mod error;
pub mod instances;
pub mod io;
pub mod mechanism;
pub mod payoff;
pub mod policy;
pub mod representativity;
pub mod rollout;
pub mod seed;
pub mod spaces;
pub mod validate;
pub mod value;

/// Tolerance for probability rows summing to one.
pub const NORM_TOL: f64 = 1e-9;

pub use error::{Error, Result};
pub use mechanism::{Mechanism, MechanismFamily};
pub use payoff::PayoffTable;
pub use policy::{joint_action_distribution, marginalize_to_star, Policy, PolicyProfile};
pub use spaces::{Factorization, FactorizationDef, FiniteSpaces, TypeProfile};
pub use validate::{Location, Violation};
pub use value::{QFamily, QFunction};
