//! Tabular MDP toolkit for studying fairness constraints in reinforcement
//! learning: exact planning, fairness audits of learner traces, lower-bound
//! chain instances, known-state estimation and the Fair-E3 learner.

// Parameter checks are written as `!(x > 0.0)` so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod chain;
pub mod error;
pub mod estimation;
pub mod fair_e3;
pub mod fairness;
pub mod induced;
pub mod markov;
pub mod mdp;
pub mod planning;
pub mod policy;
pub mod sim;

pub use error::{Error, Result};
pub use mdp::{Mdp, RewardDist};
pub use planning::{QTable, ValueTable};
pub use policy::{Learner, StochasticPolicy, Transition};
pub use sim::Trace;
