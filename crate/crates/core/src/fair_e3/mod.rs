//! The Fair-E3 learner, contrast baselines and the end-to-end driver.

mod baselines;
mod config;
mod learner;
mod run;

pub use baselines::{baseline_greedy_e3, baseline_uniform, GreedyE3};
pub use config::{EscapeMode, EstimateSource, FairE3Config};
pub use learner::{FairE3, LearnerCounters, Phase, PhaseKind};
pub use run::{run_fair_e3, AuditSummary, RunMetrics, RunOutput};
