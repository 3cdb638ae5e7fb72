//! Compositional worst-case traversal time analysis.

mod global;
mod local;
mod report;

use serde::{Deserialize, Serialize};

use crate::time::Duration;

pub use global::{analyze, is_schedulable, wctt_end_to_end, Analyzer};
pub use local::{
    busy_period, higher_priority_interference, lower_priority_blocking, preemption_count, preemption_overhead,
    queuing_delay, same_priority_blocking, wctt_local, Contender, LocalBound, PortAnalysisContext, QueuingDelay,
    Unschedulable,
};
pub use report::{FlowReport, HopReport, Verdict, WcttReport, SCHEMA_VERSION};

/// Which arrival scenarios and preemption counts the local analysis uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalysisMode {
    /// Counts every preemption a flow's own frames can suffer and examines all
    /// arrival instants of a frame within its busy period.
    #[default]
    Sound,
    /// Earliest-arrival scenario only, with one fewer own preemption per window.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnalysisOptions {
    pub mode: AnalysisMode,
    /// Constant forwarding delay added at every switch a frame crosses.
    pub switch_delay: Duration,
    /// Stop a flow's analysis as soon as its bound passes its deadline.
    pub abort_on_deadline: bool,
    pub iteration_cap: u64,
    pub instance_cap: u64,
    pub round_cap: usize,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            mode: AnalysisMode::Sound,
            switch_delay: Duration::ZERO,
            abort_on_deadline: true,
            iteration_cap: 1_000_000,
            instance_cap: 10_000,
            round_cap: 1_000,
        }
    }
}

impl AnalysisOptions {
    /// Options that keep going past deadlines so every finite bound is reported.
    pub fn exhaustive() -> Self {
        AnalysisOptions { abort_on_deadline: false, ..Self::default() }
    }
}
