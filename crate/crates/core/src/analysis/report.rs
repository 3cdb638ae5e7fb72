use serde::Serialize;

use super::{AnalysisMode, Unschedulable};
use crate::config::{FlowClassKind, PreemptionConfig};
use crate::network::{FlowId, LinkId};
use crate::time::Duration;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HopReport {
    pub port: String,
    #[serde(skip)]
    pub link: LinkId,
    /// Release jitter of the flow on arrival at this port.
    pub jitter: Option<Duration>,
    pub bound: Option<Duration>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub critical_q: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<Unschedulable>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Schedulable,
    Unschedulable {
        #[serde(skip_serializing_if = "Option::is_none")]
        port: Option<String>,
        reason: Unschedulable,
    },
}

impl Verdict {
    pub fn is_schedulable(&self) -> bool {
        matches!(self, Verdict::Schedulable)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowReport {
    pub flow: FlowId,
    pub priority: u8,
    pub class: u8,
    pub kind: FlowClassKind,
    pub deadline: Duration,
    pub hops: Vec<HopReport>,
    /// End-to-end bound, when every hop has one.
    pub total: Option<Duration>,
    /// Deadline minus bound; negative when the deadline is missed.
    pub slack: Option<Duration>,
    #[serde(flatten)]
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WcttReport {
    pub schema_version: u32,
    pub mode: AnalysisMode,
    pub config: PreemptionConfig,
    /// Jitter-propagation rounds until the bounds settled.
    pub rounds: usize,
    pub schedulable: bool,
    pub flows: Vec<FlowReport>,
}

impl WcttReport {
    pub fn flow(&self, id: &str) -> Option<&FlowReport> {
        self.flows.iter().find(|f| f.flow.0 == id)
    }

    pub fn schedulable_count(&self) -> usize {
        self.flows.iter().filter(|f| f.verdict.is_schedulable()).count()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per flow: id, per-hop bounds in us joined by `;`, total,
    /// deadline, slack and verdict. Missing bounds print as `inf`.
    pub fn to_csv(&self) -> String {
        let fmt = |d: &Option<Duration>| d.map(|v| v.to_string()).unwrap_or_else(|| "inf".into());
        let mut out = String::from("flow,hops_us,total_us,deadline_us,slack_us,verdict\n");
        for f in &self.flows {
            let hops: Vec<String> = f.hops.iter().map(|h| fmt(&h.bound)).collect();
            let verdict = match &f.verdict {
                Verdict::Schedulable => "schedulable".to_string(),
                Verdict::Unschedulable { reason, .. } => {
                    let v = serde_json::to_value(reason).expect("reason serializes");
                    format!("unschedulable:{}", v["kind"].as_str().unwrap_or("unknown"))
                }
            };
            let slack = f.slack.map(|s| s.to_string()).unwrap_or_else(|| "-inf".into());
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                f.flow,
                hops.join(";"),
                fmt(&f.total),
                f.deadline,
                slack,
                verdict
            ));
        }
        out
    }
}
