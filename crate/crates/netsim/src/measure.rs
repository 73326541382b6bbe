//! Per-request measurements collected by the event loop.

use blendcac_core::capability::Action;
use blendcac_core::enforcement::{Stage, StageTrace};
use blendcac_core::{Address, Micros};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Granted,
    Denied { stage: Stage, reason: String },
    /// Request or response leg was dropped; the requester gave up.
    TimedOut,
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Granted => "grant",
            Outcome::Denied { .. } => "deny",
            Outcome::TimedOut => "timeout",
        }
    }

    pub fn is_grant(&self) -> bool {
        matches!(self, Outcome::Granted)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Measurement {
    pub request_id: u64,
    pub label: String,
    pub requester: String,
    pub requester_vid: Address,
    pub provider: String,
    pub method: Action,
    pub uri: String,
    pub sent_at: Micros,
    /// Virtual ms at which the provider decided; `None` if the request
    /// never arrived.
    pub decided_at_ms: Option<u64>,
    pub total: Micros,
    pub trace: StageTrace,
    pub cache_hit: bool,
    pub block_height: u64,
    pub outcome: Outcome,
    pub access_control: bool,
}

impl Measurement {
    pub fn completed(&self) -> bool {
        !matches!(self.outcome, Outcome::TimedOut)
    }

    pub fn stage(&self) -> Option<Stage> {
        match &self.outcome {
            Outcome::Denied { stage, .. } => Some(*stage),
            _ => None,
        }
    }

    pub fn reason(&self) -> &str {
        match &self.outcome {
            Outcome::Denied { reason, .. } => reason,
            _ => "",
        }
    }
}
