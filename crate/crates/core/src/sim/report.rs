use std::fmt::Write as _;

use serde::Serialize;

use super::destination::FeedbackRecord;
use crate::spray::SeedRotation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Completed,
    /// The horizon passed, or nothing was left to happen, before enough
    /// distinct packets arrived.
    Timeout,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PathStats {
    pub sent: u64,
    pub delivered: u64,
    /// Tail drops at a full transmit queue.
    pub dropped_queue: u64,
    /// Losses from the path's loss pattern.
    pub dropped_loss: u64,
    /// Still on the wire when the run ended.
    pub in_flight: u64,
    pub ecn_marked: u64,
    /// Deepest queue seen right after an enqueue.
    pub max_queue_depth: u64,
}

impl PathStats {
    pub fn dropped(&self) -> u64 {
        self.dropped_queue + self.dropped_loss
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeCause {
    Initial,
    Schedule,
    Adapt,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProfileChange {
    pub time_us: u64,
    pub cause: ChangeCause,
    pub counts: Vec<u64>,
    /// Aggregate emission rate from this point on.
    pub send_rate_bps: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdaptAction {
    Whacked {
        paths: Vec<usize>,
    },
    Rebalanced {
        removal: Vec<u64>,
        objective_before: String,
        objective_after: String,
    },
    NoImprovement,
}

/// One adaptation window in which some path drew a positive factor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AdaptEvent {
    pub time_us: u64,
    /// Per-path factors as `p/q` strings.
    pub alphas: Vec<String>,
    pub action: AdaptAction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CompletionReport {
    pub status: Status,
    pub completion_time_us: Option<u64>,
    /// Time of the last processed event.
    pub end_time_us: u64,
    pub packets_emitted: u64,
    pub distinct_delivered: u64,
    /// Latest arrival among the packets counted towards completion.
    pub max_needed_latency_us: u64,
    pub per_path: Vec<PathStats>,
    pub final_profile: Vec<u64>,
    pub profile_history: Vec<ProfileChange>,
    pub adaptations: Vec<AdaptEvent>,
    pub seed_rotations: Vec<SeedRotation>,
    pub feedback: Vec<FeedbackRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    Send,
    DropQueue,
    DropLoss,
    Deliver,
}

impl TraceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceKind::Send => "send",
            TraceKind::DropQueue => "drop_queue",
            TraceKind::DropLoss => "drop_loss",
            TraceKind::Deliver => "deliver",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TraceEvent {
    pub time_us: u64,
    pub event: TraceKind,
    pub path: usize,
    pub path_seq: u64,
    pub flow_seq: u64,
    pub ecn: bool,
}

/// Renders `time,event,path,path_seq,flow_seq,ecn` with a header line.
pub fn trace_csv(trace: &[TraceEvent]) -> String {
    let mut out = String::from("time,event,path,path_seq,flow_seq,ecn\n");
    for e in trace {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            e.time_us,
            e.event.as_str(),
            e.path,
            e.path_seq,
            e.flow_seq,
            u8::from(e.ecn)
        )
        .expect("writing to a String");
    }
    out
}
