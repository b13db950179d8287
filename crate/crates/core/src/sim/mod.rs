//! Deterministic discrete-event simulation of one source spraying a message
//! over several paths.
//!
//! Time is in integer microseconds. The sender emits at the aggregate rate
//! of the paths in use; each packet is assigned a path by the spray counter
//! and joins that path's FIFO transmit queue. Queues serialize at the path
//! bandwidth, mark ECN above a depth threshold and tail-drop when full;
//! packets then cross the path latency, subject to its loss pattern. The
//! destination returns a feedback record per arrival, which can drive
//! profile adaptation. Events at equal times run in insertion order.

mod config;
mod destination;
mod engine;
mod report;

pub use config::{
    sender_send_rate, AdaptConfig, AdaptMode, Completion, LossPattern, MessageSpec, PathSpec,
    ProfileSchedule, ScheduleSegment, SendRate, SimConfig, SimError, SprayConfig,
};
pub use destination::{destination_feedback, Arrival, Destination, FeedbackRecord, PacketHeader};
pub use engine::{run_sim, run_sim_traced};
pub use report::{
    trace_csv, AdaptAction, AdaptEvent, ChangeCause, CompletionReport, PathStats, ProfileChange,
    Status, TraceEvent, TraceKind,
};
