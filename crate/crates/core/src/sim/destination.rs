use std::collections::BTreeSet;

use serde::Serialize;

/// Header carried by every simulated packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PacketHeader {
    pub path_id: usize,
    /// Per-path sequence number, contiguous at the sender.
    pub path_seq: u64,
    /// Spray counter value.
    pub flow_seq: u64,
    pub ecn: bool,
}

/// A packet as seen by the destination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Arrival {
    pub sent_us: u64,
    pub arrived_us: u64,
    pub header: PacketHeader,
}

/// Destination report for one arrival, as received back at the source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FeedbackRecord {
    /// When the source receives the record.
    pub time_us: u64,
    pub path_id: usize,
    pub path_seq: u64,
    pub flow_seq: u64,
    pub ecn: bool,
    /// Send to feedback receipt.
    pub rtt_us: u64,
    /// Per-path sequence numbers first found missing by this arrival.
    pub gaps: Vec<u64>,
}

/// Per-path gap tracking at the destination.
#[derive(Debug, Clone, Default)]
pub struct Destination {
    next_expected: Vec<u64>,
    missing: Vec<BTreeSet<u64>>,
}

impl Destination {
    pub fn new(n: usize) -> Self {
        Self {
            next_expected: vec![0; n],
            missing: vec![BTreeSet::new(); n],
        }
    }

    /// Registers an arrival and returns the sequence numbers below it that
    /// had not been seen and were not already reported.
    pub fn receive(&mut self, header: &PacketHeader) -> Vec<u64> {
        let p = header.path_id;
        let s = header.path_seq;
        if s < self.next_expected[p] {
            // late arrival of something reported missing
            self.missing[p].remove(&s);
            return Vec::new();
        }
        let gaps: Vec<u64> = (self.next_expected[p]..s).collect();
        self.missing[p].extend(gaps.iter().copied());
        self.next_expected[p] = s + 1;
        gaps
    }

    /// Sequence numbers on `path` still missing below the highest seen.
    pub fn missing(&self, path: usize) -> impl Iterator<Item = u64> + '_ {
        self.missing[path].iter().copied()
    }
}

/// Feedback for a batch of arrivals, each returned after its path's delay.
/// Arrivals are processed in the given order.
pub fn destination_feedback(
    arrivals: &[Arrival],
    feedback_delay_us: &[u64],
) -> Vec<FeedbackRecord> {
    let n = feedback_delay_us.len();
    let mut dest = Destination::new(n);
    arrivals
        .iter()
        .map(|a| {
            let h = a.header;
            let delay = feedback_delay_us[h.path_id];
            FeedbackRecord {
                time_us: a.arrived_us + delay,
                path_id: h.path_id,
                path_seq: h.path_seq,
                flow_seq: h.flow_seq,
                ecn: h.ecn,
                rtt_us: a.arrived_us - a.sent_us + delay,
                gaps: dest.receive(&h),
            }
        })
        .collect()
}
