use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{
    sender_send_rate, AdaptConfig, AdaptMode, LossPattern, PathSpec, SimConfig, SimError,
};
use super::destination::{Destination, FeedbackRecord, PacketHeader};
use super::report::{
    AdaptAction, AdaptEvent, ChangeCause, CompletionReport, PathStats, ProfileChange, Status,
    TraceEvent, TraceKind,
};
use crate::adapt::{self, PathFeedback, Rebalance, SeverityWeights};
use crate::profile::PathProfile;
use crate::rational::{format_rational, Rational};
use crate::spray::SprayState;
use crate::update::ResidualCursor;

/// Runs `config` to completion or timeout.
pub fn run_sim(config: &SimConfig) -> Result<CompletionReport, SimError> {
    Engine::new(config, false)?.run()
}

/// [`run_sim`] that also returns the per-packet trace.
pub fn run_sim_traced(config: &SimConfig) -> Result<(CompletionReport, Vec<TraceEvent>), SimError> {
    Ok(Engine::new(config, true)?.run_with())
}

#[derive(Debug)]
enum EventKind {
    /// Emission slot; stale when `generation` no longer matches.
    Emit {
        generation: u64,
    },
    Arrive {
        header: PacketHeader,
        sent_us: u64,
        packet: u64,
    },
    Feedback(FeedbackRecord),
    Switch {
        segment: usize,
    },
    AdaptTick,
}

#[derive(Debug)]
struct Event {
    time: u64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.time, self.seq).cmp(&(other.time, other.seq))
    }
}

enum Loss {
    None,
    List(HashSet<u64>),
    Rate {
        numer: u128,
        denom: u128,
        rng: Box<ChaCha8Rng>,
    },
}

impl Loss {
    fn new(pattern: &LossPattern) -> Self {
        match pattern {
            LossPattern::None => Loss::None,
            LossPattern::DropList { path_seqs } => Loss::List(path_seqs.iter().copied().collect()),
            LossPattern::Rate { rate, seed } => Loss::Rate {
                numer: *rate.numer() as u128,
                denom: *rate.denom() as u128,
                rng: Box::new(ChaCha8Rng::seed_from_u64(*seed)),
            },
        }
    }

    fn drops(&mut self, path_seq: u64) -> bool {
        match self {
            Loss::None => false,
            Loss::List(seqs) => seqs.contains(&path_seq),
            Loss::Rate { numer, denom, rng } => rng.gen_range(0..*denom) < *numer,
        }
    }
}

struct Link {
    spec: PathSpec,
    serialization_us: u64,
    free_at: u64,
    /// Serialization finish times of queued packets, oldest first.
    queue: VecDeque<u64>,
    loss: Loss,
}

impl Link {
    fn depth_at(&mut self, t: u64) -> u64 {
        while self.queue.front().is_some_and(|&f| f <= t) {
            self.queue.pop_front();
        }
        self.queue.len() as u64
    }
}

struct Engine<'a> {
    config: &'a SimConfig,
    bits: u64,
    budget: u64,
    required: u64,

    events: BinaryHeap<Reverse<Event>>,
    next_seq: u64,
    now: u64,

    profile: PathProfile,
    spray: SprayState,
    cursor: ResidualCursor,
    rate_bps: u64,
    anchor: u64,
    since_anchor: u64,
    generation: u64,
    last_emit: Option<u64>,
    emitted: u64,

    links: Vec<Link>,
    destination: Destination,
    delivered_ids: HashSet<u64>,
    max_needed_latency: u64,
    window: Option<PathFeedback>,

    stats: Vec<PathStats>,
    history: Vec<ProfileChange>,
    adaptations: Vec<AdaptEvent>,
    feedback: Vec<FeedbackRecord>,
    tracing: bool,
    trace: Vec<TraceEvent>,
}

impl<'a> Engine<'a> {
    fn new(config: &'a SimConfig, tracing: bool) -> Result<Self, SimError> {
        let ell = config.validate()?;
        let profile = config.schedule.segments[0].profile.clone();
        let spray = config.spray.build(ell)?;
        let n = config.paths.len();
        let bits = config.message.packet_payload_bits;
        let links = config
            .paths
            .iter()
            .map(|spec| Link {
                spec: spec.clone(),
                serialization_us: spec.serialization_us(bits),
                free_at: 0,
                queue: VecDeque::new(),
                loss: Loss::new(&spec.loss),
            })
            .collect();
        let mut engine = Self {
            config,
            bits,
            budget: config.message.budget(),
            required: config.message.required(),
            events: BinaryHeap::new(),
            next_seq: 0,
            now: 0,
            rate_bps: sender_send_rate(&config.paths, &profile, config.send_rate),
            profile,
            spray,
            cursor: ResidualCursor::new(),
            anchor: 0,
            since_anchor: 0,
            generation: 0,
            last_emit: None,
            emitted: 0,
            links,
            destination: Destination::new(n),
            delivered_ids: HashSet::new(),
            max_needed_latency: 0,
            window: config
                .adapt
                .as_ref()
                .map(|a| PathFeedback::new(n, a.window_us)),
            stats: vec![PathStats::default(); n],
            history: Vec::new(),
            adaptations: Vec::new(),
            feedback: Vec::new(),
            tracing,
            trace: Vec::new(),
        };
        engine.record_change(ChangeCause::Initial);
        for (segment, seg) in config.schedule.segments.iter().enumerate().skip(1) {
            engine.push(seg.start_us, EventKind::Switch { segment });
        }
        if let Some(adapt) = &config.adapt {
            engine.push(adapt.window_us, EventKind::AdaptTick);
        }
        engine.push(0, EventKind::Emit { generation: 0 });
        Ok(engine)
    }

    fn push(&mut self, time: u64, kind: EventKind) {
        self.events.push(Reverse(Event {
            time,
            seq: self.next_seq,
            kind,
        }));
        self.next_seq += 1;
    }

    fn run(self) -> Result<CompletionReport, SimError> {
        Ok(self.run_with().0)
    }

    fn run_with(mut self) -> (CompletionReport, Vec<TraceEvent>) {
        let mut completion = None;
        while let Some(Reverse(event)) = self.events.pop() {
            if event.time > self.config.horizon_us {
                self.events.push(Reverse(event));
                break;
            }
            self.now = event.time;
            match event.kind {
                EventKind::Emit { generation } if generation == self.generation => self.emit(),
                EventKind::Emit { .. } => {}
                EventKind::Arrive {
                    header,
                    sent_us,
                    packet,
                } => {
                    if self.arrive(header, sent_us, packet) {
                        completion = Some(self.now);
                        break;
                    }
                }
                EventKind::Feedback(record) => self.on_feedback(record),
                EventKind::Switch { segment } => {
                    self.profile = self.config.schedule.segments[segment].profile.clone();
                    self.profile_changed(ChangeCause::Schedule);
                }
                EventKind::AdaptTick => self.adapt_tick(),
            }
        }

        for Reverse(event) in self.events.iter() {
            if let EventKind::Arrive { header, .. } = &event.kind {
                self.stats[header.path_id].in_flight += 1;
            }
        }
        let report = CompletionReport {
            status: if completion.is_some() {
                Status::Completed
            } else {
                Status::Timeout
            },
            completion_time_us: completion,
            end_time_us: self.now,
            packets_emitted: self.emitted,
            distinct_delivered: self.delivered_ids.len() as u64,
            max_needed_latency_us: self.max_needed_latency,
            per_path: self.stats,
            final_profile: self.profile.counts().to_vec(),
            profile_history: self.history,
            adaptations: self.adaptations,
            seed_rotations: self.spray.rotations().to_vec(),
            feedback: self.feedback,
        };
        (report, self.trace)
    }

    fn emission_time(&self, k: u64) -> u64 {
        self.anchor + (k as u128 * self.bits as u128 * 1_000_000 / self.rate_bps as u128) as u64
    }

    fn emit(&mut self) {
        if self.emitted >= self.budget {
            return;
        }
        let t = self.now;
        let decision = self
            .spray
            .next_path(&self.profile)
            .expect("schedule profiles match the counter width");
        let packet = self.emitted;
        self.emitted += 1;
        self.last_emit = Some(t);

        let path = decision.path;
        let link = &mut self.links[path];
        let stats = &mut self.stats[path];
        stats.sent += 1;
        let depth = link.depth_at(t);
        let mut header = PacketHeader {
            path_id: path,
            path_seq: decision.path_seq,
            flow_seq: decision.flow_seq,
            ecn: false,
        };
        let outcome = if depth >= link.spec.queue_capacity {
            stats.dropped_queue += 1;
            Some(TraceKind::DropQueue)
        } else {
            header.ecn = depth >= link.spec.ecn_threshold();
            stats.ecn_marked += u64::from(header.ecn);
            let finish = link.free_at.max(t) + link.serialization_us;
            link.free_at = finish;
            link.queue.push_back(finish);
            stats.max_queue_depth = stats.max_queue_depth.max(depth + 1);
            if link.loss.drops(header.path_seq) {
                stats.dropped_loss += 1;
                Some(TraceKind::DropLoss)
            } else {
                let arrival = finish + link.spec.latency_us;
                self.push(
                    arrival,
                    EventKind::Arrive {
                        header,
                        sent_us: t,
                        packet,
                    },
                );
                None
            }
        };
        self.log(TraceKind::Send, &header);
        if let Some(kind) = outcome {
            self.log(kind, &header);
        }

        self.since_anchor += 1;
        if self.emitted < self.budget {
            let next = self.emission_time(self.since_anchor);
            let generation = self.generation;
            self.push(next, EventKind::Emit { generation });
        }
    }

    /// Returns true once enough distinct packets have arrived.
    fn arrive(&mut self, header: PacketHeader, sent_us: u64, packet: u64) -> bool {
        let path = header.path_id;
        self.stats[path].delivered += 1;
        self.log(TraceKind::Deliver, &header);
        let gaps = self.destination.receive(&header);
        if self.delivered_ids.insert(packet) {
            self.max_needed_latency = self
                .max_needed_latency
                .max(self.links[path].spec.latency_us);
        }
        if self.delivered_ids.len() as u64 >= self.required {
            return true;
        }
        let delay = self.links[path].spec.feedback_delay();
        let record = FeedbackRecord {
            time_us: self.now + delay,
            path_id: path,
            path_seq: header.path_seq,
            flow_seq: header.flow_seq,
            ecn: header.ecn,
            rtt_us: self.now - sent_us + delay,
            gaps,
        };
        self.push(self.now + delay, EventKind::Feedback(record));
        false
    }

    fn on_feedback(&mut self, record: FeedbackRecord) {
        if let Some(window) = &mut self.window {
            window.record_packet(record.path_id, record.ecn, Some(record.rtt_us));
            window.record_losses(record.path_id, record.gaps.len() as u64);
        }
        self.feedback.push(record);
    }

    fn adapt_tick(&mut self) {
        let adapt: &AdaptConfig = self
            .config
            .adapt
            .as_ref()
            .expect("tick only scheduled with adapt");
        let window = self
            .window
            .replace(PathFeedback::new(self.profile.n(), adapt.window_us))
            .expect("window");
        if !window.is_quiet() {
            let alphas = adapt::feedback_to_alpha(&window, &adapt.policy);
            let zero = Rational::from_integer(0);
            if alphas.iter().any(|a| *a > zero) {
                let action = match adapt.mode {
                    AdaptMode::Whack => {
                        let paths: Vec<usize> =
                            (0..alphas.len()).filter(|&i| alphas[i] > zero).collect();
                        for &i in &paths {
                            adapt::whack(&mut self.profile, &mut self.cursor, i, alphas[i])
                                .expect("validated alpha");
                        }
                        AdaptAction::Whacked { paths }
                    }
                    AdaptMode::Rebalance { budget } => {
                        let weights =
                            SeverityWeights::new(alphas.clone()).expect("alphas are non-negative");
                        match adapt::rebalance_step(
                            &mut self.profile,
                            &mut self.cursor,
                            &weights,
                            budget,
                        )
                        .expect("validated budget")
                        {
                            Rebalance::Applied {
                                removal,
                                before,
                                after,
                            } => AdaptAction::Rebalanced {
                                removal: removal.0,
                                objective_before: format_rational(&before),
                                objective_after: format_rational(&after),
                            },
                            Rebalance::NoImprovement => AdaptAction::NoImprovement,
                        }
                    }
                };
                self.adaptations.push(AdaptEvent {
                    time_us: self.now,
                    alphas: alphas.iter().map(format_rational).collect(),
                    action,
                });
                let changed = self
                    .history
                    .last()
                    .is_some_and(|h| h.counts != self.profile.counts());
                if changed {
                    self.profile_changed(ChangeCause::Adapt);
                }
            }
        }
        if !self.events.is_empty() {
            self.push(self.now + adapt.window_us, EventKind::AdaptTick);
        }
    }

    /// Logs the live profile and, when the emission rate changes or the
    /// schedule switches, restarts the emission clock.
    fn profile_changed(&mut self, cause: ChangeCause) {
        let rate = sender_send_rate(&self.config.paths, &self.profile, self.config.send_rate);
        if rate != self.rate_bps || cause == ChangeCause::Schedule {
            self.rate_bps = rate;
            let gap = (self.bits as u128 * 1_000_000 / rate as u128) as u64;
            let start = match self.last_emit {
                Some(last) => self.now.max(last + gap),
                None => self.now,
            };
            self.anchor = start;
            self.since_anchor = 0;
            self.generation += 1;
            if self.emitted < self.budget {
                let generation = self.generation;
                self.push(start, EventKind::Emit { generation });
            }
        }
        self.record_change(cause);
    }

    fn record_change(&mut self, cause: ChangeCause) {
        self.history.push(ProfileChange {
            time_us: self.now,
            cause,
            counts: self.profile.counts().to_vec(),
            send_rate_bps: self.rate_bps,
        });
    }

    fn log(&mut self, event: TraceKind, h: &PacketHeader) {
        if self.tracing {
            self.trace.push(TraceEvent {
                time_us: self.now,
                event,
                path: h.path_id,
                path_seq: h.path_seq,
                flow_seq: h.flow_seq,
                ecn: h.ecn,
            });
        }
    }
}
