use serde::{Deserialize, Serialize};

use crate::adapt::{AdaptError, AlphaPolicy};
use crate::profile::PathProfile;
use crate::rational::{self, Rational};
use crate::spray::{RotationPolicy, SprayError, SprayMethod, SpraySeed, SprayState};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("at least one path is required")]
    NoPaths,
    #[error("path {path}: {reason}")]
    BadPath { path: usize, reason: String },
    #[error("schedule: {0}")]
    Schedule(String),
    #[error("message: {0}")]
    Message(String),
    #[error("send rate: {0}")]
    SendRate(String),
    #[error("adapt: {0}")]
    AdaptConfig(String),
    #[error(transparent)]
    Spray(#[from] SprayError),
    #[error(transparent)]
    Adapt(#[from] AdaptError),
}

/// Deterministic loss on one path.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LossPattern {
    #[default]
    None,
    /// Drop exactly these per-path sequence numbers.
    DropList { path_seqs: Vec<u64> },
    /// Drop each packet independently with probability `rate`, drawn from a
    /// ChaCha8 stream keyed by `seed`.
    Rate {
        #[serde(with = "rational::serde_num_or_str")]
        rate: Rational,
        seed: u64,
    },
}

fn default_queue_capacity() -> u64 {
    10_000
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSpec {
    /// One-way delay.
    pub latency_us: u64,
    pub bandwidth_bps: u64,
    /// Packets the transmit queue holds, the one being serialized included.
    #[serde(default = "default_queue_capacity")]
    pub queue_capacity: u64,
    /// Queue depth at which arriving packets are ECN-marked; defaults to the
    /// capacity.
    #[serde(default)]
    pub ecn_threshold: Option<u64>,
    #[serde(default)]
    pub loss: LossPattern,
    /// Destination-to-source delay for feedback; defaults to `latency_us`.
    #[serde(default)]
    pub feedback_delay_us: Option<u64>,
}

impl PathSpec {
    pub fn new(latency_us: u64, bandwidth_bps: u64) -> Self {
        Self {
            latency_us,
            bandwidth_bps,
            queue_capacity: default_queue_capacity(),
            ecn_threshold: None,
            loss: LossPattern::None,
            feedback_delay_us: None,
        }
    }

    pub fn ecn_threshold(&self) -> u64 {
        self.ecn_threshold.unwrap_or(self.queue_capacity)
    }

    pub fn feedback_delay(&self) -> u64 {
        self.feedback_delay_us.unwrap_or(self.latency_us)
    }

    /// Time to put `bits` on the wire, rounded up to whole microseconds.
    pub fn serialization_us(&self, bits: u64) -> u64 {
        (bits as u128 * 1_000_000).div_ceil(self.bandwidth_bps as u128) as u64
    }

    fn validate(&self, path: usize) -> Result<(), SimError> {
        let bad = |reason: &str| SimError::BadPath {
            path,
            reason: reason.to_string(),
        };
        if self.bandwidth_bps == 0 {
            return Err(bad("bandwidth must be positive"));
        }
        if self.queue_capacity == 0 {
            return Err(bad("queue capacity must be positive"));
        }
        if self.ecn_threshold() > self.queue_capacity {
            return Err(bad("ECN threshold exceeds queue capacity"));
        }
        if let LossPattern::Rate { rate, .. } = &self.loss {
            if *rate < Rational::from_integer(0) || *rate > Rational::from_integer(1) {
                return Err(bad("loss rate must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSegment {
    pub start_us: u64,
    pub profile: PathProfile,
}

/// Profiles in force from each start time until the next.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSchedule {
    pub segments: Vec<ScheduleSegment>,
}

impl ProfileSchedule {
    pub fn fixed(profile: PathProfile) -> Self {
        Self {
            segments: vec![ScheduleSegment {
                start_us: 0,
                profile,
            }],
        }
    }

    /// Appends a segment starting at `start_us`.
    pub fn then(mut self, start_us: u64, profile: PathProfile) -> Self {
        self.segments.push(ScheduleSegment { start_us, profile });
        self
    }

    fn validate(&self, n: usize) -> Result<u32, SimError> {
        let err = |s: String| SimError::Schedule(s);
        let first = self
            .segments
            .first()
            .ok_or_else(|| err("no segments".into()))?;
        if first.start_us != 0 {
            return Err(err(format!(
                "first segment starts at {} instead of 0",
                first.start_us
            )));
        }
        let m = first.profile.m();
        let ell = first
            .profile
            .ell()
            .ok_or_else(|| err(format!("profile total {m} is not a power of two")))?;
        for (k, seg) in self.segments.iter().enumerate() {
            if seg.profile.n() != n {
                return Err(err(format!(
                    "segment {k} has {} paths, expected {n}",
                    seg.profile.n()
                )));
            }
            if seg.profile.m() != m {
                return Err(err(format!(
                    "segment {k} totals {}, expected {m}",
                    seg.profile.m()
                )));
            }
            if k > 0 && seg.start_us <= self.segments[k - 1].start_us {
                return Err(err(format!(
                    "segment {k} does not start after segment {}",
                    k - 1
                )));
            }
        }
        Ok(ell)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Completion {
    /// Every packet of the message must arrive.
    #[default]
    AllPackets,
    /// Any `required` distinct packets suffice; at most `budget` are sent.
    Fountain { required: u64, budget: u64 },
}

fn default_payload_bits() -> u64 {
    10_000
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MessageSpec {
    pub size_bits: u64,
    #[serde(default = "default_payload_bits")]
    pub packet_payload_bits: u64,
    #[serde(default)]
    pub completion: Completion,
}

impl MessageSpec {
    pub fn new(size_bits: u64, packet_payload_bits: u64) -> Self {
        Self {
            size_bits,
            packet_payload_bits,
            completion: Completion::AllPackets,
        }
    }

    pub fn packet_count(&self) -> u64 {
        self.size_bits.div_ceil(self.packet_payload_bits)
    }

    /// Distinct arrivals needed to complete.
    pub fn required(&self) -> u64 {
        match self.completion {
            Completion::AllPackets => self.packet_count(),
            Completion::Fountain { required, .. } => required,
        }
    }

    /// Packets the sender may emit.
    pub fn budget(&self) -> u64 {
        match self.completion {
            Completion::AllPackets => self.packet_count(),
            Completion::Fountain { budget, .. } => budget,
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        let err = |s: &str| Err(SimError::Message(s.to_string()));
        if self.size_bits == 0 || self.packet_payload_bits == 0 {
            return err("size and payload must be positive");
        }
        if let Completion::Fountain { required, budget } = self.completion {
            if required == 0 {
                return err("fountain needs at least one packet");
            }
            if required > budget {
                return err("fountain requirement exceeds the packet budget");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SprayConfig {
    #[serde(default = "default_method")]
    pub method: SprayMethod,
    #[serde(default = "default_seed")]
    pub seed: SpraySeed,
    #[serde(default = "default_rotation")]
    pub rotation: RotationPolicy,
    /// Initial counter value.
    #[serde(default)]
    pub start_counter: u64,
}

fn default_method() -> SprayMethod {
    SprayMethod::Shuffle1
}

fn default_seed() -> SpraySeed {
    SpraySeed::IDENTITY
}

fn default_rotation() -> RotationPolicy {
    RotationPolicy::Never
}

impl Default for SprayConfig {
    fn default() -> Self {
        Self {
            method: default_method(),
            seed: default_seed(),
            rotation: default_rotation(),
            start_counter: 0,
        }
    }
}

impl SprayConfig {
    pub fn build(&self, ell: u32) -> Result<SprayState, SprayError> {
        Ok(SprayState::new(ell, self.method, self.seed)?
            .with_rotation(self.rotation)
            .with_counter(self.start_counter))
    }
}

/// What the sender does with the per-path factors from the alpha policy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AdaptMode {
    /// Whack every path with a positive factor, in path order.
    #[default]
    Whack,
    /// One rebalance step per window using the factors as severity weights.
    Rebalance { budget: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptConfig {
    #[serde(default)]
    pub policy: AlphaPolicy,
    /// Feedback aggregation window.
    pub window_us: u64,
    #[serde(default)]
    pub mode: AdaptMode,
}

/// How fast the sender emits packets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SendRate {
    /// Sum of the bandwidths of the paths holding at least one ball.
    #[default]
    ProfileAggregate,
    Fixed {
        bps: u64,
    },
}

fn default_horizon() -> u64 {
    60_000_000
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub paths: Vec<PathSpec>,
    pub message: MessageSpec,
    pub schedule: ProfileSchedule,
    #[serde(default)]
    pub spray: SprayConfig,
    #[serde(default)]
    pub adapt: Option<AdaptConfig>,
    #[serde(default)]
    pub send_rate: SendRate,
    /// The run stops with a timeout once simulated time passes this.
    #[serde(default = "default_horizon")]
    pub horizon_us: u64,
}

impl SimConfig {
    pub fn new(paths: Vec<PathSpec>, message: MessageSpec, schedule: ProfileSchedule) -> Self {
        Self {
            paths,
            message,
            schedule,
            spray: SprayConfig::default(),
            adapt: None,
            send_rate: SendRate::default(),
            horizon_us: default_horizon(),
        }
    }

    /// Checks the configuration and returns the profile width `ℓ`.
    pub fn validate(&self) -> Result<u32, SimError> {
        if self.paths.is_empty() {
            return Err(SimError::NoPaths);
        }
        for (i, p) in self.paths.iter().enumerate() {
            p.validate(i)?;
        }
        self.message.validate()?;
        let ell = self.schedule.validate(self.paths.len())?;
        self.spray.seed.validate(ell)?;
        if let SendRate::Fixed { bps: 0 } = self.send_rate {
            return Err(SimError::SendRate("fixed rate must be positive".into()));
        }
        if let Some(adapt) = &self.adapt {
            adapt.policy.validate()?;
            if adapt.window_us == 0 {
                return Err(SimError::AdaptConfig("window must be positive".into()));
            }
            if let AdaptMode::Rebalance { budget: 0 } = adapt.mode {
                return Err(SimError::AdaptConfig(
                    "rebalance budget must be positive".into(),
                ));
            }
        }
        Ok(ell)
    }
}

/// Aggregate emission rate for `profile` under `policy`.
pub fn sender_send_rate(paths: &[PathSpec], profile: &PathProfile, policy: SendRate) -> u64 {
    match policy {
        SendRate::Fixed { bps } => bps,
        SendRate::ProfileAggregate => paths
            .iter()
            .zip(profile.counts())
            .filter(|(_, &b)| b > 0)
            .map(|(p, _)| p.bandwidth_bps)
            .sum(),
    }
}
