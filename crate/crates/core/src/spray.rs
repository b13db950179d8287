//! Per-packet path selection from an `ℓ`-bit spray counter.
//!
//! The counter value `j` is turned into a selection point in `[0, 2^ℓ)` by
//! reversing its low `ℓ` bits, optionally composed with a seeded affine map
//! `x -> sa + sb·x (mod 2^ℓ)`:
//!
//! | method     | selection point                    |
//! |------------|------------------------------------|
//! | `Plain`    | `θ(j)`                             |
//! | `Shuffle1` | `θ((sa + j·sb) mod 2^ℓ)`           |
//! | `Shuffle2` | `(sa + sb·θ(j mod 2^ℓ)) mod 2^ℓ`   |
//!
//! Because `sb` is odd, every method maps any `2^ℓ` consecutive counter
//! values onto `[0, 2^ℓ)` bijectively, so each path receives exactly `b(i)`
//! packets per period.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::profile::PathProfile;

pub const MAX_ELL: u32 = 63;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SprayError {
    #[error("bit width {0} is outside [1, {MAX_ELL}]")]
    BadWidth(u32),
    #[error("seed offset sa = {sa} must be below m = {m}")]
    SeedOffset { sa: u64, m: u64 },
    #[error("seed stride sb = {sb} must be odd and below m = {m}")]
    SeedStride { sb: u64, m: u64 },
    #[error("profile has {got} balls but the counter expects m = {expected}")]
    ProfileSize { expected: u64, got: u64 },
    #[error("unknown spray method {0:?}")]
    UnknownMethod(String),
}

/// Returns `θ(j, ℓ)`: the low `ell` bits of `j` in reverse order. Higher bits
/// of `j` are ignored.
#[inline]
pub fn bit_reverse(j: u64, ell: u32) -> u64 {
    debug_assert!(ell <= 64);
    if ell == 0 {
        0
    } else {
        j.reverse_bits() >> (64 - ell)
    }
}

#[inline]
fn mask(ell: u32) -> u64 {
    if ell >= 64 {
        u64::MAX
    } else {
        (1u64 << ell) - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SprayMethod {
    Plain,
    Shuffle1,
    Shuffle2,
}

impl SprayMethod {
    pub const ALL: [SprayMethod; 3] = [
        SprayMethod::Plain,
        SprayMethod::Shuffle1,
        SprayMethod::Shuffle2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SprayMethod::Plain => "plain",
            SprayMethod::Shuffle1 => "shuffle1",
            SprayMethod::Shuffle2 => "shuffle2",
        }
    }
}

impl fmt::Display for SprayMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SprayMethod {
    type Err = SprayError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "plain" | "0" => Ok(SprayMethod::Plain),
            "shuffle1" | "1" => Ok(SprayMethod::Shuffle1),
            "shuffle2" | "2" => Ok(SprayMethod::Shuffle2),
            _ => Err(SprayError::UnknownMethod(s.to_string())),
        }
    }
}

/// Per-source seed `(sa, sb)`, `sa ∈ [0, m)`, `sb` odd in `(0, m)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpraySeed {
    pub sa: u64,
    pub sb: u64,
}

impl SpraySeed {
    /// `(0, 1)`, under which `Shuffle1` and `Shuffle2` reduce to `Plain`.
    pub const IDENTITY: SpraySeed = SpraySeed { sa: 0, sb: 1 };

    pub fn new(sa: u64, sb: u64, ell: u32) -> Result<Self, SprayError> {
        let seed = SpraySeed { sa, sb };
        seed.validate(ell)?;
        Ok(seed)
    }

    pub fn validate(&self, ell: u32) -> Result<(), SprayError> {
        check_width(ell)?;
        let m = 1u64 << ell;
        if self.sa >= m {
            return Err(SprayError::SeedOffset { sa: self.sa, m });
        }
        if self.sb.is_multiple_of(2) || self.sb >= m {
            return Err(SprayError::SeedStride { sb: self.sb, m });
        }
        Ok(())
    }

    /// Draws a uniformly random valid seed for `m = 2^ell`.
    pub fn random<R: RngCore + ?Sized>(ell: u32, rng: &mut R) -> Self {
        let m = 1u64 << ell;
        let sa = rng.gen_range(0..m);
        let sb = 2 * rng.gen_range(0..m / 2) + 1;
        SpraySeed { sa, sb }
    }
}

fn check_width(ell: u32) -> Result<(), SprayError> {
    if (1..=MAX_ELL).contains(&ell) {
        Ok(())
    } else {
        Err(SprayError::BadWidth(ell))
    }
}

/// Maps counter value `j` to a selection point in `[0, 2^ell)`.
#[inline]
pub fn selection_point(method: SprayMethod, seed: SpraySeed, ell: u32, j: u64) -> u64 {
    let mask = mask(ell);
    match method {
        SprayMethod::Plain => bit_reverse(j, ell),
        SprayMethod::Shuffle1 => {
            bit_reverse(seed.sa.wrapping_add(j.wrapping_mul(seed.sb)) & mask, ell)
        }
        SprayMethod::Shuffle2 => {
            seed.sa
                .wrapping_add(seed.sb.wrapping_mul(bit_reverse(j, ell)))
                & mask
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationPolicy {
    Never,
    /// Draw a fresh seed whenever the counter crosses a multiple of `m`.
    /// Seeds come from a ChaCha8 stream keyed by `entropy_seed`.
    EveryPeriod {
        entropy_seed: u64,
    },
}

/// One entry of the seed-rotation audit log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SeedRotation {
    /// Counter value from which the new seed applies.
    pub counter: u64,
    pub old: SpraySeed,
    pub new: SpraySeed,
}

/// What the sprayer decided for one packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SprayDecision {
    /// Counter value used, which doubles as the flow sequence number.
    pub flow_seq: u64,
    pub selection_point: u64,
    pub path: usize,
    /// Sequence number of this packet on its path, counted from zero.
    pub path_seq: u64,
    pub seed: SpraySeed,
}

/// Spray counter for one flow.
#[derive(Debug, Clone)]
pub struct SprayState {
    ell: u32,
    counter: u64,
    seed: SpraySeed,
    method: SprayMethod,
    rotation: RotationPolicy,
    entropy: Option<ChaCha8Rng>,
    path_seq: Vec<u64>,
    rotations: Vec<SeedRotation>,
}

impl SprayState {
    pub fn new(ell: u32, method: SprayMethod, seed: SpraySeed) -> Result<Self, SprayError> {
        seed.validate(ell)?;
        Ok(Self {
            ell,
            counter: 0,
            seed,
            method,
            rotation: RotationPolicy::Never,
            entropy: None,
            path_seq: Vec::new(),
            rotations: Vec::new(),
        })
    }

    pub fn with_rotation(mut self, rotation: RotationPolicy) -> Self {
        self.entropy = match rotation {
            RotationPolicy::Never => None,
            RotationPolicy::EveryPeriod { entropy_seed } => {
                Some(ChaCha8Rng::seed_from_u64(entropy_seed))
            }
        };
        self.rotation = rotation;
        self
    }

    /// Starts the counter at `j` instead of zero.
    pub fn with_counter(mut self, j: u64) -> Self {
        self.counter = j;
        self
    }

    pub fn ell(&self) -> u32 {
        self.ell
    }

    pub fn m(&self) -> u64 {
        1u64 << self.ell
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn seed(&self) -> SpraySeed {
        self.seed
    }

    pub fn method(&self) -> SprayMethod {
        self.method
    }

    pub fn rotation(&self) -> RotationPolicy {
        self.rotation
    }

    pub fn rotations(&self) -> &[SeedRotation] {
        &self.rotations
    }

    /// Selection point for the current counter value, without advancing.
    pub fn peek_point(&self) -> u64 {
        selection_point(self.method, self.seed, self.ell, self.counter)
    }

    pub fn next_path(&mut self, profile: &PathProfile) -> Result<SprayDecision, SprayError> {
        if profile.m() != self.m() {
            return Err(SprayError::ProfileSize {
                expected: self.m(),
                got: profile.m(),
            });
        }
        let flow_seq = self.counter;
        let point = self.peek_point();
        let path = profile.select_path(point).expect("point < m");
        if self.path_seq.len() < profile.n() {
            self.path_seq.resize(profile.n(), 0);
        }
        let path_seq = self.path_seq[path];
        self.path_seq[path] += 1;
        let decision = SprayDecision {
            flow_seq,
            selection_point: point,
            path,
            path_seq,
            seed: self.seed,
        };

        self.counter += 1;
        if self.counter & mask(self.ell) == 0 {
            if let Some(mut rng) = self.entropy.take() {
                self.rotate_seed(&mut rng);
                self.entropy = Some(rng);
            }
        }
        Ok(decision)
    }

    /// Replaces the seed with one drawn from `entropy` and logs the change.
    pub fn rotate_seed<R: RngCore + ?Sized>(&mut self, entropy: &mut R) -> SpraySeed {
        let new = SpraySeed::random(self.ell, entropy);
        self.rotations.push(SeedRotation {
            counter: self.counter,
            old: self.seed,
            new,
        });
        self.seed = new;
        new
    }
}
