//! Deterministic multipath packet spraying.
//!
//! A path profile is held as `m` balls spread over `n` bins, one bin per
//! path. Each outgoing packet advances an `ℓ`-bit spray counter whose
//! bit-reversed (optionally seeded) value selects a ball, and the ball's bin
//! names the path. Over any window of packets the count sent on each path
//! stays within `O(log m)` of its target share.
//!
//! Modules:
//!
//! - [`profile`]: the integer ball/bin representation and path lookup.
//! - [`spray`]: bit reversal, shuffle methods and the per-flow counter.
//! - [`update`]: the four ball-removal/redistribution procedures.
//! - [`adapt`]: feedback-driven shrinking of degraded paths.
//! - [`discrepancy`]: a brute-force oracle for spray deviations and bounds.
//! - [`sim`]: a deterministic discrete-event multipath simulator.

pub mod adapt;
pub mod discrepancy;
pub mod profile;
pub mod rational;
pub mod sim;
pub mod spray;
pub mod update;

pub use profile::{PathProfile, ProfileError};
pub use rational::Rational;
pub use spray::{SprayMethod, SpraySeed, SprayState};
pub use update::{RemovalProfile, ResidualCursor};
