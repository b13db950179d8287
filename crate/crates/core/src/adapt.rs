//! Feedback-driven profile adjustment.
//!
//! A degraded path is "whacked": `floor(α·b(i))` of its balls are removed
//! and spread evenly over all paths. The factor `α` comes from a declarative
//! [`AlphaPolicy`] evaluated on per-path feedback. Alternatively, given
//! per-path severity weights `w(i)`, [`rebalance_step`] moves balls off the
//! worst paths so that `Σ w(i)·b(i)` never increases.

use serde::{Deserialize, Serialize};

use crate::profile::PathProfile;
use crate::rational::{self, Rational};
use crate::update::{self, RemovalProfile, ResidualCursor, UpdateError, UpdateSummary};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AdaptError {
    #[error("alpha {0} is outside [0, 1]")]
    BadAlpha(Rational),
    #[error("path {path} is outside [0, {n})")]
    PathOutOfRange { path: usize, n: usize },
    #[error("expected {expected} per-path values, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("severity weight {0} is negative")]
    NegativeWeight(Rational),
    #[error("rebalance budget must be at least one ball")]
    ZeroBudget,
    #[error("invalid policy rule: {0}")]
    BadRule(String),
    #[error(transparent)]
    Update(#[from] UpdateError),
}

/// Removes `floor(alpha·b(path))` balls from `path` and spreads them evenly
/// over every path, `path` included.
pub fn whack(
    profile: &mut PathProfile,
    cursor: &mut ResidualCursor,
    path: usize,
    alpha: Rational,
) -> Result<UpdateSummary, AdaptError> {
    check_alpha(alpha)?;
    if path >= profile.n() {
        return Err(AdaptError::PathOutOfRange {
            path,
            n: profile.n(),
        });
    }
    let removed = (alpha * Rational::from_integer(profile.count(path) as i128)).floor();
    let removed = *removed.numer() as u64;
    Ok(update::redistribute_single(profile, cursor, path, removed)?)
}

fn check_alpha(alpha: Rational) -> Result<(), AdaptError> {
    if alpha < Rational::from_integer(0) || alpha > Rational::from_integer(1) {
        Err(AdaptError::BadAlpha(alpha))
    } else {
        Ok(())
    }
}

/// Non-negative per-path cost of sending on that path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeverityWeights(Vec<Rational>);

impl SeverityWeights {
    pub fn new(weights: Vec<Rational>) -> Result<Self, AdaptError> {
        if let Some(w) = weights.iter().find(|w| **w < Rational::from_integer(0)) {
            return Err(AdaptError::NegativeWeight(*w));
        }
        Ok(Self(weights))
    }

    pub fn from_integers(weights: &[i64]) -> Result<Self, AdaptError> {
        Self::new(
            weights
                .iter()
                .map(|&w| Rational::from_integer(w as i128))
                .collect(),
        )
    }

    pub fn as_slice(&self) -> &[Rational] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `Σ w(i)·b(i)`, exactly.
pub fn severity_objective(
    profile: &PathProfile,
    weights: &SeverityWeights,
) -> Result<Rational, AdaptError> {
    if weights.len() != profile.n() {
        return Err(AdaptError::Dimension {
            expected: profile.n(),
            got: weights.len(),
        });
    }
    Ok(weights
        .as_slice()
        .iter()
        .zip(profile.counts())
        .map(|(w, &b)| *w * Rational::from_integer(b as i128))
        .sum())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rebalance {
    Applied {
        removal: RemovalProfile,
        before: Rational,
        after: Rational,
    },
    /// No ball can be moved to a strictly cheaper path.
    NoImprovement,
}

/// Moves up to `budget` balls off the highest-weight paths onto the paths
/// from which nothing is removed.
///
/// The removal is split over the bins tied at the maximum weight in
/// proportion to their counts, clipped so that no bin gives up more than it
/// holds. Every minimum-weight bin is left untouched and therefore receives.
pub fn rebalance_step(
    profile: &mut PathProfile,
    cursor: &mut ResidualCursor,
    weights: &SeverityWeights,
    budget: u64,
) -> Result<Rebalance, AdaptError> {
    let before = severity_objective(profile, weights)?;
    if budget == 0 {
        return Err(AdaptError::ZeroBudget);
    }
    let w = weights.as_slice();
    let top = *w.iter().max().expect("non-empty profile");
    let bottom = *w.iter().min().expect("non-empty profile");
    if top == bottom {
        return Ok(Rebalance::NoImprovement);
    }

    // Only the top tier may give: any other choice would let an empty
    // top-tier bin receive and raise the objective.
    let tier: Vec<usize> = (0..w.len()).filter(|&i| w[i] == top).collect();
    let mass: u64 = tier.iter().map(|&i| profile.count(i)).sum();
    if mass == 0 {
        return Ok(Rebalance::NoImprovement);
    }
    let take = budget.min(mass);

    let mut e = vec![0u64; profile.n()];
    let mut remainders = Vec::with_capacity(tier.len());
    for &i in &tier {
        let share = take as u128 * profile.count(i) as u128;
        e[i] = (share / mass as u128) as u64;
        remainders.push((share % mass as u128, i));
    }
    let mut left = take - e.iter().sum::<u64>();
    // largest remainder first, lower index on ties
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(rem, i) in &remainders {
        if left == 0 {
            break;
        }
        if rem > 0 && e[i] < profile.count(i) {
            e[i] += 1;
            left -= 1;
        }
    }
    debug_assert_eq!(left, 0);

    let removal = RemovalProfile(e);
    update::redistribute_to_untouched(profile, cursor, &removal)?;
    let after = severity_objective(profile, weights)?;
    assert!(after <= before, "objective rose from {before} to {after}");
    Ok(Rebalance::Applied {
        removal,
        before,
        after,
    })
}

/// Feedback gathered for one path over one aggregation window.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathSignals {
    /// Packets the feedback covers.
    pub packets: u64,
    pub ecn_marks: u64,
    /// Sequence gaps reported by the destination.
    pub losses: u64,
    /// Round-trip samples in microseconds.
    pub rtt_samples_us: Vec<u64>,
}

impl PathSignals {
    fn mean_rtt(&self) -> Option<Rational> {
        if self.rtt_samples_us.is_empty() {
            return None;
        }
        let sum: u128 = self.rtt_samples_us.iter().map(|&s| s as u128).sum();
        Some(Rational::new(
            sum as i128,
            self.rtt_samples_us.len() as i128,
        ))
    }

    pub fn ecn_rate(&self) -> Rational {
        if self.packets == 0 {
            Rational::from_integer(0)
        } else {
            Rational::new(self.ecn_marks as i128, self.packets as i128)
        }
    }
}

/// Per-path feedback for one window.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathFeedback {
    pub window_us: u64,
    pub paths: Vec<PathSignals>,
}

impl PathFeedback {
    pub fn new(n: usize, window_us: u64) -> Self {
        Self {
            window_us,
            paths: vec![PathSignals::default(); n],
        }
    }

    pub fn record_packet(&mut self, path: usize, ecn: bool, rtt_us: Option<u64>) {
        let p = &mut self.paths[path];
        p.packets += 1;
        p.ecn_marks += u64::from(ecn);
        if let Some(rtt) = rtt_us {
            p.rtt_samples_us.push(rtt);
        }
    }

    pub fn record_losses(&mut self, path: usize, count: u64) {
        self.paths[path].losses += count;
    }

    pub fn is_quiet(&self) -> bool {
        self.paths.iter().all(|p| p.packets == 0 && p.losses == 0)
    }

    /// Relative excess of each path's mean RTT over the median of the
    /// per-path means, clamped at zero. Paths without samples score zero.
    pub fn rtt_excess(&self) -> Vec<Rational> {
        let zero = Rational::from_integer(0);
        let means: Vec<Option<Rational>> = self.paths.iter().map(PathSignals::mean_rtt).collect();
        let mut sorted: Vec<Rational> = means.iter().flatten().copied().collect();
        if sorted.is_empty() {
            return vec![zero; self.paths.len()];
        }
        sorted.sort();
        let mid = sorted.len() / 2;
        let median = if sorted.len() % 2 == 1 {
            sorted[mid]
        } else {
            (sorted[mid - 1] + sorted[mid]) / Rational::from_integer(2)
        };
        means
            .iter()
            .map(|mean| match mean {
                Some(mean) if median > zero && *mean > median => (*mean - median) / median,
                _ => zero,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signal {
    /// Fraction of covered packets carrying an ECN mark.
    EcnRate,
    /// Number of sequence gaps.
    LossCount,
    /// See [`PathFeedback::rtt_excess`].
    RttExcess,
}

/// Fires when the signal is positive and at least `threshold`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlphaRule {
    pub signal: Signal,
    #[serde(with = "rational::serde_num_or_str")]
    pub threshold: Rational,
    #[serde(with = "rational::serde_str")]
    pub alpha: Rational,
}

/// Threshold table mapping feedback to a whack factor. When several rules
/// fire for a path the largest `alpha` wins; when none fire `alpha = 0`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AlphaPolicy {
    pub rules: Vec<AlphaRule>,
}

impl AlphaPolicy {
    pub fn new(rules: Vec<AlphaRule>) -> Result<Self, AdaptError> {
        let policy = Self { rules };
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<(), AdaptError> {
        for rule in &self.rules {
            check_alpha(rule.alpha)?;
            if rule.threshold < Rational::from_integer(0) {
                return Err(AdaptError::BadRule(format!(
                    "negative threshold for {:?}",
                    rule.signal
                )));
            }
        }
        Ok(())
    }

    fn rule(signal: Signal, threshold: Rational, alpha: Rational) -> AlphaRule {
        AlphaRule {
            signal,
            threshold,
            alpha,
        }
    }
}

impl Default for AlphaPolicy {
    /// | signal       | threshold | alpha |
    /// |--------------|-----------|-------|
    /// | `loss_count` | 1         | 1/2   |
    /// | `loss_count` | 8         | 3/4   |
    /// | `ecn_rate`   | 1/10      | 1/8   |
    /// | `ecn_rate`   | 1/2       | 1/4   |
    /// | `rtt_excess` | 1/4       | 1/16  |
    /// | `rtt_excess` | 1         | 1/4   |
    fn default() -> Self {
        let r = Rational::new;
        Self {
            rules: vec![
                Self::rule(Signal::LossCount, r(1, 1), r(1, 2)),
                Self::rule(Signal::LossCount, r(8, 1), r(3, 4)),
                Self::rule(Signal::EcnRate, r(1, 10), r(1, 8)),
                Self::rule(Signal::EcnRate, r(1, 2), r(1, 4)),
                Self::rule(Signal::RttExcess, r(1, 4), r(1, 16)),
                Self::rule(Signal::RttExcess, r(1, 1), r(1, 4)),
            ],
        }
    }
}

/// Evaluates `policy` on every path.
pub fn feedback_to_alpha(feedback: &PathFeedback, policy: &AlphaPolicy) -> Vec<Rational> {
    let zero = Rational::from_integer(0);
    let excess = feedback.rtt_excess();
    feedback
        .paths
        .iter()
        .zip(excess)
        .map(|(p, rtt_excess)| {
            policy
                .rules
                .iter()
                .filter(|rule| {
                    let value = match rule.signal {
                        Signal::EcnRate => p.ecn_rate(),
                        Signal::LossCount => Rational::from_integer(p.losses as i128),
                        Signal::RttExcess => rtt_excess,
                    };
                    value > zero && value >= rule.threshold
                })
                .map(|rule| rule.alpha)
                .max()
                .unwrap_or(zero)
        })
        .collect()
}
