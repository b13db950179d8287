//! Discrete path profiles.
//!
//! A profile over `n` paths is a vector of ball counts `b(i)` summing to `m`.
//! The prefix sums are kept alongside so that a selection point
//! `k ∈ [0, m)` maps to the unique path `i` with `c(i-1) <= k < c(i)`.
//! Bins holding zero balls are legal and are never selected.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProfileError {
    #[error("a profile needs at least one path")]
    Empty,
    #[error("a profile needs at least one ball (m = 0 has no valid selection)")]
    ZeroTotal,
    #[error("ball total overflows a 64-bit counter")]
    Overflow,
    #[error("selection point {k} is outside [0, {m})")]
    PointOutOfRange { k: u64, m: u64 },
    #[error("path index {index} is outside [0, {n})")]
    PathOutOfRange { index: usize, n: usize },
    #[error("invalid profile literal {0:?}")]
    Parse(String),
}

/// How [`PathProfile::select_path_with`] searches the cumulative array.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchStrategy {
    Linear,
    Binary,
    Interpolation,
}

/// Ball counts per path together with their prefix sums.
///
/// `cumulative` has `n + 1` entries; `cumulative[0]` stands for `c(-1) = 0`
/// and `cumulative[i + 1]` is `c(i)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<u64>", into = "Vec<u64>")]
pub struct PathProfile {
    counts: Vec<u64>,
    cumulative: Vec<u64>,
}

impl PathProfile {
    pub fn from_counts(counts: impl Into<Vec<u64>>) -> Result<Self, ProfileError> {
        let counts = counts.into();
        if counts.is_empty() {
            return Err(ProfileError::Empty);
        }
        let cumulative = prefix_sums(&counts)?;
        if cumulative[counts.len()] == 0 {
            return Err(ProfileError::ZeroTotal);
        }
        Ok(Self { counts, cumulative })
    }

    /// Number of paths.
    pub fn n(&self) -> usize {
        self.counts.len()
    }

    /// Total number of balls.
    pub fn m(&self) -> u64 {
        self.cumulative[self.counts.len()]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn cumulative(&self) -> &[u64] {
        &self.cumulative
    }

    pub fn count(&self, path: usize) -> u64 {
        self.counts[path]
    }

    /// `log2(m)` when `m` is a power of two.
    pub fn ell(&self) -> Option<u32> {
        let m = self.m();
        m.is_power_of_two().then(|| m.trailing_zeros())
    }

    /// The ball positions `[c(i-1), c(i))` owned by `path`.
    pub fn ball_range(&self, path: usize) -> Range<u64> {
        self.cumulative[path]..self.cumulative[path + 1]
    }

    /// Number of paths with at least one ball.
    pub fn active_paths(&self) -> usize {
        self.counts.iter().filter(|&&b| b > 0).count()
    }

    pub fn select_path(&self, k: u64) -> Result<usize, ProfileError> {
        self.select_path_with(k, SearchStrategy::Binary)
    }

    pub fn select_path_with(
        &self,
        k: u64,
        strategy: SearchStrategy,
    ) -> Result<usize, ProfileError> {
        let m = self.m();
        if k >= m {
            return Err(ProfileError::PointOutOfRange { k, m });
        }
        Ok(match strategy {
            SearchStrategy::Linear => self.linear(k),
            SearchStrategy::Binary => self.cumulative.partition_point(|&c| c <= k) - 1,
            SearchStrategy::Interpolation => self.interpolation(k),
        })
    }

    fn linear(&self, k: u64) -> usize {
        // k < m guarantees a hit before the end
        (0..self.n())
            .find(|&i| k < self.cumulative[i + 1])
            .expect("k < m")
    }

    fn interpolation(&self, k: u64) -> usize {
        // invariant: cumulative[lo] <= k < cumulative[hi]
        let (mut lo, mut hi) = (0usize, self.n());
        while hi - lo > 1 {
            let (clo, chi) = (self.cumulative[lo], self.cumulative[hi]);
            let guess = lo + ((k - clo) as u128 * (hi - lo) as u128 / (chi - clo) as u128) as usize;
            let mid = guess.clamp(lo + 1, hi - 1);
            if self.cumulative[mid] <= k {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// The profile as exact fractions `b(i) / m`.
    pub fn fractions(&self) -> Vec<Rational> {
        let m = self.m() as i128;
        self.counts
            .iter()
            .map(|&b| Rational::new(b as i128, m))
            .collect()
    }

    /// Replaces the counts in place. Used by the update procedures, which
    /// preserve the total themselves.
    pub(crate) fn set_counts(&mut self, counts: Vec<u64>) {
        debug_assert_eq!(counts.len(), self.counts.len());
        self.cumulative = prefix_sums(&counts).expect("update preserves the total");
        self.counts = counts;
    }
}

fn prefix_sums(counts: &[u64]) -> Result<Vec<u64>, ProfileError> {
    let mut cumulative = Vec::with_capacity(counts.len() + 1);
    cumulative.push(0u64);
    let mut acc = 0u64;
    for &b in counts {
        acc = acc.checked_add(b).ok_or(ProfileError::Overflow)?;
        cumulative.push(acc);
    }
    Ok(cumulative)
}

impl TryFrom<Vec<u64>> for PathProfile {
    type Error = ProfileError;

    fn try_from(counts: Vec<u64>) -> Result<Self, Self::Error> {
        Self::from_counts(counts)
    }
}

impl From<PathProfile> for Vec<u64> {
    fn from(p: PathProfile) -> Self {
        p.counts
    }
}

/// Parses comma-separated counts such as `127,400,200,173,124`.
impl FromStr for PathProfile {
    type Err = ProfileError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let counts = s
            .split(',')
            .map(|t| t.trim().parse::<u64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| ProfileError::Parse(s.to_string()))?;
        Self::from_counts(counts)
    }
}

impl fmt::Display for PathProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, b) in self.counts.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{b}")?;
        }
        Ok(())
    }
}
