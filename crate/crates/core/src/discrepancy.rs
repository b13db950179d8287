//! Brute-force measurement of spray discrepancies.
//!
//! For a set `A` of consecutive balls and counter values `j..=j'`,
//! `disc(A, j, j')` is the number of selection points that fall in `A` minus
//! the expected `|A|/m · (j' - j + 1)`. From a start `j`, `maxdisc` and
//! `mindisc` are the extremes of `disc` over all `j' >= j`, both clamped to
//! include zero; their difference is the span at `j`, and the deviation
//! `dev(A)` is the largest span over all starts.
//!
//! Every method maps any `m` consecutive counter values onto all `m` balls,
//! so `disc` over a whole period is zero and both the window length and the
//! start can be restricted to one period without losing an extremum. Within
//! that range everything here is plain enumeration.
//!
//! Internally discrepancies are tracked scaled by `m`, which keeps them
//! integral; results are returned as exact [`Rational`]s.

use serde::Serialize;

use crate::profile::PathProfile;
use crate::rational::Rational;
use crate::spray::{selection_point, SprayMethod, SpraySeed};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DiscrepancyError {
    #[error("interval [{first}, {last}] is not inside [0, {m})")]
    BadInterval { first: u64, last: u64, m: u64 },
    #[error("profile total {0} is not a power of two")]
    NotPowerOfTwo(u64),
    #[error("path {path} is outside [0, {n})")]
    PathOutOfRange { path: usize, n: usize },
    #[error("window end {j_prime} precedes its start {j}")]
    BadWindow { j: u64, j_prime: u64 },
}

/// Consecutive balls `first..=last` out of `m = 2^ell`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct BallInterval {
    first: u64,
    last: u64,
}

impl BallInterval {
    pub fn new(first: u64, last: u64, ell: u32) -> Result<Self, DiscrepancyError> {
        let m = 1u64 << ell;
        if first > last || last >= m {
            return Err(DiscrepancyError::BadInterval { first, last, m });
        }
        Ok(Self { first, last })
    }

    /// The `index`-th of the `2^level` aligned blocks of size `2^(ell-level)`.
    pub fn dyadic(level: u32, index: u64, ell: u32) -> Result<Self, DiscrepancyError> {
        let size = 1u64 << (ell - level.min(ell));
        Self::new(index * size, index * size + size - 1, ell)
    }

    pub fn first(&self) -> u64 {
        self.first
    }

    pub fn last(&self) -> u64 {
        self.last
    }

    pub fn len(&self) -> u64 {
        self.last - self.first + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, ball: u64) -> bool {
        (self.first..=self.last).contains(&ball)
    }

    /// The level when this is an aligned dyadic block.
    pub fn dyadic_level(&self, ell: u32) -> Option<u32> {
        let len = self.len();
        (len.is_power_of_two() && self.first.is_multiple_of(len))
            .then(|| ell - len.trailing_zeros())
    }
}

/// Selection points for one full period of the counter.
#[derive(Debug, Clone)]
pub struct SelectionTable {
    ell: u32,
    points: Vec<u64>,
}

impl SelectionTable {
    pub fn new(method: SprayMethod, seed: SpraySeed, ell: u32) -> Self {
        let m = 1u64 << ell;
        let points = (0..m)
            .map(|j| selection_point(method, seed, ell, j))
            .collect();
        Self { ell, points }
    }

    pub fn m(&self) -> u64 {
        1u64 << self.ell
    }

    #[inline]
    pub fn point(&self, j: u64) -> u64 {
        self.points[(j & (self.m() - 1)) as usize]
    }

    /// `hits[j]` is 1 when counter value `j` (mod m) selects a ball in `interval`.
    pub fn hits(&self, interval: &BallInterval) -> Vec<u8> {
        self.points
            .iter()
            .map(|&p| u8::from(interval.contains(p)))
            .collect()
    }
}

/// Discrepancy extremes from one start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StartSpan {
    pub start: u64,
    pub maxdisc: Rational,
    pub mindisc: Rational,
    pub span: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DiscrepancyReport {
    pub per_start: Vec<StartSpan>,
    pub dev: Rational,
    /// First start attaining `dev`.
    pub argmax_start: u64,
}

/// Exact `disc(A, j, j')`.
pub fn disc(
    method: SprayMethod,
    seed: SpraySeed,
    ell: u32,
    interval: &BallInterval,
    j: u64,
    j_prime: u64,
) -> Result<Rational, DiscrepancyError> {
    if j_prime < j {
        return Err(DiscrepancyError::BadWindow { j, j_prime });
    }
    let chosen = (j..=j_prime)
        .filter(|&t| interval.contains(selection_point(method, seed, ell, t)))
        .count() as i128;
    let expected = Rational::new(
        interval.len() as i128 * (j_prime - j + 1) as i128,
        1i128 << ell,
    );
    Ok(Rational::from_integer(chosen) - expected)
}

/// Scaled extremes `(m·maxdisc, m·mindisc)` over windows of length `1..=m`.
fn scaled_extremes(hits: &[u8], size: i64, start: u64) -> (i64, i64) {
    let m = hits.len();
    let mask = m - 1;
    let (mut d, mut hi, mut lo) = (0i64, 0i64, 0i64);
    let s = start as usize & mask;
    for k in 0..m {
        d += m as i64 * hits[(s + k) & mask] as i64 - size;
        hi = hi.max(d);
        lo = lo.min(d);
    }
    (hi, lo)
}

fn to_span(start: u64, (hi, lo): (i64, i64), m: u64) -> StartSpan {
    let m = m as i128;
    StartSpan {
        start,
        maxdisc: Rational::new(hi as i128, m),
        mindisc: Rational::new(lo as i128, m),
        span: Rational::new((hi - lo) as i128, m),
    }
}

/// `maxdisc`, `mindisc` and their span from a fixed start.
pub fn span_from(table: &SelectionTable, interval: &BallInterval, start: u64) -> StartSpan {
    let hits = table.hits(interval);
    to_span(
        start,
        scaled_extremes(&hits, interval.len() as i64, start),
        table.m(),
    )
}

/// Spans from every start in one period, and their maximum.
pub fn discrepancy_report(table: &SelectionTable, interval: &BallInterval) -> DiscrepancyReport {
    let hits = table.hits(interval);
    let size = interval.len() as i64;
    let m = table.m();
    let per_start: Vec<StartSpan> = (0..m)
        .map(|s| to_span(s, scaled_extremes(&hits, size, s), m))
        .collect();
    let best = per_start.iter().fold(
        &per_start[0],
        |best, s| if s.span > best.span { s } else { best },
    );
    DiscrepancyReport {
        dev: best.span,
        argmax_start: best.start,
        per_start,
    }
}

/// `dev(A)` and the first start attaining it.
pub fn dev(table: &SelectionTable, interval: &BallInterval) -> (Rational, u64) {
    let hits = table.hits(interval);
    let size = interval.len() as i64;
    let m = table.m();
    let mut best = (-1i64, 0u64);
    for s in 0..m {
        let (hi, lo) = scaled_extremes(&hits, size, s);
        if hi - lo > best.0 {
            best = (hi - lo, s);
        }
    }
    (Rational::new(best.0 as i128, m as i128), best.1)
}

/// Deviation of one path of a profile.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PathDeviation {
    pub path: usize,
    pub balls: u64,
    /// Start used, or the maximizing start when taking the supremum.
    pub start: u64,
    pub maxdisc: Rational,
    pub mindisc: Rational,
    pub deviation: Rational,
    /// The bin holds no balls; the deviation is zero by convention.
    pub empty: bool,
}

/// Deviation of `path` from `start`, or the supremum over every start when
/// `start` is `None`.
pub fn path_deviation(
    method: SprayMethod,
    seed: SpraySeed,
    profile: &PathProfile,
    path: usize,
    start: Option<u64>,
) -> Result<PathDeviation, DiscrepancyError> {
    let ell = profile
        .ell()
        .ok_or(DiscrepancyError::NotPowerOfTwo(profile.m()))?;
    let table = SelectionTable::new(method, seed, ell);
    path_deviation_with(&table, profile, path, start)
}

/// [`path_deviation`] reusing a precomputed table.
pub fn path_deviation_with(
    table: &SelectionTable,
    profile: &PathProfile,
    path: usize,
    start: Option<u64>,
) -> Result<PathDeviation, DiscrepancyError> {
    if profile.m() != table.m() {
        return Err(DiscrepancyError::NotPowerOfTwo(profile.m()));
    }
    if path >= profile.n() {
        return Err(DiscrepancyError::PathOutOfRange {
            path,
            n: profile.n(),
        });
    }
    let balls = profile.count(path);
    let zero = Rational::from_integer(0);
    if balls == 0 {
        return Ok(PathDeviation {
            path,
            balls,
            start: start.unwrap_or(0),
            maxdisc: zero,
            mindisc: zero,
            deviation: zero,
            empty: true,
        });
    }
    let range = profile.ball_range(path);
    let interval = BallInterval {
        first: range.start,
        last: range.end - 1,
    };
    let span = match start {
        Some(s) => span_from(table, &interval, s),
        None => {
            let report = discrepancy_report(table, &interval);
            report.per_start[report.argmax_start as usize]
        }
    };
    Ok(PathDeviation {
        path,
        balls,
        start: span.start,
        maxdisc: span.maxdisc,
        mindisc: span.mindisc,
        deviation: span.span,
        empty: false,
    })
}

/// An aligned block: the `index`-th of the `2^level` blocks of size `2^(ℓ-level)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct DyadicInterval {
    pub level: u32,
    pub index: u64,
}

/// Fewest disjoint dyadic blocks exactly covering `first..=last`, taken
/// greedily as the largest aligned block at the left edge.
pub fn min_dyadic_cover(
    first: u64,
    last: u64,
    ell: u32,
) -> Result<Vec<DyadicInterval>, DiscrepancyError> {
    BallInterval::new(first, last, ell)?;
    let mut cover = Vec::new();
    let mut pos = first;
    while pos <= last {
        let remaining = last - pos + 1;
        let align = if pos == 0 {
            ell
        } else {
            pos.trailing_zeros().min(ell)
        };
        let fit = 63 - remaining.leading_zeros();
        let k = align.min(fit);
        cover.push(DyadicInterval {
            level: ell - k,
            index: pos >> k,
        });
        pos += 1u64 << k;
    }
    Ok(cover)
}

/// Proven upper bounds on the deviation of a ball interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DeviationBound {
    /// `ℓ` (doubled for `Shuffle2`).
    pub width_bound: Rational,
    /// `⌈log2(last - first)⌉ + 2` (doubled for `Shuffle2`); absent for a
    /// single ball.
    pub length_bound: Option<Rational>,
    /// `1 - 2^-e` (doubled for `Shuffle2`) for an aligned level-`e` block.
    pub dyadic_bound: Option<Rational>,
    /// The smallest of the above.
    pub tightest: Rational,
}

/// Bounds for `first..=last`. `Plain` is `Shuffle1` with seed `(0, 1)` and
/// shares its bounds.
pub fn bound_for(
    method: SprayMethod,
    first: u64,
    last: u64,
    ell: u32,
) -> Result<DeviationBound, DiscrepancyError> {
    let interval = BallInterval::new(first, last, ell)?;
    let factor = Rational::from_integer(match method {
        SprayMethod::Plain | SprayMethod::Shuffle1 => 1,
        SprayMethod::Shuffle2 => 2,
    });
    let width_bound = factor * Rational::from_integer(ell as i128);
    let length_bound = (last > first)
        .then(|| factor * Rational::from_integer(ceil_log2(last - first) as i128 + 2));
    let dyadic_bound = interval.dyadic_level(ell).map(|e| {
        let one = Rational::from_integer(1);
        factor * (one - Rational::new(1, 1i128 << e))
    });
    let tightest = [Some(width_bound), length_bound, dyadic_bound]
        .into_iter()
        .flatten()
        .min()
        .expect("width bound always present");
    Ok(DeviationBound {
        width_bound,
        length_bound,
        dyadic_bound,
        tightest,
    })
}

/// Bounds for the balls of `path`; `None` for an empty bin.
pub fn path_bound(
    method: SprayMethod,
    profile: &PathProfile,
    path: usize,
) -> Result<Option<DeviationBound>, DiscrepancyError> {
    let ell = profile
        .ell()
        .ok_or(DiscrepancyError::NotPowerOfTwo(profile.m()))?;
    if path >= profile.n() {
        return Err(DiscrepancyError::PathOutOfRange {
            path,
            n: profile.n(),
        });
    }
    let range = profile.ball_range(path);
    if range.is_empty() {
        return Ok(None);
    }
    bound_for(method, range.start, range.end - 1, ell).map(Some)
}

fn ceil_log2(x: u64) -> u32 {
    debug_assert!(x >= 1);
    if x <= 1 {
        0
    } else {
        64 - (x - 1).leading_zeros()
    }
}
