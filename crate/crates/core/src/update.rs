//! In-place profile updates that move balls between bins while keeping the
//! total `m` fixed.
//!
//! Four procedures are provided:
//!
//! 1. [`redistribute_single`]: take `e(j)` balls from one bin and spread
//!    them over all `n` bins.
//! 2. [`redistribute_all`]: take `e(i)` from several bins and spread the
//!    total over all bins.
//! 3. [`redistribute_to_untouched`]: take from the bins with `e(i) > 0` and
//!    spread only over the bins with `e(i) = 0`.
//! 4. [`redistribute_proportional`]: take from several bins and rescale
//!    every bin by `m / (m - e)`, giving the rounding slack to the untouched
//!    bins.
//!
//! Indivisible leftovers go out one ball at a time starting at the shared
//! [`ResidualCursor`], which persists across calls so that no bin is
//! favoured over a sequence of updates. In procedures 3 and 4 the cursor
//! still steps over bins that are not eligible for leftovers.

use serde::{Deserialize, Serialize};

use crate::profile::PathProfile;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum UpdateError {
    #[error("removal vector has {got} entries but the profile has {n} bins")]
    Dimension { n: usize, got: usize },
    #[error("cannot remove {requested} balls from bin {bin} holding {available}")]
    Infeasible {
        bin: usize,
        requested: u64,
        available: u64,
    },
    #[error("bin index {bin} is outside [0, {n})")]
    BinOutOfRange { bin: usize, n: usize },
    #[error("residual cursor {r} is outside [0, {n})")]
    CursorOutOfRange { r: usize, n: usize },
    #[error("no bin has e(i) > 0, nothing to remove")]
    NothingRemoved,
    #[error("every bin has e(i) > 0, nowhere to put the removed balls")]
    NoReceivers,
    #[error("removal takes every ball, proportional rescaling is undefined")]
    AllBallsRemoved,
    #[error("single-bin removal expects one non-zero entry, got {0}")]
    NotSingleBin(usize),
}

/// Persistent round-robin position for leftover balls.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResidualCursor {
    r: usize,
}

impl ResidualCursor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn at(r: usize) -> Self {
        Self { r }
    }

    pub fn position(&self) -> usize {
        self.r
    }

    fn check(&self, n: usize) -> Result<(), UpdateError> {
        if self.r < n {
            Ok(())
        } else {
            Err(UpdateError::CursorOutOfRange { r: self.r, n })
        }
    }

    fn advance(&mut self, n: usize) {
        self.r = (self.r + 1) % n;
    }
}

/// Number of balls to take out of each bin.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RemovalProfile(pub Vec<u64>);

impl RemovalProfile {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0; n])
    }

    /// `count` balls from `bin`, nothing elsewhere.
    pub fn single(n: usize, bin: usize, count: u64) -> Self {
        let mut e = vec![0; n];
        e[bin] = count;
        Self(e)
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }

    /// Bins with `e(i) > 0`.
    pub fn removed_from(&self) -> impl Iterator<Item = usize> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &e)| e > 0)
            .map(|(i, _)| i)
    }

    /// Bins with `e(i) = 0`.
    pub fn untouched(&self) -> impl Iterator<Item = usize> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &e)| e == 0)
            .map(|(i, _)| i)
    }

    fn check_against(&self, profile: &PathProfile) -> Result<(), UpdateError> {
        if self.0.len() != profile.n() {
            return Err(UpdateError::Dimension {
                n: profile.n(),
                got: self.0.len(),
            });
        }
        for (bin, (&e, &b)) in self.0.iter().zip(profile.counts()).enumerate() {
            if e > b {
                return Err(UpdateError::Infeasible {
                    bin,
                    requested: e,
                    available: b,
                });
            }
        }
        Ok(())
    }
}

/// Which update procedure to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Embodiment {
    Single,
    All,
    Untouched,
    Proportional,
}

impl Embodiment {
    pub fn from_number(k: u8) -> Option<Self> {
        match k {
            1 => Some(Embodiment::Single),
            2 => Some(Embodiment::All),
            3 => Some(Embodiment::Untouched),
            4 => Some(Embodiment::Proportional),
            _ => None,
        }
    }
}

/// Intermediate quantities of one update, kept for inspection and tests.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct UpdateSummary {
    /// Balls removed in total.
    pub removed: u64,
    /// Whole balls given to every receiving bin.
    pub per_bin: u64,
    /// Leftover balls handed out through the cursor.
    pub residual: u64,
    /// Sum of per-bin remainders divided by `m - e` (proportional only).
    pub remainder_quotient: Option<u64>,
}

/// Takes `count` balls from `bin` and spreads them over all bins, the source
/// bin included.
pub fn redistribute_single(
    profile: &mut PathProfile,
    cursor: &mut ResidualCursor,
    bin: usize,
    count: u64,
) -> Result<UpdateSummary, UpdateError> {
    let n = profile.n();
    if bin >= n {
        return Err(UpdateError::BinOutOfRange { bin, n });
    }
    redistribute_all(profile, cursor, &RemovalProfile::single(n, bin, count))
}

/// Takes `e(i)` from every bin and spreads the total evenly over all bins.
pub fn redistribute_all(
    profile: &mut PathProfile,
    cursor: &mut ResidualCursor,
    removal: &RemovalProfile,
) -> Result<UpdateSummary, UpdateError> {
    removal.check_against(profile)?;
    let n = profile.n();
    cursor.check(n)?;

    let e = removal.total();
    let x = e / n as u64;
    let y = e % n as u64;
    let mut b: Vec<u64> = profile
        .counts()
        .iter()
        .zip(removal.as_slice())
        .map(|(&b, &ei)| b - ei + x)
        .collect();
    for _ in 0..y {
        b[cursor.r] += 1;
        cursor.advance(n);
    }
    profile.set_counts(b);
    Ok(UpdateSummary {
        removed: e,
        per_bin: x,
        residual: y,
        remainder_quotient: None,
    })
}

/// Takes `e(i)` from the bins where it is positive and spreads the total
/// evenly over the bins where it is zero.
pub fn redistribute_to_untouched(
    profile: &mut PathProfile,
    cursor: &mut ResidualCursor,
    removal: &RemovalProfile,
) -> Result<UpdateSummary, UpdateError> {
    let receivers = check_split(profile, cursor, removal)?;
    let e = removal.total();
    let x = e / receivers;
    let y = e % receivers;

    let mut b: Vec<u64> = profile
        .counts()
        .iter()
        .zip(removal.as_slice())
        .map(|(&b, &ei)| if ei > 0 { b - ei } else { b + x })
        .collect();
    hand_out_to_untouched(&mut b, cursor, removal, y);
    profile.set_counts(b);
    Ok(UpdateSummary {
        removed: e,
        per_bin: x,
        residual: y,
        remainder_quotient: None,
    })
}

/// Takes `e(i)` from the bins where it is positive, rescales every bin's
/// remainder by `m / (m - e)`, and gives the rounding slack to the bins
/// where `e(i) = 0`.
pub fn redistribute_proportional(
    profile: &mut PathProfile,
    cursor: &mut ResidualCursor,
    removal: &RemovalProfile,
) -> Result<UpdateSummary, UpdateError> {
    let receivers = check_split(profile, cursor, removal)?;
    let m = profile.m() as u128;
    let e = removal.total() as u128;
    let kept = m - e;
    if kept == 0 {
        return Err(UpdateError::AllBallsRemoved);
    }

    let mut remainder_sum = 0u128;
    let mut b: Vec<u64> = profile
        .counts()
        .iter()
        .zip(removal.as_slice())
        .map(|(&b, &ei)| {
            let scaled = (b - ei) as u128 * m;
            remainder_sum += scaled % kept;
            (scaled / kept) as u64
        })
        .collect();

    // Σ (b(i) - e(i))·m = (m - e)·m, so the remainders sum to a multiple of m - e.
    assert_eq!(
        remainder_sum % kept,
        0,
        "remainder sum {remainder_sum} not divisible by {kept}"
    );
    let quotient = (remainder_sum / kept) as u64;
    let x = quotient / receivers;
    let y = quotient % receivers;
    for i in removal.untouched() {
        b[i] += x;
    }
    hand_out_to_untouched(&mut b, cursor, removal, y);
    profile.set_counts(b);
    Ok(UpdateSummary {
        removed: e as u64,
        per_bin: x,
        residual: y,
        remainder_quotient: Some(quotient),
    })
}

/// Runs the procedure selected by `which`.
pub fn apply(
    which: Embodiment,
    profile: &mut PathProfile,
    cursor: &mut ResidualCursor,
    removal: &RemovalProfile,
) -> Result<UpdateSummary, UpdateError> {
    match which {
        Embodiment::Single => {
            removal.check_against(profile)?;
            match removal.removed_from().collect::<Vec<_>>()[..] {
                [] => redistribute_all(profile, cursor, removal),
                [bin] => redistribute_single(profile, cursor, bin, removal.0[bin]),
                ref bins => Err(UpdateError::NotSingleBin(bins.len())),
            }
        }
        Embodiment::All => redistribute_all(profile, cursor, removal),
        Embodiment::Untouched => redistribute_to_untouched(profile, cursor, removal),
        Embodiment::Proportional => redistribute_proportional(profile, cursor, removal),
    }
}

/// Validates a removal for procedures 3 and 4 and returns the receiver count.
fn check_split(
    profile: &PathProfile,
    cursor: &ResidualCursor,
    removal: &RemovalProfile,
) -> Result<u64, UpdateError> {
    removal.check_against(profile)?;
    cursor.check(profile.n())?;
    if removal.removed_from().next().is_none() {
        return Err(UpdateError::NothingRemoved);
    }
    let receivers = removal.untouched().count() as u64;
    if receivers == 0 {
        return Err(UpdateError::NoReceivers);
    }
    Ok(receivers)
}

fn hand_out_to_untouched(
    b: &mut [u64],
    cursor: &mut ResidualCursor,
    removal: &RemovalProfile,
    mut y: u64,
) {
    let n = b.len();
    // y < number of receivers, so this visits at most 2n positions
    while y > 0 {
        if removal.0[cursor.r] == 0 {
            b[cursor.r] += 1;
            y -= 1;
        }
        cursor.advance(n);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> PathProfile {
        PathProfile::from_counts(vec![127, 400, 200, 173, 124]).unwrap()
    }

    #[test]
    fn single_even_split() {
        let mut p = reference();
        let mut r = ResidualCursor::new();
        let s = redistribute_single(&mut p, &mut r, 1, 100).unwrap();
        assert_eq!(p.counts(), &[147, 320, 220, 193, 144]);
        assert_eq!(r.position(), 0);
        assert_eq!((s.per_bin, s.residual), (20, 0));
    }

    #[test]
    fn single_with_residuals() {
        let mut p = reference();
        let mut r = ResidualCursor::new();
        let s = redistribute_single(&mut p, &mut r, 1, 7).unwrap();
        assert_eq!((s.per_bin, s.residual), (1, 2));
        assert_eq!(p.counts(), &[129, 395, 201, 174, 125]);
        assert_eq!(r.position(), 2);
    }

    #[test]
    fn single_zero_is_noop() {
        let mut p = reference();
        let mut r = ResidualCursor::at(3);
        redistribute_single(&mut p, &mut r, 2, 0).unwrap();
        assert_eq!(p, reference());
        assert_eq!(r.position(), 3);
    }

    #[test]
    fn single_errors() {
        let mut p = reference();
        let mut r = ResidualCursor::new();
        assert_eq!(
            redistribute_single(&mut p, &mut r, 4, 125),
            Err(UpdateError::Infeasible {
                bin: 4,
                requested: 125,
                available: 124
            })
        );
        assert_eq!(
            redistribute_single(&mut p, &mut r, 5, 1),
            Err(UpdateError::BinOutOfRange { bin: 5, n: 5 })
        );
        let mut bad = ResidualCursor::at(5);
        assert_eq!(
            redistribute_single(&mut p, &mut bad, 0, 1),
            Err(UpdateError::CursorOutOfRange { r: 5, n: 5 })
        );
        assert_eq!(p, reference());
    }

    #[test]
    fn all_generalizes_single() {
        let mut a = reference();
        let mut b = reference();
        let (mut ra, mut rb) = (ResidualCursor::at(2), ResidualCursor::at(2));
        redistribute_single(&mut a, &mut ra, 1, 13).unwrap();
        redistribute_all(&mut b, &mut rb, &RemovalProfile(vec![0, 13, 0, 0, 0])).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);

        let mut c = reference();
        let mut rc = ResidualCursor::new();
        redistribute_all(&mut c, &mut rc, &RemovalProfile(vec![0, 100, 0, 0, 0])).unwrap();
        assert_eq!(c.counts(), &[147, 320, 220, 193, 144]);
    }

    #[test]
    fn all_uniform_and_zero_removal() {
        let mut p = reference();
        let mut r = ResidualCursor::new();
        let s = redistribute_all(&mut p, &mut r, &RemovalProfile(vec![1; 5])).unwrap();
        assert_eq!((s.per_bin, s.residual), (1, 0));
        assert_eq!(p, reference());
        redistribute_all(&mut p, &mut r, &RemovalProfile::zeros(5)).unwrap();
        assert_eq!(p, reference());
        assert_eq!(r.position(), 0);
        assert_eq!(
            redistribute_all(&mut p, &mut r, &RemovalProfile(vec![0; 4])),
            Err(UpdateError::Dimension { n: 5, got: 4 })
        );
    }

    #[test]
    fn untouched_divisible() {
        let mut p = reference();
        let mut r = ResidualCursor::new();
        let s = redistribute_to_untouched(&mut p, &mut r, &RemovalProfile(vec![4, 0, 0, 0, 0]))
            .unwrap();
        assert_eq!((s.per_bin, s.residual), (1, 0));
        assert_eq!(p.counts(), &[123, 401, 201, 174, 125]);
        assert_eq!(r.position(), 0);
    }

    #[test]
    fn untouched_cursor_skips_sources() {
        let mut p = reference();
        let mut r = ResidualCursor::new();
        let s = redistribute_to_untouched(&mut p, &mut r, &RemovalProfile(vec![6, 0, 0, 0, 0]))
            .unwrap();
        assert_eq!((s.per_bin, s.residual), (1, 2));
        assert_eq!(p.counts(), &[121, 402, 202, 174, 125]);
        assert_eq!(r.position(), 3);
    }

    #[test]
    fn untouched_pure_transfer() {
        let mut p = PathProfile::from_counts(vec![10, 6]).unwrap();
        let mut r = ResidualCursor::new();
        redistribute_to_untouched(&mut p, &mut r, &RemovalProfile(vec![0, 6])).unwrap();
        assert_eq!(p.counts(), &[16, 0]);
    }

    #[test]
    fn untouched_preconditions() {
        let mut p = reference();
        let mut r = ResidualCursor::new();
        assert_eq!(
            redistribute_to_untouched(&mut p, &mut r, &RemovalProfile::zeros(5)),
            Err(UpdateError::NothingRemoved)
        );
        assert_eq!(
            redistribute_to_untouched(&mut p, &mut r, &RemovalProfile(vec![1; 5])),
            Err(UpdateError::NoReceivers)
        );
    }

    #[test]
    fn proportional_two_bins() {
        let mut p = PathProfile::from_counts(vec![8, 8]).unwrap();
        let mut r = ResidualCursor::new();
        let s = redistribute_proportional(&mut p, &mut r, &RemovalProfile(vec![4, 0])).unwrap();
        assert_eq!(s.remainder_quotient, Some(1));
        assert_eq!((s.per_bin, s.residual), (1, 0));
        assert_eq!(p.counts(), &[5, 11]);
    }

    #[test]
    fn proportional_preconditions() {
        let mut p = PathProfile::from_counts(vec![8, 8]).unwrap();
        let mut r = ResidualCursor::new();
        assert_eq!(
            redistribute_proportional(&mut p, &mut r, &RemovalProfile(vec![0, 0])),
            Err(UpdateError::NothingRemoved)
        );
        assert_eq!(
            redistribute_proportional(&mut p, &mut r, &RemovalProfile(vec![1, 1])),
            Err(UpdateError::NoReceivers)
        );
        let mut q = PathProfile::from_counts(vec![16, 0]).unwrap();
        assert_eq!(
            redistribute_proportional(&mut q, &mut r, &RemovalProfile(vec![16, 0])),
            Err(UpdateError::AllBallsRemoved)
        );
    }

    #[test]
    fn apply_dispatches() {
        let mut p = reference();
        let mut r = ResidualCursor::new();
        apply(
            Embodiment::Single,
            &mut p,
            &mut r,
            &RemovalProfile(vec![0, 7, 0, 0, 0]),
        )
        .unwrap();
        assert_eq!(p.counts(), &[129, 395, 201, 174, 125]);
        assert!(apply(
            Embodiment::Single,
            &mut p,
            &mut r,
            &RemovalProfile(vec![1, 1, 0, 0, 0])
        )
        .is_err());
        assert_eq!(Embodiment::from_number(4), Some(Embodiment::Proportional));
        assert_eq!(Embodiment::from_number(5), None);
    }
}
