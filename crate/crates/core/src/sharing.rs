//! Shamir sharing of query terms over the prime field `Z_qt`, with the
//! padded-share encoding used to regroup shuffled shares.
//!
//! A query term is the constant coefficient of a uniformly random polynomial
//! of degree `n - 1`, evaluated at the public points `1..n`; all `n` shares
//! are needed to interpolate it back. Each share value is tagged with the
//! owner's random padding `alpha` (`2 * ceil(log2 n)` bits) so that the
//! manager can collect shares of the same term after shuffling without
//! learning whose term it is. Tags that collide across users poison their
//! buckets and both terms are dropped.

use crate::algebra::{mod_inverse, SharingField};
use crate::metrics::OpCounters;
use num_bigint::{BigUint, RandBigInt};
use num_traits::Zero;
use rand::Rng;
use std::collections::BTreeMap;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SharingError {
    #[error("query term is not a field element")]
    TermOutOfRange,
    #[error("padding tag needs more than {0} bits")]
    PaddingTooWide(u64),
    #[error("packed value has more bits than a padded share can")]
    PackedTooWide,
    #[error("share value is not a field element; share is malformed")]
    MalformedShare,
    #[error("duplicate evaluation point {0}")]
    DuplicatePoint(u32),
    #[error("cannot reconstruct from an empty bucket")]
    EmptyBucket,
}

/// A share: the polynomial evaluated at the public point `x`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharePoint {
    pub x: u32,
    pub v: BigUint,
}

/// A share value together with its padding tag, before packing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaddedShare {
    pub v: BigUint,
    pub alpha: u64,
}

impl PaddedShare {
    /// Pack as `v || alpha`: the share value shifted left by the padding
    /// width, OR'd with the tag.
    pub fn packed(&self, field: &SharingField) -> BigUint {
        (&self.v << field.padding_bits()) | BigUint::from(self.alpha)
    }
}

/// The sharing polynomial `R(x) = q + r_1 x + ... + r_{n-1} x^{n-1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharePolynomial {
    pub constant: BigUint,
    pub coefficients: Vec<BigUint>,
}

impl SharePolynomial {
    /// Uniform polynomial of degree `n - 1` with the given constant term.
    /// Every coefficient, including the leading one, may be zero.
    pub fn random(
        term: &BigUint,
        n: u32,
        field: &SharingField,
        rng: &mut impl Rng,
    ) -> Result<SharePolynomial, SharingError> {
        if *term >= field.q_tilde {
            return Err(SharingError::TermOutOfRange);
        }
        let coefficients = (1..n)
            .map(|_| rng.gen_biguint_below(&field.q_tilde))
            .collect();
        Ok(SharePolynomial {
            constant: term.clone(),
            coefficients,
        })
    }

    /// Horner evaluation at `x`, tallying one field multiplication per
    /// coefficient step.
    pub fn evaluate(&self, x: u32, field: &SharingField, counters: &mut OpCounters) -> BigUint {
        let q = &field.q_tilde;
        let x = BigUint::from(x) % q;
        let mut acc = BigUint::zero();
        for c in self.coefficients.iter().rev() {
            acc = (acc * &x + c) % q;
            counters.tally_mul(1);
        }
        (acc * &x + &self.constant) % q
    }
}

/// Split `term` into `n` shares, evaluated at the public points `1..n`.
pub fn share(
    term: &BigUint,
    n: u32,
    field: &SharingField,
    rng: &mut impl Rng,
    counters: &mut OpCounters,
) -> Result<Vec<SharePoint>, SharingError> {
    let poly = SharePolynomial::random(term, n, field, rng)?;
    Ok((1..=n)
        .map(|x| SharePoint {
            x,
            v: poly.evaluate(x, field, counters),
        })
        .collect())
}

/// Attach the same padding tag to every share of one term.
pub fn pad(
    points: &[SharePoint],
    alpha: u64,
    field: &SharingField,
) -> Result<Vec<PaddedShare>, SharingError> {
    let width = field.padding_bits();
    if width < 64 && alpha >> width != 0 {
        return Err(SharingError::PaddingTooWide(width));
    }
    Ok(points
        .iter()
        .map(|p| PaddedShare {
            v: p.v.clone(),
            alpha,
        })
        .collect())
}

/// Split a packed integer back into `(v, alpha)`. A value part outside the
/// field signals a malformed share.
pub fn unpad(packed: &BigUint, field: &SharingField) -> Result<(BigUint, u64), SharingError> {
    let width = field.padding_bits();
    if packed.bits() > field.q_tilde.bits() + width {
        return Err(SharingError::PackedTooWide);
    }
    let mask = (BigUint::from(1u32) << width) - 1u32;
    let alpha = u64::try_from(&(packed & &mask)).expect("tag fits in 64 bits");
    let v = packed >> width;
    if v >= field.q_tilde {
        return Err(SharingError::MalformedShare);
    }
    Ok((v, alpha))
}

/// A set of shares carrying the same padding tag, ready for reconstruction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bucket {
    pub alpha: u64,
    pub points: Vec<SharePoint>,
}

/// Why a padding tag's entries were discarded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    /// More entries than one user produces; two source terms collided on the
    /// same tag and both are lost.
    Collision,
    /// An entry failed to parse as a field element.
    Malformed,
    /// Fewer than `n` entries or missing evaluation points.
    Incomplete,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DroppedTag {
    pub alpha: u64,
    pub entries: u32,
    pub reason: DropReason,
}

impl DroppedTag {
    /// Number of source terms lost with this tag.
    pub fn terms_lost(&self, n: u32) -> u32 {
        self.entries.div_ceil(n).max(1)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Grouping {
    /// Valid buckets in ascending tag order.
    pub buckets: Vec<Bucket>,
    pub dropped: Vec<DroppedTag>,
}

/// Group decrypted matrix entries by padding tag. Each entry carries the
/// column index `j` it was decrypted from, which is the evaluation point of
/// the share it contains. A bucket is usable only if it holds exactly `n`
/// well-formed entries covering the points `1..n`; everything else is
/// reported as dropped.
pub fn group_by_padding(entries: &[(u32, BigUint)], field: &SharingField) -> Grouping {
    let n = field.n;
    let mut by_tag: BTreeMap<u64, (Vec<SharePoint>, bool)> = BTreeMap::new();
    for (column, packed) in entries {
        match unpad(packed, field) {
            Ok((v, alpha)) => {
                let slot = by_tag.entry(alpha).or_default();
                slot.0.push(SharePoint { x: *column, v });
            }
            Err(_) => {
                // The tag bits are still readable; mark that tag poisoned.
                let width = field.padding_bits();
                let mask = (BigUint::from(1u32) << width) - 1u32;
                let alpha = u64::try_from(&(packed & &mask)).unwrap_or(0);
                let slot = by_tag.entry(alpha).or_default();
                slot.0.push(SharePoint {
                    x: *column,
                    v: BigUint::zero(),
                });
                slot.1 = true;
            }
        }
    }

    let mut grouping = Grouping::default();
    for (alpha, (points, malformed)) in by_tag {
        let entries = points.len() as u32;
        if malformed {
            grouping.dropped.push(DroppedTag {
                alpha,
                entries,
                reason: DropReason::Malformed,
            });
            continue;
        }
        if entries > n {
            grouping.dropped.push(DroppedTag {
                alpha,
                entries,
                reason: DropReason::Collision,
            });
            continue;
        }
        let mut seen = vec![false; n as usize];
        let complete = entries == n
            && points.iter().all(|p| {
                let ok = (1..=n).contains(&p.x) && !seen[(p.x - 1) as usize];
                if ok {
                    seen[(p.x - 1) as usize] = true;
                }
                ok
            });
        if complete {
            grouping.buckets.push(Bucket { alpha, points });
        } else {
            grouping.dropped.push(DroppedTag {
                alpha,
                entries,
                reason: DropReason::Incomplete,
            });
        }
    }
    grouping
}

/// Lagrange interpolation at `x = 0` over `Z_qt`: recovers the constant term
/// from one share per evaluation point.
pub fn reconstruct(
    points: &[SharePoint],
    field: &SharingField,
    counters: &mut OpCounters,
) -> Result<BigUint, SharingError> {
    if points.is_empty() {
        return Err(SharingError::EmptyBucket);
    }
    let q = &field.q_tilde;
    let mut seen = std::collections::BTreeSet::new();
    for p in points {
        if !seen.insert(p.x) {
            return Err(SharingError::DuplicatePoint(p.x));
        }
    }

    let mut acc = BigUint::zero();
    for (j, pj) in points.iter().enumerate() {
        let xj = BigUint::from(pj.x) % q;
        let mut num = BigUint::from(1u32);
        let mut den = BigUint::from(1u32);
        for (m, pm) in points.iter().enumerate() {
            if m == j {
                continue;
            }
            let xm = BigUint::from(pm.x) % q;
            num = num * &xm % q;
            den = den * ((&xm + q - &xj) % q) % q;
            counters.tally_mul(2);
        }
        let coeff = num * mod_inverse(&den, q) % q;
        acc = (acc + coeff * &pj.v) % q;
        counters.tally_mul(2);
    }
    Ok(acc)
}
