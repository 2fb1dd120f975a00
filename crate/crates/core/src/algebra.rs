//! Prime-order subgroup arithmetic and parameter generation.
//!
//! All ciphertext arithmetic happens in `G_q`, the order-`q` subgroup of
//! `Z_p^*` for a safe prime `p = 2q + 1`. With a safe prime, `G_q` is exactly
//! the set of quadratic residues mod `p`, which gives an injective encoding of
//! the integers `[1, q]` into the group. Shamir sharing runs over a companion
//! field `Z_qt` sized so that a share value plus its padding tag packs into
//! that encodable range.

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};
use std::fmt;
use std::sync::OnceLock;

/// Errors raised by parameter generation and group-element handling.
#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum AlgebraError {
    #[error("modulus bit length {0} is too small (need at least 5)")]
    BitsTooSmall(u64),
    #[error("group size must be at least 2, got {0}")]
    GroupTooSmall(u32),
    #[error("padding needs {padding} bits but the subgroup order only has {available} available")]
    FieldConstraint { padding: u64, available: u64 },
    #[error("value is not a member of the order-q subgroup")]
    NotInSubgroup,
    #[error("value {0} is outside the encodable range [1, q]")]
    EncodeRange(BigUint),
    #[error("exponent is not in [0, q-1]")]
    ExponentRange,
}

/// An element of the order-`q` subgroup of `Z_p^*`.
///
/// Constructed through [`GroupParams::element`] (membership-checked) or by the
/// group operations, which are closed.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupElement(BigUint);

impl GroupElement {
    pub fn value(&self) -> &BigUint {
        &self.0
    }

    /// The group identity.
    pub fn one() -> GroupElement {
        GroupElement(BigUint::one())
    }

    pub(crate) fn unchecked(value: BigUint) -> GroupElement {
        GroupElement(value)
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// An exponent in `[0, q-1]`; secret keys and randomizers live here.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Exponent(BigUint);

impl Exponent {
    pub fn value(&self) -> &BigUint {
        &self.0
    }

    pub fn zero() -> Exponent {
        Exponent(BigUint::zero())
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub(crate) fn unchecked(value: BigUint) -> Exponent {
        Exponent(value)
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The public group description `(p, q, g)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupParams {
    /// Safe prime modulus.
    pub p: BigUint,
    /// Prime order of the subgroup, `q = (p - 1) / 2`.
    pub q: BigUint,
    /// Generator of the order-`q` subgroup.
    pub g: GroupElement,
}

/// The prime field `Z_qt` that Shamir sharing runs over, together with the
/// group size `n` it was sized for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharingField {
    /// Prime order of the sharing field.
    pub q_tilde: BigUint,
    /// Group size the field was sized for.
    pub n: u32,
}

impl SharingField {
    /// Width of the per-user padding tag in bits: `2 * ceil(log2 n)`.
    pub fn padding_bits(&self) -> u64 {
        2 * ceil_log2(self.n)
    }

    /// A packed share plus the encode offset must land inside `[1, q]`.
    pub fn is_compatible(&self, params: &GroupParams) -> bool {
        (&self.q_tilde << self.padding_bits()) <= params.q
    }
}

/// `ceil(log2 n)` for `n >= 1`.
pub fn ceil_log2(n: u32) -> u64 {
    if n <= 1 {
        0
    } else {
        u64::from(u32::BITS - (n - 1).leading_zeros())
    }
}

impl GroupParams {
    /// Number of bits of the modulus, i.e. `ceil(log2 p)`.
    pub fn bits_p(&self) -> u64 {
        self.p.bits()
    }

    /// Fixed byte width used when serializing group elements.
    pub fn element_width(&self) -> usize {
        self.bits_p().div_ceil(8) as usize
    }

    /// Membership test: `v^q == 1 (mod p)` and `0 < v < p`.
    pub fn is_member(&self, v: &BigUint) -> bool {
        !v.is_zero() && *v < self.p && v.modpow(&self.q, &self.p).is_one()
    }

    /// Checked construction of a group element.
    pub fn element(&self, v: BigUint) -> Result<GroupElement, AlgebraError> {
        if self.is_member(&v) {
            Ok(GroupElement(v))
        } else {
            Err(AlgebraError::NotInSubgroup)
        }
    }

    /// Checked construction of an exponent in `[0, q-1]`.
    pub fn exponent(&self, v: BigUint) -> Result<Exponent, AlgebraError> {
        if v < self.q {
            Ok(Exponent(v))
        } else {
            Err(AlgebraError::ExponentRange)
        }
    }

    pub fn mul(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        GroupElement(&a.0 * &b.0 % &self.p)
    }

    pub fn pow(&self, base: &GroupElement, e: &Exponent) -> GroupElement {
        GroupElement(base.0.modpow(&e.0, &self.p))
    }

    /// Multiplicative inverse in the group.
    pub fn inv(&self, a: &GroupElement) -> GroupElement {
        GroupElement(mod_inverse(&a.0, &self.p))
    }

    /// Uniform exponent in `[0, q-1]`.
    pub fn random_exponent(&self, rng: &mut impl Rng) -> Exponent {
        Exponent(rng.gen_biguint_below(&self.q))
    }

    /// Uniform exponent in `[1, q-1]`, i.e. a sample from `Z_q^*`.
    pub fn random_nonzero_exponent(&self, rng: &mut impl Rng) -> Exponent {
        let upper = &self.q - 1u32;
        Exponent(rng.gen_biguint_below(&upper) + 1u32)
    }

    pub fn exp_add(&self, a: &Exponent, b: &Exponent) -> Exponent {
        Exponent((&a.0 + &b.0) % &self.q)
    }

    pub fn exp_sub(&self, a: &Exponent, b: &Exponent) -> Exponent {
        Exponent((&a.0 + &self.q - &b.0) % &self.q)
    }

    pub fn exp_mul(&self, a: &Exponent, b: &Exponent) -> Exponent {
        Exponent(&a.0 * &b.0 % &self.q)
    }

    /// Big-endian serialization padded to the fixed element width.
    pub fn element_bytes(&self, e: &GroupElement) -> Vec<u8> {
        int_to_fixed_bytes(&e.0, self.element_width())
    }
}

/// Modular inverse by extended Euclid; panics if not invertible (the moduli
/// in this crate are prime).
pub(crate) fn mod_inverse(a: &BigUint, m: &BigUint) -> BigUint {
    use num_bigint::BigInt;
    let a = BigInt::from(a.clone());
    let m_int = BigInt::from(m.clone());
    let ext = a.extended_gcd(&m_int);
    assert!(ext.gcd.is_one(), "value not invertible");
    let mut x = ext.x % &m_int;
    if x.sign() == num_bigint::Sign::Minus {
        x += &m_int;
    }
    x.to_biguint().expect("reduced residue is non-negative")
}

pub(crate) fn int_to_fixed_bytes(v: &BigUint, width: usize) -> Vec<u8> {
    let raw = v.to_bytes_be();
    assert!(raw.len() <= width, "value does not fit the fixed width");
    let mut out = vec![0u8; width - raw.len()];
    out.extend_from_slice(&raw);
    out
}

// ---------------------------------------------------------------------------
// Primality
// ---------------------------------------------------------------------------

const SIEVE_LIMIT: u64 = 1 << 16;

fn small_primes() -> &'static [u64] {
    static PRIMES: OnceLock<Vec<u64>> = OnceLock::new();
    PRIMES.get_or_init(|| {
        let limit = SIEVE_LIMIT as usize;
        let mut composite = vec![false; limit];
        let mut primes = Vec::new();
        for i in 2..limit {
            if !composite[i] {
                primes.push(i as u64);
                let mut j = i * i;
                while j < limit {
                    composite[j] = true;
                    j += i;
                }
            }
        }
        primes
    })
}

/// Fixed number of Miller-Rabin rounds; bases are the first 64 primes so the
/// test is deterministic.
const MILLER_RABIN_ROUNDS: usize = 64;

fn miller_rabin_base(n: &BigUint, base: u64, d: &BigUint, s: u64) -> bool {
    let n_minus_1 = n - 1u32;
    let b = BigUint::from(base) % n;
    if b.is_zero() {
        return true;
    }
    let mut x = b.modpow(d, n);
    if x.is_one() || x == n_minus_1 {
        return true;
    }
    for _ in 1..s {
        x = &x * &x % n;
        if x == n_minus_1 {
            return true;
        }
    }
    false
}

/// Deterministic primality test: trial division by the sieved primes, then
/// 64 Miller-Rabin rounds with fixed prime bases.
pub fn is_prime(n: &BigUint) -> bool {
    if n.bits() <= 16 {
        let v = u64::try_from(n).expect("fits in u64");
        return v >= 2 && small_primes().binary_search(&v).is_ok();
    }
    for &p in small_primes() {
        if (n % p).is_zero() {
            return false;
        }
    }
    // n - 1 = d * 2^s with d odd
    let n_minus_1 = n - 1u32;
    let s = n_minus_1.trailing_zeros().expect("n > 1 is odd here");
    let d = &n_minus_1 >> s;
    small_primes()
        .iter()
        .take(MILLER_RABIN_ROUNDS)
        .all(|&b| miller_rabin_base(n, b, &d, s))
}

/// Largest prime `<= upper`, or `None` if there is none.
pub fn largest_prime_at_most(upper: &BigUint) -> Option<BigUint> {
    let two = BigUint::from(2u32);
    if *upper < two {
        return None;
    }
    if *upper == two {
        return Some(two);
    }
    // Scan odd candidates downward.
    let mut candidate = if upper.is_even() {
        upper - 1u32
    } else {
        upper.clone()
    };
    while candidate >= two {
        if is_prime(&candidate) {
            return Some(candidate);
        }
        if candidate == BigUint::from(3u32) {
            return Some(two);
        }
        candidate -= 2u32;
    }
    Some(two)
}

/// Search window for the sieved safe-prime scan, in odd steps.
const SEARCH_WINDOW: usize = 1 << 17;

/// Deterministic safe-prime search: draw a random odd starting point of the
/// right size from `rng`, sieve a window for candidates `q` where neither `q`
/// nor `2q + 1` has a small factor, and confirm survivors with Miller-Rabin.
fn find_safe_prime(rng: &mut ChaCha20Rng, bits_p: u64) -> (BigUint, BigUint) {
    let bits_q = bits_p - 1;
    let one = BigUint::one();
    loop {
        // Random odd q0 with the top bit set so p = 2q + 1 has exactly bits_p bits.
        let mut q0 = rng.gen_biguint(bits_q);
        q0.set_bit(bits_q - 1, true);
        q0.set_bit(0, true);

        if bits_q <= 20 {
            // Tiny parameters: plain scan, trial division is exact here.
            let limit = &one << bits_q;
            let mut q = q0;
            while q < limit {
                let p = (&q << 1u32) + 1u32;
                if is_prime(&q) && is_prime(&p) {
                    return (p, q);
                }
                q += 2u32;
            }
            continue;
        }

        // Mark window offsets where q = q0 + 2k or p = 2q + 1 is divisible by
        // a sieve prime.
        let mut blocked = vec![false; SEARCH_WINDOW];
        for &pr in small_primes().iter().skip(1) {
            let r = u64::try_from(&q0 % pr).expect("residue fits");
            let inv2 = pr.div_ceil(2); // 2^{-1} mod pr for odd pr
                                       // q0 + 2k = 0 (mod pr)
            let k_q = ((pr - r) % pr * inv2) % pr;
            // 2*q0 + 4k + 1 = 0 (mod pr)
            let r_p = (2 * r + 1) % pr;
            let inv4 = (inv2 * inv2) % pr;
            let k_p = ((pr - r_p) % pr * inv4) % pr;
            let mut k = k_q as usize;
            while k < SEARCH_WINDOW {
                blocked[k] = true;
                k += pr as usize;
            }
            let mut k = k_p as usize;
            while k < SEARCH_WINDOW {
                blocked[k] = true;
                k += pr as usize;
            }
        }

        for (k, &blocked_k) in blocked.iter().enumerate() {
            if blocked_k {
                continue;
            }
            let q = &q0 + BigUint::from(2 * k as u64);
            if q.bits() != bits_q {
                break;
            }
            if !is_prime(&q) {
                continue;
            }
            let p = (&q << 1u32) + 1u32;
            if is_prime(&p) {
                return (p, q);
            }
        }
        // Window exhausted; redraw.
    }
}

fn generation_rng(bits_p: u64, n: u32, seed: &[u8]) -> ChaCha20Rng {
    let mut h = Sha256::new();
    h.update(b"PWS/paramgen");
    h.update(bits_p.to_be_bytes());
    h.update(n.to_be_bytes());
    h.update((seed.len() as u64).to_be_bytes());
    h.update(seed);
    ChaCha20Rng::from_seed(h.finalize().into())
}

/// Generate the group and sharing-field parameters for a group of `n` users.
///
/// `p` is a safe prime of exactly `bits_p` bits, `q = (p - 1) / 2`, and `g`
/// generates the order-`q` subgroup. The sharing field order `q_tilde` is the
/// largest prime such that every packed share (a field element shifted left by
/// the padding width, plus the encode offset) still lands in the encodable
/// range `[1, q]`; at practical sizes this gives
/// `ceil(log2 q_tilde) = ceil(log2 q) - 2*ceil(log2 n)` exactly. Generation is
/// deterministic in `(bits_p, n, seed)`.
pub fn generate_params(
    bits_p: u64,
    n: u32,
    seed: &[u8],
) -> Result<(GroupParams, SharingField), AlgebraError> {
    if bits_p < 5 {
        return Err(AlgebraError::BitsTooSmall(bits_p));
    }
    if n < 2 {
        return Err(AlgebraError::GroupTooSmall(n));
    }
    let padding = 2 * ceil_log2(n);
    if padding >= bits_p - 1 {
        return Err(AlgebraError::FieldConstraint {
            padding,
            available: bits_p - 1,
        });
    }

    let mut rng = generation_rng(bits_p, n, seed);
    let (p, q) = find_safe_prime(&mut rng, bits_p);

    // 4 = 2^2 is a quadratic residue != 1, so it generates the prime-order
    // subgroup of a safe-prime group.
    let g = GroupElement(BigUint::from(4u32) % &p);

    let upper = &q >> padding;
    let q_tilde = largest_prime_at_most(&upper).ok_or(AlgebraError::FieldConstraint {
        padding,
        available: bits_p - 1,
    })?;

    let params = GroupParams { p, q, g };
    let field = SharingField { q_tilde, n };
    debug_assert!(field.is_compatible(&params));
    Ok((params, field))
}

/// Canonical text form of a parameter set: decimal fields in fixed order with
/// no whitespace.
pub fn params_to_text(params: &GroupParams, field: &SharingField) -> String {
    format!(
        "p={};q={};g={};qt={};n={}",
        params.p, params.q, params.g, field.q_tilde, field.n
    )
}

/// Injective encoding of `m in [1, q]` into the subgroup: `m` itself if it is
/// a quadratic residue mod `p`, else `p - m`.
pub fn encode_to_group(params: &GroupParams, m: &BigUint) -> Result<GroupElement, AlgebraError> {
    if m.is_zero() || *m > params.q {
        return Err(AlgebraError::EncodeRange(m.clone()));
    }
    // Euler criterion: m^q = 1 (mod p) exactly for quadratic residues.
    if m.modpow(&params.q, &params.p).is_one() {
        Ok(GroupElement(m.clone()))
    } else {
        Ok(GroupElement(&params.p - m))
    }
}

/// Inverse of [`encode_to_group`]: the representative of `e`'s residue class
/// that lies in `[1, q]`.
pub fn decode_from_group(params: &GroupParams, e: &GroupElement) -> Result<BigUint, AlgebraError> {
    if !params.is_member(&e.0) {
        return Err(AlgebraError::NotInSubgroup);
    }
    Ok(decode_unchecked(params, e))
}

/// Decode without the membership check, for elements produced by the group
/// operations themselves.
pub(crate) fn decode_unchecked(params: &GroupParams, e: &GroupElement) -> BigUint {
    if e.0 <= params.q {
        e.0.clone()
    } else {
        &params.p - &e.0
    }
}
