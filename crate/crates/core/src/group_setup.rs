//! Group construction over a public bulletin board.
//!
//! Users register by posting `(s_i, x_i)` with `x_i = H1(IP_i, id_i, r_i)`;
//! once registration closes, the board digest `y = H2(x_1 || ... || x_nu)` is
//! sliced per user and each user's group index comes from
//! `H3(y_slice, s_1, ..., s_nu)`. All three oracles are SHA-256 under
//! distinct domain tags. The module also evaluates the probability that an
//! adversary controlling `t` of `n_u` users lands `n/2` corrupted members in
//! one group, both exactly and through the closed-form bound.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use sha2::{Digest, Sha256};

use crate::algebra::ceil_log2;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum GroupSetupError {
    #[error("user id {0:?} is already registered")]
    DuplicateId(String),
    #[error("registration is closed")]
    RegistrationClosed,
    #[error("need at least {need} registered users, have {have}")]
    NotEnoughUsers { need: u32, have: u32 },
    #[error("invalid lemma parameters: {0}")]
    BadLemmaParams(&'static str),
    #[error("manager pool is empty")]
    EmptyPool,
    #[error("malformed board line {0}")]
    BadBoardLine(usize),
}

/// Digest width in bits for the registration oracle.
pub const DEFAULT_DIGEST_BITS: u32 = 256;

/// A user's registration record. Only `(s, x)` is posted; the randomizer `r`
/// stays with the user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Registration {
    pub id: String,
    pub ip: String,
    pub r: [u8; 32],
    pub s: [u8; 32],
    pub x: Vec<u8>,
}

/// One bulletin-board posting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Posting {
    pub index: u32,
    pub id: String,
    pub ip: String,
    pub s: Vec<u8>,
    pub x: Vec<u8>,
}

/// Append-only public bulletin board. Postings can never be rewritten or
/// removed; the derived digest changes exactly when the posting list does.
#[derive(Debug, Clone)]
pub struct BulletinBoard {
    postings: Vec<Posting>,
    closed: bool,
    digest_bits: u32,
}

impl Default for BulletinBoard {
    fn default() -> Self {
        BulletinBoard::new()
    }
}

fn h1_digest(ip: &str, id: &str, r: &[u8], digest_bits: u32) -> Vec<u8> {
    let mut h = Sha256::new();
    h.update(b"PWS/H1");
    h.update((ip.len() as u32).to_be_bytes());
    h.update(ip.as_bytes());
    h.update((id.len() as u32).to_be_bytes());
    h.update(id.as_bytes());
    h.update(r);
    let full = h.finalize();
    let bytes = (digest_bits as usize).div_ceil(8).min(full.len());
    full[..bytes].to_vec()
}

/// Counter-mode SHA-256 expansion to an arbitrary bit width.
fn expand_stream(tag: &[u8], input: &[u8], out_bits: u64) -> Vec<u8> {
    let out_bytes = out_bits.div_ceil(8) as usize;
    let mut out = Vec::with_capacity(out_bytes);
    let mut counter = 0u32;
    while out.len() < out_bytes {
        let mut h = Sha256::new();
        h.update(tag);
        h.update(counter.to_be_bytes());
        h.update(input);
        out.extend_from_slice(&h.finalize());
        counter += 1;
    }
    out.truncate(out_bytes);
    out
}

/// Read `width` bits starting at bit offset `offset` (MSB-first) as a u64.
fn read_bits(stream: &[u8], offset: u64, width: u64) -> u64 {
    debug_assert!(width <= 64);
    let mut v = 0u64;
    for k in 0..width {
        let bit_index = offset + k;
        let byte = stream[(bit_index / 8) as usize];
        let bit = (byte >> (7 - (bit_index % 8))) & 1;
        v = (v << 1) | u64::from(bit);
    }
    v
}

impl BulletinBoard {
    pub fn new() -> BulletinBoard {
        BulletinBoard::with_digest_bits(DEFAULT_DIGEST_BITS)
    }

    /// Board with a narrower registration-digest width (at most 256 bits).
    pub fn with_digest_bits(digest_bits: u32) -> BulletinBoard {
        BulletinBoard {
            postings: Vec::new(),
            closed: false,
            digest_bits: digest_bits.min(DEFAULT_DIGEST_BITS),
        }
    }

    pub fn postings(&self) -> &[Posting] {
        &self.postings
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Register a user: draw the randomizers, compute the digest, and append
    /// the posting. Deterministic in the caller's rng.
    pub fn register(
        &mut self,
        id: &str,
        ip: &str,
        rng: &mut impl Rng,
    ) -> Result<Registration, GroupSetupError> {
        if self.closed {
            return Err(GroupSetupError::RegistrationClosed);
        }
        if self.postings.iter().any(|p| p.id == id) {
            return Err(GroupSetupError::DuplicateId(id.to_string()));
        }
        let mut r = [0u8; 32];
        let mut s = [0u8; 32];
        rng.fill(&mut r);
        rng.fill(&mut s);
        let x = h1_digest(ip, id, &r, self.digest_bits);
        self.postings.push(Posting {
            index: self.postings.len() as u32,
            id: id.to_string(),
            ip: ip.to_string(),
            s: s.to_vec(),
            x: x.clone(),
        });
        Ok(Registration {
            id: id.to_string(),
            ip: ip.to_string(),
            r,
            s,
            x,
        })
    }

    /// Freeze the board; group assignment is derived from the frozen state.
    pub fn close_registration(&mut self) {
        self.closed = true;
    }

    /// The expanded board digest `y`, `n_u * ceil(log2 n_u)` bits wide.
    pub fn derive_y(&self) -> Vec<u8> {
        let n_u = self.postings.len() as u32;
        let mut input = Vec::new();
        for p in &self.postings {
            input.extend_from_slice(&p.x);
        }
        let slice_bits = ceil_log2(n_u).max(1);
        expand_stream(b"PWS/H2", &input, u64::from(n_u) * slice_bits)
    }

    /// Line-oriented persistence: `idx,id,ip,s_hex,x_hex` per posting.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for p in &self.postings {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                p.index,
                p.id,
                p.ip,
                hex::encode(&p.s),
                hex::encode(&p.x)
            ));
        }
        out
    }

    pub fn from_file_string(text: &str) -> Result<BulletinBoard, GroupSetupError> {
        let mut board = BulletinBoard::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(GroupSetupError::BadBoardLine(lineno));
            }
            let s = hex::decode(fields[3]).map_err(|_| GroupSetupError::BadBoardLine(lineno))?;
            let x = hex::decode(fields[4]).map_err(|_| GroupSetupError::BadBoardLine(lineno))?;
            board.postings.push(Posting {
                index: fields[0]
                    .parse()
                    .map_err(|_| GroupSetupError::BadBoardLine(lineno))?,
                id: fields[1].to_string(),
                ip: fields[2].to_string(),
                s,
                x,
            });
        }
        Ok(board)
    }
}

/// A user's group placement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupAssignment {
    pub id: String,
    pub group: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentOutcome {
    pub assignments: Vec<GroupAssignment>,
    /// Raw oracle outputs before occupancy capping, one per user.
    pub raw_indices: Vec<u32>,
    /// Users left over when `n` does not divide `n_u`: every group reached
    /// capacity before they could be placed.
    pub unplaced: Vec<String>,
    pub n_groups: u32,
}

fn h3_group_index(y_slice: u64, slice_bits: u64, s_list: &[&[u8]], n_groups: u32) -> u32 {
    if n_groups == 1 {
        return 0;
    }
    let mut input = Vec::new();
    input.extend_from_slice(&slice_bits.to_be_bytes());
    input.extend_from_slice(&y_slice.to_be_bytes());
    for s in s_list {
        input.extend_from_slice(s);
    }
    let index_bits = ceil_log2(n_groups);
    // Rejection-sample index_bits-wide chunks so indices are uniform over
    // [0, n_groups).
    let mut drawn = 0u64;
    loop {
        let stream = expand_stream(b"PWS/H3", &input, (drawn + 1) * 64 * index_bits);
        while drawn < (stream.len() as u64 * 8) / index_bits {
            let v = read_bits(&stream, drawn * index_bits, index_bits);
            drawn += 1;
            if (v as u32) < n_groups {
                return v as u32;
            }
        }
    }
}

/// Deterministically assign every registered user to a group of size `n`.
///
/// The raw index comes from the `H3` oracle; when the indexed group is
/// already full the user probes `j+1, j+2, ... (mod n_g)` until a group with
/// room is found, which keeps every group at exactly `n` members.
pub fn assign_groups(board: &BulletinBoard, n: u32) -> Result<AssignmentOutcome, GroupSetupError> {
    let n_u = board.postings().len() as u32;
    if n_u < n || n == 0 {
        return Err(GroupSetupError::NotEnoughUsers { need: n, have: n_u });
    }
    let n_groups = n_u / n;
    let y = board.derive_y();
    let slice_bits = ceil_log2(n_u).max(1);
    let s_list: Vec<&[u8]> = board.postings().iter().map(|p| p.s.as_slice()).collect();

    let mut occupancy = vec![0u32; n_groups as usize];
    let mut outcome = AssignmentOutcome {
        assignments: Vec::new(),
        raw_indices: Vec::new(),
        unplaced: Vec::new(),
        n_groups,
    };
    for (i, posting) in board.postings().iter().enumerate() {
        let slice = read_bits(&y, i as u64 * slice_bits, slice_bits);
        let raw = h3_group_index(slice, slice_bits, &s_list, n_groups);
        outcome.raw_indices.push(raw);
        let mut j = raw;
        let mut probes = 0;
        while occupancy[j as usize] >= n && probes < n_groups {
            j = (j + 1) % n_groups;
            probes += 1;
        }
        if probes == n_groups {
            outcome.unplaced.push(posting.id.clone());
            continue;
        }
        occupancy[j as usize] += 1;
        outcome.assignments.push(GroupAssignment {
            id: posting.id.clone(),
            group: j,
        });
    }
    Ok(outcome)
}

/// `id,group` CSV for an assignment outcome.
pub fn assignments_to_csv(outcome: &AssignmentOutcome) -> String {
    let mut out = String::from("id,group\n");
    for a in &outcome.assignments {
        out.push_str(&format!("{},{}\n", a.id, a.group));
    }
    out
}

fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut num = BigUint::one();
    let mut den = BigUint::one();
    for i in 0..k {
        num *= n - i;
        den *= i + 1;
    }
    num / den
}

fn check_lemma_params(n_u: u64, n: u64) -> Result<u64, GroupSetupError> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(GroupSetupError::BadLemmaParams(
            "group size must be even and >= 2",
        ));
    }
    if n > n_u {
        return Err(GroupSetupError::BadLemmaParams(
            "group larger than the user population",
        ));
    }
    let n_groups = n_u / n;
    if n_groups == 0 {
        return Err(GroupSetupError::BadLemmaParams("no full group fits"));
    }
    Ok(n_groups)
}

/// Exact probability that a designated group of size `n`, filled by a uniform
/// assignment of `n_u` users of whom `t` are corrupted, contains exactly
/// `n/2` corrupted members, targeted uniformly among the `n_g` groups:
/// `(1/n_g) * C(t, n/2) * C(n_u - t, n/2) / C(n_u, n)`.
pub fn malgrp_exact(n_u: u64, t: u64, n: u64) -> Result<BigRational, GroupSetupError> {
    let n_groups = check_lemma_params(n_u, n)?;
    if t > n_u {
        return Err(GroupSetupError::BadLemmaParams(
            "more corrupted than total users",
        ));
    }
    let half = n / 2;
    let num = binomial(t, half) * binomial(n_u - t, half);
    let den = binomial(n_u, n) * n_groups;
    Ok(BigRational::new(BigInt::from(num), BigInt::from(den)))
}

fn ratio_pow(base: &BigRational, exp: u32) -> BigRational {
    let mut acc = BigRational::one();
    for _ in 0..exp {
        acc *= base;
    }
    acc
}

/// Closed-form upper bound on the same probability:
/// `(2^n / n_g) * ((n_u - t) / t)^(n/2) * (t / n_u)^n`.
pub fn malgrp_bound(n_u: u64, t: u64, n: u64) -> Result<BigRational, GroupSetupError> {
    let n_groups = check_lemma_params(n_u, n)?;
    if t == 0 || t > n_u {
        return Err(GroupSetupError::BadLemmaParams("need 0 < t <= n_u"));
    }
    let two_n = BigRational::from_integer(BigInt::one() << n);
    let honest_ratio = ratio_pow(
        &BigRational::new(BigInt::from(n_u - t), BigInt::from(t)),
        (n / 2) as u32,
    );
    let corrupt_ratio = ratio_pow(
        &BigRational::new(BigInt::from(t), BigInt::from(n_u)),
        n as u32,
    );
    Ok(two_n / BigInt::from(n_groups) * honest_ratio * corrupt_ratio)
}

/// Convert a possibly extreme-magnitude rational to f64 without overflowing
/// the intermediate numerator/denominator conversions.
pub fn rational_to_f64(r: &BigRational) -> f64 {
    if r.is_zero() {
        return 0.0;
    }
    let num = r.numer();
    let den = r.denom();
    let shift = den.bits() as i64 + 64 - num.bits() as i64;
    let scaled = if shift >= 0 {
        (num.abs() << shift as u64) / den.abs()
    } else {
        num.abs() / (den.abs() << (-shift) as u64)
    };
    let sign = if r.is_negative() { -1.0 } else { 1.0 };
    sign * scaled.to_f64().unwrap_or(f64::INFINITY) * 2f64.powi(-shift as i32)
}

/// Deterministic leader election over the manager pool: the minimum id wins.
pub fn elect_leader(manager_ids: &[u32]) -> Result<u32, GroupSetupError> {
    manager_ids
        .iter()
        .copied()
        .min()
        .ok_or(GroupSetupError::EmptyPool)
}

/// One Monte Carlo trial for the grouping analysis: place `t` corrupted among
/// `n_u` users, carve out a uniform group of size `n`, and report whether it
/// contains exactly `n/2` corrupted members. Sampling a group this way
/// matches the marginal distribution of any single group in a uniform
/// partition.
pub fn malgrp_trial(n_u: u32, t: u32, n: u32, rng: &mut impl Rng) -> bool {
    debug_assert!(n.is_multiple_of(2) && n <= n_u && t <= n_u);
    // Partial Fisher-Yates: the first n slots form the sampled group.
    // Users 0..t are the corrupted ones.
    let mut pool: Vec<u32> = (0..n_u).collect();
    let mut corrupted_in_group = 0u32;
    for i in 0..n as usize {
        let j = rng.gen_range(i..n_u as usize);
        pool.swap(i, j);
        if pool[i] < t {
            corrupted_in_group += 1;
        }
    }
    corrupted_in_group == n / 2
}
