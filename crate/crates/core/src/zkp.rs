//! Non-interactive zero-knowledge proofs: Schnorr discrete-log proofs,
//! plaintext-knowledge proofs for El Gamal ciphertexts, and a cut-and-choose
//! shuffle argument. Challenges come from SHA-256 over a byte-exact
//! transcript, so every proof is a single message.
//!
//! Proof work is never charged to the protocol cost counters; these functions
//! use scratch counters internally.

use crate::algebra::{Exponent, GroupElement, GroupParams};
use crate::elgamal::{rerandomize, Ciphertext, PublicKey};
use crate::metrics::OpCounters;
use num_bigint::BigUint;
use rand::seq::SliceRandom;
use rand::Rng;
use sha2::{Digest, Sha256};

/// Domain-separation tag for discrete-log proofs.
pub const TAG_DL: &[u8] = b"PWS/DL";
/// Domain-separation tag for plaintext-knowledge proofs.
pub const TAG_PK: &[u8] = b"PWS/PK";
/// Domain-separation tag for shuffle proofs.
pub const TAG_CS: &[u8] = b"PWS/CS";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ZkpError {
    #[error("witness does not satisfy the claimed statement")]
    InconsistentWitness,
    #[error("input and output vectors must have equal nonzero length")]
    BadVectorLength,
}

/// Byte-exact Fiat-Shamir transcript.
///
/// Layout: tag bytes, then for each appended section a 4-byte big-endian
/// element count followed by the elements as fixed-width big-endian integers
/// of the group's element width. The challenge is a deterministic function of
/// everything appended before it.
#[derive(Debug, Clone)]
pub struct Transcript {
    bytes: Vec<u8>,
    width: usize,
}

impl Transcript {
    pub fn new(tag: &[u8], params: &GroupParams) -> Transcript {
        Transcript {
            bytes: tag.to_vec(),
            width: params.element_width(),
        }
    }

    pub fn append_elements(&mut self, elems: &[&GroupElement]) {
        self.bytes
            .extend_from_slice(&(elems.len() as u32).to_be_bytes());
        for e in elems {
            self.bytes
                .extend_from_slice(&crate::algebra::int_to_fixed_bytes(e.value(), self.width));
        }
    }

    pub fn append_ciphertexts(&mut self, cts: &[Ciphertext]) {
        let flat: Vec<&GroupElement> = cts.iter().flat_map(|c| [&c.a, &c.b]).collect();
        self.append_elements(&flat);
    }

    /// Challenge integer reduced mod `q`.
    pub fn challenge_mod(&self, q: &BigUint) -> BigUint {
        let digest = Sha256::digest(&self.bytes);
        BigUint::from_bytes_be(&digest) % q
    }

    /// `k` challenge bits from counter-mode expansion of the transcript hash.
    pub fn challenge_bits(&self, k: usize) -> Vec<bool> {
        let mut bits = Vec::with_capacity(k);
        let mut counter = 0u32;
        while bits.len() < k {
            let mut h = Sha256::new();
            h.update(&self.bytes);
            h.update(counter.to_be_bytes());
            let block = h.finalize();
            for byte in block {
                for shift in (0..8).rev() {
                    bits.push((byte >> shift) & 1 == 1);
                    if bits.len() == k {
                        return bits;
                    }
                }
            }
            counter += 1;
        }
        bits
    }
}

/// Schnorr proof of knowledge of `x` with `h = g^x`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DlogProof {
    pub commitment: GroupElement,
    pub response: Exponent,
}

impl DlogProof {
    pub fn to_bytes(&self, params: &GroupParams) -> Vec<u8> {
        let w = params.element_width();
        let mut out = crate::algebra::int_to_fixed_bytes(self.commitment.value(), w);
        out.extend(crate::algebra::int_to_fixed_bytes(self.response.value(), w));
        out
    }
}

fn dl_challenge(params: &GroupParams, h: &GroupElement, a: &GroupElement, tag: &[u8]) -> BigUint {
    let mut t = Transcript::new(tag, params);
    t.append_elements(&[&params.g, h]);
    t.append_elements(&[a]);
    t.challenge_mod(&params.q)
}

fn dl_respond(params: &GroupParams, x: &Exponent, w: &Exponent, e: &BigUint) -> Exponent {
    let e = Exponent::unchecked(e.clone());
    params.exp_add(w, &params.exp_mul(&e, x))
}

/// Prove knowledge of the discrete log of `h`.
pub fn prove_dl(
    params: &GroupParams,
    h: &GroupElement,
    x: &Exponent,
    rng: &mut impl Rng,
    tag: &[u8],
) -> DlogProof {
    let w = params.random_exponent(rng);
    let commitment = params.pow(&params.g, &w);
    let e = dl_challenge(params, h, &commitment, tag);
    let response = dl_respond(params, x, &w, &e);
    DlogProof {
        commitment,
        response,
    }
}

/// Accept iff `g^z = a * h^e` with the challenge recomputed from the
/// transcript and both `a` and `h` in the subgroup.
pub fn verify_dl(params: &GroupParams, h: &GroupElement, proof: &DlogProof, tag: &[u8]) -> bool {
    if !params.is_member(h.value()) || !params.is_member(proof.commitment.value()) {
        return false;
    }
    if proof.response.value() >= &params.q {
        return false;
    }
    let e = dl_challenge(params, h, &proof.commitment, tag);
    let lhs = params.pow(&params.g, &proof.response);
    let rhs = params.mul(&proof.commitment, &params.pow(h, &Exponent::unchecked(e)));
    lhs == rhs
}

/// Proof of plaintext knowledge for an El Gamal ciphertext: a Schnorr proof
/// of the encryption randomizer `r` with `a = g^r`, with the whole ciphertext
/// bound into the transcript. Knowing `r` determines the plaintext `b / y^r`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlaintextProof(pub DlogProof);

impl PlaintextProof {
    pub fn to_bytes(&self, params: &GroupParams) -> Vec<u8> {
        self.0.to_bytes(params)
    }
}

fn pk_challenge(
    params: &GroupParams,
    pk: &PublicKey,
    c: &Ciphertext,
    a_commit: &GroupElement,
    tag: &[u8],
) -> BigUint {
    let mut t = Transcript::new(tag, params);
    t.append_elements(&[&params.g, &pk.y, &c.a, &c.b]);
    t.append_elements(&[a_commit]);
    t.challenge_mod(&params.q)
}

pub fn prove_pk(
    params: &GroupParams,
    pk: &PublicKey,
    c: &Ciphertext,
    r: &Exponent,
    rng: &mut impl Rng,
    tag: &[u8],
) -> PlaintextProof {
    let w = params.random_exponent(rng);
    let commitment = params.pow(&params.g, &w);
    let e = pk_challenge(params, pk, c, &commitment, tag);
    let response = dl_respond(params, r, &w, &e);
    PlaintextProof(DlogProof {
        commitment,
        response,
    })
}

pub fn verify_pk(
    params: &GroupParams,
    pk: &PublicKey,
    c: &Ciphertext,
    proof: &PlaintextProof,
    tag: &[u8],
) -> bool {
    let inner = &proof.0;
    if !params.is_member(c.a.value())
        || !params.is_member(c.b.value())
        || !params.is_member(inner.commitment.value())
    {
        return false;
    }
    if inner.response.value() >= &params.q {
        return false;
    }
    let e = pk_challenge(params, pk, c, &inner.commitment, tag);
    let lhs = params.pow(&params.g, &inner.response);
    let rhs = params.mul(
        &inner.commitment,
        &params.pow(&c.a, &Exponent::unchecked(e)),
    );
    lhs == rhs
}

/// One repetition of the cut-and-choose shuffle argument.
///
/// The prover commits an intermediate vector that is itself a secret shuffle
/// of the input. Challenge bit 0 opens the map input -> intermediate;
/// challenge bit 1 opens the map intermediate -> output. Either opening alone
/// reveals a permutation independent of the witness.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShuffleRound {
    pub intermediate: Vec<Ciphertext>,
    pub bit: bool,
    /// Opened permutation: `bit = 0` maps input index `i` to intermediate
    /// slot `perm[i]`; `bit = 1` maps intermediate index `j` to output slot
    /// `perm[j]`.
    pub perm: Vec<u32>,
    /// Opened randomizers, one per mapped ciphertext.
    pub rands: Vec<Exponent>,
}

/// Statistical shuffle argument with soundness error `2^-k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShuffleProof {
    pub rounds: Vec<ShuffleRound>,
}

impl ShuffleProof {
    pub fn to_bytes(&self, params: &GroupParams) -> Vec<u8> {
        let w = params.element_width();
        let mut out = (self.rounds.len() as u32).to_be_bytes().to_vec();
        for r in &self.rounds {
            for ct in &r.intermediate {
                out.extend(ct.to_bytes(params));
            }
            out.push(u8::from(r.bit));
            for p in &r.perm {
                out.extend(p.to_be_bytes());
            }
            for e in &r.rands {
                out.extend(crate::algebra::int_to_fixed_bytes(e.value(), w));
            }
        }
        out
    }
}

fn shuffle_challenge_bits(
    params: &GroupParams,
    pk: &PublicKey,
    input: &[Ciphertext],
    output: &[Ciphertext],
    intermediates: &[Vec<Ciphertext>],
    tag: &[u8],
) -> Vec<bool> {
    let mut t = Transcript::new(tag, params);
    t.append_elements(&[&pk.y]);
    t.append_ciphertexts(input);
    t.append_ciphertexts(output);
    for d in intermediates {
        t.append_ciphertexts(d);
    }
    t.challenge_bits(intermediates.len())
}

fn invert_perm(perm: &[u32]) -> Vec<u32> {
    let mut inv = vec![0u32; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p as usize] = i as u32;
    }
    inv
}

fn is_permutation(perm: &[u32], n: usize) -> bool {
    if perm.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    perm.iter().all(|&p| {
        let idx = p as usize;
        idx < n && !std::mem::replace(&mut seen[idx], true)
    })
}

/// Prove that `output` is a permuted rerandomization of `input` under the
/// witness `(perm, gammas)`, where `output[perm[i]] = Re(input[i]; gammas[i])`.
#[allow(clippy::too_many_arguments)]
pub fn prove_shuffle(
    params: &GroupParams,
    pk: &PublicKey,
    input: &[Ciphertext],
    output: &[Ciphertext],
    perm: &[u32],
    gammas: &[Exponent],
    k: u32,
    rng: &mut impl Rng,
    tag: &[u8],
) -> Result<ShuffleProof, ZkpError> {
    let n = input.len();
    if n == 0 || output.len() != n || perm.len() != n || gammas.len() != n {
        return Err(ZkpError::BadVectorLength);
    }
    let mut scratch = OpCounters::default();
    if !is_permutation(perm, n) {
        return Err(ZkpError::InconsistentWitness);
    }
    for i in 0..n {
        let expect = rerandomize(params, pk, &input[i], &gammas[i], &mut scratch);
        if output[perm[i] as usize] != expect {
            return Err(ZkpError::InconsistentWitness);
        }
    }

    // Commit k fresh intermediate shuffles of the input.
    let mut sigmas = Vec::with_capacity(k as usize);
    let mut deltas = Vec::with_capacity(k as usize);
    let mut intermediates = Vec::with_capacity(k as usize);
    for _ in 0..k {
        let mut sigma: Vec<u32> = (0..n as u32).collect();
        sigma.shuffle(rng);
        let delta: Vec<Exponent> = (0..n).map(|_| params.random_exponent(rng)).collect();
        let mut d = vec![
            Ciphertext {
                a: GroupElement::one(),
                b: GroupElement::one()
            };
            n
        ];
        for i in 0..n {
            d[sigma[i] as usize] = rerandomize(params, pk, &input[i], &delta[i], &mut scratch);
        }
        sigmas.push(sigma);
        deltas.push(delta);
        intermediates.push(d);
    }

    let bits = shuffle_challenge_bits(params, pk, input, output, &intermediates, tag);

    let rounds = intermediates
        .into_iter()
        .zip(sigmas)
        .zip(deltas)
        .zip(bits)
        .map(|(((intermediate, sigma), delta), bit)| {
            if !bit {
                // Open input -> intermediate directly.
                ShuffleRound {
                    intermediate,
                    bit,
                    perm: sigma.to_vec(),
                    rands: delta,
                }
            } else {
                // Open intermediate -> output: slot j holds input sigma^-1(j),
                // which the witness sends to output perm[sigma^-1(j)] with a
                // randomizer difference gamma - delta.
                let sigma_inv = invert_perm(&sigma);
                let mut rho = vec![0u32; n];
                let mut eps = vec![Exponent::zero(); n];
                for j in 0..n {
                    let i = sigma_inv[j] as usize;
                    rho[j] = perm[i];
                    eps[j] = params.exp_sub(&gammas[i], &delta[i]);
                }
                ShuffleRound {
                    intermediate,
                    bit,
                    perm: rho,
                    rands: eps,
                }
            }
        })
        .collect();

    Ok(ShuffleProof { rounds })
}

/// Adversarial prover for soundness experiments: attempt to prove a shuffle
/// relation that does not hold. The forger guesses each challenge bit in
/// advance, commits an intermediate vector it can open on the guessed side
/// only, and submits the result. Returns whether the verifier accepted; for a
/// false statement this happens iff every guess matched the derived bits, so
/// the acceptance rate is `2^-k`.
pub fn forge_shuffle_attempt(
    params: &GroupParams,
    pk: &PublicKey,
    input: &[Ciphertext],
    output: &[Ciphertext],
    k: u32,
    rng: &mut impl Rng,
) -> bool {
    let n = input.len();
    let mut scratch = OpCounters::default();
    let mut openings: Vec<(Vec<u32>, Vec<Exponent>)> = Vec::with_capacity(k as usize);
    let mut intermediates = Vec::with_capacity(k as usize);
    for _ in 0..k {
        let guess = rng.gen_bool(0.5);
        let mut perm: Vec<u32> = (0..n as u32).collect();
        perm.shuffle(rng);
        let rands: Vec<Exponent> = (0..n).map(|_| params.random_exponent(rng)).collect();
        let mut d = vec![input[0].clone(); n];
        if !guess {
            // Prepare to open input -> intermediate.
            for i in 0..n {
                d[perm[i] as usize] = rerandomize(params, pk, &input[i], &rands[i], &mut scratch);
            }
        } else {
            // Prepare to open intermediate -> output by un-rerandomizing.
            for j in 0..n {
                let target = &output[perm[j] as usize];
                let neg = params.exp_sub(&Exponent::zero(), &rands[j]);
                d[j] = rerandomize(params, pk, target, &neg, &mut scratch);
            }
        }
        openings.push((perm, rands));
        intermediates.push(d);
    }
    let bits = shuffle_challenge_bits(params, pk, input, output, &intermediates, TAG_CS);
    let rounds: Vec<ShuffleRound> = intermediates
        .into_iter()
        .zip(openings)
        .zip(&bits)
        .map(|((intermediate, (perm, rands)), &bit)| ShuffleRound {
            intermediate,
            bit,
            perm,
            rands,
        })
        .collect();
    verify_shuffle(params, pk, input, output, &ShuffleProof { rounds }, TAG_CS)
}

/// Verify a shuffle proof: recompute the challenge bits and check every
/// opened repetition against the side it claims.
pub fn verify_shuffle(
    params: &GroupParams,
    pk: &PublicKey,
    input: &[Ciphertext],
    output: &[Ciphertext],
    proof: &ShuffleProof,
    tag: &[u8],
) -> bool {
    let n = input.len();
    if n == 0 || output.len() != n || proof.rounds.is_empty() {
        return false;
    }
    let intermediates: Vec<Vec<Ciphertext>> = proof
        .rounds
        .iter()
        .map(|r| r.intermediate.clone())
        .collect();
    if intermediates.iter().any(|d| d.len() != n) {
        return false;
    }
    let bits = shuffle_challenge_bits(params, pk, input, output, &intermediates, tag);

    let mut scratch = OpCounters::default();
    for (round, bit) in proof.rounds.iter().zip(bits) {
        if round.bit != bit
            || !is_permutation(&round.perm, n)
            || round.rands.len() != n
            || round.rands.iter().any(|r| r.value() >= &params.q)
        {
            return false;
        }
        for j in 0..n {
            let (from, to) = if !bit {
                (&input[j], &round.intermediate[round.perm[j] as usize])
            } else {
                (&round.intermediate[j], &output[round.perm[j] as usize])
            };
            if rerandomize(params, pk, from, &round.rands[j], &mut scratch) != *to {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::generate_params;
    use crate::elgamal::{combine_decryption, encrypt, td_share, tkg_contribute, KeyShare};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn toy() -> GroupParams {
        generate_params(5, 2, b"toy").unwrap().0
    }

    fn medium() -> (GroupParams, PublicKey, KeyShare) {
        let (params, _) = generate_params(64, 2, b"zkp").unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        let mut c = OpCounters::default();
        let ks = tkg_contribute(&params, 1, &mut rng, &mut c);
        let pk =
            crate::elgamal::combine_public_keys(&params, std::slice::from_ref(&ks.public), &mut c)
                .unwrap();
        (params, pk, ks)
    }

    /// Test-only prover with a forced nonce and challenge, for pinning the
    /// hand-worked example.
    fn prove_dl_forced(
        params: &GroupParams,
        x: &Exponent,
        w: &Exponent,
        e: u32,
    ) -> (GroupElement, Exponent) {
        let a = params.pow(&params.g, w);
        let z = dl_respond(params, x, w, &BigUint::from(e));
        (a, z)
    }

    #[test]
    fn forced_challenge_example() {
        let params = toy();
        let x = params.exponent(BigUint::from(3u32)).unwrap();
        let w = params.exponent(BigUint::from(5u32)).unwrap();
        let (a, z) = prove_dl_forced(&params, &x, &w, 7);
        assert_eq!(a.value(), &BigUint::from(12u32));
        assert_eq!(z.value(), &BigUint::from(4u32));
        // Verification equation by hand: g^4 = 3 and a * h^7 = 12 * 6 = 3.
        let h = params.element(BigUint::from(18u32)).unwrap();
        let lhs = params.pow(&params.g, &z);
        let rhs = params.mul(
            &a,
            &params.pow(&h, &params.exponent(BigUint::from(7u32)).unwrap()),
        );
        assert_eq!(lhs.value(), &BigUint::from(3u32));
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn dl_completeness_over_random_witnesses() {
        let (params, _, _) = medium();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for _ in 0..500 {
            let x = params.random_exponent(&mut rng);
            let h = params.pow(&params.g, &x);
            let proof = prove_dl(&params, &h, &x, &mut rng, TAG_DL);
            assert!(verify_dl(&params, &h, &proof, TAG_DL));
        }
    }

    #[test]
    fn dl_identity_witness_verifies() {
        let (params, _, _) = medium();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let x = Exponent::zero();
        let h = GroupElement::one();
        let proof = prove_dl(&params, &h, &x, &mut rng, TAG_DL);
        assert!(verify_dl(&params, &h, &proof, TAG_DL));
    }

    #[test]
    fn dl_rejects_tampering() {
        let (params, _, _) = medium();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let x = params.random_exponent(&mut rng);
        let h = params.pow(&params.g, &x);
        let proof = prove_dl(&params, &h, &x, &mut rng, TAG_DL);

        let mut bad = proof.clone();
        bad.response = params.exp_add(
            &bad.response,
            &params.exponent(BigUint::from(1u32)).unwrap(),
        );
        assert!(!verify_dl(&params, &h, &bad, TAG_DL));

        // Same proof against a different statement.
        let h2 = params.mul(&h, &params.g);
        assert!(!verify_dl(&params, &h2, &proof, TAG_DL));

        // Different domain tag re-derives a different challenge.
        assert!(!verify_dl(&params, &h, &proof, b"PWS/DL/other"));
    }

    #[test]
    fn transcript_byte_layout_is_pinned() {
        // tag bytes, then per section a 4-byte big-endian element count and
        // the elements as fixed-width big-endian integers.
        let params = toy(); // p = 23: element width 1 byte
        let mut t = Transcript::new(b"PWS/DL", &params);
        t.append_elements(&[&params.g, &params.element(BigUint::from(18u32)).unwrap()]);
        t.append_elements(&[&params.element(BigUint::from(12u32)).unwrap()]);
        let mut expect = b"PWS/DL".to_vec();
        expect.extend([0, 0, 0, 2, 4, 18]);
        expect.extend([0, 0, 0, 1, 12]);
        assert_eq!(t.bytes, expect);

        // Ciphertexts flatten to their components.
        let (params64, _) = generate_params(64, 2, b"layout").unwrap();
        let mut t = Transcript::new(b"PWS/CS", &params64);
        let ct = Ciphertext {
            a: params64.g.clone(),
            b: params64.g.clone(),
        };
        t.append_ciphertexts(std::slice::from_ref(&ct));
        assert_eq!(t.bytes.len(), 6 + 4 + 2 * params64.element_width());
    }

    #[test]
    fn challenges_are_deterministic_and_statement_sensitive() {
        let (params, _, _) = medium();
        let mut t1 = Transcript::new(TAG_DL, &params);
        t1.append_elements(&[&params.g]);
        let mut t2 = Transcript::new(TAG_DL, &params);
        t2.append_elements(&[&params.g]);
        assert_eq!(t1.challenge_mod(&params.q), t2.challenge_mod(&params.q));
        assert_eq!(t1.challenge_bits(64), t2.challenge_bits(64));

        let g2 = params.mul(&params.g, &params.g);
        let mut t3 = Transcript::new(TAG_DL, &params);
        t3.append_elements(&[&g2]);
        assert_ne!(t1.challenge_mod(&params.q), t3.challenge_mod(&params.q));
    }

    #[test]
    fn pk_proof_binds_both_components() {
        let (params, pk, _) = medium();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let mut c = OpCounters::default();
        let m = params.pow(&params.g, &params.random_exponent(&mut rng));
        let r = params.random_nonzero_exponent(&mut rng);
        let ct = encrypt(&params, &pk, &m, &r, &mut c);
        let proof = prove_pk(&params, &pk, &ct, &r, &mut rng, TAG_PK);
        assert!(verify_pk(&params, &pk, &ct, &proof, TAG_PK));

        // r = 0 identity encryption still proves.
        let ct0 = encrypt(&params, &pk, &m, &Exponent::zero(), &mut c);
        let proof0 = prove_pk(&params, &pk, &ct0, &Exponent::zero(), &mut rng, TAG_PK);
        assert!(verify_pk(&params, &pk, &ct0, &proof0, TAG_PK));

        // Altering b invalidates the proof even though the dlog statement
        // only involves a.
        let mut altered = ct.clone();
        altered.b = params.mul(&altered.b, &params.g);
        assert!(!verify_pk(&params, &pk, &altered, &proof, TAG_PK));
    }

    #[test]
    fn pk_completeness_over_random_instances() {
        let (params, pk, _) = medium();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let mut c = OpCounters::default();
        for _ in 0..500 {
            let m = params.pow(&params.g, &params.random_exponent(&mut rng));
            let r = params.random_nonzero_exponent(&mut rng);
            let ct = encrypt(&params, &pk, &m, &r, &mut c);
            let proof = prove_pk(&params, &pk, &ct, &r, &mut rng, TAG_PK);
            assert!(verify_pk(&params, &pk, &ct, &proof, TAG_PK));
        }
    }

    fn random_vector(
        params: &GroupParams,
        pk: &PublicKey,
        n: usize,
        rng: &mut ChaCha20Rng,
    ) -> Vec<Ciphertext> {
        let mut c = OpCounters::default();
        (0..n)
            .map(|_| {
                let m = params.pow(&params.g, &params.random_exponent(rng));
                encrypt(params, pk, &m, &params.random_nonzero_exponent(rng), &mut c)
            })
            .collect()
    }

    fn shuffle_vector(
        params: &GroupParams,
        pk: &PublicKey,
        input: &[Ciphertext],
        rng: &mut ChaCha20Rng,
    ) -> (Vec<Ciphertext>, Vec<u32>, Vec<Exponent>) {
        let n = input.len();
        let mut c = OpCounters::default();
        let mut perm: Vec<u32> = (0..n as u32).collect();
        perm.shuffle(rng);
        let gammas: Vec<Exponent> = (0..n)
            .map(|_| params.random_nonzero_exponent(rng))
            .collect();
        let mut output = vec![input[0].clone(); n];
        for i in 0..n {
            output[perm[i] as usize] = rerandomize(params, pk, &input[i], &gammas[i], &mut c);
        }
        (output, perm, gammas)
    }

    #[test]
    fn trivial_single_element_shuffle_verifies() {
        let (params, pk, _) = medium();
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let input = random_vector(&params, &pk, 1, &mut rng);
        let proof = prove_shuffle(
            &params,
            &pk,
            &input,
            &input,
            &[0],
            &[Exponent::zero()],
            8,
            &mut rng,
            TAG_CS,
        )
        .unwrap();
        assert!(verify_shuffle(&params, &pk, &input, &input, &proof, TAG_CS));
    }

    #[test]
    fn honest_shuffle_verifies_and_preserves_plaintexts() {
        let (params, pk, ks) = medium();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let mut c = OpCounters::default();
        let input = random_vector(&params, &pk, 2, &mut rng);
        let (output, perm, gammas) = shuffle_vector(&params, &pk, &input, &mut rng);
        let proof = prove_shuffle(
            &params, &pk, &input, &output, &perm, &gammas, 10, &mut rng, TAG_CS,
        )
        .unwrap();
        assert!(verify_shuffle(
            &params, &pk, &input, &output, &proof, TAG_CS
        ));

        let decrypt_all = |cts: &[Ciphertext], c: &mut OpCounters| -> Vec<BigUint> {
            let mut ms: Vec<BigUint> = cts
                .iter()
                .map(|ct| {
                    let s = td_share(&params, &ks, ct, c);
                    combine_decryption(&params, ct, &[s], 1, c)
                        .unwrap()
                        .value()
                        .clone()
                })
                .collect();
            ms.sort();
            ms
        };
        assert_eq!(decrypt_all(&input, &mut c), decrypt_all(&output, &mut c));
    }

    #[test]
    fn shuffle_rejects_inconsistent_witness_and_wrong_output() {
        let (params, pk, _) = medium();
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let input = random_vector(&params, &pk, 3, &mut rng);
        let (output, perm, gammas) = shuffle_vector(&params, &pk, &input, &mut rng);

        let mut wrong_gammas = gammas.clone();
        wrong_gammas[0] = params.exp_add(
            &wrong_gammas[0],
            &params.exponent(BigUint::from(1u32)).unwrap(),
        );
        assert_eq!(
            prove_shuffle(
                &params,
                &pk,
                &input,
                &output,
                &perm,
                &wrong_gammas,
                8,
                &mut rng,
                TAG_CS
            ),
            Err(ZkpError::InconsistentWitness)
        );

        let proof = prove_shuffle(
            &params, &pk, &input, &output, &perm, &gammas, 8, &mut rng, TAG_CS,
        )
        .unwrap();
        // Same proof against a swapped output vector.
        let mut swapped = output.clone();
        swapped.swap(0, 1);
        assert!(!verify_shuffle(
            &params, &pk, &input, &swapped, &proof, TAG_CS
        ));

        // Truncated proof.
        let mut short = proof.clone();
        short.rounds.pop();
        assert!(!verify_shuffle(
            &params, &pk, &input, &output, &short, TAG_CS
        ));

        // Tampered opening.
        let mut tampered = proof.clone();
        tampered.rounds[0].rands[0] = params.exp_add(
            &tampered.rounds[0].rands[0],
            &params.exponent(BigUint::from(1u32)).unwrap(),
        );
        assert!(!verify_shuffle(
            &params, &pk, &input, &output, &tampered, TAG_CS
        ));
    }

    #[test]
    fn shuffle_completeness_over_random_instances() {
        let (params, pk, _) = medium();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        for _ in 0..50 {
            let input = random_vector(&params, &pk, 3, &mut rng);
            let (output, perm, gammas) = shuffle_vector(&params, &pk, &input, &mut rng);
            let proof = prove_shuffle(
                &params, &pk, &input, &output, &perm, &gammas, 6, &mut rng, TAG_CS,
            )
            .unwrap();
            assert!(verify_shuffle(
                &params, &pk, &input, &output, &proof, TAG_CS
            ));
        }
    }

    #[test]
    fn forged_shuffles_only_succeed_at_the_guessing_rate() {
        let (params, pk, _) = medium();
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        // Output decrypts to a different multiset than input.
        let input = random_vector(&params, &pk, 2, &mut rng);
        let output = random_vector(&params, &pk, 2, &mut rng);
        let k = 6u32;
        let trials = 600usize;
        let wins = (0..trials)
            .filter(|_| forge_shuffle_attempt(&params, &pk, &input, &output, k, &mut rng))
            .count();
        let p = 2f64.powi(-(k as i32));
        let mean = trials as f64 * p;
        let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
        assert!(
            (wins as f64 - mean).abs() <= 3.0 * sigma,
            "forgeries {wins} outside 3 sigma of {mean}"
        );
    }
}
