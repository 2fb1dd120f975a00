//! Party state machines for the private-web-search protocol.
//!
//! After setup, the query phases take exactly four rounds: (1) every user
//! broadcasts encryptions of the padded shares of its query term, (2) every
//! user rerandomizes and shuffles the ciphertext column addressed to it and
//! sends the result to the managers, (3) every manager publishes decryption
//! shares for all n^2 ciphertexts, (4) the leader reconstructs the query
//! terms, queries the engine, and broadcasts the result set.
//!
//! In malicious mode key shares carry discrete-log proofs, broadcast
//! ciphertexts carry plaintext-knowledge proofs, and shuffled vectors carry
//! shuffle proofs; any failed verification aborts the run naming the party
//! whose message failed. Proof generation and checking never touch the cost
//! counters.

use crate::algebra::{
    decode_unchecked, encode_to_group, Exponent, GroupElement, GroupParams, SharingField,
};
use crate::elgamal::{
    combine_decryption, combine_public_keys, encrypt, rerandomize, td_share, tkg_contribute,
    Ciphertext, DecryptionShare, KeyShare, PublicKey,
};
use crate::metrics::{AbortReason, AbortReport, OpCounters, PartyId};
use crate::sharing::{group_by_padding, pad, share, DroppedTag};
use crate::zkp::{
    prove_dl, prove_pk, prove_shuffle, verify_dl, verify_pk, verify_shuffle, DlogProof,
    PlaintextProof, ShuffleProof, TAG_CS, TAG_DL, TAG_PK,
};
use num_bigint::BigUint;
use num_traits::One;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("group size must be at least 2")]
    GroupTooSmall,
    #[error("at least one manager is required")]
    NoManagers,
    #[error("malicious mode needs at least one shuffle-proof repetition")]
    NoRepetitions,
    #[error("sharing field was sized for n={field_n}, config has n={n}")]
    FieldMismatch { field_n: u32, n: u32 },
    #[error("sharing field does not pack into the group's encodable range")]
    Incompatible,
    #[error("expected {expected} queries, got {got}")]
    QueryCount { expected: u32, got: u32 },
}

/// Adversary model the run executes under.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    SemiHonest,
    Malicious,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::SemiHonest => "semi-honest",
            Mode::Malicious => "malicious",
        }
    }
}

/// Full configuration of one protocol execution.
#[derive(Debug, Clone)]
pub struct ProtocolConfig {
    pub n: u32,
    pub managers: u32,
    pub mode: Mode,
    /// Shuffle-proof repetitions (soundness error 2^-k).
    pub shuffle_reps: u32,
    pub params: GroupParams,
    pub field: SharingField,
    pub seed: u64,
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n < 2 {
            return Err(ConfigError::GroupTooSmall);
        }
        if self.managers < 1 {
            return Err(ConfigError::NoManagers);
        }
        if self.mode == Mode::Malicious && self.shuffle_reps < 1 {
            return Err(ConfigError::NoRepetitions);
        }
        if self.field.n != self.n {
            return Err(ConfigError::FieldMismatch {
                field_n: self.field.n,
                n: self.n,
            });
        }
        if !self.field.is_compatible(&self.params) {
            return Err(ConfigError::Incompatible);
        }
        Ok(())
    }

    /// Derived rng stream for one party, independent across parties and runs.
    pub fn party_rng(&self, party: PartyId) -> ChaCha20Rng {
        let mut h = Sha256::new();
        h.update(b"PWS/rng");
        h.update(self.seed.to_be_bytes());
        h.update(party.to_string().as_bytes());
        ChaCha20Rng::from_seed(h.finalize().into())
    }
}

/// Scripted deviation from the protocol for one party.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Misbehavior {
    /// Manager publishes a key share with an invalid discrete-log proof.
    BadKeyProof,
    /// User corrupts the plaintext-knowledge proof on one broadcast entry.
    BadPlaintextProof { column: u32 },
    /// User corrupts its shuffle proof.
    BadShuffleProof,
    /// User tags one broadcast share with a different padding than the rest.
    EquivocateShare { column: u32 },
    /// User rebroadcasts another user's ciphertexts and proofs as its own.
    ReplayCiphertexts { source: u32 },
}

/// One broadcast cell `<row, col, ciphertext>`: row is the sharing user, col
/// the evaluation point (and addressee column).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShareEntry {
    pub row: u32,
    pub col: u32,
    pub ct: Ciphertext,
    pub proof: Option<PlaintextProof>,
}

/// Round-2 output: the rerandomized and shuffled column for one evaluation
/// point. In malicious mode the sender also discloses its diagonal input
/// ciphertext so the shuffle statement is fully public.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShuffledVector {
    pub point: u32,
    pub cts: Vec<Ciphertext>,
    pub input_diagonal: Option<Ciphertext>,
    pub proof: Option<ShuffleProof>,
}

/// Typed payloads carried by the simulated network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    KeyShareAnnouncement {
        index: u32,
        y: GroupElement,
    },
    ProofAttachment {
        index: u32,
        proof: DlogProof,
    },
    EncryptedShareList {
        entries: Vec<ShareEntry>,
    },
    ShuffledVector(ShuffledVector),
    DecryptionShareBatch {
        index: u32,
        shares: Vec<Vec<DecryptionShare>>,
    },
    QueryResultSet {
        answers: Vec<String>,
    },
}

/// A message as delivered by the network: sender, round sent, payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolMessage {
    pub sender: PartyId,
    pub round: u32,
    pub payload: Payload,
}

impl ProtocolMessage {
    pub fn payload_type(&self) -> &'static str {
        match &self.payload {
            Payload::KeyShareAnnouncement { .. } => "key-share-announcement",
            Payload::ProofAttachment { .. } => "proof-attachment",
            Payload::EncryptedShareList { .. } => "encrypted-share-list",
            Payload::ShuffledVector(_) => "shuffled-vector",
            Payload::DecryptionShareBatch { .. } => "decryption-share-batch",
            Payload::QueryResultSet { .. } => "query-result-set",
        }
    }

    /// Canonical payload serialization, hashed into the event log.
    pub fn payload_bytes(&self, params: &GroupParams) -> Vec<u8> {
        let mut out = Vec::new();
        match &self.payload {
            Payload::KeyShareAnnouncement { index, y } => {
                out.extend(index.to_be_bytes());
                out.extend(params.element_bytes(y));
            }
            Payload::ProofAttachment { index, proof } => {
                out.extend(index.to_be_bytes());
                out.extend(proof.to_bytes(params));
            }
            Payload::EncryptedShareList { entries } => {
                out.extend((entries.len() as u32).to_be_bytes());
                for e in entries {
                    out.extend(e.row.to_be_bytes());
                    out.extend(e.col.to_be_bytes());
                    out.extend(e.ct.to_bytes(params));
                    match &e.proof {
                        Some(p) => {
                            out.push(1);
                            out.extend(p.to_bytes(params));
                        }
                        None => out.push(0),
                    }
                }
            }
            Payload::ShuffledVector(v) => {
                out.extend(v.point.to_be_bytes());
                out.extend((v.cts.len() as u32).to_be_bytes());
                for ct in &v.cts {
                    out.extend(ct.to_bytes(params));
                }
                match &v.input_diagonal {
                    Some(ct) => {
                        out.push(1);
                        out.extend(ct.to_bytes(params));
                    }
                    None => out.push(0),
                }
                match &v.proof {
                    Some(p) => {
                        out.push(1);
                        out.extend(p.to_bytes(params));
                    }
                    None => out.push(0),
                }
            }
            Payload::DecryptionShareBatch { index, shares } => {
                out.extend(index.to_be_bytes());
                out.extend((shares.len() as u32).to_be_bytes());
                for column in shares {
                    out.extend((column.len() as u32).to_be_bytes());
                    for s in column {
                        out.extend(s.index.to_be_bytes());
                        out.extend(params.element_bytes(&s.d));
                    }
                }
            }
            Payload::QueryResultSet { answers } => {
                out.extend((answers.len() as u32).to_be_bytes());
                for a in answers {
                    out.extend((a.len() as u32).to_be_bytes());
                    out.extend(a.as_bytes());
                }
            }
        }
        out
    }

    pub fn digest(&self, params: &GroupParams) -> String {
        let h = Sha256::digest(self.payload_bytes(params));
        hex::encode(&h[..8])
    }

    /// Group elements of ciphertext payload this message transmits; the unit
    /// the communication counter measures. Proofs and manager traffic are
    /// not part of the accounting.
    pub fn counted_elements(&self) -> u64 {
        match &self.payload {
            Payload::EncryptedShareList { entries } => 2 * entries.len() as u64,
            Payload::ShuffledVector(v) => 2 * v.cts.len() as u64,
            _ => 0,
        }
    }
}

/// Answer source the leader submits recovered terms to.
pub trait SearchEngine {
    fn answer(&self, term: &BigUint) -> String;
}

fn pk_tag(row: u32, col: u32) -> Vec<u8> {
    let mut t = TAG_PK.to_vec();
    t.extend(format!("/{row}/{col}").into_bytes());
    t
}

fn cs_tag(user: u32) -> Vec<u8> {
    let mut t = TAG_CS.to_vec();
    t.extend(format!("/{user}").into_bytes());
    t
}

fn dl_tag(manager: u32) -> Vec<u8> {
    let mut t = TAG_DL.to_vec();
    t.extend(format!("/{manager}").into_bytes());
    t
}

fn corrupt_dlog_proof(params: &GroupParams, proof: &mut DlogProof) {
    proof.response = params.exp_add(&proof.response, &Exponent::unchecked(BigUint::one()));
}

// ---------------------------------------------------------------------------
// Users
// ---------------------------------------------------------------------------

/// Per-user protocol state.
#[derive(Debug, Clone)]
pub struct UserState {
    pub index: u32,
    term: BigUint,
    rng: ChaCha20Rng,
    pub misbehavior: Option<Misbehavior>,
    /// Padding tag drawn in round 1.
    alpha: Option<u64>,
    /// The diagonal entry `<i, i, ct>`, computed locally and never broadcast.
    diagonal: Option<ShareEntry>,
    /// Result set received at the end of the run.
    pub results: Option<Vec<String>>,
}

impl UserState {
    pub fn new(config: &ProtocolConfig, index: u32, term: BigUint) -> UserState {
        UserState {
            index,
            term,
            rng: config.party_rng(PartyId::User(index)),
            misbehavior: None,
            alpha: None,
            diagonal: None,
            results: None,
        }
    }

    pub fn padding_tag(&self) -> Option<u64> {
        self.alpha
    }

    pub fn diagonal(&self) -> Option<&ShareEntry> {
        self.diagonal.as_ref()
    }

    /// Round 1: share the query term, pad, encode, encrypt; broadcast all
    /// entries except the own-column diagonal, which stays local.
    ///
    /// Costs per user: `n` encryptions (2n exponentiations, n multiplications)
    /// plus the Horner field multiplications for evaluating the polynomial.
    pub fn round1(
        &mut self,
        config: &ProtocolConfig,
        pk: &PublicKey,
        counters: &mut OpCounters,
    ) -> Vec<ShareEntry> {
        let n = config.n;
        let params = &config.params;
        let field = &config.field;

        let points = share(&self.term, n, field, &mut self.rng, counters)
            .expect("query term validated against the field");
        let width = field.padding_bits();
        debug_assert!(width < 64);
        let alpha = self.rng.gen_range(0..(1u64 << width));
        self.alpha = Some(alpha);

        let equivocate_col = match self.misbehavior {
            Some(Misbehavior::EquivocateShare { column }) => Some(column),
            _ => None,
        };
        let bad_proof_col = match self.misbehavior {
            Some(Misbehavior::BadPlaintextProof { column }) => Some(column),
            _ => None,
        };

        let mut entries = Vec::with_capacity(n as usize);
        for point in points {
            let col = point.x;
            // Flipping the low bit keeps the tag inside its width.
            let tag = if equivocate_col == Some(col) {
                alpha ^ 1
            } else {
                alpha
            };
            let padded =
                pad(std::slice::from_ref(&point), tag, field).expect("tag fits the padding width");
            let m = padded[0].packed(field) + 1u32;
            let encoded = encode_to_group(params, &m)
                .expect("packed share fits the encodable range by construction");
            let r = params.random_nonzero_exponent(&mut self.rng);
            let ct = encrypt(params, pk, &encoded, &r, counters);

            let proof = if config.mode == Mode::Malicious && col != self.index {
                let mut proof =
                    prove_pk(params, pk, &ct, &r, &mut self.rng, &pk_tag(self.index, col));
                if bad_proof_col == Some(col) {
                    corrupt_dlog_proof(params, &mut proof.0);
                }
                Some(proof)
            } else {
                None
            };

            entries.push(ShareEntry {
                row: self.index,
                col,
                ct,
                proof,
            });
        }

        let diag_pos = entries
            .iter()
            .position(|e| e.col == self.index)
            .expect("own column is always present");
        self.diagonal = Some(entries.remove(diag_pos));
        entries
    }

    /// Round 2: verify the received plaintext proofs (malicious mode),
    /// assemble the ciphertext column addressed to this user, and emit its
    /// rerandomized shuffle.
    ///
    /// Costs per user: `n` rerandomizations (2n exponentiations, 2n
    /// multiplications).
    pub fn round2(
        &mut self,
        config: &ProtocolConfig,
        pk: &PublicKey,
        broadcasts: &BTreeMap<u32, Vec<ShareEntry>>,
        counters: &mut OpCounters,
    ) -> Result<ShuffledVector, AbortReport> {
        let n = config.n;
        let params = &config.params;

        if config.mode == Mode::Malicious {
            for (&sender, entries) in broadcasts {
                if sender == self.index {
                    continue;
                }
                for e in entries {
                    let ok = e.row == sender
                        && e.proof.as_ref().is_some_and(|p| {
                            verify_pk(params, pk, &e.ct, p, &pk_tag(e.row, e.col))
                        });
                    if !ok {
                        return Err(AbortReport {
                            round: 2,
                            culprit: PartyId::User(sender),
                            reason: AbortReason::BadPlaintextProof,
                        });
                    }
                }
            }
        }

        // Column i: row l entry with col == i, own row from the diagonal.
        let diagonal = self.diagonal.clone().expect("round 1 ran");
        let column: Vec<Ciphertext> = (1..=n)
            .map(|row| {
                if row == self.index {
                    diagonal.ct.clone()
                } else {
                    broadcasts
                        .get(&row)
                        .and_then(|entries| entries.iter().find(|e| e.col == self.index))
                        .map(|e| e.ct.clone())
                        .expect("broadcast channel delivers every cell")
                }
            })
            .collect();

        let mut perm: Vec<u32> = (0..n).collect();
        perm.shuffle(&mut self.rng);
        let gammas: Vec<Exponent> = (0..n)
            .map(|_| params.random_nonzero_exponent(&mut self.rng))
            .collect();
        let mut cts = vec![column[0].clone(); n as usize];
        for (l, ct) in column.iter().enumerate() {
            cts[perm[l] as usize] = rerandomize(params, pk, ct, &gammas[l], counters);
        }

        let proof = if config.mode == Mode::Malicious {
            let mut proof = prove_shuffle(
                params,
                pk,
                &column,
                &cts,
                &perm,
                &gammas,
                config.shuffle_reps,
                &mut self.rng,
                &cs_tag(self.index),
            )
            .expect("witness is consistent by construction");
            if matches!(self.misbehavior, Some(Misbehavior::BadShuffleProof)) {
                proof.rounds[0].rands[0] = params.exp_add(
                    &proof.rounds[0].rands[0],
                    &Exponent::unchecked(BigUint::one()),
                );
            }
            Some(proof)
        } else {
            None
        };

        Ok(ShuffledVector {
            point: self.index,
            cts,
            input_diagonal: (config.mode == Mode::Malicious).then(|| diagonal.ct.clone()),
            proof,
        })
    }
}

// ---------------------------------------------------------------------------
// Managers
// ---------------------------------------------------------------------------

/// Per-manager protocol state.
#[derive(Debug, Clone)]
pub struct ManagerState {
    pub index: u32,
    rng: ChaCha20Rng,
    pub misbehavior: Option<Misbehavior>,
    key: Option<KeyShare>,
}

impl ManagerState {
    pub fn new(config: &ProtocolConfig, index: u32) -> ManagerState {
        ManagerState {
            index,
            rng: config.party_rng(PartyId::Manager(index)),
            misbehavior: None,
            key: None,
        }
    }

    pub fn key_share(&self) -> Option<&KeyShare> {
        self.key.as_ref()
    }

    /// Setup: draw a key share; in malicious mode also prove knowledge of
    /// its discrete log.
    pub fn contribute(
        &mut self,
        config: &ProtocolConfig,
        counters: &mut OpCounters,
    ) -> (GroupElement, Option<DlogProof>) {
        let params = &config.params;
        let key = tkg_contribute(params, self.index, &mut self.rng, counters);
        let public = key.public.clone();
        let proof = if config.mode == Mode::Malicious {
            let mut proof = prove_dl(
                params,
                &public,
                key.secret(),
                &mut self.rng,
                &dl_tag(self.index),
            );
            if matches!(self.misbehavior, Some(Misbehavior::BadKeyProof)) {
                corrupt_dlog_proof(params, &mut proof);
            }
            Some(proof)
        } else {
            None
        };
        self.key = Some(key);
        (public, proof)
    }

    /// Round 3: one decryption share per ciphertext, n^2 exponentiations.
    pub fn decrypt_batch(
        &self,
        config: &ProtocolConfig,
        vectors: &[ShuffledVector],
        counters: &mut OpCounters,
    ) -> Vec<Vec<DecryptionShare>> {
        let key = self.key.as_ref().expect("setup ran");
        vectors
            .iter()
            .map(|v| {
                v.cts
                    .iter()
                    .map(|ct| td_share(&config.params, key, ct, counters))
                    .collect()
            })
            .collect()
    }
}

/// Verify the announced key shares (malicious mode) and combine them into the
/// group public key. Aborts name the manager whose proof failed.
pub fn verify_and_combine_keys(
    config: &ProtocolConfig,
    announcements: &[(u32, GroupElement)],
    proofs: &BTreeMap<u32, DlogProof>,
    counters: &mut OpCounters,
) -> Result<PublicKey, AbortReport> {
    if config.mode == Mode::Malicious {
        for (index, y) in announcements {
            let ok = proofs
                .get(index)
                .is_some_and(|p| verify_dl(&config.params, y, p, &dl_tag(*index)));
            if !ok {
                return Err(AbortReport {
                    round: 0,
                    culprit: PartyId::Manager(*index),
                    reason: AbortReason::BadKeyProof,
                });
            }
        }
    }
    let contributions: Vec<GroupElement> = announcements.iter().map(|(_, y)| y.clone()).collect();
    Ok(
        combine_public_keys(&config.params, &contributions, counters)
            .expect("at least one manager"),
    )
}

/// Leader-side verification of the shuffled vectors in malicious mode: the
/// input column is reassembled from the round-1 broadcasts plus the disclosed
/// diagonal, and the shuffle proof is checked against it.
pub fn leader_verify_shuffles(
    config: &ProtocolConfig,
    pk: &PublicKey,
    broadcasts: &BTreeMap<u32, Vec<ShareEntry>>,
    vectors: &[ShuffledVector],
) -> Result<(), AbortReport> {
    if config.mode != Mode::Malicious {
        return Ok(());
    }
    let n = config.n;
    for v in vectors {
        let abort = || AbortReport {
            round: 3,
            culprit: PartyId::User(v.point),
            reason: AbortReason::BadShuffleProof,
        };
        let diagonal = v.input_diagonal.as_ref().ok_or_else(abort)?;
        let proof = v.proof.as_ref().ok_or_else(abort)?;
        let column: Option<Vec<Ciphertext>> = (1..=n)
            .map(|row| {
                if row == v.point {
                    Some(diagonal.clone())
                } else {
                    broadcasts
                        .get(&row)
                        .and_then(|entries| entries.iter().find(|e| e.col == v.point))
                        .map(|e| e.ct.clone())
                }
            })
            .collect();
        let column = column.ok_or_else(abort)?;
        if !verify_shuffle(&config.params, pk, &column, &v.cts, proof, &cs_tag(v.point)) {
            return Err(abort());
        }
    }
    Ok(())
}

/// Everything the leader recovers in round 4.
#[derive(Debug, Clone)]
pub struct RecoveredBatch {
    /// Query terms in bucket order (ascending padding tag).
    pub terms: Vec<BigUint>,
    /// Engine answers aligned with `terms`.
    pub answers: Vec<String>,
    pub dropped: Vec<DroppedTag>,
}

/// Round 4, leader only: combine all managers' decryption shares, decode and
/// unpad every matrix entry, group by padding tag, reconstruct the query
/// terms, and fetch the answers.
pub fn leader_recover(
    config: &ProtocolConfig,
    vectors: &[ShuffledVector],
    batches: &BTreeMap<u32, Vec<Vec<DecryptionShare>>>,
    engine: &dyn SearchEngine,
    counters: &mut OpCounters,
) -> RecoveredBatch {
    let params = &config.params;
    let field = &config.field;
    let n_managers = config.managers;

    let mut entries: Vec<(u32, BigUint)> = Vec::with_capacity(vectors.len() * vectors.len());
    for (vec_idx, v) in vectors.iter().enumerate() {
        for (pos, ct) in v.cts.iter().enumerate() {
            let shares: Vec<DecryptionShare> =
                batches.values().map(|b| b[vec_idx][pos].clone()).collect();
            let m = combine_decryption(params, ct, &shares, n_managers, counters)
                .expect("every manager published a complete batch");
            let packed = decode_unchecked(params, &m) - 1u32;
            entries.push((v.point, packed));
        }
    }

    let grouping = group_by_padding(&entries, field);
    let mut terms = Vec::with_capacity(grouping.buckets.len());
    for bucket in &grouping.buckets {
        let term = crate::sharing::reconstruct(&bucket.points, field, counters)
            .expect("buckets hold one share per evaluation point");
        terms.push(term);
    }
    let answers: Vec<String> = terms.iter().map(|t| engine.answer(t)).collect();
    RecoveredBatch {
        terms,
        answers,
        dropped: grouping.dropped,
    }
}

/// Re-derive which share points a user's round-1 entries decrypt to; test
/// and harness introspection with the full key set.
pub fn open_entry_for_test(
    config: &ProtocolConfig,
    keys: &[KeyShare],
    ct: &Ciphertext,
) -> Result<(BigUint, u64), crate::sharing::SharingError> {
    let mut scratch = OpCounters::default();
    let shares: Vec<DecryptionShare> = keys
        .iter()
        .map(|k| td_share(&config.params, k, ct, &mut scratch))
        .collect();
    let m = combine_decryption(&config.params, ct, &shares, config.managers, &mut scratch)
        .expect("all key shares supplied");
    let packed = decode_unchecked(&config.params, &m) - 1u32;
    crate::sharing::unpad(&packed, &config.field)
}
