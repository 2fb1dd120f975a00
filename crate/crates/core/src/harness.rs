//! Deterministic simulated network, mock search engine, fault injection, and
//! experiment bookkeeping.
//!
//! The network is an ideal broadcast: every message a round produces is
//! delivered at the start of the next round, one broadcast costs one round
//! regardless of recipients, and the scheduler visits parties in canonical
//! (round, sender) order, so two runs with the same inputs produce
//! byte-identical event logs and metrics.

use crate::algebra::GroupParams;
use crate::metrics::{
    AbortReport, CostMetrics, EventLog, EventRecord, OpCounters, PartyId, Recipient,
};
use crate::protocol::{
    leader_recover, leader_verify_shuffles, verify_and_combine_keys, ManagerState, Misbehavior,
    Mode, Payload, ProtocolConfig, ProtocolMessage, RecoveredBatch, SearchEngine, ShareEntry,
    ShuffledVector, UserState,
};
use num_bigint::BigUint;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::time::Instant;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] crate::protocol::ConfigError),
    #[error("the simulator requires the ideal broadcast channel; point-to-point emulation is not modeled")]
    BroadcastRequired,
    #[error("fault {0:?} targets a user index outside 1..=n")]
    FaultBadUser(FaultKind),
    #[error("fault {0:?} targets a manager index outside 1..=N")]
    FaultBadManager(FaultKind),
    #[error("fault {0:?} is only meaningful in malicious mode")]
    FaultNeedsMalicious(FaultKind),
    #[error("fault {kind:?} belongs to round {expected}, plan says {got}")]
    FaultWrongRound {
        kind: FaultKind,
        expected: u32,
        got: u32,
    },
    #[error("two distinct query strings mapped to the same field element")]
    TermCollision,
}

/// Network configuration: the protocol is specified against an ideal
/// broadcast channel and the simulator refuses to run without it rather than
/// miscounting rounds.
#[derive(Debug, Clone)]
pub struct NetworkModel {
    pub broadcast: bool,
}

impl Default for NetworkModel {
    fn default() -> Self {
        NetworkModel { broadcast: true }
    }
}

/// Deterministic stand-in for the web search engine: the answer for a term
/// is "R:" followed by the first 8 hex digits of the term's digest.
#[derive(Debug, Clone, Default)]
pub struct MockEngine;

impl SearchEngine for MockEngine {
    fn answer(&self, term: &BigUint) -> String {
        let digest = Sha256::digest(term.to_bytes_be());
        format!("R:{}", hex::encode(&digest[..4]))
    }
}

/// Submit a set of recovered terms; one answer per term, in order.
pub fn search(engine: &dyn SearchEngine, terms: &[BigUint]) -> Vec<String> {
    terms.iter().map(|t| engine.answer(t)).collect()
}

/// Map a query string to a field element: SHA-256 of the UTF-8 bytes reduced
/// mod the sharing-field order.
pub fn term_for_query(query: &str, field: &crate::algebra::SharingField) -> BigUint {
    let digest = Sha256::digest(query.as_bytes());
    BigUint::from_bytes_be(&digest) % &field.q_tilde
}

/// Kinds of scripted misbehavior the harness can inject.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultKind {
    BadKeyProof,
    BadPlaintextProof,
    BadShuffleProof,
    EquivocateShare,
    ReplayCiphertext,
}

impl FaultKind {
    /// The round whose messages the fault corrupts (0 = setup).
    pub fn natural_round(&self) -> u32 {
        match self {
            FaultKind::BadKeyProof => 0,
            FaultKind::BadPlaintextProof
            | FaultKind::EquivocateShare
            | FaultKind::ReplayCiphertext => 1,
            FaultKind::BadShuffleProof => 2,
        }
    }

    pub fn parse(s: &str) -> Option<FaultKind> {
        match s {
            "key" | "bad-key-proof" => Some(FaultKind::BadKeyProof),
            "plaintext" | "bad-plaintext-proof" => Some(FaultKind::BadPlaintextProof),
            "shuffle" | "bad-shuffle-proof" => Some(FaultKind::BadShuffleProof),
            "equivocate" | "equivocate-share" => Some(FaultKind::EquivocateShare),
            "replay" | "replay-ciphertext" => Some(FaultKind::ReplayCiphertext),
            _ => None,
        }
    }
}

/// One scripted fault: which party misbehaves, in which round, and how.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaultInjection {
    pub party: PartyId,
    pub round: u32,
    pub kind: FaultKind,
}

impl FaultInjection {
    pub fn new(kind: FaultKind, party: PartyId) -> FaultInjection {
        FaultInjection {
            party,
            round: kind.natural_round(),
            kind,
        }
    }
}

/// The full fault script for one run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FaultPlan {
    pub faults: Vec<FaultInjection>,
}

impl FaultPlan {
    pub fn none() -> FaultPlan {
        FaultPlan::default()
    }

    pub fn single(kind: FaultKind, party: PartyId) -> FaultPlan {
        FaultPlan {
            faults: vec![FaultInjection::new(kind, party)],
        }
    }

    /// Check the plan against the configuration: party indices in range,
    /// rounds matching the fault kind, and proof faults only in malicious
    /// mode. Equivocation is undetectable and therefore allowed (and worth
    /// testing) in both modes.
    pub fn validate(&self, config: &ProtocolConfig) -> Result<(), HarnessError> {
        for f in &self.faults {
            if f.round != f.kind.natural_round() {
                return Err(HarnessError::FaultWrongRound {
                    kind: f.kind,
                    expected: f.kind.natural_round(),
                    got: f.round,
                });
            }
            match (f.kind, f.party) {
                (FaultKind::BadKeyProof, PartyId::Manager(i)) => {
                    if i == 0 || i > config.managers {
                        return Err(HarnessError::FaultBadManager(f.kind));
                    }
                }
                (FaultKind::BadKeyProof, _) => {
                    return Err(HarnessError::FaultBadManager(f.kind));
                }
                (_, PartyId::User(i)) => {
                    if i == 0 || i > config.n {
                        return Err(HarnessError::FaultBadUser(f.kind));
                    }
                }
                (_, PartyId::Manager(_)) => {
                    return Err(HarnessError::FaultBadUser(f.kind));
                }
            }
            if config.mode == Mode::SemiHonest && f.kind != FaultKind::EquivocateShare {
                return Err(HarnessError::FaultNeedsMalicious(f.kind));
            }
        }
        Ok(())
    }

    /// The scripted misbehavior for one party, with fault parameters (which
    /// column, which source) fixed deterministically to the first other
    /// index.
    fn misbehavior_for(&self, party: PartyId) -> Option<Misbehavior> {
        let f = self.faults.iter().find(|f| f.party == party)?;
        let other = |i: u32| if i == 1 { 2 } else { 1 };
        Some(match (f.kind, f.party) {
            (FaultKind::BadKeyProof, _) => Misbehavior::BadKeyProof,
            (FaultKind::BadPlaintextProof, PartyId::User(i)) => {
                Misbehavior::BadPlaintextProof { column: other(i) }
            }
            (FaultKind::BadShuffleProof, _) => Misbehavior::BadShuffleProof,
            (FaultKind::EquivocateShare, PartyId::User(i)) => {
                Misbehavior::EquivocateShare { column: other(i) }
            }
            (FaultKind::ReplayCiphertext, PartyId::User(i)) => {
                Misbehavior::ReplayCiphertexts { source: other(i) }
            }
            _ => unreachable!("validated plan"),
        })
    }
}

/// What one run produced besides metrics and events.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// Terms the leader recovered, in bucket order.
    pub recovered_terms: Vec<BigUint>,
    /// Broadcast result set (sorted answers).
    pub result_set: Vec<String>,
    /// Per-user view: every user holds the same broadcast set.
    pub per_user_results: Vec<Vec<String>>,
    /// Introspection: each user's padding tag, indexed by user - 1.
    pub user_paddings: Vec<u64>,
}

/// A finished run: either the outcome or the abort report, plus the
/// deterministic logs.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub result: Result<RunOutcome, AbortReport>,
    pub metrics: CostMetrics,
    pub events: EventLog,
}

struct EngineRun<'a> {
    config: &'a ProtocolConfig,
    metrics: CostMetrics,
    events: EventLog,
}

impl<'a> EngineRun<'a> {
    fn new(config: &'a ProtocolConfig) -> Self {
        EngineRun {
            config,
            metrics: CostMetrics::default(),
            events: EventLog::default(),
        }
    }

    fn log(&mut self, msg: &ProtocolMessage, recipient: Recipient) {
        self.events.push(EventRecord {
            round: msg.round,
            sender: msg.sender,
            recipient,
            payload_type: msg.payload_type(),
            digest: msg.digest(&self.config.params),
        });
        let elements = msg.counted_elements();
        if elements > 0 {
            self.metrics.party_mut(msg.sender).bits_sent += elements * self.config.params.bits_p();
        }
    }

    fn complete_round(&mut self, parties: &[PartyId]) {
        self.metrics.rounds += 1;
        for p in parties {
            self.metrics.party_mut(*p).rounds_seen = self.metrics.rounds;
        }
        let snapshot: BTreeMap<PartyId, u64> = self
            .metrics
            .per_party
            .iter()
            .map(|(id, c)| (*id, c.ops.exp))
            .collect();
        self.metrics.exp_snapshots.push(snapshot);
    }

    fn abort(mut self, report: AbortReport) -> RunReport {
        self.metrics.abort = Some(report.clone());
        RunReport {
            result: Err(report),
            metrics: self.metrics,
            events: self.events,
        }
    }
}

/// Execute one full protocol run over the simulated network.
///
/// `terms` are the users' query terms, already mapped into the sharing field,
/// one per user in label order.
pub fn run_protocol(
    config: &ProtocolConfig,
    terms: &[BigUint],
    plan: &FaultPlan,
    net: &NetworkModel,
    engine: &dyn SearchEngine,
) -> Result<RunReport, HarnessError> {
    config.validate()?;
    plan.validate(config)?;
    if !net.broadcast {
        return Err(HarnessError::BroadcastRequired);
    }
    if terms.len() != config.n as usize {
        return Err(crate::protocol::ConfigError::QueryCount {
            expected: config.n,
            got: terms.len() as u32,
        }
        .into());
    }

    let mut run = EngineRun::new(config);
    let n = config.n;
    let all_parties: Vec<PartyId> = (1..=n)
        .map(PartyId::User)
        .chain((1..=config.managers).map(PartyId::Manager))
        .collect();

    // --- Setup: managers broadcast key contributions (and proofs). --------
    let mut managers: Vec<ManagerState> = (1..=config.managers)
        .map(|i| {
            let mut m = ManagerState::new(config, i);
            m.misbehavior = plan.misbehavior_for(PartyId::Manager(i));
            m
        })
        .collect();

    let mut announcements = Vec::new();
    let mut key_proofs = BTreeMap::new();
    for m in managers.iter_mut() {
        let idx = m.index;
        let mut setup_ops = OpCounters::default();
        let (y, proof) = m.contribute(config, &mut setup_ops);
        run.metrics
            .setup_ops
            .entry(PartyId::Manager(idx))
            .or_default()
            .merge(&setup_ops);
        let msg = ProtocolMessage {
            sender: PartyId::Manager(idx),
            round: 0,
            payload: Payload::KeyShareAnnouncement {
                index: idx,
                y: y.clone(),
            },
        };
        run.log(&msg, Recipient::All);
        if let Some(p) = proof {
            let pmsg = ProtocolMessage {
                sender: PartyId::Manager(idx),
                round: 0,
                payload: Payload::ProofAttachment {
                    index: idx,
                    proof: p.clone(),
                },
            };
            run.log(&pmsg, Recipient::All);
            key_proofs.insert(idx, p);
        }
        announcements.push((idx, y));
    }
    run.metrics.setup_rounds = 1;

    // Every party verifies and combines locally; the leader's setup counter
    // carries the combination cost.
    let leader = crate::group_setup::elect_leader(&(1..=config.managers).collect::<Vec<u32>>())
        .expect("manager pool is nonempty");
    let mut leader_setup = OpCounters::default();
    let pk = match verify_and_combine_keys(config, &announcements, &key_proofs, &mut leader_setup) {
        Ok(pk) => pk,
        Err(report) => return Ok(run.abort(report)),
    };
    run.metrics
        .setup_ops
        .entry(PartyId::Manager(leader))
        .or_default()
        .merge(&leader_setup);
    if pk.is_degenerate() {
        run.metrics
            .warnings
            .push("degenerate-public-key: contributions multiply to the identity".into());
    }

    // --- Round 1: users broadcast encrypted share lists. ------------------
    let mut users: Vec<UserState> = (1..=n)
        .map(|i| {
            let mut u = UserState::new(config, i, terms[(i - 1) as usize].clone());
            u.misbehavior = plan.misbehavior_for(PartyId::User(i));
            u
        })
        .collect();

    let mut broadcasts: BTreeMap<u32, Vec<ShareEntry>> = BTreeMap::new();
    for u in users.iter_mut() {
        let idx = u.index;
        let mut counters = run.metrics.party_mut(PartyId::User(idx)).ops;
        let entries = u.round1(config, &pk, &mut counters);
        run.metrics.party_mut(PartyId::User(idx)).ops = counters;
        broadcasts.insert(idx, entries);
    }

    // Replaying users substitute a relabeled copy of their source's list.
    for u in &users {
        if let Some(Misbehavior::ReplayCiphertexts { source }) = u.misbehavior {
            let replayed = replay_entries(&broadcasts[&source], u.index, source, n);
            broadcasts.insert(u.index, replayed);
        }
    }

    for (&idx, entries) in &broadcasts {
        let msg = ProtocolMessage {
            sender: PartyId::User(idx),
            round: 1,
            payload: Payload::EncryptedShareList {
                entries: entries.clone(),
            },
        };
        run.log(&msg, Recipient::All);
    }
    run.complete_round(&all_parties);

    // --- Round 2: users shuffle their columns toward the managers. --------
    let mut vectors: Vec<ShuffledVector> = Vec::with_capacity(n as usize);
    for u in users.iter_mut() {
        let idx = u.index;
        let mut counters = run.metrics.party_mut(PartyId::User(idx)).ops;
        let out = u.round2(config, &pk, &broadcasts, &mut counters);
        run.metrics.party_mut(PartyId::User(idx)).ops = counters;
        match out {
            Ok(v) => vectors.push(v),
            Err(report) => return Ok(run.abort(report)),
        }
    }
    for v in &vectors {
        let msg = ProtocolMessage {
            sender: PartyId::User(v.point),
            round: 2,
            payload: Payload::ShuffledVector(v.clone()),
        };
        run.log(&msg, Recipient::Managers);
    }
    run.complete_round(&all_parties);

    // --- Round 3: leader verifies shuffles; managers publish decryption
    // shares for every ciphertext.
    if let Err(report) = leader_verify_shuffles(config, &pk, &broadcasts, &vectors) {
        return Ok(run.abort(report));
    }
    let mut batches: BTreeMap<u32, Vec<Vec<crate::elgamal::DecryptionShare>>> = BTreeMap::new();
    for m in &managers {
        let idx = m.index;
        let mut counters = run.metrics.party_mut(PartyId::Manager(idx)).ops;
        let batch = m.decrypt_batch(config, &vectors, &mut counters);
        run.metrics.party_mut(PartyId::Manager(idx)).ops = counters;
        let msg = ProtocolMessage {
            sender: PartyId::Manager(idx),
            round: 3,
            payload: Payload::DecryptionShareBatch {
                index: idx,
                shares: batch.clone(),
            },
        };
        run.log(&msg, Recipient::All);
        batches.insert(idx, batch);
    }
    run.complete_round(&all_parties);

    // --- Round 4: leader combines, reconstructs, queries, broadcasts. -----
    let mut counters = run.metrics.party_mut(PartyId::Manager(leader)).ops;
    let RecoveredBatch {
        terms: recovered_terms,
        answers,
        dropped,
    } = leader_recover(config, &vectors, &batches, engine, &mut counters);
    run.metrics.party_mut(PartyId::Manager(leader)).ops = counters;
    for d in &dropped {
        run.metrics.dropped_tags.push(d.alpha);
    }
    // Conservation: every input term either reconstructs or was dropped.
    run.metrics.dropped_terms = n - recovered_terms.len() as u32;

    let mut result_set = answers.clone();
    result_set.sort();
    let msg = ProtocolMessage {
        sender: PartyId::Manager(leader),
        round: 4,
        payload: Payload::QueryResultSet {
            answers: result_set.clone(),
        },
    };
    run.log(&msg, Recipient::All);
    run.complete_round(&all_parties);

    for u in users.iter_mut() {
        u.results = Some(result_set.clone());
    }

    let outcome = RunOutcome {
        recovered_terms,
        result_set: result_set.clone(),
        per_user_results: vec![result_set; n as usize],
        user_paddings: users
            .iter()
            .map(|u| u.padding_tag().expect("round 1 ran"))
            .collect(),
    };
    Ok(RunReport {
        result: Ok(outcome),
        metrics: run.metrics,
        events: run.events,
    })
}

/// Build the replayer's broadcast list from its source's entries: same
/// ciphertexts and proofs, relabeled as coming from the replayer.
fn replay_entries(
    source_entries: &[ShareEntry],
    replayer: u32,
    source: u32,
    n: u32,
) -> Vec<ShareEntry> {
    let mut out = Vec::with_capacity((n - 1) as usize);
    for col in 1..=n {
        if col == replayer {
            continue;
        }
        // The source never produced a column-`source` broadcast entry; reuse
        // its entry for the replayer's own column in that slot.
        let want = if col == source { replayer } else { col };
        let mut e = source_entries
            .iter()
            .find(|e| e.col == want)
            .expect("source list covers every other column")
            .clone();
        e.row = replayer;
        e.col = col;
        out.push(e);
    }
    out
}

/// Everything an experiment emits: the run report plus the serialized
/// artifacts the CLI writes to disk.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub report: RunReport,
    /// `user,query,answer` rows; each user locates its answer by re-deriving
    /// its own term's key.
    pub results_csv: String,
    pub metrics_csv: String,
    pub events_log: String,
    pub summary_json: String,
}

/// Run the protocol on query strings under the fault plan and collect the
/// deterministic artifacts.
pub fn run_experiment(
    config: &ProtocolConfig,
    queries: &[String],
    plan: &FaultPlan,
    engine: &MockEngine,
) -> Result<Experiment, HarnessError> {
    let net = NetworkModel::default();
    let terms: Vec<BigUint> = queries
        .iter()
        .map(|q| term_for_query(q, &config.field))
        .collect();
    // Repeated query strings are fine (the users just share an answer), but
    // two distinct strings hashing to one field element would be silently
    // aliased.
    {
        let mut by_term: BTreeMap<&BigUint, &String> = BTreeMap::new();
        for (term, query) in terms.iter().zip(queries) {
            if let Some(existing) = by_term.insert(term, query) {
                if existing != query {
                    return Err(HarnessError::TermCollision);
                }
            }
        }
    }

    let report = run_protocol(config, &terms, plan, &net, engine)?;

    let mut results_csv = String::from("user,query,answer\n");
    if report.result.is_ok() {
        for (i, q) in queries.iter().enumerate() {
            let answer = engine.answer(&terms[i]);
            results_csv.push_str(&format!("u{},{},{}\n", i + 1, q, answer));
        }
    }

    let summary_json = summary_json(config, &report);
    Ok(Experiment {
        metrics_csv: report.metrics.to_csv(),
        events_log: report.events.to_log_string(),
        results_csv,
        summary_json,
        report,
    })
}

/// Convenience wrapper for honest runs with the mock engine.
pub fn run(config: &ProtocolConfig, terms: &[BigUint]) -> Result<RunReport, HarnessError> {
    run_protocol(
        config,
        terms,
        &FaultPlan::none(),
        &NetworkModel::default(),
        &MockEngine,
    )
}

/// Summary with measured totals next to the cost-model predictions.
fn summary_json(config: &ProtocolConfig, report: &RunReport) -> String {
    let n = u64::from(config.n);
    let log_p = config.params.bits_p();
    let m = &report.metrics;
    let user_exp: Vec<u64> = (1..=config.n)
        .map(|i| {
            m.per_party
                .get(&PartyId::User(i))
                .map(|c| c.ops.exp)
                .unwrap_or(0)
        })
        .collect();
    let manager_exp: Vec<u64> = (1..=config.managers)
        .map(|i| {
            m.per_party
                .get(&PartyId::Manager(i))
                .map(|c| c.ops.exp)
                .unwrap_or(0)
        })
        .collect();
    let user_mul: Vec<u64> = (1..=config.n)
        .map(|i| {
            m.per_party
                .get(&PartyId::User(i))
                .map(|c| c.ops.mul)
                .unwrap_or(0)
        })
        .collect();
    let value = serde_json::json!({
        "n": config.n,
        "managers": config.managers,
        "mode": config.mode.as_str(),
        "log_p_bits": log_p,
        "rounds": m.rounds,
        "setup_rounds": m.setup_rounds,
        "predicted": {
            "rounds": 4,
            "user_exp_each": 4 * n,
            "user_exp_round1": 2 * n,
            "user_exp_round2": 2 * n,
            "manager_exp_each": n * n,
            // Group multiplications plus the quadratic field work of naive
            // polynomial evaluation; the model's lower bound is 3n.
            "user_mul_lower_bound": 3 * n,
            "user_mul_each": 3 * n + n * (n - 1),
            "total_bits": 2 * n * (2 * n - 1) * log_p,
        },
        "measured": {
            "user_exp": user_exp,
            "user_mul": user_mul,
            "manager_exp": manager_exp,
            "total_exp": m.total_exp(),
            "total_mul": m.total_mul(),
            "total_bits": m.total_bits(),
        },
        "dropped_tags": m.dropped_tags,
        "dropped_terms": m.dropped_terms,
        "warnings": m.warnings,
        "abort": m.abort.as_ref().map(|a| serde_json::json!({
            "round": a.round,
            "culprit": a.culprit.to_string(),
            "reason": a.reason.code(),
        })),
    });
    serde_json::to_string_pretty(&value).expect("json encoding cannot fail") + "\n"
}

/// One row of the manager-submission timing report.
#[derive(Debug, Clone)]
pub struct BenchmarkRow {
    pub n: u32,
    pub mean_ms: f64,
    pub std_ms: f64,
    pub runs: u32,
}

/// Time the manager-side submission work (decryption shares, combination,
/// reconstruction, engine query) for each group size. The mixing phases run
/// once per size; the timed section is repeated `runs` times on the same
/// vectors. Informative only; no threshold.
pub fn benchmark(
    params: &GroupParams,
    q_tilde: &BigUint,
    sizes: &[u32],
    runs: u32,
    seed: u64,
) -> Vec<BenchmarkRow> {
    let engine = MockEngine;
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let field = crate::algebra::SharingField {
            q_tilde: q_tilde.clone(),
            n,
        };
        let config = ProtocolConfig {
            n,
            managers: 1,
            mode: Mode::SemiHonest,
            shuffle_reps: 1,
            params: params.clone(),
            field,
            seed,
        };
        config.validate().expect("benchmark configuration is sound");

        // Mixing phases, once.
        let mut scratch = OpCounters::default();
        let mut manager = ManagerState::new(&config, 1);
        let (y, _) = manager.contribute(&config, &mut scratch);
        let pk = verify_and_combine_keys(&config, &[(1, y)], &BTreeMap::new(), &mut scratch)
            .expect("single honest manager");
        let mut users: Vec<UserState> = (1..=n)
            .map(|i| UserState::new(&config, i, BigUint::from(i)))
            .collect();
        let mut broadcasts = BTreeMap::new();
        for u in users.iter_mut() {
            broadcasts.insert(u.index, u.round1(&config, &pk, &mut scratch));
        }
        let vectors: Vec<ShuffledVector> = users
            .iter_mut()
            .map(|u| {
                u.round2(&config, &pk, &broadcasts, &mut scratch)
                    .expect("honest run")
            })
            .collect();

        // Timed section: the full manager submission path.
        let mut samples = Vec::with_capacity(runs as usize);
        for _ in 0..runs {
            let started = Instant::now();
            let mut counters = OpCounters::default();
            let batch = manager.decrypt_batch(&config, &vectors, &mut counters);
            let batches = BTreeMap::from([(1u32, batch)]);
            let recovered = leader_recover(&config, &vectors, &batches, &engine, &mut counters);
            assert_eq!(recovered.terms.len() + recovered.dropped.len(), {
                let mut tags: Vec<u64> = users.iter().map(|u| u.padding_tag().unwrap()).collect();
                tags.sort_unstable();
                tags.dedup();
                tags.len()
            });
            samples.push(started.elapsed().as_secs_f64() * 1e3);
        }
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let var =
            samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / samples.len() as f64;
        rows.push(BenchmarkRow {
            n,
            mean_ms: mean,
            std_ms: var.sqrt(),
            runs,
        });
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::generate_params;

    fn config(n: u32, managers: u32, mode: Mode, seed: u64) -> ProtocolConfig {
        let (params, field) = generate_params(64, n, b"harness-tests").unwrap();
        ProtocolConfig {
            n,
            managers,
            mode,
            shuffle_reps: 8,
            params,
            field,
            seed,
        }
    }

    fn distinct_terms(config: &ProtocolConfig) -> Vec<BigUint> {
        (0..config.n)
            .map(|i| term_for_query(&format!("q{i}"), &config.field))
            .collect()
    }

    #[test]
    fn honest_run_recovers_the_input_multiset() {
        let cfg = config(4, 3, Mode::SemiHonest, 5);
        let terms = distinct_terms(&cfg);
        let report = run(&cfg, &terms).unwrap();
        let outcome = report.result.unwrap();
        let mut got = outcome.recovered_terms.clone();
        got.sort();
        let mut want = terms.clone();
        want.sort();
        // No tag collision under this seed.
        assert_eq!(report.metrics.dropped_terms, 0);
        assert_eq!(got, want);
        assert_eq!(report.metrics.rounds, 4);
        assert_eq!(report.metrics.setup_rounds, 1);
        assert_eq!(outcome.per_user_results.len(), 4);
        assert!(outcome
            .per_user_results
            .iter()
            .all(|r| r == &outcome.result_set));
    }

    #[test]
    fn cost_counters_match_the_model() {
        let cfg = config(5, 2, Mode::SemiHonest, 8);
        let n = u64::from(cfg.n);
        let terms = distinct_terms(&cfg);
        let report = run(&cfg, &terms).unwrap();
        assert!(report.result.is_ok());
        let m = &report.metrics;
        for i in 1..=cfg.n {
            let user = PartyId::User(i);
            assert_eq!(m.per_party[&user].ops.exp, 4 * n);
            assert_eq!(m.exp_in_round(user, 1), 2 * n);
            assert_eq!(m.exp_in_round(user, 2), 2 * n);
            // 3n group multiplications plus the Horner field work.
            assert_eq!(m.per_party[&user].ops.mul, 3 * n + n * (n - 1));
        }
        for j in 1..=cfg.managers {
            assert_eq!(m.per_party[&PartyId::Manager(j)].ops.exp, n * n);
            assert_eq!(m.setup_ops[&PartyId::Manager(j)].exp, 1);
        }
        assert_eq!(m.total_bits(), 2 * n * (2 * n - 1) * cfg.params.bits_p());
    }

    #[test]
    fn malicious_honest_run_completes_with_identical_counters() {
        let cfg = config(3, 2, Mode::Malicious, 13);
        let terms = distinct_terms(&cfg);
        let report = run(&cfg, &terms).unwrap();
        assert!(report.result.is_ok());
        let n = u64::from(cfg.n);
        for i in 1..=cfg.n {
            assert_eq!(report.metrics.per_party[&PartyId::User(i)].ops.exp, 4 * n);
        }
        assert_eq!(report.metrics.rounds, 4);
    }

    #[test]
    fn experiment_artifacts_are_deterministic() {
        let cfg = config(3, 2, Mode::SemiHonest, 77);
        let queries: Vec<String> = (0..3).map(|i| format!("q{i}")).collect();
        let a = run_experiment(&cfg, &queries, &FaultPlan::none(), &MockEngine).unwrap();
        let b = run_experiment(&cfg, &queries, &FaultPlan::none(), &MockEngine).unwrap();
        assert_eq!(a.events_log, b.events_log);
        assert_eq!(a.metrics_csv, b.metrics_csv);
        assert_eq!(a.summary_json, b.summary_json);
        assert_eq!(a.results_csv, b.results_csv);
        assert!(a.events_log.lines().count() > 0);

        let c = run_experiment(
            &{
                let mut c = cfg.clone();
                c.seed = 78;
                c
            },
            &queries,
            &FaultPlan::none(),
            &MockEngine,
        )
        .unwrap();
        assert_ne!(a.events_log, c.events_log);
    }

    #[test]
    fn shuffle_fault_aborts_naming_the_user_after_two_rounds() {
        let cfg = config(4, 2, Mode::Malicious, 21);
        let queries: Vec<String> = (0..4).map(|i| format!("q{i}")).collect();
        let plan = FaultPlan::single(FaultKind::BadShuffleProof, PartyId::User(3));
        let exp = run_experiment(&cfg, &queries, &plan, &MockEngine).unwrap();
        let abort = exp.report.result.unwrap_err();
        assert_eq!(abort.culprit, PartyId::User(3));
        assert_eq!(abort.round, 3);
        assert_eq!(exp.report.metrics.rounds, 2);
        assert!(exp.summary_json.contains("bad-shuffle-proof"));
    }

    #[test]
    fn plan_validation_rejects_mismatched_faults() {
        let cfg = config(3, 2, Mode::SemiHonest, 3);
        let plan = FaultPlan::single(FaultKind::BadShuffleProof, PartyId::User(1));
        assert!(matches!(
            plan.validate(&cfg),
            Err(HarnessError::FaultNeedsMalicious(_))
        ));

        let cfg = config(3, 2, Mode::Malicious, 3);
        let plan = FaultPlan::single(FaultKind::BadKeyProof, PartyId::User(1));
        assert!(matches!(
            plan.validate(&cfg),
            Err(HarnessError::FaultBadManager(_))
        ));
        let plan = FaultPlan::single(FaultKind::BadPlaintextProof, PartyId::User(9));
        assert!(matches!(
            plan.validate(&cfg),
            Err(HarnessError::FaultBadUser(_))
        ));

        let mut plan = FaultPlan::single(FaultKind::BadShuffleProof, PartyId::User(1));
        plan.faults[0].round = 1;
        assert!(matches!(
            plan.validate(&cfg),
            Err(HarnessError::FaultWrongRound { .. })
        ));
    }

    #[test]
    fn broadcast_is_required() {
        let cfg = config(2, 1, Mode::SemiHonest, 1);
        let terms = distinct_terms(&cfg);
        let net = NetworkModel { broadcast: false };
        let err = run_protocol(&cfg, &terms, &FaultPlan::none(), &net, &MockEngine).unwrap_err();
        assert_eq!(err, HarnessError::BroadcastRequired);
    }

    #[test]
    fn mock_engine_is_deterministic_and_collision_free_at_test_scale() {
        let engine = MockEngine;
        let t1 = BigUint::from(7u32);
        assert_eq!(engine.answer(&t1), engine.answer(&t1));
        assert!(engine.answer(&t1).starts_with("R:"));
        let terms: Vec<BigUint> = (0u32..200).map(BigUint::from).collect();
        let answers = search(&engine, &terms);
        assert_eq!(answers.len(), 200);
        let mut unique = answers.clone();
        unique.sort();
        unique.dedup();
        assert_eq!(unique.len(), 200);
    }

    #[test]
    fn benchmark_reports_one_row_per_size() {
        let (params, field) = generate_params(64, 4, b"bench-test").unwrap();
        let rows = benchmark(&params, &field.q_tilde, &[3, 4], 2, 5);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].n, 3);
        assert!(rows.iter().all(|r| r.mean_ms >= 0.0 && r.runs == 2));
    }
}
