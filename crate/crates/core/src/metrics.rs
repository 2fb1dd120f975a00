//! Operation counters, per-party cost accounting, and the event log.
//!
//! The cost model counts modular exponentiations and multiplications per
//! party, and transmitted bits at `ceil(log2 p)` per group element of
//! ciphertext payload. Zero-knowledge proof work is deliberately kept out of
//! these counters; callers hand proof subroutines a scratch counter.

use std::collections::BTreeMap;
use std::fmt;

/// Running totals of modular exponentiations and multiplications.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounters {
    pub exp: u64,
    pub mul: u64,
}

impl OpCounters {
    pub fn tally_exp(&mut self, k: u64) {
        self.exp += k;
    }

    pub fn tally_mul(&mut self, k: u64) {
        self.mul += k;
    }

    pub fn merge(&mut self, other: &OpCounters) {
        self.exp += other.exp;
        self.mul += other.mul;
    }
}

/// Identity of a simulated party. Users sort before managers, each by index,
/// which fixes the canonical scheduling and log order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PartyId {
    User(u32),
    Manager(u32),
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartyId::User(i) => write!(f, "u{i}"),
            PartyId::Manager(i) => write!(f, "m{i}"),
        }
    }
}

/// Per-party cost totals for the post-setup protocol rounds.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PartyCost {
    pub ops: OpCounters,
    pub bits_sent: u64,
    pub rounds_seen: u32,
}

/// Why a malicious-mode run was terminated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbortReason {
    BadKeyProof,
    BadPlaintextProof,
    BadShuffleProof,
}

impl AbortReason {
    pub fn code(&self) -> &'static str {
        match self {
            AbortReason::BadKeyProof => "bad-key-proof",
            AbortReason::BadPlaintextProof => "bad-plaintext-proof",
            AbortReason::BadShuffleProof => "bad-shuffle-proof",
        }
    }
}

/// Abort record: the round during which the failure was detected (0 = setup)
/// and the party whose message failed verification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbortReport {
    pub round: u32,
    pub culprit: PartyId,
    pub reason: AbortReason,
}

impl AbortReport {
    /// `ABORT,round,culprit,reason-code`
    pub fn to_line(&self) -> String {
        format!(
            "ABORT,{},{},{}",
            self.round,
            self.culprit,
            self.reason.code()
        )
    }
}

/// Cost metrics for one protocol execution.
#[derive(Debug, Clone, Default)]
pub struct CostMetrics {
    /// Post-setup counters per party.
    pub per_party: BTreeMap<PartyId, PartyCost>,
    /// Setup-phase operation counters, kept apart so the query-phase totals
    /// line up with the per-round cost formulas.
    pub setup_ops: BTreeMap<PartyId, OpCounters>,
    /// Post-setup rounds completed.
    pub rounds: u32,
    /// Setup rounds completed (constant by construction).
    pub setup_rounds: u32,
    /// Cumulative per-party exponentiation counts snapshotted at the end of
    /// each post-setup round.
    pub exp_snapshots: Vec<BTreeMap<PartyId, u64>>,
    /// Padding tags whose reconstruction buckets were dropped.
    pub dropped_tags: Vec<u64>,
    /// Query terms lost to dropped buckets.
    pub dropped_terms: u32,
    /// Set when the run aborted.
    pub abort: Option<AbortReport>,
    /// Non-fatal observations (e.g. a degenerate public key).
    pub warnings: Vec<String>,
}

impl CostMetrics {
    pub fn party_mut(&mut self, id: PartyId) -> &mut PartyCost {
        self.per_party.entry(id).or_default()
    }

    pub fn total_exp(&self) -> u64 {
        self.per_party.values().map(|c| c.ops.exp).sum()
    }

    pub fn total_mul(&self) -> u64 {
        self.per_party.values().map(|c| c.ops.mul).sum()
    }

    pub fn total_bits(&self) -> u64 {
        self.per_party.values().map(|c| c.bits_sent).sum()
    }

    /// Exponentiations a party spent in one specific post-setup round.
    pub fn exp_in_round(&self, id: PartyId, round: u32) -> u64 {
        let idx = round as usize;
        if idx == 0 || idx > self.exp_snapshots.len() {
            return 0;
        }
        let after = self.exp_snapshots[idx - 1].get(&id).copied().unwrap_or(0);
        let before = if idx == 1 {
            0
        } else {
            self.exp_snapshots[idx - 2].get(&id).copied().unwrap_or(0)
        };
        after - before
    }

    /// `party,exp,mul,bits_sent,rounds_seen` rows in canonical party order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("party,exp,mul,bits_sent,rounds_seen\n");
        for (id, cost) in &self.per_party {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                id, cost.ops.exp, cost.ops.mul, cost.bits_sent, cost.rounds_seen
            ));
        }
        out
    }
}

/// Message recipient as it appears in the event log: everyone, the manager
/// group, or a single party.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recipient {
    All,
    Managers,
    Party(PartyId),
}

impl fmt::Display for Recipient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Recipient::All => write!(f, "*"),
            Recipient::Managers => write!(f, "m*"),
            Recipient::Party(p) => write!(f, "{p}"),
        }
    }
}

/// One delivered message: `round,sender,recipient,payload-type,digest`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRecord {
    pub round: u32,
    pub sender: PartyId,
    pub recipient: Recipient,
    pub payload_type: &'static str,
    pub digest: String,
}

impl EventRecord {
    pub fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.round, self.sender, self.recipient, self.payload_type, self.digest
        )
    }
}

/// Ordered log of every message the simulated network delivered.
#[derive(Debug, Clone, Default)]
pub struct EventLog {
    pub records: Vec<EventRecord>,
}

impl EventLog {
    pub fn push(&mut self, record: EventRecord) {
        self.records.push(record);
    }

    pub fn to_log_string(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&r.to_line());
            out.push('\n');
        }
        out
    }
}
