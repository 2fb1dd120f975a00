//! Constant-round private web search over a simulated broadcast network.
//!
//! A group of `n` users wants to submit query terms to a search engine
//! without the engine (or each other) learning who asked what. Each user
//! Shamir-shares its term, tags the shares with a random padding, encrypts
//! them under a threshold El Gamal key held jointly by `N` group managers,
//! and broadcasts them. Each user then rerandomizes and shuffles the
//! ciphertext column addressed to it, so that by the time the managers
//! jointly decrypt, shares can be regrouped by padding tag but not traced to
//! their owners. The whole exchange takes four rounds after setup.
//!
//! The crate provides the building blocks (subgroup algebra, threshold
//! El Gamal, padded sharing, zero-knowledge proofs), the user/manager state
//! machines in semi-honest and malicious variants, a group-construction
//! protocol over a public bulletin board together with the malicious-grouping
//! probability analysis, and a deterministic simulation harness that checks
//! the round, computation, and communication cost model.

pub mod algebra;
pub mod elgamal;
pub mod group_setup;
pub mod harness;
pub mod metrics;
pub mod protocol;
pub mod sharing;
pub mod zkp;

pub use algebra::{
    decode_from_group, encode_to_group, generate_params, params_to_text, AlgebraError, Exponent,
    GroupElement, GroupParams, SharingField,
};
pub use elgamal::{
    combine_decryption, combine_public_keys, encrypt, rerandomize, td_share, tkg_contribute,
    Ciphertext, DecryptionShare, KeyShare, PublicKey,
};
pub use group_setup::{
    assign_groups, elect_leader, malgrp_bound, malgrp_exact, rational_to_f64, BulletinBoard,
    GroupAssignment,
};
pub use harness::{
    benchmark, run, run_experiment, search, term_for_query, Experiment, FaultInjection, FaultKind,
    FaultPlan, MockEngine, NetworkModel, RunOutcome, RunReport,
};
pub use metrics::{AbortReason, AbortReport, CostMetrics, EventLog, OpCounters, PartyId};
pub use protocol::{Mode, ProtocolConfig, SearchEngine};
pub use sharing::{group_by_padding, pad, reconstruct, share, unpad, PaddedShare, SharePoint};
