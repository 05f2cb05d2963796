//! Threshold-encrypted, arrival-ordered batching with a binding commitment.
//!
//! Per window: dealer key setup, encrypted submissions stamped by the
//! committee, ordering by arrival, commitment, threshold decryption and
//! release verification. Deviations from the commitment become
//! [`SlashingEvidence`].

pub mod aead;
mod commit;
mod committee;
mod envelope;
mod fairness;
pub mod group;
pub mod kem;
pub mod shamir;

pub use commit::{
    canonical, commit_order, decode_list, encode_list, order_window, ordering_key, verify_and_release,
    verify_evidence, EvidenceError, EvidenceKind, OrderingCommitment, PublicLog, SlashingEvidence, Verification,
};
pub use committee::{dkg, Committee, CommitteeConfig, SignedTimestamp, WindowKeys};
pub use envelope::{encrypt_tx, threshold_decrypt, DecryptError, EncryptedTx};
pub use fairness::{measure_fairness, ArrivalRecord, FairnessReport};
pub use group::{Group, SchnorrGroup, Secp256k1};
