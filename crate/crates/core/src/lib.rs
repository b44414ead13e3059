//! Deterministic simulator and analysis library for the FileInsurer
//! decentralized-storage protocol: the full on-chain state machine
//! (sectors, files, allocation table, pending tasks), the insurance
//! economics (deposits, rent, penalties, compensation), adversarial
//! corruption experiments, and closed-form evaluators for the
//! protocol's scalability / robustness / deposit bounds.

pub mod adversary;
pub mod bounds;
pub mod economics;
pub mod engine;
pub mod exec;
pub mod experiments;
pub mod rng;
pub mod sampler;
pub mod state;
pub mod units;

pub use engine::{Engine, EngineEvent, EventSink, Outcome};
pub use state::{NetworkParams, NetworkState, ProtocolError};
pub use units::{ActorId, Bytes, FileId, SectorId, Tick, Tokens, TOKEN_UNIT};
