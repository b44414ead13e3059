//! Canonical state snapshots: stable field order, sectors sorted by
//! (owner, id), files by id. Used for golden-file tests and replay
//! verification.

use serde::Serialize;

use crate::state::{AllocEntry, FileDescriptor, NetworkState, Sector, TaskKind};
use crate::units::{FileId, Tick, Tokens};

#[derive(Serialize)]
pub struct Snapshot<'a> {
    pub clock: Tick,
    pub sectors: Vec<&'a Sector>,
    pub files: Vec<&'a FileDescriptor>,
    pub alloc: Vec<AllocRow<'a>>,
    pub pending: Vec<PendingRow<'a>>,
    pub ledger: LedgerView<'a>,
}

#[derive(Serialize)]
pub struct AllocRow<'a> {
    pub file: FileId,
    pub entries: &'a [AllocEntry],
}

#[derive(Serialize)]
pub struct PendingRow<'a> {
    pub time: Tick,
    pub seq: u64,
    pub task: &'a TaskKind,
}

#[derive(Serialize)]
pub struct LedgerView<'a> {
    pub accounts: &'a std::collections::BTreeMap<crate::units::ActorId, Tokens>,
    pub network_pool: Tokens,
    pub burn_sink: Tokens,
    pub confiscated_pool: Tokens,
    pub escrow_total: Tokens,
    pub minted: u128,
}

/// Builds the canonical snapshot view; maps iterate in key order, so the
/// output is byte-stable for a given state.
pub fn snapshot(state: &NetworkState) -> Snapshot<'_> {
    Snapshot {
        clock: state.clock,
        sectors: state.sectors.values().collect(),
        files: state.files.values().collect(),
        alloc: state
            .alloc
            .iter()
            .map(|(&file, entries)| AllocRow {
                file,
                entries: entries.as_slice(),
            })
            .collect(),
        pending: state
            .pending
            .iter()
            .map(|(&(time, seq), task)| PendingRow { time, seq, task })
            .collect(),
        ledger: LedgerView {
            accounts: &state.ledger.accounts,
            network_pool: state.ledger.network_pool,
            burn_sink: state.ledger.burn_sink,
            confiscated_pool: state.ledger.confiscated_pool,
            escrow_total: state.ledger.escrows.values().map(|e| e.amount).sum(),
            minted: state.ledger.minted,
        },
    }
}

/// Canonical JSON encoding of the snapshot.
pub fn snapshot_json(state: &NetworkState) -> String {
    serde_json::to_string_pretty(&snapshot(state)).expect("snapshot serializes")
}
