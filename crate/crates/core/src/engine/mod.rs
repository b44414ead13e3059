//! The protocol engine: request handlers, scheduled maintenance tasks,
//! and the time-advancing event loop.
//!
//! The loop is strictly single-threaded and deterministic: identical
//! (scenario, seed) pairs produce byte-identical event logs. Parallelism
//! happens only across independent engine instances.

mod auto;
mod events;
mod requests;
pub mod segment;

pub use events::{EngineEvent, EventSink, Outcome};

use std::collections::BTreeMap;

use crate::economics::FeeSchedule;
use crate::rng::RngStream;
use crate::state::{
    validator, EntryState, FileState, NetworkParams, NetworkState, ProtocolError, SectorState,
    TaskKind,
};
use crate::units::{ActorId, Bytes, FileId, SectorId, Tick, Tokens};

/// Placement resample budget per replica; the protocol's loop is
/// unbounded but an engine needs termination.
pub const MAX_PLACEMENT_ATTEMPTS: u32 = 1000;

pub struct Engine {
    pub state: NetworkState,
    pub rng: RngStream,
    sink: EventSink,
    next_event_seq: u64,
    notes: Vec<String>,
}

impl Engine {
    pub fn new(
        params: NetworkParams,
        fees: FeeSchedule,
        initial_balances: &BTreeMap<ActorId, Tokens>,
        seed: u64,
        test_mode: bool,
    ) -> Result<Self, ProtocolError> {
        Self::with_sink(params, fees, initial_balances, seed, test_mode, EventSink::Null)
    }

    pub fn with_sink(
        params: NetworkParams,
        fees: FeeSchedule,
        initial_balances: &BTreeMap<ActorId, Tokens>,
        seed: u64,
        test_mode: bool,
        sink: EventSink,
    ) -> Result<Self, ProtocolError> {
        let state = NetworkState::init(params, fees, initial_balances, test_mode)?;
        Ok(Self {
            state,
            rng: RngStream::new(seed),
            sink,
            next_event_seq: 0,
            notes: Vec::new(),
        })
    }

    pub fn log_enabled(&self) -> bool {
        self.sink.enabled()
    }

    /// Events captured so far when running with a memory sink.
    pub fn events(&self) -> &[EngineEvent] {
        match &self.sink {
            EventSink::Memory(events) => events,
            _ => &[],
        }
    }

    pub fn take_events(&mut self) -> Vec<EngineEvent> {
        match &mut self.sink {
            EventSink::Memory(events) => std::mem::take(events),
            _ => Vec::new(),
        }
    }

    pub(crate) fn note(&mut self, build: impl FnOnce() -> String) {
        if self.sink.enabled() {
            self.notes.push(build());
        }
    }

    pub(crate) fn emit(
        &mut self,
        kind: &'static str,
        payload: impl FnOnce() -> serde_json::Value,
        rejected: Option<&ProtocolError>,
    ) -> Result<(), ProtocolError> {
        if self.sink.enabled() {
            let outcome = match rejected {
                None => Outcome::Ok {
                    notes: std::mem::take(&mut self.notes),
                },
                Some(err) => {
                    self.notes.clear();
                    Outcome::Rejected {
                        reason: err.to_string(),
                    }
                }
            };
            let event = EngineEvent {
                seq: self.next_event_seq,
                time: self.state.clock,
                kind,
                payload: payload(),
                outcome,
            };
            self.sink.push(event);
        }
        self.next_event_seq += 1;
        if self.state.test_mode {
            validator::validate(&self.state).map_err(ProtocolError::InvariantViolation)?;
        }
        Ok(())
    }

    /// Samples a sector accepting new files, capacity-proportionally.
    pub fn random_sector(&mut self) -> Result<SectorId, ProtocolError> {
        self.state
            .sampler
            .sample(&mut self.rng)
            .ok_or(ProtocolError::NoSectors)
    }

    /// Executes every pending task with time at or before `to` in
    /// (time, insertion) order, then settles the clock at `to`.
    pub fn advance_time(&mut self, to: Tick) -> Result<(), ProtocolError> {
        if to < self.state.clock {
            return Err(ProtocolError::TimeReversal);
        }
        loop {
            let Some((&(time, seq), _)) = self.state.pending.first_key_value() else {
                break;
            };
            if time > to {
                break;
            }
            let task = self.state.pending.remove(&(time, seq)).expect("task present");
            self.state.clock = time;
            self.run_task(task)?;
        }
        self.state.clock = to;
        Ok(())
    }

    fn run_task(&mut self, task: TaskKind) -> Result<(), ProtocolError> {
        match task {
            TaskKind::CheckAlloc(fid) => self.auto_check_alloc(fid),
            TaskKind::CheckProof(fid) => {
                if let Some(index) = self.auto_check_proof(fid)? {
                    self.auto_refresh(fid, index)?;
                }
                Ok(())
            }
            TaskKind::CheckRefresh(fid, index) => {
                if self.auto_check_refresh(fid, index)? {
                    self.auto_refresh(fid, index)?;
                }
                Ok(())
            }
            TaskKind::RentPeriod => self.rent_period(),
        }
    }

    /// Returns reserved or held space and removes a drained disabled
    /// sector once nothing references it.
    pub(crate) fn release_space(&mut self, id: SectorId, size: Bytes) {
        self.state.free_space(id, size);
        self.drain_check(id);
    }

    pub(crate) fn drain_check(&mut self, id: SectorId) {
        let Some(sector) = self.state.sectors.get(&id) else {
            return;
        };
        if sector.state == SectorState::Disabled && !self.state.sector_referenced(id) {
            self.remove_sector(id);
        }
    }

    pub(crate) fn remove_sector(&mut self, id: SectorId) {
        let sector = self.state.sectors.get_mut(&id).expect("removing unknown sector");
        let refund = sector.deposit;
        let owner = sector.owner;
        sector.deposit = 0;
        sector.state = SectorState::Removed;
        self.state.ledger.credit(owner, refund);
        self.state.stats.sectors_removed += 1;
        if !self.state.test_mode {
            self.state.sectors.remove(&id);
        }
        self.note(|| format!("sector {id} drained; removed with deposit {refund} refunded"));
    }

    /// Drops a file: releases held replicas and open reservations, refunds
    /// open escrows, and tombstones the descriptor (test mode) or removes
    /// it outright.
    pub(crate) fn remove_file(&mut self, fid: FileId, tomb: FileState) {
        let size = self.state.files.get(&fid).expect("removing unknown file").size;
        let entries = self.state.alloc.remove(&fid).unwrap_or_default();
        let mut freed: Vec<SectorId> = Vec::new();
        for (i, entry) in entries.iter().enumerate() {
            if let Some(prev) = entry.prev {
                if self.state.sector(prev).map(|s| s.is_live()).unwrap_or(false) {
                    self.state.free_space(prev, size);
                    freed.push(prev);
                }
            }
            if let Some(next) = entry.next {
                if self.state.sector(next).map(|s| s.is_live()).unwrap_or(false) {
                    self.state.free_space(next, size);
                    freed.push(next);
                }
                crate::economics::refund_escrow(&mut self.state, (fid, i as u32 + 1));
            }
        }
        if self.state.test_mode {
            self.state.files.get_mut(&fid).expect("file present").state = tomb;
        } else {
            self.state.files.remove(&fid);
        }
        for id in freed {
            self.drain_check(id);
        }
    }

    // --- Honest-driver conveniences -------------------------------------
    //
    // Each issues real protocol requests; they exist so scenario scripts
    // and Monte Carlo trials can play the cooperative-provider role
    // without spelling out every confirm and proof.

    /// Confirms every open transfer window whose target is live, acting
    /// as each target's owner. Returns the number of confirmations.
    pub fn confirm_all_open(&mut self) -> Result<u32, ProtocolError> {
        let windows: Vec<(FileId, u32, SectorId)> = self
            .state
            .alloc
            .iter()
            .flat_map(|(&fid, entries)| {
                entries
                    .iter()
                    .enumerate()
                    .filter(|(_, e)| e.state == EntryState::Alloc)
                    .filter_map(move |(i, e)| e.next.map(|next| (fid, i as u32 + 1, next)))
                    .collect::<Vec<_>>()
            })
            .collect();
        let mut confirmed = 0;
        for (fid, index, next) in windows {
            let Ok(sector) = self.state.sector(next) else {
                continue;
            };
            if !sector.is_live() {
                continue;
            }
            let owner = sector.owner;
            self.file_confirm(owner, fid, index, next)?;
            confirmed += 1;
        }
        Ok(confirmed)
    }

    /// Submits a fresh valid proof for every replica held on a live
    /// sector, acting as each holder's owner.
    pub fn prove_all_live(&mut self) -> Result<u32, ProtocolError> {
        let now = self.state.clock;
        let held: Vec<(FileId, u32, SectorId)> = self
            .state
            .alloc
            .iter()
            .flat_map(|(&fid, entries)| {
                entries
                    .iter()
                    .enumerate()
                    .filter_map(move |(i, e)| e.prev.map(|prev| (fid, i as u32 + 1, prev)))
                    .collect::<Vec<_>>()
            })
            .collect();
        let mut proven = 0;
        for (fid, index, prev) in held {
            let Ok(sector) = self.state.sector(prev) else {
                continue;
            };
            if !sector.is_live() {
                continue;
            }
            let owner = sector.owner;
            self.file_prove(owner, fid, index, prev, now, true)?;
            proven += 1;
        }
        Ok(proven)
    }

    /// Advances to `until`, confirming windows and proving replicas just
    /// before each batch of tasks runs.
    pub fn run_honest_until(&mut self, until: Tick) -> Result<(), ProtocolError> {
        loop {
            self.confirm_all_open()?;
            self.prove_all_live()?;
            let next = self.state.pending.first_key_value().map(|(&(t, _), _)| t);
            let step = match next {
                Some(t) if t <= until => t,
                _ => until,
            };
            self.advance_time(step)?;
            if step >= until {
                break;
            }
        }
        self.confirm_all_open()?;
        self.prove_all_live()?;
        Ok(())
    }
}
