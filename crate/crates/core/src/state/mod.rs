//! Protocol state: network parameters, sectors, file descriptors, the
//! allocation table, the pending task list, and the token ledger.
//!
//! State mutates only through the engine's event loop (single writer);
//! values are freely shareable read-only and deep-copyable for parallel
//! analysis.

pub mod snapshot;
pub mod validator;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::economics::FeeSchedule;
use crate::sampler::CapacitySampler;
use crate::units::{ActorId, Bytes, FileId, SectorId, Tick, Tokens};

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("file value is not a positive multiple of min_value")]
    ValueNotMultiple,
    #[error("file size exceeds size_limit")]
    FileTooLarge,
    #[error("placement collided {0} times; giving up")]
    CollisionExhausted(u32),
    #[error("caller does not own the target")]
    NotOwner,
    #[error("sector does not match the allocation entry")]
    WrongSector,
    #[error("target is in the wrong state for this request")]
    BadState,
    #[error("proof rejected")]
    InvalidProof,
    #[error("capacity is not a positive multiple of min_capacity")]
    BadCapacity,
    #[error("balance cannot cover the required deposit")]
    InsufficientFunds,
    #[error("balance cannot cover the required charge")]
    InsufficientBalance,
    #[error("unknown file")]
    UnknownFile,
    #[error("unknown sector")]
    UnknownSector,
    #[error("unknown actor")]
    UnknownActor,
    #[error("no sector currently accepts new files")]
    NoSectors,
    #[error("every replica of the file is corrupted")]
    NoLiveReplica,
    #[error("cannot advance the clock backwards")]
    TimeReversal,
    #[error("file fits within size_limit; nothing to split")]
    NotLarge,
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
}

/// Network-wide protocol constants.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NetworkParams {
    /// Smallest sector size; every capacity is an integer multiple of it.
    pub min_capacity: Bytes,
    /// Smallest file value; every value is an integer multiple of it.
    pub min_value: Tokens,
    /// Replicas stored per `min_value` of file value.
    pub k: u32,
    /// Design constant N_v^m / N_s.
    pub cap_para: f64,
    /// Deposit ratio applied when pricing sector deposits.
    pub gamma_deposit: f64,
    /// Allowed transfer time per byte; delays round up to whole ticks.
    pub delay_per_size: f64,
    /// Mean number of proof cycles between refreshes of a replica.
    pub avg_refresh: u32,
    /// Ticks between inspection proofs of a file.
    pub proof_cycle: Tick,
    /// Proof staleness past which the holder is penalized.
    pub proof_due: Tick,
    /// Proof staleness past which the holder's deposit is confiscated.
    pub proof_deadline: Tick,
    /// Size of one capacity replica.
    pub cr_size: Bytes,
    /// Largest single file; bigger files enter only via segmentation.
    pub size_limit: Bytes,
    /// Security parameter for the tail bounds.
    pub c: f64,
    /// Fraction of the remaining deposit burned per penalty.
    pub penalty_fraction: f64,
}

impl NetworkParams {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        let fail = |msg: &str| Err(ProtocolError::InvalidParams(msg.to_string()));
        if self.min_capacity == 0 {
            return fail("min_capacity must be positive");
        }
        if self.min_value == 0 {
            return fail("min_value must be positive");
        }
        if self.k < 1 {
            return fail("k must be at least 1");
        }
        if self.cr_size == 0 {
            return fail("cr_size must be positive");
        }
        if self.size_limit > self.min_capacity {
            return fail("size_limit must not exceed min_capacity");
        }
        if self.proof_cycle == 0 {
            return fail("proof_cycle must be positive");
        }
        if self.proof_cycle > self.proof_due {
            return fail("proof_cycle must not exceed proof_due");
        }
        if self.proof_due >= self.proof_deadline {
            return fail("proof_due must be strictly below proof_deadline");
        }
        if !(self.c > 0.0 && self.c < 1.0) {
            return fail("c must lie in (0, 1)");
        }
        if !(self.cap_para > 0.0) {
            return fail("cap_para must be positive");
        }
        if !(self.gamma_deposit >= 0.0 && self.gamma_deposit.is_finite()) {
            return fail("gamma_deposit must be a finite non-negative ratio");
        }
        if !(self.delay_per_size >= 0.0 && self.delay_per_size.is_finite()) {
            return fail("delay_per_size must be finite and non-negative");
        }
        if self.avg_refresh < 1 {
            return fail("avg_refresh must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.penalty_fraction) {
            return fail("penalty_fraction must lie in [0, 1]");
        }
        Ok(())
    }

    /// Transfer window for a file of the given size, rounded up to the
    /// next tick; never zero, so a window always closes strictly after it
    /// opens.
    pub fn transfer_delay(&self, size: Bytes) -> Tick {
        ((self.delay_per_size * size as f64).ceil() as Tick).max(1)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectorState {
    Normal,
    Disabled,
    Corrupted,
    Removed,
}

/// A provider's storage unit. `free_cap` counts space not committed to
/// file replicas (held or reserved); capacity replicas live inside the
/// free space, so `free_cap - cr_count * cr_size` is the unsealed rest.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Sector {
    pub owner: ActorId,
    pub index: u32,
    pub capacity: Bytes,
    pub free_cap: Bytes,
    pub cr_count: u64,
    pub deposit: Tokens,
    pub state: SectorState,
    pub penalized: bool,
    pub registered_at: Tick,
}

impl Sector {
    pub fn id(&self) -> SectorId {
        SectorId::new(self.owner, self.index)
    }

    pub fn is_live(&self) -> bool {
        matches!(self.state, SectorState::Normal | SectorState::Disabled)
    }

    /// Refills capacity replicas so the unsealed space drops below one CR.
    pub fn refill_crs(&mut self, cr_size: Bytes) {
        debug_assert!(self.is_live());
        self.cr_count = self.free_cap / cr_size;
    }

    /// Free space not yet covered by a capacity replica.
    pub fn unsealed(&self, cr_size: Bytes) -> Bytes {
        self.free_cap - self.cr_count * cr_size
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileState {
    Normal,
    Discard,
    Removed,
    Lost,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FileDescriptor {
    pub id: FileId,
    pub size: Bytes,
    pub value: Tokens,
    #[serde(with = "hex_digest")]
    pub merkle_root: [u8; 32],
    pub cp: u32,
    pub cntdown: i64,
    pub state: FileState,
    pub owner: ActorId,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryState {
    Alloc,
    Confirm,
    Normal,
    Corrupted,
}

/// One (file, index) placement. `prev` is the sector currently storing the
/// replica, `next` the sector it is moving to, `last` the time of the last
/// accepted storage proof.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AllocEntry {
    pub prev: Option<SectorId>,
    pub next: Option<SectorId>,
    pub last: Option<Tick>,
    pub state: EntryState,
}

impl AllocEntry {
    pub fn corrupted_form() -> Self {
        Self {
            prev: None,
            next: None,
            last: None,
            state: EntryState::Corrupted,
        }
    }
}

/// Scheduled automatic task.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    CheckAlloc(FileId),
    CheckProof(FileId),
    CheckRefresh(FileId, u32),
    RentPeriod,
}

/// Open traffic-fee escrow for one transfer window.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Escrow {
    pub payer: ActorId,
    pub provider: ActorId,
    pub amount: Tokens,
}

/// All token balances and pools. Conservation holds across every
/// operation: account balances, pools, sector deposits, and open escrows
/// always sum to the minted total.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Ledger {
    pub accounts: BTreeMap<ActorId, Tokens>,
    pub network_pool: Tokens,
    pub burn_sink: Tokens,
    pub confiscated_pool: Tokens,
    pub escrows: BTreeMap<(FileId, u32), Escrow>,
    pub minted: u128,
}

impl Ledger {
    pub fn balance(&self, actor: ActorId) -> Tokens {
        self.accounts.get(&actor).copied().unwrap_or(0)
    }

    pub fn credit(&mut self, actor: ActorId, amount: Tokens) {
        *self.accounts.entry(actor).or_insert(0) += amount;
    }

    pub fn debit(&mut self, actor: ActorId, amount: Tokens) -> Result<(), ProtocolError> {
        let balance = self.accounts.entry(actor).or_insert(0);
        if *balance < amount {
            return Err(ProtocolError::InsufficientBalance);
        }
        *balance -= amount;
        Ok(())
    }

    /// Total tokens across accounts, pools, deposits, and escrows.
    pub fn circulating(&self, sectors: &BTreeMap<SectorId, Sector>) -> u128 {
        let accounts: u128 = self.accounts.values().map(|&v| v as u128).sum();
        let deposits: u128 = sectors.values().map(|s| s.deposit as u128).sum();
        let escrowed: u128 = self.escrows.values().map(|e| e.amount as u128).sum();
        accounts
            + deposits
            + escrowed
            + self.network_pool as u128
            + self.burn_sink as u128
            + self.confiscated_pool as u128
    }
}

/// Run counters surfaced in summaries and assertions.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Stats {
    pub files_stored: u64,
    pub files_failed: u64,
    pub files_discarded: u64,
    pub files_lost: u64,
    pub collisions: u64,
    pub refreshes_started: u64,
    pub refreshes_completed: u64,
    pub refresh_failures: u64,
    pub penalties: u64,
    pub confiscations: u64,
    pub sectors_removed: u64,
    pub compensation_paid: Tokens,
    pub under_compensation_events: u64,
    pub under_compensation_total: Tokens,
    pub rent_distributed: Tokens,
}

/// The complete on-chain state.
#[derive(Clone, Debug)]
pub struct NetworkState {
    pub params: NetworkParams,
    pub fees: FeeSchedule,
    pub clock: Tick,
    pub sectors: BTreeMap<SectorId, Sector>,
    pub files: BTreeMap<FileId, FileDescriptor>,
    pub alloc: BTreeMap<FileId, Vec<AllocEntry>>,
    pub pending: BTreeMap<(Tick, u64), TaskKind>,
    pub ledger: Ledger,
    pub stats: Stats,
    pub sampler: CapacitySampler,
    /// Retain tombstones and run the global validator after every event.
    pub test_mode: bool,
    next_task_seq: u64,
    next_file_id: u64,
    sector_counters: BTreeMap<ActorId, u32>,
}

impl NetworkState {
    /// Creates an empty network and mints the initial balances.
    pub fn init(
        params: NetworkParams,
        fees: FeeSchedule,
        initial_balances: &BTreeMap<ActorId, Tokens>,
        test_mode: bool,
    ) -> Result<Self, ProtocolError> {
        params.validate()?;
        fees.validate(&params)?;
        let mut ledger = Ledger::default();
        for (&actor, &balance) in initial_balances {
            ledger.accounts.insert(actor, balance);
            ledger.minted += balance as u128;
        }
        let mut state = Self {
            params,
            fees,
            clock: 0,
            sectors: BTreeMap::new(),
            files: BTreeMap::new(),
            alloc: BTreeMap::new(),
            pending: BTreeMap::new(),
            ledger,
            stats: Stats::default(),
            sampler: CapacitySampler::new(),
            test_mode,
            next_task_seq: 0,
            next_file_id: 0,
            sector_counters: BTreeMap::new(),
        };
        let period = state.fees.period_length;
        state.schedule(period, TaskKind::RentPeriod);
        Ok(state)
    }

    pub fn schedule(&mut self, time: Tick, kind: TaskKind) {
        let seq = self.next_task_seq;
        self.next_task_seq += 1;
        self.pending.insert((time, seq), kind);
    }

    pub fn sector(&self, id: SectorId) -> Result<&Sector, ProtocolError> {
        self.sectors.get(&id).ok_or(ProtocolError::UnknownSector)
    }

    pub fn sector_mut(&mut self, id: SectorId) -> Result<&mut Sector, ProtocolError> {
        self.sectors.get_mut(&id).ok_or(ProtocolError::UnknownSector)
    }

    pub fn file(&self, id: FileId) -> Result<&FileDescriptor, ProtocolError> {
        self.files.get(&id).ok_or(ProtocolError::UnknownFile)
    }

    pub fn file_mut(&mut self, id: FileId) -> Result<&mut FileDescriptor, ProtocolError> {
        self.files.get_mut(&id).ok_or(ProtocolError::UnknownFile)
    }

    pub fn actor_exists(&self, actor: ActorId) -> bool {
        self.ledger.accounts.contains_key(&actor)
    }

    /// Peeks at the id the next created file will get.
    pub fn peek_file_id(&self) -> FileId {
        FileId(self.next_file_id)
    }

    pub fn take_file_id(&mut self) -> FileId {
        let id = FileId(self.next_file_id);
        self.next_file_id += 1;
        id
    }

    pub fn next_sector_index(&mut self, owner: ActorId) -> u32 {
        let counter = self.sector_counters.entry(owner).or_insert(0);
        let index = *counter;
        *counter += 1;
        index
    }

    /// Returns space to a sector and restores the CR fill. The caller is
    /// responsible for the disabled-sector drain check.
    pub fn free_space(&mut self, id: SectorId, size: Bytes) {
        let cr_size = self.params.cr_size;
        let sector = self.sectors.get_mut(&id).expect("freeing space on unknown sector");
        debug_assert!(sector.is_live());
        sector.free_cap += size;
        debug_assert!(sector.free_cap <= sector.capacity);
        sector.refill_crs(cr_size);
    }

    /// Takes space from a sector and restores the CR fill.
    pub fn reserve_space(&mut self, id: SectorId, size: Bytes) {
        let cr_size = self.params.cr_size;
        let sector = self.sectors.get_mut(&id).expect("reserving space on unknown sector");
        debug_assert!(sector.free_cap >= size);
        sector.free_cap -= size;
        sector.refill_crs(cr_size);
    }

    /// True while any allocation entry still references the sector.
    pub fn sector_referenced(&self, id: SectorId) -> bool {
        self.alloc.values().flatten().any(|e| {
            e.prev == Some(id) || e.next == Some(id)
        })
    }

    /// Total value currently stored (files in normal or discard state),
    /// in token sub-units.
    pub fn stored_value(&self) -> u128 {
        self.files
            .values()
            .filter(|f| matches!(f.state, FileState::Normal | FileState::Discard))
            .map(|f| f.value as u128)
            .sum()
    }

    /// Live (normal or disabled) sectors in id order.
    pub fn live_sectors(&self) -> impl Iterator<Item = &Sector> {
        self.sectors.values().filter(|s| s.is_live())
    }
}

mod hex_digest {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(digest: &[u8; 32], ser: S) -> Result<S::Ok, S::Error> {
        let mut out = String::with_capacity(64);
        for byte in digest {
            out.push_str(&format!("{byte:02x}"));
        }
        ser.serialize_str(&out)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<[u8; 32], D::Error> {
        let text = String::deserialize(de)?;
        if text.len() != 64 {
            return Err(serde::de::Error::custom("digest must be 64 hex chars"));
        }
        let mut out = [0u8; 32];
        for i in 0..32 {
            out[i] = u8::from_str_radix(&text[2 * i..2 * i + 2], 16)
                .map_err(serde::de::Error::custom)?;
        }
        Ok(out)
    }
}
