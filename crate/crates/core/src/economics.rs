//! Deposit pricing, rent/gas/traffic fee flows, penalties, confiscation,
//! and compensation.
//!
//! Every operation here is a pure transfer over the ledger: tokens move
//! between accounts, sector deposits, the rent pool, the burn sink, the
//! confiscated pool, and open escrows, so the conservation identity checked
//! by the validator holds exactly.

use serde::{Deserialize, Serialize};

use crate::state::{AllocEntry, NetworkParams, NetworkState, ProtocolError, SectorState};
use crate::units::{ActorId, Bytes, FileId, SectorId, Tick, Tokens};

/// Flat network-wide fee rates. Rates are fixed-point token amounts; the
/// rent rate is charged per byte per replica per proof cycle.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeeSchedule {
    pub rent_per_byte_replica_cycle: Tokens,
    pub gas: GasSchedule,
    pub traffic_per_byte: Tokens,
    /// Rent distribution period; a positive multiple of the proof cycle.
    pub period_length: Tick,
}

/// Gas price per automatic task kind. Each task has a static cost known
/// at scheduling time.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct GasSchedule {
    pub check_alloc: Tokens,
    pub check_proof: Tokens,
    pub refresh: Tokens,
    pub check_refresh: Tokens,
    pub rent_period: Tokens,
}

impl FeeSchedule {
    /// All-zero rates with the period equal to one proof cycle.
    pub fn zero(params: &NetworkParams) -> Self {
        Self {
            rent_per_byte_replica_cycle: 0,
            gas: GasSchedule::default(),
            traffic_per_byte: 0,
            period_length: params.proof_cycle,
        }
    }

    pub fn validate(&self, params: &NetworkParams) -> Result<(), ProtocolError> {
        if self.period_length == 0 || self.period_length % params.proof_cycle != 0 {
            return Err(ProtocolError::InvalidParams(
                "period_length must be a positive multiple of proof_cycle".into(),
            ));
        }
        Ok(())
    }
}

fn mul3(a: Tokens, b: u64, c: u64) -> Tokens {
    let wide = a as u128 * b as u128 * c as u128;
    Tokens::try_from(wide).expect("fee overflows the token range")
}

/// Rent for one proof cycle of a file: rate x size x replica count.
pub fn rent_per_cycle(fees: &FeeSchedule, size: Bytes, cp: u32) -> Tokens {
    mul3(fees.rent_per_byte_replica_cycle, size, cp as u64)
}

/// Expected gas for the next cycle's automatic tasks: one proof check plus
/// the refresh pair amortized over the mean refresh interval.
pub fn gas_per_cycle(fees: &FeeSchedule, avg_refresh: u32) -> Tokens {
    let refresh_pair = fees.gas.refresh + fees.gas.check_refresh;
    fees.gas.check_proof + refresh_pair.div_ceil(avg_refresh as u64)
}

/// Prepaid cost of one cycle for a file; the first cycle also covers the
/// allocation check itself.
pub fn cycle_cost(state: &NetworkState, size: Bytes, cp: u32, first: bool) -> Tokens {
    let base = rent_per_cycle(&state.fees, size, cp) + gas_per_cycle(&state.fees, state.params.avg_refresh);
    if first {
        base + state.fees.gas.check_alloc
    } else {
        base
    }
}

/// Deposit required to register a sector of the given capacity:
/// capacity x gamma_deposit x cap_para x min_value / min_capacity.
pub fn compute_deposit(capacity: Bytes, params: &NetworkParams) -> Result<Tokens, ProtocolError> {
    if capacity == 0 || capacity % params.min_capacity != 0 {
        return Err(ProtocolError::BadCapacity);
    }
    let multiples = (capacity / params.min_capacity) as f64;
    let deposit = multiples * params.gamma_deposit * params.cap_para * params.min_value as f64;
    Ok(deposit.round() as Tokens)
}

/// Charges the owner of a file for the coming cycle; rent goes to the
/// network pool, gas to the burn sink. No partial deduction on failure.
pub fn charge_rent_and_gas(
    state: &mut NetworkState,
    file_id: FileId,
    first: bool,
) -> Result<Tokens, ProtocolError> {
    let file = state.file(file_id)?;
    let owner = file.owner;
    let rent = rent_per_cycle(&state.fees, file.size, file.cp);
    let total = cycle_cost(state, file.size, file.cp, first);
    let gas = total - rent;
    state.ledger.debit(owner, total)?;
    state.ledger.network_pool += rent;
    state.ledger.burn_sink += gas;
    Ok(total)
}

/// Splits the rent pool among providers whose sectors stayed live for the
/// whole period, proportionally to capacity; the integer-division
/// remainder stays in the pool.
pub fn distribute_rent(state: &mut NetworkState) -> Vec<(ActorId, Tokens)> {
    let pool = state.ledger.network_pool;
    if pool == 0 {
        return Vec::new();
    }
    let period_start = state.clock.saturating_sub(state.fees.period_length);
    let mut per_provider: std::collections::BTreeMap<ActorId, u128> = Default::default();
    for sector in state.live_sectors() {
        if sector.registered_at <= period_start {
            *per_provider.entry(sector.owner).or_insert(0) += sector.capacity as u128;
        }
    }
    let total: u128 = per_provider.values().sum();
    if total == 0 {
        return Vec::new();
    }
    let mut payouts = Vec::new();
    let mut paid: Tokens = 0;
    for (&provider, &cap) in &per_provider {
        let share = (pool as u128 * cap / total) as Tokens;
        if share > 0 {
            payouts.push((provider, share));
            paid += share;
        }
    }
    for &(provider, share) in &payouts {
        state.ledger.credit(provider, share);
    }
    state.ledger.network_pool -= paid;
    state.stats.rent_distributed += paid;
    payouts
}

/// Escrows the traffic fee for one transfer window. A zero fee leaves no
/// record.
pub fn open_escrow(
    state: &mut NetworkState,
    key: (FileId, u32),
    payer: ActorId,
    provider: ActorId,
    bytes: Bytes,
) -> Result<Tokens, ProtocolError> {
    let amount = mul3(state.fees.traffic_per_byte, bytes, 1);
    if amount == 0 {
        return Ok(0);
    }
    state.ledger.debit(payer, amount)?;
    state.ledger.escrows.insert(
        key,
        crate::state::Escrow {
            payer,
            provider,
            amount,
        },
    );
    Ok(amount)
}

/// Pays an open escrow out to the provider (transfer confirmed).
pub fn release_escrow(state: &mut NetworkState, key: (FileId, u32)) -> Option<(ActorId, Tokens)> {
    let escrow = state.ledger.escrows.remove(&key)?;
    state.ledger.credit(escrow.provider, escrow.amount);
    Some((escrow.provider, escrow.amount))
}

/// Returns an open escrow to the payer (transfer failed).
pub fn refund_escrow(state: &mut NetworkState, key: (FileId, u32)) -> Option<(ActorId, Tokens)> {
    let escrow = state.ledger.escrows.remove(&key)?;
    state.ledger.credit(escrow.payer, escrow.amount);
    Some((escrow.payer, escrow.amount))
}

/// Outcome of a confiscation: sectors whose reservations were released
/// (candidates for a disabled-drain check) and the number of allocation
/// entries flipped to corrupted form.
pub struct ConfiscateReport {
    pub seized: Tokens,
    pub released: Vec<SectorId>,
    pub entries_flipped: u64,
}

/// Seizes a sector's deposit into the confiscated pool, marks the sector
/// corrupted, and flips every entry it stored to corrupted form. In-flight
/// outbound reservations of flipped entries are released and their escrows
/// refunded; inbound reservations targeting the corrupted sector are left
/// to fail their own allocation or refresh check.
pub fn confiscate(state: &mut NetworkState, id: SectorId) -> Result<ConfiscateReport, ProtocolError> {
    let sector = state.sector_mut(id)?;
    if !sector.is_live() {
        return Err(ProtocolError::BadState);
    }
    let seized = sector.deposit;
    sector.deposit = 0;
    sector.state = SectorState::Corrupted;
    state.ledger.confiscated_pool += seized;
    state.sampler.remove_weight(id);
    state.stats.confiscations += 1;

    let mut released = Vec::new();
    let mut entries_flipped = 0;
    let touched: Vec<(FileId, u32, Option<SectorId>)> = state
        .alloc
        .iter()
        .flat_map(|(&fid, entries)| {
            entries
                .iter()
                .enumerate()
                .filter(|(_, e)| e.prev == Some(id))
                .map(move |(i, e)| (fid, i as u32 + 1, e.next))
                .collect::<Vec<_>>()
        })
        .collect();
    for (fid, index, next) in touched {
        let size = state.file(fid).expect("entry of unknown file").size;
        if let Some(target) = next {
            if state.sector(target).map(|s| s.is_live()).unwrap_or(false) {
                state.free_space(target, size);
                released.push(target);
            }
            refund_escrow(state, (fid, index));
        }
        let entries = state.alloc.get_mut(&fid).expect("alloc row missing");
        entries[(index - 1) as usize] = AllocEntry::corrupted_form();
        entries_flipped += 1;
    }
    Ok(ConfiscateReport {
        seized,
        released,
        entries_flipped,
    })
}

/// Compensation paid for a lost file and the shortfall, if the
/// confiscated pool could not cover the full value.
pub struct Compensation {
    pub paid: Tokens,
    pub shortfall: Tokens,
}

/// Pays the owner of a lost file its declared value from the confiscated
/// pool; a short pool is recorded as an under-compensation event rather
/// than silently clamped.
pub fn compensate(state: &mut NetworkState, file_id: FileId) -> Compensation {
    let file = state.files.get(&file_id).expect("compensating unknown file");
    let owner = file.owner;
    let value = file.value;
    let paid = value.min(state.ledger.confiscated_pool);
    state.ledger.confiscated_pool -= paid;
    state.ledger.credit(owner, paid);
    state.stats.compensation_paid += paid;
    let shortfall = value - paid;
    if shortfall > 0 {
        state.stats.under_compensation_events += 1;
        state.stats.under_compensation_total += shortfall;
    }
    Compensation { paid, shortfall }
}

/// Burns `penalty_fraction` of the sector's remaining deposit. Repeated
/// penalties compound on the remainder; corrupted sectors are rejected so
/// callers skip them.
pub fn penalize(state: &mut NetworkState, id: SectorId) -> Result<Tokens, ProtocolError> {
    let fraction = state.params.penalty_fraction;
    let sector = state.sector_mut(id)?;
    if !sector.is_live() {
        return Err(ProtocolError::BadState);
    }
    let amount = (sector.deposit as f64 * fraction).round() as Tokens;
    sector.deposit -= amount;
    sector.penalized = true;
    state.ledger.burn_sink += amount;
    state.stats.penalties += 1;
    Ok(amount)
}

/// Live sector references for a healthy file, plus the traffic fee hook:
/// the fee for one copy moves from the caller to the provider serving it.
pub fn settle_retrieval_fee(
    state: &mut NetworkState,
    client: ActorId,
    provider: ActorId,
    bytes: Bytes,
) -> Result<Tokens, ProtocolError> {
    let amount = mul3(state.fees.traffic_per_byte, bytes, 1);
    if amount == 0 {
        return Ok(0);
    }
    state.ledger.debit(client, amount)?;
    state.ledger.credit(provider, amount);
    Ok(amount)
}
