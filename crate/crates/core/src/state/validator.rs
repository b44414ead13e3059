//! Global invariant checks, run between events in test mode.
//!
//! Every check recomputes its quantity from the raw allocation table and
//! ledger rather than trusting cached bookkeeping, so a drifted counter or
//! a missed release shows up as a violation at the event that caused it.

use std::collections::BTreeMap;

use crate::economics::compute_deposit;
use crate::state::{EntryState, FileState, NetworkState, SectorState};
use crate::units::{Bytes, SectorId};

/// Validates every structural, arithmetic, and conservation invariant.
/// Returns a description of the first violation found.
pub fn validate(state: &NetworkState) -> Result<(), String> {
    let params = &state.params;

    // Space committed per sector, recomputed from the allocation table:
    // held replicas (prev) plus open reservations (next).
    let mut committed: BTreeMap<SectorId, Bytes> = BTreeMap::new();
    for (&fid, entries) in &state.alloc {
        let file = state
            .files
            .get(&fid)
            .ok_or_else(|| format!("alloc row for unknown file {fid}"))?;
        if !matches!(file.state, FileState::Normal | FileState::Discard) {
            return Err(format!("file {fid} in state {:?} still has alloc entries", file.state));
        }
        if entries.len() != file.cp as usize {
            return Err(format!(
                "file {fid} has {} entries, expected cp={}",
                entries.len(),
                file.cp
            ));
        }
        for (i, entry) in entries.iter().enumerate() {
            let at = format!("entry ({fid}, {})", i + 1);
            match entry.state {
                EntryState::Alloc | EntryState::Confirm => {
                    if entry.next.is_none() {
                        return Err(format!("{at} in transfer state without next"));
                    }
                }
                EntryState::Normal => {
                    if entry.prev.is_none() || entry.next.is_some() {
                        return Err(format!("{at} normal but prev/next malformed"));
                    }
                    if entry.last.is_none() {
                        return Err(format!("{at} normal without a proof timestamp"));
                    }
                }
                EntryState::Corrupted => {
                    if entry.prev.is_some() || entry.next.is_some() {
                        return Err(format!("{at} corrupted but still references sectors"));
                    }
                }
            }
            for (role, sector_ref) in [("prev", entry.prev), ("next", entry.next)] {
                if let Some(id) = sector_ref {
                    let sector = state
                        .sectors
                        .get(&id)
                        .ok_or_else(|| format!("{at} {role} references unknown sector {id}"))?;
                    if sector.state == SectorState::Removed {
                        return Err(format!("{at} {role} references removed sector {id}"));
                    }
                    if role == "prev"
                        && entry.state == EntryState::Normal
                        && sector.state == SectorState::Corrupted
                    {
                        return Err(format!("{at} normal on corrupted sector {id}"));
                    }
                    if sector.is_live() {
                        *committed.entry(id).or_insert(0) += file.size;
                    }
                }
            }
        }
        if file.value == 0 || file.value % params.min_value != 0 {
            return Err(format!("file {fid} value is not a positive multiple of min_value"));
        }
        if file.cp as u64 != params.k as u64 * (file.value / params.min_value) {
            return Err(format!("file {fid} cp does not match k * value / min_value"));
        }
        if file.size > params.size_limit {
            return Err(format!("file {fid} exceeds size_limit"));
        }
    }

    for file in state.files.values() {
        if matches!(file.state, FileState::Removed | FileState::Lost)
            && state.alloc.contains_key(&file.id)
        {
            return Err(format!("tombstoned file {} retains alloc entries", file.id));
        }
    }

    let mut live_capacity: u128 = 0;
    for sector in state.sectors.values() {
        let id = sector.id();
        if sector.capacity == 0 || sector.capacity % params.min_capacity != 0 {
            return Err(format!("sector {id} capacity not a multiple of min_capacity"));
        }
        if !sector.is_live() {
            continue;
        }
        live_capacity += sector.capacity as u128;
        let used = committed.get(&id).copied().unwrap_or(0);
        if sector.free_cap != sector.capacity - used {
            return Err(format!(
                "sector {id} free_cap {} but capacity {} minus committed {} is {}",
                sector.free_cap,
                sector.capacity,
                used,
                sector.capacity - used
            ));
        }
        let unsealed = sector.free_cap as i128 - (sector.cr_count * params.cr_size) as i128;
        if unsealed < 0 || unsealed >= params.cr_size as i128 {
            return Err(format!("sector {id} unsealed space {unsealed} outside [0, cr_size)"));
        }
        let full_deposit = compute_deposit(sector.capacity, params)
            .map_err(|e| format!("sector {id}: {e}"))?;
        if sector.penalized {
            if sector.deposit > full_deposit {
                return Err(format!("sector {id} deposit exceeds the pricing formula"));
            }
        } else if sector.deposit != full_deposit {
            return Err(format!(
                "sector {id} deposit {} does not match formula {}",
                sector.deposit, full_deposit
            ));
        }
    }

    for sector in state.sectors.values() {
        if matches!(sector.state, SectorState::Corrupted | SectorState::Removed)
            && sector.deposit != 0
        {
            return Err(format!("dead sector {} still holds a deposit", sector.id()));
        }
    }

    if state.sampler.total() != live_normal_capacity(state) {
        return Err(format!(
            "sampler weight {} disagrees with normal capacity {}",
            state.sampler.total(),
            live_normal_capacity(state)
        ));
    }
    let _ = live_capacity;

    let circulating = state.ledger.circulating(&state.sectors);
    if circulating != state.ledger.minted {
        return Err(format!(
            "token conservation broken: circulating {} vs minted {}",
            circulating, state.ledger.minted
        ));
    }

    Ok(())
}

fn live_normal_capacity(state: &NetworkState) -> u128 {
    state
        .sectors
        .values()
        .filter(|s| s.state == SectorState::Normal)
        .map(|s| s.capacity as u128)
        .sum()
}
