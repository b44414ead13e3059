//! Scheduled maintenance tasks: allocation checks, periodic proof checks,
//! placement refreshes, and rent distribution. Tasks cannot be called by
//! participants; the scheduler runs them at their due time.

use serde_json::json;

use crate::economics;
use crate::engine::Engine;
use crate::rng::{random_index, sample_exp};
use crate::state::{AllocEntry, EntryState, FileState, ProtocolError, TaskKind};
use crate::units::{FileId, SectorId};

impl Engine {
    /// Checks that every allocated replica of a fresh file was confirmed.
    /// On success the entries become live placements, the refresh
    /// countdown starts, the first cycle is charged, and proof checking
    /// begins; otherwise the upload is rejected and reservations released.
    pub(crate) fn auto_check_alloc(&mut self, fid: FileId) -> Result<(), ProtocolError> {
        let kind = "auto_check_alloc";
        let payload = move || json!({ "file": fid });
        let Some(file) = self.state.files.get(&fid) else {
            self.note(|| format!("file {fid} no longer present"));
            return self.emit(kind, payload, None);
        };
        match file.state {
            FileState::Removed | FileState::Lost => {
                self.note(|| format!("file {fid} already removed"));
                return self.emit(kind, payload, None);
            }
            FileState::Discard => {
                self.note(|| format!("file {fid} discarded before allocation completed"));
                self.state.stats.files_discarded += 1;
                self.remove_file(fid, FileState::Removed);
                return self.emit(kind, payload, None);
            }
            FileState::Normal => {}
        }

        let entries = self.state.alloc.get(&fid).expect("alloc row present");
        let unconfirmed = entries
            .iter()
            .any(|e| !matches!(e.state, EntryState::Confirm | EntryState::Corrupted));
        if unconfirmed {
            self.note(|| format!("client failed to upload file {fid}; allocation released"));
            self.state.stats.files_failed += 1;
            self.remove_file(fid, FileState::Removed);
            return self.emit(kind, payload, None);
        }

        let now = self.state.clock;
        let cp = self.state.file(fid)?.cp;
        for index in 1..=cp {
            let entry = self.state.alloc.get(&fid).expect("alloc row")[index as usize - 1].clone();
            let committed = match (entry.state, entry.next) {
                (EntryState::Confirm, Some(next)) => {
                    self.state.sector(next).map(|s| s.is_live()).unwrap_or(false)
                }
                _ => false,
            };
            let replacement = if committed {
                AllocEntry {
                    prev: entry.next,
                    next: None,
                    last: Some(now),
                    state: EntryState::Normal,
                }
            } else {
                if entry.state == EntryState::Confirm {
                    self.note(|| format!("replica {index} target corrupted during upload"));
                }
                AllocEntry::corrupted_form()
            };
            self.state.alloc.get_mut(&fid).expect("alloc row")[index as usize - 1] = replacement;
        }

        let cntdown = sample_exp(&mut self.rng, self.state.params.avg_refresh) as i64;
        self.state.file_mut(fid)?.cntdown = cntdown;
        match economics::charge_rent_and_gas(&mut self.state, fid, true) {
            Ok(charged) => {
                let due = now + self.state.params.proof_cycle;
                self.state.schedule(due, TaskKind::CheckProof(fid));
                self.state.stats.files_stored += 1;
                self.note(|| {
                    format!("client succeeded uploading file {fid}; first cycle charged {charged}")
                });
            }
            Err(_) => {
                self.note(|| {
                    format!("owner cannot fund the first cycle; file {fid} rejected")
                });
                self.state.stats.files_failed += 1;
                self.remove_file(fid, FileState::Removed);
            }
        }
        self.emit(kind, payload, None)
    }

    /// Periodic proof check for one file, following the protocol flow:
    /// discard on an unfundable next cycle, charge otherwise, confiscate
    /// past-deadline holders and penalize stale ones, then settle removal
    /// or loss, or reschedule and count down toward the next refresh.
    /// Returns the replica index to refresh when the countdown hits zero.
    pub(crate) fn auto_check_proof(&mut self, fid: FileId) -> Result<Option<u32>, ProtocolError> {
        let kind = "auto_check_proof";
        let payload = move || json!({ "file": fid });
        let Some(file) = self.state.files.get(&fid) else {
            self.note(|| format!("file {fid} no longer present"));
            self.emit(kind, payload, None)?;
            return Ok(None);
        };
        if matches!(file.state, FileState::Removed | FileState::Lost) {
            self.note(|| format!("file {fid} already removed"));
            self.emit(kind, payload, None)?;
            return Ok(None);
        }
        let (size, cp, owner) = (file.size, file.cp, file.owner);
        let now = self.state.clock;
        let cost = economics::cycle_cost(&self.state, size, cp, false);

        if self.state.file(fid)?.state == FileState::Normal
            && self.state.ledger.balance(owner) < cost
        {
            self.state.file_mut(fid)?.state = FileState::Discard;
            self.state.stats.files_discarded += 1;
            self.note(|| format!("file {fid} discarded due to insufficient cost"));
        }

        if self.state.file(fid)?.state == FileState::Normal {
            let charged = economics::charge_rent_and_gas(&mut self.state, fid, false)
                .expect("balance was just checked");
            if charged > 0 {
                self.note(|| format!("cycle cost {charged} charged"));
            }
            let due = self.state.params.proof_due;
            let deadline = self.state.params.proof_deadline;
            for index in 1..=cp {
                let entry = self.state.alloc.get(&fid).expect("alloc row")[index as usize - 1].clone();
                let Some(holder) = entry.prev else { continue };
                if !self.state.sector(holder).map(|s| s.is_live()).unwrap_or(false) {
                    continue;
                }
                let last = entry.last.expect("held replicas carry a proof time");
                let staleness = now.saturating_sub(last);
                if staleness > deadline {
                    let report = economics::confiscate(&mut self.state, holder)?;
                    self.note(|| {
                        format!(
                            "sector {holder} missed the proof deadline; deposit {} confiscated, {} entries corrupted",
                            report.seized, report.entries_flipped
                        )
                    });
                    for id in report.released {
                        self.drain_check(id);
                    }
                } else if staleness > due {
                    let burned = economics::penalize(&mut self.state, holder)?;
                    self.note(|| format!("sector {holder} punished {burned} for a stale proof"));
                }
            }
        }

        if self.state.file(fid)?.state == FileState::Discard {
            self.note(|| format!("file {fid} removed from the network"));
            self.remove_file(fid, FileState::Removed);
            self.emit(kind, payload, None)?;
            return Ok(None);
        }

        let all_corrupted = self
            .state
            .alloc
            .get(&fid)
            .expect("alloc row")
            .iter()
            .all(|e| e.state == EntryState::Corrupted);
        if all_corrupted {
            let comp = economics::compensate(&mut self.state, fid);
            self.note(|| format!("file {fid} is lost; owner compensated {}", comp.paid));
            if comp.shortfall > 0 {
                self.note(|| format!("under-compensation of {}", comp.shortfall));
            }
            self.state.stats.files_lost += 1;
            self.remove_file(fid, FileState::Lost);
            self.emit(kind, payload, None)?;
            return Ok(None);
        }

        let due = now + self.state.params.proof_cycle;
        self.state.schedule(due, TaskKind::CheckProof(fid));
        let file = self.state.file_mut(fid)?;
        file.cntdown -= 1;
        let trigger = if file.cntdown == 0 {
            Some(random_index(&mut self.rng, cp))
        } else {
            None
        };
        if let Some(index) = trigger {
            self.note(|| format!("refresh countdown expired; refreshing replica {index}"));
        }
        self.emit(kind, payload, None)?;
        Ok(trigger)
    }

    /// Moves one replica to a freshly sampled sector. A full target is a
    /// collision: the countdown is resampled and nothing moves.
    pub(crate) fn auto_refresh(&mut self, fid: FileId, index: u32) -> Result<(), ProtocolError> {
        let kind = "auto_refresh";
        let payload = move || json!({ "file": fid, "index": index });
        let Some(file) = self.state.files.get(&fid) else {
            self.note(|| format!("file {fid} no longer present"));
            return self.emit(kind, payload, None);
        };
        if file.state != FileState::Normal {
            self.note(|| format!("file {fid} not in normal state; refresh skipped"));
            return self.emit(kind, payload, None);
        }
        let (size, owner, avg_refresh) = (file.size, file.owner, self.state.params.avg_refresh);
        let entry = self.state.alloc.get(&fid).expect("alloc row")[index as usize - 1].clone();
        if entry.state != EntryState::Normal {
            self.state.file_mut(fid)?.cntdown = sample_exp(&mut self.rng, avg_refresh) as i64;
            self.note(|| format!("replica {index} busy or corrupted; countdown resampled"));
            return self.emit(kind, payload, None);
        }

        match self.state.sampler.sample(&mut self.rng) {
            None => {
                self.state.file_mut(fid)?.cntdown = sample_exp(&mut self.rng, avg_refresh) as i64;
                self.state.stats.collisions += 1;
                self.note(|| "no sector accepts new files; countdown resampled".to_string());
            }
            Some(target) if self.state.sector(target)?.free_cap >= size => {
                let provider = self.state.sector(target)?.owner;
                match economics::open_escrow(&mut self.state, (fid, index), owner, provider, size) {
                    Ok(_) => {
                        self.state.reserve_space(target, size);
                        let slot = &mut self.state.alloc.get_mut(&fid).expect("alloc row")
                            [index as usize - 1];
                        slot.next = Some(target);
                        slot.state = EntryState::Alloc;
                        let from = entry.prev.expect("normal entries have a holder");
                        let due = self.state.clock + self.state.params.transfer_delay(size);
                        self.state.schedule(due, TaskKind::CheckRefresh(fid, index));
                        self.state.stats.refreshes_started += 1;
                        self.note(|| {
                            format!("replica {index} of file {fid} swapped from {from} to {target}")
                        });
                    }
                    Err(_) => {
                        self.state.file_mut(fid)?.cntdown =
                            sample_exp(&mut self.rng, avg_refresh) as i64;
                        self.note(|| {
                            "owner cannot escrow the transfer fee; countdown resampled".to_string()
                        });
                    }
                }
            }
            Some(target) => {
                self.state.file_mut(fid)?.cntdown = sample_exp(&mut self.rng, avg_refresh) as i64;
                self.state.stats.collisions += 1;
                self.note(|| {
                    format!("collision: sector {target} lacks space for {size}; countdown resampled")
                });
            }
        }
        self.emit(kind, payload, None)
    }

    /// Confirms or fails a relocation window. On failure the target's
    /// owner and every current holder of the file are punished (corrupted
    /// sectors skipped), the reservation is released, and the refresh is
    /// retried. Returns true when a retry is due.
    pub(crate) fn auto_check_refresh(
        &mut self,
        fid: FileId,
        index: u32,
    ) -> Result<bool, ProtocolError> {
        let kind = "auto_check_refresh";
        let payload = move || json!({ "file": fid, "index": index });
        let Some(file) = self.state.files.get(&fid) else {
            self.note(|| format!("file {fid} no longer present"));
            self.emit(kind, payload, None)?;
            return Ok(false);
        };
        if matches!(file.state, FileState::Removed | FileState::Lost) {
            self.note(|| format!("file {fid} already removed"));
            self.emit(kind, payload, None)?;
            return Ok(false);
        }
        let (size, cp, avg_refresh) = (file.size, file.cp, self.state.params.avg_refresh);
        let entry = self.state.alloc.get(&fid).expect("alloc row")[index as usize - 1].clone();
        match entry.state {
            EntryState::Corrupted => {
                self.note(|| format!("replica {index} corrupted during relocation; window void"));
                self.emit(kind, payload, None)?;
                Ok(false)
            }
            EntryState::Normal => {
                self.note(|| format!("no relocation window open for replica {index}"));
                self.emit(kind, payload, None)?;
                Ok(false)
            }
            EntryState::Confirm
                if entry
                    .next
                    .map(|n| self.state.sector(n).map(|s| s.is_live()).unwrap_or(false))
                    .unwrap_or(false) =>
            {
                let now = self.state.clock;
                let target = entry.next.expect("confirm carries next");
                {
                    let slot = &mut self.state.alloc.get_mut(&fid).expect("alloc row")
                        [index as usize - 1];
                    *slot = AllocEntry {
                        prev: Some(target),
                        next: None,
                        last: Some(now),
                        state: EntryState::Normal,
                    };
                }
                if let Some(old) = entry.prev {
                    self.release_space(old, size);
                    self.note(|| format!("previous holder {old} released"));
                }
                self.state.file_mut(fid)?.cntdown = sample_exp(&mut self.rng, avg_refresh) as i64;
                self.state.stats.refreshes_completed += 1;
                self.note(|| format!("relocation of replica {index} confirmed at {target}"));
                self.emit(kind, payload, None)?;
                Ok(false)
            }
            _ => {
                // Unconfirmed, or confirmed toward a sector that has since
                // corrupted: the window failed.
                self.state.stats.refresh_failures += 1;
                if let Some(target) = entry.next {
                    if self.state.sector(target).map(|s| s.is_live()).unwrap_or(false) {
                        let burned = economics::penalize(&mut self.state, target)?;
                        self.note(|| format!("target {target} punished {burned} for a failed transfer"));
                        self.release_space(target, size);
                    } else {
                        self.note(|| format!("target {target} corrupted; transfer void"));
                    }
                }
                economics::refund_escrow(&mut self.state, (fid, index));
                for j in 1..=cp {
                    let holder = self.state.alloc.get(&fid).expect("alloc row")[j as usize - 1].prev;
                    if let Some(holder) = holder {
                        if self.state.sector(holder).map(|s| s.is_live()).unwrap_or(false) {
                            let burned = economics::penalize(&mut self.state, holder)?;
                            self.note(|| format!("holder {holder} punished {burned}"));
                        }
                    }
                }
                let slot =
                    &mut self.state.alloc.get_mut(&fid).expect("alloc row")[index as usize - 1];
                slot.next = None;
                slot.state = EntryState::Normal;
                self.note(|| format!("relocation of replica {index} not confirmed; retrying"));
                self.emit(kind, payload, None)?;
                Ok(true)
            }
        }
    }

    /// Capacity-proportional swap-in for a freshly registered sector:
    /// draws a Poisson count of existing placements and relocates them
    /// toward the new sector, preserving the identically-distributed
    /// placement property as the sector list grows.
    pub(crate) fn maintain_randomness_on_register(
        &mut self,
        id: SectorId,
    ) -> Result<(), ProtocolError> {
        let total = self.state.sampler.total();
        let capacity = self.state.sector(id)?.capacity;
        let candidates: Vec<(FileId, u32)> = self
            .state
            .alloc
            .iter()
            .filter(|(fid, _)| {
                self.state
                    .files
                    .get(fid)
                    .map(|f| f.state == FileState::Normal)
                    .unwrap_or(false)
            })
            .flat_map(|(&fid, entries)| {
                entries
                    .iter()
                    .enumerate()
                    .filter(|(_, e)| e.state == EntryState::Normal)
                    .map(move |(i, _)| (fid, i as u32 + 1))
                    .collect::<Vec<_>>()
            })
            .collect();
        if candidates.is_empty() {
            return Ok(());
        }
        let mean = candidates.len() as f64 * capacity as f64 / total as f64;
        let swaps = self.rng.poisson(mean).min(candidates.len() as u64) as usize;
        if swaps == 0 {
            return Ok(());
        }
        let mut pool = candidates;
        for slot in 0..swaps {
            let pick = self.rng.uniform_range(slot as u64, pool.len() as u64 - 1) as usize;
            pool.swap(slot, pick);
        }
        for &(fid, index) in &pool[..swaps] {
            let file = self.state.file(fid)?;
            let (size, owner) = (file.size, file.owner);
            if self.state.sector(id)?.free_cap < size {
                self.state.stats.collisions += 1;
                self.note(|| format!("swap-in of ({fid}, {index}) skipped: new sector is full"));
                continue;
            }
            if economics::open_escrow(&mut self.state, (fid, index), owner, id.owner, size).is_err()
            {
                self.note(|| format!("swap-in of ({fid}, {index}) skipped: owner cannot escrow"));
                continue;
            }
            self.state.reserve_space(id, size);
            let slot = &mut self.state.alloc.get_mut(&fid).expect("alloc row")[index as usize - 1];
            slot.next = Some(id);
            slot.state = EntryState::Alloc;
            let due = self.state.clock + self.state.params.transfer_delay(size);
            self.state.schedule(due, TaskKind::CheckRefresh(fid, index));
            self.state.stats.refreshes_started += 1;
            self.note(|| format!("replica ({fid}, {index}) swapping into new sector {id}"));
        }
        Ok(())
    }

    /// Period boundary: splits collected rent among providers whose
    /// sectors stayed live for the whole period, capacity-proportionally.
    pub(crate) fn rent_period(&mut self) -> Result<(), ProtocolError> {
        let payouts = economics::distribute_rent(&mut self.state);
        let distributed: u64 = payouts.iter().map(|&(_, amount)| amount).sum();
        for (provider, amount) in &payouts {
            let (provider, amount) = (*provider, *amount);
            self.note(|| format!("provider {provider} paid {amount} of rent"));
        }
        let due = self.state.clock + self.state.fees.period_length;
        self.state.schedule(due, TaskKind::RentPeriod);
        self.emit("rent_period", || json!({ "distributed": distributed }), None)
    }
}
