//! Client and provider request handlers. Every handler emits one event,
//! ok or rejected; rejected requests leave the state untouched.

use serde_json::json;

use crate::economics;
use crate::engine::{Engine, MAX_PLACEMENT_ATTEMPTS};
use crate::state::{AllocEntry, EntryState, FileDescriptor, FileState, ProtocolError, Sector, SectorState, TaskKind};
use crate::units::{ActorId, Bytes, FileId, SectorId, Tokens};

impl Engine {
    /// Stores a file: samples one sector per replica capacity-weighted
    /// (resampling on full sectors), reserves space, escrows traffic fees,
    /// and schedules the allocation check after the transfer window.
    pub fn file_add(
        &mut self,
        client: ActorId,
        size: Bytes,
        value: Tokens,
        merkle_root: [u8; 32],
    ) -> Result<FileId, ProtocolError> {
        let result = self.do_file_add(client, size, value, merkle_root);
        let ok = result.as_ref().ok().copied();
        self.emit(
            "file_add",
            || {
                json!({
                    "client": client,
                    "size": size,
                    "value": value,
                    "file": ok,
                })
            },
            result.as_ref().err(),
        )?;
        result
    }

    fn do_file_add(
        &mut self,
        client: ActorId,
        size: Bytes,
        value: Tokens,
        merkle_root: [u8; 32],
    ) -> Result<FileId, ProtocolError> {
        if !self.state.actor_exists(client) {
            return Err(ProtocolError::UnknownActor);
        }
        let params = &self.state.params;
        if value == 0 || value % params.min_value != 0 {
            return Err(ProtocolError::ValueNotMultiple);
        }
        if size > params.size_limit {
            return Err(ProtocolError::FileTooLarge);
        }
        let copies = params.k as u64 * (value / params.min_value);
        if copies > 1_000_000 {
            return Err(ProtocolError::BadRequest(
                "replica count exceeds the engine limit".into(),
            ));
        }
        let cp = copies as u32;
        let fid = self.state.peek_file_id();

        let mut entries: Vec<AllocEntry> = Vec::with_capacity(cp as usize);
        let mut reserved: Vec<SectorId> = Vec::new();
        let mut escrowed: Vec<u32> = Vec::new();
        let mut failure: Option<ProtocolError> = None;
        'placement: for index in 1..=cp {
            let mut attempts = 0;
            let target = loop {
                let Some(candidate) = self.state.sampler.sample(&mut self.rng) else {
                    failure = Some(ProtocolError::NoSectors);
                    break 'placement;
                };
                if self.state.sector(candidate)?.free_cap >= size {
                    break candidate;
                }
                self.state.stats.collisions += 1;
                attempts += 1;
                if attempts >= MAX_PLACEMENT_ATTEMPTS {
                    failure = Some(ProtocolError::CollisionExhausted(MAX_PLACEMENT_ATTEMPTS));
                    break 'placement;
                }
            };
            let provider = self.state.sector(target)?.owner;
            if let Err(err) = economics::open_escrow(&mut self.state, (fid, index), client, provider, size)
            {
                failure = Some(err);
                break 'placement;
            }
            escrowed.push(index);
            self.state.reserve_space(target, size);
            reserved.push(target);
            entries.push(AllocEntry {
                prev: None,
                next: Some(target),
                last: None,
                state: EntryState::Alloc,
            });
        }
        if let Some(err) = failure {
            for target in reserved {
                self.state.free_space(target, size);
            }
            for index in escrowed {
                economics::refund_escrow(&mut self.state, (fid, index));
            }
            return Err(err);
        }

        let assigned = self.state.take_file_id();
        debug_assert_eq!(assigned, fid);
        self.state.files.insert(
            fid,
            FileDescriptor {
                id: fid,
                size,
                value,
                merkle_root,
                cp,
                cntdown: -1,
                state: FileState::Normal,
                owner: client,
            },
        );
        self.state.alloc.insert(fid, entries);
        let due = self.state.clock + self.state.params.transfer_delay(size);
        self.state.schedule(due, TaskKind::CheckAlloc(fid));
        self.note(|| format!("file {fid}: {cp} replicas allocated, check at {due}"));
        Ok(fid)
    }

    /// Marks a file discarded; physical removal happens at its next proof
    /// check.
    pub fn file_discard(&mut self, client: ActorId, fid: FileId) -> Result<(), ProtocolError> {
        let result = self.do_file_discard(client, fid);
        self.emit(
            "file_discard",
            || json!({ "client": client, "file": fid }),
            result.as_ref().err(),
        )?;
        result
    }

    fn do_file_discard(&mut self, client: ActorId, fid: FileId) -> Result<(), ProtocolError> {
        let file = self.state.file(fid)?;
        if file.owner != client {
            return Err(ProtocolError::NotOwner);
        }
        if file.state != FileState::Normal {
            return Err(ProtocolError::BadState);
        }
        self.state.file_mut(fid)?.state = FileState::Discard;
        self.note(|| format!("file {fid} discarded; removal deferred to the next proof check"));
        Ok(())
    }

    /// A provider acknowledges receipt of a replica it was allocated.
    pub fn file_confirm(
        &mut self,
        provider: ActorId,
        fid: FileId,
        index: u32,
        sector: SectorId,
    ) -> Result<(), ProtocolError> {
        let result = self.do_file_confirm(provider, fid, index, sector);
        self.emit(
            "file_confirm",
            || json!({ "provider": provider, "file": fid, "index": index, "sector": sector.to_string() }),
            result.as_ref().err(),
        )?;
        result
    }

    fn do_file_confirm(
        &mut self,
        provider: ActorId,
        fid: FileId,
        index: u32,
        sector_id: SectorId,
    ) -> Result<(), ProtocolError> {
        let file = self.state.file(fid)?;
        if index == 0 || index > file.cp {
            return Err(ProtocolError::BadRequest("replica index out of range".into()));
        }
        let sector = self.state.sector(sector_id)?;
        if sector.owner != provider {
            return Err(ProtocolError::NotOwner);
        }
        let entry = &self.state.alloc.get(&fid).ok_or(ProtocolError::UnknownFile)?[index as usize - 1];
        if entry.state != EntryState::Alloc {
            return Err(ProtocolError::BadState);
        }
        if entry.next != Some(sector_id) {
            return Err(ProtocolError::WrongSector);
        }
        self.state.alloc.get_mut(&fid).expect("checked")[index as usize - 1].state =
            EntryState::Confirm;
        if let Some((to, amount)) = economics::release_escrow(&mut self.state, (fid, index)) {
            self.note(|| format!("traffic fee {amount} released to provider {to}"));
        }
        Ok(())
    }

    /// A provider submits a storage proof for a replica it holds.
    pub fn file_prove(
        &mut self,
        provider: ActorId,
        fid: FileId,
        index: u32,
        sector: SectorId,
        proof_time: u64,
        proof_valid: bool,
    ) -> Result<(), ProtocolError> {
        let result = self.do_file_prove(provider, fid, index, sector, proof_time, proof_valid);
        self.emit(
            "file_prove",
            || {
                json!({
                    "provider": provider,
                    "file": fid,
                    "index": index,
                    "sector": sector.to_string(),
                    "t": proof_time,
                })
            },
            result.as_ref().err(),
        )?;
        result
    }

    fn do_file_prove(
        &mut self,
        provider: ActorId,
        fid: FileId,
        index: u32,
        sector_id: SectorId,
        proof_time: u64,
        proof_valid: bool,
    ) -> Result<(), ProtocolError> {
        let file = self.state.file(fid)?;
        if index == 0 || index > file.cp {
            return Err(ProtocolError::BadRequest("replica index out of range".into()));
        }
        let sector = self.state.sector(sector_id)?;
        if sector.owner != provider {
            return Err(ProtocolError::NotOwner);
        }
        if !sector.is_live() {
            return Err(ProtocolError::WrongSector);
        }
        let entry = &self.state.alloc.get(&fid).ok_or(ProtocolError::UnknownFile)?[index as usize - 1];
        if entry.prev != Some(sector_id) {
            return Err(ProtocolError::WrongSector);
        }
        if !proof_valid || proof_time > self.state.clock {
            return Err(ProtocolError::InvalidProof);
        }
        self.state.alloc.get_mut(&fid).expect("checked")[index as usize - 1].last =
            Some(proof_time);
        Ok(())
    }

    /// Returns the sectors currently holding live replicas of a file and
    /// settles the retrieval traffic fee against the serving provider.
    pub fn file_get(&mut self, client: ActorId, fid: FileId) -> Result<Vec<SectorId>, ProtocolError> {
        let result = self.do_file_get(client, fid);
        let refs: Vec<String> = result
            .as_ref()
            .map(|v| v.iter().map(|s| s.to_string()).collect())
            .unwrap_or_default();
        self.emit(
            "file_get",
            || json!({ "client": client, "file": fid, "replicas": refs }),
            result.as_ref().err(),
        )?;
        result
    }

    fn do_file_get(&mut self, client: ActorId, fid: FileId) -> Result<Vec<SectorId>, ProtocolError> {
        if !self.state.actor_exists(client) {
            return Err(ProtocolError::UnknownActor);
        }
        let file = self.state.file(fid)?;
        match file.state {
            FileState::Normal => {}
            FileState::Discard => return Err(ProtocolError::BadState),
            FileState::Removed | FileState::Lost => return Err(ProtocolError::UnknownFile),
        }
        let size = file.size;
        let entries = self.state.alloc.get(&fid).ok_or(ProtocolError::UnknownFile)?;
        if entries.iter().all(|e| e.state == EntryState::Corrupted) {
            return Err(ProtocolError::NoLiveReplica);
        }
        // A holder mid-relocation keeps storing the replica until the
        // window resolves, so it still serves retrievals.
        let refs: Vec<SectorId> = entries
            .iter()
            .filter(|e| e.state != EntryState::Corrupted)
            .filter_map(|e| e.prev)
            .filter(|&p| self.state.sector(p).map(|s| s.is_live()).unwrap_or(false))
            .collect();
        if let Some(&serving) = refs.first() {
            let provider = self.state.sector(serving)?.owner;
            let fee = economics::settle_retrieval_fee(&mut self.state, client, provider, size)?;
            if fee > 0 {
                self.note(|| format!("retrieval fee {fee} paid to provider {provider}"));
            }
        }
        Ok(refs)
    }

    /// Registers a sector: prices and locks the deposit, fills the free
    /// space with capacity replicas, and swaps a Poisson-sized batch of
    /// existing placements toward the new sector to keep locations
    /// identically distributed.
    pub fn sector_register(
        &mut self,
        provider: ActorId,
        capacity: Bytes,
    ) -> Result<SectorId, ProtocolError> {
        let result = self.do_sector_register(provider, capacity);
        let ok = result.as_ref().ok().map(|s| s.to_string());
        self.emit(
            "sector_register",
            || json!({ "provider": provider, "capacity": capacity, "sector": ok }),
            result.as_ref().err(),
        )?;
        result
    }

    fn do_sector_register(
        &mut self,
        provider: ActorId,
        capacity: Bytes,
    ) -> Result<SectorId, ProtocolError> {
        if !self.state.actor_exists(provider) {
            return Err(ProtocolError::UnknownActor);
        }
        let deposit = economics::compute_deposit(capacity, &self.state.params)?;
        self.state
            .ledger
            .debit(provider, deposit)
            .map_err(|_| ProtocolError::InsufficientFunds)?;
        let index = self.state.next_sector_index(provider);
        let id = SectorId::new(provider, index);
        let mut sector = Sector {
            owner: provider,
            index,
            capacity,
            free_cap: capacity,
            cr_count: 0,
            deposit,
            state: SectorState::Normal,
            penalized: false,
            registered_at: self.state.clock,
        };
        sector.refill_crs(self.state.params.cr_size);
        self.note(|| format!("sector {id} registered with deposit {deposit}, {} CRs", sector.cr_count));
        self.state.sectors.insert(id, sector);
        self.state.sampler.insert(id, capacity);
        self.maintain_randomness_on_register(id)?;
        Ok(id)
    }

    /// Marks a sector disabled: it accepts no new replicas but keeps
    /// storing and proving current ones; it is removed (deposit refunded)
    /// once the last replica drains away.
    pub fn sector_disable(
        &mut self,
        provider: ActorId,
        sector: SectorId,
    ) -> Result<(), ProtocolError> {
        let result = self.do_sector_disable(provider, sector);
        self.emit(
            "sector_disable",
            || json!({ "provider": provider, "sector": sector.to_string() }),
            result.as_ref().err(),
        )?;
        result
    }

    fn do_sector_disable(
        &mut self,
        provider: ActorId,
        sector_id: SectorId,
    ) -> Result<(), ProtocolError> {
        let sector = self.state.sector(sector_id)?;
        if sector.owner != provider {
            return Err(ProtocolError::NotOwner);
        }
        if sector.state != SectorState::Normal {
            return Err(ProtocolError::BadState);
        }
        self.state.sector_mut(sector_id)?.state = SectorState::Disabled;
        self.state.sampler.remove_weight(sector_id);
        self.note(|| format!("sector {sector_id} disabled; no longer accepts new files"));
        if !self.state.sector_referenced(sector_id) {
            self.remove_sector(sector_id);
        }
        Ok(())
    }

    /// Adversarial injection: corrupts a set of live sectors, confiscating
    /// their deposits. With `fast_forward`, files left with no live
    /// replica are settled (compensated and removed) immediately instead
    /// of at their next proof check. Returns the lost files.
    pub fn corrupt_sectors(
        &mut self,
        targets: &[SectorId],
        fast_forward: bool,
    ) -> Result<Vec<FileId>, ProtocolError> {
        let result = self.do_corrupt_sectors(targets, fast_forward);
        let lost: Vec<u64> = result.as_ref().map(|v| v.iter().map(|f| f.0).collect()).unwrap_or_default();
        self.emit(
            "corrupt_sectors",
            || {
                json!({
                    "sectors": targets.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
                    "lost_files": lost,
                })
            },
            result.as_ref().err(),
        )?;
        result
    }

    fn do_corrupt_sectors(
        &mut self,
        targets: &[SectorId],
        fast_forward: bool,
    ) -> Result<Vec<FileId>, ProtocolError> {
        for &id in targets {
            if !self.state.sector(id)?.is_live() {
                return Err(ProtocolError::BadState);
            }
        }
        let mut drains = Vec::new();
        for &id in targets {
            let report = economics::confiscate(&mut self.state, id)?;
            self.note(|| {
                format!(
                    "sector {id} corrupted: deposit {} confiscated, {} entries lost",
                    report.seized, report.entries_flipped
                )
            });
            drains.extend(report.released);
        }
        for id in drains {
            self.drain_check(id);
        }
        if fast_forward {
            self.settle_lost_files()
        } else {
            Ok(Vec::new())
        }
    }

    /// Settles every file whose replicas are all corrupted: normal files
    /// are compensated and marked lost, discarded ones simply removed.
    pub(crate) fn settle_lost_files(&mut self) -> Result<Vec<FileId>, ProtocolError> {
        let candidates: Vec<FileId> = self
            .state
            .alloc
            .iter()
            .filter(|(_, entries)| entries.iter().all(|e| e.state == EntryState::Corrupted))
            .map(|(&fid, _)| fid)
            .collect();
        let mut lost = Vec::new();
        for fid in candidates {
            let file_state = self.state.file(fid)?.state;
            if file_state == FileState::Normal {
                let comp = economics::compensate(&mut self.state, fid);
                self.note(|| format!("file {fid} lost; compensated {}", comp.paid));
                if comp.shortfall > 0 {
                    self.note(|| format!("under-compensation of {} for file {fid}", comp.shortfall));
                }
                self.state.stats.files_lost += 1;
                self.remove_file(fid, FileState::Lost);
                lost.push(fid);
            } else {
                self.state.stats.files_discarded += 1;
                self.remove_file(fid, FileState::Removed);
            }
        }
        Ok(lost)
    }
}
