//! Corruption experiments: build a network, let it churn, destroy a
//! budgeted set of sectors, and measure how much value is lost and
//! whether the confiscated deposits covered the compensation.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::economics::FeeSchedule;
use crate::engine::Engine;
use crate::exec;
use crate::rng::RngStream;
use crate::state::{EntryState, FileState, NetworkParams, ProtocolError};
use crate::units::{ActorId, Bytes, FileId, SectorId, Tokens};

#[derive(Debug, Error, PartialEq)]
pub enum AdversaryError {
    #[error("exhaustive enumeration limited to 20 sectors, got {0}")]
    TooLarge(usize),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// How the adversary picks its victims, all subject to the same capacity
/// budget.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Uniformly random subset, greedily filled.
    Random,
    /// Iteratively picks the sector completing the most file corruptions.
    Greedy,
    /// Enumerates every capacity-feasible subset; small networks only.
    Exhaustive,
}

impl std::str::FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(Strategy::Random),
            "greedy" => Ok(Strategy::Greedy),
            "exhaustive" => Ok(Strategy::Exhaustive),
            other => Err(format!("unknown strategy '{other}'")),
        }
    }
}

/// Result of one corruption trial.
#[derive(Clone, Debug, Serialize)]
pub struct AttackReport {
    pub seed: u64,
    pub strategy: Strategy,
    /// Fraction of total live capacity actually corrupted.
    pub lambda_actual: f64,
    /// Total value of lost files.
    pub v_lost: Tokens,
    /// v_lost over the total stored value.
    pub gamma_lost: f64,
    /// Deposits seized from the corrupted sectors.
    pub confiscated: Tokens,
    /// True iff no under-compensation event occurred.
    pub fully_compensated: bool,
    pub lost_file_ids: Vec<FileId>,
}

/// Selects sectors totalling as much capacity as achievable without
/// exceeding `lambda` times the total live capacity.
pub fn adversary_select(
    engine: &Engine,
    lambda: f64,
    strategy: Strategy,
    rng: &mut RngStream,
) -> Result<Vec<SectorId>, AdversaryError> {
    assert!((0.0..=1.0).contains(&lambda), "lambda must lie in [0, 1]");
    let sectors: Vec<(SectorId, Bytes)> = engine
        .state
        .live_sectors()
        .map(|s| (s.id(), s.capacity))
        .collect();
    let total: u128 = sectors.iter().map(|&(_, c)| c as u128).sum();
    let budget = (lambda * total as f64).floor() as u128;
    match strategy {
        Strategy::Random => Ok(select_random(&sectors, budget, rng)),
        Strategy::Greedy => Ok(select_greedy(engine, &sectors, budget)),
        Strategy::Exhaustive => select_exhaustive(engine, &sectors, budget),
    }
}

fn select_random(
    sectors: &[(SectorId, Bytes)],
    budget: u128,
    rng: &mut RngStream,
) -> Vec<SectorId> {
    let mut order: Vec<usize> = (0..sectors.len()).collect();
    for i in (1..order.len()).rev() {
        let j = rng.uniform_range(0, i as u64) as usize;
        order.swap(i, j);
    }
    let mut chosen = Vec::new();
    let mut spent: u128 = 0;
    for idx in order {
        let (id, capacity) = sectors[idx];
        if spent + capacity as u128 <= budget {
            spent += capacity as u128;
            chosen.push(id);
        }
    }
    chosen.sort();
    chosen
}

/// Holder sets per file: which live sectors currently store each live
/// file's replicas, read straight off the allocation table.
fn holder_sets(engine: &Engine) -> Vec<(Tokens, Vec<SectorId>)> {
    engine
        .state
        .alloc
        .iter()
        .filter_map(|(fid, entries)| {
            let file = engine.state.files.get(fid)?;
            if file.state != FileState::Normal {
                return None;
            }
            let mut holders: Vec<SectorId> = entries
                .iter()
                .filter(|e| e.state != EntryState::Corrupted)
                .filter_map(|e| e.prev)
                .collect();
            holders.sort();
            holders.dedup();
            Some((file.value, holders))
        })
        .collect()
}

fn select_greedy(
    engine: &Engine,
    sectors: &[(SectorId, Bytes)],
    budget: u128,
) -> Vec<SectorId> {
    let files = holder_sets(engine);
    // Per-file count of not-yet-corrupted holders, and the reverse index
    // from each sector to the files it stores.
    let mut remaining: Vec<usize> = files.iter().map(|(_, h)| h.len()).collect();
    let mut by_holder: BTreeMap<SectorId, Vec<usize>> = BTreeMap::new();
    for (fi, (_, holders)) in files.iter().enumerate() {
        for &h in holders {
            by_holder.entry(h).or_default().push(fi);
        }
    }
    let mut available: Vec<(SectorId, Bytes)> = sectors.to_vec();
    let mut chosen: Vec<SectorId> = Vec::new();
    let mut spent: u128 = 0;
    loop {
        // Score each affordable candidate by the value of files it would
        // finish off, then by how many live replicas it holds; lowest id
        // wins ties.
        let mut best: Option<(u128, usize, SectorId, Bytes)> = None;
        for &(id, capacity) in &available {
            if spent + capacity as u128 > budget {
                continue;
            }
            let mut completed: u128 = 0;
            let mut progress = 0usize;
            if let Some(stored) = by_holder.get(&id) {
                for &fi in stored {
                    match remaining[fi] {
                        0 => {}
                        1 => {
                            completed += files[fi].0 as u128;
                            progress += 1;
                        }
                        _ => progress += 1,
                    }
                }
            }
            let better = match &best {
                None => true,
                Some((bc, bp, bid, _)) => {
                    (completed, progress) > (*bc, *bp)
                        || ((completed, progress) == (*bc, *bp) && id < *bid)
                }
            };
            if better {
                best = Some((completed, progress, id, capacity));
            }
        }
        let Some((_, _, id, capacity)) = best else { break };
        chosen.push(id);
        spent += capacity as u128;
        available.retain(|&(s, _)| s != id);
        if let Some(stored) = by_holder.get(&id) {
            for &fi in stored {
                remaining[fi] = remaining[fi].saturating_sub(1);
            }
        }
    }
    chosen.sort();
    chosen
}

fn select_exhaustive(
    engine: &Engine,
    sectors: &[(SectorId, Bytes)],
    budget: u128,
) -> Result<Vec<SectorId>, AdversaryError> {
    if sectors.len() > 20 {
        return Err(AdversaryError::TooLarge(sectors.len()));
    }
    let slot_of: BTreeMap<SectorId, usize> = sectors
        .iter()
        .enumerate()
        .map(|(i, &(id, _))| (id, i))
        .collect();
    let files: Vec<(Tokens, u32)> = holder_sets(engine)
        .into_iter()
        .map(|(value, holders)| {
            let mask = holders
                .iter()
                .fold(0u32, |m, h| m | (1 << slot_of[h]));
            (value, mask)
        })
        .collect();
    let n = sectors.len();
    let mut best_mask = 0u32;
    let mut best_lost: u128 = 0;
    for mask in 0u32..(1 << n) {
        let cost: u128 = (0..n)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| sectors[i].1 as u128)
            .sum();
        if cost > budget {
            continue;
        }
        let lost: u128 = files
            .iter()
            .filter(|&&(_, holders)| holders != 0 && holders & mask == holders)
            .map(|&(value, _)| value as u128)
            .sum();
        if lost > best_lost {
            best_lost = lost;
            best_mask = mask;
        }
    }
    Ok((0..n)
        .filter(|i| best_mask & (1 << i) != 0)
        .map(|i| sectors[i].0)
        .collect())
}

/// A procedurally built network for corruption trials: equal sectors of
/// one `min_capacity` spread across providers, equal unit-value files,
/// cooperative confirms and proofs through a warm-up long enough for the
/// placements to churn through at least one full refresh interval.
#[derive(Clone, Debug)]
pub struct TrialScenario {
    pub sectors: u32,
    pub providers: u32,
    pub files: u32,
    pub file_size: Bytes,
    pub params: NetworkParams,
    pub fees: FeeSchedule,
    /// Proof cycles to run before the attack.
    pub warmup_cycles: u32,
}

impl TrialScenario {
    /// Desk-scale defaults; `gamma_deposit` left for the caller to pin.
    pub fn new(sectors: u32, files: u32, k: u32, cap_para: f64, gamma_deposit: f64) -> Self {
        let min_capacity: Bytes = 4096;
        let params = NetworkParams {
            min_capacity,
            min_value: 1_000_000_000,
            k,
            cap_para,
            gamma_deposit,
            // One-tick transfer windows for the 256-byte files below.
            delay_per_size: 1.0 / 512.0,
            avg_refresh: 3,
            proof_cycle: 8,
            proof_due: 20,
            proof_deadline: 40,
            cr_size: 64,
            size_limit: min_capacity,
            c: 1e-18,
            penalty_fraction: 0.0,
        };
        let fees = FeeSchedule::zero(&params);
        Self {
            sectors,
            providers: sectors.clamp(1, 16),
            files,
            file_size: 256,
            params,
            fees,
            warmup_cycles: 8,
        }
    }

    /// Builds the network and drives it honestly to a quiescent instant
    /// just after the warm-up's final transfer windows close, so every
    /// placement entry is in the normal state when the adversary strikes.
    pub fn build(&self, seed: u64) -> Result<Engine, ProtocolError> {
        let client = ActorId(0);
        let mut balances: BTreeMap<ActorId, Tokens> = BTreeMap::new();
        // Generous funding: deposits plus fee headroom.
        let deposit =
            crate::economics::compute_deposit(self.params.min_capacity, &self.params)?;
        let per_provider_sectors = self.sectors.div_ceil(self.providers) as u64;
        for p in 1..=self.providers {
            balances.insert(ActorId(p), deposit * per_provider_sectors + 1_000_000_000_000);
        }
        balances.insert(client, 1_000_000_000_000_000);
        let mut engine = Engine::new(
            self.params.clone(),
            self.fees.clone(),
            &balances,
            seed,
            false,
        )?;
        for i in 0..self.sectors {
            let provider = ActorId(1 + i % self.providers);
            engine.sector_register(provider, self.params.min_capacity)?;
        }
        for _ in 0..self.files {
            engine.file_add(client, self.file_size, self.params.min_value, [0; 32])?;
        }
        let delay = self.params.transfer_delay(self.file_size);
        let cycles = self.warmup_cycles as u64 * self.params.proof_cycle;
        // Quiescent point: one tick past the close of windows opened at
        // the last cycle boundary.
        let attack_at = delay + cycles + delay + 1;
        engine.run_honest_until(attack_at)?;
        debug_assert!(engine
            .state
            .alloc
            .values()
            .flatten()
            .all(|e| e.state == EntryState::Normal));
        Ok(engine)
    }
}

/// Builds the network for `seed`, applies the strategy at `lambda`, and
/// settles compensation immediately. Deterministic per seed.
pub fn run_attack_trial(
    scenario: &TrialScenario,
    lambda: f64,
    strategy: Strategy,
    seed: u64,
) -> Result<AttackReport, AdversaryError> {
    let mut engine = scenario.build(seed)?;
    let stored_value = engine.state.stored_value();
    let file_values: BTreeMap<FileId, Tokens> = engine
        .state
        .files
        .iter()
        .map(|(&fid, f)| (fid, f.value))
        .collect();
    let total_capacity: u128 = engine.state.live_sectors().map(|s| s.capacity as u128).sum();
    let mut rng = RngStream::child(seed, 0xadae);
    let victims = adversary_select(&engine, lambda, strategy, &mut rng)?;
    let corrupted_capacity: u128 = victims
        .iter()
        .map(|id| engine.state.sector(*id).map(|s| s.capacity as u128).unwrap_or(0))
        .sum();
    let confiscated: u128 = victims
        .iter()
        .map(|id| engine.state.sector(*id).map(|s| s.deposit as u128).unwrap_or(0))
        .sum();
    let events_before = engine.state.stats.under_compensation_events;
    let lost = if victims.is_empty() {
        Vec::new()
    } else {
        engine.corrupt_sectors(&victims, true)?
    };
    let v_lost: u128 = lost.iter().map(|fid| file_values[fid] as u128).sum();
    let gamma_lost = if stored_value == 0 {
        0.0
    } else {
        v_lost as f64 / stored_value as f64
    };
    Ok(AttackReport {
        seed,
        strategy,
        lambda_actual: if total_capacity == 0 {
            0.0
        } else {
            corrupted_capacity as f64 / total_capacity as f64
        },
        v_lost: v_lost as Tokens,
        gamma_lost,
        confiscated: confiscated as Tokens,
        fully_compensated: engine.state.stats.under_compensation_events == events_before,
        lost_file_ids: lost,
    })
}

/// Fans independent trials out across worker threads, one child seed per
/// trial index.
pub fn run_attack_trials(
    scenario: &TrialScenario,
    lambda: f64,
    strategy: Strategy,
    master_seed: u64,
    trials: u64,
) -> Result<Vec<AttackReport>, AdversaryError> {
    let results = exec::map_trials(trials, |i| {
        run_attack_trial(scenario, lambda, strategy, splitmix_trial_seed(master_seed, i))
    });
    results.into_iter().collect()
}

fn splitmix_trial_seed(master: u64, index: u64) -> u64 {
    // Stable per-trial seed derivation, independent of scheduling.
    master
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(index.wrapping_mul(2) + 1)
}
