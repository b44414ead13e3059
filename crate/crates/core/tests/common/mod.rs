//! Shared fixtures for the integration suites.

use std::collections::BTreeMap;

use fileinsurer_core::economics::FeeSchedule;
use fileinsurer_core::state::NetworkParams;
use fileinsurer_core::units::{tokens_from_f64, ActorId, Tokens};
use fileinsurer_core::{Engine, EventSink};

pub const CLIENT: ActorId = ActorId(1);
pub const PROVIDER_A: ActorId = ActorId(10);
pub const PROVIDER_B: ActorId = ActorId(11);

pub fn params(k: u32) -> NetworkParams {
    NetworkParams {
        min_capacity: 4096,
        min_value: tokens_from_f64(1.0),
        k,
        cap_para: 10.0,
        gamma_deposit: 0.05,
        delay_per_size: 1.0 / 512.0,
        avg_refresh: 3,
        proof_cycle: 10,
        proof_due: 25,
        proof_deadline: 50,
        cr_size: 64,
        size_limit: 4096,
        c: 1e-18,
        penalty_fraction: 0.01,
    }
}

pub fn rich_balances() -> BTreeMap<ActorId, Tokens> {
    let mut balances = BTreeMap::new();
    balances.insert(CLIENT, tokens_from_f64(100.0));
    balances.insert(PROVIDER_A, tokens_from_f64(100.0));
    balances.insert(PROVIDER_B, tokens_from_f64(100.0));
    balances
}

/// Validating engine with an in-memory event log.
pub fn engine(k: u32, seed: u64) -> Engine {
    engine_with(params(k), FeeSchedule::zero(&params(k)), seed)
}

pub fn engine_with(params: NetworkParams, fees: FeeSchedule, seed: u64) -> Engine {
    Engine::with_sink(
        params,
        fees,
        &rich_balances(),
        seed,
        true,
        EventSink::Memory(Vec::new()),
    )
    .expect("engine builds")
}
