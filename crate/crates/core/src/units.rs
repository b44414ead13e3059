//! Base units and identifiers shared across the protocol state machine.
//!
//! Token amounts are fixed-point integers with [`TOKEN_UNIT`] sub-units per
//! whole token, so every ledger movement is an exact integer transfer and
//! conservation can be checked with equality rather than tolerances.

use serde::{Deserialize, Serialize};

/// Simulation time in abstract ticks.
pub type Tick = u64;

/// Storage sizes in bytes.
pub type Bytes = u64;

/// Fixed-point token amount; `TOKEN_UNIT` sub-units equal one token.
pub type Tokens = u64;

/// Sub-units per whole token (nano-token resolution).
pub const TOKEN_UNIT: Tokens = 1_000_000_000;

/// Converts a whole-token quantity to fixed-point sub-units, rounding to
/// the nearest sub-unit.
pub fn tokens_from_f64(whole: f64) -> Tokens {
    debug_assert!(whole >= 0.0 && whole.is_finite());
    (whole * TOKEN_UNIT as f64).round() as Tokens
}

/// Converts fixed-point sub-units back to whole tokens.
pub fn tokens_to_f64(amount: Tokens) -> f64 {
    amount as f64 / TOKEN_UNIT as f64
}

/// A client or provider account.
#[derive(
    Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ActorId(pub u32);

/// A stored file, numbered in creation order.
#[derive(
    Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct FileId(pub u64);

/// A sector, identified by owner plus a per-owner counter; a provider never
/// reuses an index, so the pair is unique for the lifetime of the network.
#[derive(
    Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct SectorId {
    pub owner: ActorId,
    pub index: u32,
}

impl SectorId {
    pub fn new(owner: ActorId, index: u32) -> Self {
        Self { owner, index }
    }
}

impl std::fmt::Display for SectorId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.owner.0, self.index)
    }
}

impl std::fmt::Display for ActorId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::fmt::Display for FileId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_fixed_point_round_trips() {
        assert_eq!(tokens_from_f64(9.2), 9_200_000_000);
        assert_eq!(tokens_from_f64(0.0), 0);
        assert_eq!(tokens_to_f64(tokens_from_f64(0.08)), 0.08);
    }

    #[test]
    fn sector_ids_order_by_owner_then_index() {
        let a = SectorId::new(ActorId(1), 5);
        let b = SectorId::new(ActorId(2), 0);
        assert!(a < b);
    }
}
