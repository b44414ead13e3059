//! Capacity-weighted sector sampling.
//!
//! A Fenwick tree over registration slots gives O(log n) draws and O(log n)
//! weight updates as sectors register, disable, or corrupt. Disabled and
//! corrupted sectors keep their slot with weight zero so slot indices stay
//! stable for the lifetime of a run.

use std::collections::BTreeMap;

use crate::rng::RngStream;
use crate::units::{Bytes, SectorId};

#[derive(Clone, Debug, Default)]
pub struct CapacitySampler {
    tree: Vec<u128>,
    weights: Vec<u128>,
    slots: Vec<SectorId>,
    index: BTreeMap<SectorId, usize>,
    total: u128,
}

impl CapacitySampler {
    pub fn new() -> Self {
        Self::default()
    }

    /// Total weight of all sampleable sectors, in bytes.
    pub fn total(&self) -> u128 {
        self.total
    }

    pub fn insert(&mut self, id: SectorId, capacity: Bytes) {
        debug_assert!(!self.index.contains_key(&id));
        let slot = self.slots.len();
        // A fresh node covers (node - lowbit(node), node]; seed it with the
        // covered range's existing sum before adding the new weight.
        let node = slot + 1;
        let lowbit = node & node.wrapping_neg();
        let seed = self.prefix(slot) - self.prefix(node - lowbit);
        self.slots.push(id);
        self.weights.push(0);
        self.tree.push(seed);
        self.index.insert(id, slot);
        self.add(slot, capacity as u128);
    }

    /// Sum of the first `count` weights.
    fn prefix(&self, count: usize) -> u128 {
        let mut sum = 0;
        let mut i = count;
        while i > 0 {
            sum += self.tree[i - 1];
            i -= i & i.wrapping_neg();
        }
        sum
    }

    /// Sets a sector's weight to zero, excluding it from future draws.
    pub fn remove_weight(&mut self, id: SectorId) {
        if let Some(&slot) = self.index.get(&id) {
            let w = self.weights[slot];
            if w > 0 {
                self.sub(slot, w);
            }
        }
    }

    /// Draws a sector with probability proportional to its weight.
    /// Returns `None` when no sector carries weight.
    pub fn sample(&self, rng: &mut RngStream) -> Option<SectorId> {
        if self.total == 0 {
            return None;
        }
        let target = rng.uniform_below_u128(self.total);
        Some(self.slots[self.find(target)])
    }

    fn add(&mut self, slot: usize, delta: u128) {
        self.weights[slot] += delta;
        self.total += delta;
        let mut i = slot + 1;
        while i <= self.tree.len() {
            self.tree[i - 1] += delta;
            i += i & i.wrapping_neg();
        }
    }

    fn sub(&mut self, slot: usize, delta: u128) {
        self.weights[slot] -= delta;
        self.total -= delta;
        let mut i = slot + 1;
        while i <= self.tree.len() {
            self.tree[i - 1] -= delta;
            i += i & i.wrapping_neg();
        }
    }

    /// Largest slot whose prefix sum is ≤ target; standard Fenwick descent.
    fn find(&self, mut target: u128) -> usize {
        let n = self.tree.len();
        let mut pos = 0usize;
        let mut step = n.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next - 1] <= target {
                target -= self.tree[next - 1];
                pos = next;
            }
            step >>= 1;
        }
        debug_assert!(self.weights[pos] > 0);
        pos
    }
}
