//! Trial fan-out: data-parallel over independent trials with rayon, or a
//! sequential fallback when the `parallel` feature is off. Trials take
//! child seeds and the reductions used on their results are associative,
//! so both paths produce identical output.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Runs `f` for every trial index, collecting results in index order.
#[cfg(feature = "parallel")]
pub fn map_trials<T, F>(trials: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..trials).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_trials<T, F>(trials: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    map_trials_seq(trials, f)
}

/// Sequential reference path; always available for comparison benches.
pub fn map_trials_seq<T, F>(trials: u64, f: F) -> Vec<T>
where
    F: Fn(u64) -> T,
{
    (0..trials).map(f).collect()
}
