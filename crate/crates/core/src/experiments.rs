//! Maximum-capacity-usage experiments: place a population of file backups
//! into equal sectors provisioned with redundant capacity, either
//! reallocating everything per trial or churning single backups through
//! relocations, and record the worst usage ratio ever observed. Also the
//! empirical check of the collision tail bound.

use serde::Serialize;

use crate::bounds::thm2_collision_bound;
use crate::exec;
use crate::rng::RngStream;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeDist {
    Uniform01,
    Uniform12,
    Exponential,
    NormalMuEqVar,
    NormalMuEq2Var,
}

impl SizeDist {
    pub const ALL: [SizeDist; 5] = [
        SizeDist::Uniform01,
        SizeDist::Uniform12,
        SizeDist::Exponential,
        SizeDist::NormalMuEqVar,
        SizeDist::NormalMuEq2Var,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            SizeDist::Uniform01 => "uniform01",
            SizeDist::Uniform12 => "uniform12",
            SizeDist::Exponential => "exponential",
            SizeDist::NormalMuEqVar => "normal_mu_eq_var",
            SizeDist::NormalMuEq2Var => "normal_mu_eq_2var",
        }
    }
}

impl std::str::FromStr for SizeDist {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform01" => Ok(SizeDist::Uniform01),
            "uniform12" => Ok(SizeDist::Uniform12),
            "exponential" => Ok(SizeDist::Exponential),
            "normal_mu_eq_var" | "normal1" => Ok(SizeDist::NormalMuEqVar),
            "normal_mu_eq_2var" | "normal2" => Ok(SizeDist::NormalMuEq2Var),
            other => Err(format!("unknown distribution '{other}'")),
        }
    }
}

/// Draws one backup size in abstract units. Normal draws at or below zero
/// are rejected and resampled; the uniform draws exclude their lower
/// endpoint. Means: exponential 1, N(1, 1), and N(1, 0.5).
pub fn sample_file_size(dist: SizeDist, rng: &mut RngStream) -> f64 {
    match dist {
        SizeDist::Uniform01 => loop {
            let u = rng.uniform();
            if u > 0.0 {
                break u;
            }
        },
        SizeDist::Uniform12 => 1.0 + rng.uniform(),
        SizeDist::Exponential => rng.exponential(1.0),
        SizeDist::NormalMuEqVar => loop {
            let x = 1.0 + rng.normal();
            if x > 0.0 {
                break x;
            }
        },
        SizeDist::NormalMuEq2Var => loop {
            let x = 1.0 + 0.5f64.sqrt() * rng.normal();
            if x > 0.0 {
                break x;
            }
        },
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Table3Mode {
    Reallocate,
    Refresh,
}

impl std::str::FromStr for Table3Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reallocate" => Ok(Table3Mode::Reallocate),
            "refresh" => Ok(Table3Mode::Refresh),
            other => Err(format!("unknown mode '{other}'")),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentConfig {
    pub n_cp: u64,
    pub n_s: u32,
    pub dist: SizeDist,
    pub mode: Table3Mode,
    pub trials: u32,
    pub seed: u64,
    pub capacity_factor: f64,
}

impl ExperimentConfig {
    pub fn new(n_cp: u64, n_s: u32, dist: SizeDist, mode: Table3Mode, seed: u64) -> Self {
        Self {
            n_cp,
            n_s,
            dist,
            mode,
            trials: 100,
            seed,
            capacity_factor: 2.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.n_s < 1 || self.n_cp < self.n_s as u64 {
            return Err("need n_cp >= n_s >= 1".into());
        }
        if self.trials < 1 {
            return Err("trials must be at least 1".into());
        }
        if self.capacity_factor < 1.0 {
            return Err("capacity_factor must be at least 1".into());
        }
        Ok(())
    }
}

/// Runs the maximum-capacity-usage experiment and returns the worst
/// used/capacity ratio seen over every instant and sector.
///
/// Sectors are equal-sized with total capacity `capacity_factor` times the
/// total backup size. Reallocate mode independently reassigns every backup
/// `trials` times; refresh mode performs one assignment and then
/// `trials * n_cp` single-backup relocations to fresh uniform targets.
/// Deterministic per seed; reallocate trials fan out in parallel.
pub fn run_table3(config: &ExperimentConfig) -> f64 {
    config.validate().expect("valid experiment config");
    let mut size_rng = RngStream::child(config.seed, 0);
    let sizes: Vec<f64> = (0..config.n_cp)
        .map(|_| sample_file_size(config.dist, &mut size_rng))
        .collect();
    run_table3_sized(config, &sizes)
}

/// Same experiment over a caller-supplied backup population. The
/// placement stream is derived from the seed alone, independent of the
/// input order.
pub fn run_table3_sized(config: &ExperimentConfig, sizes: &[f64]) -> f64 {
    debug_assert_eq!(sizes.len() as u64, config.n_cp);
    let total: f64 = sizes.iter().sum();
    let capacity = config.capacity_factor * total / config.n_s as f64;
    match config.mode {
        Table3Mode::Reallocate => {
            let maxima = exec::map_trials(config.trials as u64, |trial| {
                let mut rng = RngStream::child(config.seed, 1 + trial);
                let mut loads = vec![0.0f64; config.n_s as usize];
                for &size in sizes {
                    let target = rng.uniform_range(0, config.n_s as u64 - 1) as usize;
                    loads[target] += size;
                }
                loads.iter().cloned().fold(0.0, f64::max)
            });
            maxima.into_iter().fold(0.0, f64::max) / capacity
        }
        Table3Mode::Refresh => {
            let mut rng = RngStream::child(config.seed, 1);
            let mut loads = vec![0.0f64; config.n_s as usize];
            let mut placement: Vec<u32> = Vec::with_capacity(config.n_cp as usize);
            for &size in sizes {
                let target = rng.uniform_range(0, config.n_s as u64 - 1) as usize;
                loads[target] += size;
                placement.push(target as u32);
            }
            let mut max_load = loads.iter().cloned().fold(0.0, f64::max);
            let steps = config.trials as u64 * config.n_cp;
            for _ in 0..steps {
                let backup = rng.uniform_range(0, config.n_cp - 1) as usize;
                let target = rng.uniform_range(0, config.n_s as u64 - 1) as usize;
                let from = placement[backup] as usize;
                loads[from] -= sizes[backup];
                loads[target] += sizes[backup];
                placement[backup] = target as u32;
                if loads[target] > max_load {
                    max_load = loads[target];
                }
            }
            max_load / capacity
        }
    }
}

/// Empirical companion to the collision tail bound: places equal-size
/// backups filling `load_fraction` of the network and counts trials where
/// any sector's free capacity dropped to an eighth of its size.
pub fn verify_thm2_empirical(
    n_s: u32,
    capacity_over_file_size: f64,
    load_fraction: f64,
    trials: u64,
    seed: u64,
) -> (f64, f64) {
    assert!(
        (0.0..=0.5).contains(&load_fraction),
        "redundant-capacity regime requires load_fraction <= 1/2"
    );
    let capacity = capacity_over_file_size;
    let backups = (load_fraction * n_s as f64 * capacity).floor() as u64;
    let threshold = (0.875 * capacity).ceil() as u32;
    let hits: u64 = exec::map_trials(trials, |trial| {
        let mut rng = RngStream::child(seed, trial);
        let mut counts = vec![0u32; n_s as usize];
        let mut hit = 0u64;
        for _ in 0..backups {
            let target = rng.uniform_range(0, n_s as u64 - 1) as usize;
            counts[target] += 1;
            if counts[target] >= threshold {
                hit = 1;
                break;
            }
        }
        hit
    })
    .into_iter()
    .sum();
    let observed = hits as f64 / trials as f64;
    let bound = thm2_collision_bound(n_s as f64, capacity_over_file_size);
    if bound <= 1.0 {
        assert!(
            observed <= bound || observed == 0.0,
            "observed frequency {observed} exceeds the bound {bound}"
        );
    }
    (observed, bound)
}
