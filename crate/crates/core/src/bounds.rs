//! Closed-form evaluators for the protocol's scalability, collision,
//! robustness, and deposit bounds, plus numerical checks for the two
//! supporting inequalities (a KL-divergence lower bound and a Stirling
//! upper bound on the central binomial).
//!
//! All logarithms are natural. Terms containing `(..)^N_s` are evaluated
//! in log space so the evaluators stay finite at `N_s = 10^6` and beyond.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BoundsError {
    #[error("file set is empty")]
    EmptyFileSet,
    #[error("inputs outside the valid domain: {0}")]
    DomainError(String),
    #[error("lambda * N_s = {0} is not an integer count")]
    NonIntegralCount(f64),
}

/// Inputs shared by the bound evaluators.
///
/// `gamma_vm` is the stored-to-maximal value ratio N_v / N_v^m; `cap_para`
/// is the design constant N_v^m / N_s; `r1` and `r2` are the file-mix
/// ratios from [`compute_r1_r2`].
#[derive(Clone, Debug, Serialize)]
pub struct BoundInputs {
    pub k: u32,
    pub n_s: f64,
    pub cap_para: f64,
    pub lambda: f64,
    pub c: f64,
    pub gamma_vm: f64,
    pub min_capacity: f64,
    pub min_value: f64,
    pub r1: f64,
    pub r2: f64,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<(), BoundsError> {
        let bad = |msg: &str| Err(BoundsError::DomainError(msg.to_string()));
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return bad("lambda must lie in (0, 1)");
        }
        if !(self.c > 0.0 && self.c < 1.0) {
            return bad("c must lie in (0, 1)");
        }
        if self.k < 1 {
            return bad("k must be at least 1");
        }
        if !(self.gamma_vm > 0.0 && self.gamma_vm <= 1.0) {
            return bad("gamma_vm must lie in (0, 1]");
        }
        if self.r1 < 1.0 {
            return bad("r1 must be at least 1");
        }
        if self.r2 <= 0.0 {
            return bad("r2 must be positive");
        }
        if self.n_s < 1.0 || self.cap_para <= 0.0 || self.min_capacity <= 0.0 || self.min_value <= 0.0 {
            return bad("n_s, cap_para, min_capacity, min_value must be positive");
        }
        Ok(())
    }
}

/// File-mix ratios: `r1` is the value-weighted mean file value in
/// `min_value` units; `r2` relates carried value to occupied size.
pub fn compute_r1_r2(
    files: &[(f64, f64)],
    min_capacity: f64,
    min_value: f64,
    cap_para: f64,
) -> Result<(f64, f64), BoundsError> {
    if files.is_empty() {
        return Err(BoundsError::EmptyFileSet);
    }
    if files.iter().any(|&(size, _)| size <= 0.0) {
        return Err(BoundsError::DomainError("file sizes must be positive".into()));
    }
    let sum_size: f64 = files.iter().map(|&(s, _)| s).sum();
    let sum_value: f64 = files.iter().map(|&(_, v)| v).sum();
    let sum_size_value: f64 = files.iter().map(|&(s, v)| s * v).sum();
    let r1 = sum_size_value / (min_value * sum_size);
    let r2 = min_capacity * sum_value / (min_value * sum_size * cap_para);
    Ok((r1, r2))
}

/// Maximum total raw-file size the network can carry: the tighter of the
/// redundant-capacity restriction and the maximal-value restriction.
pub fn thm1_capacity_bound(inputs: &BoundInputs) -> f64 {
    let total = inputs.n_s * inputs.min_capacity;
    let by_capacity = total / (2.0 * inputs.r1 * inputs.k as f64);
    let by_value = total / inputs.r2;
    by_capacity.min(by_value)
}

/// Probability that any sector's free capacity drops to 1/8 of its size
/// under equal-size placement: `N_s * exp(-0.144 * capacity/file_size)`,
/// clamped to at most 1. Evaluated in log space.
pub fn thm2_collision_bound(n_s: f64, capacity_over_file_size: f64) -> f64 {
    debug_assert!(capacity_over_file_size >= 0.0);
    let log_bound = n_s.ln() - 0.144 * capacity_over_file_size;
    if log_bound >= 0.0 {
        1.0
    } else {
        log_bound.exp()
    }
}

/// The three terms of the robustness bound on the lost-value fraction.
///
/// `union_term` follows the bound's closed form. `union_term_alt` is the
/// alternate form `5λ^k / γ_v^m` that appears in the published worked
/// example; the two disagree for small `γ_v^m` and the closed form is what
/// [`Thm3Bound::bound`] uses. Both are reported so the discrepancy stays
/// visible instead of being silently reconciled.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Thm3Bound {
    /// 5·λ^k — all k replicas of a file destroyed.
    pub all_replicas_term: f64,
    /// λ^(k/2).
    pub half_exponent_term: f64,
    /// 4·((ln(e/2π) − ln c)/N_s − ln(λ^λ(1−λ)^(1−λ))) / (γ_v^m·k·ln(1/λ)·capPara).
    pub union_term: f64,
    /// Alternate worked-example form 5·λ^k / γ_v^m.
    pub union_term_alt: f64,
    /// max of the three closed-form terms, clamped to [0, 1].
    pub bound: f64,
}

/// Upper bound on the fraction of stored value lost when a λ fraction of
/// capacity is corrupted, holding with probability at least 1 − c.
pub fn thm3_robustness_bound(inputs: &BoundInputs) -> Thm3Bound {
    let k = inputs.k as f64;
    let lam = inputs.lambda;
    let all_replicas_term = 5.0 * lam.powf(k);
    let half_exponent_term = lam.powf(k / 2.0);
    // ln(λ^λ (1-λ)^(1-λ)) = λ ln λ + (1-λ) ln(1-λ)
    let entropy = lam * lam.ln() + (1.0 - lam) * (1.0 - lam).ln();
    let log_e_over_2pi = 1.0 - (2.0 * std::f64::consts::PI).ln();
    let union_term = 4.0 * ((log_e_over_2pi - inputs.c.ln()) / inputs.n_s - entropy)
        / (inputs.gamma_vm * k * (1.0 / lam).ln() * inputs.cap_para);
    let union_term_alt = all_replicas_term / inputs.gamma_vm;
    let bound = all_replicas_term
        .max(half_exponent_term)
        .max(union_term)
        .clamp(0.0, 1.0);
    Thm3Bound {
        all_replicas_term,
        half_exponent_term,
        union_term,
        union_term_alt,
        bound,
    }
}

/// The three terms of the deposit-ratio bound.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Thm4Bound {
    /// 5·λ^(k−1).
    pub all_replicas_term: f64,
    /// λ^(k/2 − 1).
    pub half_exponent_term: f64,
    /// (4/(k·capPara))·(ln N_s / ln(1/λ) + ln(1/c) / ln N_s).
    pub union_term: f64,
    /// max of the three terms; a ratio, deliberately not clamped above 1.
    pub ratio: f64,
}

/// Smallest deposit ratio guaranteeing full compensation with probability
/// at least 1 − c when at most a λ fraction of capacity is corrupted.
pub fn thm4_deposit_ratio(inputs: &BoundInputs) -> Thm4Bound {
    let k = inputs.k as f64;
    let lam = inputs.lambda;
    let all_replicas_term = 5.0 * lam.powf(k - 1.0);
    let half_exponent_term = lam.powf(k / 2.0 - 1.0);
    let union_term = 4.0 / (k * inputs.cap_para)
        * (inputs.n_s.ln() / (1.0 / lam).ln() + (1.0 / inputs.c).ln() / inputs.n_s.ln());
    let ratio = all_replicas_term
        .max(half_exponent_term)
        .max(union_term)
        .max(0.0);
    Thm4Bound {
        all_replicas_term,
        half_exponent_term,
        union_term,
        ratio,
    }
}

/// Result of checking `D_KL(x‖p) ≥ ½·x·ln(x/p)` at one point.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct KlCheck {
    pub dkl: f64,
    pub half_bound: f64,
    pub holds: bool,
}

/// Evaluates the KL-divergence inequality on its stated domain
/// `0 < p ≤ 1/5`, `5p ≤ x ≤ 1`.
pub fn kl_lemma_check(p: f64, x: f64) -> Result<KlCheck, BoundsError> {
    if !(p > 0.0 && p <= 0.2) {
        return Err(BoundsError::DomainError(format!("p={p} outside (0, 1/5]")));
    }
    if !(x >= 5.0 * p && x <= 1.0) {
        return Err(BoundsError::DomainError(format!("x={x} outside [5p, 1]")));
    }
    let lead = x * (x / p).ln();
    // The (1-x) term vanishes at x = 1.
    let tail = if x < 1.0 {
        (1.0 - x) * ((1.0 - x) / (1.0 - p)).ln()
    } else {
        0.0
    };
    let dkl = lead + tail;
    let half_bound = 0.5 * lead;
    Ok(KlCheck {
        dkl,
        half_bound,
        holds: dkl >= half_bound,
    })
}

/// Stirling-type upper bound on the binomial coefficient C(N_s, λ·N_s):
/// `(e/2π)·(λ^λ(1−λ)^(1−λ))^(−N_s)`. Returned in log space, with the
/// linear value alongside when it is representable.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct StirlingBound {
    pub log_value: f64,
    pub value: Option<f64>,
}

pub fn binom_stirling_upper(n_s: u64, lambda: f64) -> Result<StirlingBound, BoundsError> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(BoundsError::DomainError(format!("lambda={lambda} outside (0, 1)")));
    }
    let count = lambda * n_s as f64;
    if (count - count.round()).abs() > 1e-9 {
        return Err(BoundsError::NonIntegralCount(count));
    }
    let entropy = lambda * lambda.ln() + (1.0 - lambda) * (1.0 - lambda).ln();
    let log_value = 1.0 - (2.0 * std::f64::consts::PI).ln() - n_s as f64 * entropy;
    let value = if log_value < (f64::MAX.ln()) {
        Some(log_value.exp())
    } else {
        None
    };
    Ok(StirlingBound { log_value, value })
}
