//! Hypergeometric probabilities for the composition of a drawn group.
//!
//! `P(X = k) = C(K, k) C(N - K, G - k) / C(N, G)` is the probability that a
//! group of `G` agents drawn without replacement from `N` agents, `K` of which
//! hold opinion X1, contains exactly `k` X1 agents.
//!
//! Small populations (`N <= 64`) use exact 128-bit binomials; larger ones
//! accumulate log binomials as sums of `ln((n - r + i) / i)`, which keeps the
//! absolute error of each log term near machine precision.

use thiserror::Error;

/// Largest population handled by exact integer arithmetic.
pub const EXACT_LIMIT: usize = 64;
/// Largest population the brute-force enumerator accepts.
pub const BRUTEFORCE_LIMIT: usize = 24;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HypergeomError {
    #[error("count_x1 = {count_x1} exceeds population size {n_agents}")]
    CountOutOfRange { n_agents: usize, count_x1: usize },
    #[error("group size {group_size} must lie in [1, {n_agents}]")]
    GroupOutOfRange { n_agents: usize, group_size: usize },
    #[error("k = {k} outside [0, {group_size}]")]
    KOutOfRange { k: usize, group_size: usize },
    #[error("brute-force enumeration limited to N <= {BRUTEFORCE_LIMIT}, got {0}")]
    TooLarge(usize),
}

fn check(n_agents: usize, count_x1: usize, group_size: usize) -> Result<(), HypergeomError> {
    if count_x1 > n_agents {
        return Err(HypergeomError::CountOutOfRange { n_agents, count_x1 });
    }
    if group_size == 0 || group_size > n_agents {
        return Err(HypergeomError::GroupOutOfRange {
            n_agents,
            group_size,
        });
    }
    Ok(())
}

fn choose_exact(n: usize, r: usize) -> u128 {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    // each partial product is itself a binomial, so the division is exact
    (1..=r as u128).fold(1u128, |acc, i| acc * (n as u128 - r as u128 + i) / i)
}

fn ln_choose(n: usize, r: usize) -> f64 {
    let r = r.min(n - r);
    (1..=r).map(|i| ((n - r + i) as f64 / i as f64).ln()).sum()
}

fn in_support(n_agents: usize, count_x1: usize, group_size: usize, k: usize) -> bool {
    k <= count_x1 && group_size - k <= n_agents - count_x1
}

fn pmf_exact(n_agents: usize, count_x1: usize, group_size: usize, k: usize) -> f64 {
    let num = choose_exact(count_x1, k) * choose_exact(n_agents - count_x1, group_size - k);
    num as f64 / choose_exact(n_agents, group_size) as f64
}

fn pmf_log(n_agents: usize, count_x1: usize, group_size: usize, k: usize) -> f64 {
    let ln = ln_choose(count_x1, k) + ln_choose(n_agents - count_x1, group_size - k)
        - ln_choose(n_agents, group_size);
    ln.exp()
}

fn pmf_unchecked(n_agents: usize, count_x1: usize, group_size: usize, k: usize) -> f64 {
    if !in_support(n_agents, count_x1, group_size, k) {
        0.0
    } else if n_agents <= EXACT_LIMIT {
        pmf_exact(n_agents, count_x1, group_size, k)
    } else {
        pmf_log(n_agents, count_x1, group_size, k)
    }
}

/// Probability that a group of `group_size` drawn from `n_agents` (of which
/// `count_x1` hold X1) contains exactly `k` X1 agents. Zero outside the
/// support.
pub fn pmf(
    n_agents: usize,
    count_x1: usize,
    group_size: usize,
    k: usize,
) -> Result<f64, HypergeomError> {
    check(n_agents, count_x1, group_size)?;
    if k > group_size {
        return Err(HypergeomError::KOutOfRange { k, group_size });
    }
    Ok(pmf_unchecked(n_agents, count_x1, group_size, k))
}

/// Firing probabilities `P(X = k)` for `k = 0..=G` at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct PmfTable {
    group_size: usize,
    probabilities: Vec<f64>,
}

impl PmfTable {
    pub fn group_size(&self) -> usize {
        self.group_size
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn get(&self, k: usize) -> f64 {
        self.probabilities.get(k).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.probabilities
            .iter()
            .enumerate()
            .map(|(k, p)| k as f64 * p)
            .sum()
    }
}

pub fn pmf_table(
    n_agents: usize,
    count_x1: usize,
    group_size: usize,
) -> Result<PmfTable, HypergeomError> {
    check(n_agents, count_x1, group_size)?;
    let probabilities = (0..=group_size)
        .map(|k| pmf_unchecked(n_agents, count_x1, group_size, k))
        .collect();
    Ok(PmfTable {
        group_size,
        probabilities,
    })
}

/// Counts, for every `k`, how many of the `C(N, G)` groups contain exactly
/// `k` of the first `K` agents. Walks all `G`-subsets of `N` bits in
/// colex order.
pub fn bruteforce_counts(
    n_agents: usize,
    count_x1: usize,
    group_size: usize,
) -> Result<Vec<u64>, HypergeomError> {
    if n_agents > BRUTEFORCE_LIMIT {
        return Err(HypergeomError::TooLarge(n_agents));
    }
    check(n_agents, count_x1, group_size)?;
    let successes: u32 = (1u32 << count_x1) - 1;
    let limit: u32 = 1u32 << n_agents;
    let mut counts = vec![0u64; group_size + 1];
    let mut subset: u32 = (1u32 << group_size) - 1;
    while subset < limit {
        counts[(subset & successes).count_ones() as usize] += 1;
        // Gosper's hack: next integer with the same popcount
        let low = subset & subset.wrapping_neg();
        let ripple = subset + low;
        subset = (((ripple ^ subset) >> 2) / low) | ripple;
    }
    Ok(counts)
}

/// Validation oracle: `P(X = k)` by exhaustive enumeration of all groups.
pub fn pmf_bruteforce(
    n_agents: usize,
    count_x1: usize,
    group_size: usize,
    k: usize,
) -> Result<f64, HypergeomError> {
    if k > group_size {
        return Err(HypergeomError::KOutOfRange { k, group_size });
    }
    let counts = bruteforce_counts(n_agents, count_x1, group_size)?;
    let total: u64 = counts.iter().sum();
    Ok(counts[k] as f64 / total as f64)
}
