//! Swarm state space, rule polarities and the transitions they induce.
//!
//! The swarm is well mixed, so its macroscopic state is fully described by
//! the population size `N` and the number `K` of agents holding opinion X1.
//! The order parameter is `z = x1 - x2 = 2K/N - 1`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("population size must be a positive odd integer, got {0}")]
    InvalidPopulation(usize),
    #[error("count_x1 = {count_x1} outside [0, {n_agents}]")]
    CountOutOfRange { n_agents: usize, count_x1: usize },
    #[error("z = {0} outside [-1, 1]")]
    ZOutOfRange(f64),
    #[error("group size must be an odd integer >= 3, got {0}")]
    InvalidGroupSize(usize),
    #[error("noise level must be finite and non-negative, got {0}")]
    InvalidNoise(f64),
    #[error("composition k = {k} outside [0, {group_size}]")]
    CompositionOutOfRange { k: usize, group_size: usize },
    #[error("group size {group_size} exceeds population size {n_agents}")]
    GroupLargerThanPopulation { group_size: usize, n_agents: usize },
    #[error("rule for composition k = {k} would leave count_x1 outside [0, {n_agents}]")]
    StateInvariant { k: usize, n_agents: usize },
    #[error("noise flip {0} is infeasible in state with count_x1 = {1}")]
    InfeasibleFlip(FlipDirection, usize),
    #[error("expected {expected} polarities for group size {group_size}, got {found}")]
    PolarityCount {
        group_size: usize,
        expected: usize,
        found: usize,
    },
}

/// Macroscopic swarm state `(N, K)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SwarmState {
    n_agents: usize,
    count_x1: usize,
}

impl SwarmState {
    pub fn new(n_agents: usize, count_x1: usize) -> Result<Self, ModelError> {
        if n_agents == 0 || n_agents.is_multiple_of(2) {
            return Err(ModelError::InvalidPopulation(n_agents));
        }
        if count_x1 > n_agents {
            return Err(ModelError::CountOutOfRange { n_agents, count_x1 });
        }
        Ok(Self { n_agents, count_x1 })
    }

    /// Nearest lattice state to `z`, with `K = round(N (z + 1) / 2)` rounded
    /// half away from zero and clamped to `[0, N]`.
    pub fn from_z(n_agents: usize, z: f64) -> Result<Self, ModelError> {
        if !(-1.0..=1.0).contains(&z) {
            return Err(ModelError::ZOutOfRange(z));
        }
        let k = (n_agents as f64 * (z + 1.0) / 2.0).round();
        let k = k.clamp(0.0, n_agents as f64) as usize;
        Self::new(n_agents, k)
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn count_x1(&self) -> usize {
        self.count_x1
    }

    pub fn count_x2(&self) -> usize {
        self.n_agents - self.count_x1
    }

    pub fn x1(&self) -> f64 {
        self.count_x1 as f64 / self.n_agents as f64
    }

    pub fn z(&self) -> f64 {
        2.0 * self.count_x1 as f64 / self.n_agents as f64 - 1.0
    }

    /// Fires the rule for a drawn group holding `k` X1 agents.
    pub fn apply_rule(
        &self,
        k: usize,
        group_size: usize,
        polarity: RulePolarity,
    ) -> Result<Self, ModelError> {
        let delta = signed_weight(k, group_size, polarity)?;
        let next = self.count_x1 as i64 + i64::from(delta);
        if next < 0 || next > self.n_agents as i64 {
            return Err(ModelError::StateInvariant {
                k,
                n_agents: self.n_agents,
            });
        }
        Ok(Self {
            n_agents: self.n_agents,
            count_x1: next as usize,
        })
    }

    pub fn apply_noise_flip(&self, direction: FlipDirection) -> Result<Self, ModelError> {
        let count_x1 = match direction {
            FlipDirection::X1ToX2 if self.count_x1 >= 1 => self.count_x1 - 1,
            FlipDirection::X2ToX1 if self.count_x1 < self.n_agents => self.count_x1 + 1,
            _ => return Err(ModelError::InfeasibleFlip(direction, self.count_x1)),
        };
        Ok(Self {
            n_agents: self.n_agents,
            count_x1,
        })
    }
}

/// `z` coordinate of a state.
pub fn z_of(state: &SwarmState) -> f64 {
    state.z()
}

pub fn state_of_z(n_agents: usize, z: f64) -> Result<SwarmState, ModelError> {
    SwarmState::from_z(n_agents, z)
}

/// Direction of a spontaneous opinion flip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FlipDirection {
    X1ToX2,
    X2ToX1,
}

impl fmt::Display for FlipDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlipDirection::X1ToX2 => f.write_str("X1->X2"),
            FlipDirection::X2ToX1 => f.write_str("X2->X1"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RulePolarity {
    /// Converts one minority member of the group to the majority opinion.
    Majority,
    /// Converts one majority member of the group to the minority opinion.
    Minority,
}

impl RulePolarity {
    pub fn sign(self) -> i8 {
        match self {
            RulePolarity::Majority => 1,
            RulePolarity::Minority => -1,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            RulePolarity::Majority => RulePolarity::Minority,
            RulePolarity::Minority => RulePolarity::Majority,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            RulePolarity::Majority => 'M',
            RulePolarity::Minority => 'm',
        }
    }
}

/// Sign of the change in `K` when the rule for a group with `k` X1 agents
/// fires: zero at the unanimous compositions, otherwise the direction of the
/// group majority, flipped for minority rules.
pub fn signed_weight(
    k: usize,
    group_size: usize,
    polarity: RulePolarity,
) -> Result<i8, ModelError> {
    if k > group_size {
        return Err(ModelError::CompositionOutOfRange { k, group_size });
    }
    if k == 0 || k == group_size {
        return Ok(0);
    }
    let direction = if 2 * k > group_size { 1 } else { -1 };
    Ok(direction * polarity.sign())
}

fn check_group_size(group_size: usize) -> Result<(), ModelError> {
    if group_size < 3 || group_size.is_multiple_of(2) {
        return Err(ModelError::InvalidGroupSize(group_size));
    }
    Ok(())
}

/// A symmetric majority/minority rule assignment for groups of size `G`.
///
/// `polarities[m - 1]` is the polarity of the rule for compositions whose
/// minority count is `m`, i.e. both `k = m` and `k = G - m`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RuleSet {
    group_size: usize,
    polarities: Vec<RulePolarity>,
}

impl RuleSet {
    pub fn new(group_size: usize, polarities: Vec<RulePolarity>) -> Result<Self, ModelError> {
        check_group_size(group_size)?;
        let expected = (group_size - 1) / 2;
        if polarities.len() != expected {
            return Err(ModelError::PolarityCount {
                group_size,
                expected,
                found: polarities.len(),
            });
        }
        Ok(Self {
            group_size,
            polarities,
        })
    }

    pub fn uniform(group_size: usize, polarity: RulePolarity) -> Result<Self, ModelError> {
        check_group_size(group_size)?;
        Self::new(group_size, vec![polarity; (group_size - 1) / 2])
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    pub fn polarities(&self) -> &[RulePolarity] {
        &self.polarities
    }

    /// Polarity governing composition `k` (count of X1 in the group), or
    /// `None` for the unanimous compositions where no rule applies.
    pub fn polarity_for(&self, k: usize) -> Option<RulePolarity> {
        if k == 0 || k >= self.group_size {
            return None;
        }
        let m = k.min(self.group_size - k);
        Some(self.polarities[m - 1])
    }

    /// Signed weight for composition `k` under this rule set.
    pub fn weight(&self, k: usize) -> i8 {
        match self.polarity_for(k) {
            Some(p) => signed_weight(k, self.group_size, p).unwrap_or(0),
            None => 0,
        }
    }

    pub fn complement(&self) -> Self {
        Self {
            group_size: self.group_size,
            polarities: self.polarities.iter().map(|p| p.flipped()).collect(),
        }
    }

    pub fn is_complement_of(&self, other: &RuleSet) -> bool {
        self.group_size == other.group_size
            && self
                .polarities
                .iter()
                .zip(&other.polarities)
                .all(|(a, b)| *a == b.flipped())
    }

    /// Compact polarity string such as `"MMm"`.
    pub fn label(&self) -> String {
        self.polarities.iter().map(|p| p.as_char()).collect()
    }

    pub fn check_population(&self, n_agents: usize) -> Result<(), ModelError> {
        if self.group_size > n_agents {
            return Err(ModelError::GroupLargerThanPopulation {
                group_size: self.group_size,
                n_agents,
            });
        }
        Ok(())
    }
}

impl fmt::Display for RuleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// All `2^((G-1)/2)` rule sets for group size `G`, ordered by polarity
/// string with `'M'` before `'m'`.
pub fn enumerate_rulesets(group_size: usize) -> Result<Vec<RuleSet>, ModelError> {
    check_group_size(group_size)?;
    let slots = (group_size - 1) / 2;
    let count = 1usize << slots;
    let sets = (0..count)
        .map(|bits| {
            let polarities = (0..slots)
                .map(|i| {
                    if bits >> (slots - 1 - i) & 1 == 0 {
                        RulePolarity::Majority
                    } else {
                        RulePolarity::Minority
                    }
                })
                .collect();
            RuleSet {
                group_size,
                polarities,
            }
        })
        .collect();
    Ok(sets)
}

/// Noise level `ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    epsilon: f64,
}

impl NoiseSpec {
    pub fn new(epsilon: f64) -> Result<Self, ModelError> {
        if !epsilon.is_finite() || epsilon < 0.0 {
            return Err(ModelError::InvalidNoise(epsilon));
        }
        Ok(Self { epsilon })
    }

    pub fn none() -> Self {
        Self { epsilon: 0.0 }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}
