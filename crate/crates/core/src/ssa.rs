//! Gillespie direct-method simulation of the swarm.
//!
//! Three event channels compete:
//!
//! 1. group interaction at rate `r N`: `G` agents are drawn without
//!    replacement and the rule for their composition `k` fires
//!    (`k = 0` and `k = G` are recorded as null draws),
//! 2. noise flip X1 -> X2 at rate `c K`,
//! 3. noise flip X2 -> X1 at rate `c (N - K)`.
//!
//! With `r = 1/2` and `c = ε/2` the expected drift of `z` is exactly
//! `Σ_k w_k P(X = k) - ε z`.

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{FlipDirection, ModelError, RuleSet, SwarmState};

pub const DEFAULT_RULE_RATE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SsaError {
    #[error("total propensity is zero, the system is frozen")]
    Frozen,
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Per-agent noise flip rate realizing a noise level `ε`.
pub fn noise_rate_for(epsilon: f64) -> f64 {
    epsilon / 2.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Group interaction events per agent per unit time.
    pub rule_rate: f64,
    /// Spontaneous flips per agent per unit time.
    pub noise_rate: f64,
    pub max_events: Option<u64>,
    pub t_max: Option<f64>,
    pub record_null_draws: bool,
    /// Stop as soon as the swarm reaches consensus (`K = 0` or `K = N`).
    pub stop_at_consensus: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            rule_rate: DEFAULT_RULE_RATE,
            noise_rate: 0.0,
            max_events: Some(100_000),
            t_max: None,
            record_null_draws: false,
            stop_at_consensus: false,
        }
    }
}

impl SimConfig {
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self {
            noise_rate: noise_rate_for(epsilon),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SsaError> {
        let rate_ok = |x: f64| x.is_finite() && x >= 0.0;
        if !rate_ok(self.rule_rate) {
            return Err(SsaError::Config(format!(
                "rule_rate {} must be >= 0",
                self.rule_rate
            )));
        }
        if !rate_ok(self.noise_rate) {
            return Err(SsaError::Config(format!(
                "noise_rate {} must be >= 0",
                self.noise_rate
            )));
        }
        if let Some(t) = self.t_max {
            if t.is_nan() || t <= 0.0 {
                return Err(SsaError::Config(format!("t_max {t} must be positive")));
            }
        }
        if self.max_events == Some(0) {
            return Err(SsaError::Config("max_events must be positive".into()));
        }
        if self.max_events.is_none() && self.t_max.is_none() && !self.stop_at_consensus {
            return Err(SsaError::Config(
                "one of max_events, t_max or stop_at_consensus must bound the run".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Propensities {
    pub group_event: f64,
    pub noise_x1_to_x2: f64,
    pub noise_x2_to_x1: f64,
}

impl Propensities {
    pub fn total(&self) -> f64 {
        self.group_event + self.noise_x1_to_x2 + self.noise_x2_to_x1
    }

    pub fn is_frozen(&self) -> bool {
        self.total() <= 0.0
    }
}

pub fn propensities(state: &SwarmState, config: &SimConfig) -> Propensities {
    Propensities {
        group_event: config.rule_rate * state.n_agents() as f64,
        noise_x1_to_x2: config.noise_rate * state.count_x1() as f64,
        noise_x2_to_x1: config.noise_rate * state.count_x2() as f64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    /// A mixed group with `k` X1 agents fired its rule.
    GroupRule(usize),
    NoiseFlip(FlipDirection),
    /// A unanimous group (`k = 0` or `k = G`) was drawn; nothing changes.
    NullDraw(usize),
}

impl EventKind {
    pub fn label(&self) -> &'static str {
        match self {
            EventKind::GroupRule(_) => "rule",
            EventKind::NoiseFlip(FlipDirection::X1ToX2) => "noise12",
            EventKind::NoiseFlip(FlipDirection::X2ToX1) => "noise21",
            EventKind::NullDraw(_) => "null",
        }
    }

    pub fn composition(&self) -> Option<usize> {
        match *self {
            EventKind::GroupRule(k) | EventKind::NullDraw(k) => Some(k),
            EventKind::NoiseFlip(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub dt: f64,
    pub event: EventKind,
    pub state: SwarmState,
}

/// Number of X1 agents in a group of `group_size` drawn uniformly without
/// replacement, by sequential urn draws.
pub fn draw_group_composition<R: Rng + ?Sized>(
    state: &SwarmState,
    group_size: usize,
    rng: &mut R,
) -> usize {
    let mut remaining = state.n_agents();
    let mut successes = state.count_x1();
    let mut k = 0;
    for drawn in 0..group_size {
        if successes == 0 {
            break;
        }
        if successes == remaining {
            // only X1 agents left in the urn
            k += group_size - drawn;
            break;
        }
        if rng.random_range(0..remaining) < successes {
            k += 1;
            successes -= 1;
        }
        remaining -= 1;
    }
    k
}

/// Chooses the firing channel for `u` uniform in `[0, 1)`. A channel with
/// zero propensity is never selected, even if `u * total` rounds up.
fn select_channel(p: &Propensities, u: f64) -> Channel {
    let x = u * p.total();
    if x < p.group_event {
        Channel::Group
    } else if x < p.group_event + p.noise_x1_to_x2 || p.noise_x2_to_x1 == 0.0 {
        Channel::Noise(FlipDirection::X1ToX2)
    } else {
        Channel::Noise(FlipDirection::X2ToX1)
    }
}

enum Channel {
    Group,
    Noise(FlipDirection),
}

/// One Gillespie step: exponential waiting time and one event.
pub fn step<R: Rng + ?Sized>(
    state: &SwarmState,
    rules: &RuleSet,
    config: &SimConfig,
    rng: &mut R,
) -> Result<StepOutcome, SsaError> {
    rules.check_population(state.n_agents())?;
    let p = propensities(state, config);
    if p.is_frozen() {
        return Err(SsaError::Frozen);
    }
    let u: f64 = rng.sample(Open01);
    let dt = -u.ln() / p.total();
    let (event, next) = match select_channel(&p, rng.random::<f64>()) {
        Channel::Group => {
            let g = rules.group_size();
            let k = draw_group_composition(state, g, rng);
            match rules.polarity_for(k) {
                Some(polarity) => (EventKind::GroupRule(k), state.apply_rule(k, g, polarity)?),
                None => (EventKind::NullDraw(k), *state),
            }
        }
        Channel::Noise(direction) => (
            EventKind::NoiseFlip(direction),
            state.apply_noise_flip(direction)?,
        ),
    };
    Ok(StepOutcome {
        dt,
        event,
        state: next,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryEvent {
    pub time: f64,
    pub event: EventKind,
    pub count_x1_after: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct EventCounts {
    pub rule: u64,
    pub noise12: u64,
    pub noise21: u64,
    pub null: u64,
}

impl EventCounts {
    fn record(&mut self, event: &EventKind) {
        match event {
            EventKind::GroupRule(_) => self.rule += 1,
            EventKind::NoiseFlip(FlipDirection::X1ToX2) => self.noise12 += 1,
            EventKind::NoiseFlip(FlipDirection::X2ToX1) => self.noise21 += 1,
            EventKind::NullDraw(_) => self.null += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.rule + self.noise12 + self.noise21 + self.null
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub initial_state: SwarmState,
    pub seed: u64,
    pub events: Vec<TrajectoryEvent>,
    pub final_state: SwarmState,
    /// Simulated time at which the run stopped.
    pub end_time: f64,
    /// All processed events, including elided null draws.
    pub counts: EventCounts,
}

impl Trajectory {
    /// State holding at time `t` (right-continuous).
    pub fn state_at(&self, t: f64) -> SwarmState {
        let idx = self.events.partition_point(|e| e.time <= t);
        let k = match idx {
            0 => self.initial_state.count_x1(),
            i => self.events[i - 1].count_x1_after,
        };
        SwarmState::new(self.initial_state.n_agents(), k).expect("recorded counts are valid")
    }

    /// Time-weighted mean of `z` over `[0, end_time]`.
    pub fn time_average_z(&self) -> f64 {
        if self.end_time <= 0.0 {
            return self.initial_state.z();
        }
        let n = self.initial_state.n_agents() as f64;
        let z = |k: usize| 2.0 * k as f64 / n - 1.0;
        let mut area = 0.0;
        let mut t_prev = 0.0;
        let mut k_prev = self.initial_state.count_x1();
        for e in &self.events {
            area += z(k_prev) * (e.time - t_prev);
            t_prev = e.time;
            k_prev = e.count_x1_after;
        }
        area += z(k_prev) * (self.end_time - t_prev);
        area / self.end_time
    }

    /// Checks the recorded invariants: strictly increasing times, unit
    /// steps, and that replaying the events reproduces every count.
    pub fn verify(&self, rules: &RuleSet) -> Result<(), String> {
        let mut state = self.initial_state;
        let mut t_prev = 0.0;
        for (i, e) in self.events.iter().enumerate() {
            if e.time.is_nan() || e.time <= t_prev {
                return Err(format!("event {i}: time {} not after {t_prev}", e.time));
            }
            t_prev = e.time;
            state = match e.event {
                EventKind::GroupRule(k) => {
                    let p = rules
                        .polarity_for(k)
                        .ok_or_else(|| format!("event {i}: rule for unanimous k={k}"))?;
                    state.apply_rule(k, rules.group_size(), p)
                }
                EventKind::NoiseFlip(d) => state.apply_noise_flip(d),
                EventKind::NullDraw(_) => Ok(state),
            }
            .map_err(|err| format!("event {i}: {err}"))?;
            if state.count_x1() != e.count_x1_after {
                return Err(format!(
                    "event {i}: replay gives {} but recorded {}",
                    state.count_x1(),
                    e.count_x1_after
                ));
            }
        }
        if state != self.final_state {
            return Err("final state does not match replay".into());
        }
        Ok(())
    }
}

pub fn rng_from_seed(seed: u64) -> Pcg64 {
    Pcg64::seed_from_u64(seed)
}

/// Seed for an independent stream derived from `(seed, index)`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer over a golden-ratio offset
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn is_consensus(state: &SwarmState) -> bool {
    state.count_x1() == 0 || state.count_x1() == state.n_agents()
}

pub fn simulate(
    initial: SwarmState,
    rules: &RuleSet,
    config: &SimConfig,
    seed: u64,
) -> Result<Trajectory, SsaError> {
    config.validate()?;
    rules.check_population(initial.n_agents())?;
    if propensities(&initial, config).is_frozen() {
        return Err(SsaError::Frozen);
    }
    let mut rng = rng_from_seed(seed);
    let mut state = initial;
    let mut time = 0.0;
    let mut events = Vec::new();
    let mut counts = EventCounts::default();

    loop {
        if config.max_events.is_some_and(|m| counts.total() >= m) {
            break;
        }
        if config.stop_at_consensus && is_consensus(&state) {
            break;
        }
        let outcome = step(&state, rules, config, &mut rng)?;
        let next_time = time + outcome.dt;
        if let Some(t_max) = config.t_max {
            if next_time > t_max {
                time = t_max;
                break;
            }
        }
        time = next_time;
        state = outcome.state;
        counts.record(&outcome.event);
        if config.record_null_draws || !matches!(outcome.event, EventKind::NullDraw(_)) {
            events.push(TrajectoryEvent {
                time,
                event: outcome.event,
                count_x1_after: state.count_x1(),
            });
        }
    }

    Ok(Trajectory {
        initial_state: initial,
        seed,
        events,
        final_state: state,
        end_time: time,
        counts,
    })
}

/// Independent replicate runs, replicate `i` seeded with `seed_base + i`.
/// Results are returned in replicate order.
pub fn simulate_replicates(
    initial: SwarmState,
    rules: &RuleSet,
    config: &SimConfig,
    seed_base: u64,
    replicates: usize,
) -> Result<Vec<Trajectory>, SsaError> {
    (0..replicates as u64)
        .into_par_iter()
        .map(|i| simulate(initial, rules, config, seed_base.wrapping_add(i)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergeom::pmf_table;
    use crate::model::RulePolarity;
    use crate::schema::parse_polarity_string;

    fn rules(label: &str) -> RuleSet {
        parse_polarity_string(label, 2 * label.len() + 1).unwrap()
    }

    fn st(n: usize, k: usize) -> SwarmState {
        SwarmState::new(n, k).unwrap()
    }

    #[test]
    fn propensity_examples() {
        let cfg = SimConfig {
            rule_rate: 0.5,
            noise_rate: 0.0,
            ..SimConfig::default()
        };
        let p = propensities(&st(101, 0), &cfg);
        assert_eq!(
            (p.group_event, p.noise_x1_to_x2, p.noise_x2_to_x1),
            (50.5, 0.0, 0.0)
        );

        let cfg = SimConfig {
            rule_rate: 0.0,
            noise_rate: 0.05,
            ..SimConfig::default()
        };
        let p = propensities(&st(101, 101), &cfg);
        assert_eq!(p.group_event, 0.0);
        assert!((p.noise_x1_to_x2 - 5.05).abs() < 1e-12);
        assert_eq!(p.noise_x2_to_x1, 0.0);

        let cfg = SimConfig {
            rule_rate: 0.0,
            noise_rate: 0.0,
            ..SimConfig::default()
        };
        assert!(propensities(&st(101, 40), &cfg).is_frozen());
    }

    #[test]
    fn frozen_system_errors() {
        let cfg = SimConfig {
            rule_rate: 0.0,
            noise_rate: 0.0,
            ..SimConfig::default()
        };
        let mut rng = rng_from_seed(1);
        assert_eq!(
            step(&st(101, 40), &rules("MMM"), &cfg, &mut rng),
            Err(SsaError::Frozen)
        );
        assert_eq!(
            simulate(st(101, 40), &rules("MMM"), &cfg, 1),
            Err(SsaError::Frozen)
        );
    }

    #[test]
    fn config_validation() {
        let unbounded = SimConfig {
            max_events: None,
            ..SimConfig::default()
        };
        assert!(matches!(unbounded.validate(), Err(SsaError::Config(_))));
        let negative = SimConfig {
            rule_rate: -1.0,
            ..SimConfig::default()
        };
        assert!(negative.validate().is_err());
        assert!(SimConfig::default().validate().is_ok());
    }

    #[test]
    fn group_larger_than_population_is_rejected() {
        let mut rng = rng_from_seed(0);
        assert!(matches!(
            step(&st(5, 2), &rules("MMM"), &SimConfig::default(), &mut rng),
            Err(SsaError::Model(
                ModelError::GroupLargerThanPopulation { .. }
            ))
        ));
    }

    #[test]
    fn consensus_without_noise_only_null_draws() {
        let cfg = SimConfig::default();
        let mut rng = rng_from_seed(3);
        let full = st(101, 101);
        for _ in 0..1000 {
            let out = step(&full, &rules("MMM"), &cfg, &mut rng).unwrap();
            assert_eq!(out.event, EventKind::NullDraw(7));
            assert_eq!(out.state, full);
            assert!(out.dt > 0.0);
        }
    }

    #[test]
    fn step_is_deterministic() {
        let cfg = SimConfig::with_epsilon(0.1);
        let a = step(&st(101, 40), &rules("MmM"), &cfg, &mut rng_from_seed(9)).unwrap();
        let b = step(&st(101, 40), &rules("MmM"), &cfg, &mut rng_from_seed(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn group_draw_frequencies_match_pmf() {
        // state reset each step; frequencies over non-null draws against the
        // pmf renormalized over mixed compositions
        let cfg = SimConfig::default();
        let state = st(101, 40);
        let r = rules("MMM");
        let mut rng = rng_from_seed(11);
        let mut counts = [0u64; 8];
        let draws = 1_000_000;
        for _ in 0..draws {
            let out = step(&state, &r, &cfg, &mut rng).unwrap();
            if let EventKind::GroupRule(k) = out.event {
                counts[k] += 1;
            }
        }
        let table = pmf_table(101, 40, 7).unwrap();
        let mixed: f64 = (1..7).map(|k| table.get(k)).sum();
        let fired: u64 = counts.iter().sum();
        for (k, &c) in counts.iter().enumerate().take(7).skip(1) {
            let freq = c as f64 / fired as f64;
            let expected = table.get(k) / mixed;
            assert!(
                (freq - expected).abs() < 5e-3,
                "k={k}: {freq} vs {expected}"
            );
        }
    }

    #[test]
    fn absorbing_extremum_stays_put() {
        let cfg = SimConfig {
            max_events: Some(10_000),
            record_null_draws: true,
            ..SimConfig::default()
        };
        let t = simulate(st(101, 0), &rules("MMM"), &cfg, 5).unwrap();
        assert_eq!(t.events.len(), 10_000);
        assert!(t.events.iter().all(|e| e.count_x1_after == 0));
        t.verify(&rules("MMM")).unwrap();
    }

    #[test]
    fn majority_run_reaches_consensus() {
        let cfg = SimConfig {
            max_events: None,
            stop_at_consensus: true,
            ..SimConfig::default()
        };
        let t = simulate(st(101, 51), &rules("MMM"), &cfg, 21).unwrap();
        assert!(matches!(t.final_state.count_x1(), 0 | 101));
        t.verify(&rules("MMM")).unwrap();
    }

    #[test]
    fn minority_run_hovers_near_zero() {
        let cfg = SimConfig {
            max_events: Some(1_000_000),
            ..SimConfig::default()
        };
        let t = simulate(st(101, 51), &rules("mmm"), &cfg, 2).unwrap();
        let avg = t.time_average_z();
        assert!(avg.abs() <= 0.15, "time-average z = {avg}");
    }

    #[test]
    fn trajectories_are_reproducible_and_consistent() {
        let cfg = SimConfig {
            max_events: Some(20_000),
            record_null_draws: true,
            ..SimConfig::with_epsilon(0.05)
        };
        let r = rules("Mmm");
        let a = simulate(st(101, 30), &r, &cfg, 77).unwrap();
        let b = simulate(st(101, 30), &r, &cfg, 77).unwrap();
        assert_eq!(a, b);
        a.verify(&r).unwrap();
        assert_eq!(a.counts.total(), 20_000);
        let c = simulate(st(101, 30), &r, &cfg, 78).unwrap();
        assert_ne!(a.events, c.events);
    }

    #[test]
    fn eliding_null_draws_keeps_time() {
        let base = SimConfig {
            max_events: Some(5_000),
            ..SimConfig::default()
        };
        let with = SimConfig {
            record_null_draws: true,
            ..base.clone()
        };
        let r = rules("MMM");
        let a = simulate(st(101, 95), &r, &base, 4).unwrap();
        let b = simulate(st(101, 95), &r, &with, 4).unwrap();
        assert_eq!(a.end_time, b.end_time);
        assert_eq!(a.final_state, b.final_state);
        let non_null: Vec<_> = b
            .events
            .iter()
            .filter(|e| !matches!(e.event, EventKind::NullDraw(_)))
            .copied()
            .collect();
        assert_eq!(a.events, non_null);
    }

    #[test]
    fn t_max_bounds_the_run() {
        let cfg = SimConfig {
            max_events: None,
            t_max: Some(3.0),
            ..SimConfig::with_epsilon(0.2)
        };
        let t = simulate(st(101, 50), &rules("MMm"), &cfg, 8).unwrap();
        assert_eq!(t.end_time, 3.0);
        assert!(t.events.iter().all(|e| e.time <= 3.0));
    }

    #[test]
    fn noise_only_mean_decays_exponentially() {
        // E[z(t)] = z0 exp(-2ct); pick t with decay factor 1/2
        let c = 0.05;
        let t_half = std::f64::consts::LN_2 / (2.0 * c);
        let cfg = SimConfig {
            rule_rate: 0.0,
            noise_rate: c,
            max_events: None,
            t_max: Some(t_half),
            ..SimConfig::default()
        };
        let runs = simulate_replicates(st(101, 101), &rules("MMM"), &cfg, 1000, 10_000).unwrap();
        let zs: Vec<f64> = runs.iter().map(|t| t.state_at(t_half).z()).collect();
        let n = zs.len() as f64;
        let mean = zs.iter().sum::<f64>() / n;
        let var = zs.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        assert!((mean - 0.5).abs() <= 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn replicates_are_seeded_by_index() {
        let cfg = SimConfig {
            max_events: Some(500),
            ..SimConfig::with_epsilon(0.1)
        };
        let r = RuleSet::uniform(5, RulePolarity::Minority).unwrap();
        let runs = simulate_replicates(st(51, 20), &r, &cfg, 40, 4).unwrap();
        for (i, run) in runs.iter().enumerate() {
            assert_eq!(run.seed, 40 + i as u64);
            assert_eq!(*run, simulate(st(51, 20), &r, &cfg, 40 + i as u64).unwrap());
        }
    }

    #[test]
    fn urn_draw_bounds() {
        let mut rng = rng_from_seed(0);
        for k in [0usize, 1, 5, 20, 21] {
            let s = st(21, k);
            for _ in 0..200 {
                let drawn = draw_group_composition(&s, 7, &mut rng);
                assert!(drawn <= 7 && drawn <= k && 7 - drawn <= 21 - k);
            }
        }
    }
}
