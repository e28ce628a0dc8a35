//! Macroscopic drift of `z`: analytic prediction, Monte Carlo estimate and
//! fixed-point analysis.
//!
//! The analytic drift at state `K` is the expected change of `z` per unit
//! time,
//!
//! ```text
//! dz/dt = Σ_k w_k P(X = k) - ε z
//! ```
//!
//! where `P(X = k)` is the hypergeometric probability of drawing `k` X1
//! agents in a group and `w_k ∈ {-1, 0, +1}` is the signed weight of the
//! rule for that composition. Continuous `z` is mapped to the nearest
//! lattice state, so the drift is piecewise constant in `z`.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::hypergeom::{pmf_table, HypergeomError, PmfTable};
use crate::model::{ModelError, NoiseSpec, RuleSet, SwarmState};
use crate::ssa::{self, derive_seed, noise_rate_for, rng_from_seed, SimConfig, SsaError};

/// Default number of grid points for root bracketing.
pub const DEFAULT_GRID_POINTS: usize = 2001;
/// Bisection stops once the bracket is narrower than this.
pub const BISECTION_TOLERANCE: f64 = 1e-9;
/// A refined bracket whose secant slope is below this is marginal.
pub const MARGINAL_SLOPE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DriftError {
    #[error("rule sets {a} and {b} are not complements of each other")]
    ComplementMismatch { a: String, b: String },
    #[error("grid needs at least 3 points, got {0}")]
    GridTooSmall(usize),
    #[error("samples per state must be at least 1")]
    NoSamples,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Hypergeom(#[from] HypergeomError),
    #[error(transparent)]
    Ssa(#[from] SsaError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DriftSource {
    Analytic,
    Empirical,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveMeta {
    pub n_agents: usize,
    pub group_size: usize,
    pub rules: String,
    pub epsilon: f64,
    pub source: DriftSource,
    pub samples_per_point: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftCurve {
    pub meta: CurveMeta,
    /// `(z, dz/dt)` pairs with strictly increasing `z`.
    pub points: Vec<(f64, f64)>,
    /// Standard error of each empirical point.
    pub std_errors: Option<Vec<f64>>,
}

impl DriftCurve {
    pub fn zs(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.0)
    }

    pub fn drifts(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.1)
    }
}

/// `Σ_k w_k P(X = k)` at a lattice state, summed in ascending `k`.
pub fn rule_sum(state: &SwarmState, rules: &RuleSet) -> Result<f64, DriftError> {
    let table = pmf_table(state.n_agents(), state.count_x1(), rules.group_size())?;
    Ok(weighted_sum(&table, rules))
}

fn weighted_sum(table: &PmfTable, rules: &RuleSet) -> f64 {
    table
        .probabilities()
        .iter()
        .enumerate()
        .fold(0.0, |acc, (k, p)| acc + f64::from(rules.weight(k)) * p)
}

/// Drift contribution of noise alone, `-ε z`.
pub fn pure_noise_drift(noise: NoiseSpec, z: f64) -> f64 {
    -noise.epsilon() * z
}

fn drift_at_state(
    state: &SwarmState,
    rules: &RuleSet,
    noise: NoiseSpec,
) -> Result<f64, DriftError> {
    Ok(rule_sum(state, rules)? + pure_noise_drift(noise, state.z()))
}

/// Analytic drift at `z`, with the rule term evaluated at the lattice state
/// nearest to `z` and the noise term at `z` itself.
pub fn analytic_drift(
    n_agents: usize,
    rules: &RuleSet,
    noise: NoiseSpec,
    z: f64,
) -> Result<f64, DriftError> {
    rules.check_population(n_agents)?;
    let state = SwarmState::from_z(n_agents, z)?;
    Ok(rule_sum(&state, rules)? + pure_noise_drift(noise, z))
}

fn meta(
    n_agents: usize,
    rules: &RuleSet,
    noise: NoiseSpec,
    source: DriftSource,
    samples: Option<u64>,
) -> CurveMeta {
    CurveMeta {
        n_agents,
        group_size: rules.group_size(),
        rules: rules.label(),
        epsilon: noise.epsilon(),
        source,
        samples_per_point: samples,
    }
}

/// Uniform grid of `points` values over `[-1, 1]`, endpoints exact.
pub fn z_grid(points: usize) -> Vec<f64> {
    let last = (points - 1) as f64;
    (0..points).map(|i| -1.0 + 2.0 * i as f64 / last).collect()
}

pub fn analytic_curve(
    n_agents: usize,
    rules: &RuleSet,
    noise: NoiseSpec,
    grid_points: usize,
) -> Result<DriftCurve, DriftError> {
    if grid_points < 2 {
        return Err(DriftError::GridTooSmall(grid_points));
    }
    let points = z_grid(grid_points)
        .into_iter()
        .map(|z| analytic_drift(n_agents, rules, noise, z).map(|d| (z, d)))
        .collect::<Result<_, _>>()?;
    Ok(DriftCurve {
        meta: meta(n_agents, rules, noise, DriftSource::Analytic, None),
        points,
        std_errors: None,
    })
}

/// Analytic drift at every lattice point `z_K = 2K/N - 1`, `K = 0..=N`.
pub fn analytic_lattice_curve(
    n_agents: usize,
    rules: &RuleSet,
    noise: NoiseSpec,
) -> Result<DriftCurve, DriftError> {
    rules.check_population(n_agents)?;
    let points = (0..=n_agents)
        .map(|k| {
            let state = SwarmState::new(n_agents, k)?;
            drift_at_state(&state, rules, noise).map(|d| (state.z(), d))
        })
        .collect::<Result<_, DriftError>>()?;
    Ok(DriftCurve {
        meta: meta(n_agents, rules, noise, DriftSource::Analytic, None),
        points,
        std_errors: None,
    })
}

/// Monte Carlo drift estimate on the `K` lattice.
///
/// For each `K` the state is reset before every one of `samples_per_state`
/// single Gillespie events; the mean change of `K` times the total
/// propensity gives the drift per unit time. The noise rate of `config` is
/// replaced by the rate realizing `noise`. Each `K` uses its own RNG stream
/// derived from `(seed, K)`, so the result does not depend on scheduling.
pub fn empirical_drift(
    n_agents: usize,
    rules: &RuleSet,
    noise: NoiseSpec,
    config: &SimConfig,
    samples_per_state: u64,
    seed: u64,
) -> Result<DriftCurve, DriftError> {
    if samples_per_state == 0 {
        return Err(DriftError::NoSamples);
    }
    rules.check_population(n_agents)?;
    let config = SimConfig {
        noise_rate: noise_rate_for(noise.epsilon()),
        ..config.clone()
    };
    // Every state has total propensity (r + c) N, so dz/dt per event is
    // 2 (r + c) times the mean change of K. Forming (r + c) N / N would
    // round needlessly.
    let scale = 2.0 * (config.rule_rate + config.noise_rate);
    let estimates = (0..=n_agents)
        .into_par_iter()
        .map(|k| -> Result<(f64, f64, f64), DriftError> {
            let state = SwarmState::new(n_agents, k)?;
            let total = ssa::propensities(&state, &config).total();
            if total <= 0.0 {
                return Ok((state.z(), 0.0, 0.0));
            }
            let mut rng = rng_from_seed(derive_seed(seed, k as u64));
            let (mut sum, mut sum_sq) = (0i64, 0i64);
            for _ in 0..samples_per_state {
                let out = ssa::step(&state, rules, &config, &mut rng)?;
                let dk = out.state.count_x1() as i64 - k as i64;
                sum += dk;
                sum_sq += dk * dk;
            }
            let m = samples_per_state as f64;
            let mean = sum as f64 / m;
            let var = if samples_per_state > 1 {
                ((sum_sq as f64 - m * mean * mean) / (m - 1.0)).max(0.0)
            } else {
                0.0
            };
            debug_assert!((total / n_agents as f64 * 2.0 - scale).abs() <= 1e-12 * scale);
            Ok((state.z(), mean * scale, (var / m).sqrt() * scale))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DriftCurve {
        meta: meta(
            n_agents,
            rules,
            noise,
            DriftSource::Empirical,
            Some(samples_per_state),
        ),
        points: estimates.iter().map(|&(z, d, _)| (z, d)).collect(),
        std_errors: Some(estimates.iter().map(|e| e.2).collect()),
    })
}

/// Analytic firing probabilities; identical to the hypergeometric table.
pub fn rule_firing_probabilities(
    n_agents: usize,
    group_size: usize,
    count_x1: usize,
) -> Result<PmfTable, DriftError> {
    Ok(pmf_table(n_agents, count_x1, group_size)?)
}

/// Relative frequency of each composition `k = 0..=G` over `draws` group
/// draws at a fixed state.
pub fn empirical_firing_frequencies(
    n_agents: usize,
    group_size: usize,
    count_x1: usize,
    draws: u64,
    seed: u64,
) -> Result<Vec<f64>, DriftError> {
    if draws == 0 {
        return Err(DriftError::NoSamples);
    }
    let state = SwarmState::new(n_agents, count_x1)?;
    if group_size > n_agents {
        return Err(ModelError::GroupLargerThanPopulation {
            group_size,
            n_agents,
        }
        .into());
    }
    let mut rng = rng_from_seed(seed);
    let mut counts = vec![0u64; group_size + 1];
    for _ in 0..draws {
        counts[ssa::draw_group_composition(&state, group_size, &mut rng)] += 1;
    }
    Ok(counts.iter().map(|&c| c as f64 / draws as f64).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Unstable,
    Marginal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixedPoint {
    #[serde(rename = "z")]
    pub z_star: f64,
    pub stability: Stability,
    pub bracket: (f64, f64),
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

fn crossing_stability(left: i8, right: i8) -> Stability {
    if left > 0 && right < 0 {
        Stability::Stable
    } else {
        Stability::Unstable
    }
}

/// Bisects `[lo, hi]` where `f(lo)` has sign `left_sign` and `f(hi)` the
/// opposite one. Returns the refined bracket; stops early on an exact zero.
fn bisect(
    f: &impl Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    left_sign: i8,
) -> (f64, f64, Option<f64>) {
    while hi - lo >= BISECTION_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match sign(f(mid)) {
            0 => return (lo, hi, Some(mid)),
            s if s == left_sign => lo = mid,
            _ => hi = mid,
        }
    }
    (lo, hi, None)
}

/// Locates the zeros of the analytic drift.
///
/// Every sign change on a uniform grid is bracketed and refined by
/// bisection. The boundaries `z = ±1` are reported whenever the drift
/// vanishes there, classified by the sign of the drift just inside.
pub fn find_fixed_points(
    n_agents: usize,
    rules: &RuleSet,
    noise: NoiseSpec,
    grid_points: usize,
) -> Result<Vec<FixedPoint>, DriftError> {
    if grid_points < 3 {
        return Err(DriftError::GridTooSmall(grid_points));
    }
    rules.check_population(n_agents)?;
    // all inputs validated; evaluation on [-1, 1] cannot fail
    let f = |z: f64| analytic_drift(n_agents, rules, noise, z).expect("validated drift input");
    let zs = z_grid(grid_points);
    let signs: Vec<i8> = zs.iter().map(|&z| sign(f(z))).collect();
    let nonzero: Vec<usize> = (0..zs.len()).filter(|&i| signs[i] != 0).collect();

    let mut found = Vec::new();
    let (Some(&first), Some(&last)) = (nonzero.first(), nonzero.last()) else {
        let flat = |z: f64| FixedPoint {
            z_star: z,
            stability: Stability::Marginal,
            bracket: (-1.0, 1.0),
        };
        return Ok(vec![flat(-1.0), flat(1.0)]);
    };

    if signs[0] == 0 {
        found.push(FixedPoint {
            z_star: -1.0,
            stability: if signs[first] > 0 {
                Stability::Unstable
            } else {
                Stability::Stable
            },
            bracket: (-1.0, zs[first - 1]),
        });
    }

    for pair in nonzero.windows(2) {
        let (i, j) = (pair[0], pair[1]);
        let (left, right) = (signs[i], signs[j]);
        if j == i + 1 {
            if left == right {
                continue;
            }
            let (lo, hi, exact) = bisect(&f, zs[i], zs[j], left);
            let slope = (f(hi) - f(lo)) / (hi - lo);
            let stability = if slope.abs() < MARGINAL_SLOPE {
                Stability::Marginal
            } else {
                crossing_stability(left, right)
            };
            found.push(FixedPoint {
                z_star: exact.unwrap_or(0.5 * (lo + hi)),
                stability,
                bracket: (lo, hi),
            });
        } else {
            // a run of exact zeros between two nonzero grid values
            let stability = if left == right {
                Stability::Marginal
            } else {
                crossing_stability(left, right)
            };
            found.push(FixedPoint {
                z_star: 0.5 * (zs[i + 1] + zs[j - 1]),
                stability,
                bracket: (zs[i], zs[j]),
            });
        }
    }

    if signs[zs.len() - 1] == 0 {
        found.push(FixedPoint {
            z_star: 1.0,
            stability: if signs[last] > 0 {
                Stability::Stable
            } else {
                Stability::Unstable
            },
            bracket: (zs[last + 1], 1.0),
        });
    }
    Ok(found)
}

/// Distance in units in the last place between two finite doubles.
pub fn ulp_distance(a: f64, b: f64) -> u64 {
    fn ordered(x: f64) -> i64 {
        let bits = x.to_bits() as i64;
        if bits < 0 {
            i64::MIN - bits
        } else {
            bits
        }
    }
    ordered(a).abs_diff(ordered(b))
}

/// Whether the noiseless drift of `rules_b` is the pointwise negation of
/// that of `rules_a` (within one ulp) on the `K` lattice and on the default
/// grid. `rules_b` must be the polarity complement of `rules_a`.
pub fn negate_check(
    rules_a: &RuleSet,
    rules_b: &RuleSet,
    n_agents: usize,
) -> Result<bool, DriftError> {
    if !rules_a.is_complement_of(rules_b) {
        return Err(DriftError::ComplementMismatch {
            a: rules_a.label(),
            b: rules_b.label(),
        });
    }
    let quiet = NoiseSpec::none();
    let a = analytic_lattice_curve(n_agents, rules_a, quiet)?;
    let b = analytic_lattice_curve(n_agents, rules_b, quiet)?;
    let lattice_ok = a
        .drifts()
        .zip(b.drifts())
        .all(|(x, y)| ulp_distance(x, -y) <= 1);
    let a = analytic_curve(n_agents, rules_a, quiet, DEFAULT_GRID_POINTS)?;
    let b = analytic_curve(n_agents, rules_b, quiet, DEFAULT_GRID_POINTS)?;
    let grid_ok = a
        .drifts()
        .zip(b.drifts())
        .all(|(x, y)| ulp_distance(x, -y) <= 1);
    Ok(lattice_ok && grid_ok)
}
