//! Asynchronous learning dynamics on the regret game.
//!
//! Each step one uniformly drawn player revises. Replication `r` of a run
//! seeded with `seed` draws from ChaCha8 stream `r` of that seed, so results
//! do not depend on how replications are scheduled across threads.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{Action, ActionProfile, GameError, RegretGame};
use crate::scalar::Scalar;

/// Fewest replications accepted by [`long_run_shares`].
pub const MIN_SHARE_REPLICATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("invalid dynamics configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum RevisionRule {
    /// Best response, except that with probability `inertia` the reviser keeps its action.
    BestResponse { inertia: f64 },
    /// Risky with probability `1 / (1 + exp(-beta * (EU_risky - EU_safe)))`.
    Logit { beta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsConfig {
    #[serde(flatten)]
    pub rule: RevisionRule,
    pub steps: usize,
    pub seed: u64,
    #[serde(default = "one")]
    pub replications: usize,
}

fn one() -> usize {
    1
}

impl DynamicsConfig {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        match self.rule {
            RevisionRule::BestResponse { inertia } if !(0.0..1.0).contains(&inertia) => {
                return Err(DynamicsError::InvalidConfig(format!("inertia {inertia} must lie in [0, 1)")));
            }
            RevisionRule::Logit { beta } if !(beta >= 0.0 && beta.is_finite()) => {
                return Err(DynamicsError::InvalidConfig(format!("beta {beta} must be finite and >= 0")));
            }
            _ => {}
        }
        if self.replications == 0 {
            return Err(DynamicsError::InvalidConfig("replications must be at least 1".into()));
        }
        Ok(())
    }

    /// The random stream owned by one replication.
    pub fn rng(&self, replication: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(replication as u64);
        rng
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub initial: ActionProfile,
    /// Risky count after each step, starting with the initial profile.
    pub risky_counts: Vec<usize>,
    /// First step at which no reviser would move (best-response rule only).
    pub absorbed_at: Option<usize>,
    pub terminal: ActionProfile,
}

/// Numerically stable logistic function.
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Probability that a logit reviser picks Risky.
pub fn logit_risky_probability<S: Scalar>(
    game: &RegretGame<S>,
    profile: &ActionProfile,
    i: usize,
    beta: f64,
) -> Result<f64, GameError> {
    let risky = game.expected_player_utility(&profile.with(i, Action::Risky), i)?;
    let safe = game.expected_player_utility(&profile.with(i, Action::Safe), i)?;
    Ok(sigmoid(beta * (risky - safe).as_f64()))
}

/// One revision. Always consumes exactly one player draw and one uniform draw.
pub fn step_dynamics<S: Scalar, R: Rng>(
    game: &RegretGame<S>,
    profile: &ActionProfile,
    rule: &RevisionRule,
    rng: &mut R,
) -> Result<ActionProfile, DynamicsError> {
    let i = rng.gen_range(0..game.n());
    let draw: f64 = rng.gen();
    let action = match *rule {
        RevisionRule::BestResponse { inertia } => {
            if draw < inertia {
                profile.actions[i]
            } else {
                game.best_response(profile, i)?
            }
        }
        RevisionRule::Logit { beta } => {
            if draw < logit_risky_probability(game, profile, i, beta)? {
                Action::Risky
            } else {
                Action::Safe
            }
        }
    };
    Ok(profile.with(i, action))
}

/// True when every player's best response is its current action.
pub fn is_best_response_fixed_point<S: Scalar>(game: &RegretGame<S>, profile: &ActionProfile) -> Result<bool, GameError> {
    for i in 0..game.n() {
        if game.best_response(profile, i)? != profile.actions[i] {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Runs up to `config.steps` revisions on `rng`, stopping early under best
/// response once the profile is absorbing.
pub fn run_trajectory_with<S: Scalar, R: Rng>(
    game: &RegretGame<S>,
    initial: &ActionProfile,
    config: &DynamicsConfig,
    rng: &mut R,
) -> Result<Trajectory, DynamicsError> {
    config.validate()?;
    if initial.len() != game.n() {
        return Err(GameError::ProfileLength { len: initial.len(), n: game.n() }.into());
    }
    let best_response = matches!(config.rule, RevisionRule::BestResponse { .. });
    let mut profile = initial.clone();
    let mut risky_counts = vec![profile.risky_count()];
    let mut absorbed_at = None;
    if best_response && is_best_response_fixed_point(game, &profile)? {
        absorbed_at = Some(0);
    }
    let mut t = 0;
    while absorbed_at.is_none() && t < config.steps {
        t += 1;
        profile = step_dynamics(game, &profile, &config.rule, rng)?;
        risky_counts.push(profile.risky_count());
        if best_response && is_best_response_fixed_point(game, &profile)? {
            absorbed_at = Some(t);
        }
    }
    Ok(Trajectory { initial: initial.clone(), risky_counts, absorbed_at, terminal: profile })
}

/// Trajectory of replication 0 from a given start.
pub fn run_trajectory<S: Scalar>(
    game: &RegretGame<S>,
    initial: &ActionProfile,
    config: &DynamicsConfig,
) -> Result<Trajectory, DynamicsError> {
    run_trajectory_with(game, initial, config, &mut config.rng(0))
}

/// Every replication from an independent uniformly random start.
pub fn run_replications<S: Scalar>(game: &RegretGame<S>, config: &DynamicsConfig) -> Result<Vec<Trajectory>, DynamicsError> {
    config.validate()?;
    (0..config.replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = config.rng(r);
            let initial = ActionProfile::new(
                (0..game.n()).map(|_| if rng.gen_bool(0.5) { Action::Risky } else { Action::Safe }).collect(),
            );
            run_trajectory_with(game, &initial, config, &mut rng)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShareReport {
    pub replications: usize,
    pub all_safe: f64,
    pub all_risky: f64,
    pub other: f64,
    pub se_all_safe: f64,
    pub se_all_risky: f64,
    pub se_other: f64,
    /// Terminal risky-count frequencies, indexed by count.
    pub risky_count_histogram: Vec<usize>,
}

fn share_and_se(count: usize, total: usize) -> (f64, f64) {
    let share = count as f64 / total as f64;
    (share, (share * (1.0 - share) / total as f64).sqrt())
}

/// Terminal-profile shares of logit dynamics across replications.
pub fn long_run_shares<S: Scalar>(game: &RegretGame<S>, config: &DynamicsConfig) -> Result<ShareReport, DynamicsError> {
    if !matches!(config.rule, RevisionRule::Logit { .. }) {
        return Err(DynamicsError::InvalidConfig("long-run shares need the logit rule".into()));
    }
    if config.replications < MIN_SHARE_REPLICATIONS {
        return Err(DynamicsError::InvalidConfig(format!(
            "need at least {MIN_SHARE_REPLICATIONS} replications, got {}",
            config.replications
        )));
    }
    let n = game.n();
    let runs = run_replications(game, config)?;
    let mut histogram = vec![0usize; n + 1];
    for run in &runs {
        histogram[run.terminal.risky_count()] += 1;
    }
    let total = runs.len();
    let (all_safe, se_all_safe) = share_and_se(histogram[0], total);
    let (all_risky, se_all_risky) = share_and_se(histogram[n], total);
    let (other, se_other) = share_and_se(total - histogram[0] - histogram[n], total);
    Ok(ShareReport {
        replications: total,
        all_safe,
        all_risky,
        other,
        se_all_safe,
        se_all_risky,
        se_other,
        risky_count_histogram: histogram,
    })
}
