//! The N-player regret game.
//!
//! Every player chooses between a sure outcome (utility 1) and a common risky
//! lottery paying `u_high` with probability `p` and 0 otherwise. Risky players
//! always learn the outcome. A safe player learns it with probability
//! `q(k)`, where `k` is the number of *other* players who went risky.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::scalar::Scalar;

/// Exhaustive enumeration handles at most this many players.
pub const MAX_BRUTE_FORCE_PLAYERS: usize = 20;
/// Cap on the number of equilibrium profiles the structural path will list.
pub const MAX_STRUCTURAL_PROFILES: u128 = 1 << 20;

/// Slope of the ramp laid under a step learning function.
pub fn step_ramp<S: Scalar>() -> S {
    S::ratio(1, 1_000_000)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GameError {
    #[error("invalid game: {0}")]
    InvalidGame(String),
    #[error("invalid learning function: {0}")]
    InvalidQ(String),
    #[error("player {index} out of range for {n} players")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("profile has {len} actions, game has {n} players")]
    ProfileLength { len: usize, n: usize },
    #[error("{0}")]
    TooLarge(String),
    #[error("players have different regret coefficients")]
    HeterogeneousKappas,
    #[error("no interior mixed equilibrium: {0}")]
    NoInteriorSolution(String),
    #[error("{0}")]
    Degenerate(String),
    #[error("bad partition of players: {0}")]
    BadPartitionOfPlayers(String),
    #[error("invalid type distribution: {0}")]
    InvalidDistribution(String),
}

/// Probability that a safe player learns the lottery outcome, as a function of
/// how many others chose it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum QFunction<S> {
    /// `k / (N-1)`.
    Linear,
    /// `(k / (N-1))^exponent`.
    Power { exponent: S },
    /// Jumps from near 0 to near 1 once `k >= threshold`, on a slope-`1e-6` ramp.
    Step { threshold: usize },
    /// Explicit values for `k = 0..N-1`.
    Table { values: Vec<S> },
}

impl<S: Scalar> QFunction<S> {
    pub fn validate(&self, n: usize) -> Result<(), GameError> {
        let others = n.saturating_sub(1);
        match self {
            QFunction::Linear => {}
            QFunction::Power { exponent } => {
                if *exponent <= S::zero() {
                    return Err(GameError::InvalidQ(format!("exponent {exponent} must be positive")));
                }
            }
            QFunction::Step { threshold } => {
                if *threshold == 0 || *threshold > others {
                    return Err(GameError::InvalidQ(format!(
                        "step threshold {threshold} must lie in 1..={others}"
                    )));
                }
            }
            QFunction::Table { values } => {
                if values.len() != n {
                    return Err(GameError::InvalidQ(format!(
                        "table has {} values, expected {n}",
                        values.len()
                    )));
                }
                if !values[0].is_zero() || !values[others].is_one() {
                    return Err(GameError::InvalidQ("table must start at 0 and end at 1".into()));
                }
                if values.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(GameError::InvalidQ("table must be strictly increasing".into()));
                }
            }
        }
        Ok(())
    }

    /// `q(k)` in an `n`-player game. Assumes `k < n` and a validated function.
    pub fn value(&self, k: usize, n: usize) -> S {
        let others = (n - 1) as i64;
        let k = k as i64;
        match self {
            QFunction::Linear => S::ratio(k, others),
            QFunction::Power { exponent } => {
                if k == 0 {
                    S::zero()
                } else if k == others {
                    S::one()
                } else {
                    S::lit((k as f64 / others as f64).powf(exponent.as_f64()))
                }
            }
            QFunction::Step { threshold } => {
                let eps = step_ramp::<S>();
                if k < *threshold as i64 {
                    eps * S::ratio(k, others)
                } else {
                    S::one() - eps * S::ratio(others - k, others)
                }
            }
            QFunction::Table { values } => values[k as usize],
        }
    }

    pub fn values(&self, n: usize) -> Vec<S> {
        (0..n).map(|k| self.value(k, n)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Safe,
    Risky,
}

impl Action {
    pub fn is_risky(self) -> bool {
        self == Action::Risky
    }

    pub fn flipped(self) -> Action {
        match self {
            Action::Safe => Action::Risky,
            Action::Risky => Action::Safe,
        }
    }
}

/// One action per player. Displayed and serialized as a string such as `"SRRS"`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActionProfile {
    pub actions: Vec<Action>,
}

impl ActionProfile {
    pub fn new(actions: Vec<Action>) -> Self {
        ActionProfile { actions }
    }

    pub fn uniform(n: usize, action: Action) -> Self {
        ActionProfile { actions: vec![action; n] }
    }

    /// Player `i` is risky iff bit `i` of `mask` is set.
    pub fn from_mask(n: usize, mask: u64) -> Self {
        ActionProfile {
            actions: (0..n)
                .map(|i| if mask >> i & 1 == 1 { Action::Risky } else { Action::Safe })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn risky_count(&self) -> usize {
        self.actions.iter().filter(|a| a.is_risky()).count()
    }

    pub fn is_all(&self, action: Action) -> bool {
        self.actions.iter().all(|a| *a == action)
    }

    pub fn with(&self, i: usize, action: Action) -> Self {
        let mut next = self.clone();
        next.actions[i] = action;
        next
    }
}

impl fmt::Display for ActionProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in &self.actions {
            f.write_str(if a.is_risky() { "R" } else { "S" })?;
        }
        Ok(())
    }
}

impl FromStr for ActionProfile {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(|c| match c {
                'S' | 's' => Ok(Action::Safe),
                'R' | 'r' => Ok(Action::Risky),
                other => Err(format!("unexpected action '{other}' (use S or R)")),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(ActionProfile::new)
    }
}

impl Serialize for ActionProfile {
    fn serialize<Ser: Serializer>(&self, serializer: Ser) -> Result<Ser::Ok, Ser::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ActionProfile {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    DominantSafe,
    DominantRisky,
    Coordination,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParetoOrder {
    AllSafeDominates,
    AllRiskyDominates,
    Equal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "S: Scalar + Deserialize<'de>"))]
pub struct RegretGame<S> {
    pub p: S,
    pub u_high: S,
    /// One regret coefficient per player; the player count is its length.
    pub kappas: Vec<S>,
    pub q: QFunction<S>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MixedEquilibrium<S> {
    /// Probability each player goes risky.
    pub sigma: S,
    /// `|EU(safe) - EU(risky)|` at `sigma`.
    pub residual: S,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalQ<S> {
    pub raw: S,
    pub clamped: S,
    pub regime: Regime,
    /// True when the value equals 1/2.
    pub at_one_half: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeterogeneousReport<S> {
    /// Number of regret-averse players.
    pub m: usize,
    pub kappa: S,
    pub q_star: S,
    /// Averse players safe, neutral players risky.
    pub a_star: ActionProfile,
    pub a_star_is_nash: bool,
    /// `q(N - m) <= q*`.
    pub criterion_holds: bool,
    pub all_risky_is_nash: bool,
    /// Smallest number of averse players for which `a_star` is an equilibrium.
    pub minimal_m: usize,
}

impl<S: Scalar> RegretGame<S> {
    pub fn new(p: S, u_high: S, kappas: Vec<S>, q: QFunction<S>) -> Result<Self, GameError> {
        let game = RegretGame { p, u_high, kappas, q };
        game.validate()?;
        Ok(game)
    }

    pub fn symmetric(n: usize, p: S, u_high: S, kappa: S, q: QFunction<S>) -> Result<Self, GameError> {
        Self::new(p, u_high, vec![kappa; n], q)
    }

    pub fn validate(&self) -> Result<(), GameError> {
        if self.kappas.len() < 2 {
            return Err(GameError::InvalidGame(format!("need at least 2 players, got {}", self.kappas.len())));
        }
        if !self.p.is_open_unit() {
            return Err(GameError::InvalidGame(format!("p = {} must lie in (0, 1)", self.p)));
        }
        if self.u_high <= S::one() {
            return Err(GameError::InvalidGame(format!("u_high = {} must exceed 1", self.u_high)));
        }
        if let Some(k) = self.kappas.iter().find(|k| **k < S::zero()) {
            return Err(GameError::InvalidGame(format!("regret coefficient {k} is negative")));
        }
        self.q.validate(self.n())
    }

    pub fn n(&self) -> usize {
        self.kappas.len()
    }

    pub fn q_at(&self, risky_others: usize) -> S {
        self.q.value(risky_others, self.n())
    }

    /// Safe player's expected utility when `risky_others` others are risky.
    pub fn eu_safe(&self, i: usize, risky_others: usize) -> S {
        self.eu_safe_at(self.kappas[i], self.q_at(risky_others))
    }

    /// Safe expected utility for coefficient `kappa` and learning probability `q`.
    pub fn eu_safe_at(&self, kappa: S, q: S) -> S {
        S::one() - self.p * q * kappa * (self.u_high - S::one())
    }

    pub fn eu_risky(&self, i: usize) -> S {
        self.eu_risky_at(self.kappas[i])
    }

    pub fn eu_risky_at(&self, kappa: S) -> S {
        self.p * self.u_high - (S::one() - self.p) * kappa
    }

    fn check(&self, profile: &ActionProfile, i: usize) -> Result<(), GameError> {
        if profile.len() != self.n() {
            return Err(GameError::ProfileLength { len: profile.len(), n: self.n() });
        }
        if i >= self.n() {
            return Err(GameError::IndexOutOfRange { index: i, n: self.n() });
        }
        Ok(())
    }

    fn risky_others(profile: &ActionProfile, i: usize) -> usize {
        profile.risky_count() - usize::from(profile.actions[i].is_risky())
    }

    pub fn expected_player_utility(&self, profile: &ActionProfile, i: usize) -> Result<S, GameError> {
        self.check(profile, i)?;
        Ok(match profile.actions[i] {
            Action::Safe => self.eu_safe(i, Self::risky_others(profile, i)),
            Action::Risky => self.eu_risky(i),
        })
    }

    /// Utility-maximizing action against the others' actions; ties go to Risky.
    pub fn best_response(&self, profile: &ActionProfile, i: usize) -> Result<Action, GameError> {
        self.check(profile, i)?;
        let k = Self::risky_others(profile, i);
        Ok(if self.eu_risky(i).approx_ge(self.eu_safe(i, k)) { Action::Risky } else { Action::Safe })
    }

    /// No player has a deviation that is strictly profitable beyond tolerance.
    pub fn is_nash(&self, profile: &ActionProfile) -> Result<bool, GameError> {
        if profile.len() != self.n() {
            return Err(GameError::ProfileLength { len: profile.len(), n: self.n() });
        }
        let total = profile.risky_count();
        Ok((0..self.n()).all(|i| self.no_profitable_deviation(i, profile.actions[i], total)))
    }

    fn no_profitable_deviation(&self, i: usize, action: Action, total_risky: usize) -> bool {
        match action {
            Action::Safe => !self.eu_risky(i).definitely_gt(self.eu_safe(i, total_risky)),
            Action::Risky => !self.eu_safe(i, total_risky - 1).definitely_gt(self.eu_risky(i)),
        }
    }

    /// All pure equilibria in sorted order: exhaustive search up to
    /// [`MAX_BRUTE_FORCE_PLAYERS`], the structural path above.
    pub fn enumerate_pure_nash(&self) -> Result<Vec<ActionProfile>, GameError> {
        if self.n() <= MAX_BRUTE_FORCE_PLAYERS {
            self.enumerate_pure_nash_brute()
        } else {
            self.enumerate_pure_nash_structural()
        }
    }

    pub fn enumerate_pure_nash_brute(&self) -> Result<Vec<ActionProfile>, GameError> {
        let n = self.n();
        if n > MAX_BRUTE_FORCE_PLAYERS {
            return Err(GameError::TooLarge(format!(
                "exhaustive search is limited to {MAX_BRUTE_FORCE_PLAYERS} players"
            )));
        }
        // safe_ok[i][k]: safe is a best reply for i with k risky others
        let safe_ok: Vec<Vec<bool>> = (0..n)
            .map(|i| (0..n).map(|k| self.no_profitable_deviation(i, Action::Safe, k)).collect())
            .collect();
        let risky_ok: Vec<Vec<bool>> = (0..n)
            .map(|i| (0..=n).map(|t| t >= 1 && self.no_profitable_deviation(i, Action::Risky, t)).collect())
            .collect();
        let mut found: Vec<ActionProfile> = (0u64..1 << n)
            .into_par_iter()
            .filter(|&mask| {
                let total = mask.count_ones() as usize;
                (0..n).all(|i| if mask >> i & 1 == 1 { risky_ok[i][total] } else { safe_ok[i][total] })
            })
            .map(|mask| ActionProfile::from_mask(n, mask))
            .collect();
        found.sort();
        Ok(found)
    }

    /// Payoffs depend on the profile only through the risky count, so for each
    /// count `r` players split into forced-safe, forced-risky and free ones.
    pub fn enumerate_pure_nash_structural(&self) -> Result<Vec<ActionProfile>, GameError> {
        let n = self.n();
        let mut found = Vec::new();
        let mut listed: u128 = 0;
        for r in 0..=n {
            let mut forced_risky = Vec::new();
            let mut free = Vec::new();
            let mut feasible = true;
            for i in 0..n {
                let s_ok = r < n && self.no_profitable_deviation(i, Action::Safe, r);
                let r_ok = r >= 1 && self.no_profitable_deviation(i, Action::Risky, r);
                match (s_ok, r_ok) {
                    (true, true) => free.push(i),
                    (false, true) => forced_risky.push(i),
                    (true, false) => {}
                    (false, false) => {
                        feasible = false;
                        break;
                    }
                }
            }
            if !feasible || forced_risky.len() > r || forced_risky.len() + free.len() < r {
                continue;
            }
            let pick = r - forced_risky.len();
            let count = binomial_u128(free.len(), pick);
            listed = listed.saturating_add(count);
            if listed > MAX_STRUCTURAL_PROFILES {
                return Err(GameError::TooLarge(format!(
                    "more than {MAX_STRUCTURAL_PROFILES} equilibrium profiles"
                )));
            }
            for_each_combination(free.len(), pick, |chosen| {
                let mut actions = vec![Action::Safe; n];
                for &i in &forced_risky {
                    actions[i] = Action::Risky;
                }
                for &c in chosen {
                    actions[free[c]] = Action::Risky;
                }
                found.push(ActionProfile::new(actions));
            });
        }
        found.sort();
        Ok(found)
    }

    pub fn common_kappa(&self) -> Result<S, GameError> {
        let k = self.kappas[0];
        if self.kappas.iter().all(|x| *x == k) {
            Ok(k)
        } else {
            Err(GameError::HeterogeneousKappas)
        }
    }

    /// Below this `u_high` the safe lottery is dominant.
    pub fn lower_threshold(&self) -> S {
        S::one() / self.p
    }

    /// Above this `u_high` the risky lottery is dominant for coefficient `kappa`.
    pub fn upper_threshold(&self, kappa: S) -> S {
        (S::one() + kappa * (S::one() - self.p)) / self.p
    }

    pub fn classify_regime(&self) -> Result<Regime, GameError> {
        let kappa = self.common_kappa()?;
        Ok(if self.lower_threshold().definitely_gt(self.u_high) {
            Regime::DominantSafe
        } else if self.u_high.definitely_gt(self.upper_threshold(kappa)) {
            Regime::DominantRisky
        } else {
            Regime::Coordination
        })
    }

    /// Regret coefficient below which risky is dominant.
    pub fn dominance_bound(&self) -> S {
        (self.p * self.u_high - S::one()) / (S::one() - self.p)
    }

    pub fn risky_dominant(&self, i: usize) -> bool {
        self.kappas[i] < self.dominance_bound()
    }

    /// Learning probability equating safe and risky expected utility.
    pub fn critical_q_raw(&self, kappa: S) -> Result<S, GameError> {
        if kappa.is_zero() {
            return Err(GameError::Degenerate("without regret the learning probability is irrelevant".into()));
        }
        let one = S::one();
        Ok((one + (one - self.p) * kappa - self.p * self.u_high) / (self.p * kappa * (self.u_high - one)))
    }

    pub fn critical_q(&self) -> Result<CriticalQ<S>, GameError> {
        let kappa = self.common_kappa()?;
        let raw = self.critical_q_raw(kappa)?;
        let clamped = raw.max_of(S::zero()).min_of(S::one());
        Ok(CriticalQ { raw, clamped, regime: self.classify_regime()?, at_one_half: raw.approx_eq(S::ratio(1, 2)) })
    }

    /// Symmetric mixed equilibrium of the two-player game.
    pub fn mixed_symmetric_equilibrium(&self) -> Result<MixedEquilibrium<S>, GameError> {
        if self.n() != 2 {
            return Err(GameError::NoInteriorSolution(format!("defined for 2 players, game has {}", self.n())));
        }
        let kappa = self.common_kappa()?;
        if self.classify_regime()? != Regime::Coordination {
            return Err(GameError::NoInteriorSolution("game is not in the coordination regime".into()));
        }
        let sigma = self.critical_q_raw(kappa).map_err(|e| GameError::NoInteriorSolution(e.to_string()))?;
        let safe = (S::one() - sigma) * self.eu_safe(0, 0) + sigma * self.eu_safe(0, 1);
        let residual = (safe - self.eu_risky(0)).abs();
        Ok(MixedEquilibrium { sigma, residual })
    }

    pub fn pareto_compare(&self) -> Result<ParetoOrder, GameError> {
        let kappa = self.common_kappa()?;
        let risky = self.eu_risky_at(kappa);
        Ok(if risky.approx_eq(S::one()) {
            ParetoOrder::Equal
        } else if risky > S::one() {
            ParetoOrder::AllRiskyDominates
        } else {
            ParetoOrder::AllSafeDominates
        })
    }

    /// Analysis of a game whose players are either regret neutral or share one
    /// positive coefficient.
    pub fn heterogeneous_pure_nash(&self) -> Result<HeterogeneousReport<S>, GameError> {
        let n = self.n();
        let averse: Vec<usize> = (0..n).filter(|&i| !self.kappas[i].is_zero()).collect();
        let Some(&first) = averse.first() else {
            return Err(GameError::BadPartitionOfPlayers("no regret-averse players".into()));
        };
        let kappa = self.kappas[first];
        if averse.iter().any(|&i| self.kappas[i] != kappa) {
            return Err(GameError::BadPartitionOfPlayers(
                "regret-averse players must share one coefficient".into(),
            ));
        }
        let m = averse.len();
        let q_star = self.critical_q_raw(kappa)?;
        let a_star = ActionProfile::new(
            self.kappas.iter().map(|k| if k.is_zero() { Action::Risky } else { Action::Safe }).collect(),
        );
        let a_star_is_nash = self.is_nash(&a_star)?;
        let all_risky_is_nash = self.is_nash(&ActionProfile::uniform(n, Action::Risky))?;
        let criterion_holds = q_star.approx_ge(self.q_at(n - m));
        let mut minimal_m = n;
        for m2 in 1..=n {
            let kappas = (0..n).map(|i| if i < m2 { kappa } else { S::zero() }).collect();
            let g = RegretGame { kappas, ..self.clone() };
            let profile = ActionProfile::new((0..n).map(|i| if i < m2 { Action::Safe } else { Action::Risky }).collect());
            if g.is_nash(&profile)? {
                minimal_m = m2;
                break;
            }
        }
        Ok(HeterogeneousReport { m, kappa, q_star, a_star, a_star_is_nash, criterion_holds, all_risky_is_nash, minimal_m })
    }
}

fn binomial_u128(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for j in 0..k {
        c = c.saturating_mul((n - j) as u128) / (j as u128 + 1);
    }
    c
}

fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    if k > n {
        return;
    }
    loop {
        f(&idx);
        let Some(pos) = (0..k).rev().find(|&j| idx[j] != j + n - k) else {
            return;
        };
        idx[pos] += 1;
        for j in pos + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// The common parts of a game whose players' regret coefficients are private.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "S: Scalar + Deserialize<'de>"))]
pub struct GameTemplate<S> {
    pub p: S,
    pub u_high: S,
    pub q: QFunction<S>,
}

/// Cutoff strategy: risky iff the own coefficient is strictly below the cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cutoff<S> {
    At(S),
    /// Every type goes risky.
    AboveSupport,
}

impl<S: Scalar> Cutoff<S> {
    pub fn plays_risky(&self, kappa: S) -> bool {
        match self {
            Cutoff::At(c) => kappa < *c,
            Cutoff::AboveSupport => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutoffEquilibrium<S> {
    pub cutoff: Cutoff<S>,
    /// Probability that a given opponent goes risky.
    pub risky_prob: S,
    /// Expected learning probability of a safe player.
    pub expected_q: S,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BayesianReport<S> {
    pub dominance_bound: S,
    pub equilibria: Vec<CutoffEquilibrium<S>>,
}

/// Validated, sorted `(kappa, weight)` support.
pub fn normalize_support<S: Scalar>(support: &[(S, S)]) -> Result<Vec<(S, S)>, GameError> {
    if support.is_empty() {
        return Err(GameError::InvalidDistribution("empty support".into()));
    }
    let mut sorted = support.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("comparable coefficients"));
    if sorted.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(GameError::InvalidDistribution("repeated support point".into()));
    }
    if sorted.iter().any(|(k, w)| *k < S::zero() || *w <= S::zero()) {
        return Err(GameError::InvalidDistribution("coefficients must be >= 0 and weights > 0".into()));
    }
    let total = sorted.iter().fold(S::zero(), |acc, (_, w)| acc + *w);
    if !total.approx_eq(S::one()) {
        return Err(GameError::InvalidDistribution(format!("weights sum to {total}")));
    }
    Ok(sorted)
}

/// `E[q(R)]` for `R ~ Binomial(n - 1, rho)`.
pub fn expected_q_binomial<S: Scalar>(q: &QFunction<S>, n: usize, rho: S) -> S {
    let others = n - 1;
    let mut coef = S::one();
    let mut total = S::zero();
    for k in 0..=others {
        let mut term = coef * q.value(k, n);
        for _ in 0..k {
            term = term * rho;
        }
        for _ in 0..others - k {
            term = term * (S::one() - rho);
        }
        total = total + term;
        coef = coef * S::from_int((others - k) as i64) / S::from_int(k as i64 + 1);
    }
    total
}

/// Symmetric Bayesian equilibria in cutoff strategies for `n` players whose
/// coefficients are drawn independently from `support`. An empty list means
/// no cutoff strategy is an equilibrium.
pub fn bayesian_cutoff_equilibrium<S: Scalar>(
    template: &GameTemplate<S>,
    support: &[(S, S)],
    n: usize,
) -> Result<BayesianReport<S>, GameError> {
    let support = normalize_support(support)?;
    let game = RegretGame::symmetric(n, template.p, template.u_high, support[0].0, template.q.clone())?;
    let candidates: Vec<Cutoff<S>> = support
        .iter()
        .map(|(k, _)| Cutoff::At(*k))
        .chain(std::iter::once(Cutoff::AboveSupport))
        .collect();
    let equilibria = candidates
        .into_par_iter()
        .filter_map(|cutoff| {
            let rho = support
                .iter()
                .filter(|(k, _)| cutoff.plays_risky(*k))
                .fold(S::zero(), |acc, (_, w)| acc + *w);
            let expected_q = expected_q_binomial(&game.q, n, rho);
            let stable = support.iter().all(|(k, _)| {
                let safe = game.eu_safe_at(*k, expected_q);
                let risky = game.eu_risky_at(*k);
                if cutoff.plays_risky(*k) {
                    !safe.definitely_gt(risky)
                } else {
                    !risky.definitely_gt(safe)
                }
            });
            stable.then_some(CutoffEquilibrium { cutoff, risky_prob: rho, expected_q })
        })
        .collect();
    Ok(BayesianReport { dominance_bound: game.dominance_bound(), equilibria })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;
    use proptest::prelude::*;

    type Q = Ratio<i128>;

    fn game(n: usize, u: f64) -> RegretGame<f64> {
        RegretGame::symmetric(n, 0.5, u, 1.0, QFunction::Linear).unwrap()
    }

    fn profile(s: &str) -> ActionProfile {
        s.parse().unwrap()
    }

    #[test]
    fn q_functions() {
        let lin = QFunction::<f64>::Linear;
        assert_eq!(lin.values(4), vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]);
        let pow = QFunction::Power { exponent: 2.0f64 };
        assert!((pow.value(1, 3) - 0.25).abs() < 1e-15);
        let step = QFunction::<Q>::Step { threshold: 1 };
        let v = step.values(4);
        assert_eq!(v[0], Q::from_integer(0));
        assert_eq!(v[3], Q::from_integer(1));
        assert!(v.windows(2).all(|w| w[1] > w[0]));
        assert!(v[1] > Q::new(999_999, 1_000_000));
        assert!(QFunction::<f64>::Step { threshold: 0 }.validate(4).is_err());
        assert!(QFunction::Table { values: vec![0.0, 0.6, 0.5, 1.0] }.validate(4).is_err());
        assert!(QFunction::Table { values: vec![0.0, 0.2, 0.5, 1.0] }.validate(4).is_ok());
        assert!(QFunction::Power { exponent: -1.0 }.validate(4).is_err());
    }

    #[test]
    fn invalid_games() {
        assert!(RegretGame::symmetric(1, 0.5, 2.5, 1.0, QFunction::Linear).is_err());
        assert!(RegretGame::symmetric(2, 1.0, 2.5, 1.0, QFunction::Linear).is_err());
        assert!(RegretGame::symmetric(2, 0.5, 1.0, 1.0, QFunction::Linear).is_err());
        assert!(RegretGame::symmetric(2, 0.5, 2.5, -1.0, QFunction::Linear).is_err());
    }

    #[test]
    fn player_utilities() {
        let g = game(2, 2.5);
        assert_eq!(g.expected_player_utility(&profile("SS"), 0).unwrap(), 1.0);
        assert_eq!(g.expected_player_utility(&profile("SR"), 0).unwrap(), 0.25);
        assert_eq!(g.expected_player_utility(&profile("RS"), 0).unwrap(), 0.75);
        assert_eq!(g.expected_player_utility(&profile("RR"), 0).unwrap(), 0.75);
        assert!(matches!(g.expected_player_utility(&profile("SS"), 2), Err(GameError::IndexOutOfRange { .. })));
        assert!(matches!(g.expected_player_utility(&profile("S"), 0), Err(GameError::ProfileLength { .. })));
        let big = game(5, 3.2);
        for mask in 0..32 {
            let prof = ActionProfile::from_mask(5, mask);
            for i in 0..5 {
                if !prof.actions[i].is_risky() && prof.risky_count() == 0 {
                    assert_eq!(big.expected_player_utility(&prof, i).unwrap(), 1.0);
                }
            }
        }
    }

    #[test]
    fn best_responses() {
        for others in ["S", "R"] {
            let gs = game(2, 1.8);
            let gr = game(2, 3.2);
            let prof = profile(&format!("S{others}"));
            assert_eq!(gs.best_response(&prof, 0).unwrap(), Action::Safe);
            assert_eq!(gr.best_response(&prof, 0).unwrap(), Action::Risky);
        }
        let g = game(2, 2.5);
        assert_eq!(g.best_response(&profile("SR"), 0).unwrap(), Action::Risky);
        assert_eq!(g.best_response(&profile("SS"), 0).unwrap(), Action::Safe);
    }

    #[test]
    fn equilibria_match_regimes() {
        assert_eq!(game(4, 2.5).enumerate_pure_nash().unwrap(), vec![profile("SSSS"), profile("RRRR")]);
        assert_eq!(game(4, 1.8).enumerate_pure_nash().unwrap(), vec![profile("SSSS")]);
        assert_eq!(game(4, 3.2).enumerate_pure_nash().unwrap(), vec![profile("RRRR")]);
        assert_eq!(game(2, 1.8).classify_regime().unwrap(), Regime::DominantSafe);
        assert_eq!(game(2, 3.2).classify_regime().unwrap(), Regime::DominantRisky);
        assert_eq!(game(2, 2.5).classify_regime().unwrap(), Regime::Coordination);
        let het = RegretGame::new(0.5, 2.5, vec![1.0, 2.0], QFunction::Linear).unwrap();
        assert_eq!(het.classify_regime(), Err(GameError::HeterogeneousKappas));
    }

    #[test]
    fn boundaries_belong_to_coordination() {
        for u in [Q::from_integer(2), Q::from_integer(3)] {
            let g = RegretGame::symmetric(3, Q::new(1, 2), u, Q::from_integer(1), QFunction::Linear).unwrap();
            assert_eq!(g.classify_regime().unwrap(), Regime::Coordination);
            assert_eq!(g.enumerate_pure_nash().unwrap(), vec![profile("SSS"), profile("RRR")]);
        }
        // At the upper boundary all-safe is an equilibrium yet a safe player's
        // best response (ties to risky) moves.
        let g = RegretGame::symmetric(3, Q::new(1, 2), Q::from_integer(3), Q::from_integer(1), QFunction::Linear).unwrap();
        assert_eq!(g.best_response(&profile("SSS"), 0).unwrap(), Action::Risky);
    }

    #[test]
    fn mixed_equilibrium() {
        let m = game(2, 2.5).mixed_symmetric_equilibrium().unwrap();
        assert!((m.sigma - 1.0 / 3.0).abs() < 1e-12);
        assert!(m.residual < 1e-9);
        let exact = RegretGame::symmetric(2, Q::new(1, 2), Q::new(5, 2), Q::from_integer(1), QFunction::Linear).unwrap();
        let me = exact.mixed_symmetric_equilibrium().unwrap();
        assert_eq!(me.sigma, Q::new(1, 3));
        assert_eq!(me.residual, Q::from_integer(0));
        // The opponent must be surely risky at the lower boundary, surely safe at the upper.
        let lo = RegretGame::symmetric(2, Q::new(1, 2), Q::from_integer(2), Q::from_integer(1), QFunction::Linear).unwrap();
        assert_eq!(lo.mixed_symmetric_equilibrium().unwrap().sigma, Q::from_integer(1));
        let hi = RegretGame::symmetric(2, Q::new(1, 2), Q::from_integer(3), Q::from_integer(1), QFunction::Linear).unwrap();
        assert_eq!(hi.mixed_symmetric_equilibrium().unwrap().sigma, Q::from_integer(0));
        assert!(matches!(game(2, 3.2).mixed_symmetric_equilibrium(), Err(GameError::NoInteriorSolution(_))));
        assert!(matches!(game(3, 2.5).mixed_symmetric_equilibrium(), Err(GameError::NoInteriorSolution(_))));
    }

    #[test]
    fn critical_q_values() {
        let c = game(2, 2.5).critical_q().unwrap();
        assert!((c.raw - 1.0 / 3.0).abs() < 1e-12 && !c.at_one_half);
        let mut lo = 0.0;
        let mut hi = 1.0;
        let g = game(2, 2.5);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if g.eu_safe_at(1.0, mid) > g.eu_risky_at(1.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((lo - c.raw).abs() < 1e-12);
        assert_eq!(game(2, 2.0).critical_q().unwrap().raw, 1.0);
        let half = RegretGame::symmetric(2, Q::new(1, 2), Q::new(7, 3), Q::from_integer(1), QFunction::Linear).unwrap();
        let ch = half.critical_q().unwrap();
        assert_eq!(ch.raw, Q::new(1, 2));
        assert!(ch.at_one_half);
        let out = game(2, 4.0).critical_q().unwrap();
        assert!(out.raw < 0.0 && out.clamped == 0.0 && out.regime == Regime::DominantRisky);
        let zero = RegretGame::symmetric(2, 0.5, 2.5, 0.0, QFunction::Linear).unwrap();
        assert!(matches!(zero.critical_q(), Err(GameError::Degenerate(_))));
    }

    #[test]
    fn pareto() {
        assert_eq!(game(3, 2.5).pareto_compare().unwrap(), ParetoOrder::AllSafeDominates);
        assert_eq!(game(3, 3.0).pareto_compare().unwrap(), ParetoOrder::Equal);
        assert_eq!(game(3, 3.5).pareto_compare().unwrap(), ParetoOrder::AllRiskyDominates);
    }

    #[test]
    fn heterogeneous_examples() {
        let with_m = |m: usize| {
            let kappas = (0..4).map(|i| if i < m { 1.0 } else { 0.0 }).collect();
            RegretGame::new(0.5, 2.5, kappas, QFunction::Linear).unwrap().heterogeneous_pure_nash().unwrap()
        };
        let r3 = with_m(3);
        assert!(r3.a_star_is_nash && r3.criterion_holds && r3.all_risky_is_nash);
        assert_eq!(r3.minimal_m, 3);
        let r2 = with_m(2);
        assert!(!r2.a_star_is_nash && !r2.criterion_holds && r2.all_risky_is_nash);
        let r4 = with_m(4);
        assert!(r4.a_star.is_all(Action::Safe) && r4.a_star_is_nash);
        let none = RegretGame::new(0.5, 2.5, vec![0.0; 3], QFunction::Linear).unwrap();
        assert!(matches!(none.heterogeneous_pure_nash(), Err(GameError::BadPartitionOfPlayers(_))));
        let three = RegretGame::new(0.5, 2.5, vec![0.0, 1.0, 2.0], QFunction::Linear).unwrap();
        assert!(matches!(three.heterogeneous_pure_nash(), Err(GameError::BadPartitionOfPlayers(_))));
    }

    #[test]
    fn structural_handles_large_games() {
        let g = game(40, 2.5);
        assert_eq!(g.enumerate_pure_nash().unwrap().len(), 2);
        let neutral = RegretGame::symmetric(30, 0.5, 2.0, 0.0, QFunction::Linear).unwrap();
        // every profile is an equilibrium when nobody cares and the lottery is fair
        assert!(matches!(neutral.enumerate_pure_nash(), Err(GameError::TooLarge(_))));
    }

    fn template() -> GameTemplate<f64> {
        GameTemplate { p: 0.5, u_high: 2.5, q: QFunction::Linear }
    }

    /// Oracle: average the realized game over every opponent type profile.
    fn exhaustive_cutoff_check(t: &GameTemplate<f64>, support: &[(f64, f64)], n: usize, cutoff: Cutoff<f64>) -> bool {
        let m = support.len();
        support.iter().all(|&(own, _)| {
            let (mut safe, mut risky) = (0.0, 0.0);
            for code in 0..m.pow((n - 1) as u32) {
                let (mut c, mut weight) = (code, 1.0);
                let mut kappas = vec![own];
                for _ in 1..n {
                    let (k, w) = support[c % m];
                    c /= m;
                    kappas.push(k);
                    weight *= w;
                }
                let g = RegretGame::new(t.p, t.u_high, kappas.clone(), t.q.clone()).unwrap();
                let base = ActionProfile::new(
                    kappas.iter().map(|k| if cutoff.plays_risky(*k) { Action::Risky } else { Action::Safe }).collect(),
                );
                safe += weight * g.expected_player_utility(&base.with(0, Action::Safe), 0).unwrap();
                risky += weight * g.expected_player_utility(&base.with(0, Action::Risky), 0).unwrap();
            }
            if cutoff.plays_risky(own) { safe <= risky + 1e-9 } else { risky <= safe + 1e-9 }
        })
    }

    #[test]
    fn bayesian_examples() {
        let t = template();
        let r = bayesian_cutoff_equilibrium(&t, &[(0.0, 1.0)], 2).unwrap();
        assert_eq!(r.equilibria.len(), 1);
        assert_eq!(r.equilibria[0].cutoff, Cutoff::AboveSupport);

        let r = bayesian_cutoff_equilibrium(&t, &[(0.0, 0.5), (1.0, 0.5)], 2).unwrap();
        assert!(r.equilibria.iter().any(|e| e.cutoff == Cutoff::AboveSupport));

        let r = bayesian_cutoff_equilibrium(&t, &[(5.0, 0.5), (0.0, 0.5)], 2).unwrap();
        let cutoffs: Vec<_> = r.equilibria.iter().map(|e| e.cutoff).collect();
        assert_eq!(cutoffs, vec![Cutoff::At(5.0), Cutoff::AboveSupport]);
        assert!((r.dominance_bound - 0.5).abs() < 1e-12);
        assert!(bayesian_cutoff_equilibrium(&t, &[(0.0, 0.5)], 2).is_err());
    }

    #[test]
    fn bayesian_matches_exhaustive_oracle() {
        let t = GameTemplate { p: 0.4, u_high: 3.0, q: QFunction::Power { exponent: 0.5 } };
        let support = [(0.0, 0.3), (0.8, 0.3), (2.0, 0.2), (6.0, 0.2)];
        for n in 2..=4 {
            let report = bayesian_cutoff_equilibrium(&t, &support, n).unwrap();
            for cutoff in support.iter().map(|(k, _)| Cutoff::At(*k)).chain([Cutoff::AboveSupport]) {
                let listed = report.equilibria.iter().any(|e| e.cutoff == cutoff);
                assert_eq!(listed, exhaustive_cutoff_check(&t, &support, n, cutoff), "n={n} cutoff={cutoff:?}");
            }
        }
    }

    #[test]
    fn profile_text_round_trip() {
        let p = profile("SRRS");
        assert_eq!(p.to_string(), "SRRS");
        assert_eq!(serde_json::to_string(&p).unwrap(), "\"SRRS\"");
        assert_eq!(serde_json::from_str::<ActionProfile>("\"SRRS\"").unwrap(), p);
        assert!("SX".parse::<ActionProfile>().is_err());
    }

    fn arb_q() -> impl Strategy<Value = QFunction<f64>> {
        prop_oneof![
            Just(QFunction::Linear),
            (0.2f64..4.0).prop_map(|exponent| QFunction::Power { exponent }),
            Just(QFunction::Step { threshold: 1 }),
        ]
    }

    proptest! {
        #[test]
        fn brute_force_matches_structural(n in 2usize..9, p in 0.1f64..0.9, u in 1.05f64..8.0, kappas in prop::collection::vec(0.0f64..4.0, 8), q in arb_q()) {
            let g = RegretGame::new(p, u, kappas[..n].to_vec(), q).unwrap();
            prop_assert_eq!(g.enumerate_pure_nash_brute().unwrap(), g.enumerate_pure_nash_structural().unwrap());
        }

        #[test]
        fn regime_predicts_equilibria(n in 2usize..9, p in 0.1f64..0.9, u in 1.05f64..8.0, kappa in 0.05f64..4.0, q in arb_q()) {
            let g = RegretGame::symmetric(n, p, u, kappa, q).unwrap();
            let expected = match g.classify_regime().unwrap() {
                Regime::DominantSafe => vec![ActionProfile::uniform(n, Action::Safe)],
                Regime::DominantRisky => vec![ActionProfile::uniform(n, Action::Risky)],
                Regime::Coordination => vec![ActionProfile::uniform(n, Action::Safe), ActionProfile::uniform(n, Action::Risky)],
            };
            prop_assert_eq!(g.enumerate_pure_nash().unwrap(), expected);
        }

        #[test]
        fn strategic_complements(n in 2usize..9, p in 0.1f64..0.9, u in 1.05f64..8.0, kappa in 0.05f64..4.0, q in arb_q()) {
            let g = RegretGame::symmetric(n, p, u, kappa, q).unwrap();
            for k in 1..n {
                prop_assert!(g.eu_safe(0, k) < g.eu_safe(0, k - 1));
            }
            // flipping an opponent to risky never helps
            for mask in 0u64..1 << n {
                let prof = ActionProfile::from_mask(n, mask);
                for i in 0..n {
                    for j in (0..n).filter(|&j| j != i && !prof.actions[j].is_risky()) {
                        let before = g.expected_player_utility(&prof, i).unwrap();
                        let after = g.expected_player_utility(&prof.with(j, Action::Risky), i).unwrap();
                        if prof.actions[i].is_risky() {
                            prop_assert_eq!(before, after);
                        } else {
                            prop_assert!(after < before);
                        }
                    }
                }
            }
        }

        #[test]
        fn dominance_bound_matches_upper_threshold(p in 0.1f64..0.9, u in 1.05f64..8.0, kappa in 0.0f64..4.0) {
            let g = RegretGame::symmetric(2, p, u, kappa, QFunction::Linear).unwrap();
            let gap = (kappa - g.dominance_bound()).abs();
            prop_assume!(gap > 1e-6);
            prop_assert_eq!(g.risky_dominant(0), g.classify_regime().unwrap() == Regime::DominantRisky);
        }

        #[test]
        fn mixed_residual_small(p in 0.1f64..0.9, kappa in 0.05f64..4.0, t in 0.0f64..=1.0) {
            let lo = 1.0 / p;
            let hi = (1.0 + kappa * (1.0 - p)) / p;
            let g = RegretGame::symmetric(2, p, lo + t * (hi - lo), kappa, QFunction::Linear).unwrap();
            let m = g.mixed_symmetric_equilibrium().unwrap();
            prop_assert!(m.residual < 1e-9);
            prop_assert!((-1e-9..=1.0 + 1e-9).contains(&m.sigma));
        }
    }
}
