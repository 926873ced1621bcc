//! Synthetic sessions of the two laboratory protocols.
//!
//! Protocol 1: thresholds under feedback (`x1`) and no feedback (`x2`), a
//! partner-dependent threshold (`x3`), then the two-player regret game with
//! individual lottery highs below `x1`, above `x2` and in between, the last
//! one repeated with a fixed partner. Protocol 2: a valuation, a consistency
//! check, a paid option to learn the forgone lottery, and the find-out game.
//!
//! Everything here runs in `f64`; a session draws only from its own ChaCha8
//! stream, so sessions can run in any order.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};
use thiserror::Error;

use crate::decide::{bdm_threshold, BdmTask, BinaryUtilities, DecideError, RegretPreference, UtilityFunction};
use crate::game::Action;
use crate::money::Money;
use crate::report::{Cell, Table};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum XpError {
    #[error(transparent)]
    Decide(#[from] DecideError),
    #[error("invalid session configuration: {0}")]
    InvalidConfig(String),
    #[error("no sessions or no agents to summarize")]
    EmptySession,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum BeliefRule {
    /// Expect the partner to repeat the last action seen from them.
    #[default]
    Cournot,
    /// A constant probability that the partner takes the exposing action.
    Fixed { prob: f64 },
}

fn linear_utility() -> UtilityFunction<f64> {
    UtilityFunction::linear()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticAgent {
    pub pref: RegretPreference<f64>,
    #[serde(default = "linear_utility", alias = "u")]
    pub utility: UtilityFunction<f64>,
    #[serde(default)]
    pub belief_rule: BeliefRule,
    /// Probability of flipping any single choice (or moving a stated threshold one step).
    #[serde(default, alias = "choice_noise")]
    pub tremble: f64,
}

impl SyntheticAgent {
    pub fn new(regret: f64, rejoice: f64) -> Self {
        SyntheticAgent {
            pref: RegretPreference { regret, rejoice },
            utility: UtilityFunction::linear(),
            belief_rule: BeliefRule::Cournot,
            tremble: 0.0,
        }
    }

    pub fn with_tremble(mut self, tremble: f64) -> Self {
        self.tremble = tremble;
        self
    }

    pub fn with_beliefs(mut self, rule: BeliefRule) -> Self {
        self.belief_rule = rule;
        self
    }

    pub fn validate(&self) -> Result<(), XpError> {
        self.pref.validate()?;
        self.utility.validate()?;
        if !(0.0..0.5).contains(&self.tremble) {
            return Err(XpError::InvalidConfig(format!("tremble {} must lie in [0, 0.5)", self.tremble)));
        }
        if let BeliefRule::Fixed { prob } = self.belief_rule {
            if !(0.0..=1.0).contains(&prob) {
                return Err(XpError::InvalidConfig(format!("fixed belief {prob} outside [0, 1]")));
            }
        }
        Ok(())
    }

    fn tremble_hit<R: Rng>(&self, rng: &mut R) -> bool {
        rng.gen::<f64>() < self.tremble
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedAgent {
    pub weight: f64,
    pub agent: SyntheticAgent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Population {
    Agents(Vec<SyntheticAgent>),
    /// `size` agents drawn independently from weighted templates.
    Mixture { size: usize, components: Vec<WeightedAgent> },
}

impl Population {
    pub fn size(&self) -> usize {
        match self {
            Population::Agents(a) => a.len(),
            Population::Mixture { size, .. } => *size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp2Config {
    pub high: Money,
    pub low: Money,
    pub p: f64,
    /// Added to the valuation to form the sure amount.
    pub markup: Money,
    /// Paid for choosing to learn the lottery outcome.
    pub bonus: Money,
    /// Valuation grid, strictly ascending.
    pub grid: Vec<Money>,
}

impl Default for Exp2Config {
    fn default() -> Self {
        Exp2Config {
            high: Money::from_units(80),
            low: Money::ZERO,
            p: 0.2,
            markup: Money::from_units(2),
            bonus: Money::from_cents(4),
            grid: (1..=80).map(Money::from_units).collect(),
        }
    }
}

fn default_grid() -> Vec<Money> {
    (5..=15).map(Money::from_units).collect()
}
fn default_safe() -> Money {
    Money::from_units(5)
}
fn default_p() -> f64 {
    0.5
}
fn default_rounds() -> usize {
    20
}
fn default_group() -> usize {
    4
}
fn default_exp2() -> Option<Exp2Config> {
    Some(Exp2Config::default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub population: Population,
    #[serde(default = "default_grid")]
    pub grid: Vec<Money>,
    #[serde(default = "default_safe")]
    pub safe: Money,
    #[serde(default)]
    pub low: Money,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_rounds")]
    pub rounds_d6: usize,
    #[serde(default = "default_group")]
    pub group_size: usize,
    #[serde(default = "default_exp2")]
    pub experiment2: Option<Exp2Config>,
}

impl SessionConfig {
    pub fn new(population: Population) -> Self {
        SessionConfig {
            population,
            grid: default_grid(),
            safe: default_safe(),
            low: Money::ZERO,
            p: default_p(),
            rounds_d6: default_rounds(),
            group_size: default_group(),
            experiment2: default_exp2(),
        }
    }

    pub fn validate(&self) -> Result<(), XpError> {
        let size = self.population.size();
        if size == 0 || !size.is_multiple_of(2) {
            return Err(XpError::InvalidConfig(format!("population size {size} must be even and positive")));
        }
        if self.group_size < 2 || !self.group_size.is_multiple_of(2) || !size.is_multiple_of(self.group_size) {
            return Err(XpError::InvalidConfig(format!(
                "group size {} must be even and divide the population size {size}",
                self.group_size
            )));
        }
        if self.rounds_d6 == 0 {
            return Err(XpError::InvalidConfig("need at least one repeated round".into()));
        }
        if !(self.low < self.safe) {
            return Err(XpError::InvalidConfig("the lottery's low outcome must be below the sure amount".into()));
        }
        self.task().validate()?;
        match &self.population {
            Population::Agents(agents) => agents.iter().try_for_each(SyntheticAgent::validate)?,
            Population::Mixture { components, .. } => {
                if components.is_empty() || components.iter().any(|c| c.weight.is_nan() || c.weight <= 0.0) {
                    return Err(XpError::InvalidConfig("mixture weights must be positive".into()));
                }
                components.iter().try_for_each(|c| c.agent.validate())?;
            }
        }
        if let Some(e2) = &self.experiment2 {
            if !(e2.p > 0.0 && e2.p < 1.0) || e2.low >= e2.high || e2.grid.is_empty() || e2.grid.windows(2).any(|w| w[1] <= w[0]) {
                return Err(XpError::InvalidConfig("invalid second-protocol parameters".into()));
            }
        }
        Ok(())
    }

    pub fn task(&self) -> BdmTask<f64> {
        BdmTask { p: self.p, low: self.low, safe: self.safe, grid: self.grid.clone() }
    }

    /// The stated-threshold grid with the "never switch" slot appended.
    pub fn extended_grid(&self) -> Vec<Money> {
        let task = self.task();
        let mut g = self.grid.clone();
        g.push(crate::decide::BdmOutcome::NoSwitch.as_amount(&task));
        g
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentType {
    RegretAverse,
    RegretNeutral,
    RejoiceLover,
}

impl AgentType {
    pub const ALL: [AgentType; 3] = [AgentType::RegretAverse, AgentType::RegretNeutral, AgentType::RejoiceLover];

    pub fn label(self) -> &'static str {
        match self {
            AgentType::RegretAverse => "regret_averse",
            AgentType::RegretNeutral => "regret_neutral",
            AgentType::RejoiceLover => "rejoice_lover",
        }
    }
}

pub fn classify_type(x1: Money, x2: Money) -> AgentType {
    match x2.cmp(&x1) {
        std::cmp::Ordering::Greater => AgentType::RegretAverse,
        std::cmp::Ordering::Equal => AgentType::RegretNeutral,
        std::cmp::Ordering::Less => AgentType::RejoiceLover,
    }
}

/// Noise-free stated threshold when the lottery outcome is learned with probability `q`.
pub fn stated_threshold(agent: &SyntheticAgent, config: &SessionConfig, q: f64) -> Result<Money, XpError> {
    let task = config.task();
    Ok(bdm_threshold(&agent.pref, &agent.utility, &task, q)?.as_amount(&task))
}

/// Noise-free `(x1, x2)`.
pub fn elicit_thresholds(agent: &SyntheticAgent, config: &SessionConfig) -> Result<(Money, Money), XpError> {
    Ok((stated_threshold(agent, config, 1.0)?, stated_threshold(agent, config, 0.0)?))
}

/// Noise-free `x3` when the partner plays the lottery with probability `b`.
pub fn decision3_threshold(agent: &SyntheticAgent, b: f64, config: &SessionConfig) -> Result<Money, XpError> {
    if !(0.0..=1.0).contains(&b) {
        return Err(XpError::InvalidConfig(format!("belief {b} outside [0, 1]")));
    }
    stated_threshold(agent, config, b)
}

/// With the agent's tremble probability, moves a stated amount one slot up or down.
fn tremble_amount<R: Rng>(agent: &SyntheticAgent, grid: &[Money], x: Money, rng: &mut R) -> Money {
    let hit = agent.tremble_hit(rng);
    let up = rng.gen_bool(0.5);
    if !hit {
        return x;
    }
    let idx = grid.iter().position(|g| *g == x).unwrap_or(0);
    let moved = if up { (idx + 1).min(grid.len() - 1) } else { idx.saturating_sub(1) };
    grid[moved]
}

fn flip_if(action: Action, flip: bool) -> Action {
    if flip {
        action.flipped()
    } else {
        action
    }
}

/// Noise-free choice in the two-player game: risky when its expected total
/// utility weakly exceeds the safe one, given belief `b` that the partner is risky.
pub fn round_best_response(agent: &SyntheticAgent, config: &SessionConfig, high: Money, b: f64) -> Result<Action, XpError> {
    let utils = BinaryUtilities::from_money(&agent.utility, config.low, config.safe, high)?;
    Ok(if utils.prefers_risky(config.p, b, &agent.pref) { Action::Risky } else { Action::Safe })
}

/// Probability the agent ends up risky, trembles included.
pub fn round_risky_probability(agent: &SyntheticAgent, config: &SessionConfig, high: Money, b: f64) -> Result<f64, XpError> {
    Ok(match round_best_response(agent, config, high, b)? {
        Action::Risky => 1.0 - agent.tremble,
        Action::Safe => agent.tremble,
    })
}

/// Smallest regret coefficient (with the agent's other traits) that pushes
/// `x2` above `x1`, found by bisection. `None` if no coefficient up to 100 does.
pub fn min_regret_for_step(agent: &SyntheticAgent, config: &SessionConfig) -> Result<Option<f64>, XpError> {
    let moved = |k: f64| -> Result<bool, XpError> {
        let a = SyntheticAgent { pref: RegretPreference { regret: k, ..agent.pref }, ..agent.clone() };
        let (x1, x2) = elicit_thresholds(&a, config)?;
        Ok(x2 > x1)
    };
    let (mut lo, mut hi) = (0.0, 100.0);
    if moved(lo)? {
        return Ok(Some(0.0));
    }
    if !moved(hi)? {
        return Ok(None);
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if moved(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameDecision {
    /// High outcome `x1 - 2`.
    BelowX1,
    /// High outcome `x2 + 2`.
    AboveX2,
    /// High outcome halfway between `x1` and `x2`; carries the repetition number from 1.
    Between(usize),
}

impl GameDecision {
    pub fn id(self) -> usize {
        match self {
            GameDecision::BelowX1 => 4,
            GameDecision::AboveX2 => 5,
            GameDecision::Between(r) => 5 + r,
        }
    }

    pub fn round(self) -> usize {
        match self {
            GameDecision::Between(r) => r,
            _ => 1,
        }
    }

    pub fn high(self, x1: Money, x2: Money) -> Money {
        let two = Money::from_units(2);
        match self {
            GameDecision::BelowX1 => x1 - two,
            GameDecision::AboveX2 => x2 + two,
            GameDecision::Between(_) => x1.midpoint(x2),
        }
    }

    fn rematches(self) -> bool {
        !matches!(self, GameDecision::Between(r) if r > 1)
    }
}

pub fn decision_sequence(rounds_d6: usize) -> Vec<GameDecision> {
    [GameDecision::BelowX1, GameDecision::AboveX2]
        .into_iter()
        .chain((1..=rounds_d6).map(GameDecision::Between))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub agent_id: usize,
    pub group: usize,
    pub regret: f64,
    pub rejoice: f64,
    pub tremble: f64,
    pub x1: Money,
    pub x2: Money,
    pub x3: Money,
    /// Guessed partner threshold in the partner-dependent task.
    pub believed_partner_x3: Money,
    /// Implied probability that the partner plays the lottery there.
    pub belief_partner_plays: f64,
    pub agent_type: AgentType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub session: usize,
    pub group: usize,
    pub pair: usize,
    pub round: usize,
    pub decision_id: usize,
    pub decision: GameDecision,
    pub agent_id: usize,
    pub partner_id: usize,
    pub agent_type: AgentType,
    pub high: Money,
    pub choice: Action,
    /// Believed probability that the partner goes risky.
    pub belief: f64,
    pub past_regret: bool,
    pub lottery_success: bool,
    pub payoff: Money,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp2Record {
    pub agent_id: usize,
    pub partner_id: usize,
    pub valuation: Money,
    pub sure_amount: Money,
    /// Chose the sure amount over the lottery, as the valuation implies.
    pub consistent: bool,
    pub find_out_alone: bool,
    pub find_out_game: bool,
    /// Believed probability that the partner finds out.
    pub belief_partner_finds_out: f64,
    /// Belief at which finding out and not finding out are equally good, if any.
    pub indifference_belief: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    pub session: usize,
    pub agents: Vec<AgentRecord>,
    pub rounds: Vec<RoundRecord>,
    pub exp2: Vec<Exp2Record>,
}

/// The random stream of one session.
pub fn session_rng(seed: u64, session: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(session as u64);
    rng
}

fn draw_population<R: Rng>(population: &Population, rng: &mut R) -> Vec<SyntheticAgent> {
    match population {
        Population::Agents(a) => a.clone(),
        Population::Mixture { size, components } => {
            let total: f64 = components.iter().map(|c| c.weight).sum();
            (0..*size)
                .map(|_| {
                    let mut u = rng.gen::<f64>() * total;
                    for c in components {
                        if u < c.weight {
                            return c.agent.clone();
                        }
                        u -= c.weight;
                    }
                    components.last().expect("nonempty mixture").agent.clone()
                })
                .collect()
        }
    }
}

/// Pairs people at random; returns `partner[i]`.
fn random_matching<R: Rng>(members: &[usize], partner: &mut [usize], pair_of: &mut [usize], rng: &mut R) {
    let mut order = members.to_vec();
    order.shuffle(rng);
    for (k, pair) in order.chunks(2).enumerate() {
        partner[pair[0]] = pair[1];
        partner[pair[1]] = pair[0];
        pair_of[pair[0]] = k;
        pair_of[pair[1]] = k;
    }
}

#[derive(Clone, Copy)]
struct LastRound {
    own: Action,
    partner: Action,
    success: bool,
}

impl LastRound {
    fn regret(self) -> bool {
        (self.own == Action::Safe && self.partner == Action::Risky && self.success)
            || (self.own == Action::Risky && !self.success)
    }
}

/// Belief that the partner goes risky.
fn round_belief(
    agent: &SyntheticAgent,
    config: &SessionConfig,
    high: Money,
    seen_partner: Option<Action>,
) -> Result<f64, XpError> {
    Ok(match (agent.belief_rule, seen_partner) {
        (BeliefRule::Fixed { prob }, _) => prob,
        (BeliefRule::Cournot, Some(a)) => f64::from(u8::from(a.is_risky())),
        (BeliefRule::Cournot, None) => round_risky_probability(agent, config, high, 0.5)?,
    })
}

struct Participant {
    agent: SyntheticAgent,
    x1: Money,
    x2: Money,
    kind: AgentType,
}

fn play_decisions<R: Rng>(
    session: usize,
    people: &[Participant],
    groups: &[usize],
    config: &SessionConfig,
    rng: &mut R,
) -> Result<Vec<RoundRecord>, XpError> {
    let n = people.len();
    let mut partner = vec![0usize; n];
    let mut pair_of = vec![0usize; n];
    let mut seen: Vec<Option<Action>> = vec![None; n];
    let mut last: Vec<Option<LastRound>> = vec![None; n];
    let mut records = Vec::new();
    for decision in decision_sequence(config.rounds_d6) {
        if decision.rematches() {
            for g in 0..n / config.group_size {
                let members: Vec<usize> = (0..n).filter(|&i| groups[i] == g).collect();
                random_matching(&members, &mut partner, &mut pair_of, rng);
            }
            seen.iter_mut().for_each(|s| *s = None);
        }
        let mut choices = Vec::with_capacity(n);
        let mut beliefs = Vec::with_capacity(n);
        let mut highs = Vec::with_capacity(n);
        for person in people {
            let high = decision.high(person.x1, person.x2);
            if high <= config.low {
                return Err(XpError::InvalidConfig(format!(
                    "decision {} gives a lottery high {high} at or below the low outcome",
                    decision.id()
                )));
            }
            let b = round_belief(&person.agent, config, high, seen[choices.len()])?;
            let flip = person.agent.tremble_hit(rng);
            choices.push(flip_if(round_best_response(&person.agent, config, high, b)?, flip));
            beliefs.push(b);
            highs.push(high);
        }
        let success = rng.gen_bool(config.p);
        for i in 0..n {
            let payoff = match (choices[i], success) {
                (Action::Safe, _) => config.safe,
                (Action::Risky, true) => highs[i],
                (Action::Risky, false) => config.low,
            };
            records.push(RoundRecord {
                session,
                group: groups[i],
                pair: pair_of[i],
                round: decision.round(),
                decision_id: decision.id(),
                decision,
                agent_id: i,
                partner_id: partner[i],
                agent_type: people[i].kind,
                high: highs[i],
                choice: choices[i],
                belief: beliefs[i],
                past_regret: last[i].is_some_and(LastRound::regret),
                lottery_success: success,
                payoff,
            });
        }
        for i in 0..n {
            seen[i] = Some(choices[partner[i]]);
            last[i] = Some(LastRound { own: choices[i], partner: choices[partner[i]], success });
        }
    }
    Ok(records)
}

/// Expected total utility of holding `sure` instead of the second-protocol
/// lottery when its outcome is learned with probability `q`.
fn exp2_value(agent: &SyntheticAgent, e2: &Exp2Config, sure: Money, q: f64) -> Result<f64, XpError> {
    let utils = BinaryUtilities::from_money(&agent.utility, e2.low, sure, e2.high)?;
    Ok(expected_safe_general(&utils, e2.p, q, &agent.pref))
}

fn expected_safe_general(utils: &BinaryUtilities<f64>, p: f64, q: f64, pref: &RegretPreference<f64>) -> f64 {
    utils.expected_safe(p, q, pref)
}

fn exp2_lottery_eu(agent: &SyntheticAgent, e2: &Exp2Config) -> Result<f64, XpError> {
    Ok(e2.p * agent.utility.eval(e2.high)? + (1.0 - e2.p) * agent.utility.eval(e2.low)?)
}

/// Certainty equivalent on the valuation grid (smallest grid amount worth at least the lottery).
pub fn exp2_valuation(agent: &SyntheticAgent, e2: &Exp2Config) -> Result<Money, XpError> {
    let eu = exp2_lottery_eu(agent, e2)?;
    for &s in &e2.grid {
        if agent.utility.eval(s)? >= eu - 1e-12 {
            return Ok(s);
        }
    }
    Ok(*e2.grid.last().expect("validated grid"))
}

/// Noise-free choice to learn the lottery alone: the bonus against the
/// utility consequences of learning.
pub fn exp2_finds_out_alone(agent: &SyntheticAgent, e2: &Exp2Config, sure: Money) -> Result<bool, XpError> {
    let learn = exp2_value(agent, e2, sure + e2.bonus, 1.0)?;
    let avoid = exp2_value(agent, e2, sure, 0.0)?;
    Ok(learn >= avoid - 1e-12)
}

/// Noise-free choice in the find-out game given belief `b` that the partner finds out.
pub fn exp2_finds_out_game(agent: &SyntheticAgent, e2: &Exp2Config, sure: Money, b: f64) -> Result<bool, XpError> {
    let learn = exp2_value(agent, e2, sure + e2.bonus, 1.0)?;
    let avoid = exp2_value(agent, e2, sure, b)?;
    Ok(learn >= avoid - 1e-12)
}

/// Belief at which the find-out game choice flips, when it does within [0, 1].
pub fn exp2_indifference_belief(agent: &SyntheticAgent, e2: &Exp2Config, sure: Money) -> Result<Option<f64>, XpError> {
    let learn = exp2_value(agent, e2, sure + e2.bonus, 1.0)?;
    let a = exp2_value(agent, e2, sure, 0.0)?;
    let slope = exp2_value(agent, e2, sure, 1.0)? - a;
    if slope.abs() < 1e-15 {
        return Ok(None);
    }
    let b = (learn - a) / slope;
    Ok((0.0..=1.0).contains(&b).then_some(b))
}

fn run_exp2<R: Rng>(people: &[Participant], e2: &Exp2Config, rng: &mut R) -> Result<Vec<Exp2Record>, XpError> {
    let n = people.len();
    let mut partner = vec![0usize; n];
    let mut pair_of = vec![0usize; n];
    let all: Vec<usize> = (0..n).collect();
    random_matching(&all, &mut partner, &mut pair_of, rng);
    let mut out = Vec::with_capacity(n);
    for (i, person) in people.iter().enumerate() {
        let agent = &person.agent;
        let valuation = tremble_amount(agent, &e2.grid, exp2_valuation(agent, e2)?, rng);
        let sure = valuation + e2.markup;
        let takes_sure = agent.utility.eval(sure)? >= exp2_lottery_eu(agent, e2)? - 1e-12;
        let consistent = takes_sure != agent.tremble_hit(rng);
        let alone = exp2_finds_out_alone(agent, e2, sure)? != agent.tremble_hit(rng);
        let b = match agent.belief_rule {
            BeliefRule::Fixed { prob } => prob,
            BeliefRule::Cournot => f64::from(u8::from(alone)),
        };
        let game = exp2_finds_out_game(agent, e2, sure, b)? != agent.tremble_hit(rng);
        out.push(Exp2Record {
            agent_id: i,
            partner_id: partner[i],
            valuation,
            sure_amount: sure,
            consistent,
            find_out_alone: alone,
            find_out_game: game,
            belief_partner_finds_out: b,
            indifference_belief: exp2_indifference_belief(agent, e2, sure)?,
        });
    }
    Ok(out)
}

/// One complete synthetic session.
pub fn run_session(config: &SessionConfig, seed: u64, session: usize) -> Result<SessionResult, XpError> {
    config.validate()?;
    let mut rng = session_rng(seed, session);
    let agents = draw_population(&config.population, &mut rng);
    let ext = config.extended_grid();
    let mut people = Vec::with_capacity(agents.len());
    let mut records = Vec::with_capacity(agents.len());
    let groups: Vec<usize> = (0..agents.len()).map(|i| i / config.group_size).collect();
    for (i, agent) in agents.into_iter().enumerate() {
        let (e1, e2) = elicit_thresholds(&agent, config)?;
        let x1 = tremble_amount(&agent, &ext, e1, &mut rng);
        let x2 = tremble_amount(&agent, &ext, e2, &mut rng);
        let guess = match agent.belief_rule {
            BeliefRule::Cournot => ext[rng.gen_range(0..ext.len())],
            BeliefRule::Fixed { prob } => {
                let idx = ((1.0 - prob) * config.grid.len() as f64).round() as usize;
                ext[idx.min(ext.len() - 1)]
            }
        };
        let plays = config.grid.iter().filter(|g| **g >= guess).count() as f64 / config.grid.len() as f64;
        let x3 = tremble_amount(&agent, &ext, decision3_threshold(&agent, plays, config)?, &mut rng);
        let kind = classify_type(x1, x2);
        records.push(AgentRecord {
            agent_id: i,
            group: groups[i],
            regret: agent.pref.regret,
            rejoice: agent.pref.rejoice,
            tremble: agent.tremble,
            x1,
            x2,
            x3,
            believed_partner_x3: guess,
            belief_partner_plays: plays,
            agent_type: kind,
        });
        people.push(Participant { agent, x1, x2, kind });
    }
    let rounds = play_decisions(session, &people, &groups, config, &mut rng)?;
    let exp2 = match &config.experiment2 {
        Some(e2) => run_exp2(&people, e2, &mut rng)?,
        None => Vec::new(),
    };
    Ok(SessionResult { session, agents: records, rounds, exp2 })
}

/// `replications` independent sessions, numbered from 0.
pub fn run_sessions(config: &SessionConfig, seed: u64, replications: usize) -> Result<Vec<SessionResult>, XpError> {
    config.validate()?;
    (0..replications).into_par_iter().map(|s| run_session(config, seed, s)).collect()
}

/// The game decisions of one fixed pair (no rematching), used to inspect the
/// protocol in isolation.
pub fn play_game_rounds(
    pair: [&SyntheticAgent; 2],
    config: &SessionConfig,
    seed: u64,
) -> Result<Vec<RoundRecord>, XpError> {
    let mut people = Vec::new();
    for agent in pair {
        agent.validate()?;
        let (x1, x2) = elicit_thresholds(agent, config)?;
        people.push(Participant { agent: agent.clone(), x1, x2, kind: classify_type(x1, x2) });
    }
    let cfg = SessionConfig { group_size: 2, population: Population::Agents(pair.map(Clone::clone).to_vec()), ..config.clone() };
    play_decisions(0, &people, &[0, 0], &cfg, &mut session_rng(seed, 0))
}

/// Two-sided exact sign test p-value for paired differences (ties dropped).
pub fn sign_test(diffs: impl IntoIterator<Item = i64>) -> Option<f64> {
    let (mut pos, mut neg) = (0u64, 0u64);
    for d in diffs {
        match d.cmp(&0) {
            std::cmp::Ordering::Greater => pos += 1,
            std::cmp::Ordering::Less => neg += 1,
            std::cmp::Ordering::Equal => {}
        }
    }
    let n = pos + neg;
    if n == 0 {
        return None;
    }
    let tail = Binomial::new(0.5, n).expect("valid binomial").cdf(pos.min(neg));
    Some((2.0 * tail).min(1.0))
}

/// Pearson correlation; `None` for fewer than two points or a constant series.
pub fn correlation(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

fn rate(hits: usize, total: usize) -> Cell {
    if total == 0 {
        Cell::Empty
    } else {
        Cell::float(hits as f64 / total as f64)
    }
}

fn mean(xs: &[f64]) -> Cell {
    if xs.is_empty() {
        Cell::Empty
    } else {
        Cell::float(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

fn choice_label(a: Action) -> &'static str {
    match a {
        Action::Safe => "safe",
        Action::Risky => "risky",
    }
}

/// Per-round records in the fixed export layout.
pub fn rounds_table(results: &[SessionResult]) -> Table {
    let mut t = Table::new(
        "rounds",
        &["session", "group", "pair", "round", "decision_id", "agent_id", "type", "choice", "belief", "past_regret", "payoff"],
    );
    for s in results {
        for r in &s.rounds {
            t.push(vec![
                r.session.into(),
                r.group.into(),
                r.pair.into(),
                r.round.into(),
                r.decision_id.into(),
                r.agent_id.into(),
                r.agent_type.label().into(),
                choice_label(r.choice).into(),
                r.belief.into(),
                r.past_regret.into(),
                r.payoff.as_units_f64().into(),
            ]);
        }
    }
    t
}

pub fn agents_table(results: &[SessionResult]) -> Table {
    let mut t = Table::new(
        "agents",
        &["session", "agent_id", "group", "regret", "rejoice", "tremble", "x1", "x2", "x3", "believed_partner_x3", "type"],
    );
    for s in results {
        for a in &s.agents {
            t.push(vec![
                s.session.into(),
                a.agent_id.into(),
                a.group.into(),
                a.regret.into(),
                a.rejoice.into(),
                a.tremble.into(),
                a.x1.as_units_f64().into(),
                a.x2.as_units_f64().into(),
                a.x3.as_units_f64().into(),
                a.believed_partner_x3.as_units_f64().into(),
                a.agent_type.label().into(),
            ]);
        }
    }
    t
}

/// Summary tables pooled over sessions: type shares, dominance-decision
/// lottery rates, mean thresholds with sign tests, find-out choice by belief,
/// belief/choice agreement, threshold/belief correlations and co-movement.
pub fn summarize_session(results: &[SessionResult]) -> Result<Vec<Table>, XpError> {
    let agents: Vec<&AgentRecord> = results.iter().flat_map(|s| &s.agents).collect();
    if agents.is_empty() {
        return Err(XpError::EmptySession);
    }
    let rounds: Vec<&RoundRecord> = results.iter().flat_map(|s| &s.rounds).collect();

    let mut shares = Table::new("type_shares", &["type", "count", "share"]);
    for ty in AgentType::ALL {
        let c = agents.iter().filter(|a| a.agent_type == ty).count();
        shares.push(vec![ty.label().into(), c.into(), rate(c, agents.len())]);
    }

    let mut dominance = Table::new("d4_d5_rates", &["type", "d4_rounds", "d4_lottery_rate", "d5_rounds", "d5_lottery_rate"]);
    for ty in AgentType::ALL {
        let pick = |id: usize| {
            let rs: Vec<_> = rounds.iter().filter(|r| r.agent_type == ty && r.decision_id == id).collect();
            (rs.len(), rs.iter().filter(|r| r.choice.is_risky()).count())
        };
        let (n4, r4) = pick(4);
        let (n5, r5) = pick(5);
        dominance.push(vec![ty.label().into(), n4.into(), rate(r4, n4), n5.into(), rate(r5, n5)]);
    }

    let mut thresholds = Table::new(
        "thresholds",
        &["type", "count", "mean_x1", "mean_x2", "mean_x3", "sign_p_x2_x1", "sign_p_x3_x1", "sign_p_x3_x2"],
    );
    for ty in AgentType::ALL {
        let sel: Vec<_> = agents.iter().filter(|a| a.agent_type == ty).collect();
        let col = |f: fn(&AgentRecord) -> Money| sel.iter().map(|a| f(a).as_units_f64()).collect::<Vec<_>>();
        let diff = |f: fn(&AgentRecord) -> Money, g: fn(&AgentRecord) -> Money| {
            sign_test(sel.iter().map(|a| (f(a) - g(a)).cents())).into()
        };
        thresholds.push(vec![
            ty.label().into(),
            sel.len().into(),
            mean(&col(|a| a.x1)),
            mean(&col(|a| a.x2)),
            mean(&col(|a| a.x3)),
            diff(|a| a.x2, |a| a.x1),
            diff(|a| a.x3, |a| a.x1),
            diff(|a| a.x3, |a| a.x2),
        ]);
    }

    let mut contingency = Table::new(
        "exp2_choices_beliefs",
        &["group", "choice", "believes_partner_finds_out", "believes_partner_does_not", "total"],
    );
    let exp2: Vec<&Exp2Record> = results.iter().flat_map(|s| &s.exp2).filter(|r| r.consistent).collect();
    for (label, averse) in [("regret_averse", true), ("non_regret_averse", false)] {
        for (choice, finds) in [("finds_out", true), ("does_not_find_out", false)] {
            let sel: Vec<_> = exp2.iter().filter(|r| r.find_out_alone != averse && r.find_out_game == finds).collect();
            let yes = sel.iter().filter(|r| r.belief_partner_finds_out >= 0.5).count();
            contingency.push(vec![label.into(), choice.into(), yes.into(), (sel.len() - yes).into(), sel.len().into()]);
        }
    }

    let repeated: Vec<_> = rounds.iter().filter(|r| matches!(r.decision, GameDecision::Between(_))).collect();
    let mut agreement = Table::new("d6_agreement", &["type", "rounds", "agreement_rate"]);
    let mut comovement = Table::new(
        "belief_choice_comovement",
        &["type", "rounds_belief_risky", "lottery_rate_belief_risky", "rounds_belief_safe", "lottery_rate_belief_safe", "difference"],
    );
    for ty in AgentType::ALL {
        let sel: Vec<_> = repeated.iter().filter(|r| r.agent_type == ty).collect();
        let agree = sel.iter().filter(|r| (r.belief >= 0.5) == r.choice.is_risky()).count();
        agreement.push(vec![ty.label().into(), sel.len().into(), rate(agree, sel.len())]);
        let (hi, lo): (Vec<_>, Vec<_>) = sel.iter().partition(|r| r.belief >= 0.5);
        let rate_of = |v: &[&&&RoundRecord]| {
            (!v.is_empty()).then(|| v.iter().filter(|r| r.choice.is_risky()).count() as f64 / v.len() as f64)
        };
        let (rh, rl) = (rate_of(&hi), rate_of(&lo));
        comovement.push(vec![
            ty.label().into(),
            hi.len().into(),
            rh.into(),
            lo.len().into(),
            rl.into(),
            rh.zip(rl).map(|(a, b)| a - b).into(),
        ]);
    }

    let mut chi = Table::new("threshold_belief_correlation", &["group", "count", "chi"]);
    for (label, averse) in [("regret_averse", true), ("non_regret_averse", false)] {
        let sel: Vec<_> = agents.iter().filter(|a| (a.agent_type == AgentType::RegretAverse) == averse).collect();
        let x3: Vec<f64> = sel.iter().map(|a| a.x3.as_units_f64()).collect();
        let guess: Vec<f64> = sel.iter().map(|a| a.believed_partner_x3.as_units_f64()).collect();
        chi.push(vec![label.into(), sel.len().into(), correlation(&x3, &guess).into()]);
    }

    Ok(vec![shares, dominance, thresholds, contingency, agreement, chi, comovement])
}
