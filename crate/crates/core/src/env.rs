//! Lottery environments, product state spaces, observation sets and the
//! regret-relevant partitions they induce.
//!
//! A state is a bit mask over the risky lotteries (bit `i` set means lottery
//! `i` paid its high outcome). Every enumeration in this module walks masks in
//! ascending order, so partitions and reports are byte-stable.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::money::Money;
use crate::scalar::Scalar;

/// Upper bound on risky lotteries for exhaustive state enumeration.
pub const MAX_RISKY: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnvError {
    #[error("{n} risky lotteries exceed the enumeration limit of {MAX_RISKY}")]
    TooManyLotteries { n: usize },
    #[error("invalid choice set: {0}")]
    InvalidChoiceSet(String),
    #[error("state has {state_len} components but lottery {lottery} needs index {needed}")]
    DimensionMismatch {
        lottery: LotteryId,
        needed: usize,
        state_len: usize,
    },
    #[error("unknown lottery {0}")]
    UnknownLottery(LotteryId),
    #[error("domain mismatch: {0}")]
    DomainMismatch(String),
    #[error("invalid observation map: {0}")]
    InvalidObservation(String),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
}

/// Identifies a lottery within a choice set. Risky lotteries sort before the safe one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LotteryId {
    /// Zero-based risky index; displayed one-based as `r1`, `r2`, ...
    Risky(usize),
    Safe,
}

impl fmt::Display for LotteryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LotteryId::Risky(i) => write!(f, "r{}", i + 1),
            LotteryId::Safe => f.write_str("safe"),
        }
    }
}

impl FromStr for LotteryId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "safe" || s == "s" {
            return Ok(LotteryId::Safe);
        }
        s.strip_prefix('r')
            .and_then(|rest| rest.parse::<usize>().ok())
            .filter(|&k| k >= 1)
            .map(|k| LotteryId::Risky(k - 1))
            .ok_or_else(|| format!("expected `safe` or `r<k>` with k >= 1, got `{s}`"))
    }
}

impl Serialize for LotteryId {
    fn serialize<Ser: Serializer>(&self, serializer: Ser) -> Result<Ser::Ok, Ser::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LotteryId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A Bernoulli lottery paying `high` with probability `p`, else `low`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskyLottery<S> {
    pub low: Money,
    pub high: Money,
    pub p: S,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LotteryKind<S> {
    Risky(RiskyLottery<S>),
    Safe { value: Money },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lottery<S> {
    pub id: LotteryId,
    pub kind: LotteryKind<S>,
}

/// `n` independent risky lotteries plus one safe lottery.
///
/// Construction enforces: `low < high`, `0 < p < 1`, no payoff ties across
/// all listed outcomes, and `max(lows) < safe < min(highs)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChoiceSetRepr<S>", bound(deserialize = "S: Scalar + Deserialize<'de>"))]
pub struct ChoiceSet<S> {
    risky: Vec<RiskyLottery<S>>,
    safe: Money,
}

#[derive(Deserialize)]
struct ChoiceSetRepr<S> {
    risky: Vec<RiskyLottery<S>>,
    safe: Money,
}

impl<S: Scalar> TryFrom<ChoiceSetRepr<S>> for ChoiceSet<S> {
    type Error = EnvError;
    fn try_from(repr: ChoiceSetRepr<S>) -> Result<Self, Self::Error> {
        ChoiceSet::new(repr.risky, repr.safe)
    }
}

impl<S: Scalar> ChoiceSet<S> {
    pub fn new(risky: Vec<RiskyLottery<S>>, safe: Money) -> Result<Self, EnvError> {
        if risky.is_empty() {
            return Err(EnvError::InvalidChoiceSet("at least one risky lottery is required".into()));
        }
        for (i, l) in risky.iter().enumerate() {
            let id = LotteryId::Risky(i);
            if l.low >= l.high {
                return Err(EnvError::InvalidChoiceSet(format!(
                    "{id}: low {} must be below high {}",
                    l.low, l.high
                )));
            }
            if !l.p.is_open_unit() {
                return Err(EnvError::InvalidChoiceSet(format!(
                    "{id}: success probability {} must lie in (0, 1)",
                    l.p
                )));
            }
        }
        let mut seen = BTreeSet::new();
        seen.insert(safe);
        for l in &risky {
            for m in [l.low, l.high] {
                if !seen.insert(m) {
                    return Err(EnvError::InvalidChoiceSet(format!("payoff tie at {m}")));
                }
            }
        }
        let max_low = risky.iter().map(|l| l.low).max().expect("nonempty");
        let min_high = risky.iter().map(|l| l.high).min().expect("nonempty");
        if !(max_low < safe && safe < min_high) {
            return Err(EnvError::InvalidChoiceSet(format!(
                "safe value {safe} must lie strictly between max low {max_low} and min high {min_high}"
            )));
        }
        Ok(ChoiceSet { risky, safe })
    }

    /// Builds a choice set from a flat lottery list containing exactly one safe lottery.
    pub fn from_lotteries(lotteries: Vec<Lottery<S>>) -> Result<Self, EnvError> {
        let mut risky = Vec::new();
        let mut safe = None;
        for l in lotteries {
            match l.kind {
                LotteryKind::Risky(r) => risky.push(r),
                LotteryKind::Safe { value } => {
                    if safe.replace(value).is_some() {
                        return Err(EnvError::InvalidChoiceSet("more than one safe lottery".into()));
                    }
                }
            }
        }
        let safe = safe.ok_or_else(|| EnvError::InvalidChoiceSet("no safe lottery".into()))?;
        ChoiceSet::new(risky, safe)
    }

    /// Number of risky lotteries.
    pub fn n(&self) -> usize {
        self.risky.len()
    }

    pub fn risky(&self) -> &[RiskyLottery<S>] {
        &self.risky
    }

    pub fn safe_value(&self) -> Money {
        self.safe
    }

    /// All lottery ids in canonical order: risky by index, then safe.
    pub fn ids(&self) -> Vec<LotteryId> {
        (0..self.n()).map(LotteryId::Risky).chain([LotteryId::Safe]).collect()
    }

    pub fn contains(&self, id: LotteryId) -> bool {
        match id {
            LotteryId::Risky(i) => i < self.n(),
            LotteryId::Safe => true,
        }
    }

    pub fn lottery(&self, id: LotteryId) -> Result<Lottery<S>, EnvError> {
        match id {
            LotteryId::Risky(i) => self
                .risky
                .get(i)
                .map(|r| Lottery { id, kind: LotteryKind::Risky(*r) })
                .ok_or(EnvError::UnknownLottery(id)),
            LotteryId::Safe => Ok(Lottery { id, kind: LotteryKind::Safe { value: self.safe } }),
        }
    }

    pub fn lotteries(&self) -> Vec<Lottery<S>> {
        self.ids()
            .into_iter()
            .map(|id| self.lottery(id).expect("own id"))
            .collect()
    }

    /// Outcome of lottery `id` in the state with success mask `mask`.
    pub fn outcome_at(&self, id: LotteryId, mask: u32) -> Result<Money, EnvError> {
        match id {
            LotteryId::Safe => Ok(self.safe),
            LotteryId::Risky(i) => {
                let l = self.risky.get(i).ok_or(EnvError::UnknownLottery(id))?;
                Ok(if mask & (1 << i) != 0 { l.high } else { l.low })
            }
        }
    }

    /// The same lotteries relabelled so that high outcomes strictly decrease.
    /// Returns the relabelled set and, for each new index, the old index.
    pub fn relabelled_by_high(&self) -> (ChoiceSet<S>, Vec<usize>) {
        let mut order: Vec<usize> = (0..self.n()).collect();
        order.sort_by(|&a, &b| self.risky[b].high.cmp(&self.risky[a].high));
        let risky = order.iter().map(|&i| self.risky[i]).collect();
        (ChoiceSet { risky, safe: self.safe }, order)
    }

    /// Every distinct monetary outcome, ascending.
    pub fn outcome_values(&self) -> Vec<Money> {
        let mut v: Vec<Money> = self
            .risky
            .iter()
            .flat_map(|l| [l.low, l.high])
            .chain([self.safe])
            .collect();
        v.sort();
        v
    }
}

/// One joint realization of the risky lotteries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State<S> {
    /// Bit `i` set iff risky lottery `i` succeeded.
    pub successes: u32,
    /// Number of risky lotteries the mask ranges over.
    pub len: usize,
    pub prob: S,
}

impl<S> State<S> {
    pub fn succeeded(&self, i: usize) -> bool {
        self.successes & (1 << i) != 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace<S> {
    n: usize,
    states: Vec<State<S>>,
}

impl<S: Scalar> StateSpace<S> {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn states(&self) -> &[State<S>] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn total_probability(&self) -> S {
        self.states.iter().fold(S::zero(), |acc, s| acc + s.prob)
    }
}

/// Enumerates all `2^n` states in ascending mask order with product probabilities.
pub fn build_state_space<S: Scalar>(choice_set: &ChoiceSet<S>) -> Result<StateSpace<S>, EnvError> {
    let n = choice_set.n();
    if n > MAX_RISKY {
        return Err(EnvError::TooManyLotteries { n });
    }
    let states = (0..1u32 << n)
        .map(|mask| {
            let prob = choice_set.risky.iter().enumerate().fold(S::one(), |acc, (i, l)| {
                if mask & (1 << i) != 0 {
                    acc * l.p
                } else {
                    acc * (S::one() - l.p)
                }
            });
            State { successes: mask, len: n, prob }
        })
        .collect();
    Ok(StateSpace { n, states })
}

/// Outcome of a single lottery in a state.
pub fn lottery_outcome<S>(lottery: &Lottery<S>, state: &State<S>) -> Result<Money, EnvError> {
    match &lottery.kind {
        LotteryKind::Safe { value } => Ok(*value),
        LotteryKind::Risky(r) => {
            let i = match lottery.id {
                LotteryId::Risky(i) => i,
                LotteryId::Safe => {
                    return Err(EnvError::InvalidChoiceSet("risky payoff labelled safe".into()))
                }
            };
            if i >= state.len {
                return Err(EnvError::DimensionMismatch {
                    lottery: lottery.id,
                    needed: i,
                    state_len: state.len,
                });
            }
            Ok(if state.succeeded(i) { r.high } else { r.low })
        }
    }
}

/// For each chosen lottery `k`, the set `O_k` of lotteries whose outcomes are
/// learned ex post. Always contains `k` itself and the safe lottery.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationMap {
    observed: BTreeMap<LotteryId, BTreeSet<LotteryId>>,
}

impl ObservationMap {
    pub fn new<S: Scalar>(
        choice_set: &ChoiceSet<S>,
        observed: BTreeMap<LotteryId, BTreeSet<LotteryId>>,
    ) -> Result<Self, EnvError> {
        for id in choice_set.ids() {
            let set = observed
                .get(&id)
                .ok_or_else(|| EnvError::InvalidObservation(format!("no observation set for {id}")))?;
            if !set.contains(&id) {
                return Err(EnvError::InvalidObservation(format!(
                    "the chosen lottery {id} must be in its own observation set"
                )));
            }
            if !set.contains(&LotteryId::Safe) {
                return Err(EnvError::InvalidObservation(format!(
                    "the safe lottery must be observed when {id} is chosen"
                )));
            }
            if let Some(bad) = set.iter().find(|l| !choice_set.contains(**l)) {
                return Err(EnvError::UnknownLottery(*bad));
            }
        }
        if let Some(extra) = observed.keys().find(|k| !choice_set.contains(**k)) {
            return Err(EnvError::UnknownLottery(*extra));
        }
        Ok(ObservationMap { observed })
    }

    /// Every outcome is learned whatever is chosen.
    pub fn full<S: Scalar>(choice_set: &ChoiceSet<S>) -> Self {
        let all: BTreeSet<LotteryId> = choice_set.ids().into_iter().collect();
        ObservationMap {
            observed: choice_set.ids().into_iter().map(|k| (k, all.clone())).collect(),
        }
    }

    /// Only the chosen lottery and the safe lottery are learned.
    pub fn minimal<S: Scalar>(choice_set: &ChoiceSet<S>) -> Self {
        ObservationMap {
            observed: choice_set
                .ids()
                .into_iter()
                .map(|k| (k, [k, LotteryId::Safe].into_iter().collect()))
                .collect(),
        }
    }

    /// Full observation except that choosing `chosen` reveals only `revealed` (plus
    /// `chosen` and the safe lottery).
    pub fn full_except<S: Scalar>(
        choice_set: &ChoiceSet<S>,
        chosen: LotteryId,
        revealed: &[LotteryId],
    ) -> Result<Self, EnvError> {
        let mut observed = Self::full(choice_set).observed;
        let set: BTreeSet<LotteryId> =
            revealed.iter().copied().chain([chosen, LotteryId::Safe]).collect();
        observed.insert(chosen, set);
        ObservationMap::new(choice_set, observed)
    }

    pub fn observed(&self, chosen: LotteryId) -> Result<&BTreeSet<LotteryId>, EnvError> {
        self.observed.get(&chosen).ok_or(EnvError::UnknownLottery(chosen))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&LotteryId, &BTreeSet<LotteryId>)> {
        self.observed.iter()
    }

    /// True when every `O_k` here contains the corresponding set in `other`.
    pub fn contains_map(&self, other: &ObservationMap) -> bool {
        self.observed.len() == other.observed.len()
            && self.observed.iter().all(|(k, set)| {
                other.observed.get(k).is_some_and(|o| o.is_subset(set))
            })
    }
}

/// One block of a partition, optionally tagged with the lottery whose
/// "best learned" event it realizes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Block {
    pub label: Option<LotteryId>,
    pub states: Vec<usize>,
}

/// A partition of the state indices `0..domain` into disjoint nonempty blocks.
///
/// Blocks are stored with sorted contents and ordered by their smallest
/// element. Equality compares block contents only, not labels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Partition {
    domain: usize,
    blocks: Vec<Block>,
}

impl PartialEq for Partition {
    fn eq(&self, other: &Self) -> bool {
        self.domain == other.domain
            && self.blocks.len() == other.blocks.len()
            && self.blocks.iter().zip(&other.blocks).all(|(a, b)| a.states == b.states)
    }
}

impl Eq for Partition {}

impl Partition {
    /// Validates and canonicalizes unlabelled blocks.
    pub fn from_blocks(domain: usize, blocks: Vec<Vec<usize>>) -> Result<Self, EnvError> {
        Self::from_labelled(domain, blocks.into_iter().map(|b| (None, b)).collect())
    }

    fn from_labelled(domain: usize, blocks: Vec<(Option<LotteryId>, Vec<usize>)>) -> Result<Self, EnvError> {
        let mut seen = vec![false; domain];
        let mut out = Vec::with_capacity(blocks.len());
        for (label, mut states) in blocks {
            if states.is_empty() {
                return Err(EnvError::InvalidPartition("empty block".into()));
            }
            states.sort_unstable();
            for &s in &states {
                if s >= domain {
                    return Err(EnvError::InvalidPartition(format!("state {s} outside domain {domain}")));
                }
                if std::mem::replace(&mut seen[s], true) {
                    return Err(EnvError::InvalidPartition(format!("state {s} in more than one block")));
                }
            }
            out.push(Block { label, states });
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(EnvError::InvalidPartition(format!("state {missing} not covered")));
        }
        out.sort_by_key(|b| b.states[0]);
        Ok(Partition { domain, blocks: out })
    }

    pub fn domain(&self) -> usize {
        self.domain
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// The block containing `state`.
    pub fn block_of(&self, state: usize) -> Option<&Block> {
        self.blocks.iter().find(|b| b.states.binary_search(&state).is_ok())
    }

    fn assignment(&self) -> Vec<usize> {
        let mut owner = vec![0; self.domain];
        for (bi, b) in self.blocks.iter().enumerate() {
            for &s in &b.states {
                owner[s] = bi;
            }
        }
        owner
    }

    /// Every block of `self` lies inside some block of `other`.
    pub fn refines(&self, other: &Partition) -> bool {
        let owner = other.assignment();
        self.blocks.iter().all(|b| {
            let first = owner[b.states[0]];
            b.states.iter().all(|&s| owner[s] == first)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PartitionOrder {
    Finer,
    Coarser,
    Equal,
    Incomparable,
}

pub fn compare_partitions(a: &Partition, b: &Partition) -> Result<PartitionOrder, EnvError> {
    if a.domain != b.domain {
        return Err(EnvError::DomainMismatch(format!(
            "partitions over {} and {} states",
            a.domain, b.domain
        )));
    }
    Ok(match (a.refines(b), b.refines(a)) {
        (true, true) => PartitionOrder::Equal,
        (true, false) => PartitionOrder::Finer,
        (false, true) => PartitionOrder::Coarser,
        (false, false) => PartitionOrder::Incomparable,
    })
}

/// Groups states by the best-performing lottery among those learned when
/// `chosen` is picked. Empty events are omitted.
pub fn derive_partition<S: Scalar>(
    choice_set: &ChoiceSet<S>,
    obs: &ObservationMap,
    chosen: LotteryId,
) -> Result<Partition, EnvError> {
    if !choice_set.contains(chosen) {
        return Err(EnvError::UnknownLottery(chosen));
    }
    let n = choice_set.n();
    if n > MAX_RISKY {
        return Err(EnvError::TooManyLotteries { n });
    }
    let learned = obs.observed(chosen)?;
    let mut groups: BTreeMap<LotteryId, Vec<usize>> = BTreeMap::new();
    for mask in 0..1u32 << n {
        let mut best: Option<(Money, LotteryId)> = None;
        for &h in learned {
            let v = choice_set.outcome_at(h, mask)?;
            if best.is_none_or(|(bv, _)| v > bv) {
                best = Some((v, h));
            }
        }
        let (_, label) = best.expect("observation sets are nonempty");
        groups.entry(label).or_default().push(mask as usize);
    }
    Partition::from_labelled(1 << n, groups.into_iter().map(|(l, s)| (Some(l), s)).collect())
}

/// The per-choice collection of regret-relevant partitions.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoEnvironment {
    partitions: BTreeMap<LotteryId, Partition>,
    source: ObservationMap,
}

impl InfoEnvironment {
    pub fn derive<S: Scalar>(choice_set: &ChoiceSet<S>, obs: &ObservationMap) -> Result<Self, EnvError> {
        let partitions = choice_set
            .ids()
            .into_iter()
            .map(|k| derive_partition(choice_set, obs, k).map(|p| (k, p)))
            .collect::<Result<_, _>>()?;
        Ok(InfoEnvironment { partitions, source: obs.clone() })
    }

    pub fn partition(&self, chosen: LotteryId) -> Result<&Partition, EnvError> {
        self.partitions.get(&chosen).ok_or(EnvError::UnknownLottery(chosen))
    }

    pub fn partitions(&self) -> &BTreeMap<LotteryId, Partition> {
        &self.partitions
    }

    pub fn source(&self) -> &ObservationMap {
        &self.source
    }

    /// Re-derives every partition from the source map and checks it matches.
    pub fn is_consistent<S: Scalar>(&self, choice_set: &ChoiceSet<S>) -> bool {
        InfoEnvironment::derive(choice_set, &self.source).is_ok_and(|e| e.partitions == self.partitions)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnvironmentOrder {
    MoreInformative,
    LessInformative,
    Equal,
    Incomparable,
}

/// Blockwise refinement across every choice, strict for at least one.
pub fn compare_environments(a: &InfoEnvironment, b: &InfoEnvironment) -> Result<EnvironmentOrder, EnvError> {
    if a.partitions.len() != b.partitions.len() || a.partitions.keys().ne(b.partitions.keys()) {
        return Err(EnvError::DomainMismatch("environments cover different choice sets".into()));
    }
    let mut a_finer_somewhere = false;
    let mut b_finer_somewhere = false;
    let mut comparable_a_finer = true;
    let mut comparable_b_finer = true;
    for (k, pa) in &a.partitions {
        match compare_partitions(pa, &b.partitions[k])? {
            PartitionOrder::Equal => {}
            PartitionOrder::Finer => {
                a_finer_somewhere = true;
                comparable_b_finer = false;
            }
            PartitionOrder::Coarser => {
                b_finer_somewhere = true;
                comparable_a_finer = false;
            }
            PartitionOrder::Incomparable => return Ok(EnvironmentOrder::Incomparable),
        }
    }
    Ok(match (a_finer_somewhere, b_finer_somewhere) {
        (false, false) => EnvironmentOrder::Equal,
        (true, false) if comparable_a_finer => EnvironmentOrder::MoreInformative,
        (false, true) if comparable_b_finer => EnvironmentOrder::LessInformative,
        _ => EnvironmentOrder::Incomparable,
    })
}
