//! Single-agent evaluation: choiceless and total utility, regret and rejoice,
//! stochastic ex-post information, preference thresholds and BDM elicitation.
//!
//! Regret is linear in the utility shortfall against the best *learned*
//! outcome and clamped at zero. Rejoice is a separate bonus paid on the margin
//! over the best learned alternative when the choice turns out optimal.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{
    build_state_space, compare_environments, ChoiceSet, EnvError, EnvironmentOrder, InfoEnvironment,
    LotteryId, ObservationMap, State,
};
use crate::money::Money;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecideError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("{0}")]
    OutOfRange(String),
    #[error("amount {0} lies outside the utility function's domain")]
    OutOfDomain(Money),
    #[error("invalid utility function: {0}")]
    InvalidUtility(String),
    #[error("invalid information structure: {0}")]
    InvalidInfo(String),
    #[error("the BDM grid is empty")]
    EmptyGrid,
    #[error("BDM grid must be strictly ascending")]
    UnsortedGrid,
    #[error("environments are not ordered by informativeness ({0:?})")]
    NotComparable(EnvironmentOrder),
}

/// Choiceless utility over money.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum UtilityFunction<S> {
    /// `scale * units + shift`, with `scale > 0`.
    Linear { scale: S, shift: S },
    /// Piecewise linear through `(low, 0)`, `(safe, 1)` and `(high, u_high)`.
    Normalized2 { low: Money, safe: Money, high: Money, u_high: S },
    /// Piecewise linear between strictly increasing knots.
    Table { knots: Vec<(Money, S)> },
}

impl<S: Scalar> UtilityFunction<S> {
    pub fn linear() -> Self {
        UtilityFunction::Linear { scale: S::one(), shift: S::zero() }
    }

    pub fn validate(&self) -> Result<(), DecideError> {
        match self {
            UtilityFunction::Linear { scale, .. } => {
                if *scale <= S::zero() {
                    return Err(DecideError::InvalidUtility(format!("scale {scale} must be positive")));
                }
            }
            UtilityFunction::Normalized2 { low, safe, high, u_high } => {
                if !(low < safe && safe < high) {
                    return Err(DecideError::InvalidUtility(
                        "normalized utility needs low < safe < high".into(),
                    ));
                }
                if *u_high <= S::one() {
                    return Err(DecideError::InvalidUtility(format!(
                        "normalized high utility {u_high} must exceed 1"
                    )));
                }
            }
            UtilityFunction::Table { knots } => {
                if knots.is_empty() {
                    return Err(DecideError::InvalidUtility("table has no knots".into()));
                }
                if knots.windows(2).any(|w| w[1].0 <= w[0].0 || w[1].1 <= w[0].1) {
                    return Err(DecideError::InvalidUtility(
                        "table knots must be strictly increasing in money and utility".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, m: Money) -> Result<S, DecideError> {
        match self {
            UtilityFunction::Linear { scale, shift } => Ok(*scale * m.to_scalar::<S>() + *shift),
            UtilityFunction::Normalized2 { low, safe, high, u_high } => interpolate(
                &[(*low, S::zero()), (*safe, S::one()), (*high, *u_high)],
                m,
            ),
            UtilityFunction::Table { knots } => interpolate(knots, m),
        }
    }

    /// Money (in currency units) at which utility equals `target`; closed form for `Linear` only.
    pub fn inverse(&self, target: S) -> Option<S> {
        match self {
            UtilityFunction::Linear { scale, shift } => Some((target - *shift) / *scale),
            _ => None,
        }
    }
}

fn interpolate<S: Scalar>(knots: &[(Money, S)], m: Money) -> Result<S, DecideError> {
    let idx = knots.partition_point(|(k, _)| *k < m);
    if let Some((k, v)) = knots.get(idx) {
        if *k == m {
            return Ok(*v);
        }
    }
    if idx == 0 || idx == knots.len() {
        return Err(DecideError::OutOfDomain(m));
    }
    let (m0, u0) = knots[idx - 1];
    let (m1, u1) = knots[idx];
    let t = S::from_int((m - m0).cents()) / S::from_int((m1 - m0).cents());
    Ok(u0 + (u1 - u0) * t)
}

/// Regret and rejoice coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "S: Scalar + Deserialize<'de>"))]
pub struct RegretPreference<S> {
    #[serde(alias = "kappa1")]
    pub regret: S,
    #[serde(alias = "kappa2", default = "zero")]
    pub rejoice: S,
}

impl<S: Scalar> RegretPreference<S> {
    pub fn new(regret: S, rejoice: S) -> Result<Self, DecideError> {
        let pref = RegretPreference { regret, rejoice };
        pref.validate()?;
        Ok(pref)
    }

    pub fn regret_only(regret: S) -> Self {
        RegretPreference { regret, rejoice: S::zero() }
    }

    pub fn neutral() -> Self {
        RegretPreference { regret: S::zero(), rejoice: S::zero() }
    }

    pub fn validate(&self) -> Result<(), DecideError> {
        if self.regret < S::zero() || self.rejoice < S::zero() {
            return Err(DecideError::OutOfRange(format!(
                "regret ({}) and rejoice ({}) coefficients must be non-negative",
                self.regret, self.rejoice
            )));
        }
        Ok(())
    }
}

fn zero<S: Scalar>() -> S {
    S::zero()
}

/// What is learned ex post, possibly at random.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StochasticInfo<S> {
    Deterministic(ObservationMap),
    /// After choosing the safe lottery every risky outcome is learned with
    /// probability `q` (otherwise none is); risky choices learn everything.
    LearnProbability(S),
    /// A distribution over whole observation maps.
    Mixture(Vec<(S, ObservationMap)>),
}

impl<S: Scalar> StochasticInfo<S> {
    /// Weighted observation maps, validated against `choice_set`.
    pub fn components(&self, choice_set: &ChoiceSet<S>) -> Result<Vec<(S, ObservationMap)>, DecideError> {
        match self {
            StochasticInfo::Deterministic(obs) => Ok(vec![(S::one(), obs.clone())]),
            StochasticInfo::LearnProbability(q) => {
                if !q.is_unit() {
                    return Err(DecideError::InvalidInfo(format!("learning probability {q} outside [0, 1]")));
                }
                let full = ObservationMap::full(choice_set);
                let blind = ObservationMap::full_except(choice_set, LotteryId::Safe, &[])?;
                Ok(vec![(*q, full), (S::one() - *q, blind)])
            }
            StochasticInfo::Mixture(parts) => {
                if parts.is_empty() {
                    return Err(DecideError::InvalidInfo("empty mixture".into()));
                }
                let mut total = S::zero();
                for (w, obs) in parts {
                    if !w.is_unit() {
                        return Err(DecideError::InvalidInfo(format!("mixture weight {w} outside [0, 1]")));
                    }
                    ObservationMap::new(choice_set, obs.iter().map(|(k, v)| (*k, v.clone())).collect())?;
                    total = total + *w;
                }
                let slack = S::lit(1e-12).max_of(S::tolerance() / S::from_int(1000));
                if (total - S::one()).abs() > slack {
                    return Err(DecideError::InvalidInfo(format!("mixture weights sum to {total}, not 1")));
                }
                Ok(parts.clone())
            }
        }
    }
}

/// Realized total utility of `chosen` in `state` given what `obs` reveals.
pub fn total_utility<S: Scalar>(
    choice_set: &ChoiceSet<S>,
    chosen: LotteryId,
    state: &State<S>,
    obs: &ObservationMap,
    pref: &RegretPreference<S>,
    u: &UtilityFunction<S>,
) -> Result<S, DecideError> {
    if !choice_set.contains(chosen) {
        return Err(EnvError::UnknownLottery(chosen).into());
    }
    if state.len != choice_set.n() {
        return Err(EnvError::DomainMismatch(format!(
            "state over {} lotteries, choice set has {}",
            state.len,
            choice_set.n()
        ))
        .into());
    }
    let mask = state.successes;
    let own = u.eval(choice_set.outcome_at(chosen, mask)?)?;
    let mut best_alternative: Option<S> = None;
    for &h in obs.observed(chosen)? {
        if h == chosen {
            continue;
        }
        let v = u.eval(choice_set.outcome_at(h, mask)?)?;
        best_alternative = Some(best_alternative.map_or(v, |b| b.max_of(v)));
    }
    let best_learned = best_alternative.map_or(own, |b| b.max_of(own));
    let regret = (best_learned - own).max_of(S::zero());
    let value = own - pref.regret * regret;
    if pref.rejoice.is_zero() {
        return Ok(value);
    }
    let margin = best_alternative.map_or(S::zero(), |b| (own - b).max_of(S::zero()));
    Ok(value + pref.rejoice * margin)
}

/// Expectation of [`total_utility`] over states and over the information distribution.
pub fn expected_total_utility<S: Scalar>(
    chosen: LotteryId,
    info: &StochasticInfo<S>,
    pref: &RegretPreference<S>,
    u: &UtilityFunction<S>,
    choice_set: &ChoiceSet<S>,
) -> Result<S, DecideError> {
    let space = build_state_space(choice_set)?;
    let mut total = S::zero();
    for (w, obs) in info.components(choice_set)? {
        if w.is_zero() {
            continue;
        }
        let mut inner = S::zero();
        for state in space.states() {
            inner = inner + state.prob * total_utility(choice_set, chosen, state, &obs, pref, u)?;
        }
        total = total + w * inner;
    }
    Ok(total)
}

/// Expected choiceless utility (no regret, no rejoice).
pub fn expected_choiceless_utility<S: Scalar>(
    chosen: LotteryId,
    u: &UtilityFunction<S>,
    choice_set: &ChoiceSet<S>,
) -> Result<S, DecideError> {
    let space = build_state_space(choice_set)?;
    space.states().iter().try_fold(S::zero(), |acc, state| {
        Ok(acc + state.prob * u.eval(choice_set.outcome_at(chosen, state.successes)?)?)
    })
}

/// Maximizer of expected total utility. Ties go to the safe lottery, then to
/// the lowest risky index.
pub fn optimal_choice<S: Scalar>(
    choice_set: &ChoiceSet<S>,
    info: &StochasticInfo<S>,
    pref: &RegretPreference<S>,
    u: &UtilityFunction<S>,
) -> Result<LotteryId, DecideError> {
    let order = std::iter::once(LotteryId::Safe).chain((0..choice_set.n()).map(LotteryId::Risky));
    let mut best: Option<(LotteryId, S)> = None;
    for id in order {
        let v = expected_total_utility(id, info, pref, u, choice_set)?;
        if best.is_none_or(|(_, bv)| v.definitely_gt(bv)) {
            best = Some((id, v));
        }
    }
    Ok(best.expect("choice set is nonempty").0)
}

/// Utilities of the three outcomes in a one-risky-lottery problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryUtilities<S> {
    pub low: S,
    pub safe: S,
    pub high: S,
}

impl<S: Scalar> BinaryUtilities<S> {
    /// The normalized scale: `u(low) = 0`, `u(safe) = 1`.
    pub fn normalized(high: S) -> Self {
        BinaryUtilities { low: S::zero(), safe: S::one(), high }
    }

    pub fn from_money(u: &UtilityFunction<S>, low: Money, safe: Money, high: Money) -> Result<Self, DecideError> {
        Ok(BinaryUtilities { low: u.eval(low)?, safe: u.eval(safe)?, high: u.eval(high)? })
    }

    /// Total utility of ending with `own` after learning that the alternative paid `other`.
    fn compared(own: S, other: S, pref: &RegretPreference<S>) -> S {
        let value = own - pref.regret * (other - own).max_of(S::zero());
        if pref.rejoice.is_zero() {
            value
        } else {
            value + pref.rejoice * (own - other).max_of(S::zero())
        }
    }

    /// Expected total utility of the safe choice when the risky outcome is learned with probability `q`.
    pub fn expected_safe(&self, p: S, q: S, pref: &RegretPreference<S>) -> S {
        let one = S::one();
        let blind = self.safe;
        let on_success = if q.is_zero() { blind } else { blind + q * (Self::compared(blind, self.high, pref) - blind) };
        let on_failure = if q.is_zero() { blind } else { blind + q * (Self::compared(blind, self.low, pref) - blind) };
        p * on_success + (one - p) * on_failure
    }

    /// Expected total utility of the risky choice (its outcome and the safe value are always learned).
    pub fn expected_risky(&self, p: S, pref: &RegretPreference<S>) -> S {
        let one = S::one();
        p * Self::compared(self.high, self.safe, pref) + (one - p) * Self::compared(self.low, self.safe, pref)
    }

    /// Weak preference for the risky lottery (indifference resolves to risky).
    pub fn prefers_risky(&self, p: S, q: S, pref: &RegretPreference<S>) -> bool {
        self.expected_risky(p, pref).approx_ge(self.expected_safe(p, q, pref))
    }
}

/// Smallest normalized high-outcome utility at which the risky lottery is
/// weakly preferred, for success probability `p`, learning probability `q`
/// and regret coefficient `regret`.
pub fn risky_threshold<S: Scalar>(p: S, q: S, regret: S) -> Result<S, DecideError> {
    if !p.is_open_unit() {
        return Err(DecideError::OutOfRange(format!("p = {p} must lie in (0, 1)")));
    }
    if !q.is_unit() {
        return Err(DecideError::OutOfRange(format!("q = {q} must lie in [0, 1]")));
    }
    if regret < S::zero() {
        return Err(DecideError::OutOfRange(format!("regret coefficient {regret} must be non-negative")));
    }
    let one = S::one();
    Ok((one / p) * (one + regret * (one - p * (one - q))) / (one + q * regret))
}

/// Converts a normalized-scale threshold back to money (currency units)
/// when `u` has a closed-form inverse.
pub fn threshold_in_money<S: Scalar>(
    u: &UtilityFunction<S>,
    low: Money,
    safe: Money,
    normalized: S,
) -> Result<Option<S>, DecideError> {
    let (ul, us) = (u.eval(low)?, u.eval(safe)?);
    Ok(u.inverse(ul + normalized * (us - ul)))
}

/// A one-risky-lottery elicitation task: the lottery pays the stated amount
/// with probability `p` and `low` otherwise, against the sure amount `safe`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BdmTask<S> {
    pub p: S,
    pub low: Money,
    pub safe: Money,
    pub grid: Vec<Money>,
}

impl<S: Scalar> BdmTask<S> {
    /// The 5..=15 grid against a sure 5 with a 50% lottery paying 0 otherwise.
    pub fn standard() -> Self {
        BdmTask {
            p: S::ratio(1, 2),
            low: Money::ZERO,
            safe: Money::from_units(5),
            grid: (5..=15).map(Money::from_units).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), DecideError> {
        if self.grid.is_empty() {
            return Err(DecideError::EmptyGrid);
        }
        if self.grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(DecideError::UnsortedGrid);
        }
        if !self.p.is_open_unit() {
            return Err(DecideError::OutOfRange(format!("p = {} must lie in (0, 1)", self.p)));
        }
        Ok(())
    }

    /// Spacing between the last two grid points (one step if the grid is a singleton).
    pub fn step(&self) -> Money {
        match self.grid.as_slice() {
            [.., a, b] => *b - *a,
            _ => Money::from_units(1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BdmOutcome {
    Switch(Money),
    /// No grid value makes the lottery acceptable.
    NoSwitch,
}

impl BdmOutcome {
    /// The stated threshold, with `NoSwitch` mapped one step past the grid maximum.
    pub fn as_amount<S: Scalar>(self, task: &BdmTask<S>) -> Money {
        match self {
            BdmOutcome::Switch(m) => m,
            BdmOutcome::NoSwitch => *task.grid.last().expect("validated grid") + task.step(),
        }
    }
}

/// Smallest grid amount at which the risky lottery is weakly preferred to the
/// sure amount when the risky outcome is learned with probability `q` after
/// choosing the sure amount.
pub fn bdm_threshold<S: Scalar>(
    pref: &RegretPreference<S>,
    u: &UtilityFunction<S>,
    task: &BdmTask<S>,
    q: S,
) -> Result<BdmOutcome, DecideError> {
    task.validate()?;
    if !q.is_unit() {
        return Err(DecideError::OutOfRange(format!("q = {q} must lie in [0, 1]")));
    }
    let (ul, us) = (u.eval(task.low)?, u.eval(task.safe)?);
    for &x in &task.grid {
        let utils = BinaryUtilities { low: ul, safe: us, high: u.eval(x)? };
        if utils.prefers_risky(task.p, q, pref) {
            return Ok(BdmOutcome::Switch(x));
        }
    }
    Ok(BdmOutcome::NoSwitch)
}

fn sign_with_tolerance<S: Scalar>(x: S) -> Ordering {
    if x.abs() <= S::tolerance() {
        Ordering::Equal
    } else if x > S::zero() {
        Ordering::Greater
    } else {
        Ordering::Less
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankingViolation<S> {
    pub first: LotteryId,
    pub second: LotteryId,
    pub choiceless_diff: S,
    pub total_diff: S,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankingReport<S> {
    pub pairs_checked: usize,
    pub violations: Vec<RankingViolation<S>>,
}

impl<S> RankingReport<S> {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Under full observation, checks that every lottery pair is ranked the same
/// by expected choiceless utility and by expected total utility.
pub fn check_ranking_equivalence<S: Scalar>(
    choice_set: &ChoiceSet<S>,
    u: &UtilityFunction<S>,
    regret: S,
) -> Result<RankingReport<S>, DecideError> {
    let pref = RegretPreference::regret_only(regret);
    pref.validate()?;
    let info = StochasticInfo::Deterministic(ObservationMap::full(choice_set));
    let ids = choice_set.ids();
    let mut plain = Vec::with_capacity(ids.len());
    let mut total = Vec::with_capacity(ids.len());
    for &id in &ids {
        plain.push(expected_choiceless_utility(id, u, choice_set)?);
        total.push(expected_total_utility(id, &info, &pref, u, choice_set)?);
    }
    let mut report = RankingReport { pairs_checked: 0, violations: Vec::new() };
    for i in 0..ids.len() {
        for j in i + 1..ids.len() {
            report.pairs_checked += 1;
            let dp = plain[i] - plain[j];
            let dt = total[i] - total[j];
            if sign_with_tolerance(dp) != sign_with_tolerance(dt) {
                report.violations.push(RankingViolation {
                    first: ids[i],
                    second: ids[j],
                    choiceless_diff: dp,
                    total_diff: dt,
                });
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityReport<S> {
    /// Per lottery: expected total utility in the richer environment minus the poorer one.
    pub deltas: Vec<(LotteryId, S)>,
    pub never_higher: bool,
    pub strictly_lower_somewhere: bool,
}

/// Compares expected total utilities lottery by lottery when `richer` is more
/// informative than `poorer`.
pub fn check_information_monotonicity<S: Scalar>(
    choice_set: &ChoiceSet<S>,
    richer: &InfoEnvironment,
    poorer: &InfoEnvironment,
    pref: &RegretPreference<S>,
    u: &UtilityFunction<S>,
) -> Result<MonotonicityReport<S>, DecideError> {
    let order = compare_environments(richer, poorer)?;
    if order != EnvironmentOrder::MoreInformative {
        return Err(DecideError::NotComparable(order));
    }
    let rich_info = StochasticInfo::Deterministic(richer.source().clone());
    let poor_info = StochasticInfo::Deterministic(poorer.source().clone());
    let mut deltas = Vec::new();
    for id in choice_set.ids() {
        let a = expected_total_utility(id, &rich_info, pref, u, choice_set)?;
        let b = expected_total_utility(id, &poor_info, pref, u, choice_set)?;
        deltas.push((id, a - b));
    }
    let never_higher = deltas.iter().all(|(_, d)| !d.definitely_gt(S::zero()));
    let strictly_lower_somewhere = deltas.iter().any(|(_, d)| *d < -S::tolerance());
    Ok(MonotonicityReport { deltas, never_higher, strictly_lower_somewhere })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::RiskyLottery;
    use num_rational::Ratio;
    use proptest::prelude::*;

    type Q = Ratio<i128>;

    fn units(x: i64) -> Money {
        Money::from_units(x)
    }

    /// One risky lottery (0 or 10, p) against a sure 5.
    fn restaurant<S: Scalar>(p: S) -> ChoiceSet<S> {
        ChoiceSet::new(vec![RiskyLottery { low: units(0), high: units(10), p }], units(5)).unwrap()
    }

    fn normalized<S: Scalar>(u_high: S) -> UtilityFunction<S> {
        UtilityFunction::Normalized2 { low: units(0), safe: units(5), high: units(10), u_high }
    }

    #[test]
    fn utility_forms() {
        let lin = UtilityFunction::Linear { scale: 2.0, shift: 1.0 };
        assert_eq!(lin.eval(Money::from_cents(250)).unwrap(), 6.0);
        assert_eq!(lin.inverse(6.0), Some(2.5));
        let n = normalized(2.5f64);
        assert_eq!(n.eval(units(0)).unwrap(), 0.0);
        assert_eq!(n.eval(units(5)).unwrap(), 1.0);
        assert_eq!(n.eval(units(10)).unwrap(), 2.5);
        assert!((n.eval(Money::from_cents(750)).unwrap() - 1.75).abs() < 1e-12);
        assert!(matches!(n.eval(units(11)), Err(DecideError::OutOfDomain(_))));
        let bad = UtilityFunction::Table { knots: vec![(units(0), 1.0), (units(5), 0.5)] };
        assert!(bad.validate().is_err());
        assert!(UtilityFunction::Linear { scale: 0.0, shift: 0.0 }.validate().is_err());
        assert!(normalized(1.0).validate().is_err());
    }

    #[test]
    fn regret_neutral_total_utility_is_choiceless() {
        let cs = restaurant(0.5);
        let space = build_state_space(&cs).unwrap();
        let u = UtilityFunction::linear();
        let pref = RegretPreference::neutral();
        for obs in [ObservationMap::full(&cs), ObservationMap::minimal(&cs)] {
            for s in space.states() {
                for id in cs.ids() {
                    let t = total_utility(&cs, id, s, &obs, &pref, &u).unwrap();
                    assert_eq!(t, u.eval(cs.outcome_at(id, s.successes).unwrap()).unwrap());
                }
            }
        }
    }

    #[test]
    fn private_safe_choice_is_insured() {
        let cs = restaurant(0.5);
        let space = build_state_space(&cs).unwrap();
        let pref = RegretPreference::regret_only(1.0);
        let obs = ObservationMap::minimal(&cs);
        for s in space.states() {
            assert_eq!(total_utility(&cs, LotteryId::Safe, s, &obs, &pref, &normalized(2.5)).unwrap(), 1.0);
        }
    }

    #[test]
    fn risky_failure_under_full_observation() {
        let cs = restaurant(0.5);
        let fail = build_state_space(&cs).unwrap().states()[0];
        let t = total_utility(
            &cs,
            LotteryId::Risky(0),
            &fail,
            &ObservationMap::full(&cs),
            &RegretPreference::regret_only(1.0),
            &normalized(2.5),
        )
        .unwrap();
        assert_eq!(t, -1.0);
    }

    #[test]
    fn total_utility_errors() {
        let cs = restaurant(0.5);
        let s = build_state_space(&cs).unwrap().states()[0];
        let obs = ObservationMap::full(&cs);
        let pref = RegretPreference::neutral();
        let u = UtilityFunction::linear();
        assert!(matches!(
            total_utility(&cs, LotteryId::Risky(2), &s, &obs, &pref, &u),
            Err(DecideError::Env(EnvError::UnknownLottery(_)))
        ));
        let wide = State { successes: 0, len: 2, prob: 0.25 };
        assert!(matches!(
            total_utility(&cs, LotteryId::Safe, &wide, &obs, &pref, &u),
            Err(DecideError::Env(EnvError::DomainMismatch(_)))
        ));
    }

    #[test]
    fn expected_utility_worked_values() {
        let cs = restaurant(0.5);
        let pref = RegretPreference::regret_only(1.0);
        let u = normalized(2.5);
        let eu = |id, q: f64| expected_total_utility(id, &StochasticInfo::LearnProbability(q), &pref, &u, &cs).unwrap();
        assert_eq!(eu(LotteryId::Safe, 0.0), 1.0);
        assert!((eu(LotteryId::Risky(0), 0.5) - 0.75).abs() < 1e-12);
        assert!((eu(LotteryId::Safe, 1.0) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn exact_expected_utility_matches_closed_forms() {
        let p = Q::new(1, 2);
        let cs = restaurant(p);
        let pref = RegretPreference::regret_only(Q::from_integer(1));
        let u = normalized(Q::new(5, 2));
        let b = BinaryUtilities::normalized(Q::new(5, 2));
        for q in [Q::from_integer(0), Q::new(1, 3), Q::from_integer(1)] {
            let info = StochasticInfo::LearnProbability(q);
            assert_eq!(expected_total_utility(LotteryId::Safe, &info, &pref, &u, &cs).unwrap(), b.expected_safe(p, q, &pref));
            assert_eq!(expected_total_utility(LotteryId::Risky(0), &info, &pref, &u, &cs).unwrap(), b.expected_risky(p, &pref));
        }
        assert_eq!(b.expected_risky(p, &pref), Q::new(3, 4));
        assert_eq!(b.expected_safe(p, Q::from_integer(1), &pref), Q::new(1, 4));
    }

    #[test]
    fn optimal_choice_examples() {
        let ev_cs = ChoiceSet::new(vec![RiskyLottery { low: units(0), high: units(12), p: 0.5 }], units(5)).unwrap();
        let full = StochasticInfo::Deterministic(ObservationMap::full(&ev_cs));
        assert_eq!(
            optimal_choice(&ev_cs, &full, &RegretPreference::neutral(), &UtilityFunction::linear()).unwrap(),
            LotteryId::Risky(0)
        );
        let cs = restaurant(0.5);
        let pref = RegretPreference::regret_only(1.0);
        let u = normalized(2.5);
        assert_eq!(optimal_choice(&cs, &StochasticInfo::LearnProbability(0.0), &pref, &u).unwrap(), LotteryId::Safe);
        assert_eq!(optimal_choice(&cs, &StochasticInfo::LearnProbability(1.0), &pref, &u).unwrap(), LotteryId::Risky(0));
    }

    #[test]
    fn optimal_choice_breaks_ties_toward_safe() {
        // EV of the lottery equals the sure amount exactly.
        let cs = restaurant(0.5);
        let full = StochasticInfo::Deterministic(ObservationMap::full(&cs));
        assert_eq!(
            optimal_choice(&cs, &full, &RegretPreference::neutral(), &UtilityFunction::linear()).unwrap(),
            LotteryId::Safe
        );
    }

    #[test]
    fn mixture_validation() {
        let cs = restaurant(0.5);
        let bad = StochasticInfo::Mixture(vec![(0.5, ObservationMap::full(&cs)), (0.4, ObservationMap::minimal(&cs))]);
        assert!(matches!(bad.components(&cs), Err(DecideError::InvalidInfo(_))));
        let q = StochasticInfo::LearnProbability(1.5);
        assert!(matches!(q.components(&cs), Err(DecideError::InvalidInfo(_))));
        let ok = StochasticInfo::Mixture(vec![(0.3f64, ObservationMap::full(&cs)), (0.7, ObservationMap::minimal(&cs))]);
        let pref = RegretPreference::regret_only(1.0);
        let u = normalized(2.5);
        let via_mixture = expected_total_utility(LotteryId::Safe, &ok, &pref, &u, &cs).unwrap();
        let via_q = expected_total_utility(LotteryId::Safe, &StochasticInfo::LearnProbability(0.3), &pref, &u, &cs).unwrap();
        assert!((via_mixture - via_q).abs() < 1e-12);
    }

    #[test]
    fn threshold_worked_values() {
        for k in [0.0, 0.5, 1.0, 4.0] {
            assert!((risky_threshold(0.5f64, 1.0, k).unwrap() - 2.0).abs() < 1e-12);
        }
        assert!((risky_threshold(0.5f64, 0.0, 1.0).unwrap() - 3.0).abs() < 1e-12);
        assert!((risky_threshold(0.5f64, 0.5, 1.0).unwrap() - 7.0 / 3.0).abs() < 1e-12);
        assert_eq!(risky_threshold(Q::new(1, 2), Q::new(1, 2), Q::from_integer(1)).unwrap(), Q::new(7, 3));
        assert!(matches!(risky_threshold(0.0, 0.5, 1.0), Err(DecideError::OutOfRange(_))));
        assert!(matches!(risky_threshold(0.5f64, 1.5, 1.0), Err(DecideError::OutOfRange(_))));
        assert!(matches!(risky_threshold(0.5f64, 0.5, -1.0), Err(DecideError::OutOfRange(_))));
    }

    /// Independent oracle: bisection on the general expected-utility path.
    fn bisect_threshold(p: f64, q: f64, k: f64) -> f64 {
        let pref = RegretPreference::regret_only(k);
        let gap = |h: f64| {
            let cs = restaurant(p);
            let u = normalized(h);
            let info = StochasticInfo::LearnProbability(q);
            expected_total_utility(LotteryId::Risky(0), &info, &pref, &u, &cs).unwrap()
                - expected_total_utility(LotteryId::Safe, &info, &pref, &u, &cs).unwrap()
        };
        let (mut lo, mut hi) = (1.0 + 1e-9, 1e4);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if gap(mid) >= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    #[test]
    fn threshold_matches_bisection() {
        assert!((bisect_threshold(0.5, 0.5, 1.0) - 7.0 / 3.0).abs() < 1e-9);
        assert!((bisect_threshold(0.3, 0.2, 2.5) - risky_threshold(0.3, 0.2, 2.5).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn threshold_in_money_linear() {
        let u = UtilityFunction::Linear { scale: 1.0f64, shift: 0.0 };
        // normalized 7/3 with low 0 and safe 5 -> 35/3 units
        let m = threshold_in_money(&u, units(0), units(5), 7.0 / 3.0).unwrap().unwrap();
        assert!((m - 35.0 / 3.0).abs() < 1e-12);
        assert_eq!(threshold_in_money(&normalized(2.5), units(0), units(5), 2.0).unwrap(), None);
    }

    #[test]
    fn bdm_examples() {
        let task = BdmTask::<f64>::standard();
        let u = UtilityFunction::linear();
        let neutral = RegretPreference::neutral();
        let averse = RegretPreference::regret_only(1.0);
        assert_eq!(bdm_threshold(&neutral, &u, &task, 0.0).unwrap(), BdmOutcome::Switch(units(10)));
        assert_eq!(bdm_threshold(&averse, &u, &task, 1.0).unwrap(), BdmOutcome::Switch(units(10)));
        assert_eq!(bdm_threshold(&averse, &u, &task, 0.0).unwrap(), BdmOutcome::Switch(units(15)));
        assert_eq!(bdm_threshold(&averse, &u, &task, 0.5).unwrap(), BdmOutcome::Switch(units(12)));
        let heavy = RegretPreference::regret_only(3.0);
        let none = bdm_threshold(&heavy, &u, &task, 0.0).unwrap();
        assert_eq!(none, BdmOutcome::NoSwitch);
        assert_eq!(none.as_amount(&task), units(16));
        let rejoice = RegretPreference { regret: 0.0, rejoice: 1.0 };
        assert_eq!(bdm_threshold(&rejoice, &u, &task, 1.0).unwrap(), BdmOutcome::Switch(units(10)));
        assert_eq!(bdm_threshold(&rejoice, &u, &task, 0.0).unwrap(), BdmOutcome::Switch(units(8)));
        let empty = BdmTask { grid: vec![], ..task.clone() };
        assert_eq!(bdm_threshold(&neutral, &u, &empty, 0.0), Err(DecideError::EmptyGrid));
    }

    #[test]
    fn ranking_equivalence_without_regret() {
        let cs = restaurant(0.5);
        let report = check_ranking_equivalence(&cs, &UtilityFunction::linear(), 0.0).unwrap();
        assert!(report.holds());
        assert_eq!(report.pairs_checked, 1);
    }

    #[test]
    fn ranking_equivalence_fixed_instances() {
        let cs2 = ChoiceSet::new(
            vec![
                RiskyLottery { low: units(1), high: units(10), p: 0.35 },
                RiskyLottery { low: units(0), high: units(8), p: 0.6 },
            ],
            units(5),
        )
        .unwrap();
        let r2 = check_ranking_equivalence(&cs2, &UtilityFunction::linear(), 2.0).unwrap();
        assert_eq!((r2.pairs_checked, r2.violations.len()), (3, 0));
        let cs3 = ChoiceSet::new(
            vec![
                RiskyLottery { low: units(2), high: units(14), p: 0.2 },
                RiskyLottery { low: units(1), high: units(9), p: 0.7 },
                RiskyLottery { low: units(0), high: units(11), p: 0.45 },
            ],
            units(6),
        )
        .unwrap();
        let table = UtilityFunction::Table {
            knots: vec![(units(0), 0.0), (units(6), 3.0), (units(14), 4.5)],
        };
        let r3 = check_ranking_equivalence(&cs3, &table, 0.7).unwrap();
        assert_eq!((r3.pairs_checked, r3.violations.len()), (6, 0));
    }

    #[test]
    fn information_monotonicity_worked_example() {
        let cs = restaurant(0.5);
        let rich = InfoEnvironment::derive(&cs, &ObservationMap::full(&cs)).unwrap();
        let poor = InfoEnvironment::derive(&cs, &ObservationMap::minimal(&cs)).unwrap();
        let u = normalized(2.5f64);
        let pref = RegretPreference::regret_only(1.0);
        let report = check_information_monotonicity(&cs, &rich, &poor, &pref, &u).unwrap();
        let safe_delta = report.deltas.iter().find(|(id, _)| *id == LotteryId::Safe).unwrap().1;
        // 1 - p k (u_high - 1) versus 1
        assert!((safe_delta - (-0.5 * 1.5)).abs() < 1e-12);
        assert!(report.never_higher && report.strictly_lower_somewhere);

        let neutral = check_information_monotonicity(&cs, &rich, &poor, &RegretPreference::neutral(), &u).unwrap();
        assert!(neutral.deltas.iter().all(|(_, d)| *d == 0.0));
        assert!(!neutral.strictly_lower_somewhere);

        assert!(matches!(
            check_information_monotonicity(&cs, &poor, &rich, &pref, &u),
            Err(DecideError::NotComparable(EnvironmentOrder::LessInformative))
        ));
    }

    #[test]
    fn information_monotonicity_two_risky_nested() {
        let cs = ChoiceSet::new(
            vec![
                RiskyLottery { low: units(1), high: units(10), p: 0.4 },
                RiskyLottery { low: units(0), high: units(8), p: 0.6 },
            ],
            units(5),
        )
        .unwrap();
        let rich = InfoEnvironment::derive(&cs, &ObservationMap::full(&cs)).unwrap();
        // full and minimal maps cross here, so hide everything from the safe choice only
        let private_safe = ObservationMap::full_except(&cs, LotteryId::Safe, &[]).unwrap();
        let poor = InfoEnvironment::derive(&cs, &private_safe).unwrap();
        let report = check_information_monotonicity(&cs, &rich, &poor, &RegretPreference::regret_only(1.0), &UtilityFunction::linear()).unwrap();
        assert!(report.never_higher && report.strictly_lower_somewhere);
        assert!(report.deltas.iter().all(|(_, d)| *d <= 1e-12));
    }

    proptest! {
        #[test]
        fn endpoint_identities(p in 0.01f64..0.99, k in 0.0f64..10.0) {
            prop_assert!((risky_threshold(p, 1.0, k).unwrap() - 1.0 / p).abs() <= 1e-12);
            prop_assert!((risky_threshold(p, 0.0, k).unwrap() - (1.0 + k * (1.0 - p)) / p).abs() <= 1e-12);
        }

        #[test]
        fn threshold_strictly_decreasing_in_q(p in 0.01f64..0.99, k in 0.01f64..10.0) {
            let vals: Vec<f64> = (0..100).map(|i| risky_threshold(p, i as f64 / 99.0, k).unwrap()).collect();
            prop_assert!(vals.windows(2).all(|w| w[1] < w[0]));
        }

        #[test]
        fn choice_flips_at_threshold(p in 0.05f64..0.95, q in 0.0f64..=1.0, k in 0.0f64..5.0) {
            let t = risky_threshold(p, q, k).unwrap();
            let cs = restaurant(p);
            let pref = RegretPreference::regret_only(k);
            let info = StochasticInfo::LearnProbability(q);
            let step = 1e-3 * t;
            for (h, expect) in [(t - step, LotteryId::Safe), (t + step, LotteryId::Risky(0))] {
                if h > 1.0 {
                    prop_assert_eq!(optimal_choice(&cs, &info, &pref, &normalized(h)).unwrap(), expect);
                }
            }
        }

        #[test]
        fn rejoice_free_is_bitwise_regret_only(p in 0.05f64..0.95, k in 0.0f64..5.0, h in 1.01f64..10.0, q in 0.0f64..=1.0) {
            let cs = restaurant(p);
            let u = normalized(h);
            let a = RegretPreference { regret: k, rejoice: 0.0 };
            let space = build_state_space(&cs).unwrap();
            for obs in [ObservationMap::full(&cs), ObservationMap::minimal(&cs)] {
                for s in space.states() {
                    for id in cs.ids() {
                        let with_field = total_utility(&cs, id, s, &obs, &a, &u).unwrap();
                        let own = u.eval(cs.outcome_at(id, s.successes).unwrap()).unwrap();
                        let best = obs.observed(id).unwrap().iter()
                            .map(|&l| u.eval(cs.outcome_at(l, s.successes).unwrap()).unwrap())
                            .fold(f64::MIN, f64::max);
                        let pure = own - k * (best - own).max(0.0);
                        prop_assert_eq!(with_field.to_bits(), pure.to_bits());
                    }
                }
            }
            let b = BinaryUtilities::normalized(h);
            let g = expected_total_utility(LotteryId::Safe, &StochasticInfo::LearnProbability(q), &a, &u, &cs).unwrap();
            prop_assert!((g - b.expected_safe(p, q, &a)).abs() < 1e-12);
        }

        #[test]
        fn rejoice_closed_forms_match_general_path(p in 0.05f64..0.95, k1 in 0.0f64..3.0, k2 in 0.0f64..3.0, h in 1.01f64..10.0, q in 0.0f64..=1.0) {
            let cs = restaurant(p);
            let u = normalized(h);
            let pref = RegretPreference { regret: k1, rejoice: k2 };
            let info = StochasticInfo::LearnProbability(q);
            let b = BinaryUtilities::normalized(h);
            let gs = expected_total_utility(LotteryId::Safe, &info, &pref, &u, &cs).unwrap();
            let gr = expected_total_utility(LotteryId::Risky(0), &info, &pref, &u, &cs).unwrap();
            prop_assert!((gs - b.expected_safe(p, q, &pref)).abs() < 1e-12);
            prop_assert!((gr - b.expected_risky(p, &pref)).abs() < 1e-12);
        }
    }
}
