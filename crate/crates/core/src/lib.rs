//! Regret-averse choice when what is learned ex post depends on what was chosen:
//! information partitions, total-utility evaluation, the N-player regret
//! game, selection dynamics and a synthetic laboratory harness.
//!
//! The analytical modules are generic over [`scalar::Scalar`] (`f32`, `f64`
//! and exact `Ratio<i128>`); the aliases below fix the common choices.

pub mod cli;
pub mod decide;
pub mod dynamics;
pub mod env;
pub mod game;
pub mod money;
pub mod report;
pub mod scalar;
pub mod xp;

pub use money::Money;

pub type Real = f64;
/// Exact rational scalar.
pub type Exact = num_rational::Ratio<i128>;

pub type ChoiceSetF64 = env::ChoiceSet<f64>;
pub type ChoiceSetExact = env::ChoiceSet<Exact>;
pub type RegretPreferenceF64 = decide::RegretPreference<f64>;
pub type RegretPreferenceExact = decide::RegretPreference<Exact>;
pub type UtilityF64 = decide::UtilityFunction<f64>;
pub type UtilityExact = decide::UtilityFunction<Exact>;
pub type RegretGameF64 = game::RegretGame<f64>;
pub type RegretGameF32 = game::RegretGame<f32>;
pub type RegretGameExact = game::RegretGame<Exact>;
pub type QFunctionF64 = game::QFunction<f64>;
