//! Interest-rate curves and supply-rate formulas.
//!
//! Three curve families are supported:
//!
//! * **AAVE kinked**: `r0 + u/u_opt * slope1` up to the optimal utilization,
//!   then `r0 + slope1 + (u - u_opt)/(1 - u_opt) * slope2`.
//! * **Compound linear**: `r0 + u * slope`.
//! * **Compound jump**: `r0 + u * slope1`, plus `(u - kink) * slope2` above the kink.
//!
//! All rates are annualized rays. Evaluation at exactly the kink uses the
//! lower branch.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixed::{mul_div, Amount, Ray, Rounding, RAY};

/// Annualized interest rate, 27-decimal fixed point.
pub type Rate = Ray;

/// Seconds in the 365-day year used for annualization.
pub const SECONDS_PER_YEAR: u64 = 31_536_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RateError {
    #[error("utilization {0} is outside [0, 1]")]
    UtilizationOutOfRange(Ray),
    #[error("reserve factor {0} is outside [0, 1]")]
    ReserveFactorOutOfRange(Ray),
    #[error("kink / optimal utilization {0} must lie strictly inside (0, 1)")]
    KinkOutOfRange(Ray),
    #[error("block counts must be positive")]
    ZeroBlocks,
}

/// Fraction of the pool that is lent out, in `[0, 1]`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(try_from = "Ray", into = "Ray")]
pub struct Utilization(Ray);

impl Utilization {
    pub const ZERO: Utilization = Utilization(Ray::ZERO);
    pub const FULL: Utilization = Utilization(Ray::ONE);

    pub fn new(value: Ray) -> Result<Self, RateError> {
        if value > Ray::ONE {
            return Err(RateError::UtilizationOutOfRange(value));
        }
        Ok(Utilization(value))
    }

    /// `debt / (cash + debt)`; zero when there is no debt.
    pub fn from_balances(cash: Amount, debt: Amount) -> Self {
        if debt.is_zero() {
            return Utilization::ZERO;
        }
        let denom = cash.add(debt);
        Utilization(Ray::ratio(debt.raw(), denom.raw()))
    }

    pub fn value(self) -> Ray {
        self.0
    }
}

impl TryFrom<Ray> for Utilization {
    type Error = RateError;
    fn try_from(r: Ray) -> Result<Self, Self::Error> {
        Utilization::new(r)
    }
}

impl From<Utilization> for Ray {
    fn from(u: Utilization) -> Ray {
        u.0
    }
}

/// Share of borrower interest diverted to the treasury.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(try_from = "Ray", into = "Ray")]
pub struct ReserveFactor(Ray);

impl ReserveFactor {
    pub fn new(value: Ray) -> Result<Self, RateError> {
        if value > Ray::ONE {
            return Err(RateError::ReserveFactorOutOfRange(value));
        }
        Ok(ReserveFactor(value))
    }

    pub fn value(self) -> Ray {
        self.0
    }

    /// `1 - R`.
    pub fn complement(self) -> Ray {
        Ray::ONE.saturating_sub(self.0)
    }
}

impl TryFrom<Ray> for ReserveFactor {
    type Error = RateError;
    fn try_from(r: Ray) -> Result<Self, Self::Error> {
        ReserveFactor::new(r)
    }
}

impl From<ReserveFactor> for Ray {
    fn from(r: ReserveFactor) -> Ray {
        r.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RateModel {
    AaveKinked {
        r0: Rate,
        slope1: Rate,
        slope2: Rate,
        u_optimal: Ray,
    },
    CompoundLinear {
        r0: Rate,
        slope: Rate,
    },
    CompoundJump {
        r0: Rate,
        slope1: Rate,
        slope2: Rate,
        kink: Ray,
    },
}

impl RateModel {
    pub fn validate(&self) -> Result<(), RateError> {
        match *self {
            RateModel::AaveKinked { u_optimal: k, .. }
            | RateModel::CompoundJump { kink: k, .. } => {
                if k.is_zero() || k >= Ray::ONE {
                    return Err(RateError::KinkOutOfRange(k));
                }
                Ok(())
            }
            RateModel::CompoundLinear { .. } => Ok(()),
        }
    }

    /// Borrow rate at utilization `u`.
    pub fn rate(&self, u: Utilization) -> Rate {
        match self {
            RateModel::AaveKinked { .. } => aave_rate(self, u),
            RateModel::CompoundLinear { .. } => compound_linear_rate(self, u),
            RateModel::CompoundJump { .. } => compound_jump_rate(self, u),
        }
    }

    /// The rate at full utilization.
    pub fn max_rate(&self) -> Rate {
        self.rate(Utilization::FULL)
    }

    /// AAVE V2 ETH variable-rate parameters ahead of the merge.
    pub fn aave_eth_variable() -> Self {
        RateModel::AaveKinked {
            r0: Ray::ZERO,
            slope1: Ray::ratio(3, 100),
            slope2: Ray::ONE,
            u_optimal: Ray::ratio(70, 100),
        }
    }

    /// AAVE V2 ETH stable-rate parameters ahead of the merge.
    pub fn aave_eth_stable() -> Self {
        RateModel::AaveKinked {
            r0: Ray::ratio(3, 100),
            slope1: Ray::ratio(4, 100),
            slope2: Ray::ONE,
            u_optimal: Ray::ratio(70, 100),
        }
    }

    /// Compound V2 ETH standard (linear) model ahead of the merge.
    pub fn compound_eth_linear() -> Self {
        RateModel::CompoundLinear {
            r0: Ray::ratio(2, 100),
            slope: Ray::ratio(10, 100),
        }
    }

    /// Compound V2 ETH jump model adopted on 10 September 2022.
    pub fn compound_eth_jump() -> Self {
        RateModel::CompoundJump {
            r0: Ray::ratio(2, 100),
            slope1: Ray::ratio(20, 100),
            slope2: Ray::ratio(4910, 100),
            kink: Ray::ratio(80, 100),
        }
    }
}

/// AAVE V2 kinked curve.
///
/// # Panics
/// If `model` is not [`RateModel::AaveKinked`].
pub fn aave_rate(model: &RateModel, u: Utilization) -> Rate {
    let RateModel::AaveKinked {
        r0,
        slope1,
        slope2,
        u_optimal,
    } = *model
    else {
        panic!("aave_rate called with {model:?}");
    };
    let u = u.value();
    if u <= u_optimal {
        r0.add(slope1.mul(u.div(u_optimal)))
    } else {
        let excess = u
            .saturating_sub(u_optimal)
            .div(Ray::ONE.saturating_sub(u_optimal));
        r0.add(slope1).add(slope2.mul(excess))
    }
}

/// Compound standard linear curve.
///
/// # Panics
/// If `model` is not [`RateModel::CompoundLinear`].
pub fn compound_linear_rate(model: &RateModel, u: Utilization) -> Rate {
    let RateModel::CompoundLinear { r0, slope } = *model else {
        panic!("compound_linear_rate called with {model:?}");
    };
    r0.add(u.value().mul(slope))
}

/// Compound jump curve.
///
/// # Panics
/// If `model` is not [`RateModel::CompoundJump`].
pub fn compound_jump_rate(model: &RateModel, u: Utilization) -> Rate {
    let RateModel::CompoundJump {
        r0,
        slope1,
        slope2,
        kink,
    } = *model
    else {
        panic!("compound_jump_rate called with {model:?}");
    };
    let u = u.value();
    let base = r0.add(u.mul(slope1));
    if u <= kink {
        base
    } else {
        base.add(u.saturating_sub(kink).mul(slope2))
    }
}

/// AAVE lender rate: `u * (share_s * avg_stable + share_v * variable) * (1 - R)`.
///
/// The blended borrow rate is rounded once so that it never exceeds the
/// larger of its two inputs when the shares sum to one.
pub fn aave_supply_rate(
    u: Utilization,
    stable_share: Ray,
    avg_stable_rate: Rate,
    variable_share: Ray,
    variable_rate: Rate,
    reserve: ReserveFactor,
) -> Rate {
    let blended = blend(stable_share, avg_stable_rate, variable_share, variable_rate);
    u.value().mul(blended).mul(reserve.complement())
}

fn blend(w1: Ray, x1: Ray, w2: Ray, x2: Ray) -> Ray {
    use ethnum::U256;
    let sum =
        U256::from(w1.raw()) * U256::from(x1.raw()) + U256::from(w2.raw()) * U256::from(x2.raw());
    let ray = U256::from(RAY);
    let q = (sum + ray / 2) / ray;
    Ray::from_raw(u128::try_from(q).expect("blended rate overflow"))
}

/// Compound lender rate: `r * u * (1 - R)`.
pub fn compound_supply_rate(borrow_rate: Rate, u: Utilization, reserve: ReserveFactor) -> Rate {
    borrow_rate.mul(u.value()).mul(reserve.complement())
}

/// Split of outstanding debt into (stable, variable) shares summing to one.
pub fn debt_shares(stable_debt: Amount, variable_debt: Amount) -> (Ray, Ray) {
    let total = stable_debt.add(variable_debt);
    if total.is_zero() {
        return (Ray::ZERO, Ray::ONE);
    }
    let stable = Ray::from_raw(mul_div(stable_debt.raw(), RAY, total.raw(), Rounding::Down));
    (stable, Ray::ONE.saturating_sub(stable))
}

/// Blocks-per-period conventions for per-block rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockConvention {
    /// What the Compound contracts assume when converting annual parameters.
    pub contract_blocks_per_year: u64,
    /// Observed block rate used when annualizing per-block rates for display.
    pub display_blocks_per_day: u64,
}

impl Default for BlockConvention {
    fn default() -> Self {
        BlockConvention {
            contract_blocks_per_year: 2_102_400,
            display_blocks_per_day: 6_245,
        }
    }
}

impl BlockConvention {
    pub fn new(
        contract_blocks_per_year: u64,
        display_blocks_per_day: u64,
    ) -> Result<Self, RateError> {
        if contract_blocks_per_year == 0 || display_blocks_per_day == 0 {
            return Err(RateError::ZeroBlocks);
        }
        Ok(BlockConvention {
            contract_blocks_per_year,
            display_blocks_per_day,
        })
    }

    pub fn display_blocks_per_year(&self) -> u64 {
        self.display_blocks_per_day * 365
    }
}

/// Annual rate to the per-block rate the contract charges (truncating).
pub fn annual_to_per_block(rate: Rate, conv: &BlockConvention) -> Rate {
    rate.div_int(conv.contract_blocks_per_year as u128)
}

/// Per-block rate annualized with the observed block cadence.
pub fn per_block_to_display_annual(rate: Rate, conv: &BlockConvention) -> Rate {
    rate.mul_int(conv.display_blocks_per_year() as u128)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(s: &str) -> Ray {
        s.parse().unwrap()
    }

    fn u(s: &str) -> Utilization {
        Utilization::new(r(s)).unwrap()
    }

    fn rf(s: &str) -> ReserveFactor {
        ReserveFactor::new(r(s)).unwrap()
    }

    #[test]
    fn aave_variable_curve_points() {
        let m = RateModel::aave_eth_variable();
        assert_eq!(aave_rate(&m, u("0")), Ray::ZERO);
        assert_eq!(aave_rate(&m, u("0.7")), r("0.03"));
        assert_eq!(aave_rate(&m, u("1")), r("1.03"));
    }

    #[test]
    fn aave_stable_curve_half_kink() {
        assert_eq!(
            aave_rate(&RateModel::aave_eth_stable(), u("0.35")),
            r("0.05")
        );
    }

    #[test]
    fn compound_linear_points() {
        let m = RateModel::compound_eth_linear();
        assert_eq!(compound_linear_rate(&m, u("0")), r("0.02"));
        assert_eq!(compound_linear_rate(&m, u("0.35")), r("0.055"));
        assert_eq!(compound_linear_rate(&m, u("1")), r("0.12"));
    }

    #[test]
    fn compound_jump_points() {
        let m = RateModel::compound_eth_jump();
        assert_eq!(compound_jump_rate(&m, u("0")), r("0.02"));
        assert_eq!(compound_jump_rate(&m, u("0.8")), r("0.18"));
        assert_eq!(compound_jump_rate(&m, u("1")), r("10.04"));
    }

    #[test]
    fn supply_rates() {
        let z = aave_supply_rate(u("0"), r("0.3"), r("0.5"), r("0.7"), r("0.9"), rf("0.1"));
        assert_eq!(z, Ray::ZERO);
        let full = aave_supply_rate(u("1"), Ray::ZERO, Ray::ZERO, Ray::ONE, r("1.03"), rf("0.1"));
        assert_eq!(full, r("0.927"));
        let mixed = aave_supply_rate(
            u("0.5"),
            r("0.4"),
            r("0.06"),
            r("0.6"),
            r("0.03"),
            rf("0.1"),
        );
        assert_eq!(mixed, r("0.0189"));

        assert_eq!(compound_supply_rate(r("0.3"), u("0"), rf("0.2")), Ray::ZERO);
        assert_eq!(
            compound_supply_rate(r("0.055"), u("0.35"), rf("0.2")),
            r("0.0154")
        );
        assert_eq!(
            compound_supply_rate(r("0.12"), u("1"), rf("0.2")),
            r("0.096")
        );
    }

    #[test]
    fn reserve_factor_extremes() {
        assert_eq!(compound_supply_rate(r("0.7"), u("0.9"), rf("1")), Ray::ZERO);
        let v = r("0.4321");
        assert_eq!(
            aave_supply_rate(u("1"), Ray::ZERO, r("0.9"), Ray::ONE, v, rf("0")),
            v
        );
    }

    #[test]
    fn per_block_conversions() {
        let conv = BlockConvention::default();
        assert_eq!(annual_to_per_block(Ray::ZERO, &conv), Ray::ZERO);
        let pb = annual_to_per_block(r("0.02"), &conv);
        // 0.02 / 2_102_400 = 9.5129375951293759512937595129...e-9, truncated
        assert_eq!(pb.raw(), 9_512_937_595_129_375_951);
        let disp = per_block_to_display_annual(pb, &conv);
        // 0.02 * 2_279_425 / 2_102_400 = 0.0216840277...
        assert!((disp.to_f64() - 0.021_684_027_777_777_78).abs() < 1e-15);
        assert!(BlockConvention::new(0, 1).is_err());
    }

    #[test]
    fn invalid_inputs() {
        assert!(Utilization::new(r("1.0000001")).is_err());
        assert!(ReserveFactor::new(r("1.5")).is_err());
        let bad = RateModel::CompoundJump {
            r0: Ray::ZERO,
            slope1: Ray::ZERO,
            slope2: Ray::ZERO,
            kink: Ray::ONE,
        };
        assert!(matches!(bad.validate(), Err(RateError::KinkOutOfRange(_))));
        assert!(RateModel::aave_eth_variable().validate().is_ok());
    }

    #[test]
    fn shares_sum_to_one() {
        let (s, v) = debt_shares(Amount::from_tokens(1), Amount::from_tokens(2));
        assert_eq!(s.add(v), Ray::ONE);
        assert_eq!(
            debt_shares(Amount::ZERO, Amount::ZERO),
            (Ray::ZERO, Ray::ONE)
        );
    }

    #[test]
    fn model_serde_shape() {
        let json = serde_json::to_string(&RateModel::compound_eth_jump()).unwrap();
        assert_eq!(
            json,
            r#"{"type":"compound_jump","r0":"0.02","slope1":"0.2","slope2":"49.1","kink":"0.8"}"#
        );
        let back: RateModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, RateModel::compound_eth_jump());
        assert!(serde_json::from_str::<Utilization>("\"1.5\"").is_err());
    }
}
