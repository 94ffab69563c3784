//! Chain-split mechanics: forked-token minting, the break-even borrow rate,
//! arbitrage accounting and the stETH leverage loop.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixed::{mul_div, Amount, Price, Ray, Rounding, SignedRay, SignedValue, RAY};
use crate::ids::{AccountId, AssetId, MarketId};
use crate::market::{Account, AccrualMode, Book};
use crate::rates::{Rate, SECONDS_PER_YEAR};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ForkError {
    #[error("parent asset price is zero")]
    ZeroEthPrice,
    #[error("time to fork must be positive")]
    NonPositiveHorizon,
    #[error("fork already applied")]
    AlreadyForked,
    #[error("rate series does not cover time {at}")]
    SeriesGap { at: u64 },
    #[error("window must satisfy open < close (got {open}..{close})")]
    InvalidWindow { open: u64, close: u64 },
    #[error("position is still open")]
    PositionOpen,
    #[error("loop ltv must lie strictly between 0 and 1")]
    InvalidLtv,
}

/// Seconds remaining until the fork.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeToMerge {
    delta_merge: u64,
}

impl TimeToMerge {
    pub fn new(delta_merge: u64) -> Result<Self, ForkError> {
        if delta_merge == 0 {
            return Err(ForkError::NonPositiveHorizon);
        }
        Ok(TimeToMerge { delta_merge })
    }

    pub fn between(now: u64, fork_time: u64) -> Result<Self, ForkError> {
        Self::new(fork_time.saturating_sub(now))
    }

    pub fn seconds(self) -> u64 {
        self.delta_merge
    }
}

/// Annualized borrow rate at which interest until the fork equals the forked token's value:
/// `(1 + p_ethw / p_eth) ^ (year / delta_merge) - 1`.
///
/// The whole-number part of the exponent is evaluated in ray arithmetic; only the
/// fractional remainder goes through `f64`. Saturates at `Ray::MAX`.
pub fn break_even_rate(p_ethw: Price, p_eth: Price, t: TimeToMerge) -> Result<Rate, ForkError> {
    if p_eth.is_zero() {
        return Err(ForkError::ZeroEthPrice);
    }
    let ratio = p_ethw.ratio(p_eth);
    if ratio.is_zero() {
        return Ok(Ray::ZERO);
    }
    let whole = SECONDS_PER_YEAR / t.delta_merge;
    let frac = (SECONDS_PER_YEAR % t.delta_merge) as f64 / t.delta_merge as f64;

    let ln_base = ratio.to_f64().ln_1p();
    let exponent = SECONDS_PER_YEAR as f64 / t.delta_merge as f64;
    // headroom check: Ray::MAX is about 3.4e11
    if exponent * ln_base > 26.0 {
        return Ok(Ray::MAX);
    }
    let base = Ray::ONE.add(ratio);
    let int_part = base.pow(whole);
    let frac_part = Ray::from_f64((frac * ln_base).exp());
    Ok(int_part.mul(frac_part).saturating_sub(Ray::ONE))
}

/// Borrow only when the rate, padded by `safety_margin`, is strictly below break-even.
pub fn arb_should_borrow(break_even: Rate, borrow_rate: Rate, safety_margin: Ray) -> bool {
    borrow_rate.mul(safety_margin) < break_even
}

/// Fractional cost of holding one unit of debt over `[open, close]` against a step series
/// of annual rates. Each step accrues under `mode`; steps compound into each other.
pub fn cumulative_borrow_cost(
    series: &[(u64, Rate)],
    open: u64,
    close: u64,
    mode: AccrualMode,
) -> Result<Ray, ForkError> {
    if open >= close {
        return Err(ForkError::InvalidWindow { open, close });
    }
    let start = series.partition_point(|(t, _)| *t <= open);
    if start == 0 {
        return Err(ForkError::SeriesGap { at: open });
    }
    let mut index = Ray::ONE;
    let mut t = open;
    let mut rate = series[start - 1].1;
    for &(next_t, next_rate) in &series[start..] {
        if next_t >= close {
            break;
        }
        index = index.mul(mode.growth(rate, t, next_t));
        t = next_t;
        rate = next_rate;
    }
    index = index.mul(mode.growth(rate, t, close));
    Ok(index.saturating_sub(Ray::ONE))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForkSpec {
    pub fork_time: u64,
    #[serde(default = "default_parent")]
    pub parent_asset: AssetId,
    #[serde(default = "default_forked")]
    pub forked_asset: AssetId,
}

fn default_parent() -> AssetId {
    "ETH".into()
}

fn default_forked() -> AssetId {
    "ETHW".into()
}

impl ForkSpec {
    pub fn new(fork_time: u64) -> Self {
        ForkSpec {
            fork_time,
            parent_asset: default_parent(),
            forked_asset: default_forked(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ForkReport {
    pub time: u64,
    /// Minted into ordinary wallets.
    pub minted_wallets: Amount,
    /// Minted against pool cash; held by unreachable pool-contract accounts.
    pub minted_pools: Amount,
    pub per_account: BTreeMap<AccountId, Amount>,
}

impl ForkReport {
    pub fn total_minted(&self) -> Amount {
        self.minted_wallets.add(self.minted_pools)
    }
}

/// Account that receives the forked copy of a pool's idle cash.
pub fn pool_account_id(market: &MarketId) -> AccountId {
    AccountId::new(format!("pool:{market}"))
}

/// Snapshot wallets and mint the forked asset one-for-one. Supplied balances mint nothing to
/// their lenders; the idle cash of each parent-asset pool mints to that pool's own account.
pub fn apply_fork(
    spec: &ForkSpec,
    accounts: &mut BTreeMap<AccountId, Account>,
    book: &Book,
    already_applied: &mut bool,
) -> Result<ForkReport, ForkError> {
    if *already_applied {
        return Err(ForkError::AlreadyForked);
    }
    let mut report = ForkReport {
        time: spec.fork_time,
        ..Default::default()
    };
    for acct in accounts.values_mut() {
        let held = acct.wallet_balance(&spec.parent_asset);
        acct.wallet.insert(spec.forked_asset.clone(), held);
        if !held.is_zero() {
            report.minted_wallets = report.minted_wallets.add(held);
            report.per_account.insert(acct.id.clone(), held);
        }
    }
    for m in book
        .markets
        .values()
        .filter(|m| m.asset == spec.parent_asset)
    {
        let id = pool_account_id(&m.id);
        let pool = accounts
            .entry(id.clone())
            .or_insert_with(|| Account::new(id.clone()));
        pool.wallet.insert(spec.forked_asset.clone(), m.cash);
        report.minted_pools = report.minted_pools.add(m.cash);
        if !m.cash.is_zero() {
            report.per_account.insert(id, m.cash);
        }
    }
    *already_applied = true;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArbPosition {
    pub account: AccountId,
    pub borrowed: Amount,
    pub open_time: u64,
    pub close_time: Option<u64>,
    pub interest_paid: Amount,
    pub ethw_received: Amount,
}

impl ArbPosition {
    pub fn open(account: AccountId, open_time: u64) -> Self {
        ArbPosition {
            account,
            borrowed: Amount::ZERO,
            open_time,
            close_time: None,
            interest_paid: Amount::ZERO,
            ethw_received: Amount::ZERO,
        }
    }

    pub fn is_closed(&self) -> bool {
        self.close_time.is_some()
    }
}

/// `ethw_received * p_ethw - interest_paid * p_eth`.
pub fn arb_pnl(
    pos: &ArbPosition,
    p_ethw_at_sale: Price,
    p_eth: Price,
) -> Result<SignedValue, ForkError> {
    if !pos.is_closed() {
        return Err(ForkError::PositionOpen);
    }
    let gain = pos.ethw_received.value_at(p_ethw_at_sale).signed();
    let cost = pos.interest_paid.value_at(p_eth).signed();
    Ok(gain.sub(cost))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoopResult {
    pub exposure: Amount,
    pub debt: Amount,
}

/// Deposit, borrow `ltv` of it, swap, redeposit. `None` means the limit of infinitely many rounds.
pub fn steth_loop(
    initial: Amount,
    ltv: Ray,
    iterations: Option<u32>,
) -> Result<LoopResult, ForkError> {
    if ltv.is_zero() || ltv >= Ray::ONE {
        return Err(ForkError::InvalidLtv);
    }
    let exposure = match iterations {
        None => initial.div_ray(Ray::ONE.saturating_sub(ltv), Rounding::HalfUp),
        Some(n) => {
            let mut sum = Ray::ONE;
            let mut term = Ray::ONE;
            for _ in 0..n {
                term = term.mul(ltv);
                if term.is_zero() {
                    break;
                }
                sum = sum.add(term);
            }
            initial.mul_ray(sum, Rounding::HalfUp)
        }
    };
    Ok(LoopResult {
        exposure,
        debt: exposure.saturating_sub(initial),
    })
}

/// Net annual return on `initial`: staking yield on the full exposure minus interest on the debt.
pub fn loop_carry(
    staking_apr: Rate,
    borrow_rate: Rate,
    exposure: Amount,
    debt: Amount,
    initial: Amount,
) -> SignedRay {
    assert!(
        !initial.is_zero(),
        "loop_carry needs a positive initial stake"
    );
    let earned = Ray::from_raw(mul_div(
        staking_apr.raw(),
        exposure.raw(),
        initial.raw(),
        Rounding::HalfUp,
    ));
    let paid = Ray::from_raw(mul_div(
        borrow_rate.raw(),
        debt.raw(),
        initial.raw(),
        Rounding::HalfUp,
    ));
    SignedRay::from_diff(earned, paid)
}

/// Borrow rate at which a loop of the given shape stops paying.
pub fn loop_breakeven_borrow_rate(
    staking_apr: Rate,
    exposure: Amount,
    debt: Amount,
) -> Option<Rate> {
    if debt.is_zero() {
        return None;
    }
    Some(Ray::from_raw(mul_div(
        staking_apr.raw(),
        exposure.raw(),
        debt.raw(),
        Rounding::Down,
    )))
}

/// Fraction of a unit of ETH that the forked token is worth.
pub fn price_ratio(p_ethw: Price, p_eth: Price) -> Result<Ray, ForkError> {
    if p_eth.is_zero() {
        return Err(ForkError::ZeroEthPrice);
    }
    Ok(Ray::from_raw(mul_div(
        p_ethw.raw(),
        RAY,
        p_eth.raw(),
        Rounding::Down,
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{MarketConfig, DEFAULT_BLOCK_TIME_MS};
    use crate::rates::{RateModel, ReserveFactor};

    fn r(s: &str) -> Ray {
        s.parse().unwrap()
    }

    fn p(s: &str) -> Price {
        s.parse().unwrap()
    }

    #[test]
    fn break_even_examples() {
        let year = TimeToMerge::new(SECONDS_PER_YEAR).unwrap();
        assert_eq!(
            break_even_rate(Price::from_raw(0), p("1500"), year).unwrap(),
            Ray::ZERO
        );
        assert_eq!(
            break_even_rate(p("45"), p("1500"), year).unwrap(),
            r("0.03")
        );
        // 1.03^10 - 1 = 0.34391637934412192...
        let tenth = TimeToMerge::new(SECONDS_PER_YEAR / 10).unwrap();
        let be = break_even_rate(p("45"), p("1500"), tenth).unwrap();
        assert!((be.to_f64() - 0.343_916_379_344_121_9).abs() < 1e-15);
        // 36.5 days, fractional exponent path: 8.64 ... use a non-divisor horizon
        let odd = TimeToMerge::new(3_000_000).unwrap();
        let be = break_even_rate(p("45"), p("1500"), odd).unwrap().to_f64();
        let expect = 1.03f64.powf(31_536_000.0 / 3_000_000.0) - 1.0;
        assert!((be - expect).abs() < 1e-13, "{be} vs {expect}");
    }

    #[test]
    fn break_even_errors_and_saturation() {
        let t = TimeToMerge::new(100).unwrap();
        assert_eq!(
            break_even_rate(p("1"), Price::from_raw(0), t),
            Err(ForkError::ZeroEthPrice)
        );
        assert_eq!(TimeToMerge::new(0), Err(ForkError::NonPositiveHorizon));
        assert_eq!(
            break_even_rate(p("45"), p("1500"), TimeToMerge::new(1).unwrap()).unwrap(),
            Ray::MAX
        );
    }

    #[test]
    fn should_borrow_rule() {
        assert!(arb_should_borrow(r("0.34"), r("0.02"), r("10")));
        assert!(!arb_should_borrow(r("0.03"), r("0.05"), Ray::ONE));
        assert!(!arb_should_borrow(r("0.03"), r("0.03"), Ray::ONE));
    }

    #[test]
    fn cumulative_cost_examples() {
        let t0 = 1_660_003_200;
        let zero = [(t0, Ray::ZERO)];
        assert_eq!(
            cumulative_borrow_cost(&zero, t0, t0 + 1000, AccrualMode::PerSecondCompound).unwrap(),
            Ray::ZERO
        );
        let ten = [(t0, r("0.1"))];
        let contract_year = 2_102_400 * DEFAULT_BLOCK_TIME_MS / 1000;
        assert_eq!(
            cumulative_borrow_cost(
                &ten,
                t0,
                t0 + contract_year,
                AccrualMode::per_block_default()
            )
            .unwrap(),
            r("0.1")
        );
        let c = cumulative_borrow_cost(
            &ten,
            t0,
            t0 + SECONDS_PER_YEAR,
            AccrualMode::PerSecondCompound,
        )
        .unwrap();
        assert!((c.to_f64() - 0.105_170_918).abs() < 1e-6);

        assert_eq!(
            cumulative_borrow_cost(&ten, t0 - 1, t0 + 5, AccrualMode::PerSecondCompound),
            Err(ForkError::SeriesGap { at: t0 - 1 })
        );
        assert!(matches!(
            cumulative_borrow_cost(&ten, t0 + 5, t0 + 5, AccrualMode::PerSecondCompound),
            Err(ForkError::InvalidWindow { .. })
        ));
    }

    #[test]
    fn cumulative_cost_steps_compound() {
        let t0 = 1_000;
        let series = [(t0, r("0.1")), (t0 + 100, Ray::ZERO), (t0 + 200, r("0.1"))];
        let split =
            cumulative_borrow_cost(&series, t0, t0 + 300, AccrualMode::PerSecondCompound).unwrap();
        let direct = cumulative_borrow_cost(
            &[(t0, r("0.1"))],
            t0,
            t0 + 200,
            AccrualMode::PerSecondCompound,
        )
        .unwrap();
        assert!((split.to_f64() - direct.to_f64()).abs() < 1e-18);
    }

    #[test]
    fn fork_minting() {
        let mut book = Book::new();
        book.add_market(
            MarketConfig {
                id: "aave_eth".into(),
                asset: "ETH".into(),
                protocol: "aave".into(),
                rate_model: RateModel::aave_eth_variable(),
                stable_rate_model: None,
                reserve_factor: ReserveFactor::new(r("0.1")).unwrap(),
                borrow_cap: None,
                borrowing_paused: false,
                stable_borrowing_enabled: false,
                accrual: AccrualMode::PerSecondCompound,
            },
            0,
            None,
        );
        let mut accounts = BTreeMap::new();
        let mut lender = Account::new("lender").with_wallet("ETH", Amount::from_tokens(10));
        book.deposit(&mut lender, &"aave_eth".into(), Amount::from_tokens(10), 0)
            .unwrap();
        let mut borrower = Account::new("borrower");
        book.market_mut(&"aave_eth".into())
            .unwrap()
            .borrow(
                &mut borrower,
                Amount::from_tokens(5),
                crate::market::BorrowMode::Variable,
                0,
            )
            .unwrap();
        let holder = Account::new("holder").with_wallet("ETH", Amount::from_tokens(10));
        for a in [lender, borrower, holder] {
            accounts.insert(a.id.clone(), a);
        }

        let spec = ForkSpec::new(100);
        let mut applied = false;
        let report = apply_fork(&spec, &mut accounts, &book, &mut applied).unwrap();
        let ethw = AssetId::from("ETHW");
        assert_eq!(
            accounts[&"holder".into()].wallet_balance(&ethw),
            Amount::from_tokens(10)
        );
        assert_eq!(
            accounts[&"lender".into()].wallet_balance(&ethw),
            Amount::ZERO
        );
        assert_eq!(
            accounts[&"borrower".into()].wallet_balance(&ethw),
            Amount::from_tokens(5)
        );
        assert_eq!(report.minted_pools, Amount::from_tokens(5));
        assert_eq!(report.total_minted(), Amount::from_tokens(20));
        assert_eq!(
            apply_fork(&spec, &mut accounts, &book, &mut applied),
            Err(ForkError::AlreadyForked)
        );
    }

    #[test]
    fn pnl_examples() {
        let mut pos = ArbPosition::open("a".into(), 0);
        pos.borrowed = Amount::from_tokens(1);
        pos.interest_paid = "0.0003".parse().unwrap();
        pos.ethw_received = Amount::from_tokens(1);
        assert_eq!(
            arb_pnl(&pos, p("0.03"), p("1")),
            Err(ForkError::PositionOpen)
        );
        pos.close_time = Some(10);
        assert_eq!(
            arb_pnl(&pos, p("0.03"), p("1")).unwrap(),
            "0.0297".parse().unwrap()
        );
        pos.interest_paid = "0.01".parse().unwrap();
        assert_eq!(
            arb_pnl(&pos, p("0.03"), p("1")).unwrap(),
            "0.02".parse().unwrap()
        );
        pos.ethw_received = Amount::ZERO;
        assert_eq!(
            arb_pnl(&pos, p("0.03"), p("1")).unwrap(),
            "-0.01".parse().unwrap()
        );
    }

    #[test]
    fn loop_examples() {
        let one = Amount::from_tokens(1);
        let l0 = steth_loop(one, r("0.73"), Some(0)).unwrap();
        assert_eq!((l0.exposure, l0.debt), (one, Amount::ZERO));
        let l1 = steth_loop(one, r("0.73"), Some(1)).unwrap();
        assert_eq!(l1.exposure, "1.73".parse().unwrap());
        assert_eq!(l1.debt, "0.73".parse().unwrap());
        let inf = steth_loop(one, r("0.73"), None).unwrap();
        assert!((inf.exposure.to_f64() - 1.0 / 0.27).abs() < 1e-12);
        assert_eq!(steth_loop(one, Ray::ONE, None), Err(ForkError::InvalidLtv));
        assert_eq!(
            steth_loop(one, Ray::ZERO, Some(3)),
            Err(ForkError::InvalidLtv)
        );
    }

    #[test]
    fn carry_examples() {
        let one = Amount::from_tokens(1);
        let c = loop_carry(
            r("0.04"),
            r("0.03"),
            "3.7037".parse().unwrap(),
            "2.7037".parse().unwrap(),
            one,
        );
        assert!((c.to_f64() - 0.067_037).abs() < 1e-12);
        let inf = steth_loop(one, r("0.73"), None).unwrap();
        let same = loop_carry(r("0.04"), r("0.04"), inf.exposure, inf.debt, one);
        assert!((same.to_f64() - 0.04).abs() < 1e-15);
        assert!(loop_carry(r("0.04"), r("1.03"), inf.exposure, inf.debt, one).is_negative());
    }
}
