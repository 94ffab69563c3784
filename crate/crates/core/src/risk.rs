//! Health factors, liquidation sizing and bad-debt measurement.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Datelike, NaiveDate};
use ethnum::U256;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::fixed::{mul_div, Amount, Price, Ray, Rounding, Value, RAY};
use crate::ids::{AccountId, AssetId, MarketId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RiskError {
    #[error("no price for {0}")]
    MissingPrice(AssetId),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("collateral config for {asset}: {reason}")]
pub struct ConfigError {
    pub asset: AssetId,
    pub reason: &'static str,
}

fn default_bonus() -> Ray {
    Ray::ratio(5, 100)
}

fn default_close_factor() -> Ray {
    Ray::ratio(1, 2)
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollateralConfig {
    pub asset: AssetId,
    /// Borrow power per unit of collateral value.
    pub ltv: Ray,
    /// Weight of this collateral in the health-factor numerator.
    pub liquidation_threshold: Ray,
    #[serde(default = "default_bonus")]
    pub liquidation_bonus: Ray,
    /// Largest fraction of a debt one liquidation may repay.
    #[serde(default = "default_close_factor")]
    pub close_factor: Ray,
    #[serde(default = "default_true")]
    pub usable_as_collateral: bool,
}

impl CollateralConfig {
    pub fn new(asset: &str, ltv: Ray, liquidation_threshold: Ray) -> Self {
        CollateralConfig {
            asset: asset.into(),
            ltv,
            liquidation_threshold,
            liquidation_bonus: default_bonus(),
            close_factor: default_close_factor(),
            usable_as_collateral: true,
        }
    }

    pub fn eth() -> Self {
        Self::new("ETH", Ray::ratio(80, 100), Ray::ratio(825, 1000))
    }

    pub fn steth() -> Self {
        Self::new("stETH", Ray::ratio(73, 100), Ray::ratio(75, 100))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |reason| {
            Err(ConfigError {
                asset: self.asset.clone(),
                reason,
            })
        };
        if self.ltv.is_zero() || self.ltv > self.liquidation_threshold {
            return err("ltv must be positive and at most the liquidation threshold");
        }
        if self.liquidation_threshold >= Ray::ONE {
            return err("liquidation threshold must be below 1");
        }
        if self.liquidation_bonus > Ray::ratio(1, 2) {
            return err("liquidation bonus must be at most 0.5");
        }
        if self.close_factor.is_zero() || self.close_factor > Ray::ONE {
            return err("close factor must be in (0, 1]");
        }
        Ok(())
    }
}

/// Threshold-weighted collateral over debt. Zero debt is `Infinite`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HealthFactor {
    Finite(Ray),
    Infinite,
}

impl HealthFactor {
    pub fn is_liquidatable(self) -> bool {
        matches!(self, HealthFactor::Finite(h) if h < Ray::ONE)
    }

    pub fn to_f64(self) -> f64 {
        match self {
            HealthFactor::Finite(h) => h.to_f64(),
            HealthFactor::Infinite => f64::INFINITY,
        }
    }
}

impl Ord for HealthFactor {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (HealthFactor::Finite(a), HealthFactor::Finite(b)) => a.cmp(b),
            (HealthFactor::Finite(_), HealthFactor::Infinite) => Ordering::Less,
            (HealthFactor::Infinite, HealthFactor::Finite(_)) => Ordering::Greater,
            (HealthFactor::Infinite, HealthFactor::Infinite) => Ordering::Equal,
        }
    }
}

impl PartialOrd for HealthFactor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for HealthFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HealthFactor::Finite(h) => h.fmt(f),
            HealthFactor::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for HealthFactor {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Prices in USD per whole token at one instant.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PriceMap {
    pub time: u64,
    prices: BTreeMap<AssetId, Price>,
}

impl PriceMap {
    pub fn new(time: u64) -> Self {
        PriceMap {
            time,
            prices: BTreeMap::new(),
        }
    }

    pub fn with(mut self, asset: &str, price: Price) -> Self {
        self.set(asset.into(), price);
        self
    }

    pub fn set(&mut self, asset: AssetId, price: Price) {
        self.prices.insert(asset, price);
    }

    pub fn get(&self, asset: &AssetId) -> Result<Price, RiskError> {
        match self.prices.get(asset) {
            Some(p) if !p.is_zero() => Ok(*p),
            _ => Err(RiskError::MissingPrice(asset.clone())),
        }
    }

    /// Multiply every price by `k` (used by homogeneity checks).
    pub fn scaled(&self, k: Ray) -> PriceMap {
        PriceMap {
            time: self.time,
            prices: self
                .prices
                .iter()
                .map(|(a, p)| (a.clone(), p.mul_ray(k)))
                .collect(),
        }
    }
}

/// Underlying balances of one asset within one protocol.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Holding {
    pub asset: AssetId,
    pub collateral: Amount,
    pub debt: Amount,
}

/// An account's balances within one protocol, already converted from scaled units.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccountSnapshot {
    pub holdings: Vec<Holding>,
}

impl AccountSnapshot {
    pub fn push(&mut self, asset: AssetId, collateral: Amount, debt: Amount) {
        self.holdings.push(Holding {
            asset,
            collateral,
            debt,
        });
    }

    pub fn has_debt(&self) -> bool {
        self.holdings.iter().any(|h| !h.debt.is_zero())
    }
}

pub type ConfigMap = BTreeMap<AssetId, CollateralConfig>;

/// Value aggregates behind a health factor.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HealthParts {
    /// Σ C·p·l over usable collateral.
    pub weighted_collateral: Value,
    /// Σ C·p·ltv over usable collateral.
    pub borrow_power: Value,
    /// Σ C·p over every collateral asset, unweighted.
    pub collateral: Value,
    pub debt: Value,
}

impl HealthParts {
    pub fn health_factor(&self) -> HealthFactor {
        if self.debt.is_zero() {
            return HealthFactor::Infinite;
        }
        HealthFactor::Finite(saturating_ratio(self.weighted_collateral, self.debt))
    }

    pub fn is_liquidatable(&self) -> bool {
        !self.debt.is_zero() && self.weighted_collateral < self.debt
    }

    pub fn shortfall(&self) -> Value {
        self.debt.saturating_sub(self.collateral)
    }
}

fn saturating_ratio(num: Value, den: Value) -> Ray {
    let q = U256::from(num.raw()) * U256::from(RAY) / U256::from(den.raw());
    Ray::from_raw(u128::try_from(q).unwrap_or(u128::MAX))
}

pub fn health_parts(
    snap: &AccountSnapshot,
    prices: &PriceMap,
    configs: &ConfigMap,
) -> Result<HealthParts, RiskError> {
    let mut parts = HealthParts::default();
    for h in &snap.holdings {
        if h.collateral.is_zero() && h.debt.is_zero() {
            continue;
        }
        let p = prices.get(&h.asset)?;
        if !h.collateral.is_zero() {
            let v = h.collateral.value_at(p);
            parts.collateral = parts.collateral.add(v);
            if let Some(cfg) = configs.get(&h.asset).filter(|c| c.usable_as_collateral) {
                parts.weighted_collateral = parts
                    .weighted_collateral
                    .add(v.mul_ray(cfg.liquidation_threshold));
                parts.borrow_power = parts.borrow_power.add(v.mul_ray(cfg.ltv));
            }
        }
        parts.debt = parts.debt.add(h.debt.value_at(p));
    }
    Ok(parts)
}

pub fn health_factor(
    snap: &AccountSnapshot,
    prices: &PriceMap,
    configs: &ConfigMap,
) -> Result<HealthFactor, RiskError> {
    Ok(health_parts(snap, prices, configs)?.health_factor())
}

/// Strict: an account sitting exactly at 1 is safe.
pub fn is_liquidatable(
    snap: &AccountSnapshot,
    prices: &PriceMap,
    configs: &ConfigMap,
) -> Result<bool, RiskError> {
    Ok(health_parts(snap, prices, configs)?.is_liquidatable())
}

/// Repay and seize sizes for one liquidation, both in token units.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LiquidationSize {
    pub repay: Amount,
    pub seize: Amount,
}

/// Clamp `requested` to the close factor, then size the collateral seizure at a
/// `1 + bonus` premium, shrinking the repayment if collateral runs out.
pub fn liquidation_size(
    requested: Amount,
    owed: Amount,
    collateral_available: Amount,
    debt_price: Price,
    collateral_price: Price,
    cfg: &CollateralConfig,
) -> LiquidationSize {
    let max_repay = owed.mul_ray(cfg.close_factor, Rounding::Down);
    let repay = requested.min(max_repay);
    let premium = Ray::ONE.add(cfg.liquidation_bonus);
    let seize = repay
        .value_at(debt_price)
        .mul_ray(premium)
        .to_amount(collateral_price);
    if seize <= collateral_available {
        return LiquidationSize { repay, seize };
    }
    let seize = collateral_available;
    let seize_value = seize.value_at(collateral_price);
    let repay_value = Value::from_raw(mul_div(
        seize_value.raw(),
        RAY,
        premium.raw(),
        Rounding::Down,
    ));
    LiquidationSize {
        repay: repay_value.to_amount(debt_price).min(repay),
        seize,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LiquidationRecord {
    pub time: u64,
    pub liquidator: AccountId,
    pub borrower: AccountId,
    pub protocol: String,
    pub debt_market: MarketId,
    pub debt_asset: AssetId,
    pub collateral_market: MarketId,
    pub collateral_asset: AssetId,
    pub repaid: Amount,
    pub seized: Amount,
    pub repaid_value: Value,
    pub seized_value: Value,
    pub health_before: HealthFactor,
    pub health_after: HealthFactor,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct BadDebt {
    pub total_debt_value: Value,
    pub bad_debt_value: Value,
}

impl BadDebt {
    pub fn ratio(&self) -> Ray {
        if self.total_debt_value.is_zero() {
            return Ray::ZERO;
        }
        self.bad_debt_value.ratio(self.total_debt_value)
    }
}

/// Σ max(0, debt − collateral) over snapshots, valuing collateral without threshold weights.
pub fn bad_debt<'a>(
    snapshots: impl IntoIterator<Item = &'a AccountSnapshot>,
    prices: &PriceMap,
    configs: &ConfigMap,
) -> Result<BadDebt, RiskError> {
    let mut out = BadDebt::default();
    for snap in snapshots {
        let parts = health_parts(snap, prices, configs)?;
        out.total_debt_value = out.total_debt_value.add(parts.debt);
        out.bad_debt_value = out.bad_debt_value.add(parts.shortfall());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CensusWindow {
    CalendarMonth,
    Fixed { origin: u64, seconds: u64 },
}

impl CensusWindow {
    pub fn bucket_start(&self, t: u64) -> u64 {
        match *self {
            CensusWindow::CalendarMonth => month_start(t),
            CensusWindow::Fixed { origin, seconds } => {
                if t < origin {
                    origin - (origin - t).div_ceil(seconds) * seconds
                } else {
                    origin + (t - origin) / seconds * seconds
                }
            }
        }
    }

    fn next(&self, start: u64) -> u64 {
        match *self {
            CensusWindow::CalendarMonth => {
                let d = utc_date(start);
                let (y, m) = if d.month() == 12 {
                    (d.year() + 1, 1)
                } else {
                    (d.year(), d.month() + 1)
                };
                date_ts(NaiveDate::from_ymd_opt(y, m, 1).expect("valid month"))
            }
            CensusWindow::Fixed { seconds, .. } => start + seconds,
        }
    }
}

fn utc_date(t: u64) -> NaiveDate {
    DateTime::from_timestamp(t as i64, 0)
        .expect("timestamp in range")
        .date_naive()
}

fn date_ts(d: NaiveDate) -> u64 {
    d.and_hms_opt(0, 0, 0)
        .expect("midnight")
        .and_utc()
        .timestamp() as u64
}

/// 00:00 UTC on the first day of the month containing `t`.
pub fn month_start(t: u64) -> u64 {
    date_ts(utc_date(t).with_day(1).expect("day 1 exists"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CensusBucket {
    pub start: u64,
    pub total: u64,
    pub native: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Census {
    pub total: u64,
    /// Liquidations that covered debt in the native asset.
    pub native: u64,
    /// Contiguous windows from the first to the last record, empty windows included.
    pub buckets: Vec<CensusBucket>,
}

impl Census {
    pub fn bucket_at(&self, t: u64, window: CensusWindow) -> Option<&CensusBucket> {
        let start = window.bucket_start(t);
        self.buckets.iter().find(|b| b.start == start)
    }

    /// Mean count of the windows strictly before the one containing `t`.
    pub fn trailing_mean(&self, t: u64, window: CensusWindow) -> Option<f64> {
        let start = window.bucket_start(t);
        let prior: Vec<u64> = self
            .buckets
            .iter()
            .filter(|b| b.start < start)
            .map(|b| b.total)
            .collect();
        (!prior.is_empty()).then(|| prior.iter().sum::<u64>() as f64 / prior.len() as f64)
    }
}

pub fn liquidation_census(
    records: &[LiquidationRecord],
    window: CensusWindow,
    native: &AssetId,
) -> Census {
    let mut counts: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
    for r in records {
        let c = counts.entry(window.bucket_start(r.time)).or_default();
        c.0 += 1;
        if &r.debt_asset == native {
            c.1 += 1;
        }
    }
    let mut census = Census::default();
    let (Some(&first), Some(&last)) = (counts.keys().next(), counts.keys().next_back()) else {
        return census;
    };
    let mut start = first;
    while start <= last {
        let (total, nat) = counts.get(&start).copied().unwrap_or_default();
        census.total += total;
        census.native += nat;
        census.buckets.push(CensusBucket {
            start,
            total,
            native: nat,
        });
        start = window.next(start);
    }
    census
}

#[cfg(test)]
mod tests {
    use super::*;

    fn usd(n: u64) -> Price {
        Price::from_int(n)
    }

    fn configs(l: &str) -> ConfigMap {
        let l: Ray = l.parse().unwrap();
        let mut m = ConfigMap::new();
        m.insert("ETH".into(), CollateralConfig::new("ETH", l, l));
        m
    }

    fn snap(coll: u64, debt: u64) -> AccountSnapshot {
        let mut s = AccountSnapshot::default();
        s.push("ETH".into(), Amount::from_tokens(coll), Amount::ZERO);
        s.push("USDC".into(), Amount::ZERO, Amount::from_tokens(debt));
        s
    }

    fn prices() -> PriceMap {
        PriceMap::new(0).with("ETH", usd(1)).with("USDC", usd(1))
    }

    #[test]
    fn health_factor_examples() {
        let cfg = configs("0.75");
        assert_eq!(
            health_factor(&snap(100, 0), &prices(), &cfg).unwrap(),
            HealthFactor::Infinite
        );
        let h = health_factor(&snap(100, 75), &prices(), &cfg).unwrap();
        assert_eq!(h, HealthFactor::Finite(Ray::ONE));
        assert!(!h.is_liquidatable());
        let h = health_factor(&snap(100, 80), &prices(), &cfg).unwrap();
        assert_eq!(h, HealthFactor::Finite("0.9375".parse().unwrap()));
        assert!(h.is_liquidatable());
        assert!(!is_liquidatable(&snap(100, 0), &prices(), &cfg).unwrap());
    }

    #[test]
    fn missing_price_is_reported() {
        let p = PriceMap::new(0).with("ETH", usd(1));
        assert_eq!(
            health_factor(&snap(1, 1), &p, &configs("0.75")),
            Err(RiskError::MissingPrice("USDC".into()))
        );
    }

    #[test]
    fn unusable_collateral_is_ignored() {
        let mut cfg = configs("0.75");
        cfg.get_mut(&AssetId::from("ETH"))
            .unwrap()
            .usable_as_collateral = false;
        let h = health_factor(&snap(100, 10), &prices(), &cfg).unwrap();
        assert_eq!(h, HealthFactor::Finite(Ray::ZERO));
    }

    #[test]
    fn liquidation_sizing_example() {
        let cfg = CollateralConfig::new("ETH", "0.7".parse().unwrap(), "0.75".parse().unwrap());
        let size = liquidation_size(
            Amount::from_tokens(100),
            Amount::from_tokens(80),
            Amount::from_tokens(100),
            usd(1),
            usd(1),
            &cfg,
        );
        assert_eq!(size.repay, Amount::from_tokens(40));
        assert_eq!(size.seize, Amount::from_tokens(42));

        // collateral runs out: repay shrinks so that seize = available
        let size = liquidation_size(
            Amount::from_tokens(40),
            Amount::from_tokens(80),
            Amount::from_tokens(21),
            usd(1),
            usd(1),
            &cfg,
        );
        assert_eq!(size.seize, Amount::from_tokens(21));
        assert_eq!(size.repay, Amount::from_tokens(20));
    }

    #[test]
    fn bad_debt_examples() {
        let cfg = configs("0.75");
        let healthy = [snap(200, 100), snap(50, 10)];
        let bd = bad_debt(&healthy, &prices(), &cfg).unwrap();
        assert_eq!(bd.bad_debt_value, Value::ZERO);
        assert_eq!(
            bd.total_debt_value,
            Amount::from_tokens(110).value_at(usd(1))
        );

        let bd = bad_debt(&[snap(100, 120)], &prices(), &cfg).unwrap();
        assert_eq!(bd.bad_debt_value, Amount::from_tokens(20).value_at(usd(1)));
    }

    fn record(time: u64, debt: &str) -> LiquidationRecord {
        LiquidationRecord {
            time,
            liquidator: "k".into(),
            borrower: "b".into(),
            protocol: "aave".into(),
            debt_market: "m".into(),
            debt_asset: debt.into(),
            collateral_market: "c".into(),
            collateral_asset: "ETH".into(),
            repaid: Amount::ZERO,
            seized: Amount::ZERO,
            repaid_value: Value::ZERO,
            seized_value: Value::ZERO,
            health_before: HealthFactor::Infinite,
            health_after: HealthFactor::Infinite,
        }
    }

    #[test]
    fn census_counts() {
        let eth = AssetId::from("ETH");
        let c = liquidation_census(&[], CensusWindow::CalendarMonth, &eth);
        assert_eq!((c.total, c.native), (0, 0));

        // 2022-08-10, 2022-08-20, 2022-10-02 (September empty)
        let recs = [
            record(1_660_089_600, "ETH"),
            record(1_660_953_600, "USDC"),
            record(1_660_953_600, "USDC"),
            record(1_664_668_800, "ETH"),
            record(1_664_668_800, "USDC"),
        ];
        let c = liquidation_census(&recs, CensusWindow::CalendarMonth, &eth);
        assert_eq!((c.total, c.native), (5, 2));
        assert_eq!(c.buckets.len(), 3);
        assert_eq!(c.buckets[0].start, 1_659_312_000);
        assert_eq!(c.buckets[1].start, 1_661_990_400);
        assert_eq!(c.buckets[1].total, 0);
        assert_eq!(
            c.trailing_mean(1_664_668_800, CensusWindow::CalendarMonth),
            Some(1.5)
        );
    }

    #[test]
    fn fixed_windows() {
        let w = CensusWindow::Fixed {
            origin: 100,
            seconds: 10,
        };
        assert_eq!(w.bucket_start(100), 100);
        assert_eq!(w.bucket_start(119), 110);
        assert_eq!(w.bucket_start(95), 90);
    }

    #[test]
    fn config_validation() {
        assert!(CollateralConfig::eth().validate().is_ok());
        assert!(CollateralConfig::steth().validate().is_ok());
        let bad = CollateralConfig::new("X", "0.9".parse().unwrap(), "0.8".parse().unwrap());
        assert!(bad.validate().is_err());
    }
}
