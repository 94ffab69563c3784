use std::collections::{BTreeMap, BTreeSet};

use super::{Account, BorrowMode, MarketConfig, MarketError, MarketState};
use crate::fixed::Amount;
use crate::ids::MarketId;
use crate::risk::{
    self, liquidation_size, AccountSnapshot, BadDebt, CollateralConfig, ConfigMap, HealthFactor,
    HealthParts, LiquidationRecord, PriceMap,
};

/// Every market in a run plus the collateral parameters each one grants.
/// Solvency is evaluated per protocol: collateral in one protocol never backs debt in another.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Book {
    pub markets: BTreeMap<MarketId, MarketState>,
    pub collateral: BTreeMap<MarketId, CollateralConfig>,
}

impl Book {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_market(
        &mut self,
        config: MarketConfig,
        start: u64,
        collateral: Option<CollateralConfig>,
    ) {
        let id = config.id.clone();
        if let Some(c) = collateral {
            self.collateral.insert(id.clone(), c);
        }
        self.markets.insert(id, MarketState::new(config, start));
    }

    pub fn market(&self, id: &MarketId) -> Result<&MarketState, MarketError> {
        self.markets
            .get(id)
            .ok_or_else(|| MarketError::UnknownMarket(id.clone()))
    }

    pub fn market_mut(&mut self, id: &MarketId) -> Result<&mut MarketState, MarketError> {
        self.markets
            .get_mut(id)
            .ok_or_else(|| MarketError::UnknownMarket(id.clone()))
    }

    pub fn protocols(&self) -> BTreeSet<String> {
        self.markets.values().map(|m| m.protocol.clone()).collect()
    }

    pub fn accrue_all(&mut self, now: u64) -> Result<(), MarketError> {
        self.markets.values_mut().try_for_each(|m| m.accrue(now))
    }

    fn accrue_protocol(&mut self, protocol: &str, now: u64) -> Result<(), MarketError> {
        self.markets
            .values_mut()
            .filter(|m| m.protocol == protocol)
            .try_for_each(|m| m.accrue(now))
    }

    /// Collateral parameters of one protocol, keyed by asset.
    pub fn configs_for(&self, protocol: &str) -> ConfigMap {
        self.markets
            .values()
            .filter(|m| m.protocol == protocol)
            .filter_map(|m| {
                self.collateral
                    .get(&m.id)
                    .map(|c| (m.asset.clone(), c.clone()))
            })
            .collect()
    }

    pub fn snapshot(&self, acct: &Account, protocol: &str) -> AccountSnapshot {
        let mut snap = AccountSnapshot::default();
        for m in self.markets.values().filter(|m| m.protocol == protocol) {
            if let Some(pos) = acct.position(&m.id) {
                snap.push(m.asset.clone(), m.supply_of(pos), m.debt_of(pos));
            }
        }
        snap
    }

    pub fn health_parts(
        &self,
        acct: &Account,
        protocol: &str,
        prices: &PriceMap,
    ) -> Result<HealthParts, MarketError> {
        Ok(risk::health_parts(
            &self.snapshot(acct, protocol),
            prices,
            &self.configs_for(protocol),
        )?)
    }

    pub fn health_factor(
        &self,
        acct: &Account,
        protocol: &str,
        prices: &PriceMap,
    ) -> Result<HealthFactor, MarketError> {
        Ok(self.health_parts(acct, protocol, prices)?.health_factor())
    }

    pub fn has_debt_in_protocol(&self, acct: &Account, protocol: &str) -> bool {
        self.markets
            .values()
            .filter(|m| m.protocol == protocol)
            .any(|m| acct.has_debt_in(&m.id))
    }

    pub fn deposit(
        &mut self,
        acct: &mut Account,
        market: &MarketId,
        amount: Amount,
        now: u64,
    ) -> Result<(), MarketError> {
        self.market_mut(market)?.deposit(acct, amount, now)
    }

    pub fn withdraw(
        &mut self,
        acct: &mut Account,
        market: &MarketId,
        amount: Amount,
        now: u64,
        prices: &PriceMap,
    ) -> Result<(), MarketError> {
        let protocol = self.market(market)?.protocol.clone();
        self.accrue_protocol(&protocol, now)?;
        let m = self.market(market)?;
        let balance = m.supplied_balance(acct);
        if amount.is_zero() || amount > balance || amount > m.cash {
            // let the market report the precise rejection
            return self.market_mut(market)?.withdraw(acct, amount, now);
        }
        if self.has_debt_in_protocol(acct, &protocol) {
            let mut snap = self.snapshot(acct, &protocol);
            for h in snap.holdings.iter_mut().filter(|h| h.asset == m.asset) {
                h.collateral = h.collateral.saturating_sub(amount);
            }
            let after = risk::health_parts(&snap, prices, &self.configs_for(&protocol))?;
            if after.is_liquidatable() {
                return Err(MarketError::WouldBeUnhealthy);
            }
        }
        self.market_mut(market)?.withdraw(acct, amount, now)
    }

    /// Largest loan the account could take right now, limited by borrow power, cap and cash.
    pub fn max_borrow(
        &self,
        acct: &Account,
        market: &MarketId,
        prices: &PriceMap,
    ) -> Result<Amount, MarketError> {
        let m = self.market(market)?;
        let parts = self.health_parts(acct, &m.protocol, prices)?;
        let room = parts.borrow_power.saturating_sub(parts.debt);
        let price = prices.get(&m.asset)?;
        Ok(room.to_amount(price).min(m.borrowable()))
    }

    /// Borrow against collateral in the same protocol. The post-borrow debt must fit within
    /// the LTV-weighted borrow power, which also keeps the health factor at or above 1.
    pub fn borrow(
        &mut self,
        acct: &mut Account,
        market: &MarketId,
        amount: Amount,
        mode: BorrowMode,
        now: u64,
        prices: &PriceMap,
    ) -> Result<(), MarketError> {
        let protocol = self.market(market)?.protocol.clone();
        self.accrue_protocol(&protocol, now)?;
        let m = self.market(market)?;
        m.check_borrow(amount, mode)?;
        let parts = self.health_parts(acct, &protocol, prices)?;
        let added = amount.value_at(prices.get(&m.asset)?);
        if parts.debt.add(added) > parts.borrow_power {
            return Err(MarketError::WouldBeUnhealthy);
        }
        self.market_mut(market)?.borrow(acct, amount, mode, now)
    }

    pub fn repay(
        &mut self,
        acct: &mut Account,
        market: &MarketId,
        amount: Amount,
        mode: BorrowMode,
        now: u64,
    ) -> Result<Amount, MarketError> {
        self.market_mut(market)?.repay(acct, amount, mode, now)
    }

    pub fn rebalance_stable(
        &mut self,
        acct: &mut Account,
        market: &MarketId,
        now: u64,
    ) -> Result<bool, MarketError> {
        self.market_mut(market)?.rebalance_stable(acct, now)
    }

    /// Repay part of `borrower`'s debt in `debt_market` from the liquidator's wallet and hand the
    /// liquidator a discounted slice of the borrower's supply in `collateral_market`.
    #[allow(clippy::too_many_arguments)]
    pub fn liquidate(
        &mut self,
        liquidator: &mut Account,
        borrower: &mut Account,
        debt_market: &MarketId,
        collateral_market: &MarketId,
        requested: Amount,
        now: u64,
        prices: &PriceMap,
    ) -> Result<LiquidationRecord, MarketError> {
        let protocol = self.market(debt_market)?.protocol.clone();
        if self.market(collateral_market)?.protocol != protocol {
            return Err(MarketError::NoSuchCollateral(collateral_market.clone()));
        }
        self.accrue_protocol(&protocol, now)?;
        let before = self.health_parts(borrower, &protocol, prices)?;
        if !before.is_liquidatable() {
            return Err(MarketError::NotLiquidatable);
        }

        let cm = self.market(collateral_market)?;
        let available = cm.supplied_balance(borrower);
        let cfg = self
            .collateral
            .get(collateral_market)
            .filter(|c| c.usable_as_collateral);
        let Some(cfg) = cfg.filter(|_| !available.is_zero()) else {
            return Err(MarketError::NoSuchCollateral(collateral_market.clone()));
        };
        let collateral_asset = cm.asset.clone();
        let p_coll = prices.get(&collateral_asset)?;

        let dm = self.market(debt_market)?;
        let debt_asset = dm.asset.clone();
        let p_debt = prices.get(&debt_asset)?;
        let pos = borrower.position(debt_market).cloned().unwrap_or_default();
        let variable = dm.variable_debt_of(&pos);
        let owed = variable.add(dm.stable_debt_of(&pos));
        if owed.is_zero() {
            return Err(MarketError::NoDebt);
        }

        let size = liquidation_size(requested, owed, available, p_debt, p_coll, cfg);
        if size.repay.is_zero() {
            return Err(MarketError::ZeroAmount);
        }
        let wallet = liquidator.wallet_balance(&debt_asset);
        if wallet < size.repay {
            return Err(MarketError::InsufficientWallet {
                needed: size.repay,
                available: wallet,
            });
        }

        let dm = self.market_mut(debt_market)?;
        let mut repaid = Amount::ZERO;
        let from_variable = size.repay.min(variable);
        if !from_variable.is_zero() {
            repaid = repaid.add(dm.repay_on_behalf(
                liquidator,
                borrower,
                from_variable,
                BorrowMode::Variable,
                now,
            )?);
        }
        let from_stable = size.repay.saturating_sub(repaid);
        if !from_stable.is_zero() {
            repaid = repaid.add(dm.repay_on_behalf(
                liquidator,
                borrower,
                from_stable,
                BorrowMode::Stable,
                now,
            )?);
        }
        self.market_mut(collateral_market)?
            .transfer_supply(borrower, liquidator, size.seize)?;

        let after = self.health_parts(borrower, &protocol, prices)?;
        Ok(LiquidationRecord {
            time: now,
            liquidator: liquidator.id.clone(),
            borrower: borrower.id.clone(),
            protocol,
            debt_market: debt_market.clone(),
            debt_asset,
            collateral_market: collateral_market.clone(),
            collateral_asset,
            repaid,
            seized: size.seize,
            repaid_value: repaid.value_at(p_debt),
            seized_value: size.seize.value_at(p_coll),
            health_before: before.health_factor(),
            health_after: after.health_factor(),
        })
    }

    /// Bad debt across every (account, protocol) pair.
    pub fn bad_debt<'a>(
        &self,
        accounts: impl IntoIterator<Item = &'a Account>,
        prices: &PriceMap,
    ) -> Result<BadDebt, MarketError> {
        let protocols = self.protocols();
        let configs: BTreeMap<&String, ConfigMap> =
            protocols.iter().map(|p| (p, self.configs_for(p))).collect();
        let mut total = BadDebt::default();
        for acct in accounts {
            for p in &protocols {
                let snap = self.snapshot(acct, p);
                if snap.holdings.is_empty() {
                    continue;
                }
                let bd = risk::bad_debt([&snap], prices, &configs[p])?;
                total.total_debt_value = total.total_debt_value.add(bd.total_debt_value);
                total.bad_debt_value = total.bad_debt_value.add(bd.bad_debt_value);
            }
        }
        Ok(total)
    }
}
