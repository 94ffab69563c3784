use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::fixed::{Amount, Ray, SignedValue};
use crate::ids::{AccountId, AssetId, MarketId};

/// A stable-rate loan: scaled units in the market bucket for `rate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StableLoan {
    pub rate: Ray,
    pub scaled: Amount,
}

/// One account's balances in one market.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Position {
    pub scaled_collateral: Amount,
    pub scaled_variable_debt: Amount,
    pub stable: Option<StableLoan>,
    /// Cumulative underlying credited to the supply side (deposits, seized collateral).
    pub deposited: Amount,
    /// Cumulative underlying debited from the supply side (withdrawals, seizures).
    pub withdrawn: Amount,
}

impl Position {
    pub fn is_empty(&self) -> bool {
        self.scaled_collateral.is_zero()
            && self.scaled_variable_debt.is_zero()
            && self.stable.is_none()
    }

    pub fn has_debt(&self) -> bool {
        !self.scaled_variable_debt.is_zero() || self.stable.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Account {
    pub id: AccountId,
    /// Unlocked token balances; these are what a fork snapshot sees.
    pub wallet: BTreeMap<AssetId, Amount>,
    pub positions: BTreeMap<MarketId, Position>,
}

impl Account {
    pub fn new(id: impl Into<AccountId>) -> Self {
        Account {
            id: id.into(),
            wallet: BTreeMap::new(),
            positions: BTreeMap::new(),
        }
    }

    pub fn with_wallet(mut self, asset: &str, amount: Amount) -> Self {
        self.credit(&AssetId::new(asset), amount);
        self
    }

    pub fn wallet_balance(&self, asset: &AssetId) -> Amount {
        self.wallet.get(asset).copied().unwrap_or(Amount::ZERO)
    }

    pub fn credit(&mut self, asset: &AssetId, amount: Amount) {
        let bal = self.wallet.entry(asset.clone()).or_default();
        *bal = bal.add(amount);
    }

    /// Returns false (and leaves the wallet untouched) if the balance is short.
    pub fn debit(&mut self, asset: &AssetId, amount: Amount) -> bool {
        match self.wallet_balance(asset).checked_sub(amount) {
            Some(rest) => {
                self.wallet.insert(asset.clone(), rest);
                true
            }
            None => false,
        }
    }

    pub fn position(&self, market: &MarketId) -> Option<&Position> {
        self.positions.get(market)
    }

    pub fn position_mut(&mut self, market: &MarketId) -> &mut Position {
        self.positions.entry(market.clone()).or_default()
    }

    pub fn has_debt_in(&self, market: &MarketId) -> bool {
        self.positions.get(market).is_some_and(Position::has_debt)
    }
}

/// Interest earned on a supply position: current balance plus withdrawals minus deposits.
pub fn supply_income(current: Amount, pos: &Position) -> SignedValue {
    let plus = current.add(pos.withdrawn).raw() as i128;
    SignedValue::from_raw(plus - pos.deposited.raw() as i128)
}
