use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::agents::AgentSpec;
use super::ScenarioError;
use crate::fixed::{Amount, Price};
use crate::ids::{AccountId, AssetId, MarketId};
use crate::market::{BorrowMode, MarketConfig};
use crate::rates::{RateModel, ReserveFactor};
use crate::risk::CollateralConfig;

pub const DEFAULT_CHECKPOINT_INTERVAL: u64 = 3600;

fn default_interval() -> u64 {
    DEFAULT_CHECKPOINT_INTERVAL
}

fn default_native() -> AssetId {
    "ETH".into()
}

/// A scenario script as stored on disk (JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub start: u64,
    pub end: u64,
    #[serde(default = "default_interval")]
    pub checkpoint_interval: u64,
    /// Price CSV, relative to the scenario file.
    #[serde(default)]
    pub prices: Option<PathBuf>,
    #[serde(default = "default_native")]
    pub native_asset: AssetId,
    pub markets: Vec<MarketConfig>,
    /// Collateral parameters keyed by the market that holds the collateral.
    #[serde(default)]
    pub collateral_configs: BTreeMap<MarketId, CollateralConfig>,
    #[serde(default)]
    pub accounts: Vec<AccountSpec>,
    #[serde(default)]
    pub agents: Vec<AgentSpec>,
    #[serde(default)]
    pub events: Vec<ScriptedEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccountSpec {
    pub id: AccountId,
    #[serde(default)]
    pub wallet: BTreeMap<AssetId, Amount>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedEvent {
    pub time: u64,
    #[serde(flatten)]
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    Deposit {
        account: AccountId,
        market: MarketId,
        amount: Amount,
    },
    Withdraw {
        account: AccountId,
        market: MarketId,
        amount: Amount,
    },
    Borrow {
        account: AccountId,
        market: MarketId,
        amount: Amount,
        #[serde(default = "variable")]
        mode: BorrowMode,
    },
    Repay {
        account: AccountId,
        market: MarketId,
        amount: Amount,
        #[serde(default = "variable")]
        mode: BorrowMode,
    },
    Liquidate {
        liquidator: AccountId,
        borrower: AccountId,
        debt_market: MarketId,
        collateral_market: MarketId,
        amount: Amount,
    },
    SetRateModel {
        market: MarketId,
        model: RateModel,
        #[serde(default)]
        stable_model: Option<RateModel>,
    },
    SetBorrowCap {
        market: MarketId,
        cap: Option<Amount>,
    },
    SetPause {
        market: MarketId,
        paused: bool,
    },
    SetReserveFactor {
        market: MarketId,
        reserve_factor: ReserveFactor,
    },
    RebalanceStable {
        account: AccountId,
        market: MarketId,
    },
    PriceTick {
        asset: AssetId,
        price: Price,
    },
    Fork {
        #[serde(default = "default_native")]
        parent_asset: AssetId,
        #[serde(default = "default_forked")]
        forked_asset: AssetId,
    },
    Checkpoint,
}

fn variable() -> BorrowMode {
    BorrowMode::Variable
}

fn default_forked() -> AssetId {
    "ETHW".into()
}

impl Action {
    pub fn name(&self) -> &'static str {
        match self {
            Action::Deposit { .. } => "deposit",
            Action::Withdraw { .. } => "withdraw",
            Action::Borrow { .. } => "borrow",
            Action::Repay { .. } => "repay",
            Action::Liquidate { .. } => "liquidate",
            Action::SetRateModel { .. } => "set_rate_model",
            Action::SetBorrowCap { .. } => "set_borrow_cap",
            Action::SetPause { .. } => "set_pause",
            Action::SetReserveFactor { .. } => "set_reserve_factor",
            Action::RebalanceStable { .. } => "rebalance_stable",
            Action::PriceTick { .. } => "price_tick",
            Action::Fork { .. } => "fork",
            Action::Checkpoint => "checkpoint",
        }
    }

    /// Markets the action touches, for reference checks.
    pub fn markets(&self) -> Vec<&MarketId> {
        match self {
            Action::Deposit { market, .. }
            | Action::Withdraw { market, .. }
            | Action::Borrow { market, .. }
            | Action::Repay { market, .. }
            | Action::SetRateModel { market, .. }
            | Action::SetBorrowCap { market, .. }
            | Action::SetPause { market, .. }
            | Action::SetReserveFactor { market, .. }
            | Action::RebalanceStable { market, .. } => vec![market],
            Action::Liquidate {
                debt_market,
                collateral_market,
                ..
            } => vec![debt_market, collateral_market],
            Action::PriceTick { .. } | Action::Fork { .. } | Action::Checkpoint => vec![],
        }
    }

    pub fn accounts(&self) -> Vec<&AccountId> {
        match self {
            Action::Deposit { account, .. }
            | Action::Withdraw { account, .. }
            | Action::Borrow { account, .. }
            | Action::Repay { account, .. }
            | Action::RebalanceStable { account, .. } => vec![account],
            Action::Liquidate {
                liquidator,
                borrower,
                ..
            } => vec![liquidator, borrower],
            _ => vec![],
        }
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    /// Read a scenario and resolve its price path against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::io(path, e))?;
        let mut s = Self::from_json(&text)?;
        if let Some(p) = s.prices.take() {
            let base = path.parent().unwrap_or_else(|| Path::new("."));
            s.prices = Some(if p.is_absolute() { p } else { base.join(p) });
        }
        Ok(s)
    }

    pub fn market(&self, id: &MarketId) -> Option<&MarketConfig> {
        self.markets.iter().find(|m| &m.id == id)
    }

    pub fn fork_events(&self) -> impl Iterator<Item = &ScriptedEvent> {
        self.events
            .iter()
            .filter(|e| matches!(e.action, Action::Fork { .. }))
    }

    pub fn fork_time(&self) -> Option<u64> {
        self.fork_events().next().map(|e| e.time)
    }

    /// Checkpoint times: start, start + interval, ... up to and including end.
    pub fn checkpoint_times(&self) -> Vec<u64> {
        if self.checkpoint_interval == 0 || self.end < self.start {
            return Vec::new();
        }
        (self.start..=self.end)
            .step_by(self.checkpoint_interval as usize)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_and_events() {
        let s = Scenario::from_json(
            r#"{
                "start": 0, "end": 7200, "markets": [],
                "events": [
                    {"time": 0, "kind": "deposit", "account": "a", "market": "m", "amount": "1.5"},
                    {"time": 10, "kind": "set_borrow_cap", "market": "m", "cap": "100000"},
                    {"time": 20, "kind": "fork"},
                    {"time": 30, "kind": "checkpoint"}
                ]
            }"#,
        )
        .unwrap();
        assert_eq!(s.checkpoint_interval, 3600);
        assert_eq!(s.checkpoint_times(), vec![0, 3600, 7200]);
        assert_eq!(s.fork_time(), Some(20));
        assert_eq!(
            s.events[0].action,
            Action::Deposit {
                account: "a".into(),
                market: "m".into(),
                amount: "1.5".parse().unwrap()
            }
        );
        assert!(matches!(
            &s.events[2].action,
            Action::Fork { parent_asset, .. } if parent_asset.as_str() == "ETH"
        ));
    }

    #[test]
    fn rejects_unknown_fields() {
        assert!(Scenario::from_json(r#"{"start":0,"end":1,"markets":[],"bogus":1}"#).is_err());
    }
}
