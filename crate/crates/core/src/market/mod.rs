//! Per-asset lending pools and the account balances held against them.

mod account;
mod book;
mod state;

use thiserror::Error;

use crate::fixed::Amount;
use crate::ids::{AssetId, MarketId};

pub use account::{supply_income, Account, Position, StableLoan};
pub use book::Book;
pub use state::{
    block_height, compound_growth, linear_growth, AccrualMode, BorrowMode, MarketConfig,
    MarketState, StableBucket, DEFAULT_BLOCK_TIME_MS,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MarketError {
    #[error("clock regression: accrual to {now} requested but market is at {last}")]
    ClockRegression { now: u64, last: u64 },
    #[error("amount must be positive")]
    ZeroAmount,
    #[error("wallet holds {available}, needs {needed}")]
    InsufficientWallet { needed: Amount, available: Amount },
    #[error("requested {requested} exceeds supplied balance {balance}")]
    InsufficientBalance { requested: Amount, balance: Amount },
    #[error("requested {requested} exceeds pool cash {cash}")]
    InsufficientLiquidity { requested: Amount, cash: Amount },
    #[error("operation would leave the account unhealthy")]
    WouldBeUnhealthy,
    #[error("borrowing is paused")]
    BorrowingPaused,
    #[error("borrow of {amount} on debt {debt} exceeds cap {cap}")]
    CapExceeded {
        cap: Amount,
        debt: Amount,
        amount: Amount,
    },
    #[error("stable-rate borrowing is disabled")]
    StableDisabled,
    #[error("account has no debt of that kind")]
    NoDebt,
    #[error("account has no stable loan")]
    NoStableDebt,
    #[error("account is not liquidatable")]
    NotLiquidatable,
    #[error("account has no collateral in {0}")]
    NoSuchCollateral(MarketId),
    #[error("unknown market {0}")]
    UnknownMarket(MarketId),
    #[error("no price for {0}")]
    MissingPrice(AssetId),
}

impl MarketError {
    /// Errors that reject a single user action without invalidating the run.
    pub fn is_rejection(&self) -> bool {
        !matches!(
            self,
            MarketError::ClockRegression { .. }
                | MarketError::UnknownMarket(_)
                | MarketError::MissingPrice(_)
        )
    }

    /// Short machine-readable name, used in action logs.
    pub fn code(&self) -> &'static str {
        match self {
            MarketError::ClockRegression { .. } => "ClockRegression",
            MarketError::ZeroAmount => "ZeroAmount",
            MarketError::InsufficientWallet { .. } => "InsufficientWallet",
            MarketError::InsufficientBalance { .. } => "InsufficientBalance",
            MarketError::InsufficientLiquidity { .. } => "InsufficientLiquidity",
            MarketError::WouldBeUnhealthy => "WouldBeUnhealthy",
            MarketError::BorrowingPaused => "BorrowingPaused",
            MarketError::CapExceeded { .. } => "CapExceeded",
            MarketError::StableDisabled => "StableDisabled",
            MarketError::NoDebt => "NoDebt",
            MarketError::NoStableDebt => "NoStableDebt",
            MarketError::NotLiquidatable => "NotLiquidatable",
            MarketError::NoSuchCollateral(_) => "NoSuchCollateral",
            MarketError::UnknownMarket(_) => "UnknownMarket",
            MarketError::MissingPrice(_) => "MissingPrice",
        }
    }
}

impl From<crate::risk::RiskError> for MarketError {
    fn from(e: crate::risk::RiskError) -> Self {
        match e {
            crate::risk::RiskError::MissingPrice(a) => MarketError::MissingPrice(a),
        }
    }
}
