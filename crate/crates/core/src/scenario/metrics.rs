use serde::{Deserialize, Serialize};

use crate::fixed::{Amount, Ray, SignedValue, Value};
use crate::ids::{AssetId, MarketId};
use crate::market::{Account, MarketState};

/// Column order of `metrics.csv`; mirrors the field order of [`MetricsRow`].
pub const METRICS_COLUMNS: &[&str] = &[
    "time",
    "market",
    "asset",
    "protocol",
    "utilization",
    "variable_borrow_rate",
    "stable_borrow_rate",
    "avg_stable_rate",
    "supply_rate",
    "total_variable_debt",
    "total_stable_debt",
    "total_debt",
    "cash",
    "available_liquidity",
    "total_supplied",
    "treasury",
    "variable_borrow_index",
    "liquidity_index",
    "borrow_cap",
    "borrowing_paused",
    "mean_position_size",
    "liquidation_count",
    "bad_debt_value",
    "total_debt_value",
    "ethw_minted",
    "arb_pnl_to_date",
    "break_even_rate",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarketMetrics {
    pub market: MarketId,
    pub asset: AssetId,
    pub protocol: String,
    pub utilization: Ray,
    pub variable_borrow_rate: Ray,
    pub stable_borrow_rate: Option<Ray>,
    pub avg_stable_rate: Ray,
    pub supply_rate: Ray,
    pub total_variable_debt: Amount,
    pub total_stable_debt: Amount,
    pub total_debt: Amount,
    pub cash: Amount,
    pub available_liquidity: Amount,
    pub total_supplied: Amount,
    pub treasury: Amount,
    pub variable_borrow_index: Ray,
    pub liquidity_index: Ray,
    pub borrow_cap: Option<Amount>,
    pub borrowing_paused: bool,
    pub mean_position_size: Amount,
}

impl MarketMetrics {
    pub fn capture<'a>(m: &MarketState, accounts: impl IntoIterator<Item = &'a Account>) -> Self {
        let total_debt = m.total_debt();
        MarketMetrics {
            market: m.id.clone(),
            asset: m.asset.clone(),
            protocol: m.protocol.clone(),
            utilization: m.utilization().value(),
            variable_borrow_rate: m.variable_borrow_rate(),
            stable_borrow_rate: m.stable_borrow_rate(),
            avg_stable_rate: m.avg_stable_rate(),
            supply_rate: m.supply_rate(),
            total_variable_debt: m.total_variable_debt(),
            total_stable_debt: m.total_stable_debt(),
            total_debt,
            cash: m.cash,
            available_liquidity: m.available_liquidity(),
            total_supplied: m.total_supplied(),
            treasury: m.treasury,
            variable_borrow_index: m.variable_borrow_index,
            liquidity_index: m.liquidity_index,
            borrow_cap: m.borrow_cap,
            borrowing_paused: m.borrowing_paused,
            mean_position_size: mean_position_size(m, accounts),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobalMetrics {
    /// Liquidations executed so far in the run.
    pub liquidation_count: u64,
    pub bad_debt_value: Value,
    pub total_debt_value: Value,
    pub ethw_minted: Amount,
    /// Sum of closed arbitrage positions' PnL.
    pub arb_pnl_to_date: SignedValue,
    /// Break-even borrow rate from current prices; empty once the fork has passed.
    pub break_even_rate: Option<Ray>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsFrame {
    pub time: u64,
    pub global: GlobalMetrics,
    pub markets: Vec<MarketMetrics>,
}

/// One line of `metrics.csv`: a market's state plus the global figures at that checkpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub time: u64,
    pub market: MarketId,
    pub asset: AssetId,
    pub protocol: String,
    pub utilization: Ray,
    pub variable_borrow_rate: Ray,
    pub stable_borrow_rate: Option<Ray>,
    pub avg_stable_rate: Ray,
    pub supply_rate: Ray,
    pub total_variable_debt: Amount,
    pub total_stable_debt: Amount,
    pub total_debt: Amount,
    pub cash: Amount,
    pub available_liquidity: Amount,
    pub total_supplied: Amount,
    pub treasury: Amount,
    pub variable_borrow_index: Ray,
    pub liquidity_index: Ray,
    pub borrow_cap: Option<Amount>,
    pub borrowing_paused: bool,
    pub mean_position_size: Amount,
    pub liquidation_count: u64,
    pub bad_debt_value: Value,
    pub total_debt_value: Value,
    pub ethw_minted: Amount,
    pub arb_pnl_to_date: SignedValue,
    pub break_even_rate: Option<Ray>,
}

impl MetricsFrame {
    pub fn market(&self, id: &str) -> Option<&MarketMetrics> {
        self.markets.iter().find(|m| m.market.as_str() == id)
    }

    pub fn rows(&self) -> Vec<MetricsRow> {
        let g = &self.global;
        self.markets
            .iter()
            .map(|m| MetricsRow {
                time: self.time,
                market: m.market.clone(),
                asset: m.asset.clone(),
                protocol: m.protocol.clone(),
                utilization: m.utilization,
                variable_borrow_rate: m.variable_borrow_rate,
                stable_borrow_rate: m.stable_borrow_rate,
                avg_stable_rate: m.avg_stable_rate,
                supply_rate: m.supply_rate,
                total_variable_debt: m.total_variable_debt,
                total_stable_debt: m.total_stable_debt,
                total_debt: m.total_debt,
                cash: m.cash,
                available_liquidity: m.available_liquidity,
                total_supplied: m.total_supplied,
                treasury: m.treasury,
                variable_borrow_index: m.variable_borrow_index,
                liquidity_index: m.liquidity_index,
                borrow_cap: m.borrow_cap,
                borrowing_paused: m.borrowing_paused,
                mean_position_size: m.mean_position_size,
                liquidation_count: g.liquidation_count,
                bad_debt_value: g.bad_debt_value,
                total_debt_value: g.total_debt_value,
                ethw_minted: g.ethw_minted,
                arb_pnl_to_date: g.arb_pnl_to_date,
                break_even_rate: g.break_even_rate,
            })
            .collect()
    }
}

/// Regroup rows into frames. Frames without markets produce no rows and are not recovered.
pub fn frames_from_rows(rows: impl IntoIterator<Item = MetricsRow>) -> Vec<MetricsFrame> {
    let mut frames: Vec<MetricsFrame> = Vec::new();
    for r in rows {
        let market = MarketMetrics {
            market: r.market,
            asset: r.asset,
            protocol: r.protocol,
            utilization: r.utilization,
            variable_borrow_rate: r.variable_borrow_rate,
            stable_borrow_rate: r.stable_borrow_rate,
            avg_stable_rate: r.avg_stable_rate,
            supply_rate: r.supply_rate,
            total_variable_debt: r.total_variable_debt,
            total_stable_debt: r.total_stable_debt,
            total_debt: r.total_debt,
            cash: r.cash,
            available_liquidity: r.available_liquidity,
            total_supplied: r.total_supplied,
            treasury: r.treasury,
            variable_borrow_index: r.variable_borrow_index,
            liquidity_index: r.liquidity_index,
            borrow_cap: r.borrow_cap,
            borrowing_paused: r.borrowing_paused,
            mean_position_size: r.mean_position_size,
        };
        match frames.last_mut() {
            Some(f) if f.time == r.time => f.markets.push(market),
            _ => frames.push(MetricsFrame {
                time: r.time,
                global: GlobalMetrics {
                    liquidation_count: r.liquidation_count,
                    bad_debt_value: r.bad_debt_value,
                    total_debt_value: r.total_debt_value,
                    ethw_minted: r.ethw_minted,
                    arb_pnl_to_date: r.arb_pnl_to_date,
                    break_even_rate: r.break_even_rate,
                },
                markets: vec![market],
            }),
        }
    }
    frames
}

/// Mean of the nonzero supplied balances in `market`; zero when nobody supplies.
pub fn mean_position_size<'a>(
    market: &MarketState,
    accounts: impl IntoIterator<Item = &'a Account>,
) -> Amount {
    let mut total = 0u128;
    let mut n = 0u128;
    for a in accounts {
        let bal = market.supplied_balance(a);
        if !bal.is_zero() {
            total += bal.raw();
            n += 1;
        }
    }
    total.checked_div(n).map_or(Amount::ZERO, Amount::from_raw)
}
