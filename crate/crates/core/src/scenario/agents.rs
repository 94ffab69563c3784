use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::engine::{ActionSource, Sim};
use super::ScenarioError;
use crate::fixed::{Amount, Ray, Value};
use crate::fork_arb::{arb_pnl, arb_should_borrow, break_even_rate, ArbPosition, TimeToMerge};
use crate::ids::{AccountId, MarketId};
use crate::market::{Account, BorrowMode, MarketError};
use crate::risk::{self, HealthFactor};

fn ten() -> Ray {
    Ray::from_int(10)
}

fn one() -> Ray {
    Ray::ONE
}

fn default_trigger() -> Ray {
    Ray::ratio(9, 10)
}

fn min_borrow() -> Amount {
    Amount::from_raw(10_000_000_000_000_000)
}

/// Rule-following participants evaluated at every checkpoint, in file order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AgentSpec {
    /// Liquidates every unhealthy (account, protocol) pair, most underwater first.
    Keeper {
        account: AccountId,
        #[serde(default)]
        max_per_checkpoint: Option<u32>,
    },
    /// Borrows the native asset ahead of the fork while the rate is well under break-even,
    /// then repays after the fork and sells the forked tokens.
    Arbitrageur {
        account: AccountId,
        market: MarketId,
        #[serde(default)]
        active_from: Option<u64>,
        #[serde(default = "ten")]
        safety_margin: Ray,
        /// Upper bound on total principal.
        #[serde(default)]
        max_borrow: Option<Amount>,
        /// Fraction of LTV borrow power the agent is willing to use.
        #[serde(default = "one")]
        power_usage: Ray,
        /// Seconds after the fork before the position is closed.
        #[serde(default)]
        sell_delay: u64,
        #[serde(default = "min_borrow")]
        min_borrow: Amount,
    },
    /// Withdraws its whole supply once utilization reaches the trigger, or at a scheduled exit.
    Lender {
        account: AccountId,
        market: MarketId,
        #[serde(default = "default_trigger")]
        withdraw_trigger_utilization: Ray,
        #[serde(default)]
        exit_at: Option<u64>,
        /// Uniform random delay in `[0, exit_jitter]` seconds added to `exit_at`.
        #[serde(default)]
        exit_jitter: u64,
    },
    /// Deposits collateral, borrows against it, swaps the loan into more collateral, repeats.
    Looper {
        account: AccountId,
        collateral_market: MarketId,
        debt_market: MarketId,
        #[serde(default)]
        start: Option<u64>,
        ltv: Ray,
        iterations: u32,
    },
}

impl AgentSpec {
    pub fn account(&self) -> &AccountId {
        match self {
            AgentSpec::Keeper { account, .. }
            | AgentSpec::Arbitrageur { account, .. }
            | AgentSpec::Lender { account, .. }
            | AgentSpec::Looper { account, .. } => account,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            AgentSpec::Keeper { .. } => "keeper",
            AgentSpec::Arbitrageur { .. } => "arbitrageur",
            AgentSpec::Lender { .. } => "lender",
            AgentSpec::Looper { .. } => "looper",
        }
    }

    pub fn markets(&self) -> Vec<&MarketId> {
        match self {
            AgentSpec::Keeper { .. } => vec![],
            AgentSpec::Arbitrageur { market, .. } | AgentSpec::Lender { market, .. } => {
                vec![market]
            }
            AgentSpec::Looper {
                collateral_market,
                debt_market,
                ..
            } => vec![collateral_market, debt_market],
        }
    }

    /// Range problems, reported by validation.
    pub fn check(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            AgentSpec::Arbitrageur {
                safety_margin,
                power_usage,
                ..
            } => {
                if *safety_margin < Ray::ONE {
                    out.push("safety_margin must be at least 1".into());
                }
                if power_usage.is_zero() || *power_usage > Ray::ONE {
                    out.push("power_usage must be in (0, 1]".into());
                }
            }
            AgentSpec::Lender {
                withdraw_trigger_utilization,
                ..
            } => {
                if *withdraw_trigger_utilization > Ray::ONE {
                    out.push("withdraw_trigger_utilization must be in [0, 1]".into());
                }
            }
            AgentSpec::Looper { ltv, .. } => {
                if ltv.is_zero() || *ltv >= Ray::ONE {
                    out.push("looper ltv must be in (0, 1)".into());
                }
            }
            AgentSpec::Keeper { .. } => {}
        }
        out
    }
}

#[derive(Debug, Clone)]
pub(super) struct AgentState {
    pub spec: AgentSpec,
    /// Lender exit delay drawn once from the seeded generator.
    jitter: u64,
    pub position: Option<ArbPosition>,
    done: bool,
}

impl AgentState {
    pub fn new(spec: AgentSpec, index: usize, seed: u64) -> Self {
        let jitter = match &spec {
            AgentSpec::Lender { exit_jitter, .. } if *exit_jitter > 0 => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(index as u64);
                rng.gen_range(0..=*exit_jitter)
            }
            _ => 0,
        };
        AgentState {
            spec,
            jitter,
            position: None,
            done: false,
        }
    }

    pub fn act(&mut self, sim: &mut Sim) -> Result<(), ScenarioError> {
        match self.spec.clone() {
            AgentSpec::Keeper {
                account,
                max_per_checkpoint,
            } => keeper(sim, &account, max_per_checkpoint),
            AgentSpec::Lender {
                account,
                market,
                withdraw_trigger_utilization,
                exit_at,
                ..
            } => {
                let exit = exit_at.map(|t| t + self.jitter);
                lender(sim, &account, &market, withdraw_trigger_utilization, exit)
            }
            AgentSpec::Arbitrageur {
                account,
                market,
                active_from,
                safety_margin,
                max_borrow,
                power_usage,
                sell_delay,
                min_borrow,
            } => {
                let rules = ArbRules {
                    active_from: active_from.unwrap_or(0),
                    safety_margin,
                    max_borrow,
                    power_usage,
                    sell_delay,
                    min_borrow,
                };
                self.arbitrage(sim, &account, &market, &rules)
            }
            AgentSpec::Looper {
                account,
                collateral_market,
                debt_market,
                start,
                ltv,
                iterations,
            } => {
                if self.done || sim.now < start.unwrap_or(0) {
                    return Ok(());
                }
                self.done = true;
                looper(
                    sim,
                    &account,
                    &collateral_market,
                    &debt_market,
                    ltv,
                    iterations,
                )
            }
        }
    }

    fn arbitrage(
        &mut self,
        sim: &mut Sim,
        account: &AccountId,
        market: &MarketId,
        rules: &ArbRules,
    ) -> Result<(), ScenarioError> {
        if self.done {
            return Ok(());
        }
        let Some(spec) = sim.fork_spec.clone() else {
            return Ok(());
        };
        let m = sim.book.market(market).map_err(|e| sim.fatal(e))?;
        let asset = m.asset.clone();

        if sim.now < spec.fork_time {
            if sim.now < rules.active_from {
                return Ok(());
            }
            let prices = sim.prices.snapshot(sim.now);
            let (Ok(p_eth), Ok(p_ethw)) = (
                prices.get(&spec.parent_asset),
                prices.get(&spec.forked_asset),
            ) else {
                return Ok(());
            };
            let horizon = TimeToMerge::between(sim.now, spec.fork_time).expect("before fork");
            let be = break_even_rate(p_ethw, p_eth, horizon).expect("positive parent price");
            if !arb_should_borrow(be, m.variable_borrow_rate(), rules.safety_margin) {
                return Ok(());
            }
            let acct = &sim.accounts[account];
            let parts = sim
                .book
                .health_parts(acct, &m.protocol, &prices)
                .map_err(|e| sim.fatal(e))?;
            let room = parts
                .borrow_power
                .mul_ray(rules.power_usage)
                .saturating_sub(parts.debt)
                .to_amount(p_eth);
            let borrowed = self.position.as_ref().map_or(Amount::ZERO, |p| p.borrowed);
            let mut amount = match rules.max_borrow {
                Some(cap) => room.min(cap.saturating_sub(borrowed)),
                None => room,
            };
            if amount < rules.min_borrow {
                return Ok(());
            }
            // Clamp to what the pool can lend; with nothing available, attempt anyway so the
            // rejection reason lands in the action log.
            let available = m.borrowable();
            if available >= rules.min_borrow {
                amount = amount.min(available);
            }
            let ok = sim.borrow(
                ActionSource::Agent("arbitrageur"),
                account,
                market,
                amount,
                BorrowMode::Variable,
            )?;
            if ok {
                let pos = self
                    .position
                    .get_or_insert_with(|| ArbPosition::open(account.clone(), sim.now));
                pos.borrowed = pos.borrowed.add(amount);
            }
            return Ok(());
        }

        let Some(pos) = self.position.as_mut() else {
            self.done = true;
            return Ok(());
        };
        if sim.now < spec.fork_time + rules.sell_delay {
            return Ok(());
        }
        let owed = sim
            .book
            .market(market)
            .map_err(|e| sim.fatal(e))?
            .account_debt(&sim.accounts[account]);
        let mut repaid = Amount::ZERO;
        if !owed.is_zero() {
            match sim.repay(
                ActionSource::Agent("arbitrageur"),
                account,
                market,
                owed,
                BorrowMode::Variable,
            )? {
                Some(r) => repaid = r,
                None => return Ok(()),
            }
        }
        let minted = sim
            .fork_report
            .as_ref()
            .and_then(|r| r.per_account.get(account).copied())
            .unwrap_or(Amount::ZERO);
        pos.ethw_received = minted.min(pos.borrowed);
        pos.interest_paid = repaid.saturating_sub(pos.borrowed);
        pos.close_time = Some(sim.now);
        let prices = sim.prices.snapshot(sim.now);
        if let (Ok(p_eth), Ok(p_ethw)) = (prices.get(&asset), prices.get(&spec.forked_asset)) {
            let pnl = arb_pnl(pos, p_ethw, p_eth).expect("closed above");
            sim.arb_pnl_to_date = sim.arb_pnl_to_date.add(pnl);
        }
        self.done = true;
        Ok(())
    }
}

struct ArbRules {
    active_from: u64,
    safety_margin: Ray,
    max_borrow: Option<Amount>,
    power_usage: Ray,
    sell_delay: u64,
    min_borrow: Amount,
}

fn keeper(sim: &mut Sim, keeper: &AccountId, limit: Option<u32>) -> Result<(), ScenarioError> {
    let prices = sim.prices.snapshot(sim.now);
    let mut targets: Vec<(HealthFactor, AccountId, String)> = Vec::new();
    for protocol in sim.book.protocols() {
        for (id, acct) in &sim.accounts {
            if id == keeper || !sim.book.has_debt_in_protocol(acct, &protocol) {
                continue;
            }
            let parts = sim
                .book
                .health_parts(acct, &protocol, &prices)
                .map_err(|e| sim.fatal(e))?;
            if parts.is_liquidatable() {
                targets.push((parts.health_factor(), id.clone(), protocol.clone()));
            }
        }
    }
    targets.sort();
    if let Some(n) = limit {
        targets.truncate(n as usize);
    }

    for (_, borrower, protocol) in targets {
        let acct = &sim.accounts[&borrower];
        let snap = sim.book.snapshot(acct, &protocol);
        let confirmed = risk::is_liquidatable(&snap, &prices, &sim.book.configs_for(&protocol))
            .map_err(|e| sim.fatal(MarketError::from(e)))?;
        if !confirmed {
            sim.keeper_violations += 1;
            continue;
        }
        let Some((debt_market, collateral_market)) = pick_pair(sim, acct, &protocol, &prices)
        else {
            continue;
        };
        let owed = sim
            .book
            .market(&debt_market)
            .map_err(|e| sim.fatal(e))?
            .account_debt(acct);
        sim.liquidate(
            ActionSource::Agent("keeper"),
            keeper,
            &borrower,
            &debt_market,
            &collateral_market,
            owed,
        )?;
    }
    Ok(())
}

/// Largest debt by value and largest usable collateral by value within one protocol.
fn pick_pair(
    sim: &Sim,
    acct: &Account,
    protocol: &str,
    prices: &risk::PriceMap,
) -> Option<(MarketId, MarketId)> {
    let mut best_debt: Option<(Value, MarketId)> = None;
    let mut best_coll: Option<(Value, MarketId)> = None;
    for m in sim.book.markets.values().filter(|m| m.protocol == protocol) {
        let Some(pos) = acct.position(&m.id) else {
            continue;
        };
        let Ok(p) = prices.get(&m.asset) else {
            continue;
        };
        let debt = m.debt_of(pos).value_at(p);
        if !debt.is_zero() && best_debt.as_ref().is_none_or(|(v, _)| debt > *v) {
            best_debt = Some((debt, m.id.clone()));
        }
        let usable = sim
            .book
            .collateral
            .get(&m.id)
            .is_some_and(|c| c.usable_as_collateral);
        let coll = m.supply_of(pos).value_at(p);
        if usable && !coll.is_zero() && best_coll.as_ref().is_none_or(|(v, _)| coll > *v) {
            best_coll = Some((coll, m.id.clone()));
        }
    }
    Some((best_debt?.1, best_coll?.1))
}

fn lender(
    sim: &mut Sim,
    account: &AccountId,
    market: &MarketId,
    trigger: Ray,
    exit: Option<u64>,
) -> Result<(), ScenarioError> {
    let m = sim.book.market(market).map_err(|e| sim.fatal(e))?;
    let balance = m.supplied_balance(&sim.accounts[account]);
    if balance.is_zero() {
        return Ok(());
    }
    let triggered = m.utilization().value() >= trigger || exit.is_some_and(|t| sim.now >= t);
    if !triggered {
        return Ok(());
    }
    // Take whatever cash is there; an empty pool still gets the full request so the
    // rejection is logged.
    let amount = if m.cash.is_zero() {
        balance
    } else {
        balance.min(m.cash)
    };
    sim.withdraw(ActionSource::Agent("lender"), account, market, amount)?;
    Ok(())
}

fn looper(
    sim: &mut Sim,
    account: &AccountId,
    collateral_market: &MarketId,
    debt_market: &MarketId,
    ltv: Ray,
    iterations: u32,
) -> Result<(), ScenarioError> {
    let source = ActionSource::Agent("looper");
    let coll_asset = sim
        .book
        .market(collateral_market)
        .map_err(|e| sim.fatal(e))?
        .asset
        .clone();
    let debt_asset = sim
        .book
        .market(debt_market)
        .map_err(|e| sim.fatal(e))?
        .asset
        .clone();
    let prices = sim.prices.snapshot(sim.now);
    let (Ok(p_coll), Ok(p_debt)) = (prices.get(&coll_asset), prices.get(&debt_asset)) else {
        return Ok(());
    };
    for round in 0..=iterations {
        let stake = sim.accounts[account].wallet_balance(&coll_asset);
        if stake.is_zero() || !sim.deposit(source, account, collateral_market, stake)? {
            return Ok(());
        }
        if round == iterations {
            break;
        }
        let want = stake.value_at(p_coll).mul_ray(ltv).to_amount(p_debt);
        let allowed = sim
            .book
            .max_borrow(&sim.accounts[account], debt_market, &prices)
            .map_err(|e| sim.fatal(e))?;
        let amount = want.min(allowed);
        if amount.is_zero()
            || !sim.borrow(source, account, debt_market, amount, BorrowMode::Variable)?
        {
            return Ok(());
        }
        // swap the borrowed asset into collateral at oracle prices
        let acct = sim.accounts.get_mut(account).expect("agent account exists");
        acct.debit(&debt_asset, amount);
        let bought = amount.value_at(p_debt).to_amount(p_coll);
        acct.credit(&coll_asset, bought);
    }
    Ok(())
}
