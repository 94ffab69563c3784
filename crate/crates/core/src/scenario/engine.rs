use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::agents::AgentState;
use super::file::{Action, Scenario};
use super::metrics::{GlobalMetrics, MarketMetrics, MetricsFrame};
use super::prices::PriceSeries;
use super::validate::validate;
use super::ScenarioError;
use crate::fixed::{Amount, Price, SignedValue, Value};
use crate::fork_arb::{
    apply_fork, break_even_rate, ArbPosition, ForkReport, ForkSpec, TimeToMerge,
};
use crate::ids::{AccountId, MarketId};
use crate::market::{supply_income, Account, Book, BorrowMode, MarketError};
use crate::risk::{BadDebt, LiquidationRecord};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub seed: u64,
    /// Overrides the scenario's checkpoint interval.
    pub checkpoint_interval: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionSource {
    Script,
    Agent(&'static str),
}

impl ActionSource {
    fn label(self) -> &'static str {
        match self {
            ActionSource::Script => "script",
            ActionSource::Agent(kind) => kind,
        }
    }
}

/// One attempted user operation and how it ended.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub time: u64,
    pub source: String,
    pub action: String,
    pub account: AccountId,
    pub market: MarketId,
    pub amount: Amount,
    /// `ok` or the rejection code.
    pub outcome: String,
    /// Pool cash just before the attempt.
    pub cash_before: Amount,
    /// Pool debt after the attempt.
    pub debt_after: Amount,
}

impl ActionRecord {
    pub fn succeeded(&self) -> bool {
        self.outcome == "ok"
    }
}

/// Row of `arb_positions.csv`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArbRow {
    pub account: AccountId,
    pub open_time: u64,
    pub close_time: Option<u64>,
    pub borrowed: Amount,
    pub interest_paid: Amount,
    pub ethw_received: Amount,
    pub pnl: Option<SignedValue>,
}

/// A supply position frozen in a parent-asset pool when the fork snapshot was taken.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LockedDeposit {
    pub account: AccountId,
    pub market: MarketId,
    pub locked: Amount,
    /// Interest earned on the position up to the snapshot, in tokens.
    pub interest_income: SignedValue,
    pub income_value: SignedValue,
    /// What the locked tokens would have minted had they sat in a wallet.
    pub forgone_value: Value,
    pub ever_borrowed: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub name: String,
    pub seed: u64,
    pub checkpoint_interval: u64,
    pub frames: Vec<MetricsFrame>,
    pub liquidations: Vec<LiquidationRecord>,
    pub arb_positions: Vec<ArbRow>,
    pub actions: Vec<ActionRecord>,
    pub fork: Option<ForkReport>,
    pub locked_deposits: Vec<LockedDeposit>,
    /// Keeper targets that the independent health check did not confirm.
    pub keeper_violations: u64,
    /// Checkpoint with the largest bad-debt / total-debt ratio (the first one on ties).
    pub max_bad_debt: BadDebt,
    /// Largest |cash + debt - supplied - treasury| over steps, per market, at any checkpoint.
    pub max_conservation_excess: i128,
    pub book: Book,
    pub accounts: BTreeMap<AccountId, Account>,
}

/// Mutable run state shared by the event loop and the agents.
pub struct Sim {
    pub book: Book,
    pub accounts: BTreeMap<AccountId, Account>,
    pub prices: PriceSeries,
    pub now: u64,
    pub actions: Vec<ActionRecord>,
    pub liquidations: Vec<LiquidationRecord>,
    pub fork_spec: Option<ForkSpec>,
    pub fork_report: Option<ForkReport>,
    forked: bool,
    pub borrowers: BTreeSet<AccountId>,
    pub keeper_violations: u64,
    pub arb_pnl_to_date: SignedValue,
    current_event: usize,
    current_action: &'static str,
}

impl Sim {
    /// Wrap an error that must stop the run.
    pub fn fatal(&self, e: impl std::fmt::Display) -> ScenarioError {
        ScenarioError::Runtime {
            event: self.current_event,
            time: self.now,
            action: self.current_action.to_string(),
            message: e.to_string(),
        }
    }

    fn log<T>(
        &mut self,
        source: ActionSource,
        action: &str,
        account: &AccountId,
        market: &MarketId,
        amount: Amount,
        cash_before: Amount,
        result: Result<T, MarketError>,
    ) -> Result<Option<T>, ScenarioError> {
        let (outcome, value) = match result {
            Ok(v) => ("ok".to_string(), Some(v)),
            Err(e) if e.is_rejection() => (e.code().to_string(), None),
            Err(e) => return Err(self.fatal(e)),
        };
        let debt_after = self
            .book
            .market(market)
            .map(|m| m.total_debt())
            .unwrap_or_default();
        self.actions.push(ActionRecord {
            time: self.now,
            source: source.label().to_string(),
            action: action.to_string(),
            account: account.clone(),
            market: market.clone(),
            amount,
            outcome,
            cash_before,
            debt_after,
        });
        Ok(value)
    }

    fn cash(&self, market: &MarketId) -> Result<Amount, ScenarioError> {
        let m = self.book.market(market).map_err(|e| self.fatal(e))?;
        debug_assert_eq!(
            m.last_accrual_time, self.now,
            "market {} observed before accrual",
            m.id
        );
        Ok(m.cash)
    }

    fn account_mut(&mut self, id: &AccountId) -> Result<&mut Account, ScenarioError> {
        if !self.accounts.contains_key(id) {
            return Err(self.fatal(format!("unknown account {id}")));
        }
        Ok(self.accounts.get_mut(id).expect("checked"))
    }

    pub fn deposit(
        &mut self,
        src: ActionSource,
        account: &AccountId,
        market: &MarketId,
        amount: Amount,
    ) -> Result<bool, ScenarioError> {
        let cash = self.cash(market)?;
        let now = self.now;
        self.account_mut(account)?;
        let acct = self.accounts.get_mut(account).expect("checked");
        let r = self.book.deposit(acct, market, amount, now);
        Ok(self
            .log(src, "deposit", account, market, amount, cash, r)?
            .is_some())
    }

    pub fn withdraw(
        &mut self,
        src: ActionSource,
        account: &AccountId,
        market: &MarketId,
        amount: Amount,
    ) -> Result<bool, ScenarioError> {
        let cash = self.cash(market)?;
        let prices = self.prices.snapshot(self.now);
        let now = self.now;
        self.account_mut(account)?;
        let acct = self.accounts.get_mut(account).expect("checked");
        let r = self.book.withdraw(acct, market, amount, now, &prices);
        Ok(self
            .log(src, "withdraw", account, market, amount, cash, r)?
            .is_some())
    }

    pub fn borrow(
        &mut self,
        src: ActionSource,
        account: &AccountId,
        market: &MarketId,
        amount: Amount,
        mode: BorrowMode,
    ) -> Result<bool, ScenarioError> {
        let cash = self.cash(market)?;
        let prices = self.prices.snapshot(self.now);
        let now = self.now;
        self.account_mut(account)?;
        let acct = self.accounts.get_mut(account).expect("checked");
        let r = self.book.borrow(acct, market, amount, mode, now, &prices);
        let ok = self
            .log(src, "borrow", account, market, amount, cash, r)?
            .is_some();
        if ok {
            self.borrowers.insert(account.clone());
        }
        Ok(ok)
    }

    pub fn repay(
        &mut self,
        src: ActionSource,
        account: &AccountId,
        market: &MarketId,
        amount: Amount,
        mode: BorrowMode,
    ) -> Result<Option<Amount>, ScenarioError> {
        let cash = self.cash(market)?;
        let now = self.now;
        self.account_mut(account)?;
        let acct = self.accounts.get_mut(account).expect("checked");
        let r = self.book.repay(acct, market, amount, mode, now);
        self.log(src, "repay", account, market, amount, cash, r)
    }

    pub fn liquidate(
        &mut self,
        src: ActionSource,
        liquidator: &AccountId,
        borrower: &AccountId,
        debt_market: &MarketId,
        collateral_market: &MarketId,
        amount: Amount,
    ) -> Result<bool, ScenarioError> {
        let cash = self.cash(debt_market)?;
        let prices = self.prices.snapshot(self.now);
        let now = self.now;
        if liquidator == borrower {
            return Err(self.fatal("an account cannot liquidate itself"));
        }
        self.account_mut(borrower)?;
        let Some(mut liq) = self.accounts.remove(liquidator) else {
            return Err(self.fatal(format!("unknown account {liquidator}")));
        };
        let target = self.accounts.get_mut(borrower).expect("checked");
        let r = self.book.liquidate(
            &mut liq,
            target,
            debt_market,
            collateral_market,
            amount,
            now,
            &prices,
        );
        self.accounts.insert(liquidator.clone(), liq);
        match self.log(src, "liquidate", borrower, debt_market, amount, cash, r)? {
            Some(rec) => {
                self.liquidations.push(rec);
                Ok(true)
            }
            None => Ok(false),
        }
    }

    fn apply_fork(&mut self, spec: ForkSpec) -> Result<(), ScenarioError> {
        let report = apply_fork(&spec, &mut self.accounts, &self.book, &mut self.forked)
            .map_err(|e| self.fatal(e))?;
        self.fork_spec = Some(spec);
        self.fork_report = Some(report);
        Ok(())
    }

    fn locked_deposits(&self, spec: &ForkSpec) -> Vec<LockedDeposit> {
        let prices = self.prices.snapshot(self.now);
        let (p_parent, p_forked) = (
            prices.get(&spec.parent_asset).unwrap_or(Price::from_raw(0)),
            prices.get(&spec.forked_asset).unwrap_or(Price::from_raw(0)),
        );
        let mut out = Vec::new();
        for m in self
            .book
            .markets
            .values()
            .filter(|m| m.asset == spec.parent_asset)
        {
            for (id, acct) in &self.accounts {
                let Some(pos) = acct.position(&m.id) else {
                    continue;
                };
                let locked = m.supply_of(pos);
                if locked.is_zero() {
                    continue;
                }
                let income = supply_income(locked, pos);
                let income_value = if income.raw() >= 0 {
                    Amount::from_raw(income.raw() as u128)
                        .value_at(p_parent)
                        .signed()
                } else {
                    SignedValue::ZERO.sub(
                        Amount::from_raw(income.raw().unsigned_abs())
                            .value_at(p_parent)
                            .signed(),
                    )
                };
                out.push(LockedDeposit {
                    account: id.clone(),
                    market: m.id.clone(),
                    locked,
                    interest_income: income,
                    income_value,
                    forgone_value: locked.value_at(p_forked),
                    ever_borrowed: self.borrowers.contains(id),
                });
            }
        }
        out
    }

    fn capture(&self, liquidation_count: u64) -> Result<(MetricsFrame, BadDebt), ScenarioError> {
        debug_assert!(self
            .book
            .markets
            .values()
            .all(|m| m.last_accrual_time == self.now));
        let prices = self.prices.snapshot(self.now);
        let bad = self
            .book
            .bad_debt(self.accounts.values(), &prices)
            .map_err(|e| self.fatal(e))?;
        let break_even_rate = match &self.fork_spec {
            Some(spec) if self.now < spec.fork_time => {
                match (
                    prices.get(&spec.parent_asset),
                    prices.get(&spec.forked_asset),
                ) {
                    (Ok(pe), Ok(pw)) => {
                        let t =
                            TimeToMerge::between(self.now, spec.fork_time).expect("before fork");
                        break_even_rate(pw, pe, t).ok()
                    }
                    _ => None,
                }
            }
            _ => None,
        };
        let frame = MetricsFrame {
            time: self.now,
            global: GlobalMetrics {
                liquidation_count,
                bad_debt_value: bad.bad_debt_value,
                total_debt_value: bad.total_debt_value,
                ethw_minted: self
                    .fork_report
                    .as_ref()
                    .map_or(Amount::ZERO, |r| r.total_minted()),
                arb_pnl_to_date: self.arb_pnl_to_date,
                break_even_rate,
            },
            markets: self
                .book
                .markets
                .values()
                .map(|m| MarketMetrics::capture(m, self.accounts.values()))
                .collect(),
        };
        Ok((frame, bad))
    }
}

enum Queued {
    Script(usize),
    Checkpoint,
}

/// Run a scenario to completion. Deterministic in (scenario, prices, seed).
pub fn run(
    scenario: &Scenario,
    prices: &PriceSeries,
    opts: RunOptions,
) -> Result<RunOutput, ScenarioError> {
    let mut scenario = scenario.clone();
    if let Some(i) = opts.checkpoint_interval {
        scenario.checkpoint_interval = i;
    }
    let diagnostics = validate(&scenario, Some(prices));
    if !diagnostics.is_empty() {
        return Err(ScenarioError::Invalid(diagnostics));
    }

    let mut series = prices.clone();
    for e in &scenario.events {
        if let Action::PriceTick { asset, price } = &e.action {
            series.insert(asset.clone(), e.time, *price);
        }
    }

    let mut book = Book::new();
    for m in &scenario.markets {
        book.add_market(
            m.clone(),
            scenario.start,
            scenario.collateral_configs.get(&m.id).cloned(),
        );
    }
    let mut accounts: BTreeMap<AccountId, Account> = BTreeMap::new();
    for a in &scenario.accounts {
        let mut acct = Account::new(a.id.clone());
        for (asset, amt) in &a.wallet {
            acct.credit(asset, *amt);
        }
        accounts.insert(a.id.clone(), acct);
    }
    for agent in &scenario.agents {
        let id = agent.account().clone();
        accounts
            .entry(id.clone())
            .or_insert_with(|| Account::new(id));
    }

    // The fork time is public knowledge for the agents from the start.
    let fork_hint = scenario.fork_events().next().map(|e| match &e.action {
        Action::Fork {
            parent_asset,
            forked_asset,
        } => ForkSpec {
            fork_time: e.time,
            parent_asset: parent_asset.clone(),
            forked_asset: forked_asset.clone(),
        },
        _ => unreachable!("filtered to fork events"),
    });

    let mut sim = Sim {
        book,
        accounts,
        prices: series,
        now: scenario.start,
        actions: Vec::new(),
        liquidations: Vec::new(),
        fork_spec: fork_hint,
        fork_report: None,
        forked: false,
        borrowers: BTreeSet::new(),
        keeper_violations: 0,
        arb_pnl_to_date: SignedValue::ZERO,
        current_event: 0,
        current_action: "",
    };
    let mut agents: Vec<AgentState> = scenario
        .agents
        .iter()
        .enumerate()
        .map(|(i, a)| AgentState::new(a.clone(), i, opts.seed))
        .collect();

    let mut queue: Vec<(u64, u64, Queued)> = scenario
        .events
        .iter()
        .enumerate()
        .map(|(i, e)| (e.time, i as u64, Queued::Script(i)))
        .collect();
    let base = queue.len() as u64;
    queue.extend(
        scenario
            .checkpoint_times()
            .into_iter()
            .enumerate()
            .map(|(i, t)| (t, base + i as u64, Queued::Checkpoint)),
    );
    queue.sort_by_key(|(t, seq, _)| (*t, *seq));

    let mut frames = Vec::new();
    let mut locked_deposits = Vec::new();
    let mut max_bad: Option<BadDebt> = None;
    let mut max_excess = 0i128;

    for (index, (time, _, item)) in queue.into_iter().enumerate() {
        sim.now = time;
        sim.current_event = index;
        sim.current_action = match &item {
            Queued::Script(i) => scenario.events[*i].action.name(),
            Queued::Checkpoint => "checkpoint",
        };
        sim.book.accrue_all(time).map_err(|e| sim.fatal(e))?;

        let checkpoint = match item {
            Queued::Checkpoint => true,
            Queued::Script(i) => {
                let action = scenario.events[i].action.clone();
                apply_action(&mut sim, action, &mut locked_deposits)?
            }
        };
        if !checkpoint {
            continue;
        }

        for agent in agents.iter_mut() {
            agent.act(&mut sim)?;
        }
        let (frame, bad) = sim.capture(sim.liquidations.len() as u64)?;
        if max_bad.is_none_or(|m| bad.ratio() > m.ratio()) {
            max_bad = Some(bad);
        }
        for m in sim.book.markets.values() {
            let excess = m.conservation_gap().abs() - m.steps as i128;
            max_excess = max_excess.max(excess);
        }
        frames.push(frame);
    }

    let arb_positions = agents
        .iter()
        .filter_map(|a| a.position.as_ref())
        .map(|p| arb_row(p, &sim))
        .collect();

    Ok(RunOutput {
        name: scenario.name.clone(),
        seed: opts.seed,
        checkpoint_interval: scenario.checkpoint_interval,
        frames,
        liquidations: sim.liquidations,
        arb_positions,
        actions: sim.actions,
        fork: sim.fork_report,
        locked_deposits,
        keeper_violations: sim.keeper_violations,
        max_bad_debt: max_bad.unwrap_or_default(),
        max_conservation_excess: max_excess,
        book: sim.book,
        accounts: sim.accounts,
    })
}

fn arb_row(p: &ArbPosition, sim: &Sim) -> ArbRow {
    let pnl = match (p.close_time, &sim.fork_spec) {
        (Some(t), Some(spec)) => {
            let prices = sim.prices.snapshot(t);
            match (
                prices.get(&spec.parent_asset),
                prices.get(&spec.forked_asset),
            ) {
                (Ok(pe), Ok(pw)) => crate::fork_arb::arb_pnl(p, pw, pe).ok(),
                _ => None,
            }
        }
        _ => None,
    };
    ArbRow {
        account: p.account.clone(),
        open_time: p.open_time,
        close_time: p.close_time,
        borrowed: p.borrowed,
        interest_paid: p.interest_paid,
        ethw_received: p.ethw_received,
        pnl,
    }
}

/// Returns true when the action is a checkpoint.
fn apply_action(
    sim: &mut Sim,
    action: Action,
    locked: &mut Vec<LockedDeposit>,
) -> Result<bool, ScenarioError> {
    let src = ActionSource::Script;
    let now = sim.now;
    match action {
        Action::Deposit {
            account,
            market,
            amount,
        } => {
            sim.deposit(src, &account, &market, amount)?;
        }
        Action::Withdraw {
            account,
            market,
            amount,
        } => {
            sim.withdraw(src, &account, &market, amount)?;
        }
        Action::Borrow {
            account,
            market,
            amount,
            mode,
        } => {
            sim.borrow(src, &account, &market, amount, mode)?;
        }
        Action::Repay {
            account,
            market,
            amount,
            mode,
        } => {
            sim.repay(src, &account, &market, amount, mode)?;
        }
        Action::Liquidate {
            liquidator,
            borrower,
            debt_market,
            collateral_market,
            amount,
        } => {
            sim.liquidate(
                src,
                &liquidator,
                &borrower,
                &debt_market,
                &collateral_market,
                amount,
            )?;
        }
        Action::SetRateModel {
            market,
            model,
            stable_model,
        } => {
            let m = sim.book.market_mut(&market).map_err(|e| e.to_string());
            let r = m.and_then(|m| {
                m.set_rate_model(model, stable_model, now)
                    .map_err(|e| e.to_string())
            });
            r.map_err(|e| sim.fatal(e))?;
        }
        Action::SetBorrowCap { market, cap } => {
            let m = sim.book.market_mut(&market).map_err(|e| e.to_string());
            let r = m.and_then(|m| m.set_borrow_cap(cap, now).map_err(|e| e.to_string()));
            r.map_err(|e| sim.fatal(e))?;
        }
        Action::SetPause { market, paused } => {
            let m = sim.book.market_mut(&market).map_err(|e| e.to_string());
            let r = m.and_then(|m| m.set_pause(paused, now).map_err(|e| e.to_string()));
            r.map_err(|e| sim.fatal(e))?;
        }
        Action::SetReserveFactor {
            market,
            reserve_factor,
        } => {
            let m = sim.book.market_mut(&market).map_err(|e| e.to_string());
            let r = m.and_then(|m| {
                m.set_reserve_factor(reserve_factor, now)
                    .map_err(|e| e.to_string())
            });
            r.map_err(|e| sim.fatal(e))?;
        }
        Action::RebalanceStable { account, market } => {
            let cash = sim.cash(&market)?;
            sim.account_mut(&account)?;
            let acct = sim.accounts.get_mut(&account).expect("checked");
            let r = sim.book.rebalance_stable(acct, &market, now);
            sim.log(
                src,
                "rebalance_stable",
                &account,
                &market,
                Amount::ZERO,
                cash,
                r,
            )?;
        }
        // merged into the price series before the run
        Action::PriceTick { .. } => {}
        Action::Fork {
            parent_asset,
            forked_asset,
        } => {
            let spec = ForkSpec {
                fork_time: now,
                parent_asset,
                forked_asset,
            };
            sim.apply_fork(spec.clone())?;
            *locked = sim.locked_deposits(&spec);
        }
        Action::Checkpoint => return Ok(true),
    }
    Ok(false)
}
