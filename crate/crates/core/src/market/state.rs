use serde::{Deserialize, Serialize};

use super::account::{Account, Position, StableLoan};
use super::MarketError;
use crate::fixed::{mul_div, Amount, Ray, Rounding};
use crate::ids::{AssetId, MarketId};
use crate::rates::{
    aave_supply_rate, compound_supply_rate, debt_shares, BlockConvention, Rate, RateModel,
    ReserveFactor, Utilization, SECONDS_PER_YEAR,
};

/// Default Compound block time: 86,400 s / 6,245 blocks, rounded to the millisecond.
pub const DEFAULT_BLOCK_TIME_MS: u64 = 13_830;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AccrualMode {
    /// AAVE style: indices compound every second.
    PerSecondCompound,
    /// cToken style: simple interest per block, `annual * blocks / blocks_per_year`.
    PerBlockLinear {
        #[serde(default = "default_block_time")]
        block_time_ms: u64,
        #[serde(default)]
        blocks: BlockConvention,
    },
}

fn default_block_time() -> u64 {
    DEFAULT_BLOCK_TIME_MS
}

impl AccrualMode {
    pub fn per_block_default() -> Self {
        AccrualMode::PerBlockLinear {
            block_time_ms: DEFAULT_BLOCK_TIME_MS,
            blocks: BlockConvention::default(),
        }
    }

    /// Growth factor of an index over `[from, to]` at a constant annual `rate`.
    pub fn growth(&self, rate: Rate, from: u64, to: u64) -> Ray {
        match *self {
            AccrualMode::PerSecondCompound => compound_growth(rate, to - from),
            AccrualMode::PerBlockLinear {
                block_time_ms,
                blocks,
            } => {
                let elapsed = block_height(to, block_time_ms) - block_height(from, block_time_ms);
                linear_growth(rate, elapsed, blocks.contract_blocks_per_year)
            }
        }
    }
}

/// Block number implied by a timestamp at a fixed cadence.
pub fn block_height(t: u64, block_time_ms: u64) -> u128 {
    t as u128 * 1000 / block_time_ms as u128
}

/// `(1 + rate / seconds_per_year) ^ seconds`.
pub fn compound_growth(rate: Rate, seconds: u64) -> Ray {
    Ray::ONE
        .add(rate.div_int(SECONDS_PER_YEAR as u128))
        .pow(seconds)
}

/// `1 + rate * blocks / blocks_per_year`, truncated once.
pub fn linear_growth(rate: Rate, blocks: u128, blocks_per_year: u64) -> Ray {
    Ray::ONE.add(Ray::from_raw(mul_div(
        rate.raw(),
        blocks,
        blocks_per_year as u128,
        Rounding::Down,
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BorrowMode {
    Variable,
    Stable,
}

/// Static parameters used to open a market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketConfig {
    pub id: MarketId,
    pub asset: AssetId,
    pub protocol: String,
    pub rate_model: RateModel,
    #[serde(default)]
    pub stable_rate_model: Option<RateModel>,
    pub reserve_factor: ReserveFactor,
    #[serde(default)]
    pub borrow_cap: Option<Amount>,
    #[serde(default)]
    pub borrowing_paused: bool,
    #[serde(default)]
    pub stable_borrowing_enabled: bool,
    pub accrual: AccrualMode,
}

/// All stable loans that carry the same rate share one compounding index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StableBucket {
    pub rate: Rate,
    pub scaled: Amount,
    pub index: Ray,
}

/// Values at the start of a run of accruals with an unchanged borrow rate.
/// Accruing from the anchor keeps `accrue(t1); accrue(t2)` identical to `accrue(t2)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Segment {
    start_time: u64,
    var_rate: Rate,
    var_index: Ray,
    bucket_indices: Vec<Ray>,
    total_debt: Amount,
    treasury: Amount,
    liquidity_index: Ray,
    supplied: Amount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarketState {
    pub id: MarketId,
    pub asset: AssetId,
    pub protocol: String,
    pub cash: Amount,
    pub scaled_variable_debt: Amount,
    pub variable_borrow_index: Ray,
    pub stable_buckets: Vec<StableBucket>,
    pub scaled_supply: Amount,
    pub liquidity_index: Ray,
    pub reserve_factor: ReserveFactor,
    pub treasury: Amount,
    pub rate_model: RateModel,
    pub stable_rate_model: Option<RateModel>,
    pub borrow_cap: Option<Amount>,
    pub borrowing_paused: bool,
    pub stable_borrowing_enabled: bool,
    pub accrual_mode: AccrualMode,
    pub last_accrual_time: u64,
    /// Accruals and balance mutations applied so far; bounds rounding drift.
    pub steps: u64,
    segment: Option<Segment>,
}

impl MarketState {
    pub fn new(config: MarketConfig, start_time: u64) -> Self {
        MarketState {
            id: config.id,
            asset: config.asset,
            protocol: config.protocol,
            cash: Amount::ZERO,
            scaled_variable_debt: Amount::ZERO,
            variable_borrow_index: Ray::ONE,
            stable_buckets: Vec::new(),
            scaled_supply: Amount::ZERO,
            liquidity_index: Ray::ONE,
            reserve_factor: config.reserve_factor,
            treasury: Amount::ZERO,
            rate_model: config.rate_model,
            stable_rate_model: config.stable_rate_model,
            borrow_cap: config.borrow_cap,
            borrowing_paused: config.borrowing_paused,
            stable_borrowing_enabled: config.stable_borrowing_enabled,
            accrual_mode: config.accrual,
            last_accrual_time: start_time,
            steps: 0,
            segment: None,
        }
    }

    // ---- aggregate views ----

    pub fn total_variable_debt(&self) -> Amount {
        self.scaled_variable_debt
            .mul_ray(self.variable_borrow_index, Rounding::HalfUp)
    }

    pub fn total_stable_debt(&self) -> Amount {
        self.stable_buckets
            .iter()
            .map(|b| b.scaled.mul_ray(b.index, Rounding::HalfUp))
            .sum()
    }

    pub fn total_debt(&self) -> Amount {
        self.total_variable_debt().add(self.total_stable_debt())
    }

    pub fn total_supplied(&self) -> Amount {
        self.scaled_supply
            .mul_ray(self.liquidity_index, Rounding::HalfUp)
    }

    /// Cash not lent out; identical to `cash` since the treasury stays in the pool.
    pub fn available_liquidity(&self) -> Amount {
        self.cash
    }

    pub fn utilization(&self) -> Utilization {
        Utilization::from_balances(self.cash, self.total_debt())
    }

    pub fn variable_borrow_rate(&self) -> Rate {
        self.rate_model.rate(self.utilization())
    }

    /// Rate a new stable loan would be opened at, if the market has a stable curve.
    pub fn stable_borrow_rate(&self) -> Option<Rate> {
        self.stable_rate_model.map(|m| m.rate(self.utilization()))
    }

    /// Debt-weighted mean rate of outstanding stable loans.
    pub fn avg_stable_rate(&self) -> Rate {
        let mut weighted = ethnum::U256::ZERO;
        let mut total = 0u128;
        for b in &self.stable_buckets {
            let debt = b.scaled.mul_ray(b.index, Rounding::HalfUp).raw();
            weighted += ethnum::U256::from(debt) * ethnum::U256::from(b.rate.raw());
            total += debt;
        }
        if total == 0 {
            return Ray::ZERO;
        }
        Ray::from_raw(u128::try_from(weighted / ethnum::U256::from(total)).expect("rate overflow"))
    }

    pub fn supply_rate(&self) -> Rate {
        let u = self.utilization();
        let variable = self.variable_borrow_rate();
        match self.rate_model {
            RateModel::AaveKinked { .. } => {
                let (ss, vs) = debt_shares(self.total_stable_debt(), self.total_variable_debt());
                aave_supply_rate(
                    u,
                    ss,
                    self.avg_stable_rate(),
                    vs,
                    variable,
                    self.reserve_factor,
                )
            }
            _ => compound_supply_rate(variable, u, self.reserve_factor),
        }
    }

    /// `cash + debt - supplied - treasury` in attounits. Zero up to rounding.
    pub fn conservation_gap(&self) -> i128 {
        let lhs = self.cash.add(self.total_debt()).raw() as i128;
        let rhs = self.total_supplied().add(self.treasury).raw() as i128;
        lhs - rhs
    }

    // ---- per-account views ----

    pub fn supplied_balance(&self, acct: &Account) -> Amount {
        acct.position(&self.id)
            .map(|p| self.supply_of(p))
            .unwrap_or(Amount::ZERO)
    }

    pub fn supply_of(&self, pos: &Position) -> Amount {
        pos.scaled_collateral
            .mul_ray(self.liquidity_index, Rounding::Down)
    }

    pub fn variable_debt_of(&self, pos: &Position) -> Amount {
        pos.scaled_variable_debt
            .mul_ray(self.variable_borrow_index, Rounding::HalfUp)
    }

    pub fn stable_debt_of(&self, pos: &Position) -> Amount {
        match pos.stable {
            Some(loan) => loan
                .scaled
                .mul_ray(self.bucket_index(loan.rate), Rounding::HalfUp),
            None => Amount::ZERO,
        }
    }

    pub fn debt_of(&self, pos: &Position) -> Amount {
        self.variable_debt_of(pos).add(self.stable_debt_of(pos))
    }

    pub fn account_debt(&self, acct: &Account) -> Amount {
        acct.position(&self.id)
            .map(|p| self.debt_of(p))
            .unwrap_or(Amount::ZERO)
    }

    fn bucket_index(&self, rate: Rate) -> Ray {
        self.stable_buckets
            .iter()
            .find(|b| b.rate == rate)
            .map(|b| b.index)
            .unwrap_or(Ray::ONE)
    }

    // ---- accrual ----

    fn open_segment(&self, var_rate: Rate) -> Segment {
        Segment {
            start_time: self.last_accrual_time,
            var_rate,
            var_index: self.variable_borrow_index,
            bucket_indices: self.stable_buckets.iter().map(|b| b.index).collect(),
            total_debt: self.total_debt(),
            treasury: self.treasury,
            liquidity_index: self.liquidity_index,
            supplied: self.total_supplied(),
        }
    }

    /// Bring indices and treasury forward to `now` at the rates implied by the current state.
    pub fn accrue(&mut self, now: u64) -> Result<(), MarketError> {
        if now < self.last_accrual_time {
            return Err(MarketError::ClockRegression {
                now,
                last: self.last_accrual_time,
            });
        }
        if now == self.last_accrual_time {
            return Ok(());
        }
        let rate = self.variable_borrow_rate();
        let seg = match self.segment.take() {
            Some(s) if s.var_rate == rate => s,
            _ => self.open_segment(rate),
        };

        self.variable_borrow_index =
            seg.var_index
                .mul(self.accrual_mode.growth(rate, seg.start_time, now));
        for (bucket, start_index) in self.stable_buckets.iter_mut().zip(&seg.bucket_indices) {
            bucket.index = start_index.mul(compound_growth(bucket.rate, now - seg.start_time));
        }

        let interest = self.total_debt().saturating_sub(seg.total_debt);
        let reserve = interest.mul_ray(self.reserve_factor.value(), Rounding::HalfUp);
        if seg.supplied.is_zero() {
            self.treasury = seg.treasury.add(interest);
            self.liquidity_index = seg.liquidity_index;
        } else {
            let to_suppliers = interest.saturating_sub(reserve);
            self.liquidity_index = Ray::from_raw(mul_div(
                seg.liquidity_index.raw(),
                seg.supplied.add(to_suppliers).raw(),
                seg.supplied.raw(),
                Rounding::Down,
            ));
            // the treasury takes whatever the rounded index did not pass on to suppliers
            let credited = self.total_supplied().saturating_sub(seg.supplied);
            self.treasury = seg.treasury.add(interest.saturating_sub(credited));
        }

        self.segment = Some(seg);
        self.last_accrual_time = now;
        self.steps += 1;
        Ok(())
    }

    fn touch(&mut self) {
        self.segment = None;
        self.steps += 1;
    }

    // ---- lender side ----

    pub fn deposit(
        &mut self,
        acct: &mut Account,
        amount: Amount,
        now: u64,
    ) -> Result<(), MarketError> {
        if amount.is_zero() {
            return Err(MarketError::ZeroAmount);
        }
        self.accrue(now)?;
        let available = acct.wallet_balance(&self.asset);
        if !acct.debit(&self.asset, amount) {
            return Err(MarketError::InsufficientWallet {
                needed: amount,
                available,
            });
        }
        let scaled = amount.div_ray(self.liquidity_index, Rounding::Down);
        let pos = acct.position_mut(&self.id);
        pos.scaled_collateral = pos.scaled_collateral.add(scaled);
        pos.deposited = pos.deposited.add(amount);
        self.scaled_supply = self.scaled_supply.add(scaled);
        self.cash = self.cash.add(amount);
        self.touch();
        Ok(())
    }

    /// Cash and balance checks only; solvency is checked by the caller.
    pub fn withdraw(
        &mut self,
        acct: &mut Account,
        amount: Amount,
        now: u64,
    ) -> Result<(), MarketError> {
        if amount.is_zero() {
            return Err(MarketError::ZeroAmount);
        }
        self.accrue(now)?;
        let balance = self.supplied_balance(acct);
        if amount > balance {
            return Err(MarketError::InsufficientBalance {
                requested: amount,
                balance,
            });
        }
        if amount > self.cash {
            return Err(MarketError::InsufficientLiquidity {
                requested: amount,
                cash: self.cash,
            });
        }
        let index = self.liquidity_index;
        let pos = acct.position_mut(&self.id);
        let burn = if amount == balance {
            pos.scaled_collateral
        } else {
            amount
                .div_ray(index, Rounding::Up)
                .min(pos.scaled_collateral)
        };
        pos.scaled_collateral = pos.scaled_collateral.saturating_sub(burn);
        pos.withdrawn = pos.withdrawn.add(amount);
        self.scaled_supply = self.scaled_supply.saturating_sub(burn);
        self.cash = self.cash.saturating_sub(amount);
        acct.credit(&self.asset, amount);
        self.touch();
        Ok(())
    }

    /// Move `amount` of supplied balance from one account to another (liquidation seizure).
    pub fn transfer_supply(
        &mut self,
        from: &mut Account,
        to: &mut Account,
        amount: Amount,
    ) -> Result<(), MarketError> {
        let balance = self.supplied_balance(from);
        if amount > balance {
            return Err(MarketError::InsufficientBalance {
                requested: amount,
                balance,
            });
        }
        let index = self.liquidity_index;
        let src = from.position_mut(&self.id);
        let scaled = if amount == balance {
            src.scaled_collateral
        } else {
            amount
                .div_ray(index, Rounding::Up)
                .min(src.scaled_collateral)
        };
        src.scaled_collateral = src.scaled_collateral.saturating_sub(scaled);
        src.withdrawn = src.withdrawn.add(amount);
        let dst = to.position_mut(&self.id);
        dst.scaled_collateral = dst.scaled_collateral.add(scaled);
        dst.deposited = dst.deposited.add(amount);
        self.touch();
        Ok(())
    }

    // ---- borrower side ----

    /// Market-local admission checks for a new loan.
    pub fn check_borrow(&self, amount: Amount, mode: BorrowMode) -> Result<(), MarketError> {
        if amount.is_zero() {
            return Err(MarketError::ZeroAmount);
        }
        if self.borrowing_paused {
            return Err(MarketError::BorrowingPaused);
        }
        if mode == BorrowMode::Stable
            && (!self.stable_borrowing_enabled || self.stable_rate_model.is_none())
        {
            return Err(MarketError::StableDisabled);
        }
        if let Some(cap) = self.borrow_cap {
            let debt = self.total_debt();
            if debt.add(amount) > cap {
                return Err(MarketError::CapExceeded { cap, debt, amount });
            }
        }
        if amount > self.cash {
            return Err(MarketError::InsufficientLiquidity {
                requested: amount,
                cash: self.cash,
            });
        }
        Ok(())
    }

    /// Largest amount `check_borrow` would currently admit (ignoring solvency).
    pub fn borrowable(&self) -> Amount {
        if self.borrowing_paused {
            return Amount::ZERO;
        }
        let room = match self.borrow_cap {
            Some(cap) => cap.saturating_sub(self.total_debt()),
            None => self.cash,
        };
        room.min(self.cash)
    }

    /// Market-local borrow; solvency is checked by the caller.
    pub fn borrow(
        &mut self,
        acct: &mut Account,
        amount: Amount,
        mode: BorrowMode,
        now: u64,
    ) -> Result<(), MarketError> {
        if amount.is_zero() {
            return Err(MarketError::ZeroAmount);
        }
        self.accrue(now)?;
        self.check_borrow(amount, mode)?;
        match mode {
            BorrowMode::Variable => {
                let scaled = amount.div_ray(self.variable_borrow_index, Rounding::Up);
                let pos = acct.position_mut(&self.id);
                pos.scaled_variable_debt = pos.scaled_variable_debt.add(scaled);
                self.scaled_variable_debt = self.scaled_variable_debt.add(scaled);
            }
            BorrowMode::Stable => {
                let quoted = self
                    .stable_borrow_rate()
                    .ok_or(MarketError::StableDisabled)?;
                let pos = acct.position_mut(&self.id);
                let existing = pos.stable.take();
                let (prior_debt, prior_rate) = match existing {
                    Some(loan) => {
                        let debt = loan
                            .scaled
                            .mul_ray(self.bucket_index(loan.rate), Rounding::HalfUp);
                        self.remove_from_bucket(loan);
                        (debt, loan.rate)
                    }
                    None => (Amount::ZERO, Ray::ZERO),
                };
                let total = prior_debt.add(amount);
                let rate = weighted_rate(prior_debt, prior_rate, amount, quoted);
                pos.stable = Some(self.add_to_bucket(total, rate));
            }
        }
        self.cash = self.cash.saturating_sub(amount);
        acct.credit(&self.asset, amount);
        self.touch();
        Ok(())
    }

    fn remove_from_bucket(&mut self, loan: StableLoan) {
        if let Some(i) = self.stable_buckets.iter().position(|b| b.rate == loan.rate) {
            let b = &mut self.stable_buckets[i];
            b.scaled = b.scaled.saturating_sub(loan.scaled);
            if b.scaled.is_zero() {
                self.stable_buckets.remove(i);
            }
        }
    }

    fn add_to_bucket(&mut self, debt: Amount, rate: Rate) -> StableLoan {
        let i = match self.stable_buckets.iter().position(|b| b.rate == rate) {
            Some(i) => i,
            None => {
                let at = self.stable_buckets.partition_point(|b| b.rate < rate);
                self.stable_buckets.insert(
                    at,
                    StableBucket {
                        rate,
                        scaled: Amount::ZERO,
                        index: Ray::ONE,
                    },
                );
                at
            }
        };
        let b = &mut self.stable_buckets[i];
        let scaled = debt.div_ray(b.index, Rounding::Up);
        b.scaled = b.scaled.add(scaled);
        StableLoan { rate, scaled }
    }

    /// Repay the borrower's own debt from their wallet. Returns the amount taken.
    pub fn repay(
        &mut self,
        acct: &mut Account,
        amount: Amount,
        mode: BorrowMode,
        now: u64,
    ) -> Result<Amount, MarketError> {
        self.accrue(now)?;
        let owed = self.owed(acct.position(&self.id), mode)?;
        let repaid = amount.min(owed);
        let available = acct.wallet_balance(&self.asset);
        if available < repaid {
            return Err(MarketError::InsufficientWallet {
                needed: repaid,
                available,
            });
        }
        acct.debit(&self.asset, repaid);
        self.settle(acct.position_mut(&self.id), repaid, owed, mode);
        Ok(repaid)
    }

    /// Repay someone else's debt (liquidation). Returns the amount taken from `payer`.
    pub fn repay_on_behalf(
        &mut self,
        payer: &mut Account,
        borrower: &mut Account,
        amount: Amount,
        mode: BorrowMode,
        now: u64,
    ) -> Result<Amount, MarketError> {
        self.accrue(now)?;
        let owed = self.owed(borrower.position(&self.id), mode)?;
        let repaid = amount.min(owed);
        let available = payer.wallet_balance(&self.asset);
        if available < repaid {
            return Err(MarketError::InsufficientWallet {
                needed: repaid,
                available,
            });
        }
        payer.debit(&self.asset, repaid);
        self.settle(borrower.position_mut(&self.id), repaid, owed, mode);
        Ok(repaid)
    }

    fn owed(&self, pos: Option<&Position>, mode: BorrowMode) -> Result<Amount, MarketError> {
        let pos = pos.ok_or(MarketError::NoDebt)?;
        let owed = match mode {
            BorrowMode::Variable => self.variable_debt_of(pos),
            BorrowMode::Stable => self.stable_debt_of(pos),
        };
        if owed.is_zero() {
            return Err(MarketError::NoDebt);
        }
        Ok(owed)
    }

    fn settle(&mut self, pos: &mut Position, repaid: Amount, owed: Amount, mode: BorrowMode) {
        match mode {
            BorrowMode::Variable => {
                let burn = if repaid == owed {
                    pos.scaled_variable_debt
                } else {
                    repaid
                        .div_ray(self.variable_borrow_index, Rounding::Down)
                        .min(pos.scaled_variable_debt)
                };
                pos.scaled_variable_debt = pos.scaled_variable_debt.saturating_sub(burn);
                self.scaled_variable_debt = self.scaled_variable_debt.saturating_sub(burn);
            }
            BorrowMode::Stable => {
                let loan = pos.stable.expect("owed > 0 implies a stable loan");
                let burn = if repaid == owed {
                    loan.scaled
                } else {
                    repaid
                        .div_ray(self.bucket_index(loan.rate), Rounding::Down)
                        .min(loan.scaled)
                };
                self.remove_from_bucket(StableLoan {
                    rate: loan.rate,
                    scaled: burn,
                });
                let rest = loan.scaled.saturating_sub(burn);
                pos.stable = (!rest.is_zero()).then_some(StableLoan {
                    rate: loan.rate,
                    scaled: rest,
                });
            }
        }
        self.cash = self.cash.add(repaid);
        self.touch();
    }

    // ---- stable-rate rebalancing ----

    /// True iff the account's stable rate is below what lenders currently earn.
    pub fn rebalance_stable_check(&self, acct: &Account) -> Result<bool, MarketError> {
        let loan = acct
            .position(&self.id)
            .and_then(|p| p.stable)
            .ok_or(MarketError::NoStableDebt)?;
        Ok(loan.rate < self.supply_rate())
    }

    /// Reset a qualifying stable loan to the current stable-curve rate.
    /// Returns whether a reset happened.
    pub fn rebalance_stable(&mut self, acct: &mut Account, now: u64) -> Result<bool, MarketError> {
        self.accrue(now)?;
        if !self.rebalance_stable_check(acct)? {
            return Ok(false);
        }
        let quoted = self
            .stable_borrow_rate()
            .ok_or(MarketError::StableDisabled)?;
        let pos = acct.position_mut(&self.id);
        let loan = pos.stable.take().expect("checked above");
        let debt = loan
            .scaled
            .mul_ray(self.bucket_index(loan.rate), Rounding::HalfUp);
        self.remove_from_bucket(loan);
        pos.stable = Some(self.add_to_bucket(debt, quoted));
        self.touch();
        Ok(true)
    }

    // ---- governance ----

    pub fn set_rate_model(
        &mut self,
        model: RateModel,
        stable: Option<RateModel>,
        at: u64,
    ) -> Result<(), MarketError> {
        self.accrue(at)?;
        self.rate_model = model;
        if stable.is_some() {
            self.stable_rate_model = stable;
        }
        self.touch();
        Ok(())
    }

    pub fn set_borrow_cap(&mut self, cap: Option<Amount>, at: u64) -> Result<(), MarketError> {
        self.accrue(at)?;
        self.borrow_cap = cap;
        self.touch();
        Ok(())
    }

    pub fn set_pause(&mut self, paused: bool, at: u64) -> Result<(), MarketError> {
        self.accrue(at)?;
        self.borrowing_paused = paused;
        self.touch();
        Ok(())
    }

    pub fn set_reserve_factor(
        &mut self,
        reserve: ReserveFactor,
        at: u64,
    ) -> Result<(), MarketError> {
        self.accrue(at)?;
        self.reserve_factor = reserve;
        self.touch();
        Ok(())
    }
}

fn weighted_rate(a: Amount, ra: Rate, b: Amount, rb: Rate) -> Rate {
    use ethnum::U256;
    let total = a.add(b).raw();
    if total == 0 {
        return rb;
    }
    let num =
        U256::from(a.raw()) * U256::from(ra.raw()) + U256::from(b.raw()) * U256::from(rb.raw());
    Ray::from_raw(u128::try_from(num / U256::from(total)).expect("rate overflow"))
}
