use forksim_core::fixed::{Amount, Ray, RAY};
use forksim_core::market::{
    Account, AccrualMode, BorrowMode, MarketConfig, MarketError, MarketState,
};
use forksim_core::rates::{
    aave_supply_rate, compound_supply_rate, debt_shares, RateModel, ReserveFactor, Utilization,
};
use proptest::prelude::*;

fn ray(raw: u128) -> Ray {
    Ray::from_raw(raw)
}

fn util(raw: u128) -> Utilization {
    Utilization::new(ray(raw)).unwrap()
}

fn unit_ray() -> impl Strategy<Value = Ray> {
    (0..=RAY).prop_map(ray)
}

fn slope() -> impl Strategy<Value = Ray> {
    (0..=50 * RAY).prop_map(ray)
}

fn kink() -> impl Strategy<Value = Ray> {
    (RAY / 100..=RAY * 99 / 100).prop_map(ray)
}

fn any_model() -> impl Strategy<Value = RateModel> {
    prop_oneof![
        (unit_ray(), slope(), slope(), kink()).prop_map(|(r0, slope1, slope2, u_optimal)| {
            RateModel::AaveKinked {
                r0,
                slope1,
                slope2,
                u_optimal,
            }
        }),
        (unit_ray(), slope()).prop_map(|(r0, slope)| RateModel::CompoundLinear { r0, slope }),
        (unit_ray(), slope(), slope(), kink()).prop_map(|(r0, slope1, slope2, kink)| {
            RateModel::CompoundJump {
                r0,
                slope1,
                slope2,
                kink,
            }
        }),
    ]
}

proptest! {
    #[test]
    fn rates_are_monotone(model in any_model(), a in 0..=RAY, b in 0..=RAY) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(model.rate(util(lo)) <= model.rate(util(hi)));
    }

    #[test]
    fn kinks_are_continuous(model in any_model()) {
        let eps = 1_000_000_000_000_000_000u128; // 1e-9 in ray units
        let (k, left_slope, right_slope) = match model {
            RateModel::AaveKinked { slope1, slope2, u_optimal, .. } => (
                u_optimal,
                slope1.div(u_optimal),
                slope2.div(Ray::ONE.saturating_sub(u_optimal)),
            ),
            RateModel::CompoundJump { slope1, slope2, kink, .. } => (kink, slope1, slope1.add(slope2)),
            RateModel::CompoundLinear { .. } => return Ok(()),
        };
        let below = model.rate(util(k.raw() - eps));
        let above = model.rate(util(k.raw() + eps));
        let jump = above.saturating_sub(below).raw();
        // slope-bounded: at most max(slope) * 2 eps plus a few units of rounding
        let bound = left_slope.max(right_slope).mul(ray(2 * eps)).raw() + 4;
        prop_assert!(jump <= bound, "jump {} > bound {}", jump, bound);
        prop_assert!(model.rate(util(k.raw())) >= below);
        prop_assert!(model.rate(util(k.raw())) <= above);
    }

    #[test]
    fn compound_supply_never_exceeds_borrow(r in slope(), u in 0..=RAY, rf in 0..=RAY) {
        let reserve = ReserveFactor::new(ray(rf)).unwrap();
        prop_assert!(compound_supply_rate(r, util(u), reserve) <= r);
    }

    #[test]
    fn aave_supply_bounded_by_inputs(
        stable in 0u128..1u128 << 100,
        variable in 0u128..1u128 << 100,
        avg_stable in slope(),
        var_rate in slope(),
        u in 0..=RAY,
        rf in 0..=RAY,
    ) {
        let (ss, vs) = debt_shares(Amount::from_raw(stable), Amount::from_raw(variable));
        let reserve = ReserveFactor::new(ray(rf)).unwrap();
        let s = aave_supply_rate(util(u), ss, avg_stable, vs, var_rate, reserve);
        prop_assert!(s <= avg_stable.max(var_rate));
    }

    #[test]
    fn reserve_factor_extremes(r in slope(), u in 0..=RAY) {
        let all = ReserveFactor::new(Ray::ONE).unwrap();
        let none = ReserveFactor::new(Ray::ZERO).unwrap();
        prop_assert_eq!(compound_supply_rate(r, util(u), all), Ray::ZERO);
        prop_assert_eq!(aave_supply_rate(util(u), Ray::ZERO, Ray::ZERO, Ray::ONE, r, all), Ray::ZERO);
        prop_assert_eq!(compound_supply_rate(r, Utilization::FULL, none), r);
        prop_assert_eq!(aave_supply_rate(Utilization::FULL, Ray::ZERO, Ray::ZERO, Ray::ONE, r, none), r);
    }
}

fn config(accrual: AccrualMode, cap: Option<Amount>) -> MarketConfig {
    MarketConfig {
        id: "m".into(),
        asset: "ETH".into(),
        protocol: "p".into(),
        rate_model: RateModel::aave_eth_variable(),
        stable_rate_model: Some(RateModel::aave_eth_stable()),
        reserve_factor: ReserveFactor::new(Ray::ratio(1, 10)).unwrap(),
        borrow_cap: cap,
        borrowing_paused: false,
        stable_borrowing_enabled: true,
        accrual,
    }
}

fn accrual_mode() -> impl Strategy<Value = AccrualMode> {
    prop_oneof![
        Just(AccrualMode::PerSecondCompound),
        Just(AccrualMode::per_block_default())
    ]
}

#[derive(Debug, Clone)]
enum Op {
    Deposit(usize, u64),
    Withdraw(usize, u64),
    Borrow(usize, u64, BorrowMode),
    Repay(usize, u64, BorrowMode),
    Advance(u64),
    SetCap(Option<u64>),
    Rebalance(usize),
}

fn mode() -> impl Strategy<Value = BorrowMode> {
    prop_oneof![Just(BorrowMode::Variable), Just(BorrowMode::Stable)]
}

fn op() -> impl Strategy<Value = Op> {
    let who = 0usize..3;
    let amt = 1u64..2_000;
    prop_oneof![
        (who.clone(), amt.clone()).prop_map(|(w, a)| Op::Deposit(w, a)),
        (who.clone(), amt.clone()).prop_map(|(w, a)| Op::Withdraw(w, a)),
        (who.clone(), amt.clone(), mode()).prop_map(|(w, a, m)| Op::Borrow(w, a, m)),
        (who.clone(), amt, mode()).prop_map(|(w, a, m)| Op::Repay(w, a, m)),
        (1u64..40 * 86_400).prop_map(Op::Advance),
        proptest::option::of(100u64..3_000).prop_map(Op::SetCap),
        who.prop_map(Op::Rebalance),
    ]
}

fn tokens(n: u64) -> Amount {
    Amount::from_tokens(n)
}

/// Replays `ops`, checking invariants after each step. Returns the final state.
fn replay(mode: AccrualMode, ops: &[Op]) -> Result<(MarketState, Vec<Account>), TestCaseError> {
    let mut m = MarketState::new(config(mode, None), 0);
    let mut accts: Vec<Account> = (0..3)
        .map(|i| Account::new(format!("a{i}").as_str()).with_wallet("ETH", tokens(1_000_000)))
        .collect();
    let mut now = 0u64;
    for op in ops {
        let debt_before = m.total_debt();
        let result: Result<(), MarketError> = match *op {
            Op::Deposit(w, a) => m.deposit(&mut accts[w], tokens(a), now),
            Op::Withdraw(w, a) => m.withdraw(&mut accts[w], tokens(a), now),
            Op::Borrow(w, a, md) => m.borrow(&mut accts[w], tokens(a), md, now),
            Op::Repay(w, a, md) => m.repay(&mut accts[w], tokens(a), md, now).map(|_| ()),
            Op::Advance(dt) => {
                now += dt;
                m.accrue(now)
            }
            Op::SetCap(c) => m.set_borrow_cap(c.map(tokens), now),
            Op::Rebalance(w) => m.rebalance_stable(&mut accts[w], now).map(|_| ()),
        };
        if let Err(e) = &result {
            prop_assert!(e.is_rejection(), "unexpected error {e:?}");
        }
        if let (Op::Borrow(..), Ok(()), Some(cap)) = (op, &result, m.borrow_cap) {
            // new principal never pushes debt past the cap
            prop_assert!(m.total_debt() <= cap.max(debt_before) || m.total_debt() <= cap);
        }
        prop_assert!(m.utilization().value() <= Ray::ONE);
        prop_assert!(m.conservation_gap().unsigned_abs() <= m.steps as u128);
        prop_assert_eq!(m.available_liquidity(), m.cash);
        let supplied: u128 = accts.iter().map(|a| m.supplied_balance(a).raw()).sum();
        let owed: u128 = accts.iter().map(|a| m.account_debt(a).raw()).sum();
        let slack = 4 * (m.stable_buckets.len() as u128 + 2);
        prop_assert!(supplied <= m.total_supplied().raw() + slack);
        prop_assert!(owed + slack >= m.total_debt().raw() && owed <= m.total_debt().raw() + slack);
    }
    Ok((m, accts))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn random_operation_sequences_keep_invariants(mode in accrual_mode(), ops in prop::collection::vec(op(), 1..60)) {
        replay(mode, &ops)?;
    }

    #[test]
    fn replay_is_deterministic(mode in accrual_mode(), ops in prop::collection::vec(op(), 1..40)) {
        let (a, accts_a) = replay(mode, &ops)?;
        let (b, accts_b) = replay(mode, &ops)?;
        prop_assert_eq!(a, b);
        prop_assert_eq!(accts_a, accts_b);
    }

    #[test]
    fn split_accrual_matches_single_step(
        mode in accrual_mode(),
        supply in 1_000u64..1_000_000,
        debt_pct in 1u64..100,
        stable_pct in 0u64..50,
        t1 in 1u64..10_000_000,
        t2 in 1u64..10_000_000,
    ) {
        // a flat curve keeps the variable rate frozen while utilization drifts
        let mut cfg = config(mode, None);
        cfg.rate_model = RateModel::CompoundLinear { r0: Ray::ratio(1, 10), slope: Ray::ZERO };
        let mut m = MarketState::new(cfg, 0);
        let mut lender = Account::new("l").with_wallet("ETH", tokens(supply));
        let mut borrower = Account::new("b");
        m.deposit(&mut lender, tokens(supply), 0).unwrap();
        let debt = supply * debt_pct / 100;
        let stable = debt * stable_pct / 100;
        if stable > 0 {
            m.borrow(&mut borrower, tokens(stable), BorrowMode::Stable, 0).unwrap();
        }
        if debt > stable {
            m.borrow(&mut borrower, tokens(debt - stable), BorrowMode::Variable, 0).unwrap();
        }
        let mut split = m.clone();
        let mut direct = m;
        split.accrue(t1).unwrap();
        split.accrue(t1 + t2).unwrap();
        direct.accrue(t1 + t2).unwrap();
        if matches!(mode, AccrualMode::PerBlockLinear { .. }) {
            // linear per-block accrual is anchored to the segment start, so splitting is exact
            prop_assert_eq!(split.variable_borrow_index, direct.variable_borrow_index);
            prop_assert_eq!(split.liquidity_index, direct.liquidity_index);
            prop_assert_eq!(split.treasury, direct.treasury);
            prop_assert_eq!(&split.stable_buckets, &direct.stable_buckets);
        } else {
            prop_assert!(rel_close(split.variable_borrow_index.raw(), direct.variable_borrow_index.raw()));
            prop_assert!(rel_close(split.liquidity_index.raw(), direct.liquidity_index.raw()));
            prop_assert!(rel_close(split.total_debt().raw(), direct.total_debt().raw()));
        }
    }
}

fn rel_close(a: u128, b: u128) -> bool {
    let diff = a.abs_diff(b) as f64;
    diff <= 1e-12 * a.max(b) as f64 + 1.0
}

proptest! {
    #[test]
    fn large_pools_conserve_value(
        mode in accrual_mode(),
        supply in 1_000_000_000u64..100_000_000_000,
        debt_pct in 1u64..95,
        stable_pct in 0u64..50,
        hops in prop::collection::vec(1u64..7 * 86_400, 1..200),
    ) {
        let mut m = MarketState::new(config(mode, None), 0);
        let mut lender = Account::new("l").with_wallet("ETH", tokens(supply));
        let mut borrower = Account::new("b");
        m.deposit(&mut lender, tokens(supply), 0).unwrap();
        let debt = supply / 100 * debt_pct;
        let stable = debt / 100 * stable_pct;
        if stable > 0 {
            m.borrow(&mut borrower, tokens(stable), BorrowMode::Stable, 0).unwrap();
        }
        m.borrow(&mut borrower, tokens(debt - stable), BorrowMode::Variable, 0).unwrap();
        let mut now = 0;
        for dt in hops {
            now += dt;
            m.accrue(now).unwrap();
            prop_assert!(m.conservation_gap().unsigned_abs() <= m.steps as u128, "gap {} after {} steps", m.conservation_gap(), m.steps);
        }
    }
}

#[test]
fn cap_blocks_new_principal_but_not_interest() {
    let mut m = MarketState::new(
        config(AccrualMode::per_block_default(), Some(tokens(100))),
        0,
    );
    let mut lender = Account::new("l").with_wallet("ETH", tokens(1_000));
    let mut b = Account::new("b");
    m.deposit(&mut lender, tokens(1_000), 0).unwrap();
    m.borrow(&mut b, tokens(100), BorrowMode::Variable, 0)
        .unwrap();
    assert!(matches!(
        m.borrow(&mut b, Amount::from_raw(1), BorrowMode::Variable, 0),
        Err(MarketError::CapExceeded { .. })
    ));
    m.accrue(365 * 86_400).unwrap();
    assert!(m.total_debt() > tokens(100));
    assert!(matches!(
        m.borrow(
            &mut b,
            Amount::from_raw(1),
            BorrowMode::Variable,
            365 * 86_400
        ),
        Err(MarketError::CapExceeded { .. })
    ));
}
