use std::collections::BTreeMap;

use forksim_core::fixed::{Amount, Price, Ray, RAY, WAD};
use forksim_core::fork_arb::{
    apply_fork, arb_pnl, break_even_rate, cumulative_borrow_cost, price_ratio, steth_loop,
    ArbPosition, ForkError, ForkSpec, TimeToMerge,
};
use forksim_core::ids::AccountId;
use forksim_core::market::{Account, AccrualMode, Book, MarketConfig};
use forksim_core::rates::{RateModel, ReserveFactor};
use proptest::prelude::*;

const DAY: u64 = 86_400;

fn eth_market(id: &str, asset: &str) -> MarketConfig {
    MarketConfig {
        id: id.into(),
        asset: asset.into(),
        protocol: id.into(),
        rate_model: RateModel::aave_eth_variable(),
        stable_rate_model: None,
        reserve_factor: ReserveFactor::new(Ray::ratio(1, 10)).unwrap(),
        borrow_cap: None,
        borrowing_paused: false,
        stable_borrowing_enabled: false,
        accrual: AccrualMode::PerSecondCompound,
    }
}

proptest! {
    #[test]
    fn fork_mints_exactly_wallets_plus_pool_cash(
        wallets in prop::collection::vec((0u64..1_000, 0u64..100, 0u64..100), 1..8),
    ) {
        let mut book = Book::new();
        book.add_market(eth_market("aave_eth", "ETH"), 0, None);
        book.add_market(eth_market("comp_eth", "ETH"), 0, None);
        book.add_market(eth_market("aave_usdc", "USDC"), 0, None);
        let mut accounts = BTreeMap::new();
        for (i, (held, dep_a, dep_c)) in wallets.iter().enumerate() {
            let mut a = Account::new(format!("acct{i}").as_str())
                .with_wallet("ETH", Amount::from_tokens(held + dep_a + dep_c))
                .with_wallet("USDC", Amount::from_tokens(50));
            if *dep_a > 0 {
                book.deposit(&mut a, &"aave_eth".into(), Amount::from_tokens(*dep_a), 0).unwrap();
            }
            if *dep_c > 0 {
                book.deposit(&mut a, &"comp_eth".into(), Amount::from_tokens(*dep_c), 0).unwrap();
            }
            book.deposit(&mut a, &"aave_usdc".into(), Amount::from_tokens(50), 0).unwrap();
            accounts.insert(a.id.clone(), a);
        }
        let wallet_eth: u128 = accounts.values().map(|a| a.wallet_balance(&"ETH".into()).raw()).sum();
        let pool_cash: u128 = book
            .markets
            .values()
            .filter(|m| m.asset == "ETH".into())
            .map(|m| m.cash.raw())
            .sum();

        let mut applied = false;
        let report = apply_fork(&ForkSpec::new(DAY), &mut accounts, &book, &mut applied).unwrap();
        prop_assert_eq!(report.total_minted().raw(), wallet_eth + pool_cash);
        prop_assert_eq!(report.minted_pools.raw(), pool_cash);
        let held_ethw: u128 = accounts.values().map(|a| a.wallet_balance(&"ETHW".into()).raw()).sum();
        prop_assert_eq!(held_ethw, wallet_eth + pool_cash);
        for (i, (held, _, _)) in wallets.iter().enumerate() {
            let id = AccountId::from(format!("acct{i}").as_str());
            prop_assert_eq!(accounts[&id].wallet_balance(&"ETHW".into()), Amount::from_tokens(*held));
        }
        prop_assert_eq!(
            apply_fork(&ForkSpec::new(DAY), &mut accounts, &book, &mut applied),
            Err(ForkError::AlreadyForked)
        );
    }

    #[test]
    fn break_even_rises_as_the_fork_nears(ratio_nano in 1_000_000u128..100_000_000, d in 2 * DAY..2 * 365 * DAY, gap in 1u64..30 * DAY) {
        let p_eth = Price::from_raw(WAD);
        let p_ethw = Price::from_raw(ratio_nano * 1_000_000_000);
        let near = break_even_rate(p_ethw, p_eth, TimeToMerge::new(d).unwrap()).unwrap();
        let far = break_even_rate(p_ethw, p_eth, TimeToMerge::new(d + gap).unwrap()).unwrap();
        prop_assert!(near > far, "{} at {}s vs {} at {}s", near, d, far, d + gap);
    }

    #[test]
    fn break_even_rises_with_the_price_ratio(a in 1_000_000u128..100_000_000, b in 1_000_000u128..100_000_000, d in 2 * DAY..2 * 365 * DAY) {
        prop_assume!(a != b);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let p_eth = Price::from_raw(WAD);
        let t = TimeToMerge::new(d).unwrap();
        let r_lo = break_even_rate(Price::from_raw(lo * 1_000_000_000), p_eth, t).unwrap();
        let r_hi = break_even_rate(Price::from_raw(hi * 1_000_000_000), p_eth, t).unwrap();
        prop_assert!(r_hi > r_lo);
    }

    #[test]
    fn cheap_carry_is_profitable(
        steps in prop::collection::vec((1u64..5 * DAY, 0u128..RAY / 5), 1..20),
        per_block in any::<bool>(),
        principal in 1u64..10_000,
        p_eth in 100u64..5_000,
        ratio_bp in 1u128..1_000,
    ) {
        let mode = if per_block { AccrualMode::per_block_default() } else { AccrualMode::PerSecondCompound };
        let mut series = Vec::new();
        let mut t = 0;
        for (dt, rate) in &steps {
            series.push((t, Ray::from_raw(*rate)));
            t += dt;
        }
        let cost = cumulative_borrow_cost(&series, 0, t, mode).unwrap();
        let p_eth = Price::from_int(p_eth);
        let p_ethw = Price::from_raw(p_eth.raw() * ratio_bp / 10_000);
        let ratio = price_ratio(p_ethw, p_eth).unwrap();
        // stay clear of the fixed-point rounding floor
        prop_assume!(ratio.raw() > cost.raw() + RAY / 1_000_000_000_000_000_000);

        let borrowed = Amount::from_tokens(principal);
        let mut pos = ArbPosition::open("arb".into(), 0);
        pos.borrowed = borrowed;
        pos.ethw_received = borrowed;
        pos.interest_paid = borrowed.mul_ray(cost, forksim_core::fixed::Rounding::HalfUp);
        pos.close_time = Some(t);
        prop_assert!(arb_pnl(&pos, p_ethw, p_eth).unwrap().is_positive());
    }

}

proptest! {
    // each case replays the loop from scratch for every round count
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn loop_exposure_converges_monotonically(initial in 1u64..1_000_000, ltv in RAY / 20..RAY * 95 / 100) {
        let ltv = Ray::from_raw(ltv);
        let initial = Amount::from_tokens(initial);
        let limit = steth_loop(initial, ltv, None).unwrap().exposure;
        // once a round adds less than one raw unit the rounded sum can stall; the remaining
        // tail is then about 1/(1-ltv) units, plus ray rounding proportional to the stake
        let floor = 4 + (1.0 / (1.0 - ltv.to_f64())).ceil() as u128 + initial.raw() / 10u128.pow(22);
        let mut prev = u128::MAX;
        // 0.95^2000 is far below the floor for any tested stake
        for n in 0..2000 {
            let e = steth_loop(initial, ltv, Some(n)).unwrap().exposure;
            let gap = e.raw().abs_diff(limit.raw());
            if gap <= floor {
                return Ok(());
            }
            prop_assert!(gap < prev, "gap {} did not shrink at n={}", gap, n);
            prev = gap;
        }
        prop_assert!(false, "no convergence within 2000 rounds, gap {}", prev);
    }
}
