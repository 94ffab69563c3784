#!/usr/bin/env python3
"""Regenerate scenario.json and prices.csv for the merge_replay scenario.

Prices and flows are synthetic. The price path loosely follows ETH between
9 Aug and 15 Oct 2022; the ETHW/ETH ratio sits near 0.03 before the fork and
collapses afterwards. Output is deterministic.
"""

import json
import random
from datetime import datetime, timezone
from pathlib import Path

HERE = Path(__file__).resolve().parent
HOUR = 3600
DAY = 86400


def ts(day: str, hour: int = 0) -> int:
    d = datetime.strptime(day, "%Y-%m-%d").replace(tzinfo=timezone.utc)
    return int(d.timestamp()) + hour * HOUR


START = ts("2022-08-09")
PAUSE = ts("2022-09-07")
CAP_DAY = ts("2022-09-10")
FORK = ts("2022-09-15")
END = ts("2022-10-15")

ETH_PATH = [
    ("2022-08-09", 1700), ("2022-08-11", 1880), ("2022-08-14", 1980),
    ("2022-08-17", 1860), ("2022-08-19", 1660), ("2022-08-23", 1620),
    ("2022-08-26", 1660), ("2022-08-27", 1500), ("2022-08-29", 1440),
    ("2022-08-31", 1550), ("2022-09-03", 1570), ("2022-09-06", 1640),
    ("2022-09-07", 1580), ("2022-09-09", 1720), ("2022-09-12", 1760),
    ("2022-09-13", 1590), ("2022-09-15", 1480), ("2022-09-18", 1360),
    ("2022-09-21", 1265), ("2022-09-23", 1300), ("2022-09-27", 1340),
    ("2022-10-01", 1310), ("2022-10-06", 1370), ("2022-10-10", 1300),
    ("2022-10-13", 1285), ("2022-10-15", 1300),
]

ETHW_RATIO_PATH = [
    ("2022-08-09", 0.036), ("2022-08-20", 0.034), ("2022-09-01", 0.035),
    ("2022-09-10", 0.033), ("2022-09-15", 0.032), ("2022-09-17", 0.014),
    ("2022-09-25", 0.012), ("2022-10-15", 0.008),
]


def interp(path, t):
    pts = [(ts(d), v) for d, v in path]
    if t <= pts[0][0]:
        return pts[0][1]
    for (t0, v0), (t1, v1) in zip(pts, pts[1:]):
        if t0 <= t <= t1:
            return v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    return pts[-1][1]


def prices(rng):
    rows = []
    for t in range(START, END + 1, HOUR):
        # exact anchor at the start so initial borrow sizes are predictable
        noise = 1.0 if t == START else 1.0 + rng.uniform(-0.002, 0.002)
        eth = interp(ETH_PATH, t) * noise
        ratio = interp(ETHW_RATIO_PATH, t) * (1.0 + rng.uniform(-0.02, 0.02))
        steth = eth * (0.985 + rng.uniform(-0.005, 0.005))
        rows.append((t, "ETH", f"{eth:.6f}"))
        rows.append((t, "ETHW", f"{eth * ratio:.6f}"))
        rows.append((t, "STETH", f"{steth:.6f}"))
        rows.append((t, "USDC", "1"))
    return rows


def dec(x, places=6):
    s = f"{x:.{places}f}".rstrip("0").rstrip(".")
    return s or "0"


def market(id_, asset, protocol, rate_model, rf, accrual, **extra):
    m = {
        "id": id_,
        "asset": asset,
        "protocol": protocol,
        "rate_model": rate_model,
        "reserve_factor": rf,
        "accrual": accrual,
    }
    m.update(extra)
    return m


AAVE_ETH = {"type": "aave_kinked", "r0": "0", "slope1": "0.03", "slope2": "1", "u_optimal": "0.7"}
AAVE_USDC = {"type": "aave_kinked", "r0": "0", "slope1": "0.04", "slope2": "0.6", "u_optimal": "0.9"}
AAVE_USDC_STABLE = {"type": "aave_kinked", "r0": "0.02", "slope1": "0.02", "slope2": "0.6", "u_optimal": "0.9"}
AAVE_STETH = {"type": "aave_kinked", "r0": "0", "slope1": "0.07", "slope2": "3", "u_optimal": "0.45"}
COMP_ETH_LINEAR = {"type": "compound_linear", "r0": "0.02", "slope": "0.1"}
COMP_ETH_JUMP = {"type": "compound_jump", "r0": "0.02", "slope1": "0.2", "slope2": "49.1", "kink": "0.8"}
COMP_USDC = {"type": "compound_jump", "r0": "0", "slope1": "0.04", "slope2": "1.09", "kink": "0.8"}
PER_SECOND = {"type": "per_second_compound"}
PER_BLOCK = {"type": "per_block_linear"}


def build(rng):
    markets = [
        market("aave_eth", "ETH", "aave", AAVE_ETH, "0.1", PER_SECOND),
        market("aave_usdc", "USDC", "aave", AAVE_USDC, "0.1", PER_SECOND,
               stable_rate_model=AAVE_USDC_STABLE, stable_borrowing_enabled=True),
        market("aave_steth", "STETH", "aave", AAVE_STETH, "0.1", PER_SECOND),
        market("compound_eth", "ETH", "compound", COMP_ETH_LINEAR, "0.2", PER_BLOCK),
        market("compound_usdc", "USDC", "compound", COMP_USDC, "0.075", PER_BLOCK),
    ]
    collateral = {
        "aave_eth": {"asset": "ETH", "ltv": "0.8", "liquidation_threshold": "0.825"},
        "aave_usdc": {"asset": "USDC", "ltv": "0.8", "liquidation_threshold": "0.85"},
        "aave_steth": {"asset": "STETH", "ltv": "0.73", "liquidation_threshold": "0.75",
                       "liquidation_bonus": "0.075"},
        "compound_eth": {"asset": "ETH", "ltv": "0.825", "liquidation_threshold": "0.825",
                         "liquidation_bonus": "0.08"},
        "compound_usdc": {"asset": "USDC", "ltv": "0.855", "liquidation_threshold": "0.855",
                          "liquidation_bonus": "0.08"},
    }
    accounts = []
    agents = []
    events = []

    def account(id_, **wallet):
        accounts.append({"id": id_, "wallet": {k: dec(v) for k, v in wallet.items()}})

    def deposit(t, acct, mkt, amount):
        events.append({"time": t, "kind": "deposit", "account": acct, "market": mkt, "amount": dec(amount)})

    def borrow(t, acct, mkt, amount, mode="variable"):
        events.append({"time": t, "kind": "borrow", "account": acct, "market": mkt,
                       "amount": dec(amount, 2), "mode": mode})

    # AAVE ETH lenders: a few large liquidity providers that leave ahead of the
    # fork and many small ones that only react to utilization.
    for i in range(1, 5):
        a = f"aave_whale_{i}"
        account(a, ETH=300_000)
        deposit(START, a, "aave_eth", 300_000)
        agents.append({"kind": "lender", "account": a, "market": "aave_eth",
                       "exit_at": ts("2022-09-10", 12), "exit_jitter": DAY})
    for i in range(1, 41):
        a = f"aave_lender_{i:02}"
        account(a, ETH=10_000)
        deposit(START, a, "aave_eth", 10_000)
        agents.append({"kind": "lender", "account": a, "market": "aave_eth",
                       "withdraw_trigger_utilization": "0.9"})

    account("usdc_lender", USDC=200_000_000)
    deposit(START, "usdc_lender", "aave_usdc", 150_000_000)
    deposit(START, "usdc_lender", "compound_usdc", 50_000_000)

    account("steth_lender", STETH=20_000)
    deposit(START, "steth_lender", "aave_steth", 20_000)

    account("compound_supplier", ETH=900_000)
    deposit(START, "compound_supplier", "compound_eth", 900_000)

    # Existing ETH demand before the arbitrage opportunity.
    account("aave_background", USDC=2_000_000_000)
    deposit(START, "aave_background", "aave_usdc", 2_000_000_000)
    borrow(START, "aave_background", "aave_eth", 450_000)
    account("compound_background", USDC=300_000_000)
    deposit(START, "compound_background", "compound_usdc", 300_000_000)
    borrow(START, "compound_background", "compound_eth", 55_000)

    # ETH-collateralized USDC borrowers with staggered liquidation prices.
    lt = 0.825
    aug = [1450 + 190 * k / 19 for k in range(20)]
    sep = [1270 + 150 * k / 5 for k in range(6)]
    for i, lp in enumerate(aug + sep, start=1):
        a = f"borrower_{i:02}"
        coll = 100
        account(a, ETH=coll)
        deposit(START, a, "aave_eth", coll)
        borrow(START, a, "aave_usdc", coll * lp * lt)

    # A stable-rate USDC borrower, comfortably collateralized.
    account("stable_borrower", ETH=1_000)
    deposit(START, "stable_borrower", "aave_eth", 1_000)
    borrow(START, "stable_borrower", "aave_usdc", 500_000, mode="stable")
    events.append({"time": ts("2022-09-20"), "kind": "rebalance_stable",
                   "account": "stable_borrower", "market": "aave_usdc"})

    # Arbitrageurs post USDC and borrow ETH while the rate is far below break-even.
    for i in range(1, 7):
        a = f"aave_arb_{i}"
        account(a, USDC=400_000_000, ETH=2_000)
        deposit(START, a, "aave_usdc", 400_000_000)
        agents.append({"kind": "arbitrageur", "account": a, "market": "aave_eth",
                       "active_from": START + i * DAY, "max_borrow": "40000",
                       "power_usage": "0.5"})
    # Arrives after the pause; every attempt is refused.
    account("aave_late_arb", USDC=100_000_000, ETH=500)
    deposit(START, "aave_late_arb", "aave_usdc", 100_000_000)
    agents.append({"kind": "arbitrageur", "account": "aave_late_arb", "market": "aave_eth",
                   "active_from": PAUSE + HOUR, "max_borrow": "10000", "power_usage": "0.5"})
    for i in range(1, 4):
        a = f"compound_early_arb_{i}"
        account(a, USDC=50_000_000, ETH=200)
        deposit(START, a, "compound_usdc", 50_000_000)
        agents.append({"kind": "arbitrageur", "account": a, "market": "compound_eth",
                       "active_from": START + 2 * i * DAY, "max_borrow": "5000",
                       "power_usage": "0.5"})
    for i in range(1, 4):
        a = f"compound_arb_{i}"
        account(a, USDC=100_000_000, ETH=1_000)
        deposit(START, a, "compound_usdc", 100_000_000)
        agents.append({"kind": "arbitrageur", "account": a, "market": "compound_eth",
                       "active_from": CAP_DAY, "max_borrow": "20000", "power_usage": "0.5"})

    # Leveraged stETH stakers.
    for i in range(1, 4):
        a = f"looper_{i}"
        account(a, STETH=1_000)
        agents.append({"kind": "looper", "account": a, "collateral_market": "aave_steth",
                       "debt_market": "aave_eth", "start": START + i * HOUR,
                       "ltv": "0.6", "iterations": 3})

    account("keeper", USDC=50_000_000, ETH=50_000)
    agents.insert(0, {"kind": "keeper", "account": "keeper"})

    # Governance interventions and the fork, at 00:00 UTC of the named days.
    events.append({"time": PAUSE, "kind": "set_pause", "market": "aave_eth", "paused": True})
    account("late_borrower", USDC=10_000_000)
    deposit(PAUSE, "late_borrower", "aave_usdc", 10_000_000)
    borrow(PAUSE + 6 * HOUR, "late_borrower", "aave_eth", 100)
    events.append({"time": CAP_DAY, "kind": "set_rate_model", "market": "compound_eth",
                   "model": COMP_ETH_JUMP})
    events.append({"time": CAP_DAY, "kind": "set_borrow_cap", "market": "compound_eth",
                   "cap": "100000"})
    events.append({"time": FORK, "kind": "fork", "parent_asset": "ETH", "forked_asset": "ETHW"})

    events.sort(key=lambda e: e["time"])
    return {
        "name": "merge_replay",
        "start": START,
        "end": END,
        "checkpoint_interval": HOUR,
        "prices": "prices.csv",
        "native_asset": "ETH",
        "markets": markets,
        "collateral_configs": collateral,
        "accounts": accounts,
        "agents": agents,
        "events": events,
    }


def main():
    rng = random.Random(20220915)
    rows = prices(rng)
    with open(HERE / "prices.csv", "w", newline="") as f:
        f.write("timestamp,asset,price_usd\n")
        for t, a, p in rows:
            f.write(f"{t},{a},{p}\n")
    scenario = build(rng)
    with open(HERE / "scenario.json", "w") as f:
        json.dump(scenario, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    main()
