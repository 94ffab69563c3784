#![allow(dead_code)]

use std::path::PathBuf;

use forksim_core::scenario::{run, PriceSeries, RunOptions, RunOutput, Scenario};

pub const MERGE_REPLAY_SEED: u64 = 7;

pub fn merge_replay_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/merge_replay/scenario.json")
}

pub fn load_merge_replay() -> (Scenario, PriceSeries) {
    let scenario = Scenario::load(&merge_replay_path()).expect("bundled scenario parses");
    let prices = PriceSeries::load(scenario.prices.as_ref().expect("scenario names its prices"))
        .expect("bundled prices parse");
    (scenario, prices)
}

pub fn run_merge_replay(seed: u64) -> RunOutput {
    let (scenario, prices) = load_merge_replay();
    run(
        &scenario,
        &prices,
        RunOptions {
            seed,
            checkpoint_interval: None,
        },
    )
    .expect("bundled scenario runs")
}

/// 00:00 UTC on the given day of 2022.
pub fn utc(month: u32, day: u32) -> u64 {
    chrono::NaiveDate::from_ymd_opt(2022, month, day)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap()
        .and_utc()
        .timestamp() as u64
}
