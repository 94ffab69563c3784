use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use super::file::{Action, Scenario};
use super::prices::PriceSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DiagnosticKind {
    DuplicateFork,
    UnknownMarket,
    UnknownAccount,
    UnorderedEvents,
    ParameterOutOfRange,
    PriceCoverage,
    ForkOutsideHorizon,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    /// Index into `events`, when the problem belongs to one.
    pub event: Option<usize>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.event {
            Some(i) => write!(f, "{:?} (event {i}): {}", self.kind, self.message),
            None => write!(f, "{:?}: {}", self.kind, self.message),
        }
    }
}

fn diag(kind: DiagnosticKind, event: Option<usize>, message: impl Into<String>) -> Diagnostic {
    Diagnostic {
        kind,
        event,
        message: message.into(),
    }
}

/// Static checks on a scenario. Price coverage is only checked when a series is given.
pub fn validate(s: &Scenario, prices: Option<&PriceSeries>) -> Vec<Diagnostic> {
    use DiagnosticKind::*;
    let mut out = Vec::new();

    if s.end < s.start {
        out.push(diag(
            ParameterOutOfRange,
            None,
            format!("end {} precedes start {}", s.end, s.start),
        ));
    }
    if s.checkpoint_interval == 0 {
        out.push(diag(
            ParameterOutOfRange,
            None,
            "checkpoint_interval must be positive",
        ));
    }

    let mut market_ids = BTreeSet::new();
    for m in &s.markets {
        if !market_ids.insert(&m.id) {
            out.push(diag(
                ParameterOutOfRange,
                None,
                format!("market {} defined twice", m.id),
            ));
        }
        if let Err(e) = m.rate_model.validate() {
            out.push(diag(
                ParameterOutOfRange,
                None,
                format!("market {}: {e}", m.id),
            ));
        }
        if let Some(Err(e)) = m.stable_rate_model.as_ref().map(|r| r.validate()) {
            out.push(diag(
                ParameterOutOfRange,
                None,
                format!("market {} stable model: {e}", m.id),
            ));
        }
        if m.stable_borrowing_enabled && m.stable_rate_model.is_none() {
            out.push(diag(
                ParameterOutOfRange,
                None,
                format!(
                    "market {} enables stable borrowing without a stable model",
                    m.id
                ),
            ));
        }
    }
    for (id, cfg) in &s.collateral_configs {
        match s.market(id) {
            None => out.push(diag(
                UnknownMarket,
                None,
                format!("collateral config for unknown market {id}"),
            )),
            Some(m) if m.asset != cfg.asset => out.push(diag(
                ParameterOutOfRange,
                None,
                format!(
                    "collateral config for {id} names asset {} but the market holds {}",
                    cfg.asset, m.asset
                ),
            )),
            Some(_) => {}
        }
        if let Err(e) = cfg.validate() {
            out.push(diag(
                ParameterOutOfRange,
                None,
                format!("collateral config {id}: {e}"),
            ));
        }
    }

    let mut account_ids: BTreeSet<_> = s.accounts.iter().map(|a| &a.id).collect();
    for a in &s.agents {
        account_ids.insert(a.account());
        for m in a.markets() {
            if !market_ids.contains(m) {
                out.push(diag(
                    UnknownMarket,
                    None,
                    format!("{} agent references unknown market {m}", a.kind()),
                ));
            }
        }
        for problem in a.check() {
            out.push(diag(
                ParameterOutOfRange,
                None,
                format!("{} agent {}: {problem}", a.kind(), a.account()),
            ));
        }
    }

    let mut forks = 0;
    let mut last_time = 0;
    for (i, e) in s.events.iter().enumerate() {
        if e.time < last_time {
            out.push(diag(
                UnorderedEvents,
                Some(i),
                format!("time {} precedes the previous event at {last_time}", e.time),
            ));
        }
        last_time = last_time.max(e.time);
        if e.time < s.start || e.time > s.end {
            out.push(diag(
                ParameterOutOfRange,
                Some(i),
                format!("time {} outside [{}, {}]", e.time, s.start, s.end),
            ));
        }
        for m in e.action.markets() {
            if !market_ids.contains(m) {
                out.push(diag(UnknownMarket, Some(i), format!("unknown market {m}")));
            }
        }
        for a in e.action.accounts() {
            if !account_ids.contains(a) {
                out.push(diag(
                    UnknownAccount,
                    Some(i),
                    format!("unknown account {a}"),
                ));
            }
        }
        match &e.action {
            Action::Fork {
                parent_asset,
                forked_asset,
            } => {
                forks += 1;
                if forks > 1 {
                    out.push(diag(
                        DuplicateFork,
                        Some(i),
                        "only one fork event is allowed",
                    ));
                }
                if parent_asset == forked_asset {
                    out.push(diag(
                        ParameterOutOfRange,
                        Some(i),
                        "fork must mint a different asset",
                    ));
                }
                if e.time <= s.start || e.time > s.end {
                    out.push(diag(
                        ForkOutsideHorizon,
                        Some(i),
                        format!("fork at {} is not inside ({}, {}]", e.time, s.start, s.end),
                    ));
                }
            }
            Action::SetRateModel {
                model,
                stable_model,
                ..
            } => {
                for m in std::iter::once(model).chain(stable_model) {
                    if let Err(err) = m.validate() {
                        out.push(diag(ParameterOutOfRange, Some(i), err.to_string()));
                    }
                }
            }
            Action::PriceTick { price, .. } if price.is_zero() => {
                out.push(diag(ParameterOutOfRange, Some(i), "price must be positive"));
            }
            _ => {}
        }
    }

    if let Some(series) = prices {
        let mut needed: BTreeSet<_> = s.markets.iter().map(|m| &m.asset).collect();
        for e in &s.events {
            if let Action::Fork {
                parent_asset,
                forked_asset,
            } = &e.action
            {
                needed.insert(parent_asset);
                needed.insert(forked_asset);
            }
        }
        for asset in needed {
            let ticked = s
                .events
                .iter()
                .filter_map(|e| match &e.action {
                    Action::PriceTick { asset: a, .. } if a == asset => Some(e.time),
                    _ => None,
                })
                .min();
            let first = match (series.first_time(asset), ticked) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (a, b) => a.or(b),
            };
            match first {
                None => out.push(diag(PriceCoverage, None, format!("no prices for {asset}"))),
                Some(t) if t > s.start => out.push(diag(
                    PriceCoverage,
                    None,
                    format!(
                        "{asset} prices start at {t}, after the scenario start {}",
                        s.start
                    ),
                )),
                Some(_) => {}
            }
        }
    }
    out
}
