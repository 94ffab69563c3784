use std::collections::BTreeMap;

use forksim_core::fixed::Ray;
use forksim_core::rates::{RateModel, Utilization};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BadModelSpec {
    #[error("unknown model {0:?} (expected aave, aave-stable, compound-linear or compound-jump)")]
    UnknownModel(String),
    #[error("malformed parameter {0:?} (expected key=value)")]
    Malformed(String),
    #[error("parameter {key} does not apply to {model}")]
    UnknownParam { model: String, key: String },
    #[error("bad value for {key}: {reason}")]
    BadValue { key: String, reason: String },
    #[error("{0}")]
    Invalid(String),
    #[error("bad grid point {0:?} (utilization must lie in [0, 1])")]
    BadGrid(String),
}

/// Build a rate model from a preset name plus optional `key=value` overrides.
pub fn parse_model(name: &str, params: Option<&str>) -> Result<RateModel, BadModelSpec> {
    let mut model = match name {
        "aave" | "aave-variable" => RateModel::aave_eth_variable(),
        "aave-stable" => RateModel::aave_eth_stable(),
        "compound-linear" => RateModel::compound_eth_linear(),
        "compound-jump" => RateModel::compound_eth_jump(),
        other => return Err(BadModelSpec::UnknownModel(other.to_string())),
    };
    let mut overrides = BTreeMap::new();
    for item in params
        .unwrap_or("")
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
    {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| BadModelSpec::Malformed(item.to_string()))?;
        let value: Ray = v
            .trim()
            .parse()
            .map_err(
                |e: forksim_core::fixed::ParseFixedError| BadModelSpec::BadValue {
                    key: k.trim().to_string(),
                    reason: e.to_string(),
                },
            )?;
        overrides.insert(k.trim().to_string(), value);
    }
    for (key, value) in overrides {
        let slot = match (&mut model, key.as_str()) {
            (RateModel::AaveKinked { r0, .. }, "r0")
            | (RateModel::CompoundLinear { r0, .. }, "r0")
            | (RateModel::CompoundJump { r0, .. }, "r0") => r0,
            (RateModel::AaveKinked { slope1, .. }, "slope1")
            | (RateModel::CompoundJump { slope1, .. }, "slope1") => slope1,
            (RateModel::AaveKinked { slope2, .. }, "slope2")
            | (RateModel::CompoundJump { slope2, .. }, "slope2") => slope2,
            (RateModel::AaveKinked { u_optimal, .. }, "u_optimal") => u_optimal,
            (RateModel::CompoundJump { kink, .. }, "kink") => kink,
            (RateModel::CompoundLinear { slope, .. }, "slope") => slope,
            _ => {
                return Err(BadModelSpec::UnknownParam {
                    model: name.to_string(),
                    key,
                })
            }
        };
        *slot = value;
    }
    model
        .validate()
        .map_err(|e| BadModelSpec::Invalid(e.to_string()))?;
    Ok(model)
}

/// Comma-separated utilizations. An empty string is an empty grid.
pub fn parse_grid(grid: &str) -> Result<Vec<Utilization>, BadModelSpec> {
    grid.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<Ray>()
                .ok()
                .and_then(|r| Utilization::new(r).ok())
                .ok_or_else(|| BadModelSpec::BadGrid(s.to_string()))
        })
        .collect()
}

/// `steps + 1` evenly spaced points over [0, 1].
pub fn uniform_grid(steps: u32) -> Vec<Utilization> {
    (0..=steps)
        .map(|i| {
            Utilization::new(Ray::ratio(i as u128, steps.max(1) as u128)).expect("within [0, 1]")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_and_overrides() {
        assert_eq!(
            parse_model("aave", None).unwrap(),
            RateModel::aave_eth_variable()
        );
        let m = parse_model("compound-linear", Some("r0=0.01, slope=0.2")).unwrap();
        assert_eq!(
            m,
            RateModel::CompoundLinear {
                r0: Ray::ratio(1, 100),
                slope: Ray::ratio(2, 10)
            }
        );
        assert!(matches!(
            parse_model("x", None),
            Err(BadModelSpec::UnknownModel(_))
        ));
        assert!(matches!(
            parse_model("aave", Some("kink=0.5")),
            Err(BadModelSpec::UnknownParam { .. })
        ));
        assert!(matches!(
            parse_model("aave", Some("r0")),
            Err(BadModelSpec::Malformed(_))
        ));
        assert!(matches!(
            parse_model("aave", Some("u_optimal=1")),
            Err(BadModelSpec::Invalid(_))
        ));
    }

    #[test]
    fn grids() {
        assert!(parse_grid("").unwrap().is_empty());
        assert_eq!(parse_grid("0, 0.7,1").unwrap().len(), 3);
        assert!(parse_grid("1.5").is_err());
        assert_eq!(uniform_grid(4).len(), 5);
    }
}
