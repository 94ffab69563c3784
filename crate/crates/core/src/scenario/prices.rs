use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::fixed::Price;
use crate::ids::AssetId;
use crate::risk::PriceMap;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PriceError {
    #[error("price file line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("price file line {line}: timestamp {time} is earlier than the previous row")]
    UnsortedTimestamps { line: u64, time: u64 },
    #[error("price file has no rows")]
    EmptySeries,
    #[error("no {asset} price at or before {time}")]
    LookupBeforeStart { asset: AssetId, time: u64 },
    #[error("no price series for {0}")]
    UnknownAsset(AssetId),
    #[error("cannot read price file: {0}")]
    Io(String),
}

#[derive(Deserialize)]
struct Row {
    timestamp: u64,
    asset: String,
    price_usd: String,
}

/// Step-function prices per asset; a lookup returns the latest observation at or before `t`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PriceSeries {
    series: BTreeMap<AssetId, Vec<(u64, Price)>>,
}

impl PriceSeries {
    pub fn from_reader(reader: impl Read) -> Result<Self, PriceError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut out = PriceSeries::default();
        let mut last = 0u64;
        for (i, rec) in rdr.deserialize::<Row>().enumerate() {
            let line = i as u64 + 2;
            let row = rec.map_err(|e| PriceError::MalformedRow {
                line,
                reason: e.to_string(),
            })?;
            let price: Price = row
                .price_usd
                .parse()
                .map_err(|e| PriceError::MalformedRow {
                    line,
                    reason: format!("price: {e}"),
                })?;
            if price.is_zero() {
                return Err(PriceError::MalformedRow {
                    line,
                    reason: "price must be positive".into(),
                });
            }
            if row.asset.is_empty() {
                return Err(PriceError::MalformedRow {
                    line,
                    reason: "empty asset".into(),
                });
            }
            if row.timestamp < last {
                return Err(PriceError::UnsortedTimestamps {
                    line,
                    time: row.timestamp,
                });
            }
            last = row.timestamp;
            out.push(AssetId::new(row.asset), row.timestamp, price);
        }
        if out.series.is_empty() {
            return Err(PriceError::EmptySeries);
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self, PriceError> {
        let f = std::fs::File::open(path)
            .map_err(|e| PriceError::Io(format!("{}: {e}", path.display())))?;
        Self::from_reader(std::io::BufReader::new(f))
    }

    fn push(&mut self, asset: AssetId, t: u64, price: Price) {
        let s = self.series.entry(asset).or_default();
        match s.last_mut() {
            Some(last) if last.0 == t => last.1 = price,
            _ => s.push((t, price)),
        }
    }

    /// Add an observation anywhere in time; a later insert at the same timestamp wins.
    pub fn insert(&mut self, asset: AssetId, t: u64, price: Price) {
        let s = self.series.entry(asset).or_default();
        let i = s.partition_point(|(ts, _)| *ts < t);
        if i < s.len() && s[i].0 == t {
            s[i].1 = price;
        } else {
            s.insert(i, (t, price));
        }
    }

    pub fn assets(&self) -> impl Iterator<Item = &AssetId> {
        self.series.keys()
    }

    pub fn observations(&self, asset: &AssetId) -> &[(u64, Price)] {
        self.series.get(asset).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn first_time(&self, asset: &AssetId) -> Option<u64> {
        self.series.get(asset).and_then(|s| s.first()).map(|o| o.0)
    }

    pub fn price_at(&self, asset: &AssetId, t: u64) -> Result<Price, PriceError> {
        let s = self
            .series
            .get(asset)
            .ok_or_else(|| PriceError::UnknownAsset(asset.clone()))?;
        let i = s.partition_point(|(ts, _)| *ts <= t);
        if i == 0 {
            return Err(PriceError::LookupBeforeStart {
                asset: asset.clone(),
                time: t,
            });
        }
        Ok(s[i - 1].1)
    }

    /// Every asset with an observation at or before `t`.
    pub fn snapshot(&self, t: u64) -> PriceMap {
        let mut map = PriceMap::new(t);
        for asset in self.series.keys() {
            if let Ok(p) = self.price_at(asset, t) {
                map.set(asset.clone(), p);
            }
        }
        map
    }
}
