//! Stock-day panel: data model, CSV ingestion, cleaning rules and
//! market-level flow aggregation.

mod aggregate;
mod clean;
mod csv_io;

use std::collections::BTreeSet;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use aggregate::{aggregate_market_flows, normalize_panel, FlowMatrix, FlowSignal, StockFlow, StockFlows};
pub use clean::{clean, CleaningConfig};
pub use csv_io::{ingest_csv, write_csv, CsvSchema, Ingested, RejectedRow};

use crate::filters::FilterError;

#[derive(Debug, Error)]
pub enum PanelError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("duplicate record for ({ticker}, {date})")]
    DuplicateKey { ticker: String, date: NaiveDate },
    #[error("line {line}: {reason}")]
    UnparseableRow { line: u64, reason: String },
    #[error("invalid record for ({ticker}, {date}): {reason}")]
    InvalidRecord {
        ticker: String,
        date: NaiveDate,
        reason: String,
    },
    #[error("panel is empty")]
    EmptyPanel,
    #[error("no tickers survive cleaning")]
    EmptyAfterCleaning,
    #[error("invalid cleaning config: {0}")]
    InvalidConfig(String),
    #[error("flow normalization failed: {0}")]
    Filter(#[from] FilterError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// The three disclosed investor categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Foreign,
    #[serde(alias = "inst")]
    Institutional,
    #[serde(alias = "indiv")]
    Individual,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Foreign, Group::Institutional, Group::Individual];

    pub fn index(self) -> usize {
        match self {
            Group::Foreign => 0,
            Group::Institutional => 1,
            Group::Individual => 2,
        }
    }

    /// Short name used in CSV headers and CLI flags.
    pub fn short_name(self) -> &'static str {
        match self {
            Group::Foreign => "foreign",
            Group::Institutional => "inst",
            Group::Individual => "indiv",
        }
    }

    pub fn parse(s: &str) -> Option<Group> {
        match s.trim().to_ascii_lowercase().as_str() {
            "foreign" => Some(Group::Foreign),
            "inst" | "institutional" => Some(Group::Institutional),
            "indiv" | "individual" => Some(Group::Individual),
            _ => None,
        }
    }
}

/// One stock-day. Prices and flows are in KRW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelRecord {
    pub ticker: String,
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: u64,
    pub net_buy_foreign: f64,
    pub net_buy_inst: f64,
    pub net_buy_indiv: f64,
    pub market_cap: f64,
}

impl PanelRecord {
    /// Net buys ordered as [`Group::ALL`].
    pub fn net_buys(&self) -> [f64; 3] {
        [self.net_buy_foreign, self.net_buy_inst, self.net_buy_indiv]
    }

    pub fn net_buy(&self, group: Group) -> f64 {
        self.net_buys()[group.index()]
    }

    /// Checks the record-level invariants, returning the first violation.
    pub fn validate(&self) -> Result<(), String> {
        let prices = [self.open, self.high, self.low, self.close];
        if prices.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err("prices must be positive and finite".into());
        }
        if self.low > self.open.min(self.close) {
            return Err("low exceeds min(open, close)".into());
        }
        if self.high < self.open.max(self.close) {
            return Err("high below max(open, close)".into());
        }
        if !(self.market_cap.is_finite() && self.market_cap > 0.0) {
            return Err("market cap must be positive".into());
        }
        if self.net_buys().iter().any(|v| !v.is_finite()) {
            return Err("net buys must be finite".into());
        }
        Ok(())
    }

    /// A day on which the stock actually traded. Forward-filled records carry
    /// zero volume and do not count.
    pub fn is_traded(&self) -> bool {
        self.volume > 0
    }
}

/// An immutable, validated collection of stock-days.
///
/// Records are kept sorted by `(ticker, date)` so each ticker's history is a
/// contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    records: Vec<PanelRecord>,
    calendar: Vec<NaiveDate>,
    universe: BTreeSet<String>,
}

impl Panel {
    /// Builds a panel, rejecting invalid records and duplicate keys.
    pub fn from_records(mut records: Vec<PanelRecord>) -> Result<Self, PanelError> {
        for r in &records {
            r.validate().map_err(|reason| PanelError::InvalidRecord {
                ticker: r.ticker.clone(),
                date: r.date,
                reason,
            })?;
        }
        records.sort_by(|a, b| a.ticker.cmp(&b.ticker).then(a.date.cmp(&b.date)));
        for pair in records.windows(2) {
            if pair[0].ticker == pair[1].ticker && pair[0].date == pair[1].date {
                return Err(PanelError::DuplicateKey {
                    ticker: pair[0].ticker.clone(),
                    date: pair[0].date,
                });
            }
        }
        let calendar: BTreeSet<NaiveDate> = records.iter().map(|r| r.date).collect();
        let universe = records.iter().map(|r| r.ticker.clone()).collect();
        Ok(Self {
            records,
            calendar: calendar.into_iter().collect(),
            universe,
        })
    }

    pub fn records(&self) -> &[PanelRecord] {
        &self.records
    }

    /// Ordered unique trading dates.
    pub fn calendar(&self) -> &[NaiveDate] {
        &self.calendar
    }

    pub fn universe(&self) -> &BTreeSet<String> {
        &self.universe
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Per-ticker history slices in ticker order.
    pub fn by_ticker(&self) -> impl Iterator<Item = (&str, &[PanelRecord])> {
        TickerSlices {
            rest: &self.records,
        }
    }

    /// History of a single ticker, empty if unknown.
    pub fn ticker_history(&self, ticker: &str) -> &[PanelRecord] {
        let start = self.records.partition_point(|r| r.ticker.as_str() < ticker);
        let end = self.records.partition_point(|r| r.ticker.as_str() <= ticker);
        &self.records[start..end]
    }

    pub fn into_records(self) -> Vec<PanelRecord> {
        self.records
    }
}

struct TickerSlices<'a> {
    rest: &'a [PanelRecord],
}

impl<'a> Iterator for TickerSlices<'a> {
    type Item = (&'a str, &'a [PanelRecord]);

    fn next(&mut self) -> Option<Self::Item> {
        let first = self.rest.first()?;
        let n = self
            .rest
            .iter()
            .position(|r| r.ticker != first.ticker)
            .unwrap_or(self.rest.len());
        let (head, tail) = self.rest.split_at(n);
        self.rest = tail;
        Some((head[0].ticker.as_str(), head))
    }
}
