use std::collections::BTreeMap;

use chrono::Datelike;
use serde::{Deserialize, Serialize};

use super::{Panel, PanelError, PanelRecord};
use crate::stats::median;

/// Universe and gap-handling rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleaningConfig {
    /// Minimum traded days required in every calendar year a ticker appears.
    pub min_days_per_year: u32,
    /// Winsorization bound in standard deviations, applied to normalized
    /// flows per (ticker, group) before aggregation.
    pub winsorize_sigma: f64,
    /// Floor on a ticker's median lifetime market cap, KRW.
    pub min_market_cap: f64,
    pub forward_fill: bool,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        Self {
            min_days_per_year: 20,
            winsorize_sigma: 5.0,
            min_market_cap: 50e9,
            forward_fill: true,
        }
    }
}

impl CleaningConfig {
    pub fn validate(&self) -> Result<(), PanelError> {
        if self.min_days_per_year == 0 {
            return Err(PanelError::InvalidConfig("min_days_per_year must be positive".into()));
        }
        if !(self.winsorize_sigma > 0.0 && self.winsorize_sigma.is_finite()) {
            return Err(PanelError::InvalidConfig("winsorize_sigma must be positive".into()));
        }
        if !(self.min_market_cap > 0.0 && self.min_market_cap.is_finite()) {
            return Err(PanelError::InvalidConfig("min_market_cap must be positive".into()));
        }
        Ok(())
    }
}

/// Applies the universe filters and forward-fills interior gaps.
///
/// Both filters look only at traded days (`volume > 0`), so records inserted
/// by the forward fill never change a later decision and the operation is
/// idempotent. Filled records copy the previous day's prices and market cap
/// with zero volume and zero net buys.
pub fn clean(panel: &Panel, cfg: &CleaningConfig) -> Result<Panel, PanelError> {
    cfg.validate()?;
    if panel.is_empty() {
        return Err(PanelError::EmptyPanel);
    }
    let calendar = panel.calendar();
    let mut out: Vec<PanelRecord> = Vec::with_capacity(panel.len());
    for (_, history) in panel.by_ticker() {
        if !passes_year_rule(history, cfg.min_days_per_year) || !passes_cap_rule(history, cfg.min_market_cap) {
            continue;
        }
        if cfg.forward_fill {
            forward_fill(history, calendar, &mut out);
        } else {
            out.extend_from_slice(history);
        }
    }
    if out.is_empty() {
        return Err(PanelError::EmptyAfterCleaning);
    }
    Panel::from_records(out)
}

fn passes_year_rule(history: &[PanelRecord], min_days: u32) -> bool {
    let mut per_year: BTreeMap<i32, u32> = BTreeMap::new();
    for r in history {
        let count = per_year.entry(r.date.year()).or_insert(0);
        if r.is_traded() {
            *count += 1;
        }
    }
    per_year.values().all(|&n| n >= min_days)
}

fn passes_cap_rule(history: &[PanelRecord], floor: f64) -> bool {
    let caps: Vec<f64> = history.iter().filter(|r| r.is_traded()).map(|r| r.market_cap).collect();
    !caps.is_empty() && median(&caps) >= floor
}

fn forward_fill(history: &[PanelRecord], calendar: &[chrono::NaiveDate], out: &mut Vec<PanelRecord>) {
    let first = history[0].date;
    let last = history[history.len() - 1].date;
    let start = calendar.partition_point(|d| *d < first);
    let mut next = history.iter().peekable();
    let mut prev: Option<&PanelRecord> = None;
    for &day in calendar[start..].iter().take_while(|d| **d <= last) {
        match next.peek() {
            Some(r) if r.date == day => {
                out.push((*r).clone());
                prev = next.next();
            }
            _ => {
                let p = prev.expect("first calendar day of the span is the ticker's first record");
                let mut filled = p.clone();
                filled.date = day;
                filled.volume = 0;
                filled.net_buy_foreign = 0.0;
                filled.net_buy_inst = 0.0;
                filled.net_buy_indiv = 0.0;
                out.push(filled);
            }
        }
    }
}
