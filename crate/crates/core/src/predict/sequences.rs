use std::collections::HashMap;

use chrono::NaiveDate;

use super::{PredictError, SequenceSample};
use crate::panel::{Panel, StockFlows};

/// One sample per (ticker, day t) with `lookback` consecutive flow rows
/// ending at t and a record on the following day.
pub fn build_sequences(panel: &Panel, flows: &StockFlows, lookback: usize) -> Result<Vec<SequenceSample>, PredictError> {
    if lookback == 0 {
        return Err(PredictError::InvalidConfig("lookback must be positive".into()));
    }
    let index: HashMap<(&str, NaiveDate), &[f64; 3]> = flows
        .rows
        .iter()
        .map(|r| ((r.ticker.as_str(), r.date), &r.values))
        .collect();
    let mut out = Vec::new();
    for (ticker, hist) in panel.by_ticker() {
        let rows: Vec<Option<[f64; 3]>> = hist.iter().map(|r| index.get(&(ticker, r.date)).map(|v| **v)).collect();
        for t in lookback.saturating_sub(1)..hist.len().saturating_sub(1) {
            let window = &rows[t + 1 - lookback..=t];
            if window.iter().any(Option::is_none) {
                continue;
            }
            out.push(SequenceSample {
                ticker: ticker.to_string(),
                date: hist[t].date,
                inputs: window.iter().map(|v| v.expect("checked")).collect(),
                target: hist[t + 1].close / hist[t].close - 1.0,
            });
        }
    }
    if out.is_empty() {
        return Err(PredictError::EmptyDataset);
    }
    Ok(out)
}

/// Flattened window, oldest row first.
pub fn flatten_inputs(inputs: &[[f64; 3]]) -> Vec<f64> {
    inputs.iter().flat_map(|r| r.iter().copied()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<SequenceSample>,
    pub validation: Vec<SequenceSample>,
    pub test: Vec<SequenceSample>,
}

/// Pooled chronological split on date boundaries: the earliest
/// `train_frac` of distinct sample dates train, the next `val_frac`
/// validate, the rest test. No date straddles two parts.
pub fn chronological_split(samples: &[SequenceSample], train_frac: f64, val_frac: f64) -> Result<Split, PredictError> {
    if !(train_frac > 0.0 && val_frac > 0.0 && train_frac + val_frac < 1.0) {
        return Err(PredictError::InvalidConfig(format!(
            "split fractions must be positive and leave room for test: {train_frac}, {val_frac}"
        )));
    }
    let mut dates: Vec<NaiveDate> = samples.iter().map(|s| s.date).collect();
    dates.sort();
    dates.dedup();
    let n = dates.len();
    let n_train = ((n as f64 * train_frac).round() as usize).clamp(1, n);
    let n_val = ((n as f64 * val_frac).round() as usize).min(n - n_train);
    if n_train + n_val >= n || n_val == 0 {
        return Err(PredictError::InvalidConfig(format!("{n} distinct dates are too few to split")));
    }
    let val_start = dates[n_train];
    let test_start = dates[n_train + n_val];
    let mut sorted: Vec<&SequenceSample> = samples.iter().collect();
    sorted.sort_by(|a, b| a.date.cmp(&b.date).then_with(|| a.ticker.cmp(&b.ticker)));
    let mut split = Split {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for s in sorted {
        let part = if s.date < val_start {
            &mut split.train
        } else if s.date < test_start {
            &mut split.validation
        } else {
            &mut split.test
        };
        part.push(s.clone());
    }
    Ok(split)
}
