use std::collections::HashMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{ComponentSeries, IcaError};
use crate::panel::PanelError;
use crate::stats::pearson;

pub const MIN_OVERLAP: usize = 30;

/// A named exogenous series (exchange rate, volatility index, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct NamedSeries {
    pub name: String,
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

impl NamedSeries {
    /// Reads a factor CSV: `date` plus one column per factor. Empty cells are
    /// treated as missing.
    pub fn read_factor_csv(path: impl AsRef<Path>) -> Result<Vec<NamedSeries>, PanelError> {
        let mut rdr = csv::Reader::from_reader(std::fs::File::open(path)?);
        let headers = rdr.headers()?.clone();
        if headers.get(0) != Some("date") {
            return Err(PanelError::MissingColumn("date".into()));
        }
        let mut out: Vec<NamedSeries> = headers
            .iter()
            .skip(1)
            .map(|h| NamedSeries {
                name: h.to_string(),
                dates: Vec::new(),
                values: Vec::new(),
            })
            .collect();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let date: NaiveDate = rec[0].parse().map_err(|_| PanelError::UnparseableRow {
                line,
                reason: format!("bad date `{}`", &rec[0]),
            })?;
            for (k, s) in out.iter_mut().enumerate() {
                let cell = rec.get(k + 1).unwrap_or("").trim();
                if cell.is_empty() {
                    continue;
                }
                let v: f64 = cell.parse().map_err(|_| PanelError::UnparseableRow {
                    line,
                    reason: format!("bad value `{cell}` for {}", s.name),
                })?;
                s.dates.push(date);
                s.values.push(v);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorCorrelation {
    pub component: usize,
    pub factor: String,
    pub r: f64,
    pub p_value: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorCorrelationTable {
    pub rows: Vec<FactorCorrelation>,
    /// Factor with the largest |r| for each component.
    pub top_factor: [Option<String>; 3],
}

impl FactorCorrelationTable {
    pub fn get(&self, component: usize, factor: &str) -> Option<&FactorCorrelation> {
        self.rows.iter().find(|r| r.component == component && r.factor == factor)
    }
}

/// Two-sided p-value of a Pearson r via `t = r·sqrt((n−2)/(1−r²))`.
pub fn correlation_p_value(r: f64, n: usize) -> f64 {
    if n < 3 {
        return 1.0;
    }
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
}

/// Correlates every component with every factor on the dates they share.
pub fn interpret(components: &ComponentSeries, factors: &[NamedSeries]) -> Result<FactorCorrelationTable, IcaError> {
    let index: HashMap<NaiveDate, usize> = components.dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();
    let mut rows = Vec::new();
    let mut top: [Option<(f64, String)>; 3] = Default::default();
    for f in factors {
        let pairs: Vec<(usize, f64)> = f
            .dates
            .iter()
            .zip(&f.values)
            .filter_map(|(d, v)| index.get(d).map(|&i| (i, *v)))
            .collect();
        if pairs.len() < MIN_OVERLAP {
            return Err(IcaError::InsufficientOverlap {
                factor: f.name.clone(),
                got: pairs.len(),
                min: MIN_OVERLAP,
            });
        }
        let fv: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        for k in 0..3 {
            let cv: Vec<f64> = pairs.iter().map(|p| components.values[p.0][k]).collect();
            let r = pearson(&cv, &fv).unwrap_or(0.0);
            let p_value = correlation_p_value(r, pairs.len());
            if top[k].as_ref().is_none_or(|(best, _)| r.abs() > *best) {
                top[k] = Some((r.abs(), f.name.clone()));
            }
            rows.push(FactorCorrelation {
                component: k,
                factor: f.name.clone(),
                r,
                p_value,
                n: pairs.len(),
            });
        }
    }
    rows.sort_by_key(|r| r.component);
    Ok(FactorCorrelationTable {
        rows,
        top_factor: top.map(|t| t.map(|(_, n)| n)),
    })
}
