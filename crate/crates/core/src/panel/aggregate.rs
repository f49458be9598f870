use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{Group, Panel, PanelError};
use crate::filters::{matched_filter, winsorize, zscore_normalize, FilterError, Normalizer};

/// Normalized flows of one stock on one day, ordered as [`Group::ALL`].
#[derive(Debug, Clone, PartialEq)]
pub struct StockFlow {
    pub ticker: String,
    pub date: NaiveDate,
    pub values: [f64; 3],
}

/// Per-stock normalized flows sorted by `(ticker, date)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StockFlows {
    pub rows: Vec<StockFlow>,
}

/// Which combination of the three group flows forms a scalar stock signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FlowSignal {
    Foreign,
    Inst,
    Indiv,
    /// Equal-weighted mean of the three groups.
    #[default]
    Mean,
}

impl FlowSignal {
    pub fn apply(self, v: &[f64; 3]) -> f64 {
        match self {
            FlowSignal::Foreign => v[0],
            FlowSignal::Inst => v[1],
            FlowSignal::Indiv => v[2],
            FlowSignal::Mean => (v[0] + v[1] + v[2]) / 3.0,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mean" => Some(FlowSignal::Mean),
            other => Group::parse(other).map(|g| match g {
                Group::Foreign => FlowSignal::Foreign,
                Group::Institutional => FlowSignal::Inst,
                Group::Individual => FlowSignal::Indiv,
            }),
        }
    }
}

impl StockFlows {
    /// Scalar signal per `(ticker, date)`.
    pub fn signal(&self, which: FlowSignal) -> BTreeMap<(String, NaiveDate), f64> {
        self.rows
            .iter()
            .map(|r| ((r.ticker.clone(), r.date), which.apply(&r.values)))
            .collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), PanelError> {
        let mut w = csv::Writer::from_writer(std::io::BufWriter::new(std::fs::File::create(path)?));
        w.write_record(["ticker", "date", "foreign", "inst", "indiv"])?;
        for r in &self.rows {
            w.write_record([
                r.ticker.clone(),
                r.date.to_string(),
                r.values[0].to_string(),
                r.values[1].to_string(),
                r.values[2].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self, PanelError> {
        let mut rdr = csv::Reader::from_reader(std::fs::File::open(path)?);
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let bad = |reason: &str| PanelError::UnparseableRow {
                line,
                reason: reason.to_string(),
            };
            let get = |k: usize| rec.get(k).ok_or_else(|| bad("short row"));
            let num = |k: usize| -> Result<f64, PanelError> {
                get(k)?.parse().map_err(|_| bad("bad number"))
            };
            rows.push(StockFlow {
                ticker: get(0)?.to_string(),
                date: get(1)?.parse().map_err(|_| bad("bad date"))?,
                values: [num(2)?, num(3)?, num(4)?],
            });
        }
        rows.sort_by(|a, b| a.ticker.cmp(&b.ticker).then(a.date.cmp(&b.date)));
        Ok(Self { rows })
    }
}

/// Date-indexed T×3 matrix of market-aggregated flows.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlowMatrix {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<[f64; 3]>,
}

impl FlowMatrix {
    pub fn new(dates: Vec<NaiveDate>, values: Vec<[f64; 3]>) -> Self {
        assert_eq!(dates.len(), values.len(), "dates and rows must align");
        Self { dates, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn column(&self, group: Group) -> Vec<f64> {
        self.values.iter().map(|v| v[group.index()]).collect()
    }

    /// Rows `start..end` as a new matrix.
    pub fn slice(&self, start: usize, end: usize) -> FlowMatrix {
        FlowMatrix {
            dates: self.dates[start..end].to_vec(),
            values: self.values[start..end].to_vec(),
        }
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), PanelError> {
        self.write_to(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn write_to<W: Write>(&self, writer: W) -> Result<(), PanelError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["date", "foreign", "inst", "indiv"])?;
        for (d, v) in self.dates.iter().zip(&self.values) {
            w.write_record([d.to_string(), v[0].to_string(), v[1].to_string(), v[2].to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self, PanelError> {
        Self::read_from(std::fs::File::open(path)?)
    }

    pub fn read_from<R: Read>(reader: R) -> Result<Self, PanelError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut out = FlowMatrix::default();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let bad = || PanelError::UnparseableRow {
                line,
                reason: "expected date,foreign,inst,indiv".into(),
            };
            if rec.len() < 4 {
                return Err(bad());
            }
            let num = |k: usize| rec[k].parse::<f64>().map_err(|_| bad());
            out.dates.push(rec[0].parse().map_err(|_| bad())?);
            out.values.push([num(1)?, num(2)?, num(3)?]);
        }
        Ok(out)
    }
}

/// Normalizes each stock's group flows and optionally winsorizes every
/// (ticker, group) series with moments frozen from the unclamped series.
///
/// Only stock-days where all three groups are defined are emitted; the
/// z-score normalizer leaves the first `window` days of each ticker
/// undefined.
pub fn normalize_panel(
    panel: &Panel,
    normalizer: Normalizer,
    winsorize_sigma: Option<f64>,
) -> Result<StockFlows, PanelError> {
    let mut rows = Vec::with_capacity(panel.len());
    for (ticker, history) in panel.by_ticker() {
        let n = history.len();
        let mut cols: [Vec<Option<f64>>; 3] = Default::default();
        for g in Group::ALL {
            let raw: Vec<f64> = history.iter().map(|r| r.net_buy(g)).collect();
            let mut col: Vec<Option<f64>> = match normalizer {
                Normalizer::Raw => raw.into_iter().map(Some).collect(),
                Normalizer::MatchedFilter => history
                    .iter()
                    .map(|r| matched_filter(r.net_buy(g), r.market_cap).map(Some))
                    .collect::<Result<_, _>>()?,
                Normalizer::ZScore { window } => {
                    let mut c = vec![None; n];
                    for (i, v) in zscore_normalize(&raw, window)? {
                        c[i] = Some(v);
                    }
                    c
                }
            };
            if let Some(sigma) = winsorize_sigma {
                winsorize_defined(&mut col, sigma)?;
            }
            cols[g.index()] = col;
        }
        for (i, r) in history.iter().enumerate() {
            if let (Some(a), Some(b), Some(c)) = (cols[0][i], cols[1][i], cols[2][i]) {
                rows.push(StockFlow {
                    ticker: ticker.to_string(),
                    date: r.date,
                    values: [a, b, c],
                });
            }
        }
    }
    Ok(StockFlows { rows })
}

fn winsorize_defined(col: &mut [Option<f64>], sigma: f64) -> Result<(), PanelError> {
    let idx: Vec<usize> = (0..col.len()).filter(|&i| col[i].is_some()).collect();
    let vals: Vec<f64> = idx.iter().map(|&i| col[i].unwrap()).collect();
    match winsorize(&vals, sigma) {
        Ok(clamped) => {
            for (i, v) in idx.into_iter().zip(clamped) {
                col[i] = Some(v);
            }
            Ok(())
        }
        // A flat or one-point series has nothing to clamp.
        Err(FilterError::DegenerateSeries) | Err(FilterError::TooShort { .. }) => Ok(()),
        Err(e) => Err(e.into()),
    }
}

/// Equal-weighted cross-sectional average of normalized flows per date.
pub fn aggregate_market_flows(
    panel: &Panel,
    normalizer: Normalizer,
    winsorize_sigma: Option<f64>,
) -> Result<FlowMatrix, PanelError> {
    let flows = normalize_panel(panel, normalizer, winsorize_sigma)?;
    Ok(aggregate_stock_flows(&flows))
}

pub(crate) fn aggregate_stock_flows(flows: &StockFlows) -> FlowMatrix {
    let mut acc: BTreeMap<NaiveDate, ([f64; 3], usize)> = BTreeMap::new();
    for r in &flows.rows {
        let e = acc.entry(r.date).or_insert(([0.0; 3], 0));
        for k in 0..3 {
            e.0[k] += r.values[k];
        }
        e.1 += 1;
    }
    let mut out = FlowMatrix::default();
    for (d, (sum, n)) in acc {
        out.dates.push(d);
        out.values.push(sum.map(|s| s / n as f64));
    }
    out
}
