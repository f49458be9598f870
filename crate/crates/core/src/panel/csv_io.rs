use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{Panel, PanelError, PanelRecord};

/// Maps each panel field to a CSV column name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsvSchema {
    pub ticker: String,
    pub date: String,
    pub open: String,
    pub high: String,
    pub low: String,
    pub close: String,
    pub volume: String,
    pub net_buy_foreign: String,
    pub net_buy_inst: String,
    pub net_buy_indiv: String,
    pub market_cap: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            ticker: "ticker".into(),
            date: "date".into(),
            open: "open".into(),
            high: "high".into(),
            low: "low".into(),
            close: "close".into(),
            volume: "volume".into(),
            net_buy_foreign: "net_buy_foreign".into(),
            net_buy_inst: "net_buy_inst".into(),
            net_buy_indiv: "net_buy_indiv".into(),
            market_cap: "market_cap".into(),
        }
    }
}

impl CsvSchema {
    fn columns(&self) -> [&str; 11] {
        [
            &self.ticker,
            &self.date,
            &self.open,
            &self.high,
            &self.low,
            &self.close,
            &self.volume,
            &self.net_buy_foreign,
            &self.net_buy_inst,
            &self.net_buy_indiv,
            &self.market_cap,
        ]
    }
}

/// A row that parsed but violated a record invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectedRow {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub panel: Panel,
    pub rejected: Vec<RejectedRow>,
}

/// Reads a headered UTF-8 CSV into a panel.
pub fn ingest_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Ingested, PanelError> {
    let file = std::fs::File::open(path)?;
    ingest_reader(file, schema)
}

pub(crate) fn ingest_reader<R: Read>(reader: R, schema: &CsvSchema) -> Result<Ingested, PanelError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut idx = [0usize; 11];
    for (slot, name) in idx.iter_mut().zip(schema.columns()) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| PanelError::MissingColumn(name.to_string()))?;
    }

    let mut records = Vec::new();
    let mut rejected = Vec::new();
    let mut seen: HashSet<(String, NaiveDate)> = HashSet::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let field = |k: usize| row.get(idx[k]).unwrap_or("");
        let bad = |what: &str, raw: &str| PanelError::UnparseableRow {
            line,
            reason: format!("cannot parse {what} from `{raw}`"),
        };
        let num = |k: usize, what: &str| -> Result<f64, PanelError> {
            field(k).parse::<f64>().map_err(|_| bad(what, field(k)))
        };
        let ticker = field(0).to_string();
        if ticker.is_empty() {
            return Err(PanelError::UnparseableRow {
                line,
                reason: "empty ticker".into(),
            });
        }
        let date = NaiveDate::parse_from_str(field(1), "%Y-%m-%d").map_err(|_| bad("date", field(1)))?;
        let volume = match field(6).parse::<u64>() {
            Ok(v) => v,
            Err(_) => {
                // Accept integral floats such as "1200.0".
                let v = num(6, "volume")?;
                if v < 0.0 || v.fract() != 0.0 || !v.is_finite() {
                    return Err(bad("volume", field(6)));
                }
                v as u64
            }
        };
        let rec = PanelRecord {
            ticker,
            date,
            open: num(2, "open")?,
            high: num(3, "high")?,
            low: num(4, "low")?,
            close: num(5, "close")?,
            volume,
            net_buy_foreign: num(7, "net_buy_foreign")?,
            net_buy_inst: num(8, "net_buy_inst")?,
            net_buy_indiv: num(9, "net_buy_indiv")?,
            market_cap: num(10, "market_cap")?,
        };
        if !seen.insert((rec.ticker.clone(), rec.date)) {
            return Err(PanelError::DuplicateKey {
                ticker: rec.ticker,
                date: rec.date,
            });
        }
        match rec.validate() {
            Ok(()) => records.push(rec),
            Err(reason) => rejected.push(RejectedRow { line, reason }),
        }
    }
    Ok(Ingested {
        panel: Panel::from_records(records)?,
        rejected,
    })
}

/// Writes the panel with the canonical column names.
pub fn write_csv(panel: &Panel, path: impl AsRef<Path>) -> Result<(), PanelError> {
    let file = std::fs::File::create(path)?;
    write_to(panel, std::io::BufWriter::new(file))
}

pub(crate) fn write_to<W: Write>(panel: &Panel, writer: W) -> Result<(), PanelError> {
    let mut w = csv::Writer::from_writer(writer);
    let schema = CsvSchema::default();
    w.write_record(schema.columns())?;
    for r in panel.records() {
        w.write_record([
            r.ticker.clone(),
            r.date.format("%Y-%m-%d").to_string(),
            r.open.to_string(),
            r.high.to_string(),
            r.low.to_string(),
            r.close.to_string(),
            r.volume.to_string(),
            r.net_buy_foreign.to_string(),
            r.net_buy_inst.to_string(),
            r.net_buy_indiv.to_string(),
            r.market_cap.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str =
        "ticker,date,open,high,low,close,volume,net_buy_foreign,net_buy_inst,net_buy_indiv,market_cap\n";

    fn ingest(body: &str) -> Result<Ingested, PanelError> {
        let text = format!("{HEADER}{body}");
        ingest_reader(text.as_bytes(), &CsvSchema::default())
    }

    #[test]
    fn three_rows_one_ticker() {
        let got = ingest(
            "005930,2021-01-04,100,105,99,104,1000,1e9,-5e8,-5e8,6e13\n\
             005930,2021-01-05,104,106,101,102,900,2e9,-1e9,-1e9,5.9e13\n\
             005930,2021-01-06,102,103,100,101,800,0,0,0,5.8e13\n",
        )
        .unwrap();
        assert_eq!(got.panel.len(), 3);
        assert_eq!(got.panel.universe().len(), 1);
        assert_eq!(got.panel.calendar().len(), 3);
        assert!(got.rejected.is_empty());
    }

    #[test]
    fn zero_market_cap_rejected_and_counted() {
        let got = ingest(
            "A,2021-01-04,100,105,99,104,1000,0,0,0,6e13\n\
             A,2021-01-05,104,106,101,102,900,0,0,0,0\n",
        )
        .unwrap();
        assert_eq!(got.panel.len(), 1);
        assert_eq!(got.rejected.len(), 1);
        assert_eq!(got.rejected[0].line, 3);
    }

    #[test]
    fn duplicate_pair_is_error() {
        let err = ingest(
            "A,2021-01-04,100,105,99,104,1000,0,0,0,6e13\n\
             A,2021-01-04,100,105,99,104,1000,0,0,0,6e13\n",
        )
        .unwrap_err();
        assert!(matches!(err, PanelError::DuplicateKey { .. }));
    }

    #[test]
    fn missing_column_named() {
        let text = "ticker,date,open\nA,2021-01-04,1\n";
        let err = ingest_reader(text.as_bytes(), &CsvSchema::default()).unwrap_err();
        assert!(matches!(err, PanelError::MissingColumn(c) if c == "high"));
    }

    #[test]
    fn bad_number_reports_line() {
        let err = ingest("A,2021-01-04,abc,105,99,104,1000,0,0,0,6e13\n").unwrap_err();
        assert!(matches!(err, PanelError::UnparseableRow { line: 2, .. }));
        let err = ingest("A,04/01/2021,1,1,1,1,1,0,0,0,6e13\n").unwrap_err();
        assert!(matches!(err, PanelError::UnparseableRow { .. }));
    }

    #[test]
    fn custom_schema() {
        let schema = CsvSchema {
            ticker: "code".into(),
            market_cap: "mcap".into(),
            ..CsvSchema::default()
        };
        let text = "code,date,open,high,low,close,volume,net_buy_foreign,net_buy_inst,net_buy_indiv,mcap\n\
                    A,2021-01-04,100,105,99,104,1000,0,0,0,6e13\n";
        let got = ingest_reader(text.as_bytes(), &schema).unwrap();
        assert_eq!(got.panel.records()[0].market_cap, 6e13);
    }
}
