use std::collections::{BTreeMap, HashMap};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{metrics, BacktestError, Metrics, StrategyConfig, StrategyKind};
use crate::ica::IcaResult;
use crate::panel::{FlowMatrix, Panel};
use crate::stats::mean;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyRecord {
    /// Day over which the position was held; the return is realized at its close.
    pub date: NaiveDate,
    pub gross: f64,
    pub turnover: f64,
    pub cost: f64,
    pub net: f64,
    /// Names per leg (momentum) or market position in {−1, 0, 1} (timing).
    pub n_long: usize,
    pub n_short: usize,
    pub position: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedDate {
    pub date: NaiveDate,
    /// Names with both a signal and a return on this date.
    pub available: usize,
}

/// Target weights held over one day.
#[derive(Debug, Clone, PartialEq)]
pub struct Book {
    pub date: NaiveDate,
    pub weights: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub strategy: StrategyKind,
    pub config: StrategyConfig,
    pub daily: Vec<DailyRecord>,
    /// `None` with fewer than two traded days.
    pub metrics: Option<Metrics>,
    /// Mean one-sided turnover per traded day.
    pub mean_turnover: f64,
    pub skipped: Vec<SkippedDate>,
    #[serde(skip)]
    pub books: Vec<Book>,
}

impl BacktestReport {
    pub fn net_returns(&self) -> Vec<f64> {
        self.daily.iter().map(|d| d.net).collect()
    }

    pub fn gross_returns(&self) -> Vec<f64> {
        self.daily.iter().map(|d| d.gross).collect()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.daily.iter().map(|d| d.date).collect()
    }

    /// Writes the daily ledger as CSV.
    pub fn write_daily_csv<W: std::io::Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["date", "gross", "turnover", "cost", "net", "n_long", "n_short", "position"])?;
        for d in &self.daily {
            w.write_record([
                d.date.to_string(),
                d.gross.to_string(),
                d.turnover.to_string(),
                d.cost.to_string(),
                d.net.to_string(),
                d.n_long.to_string(),
                d.n_short.to_string(),
                d.position.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Close-to-close returns realized on each calendar date, for tickers with
/// records on that date and the previous calendar date.
pub fn stock_returns(panel: &Panel) -> Vec<Vec<(String, f64)>> {
    let cal = panel.calendar();
    let index: HashMap<NaiveDate, usize> = cal.iter().enumerate().map(|(i, d)| (*d, i)).collect();
    let mut out = vec![Vec::new(); cal.len()];
    for (ticker, hist) in panel.by_ticker() {
        for w in hist.windows(2) {
            let (a, b) = (index[&w[0].date], index[&w[1].date]);
            if b == a + 1 {
                out[b].push((ticker.to_string(), w[1].close / w[0].close - 1.0));
            }
        }
    }
    out
}

/// Equal-weighted mean return per calendar date, `None` where no stock has a return.
pub fn market_returns(panel: &Panel) -> Vec<Option<f64>> {
    stock_returns(panel)
        .into_iter()
        .map(|day| (!day.is_empty()).then(|| mean(&day.iter().map(|x| x.1).collect::<Vec<_>>())))
        .collect()
}

fn finish(
    kind: StrategyKind,
    cfg: &StrategyConfig,
    daily: Vec<DailyRecord>,
    skipped: Vec<SkippedDate>,
    books: Vec<Book>,
) -> Result<BacktestReport, BacktestError> {
    if daily.is_empty() {
        return Err(BacktestError::TooFewStocks {
            skipped: skipped.len(),
        });
    }
    let net: Vec<f64> = daily.iter().map(|d| d.net).collect();
    let m = match metrics(&net) {
        Ok(m) => Some(m),
        Err(BacktestError::ZeroVolatility(m)) => Some(*m),
        Err(_) => None,
    };
    Ok(BacktestReport {
        strategy: kind,
        config: *cfg,
        mean_turnover: mean(&daily.iter().map(|d| d.turnover).collect::<Vec<_>>()),
        daily,
        metrics: m,
        skipped,
        books,
    })
}

/// Daily decile long-short on a per-stock signal keyed by (ticker, date).
///
/// The book held over date d ranks stocks by their signal at d − lag
/// (descending, ties by ticker), goes long the first ⌊n·decile⌋ and short
/// the last as many, equal-weighted at ±1/leg. Dates where the leg would be
/// empty are skipped. Turnover is measured against the previous traded book.
pub fn run_momentum(
    panel: &Panel,
    signal: &BTreeMap<(String, NaiveDate), f64>,
    cfg: &StrategyConfig,
) -> Result<BacktestReport, BacktestError> {
    cfg.validate()?;
    let cal = panel.calendar();
    let rets = stock_returns(panel);
    let mut daily = Vec::new();
    let mut skipped = Vec::new();
    let mut books: Vec<Book> = Vec::new();
    let empty = BTreeMap::new();
    for d in cfg.signal_lag..cal.len() {
        let sig_date = cal[d - cfg.signal_lag];
        let mut cands: Vec<(f64, &str, f64)> = rets[d]
            .iter()
            .filter_map(|(t, r)| {
                signal
                    .get(&(t.clone(), sig_date))
                    .filter(|s| s.is_finite())
                    .map(|s| (*s, t.as_str(), *r))
            })
            .collect();
        let n = cands.len();
        let leg = (n as f64 * cfg.decile).floor() as usize;
        if leg == 0 {
            skipped.push(SkippedDate {
                date: cal[d],
                available: n,
            });
            continue;
        }
        cands.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        let long = &cands[..leg];
        let short = &cands[n - leg..];
        let gross = leg_mean(long) - leg_mean(short);
        let w = 1.0 / leg as f64;
        let mut weights = BTreeMap::new();
        for c in long {
            weights.insert(c.1.to_string(), w);
        }
        for c in short {
            weights.insert(c.1.to_string(), -w);
        }
        let prev = books.last().map_or(&empty, |b| &b.weights);
        let turnover = 0.5 * weight_change(prev, &weights);
        let cost = cfg.cost_roundtrip * turnover;
        daily.push(DailyRecord {
            date: cal[d],
            gross,
            turnover,
            cost,
            net: gross - cost,
            n_long: leg,
            n_short: leg,
            position: 0.0,
        });
        books.push(Book { date: cal[d], weights });
    }
    finish(StrategyKind::Momentum, cfg, daily, skipped, books)
}

/// Mean return of a leg, summed in ticker order so the result does not
/// depend on how the leg was ranked.
fn leg_mean(leg: &[(f64, &str, f64)]) -> f64 {
    let mut by_ticker: Vec<(&str, f64)> = leg.iter().map(|c| (c.1, c.2)).collect();
    by_ticker.sort_by(|a, b| a.0.cmp(b.0));
    mean(&by_ticker.iter().map(|c| c.1).collect::<Vec<_>>())
}

fn weight_change(prev: &BTreeMap<String, f64>, next: &BTreeMap<String, f64>) -> f64 {
    let mut total = 0.0;
    for (t, w) in next {
        total += (w - prev.get(t).copied().unwrap_or(0.0)).abs();
    }
    for (t, w) in prev {
        if !next.contains_key(t) {
            total += w.abs();
        }
    }
    total
}

/// Market timing: hold sign(signal at d − lag) units of the equal-weighted
/// market over date d. Turnover is half the change in position.
pub fn run_timing(
    panel: &Panel,
    signal: &BTreeMap<NaiveDate, f64>,
    cfg: &StrategyConfig,
) -> Result<BacktestReport, BacktestError> {
    cfg.validate()?;
    let cal = panel.calendar();
    let market = market_returns(panel);
    let breadth: Vec<usize> = stock_returns(panel).iter().map(Vec::len).collect();
    let mut daily = Vec::new();
    let mut skipped = Vec::new();
    let mut prev = 0.0;
    for d in cfg.signal_lag..cal.len() {
        let (Some(s), Some(m)) = (signal.get(&cal[d - cfg.signal_lag]).filter(|s| s.is_finite()), market[d]) else {
            skipped.push(SkippedDate {
                date: cal[d],
                available: breadth[d],
            });
            continue;
        };
        let p = if *s > 0.0 {
            1.0
        } else if *s < 0.0 {
            -1.0
        } else {
            0.0
        };
        let turnover = 0.5 * f64::abs(p - prev);
        let gross = p * m;
        let cost = cfg.cost_roundtrip * turnover;
        daily.push(DailyRecord {
            date: cal[d],
            gross,
            turnover,
            cost,
            net: gross - cost,
            n_long: if p > 0.0 { breadth[d] } else { 0 },
            n_short: if p < 0.0 { breadth[d] } else { 0 },
            position: p,
        });
        prev = p;
    }
    finish(StrategyKind::IcaFactor, cfg, daily, skipped, Vec::new())
}

/// [`run_timing`] on the first independent component, whose rows are
/// aligned with `flows.dates`.
pub fn run_ica_factor(
    panel: &Panel,
    flows: &FlowMatrix,
    ica: &IcaResult,
    cfg: &StrategyConfig,
) -> Result<BacktestReport, BacktestError> {
    if ica.components.len() != flows.dates.len() {
        return Err(BacktestError::SignalMismatch {
            want: flows.dates.len(),
            got: ica.components.len(),
        });
    }
    let signal: BTreeMap<NaiveDate, f64> = flows.dates.iter().zip(&ica.components).map(|(d, c)| (*d, c[0])).collect();
    run_timing(panel, &signal, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::PanelRecord;
    use crate::synth::business_days;

    fn panel_from_closes(closes: &[Vec<f64>]) -> Panel {
        let cal = business_days("2023-01-02".parse().unwrap(), closes[0].len());
        let mut recs = Vec::new();
        for (k, series) in closes.iter().enumerate() {
            for (d, c) in cal.iter().zip(series) {
                recs.push(PanelRecord {
                    ticker: format!("S{k:02}"),
                    date: *d,
                    open: *c,
                    high: *c,
                    low: *c,
                    close: *c,
                    volume: 100,
                    net_buy_foreign: 0.0,
                    net_buy_inst: 0.0,
                    net_buy_indiv: 0.0,
                    market_cap: 1e12,
                });
            }
        }
        Panel::from_records(recs).unwrap()
    }

    #[test]
    fn oracle_signal_single_date() {
        let rets: Vec<f64> = (0..10).map(|k| 0.01 * (k as f64 - 4.5)).collect();
        let closes: Vec<Vec<f64>> = rets.iter().map(|r| vec![100.0, 100.0 * (1.0 + r)]).collect();
        let p = panel_from_closes(&closes);
        let d0 = p.calendar()[0];
        let sig: BTreeMap<_, _> = rets.iter().enumerate().map(|(k, r)| ((format!("S{k:02}"), d0), *r)).collect();
        let rep = run_momentum(&p, &sig, &StrategyConfig::default()).unwrap();
        assert_eq!(rep.daily.len(), 1);
        let max = rets.iter().cloned().fold(f64::MIN, f64::max);
        let min = rets.iter().cloned().fold(f64::MAX, f64::min);
        assert!((rep.daily[0].gross - (max - min)).abs() < 1e-12);
        assert_eq!(rep.daily[0].turnover, 1.0);
        assert!(rep.metrics.is_none());
    }

    #[test]
    fn tied_signal_with_equal_returns_is_flat() {
        let closes: Vec<Vec<f64>> = (0..10).map(|_| vec![100.0, 101.0, 99.0]).collect();
        let p = panel_from_closes(&closes);
        let sig: BTreeMap<_, _> = p.records().iter().map(|r| ((r.ticker.clone(), r.date), 0.0)).collect();
        let rep = run_momentum(&p, &sig, &StrategyConfig::default()).unwrap();
        assert!(rep.daily.iter().all(|d| d.gross == 0.0));
        assert_eq!(rep.books[0].weights["S00"], 1.0);
        assert_eq!(rep.books[0].weights["S09"], -1.0);
    }

    #[test]
    fn thin_cross_section_is_skipped() {
        let closes: Vec<Vec<f64>> = (0..9).map(|k| vec![100.0, 100.0 + k as f64]).collect();
        let p = panel_from_closes(&closes);
        let sig: BTreeMap<_, _> = p.records().iter().map(|r| ((r.ticker.clone(), r.date), 1.0)).collect();
        match run_momentum(&p, &sig, &StrategyConfig::default()) {
            Err(BacktestError::TooFewStocks { skipped }) => assert_eq!(skipped, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn constant_positive_timing_is_buy_and_hold_less_entry() {
        let closes = vec![vec![100.0, 101.0, 103.0, 102.0], vec![50.0, 49.0, 50.0, 52.0]];
        let p = panel_from_closes(&closes);
        let sig: BTreeMap<_, _> = p.calendar().iter().map(|d| (*d, 2.5)).collect();
        let rep = run_timing(&p, &sig, &StrategyConfig::default()).unwrap();
        let mkt = market_returns(&p);
        assert_eq!(rep.daily.len(), 3);
        for (i, d) in rep.daily.iter().enumerate() {
            let entry = if i == 0 { 0.0005 } else { 0.0 };
            assert_eq!(d.net, mkt[i + 1].unwrap() - entry);
        }
    }

    #[test]
    fn oracle_timing_hits_every_day() {
        let closes = vec![vec![100.0, 102.0, 99.0, 101.0, 98.0, 100.0]];
        let p = panel_from_closes(&closes);
        let cal = p.calendar().to_vec();
        let mkt = market_returns(&p);
        let sig: BTreeMap<_, _> = (0..cal.len() - 1).map(|i| (cal[i], mkt[i + 1].unwrap().signum())).collect();
        let rep = run_timing(&p, &sig, &StrategyConfig::default()).unwrap();
        assert_eq!(rep.metrics.unwrap().hit_rate, 1.0);
    }
}
