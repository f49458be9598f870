use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{Predictor, SequenceSample};
use crate::stats::{mean, pearson, sample_sd};

pub const IR_DECILE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    pub n: usize,
    pub rmse: f64,
    /// Zero when the predictions have no variance; see `degenerate`.
    pub pearson_correlation: f64,
    /// Predictions have zero variance, so correlation is undefined.
    pub degenerate: bool,
    /// A zero prediction never counts as a correct direction.
    pub hit_rate: f64,
    pub information_ratio: f64,
    pub prediction_std: f64,
    pub target_std: f64,
    pub attention_weight_profile: Option<Vec<f64>>,
}

/// Scores `model` on `samples`. Panics if `samples` is empty.
pub fn evaluate(model: &dyn Predictor, samples: &[SequenceSample]) -> PredictionReport {
    assert!(!samples.is_empty(), "evaluation needs at least one sample");
    let preds: Vec<f64> = samples.iter().map(|s| model.predict(&s.inputs)).collect();
    let real: Vec<f64> = samples.iter().map(|s| s.target).collect();
    let n = samples.len();
    let rmse = (preds.iter().zip(&real).map(|(p, r)| (p - r).powi(2)).sum::<f64>() / n as f64).sqrt();
    let corr = pearson(&preds, &real);
    let hits = preds.iter().zip(&real).filter(|(p, r)| *p * *r > 0.0).count();
    let sd = |xs: &[f64]| {
        if xs.len() < 2 || xs.iter().all(|x| *x == xs[0]) {
            0.0
        } else {
            sample_sd(xs)
        }
    };

    let mut profile: Option<Vec<f64>> = None;
    for s in samples {
        match (model.attention_profile(&s.inputs), profile.as_mut()) {
            (Some(a), Some(acc)) => acc.iter_mut().zip(&a).for_each(|(x, y)| *x += y),
            (Some(a), None) => profile = Some(a),
            (None, _) => break,
        }
    }
    if let Some(p) = profile.as_mut() {
        p.iter_mut().for_each(|v| *v /= n as f64);
    }
    let degenerate = sd(&preds) == 0.0;
    PredictionReport {
        n,
        rmse,
        pearson_correlation: if degenerate { 0.0 } else { corr.unwrap_or(0.0) },
        degenerate,
        hit_rate: hits as f64 / n as f64,
        information_ratio: long_short_information_ratio(samples, &preds),
        prediction_std: sd(&preds),
        target_std: sd(&real),
        attention_weight_profile: profile,
    }
}

/// Daily long-short spread between the top and bottom prediction deciles
/// (at least one name per leg), annualized mean over standard deviation.
/// Zero when fewer than two days qualify or the spread never varies.
pub fn long_short_information_ratio(samples: &[SequenceSample], preds: &[f64]) -> f64 {
    let mut by_date: BTreeMap<NaiveDate, Vec<(f64, &str, f64)>> = BTreeMap::new();
    for (s, &p) in samples.iter().zip(preds) {
        by_date.entry(s.date).or_default().push((p, &s.ticker, s.target));
    }
    let mut spread = Vec::new();
    for (_, mut day) in by_date {
        if day.len() < 2 {
            continue;
        }
        day.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        let leg = ((day.len() as f64 * IR_DECILE).floor() as usize).max(1);
        let long: Vec<f64> = day[..leg].iter().map(|d| d.2).collect();
        let short: Vec<f64> = day[day.len() - leg..].iter().map(|d| d.2).collect();
        spread.push(mean(&long) - mean(&short));
    }
    if spread.len() < 2 {
        return 0.0;
    }
    let sd = sample_sd(&spread);
    if !(sd > 0.0) {
        return 0.0;
    }
    mean(&spread) / sd * 252f64.sqrt()
}
