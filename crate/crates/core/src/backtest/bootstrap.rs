use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::BacktestError;
use crate::stats::percentile_sorted;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapOptions {
    pub block_length: usize,
    pub replications: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        BootstrapOptions {
            block_length: 21,
            replications: 1000,
            level: 0.95,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCI {
    pub statistic: String,
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub block_length: usize,
    pub replications: usize,
    pub seed: u64,
}

/// Circular block bootstrap percentile interval for `statistic`.
///
/// Each replication concatenates ⌈T/L⌉ blocks of length L starting at
/// uniform positions (wrapping past the end) and truncates to T. Replication
/// `i` draws from stream `i` of a generator seeded with `opts.seed`, so
/// results do not depend on evaluation order. Replications whose statistic
/// is not finite are dropped.
pub fn block_bootstrap_ci<T: Clone>(
    name: &str,
    series: &[T],
    statistic: impl Fn(&[T]) -> f64,
    opts: &BootstrapOptions,
) -> Result<BootstrapCI, BacktestError> {
    let t = series.len();
    let l = opts.block_length;
    if l == 0 || opts.replications == 0 || !(opts.level > 0.0 && opts.level < 1.0) {
        return Err(BacktestError::InvalidConfig(format!("bootstrap options {opts:?}")));
    }
    if t < 2 * l {
        return Err(BacktestError::SeriesTooShort { len: t, block: l });
    }
    let blocks = t.div_ceil(l);
    let mut stats = Vec::with_capacity(opts.replications);
    let mut sample: Vec<T> = Vec::with_capacity(blocks * l);
    for rep in 0..opts.replications {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(rep as u64);
        sample.clear();
        for _ in 0..blocks {
            let start = rng.random_range(0..t);
            sample.extend((0..l).map(|j| series[(start + j) % t].clone()));
        }
        sample.truncate(t);
        let s = statistic(&sample);
        if s.is_finite() {
            stats.push(s);
        }
    }
    if stats.is_empty() {
        return Err(BacktestError::InvalidConfig(format!("statistic {name} was never finite")));
    }
    stats.sort_by(f64::total_cmp);
    let tail = (1.0 - opts.level) / 2.0;
    Ok(BootstrapCI {
        statistic: name.to_string(),
        point: statistic(series),
        lower: percentile_sorted(&stats, tail),
        upper: percentile_sorted(&stats, 1.0 - tail),
        level: opts.level,
        block_length: l,
        replications: opts.replications,
        seed: opts.seed,
    })
}
