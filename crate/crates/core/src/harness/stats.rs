//! Rank correlation and multi-seed aggregation.

use crate::error::{Error, Result};
use crate::harness::RunResult;

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// Spearman rank correlation over the entries finite in both inputs.
/// A constant input has no rank order and yields 0.
pub fn spearman(xs: &[Option<f64>], ys: &[Option<f64>]) -> Result<f64> {
    let (a, b): (Vec<f64>, Vec<f64>) = xs
        .iter()
        .zip(ys)
        .filter_map(|(x, y)| match (x, y) {
            (Some(x), Some(y)) if x.is_finite() && y.is_finite() => Some((*x, *y)),
            _ => None,
        })
        .unzip();
    if a.len() < 3 {
        return Err(Error::TooFewPoints(a.len()));
    }
    Ok(pearson(&average_ranks(&a), &average_ranks(&b)).clamp(-1.0, 1.0))
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSummary {
    pub mean: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub success_rate: f64,
    pub eval_mean: Option<f64>,
}

impl EpisodeSummary {
    pub fn iqr(&self) -> f64 {
        self.q75 - self.q25
    }
}

/// Per-episode statistics across runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub n_runs: usize,
    pub episodes: Vec<EpisodeSummary>,
}

/// Summarizes runs episode by episode, up to the shortest run.
pub fn aggregate(results: &[RunResult]) -> Summary {
    let len = results
        .iter()
        .map(|r| r.episodic_returns.len())
        .min()
        .unwrap_or(0);
    let episodes = (0..len)
        .map(|e| {
            let mut rets: Vec<f64> = results.iter().map(|r| r.episodic_returns[e]).collect();
            rets.sort_by(f64::total_cmp);
            let n = rets.len() as f64;
            let evals: Vec<f64> = results.iter().filter_map(|r| r.eval_returns[e]).collect();
            EpisodeSummary {
                mean: rets.iter().sum::<f64>() / n,
                median: quantile(&rets, 0.5),
                q25: quantile(&rets, 0.25),
                q75: quantile(&rets, 0.75),
                success_rate: results.iter().filter(|r| r.reached_goal[e]).count() as f64 / n,
                eval_mean: (!evals.is_empty())
                    .then(|| evals.iter().sum::<f64>() / evals.len() as f64),
            }
        })
        .collect();
    Summary {
        n_runs: results.len(),
        episodes,
    }
}
