//! Clustering evaluation: NMI and accuracy.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Ground truth and predictions of equal, non-zero length.
#[derive(Debug, Clone, Copy)]
pub struct LabelPair<'a> {
    truth: &'a [usize],
    predicted: &'a [usize],
}

impl<'a> LabelPair<'a> {
    pub fn new(truth: &'a [usize], predicted: &'a [usize]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::dim("label pair", truth.len(), predicted.len()));
        }
        if truth.is_empty() {
            return Err(Error::Data("cannot score an empty labeling".into()));
        }
        Ok(LabelPair { truth, predicted })
    }

    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }
}

/// `table[i][j]` counts samples with true label `i` and prediction `j`.
pub fn contingency(pair: LabelPair<'_>) -> Vec<Vec<u64>> {
    let rows = pair.truth.iter().max().map_or(0, |m| m + 1);
    let cols = pair.predicted.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; cols]; rows];
    for (&t, &p) in pair.truth.iter().zip(pair.predicted) {
        table[t][p] += 1;
    }
    table
}

fn entropy(counts: impl Iterator<Item = u64>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * libm::log(p)
        })
        .sum()
}

/// `I(c; c') / max(H(c), H(c'))` with natural logarithms. Two constant
/// labelings score 1.
pub fn nmi(pair: LabelPair<'_>) -> f64 {
    let table = contingency(pair);
    let n = pair.len() as f64;
    let row_sums: Vec<u64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols = table.first().map_or(0, Vec::len);
    let col_sums: Vec<u64> = (0..cols).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let h_true = entropy(row_sums.iter().copied(), n);
    let h_pred = entropy(col_sums.iter().copied(), n);
    let denom = h_true.max(h_pred);
    if denom == 0.0 {
        return 1.0;
    }
    let mut mi = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / n * libm::log(n * c / (row_sums[i] as f64 * col_sums[j] as f64));
            }
        }
    }
    (mi / denom).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccuracyMode {
    /// Prediction must equal the true label.
    Direct,
    /// Best one-to-one relabeling of predicted clusters first.
    Matched,
}

/// Percentage of correctly labeled samples.
pub fn accuracy(pair: LabelPair<'_>, mode: AccuracyMode) -> f64 {
    let correct = match mode {
        AccuracyMode::Direct => pair.truth.iter().zip(pair.predicted).filter(|(t, p)| t == p).count() as u64,
        AccuracyMode::Matched => {
            let table = contingency(pair);
            let size = table.len().max(table.first().map_or(0, Vec::len));
            // maximize matched counts == minimize negated counts on a padded square
            let cost: Vec<Vec<i64>> = (0..size)
                .map(|i| {
                    (0..size)
                        .map(|j| -(table.get(i).and_then(|r| r.get(j)).copied().unwrap_or(0) as i64))
                        .collect()
                })
                .collect();
            let assignment = min_cost_assignment(&cost);
            assignment
                .iter()
                .enumerate()
                .map(|(i, &j)| table.get(i).and_then(|r| r.get(j)).copied().unwrap_or(0))
                .sum()
        }
    };
    100.0 * correct as f64 / pair.len() as f64
}

/// Hungarian algorithm with potentials on a square cost matrix; returns the
/// column assigned to each row.
pub fn min_cost_assignment(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // 1-based arrays; column 0 is a virtual start.
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut matched_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0;
        let mut min_v = vec![i64::MAX; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = i64::MAX;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < min_v[j] {
                        min_v[j] = cur;
                        way[j] = j0;
                    }
                    if min_v[j] < delta {
                        delta = min_v[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_v[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut result = vec![0; n];
    for j in 1..=n {
        if matched_row[j] > 0 {
            result[matched_row[j] - 1] = j - 1;
        }
    }
    result
}

/// NMI and both accuracies for one labeling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub nmi: f64,
    pub acc_direct: f64,
    pub acc_matched: f64,
    pub n: usize,
}

pub fn score(truth: &[usize], predicted: &[usize]) -> Result<Scores> {
    let pair = LabelPair::new(truth, predicted)?;
    Ok(Scores {
        nmi: nmi(pair),
        acc_direct: accuracy(pair, AccuracyMode::Direct),
        acc_matched: accuracy(pair, AccuracyMode::Matched),
        n: pair.len(),
    })
}
