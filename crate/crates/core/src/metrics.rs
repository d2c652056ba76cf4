//! Model-quality metrics: regression/classification training error and the
//! clustering scores (Calinski-Harabasz, adjusted Rand index).

use thiserror::Error;

/// A regression prediction counts as wrong when it misses the target by more
/// than this margin.
pub const REGRESSION_ERROR_MARGIN: f64 = 0.5;
/// Probability threshold for binary classification.
pub const CLASSIFICATION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("degenerate clustering: {0}")]
    DegenerateClustering(String),
}

fn check_lengths(left: usize, right: usize) -> Result<(), MetricsError> {
    if left == right && left > 0 {
        Ok(())
    } else {
        Err(MetricsError::LengthMismatch { left, right })
    }
}

/// Fraction of predictions missing the target by more than the margin.
pub fn training_error_rate(predictions: &[f64], targets: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(predictions.len(), targets.len())?;
    let wrong = predictions
        .iter()
        .zip(targets)
        .filter(|(p, t)| (*p - *t).abs() > REGRESSION_ERROR_MARGIN)
        .count();
    Ok(wrong as f64 / predictions.len() as f64)
}

/// Fraction of scores on the correct side of the 0.5 threshold for 0/1
/// labels.
pub fn training_accuracy(scores: &[f64], labels: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(scores.len(), labels.len())?;
    let right = scores
        .iter()
        .zip(labels)
        .filter(|(s, l)| (**s > CLASSIFICATION_THRESHOLD) == (**l == 1.0))
        .count();
    Ok(right as f64 / scores.len() as f64)
}

/// Calinski-Harabasz score: between-cluster dispersion over within-cluster
/// dispersion, scaled by the degrees of freedom. Higher is better.
pub fn calinski_harabasz(
    x: &[f64],
    n_features: usize,
    assignments: &[usize],
) -> Result<f64, MetricsError> {
    let n = assignments.len();
    check_lengths(x.len() / n_features.max(1), n)?;
    let k = assignments.iter().copied().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; k];
    let mut means = vec![0.0f64; k * n_features];
    for (i, &a) in assignments.iter().enumerate() {
        counts[a] += 1;
        for j in 0..n_features {
            means[a * n_features + j] += x[i * n_features + j];
        }
    }
    let k_eff = counts.iter().filter(|&&c| c > 0).count();
    if k_eff < 2 || n <= k_eff {
        return Err(MetricsError::DegenerateClustering(format!(
            "{k_eff} non-empty clusters over {n} points"
        )));
    }
    for (a, &c) in counts.iter().enumerate() {
        if c > 0 {
            for j in 0..n_features {
                means[a * n_features + j] /= c as f64;
            }
        }
    }
    let mut global = vec![0.0f64; n_features];
    for i in 0..n {
        for j in 0..n_features {
            global[j] += x[i * n_features + j];
        }
    }
    for g in &mut global {
        *g /= n as f64;
    }
    let mut ssw = 0.0;
    for (i, &a) in assignments.iter().enumerate() {
        for j in 0..n_features {
            let d = x[i * n_features + j] - means[a * n_features + j];
            ssw += d * d;
        }
    }
    let mut ssb = 0.0;
    for (a, &c) in counts.iter().enumerate() {
        for j in 0..n_features {
            let d = means[a * n_features + j] - global[j];
            ssb += c as f64 * d * d;
        }
    }
    if ssw == 0.0 {
        return Err(MetricsError::DegenerateClustering("zero within-cluster dispersion".into()));
    }
    Ok((ssb / (k_eff - 1) as f64) / (ssw / (n - k_eff) as f64))
}

fn choose2(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

/// Adjusted Rand index between two labelings: 1 for identical partitions
/// (up to relabeling), near 0 for independent ones.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64, MetricsError> {
    check_lengths(a.len(), b.len())?;
    let n = a.len() as u64;
    let ka = a.iter().copied().max().unwrap() + 1;
    let kb = b.iter().copied().max().unwrap() + 1;
    let mut contingency = vec![0u64; ka * kb];
    let mut row = vec![0u64; ka];
    let mut col = vec![0u64; kb];
    for (&x, &y) in a.iter().zip(b) {
        contingency[x * kb + y] += 1;
        row[x] += 1;
        col[y] += 1;
    }
    let index: u64 = contingency.iter().map(|&c| choose2(c)).sum();
    let sum_row: u64 = row.iter().map(|&c| choose2(c)).sum();
    let sum_col: u64 = col.iter().map(|&c| choose2(c)).sum();
    let expected = sum_row as f64 * sum_col as f64 / choose2(n) as f64;
    let max_index = (sum_row + sum_col) as f64 / 2.0;
    if max_index == expected {
        // Both partitions are all-singletons or a single block; any such pair
        // agrees perfectly with chance.
        return Ok(1.0);
    }
    Ok((index as f64 - expected) / (max_index - expected))
}

/// Relative Frobenius distance `||a - b|| / ||b||`, falling back to the
/// absolute distance when the reference is zero.
pub fn frobenius_rel(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(a.len(), b.len())?;
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    Ok(if norm == 0.0 { diff } else { diff / norm })
}
