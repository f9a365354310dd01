use super::EvalError;

fn check_lengths(a: usize, b: usize) -> Result<(), EvalError> {
    if a != b {
        return Err(EvalError::LengthMismatch { predictions: a, truths: b });
    }
    Ok(())
}

fn percent(hits: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * hits as f64 / total as f64
    }
}

/// Percentage of cases whose truth is among the first `n` ranked categories.
/// An empty ranking (no match) never counts as a hit. Empty input yields 0.
pub fn top_n_accuracy(ranked: &[Vec<String>], truths: &[String], n: usize) -> Result<f64, EvalError> {
    check_lengths(ranked.len(), truths.len())?;
    let hits = ranked.iter().zip(truths).filter(|(r, t)| r.iter().take(n).any(|c| c == *t)).count();
    Ok(percent(hits, truths.len()))
}

/// Percentage of cases with `|prediction - truth| < threshold` (strict).
/// A missing prediction never counts.
pub fn within_abs_error(predictions: &[Option<f64>], truths: &[f64], threshold: f64) -> Result<f64, EvalError> {
    check_lengths(predictions.len(), truths.len())?;
    let hits = predictions
        .iter()
        .zip(truths)
        .filter(|(p, t)| p.is_some_and(|p| (p - **t).abs() < threshold))
        .count();
    Ok(percent(hits, truths.len()))
}
