//! Sentence attention with a key *vector*: each sentence embedding is scored
//! against the key, the scores are softmax-normalized over valid sentences and
//! the output is the weighted sum of the embeddings (values == queries).

use super::SeacatError;

#[derive(Debug, Clone, PartialEq)]
pub struct Attention {
    /// One weight per row; masked rows are exactly 0.
    pub sigma: Vec<f64>,
    /// `sum_i sigma_i * q_i`.
    pub chi: Vec<f64>,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Attention of `key` over the rows of `q`. `mask[i] == false` marks a padding
/// row, which gets a logit of negative infinity.
pub fn attention(q: &[Vec<f64>], key: &[f64], mask: &[bool]) -> Result<Attention, SeacatError> {
    if q.is_empty() {
        return Err(SeacatError::AllMasked);
    }
    assert_eq!(q.len(), mask.len(), "mask length must match number of rows");
    let d = key.len();
    let scale = (d as f64).sqrt();
    let logits: Vec<f64> = q
        .iter()
        .zip(mask)
        .map(|(row, &valid)| if valid { dot(row, key) / scale } else { f64::NEG_INFINITY })
        .collect();
    let sigma = masked_softmax(&logits, mask)?;

    let mut chi = vec![0.0; d];
    for (row, &w) in q.iter().zip(&sigma) {
        if w == 0.0 {
            continue;
        }
        for (c, x) in chi.iter_mut().zip(row) {
            *c += w * x;
        }
    }
    Ok(Attention { sigma, chi })
}

pub(crate) fn masked_softmax(logits: &[f64], mask: &[bool]) -> Result<Vec<f64>, SeacatError> {
    if logits.iter().zip(mask).any(|(l, &m)| m && !l.is_finite()) {
        return Err(SeacatError::NonFinite);
    }
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&l, _)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(SeacatError::AllMasked);
    }
    let mut out: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(&l, &m)| if m { (l - max).exp() } else { 0.0 })
        .collect();
    // summing in sorted order makes the normalizer independent of row order
    let mut terms = out.clone();
    terms.sort_by(f64::total_cmp);
    let z: f64 = terms.iter().sum();
    for v in &mut out {
        *v /= z;
    }
    Ok(out)
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let z: f64 = out.iter().sum();
    for v in &mut out {
        *v /= z;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn test_identical_rows_uniform() {
        let q = vec![vec![0.3, -1.2, 2.0]; 3];
        let a = attention(&q, &[0.5, 0.1, -0.7], &[true; 3]).unwrap();
        for s in &a.sigma {
            assert!((s - 1.0 / 3.0).abs() < 1e-15);
        }
        for (c, x) in a.chi.iter().zip(&q[0]) {
            assert!((c - x).abs() < 1e-12);
        }
    }

    #[test]
    fn test_two_rows_hand_value() {
        let q = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let a = attention(&q, &[1.0, 0.0], &[true, true]).unwrap();
        // softmax(1/sqrt(2), 0)
        let e = (1.0f64 / 2f64.sqrt()).exp();
        let expected = e / (e + 1.0);
        assert!((a.sigma[0] - expected).abs() < 1e-15);
        assert!((a.sigma[0] - 0.669_761_55).abs() < 1e-6);
        assert!((a.sigma[1] - 0.330_238_45).abs() < 1e-6);
        assert!((a.chi[0] - a.sigma[0]).abs() < 1e-15);
        assert!((a.chi[1] - a.sigma[1]).abs() < 1e-15);
    }

    #[test]
    fn test_single_row() {
        let q = vec![vec![4.0, -2.0], vec![100.0, 100.0]];
        let a = attention(&q, &[9.0, 9.0], &[true, false]).unwrap();
        assert_eq!(a.sigma, vec![1.0, 0.0]);
        assert_eq!(a.chi, vec![4.0, -2.0]);
    }

    #[test]
    fn test_all_masked() {
        let q = vec![vec![1.0]; 2];
        assert!(matches!(attention(&q, &[1.0], &[false, false]), Err(SeacatError::AllMasked)));
        assert!(matches!(attention(&[], &[1.0], &[]), Err(SeacatError::AllMasked)));
    }

    fn matrix() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, Vec<bool>)> {
        (1usize..12, 1usize..8).prop_flat_map(|(n, d)| {
            (
                prop::collection::vec(prop::collection::vec(-5.0f64..5.0, d), n),
                prop::collection::vec(-5.0f64..5.0, d),
                prop::collection::vec(any::<bool>(), n),
            )
        })
    }

    proptest! {
        #[test]
        fn prop_sigma_simplex((q, key, mut mask) in matrix()) {
            mask[0] = true;
            let a = attention(&q, &key, &mask).unwrap();
            let sum: f64 = a.sigma.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-6);
            for (s, &m) in a.sigma.iter().zip(&mask) {
                prop_assert!(*s >= 0.0);
                if !m { prop_assert_eq!(*s, 0.0); }
            }
            // chi inside the per-coordinate hull of the valid rows
            for j in 0..key.len() {
                let lo = q.iter().zip(&mask).filter(|(_, &m)| m).map(|(r, _)| r[j]).fold(f64::INFINITY, f64::min);
                let hi = q.iter().zip(&mask).filter(|(_, &m)| m).map(|(r, _)| r[j]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(a.chi[j] >= lo - 1e-9 && a.chi[j] <= hi + 1e-9);
            }
        }
    }
}
