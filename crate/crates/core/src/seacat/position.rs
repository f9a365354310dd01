//! Sentence position indexing relative to the agent's first sentence, and the
//! sinusoidal embedding of those indices.

use super::{SeacatError, Transcript};

/// Shifted position index of `sentence_pos` in `transcript`.
///
/// The raw index is the signed distance from the agent's first sentence; it is
/// shifted by `n_as` and clamped into `[0, 2 * n_as]`, so the agent's first
/// sentence always maps to `n_as`.
pub fn position_index(transcript: &Transcript, sentence_pos: usize, n_as: usize) -> Result<usize, SeacatError> {
    let anchor = transcript.first_agent_position()?;
    Ok(shifted_index(sentence_pos, anchor, n_as))
}

pub(crate) fn shifted_index(sentence_pos: usize, anchor: usize, n_as: usize) -> usize {
    let raw = sentence_pos as i64 - anchor as i64 + n_as as i64;
    raw.clamp(0, 2 * n_as as i64) as usize
}

/// Sinusoidal embedding of index `i` with `d_pos` components: component `2p`
/// is `sin(i / 10000^(2p/d_pos))`, component `2p+1` the matching cosine.
pub fn position_embedding(i: usize, d_pos: usize) -> Vec<f64> {
    assert!(d_pos.is_multiple_of(2), "position embedding dimension must be even, got {d_pos}");
    let mut out = vec![0.0; d_pos];
    for p in 0..d_pos / 2 {
        let angle = i as f64 / 10000f64.powf(2.0 * p as f64 / d_pos as f64);
        out[2 * p] = angle.sin();
        out[2 * p + 1] = angle.cos();
    }
    out
}

/// Embeddings for every shifted index `0..=2 * n_as`, computed once.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionTable {
    rows: Vec<Vec<f64>>,
}

impl PositionTable {
    pub fn new(n_as: usize, d_pos: usize) -> Self {
        Self { rows: (0..=2 * n_as).map(|i| position_embedding(i, d_pos)).collect() }
    }

    pub fn get(&self, index: usize) -> &[f64] {
        &self.rows[index]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seacat::Sentence;

    fn transcript(n_customer_before: usize, n_after: usize) -> Transcript {
        let mut s: Vec<Sentence> = (0..n_customer_before).map(|i| Sentence::customer(format!("c{i}"))).collect();
        s.push(Sentence::agent("hello"));
        s.extend((0..n_after).map(|i| Sentence::customer(format!("a{i}"))));
        Transcript::new(0, s)
    }

    #[test]
    fn test_agent_first_sentence_maps_to_n_as() {
        let t = transcript(6, 3);
        assert_eq!(position_index(&t, 6, 64).unwrap(), 64);
    }

    #[test]
    fn test_five_steps_before() {
        let t = transcript(6, 3);
        assert_eq!(position_index(&t, 1, 64).unwrap(), 59);
        assert_eq!(position_index(&t, 9, 64).unwrap(), 67);
    }

    #[test]
    fn test_clamped() {
        let t = transcript(0, 250);
        assert_eq!(position_index(&t, 200, 64).unwrap(), 128);
        let t = transcript(100, 0);
        assert_eq!(position_index(&t, 0, 64).unwrap(), 0);
    }

    #[test]
    fn test_no_agent() {
        let t = Transcript::new(9, vec![Sentence::customer("hi")]);
        assert!(matches!(position_index(&t, 0, 64), Err(SeacatError::NoAgentSentence(9))));
    }

    #[test]
    fn test_zero_index_pattern() {
        let e = position_embedding(0, 768);
        for p in 0..384 {
            assert_eq!(e[2 * p], 0.0);
            assert_eq!(e[2 * p + 1], 1.0);
        }
    }

    #[test]
    fn test_known_value() {
        // 64 / 10000^(2/4) = 0.64
        let e = position_embedding(64, 4);
        assert!((e[2] - 0.597_195_441_362_392_1).abs() < 1e-12);
        assert!((e[3] - 0.802_095_757_884_292_7).abs() < 1e-12);
        assert!((e[0] - 64f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn test_distinct_indices_distinct_vectors() {
        let table = PositionTable::new(64, 4);
        for a in 0..=128 {
            for b in (a + 1)..=128 {
                let d: f64 = table.get(a).iter().zip(table.get(b)).map(|(x, y)| (x - y).powi(2)).sum();
                assert!(d > 0.0, "indices {a} and {b} collide");
            }
        }
    }
}
