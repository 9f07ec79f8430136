//! Synthetic translation tasks for experiments: every segment has a hidden
//! "true" distribution, a reference drawn from it, and a model trained on a
//! finite sample of it with label smoothing.

use serde::{Deserialize, Serialize};

use crate::corpus::SourceSegment;
use crate::generation::{sample_with_rng, segment_rng, GenConfig};
use crate::toy_model::{
    random_model, train_smoothed, ModelError, SmoothingConfig, ToyModel, Vocab,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyTaskConfig {
    pub segments: usize,
    /// Vocabulary size including end-of-sequence.
    pub vocab_size: usize,
    pub order: usize,
    pub max_len: usize,
    /// Peakiness of the true distributions (see [`random_model`]).
    pub sharpness: f64,
    /// Training sequences drawn per segment.
    pub train_size: usize,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for ToyTaskConfig {
    fn default() -> Self {
        ToyTaskConfig {
            segments: 50,
            vocab_size: 6,
            order: 2,
            max_len: 10,
            sharpness: 8.0,
            train_size: 30,
            epsilon: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ToyTask {
    /// Sources with their trained models.
    pub segments: Vec<(SourceSegment, ToyModel)>,
    /// One hidden reference per segment.
    pub references: Vec<String>,
    pub truths: Vec<ToyModel>,
}

/// Build a task. Everything except the trained models is independent of
/// `epsilon`, so tasks differing only in smoothing share truths,
/// references and training data.
pub fn toy_task(cfg: &ToyTaskConfig) -> Result<ToyTask, ModelError> {
    let vocab = Vocab::letters(cfg.vocab_size);
    let smoothing = SmoothingConfig::new(cfg.epsilon)?;
    let mut task = ToyTask {
        segments: Vec::with_capacity(cfg.segments),
        references: Vec::with_capacity(cfg.segments),
        truths: Vec::with_capacity(cfg.segments),
    };
    for i in 0..cfg.segments {
        let mut rng = segment_rng(cfg.seed, i as u64);
        let truth = random_model(
            vocab.clone(),
            cfg.order,
            cfg.max_len,
            cfg.sharpness,
            &mut rng,
        )?;
        let draw = |n: usize, rng: &mut _| {
            sample_with_rng(&truth, &GenConfig::ancestral(n, cfg.max_len, 0), rng)
        };
        let reference = draw(1, &mut rng).remove(0);
        let train: Vec<Vec<usize>> = draw(cfg.train_size, &mut rng)
            .into_iter()
            .map(|h| h.tokens)
            .collect();
        let model =
            train_smoothed(&train, cfg.order, smoothing, vocab.clone())?.with_max_len(cfg.max_len);
        task.references.push(vocab.decode(&reference.tokens));
        task.segments.push((
            SourceSegment {
                id: i as u64,
                text: format!("segment {i}"),
            },
            model,
        ));
        task.truths.push(truth);
    }
    Ok(task)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothing_only_changes_models() {
        let a = toy_task(&ToyTaskConfig {
            segments: 3,
            ..Default::default()
        })
        .unwrap();
        let b = toy_task(&ToyTaskConfig {
            segments: 3,
            epsilon: 0.0,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(a.references, b.references);
        assert_eq!(a.truths, b.truths);
        assert_ne!(a.segments[0].1, b.segments[0].1);
    }
}
