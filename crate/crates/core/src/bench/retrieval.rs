use ndarray::{concatenate, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

use super::{RetrievalTask, SampleRef, Scenario};
use crate::error::{Error, Result};
use crate::model::ModelState;
use crate::prompts::{render_at_level, PromptLevel, PromptTemplate};
use crate::signal::{Corpus, FeatureVector, Modality};
use crate::taxonomy::Registry;

const CHUNK: usize = 512;

/// Embeddings of every corpus sample and of one rendered prompt per species.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub audio: Array2<f64>,
    pub image: Array2<f64>,
    pub text: Array2<f64>,
}

fn encode_samples(
    samples: &[FeatureVector],
    dim: usize,
    f: impl Fn(&[&[f32]]) -> Result<Array2<f64>> + Sync,
) -> Result<Array2<f64>> {
    if samples.is_empty() {
        return Ok(Array2::zeros((0, dim)));
    }
    let parts = samples
        .par_chunks(CHUNK)
        .map(|c| f(&c.iter().map(|s| s.values.as_slice()).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    Ok(concatenate(Axis(0), &views).expect("chunks share width"))
}

impl EmbeddingTable {
    pub fn compute(
        state: &ModelState,
        reg: &Registry,
        corpus: &Corpus,
        template: PromptTemplate,
        level: PromptLevel,
    ) -> Result<Self> {
        let d = state.dim();
        let audio = encode_samples(&corpus.audio, d, |x| state.encode_audio_batch(x))?;
        let image = encode_samples(&corpus.image, d, |x| state.encode_image_batch(x))?;
        let tokens: Vec<Vec<u32>> = reg
            .records()
            .iter()
            .map(|rec| state.vocab.encode(&render_at_level(rec, template, level)))
            .collect();
        let text = state.encode_text_batch(&tokens)?;
        Ok(EmbeddingTable { audio, image, text })
    }

    pub fn get(&self, r: SampleRef) -> Result<ArrayView1<'_, f64>> {
        let m = match r.modality {
            Modality::Audio => &self.audio,
            Modality::Image => &self.image,
            Modality::Text => &self.text,
        };
        if r.index >= m.nrows() {
            return Err(Error::DimMismatch {
                expected: m.nrows(),
                got: r.index,
                context: "sample reference out of range",
            });
        }
        Ok(m.row(r.index))
    }
}

/// Candidate indices by descending dot product with the query; equal scores
/// keep ascending index order.
pub fn rank_by_similarity(query: ArrayView1<f64>, candidates: ArrayView2<f64>) -> Vec<usize> {
    let scores = candidates.dot(&query);
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Full ranking of a task's candidates.
pub fn run_retrieval(table: &EmbeddingTable, task: &RetrievalTask) -> Result<Vec<usize>> {
    let q = table.get(task.query)?;
    let modality = task.candidates.first().map(|c| c.modality);
    if modality == Some(task.query.modality) {
        return Err(Error::InvalidConfig(
            "query and database share a modality".into(),
        ));
    }
    let mut cands = Array2::zeros((task.candidates.len(), q.len()));
    for (mut row, &c) in cands.rows_mut().into_iter().zip(&task.candidates) {
        if Some(c.modality) != modality {
            return Err(Error::InvalidConfig("database mixes modalities".into()));
        }
        row.assign(&table.get(c)?);
    }
    Ok(rank_by_similarity(q, cands.view()))
}

/// Rankings for every task of every scenario, in input order.
pub fn run_benchmark(
    table: &EmbeddingTable,
    scenarios: &[Scenario],
) -> Result<Vec<Vec<Vec<usize>>>> {
    scenarios
        .iter()
        .map(|sc| {
            sc.tasks
                .par_iter()
                .map(|t| run_retrieval(table, t))
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn matching_candidate_ranks_first() {
        let q = array![0.0, 1.0, 0.0];
        let c = array![[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]];
        assert_eq!(rank_by_similarity(q.view(), c.view())[0], 2);
    }

    #[test]
    fn identical_candidates_keep_index_order() {
        let q = array![0.6, 0.8];
        let c = Array2::from_shape_fn((7, 2), |(_, j)| [0.3, 0.1][j]);
        assert_eq!(
            rank_by_similarity(q.view(), c.view()),
            (0..7).collect::<Vec<_>>()
        );
    }

    proptest! {
        #[test]
        fn positive_rank_ignores_list_order(
            vals in prop::collection::vec(-1.0f64..1.0, 8 * 3),
            q in prop::collection::vec(-1.0f64..1.0, 3),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            let c = Array2::from_shape_vec((8, 3), vals).unwrap();
            let q = ndarray::Array1::from(q);
            let base = rank_by_similarity(q.view(), c.view());
            let mut perm: Vec<usize> = (0..8).collect();
            perm.shuffle(&mut crate::rng::rng_from(seed));
            let pc = c.select(Axis(0), &perm);
            let ranked: Vec<usize> = rank_by_similarity(q.view(), pc.view()).into_iter().map(|i| perm[i]).collect();
            let scores = c.dot(&q);
            let distinct = (0..8).all(|i| (0..i).all(|j| scores[i] != scores[j]));
            if distinct {
                prop_assert_eq!(ranked, base);
            }
        }
    }
}
