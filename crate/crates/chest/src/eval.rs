//! Retrieval evaluation in both spaces: Recall@k and MAP@R over a single
//! query pool where every item queries all others with itself excluded.
//!
//! Rankings sort by `(distance, index)` so ties break toward the lower
//! index and every metric is deterministic. The same definitions run twice
//! per evaluation: once over the Euclidean embeddings and once over the
//! hyperbolic ones.

use crate::data::VectorDataset;
use crate::error::{ChestError, Result};
use crate::geometry::{kernel as geo, BallConfig, PoincarePoint, Space};
use crate::model::ChestModel;
use std::collections::BTreeMap;

/// Embedding pool of one space.
#[derive(Clone, Debug)]
enum IndexEmbeddings {
    Euclidean(Vec<Vec<f64>>),
    Hyperbolic(Vec<PoincarePoint>),
}

/// Labeled embedding pool ready for retrieval queries.
#[derive(Clone, Debug)]
pub struct RetrievalIndex {
    embeddings: IndexEmbeddings,
    labels: Vec<usize>,
}

impl RetrievalIndex {
    fn validate_labels(n: usize, labels: &[usize]) -> Result<()> {
        if n < 2 {
            return Err(ChestError::InvalidInput(format!(
                "retrieval needs at least 2 items, got {n}"
            )));
        }
        if labels.len() != n {
            return Err(ChestError::DimensionMismatch {
                context: "retrieval labels".into(),
                expected: n,
                got: labels.len(),
            });
        }
        Ok(())
    }

    pub fn euclidean(embeddings: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        Self::validate_labels(embeddings.len(), &labels)?;
        let dim = embeddings[0].len();
        for (i, e) in embeddings.iter().enumerate() {
            if e.len() != dim {
                return Err(ChestError::DimensionMismatch {
                    context: format!("euclidean embedding {i}"),
                    expected: dim,
                    got: e.len(),
                });
            }
            if e.iter().any(|v| !v.is_finite()) {
                return Err(ChestError::NonFinite(format!("euclidean embedding {i}")));
            }
        }
        Ok(RetrievalIndex {
            embeddings: IndexEmbeddings::Euclidean(embeddings),
            labels,
        })
    }

    /// Builds the hyperbolic pool, re-checking strict ball membership of
    /// every point under the given configuration.
    pub fn hyperbolic(
        points: Vec<PoincarePoint>,
        labels: Vec<usize>,
        cfg: &BallConfig,
    ) -> Result<Self> {
        Self::validate_labels(points.len(), &labels)?;
        let dim = points[0].dim();
        for (i, p) in points.iter().enumerate() {
            if p.dim() != dim {
                return Err(ChestError::DimensionMismatch {
                    context: format!("hyperbolic embedding {i}"),
                    expected: dim,
                    got: p.dim(),
                });
            }
            let sq: f64 = p.coords().iter().map(|v| v * v).sum();
            if !(cfg.curvature * sq < 1.0) {
                return Err(ChestError::Boundary(format!(
                    "hyperbolic embedding {i} violates ball membership for c = {}",
                    cfg.curvature
                )));
            }
        }
        Ok(RetrievalIndex {
            embeddings: IndexEmbeddings::Hyperbolic(points),
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn space(&self) -> Space {
        match self.embeddings {
            IndexEmbeddings::Euclidean(_) => Space::Euclidean,
            IndexEmbeddings::Hyperbolic(_) => Space::Hyperbolic,
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    fn distance(&self, i: usize, j: usize, cfg: &BallConfig) -> f64 {
        match &self.embeddings {
            IndexEmbeddings::Euclidean(e) => geo::euclidean_distance(&e[i], &e[j]),
            IndexEmbeddings::Hyperbolic(p) => {
                geo::poincare_distance(p[i].coords(), p[j].coords(), cfg)
            }
        }
    }

    /// Every other item sorted by `(distance, index)`.
    fn ranked_neighbors(&self, q: usize, cfg: &BallConfig) -> Vec<(f64, usize)> {
        let mut out: Vec<(f64, usize)> = (0..self.len())
            .filter(|&j| j != q)
            .map(|j| (self.distance(q, j, cfg), j))
            .collect();
        out.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out
    }
}

/// Fraction of queries whose top-k neighbors contain a same-class item, for
/// each requested k.
pub fn recall_at_k(
    index: &RetrievalIndex,
    ks: &[usize],
    cfg: &BallConfig,
) -> Result<BTreeMap<usize, f64>> {
    if ks.is_empty() {
        return Err(ChestError::InvalidInput(
            "recall_at_k needs at least one k".into(),
        ));
    }
    for &k in ks {
        if k == 0 {
            return Err(ChestError::InvalidInput(
                "recall_at_k requires k >= 1".into(),
            ));
        }
        if k >= index.len() {
            return Err(ChestError::InvalidInput(format!(
                "recall_at_k requires k < N, got k = {k} with N = {}",
                index.len()
            )));
        }
    }
    let mut hits: BTreeMap<usize, usize> = ks.iter().map(|&k| (k, 0)).collect();
    for q in 0..index.len() {
        let ranked = index.ranked_neighbors(q, cfg);
        let label = index.labels[q];
        for (&k, hit_count) in hits.iter_mut() {
            if ranked[..k].iter().any(|&(_, j)| index.labels[j] == label) {
                *hit_count += 1;
            }
        }
    }
    let n = index.len() as f64;
    Ok(hits.into_iter().map(|(k, h)| (k, h as f64 / n)).collect())
}

/// Mean average precision at R: per query with `R > 0` same-class others,
/// the precision-weighted relevance over the first `R` ranks divided by
/// `R`; queries without positives are excluded from the mean.
pub fn map_at_r(index: &RetrievalIndex, cfg: &BallConfig) -> Result<f64> {
    let mut sum = 0.0;
    let mut included = 0usize;
    for q in 0..index.len() {
        let label = index.labels[q];
        let r = index
            .labels
            .iter()
            .enumerate()
            .filter(|&(j, &l)| j != q && l == label)
            .count();
        if r == 0 {
            continue;
        }
        let ranked = index.ranked_neighbors(q, cfg);
        let mut relevant_so_far = 0usize;
        let mut ap = 0.0;
        for (rank, &(_, j)) in ranked.iter().take(r).enumerate() {
            if index.labels[j] == label {
                relevant_so_far += 1;
                ap += relevant_so_far as f64 / (rank + 1) as f64;
            }
        }
        sum += ap / r as f64;
        included += 1;
    }
    if included == 0 {
        return Err(ChestError::Undefined(
            "MAP@R is undefined: no query has a same-class item".into(),
        ));
    }
    Ok(sum / included as f64)
}

/// Retrieval metrics of one space.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricsReport {
    pub space: Space,
    pub recall_at: BTreeMap<usize, f64>,
    pub map_at_r: f64,
}

impl MetricsReport {
    fn compute(index: &RetrievalIndex, ks: &[usize], cfg: &BallConfig) -> Result<Self> {
        let recall_at = recall_at_k(index, ks, cfg)?;
        debug_assert!(recall_at
            .values()
            .zip(recall_at.values().skip(1))
            .all(|(a, b)| a <= b));
        Ok(MetricsReport {
            space: index.space(),
            recall_at,
            map_at_r: map_at_r(index, cfg)?,
        })
    }
}

/// Embeds the split once and evaluates both spaces: the encoder output for
/// the Euclidean report, the mapped output for the hyperbolic one.
pub fn evaluate_both(
    model: &ChestModel,
    dataset: &VectorDataset,
    ks: &[usize],
) -> Result<(MetricsReport, MetricsReport)> {
    let (batch_e, batch_h) = model.embed_dataset(dataset.features())?;
    let labels = dataset.labels().to_vec();
    let cfg = model.ball();
    let index_e = RetrievalIndex::euclidean(batch_e, labels.clone())?;
    let index_h = RetrievalIndex::hyperbolic(batch_h, labels, cfg)?;
    Ok((
        MetricsReport::compute(&index_e, ks, cfg)?,
        MetricsReport::compute(&index_h, ks, cfg)?,
    ))
}
