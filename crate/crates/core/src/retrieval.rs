//! Content-based retrieval evaluation.
//!
//! A database of embeddings is ranked against each query by cosine
//! similarity; an item is relevant when its label equals the query's.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::affinity::FeatureMatrix;
use crate::error::{PktError, Result};
use crate::kernel;

#[derive(Debug, Clone)]
pub struct RetrievalIndex {
    db_feats: FeatureMatrix,
    db_labels: Vec<usize>,
}

impl RetrievalIndex {
    pub fn new(db_feats: FeatureMatrix, db_labels: Vec<usize>) -> Result<Self> {
        if db_feats.rows() != db_labels.len() {
            return Err(PktError::DimensionMismatch {
                expected: db_feats.rows(),
                actual: db_labels.len(),
            });
        }
        Ok(RetrievalIndex {
            db_feats,
            db_labels,
        })
    }

    pub fn len(&self) -> usize {
        self.db_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.db_labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.db_feats.dim()
    }

    pub fn labels(&self) -> &[usize] {
        &self.db_labels
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    /// Mean of `per_query_ap`, in `[0, 1]`.
    pub map: f64,
    /// Mean top-k precision for each requested k.
    pub top_k: BTreeMap<usize, f64>,
    /// AP of each scored query, in query order.
    pub per_query_ap: Vec<f64>,
    /// Queries with no relevant database item; excluded from the means.
    pub skipped: usize,
}

/// Database indices by descending cosine similarity; ties go to the lower index.
pub fn rank(index: &RetrievalIndex, query: &[f64]) -> Result<Vec<usize>> {
    if query.len() != index.dim() {
        return Err(PktError::DimensionMismatch {
            expected: index.dim(),
            actual: query.len(),
        });
    }
    let sims: Vec<f64> = (0..index.len())
        .map(|i| kernel::cosine_unchecked(index.db_feats.row(i), query))
        .collect();
    let mut order: Vec<usize> = (0..index.len()).collect();
    order.sort_by(|&a, &b| {
        sims[b]
            .partial_cmp(&sims[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    Ok(order)
}

/// Interpolated average precision at the recall levels 0.0, 0.1, ..., 1.0.
///
/// The interpolated precision at level `r` is the best precision at any
/// cutoff whose recall is at least `r`; unreached levels contribute 0.
pub fn average_precision_11pt(ranked_relevance: &[bool], n_relevant_total: usize) -> Result<f64> {
    if n_relevant_total == 0 {
        return Err(PktError::InvalidArgument(
            "average precision needs at least one relevant item".into(),
        ));
    }
    // best[r] = max precision over cutoffs with hits * 10 >= r * n_relevant_total
    let mut best = [0.0f64; 11];
    let mut hits = 0usize;
    for (k, &rel) in ranked_relevance.iter().enumerate() {
        if !rel {
            continue;
        }
        hits += 1;
        let precision = hits as f64 / (k + 1) as f64;
        for (r, b) in best.iter_mut().enumerate() {
            if hits * 10 >= r * n_relevant_total && precision > *b {
                *b = precision;
            }
        }
    }
    if hits > n_relevant_total {
        return Err(PktError::InvalidArgument(format!(
            "ranking has {hits} relevant items but only {n_relevant_total} exist"
        )));
    }
    Ok(best.iter().sum::<f64>() / 11.0)
}

/// Fraction of relevant items among the first `k`.
pub fn top_k_precision(ranked_relevance: &[bool], k: usize) -> Result<f64> {
    if k == 0 || k > ranked_relevance.len() {
        return Err(PktError::InvalidArgument(format!(
            "k must lie in 1..={}, got {k}",
            ranked_relevance.len()
        )));
    }
    Ok(ranked_relevance[..k].iter().filter(|&&r| r).count() as f64 / k as f64)
}

/// Scores every query against the database.
pub fn evaluate(
    index: &RetrievalIndex,
    queries: &FeatureMatrix,
    query_labels: &[usize],
    ks: &[usize],
) -> Result<RetrievalResult> {
    if queries.rows() != query_labels.len() {
        return Err(PktError::DimensionMismatch {
            expected: queries.rows(),
            actual: query_labels.len(),
        });
    }
    if query_labels.is_empty() {
        return Err(PktError::InvalidArgument("empty query set".into()));
    }
    if let Some(&k) = ks.iter().find(|&&k| k == 0 || k > index.len()) {
        return Err(PktError::InvalidArgument(format!(
            "top-k cutoff {k} outside 1..={}",
            index.len()
        )));
    }

    let mut class_counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &l in index.labels() {
        *class_counts.entry(l).or_default() += 1;
    }

    let mut per_query_ap = Vec::with_capacity(query_labels.len());
    let mut top_sums = vec![0.0; ks.len()];
    let mut skipped = 0;
    for (q, &label) in query_labels.iter().enumerate() {
        let n_rel = class_counts.get(&label).copied().unwrap_or(0);
        if n_rel == 0 {
            skipped += 1;
            continue;
        }
        let order = rank(index, queries.row(q))?;
        let relevance: Vec<bool> = order.iter().map(|&i| index.labels()[i] == label).collect();
        per_query_ap.push(average_precision_11pt(&relevance, n_rel)?);
        for (s, &k) in top_sums.iter_mut().zip(ks) {
            *s += top_k_precision(&relevance, k)?;
        }
    }
    if per_query_ap.is_empty() {
        log::error!("all {skipped} queries lack a relevant database item");
        return Err(PktError::NoScorableQueries { skipped });
    }
    if skipped > 0 {
        log::warn!("{skipped} queries skipped: no relevant database item");
    }
    let scored = per_query_ap.len() as f64;
    let map = per_query_ap.iter().sum::<f64>() / scored;
    let top_k = ks
        .iter()
        .zip(&top_sums)
        .map(|(&k, &s)| (k, s / scored))
        .collect();
    Ok(RetrievalResult {
        map,
        top_k,
        per_query_ap,
        skipped,
    })
}
