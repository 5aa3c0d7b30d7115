//! DCG@n and NDCG@n.
//!
//! `DCG@n = sum_{i=1..n} rel_i / log2(i + 1)` where `rel_i` is the true
//! relevance of the item placed at predicted rank `i`. NDCG divides by the DCG
//! of the ideal (descending true relevance) order. When the ideal DCG is zero
//! the NDCG is defined as 0.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use crate::corpus::InstitutionId;
use crate::scoring::RelevanceVector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("cutoff must be at least 1")]
    ZeroCutoff,
    #[error("institution `{0}` is ranked but has no true relevance")]
    UnknownInstitution(InstitutionId),
    #[error("institution `{0}` appears twice in the ranking")]
    DuplicateInstitution(InstitutionId),
}

/// Institutions ordered by descending predicted score, ties broken by
/// ascending institution id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Ranking {
    entries: Vec<(InstitutionId, f64)>,
}

impl Ranking {
    pub fn from_scores(scores: impl IntoIterator<Item = (InstitutionId, f64)>) -> Result<Self, MetricsError> {
        let mut entries: Vec<(InstitutionId, f64)> = scores.into_iter().collect();
        let mut seen = HashSet::with_capacity(entries.len());
        for (id, _) in &entries {
            if !seen.insert(id) {
                return Err(MetricsError::DuplicateInstitution(id.clone()));
            }
        }
        entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(Self { entries })
    }

    /// Keeps the given order, e.g. a ranking read back from a file.
    pub fn from_ordered(entries: impl IntoIterator<Item = (InstitutionId, f64)>) -> Result<Self, MetricsError> {
        let entries: Vec<(InstitutionId, f64)> = entries.into_iter().collect();
        let mut seen = HashSet::with_capacity(entries.len());
        for (id, _) in &entries {
            if !seen.insert(id) {
                return Err(MetricsError::DuplicateInstitution(id.clone()));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(InstitutionId, f64)] {
        &self.entries
    }

    pub fn ids(&self) -> impl Iterator<Item = &InstitutionId> {
        self.entries.iter().map(|(i, _)| i)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn top(&self, n: usize) -> &[(InstitutionId, f64)] {
        &self.entries[..n.min(self.entries.len())]
    }
}

/// Discounted cumulative gain of the first `n` relevances.
pub fn dcg_at(relevances: &[f64], n: usize) -> Result<f64, MetricsError> {
    if n == 0 {
        return Err(MetricsError::ZeroCutoff);
    }
    Ok(relevances
        .iter()
        .take(n)
        .enumerate()
        .map(|(i, &rel)| rel / ((i + 2) as f64).log2())
        .sum())
}

/// NDCG@n of `predicted` against `truth`.
///
/// The ideal DCG is taken over all of `truth`, so a prediction that omits
/// relevant institutions is penalized.
pub fn ndcg_at(predicted: &Ranking, truth: &RelevanceVector, n: usize) -> Result<f64, MetricsError> {
    if n == 0 {
        return Err(MetricsError::ZeroCutoff);
    }
    let lookup: HashMap<&InstitutionId, f64> = truth.iter().collect();
    let mut gains = Vec::with_capacity(predicted.len().min(n));
    for id in predicted.ids() {
        let rel = *lookup
            .get(id)
            .ok_or_else(|| MetricsError::UnknownInstitution(id.clone()))?;
        if gains.len() < n {
            gains.push(rel);
        }
    }
    let mut ideal: Vec<f64> = truth.values().to_vec();
    ideal.sort_by(|a, b| b.total_cmp(a));

    let idcg = dcg_at(&ideal, n)?;
    if idcg <= 0.0 {
        return Ok(0.0);
    }
    let dcg = dcg_at(&gains, n)?;
    // rearrangement bounds dcg by idcg; rounding can overshoot by an ulp
    Ok((dcg / idcg).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn truth(values: &[f64]) -> RelevanceVector {
        let ids: Arc<[InstitutionId]> = (0..values.len())
            .map(|i| InstitutionId::from(format!("I{i:03}")))
            .collect();
        RelevanceVector::new("V".into(), 2015, ids, values.to_vec())
    }

    fn ranking(order: &[usize]) -> Ranking {
        // strictly decreasing scores reproduce `order`
        Ranking::from_scores(
            order
                .iter()
                .enumerate()
                .map(|(pos, &i)| (InstitutionId::from(format!("I{i:03}")), (order.len() - pos) as f64)),
        )
        .unwrap()
    }

    #[test]
    fn dcg_examples() {
        assert_eq!(dcg_at(&[1.0, 0.0, 0.0], 1).unwrap(), 1.0);
        // 3/log2(2) + 2/log2(3) + 1/log2(4)
        let hand = 3.0 + 2.0 / 3f64.ln() * 2f64.ln() + 0.5;
        assert_abs_diff_eq!(dcg_at(&[3.0, 2.0, 1.0], 3).unwrap(), hand, epsilon = 1e-12);
        assert_abs_diff_eq!(hand, 4.76186, epsilon = 1e-5);
        assert_eq!(dcg_at(&[0.0; 5], 5).unwrap(), 0.0);
        assert_eq!(dcg_at(&[1.0], 0), Err(MetricsError::ZeroCutoff));
    }

    #[test]
    fn ndcg_examples() {
        let t = truth(&[3.0, 2.0, 1.0]);
        assert_eq!(ndcg_at(&ranking(&[0, 1, 2]), &t, 3).unwrap(), 1.0);
        let reversed = ndcg_at(&ranking(&[2, 1, 0]), &t, 3).unwrap();
        let hand = (1.0 + 2.0 / 3f64.log2() + 1.5) / (3.0 + 2.0 / 3f64.log2() + 0.5);
        assert_abs_diff_eq!(reversed, hand, epsilon = 1e-12);
        assert_abs_diff_eq!(reversed, 0.789998, epsilon = 1e-6);
        assert_eq!(ndcg_at(&ranking(&[0, 1]), &truth(&[0.0, 0.0]), 20).unwrap(), 0.0);
    }

    #[test]
    fn mismatched_institution_is_an_error() {
        let t = truth(&[1.0]);
        let r = Ranking::from_scores([(InstitutionId::from("nope"), 1.0)]).unwrap();
        assert!(matches!(ndcg_at(&r, &t, 5), Err(MetricsError::UnknownInstitution(_))));
    }

    #[test]
    fn empty_prediction_scores_zero() {
        assert_eq!(ndcg_at(&Ranking::default(), &truth(&[1.0, 2.0]), 20).unwrap(), 0.0);
    }

    #[test]
    fn ties_break_by_ascending_id() {
        let r = Ranking::from_scores([
            (InstitutionId::from("b"), 1.0),
            (InstitutionId::from("a"), 1.0),
            (InstitutionId::from("c"), 2.0),
        ])
        .unwrap();
        let ids: Vec<&str> = r.ids().map(|i| i.as_str()).collect();
        assert_eq!(ids, vec!["c", "a", "b"]);
        assert!(Ranking::from_scores([(InstitutionId::from("a"), 1.0), ("a".into(), 2.0)]).is_err());
    }

    proptest! {
        #[test]
        fn ndcg_is_bounded_and_scale_invariant(
            rels in prop::collection::vec(0.0f64..10.0, 1..30),
            preds in prop::collection::vec(0.0f64..1.0, 30),
            n in 1usize..25,
            scale in 0.01f64..100.0,
        ) {
            let t = truth(&rels);
            let r = Ranking::from_scores(
                t.institutions().iter().cloned().zip(preds.iter().copied()),
            ).unwrap();
            let v = ndcg_at(&r, &t, n).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
            let scaled = truth(&rels.iter().map(|x| x * scale).collect::<Vec<_>>());
            let w = ndcg_at(&r, &scaled, n).unwrap();
            prop_assert!((v - w).abs() < 1e-12);
        }

        #[test]
        fn dcg_monotone_in_cutoff(rels in prop::collection::vec(0.0f64..5.0, 0..30), n in 1usize..30) {
            prop_assert!(dcg_at(&rels, n).unwrap() <= dcg_at(&rels, n + 1).unwrap());
        }
    }
}
