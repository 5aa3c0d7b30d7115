//! Exponential-smoothing ranker.
//!
//! An institution's next-year score is `r[t-1] + w r[t-2] + w² r[t-3] + w³ r[t-4]`,
//! a Brown-style exponentially weighted sum of the four preceding years with the
//! smoothing constant folded into the final normalization. The decay `w` is picked
//! from a fixed grid by scoring each candidate on the most recent observed year:
//! candidates are built from `t-2..t-5` and ranked against the true `t-1` table.
//! The largest grid value wins ties.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::corpus::{InstitutionId, VenueId};
use crate::metrics::{ndcg_at, MetricsError};
use crate::scoring::{RelevanceVector, ScoreTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SmoothError {
    #[error("venue `{venue}` has no score table for year {year}")]
    MissingHistory { venue: VenueId, year: i32 },
    #[error("venue `{venue}` has no non-zero history before {target_year}")]
    DegenerateHistory { venue: VenueId, target_year: i32 },
    #[error("grid must have at least one step")]
    EmptyGrid,
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Ascending candidate decays `1/steps, 2/steps, ..., 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingGrid(Vec<f64>);

impl SmoothingGrid {
    pub const DEFAULT_STEPS: usize = 20;

    pub fn uniform(steps: usize) -> Result<Self, SmoothError> {
        if steps == 0 {
            return Err(SmoothError::EmptyGrid);
        }
        Ok(Self((1..=steps).map(|i| i as f64 / steps as f64).collect()))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl Default for SmoothingGrid {
    fn default() -> Self {
        Self::uniform(Self::DEFAULT_STEPS).expect("non-empty grid")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankIns1Result {
    /// Scores for the target year, summing to 1.
    pub relevance: RelevanceVector,
    pub chosen_weight: f64,
    /// NDCG@cutoff of the chosen weight on the held-out year.
    pub validation_ndcg: f64,
    /// NDCG of every grid value, in grid order.
    pub grid_ndcg: Vec<f64>,
}

/// `recent + w·older1 + w²·older2 + w³·older3`, elementwise.
pub fn smoothed_scores(years: [&[f64]; 4], w: f64) -> Vec<f64> {
    let (w2, w3) = (w * w, w * w * w);
    (0..years[0].len())
        .map(|k| years[0][k] + w * years[1][k] + w2 * years[2][k] + w3 * years[3][k])
        .collect()
}

/// Predicts `target_year` relevance for one venue from its score history.
///
/// `history` must contain `target_year - 1`; other missing years count as
/// all-zero tables.
pub fn rankins1(
    history: &BTreeMap<i32, ScoreTable>,
    venue: &VenueId,
    target_year: i32,
    cutoff: usize,
    grid: &SmoothingGrid,
) -> Result<RankIns1Result, SmoothError> {
    if cutoff == 0 {
        return Err(MetricsError::ZeroCutoff.into());
    }
    let latest = history
        .get(&(target_year - 1))
        .ok_or_else(|| SmoothError::MissingHistory {
            venue: venue.clone(),
            year: target_year - 1,
        })?;
    let institutions: Arc<[InstitutionId]> = latest.institutions().clone();
    let zeros = vec![0.0; institutions.len()];
    // r[lag] is the table of year target_year - lag, for lag = 1..=5
    let r: Vec<&[f64]> = (0..=5)
        .map(|lag| {
            history
                .get(&(target_year - lag))
                .filter(|_| lag > 0)
                .map_or(zeros.as_slice(), |t| t.scores())
        })
        .collect();

    if r[1..].iter().all(|s| s.iter().all(|&v| v == 0.0)) {
        return Err(SmoothError::DegenerateHistory {
            venue: venue.clone(),
            target_year,
        });
    }

    let truth = latest.to_relevance();
    let mut grid_ndcg = Vec::with_capacity(grid.values().len());
    let mut best = (f64::NEG_INFINITY, 1.0);
    for &w in grid.values() {
        let candidate = smoothed_scores([r[2], r[3], r[4], r[5]], w);
        let ranking =
            RelevanceVector::new(venue.clone(), target_year - 1, institutions.clone(), candidate).to_ranking();
        let score = ndcg_at(&ranking, &truth, cutoff)?;
        grid_ndcg.push(score);
        if score >= best.0 {
            best = (score, w);
        }
    }
    let (validation_ndcg, chosen_weight) = best;

    let mut scores = smoothed_scores([r[1], r[2], r[3], r[4]], chosen_weight);
    let total: f64 = scores.iter().sum();
    if total <= 0.0 {
        return Err(SmoothError::DegenerateHistory {
            venue: venue.clone(),
            target_year,
        });
    }
    scores.iter_mut().for_each(|s| *s /= total);

    Ok(RankIns1Result {
        relevance: RelevanceVector::new(venue.clone(), target_year, institutions, scores),
        chosen_weight,
        validation_ndcg,
        grid_ndcg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ids(m: usize) -> Arc<[InstitutionId]> {
        (0..m).map(|i| InstitutionId::from(format!("I{i}"))).collect()
    }

    fn history(rows: &[(i32, Vec<f64>)]) -> BTreeMap<i32, ScoreTable> {
        let m = rows[0].1.len();
        let ids = ids(m);
        rows.iter()
            .map(|(y, s)| (*y, ScoreTable::from_scores("V".into(), *y, ids.clone(), s.clone(), 10)))
            .collect()
    }

    #[test]
    fn grid_has_twenty_ascending_values_ending_at_one() {
        let g = SmoothingGrid::default();
        assert_eq!(g.values().len(), 20);
        assert_eq!(g.values()[0], 0.05);
        assert_eq!(*g.values().last().unwrap(), 1.0);
        assert!(g.values().windows(2).all(|w| w[0] < w[1]));
        assert!(SmoothingGrid::uniform(0).is_err());
    }

    #[test]
    fn single_institution_normalizes_to_one() {
        let h = history(&[(2013, vec![0.3]), (2015, vec![0.2])]);
        let res = rankins1(&h, &"V".into(), 2016, 20, &SmoothingGrid::default()).unwrap();
        assert_eq!(res.relevance.values(), &[1.0]);
    }

    #[test]
    fn identical_history_picks_largest_weight() {
        let s = vec![0.5, 0.3, 0.2];
        let h = history(&(2010..=2015).map(|y| (y, s.clone())).collect::<Vec<_>>());
        let res = rankins1(&h, &"V".into(), 2016, 20, &SmoothingGrid::default()).unwrap();
        assert_eq!(res.chosen_weight, 1.0);
        assert_eq!(res.validation_ndcg, 1.0);
        assert_abs_diff_eq!(res.relevance.values().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn only_latest_year_reproduces_previous_year_order() {
        let latest = vec![0.1, 0.4, 0.2, 0.3];
        let h = history(&[(2015, latest.clone())]);
        let res = rankins1(&h, &"V".into(), 2016, 20, &SmoothingGrid::default()).unwrap();
        let ids: Vec<_> = res.relevance.to_ranking().ids().cloned().collect();
        let expected: Vec<_> = ["I1", "I3", "I2", "I0"].map(InstitutionId::from).to_vec();
        assert_eq!(ids, expected);
    }

    #[test]
    fn missing_latest_year_and_zero_history_are_errors() {
        let h = history(&[(2013, vec![0.3, 0.1])]);
        assert!(matches!(
            rankins1(&h, &"V".into(), 2016, 20, &SmoothingGrid::default()),
            Err(SmoothError::MissingHistory { year: 2015, .. })
        ));
        let h = history(&[(2014, vec![0.0, 0.0]), (2015, vec![0.0, 0.0])]);
        assert!(matches!(
            rankins1(&h, &"V".into(), 2016, 20, &SmoothingGrid::default()),
            Err(SmoothError::DegenerateHistory { .. })
        ));
    }

    #[test]
    fn ndcg_of_chosen_weight_is_grid_maximum() {
        let h = history(&[
            (2010, vec![0.1, 0.5, 0.2, 0.2]),
            (2011, vec![0.4, 0.1, 0.3, 0.2]),
            (2012, vec![0.2, 0.2, 0.5, 0.1]),
            (2013, vec![0.3, 0.3, 0.1, 0.3]),
            (2014, vec![0.25, 0.15, 0.35, 0.25]),
            (2015, vec![0.2, 0.4, 0.1, 0.3]),
        ]);
        let res = rankins1(&h, &"V".into(), 2016, 20, &SmoothingGrid::default()).unwrap();
        let max = res.grid_ndcg.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(res.validation_ndcg, max);
        let idx = res.grid_ndcg.iter().rposition(|&v| v == max).unwrap();
        assert_eq!(res.chosen_weight, SmoothingGrid::default().values()[idx]);
    }
}
