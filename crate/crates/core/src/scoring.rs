//! Fractional institution credit and the PreviousYear baseline.
//!
//! Every accepted paper carries one unit of credit. The unit is split equally
//! among the paper's authors, and each author's share is split equally among
//! that author's affiliations. Authors without affiliation still take their
//! slice of the paper; that slice reaches no institution.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

use crate::corpus::{partition_by_year, AuthorId, Corpus, InstitutionId, PaperRecord, VenueId, YearSlice};
use crate::metrics::Ranking;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoringError {
    #[error("no score table for venue `{venue}` in year {year}")]
    MissingHistory { venue: VenueId, year: i32 },
}

/// One indivisible piece of a paper's credit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CreditAtom<'a> {
    pub author: &'a AuthorId,
    /// `None` for an unaffiliated author.
    pub institution: Option<&'a InstitutionId>,
    pub credit: f64,
}

/// Splits one paper's unit credit into per-(author, institution) atoms.
pub fn credit_atoms(paper: &PaperRecord) -> impl Iterator<Item = CreditAtom<'_>> {
    let per_author = 1.0 / paper.authorships.len() as f64;
    paper.authorships.iter().flat_map(move |a| {
        let n = a.institutions.len();
        let atoms: Vec<CreditAtom<'_>> = if n == 0 {
            vec![CreditAtom {
                author: &a.author,
                institution: None,
                credit: per_author,
            }]
        } else {
            let each = per_author / n as f64;
            a.institutions
                .iter()
                .map(|i| CreditAtom {
                    author: &a.author,
                    institution: Some(i),
                    credit: each,
                })
                .collect()
        };
        atoms
    })
}

/// Per-institution credit of one paper plus the unaffiliated remainder.
#[derive(Debug, Clone, PartialEq)]
pub struct PaperCredit {
    pub institutions: BTreeMap<InstitutionId, f64>,
    pub unaffiliated: f64,
}

impl PaperCredit {
    pub fn total(&self) -> f64 {
        self.institutions.values().sum::<f64>() + self.unaffiliated
    }
}

pub fn paper_credit(paper: &PaperRecord) -> PaperCredit {
    let mut out = PaperCredit {
        institutions: BTreeMap::new(),
        unaffiliated: 0.0,
    };
    for atom in credit_atoms(paper) {
        match atom.institution {
            Some(i) => *out.institutions.entry(i.clone()).or_insert(0.0) += atom.credit,
            None => out.unaffiliated += atom.credit,
        }
    }
    out
}

/// Ranking scores of the tracked institutions for one venue-year.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    venue: VenueId,
    year: i32,
    institutions: Arc<[InstitutionId]>,
    scores: Vec<f64>,
    paper_count: usize,
}

impl ScoreTable {
    /// Builds a table from dense scores aligned with `institutions`.
    pub fn from_scores(
        venue: VenueId,
        year: i32,
        institutions: Arc<[InstitutionId]>,
        scores: Vec<f64>,
        paper_count: usize,
    ) -> Self {
        assert_eq!(institutions.len(), scores.len(), "score vector length");
        Self {
            venue,
            year,
            institutions,
            scores,
            paper_count,
        }
    }

    pub fn venue(&self) -> &VenueId {
        &self.venue
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn paper_count(&self) -> usize {
        self.paper_count
    }

    pub fn institutions(&self) -> &Arc<[InstitutionId]> {
        &self.institutions
    }

    /// Dense scores in tracked-institution order.
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Score of an institution; 0 for institutions without credit or untracked.
    pub fn score(&self, id: &str) -> f64 {
        self.institutions
            .iter()
            .position(|i| i.as_str() == id)
            .map_or(0.0, |row| self.scores[row])
    }

    /// The table read as true relevance for `target_year == self.year()`.
    pub fn to_relevance(&self) -> RelevanceVector {
        RelevanceVector::new(
            self.venue.clone(),
            self.year,
            self.institutions.clone(),
            self.scores.clone(),
        )
    }

    /// `[venue_id, year, institution_id, score]` rows, descending score then
    /// ascending id. Zero scores are omitted.
    pub fn to_tsv(&self) -> String {
        let mut rows: Vec<(&InstitutionId, f64)> = self
            .institutions
            .iter()
            .zip(&self.scores)
            .filter(|(_, &s)| s > 0.0)
            .map(|(i, &s)| (i, s))
            .collect();
        rows.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let mut out = String::new();
        for (id, s) in rows {
            let _ = writeln!(out, "{}\t{}\t{id}\t{s}", self.venue, self.year);
        }
        out
    }
}

/// Accumulates fractional credit of `venue`'s papers in `slice`, divided by
/// the venue-year paper count.
pub fn compute_scores(slice: &YearSlice<'_>, venue: &VenueId, tracked: &Arc<[InstitutionId]>) -> ScoreTable {
    let index: HashMap<&str, usize> = tracked.iter().enumerate().map(|(row, id)| (id.as_str(), row)).collect();
    let mut credit = vec![0.0; tracked.len()];
    let mut paper_count = 0usize;
    for paper in slice.venue_papers(venue) {
        paper_count += 1;
        for atom in credit_atoms(paper) {
            if let Some(&row) = atom.institution.and_then(|i| index.get(i.as_str())) {
                credit[row] += atom.credit;
            }
        }
    }
    if paper_count > 0 {
        let n = paper_count as f64;
        credit.iter_mut().for_each(|c| *c /= n);
    }
    ScoreTable::from_scores(venue.clone(), slice.year, tracked.clone(), credit, paper_count)
}

/// Score tables of every venue-year that has at least one paper.
#[derive(Debug, Clone, Default)]
pub struct ScoreBook {
    tables: BTreeMap<VenueId, BTreeMap<i32, ScoreTable>>,
}

impl ScoreBook {
    pub fn from_corpus(corpus: &Corpus) -> Self {
        let mut tables: BTreeMap<VenueId, BTreeMap<i32, ScoreTable>> = BTreeMap::new();
        for (year, slice) in partition_by_year(corpus) {
            for venue in corpus.venues() {
                if slice.venue_papers(&venue.id).next().is_none() {
                    continue;
                }
                tables
                    .entry(venue.id.clone())
                    .or_default()
                    .insert(year, compute_scores(&slice, &venue.id, corpus.tracked()));
            }
        }
        Self { tables }
    }

    /// Tables of one venue keyed by year; empty when the venue has no papers.
    pub fn history(&self, venue: &VenueId) -> &BTreeMap<i32, ScoreTable> {
        static EMPTY: BTreeMap<i32, ScoreTable> = BTreeMap::new();
        self.tables.get(venue).unwrap_or(&EMPTY)
    }

    pub fn get(&self, venue: &VenueId, year: i32) -> Option<&ScoreTable> {
        self.tables.get(venue).and_then(|h| h.get(&year))
    }

    pub fn iter(&self) -> impl Iterator<Item = &ScoreTable> {
        self.tables.values().flat_map(|h| h.values())
    }
}

/// Predicted or true relevance of every tracked institution.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceVector {
    pub venue: VenueId,
    pub target_year: i32,
    institutions: Arc<[InstitutionId]>,
    values: Vec<f64>,
}

impl RelevanceVector {
    pub fn new(venue: VenueId, target_year: i32, institutions: Arc<[InstitutionId]>, values: Vec<f64>) -> Self {
        assert_eq!(institutions.len(), values.len(), "relevance vector length");
        Self {
            venue,
            target_year,
            institutions,
            values,
        }
    }

    pub fn institutions(&self) -> &Arc<[InstitutionId]> {
        &self.institutions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&InstitutionId, f64)> {
        self.institutions.iter().zip(self.values.iter().copied())
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.institutions
            .iter()
            .position(|i| i.as_str() == id)
            .map(|row| self.values[row])
    }

    /// Descending order with ties broken by ascending institution id.
    pub fn to_ranking(&self) -> Ranking {
        Ranking::from_scores(self.iter().map(|(i, v)| (i.clone(), v))).expect("tracked institutions are unique")
    }
}

/// Predicts year `target_year` as a verbatim copy of year `target_year - 1`.
pub fn previous_year_baseline(
    history: &BTreeMap<i32, ScoreTable>,
    venue: &VenueId,
    target_year: i32,
) -> Result<RelevanceVector, ScoringError> {
    let prior = history
        .get(&(target_year - 1))
        .ok_or_else(|| ScoringError::MissingHistory {
            venue: venue.clone(),
            year: target_year - 1,
        })?;
    Ok(RelevanceVector::new(
        venue.clone(),
        target_year,
        prior.institutions.clone(),
        prior.scores.clone(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Authorship;
    use approx::assert_abs_diff_eq;

    fn paper(id: &str, authors: &[(&str, &[&str])]) -> PaperRecord {
        PaperRecord {
            id: id.into(),
            year: 2015,
            venue: "KDD".into(),
            keywords: vec![],
            authorships: authors
                .iter()
                .map(|(a, insts)| Authorship {
                    author: (*a).into(),
                    institutions: insts.iter().map(|&i| i.into()).collect(),
                })
                .collect(),
        }
    }

    fn tracked(ids: &[&str]) -> Arc<[InstitutionId]> {
        ids.iter().map(|&i| InstitutionId::from(i)).collect()
    }

    fn table_for(papers: &[PaperRecord], ids: &[&str]) -> ScoreTable {
        let slice = YearSlice::new(2015, papers.iter().collect());
        compute_scores(&slice, &"KDD".into(), &tracked(ids))
    }

    #[test]
    fn single_author_gets_full_credit() {
        let t = table_for(&[paper("p", &[("a", &["A"])])], &["A"]);
        assert_eq!(t.score("A"), 1.0);
        assert_eq!(t.paper_count(), 1);
    }

    #[test]
    fn split_over_authors_then_affiliations() {
        let t = table_for(&[paper("p", &[("a1", &["A", "B"]), ("a2", &["A"])])], &["A", "B"]);
        assert_eq!(t.score("A"), 0.75);
        assert_eq!(t.score("B"), 0.25);
    }

    #[test]
    fn scores_are_divided_by_paper_count() {
        // credits A:2.5 B:1.0 C:0.5 over four papers
        let papers = vec![
            paper("p1", &[("a", &["A"])]),
            paper("p2", &[("a", &["A"])]),
            paper("p3", &[("a", &["A"]), ("b", &["B"])]),
            paper("p4", &[("b", &["B"]), ("c", &["C"])]),
        ];
        let t = table_for(&papers, &["A", "B", "C"]);
        assert_eq!(t.score("A"), 0.625);
        assert_eq!(t.score("B"), 0.25);
        assert_eq!(t.score("C"), 0.125);
    }

    #[test]
    fn unaffiliated_and_untracked_credit_is_lost() {
        let p = paper("p", &[("a", &["A"]), ("b", &[]), ("c", &["Z"])]);
        let credit = paper_credit(&p);
        assert_abs_diff_eq!(credit.total(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(credit.unaffiliated, 1.0 / 3.0);
        let t = table_for(&[p], &["A"]);
        assert_abs_diff_eq!(t.score("A"), 1.0 / 3.0);
    }

    #[test]
    fn empty_venue_year_is_all_zero() {
        let t = table_for(&[], &["A", "B"]);
        assert_eq!(t.paper_count(), 0);
        assert!(t.scores().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn tsv_export_sorted_by_score_then_id() {
        let papers = vec![
            paper("p1", &[("a", &["B"]), ("b", &["A"])]),
            paper("p2", &[("c", &["C"])]),
        ];
        let t = table_for(&papers, &["A", "B", "C", "D"]);
        assert_eq!(
            t.to_tsv(),
            "KDD\t2015\tC\t0.5\nKDD\t2015\tA\t0.25\nKDD\t2015\tB\t0.25\n"
        );
    }

    #[test]
    fn baseline_copies_prior_year() {
        let ids = tracked(&["A", "B"]);
        let mut history = BTreeMap::new();
        history.insert(
            2015,
            ScoreTable::from_scores("KDD".into(), 2015, ids.clone(), vec![0.6, 0.4], 10),
        );
        let rel = previous_year_baseline(&history, &"KDD".into(), 2016).unwrap();
        assert_eq!(rel.values(), &[0.6, 0.4]);
        assert_eq!(rel.target_year, 2016);
        let order: Vec<_> = rel.to_ranking().ids().cloned().collect();
        assert_eq!(order, vec![InstitutionId::from("A"), "B".into()]);

        let err = previous_year_baseline(&history, &"KDD".into(), 2015).unwrap_err();
        assert_eq!(
            err,
            ScoringError::MissingHistory {
                venue: "KDD".into(),
                year: 2014
            }
        );
    }
}
