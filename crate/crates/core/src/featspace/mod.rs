//! Feature vectors and per-venue-year data matrices.
//!
//! Institutions and venues are described by two blocks: the share of their
//! credit that comes from each of `K` author clusters, and the share that
//! falls on each of `s` topics. Both blocks are L1-normalized per entity. The
//! row of institution `k` in venue `b`'s data matrix is the elementwise
//! product of the two entities' vectors, so it is large where the institution
//! and the venue draw on the same author clusters and topics.
//!
//! Topics are the corpus keywords (a paper spreads its mass uniformly over its
//! distinct keywords); author clusters come from k-means over authors' topic
//! profiles. Both are fitted on papers up to a cutoff year only.

mod kmeans;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

use crate::corpus::{AuthorId, Corpus, InstitutionId, PaperRecord, VenueId};
use crate::scoring::credit_atoms;

pub use kmeans::{kmeans, MAX_ITERATIONS as KMEANS_MAX_ITERATIONS};

/// Topic of papers without any known keyword.
pub const UNKNOWN_TOPIC: &str = "<unknown>";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Shape { expected: usize, found: usize },
}

/// Keyword topics observed up to a cutoff year. Topic 0 is [`UNKNOWN_TOPIC`].
#[derive(Debug, Clone, PartialEq)]
pub struct TopicModel {
    upto_year: i32,
    topics: Vec<String>,
    index: HashMap<String, usize>,
}

impl TopicModel {
    pub fn upto_year(&self) -> i32 {
        self.upto_year
    }

    /// Number of topics `s`, including the unknown topic.
    pub fn len(&self) -> usize {
        self.topics.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn topics(&self) -> &[String] {
        &self.topics
    }

    pub fn topic_index(&self, keyword: &str) -> Option<usize> {
        self.index.get(keyword).copied()
    }

    /// Sparse topic distribution of a paper, uniform over its known distinct
    /// keywords. Sums to 1.
    pub fn distribution(&self, paper: &PaperRecord) -> Vec<(usize, f64)> {
        let known: BTreeSet<usize> = paper.keywords.iter().filter_map(|k| self.topic_index(k)).collect();
        if known.is_empty() {
            return vec![(0, 1.0)];
        }
        let w = 1.0 / known.len() as f64;
        known.into_iter().map(|t| (t, w)).collect()
    }
}

/// Builds the keyword vocabulary from papers of years `<= upto_year`.
pub fn fit_topics(corpus: &Corpus, upto_year: i32) -> TopicModel {
    let vocab: BTreeSet<&str> = corpus
        .papers()
        .iter()
        .filter(|p| p.year <= upto_year)
        .flat_map(|p| p.keywords.iter().map(String::as_str))
        .filter(|k| *k != UNKNOWN_TOPIC)
        .collect();
    let topics: Vec<String> = std::iter::once(UNKNOWN_TOPIC).chain(vocab).map(str::to_owned).collect();
    let index = topics.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    TopicModel {
        upto_year,
        topics,
        index,
    }
}

/// Assignment of every author seen up to the topic model's cutoff to one of
/// `k` clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct AuthorClustering {
    k: usize,
    membership: BTreeMap<AuthorId, usize>,
}

impl AuthorClustering {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn cluster_of(&self, author: &AuthorId) -> Option<usize> {
        self.membership.get(author).copied()
    }

    pub fn membership(&self) -> &BTreeMap<AuthorId, usize> {
        &self.membership
    }
}

/// L1-normalized summed topic distributions of each author's papers.
pub fn author_profiles(corpus: &Corpus, topics: &TopicModel) -> BTreeMap<AuthorId, Vec<f64>> {
    let mut profiles: BTreeMap<AuthorId, Vec<f64>> = BTreeMap::new();
    for p in corpus.papers().iter().filter(|p| p.year <= topics.upto_year()) {
        let dist = topics.distribution(p);
        for a in &p.authorships {
            let prof = profiles
                .entry(a.author.clone())
                .or_insert_with(|| vec![0.0; topics.len()]);
            for &(t, w) in &dist {
                prof[t] += w;
            }
        }
    }
    for prof in profiles.values_mut() {
        l1_normalize(prof);
    }
    profiles
}

/// k-means over author topic profiles. `k` is clamped to the author count.
pub fn cluster_authors(corpus: &Corpus, topics: &TopicModel, k: usize, seed: u64) -> AuthorClustering {
    let profiles = author_profiles(corpus, topics);
    let k = k.min(profiles.len());
    if k == 0 {
        return AuthorClustering {
            k: 0,
            membership: BTreeMap::new(),
        };
    }
    let (authors, points): (Vec<AuthorId>, Vec<Vec<f64>>) = profiles.into_iter().unzip();
    let assignment = kmeans(&points, k, seed);
    AuthorClustering {
        k,
        membership: authors.into_iter().zip(assignment).collect(),
    }
}

fn l1_normalize(v: &mut [f64]) {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        v.iter_mut().for_each(|x| *x /= total);
    }
}

/// An institution or venue described over author clusters and topics.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub author_block: Vec<f64>,
    pub topic_block: Vec<f64>,
}

impl FeatureVector {
    pub fn zeros(k: usize, s: usize) -> Self {
        Self {
            author_block: vec![0.0; k],
            topic_block: vec![0.0; s],
        }
    }

    pub fn dim(&self) -> usize {
        self.author_block.len() + self.topic_block.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.author_block.iter().chain(&self.topic_block).copied()
    }

    pub fn is_zero(&self) -> bool {
        self.iter().all(|x| x == 0.0)
    }

    fn normalize(&mut self) {
        l1_normalize(&mut self.author_block);
        l1_normalize(&mut self.topic_block);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Entity<'a> {
    Institution(&'a InstitutionId),
    Venue(&'a VenueId),
}

/// Fitted topics and author clusters for one training cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpace {
    topics: TopicModel,
    clustering: AuthorClustering,
}

impl FeatureSpace {
    pub fn fit(corpus: &Corpus, cutoff_year: i32, clusters: usize, seed: u64) -> Self {
        let topics = fit_topics(corpus, cutoff_year);
        let clustering = cluster_authors(corpus, &topics, clusters, seed);
        Self { topics, clustering }
    }

    pub fn from_parts(topics: TopicModel, clustering: AuthorClustering) -> Self {
        Self { topics, clustering }
    }

    pub fn topics(&self) -> &TopicModel {
        &self.topics
    }

    pub fn clustering(&self) -> &AuthorClustering {
        &self.clustering
    }

    pub fn cutoff_year(&self) -> i32 {
        self.topics.upto_year()
    }

    /// `d = K + s`.
    pub fn dim(&self) -> usize {
        self.clustering.k() + self.topics.len()
    }

    /// Adds one paper's unnormalized contribution to every tracked institution
    /// (`rows`) and to its venue.
    fn accumulate(
        &self,
        paper: &PaperRecord,
        tracked: &HashMap<&InstitutionId, usize>,
        rows: &mut [FeatureVector],
        venue: &mut FeatureVector,
    ) {
        let dist = self.topics.distribution(paper);
        let per_author = 1.0 / paper.authorships.len() as f64;
        for a in &paper.authorships {
            if let Some(c) = self.clustering.cluster_of(&a.author) {
                venue.author_block[c] += per_author;
            }
        }
        for &(t, w) in &dist {
            venue.topic_block[t] += w;
        }
        let mut inst_credit: HashMap<usize, f64> = HashMap::new();
        for atom in credit_atoms(paper) {
            let Some(&row) = atom.institution.and_then(|i| tracked.get(i)) else {
                continue;
            };
            if let Some(c) = self.clustering.cluster_of(atom.author) {
                rows[row].author_block[c] += atom.credit;
            }
            *inst_credit.entry(row).or_insert(0.0) += atom.credit;
        }
        for (row, credit) in inst_credit {
            for &(t, w) in &dist {
                rows[row].topic_block[t] += credit * w;
            }
        }
    }

    /// Vector of one entity from papers of years `<= upto_year`.
    pub fn entity_vector(&self, corpus: &Corpus, entity: Entity<'_>, upto_year: i32) -> FeatureVector {
        let (k, s) = (self.clustering.k(), self.topics.len());
        let mut out = FeatureVector::zeros(k, s);
        for p in corpus.papers().iter().filter(|p| p.year <= upto_year) {
            match entity {
                Entity::Venue(v) if &p.venue == v => {
                    let mut unused: [FeatureVector; 0] = [];
                    self.accumulate(p, &HashMap::new(), &mut unused, &mut out);
                }
                Entity::Institution(id) => {
                    let tracked = HashMap::from([(id, 0usize)]);
                    let mut scratch = FeatureVector::zeros(k, s);
                    self.accumulate(p, &tracked, std::slice::from_mut(&mut out), &mut scratch);
                }
                _ => {}
            }
        }
        out.normalize();
        out
    }

    /// Normalized vectors of all tracked institutions and all venues, one
    /// snapshot per year in `years`, each built from papers up to that year.
    pub fn vectors_by_year(
        &self,
        corpus: &Corpus,
        years: impl IntoIterator<Item = i32>,
    ) -> BTreeMap<i32, EntityVectors> {
        let (k, s) = (self.clustering.k(), self.topics.len());
        let tracked: HashMap<&InstitutionId, usize> =
            corpus.tracked().iter().enumerate().map(|(row, id)| (id, row)).collect();
        let mut rows = vec![FeatureVector::zeros(k, s); tracked.len()];
        let mut venues: BTreeMap<VenueId, FeatureVector> = corpus
            .venues()
            .iter()
            .map(|v| (v.id.clone(), FeatureVector::zeros(k, s)))
            .collect();

        let mut papers: Vec<&PaperRecord> = corpus.papers().iter().collect();
        papers.sort_by_key(|p| p.year);
        let mut next = 0;
        let mut out = BTreeMap::new();
        let mut years: Vec<i32> = years.into_iter().collect();
        years.sort_unstable();
        years.dedup();
        for year in years {
            while next < papers.len() && papers[next].year <= year {
                let p = papers[next];
                let venue = venues.get_mut(&p.venue).expect("venue validated by corpus");
                self.accumulate(p, &tracked, &mut rows, venue);
                next += 1;
            }
            let snapshot = EntityVectors {
                institutions: rows
                    .iter()
                    .cloned()
                    .map(|mut v| {
                        v.normalize();
                        v
                    })
                    .collect(),
                venues: venues
                    .iter()
                    .map(|(id, v)| {
                        let mut v = v.clone();
                        v.normalize();
                        (id.clone(), v)
                    })
                    .collect(),
            };
            out.insert(year, snapshot);
        }
        out
    }
}

/// Convenience wrapper over [`FeatureSpace::entity_vector`].
pub fn build_entity_vector(
    corpus: &Corpus,
    entity: Entity<'_>,
    upto_year: i32,
    clustering: &AuthorClustering,
    topics: &TopicModel,
) -> FeatureVector {
    FeatureSpace::from_parts(topics.clone(), clustering.clone()).entity_vector(corpus, entity, upto_year)
}

/// All entity vectors as of one year.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityVectors {
    /// Tracked institutions in row order.
    pub institutions: Vec<FeatureVector>,
    pub venues: BTreeMap<VenueId, FeatureVector>,
}

/// Row-major `m × d` matrix of institution ⊙ venue features.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    pub venue: VenueId,
    pub year: i32,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DataMatrix {
    pub fn new(venue: VenueId, year: i32, rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, FeatureError> {
        if data.len() != rows * cols {
            return Err(FeatureError::Shape {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self {
            venue,
            year,
            rows,
            cols,
            data,
        })
    }

    pub fn zeros(venue: VenueId, year: i32, rows: usize, cols: usize) -> Self {
        Self::new(venue, year, rows, cols, vec![0.0; rows * cols]).expect("consistent shape")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `[institution_id, f_1 .. f_d]` per row.
    pub fn to_tsv(&self, institutions: &Arc<[InstitutionId]>) -> String {
        let mut out = String::new();
        for (i, id) in institutions.iter().enumerate().take(self.rows) {
            out.push_str(id.as_str());
            for x in self.row(i) {
                let _ = write!(out, "\t{x}");
            }
            out.push('\n');
        }
        out
    }
}

/// Row `k` is `institution_vectors[k] ⊙ venue_vector`.
pub fn build_data_matrix(
    venue: &VenueId,
    year: i32,
    institution_vectors: &[FeatureVector],
    venue_vector: &FeatureVector,
) -> Result<DataMatrix, FeatureError> {
    let d = venue_vector.dim();
    let mut data = Vec::with_capacity(institution_vectors.len() * d);
    for v in institution_vectors {
        if v.dim() != d || v.author_block.len() != venue_vector.author_block.len() {
            return Err(FeatureError::Shape {
                expected: d,
                found: v.dim(),
            });
        }
        data.extend(v.iter().zip(venue_vector.iter()).map(|(a, b)| a * b));
    }
    DataMatrix::new(venue.clone(), year, institution_vectors.len(), d, data)
}
