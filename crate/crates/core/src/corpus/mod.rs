//! Bibliographic corpus: papers, tracked institutions and venues.
//!
//! A [`Corpus`] is immutable once built. The order of the tracked institution
//! list is significant: it fixes the row order of every score vector and data
//! matrix derived from the corpus.

mod synth;
mod tsv;

use std::borrow::Borrow;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use synth::{generate_synthetic, SynthConfig, DEFAULT_VENUES};
pub use tsv::{load_corpus, write_corpus, CorpusPaths};

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }

        impl Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }
    };
}

string_id!(
    /// Opaque paper identifier.
    PaperId
);
string_id!(
    /// Opaque author identifier.
    AuthorId
);
string_id!(
    /// Opaque institution identifier.
    InstitutionId
);
string_id!(
    /// Opaque venue (conference) identifier.
    VenueId
);

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read or write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {reason}")]
    Malformed { file: PathBuf, line: usize, reason: String },
    #[error("{file}:{line}: unknown paper id `{id}`")]
    UnknownPaper { file: PathBuf, line: usize, id: String },
    #[error("paper `{paper}` references unknown venue `{venue}`")]
    UnknownVenue { paper: String, venue: String },
    #[error("paper `{0}` has no authors")]
    NoAuthors(String),
    #[error("paper `{paper}` lists author `{author}` twice")]
    DuplicateAuthor { paper: String, author: String },
    #[error("duplicate {kind} id `{id}`")]
    DuplicateId { kind: &'static str, id: String },
    #[error("cannot serialize {what} `{value}`: contains a reserved character")]
    Unwritable { what: &'static str, value: String },
    #[error("invalid synthetic corpus configuration: {0}")]
    Config(String),
}

/// One author's participation in a paper.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Authorship {
    pub author: AuthorId,
    /// Affiliated institutions; may be empty for unaffiliated authors.
    pub institutions: Vec<InstitutionId>,
}

/// One accepted paper.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaperRecord {
    pub id: PaperId,
    pub year: i32,
    pub venue: VenueId,
    pub keywords: Vec<String>,
    pub authorships: Vec<Authorship>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Venue {
    pub id: VenueId,
    pub abbreviation: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    papers: Vec<PaperRecord>,
    tracked: Arc<[InstitutionId]>,
    institution_names: Vec<String>,
    tracked_index: HashMap<InstitutionId, usize>,
    venues: Vec<Venue>,
    untracked: BTreeSet<InstitutionId>,
    year_range: Option<(i32, i32)>,
}

impl Corpus {
    /// Builds a corpus, validating ids and references.
    ///
    /// `institutions` is the tracked list `(id, display name)` in row order.
    pub fn new(
        institutions: Vec<(InstitutionId, String)>,
        venues: Vec<Venue>,
        papers: Vec<PaperRecord>,
    ) -> Result<Self, CorpusError> {
        let mut tracked_index = HashMap::with_capacity(institutions.len());
        let mut tracked = Vec::with_capacity(institutions.len());
        let mut institution_names = Vec::with_capacity(institutions.len());
        for (row, (id, name)) in institutions.into_iter().enumerate() {
            if tracked_index.insert(id.clone(), row).is_some() {
                return Err(CorpusError::DuplicateId {
                    kind: "institution",
                    id: id.to_string(),
                });
            }
            tracked.push(id);
            institution_names.push(name);
        }

        let mut venue_ids = HashSet::with_capacity(venues.len());
        for v in &venues {
            if !venue_ids.insert(v.id.clone()) {
                return Err(CorpusError::DuplicateId {
                    kind: "venue",
                    id: v.id.to_string(),
                });
            }
        }

        let mut paper_ids = HashSet::with_capacity(papers.len());
        let mut untracked = BTreeSet::new();
        let mut year_range: Option<(i32, i32)> = None;
        for p in &papers {
            if !paper_ids.insert(p.id.clone()) {
                return Err(CorpusError::DuplicateId {
                    kind: "paper",
                    id: p.id.to_string(),
                });
            }
            if !venue_ids.contains(&p.venue) {
                return Err(CorpusError::UnknownVenue {
                    paper: p.id.to_string(),
                    venue: p.venue.to_string(),
                });
            }
            if p.authorships.is_empty() {
                return Err(CorpusError::NoAuthors(p.id.to_string()));
            }
            let mut seen = HashSet::with_capacity(p.authorships.len());
            for a in &p.authorships {
                if !seen.insert(&a.author) {
                    return Err(CorpusError::DuplicateAuthor {
                        paper: p.id.to_string(),
                        author: a.author.to_string(),
                    });
                }
                for inst in &a.institutions {
                    if !tracked_index.contains_key(inst) {
                        untracked.insert(inst.clone());
                    }
                }
            }
            year_range = Some(match year_range {
                None => (p.year, p.year),
                Some((lo, hi)) => (lo.min(p.year), hi.max(p.year)),
            });
        }

        Ok(Self {
            papers,
            tracked: tracked.into(),
            institution_names,
            tracked_index,
            venues,
            untracked,
            year_range,
        })
    }

    pub fn papers(&self) -> &[PaperRecord] {
        &self.papers
    }

    /// Tracked institutions in row order.
    pub fn tracked(&self) -> &Arc<[InstitutionId]> {
        &self.tracked
    }

    pub fn institution_name(&self, row: usize) -> &str {
        &self.institution_names[row]
    }

    /// Row of a tracked institution, `None` when untracked or unknown.
    pub fn tracked_row(&self, id: &InstitutionId) -> Option<usize> {
        self.tracked_index.get(id).copied()
    }

    pub fn is_tracked(&self, id: &InstitutionId) -> bool {
        self.tracked_index.contains_key(id)
    }

    /// Institutions that appear in affiliations but not in the tracked list.
    pub fn untracked(&self) -> &BTreeSet<InstitutionId> {
        &self.untracked
    }

    pub fn venues(&self) -> &[Venue] {
        &self.venues
    }

    /// Resolves a venue by id first, then by abbreviation (case-insensitive).
    pub fn resolve_venue(&self, name: &str) -> Option<&VenueId> {
        self.venues
            .iter()
            .find(|v| v.id.as_str() == name)
            .or_else(|| self.venues.iter().find(|v| v.abbreviation.eq_ignore_ascii_case(name)))
            .map(|v| &v.id)
    }

    /// Inclusive `(min_year, max_year)` over all papers.
    pub fn year_range(&self) -> Option<(i32, i32)> {
        self.year_range
    }

    /// Papers of years `<= last_year`; institutions and venues are kept.
    pub fn truncated(&self, last_year: i32) -> Corpus {
        let papers = self.papers.iter().filter(|p| p.year <= last_year).cloned().collect();
        let institutions = self
            .tracked
            .iter()
            .cloned()
            .zip(self.institution_names.iter().cloned())
            .collect();
        Corpus::new(institutions, self.venues.clone(), papers).expect("a subset of a valid corpus is valid")
    }
}

/// The papers of one calendar year.
#[derive(Debug, Clone)]
pub struct YearSlice<'a> {
    pub year: i32,
    pub papers: Vec<&'a PaperRecord>,
}

impl<'a> YearSlice<'a> {
    pub fn new(year: i32, papers: Vec<&'a PaperRecord>) -> Self {
        debug_assert!(papers.iter().all(|p| p.year == year));
        Self { year, papers }
    }

    pub fn venue_papers<'s>(&'s self, venue: &'s VenueId) -> impl Iterator<Item = &'a PaperRecord> + 's {
        self.papers.iter().copied().filter(move |p| &p.venue == venue)
    }
}

/// Splits the corpus into disjoint per-year slices, preserving paper order.
pub fn partition_by_year(corpus: &Corpus) -> BTreeMap<i32, YearSlice<'_>> {
    let mut slices: BTreeMap<i32, YearSlice<'_>> = BTreeMap::new();
    for p in corpus.papers() {
        slices
            .entry(p.year)
            .or_insert_with(|| YearSlice {
                year: p.year,
                papers: Vec::new(),
            })
            .papers
            .push(p);
    }
    slices
}
