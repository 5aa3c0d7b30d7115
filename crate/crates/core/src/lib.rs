//! Institution ranking for academic venues.
//!
//! Given a bibliographic corpus of accepted papers (venue, year, authors and
//! their affiliations, keywords), the crate predicts each tracked
//! institution's share of next year's accepted papers at a venue and
//! evaluates those predictions with NDCG@n.
//!
//! Three predictors are provided:
//!
//! * [`scoring::previous_year_baseline`]: last year's shares, verbatim.
//! * [`smoothrank::rankins1`]: a geometrically decaying sum of the four
//!   preceding years, with the decay picked by grid search on NDCG.
//! * [`pipeline::rankins2`]: institution/venue feature matrices, year weights
//!   learned by (regularized) least squares, and a random-forest regressor.

pub mod cli;
pub mod corpus;
pub mod featspace;
pub mod forest;
pub mod manifest;
pub mod metrics;
pub mod pipeline;
pub mod scoring;
pub mod smoothrank;
pub mod temporal;

pub use corpus::{AuthorId, Corpus, InstitutionId, PaperId, PaperRecord, VenueId};
pub use metrics::{dcg_at, ndcg_at, Ranking};
pub use scoring::{RelevanceVector, ScoreTable};
