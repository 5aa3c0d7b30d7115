//! End-to-end feature-matrix ranking and the validation protocol.
//!
//! [`RankIns2Model::fit`] prepares everything that depends only on the
//! training cutoff: topics, author clusters, yearly entity vectors and the
//! random forest trained on every `(venue, year <= cutoff)` data matrix
//! against that venue-year's ranking scores. Predicting a venue for
//! `cutoff + 1` then learns that venue's year weights, synthesizes the target
//! matrix from the three latest matrices, and runs it through the forest.
//!
//! [`run_validation`] scores each predictor on a year whose truth is known,
//! giving the predictor only data strictly before that year.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::{partition_by_year, Corpus, InstitutionId, VenueId};
use crate::featspace::{build_data_matrix, DataMatrix, EntityVectors, FeatureError, FeatureSpace};
use crate::forest::{self, ForestConfig, ForestError, ForestModel, TrainingSet};
use crate::metrics::{ndcg_at, MetricsError};
use crate::scoring::{previous_year_baseline, RelevanceVector, ScoreBook, ScoringError};
use crate::smoothrank::{rankins1, SmoothError, SmoothingGrid};
use crate::temporal::{learn_weights, synthesize_matrix, LearnedWeights, TemporalConfig, TemporalError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("venue `{0}` is not in the corpus")]
    UnknownVenue(String),
    #[error("previous-year baseline: {0}")]
    Baseline(#[from] ScoringError),
    #[error("smoothing ranker: {0}")]
    Smoothing(#[from] SmoothError),
    #[error("feature matrices: {0}")]
    Features(#[from] FeatureError),
    #[error("temporal weights for `{venue}`: {source}")]
    Temporal {
        venue: VenueId,
        #[source]
        source: TemporalError,
    },
    #[error("random forest: {0}")]
    Forest(String),
    #[error("evaluation: {0}")]
    Metrics(#[from] MetricsError),
    #[error("no truth for venue `{venue}` in {year}")]
    MissingTruth { venue: VenueId, year: i32 },
    #[error("experiment plan: {0}")]
    Plan(String),
}

impl From<ForestError> for PipelineError {
    fn from(e: ForestError) -> Self {
        PipelineError::Forest(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankIns2Config {
    /// Requested author cluster count `K` (clamped to the author count).
    pub clusters: usize,
    pub cluster_seed: u64,
    pub temporal: TemporalConfig,
    pub forest: ForestConfig,
    /// Train one forest per venue instead of one shared forest.
    pub per_venue_forest: bool,
}

impl Default for RankIns2Config {
    fn default() -> Self {
        Self {
            clusters: 500,
            cluster_seed: 0,
            temporal: TemporalConfig::default(),
            forest: ForestConfig::default(),
            per_venue_forest: false,
        }
    }
}

#[derive(Debug, Clone)]
enum Forests {
    Shared(ForestModel),
    PerVenue(BTreeMap<VenueId, ForestModel>),
}

/// Everything the feature-matrix ranker learns up to one cutoff year.
#[derive(Debug, Clone)]
pub struct RankIns2Model {
    cutoff: i32,
    config: RankIns2Config,
    institutions: Arc<[InstitutionId]>,
    space: FeatureSpace,
    vectors: BTreeMap<i32, EntityVectors>,
    forests: Forests,
}

/// A target-year prediction with the weights that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct RankIns2Prediction {
    pub relevance: RelevanceVector,
    pub weights: LearnedWeights,
}

impl RankIns2Model {
    /// Fits on papers of years `<= cutoff` only.
    pub fn fit(corpus: &Corpus, book: &ScoreBook, cutoff: i32, config: &RankIns2Config) -> Result<Self, PipelineError> {
        let space = FeatureSpace::fit(corpus, cutoff, config.clusters, config.cluster_seed);
        let years: Vec<i32> = partition_by_year(corpus).into_keys().filter(|&y| y <= cutoff).collect();
        let vectors = space.vectors_by_year(corpus, years);
        let institutions = corpus.tracked().clone();

        let mut model = Self {
            cutoff,
            config: config.clone(),
            institutions,
            space,
            vectors,
            forests: Forests::PerVenue(BTreeMap::new()),
        };

        let mut pools: BTreeMap<Option<VenueId>, TrainingSet> = BTreeMap::new();
        for venue in corpus.venues() {
            let key = config.per_venue_forest.then(|| venue.id.clone());
            for (&year, table) in book.history(&venue.id).range(..=cutoff) {
                let matrix = model.matrix(&venue.id, year)?;
                pools
                    .entry(key.clone())
                    .or_insert_with(|| TrainingSet::new(model.space.dim()))
                    .push_matrix(&matrix, &model.institutions, table.scores())?;
            }
        }

        model.forests = if config.per_venue_forest {
            Forests::PerVenue(
                pools
                    .into_iter()
                    .map(|(k, set)| {
                        let forest = forest::train(&set, &config.forest)?;
                        Ok((k.expect("per-venue key"), forest))
                    })
                    .collect::<Result<_, PipelineError>>()?,
            )
        } else {
            let set = pools
                .remove(&None)
                .unwrap_or_else(|| TrainingSet::new(model.space.dim()));
            Forests::Shared(forest::train(&set, &config.forest)?)
        };
        Ok(model)
    }

    pub fn cutoff(&self) -> i32 {
        self.cutoff
    }

    pub fn feature_space(&self) -> &FeatureSpace {
        &self.space
    }

    /// Data matrix of `venue` in `year` (a year with papers, `<= cutoff`).
    pub fn matrix(&self, venue: &VenueId, year: i32) -> Result<DataMatrix, PipelineError> {
        let snapshot = self.vectors.get(&year).ok_or_else(|| PipelineError::Temporal {
            venue: venue.clone(),
            source: TemporalError::MissingHistory { years: vec![year] },
        })?;
        let venue_vector = snapshot
            .venues
            .get(venue)
            .ok_or_else(|| PipelineError::UnknownVenue(venue.to_string()))?;
        Ok(build_data_matrix(venue, year, &snapshot.institutions, venue_vector)?)
    }

    /// Data matrices of `venue` for every year with papers up to the cutoff.
    pub fn matrices(&self, venue: &VenueId) -> Result<BTreeMap<i32, DataMatrix>, PipelineError> {
        self.vectors.keys().map(|&y| Ok((y, self.matrix(venue, y)?))).collect()
    }

    /// Predicts `venue` for the year after the cutoff.
    pub fn predict(&self, venue: &VenueId) -> Result<RankIns2Prediction, PipelineError> {
        let temporal_err = |source| PipelineError::Temporal {
            venue: venue.clone(),
            source,
        };
        let matrices = self.matrices(venue)?;
        let weights = learn_weights(&matrices, self.cutoff, &self.config.temporal).map_err(temporal_err)?;
        let lags = [0, 1, 2].map(|lag| &matrices[&(self.cutoff - lag)]);
        let target = synthesize_matrix(weights.final_weights(), lags).map_err(temporal_err)?;
        let forest = match &self.forests {
            Forests::Shared(f) => f,
            Forests::PerVenue(map) => map
                .get(venue)
                .ok_or_else(|| PipelineError::Forest(format!("no training data for venue `{venue}`")))?,
        };
        let relevance = forest::predict(forest, &target, &self.institutions)?;
        Ok(RankIns2Prediction { relevance, weights })
    }
}

/// Feature-matrix ranking of `venue` for `target_year`, trained on data up to
/// `target_year - 1`.
pub fn rankins2(
    corpus: &Corpus,
    venue: &VenueId,
    target_year: i32,
    config: &RankIns2Config,
) -> Result<RankIns2Prediction, PipelineError> {
    if !corpus.venues().iter().any(|v| &v.id == venue) {
        return Err(PipelineError::UnknownVenue(venue.to_string()));
    }
    let book = ScoreBook::from_corpus(corpus);
    RankIns2Model::fit(corpus, &book, target_year - 1, config)?.predict(venue)
}

/// A prediction plus a human-readable note on what was chosen.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub relevance: RelevanceVector,
    pub params: String,
}

/// Anything that can rank a venue's institutions for a target year.
pub trait Predictor: Sync {
    fn name(&self) -> &str;

    fn predict(
        &self,
        corpus: &Corpus,
        book: &ScoreBook,
        venue: &VenueId,
        target_year: i32,
    ) -> Result<Prediction, PipelineError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    PreviousYear,
    RankIns1,
    RankIns2,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::PreviousYear, Method::RankIns1, Method::RankIns2];

    pub fn name(self) -> &'static str {
        match self {
            Method::PreviousYear => "previous-year",
            Method::RankIns1 => "rankins1",
            Method::RankIns2 => "rankins2",
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown method `{s}` (expected previous-year, rankins1 or rankins2)"))
    }
}

fn before(book: &ScoreBook, venue: &VenueId, year: i32) -> BTreeMap<i32, crate::ScoreTable> {
    book.history(venue)
        .range(..year)
        .map(|(y, t)| (*y, t.clone()))
        .collect()
}

pub struct PreviousYearPredictor;

impl Predictor for PreviousYearPredictor {
    fn name(&self) -> &str {
        Method::PreviousYear.name()
    }

    fn predict(
        &self,
        _: &Corpus,
        book: &ScoreBook,
        venue: &VenueId,
        target_year: i32,
    ) -> Result<Prediction, PipelineError> {
        let relevance = previous_year_baseline(&before(book, venue, target_year), venue, target_year)?;
        Ok(Prediction {
            relevance,
            params: String::new(),
        })
    }
}

pub struct RankIns1Predictor {
    pub cutoff: usize,
    pub grid: SmoothingGrid,
}

impl Predictor for RankIns1Predictor {
    fn name(&self) -> &str {
        Method::RankIns1.name()
    }

    fn predict(
        &self,
        _: &Corpus,
        book: &ScoreBook,
        venue: &VenueId,
        target_year: i32,
    ) -> Result<Prediction, PipelineError> {
        let res = rankins1(
            &before(book, venue, target_year),
            venue,
            target_year,
            self.cutoff,
            &self.grid,
        )?;
        Ok(Prediction {
            relevance: res.relevance,
            params: format!("w={};held_out_ndcg={}", res.chosen_weight, res.validation_ndcg),
        })
    }
}

/// Caches one fitted model per cutoff year.
pub struct RankIns2Predictor {
    config: RankIns2Config,
    models: Mutex<HashMap<i32, Arc<Result<RankIns2Model, PipelineError>>>>,
}

impl RankIns2Predictor {
    pub fn new(config: RankIns2Config) -> Self {
        Self {
            config,
            models: Mutex::new(HashMap::new()),
        }
    }

    pub fn model(&self, corpus: &Corpus, book: &ScoreBook, cutoff: i32) -> Arc<Result<RankIns2Model, PipelineError>> {
        let mut models = self.models.lock().expect("model cache poisoned");
        models
            .entry(cutoff)
            .or_insert_with(|| Arc::new(RankIns2Model::fit(corpus, book, cutoff, &self.config)))
            .clone()
    }

    pub fn predict_full(
        &self,
        corpus: &Corpus,
        book: &ScoreBook,
        venue: &VenueId,
        target_year: i32,
    ) -> Result<RankIns2Prediction, PipelineError> {
        match &*self.model(corpus, book, target_year - 1) {
            Ok(model) => model.predict(venue),
            Err(e) => Err(e.clone()),
        }
    }
}

impl Predictor for RankIns2Predictor {
    fn name(&self) -> &str {
        Method::RankIns2.name()
    }

    fn predict(
        &self,
        corpus: &Corpus,
        book: &ScoreBook,
        venue: &VenueId,
        target_year: i32,
    ) -> Result<Prediction, PipelineError> {
        let p = self.predict_full(corpus, book, venue, target_year)?;
        Ok(Prediction {
            relevance: p.relevance,
            params: format!("w={}", p.weights.final_weights()),
        })
    }
}

/// Returns the true scores of the target year. A sanity check for the
/// evaluation harness: it reads the year it predicts.
pub struct OraclePredictor;

impl Predictor for OraclePredictor {
    fn name(&self) -> &str {
        "oracle"
    }

    fn predict(
        &self,
        _: &Corpus,
        book: &ScoreBook,
        venue: &VenueId,
        target_year: i32,
    ) -> Result<Prediction, PipelineError> {
        let table = book
            .get(venue, target_year)
            .ok_or_else(|| PipelineError::MissingTruth {
                venue: venue.clone(),
                year: target_year,
            })?;
        Ok(Prediction {
            relevance: table.to_relevance(),
            params: String::new(),
        })
    }
}

/// Hyperparameters of all three built-in methods.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSettings {
    /// NDCG cutoff `n`, also used by the smoothing ranker's grid search.
    pub cutoff: usize,
    pub grid: SmoothingGrid,
    pub rankins2: RankIns2Config,
}

impl Default for MethodSettings {
    fn default() -> Self {
        Self {
            cutoff: 20,
            grid: SmoothingGrid::default(),
            rankins2: RankIns2Config::default(),
        }
    }
}

impl MethodSettings {
    pub fn predictor(&self, method: Method) -> Box<dyn Predictor> {
        match method {
            Method::PreviousYear => Box::new(PreviousYearPredictor),
            Method::RankIns1 => Box::new(RankIns1Predictor {
                cutoff: self.cutoff,
                grid: self.grid.clone(),
            }),
            Method::RankIns2 => Box::new(RankIns2Predictor::new(self.rankins2.clone())),
        }
    }

    pub fn predictors(&self, methods: &[Method]) -> Vec<Box<dyn Predictor>> {
        methods.iter().map(|&m| self.predictor(m)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Phase {
    pub number: u32,
    /// Venue ids or abbreviations.
    pub venues: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExperimentPlan {
    pub phases: Vec<Phase>,
    pub target_year: i32,
    pub validation_year: i32,
    pub cutoff: usize,
}

impl ExperimentPlan {
    /// The default three-phase layout: SIGIR, SIGMOD, SIGCOMM; KDD, ICML; FSE,
    /// MobiCom, MM.
    pub fn standard(target_year: i32, validation_year: i32) -> Self {
        let phase = |number, venues: &[&str]| Phase {
            number,
            venues: venues.iter().map(|v| v.to_string()).collect(),
        };
        Self {
            phases: vec![
                phase(1, &["SIGIR", "SIGMOD", "SIGCOMM"]),
                phase(2, &["KDD", "ICML"]),
                phase(3, &["FSE", "MobiCom", "MM"]),
            ],
            target_year,
            validation_year,
            cutoff: 20,
        }
    }

    /// Keeps only venues present in `corpus`, dropping emptied phases.
    pub fn restricted_to(&self, corpus: &Corpus) -> Self {
        let phases = self
            .phases
            .iter()
            .map(|p| Phase {
                number: p.number,
                venues: p
                    .venues
                    .iter()
                    .filter(|v| corpus.resolve_venue(v).is_some())
                    .cloned()
                    .collect(),
            })
            .filter(|p| !p.venues.is_empty())
            .collect();
        Self { phases, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.validation_year >= self.target_year {
            return Err(PipelineError::Plan(format!(
                "validation year {} must precede target year {}",
                self.validation_year, self.target_year
            )));
        }
        if self.cutoff == 0 {
            return Err(PipelineError::Plan("cutoff must be at least 1".into()));
        }
        Ok(())
    }

    /// Parses `key=value` lines: `target_year`, `validation_year`, `cutoff`,
    /// and repeated `phase=<number>:<venue>,<venue>`. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        let mut plan = ExperimentPlan {
            phases: Vec::new(),
            ..Self::standard(2016, 2015)
        };
        let bad = |line: usize, msg: &str| PipelineError::Plan(format!("line {line}: {msg}"));
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| bad(i + 1, "expected key=value"))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "target_year" => plan.target_year = value.parse().map_err(|_| bad(i + 1, "bad year"))?,
                "validation_year" => plan.validation_year = value.parse().map_err(|_| bad(i + 1, "bad year"))?,
                "cutoff" => plan.cutoff = value.parse().map_err(|_| bad(i + 1, "bad cutoff"))?,
                "phase" => {
                    let (num, venues) = value
                        .split_once(':')
                        .ok_or_else(|| bad(i + 1, "expected phase=<n>:<venues>"))?;
                    plan.phases.push(Phase {
                        number: num.trim().parse().map_err(|_| bad(i + 1, "bad phase number"))?,
                        venues: venues
                            .split(',')
                            .map(str::trim)
                            .filter(|v| !v.is_empty())
                            .map(str::to_owned)
                            .collect(),
                    });
                }
                other => return Err(bad(i + 1, &format!("unknown key `{other}`"))),
            }
        }
        if plan.phases.is_empty() {
            plan.phases = Self::standard(plan.target_year, plan.validation_year).phases;
        }
        plan.validate()?;
        Ok(plan)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub ndcg: f64,
    pub top: Vec<(InstitutionId, f64)>,
    pub params: String,
}

/// One (venue, method) evaluation; failures are kept, not raised.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub phase: u32,
    pub venue: String,
    pub method: String,
    pub outcome: Result<CellResult, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub validation_year: i32,
    pub cutoff: usize,
    pub cells: Vec<Cell>,
}

fn field(s: &str) -> String {
    s.replace(['\t', '\n'], " ")
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

impl EvaluationReport {
    pub fn all_failed(&self) -> bool {
        self.cells.iter().all(|c| c.outcome.is_err())
    }

    /// `phase, venue, method, ndcg, params, top, error` with a header row.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("phase\tvenue\tmethod\tndcg\tparams\ttop\terror\n");
        for c in &self.cells {
            match &c.outcome {
                Ok(r) => {
                    let top: Vec<String> = r.top.iter().map(|(id, s)| format!("{id}:{s}")).collect();
                    let _ = writeln!(
                        out,
                        "{}\t{}\t{}\t{}\t{}\t{}\t",
                        c.phase,
                        field(&c.venue),
                        c.method,
                        r.ndcg,
                        field(&r.params),
                        top.join(";")
                    );
                }
                Err(e) => {
                    let _ = writeln!(
                        out,
                        "{}\t{}\t{}\t\t\t\t{}",
                        c.phase,
                        field(&c.venue),
                        c.method,
                        field(e)
                    );
                }
            }
        }
        out
    }

    /// Plot-ready `venue,method,ndcg,status`; failed cells have an empty ndcg.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("venue,method,ndcg,status\n");
        for c in &self.cells {
            let (ndcg, status) = match &c.outcome {
                Ok(r) => (r.ndcg.to_string(), "ok".to_owned()),
                Err(e) => (String::new(), format!("error: {e}")),
            };
            let _ = writeln!(
                out,
                "{},{},{ndcg},{}",
                csv_field(&c.venue),
                csv_field(&c.method),
                csv_field(&status)
            );
        }
        out
    }

    pub fn ndcg(&self, venue: &str, method: &str) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.venue == venue && c.method == method)
            .and_then(|c| c.outcome.as_ref().ok())
            .map(|r| r.ndcg)
    }
}

fn evaluate_cell(
    corpus: &Corpus,
    book: &ScoreBook,
    plan: &ExperimentPlan,
    venue_name: &str,
    predictor: &dyn Predictor,
) -> Result<CellResult, PipelineError> {
    let venue = corpus
        .resolve_venue(venue_name)
        .ok_or_else(|| PipelineError::UnknownVenue(venue_name.to_owned()))?;
    let year = plan.validation_year;
    let truth = book
        .get(venue, year)
        .ok_or_else(|| PipelineError::MissingTruth {
            venue: venue.clone(),
            year,
        })?
        .to_relevance();
    let prediction = predictor.predict(corpus, book, venue, year)?;
    let ranking = prediction.relevance.to_ranking();
    let ndcg = ndcg_at(&ranking, &truth, plan.cutoff)?;
    Ok(CellResult {
        ndcg,
        top: ranking.top(plan.cutoff).to_vec(),
        params: prediction.params,
    })
}

/// Scores every predictor on every plan venue for the plan's validation year.
pub fn run_validation(
    corpus: &Corpus,
    plan: &ExperimentPlan,
    predictors: &[&dyn Predictor],
) -> Result<EvaluationReport, PipelineError> {
    plan.validate()?;
    let book = ScoreBook::from_corpus(corpus);
    let jobs: Vec<(u32, &str, &dyn Predictor)> = plan
        .phases
        .iter()
        .flat_map(|p| p.venues.iter().map(move |v| (p.number, v.as_str())))
        .flat_map(|(n, v)| predictors.iter().map(move |&p| (n, v, p)))
        .collect();
    let cells = jobs
        .into_par_iter()
        .map(|(phase, venue, predictor)| Cell {
            phase,
            venue: venue.to_owned(),
            method: predictor.name().to_owned(),
            outcome: evaluate_cell(corpus, &book, plan, venue, predictor).map_err(|e| e.to_string()),
        })
        .collect();
    Ok(EvaluationReport {
        validation_year: plan.validation_year,
        cutoff: plan.cutoff,
        cells,
    })
}
