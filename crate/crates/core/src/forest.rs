//! Random-forest regression.
//!
//! Each tree is grown on a bootstrap resample of the training rows. At every
//! node a random subset of features is searched for the threshold with the
//! largest reduction in squared error. Tree `t` draws all of its randomness
//! from `ChaCha8(seed ^ t)`, and rows are put in canonical key order before
//! sampling, so a trained forest does not depend on the input row order or on
//! the number of worker threads.
//!
//! # Persistence
//!
//! [`ForestModel::to_json_lines`] writes one JSON header line
//! `{"format":"insrank-forest","version":1,"n_features":d,"config":{..}}`
//! followed by one line per tree, `{"nodes":[..]}`, where each node is either
//! `{"leaf":{"value":v}}` or
//! `{"split":{"feature":j,"threshold":t,"left":i,"right":k}}` (child indices
//! into the same array, root at 0). Rows with `x[j] <= t` go left.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::InstitutionId;
use crate::featspace::DataMatrix;
use crate::scoring::RelevanceVector;

const FORMAT: &str = "insrank-forest";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("cannot train on an empty training set")]
    EmptyTraining,
    #[error("feature dimension mismatch: model has {expected}, input has {found}")]
    Shape { expected: usize, found: usize },
    #[error("invalid forest configuration: {0}")]
    Config(String),
    #[error("model file line {line}: {message}")]
    Format { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Fraction of features searched at each split.
    pub feature_fraction: f64,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 8,
            min_leaf: 2,
            feature_fraction: 1.0 / 3.0,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<(), ForestError> {
        if self.n_trees == 0 {
            return Err(ForestError::Config("n_trees must be at least 1".into()));
        }
        if self.min_leaf == 0 {
            return Err(ForestError::Config("min_leaf must be at least 1".into()));
        }
        if !(self.feature_fraction > 0.0 && self.feature_fraction <= 1.0) {
            return Err(ForestError::Config("feature_fraction must lie in (0, 1]".into()));
        }
        Ok(())
    }

    fn features_per_split(&self, dim: usize) -> usize {
        ((self.feature_fraction * dim as f64).ceil() as usize).clamp(1, dim.max(1))
    }
}

/// Canonical sort key of a training row.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct RowKey {
    pub venue: String,
    pub year: i32,
    pub institution: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    dim: usize,
    keys: Vec<RowKey>,
    features: Vec<f64>,
    targets: Vec<f64>,
}

impl TrainingSet {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            keys: Vec::new(),
            features: Vec::new(),
            targets: Vec::new(),
        }
    }

    /// Rows keyed by their position.
    pub fn from_rows(rows: &[Vec<f64>], targets: &[f64]) -> Result<Self, ForestError> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut set = Self::new(dim);
        for (i, (row, &t)) in rows.iter().zip(targets).enumerate() {
            let key = RowKey {
                venue: String::new(),
                year: 0,
                institution: format!("{i:012}"),
            };
            set.push(key, row, t)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, key: RowKey, row: &[f64], target: f64) -> Result<(), ForestError> {
        if row.len() != self.dim {
            return Err(ForestError::Shape {
                expected: self.dim,
                found: row.len(),
            });
        }
        self.keys.push(key);
        self.features.extend_from_slice(row);
        self.targets.push(target);
        Ok(())
    }

    /// Appends every row of `matrix` with the matching entry of `targets`.
    pub fn push_matrix(
        &mut self,
        matrix: &DataMatrix,
        institutions: &[InstitutionId],
        targets: &[f64],
    ) -> Result<(), ForestError> {
        for (i, id) in institutions.iter().enumerate().take(matrix.rows()) {
            let key = RowKey {
                venue: matrix.venue.to_string(),
                year: matrix.year,
                institution: id.to_string(),
            };
            self.push(key, matrix.row(i), targets[i])?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    fn canonical(&self) -> TrainingSet {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.keys[a].cmp(&self.keys[b]));
        let mut out = TrainingSet::new(self.dim);
        for i in order {
            out.keys.push(self.keys[i].clone());
            out.features.extend_from_slice(self.row(i));
            out.targets.push(self.targets[i]);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Running mean; exact when every value is equal.
fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut m = 0.0;
    for (k, x) in values.enumerate() {
        m += (x - m) / (k + 1) as f64;
    }
    m
}

struct Grower<'a> {
    data: &'a TrainingSet,
    config: &'a ForestConfig,
    rng: ChaCha8Rng,
    features: Vec<usize>,
    nodes: Vec<Node>,
    scratch: Vec<(f64, f64)>,
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl Grower<'_> {
    fn grow(&mut self, samples: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let value = mean(samples.iter().map(|&i| self.data.targets[i]));
        self.nodes.push(Node::Leaf { value });

        let first = self.data.targets[samples[0]];
        let uniform = samples.iter().all(|&i| self.data.targets[i] == first);
        if depth >= self.config.max_depth || samples.len() < 2 * self.config.min_leaf || uniform {
            return id;
        }
        let Some(best) = self.best_split(&samples) else {
            return id;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = samples
            .into_iter()
            .partition(|&i| self.data.row(i)[best.feature] <= best.threshold);
        let left = self.grow(left, depth + 1);
        let right = self.grow(right, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    fn best_split(&mut self, samples: &[usize]) -> Option<BestSplit> {
        let mtry = self.config.features_per_split(self.data.dim);
        let (chosen, _) = self.features.partial_shuffle(&mut self.rng, mtry);
        let chosen = chosen.to_vec();

        let n = samples.len();
        let total: f64 = samples.iter().map(|&i| self.data.targets[i]).sum();
        let base = total * total / n as f64;
        let min_leaf = self.config.min_leaf;
        let mut best: Option<BestSplit> = None;
        for feature in chosen {
            self.scratch.clear();
            self.scratch.extend(
                samples
                    .iter()
                    .map(|&i| (self.data.row(i)[feature], self.data.targets[i])),
            );
            let (lo, hi) = self
                .scratch
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(x, _)| {
                    (lo.min(x), hi.max(x))
                });
            if lo == hi {
                continue;
            }
            self.scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_sum = 0.0;
            for i in 1..n {
                left_sum += self.scratch[i - 1].1;
                if i < min_leaf || n - i < min_leaf {
                    continue;
                }
                let (a, b) = (self.scratch[i - 1].0, self.scratch[i].0);
                if a == b {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / i as f64 + right_sum * right_sum / (n - i) as f64 - base;
                if gain > best.as_ref().map_or(0.0, |b| b.gain) {
                    let mid = a + (b - a) / 2.0;
                    best = Some(BestSplit {
                        gain,
                        feature,
                        threshold: if mid < b { mid } else { a },
                    });
                }
            }
        }
        best
    }
}

fn grow_tree(data: &TrainingSet, config: &ForestConfig, index: usize) -> Tree {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ index as u64);
    let n = data.len();
    let samples: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    let mut grower = Grower {
        data,
        config,
        rng,
        features: (0..data.dim).collect(),
        nodes: Vec::new(),
        scratch: Vec::with_capacity(n),
    };
    grower.grow(samples, 0);
    Tree { nodes: grower.nodes }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    n_features: usize,
    config: ForestConfig,
    trees: Vec<Tree>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    n_features: usize,
    config: ForestConfig,
}

impl ForestModel {
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    /// Mean of the tree predictions, in tree order.
    pub fn predict_row(&self, row: &[f64]) -> Result<f64, ForestError> {
        if row.len() != self.n_features {
            return Err(ForestError::Shape {
                expected: self.n_features,
                found: row.len(),
            });
        }
        Ok(mean(self.trees.iter().map(|t| t.predict(row))))
    }

    pub fn to_json_lines(&self) -> String {
        let header = Header {
            format: FORMAT.into(),
            version: VERSION,
            n_features: self.n_features,
            config: self.config.clone(),
        };
        let mut out = serde_json::to_string(&header).expect("serializable header");
        out.push('\n');
        for tree in &self.trees {
            out.push_str(&serde_json::to_string(tree).expect("serializable tree"));
            out.push('\n');
        }
        out
    }

    pub fn from_json_lines(text: &str) -> Result<Self, ForestError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or(ForestError::Format {
            line: 1,
            message: "empty model file".into(),
        })?;
        let header: Header = serde_json::from_str(first).map_err(|e| ForestError::Format {
            line: 1,
            message: e.to_string(),
        })?;
        if header.format != FORMAT || header.version != VERSION {
            return Err(ForestError::Format {
                line: 1,
                message: format!("unsupported format {} v{}", header.format, header.version),
            });
        }
        let trees = lines
            .map(|(i, l)| {
                serde_json::from_str::<Tree>(l).map_err(|e| ForestError::Format {
                    line: i + 1,
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            n_features: header.n_features,
            config: header.config,
            trees,
        })
    }
}

/// Fits `config.n_trees` trees, in parallel on the current rayon pool.
pub fn train(data: &TrainingSet, config: &ForestConfig) -> Result<ForestModel, ForestError> {
    config.validate()?;
    if data.is_empty() {
        return Err(ForestError::EmptyTraining);
    }
    let data = data.canonical();
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| grow_tree(&data, config, t))
        .collect();
    Ok(ForestModel {
        n_features: data.dim,
        config: config.clone(),
        trees,
    })
}

/// Predicted relevance of every matrix row, negatives clamped to zero.
pub fn predict(
    model: &ForestModel,
    matrix: &DataMatrix,
    institutions: &Arc<[InstitutionId]>,
) -> Result<RelevanceVector, ForestError> {
    if matrix.cols() != model.n_features && matrix.rows() > 0 {
        return Err(ForestError::Shape {
            expected: model.n_features,
            found: matrix.cols(),
        });
    }
    let values = (0..matrix.rows())
        .map(|i| model.predict_row(matrix.row(i)).map(|v| v.max(0.0)))
        .collect::<Result<Vec<_>, _>>()?;
    let ids: Arc<[InstitutionId]> = if institutions.len() == matrix.rows() {
        institutions.clone()
    } else {
        institutions.iter().take(matrix.rows()).cloned().collect()
    };
    Ok(RelevanceVector::new(matrix.venue.clone(), matrix.year, ids, values))
}
