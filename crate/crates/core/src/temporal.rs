//! Year-weight learning over lagged data matrices.
//!
//! A venue's data matrix for year `y` is modelled as
//! `w1·M[y-1] + w2·M[y-2] + w3·M[y-3]`. Stacking the `(i, j)` entries of the
//! three lagged matrices as rows of an `(m·d) × 3` design `X` and the target
//! entries as `z` turns the Frobenius fit into ordinary least squares. The
//! first fit is unregularized; each further iteration moves one year back in
//! time and solves a ridge problem pulled towards the previous iterate.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Index;

use thiserror::Error;

use crate::corpus::VenueId;
use crate::featspace::DataMatrix;

/// Gram matrices whose 1-norm condition estimate exceeds this are singular.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TemporalError {
    #[error("matrix shapes differ: {expected:?} vs {found:?}")]
    Shape {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("normal equations are singular (condition estimate {condition:e})")]
    Singular { condition: f64 },
    #[error("missing data matrices for years {years:?}")]
    MissingHistory { years: Vec<i32> },
    #[error("regularization weight must be finite and non-negative, got {0}")]
    InvalidLambda(f64),
}

/// Weights of the three preceding years, most recent first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightVector(pub [f64; 3]);

impl WeightVector {
    pub fn as_array(&self) -> [f64; 3] {
        self.0
    }
}

impl Index<usize> for WeightVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl fmt::Display for WeightVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.0[0], self.0[1], self.0[2])
    }
}

/// What each ridge iteration is pulled towards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Anchor {
    /// The previous iterate `w(l-1)`.
    #[default]
    Previous,
    /// Always the unregularized initial fit `w(0)`.
    Initial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalConfig {
    /// Number of ridge iterations `u`.
    pub iterations: usize,
    /// `λ_l` for `l = 1..=u`; the last value is reused when shorter than `u`.
    pub lambdas: Vec<f64>,
    pub anchor: Anchor,
    /// Ridge weight used in place of a singular unregularized first fit,
    /// pulling towards `(1, 0, 0)`. `None` propagates the error.
    pub singular_fallback: Option<f64>,
}

impl Default for TemporalConfig {
    fn default() -> Self {
        Self {
            iterations: 2,
            lambdas: vec![200.0],
            anchor: Anchor::Previous,
            singular_fallback: None,
        }
    }
}

impl TemporalConfig {
    pub fn constant(iterations: usize, lambda: f64) -> Self {
        Self {
            iterations,
            lambdas: vec![lambda],
            ..Self::default()
        }
    }

    pub fn lambda(&self, l: usize) -> f64 {
        self.lambdas.get(l - 1).or(self.lambdas.last()).copied().unwrap_or(0.0)
    }
}

/// The lagged entries of a target matrix, flattened row-major over `(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlattenedDesign {
    venue: VenueId,
    /// Target year followed by the three lag years.
    years: [i32; 4],
    shape: (usize, usize),
    x: Vec<[f64; 3]>,
    z: Vec<f64>,
}

impl FlattenedDesign {
    /// Design from raw rows; used where no matrices exist.
    pub fn from_rows(x: Vec<[f64; 3]>, z: Vec<f64>) -> Self {
        assert_eq!(x.len(), z.len(), "design rows and targets differ in length");
        let n = z.len();
        Self {
            venue: VenueId::from(""),
            years: [0, -1, -2, -3],
            shape: (1, n),
            x,
            z,
        }
    }

    pub fn x(&self) -> &[[f64; 3]] {
        &self.x
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn gram(&self) -> [[f64; 3]; 3] {
        let mut g = [[0.0; 3]; 3];
        for row in &self.x {
            for a in 0..3 {
                for b in 0..3 {
                    g[a][b] += row[a] * row[b];
                }
            }
        }
        g
    }

    pub fn xtz(&self) -> [f64; 3] {
        let mut v = [0.0; 3];
        for (row, &t) in self.x.iter().zip(&self.z) {
            for a in 0..3 {
                v[a] += row[a] * t;
            }
        }
        v
    }

    /// Rebuilds the target matrix and the three lag matrices.
    pub fn unflatten(&self) -> (DataMatrix, [DataMatrix; 3]) {
        let (m, d) = self.shape;
        let build = |year: i32, data: Vec<f64>| {
            DataMatrix::new(self.venue.clone(), year, m, d, data).expect("shape recorded at flatten")
        };
        let target = build(self.years[0], self.z.clone());
        let lags = [0, 1, 2].map(|c| build(self.years[c + 1], self.x.iter().map(|r| r[c]).collect()));
        (target, lags)
    }
}

fn same_shape(a: &DataMatrix, b: &DataMatrix) -> Result<(), TemporalError> {
    if a.shape() != b.shape() {
        return Err(TemporalError::Shape {
            expected: a.shape(),
            found: b.shape(),
        });
    }
    Ok(())
}

/// Flattens `target` and its lags (most recent first) into `(X, z)`.
pub fn flatten(target: &DataMatrix, lags: [&DataMatrix; 3]) -> Result<FlattenedDesign, TemporalError> {
    for lag in lags {
        same_shape(target, lag)?;
    }
    let x = (0..target.as_slice().len())
        .map(|e| lags.map(|l| l.as_slice()[e]))
        .collect();
    Ok(FlattenedDesign {
        venue: target.venue.clone(),
        years: [target.year, lags[0].year, lags[1].year, lags[2].year],
        shape: target.shape(),
        x,
        z: target.as_slice().to_vec(),
    })
}

type Mat3 = [[f64; 3]; 3];

fn lu_solve(a: &Mat3, b: [f64; 3]) -> Option<[f64; 3]> {
    let mut m = *a;
    let mut v = b;
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .expect("non-empty range");
        if m[pivot][col] == 0.0 || !m[pivot][col].is_finite() {
            return None;
        }
        m.swap(col, pivot);
        v.swap(col, pivot);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            let pivot_row = m[col];
            for (cell, p) in m[row].iter_mut().zip(pivot_row).skip(col) {
                *cell -= f * p;
            }
            v[row] -= f * v[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let tail: f64 = (row + 1..3).map(|k| m[row][k] * x[k]).sum();
        x[row] = (v[row] - tail) / m[row][row];
    }
    Some(x)
}

fn norm1(a: &Mat3) -> f64 {
    (0..3)
        .map(|c| (0..3).map(|r| a[r][c].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `‖A‖₁ · ‖A⁻¹‖₁`, infinite when elimination breaks down.
pub fn condition_estimate(a: &Mat3) -> f64 {
    let mut inv = [[0.0; 3]; 3];
    for c in 0..3 {
        let mut e = [0.0; 3];
        e[c] = 1.0;
        match lu_solve(a, e) {
            Some(col) => (0..3).for_each(|r| inv[r][c] = col[r]),
            None => return f64::INFINITY,
        }
    }
    norm1(a) * norm1(&inv)
}

/// Solves a 3×3 system by partial-pivot elimination plus one refinement step.
pub fn solve3(a: &Mat3, b: [f64; 3]) -> Result<[f64; 3], TemporalError> {
    let condition = condition_estimate(a);
    if condition.is_nan() || condition > MAX_CONDITION {
        return Err(TemporalError::Singular { condition });
    }
    let mut x = lu_solve(a, b).ok_or(TemporalError::Singular { condition })?;
    let residual: [f64; 3] = std::array::from_fn(|r| b[r] - (0..3).map(|k| a[r][k] * x[k]).sum::<f64>());
    if let Some(dx) = lu_solve(a, residual) {
        (0..3).for_each(|r| x[r] += dx[r]);
    }
    Ok(x)
}

/// Unregularized least squares `argmin ‖z − Xw‖²`.
pub fn initial_weights(design: &FlattenedDesign) -> Result<WeightVector, TemporalError> {
    solve3(&design.gram(), design.xtz()).map(WeightVector)
}

/// Ridge step `argmin ‖z − Xw‖² + λ‖w_prev − w‖²`.
pub fn refine_weights(
    w_prev: WeightVector,
    design: &FlattenedDesign,
    lambda: f64,
) -> Result<WeightVector, TemporalError> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(TemporalError::InvalidLambda(lambda));
    }
    let mut g = design.gram();
    let mut rhs = design.xtz();
    for a in 0..3 {
        g[a][a] += lambda;
        rhs[a] += lambda * w_prev[a];
    }
    solve3(&g, rhs).map(WeightVector)
}

/// Every iterate of a weight-learning run.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedWeights {
    /// `w(0) .. w(u)`.
    pub iterates: Vec<WeightVector>,
    /// Whether `w(0)` came from the singular fallback.
    pub used_fallback: bool,
}

impl LearnedWeights {
    pub fn final_weights(&self) -> WeightVector {
        *self.iterates.last().expect("at least w(0)")
    }
}

/// Years `train_target - 3 - u ..= train_target` that a run needs.
pub fn required_years(train_target: i32, iterations: usize) -> std::ops::RangeInclusive<i32> {
    (train_target - 3 - iterations as i32)..=train_target
}

/// Learns the year weights of one venue from its data matrices.
pub fn learn_weights(
    matrices: &BTreeMap<i32, DataMatrix>,
    train_target: i32,
    config: &TemporalConfig,
) -> Result<LearnedWeights, TemporalError> {
    let missing: Vec<i32> = required_years(train_target, config.iterations)
        .filter(|y| !matrices.contains_key(y))
        .collect();
    if !missing.is_empty() {
        return Err(TemporalError::MissingHistory { years: missing });
    }
    let design_at = |y: i32| {
        flatten(
            &matrices[&y],
            [&matrices[&(y - 1)], &matrices[&(y - 2)], &matrices[&(y - 3)]],
        )
    };

    let first = design_at(train_target)?;
    let (w0, used_fallback) = match initial_weights(&first) {
        Ok(w) => (w, false),
        Err(TemporalError::Singular { .. }) if config.singular_fallback.is_some() => {
            let lambda = config.singular_fallback.expect("checked");
            (refine_weights(WeightVector([1.0, 0.0, 0.0]), &first, lambda)?, true)
        }
        Err(e) => return Err(e),
    };
    let mut iterates = vec![w0];
    for l in 1..=config.iterations {
        let design = design_at(train_target - l as i32)?;
        let anchor = match config.anchor {
            Anchor::Previous => iterates[l - 1],
            Anchor::Initial => iterates[0],
        };
        iterates.push(refine_weights(anchor, &design, config.lambda(l))?);
    }
    Ok(LearnedWeights {
        iterates,
        used_fallback,
    })
}

/// `w1·lags[0] + w2·lags[1] + w3·lags[2]`, dated one year after `lags[0]`.
pub fn synthesize_matrix(w: WeightVector, lags: [&DataMatrix; 3]) -> Result<DataMatrix, TemporalError> {
    same_shape(lags[0], lags[1])?;
    same_shape(lags[0], lags[2])?;
    let (a, b, c) = (lags[0].as_slice(), lags[1].as_slice(), lags[2].as_slice());
    let data = (0..a.len()).map(|e| w[0] * a[e] + w[1] * b[e] + w[2] * c[e]).collect();
    let (m, d) = lags[0].shape();
    Ok(DataMatrix::new(lags[0].venue.clone(), lags[0].year + 1, m, d, data).expect("shape checked"))
}

/// One line of the weight audit file:
/// `venue_id, w1, w2, w3, iterations, lambdas`.
pub fn audit_line(venue: &VenueId, config: &TemporalConfig, learned: &LearnedWeights) -> String {
    let w = learned.final_weights();
    let lambdas: Vec<String> = (1..=config.iterations).map(|l| config.lambda(l).to_string()).collect();
    format!(
        "{venue}\t{}\t{}\t{}\t{}\t{}\n",
        w[0],
        w[1],
        w[2],
        config.iterations,
        lambdas.join(";")
    )
}
