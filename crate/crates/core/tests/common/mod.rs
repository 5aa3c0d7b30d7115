//! Independent reference implementations shared by the integration tests.
//! None of this calls into the library's numerics.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use insrank::scoring::ScoreTable;
use insrank::temporal::{FlattenedDesign, WeightVector};
use insrank::{InstitutionId, VenueId};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_design(rng: &mut ChaCha8Rng, rows: usize) -> FlattenedDesign {
    let x: Vec<[f64; 3]> = (0..rows)
        .map(|_| std::array::from_fn(|_| rng.random::<f64>()))
        .collect();
    let z = (0..rows).map(|_| rng.random::<f64>()).collect();
    FlattenedDesign::from_rows(x, z)
}

/// Minimizes `‖z − Xw‖² + λ‖w − anchor‖²` by plain gradient descent.
pub fn gradient_descent(x: &[[f64; 3]], z: &[f64], lambda: f64, anchor: [f64; 3]) -> [f64; 3] {
    let mut g = [[0.0; 3]; 3];
    let mut b = [0.0; 3];
    for (row, &t) in x.iter().zip(z) {
        for i in 0..3 {
            b[i] += row[i] * t;
            for j in 0..3 {
                g[i][j] += row[i] * row[j];
            }
        }
    }
    let trace = g[0][0] + g[1][1] + g[2][2] + 3.0 * lambda;
    let step = 1.0 / (2.0 * trace);
    let mut w = [0.0; 3];
    for _ in 0..5_000_000 {
        let grad: [f64; 3] = std::array::from_fn(|i| {
            2.0 * ((0..3).map(|j| g[i][j] * w[j]).sum::<f64>() - b[i]) + 2.0 * lambda * (w[i] - anchor[i])
        });
        if grad.iter().all(|v| v.abs() < 1e-13) {
            break;
        }
        for i in 0..3 {
            w[i] -= step * grad[i];
        }
    }
    w
}

/// `2Xᵀ(Xw − z) + 2λ(w − w_prev)`, from the raw rows.
pub fn objective_gradient(design: &FlattenedDesign, w: WeightVector, lambda: f64, prev: [f64; 3]) -> [f64; 3] {
    let mut grad = [0.0; 3];
    for (row, &t) in design.x().iter().zip(design.z()) {
        let r = row[0] * w[0] + row[1] * w[1] + row[2] * w[2] - t;
        for i in 0..3 {
            grad[i] += 2.0 * row[i] * r;
        }
    }
    for i in 0..3 {
        grad[i] += 2.0 * lambda * (w[i] - prev[i]);
    }
    grad
}

/// NDCG@n over the order induced by `predicted`, ties by id.
pub fn oracle_ndcg(predicted: &[f64], truth: &[f64], ids: &[String], n: usize) -> f64 {
    let mut order: Vec<usize> = (0..predicted.len()).collect();
    order.sort_by(|&a, &b| {
        predicted[b]
            .partial_cmp(&predicted[a])
            .unwrap()
            .then(ids[a].cmp(&ids[b]))
    });
    let gains: Vec<f64> = order.iter().map(|&k| truth[k]).collect();
    oracle_ndcg_of_gains(&gains, truth, n)
}

/// NDCG@n of relevances already in predicted order.
pub fn oracle_ndcg_of_gains(gains: &[f64], truth: &[f64], n: usize) -> f64 {
    let dcg: f64 = gains
        .iter()
        .take(n)
        .enumerate()
        .map(|(i, &r)| r / (i as f64 + 2.0).log2())
        .sum();
    let mut ideal = truth.to_vec();
    ideal.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let idcg: f64 = ideal
        .iter()
        .take(n)
        .enumerate()
        .map(|(i, &r)| r / (i as f64 + 2.0).log2())
        .sum();
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

/// Per-year scores of `m` institutions for 2010..=2015, with some zeros.
pub struct SmoothingInstance {
    pub ids: Vec<String>,
    pub years: BTreeMap<i32, Vec<f64>>,
}

impl SmoothingInstance {
    pub fn random(rng: &mut ChaCha8Rng, m: usize) -> Self {
        let ids = (0..m).map(|i| format!("I{i:02}")).collect();
        let years = (2010..=2015)
            .map(|y| {
                let raw: Vec<f64> = (0..m)
                    .map(|_| {
                        if rng.random::<f64>() < 0.2 {
                            0.0
                        } else {
                            rng.random::<f64>()
                        }
                    })
                    .collect();
                let total: f64 = raw.iter().sum::<f64>().max(1e-9);
                (y, raw.iter().map(|v| v / total).collect())
            })
            .collect();
        Self { ids, years }
    }

    pub fn history(&self, venue: &VenueId) -> BTreeMap<i32, ScoreTable> {
        let shared: Arc<[InstitutionId]> = self.ids.iter().map(|s| InstitutionId::from(s.as_str())).collect();
        self.years
            .iter()
            .map(|(&y, s)| {
                (
                    y,
                    ScoreTable::from_scores(venue.clone(), y, shared.clone(), s.clone(), 10),
                )
            })
            .collect()
    }

    /// Exhaustive search over `k/20`: `(weight, validation NDCG, final relevance)`.
    pub fn solve(&self, n: usize) -> (f64, f64, Vec<f64>) {
        let r = |y: i32| &self.years[&y];
        let m = self.ids.len();
        let mut best = (f64::NEG_INFINITY, 0.0);
        for k in 1..=20 {
            let w = k as f64 / 20.0;
            let cand: Vec<f64> = (0..m)
                .map(|i| r(2014)[i] + w * r(2013)[i] + w * w * r(2012)[i] + w * w * w * r(2011)[i])
                .collect();
            let score = oracle_ndcg(&cand, r(2015), &self.ids, n);
            if score >= best.0 {
                best = (score, w);
            }
        }
        let w = best.1;
        let raw: Vec<f64> = (0..m)
            .map(|i| r(2015)[i] + w * r(2014)[i] + w * w * r(2013)[i] + w * w * w * r(2012)[i])
            .collect();
        let total: f64 = raw.iter().sum();
        (w, best.0, raw.iter().map(|v| v / total).collect())
    }
}
