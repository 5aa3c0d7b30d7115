//! Acceptance suite: one PASS/FAIL line per criterion, written straight to
//! stderr so it shows up without `--nocapture`.

mod common;

use std::collections::BTreeMap;
use std::io::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use insrank::corpus::{generate_synthetic, partition_by_year, Authorship, SynthConfig, Venue};
use insrank::featspace::DataMatrix;
use insrank::forest::{self, ForestConfig, TrainingSet};
use insrank::pipeline::{run_validation, ExperimentPlan, Method, MethodSettings, Predictor};
use insrank::scoring::{compute_scores, paper_credit, ScoreBook};
use insrank::smoothrank::{rankins1, SmoothingGrid};
use insrank::temporal::{initial_weights, refine_weights, synthesize_matrix, WeightVector};
use insrank::{ndcg_at, AuthorId, Corpus, InstitutionId, PaperId, PaperRecord, Ranking, RelevanceVector, VenueId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{gradient_descent, objective_gradient, oracle_ndcg_of_gains, random_design, SmoothingInstance};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn within(elapsed: Duration, limit: f64) -> Result<(), String> {
    let secs = elapsed.as_secs_f64();
    if secs < limit {
        Ok(())
    } else {
        Err(format!("took {secs:.2} s, limit {limit} s"))
    }
}

fn run(number: u32, title: &str, check: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let secs = start.elapsed().as_secs_f64();
    let (status, detail) = match &outcome {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    let _ = writeln!(
        std::io::stderr().lock(),
        "acceptance {number} {status}: {title} ({detail}) [{secs:.2} s]"
    );
    outcome.is_ok()
}

fn ids(m: usize) -> Arc<[InstitutionId]> {
    (0..m).map(|i| InstitutionId::from(format!("I{i:03}"))).collect()
}

fn ordered(ids: &[InstitutionId], order: &[usize]) -> Ranking {
    Ranking::from_ordered(order.iter().map(|&i| (ids[i].clone(), 0.0))).unwrap()
}

fn ndcg_suite() -> Outcome {
    let start = Instant::now();
    let three = ids(3);
    let truth = RelevanceVector::new("V".into(), 2015, three.clone(), vec![3.0, 2.0, 1.0]);
    let perfect = ndcg_at(&ordered(&three, &[0, 1, 2]), &truth, 3).unwrap();
    ensure!(perfect == 1.0, "perfect ranking gave {perfect}");

    let reversed = ndcg_at(&ordered(&three, &[2, 1, 0]), &truth, 3).unwrap();
    let l3 = 3f64.ln() / 2f64.ln();
    // rel 1, 2, 3 at ranks 1, 2, 3 over the ideal 3, 2, 1
    let hand_reversed = (1.0 + 2.0 / l3 + 3.0 / 2.0) / (3.0 + 2.0 / l3 + 1.0 / 2.0);
    ensure!(
        (reversed - hand_reversed).abs() < 1e-12,
        "reversed {reversed} vs hand {hand_reversed}"
    );

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut swaps = 0;
    for _ in 0..1000 {
        let m = rng.random_range(1..30);
        let inst = ids(m);
        let rels: Vec<f64> = (0..m)
            .map(|_| {
                if rng.random::<f64>() < 0.3 {
                    0.0
                } else {
                    rng.random::<f64>()
                }
            })
            .collect();
        let truth = RelevanceVector::new("V".into(), 2015, inst.clone(), rels.clone());
        let mut order: Vec<usize> = (0..m).collect();
        for i in (1..m).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let n = rng.random_range(1..25);
        let v = ndcg_at(&ordered(&inst, &order), &truth, n).unwrap();
        ensure!((0.0..=1.0).contains(&v), "ndcg {v} out of bounds");
        let gains: Vec<f64> = order.iter().map(|&i| rels[i]).collect();
        let oracle = oracle_ndcg_of_gains(&gains, &rels, n);
        ensure!((v - oracle).abs() < 1e-12, "ndcg {v} vs oracle {oracle}");
        if m > 1 {
            let k = rng.random_range(0..m - 1);
            if rels[order[k]] < rels[order[k + 1]] {
                order.swap(k, k + 1);
                let after = ndcg_at(&ordered(&inst, &order), &truth, n).unwrap();
                ensure!(after >= v - 1e-12, "swap toward truth lowered {v} to {after}");
                swaps += 1;
            }
        }
    }
    within(start.elapsed(), 5.0)?;
    Ok(format!(
        "perfect = 1 exactly; reversed-3 = {reversed:.10} (hand oracle {hand_reversed:.10}); 1000 fuzzed, {swaps} improving swaps"
    ))
}

fn random_paper(rng: &mut ChaCha8Rng, id: usize, year: i32) -> PaperRecord {
    let authors = rng.random_range(1..=6);
    PaperRecord {
        id: PaperId::from(format!("P{id:05}")),
        year,
        venue: VenueId::from("V"),
        keywords: vec!["k".into()],
        authorships: (0..authors)
            .map(|a| {
                let mut institutions: Vec<InstitutionId> = (0..rng.random_range(0..=3))
                    .map(|_| InstitutionId::from(format!("I{:03}", rng.random_range(0..15))))
                    .collect();
                institutions.sort();
                institutions.dedup();
                Authorship {
                    author: AuthorId::from(format!("A{id}_{a}")),
                    institutions,
                }
            })
            .collect(),
    }
}

fn credit_conservation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let papers: Vec<PaperRecord> = (0..1000)
        .map(|i| random_paper(&mut rng, i, 2000 + (i % 20) as i32))
        .collect();
    let mut worst: f64 = 0.0;
    for p in &papers {
        let err = (paper_credit(p).total() - 1.0).abs();
        worst = worst.max(err);
        ensure!(err <= 1e-12, "paper {} distributes {}", p.id, 1.0 + err);
    }
    // I000..I009 tracked, I010..I014 untracked
    let tracked = ids(10);
    let corpus = Corpus::new(
        tracked.iter().map(|i| (i.clone(), i.to_string())).collect(),
        vec![Venue {
            id: VenueId::from("V"),
            abbreviation: "V".into(),
        }],
        papers,
    )
    .unwrap();
    let mut max_sum: f64 = 0.0;
    for slice in partition_by_year(&corpus).values() {
        let sum: f64 = compute_scores(slice, &VenueId::from("V"), corpus.tracked())
            .scores()
            .iter()
            .sum();
        max_sum = max_sum.max(sum);
        ensure!(sum <= 1.0 + 1e-9, "year {} tracked sum {sum}", slice.year);
    }
    Ok(format!(
        "max per-paper error {worst:.1e}; max venue-year tracked sum {max_sum:.6}"
    ))
}

fn rankins1_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let venue = VenueId::from("V");
    let mut worst: f64 = 0.0;
    for t in 0..100 {
        let instance = SmoothingInstance::random(&mut rng, 10);
        let got = rankins1(&instance.history(&venue), &venue, 2016, 20, &SmoothingGrid::default())
            .map_err(|e| e.to_string())?;
        let (w, ndcg, _) = instance.solve(20);
        ensure!(
            got.chosen_weight.to_bits() == w.to_bits(),
            "instance {t}: w {} vs oracle {w}",
            got.chosen_weight
        );
        let err = (got.validation_ndcg - ndcg).abs();
        worst = worst.max(err);
        ensure!(
            err <= 1e-12,
            "instance {t}: ndcg {} vs oracle {ndcg}",
            got.validation_ndcg
        );
    }
    within(start.elapsed(), 10.0)?;
    Ok(format!("100 instances, w bitwise equal, max ndcg error {worst:.1e}"))
}

fn least_squares_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut e0, mut g0, mut e1, mut g1, mut pin): (f64, f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for _ in 0..100 {
        let d = random_design(&mut rng, 30);
        let w0 = initial_weights(&d).map_err(|e| e.to_string())?;
        let oracle = gradient_descent(d.x(), d.z(), 0.0, [0.0; 3]);
        e0 = (0..3).map(|i| (w0[i] - oracle[i]).abs()).fold(e0, f64::max);
        g0 = objective_gradient(&d, w0, 0.0, [0.0; 3])
            .iter()
            .map(|g| g.abs())
            .fold(g0, f64::max);

        let prev: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let w1 = refine_weights(WeightVector(prev), &d, 200.0).map_err(|e| e.to_string())?;
        let oracle = gradient_descent(d.x(), d.z(), 200.0, prev);
        e1 = (0..3).map(|i| (w1[i] - oracle[i]).abs()).fold(e1, f64::max);
        g1 = objective_gradient(&d, w1, 200.0, prev)
            .iter()
            .map(|g| g.abs())
            .fold(g1, f64::max);

        let zero = refine_weights(WeightVector(prev), &d, 0.0).map_err(|e| e.to_string())?;
        ensure!(zero == w0, "lambda 0 gave {zero}, initial fit {w0}");
        let held = refine_weights(WeightVector(prev), &d, 1e12).map_err(|e| e.to_string())?;
        pin = (0..3).map(|i| (held[i] - prev[i]).abs()).fold(pin, f64::max);
    }
    ensure!(e0 < 1e-6, "initial fit off the oracle by {e0}");
    ensure!(e1 < 1e-6, "ridge fit off the oracle by {e1}");
    ensure!(g0.max(g1) < 1e-8, "gradient norm {}", g0.max(g1));
    ensure!(pin < 1e-6, "lambda 1e12 moved {pin} from the anchor");
    Ok(format!(
        "initial err {e0:.1e}, ridge err {e1:.1e}, max |gradient| {:.1e}, lambda 0 bitwise, lambda 1e12 drift {pin:.1e}",
        g0.max(g1)
    ))
}

fn synthesis() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (m, d) = (rng.random_range(1..10), rng.random_range(1..10));
        let lags: Vec<DataMatrix> = (0..3)
            .map(|k| {
                let data = (0..m * d).map(|_| rng.random::<f64>()).collect();
                DataMatrix::new("V".into(), 2015 - k, m, d, data).unwrap()
            })
            .collect();
        let lag_refs = [&lags[0], &lags[1], &lags[2]];
        let w = WeightVector(std::array::from_fn(|_| rng.random_range(-2.0..2.0)));
        let out = synthesize_matrix(w, lag_refs).map_err(|e| e.to_string())?;
        for i in 0..m {
            for j in 0..d {
                let scalar = w[0] * lags[0].get(i, j) + w[1] * lags[1].get(i, j) + w[2] * lags[2].get(i, j);
                worst = worst.max((out.get(i, j) - scalar).abs());
            }
        }
        let same = synthesize_matrix(WeightVector([1.0, 0.0, 0.0]), lag_refs).map_err(|e| e.to_string())?;
        ensure!(
            same.as_slice() == lags[0].as_slice(),
            "identity weights changed the matrix"
        );
    }
    ensure!(worst < 1e-12, "elementwise error {worst}");
    Ok(format!("100 random cases, max error {worst:.1e}; identity exact"))
}

fn predictions(model: &forest::ForestModel, probes: &[Vec<f64>]) -> Vec<u64> {
    probes.iter().map(|p| model.predict_row(p).unwrap().to_bits()).collect()
}

fn forest_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let rows: Vec<Vec<f64>> = (0..200)
        .map(|_| (0..6).map(|_| rng.random::<f64>()).collect())
        .collect();
    let probes: Vec<Vec<f64>> = (0..50)
        .map(|_| (0..6).map(|_| rng.random_range(-1.0..2.0)).collect())
        .collect();

    let constant = vec![0.37; rows.len()];
    let model = forest::train(
        &TrainingSet::from_rows(&rows, &constant).unwrap(),
        &ForestConfig::default(),
    )
    .unwrap();
    for p in rows.iter().chain(&probes) {
        let v = model.predict_row(p).unwrap();
        ensure!(v == 0.37, "constant target predicted as {v}");
    }

    let targets: Vec<f64> = rows.iter().map(|r| r[0] * 2.0 + r[1] * r[2]).collect();
    let data = TrainingSet::from_rows(&rows, &targets).unwrap();
    let config = ForestConfig {
        seed: 99,
        ..ForestConfig::default()
    };
    let train_on = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| forest::train(&data, &config).unwrap())
    };
    let reference = predictions(&forest::train(&data, &config).unwrap(), &probes);
    ensure!(
        reference == predictions(&forest::train(&data, &config).unwrap(), &probes),
        "two runs differ"
    );
    for threads in [1, 4] {
        ensure!(
            reference == predictions(&train_on(threads), &probes),
            "{threads} threads differ"
        );
    }

    let xs: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.random::<f64>()]).collect();
    let step: Vec<f64> = xs.iter().map(|x| if x[0] > 0.5 { 1.0 } else { 0.0 }).collect();
    let model = forest::train(&TrainingSet::from_rows(&xs, &step).unwrap(), &ForestConfig::default()).unwrap();
    let mse = xs
        .iter()
        .zip(&step)
        .map(|(x, t)| (model.predict_row(x).unwrap() - t).powi(2))
        .sum::<f64>()
        / xs.len() as f64;
    ensure!(mse < 0.05, "step-function MSE {mse}");
    Ok(format!(
        "constant exact; bitwise equal over 2 runs and 1/4 threads; step MSE {mse:.4}"
    ))
}

fn no_leakage() -> Outcome {
    let config = SynthConfig {
        papers_per_venue_year: 150,
        drift: 0.2,
        ..SynthConfig::default()
    };
    let full = generate_synthetic(&config, 17).map_err(|e| e.to_string())?;
    let validation_year = 2015;
    let cut = full.truncated(validation_year - 1);
    let (full_book, cut_book) = (ScoreBook::from_corpus(&full), ScoreBook::from_corpus(&cut));
    let settings = MethodSettings::default();
    let mut compared = 0;
    for method in Method::ALL {
        let (a, b) = (settings.predictor(method), settings.predictor(method));
        for venue in full.venues() {
            let x = a
                .predict(&full, &full_book, &venue.id, validation_year)
                .map_err(|e| e.to_string())?;
            let y = b
                .predict(&cut, &cut_book, &venue.id, validation_year)
                .map_err(|e| e.to_string())?;
            let bits = |r: &RelevanceVector| r.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            ensure!(
                x.relevance.institutions() == y.relevance.institutions() && bits(&x.relevance) == bits(&y.relevance),
                "{} on {} changed after truncation",
                method.name(),
                venue.id
            );
            compared += x.relevance.len();
        }
    }
    Ok(format!(
        "3 methods x {} venues, {compared} predictions bit-identical",
        full.venues().len()
    ))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn end_to_end() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = tmp.path().join("corpus");
    let report = tmp.path().join("report.csv");
    let path = |p: &std::path::Path| p.to_str().unwrap().to_owned();
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = insrank::cli::run(
        ["insrank", "synth", "--out", &path(&corpus), "--seed", "2016"],
        &mut out,
        &mut err,
    );
    ensure!(code == 0, "synth exited {code}: {}", String::from_utf8_lossy(&err));

    let start = Instant::now();
    let code = insrank::cli::run(
        [
            "insrank",
            "--threads",
            "1",
            "validate",
            "--corpus-dir",
            &path(&corpus),
            "--output",
            &path(&report),
        ],
        &mut out,
        &mut err,
    );
    let elapsed = start.elapsed();
    ensure!(code == 0, "validate exited {code}: {}", String::from_utf8_lossy(&err));
    let csv = std::fs::read_to_string(&report).map_err(|e| e.to_string())?;
    let ok = csv.lines().skip(1).filter(|l| l.ends_with(",ok")).count();
    ensure!(ok == 9, "expected 9 successful cells:\n{csv}");
    within(elapsed, 60.0)?;

    let settings = MethodSettings::default();
    let mut per_method: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for seed in 0..10 {
        let corpus = generate_synthetic(&SynthConfig::default(), seed).map_err(|e| e.to_string())?;
        let plan = ExperimentPlan::standard(2016, 2015).restricted_to(&corpus);
        let boxed = settings.predictors(&Method::ALL);
        let predictors: Vec<&dyn Predictor> = boxed.iter().map(|b| b.as_ref()).collect();
        let report = run_validation(&corpus, &plan, &predictors).map_err(|e| e.to_string())?;
        for method in Method::ALL {
            let scores: Vec<f64> = report
                .cells
                .iter()
                .filter(|c| c.method == method.name())
                .map(|c| c.outcome.as_ref().map(|r| r.ndcg).map_err(|e| e.clone()))
                .collect::<Result<_, _>>()?;
            per_method
                .entry(method.name())
                .or_default()
                .push(scores.iter().sum::<f64>() / scores.len() as f64);
        }
    }
    let med: BTreeMap<&str, f64> = per_method.into_iter().map(|(k, v)| (k, median(v))).collect();
    let baseline = med["previous-year"];
    for m in ["rankins1", "rankins2"] {
        ensure!(
            med[m] >= baseline - 0.02,
            "{m} median {:.4} below previous-year {baseline:.4} - 0.02",
            med[m]
        );
    }
    Ok(format!(
        "validate 9 cells in {:.2} s single-threaded; median NDCG@20 over 10 drift-0 seeds: previous-year {:.4}, rankins1 {:.4}, rankins2 {:.4}",
        elapsed.as_secs_f64(),
        baseline,
        med["rankins1"],
        med["rankins2"]
    ))
}

#[test]
fn acceptance_criteria() {
    let results = [
        run(1, "NDCG suite", ndcg_suite),
        run(2, "credit conservation", credit_conservation),
        run(3, "smoothing ranker vs exhaustive grid", rankins1_oracle),
        run(4, "least-squares oracles", least_squares_oracles),
        run(5, "matrix synthesis", synthesis),
        run(6, "forest exactness and determinism", forest_checks),
        run(7, "no leakage past the validation year", no_leakage),
        run(8, "end-to-end desk-scale validation", end_to_end),
    ];
    let failed: Vec<usize> = results
        .iter()
        .enumerate()
        .filter(|(_, ok)| !**ok)
        .map(|(i, _)| i + 1)
        .collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
