//! Seeded synthetic corpora.
//!
//! Every institution (tracked or not) carries a latent per-venue weight. Each
//! paper picks a lead institution proportionally to that weight, so expected
//! paper shares follow a Zipf-like law with exponent `skew`. Between
//! consecutive years the weights move towards a freshly drawn Zipf profile at
//! rate `drift`: with `drift = 0` expected shares never change, with
//! `drift = 1` every year is redrawn from scratch.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Authorship, Corpus, CorpusError, InstitutionId, PaperRecord, Venue};

/// Conference names used for the first generated venues.
pub const DEFAULT_VENUES: [&str; 8] = ["SIGIR", "SIGMOD", "SIGCOMM", "KDD", "ICML", "FSE", "MobiCom", "MM"];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    /// Tracked institution count (m).
    pub institutions: usize,
    /// Extra institutions that publish but are not tracked.
    pub untracked_institutions: usize,
    pub venues: usize,
    pub first_year: i32,
    pub last_year: i32,
    pub papers_per_venue_year: usize,
    /// Size of the author pool.
    pub authors: usize,
    /// Keyword vocabulary size.
    pub vocabulary: usize,
    /// Year-to-year drift of institution weights, in `[0, 1]`.
    pub drift: f64,
    /// Zipf exponent of the institution weight profile.
    pub skew: f64,
    pub max_authors_per_paper: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            institutions: 50,
            untracked_institutions: 10,
            venues: 3,
            first_year: 2009,
            last_year: 2016,
            papers_per_venue_year: 500,
            authors: 600,
            vocabulary: 40,
            drift: 0.0,
            skew: 1.0,
            max_authors_per_paper: 4,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let fail = |m: &str| Err(CorpusError::Config(m.to_owned()));
        if self.institutions == 0 {
            return fail("at least one tracked institution is required");
        }
        if self.venues == 0 {
            return fail("at least one venue is required");
        }
        if self.authors == 0 {
            return fail("the author pool must not be empty");
        }
        if self.vocabulary == 0 {
            return fail("the keyword vocabulary must not be empty");
        }
        if self.max_authors_per_paper == 0 {
            return fail("papers need at least one author");
        }
        if self.first_year > self.last_year {
            return fail("first year is after last year");
        }
        if !(0.0..=1.0).contains(&self.drift) {
            return fail("drift must lie in [0, 1]");
        }
        if !self.skew.is_finite() || self.skew < 0.0 {
            return fail("skew must be a non-negative number");
        }
        Ok(())
    }
}

struct Author {
    institutions: Vec<usize>,
    interests: Vec<usize>,
}

fn zipf_profile(rng: &mut ChaCha8Rng, n: usize, skew: f64) -> Vec<f64> {
    let mut ranks: Vec<usize> = (0..n).collect();
    ranks.shuffle(rng);
    ranks.into_iter().map(|r| 1.0 / ((r + 1) as f64).powf(skew)).collect()
}

fn sample_weighted(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut x = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if x < w {
            return i;
        }
        x -= w;
    }
    weights.len() - 1
}

fn pick_distinct(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    let mut all: Vec<usize> = (0..n).collect();
    all.shuffle(rng);
    all.truncate(k.min(n));
    all
}

/// Generates a corpus that depends only on `(config, seed)`.
pub fn generate_synthetic(config: &SynthConfig, seed: u64) -> Result<Corpus, CorpusError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let m = config.institutions;
    let all_inst = m + config.untracked_institutions;
    let inst_id = |k: usize| -> InstitutionId {
        if k < m {
            format!("I{:04}", k + 1).into()
        } else {
            format!("X{:04}", k - m + 1).into()
        }
    };
    let topic_name = |t: usize| format!("t{t:03}");
    let s = config.vocabulary;

    let venues: Vec<Venue> = (0..config.venues)
        .map(|v| {
            let name = DEFAULT_VENUES
                .get(v)
                .map(|n| n.to_string())
                .unwrap_or_else(|| format!("V{:02}", v + 1));
            Venue {
                id: name.as_str().into(),
                abbreviation: name,
            }
        })
        .collect();

    let venue_focus: Vec<Vec<usize>> = (0..config.venues)
        .map(|_| pick_distinct(&mut rng, s, (s / config.venues).max(2)))
        .collect();
    let inst_focus: Vec<Vec<usize>> = (0..all_inst).map(|_| pick_distinct(&mut rng, s, 3)).collect();

    // Every institution gets at least one author when the pool allows it.
    let authors: Vec<Author> = (0..config.authors)
        .map(|i| {
            let home = if i < all_inst { i } else { rng.random_range(0..all_inst) };
            let roll = rng.random::<f64>();
            let institutions = if roll < 0.05 {
                Vec::new()
            } else if roll < 0.15 && all_inst > 1 {
                let mut other = rng.random_range(0..all_inst - 1);
                if other >= home {
                    other += 1;
                }
                vec![home, other]
            } else {
                vec![home]
            };
            let mut interests = inst_focus[home].clone();
            interests.push(rng.random_range(0..s));
            Author {
                institutions,
                interests,
            }
        })
        .collect();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); all_inst];
    for (a, author) in authors.iter().enumerate() {
        if let Some(&home) = author.institutions.first() {
            members[home].push(a);
        }
    }

    let prestige = zipf_profile(&mut rng, all_inst, config.skew);
    let mut weights: Vec<Vec<f64>> = (0..config.venues)
        .map(|_| prestige.iter().map(|p| p * rng.random_range(0.5..1.5)).collect())
        .collect();

    let mut papers = Vec::new();
    for year in config.first_year..=config.last_year {
        if year > config.first_year && config.drift > 0.0 {
            for w in weights.iter_mut() {
                let fresh = zipf_profile(&mut rng, all_inst, config.skew);
                for (wk, fk) in w.iter_mut().zip(fresh) {
                    *wk = (1.0 - config.drift) * *wk + config.drift * fk;
                }
            }
        }
        for (v, venue) in venues.iter().enumerate() {
            for i in 0..config.papers_per_venue_year {
                let lead = sample_weighted(&mut rng, &weights[v]);
                let n_authors = rng.random_range(1..=config.max_authors_per_paper);
                let mut chosen: Vec<usize> = Vec::with_capacity(n_authors);
                for slot in 0..n_authors {
                    let from_lead = slot == 0 || rng.random::<f64>() < 0.7;
                    let candidate = if from_lead && !members[lead].is_empty() {
                        members[lead][rng.random_range(0..members[lead].len())]
                    } else {
                        rng.random_range(0..authors.len())
                    };
                    if !chosen.contains(&candidate) {
                        chosen.push(candidate);
                    }
                }

                let n_keywords = rng.random_range(1..=3usize);
                let mut keywords: Vec<usize> = Vec::with_capacity(n_keywords);
                for _ in 0..n_keywords {
                    let pool = if rng.random::<f64>() < 0.6 {
                        &venue_focus[v]
                    } else {
                        &authors[chosen[0]].interests
                    };
                    let t = pool[rng.random_range(0..pool.len())];
                    if !keywords.contains(&t) {
                        keywords.push(t);
                    }
                }

                papers.push(PaperRecord {
                    id: format!("{}-{year}-{:05}", venue.id, i + 1).into(),
                    year,
                    venue: venue.id.clone(),
                    keywords: keywords.into_iter().map(topic_name).collect(),
                    authorships: chosen
                        .into_iter()
                        .map(|a| Authorship {
                            author: format!("A{:05}", a + 1).into(),
                            institutions: authors[a].institutions.iter().map(|&k| inst_id(k)).collect(),
                        })
                        .collect(),
                });
            }
        }
    }

    let institutions = (0..m).map(|k| (inst_id(k), format!("Institution {}", k + 1))).collect();
    Corpus::new(institutions, venues, papers)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            institutions: 10,
            untracked_institutions: 2,
            venues: 1,
            first_year: 2011,
            last_year: 2016,
            papers_per_venue_year: 50,
            authors: 40,
            vocabulary: 12,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let a = generate_synthetic(&small(), 7).unwrap();
        let b = generate_synthetic(&small(), 7).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&small(), 8).unwrap();
        assert_ne!(a.papers(), c.papers());
    }

    #[test]
    fn papers_have_authors_and_keywords() {
        let corpus = generate_synthetic(&small(), 1).unwrap();
        assert_eq!(corpus.papers().len(), 6 * 50);
        assert!(corpus
            .papers()
            .iter()
            .all(|p| !p.authorships.is_empty() && !p.keywords.is_empty()));
        assert_eq!(corpus.year_range(), Some((2011, 2016)));
        assert_eq!(corpus.venues()[0].id.as_str(), "SIGIR");
    }

    #[test]
    fn rejects_degenerate_configs() {
        for cfg in [
            SynthConfig { authors: 0, ..small() },
            SynthConfig { venues: 0, ..small() },
            SynthConfig {
                institutions: 0,
                ..small()
            },
            SynthConfig { drift: 1.5, ..small() },
            SynthConfig {
                first_year: 2020,
                ..small()
            },
        ] {
            assert!(matches!(generate_synthetic(&cfg, 0), Err(CorpusError::Config(_))));
        }
    }
}
