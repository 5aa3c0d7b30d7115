//! The `insrank` command line.
//!
//! Every tunable value is resolved from, in order of precedence, a command
//! line flag, a `key=value` line of the `--config` file, or the built-in
//! default. Each run writes a manifest next to its output recording the
//! resolved values, their provenance, the derived seeds, input digests and a
//! replayable argument list.
//!
//! Exit codes: 0 success, 1 usage error, 2 pipeline or data error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::{self, Display};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::corpus::{generate_synthetic, load_corpus, write_corpus, Corpus, CorpusPaths, SynthConfig, VenueId};
use crate::forest::ForestConfig;
use crate::manifest::{manifest_path, Provenance, RunManifest};
use crate::metrics::{ndcg_at, Ranking};
use crate::pipeline::{
    run_validation, ExperimentPlan, Method, MethodSettings, OraclePredictor, Phase, Predictor, RankIns2Config,
    RankIns2Predictor,
};
use crate::scoring::{RelevanceVector, ScoreBook};
use crate::smoothrank::SmoothingGrid;
use crate::temporal::{audit_line, Anchor, TemporalConfig};
use crate::InstitutionId;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Failure(_) => EXIT_FAILURE,
        }
    }
}

impl Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Failure(m) => write!(f, "error: {m}"),
        }
    }
}

fn usage(m: impl Display) -> CliError {
    CliError::Usage(m.to_string())
}

fn failure(m: impl Display) -> CliError {
    CliError::Failure(m.to_string())
}

/// Stream ids for seed derivation.
pub mod streams {
    pub const SYNTH: u64 = 1;
    pub const CLUSTERS: u64 = 2;
    pub const FOREST: u64 = 3;
}

/// Derives an independent seed from the master seed (splitmix64 finalizer).
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Parser)]
#[command(
    name = "insrank",
    version,
    about = "Predict and evaluate per-venue institution rankings"
)]
pub struct Cli {
    /// Worker threads; 0 uses every core. Outputs do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus.
    Synth(SynthArgs),
    /// Rank a venue's institutions for a target year.
    Rank(RankArgs),
    /// Score a ranking file with NDCG@n against a corpus.
    Eval(EvalArgs),
    /// Run every method on a validation year and report NDCG.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory for the four TSV files.
    #[arg(long)]
    pub out: PathBuf,
    /// `key=value` defaults, overridden by flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Tracked institutions.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub untracked: Option<usize>,
    #[arg(long)]
    pub venues: Option<usize>,
    /// Inclusive year span, `FIRST:LAST`.
    #[arg(long)]
    pub years: Option<YearSpan>,
    /// Papers per venue and year.
    #[arg(long)]
    pub papers: Option<usize>,
    #[arg(long)]
    pub authors: Option<usize>,
    #[arg(long)]
    pub vocabulary: Option<usize>,
    /// Year-to-year drift of institution strength in [0, 1].
    #[arg(long)]
    pub drift: Option<f64>,
    #[arg(long)]
    pub skew: Option<f64>,
    #[arg(long)]
    pub max_authors: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args, Clone)]
pub struct CorpusArgs {
    /// Directory holding papers.tsv, affiliations.tsv, institutions.tsv, venues.tsv.
    #[arg(long)]
    pub corpus_dir: Option<PathBuf>,
    #[arg(long)]
    pub papers_file: Option<PathBuf>,
    #[arg(long)]
    pub affiliations_file: Option<PathBuf>,
    #[arg(long)]
    pub institutions_file: Option<PathBuf>,
    #[arg(long)]
    pub venues_file: Option<PathBuf>,
}

impl CorpusArgs {
    fn paths(&self) -> Result<CorpusPaths, CliError> {
        let base = self.corpus_dir.as_ref().map(CorpusPaths::in_dir);
        let pick = |flag: &Option<PathBuf>, from_dir: Option<&PathBuf>, name: &str| {
            flag.clone()
                .or_else(|| from_dir.cloned())
                .ok_or_else(|| usage(format!("missing --{name} (or --corpus-dir)")))
        };
        Ok(CorpusPaths {
            papers: pick(&self.papers_file, base.as_ref().map(|b| &b.papers), "papers-file")?,
            affiliations: pick(
                &self.affiliations_file,
                base.as_ref().map(|b| &b.affiliations),
                "affiliations-file",
            )?,
            institutions: pick(
                &self.institutions_file,
                base.as_ref().map(|b| &b.institutions),
                "institutions-file",
            )?,
            venues: pick(&self.venues_file, base.as_ref().map(|b| &b.venues), "venues-file")?,
        })
    }
}

#[derive(Debug, Args, Clone)]
pub struct MethodArgs {
    /// `key=value` defaults, overridden by flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// NDCG cutoff n, also used by the smoothing grid search.
    #[arg(long)]
    pub cutoff: Option<usize>,
    /// Number of smoothing weights tried: 1/steps, 2/steps, ..., 1.
    #[arg(long)]
    pub grid_steps: Option<usize>,
    /// Author clusters K.
    #[arg(long)]
    pub clusters: Option<usize>,
    /// Ridge iterations u.
    #[arg(long)]
    pub u: Option<usize>,
    /// Ridge weights, comma separated; the last one repeats.
    #[arg(long)]
    pub lambda: Option<Lambdas>,
    /// Ridge anchor: `previous` iterate or `initial` fit.
    #[arg(long)]
    pub anchor: Option<AnchorArg>,
    /// Ridge weight replacing a singular first fit, or `none`.
    #[arg(long)]
    pub singular_fallback: Option<Fallback>,
    #[arg(long)]
    pub trees: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub min_leaf: Option<usize>,
    #[arg(long)]
    pub feature_fraction: Option<f64>,
    /// Train one forest per venue.
    #[arg(long)]
    pub per_venue_forest: Option<bool>,
    /// Master seed; clustering and forest seeds derive from it.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// previous-year, rankins1 or rankins2.
    #[arg(long)]
    pub method: Option<String>,
    /// Venue id or abbreviation.
    #[arg(long)]
    pub venue: Option<String>,
    #[arg(long)]
    pub target_year: Option<i32>,
    /// Rows written.
    #[arg(long)]
    pub top: Option<usize>,
    /// Ranking TSV: rank, institution id, relevance.
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub settings: MethodArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Ranking TSV as written by `rank`.
    #[arg(long)]
    pub predicted: PathBuf,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub venue: String,
    /// Year whose true scores are the reference.
    #[arg(long)]
    pub year: i32,
    #[arg(long, default_value_t = 20)]
    pub n: usize,
    /// Also write the result here; the manifest goes next to it.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Plan file with `phase=<n>:<venue>,...`, `validation_year=`, `target_year=`, `cutoff=`.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Overrides the plan's validation year (the target year follows it).
    #[arg(long)]
    pub validation_year: Option<i32>,
    /// Comma-separated methods.
    #[arg(long)]
    pub methods: Option<String>,
    /// Add a method that reads the truth; a harness sanity check.
    #[arg(long)]
    pub include_oracle: bool,
    /// Report CSV: venue, method, ndcg, status.
    #[arg(long)]
    pub output: PathBuf,
    /// Also write the detailed TSV report.
    #[arg(long)]
    pub tsv: Option<PathBuf>,
    #[command(flatten)]
    pub settings: MethodArgs,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YearSpan(pub i32, pub i32);

impl FromStr for YearSpan {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| format!("expected FIRST:LAST, got `{s}`"))?;
        let parse = |x: &str| x.trim().parse::<i32>().map_err(|_| format!("bad year `{x}`"));
        Ok(YearSpan(parse(a)?, parse(b)?))
    }
}

impl Display for YearSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.0, self.1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lambdas(pub Vec<f64>);

impl FromStr for Lambdas {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let values = s
            .split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|_| format!("bad lambda `{x}`")))
            .collect::<Result<Vec<_>, _>>()?;
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(format!("lambdas must be finite and non-negative, got `{s}`"));
        }
        Ok(Lambdas(values))
    }
}

impl Display for Lambdas {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(f64::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorArg(pub Anchor);

impl FromStr for AnchorArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "previous" => Ok(AnchorArg(Anchor::Previous)),
            "initial" => Ok(AnchorArg(Anchor::Initial)),
            _ => Err(format!("anchor must be `previous` or `initial`, got `{s}`")),
        }
    }
}

impl Display for AnchorArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self.0 {
            Anchor::Previous => "previous",
            Anchor::Initial => "initial",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fallback(pub Option<f64>);

impl FromStr for Fallback {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "none" {
            return Ok(Fallback(None));
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() && v > 0.0 => Ok(Fallback(Some(v))),
            _ => Err(format!("expected `none` or a positive ridge weight, got `{s}`")),
        }
    }
}

impl Display for Fallback {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            None => f.write_str("none"),
            Some(v) => write!(f, "{v}"),
        }
    }
}

/// Resolves settings by precedence and records them in a manifest.
struct Resolver {
    file: BTreeMap<String, String>,
    manifest: RunManifest,
}

impl Resolver {
    fn new(command: &str, config: Option<&Path>) -> Result<Self, CliError> {
        let mut manifest = RunManifest::new(command);
        manifest.argv.push(command.to_owned());
        let mut file = BTreeMap::new();
        if let Some(path) = config {
            let text =
                fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            for (i, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| usage(format!("{} line {}: expected key=value", path.display(), i + 1)))?;
                file.insert(k.trim().replace('_', "-"), v.trim().to_owned());
            }
            manifest.input(path).map_err(failure)?;
        }
        Ok(Self { file, manifest })
    }

    fn lookup<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<(T, Provenance)>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        if let Some(v) = flag {
            self.file.remove(key);
            return Ok(Some((v, Provenance::Flag)));
        }
        match self.file.remove(key) {
            Some(raw) => raw
                .parse::<T>()
                .map(|v| Some((v, Provenance::Config)))
                .map_err(|e| usage(format!("config key `{key}`: {e}"))),
            None => Ok(None),
        }
    }

    fn record<T: Display>(&mut self, key: &str, value: &T, provenance: Provenance) {
        self.manifest.set(key, value, provenance);
        self.manifest.argv.push(format!("--{key}"));
        self.manifest.argv.push(value.to_string());
    }

    fn get<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let (value, provenance) = self.lookup(key, flag)?.unwrap_or((default, Provenance::Default));
        self.record(key, &value, provenance);
        Ok(value)
    }

    fn require<T>(&mut self, key: &str, flag: Option<T>) -> Result<T, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let (value, provenance) = self
            .lookup(key, flag)?
            .ok_or_else(|| usage(format!("--{key} is required")))?;
        self.record(key, &value, provenance);
        Ok(value)
    }

    fn path_arg(&mut self, key: &str, path: &Path) {
        self.manifest.argv.push(format!("--{key}"));
        self.manifest.argv.push(path.display().to_string());
    }

    fn finish(&self) -> Result<(), CliError> {
        match self.file.keys().next() {
            Some(k) => Err(usage(format!("unknown config key `{k}`"))),
            None => Ok(()),
        }
    }

    fn corpus(&mut self, args: &CorpusArgs) -> Result<Corpus, CliError> {
        let paths = args.paths()?;
        for (key, path) in ["papers-file", "affiliations-file", "institutions-file", "venues-file"]
            .into_iter()
            .zip(paths.all())
        {
            self.path_arg(key, path);
        }
        let corpus = load_corpus(&paths).map_err(failure)?;
        for path in paths.all() {
            self.manifest.input(path).map_err(failure)?;
        }
        Ok(corpus)
    }

    fn settings(&mut self, args: &MethodArgs) -> Result<MethodSettings, CliError> {
        let d = MethodSettings::default();
        let cutoff = self.get("cutoff", args.cutoff, d.cutoff)?;
        if cutoff == 0 {
            return Err(usage("--cutoff must be at least 1"));
        }
        let steps = self.get("grid-steps", args.grid_steps, d.grid.values().len())?;
        let grid = SmoothingGrid::uniform(steps).map_err(usage)?;
        let clusters = self.get("clusters", args.clusters, d.rankins2.clusters)?;
        if clusters == 0 {
            return Err(usage("--clusters must be at least 1"));
        }
        let t = &d.rankins2.temporal;
        let iterations = self.get("u", args.u, t.iterations)?;
        let lambdas = self.get("lambda", args.lambda.clone(), Lambdas(t.lambdas.clone()))?;
        let anchor = self.get("anchor", args.anchor, AnchorArg(t.anchor))?;
        let fallback = self.get(
            "singular-fallback",
            args.singular_fallback,
            Fallback(t.singular_fallback),
        )?;
        let f = &d.rankins2.forest;
        let n_trees = self.get("trees", args.trees, f.n_trees)?;
        let max_depth = self.get("max-depth", args.max_depth, f.max_depth)?;
        let min_leaf = self.get("min-leaf", args.min_leaf, f.min_leaf)?;
        let feature_fraction = self.get("feature-fraction", args.feature_fraction, f.feature_fraction)?;
        let per_venue_forest = self.get("per-venue-forest", args.per_venue_forest, d.rankins2.per_venue_forest)?;
        let seed = self.get("seed", args.seed, 0u64)?;

        let cluster_seed = derive_seed(seed, streams::CLUSTERS);
        let forest_seed = derive_seed(seed, streams::FOREST);
        self.manifest.seed("clusters", cluster_seed);
        self.manifest.seed("forest", forest_seed);

        let forest = ForestConfig {
            n_trees,
            max_depth,
            min_leaf,
            feature_fraction,
            seed: forest_seed,
        };
        forest.validate().map_err(usage)?;
        Ok(MethodSettings {
            cutoff,
            grid,
            rankins2: RankIns2Config {
                clusters,
                cluster_seed,
                temporal: TemporalConfig {
                    iterations,
                    lambdas: lambdas.0,
                    anchor: anchor.0,
                    singular_fallback: fallback.0,
                },
                forest,
                per_venue_forest,
            },
        })
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| failure(format!("cannot create {}: {e}", parent.display())))?;
    }
    fs::write(path, contents).map_err(|e| failure(format!("cannot write {}: {e}", path.display())))
}

fn finish_manifest(manifest: &mut RunManifest, outputs: &[&Path], at: &Path) -> Result<(), CliError> {
    for o in outputs {
        manifest.output(o).map_err(failure)?;
    }
    manifest
        .write(at)
        .map_err(|e| failure(format!("cannot write manifest {}: {e}", at.display())))
}

fn cmd_synth(args: &SynthArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut r = Resolver::new("synth", args.config.as_deref())?;
    let d = SynthConfig::default();
    let institutions = r.get("m", args.m, d.institutions)?;
    let untracked_institutions = r.get("untracked", args.untracked, d.untracked_institutions)?;
    let venues = r.get("venues", args.venues, d.venues)?;
    let years = r.get("years", args.years, YearSpan(d.first_year, d.last_year))?;
    let papers_per_venue_year = r.get("papers", args.papers, d.papers_per_venue_year)?;
    let authors = r.get("authors", args.authors, d.authors)?;
    let vocabulary = r.get("vocabulary", args.vocabulary, d.vocabulary)?;
    let drift = r.get("drift", args.drift, d.drift)?;
    let skew = r.get("skew", args.skew, d.skew)?;
    let max_authors_per_paper = r.get("max-authors", args.max_authors, d.max_authors_per_paper)?;
    let seed = r.get("seed", args.seed, 0u64)?;
    r.finish()?;
    let config = SynthConfig {
        institutions,
        untracked_institutions,
        venues,
        first_year: years.0,
        last_year: years.1,
        papers_per_venue_year,
        authors,
        vocabulary,
        drift,
        skew,
        max_authors_per_paper,
    };
    config.validate().map_err(usage)?;
    let synth_seed = derive_seed(seed, streams::SYNTH);
    r.manifest.seed("synth", synth_seed);
    r.path_arg("out", &args.out);

    let corpus = generate_synthetic(&config, synth_seed).map_err(failure)?;
    fs::create_dir_all(&args.out).map_err(|e| failure(format!("cannot create {}: {e}", args.out.display())))?;
    let paths = CorpusPaths::in_dir(&args.out);
    write_corpus(&corpus, &paths).map_err(failure)?;

    let dir: PathBuf = args.out.components().collect();
    let at = manifest_path(&dir);
    finish_manifest(&mut r.manifest, &paths.all(), &at)?;
    let _ = writeln!(out, "wrote {} papers to {}", corpus.papers().len(), args.out.display());
    Ok(())
}

fn ranking_tsv(relevance: &RelevanceVector, top: usize) -> String {
    let ranking = relevance.to_ranking();
    ranking
        .top(top)
        .iter()
        .enumerate()
        .map(|(i, (id, v))| format!("{}\t{id}\t{v}\n", i + 1))
        .collect()
}

fn resolve_venue(corpus: &Corpus, name: &str) -> Result<VenueId, CliError> {
    corpus
        .resolve_venue(name)
        .cloned()
        .ok_or_else(|| usage(format!("unknown venue `{name}`")))
}

fn cmd_rank(args: &RankArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut r = Resolver::new("rank", args.settings.config.as_deref())?;
    let method_name = r.require("method", args.method.clone())?;
    let method: Method = method_name.parse().map_err(usage)?;
    let venue_name = r.require("venue", args.venue.clone())?;
    let target_year = r.require("target-year", args.target_year)?;
    let top = r.get("top", args.top, 20usize)?;
    let settings = r.settings(&args.settings)?;
    r.finish()?;
    let corpus = r.corpus(&args.corpus)?;
    r.path_arg("output", &args.output);
    let venue = resolve_venue(&corpus, &venue_name)?;
    let book = ScoreBook::from_corpus(&corpus);

    let mut outputs = vec![args.output.clone()];
    let relevance = if method == Method::RankIns2 {
        let predictor = RankIns2Predictor::new(settings.rankins2.clone());
        let p = predictor
            .predict_full(&corpus, &book, &venue, target_year)
            .map_err(|e| failure(format!("rankins2: {e}")))?;
        let weights_path = {
            let mut s = args.output.as_os_str().to_owned();
            s.push(".weights.tsv");
            PathBuf::from(s)
        };
        write_file(
            &weights_path,
            &audit_line(&venue, &settings.rankins2.temporal, &p.weights),
        )?;
        outputs.push(weights_path);
        p.relevance
    } else {
        settings
            .predictor(method)
            .predict(&corpus, &book, &venue, target_year)
            .map_err(|e| failure(format!("{}: {e}", method.name())))?
            .relevance
    };
    write_file(&args.output, &ranking_tsv(&relevance, top))?;
    let outs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    finish_manifest(&mut r.manifest, &outs, &manifest_path(&args.output))?;
    let _ = writeln!(out, "wrote {}", args.output.display());
    Ok(())
}

/// Reads `rank, institution, relevance` rows, keeping file order.
pub fn read_ranking(path: &Path) -> Result<Ranking, CliError> {
    let text = fs::read_to_string(path).map_err(|e| failure(format!("cannot read {}: {e}", path.display())))?;
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |why: &str| failure(format!("{} line {}: {why}", path.display(), i + 1));
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(bad("expected rank, institution, relevance"));
        }
        if i == 0 && cols[0].parse::<usize>().is_err() {
            continue; // header
        }
        let score = cols[2].parse::<f64>().map_err(|_| bad("bad relevance"))?;
        entries.push((InstitutionId::from(cols[1]), score));
    }
    Ranking::from_ordered(entries).map_err(failure)
}

fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut r = Resolver::new("eval", None)?;
    r.path_arg("predicted", &args.predicted);
    r.record("venue", &args.venue, Provenance::Flag);
    r.record("year", &args.year, Provenance::Flag);
    r.record("n", &args.n, Provenance::Flag);
    if args.n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    let corpus = r.corpus(&args.corpus)?;
    let venue = resolve_venue(&corpus, &args.venue)?;
    let ranking = read_ranking(&args.predicted)?;
    r.manifest.input(&args.predicted).map_err(failure)?;
    let book = ScoreBook::from_corpus(&corpus);
    let truth = book
        .get(&venue, args.year)
        .ok_or_else(|| failure(format!("no papers for venue `{venue}` in {}", args.year)))?
        .to_relevance();
    let ndcg = ndcg_at(&ranking, &truth, args.n).map_err(|e| failure(format!("mismatch: {e}")))?;
    let line = format!("ndcg@{}\t{ndcg}\n", args.n);
    let _ = out.write_all(line.as_bytes());
    let at = match &args.output {
        Some(path) => {
            r.path_arg("output", path);
            write_file(path, &line)?;
            r.manifest.output(path).map_err(failure)?;
            manifest_path(path)
        }
        None => {
            let mut s = args.predicted.as_os_str().to_owned();
            s.push(".eval");
            manifest_path(Path::new(&s))
        }
    };
    finish_manifest(&mut r.manifest, &[], &at)
}

fn default_plan(corpus: &Corpus, validation_year: i32) -> ExperimentPlan {
    let plan = ExperimentPlan::standard(validation_year + 1, validation_year).restricted_to(corpus);
    if !plan.phases.is_empty() {
        return plan;
    }
    ExperimentPlan {
        phases: vec![Phase {
            number: 1,
            venues: corpus.venues().iter().map(|v| v.id.to_string()).collect(),
        }],
        ..plan
    }
}

fn cmd_validate(args: &ValidateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut r = Resolver::new("validate", args.settings.config.as_deref())?;
    let methods_raw = r.get(
        "methods",
        args.methods.clone(),
        "previous-year,rankins1,rankins2".to_owned(),
    )?;
    let methods = methods_raw
        .split(',')
        .map(|m| m.trim().parse::<Method>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(usage)?;
    let settings = r.settings(&args.settings)?;
    let validation_override = r.lookup::<i32>("validation-year", args.validation_year)?;
    r.finish()?;
    let plan_file = match &args.plan {
        Some(path) => {
            let text =
                fs::read_to_string(path).map_err(|e| usage(format!("cannot read plan {}: {e}", path.display())))?;
            r.manifest.input(path).map_err(failure)?;
            r.path_arg("plan", path);
            Some(ExperimentPlan::parse(&text).map_err(usage)?)
        }
        None => None,
    };
    let corpus = r.corpus(&args.corpus)?;
    let mut plan = match plan_file {
        Some(p) => p,
        None => default_plan(&corpus, 2015),
    };
    if let Some((year, provenance)) = validation_override {
        plan.validation_year = year;
        plan.target_year = plan.target_year.max(year + 1);
        r.record("validation-year", &year, provenance);
    }
    plan.cutoff = settings.cutoff;
    if args.include_oracle {
        r.manifest.argv.push("--include-oracle".into());
        r.manifest.set("include-oracle", true, Provenance::Flag);
    }
    r.path_arg("output", &args.output);
    if let Some(tsv) = &args.tsv {
        r.path_arg("tsv", tsv);
    }

    let boxed = settings.predictors(&methods);
    let mut predictors: Vec<&dyn Predictor> = boxed.iter().map(|b| b.as_ref()).collect();
    if args.include_oracle {
        predictors.push(&OraclePredictor);
    }
    let report = run_validation(&corpus, &plan, &predictors).map_err(usage)?;
    write_file(&args.output, &report.to_csv())?;
    let mut outputs = vec![args.output.as_path()];
    if let Some(tsv) = &args.tsv {
        write_file(tsv, &report.to_tsv())?;
        outputs.push(tsv);
    }
    finish_manifest(&mut r.manifest, &outputs, &manifest_path(&args.output))?;
    for cell in &report.cells {
        if let Err(e) = &cell.outcome {
            log::warn!("{} / {}: {e}", cell.venue, cell.method);
        }
    }
    let _ = writeln!(out, "wrote {} cells to {}", report.cells.len(), args.output.display());
    if !report.cells.is_empty() && report.all_failed() {
        return Err(failure("every validation cell failed"));
    }
    Ok(())
}

/// Runs a parsed command line.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(failure)?;
    let mut buffer = Vec::new();
    let result = pool.install(|| match &cli.command {
        Command::Synth(a) => cmd_synth(a, &mut buffer),
        Command::Rank(a) => cmd_rank(a, &mut buffer),
        Command::Eval(a) => cmd_eval(a, &mut buffer),
        Command::Validate(a) => cmd_validate(a, &mut buffer),
    });
    let _ = out.write_all(&buffer);
    result
}

/// Parses `args` (including the program name) and runs them, returning the
/// exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "{e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ_per_stream() {
        let a = derive_seed(7, streams::SYNTH);
        let b = derive_seed(7, streams::CLUSTERS);
        let c = derive_seed(7, streams::FOREST);
        assert!(a != b && b != c && a != c);
        assert_eq!(a, derive_seed(7, streams::SYNTH));
        assert_ne!(derive_seed(0, streams::SYNTH), derive_seed(1, streams::SYNTH));
    }

    #[test]
    fn value_parsers_round_trip() {
        for s in ["2010:2016", "-3:4"] {
            assert_eq!(s.parse::<YearSpan>().unwrap().to_string(), s);
        }
        assert!("2010".parse::<YearSpan>().is_err());
        assert_eq!("200,50".parse::<Lambdas>().unwrap().to_string(), "200,50");
        assert!("-1".parse::<Lambdas>().is_err());
        assert_eq!("none".parse::<Fallback>().unwrap(), Fallback(None));
        assert_eq!("1e-3".parse::<Fallback>().unwrap().to_string(), "0.001");
        assert!("initial".parse::<AnchorArg>().is_ok());
        assert!("x".parse::<AnchorArg>().is_err());
    }

    #[test]
    fn help_exits_zero_and_bad_flags_exit_one() {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        assert_eq!(run(["insrank", "--help"], &mut o, &mut e), EXIT_OK);
        assert!(!o.is_empty());
        assert_eq!(run(["insrank", "frobnicate"], &mut o, &mut e), EXIT_USAGE);
        assert_eq!(
            run(["insrank", "synth", "--out", "x", "--m", "zero"], &mut o, &mut e),
            EXIT_USAGE
        );
    }
}
