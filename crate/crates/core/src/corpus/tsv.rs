//! Tab-separated corpus files.
//!
//! Four headerless UTF-8 files, `\t` separated, `\n` terminated:
//!
//! | file          | columns                                            |
//! |---------------|----------------------------------------------------|
//! | institutions  | `institution_id`, `display_name`                   |
//! | venues        | `venue_id`, `abbreviation`                         |
//! | papers        | `paper_id`, `year`, `venue_id`, `keyword;list`     |
//! | affiliations  | `paper_id`, `author_id`, `institution_id` or `-`   |

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{Authorship, Corpus, CorpusError, InstitutionId, PaperRecord, Venue};

const UNAFFILIATED: &str = "-";

/// Locations of the four corpus files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusPaths {
    pub papers: PathBuf,
    pub affiliations: PathBuf,
    pub institutions: PathBuf,
    pub venues: PathBuf,
}

impl CorpusPaths {
    /// Conventional file names inside `dir`.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        Self {
            papers: dir.join("papers.tsv"),
            affiliations: dir.join("affiliations.tsv"),
            institutions: dir.join("institutions.tsv"),
            venues: dir.join("venues.tsv"),
        }
    }

    pub fn all(&self) -> [&Path; 4] {
        [&self.papers, &self.affiliations, &self.institutions, &self.venues]
    }
}

fn read(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_owned(),
        source,
    })
}

/// Yields `(1-based line number, columns)`, skipping empty lines.
fn rows<'a>(
    path: &'a Path,
    text: &'a str,
    columns: usize,
) -> impl Iterator<Item = Result<(usize, Vec<&'a str>), CorpusError>> + 'a {
    text.split('\n')
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(move |(i, line)| {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != columns {
                return Err(CorpusError::Malformed {
                    file: path.to_owned(),
                    line: i + 1,
                    reason: format!("expected {columns} columns, found {}", cols.len()),
                });
            }
            Ok((i + 1, cols))
        })
}

/// Loads and joins the four corpus files.
pub fn load_corpus(paths: &CorpusPaths) -> Result<Corpus, CorpusError> {
    let text = read(&paths.institutions)?;
    let institutions = rows(&paths.institutions, &text, 2)
        .map(|r| r.map(|(_, c)| (InstitutionId::from(c[0]), c[1].to_owned())))
        .collect::<Result<Vec<_>, _>>()?;

    let text = read(&paths.venues)?;
    let venues = rows(&paths.venues, &text, 2)
        .map(|r| {
            r.map(|(_, c)| Venue {
                id: c[0].into(),
                abbreviation: c[1].to_owned(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let text = read(&paths.papers)?;
    let mut papers = Vec::new();
    let mut by_id: HashMap<String, usize> = HashMap::new();
    for row in rows(&paths.papers, &text, 4) {
        let (line, c) = row?;
        let year = c[1].parse::<i32>().map_err(|e| CorpusError::Malformed {
            file: paths.papers.clone(),
            line,
            reason: format!("unparsable year `{}`: {e}", c[1]),
        })?;
        if by_id.insert(c[0].to_owned(), papers.len()).is_some() {
            return Err(CorpusError::DuplicateId {
                kind: "paper",
                id: c[0].to_owned(),
            });
        }
        papers.push(PaperRecord {
            id: c[0].into(),
            year,
            venue: c[2].into(),
            keywords: c[3].split(';').filter(|k| !k.is_empty()).map(str::to_owned).collect(),
            authorships: Vec::new(),
        });
    }

    let text = read(&paths.affiliations)?;
    for row in rows(&paths.affiliations, &text, 3) {
        let (line, c) = row?;
        let &idx = by_id.get(c[0]).ok_or_else(|| CorpusError::UnknownPaper {
            file: paths.affiliations.clone(),
            line,
            id: c[0].to_owned(),
        })?;
        let authorships = &mut papers[idx].authorships;
        let pos = match authorships.iter().position(|a| a.author.as_str() == c[1]) {
            Some(pos) => pos,
            None => {
                authorships.push(Authorship {
                    author: c[1].into(),
                    institutions: Vec::new(),
                });
                authorships.len() - 1
            }
        };
        if c[2] != UNAFFILIATED {
            let insts = &mut authorships[pos].institutions;
            if !insts.iter().any(|i| i.as_str() == c[2]) {
                insts.push(c[2].into());
            }
        }
    }

    Corpus::new(institutions, venues, papers)
}

fn check(what: &'static str, value: &str, extra: &[char]) -> Result<(), CorpusError> {
    if value.contains(['\t', '\n']) || value.contains(extra) {
        return Err(CorpusError::Unwritable {
            what,
            value: value.to_owned(),
        });
    }
    Ok(())
}

fn write(path: &Path, contents: &str) -> Result<(), CorpusError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|source| CorpusError::Io {
                path: parent.to_owned(),
                source,
            })?;
        }
    }
    fs::write(path, contents).map_err(|source| CorpusError::Io {
        path: path.to_owned(),
        source,
    })
}

/// Writes the corpus in the format read by [`load_corpus`].
pub fn write_corpus(corpus: &Corpus, paths: &CorpusPaths) -> Result<(), CorpusError> {
    let mut out = String::new();
    for (row, id) in corpus.tracked().iter().enumerate() {
        check("institution id", id.as_str(), &[])?;
        let name = corpus.institution_name(row);
        check("institution name", name, &[])?;
        out.push_str(&format!("{id}\t{name}\n"));
    }
    write(&paths.institutions, &out)?;

    out.clear();
    for v in corpus.venues() {
        check("venue id", v.id.as_str(), &[])?;
        check("venue abbreviation", &v.abbreviation, &[])?;
        out.push_str(&format!("{}\t{}\n", v.id, v.abbreviation));
    }
    write(&paths.venues, &out)?;

    out.clear();
    let mut affiliations = String::new();
    for p in corpus.papers() {
        check("paper id", p.id.as_str(), &[])?;
        for k in &p.keywords {
            check("keyword", k, &[';'])?;
        }
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            p.id,
            p.year,
            p.venue,
            p.keywords.join(";")
        ));
        for a in &p.authorships {
            check("author id", a.author.as_str(), &[])?;
            if a.institutions.is_empty() {
                affiliations.push_str(&format!("{}\t{}\t{UNAFFILIATED}\n", p.id, a.author));
            }
            for inst in &a.institutions {
                check("institution id", inst.as_str(), &[])?;
                affiliations.push_str(&format!("{}\t{}\t{inst}\n", p.id, a.author));
            }
        }
    }
    write(&paths.papers, &out)?;
    write(&paths.affiliations, &affiliations)?;
    Ok(())
}
