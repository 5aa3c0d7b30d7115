//! Run manifests: everything needed to repeat a command exactly.
//!
//! A manifest is a small TSV file. Each line starts with a record kind:
//!
//! ```text
//! command   rank
//! version   0.1.0
//! argv      rank --corpus-dir data --method rankins1 ...
//! config    <key>  <value>  <default|config|flag>
//! seed      <name> <value>
//! input     <path> <sha256>
//! output    <path> <sha256>
//! ```

use std::fmt::{self, Write as _};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

/// Where a resolved setting came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Default,
    Config,
    Flag,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Default => "default",
            Provenance::Config => "config",
            Provenance::Flag => "flag",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Setting {
    pub key: String,
    pub value: String,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    /// Arguments that replay the run with every setting spelled out.
    pub argv: Vec<String>,
    pub config: Vec<Setting>,
    pub seeds: Vec<(String, u64)>,
    pub inputs: Vec<(PathBuf, String)>,
    pub outputs: Vec<(PathBuf, String)>,
}

/// Hex SHA-256 of a file's contents.
pub fn file_digest(path: &Path) -> io::Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// `<output>.manifest.tsv`.
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".manifest.tsv");
    PathBuf::from(name)
}

fn clean(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            ..Self::default()
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString, provenance: Provenance) {
        self.config.push(Setting {
            key: key.to_owned(),
            value: value.to_string(),
            provenance,
        });
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.seeds.push((name.to_owned(), value));
    }

    pub fn input(&mut self, path: &Path) -> io::Result<()> {
        let digest = file_digest(path)?;
        self.inputs.push((path.to_owned(), digest));
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> io::Result<()> {
        let digest = file_digest(path)?;
        self.outputs.push((path.to_owned(), digest));
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&Setting> {
        self.config.iter().find(|s| s.key == key)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "command\t{}", clean(&self.command));
        let _ = writeln!(out, "version\t{}", clean(&self.version));
        let argv: Vec<String> = self.argv.iter().map(|a| clean(a)).collect();
        let _ = writeln!(out, "argv\t{}", argv.join("\t"));
        for s in &self.config {
            let _ = writeln!(out, "config\t{}\t{}\t{}", clean(&s.key), clean(&s.value), s.provenance);
        }
        for (name, value) in &self.seeds {
            let _ = writeln!(out, "seed\t{}\t{value}", clean(name));
        }
        for (kind, files) in [("input", &self.inputs), ("output", &self.outputs)] {
            for (path, digest) in files {
                let _ = writeln!(out, "{kind}\t{}\t{digest}", clean(&path.display().to_string()));
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut m = Self::default();
        for (n, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let bad = || format!("manifest line {}: malformed `{line}`", n + 1);
            match (fields[0], fields.len()) {
                ("command", 2) => m.command = fields[1].to_owned(),
                ("version", 2) => m.version = fields[1].to_owned(),
                ("argv", _) => {
                    m.argv = fields[1..]
                        .iter()
                        .filter(|a| !a.is_empty())
                        .map(|a| a.to_string())
                        .collect()
                }
                ("config", 4) => m.config.push(Setting {
                    key: fields[1].to_owned(),
                    value: fields[2].to_owned(),
                    provenance: match fields[3] {
                        "default" => Provenance::Default,
                        "config" => Provenance::Config,
                        "flag" => Provenance::Flag,
                        _ => return Err(bad()),
                    },
                }),
                ("seed", 3) => m
                    .seeds
                    .push((fields[1].to_owned(), fields[2].parse().map_err(|_| bad())?)),
                ("input", 3) => m.inputs.push((fields[1].into(), fields[2].to_owned())),
                ("output", 3) => m.outputs.push((fields[1].into(), fields[2].to_owned())),
                _ => return Err(bad()),
            }
        }
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        fs::write(path, self.to_tsv())
    }
}
