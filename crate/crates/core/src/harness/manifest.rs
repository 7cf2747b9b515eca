use std::fs;
use std::path::Path;

use crate::{Error, Result};

/// A completed stage: its configuration hash, the seeds it consumed and the files it wrote.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageRecord {
    pub name: String,
    pub hash: String,
    pub seeds: Vec<u64>,
    /// Paths relative to the run directory.
    pub artifacts: Vec<String>,
}

/// `manifest.txt`: stage records in completion order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    records: Vec<StageRecord>,
}

impl Manifest {
    pub fn records(&self) -> &[StageRecord] {
        &self.records
    }

    pub fn get(&self, name: &str) -> Option<&StageRecord> {
        self.records.iter().find(|r| r.name == name)
    }

    /// Adds or replaces the record with the same stage name.
    pub fn insert(&mut self, rec: StageRecord) {
        match self.records.iter_mut().find(|r| r.name == rec.name) {
            Some(slot) => *slot = rec,
            None => self.records.push(rec),
        }
    }

    /// Producing stage and hash of an artifact path.
    pub fn producer(&self, artifact: &str) -> Option<(&str, &str)> {
        self.records
            .iter()
            .find(|r| r.artifacts.iter().any(|a| a == artifact))
            .map(|r| (r.name.as_str(), r.hash.as_str()))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# bimgame run manifest\n");
        for r in &self.records {
            let seeds: Vec<String> = r.seeds.iter().map(u64::to_string).collect();
            out.push_str(&format!("stage {} {} seeds={}\n", r.name, r.hash, seeds.join(";")));
            for a in &r.artifacts {
                out.push_str(&format!("artifact {} {} {}\n", a, r.name, r.hash));
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut m = Manifest::default();
        for (i, line) in text.lines().enumerate() {
            let bad = || Error::Format(format!("manifest line {}: {line:?}", i + 1));
            let f: Vec<&str> = line.split_whitespace().collect();
            match f.as_slice() {
                [] => {}
                [c, ..] if c.starts_with('#') => {}
                ["stage", name, hash, seeds] => {
                    let list = seeds.strip_prefix("seeds=").ok_or_else(bad)?;
                    let seeds = list
                        .split(';')
                        .filter(|s| !s.is_empty())
                        .map(|s| s.parse::<u64>().map_err(|_| bad()))
                        .collect::<Result<Vec<_>>>()?;
                    m.records.push(StageRecord {
                        name: name.to_string(),
                        hash: hash.to_string(),
                        seeds,
                        artifacts: vec![],
                    });
                }
                ["artifact", path, stage, hash] => {
                    let rec = m.records.last_mut().filter(|r| r.name == *stage && r.hash == *hash);
                    rec.ok_or_else(bad)?.artifacts.push(path.to_string());
                }
                _ => return Err(bad()),
            }
        }
        Ok(m)
    }

    pub fn load_or_empty(path: &Path) -> Result<Self> {
        match fs::read_to_string(path) {
            Ok(text) => Self::parse(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(e.into()),
        }
    }

    /// Writes through a temporary file so an interrupted run never leaves a torn manifest.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("txt.tmp");
        fs::write(&tmp, self.to_text())?;
        fs::rename(tmp, path)?;
        Ok(())
    }
}
