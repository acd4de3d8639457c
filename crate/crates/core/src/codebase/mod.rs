//! The evolving program store.
//!
//! Each [`CodebaseEntry`] pairs a query with a program known to analyze
//! without errors, plus a cached abstract form and an embedding of the query
//! used for retrieval. The store persists as JSONL, one entry per line, in
//! insertion order.

mod bootstrap;
mod embed;
mod select;

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{RwLock, RwLockReadGuard};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{abstract_code, analyze, error_count, AbstractCode};
use crate::dsl::SourceProgram;

pub use bootstrap::{
    bootstrap, selection_size, BootstrapOptions, BootstrapReport, BootstrapTask, Skip,
};
pub use embed::{
    cosine, embed, fnv1a64, token_counts, token_slot, tokenize, Embedding, Similarity, EMBED_DIMS,
};
pub use select::{choose, select_survivor, select_survivor_with_model, Candidate, Survivor};

#[derive(Debug, Error)]
pub enum CodebaseError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("entry {id}: {message}")]
    Invalid { id: String, message: String },
    #[error("fraction {0} outside [0, 1]")]
    Fraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryStatus {
    Draft,
    Refined,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryStats {
    pub runs: u64,
    pub error_free_runs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodebaseEntry {
    pub id: String,
    pub query: String,
    pub logical_steps: Vec<String>,
    pub code: SourceProgram,
    #[serde(rename = "abstract")]
    pub abstract_code: AbstractCode,
    pub embedding: Embedding,
    pub status: EntryStatus,
    pub stats: EntryStats,
}

/// Whitespace-collapsed, lowercased query; entries are keyed by this.
pub fn normalize_query(query: &str) -> String {
    query
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Stable id for a query: hex FNV-1a of its normalized form.
pub fn entry_id(query: &str) -> String {
    format!("{:016x}", fnv1a64(normalize_query(query).as_bytes()))
}

impl CodebaseEntry {
    /// Build an entry, deriving id, abstract code and embedding. Fails if the
    /// program does not parse or has error-severity diagnostics.
    pub fn new(
        query: &str,
        logical_steps: Vec<String>,
        code: SourceProgram,
        status: EntryStatus,
    ) -> Result<Self, CodebaseError> {
        let id = entry_id(query);
        let ast = code.parse().map_err(|errs| CodebaseError::Invalid {
            id: id.clone(),
            message: format!("program does not parse: {}", errs[0]),
        })?;
        let errors = error_count(&analyze(&ast));
        if errors > 0 {
            return Err(CodebaseError::Invalid {
                id,
                message: format!("program has {errors} error diagnostic(s)"),
            });
        }
        Ok(CodebaseEntry {
            id,
            query: query.to_string(),
            logical_steps,
            abstract_code: abstract_code(&ast),
            embedding: embed(query),
            code,
            status,
            stats: EntryStats::default(),
        })
    }

    /// Check the derived fields against a fresh computation.
    pub fn validate(&self) -> Result<(), CodebaseError> {
        let invalid = |message: &str| CodebaseError::Invalid {
            id: self.id.clone(),
            message: message.to_string(),
        };
        if self.id != entry_id(&self.query) {
            return Err(invalid("id does not match query"));
        }
        let ast = self
            .code
            .parse()
            .map_err(|_| invalid("program does not parse"))?;
        if error_count(&analyze(&ast)) > 0 {
            return Err(invalid("program has error diagnostics"));
        }
        if abstract_code(&ast) != self.abstract_code {
            return Err(invalid("stale abstract code"));
        }
        if embed(&self.query) != self.embedding {
            return Err(invalid("stale embedding"));
        }
        Ok(())
    }
}

/// What happened to the store when an entry was offered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    Inserted,
    Replaced,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Codebase {
    entries: Vec<CodebaseEntry>,
}

impl Codebase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[CodebaseEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&CodebaseEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn get_mut(&mut self, id: &str) -> Option<&mut CodebaseEntry> {
        self.entries.iter_mut().find(|e| e.id == id)
    }

    pub fn find_by_query(&self, query: &str) -> Option<&CodebaseEntry> {
        self.get(&entry_id(query))
    }

    /// Add `entry`, replacing any entry for the same query in place. A
    /// replaced entry's stats are not carried over.
    pub fn upsert(&mut self, entry: CodebaseEntry) -> Result<Placement, CodebaseError> {
        entry.validate()?;
        match self.entries.iter_mut().find(|e| e.id == entry.id) {
            Some(slot) => {
                *slot = entry;
                Ok(Placement::Replaced)
            }
            None => {
                self.entries.push(entry);
                Ok(Placement::Inserted)
            }
        }
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("entries serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, CodebaseError> {
        let mut entries: Vec<CodebaseEntry> = Vec::new();
        let mut ids = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: CodebaseEntry =
                serde_json::from_str(line).map_err(|e| CodebaseError::Format {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            entry.validate()?;
            if !ids.insert(entry.id.clone()) {
                return Err(CodebaseError::Format {
                    line: i + 1,
                    message: format!("duplicate id {}", entry.id),
                });
            }
            entries.push(entry);
        }
        Ok(Codebase { entries })
    }

    /// Missing file loads as an empty codebase.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CodebaseError> {
        let path = path.as_ref();
        match fs::read_to_string(path) {
            Ok(text) => Self::from_jsonl(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Codebase::new()),
            Err(source) => Err(CodebaseError::Io {
                path: path.to_path_buf(),
                source,
            }),
        }
    }

    /// Write atomically: a sibling temp file is written, synced, then renamed
    /// over `path`.
    pub fn persist(&self, path: impl AsRef<Path>) -> Result<(), CodebaseError> {
        let path = path.as_ref();
        let io = |source| CodebaseError::Io {
            path: path.to_path_buf(),
            source,
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io)?;
        }
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = PathBuf::from(tmp);
        let mut f = fs::File::create(&tmp).map_err(io)?;
        f.write_all(self.to_jsonl().as_bytes()).map_err(io)?;
        f.sync_all().map_err(io)?;
        fs::rename(&tmp, path).map_err(io)
    }
}

/// Top-`k` entries by cosine similarity of `query` to each entry's query,
/// ties broken by ascending id.
pub fn retrieve<'a>(cb: &'a Codebase, query: &str, k: usize) -> Vec<&'a CodebaseEntry> {
    let mut scored: Vec<(Similarity, &CodebaseEntry)> = cb
        .entries
        .iter()
        .map(|e| (Similarity::between(query, &e.query), e))
        .collect();
    scored.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.id.cmp(&b.1.id)));
    scored.into_iter().take(k).map(|(_, e)| e).collect()
}

/// Shared codebase with many readers and a single writer. When backed by a
/// file, every mutation is persisted before the write lock is released.
#[derive(Debug, Default)]
pub struct CodebaseStore {
    inner: RwLock<Codebase>,
    path: Option<PathBuf>,
}

impl CodebaseStore {
    pub fn in_memory(cb: Codebase) -> Self {
        CodebaseStore {
            inner: RwLock::new(cb),
            path: None,
        }
    }

    pub fn open(path: impl Into<PathBuf>) -> Result<Self, CodebaseError> {
        let path = path.into();
        let cb = Codebase::load(&path)?;
        Ok(CodebaseStore {
            inner: RwLock::new(cb),
            path: Some(path),
        })
    }

    pub fn read(&self) -> RwLockReadGuard<'_, Codebase> {
        self.inner.read().unwrap_or_else(|p| p.into_inner())
    }

    pub fn snapshot(&self) -> Codebase {
        self.read().clone()
    }

    /// Apply `f` under the write lock, then persist if file-backed.
    pub fn update<T>(
        &self,
        f: impl FnOnce(&mut Codebase) -> Result<T, CodebaseError>,
    ) -> Result<T, CodebaseError> {
        let mut cb = self.inner.write().unwrap_or_else(|p| p.into_inner());
        let out = f(&mut cb)?;
        if let Some(path) = &self.path {
            cb.persist(path)?;
        }
        Ok(out)
    }

    pub fn into_inner(self) -> Codebase {
        self.inner.into_inner().unwrap_or_else(|p| p.into_inner())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::Origin;

    fn entry(query: &str) -> CodebaseEntry {
        let code = SourceProgram::new(
            "# step 1: find\nxs = find(image, \"cup\")\n# step 2: count\nreturn count(xs)\n",
            Origin::Generated,
        );
        CodebaseEntry::new(
            query,
            vec!["find".into(), "count".into()],
            code,
            EntryStatus::Draft,
        )
        .unwrap()
    }

    #[test]
    fn rejects_programs_with_errors() {
        let bad = SourceProgram::new("return count(xs)\n", Origin::Generated);
        assert!(CodebaseEntry::new("q", vec![], bad, EntryStatus::Draft).is_err());
    }

    #[test]
    fn empty_retrieval() {
        assert!(retrieve(&Codebase::new(), "anything", 2).is_empty());
    }

    #[test]
    fn identical_query_ranks_first() {
        let mut cb = Codebase::new();
        for q in [
            "how many cups",
            "is there a red mug",
            "what color is the plate",
        ] {
            cb.upsert(entry(q)).unwrap();
        }
        let got = retrieve(&cb, "is there a red mug", 2);
        assert_eq!(got[0].query, "is there a red mug");
        assert_eq!(got.len(), 2);
        assert_eq!(retrieve(&cb, "x", 10).len(), 3);
    }

    #[test]
    fn upsert_replaces_same_query() {
        let mut cb = Codebase::new();
        let mut e = entry("How many cups");
        e.stats.runs = 4;
        cb.upsert(e).unwrap();
        assert_eq!(
            cb.upsert(entry("how  many CUPS")).unwrap(),
            Placement::Replaced
        );
        assert_eq!(cb.len(), 1);
        assert_eq!(cb.entries()[0].stats.runs, 0);
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cb.jsonl");
        let mut cb = Codebase::new();
        cb.upsert(entry("how many cups")).unwrap();
        cb.upsert(entry("is there a dog")).unwrap();
        cb.persist(&path).unwrap();
        let back = Codebase::load(&path).unwrap();
        assert_eq!(back, cb);
        let line = cb.to_jsonl().lines().next().unwrap().to_string();
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        for k in [
            "id",
            "query",
            "logical_steps",
            "code",
            "abstract",
            "embedding",
            "status",
            "stats",
        ] {
            assert!(keys.contains(&k), "{k}");
        }
    }

    #[test]
    fn tampered_file_is_rejected() {
        let mut cb = Codebase::new();
        cb.upsert(entry("how many cups")).unwrap();
        let text = cb.to_jsonl().replace("how many cups", "how many plates");
        assert!(Codebase::from_jsonl(&text).is_err());
    }
}
