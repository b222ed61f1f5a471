//! Corpus items and the line-delimited corpus manifest.
//!
//! A manifest file starts with a header record and holds one item per line:
//!
//! ```text
//! {"schema":"mmkg.corpus","version":1,"dataset":"crisis-demo"}
//! {"id":"i1","image_path":"images/i1.png","text":"Flood in Houston","label":"flood","stub_tags":["flood","water"]}
//! ```
//!
//! `image_path` may be relative to the manifest's directory or an
//! `http(s)://` URL. `text`, `label` and `stub_tags` are optional.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;

pub const CORPUS_SCHEMA: &str = "mmkg.corpus";
pub const CORPUS_VERSION: u32 = 1;

/// One corpus item: an image storage location with optional paired text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    #[serde(rename = "image_path")]
    pub location: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Words the stub embedder uses in place of pixels.
    #[serde(default, rename = "stub_tags", skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<String>,
    /// Directory relative locations are resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl ImageRecord {
    pub fn new(id: &str, location: &str) -> Self {
        ImageRecord {
            id: id.to_string(),
            location: location.to_string(),
            text: None,
            label: None,
            tags: Vec::new(),
            base_dir: None,
        }
    }

    pub fn with_tags<I, S>(mut self, tags: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.tags = tags.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_text(mut self, text: &str) -> Self {
        self.text = Some(text.to_string());
        self
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.label = Some(label.to_string());
        self
    }

    pub fn is_url(&self) -> bool {
        self.location.starts_with("http://") || self.location.starts_with("https://")
    }

    /// Filesystem path of a local image.
    pub fn resolved_path(&self) -> PathBuf {
        let path = Path::new(&self.location);
        match &self.base_dir {
            Some(base) if path.is_relative() => base.join(path),
            _ => path.to_path_buf(),
        }
    }

    /// Fails with a corpus error when a local image cannot be read.
    pub fn ensure_resolvable(&self) -> Result<()> {
        if self.location.trim().is_empty() {
            return Err(Error::Corpus(format!("item `{}` has no image path", self.id)));
        }
        if self.is_url() {
            return Ok(());
        }
        let path = self.resolved_path();
        match fs::metadata(&path) {
            Ok(meta) if meta.is_file() => Ok(()),
            Ok(_) => Err(Error::Corpus(format!("{} is not a file", path.display()))),
            Err(e) => Err(Error::Corpus(format!("{}: {e}", path.display()))),
        }
    }

    pub fn read_bytes(&self) -> Result<Vec<u8>> {
        if self.is_url() {
            return Err(Error::Corpus(format!(
                "{} is a URL, not a local file",
                self.location
            )));
        }
        let path = self.resolved_path();
        fs::read(&path).map_err(|e| Error::Corpus(format!("{}: {e}", path.display())))
    }

    /// Paired text, if present and not blank.
    pub fn external_text(&self) -> Option<&str> {
        self.text.as_deref().filter(|t| !t.trim().is_empty())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CorpusHeader {
    schema: String,
    version: u32,
    #[serde(default)]
    dataset: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusManifest {
    pub dataset_name: String,
    pub items: Vec<ImageRecord>,
}

impl CorpusManifest {
    pub fn new(dataset_name: &str, items: Vec<ImageRecord>) -> Self {
        CorpusManifest {
            dataset_name: dataset_name.to_string(),
            items,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn to_jsonl(&self) -> String {
        let header = CorpusHeader {
            schema: CORPUS_SCHEMA.into(),
            version: CORPUS_VERSION,
            dataset: self.dataset_name.clone(),
        };
        let mut out = jsonl::line(&header);
        for item in &self.items {
            out.push_str(&jsonl::line(item));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    /// Parse manifest text; relative image paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut lines = jsonl::records(text);
        let (line_no, header_line) = lines
            .next()
            .ok_or_else(|| Error::format(Some(1), "missing corpus header"))?;
        let header: CorpusHeader = serde_json::from_str(header_line)
            .map_err(|e| Error::format(Some(line_no), format!("bad header: {e}")))?;
        if header.schema != CORPUS_SCHEMA || header.version != CORPUS_VERSION {
            return Err(Error::format(
                Some(line_no),
                format!(
                    "expected {CORPUS_SCHEMA} v{CORPUS_VERSION}, found {} v{}",
                    header.schema, header.version
                ),
            ));
        }

        let mut seen = HashSet::new();
        let mut items = Vec::new();
        for (line_no, line) in lines {
            let mut item: ImageRecord = serde_json::from_str(line)
                .map_err(|e| Error::format(Some(line_no), e.to_string()))?;
            if item.id.trim().is_empty() {
                return Err(Error::format(Some(line_no), "item id is empty"));
            }
            if item.location.trim().is_empty() {
                return Err(Error::format(
                    Some(line_no),
                    format!("item `{}` has an empty image_path", item.id),
                ));
            }
            if !seen.insert(item.id.clone()) {
                return Err(Error::format(
                    Some(line_no),
                    format!("duplicate item id `{}`", item.id),
                ));
            }
            item.base_dir = base_dir.map(Path::to_path_buf);
            items.push(item);
        }
        Ok(CorpusManifest {
            dataset_name: header.dataset,
            items,
        })
    }
}

/// Read and validate a corpus manifest file.
pub fn ingest(path: &Path) -> Result<CorpusManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    CorpusManifest::parse(&text, path.parent())
}
