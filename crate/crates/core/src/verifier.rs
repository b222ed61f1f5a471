//! Cross-modal verification of generated descriptions.
//!
//! A description is cut into windows (sentences by default), each window is
//! scored against the image embedding with cosine similarity clamped to
//! `[0, 1]`, and windows scoring below `tau` are dropped. Survivors are
//! joined with single spaces in their original order.

use serde::{Deserialize, Serialize};

use crate::chain::Description;
use crate::corpus::ImageRecord;
use crate::error::{Error, Result};
use crate::gateway::{cosine_similarity, EmbeddingVector, ModelBackend};

pub const DEFAULT_TAU: f64 = 0.25;
pub const DEFAULT_FIXED_M: usize = 32;
pub const DEFAULT_MAX_WINDOW_TOKENS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Segmentation {
    #[default]
    Sentence,
    FixedM,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct VerifierConfig {
    pub tau: f64,
    pub segmentation: Segmentation,
    pub fixed_m: usize,
    pub max_window_tokens: usize,
    /// Also prune after every chain stage, not only the final output.
    pub prune_each_stage: bool,
}

impl Default for VerifierConfig {
    fn default() -> Self {
        VerifierConfig {
            tau: DEFAULT_TAU,
            segmentation: Segmentation::Sentence,
            fixed_m: DEFAULT_FIXED_M,
            max_window_tokens: DEFAULT_MAX_WINDOW_TOKENS,
            prune_each_stage: false,
        }
    }
}

impl VerifierConfig {
    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::invalid(format!("tau {} outside [0, 1]", self.tau)));
        }
        if self.fixed_m == 0 || self.max_window_tokens == 0 {
            return Err(Error::invalid("fixed-m and max-window-tokens must be at least 1"));
        }
        Ok(())
    }

    fn chunk_len(&self) -> usize {
        match self.segmentation {
            Segmentation::Sentence => self.fixed_m.min(self.max_window_tokens),
            Segmentation::FixedM => self.fixed_m,
        }
    }
}

/// A contiguous run of description tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub text: String,
    pub start: usize,
    pub token_count: usize,
    pub score: Option<f64>,
}

fn ends_sentence(token: &str) -> bool {
    token.ends_with(['.', '!', '?'])
}

/// Split whitespace tokens into windows that partition the sequence.
pub fn segment_text(text: &str, config: &VerifierConfig) -> Result<Vec<Window>> {
    config.validate()?;
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.is_empty() {
        return Err(Error::invalid("cannot segment an empty description"));
    }

    let mut spans: Vec<(usize, usize)> = Vec::new();
    match config.segmentation {
        Segmentation::FixedM => spans.push((0, tokens.len())),
        Segmentation::Sentence => {
            let mut start = 0;
            for (i, tok) in tokens.iter().enumerate() {
                if ends_sentence(tok) {
                    spans.push((start, i + 1));
                    start = i + 1;
                }
            }
            if start < tokens.len() {
                spans.push((start, tokens.len()));
            }
        }
    }

    let oversized = |len: usize| match config.segmentation {
        Segmentation::FixedM => true,
        Segmentation::Sentence => len > config.max_window_tokens,
    };
    let chunk = config.chunk_len();
    let mut windows = Vec::new();
    for (start, end) in spans {
        let pieces: Vec<(usize, usize)> = if oversized(end - start) {
            (start..end)
                .step_by(chunk)
                .map(|s| (s, (s + chunk).min(end)))
                .collect()
        } else {
            vec![(start, end)]
        };
        for (s, e) in pieces {
            windows.push(Window {
                text: tokens[s..e].join(" "),
                start: s,
                token_count: e - s,
                score: None,
            });
        }
    }
    Ok(windows)
}

pub fn segment(description: &Description, config: &VerifierConfig) -> Result<Vec<Window>> {
    segment_text(&description.text, config)
}

/// Cosine similarity clamped into `[0, 1]`.
pub fn clamped_cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    Ok(cosine_similarity(a, b)?.clamp(0.0, 1.0))
}

pub fn score_window(
    image_embedding: &EmbeddingVector,
    window: &Window,
    embedder: &dyn ModelBackend,
) -> Result<f64> {
    let text_embedding = embedder.embed_text(&window.text)?;
    clamped_cosine(image_embedding, &text_embedding)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VerifierDiagnostic {
    /// Every window scored below the threshold.
    WarnAllPruned,
    /// The description had no tokens.
    EmptyDescription,
    /// A window embedded to the zero vector; it was scored 0.
    DegenerateWindow { index: usize },
}

impl std::fmt::Display for VerifierDiagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VerifierDiagnostic::WarnAllPruned => f.write_str("every window fell below tau"),
            VerifierDiagnostic::EmptyDescription => f.write_str("description is empty"),
            VerifierDiagnostic::DegenerateWindow { index } => {
                write!(f, "window {index} embedded to the zero vector, scored 0")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub window_index: usize,
    pub text: String,
    pub score: f64,
    pub kept: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneOutcome {
    pub description: Description,
    /// All windows with their scores set.
    pub windows: Vec<Window>,
    pub kept: Vec<bool>,
    pub diagnostics: Vec<VerifierDiagnostic>,
}

impl PruneOutcome {
    pub fn kept_count(&self) -> usize {
        self.kept.iter().filter(|k| **k).count()
    }

    pub fn pruned_count(&self) -> usize {
        self.kept.len() - self.kept_count()
    }

    pub fn score_records(&self) -> Vec<ScoreRecord> {
        self.windows
            .iter()
            .zip(&self.kept)
            .enumerate()
            .map(|(i, (w, kept))| ScoreRecord {
                window_index: i,
                text: w.text.clone(),
                score: w.score.unwrap_or(0.0),
                kept: *kept,
            })
            .collect()
    }
}

/// Windows of `text` with scores against the image, plus diagnostics.
fn scored_windows(
    image: &ImageRecord,
    text: &str,
    config: &VerifierConfig,
    embedder: &dyn ModelBackend,
) -> Result<(Vec<Window>, Vec<VerifierDiagnostic>)> {
    let mut windows = segment_text(text, config)?;
    let image_embedding = embedder.embed_image(image)?;
    if image_embedding.is_zero() {
        return Err(Error::DegenerateEmbedding(format!(
            "image `{}` embedded to the zero vector",
            image.id
        )));
    }
    let mut diagnostics = Vec::new();
    for (index, window) in windows.iter_mut().enumerate() {
        let score = match score_window(&image_embedding, window, embedder) {
            Ok(s) => s,
            Err(Error::DegenerateEmbedding(_)) => {
                diagnostics.push(VerifierDiagnostic::DegenerateWindow { index });
                0.0
            }
            Err(e) => return Err(e),
        };
        window.score = Some(score);
    }
    Ok((windows, diagnostics))
}

pub fn prune(
    image: &ImageRecord,
    description: &Description,
    config: &VerifierConfig,
    embedder: &dyn ModelBackend,
) -> Result<PruneOutcome> {
    config.validate()?;
    let mut verified = description.clone();
    verified.verified = true;
    if description.text.split_whitespace().next().is_none() {
        verified.text.clear();
        return Ok(PruneOutcome {
            description: verified,
            windows: Vec::new(),
            kept: Vec::new(),
            diagnostics: vec![VerifierDiagnostic::EmptyDescription],
        });
    }

    let (windows, mut diagnostics) = scored_windows(image, &description.text, config, embedder)?;
    let kept: Vec<bool> = windows
        .iter()
        .map(|w| w.score.unwrap_or(0.0) >= config.tau)
        .collect();
    let survivors: Vec<&str> = windows
        .iter()
        .zip(&kept)
        .filter(|(_, k)| **k)
        .map(|(w, _)| w.text.as_str())
        .collect();
    if survivors.is_empty() {
        diagnostics.push(VerifierDiagnostic::WarnAllPruned);
    }
    verified.text = survivors.join(" ");
    Ok(PruneOutcome {
        description: verified,
        windows,
        kept,
        diagnostics,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub tau: f64,
    pub retained_tokens: usize,
}

/// Retained token count at each threshold. Thresholds are clamped into
/// `[0, 1]` and must be ascending.
pub fn threshold_sweep(
    image: &ImageRecord,
    description: &Description,
    taus: &[f64],
    config: &VerifierConfig,
    embedder: &dyn ModelBackend,
) -> Result<Vec<SweepRow>> {
    if taus.iter().any(|t| t.is_nan()) {
        return Err(Error::invalid("tau values must be numbers"));
    }
    if taus.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("tau values must be sorted ascending"));
    }
    let (windows, _) = scored_windows(image, &description.text, config, embedder)?;
    Ok(taus
        .iter()
        .map(|&t| {
            let tau = t.clamp(0.0, 1.0);
            let retained_tokens = windows
                .iter()
                .filter(|w| w.score.unwrap_or(0.0) >= tau)
                .map(|w| w.token_count)
                .sum();
            SweepRow {
                tau,
                retained_tokens,
            }
        })
        .collect())
}
