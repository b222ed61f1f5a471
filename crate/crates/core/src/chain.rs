//! Chain-of-experts image description.
//!
//! Experts run one after another: each receives the image and the text the
//! previous expert produced (empty for the very first call). One step is a
//! pass over all `N` stages; the chain repeats that pass `C` times and the
//! last expert's output of the last step is the description.

use serde::{Deserialize, Serialize};

use crate::corpus::ImageRecord;
use crate::error::{Error, Result};
use crate::gateway::{self, BackendKind, BackendSpec, ConnectOptions, SharedBackend};

pub const PRIOR_SLOT: &str = "{prior_description}";
pub const DEFAULT_STAGE_TEMPLATE: &str =
    "Image description so far: {prior_description}. Refine and extend it with details you observe.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub stage: usize,
    pub step: usize,
    pub model: String,
}

/// Text describing one image, with the chain steps that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Description {
    pub text: String,
    pub provenance: Vec<Provenance>,
    pub verified: bool,
    pub source_image: String,
}

impl Description {
    /// The empty initial description of an image.
    pub fn empty(image: &ImageRecord) -> Self {
        Description {
            text: String::new(),
            provenance: Vec::new(),
            verified: false,
            source_image: image.location.clone(),
        }
    }

    pub fn from_text(image: &ImageRecord, text: &str) -> Self {
        Description {
            text: text.to_string(),
            ..Description::empty(image)
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChainStrategy {
    /// Each expert refines the previous expert's output.
    #[default]
    Sequential,
    /// Collect every expert's output, then select. Reserved, not runnable.
    AggregateSelect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainStage {
    pub backend: BackendSpec,
    pub prompt_template: String,
}

impl ChainStage {
    pub fn new(backend: BackendSpec) -> Self {
        ChainStage {
            backend,
            prompt_template: DEFAULT_STAGE_TEMPLATE.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertChainSpec {
    pub stages: Vec<ChainStage>,
    pub steps: usize,
    #[serde(default)]
    pub strategy: ChainStrategy,
}

impl ExpertChainSpec {
    /// Single-step chain over the given experts with the default template.
    pub fn sequential(backends: Vec<BackendSpec>) -> Self {
        ExpertChainSpec {
            stages: backends.into_iter().map(ChainStage::new).collect(),
            steps: 1,
            strategy: ChainStrategy::Sequential,
        }
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self
    }
}

/// One violated invariant, located by a config field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

pub fn validate_chain_spec(spec: &ExpertChainSpec) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut push = |path: String, message: &str| {
        out.push(Diagnostic {
            path,
            message: message.to_string(),
        })
    };
    if spec.stages.is_empty() {
        push("chain.stages".into(), "stages must be non-empty");
    }
    if spec.steps == 0 {
        push("chain.steps".into(), "steps must be at least 1");
    }
    if spec.strategy == ChainStrategy::AggregateSelect {
        push(
            "chain.strategy".into(),
            "aggregate-select is reserved and cannot be executed",
        );
    }
    for (i, stage) in spec.stages.iter().enumerate() {
        if stage.backend.kind != BackendKind::Expert {
            push(
                format!("chain.stages[{i}].kind"),
                "every stage must be an expert backend",
            );
        }
        if let Err(e) = stage.backend.validate() {
            push(format!("chain.stages[{i}]"), &e.to_string());
        }
    }
    out
}

pub fn render_stage_prompt(template: &str, prior: &str) -> String {
    template.replace(PRIOR_SLOT, prior)
}

/// A validated chain with connected backends.
pub struct ExpertChain {
    stages: Vec<(SharedBackend, String)>,
    steps: usize,
}

impl ExpertChain {
    pub fn new(spec: &ExpertChainSpec, options: ConnectOptions) -> Result<Self> {
        let diagnostics = validate_chain_spec(spec);
        if !diagnostics.is_empty() {
            let joined: Vec<String> = diagnostics.iter().map(ToString::to_string).collect();
            return Err(Error::invalid(joined.join("; ")));
        }
        let stages = spec
            .stages
            .iter()
            .map(|s| Ok((gateway::connect(&s.backend, options)?, s.prompt_template.clone())))
            .collect::<Result<Vec<_>>>()?;
        Ok(ExpertChain {
            stages,
            steps: spec.steps,
        })
    }

    /// Build from already connected backends, each with its prompt template.
    pub fn from_backends(stages: Vec<(SharedBackend, String)>, steps: usize) -> Result<Self> {
        if stages.is_empty() || steps == 0 {
            return Err(Error::invalid("a chain needs at least one stage and one step"));
        }
        for (i, (backend, _)) in stages.iter().enumerate() {
            if backend.spec().kind != BackendKind::Expert {
                return Err(Error::invalid(format!("stage {i} is not an expert backend")));
            }
        }
        Ok(ExpertChain { stages, steps })
    }

    pub fn stage_count(&self) -> usize {
        self.stages.len()
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn run(&self, image: &ImageRecord) -> Result<Description> {
        self.run_with_hook(image, &mut |_, _, _| Ok(()))
    }

    /// Run the chain, calling `hook(description, stage, step)` after every
    /// stage. The hook may rewrite the running description, e.g. to prune
    /// intermediate outputs.
    pub fn run_with_hook(
        &self,
        image: &ImageRecord,
        hook: &mut dyn FnMut(&mut Description, usize, usize) -> Result<()>,
    ) -> Result<Description> {
        let mut current = Description::empty(image);
        for step in 0..self.steps {
            for (stage, (backend, template)) in self.stages.iter().enumerate() {
                let wrap = |e: Error| Error::Chain {
                    stage,
                    step,
                    source: Box::new(e),
                };
                let prompt = render_stage_prompt(template, &current.text);
                let text = backend
                    .describe(image, &prompt, &current.text)
                    .map_err(wrap)?;
                current.text = text;
                current.verified = false;
                current.provenance.push(Provenance {
                    stage,
                    step,
                    model: backend.identity(),
                });
                hook(&mut current, stage, step).map_err(wrap)?;
            }
        }
        Ok(current)
    }
}

/// Connect the spec's backends and describe one image.
pub fn run_chain(image: &ImageRecord, spec: &ExpertChainSpec) -> Result<Description> {
    ExpertChain::new(spec, ConnectOptions { deterministic: true })?.run(image)
}
