//! Run configuration shared by every subcommand. A JSON file supplies the
//! base values and command-line flags override them.

use std::fs;
use std::path::{Path, PathBuf};

use neuropath_core::localization::{Measure, SelectionMode};
use neuropath_core::pathways::AnalysisConfig;
use neuropath_core::synthesis::{DistanceBound, SynthMethod, SynthesisParams};
use neuropath_core::{Architecture, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Directory holding the four MNIST IDX files.
    pub data_dir: PathBuf,
    /// Model directory; `<out>/model` when absent.
    pub model: Option<PathBuf>,
    pub out: PathBuf,
    pub architecture: String,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Use only the first N training samples.
    pub train_limit: Option<usize>,
    /// Use only the first N test samples for localization and synthesis.
    pub test_limit: Option<usize>,
    /// Synthesize from at most this many correctly classified test inputs.
    pub synth_limit: usize,
    pub alpha: f64,
    pub beta: f64,
    pub measures: Vec<String>,
    pub k: Vec<usize>,
    pub mode: String,
    pub synth: Vec<String>,
    pub step: f64,
    pub d_max: f64,
    pub iterations: usize,
    pub distance_mode: String,
    pub mga_anchor: bool,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let synth = SynthesisParams::default();
        let train = TrainConfig::default();
        RunConfig {
            data_dir: PathBuf::from("data/mnist"),
            model: None,
            out: PathBuf::from("out"),
            architecture: "8 * <20>, <10>".into(),
            epochs: train.epochs,
            batch_size: train.batch_size,
            learning_rate: train.learning_rate,
            train_limit: None,
            test_limit: None,
            synth_limit: 1000,
            alpha: 0.7,
            beta: 0.0,
            measures: Measure::ALL.iter().map(|m| m.name().to_string()).collect(),
            k: vec![1, 5, 10],
            mode: SelectionMode::Pathway.name().into(),
            synth: vec![SynthMethod::Mga.name().into(), SynthMethod::Ga.name().into()],
            step: synth.step,
            d_max: synth.d_max,
            iterations: synth.iterations,
            distance_mode: synth.bound.name().into(),
            mga_anchor: synth.anchor,
            seed: 0,
        }
    }
}

/// Parsed form of the string-typed fields.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub architecture: Architecture,
    pub train: TrainConfig,
    pub analysis: AnalysisConfig,
    pub measures: Vec<Measure>,
    pub mode: SelectionMode,
    pub methods: Vec<SynthMethod>,
    pub synthesis: SynthesisParams,
}

fn flag(name: &str, e: neuropath_core::Error) -> Error {
    match e {
        neuropath_core::Error::Usage(m) | neuropath_core::Error::InvalidNetwork(m) => {
            Error::Usage(format!("--{name}: {m}"))
        }
        other => Error::Usage(format!("--{name}: {other}")),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })
    }

    pub fn model_dir(&self) -> PathBuf {
        self.model.clone().unwrap_or_else(|| self.out.join("model"))
    }

    /// Validates every field and parses the string-typed ones.
    pub fn resolve(&self) -> Result<Resolved> {
        let architecture: Architecture = self.architecture.parse().map_err(|e| flag("arch", e))?;
        let train = TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed: self.seed,
        };
        train.validate().map_err(|e| flag("epochs/--batch-size/--learning-rate", e))?;
        let analysis = AnalysisConfig {
            alpha: self.alpha,
            beta: self.beta,
        };
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Usage(format!("--alpha must lie in (0, 1], got {}", self.alpha)));
        }
        analysis.validate().map_err(|e| flag("beta", e))?;
        if self.measures.is_empty() {
            return Err(Error::Usage("--measure: at least one measure is required".into()));
        }
        let measures = self
            .measures
            .iter()
            .map(|m| m.parse::<Measure>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| flag("measure", e))?;
        if self.k.is_empty() || self.k.contains(&0) {
            return Err(Error::Usage(format!("--k: values must be at least 1, got {:?}", self.k)));
        }
        let mode: SelectionMode = self.mode.parse().map_err(|e| flag("mode", e))?;
        if self.synth.is_empty() {
            return Err(Error::Usage("--synth: at least one synthesizer is required".into()));
        }
        let methods = self
            .synth
            .iter()
            .map(|m| m.parse::<SynthMethod>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| flag("synth", e))?;
        if mode == SelectionMode::Neuron && methods.contains(&SynthMethod::Mga) {
            return Err(Error::Usage("--synth mga needs --mode pathway".into()));
        }
        let bound: DistanceBound = self.distance_mode.parse().map_err(|e| flag("distance-mode", e))?;
        let synthesis = SynthesisParams {
            method: methods[0],
            step: self.step,
            d_max: self.d_max,
            iterations: self.iterations,
            beta: self.beta,
            bound,
            anchor: self.mga_anchor,
        };
        synthesis.validate().map_err(|e| flag("step/--dmax/--iterations", e))?;
        if self.synth_limit == 0 {
            return Err(Error::Usage("--synth-limit must be at least 1".into()));
        }
        Ok(Resolved {
            architecture,
            train,
            analysis,
            measures,
            mode,
            methods,
            synthesis,
        })
    }
}
