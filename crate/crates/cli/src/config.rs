//! Run configuration: built-in defaults, overlaid by an optional TOML file,
//! overlaid by command-line flags.

use std::path::Path;

use anyhow::{bail, Context, Result};
use dialex_core::bli_eval::Protocol;
use dialex_core::classifier::{ForestParams, DEFAULT_THRESHOLD};
use dialex_core::lexicon::LabelPolicy;
use dialex_core::retrieval::{Bm25Params, RECALL_DEPTH};
use dialex_core::stringsim::FeatureExtractor;
use serde::{Deserialize, Serialize};

/// Keys accepted in a `--config` file. Everything is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub lowercase: Option<bool>,
    pub inflected_positive: Option<bool>,
    pub k: Option<usize>,
    pub threshold: Option<f64>,
    pub seeds: Option<Vec<u64>>,
    pub train_fraction: Option<f64>,
    pub stratify: Option<bool>,
    pub split_seed: Option<u64>,
    pub ablation_seeds: Option<Vec<u64>>,
    pub ablation_fractions: Option<Vec<f64>>,
    pub vocab_cap: Option<usize>,
    pub depth: Option<usize>,
    pub forest: Option<ForestConfig>,
    pub bm25: Option<Bm25Config>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: Option<usize>,
    pub max_features: Option<usize>,
    pub bootstrap: Option<bool>,
    pub min_samples_split: Option<usize>,
    pub max_depth: Option<usize>,
    pub seed: Option<u64>,
    pub positive_weight: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bm25Config {
    pub k1: Option<f64>,
    pub b: Option<f64>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config file {}", path.display()))
    }
}

/// Fully resolved settings. Serialized into the header of every output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settings {
    pub lowercase: bool,
    pub inflected_positive: bool,
    pub k: usize,
    pub threshold: f64,
    pub seeds: Vec<u64>,
    pub train_fraction: f64,
    pub stratify: bool,
    pub split_seed: u64,
    pub ablation_seeds: Vec<u64>,
    pub ablation_fractions: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vocab_cap: Option<usize>,
    pub depth: usize,
    pub forest: ForestParams,
    pub bm25: Bm25Params,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            lowercase: true,
            inflected_positive: false,
            k: dialex_core::candidates::DEFAULT_K,
            threshold: DEFAULT_THRESHOLD,
            seeds: vec![1, 2, 3],
            train_fraction: 0.8,
            stratify: false,
            split_seed: 1,
            ablation_seeds: (1..=40).collect(),
            ablation_fractions: (1..=10).map(|i| i as f64 / 10.0).collect(),
            vocab_cap: None,
            depth: RECALL_DEPTH,
            forest: ForestParams::default(),
            bm25: Bm25Params::default(),
        }
    }
}

impl Settings {
    pub fn apply_file(&mut self, file: ConfigFile) {
        macro_rules! set {
            ($dst:expr, $src:expr) => {
                if let Some(v) = $src {
                    $dst = v;
                }
            };
        }
        set!(self.lowercase, file.lowercase);
        set!(self.inflected_positive, file.inflected_positive);
        set!(self.k, file.k);
        set!(self.threshold, file.threshold);
        set!(self.seeds, file.seeds);
        set!(self.train_fraction, file.train_fraction);
        set!(self.stratify, file.stratify);
        set!(self.split_seed, file.split_seed);
        set!(self.ablation_seeds, file.ablation_seeds);
        set!(self.ablation_fractions, file.ablation_fractions);
        set!(self.depth, file.depth);
        if file.vocab_cap.is_some() {
            self.vocab_cap = file.vocab_cap;
        }
        if let Some(f) = file.forest {
            set!(self.forest.n_trees, f.n_trees);
            set!(self.forest.max_features, f.max_features);
            set!(self.forest.bootstrap, f.bootstrap);
            set!(self.forest.min_samples_split, f.min_samples_split);
            set!(self.forest.seed, f.seed);
            set!(self.forest.positive_weight, f.positive_weight);
            if f.max_depth.is_some() {
                self.forest.max_depth = f.max_depth;
            }
        }
        if let Some(b) = file.bm25 {
            set!(self.bm25.k1, b.k1);
            set!(self.bm25.b, b.b);
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.forest.validate()?;
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            bail!("threshold must be in (0, 1), got {}", self.threshold);
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            bail!("train_fraction must be in (0, 1), got {}", self.train_fraction);
        }
        if self.k == 0 {
            bail!("k must be >= 1");
        }
        if self.seeds.is_empty() || self.ablation_seeds.is_empty() {
            bail!("seed lists must not be empty");
        }
        if self.ablation_fractions.is_empty() {
            bail!("ablation_fractions must not be empty");
        }
        if let Some(f) = self.ablation_fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            bail!("ablation fraction {f} not in (0, 1]");
        }
        if !(self.bm25.k1.is_finite() && self.bm25.k1 >= 0.0) {
            bail!("bm25.k1 must be >= 0, got {}", self.bm25.k1);
        }
        if !(0.0..=1.0).contains(&self.bm25.b) {
            bail!("bm25.b must be in [0, 1], got {}", self.bm25.b);
        }
        if self.depth == 0 {
            bail!("depth must be >= 1");
        }
        Ok(())
    }

    pub fn extractor(&self) -> FeatureExtractor {
        FeatureExtractor::new(self.lowercase)
    }

    pub fn label_policy(&self) -> LabelPolicy {
        LabelPolicy {
            inflected_positive: self.inflected_positive,
        }
    }

    pub fn protocol(&self) -> Protocol {
        Protocol {
            forest: self.forest.clone(),
            train_fraction: self.train_fraction,
            stratify: self.stratify,
            threshold: self.threshold,
        }
    }

    /// `# `-prefixed description of the command and the effective settings.
    pub fn header(&self, command: &str, inputs: &[(&str, String)]) -> String {
        let mut out = format!("# dialex {command}\n");
        for (name, value) in inputs {
            out.push_str(&format!("# input.{name} = {value:?}\n"));
        }
        let body = toml::to_string(self).expect("settings serialize to toml");
        for line in body.lines().filter(|l| !l.is_empty()) {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        out
    }
}
