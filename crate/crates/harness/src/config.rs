//! Experiment configuration, read from and written to JSON.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tunamh::kernels::{AustereConfig, MinibatchMode, TunaConfig};
use tunamh::models::DiscreteLineSpec;

use crate::error::{HarnessError, Result};

/// Where a task's data come from. Generated data are drawn from a dedicated
/// substream of the experiment seed, so a seed pins the dataset too.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSource {
    Generate {
        n: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        d: Option<usize>,
    },
    /// A CSV written by `save_dataset` (RLR) or a one-column CSV (TGM).
    Path { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TaskConfig {
    Rlr {
        data: DataSource,
        #[serde(default = "default_dof")]
        dof: f64,
    },
    Tgm {
        data: DataSource,
        #[serde(default = "default_beta")]
        beta: f64,
    },
    Logreg {
        /// Falls back to `--mnist-dir`, then `MNIST_DIR`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mnist_dir: Option<PathBuf>,
        #[serde(default = "default_components")]
        components: usize,
        #[serde(default)]
        strict: bool,
    },
    DiscreteLine(DiscreteLineSpec),
    UniformLine {
        states: usize,
        n: usize,
        m_tilde: f64,
    },
    TwoState {
        n: usize,
        total: f64,
        m_tilde: f64,
        q_tilde: f64,
    },
}

fn default_dof() -> f64 {
    tunamh::models::DEFAULT_DOF
}

fn default_beta() -> f64 {
    tunamh::models::tgm::DEFAULT_BETA
}

fn default_components() -> usize {
    tunamh::models::mnist::PCA_COMPONENTS
}

impl TaskConfig {
    pub fn id(&self) -> &'static str {
        match self {
            TaskConfig::Rlr { .. } => "rlr",
            TaskConfig::Tgm { .. } => "tgm",
            TaskConfig::Logreg { .. } => "logreg",
            TaskConfig::DiscreteLine(_) => "discrete-line",
            TaskConfig::UniformLine { .. } => "uniform-line",
            TaskConfig::TwoState { .. } => "two-state",
        }
    }

    /// Finite tasks use their own fixed proposal; `step_size` is ignored.
    pub fn is_finite(&self) -> bool {
        matches!(self, TaskConfig::DiscreteLine(_) | TaskConfig::UniformLine { .. } | TaskConfig::TwoState { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelSpec {
    Mh,
    Tunamh(TunaConfig),
    TunamhAux(TunaConfig),
    Tfmh {
        trunc_threshold: f64,
    },
    /// TFMH with first-order control variates around `theta_map`. Without
    /// `theta_map` the MAP is found by gradient descent first.
    Smh1 {
        trunc_threshold: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        theta_map: Option<Vec<f64>>,
    },
    /// `lambda` defaults to the total factor bound `L`.
    Poissonmh {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lambda: Option<f64>,
        #[serde(default)]
        mode: MinibatchMode,
    },
    Austere(AustereConfig),
}

impl KernelSpec {
    pub fn id(&self) -> &'static str {
        match self {
            KernelSpec::Mh => "mh",
            KernelSpec::Tunamh(_) => "tunamh",
            KernelSpec::TunamhAux(_) => "tunamh-aux",
            KernelSpec::Tfmh { .. } => "tfmh",
            KernelSpec::Smh1 { .. } => "smh1",
            KernelSpec::Poissonmh { .. } => "poissonmh",
            KernelSpec::Austere(_) => "austeremh",
        }
    }
}

/// Chain initialisation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitSpec {
    /// The origin for continuous tasks, state 0 for finite ones.
    #[default]
    Default,
    /// Gradient-descent MAP estimate of the total energy.
    Map,
    Value {
        theta: Vec<f64>,
    },
    State {
        index: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub task: TaskConfig,
    pub kernel: KernelSpec,
    pub step_size: f64,
    pub steps: usize,
    pub burnin: usize,
    pub seed: u64,
    #[serde(default = "one")]
    pub thin: usize,
    #[serde(default = "one")]
    pub repeats: usize,
    #[serde(default)]
    pub init: InitSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn one() -> usize {
    1
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.steps <= self.burnin {
            return bad(format!("steps ({}) must exceed burnin ({})", self.steps, self.burnin));
        }
        if self.repeats == 0 {
            return bad("repeats must be at least 1".into());
        }
        if self.thin == 0 {
            return bad("thin must be at least 1".into());
        }
        if !self.task.is_finite() && !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad(format!("step_size must be positive, got {}", self.step_size));
        }
        match &self.kernel {
            KernelSpec::Tunamh(c) | KernelSpec::TunamhAux(c) => c.validate()?,
            KernelSpec::Austere(c) => c.validate()?,
            KernelSpec::Tfmh { trunc_threshold } | KernelSpec::Smh1 { trunc_threshold, .. } => {
                if !(*trunc_threshold > 0.0) {
                    return bad(format!("trunc_threshold must be positive, got {trunc_threshold}"));
                }
            }
            KernelSpec::Poissonmh { lambda: Some(l), .. } if !(*l > 0.0 && l.is_finite()) => {
                return bad(format!("lambda must be positive, got {l}"));
            }
            _ => {}
        }
        Ok(())
    }

    /// Checkpoint spacing: every `max(steps / 200, 1)` steps.
    pub fn checkpoint_every(&self) -> usize {
        (self.steps / 200).max(1)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Reads and validates a config file. A missing file is a usage error.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::Usage(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> ExperimentConfig {
        ExperimentConfig {
            name: "t".into(),
            task: TaskConfig::TwoState { n: 10, total: 2.0, m_tilde: 1.0, q_tilde: 0.5 },
            kernel: KernelSpec::Mh,
            step_size: 0.0,
            steps: 2,
            burnin: 1,
            seed: 1,
            thin: 1,
            repeats: 1,
            init: InitSpec::Default,
            out: None,
        }
    }

    #[test]
    fn rejects_bad_counts() {
        let mut c = minimal();
        c.steps = 1;
        assert!(c.validate().is_err());
        let mut c = minimal();
        c.repeats = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn defaults_fill_in() {
        let text = r#"{"name":"x","task":{"id":"tgm","data":{"source":"generate","n":100}},
            "kernel":{"kind":"tunamh","chi":0.0001},"step_size":0.1,"steps":10,"burnin":0,"seed":3}"#;
        let c = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(c.thin, 1);
        assert_eq!(c.repeats, 1);
        assert_eq!(c.task, TaskConfig::Tgm { data: DataSource::Generate { n: 100, d: None }, beta: 1e-4 });
        assert!(matches!(c.kernel, KernelSpec::Tunamh(TunaConfig { fallback_enabled: true, .. })));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = r#"{"name":"x","task":{"id":"two-state","n":10,"total":2,"m_tilde":1,"q_tilde":0.5},
            "kernel":{"kind":"mh"},"step_size":0,"steps":10,"burnin":0,"seed":3,"colour":1}"#;
        assert!(matches!(ExperimentConfig::from_json(text), Err(HarnessError::Config(_))));
    }

    #[test]
    fn checkpoint_spacing() {
        let mut c = minimal();
        c.steps = 100;
        assert_eq!(c.checkpoint_every(), 1);
        c.steps = 80_000;
        assert_eq!(c.checkpoint_every(), 400);
    }
}
