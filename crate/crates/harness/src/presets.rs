//! Shipped experiment presets with the published step sizes and χ values.
//!
//! Each preset carries the full-length step counts. `desk` variants shrink
//! the run so it finishes on a laptop; the shortened counts are listed in
//! [`Preset::desk_steps`] and [`Preset::desk_burnin`].

use serde::{Deserialize, Serialize};
use tunamh::kernels::{AustereConfig, MinibatchMode, TunaConfig};
use tunamh::models::DiscreteLineSpec;

use crate::config::{DataSource, ExperimentConfig, InitSpec, KernelSpec, TaskConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub description: String,
    pub config: ExperimentConfig,
    pub desk_steps: usize,
    pub desk_burnin: usize,
}

impl Preset {
    /// The same experiment at desk scale.
    pub fn desk(&self) -> ExperimentConfig {
        ExperimentConfig { steps: self.desk_steps, burnin: self.desk_burnin, ..self.config.clone() }
    }
}

/// Step sizes without MAP: `(N, MH, TFMH, TunaMH, χ)`.
pub const RLR_STEPS: [(usize, f64, f64, f64, f64); 4] = [
    (5000, 4e-3, 1e-4, 8e-4, 1e-5),
    (20000, 2e-3, 3e-5, 3e-4, 1e-5),
    (50000, 1.3e-3, 1.2e-5, 2e-4, 1e-4),
    (100000, 9e-4, 6e-6, 1.7e-4, 1e-4),
];

/// Step sizes with MAP initialisation: `(N, MH-MAP, TunaMH-MAP, χ)`.
pub const RLR_MAP_STEPS: [(usize, f64, f64, f64); 4] =
    [(5000, 4e-3, 8e-4, 1e-5), (20000, 2e-3, 3e-4, 1e-5), (50000, 1.2e-3, 1.2e-4, 1e-4), (100000, 9e-4, 7e-5, 1e-4)];

pub const RLR_DIM: usize = 100;
pub const RLR_BURNIN: usize = 200_000;
pub const RLR_SAMPLES: usize = 80_000;

pub const TGM_N: usize = 1_000_000;
pub const TGM_CHI: f64 = 1e-4;
/// `(kernel, step)`; PoissonMH shares TunaMH's step.
pub const TGM_STEPS: [(&str, f64); 5] = [("mh", 0.3), ("tfmh", 2.2e-2), ("tunamh", 0.1), ("smh1", 0.1), ("poissonmh", 0.1)];

pub const LR_CHI: f64 = 1e-5;
pub const LR_STEPS: [(&str, f64); 3] = [("mh", 5e-3), ("tfmh", 1e-4), ("tunamh", 1e-3)];

/// TunaMH χ on the discrete line: just under `1 / (C M)²` for unit moves.
pub const LINE_CHI: f64 = 0.3;

fn tuna(chi: f64) -> KernelSpec {
    KernelSpec::Tunamh(TunaConfig { chi, fallback_enabled: true })
}

/// TFMH truncation threshold used by every preset.
pub const TFMH_R: f64 = 10.0;

fn kernel_by_id(id: &str, chi: f64) -> KernelSpec {
    match id {
        "mh" => KernelSpec::Mh,
        "tfmh" => KernelSpec::Tfmh { trunc_threshold: TFMH_R },
        "tunamh" => tuna(chi),
        "smh1" => KernelSpec::Smh1 { trunc_threshold: TFMH_R, theta_map: None },
        "poissonmh" => KernelSpec::Poissonmh { lambda: None, mode: MinibatchMode::Thinning },
        "austeremh" => KernelSpec::Austere(AustereConfig::default()),
        other => unreachable!("no preset kernel {other}"),
    }
}

fn base(name: String, task: TaskConfig, kernel: KernelSpec, step_size: f64, steps: usize, burnin: usize) -> ExperimentConfig {
    ExperimentConfig {
        name,
        task,
        kernel,
        step_size,
        steps,
        burnin,
        seed: 1,
        thin: 1,
        repeats: 3,
        init: InitSpec::Default,
        out: None,
    }
}

fn rlr_task(n: usize) -> TaskConfig {
    TaskConfig::Rlr { data: DataSource::Generate { n, d: Some(RLR_DIM) }, dof: tunamh::models::DEFAULT_DOF }
}

pub fn all() -> Vec<Preset> {
    let mut out = Vec::new();
    for &(n, mh, tf, tu, chi) in &RLR_STEPS {
        for (kid, step) in [("mh", mh), ("tfmh", tf), ("tunamh", tu), ("austeremh", tu)] {
            let name = format!("rlr-{n}-{kid}");
            let mut cfg = base(name.clone(), rlr_task(n), kernel_by_id(kid, chi), step, RLR_BURNIN + RLR_SAMPLES, RLR_BURNIN);
            cfg.thin = 10;
            out.push(Preset {
                name,
                description: format!(
                    "RLR N={n}, d={RLR_DIM}, {kid} from the origin; desk run keeps 20k samples after 30k burnin"
                ),
                config: cfg,
                desk_steps: 50_000,
                desk_burnin: 30_000,
            });
        }
    }
    for &(n, mh, tu, chi) in &RLR_MAP_STEPS {
        for (kid, step) in [("mh", mh), ("tunamh", tu)] {
            let name = format!("rlr-{n}-{kid}-map");
            let mut cfg = base(name.clone(), rlr_task(n), kernel_by_id(kid, chi), step, RLR_SAMPLES, 0);
            cfg.init = InitSpec::Map;
            cfg.thin = 10;
            out.push(Preset {
                name,
                description: format!("RLR N={n}, {kid} started at the MAP, no burnin; desk run keeps 20k samples"),
                config: cfg,
                desk_steps: 20_000,
                desk_burnin: 0,
            });
        }
    }
    for &(kid, step) in &TGM_STEPS {
        let name = format!("tgm-{kid}");
        let task = TaskConfig::Tgm { data: DataSource::Generate { n: TGM_N, d: None }, beta: tunamh::models::tgm::DEFAULT_BETA };
        let mut cfg = base(name.clone(), task, kernel_by_id(kid, TGM_CHI), step, 200_000, 0);
        cfg.thin = 1;
        out.push(Preset {
            name,
            description: format!("TGM N=1e6, beta=1e-4, {kid}; desk run is 50k steps"),
            config: cfg,
            desk_steps: 50_000,
            desk_burnin: 0,
        });
    }
    for &(kid, step) in &LR_STEPS {
        let name = format!("logreg-{kid}");
        let task = TaskConfig::Logreg { mnist_dir: None, components: tunamh::models::mnist::PCA_COMPONENTS, strict: false };
        let mut cfg = base(name.clone(), task, kernel_by_id(kid, LR_CHI), step, 20_000, 2_000);
        cfg.thin = 10;
        out.push(Preset {
            name,
            description: format!("MNIST 7 vs 9 on 50 principal components, {kid}; needs MNIST_DIR"),
            config: cfg,
            desk_steps: 5_000,
            desk_burnin: 1_000,
        });
    }
    for kid in ["mh", "tunamh", "tfmh", "poissonmh", "austeremh"] {
        let name = format!("discrete-line-{kid}");
        let mut kernel = kernel_by_id(kid, LINE_CHI);
        if let KernelSpec::Poissonmh { mode, .. } = &mut kernel {
            *mode = MinibatchMode::PerFactor;
        }
        let mut cfg = base(name.clone(), TaskConfig::DiscreteLine(DiscreteLineSpec::default()), kernel, 0.0, 10_000_000, 100_000);
        cfg.thin = 10;
        out.push(Preset {
            name,
            description: format!("K=200 line, 5000 points at -1 and 1000 at 5, {kid}; desk run is 2e6 steps"),
            config: cfg,
            desk_steps: 2_000_000,
            desk_burnin: 20_000,
        });
    }
    out
}

pub fn find(name: &str) -> Option<Preset> {
    all().into_iter().find(|p| p.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_validates_and_round_trips() {
        for p in all() {
            p.config.validate().unwrap();
            p.desk().validate().unwrap();
            let back = ExperimentConfig::from_json(&p.config.to_json().unwrap()).unwrap();
            assert_eq!(back, p.config, "{}", p.name);
        }
    }

    #[test]
    fn names_are_unique() {
        let mut names: Vec<String> = all().into_iter().map(|p| p.name).collect();
        let n = names.len();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), n);
    }

    #[test]
    fn published_values() {
        let get = |n: &str| find(n).unwrap().config;
        assert_eq!(get("rlr-5000-tunamh").step_size, 8e-4);
        assert_eq!(get("rlr-5000-tunamh").kernel, tuna(1e-5));
        assert_eq!(get("rlr-100000-tfmh").step_size, 6e-6);
        assert_eq!(get("rlr-50000-tunamh").kernel, tuna(1e-4));
        assert_eq!(get("rlr-100000-tunamh-map").step_size, 7e-5);
        assert_eq!(get("tgm-tunamh").step_size, 0.1);
        assert_eq!(get("tgm-tunamh").kernel, tuna(1e-4));
        assert_eq!(get("tgm-mh").step_size, 0.3);
        assert_eq!(get("logreg-tunamh").kernel, tuna(1e-5));
        assert_eq!(get("logreg-tfmh").step_size, 1e-4);
        assert_eq!(get("rlr-5000-mh").steps, 280_000);
    }
}
