//! Turns a config into a concrete model, proposal, kernel and initial state.

use std::env;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tunamh::diagnostics::{GridDensity, GRID_FLOOR, GRID_SIZE};
use tunamh::energy::Differentiable;
use tunamh::kernels::GlobalFactors;
use tunamh::kernels::{
    AustereMh, ControlVariate, FullMh, Kernel, PoissonMh, PoissonMhConfig, Smh1, Tfmh, TfmhConfig, TunaMh, TunaMhAux,
};
use tunamh::models::{
    generate_rlr_data, generate_tgm_data, load_dataset, load_mnist_79, map_estimate, Dataset, DatasetMeta, DiscreteLine,
    LogisticReg, MapOptions, MnistFiles, RobustLinReg, TruncGaussMix, TwoStateFixture, UniformLine,
};
use tunamh::proposal::Proposal;
use tunamh::trace::StepRecord;
use tunamh::{EnergyModel, RngStream};

use crate::config::{DataSource, ExperimentConfig, InitSpec, KernelSpec, TaskConfig};
use crate::error::{HarnessError, Result};

/// Substream id reserved for data generation.
pub const DATA_STREAM: u64 = 0xDA7A;

/// Bins used to compress TGM data when evaluating the reference grid.
pub const TGM_TRUTH_BINS: usize = 4000;

/// Object-safe view of a kernel with the proposal and RNG types fixed.
pub trait StepKernel<M: EnergyModel, P>: Send + Sync {
    fn id(&self) -> &'static str;
    fn step_once(&self, model: &M, proposal: &P, from: &M::State, rng: &mut RngStream) -> tunamh::Result<(M::State, StepRecord)>;
}

impl<M, P, K> StepKernel<M, P> for K
where
    M: EnergyModel,
    P: Proposal<M::State>,
    K: Kernel<M>,
{
    fn id(&self) -> &'static str {
        Kernel::<M>::id(self)
    }

    fn step_once(&self, model: &M, proposal: &P, from: &M::State, rng: &mut RngStream) -> tunamh::Result<(M::State, StepRecord)> {
        self.step(model, proposal, from, rng)
    }
}

pub type BoxedKernel<M, P> = Box<dyn StepKernel<M, P>>;

/// Kernels that work on any model.
fn generic_kernel<M, P>(spec: &KernelSpec) -> Result<Option<BoxedKernel<M, P>>>
where
    M: EnergyModel + 'static,
    P: Proposal<M::State> + 'static,
{
    Ok(Some(match spec {
        KernelSpec::Mh => Box::new(FullMh),
        KernelSpec::Tunamh(c) => Box::new(TunaMh::new(*c)?),
        KernelSpec::TunamhAux(c) => Box::new(TunaMhAux::new(*c)?),
        KernelSpec::Tfmh { trunc_threshold } => Box::new(Tfmh::new(&TfmhConfig::new(*trunc_threshold)?)?),
        KernelSpec::Austere(c) => Box::new(AustereMh::new(*c)?),
        KernelSpec::Smh1 { .. } | KernelSpec::Poissonmh { .. } => return Ok(None),
    }))
}

fn poisson_kernel<M: GlobalFactors<S>, S>(model: &M, spec: &KernelSpec) -> Option<tunamh::Result<PoissonMh>> {
    match spec {
        KernelSpec::Poissonmh { lambda, mode } => {
            let lambda = lambda.unwrap_or_else(|| model.factor_bounds().total());
            Some(PoissonMh::new(PoissonMhConfig { lambda, mode: *mode }))
        }
        _ => None,
    }
}

fn unsupported(kernel: &KernelSpec, task: &str) -> HarnessError {
    HarnessError::Config(format!("kernel {} is not available for task {task}", kernel.id()))
}

fn map_point<M: Differentiable>(model: &M, dim: usize, cap: Option<f64>) -> Result<Vec<f64>> {
    let r = map_estimate(model, vec![0.0; dim], MapOptions { norm_cap: cap, ..MapOptions::default() })?;
    log::info!("MAP: energy {:.6}, |grad| {:.3e}, {} iterations", r.energy, r.grad_norm, r.iterations);
    Ok(r.theta)
}

/// Ready-to-run continuous task.
pub struct ContinuousTask<M: EnergyModel<State = Vec<f64>>> {
    pub model: M,
    pub kernel: BoxedKernel<M, tunamh::proposal::GaussianRandomWalk>,
    pub init: Vec<f64>,
}

pub struct FiniteTask<M: EnergyModel<State = usize>, P> {
    pub model: M,
    pub proposal: P,
    pub kernel: BoxedKernel<M, P>,
    pub init: usize,
    pub states: usize,
}

/// What the per-repeat tracker compares against.
pub enum Reference {
    /// True parameter for posterior-mean MSE.
    Truth(Vec<f64>),
    /// Reference density on the TGM grid.
    Grid(GridDensity),
    /// Held-out set for accuracy.
    Test(Dataset),
    None,
}

pub enum Built {
    Rlr(ContinuousTask<RobustLinReg>, Reference),
    Tgm(ContinuousTask<TruncGaussMix>, Reference),
    Logreg(ContinuousTask<LogisticReg>, Reference),
    Line(FiniteTask<DiscreteLine, tunamh::proposal::LineProposal>),
    Uniform(FiniteTask<UniformLine, tunamh::proposal::LineProposal>),
    TwoState(FiniteTask<TwoStateFixture, tunamh::proposal::TabulatedProposal>),
}

/// Provenance of the data, echoed into the manifest.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DataInfo {
    pub source: String,
    pub n: usize,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<DatasetMeta>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn continuous_init(init: &InitSpec, dim: usize, map: impl FnOnce() -> Result<Vec<f64>>) -> Result<Vec<f64>> {
    match init {
        InitSpec::Default => Ok(vec![0.0; dim]),
        InitSpec::Map => map(),
        InitSpec::Value { theta } if theta.len() == dim => Ok(theta.clone()),
        InitSpec::Value { theta } => Err(HarnessError::Config(format!("init has {} coordinates, model has {dim}", theta.len()))),
        InitSpec::State { .. } => Err(HarnessError::Config("state init only applies to finite tasks".into())),
    }
}

fn finite_init(init: &InitSpec, states: usize) -> Result<usize> {
    match init {
        InitSpec::Default => Ok(0),
        InitSpec::State { index } if *index < states => Ok(*index),
        InitSpec::State { index } => Err(HarnessError::Config(format!("init state {index} out of 0..{states}"))),
        _ => Err(HarnessError::Config("finite tasks take a state index as init".into())),
    }
}

fn read_column(path: &Path) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let field = rec.get(0).unwrap_or("");
        match field.trim().parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) if out.is_empty() => continue, // header
            Err(e) => return Err(HarnessError::Data(format!("{}: {field:?}: {e}", path.display()))),
        }
    }
    Ok(out)
}

/// Resolves the MNIST directory: config, then command line, then `MNIST_DIR`.
pub fn mnist_dir(config_dir: Option<&PathBuf>, flag: Option<&PathBuf>) -> Result<PathBuf> {
    config_dir
        .or(flag)
        .cloned()
        .or_else(|| env::var_os("MNIST_DIR").map(PathBuf::from))
        .ok_or_else(|| HarnessError::Data("MNIST location not given: set task.mnist_dir, --mnist-dir or MNIST_DIR".into()))
}

pub fn build(cfg: &ExperimentConfig, mnist_flag: Option<&PathBuf>) -> Result<(Built, DataInfo)> {
    let mut data_rng = RngStream::new(cfg.seed, 0).split(DATA_STREAM);
    let task = cfg.task.id();
    let kspec = &cfg.kernel;
    match &cfg.task {
        TaskConfig::Rlr { data, dof } => {
            let (dataset, info, truth) = match data {
                DataSource::Generate { n, d } => {
                    let d = d.ok_or_else(|| HarnessError::Config("rlr generate needs d".into()))?;
                    let ds = generate_rlr_data(*n, d, &mut data_rng)?;
                    let meta = DatasetMeta {
                        generator: "rlr".into(),
                        seed: Some(cfg.seed),
                        n: *n,
                        d,
                        params: serde_json::json!({ "substream": DATA_STREAM }),
                    };
                    (
                        ds,
                        DataInfo { source: "generate".into(), n: *n, dim: d, meta: Some(meta), warnings: vec![] },
                        Some(vec![1.0; d]),
                    )
                }
                DataSource::Path { path } => {
                    let (ds, meta) = load_dataset(path).map_err(|e| HarnessError::Data(e.to_string()))?;
                    let truth = meta.as_ref().filter(|m| m.generator == "rlr").map(|_| vec![1.0; ds.dim()]);
                    let info =
                        DataInfo { source: path.display().to_string(), n: ds.len(), dim: ds.dim(), meta, warnings: vec![] };
                    (ds, info, truth)
                }
            };
            let d = dataset.dim();
            let model = RobustLinReg::new(dataset, *dof)?;
            let kernel = generic_kernel(kspec)?.ok_or_else(|| unsupported(kspec, task))?;
            let init = continuous_init(&cfg.init, d, || map_point(&model, d, None))?;
            let reference = truth.map(Reference::Truth).unwrap_or(Reference::None);
            Ok((Built::Rlr(ContinuousTask { model, kernel, init }, reference), info))
        }
        TaskConfig::Tgm { data, beta } => {
            let (xs, source) = match data {
                DataSource::Generate { n, .. } => (generate_tgm_data(*n, &mut data_rng)?, "generate".to_string()),
                DataSource::Path { path } => (read_column(path)?, path.display().to_string()),
            };
            let info = DataInfo { source, n: xs.len(), dim: 2, meta: None, warnings: vec![] };
            let model = TruncGaussMix::new(xs, *beta)?;
            let cap = Some(tunamh::models::tgm::BOX);
            let kernel: BoxedKernel<_, _> = match generic_kernel(kspec)? {
                Some(k) => k,
                None => match kspec {
                    KernelSpec::Smh1 { trunc_threshold, theta_map } => {
                        let theta_map = match theta_map {
                            Some(t) => t.clone(),
                            None => map_point(&model, 2, cap)?,
                        };
                        let tcfg =
                            TfmhConfig { trunc_threshold: *trunc_threshold, control_variate: ControlVariate::Smh1 { theta_map } };
                        Box::new(Smh1::new(&model, &tcfg)?)
                    }
                    _ => Box::new(poisson_kernel(&model, kspec).ok_or_else(|| unsupported(kspec, task))??),
                },
            };
            let init = continuous_init(&cfg.init, 2, || map_point(&model, 2, cap))?;
            let grid = model.truth_grid(GRID_SIZE, TGM_TRUTH_BINS, GRID_FLOOR)?;
            Ok((Built::Tgm(ContinuousTask { model, kernel, init }, Reference::Grid(grid)), info))
        }
        TaskConfig::Logreg { mnist_dir: dir, components, strict } => {
            let dir = mnist_dir(dir.as_ref(), mnist_flag)?;
            let files = MnistFiles::in_dir(&dir).map_err(|e| HarnessError::Data(e.to_string()))?;
            let t = load_mnist_79(&files, *components, *strict).map_err(|e| match e {
                tunamh::Error::Io(m) => HarnessError::Data(m),
                other => HarnessError::Core(other),
            })?;
            for w in &t.warnings {
                log::warn!("{w}");
            }
            let info = DataInfo {
                source: dir.display().to_string(),
                n: t.model.data().len(),
                dim: *components,
                meta: None,
                warnings: t.warnings.clone(),
            };
            let model = t.model;
            let kernel = generic_kernel(kspec)?.ok_or_else(|| unsupported(kspec, task))?;
            let d = *components;
            let init = continuous_init(&cfg.init, d, || map_point(&model, d, None))?;
            Ok((Built::Logreg(ContinuousTask { model, kernel, init }, Reference::Test(t.test)), info))
        }
        TaskConfig::DiscreteLine(spec) => {
            let model = DiscreteLine::from_spec(*spec)?;
            let kernel: BoxedKernel<_, _> = match generic_kernel(kspec)? {
                Some(k) => k,
                None => Box::new(poisson_kernel(&model, kspec).ok_or_else(|| unsupported(kspec, task))??),
            };
            let info = DataInfo { source: "fixed".into(), n: model.len(), dim: 1, meta: None, warnings: vec![] };
            let states = model.states();
            let init = finite_init(&cfg.init, states)?;
            let proposal = model.proposal();
            Ok((Built::Line(FiniteTask { model, proposal, kernel, init, states }), info))
        }
        TaskConfig::UniformLine { states, n, m_tilde } => {
            let model = UniformLine::new(*states, *n, *m_tilde)?;
            let kernel = generic_kernel(kspec)?.ok_or_else(|| unsupported(kspec, task))?;
            let info = DataInfo { source: "fixed".into(), n: *n, dim: 1, meta: None, warnings: vec![] };
            let init = finite_init(&cfg.init, *states)?;
            let proposal = model.proposal();
            Ok((Built::Uniform(FiniteTask { model, proposal, kernel, init, states: *states }), info))
        }
        TaskConfig::TwoState { n, total, m_tilde, q_tilde } => {
            let model = TwoStateFixture::new(*n, *total, *m_tilde, *q_tilde)?;
            let kernel = generic_kernel(kspec)?.ok_or_else(|| unsupported(kspec, task))?;
            let info = DataInfo { source: "fixed".into(), n: *n, dim: 1, meta: None, warnings: vec![] };
            let init = finite_init(&cfg.init, 2)?;
            let proposal = model.proposal();
            Ok((Built::TwoState(FiniteTask { model, proposal, kernel, init, states: 2 }), info))
        }
    }
}
