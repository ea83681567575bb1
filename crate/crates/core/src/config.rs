//! Experiment configuration: a sectioned `key = value` file (TOML syntax).
//!
//! Unknown keys are rejected. [`ExperimentConfig::resolved`] fills every
//! optional value with the default actually used, so the persisted copy of a
//! run's config reproduces it exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::density::{BumpTerm, DensityForm, ManifoldDensity};
use crate::diffusion::DiffusionSchedule;
use crate::error::{Error, Result};
use crate::evaluation::RateSettings;
use crate::geometry::{Atlas, EmbeddedManifold, ManifoldKind};
use crate::model::{ChartFeatures, ModelSpec, OutputScale, TimeSampling, TrainConfig};
use crate::oracle::Oracle;
use crate::sampler::{SamplerConfig, StepGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    pub manifold: ManifoldSection,
    pub density: DensitySection,
    pub schedule: ScheduleSection,
    pub atlas: AtlasSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub sampler: SamplerSection,
    pub evaluation: EvaluationSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifoldKindName {
    Circle,
    Sphere,
    Torus,
    LinearSubspace,
    PointSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ManifoldSection {
    pub kind: ManifoldKindName,
    pub radius: f64,
    /// Intrinsic dimension of a sphere.
    pub dim: usize,
    pub major: f64,
    pub minor: f64,
    /// Spanning columns of a linear subspace.
    pub basis: Vec<Vec<f64>>,
    pub half_width: f64,
    pub points: Vec<Vec<f64>>,
    /// Zero-pad into a larger ambient space.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ambient_dim: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityFormName {
    Uniform,
    BumpMixture,
    VonMises,
    Discrete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpSection {
    pub center: Vec<f64>,
    pub weight: f64,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensitySection {
    pub form: DensityFormName,
    /// Quadrature resolution; defaults to 1024 on curves, 256 otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolution: Option<usize>,
    pub base: f64,
    pub bumps: Vec<BumpSection>,
    pub kappa: f64,
    pub mode: Vec<f64>,
    pub weights: Vec<f64>,
    /// Declared Hölder exponent (reporting only); `inf` for smooth densities.
    pub holder_beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    pub t0: f64,
    pub t_end: f64,
    /// Tube-probability parameter.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AtlasSection {
    /// Chart radius; defaults to `min(τ, 1)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub width: usize,
    pub hidden: usize,
    pub output_scale: String,
    pub weight_bound: f64,
    /// `C_R`; defaults to `10·√max(1, log(1/t0))`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clip_const: Option<f64>,
    /// `[t_large, t_small]` enables the time-switched model.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_switch: Option<[f64; 2]>,
    pub chart_features: bool,
    pub chart_eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub n: usize,
    pub heldout: usize,
    pub batch_size: usize,
    pub k_times: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub cosine_decay: bool,
    pub time_sampling: String,
    pub chunk: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSection {
    pub n_steps: usize,
    pub grid: StepGrid,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    pub n_grid: Vec<usize>,
    pub repeats: usize,
    pub eval_size: usize,
    pub score_mc: usize,
    pub oracle_baseline: bool,
    pub sliced_projections: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: "runs".into(),
            workers: None,
            manifold: ManifoldSection::default(),
            density: DensitySection::default(),
            schedule: ScheduleSection::default(),
            atlas: AtlasSection::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            sampler: SamplerSection::default(),
            evaluation: EvaluationSection::default(),
        }
    }
}

impl Default for ManifoldSection {
    fn default() -> Self {
        Self {
            kind: ManifoldKindName::Circle,
            radius: 1.0,
            dim: 2,
            major: 2.0,
            minor: 1.0,
            basis: Vec::new(),
            half_width: 1.0,
            points: Vec::new(),
            ambient_dim: None,
        }
    }
}

impl Default for DensitySection {
    fn default() -> Self {
        Self {
            form: DensityFormName::Uniform,
            resolution: None,
            base: 1.0,
            bumps: Vec::new(),
            kappa: 1.0,
            mode: Vec::new(),
            weights: Vec::new(),
            holder_beta: f64::INFINITY,
        }
    }
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self { t0: 1e-3, t_end: 10.0, delta: 0.05 }
    }
}

impl Default for AtlasSection {
    fn default() -> Self {
        Self { radius: None, eta: 1.0 }
    }
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            width: 128,
            hidden: 3,
            output_scale: "inv_sqrt_h".into(),
            weight_bound: 100.0,
            clip_const: None,
            time_switch: None,
            chart_features: false,
            chart_eps: 0.2,
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            n: 2000,
            heldout: 256,
            batch_size: 64,
            k_times: 4,
            epochs: 200,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            cosine_decay: true,
            time_sampling: "uniform".into(),
            chunk: 32,
        }
    }
}

impl Default for SamplerSection {
    fn default() -> Self {
        Self { n_steps: 400, grid: StepGrid::LogH, n_samples: 512 }
    }
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            n_grid: vec![250, 500, 1000, 2000, 4000],
            repeats: 5,
            eval_size: 512,
            score_mc: 2000,
            oracle_baseline: true,
            sliced_projections: 256,
        }
    }
}

fn output_scale(name: &str) -> Result<OutputScale> {
    match name {
        "identity" => Ok(OutputScale::Identity),
        "inv_sqrt_h" => Ok(OutputScale::InvSqrtH),
        "inv_h" => Ok(OutputScale::InvH),
        _ => Err(Error::InvalidConfig(format!("unknown output_scale {name:?}"))),
    }
}

fn time_sampling(name: &str) -> Result<TimeSampling> {
    match name {
        "uniform" => Ok(TimeSampling::Uniform),
        "log_uniform_weighted" => Ok(TimeSampling::LogUniformWeighted),
        _ => Err(Error::InvalidConfig(format!("unknown time_sampling {name:?}"))),
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Cheap structural checks; constructing the objects does the rest.
    pub fn validate(&self) -> Result<()> {
        output_scale(&self.model.output_scale)?;
        time_sampling(&self.train.time_sampling)?;
        self.schedule()?;
        if !(self.schedule.delta > 0.0 && self.schedule.delta < (-2.0f64).exp()) {
            return Err(Error::InvalidConfig("schedule.delta must lie in (0, e^-2)".into()));
        }
        if self.sampler.n_steps == 0 || self.sampler.n_samples == 0 {
            return Err(Error::InvalidConfig("sampler.n_steps and n_samples must be positive".into()));
        }
        if self.model.width == 0 {
            return Err(Error::InvalidConfig("model.width must be positive".into()));
        }
        Ok(())
    }

    /// Copy with every optional value replaced by the default in effect.
    pub fn resolved(&self) -> Result<Self> {
        let mut c = self.clone();
        let m = self.manifold()?;
        c.density.resolution = Some(self.resolution(&m));
        c.atlas.radius = Some(self.atlas_radius(&m));
        c.model.clip_const = Some(self.clip_const());
        Ok(c)
    }

    pub fn manifold(&self) -> Result<EmbeddedManifold> {
        let s = &self.manifold;
        let m = match s.kind {
            ManifoldKindName::Circle => EmbeddedManifold::circle(s.radius)?,
            ManifoldKindName::Sphere => EmbeddedManifold::sphere(s.dim, s.radius)?,
            ManifoldKindName::Torus => EmbeddedManifold::torus(s.major, s.minor)?,
            ManifoldKindName::LinearSubspace => EmbeddedManifold::linear_subspace(s.basis.clone(), s.half_width)?,
            ManifoldKindName::PointSet => EmbeddedManifold::point_set(s.points.clone())?,
        };
        match s.ambient_dim {
            Some(d) if d != m.ambient_dim() => m.with_ambient_dim(d),
            _ => Ok(m),
        }
    }

    fn resolution(&self, m: &EmbeddedManifold) -> usize {
        self.density.resolution.unwrap_or(if m.intrinsic_dim() <= 1 { 1024 } else { 256 })
    }

    fn atlas_radius(&self, m: &EmbeddedManifold) -> f64 {
        self.atlas.radius.unwrap_or(if m.has_finite_reach() { m.reach().min(1.0) } else { 1.0 })
    }

    fn clip_const(&self) -> f64 {
        self.model.clip_const.unwrap_or_else(|| crate::model::default_clip(self.schedule.t0))
    }

    pub fn density(&self) -> Result<ManifoldDensity> {
        let m = self.manifold()?;
        let d = &self.density;
        let form = match d.form {
            DensityFormName::Uniform => DensityForm::Uniform,
            DensityFormName::BumpMixture => DensityForm::BumpMixture {
                base: d.base,
                bumps: d
                    .bumps
                    .iter()
                    .map(|b| BumpTerm { center: b.center.clone(), weight: b.weight, width: b.width })
                    .collect(),
            },
            DensityFormName::VonMises => DensityForm::VonMisesLike { kappa: d.kappa, mode: d.mode.clone() },
            DensityFormName::Discrete => DensityForm::Discrete { weights: d.weights.clone() },
        };
        let res = self.resolution(&m);
        Ok(ManifoldDensity::new(m, form, res)?.with_holder_beta(d.holder_beta))
    }

    pub fn oracle(&self) -> Result<Oracle> {
        let d = self.density()?;
        let res = d.resolution();
        Oracle::new(d, res)
    }

    pub fn atlas(&self) -> Result<Atlas> {
        let m = self.manifold()?;
        Atlas::build(&m, self.atlas_radius(&m))
    }

    pub fn schedule(&self) -> Result<DiffusionSchedule> {
        DiffusionSchedule::new(self.schedule.t0, self.schedule.t_end)
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        let s = &self.model;
        let features = if s.chart_features {
            let atlas = self.atlas()?;
            let centers = atlas.charts().iter().map(|c| c.center.clone()).collect();
            Some(ChartFeatures { centers, r_bar: atlas.radius(), eps: s.chart_eps })
        } else {
            None
        };
        if let ManifoldKind::PointSet { .. } = self.manifold()?.kind() {
            if s.chart_features {
                return Err(Error::InvalidConfig("chart features need a manifold with charts".into()));
            }
        }
        Ok(ModelSpec {
            width: s.width,
            hidden: s.hidden,
            output_scale: output_scale(&s.output_scale)?,
            weight_bound: s.weight_bound,
            clip_const: self.clip_const(),
            time_switch: s.time_switch.map(|[a, b]| (a, b)),
            features,
        })
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let s = &self.train;
        let mut c = TrainConfig::new(self.schedule()?, s.epochs, self.seed);
        c.batch_size = s.batch_size;
        c.k_times = s.k_times;
        c.learning_rate = s.learning_rate;
        c.beta1 = s.beta1;
        c.beta2 = s.beta2;
        c.adam_eps = s.adam_eps;
        c.cosine_decay = s.cosine_decay;
        c.time_sampling = time_sampling(&s.time_sampling)?;
        c.chunk = s.chunk;
        Ok(c)
    }

    pub fn sampler_config(&self) -> Result<SamplerConfig> {
        Ok(SamplerConfig { n_steps: self.sampler.n_steps, schedule: self.schedule()?, grid: self.sampler.grid, seed: self.seed })
    }

    pub fn rate_settings(&self) -> Result<RateSettings> {
        let e = &self.evaluation;
        Ok(RateSettings {
            n_grid: e.n_grid.clone(),
            repeats: e.repeats,
            eval_size: e.eval_size,
            score_mc: e.score_mc,
            oracle_baseline: e.oracle_baseline,
            model: self.model_spec()?,
            train: self.train_config()?,
            sampler: self.sampler_config()?,
            seed: self.seed,
        })
    }
}
