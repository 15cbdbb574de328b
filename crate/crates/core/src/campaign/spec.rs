use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::acquire::{AcquisitionSpec, PathfinderPolicy};
use crate::agent::{DoubleQConfig, ReinforceConfig, TipEnvConfig, WriteEnvConfig};
use crate::error::{Error, Result};
use crate::feedback::FeedbackPlan;
use crate::gp::{FitConfig, KernelFamily, MAX_TRAIN};
use crate::recon::ReconMethod;
use crate::sample::{gen_domain_phantom, PhantomConfig, Sample};
use crate::scope::{Channel, Ramp, ScopeConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CampaignKind {
    BoExplore,
    BoSpectro,
    BenchRecon,
    RlTip,
    RlWrite,
    Ferrobot,
}

/// Sampling strategies compared by the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Grid,
    Random,
    Bo,
    BoSpectro,
}

impl Arm {
    pub fn name(self) -> &'static str {
        match self {
            Arm::Grid => "grid",
            Arm::Random => "random",
            Arm::Bo => "bo",
            Arm::BoSpectro => "bo_spectro",
        }
    }

    pub fn is_adaptive(self) -> bool {
        matches!(self, Arm::Bo | Arm::BoSpectro)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleSpec {
    pub width: usize,
    pub height: usize,
    /// nm; defaults to one nm per pixel.
    pub extent: Option<[f64; 2]>,
    /// Phantom seed; the campaign seed when absent.
    pub seed: Option<u64>,
    pub phantom: PhantomConfig,
    /// Load a previously generated sample instead of synthesizing one.
    pub path: Option<PathBuf>,
}

impl Default for SampleSpec {
    fn default() -> Self {
        SampleSpec {
            width: 64,
            height: 64,
            extent: None,
            seed: None,
            phantom: PhantomConfig::default(),
            path: None,
        }
    }
}

impl SampleSpec {
    pub fn extent(&self) -> [f64; 2] {
        self.extent.unwrap_or([self.width as f64, self.height as f64])
    }

    pub fn build(&self, campaign_seed: u64) -> Result<Sample> {
        match &self.path {
            Some(p) => {
                let dir = p.parent().unwrap_or(Path::new("."));
                let stem = p
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .ok_or_else(|| Error::Config(format!("bad sample path {}", p.display())))?;
                Sample::read(dir, stem)
            }
            None => gen_domain_phantom(
                self.width,
                self.height,
                self.extent(),
                &self.phantom,
                self.seed.unwrap_or(campaign_seed),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineConfig {
    pub kernel: KernelFamily,
    pub fit: FitConfig,
    pub acquisition: AcquisitionSpec,
    pub pathfinder: PathfinderPolicy,
    /// Border taper in pixels; 0 disables the mask.
    pub mask_taper: usize,
    pub channel: Channel,
    pub n_seed_points: usize,
    /// Measurements per BO iteration.
    pub batch: usize,
    pub max_measurements: usize,
    /// Hyperparameters are refit every iteration while the training set has
    /// at most this many points ...
    pub refit_full_until: usize,
    /// ... and every `refit_every` iterations after that.
    pub refit_every: usize,
    /// Ramp used by spectroscopy campaigns.
    pub ramp: Ramp,
    /// Reconstruction used to score non-adaptive arms.
    pub recon: ReconMethod,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            kernel: KernelFamily::Matern52,
            fit: FitConfig::default(),
            acquisition: AcquisitionSpec::default(),
            pathfinder: PathfinderPolicy::default(),
            mask_taper: 2,
            channel: Channel::Piezoresponse,
            n_seed_points: 20,
            batch: 10,
            max_measurements: 410,
            refit_full_until: 64,
            refit_every: 5,
            ramp: Ramp::symmetric(4.0, 32),
            recon: ReconMethod::Gp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub arms: Vec<Arm>,
    /// Cells use seeds `seed, seed+1, …`.
    pub n_seeds: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            arms: vec![Arm::Grid, Arm::Random, Arm::Bo],
            n_seeds: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RlAlgo {
    DoubleQ,
    Reinforce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RlConfig {
    pub algo: RlAlgo,
    pub double_q: DoubleQConfig,
    pub reinforce: ReinforceConfig,
    pub tip: TipEnvConfig,
    pub write: WriteEnvConfig,
    pub eval_episodes: usize,
}

impl Default for RlConfig {
    fn default() -> Self {
        RlConfig {
            algo: RlAlgo::DoubleQ,
            double_q: DoubleQConfig::default(),
            reinforce: ReinforceConfig::default(),
            tip: TipEnvConfig::default(),
            write: WriteEnvConfig::default(),
            eval_episodes: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FerrobotConfig {
    pub plan: FeedbackPlan,
    pub nx: usize,
    pub ny: usize,
    pub serpentine: bool,
    pub channel: Channel,
}

impl Default for FerrobotConfig {
    fn default() -> Self {
        FerrobotConfig {
            plan: FeedbackPlan::default(),
            nx: 64,
            ny: 64,
            serpentine: false,
            channel: Channel::Piezoresponse,
        }
    }
}

/// Full campaign description, read from TOML. Unknown keys are errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSpec {
    pub kind: CampaignKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub sample: SampleSpec,
    #[serde(default)]
    pub scope: ScopeConfig,
    #[serde(default)]
    pub engine: EngineConfig,
    #[serde(default)]
    pub bench: BenchConfig,
    #[serde(default)]
    pub rl: RlConfig,
    #[serde(default)]
    pub ferrobot: FerrobotConfig,
}

impl CampaignSpec {
    pub fn new(kind: CampaignKind) -> Self {
        CampaignSpec {
            kind,
            seed: 0,
            output_dir: None,
            sample: SampleSpec::default(),
            scope: ScopeConfig::default(),
            engine: EngineConfig::default(),
            bench: BenchConfig::default(),
            rl: RlConfig::default(),
            ferrobot: FerrobotConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: CampaignSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |msg: String| Err(Error::Config(msg));
        if self.sample.path.is_none() && (self.sample.width < 8 || self.sample.height < 8) {
            return cfg(format!(
                "sample must be at least 8x8, got {}x{}",
                self.sample.width, self.sample.height
            ));
        }
        self.scope.latency.validate().map_err(|e| Error::Config(e.to_string()))?;
        if !(self.scope.noise_sigma >= 0.0) {
            return cfg("scope.noise_sigma must be >= 0".into());
        }
        let e = &self.engine;
        let bo = matches!(
            self.kind,
            CampaignKind::BoExplore | CampaignKind::BoSpectro | CampaignKind::BenchRecon
        );
        if bo {
            if e.n_seed_points < 2 || e.batch == 0 || e.max_measurements == 0 || e.refit_every == 0 {
                return cfg("budgets must be positive and n_seed_points >= 2".into());
            }
            if e.max_measurements < e.n_seed_points {
                return cfg(format!(
                    "max_measurements {} is below n_seed_points {}",
                    e.max_measurements, e.n_seed_points
                ));
            }
            if e.max_measurements > MAX_TRAIN {
                return cfg(format!(
                    "max_measurements {} exceeds the GP training cap {MAX_TRAIN}",
                    e.max_measurements
                ));
            }
            if e.max_measurements > self.sample.width * self.sample.height && self.sample.path.is_none() {
                return cfg("max_measurements exceeds the pixel count".into());
            }
            e.acquisition.validate().map_err(|err| Error::Config(err.to_string()))?;
            e.pathfinder.validate().map_err(|err| Error::Config(err.to_string()))?;
            if 2 * e.mask_taper > self.sample.width.min(self.sample.height) {
                return cfg("mask_taper too large for the sample".into());
            }
            if e.ramp.n_steps < 4 || !(e.ramp.v_end > e.ramp.v_start) {
                return cfg("ramp needs n_steps >= 4 and v_end > v_start".into());
            }
        }
        if self.kind == CampaignKind::BenchRecon && (self.bench.arms.is_empty() || self.bench.n_seeds == 0) {
            return cfg("bench needs at least one arm and one seed".into());
        }
        if matches!(self.kind, CampaignKind::RlTip | CampaignKind::RlWrite) {
            self.rl.double_q.validate().map_err(|err| Error::Config(err.to_string()))?;
            self.rl.reinforce.validate().map_err(|err| Error::Config(err.to_string()))?;
            if self.rl.eval_episodes == 0 {
                return cfg("rl.eval_episodes must be positive".into());
            }
        }
        if self.kind == CampaignKind::Ferrobot {
            self.ferrobot.plan.validate().map_err(|err| Error::Config(err.to_string()))?;
            if self.ferrobot.nx < 2 || self.ferrobot.ny < 1 {
                return cfg("ferrobot scan needs nx >= 2 and ny >= 1".into());
            }
        }
        Ok(())
    }
}

