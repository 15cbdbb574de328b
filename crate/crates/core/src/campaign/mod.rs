//! Config-driven experiment orchestration: adaptive-sampling campaigns,
//! sampling benchmarks, RL training and line-feedback runs, with
//! persistence, replay and reporting.

mod bo;
mod persist;
mod report;
mod spec;

pub use bo::{halton, halton_pixels, run_arm, ArmResult};
pub use persist::{replay, write_outputs, FileEntry, Manifest, ObservationStream, MANIFEST_FILE};
pub use report::{report, svg_line_chart, Series};
pub use spec::{
    Arm, BenchConfig, CampaignKind, CampaignSpec, EngineConfig, FerrobotConfig, RlAlgo, RlConfig,
    SampleSpec,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::acquire::Candidate;
use crate::agent::{self, BatchStat, EpisodeStat, Environment};
use crate::error::{Error, Result};
use crate::feedback::{run_ferrobot, FeedbackEvent};
use crate::field::{Pixel, ScalarField2D};
use crate::gp::KernelSpec;
use crate::ledger::{LatencyLedger, LedgerKind};
use crate::par;
use crate::recon::ReconReport;
use crate::rng;
use crate::scope::{plan_path, Observation, PathParams, Session, Window, DEFAULT_MAX_POINTS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Failed { message: String },
}

/// One control-loop decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub iteration: usize,
    /// Simulated clock once the decision charge has been paid.
    pub t_sim: f64,
    /// The decision used the first `n_inputs` observations of the log.
    pub n_inputs: usize,
    /// `t_sim` of the latest consumed observation, 0 when none.
    pub inputs_until: f64,
    pub refit: bool,
    pub kernel: Option<KernelSpec>,
    pub noise_variance: Option<f64>,
    pub candidates: Vec<Candidate>,
    /// Visit order chosen by the pathfinder.
    pub tour: Vec<Pixel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: usize,
    pub seed: u64,
    pub report: ReconReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub arm: Arm,
    pub seed: u64,
    pub report: ReconReport,
}

/// Everything a campaign produced. Fields are stored at f32 precision so
/// that a written and replayed record compares equal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub spec: CampaignSpec,
    pub status: RunStatus,
    pub observations: Vec<Observation>,
    pub decisions: Vec<Decision>,
    pub ledger: LatencyLedger,
    /// Σ of scope-reported execution times (dwell, travel, flyback, spectro).
    pub scope_elapsed: f64,
    pub reports: Vec<IterationReport>,
    pub bench: Vec<BenchRow>,
    pub episodes: Vec<EpisodeStat>,
    pub batches: Vec<BatchStat>,
    pub events: Vec<FeedbackEvent>,
    pub fields: BTreeMap<String, ScalarField2D>,
    pub models: BTreeMap<String, serde_json::Value>,
    pub summary: BTreeMap<String, f64>,
}

impl RunRecord {
    pub fn empty(spec: CampaignSpec) -> Self {
        RunRecord {
            spec,
            status: RunStatus::Completed,
            observations: Vec::new(),
            decisions: Vec::new(),
            ledger: LatencyLedger::new(),
            scope_elapsed: 0.0,
            reports: Vec::new(),
            bench: Vec::new(),
            episodes: Vec::new(),
            batches: Vec::new(),
            events: Vec::new(),
            fields: BTreeMap::new(),
            models: BTreeMap::new(),
            summary: BTreeMap::new(),
        }
    }

    pub fn is_failed(&self) -> bool {
        matches!(self.status, RunStatus::Failed { .. })
    }

    pub fn add_field(&mut self, name: &str, field: &ScalarField2D) {
        self.fields.insert(name.to_string(), f32_field(field));
    }

    pub fn add_model<T: Serialize>(&mut self, name: &str, model: &T) {
        let v = serde_json::to_value(model).expect("models serialize");
        self.models.insert(name.to_string(), v);
    }

    /// Every decision may only use observations measured before it.
    pub fn check_causality(&self) -> Result<()> {
        for d in &self.decisions {
            if d.n_inputs > self.observations.len() {
                return Err(Error::invalid(format!(
                    "decision {} uses {} observations but the log has {}",
                    d.iteration,
                    d.n_inputs,
                    self.observations.len()
                )));
            }
            if let Some(o) = self.observations[..d.n_inputs].iter().find(|o| o.t_sim > d.t_sim) {
                return Err(Error::invalid(format!(
                    "decision {} at t={} consumes an observation from t={}",
                    d.iteration, d.t_sim, o.t_sim
                )));
            }
            if d.inputs_until > d.t_sim {
                return Err(Error::invalid(format!("decision {} precedes its inputs", d.iteration)));
            }
        }
        Ok(())
    }
}

fn f32_field(field: &ScalarField2D) -> ScalarField2D {
    field.map(|v| v as f32 as f64)
}

/// Runs a validated campaign. Validation problems are errors; numerical
/// failures part-way through give a record flagged failed with the logs
/// gathered so far.
pub fn run_campaign(spec: &CampaignSpec) -> Result<RunRecord> {
    spec.validate()?;
    match spec.kind {
        CampaignKind::BoExplore | CampaignKind::BoSpectro => {
            let arm = if spec.kind == CampaignKind::BoSpectro { Arm::BoSpectro } else { Arm::Bo };
            let res = run_arm(spec, arm, spec.seed)?;
            Ok(res.into_record(spec.clone()))
        }
        CampaignKind::BenchRecon => run_bench(spec),
        CampaignKind::RlTip | CampaignKind::RlWrite => run_rl(spec),
        CampaignKind::Ferrobot => run_feedback(spec),
    }
}

fn run_bench(spec: &CampaignSpec) -> Result<RunRecord> {
    let cells: Vec<(Arm, u64)> = (0..spec.bench.n_seeds as u64)
        .flat_map(|i| {
            let seed = spec.seed + i;
            spec.bench.arms.iter().map(move |&a| (a, seed))
        })
        .collect();
    let results = par::map_slice(&cells, |&(arm, seed)| run_arm(spec, arm, seed));
    let mut rec = RunRecord::empty(spec.clone());
    for ((arm, seed), res) in cells.iter().zip(results) {
        let res = res?;
        if let RunStatus::Failed { message } = &res.status {
            rec.status = RunStatus::Failed {
                message: format!("{arm:?} seed {seed}: {message}"),
            };
        }
        if let Some(report) = res.final_report {
            rec.bench.push(BenchRow {
                arm: *arm,
                seed: *seed,
                report,
            });
        }
        if *seed == spec.seed {
            rec.reports.extend(res.reports.into_iter().filter(|_| arm.is_adaptive()));
            rec.add_field(&format!("recon_{}", arm.name()), &res.recon);
            rec.add_field("truth", &res.truth);
        }
    }
    for arm in &spec.bench.arms {
        let rmse: Vec<f64> = rec.bench.iter().filter(|r| r.arm == *arm).map(|r| r.report.rmse).collect();
        if !rmse.is_empty() {
            rec.summary.insert(format!("median_rmse_{}", arm.name()), median(rmse));
        }
    }
    Ok(rec)
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    0.5 * (v[(n - 1) / 2] + v[n / 2])
}

fn run_rl(spec: &CampaignSpec) -> Result<RunRecord> {
    let mut rec = RunRecord::empty(spec.clone());
    let rl = &spec.rl;
    let gamma = match rl.algo {
        RlAlgo::DoubleQ => rl.double_q.gamma,
        RlAlgo::Reinforce => rl.reinforce.gamma,
    };
    let mut env: Box<dyn Environment> = match spec.kind {
        CampaignKind::RlTip => Box::new(agent::tip_env(&rl.tip, spec.seed)?),
        _ => {
            let mut cfg = rl.write.clone();
            cfg.coercive_bias = spec.sample.phantom.coercive_bias;
            cfg.flip_sharpness = spec.sample.phantom.flip_sharpness;
            Box::new(agent::write_env(&cfg, spec.seed)?)
        }
    };
    let train = match rl.algo {
        RlAlgo::DoubleQ => agent::train_double_q(env.as_mut(), &rl.double_q, spec.seed).map(|(q, curve)| {
            rec.episodes = curve;
            rec.add_model("q_tables", &q);
            let greedy = q.greedy_policy();
            Box::new(move |s: usize, _: &mut rng::Rng| greedy[s]) as Box<dyn FnMut(usize, &mut rng::Rng) -> usize>
        }),
        RlAlgo::Reinforce => {
            let policy = agent::SoftmaxPolicy::one_hot(env.n_states(), env.n_actions())?;
            agent::train_reinforce(env.as_mut(), policy, &rl.reinforce, spec.seed).map(|(p, curve)| {
                rec.batches = curve;
                rec.add_model("policy", &p);
                Box::new(move |s: usize, r: &mut rng::Rng| p.sample(s, r)) as Box<dyn FnMut(usize, &mut rng::Rng) -> usize>
            })
        }
    };
    let mut choose = match train {
        Ok(c) => c,
        Err(e) if !e.is_validation() => {
            rec.status = RunStatus::Failed { message: e.to_string() };
            return Ok(rec);
        }
        Err(e) => return Err(e),
    };
    let eval_seed = rng::derive_seed(spec.seed, 9);
    let trained = agent::evaluate_policy(env.as_mut(), gamma, rl.eval_episodes, eval_seed, &mut choose)?;
    let na = env.n_actions();
    let random = agent::evaluate_policy(env.as_mut(), gamma, rl.eval_episodes, eval_seed, |_, r| {
        rand::Rng::gen_range(r, 0..na)
    })?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    rec.summary.insert("eval_mean_return".into(), mean(&trained));
    rec.summary.insert("random_mean_return".into(), mean(&random));
    if spec.kind == CampaignKind::RlTip {
        let tip = agent::tip_env(&rl.tip, spec.seed)?;
        let pi = agent::uniform_policy(tip.n_states, tip.n_actions);
        let exact = agent::policy_evaluation(&tip, &pi, gamma)?;
        rec.summary.insert("random_value_exact".into(), exact[tip.start]);
        let vstar = agent::value_iteration(&tip, gamma, 1e-10)?;
        rec.summary.insert("optimal_value".into(), vstar[tip.start]);
    }
    Ok(rec)
}

fn run_feedback(spec: &CampaignSpec) -> Result<RunRecord> {
    let mut rec = RunRecord::empty(spec.clone());
    let fb = &spec.ferrobot;
    let mut sample = spec.sample.build(spec.seed)?;
    let grid = sample.grid();
    rec.add_field("polarization_before", &sample.polarization);
    let params = if fb.serpentine {
        PathParams::Serpentine { nx: fb.nx, ny: fb.ny }
    } else {
        PathParams::Raster { nx: fb.nx, ny: fb.ny }
    };
    let path = plan_path(Window::full(grid), &params, spec.scope.latency.dwell_default, DEFAULT_MAX_POINTS)?;
    let mut session = Session::new(spec.scope, rng::derive_seed(spec.seed, 1))?;
    match run_ferrobot(&mut session, &mut sample, &fb.plan, &path, fb.channel, rng::derive_seed(spec.seed, 3)) {
        Ok(run) => {
            rec.observations = run.observations;
            rec.events = run.events;
            rec.summary.insert("triggers".into(), run.triggers as f64);
        }
        Err(e) if e.is_validation() => return Err(e),
        Err(e) => rec.status = RunStatus::Failed { message: e.to_string() },
    }
    rec.ledger = session.into_ledger();
    rec.scope_elapsed = rec
        .ledger
        .entries()
        .iter()
        .filter(|e| e.kind != LedgerKind::Decision)
        .map(|e| e.duration)
        .sum();
    rec.add_field("polarization_after", &sample.polarization);
    Ok(rec)
}
