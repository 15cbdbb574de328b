use std::collections::HashSet;

use rand::seq::index::sample as sample_indices;

use super::{CampaignSpec, Decision, IterationReport, RunRecord, RunStatus};
use super::spec::Arm;
use crate::acquire::{self, edge_mask, pathfind, top_maxima, AcquisitionKind};
use crate::error::{Error, Result};
use crate::field::{Grid, Pixel, Pos, ScalarField2D};
use crate::gp::{self, GpDump, GpModel};
use crate::ledger::LatencyLedger;
use crate::par;
use crate::recon::{metrics, reconstruct, ReconMethod, ReconParams, ReconReport};
use crate::rng::{self, tag};
use crate::sample::Sample;
use crate::scope::{
    plan_path, ramp_spectroscopy, Channel, Observation, PathParams, ScanPath, Session, Window,
    DEFAULT_MAX_POINTS,
};

/// Radical inverse of `i` in `base`.
fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let (mut inv, mut f) = (0.0, 1.0 / base as f64);
    while i > 0 {
        inv += (i % base) as f64 * f;
        i /= base;
        f /= base as f64;
    }
    inv
}

/// Halton points in the unit square (bases 2 and 3), skipping the origin.
pub fn halton(n: usize) -> Vec<[f64; 2]> {
    (1..=n as u64)
        .map(|i| [radical_inverse(i, 2), radical_inverse(i, 3)])
        .collect()
}

/// First `n` distinct pixels hit by the Halton sequence.
pub fn halton_pixels(grid: Grid, n: usize) -> Result<Vec<Pixel>> {
    if n > grid.len() {
        return Err(Error::invalid(format!("{n} seed points exceed {} pixels", grid.len())));
    }
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    let mut i = 1u64;
    while out.len() < n {
        let px = grid.pixel_at([
            radical_inverse(i, 2) * grid.extent[0],
            radical_inverse(i, 3) * grid.extent[1],
        ]);
        if seen.insert(px) {
            out.push(px);
        }
        i += 1;
        if i > 1000 * (n as u64 + 16) {
            return Err(Error::numerical("Halton sequence failed to cover enough pixels"));
        }
    }
    Ok(out)
}

/// Outcome of one sampling arm at one seed.
#[derive(Debug, Clone)]
pub struct ArmResult {
    pub arm: Arm,
    pub seed: u64,
    pub status: RunStatus,
    pub observations: Vec<Observation>,
    pub decisions: Vec<Decision>,
    pub ledger: LatencyLedger,
    pub scope_elapsed: f64,
    pub reports: Vec<IterationReport>,
    pub final_report: Option<ReconReport>,
    pub truth: ScalarField2D,
    pub recon: ScalarField2D,
    pub std: Option<ScalarField2D>,
    pub acquisition: Option<ScalarField2D>,
    pub gp: Option<GpDump>,
}

impl ArmResult {
    pub fn into_record(self, spec: CampaignSpec) -> RunRecord {
        let mut rec = RunRecord::empty(spec);
        rec.add_field("truth", &self.truth);
        rec.add_field("recon", &self.recon);
        if let Some(s) = &self.std {
            rec.add_field("posterior_std", s);
        }
        if let Some(a) = &self.acquisition {
            rec.add_field("acquisition", a);
        }
        let grid = self.truth.grid();
        let mut sampled = ScalarField2D::filled(grid, 0.0);
        for o in &self.observations {
            if grid.in_window(o.pos_nominal) {
                sampled.set(grid.pixel_at(o.pos_nominal), 1.0);
            }
        }
        rec.add_field("sampled", &sampled);
        if let Some(g) = &self.gp {
            rec.add_model("gp", g);
        }
        if let Some(r) = &self.final_report {
            rec.summary.insert("final_rmse".into(), r.rmse);
            rec.summary.insert("final_frac_sampled".into(), r.frac_sampled);
        }
        rec.summary.insert("n_obs".into(), self.observations.len() as f64);
        rec.summary.insert("clock".into(), self.ledger.clock());
        if let Some(f) = self.ledger.decision_fraction() {
            rec.summary.insert("decision_fraction".into(), f);
        }
        rec.status = self.status;
        rec.observations = self.observations;
        rec.decisions = self.decisions;
        rec.ledger = self.ledger;
        rec.scope_elapsed = self.scope_elapsed;
        rec.reports = self.reports;
        rec
    }
}

pub fn channel_field(sample: &Sample, channel: Channel) -> Result<ScalarField2D> {
    Ok(match channel {
        Channel::Topography => sample.topography.clone(),
        Channel::Polarization => sample.polarization.clone(),
        Channel::Piezoresponse => sample.piezoresponse(),
        Channel::Custom => sample
            .custom
            .clone()
            .ok_or_else(|| Error::invalid("custom channel requested but sample has no custom map"))?,
    })
}

/// Noise-free loop area per pixel for the configured ramp.
fn loop_area_truth(sample: &Sample, spec: &CampaignSpec) -> Result<ScalarField2D> {
    let ramp = spec.engine.ramp;
    let values = par::map_slice(&sample.loop_params, |p| {
        ramp_spectroscopy(p, &ramp, None, 0.0, 0)
            .and_then(|c| c.loop_area().ok_or_else(|| Error::numerical("truncated loop")))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    ScalarField2D::from_values(sample.grid(), values)
}

struct Harness<'a> {
    spec: &'a CampaignSpec,
    arm: Arm,
    sample: Sample,
    grid: Grid,
    session: Session,
    observations: Vec<Observation>,
    decisions: Vec<Decision>,
    visited: HashSet<Pixel>,
    scope_elapsed: f64,
}

impl Harness<'_> {
    fn data(&self) -> Vec<(Pos, f64)> {
        self.observations.iter().map(|o| (o.pos_nominal, o.value)).collect()
    }

    fn positions(&self) -> Vec<Pos> {
        self.observations.iter().map(|o| o.pos_nominal).collect()
    }

    fn decide(&mut self, mut d: Decision) {
        d.n_inputs = self.observations.len();
        d.inputs_until = self.observations.last().map_or(0.0, |o| o.t_sim);
        d.t_sim = self.session.charge_decision();
        self.decisions.push(d);
    }

    fn measure_pixels(&mut self, pixels: &[Pixel]) -> Result<()> {
        let points: Vec<Pos> = pixels.iter().map(|&p| self.grid.center(p)).collect();
        self.measure_points(&points)
    }

    fn measure_points(&mut self, points: &[Pos]) -> Result<()> {
        let e = &self.spec.engine;
        if self.arm == Arm::BoSpectro {
            for &p in points {
                let t0 = self.session.clock();
                let (curve, mut obs) = self.session.spectroscopy(&self.sample, p, &e.ramp, None)?;
                obs.value = curve
                    .loop_area()
                    .ok_or_else(|| Error::numerical("spectroscopy ramp ended early"))?;
                self.scope_elapsed += self.session.clock() - t0;
                self.observations.push(obs);
            }
        } else {
            let path = ScanPath::from_points(points.to_vec(), self.spec.scope.latency.dwell_default);
            let exec = self.session.execute(&path, &self.sample, e.channel)?;
            self.scope_elapsed += exec.total_time;
            self.observations.extend(exec.observations);
        }
        for p in points {
            self.visited.insert(self.grid.pixel_at(*p));
        }
        Ok(())
    }
}

fn plan_decision(iteration: usize, tour: Vec<Pixel>) -> Decision {
    Decision {
        iteration,
        t_sim: 0.0,
        n_inputs: 0,
        inputs_until: 0.0,
        refit: false,
        kernel: None,
        noise_variance: None,
        candidates: Vec::new(),
        tour,
    }
}

/// Runs one sampling arm of `spec` with `seed` at the engine's measurement
/// budget and scores the reconstruction against the noise-free truth.
pub fn run_arm(spec: &CampaignSpec, arm: Arm, seed: u64) -> Result<ArmResult> {
    spec.validate()?;
    let e = &spec.engine;
    let sample = spec.sample.build(seed)?;
    let grid = sample.grid();
    if e.max_measurements > grid.len() {
        return Err(Error::Config("max_measurements exceeds the pixel count".into()));
    }
    let truth = match arm {
        Arm::BoSpectro => loop_area_truth(&sample, spec)?,
        _ => channel_field(&sample, e.channel)?,
    };
    let mut h = Harness {
        spec,
        arm,
        sample,
        grid,
        session: Session::new(spec.scope, rng::derive_seed(seed, 1))?,
        observations: Vec::new(),
        decisions: Vec::new(),
        visited: HashSet::new(),
        scope_elapsed: 0.0,
    };
    let mut out = ArmResult {
        arm,
        seed,
        status: RunStatus::Completed,
        observations: Vec::new(),
        decisions: Vec::new(),
        ledger: LatencyLedger::new(),
        scope_elapsed: 0.0,
        reports: Vec::new(),
        final_report: None,
        truth,
        recon: ScalarField2D::filled(grid, 0.0),
        std: None,
        acquisition: None,
        gp: None,
    };
    let outcome = match arm {
        Arm::Grid | Arm::Random => run_static(&mut h, &mut out, seed),
        Arm::Bo | Arm::BoSpectro => run_bo(&mut h, &mut out, seed),
    };
    if let Err(err) = outcome {
        if err.is_validation() {
            return Err(err);
        }
        out.status = RunStatus::Failed { message: err.to_string() };
    }
    out.observations = h.observations;
    out.decisions = h.decisions;
    out.scope_elapsed = h.scope_elapsed;
    out.ledger = h.session.into_ledger();
    Ok(out)
}

fn run_static(h: &mut Harness, out: &mut ArmResult, seed: u64) -> Result<()> {
    let e = &h.spec.engine;
    let budget = e.max_measurements;
    let grid = h.grid;
    match h.arm {
        Arm::Grid => {
            let aspect = grid.width as f64 / grid.height as f64;
            let nx = ((budget as f64 * aspect).sqrt().round() as usize).clamp(1, grid.width);
            let ny = (budget / nx).clamp(1, grid.height);
            let path = plan_path(
                Window::full(grid),
                &PathParams::Raster { nx, ny },
                h.spec.scope.latency.dwell_default,
                DEFAULT_MAX_POINTS,
            )?;
            let tour = path.waypoints.iter().map(|p| grid.pixel_at(*p)).collect();
            h.decide(plan_decision(0, tour));
            h.measure_points(&path.waypoints)?;
        }
        _ => {
            let mut r = rng::stream(rng::derive_seed(seed, 2), tag::SAMPLING);
            let mut idx: Vec<usize> = sample_indices(&mut r, grid.len(), budget).into_vec();
            idx.sort_unstable();
            let pixels: Vec<Pixel> = idx.into_iter().map(|i| grid.pixel(i)).collect();
            h.decide(plan_decision(0, pixels.clone()));
            h.measure_pixels(&pixels)?;
        }
    }
    let params = ReconParams {
        method: e.recon,
        kernel: e.kernel,
        fit: e.fit.clone(),
        ..ReconParams::default()
    };
    let data = h.data();
    if e.recon == ReconMethod::Gp {
        let model = gp::fit(&data, e.kernel, &e.fit)?;
        let post = model.posterior(grid)?;
        out.recon = post.mean;
        out.std = Some(post.std);
        out.gp = Some(model.dump());
    } else {
        out.recon = reconstruct(&data, grid, &params)?;
    }
    let report = metrics(e.recon, &out.recon, &out.truth, &h.positions())?;
    out.reports.push(IterationReport {
        iteration: 0,
        seed,
        report: report.clone(),
    });
    out.final_report = Some(report);
    Ok(())
}

fn run_bo(h: &mut Harness, out: &mut ArmResult, seed: u64) -> Result<()> {
    let e = h.spec.engine.clone();
    let grid = h.grid;
    let budget = e.max_measurements;
    let mask = edge_mask(grid.width, grid.height, e.mask_taper)?;
    let nm_per_px = grid.pixel_size()[0];

    let seeds = halton_pixels(grid, e.n_seed_points)?;
    h.decide(plan_decision(0, seeds.clone()));
    h.measure_pixels(&seeds)?;

    let mut model: Option<GpModel> = None;
    let mut iteration = 1;
    while h.observations.len() < budget {
        let data = h.data();
        let refit = model.is_none() || data.len() <= e.refit_full_until || iteration % e.refit_every == 0;
        let m = match (&model, refit) {
            (Some(prev), false) => GpModel::condition(prev.kernel, prev.noise_variance, &data)?,
            _ => gp::fit(&data, e.kernel, &e.fit)?,
        };
        let post = m.posterior(grid)?;
        let report = metrics(ReconMethod::Gp, &post.mean, &out.truth, &h.positions())?;
        out.reports.push(IterationReport { iteration, seed, report });

        let mut acq_spec = e.acquisition;
        if matches!(acq_spec.kind, AcquisitionKind::Ei | AcquisitionKind::Pi) {
            acq_spec.best_so_far = data.iter().map(|d| d.1).fold(f64::NEG_INFINITY, f64::max);
        }
        let acq = acquire::evaluate(&acq_spec, &post, &mask, &h.visited)?;
        let k = e.batch.min(budget - h.observations.len());
        let candidates = top_maxima(&acq, k, e.pathfinder.min_sep)?;
        if candidates.is_empty() {
            break;
        }
        let pixels: Vec<Pixel> = candidates.iter().map(|c| c.pixel).collect();
        let here = h.session.tip().map_or(pixels[0], |p| grid.pixel_at(p));
        let order = pathfind(&pixels, here, &e.pathfinder, nm_per_px)?;
        let tour: Vec<Pixel> = order.iter().map(|&i| pixels[i]).collect();
        h.decide(Decision {
            refit,
            kernel: Some(m.kernel),
            noise_variance: Some(m.noise_variance),
            candidates,
            ..plan_decision(iteration, tour.clone())
        });
        out.acquisition = Some(acq.map(|v| if v.is_finite() { v } else { 0.0 }));
        h.measure_pixels(&tour)?;
        model = Some(m);
        iteration += 1;
    }

    let data = h.data();
    let m = gp::fit(&data, e.kernel, &e.fit)?;
    let post = m.posterior(grid)?;
    let report = metrics(ReconMethod::Gp, &post.mean, &out.truth, &h.positions())?;
    out.reports.push(IterationReport {
        iteration,
        seed,
        report: report.clone(),
    });
    out.final_report = Some(report);
    out.recon = post.mean;
    out.std = Some(post.std);
    out.gp = Some(m.dump());
    Ok(())
}
