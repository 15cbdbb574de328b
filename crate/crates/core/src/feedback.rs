//! Line-triggered feedback: a Schmitt trigger watches the streamed signal
//! and each upward crossing dispatches a predefined pulse waveform at the
//! crossing position.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Pixel, Pos};
use crate::io;
use crate::ledger::LedgerKind;
use crate::rng;
use crate::sample::Sample;
use crate::scope::{Channel, Cursor, Observation, ScanPath, Session};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerState {
    Below,
    Above,
}

/// Dual-threshold detector. It starts disarmed (`Above`) and fires when the
/// signal reaches `high` after having been at or below `low`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchmittTrigger {
    pub low: f64,
    pub high: f64,
    #[serde(default = "disarmed")]
    pub state: TriggerState,
}

fn disarmed() -> TriggerState {
    TriggerState::Above
}

impl SchmittTrigger {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        let t = SchmittTrigger {
            low,
            high,
            state: TriggerState::Above,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.low < self.high) || !self.low.is_finite() || !self.high.is_finite() {
            return Err(Error::invalid(format!(
                "trigger needs finite low < high, got ({}, {})",
                self.low, self.high
            )));
        }
        Ok(())
    }

    /// Feeds one sample; returns true on a below→above transition. NaN
    /// samples leave the state unchanged.
    pub fn feed(&mut self, v: f64) -> bool {
        match self.state {
            TriggerState::Below if v >= self.high => {
                self.state = TriggerState::Above;
                true
            }
            TriggerState::Above if v <= self.low => {
                self.state = TriggerState::Below;
                false
            }
            _ => false,
        }
    }
}

/// Indices of upward crossings in `line` and the trigger after the line.
pub fn detect_crossings(line: &[Observation], trig: SchmittTrigger) -> Result<(Vec<usize>, SchmittTrigger)> {
    if line.is_empty() {
        return Err(Error::invalid("crossing detection needs a nonempty line"));
    }
    trig.validate()?;
    let mut t = trig;
    let hits = line
        .iter()
        .enumerate()
        .filter_map(|(i, o)| t.feed(o.value).then_some(i))
        .collect();
    Ok((hits, t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pulse {
    /// Volts.
    pub bias: f64,
    pub dose: f64,
}

/// Missing keys take the values of `FeedbackPlan::default()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeedbackPlan {
    pub trigger: SchmittTrigger,
    pub waveform: Vec<Pulse>,
    pub per_line_limit: usize,
    /// Pulse footprint radius in pixels.
    pub radius: f64,
    /// Simulated seconds per pulse, charged as modification time.
    pub pulse_time: f64,
}

impl Default for FeedbackPlan {
    fn default() -> Self {
        FeedbackPlan {
            trigger: SchmittTrigger {
                low: -0.5,
                high: 0.5,
                state: disarmed(),
            },
            waveform: vec![Pulse { bias: 6.0, dose: 2.0 }],
            per_line_limit: 4,
            radius: 2.0,
            pulse_time: 0.01,
        }
    }
}

impl FeedbackPlan {
    pub fn validate(&self) -> Result<()> {
        self.trigger.validate()?;
        if self.per_line_limit == 0 || self.waveform.is_empty() {
            return Err(Error::invalid("plan needs per_line_limit >= 1 and a nonempty waveform"));
        }
        if self
            .waveform
            .iter()
            .any(|p| !p.bias.is_finite() || !(p.dose >= 0.0) || !p.dose.is_finite())
        {
            return Err(Error::invalid("waveform pulses need finite bias and dose >= 0"));
        }
        if !(self.radius >= 0.0) || !(self.pulse_time >= 0.0) {
            return Err(Error::invalid("radius and pulse_time must be >= 0"));
        }
        Ok(())
    }
}

/// One dispatched pulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub t_sim: f64,
    pub line: usize,
    pub index: usize,
    pub pos: Pos,
    pub pulse: Pulse,
    pub flips: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackRun {
    pub observations: Vec<Observation>,
    pub events: Vec<FeedbackEvent>,
    pub triggers: usize,
    /// Triggers per line.
    pub line_triggers: Vec<usize>,
}

/// Scans `path` point by point. Each accepted trigger charges one decision,
/// then applies the waveform at the pixel under the drifted tip before the
/// next point is measured, charging `pulse_time` per pulse.
pub fn run_ferrobot(
    session: &mut Session,
    sample: &mut Sample,
    plan: &FeedbackPlan,
    path: &ScanPath,
    channel: Channel,
    seed: u64,
) -> Result<FeedbackRun> {
    plan.validate()?;
    if !path.is_line_structured() {
        return Err(Error::invalid(format!(
            "feedback needs a line-structured path, got {:?}",
            path.kind
        )));
    }
    let grid = sample.grid();
    let mut trig = plan.trigger;
    let mut cursor = Cursor::default();
    let mut run = FeedbackRun {
        observations: Vec::with_capacity(path.len()),
        events: Vec::new(),
        triggers: 0,
        line_triggers: vec![0; path.line_breaks.len() + 1],
    };
    while let Some(step) = session.step(path, &mut cursor, sample, channel)? {
        run.observations.push(step.obs);
        if !trig.feed(step.obs.value) || run.line_triggers[step.line] >= plan.per_line_limit {
            continue;
        }
        run.line_triggers[step.line] += 1;
        run.triggers += 1;
        session.charge_decision();
        let at: Pixel = grid.pixel_at(step.obs.pos_true);
        for pulse in &plan.waveform {
            let pulse_seed = rng::derive_seed(seed, run.events.len() as u64);
            let flipped = sample.apply_pulse(at, pulse.bias, pulse.dose, plan.radius, pulse_seed)?;
            let t_sim = session.charge(LedgerKind::Modify, plan.pulse_time);
            run.events.push(FeedbackEvent {
                t_sim,
                line: step.line,
                index: step.index_in_line,
                pos: step.obs.pos_true,
                pulse: *pulse,
                flips: flipped.len(),
            });
        }
    }
    run.line_triggers.truncate(path.lines().len());
    Ok(run)
}

pub fn write_events_jsonl(path: &Path, events: &[FeedbackEvent]) -> Result<()> {
    let mut text = String::new();
    for e in events {
        text.push_str(&serde_json::to_string(e).map_err(|err| Error::format(path, err.to_string()))?);
        text.push('\n');
    }
    io::write_bytes(path, text.as_bytes())
}
