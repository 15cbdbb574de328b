use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Environment, Transition};
use crate::error::{Error, Result};
use crate::field::{Grid, Pixel, ScalarField2D};
use crate::rng::{self, tag, Rng};
use crate::sample::{Sample, SiteLoopParams};

pub const WRITE_ACTIONS: [&str; 6] = ["north", "south", "east", "west", "pulse_plus", "pulse_minus"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WriteEnvConfig {
    /// Goal pattern rows; 1 is up-polarized, 0 down.
    pub goal: Vec<Vec<u8>>,
    /// Starting pattern; all down when absent.
    pub initial: Option<Vec<Vec<u8>>>,
    pub pulse_bias: f64,
    pub pulse_dose: f64,
    pub coercive_bias: f64,
    pub flip_sharpness: f64,
    pub step_cost: f64,
    pub max_steps: usize,
}

impl Default for WriteEnvConfig {
    fn default() -> Self {
        WriteEnvConfig {
            goal: vec![vec![1, 0], vec![0, 1]],
            initial: None,
            pulse_bias: 3.0,
            pulse_dose: 1.0,
            coercive_bias: 2.0,
            flip_sharpness: 2.0,
            step_cost: 0.1,
            max_steps: 60,
        }
    }
}

/// Domain-writing environment over a small grid. The state is the cursor
/// cell and the current pattern; pulses go through the sample's stochastic
/// switching law. Reward is the drop in Hamming distance to the goal minus
/// the step cost.
#[derive(Debug, Clone)]
pub struct WriteEnv {
    pub cfg: WriteEnvConfig,
    pub width: usize,
    pub height: usize,
    goal: u64,
    initial: u64,
    sample: Sample,
    cursor: usize,
    rng: Rng,
}

fn pattern_bits(rows: &[Vec<u8>], w: usize, h: usize) -> Result<u64> {
    if rows.len() != h || rows.iter().any(|r| r.len() != w || r.iter().any(|&v| v > 1)) {
        return Err(Error::invalid("patterns must be rectangular 0/1 grids of the goal's shape"));
    }
    Ok(rows
        .iter()
        .flatten()
        .enumerate()
        .fold(0, |acc, (i, &v)| acc | ((v as u64) << i)))
}

pub fn write_env(cfg: &WriteEnvConfig, seed: u64) -> Result<WriteEnv> {
    let h = cfg.goal.len();
    let w = cfg.goal.first().map_or(0, Vec::len);
    if w == 0 || h == 0 || w > 5 || h > 5 {
        return Err(Error::invalid(format!("write grid must be between 1x1 and 5x5, got {w}x{h}")));
    }
    if !(cfg.pulse_bias > 0.0) || !(cfg.pulse_dose >= 0.0) || !(cfg.flip_sharpness > 0.0) {
        return Err(Error::invalid("invalid pulse parameters"));
    }
    if !cfg.step_cost.is_finite() || cfg.max_steps == 0 {
        return Err(Error::invalid("invalid step cost or max_steps"));
    }
    let goal = pattern_bits(&cfg.goal, w, h)?;
    let initial = match &cfg.initial {
        Some(rows) => pattern_bits(rows, w, h)?,
        None => 0,
    };
    let grid = Grid::new(w, h, [w as f64, h as f64])?;
    let sample = Sample {
        polarization: ScalarField2D::filled(grid, -1.0),
        topography: ScalarField2D::filled(grid, 0.0),
        loop_params: vec![
            SiteLoopParams {
                amplitude: 1.0,
                v_plus: cfg.coercive_bias,
                v_minus: -cfg.coercive_bias,
                width: 0.3,
                offset: 0.0,
            };
            w * h
        ],
        coercive_bias: cfg.coercive_bias,
        flip_sharpness: cfg.flip_sharpness,
        custom: None,
    };
    let mut env = WriteEnv {
        cfg: cfg.clone(),
        width: w,
        height: h,
        goal,
        initial,
        sample,
        cursor: 0,
        rng: rng::stream(seed, tag::ENV),
    };
    env.load(initial, 0);
    Ok(env)
}

impl WriteEnv {
    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    fn load(&mut self, bits: u64, cursor: usize) {
        for i in 0..self.cells() {
            let v = if bits >> i & 1 == 1 { 1.0 } else { -1.0 };
            self.sample.polarization.values[i] = v;
        }
        self.cursor = cursor;
    }

    pub fn pattern(&self) -> u64 {
        self.sample
            .polarization
            .values
            .iter()
            .enumerate()
            .fold(0, |acc, (i, &v)| acc | (u64::from(v > 0.0) << i))
    }

    pub fn hamming(&self) -> u32 {
        (self.pattern() ^ self.goal).count_ones()
    }

    pub fn cursor(&self) -> Pixel {
        Pixel::new(self.cursor / self.width, self.cursor % self.width)
    }

    pub fn sample(&self) -> &Sample {
        &self.sample
    }

    /// Places the cursor and pattern directly.
    pub fn set_state(&mut self, cursor: Pixel, pattern: u64) -> Result<()> {
        if cursor.row >= self.height || cursor.col >= self.width || pattern >> self.cells() != 0 {
            return Err(Error::invalid("state outside the write grid"));
        }
        self.load(pattern, cursor.row * self.width + cursor.col);
        Ok(())
    }

    pub fn state_index(&self) -> usize {
        (self.cursor << self.cells()) | self.pattern() as usize
    }
}

impl Environment for WriteEnv {
    fn n_states(&self) -> usize {
        self.cells() << self.cells()
    }

    fn n_actions(&self) -> usize {
        WRITE_ACTIONS.len()
    }

    fn max_steps(&self) -> usize {
        self.cfg.max_steps
    }

    fn is_terminal(&self, state: usize) -> bool {
        (state as u64 & ((1u64 << self.cells()) - 1)) == self.goal
    }

    fn reset(&mut self) -> usize {
        self.load(self.initial, 0);
        self.state_index()
    }

    fn step(&mut self, action: usize) -> Result<Transition> {
        if action >= WRITE_ACTIONS.len() {
            return Err(Error::invalid(format!("action {action} out of range")));
        }
        if self.hamming() == 0 {
            return Ok(Transition {
                state: self.state_index(),
                reward: 0.0,
                terminal: true,
            });
        }
        let before = self.hamming() as f64;
        let Pixel { row, col } = self.cursor();
        match action {
            0 => self.cursor -= if row > 0 { self.width } else { 0 },
            1 => self.cursor += if row + 1 < self.height { self.width } else { 0 },
            2 => self.cursor += usize::from(col + 1 < self.width),
            3 => self.cursor -= usize::from(col > 0),
            _ => {
                let bias = if action == 4 { self.cfg.pulse_bias } else { -self.cfg.pulse_bias };
                let seed = self.rng.gen();
                self.sample
                    .apply_pulse(Pixel::new(row, col), bias, self.cfg.pulse_dose, 0.0, seed)?;
            }
        }
        let after = self.hamming() as f64;
        Ok(Transition {
            state: self.state_index(),
            reward: before - after - self.cfg.step_cost,
            terminal: after == 0.0,
        })
    }

    fn reseed(&mut self, seed: u64) {
        self.rng = rng::stream(seed, tag::ENV);
    }
}

