//! Virtual microscope: scan-path planning, path execution under drift and
//! noise with a simulated-time latency model, ramp spectroscopy, surveys and
//! cross-correlation drift estimation.

use std::ops::Range;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{bilinear_by, Grid, Pos, ScalarField2D};
use crate::ledger::{LatencyLedger, LedgerKind};
use crate::par;
use crate::rng::{self, tag};
use crate::sample::{loop_response, Branch, Sample, SiteLoopParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    Raster,
    Serpentine,
    Spiral,
    Lissajous,
    Freeform,
}

/// Axis-aligned scan window in nm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Window {
    pub fn full(grid: Grid) -> Self {
        Window {
            x0: 0.0,
            y0: 0.0,
            x1: grid.extent[0],
            y1: grid.extent[1],
        }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn center(&self) -> Pos {
        [0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1)]
    }

    pub fn contains(&self, p: Pos) -> bool {
        // Tolerate rounding on curves that touch the border.
        let eps = 1e-9 * self.width().abs().max(self.height().abs()).max(1.0);
        p[0] >= self.x0 - eps && p[0] <= self.x1 + eps && p[1] >= self.y0 - eps && p[1] <= self.y1 + eps
    }

    fn validate(&self, grid: Option<Grid>) -> Result<()> {
        let finite = [self.x0, self.y0, self.x1, self.y1].iter().all(|v| v.is_finite());
        if !finite || !(self.x1 > self.x0) || !(self.y1 > self.y0) {
            return Err(Error::invalid(format!("degenerate scan window {self:?}")));
        }
        if let Some(g) = grid {
            if self.x0 < 0.0 || self.y0 < 0.0 || self.x1 > g.extent[0] || self.y1 > g.extent[1] {
                return Err(Error::invalid(format!(
                    "window {self:?} exceeds sample extent {:?}",
                    g.extent
                )));
            }
        }
        Ok(())
    }
}

/// Kind-specific planning parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathParams {
    Raster { nx: usize, ny: usize },
    Serpentine { nx: usize, ny: usize },
    /// Archimedean spiral from the window center, `r = pitch·θ/2π`,
    /// sampled every `step` nm of arc.
    Spiral { pitch: f64, step: f64 },
    /// `x = A·sin(a·t)`, `y = B·sin(b·t + delta)` about the window center with
    /// half-window amplitudes, `n_points` uniform samples of `t ∈ [0, 2π)`.
    Lissajous {
        a: f64,
        b: f64,
        delta: f64,
        n_points: usize,
    },
    /// User polyline resampled every `step` nm of arc.
    Freeform { polyline: Vec<Pos>, step: f64 },
}

impl PathParams {
    pub fn kind(&self) -> PathKind {
        match self {
            PathParams::Raster { .. } => PathKind::Raster,
            PathParams::Serpentine { .. } => PathKind::Serpentine,
            PathParams::Spiral { .. } => PathKind::Spiral,
            PathParams::Lissajous { .. } => PathKind::Lissajous,
            PathParams::Freeform { .. } => PathKind::Freeform,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPath {
    pub kind: PathKind,
    pub waypoints: Vec<Pos>,
    /// Seconds per point.
    pub dwell: f64,
    /// Exclusive end index of each logical line, strictly increasing.
    /// Points after the last break form a final line without flyback.
    pub line_breaks: Vec<usize>,
}

impl ScanPath {
    /// An ordered visit list with no line structure.
    pub fn from_points(waypoints: Vec<Pos>, dwell: f64) -> Self {
        ScanPath {
            kind: PathKind::Freeform,
            waypoints,
            dwell,
            line_breaks: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    /// Index ranges of the logical lines.
    pub fn lines(&self) -> Vec<Range<usize>> {
        let mut out = Vec::with_capacity(self.line_breaks.len() + 1);
        let mut start = 0;
        for &b in &self.line_breaks {
            out.push(start..b);
            start = b;
        }
        if start < self.waypoints.len() {
            out.push(start..self.waypoints.len());
        }
        out
    }

    pub fn is_line_structured(&self) -> bool {
        matches!(self.kind, PathKind::Raster | PathKind::Serpentine)
    }

    pub fn validate(&self, window: &Window) -> Result<()> {
        if self.waypoints.is_empty() {
            return Err(Error::invalid("scan path has no waypoints"));
        }
        if !(self.dwell >= 0.0) || !self.dwell.is_finite() {
            return Err(Error::invalid(format!("dwell must be >= 0, got {}", self.dwell)));
        }
        if let Some(p) = self.waypoints.iter().find(|p| !window.contains(**p)) {
            return Err(Error::invalid(format!("waypoint {p:?} outside window {window:?}")));
        }
        let increasing = self.line_breaks.windows(2).all(|w| w[0] < w[1]);
        let first_ok = self.line_breaks.first().map_or(true, |&b| b > 0);
        let last_ok = self.line_breaks.last().map_or(true, |&b| b <= self.waypoints.len());
        if !(increasing && first_ok && last_ok) {
            return Err(Error::invalid(format!("bad line breaks {:?}", self.line_breaks)));
        }
        Ok(())
    }
}

pub const DEFAULT_MAX_POINTS: usize = 1 << 20;

fn check_budget(n: usize, max_points: usize) -> Result<()> {
    if n > max_points {
        return Err(Error::invalid(format!(
            "path needs {n} points, more than the configured maximum {max_points}"
        )));
    }
    Ok(())
}

/// Arc length of `r = c·θ` from 0 to θ.
fn spiral_arc(c: f64, theta: f64) -> f64 {
    0.5 * c * (theta * (1.0 + theta * theta).sqrt() + theta.asinh())
}

pub fn plan_path(
    window: Window,
    params: &PathParams,
    dwell: f64,
    max_points: usize,
) -> Result<ScanPath> {
    window.validate(None)?;
    let kind = params.kind();
    let (waypoints, line_breaks) = match params {
        PathParams::Raster { nx, ny } | PathParams::Serpentine { nx, ny } => {
            let (nx, ny) = (*nx, *ny);
            if nx == 0 || ny == 0 {
                return Err(Error::invalid("raster resolution must be positive"));
            }
            check_budget(nx.saturating_mul(ny), max_points)?;
            let dx = window.width() / nx as f64;
            let dy = window.height() / ny as f64;
            let mut pts = Vec::with_capacity(nx * ny);
            for row in 0..ny {
                let y = window.y0 + (row as f64 + 0.5) * dy;
                let reverse = kind == PathKind::Serpentine && row % 2 == 1;
                for i in 0..nx {
                    let col = if reverse { nx - 1 - i } else { i };
                    pts.push([window.x0 + (col as f64 + 0.5) * dx, y]);
                }
            }
            (pts, (1..=ny).map(|r| r * nx).collect())
        }
        PathParams::Spiral { pitch, step } => {
            if !(*pitch > 0.0) || !(*step > 0.0) {
                return Err(Error::invalid("spiral pitch and step must be positive"));
            }
            let c = pitch / std::f64::consts::TAU;
            let r_max = 0.5 * window.width().min(window.height());
            let theta_max = r_max / c;
            let total = spiral_arc(c, theta_max);
            let n = (total / step).floor() as usize + 1;
            check_budget(n, max_points)?;
            let center = window.center();
            let mut pts = Vec::with_capacity(n);
            let mut theta = 0.0f64;
            for k in 0..n {
                let s = k as f64 * step;
                // Newton on s(θ) − s = 0; ds/dθ = c·√(1+θ²).
                for _ in 0..50 {
                    let f = spiral_arc(c, theta) - s;
                    let d = c * (1.0 + theta * theta).sqrt();
                    let next = (theta - f / d).max(0.0);
                    if (next - theta).abs() <= 1e-14 * (1.0 + theta) {
                        theta = next;
                        break;
                    }
                    theta = next;
                }
                let r = (c * theta).min(r_max);
                pts.push([center[0] + r * theta.cos(), center[1] + r * theta.sin()]);
            }
            (pts, vec![n])
        }
        PathParams::Lissajous {
            a,
            b,
            delta,
            n_points,
        } => {
            if *n_points == 0 || !a.is_finite() || !b.is_finite() || !delta.is_finite() {
                return Err(Error::invalid("lissajous needs finite frequencies and n_points > 0"));
            }
            check_budget(*n_points, max_points)?;
            let [cx, cy] = window.center();
            let (ax, by) = (0.5 * window.width(), 0.5 * window.height());
            let pts = (0..*n_points)
                .map(|k| {
                    let t = std::f64::consts::TAU * k as f64 / *n_points as f64;
                    [cx + ax * (a * t).sin(), cy + by * (b * t + delta).sin()]
                })
                .collect();
            (pts, vec![*n_points])
        }
        PathParams::Freeform { polyline, step } => {
            if polyline.is_empty() || !(*step > 0.0) {
                return Err(Error::invalid("freeform needs a polyline and a positive step"));
            }
            if let Some(p) = polyline.iter().find(|p| !window.contains(**p)) {
                return Err(Error::invalid(format!("polyline vertex {p:?} outside window")));
            }
            let seg_len: Vec<f64> = polyline
                .windows(2)
                .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
                .collect();
            let total: f64 = seg_len.iter().sum();
            let n = (total / step).floor() as usize + 1;
            check_budget(n, max_points)?;
            let mut pts = Vec::with_capacity(n);
            let mut seg = 0;
            let mut seg_start = 0.0;
            for k in 0..n {
                let s = k as f64 * step;
                while seg < seg_len.len() && seg_start + seg_len[seg] < s {
                    seg_start += seg_len[seg];
                    seg += 1;
                }
                if seg >= seg_len.len() {
                    pts.push(*polyline.last().unwrap());
                    continue;
                }
                let f = if seg_len[seg] > 0.0 {
                    ((s - seg_start) / seg_len[seg]).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let (p, q) = (polyline[seg], polyline[seg + 1]);
                pts.push([p[0] + f * (q[0] - p[0]), p[1] + f * (q[1] - p[1])]);
            }
            (pts, vec![n])
        }
    };
    let path = ScanPath {
        kind,
        waypoints,
        dwell,
        line_breaks,
    };
    path.validate(&window)?;
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Topography,
    Polarization,
    Piezoresponse,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub pos_nominal: Pos,
    /// Nominal position plus drift at `t_sim`.
    pub pos_true: Pos,
    pub channel: Channel,
    pub value: f64,
    pub t_sim: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriftModel {
    /// nm/s
    pub velocity: [f64; 2],
    /// nm/√s
    pub random_walk_sigma: f64,
    pub seed: u64,
}

impl Default for DriftModel {
    fn default() -> Self {
        DriftModel {
            velocity: [0.0, 0.0],
            random_walk_sigma: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatencyModel {
    /// Seconds per point; also the per-step time of spectroscopy ramps.
    pub dwell_default: f64,
    /// nm/s for moves between points.
    pub slew_rate: f64,
    /// Seconds per line break.
    pub flyback: f64,
    /// Seconds charged per external decision call.
    pub decision_charge: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel {
            dwell_default: 2e-3,
            slew_rate: 1e4,
            flyback: 0.05,
            decision_charge: 0.1,
        }
    }
}

impl LatencyModel {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.dwell_default,
            self.slew_rate,
            self.flyback,
            self.decision_charge,
        ];
        if !fields.iter().all(|v| v.is_finite() && *v >= 0.0) || !(self.slew_rate > 0.0) {
            return Err(Error::invalid(format!("invalid latency model {self:?}")));
        }
        Ok(())
    }
}

/// Acquisition conditions shared by every call on a session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScopeConfig {
    pub drift: DriftModel,
    pub latency: LatencyModel,
    pub noise_sigma: f64,
}

impl Default for ScopeConfig {
    fn default() -> Self {
        ScopeConfig {
            drift: DriftModel::default(),
            latency: LatencyModel::default(),
            noise_sigma: 0.0,
        }
    }
}

/// One exclusive microscope session: owns the simulated clock, the ledger,
/// the drift state and the noise stream.
#[derive(Debug, Clone)]
pub struct Session {
    config: ScopeConfig,
    ledger: LatencyLedger,
    noise_rng: rng::Rng,
    drift_rng: rng::Rng,
    walk: [f64; 2],
    walk_t: f64,
    tip: Option<Pos>,
}

/// Position within a path being executed.
#[derive(Debug, Clone, Default)]
pub struct Cursor {
    next: usize,
    line: usize,
}

impl Cursor {
    pub fn line(&self) -> usize {
        self.line
    }

    pub fn index(&self) -> usize {
        self.next
    }
}

/// One measured point plus its place in the path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub obs: Observation,
    pub line: usize,
    pub index_in_line: usize,
    pub ends_line: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    pub observations: Vec<Observation>,
    pub total_time: f64,
}

impl Session {
    pub fn new(config: ScopeConfig, seed: u64) -> Result<Self> {
        config.latency.validate()?;
        if !(config.noise_sigma >= 0.0) || !(config.drift.random_walk_sigma >= 0.0) {
            return Err(Error::invalid("noise and random-walk sigmas must be >= 0"));
        }
        Ok(Session {
            config,
            ledger: LatencyLedger::new(),
            noise_rng: rng::stream(seed, tag::NOISE),
            drift_rng: rng::stream(config.drift.seed, tag::DRIFT),
            walk: [0.0, 0.0],
            walk_t: 0.0,
            tip: None,
        })
    }

    pub fn config(&self) -> &ScopeConfig {
        &self.config
    }

    pub fn clock(&self) -> f64 {
        self.ledger.clock()
    }

    pub fn ledger(&self) -> &LatencyLedger {
        &self.ledger
    }

    pub fn into_ledger(self) -> LatencyLedger {
        self.ledger
    }

    pub fn tip(&self) -> Option<Pos> {
        self.tip
    }

    pub fn charge(&mut self, kind: LedgerKind, duration: f64) -> f64 {
        self.ledger.charge(kind, duration)
    }

    /// Charges the configured decision latency.
    pub fn charge_decision(&mut self) -> f64 {
        let d = self.config.latency.decision_charge;
        self.ledger.charge(LedgerKind::Decision, d)
    }

    /// Drift offset at simulated time `t`; `t` must not go backwards.
    fn drift_at(&mut self, t: f64) -> [f64; 2] {
        let sigma = self.config.drift.random_walk_sigma;
        if sigma > 0.0 && t > self.walk_t {
            let scale = sigma * (t - self.walk_t).sqrt();
            for w in &mut self.walk {
                let z: f64 = self.drift_rng.sample(StandardNormal);
                *w += scale * z;
            }
        }
        self.walk_t = self.walk_t.max(t);
        let v = self.config.drift.velocity;
        [v[0] * t + self.walk[0], v[1] * t + self.walk[1]]
    }

    fn move_to(&mut self, target: Pos) {
        if let Some(tip) = self.tip {
            let d = (target[0] - tip[0]).hypot(target[1] - tip[1]);
            self.ledger
                .charge(LedgerKind::Travel, d / self.config.latency.slew_rate);
        }
        self.tip = Some(target);
    }

    fn noise(&mut self) -> f64 {
        let sigma = self.config.noise_sigma;
        if sigma > 0.0 {
            let z: f64 = self.noise_rng.sample(StandardNormal);
            sigma * z
        } else {
            0.0
        }
    }

    /// Measures the next point of `path`. Returns `None` when the path is
    /// exhausted.
    pub fn step(
        &mut self,
        path: &ScanPath,
        cursor: &mut Cursor,
        sample: &Sample,
        channel: Channel,
    ) -> Result<Option<Step>> {
        let i = cursor.next;
        let Some(&nominal) = path.waypoints.get(i) else {
            return Ok(None);
        };
        self.move_to(nominal);
        let t = self.ledger.charge(LedgerKind::Dwell, path.dwell);
        let d = self.drift_at(t);
        let pos_true = [nominal[0] + d[0], nominal[1] + d[1]];
        let value = channel_value(sample, channel, pos_true)? + self.noise();
        let line_start = match cursor.line {
            0 => 0,
            l => path.line_breaks[l - 1],
        };
        let ends_line = path.line_breaks.get(cursor.line) == Some(&(i + 1));
        let step = Step {
            obs: Observation {
                pos_nominal: nominal,
                pos_true,
                channel,
                value,
                t_sim: t,
            },
            line: cursor.line,
            index_in_line: i - line_start,
            ends_line: ends_line || i + 1 == path.len(),
        };
        if ends_line {
            self.ledger
                .charge(LedgerKind::Flyback, self.config.latency.flyback);
            cursor.line += 1;
        }
        cursor.next += 1;
        Ok(Some(step))
    }

    /// Line-granular stream over `path`; each item is one logical line.
    pub fn stream<'a>(
        &'a mut self,
        path: &'a ScanPath,
        sample: &'a Sample,
        channel: Channel,
    ) -> LineStream<'a> {
        LineStream {
            session: self,
            path,
            sample,
            channel,
            cursor: Cursor::default(),
        }
    }

    pub fn execute(&mut self, path: &ScanPath, sample: &Sample, channel: Channel) -> Result<Execution> {
        path.validate(&Window::full(sample.grid()))?;
        let t0 = self.clock();
        let mut observations = Vec::with_capacity(path.len());
        for line in self.stream(path, sample, channel) {
            observations.extend(line?);
        }
        Ok(Execution {
            observations,
            total_time: self.clock() - t0,
        })
    }

    /// Raster survey regridded into an `nx × ny` image of the window.
    pub fn survey(
        &mut self,
        sample: &Sample,
        window: Window,
        nx: usize,
        ny: usize,
        channel: Channel,
    ) -> Result<(ScalarField2D, f64)> {
        window.validate(Some(sample.grid()))?;
        let dwell = self.config.latency.dwell_default;
        let path = plan_path(window, &PathParams::Raster { nx, ny }, dwell, DEFAULT_MAX_POINTS)?;
        let exec = self.execute(&path, sample, channel)?;
        let grid = Grid::new(nx, ny, [window.width(), window.height()])?;
        let image = ScalarField2D::from_values(
            grid,
            exec.observations.iter().map(|o| o.value).collect(),
        )?;
        Ok((image, exec.total_time))
    }

    /// Set-point ramp spectroscopy at `pos`, charging one dwell per ramp
    /// step. The loop parameters come from the pixel under the drifted tip.
    pub fn spectroscopy(
        &mut self,
        sample: &Sample,
        pos: Pos,
        ramp: &Ramp,
        stop_threshold: Option<f64>,
    ) -> Result<(SpectroCurve, Observation)> {
        self.move_to(pos);
        let d = self.drift_at(self.clock());
        let pos_true = [pos[0] + d[0], pos[1] + d[1]];
        let params = *sample.params_at(sample.grid().pixel_at(pos_true));
        let seed = rand::RngCore::next_u64(&mut self.noise_rng);
        let curve = ramp_spectroscopy(&params, ramp, stop_threshold, self.config.noise_sigma, seed)?;
        let per_step = self.config.latency.dwell_default;
        for _ in 0..curve.points.len() {
            self.ledger.charge(LedgerKind::Spectro, per_step);
        }
        let obs = Observation {
            pos_nominal: pos,
            pos_true,
            channel: Channel::Custom,
            value: f64::NAN,
            t_sim: self.clock(),
        };
        Ok((curve, obs))
    }
}

pub fn channel_value(sample: &Sample, channel: Channel, pos: Pos) -> Result<f64> {
    Ok(match channel {
        Channel::Topography => sample.topography.bilinear(pos),
        Channel::Polarization => sample.polarization.bilinear(pos),
        // Interpolate the product so the signal is continuous across walls.
        Channel::Piezoresponse => bilinear_by(sample.grid(), pos, |i| {
            sample.polarization.values[i] * sample.loop_params[i].amplitude
        }),
        Channel::Custom => sample
            .custom
            .as_ref()
            .ok_or_else(|| Error::invalid("custom channel requested but sample has no custom map"))?
            .bilinear(pos),
    })
}

pub struct LineStream<'a> {
    session: &'a mut Session,
    path: &'a ScanPath,
    sample: &'a Sample,
    channel: Channel,
    cursor: Cursor,
}

impl Iterator for LineStream<'_> {
    type Item = Result<Vec<Observation>>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut line = Vec::new();
        loop {
            match self
                .session
                .step(self.path, &mut self.cursor, self.sample, self.channel)
            {
                Ok(Some(step)) => {
                    line.push(step.obs);
                    if step.ends_line {
                        return Some(Ok(line));
                    }
                }
                Ok(None) => return (!line.is_empty()).then_some(Ok(line)),
                Err(e) => return Some(Err(e)),
            }
        }
    }
}

/// Linear bias ramp, walked up then back down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ramp {
    pub v_start: f64,
    pub v_end: f64,
    pub n_steps: usize,
}

impl Ramp {
    pub fn symmetric(v_max: f64, n_steps: usize) -> Self {
        Ramp {
            v_start: -v_max,
            v_end: v_max,
            n_steps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectroCurve {
    /// `(bias, response)`: `n_steps` ascending points, then `n_steps`
    /// descending points, truncated if the ramp stopped early.
    pub points: Vec<(f64, f64)>,
    pub stopped_early: bool,
}

impl SpectroCurve {
    /// Trapezoid loop area `∫ (descending − ascending) dV` of a complete
    /// curve; `None` for truncated curves.
    pub fn loop_area(&self) -> Option<f64> {
        let n = self.points.len() / 2;
        if self.stopped_early || n < 2 || self.points.len() != 2 * n {
            return None;
        }
        let (up, down) = self.points.split_at(n);
        let gap = |i: usize| down[n - 1 - i].1 - up[i].1;
        let area = (0..n - 1)
            .map(|i| 0.5 * (gap(i) + gap(i + 1)) * (up[i + 1].0 - up[i].0))
            .sum::<f64>();
        Some(area)
    }
}

pub fn ramp_spectroscopy(
    params: &SiteLoopParams,
    ramp: &Ramp,
    stop_threshold: Option<f64>,
    noise_sigma: f64,
    seed: u64,
) -> Result<SpectroCurve> {
    if ramp.n_steps < 2 {
        return Err(Error::invalid(format!(
            "ramp needs n_steps >= 2, got {}",
            ramp.n_steps
        )));
    }
    let mut rng = rng::stream(seed, tag::SPECTRO);
    let n = ramp.n_steps;
    let bias_at = |i: usize| ramp.v_start + (ramp.v_end - ramp.v_start) * i as f64 / (n - 1) as f64;
    let sweep = (0..n)
        .map(|i| (bias_at(i), Branch::Ascending))
        .chain((0..n).rev().map(|i| (bias_at(i), Branch::Descending)));
    let mut points = Vec::with_capacity(2 * n);
    for (bias, branch) in sweep {
        let mut r = loop_response(params, bias, branch);
        if noise_sigma > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            r += noise_sigma * z;
        }
        points.push((bias, r));
        if stop_threshold.is_some_and(|th| r.abs() >= th) {
            return Ok(SpectroCurve {
                points,
                stopped_early: true,
            });
        }
    }
    Ok(SpectroCurve {
        points,
        stopped_early: false,
    })
}

/// Integer shift `(dx, dy)` such that `b(x, y) ≈ a(x − dx, y − dy)`, chosen
/// by direct normalized cross-correlation over the overlap. Ties prefer the
/// smallest `|dx| + |dy|`, then the lexicographically smallest `(dx, dy)`.
pub fn estimate_drift(a: &ScalarField2D, b: &ScalarField2D, max_shift: usize) -> Result<(i64, i64)> {
    if !a.same_shape(b) {
        return Err(Error::invalid(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    if 2 * max_shift >= a.width.min(a.height) {
        return Err(Error::invalid(format!(
            "max_shift {max_shift} must be below half the smallest image dimension"
        )));
    }
    let m = max_shift as i64;
    let side = (2 * m + 1) as usize;
    let scores = par::map_range(side * side, |k| {
        let dy = (k / side) as i64 - m;
        let dx = (k % side) as i64 - m;
        (dx, dy, ncc(a, b, dx, dy))
    });
    let mut best = scores[0];
    for &cand in &scores[1..] {
        let key = |(dx, dy, _): (i64, i64, f64)| (dx.abs() + dy.abs(), dx, dy);
        if cand.2 > best.2 || (cand.2 == best.2 && key(cand) < key(best)) {
            best = cand;
        }
    }
    Ok((best.0, best.1))
}

fn ncc(a: &ScalarField2D, b: &ScalarField2D, dx: i64, dy: i64) -> f64 {
    let (w, h) = (a.width as i64, a.height as i64);
    let xs = dx.max(0)..(w + dx.min(0));
    let ys = dy.max(0)..(h + dy.min(0));
    let n = (xs.end - xs.start) * (ys.end - ys.start);
    if n <= 0 {
        return f64::NEG_INFINITY;
    }
    let pairs = || {
        ys.clone().flat_map({
            let xs = xs.clone();
            move |y| {
                xs.clone().map(move |x| {
                    let ia = ((y - dy) * w + (x - dx)) as usize;
                    let ib = (y * w + x) as usize;
                    (ia, ib)
                })
            }
        })
    };
    let nf = n as f64;
    let (sa, sb) = pairs().fold((0.0, 0.0), |(sa, sb), (ia, ib)| (sa + a.values[ia], sb + b.values[ib]));
    let (ma, mb) = (sa / nf, sb / nf);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (ia, ib) in pairs() {
        let (da, db) = (a.values[ia] - ma, b.values[ib] - mb);
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if va > 0.0 && vb > 0.0 {
        cov / (va * vb).sqrt()
    } else {
        0.0
    }
}
