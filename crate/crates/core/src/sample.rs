//! Synthetic ferroelectric samples: domain phantoms, per-site hysteresis
//! loops and stochastic tip-induced switching.

use std::path::{Path, PathBuf};

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Grid, Pixel, ScalarField2D};
use crate::io;
use crate::rng::{self, tag};

/// Two-branch shifted-tanh hysteresis loop of one site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiteLoopParams {
    pub amplitude: f64,
    /// Coercive bias on the ascending branch, V.
    pub v_plus: f64,
    /// Coercive bias on the descending branch, V.
    pub v_minus: f64,
    /// Branch sharpness, V.
    pub width: f64,
    pub offset: f64,
}

impl SiteLoopParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.amplitude,
            self.v_plus,
            self.v_minus,
            self.width,
            self.offset,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite || self.v_minus > self.v_plus || self.width <= 0.0 || self.amplitude < 0.0 {
            return Err(Error::invalid(format!("invalid loop parameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Ascending,
    Descending,
}

pub fn loop_response(params: &SiteLoopParams, bias: f64, branch: Branch) -> f64 {
    let vc = match branch {
        Branch::Ascending => params.v_plus,
        Branch::Descending => params.v_minus,
    };
    params.offset + params.amplitude * ((bias - vc) / params.width).tanh()
}

/// Area enclosed by the loop over a symmetric ramp `-v_max..=v_max`,
/// integrated with the trapezoid rule on `n_steps` intervals.
///
/// The descending branch lies above the ascending one when
/// `v_minus <= v_plus`, so the area is `∫ (descending − ascending) dV ≥ 0`.
pub fn loop_area(params: &SiteLoopParams, v_max: f64, n_steps: usize) -> Result<f64> {
    if !(v_max > 0.0) || !v_max.is_finite() {
        return Err(Error::invalid(format!("v_max must be positive, got {v_max}")));
    }
    if n_steps < 4 {
        return Err(Error::invalid(format!("loop_area needs n_steps >= 4, got {n_steps}")));
    }
    let gap = |v: f64| {
        loop_response(params, v, Branch::Descending) - loop_response(params, v, Branch::Ascending)
    };
    let h = 2.0 * v_max / n_steps as f64;
    let mut sum = 0.5 * (gap(-v_max) + gap(v_max));
    for i in 1..n_steps {
        sum += gap(-v_max + i as f64 * h);
    }
    Ok(sum * h)
}

/// Logistic switching probability of one pulse.
pub fn flip_probability(flip_sharpness: f64, coercive_bias: f64, bias: f64, dose: f64) -> f64 {
    let drive = flip_sharpness * (bias.abs() * dose - coercive_bias);
    1.0 / (1.0 + (-drive).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhantomStyle {
    Stripes,
    Bubbles,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomConfig {
    pub style: PhantomStyle,
    /// Stripe band width in pixels; columns alternate sign every `period`.
    pub period: f64,
    /// Correlation length of the bubble pattern, pixels.
    pub bubble_scale: f64,
    pub coercive_bias: f64,
    pub flip_sharpness: f64,
    /// Mean loop coercive bias, V.
    pub loop_coercive: f64,
    pub loop_width: f64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig {
            style: PhantomStyle::Stripes,
            period: 8.0,
            bubble_scale: 3.0,
            coercive_bias: 2.0,
            flip_sharpness: 4.0,
            loop_coercive: 1.0,
            loop_width: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Values are exactly ±1.
    pub polarization: ScalarField2D,
    /// Smooth surface height, nm.
    pub topography: ScalarField2D,
    /// One entry per pixel, row-major.
    pub loop_params: Vec<SiteLoopParams>,
    pub coercive_bias: f64,
    pub flip_sharpness: f64,
    /// Optional user-supplied map served on the `custom` channel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom: Option<ScalarField2D>,
}

/// Separable Gaussian blur with reflected borders, normalized to zero mean
/// and unit standard deviation.
fn smooth_noise(grid: Grid, sigma: f64, rng: &mut rng::Rng) -> Vec<f64> {
    let (w, h) = (grid.width, grid.height);
    let raw: Vec<f64> = (0..w * h).map(|_| rng.sample(StandardNormal)).collect();
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let reflect = |i: isize, n: usize| -> usize {
        let n = n as isize;
        let mut i = i;
        while i < 0 || i >= n {
            i = if i < 0 { -i - 1 } else { 2 * n - i - 1 };
        }
        i as usize
    };
    let mut tmp = vec![0.0; w * h];
    for r in 0..h {
        for c in 0..w {
            tmp[r * w + c] = kernel
                .iter()
                .enumerate()
                .map(|(k, kv)| kv * raw[r * w + reflect(c as isize + k as isize - radius, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for r in 0..h {
        for c in 0..w {
            out[r * w + c] = kernel
                .iter()
                .enumerate()
                .map(|(k, kv)| kv * tmp[reflect(r as isize + k as isize - radius, h) * w + c])
                .sum();
        }
    }
    let n = out.len() as f64;
    let mean = out.iter().sum::<f64>() / n;
    let sd = (out.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    out.iter().map(|v| (v - mean) / sd).collect()
}

fn stripe_sign(col: usize, period: f64) -> f64 {
    if (std::f64::consts::PI * (col as f64 + 0.5) / period).sin() >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Deterministic synthetic sample for a given seed.
pub fn gen_domain_phantom(
    width: usize,
    height: usize,
    extent: [f64; 2],
    cfg: &PhantomConfig,
    seed: u64,
) -> Result<Sample> {
    if width < 8 || height < 8 {
        return Err(Error::invalid(format!(
            "phantom needs at least 8x8 pixels, got {width}x{height}"
        )));
    }
    if !(cfg.period > 0.0) || !(cfg.bubble_scale > 0.0) || !(cfg.loop_width > 0.0) {
        return Err(Error::invalid("phantom period, bubble_scale and loop_width must be positive"));
    }
    let grid = Grid::new(width, height, extent)?;
    let mut rng = rng::stream(seed, tag::PHANTOM);

    let bubbles = smooth_noise(grid, cfg.bubble_scale, &mut rng);
    let bubble_sign = |i: usize| if bubbles[i] > 0.4 { 1.0 } else { -1.0 };
    let polarization = ScalarField2D::from_fn(grid, |px| {
        let i = grid.index(px);
        match cfg.style {
            PhantomStyle::Stripes => stripe_sign(px.col, cfg.period),
            PhantomStyle::Bubbles => bubble_sign(i),
            PhantomStyle::Mixed if px.col < width / 2 => stripe_sign(px.col, cfg.period),
            PhantomStyle::Mixed => bubble_sign(i),
        }
    });

    let smooth_scale = (width.min(height) as f64 / 8.0).max(2.0);
    let amp = smooth_noise(grid, smooth_scale, &mut rng);
    let vp = smooth_noise(grid, smooth_scale, &mut rng);
    let vm = smooth_noise(grid, smooth_scale, &mut rng);
    let off = smooth_noise(grid, smooth_scale, &mut rng);
    let topo = smooth_noise(grid, 2.0 * smooth_scale, &mut rng);

    let on_wall = |px: Pixel| {
        let s = polarization.get(px);
        let mut neighbors = Vec::with_capacity(4);
        if px.row > 0 {
            neighbors.push(Pixel::new(px.row - 1, px.col));
        }
        if px.row + 1 < height {
            neighbors.push(Pixel::new(px.row + 1, px.col));
        }
        if px.col > 0 {
            neighbors.push(Pixel::new(px.row, px.col - 1));
        }
        if px.col + 1 < width {
            neighbors.push(Pixel::new(px.row, px.col + 1));
        }
        neighbors.into_iter().any(|n| polarization.get(n) != s)
    };

    let vc = cfg.loop_coercive;
    let loop_params = (0..grid.len())
        .map(|i| {
            let px = grid.pixel(i);
            let dip = if on_wall(px) { 0.5 } else { 1.0 };
            let v_plus = vc * (1.0 + 0.15 * vp[i].clamp(-3.0, 3.0));
            let v_minus = (-vc * (1.0 + 0.15 * vm[i].clamp(-3.0, 3.0))).min(v_plus);
            SiteLoopParams {
                amplitude: ((1.0 + 0.2 * amp[i]) * dip).max(0.0),
                v_plus,
                v_minus,
                width: cfg.loop_width,
                offset: 0.05 * off[i],
            }
        })
        .collect();

    let topography = ScalarField2D::from_values(grid, topo.iter().map(|t| 2.0 * t).collect())?;

    Ok(Sample {
        polarization,
        topography,
        loop_params,
        coercive_bias: cfg.coercive_bias,
        flip_sharpness: cfg.flip_sharpness,
        custom: None,
    })
}

const PLANES: [&str; 7] = [
    "polarization",
    "topography",
    "amplitude",
    "v_plus",
    "v_minus",
    "width",
    "offset",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SampleHeader {
    #[serde(flatten)]
    raw: io::RawHeader,
    coercive_bias: f64,
    flip_sharpness: f64,
}

impl Sample {
    pub fn grid(&self) -> Grid {
        self.polarization.grid()
    }

    pub fn params_at(&self, px: Pixel) -> &SiteLoopParams {
        &self.loop_params[self.grid().index(px)]
    }

    /// Piezoresponse: loop amplitude signed by the local polarization.
    pub fn piezoresponse(&self) -> ScalarField2D {
        let mut f = self.polarization.clone();
        for (v, p) in f.values.iter_mut().zip(&self.loop_params) {
            *v *= p.amplitude;
        }
        f
    }

    /// Ground-truth loop-area map over a symmetric ramp.
    pub fn loop_area_map(&self, v_max: f64, n_steps: usize) -> Result<ScalarField2D> {
        let values = self
            .loop_params
            .iter()
            .map(|p| loop_area(p, v_max, n_steps))
            .collect::<Result<Vec<_>>>()?;
        ScalarField2D::from_values(self.grid(), values)
    }

    /// Fires one bias pulse at `pos`. Each pixel within `radius` (pixels,
    /// Euclidean) whose polarization differs from `sign(bias)` switches
    /// independently with [`flip_probability`]. Returns the switched pixels in
    /// row-major order.
    pub fn apply_pulse(
        &mut self,
        pos: Pixel,
        bias: f64,
        dose: f64,
        radius: f64,
        rng_seed: u64,
    ) -> Result<Vec<Pixel>> {
        let grid = self.grid();
        if !grid.contains(pos) {
            return Err(Error::invalid(format!(
                "pulse position {pos:?} outside {}x{} grid",
                grid.width, grid.height
            )));
        }
        if !(dose >= 0.0) || !dose.is_finite() || !bias.is_finite() {
            return Err(Error::invalid(format!("invalid pulse bias {bias} / dose {dose}")));
        }
        if !(radius >= 0.0) {
            return Err(Error::invalid(format!("pulse radius must be >= 0, got {radius}")));
        }
        if dose == 0.0 || bias == 0.0 {
            return Ok(Vec::new());
        }
        let target = bias.signum();
        let p = flip_probability(self.flip_sharpness, self.coercive_bias, bias, dose);
        let mut rng = rng::stream(rng_seed, tag::PULSE);
        let reach = radius.floor() as usize;
        let rows = pos.row.saturating_sub(reach)..=(pos.row + reach).min(grid.height - 1);
        let mut flipped = Vec::new();
        for row in rows {
            for col in pos.col.saturating_sub(reach)..=(pos.col + reach).min(grid.width - 1) {
                let px = Pixel::new(row, col);
                if px.dist(pos) > radius || self.polarization.get(px) == target {
                    continue;
                }
                if rng.gen::<f64>() < p {
                    self.polarization.set(px, target);
                    flipped.push(px);
                }
            }
        }
        Ok(flipped)
    }

    /// Writes `<stem>.json`, `<stem>.raw` and a `<stem>.pgm` polarization
    /// quicklook.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
        let grid = self.grid();
        let header = SampleHeader {
            raw: io::RawHeader::new(grid, PLANES.iter().map(|s| s.to_string()).collect()),
            coercive_bias: self.coercive_bias,
            flip_sharpness: self.flip_sharpness,
        };
        let column = |f: fn(&SiteLoopParams) -> f64| -> Vec<f64> {
            self.loop_params.iter().map(f).collect()
        };
        let planes = [
            self.polarization.values.clone(),
            self.topography.values.clone(),
            column(|p| p.amplitude),
            column(|p| p.v_plus),
            column(|p| p.v_minus),
            column(|p| p.width),
            column(|p| p.offset),
        ];
        let plane_refs: Vec<&[f64]> = planes.iter().map(|p| p.as_slice()).collect();
        let [json, raw, pgm] = io::field_file_names(stem);
        let paths = vec![dir.join(json), dir.join(raw), dir.join(pgm)];
        io::write_bytes(
            &paths[0],
            &serde_json::to_vec_pretty(&header).expect("header serializes"),
        )?;
        io::write_bytes(&paths[1], &io::raw_bytes(&plane_refs))?;
        io::write_bytes(&paths[2], &io::pgm_bytes(&self.polarization))?;
        Ok(paths)
    }

    pub fn read(dir: &Path, stem: &str) -> Result<Sample> {
        let [json, raw, _] = io::field_file_names(stem);
        let header_path = dir.join(json);
        let header: SampleHeader = serde_json::from_slice(&io::read_bytes(&header_path)?)
            .map_err(|e| Error::format(&header_path, e.to_string()))?;
        if header.raw.planes != PLANES {
            return Err(Error::format(&header_path, "unexpected plane list"));
        }
        let grid = header.raw.grid()?;
        let raw_path = dir.join(raw);
        let planes = io::parse_raw(&io::read_bytes(&raw_path)?, PLANES.len(), grid.len())
            .ok_or_else(|| Error::format(&raw_path, "size does not match header"))?;
        let loop_params = (0..grid.len())
            .map(|i| SiteLoopParams {
                amplitude: planes[2][i],
                v_plus: planes[3][i],
                v_minus: planes[4][i],
                width: planes[5][i],
                offset: planes[6][i],
            })
            .collect();
        Ok(Sample {
            polarization: ScalarField2D::from_values(grid, planes[0].clone())?,
            topography: ScalarField2D::from_values(grid, planes[1].clone())?,
            loop_params,
            coercive_bias: header.coercive_bias,
            flip_sharpness: header.flip_sharpness,
            custom: None,
        })
    }
}
