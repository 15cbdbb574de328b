//! Full-frame reconstruction from scattered observations and scoring against
//! ground truth.

use std::collections::HashSet;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Grid, Pixel, Pos, ScalarField2D};
use crate::gp::{self, FitConfig, GpModel, KernelFamily};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconMethod {
    Gp,
    Idw,
    Nearest,
}

impl ReconMethod {
    pub fn name(self) -> &'static str {
        match self {
            ReconMethod::Gp => "gp",
            ReconMethod::Idw => "idw",
            ReconMethod::Nearest => "nearest",
        }
    }
}

/// Shepard regularizer added to `dᵖ`, nm.
pub const IDW_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconParams {
    pub method: ReconMethod,
    pub idw_power: f64,
    pub kernel: KernelFamily,
    pub fit: FitConfig,
}

impl Default for ReconParams {
    fn default() -> Self {
        ReconParams {
            method: ReconMethod::Idw,
            idw_power: 2.0,
            kernel: KernelFamily::Matern52,
            fit: FitConfig::default(),
        }
    }
}

impl ReconParams {
    pub fn with_method(method: ReconMethod) -> Self {
        ReconParams {
            method,
            ..ReconParams::default()
        }
    }
}

pub fn reconstruct(obs: &[(Pos, f64)], grid: Grid, params: &ReconParams) -> Result<ScalarField2D> {
    if obs.is_empty() {
        return Err(Error::invalid("reconstruction needs at least one observation"));
    }
    if obs.iter().any(|(p, v)| !v.is_finite() || !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::invalid("non-finite observation"));
    }
    match params.method {
        ReconMethod::Gp => {
            let model = gp::fit(obs, params.kernel, &params.fit)?;
            reconstruct_gp(&model, grid)
        }
        ReconMethod::Idw => {
            if !(params.idw_power > 0.0) {
                return Err(Error::invalid(format!(
                    "idw power must be positive, got {}",
                    params.idw_power
                )));
            }
            let centers = grid.centers();
            let values = par::map_slice(&centers, |&q| idw_at(obs, q, params.idw_power));
            ScalarField2D::from_values(grid, values)
        }
        ReconMethod::Nearest => {
            let centers = grid.centers();
            let values = par::map_slice(&centers, |&q| nearest_at(obs, q));
            ScalarField2D::from_values(grid, values)
        }
    }
}

/// Posterior-mean image of an already fitted model.
pub fn reconstruct_gp(model: &GpModel, grid: Grid) -> Result<ScalarField2D> {
    model.mean_field(grid)
}

fn dist(a: Pos, b: Pos) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Shepard interpolation. A query that coincides with observations returns
/// their mean exactly instead of the ε-regularized blend.
pub fn idw_at(obs: &[(Pos, f64)], q: Pos, power: f64) -> f64 {
    let (mut hit_sum, mut hits) = (0.0, 0usize);
    let (mut num, mut den) = (0.0, 0.0);
    for &(p, v) in obs {
        let d = dist(p, q);
        if d == 0.0 {
            hit_sum += v;
            hits += 1;
        } else {
            let w = 1.0 / (d.powf(power) + IDW_EPS);
            num += w * v;
            den += w;
        }
    }
    if hits > 0 {
        hit_sum / hits as f64
    } else {
        num / den
    }
}

/// Value of the closest observation; ties go to the lexicographically
/// smallest position `(x, y)`, then to the earliest observation.
pub fn nearest_at(obs: &[(Pos, f64)], q: Pos) -> f64 {
    let mut best = 0;
    let mut best_d = dist(obs[0].0, q);
    for (i, &(p, _)) in obs.iter().enumerate().skip(1) {
        let d = dist(p, q);
        let bp = obs[best].0;
        if d < best_d || (d == best_d && (p[0], p[1]) < (bp[0], bp[1])) {
            best = i;
            best_d = d;
        }
    }
    obs[best].1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconReport {
    pub method: ReconMethod,
    pub rmse: f64,
    /// dB; `+inf` when the truth has zero range or the reconstruction is
    /// exact, serialized as the string `"inf"`.
    #[serde(with = "inf_float")]
    pub psnr: f64,
    pub frac_sampled: f64,
    pub n_obs: usize,
}

pub const CSV_HEADER: &str = "method,n_obs,frac_sampled,rmse,psnr,seed";

impl ReconReport {
    pub fn csv_row(&self, seed: u64) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.method.name(),
            self.n_obs,
            self.frac_sampled,
            self.rmse,
            fmt_float(self.psnr),
            seed
        )
    }
}

pub fn fmt_float(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

mod inf_float {
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            Repr::Num(*v).serialize(s)
        } else {
            Repr::Text(super::fmt_float(*v)).serialize(s)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
            Repr::Text(t) => Err(D::Error::custom(format!("bad float {t:?}"))),
        }
    }
}

/// Scores `recon` against `truth`. `observed` holds the measured positions;
/// `frac_sampled` counts the distinct pixels they fall in.
pub fn metrics(
    method: ReconMethod,
    recon: &ScalarField2D,
    truth: &ScalarField2D,
    observed: &[Pos],
) -> Result<ReconReport> {
    if !recon.same_shape(truth) {
        return Err(Error::invalid(format!(
            "reconstruction is {}x{} but truth is {}x{}",
            recon.width, recon.height, truth.width, truth.height
        )));
    }
    let n = truth.values.len() as f64;
    let sq: f64 = recon
        .values
        .iter()
        .zip(&truth.values)
        .map(|(r, t)| (r - t) * (r - t))
        .sum();
    let rmse = (sq / n).sqrt();
    let range = truth.max() - truth.min();
    let psnr = if range == 0.0 || rmse == 0.0 {
        f64::INFINITY
    } else {
        20.0 * (range / rmse).log10()
    };
    let grid = truth.grid();
    let pixels: HashSet<Pixel> = observed
        .iter()
        .filter(|p| grid.in_window(**p))
        .map(|p| grid.pixel_at(*p))
        .collect();
    Ok(ReconReport {
        method,
        rmse,
        psnr,
        frac_sampled: pixels.len() as f64 / n,
        n_obs: observed.len(),
    })
}

/// Appends a report row, writing the header first if the file is new.
pub fn append_csv(path: &Path, report: &ReconReport, seed: u64) -> Result<()> {
    let fresh = !path.exists();
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut text = String::new();
    if fresh {
        text.push_str(CSV_HEADER);
        text.push('\n');
    }
    text.push_str(&report.csv_row(seed));
    text.push('\n');
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
