//! Exact Gaussian-process regression on 2-D positions.
//!
//! Targets are standardized before fitting; hyperparameters are reported in
//! output units. Fitting maximizes the log marginal likelihood over
//! `(log ℓ, log s², log σₙ²)` with a coarse log-grid followed by bounded
//! Nelder–Mead, so it is deterministic and needs no gradients.

mod linalg;
mod nelder_mead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Grid, Pos, ScalarField2D};
use crate::par;

pub use linalg::{backward_solve, cholesky_in_place, forward_solve};
pub use nelder_mead::{minimize, Outcome};

/// Upper bound on exact-GP training size.
pub const MAX_TRAIN: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Rbf,
    Matern32,
    Matern52,
}

/// Isotropic stationary kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// nm
    pub lengthscale: f64,
    pub signal_variance: f64,
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.lengthscale > 0.0 && self.signal_variance > 0.0)
            || !self.lengthscale.is_finite()
            || !self.signal_variance.is_finite()
        {
            return Err(Error::invalid(format!("invalid kernel {self:?}")));
        }
        Ok(())
    }

    /// Covariance at distance `r`.
    #[inline]
    pub fn at_distance(&self, r: f64) -> f64 {
        let s2 = self.signal_variance;
        let l = self.lengthscale;
        match self.family {
            KernelFamily::Rbf => s2 * (-(r * r) / (2.0 * l * l)).exp(),
            KernelFamily::Matern32 => {
                let z = 3f64.sqrt() * r / l;
                s2 * (1.0 + z) * (-z).exp()
            }
            KernelFamily::Matern52 => {
                let z = 5f64.sqrt() * r / l;
                s2 * (1.0 + z + 5.0 * r * r / (3.0 * l * l)) * (-z).exp()
            }
        }
    }

    #[inline]
    pub fn eval(&self, a: Pos, b: Pos) -> f64 {
        self.at_distance((a[0] - b[0]).hypot(a[1] - b[1]))
    }
}

pub fn kernel_eval(spec: &KernelSpec, a: Pos, b: Pos) -> f64 {
    spec.eval(a, b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    /// Lower lengthscale bound, nm. Defaults to the smallest pairwise
    /// distance in the data.
    pub min_lengthscale: Option<f64>,
    /// Upper lengthscale bound, nm. Defaults to the data bounding-box
    /// diagonal.
    pub max_lengthscale: Option<f64>,
    /// Log-grid points per hyperparameter axis.
    pub grid_points: usize,
    /// Nelder–Mead evaluation budget.
    pub max_evals: usize,
    /// Hyperparameters are searched on at most this many evenly strided
    /// training points; the final model always conditions on all of them.
    pub hyper_subset: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            min_lengthscale: None,
            max_lengthscale: None,
            grid_points: 8,
            max_evals: 200,
            hyper_subset: 128,
        }
    }
}

/// Fitted, immutable GP.
#[derive(Debug, Clone, PartialEq)]
pub struct GpModel {
    /// Kernel in output units.
    pub kernel: KernelSpec,
    /// Observation-noise variance in output units.
    pub noise_variance: f64,
    pub train_x: Vec<Pos>,
    /// Standardized targets.
    pub train_y: Vec<f64>,
    pub y_mean: f64,
    pub y_std: f64,
    /// Diagonal jitter actually added, standardized units.
    pub jitter: f64,
    /// Lower Cholesky factor of the standardized regularized Gram matrix,
    /// row-major n×n.
    factor: Vec<f64>,
    alpha: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub mean: ScalarField2D,
    pub std: ScalarField2D,
}

/// Audit/replay dump of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpDump {
    pub kernel: KernelSpec,
    pub noise_variance: f64,
    pub y_mean: f64,
    pub y_std: f64,
    pub jitter: f64,
    pub log_marginal_likelihood: f64,
    pub train: Vec<(Pos, f64)>,
}

fn check_data(data: &[(Pos, f64)]) -> Result<()> {
    if data.len() < 2 {
        return Err(Error::invalid(format!(
            "GP needs at least 2 observations, got {}",
            data.len()
        )));
    }
    if data.len() > MAX_TRAIN {
        return Err(Error::invalid(format!(
            "GP training size {} exceeds the cap of {MAX_TRAIN}",
            data.len()
        )));
    }
    if data
        .iter()
        .any(|(p, y)| !(p[0].is_finite() && p[1].is_finite() && y.is_finite()))
    {
        return Err(Error::invalid("GP data contains non-finite values"));
    }
    if data.iter().all(|(p, _)| *p == data[0].0) {
        return Err(Error::invalid("GP data needs at least 2 distinct positions"));
    }
    Ok(())
}

fn standardize(ys: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = ys.clone().count() as f64;
    let mean = ys.clone().sum::<f64>() / n;
    let var = ys.map(|y| (y - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std > 0.0 && std.is_finite() { std } else { 1.0 })
}

/// Standardized-space state shared by fitting and conditioning.
struct Factorized {
    factor: Vec<f64>,
    alpha: Vec<f64>,
    jitter: f64,
}

impl Factorized {
    fn lml(&self, y: &[f64]) -> f64 {
        let n = y.len();
        let fit: f64 = y.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        let logdet: f64 = (0..n).map(|i| self.factor[i * n + i].ln()).sum();
        -0.5 * fit - logdet - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
    }
}

/// Regularized Gram matrix `K + σₙ²I` (without jitter), row-major.
pub fn gram(kernel: &KernelSpec, noise_variance: f64, x: &[Pos]) -> Vec<f64> {
    let n = x.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = kernel.eval(x[i], x[j]);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
        k[i * n + i] += noise_variance;
    }
    k
}

/// Factorizes with the escalating jitter schedule: start at
/// `1e-10·tr/n`, ×10 per failure, give up past `1e-4·tr/n`.
fn factorize(kernel: &KernelSpec, noise_variance: f64, x: &[Pos], y: &[f64]) -> Result<Factorized> {
    let n = x.len();
    let base = gram(kernel, noise_variance, x);
    let scale = (0..n).map(|i| base[i * n + i]).sum::<f64>() / n as f64;
    let mut jitter = 1e-10 * scale;
    while jitter <= 1e-4 * scale * (1.0 + 1e-9) {
        let mut a = base.clone();
        for i in 0..n {
            a[i * n + i] += jitter;
        }
        if cholesky_in_place(&mut a, n) {
            let mut alpha = y.to_vec();
            forward_solve(&a, n, &mut alpha);
            backward_solve(&a, n, &mut alpha);
            return Ok(Factorized {
                factor: a,
                alpha,
                jitter,
            });
        }
        jitter *= 10.0;
    }
    Err(Error::numerical(format!(
        "Gram matrix of {n} points is singular even with jitter {:.3e}",
        1e-4 * scale
    )))
}

impl GpModel {
    /// Conditions a GP with fixed hyperparameters (output units) on `data`.
    pub fn condition(kernel: KernelSpec, noise_variance: f64, data: &[(Pos, f64)]) -> Result<Self> {
        check_data(data)?;
        kernel.validate()?;
        if !(noise_variance >= 0.0) || !noise_variance.is_finite() {
            return Err(Error::invalid(format!("noise variance {noise_variance} must be >= 0")));
        }
        let (y_mean, y_std) = standardize(data.iter().map(|d| d.1));
        let train_x: Vec<Pos> = data.iter().map(|d| d.0).collect();
        let train_y: Vec<f64> = data.iter().map(|d| (d.1 - y_mean) / y_std).collect();
        let var_scale = y_std * y_std;
        let std_kernel = KernelSpec {
            signal_variance: kernel.signal_variance / var_scale,
            ..kernel
        };
        let fac = factorize(&std_kernel, noise_variance / var_scale, &train_x, &train_y)?;
        Ok(GpModel {
            kernel,
            noise_variance,
            train_x,
            train_y,
            y_mean,
            y_std,
            jitter: fac.jitter,
            factor: fac.factor,
            alpha: fac.alpha,
        })
    }

    pub fn n_train(&self) -> usize {
        self.train_x.len()
    }

    /// Kernel in standardized units.
    pub fn standardized_kernel(&self) -> KernelSpec {
        KernelSpec {
            signal_variance: self.kernel.signal_variance / (self.y_std * self.y_std),
            ..self.kernel
        }
    }

    pub fn standardized_noise(&self) -> f64 {
        self.noise_variance / (self.y_std * self.y_std)
    }

    /// Standardized regularized Gram matrix the factor was computed from,
    /// including jitter.
    pub fn regularized_gram(&self) -> Vec<f64> {
        let n = self.n_train();
        let mut k = gram(&self.standardized_kernel(), self.standardized_noise(), &self.train_x);
        for i in 0..n {
            k[i * n + i] += self.jitter;
        }
        k
    }

    pub fn factor(&self) -> &[f64] {
        &self.factor
    }

    /// Training targets in output units.
    pub fn train_targets(&self) -> Vec<f64> {
        self.train_y
            .iter()
            .map(|y| y * self.y_std + self.y_mean)
            .collect()
    }

    /// Log marginal likelihood of the standardized training targets.
    pub fn log_marginal_likelihood(&self) -> f64 {
        Factorized {
            factor: self.factor.clone(),
            alpha: self.alpha.clone(),
            jitter: self.jitter,
        }
        .lml(&self.train_y)
    }

    /// Log marginal likelihood of `data` under this model's hyperparameters
    /// and standardization constants.
    pub fn log_marginal_likelihood_of(&self, data: &[(Pos, f64)]) -> Result<f64> {
        check_data(data)?;
        let x: Vec<Pos> = data.iter().map(|d| d.0).collect();
        let y: Vec<f64> = data
            .iter()
            .map(|d| (d.1 - self.y_mean) / self.y_std)
            .collect();
        let fac = factorize(&self.standardized_kernel(), self.standardized_noise(), &x, &y)?;
        Ok(fac.lml(&y))
    }

    /// Predictive mean and standard deviation of the latent function at one
    /// point, output units.
    pub fn predict_one(&self, q: Pos) -> (f64, f64) {
        let n = self.n_train();
        let k = self.standardized_kernel();
        let mut v: Vec<f64> = self.train_x.iter().map(|&x| k.eval(q, x)).collect();
        let mean: f64 = v.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        forward_solve(&self.factor, n, &mut v);
        let var = (k.signal_variance - v.iter().map(|x| x * x).sum::<f64>()).max(0.0);
        (mean * self.y_std + self.y_mean, var.sqrt() * self.y_std)
    }

    pub fn predict(&self, points: &[Pos]) -> Vec<(f64, f64)> {
        par::map_slice(points, |&q| self.predict_one(q))
    }

    /// Posterior mean/std at every pixel center of `grid`.
    pub fn posterior(&self, grid: Grid) -> Result<Posterior> {
        let preds = self.predict(&grid.centers());
        let mean = ScalarField2D::from_values(grid, preds.iter().map(|p| p.0).collect())?;
        let std = ScalarField2D::from_values(grid, preds.iter().map(|p| p.1).collect())?;
        Ok(Posterior { mean, std })
    }

    /// Posterior mean only; cheaper than [`GpModel::posterior`].
    pub fn mean_field(&self, grid: Grid) -> Result<ScalarField2D> {
        let k = self.standardized_kernel();
        let values = par::map_slice(&grid.centers(), |&q| {
            let m: f64 = self
                .train_x
                .iter()
                .zip(&self.alpha)
                .map(|(&x, a)| k.eval(q, x) * a)
                .sum();
            m * self.y_std + self.y_mean
        });
        ScalarField2D::from_values(grid, values)
    }

    pub fn dump(&self) -> GpDump {
        GpDump {
            kernel: self.kernel,
            noise_variance: self.noise_variance,
            y_mean: self.y_mean,
            y_std: self.y_std,
            jitter: self.jitter,
            log_marginal_likelihood: self.log_marginal_likelihood(),
            train: self.train_x.iter().copied().zip(self.train_targets()).collect(),
        }
    }
}

fn lengthscale_bounds(data: &[(Pos, f64)], cfg: &FitConfig) -> (f64, f64) {
    let min_default = || {
        let mut best = f64::INFINITY;
        for (i, a) in data.iter().enumerate() {
            for b in &data[..i] {
                let d = (a.0[0] - b.0[0]).hypot(a.0[1] - b.0[1]);
                if d > 0.0 {
                    best = best.min(d);
                }
            }
        }
        best
    };
    let max_default = || {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for (p, _) in data {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (hi[0] - lo[0]).hypot(hi[1] - lo[1])
    };
    let lo = cfg.min_lengthscale.unwrap_or_else(min_default);
    let hi = cfg.max_lengthscale.unwrap_or_else(max_default);
    (lo, if hi > lo { hi } else { 10.0 * lo })
}

/// Maximum-likelihood fit. Deterministic: identical inputs give
/// bit-identical hyperparameters.
pub fn fit(data: &[(Pos, f64)], family: KernelFamily, cfg: &FitConfig) -> Result<GpModel> {
    check_data(data)?;
    if cfg.grid_points < 2 {
        return Err(Error::invalid("fit needs at least 2 grid points per axis"));
    }
    let (l_lo, l_hi) = lengthscale_bounds(data, cfg);
    if !(l_lo > 0.0) || !l_lo.is_finite() || !l_hi.is_finite() {
        return Err(Error::invalid(format!("bad lengthscale bounds [{l_lo}, {l_hi}]")));
    }

    let (y_mean, y_std) = standardize(data.iter().map(|d| d.1));
    let stride = data.len().div_ceil(cfg.hyper_subset.max(2));
    let subset: Vec<usize> = (0..data.len()).step_by(stride.max(1)).collect();
    let xs: Vec<Pos> = subset.iter().map(|&i| data[i].0).collect();
    let ys: Vec<f64> = subset.iter().map(|&i| (data[i].1 - y_mean) / y_std).collect();

    // Standardized targets have unit variance (or are constant), so the
    // variance bounds are fixed multiples of 1.
    let lower = [l_lo.ln(), 1e-3f64.ln(), 1e-6f64.ln()];
    let upper = [l_hi.ln(), 1e3f64.ln(), 0.0];
    let objective = |theta: &[f64]| -> f64 {
        let kernel = KernelSpec {
            family,
            lengthscale: theta[0].exp(),
            signal_variance: theta[1].exp(),
        };
        match factorize(&kernel, theta[2].exp(), &xs, &ys) {
            Ok(fac) => -fac.lml(&ys),
            Err(_) => f64::INFINITY,
        }
    };

    let g = cfg.grid_points;
    let axis = |k: usize, i: usize| lower[k] + (upper[k] - lower[k]) * i as f64 / (g - 1) as f64;
    let scores = par::map_range(g * g * g, |idx| {
        let theta = [axis(0, idx / (g * g)), axis(1, (idx / g) % g), axis(2, idx % g)];
        (theta, objective(&theta))
    });
    let mut best = scores[0];
    for &cand in &scores[1..] {
        if cand.1 < best.1 {
            best = cand;
        }
    }
    if !best.1.is_finite() {
        return Err(Error::numerical("no hyperparameter grid point admits a factorization"));
    }
    let step: Vec<f64> = (0..3).map(|k| (upper[k] - lower[k]) / (g - 1) as f64).collect();
    let mut obj = objective;
    let refined = nelder_mead::minimize(&mut obj, &best.0, &step, &lower, &upper, cfg.max_evals);
    let theta = if refined.f <= best.1 { refined.x } else { best.0.to_vec() };

    let var_scale = y_std * y_std;
    let kernel = KernelSpec {
        family,
        lengthscale: theta[0].exp(),
        signal_variance: theta[1].exp() * var_scale,
    };
    GpModel::condition(kernel, theta[2].exp() * var_scale, data)
}

