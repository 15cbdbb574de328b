//! Acquisition functions over pixel grids, border masking, greedy
//! non-maximum suppression of degenerate maxima, and pathfinder ordering of
//! the resulting visit list.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::error::{Error, Result};
use crate::field::{Grid, Pixel, ScalarField2D};
use crate::gp::Posterior;
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcquisitionKind {
    MaxVariance,
    Ucb,
    Ei,
    Pi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcquisitionSpec {
    pub kind: AcquisitionKind,
    /// Weight on σ for UCB.
    pub beta: f64,
    /// Improvement margin for EI/PI.
    pub xi: f64,
    /// Incumbent for EI/PI; the campaign fills it from the data.
    pub best_so_far: f64,
}

impl Default for AcquisitionSpec {
    fn default() -> Self {
        AcquisitionSpec {
            kind: AcquisitionKind::MaxVariance,
            beta: 2.0,
            xi: 0.0,
            best_so_far: 0.0,
        }
    }
}

impl AcquisitionSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) || !(self.xi >= 0.0) || !self.best_so_far.is_finite() {
            return Err(Error::invalid(format!("invalid acquisition spec {self:?}")));
        }
        Ok(())
    }
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Unmasked acquisition value at one pixel.
pub fn acquisition_value(spec: &AcquisitionSpec, mu: f64, sigma: f64) -> f64 {
    match spec.kind {
        AcquisitionKind::MaxVariance => sigma,
        AcquisitionKind::Ucb => mu + spec.beta * sigma,
        AcquisitionKind::Ei => {
            if sigma <= 0.0 {
                return 0.0;
            }
            let imp = mu - spec.best_so_far - spec.xi;
            let z = imp / sigma;
            // The closed form can dip a few ulps below zero deep in the tail.
            (imp * normal_cdf(z) + sigma * normal_pdf(z)).max(0.0)
        }
        AcquisitionKind::Pi => {
            let imp = mu - spec.best_so_far - spec.xi;
            if sigma <= 0.0 {
                return if imp > 0.0 { 1.0 } else { 0.0 };
            }
            normal_cdf(imp / sigma)
        }
    }
}

/// Raised-cosine border taper: 0 on the outer pixel ring, 1 at `taper`
/// pixels from every border and beyond.
pub fn edge_mask(width: usize, height: usize, taper: usize) -> Result<ScalarField2D> {
    if 2 * taper > width.min(height) {
        return Err(Error::invalid(format!(
            "taper {taper} too large for a {width}x{height} grid"
        )));
    }
    let grid = Grid::new(width, height, [width as f64, height as f64])?;
    Ok(ScalarField2D::from_fn(grid, |px| {
        let d = px
            .col
            .min(px.row)
            .min(width - 1 - px.col)
            .min(height - 1 - px.row);
        if d >= taper {
            1.0
        } else {
            0.5 * (1.0 - (std::f64::consts::PI * d as f64 / taper as f64).cos())
        }
    }))
}

/// Masked acquisition surface; visited pixels are `-inf`.
pub fn evaluate(
    spec: &AcquisitionSpec,
    post: &Posterior,
    mask: &ScalarField2D,
    visited: &HashSet<Pixel>,
) -> Result<ScalarField2D> {
    spec.validate()?;
    if !post.mean.same_shape(&post.std) || !post.mean.same_shape(mask) {
        return Err(Error::invalid(format!(
            "acquisition inputs disagree: mean {}x{}, std {}x{}, mask {}x{}",
            post.mean.width,
            post.mean.height,
            post.std.width,
            post.std.height,
            mask.width,
            mask.height
        )));
    }
    let grid = post.mean.grid();
    let values = par::map_range(grid.len(), |i| {
        acquisition_value(spec, post.mean.values[i], post.std.values[i]) * mask.values[i]
    });
    let mut out = ScalarField2D::from_values(grid, values)?;
    for px in visited {
        if grid.contains(*px) {
            out.set(*px, f64::NEG_INFINITY);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub pixel: Pixel,
    pub score: f64,
}

/// Greedy non-maximum suppression: repeatedly take the best remaining pixel
/// (ties to the smallest `(row, col)`) and drop everything closer than
/// `min_sep` pixels to it. `-inf` and NaN pixels are never selected.
pub fn top_maxima(acq: &ScalarField2D, k: usize, min_sep: f64) -> Result<Vec<Candidate>> {
    if k == 0 {
        return Err(Error::invalid("top_maxima needs k >= 1"));
    }
    let grid = acq.grid();
    let mut order: Vec<usize> = (0..grid.len())
        .filter(|&i| acq.values[i] > f64::NEG_INFINITY)
        .collect();
    // Stable sort keeps row-major order among equal scores.
    order.sort_by(|&a, &b| acq.values[b].total_cmp(&acq.values[a]));
    let mut picked: Vec<Candidate> = Vec::with_capacity(k);
    for i in order {
        let px = grid.pixel(i);
        if picked.iter().all(|c| c.pixel.dist(px) >= min_sep) {
            picked.push(Candidate {
                pixel: px,
                score: acq.values[i],
            });
            if picked.len() == k {
                break;
            }
        }
    }
    Ok(picked)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathfinderMode {
    Nearest,
    NonCrossing,
    Directional,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathfinderPolicy {
    pub mode: PathfinderMode,
    /// Minimum candidate separation, pixels.
    pub min_sep: f64,
    /// Unit vector `[x, y]` for directional mode.
    pub preferred_dir: [f64; 2],
    /// Cost in nm charged for a move opposite to `preferred_dir`; a move at
    /// angle θ costs `dir_penalty·(1 − cos θ)` on top of its length.
    pub dir_penalty: f64,
}

impl Default for PathfinderPolicy {
    fn default() -> Self {
        PathfinderPolicy {
            mode: PathfinderMode::NonCrossing,
            min_sep: 3.0,
            preferred_dir: [1.0, 0.0],
            dir_penalty: 0.0,
        }
    }
}

impl PathfinderPolicy {
    pub fn validate(&self) -> Result<()> {
        let norm = self.preferred_dir[0].hypot(self.preferred_dir[1]);
        if !(self.min_sep >= 0.0) || !(self.dir_penalty >= 0.0) {
            return Err(Error::invalid(format!("invalid pathfinder policy {self:?}")));
        }
        if self.mode == PathfinderMode::Directional && (norm - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("preferred_dir must be a unit vector"));
        }
        Ok(())
    }
}

/// Orders `candidates` into a visit sequence starting from `current`.
/// Returns a permutation of candidate indices. `nm_per_px` converts pixel
/// distances into the nm units of `dir_penalty`.
pub fn pathfind(
    candidates: &[Pixel],
    current: Pixel,
    policy: &PathfinderPolicy,
    nm_per_px: f64,
) -> Result<Vec<usize>> {
    if candidates.is_empty() {
        return Err(Error::invalid("pathfind needs at least one candidate"));
    }
    policy.validate()?;
    let order = match policy.mode {
        PathfinderMode::Nearest => greedy(candidates, current, |from, to| from.dist(to)),
        PathfinderMode::NonCrossing => {
            let mut tour = greedy(candidates, current, |from, to| from.dist(to));
            uncross(candidates, current, &mut tour);
            tour
        }
        PathfinderMode::Directional => {
            let [ux, uy] = policy.preferred_dir;
            greedy(candidates, current, |from, to| {
                let (dx, dy) = (
                    to.col as f64 - from.col as f64,
                    to.row as f64 - from.row as f64,
                );
                let len = dx.hypot(dy);
                let cos = if len > 0.0 { (dx * ux + dy * uy) / len } else { 1.0 };
                len * nm_per_px + policy.dir_penalty * (1.0 - cos)
            })
        }
    };
    Ok(order)
}

/// Greedy tour: repeatedly move to the cheapest unvisited candidate, ties to
/// the lowest index.
fn greedy(cands: &[Pixel], start: Pixel, cost: impl Fn(Pixel, Pixel) -> f64) -> Vec<usize> {
    let mut left: Vec<usize> = (0..cands.len()).collect();
    let mut at = start;
    let mut tour = Vec::with_capacity(cands.len());
    while !left.is_empty() {
        let mut best = 0;
        for j in 1..left.len() {
            if cost(at, cands[left[j]]) < cost(at, cands[left[best]]) {
                best = j;
            }
        }
        let next = left.remove(best);
        tour.push(next);
        at = cands[next];
    }
    tour
}

fn point(px: Pixel) -> [i64; 2] {
    [px.col as i64, px.row as i64]
}

fn orient(a: [i64; 2], b: [i64; 2], c: [i64; 2]) -> i64 {
    ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])).signum()
}

/// Segments cross at a single interior point (exact integer predicate).
pub fn properly_intersect(p1: Pixel, p2: Pixel, q1: Pixel, q2: Pixel) -> bool {
    let (a, b, c, d) = (point(p1), point(p2), point(q1), point(q2));
    let (o1, o2) = (orient(a, b, c), orient(a, b, d));
    let (o3, o4) = (orient(c, d, a), orient(c, d, b));
    o1 * o2 < 0 && o3 * o4 < 0
}

/// Total length of the open tour `start → cands[tour[0]] → …`, pixels.
pub fn tour_length(cands: &[Pixel], start: Pixel, tour: &[usize]) -> f64 {
    let mut at = start;
    let mut len = 0.0;
    for &i in tour {
        len += at.dist(cands[i]);
        at = cands[i];
    }
    len
}

/// 2-opt on the open path anchored at `start`: while two segments properly
/// cross, reverse the stretch between them. Each reversal strictly shortens
/// the path, so this terminates.
fn uncross(cands: &[Pixel], start: Pixel, tour: &mut [usize]) {
    let node = |tour: &[usize], i: usize| if i == 0 { start } else { cands[tour[i - 1]] };
    let n = tour.len() + 1; // path nodes including start
    'outer: loop {
        for i in 0..n.saturating_sub(1) {
            for j in i + 2..n - 1 {
                let (a, b) = (node(tour, i), node(tour, i + 1));
                let (c, d) = (node(tour, j), node(tour, j + 1));
                if properly_intersect(a, b, c, d) {
                    // Path nodes i+1..=j are tour entries i..j.
                    tour[i..j].reverse();
                    continue 'outer;
                }
            }
        }
        break;
    }
}
