//! Monte Carlo path generation for the kinetic SDE and for its
//! time-homogenized companions, with explosion handling and reproducible
//! parallel RNG.
//!
//! All simulators advance the velocity with an explicit scheme (plain or
//! tamed Euler, or exact Gaussian transitions for the linear case) and
//! accumulate the position by trapezoidal integration of the velocity,
//! which is exact in distribution up to the velocity discretization since
//! `X` is a plain integral of `V`.

mod export;
mod rng;

pub use rng::{substream_seed, RngPolicy};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{ModelSpec, RegimeTag};
use crate::model::DriftSpec;
use crate::timechange::TimeChange;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid starts at {grid_start} but the model starts at t0={t0}")]
    GridMismatch { grid_start: f64, t0: f64 },
    #[error("all {n_paths} paths exploded (fraction {fraction})")]
    AllExploded { n_paths: usize, fraction: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("initial-value list has length {got}, expected {expected}")]
    InitialValues { got: usize, expected: usize },
    #[error(transparent)]
    TimeChange(#[from] crate::timechange::TimeChangeError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid path dump: {0}")]
    BadDump(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridSpacing {
    Uniform,
    Logarithmic,
}

/// A strictly increasing node sequence `t_start = node[0] < ... <
/// node[n_steps] = t_end`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    pub t_start: f64,
    pub t_end: f64,
    pub n_steps: usize,
    pub spacing: GridSpacing,
}

impl TimeGrid {
    pub fn new(
        t_start: f64,
        t_end: f64,
        n_steps: usize,
        spacing: GridSpacing,
    ) -> Result<Self, SimError> {
        if !t_start.is_finite() || !t_end.is_finite() || t_end <= t_start {
            return Err(SimError::InvalidGrid(format!(
                "need t_start < t_end, got [{t_start}, {t_end}]"
            )));
        }
        if n_steps == 0 {
            return Err(SimError::InvalidGrid("n_steps must be positive".into()));
        }
        match spacing {
            GridSpacing::Uniform if t_start < 0.0 => {
                return Err(SimError::InvalidGrid("t_start must be >= 0".into()));
            }
            GridSpacing::Logarithmic if t_start <= 0.0 => {
                return Err(SimError::InvalidGrid(
                    "logarithmic spacing needs t_start > 0".into(),
                ));
            }
            _ => {}
        }
        Ok(TimeGrid { t_start, t_end, n_steps, spacing })
    }

    pub fn uniform(t_start: f64, t_end: f64, n_steps: usize) -> Result<Self, SimError> {
        TimeGrid::new(t_start, t_end, n_steps, GridSpacing::Uniform)
    }

    pub fn logarithmic(t_start: f64, t_end: f64, n_steps: usize) -> Result<Self, SimError> {
        TimeGrid::new(t_start, t_end, n_steps, GridSpacing::Logarithmic)
    }

    pub fn nodes(&self) -> Vec<f64> {
        let n = self.n_steps;
        let mut out = Vec::with_capacity(n + 1);
        match self.spacing {
            GridSpacing::Uniform => {
                let dt = (self.t_end - self.t_start) / n as f64;
                for k in 0..=n {
                    out.push(self.t_start + dt * k as f64);
                }
            }
            GridSpacing::Logarithmic => {
                let ratio = (self.t_end / self.t_start).ln() / n as f64;
                for k in 0..=n {
                    out.push(self.t_start * (ratio * k as f64).exp());
                }
            }
        }
        out[n] = self.t_end;
        out
    }
}

/// Dense row-major storage for an ensemble of paths.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// Column `j` restricted to the given rows.
    pub fn column_of(&self, j: usize, rows: &[usize]) -> Vec<f64> {
        rows.iter().map(|&i| self.get(i, j)).collect()
    }
}

/// An ensemble of simulated `(V, X)` trajectories on a common node grid.
///
/// Exploded paths carry the first node index at or after the threshold
/// crossing; their entries from that index on are `+/-inf` and must be
/// excluded from statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct PathBundle {
    pub nodes: Vec<f64>,
    pub v: Matrix,
    pub x: Matrix,
    pub exploded: Vec<bool>,
    pub explosion_index: Vec<Option<usize>>,
}

/// Where a query time lands on a bundle grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GridLocation {
    Exact(usize),
    /// Between nodes `k` and `k+1`, with interpolation weight `w` on `k+1`.
    Between(usize, f64),
    OutOfRange,
}

impl PathBundle {
    pub fn n_paths(&self) -> usize {
        self.v.rows
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn exploded_count(&self) -> usize {
        self.exploded.iter().filter(|&&e| e).count()
    }

    pub fn exploded_fraction(&self) -> f64 {
        self.exploded_count() as f64 / self.n_paths() as f64
    }

    /// Indices of paths that never exploded.
    pub fn valid_paths(&self) -> Vec<usize> {
        (0..self.n_paths()).filter(|&i| !self.exploded[i]).collect()
    }

    /// Velocity column at node `k` over non-exploded paths.
    pub fn velocities_at(&self, k: usize) -> Vec<f64> {
        (0..self.n_paths())
            .filter(|&i| !self.exploded[i])
            .map(|i| self.v.get(i, k))
            .collect()
    }

    /// Position column at node `k` over non-exploded paths.
    pub fn positions_at(&self, k: usize) -> Vec<f64> {
        (0..self.n_paths())
            .filter(|&i| !self.exploded[i])
            .map(|i| self.x.get(i, k))
            .collect()
    }

    /// Locate `t` on the grid; a node counts as an exact hit within a
    /// relative tolerance of 1e-9.
    pub fn locate(&self, t: f64) -> GridLocation {
        let nodes = &self.nodes;
        let n = nodes.len();
        let tol = 1e-9 * (1.0 + t.abs());
        if t < nodes[0] - tol || t > nodes[n - 1] + tol {
            return GridLocation::OutOfRange;
        }
        let k = nodes.partition_point(|&u| u < t);
        // k is the first node >= t (up to fp noise).
        if k < n && (nodes[k] - t).abs() <= tol {
            return GridLocation::Exact(k);
        }
        if k > 0 && (nodes[k - 1] - t).abs() <= tol {
            return GridLocation::Exact(k - 1);
        }
        let lo = k - 1;
        let w = (t - nodes[lo]) / (nodes[lo + 1] - nodes[lo]);
        GridLocation::Between(lo, w)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimScheme {
    Euler,
    /// Explicit Euler with the drift increment `dt*b` replaced by
    /// `dt*b / (1 + dt*|b|)`, which keeps superlinear drifts stable.
    TamedEuler,
}

/// Per-run simulation options.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimOptions {
    pub scheme: SimScheme,
    /// A path is marked exploded once `|V|` reaches this value.
    pub explosion_threshold: f64,
    /// Upper bound on the internal scheme step. Node intervals wider than
    /// this are subdivided; recorded values still live on the grid nodes.
    pub max_scheme_step: Option<f64>,
}

impl SimOptions {
    pub fn euler() -> Self {
        SimOptions {
            scheme: SimScheme::Euler,
            explosion_threshold: DEFAULT_EXPLOSION_THRESHOLD,
            max_scheme_step: None,
        }
    }

    pub fn tamed() -> Self {
        SimOptions { scheme: SimScheme::TamedEuler, ..SimOptions::euler() }
    }

    /// Scheme default per drift: tamed for superlinear drifts, plain Euler
    /// otherwise.
    pub fn for_drift(drift: &DriftSpec) -> Self {
        if drift.gamma() > 1.0 {
            SimOptions::tamed()
        } else {
            SimOptions::euler()
        }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.explosion_threshold = threshold;
        self
    }

    pub fn with_max_step(mut self, h: f64) -> Self {
        self.max_scheme_step = Some(h);
        self
    }
}

pub const DEFAULT_EXPLOSION_THRESHOLD: f64 = 1e6;

/// Simulate the kinetic pair `(V, X)`:
/// `dV = dB - t^{-beta} F(V) dt`, `dX = V dt` from `(t0, v0, x0)`.
///
/// The grid must start at the model's `t0`. Fails if every path explodes.
pub fn simulate_ske(
    spec: &ModelSpec,
    grid: &TimeGrid,
    n_paths: usize,
    rng: &RngPolicy,
    opts: &SimOptions,
) -> Result<PathBundle, SimError> {
    let rel = 1e-12 * (1.0 + spec.t0.abs());
    if (grid.t_start - spec.t0).abs() > rel {
        return Err(SimError::GridMismatch { grid_start: grid.t_start, t0: spec.t0 });
    }
    let (v0, x0) = (spec.v0, spec.x0);
    let spec = spec.clone();
    drive(
        grid.nodes(),
        n_paths,
        rng,
        opts,
        move |_| (v0, x0),
        move |t, v| spec.velocity_drift(t, v),
    )
}

/// Simulate the exponential-time homogenized velocity of a critical model:
/// `dH = dW - H/2 ds - F(H) ds` from `H_0 = h0` on an `s`-grid.
pub fn simulate_exponential_homogenized(
    spec: &ModelSpec,
    s_grid: &TimeGrid,
    n_paths: usize,
    rng: &RngPolicy,
    h0: f64,
    opts: &SimOptions,
) -> Result<PathBundle, SimError> {
    let inits = vec![h0; n_paths];
    simulate_exponential_homogenized_from(spec, s_grid, rng, &inits, opts)
}

/// Same as [`simulate_exponential_homogenized`] with one initial value per
/// path, for ensembles started from a sampled law.
pub fn simulate_exponential_homogenized_from(
    spec: &ModelSpec,
    s_grid: &TimeGrid,
    rng: &RngPolicy,
    h0s: &[f64],
    opts: &SimOptions,
) -> Result<PathBundle, SimError> {
    if spec.classify_regime().tag != RegimeTag::Critical {
        return Err(SimError::Precondition(format!(
            "exponential homogenization requires the critical regime (q = 1/2), got q = {}",
            spec.q()
        )));
    }
    let drift = spec.drift.clone();
    let h0s = h0s.to_vec();
    drive(
        s_grid.nodes(),
        h0s.len(),
        rng,
        opts,
        move |i| (h0s[i], 0.0),
        move |_s, h| -0.5 * h - drift.eval(h),
    )
}

/// Simulate the ergodic drag-only diffusion `dH = dW - F(H) ds` for a
/// symmetric dissipative drift `F = rho sgn(v)|v|^gamma`, `gamma >= 1`.
pub fn simulate_power_homogenized(
    drift: &DriftSpec,
    s_grid: &TimeGrid,
    n_paths: usize,
    rng: &RngPolicy,
    h0: f64,
    opts: &SimOptions,
) -> Result<PathBundle, SimError> {
    let inits = vec![h0; n_paths];
    simulate_power_homogenized_from(drift, s_grid, rng, &inits, opts)
}

pub fn simulate_power_homogenized_from(
    drift: &DriftSpec,
    s_grid: &TimeGrid,
    rng: &RngPolicy,
    h0s: &[f64],
    opts: &SimOptions,
) -> Result<PathBundle, SimError> {
    if drift.symmetric_rho().is_none() || drift.gamma() < 1.0 {
        return Err(SimError::Precondition(
            "drag-only homogenization requires F = rho sgn(v)|v|^gamma with rho > 0, gamma >= 1"
                .into(),
        ));
    }
    let drift = drift.clone();
    let h0s = h0s.to_vec();
    drive(
        s_grid.nodes(),
        h0s.len(),
        rng,
        opts,
        move |i| (h0s[i], 0.0),
        move |_s, h| -drift.eval(h),
    )
}

/// Exact Gaussian transition sampling of the linear SDE
/// `dH = sigma dW - theta H ds`. Used as an oracle for the Euler schemes.
pub fn simulate_ou_exact(
    theta: f64,
    sigma: f64,
    grid: &TimeGrid,
    n_paths: usize,
    rng: &RngPolicy,
    h0: f64,
) -> Result<PathBundle, SimError> {
    if !(theta > 0.0) || !(sigma > 0.0) {
        return Err(SimError::Precondition(format!(
            "OU parameters must be positive, got theta={theta}, sigma={sigma}"
        )));
    }
    let nodes = grid.nodes();
    let n_nodes = nodes.len();
    let mut v = Matrix::zeros(n_paths, n_nodes);
    let mut x = Matrix::zeros(n_paths, n_nodes);
    v.data
        .par_chunks_mut(n_nodes)
        .zip(x.data.par_chunks_mut(n_nodes))
        .enumerate()
        .for_each(|(i, (vrow, xrow))| {
            let mut gen = rng.substream(i as u64);
            let mut h = h0;
            let mut pos = 0.0;
            vrow[0] = h;
            xrow[0] = pos;
            for k in 0..n_nodes - 1 {
                let dt = nodes[k + 1] - nodes[k];
                let decay = (-theta * dt).exp();
                let sd = sigma * ((1.0 - decay * decay) / (2.0 * theta)).sqrt();
                let z: f64 = gen.sample(StandardNormal);
                let h_new = decay * h + sd * z;
                pos += 0.5 * dt * (h + h_new);
                h = h_new;
                vrow[k + 1] = h;
                xrow[k + 1] = pos;
            }
        });
    Ok(PathBundle {
        nodes,
        v,
        x,
        exploded: vec![false; n_paths],
        explosion_index: vec![None; n_paths],
    })
}

/// Simulate the change-of-time transformed velocity on an `s`-grid:
///
/// ```text
/// dV = dW - sqrt(phi'(s)) phi(s)^{-beta} F(sqrt(phi'(s)) V) ds
///         - (phi''(s)/phi'(s)) V/2 ds,
/// V_0 = v0 / sqrt(phi'(0)).
/// ```
///
/// This is the image of the kinetic SDE under the path scaling
/// `omega -> omega(phi(s)) / sqrt(phi'(s))`.
pub fn simulate_time_changed(
    spec: &ModelSpec,
    tc: &TimeChange,
    s_grid: &TimeGrid,
    n_paths: usize,
    rng: &RngPolicy,
    opts: &SimOptions,
) -> Result<PathBundle, SimError> {
    // Validate the whole s-range against the domain of phi.
    tc.phi(s_grid.t_start)?;
    tc.phi(s_grid.t_end)?;
    let h0 = spec.v0 / tc.phi_prime(0.0)?.sqrt();
    let spec = spec.clone();
    let tc = tc.clone();
    drive(
        s_grid.nodes(),
        n_paths,
        rng,
        opts,
        move |_| (h0, 0.0),
        move |s, v| {
            let phi = tc.phi_unchecked(s);
            let rate = tc.phi_prime_unchecked(s);
            let sq = rate.sqrt();
            -sq * phi.powf(-spec.beta) * spec.drift.eval(sq * v)
                - 0.5 * tc.log_derivative_of_rate(s) * v
        },
    )
}

/// Core driver: advances one velocity path per RNG substream, recording
/// values at the grid nodes and integrating the position with the
/// trapezoidal rule on the scheme steps.
fn drive(
    nodes: Vec<f64>,
    n_paths: usize,
    rng: &RngPolicy,
    opts: &SimOptions,
    init: impl Fn(usize) -> (f64, f64) + Sync,
    drift: impl Fn(f64, f64) -> f64 + Sync,
) -> Result<PathBundle, SimError> {
    if n_paths == 0 {
        return Err(SimError::Precondition("n_paths must be positive".into()));
    }
    let n_nodes = nodes.len();
    let threshold = opts.explosion_threshold;
    let mut v = Matrix::zeros(n_paths, n_nodes);
    let mut x = Matrix::zeros(n_paths, n_nodes);
    let mut status = vec![None::<usize>; n_paths];

    v.data
        .par_chunks_mut(n_nodes)
        .zip(x.data.par_chunks_mut(n_nodes))
        .zip(status.par_iter_mut())
        .enumerate()
        .for_each(|(i, ((vrow, xrow), status))| {
            let mut gen = rng.substream(i as u64);
            let (mut vel, mut pos) = init(i);
            vrow[0] = vel;
            xrow[0] = pos;
            'nodes: for k in 0..n_nodes - 1 {
                let (ta, tb) = (nodes[k], nodes[k + 1]);
                let width = tb - ta;
                let m = match opts.max_scheme_step {
                    Some(h) => ((width / h).ceil() as usize).max(1),
                    None => 1,
                };
                let dt = width / m as f64;
                let sqdt = dt.sqrt();
                for j in 0..m {
                    let t = ta + dt * j as f64;
                    let b = drift(t, vel);
                    let incr = match opts.scheme {
                        SimScheme::Euler => b * dt,
                        SimScheme::TamedEuler => b * dt / (1.0 + dt * b.abs()),
                    };
                    let z: f64 = gen.sample(StandardNormal);
                    let vel_new = vel + incr + sqdt * z;
                    pos += 0.5 * dt * (vel + vel_new);
                    vel = vel_new;
                    if !vel.is_finite() || vel.abs() >= threshold {
                        *status = Some(k + 1);
                        let inf = if vel.is_nan() || vel >= 0.0 {
                            f64::INFINITY
                        } else {
                            f64::NEG_INFINITY
                        };
                        for slot in k + 1..n_nodes {
                            vrow[slot] = inf;
                            xrow[slot] = inf;
                        }
                        break 'nodes;
                    }
                }
                vrow[k + 1] = vel;
                xrow[k + 1] = pos;
            }
        });

    let exploded: Vec<bool> = status.iter().map(|s| s.is_some()).collect();
    let n_exploded = exploded.iter().filter(|&&e| e).count();
    if n_exploded == n_paths {
        return Err(SimError::AllExploded { n_paths, fraction: 1.0 });
    }
    Ok(PathBundle { nodes, v, x, exploded, explosion_index: status })
}
