//! Stationary laws of the homogenized velocity equations, with
//! quadrature-backed normalization and CDFs plus exact or rejection
//! samplers.
//!
//! Two families arise:
//!
//! * `LambdaF`: density proportional to
//!   `exp(-x^2/2 - (2/(gamma+1)) sgn(x) F(sgn(x)) |x|^{gamma+1})`, the
//!   stationary law of `dH = dW - H/2 ds - F(H) ds`;
//! * `PiF`: density proportional to `exp(-(2 rho/(gamma+1)) |x|^{gamma+1})`
//!   (a generalized Gaussian), the stationary law of `dH = dW - F(H) ds`
//!   for `F = rho sgn(v)|v|^gamma`.
//!
//! Both are treated as probability laws after normalization.

use std::sync::{Arc, OnceLock};

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::integrate::RngPolicy;
use crate::model::DriftSpec;

#[derive(Debug, Error)]
pub enum InvariantError {
    #[error("quadrature failed: {0}")]
    Quadrature(String),
    #[error("density is not integrable over the truncated support")]
    NonIntegrable,
    #[error("sampler unsupported: {0}")]
    UnsupportedSampler(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

/// Where the log-density is truncated relative to its peak; `exp(-60)`
/// is far below double-precision resolution of the CDF tolerances.
const TAIL_CUTOFF: f64 = 60.0;
/// Panels of the cached CDF table.
const CDF_PANELS: usize = 16_384;

#[derive(Clone)]
enum SamplerKind {
    /// Exact draw via the Gamma transform of a generalized Gaussian.
    GeneralizedGaussian { rho: f64, gamma: f64 },
    /// Rejection from the standard normal envelope; valid because the
    /// acceptance factor is <= 1 exactly when the drift is dissipative.
    NormalRejection { coef_plus: f64, coef_minus: f64, gamma: f64 },
    Unsupported(String),
}

/// An unnormalized 1-D log-density on the real line with lazily computed
/// normalization constant, CDF table and sampler.
#[derive(Clone)]
pub struct DensitySpec {
    log_unnorm: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    sampler: SamplerKind,
    label: String,
    tables: Arc<OnceLock<Result<Tables, String>>>,
}

struct Tables {
    z: f64,
    ln_z: f64,
    lo: f64,
    hi: f64,
    xs: Vec<f64>,
    cdf: Vec<f64>,
}

impl std::fmt::Debug for DensitySpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DensitySpec").field("label", &self.label).finish()
    }
}

/// Stationary law of the balanced homogenized equation for a homogeneous
/// drift. Sampling requires a dissipative drift.
pub fn lambda_f(drift: &DriftSpec) -> Result<DensitySpec, InvariantError> {
    let (f_plus, f_minus, gamma) = drift.as_homogeneous()?;
    // sgn(x) F(sgn(x)) reduces to f_plus on the right and -f_minus on the
    // left; both are >= 0 exactly for dissipative drifts.
    let (coef_plus, coef_minus) = (f_plus, -f_minus);
    let scale = 2.0 / (gamma + 1.0);
    let log_unnorm = move |x: f64| {
        let coef = if x > 0.0 { coef_plus } else { coef_minus };
        -0.5 * x * x - scale * coef * x.abs().powf(gamma + 1.0)
    };
    let sampler = if drift.dissipative() {
        SamplerKind::NormalRejection { coef_plus, coef_minus, gamma }
    } else {
        SamplerKind::Unsupported(
            "rejection envelope requires a dissipative drift".into(),
        )
    };
    Ok(DensitySpec {
        log_unnorm: Arc::new(log_unnorm),
        sampler,
        label: format!("lambda_f(f+={f_plus}, f-={f_minus}, gamma={gamma})"),
        tables: Arc::new(OnceLock::new()),
    })
}

/// Stationary law of the drag-only equation: generalized Gaussian with
/// exponent `gamma + 1` and rate `2 rho / (gamma + 1)`.
pub fn pi_f(rho: f64, gamma: f64) -> Result<DensitySpec, InvariantError> {
    if !(rho > 0.0) {
        return Err(InvariantError::InvalidParam(format!("rho must be > 0, got {rho}")));
    }
    if gamma < 1.0 {
        return Err(InvariantError::InvalidParam(format!("gamma must be >= 1, got {gamma}")));
    }
    let rate = 2.0 * rho / (gamma + 1.0);
    let log_unnorm = move |x: f64| -rate * x.abs().powf(gamma + 1.0);
    Ok(DensitySpec {
        log_unnorm: Arc::new(log_unnorm),
        sampler: SamplerKind::GeneralizedGaussian { rho, gamma },
        label: format!("pi_f(rho={rho}, gamma={gamma})"),
        tables: Arc::new(OnceLock::new()),
    })
}

impl DensitySpec {
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn log_unnormalized(&self, x: f64) -> f64 {
        (self.log_unnorm)(x)
    }

    fn tables(&self) -> Result<&Tables, InvariantError> {
        self.tables
            .get_or_init(|| build_tables(self.log_unnorm.as_ref()))
            .as_ref()
            .map_err(|e| InvariantError::Quadrature(e.clone()))
    }

    /// Normalization constant `Z = \int exp(log_unnorm)`, adaptive
    /// quadrature with relative error <= 1e-10.
    pub fn normalize(&self) -> Result<f64, InvariantError> {
        Ok(self.tables()?.z)
    }

    /// Truncated support `[lo, hi]` where the density exceeds
    /// `exp(-60)` times its peak.
    pub fn support(&self) -> Result<(f64, f64), InvariantError> {
        let t = self.tables()?;
        Ok((t.lo, t.hi))
    }

    pub fn density(&self, x: f64) -> Result<f64, InvariantError> {
        let t = self.tables()?;
        Ok(((self.log_unnorm)(x) - t.ln_z).exp())
    }

    /// CDF with absolute tolerance 1e-8; exact 0/1 outside the truncated
    /// support.
    pub fn cdf(&self, x: f64) -> Result<f64, InvariantError> {
        let t = self.tables()?;
        if x <= t.lo {
            return Ok(0.0);
        }
        if x >= t.hi {
            return Ok(1.0);
        }
        let k = match t.xs.binary_search_by(|u| u.partial_cmp(&x).unwrap()) {
            Ok(k) => return Ok(t.cdf[k]),
            Err(k) => k - 1,
        };
        // Local Simpson correction from the table node to x.
        let f = |u: f64| ((self.log_unnorm)(u) - t.ln_z).exp();
        let (a, b) = (t.xs[k], x);
        let seg = (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b));
        Ok((t.cdf[k] + seg).clamp(0.0, 1.0))
    }

    /// Inverse CDF by monotone bisection to 1e-10.
    pub fn quantile(&self, p: f64) -> Result<f64, InvariantError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(InvariantError::InvalidParam(format!("p={p} outside [0,1]")));
        }
        let t = self.tables()?;
        let (mut lo, mut hi) = (t.lo, t.hi);
        while hi - lo > 1e-10 * (1.0 + lo.abs().max(hi.abs())) {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid)? < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Raw moment `E[X^k]` by quadrature on the truncated support.
    pub fn moment(&self, k: u32) -> Result<f64, InvariantError> {
        let t = self.tables()?;
        let ln_z = t.ln_z;
        let f = |x: f64| x.powi(k as i32) * ((self.log_unnorm)(x) - ln_z).exp();
        adaptive_simpson(&f, t.lo, t.hi, 1e-10).map_err(InvariantError::Quadrature)
    }

    pub fn variance(&self) -> Result<f64, InvariantError> {
        let m1 = self.moment(1)?;
        Ok(self.moment(2)? - m1 * m1)
    }

    /// Draw `n` samples; sample `i` is a pure function of
    /// `(rng.master_seed, i)`, so the result is independent of thread
    /// count.
    pub fn sample(&self, n: usize, rng: &RngPolicy) -> Result<Vec<f64>, InvariantError> {
        match &self.sampler {
            SamplerKind::Unsupported(reason) => {
                Err(InvariantError::UnsupportedSampler(reason.clone()))
            }
            SamplerKind::GeneralizedGaussian { rho, gamma } => {
                let p = gamma + 1.0;
                let shape = 1.0 / p;
                let dist = Gamma::new(shape, 1.0)
                    .map_err(|e| InvariantError::InvalidParam(e.to_string()))?;
                let scale = p / (2.0 * rho);
                Ok((0..n)
                    .into_par_iter()
                    .map(|i| {
                        let mut gen = rng.substream(i as u64);
                        let g: f64 = dist.sample(&mut gen);
                        let mag = (g * scale).powf(1.0 / p);
                        if gen.random::<bool>() {
                            mag
                        } else {
                            -mag
                        }
                    })
                    .collect())
            }
            SamplerKind::NormalRejection { coef_plus, coef_minus, gamma } => {
                let scale = 2.0 / (gamma + 1.0);
                let (cp, cm, gamma) = (*coef_plus, *coef_minus, *gamma);
                Ok((0..n)
                    .into_par_iter()
                    .map(|i| {
                        let mut gen = rng.substream(i as u64);
                        loop {
                            let z: f64 = gen.sample(StandardNormal);
                            let u: f64 = gen.random();
                            let coef = if z > 0.0 { cp } else { cm };
                            let log_accept = -scale * coef * z.abs().powf(gamma + 1.0);
                            if u.ln() <= log_accept {
                                return z;
                            }
                        }
                    })
                    .collect())
            }
        }
    }
}

/// Scale function of the balanced homogenized diffusion,
/// `p(x) = \int_0^x exp(y^2/2 + (2/(gamma+1)) sgn(y) F(sgn(y)) |y|^{gamma+1}) dy`.
///
/// The integrand overflows quickly, so the quadrature runs in log space;
/// the returned value may still be `inf` for large `|x|`, in which case
/// [`scale_function_ln`] carries the magnitude.
pub fn scale_function(drift: &DriftSpec, x: f64) -> Result<f64, InvariantError> {
    if x == 0.0 {
        return Ok(0.0);
    }
    let ln = scale_function_ln(drift, x)?;
    Ok(x.signum() * ln.exp())
}

/// `ln |p(x)|` computed by log-sum-exp over Simpson panels.
pub fn scale_function_ln(drift: &DriftSpec, x: f64) -> Result<f64, InvariantError> {
    let (f_plus, f_minus, gamma) = drift.as_homogeneous()?;
    if x == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let scale = 2.0 / (gamma + 1.0);
    let sign = x.signum();
    let log_f = |y: f64| {
        // y in (0, |x|]; the path sits on the sign(x) side.
        let v = sign * y;
        let coef = if v > 0.0 { f_plus } else { -f_minus };
        0.5 * y * y + scale * coef * y.abs().powf(gamma + 1.0)
    };
    let r = x.abs();
    let value = log_simpson(&log_f, 0.0, r, 4096)?;
    let refined = log_simpson(&log_f, 0.0, r, 8192)?;
    if (value - refined).abs() > 1e-9 * (1.0 + refined.abs()) {
        return Err(InvariantError::Quadrature(format!(
            "log-space Simpson did not converge at x={x}"
        )));
    }
    Ok(refined)
}

/// Composite Simpson of `exp(log_f)` over `[a, b]` returned in log space.
fn log_simpson(
    log_f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    panels: usize,
) -> Result<f64, InvariantError> {
    let h = (b - a) / panels as f64;
    let mut terms = Vec::with_capacity(3 * panels);
    for k in 0..panels {
        let x0 = a + h * k as f64;
        let ln_h6 = (h / 6.0).ln();
        terms.push(ln_h6 + log_f(x0));
        terms.push(ln_h6 + 4f64.ln() + log_f(x0 + 0.5 * h));
        terms.push(ln_h6 + log_f(x0 + h));
    }
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(InvariantError::Quadrature("integrand log is not finite".into()));
    }
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    Ok(max + sum.ln())
}

fn build_tables(log_unnorm: &(dyn Fn(f64) -> f64 + Send + Sync)) -> Result<Tables, String> {
    // Locate the peak by coarse scan; all supported families peak within
    // a few units of the origin.
    let mut peak_x = 0.0;
    let mut peak = log_unnorm(0.0);
    for k in -4096..=4096 {
        let x = k as f64 * (64.0 / 4096.0);
        let v = log_unnorm(x);
        if v > peak {
            peak = v;
            peak_x = x;
        }
    }
    if !peak.is_finite() {
        return Err("log-density has no finite peak".to_string());
    }
    let lo = tail_boundary(log_unnorm, peak, peak_x, -1.0)?;
    let hi = tail_boundary(log_unnorm, peak, peak_x, 1.0)?;

    let shifted = |x: f64| (log_unnorm(x) - peak).exp();
    let integral =
        adaptive_simpson(&shifted, lo, hi, 1e-11).map_err(|e| format!("normalization: {e}"))?;
    if !(integral > 0.0) || !integral.is_finite() {
        return Err("normalization integral is degenerate".to_string());
    }
    let ln_z = peak + integral.ln();
    let z = ln_z.exp();

    // Cumulative CDF table: per-panel Simpson with a midpoint evaluation.
    let n = CDF_PANELS;
    let h = (hi - lo) / n as f64;
    let mut xs = Vec::with_capacity(n + 1);
    let mut cdf = Vec::with_capacity(n + 1);
    let dens = |x: f64| (log_unnorm(x) - ln_z).exp();
    let mut acc = 0.0;
    let mut prev = dens(lo);
    xs.push(lo);
    cdf.push(0.0);
    for k in 0..n {
        let x1 = lo + h * (k + 1) as f64;
        let f1 = dens(x1);
        acc += h / 6.0 * (prev + 4.0 * dens(x1 - 0.5 * h) + f1);
        xs.push(x1);
        cdf.push(acc);
        prev = f1;
    }
    let total = cdf[n];
    if !(total > 0.0) {
        return Err("CDF table is degenerate".to_string());
    }
    // The truncated mass differs from 1 by O(exp(-60)); renormalize the
    // table so the CDF hits exactly 1 at the right edge.
    for c in cdf.iter_mut() {
        *c = (*c / total).clamp(0.0, 1.0);
    }
    Ok(Tables { z, ln_z, lo, hi, xs, cdf })
}

/// Walk outward from the peak until the log-density drops `TAIL_CUTOFF`
/// below the peak, then sharpen by bisection.
fn tail_boundary(
    log_unnorm: &(dyn Fn(f64) -> f64 + Send + Sync),
    peak: f64,
    peak_x: f64,
    direction: f64,
) -> Result<f64, String> {
    let target = peak - TAIL_CUTOFF;
    let mut step = 1.0;
    let mut inner = peak_x;
    for _ in 0..200 {
        let candidate = inner + direction * step;
        if log_unnorm(candidate) <= target {
            let (mut a, mut b) = (inner, candidate);
            for _ in 0..80 {
                let mid = 0.5 * (a + b);
                if log_unnorm(mid) <= target {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            return Ok(b);
        }
        inner = candidate;
        step *= 1.5;
    }
    Err("density tail does not decay; not integrable?".to_string())
}

/// Adaptive Simpson quadrature with a relative-error target.
pub fn adaptive_simpson(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    rel_tol: f64,
) -> Result<f64, String> {
    fn simpson(f: &impl Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), fm)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: usize,
    ) -> Result<f64, String> {
        let (left, flm) = simpson(f, a, fa, m, fm);
        let (right, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * tol || (b - a) < 1e-14 * (1.0 + a.abs()) {
            return Ok(left + right + delta / 15.0);
        }
        if depth == 0 {
            return Err(format!("adaptive Simpson did not converge on [{a}, {b}]"));
        }
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        Ok(recurse(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)?
            + recurse(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)?)
    }

    let (fa, fb) = (f(a), f(b));
    let (whole, fm) = simpson(f, a, fa, b, fb);
    let tol = rel_tol * whole.abs().max(1e-300);
    recurse(f, a, fa, b, fb, 0.5 * (a + b), fm, whole, tol, 60)
}
