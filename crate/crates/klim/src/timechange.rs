//! Changes of time and the associated path scaling.
//!
//! A change of time is an increasing `C^2` bijection `phi: [0, t1) ->
//! [t0, +inf)`; the induced scaling transformation acts on a path by
//! `omega -> omega(phi(s)) / sqrt(phi'(s))`. Two families are supported:
//!
//! * exponential, `phi(s) = t0 e^s`, and
//! * power, the solution of `phi' = phi^{2q}, phi(0) = t0`, which in closed
//!   form is `phi(s) = (t0^{1-2q} + (1-2q) s)^{1/(1-2q)}` for `2q != 1` and
//!   degenerates to the exponential family at `2q = 1`.
//!
//! For `2q > 1` the power map blows up at the finite horizon
//! `t1 = t0^{1-2q} / (2q - 1)`; for `2q <= 1` it is global.

use thiserror::Error;

use crate::integrate::{GridLocation, Matrix, PathBundle};

#[derive(Debug, Error)]
pub enum TimeChangeError {
    #[error("t0 must be strictly positive, got {0}")]
    InvalidStart(f64),
    #[error("s = {s} outside the domain [0, {t1}) of phi")]
    OutOfDomain { s: f64, t1: f64 },
    #[error("t = {t} is before the image start t0 = {t0}")]
    BeforeStart { t: f64, t0: f64 },
    #[error("phi(s) = {t} leaves the simulated window [{lo}, {hi}]")]
    RangeExit { t: f64, lo: f64, hi: f64 },
    #[error("gap formula applies to the power family only")]
    NotPower,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TimeChange {
    Exponential { t0: f64 },
    Power { t0: f64, q: f64, t1: f64 },
}

impl TimeChange {
    pub fn exponential(t0: f64) -> Result<Self, TimeChangeError> {
        if !(t0 > 0.0) {
            return Err(TimeChangeError::InvalidStart(t0));
        }
        Ok(TimeChange::Exponential { t0 })
    }

    /// The power family for exponent `q`; `2q = 1` is routed to the
    /// exponential family, where the power closed form is singular.
    pub fn power(t0: f64, q: f64) -> Result<Self, TimeChangeError> {
        if !(t0 > 0.0) {
            return Err(TimeChangeError::InvalidStart(t0));
        }
        if (2.0 * q - 1.0).abs() <= 1e-14 {
            return Ok(TimeChange::Exponential { t0 });
        }
        let t1 = if 2.0 * q > 1.0 {
            t0.powf(1.0 - 2.0 * q) / (2.0 * q - 1.0)
        } else {
            f64::INFINITY
        };
        Ok(TimeChange::Power { t0, q, t1 })
    }

    pub fn t0(&self) -> f64 {
        match self {
            TimeChange::Exponential { t0 } | TimeChange::Power { t0, .. } => *t0,
        }
    }

    /// Right endpoint of the domain of `phi` (finite only for `2q > 1`).
    pub fn t1(&self) -> f64 {
        match self {
            TimeChange::Exponential { .. } => f64::INFINITY,
            TimeChange::Power { t1, .. } => *t1,
        }
    }

    fn check_domain(&self, s: f64) -> Result<(), TimeChangeError> {
        if s < 0.0 || s >= self.t1() || !s.is_finite() {
            return Err(TimeChangeError::OutOfDomain { s, t1: self.t1() });
        }
        Ok(())
    }

    pub fn phi(&self, s: f64) -> Result<f64, TimeChangeError> {
        self.check_domain(s)?;
        Ok(self.phi_unchecked(s))
    }

    pub(crate) fn phi_unchecked(&self, s: f64) -> f64 {
        match self {
            TimeChange::Exponential { t0 } => t0 * s.exp(),
            TimeChange::Power { t0, q, .. } => {
                let p = 1.0 - 2.0 * q;
                (t0.powf(p) + p * s).powf(1.0 / p)
            }
        }
    }

    pub fn phi_prime(&self, s: f64) -> Result<f64, TimeChangeError> {
        self.check_domain(s)?;
        Ok(self.phi_prime_unchecked(s))
    }

    pub(crate) fn phi_prime_unchecked(&self, s: f64) -> f64 {
        match self {
            TimeChange::Exponential { t0 } => t0 * s.exp(),
            TimeChange::Power { q, .. } => self.phi_unchecked(s).powf(2.0 * q),
        }
    }

    /// `phi''(s) / phi'(s)`, the damping rate in the transformed SDE.
    pub(crate) fn log_derivative_of_rate(&self, s: f64) -> f64 {
        match self {
            TimeChange::Exponential { .. } => 1.0,
            TimeChange::Power { q, .. } => 2.0 * q * self.phi_unchecked(s).powf(2.0 * q - 1.0),
        }
    }

    pub fn phi_inverse(&self, t: f64) -> Result<f64, TimeChangeError> {
        let t0 = self.t0();
        if t < t0 * (1.0 - 1e-12) {
            return Err(TimeChangeError::BeforeStart { t, t0 });
        }
        let t = t.max(t0);
        Ok(match self {
            TimeChange::Exponential { t0 } => (t / t0).ln(),
            TimeChange::Power { t0, q, .. } => {
                let p = 1.0 - 2.0 * q;
                (t.powf(p) - t0.powf(p)) / p
            }
        })
    }

    /// Closed form of `phi^{-1}(t/eps) - phi^{-1}(s/eps)` for the power
    /// family: `(t^{1-2q} - s^{1-2q}) / ((1-2q) eps^{1-2q})`. For `2q < 1`
    /// this gap diverges as `eps -> 0`, which is what makes distant
    /// rescaled times decorrelate under an exponentially ergodic
    /// homogenized process.
    pub fn inverse_gap(&self, s: f64, t: f64, eps: f64) -> Result<f64, TimeChangeError> {
        match self {
            TimeChange::Power { q, .. } => {
                let p = 1.0 - 2.0 * q;
                Ok((t.powf(p) - s.powf(p)) / (p * eps.powf(p)))
            }
            TimeChange::Exponential { .. } => Err(TimeChangeError::NotPower),
        }
    }
}

/// Apply the scaling transformation `omega -> omega(phi(s)) /
/// sqrt(phi'(s))` to every component of a bundle, evaluated on `s_nodes`.
///
/// Off-grid values of `phi(s)` are linearly interpolated on the source
/// grid; choosing `s_nodes = phi^{-1}(source nodes)` makes the transform
/// exact. Explosion flags carry over to the first `s`-node at or past the
/// source explosion time.
pub fn apply_scaling(
    bundle: &PathBundle,
    tc: &TimeChange,
    s_nodes: &[f64],
) -> Result<PathBundle, TimeChangeError> {
    let weights: Result<Vec<(f64, f64)>, TimeChangeError> = s_nodes
        .iter()
        .map(|&s| {
            let t = tc.phi(s)?;
            Ok((t, 1.0 / tc.phi_prime_unchecked(s).sqrt()))
        })
        .collect();
    let weights = weights?;
    resample(bundle, &weights, s_nodes)
}

/// Inverse scaling `omega(t) = sqrt(phi'(phi^{-1}(t))) *
/// omega~(phi^{-1}(t))` applied to a bundle living in transformed time.
pub fn inverse_scaling(
    bundle: &PathBundle,
    tc: &TimeChange,
    t_nodes: &[f64],
) -> Result<PathBundle, TimeChangeError> {
    let weights: Result<Vec<(f64, f64)>, TimeChangeError> = t_nodes
        .iter()
        .map(|&t| {
            let s = tc.phi_inverse(t)?;
            Ok((s, tc.phi_prime_unchecked(s).sqrt()))
        })
        .collect();
    let weights = weights?;
    resample(bundle, &weights, t_nodes)
}

/// Shared resampling core: for each output node, read the source paths at
/// a mapped time and multiply by a weight.
fn resample(
    bundle: &PathBundle,
    mapped: &[(f64, f64)],
    out_nodes: &[f64],
) -> Result<PathBundle, TimeChangeError> {
    let (lo, hi) = (bundle.nodes[0], bundle.nodes[bundle.n_nodes() - 1]);
    let locations: Result<Vec<(GridLocation, f64)>, TimeChangeError> = mapped
        .iter()
        .map(|&(t, w)| match bundle.locate(t) {
            GridLocation::OutOfRange => Err(TimeChangeError::RangeExit { t, lo, hi }),
            loc => Ok((loc, w)),
        })
        .collect();
    let locations = locations?;

    let n_paths = bundle.n_paths();
    let n_out = out_nodes.len();
    let mut v = Matrix::zeros(n_paths, n_out);
    let mut x = Matrix::zeros(n_paths, n_out);
    let mut explosion_index = vec![None; n_paths];
    for i in 0..n_paths {
        let (src_v, src_x) = (bundle.v.row(i), bundle.x.row(i));
        for (j, &(loc, w)) in locations.iter().enumerate() {
            let (vv, xx) = match loc {
                GridLocation::Exact(k) => (src_v[k], src_x[k]),
                GridLocation::Between(k, frac) => (
                    src_v[k] + frac * (src_v[k + 1] - src_v[k]),
                    src_x[k] + frac * (src_x[k + 1] - src_x[k]),
                ),
                GridLocation::OutOfRange => unreachable!("checked above"),
            };
            v.data[i * n_out + j] = w * vv;
            x.data[i * n_out + j] = w * xx;
        }
        if let Some(k_src) = bundle.explosion_index[i] {
            let t_explode = bundle.nodes[k_src];
            let hit = locations.iter().position(|&(loc, _)| {
                let t = match loc {
                    GridLocation::Exact(k) => bundle.nodes[k],
                    GridLocation::Between(k, frac) => {
                        bundle.nodes[k] + frac * (bundle.nodes[k + 1] - bundle.nodes[k])
                    }
                    GridLocation::OutOfRange => unreachable!(),
                };
                t >= t_explode
            });
            if let Some(j) = hit {
                explosion_index[i] = Some(j);
                for slot in j..n_out {
                    v.data[i * n_out + slot] = f64::INFINITY;
                    x.data[i * n_out + slot] = f64::INFINITY;
                }
            }
        }
    }
    let exploded = explosion_index.iter().map(|e| e.is_some()).collect();
    Ok(PathBundle { nodes: out_nodes.to_vec(), v, x, exploded, explosion_index })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::{RngPolicy, SimOptions, TimeGrid};
    use crate::model::{DriftSpec, ModelSpec};
    use proptest::prelude::*;

    #[test]
    fn power_closed_form_examples() {
        // q = 0 is a pure shift.
        let shift = TimeChange::power(1.0, 0.0).unwrap();
        assert!((shift.phi(2.0).unwrap() - 3.0).abs() < 1e-14);
        // q = 1/4: phi(s) = (1 + s/2)^2.
        let quarter = TimeChange::power(1.0, 0.25).unwrap();
        assert!((quarter.phi(2.0).unwrap() - 4.0).abs() < 1e-14);
        // q = 1, t0 = 2: finite horizon t1 = 2^{-1}.
        let sup = TimeChange::power(2.0, 1.0).unwrap();
        assert!((sup.t1() - 0.5).abs() < 1e-14);
        assert!(sup.phi(0.49).unwrap().is_finite());
        assert!(matches!(
            sup.phi(0.5),
            Err(TimeChangeError::OutOfDomain { t1, .. }) if (t1 - 0.5).abs() < 1e-14
        ));
    }

    #[test]
    fn half_q_delegates_to_exponential() {
        let tc = TimeChange::power(3.0, 0.5).unwrap();
        assert!(matches!(tc, TimeChange::Exponential { .. }));
        assert!((tc.phi(1.0).unwrap() - 3.0 * 1.0f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn rate_ode_holds_on_dense_grid() {
        // phi' = phi^{2q} everywhere on the domain (2q = 1 for the
        // exponential family).
        for (tc, two_q) in [
            (TimeChange::exponential(2.0).unwrap(), 1.0),
            (TimeChange::power(1.0, 0.25).unwrap(), 0.5),
            (TimeChange::power(0.5, 2.0).unwrap(), 4.0),
        ] {
            let t1 = tc.t1();
            let hi = if t1.is_finite() { t1 * (1.0 - 1e-6) } else { 40.0 };
            for k in 0..=2_000 {
                let s = hi * k as f64 / 2_000.0;
                let lhs = tc.phi_prime(s).unwrap();
                let rhs = tc.phi(s).unwrap().powf(two_q);
                assert!(
                    (lhs - rhs).abs() <= 1e-10 * (1.0 + rhs),
                    "ODE residual at s={s}: {lhs} vs {rhs}"
                );
            }
        }
    }

    #[test]
    fn gap_formula_matches_inverse_difference_and_diverges() {
        let tc = TimeChange::power(1.0, 0.25).unwrap();
        let (s, t) = (1.0, 2.0);
        for eps in [1.0, 0.1, 1e-3] {
            let direct =
                tc.phi_inverse(t / eps).unwrap() - tc.phi_inverse(s / eps).unwrap();
            let closed = tc.inverse_gap(s, t, eps).unwrap();
            assert!((direct - closed).abs() <= 1e-9 * (1.0 + closed.abs()));
        }
        // With 2q < 1 the gap grows without bound as eps -> 0.
        let gaps: Vec<f64> =
            [1e-2, 1e-4, 1e-6, 1e-8].iter().map(|&e| tc.inverse_gap(s, t, e).unwrap()).collect();
        assert!(gaps.windows(2).all(|w| w[1] > 9.0 * w[0]), "gaps {gaps:?}");
    }

    fn constant_bundle(c: f64, nodes: Vec<f64>) -> PathBundle {
        let n = nodes.len();
        PathBundle {
            v: Matrix { rows: 1, cols: n, data: vec![c; n] },
            x: Matrix { rows: 1, cols: n, data: vec![c; n] },
            nodes,
            exploded: vec![false],
            explosion_index: vec![None],
        }
    }

    #[test]
    fn scaling_of_constant_and_sqrt_paths() {
        let tc = TimeChange::exponential(1.0).unwrap();
        let t_nodes: Vec<f64> = (0..=100).map(|k| tc.phi_unchecked(0.03 * k as f64)).collect();
        let s_nodes: Vec<f64> = (0..=100).map(|k| 0.03 * k as f64).collect();

        let constant = constant_bundle(2.0, t_nodes.clone());
        let scaled = apply_scaling(&constant, &tc, &s_nodes).unwrap();
        for (j, &s) in s_nodes.iter().enumerate() {
            let expected = 2.0 * (-s / 2.0).exp();
            assert!((scaled.v.get(0, j) - expected).abs() < 1e-12);
        }

        let mut sqrt_path = constant_bundle(0.0, t_nodes.clone());
        for (k, &t) in t_nodes.iter().enumerate() {
            sqrt_path.v.data[k] = t.sqrt();
        }
        let scaled = apply_scaling(&sqrt_path, &tc, &s_nodes).unwrap();
        for j in 0..s_nodes.len() {
            assert!((scaled.v.get(0, j) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn round_trip_is_exact_on_aligned_grids() {
        let drift = DriftSpec::symmetric(1.0, 1.0).unwrap();
        let spec = ModelSpec::new(drift, 1.0, 1.0, 1.0, 0.0).unwrap();
        let tc = TimeChange::exponential(1.0).unwrap();
        let s_nodes: Vec<f64> = (0..=200).map(|k| 0.01 * k as f64).collect();
        let t_nodes: Vec<f64> = s_nodes.iter().map(|&s| tc.phi_unchecked(s)).collect();
        let grid = TimeGrid::uniform(1.0, *t_nodes.last().unwrap(), 400).unwrap();
        let bundle = crate::integrate::simulate_ske(
            &spec,
            &grid,
            32,
            &RngPolicy::new(4),
            &SimOptions::euler(),
        )
        .unwrap();
        // Restrict to the aligned t-nodes by resampling through phi.
        let scaled = apply_scaling(&bundle, &tc, &s_nodes).unwrap();
        let back = inverse_scaling(&scaled, &tc, &t_nodes).unwrap();
        // Compare against the bundle read off at the same times.
        for i in 0..32 {
            for (j, &t) in t_nodes.iter().enumerate() {
                let direct = match bundle.locate(t) {
                    GridLocation::Exact(k) => bundle.v.get(i, k),
                    GridLocation::Between(k, w) => {
                        bundle.v.get(i, k) * (1.0 - w) + bundle.v.get(i, k + 1) * w
                    }
                    GridLocation::OutOfRange => panic!("t={t} out of range"),
                };
                assert!(
                    (back.v.get(i, j) - direct).abs() <= 1e-12 * (1.0 + direct.abs()),
                    "round trip drift at path {i}, node {j}"
                );
            }
        }
    }

    #[test]
    fn scaling_rejects_times_outside_window() {
        let tc = TimeChange::exponential(1.0).unwrap();
        let bundle = constant_bundle(1.0, vec![1.0, 2.0, 3.0]);
        let err = apply_scaling(&bundle, &tc, &[0.0, 2.0]);
        assert!(matches!(err, Err(TimeChangeError::RangeExit { .. })));
    }

    proptest! {
        #[test]
        fn inverse_composes_to_identity(
            t0 in 0.2f64..5.0,
            q in 0.0f64..1.5,
            s in 0.0f64..20.0,
        ) {
            let tc = TimeChange::power(t0, q).unwrap();
            let t1 = tc.t1();
            let s = if t1.is_finite() { s.min(t1 * 0.999) } else { s };
            let t = tc.phi(s).unwrap();
            let back = tc.phi_inverse(t).unwrap();
            prop_assert!((back - s).abs() <= 1e-9 * (1.0 + s.abs()),
                "s={s}, phi={t}, back={back}");
        }
    }
}
