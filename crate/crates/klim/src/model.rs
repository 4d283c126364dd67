//! Problem definition: drift families, model parameters, regime
//! classification and explosion-regime verdicts.
//!
//! The model is the kinetic pair `(V, X)` where the velocity solves
//! `dV_t = dB_t - t^{-beta} F(V_t) dt` from `(t0, v0)` and the position is
//! `X_t = x0 + \int_{t0}^t V_s ds`. Drifts `F` are either sign-homogeneous,
//! `F(v) = F(sgn v) |v|^gamma`, or one of a small catalog of bounded drifts
//! dominated by `K |v|^gamma`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tie band applied when classifying the regime exponent `q` against 1/2.
pub const REGIME_TOL: f64 = 1e-12;

/// Grid used to spot-check the `|F(v)| <= K |v|^gamma` bound and the
/// dissipativity flag at construction time: log-spaced over
/// `[1e-6, 1e6]`, both signs.
fn check_grid() -> impl Iterator<Item = f64> {
    (0..=60)
        .map(|k| 10f64.powf(-6.0 + 12.0 * k as f64 / 60.0))
        .flat_map(|v| [v, -v])
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("field `{0}` must be strictly positive, got {1}")]
    NonPositive(&'static str, f64),
    #[error("gamma must be finite and >= 0, got {0}")]
    InvalidGamma(f64),
    #[error("unknown catalog drift `{0}`")]
    UnknownCatalog(String),
    #[error("drift bound violated at v={v}: |F(v)|={fv} > K|v|^gamma={bound}")]
    BoundViolated { v: f64, fv: f64, bound: f64 },
    #[error("operation requires a homogeneous drift")]
    NotHomogeneous,
    #[error("invalid model document: {0}")]
    Document(String),
}

/// Built-in bounded drifts. Each entry declares its dominating exponent,
/// bound constant and dissipativity up front.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CatalogDrift {
    /// `v -> v / (1 + v^2)`, bounded by 1 (gamma = 0), dissipative.
    Rational,
}

impl CatalogDrift {
    pub fn from_id(id: &str) -> Result<Self, ModelError> {
        match id {
            "rational" => Ok(CatalogDrift::Rational),
            other => Err(ModelError::UnknownCatalog(other.to_string())),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            CatalogDrift::Rational => "rational",
        }
    }

    fn eval(&self, v: f64) -> f64 {
        match self {
            CatalogDrift::Rational => v / (1.0 + v * v),
        }
    }

    fn gamma(&self) -> f64 {
        match self {
            CatalogDrift::Rational => 0.0,
        }
    }

    fn bound_k(&self) -> f64 {
        match self {
            CatalogDrift::Rational => 1.0,
        }
    }

    fn dissipative(&self) -> bool {
        match self {
            CatalogDrift::Rational => true,
        }
    }
}

/// A drag-force specification, either sign-homogeneous of degree `gamma`
/// (determined by the pair `(F(1), F(-1))`) or a named bounded drift.
#[derive(Clone, Debug, PartialEq)]
pub enum DriftSpec {
    Homogeneous {
        /// `F(1)`.
        f_plus: f64,
        /// `F(-1)`.
        f_minus: f64,
        /// Homogeneity exponent, `>= 0`.
        gamma: f64,
        /// Constant with `|F(v)| <= bound_k |v|^gamma`.
        bound_k: f64,
    },
    Catalog(CatalogDrift),
}

impl DriftSpec {
    /// Homogeneous drift `F(v) = F(sgn v) |v|^gamma` with `sgn(0) = 0`.
    /// The bound constant is `max(|F(1)|, |F(-1)|)` (1 for the zero drift).
    pub fn homogeneous(f_plus: f64, f_minus: f64, gamma: f64) -> Result<Self, ModelError> {
        if !gamma.is_finite() || gamma < 0.0 {
            return Err(ModelError::InvalidGamma(gamma));
        }
        let k = f_plus.abs().max(f_minus.abs());
        let bound_k = if k > 0.0 { k } else { 1.0 };
        let drift = DriftSpec::Homogeneous { f_plus, f_minus, gamma, bound_k };
        drift.check_bound()?;
        Ok(drift)
    }

    pub fn catalog(id: &str) -> Result<Self, ModelError> {
        let entry = CatalogDrift::from_id(id)?;
        let drift = DriftSpec::Catalog(entry);
        drift.check_bound()?;
        Ok(drift)
    }

    /// The zero drift (turns the model into integrated Brownian motion).
    pub fn zero() -> Self {
        DriftSpec::homogeneous(0.0, 0.0, 0.0).expect("zero drift is always valid")
    }

    /// Symmetric dissipative drift `F(v) = rho sgn(v) |v|^gamma`, `rho > 0`.
    pub fn symmetric(rho: f64, gamma: f64) -> Result<Self, ModelError> {
        if !(rho > 0.0) {
            return Err(ModelError::NonPositive("rho", rho));
        }
        DriftSpec::homogeneous(rho, -rho, gamma)
    }

    pub fn eval(&self, v: f64) -> f64 {
        match self {
            DriftSpec::Homogeneous { f_plus, f_minus, gamma, .. } => {
                if v > 0.0 {
                    f_plus * v.abs().powf(*gamma)
                } else if v < 0.0 {
                    f_minus * v.abs().powf(*gamma)
                } else {
                    // sgn(0) = 0 forces F(0) = 0 even when gamma = 0.
                    0.0
                }
            }
            DriftSpec::Catalog(c) => c.eval(v),
        }
    }

    pub fn gamma(&self) -> f64 {
        match self {
            DriftSpec::Homogeneous { gamma, .. } => *gamma,
            DriftSpec::Catalog(c) => c.gamma(),
        }
    }

    pub fn bound_k(&self) -> f64 {
        match self {
            DriftSpec::Homogeneous { bound_k, .. } => *bound_k,
            DriftSpec::Catalog(c) => c.bound_k(),
        }
    }

    /// `v F(v) >= 0` for all `v` (the force pushes toward the origin).
    pub fn dissipative(&self) -> bool {
        match self {
            DriftSpec::Homogeneous { f_plus, f_minus, .. } => *f_plus >= 0.0 && *f_minus <= 0.0,
            DriftSpec::Catalog(c) => c.dissipative(),
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        matches!(self, DriftSpec::Homogeneous { .. })
    }

    /// `(f_plus, f_minus, gamma)` for homogeneous drifts.
    pub fn as_homogeneous(&self) -> Result<(f64, f64, f64), ModelError> {
        match self {
            DriftSpec::Homogeneous { f_plus, f_minus, gamma, .. } => {
                Ok((*f_plus, *f_minus, *gamma))
            }
            DriftSpec::Catalog(_) => Err(ModelError::NotHomogeneous),
        }
    }

    /// `rho` such that `F(v) = rho sgn(v)|v|^gamma`, if the drift has that
    /// symmetric dissipative form.
    pub fn symmetric_rho(&self) -> Option<f64> {
        match self {
            DriftSpec::Homogeneous { f_plus, f_minus, .. }
                if *f_plus > 0.0 && *f_minus == -*f_plus =>
            {
                Some(*f_plus)
            }
            _ => None,
        }
    }

    fn check_bound(&self) -> Result<(), ModelError> {
        let (gamma, k) = (self.gamma(), self.bound_k());
        for v in check_grid() {
            let fv = self.eval(v).abs();
            let bound = k * v.abs().powf(gamma);
            if fv > bound * (1.0 + 1e-12) {
                return Err(ModelError::BoundViolated { v, fv, bound });
            }
        }
        Ok(())
    }
}

/// A full problem instance for the kinetic SDE.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub drift: DriftSpec,
    /// Time exponent of the drag force `t^{-beta} F`.
    pub beta: f64,
    pub t0: f64,
    pub v0: f64,
    pub x0: f64,
}

impl ModelSpec {
    pub fn new(drift: DriftSpec, beta: f64, t0: f64, v0: f64, x0: f64) -> Result<Self, ModelError> {
        if !(t0 > 0.0) {
            return Err(ModelError::NonPositive("t0", t0));
        }
        if !(v0 > 0.0) {
            return Err(ModelError::NonPositive("v0", v0));
        }
        Ok(ModelSpec { drift, beta, t0, v0, x0 })
    }

    /// Regime exponent `q = beta / (gamma + 1)`.
    pub fn q(&self) -> f64 {
        self.beta / (self.drift.gamma() + 1.0)
    }

    /// Drift of the velocity component at time `t`, `-t^{-beta} F(v)`.
    pub fn velocity_drift(&self, t: f64, v: f64) -> f64 {
        -t.powf(-self.beta) * self.drift.eval(v)
    }

    pub fn classify_regime(&self) -> Regime {
        Regime::from_q(self.q())
    }

    pub fn explosion_verdict(&self) -> ExplosionVerdict {
        let gamma = self.drift.gamma();
        if gamma <= 1.0 || self.drift.dissipative() {
            return ExplosionVerdict::AlmostSurelyGlobal;
        }
        if let DriftSpec::Homogeneous { f_plus, f_minus, .. } = self.drift {
            // (F(-1), F(1)) in ((0,inf) x [0,inf)) u (R x (-inf,0)).
            let one_sided_blowup =
                (f_minus > 0.0 && f_plus >= 0.0) || f_plus < 0.0;
            if one_sided_blowup {
                return ExplosionVerdict::ExplosionWithPositiveProb;
            }
        }
        if 2.0 * self.q() > 1.0 {
            return ExplosionVerdict::GlobalWithPositiveProb;
        }
        ExplosionVerdict::Unknown
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ModelDocument::from(self)).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        // serde_path_to_error keeps the offending field name in the message.
        let mut de = serde_json::Deserializer::from_str(text);
        let doc: ModelDocument = serde_path_to_error::deserialize(&mut de)
            .map_err(|e| ModelError::Document(e.to_string()))?;
        doc.try_into()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeTag {
    SuperCritical,
    Critical,
    SubCritical,
}

/// Regime of the model, decided by `q` against 1/2 with a tie band of
/// [`REGIME_TOL`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Regime {
    pub tag: RegimeTag,
    pub q: f64,
}

impl Regime {
    pub fn from_q(q: f64) -> Self {
        let tag = if q > 0.5 + REGIME_TOL {
            RegimeTag::SuperCritical
        } else if q < 0.5 - REGIME_TOL {
            RegimeTag::SubCritical
        } else {
            RegimeTag::Critical
        };
        Regime { tag, q }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplosionVerdict {
    AlmostSurelyGlobal,
    GlobalWithPositiveProb,
    ExplosionWithPositiveProb,
    Unknown,
}

/// Flat JSON form of a [`ModelSpec`]. Field names are part of the file
/// contract and must not change.
#[derive(Serialize, Deserialize)]
struct ModelDocument {
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    f_plus: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    f_minus: Option<f64>,
    gamma: f64,
    #[serde(rename = "bound_K")]
    bound_k: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    catalog_id: Option<String>,
    beta: f64,
    t0: f64,
    v0: f64,
    x0: f64,
}

impl From<&ModelSpec> for ModelDocument {
    fn from(spec: &ModelSpec) -> Self {
        let (kind, f_plus, f_minus, catalog_id) = match &spec.drift {
            DriftSpec::Homogeneous { f_plus, f_minus, .. } => {
                ("homogeneous".to_string(), Some(*f_plus), Some(*f_minus), None)
            }
            DriftSpec::Catalog(c) => {
                ("bounded-catalog".to_string(), None, None, Some(c.id().to_string()))
            }
        };
        ModelDocument {
            kind,
            f_plus,
            f_minus,
            gamma: spec.drift.gamma(),
            bound_k: spec.drift.bound_k(),
            catalog_id,
            beta: spec.beta,
            t0: spec.t0,
            v0: spec.v0,
            x0: spec.x0,
        }
    }
}

impl TryFrom<ModelDocument> for ModelSpec {
    type Error = ModelError;

    fn try_from(doc: ModelDocument) -> Result<Self, ModelError> {
        let drift = match doc.kind.as_str() {
            "homogeneous" => {
                let f_plus = doc
                    .f_plus
                    .ok_or_else(|| ModelError::Document("missing field `f_plus`".into()))?;
                let f_minus = doc
                    .f_minus
                    .ok_or_else(|| ModelError::Document("missing field `f_minus`".into()))?;
                DriftSpec::homogeneous(f_plus, f_minus, doc.gamma)?
            }
            "bounded-catalog" => {
                let id = doc
                    .catalog_id
                    .ok_or_else(|| ModelError::Document("missing field `catalog_id`".into()))?;
                DriftSpec::catalog(&id)?
            }
            other => {
                return Err(ModelError::Document(format!("unknown drift kind `{other}`")));
            }
        };
        ModelSpec::new(drift, doc.beta, doc.t0, doc.v0, doc.x0)
    }
}
