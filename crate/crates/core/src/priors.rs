//! Priors over factor pairs `(M, N)`.
//!
//! Two families are implemented. `Fixed` places independent zero-mean
//! Gaussians on the columns, `M_j ~ N(0, var_m[j] I_p)` and
//! `N_j ~ N(0, var_n[j] I_m)`; uniform shrinkage (both vectors constant)
//! and per-column scales are both special cases of it. `GammaHier` shares a
//! latent scale `gamma_j` between the j-th columns of `M` and `N`, with
//! `1/gamma_j ~ Gamma(a, b)` in shape-rate form, i.e. `gamma_j` is
//! inverse-Gamma(a, b). All log densities are normalized.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gamma as GammaDist, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::matdata::{Dims, MIN_VARIANCE};

const LN_2PI: f64 = 1.8378770664093453; // ln(2 * pi)

/// Rate of the Gamma hyperprior: either an explicit value or the sentinel
/// asking for the dimension-dependent value from [`theorem_hyperparams`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GammaRate {
    Value(f64),
    Theorem,
}

impl Serialize for GammaRate {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            GammaRate::Value(v) => ser.serialize_f64(*v),
            GammaRate::Theorem => ser.serialize_str("theorem"),
        }
    }
}

impl<'de> Deserialize<'de> for GammaRate {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(de)? {
            Raw::Num(v) => Ok(GammaRate::Value(v)),
            Raw::Text(s) if s == "theorem" => Ok(GammaRate::Theorem),
            Raw::Text(s) => Err(D::Error::custom(format!(
                "expected a number or \"theorem\", got \"{s}\""
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PriorSpec {
    /// Per-column variances, fixed in advance.
    Fixed { var_m: Vec<f64>, var_n: Vec<f64> },
    /// Shared per-column scales with an inverse-Gamma(a, b) hyperprior.
    GammaHier { a: f64, b: GammaRate },
}

impl PriorSpec {
    /// Uniform Gaussian shrinkage with precision `tau2` on every entry,
    /// i.e. `Fixed` with both variance vectors equal to `1/tau2`.
    pub fn uniform_shrinkage(tau2: f64, k: usize) -> Result<Self> {
        if !(tau2 > 0.0) {
            return Err(Error::Domain(format!("tau2 must be > 0, got {tau2}")));
        }
        Ok(PriorSpec::Fixed {
            var_m: vec![1.0 / tau2; k],
            var_n: vec![1.0 / tau2; k],
        })
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        match self {
            PriorSpec::Fixed { var_m, var_n } => {
                if var_m.len() != k || var_n.len() != k {
                    return Err(Error::Dimension(format!(
                        "variance vectors must have length k={k}, got {} and {}",
                        var_m.len(),
                        var_n.len()
                    )));
                }
                if var_m.iter().chain(var_n.iter()).any(|&v| !(v > 0.0) || !v.is_finite()) {
                    return Err(Error::Domain("column variances must be finite and > 0".into()));
                }
            }
            PriorSpec::GammaHier { a, b } => {
                if !(*a > 0.0) || !a.is_finite() {
                    return Err(Error::Domain(format!("shape a must be > 0, got {a}")));
                }
                if let GammaRate::Value(b) = b {
                    if !(*b > 0.0) || !b.is_finite() {
                        return Err(Error::Domain(format!("rate b must be > 0, got {b}")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Replaces a `Theorem` rate sentinel with its dimension-dependent value.
    pub fn resolve(&self, s2: f64, dims: Dims) -> Result<PriorSpec> {
        match self {
            PriorSpec::GammaHier { a, b: GammaRate::Theorem } => {
                let (_, b, _) = theorem_hyperparams(s2, dims.ell, dims.p, dims.m, dims.k)?;
                Ok(PriorSpec::GammaHier {
                    a: *a,
                    b: GammaRate::Value(b),
                })
            }
            other => Ok(other.clone()),
        }
    }

    /// Concrete `(a, b)` of a resolved hierarchical prior.
    pub fn gamma_hyperparams(&self) -> Result<(f64, f64)> {
        match self {
            PriorSpec::GammaHier { a, b: GammaRate::Value(b) } => Ok((*a, *b)),
            PriorSpec::GammaHier { b: GammaRate::Theorem, .. } => Err(Error::Config(
                "hierarchical prior rate is unresolved; call resolve() with s2 and dims".into(),
            )),
            PriorSpec::Fixed { .. } => {
                Err(Error::Config("fixed prior has no Gamma hyperparameters".into()))
            }
        }
    }

    pub fn is_hierarchical(&self) -> bool {
        matches!(self, PriorSpec::GammaHier { .. })
    }
}

/// Current factor state of a chain. `gamma` is used only under the
/// hierarchical prior and is empty under `Fixed`. `B = M N^T` is always
/// derived, never stored.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorState {
    pub m: DMatrix<f64>,
    pub n: DMatrix<f64>,
    pub gamma: Vec<f64>,
}

impl FactorState {
    pub fn product(&self) -> DMatrix<f64> {
        &self.m * self.n.transpose()
    }

    /// `||M_j||^2 + ||N_j||^2` per column.
    pub fn column_norms_sq(&self) -> Vec<f64> {
        (0..self.m.ncols())
            .map(|j| self.m.column(j).norm_squared() + self.n.column(j).norm_squared())
            .collect()
    }

    pub fn validate_gamma(&self) -> Result<()> {
        if self.gamma.len() != self.m.ncols() {
            return Err(Error::Dimension(format!(
                "gamma has length {}, expected k={}",
                self.gamma.len(),
                self.m.ncols()
            )));
        }
        if self.gamma.iter().any(|&g| !(g > 0.0) || !g.is_finite()) {
            return Err(Error::Domain("gamma entries must be finite and > 0".into()));
        }
        Ok(())
    }
}

/// Normalized log density of `(M, N)` given the column scales:
/// `-1/2 sum_j (||M_j||^2 + ||N_j||^2) / gamma_j - (p+m)/2 sum_j ln(2 pi gamma_j)`.
pub fn log_prior_given_gamma(state: &FactorState) -> Result<f64> {
    state.validate_gamma()?;
    if state.m.ncols() != state.n.ncols() {
        return Err(Error::Dimension("M and N must have the same width".into()));
    }
    let (p, m) = (state.m.nrows(), state.n.nrows());
    let mut log_density = 0.0;
    for (j, &gamma) in state.gamma.iter().enumerate() {
        let quad = state.m.column(j).norm_squared() + state.n.column(j).norm_squared();
        log_density -= 0.5 * quad / gamma;
        log_density -= 0.5 * (p + m) as f64 * (LN_2PI + gamma.ln());
    }
    Ok(log_density)
}

/// Normalized log density of the scales under `1/gamma_j ~ Gamma(a, b)`:
/// `sum_j [a ln b - ln Gamma(a) - (a+1) ln gamma_j - b / gamma_j]`.
pub fn log_prior_gamma(gamma: &[f64], a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0) || !(b > 0.0) {
        return Err(Error::Domain(format!("a and b must be > 0, got a={a}, b={b}")));
    }
    if gamma.iter().any(|&g| !(g > 0.0)) {
        return Err(Error::Domain("gamma entries must be > 0".into()));
    }
    Ok(gamma
        .iter()
        .map(|&g| a * b.ln() - ln_gamma(a) - (a + 1.0) * g.ln() - b / g)
        .sum())
}

/// Normalized log density of `(M, N)` under a fixed-variance prior.
pub fn log_prior_fixed(state: &FactorState, var_m: &[f64], var_n: &[f64]) -> Result<f64> {
    let k = state.m.ncols();
    if var_m.len() != k || var_n.len() != k || state.n.ncols() != k {
        return Err(Error::Dimension("variance vectors must match factor width".into()));
    }
    let (p, m) = (state.m.nrows(), state.n.nrows());
    let mut log_density = 0.0;
    for j in 0..k {
        if !(var_m[j] > 0.0) || !(var_n[j] > 0.0) {
            return Err(Error::Domain("column variances must be > 0".into()));
        }
        log_density -= 0.5 * state.m.column(j).norm_squared() / var_m[j];
        log_density -= 0.5 * p as f64 * (LN_2PI + var_m[j].ln());
        log_density -= 0.5 * state.n.column(j).norm_squared() / var_n[j];
        log_density -= 0.5 * m as f64 * (LN_2PI + var_n[j].ln());
    }
    Ok(log_density)
}

/// Joint normalized log prior of a state under `spec` (including the scale
/// density when the prior is hierarchical).
pub fn log_prior(state: &FactorState, spec: &PriorSpec) -> Result<f64> {
    match spec {
        PriorSpec::Fixed { var_m, var_n } => log_prior_fixed(state, var_m, var_n),
        PriorSpec::GammaHier { .. } => {
            let (a, b) = spec.gamma_hyperparams()?;
            Ok(log_prior_given_gamma(state)? + log_prior_gamma(&state.gamma, a, b)?)
        }
    }
}

/// Draws a state from the prior. Under the hierarchical prior the scales are
/// drawn first (`1/gamma_j ~ Gamma(a, b)`, clamped to at least
/// [`MIN_VARIANCE`]), then the columns given the scales.
pub fn sample_prior<R: Rng>(spec: &PriorSpec, dims: Dims, rng: &mut R) -> Result<FactorState> {
    dims.validate()?;
    spec.validate(dims.k)?;
    let (p, m, k) = (dims.p, dims.m, dims.k);
    match spec {
        PriorSpec::Fixed { var_m, var_n } => {
            let mat_m = sample_columns(p, var_m, rng);
            let mat_n = sample_columns(m, var_n, rng);
            Ok(FactorState { m: mat_m, n: mat_n, gamma: Vec::new() })
        }
        PriorSpec::GammaHier { .. } => {
            let (a, b) = spec.gamma_hyperparams()?;
            let precision_dist = GammaDist::new(a, 1.0 / b)
                .map_err(|e| Error::Domain(format!("invalid Gamma({a}, rate {b}): {e}")))?;
            let gamma: Vec<f64> = (0..k)
                .map(|_| (1.0 / precision_dist.sample(rng)).max(MIN_VARIANCE))
                .collect();
            let mat_m = sample_columns(p, &gamma, rng);
            let mat_n = sample_columns(m, &gamma, rng);
            Ok(FactorState { m: mat_m, n: mat_n, gamma })
        }
    }
}

fn sample_columns<R: Rng>(rows: usize, variances: &[f64], rng: &mut R) -> DMatrix<f64> {
    let mut mat = DMatrix::zeros(rows, variances.len());
    for (j, &var) in variances.iter().enumerate() {
        let normal = Normal::new(0.0, var.sqrt()).expect("validated variance");
        for i in 0..rows {
            mat[(i, j)] = normal.sample(rng);
        }
    }
    mat
}

/// Hyperparameters that make the oracle inequality hold:
/// `a = 1`, `b = s2 / (2 ell p k^2 (m^2 + p^2))`, `lambda = 1 / (4 s2)`.
pub fn theorem_hyperparams(
    s2: f64,
    ell: usize,
    p: usize,
    m: usize,
    k: usize,
) -> Result<(f64, f64, f64)> {
    if !(s2 > 0.0) || !s2.is_finite() {
        return Err(Error::Domain(format!("s2 must be finite and > 0, got {s2}")));
    }
    if ell == 0 || p == 0 || m == 0 || k == 0 {
        return Err(Error::Domain("dimensions must be >= 1".into()));
    }
    let denom = 2.0 * (ell * p) as f64 * (k * k) as f64 * ((m * m + p * p) as f64);
    Ok((1.0, s2 / denom, 1.0 / (4.0 * s2)))
}
