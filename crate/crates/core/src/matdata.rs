//! Problem instances and synthetic generators.
//!
//! Two observation models are supported: multivariate regression
//! `Y = X B + E` with a known design `X`, and entrywise completion where a
//! subset `I` of the entries of `B + E` is observed. Ground truth, when
//! present, is carried as an explicit factorization `B = M0 N0^T` so that
//! downstream bound evaluations can use the exact truth factors.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum positive variance accepted anywhere in the crate.
pub const MIN_VARIANCE: f64 = 1e-12;

/// Problem dimensions: `Y` is `ell x m`, `X` is `ell x p`, factors are
/// `p x k` and `m x k`. Completion instances use `p == ell`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub ell: usize,
    pub p: usize,
    pub m: usize,
    pub k: usize,
}

impl Dims {
    pub fn new(ell: usize, p: usize, m: usize, k: usize) -> Result<Self> {
        let dims = Self { ell, p, m, k };
        dims.validate()?;
        Ok(dims)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ell == 0 || self.p == 0 || self.m == 0 || self.k == 0 {
            return Err(Error::Dimension(format!(
                "all dimensions must be >= 1, got {self:?}"
            )));
        }
        if self.k > self.p.min(self.m) {
            return Err(Error::Dimension(format!(
                "factor width k={} exceeds min(p, m)={}",
                self.k,
                self.p.min(self.m)
            )));
        }
        Ok(())
    }
}

/// Noise model together with the admissible variance proxy `s2` used by the
/// hyperparameter and bound formulas.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum NoiseVariant {
    /// i.i.d. Gaussian entries with variance `sigma2`; requires `s2 >= sigma2`.
    GaussianA1 { sigma2: f64 },
    /// i.i.d. uniform entries on `[-zeta, zeta]`; requires `s2 >= zeta^2 / 2`,
    /// the value of `E|eps| / (2 f_min)` for the uniform density.
    BoundedUniformA2 { zeta: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(flatten)]
    pub variant: NoiseVariant,
    pub s2: f64,
}

impl NoiseSpec {
    /// Gaussian noise with the default proxy `s2 = sigma2`.
    pub fn gaussian(sigma2: f64) -> Result<Self> {
        let spec = Self {
            variant: NoiseVariant::GaussianA1 { sigma2 },
            s2: sigma2,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Bounded uniform noise with the default proxy `s2 = zeta^2 / 2`.
    pub fn bounded_uniform(zeta: f64) -> Result<Self> {
        let spec = Self {
            variant: NoiseVariant::BoundedUniformA2 { zeta },
            s2: zeta * zeta / 2.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Raises `s2`; the proxy may only be loosened, never tightened below the
    /// per-variant floor.
    pub fn with_s2(mut self, s2: f64) -> Result<Self> {
        self.s2 = s2;
        self.validate()?;
        Ok(self)
    }

    /// Smallest admissible `s2` for this noise variant.
    pub fn s2_floor(&self) -> f64 {
        match self.variant {
            NoiseVariant::GaussianA1 { sigma2 } => sigma2,
            NoiseVariant::BoundedUniformA2 { zeta } => zeta * zeta / 2.0,
        }
    }

    /// True noise variance of a single entry.
    pub fn entry_variance(&self) -> f64 {
        match self.variant {
            NoiseVariant::GaussianA1 { sigma2 } => sigma2,
            NoiseVariant::BoundedUniformA2 { zeta } => zeta * zeta / 3.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let scale = match self.variant {
            NoiseVariant::GaussianA1 { sigma2 } => sigma2,
            NoiseVariant::BoundedUniformA2 { zeta } => zeta,
        };
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::Domain(format!(
                "noise scale must be finite and > 0, got {scale}"
            )));
        }
        if !(self.s2 > 0.0) || !self.s2.is_finite() {
            return Err(Error::Domain(format!(
                "variance proxy s2 must be finite and > 0, got {}",
                self.s2
            )));
        }
        if self.s2 < self.s2_floor() {
            return Err(Error::Domain(format!(
                "s2 = {} is below the admissible floor {} for {:?}",
                self.s2,
                self.s2_floor(),
                self.variant
            )));
        }
        Ok(())
    }
}

/// Exact low-rank ground truth `B = M0 N0^T` with `M0: p x k0`, `N0: m x k0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    #[serde(with = "serde_rows")]
    pub m0: DMatrix<f64>,
    #[serde(with = "serde_rows")]
    pub n0: DMatrix<f64>,
    #[serde(with = "serde_rows")]
    pub b: DMatrix<f64>,
}

impl Truth {
    pub fn k0(&self) -> usize {
        self.m0.ncols()
    }
}

/// Observed regression data `Y = X B + E`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionInstance {
    pub dims: Dims,
    #[serde(with = "serde_rows")]
    pub x: DMatrix<f64>,
    #[serde(with = "serde_rows")]
    pub y: DMatrix<f64>,
    pub truth: Option<Truth>,
    pub noise: NoiseSpec,
}

impl RegressionInstance {
    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        self.noise.validate()?;
        let Dims { ell, p, m, .. } = self.dims;
        if self.x.shape() != (ell, p) {
            return Err(Error::Dimension(format!(
                "design is {:?}, expected ({ell}, {p})",
                self.x.shape()
            )));
        }
        if self.y.shape() != (ell, m) {
            return Err(Error::Dimension(format!(
                "observations are {:?}, expected ({ell}, {m})",
                self.y.shape()
            )));
        }
        if let Some(truth) = &self.truth {
            let k0 = truth.k0();
            if truth.m0.shape() != (p, k0) || truth.n0.shape() != (m, k0) {
                return Err(Error::Dimension("truth factor shapes inconsistent".into()));
            }
            if truth.b != &truth.m0 * truth.n0.transpose() {
                return Err(Error::Config("truth B is not exactly M0 * N0^T".into()));
            }
        }
        Ok(())
    }
}

/// Observed completion data: entries of `B + E` on the index set `mask`.
/// `observed[t]` is the value at `mask[t]`; `dims.p == dims.ell`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CompletionWire", into = "CompletionWire")]
pub struct CompletionInstance {
    pub dims: Dims,
    pub mask: Vec<(usize, usize)>,
    pub observed: Vec<f64>,
    pub truth: Option<Truth>,
    pub noise: NoiseSpec,
}

impl CompletionInstance {
    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        self.noise.validate()?;
        if self.dims.p != self.dims.ell {
            return Err(Error::Dimension(
                "completion instances require dims.p == dims.ell".into(),
            ));
        }
        if self.mask.is_empty() {
            return Err(Error::Config("mask must contain at least one index".into()));
        }
        if self.mask.len() != self.observed.len() {
            return Err(Error::Dimension(format!(
                "mask has {} entries but observed has {}",
                self.mask.len(),
                self.observed.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for &(i, j) in &self.mask {
            if i >= self.dims.ell || j >= self.dims.m {
                return Err(Error::Dimension(format!(
                    "mask index ({i}, {j}) out of range for {}x{}",
                    self.dims.ell, self.dims.m
                )));
            }
            if !seen.insert((i, j)) {
                return Err(Error::Config(format!("duplicate mask index ({i}, {j})")));
            }
        }
        if let Some(truth) = &self.truth {
            if truth.b.shape() != (self.dims.ell, self.dims.m) {
                return Err(Error::Dimension("truth B shape inconsistent".into()));
            }
        }
        Ok(())
    }

    /// Observed matrix with unobserved entries zero-filled.
    pub fn zero_filled(&self) -> DMatrix<f64> {
        let mut full = DMatrix::zeros(self.dims.ell, self.dims.m);
        for (&(i, j), &v) in self.mask.iter().zip(&self.observed) {
            full[(i, j)] = v;
        }
        full
    }
}

/// Wire format for completion instances: the observed values ride in a
/// zero-filled `ell x m` matrix, the mask tells which entries are real.
#[derive(Serialize, Deserialize)]
struct CompletionWire {
    dims: Dims,
    mask: Vec<[usize; 2]>,
    y: Vec<Vec<f64>>,
    truth: Option<Truth>,
    noise: NoiseSpec,
}

impl From<CompletionInstance> for CompletionWire {
    fn from(inst: CompletionInstance) -> Self {
        let y = mat_to_rows(&inst.zero_filled());
        Self {
            dims: inst.dims,
            mask: inst.mask.iter().map(|&(i, j)| [i, j]).collect(),
            y,
            truth: inst.truth,
            noise: inst.noise,
        }
    }
}

impl TryFrom<CompletionWire> for CompletionInstance {
    type Error = Error;

    fn try_from(wire: CompletionWire) -> Result<Self> {
        let full = rows_to_mat(&wire.y)?;
        let mask: Vec<(usize, usize)> = wire.mask.iter().map(|&[i, j]| (i, j)).collect();
        let mut observed = Vec::with_capacity(mask.len());
        for &(i, j) in &mask {
            if i >= full.nrows() || j >= full.ncols() {
                return Err(Error::Dimension(format!("mask index ({i}, {j}) out of range")));
            }
            observed.push(full[(i, j)]);
        }
        let inst = Self {
            dims: wire.dims,
            mask,
            observed,
            truth: wire.truth,
            noise: wire.noise,
        };
        inst.validate()?;
        Ok(inst)
    }
}

/// Either observation model; this is what the samplers and the CLI consume.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Instance {
    Regression(RegressionInstance),
    Completion(CompletionInstance),
}

impl Instance {
    pub fn dims(&self) -> Dims {
        match self {
            Instance::Regression(inst) => inst.dims,
            Instance::Completion(inst) => inst.dims,
        }
    }

    pub fn noise(&self) -> NoiseSpec {
        match self {
            Instance::Regression(inst) => inst.noise,
            Instance::Completion(inst) => inst.noise,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Instance::Regression(inst) => inst.validate(),
            Instance::Completion(inst) => inst.validate(),
        }
    }
}

/// Design matrix families for synthetic experiments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DesignKind {
    Identity,
    GaussianIid,
    /// Entries i.i.d. uniform on `[-c, c]`.
    ScaledBounded { c: f64 },
}

/// Draws truth factors with i.i.d. uniform `[-amp, amp]` entries and forms
/// `B = M0 N0^T`; the returned `B` has rank at most `k0`.
pub fn gen_lowrank<R: Rng>(
    p: usize,
    m: usize,
    k0: usize,
    amp: f64,
    rng: &mut R,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    if p == 0 || m == 0 {
        return Err(Error::Dimension("p and m must be >= 1".into()));
    }
    if k0 > p.min(m) {
        return Err(Error::Dimension(format!(
            "truth rank k0={k0} exceeds min(p, m)={}",
            p.min(m)
        )));
    }
    if !(amp > 0.0) {
        return Err(Error::Domain(format!("amplitude must be > 0, got {amp}")));
    }
    let unif = Uniform::new_inclusive(-amp, amp)
        .map_err(|e| Error::Domain(format!("uniform support invalid: {e}")))?;
    let m0 = DMatrix::from_fn(p, k0, |_, _| unif.sample(rng));
    let n0 = DMatrix::from_fn(m, k0, |_, _| unif.sample(rng));
    let b = &m0 * n0.transpose();
    Ok((m0, n0, b))
}

/// Draws an `ell x p` design matrix of the requested family.
pub fn gen_design<R: Rng>(
    ell: usize,
    p: usize,
    kind: DesignKind,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if ell == 0 || p == 0 {
        return Err(Error::Dimension("ell and p must be >= 1".into()));
    }
    match kind {
        DesignKind::Identity => {
            if ell != p {
                return Err(Error::Dimension(format!(
                    "identity design requires ell == p, got ell={ell}, p={p}"
                )));
            }
            Ok(DMatrix::identity(ell, p))
        }
        DesignKind::GaussianIid => {
            let std_normal = Normal::new(0.0, 1.0).expect("unit normal is valid");
            Ok(DMatrix::from_fn(ell, p, |_, _| std_normal.sample(rng)))
        }
        DesignKind::ScaledBounded { c } => {
            if !(c > 0.0) {
                return Err(Error::Domain(format!("design bound must be > 0, got {c}")));
            }
            let unif = Uniform::new_inclusive(-c, c)
                .map_err(|e| Error::Domain(format!("uniform support invalid: {e}")))?;
            Ok(DMatrix::from_fn(ell, p, |_, _| unif.sample(rng)))
        }
    }
}

/// Adds mean-zero i.i.d. noise of the given variant to `signal`.
pub fn add_noise<R: Rng>(signal: &DMatrix<f64>, noise: &NoiseSpec, rng: &mut R) -> DMatrix<f64> {
    debug_assert!(noise.validate().is_ok());
    match noise.variant {
        NoiseVariant::GaussianA1 { sigma2 } => {
            let normal = Normal::new(0.0, sigma2.sqrt()).expect("validated sigma2");
            signal.map(|v| v + normal.sample(rng))
        }
        NoiseVariant::BoundedUniformA2 { zeta } => {
            let unif = Uniform::new_inclusive(-zeta, zeta).expect("validated zeta");
            signal.map(|v| v + unif.sample(rng))
        }
    }
}

/// Squared Frobenius norm `Tr(A^T A)`.
pub fn frobenius_sq(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|v| v * v).sum()
}

/// Uniformly samples `round(frac * ell * m)` distinct indices from the full
/// grid, returned sorted row-major.
pub fn gen_mask<R: Rng>(
    ell: usize,
    m: usize,
    frac: f64,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    if ell == 0 || m == 0 {
        return Err(Error::Dimension("ell and m must be >= 1".into()));
    }
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(Error::Config(format!("mask fraction must be in (0, 1], got {frac}")));
    }
    let total = ell * m;
    let count = (frac * total as f64).round() as usize;
    if count == 0 {
        return Err(Error::Config(format!(
            "mask fraction {frac} rounds to an empty mask on a {ell}x{m} grid"
        )));
    }
    let count = count.min(total);
    // Partial Fisher-Yates over the flat index set.
    let mut cells: Vec<usize> = (0..total).collect();
    for t in 0..count {
        let swap = t + rng.random_range(0..total - t);
        cells.swap(t, swap);
    }
    let mut mask: Vec<(usize, usize)> = cells[..count].iter().map(|&c| (c / m, c % m)).collect();
    mask.sort_unstable();
    Ok(mask)
}

/// Serializes a matrix as row-major nested arrays.
pub fn mat_to_rows(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect())
        .collect()
}

/// Parses row-major nested arrays into a matrix; rows must be nonempty and
/// of equal length.
pub fn rows_to_mat(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Err(Error::Dimension("matrix must have at least one row".into()));
    }
    let ncols = rows[0].len();
    if ncols == 0 {
        return Err(Error::Dimension("matrix must have at least one column".into()));
    }
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension("ragged rows in matrix payload".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// serde adapter storing `DMatrix<f64>` as row-major nested arrays.
pub mod serde_rows {
    use super::{mat_to_rows, rows_to_mat};
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(mat: &DMatrix<f64>, ser: S) -> Result<S::Ok, S::Error> {
        mat_to_rows(mat).serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(de)?;
        rows_to_mat(&rows).map_err(serde::de::Error::custom)
    }
}
