//! Tempered Gibbs sampler for the factorized low-rank model.
//!
//! The target is the tempered pseudo-posterior
//! `rho_lambda(d(M, N)) ∝ exp(-lambda * fit(M, N)) * pi(d(M, N))`, where the
//! fit term is `||Y - X M N^T||_F^2` for regression and the sum of squared
//! errors over the observed entries for completion. With Gaussian noise and
//! `lambda = 1/(2 sigma^2)` this is the ordinary Bayes posterior; the
//! estimator averages `M N^T` over the kept sweeps.
//!
//! All conditionals are conjugate Gaussians (and inverse-Gamma for the
//! column scales), sampled exactly through Cholesky factorizations of the
//! conditional precision matrices.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, Gamma as GammaDist, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::baseline::ols_fit;
use crate::error::{Error, Result};
use crate::estimate::PosteriorSummary;
use crate::matdata::{frobenius_sq, CompletionInstance, Instance, RegressionInstance, MIN_VARIANCE};
use crate::priors::{log_prior, sample_prior, FactorState, PriorSpec};
use crate::rng::{rng_stream, streams};

/// Jitter multipliers tried on the diagonal before a factorization is
/// declared failed.
const JITTER_LADDER: [f64; 3] = [1e-12, 1e-9, 1e-6];

/// Floor for warm-start column scales.
const WARMSTART_GAMMA_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// Draw the initial state from the prior.
    PriorDraw,
    /// Start from the top-k SVD factors of the least-squares fit
    /// (regression) or the zero-filled observed matrix (completion).
    SvdWarmstart,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Inverse temperature multiplying the fit term.
    pub lambda: f64,
    /// Total sweeps.
    pub iters: usize,
    /// Discarded initial sweeps.
    pub burn_in: usize,
    /// Keep every `thin`-th sweep after burn-in.
    pub thin: usize,
    /// Chain seed; the chain draws from its own ChaCha substream.
    pub seed: u64,
    pub init: InitStrategy,
}

impl SamplerConfig {
    /// Defaults: `burn_in = iters / 5`, `thin = 1`, SVD warm start.
    pub fn new(lambda: f64, iters: usize, seed: u64) -> Self {
        Self {
            lambda,
            iters,
            burn_in: iters / 5,
            thin: 1,
            seed,
            init: InitStrategy::SvdWarmstart,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config(format!(
                "lambda must be finite and > 0, got {}",
                self.lambda
            )));
        }
        if self.burn_in >= self.iters {
            return Err(Error::Config(format!(
                "burn_in = {} must be < iters = {}",
                self.burn_in, self.iters
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be >= 1".into()));
        }
        if (self.iters - self.burn_in) / self.thin == 0 {
            return Err(Error::Config(
                "no sweeps would be kept; increase iters or decrease thin".into(),
            ));
        }
        Ok(())
    }

    /// Number of kept sweeps: `floor((iters - burn_in) / thin)`.
    pub fn kept(&self) -> usize {
        (self.iters - self.burn_in) / self.thin
    }
}

/// One kept sweep of diagnostics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceRecord {
    pub sweep: usize,
    pub residual_fro_sq: f64,
    pub log_pseudo_posterior: f64,
    /// Effective per-column scales (sampled under the hierarchical prior,
    /// the fixed variances otherwise).
    pub gamma: Vec<f64>,
    /// `||M_j||^2 + ||N_j||^2` per column.
    pub colnorm: Vec<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ChainTrace {
    pub records: Vec<TraceRecord>,
}

/// Log pseudo-posterior `-lambda * fit + log prior`, unnormalized in the
/// data term.
pub fn log_pseudo_posterior(
    state: &FactorState,
    inst: &Instance,
    lambda: f64,
    prior: &PriorSpec,
) -> Result<f64> {
    let fit = fit_term(state, inst)?;
    Ok(-lambda * fit + log_prior(state, prior)?)
}

/// Fit term of the pseudo-posterior for either observation model.
pub fn fit_term(state: &FactorState, inst: &Instance) -> Result<f64> {
    let dims = inst.dims();
    if state.m.shape() != (dims.p, dims.k) || state.n.shape() != (dims.m, dims.k) {
        return Err(Error::Dimension(format!(
            "state is {:?}/{:?}, instance expects ({}, {})/({}, {})",
            state.m.shape(),
            state.n.shape(),
            dims.p,
            dims.k,
            dims.m,
            dims.k
        )));
    }
    let b = state.product();
    match inst {
        Instance::Regression(reg) => Ok(frobenius_sq(&(&reg.y - &reg.x * b))),
        Instance::Completion(comp) => Ok(comp
            .mask
            .iter()
            .zip(&comp.observed)
            .map(|(&(i, j), &y)| {
                let d = y - b[(i, j)];
                d * d
            })
            .sum()),
    }
}

/// Inverse-Gamma posterior parameters for one column scale given column
/// norms: shape `a + (p + m)/2`, rate `b + colnorm_sq / 2`.
pub fn inverse_gamma_posterior(a: f64, b: f64, p: usize, m: usize, colnorm_sq: f64) -> (f64, f64) {
    (a + (p + m) as f64 / 2.0, b + colnorm_sq / 2.0)
}

/// Draws new column scales from their conditional inverse-Gamma
/// distributions (hierarchical prior only).
pub fn cond_update_gamma<R: Rng>(
    state: &FactorState,
    a: f64,
    b: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(a > 0.0) || !(b > 0.0) {
        return Err(Error::Domain(format!("a and b must be > 0, got a={a}, b={b}")));
    }
    let (p, m) = (state.m.nrows(), state.n.nrows());
    state
        .column_norms_sq()
        .iter()
        .map(|&norm_sq| {
            let (shape, rate) = inverse_gamma_posterior(a, b, p, m, norm_sq);
            let dist = GammaDist::new(shape, 1.0 / rate)
                .map_err(|e| Error::Domain(format!("invalid Gamma draw: {e}")))?;
            Ok((1.0 / dist.sample(rng)).max(MIN_VARIANCE))
        })
        .collect()
}

/// Draws `M` from its full conditional under the regression likelihood.
pub fn cond_update_m<R: Rng>(
    state: &FactorState,
    inst: &RegressionInstance,
    lambda: f64,
    prior: &PriorSpec,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let ctx = RegressionCtx::new(inst);
    let (var_m, _) = effective_variances(prior, state)?;
    ctx.update_m(state, &var_m, lambda, rng)
}

/// Draws `N` from its full conditional under the regression likelihood.
pub fn cond_update_n<R: Rng>(
    state: &FactorState,
    inst: &RegressionInstance,
    lambda: f64,
    prior: &PriorSpec,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let ctx = RegressionCtx::new(inst);
    let (_, var_n) = effective_variances(prior, state)?;
    ctx.update_n(state, &var_n, lambda, rng)
}

/// Draws `(M, N)` from their masked full conditionals under the completion
/// likelihood (`M` first, then `N` given the new `M`).
pub fn cond_update_completion<R: Rng>(
    state: &FactorState,
    inst: &CompletionInstance,
    lambda: f64,
    prior: &PriorSpec,
    rng: &mut R,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let ctx = CompletionCtx::new(inst);
    let (var_m, var_n) = effective_variances(prior, state)?;
    let new_m = ctx.update_m(state, &var_m, lambda, rng)?;
    let mid = FactorState { m: new_m.clone(), n: state.n.clone(), gamma: state.gamma.clone() };
    let new_n = ctx.update_n(&mid, &var_n, lambda, rng)?;
    Ok((new_m, new_n))
}

/// Runs a full chain and returns the accumulated posterior-mean estimate of
/// `M N^T` together with per-sweep diagnostics.
pub fn run_chain(
    inst: &Instance,
    prior: &PriorSpec,
    cfg: &SamplerConfig,
) -> Result<(PosteriorSummary, ChainTrace)> {
    let started = Instant::now();
    cfg.validate()?;
    inst.validate()?;
    let dims = inst.dims();
    let prior = prior.resolve(inst.noise().s2, dims)?;
    prior.validate(dims.k)?;

    let mut rng = rng_stream(cfg.seed, streams::CHAIN);
    let mut state = initial_state(inst, &prior, cfg, &mut rng)?;

    let hier = prior.is_hierarchical().then(|| prior.gamma_hyperparams()).transpose()?;

    enum Model<'a> {
        Reg(RegressionCtx<'a>),
        Comp(CompletionCtx<'a>),
    }
    let model = match inst {
        Instance::Regression(reg) => Model::Reg(RegressionCtx::new(reg)),
        Instance::Completion(comp) => Model::Comp(CompletionCtx::new(comp)),
    };

    let mut b_sum = DMatrix::zeros(dims.p, dims.m);
    let mut kept = 0usize;
    let mut trace = ChainTrace::default();

    for sweep in 1..=cfg.iters {
        let step = |state: &mut FactorState, rng: &mut _| -> Result<()> {
            let (var_m, var_n) = effective_variances(&prior, state)?;
            match &model {
                Model::Reg(ctx) => {
                    state.m = ctx.update_m(state, &var_m, cfg.lambda, rng)?;
                    state.n = ctx.update_n(state, &var_n, cfg.lambda, rng)?;
                }
                Model::Comp(ctx) => {
                    state.m = ctx.update_m(state, &var_m, cfg.lambda, rng)?;
                    state.n = ctx.update_n(state, &var_n, cfg.lambda, rng)?;
                }
            }
            if let Some((a, b)) = hier {
                state.gamma = cond_update_gamma(state, a, b, rng)?;
            }
            Ok(())
        };
        step(&mut state, &mut rng).map_err(|e| match e {
            Error::Numerical { context, condition } => Error::Numerical {
                context: format!("sweep {sweep}: {context}"),
                condition,
            },
            other => other,
        })?;

        if sweep > cfg.burn_in && (sweep - cfg.burn_in) % cfg.thin == 0 {
            let product = state.product();
            b_sum += &product;
            kept += 1;
            let residual = fit_term(&state, inst)?;
            let log_pp = -cfg.lambda * residual + log_prior(&state, &prior)?;
            let gamma = match &prior {
                PriorSpec::GammaHier { .. } => state.gamma.clone(),
                PriorSpec::Fixed { var_m, .. } => var_m.clone(),
            };
            trace.records.push(TraceRecord {
                sweep,
                residual_fro_sq: residual,
                log_pseudo_posterior: log_pp,
                gamma,
                colnorm: state.column_norms_sq(),
            });
        }
    }

    debug_assert_eq!(kept, cfg.kept());
    let summary = PosteriorSummary {
        b_hat: b_sum / kept as f64,
        kept,
        lambda: cfg.lambda,
        prior,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    Ok((summary, trace))
}

/// Effective per-column prior variances for the factor updates.
fn effective_variances(prior: &PriorSpec, state: &FactorState) -> Result<(Vec<f64>, Vec<f64>)> {
    match prior {
        PriorSpec::Fixed { var_m, var_n } => Ok((var_m.clone(), var_n.clone())),
        PriorSpec::GammaHier { .. } => {
            state.validate_gamma()?;
            Ok((state.gamma.clone(), state.gamma.clone()))
        }
    }
}

fn initial_state<R: Rng>(
    inst: &Instance,
    prior: &PriorSpec,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<FactorState> {
    let dims = inst.dims();
    match cfg.init {
        InitStrategy::PriorDraw => sample_prior(prior, dims, rng),
        InitStrategy::SvdWarmstart => {
            let base = match inst {
                Instance::Regression(reg) => ols_fit(&reg.x, &reg.y)?,
                Instance::Completion(comp) => comp.zero_filled(),
            };
            let svd = base.clone().svd(true, true);
            let u = svd.u.as_ref().expect("svd with vectors");
            let v_t = svd.v_t.as_ref().expect("svd with vectors");
            let mut m = DMatrix::zeros(dims.p, dims.k);
            let mut n = DMatrix::zeros(dims.m, dims.k);
            for j in 0..dims.k.min(svd.singular_values.len()) {
                let scale = svd.singular_values[j].sqrt();
                m.set_column(j, &(u.column(j) * scale));
                n.set_column(j, &(v_t.row(j).transpose() * scale));
            }
            let gamma = if prior.is_hierarchical() {
                let per_entry = 1.0 / (dims.p + dims.m) as f64;
                (0..dims.k)
                    .map(|j| {
                        let norm = m.column(j).norm_squared() + n.column(j).norm_squared();
                        (norm * per_entry).max(WARMSTART_GAMMA_FLOOR)
                    })
                    .collect()
            } else {
                Vec::new()
            };
            Ok(FactorState { m, n, gamma })
        }
    }
}

/// Precomputed regression quantities: the updates only need `X^T X` and
/// `X^T Y`, never the raw `ell`-row data.
struct RegressionCtx<'a> {
    inst: &'a RegressionInstance,
    xtx: DMatrix<f64>,
    xty: DMatrix<f64>,
}

impl<'a> RegressionCtx<'a> {
    fn new(inst: &'a RegressionInstance) -> Self {
        Self {
            inst,
            xtx: inst.x.transpose() * &inst.x,
            xty: inst.x.transpose() * &inst.y,
        }
    }

    /// Precision and right-hand side of the stacked (column-major) Gaussian
    /// conditional for `vec(M)`:
    /// `P = 2 lambda (N^T N ⊗ X^T X) + diag(1/var_m) ⊗ I_p`,
    /// `h = 2 lambda vec(X^T Y N)`.
    fn m_system(
        &self,
        state: &FactorState,
        var_m: &[f64],
        lambda: f64,
    ) -> (DMatrix<f64>, DVector<f64>) {
        let p = self.inst.dims.p;
        let k = state.m.ncols();
        let ntn = state.n.transpose() * &state.n;
        let mut prec = DMatrix::zeros(p * k, p * k);
        for a in 0..k {
            for b in 0..k {
                let w = 2.0 * lambda * ntn[(a, b)];
                for jj in 0..p {
                    for ii in 0..p {
                        prec[(a * p + ii, b * p + jj)] = w * self.xtx[(ii, jj)];
                    }
                }
            }
            let inv_var = 1.0 / var_m[a];
            for ii in 0..p {
                prec[(a * p + ii, a * p + ii)] += inv_var;
            }
        }
        let rhs_mat = &self.xty * &state.n * (2.0 * lambda);
        let rhs = DVector::from_column_slice(rhs_mat.as_slice());
        (prec, rhs)
    }

    fn update_m<R: Rng>(
        &self,
        state: &FactorState,
        var_m: &[f64],
        lambda: f64,
        rng: &mut R,
    ) -> Result<DMatrix<f64>> {
        let (p, k) = (self.inst.dims.p, state.m.ncols());
        let (prec, rhs) = self.m_system(state, var_m, lambda);
        let draw = sample_gaussian_from_precision(prec, &rhs, rng, "M update")?;
        Ok(DMatrix::from_column_slice(p, k, draw.as_slice()))
    }

    /// Shared k x k precision of the row conditionals of `N` (rows are
    /// conditionally independent given `M`): `P = 2 lambda A^T A + diag(1/var_n)`
    /// with `A = X M`; the mean of row `i` solves `P mean_i = 2 lambda A^T Y_(:,i)`.
    fn n_system(
        &self,
        state: &FactorState,
        var_n: &[f64],
        lambda: f64,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let a = &self.inst.x * &state.m;
        let mut prec = a.transpose() * &a * (2.0 * lambda);
        for (j, &v) in var_n.iter().enumerate() {
            prec[(j, j)] += 1.0 / v;
        }
        let rhs = a.transpose() * &self.inst.y * (2.0 * lambda);
        (prec, rhs)
    }

    fn update_n<R: Rng>(
        &self,
        state: &FactorState,
        var_n: &[f64],
        lambda: f64,
        rng: &mut R,
    ) -> Result<DMatrix<f64>> {
        let (prec, rhs) = self.n_system(state, var_n, lambda);
        let chol = cholesky_with_jitter(prec, "N update")?;
        let means = chol.solve(&rhs); // k x m, column i = mean of row i of N
        let k = means.nrows();
        let m_cols = means.ncols();
        let z = DMatrix::from_fn(k, m_cols, |_, _| StandardNormal.sample(rng));
        let noise = chol
            .l()
            .tr_solve_lower_triangular(&z)
            .ok_or_else(|| numerical("N update back-substitution", f64::NAN))?;
        Ok((means + noise).transpose())
    }
}

/// Completion data indexed by row and by column of the target matrix.
struct CompletionCtx<'a> {
    inst: &'a CompletionInstance,
    by_row: Vec<Vec<(usize, f64)>>,
    by_col: Vec<Vec<(usize, f64)>>,
}

impl<'a> CompletionCtx<'a> {
    fn new(inst: &'a CompletionInstance) -> Self {
        let mut by_row = vec![Vec::new(); inst.dims.ell];
        let mut by_col = vec![Vec::new(); inst.dims.m];
        for (&(i, j), &y) in inst.mask.iter().zip(&inst.observed) {
            by_row[i].push((j, y));
            by_col[j].push((i, y));
        }
        Self { inst, by_row, by_col }
    }

    /// Precision and right-hand side of the row-i conditional of `M`:
    /// `P_i = 2 lambda sum_(j observed) n_j n_j^T + diag(1/var)`,
    /// `h_i = 2 lambda sum_(j observed) y_ij n_j`.
    fn row_system(
        factors: &DMatrix<f64>,
        entries: &[(usize, f64)],
        var: &[f64],
        lambda: f64,
    ) -> (DMatrix<f64>, DVector<f64>) {
        let k = factors.ncols();
        let mut prec = DMatrix::zeros(k, k);
        let mut rhs = DVector::zeros(k);
        for &(idx, y) in entries {
            let row = factors.row(idx);
            for a in 0..k {
                rhs[a] += 2.0 * lambda * y * row[a];
                for b in 0..k {
                    prec[(a, b)] += 2.0 * lambda * row[a] * row[b];
                }
            }
        }
        for (j, &v) in var.iter().enumerate() {
            prec[(j, j)] += 1.0 / v;
        }
        (prec, rhs)
    }

    fn update_m<R: Rng>(
        &self,
        state: &FactorState,
        var_m: &[f64],
        lambda: f64,
        rng: &mut R,
    ) -> Result<DMatrix<f64>> {
        let mut new_m = DMatrix::zeros(state.m.nrows(), state.m.ncols());
        for i in 0..self.inst.dims.ell {
            let (prec, rhs) = Self::row_system(&state.n, &self.by_row[i], var_m, lambda);
            let draw = sample_gaussian_from_precision(prec, &rhs, rng, "completion M row")?;
            new_m.set_row(i, &draw.transpose());
        }
        Ok(new_m)
    }

    fn update_n<R: Rng>(
        &self,
        state: &FactorState,
        var_n: &[f64],
        lambda: f64,
        rng: &mut R,
    ) -> Result<DMatrix<f64>> {
        let mut new_n = DMatrix::zeros(state.n.nrows(), state.n.ncols());
        for j in 0..self.inst.dims.m {
            let (prec, rhs) = Self::row_system(&state.m, &self.by_col[j], var_n, lambda);
            let draw = sample_gaussian_from_precision(prec, &rhs, rng, "completion N row")?;
            new_n.set_row(j, &draw.transpose());
        }
        Ok(new_n)
    }
}

/// Exact draw from `N(P^{-1} h, P^{-1})` via a Cholesky factor of `P`.
fn sample_gaussian_from_precision<R: Rng>(
    prec: DMatrix<f64>,
    rhs: &DVector<f64>,
    rng: &mut R,
    context: &str,
) -> Result<DVector<f64>> {
    debug_assert!(symmetric_to(&prec, 1e-10), "{context}: precision not symmetric");
    let chol = cholesky_with_jitter(prec, context)?;
    let mean = chol.solve(rhs);
    let z = DVector::from_fn(mean.nrows(), |_, _| StandardNormal.sample(rng));
    let noise = chol
        .l()
        .tr_solve_lower_triangular(&z)
        .ok_or_else(|| numerical(context, f64::NAN))?;
    Ok(mean + noise)
}

/// Cholesky with an escalating diagonal jitter; reports a diagonal-based
/// condition estimate when every attempt fails.
fn cholesky_with_jitter(mat: DMatrix<f64>, context: &str) -> Result<Cholesky<f64, Dyn>> {
    let n = mat.nrows();
    let diag_mean = mat.diagonal().mean();
    if let Some(chol) = Cholesky::new(mat.clone()) {
        return Ok(chol);
    }
    for eps in JITTER_LADDER {
        let mut jittered = mat.clone();
        for i in 0..n {
            jittered[(i, i)] += eps * diag_mean;
        }
        if let Some(chol) = Cholesky::new(jittered) {
            return Ok(chol);
        }
    }
    let diag = mat.diagonal();
    let condition = diag.max() / diag.min().max(f64::MIN_POSITIVE);
    Err(numerical(context, condition))
}

fn symmetric_to(mat: &DMatrix<f64>, tol: f64) -> bool {
    let scale = mat.amax().max(1.0);
    for i in 0..mat.nrows() {
        for j in (i + 1)..mat.ncols() {
            if (mat[(i, j)] - mat[(j, i)]).abs() > tol * scale {
                return false;
            }
        }
    }
    true
}

fn numerical(context: &str, condition: f64) -> Error {
    Error::Numerical { context: context.to_string(), condition }
}
