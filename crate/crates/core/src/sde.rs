//! Linear stochastic differential systems with affine diffusion.
//!
//! `dX_j = (s·Σ_i J_ij X_i + Σ_i Λ_ij X_i + h_j) dt + √2 (Σ_{i=0}^N σ_ij X_i) dB_j`
//! with `X_0 ≡ 1`. The scale `s` is `1` for a plain system and `2` for
//! Langevin dynamics, where the drift is the gradient of `Σ J_ij x_i x_j`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::expm;
use crate::rng::{Purpose, RngStream};

/// Bound constants of the deterministic parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamBounds {
    pub c_lambda: f64,
    pub n_lambda: usize,
    pub c_h: f64,
    pub c_sigma: f64,
    pub n_sigma: usize,
}

#[derive(Clone, Debug)]
pub struct SystemParams {
    j: DMatrix<f64>,
    j_scale: f64,
    lambda: DMatrix<f64>,
    h: DVector<f64>,
    sigma: DMatrix<f64>,
    bounds: ParamBounds,
    constant_diffusion: bool,
    drift_matrix: DMatrix<f64>,
}

impl SystemParams {
    /// `sigma` is `(N+1) x N`; row 0 holds the constant diffusion coefficients.
    pub fn new(j: DMatrix<f64>, j_scale: f64, lambda: DMatrix<f64>, h: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let n = j.nrows();
        if j.ncols() != n {
            return Err(Error::Dimension(format!("J is {}x{}", j.nrows(), j.ncols())));
        }
        if lambda.shape() != (n, n) {
            return Err(Error::Dimension(format!("Lambda is {:?}, expected ({n}, {n})", lambda.shape())));
        }
        if h.len() != n {
            return Err(Error::Dimension(format!("h has length {}, expected {n}", h.len())));
        }
        if sigma.shape() != (n + 1, n) {
            return Err(Error::Dimension(format!("sigma is {:?}, expected ({}, {n})", sigma.shape(), n + 1)));
        }
        let all_finite = j.iter().chain(lambda.iter()).chain(h.iter()).chain(sigma.iter()).all(|v| v.is_finite());
        if !all_finite || !j_scale.is_finite() {
            return Err(Error::InvalidArgument("system parameters must be finite".into()));
        }
        let bounds = infer_bounds(&lambda, &h, &sigma);
        let constant_diffusion = sigma.rows(1, n).iter().all(|v| *v == 0.0);
        let drift_matrix = j.transpose() * j_scale + lambda.transpose();
        Ok(SystemParams { j, j_scale, lambda, h, sigma, bounds, constant_diffusion, drift_matrix })
    }

    /// Plain system (`s = 1`).
    pub fn linear(j: DMatrix<f64>, lambda: DMatrix<f64>, h: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        Self::new(j, 1.0, lambda, h, sigma)
    }

    /// Checks the parameters against user-declared bound constants and keeps them.
    pub fn with_declared_bounds(mut self, declared: ParamBounds) -> Result<Self> {
        let n = self.n();
        let fail = |what: String| Err(Error::InvalidArgument(format!("declared bound violated: {what}")));
        let row_sum = (0..n).map(|i| self.lambda.row(i).abs().sum()).fold(0.0, f64::max);
        let col_sum = (0..n).map(|j| self.lambda.column(j).abs().sum()).fold(0.0, f64::max);
        if row_sum.max(col_sum) > declared.c_lambda {
            return fail(format!("Lambda row/column sums {} > C_Lambda {}", row_sum.max(col_sum), declared.c_lambda));
        }
        if declared.n_lambda == 0 || declared.n_sigma == 0 {
            return fail("sparsity counts must be at least 1".into());
        }
        let lmax = self.lambda.abs().max();
        if lmax > declared.c_lambda / declared.n_lambda as f64 {
            return fail(format!("max |Lambda_ij| = {lmax} > C_Lambda/N_Lambda"));
        }
        let hmax = self.h.abs().max();
        if hmax > declared.c_h {
            return fail(format!("max |h_i| = {hmax} > C_h {}", declared.c_h));
        }
        let s0 = self.sigma.row(0).abs().max();
        if s0 > declared.c_sigma {
            return fail(format!("max |sigma_0j| = {s0} > C_sigma {}", declared.c_sigma));
        }
        let s1 = if n > 0 { self.sigma.rows(1, n).abs().max() } else { 0.0 };
        if s1 > declared.c_sigma / declared.n_sigma as f64 {
            return fail(format!("max |sigma_ij| (i >= 1) = {s1} > C_sigma/N_sigma"));
        }
        self.bounds = declared;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.j.nrows()
    }
    pub fn j(&self) -> &DMatrix<f64> {
        &self.j
    }
    pub fn j_scale(&self) -> f64 {
        self.j_scale
    }
    pub fn lambda(&self) -> &DMatrix<f64> {
        &self.lambda
    }
    pub fn h(&self) -> &DVector<f64> {
        &self.h
    }
    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }
    pub fn bounds(&self) -> ParamBounds {
        self.bounds
    }
    pub fn constant_diffusion(&self) -> bool {
        self.constant_diffusion
    }
    pub fn is_noiseless(&self) -> bool {
        self.sigma.iter().all(|v| *v == 0.0)
    }

    /// `s·Jᵀ + Λᵀ`, so that the drift is `D x + h`.
    pub fn drift_matrix(&self) -> &DMatrix<f64> {
        &self.drift_matrix
    }

    /// Same system with a different coupling matrix.
    pub fn with_coupling(&self, j: DMatrix<f64>) -> Result<Self> {
        Self::new(j, self.j_scale, self.lambda.clone(), self.h.clone(), self.sigma.clone())
    }

    pub fn drift(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        let mut out = self.h.clone();
        out.gemv(1.0, &self.drift_matrix, x, 1.0);
        Ok(out)
    }

    /// Component `j` is `√2 (σ_0j + Σ_{i>=1} σ_ij x_i)`.
    pub fn diffusion_row(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        let mut out = DVector::zeros(self.n());
        self.diffusion_into(x, &mut out);
        Ok(out)
    }

    fn diffusion_into(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        let n = self.n();
        for j in 0..n {
            out[j] = self.sigma[(0, j)];
        }
        if !self.constant_diffusion {
            out.gemv_tr(1.0, &self.sigma.rows(1, n), x, 1.0);
        }
        *out *= std::f64::consts::SQRT_2;
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::Dimension(format!("state has length {}, system has N = {}", x.len(), self.n())));
        }
        Ok(())
    }
}

fn infer_bounds(lambda: &DMatrix<f64>, h: &DVector<f64>, sigma: &DMatrix<f64>) -> ParamBounds {
    let n = lambda.nrows();
    let row_sum = (0..n).map(|i| lambda.row(i).abs().sum()).fold(0.0, f64::max);
    let col_sum = (0..n).map(|j| lambda.column(j).abs().sum()).fold(0.0, f64::max);
    let n_lambda = (0..n).map(|j| lambda.column(j).iter().filter(|v| **v != 0.0).count()).max().unwrap_or(0).max(1);
    let lmax = if n > 0 { lambda.abs().max() } else { 0.0 };
    let c_lambda = row_sum.max(col_sum).max(n_lambda as f64 * lmax);
    let c_h = if n > 0 { h.abs().max() } else { 0.0 };
    let n_sigma = (0..n).map(|j| sigma.column(j).iter().filter(|v| **v != 0.0).count()).max().unwrap_or(0).max(1);
    let s0 = if n > 0 { sigma.row(0).abs().max() } else { 0.0 };
    let s1 = if n > 0 { sigma.rows(1, n).abs().max() } else { 0.0 };
    ParamBounds { c_lambda, n_lambda, c_h, c_sigma: s0.max(n_sigma as f64 * s1), n_sigma }
}

/// Euler–Maruyama settings. Requested snapshot times are rounded to the step grid.
#[derive(Clone, Debug, PartialEq)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_end: f64,
    requested: Vec<f64>,
    steps: Vec<usize>,
    total_steps: usize,
}

impl IntegratorConfig {
    pub fn new(dt: f64, t_end: f64, grid: &[f64]) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        if !(t_end >= 0.0) || !t_end.is_finite() {
            return Err(Error::InvalidArgument(format!("horizon must be nonnegative, got {t_end}")));
        }
        let total_steps = (t_end / dt).round() as usize;
        let mut requested: Vec<f64> = grid.to_vec();
        if requested.iter().any(|t| !t.is_finite() || *t < 0.0 || *t > t_end * (1.0 + 1e-12) + 1e-12) {
            return Err(Error::InvalidArgument(format!("snapshot times must lie in [0, {t_end}]")));
        }
        requested.sort_by(|a, b| a.total_cmp(b));
        let mut steps: Vec<usize> = requested.iter().map(|t| ((t / dt).round() as usize).min(total_steps)).collect();
        steps.dedup();
        Ok(IntegratorConfig { dt, t_end, requested, steps, total_steps })
    }

    /// Grid `0, T/k, ..., T`.
    pub fn uniform(dt: f64, t_end: f64, intervals: usize) -> Result<Self> {
        let k = intervals.max(1);
        let grid: Vec<f64> = (0..=k).map(|i| t_end * i as f64 / k as f64).collect();
        Self::new(dt, t_end, &grid)
    }

    pub fn requested_times(&self) -> &[f64] {
        &self.requested
    }

    pub fn snapshot_steps(&self) -> &[usize] {
        &self.steps
    }

    pub fn snapped_times(&self) -> Vec<f64> {
        self.steps.iter().map(|&k| k as f64 * self.dt).collect()
    }

    pub fn total_steps(&self) -> usize {
        self.total_steps
    }
}

/// Snapshots of one realization on the integrator grid.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub steps: Vec<usize>,
    /// Times as requested, before rounding to the step grid.
    pub requested_times: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub m: Vec<DVector<f64>>,
    pub x0: DVector<f64>,
    pub params: Arc<SystemParams>,
    pub dt: f64,
}

impl Trajectory {
    pub fn n(&self) -> usize {
        self.x0.len()
    }

    /// Index of a grid time; accepts either the snapped or the requested value.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let tol = 1e-9 * t.abs().max(1.0);
        if let Some(k) = self.times.iter().position(|s| (s - t).abs() <= tol) {
            return Ok(k);
        }
        if let Some(r) = self.requested_times.iter().position(|s| (s - t).abs() <= tol) {
            let step = ((self.requested_times[r] / self.dt).round() as usize).min(*self.steps.last().unwrap_or(&0));
            if let Some(k) = self.steps.iter().position(|s| *s == step) {
                return Ok(k);
            }
        }
        Err(Error::OffGrid { time: t })
    }

    pub fn x_at(&self, t: f64) -> Result<&DVector<f64>> {
        Ok(&self.x[self.index_of(t)?])
    }

    pub fn m_at(&self, t: f64) -> Result<&DVector<f64>> {
        Ok(&self.m[self.index_of(t)?])
    }
}

/// Euler–Maruyama integration. One standard normal is drawn per coordinate
/// per step from the `Brownian` purpose of `stream`; no draws are made when
/// the diffusion vanishes identically.
pub fn simulate(params: &Arc<SystemParams>, x0: &DVector<f64>, cfg: &IntegratorConfig, stream: &RngStream) -> Result<Trajectory> {
    let n = params.n();
    if x0.len() != n {
        return Err(Error::Dimension(format!("x0 has length {}, system has N = {n}", x0.len())));
    }
    let noiseless = params.is_noiseless();
    let mut rng = stream.rng(Purpose::Brownian);
    let sqrt_dt = cfg.dt.sqrt();
    let d = params.drift_matrix();

    let mut x = x0.clone();
    let mut m = DVector::zeros(n);
    let mut incr = DVector::zeros(n);
    let mut diff = DVector::zeros(n);
    let mut xs = Vec::with_capacity(cfg.steps.len());
    let mut ms = Vec::with_capacity(cfg.steps.len());
    let mut next_snap = 0;

    for step in 0..=cfg.total_steps {
        while next_snap < cfg.steps.len() && cfg.steps[next_snap] == step {
            xs.push(x.clone());
            ms.push(m.clone());
            next_snap += 1;
        }
        if step == cfg.total_steps {
            break;
        }
        // incr = dt * (D x + h)
        incr.copy_from(params.h());
        incr.gemv(cfg.dt, d, &x, cfg.dt);
        if noiseless {
            x += &incr;
        } else {
            params.diffusion_into(&x, &mut diff);
            for j in 0..n {
                let xi: f64 = rng.sample(StandardNormal);
                diff[j] *= sqrt_dt * xi;
            }
            m += &diff;
            incr += &diff;
            x += &incr;
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { step: step + 1 });
        }
    }
    Ok(Trajectory {
        times: cfg.snapped_times(),
        steps: cfg.steps.clone(),
        requested_times: cfg.requested.clone(),
        x: xs,
        m: ms,
        x0: x0.clone(),
        params: Arc::clone(params),
        dt: cfg.dt,
    })
}

/// `E_B[X_t]` for fixed coupling: `e^{Dt} x0 + ∫_0^t e^{D(t-s)} h ds`, taken from
/// the exponential of the augmented matrix `[[D, h], [0, 0]]`.
pub fn exact_mean_linear(params: &SystemParams, x0: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
    if !params.constant_diffusion() {
        return Err(Error::InvalidArgument("closed-form mean requires constant diffusion".into()));
    }
    let n = params.n();
    if x0.len() != n {
        return Err(Error::Dimension(format!("x0 has length {}, system has N = {n}", x0.len())));
    }
    let mut aug = DMatrix::zeros(n + 1, n + 1);
    aug.view_mut((0, 0), (n, n)).copy_from(&(params.drift_matrix() * t));
    aug.view_mut((0, n), (n, 1)).copy_from(&(params.h() * t));
    let e = expm(&aug);
    let mut out = e.view((0, n), (n, 1)).column(0).into_owned();
    out.gemv(1.0, &e.view((0, 0), (n, n)), x0, 1.0);
    Ok(out)
}

/// Langevin dynamics for `H(x) = Σ J_ij x_i x_j` with confinement `K` and inverse
/// temperature `beta`: drift `(2J - K I) x`, noise `β^{-1/2} dB`. `beta = ∞` gives
/// the gradient flow.
pub fn langevin_params(j: &DMatrix<f64>, beta: f64, k: f64) -> Result<SystemParams> {
    langevin_params_with_field(j, beta, k, &DVector::zeros(j.nrows()))
}

/// Langevin dynamics with an additional constant field (thresholds) `h`.
pub fn langevin_params_with_field(j: &DMatrix<f64>, beta: f64, k: f64, h: &DVector<f64>) -> Result<SystemParams> {
    if j.nrows() != j.ncols() || *j != j.transpose() {
        return Err(Error::InvalidArgument("Langevin dynamics require a symmetric coupling matrix".into()));
    }
    langevin_unchecked(j, beta, k, h)
}

/// Same as [`langevin_params_with_field`] without the symmetry check; the drift
/// is then `(2Jᵀ - K I) x + h`.
pub(crate) fn langevin_unchecked(j: &DMatrix<f64>, beta: f64, k: f64, h: &DVector<f64>) -> Result<SystemParams> {
    if !(beta > 0.0) {
        return Err(Error::InvalidArgument(format!("inverse temperature must be positive, got {beta}")));
    }
    if !(k >= 0.0) || !k.is_finite() {
        return Err(Error::InvalidArgument(format!("confinement must be nonnegative, got {k}")));
    }
    let n = j.nrows();
    let mut sigma = DMatrix::zeros(n + 1, n);
    if beta.is_finite() {
        let s0 = 1.0 / (2.0 * beta).sqrt();
        sigma.row_mut(0).fill(s0);
    }
    SystemParams::new(j.clone(), 2.0, DMatrix::identity(n, n) * -k, h.clone(), sigma)
}
