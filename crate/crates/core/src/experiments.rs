//! Paired-ensemble studies and the spin-glass applications.
//!
//! Every replica owns a stream derived from `(seed, N, replica)`. The initial
//! condition and the Brownian path come from that stream for both arms; the
//! coupling draws use an arm-specific purpose tag unless the pairing shares
//! them too. Replicas run in parallel and are reduced in replica order, so
//! reports do not depend on the number of threads.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::ensembles::{sample_initial, sample_matrix, CoordinateLaw, CouplingMatrix, EntryDistribution, InitialLaw, ProfileSpec};
use crate::error::{Error, Result};
use crate::generator::{
    count_bound_check, difference_vanishes, expected_polynomial, expected_value, taylor_mean, taylor_mean_multitime, Generator, Letter,
    Monomial, MomentOracle, Polynomial, TaylorOptions, TaylorResult, WORD_LENGTH_CAP,
};
use crate::observables::{quad_form, ObservableSpec};
use crate::rng::RngStream;
use crate::sde::{langevin_params_with_field, simulate, IntegratorConfig, SystemParams};

/// Deterministic part of the dynamics, instantiated per sampled coupling.
#[derive(Clone, Debug, PartialEq)]
pub enum SystemTemplate {
    /// Drift `(2J - K I) x + h`, noise `β^{-1/2} dB`; `beta = ∞` is the gradient flow.
    Langevin { beta: f64, k: f64, field: f64 },
    /// Drift `(s Jᵀ + λ I) x + h`, diffusion `√2 (σ_0 + σ_d x_j)` per coordinate.
    Linear { coupling_scale: f64, lambda_diag: f64, h: f64, sigma0: f64, sigma_diag: f64 },
}

impl SystemTemplate {
    pub fn build(&self, j: &DMatrix<f64>) -> Result<SystemParams> {
        let n = j.nrows();
        match *self {
            SystemTemplate::Langevin { beta, k, field } => langevin_params_with_field(j, beta, k, &DVector::from_element(n, field)),
            SystemTemplate::Linear { coupling_scale, lambda_diag, h, sigma0, sigma_diag } => {
                let mut sigma = DMatrix::zeros(n + 1, n);
                sigma.row_mut(0).fill(sigma0);
                for i in 0..n {
                    sigma[(i + 1, i)] = sigma_diag;
                }
                SystemParams::new(j.clone(), coupling_scale, DMatrix::identity(n, n) * lambda_diag, DVector::from_element(n, h), sigma)
            }
        }
    }

    pub fn constant_diffusion(&self) -> bool {
        match self {
            SystemTemplate::Langevin { .. } => true,
            SystemTemplate::Linear { sigma_diag, .. } => *sigma_diag == 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pairing {
    /// Shared initial condition and noise, independent couplings.
    SharedNoise,
    /// Shared couplings as well; only the entry law differs.
    SharedAll,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegratorSpec {
    pub dt: f64,
    pub t_end: f64,
    /// Number of uniform grid intervals on `[0, t_end]`.
    pub intervals: usize,
}

impl IntegratorSpec {
    /// Uniform grid plus the given extra times.
    pub fn build(&self, extra: &[f64]) -> Result<IntegratorConfig> {
        let k = self.intervals.max(1);
        let mut grid: Vec<f64> = (0..=k).map(|i| self.t_end * i as f64 / k as f64).collect();
        grid.extend_from_slice(extra);
        IntegratorConfig::new(self.dt, self.t_end, &grid)
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub arms: [EntryDistribution; 2],
    pub profile: ProfileSpec,
    pub symmetric: bool,
    pub initial: CoordinateLaw,
    pub template: SystemTemplate,
    pub observables: Vec<ObservableSpec>,
    pub sizes: Vec<usize>,
    pub replicas: usize,
    pub integrator: IntegratorSpec,
    pub seed: u64,
    pub pairing: Pairing,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return Err(Error::InvalidArgument("sizes must be a nonempty list of positive dimensions".into()));
        }
        if matches!(self.template, SystemTemplate::Langevin { .. }) && !self.symmetric {
            return Err(Error::InvalidArgument("Langevin template requires a symmetric ensemble".into()));
        }
        for &n in &self.sizes {
            let p = self.profile.build(n)?;
            if self.symmetric && !p.is_symmetric() {
                return Err(Error::InvalidArgument("symmetric ensemble requires a symmetric variance profile".into()));
            }
        }
        Ok(())
    }

    fn replica_stream(&self, n: usize, r: usize) -> RngStream {
        RngStream::new(self.seed, 0).child(n as u64).child(r as u64)
    }

    fn arm_tag(&self, arm: usize) -> u32 {
        match self.pairing {
            Pairing::SharedNoise => arm as u32,
            Pairing::SharedAll => 0,
        }
    }

    fn observable_times(&self) -> Vec<f64> {
        self.observables.iter().flat_map(|o| o.times.iter().copied()).collect()
    }
}

/// Simulates one arm of one replica.
fn run_arm(cfg: &ExperimentConfig, n: usize, stream: &RngStream, arm: usize, x0: &DVector<f64>, integ: &IntegratorConfig) -> Result<crate::sde::Trajectory> {
    let profile = cfg.profile.build(n)?;
    let c = sample_matrix(cfg.arms[arm], &profile, cfg.symmetric, stream, cfg.arm_tag(arm))?;
    let params = Arc::new(cfg.template.build(&c.j)?);
    simulate(&params, x0, integ, stream)
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn std_dev(v: &[f64]) -> f64 {
    mean_se(v).1 * (v.len() as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct UniversalityRow {
    pub n: usize,
    pub observable: String,
    pub mean_diff: f64,
    pub se: f64,
    pub mean_a: f64,
    pub mean_b: f64,
    pub replicas: usize,
}

/// Least-squares slope of `log max(|Δ̂_N|, SE)` against `log N`.
#[derive(Clone, Debug, PartialEq)]
pub struct SlopeFit {
    pub observable: String,
    pub slope: f64,
    pub slope_se: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UniversalityReport {
    pub rows: Vec<UniversalityRow>,
    pub slopes: Vec<SlopeFit>,
}

impl UniversalityReport {
    pub fn rows_for(&self, observable: &str) -> Vec<&UniversalityRow> {
        self.rows.iter().filter(|r| r.observable == observable).collect()
    }

    pub fn slope_for(&self, observable: &str) -> Option<&SlopeFit> {
        self.slopes.iter().find(|s| s.observable == observable)
    }
}

pub fn fit_slope(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    if points.len() < 3 || points.iter().any(|(x, y)| !(*x > 0.0) || !(*y > 0.0)) {
        return None;
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let ssr: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum();
    Some((slope, (ssr / (k - 2.0) / sxx).sqrt()))
}

pub fn run_universality(cfg: &ExperimentConfig) -> Result<UniversalityReport> {
    cfg.validate()?;
    if cfg.replicas < 2 {
        return Err(Error::InvalidArgument("universality needs at least 2 replicas".into()));
    }
    if cfg.observables.is_empty() {
        return Err(Error::InvalidArgument("no observables configured".into()));
    }
    let integ = cfg.integrator.build(&cfg.observable_times())?;
    let law_for = |n: usize| InitialLaw::iid(n, cfg.initial);
    let mut rows = Vec::new();
    for &n in &cfg.sizes {
        let law = law_for(n);
        let per_replica: Vec<Result<Vec<[f64; 2]>>> = (0..cfg.replicas)
            .into_par_iter()
            .map(|r| {
                let stream = cfg.replica_stream(n, r);
                let x0 = sample_initial(&law, &stream);
                let mut vals = vec![[0.0; 2]; cfg.observables.len()];
                for arm in 0..2 {
                    let tr = run_arm(cfg, n, &stream, arm, &x0, &integ)?;
                    for (o, obs) in cfg.observables.iter().enumerate() {
                        vals[o][arm] = obs.eval(&tr)?;
                    }
                }
                Ok(vals)
            })
            .collect();
        let per_replica: Vec<Vec<[f64; 2]>> = per_replica.into_iter().collect::<Result<_>>()?;
        for (o, obs) in cfg.observables.iter().enumerate() {
            let diffs: Vec<f64> = per_replica.iter().map(|v| v[o][0] - v[o][1]).collect();
            let a: Vec<f64> = per_replica.iter().map(|v| v[o][0]).collect();
            let b: Vec<f64> = per_replica.iter().map(|v| v[o][1]).collect();
            let (mean_diff, se) = mean_se(&diffs);
            rows.push(UniversalityRow {
                n,
                observable: obs.name.clone(),
                mean_diff,
                se,
                mean_a: mean_se(&a).0,
                mean_b: mean_se(&b).0,
                replicas: cfg.replicas,
            });
        }
    }
    let mut slopes = Vec::new();
    for obs in &cfg.observables {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.observable == obs.name)
            .map(|r| (r.n as f64, r.mean_diff.abs().max(r.se)))
            .collect();
        if let Some((slope, se)) = fit_slope(&pts) {
            slopes.push(SlopeFit { observable: obs.name.clone(), slope, slope_se: se, lower: slope - 1.96 * se, upper: slope + 1.96 * se });
        }
    }
    Ok(UniversalityReport { rows, slopes })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConcentrationRow {
    pub n: usize,
    pub observable: String,
    /// Replica standard deviation of `sup_grid F`.
    pub sup_std: f64,
    /// Replica mean and standard deviation of `sup_grid |F - E F|`.
    pub dev_mean: f64,
    pub dev_std: f64,
    /// Fraction of replicas with `sup_grid |F - E F| > λ`, per threshold.
    pub tails: Vec<(f64, f64)>,
    pub replicas: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConcentrationReport {
    pub rows: Vec<ConcentrationRow>,
}

pub const DEFAULT_TAIL_THRESHOLDS: [f64; 5] = [0.01, 0.02, 0.05, 0.1, 0.2];

/// Fluctuations of the first arm's observables over the time grid; `E F` is
/// the replica mean at each grid point.
pub fn run_concentration(cfg: &ExperimentConfig, thresholds: &[f64]) -> Result<ConcentrationReport> {
    cfg.validate()?;
    if !cfg.template.constant_diffusion() {
        return Err(Error::InvalidArgument("concentration requires a constant-diffusion template".into()));
    }
    if cfg.replicas < 2 {
        return Err(Error::InvalidArgument("concentration needs at least 2 replicas".into()));
    }
    let integ = cfg.integrator.build(&cfg.observable_times())?;
    let mut thresholds = thresholds.to_vec();
    thresholds.sort_by(|a, b| a.total_cmp(b));
    let mut rows = Vec::new();
    for &n in &cfg.sizes {
        let law = InitialLaw::iid(n, cfg.initial);
        let per_replica: Vec<Result<Vec<Vec<f64>>>> = (0..cfg.replicas)
            .into_par_iter()
            .map(|r| {
                let stream = cfg.replica_stream(n, r);
                let x0 = sample_initial(&law, &stream);
                let tr = run_arm(cfg, n, &stream, 0, &x0, &integ)?;
                cfg.observables.iter().map(|o| o.grid_values(&tr)).collect()
            })
            .collect();
        let per_replica: Vec<Vec<Vec<f64>>> = per_replica.into_iter().collect::<Result<_>>()?;
        for (o, obs) in cfg.observables.iter().enumerate() {
            let g = per_replica[0][o].len();
            let mut mean = vec![0.0; g];
            for rep in &per_replica {
                for (m, v) in mean.iter_mut().zip(&rep[o]) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= cfg.replicas as f64);
            let sups: Vec<f64> = per_replica.iter().map(|rep| rep[o].iter().cloned().fold(f64::NEG_INFINITY, f64::max)).collect();
            let devs: Vec<f64> = per_replica
                .iter()
                .map(|rep| rep[o].iter().zip(&mean).map(|(v, m)| (v - m).abs()).fold(0.0, f64::max))
                .collect();
            let (dev_mean, _) = mean_se(&devs);
            let tails = thresholds
                .iter()
                .map(|&l| (l, devs.iter().filter(|d| **d > l).count() as f64 / devs.len() as f64))
                .collect();
            rows.push(ConcentrationRow {
                n,
                observable: obs.name.clone(),
                sup_std: std_dev(&sups),
                dev_mean,
                dev_std: std_dev(&devs),
                tails,
                replicas: cfg.replicas,
            });
        }
    }
    Ok(ConcentrationReport { rows })
}

#[derive(Clone, Debug, PartialEq)]
pub enum Confinement {
    /// `K = ‖2J‖ + margin` for each sampled coupling.
    Margin(f64),
    /// A fixed `K`; replicas with `K <= ‖2J‖` are dropped.
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgingConfig {
    pub confinement: Confinement,
    pub s_values: Vec<f64>,
    pub lambdas: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgingRow {
    pub n: usize,
    pub s: f64,
    pub lambda: f64,
    pub ratio: [f64; 2],
    pub se: [f64; 2],
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgingReport {
    pub rows: Vec<AgingRow>,
    /// Per `(N, arm)`: replicas used and dropped.
    pub used: Vec<(usize, [usize; 2])>,
    pub dropped: Vec<(usize, [usize; 2])>,
}

/// `C(s,t)` of the flow `x' = D x` through the eigenbasis of `D`, in log space:
/// `log((1/N) Σ_k c_k² e^{d_k (s+t)})`.
pub struct SpectralFlow {
    log_w: Vec<f64>,
    d: Vec<f64>,
    n: f64,
}

impl SpectralFlow {
    pub fn new(eigenvalues: &[f64], projections: &[f64], n: usize) -> Self {
        let log_w = projections.iter().map(|c| (c * c).ln()).collect();
        SpectralFlow { log_w, d: eigenvalues.to_vec(), n: n as f64 }
    }

    /// `log C(s, t)`; depends on `s + t` only.
    pub fn log_c(&self, s: f64, t: f64) -> f64 {
        let a = s + t;
        let mx = self.log_w.iter().zip(&self.d).map(|(w, d)| w + d * a).fold(f64::NEG_INFINITY, f64::max);
        if mx == f64::NEG_INFINITY {
            return mx;
        }
        let sum: f64 = self.log_w.iter().zip(&self.d).map(|(w, d)| (w + d * a - mx).exp()).sum();
        mx + sum.ln() - self.n.ln()
    }

    /// `C(s, λs) / √(C(s,s) C(λs,λs))`; exactly `1` at `λ = 1`.
    pub fn ratio(&self, s: f64, lambda: f64) -> f64 {
        if lambda == 1.0 {
            return 1.0;
        }
        let t = lambda * s;
        (self.log_c(s, t) - 0.5 * (self.log_c(s, s) + self.log_c(t, t))).exp()
    }
}

/// Eigen-exact gradient flow of `H = Σ J_ij x_i x_j` with confinement `K`:
/// `X_t = e^{(2J - K I) t} X_0`.
pub fn spectral_flow(c: &CouplingMatrix, x0: &DVector<f64>, confinement: &Confinement) -> Result<(SpectralFlow, f64, f64)> {
    let eig = c.j.clone().symmetric_eigen();
    let norm2j = 2.0 * eig.eigenvalues.amax();
    let k = match *confinement {
        Confinement::Margin(m) => norm2j + m,
        Confinement::Fixed(k) => k,
    };
    let proj = eig.eigenvectors.tr_mul(x0);
    let d: Vec<f64> = eig.eigenvalues.iter().map(|l| 2.0 * l - k).collect();
    Ok((SpectralFlow::new(&d, proj.as_slice(), c.n()), k, norm2j))
}

pub fn run_aging(cfg: &ExperimentConfig, aging: &AgingConfig) -> Result<AgingReport> {
    cfg.validate()?;
    match cfg.template {
        SystemTemplate::Langevin { beta, field, .. } if beta == f64::INFINITY && field == 0.0 => {}
        _ => return Err(Error::InvalidArgument("aging requires the Langevin template with beta = inf and no field".into())),
    }
    if aging.s_values.iter().any(|s| !(*s > 0.0)) || aging.lambdas.iter().any(|l| !(*l >= 1.0)) {
        return Err(Error::InvalidArgument("aging needs s > 0 and lambda >= 1".into()));
    }
    let mut rows = Vec::new();
    let mut used = Vec::new();
    let mut dropped = Vec::new();
    for &n in &cfg.sizes {
        let law = InitialLaw::iid(n, cfg.initial);
        let profile = cfg.profile.build(n)?;
        let per_replica: Vec<Result<[Option<Vec<f64>>; 2]>> = (0..cfg.replicas)
            .into_par_iter()
            .map(|r| {
                let stream = cfg.replica_stream(n, r);
                let x0 = sample_initial(&law, &stream);
                let mut out: [Option<Vec<f64>>; 2] = [None, None];
                for (arm, slot) in out.iter_mut().enumerate() {
                    let c = sample_matrix(cfg.arms[arm], &profile, cfg.symmetric, &stream, cfg.arm_tag(arm))?;
                    let (flow, k, norm2j) = spectral_flow(&c, &x0, &aging.confinement)?;
                    if k <= norm2j {
                        continue;
                    }
                    let mut v = Vec::new();
                    for &s in &aging.s_values {
                        for &l in &aging.lambdas {
                            v.push(flow.ratio(s, l));
                        }
                    }
                    *slot = Some(v);
                }
                Ok(out)
            })
            .collect();
        let per_replica: Vec<[Option<Vec<f64>>; 2]> = per_replica.into_iter().collect::<Result<_>>()?;
        let mut u = [0usize; 2];
        let mut dr = [0usize; 2];
        for rep in &per_replica {
            for arm in 0..2 {
                if rep[arm].is_some() {
                    u[arm] += 1;
                } else {
                    dr[arm] += 1;
                }
            }
        }
        used.push((n, u));
        dropped.push((n, dr));
        let mut idx = 0;
        for &s in &aging.s_values {
            for &l in &aging.lambdas {
                let mut ratio = [f64::NAN; 2];
                let mut se = [f64::NAN; 2];
                for arm in 0..2 {
                    let vals: Vec<f64> = per_replica.iter().filter_map(|rep| rep[arm].as_ref().map(|v| v[idx])).collect();
                    if !vals.is_empty() {
                        let (m, e) = mean_se(&vals);
                        ratio[arm] = m;
                        se[arm] = e;
                    }
                }
                rows.push(AgingRow { n, s, lambda: l, ratio, se, gap: (ratio[0] - ratio[1]).abs() });
                idx += 1;
            }
        }
    }
    Ok(AgingReport { rows, used, dropped })
}

/// Small-system comparison of the symbolic series against Monte Carlo.
#[derive(Clone, Debug)]
pub struct TaylorCheckConfig {
    pub n: usize,
    pub dist: EntryDistribution,
    pub profile: ProfileSpec,
    pub symmetric: bool,
    pub initial: CoordinateLaw,
    pub template: SystemTemplate,
    /// One polynomial per time; more than one gives the multi-time product.
    pub polys: Vec<Polynomial>,
    pub times: Vec<f64>,
    pub order: usize,
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaylorCheckReport {
    pub series: TaylorResult,
    pub mc_mean: f64,
    pub mc_se: f64,
    pub z: f64,
    /// The series terms stopped decreasing at the truncation order.
    pub divergence_warning: bool,
}

pub const TAYLOR_CHECK_MAX_N: usize = 4;
pub const TAYLOR_CHECK_MAX_T: f64 = 0.5;

pub fn run_taylor_vs_mc(cfg: &TaylorCheckConfig) -> Result<TaylorCheckReport> {
    if cfg.n == 0 || cfg.n > TAYLOR_CHECK_MAX_N {
        return Err(Error::InvalidArgument(format!("taylor check needs 1 <= N <= {TAYLOR_CHECK_MAX_N}")));
    }
    if cfg.polys.is_empty() || cfg.polys.len() != cfg.times.len() {
        return Err(Error::InvalidArgument("need one time per polynomial".into()));
    }
    if cfg.times.iter().any(|t| !(*t >= 0.0) || *t > TAYLOR_CHECK_MAX_T) {
        return Err(Error::InvalidArgument(format!("taylor check times must lie in [0, {TAYLOR_CHECK_MAX_T}]")));
    }
    if cfg.paths < 2 {
        return Err(Error::InvalidArgument("need at least 2 Monte Carlo paths".into()));
    }
    let n = cfg.n;
    let profile = cfg.profile.build(n)?;
    let law = InitialLaw::iid(n, cfg.initial);
    let oracle = MomentOracle::new(cfg.dist, profile.clone(), cfg.symmetric, law.clone())?;
    let skeleton = cfg.template.build(&DMatrix::zeros(n, n))?;
    let gen = Generator::symbolic(&skeleton, cfg.symmetric);
    let opts = TaylorOptions::symbolic(cfg.order);
    let series = if cfg.polys.len() == 1 {
        taylor_mean(&cfg.polys[0], &gen, &oracle, cfg.times[0], &opts)?
    } else {
        taylor_mean_multitime(&cfg.polys, &cfg.times, &gen, &oracle, &opts)?
    };

    // Control variate: the same product evaluated at time zero has a known mean.
    let product = cfg.polys.iter().skip(1).fold(cfg.polys[0].clone(), |acc, p| acc.mul(p));
    let exact0 = expected_polynomial(&product, &oracle);
    let t_end = cfg.times.iter().cloned().fold(0.0, f64::max);
    let integ = IntegratorConfig::new(cfg.dt, t_end, &cfg.times)?;
    let diffs: Vec<Result<f64>> = (0..cfg.paths)
        .into_par_iter()
        .map(|r| {
            let stream = RngStream::new(cfg.seed, 0).child(n as u64).child(r as u64);
            let x0 = sample_initial(&law, &stream);
            let c = sample_matrix(cfg.dist, &profile, cfg.symmetric, &stream, 0)?;
            let params = Arc::new(skeleton.with_coupling(c.j.clone())?);
            let tr = simulate(&params, &x0, &integ, &stream)?;
            let mut at_t = 1.0;
            let mut at_0 = 1.0;
            for (p, &t) in cfg.polys.iter().zip(&cfg.times) {
                at_t *= p.evaluate(tr.x_at(t)?.as_slice(), &c.j);
                at_0 *= p.evaluate(x0.as_slice(), &c.j);
            }
            Ok(at_t - at_0)
        })
        .collect();
    let diffs: Vec<f64> = diffs.into_iter().collect::<Result<_>>()?;
    let (md, se) = mean_se(&diffs);
    let mc_mean = md + exact0;
    let gap = series.value - mc_mean;
    let z = if se > 0.0 { gap / se } else if gap.abs() <= 1e-12 * mc_mean.abs().max(1.0) { 0.0 } else { f64::INFINITY };
    let divergence_warning = series.not_decreasing;
    Ok(TaylorCheckReport { series, mc_mean, mc_se: se, z, divergence_warning })
}

/// Exhaustive generator-word audit at small `N`: term counts against the
/// per-letter bound, and moment agreement of the two laws on every monomial
/// whose difference must vanish.
#[derive(Clone, Debug)]
pub struct MomentsCheckConfig {
    pub n: usize,
    pub dists: [EntryDistribution; 2],
    pub profile: ProfileSpec,
    pub symmetric: bool,
    pub initial: CoordinateLaw,
    pub template: SystemTemplate,
    pub polys: Vec<Polynomial>,
    pub max_word: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentsRow {
    pub seed: String,
    pub word: Vec<Letter>,
    pub actual: u128,
    pub bound: u128,
    pub monomials: usize,
    pub vanishing: usize,
    /// Largest `|E_a - E_b|` over monomials whose difference must vanish.
    pub max_vanishing_gap: f64,
    /// Largest `|E_a - E_b|` over all monomials of the expansion.
    pub max_gap: f64,
}

impl MomentsRow {
    pub fn word_label(&self) -> String {
        if self.word.is_empty() {
            return "id".into();
        }
        self.word.iter().map(|l| l.symbol()).collect::<Vec<_>>().join(".")
    }
}

/// All words over the four letters of length `1..=max_len`, shortest first.
pub fn all_words(max_len: usize) -> Vec<Vec<Letter>> {
    let mut out = Vec::new();
    let mut layer: Vec<Vec<Letter>> = vec![Vec::new()];
    for _ in 0..max_len {
        layer = layer
            .iter()
            .flat_map(|w| {
                Letter::ALL.iter().map(move |l| {
                    let mut w = w.clone();
                    w.push(*l);
                    w
                })
            })
            .collect();
        out.extend(layer.iter().cloned());
    }
    out
}

pub fn run_moments_check(cfg: &MomentsCheckConfig) -> Result<Vec<MomentsRow>> {
    if cfg.max_word > WORD_LENGTH_CAP {
        return Err(Error::CapExceeded { what: "word length", requested: cfg.max_word, cap: WORD_LENGTH_CAP });
    }
    let profile = cfg.profile.build(cfg.n)?;
    let law = InitialLaw::iid(cfg.n, cfg.initial);
    let oracles = [
        MomentOracle::new(cfg.dists[0], profile.clone(), cfg.symmetric, law.clone())?,
        MomentOracle::new(cfg.dists[1], profile, cfg.symmetric, law)?,
    ];
    let skeleton = cfg.template.build(&DMatrix::zeros(cfg.n, cfg.n))?;
    let gen = Generator::symbolic(&skeleton, cfg.symmetric);
    let seeds: Vec<Monomial> = cfg.polys.iter().flat_map(|p| p.monomials()).collect();
    let words = all_words(cfg.max_word);
    let jobs: Vec<(usize, usize)> = (0..seeds.len()).flat_map(|s| (0..words.len()).map(move |w| (s, w))).collect();
    let rows: Vec<Result<MomentsRow>> = jobs
        .par_iter()
        .map(|&(s, w)| {
            let f0 = &seeds[s];
            let word = &words[w];
            let count = count_bound_check(&gen, word, f0)?;
            let terms = gen.expand_word(f0, word)?;
            let mut vanishing = 0;
            let mut max_vanishing_gap: f64 = 0.0;
            let mut max_gap: f64 = 0.0;
            for m in &terms {
                let gap = (expected_value(m, &oracles[0]) - expected_value(m, &oracles[1])).abs();
                max_gap = max_gap.max(gap);
                if difference_vanishes(m, &[], cfg.symmetric)? {
                    vanishing += 1;
                    max_vanishing_gap = max_vanishing_gap.max(gap);
                }
            }
            Ok(MomentsRow {
                seed: Polynomial::from_monomial(f0.clone()).to_string(),
                word: word.clone(),
                actual: count.actual,
                bound: count.bound,
                monomials: terms.len(),
                vanishing,
                max_vanishing_gap,
                max_gap,
            })
        })
        .collect();
    rows.into_iter().collect()
}

/// Default observables of the associative-memory application at horizon `t`.
pub fn hopfield_suite(t: f64) -> Vec<ObservableSpec> {
    vec![
        ObservableSpec::autocorr("autocorr", t, t),
        ObservableSpec::hamiltonian("energy", t),
        ObservableSpec::grad_sq("grad_sq", t),
        ObservableSpec::autocorr("overlap", t, 0.0),
    ]
}

/// Universality run for Langevin dynamics with thresholds; uses the default
/// suite when no observables are configured.
pub fn run_hopfield(cfg: &ExperimentConfig) -> Result<UniversalityReport> {
    if !matches!(cfg.template, SystemTemplate::Langevin { .. }) {
        return Err(Error::InvalidArgument("hopfield requires the Langevin template".into()));
    }
    let mut cfg = cfg.clone();
    if cfg.observables.is_empty() {
        cfg.observables = hopfield_suite(cfg.integrator.t_end);
    }
    run_universality(&cfg)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RayleighRow {
    pub arm: usize,
    pub replica: usize,
    pub time: f64,
    pub quotient: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RayleighSummary {
    pub arm: usize,
    pub replica: usize,
    pub top_eigenvalue: f64,
    pub final_quotient: f64,
    pub gap: f64,
    pub monotone: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RayleighReport {
    pub n: usize,
    pub rows: Vec<RayleighRow>,
    pub summaries: Vec<RayleighSummary>,
    /// Largest gap between the two arms' replica-mean quotients over the grid.
    pub max_arm_gap: f64,
}

/// Relative slack allowed in the step-to-step monotonicity check.
pub const MONOTONE_RTOL: f64 = 1e-12;

pub fn rayleigh_quotient(j: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    quad_form(j, x) / x.norm_squared()
}

/// Quotients along the Euler gradient flow of `H` started at `x0`.
pub fn rayleigh_path(j: &DMatrix<f64>, x0: &DVector<f64>, k: f64, integ: &IntegratorConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    let params = Arc::new(langevin_params_with_field(j, f64::INFINITY, k, &DVector::zeros(j.nrows()))?);
    let tr = simulate(&params, x0, integ, &RngStream::new(0, 0))?;
    let q = tr.x.iter().map(|x| rayleigh_quotient(j, x)).collect();
    Ok((tr.times.clone(), q))
}

pub fn is_monotone(q: &[f64]) -> bool {
    q.windows(2).all(|w| w[1] >= w[0] - MONOTONE_RTOL * w[0].abs().max(1e-300))
}

/// Gradient ascent on the Rayleigh quotient for both arms. Uses the first
/// entry of `sizes` and the template's confinement.
pub fn run_rayleigh(cfg: &ExperimentConfig) -> Result<RayleighReport> {
    cfg.validate()?;
    let k = match cfg.template {
        SystemTemplate::Langevin { beta, k, field } if beta == f64::INFINITY && field == 0.0 => k,
        _ => return Err(Error::InvalidArgument("rayleigh requires the Langevin template with beta = inf and no field".into())),
    };
    let n = cfg.sizes[0];
    let integ = cfg.integrator.build(&[])?;
    let law = InitialLaw::iid(n, cfg.initial);
    let profile = cfg.profile.build(n)?;
    let per_replica: Vec<Result<Vec<(Vec<f64>, f64)>>> = (0..cfg.replicas.max(1))
        .into_par_iter()
        .map(|r| {
            let stream = cfg.replica_stream(n, r);
            let x0 = sample_initial(&law, &stream);
            (0..2)
                .map(|arm| {
                    let c = sample_matrix(cfg.arms[arm], &profile, cfg.symmetric, &stream, cfg.arm_tag(arm))?;
                    let top = c.j.clone().symmetric_eigen().eigenvalues.max();
                    let (_, q) = rayleigh_path(&c.j, &x0, k, &integ)?;
                    Ok((q, top))
                })
                .collect()
        })
        .collect();
    let per_replica: Vec<Vec<(Vec<f64>, f64)>> = per_replica.into_iter().collect::<Result<_>>()?;
    let times = integ.snapped_times();
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for (r, arms) in per_replica.iter().enumerate() {
        for (arm, (q, top)) in arms.iter().enumerate() {
            for (t, v) in times.iter().zip(q) {
                rows.push(RayleighRow { arm, replica: r, time: *t, quotient: *v });
            }
            let last = *q.last().unwrap_or(&f64::NAN);
            summaries.push(RayleighSummary { arm, replica: r, top_eigenvalue: *top, final_quotient: last, gap: top - last, monotone: is_monotone(q) });
        }
    }
    let reps = per_replica.len() as f64;
    let mut max_arm_gap: f64 = 0.0;
    for g in 0..times.len() {
        let m0: f64 = per_replica.iter().map(|a| a[0].0[g]).sum::<f64>() / reps;
        let m1: f64 = per_replica.iter().map(|a| a[1].0[g]).sum::<f64>() / reps;
        max_arm_gap = max_arm_gap.max((m0 - m1).abs());
    }
    Ok(RayleighReport { n, rows, summaries, max_arm_gap })
}
