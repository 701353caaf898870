//! Observables evaluated on trajectory snapshots.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{operator_norm, DEFAULT_NORM_TOL};
use crate::sde::Trajectory;

/// Per-coordinate building block of an observable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BuildingBlock {
    One,
    X,
    /// `G_i = Σ_k J_ki X_k`.
    G,
    M,
}

impl BuildingBlock {
    pub fn name(self) -> &'static str {
        match self {
            BuildingBlock::One => "one",
            BuildingBlock::X => "x",
            BuildingBlock::G => "g",
            BuildingBlock::M => "m",
        }
    }
}

impl fmt::Display for BuildingBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BuildingBlock {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one" => Ok(BuildingBlock::One),
            "x" => Ok(BuildingBlock::X),
            "g" => Ok(BuildingBlock::G),
            "m" => Ok(BuildingBlock::M),
            _ => Err(Error::InvalidArgument(format!("unknown building block {s:?} (expected one, x, g or m)"))),
        }
    }
}

/// The whole block vector `(Y_1(t), ..., Y_N(t))`.
pub fn block_vector(traj: &Trajectory, b: BuildingBlock, t: f64) -> Result<DVector<f64>> {
    let k = traj.index_of(t)?;
    Ok(block_vector_at(traj, b, k))
}

fn block_vector_at(traj: &Trajectory, b: BuildingBlock, k: usize) -> DVector<f64> {
    match b {
        BuildingBlock::One => DVector::from_element(traj.n(), 1.0),
        BuildingBlock::X => traj.x[k].clone(),
        BuildingBlock::G => traj.params.j().tr_mul(&traj.x[k]),
        BuildingBlock::M => traj.m[k].clone(),
    }
}

pub fn eval_block(traj: &Trajectory, b: BuildingBlock, i: usize, t: f64) -> Result<f64> {
    let k = traj.index_of(t)?;
    let n = traj.n();
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, dim: n });
    }
    Ok(match b {
        BuildingBlock::One => 1.0,
        BuildingBlock::X => traj.x[k][i],
        BuildingBlock::G => traj.params.j().column(i).dot(&traj.x[k]),
        BuildingBlock::M => traj.m[k][i],
    })
}

/// Weight vector `a` of a quadratic observable.
#[derive(Clone, Debug, PartialEq)]
pub enum VectorWeights {
    Fill(f64),
    Dense(DVector<f64>),
}

impl VectorWeights {
    fn sup(&self) -> f64 {
        match self {
            VectorWeights::Fill(c) => c.abs(),
            VectorWeights::Dense(v) => v.amax(),
        }
    }

    fn get(&self, i: usize) -> f64 {
        match self {
            VectorWeights::Fill(c) => *c,
            VectorWeights::Dense(v) => v[i],
        }
    }
}

/// `F = (1/N) Σ_i a_i Y_i(t) Y'_i(t')`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticObservable {
    pub a: VectorWeights,
    pub y: BuildingBlock,
    pub y2: BuildingBlock,
    pub t: f64,
    pub t2: f64,
}

impl QuadraticObservable {
    pub fn new(a: VectorWeights, c_a: f64, y: BuildingBlock, y2: BuildingBlock, t: f64, t2: f64) -> Result<Self> {
        if a.sup() > c_a {
            return Err(Error::InvalidArgument(format!("weights exceed bound: |a|_inf = {} > {c_a}", a.sup())));
        }
        Ok(QuadraticObservable { a, y, y2, t, t2 })
    }
}

pub fn eval_quadratic(traj: &Trajectory, obs: &QuadraticObservable) -> Result<f64> {
    let n = traj.n();
    if let VectorWeights::Dense(v) = &obs.a {
        if v.len() != n {
            return Err(Error::Dimension(format!("weights have length {}, system has N = {n}", v.len())));
        }
    }
    let u = block_vector(traj, obs.y, obs.t)?;
    let w = block_vector(traj, obs.y2, obs.t2)?;
    let mut acc = 0.0;
    for i in 0..n {
        acc += obs.a.get(i) * u[i] * w[i];
    }
    Ok(acc / n as f64)
}

pub type WeightCallback = Arc<dyn Fn(&[usize]) -> f64 + Send + Sync>;

/// Weight tensor `a_{i_1...i_m}`.
#[derive(Clone)]
pub enum TensorWeights {
    Fill(f64),
    Dense1(DVector<f64>),
    Dense2(DMatrix<f64>),
    Callback(WeightCallback),
    /// Explicit nonzero entries; the only option for arity above three.
    Sparse(Vec<(Vec<usize>, f64)>),
}

impl fmt::Debug for TensorWeights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TensorWeights::Fill(c) => write!(f, "Fill({c})"),
            TensorWeights::Dense1(v) => write!(f, "Dense1({} entries)", v.len()),
            TensorWeights::Dense2(m) => write!(f, "Dense2({}x{})", m.nrows(), m.ncols()),
            TensorWeights::Callback(_) => write!(f, "Callback"),
            TensorWeights::Sparse(e) => write!(f, "Sparse({} entries)", e.len()),
        }
    }
}

pub const MAX_DENSE_ARITY: usize = 3;

/// `F(t) = N^{-m} Σ a_{i_1...i_m} Π_l F^{(l)}_{i_l}(t)` with
/// `F^{(l)}_i(t) = Π_k Y^{(l,k)}_i(t_k)`.
#[derive(Clone, Debug)]
pub struct TensorObservable {
    pub a: TensorWeights,
    pub c_a: f64,
    /// `blocks[l][k]`: `m` rows of `p` blocks each.
    pub blocks: Vec<Vec<BuildingBlock>>,
    pub times: Vec<f64>,
}

impl TensorObservable {
    pub fn new(a: TensorWeights, c_a: f64, blocks: Vec<Vec<BuildingBlock>>, times: Vec<f64>) -> Result<Self> {
        let m = blocks.len();
        if m == 0 {
            return Err(Error::InvalidArgument("tensor observable needs arity at least 1".into()));
        }
        if blocks.iter().any(|row| row.len() != times.len()) {
            return Err(Error::Dimension(format!("each block row needs {} entries (one per time)", times.len())));
        }
        match &a {
            TensorWeights::Fill(c) if c.abs() > c_a => return Err(bound_err(c.abs(), c_a)),
            TensorWeights::Dense1(v) => {
                if m != 1 {
                    return Err(Error::Dimension(format!("vector weights need arity 1, got {m}")));
                }
                if v.amax() > c_a {
                    return Err(bound_err(v.amax(), c_a));
                }
            }
            TensorWeights::Dense2(w) => {
                if m != 2 {
                    return Err(Error::Dimension(format!("matrix weights need arity 2, got {m}")));
                }
                if w.amax() > c_a {
                    return Err(bound_err(w.amax(), c_a));
                }
            }
            TensorWeights::Callback(_) if m > MAX_DENSE_ARITY => {
                return Err(Error::InvalidArgument(format!(
                    "arity {m} exceeds {MAX_DENSE_ARITY} for dense evaluation; supply sparse weights"
                )));
            }
            TensorWeights::Sparse(entries) => {
                for (idx, v) in entries {
                    if idx.len() != m {
                        return Err(Error::Dimension(format!("sparse entry has {} indices, arity is {m}", idx.len())));
                    }
                    if v.abs() > c_a {
                        return Err(bound_err(v.abs(), c_a));
                    }
                }
            }
            _ => {}
        }
        Ok(TensorObservable { a, c_a, blocks, times })
    }

    pub fn arity(&self) -> usize {
        self.blocks.len()
    }
}

fn bound_err(v: f64, c_a: f64) -> Error {
    Error::InvalidArgument(format!("weights exceed bound: {v} > {c_a}"))
}

pub fn eval_tensor(traj: &Trajectory, obs: &TensorObservable) -> Result<f64> {
    let idx: Vec<usize> = obs.times.iter().map(|t| traj.index_of(*t)).collect::<Result<_>>()?;
    eval_tensor_at(traj, obs, &idx)
}

fn eval_tensor_at(traj: &Trajectory, obs: &TensorObservable, idx: &[usize]) -> Result<f64> {
    let n = traj.n();
    let nf = n as f64;
    let factors: Vec<DVector<f64>> = obs
        .blocks
        .iter()
        .map(|row| {
            let mut f = DVector::from_element(n, 1.0);
            for (b, &k) in row.iter().zip(idx) {
                if *b != BuildingBlock::One {
                    f.component_mul_assign(&block_vector_at(traj, *b, k));
                }
            }
            f
        })
        .collect();
    let m = factors.len();
    Ok(match &obs.a {
        TensorWeights::Fill(c) => factors.iter().fold(*c, |acc, f| acc * f.sum() / nf),
        TensorWeights::Dense1(v) => {
            check_len(v.len(), n)?;
            v.dot(&factors[0]) / nf
        }
        TensorWeights::Dense2(w) => {
            check_len(w.nrows(), n)?;
            check_len(w.ncols(), n)?;
            factors[0].dot(&(w * &factors[1])) / (nf * nf)
        }
        TensorWeights::Callback(cb) => {
            if m > MAX_DENSE_ARITY {
                return Err(Error::InvalidArgument(format!("arity {m} too large for dense evaluation")));
            }
            let mut tuple = vec![0usize; m];
            let mut acc = 0.0;
            loop {
                let a = cb(&tuple);
                if a.abs() > obs.c_a {
                    return Err(bound_err(a.abs(), obs.c_a));
                }
                if a != 0.0 {
                    acc += a * tuple.iter().zip(&factors).map(|(&i, f)| f[i]).product::<f64>();
                }
                if !advance(&mut tuple, n) {
                    break;
                }
            }
            acc / nf.powi(m as i32)
        }
        TensorWeights::Sparse(entries) => {
            let mut acc = 0.0;
            for (tuple, a) in entries {
                let mut term = *a;
                for (&i, f) in tuple.iter().zip(&factors) {
                    if i >= n {
                        return Err(Error::IndexOutOfRange { index: i, dim: n });
                    }
                    term *= f[i];
                }
                acc += term;
            }
            acc / nf.powi(m as i32)
        }
    })
}

fn check_len(len: usize, n: usize) -> Result<()> {
    if len != n {
        return Err(Error::Dimension(format!("weights have dimension {len}, system has N = {n}")));
    }
    Ok(())
}

fn advance(tuple: &mut [usize], n: usize) -> bool {
    for slot in tuple.iter_mut().rev() {
        *slot += 1;
        if *slot < n {
            return true;
        }
        *slot = 0;
    }
    false
}

/// `C_N(s, t) = (1/N) Σ_i X_i(s) X_i(t)`.
pub fn autocorrelation(traj: &Trajectory, s: f64, t: f64) -> Result<f64> {
    let (a, b) = (traj.index_of(s)?, traj.index_of(t)?);
    Ok(traj.x[a].dot(&traj.x[b]) / traj.n() as f64)
}

/// `(1/N) Σ_ij J_ij X_i X_j`.
pub fn hamiltonian_density(traj: &Trajectory, t: f64) -> Result<f64> {
    let x = traj.x_at(t)?;
    Ok(quad_form(traj.params.j(), x) / traj.n() as f64)
}

pub fn quad_form(j: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(j * x))
}

/// `(1/N) Σ_i G_i(X_t)^2`.
pub fn grad_sq_density(traj: &Trajectory, t: f64) -> Result<f64> {
    let x = traj.x_at(t)?;
    Ok(traj.params.j().tr_mul(x).norm_squared() / traj.n() as f64)
}

/// Norm components of the localization event and the mixed norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalizationReport {
    pub x0_sq: f64,
    /// `N ‖J‖²` for the coupling as it enters the drift (`s·J`).
    pub n_j_norm_sq: f64,
    pub sup_m_sq: f64,
    pub r_effective: f64,
    /// `‖X_0‖² + N Σ_ij J_ij² + sup_t ‖M_t‖²`.
    pub mix_sq: f64,
}

pub fn localization_report(traj: &Trajectory) -> Result<LocalizationReport> {
    let n = traj.n() as f64;
    let j_eff = traj.params.j() * traj.params.j_scale();
    let norm = operator_norm(&j_eff, DEFAULT_NORM_TOL)?;
    let x0_sq = traj.x0.norm_squared();
    let sup_m_sq = traj.m.iter().map(|m| m.norm_squared()).fold(0.0, f64::max);
    let n_j_norm_sq = n * norm * norm;
    let r_effective = if n > 0.0 { (x0_sq + n_j_norm_sq + sup_m_sq) / n } else { 0.0 };
    let mix_sq = x0_sq + n * j_eff.norm_squared() + sup_m_sq;
    Ok(LocalizationReport { x0_sq, n_j_norm_sq, sup_m_sq, r_effective, mix_sq })
}

/// `(√R + C_h T) e^{(√R + C_Λ) T}`.
pub fn gronwall_bound(r: f64, c_h: f64, c_lambda: f64, t: f64) -> f64 {
    (r.sqrt() + c_h * t) * ((r.sqrt() + c_lambda) * t).exp()
}

/// Observed `sup_t ‖X_t‖/√N` over the grid together with the Gronwall bound at `R = R_eff`.
pub fn localized_growth(traj: &Trajectory) -> Result<(f64, f64)> {
    let rep = localization_report(traj)?;
    let n = traj.n() as f64;
    let sup = traj.x.iter().map(|x| x.norm()).fold(0.0, f64::max) / n.sqrt();
    let b = traj.params.bounds();
    let t_end = traj.times.last().copied().unwrap_or(0.0);
    Ok((sup, gronwall_bound(rep.r_effective, b.c_h, b.c_lambda, t_end)))
}

/// What an observable computes; the time arguments live in [`ObservableSpec`].
#[derive(Clone, Debug)]
pub enum ObservableKind {
    Quadratic { a: VectorWeights, y: BuildingBlock, y2: BuildingBlock },
    Tensor { a: TensorWeights, blocks: Vec<Vec<BuildingBlock>> },
    Autocorr,
    Hamiltonian,
    GradSq,
}

impl ObservableKind {
    pub fn name(&self) -> &'static str {
        match self {
            ObservableKind::Quadratic { .. } => "quadratic",
            ObservableKind::Tensor { .. } => "tensor",
            ObservableKind::Autocorr => "autocorr",
            ObservableKind::Hamiltonian => "hamiltonian",
            ObservableKind::GradSq => "gradsq",
        }
    }

    /// Number of time arguments.
    pub fn time_slots(&self) -> Option<usize> {
        match self {
            ObservableKind::Quadratic { .. } | ObservableKind::Autocorr => Some(2),
            ObservableKind::Hamiltonian | ObservableKind::GradSq => Some(1),
            ObservableKind::Tensor { blocks, .. } => blocks.first().map(|r| r.len()),
        }
    }
}

/// A named observable with its time arguments and weight bound.
#[derive(Clone, Debug)]
pub struct ObservableSpec {
    pub name: String,
    pub kind: ObservableKind,
    pub times: Vec<f64>,
    pub c_a: f64,
}

impl ObservableSpec {
    pub fn new(name: impl Into<String>, kind: ObservableKind, times: Vec<f64>, c_a: f64) -> Result<Self> {
        let name = name.into();
        if kind.time_slots() != Some(times.len()) {
            return Err(Error::InvalidArgument(format!(
                "observable {name:?} of kind {} needs {:?} times, got {}",
                kind.name(),
                kind.time_slots(),
                times.len()
            )));
        }
        let spec = ObservableSpec { name, kind, times, c_a };
        spec.tensor()?;
        if let ObservableKind::Quadratic { a, .. } = &spec.kind {
            if a.sup() > c_a {
                return Err(bound_err(a.sup(), c_a));
            }
        }
        Ok(spec)
    }

    pub fn autocorr(name: &str, s: f64, t: f64) -> Self {
        ObservableSpec { name: name.into(), kind: ObservableKind::Autocorr, times: vec![s, t], c_a: 1.0 }
    }

    pub fn hamiltonian(name: &str, t: f64) -> Self {
        ObservableSpec { name: name.into(), kind: ObservableKind::Hamiltonian, times: vec![t], c_a: 1.0 }
    }

    pub fn grad_sq(name: &str, t: f64) -> Self {
        ObservableSpec { name: name.into(), kind: ObservableKind::GradSq, times: vec![t], c_a: 1.0 }
    }

    fn tensor(&self) -> Result<Option<TensorObservable>> {
        match &self.kind {
            ObservableKind::Tensor { a, blocks } => Ok(Some(TensorObservable::new(a.clone(), self.c_a, blocks.clone(), self.times.clone())?)),
            _ => Ok(None),
        }
    }

    pub fn eval(&self, traj: &Trajectory) -> Result<f64> {
        let idx: Vec<usize> = self.times.iter().map(|t| traj.index_of(*t)).collect::<Result<_>>()?;
        self.eval_indices(traj, &idx)
    }

    fn eval_indices(&self, traj: &Trajectory, idx: &[usize]) -> Result<f64> {
        let n = traj.n() as f64;
        match &self.kind {
            ObservableKind::Quadratic { a, y, y2 } => {
                let obs = QuadraticObservable { a: a.clone(), y: *y, y2: *y2, t: traj.times[idx[0]], t2: traj.times[idx[1]] };
                eval_quadratic(traj, &obs)
            }
            ObservableKind::Tensor { a, blocks } => {
                let obs = TensorObservable { a: a.clone(), c_a: self.c_a, blocks: blocks.clone(), times: vec![] };
                eval_tensor_at(traj, &obs, idx)
            }
            ObservableKind::Autocorr => Ok(traj.x[idx[0]].dot(&traj.x[idx[1]]) / n),
            ObservableKind::Hamiltonian => Ok(quad_form(traj.params.j(), &traj.x[idx[0]]) / n),
            ObservableKind::GradSq => Ok(traj.params.j().tr_mul(&traj.x[idx[0]]).norm_squared() / n),
        }
    }

    /// Values at every assignment of grid times to the time slots, in
    /// lexicographic order of grid indices.
    pub fn grid_values(&self, traj: &Trajectory) -> Result<Vec<f64>> {
        let p = self.times.len();
        let g = traj.times.len();
        let mut idx = vec![0usize; p];
        let mut out = Vec::with_capacity(g.pow(p as u32));
        loop {
            out.push(self.eval_indices(traj, &idx)?);
            if p == 0 || !advance(&mut idx, g) {
                break;
            }
        }
        Ok(out)
    }
}
