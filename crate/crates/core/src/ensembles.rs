//! Entry laws, variance profiles, coupling matrices and initial laws.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{Purpose, RngStream};

/// Unit-variance, mean-zero law of a single coupling entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EntryDistribution {
    Gaussian,
    /// Uniform on `{-1, +1}`.
    Rademacher,
    /// Uniform on `[-√3, √3]`.
    UniformCentered,
    /// `Exp(1) - 1`.
    ExponentialCentered,
}

impl EntryDistribution {
    pub const ALL: [EntryDistribution; 4] = [
        EntryDistribution::Gaussian,
        EntryDistribution::Rademacher,
        EntryDistribution::UniformCentered,
        EntryDistribution::ExponentialCentered,
    ];

    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            EntryDistribution::Gaussian => rng.sample(StandardNormal),
            EntryDistribution::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            EntryDistribution::UniformCentered => (2.0 * rng.random::<f64>() - 1.0) * 3f64.sqrt(),
            EntryDistribution::ExponentialCentered => rng.sample::<f64, _>(Exp1) - 1.0,
        }
    }

    /// Exact raw moment `E[Z^l]`.
    pub fn moment(self, l: u32) -> f64 {
        let odd = l % 2 == 1;
        match self {
            EntryDistribution::Gaussian => {
                if odd {
                    0.0
                } else {
                    double_factorial(l.saturating_sub(1))
                }
            }
            EntryDistribution::Rademacher => {
                if odd {
                    0.0
                } else {
                    1.0
                }
            }
            EntryDistribution::UniformCentered => {
                if odd {
                    0.0
                } else {
                    3f64.powi(l as i32 / 2) / (l as f64 + 1.0)
                }
            }
            EntryDistribution::ExponentialCentered => subfactorial(l),
        }
    }

    /// Constant `C` with `moment(l) <= (l-1)! C^{l/2}` for all `l >= 1`.
    pub fn tail_constant(self) -> f64 {
        match self {
            EntryDistribution::Gaussian | EntryDistribution::Rademacher => 1.0,
            EntryDistribution::UniformCentered => 3.0,
            EntryDistribution::ExponentialCentered => 2.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EntryDistribution::Gaussian => "gaussian",
            EntryDistribution::Rademacher => "rademacher",
            EntryDistribution::UniformCentered => "uniform",
            EntryDistribution::ExponentialCentered => "exponential",
        }
    }
}

impl fmt::Display for EntryDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EntryDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(EntryDistribution::Gaussian),
            "rademacher" => Ok(EntryDistribution::Rademacher),
            "uniform" => Ok(EntryDistribution::UniformCentered),
            "exponential" => Ok(EntryDistribution::ExponentialCentered),
            _ => Err(Error::InvalidArgument(format!(
                "unknown distribution {s:?} (expected gaussian, rademacher, uniform or exponential)"
            ))),
        }
    }
}

fn double_factorial(n: u32) -> f64 {
    let mut acc = 1.0;
    let mut k = n;
    while k > 1 {
        acc *= k as f64;
        k -= 2;
    }
    acc
}

/// Number of derangements; equals the central moments of `Exp(1)`.
fn subfactorial(n: u32) -> f64 {
    let (mut prev, mut cur) = (1.0, 0.0);
    if n == 0 {
        return prev;
    }
    for k in 2..=n {
        let next = (k as f64 - 1.0) * (cur + prev);
        prev = cur;
        cur = next;
    }
    cur
}

/// Entrywise second moments `m_ij` of the unscaled matrix `A`.
#[derive(Clone, Debug, PartialEq)]
pub struct VarianceProfile {
    m: DMatrix<f64>,
    bound: f64,
}

impl VarianceProfile {
    pub fn new(m: DMatrix<f64>, bound: f64) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Dimension(format!("variance profile is {}x{}, expected square", m.nrows(), m.ncols())));
        }
        for &v in m.iter() {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("variance profile entry {v} is not a nonnegative number")));
            }
            if v > bound {
                return Err(Error::InvalidArgument(format!("variance profile entry {v} exceeds declared bound {bound}")));
            }
        }
        Ok(VarianceProfile { m, bound })
    }

    /// Uses the largest entry as the declared bound.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        let bound = m.iter().cloned().fold(0.0, f64::max);
        Self::new(m, bound)
    }

    /// `m_ij = 1{i != j}`.
    pub fn off_diagonal(n: usize) -> Self {
        let m = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 });
        VarianceProfile { m, bound: 1.0 }
    }

    pub fn ones(n: usize) -> Self {
        VarianceProfile { m: DMatrix::from_element(n, n, 1.0), bound: 1.0 }
    }

    /// Coordinates split into `blocks` contiguous groups; variance `within` inside a
    /// group and `across` between groups, zero on the diagonal.
    pub fn block(n: usize, blocks: usize, within: f64, across: f64) -> Result<Self> {
        if blocks == 0 {
            return Err(Error::InvalidArgument("block profile needs at least one block".into()));
        }
        let group = |i: usize| i * blocks / n.max(1);
        let m = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                0.0
            } else if group(i) == group(j) {
                within
            } else {
                across
            }
        });
        Self::from_matrix(m)
    }

    pub fn n(&self) -> usize {
        self.m.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.n();
        (0..n).all(|i| (0..i).all(|j| self.m[(i, j)] == self.m[(j, i)]))
    }
}

/// How a variance profile is produced for a given dimension.
#[derive(Clone, Debug, PartialEq)]
pub enum ProfileSpec {
    OffDiagonal,
    Ones,
    Block { blocks: usize, within: f64, across: f64 },
    /// A fixed matrix read from a CSV file; only valid at its own dimension.
    Matrix { source: String, m: DMatrix<f64> },
}

impl ProfileSpec {
    pub fn build(&self, n: usize) -> Result<VarianceProfile> {
        match self {
            ProfileSpec::OffDiagonal => Ok(VarianceProfile::off_diagonal(n)),
            ProfileSpec::Ones => Ok(VarianceProfile::ones(n)),
            ProfileSpec::Block { blocks, within, across } => VarianceProfile::block(n, *blocks, *within, *across),
            ProfileSpec::Matrix { m, .. } => {
                if m.nrows() != n {
                    return Err(Error::Dimension(format!("profile matrix is {}x{}, system has N = {n}", m.nrows(), m.ncols())));
                }
                VarianceProfile::from_matrix(m.clone())
            }
        }
    }

    /// Parses `off_diagonal`, `ones`, `block:<blocks>:<within>:<across>` or a CSV path.
    pub fn parse(s: &str, base_dir: Option<&Path>) -> Result<Self> {
        match s {
            "off_diagonal" => return Ok(ProfileSpec::OffDiagonal),
            "ones" => return Ok(ProfileSpec::Ones),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("block:") {
            let parts: Vec<&str> = rest.split(':').collect();
            if parts.len() != 3 {
                return Err(Error::InvalidArgument(format!("block profile must be block:<blocks>:<within>:<across>, got {s:?}")));
            }
            let bad = |_| Error::InvalidArgument(format!("malformed block profile {s:?}"));
            return Ok(ProfileSpec::Block {
                blocks: parts[0].parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                within: parts[1].parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                across: parts[2].parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
            });
        }
        let path = match base_dir {
            Some(dir) => dir.join(s),
            None => Path::new(s).to_path_buf(),
        };
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(ProfileSpec::Matrix { source: s.to_string(), m: parse_csv_matrix(&text)? })
    }

    pub fn label(&self) -> String {
        match self {
            ProfileSpec::OffDiagonal => "off_diagonal".into(),
            ProfileSpec::Ones => "ones".into(),
            ProfileSpec::Block { blocks, within, across } => format!("block:{blocks}:{within}:{across}"),
            ProfileSpec::Matrix { source, .. } => source.clone(),
        }
    }
}

/// Reads a square matrix of comma-separated numbers; `#` lines are skipped.
pub fn parse_csv_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::InvalidArgument(format!("matrix CSV line {}: {e}", lineno + 1)))?;
        rows.push(row);
    }
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension(format!("matrix CSV is not square ({n} rows)")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// A sampled interaction matrix `A` and its rescaling `J = A / √N`.
#[derive(Clone, Debug)]
pub struct CouplingMatrix {
    pub a: DMatrix<f64>,
    pub j: DMatrix<f64>,
    pub symmetric: bool,
    pub dist: EntryDistribution,
    pub stream: RngStream,
}

impl CouplingMatrix {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Wraps a given `A` without sampling; `stream` is recorded as-is.
    pub fn from_a(a: DMatrix<f64>, symmetric: bool, dist: EntryDistribution, stream: RngStream) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::Dimension(format!("coupling matrix is {}x{}", a.nrows(), a.ncols())));
        }
        if symmetric && a != a.transpose() {
            return Err(Error::InvalidArgument("matrix flagged symmetric is not symmetric".into()));
        }
        let scale = (a.nrows() as f64).sqrt();
        let j = a.map(|v| v / scale);
        Ok(CouplingMatrix { a, j, symmetric, dist, stream })
    }
}

/// Samples `A_ij = √m_ij Z_ij`. In symmetric mode only the upper triangle
/// (with diagonal) is drawn, row by row, and mirrored. Draws are consumed for
/// zero-variance entries too, so the stream layout depends only on `N`.
pub fn sample_matrix(
    dist: EntryDistribution,
    profile: &VarianceProfile,
    symmetric: bool,
    stream: &RngStream,
    arm: u32,
) -> Result<CouplingMatrix> {
    if symmetric && !profile.is_symmetric() {
        return Err(Error::InvalidArgument("symmetric ensemble requires a symmetric variance profile".into()));
    }
    let mut rng = stream.rng(Purpose::Matrix(arm));
    let a = sample_a(dist, profile, symmetric, &mut rng);
    CouplingMatrix::from_a(a, symmetric, dist, *stream)
}

pub fn sample_a<R: Rng + ?Sized>(dist: EntryDistribution, profile: &VarianceProfile, symmetric: bool, rng: &mut R) -> DMatrix<f64> {
    let n = profile.n();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        let start = if symmetric { i } else { 0 };
        for j in start..n {
            let z = dist.sample(rng);
            let m = profile.get(i, j);
            let v = if m == 0.0 { 0.0 } else { m.sqrt() * z };
            a[(i, j)] = v;
            if symmetric {
                a[(j, i)] = v;
            }
        }
    }
    a
}

/// Law of one initial coordinate: `mean + scale * Z`, or the point mass at `mean`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoordinateLaw {
    pub dist: Option<EntryDistribution>,
    pub mean: f64,
    pub scale: f64,
}

impl CoordinateLaw {
    pub fn standard(dist: EntryDistribution) -> Self {
        CoordinateLaw { dist: Some(dist), mean: 0.0, scale: 1.0 }
    }

    pub fn point(value: f64) -> Self {
        CoordinateLaw { dist: None, mean: value, scale: 0.0 }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.dist {
            Some(d) => self.mean + self.scale * d.sample(rng),
            None => self.mean,
        }
    }

    pub fn moment(&self, l: u32) -> f64 {
        let Some(d) = self.dist else {
            return self.mean.powi(l as i32);
        };
        let mut acc = 0.0;
        let mut binom = 1.0;
        for k in 0..=l {
            if k > 0 {
                binom = binom * (l - k + 1) as f64 / k as f64;
            }
            let zk = d.moment(k);
            if zk != 0.0 {
                acc += binom * self.mean.powi((l - k) as i32) * self.scale.powi(k as i32) * zk;
            }
        }
        acc
    }
}

/// Product measure of the initial condition.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialLaw {
    pub coords: Vec<CoordinateLaw>,
}

impl InitialLaw {
    pub fn iid(n: usize, law: CoordinateLaw) -> Self {
        InitialLaw { coords: vec![law; n] }
    }

    pub fn n(&self) -> usize {
        self.coords.len()
    }

    /// `E[X_i(0)^l]` for a 0-based coordinate `i`.
    pub fn moment(&self, i: usize, l: u32) -> f64 {
        self.coords[i].moment(l)
    }
}

pub fn sample_initial(law: &InitialLaw, stream: &RngStream) -> DVector<f64> {
    let mut rng = stream.rng(Purpose::Initial);
    DVector::from_iterator(law.n(), law.coords.iter().map(|c| c.sample(&mut rng)))
}
