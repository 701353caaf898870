//! Run configuration: a line-oriented `key = value` format with `[section]`
//! headers.
//!
//! Parsing is strict. Unknown sections and keys, duplicate keys and malformed
//! values are errors carrying the offending line. Every omitted key takes the
//! default listed on its field, and [`RunConfig::to_text`] writes the fully
//! resolved configuration back in the same format.
//!
//! ```text
//! experiment = universality
//! seed = 7
//!
//! [ensemble]
//! dist = gaussian
//! alt_dist = rademacher
//!
//! [observable.c11]
//! kind = autocorr
//! times = 1, 1
//! ```

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::ensembles::{CoordinateLaw, EntryDistribution, ProfileSpec};
use crate::experiments::{
    AgingConfig, Confinement, ExperimentConfig, IntegratorSpec, Pairing, SystemTemplate, TaylorCheckConfig, DEFAULT_TAIL_THRESHOLDS,
};
use crate::generator::Polynomial;
use crate::observables::{BuildingBlock, ObservableKind, ObservableSpec, TensorWeights, VectorWeights};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        ConfigError { line: Some(line), message: message.into() }
    }

    fn global(message: impl Into<String>) -> Self {
        ConfigError { line: None, message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "config line {l}: {}", self.message),
            None => write!(f, "config: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

type CResult<T> = std::result::Result<T, ConfigError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    Simulate,
    Universality,
    Concentration,
    Aging,
    TaylorCheck,
    MomentsCheck,
    Hopfield,
    Rayleigh,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::Simulate,
        ExperimentKind::Universality,
        ExperimentKind::Concentration,
        ExperimentKind::Aging,
        ExperimentKind::TaylorCheck,
        ExperimentKind::MomentsCheck,
        ExperimentKind::Hopfield,
        ExperimentKind::Rayleigh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Universality => "universality",
            ExperimentKind::Concentration => "concentration",
            ExperimentKind::Aging => "aging",
            ExperimentKind::TaylorCheck => "taylor-check",
            ExperimentKind::MomentsCheck => "moments-check",
            ExperimentKind::Hopfield => "hopfield",
            ExperimentKind::Rayleigh => "rayleigh",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown experiment kind {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleBlock {
    /// Default `gaussian`.
    pub dist: EntryDistribution,
    /// Second arm of paired experiments; default `rademacher`.
    pub alt_dist: EntryDistribution,
    /// Default `true`.
    pub symmetric: bool,
    /// Default `off_diagonal`.
    pub profile: ProfileSpec,
    /// Replaces the root seed when present.
    pub seed: Option<u64>,
}

impl Default for EnsembleBlock {
    fn default() -> Self {
        EnsembleBlock {
            dist: EntryDistribution::Gaussian,
            alt_dist: EntryDistribution::Rademacher,
            symmetric: true,
            profile: ProfileSpec::OffDiagonal,
            seed: None,
        }
    }
}

/// Weights given inline as a constant or read from a CSV file.
#[derive(Clone, Debug, PartialEq)]
pub enum WeightSource {
    Fill(f64),
    Csv { path: String, values: DMatrix<f64> },
}

impl WeightSource {
    fn label(&self) -> String {
        match self {
            WeightSource::Fill(c) => fmt_f64(*c),
            WeightSource::Csv { path, .. } => path.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObservableBlock {
    pub name: String,
    /// One of `quadratic`, `tensor`, `autocorr`, `hamiltonian`, `gradsq`.
    pub kind: String,
    pub times: Vec<f64>,
    /// Weights for `quadratic` and `tensor`; default `1`.
    pub a: WeightSource,
    /// Weight bound; default `1`.
    pub c_a: f64,
    /// Building blocks of `quadratic`; default `x`, `x`.
    pub y: BuildingBlock,
    pub y2: BuildingBlock,
    /// Block rows of `tensor`, one entry per time.
    pub blocks: Vec<Vec<BuildingBlock>>,
}

impl ObservableBlock {
    pub fn simple(name: &str, kind: &str, times: Vec<f64>) -> Self {
        ObservableBlock {
            name: name.into(),
            kind: kind.into(),
            times,
            a: WeightSource::Fill(1.0),
            c_a: 1.0,
            y: BuildingBlock::X,
            y2: BuildingBlock::X,
            blocks: Vec::new(),
        }
    }

    pub fn to_spec(&self) -> crate::Result<ObservableSpec> {
        let kind = match self.kind.as_str() {
            "autocorr" => ObservableKind::Autocorr,
            "hamiltonian" => ObservableKind::Hamiltonian,
            "gradsq" => ObservableKind::GradSq,
            "quadratic" => {
                let a = match &self.a {
                    WeightSource::Fill(c) => VectorWeights::Fill(*c),
                    WeightSource::Csv { values, .. } => VectorWeights::Dense(as_vector(values)?),
                };
                ObservableKind::Quadratic { a, y: self.y, y2: self.y2 }
            }
            "tensor" => {
                let a = match &self.a {
                    WeightSource::Fill(c) => TensorWeights::Fill(*c),
                    WeightSource::Csv { values, .. } if self.blocks.len() == 1 => TensorWeights::Dense1(as_vector(values)?),
                    WeightSource::Csv { values, .. } => TensorWeights::Dense2(values.clone()),
                };
                ObservableKind::Tensor { a, blocks: self.blocks.clone() }
            }
            other => return Err(crate::Error::InvalidArgument(format!("unknown observable kind {other:?}"))),
        };
        ObservableSpec::new(self.name.clone(), kind, self.times.clone(), self.c_a)
    }
}

fn as_vector(m: &DMatrix<f64>) -> crate::Result<DVector<f64>> {
    if m.nrows() == 1 || m.ncols() == 1 {
        Ok(DVector::from_iterator(m.len(), m.iter().copied()))
    } else {
        Err(crate::Error::Dimension(format!("expected a weight vector, got a {}x{} matrix", m.nrows(), m.ncols())))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentBlock {
    /// Default `32, 64, 128, 256`.
    pub sizes: Vec<usize>,
    /// Default `2000`.
    pub replicas: usize,
    /// `shared_noise` (default) or `shared_all`.
    pub pairing: Pairing,
    /// Tail thresholds of the concentration study.
    pub thresholds: Vec<f64>,
}

impl Default for ExperimentBlock {
    fn default() -> Self {
        ExperimentBlock { sizes: vec![32, 64, 128, 256], replicas: 2000, pairing: Pairing::SharedNoise, thresholds: DEFAULT_TAIL_THRESHOLDS.to_vec() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaylorBlock {
    /// Default `3`.
    pub n: usize,
    /// Default `12`.
    pub order: usize,
    /// Default `100000`.
    pub paths: usize,
    /// Monte Carlo step; default `0.0005`.
    pub dt: f64,
    /// `;`-separated polynomials; default `x1*x2`.
    pub polys: Vec<Polynomial>,
    /// One time per polynomial; default `0.2`.
    pub times: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentsBlock {
    /// Default `3`.
    pub n: usize,
    /// Longest generator word; default `4`.
    pub max_word: usize,
    /// Seed polynomials; default `x1; x1*x2`.
    pub polys: Vec<Polynomial>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub experiment: ExperimentKind,
    /// Default `0`.
    pub seed: u64,
    /// Default `out`.
    pub out: PathBuf,
    pub ensemble: EnsembleBlock,
    /// `[system] template = langevin` (default: `beta = 1`, `k = 4.5`,
    /// `field = 0`; `beta = inf`, `k = 0` for aging and rayleigh) or `linear`
    /// (default for taylor-check and moments-check: `coupling_scale = 1`,
    /// `lambda = -1`, `h = 0`, `sigma0 = 0.5`, `sigma_diag = 0`).
    pub system: SystemTemplate,
    /// `[initial] dist = <law>|point`, `mean = 0`, `scale = 1`.
    pub initial: CoordinateLaw,
    /// `[integrator] dt = 0.001`, `t_end = 1`, `intervals = 10`.
    pub integrator: IntegratorSpec,
    /// `[observable.NAME]` sections in file order. When absent, paired and
    /// concentration runs get `autocorr = C(T,T)` and `energy = H(X_T)/N`;
    /// hopfield runs get its four-observable suite.
    pub observables: Vec<ObservableBlock>,
    pub exp: ExperimentBlock,
    pub taylor: TaylorBlock,
    /// `[aging] margin = 0.5` (or a fixed `k`), `s = 2, 4, 8`, `lambdas = 1, 2`.
    pub aging: AgingConfig,
    pub moments: MomentsBlock,
}

impl RunConfig {
    /// Defaults for `kind`, as if parsed from `experiment = <kind>` alone.
    pub fn defaults(kind: ExperimentKind) -> Self {
        let mut cfg = RunConfig {
            experiment: kind,
            seed: 0,
            out: PathBuf::from("out"),
            ensemble: EnsembleBlock::default(),
            system: default_system(kind),
            initial: CoordinateLaw::standard(EntryDistribution::Gaussian),
            integrator: IntegratorSpec { dt: 1e-3, t_end: 1.0, intervals: 10 },
            observables: Vec::new(),
            exp: ExperimentBlock::default(),
            taylor: TaylorBlock {
                n: 3,
                order: 12,
                paths: 100_000,
                dt: 5e-4,
                polys: vec![Polynomial::parse("x1*x2", true).expect("literal")],
                times: vec![0.2],
            },
            aging: AgingConfig { confinement: Confinement::Margin(0.5), s_values: vec![2.0, 4.0, 8.0], lambdas: vec![1.0, 2.0] },
            moments: MomentsBlock {
                n: 3,
                max_word: 4,
                polys: vec![Polynomial::parse("x1", true).expect("literal"), Polynomial::parse("x1*x2", true).expect("literal")],
            },
        };
        cfg.fill_default_observables();
        cfg
    }

    /// Seed used for every stream of the run.
    pub fn effective_seed(&self) -> u64 {
        self.ensemble.seed.unwrap_or(self.seed)
    }

    /// Replaces both the root and the ensemble seed.
    pub fn override_seed(&mut self, seed: u64) {
        self.seed = seed;
        if self.ensemble.seed.is_some() {
            self.ensemble.seed = Some(seed);
        }
    }

    fn fill_default_observables(&mut self) {
        if !self.observables.is_empty() {
            return;
        }
        let t = self.integrator.t_end;
        self.observables = match self.experiment {
            ExperimentKind::Universality | ExperimentKind::Concentration | ExperimentKind::Simulate => vec![
                ObservableBlock::simple("autocorr", "autocorr", vec![t, t]),
                ObservableBlock::simple("energy", "hamiltonian", vec![t]),
            ],
            ExperimentKind::Hopfield => vec![
                ObservableBlock::simple("autocorr", "autocorr", vec![t, t]),
                ObservableBlock::simple("energy", "hamiltonian", vec![t]),
                ObservableBlock::simple("grad_sq", "gradsq", vec![t]),
                ObservableBlock::simple("overlap", "autocorr", vec![t, 0.0]),
            ],
            _ => Vec::new(),
        };
    }

    pub fn observable_specs(&self) -> crate::Result<Vec<ObservableSpec>> {
        self.observables.iter().map(|o| o.to_spec()).collect()
    }

    pub fn experiment_config(&self) -> crate::Result<ExperimentConfig> {
        Ok(ExperimentConfig {
            arms: [self.ensemble.dist, self.ensemble.alt_dist],
            profile: self.ensemble.profile.clone(),
            symmetric: self.ensemble.symmetric,
            initial: self.initial,
            template: self.system.clone(),
            observables: self.observable_specs()?,
            sizes: self.exp.sizes.clone(),
            replicas: self.exp.replicas,
            integrator: self.integrator.clone(),
            seed: self.effective_seed(),
            pairing: self.exp.pairing,
        })
    }

    pub fn taylor_config(&self) -> TaylorCheckConfig {
        TaylorCheckConfig {
            n: self.taylor.n,
            dist: self.ensemble.dist,
            profile: self.ensemble.profile.clone(),
            symmetric: self.ensemble.symmetric,
            initial: self.initial,
            template: self.system.clone(),
            polys: self.taylor.polys.clone(),
            times: self.taylor.times.clone(),
            order: self.taylor.order,
            paths: self.taylor.paths,
            dt: self.taylor.dt,
            seed: self.effective_seed(),
        }
    }

    /// Cross-field checks that do not belong to a single line.
    pub fn validate(&self) -> CResult<()> {
        let g = |e: crate::Error| ConfigError::global(e.to_string());
        let sizes: Vec<usize> = match self.experiment {
            ExperimentKind::TaylorCheck => vec![self.taylor.n],
            ExperimentKind::MomentsCheck => vec![self.moments.n],
            _ => self.exp.sizes.clone(),
        };
        for &n in &sizes {
            let p = self.ensemble.profile.build(n).map_err(g)?;
            if self.ensemble.symmetric && !p.is_symmetric() {
                return Err(ConfigError::global("ensemble.symmetric = true requires a symmetric variance profile"));
            }
        }
        if matches!(self.system, SystemTemplate::Langevin { .. }) && !self.ensemble.symmetric {
            return Err(ConfigError::global("the langevin template requires ensemble.symmetric = true"));
        }
        let specs = self.observable_specs().map_err(g)?;
        for s in &specs {
            if s.times.iter().any(|t| *t < 0.0 || *t > self.integrator.t_end) {
                return Err(ConfigError::global(format!("observable {:?} has a time outside [0, t_end]", s.name)));
            }
        }
        if self.taylor.polys.len() != self.taylor.times.len() {
            return Err(ConfigError::global("taylor.polys and taylor.times must have the same length"));
        }
        Ok(())
    }

    /// Resolved configuration in the input format; parses back to `self`.
    pub fn to_text(&self) -> String {
        self.render(true)
    }

    /// Hash of the resolved configuration, ignoring the output directory.
    pub fn hash(&self) -> String {
        crate::io::config_hash(&self.render(false))
    }

    fn render(&self, with_out: bool) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "experiment = {}", self.experiment);
        let _ = writeln!(s, "seed = {}", self.seed);
        if with_out {
            let _ = writeln!(s, "out = {}", self.out.display());
        }
        let e = &self.ensemble;
        let _ = writeln!(s, "\n[ensemble]");
        let _ = writeln!(s, "dist = {}", e.dist);
        let _ = writeln!(s, "alt_dist = {}", e.alt_dist);
        let _ = writeln!(s, "symmetric = {}", e.symmetric);
        let _ = writeln!(s, "profile = {}", e.profile.label());
        if let Some(seed) = e.seed {
            let _ = writeln!(s, "seed = {seed}");
        }
        let _ = writeln!(s, "\n[system]");
        match &self.system {
            SystemTemplate::Langevin { beta, k, field } => {
                let _ = writeln!(s, "template = langevin\nbeta = {}\nk = {}\nfield = {}", fmt_f64(*beta), fmt_f64(*k), fmt_f64(*field));
            }
            SystemTemplate::Linear { coupling_scale, lambda_diag, h, sigma0, sigma_diag } => {
                let _ = writeln!(
                    s,
                    "template = linear\ncoupling_scale = {}\nlambda = {}\nh = {}\nsigma0 = {}\nsigma_diag = {}",
                    fmt_f64(*coupling_scale),
                    fmt_f64(*lambda_diag),
                    fmt_f64(*h),
                    fmt_f64(*sigma0),
                    fmt_f64(*sigma_diag)
                );
            }
        }
        let _ = writeln!(s, "\n[initial]");
        match self.initial.dist {
            Some(d) => {
                let _ = writeln!(s, "dist = {d}\nmean = {}\nscale = {}", fmt_f64(self.initial.mean), fmt_f64(self.initial.scale));
            }
            None => {
                let _ = writeln!(s, "dist = point\nmean = {}", fmt_f64(self.initial.mean));
            }
        }
        let i = &self.integrator;
        let _ = writeln!(s, "\n[integrator]\ndt = {}\nt_end = {}\nintervals = {}", fmt_f64(i.dt), fmt_f64(i.t_end), i.intervals);
        for o in &self.observables {
            let _ = writeln!(s, "\n[observable.{}]\nkind = {}\ntimes = {}", o.name, o.kind, fmt_list(&o.times));
            if o.kind == "quadratic" || o.kind == "tensor" {
                let _ = writeln!(s, "a = {}\nc_a = {}", o.a.label(), fmt_f64(o.c_a));
            }
            if o.kind == "quadratic" {
                let _ = writeln!(s, "y = {}\ny2 = {}", o.y, o.y2);
            }
            if o.kind == "tensor" {
                let rows: Vec<String> = o.blocks.iter().map(|r| r.iter().map(|b| b.name()).collect::<Vec<_>>().join(", ")).collect();
                let _ = writeln!(s, "blocks = {}", rows.join("; "));
            }
        }
        let x = &self.exp;
        let sizes: Vec<String> = x.sizes.iter().map(|n| n.to_string()).collect();
        let pairing = match x.pairing {
            Pairing::SharedNoise => "shared_noise",
            Pairing::SharedAll => "shared_all",
        };
        let _ = writeln!(
            s,
            "\n[experiment]\nsizes = {}\nreplicas = {}\npairing = {pairing}\nthresholds = {}",
            sizes.join(", "),
            x.replicas,
            fmt_list(&x.thresholds)
        );
        let t = &self.taylor;
        let _ = writeln!(
            s,
            "\n[taylor]\nn = {}\norder = {}\npaths = {}\ndt = {}\npolys = {}\ntimes = {}",
            t.n,
            t.order,
            t.paths,
            fmt_f64(t.dt),
            fmt_polys(&t.polys),
            fmt_list(&t.times)
        );
        let a = &self.aging;
        let _ = writeln!(s, "\n[aging]");
        match a.confinement {
            Confinement::Margin(m) => {
                let _ = writeln!(s, "margin = {}", fmt_f64(m));
            }
            Confinement::Fixed(k) => {
                let _ = writeln!(s, "k = {}", fmt_f64(k));
            }
        }
        let _ = writeln!(s, "s = {}\nlambdas = {}", fmt_list(&a.s_values), fmt_list(&a.lambdas));
        let m = &self.moments;
        let _ = writeln!(s, "\n[moments]\nn = {}\nmax_word = {}\npolys = {}", m.n, m.max_word, fmt_polys(&m.polys));
        s
    }
}

/// Zero-temperature flows for aging and Rayleigh, a linear system for the
/// symbolic checks, finite-temperature Langevin otherwise.
pub fn default_system(kind: ExperimentKind) -> SystemTemplate {
    match kind {
        ExperimentKind::Aging | ExperimentKind::Rayleigh => SystemTemplate::Langevin { beta: f64::INFINITY, k: 0.0, field: 0.0 },
        ExperimentKind::TaylorCheck | ExperimentKind::MomentsCheck => default_linear(),
        _ => SystemTemplate::Langevin { beta: 1.0, k: 4.5, field: 0.0 },
    }
}

fn default_linear() -> SystemTemplate {
    SystemTemplate::Linear { coupling_scale: 1.0, lambda_diag: -1.0, h: 0.0, sigma0: 0.5, sigma_diag: 0.0 }
}

/// Shortest representation that parses back to the same value.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(", ")
}

fn fmt_polys(v: &[Polynomial]) -> String {
    v.iter().map(|p| p.to_string()).collect::<Vec<_>>().join("; ")
}

struct Entry {
    key: String,
    value: String,
    line: usize,
    used: bool,
}

struct Section {
    name: String,
    line: usize,
    entries: Vec<Entry>,
}

impl Section {
    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        let e = self.entries.iter_mut().find(|e| e.key == key)?;
        e.used = true;
        Some((e.value.clone(), e.line))
    }

    fn has(&self, key: &str) -> bool {
        self.entries.iter().any(|e| e.key == key)
    }

    fn get<T>(&mut self, key: &str, parse: impl Fn(&str) -> Result<T, String>) -> CResult<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => parse(&v).map(Some).map_err(|m| ConfigError::at(line, format!("invalid value for `{key}`: {m}"))),
        }
    }

    fn or<T>(&mut self, key: &str, default: T, parse: impl Fn(&str) -> Result<T, String>) -> CResult<T> {
        Ok(self.get(key, parse)?.unwrap_or(default))
    }

    fn finish(&self) -> CResult<()> {
        match self.entries.iter().find(|e| !e.used) {
            Some(e) => {
                let place = if self.name.is_empty() { "at top level".to_string() } else { format!("in [{}]", self.name) };
                Err(ConfigError::at(e.line, format!("unknown key `{}` {place}", e.key)))
            }
            None => Ok(()),
        }
    }
}

fn p_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("expected a number, got {s:?}"))?;
    if v.is_nan() {
        return Err("NaN is not allowed".into());
    }
    Ok(v)
}

fn p_pos(s: &str) -> Result<f64, String> {
    let v = p_f64(s)?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("expected a positive finite number, got {s}"))
    }
}

fn p_finite(s: &str) -> Result<f64, String> {
    let v = p_f64(s)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("expected a finite number, got {s}"))
    }
}

fn p_usize(s: &str) -> Result<usize, String> {
    s.parse().map_err(|_| format!("expected a non-negative integer, got {s:?}"))
}

fn p_pos_usize(s: &str) -> Result<usize, String> {
    match p_usize(s)? {
        0 => Err("expected a positive integer".into()),
        v => Ok(v),
    }
}

fn p_u64(s: &str) -> Result<u64, String> {
    s.parse().map_err(|_| format!("expected an unsigned 64-bit integer, got {s:?}"))
}

fn p_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got {s:?}")),
    }
}

fn p_list<T>(s: &str, item: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|x| item(x.trim())).collect()
}

fn p_dist(s: &str) -> Result<EntryDistribution, String> {
    s.parse::<EntryDistribution>().map_err(|e| e.to_string())
}

fn p_polys(s: &str, symmetric: bool) -> Result<Vec<Polynomial>, String> {
    s.split(';').map(|p| Polynomial::parse(p.trim(), symmetric).map_err(|e| e.to_string())).collect()
}

fn resolve(base: Option<&Path>, s: &str) -> PathBuf {
    let p = Path::new(s);
    match base {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p.to_path_buf(),
    }
}

fn read_numeric_csv(path: &Path) -> Result<DMatrix<f64>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        rows.push(line.split(',').map(|c| p_finite(c.trim())).collect::<Result<_, _>>()?);
    }
    let c = rows.first().map_or(0, |r| r.len());
    if rows.is_empty() || rows.iter().any(|r| r.len() != c) {
        return Err(format!("{} is not a rectangular numeric table", path.display()));
    }
    Ok(DMatrix::from_fn(rows.len(), c, |i, j| rows[i][j]))
}

fn split_sections(text: &str) -> CResult<Vec<Section>> {
    let mut sections = vec![Section { name: String::new(), line: 0, entries: Vec::new() }];
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') || t.starts_with(';') {
            continue;
        }
        if let Some(rest) = t.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::at(line, "unterminated section header"))?.trim();
            if name.is_empty() {
                return Err(ConfigError::at(line, "empty section name"));
            }
            if let Some(prev) = sections.iter().find(|s| s.name == name) {
                return Err(ConfigError::at(line, format!("duplicate section [{name}] (lines {} and {line})", prev.line)));
            }
            sections.push(Section { name: name.to_string(), line, entries: Vec::new() });
            continue;
        }
        let (k, v) = t.split_once('=').ok_or_else(|| ConfigError::at(line, format!("expected `key = value`, got {t:?}")))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || !k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(ConfigError::at(line, format!("invalid key {k:?}")));
        }
        let cur = sections.last_mut().expect("root section");
        if let Some(prev) = cur.entries.iter().find(|e| e.key == k) {
            return Err(ConfigError::at(line, format!("duplicate key `{k}` (lines {} and {line})", prev.line)));
        }
        cur.entries.push(Entry { key: k.to_string(), value: v.to_string(), line, used: false });
    }
    Ok(sections)
}

/// Parses configuration text. Relative file paths resolve against `base_dir`.
pub fn parse_config(text: &str, base_dir: Option<&Path>) -> CResult<RunConfig> {
    parse_config_as(text, base_dir, None)
}

/// As [`parse_config`], with the experiment fixed by the caller. The
/// `experiment` key becomes optional but must agree when present.
pub fn parse_config_as(text: &str, base_dir: Option<&Path>, kind: Option<ExperimentKind>) -> CResult<RunConfig> {
    let mut sections = split_sections(text)?;
    for s in sections.iter().skip(1) {
        let known = matches!(s.name.as_str(), "ensemble" | "system" | "initial" | "integrator" | "experiment" | "taylor" | "aging" | "moments")
            || s.name.strip_prefix("observable.").is_some_and(|n| !n.is_empty());
        if !known {
            return Err(ConfigError::at(s.line, format!("unknown section [{}]", s.name)));
        }
    }
    let empty = |name: &str| Section { name: name.to_string(), line: 0, entries: Vec::new() };
    let mut pick = |name: &str| -> Section {
        match sections.iter().position(|s| s.name == name) {
            Some(i) => sections.remove(i),
            None => empty(name),
        }
    };

    let mut root = pick("");
    let experiment = match (root.take("experiment"), kind) {
        (None, Some(k)) => k,
        (None, None) => return Err(ConfigError::global("missing required key `experiment`")),
        (Some((text, line)), forced) => {
            let parsed = text.parse::<ExperimentKind>().map_err(|m| ConfigError::at(line, m))?;
            if let Some(k) = forced.filter(|k| *k != parsed) {
                return Err(ConfigError::at(line, format!("config is for `{parsed}` but `{k}` was requested")));
            }
            parsed
        }
    };
    let mut cfg = RunConfig::defaults(experiment);
    cfg.observables.clear();
    cfg.seed = root.or("seed", 0, p_u64)?;
    cfg.out = root.or("out", PathBuf::from("out"), |s| if s.is_empty() { Err("empty path".into()) } else { Ok(PathBuf::from(s)) })?;
    root.finish()?;

    let mut ens = pick("ensemble");
    cfg.ensemble.dist = ens.or("dist", cfg.ensemble.dist, p_dist)?;
    cfg.ensemble.alt_dist = ens.or("alt_dist", cfg.ensemble.alt_dist, p_dist)?;
    cfg.ensemble.symmetric = ens.or("symmetric", true, p_bool)?;
    if let Some((v, line)) = ens.take("profile") {
        let spec = match v.as_str() {
            "off_diagonal" | "ones" => ProfileSpec::parse(&v, None),
            _ if v.starts_with("block:") => ProfileSpec::parse(&v, None),
            _ => {
                let path = resolve(base_dir, &v);
                ProfileSpec::parse(&path.to_string_lossy(), None)
            }
        };
        cfg.ensemble.profile = spec.map_err(|e| ConfigError::at(line, format!("invalid value for `profile`: {e}")))?;
    }
    cfg.ensemble.seed = ens.get("seed", p_u64)?;
    ens.finish()?;
    let symmetric = cfg.ensemble.symmetric;

    let mut sys = pick("system");
    let base = cfg.system.clone();
    let base_name = if matches!(base, SystemTemplate::Langevin { .. }) { "langevin" } else { "linear" };
    let template = sys.or("template", base_name.to_string(), |s| match s {
        "langevin" | "linear" => Ok(s.to_string()),
        _ => Err(format!("expected langevin or linear, got {s:?}")),
    })?;
    let base = if template == base_name {
        base
    } else if template == "langevin" {
        default_system(ExperimentKind::Universality)
    } else {
        default_linear()
    };
    cfg.system = match base {
        SystemTemplate::Langevin { beta, k, field } => SystemTemplate::Langevin {
            beta: sys.or("beta", beta, p_pos_or_inf)?,
            k: sys.or("k", k, p_finite)?,
            field: sys.or("field", field, p_finite)?,
        },
        SystemTemplate::Linear { coupling_scale, lambda_diag, h, sigma0, sigma_diag } => SystemTemplate::Linear {
            coupling_scale: sys.or("coupling_scale", coupling_scale, p_finite)?,
            lambda_diag: sys.or("lambda", lambda_diag, p_finite)?,
            h: sys.or("h", h, p_finite)?,
            sigma0: sys.or("sigma0", sigma0, p_finite)?,
            sigma_diag: sys.or("sigma_diag", sigma_diag, p_finite)?,
        },
    };
    sys.finish()?;

    let mut init = pick("initial");
    let dist = init.or("dist", "gaussian".to_string(), |s| Ok(s.to_string()))?;
    cfg.initial = if dist == "point" {
        CoordinateLaw::point(init.or("mean", 0.0, p_finite)?)
    } else {
        let line = init.entries.iter().find(|e| e.key == "dist").map_or(0, |e| e.line);
        let d = p_dist(&dist).map_err(|m| ConfigError::at(line, format!("invalid value for `dist`: {m}")))?;
        CoordinateLaw { dist: Some(d), mean: init.or("mean", 0.0, p_finite)?, scale: init.or("scale", 1.0, p_finite)? }
    };
    init.finish()?;

    let mut integ = pick("integrator");
    cfg.integrator = IntegratorSpec {
        dt: integ.or("dt", 1e-3, p_pos)?,
        t_end: integ.or("t_end", 1.0, p_pos)?,
        intervals: integ.or("intervals", 10, p_pos_usize)?,
    };
    integ.finish()?;

    let mut exp = pick("experiment");
    cfg.exp.sizes = exp.or("sizes", cfg.exp.sizes.clone(), |s| p_list(s, p_pos_usize).and_then(non_empty))?;
    cfg.exp.replicas = exp.or("replicas", cfg.exp.replicas, p_pos_usize)?;
    cfg.exp.pairing = exp.or("pairing", Pairing::SharedNoise, |s| match s {
        "shared_noise" => Ok(Pairing::SharedNoise),
        "shared_all" => Ok(Pairing::SharedAll),
        _ => Err(format!("expected shared_noise or shared_all, got {s:?}")),
    })?;
    cfg.exp.thresholds = exp.or("thresholds", cfg.exp.thresholds.clone(), |s| p_list(s, p_pos))?;
    exp.finish()?;

    let mut tay = pick("taylor");
    cfg.taylor.n = tay.or("n", cfg.taylor.n, p_pos_usize)?;
    cfg.taylor.order = tay.or("order", cfg.taylor.order, p_usize)?;
    cfg.taylor.paths = tay.or("paths", cfg.taylor.paths, p_pos_usize)?;
    cfg.taylor.dt = tay.or("dt", cfg.taylor.dt, p_pos)?;
    cfg.taylor.polys = tay.or("polys", vec![Polynomial::parse("x1*x2", symmetric).expect("literal")], |s| p_polys(s, symmetric))?;
    cfg.taylor.times = tay.or("times", cfg.taylor.times.clone(), |s| p_list(s, p_finite).and_then(non_empty))?;
    tay.finish()?;

    let mut ag = pick("aging");
    if ag.has("margin") && ag.has("k") {
        let line = ag.entries.iter().map(|e| e.line).max().unwrap_or(0);
        return Err(ConfigError::at(line, "[aging] accepts either `margin` or `k`, not both"));
    }
    cfg.aging.confinement = match ag.get("k", p_finite)? {
        Some(k) => Confinement::Fixed(k),
        None => Confinement::Margin(ag.or("margin", 0.5, p_pos)?),
    };
    cfg.aging.s_values = ag.or("s", cfg.aging.s_values.clone(), |s| p_list(s, p_pos).and_then(non_empty))?;
    cfg.aging.lambdas = ag.or("lambdas", cfg.aging.lambdas.clone(), |s| {
        let v = p_list(s, p_finite).and_then(non_empty)?;
        if v.iter().any(|l| *l < 1.0) {
            return Err("lambdas must be >= 1".into());
        }
        Ok(v)
    })?;
    ag.finish()?;

    let mut mom = pick("moments");
    cfg.moments.n = mom.or("n", cfg.moments.n, p_pos_usize)?;
    cfg.moments.max_word = mom.or("max_word", cfg.moments.max_word, p_usize)?;
    let default_polys = vec![Polynomial::parse("x1", symmetric).expect("literal"), Polynomial::parse("x1*x2", symmetric).expect("literal")];
    cfg.moments.polys = mom.or("polys", default_polys, |s| p_polys(s, symmetric))?;
    mom.finish()?;

    // Remaining sections are observables, in file order.
    for mut sec in sections {
        let name = sec.name.trim_start_matches("observable.").to_string();
        let kind = sec.or("kind", String::new(), |s| match s {
            "quadratic" | "tensor" | "autocorr" | "hamiltonian" | "gradsq" => Ok(s.to_string()),
            _ => Err(format!("unknown observable kind {s:?}")),
        })?;
        if kind.is_empty() {
            return Err(ConfigError::at(sec.line, format!("[{}] needs `kind`", sec.name)));
        }
        let times = sec
            .get("times", |s| p_list(s, p_finite))?
            .ok_or_else(|| ConfigError::at(sec.line, format!("[{}] needs `times`", sec.name)))?;
        let mut o = ObservableBlock::simple(&name, &kind, times);
        if kind == "quadratic" || kind == "tensor" {
            o.a = sec.or("a", WeightSource::Fill(1.0), |s| match p_f64(s) {
                Ok(c) => Ok(WeightSource::Fill(c)),
                Err(_) => {
                    let path = resolve(base_dir, s);
                    Ok(WeightSource::Csv { path: path.to_string_lossy().into_owned(), values: read_numeric_csv(&path)? })
                }
            })?;
            o.c_a = sec.or("c_a", 1.0, p_pos)?;
        }
        if kind == "quadratic" {
            o.y = sec.or("y", BuildingBlock::X, |s| s.parse::<BuildingBlock>().map_err(|e| e.to_string()))?;
            o.y2 = sec.or("y2", BuildingBlock::X, |s| s.parse::<BuildingBlock>().map_err(|e| e.to_string()))?;
        }
        if kind == "tensor" {
            o.blocks = sec
                .get("blocks", |s| {
                    s.split(';')
                        .map(|row| row.split(',').map(|b| b.trim().parse::<BuildingBlock>().map_err(|e| e.to_string())).collect())
                        .collect()
                })?
                .ok_or_else(|| ConfigError::at(sec.line, format!("[{}] needs `blocks`", sec.name)))?;
        }
        sec.finish()?;
        o.to_spec().map_err(|e| ConfigError::at(sec.line, e.to_string()))?;
        cfg.observables.push(o);
    }
    cfg.fill_default_observables();
    cfg.validate()?;
    Ok(cfg)
}

fn p_pos_or_inf(s: &str) -> Result<f64, String> {
    let v = p_f64(s)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("expected a positive number or inf, got {s}"))
    }
}

fn non_empty<T>(v: Vec<T>) -> Result<Vec<T>, String> {
    if v.is_empty() {
        Err("expected a nonempty list".into())
    } else {
        Ok(v)
    }
}
