//! Symbolic generator expansion.
//!
//! Polynomials in the state coordinates and the coupling entries are stored as
//! maps from canonical monomial keys to coefficients. Coordinates are 1-based
//! and index `0` stands for the constant `x_0 ≡ 1`. The deterministic
//! parameters `Λ`, `h`, `σ` are folded into coefficients when a letter is
//! applied; only the coupling entries stay symbolic (in numeric mode they are
//! folded too).

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;

use crate::ensembles::{EntryDistribution, InitialLaw, VarianceProfile};
use crate::error::{Error, Result};
use crate::sde::SystemParams;

/// `(i, j)`; `i` may be `0` only in σ-pairs.
pub type IndexPair = (u16, u16);

pub fn canonical_pair(p: IndexPair, symmetric: bool) -> IndexPair {
    if symmetric && p.0 > p.1 {
        (p.1, p.0)
    } else {
        p
    }
}

/// Structural part of a monomial. All multisets are kept sorted.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MonomialKey {
    pub j_pairs: Vec<IndexPair>,
    /// Audit record of the folded Λ, h and σ factors; empty unless auditing.
    pub lam_pairs: Vec<IndexPair>,
    pub h_idx: Vec<u16>,
    pub sig_pairs: Vec<IndexPair>,
    pub x_idx: Vec<u16>,
}

impl MonomialKey {
    pub fn new(mut j_pairs: Vec<IndexPair>, mut x_idx: Vec<u16>, symmetric: bool) -> Self {
        for p in &mut j_pairs {
            *p = canonical_pair(*p, symmetric);
        }
        j_pairs.sort_unstable();
        x_idx.sort_unstable();
        MonomialKey { j_pairs, x_idx, ..Default::default() }
    }

    pub fn degree(&self) -> usize {
        self.x_idx.len()
    }

    /// Number of J-pairs occurring exactly once.
    pub fn singleton_pairs(&self) -> usize {
        runs(&self.j_pairs).filter(|(_, c)| *c == 1).count()
    }

    fn replace_x(&self, j: u16, with: &[u16], remove: usize) -> Vec<u16> {
        let mut out = Vec::with_capacity(self.x_idx.len());
        let mut removed = 0;
        for &v in &self.x_idx {
            if v == j && removed < remove {
                removed += 1;
            } else {
                out.push(v);
            }
        }
        for &w in with {
            let pos = out.partition_point(|&v| v <= w);
            out.insert(pos, w);
        }
        out
    }

    fn mul(&self, other: &MonomialKey) -> MonomialKey {
        MonomialKey {
            j_pairs: merge(&self.j_pairs, &other.j_pairs),
            lam_pairs: merge(&self.lam_pairs, &other.lam_pairs),
            h_idx: merge(&self.h_idx, &other.h_idx),
            sig_pairs: merge(&self.sig_pairs, &other.sig_pairs),
            x_idx: merge(&self.x_idx, &other.x_idx),
        }
    }
}

fn merge<T: Ord + Copy>(a: &[T], b: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut k) = (0, 0);
    while i < a.len() && k < b.len() {
        if a[i] <= b[k] {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[k]);
            k += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[k..]);
    out
}

fn insert_sorted<T: Ord + Copy>(v: &mut Vec<T>, x: T) {
    let pos = v.partition_point(|y| *y <= x);
    v.insert(pos, x);
}

/// Runs of equal values in a sorted slice, as `(value, multiplicity)`.
fn runs<T: PartialEq + Copy>(v: &[T]) -> impl Iterator<Item = (T, usize)> + '_ {
    let mut i = 0;
    std::iter::from_fn(move || {
        if i >= v.len() {
            return None;
        }
        let start = i;
        while i < v.len() && v[i] == v[start] {
            i += 1;
        }
        Some((v[start], i - start))
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Monomial {
    pub coeff: f64,
    pub key: MonomialKey,
}

impl Monomial {
    pub fn new(coeff: f64, j_pairs: Vec<IndexPair>, x_idx: Vec<u16>, symmetric: bool) -> Self {
        Monomial { coeff, key: MonomialKey::new(j_pairs, x_idx, symmetric) }
    }

    /// `x_{i_1} ... x_{i_r}`.
    pub fn x(idx: &[u16]) -> Self {
        Monomial::new(1.0, vec![], idx.to_vec(), false)
    }
}

/// Sum of monomials with like terms collected; zero coefficients are dropped.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Polynomial {
    terms: BTreeMap<MonomialKey, f64>,
}

impl Polynomial {
    pub fn zero() -> Self {
        Polynomial::default()
    }

    pub fn from_monomial(m: Monomial) -> Self {
        let mut p = Polynomial::zero();
        p.add_term(m.key, m.coeff);
        p
    }

    pub fn from_terms(terms: impl IntoIterator<Item = Monomial>) -> Self {
        let mut p = Polynomial::zero();
        for m in terms {
            p.add_term(m.key, m.coeff);
        }
        p
    }

    pub fn add_term(&mut self, key: MonomialKey, coeff: f64) {
        if coeff == 0.0 {
            return;
        }
        let entry = self.terms.entry(key);
        match entry {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(coeff);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let c = o.get() + coeff;
                if c == 0.0 {
                    o.remove();
                } else {
                    *o.get_mut() = c;
                }
            }
        }
    }

    pub fn add_scaled(&mut self, other: &Polynomial, scale: f64) {
        for (k, c) in &other.terms {
            self.add_term(k.clone(), c * scale);
        }
    }

    pub fn scaled(&self, s: f64) -> Polynomial {
        let mut p = Polynomial::zero();
        p.add_scaled(self, s);
        p
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        let mut p = Polynomial::zero();
        for (a, ca) in &self.terms {
            for (b, cb) in &other.terms {
                p.add_term(a.mul(b), ca * cb);
            }
        }
        p
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MonomialKey, f64)> {
        self.terms.iter().map(|(k, c)| (k, *c))
    }

    pub fn monomials(&self) -> Vec<Monomial> {
        self.iter().map(|(k, c)| Monomial { coeff: c, key: k.clone() }).collect()
    }

    pub fn max_index(&self) -> u16 {
        self.terms
            .keys()
            .flat_map(|k| k.x_idx.iter().copied().chain(k.j_pairs.iter().flat_map(|p| [p.0, p.1])))
            .max()
            .unwrap_or(0)
    }

    pub fn max_j_degree(&self) -> usize {
        self.terms.keys().map(|k| k.j_pairs.len()).max().unwrap_or(0)
    }

    /// Value at `x` (0-based vector of the `N` coordinates) with coupling `j`.
    pub fn evaluate(&self, x: &[f64], j: &DMatrix<f64>) -> f64 {
        self.iter().map(|(k, c)| eval_key(k, c, x, j)).sum()
    }

    /// Re-canonicalizes the coupling pairs, merging `ij` and `ji` when `symmetric`.
    pub fn canonicalized(&self, symmetric: bool) -> Polynomial {
        let mut p = Polynomial::zero();
        for (k, c) in self.iter() {
            let mut key = k.clone();
            for q in &mut key.j_pairs {
                *q = canonical_pair(*q, symmetric);
            }
            key.j_pairs.sort_unstable();
            p.add_term(key, c);
        }
        p
    }

    /// Parses e.g. `2*x1^2 - 0.5*J1_2^2*x1 + 3`.
    pub fn parse(text: &str, symmetric: bool) -> Result<Polynomial> {
        let bad = |msg: String| Error::InvalidArgument(format!("polynomial {text:?}: {msg}"));
        let mut p = Polynomial::zero();
        let mut rest = text.trim();
        if rest.is_empty() {
            return Err(bad("empty".into()));
        }
        let mut sign = 1.0;
        if let Some(r) = rest.strip_prefix('-') {
            sign = -1.0;
            rest = r;
        } else if let Some(r) = rest.strip_prefix('+') {
            rest = r;
        }
        loop {
            let end = rest
                .char_indices()
                .skip(1)
                .find(|&(i, ch)| (ch == '+' || ch == '-') && !rest[..i].trim_end().ends_with(['e', 'E', '*', '^']))
                .map(|(i, _)| i)
                .unwrap_or(rest.len());
            let term = rest[..end].trim();
            if term.is_empty() {
                return Err(bad("empty term".into()));
            }
            let mut coeff = sign;
            let mut pairs = Vec::new();
            let mut xs = Vec::new();
            for factor in term.split('*') {
                let factor = factor.trim();
                let (base, pow) = match factor.split_once('^') {
                    Some((b, e)) => (b.trim(), e.trim().parse::<u32>().map_err(|e| bad(format!("exponent in {factor:?}: {e}")))?),
                    None => (factor, 1),
                };
                if let Some(idx) = base.strip_prefix('x') {
                    let i: u16 = idx.parse().map_err(|_| bad(format!("bad coordinate {base:?}")))?;
                    xs.extend(std::iter::repeat_n(i, pow as usize));
                } else if let Some(ij) = base.strip_prefix('J') {
                    let (a, b) = ij.split_once('_').ok_or_else(|| bad(format!("coupling factor {base:?} needs the form Ji_j")))?;
                    let pair: IndexPair = (
                        a.parse().map_err(|_| bad(format!("bad index in {base:?}")))?,
                        b.parse().map_err(|_| bad(format!("bad index in {base:?}")))?,
                    );
                    if pair.0 == 0 || pair.1 == 0 {
                        return Err(bad(format!("coupling indices are 1-based in {base:?}")));
                    }
                    pairs.extend(std::iter::repeat_n(pair, pow as usize));
                } else {
                    let v: f64 = base.parse().map_err(|_| bad(format!("unrecognised factor {factor:?}")))?;
                    coeff *= v.powi(pow as i32);
                }
            }
            if xs.is_empty() {
                xs.push(0);
            }
            let m = Monomial::new(coeff, pairs, xs, symmetric);
            p.add_term(m.key, m.coeff);
            if end == rest.len() {
                break;
            }
            sign = if rest[end..].starts_with('-') { -1.0 } else { 1.0 };
            rest = &rest[end + 1..];
        }
        Ok(p)
    }
}

fn eval_key(k: &MonomialKey, c: f64, x: &[f64], j: &DMatrix<f64>) -> f64 {
    let mut v = c;
    for &(a, b) in &k.j_pairs {
        v *= j[(a as usize - 1, b as usize - 1)];
    }
    for &i in &k.x_idx {
        if i > 0 {
            v *= x[i as usize - 1];
        }
    }
    v
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("0");
        }
        for (n, (k, c)) in self.iter().enumerate() {
            if n > 0 {
                f.write_str(if c < 0.0 { " - " } else { " + " })?;
                write!(f, "{}", c.abs())?;
            } else {
                write!(f, "{c}")?;
            }
            for (p, m) in runs(&k.j_pairs) {
                write!(f, "*J{}_{}", p.0, p.1)?;
                if m > 1 {
                    write!(f, "^{m}")?;
                }
            }
            for (i, m) in runs(&k.x_idx) {
                write!(f, "*x{i}")?;
                if m > 1 {
                    write!(f, "^{m}")?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Letter {
    J,
    Lambda,
    H,
    Delta,
}

impl Letter {
    pub const ALL: [Letter; 4] = [Letter::J, Letter::Lambda, Letter::H, Letter::Delta];

    pub fn symbol(self) -> &'static str {
        match self {
            Letter::J => "J",
            Letter::Lambda => "Lambda",
            Letter::H => "H",
            Letter::Delta => "Delta",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CouplingMode {
    /// Coupling entries stay symbolic; `symmetric` identifies `ij` with `ji`.
    Symbolic { symmetric: bool },
    /// Coupling values from the parameters are folded into coefficients.
    Numeric,
}

/// The generator `L = L_J + L_Λ + L_h + L_Δ` of a system.
#[derive(Clone, Debug)]
pub struct Generator<'a> {
    pub params: &'a SystemParams,
    pub mode: CouplingMode,
    /// Record folded Λ, h and σ factors in the monomial keys.
    pub audit: bool,
}

impl<'a> Generator<'a> {
    pub fn symbolic(params: &'a SystemParams, symmetric: bool) -> Self {
        Generator { params, mode: CouplingMode::Symbolic { symmetric }, audit: false }
    }

    pub fn numeric(params: &'a SystemParams) -> Self {
        Generator { params, mode: CouplingMode::Numeric, audit: false }
    }

    pub fn with_audit(mut self, audit: bool) -> Self {
        self.audit = audit;
        self
    }

    fn check(&self, key: &MonomialKey) -> Result<()> {
        let n = self.params.n();
        let max = key.x_idx.iter().copied().chain(key.j_pairs.iter().flat_map(|p| [p.0, p.1])).max().unwrap_or(0);
        if max as usize > n {
            return Err(Error::IndexOutOfRange { index: max as usize, dim: n });
        }
        Ok(())
    }

    /// Terms of `letter` applied to one monomial, without collecting like terms.
    pub fn expand_monomial(&self, m: &Monomial, letter: Letter, out: &mut Vec<Monomial>) -> Result<()> {
        self.check(&m.key)?;
        let p = self.params;
        let n = p.n() as u16;
        let key = &m.key;
        for (j, c) in runs(&key.x_idx) {
            if j == 0 {
                continue;
            }
            let cj = c as f64;
            let jc = j as usize - 1;
            match letter {
                Letter::H => {
                    let hj = p.h()[jc];
                    if hj != 0.0 {
                        let mut k = MonomialKey { x_idx: key.replace_x(j, &[0], 1), ..key.clone() };
                        if self.audit {
                            insert_sorted(&mut k.h_idx, j);
                        }
                        out.push(Monomial { coeff: m.coeff * cj * hj, key: k });
                    }
                }
                Letter::J => {
                    for i in 1..=n {
                        let coeff = match self.mode {
                            CouplingMode::Symbolic { .. } => m.coeff * cj * p.j_scale(),
                            CouplingMode::Numeric => {
                                let v = p.j()[(i as usize - 1, jc)];
                                if v == 0.0 {
                                    continue;
                                }
                                m.coeff * cj * p.j_scale() * v
                            }
                        };
                        let mut k = MonomialKey { x_idx: key.replace_x(j, &[i], 1), ..key.clone() };
                        if let CouplingMode::Symbolic { symmetric } = self.mode {
                            insert_sorted(&mut k.j_pairs, canonical_pair((i, j), symmetric));
                        }
                        out.push(Monomial { coeff, key: k });
                    }
                }
                Letter::Lambda => {
                    for i in 1..=n {
                        let v = p.lambda()[(i as usize - 1, jc)];
                        if v == 0.0 {
                            continue;
                        }
                        let mut k = MonomialKey { x_idx: key.replace_x(j, &[i], 1), ..key.clone() };
                        if self.audit {
                            insert_sorted(&mut k.lam_pairs, (i, j));
                        }
                        out.push(Monomial { coeff: m.coeff * cj * v, key: k });
                    }
                }
                Letter::Delta => {
                    if c < 2 {
                        continue;
                    }
                    let sig = p.sigma();
                    for i in 0..=n {
                        let si = sig[(i as usize, jc)];
                        if si == 0.0 {
                            continue;
                        }
                        for i2 in 0..=n {
                            let si2 = sig[(i2 as usize, jc)];
                            if si2 == 0.0 {
                                continue;
                            }
                            let mut k = MonomialKey { x_idx: key.replace_x(j, &[i, i2], 2), ..key.clone() };
                            if self.audit {
                                insert_sorted(&mut k.sig_pairs, (i, j));
                                insert_sorted(&mut k.sig_pairs, (i2, j));
                            }
                            out.push(Monomial { coeff: m.coeff * cj * (cj - 1.0) * si * si2, key: k });
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn apply_letter(&self, poly: &Polynomial, letter: Letter) -> Result<Polynomial> {
        let mut out = Polynomial::zero();
        let mut buf = Vec::new();
        for m in poly.monomials() {
            buf.clear();
            self.expand_monomial(&m, letter, &mut buf)?;
            for t in buf.drain(..) {
                out.add_term(t.key, t.coeff);
            }
        }
        Ok(out)
    }

    pub fn apply(&self, poly: &Polynomial) -> Result<Polynomial> {
        self.apply_filtered(poly, |_| true)
    }

    /// `L poly`, keeping only result monomials accepted by `keep`.
    pub fn apply_filtered(&self, poly: &Polynomial, keep: impl Fn(&MonomialKey) -> bool) -> Result<Polynomial> {
        let mut out = Polynomial::zero();
        let mut buf = Vec::new();
        for (key, coeff) in poly.iter() {
            let m = Monomial { coeff, key: key.clone() };
            for letter in Letter::ALL {
                buf.clear();
                self.expand_monomial(&m, letter, &mut buf)?;
                for t in buf.drain(..) {
                    if keep(&t.key) {
                        out.add_term(t.key, t.coeff);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Applies a word right to left as written (`word[0]` acts last), without
    /// collecting like terms.
    pub fn expand_word(&self, f0: &Monomial, word: &[Letter]) -> Result<Vec<Monomial>> {
        let mut cur = vec![f0.clone()];
        for &letter in word.iter().rev() {
            let mut next = Vec::new();
            for m in &cur {
                self.expand_monomial(m, letter, &mut next)?;
            }
            cur = next;
        }
        Ok(cur)
    }
}

/// Exact moments of the coupling entries and of the initial condition.
#[derive(Clone, Debug)]
pub struct MomentOracle {
    pub n: usize,
    pub symmetric: bool,
    pub dist: EntryDistribution,
    pub profile: VarianceProfile,
    pub init: InitialLaw,
}

impl MomentOracle {
    pub fn new(dist: EntryDistribution, profile: VarianceProfile, symmetric: bool, init: InitialLaw) -> Result<Self> {
        let n = profile.n();
        if init.n() != n {
            return Err(Error::Dimension(format!("initial law has {} coordinates, profile has N = {n}", init.n())));
        }
        if symmetric && !profile.is_symmetric() {
            return Err(Error::InvalidArgument("symmetric oracle requires a symmetric variance profile".into()));
        }
        Ok(MomentOracle { n, symmetric, dist, profile, init })
    }

    /// Raw moment `E[A_ij^l]` for a 1-based pair.
    pub fn entry_moment(&self, pair: IndexPair, l: u32) -> f64 {
        if l == 0 {
            return 1.0;
        }
        let m = self.profile.get(pair.0 as usize - 1, pair.1 as usize - 1);
        if m == 0.0 {
            return 0.0;
        }
        m.powf(l as f64 / 2.0) * self.dist.moment(l)
    }

    /// `E[X_i(0)^l]` for a 1-based coordinate.
    pub fn init_moment(&self, i: u16, l: u32) -> f64 {
        if i == 0 {
            return 1.0;
        }
        self.init.moment(i as usize - 1, l)
    }

    /// True when some pair has identically zero entries.
    pub fn has_null_pair(&self, key: &MonomialKey) -> bool {
        key.j_pairs.iter().any(|p| self.profile.get(p.0 as usize - 1, p.1 as usize - 1) == 0.0)
    }

    pub fn expected_key(&self, key: &MonomialKey, coeff: f64) -> f64 {
        // Keys built in independent mode may hold both `ij` and `ji`; these
        // are one entry in symmetric mode and must be counted together.
        if self.symmetric && key.j_pairs.iter().any(|p| p.0 > p.1) {
            let canon = MonomialKey::new(key.j_pairs.clone(), key.x_idx.clone(), true);
            return self.expected_key(&canon, coeff);
        }
        let mut v = coeff;
        let nf = self.n as f64;
        for (p, c) in runs(&key.j_pairs) {
            v *= nf.powf(-(c as f64) / 2.0) * self.entry_moment(p, c as u32);
            if v == 0.0 {
                return 0.0;
            }
        }
        for (i, c) in runs(&key.x_idx) {
            if i > 0 {
                v *= self.init_moment(i, c as u32);
            }
        }
        v
    }
}

pub fn expected_value(m: &Monomial, oracle: &MomentOracle) -> f64 {
    oracle.expected_key(&m.key, m.coeff)
}

pub fn expected_polynomial(p: &Polynomial, oracle: &MomentOracle) -> f64 {
    p.iter().map(|(k, c)| oracle.expected_key(k, c)).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MultiplicityProfile {
    pub i_alpha: usize,
    pub i_alpha_1: usize,
    pub i_plus: usize,
    pub i_star: usize,
}

fn canonical_sorted(pairs: &[IndexPair], symmetric: bool) -> Vec<IndexPair> {
    let mut v: Vec<IndexPair> = pairs.iter().map(|p| canonical_pair(*p, symmetric)).collect();
    v.sort_unstable();
    v
}

fn is_submultiset(small: &[IndexPair], big: &[IndexPair]) -> bool {
    let mut k = 0;
    for x in small {
        while k < big.len() && big[k] < *x {
            k += 1;
        }
        if k == big.len() || big[k] != *x {
            return false;
        }
        k += 1;
    }
    true
}

/// Counts of the pairs in `alpha` and in the full pair multiset of `m`.
pub fn multiplicity_profile(m: &Monomial, alpha: &[IndexPair], symmetric: bool) -> Result<MultiplicityProfile> {
    let all = canonical_sorted(&m.key.j_pairs, symmetric);
    let a = canonical_sorted(alpha, symmetric);
    if !is_submultiset(&a, &all) {
        return Err(Error::Containment);
    }
    let a_runs: Vec<(IndexPair, usize)> = runs(&a).collect();
    let i_alpha = a_runs.len();
    let i_alpha_1 = a_runs.iter().filter(|(_, c)| *c == 1).count();
    let none_above_two = a_runs.iter().all(|(_, c)| *c <= 2);
    let i_all = runs(&all).count();
    Ok(MultiplicityProfile { i_alpha, i_alpha_1, i_plus: i_alpha_1 + none_above_two as usize, i_star: i_all - i_alpha })
}

/// True when the expectation of `m` is the same for every pair of mean-zero
/// laws with matching variances: some pair occurs exactly once, or no pair
/// occurs more than twice.
pub fn difference_vanishes(m: &Monomial, alpha: &[IndexPair], symmetric: bool) -> Result<bool> {
    let all = canonical_sorted(&m.key.j_pairs, symmetric);
    if !is_submultiset(&canonical_sorted(alpha, symmetric), &all) {
        return Err(Error::Containment);
    }
    let mults: Vec<usize> = runs(&all).map(|(_, c)| c).collect();
    let all_repeated = mults.iter().all(|&c| c >= 2);
    let some_above_two = mults.iter().any(|&c| c >= 3);
    Ok(!(all_repeated && some_above_two))
}

pub const DEFAULT_ORDER_CAP: usize = 16;
pub const NUMERIC_ORDER_CAP: usize = 32;
pub const SYMBOLIC_N_CAP: usize = 8;
pub const WORD_LENGTH_CAP: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TaylorOptions {
    pub order: usize,
    pub order_cap: usize,
    /// Fail instead of warning when the terms stop decreasing.
    pub strict: bool,
    pub max_terms: usize,
}

impl TaylorOptions {
    pub fn symbolic(order: usize) -> Self {
        TaylorOptions { order, order_cap: DEFAULT_ORDER_CAP, strict: false, max_terms: 4_000_000 }
    }

    pub fn numeric(order: usize) -> Self {
        TaylorOptions { order, order_cap: NUMERIC_ORDER_CAP, strict: false, max_terms: 4_000_000 }
    }
}

/// Truncated series with diagnostics. `terms[k]` is the order-`k` contribution.
#[derive(Clone, Debug, PartialEq)]
pub struct TaylorResult {
    pub value: f64,
    /// Extrapolated from the last terms; a heuristic, not a rigorous bound.
    pub tail_bound: f64,
    pub terms: Vec<f64>,
    pub partial_sums: Vec<f64>,
    /// The terms were not decreasing at the truncation order.
    pub not_decreasing: bool,
    pub max_polynomial_size: usize,
}

fn finish(terms: Vec<f64>, max_size: usize, opts: &TaylorOptions) -> Result<TaylorResult> {
    let mut partial = Vec::with_capacity(terms.len());
    let mut acc = 0.0;
    for t in &terms {
        acc += t;
        partial.push(acc);
    }
    let k = terms.len();
    let mag = |i: usize| terms[i].abs();
    // Compare consecutive pairs so that vanishing odd orders do not mislead.
    let (last, prev) = if k >= 4 {
        (mag(k - 1) + mag(k - 2), mag(k - 3) + mag(k - 4))
    } else if k >= 2 {
        (mag(k - 1), mag(k - 2))
    } else {
        (0.0, 0.0)
    };
    let (tail_bound, not_decreasing) = if last == 0.0 {
        (0.0, false)
    } else if last < prev {
        let q = last / prev;
        (last * q / (1.0 - q), false)
    } else {
        (f64::INFINITY, true)
    };
    if not_decreasing && opts.strict {
        return Err(Error::TermGrowth { order: k.saturating_sub(1) });
    }
    Ok(TaylorResult { value: acc, tail_bound, terms, partial_sums: partial, not_decreasing, max_polynomial_size: max_size })
}

fn check_order(opts: &TaylorOptions) -> Result<()> {
    if opts.order > opts.order_cap {
        return Err(Error::CapExceeded { what: "truncation order", requested: opts.order, cap: opts.order_cap });
    }
    Ok(())
}

fn check_size(p: &Polynomial, opts: &TaylorOptions) -> Result<()> {
    if p.len() > opts.max_terms {
        return Err(Error::CapExceeded { what: "polynomial size", requested: p.len(), cap: opts.max_terms });
    }
    Ok(())
}

fn require_symbolic(gen: &Generator, oracle: &MomentOracle) -> Result<()> {
    match gen.mode {
        CouplingMode::Symbolic { symmetric } if symmetric == oracle.symmetric => {}
        CouplingMode::Symbolic { .. } => {
            return Err(Error::InvalidArgument("generator and oracle disagree on the symmetry flag".into()));
        }
        CouplingMode::Numeric => return Err(Error::InvalidArgument("expected a symbolic-coupling generator".into())),
    }
    if gen.params.n() > SYMBOLIC_N_CAP {
        return Err(Error::CapExceeded { what: "symbolic dimension", requested: gen.params.n(), cap: SYMBOLIC_N_CAP });
    }
    if oracle.n != gen.params.n() {
        return Err(Error::Dimension(format!("oracle has N = {}, system has N = {}", oracle.n, gen.params.n())));
    }
    Ok(())
}

/// `Σ_{k<=K} t^k/k! E[L^k f(X_0)]` over the coupling law and the initial law.
pub fn taylor_mean(f: &Polynomial, gen: &Generator, oracle: &MomentOracle, t: f64, opts: &TaylorOptions) -> Result<TaylorResult> {
    check_order(opts)?;
    require_symbolic(gen, oracle)?;
    let order = opts.order;
    let mut p = prune(f, oracle, order, 0);
    let mut terms = Vec::with_capacity(order + 1);
    let mut weight = 1.0;
    let mut max_size = p.len();
    for k in 0..=order {
        if k > 0 {
            weight *= t / k as f64;
        }
        terms.push(weight * expected_polynomial(&p, oracle));
        if k == order {
            break;
        }
        let budget = order - k - 1;
        p = gen.apply_filtered(&p, |key| keep(key, oracle, budget, 0))?;
        check_size(&p, opts)?;
        max_size = max_size.max(p.len());
    }
    finish(terms, max_size, opts)
}

/// A monomial can still contribute if its singleton pairs can all be repeated
/// by the remaining `budget` letter applications plus `extra` coupling factors
/// still to be multiplied in, and no pair has identically zero entries.
fn keep(key: &MonomialKey, oracle: &MomentOracle, budget: usize, extra: usize) -> bool {
    key.singleton_pairs() <= budget + extra && !oracle.has_null_pair(key)
}

fn prune(p: &Polynomial, oracle: &MomentOracle, budget: usize, extra: usize) -> Polynomial {
    let mut out = Polynomial::zero();
    for (k, c) in p.iter() {
        if keep(k, oracle, budget, extra) {
            out.add_term(k.clone(), c);
        }
    }
    out
}

/// `Σ_{k<=K} t^k/k! (L^k f)(x)` with the coupling folded numerically.
pub fn taylor_mean_numeric_j(f: &Polynomial, gen: &Generator, x: &[f64], t: f64, opts: &TaylorOptions) -> Result<TaylorResult> {
    check_order(opts)?;
    if gen.mode != CouplingMode::Numeric {
        return Err(Error::InvalidArgument("expected a numeric-coupling generator".into()));
    }
    let n = gen.params.n();
    if x.len() != n {
        return Err(Error::Dimension(format!("x has length {}, system has N = {n}", x.len())));
    }
    let j = gen.params.j();
    let mut p = f.clone();
    let mut terms = Vec::with_capacity(opts.order + 1);
    let mut weight = 1.0;
    let mut max_size = p.len();
    for k in 0..=opts.order {
        if k > 0 {
            weight *= t / k as f64;
        }
        terms.push(weight * p.evaluate(x, j));
        if k == opts.order {
            break;
        }
        p = gen.apply(&p)?;
        check_size(&p, opts)?;
        max_size = max_size.max(p.len());
    }
    finish(terms, max_size, opts)
}

/// `E[f¹(X_{t_1}) ... f^l(X_{t_l})]` by the nested expansion
/// `Σ Π Δt_i^{k_i}/k_i! E[L^{k_1}[f¹ L^{k_2}[f² ...]]]` with `Σ k_i <= K`.
/// `terms[k]` collects the contributions of total order `k`.
pub fn taylor_mean_multitime(
    fs: &[Polynomial],
    ts: &[f64],
    gen: &Generator,
    oracle: &MomentOracle,
    opts: &TaylorOptions,
) -> Result<TaylorResult> {
    check_order(opts)?;
    require_symbolic(gen, oracle)?;
    if fs.is_empty() || fs.len() != ts.len() {
        return Err(Error::InvalidArgument("need one time per polynomial".into()));
    }
    if ts.iter().any(|t| !(*t >= 0.0)) || ts.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("times must be nonnegative and nondecreasing".into()));
    }
    let order = opts.order;
    let l = fs.len();
    // Coupling degree still to be multiplied in outside level i.
    let outer_j: Vec<usize> = (0..l).map(|i| fs[..i].iter().map(|f| f.max_j_degree()).sum()).collect();
    let mut max_size = 0;
    let mut buckets: Vec<Polynomial> = vec![Polynomial::zero(); order + 1];
    buckets[0] = Polynomial::from_monomial(Monomial::x(&[0]));
    for lvl in (0..l).rev() {
        let dt = ts[lvl] - if lvl == 0 { 0.0 } else { ts[lvl - 1] };
        let mut next: Vec<Polynomial> = vec![Polynomial::zero(); order + 1];
        for (tot, inner) in buckets.iter().enumerate() {
            if inner.is_empty() {
                continue;
            }
            let mut p = prune(&fs[lvl].mul(inner), oracle, order - tot, outer_j[lvl]);
            let mut w = 1.0;
            for kk in 0..=(order - tot) {
                if kk > 0 {
                    if dt == 0.0 {
                        break;
                    }
                    w *= dt / kk as f64;
                    let budget = order - tot - kk;
                    let extra = outer_j[lvl];
                    p = gen.apply_filtered(&p, |key| keep(key, oracle, budget, extra))?;
                    check_size(&p, opts)?;
                }
                max_size = max_size.max(p.len());
                next[tot + kk].add_scaled(&p, w);
            }
        }
        buckets = next;
    }
    let terms: Vec<f64> = buckets.iter().map(|b| expected_polynomial(b, oracle)).collect();
    finish(terms, max_size, opts)
}

/// Term count of a word applied to a monomial against the per-letter bound
/// `r^k N^{k_J} 𝒩_Λ^{k_Λ} 𝒩_σ^{2 k_Δ}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CountCheck {
    pub actual: u128,
    pub bound: u128,
}

impl CountCheck {
    pub fn holds(&self) -> bool {
        self.actual <= self.bound
    }
}

pub fn count_bound_check(gen: &Generator, word: &[Letter], f0: &Monomial) -> Result<CountCheck> {
    if word.len() > WORD_LENGTH_CAP {
        return Err(Error::CapExceeded { what: "word length", requested: word.len(), cap: WORD_LENGTH_CAP });
    }
    let actual = gen.expand_word(f0, word)?.len() as u128;
    let b = gen.params.bounds();
    let r = f0.key.degree() as u128;
    let n = gen.params.n() as u128;
    let mut bound: u128 = 1;
    for letter in word {
        let factor = match letter {
            Letter::H => r,
            Letter::J => r * n,
            Letter::Lambda => r * b.n_lambda as u128,
            Letter::Delta => r * (b.n_sigma as u128).pow(2),
        };
        bound = bound.saturating_mul(factor);
    }
    debug_assert!(actual <= bound);
    Ok(CountCheck { actual, bound })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::CoordinateLaw;
    use nalgebra::DVector;

    fn params(n: usize, j_scale: f64, lam: f64, h: &[f64], s0: f64) -> SystemParams {
        let mut sigma = DMatrix::zeros(n + 1, n);
        sigma.row_mut(0).fill(s0);
        SystemParams::new(DMatrix::zeros(n, n), j_scale, DMatrix::identity(n, n) * lam, DVector::from_column_slice(h), sigma).unwrap()
    }

    fn poly(s: &str) -> Polynomial {
        Polynomial::parse(s, false).unwrap()
    }

    #[test]
    fn h_letter_product_rule() {
        let p = params(2, 1.0, 0.0, &[2.0, 3.0], 0.0);
        let g = Generator::symbolic(&p, false);
        let out = g.apply_letter(&poly("x1*x2"), Letter::H).unwrap();
        let expect = Polynomial::from_terms([Monomial::new(2.0, vec![], vec![0, 2], false), Monomial::new(3.0, vec![], vec![0, 1], false)]);
        assert_eq!(out, expect);
    }

    #[test]
    fn j_letter_on_linear_monomial() {
        let p = params(2, 1.0, 0.0, &[0.0, 0.0], 0.0);
        let g = Generator::symbolic(&p, false);
        let out = g.apply_letter(&poly("x1"), Letter::J).unwrap();
        let expect = Polynomial::from_terms([Monomial::new(1.0, vec![(1, 1)], vec![1], false), Monomial::new(1.0, vec![(2, 1)], vec![2], false)]);
        assert_eq!(out, expect);
    }

    #[test]
    fn delta_letter_on_square() {
        let s = 0.7;
        let p = params(1, 1.0, 0.0, &[0.0], s);
        let g = Generator::symbolic(&p, false);
        let out = g.apply_letter(&poly("x1^2"), Letter::Delta).unwrap();
        assert_eq!(out, Polynomial::from_monomial(Monomial::new(2.0 * s * s, vec![], vec![0, 0], false)));
        let audited = Generator::symbolic(&p, false).with_audit(true).apply_letter(&poly("x1^2"), Letter::Delta).unwrap();
        assert_eq!(audited.monomials()[0].key.sig_pairs, vec![(0, 1), (0, 1)]);
    }

    #[test]
    fn generator_on_constants_and_linear() {
        let p = params(1, 1.0, -0.4, &[1.5], 0.3);
        let g = Generator::symbolic(&p, false);
        assert!(g.apply(&poly("5")).unwrap().is_empty());
        let out = g.apply(&poly("x1")).unwrap();
        let expect = Polynomial::from_terms([
            Monomial::new(1.0, vec![(1, 1)], vec![1], false),
            Monomial::new(-0.4, vec![], vec![1], false),
            Monomial::new(1.5, vec![], vec![0], false),
        ]);
        assert_eq!(out, expect);
    }

    #[test]
    fn degree_is_preserved() {
        let p = params(3, 2.0, -1.0, &[0.1, 0.2, 0.3], 0.4);
        let g = Generator::symbolic(&p, true).with_audit(true);
        let mut f = poly("x1^2*x2 + x3*x2*x2");
        for _ in 0..3 {
            f = g.apply(&f).unwrap();
            assert!(f.iter().all(|(k, _)| k.degree() == 3));
        }
    }

    #[test]
    fn index_range_is_checked() {
        let p = params(2, 1.0, 0.0, &[0.0, 0.0], 0.0);
        let g = Generator::symbolic(&p, false);
        assert!(matches!(g.apply(&poly("x3")), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn parse_and_display_round_trip() {
        let p = poly("2*x1^2 - 0.5*J1_2^2*x1 + 3 + 1e-3*x2");
        let q = Polynomial::parse(&p.to_string(), false).unwrap();
        assert_eq!(p, q);
        assert!(Polynomial::parse("2*y1", false).is_err());
        assert!(Polynomial::parse("J0_1*x1", false).is_err());
        let s = Polynomial::parse("J2_1*x1 + J1_2*x1", true).unwrap();
        assert_eq!(s.len(), 1);
    }

    fn oracle(n: usize, dist: EntryDistribution, symmetric: bool, init: CoordinateLaw) -> MomentOracle {
        MomentOracle::new(dist, VarianceProfile::ones(n), symmetric, InitialLaw::iid(n, init)).unwrap()
    }

    #[test]
    fn symmetric_oracle_merges_transposed_pairs() {
        let o = oracle(3, EntryDistribution::Rademacher, true, CoordinateLaw::point(1.0));
        let m = Monomial::new(2.0, vec![(1, 2), (2, 1)], vec![1], false);
        assert!((expected_value(&m, &o) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn oracle_basics() {
        let o = oracle(3, EntryDistribution::Gaussian, false, CoordinateLaw::standard(EntryDistribution::Gaussian));
        assert_eq!(o.entry_moment((1, 2), 0), 1.0);
        assert_eq!(o.entry_moment((1, 2), 1), 0.0);
        assert_eq!(o.entry_moment((1, 2), 2), 1.0);
        assert_eq!(expected_value(&Monomial::new(1.0, vec![(1, 2)], vec![1], false), &o), 0.0);
        let shifted = CoordinateLaw { dist: Some(EntryDistribution::Gaussian), mean: 0.8, scale: 1.0 };
        let o2 = oracle(3, EntryDistribution::Gaussian, false, shifted);
        let v = expected_value(&Monomial::new(1.0, vec![(1, 2), (1, 2)], vec![1], false), &o2);
        assert!((v - 0.8 / 3.0).abs() < 1e-15);
        let zero_mean = expected_value(&Monomial::new(1.0, vec![(1, 2), (1, 2)], vec![1], false), &o);
        assert_eq!(zero_mean, 0.0);
    }

    #[test]
    fn scaling_exponent_in_n() {
        let key = |_n: usize| Monomial::new(1.0, vec![(1, 2), (1, 2), (1, 2), (1, 2), (2, 1), (2, 1)], vec![0], false);
        let o3 = oracle(3, EntryDistribution::Rademacher, false, CoordinateLaw::point(1.0));
        let o7 = oracle(7, EntryDistribution::Rademacher, false, CoordinateLaw::point(1.0));
        let (a, b) = (expected_value(&key(3), &o3), expected_value(&key(7), &o7));
        assert!((a / b - (7.0f64 / 3.0).powi(3)).abs() < 1e-12);
    }

    #[test]
    fn profile_examples() {
        let m = Monomial::new(1.0, vec![(1, 2)], vec![1], false);
        let p = multiplicity_profile(&m, &[(1, 2)], false).unwrap();
        assert_eq!(p, MultiplicityProfile { i_alpha: 1, i_alpha_1: 1, i_plus: 2, i_star: 0 });
        let m3 = Monomial::new(1.0, vec![(1, 2); 3], vec![1], false);
        let p = multiplicity_profile(&m3, &[(1, 2); 3], false).unwrap();
        assert_eq!(p, MultiplicityProfile { i_alpha: 1, i_alpha_1: 0, i_plus: 0, i_star: 0 });
        let ms = Monomial::new(1.0, vec![(1, 2), (2, 1)], vec![1], false);
        let p = multiplicity_profile(&ms, &[(1, 2), (2, 1)], true).unwrap();
        assert_eq!((p.i_alpha, p.i_alpha_1, p.i_plus), (1, 0, 1));
        let p = multiplicity_profile(&ms, &[(1, 2), (2, 1)], false).unwrap();
        assert_eq!((p.i_alpha, p.i_alpha_1, p.i_plus), (2, 2, 3));
        assert!(matches!(multiplicity_profile(&m, &[(2, 1)], false), Err(Error::Containment)));
        let empty = multiplicity_profile(&Monomial::x(&[1]), &[], false).unwrap();
        assert_eq!(empty.i_plus, 1);
    }

    #[test]
    fn vanishing_examples() {
        let two = Monomial::new(1.0, vec![(1, 2), (1, 2)], vec![1], false);
        let three = Monomial::new(1.0, vec![(1, 2); 3], vec![1], false);
        let one_two = Monomial::new(1.0, vec![(1, 2), (2, 3), (2, 3)], vec![1], false);
        assert!(difference_vanishes(&two, &[], false).unwrap());
        assert!(!difference_vanishes(&three, &[], false).unwrap());
        assert!(difference_vanishes(&one_two, &[], false).unwrap());
        assert!(difference_vanishes(&Monomial::x(&[1, 2]), &[], false).unwrap());
        assert!(difference_vanishes(&two, &[(3, 3)], false).is_err());
    }

    #[test]
    fn taylor_at_time_zero() {
        let p = params(2, 1.0, -1.0, &[0.0, 0.0], 0.5);
        let g = Generator::symbolic(&p, false);
        let init = CoordinateLaw { dist: Some(EntryDistribution::Gaussian), mean: 0.3, scale: 1.0 };
        let o = MomentOracle::new(EntryDistribution::Gaussian, VarianceProfile::off_diagonal(2), false, InitialLaw::iid(2, init)).unwrap();
        let r = taylor_mean(&poly("x1"), &g, &o, 0.0, &TaylorOptions::symbolic(6)).unwrap();
        assert_eq!(r.value, 0.3);
    }

    #[test]
    fn taylor_terminates_for_pure_noise() {
        let s = 0.6;
        let p = params(1, 1.0, 0.0, &[0.0], s);
        let g = Generator::symbolic(&p, false);
        let init = CoordinateLaw { dist: Some(EntryDistribution::UniformCentered), mean: 0.2, scale: 1.0 };
        // The zero diagonal variance removes every coupling term at N = 1.
        let o = MomentOracle::new(EntryDistribution::Gaussian, VarianceProfile::off_diagonal(1), false, InitialLaw::iid(1, init)).unwrap();
        let t = 0.7;
        for k in 1..=4 {
            let r = taylor_mean(&poly("x1^2"), &g, &o, t, &TaylorOptions::symbolic(k)).unwrap();
            let expect = init.moment(2) + 2.0 * s * s * t;
            assert!((r.value - expect).abs() < 1e-14, "K={k}");
            if k >= 2 {
                assert_eq!(r.tail_bound, 0.0);
            }
        }
    }

    #[test]
    fn order_and_dimension_caps() {
        let p = params(2, 1.0, 0.0, &[0.0, 0.0], 0.0);
        let g = Generator::symbolic(&p, false);
        let o = oracle(2, EntryDistribution::Gaussian, false, CoordinateLaw::point(1.0));
        assert!(matches!(taylor_mean(&poly("x1"), &g, &o, 0.1, &TaylorOptions::symbolic(17)), Err(Error::CapExceeded { .. })));
        let big = params(9, 1.0, 0.0, &[0.0; 9], 0.0);
        let gb = Generator::symbolic(&big, false);
        let ob = oracle(9, EntryDistribution::Gaussian, false, CoordinateLaw::point(1.0));
        assert!(taylor_mean(&poly("x1"), &gb, &ob, 0.1, &TaylorOptions::symbolic(2)).is_err());
    }

    #[test]
    fn growth_is_flagged_and_strict_mode_fails() {
        // Pure exponential growth e^{5t} at t = 3: terms grow up to order 15.
        let p = params(1, 1.0, 5.0, &[0.0], 0.0);
        let g = Generator::symbolic(&p, false);
        let o = MomentOracle::new(EntryDistribution::Gaussian, VarianceProfile::off_diagonal(1), false, InitialLaw::iid(1, CoordinateLaw::point(1.0))).unwrap();
        let r = taylor_mean(&poly("x1"), &g, &o, 3.0, &TaylorOptions::symbolic(8)).unwrap();
        assert!(r.not_decreasing && r.tail_bound.is_infinite());
        let strict = TaylorOptions { strict: true, ..TaylorOptions::symbolic(8) };
        assert!(matches!(taylor_mean(&poly("x1"), &g, &o, 3.0, &strict), Err(Error::TermGrowth { .. })));
        let fine = taylor_mean(&poly("x1"), &g, &o, 0.1, &TaylorOptions::symbolic(12)).unwrap();
        assert!(!fine.not_decreasing);
        assert!((fine.value - 0.5f64.exp()).abs() < 1e-12);
        assert!(fine.tail_bound < 1e-8);
    }

    #[test]
    fn numeric_j_matches_exponential() {
        let j = DMatrix::from_row_slice(3, 3, &[0.1, -0.4, 0.2, 0.3, 0.0, -0.1, 0.25, 0.5, -0.2]);
        let lambda = DMatrix::from_row_slice(3, 3, &[-0.5, 0.1, 0.0, 0.0, -0.3, 0.0, 0.2, 0.0, -0.6]);
        let mut sigma = DMatrix::zeros(4, 3);
        sigma.row_mut(0).fill(0.2);
        let p = SystemParams::linear(j, lambda, DVector::from_vec(vec![0.3, -0.2, 0.1]), sigma).unwrap();
        let g = Generator::numeric(&p);
        let x = [0.4, -1.0, 0.7];
        let exact = crate::sde::exact_mean_linear(&p, &DVector::from_column_slice(&x), 0.8).unwrap();
        for jj in 1..=3u16 {
            let f = Polynomial::from_monomial(Monomial::x(&[jj]));
            let r = taylor_mean_numeric_j(&f, &g, &x, 0.8, &TaylorOptions::numeric(20)).unwrap();
            assert!((r.value - exact[jj as usize - 1]).abs() < 1e-10);
        }
        let r0 = taylor_mean_numeric_j(&poly("x1*x2 + 2"), &g, &x, 0.0, &TaylorOptions::numeric(5)).unwrap();
        assert!((r0.value - (x[0] * x[1] + 2.0)).abs() < 1e-15);
    }

    #[test]
    fn multitime_reductions() {
        let p = params(2, 1.0, -0.5, &[0.2, -0.1], 0.3);
        let g = Generator::symbolic(&p, true);
        let init = CoordinateLaw { dist: Some(EntryDistribution::Rademacher), mean: 0.5, scale: 1.0 };
        let o = MomentOracle::new(EntryDistribution::Gaussian, VarianceProfile::off_diagonal(2), true, InitialLaw::iid(2, init)).unwrap();
        let opts = TaylorOptions::symbolic(6);
        let f = poly("x1 + x1*x2");
        let single = taylor_mean(&f, &g, &o, 0.3, &opts).unwrap();
        let multi = taylor_mean_multitime(std::slice::from_ref(&f), &[0.3], &g, &o, &opts).unwrap();
        assert!((single.value - multi.value).abs() < 1e-14);
        let f2 = poly("x2");
        let both = taylor_mean_multitime(&[f.clone(), f2.clone()], &[0.3, 0.3], &g, &o, &opts).unwrap();
        let prod = taylor_mean(&f.mul(&f2), &g, &o, 0.3, &opts).unwrap();
        assert!((both.value - prod.value).abs() < 1e-14);
        assert!(taylor_mean_multitime(&[f.clone(), f2], &[0.3, 0.1], &g, &o, &opts).is_err());
    }

    #[test]
    fn count_bound_examples() {
        let p = params(5, 1.0, -1.0, &[1.0; 5], 0.2);
        let g = Generator::symbolic(&p, false);
        let c = count_bound_check(&g, &[Letter::H], &Monomial::x(&[1, 2])).unwrap();
        assert!(c.actual <= 2 && c.holds());
        let c = count_bound_check(&g, &[Letter::J], &Monomial::x(&[3])).unwrap();
        assert_eq!((c.actual, c.bound), (5, 5));
        assert!(count_bound_check(&g, &[Letter::J; 9], &Monomial::x(&[1])).is_err());
    }
}
