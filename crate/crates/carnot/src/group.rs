//! Graded nilpotent Lie groups in exponential coordinates.
//!
//! A [`GroupSpec`] stores the layer weight of every coordinate and the
//! structure constants of the Lie bracket. The group law is given by the
//! Baker-Campbell-Hausdorff series, which terminates for nilpotent algebras;
//! it is implemented exactly up to step 4.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of the group, stored in exponential coordinates.
pub type GroupPoint = Vec<f64>;

const MAX_STEP: u32 = 4;

/// Graded Lie algebra data of a stratified group.
#[derive(Clone, Debug)]
pub struct GroupSpec {
    name: Option<String>,
    n: usize,
    weights: Vec<u32>,
    step: u32,
    l: usize,
    q: u32,
    /// Dense table, `table[(i * n + j) * n + k] = c^k_{ij}`.
    table: Vec<f64>,
    /// Nonzero entries of `table`, both orderings.
    nz: Vec<Bracket>,
}

impl PartialEq for GroupSpec {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.weights == other.weights && self.table == other.table
    }
}

/// JSON form of a group: `{"n":…, "weights":[…], "brackets":[[i,j,k,c],…]}`.
///
/// Bracket indices are 1-based, matching the usual `c^k_{ij}` notation, and
/// each entry defines `[Y_i, Y_j] = … + c Y_k + …`. The antisymmetric partner
/// is implied; if it is listed too it must carry the opposite sign.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GroupDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub n: usize,
    pub weights: Vec<u32>,
    #[serde(default)]
    pub brackets: Vec<[f64; 4]>,
}

/// Either a preset name such as `"heisenberg(1)"` or an explicit table.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GroupDescriptor {
    Preset(String),
    Table(GroupDoc),
}

/// Lie bracket entry `[Y_i, Y_j] = c Y_k` with 0-based indices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bracket {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub c: f64,
}

/// Multi-index `I` together with its homogeneous degree `d(I) = Σ I_i d_i`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MultiIndex {
    pub exponents: Vec<u32>,
    pub degree: u32,
}

impl MultiIndex {
    /// Ordinary length `|I| = Σ I_i`.
    pub fn order(&self) -> u32 {
        self.exponents.iter().sum()
    }
}

pub fn make_group(desc: &GroupDescriptor) -> Result<GroupSpec> {
    match desc {
        GroupDescriptor::Preset(name) => GroupSpec::preset(name),
        GroupDescriptor::Table(doc) => GroupSpec::from_doc(doc),
    }
}

impl GroupSpec {
    /// Abelian group `R^n`.
    pub fn euclidean(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGroup("dimension must be positive".into()));
        }
        let mut g = Self::from_brackets(vec![1; n], &[])?;
        g.name = Some(format!("euclidean({n})"));
        Ok(g)
    }

    /// Heisenberg group `H^n` with coordinates `(p_1..p_n, q_1..q_n, t)` and
    /// `[Y_{p_i}, Y_{q_i}] = Y_t`.
    pub fn heisenberg(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGroup("dimension must be positive".into()));
        }
        let mut weights = vec![1; 2 * n];
        weights.push(2);
        let brackets: Vec<Bracket> = (0..n)
            .map(|i| Bracket {
                i,
                j: n + i,
                k: 2 * n,
                c: 1.0,
            })
            .collect();
        let mut g = Self::from_brackets(weights, &brackets)?;
        g.name = Some(format!("heisenberg({n})"));
        Ok(g)
    }

    /// Parses `euclidean(n)` or `heisenberg(n)`.
    pub fn preset(name: &str) -> Result<Self> {
        let s = name.trim().to_ascii_lowercase();
        let parse = |prefix: &str| -> Option<usize> {
            s.strip_prefix(prefix)?
                .strip_prefix('(')?
                .strip_suffix(')')?
                .trim()
                .parse()
                .ok()
        };
        if let Some(n) = parse("euclidean") {
            Self::euclidean(n)
        } else if let Some(n) = parse("heisenberg") {
            Self::heisenberg(n)
        } else {
            Err(Error::InvalidGroup(format!("unknown preset '{name}'")))
        }
    }

    pub fn from_doc(doc: &GroupDoc) -> Result<Self> {
        if doc.weights.len() != doc.n {
            return Err(Error::DimensionMismatch {
                expected: doc.n,
                got: doc.weights.len(),
            });
        }
        let mut brackets = Vec::with_capacity(doc.brackets.len());
        for b in &doc.brackets {
            let idx = |v: f64| -> Result<usize> {
                if v.fract() != 0.0 || v < 1.0 || v > doc.n as f64 {
                    return Err(Error::InvalidGroup(format!(
                        "bracket index {v} is not in 1..={}",
                        doc.n
                    )));
                }
                Ok(v as usize - 1)
            };
            brackets.push(Bracket {
                i: idx(b[0])?,
                j: idx(b[1])?,
                k: idx(b[2])?,
                c: b[3],
            });
        }
        let mut g = Self::from_brackets(doc.weights.clone(), &brackets)?;
        g.name = doc.name.clone();
        Ok(g)
    }

    /// Builds and validates a group from weights and bracket entries.
    pub fn from_brackets(weights: Vec<u32>, brackets: &[Bracket]) -> Result<Self> {
        let n = weights.len();
        if n == 0 {
            return Err(Error::InvalidGroup("dimension must be positive".into()));
        }
        if weights[0] != 1 {
            return Err(Error::InvalidGroup(
                "the first layer must have weight 1".into(),
            ));
        }
        if weights.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidGroup("weights must be non-decreasing".into()));
        }
        let step = *weights.last().unwrap();
        if step > MAX_STEP {
            return Err(Error::UnsupportedStep(step));
        }
        let mut table = vec![0.0; n * n * n];
        let mut given = vec![false; n * n * n];
        let at = |i: usize, j: usize, k: usize| (i * n + j) * n + k;
        for b in brackets {
            for &v in &[b.i, b.j, b.k] {
                if v >= n {
                    return Err(Error::IndexOutOfRange { index: v, len: n });
                }
            }
            if !b.c.is_finite() {
                return Err(Error::InvalidGroup("non-finite structure constant".into()));
            }
            if b.c == 0.0 {
                continue;
            }
            if b.i == b.j || (given[at(b.j, b.i, b.k)] && table[at(b.j, b.i, b.k)] != -b.c) {
                return Err(Error::AntisymmetryViolation {
                    i: b.i + 1,
                    j: b.j + 1,
                    k: b.k + 1,
                });
            }
            if given[at(b.i, b.j, b.k)] && table[at(b.i, b.j, b.k)] != b.c {
                return Err(Error::AntisymmetryViolation {
                    i: b.i + 1,
                    j: b.j + 1,
                    k: b.k + 1,
                });
            }
            if weights[b.k] != weights[b.i] + weights[b.j] {
                return Err(Error::GradingViolation {
                    i: b.i + 1,
                    j: b.j + 1,
                    k: b.k + 1,
                    wi: weights[b.i],
                    wj: weights[b.j],
                    wk: weights[b.k],
                });
            }
            table[at(b.i, b.j, b.k)] = b.c;
            table[at(b.j, b.i, b.k)] = -b.c;
            given[at(b.i, b.j, b.k)] = true;
            given[at(b.j, b.i, b.k)] = true;
        }
        let mut nz = Vec::new();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let c = table[at(i, j, k)];
                    if c != 0.0 {
                        nz.push(Bracket { i, j, k, c });
                    }
                }
            }
        }
        let g = GroupSpec {
            nz,
            name: None,
            n,
            l: weights.iter().filter(|&&w| w == 1).count(),
            q: weights.iter().sum(),
            step,
            weights,
            table,
        };
        g.check_jacobi()?;
        Ok(g)
    }

    /// Verifies the Jacobi identity in exact rational arithmetic.
    fn check_jacobi(&self) -> Result<()> {
        let n = self.n;
        let rat: Vec<BigRational> = self
            .table
            .iter()
            .map(|&c| BigRational::from_f64(c).expect("finite constant"))
            .collect();
        let c = |i: usize, j: usize, k: usize| &rat[(i * n + j) * n + k];
        for i in 0..n {
            for j in (i + 1)..n {
                for l in (j + 1)..n {
                    for m in 0..n {
                        let mut acc = BigRational::from_integer(BigInt::zero());
                        for k in 0..n {
                            acc += c(j, l, k) * c(i, k, m);
                            acc += c(l, i, k) * c(j, k, m);
                            acc += c(i, j, k) * c(l, k, m);
                        }
                        if !acc.is_zero() {
                            return Err(Error::JacobiViolation {
                                i: i + 1,
                                j: j + 1,
                                l: l + 1,
                                m: m + 1,
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    /// Preset name when available, otherwise a generic label.
    pub fn label(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| format!("graded(n={}, Q={})", self.n, self.q))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn weights(&self) -> &[u32] {
        &self.weights
    }

    pub fn step(&self) -> u32 {
        self.step
    }

    /// Dimension of the first layer.
    pub fn l(&self) -> usize {
        self.l
    }

    /// Homogeneous dimension.
    pub fn homogeneous_dim(&self) -> u32 {
        self.q
    }

    pub fn is_abelian(&self) -> bool {
        self.table.iter().all(|&c| c == 0.0)
    }

    /// Structure constant `c^k_{ij}` (0-based).
    pub fn structure_constant(&self, i: usize, j: usize, k: usize) -> f64 {
        self.table[(i * self.n + j) * self.n + k]
    }

    /// Nonzero entries with `i < j`.
    pub fn brackets(&self) -> Vec<Bracket> {
        let n = self.n;
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                for k in 0..n {
                    let c = self.structure_constant(i, j, k);
                    if c != 0.0 {
                        out.push(Bracket { i, j, k, c });
                    }
                }
            }
        }
        out
    }

    pub fn to_doc(&self) -> GroupDoc {
        GroupDoc {
            name: self.name.clone(),
            n: self.n,
            weights: self.weights.clone(),
            brackets: self
                .brackets()
                .iter()
                .map(|b| [(b.i + 1) as f64, (b.j + 1) as f64, (b.k + 1) as f64, b.c])
                .collect(),
        }
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Lie bracket `[x, y]` written into `out`.
    pub fn bracket_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for b in &self.nz {
            out[b.k] += b.c * x[b.i] * y[b.j];
        }
    }

    pub fn bracket(&self, x: &[f64], y: &[f64]) -> Result<GroupPoint> {
        self.check_len(x)?;
        self.check_len(y)?;
        let mut out = vec![0.0; self.n];
        self.bracket_into(x, y, &mut out);
        Ok(out)
    }

    /// Group product without length checks; `out` must not alias the inputs.
    pub fn product_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let n = self.n;
        for k in 0..n {
            out[k] = x[k] + y[k];
        }
        if self.step == 1 {
            return;
        }
        if self.step == 2 {
            for b in &self.nz {
                out[b.k] += 0.5 * b.c * x[b.i] * y[b.j];
            }
            return;
        }
        let mut xy = vec![0.0; n];
        self.bracket_into(x, y, &mut xy);
        for k in 0..n {
            out[k] += 0.5 * xy[k];
        }
        let mut x_xy = vec![0.0; n];
        let mut y_xy = vec![0.0; n];
        self.bracket_into(x, &xy, &mut x_xy);
        self.bracket_into(y, &xy, &mut y_xy);
        for k in 0..n {
            out[k] += (x_xy[k] - y_xy[k]) / 12.0;
        }
        if self.step == 3 {
            return;
        }
        let mut y_x_xy = vec![0.0; n];
        self.bracket_into(y, &x_xy, &mut y_x_xy);
        for k in 0..n {
            out[k] -= y_x_xy[k] / 24.0;
        }
    }

    /// Baker-Campbell-Hausdorff product `x · y`.
    pub fn product(&self, x: &[f64], y: &[f64]) -> Result<GroupPoint> {
        self.check_len(x)?;
        self.check_len(y)?;
        let mut out = vec![0.0; self.n];
        self.product_into(x, y, &mut out);
        Ok(out)
    }

    pub fn identity(&self) -> GroupPoint {
        vec![0.0; self.n]
    }

    pub fn inverse(&self, x: &[f64]) -> GroupPoint {
        x.iter().map(|v| -v).collect()
    }

    pub fn dilate_into(&self, a: f64, x: &[f64], out: &mut [f64]) {
        for k in 0..self.n {
            out[k] = a.powi(self.weights[k] as i32) * x[k];
        }
    }

    /// Dilation `δ_a x = (a^{d_1} x_1, …, a^{d_n} x_n)`.
    pub fn dilate(&self, a: f64, x: &[f64]) -> Result<GroupPoint> {
        if !(a > 0.0) {
            return Err(Error::NonPositiveScale(a));
        }
        self.check_len(x)?;
        let mut out = vec![0.0; self.n];
        self.dilate_into(a, x, &mut out);
        Ok(out)
    }

    /// Least common multiple of the weights.
    pub fn weight_lcm(&self) -> u32 {
        fn gcd(a: u32, b: u32) -> u32 {
            if b == 0 {
                a
            } else {
                gcd(b, a % b)
            }
        }
        self.weights.iter().fold(1, |acc, &w| acc / gcd(acc, w) * w)
    }

    /// Homogeneous quasi-norm `(Σ x_i^{2M/d_i})^{1/(2M)}` with `M` the lcm
    /// of the weights.
    pub fn quasi_norm(&self, x: &[f64]) -> f64 {
        let m = self.weight_lcm();
        let scale = x.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        // Factor out a homogeneous scale so the even powers cannot overflow.
        let mut rho = 0.0f64;
        for (k, &v) in x.iter().enumerate() {
            let d = self.weights[k];
            rho = rho.max(v.abs().powf(1.0 / d as f64));
        }
        let mut acc = 0.0;
        for (k, &v) in x.iter().enumerate() {
            let d = self.weights[k];
            let scaled = v / rho.powi(d as i32);
            acc += scaled.powi((2 * m / d) as i32);
        }
        rho * acc.powf(1.0 / (2 * m) as f64)
    }

    /// Coordinate coefficients of the left-invariant field `Y_i` at `x`,
    /// i.e. `d/ds (x · s e_i)` at `s = 0`:
    /// `e_i + ½[x,e_i] + (1/12)[x,[x,e_i]]`, exact up to step 4.
    pub fn left_field_coeffs(&self, i: usize, x: &[f64]) -> Result<Vec<f64>> {
        if i >= self.n {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.n,
            });
        }
        self.check_len(x)?;
        let n = self.n;
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        let mut out = e.clone();
        if self.step >= 2 {
            let mut ad1 = vec![0.0; n];
            self.bracket_into(x, &e, &mut ad1);
            for k in 0..n {
                out[k] += 0.5 * ad1[k];
            }
            if self.step >= 3 {
                let mut ad2 = vec![0.0; n];
                self.bracket_into(x, &ad1, &mut ad2);
                for k in 0..n {
                    out[k] += ad2[k] / 12.0;
                }
            }
        }
        Ok(out)
    }

    /// Symbolic version of [`left_field_coeffs`](Self::left_field_coeffs):
    /// slot `k` holds the coefficient of `∂_k` as a polynomial in `x`.
    pub fn left_field_polys(&self, i: usize) -> Result<Vec<Poly>> {
        if i >= self.n {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.n,
            });
        }
        let n = self.n;
        let xs: Vec<Poly> = (0..n).map(|k| Poly::var(n, k)).collect();
        let ad = |v: &[Poly]| -> Vec<Poly> {
            let mut out = vec![Poly::zero(n); n];
            for a in 0..n {
                for b in 0..n {
                    for k in 0..n {
                        let c = self.structure_constant(a, b, k);
                        if c != 0.0 && !v[b].is_zero() {
                            out[k] = out[k].add(&xs[a].mul(&v[b]).scale(c));
                        }
                    }
                }
            }
            out
        };
        let mut e = vec![Poly::zero(n); n];
        e[i] = Poly::constant(n, 1.0);
        let ad1 = ad(&e);
        let ad2 = ad(&ad1);
        Ok((0..n)
            .map(|k| e[k].add(&ad1[k].scale(0.5)).add(&ad2[k].scale(1.0 / 12.0)))
            .collect())
    }

    /// All multi-indices with `d(I) ≤ k`, in lexicographic order.
    pub fn poly_basis(&self, k: u32) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        let mut cur = vec![0u32; self.n];
        self.enumerate(0, k, &mut cur, &mut out);
        out.sort();
        out
    }

    fn enumerate(&self, slot: usize, budget: u32, cur: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
        if slot == self.n {
            out.push(self.multi_index(cur.clone()));
            return;
        }
        let d = self.weights[slot];
        let mut e = 0;
        while e * d <= budget {
            cur[slot] = e;
            self.enumerate(slot + 1, budget - e * d, cur, out);
            e += 1;
        }
        cur[slot] = 0;
    }

    pub fn multi_index(&self, exponents: Vec<u32>) -> MultiIndex {
        let degree = exponents
            .iter()
            .zip(&self.weights)
            .map(|(e, d)| e * d)
            .sum();
        MultiIndex { exponents, degree }
    }

    /// Largest observed `|xy| / (|x| + |y|)` over random pairs spread over
    /// several orders of magnitude in relative scale.
    pub fn quasi_triangle_constant(&self, samples: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.n;
        let mut x = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut xy = vec![0.0; n];
        let mut best: f64 = 0.0;
        for _ in 0..samples {
            let a: f64 = 2f64.powf(rng.random_range(-3.0..3.0));
            let b: f64 = 2f64.powf(rng.random_range(-3.0..3.0));
            for k in 0..n {
                let u: f64 = rng.sample(StandardNormal);
                let v: f64 = rng.sample(StandardNormal);
                x[k] = u * a.powi(self.weights[k] as i32);
                y[k] = v * b.powi(self.weights[k] as i32);
            }
            self.product_into(&x, &y, &mut xy);
            let denom = self.quasi_norm(&x) + self.quasi_norm(&y);
            if denom > 0.0 {
                best = best.max(self.quasi_norm(&xy) / denom);
            }
        }
        best
    }
}

impl fmt::Display for GroupSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "group      {}", self.label())?;
        writeln!(f, "n          {}", self.n)?;
        writeln!(f, "weights    {:?}", self.weights)?;
        writeln!(f, "step       {}", self.step)?;
        writeln!(f, "dim V1     {}", self.l)?;
        writeln!(f, "Q          {}", self.q)?;
        let br = self.brackets();
        if br.is_empty() {
            write!(f, "brackets   (abelian)")
        } else {
            write!(f, "brackets  ")?;
            for b in br {
                write!(f, " [Y{},Y{}]={}Y{}", b.i + 1, b.j + 1, b.c, b.k + 1)?;
            }
            Ok(())
        }
    }
}

/// Sparse real polynomial in `n` variables.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly {
    n: usize,
    terms: BTreeMap<Vec<u32>, f64>,
}

impl Poly {
    pub fn zero(n: usize) -> Self {
        Poly {
            n,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self::monomial(n, vec![0; n], c)
    }

    pub fn var(n: usize, k: usize) -> Self {
        let mut e = vec![0; n];
        e[k] = 1;
        Self::monomial(n, e, 1.0)
    }

    pub fn monomial(n: usize, exponents: Vec<u32>, c: f64) -> Self {
        let mut p = Self::zero(n);
        if c != 0.0 {
            p.terms.insert(exponents, c);
        }
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &f64)> {
        self.terms.iter()
    }

    fn insert(&mut self, e: Vec<u32>, c: f64) {
        let v = self.terms.entry(e.clone()).or_insert(0.0);
        *v += c;
        if *v == 0.0 {
            self.terms.remove(&e);
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (e, &c) in &other.terms {
            out.insert(e.clone(), c);
        }
        out
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Poly {
        let mut out = Poly::zero(self.n);
        if s != 0.0 {
            for (e, &c) in &self.terms {
                out.terms.insert(e.clone(), c * s);
            }
        }
        out
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::zero(self.n);
        for (e1, &c1) in &self.terms {
            for (e2, &c2) in &other.terms {
                let e: Vec<u32> = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                out.insert(e, c1 * c2);
            }
        }
        out
    }

    pub fn derivative(&self, k: usize) -> Poly {
        let mut out = Poly::zero(self.n);
        for (e, &c) in &self.terms {
            if e[k] > 0 {
                let mut f = e.clone();
                f[k] -= 1;
                out.insert(f, c * e[k] as f64);
            }
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, &c)| {
                c * e
                    .iter()
                    .zip(x)
                    .map(|(&p, &v)| v.powi(p as i32))
                    .product::<f64>()
            })
            .sum()
    }

    /// Largest absolute coefficient.
    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |a, c| a.max(c.abs()))
    }
}

/// Applies the first-order operator `Σ_k coeffs[k] ∂_k` to `f`.
pub fn apply_field(coeffs: &[Poly], f: &Poly) -> Poly {
    let mut out = Poly::zero(f.n);
    for (k, c) in coeffs.iter().enumerate() {
        if !c.is_zero() {
            out = out.add(&c.mul(&f.derivative(k)));
        }
    }
    out
}
