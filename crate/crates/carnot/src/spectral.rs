//! Finite-volume sub-Laplacian and its spectral calculus.
//!
//! Each first-layer field `Y_b` is discretized by one-sided differences with
//! coefficients taken from [`GroupSpec::left_field_coeffs`]. Averaging the
//! forward and backward variants over all sign patterns gives
//!
//! `A = Σ_k ½(T_k⁺ᵀ G_kk T_k⁺ + T_k⁻ᵀ G_kk T_k⁻) + Σ_{k≠l} T̄_kᵀ G_kl T̄_l`,
//!
//! where `T_k^±` are masked one-sided differences, `T̄_k` their mean and
//! `G = Σ_a c_a c_aᵀ` the pointwise metric of the (possibly rebased) fields.
//! Differences that would leave the box are dropped, which is a zero-flux
//! boundary: constants are exactly in the kernel and `A` is symmetric
//! positive semi-definite.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridFunction, GridSpec};

/// Largest grid on which the dense eigen backend may be used.
pub const DEFAULT_DENSE_THRESHOLD: usize = 8192;
/// Grids at or below this size use the eigen backend under [`Backend::Auto`].
pub const DEFAULT_AUTO_EIG_LIMIT: usize = 2500;
/// Target sup error of Chebyshev profile approximations.
pub const CHEBYSHEV_TOL: f64 = 1e-8;
const CHEBYSHEV_MAX_DEGREE: usize = 1 << 15;
const SCAN_POINTS: usize = 4096;

/// Compressed sparse row matrix with real entries.
#[derive(Clone, Debug)]
pub struct CsrMatrix {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    data: Vec<f64>,
}

impl CsrMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        self.indices[a..b]
            .iter()
            .zip(&self.data[a..b])
            .map(|(&j, &v)| (j as usize, v))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|(c, _)| *c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            let mut acc = 0.0;
            for k in self.indptr[i]..self.indptr[i + 1] {
                acc += self.data[k] * x[self.indices[k] as usize];
            }
            *yi = acc;
        });
    }

    pub fn matvec_complex(&self, x: &[Complex64], y: &mut [Complex64]) {
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in self.indptr[i]..self.indptr[i + 1] {
                acc += x[self.indices[k] as usize] * self.data[k];
            }
            *yi = acc;
        });
    }

    /// `max |A - Aᵀ|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest absolute row sum, an upper bound for the spectral radius.
    pub fn gershgorin_bound(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }
}

/// Change of basis applied to the first-layer fields: the new fields are
/// `Ỹ_a = Σ_b B_ab Y_b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "matrix", rename_all = "snake_case")]
pub enum BasisChange {
    Identity,
    /// Orthogonal matrix; leaves the sub-Laplacian unchanged.
    Rotation(Vec<Vec<f64>>),
    /// Any invertible matrix; yields a genuinely different sub-Laplacian.
    General(Vec<Vec<f64>>),
}

impl BasisChange {
    /// Planar rotation by `theta` in the first two first-layer directions.
    pub fn planar_rotation(l: usize, theta: f64) -> Self {
        let mut m = identity(l);
        if l >= 2 {
            let (s, c) = theta.sin_cos();
            m[0][0] = c;
            m[0][1] = -s;
            m[1][0] = s;
            m[1][1] = c;
        }
        BasisChange::Rotation(m)
    }

    fn matrix(&self, l: usize) -> Result<Vec<Vec<f64>>> {
        match self {
            BasisChange::Identity => Ok(identity(l)),
            BasisChange::Rotation(m) => {
                check_shape(m, l)?;
                let mut dev: f64 = 0.0;
                for i in 0..l {
                    for j in 0..l {
                        let dot: f64 = (0..l).map(|k| m[k][i] * m[k][j]).sum();
                        let target = if i == j { 1.0 } else { 0.0 };
                        dev = dev.max((dot - target).abs());
                    }
                }
                if dev > 1e-10 {
                    return Err(Error::NonOrthogonalRotation(dev));
                }
                Ok(m.clone())
            }
            BasisChange::General(m) => {
                check_shape(m, l)?;
                let dm = DMatrix::from_fn(l, l, |i, j| m[i][j]);
                let scale = dm.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                if scale == 0.0 || dm.determinant().abs() <= 1e-12 * scale.powi(l as i32) {
                    return Err(Error::SingularBasis);
                }
                Ok(m.clone())
            }
        }
    }
}

fn identity(l: usize) -> Vec<Vec<f64>> {
    (0..l)
        .map(|i| (0..l).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn check_shape(m: &[Vec<f64>], l: usize) -> Result<()> {
    if m.len() != l || m.iter().any(|r| r.len() != l) {
        return Err(Error::SingularBasis);
    }
    Ok(())
}

/// Eigen-decomposition `A = V diag(λ) Vᵀ`.
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

/// Chebyshev series keyed by profile hash and requested degree.
type SeriesCache = HashMap<(String, Option<usize>), Arc<ChebyshevSeries>>;

/// Discretized sub-Laplacian on a grid.
pub struct SubLaplacian {
    grid: Arc<GridSpec>,
    basis: BasisChange,
    matrix: CsrMatrix,
    lambda_max: f64,
    dense_threshold: usize,
    auto_eig_limit: usize,
    eigen: OnceLock<Arc<EigenDecomposition>>,
    series: Mutex<SeriesCache>,
}

impl fmt::Debug for SubLaplacian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SubLaplacian")
            .field("nodes", &self.grid.len())
            .field("nnz", &self.matrix.nnz())
            .field("lambda_max", &self.lambda_max)
            .field("basis", &self.basis)
            .finish()
    }
}

/// Assembles `L = -Σ Y_a²` on `grid`, optionally after a change of basis
/// of the first layer.
pub fn assemble_sublaplacian(
    grid: Arc<GridSpec>,
    basis: Option<BasisChange>,
) -> Result<SubLaplacian> {
    let basis = basis.unwrap_or(BasisChange::Identity);
    let grp = grid.group().clone();
    let n = grid.dim();
    let l = grp.l();
    let b = basis.matrix(l)?;
    let first: Vec<usize> = (0..n).filter(|&k| grp.weights()[k] == 1).collect();
    let len = grid.len();
    let h = grid.spacing().to_vec();
    let pts = grid.points().to_vec();

    // offset (per-axis, in {-2..2}) -> values per row
    let mut diagonals: HashMap<Vec<i8>, Vec<f64>> = HashMap::new();
    let mut x = vec![0.0; n];
    let mut idx = vec![0usize; n];
    let mut metric = vec![0.0; n * n];
    let mut fields = vec![vec![0.0; n]; l];
    for lin in 0..len {
        grid.node_into(lin, &mut x);
        grid.unravel(lin, &mut idx);
        for (bi, &axis) in first.iter().enumerate() {
            fields[bi] = grp.left_field_coeffs(axis, &x)?;
        }
        metric.iter_mut().for_each(|v| *v = 0.0);
        for a in 0..l {
            let mut c = vec![0.0; n];
            for (bi, f) in fields.iter().enumerate() {
                if b[a][bi] != 0.0 {
                    for k in 0..n {
                        c[k] += b[a][bi] * f[k];
                    }
                }
            }
            for k in 0..n {
                for m in 0..n {
                    metric[k * n + m] += c[k] * c[m];
                }
            }
        }
        // Stencils: list of (axis offset, weight) pairs for each difference.
        let one_sided = |k: usize, s: i8| -> Vec<(i8, f64)> {
            let target = idx[k] as isize + s as isize;
            if target < 0 || target >= pts[k] as isize {
                Vec::new()
            } else {
                let w = s as f64 / h[k];
                vec![(s, w), (0, -w)]
            }
        };
        for k in 0..n {
            for m in 0..n {
                let g = metric[k * n + m];
                if g == 0.0 {
                    continue;
                }
                if k == m {
                    for s in [1i8, -1] {
                        let st = one_sided(k, s);
                        add_outer(&mut diagonals, n, len, &idx, &pts, k, &st, k, &st, 0.5 * g);
                    }
                } else {
                    let mut sk = one_sided(k, 1);
                    sk.extend(one_sided(k, -1));
                    let mut sm = one_sided(m, 1);
                    sm.extend(one_sided(m, -1));
                    add_outer(&mut diagonals, n, len, &idx, &pts, k, &sk, m, &sm, 0.25 * g);
                }
            }
        }
    }
    let strides = grid.strides().to_vec();
    let mut offsets: Vec<(isize, Vec<f64>)> = diagonals
        .into_iter()
        .map(|(off, vals)| {
            let s: isize = off
                .iter()
                .zip(&strides)
                .map(|(&o, &st)| o as isize * st as isize)
                .sum();
            (s, vals)
        })
        .collect();
    offsets.sort_by_key(|(s, _)| *s);
    let mut indptr = Vec::with_capacity(len + 1);
    let mut indices = Vec::new();
    let mut data = Vec::new();
    indptr.push(0);
    for row in 0..len {
        for (s, vals) in &offsets {
            let v = vals[row];
            if v != 0.0 {
                indices.push((row as isize + s) as u32);
                data.push(v);
            }
        }
        indptr.push(indices.len());
    }
    let matrix = CsrMatrix {
        n: len,
        indptr,
        indices,
        data,
    };
    let lambda_max = estimate_lambda_max(&matrix);
    Ok(SubLaplacian {
        grid,
        basis,
        matrix,
        lambda_max,
        dense_threshold: DEFAULT_DENSE_THRESHOLD,
        auto_eig_limit: DEFAULT_AUTO_EIG_LIMIT,
        eigen: OnceLock::new(),
        series: Mutex::new(HashMap::new()),
    })
}

#[allow(clippy::too_many_arguments)]
fn add_outer(
    diagonals: &mut HashMap<Vec<i8>, Vec<f64>>,
    n: usize,
    len: usize,
    idx: &[usize],
    pts: &[usize],
    k: usize,
    sk: &[(i8, f64)],
    m: usize,
    sm: &[(i8, f64)],
    g: f64,
) {
    // sk/sm are concatenations of two-point stencils; the weights w_a, w_b
    // form the rank-one update  A[x+a, x+b] += w_a w_b g.
    for pair_a in sk.chunks(2) {
        for pair_b in sm.chunks(2) {
            for &(oa, wa) in pair_a {
                for &(ob, wb) in pair_b {
                    let mut row_off = vec![0i8; n];
                    row_off[k] += oa;
                    let mut col_off = vec![0i8; n];
                    col_off[m] += ob;
                    let mut row = 0usize;
                    let mut stride = 1usize;
                    for ax in (0..n).rev() {
                        let i = idx[ax] as isize + row_off[ax] as isize;
                        row += i as usize * stride;
                        stride *= pts[ax];
                    }
                    let rel: Vec<i8> = (0..n).map(|ax| col_off[ax] - row_off[ax]).collect();
                    let entry = diagonals.entry(rel).or_insert_with(|| vec![0.0; len]);
                    entry[row] += wa * wb * g;
                }
            }
        }
    }
}

/// Upper spectral bound: Lanczos estimate of the top eigenvalue times 1.05,
/// capped by the Gershgorin bound.
fn estimate_lambda_max(a: &CsrMatrix) -> f64 {
    let n = a.dim();
    let gersh = a.gershgorin_bound();
    if n == 0 || gersh == 0.0 {
        return 1.0;
    }
    let steps = 50.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    let mut v_prev = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut alphas = Vec::with_capacity(steps);
    let mut betas: Vec<f64> = Vec::with_capacity(steps);
    let mut beta = 0.0;
    for _ in 0..steps {
        a.matvec(&v, &mut w);
        let alpha: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
        for i in 0..n {
            w[i] -= alpha * v[i] + beta * v_prev[i];
        }
        alphas.push(alpha);
        beta = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if beta < 1e-12 {
            break;
        }
        betas.push(beta);
        std::mem::swap(&mut v_prev, &mut v);
        for i in 0..n {
            v[i] = w[i] / beta;
        }
    }
    let m = alphas.len();
    let t = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            alphas[i]
        } else if i + 1 == j || j + 1 == i {
            betas[i.min(j)]
        } else {
            0.0
        }
    });
    let top = SymmetricEigen::new(t)
        .eigenvalues
        .iter()
        .fold(f64::MIN, |a, &b| a.max(b));
    (1.05 * top).min(gersh)
}

impl SubLaplacian {
    pub fn grid(&self) -> &Arc<GridSpec> {
        &self.grid
    }

    pub fn basis(&self) -> &BasisChange {
        &self.basis
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn dense_threshold(&self) -> usize {
        self.dense_threshold
    }

    pub fn set_dense_threshold(&mut self, limit: usize) {
        self.dense_threshold = limit;
    }

    pub fn set_auto_eig_limit(&mut self, limit: usize) {
        self.auto_eig_limit = limit;
    }

    /// Lower end of the resolvable spectral window, `(π / 2R)²`: the first
    /// Neumann eigenvalue of an interval of half-width `R`.
    pub fn lambda_min_resolvable(&self) -> f64 {
        let r = self.grid.half_width();
        (std::f64::consts::PI / (2.0 * r)).powi(2)
    }

    pub fn apply_matrix(&self, f: &GridFunction) -> Result<GridFunction> {
        self.check_grid(f)?;
        let mut out = vec![Complex64::new(0.0, 0.0); f.values().len()];
        self.matrix.matvec_complex(f.values(), &mut out);
        Ok(GridFunction::from_parts(self.grid.clone(), out))
    }

    fn check_grid(&self, f: &GridFunction) -> Result<()> {
        if Arc::ptr_eq(&self.grid, f.grid()) || *self.grid == **f.grid() {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Dense eigen-decomposition, computed on first use.
    pub fn eigen(&self) -> Result<Arc<EigenDecomposition>> {
        let n = self.grid.len();
        if n > self.dense_threshold {
            return Err(Error::DenseThresholdExceeded {
                nodes: n,
                limit: self.dense_threshold,
            });
        }
        Ok(self
            .eigen
            .get_or_init(|| {
                let e = SymmetricEigen::new(self.matrix.to_dense());
                Arc::new(EigenDecomposition {
                    values: e.eigenvalues.iter().copied().collect(),
                    vectors: e.eigenvectors,
                })
            })
            .clone())
    }

    fn resolve(&self, backend: Backend) -> Backend {
        match backend {
            Backend::Auto => {
                if self.grid.len() <= self.auto_eig_limit {
                    Backend::Eig
                } else {
                    Backend::Chebyshev(None)
                }
            }
            b => b,
        }
    }

    /// Chebyshev fit of `prof` on `[0, λ_max]`, memoized by profile label.
    pub fn chebyshev_series(
        &self,
        prof: &MultiplierProfile,
        degree: Option<usize>,
    ) -> Result<Arc<ChebyshevSeries>> {
        let key = (prof.label().to_string(), degree);
        if let Some(s) = self.series.lock().expect("series cache poisoned").get(&key) {
            return Ok(s.clone());
        }
        let fitted = Arc::new(ChebyshevSeries::fit(prof, self.lambda_max, degree)?);
        self.series
            .lock()
            .expect("series cache poisoned")
            .insert(key, fitted.clone());
        Ok(fitted)
    }

    /// `f̂(L) v` for a profile `f̂`.
    pub fn apply_multiplier(
        &self,
        prof: &MultiplierProfile,
        f: &GridFunction,
        backend: Backend,
    ) -> Result<GridFunction> {
        Ok(self.apply_multiplier_traced(prof, f, backend)?.0)
    }

    /// Like [`apply_multiplier`](Self::apply_multiplier) and also reports the
    /// backend actually used.
    pub fn apply_multiplier_traced(
        &self,
        prof: &MultiplierProfile,
        f: &GridFunction,
        backend: Backend,
    ) -> Result<(GridFunction, BackendUsed)> {
        self.check_grid(f)?;
        match self.resolve(backend) {
            Backend::Eig => {
                let eig = self.eigen()?;
                let out = apply_eig(&eig, |l| prof.eval(l), f.values());
                Ok((
                    GridFunction::from_parts(self.grid.clone(), out),
                    BackendUsed::Eig,
                ))
            }
            Backend::Chebyshev(degree) => {
                let cheb = self.chebyshev_series(prof, degree)?;
                let out = cheb.apply(&self.matrix, f.values());
                Ok((
                    GridFunction::from_parts(self.grid.clone(), out),
                    BackendUsed::Chebyshev {
                        degree: cheb.degree(),
                        error: cheb.error,
                    },
                ))
            }
            Backend::Auto => unreachable!(),
        }
    }

    /// Convolution kernel of `f̂(L)`: the operator applied to the unit-mass
    /// delta at the identity.
    pub fn kernel_of(&self, prof: &MultiplierProfile, backend: Backend) -> Result<SpectralKernel> {
        let origin = self.grid.origin_index().ok_or(Error::IdentityNodeMissing)?;
        let delta = GridFunction::delta(self.grid.clone(), origin);
        let (kernel, used) = self.apply_multiplier_traced(prof, &delta, backend)?;
        Ok(SpectralKernel {
            kernel,
            profile: prof.clone(),
            backend: used,
            lambda_max: self.lambda_max,
        })
    }
}

fn apply_eig<F: Fn(f64) -> f64>(
    eig: &EigenDecomposition,
    prof: F,
    v: &[Complex64],
) -> Vec<Complex64> {
    let n = v.len();
    let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { v[i].re } else { v[i].im });
    let mut c = eig.vectors.tr_mul(&x);
    for (k, &lam) in eig.values.iter().enumerate() {
        let s = prof(lam);
        c[(k, 0)] *= s;
        c[(k, 1)] *= s;
    }
    let y = &eig.vectors * c;
    (0..n)
        .map(|i| Complex64::new(y[(i, 0)], y[(i, 1)]))
        .collect()
}

/// Backend requested for spectral multipliers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Dense eigen-decomposition (grids up to the dense threshold).
    Eig,
    /// Chebyshev expansion; `None` selects the degree automatically.
    Chebyshev(Option<usize>),
    /// Eigen backend on small grids, Chebyshev otherwise.
    Auto,
}

/// Backend actually used for a computation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendUsed {
    Eig,
    Chebyshev { degree: usize, error: f64 },
}

impl BackendUsed {
    pub fn name(&self) -> &'static str {
        match self {
            BackendUsed::Eig => "eig",
            BackendUsed::Chebyshev { .. } => "chebyshev",
        }
    }

    pub fn degree(&self) -> Option<usize> {
        match self {
            BackendUsed::Eig => None,
            BackendUsed::Chebyshev { degree, .. } => Some(*degree),
        }
    }
}

/// Smoothness tag of a profile.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothness {
    CompactlySupportedSmooth,
    Schwartz,
    Entire,
}

/// Scalar spectral profile `f̂ : [0, ∞) → R`.
#[derive(Clone)]
pub struct MultiplierProfile {
    label: String,
    support: Option<(f64, f64)>,
    smoothness: Smoothness,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for MultiplierProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MultiplierProfile")
            .field("label", &self.label)
            .field("support", &self.support)
            .field("smoothness", &self.smoothness)
            .finish()
    }
}

impl MultiplierProfile {
    pub fn new<F>(
        label: impl Into<String>,
        smoothness: Smoothness,
        support: Option<(f64, f64)>,
        f: F,
    ) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        MultiplierProfile {
            label: label.into(),
            support,
            smoothness,
            f: Arc::new(f),
        }
    }

    /// `f̂ ≡ c`.
    pub fn constant(c: f64) -> Self {
        Self::new(format!("const({c})"), Smoothness::Entire, None, move |_| c)
    }

    /// `f̂(λ) = λ^k`.
    pub fn power(k: u32) -> Self {
        Self::new(format!("pow({k})"), Smoothness::Entire, None, move |l| {
            l.powi(k as i32)
        })
    }

    /// Heat profile `e^{-λ}`.
    pub fn heat() -> Self {
        Self::new("heat", Smoothness::Schwartz, None, |l: f64| (-l).exp())
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn support(&self) -> Option<(f64, f64)> {
        self.support
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    #[inline]
    pub fn eval(&self, lambda: f64) -> f64 {
        (self.f)(lambda)
    }

    /// `λ ↦ f̂(c λ)`; with `c = 4^{-j}` this is the profile of `D_{2^j}`.
    pub fn rescaled(&self, c: f64) -> Self {
        let f = self.f.clone();
        MultiplierProfile {
            label: format!("{}@{c:e}", self.label),
            support: self.support.map(|(a, b)| (a / c, b / c)),
            smoothness: self.smoothness,
            f: Arc::new(move |l| f(c * l)),
        }
    }

    /// Profile of the `2^j`-dilate, `λ ↦ f̂(4^{-j} λ)`.
    pub fn dyadic(&self, j: i32) -> Self {
        self.rescaled(4f64.powi(-j))
    }

    pub fn product(&self, other: &MultiplierProfile) -> Self {
        let (f, g) = (self.f.clone(), other.f.clone());
        let support = match (self.support, other.support) {
            (Some((a, b)), Some((c, d))) => Some((a.max(c), b.min(d).max(a.max(c)))),
            (Some(s), None) | (None, Some(s)) => Some(s),
            (None, None) => None,
        };
        let smoothness = match (self.smoothness, other.smoothness) {
            (Smoothness::CompactlySupportedSmooth, _)
            | (_, Smoothness::CompactlySupportedSmooth) => Smoothness::CompactlySupportedSmooth,
            (Smoothness::Schwartz, _) | (_, Smoothness::Schwartz) => Smoothness::Schwartz,
            _ => Smoothness::Entire,
        };
        MultiplierProfile {
            label: format!("({})*({})", self.label, other.label),
            support,
            smoothness,
            f: Arc::new(move |l| f(l) * g(l)),
        }
    }

    pub fn square(&self) -> Self {
        self.product(self)
    }

    pub fn scaled(&self, s: f64) -> Self {
        let f = self.f.clone();
        MultiplierProfile {
            label: format!("{s}*({})", self.label),
            support: self.support,
            smoothness: self.smoothness,
            f: Arc::new(move |l| s * f(l)),
        }
    }

    pub fn sum(&self, other: &MultiplierProfile) -> Self {
        let (f, g) = (self.f.clone(), other.f.clone());
        let support = match (self.support, other.support) {
            (Some((a, b)), Some((c, d))) => Some((a.min(c), b.max(d))),
            _ => None,
        };
        MultiplierProfile {
            label: format!("({})+({})", self.label, other.label),
            support,
            smoothness: if support.is_some() {
                Smoothness::CompactlySupportedSmooth
            } else {
                Smoothness::Schwartz
            },
            f: Arc::new(move |l| f(l) + g(l)),
        }
    }

    /// Stable hash of the label, used for cache keys.
    pub fn hash_hex(&self) -> String {
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(self.label.as_bytes());
        digest.iter().take(12).map(|b| format!("{b:02x}")).collect()
    }
}

/// Convolution kernel of a multiplier together with its provenance.
#[derive(Clone, Debug)]
pub struct SpectralKernel {
    pub kernel: GridFunction,
    pub profile: MultiplierProfile,
    pub backend: BackendUsed,
    pub lambda_max: f64,
}

/// Chebyshev expansion of a profile on `[0, λ_max]`.
#[derive(Clone, Debug)]
pub struct ChebyshevSeries {
    coeffs: Vec<f64>,
    lambda_max: f64,
    pub error: f64,
}

impl ChebyshevSeries {
    /// Interpolates at Chebyshev nodes. With `degree = None` the degree is
    /// doubled from 16 until the sup error on the scan reaches 1e-8.
    pub fn fit(prof: &MultiplierProfile, lambda_max: f64, degree: Option<usize>) -> Result<Self> {
        let scan = scan_points(prof, lambda_max);
        let target: Vec<f64> = scan.iter().map(|&l| prof.eval(l)).collect();
        match degree {
            Some(d) => {
                if d < 8 {
                    return Err(Error::ChebyshevDegreeTooLow(d));
                }
                let coeffs = cheb_coeffs(prof, lambda_max, d);
                let error = sup_error(&coeffs, lambda_max, &scan, &target);
                Ok(ChebyshevSeries {
                    coeffs,
                    lambda_max,
                    error,
                })
            }
            None => {
                let mut d = 16;
                let mut best = (f64::INFINITY, 0);
                loop {
                    let coeffs = cheb_coeffs(prof, lambda_max, d);
                    let error = sup_error(&coeffs, lambda_max, &scan, &target);
                    if error <= CHEBYSHEV_TOL {
                        return Ok(ChebyshevSeries {
                            coeffs,
                            lambda_max,
                            error,
                        });
                    }
                    if error < best.0 {
                        best = (error, d);
                    }
                    if d >= CHEBYSHEV_MAX_DEGREE {
                        return Err(Error::ChebyshevNotConverged {
                            target: CHEBYSHEV_TOL,
                            achieved: best.0,
                            degree: best.1,
                        });
                    }
                    d *= 2;
                }
            }
        }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn eval(&self, lambda: f64) -> f64 {
        clenshaw(&self.coeffs, 2.0 * lambda / self.lambda_max - 1.0)
    }

    /// Three-term recurrence on `(2A - λ_max I)/λ_max`.
    pub fn apply(&self, a: &CsrMatrix, v: &[Complex64]) -> Vec<Complex64> {
        let n = v.len();
        let alpha = 2.0 / self.lambda_max;
        let op = |x: &[Complex64], out: &mut [Complex64]| {
            a.matvec_complex(x, out);
            out.par_iter_mut().zip(x.par_iter()).for_each(|(o, xi)| {
                *o = *o * alpha - *xi;
            });
        };
        let c = &self.coeffs;
        let mut y: Vec<Complex64> = v.iter().map(|x| x * c[0]).collect();
        if c.len() == 1 {
            return y;
        }
        let mut t0 = v.to_vec();
        let mut t1 = vec![Complex64::new(0.0, 0.0); n];
        op(&t0, &mut t1);
        y.par_iter_mut()
            .zip(t1.par_iter())
            .for_each(|(yi, ti)| *yi += ti * c[1]);
        let mut t2 = vec![Complex64::new(0.0, 0.0); n];
        for &ck in &c[2..] {
            op(&t1, &mut t2);
            y.par_iter_mut()
                .zip(t2.par_iter_mut())
                .zip(t0.par_iter())
                .for_each(|((yi, t2i), t0i)| {
                    *t2i = *t2i * 2.0 - t0i;
                    *yi += *t2i * ck;
                });
            std::mem::swap(&mut t0, &mut t1);
            std::mem::swap(&mut t1, &mut t2);
        }
        y
    }
}

fn scan_points(prof: &MultiplierProfile, lambda_max: f64) -> Vec<f64> {
    let mut pts: Vec<f64> = (0..SCAN_POINTS)
        .map(|i| lambda_max * i as f64 / (SCAN_POINTS - 1) as f64)
        .collect();
    if let Some((a, b)) = prof.support() {
        let (a, b) = (a.max(0.0), b.min(lambda_max));
        if b > a {
            pts.extend((0..SCAN_POINTS).map(|i| a + (b - a) * i as f64 / (SCAN_POINTS - 1) as f64));
        }
    }
    pts
}

fn cheb_coeffs(prof: &MultiplierProfile, lambda_max: f64, degree: usize) -> Vec<f64> {
    let m = degree + 1;
    let theta: Vec<f64> = (0..m)
        .map(|k| std::f64::consts::PI * (k as f64 + 0.5) / m as f64)
        .collect();
    let fx: Vec<f64> = theta
        .iter()
        .map(|t| prof.eval(0.5 * lambda_max * (t.cos() + 1.0)))
        .collect();
    // cos(j θ_k) = cos(π j (2k+1) / (2m)) = table[j (2k+1) mod 4m]
    let period = 4 * m;
    let table: Vec<f64> = (0..period)
        .map(|r| (std::f64::consts::PI * r as f64 / (2 * m) as f64).cos())
        .collect();
    let mut c: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|j| {
            let mut acc = 0.0;
            for (k, f) in fx.iter().enumerate() {
                acc += f * table[(j * (2 * k + 1)) % period];
            }
            2.0 * acc / m as f64
        })
        .collect();
    c[0] *= 0.5;
    c
}

fn clenshaw(c: &[f64], x: f64) -> f64 {
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for &ck in c.iter().skip(1).rev() {
        let b0 = 2.0 * x * b1 - b2 + ck;
        b2 = b1;
        b1 = b0;
    }
    x * b1 - b2 + c[0]
}

fn sup_error(c: &[f64], lambda_max: f64, scan: &[f64], target: &[f64]) -> f64 {
    scan.par_iter()
        .zip(target.par_iter())
        .map(|(&l, &t)| (clenshaw(c, 2.0 * l / lambda_max - 1.0) - t).abs())
        .reduce(|| 0.0, f64::max)
}

/// Relative L² distance between the kernel of `f̂(4^{-j}·)` on `target` and
/// the grid dilate `D_{2^j}` of the kernel of `f̂` computed on `source`.
pub fn dilation_covariance_check(
    target: &SubLaplacian,
    source: &SubLaplacian,
    prof: &MultiplierProfile,
    j: i32,
    backend: Backend,
) -> Result<f64> {
    let direct = target.kernel_of(&prof.dyadic(j), backend)?.kernel;
    if j == 0 && Arc::ptr_eq(target.grid(), source.grid()) {
        return Ok(0.0);
    }
    let base = source.kernel_of(prof, backend)?.kernel;
    let dilated = base.dilate_onto(2f64.powi(j), target.grid())?;
    let diff = direct.sub(&dilated)?;
    Ok(diff.lp_norm(2.0) / direct.lp_norm(2.0))
}

/// Kernel of `prof(-Δ)` on a Euclidean grid by direct quadrature of the
/// inverse Fourier integral `π^{-n} ∫_{ξ ≥ 0} prof(|ξ|²) Π cos(ξ_k x_k) dξ`.
pub fn euclidean_oracle_kernel(
    prof: &MultiplierProfile,
    grid: &Arc<GridSpec>,
) -> Result<GridFunction> {
    let grp = grid.group();
    if !grp.is_abelian() {
        return Err(Error::NonEuclideanGroup);
    }
    let n = grid.dim();
    let r = grid.half_width();
    let nyquist = grid
        .spacing()
        .iter()
        .map(|h| std::f64::consts::PI / h)
        .fold(f64::INFINITY, f64::min);
    let (xi_lo, xi_hi) = match prof.support() {
        Some((a, b)) => (a.max(0.0).sqrt(), b.max(0.0).sqrt().min(nyquist)),
        None => (0.0, nyquist),
    };
    let cap = match n {
        1 => 1 << 17,
        2 => 1024,
        _ => 160,
    };
    let base_step = std::f64::consts::PI / (8.0 * r);
    // In one dimension integrate over the radial support only.
    let (lo, hi) = if n == 1 { (xi_lo, xi_hi) } else { (0.0, xi_hi) };
    if !(hi > lo) {
        return Ok(GridFunction::zeros(grid.clone()));
    }
    let mut m = ((hi - lo) / base_step).ceil() as usize;
    if n == 1 {
        m = m.max(4096);
    } else {
        m = m.max(64);
    }
    let m = m.min(cap);
    let dxi = (hi - lo) / m as f64;
    let xi: Vec<f64> = (0..m).map(|i| lo + (i as f64 + 0.5) * dxi).collect();
    // Values on the frequency tensor grid, then contract one axis at a time.
    let total = m.pow(n as u32);
    let mut field: Vec<f64> = (0..total)
        .into_par_iter()
        .map(|mut c| {
            let mut s = 0.0;
            for _ in 0..n {
                let v = xi[c % m];
                s += v * v;
                c /= m;
            }
            prof.eval(s)
        })
        .collect();
    // Row-major frequency layout; `|ξ|²` is symmetric in the digits, so the
    // digit order used above does not matter.
    let pts = grid.points().to_vec();
    let mut dims: Vec<usize> = vec![m; n];
    for axis in (0..n).rev() {
        let nodes = grid.axis_nodes(axis);
        let p = pts[axis];
        let mut cosm = Vec::with_capacity(p * m);
        for &xv in &nodes {
            cosm.extend(xi.iter().map(|&w| (w * xv).cos()));
        }
        let outer: usize = dims[..axis].iter().product();
        let inner: usize = dims[axis + 1..].iter().product();
        let mut next = vec![0.0; outer * p * inner];
        next.par_chunks_mut(p * inner)
            .enumerate()
            .for_each(|(o, chunk)| {
                for i in 0..p {
                    for w in 0..m {
                        let cw = cosm[i * m + w];
                        let src = &field[(o * m + w) * inner..(o * m + w + 1) * inner];
                        let dst = &mut chunk[i * inner..(i + 1) * inner];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += cw * s;
                        }
                    }
                }
            });
        dims[axis] = p;
        field = next;
    }
    let scale = (dxi / std::f64::consts::PI).powi(n as i32);
    GridFunction::from_real(
        grid.clone(),
        &field.iter().map(|v| v * scale).collect::<Vec<_>>(),
    )
}
