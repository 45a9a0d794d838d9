//! Lattice sampling sets, discrete wavelet frames and Neumann inversion.
//!
//! At scale `j` the frame samples the band `u ∗ ψ_j^*` at
//! `x_{jγ} = δ_{2^{-j}} γ`. Evaluation uses the multilinear interpolation
//! matrix `E_j`, so analysis is `E_j ψ̂_j(L)` and synthesis is its exact
//! adjoint `ψ̂_j(L) E_jᵀ / dv` for the grid inner product.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::besov::{ratio_stats, BesovParams, RatioStats};
use crate::error::{Error, Result};
use crate::grid::{osc_l1, GridFunction, GridSpec};
use crate::group::{GroupPoint, GroupSpec};
use crate::spectral::MultiplierProfile;
use crate::wavelets::LPWavelet;

/// Lattice family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatticeKind {
    /// `α Zⁿ`.
    Euclidean,
    /// `δ_α {(k, l, m + k·l/2)}` in exponential coordinates.
    Heisenberg,
}

/// Scaled lattice `Γ` with fundamental tile `W = Π [0, α^{d_i})`.
#[derive(Clone, Debug)]
pub struct SamplingSet {
    group: GroupSpec,
    kind: LatticeKind,
    alpha: f64,
    tile: Vec<f64>,
    tile_volume: f64,
    indices: Vec<Vec<i64>>,
    points: Vec<GroupPoint>,
}

/// Outcome of the Monte-Carlo tiling check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TilingReport {
    pub draws: usize,
    pub overlaps: usize,
    pub covered: usize,
}

fn lattice_kind(group: &GroupSpec) -> Result<LatticeKind> {
    if group.is_abelian() {
        return Ok(LatticeKind::Euclidean);
    }
    let n = group.dim();
    let h = (n - 1) / 2;
    let weights_ok = n % 2 == 1
        && group.weights()[..n - 1].iter().all(|&w| w == 1)
        && group.weights()[n - 1] == 2;
    if weights_ok {
        let mut ok = true;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let c = group.structure_constant(i, j, k);
                    let expected = if k == n - 1 && i < h && j == i + h {
                        1.0
                    } else if k == n - 1 && j < h && i == j + h {
                        -1.0
                    } else {
                        0.0
                    };
                    ok &= c == expected;
                }
            }
        }
        if ok {
            return Ok(LatticeKind::Heisenberg);
        }
    }
    Err(Error::InvalidParameter(format!(
        "lattices are implemented for Euclidean and Heisenberg groups, not {}",
        group.label()
    )))
}

/// Builds `Γ ∩ (box inflated by one tile)` and verifies the tiling.
pub fn make_lattice(group: &GroupSpec, alpha: f64, grid: &GridSpec) -> Result<SamplingSet> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "lattice density alpha must be positive, got {alpha}"
        )));
    }
    if grid.group() != group {
        return Err(Error::GridMismatch);
    }
    let kind = lattice_kind(group)?;
    let tile: Vec<f64> = group
        .weights()
        .iter()
        .map(|&d| alpha.powi(d as i32))
        .collect();
    let tile_volume = tile.iter().product();
    let mut set = SamplingSet {
        group: group.clone(),
        kind,
        alpha,
        tile,
        tile_volume,
        indices: Vec::new(),
        points: Vec::new(),
    };
    let inflated: Vec<f64> = grid
        .extent()
        .iter()
        .zip(&set.tile)
        .map(|(e, t)| e + t)
        .collect();
    let found = set.enumerate(0, &inflated);
    set.indices = found.iter().map(|(i, _)| i.clone()).collect();
    set.points = found.into_iter().map(|(_, p)| p).collect();
    let report = set.check_tiling(grid, 10_000, 0x711e)?;
    if report.overlaps > 0 {
        return Err(Error::TilingViolation(format!(
            "{} of {} draws lie in two tiles",
            report.overlaps, report.draws
        )));
    }
    if (report.covered as f64) < 0.999 * report.draws as f64 {
        return Err(Error::TilingViolation(format!(
            "only {} of {} draws are covered",
            report.covered, report.draws
        )));
    }
    Ok(set)
}

impl SamplingSet {
    pub fn group(&self) -> &GroupSpec {
        &self.group
    }

    pub fn kind(&self) -> LatticeKind {
        self.kind
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn tile(&self) -> &[f64] {
        &self.tile
    }

    /// `|W| = α^Q`.
    pub fn tile_volume(&self) -> f64 {
        self.tile_volume
    }

    /// Tile volume at scale `j`, `2^{-jQ} |W|`.
    pub fn tile_volume_at(&self, j: i32) -> f64 {
        self.tile_volume * 2f64.powi(-j * self.group.homogeneous_dim() as i32)
    }

    pub fn indices(&self) -> &[Vec<i64>] {
        &self.indices
    }

    pub fn points(&self) -> &[GroupPoint] {
        &self.points
    }

    /// `sup_{w ∈ W} |w|`, attained at the far corner of the tile.
    pub fn tile_radius(&self) -> f64 {
        self.group.quasi_norm(&self.tile)
    }

    /// Lattice point with integer label `idx`.
    pub fn point(&self, idx: &[i64]) -> GroupPoint {
        match self.kind {
            LatticeKind::Euclidean => idx.iter().map(|&k| self.alpha * k as f64).collect(),
            LatticeKind::Heisenberg => {
                let n = idx.len();
                let h = (n - 1) / 2;
                let kl: f64 = (0..h).map(|i| (idx[i] * idx[i + h]) as f64).sum();
                let mut raw: Vec<f64> = idx.iter().map(|&k| k as f64).collect();
                raw[n - 1] += 0.5 * kl;
                let mut out = vec![0.0; n];
                self.group.dilate_into(self.alpha, &raw, &mut out);
                out
            }
        }
    }

    /// Label of the unique `γ` with `x ∈ γW`, by floor decomposition.
    pub fn locate(&self, x: &[f64]) -> Vec<i64> {
        let n = x.len();
        let mut y = vec![0.0; n];
        self.group.dilate_into(1.0 / self.alpha, x, &mut y);
        match self.kind {
            LatticeKind::Euclidean => y.iter().map(|v| v.floor() as i64).collect(),
            LatticeKind::Heisenberg => {
                let h = (n - 1) / 2;
                let mut idx: Vec<i64> = y[..n - 1].iter().map(|v| v.floor() as i64).collect();
                let w: Vec<f64> = (0..n - 1).map(|i| y[i] - idx[i] as f64).collect();
                let mut t = y[n - 1];
                for i in 0..h {
                    let (k, l) = (idx[i] as f64, idx[i + h] as f64);
                    t -= 0.5 * k * l + 0.5 * (k * w[i + h] - l * w[i]);
                }
                idx.push(t.floor() as i64);
                idx
            }
        }
    }

    /// Whether `γ^{-1} x ∈ W`, evaluated with the group law.
    pub fn in_tile(&self, idx: &[i64], x: &[f64]) -> bool {
        let g = self.point(idx);
        let mut z = vec![0.0; x.len()];
        self.group.product_into(&self.group.inverse(&g), x, &mut z);
        z.iter().zip(&self.tile).all(|(v, t)| *v >= 0.0 && *v < *t)
    }

    /// Counts how many neighbouring tiles contain each of `draws` uniform
    /// points of the box: more than one is an overlap, none is a gap.
    pub fn check_tiling(&self, grid: &GridSpec, draws: usize, seed: u64) -> Result<TilingReport> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.group.dim();
        let extent = grid.extent().to_vec();
        let mut overlaps = 0;
        let mut covered = 0;
        let reach: Vec<i64> = self
            .group
            .weights()
            .iter()
            .map(|&d| if d == 1 { 1 } else { 3 })
            .collect();
        for _ in 0..draws {
            let x: Vec<f64> = extent.iter().map(|e| rng.random_range(-*e..*e)).collect();
            let centre = self.locate(&x);
            let mut count = 0;
            let total: usize = reach.iter().map(|r| (2 * r + 1) as usize).product();
            for mut c in 0..total {
                let mut idx = vec![0i64; n];
                for k in (0..n).rev() {
                    let span = (2 * reach[k] + 1) as usize;
                    idx[k] = centre[k] + (c % span) as i64 - reach[k];
                    c /= span;
                }
                if self.in_tile(&idx, &x) {
                    count += 1;
                }
            }
            if count > 1 {
                overlaps += 1;
            }
            if count >= 1 {
                covered += 1;
            }
        }
        Ok(TilingReport {
            draws,
            overlaps,
            covered,
        })
    }

    /// Lattice points `γ` with `δ_s γ` inside the coordinate box of
    /// half-extents `extent`, paired with `δ_s γ`.
    fn enumerate_scaled(&self, s: f64, extent: &[f64]) -> Vec<(Vec<i64>, GroupPoint)> {
        let n = self.group.dim();
        let w = self.group.weights();
        // |δ_s γ|_i ≤ e_i bounds the integer labels; for the Heisenberg
        // centre the shift k·l/2 is added back below.
        let bound: Vec<f64> = (0..n)
            .map(|i| extent[i] / (s.powi(w[i] as i32) * self.tile[i]))
            .collect();
        let mut out = Vec::new();
        let first: Vec<(i64, i64)> = (0..n - usize::from(self.kind == LatticeKind::Heisenberg))
            .map(|i| ((-bound[i]).ceil() as i64, bound[i].floor() as i64))
            .collect();
        let counts: Vec<usize> = first
            .iter()
            .map(|(a, b)| (b - a + 1).max(0) as usize)
            .collect();
        let total: usize = counts.iter().product();
        let mut x = vec![0.0; n];
        for mut c in 0..total {
            let mut idx = vec![0i64; first.len()];
            for k in (0..first.len()).rev() {
                idx[k] = first[k].0 + (c % counts[k]) as i64;
                c /= counts[k];
            }
            match self.kind {
                LatticeKind::Euclidean => {
                    let p = self.point(&idx);
                    self.group.dilate_into(s, &p, &mut x);
                    out.push((idx, x.clone()));
                }
                LatticeKind::Heisenberg => {
                    let h = (n - 1) / 2;
                    let kl: f64 = (0..h).map(|i| (idx[i] * idx[i + h]) as f64).sum();
                    let lo = (-bound[n - 1] - 0.5 * kl).ceil() as i64;
                    let hi = (bound[n - 1] - 0.5 * kl).floor() as i64;
                    for m in lo..=hi {
                        let mut full = idx.clone();
                        full.push(m);
                        let p = self.point(&full);
                        self.group.dilate_into(s, &p, &mut x);
                        out.push((full, x.clone()));
                    }
                }
            }
        }
        out
    }

    fn enumerate(&self, j: i32, extent: &[f64]) -> Vec<(Vec<i64>, GroupPoint)> {
        self.enumerate_scaled(2f64.powi(-j), extent)
    }

    /// Sample points `δ_{2^{-j}} γ` inside the box and the number of points
    /// of the one-tile-inflated box that fall outside it.
    pub fn points_at_scale(&self, j: i32, grid: &GridSpec) -> (Vec<(Vec<i64>, GroupPoint)>, usize) {
        let s = 2f64.powi(-j);
        let inflated: Vec<f64> = grid
            .extent()
            .iter()
            .zip(self.group.weights())
            .zip(&self.tile)
            .map(|((e, &d), t)| e + s.powi(d as i32) * t)
            .collect();
        let all = self.enumerate(j, &inflated);
        let total = all.len();
        let inside: Vec<_> = all.into_iter().filter(|(_, x)| grid.contains(x)).collect();
        let dropped = total - inside.len();
        (inside, dropped)
    }
}

/// Interpolation matrix `E_j` restricted to one scale.
#[derive(Clone, Debug)]
pub struct ScaleSampler {
    pub j: i32,
    pub indices: Vec<Vec<i64>>,
    pub points: Vec<GroupPoint>,
    pub dropped: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl ScaleSampler {
    fn new(set: &SamplingSet, j: i32, grid: &GridSpec) -> Result<Self> {
        let (pts, dropped) = set.points_at_scale(j, grid);
        if pts.is_empty() {
            return Err(Error::EmptySampleSet(j));
        }
        let rows = pts
            .par_iter()
            .map(|(_, x)| {
                let mut row = Vec::with_capacity(1 << grid.dim());
                grid.stencil(x, |lin, w| row.push((lin, w)));
                row
            })
            .collect();
        let (indices, points) = pts.into_iter().unzip();
        Ok(ScaleSampler {
            j,
            indices,
            points,
            dropped,
            rows,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `E_j f`.
    pub fn sample(&self, f: &[Complex64]) -> Vec<Complex64> {
        self.rows
            .par_iter()
            .map(|row| row.iter().map(|&(lin, w)| f[lin] * w).sum())
            .collect()
    }

    /// `E_jᵀ c`.
    pub fn spread(&self, c: &[Complex64], len: usize) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); len];
        for (row, &v) in self.rows.iter().zip(c) {
            for &(lin, w) in row {
                out[lin] += v * w;
            }
        }
        out
    }
}

/// Coefficients of one scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleCoefficients {
    pub indices: Vec<Vec<i64>>,
    pub values: Vec<Complex64>,
    pub dropped: usize,
}

/// `{c_{jγ}}` over a scale window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientArray {
    pub alpha: f64,
    pub tile: Vec<f64>,
    pub homogeneous_dim: u32,
    pub j_range: (i32, i32),
    pub scales: BTreeMap<i32, ScaleCoefficients>,
}

impl CoefficientArray {
    pub fn map<F: Fn(i32, Complex64) -> Complex64>(&self, f: F) -> Self {
        let mut out = self.clone();
        for (&j, sc) in out.scales.iter_mut() {
            sc.values.iter_mut().for_each(|v| *v = f(j, *v));
        }
        out
    }

    pub fn dropped(&self) -> usize {
        self.scales.values().map(|s| s.dropped).sum()
    }

    pub fn len(&self) -> usize {
        self.scales.values().map(|s| s.values.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Largest `|c|` with its scale and position.
    pub fn argmax(&self) -> Option<(i32, usize, f64)> {
        let mut best: Option<(i32, usize, f64)> = None;
        for (&j, sc) in &self.scales {
            for (i, v) in sc.values.iter().enumerate() {
                if best.is_none_or(|b| v.norm() > b.2) {
                    best = Some((j, i, v.norm()));
                }
            }
        }
        best
    }
}

/// `(Σ_j (Σ_γ (2^{j(s−Q/p)} |c_{jγ}|)^p)^{q/p})^{1/q}`.
pub fn seq_norm(c: &CoefficientArray, params: &BesovParams) -> f64 {
    let q_dim = c.homogeneous_dim as f64;
    let per_scale: Vec<f64> = c
        .scales
        .iter()
        .map(|(&j, sc)| {
            let weight = 2f64.powf(j as f64 * (params.s - q_dim / params.p));
            lp_sum(sc.values.iter().map(|v| weight * v.norm()), params.p)
        })
        .collect();
    lp_sum(per_scale.into_iter(), params.q)
}

fn lp_sum<I: Iterator<Item = f64>>(it: I, p: f64) -> f64 {
    if p.is_infinite() {
        it.fold(0.0, f64::max)
    } else {
        it.map(|v| v.powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// Discrete wavelet frame `{ψ_{jγ}}` over a scale window.
#[derive(Clone, Debug)]
pub struct Frame {
    wavelet: Arc<LPWavelet>,
    set: SamplingSet,
    j_range: (i32, i32),
    samplers: BTreeMap<i32, ScaleSampler>,
    complement: Option<MultiplierProfile>,
}

impl Frame {
    pub fn new(wavelet: Arc<LPWavelet>, set: SamplingSet, j_range: (i32, i32)) -> Result<Self> {
        let grid = wavelet.laplacian().grid().clone();
        if set.group() != grid.group() {
            return Err(Error::GridMismatch);
        }
        let (lo, hi) = wavelet.j_range();
        if j_range.0 < lo || j_range.1 > hi || j_range.0 > j_range.1 {
            return Err(Error::ScaleOutOfRange {
                j: if j_range.0 < lo { j_range.0 } else { j_range.1 },
                lo,
                hi,
            });
        }
        let mut samplers = BTreeMap::new();
        for j in j_range.0..=j_range.1 {
            samplers.insert(j, ScaleSampler::new(&set, j, &grid)?);
        }
        Ok(Frame {
            wavelet,
            set,
            j_range,
            samplers,
            complement: None,
        })
    }

    /// Adds the scales outside the window in their continuous form, so that
    /// `|W| S` is replaced by `|W| S + 1 − Σ_{j∈window} ψ̂_j(L)²`.
    pub fn with_complement(mut self, on: bool) -> Self {
        self.complement = on.then(|| {
            let mut window = self.wavelet.psi_hat_j(self.j_range.0).square();
            for j in self.j_range.0 + 1..=self.j_range.1 {
                window = window.sum(&self.wavelet.psi_hat_j(j).square());
            }
            MultiplierProfile::constant(1.0).sum(&window.scaled(-1.0))
        });
        self
    }

    pub fn has_complement(&self) -> bool {
        self.complement.is_some()
    }

    pub fn wavelet(&self) -> &Arc<LPWavelet> {
        &self.wavelet
    }

    pub fn sampling_set(&self) -> &SamplingSet {
        &self.set
    }

    pub fn j_range(&self) -> (i32, i32) {
        self.j_range
    }

    pub fn sampler(&self, j: i32) -> Option<&ScaleSampler> {
        self.samplers.get(&j)
    }

    fn grid(&self) -> &Arc<GridSpec> {
        self.wavelet.laplacian().grid()
    }

    fn q(&self) -> i32 {
        self.set.group().homogeneous_dim() as i32
    }

    /// `c_{jγ} = (u ∗ ψ_j^*)(δ_{2^{-j}} γ)`.
    pub fn analysis(&self, u: &GridFunction) -> Result<CoefficientArray> {
        let mut scales = BTreeMap::new();
        for (&j, sampler) in &self.samplers {
            let band = self.wavelet.band(u, j)?;
            scales.insert(
                j,
                ScaleCoefficients {
                    indices: sampler.indices.clone(),
                    values: sampler.sample(band.values()),
                    dropped: sampler.dropped,
                },
            );
        }
        Ok(CoefficientArray {
            alpha: self.set.alpha(),
            tile: self.set.tile().to_vec(),
            homogeneous_dim: self.q() as u32,
            j_range: self.j_range,
            scales,
        })
    }

    /// `Σ_{jγ} c_{jγ} ψ_{jγ}`.
    pub fn synthesis(&self, c: &CoefficientArray) -> Result<GridFunction> {
        let grid = self.grid().clone();
        let dv = grid.volume_element();
        let lm = self.wavelet.laplacian();
        let mut acc = GridFunction::zeros(grid.clone());
        for (j, sc) in &c.scales {
            let sampler = self.samplers.get(j).ok_or(Error::ScaleOutOfRange {
                j: *j,
                lo: self.j_range.0,
                hi: self.j_range.1,
            })?;
            if sc.values.len() != sampler.len() {
                return Err(Error::DimensionMismatch {
                    expected: sampler.len(),
                    got: sc.values.len(),
                });
            }
            let spread = sampler.spread(&sc.values, grid.len());
            let masses = GridFunction::new(grid.clone(), spread)?.scale(1.0 / dv);
            let atom_sum =
                lm.apply_multiplier(&self.wavelet.psi_hat_j(*j), &masses, self.wavelet.backend())?;
            acc.axpy(Complex64::new(1.0, 0.0), &atom_sum)?;
        }
        Ok(acc)
    }

    /// Single atom `ψ_{jγ}` for the `i`-th sample point of scale `j`.
    pub fn atom(&self, j: i32, i: usize) -> Result<GridFunction> {
        let sampler = self.samplers.get(&j).ok_or(Error::ScaleOutOfRange {
            j,
            lo: self.j_range.0,
            hi: self.j_range.1,
        })?;
        if i >= sampler.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: sampler.len(),
            });
        }
        let mut c = self.zero_coefficients();
        c.scales.get_mut(&j).expect("scale present").values[i] = Complex64::new(1.0, 0.0);
        self.synthesis(&c)
    }

    pub fn zero_coefficients(&self) -> CoefficientArray {
        let scales = self
            .samplers
            .iter()
            .map(|(&j, s)| {
                (
                    j,
                    ScaleCoefficients {
                        indices: s.indices.clone(),
                        values: vec![Complex64::new(0.0, 0.0); s.len()],
                        dropped: s.dropped,
                    },
                )
            })
            .collect();
        CoefficientArray {
            alpha: self.set.alpha(),
            tile: self.set.tile().to_vec(),
            homogeneous_dim: self.q() as u32,
            j_range: self.j_range,
            scales,
        }
    }

    /// `⟨u, ψ_{jγ}⟩` by grid quadrature against the left-translated cached
    /// kernel `ψ_j(x_{jγ}^{-1} ·)`.
    pub fn inner_product_quadrature(
        &self,
        u: &GridFunction,
        j: i32,
        i: usize,
    ) -> Result<Complex64> {
        let sampler = self.samplers.get(&j).ok_or(Error::ScaleOutOfRange {
            j,
            lo: self.j_range.0,
            hi: self.j_range.1,
        })?;
        let x = sampler.points.get(i).ok_or(Error::IndexOutOfRange {
            index: i,
            len: sampler.len(),
        })?;
        let atom = self.wavelet.kernel(j)?.kernel.left_translate(x);
        u.inner(&atom)
    }

    /// `S f = Σ_j 2^{-jQ} Σ_γ ⟨f, ψ_{jγ}⟩ ψ_{jγ}`.
    pub fn frame_operator(&self, f: &GridFunction) -> Result<GridFunction> {
        let q = self.q();
        let c = self.analysis(f)?.map(|j, v| v * 2f64.powi(-j * q));
        self.synthesis(&c)
    }

    /// `|W| S f`, plus the out-of-window term when enabled.
    pub fn scaled_frame_operator(&self, f: &GridFunction) -> Result<GridFunction> {
        let mut sf = self.frame_operator(f)?.scale(self.set.tile_volume());
        if let Some(c) = &self.complement {
            let lm = self.wavelet.laplacian();
            sf.axpy(
                Complex64::new(1.0, 0.0),
                &lm.apply_multiplier(c, f, self.wavelet.backend())?,
            )?;
        }
        Ok(sf)
    }

    /// `‖f − |W| S f‖ / ‖f‖`.
    pub fn deviation(&self, f: &GridFunction) -> Result<f64> {
        let sf = self.scaled_frame_operator(f)?;
        Ok(f.sub(&sf)?.lp_norm(2.0) / f.lp_norm(2.0))
    }

    /// `f − |W| S f`, the error map of one Neumann step.
    pub fn residual_map(&self, f: &GridFunction) -> Result<GridFunction> {
        f.sub(&self.scaled_frame_operator(f)?)
    }

    /// The probes followed by their first `steps` images under
    /// [`Frame::residual_map`], i.e. the directions the Neumann iteration
    /// visits first.
    pub fn krylov_probes(
        &self,
        probes: &[GridFunction],
        steps: usize,
    ) -> Result<Vec<GridFunction>> {
        let mut out = Vec::with_capacity(probes.len() * (steps + 1));
        for p in probes {
            let mut v = p.clone();
            out.push(v.clone());
            for _ in 0..steps {
                v = self.residual_map(&v)?;
                if v.lp_norm(2.0) == 0.0 {
                    break;
                }
                out.push(v.clone());
            }
        }
        Ok(out)
    }

    /// Largest one-step deviation over a probe set.
    pub fn measured_rho(&self, probes: &[GridFunction]) -> Result<f64> {
        let mut rho: f64 = 0.0;
        for p in probes {
            rho = rho.max(self.deviation(p)?);
        }
        Ok(rho)
    }

    /// Neumann series for `(|W| S)^{-1} f`.
    pub fn neumann_invert(
        &self,
        f: &GridFunction,
        rho: f64,
        tol: f64,
        max_iter: usize,
    ) -> Result<NeumannResult> {
        if rho >= 1.0 {
            return Err(Error::NotContractive {
                rho,
                alpha: self.set.alpha(),
            });
        }
        let norm = f.lp_norm(2.0);
        let mut g = f.clone();
        let mut history = Vec::new();
        if norm == 0.0 {
            return Ok(NeumannResult {
                solution: g,
                iterations: 0,
                history,
            });
        }
        for it in 0..=max_iter {
            let r = f.sub(&self.scaled_frame_operator(&g)?)?;
            let res = r.lp_norm(2.0) / norm;
            history.push(res);
            if res <= tol {
                return Ok(NeumannResult {
                    solution: g,
                    iterations: it,
                    history,
                });
            }
            if it == max_iter {
                break;
            }
            g.axpy(Complex64::new(1.0, 0.0), &r)?;
        }
        Err(Error::MaxIterExceeded {
            iters: max_iter,
            residual: *history.last().unwrap_or(&f64::NAN),
        })
    }

    /// `⟨f, ψ̃_{jγ}⟩ = ⟨S^{-1} f, ψ_{jγ}⟩`.
    pub fn dual_coefficients(
        &self,
        f: &GridFunction,
        rho: f64,
        tol: f64,
        max_iter: usize,
    ) -> Result<(CoefficientArray, NeumannResult)> {
        let inv = self.neumann_invert(f, rho, tol, max_iter)?;
        let s_inv_f = inv.solution.scale(self.set.tile_volume());
        Ok((self.analysis(&s_inv_f)?, inv))
    }

    /// `Σ 2^{-jQ} ⟨f, ψ̃_{jγ}⟩ ψ_{jγ}` against `f`, relative L².
    pub fn atomic_reconstruction(
        &self,
        f: &GridFunction,
        dual: &CoefficientArray,
    ) -> Result<(GridFunction, f64)> {
        let q = self.q();
        let rec = self.synthesis(&dual.map(|j, v| v * 2f64.powi(-j * q)))?;
        let res = rec.sub(f)?.lp_norm(2.0) / f.lp_norm(2.0);
        Ok((rec, res))
    }

    /// Per-scale normalized sampling ratios
    /// `|W_j|^{1/p} ‖E_j (u∗ψ_j^*)‖_{ℓ^p} / ‖u∗ψ_j^*‖_p`.
    pub fn sampling_ratios(&self, u: &GridFunction, p: f64) -> Result<Vec<(i32, f64)>> {
        let mut out = Vec::new();
        for (&j, sampler) in &self.samplers {
            let band = self.wavelet.band(u, j)?;
            let sampled = lp_sum(sampler.sample(band.values()).iter().map(|v| v.norm()), p);
            let cont = band.lp_norm(p);
            let wj = self.set.tile_volume_at(j);
            let scale = if p.is_infinite() {
                1.0
            } else {
                wj.powf(1.0 / p)
            };
            out.push((
                j,
                if cont > 0.0 {
                    scale * sampled / cont
                } else {
                    f64::NAN
                },
            ));
        }
        Ok(out)
    }

    /// `‖osc_r(K)‖₁` for the reproducing kernel at the tile radius.
    pub fn osc_at_tile(&self) -> f64 {
        osc_l1(
            &self.wavelet.reproducing_kernel().kernel,
            self.set.tile_radius(),
        )
    }
}

/// Neumann iteration outcome.
#[derive(Clone, Debug)]
pub struct NeumannResult {
    pub solution: GridFunction,
    pub iterations: usize,
    /// Relative residuals `‖f − |W| S g_n‖ / ‖f‖`, starting at `g_0 = f`.
    pub history: Vec<f64>,
}

impl NeumannResult {
    /// Ratios of consecutive residuals.
    pub fn ratios(&self) -> Vec<f64> {
        self.history.windows(2).map(|w| w[1] / w[0]).collect()
    }
}

/// Per-function and per-scale discrete-equivalence statistics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiscreteEquivReport {
    pub ratios: Vec<f64>,
    pub stats: RatioStats,
    /// `(function index, j, normalized sampling ratio)`.
    pub sampling: Vec<(usize, i32, f64)>,
    pub epsilon: f64,
    /// Fraction of `(u, j)` pairs inside `[1 − ε, 1 + ε]`.
    pub inside_fraction: f64,
}

/// `seq_norm(analysis u) / besov_norm(u)` over a test set, plus sampling
/// ratios against the band predicted by the measured oscillation.
pub fn discrete_equiv_report(
    test_set: &[GridFunction],
    frame: &Frame,
    params: &BesovParams,
    epsilon: f64,
) -> Result<DiscreteEquivReport> {
    if epsilon >= 1.0 {
        return Err(Error::DensityPrecheckFailed { osc: epsilon });
    }
    let mut ratios = Vec::new();
    let mut sampling = Vec::new();
    for (i, u) in test_set.iter().enumerate() {
        let c = frame.analysis(u)?;
        let (b, _) = crate::besov::besov_norm(u, &frame.wavelet, params, frame.j_range)?;
        ratios.push(seq_norm(&c, params) / b);
        for (j, r) in frame.sampling_ratios(u, params.p)? {
            sampling.push((i, j, r));
        }
    }
    let inside = sampling
        .iter()
        .filter(|(_, _, r)| *r >= 1.0 - epsilon && *r <= 1.0 + epsilon)
        .count();
    Ok(DiscreteEquivReport {
        stats: ratio_stats(&ratios),
        ratios,
        inside_fraction: inside as f64 / sampling.len().max(1) as f64,
        sampling,
        epsilon,
    })
}

/// One row of the density sweep.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DensityRow {
    pub alpha: f64,
    pub tile_volume: f64,
    pub tile_radius: f64,
    pub osc_l1: f64,
    pub rho: f64,
    pub spread: f64,
}

/// Oscillation, deviation and equivalence spread for several densities.
pub fn tightness_vs_density(
    wavelet: &Arc<LPWavelet>,
    alphas: &[f64],
    test_set: &[GridFunction],
    j_range: (i32, i32),
    params: &BesovParams,
    complement: bool,
) -> Result<Vec<DensityRow>> {
    let grid = wavelet.laplacian().grid().clone();
    let group = grid.group().clone();
    let mut rows = Vec::new();
    for &alpha in alphas {
        let set = make_lattice(&group, alpha, &grid)?;
        let frame = Frame::new(wavelet.clone(), set, j_range)?.with_complement(complement);
        let osc = frame.osc_at_tile();
        let rho = frame.measured_rho(test_set)?;
        let mut ratios = Vec::new();
        for u in test_set {
            let c = frame.analysis(u)?;
            let (b, _) = crate::besov::besov_norm(u, wavelet, params, j_range)?;
            ratios.push(seq_norm(&c, params) / b);
        }
        rows.push(DensityRow {
            alpha,
            tile_volume: frame.sampling_set().tile_volume(),
            tile_radius: frame.sampling_set().tile_radius(),
            osc_l1: osc,
            rho,
            spread: ratio_stats(&ratios).spread,
        });
    }
    Ok(rows)
}

/// Decay of `ψ_{jγ} ∗ ψ_l^*` against the distance to `x_{jγ}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MoleculeReport {
    pub j: i32,
    pub l: i32,
    /// `sup |ψ_{jγ} ∗ ψ_l^*| · (1 + 2^{min(j,l)} |x_{jγ}^{-1} x|)^{Q+1} · 2^{-jQ}`.
    pub weighted_sup: f64,
    /// `-log2(weighted_sup) / |j − l|` (infinite when `j = l`).
    pub theta_fit: f64,
    /// Node where `|ψ_{jγ} ∗ ψ_l^*|` peaks.
    pub peak: GroupPoint,
}

pub fn molecule_decay_check(frame: &Frame, j: i32, l: i32, i: usize) -> Result<MoleculeReport> {
    let atom = frame.atom(j, i)?;
    let w = frame.wavelet();
    let conv = w.band(&atom, l)?;
    let grid = atom.grid().clone();
    let grp = grid.group();
    let centre = frame.sampler(j).expect("scale present").points[i].clone();
    let cinv = grp.inverse(&centre);
    let q = grp.homogeneous_dim() as i32;
    let m = 2f64.powi(j.min(l));
    let mut sup: f64 = 0.0;
    let mut peak_val = -1.0;
    let mut peak = vec![0.0; grid.dim()];
    let mut z = vec![0.0; grid.dim()];
    for (lin, v) in conv.values().iter().enumerate() {
        let x = grid.node(lin);
        grp.product_into(&cinv, &x, &mut z);
        let d = grp.quasi_norm(&z);
        sup = sup.max(v.norm() * (1.0 + m * d).powi(q + 1) * 2f64.powi(-j * q));
        if v.norm() > peak_val {
            peak_val = v.norm();
            peak = x;
        }
    }
    let gap = (j - l).abs();
    Ok(MoleculeReport {
        j,
        l,
        weighted_sup: sup,
        theta_fit: if gap == 0 {
            f64::INFINITY
        } else {
            -sup.log2() / gap as f64
        },
        peak,
    })
}

/// Summary of one-step deviations over a probe set.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeviationStats {
    pub probes: usize,
    /// Largest deviation; the contraction estimate `ρ`.
    pub rho: f64,
    pub mean: f64,
    pub min: f64,
}

/// Density check, deviation, Neumann inversion and atomic reconstruction
/// for one frame and one input.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrameReport {
    pub alpha: f64,
    pub tile_volume: f64,
    pub tile_radius: f64,
    pub osc_l1: f64,
    pub deviation: DeviationStats,
    pub neumann_iters: usize,
    pub residual_history: Vec<f64>,
    /// Fraction of consecutive residual ratios inside `[0.8 ρ, 1.2 ρ]`.
    pub ratio_band_fraction: f64,
    pub reconstruction_residual: f64,
    pub dropped_samples: usize,
}

/// Runs the inversion path on `f`; `probes` define `ρ`. Returns the report
/// and the dual coefficients of `f`.
pub fn frame_report(
    frame: &Frame,
    f: &GridFunction,
    probes: &[GridFunction],
    tol: f64,
    max_iter: usize,
) -> Result<(FrameReport, CoefficientArray)> {
    let mut devs = Vec::with_capacity(probes.len());
    for p in probes {
        devs.push(frame.deviation(p)?);
    }
    let rho = devs.iter().copied().fold(0.0, f64::max);
    let deviation = DeviationStats {
        probes: devs.len(),
        rho,
        mean: devs.iter().sum::<f64>() / devs.len().max(1) as f64,
        min: devs.iter().copied().fold(f64::INFINITY, f64::min),
    };
    let (dual, inv) = frame.dual_coefficients(f, rho, tol, max_iter)?;
    let ratios = inv.ratios();
    let inside = ratios
        .iter()
        .filter(|&&r| r >= 0.8 * rho && r <= 1.2 * rho)
        .count();
    let (_, reconstruction_residual) = frame.atomic_reconstruction(f, &dual)?;
    let set = frame.sampling_set();
    Ok((
        FrameReport {
            alpha: set.alpha(),
            tile_volume: set.tile_volume(),
            tile_radius: set.tile_radius(),
            osc_l1: frame.osc_at_tile(),
            deviation,
            neumann_iters: inv.iterations,
            ratio_band_fraction: if ratios.is_empty() {
                1.0
            } else {
                inside as f64 / ratios.len() as f64
            },
            residual_history: inv.history,
            reconstruction_residual,
            dropped_samples: dual.dropped(),
        },
        dual,
    ))
}
