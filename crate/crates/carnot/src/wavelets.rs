//! Littlewood-Paley and Mexican-hat wavelets built from spectral profiles.
//!
//! Scale convention: `ψ_j = D_{2^j} ψ` corresponds to the profile
//! `ψ̂(4^{-j} λ)`, so the band of `ψ_j` is `4^j · supp ψ̂`.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{convolve, convolve_extended, GridFunction, GridSpec};
use crate::io::KernelCache;
use crate::spectral::{
    euclidean_oracle_kernel, Backend, MultiplierProfile, Smoothness, SpectralKernel, SubLaplacian,
};

/// Smooth cut-off `φ̂`: 1 on `[0, flat_end]`, 0 on `[support_end, ∞)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BumpSpec {
    pub flat_end: f64,
    pub support_end: f64,
    /// Steepness `a` of the `exp(-a/t)` step.
    pub transition: f64,
}

impl Default for BumpSpec {
    fn default() -> Self {
        BumpSpec {
            flat_end: 0.25,
            support_end: 1.0,
            transition: 1.0,
        }
    }
}

impl BumpSpec {
    pub fn new(flat_end: f64, support_end: f64) -> Self {
        BumpSpec {
            flat_end,
            support_end,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.flat_end > 0.0
            && self.flat_end < self.support_end
            && self.support_end.is_finite())
        {
            return Err(Error::InvalidBump(format!(
                "need 0 < flat_end < support_end, got {} and {}",
                self.flat_end, self.support_end
            )));
        }
        if !(self.transition > 0.0 && self.transition.is_finite()) {
            return Err(Error::InvalidBump(format!(
                "transition must be positive, got {}",
                self.transition
            )));
        }
        Ok(())
    }
}

/// `C^∞` step from 0 (at `t ≤ 0`) to 1 (at `t ≥ 1`).
pub fn smooth_step(t: f64, a: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let u = (-a / t).exp();
        let v = (-a / (1.0 - t)).exp();
        u / (u + v)
    }
}

pub fn make_phi_hat(spec: &BumpSpec) -> Result<MultiplierProfile> {
    spec.validate()?;
    let BumpSpec {
        flat_end: f,
        support_end: s,
        transition: a,
    } = *spec;
    Ok(MultiplierProfile::new(
        format!("phi[{f:e},{s:e},{a:e}]"),
        Smoothness::CompactlySupportedSmooth,
        Some((0.0, s)),
        move |x: f64| 1.0 - smooth_step((x - f) / (s - f), a),
    ))
}

/// Plateau profile: 0 below `lo`, 1 on `[lo_flat, hi_flat]`, 0 above `hi`.
pub fn make_plateau(lo: f64, lo_flat: f64, hi_flat: f64, hi: f64) -> Result<MultiplierProfile> {
    if !(0.0 <= lo && lo < lo_flat && lo_flat <= hi_flat && hi_flat < hi) {
        return Err(Error::InvalidBump(format!(
            "plateau needs lo < lo_flat <= hi_flat < hi, got {lo}, {lo_flat}, {hi_flat}, {hi}"
        )));
    }
    Ok(MultiplierProfile::new(
        format!("plateau[{lo:e},{lo_flat:e},{hi_flat:e},{hi:e}]"),
        Smoothness::CompactlySupportedSmooth,
        Some((lo, hi)),
        move |x: f64| {
            smooth_step((x - lo) / (lo_flat - lo), 1.0)
                * (1.0 - smooth_step((x - hi_flat) / (hi - hi_flat), 1.0))
        },
    ))
}

/// `ψ̂(ξ) = sqrt(φ̂(ξ/4) − φ̂(ξ))`.
pub fn make_psi_hat(phi_hat: &MultiplierProfile) -> Result<MultiplierProfile> {
    let upper = phi_hat
        .support()
        .map(|(_, b)| b)
        .ok_or_else(|| Error::InvalidBump("phi_hat needs a compact support hint".into()))?;
    let samples = 10_000;
    let mut plateau_end = 0.0;
    for i in 0..=samples {
        let xi = 4.0 * upper * i as f64 / samples as f64;
        let value = phi_hat.eval(xi / 4.0) - phi_hat.eval(xi);
        if value < -1e-14 {
            return Err(Error::NegativeRadicand { xi, value });
        }
        if phi_hat.eval(xi) == 1.0 {
            plateau_end = xi;
        }
    }
    let lo = plateau_end * (1.0 - 1.0 / samples as f64);
    let phi = phi_hat.clone();
    Ok(MultiplierProfile::new(
        format!("psi({})", phi_hat.label()),
        Smoothness::CompactlySupportedSmooth,
        Some((lo, 4.0 * upper)),
        move |x: f64| (phi.eval(x / 4.0) - phi.eval(x)).max(0.0).sqrt(),
    ))
}

/// Sup over a log-spaced scan of `[lo, hi]` of `|1 − Σ_{|j|≤J} ψ̂(4^j ξ)²|`.
pub fn partition_of_unity_residual(
    psi_hat: &MultiplierProfile,
    big_j: i32,
    lo: f64,
    hi: f64,
    samples: usize,
) -> f64 {
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..samples)
        .map(|i| {
            let xi = (llo + (lhi - llo) * i as f64 / (samples - 1) as f64).exp();
            let total: f64 = (-big_j..=big_j)
                .map(|j| psi_hat.eval(4f64.powi(j) * xi).powi(2))
                .sum();
            (1.0 - total).abs()
        })
        .fold(0.0, f64::max)
}

/// One row of a vanishing-moment table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub degree: u32,
    pub max_normalized: f64,
}

/// Vanishing-moment order is declared verified when all normalized moments
/// of the lower degrees are at most this.
pub const MOMENT_TOL: f64 = 1e-5;

/// Max over multi-indices of homogeneous degree `d < nmax` of
/// `|∫ ψ x^I| / (‖ψ‖₁ R^d)`.
pub fn check_vanishing_moments(psi: &GridFunction, nmax: u32) -> Vec<MomentRow> {
    let grid = psi.grid();
    let l1 = psi.lp_norm(1.0);
    let r = grid.half_width();
    (0..nmax)
        .map(|d| {
            let worst = grid
                .group()
                .poly_basis(d)
                .iter()
                .map(|mi| psi.moment(mi).norm())
                .fold(0.0, f64::max);
            let scale = l1 * r.powi(d as i32);
            MomentRow {
                degree: d,
                max_normalized: if scale > 0.0 { worst / scale } else { 0.0 },
            }
        })
        .collect()
}

/// Number of consecutive degrees `0, 1, …` whose normalized moments pass.
pub fn moment_order(rows: &[MomentRow], tol: f64) -> u32 {
    rows.iter().take_while(|r| r.max_normalized <= tol).count() as u32
}

/// Spectral resolvability of one dyadic band.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleInfo {
    pub j: i32,
    pub band_lo: f64,
    pub band_hi: f64,
    pub fully_resolved: bool,
}

/// LP-admissible wavelet on a discretized group.
#[derive(Clone, Debug)]
pub struct LPWavelet {
    lm: Arc<SubLaplacian>,
    psi_hat: MultiplierProfile,
    k_hat: MultiplierProfile,
    j_range: (i32, i32),
    backend: Backend,
    psi: SpectralKernel,
    dilates: BTreeMap<i32, SpectralKernel>,
    k: SpectralKernel,
    scales: Vec<ScaleInfo>,
    moments: Vec<MomentRow>,
    moments_scale: i32,
    moments_order: u32,
}

/// Options of [`build_lp_wavelet`].
#[derive(Clone, Debug)]
pub struct BuildOptions {
    pub backend: Backend,
    /// Moments are checked for homogeneous degrees below this.
    pub moment_degrees: u32,
    pub moment_tol: f64,
    pub check_moments: bool,
    /// Kernels are read from and written to this cache when set.
    pub cache: Option<KernelCache>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            backend: Backend::Auto,
            moment_degrees: 3,
            moment_tol: MOMENT_TOL,
            check_moments: true,
            cache: None,
        }
    }
}

/// Builds `ψ = kernel of ψ̂(L)` and its dyadic dilates over `j_range` by
/// profile dilation.
pub fn build_lp_wavelet(
    lm: Arc<SubLaplacian>,
    psi_hat: MultiplierProfile,
    j_range: (i32, i32),
    options: &BuildOptions,
) -> Result<LPWavelet> {
    if j_range.0 > j_range.1 {
        return Err(Error::InvalidParameter(format!(
            "empty scale range {:?}",
            j_range
        )));
    }
    let (s_lo, s_hi) = psi_hat
        .support()
        .ok_or_else(|| Error::InvalidBump("psi_hat needs a compact support hint".into()))?;
    let win_lo = lm.lambda_min_resolvable();
    let win_hi = lm.lambda_max();
    let mut scales = Vec::new();
    for j in j_range.0..=j_range.1 {
        let (lo, hi) = (s_lo * 4f64.powi(j), s_hi * 4f64.powi(j));
        if hi <= win_lo || lo >= win_hi {
            return Err(Error::ScaleRangeUnresolvable {
                j,
                lo,
                hi,
                win_lo,
                win_hi,
            });
        }
        scales.push(ScaleInfo {
            j,
            band_lo: lo,
            band_hi: hi,
            fully_resolved: lo >= win_lo && hi <= win_hi,
        });
    }
    // Reproducing plateau: 1 on supp ψ̂, supported in a 4x larger interval.
    let k_hat = make_plateau(s_lo / 4.0, s_lo, s_hi, 4.0 * s_hi)?;
    let kernel = |prof: &MultiplierProfile| match &options.cache {
        Some(c) => c.kernel_of(&lm, prof, options.backend),
        None => lm.kernel_of(prof, options.backend),
    };
    let psi = kernel(&psi_hat)?;
    let k = kernel(&k_hat)?;
    let mut dilates = BTreeMap::new();
    for j in j_range.0..=j_range.1 {
        let kern = if j == 0 {
            psi.clone()
        } else {
            kernel(&psi_hat.dyadic(j))?
        };
        dilates.insert(j, kern);
    }
    let mut w = LPWavelet {
        lm,
        psi_hat,
        k_hat,
        j_range,
        backend: options.backend,
        psi,
        dilates,
        k,
        scales,
        moments: Vec::new(),
        moments_scale: 0,
        moments_order: 0,
    };
    if options.check_moments {
        // Vanishing moments are scale invariant in the continuum; verify on
        // the best-localized cached dilate.
        let mut best: Option<(u32, f64, i32, Vec<MomentRow>)> = None;
        for (&j, kern) in &w.dilates {
            let rows = check_vanishing_moments(&kern.kernel, options.moment_degrees);
            let order = moment_order(&rows, options.moment_tol);
            let worst = rows.iter().map(|r| r.max_normalized).fold(0.0, f64::max);
            let better = match &best {
                None => true,
                Some((o, wv, _, _)) => order > *o || (order == *o && worst < *wv),
            };
            if better {
                best = Some((order, worst, j, rows));
            }
        }
        if let Some((order, _, j, rows)) = best {
            w.moments_order = order;
            w.moments_scale = j;
            w.moments = rows;
        }
    }
    Ok(w)
}

impl LPWavelet {
    pub fn laplacian(&self) -> &Arc<SubLaplacian> {
        &self.lm
    }

    pub fn psi_hat(&self) -> &MultiplierProfile {
        &self.psi_hat
    }

    pub fn psi(&self) -> &SpectralKernel {
        &self.psi
    }

    /// Profile of `ψ_j`.
    pub fn psi_hat_j(&self, j: i32) -> MultiplierProfile {
        self.psi_hat.dyadic(j)
    }

    pub fn j_range(&self) -> (i32, i32) {
        self.j_range
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn scales(&self) -> &[ScaleInfo] {
        &self.scales
    }

    pub fn fully_resolved(&self) -> bool {
        self.scales.iter().all(|s| s.fully_resolved)
    }

    pub fn moments(&self) -> &[MomentRow] {
        &self.moments
    }

    pub fn moments_scale(&self) -> i32 {
        self.moments_scale
    }

    /// Verified vanishing-moment order.
    pub fn moments_order(&self) -> u32 {
        self.moments_order
    }

    /// Overrides the verified order, e.g. when moments were established on a
    /// finer grid.
    pub fn set_moments_order(&mut self, order: u32) {
        self.moments_order = order;
    }

    pub fn reproducing_profile(&self, j: i32) -> MultiplierProfile {
        self.k_hat.dyadic(j)
    }

    pub fn reproducing_kernel(&self) -> &SpectralKernel {
        &self.k
    }

    fn check_scale(&self, j: i32) -> Result<()> {
        if j < self.j_range.0 || j > self.j_range.1 {
            Err(Error::ScaleOutOfRange {
                j,
                lo: self.j_range.0,
                hi: self.j_range.1,
            })
        } else {
            Ok(())
        }
    }

    /// Cached kernel `ψ_j`.
    pub fn kernel(&self, j: i32) -> Result<&SpectralKernel> {
        self.check_scale(j)?;
        Ok(&self.dilates[&j])
    }

    /// `u ∗ ψ_j^*`, realized as `ψ̂_j(L) u` (ψ̂ is real, so `ψ^* = ψ`).
    pub fn band(&self, u: &GridFunction, j: i32) -> Result<GridFunction> {
        self.check_scale(j)?;
        self.lm
            .apply_multiplier(&self.psi_hat_j(j), u, self.backend)
    }

    /// `ψ_j ∗ K_j` against `ψ_j`, relative L².
    pub fn reproducing_defect(&self, j: i32) -> Result<f64> {
        let psi_j = &self.kernel(j)?.kernel;
        let back = self
            .lm
            .apply_multiplier(&self.reproducing_profile(j), psi_j, self.backend)?;
        Ok(back.sub(psi_j)?.lp_norm(2.0) / psi_j.lp_norm(2.0))
    }
}

/// `‖ψ_j^* ∗ ψ_l‖₂ / (‖ψ_j‖₂ ‖ψ_l‖₂)` with the convolution applied
/// spectrally to the cached kernel `ψ_j`.
pub fn check_orthogonal_scales(w: &LPWavelet, j: i32, l: i32) -> Result<f64> {
    let psi_j = &w.kernel(j)?.kernel;
    let psi_l = &w.kernel(l)?.kernel;
    let conv = w.lm.apply_multiplier(&w.psi_hat_j(l), psi_j, w.backend)?;
    Ok(conv.lp_norm(2.0) / (psi_j.lp_norm(2.0) * psi_l.lp_norm(2.0)))
}

/// Same quantity by grid quadrature: `ψ_j^* ∗ ψ_l` with `convolve`.
pub fn check_orthogonal_scales_quadrature(w: &LPWavelet, j: i32, l: i32) -> Result<f64> {
    let psi_j = &w.kernel(j)?.kernel;
    let psi_l = &w.kernel(l)?.kernel;
    let conv = convolve(&psi_j.involution(), psi_l)?;
    Ok(conv.lp_norm(2.0) / (psi_j.lp_norm(2.0) * psi_l.lp_norm(2.0)))
}

/// Relative L² norm of `a − b` against `b`; 0 when both vanish.
fn relative(a: &GridFunction, b: &GridFunction) -> Result<f64> {
    let nb = b.lp_norm(2.0);
    let d = a.sub(b)?.lp_norm(2.0);
    Ok(if nb == 0.0 {
        if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        d / nb
    })
}

/// `Σ_{|j|≤J} g ∗ ψ_j^* ∗ ψ_j` and its relative residual against `g`. Scales
/// outside the cached range are applied from the profile.
pub fn calderon_reconstruct(
    w: &LPWavelet,
    g: &GridFunction,
    big_j: i32,
) -> Result<(GridFunction, f64)> {
    let mut acc = GridFunction::zeros(g.grid().clone());
    for j in -big_j..=big_j {
        let prof = w.psi_hat_j(j);
        let band = w.lm.apply_multiplier(&prof, g, w.backend)?;
        let back = w.lm.apply_multiplier(&prof, &band, w.backend)?;
        acc.axpy(1.0.into(), &back)?;
    }
    let res = relative(&acc, g)?;
    Ok((acc, res))
}

/// Euclidean Calderón sum with Fourier-oracle kernels of `ψ̂_j²` and grid
/// quadrature convolution; no spectral matrix is involved. The kernels are
/// tabulated on a box of twice the width with the same nodes, so that wide
/// low-frequency kernels are not truncated.
pub fn calderon_reconstruct_oracle(
    psi_hat: &MultiplierProfile,
    g: &GridFunction,
    big_j: i32,
) -> Result<(GridFunction, f64)> {
    let grid = g.grid().clone();
    let wide = Arc::new(oracle_extended_grid(&grid)?);
    let mut acc = GridFunction::zeros(grid.clone());
    for j in -big_j..=big_j {
        let kern = euclidean_oracle_kernel(&psi_hat.dyadic(j).square(), &wide)?;
        acc.axpy(1.0.into(), &convolve_extended(g, &kern)?)?;
    }
    let res = relative(&acc, g)?;
    Ok((acc, res))
}

/// Euclidean box of twice the width sharing the nodes of `grid`.
fn oracle_extended_grid(grid: &GridSpec) -> Result<GridSpec> {
    let pts = grid.points();
    let n = pts[0];
    if pts.iter().any(|&m| m != n) {
        return Err(Error::InvalidParameter(
            "oracle kernels need equal points per axis".into(),
        ));
    }
    let half = grid.half_width() * (2 * n + 1) as f64 / n as f64;
    GridSpec::new(grid.group().clone(), half, vec![2 * n + 1; pts.len()])
}

/// Relative gap between `Σ_{|j|≤N} g ∗ ψ_j^* ∗ ψ_j` and
/// `g ∗ D_{2^{N+1}}φ − g ∗ D_{2^{-N}}φ`.
pub fn telescoping_check(
    w: &LPWavelet,
    phi_hat: &MultiplierProfile,
    g: &GridFunction,
    n: i32,
) -> Result<f64> {
    let (sum, _) = calderon_reconstruct(w, g, n)?;
    let lm = &w.lm;
    let top = lm.apply_multiplier(&phi_hat.dyadic(n + 1), g, w.backend)?;
    let bottom = lm.apply_multiplier(&phi_hat.dyadic(-n), g, w.backend)?;
    let rhs = top.sub(&bottom)?;
    relative(&sum, &rhs)
}

/// Telescoping identity with grid-quadrature convolutions against the
/// cached kernels.
pub fn telescoping_check_quadrature(
    w: &LPWavelet,
    phi_hat: &MultiplierProfile,
    g: &GridFunction,
    n: i32,
) -> Result<f64> {
    let lm = &w.lm;
    let mut sum = GridFunction::zeros(g.grid().clone());
    for j in -n..=n {
        let psi_j = &w.kernel(j)?.kernel;
        let band = convolve(g, &psi_j.involution())?;
        sum.axpy(1.0.into(), &convolve(&band, psi_j)?)?;
    }
    let top = lm.kernel_of(&phi_hat.dyadic(n + 1), w.backend)?.kernel;
    let bottom = lm.kernel_of(&phi_hat.dyadic(-n), w.backend)?.kernel;
    let rhs = convolve(g, &top.sub(&bottom)?)?;
    relative(&sum, &rhs)
}

/// `λ ↦ λ^k ĥ(λ)`.
pub fn mexican_hat_profile(k: u32, h_hat: Option<&MultiplierProfile>) -> Result<MultiplierProfile> {
    if k < 1 {
        return Err(Error::InvalidParameter(
            "Mexican hat order k must be at least 1".into(),
        ));
    }
    let h = h_hat.cloned().unwrap_or_else(MultiplierProfile::heat);
    let hf = h.clone();
    Ok(MultiplierProfile::new(
        format!("mexhat[{k}]({})", h.label()),
        h.smoothness(),
        h.support(),
        move |l: f64| l.powi(k as i32) * hf.eval(l),
    ))
}

/// Kernel of `L^k ĥ(L)`, heat profile by default.
pub fn make_mexican_hat(
    lm: &SubLaplacian,
    k: u32,
    h_hat: Option<&MultiplierProfile>,
    backend: Backend,
) -> Result<SpectralKernel> {
    lm.kernel_of(&mexican_hat_profile(k, h_hat)?, backend)
}

/// Outcome of a continuous Calderón reconstruction.
#[derive(Clone, Debug)]
pub struct ContinuousCalderon {
    pub reconstruction: GridFunction,
    pub residual: f64,
    /// Measured admissibility constant `½ ∫₀^∞ ψ̂(u)² du/u`.
    pub constant: f64,
}

/// Log-spaced scales on `[eps, a_max]` with trapezoid weights in `log a`.
pub fn log_scale_grid(eps: f64, a_max: f64, n: usize) -> Result<Vec<(f64, f64)>> {
    if !(eps > 0.0 && a_max > eps) || n < 2 {
        return Err(Error::InvalidParameter(format!(
            "scale grid needs 0 < eps < A and at least two scales, got [{eps}, {a_max}] with {n}"
        )));
    }
    let (lo, hi) = (eps.ln(), a_max.ln());
    let step = (hi - lo) / (n - 1) as f64;
    Ok((0..n)
        .map(|i| {
            let w = if i == 0 || i == n - 1 {
                0.5 * step
            } else {
                step
            };
            ((lo + step * i as f64).exp(), w)
        })
        .collect())
}

/// `½ ∫₀^∞ m(u) du/u` by trapezoid quadrature in `log u`.
pub fn admissibility_constant(m: &MultiplierProfile) -> f64 {
    let (lo, hi, n) = (-40.0f64, 12.0f64, 20_001usize);
    let step = (hi - lo) / (n - 1) as f64;
    let mut acc = 0.0;
    for i in 0..n {
        let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        acc += w * m.eval((lo + step * i as f64).exp());
    }
    0.5 * acc * step
}

/// `(1/C) ∫_eps^A g ∗ D_a(ψ^* ∗ ψ) da/a` against `g`, one spectral
/// application per scale.
pub fn continuous_calderon(
    lm: &SubLaplacian,
    psi_hat: &MultiplierProfile,
    g: &GridFunction,
    eps: f64,
    a_max: f64,
    n_scales: usize,
    backend: Backend,
) -> Result<ContinuousCalderon> {
    let m = psi_hat.square();
    let constant = admissibility_constant(&m);
    let mut acc = GridFunction::zeros(g.grid().clone());
    for (a, w) in log_scale_grid(eps, a_max, n_scales)? {
        let term = lm.apply_multiplier(&m.rescaled(a.powi(-2)), g, backend)?;
        acc.axpy((w / constant).into(), &term)?;
    }
    let residual = relative(&acc, g)?;
    Ok(ContinuousCalderon {
        reconstruction: acc,
        residual,
        constant,
    })
}

/// Least-squares slope of `log ‖g ∗ D_t f‖_p` against `log t`.
pub fn check_decay_scaling(
    g: &GridFunction,
    f: &GridFunction,
    p: f64,
    t_list: &[f64],
) -> Result<f64> {
    if t_list.len() < 2 {
        return Err(Error::InvalidParameter(
            "decay fit needs at least two dilation factors".into(),
        ));
    }
    let mut pts = Vec::with_capacity(t_list.len());
    for &t in t_list {
        let conv = convolve(g, &f.dilate(t)?)?;
        pts.push((t.ln(), conv.lp_norm(p).ln()));
    }
    Ok(fit_slope(&pts))
}

pub fn fit_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
