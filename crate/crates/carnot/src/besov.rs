//! Homogeneous Besov norms by dyadic bands and by continuous wavelet
//! transforms, plus equivalence statistics.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridFunction, GridSpec};
use crate::spectral::{Backend, MultiplierProfile, SubLaplacian};
use crate::wavelets::{log_scale_grid, make_plateau, mexican_hat_profile, LPWavelet};

/// Exponents of `Ḃ^s_{p,q}`; `p, q` may be infinite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BesovParams {
    pub p: f64,
    pub q: f64,
    pub s: f64,
}

impl BesovParams {
    pub fn new(p: f64, q: f64, s: f64) -> Result<Self> {
        let params = BesovParams { p, q, s };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p >= 1.0) || !(self.q >= 1.0) || !self.s.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "Besov exponents need p, q in [1, inf] and finite s, got p={}, q={}, s={}",
                self.p, self.q, self.s
            )));
        }
        Ok(())
    }

    /// `|s| < k` for a wavelet with `k` vanishing moments.
    pub fn check_moments(&self, order: u32) -> Result<()> {
        if self.s.abs() < order as f64 {
            Ok(())
        } else {
            Err(Error::MomentOrderTooLow { s: self.s, order })
        }
    }
}

/// Band norms `‖u ∗ ψ_j^*‖_p` of one function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LPCoefficients {
    pub by_scale: BTreeMap<i32, f64>,
    pub params: BesovParams,
    pub j_range: (i32, i32),
}

fn lq(values: impl Iterator<Item = f64>, q: f64) -> f64 {
    if q.is_infinite() {
        values.fold(0.0, f64::max)
    } else {
        values.map(|v| v.powf(q)).sum::<f64>().powf(1.0 / q)
    }
}

/// `u ∗ ψ_j^*`.
pub fn lp_band(u: &GridFunction, w: &LPWavelet, j: i32) -> Result<GridFunction> {
    w.band(u, j)
}

/// `(Σ_{j ∈ window} (2^{js} ‖u ∗ ψ_j^*‖_p)^q)^{1/q}`.
pub fn besov_norm(
    u: &GridFunction,
    w: &LPWavelet,
    params: &BesovParams,
    window: (i32, i32),
) -> Result<(f64, LPCoefficients)> {
    params.validate()?;
    params.check_moments(w.moments_order())?;
    let mut by_scale = BTreeMap::new();
    for j in window.0..=window.1 {
        by_scale.insert(j, w.band(u, j)?.lp_norm(params.p));
    }
    let norm = lq(
        by_scale
            .iter()
            .map(|(&j, &b)| 2f64.powf(j as f64 * params.s) * b),
        params.q,
    );
    Ok((
        norm,
        LPCoefficients {
            by_scale,
            params: *params,
            j_range: window,
        },
    ))
}

/// Scale grid for continuous wavelet norms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScaleGrid {
    /// `n` log-spaced scales on `[eps, a_max]`, trapezoid weights in `log a`.
    Log { eps: f64, a_max: f64, n: usize },
    /// `a = 2^j` for `j` in `lo..=hi`, unit weights.
    Dyadic { lo: i32, hi: i32 },
}

impl ScaleGrid {
    pub fn nodes(&self) -> Result<Vec<(f64, f64)>> {
        match *self {
            ScaleGrid::Log { eps, a_max, n } => log_scale_grid(eps, a_max, n),
            ScaleGrid::Dyadic { lo, hi } => Ok((lo..=hi).map(|j| (2f64.powi(j), 1.0)).collect()),
        }
    }

    /// Same interval with twice as many subintervals.
    pub fn refined(&self) -> Self {
        match *self {
            ScaleGrid::Log { eps, a_max, n } => ScaleGrid::Log {
                eps,
                a_max,
                n: 2 * n - 1,
            },
            d => d,
        }
    }
}

/// `(∫ (a^s ‖u ∗ D_a ψ^*‖_p)^q da/a)^{1/q}` for a real profile `ψ̂`, with
/// `u ∗ D_a ψ^* = ψ̂(a^{-2} L) u`.
pub fn cwt_norm(
    u: &GridFunction,
    lm: &SubLaplacian,
    psi_hat: &MultiplierProfile,
    moments_order: u32,
    params: &BesovParams,
    scales: &ScaleGrid,
    backend: Backend,
) -> Result<f64> {
    params.validate()?;
    params.check_moments(moments_order)?;
    let mut terms = Vec::new();
    for (a, weight) in scales.nodes()? {
        let band = lm.apply_multiplier(&psi_hat.rescaled(a.powi(-2)), u, backend)?;
        terms.push((weight, a.powf(params.s) * band.lp_norm(params.p)));
    }
    Ok(if params.q.is_infinite() {
        terms.iter().map(|t| t.1).fold(0.0, f64::max)
    } else {
        terms
            .iter()
            .map(|(w, v)| w * v.powf(params.q))
            .sum::<f64>()
            .powf(1.0 / params.q)
    })
}

/// Continuous norm with the heat-semigroup Mexican hat `L^k e^{-L}`,
/// which has `2k` vanishing moments.
pub fn heat_char_norm(
    u: &GridFunction,
    lm: &SubLaplacian,
    k: u32,
    params: &BesovParams,
    t_grid: &ScaleGrid,
    backend: Backend,
) -> Result<f64> {
    let prof = mexican_hat_profile(k, None)?;
    cwt_norm(u, lm, &prof, 2 * k, params, t_grid, backend)
}

/// Minimum, maximum and `spread = max/min` of a ratio sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioStats {
    pub n: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub spread: f64,
}

pub fn ratio_stats(ratios: &[f64]) -> RatioStats {
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = ratios.iter().sum::<f64>() / ratios.len().max(1) as f64;
    RatioStats {
        n: ratios.len(),
        min,
        max,
        mean,
        spread: if ratios.is_empty() { 1.0 } else { max / min },
    }
}

/// Ratios `norm_a(u) / norm_b(u)` over a test set.
pub fn norm_equiv_report<A, B>(
    test_set: &[GridFunction],
    norm_a: A,
    norm_b: B,
) -> Result<(Vec<f64>, RatioStats)>
where
    A: Fn(&GridFunction) -> Result<f64>,
    B: Fn(&GridFunction) -> Result<f64>,
{
    let mut ratios = Vec::with_capacity(test_set.len());
    for u in test_set {
        ratios.push(norm_a(u)? / norm_b(u)?);
    }
    let stats = ratio_stats(&ratios);
    Ok((ratios, stats))
}

/// Ratios `‖L^k u‖_{Ḃ^{s−2k}} / ‖u‖_{Ḃ^s}` with `L^k` applied as a matrix
/// power.
pub fn laplacian_shift_check(
    test_set: &[GridFunction],
    w: &LPWavelet,
    k: u32,
    params: &BesovParams,
    window: (i32, i32),
) -> Result<(Vec<f64>, RatioStats)> {
    let shifted = BesovParams {
        s: params.s - 2.0 * k as f64,
        ..*params
    };
    params.check_moments(w.moments_order())?;
    shifted.check_moments(w.moments_order())?;
    let lm = w.laplacian();
    norm_equiv_report(
        test_set,
        |u| {
            let mut v = u.clone();
            for _ in 0..k {
                v = lm.apply_matrix(&v)?;
            }
            Ok(besov_norm(&v, w, &shifted, window)?.0)
        },
        |u| Ok(besov_norm(u, w, params, window)?.0),
    )
}

/// `max ‖L₁^k f‖ / ‖L₂^k f‖` and the reciprocal maximum over band-passed
/// test functions.
pub fn sublaplacian_commensurability(
    lm1: &SubLaplacian,
    lm2: &SubLaplacian,
    k: u32,
    test_set: &[GridFunction],
    band: &MultiplierProfile,
    backend: Backend,
) -> Result<(f64, f64)> {
    if **lm1.grid() != **lm2.grid() {
        return Err(Error::GridMismatch);
    }
    let mut up: f64 = 0.0;
    let mut down: f64 = 0.0;
    for u in test_set {
        let f = lm1.apply_multiplier(band, u, backend)?;
        let (mut a, mut b) = (f.clone(), f);
        for _ in 0..k {
            a = lm1.apply_matrix(&a)?;
            b = lm2.apply_matrix(&b)?;
        }
        let (na, nb) = (a.lp_norm(2.0), b.lp_norm(2.0));
        up = up.max(na / nb);
        down = down.max(nb / na);
    }
    Ok((up, down))
}

/// What the test family is made of.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyMember {
    Noise,
    Bump,
}

/// Seeded band-limited test functions: localized white noise and
/// dilated, translated Gaussians, all passed through a spectral plateau
/// filter so they live in `[band_lo, band_hi]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFamily {
    pub count: usize,
    pub seed: u64,
    pub band_lo: f64,
    pub band_hi: f64,
    /// Localization width relative to the box half-width.
    pub envelope: f64,
}

impl TestFamily {
    pub fn plateau(&self) -> Result<MultiplierProfile> {
        make_plateau(
            self.band_lo,
            2.0 * self.band_lo,
            0.5 * self.band_hi,
            self.band_hi,
        )
    }

    pub fn member(&self, i: usize) -> FamilyMember {
        if i.is_multiple_of(2) {
            FamilyMember::Noise
        } else {
            FamilyMember::Bump
        }
    }

    pub fn generate(&self, lm: &SubLaplacian, backend: Backend) -> Result<Vec<GridFunction>> {
        let grid: Arc<GridSpec> = lm.grid().clone();
        let filter = self.plateau()?;
        let grp = grid.group().clone();
        let r = grid.half_width();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut out = Vec::with_capacity(self.count);
        for i in 0..self.count {
            let width = self.envelope * r;
            let raw = match self.member(i) {
                FamilyMember::Noise => {
                    let vals: Vec<f64> = (0..grid.len())
                        .map(|lin| {
                            let x = grid.node(lin);
                            let z: f64 = StandardNormal.sample(&mut rng);
                            z * envelope(&grp, &x, width)
                        })
                        .collect();
                    GridFunction::from_real(grid.clone(), &vals)?
                }
                FamilyMember::Bump => {
                    let n = grid.dim();
                    let shift: Vec<f64> = (0..n)
                        .map(|k| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            0.15 * z * r.powi(grp.weights()[k] as i32)
                        })
                        .collect();
                    let u: f64 = rand::Rng::random_range(&mut rng, 0.0..1.0);
                    let scale = width * (0.15 + 0.35 * u);
                    let sinv = grp.inverse(&shift);
                    let mut z = vec![0.0; n];
                    let vals: Vec<f64> = (0..grid.len())
                        .map(|lin| {
                            let x = grid.node(lin);
                            grp.product_into(&sinv, &x, &mut z);
                            envelope(&grp, &z, scale)
                        })
                        .collect();
                    GridFunction::from_real(grid.clone(), &vals)?
                }
            };
            out.push(lm.apply_multiplier(&filter, &raw, backend)?);
        }
        Ok(out)
    }
}

/// `exp(-|x|^{2M}_{M} / (2 w^{2M}))`-type bump; on graded coordinates each
/// coordinate is scaled by `w^{d_i}`.
fn envelope(grp: &crate::group::GroupSpec, x: &[f64], width: f64) -> f64 {
    let q: f64 = x
        .iter()
        .zip(grp.weights())
        .map(|(v, &d)| (v / width.powi(d as i32)).powi(2))
        .sum();
    (-0.5 * q).exp()
}
