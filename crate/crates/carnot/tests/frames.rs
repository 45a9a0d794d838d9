use std::sync::{Arc, OnceLock};

use carnot::besov::besov_norm;
use carnot::frames::{
    discrete_equiv_report, frame_report, make_lattice, molecule_decay_check, seq_norm,
    tightness_vs_density, ScaleCoefficients,
};
use carnot::spectral::assemble_sublaplacian;
use carnot::wavelets::{build_lp_wavelet, make_phi_hat, make_psi_hat, BuildOptions};
use carnot::{
    Backend, BesovParams, BumpSpec, CoefficientArray, Complex64, Error, Frame, GridFunction,
    GridSpec, GroupSpec, LPWavelet, TestFamily,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const J: (i32, i32) = (-2, 2);
const ALPHA: f64 = 0.1;
const L2: BesovParams = BesovParams {
    p: 2.0,
    q: 2.0,
    s: 0.0,
};

fn e1_wavelet() -> Arc<LPWavelet> {
    static W: OnceLock<Arc<LPWavelet>> = OnceLock::new();
    W.get_or_init(|| {
        let g = Arc::new(GridSpec::uniform(GroupSpec::euclidean(1).unwrap(), 16.0, 257).unwrap());
        let lm = Arc::new(assemble_sublaplacian(g, None).unwrap());
        let psi = make_psi_hat(&make_phi_hat(&BumpSpec::default()).unwrap()).unwrap();
        let opts = BuildOptions {
            backend: Backend::Eig,
            ..Default::default()
        };
        Arc::new(build_lp_wavelet(lm, psi, J, &opts).unwrap())
    })
    .clone()
}

fn frame_at(alpha: f64) -> Frame {
    let w = e1_wavelet();
    let grid = w.laplacian().grid().clone();
    let set = make_lattice(grid.group(), alpha, &grid).unwrap();
    Frame::new(w, set, J).unwrap().with_complement(true)
}

fn frame() -> &'static Frame {
    static F: OnceLock<Frame> = OnceLock::new();
    F.get_or_init(|| frame_at(ALPHA))
}

fn family(count: usize) -> Vec<GridFunction> {
    let w = e1_wavelet();
    TestFamily {
        count,
        seed: 11,
        band_lo: 0.25,
        band_hi: 4.0,
        envelope: 0.25,
    }
    .generate(w.laplacian(), Backend::Eig)
    .unwrap()
}

fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

#[test]
fn lattice_unit_density_on_small_box() {
    let g = GroupSpec::euclidean(1).unwrap();
    let grid = GridSpec::uniform(g.clone(), 2.5, 11).unwrap();
    let set = make_lattice(&g, 1.0, &grid).unwrap();
    let (pts, _) = set.points_at_scale(0, &grid);
    let mut xs: Vec<f64> = pts.iter().map(|(_, x)| x[0]).collect();
    xs.sort_by(f64::total_cmp);
    assert_eq!(xs, vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
    assert_eq!(set.tile(), &[1.0]);
    assert_eq!(set.tile_volume(), 1.0);
    assert!(set.in_tile(&[0], &[0.0]));
    assert!(set.in_tile(&[0], &[0.999]));
    assert!(!set.in_tile(&[0], &[1.0]));
}

#[test]
fn tile_volume_is_alpha_to_the_homogeneous_dimension() {
    let g = GroupSpec::heisenberg(1).unwrap();
    let grid = GridSpec::uniform(g.clone(), 2.0, 9).unwrap();
    let set = make_lattice(&g, 0.5, &grid).unwrap();
    assert_eq!(set.tile_volume(), 1.0 / 16.0);
    assert_eq!(set.tile(), &[0.5, 0.5, 0.25]);
    assert_eq!(set.tile_volume_at(1), 1.0 / 256.0);
    assert!((set.tile_radius() - g.quasi_norm(&[0.5, 0.5, 0.25])).abs() < 1e-15);
}

#[test]
fn heisenberg_lattice_is_closed_under_the_group_law() {
    let g = GroupSpec::heisenberg(1).unwrap();
    let grid = GridSpec::uniform(g.clone(), 2.0, 9).unwrap();
    let alpha = 0.5;
    let set = make_lattice(&g, alpha, &grid).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..30 {
        let a: Vec<i64> = (0..3).map(|_| rng.random_range(-4..=4)).collect();
        let b: Vec<i64> = (0..3).map(|_| rng.random_range(-4..=4)).collect();
        let prod = g.product(&set.point(&a), &set.point(&b)).unwrap();
        let y = g.dilate(1.0 / alpha, &prod).unwrap();
        let m = y[2] - 0.5 * y[0] * y[1];
        for v in [y[0], y[1], m] {
            assert!((v - v.round()).abs() < 1e-9, "{y:?} is not a lattice point");
        }
        let idx = vec![y[0].round() as i64, y[1].round() as i64, m.round() as i64];
        let back = set.point(&idx);
        assert!(back.iter().zip(&prod).all(|(u, v)| (u - v).abs() < 1e-9));
    }
}

#[test]
fn lattices_tile_without_overlap() {
    for g in [
        GroupSpec::euclidean(2).unwrap(),
        GroupSpec::heisenberg(1).unwrap(),
    ] {
        let grid = GridSpec::uniform(g.clone(), 2.0, 9).unwrap();
        for alpha in [1.0, 0.3] {
            let set = make_lattice(&g, alpha, &grid).unwrap();
            let r = set.check_tiling(&grid, 2000, 5).unwrap();
            assert_eq!(r.overlaps, 0);
            assert_eq!(r.covered, r.draws);
        }
    }
}

#[test]
fn locate_returns_the_tile_containing_the_point() {
    let g = GroupSpec::heisenberg(1).unwrap();
    let grid = GridSpec::uniform(g.clone(), 2.0, 9).unwrap();
    let set = make_lattice(&g, 0.7, &grid).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        assert!(set.in_tile(&set.locate(&x), &x));
    }
}

#[test]
fn lattice_rejects_bad_density_and_mismatched_grid() {
    let g = GroupSpec::euclidean(1).unwrap();
    let grid = GridSpec::uniform(g.clone(), 2.0, 9).unwrap();
    assert!(matches!(
        make_lattice(&g, 0.0, &grid),
        Err(Error::InvalidParameter(_))
    ));
    assert!(matches!(
        make_lattice(&g, f64::NAN, &grid),
        Err(Error::InvalidParameter(_))
    ));
    let h = GroupSpec::heisenberg(1).unwrap();
    assert!(matches!(
        make_lattice(&h, 1.0, &grid),
        Err(Error::GridMismatch)
    ));
}

fn single_entry(j: i32, q_dim: u32, values: Vec<Complex64>) -> CoefficientArray {
    let mut scales = std::collections::BTreeMap::new();
    scales.insert(
        j,
        ScaleCoefficients {
            indices: (0..values.len() as i64).map(|i| vec![i]).collect(),
            values,
            dropped: 0,
        },
    );
    CoefficientArray {
        alpha: 1.0,
        tile: vec![1.0],
        homogeneous_dim: q_dim,
        j_range: (j, j),
        scales,
    }
}

#[test]
fn seq_norm_examples() {
    let one = Complex64::new(1.0, 0.0);
    for p in [1.0, 2.0, 3.5, f64::INFINITY] {
        for s in [-1.0, 0.0, 0.5] {
            let params = BesovParams { p, q: 1.5, s };
            assert!((seq_norm(&single_entry(0, 4, vec![one]), &params) - 1.0).abs() < 1e-15);
        }
    }
    assert!((seq_norm(&single_entry(1, 4, vec![one]), &L2) - 0.25).abs() < 1e-15);
    let two = seq_norm(&single_entry(1, 4, vec![one, one]), &L2);
    assert!((two - 0.25 * 2f64.sqrt()).abs() < 1e-15);
}

#[test]
fn analysis_of_zero_is_zero() {
    let f = frame();
    let c = f
        .analysis(&GridFunction::zeros(
            e1_wavelet().laplacian().grid().clone(),
        ))
        .unwrap();
    assert!(!c.is_empty());
    assert!(c
        .scales
        .values()
        .all(|s| s.values.iter().all(|v| v.norm() == 0.0)));
    assert_eq!(
        c.scales.keys().copied().collect::<Vec<_>>(),
        vec![-2, -1, 0, 1, 2]
    );
}

#[test]
fn analysis_matches_direct_quadrature() {
    let g = Arc::new(GridSpec::uniform(GroupSpec::euclidean(1).unwrap(), 64.0, 1025).unwrap());
    let lm = Arc::new(assemble_sublaplacian(g, None).unwrap());
    let psi = make_psi_hat(&make_phi_hat(&BumpSpec::default()).unwrap()).unwrap();
    let opts = BuildOptions {
        backend: Backend::Eig,
        ..Default::default()
    };
    let w = Arc::new(build_lp_wavelet(lm.clone(), psi, J, &opts).unwrap());
    let set = make_lattice(lm.grid().group(), ALPHA, lm.grid()).unwrap();
    let f = Frame::new(w, set, J).unwrap();
    let u = &TestFamily {
        count: 1,
        seed: 11,
        band_lo: 0.25,
        band_hi: 4.0,
        envelope: 0.25,
    }
    .generate(&lm, Backend::Eig)
    .unwrap()[0];
    let c = f.analysis(u).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (mut diff, mut norm) = (0.0, 0.0);
    let mut checked = 0;
    while checked < 20 {
        let j = rng.random_range(J.0..=J.1);
        let sc = &c.scales[&j];
        let i = rng.random_range(0..sc.values.len());
        let x = f.sampler(j).unwrap().points[i][0];
        if x.abs() > 8.0 {
            continue;
        }
        let direct = f.inner_product_quadrature(u, j, i).unwrap();
        diff += (sc.values[i] - direct).norm_sqr();
        norm += direct.norm_sqr();
        checked += 1;
    }
    let r = (diff / norm).sqrt();
    assert!(r <= 1e-3, "relative difference {r:e}");
}

#[test]
fn analysis_localizes_a_bump() {
    let f = frame();
    let w = e1_wavelet();
    let grid = w.laplacian().grid().clone();
    let u = family(1)[0].left_translate(&[5.0]);
    let c = f.analysis(&u).unwrap();
    let (j, i, _) = c.argmax().unwrap();
    let x = f.sampler(j).unwrap().points[i][0];
    assert!((x - 5.0).abs() < 2.0, "argmax at {x}");
    assert!(grid.contains(&[x]));
}

#[test]
fn single_coefficient_synthesizes_one_atom() {
    let f = frame();
    let w = e1_wavelet();
    for j in [-1, 0, 2] {
        let sampler = f.sampler(j).unwrap();
        let i = sampler
            .points
            .iter()
            .position(|x| x[0].abs() < 1e-12)
            .unwrap();
        let atom = f.atom(j, i).unwrap();
        let expected = w.kernel(j).unwrap().kernel.clone();
        let err = atom.sub(&expected).unwrap().lp_norm(2.0) / expected.lp_norm(2.0);
        assert!(err <= 1e-6, "j={j}: {err:e}");
        assert!((atom.lp_norm(2.0) / expected.lp_norm(2.0) - 1.0).abs() <= 1e-6);
    }
}

#[test]
fn synthesis_is_the_adjoint_of_analysis() {
    let f = frame();
    let u = &family(2)[1];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut c = f.zero_coefficients();
    for sc in c.scales.values_mut() {
        sc.values.iter_mut().for_each(|v| {
            *v = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
    }
    let lhs = u.inner(&f.synthesis(&c).unwrap()).unwrap();
    let a = f.analysis(u).unwrap();
    let mut rhs = Complex64::new(0.0, 0.0);
    for (j, sc) in &a.scales {
        for (x, y) in sc.values.iter().zip(&c.scales[j].values) {
            rhs += x * y.conj();
        }
    }
    assert!(rel(lhs, rhs) < 1e-10, "{lhs} vs {rhs}");
}

#[test]
fn synthesis_rejects_foreign_arrays() {
    let f = frame();
    let mut c = f.zero_coefficients();
    c.scales.get_mut(&0).unwrap().values.pop();
    assert!(matches!(
        f.synthesis(&c),
        Err(Error::DimensionMismatch { .. })
    ));
    assert!(matches!(f.atom(5, 0), Err(Error::ScaleOutOfRange { .. })));
}

#[test]
fn frame_operator_is_self_adjoint_and_positive() {
    let f = frame();
    let us = family(6);
    let zero = GridFunction::zeros(us[0].grid().clone());
    assert_eq!(f.frame_operator(&zero).unwrap().max_abs(), 0.0);
    for pair in us.chunks(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let sab = f.frame_operator(a).unwrap().inner(b).unwrap();
        let asb = a.inner(&f.frame_operator(b).unwrap()).unwrap();
        assert!(rel(sab, asb) <= 1e-6);
    }
    for u in &us {
        let q = f.frame_operator(u).unwrap().inner(u).unwrap();
        let n2 = u.lp_norm(2.0).powi(2);
        assert!(q.re >= -1e-8 * n2 && q.im.abs() <= 1e-8 * n2);
    }
}

#[test]
fn well_separated_atoms_have_a_diagonally_dominant_gram() {
    let f = frame();
    let sampler = f.sampler(0).unwrap();
    let picks: Vec<usize> = (0..sampler.len())
        .filter(|&i| {
            let x = sampler.points[i][0];
            x.abs() <= 8.0 && ((x / 4.0).round() * 4.0 - x).abs() < 1e-9
        })
        .collect();
    assert!(picks.len() >= 4);
    let atoms: Vec<GridFunction> = picks.iter().map(|&i| f.atom(0, i).unwrap()).collect();
    for (a, u) in atoms.iter().enumerate() {
        let diag = u.inner(u).unwrap().norm();
        let off: f64 = atoms
            .iter()
            .enumerate()
            .filter(|(b, _)| *b != a)
            .map(|(_, v)| u.inner(v).unwrap().norm())
            .sum();
        assert!(off < diag, "row {a}: {off} vs {diag}");
    }
}

#[test]
fn deviation_is_contractive_at_the_reference_density() {
    let f = frame();
    let rho = f.measured_rho(&family(4)).unwrap();
    assert!(rho < 0.2, "rho {rho}");
    let sparse = frame_at(1.5);
    assert!(sparse.measured_rho(&family(4)).unwrap() > rho);
}

#[test]
fn neumann_converges_geometrically_and_reconstructs() {
    let f = frame();
    let us = family(4);
    let probes = f.krylov_probes(&us, 2).unwrap();
    let (report, dual) = frame_report(f, &us[0], &probes, 1e-6, 60).unwrap();
    let rho = report.deviation.rho;
    assert!(rho < 1.0);
    assert!(report.residual_history.last().unwrap() <= &1e-6);
    assert!(report.residual_history.windows(2).all(|w| w[1] < w[0]));
    assert!(
        report.ratio_band_fraction >= 0.5,
        "{:?} vs rho {rho}",
        report.residual_history
    );
    assert!(
        report.reconstruction_residual <= 5e-2,
        "{}",
        report.reconstruction_residual
    );
    assert_eq!(dual.len(), f.zero_coefficients().len());
}

#[test]
fn tight_configuration_converges_in_few_steps() {
    let f = frame_at(0.05);
    let u = &family(1)[0];
    let rho = f
        .measured_rho(&f.krylov_probes(std::slice::from_ref(u), 2).unwrap())
        .unwrap();
    let r = f.neumann_invert(u, rho, 1e-3, 10).unwrap();
    assert!(r.iterations <= 3, "{} iterations, rho {rho}", r.iterations);
}

#[test]
fn neumann_refuses_non_contractive_frames() {
    let f = frame();
    let u = &family(1)[0];
    assert!(matches!(
        f.neumann_invert(u, 1.0, 1e-6, 10),
        Err(Error::NotContractive { .. })
    ));
    assert!(matches!(
        f.neumann_invert(u, 0.5, 1e-30, 2),
        Err(Error::MaxIterExceeded { .. })
    ));
}

#[test]
fn dual_of_zero_is_zero() {
    let f = frame();
    let zero = GridFunction::zeros(e1_wavelet().laplacian().grid().clone());
    let (c, r) = f.dual_coefficients(&zero, 0.1, 1e-6, 10).unwrap();
    assert_eq!(r.iterations, 0);
    assert!(c
        .scales
        .values()
        .all(|s| s.values.iter().all(|v| v.norm() == 0.0)));
}

#[test]
fn dual_sequence_norm_is_equivalent_to_the_besov_norm() {
    let f = frame();
    let w = e1_wavelet();
    let us = family(4);
    let report = discrete_equiv_report(&us, f, &L2, f.osc_at_tile()).unwrap();
    let mut ratios = Vec::new();
    for u in &us {
        let (dual, _) = f.dual_coefficients(u, 0.2, 1e-6, 60).unwrap();
        let (b, _) = besov_norm(u, &w, &L2, J).unwrap();
        ratios.push(seq_norm(&dual, &L2) / b);
    }
    let spread = ratios.iter().copied().fold(0.0, f64::max)
        / ratios.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(
        spread <= report.stats.spread / (1.0 - 0.2) + 1e-9,
        "{spread} vs {}",
        report.stats.spread
    );
}

#[test]
fn sampled_norms_sit_in_the_oscillation_band() {
    let f = frame();
    let eps = f.osc_at_tile();
    assert!(eps < 1.0, "osc {eps}");
    let us = family(6);
    let report = discrete_equiv_report(&us, f, &L2, eps).unwrap();
    assert!(report.inside_fraction >= 0.9, "{}", report.inside_fraction);
    assert!(report.stats.spread >= 1.0 && report.stats.spread.is_finite());
    let single = discrete_equiv_report(&us[..1], f, &L2, eps).unwrap();
    assert!((single.stats.spread - 1.0).abs() < 1e-15);
    assert!(matches!(
        discrete_equiv_report(&us, f, &L2, 1.0),
        Err(Error::DensityPrecheckFailed { .. })
    ));
}

#[test]
fn sampling_constants_are_scale_covariant() {
    let f = frame();
    let us = family(6);
    let mut lo = std::collections::BTreeMap::new();
    let mut hi = std::collections::BTreeMap::new();
    for u in &us {
        for (j, r) in f.sampling_ratios(u, 2.0).unwrap() {
            let l = lo.entry(j).or_insert(f64::INFINITY);
            *l = f64::min(*l, r);
            let h = hi.entry(j).or_insert(0.0f64);
            *h = h.max(r);
        }
    }
    for j in J.0..=J.1 {
        assert!((lo[&j] / lo[&0] - 1.0).abs() <= 0.1);
        assert!((hi[&j] / hi[&0] - 1.0).abs() <= 0.1);
    }
}

#[test]
fn density_sweep_tightens() {
    let w = e1_wavelet();
    let us = family(4);
    let alphas = [0.8, 0.4, 0.2];
    let rows = tightness_vs_density(&w, &alphas, &us, J, &L2, true).unwrap();
    for pair in rows.windows(2) {
        assert_eq!(pair[1].tile_volume, pair[0].tile_volume / 2.0);
        assert!(pair[1].rho < pair[0].rho);
        assert!(pair[1].osc_l1 <= 1.1 * pair[0].osc_l1);
        assert!(pair[1].spread <= 1.1 * pair[0].spread);
    }
}

#[test]
fn molecules_decouple_across_distant_scales() {
    let f = frame();
    let sampler = f.sampler(0).unwrap();
    let e = sampler
        .points
        .iter()
        .position(|x| x[0].abs() < 1e-12)
        .unwrap();
    for l in [-2, 2] {
        let m = molecule_decay_check(f, 0, l, e).unwrap();
        assert!(m.weighted_sup <= 1e-6, "l={l}: {:e}", m.weighted_sup);
    }
    let same = molecule_decay_check(f, 0, 0, e).unwrap();
    assert!(same.peak[0].abs() < 0.2);
    assert!(same.theta_fit.is_infinite());
    let near = molecule_decay_check(f, 0, 1, e).unwrap();
    assert!(near.theta_fit.is_finite());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn analysis_is_linear(a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let f = frame();
        let us = family(2);
        let mix = us[0].scale(a).add(&us[1].scale(b)).unwrap();
        let lhs = f.analysis(&mix).unwrap();
        let (c0, c1) = (f.analysis(&us[0]).unwrap(), f.analysis(&us[1]).unwrap());
        let scale = c0.argmax().unwrap().2 + c1.argmax().unwrap().2;
        for (j, sc) in &lhs.scales {
            for (i, v) in sc.values.iter().enumerate() {
                let expect = c0.scales[j].values[i] * a + c1.scales[j].values[i] * b;
                prop_assert!((v - expect).norm() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn lattice_labels_round_trip(k in -20i64..20, l in -20i64..20, m in -20i64..20, alpha in 0.2f64..1.5) {
        let g = GroupSpec::heisenberg(1).unwrap();
        let grid = GridSpec::uniform(g.clone(), 2.0, 9).unwrap();
        let set = make_lattice(&g, alpha, &grid).unwrap();
        let idx = [k, l, m];
        let p = set.point(&idx);
        let half: Vec<f64> = set.tile().iter().map(|t| 0.5 * t).collect();
        let shifted = g.product(&p, &half).unwrap();
        prop_assert_eq!(set.locate(&shifted), idx.to_vec());
    }
}
