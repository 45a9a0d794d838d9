use std::f64::consts::PI;
use std::sync::Arc;

use carnot::grid::{convolve, sample_real};
use carnot::spectral::{
    assemble_sublaplacian, dilation_covariance_check, euclidean_oracle_kernel, BackendUsed,
};
use carnot::wavelets::{make_phi_hat, make_plateau};
use carnot::{
    Backend, BasisChange, BumpSpec, Complex64, Error, GridFunction, GridSpec, GroupSpec,
    MultiplierProfile, SubLaplacian,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid(g: GroupSpec, r: f64, n: usize) -> Arc<GridSpec> {
    Arc::new(GridSpec::uniform(g, r, n).unwrap())
}

fn e1(r: f64, n: usize) -> Arc<GridSpec> {
    grid(GroupSpec::euclidean(1).unwrap(), r, n)
}

fn h1(r: f64, n: usize) -> Arc<GridSpec> {
    grid(GroupSpec::heisenberg(1).unwrap(), r, n)
}

fn lap(g: &Arc<GridSpec>) -> SubLaplacian {
    assemble_sublaplacian(g.clone(), None).unwrap()
}

fn noise(g: &Arc<GridSpec>, seed: u64) -> GridFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<Complex64> = (0..g.len())
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    GridFunction::new(g.clone(), v).unwrap()
}

fn rel(a: &GridFunction, b: &GridFunction) -> f64 {
    a.sub(b).unwrap().lp_norm(2.0) / b.lp_norm(2.0)
}

#[test]
fn matrix_is_symmetric() {
    for g in [
        e1(4.0, 31),
        h1(2.0, 9),
        grid(GroupSpec::heisenberg(2).unwrap(), 1.5, 5),
    ] {
        let m = lap(&g);
        assert!(m.matrix().asymmetry() <= 1e-12 * m.matrix().max_abs());
    }
}

#[test]
fn spectrum_is_nonnegative_and_bounded() {
    let lm = lap(&h1(2.0, 9));
    let eig = lm.eigen().unwrap();
    let top = eig.values.iter().copied().fold(f64::MIN, f64::max);
    assert!(eig.values.iter().all(|&v| v >= -1e-10 * lm.lambda_max()));
    assert!(top <= lm.lambda_max());
}

#[test]
fn low_eigenvalues_match_zero_flux_interval() {
    // Zero-flux boundary on [-R, R]: eigenvalues (πk / 2R)².
    let r = 4.0;
    let lm = lap(&e1(r, 64));
    let mut vals = lm.eigen().unwrap().values.clone();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert!(vals[0].abs() < 1e-10);
    for k in 1..=3 {
        let exact = (PI * k as f64 / (2.0 * r)).powi(2);
        assert!(
            (vals[k] / exact - 1.0).abs() <= 0.02,
            "k = {k}: {} vs {exact}",
            vals[k]
        );
    }
}

#[test]
fn constants_are_annihilated() {
    let g = h1(2.0, 12);
    let lm = lap(&g);
    let one = sample_real(&g, |_| 1.0).unwrap();
    assert!(lm.apply_matrix(&one).unwrap().max_abs() <= 1e-10 * lm.lambda_max());
}

#[test]
fn self_adjointness() {
    for g in [e1(4.0, 41), h1(2.0, 9)] {
        let lm = lap(&g);
        let (f, h) = (noise(&g, 1), noise(&g, 2));
        let a = lm.apply_matrix(&f).unwrap().inner(&h).unwrap();
        let b = f.inner(&lm.apply_matrix(&h).unwrap()).unwrap();
        assert!((a - b).norm() <= 1e-10 * a.norm());
    }
}

#[test]
fn identity_and_linear_multipliers() {
    let g = h1(2.0, 9);
    let lm = lap(&g);
    let f = noise(&g, 3);
    for backend in [Backend::Eig, Backend::Chebyshev(None)] {
        let id = lm
            .apply_multiplier(&MultiplierProfile::constant(1.0), &f, backend)
            .unwrap();
        assert!(rel(&id, &f) <= 1e-10, "{backend:?}");
        let lin = lm
            .apply_multiplier(&MultiplierProfile::power(1), &f, backend)
            .unwrap();
        let direct = lm.apply_matrix(&f).unwrap();
        assert!(rel(&lin, &direct) <= 1e-10, "{backend:?}");
    }
}

#[test]
fn eig_and_chebyshev_agree_on_heat() {
    let g = e1(8.0, 257);
    let lm = lap(&g);
    let f = noise(&g, 4);
    let heat = MultiplierProfile::heat();
    let a = lm.apply_multiplier(&heat, &f, Backend::Eig).unwrap();
    let (b, used) = lm
        .apply_multiplier_traced(&heat, &f, Backend::Chebyshev(None))
        .unwrap();
    assert!(rel(&b, &a) <= 1e-7);
    match used {
        BackendUsed::Chebyshev { degree, error } => assert!(degree >= 8 && error <= 1e-8),
        other => panic!("unexpected backend {other:?}"),
    }
}

#[test]
fn backend_preconditions() {
    let g = e1(4.0, 41);
    let mut lm = lap(&g);
    let f = noise(&g, 5);
    let heat = MultiplierProfile::heat();
    assert!(matches!(
        lm.apply_multiplier(&heat, &f, Backend::Chebyshev(Some(4))),
        Err(Error::ChebyshevDegreeTooLow(_))
    ));
    lm.set_dense_threshold(10);
    assert!(matches!(
        lm.apply_multiplier(&heat, &f, Backend::Eig),
        Err(Error::DenseThresholdExceeded { .. })
    ));
    assert!(matches!(
        lap(&e1(4.0, 40)).kernel_of(&heat, Backend::Eig),
        Err(Error::IdentityNodeMissing)
    ));
    let other = noise(&e1(4.0, 43), 0);
    assert!(lap(&g)
        .apply_multiplier(&heat, &other, Backend::Eig)
        .is_err());
}

#[test]
fn rotations_are_validated() {
    let g = h1(1.0, 5);
    let skew = BasisChange::Rotation(vec![vec![1.0, 0.5], vec![0.0, 1.0]]);
    assert!(matches!(
        assemble_sublaplacian(g.clone(), Some(skew)),
        Err(Error::NonOrthogonalRotation(_))
    ));
    let singular = BasisChange::General(vec![vec![1.0, 2.0], vec![2.0, 4.0]]);
    assert!(matches!(
        assemble_sublaplacian(g, Some(singular)),
        Err(Error::SingularBasis)
    ));
}

#[test]
fn rotation_leaves_the_euclidean_laplacian_unchanged() {
    let g = grid(GroupSpec::euclidean(2).unwrap(), 3.0, 21);
    let base = lap(&g);
    let rot = assemble_sublaplacian(g.clone(), Some(BasisChange::planar_rotation(2, 0.7))).unwrap();
    let f = noise(&g, 6);
    let (a, b) = (
        base.apply_matrix(&f).unwrap(),
        rot.apply_matrix(&f).unwrap(),
    );
    assert!(rel(&b, &a) <= 1e-12);
}

#[test]
fn heat_kernel_matches_analytic() {
    let g = e1(8.0, 513);
    let k = lap(&g)
        .kernel_of(&MultiplierProfile::heat(), Backend::Eig)
        .unwrap()
        .kernel;
    let exact = sample_real(&g, |x| (-x[0] * x[0] / 4.0).exp() / (4.0 * PI).sqrt()).unwrap();
    assert!(k.sub(&exact).unwrap().max_abs() <= 1e-3);
}

#[test]
fn oracle_examples() {
    let g = e1(8.0, 257);
    let k = euclidean_oracle_kernel(&MultiplierProfile::heat(), &g).unwrap();
    let exact = sample_real(&g, |x| (-x[0] * x[0] / 4.0).exp() / (4.0 * PI).sqrt()).unwrap();
    assert!(k.sub(&exact).unwrap().max_abs() <= 1e-6);
    let zero = euclidean_oracle_kernel(&MultiplierProfile::constant(0.0), &g).unwrap();
    assert_eq!(zero.max_abs(), 0.0);
    assert!(matches!(
        euclidean_oracle_kernel(&MultiplierProfile::heat(), &h1(1.0, 5)),
        Err(Error::NonEuclideanGroup)
    ));
}

#[test]
fn spectral_kernel_agrees_with_oracle() {
    let g = e1(8.0, 257);
    let heat = MultiplierProfile::heat();
    let spectral = lap(&g).kernel_of(&heat, Backend::Eig).unwrap().kernel;
    let oracle = euclidean_oracle_kernel(&heat, &g).unwrap();
    assert!(rel(&spectral, &oracle) <= 1e-2);
}

#[test]
fn kernel_convolution_contract() {
    let g = e1(8.0, 257);
    let lm = lap(&g);
    let heat = MultiplierProfile::heat();
    let k = lm.kernel_of(&heat, Backend::Eig).unwrap().kernel;
    let eta = sample_real(&g, |x| (-(x[0] - 0.5).powi(2)).exp() * (2.0 * x[0]).cos()).unwrap();
    let by_conv = convolve(&eta, &k).unwrap();
    let by_op = lm.apply_multiplier(&heat, &eta, Backend::Eig).unwrap();
    // Compare away from a boundary band of 10% of the box.
    let mask = |f: &GridFunction| {
        let vals: Vec<Complex64> = (0..g.len())
            .map(|i| {
                if g.node(i)[0].abs() < 0.9 * 8.0 {
                    f.values()[i]
                } else {
                    0.0.into()
                }
            })
            .collect();
        GridFunction::new(g.clone(), vals).unwrap()
    };
    assert!(rel(&mask(&by_conv), &mask(&by_op)) <= 1e-3);
}

#[test]
fn low_pass_kernel_has_unit_mass() {
    let g = e1(16.0, 257);
    let phi = make_phi_hat(&BumpSpec::default()).unwrap();
    let k = lap(&g).kernel_of(&phi, Backend::Eig).unwrap().kernel;
    assert!((k.integrate().re - 1.0).abs() <= 1e-2);
    // The oracle has no conservation law and needs a box that holds the tails.
    let oracle = euclidean_oracle_kernel(&phi, &e1(32.0, 513)).unwrap();
    assert!((oracle.integrate().re - 1.0).abs() <= 1e-2);
}

#[test]
fn heisenberg_heat_kernel_is_positive_and_symmetric() {
    let g = h1(2.0, 15);
    let heat = MultiplierProfile::heat().rescaled(0.25);
    let k = lap(&g).kernel_of(&heat, Backend::Auto).unwrap().kernel;
    assert!(k.values().iter().all(|v| v.im.abs() < 1e-12));
    let peak = k.max_abs();
    for i in 0..g.len() {
        // Nonnegative up to the Chebyshev profile error.
        if g.in_interior(&g.node(i), 0.3) {
            assert!(k.values()[i].re > -1e-6 * peak);
        }
    }
    // (p, q, t) -> (p, -q, -t) is an automorphism preserving the box.
    let n = g.points()[0];
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            for l in 0..n {
                let a = k.value_at_node(&[i, j, l]);
                let b = k.value_at_node(&[i, n - 1 - j, n - 1 - l]);
                worst = worst.max((a - b).norm());
            }
        }
    }
    assert!(worst <= 1e-10 * peak);
    // Inversion symmetry holds up to the box truncation.
    assert!(k.involution().sub(&k).unwrap().max_abs() <= 1e-3 * peak);
}

#[test]
fn inversion_asymmetry_is_a_boundary_effect() {
    let g = h1(2.0, 15);
    let lm = lap(&g);
    let asym: Vec<f64> = [1.0, 0.5, 0.25]
        .iter()
        .map(|&c| {
            let k = lm
                .kernel_of(&MultiplierProfile::heat().rescaled(c), Backend::Auto)
                .unwrap()
                .kernel;
            k.involution().sub(&k).unwrap().max_abs() / k.max_abs()
        })
        .collect();
    assert!(
        asym[0] > 2.0 * asym[1] && asym[1] > 2.0 * asym[2],
        "{asym:?}"
    );
}

#[test]
fn multiplier_calculus_is_a_homomorphism() {
    let g = h1(2.0, 9);
    let lm = lap(&g);
    let f = noise(&g, 7);
    let p1 = MultiplierProfile::heat().rescaled(0.3);
    let p2 = make_plateau(0.5, 1.0, 4.0, 8.0).unwrap();
    for (backend, tol) in [(Backend::Eig, 1e-12), (Backend::Chebyshev(None), 1e-7)] {
        let composed = lm
            .apply_multiplier(
                &p1,
                &lm.apply_multiplier(&p2, &f, backend).unwrap(),
                backend,
            )
            .unwrap();
        let direct = lm.apply_multiplier(&p1.product(&p2), &f, backend).unwrap();
        assert!(rel(&composed, &direct) <= tol, "{backend:?}");
    }
}

#[test]
fn disjoint_supports_annihilate() {
    let g = e1(8.0, 129);
    let lm = lap(&g);
    let f = noise(&g, 8);
    let a = make_plateau(0.1, 0.2, 0.3, 0.4).unwrap();
    let b = make_plateau(0.5, 0.6, 0.8, 1.0).unwrap();
    for backend in [Backend::Eig, Backend::Chebyshev(None)] {
        let out = lm
            .apply_multiplier(&a, &lm.apply_multiplier(&b, &f, backend).unwrap(), backend)
            .unwrap();
        assert!(out.lp_norm(2.0) <= 1e-7 * f.lp_norm(2.0), "{backend:?}");
    }
}

#[test]
fn dilation_covariance() {
    let g = e1(16.0, 513);
    let lm = lap(&g);
    let heat = MultiplierProfile::heat();
    assert_eq!(
        dilation_covariance_check(&lm, &lm, &heat, 0, Backend::Eig).unwrap(),
        0.0
    );
    assert!(dilation_covariance_check(&lm, &lm, &heat, 1, Backend::Eig).unwrap() <= 1e-2);
}

#[test]
fn profile_algebra() {
    let heat = MultiplierProfile::heat();
    assert!((heat.dyadic(1).eval(4.0) - (-1.0f64).exp()).abs() < 1e-15);
    assert!((heat.square().eval(0.5) - (-1.0f64).exp()).abs() < 1e-15);
    assert_eq!(heat.hash_hex(), MultiplierProfile::heat().hash_hex());
    assert_ne!(heat.hash_hex(), heat.dyadic(1).hash_hex());
}
