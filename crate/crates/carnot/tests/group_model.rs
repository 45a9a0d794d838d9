use carnot::group::{apply_field, make_group, Bracket, GroupDoc, Poly};
use carnot::{Error, GroupDescriptor, GroupSpec};
use proptest::prelude::*;

fn engel() -> GroupSpec {
    GroupSpec::from_brackets(
        vec![1, 1, 2, 3],
        &[
            Bracket {
                i: 0,
                j: 1,
                k: 2,
                c: 1.0,
            },
            Bracket {
                i: 0,
                j: 2,
                k: 3,
                c: 1.0,
            },
        ],
    )
    .unwrap()
}

fn groups() -> Vec<GroupSpec> {
    vec![
        GroupSpec::euclidean(2).unwrap(),
        GroupSpec::heisenberg(1).unwrap(),
        GroupSpec::heisenberg(2).unwrap(),
        engel(),
    ]
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter()
        .zip(b)
        .all(|(x, y)| (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs())))
}

#[test]
fn euclidean3_dimensions() {
    let g = make_group(&GroupDescriptor::Preset("euclidean(3)".into())).unwrap();
    assert_eq!(g.homogeneous_dim(), 3);
    assert_eq!(g.weights(), &[1, 1, 1]);
    assert!(g.is_abelian());
}

#[test]
fn heisenberg_q_is_2n_plus_2() {
    for n in 1..=3 {
        let g = GroupSpec::heisenberg(n).unwrap();
        assert_eq!(g.homogeneous_dim() as usize, 2 * n + 2);
        assert_eq!(g.l(), 2 * n);
        assert_eq!(g.step(), 2);
    }
}

#[test]
fn asymmetric_bracket_is_rejected() {
    // [Y1,Y2] = Y3 together with [Y2,Y1] = Y3 (should be -Y3).
    let doc = GroupDoc {
        name: None,
        n: 3,
        weights: vec![1, 1, 2],
        brackets: vec![[1.0, 2.0, 3.0, 1.0], [2.0, 1.0, 3.0, 1.0]],
    };
    let err = GroupSpec::from_doc(&doc).unwrap_err();
    assert!(matches!(
        err,
        Error::AntisymmetryViolation { .. }
            | Error::GradingViolation { .. }
            | Error::JacobiViolation { .. }
    ));
}

#[test]
fn misgraded_bracket_is_rejected() {
    let doc = GroupDoc {
        name: None,
        n: 3,
        weights: vec![1, 1, 2],
        brackets: vec![[1.0, 2.0, 1.0, 1.0]],
    };
    assert!(matches!(
        GroupSpec::from_doc(&doc),
        Err(Error::GradingViolation { .. })
    ));
}

#[test]
fn jacobi_violation_is_detected() {
    // Weights (1,1,1,2,3): [Y1,Y2]=Y4, [Y4,Y3]=Y5 alone breaks Jacobi for (Y1,Y2,Y3)
    // once [Y2,Y3] and [Y3,Y1] are zero.
    let doc = GroupDoc {
        name: None,
        n: 5,
        weights: vec![1, 1, 1, 2, 3],
        brackets: vec![[1.0, 2.0, 4.0, 1.0], [4.0, 3.0, 5.0, 1.0]],
    };
    assert!(matches!(
        GroupSpec::from_doc(&doc),
        Err(Error::JacobiViolation { .. })
    ));
}

#[test]
fn doc_round_trip() {
    for g in groups() {
        let back = GroupSpec::from_doc(&g.to_doc()).unwrap();
        assert_eq!(back, g);
    }
    let json = r#"{"n":3,"weights":[1,1,2],"brackets":[[1,2,3,1]]}"#;
    let desc: GroupDescriptor = serde_json::from_str(json).unwrap();
    assert_eq!(
        make_group(&desc).unwrap(),
        GroupSpec::heisenberg(1).unwrap()
    );
}

#[test]
fn product_identity_and_inverse() {
    for g in groups() {
        let x: Vec<f64> = (0..g.dim()).map(|k| 0.3 + 0.4 * k as f64).collect();
        assert_eq!(g.product(&x, &g.identity()).unwrap(), x);
        let z = g.product(&x, &g.inverse(&x)).unwrap();
        assert!(z.iter().all(|v| v.abs() < 1e-15));
    }
    let h = GroupSpec::heisenberg(1).unwrap();
    assert!(matches!(
        h.product(&[1.0, 0.0], &[0.0; 3]),
        Err(Error::DimensionMismatch { .. })
    ));
}

#[test]
fn dilation_examples() {
    let h = GroupSpec::heisenberg(1).unwrap();
    assert_eq!(
        h.dilate(2.0, &[1.0, 1.0, 1.0]).unwrap(),
        vec![2.0, 2.0, 4.0]
    );
    let x = [0.7, -1.3, 2.9];
    assert_eq!(h.dilate(1.0, &x).unwrap(), x.to_vec());
    let back = h.dilate(3.0, &h.dilate(1.0 / 3.0, &x).unwrap()).unwrap();
    assert!(close(&back, &x, 1e-15));
}

#[test]
fn quasi_norm_examples() {
    let h = GroupSpec::heisenberg(1).unwrap();
    let x = [0.4, -1.1, 0.8];
    let dx = h.dilate(2.0, &x).unwrap();
    assert!((h.quasi_norm(&dx) / h.quasi_norm(&x) - 2.0).abs() < 1e-14);
    assert_eq!(h.quasi_norm(&h.inverse(&x)), h.quasi_norm(&x));
}

#[test]
fn left_fields_at_identity_and_on_euclidean() {
    for g in groups() {
        for i in 0..g.dim() {
            let c = g.left_field_coeffs(i, &g.identity()).unwrap();
            let mut e = vec![0.0; g.dim()];
            e[i] = 1.0;
            assert_eq!(c, e);
        }
    }
    let e = GroupSpec::euclidean(3).unwrap();
    assert_eq!(
        e.left_field_coeffs(1, &[5.0, -2.0, 1.0]).unwrap(),
        vec![0.0, 1.0, 0.0]
    );
    let h = GroupSpec::heisenberg(1).unwrap();
    assert_eq!(
        h.left_field_coeffs(0, &[0.2, 0.6, 3.0]).unwrap(),
        vec![1.0, 0.0, -0.3]
    );
    assert!(matches!(
        h.left_field_coeffs(3, &[0.0; 3]),
        Err(Error::IndexOutOfRange { .. })
    ));
}

#[test]
fn left_fields_match_numerical_derivative_of_product() {
    for g in groups() {
        let x: Vec<f64> = (0..g.dim()).map(|k| 0.9 - 0.35 * k as f64).collect();
        for i in 0..g.dim() {
            let h = 1e-6;
            let mut e = vec![0.0; g.dim()];
            e[i] = h;
            let plus = g.product(&x, &e).unwrap();
            e[i] = -h;
            let minus = g.product(&x, &e).unwrap();
            let fd: Vec<f64> = plus
                .iter()
                .zip(&minus)
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect();
            assert!(close(&g.left_field_coeffs(i, &x).unwrap(), &fd, 1e-8));
        }
    }
}

/// Commutators of the symbolic fields reproduce the structure constants on
/// every monomial of homogeneous degree at most 4.
#[test]
fn fields_realize_bracket_table() {
    for g in groups() {
        let n = g.dim();
        let fields: Vec<Vec<Poly>> = (0..n).map(|i| g.left_field_polys(i).unwrap()).collect();
        let monomials: Vec<Poly> = g
            .poly_basis(4)
            .into_iter()
            .map(|mi| Poly::monomial(n, mi.exponents, 1.0))
            .collect();
        for i in 0..n {
            for j in 0..n {
                for f in &monomials {
                    let lhs = apply_field(&fields[i], &apply_field(&fields[j], f))
                        .sub(&apply_field(&fields[j], &apply_field(&fields[i], f)));
                    let mut rhs = Poly::zero(n);
                    for k in 0..n {
                        let c = g.structure_constant(i, j, k);
                        if c != 0.0 {
                            rhs = rhs.add(&apply_field(&fields[k], f).scale(c));
                        }
                    }
                    assert!(
                        lhs.sub(&rhs).max_abs_coeff() < 1e-12,
                        "[Y{i},Y{j}] on {f:?}"
                    );
                }
            }
        }
    }
}

#[test]
fn poly_basis_examples() {
    let h = GroupSpec::heisenberg(1).unwrap();
    let degree =
        |k| -> Vec<Vec<u32>> { h.poly_basis(k).into_iter().map(|m| m.exponents).collect() };
    assert_eq!(degree(0), vec![vec![0, 0, 0]]);
    assert_eq!(degree(1), vec![vec![0, 0, 0], vec![0, 1, 0], vec![1, 0, 0]]);
    // 1, p, q, p², pq, q², t
    let two = degree(2);
    assert_eq!(two.len(), 7);
    assert!(two.contains(&vec![0, 0, 1]));
    for mi in h.poly_basis(5) {
        assert!(mi.degree >= mi.exponents.iter().sum::<u32>());
    }
}

#[test]
fn quasi_triangle_constant_is_stable_across_seeds() {
    let h = GroupSpec::heisenberg(1).unwrap();
    let c: Vec<f64> = (0..3)
        .map(|s| h.quasi_triangle_constant(100_000, s))
        .collect();
    for v in &c {
        assert!(v.is_finite() && *v >= 0.5);
    }
    let (lo, hi) = c
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    assert!(hi / lo < 1.1, "{c:?}");
    let e = GroupSpec::euclidean(2).unwrap();
    assert!(e.quasi_triangle_constant(10_000, 0) <= 1.0 + 1e-12);
}

fn point(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, n)
}

proptest! {
    #[test]
    fn associativity(x in point(4), y in point(4), z in point(4)) {
        for g in [GroupSpec::heisenberg(1).unwrap(), engel()] {
            let n = g.dim();
            let (x, y, z) = (&x[..n], &y[..n], &z[..n]);
            let a = g.product(&g.product(x, y).unwrap(), z).unwrap();
            let b = g.product(x, &g.product(y, z).unwrap()).unwrap();
            prop_assert!(close(&a, &b, 1e-12), "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn dilation_is_an_automorphism(x in point(4), y in point(4), a in 0.1..5.0f64) {
        for g in [GroupSpec::heisenberg(1).unwrap(), engel()] {
            let n = g.dim();
            let (x, y) = (&x[..n], &y[..n]);
            let lhs = g.dilate(a, &g.product(x, y).unwrap()).unwrap();
            let rhs = g.product(&g.dilate(a, x).unwrap(), &g.dilate(a, y).unwrap()).unwrap();
            prop_assert!(close(&lhs, &rhs, 1e-12));
        }
    }

    #[test]
    fn quasi_norm_is_homogeneous(x in point(4), a in 0.05..20.0f64) {
        for g in [GroupSpec::heisenberg(1).unwrap(), engel(), GroupSpec::euclidean(4).unwrap()] {
            let x = &x[..g.dim()];
            let lhs = g.quasi_norm(&g.dilate(a, x).unwrap());
            prop_assert!((lhs - a * g.quasi_norm(x)).abs() <= 1e-12 * (1.0 + lhs));
            prop_assert_eq!(g.quasi_norm(&g.inverse(x)), g.quasi_norm(x));
        }
    }

    #[test]
    fn heisenberg_step_two_formula(x in point(3), y in point(3)) {
        let g = GroupSpec::heisenberg(1).unwrap();
        let xy = g.product(&x, &y).unwrap();
        let t = x[2] + y[2] + 0.5 * (x[0] * y[1] - x[1] * y[0]);
        prop_assert!((xy[0] - x[0] - y[0]).abs() < 1e-14);
        prop_assert!((xy[2] - t).abs() < 1e-12);
    }
}
