//! Property tests for the exterior algebra and vector-field layers:
//! graded-commutativity, the complex property d^2 = 0, derivation rules,
//! the Jacobi identity, and compatibility with pullback. Identities are
//! checked by evaluation on random points and vectors, where both sides
//! agree up to floating-point roundoff.

use corank2::catalog::band_to_line_map;
use corank2::exterior::{Form, VectorField};
use corank2::scalar::{Coordinate, Point, ScalarExpr};
use proptest::prelude::*;

/// Polynomial-flavored coefficients: small trees without transcendental
/// leaves keep magnitudes bounded without losing genuine x-dependence.
fn coeff_strategy() -> impl Strategy<Value = ScalarExpr> {
    let leaf = prop_oneof![
        (-1.5f64..1.5).prop_map(ScalarExpr::constant),
        (0usize..6).prop_map(|i| ScalarExpr::coord(Coordinate::from_index(i))),
    ];
    leaf.prop_recursive(2, 12, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a + b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a * b),
            inner.prop_map(|a| a.sin()),
        ]
    })
}

fn form_strategy(degree: u8) -> impl Strategy<Value = Form> {
    let masks: Vec<u8> = (0u8..64)
        .filter(|m| m.count_ones() == u32::from(degree))
        .collect();
    proptest::collection::vec(coeff_strategy(), masks.len()).prop_map(move |coeffs| {
        Form::from_terms(
            degree,
            masks.iter().copied().zip(coeffs),
        )
    })
}

fn field_strategy() -> impl Strategy<Value = VectorField> {
    proptest::collection::vec(coeff_strategy(), 6).prop_map(|comps| {
        let mut f = VectorField::zero();
        for (i, c) in comps.into_iter().enumerate() {
            f = f.add(&VectorField::basis(Coordinate::from_index(i)).scale(c));
        }
        f
    })
}

fn point_strategy() -> impl Strategy<Value = Point> {
    proptest::array::uniform6(-0.9f64..0.9).prop_map(Point)
}

fn vector_strategy() -> impl Strategy<Value = [f64; 6]> {
    proptest::array::uniform6(-1.0f64..1.0)
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    /// alpha ^ beta = (-1)^{pq} beta ^ alpha for degrees 1 and 2.
    #[test]
    fn wedge_is_graded_commutative(
        (p_deg, q_deg, alpha, beta) in (1u8..3, 1u8..3).prop_flat_map(|(pd, qd)| {
            (Just(pd), Just(qd), form_strategy(pd), form_strategy(qd))
        }),
        p in point_strategy(),
        vectors in proptest::collection::vec(vector_strategy(), 4),
    ) {
        let total = usize::from(p_deg + q_deg);
        let args = &vectors[..total];
        let lhs = alpha.wedge(&beta).eval_on_real_vectors(&p, args).unwrap();
        let sign = if (p_deg * q_deg) % 2 == 1 { -1.0 } else { 1.0 };
        let rhs = sign * beta.wedge(&alpha).eval_on_real_vectors(&p, args).unwrap();
        prop_assert!(rel_close(lhs, rhs, 1e-9), "lhs {lhs}, rhs {rhs}");
    }

    /// d(d alpha) = 0 for scalars and 1-forms.
    #[test]
    fn exterior_derivative_squares_to_zero(
        coeff in coeff_strategy(),
        alpha in form_strategy(1),
        p in point_strategy(),
        vectors in proptest::collection::vec(vector_strategy(), 3),
    ) {
        let ddf = Form::scalar(coeff).exterior_derivative().exterior_derivative();
        let v = ddf.eval_on_real_vectors(&p, &vectors[..2]).unwrap();
        prop_assert!(v.abs() <= 1e-9, "dd scalar gave {v}");

        let dda = alpha.exterior_derivative().exterior_derivative();
        let w = dda.eval_on_real_vectors(&p, &vectors[..3]).unwrap();
        prop_assert!(w.abs() <= 1e-9, "dd 1-form gave {w}");
    }

    /// d is an antiderivation: d(a ^ b) = da ^ b + (-1)^p a ^ db.
    #[test]
    fn exterior_derivative_is_an_antiderivation(
        alpha in form_strategy(1),
        beta in form_strategy(1),
        p in point_strategy(),
        vectors in proptest::collection::vec(vector_strategy(), 3),
    ) {
        let lhs = alpha.wedge(&beta).exterior_derivative();
        let rhs = alpha
            .exterior_derivative()
            .wedge(&beta)
            .sub(&alpha.wedge(&beta.exterior_derivative()));
        let l = lhs.eval_on_real_vectors(&p, &vectors).unwrap();
        let r = rhs.eval_on_real_vectors(&p, &vectors).unwrap();
        prop_assert!(rel_close(l, r, 1e-9), "lhs {l}, rhs {r}");
    }

    /// Contraction is an antiderivation as well:
    /// i_X(a ^ b) = (i_X a) ^ b - a ^ (i_X b) for 1-forms a, b.
    #[test]
    fn interior_product_is_an_antiderivation(
        alpha in form_strategy(1),
        beta in form_strategy(1),
        x in field_strategy(),
        p in point_strategy(),
        v in vector_strategy(),
    ) {
        let lhs = alpha.wedge(&beta).interior_product(&x);
        let rhs = beta
            .scale(alpha.eval_on_fields(&[&x]))
            .sub(&alpha.scale(beta.eval_on_fields(&[&x])));
        let l = lhs.eval_on_real_vectors(&p, &[v]).unwrap();
        let r = rhs.eval_on_real_vectors(&p, &[v]).unwrap();
        prop_assert!(rel_close(l, r, 1e-9), "lhs {l}, rhs {r}");
    }

    /// The invariant formula for d of a 1-form:
    /// d a (X, Y) = X(a(Y)) - Y(a(X)) - a([X, Y]).
    #[test]
    fn derivative_matches_the_invariant_formula(
        alpha in form_strategy(1),
        x in field_strategy(),
        y in field_strategy(),
        p in point_strategy(),
    ) {
        let lhs = alpha
            .exterior_derivative()
            .eval_on_fields(&[&x, &y])
            .eval_real(&p)
            .unwrap();
        let rhs = (x.apply_to_scalar(&alpha.eval_on_fields(&[&y]))
            - y.apply_to_scalar(&alpha.eval_on_fields(&[&x]))
            - alpha.eval_on_fields(&[&x.lie_bracket(&y)]))
        .eval_real(&p)
        .unwrap();
        prop_assert!(rel_close(lhs, rhs, 1e-9), "lhs {lhs}, rhs {rhs}");
    }

    /// The Lie bracket satisfies the Jacobi identity.
    #[test]
    fn lie_bracket_satisfies_jacobi(
        x in field_strategy(),
        y in field_strategy(),
        z in field_strategy(),
        p in point_strategy(),
    ) {
        let cycle = x
            .lie_bracket(&y)
            .lie_bracket(&z)
            .add(&y.lie_bracket(&z).lie_bracket(&x))
            .add(&z.lie_bracket(&x).lie_bracket(&y));
        let v = cycle.eval(&p).unwrap();
        let worst = v.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        // Scale against the first-order data feeding the identity.
        let mut scale = 1.0f64;
        for f in [&x, &y, &z] {
            for c in f.eval(&p).unwrap() {
                scale = scale.max(c.abs());
            }
        }
        prop_assert!(worst <= 1e-7 * scale.powi(3), "cycle reached {worst}");
    }

    /// The bracket acts on scalars as the commutator of derivations.
    #[test]
    fn bracket_is_the_commutator_on_scalars(
        x in field_strategy(),
        y in field_strategy(),
        f in coeff_strategy(),
        p in point_strategy(),
    ) {
        let lhs = x.lie_bracket(&y).apply_to_scalar(&f).eval_real(&p).unwrap();
        let rhs = (x.apply_to_scalar(&y.apply_to_scalar(&f))
            - y.apply_to_scalar(&x.apply_to_scalar(&f)))
        .eval_real(&p)
        .unwrap();
        prop_assert!(rel_close(lhs, rhs, 1e-8), "lhs {lhs}, rhs {rhs}");
    }

    /// Pullback along the band-to-line map commutes with d.
    #[test]
    fn pullback_commutes_with_the_derivative(
        alpha in form_strategy(1),
        p in point_strategy(),
        vectors in proptest::collection::vec(vector_strategy(), 2),
    ) {
        let map = band_to_line_map();
        let lhs = alpha.exterior_derivative().pullback(&map);
        let rhs = alpha.pullback(&map).exterior_derivative();
        let l = lhs.eval_on_real_vectors(&p, &vectors).unwrap();
        let r = rhs.eval_on_real_vectors(&p, &vectors).unwrap();
        prop_assert!(rel_close(l, r, 1e-8), "lhs {l}, rhs {r}");
    }
}
