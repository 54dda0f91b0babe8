//! The complex-contact obstruction tensor.
//!
//! For a structure `J = J~ + K` built by the almost-complex pipeline, the
//! obstruction against integrability to a complex contact structure is
//!
//! `S(u, v) = [u, v] + J[Ju, v] mod D`,
//!
//! tensorial in both slots, determined by its values on `u` in the
//! transverse pair and `v` in the framing. Expanding the correction
//! tensorially gives `S(u,v) = S~(u,v) + J_Q L(Ku, v)`, which is how it is
//! evaluated here; no stencil ever sees `K`.
//!
//! Alongside `S` the report carries the correction-free combination
//!
//! `Sigma(u, v) = 2[J~u, v] - J~[J~u, v] - [J~u, J~v] mod D`
//!
//! built from the factor-sign extension. `S` and `Sigma` have the same
//! vanishing locus; `Sigma` is the combination whose `(Z2, X2)` components
//! admit the closed forms `A1, A2` below, which is what makes the cubic
//! model's non-flatness checkable against formulas.

use crate::almost_complex::{
    canonical_j, mat2_apply, structure_at, KConvention, RootBranch, StructureField,
};
use crate::distribution::Distribution;
use crate::fd::{bracket, BRACKET_STEP};
use crate::scalar::{Coordinate, Point};
use crate::{Error, Result};

/// Obstruction values at a point.
#[derive(Debug, Clone)]
pub struct STensorReport {
    pub point: Point,
    /// Root branch the canonical structure ended up on.
    pub branch: RootBranch,
    pub root_flipped: bool,
    /// `S(Z_i, X_b)` in quotient components, `values[i][b]`.
    pub values: [[[f64; 2]; 4]; 2],
    /// Reduced combination `Sigma(Z_i, X_b)`, same layout.
    pub reduced: [[[f64; 2]; 4]; 2],
    /// Frobenius norms of the two component arrays.
    pub norm: f64,
    pub reduced_norm: f64,
    /// Least-squares residual of the correction solve.
    pub k_residual: f64,
}

fn frobenius(vals: &[[[f64; 2]; 4]; 2]) -> f64 {
    let mut acc = 0.0;
    for i in 0..2 {
        for b in 0..4 {
            for c in 0..2 {
                acc += vals[i][b][c] * vals[i][b][c];
            }
        }
    }
    acc.sqrt()
}

/// Evaluates the obstruction tensor and the reduced combination at `p`,
/// using the canonical structure (upper root, conjugated when orientation
/// demands it).
pub fn s_tensor(dist: &Distribution, p: &Point) -> Result<STensorReport> {
    let mut branch = RootBranch::Upper;
    let mut root_flipped = false;
    {
        let probe = StructureField::new(dist, branch);
        if probe.fiber(p)?.orientation < 0.0 {
            branch = RootBranch::Lower;
            root_flipped = true;
        }
    }
    let field = StructureField::new(dist, branch);
    let data = structure_at(&field, p)?;
    let fiber = &data.fiber;
    let z_pair = dist.transverse().expect("structure requires the pair");

    let mut values = [[[0.0; 2]; 4]; 2];
    for u in 0..2 {
        for b in 0..4 {
            values[u][b] = data.s_value(KConvention::Canonical, u, b);
        }
    }

    // Sigma from the factor extension, finite differences on the brackets.
    let h = BRACKET_STEP;
    let mut reduced = [[[0.0; 2]; 4]; 2];
    for u in 0..2 {
        let zu = &z_pair[u];
        let jzu_fn = field.j_tilde_factor_of(zu);
        for b in 0..4 {
            let xb = &dist.framing()[b];
            let jxb_fn = field.j_tilde_factor_of(xb);
            let br1 = bracket(&jzu_fn, &(|q: &Point| xb.eval(q).map_err(Into::into)), p, h)?;
            let q1 = dist.project_vector(p, &br1)?;
            let br2 = bracket(&jzu_fn, &jxb_fn, p, h)?;
            let q2 = dist.project_vector(p, &br2)?;
            let jq1 = mat2_apply(&fiber.j_q, &q1);
            for c in 0..2 {
                reduced[u][b][c] = 2.0 * q1[c] - jq1[c] - q2[c];
            }
        }
    }

    Ok(STensorReport {
        point: *p,
        branch,
        root_flipped,
        norm: frobenius(&values),
        reduced_norm: frobenius(&reduced),
        values,
        reduced,
        k_residual: data.k_residual,
    })
}

/// Condition residuals of the canonical structure at `p`, bundled for
/// reporting.
pub fn canonical_conditions(
    dist: &Distribution,
    p: &Point,
) -> Result<crate::almost_complex::ConditionResiduals> {
    let c = canonical_j(dist, p)?;
    let field = StructureField::new(dist, c.branch);
    crate::almost_complex::condition_residuals(&field, &c.data, KConvention::Canonical)
}

/// Closed forms for the `(Z2, X2)` components of the reduced combination
/// on the cubic model, as functions of `x2` alone. Only defined on the
/// elliptic band `|x2| < 1`.
pub fn a1_a2_closed_form(x2: f64) -> Result<(f64, f64)> {
    let a = x2 * x2 + 1.0;
    let det = 4.0 - a * a;
    if det <= 0.0 {
        return Err(Error::NonElliptic {
            point: Point::origin().with(Coordinate::X2, x2),
            det,
        });
    }
    let delta = det.sqrt();
    let a1 = (4.0 * x2 * a / delta.powi(3)) * (2.0 - 4.0 / (a * delta));
    let a2 = (a / delta - 2.0) * (8.0 * x2 / delta.powi(3));
    Ok((a1, a2))
}

/// Zeros of `A1` in an interval inside the elliptic band.
///
/// Scans a fine grid for sign changes (bisected to `tol`) and for
/// touch points: `A1`'s nonzero roots are double roots, since
/// `(x2^2+1)·Delta <= 2` with equality exactly there, so the factor
/// `2 - 4/((x2^2+1)·Delta)` vanishes without a sign change. Local minima
/// of `|A1|` are therefore narrowed by ternary search and accepted when
/// the minimum is zero to machine precision.
pub fn zero_set_a1(lo: f64, hi: f64, tol: f64) -> Result<Vec<f64>> {
    if !(lo < hi) {
        return Err(Error::Invalid(format!("empty interval [{lo}, {hi}]")));
    }
    if lo <= -1.0 || hi >= 1.0 {
        return Err(Error::Invalid(
            "zero scan interval must lie inside the elliptic band (-1, 1)".into(),
        ));
    }
    if !(tol > 0.0) {
        return Err(Error::Invalid(format!("tolerance must be positive, got {tol}")));
    }
    let f = |x: f64| -> Result<f64> { Ok(a1_a2_closed_form(x)?.0) };
    const GRID: usize = 10_000;
    const TOUCH_ZERO: f64 = 1e-11;
    let step = (hi - lo) / GRID as f64;
    let mut roots: Vec<f64> = Vec::new();
    let push = |r: f64, roots: &mut Vec<f64>| {
        if roots.iter().all(|x| (x - r).abs() > tol.max(step * 0.5)) {
            roots.push(r);
        }
    };
    let xs: Vec<f64> = (0..=GRID).map(|k| lo + step * k as f64).collect();
    let fs: Vec<f64> = xs.iter().map(|x| f(*x)).collect::<Result<_>>()?;

    for k in 0..GRID {
        if fs[k] == 0.0 {
            push(xs[k], &mut roots);
        } else if fs[k + 1] != 0.0 && fs[k].signum() != fs[k + 1].signum() {
            let (mut a, mut b, mut fa) = (xs[k], xs[k + 1], fs[k]);
            while b - a > tol {
                let m = 0.5 * (a + b);
                let fm = f(m)?;
                if fm == 0.0 {
                    a = m;
                    b = m;
                } else if fa.signum() != fm.signum() {
                    b = m;
                } else {
                    a = m;
                    fa = fm;
                }
            }
            push(0.5 * (a + b), &mut roots);
        }
    }
    if fs[GRID] == 0.0 {
        push(xs[GRID], &mut roots);
    }

    // Interior local minima of |A1| with no sign change around them.
    // Near a double root |A1| is quadratic and drops below evaluation
    // noise, so the minimum is located by bisecting the sign change of a
    // central-difference slope, which stays linear in the distance.
    let slope_h = 1e-6;
    let slope = |x: f64| -> Result<f64> { Ok(f(x + slope_h)?.abs() - f(x - slope_h)?.abs()) };
    for k in 1..GRID {
        let (l, m, r) = (fs[k - 1].abs(), fs[k].abs(), fs[k + 1].abs());
        if m == 0.0 || m > l || m > r || fs[k - 1].signum() != fs[k + 1].signum() {
            continue;
        }
        let (mut a, mut b) = (xs[k - 1], xs[k + 1]);
        if !(slope(a)? < 0.0 && slope(b)? > 0.0) {
            continue;
        }
        while b - a > tol {
            let mid = 0.5 * (a + b);
            if slope(mid)? < 0.0 {
                a = mid;
            } else {
                b = mid;
            }
        }
        let xm = 0.5 * (a + b);
        if f(xm)?.abs() < TOUCH_ZERO {
            push(xm, &mut roots);
        }
    }

    roots.sort_by(f64::total_cmp);
    Ok(roots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::build_distribution;
    use crate::exterior::VectorField;
    use crate::parse::parse_one_form;
    use crate::sample::Box6;

    fn transverse_z() -> [VectorField; 2] {
        [
            VectorField::basis(Coordinate::Z1),
            VectorField::basis(Coordinate::Z2),
        ]
    }

    fn cubic() -> Distribution {
        build_distribution(
            [
                parse_one_form("dz1 - y1*dx1 - y2*dx2 - (x2^3/3 + x2 + 2*x1)*dy1").unwrap(),
                parse_one_form("dz2 - y2*dx1 - y1*dx2").unwrap(),
            ],
            None,
            Some(transverse_z()),
            Box6::symmetric(0.9),
        )
        .unwrap()
    }

    fn flat() -> Distribution {
        build_distribution(
            [
                parse_one_form("dz1 - y1*dx1 + y2*dx2").unwrap(),
                parse_one_form("dz2 - y1*dx2 - y2*dx1").unwrap(),
            ],
            None,
            Some(transverse_z()),
            Box6::symmetric(0.9),
        )
        .unwrap()
    }

    #[test]
    fn reduced_combination_matches_closed_forms_on_cubic() {
        let dist = cubic();
        for &x2 in &[0.3, -0.45, 0.7, 0.05] {
            let p = Point([0.0, x2, 0.0, 0.0, 0.0, 0.0]);
            let r = s_tensor(&dist, &p).unwrap();
            let (a1, a2) = a1_a2_closed_form(x2).unwrap();
            assert!(
                (r.reduced[1][1][0] - a1).abs() < 1e-6,
                "x2 = {x2}: z1 component {} vs A1 {a1}",
                r.reduced[1][1][0]
            );
            assert!(
                (r.reduced[1][1][1] - a2).abs() < 1e-6,
                "x2 = {x2}: z2 component {} vs A2 {a2}",
                r.reduced[1][1][1]
            );
        }
    }

    #[test]
    fn reduced_combination_depends_only_on_x2_for_cubic() {
        let dist = cubic();
        let r0 = s_tensor(&dist, &Point([0.0, 0.3, 0.0, 0.0, 0.0, 0.0])).unwrap();
        let r1 = s_tensor(&dist, &Point([0.4, 0.3, 0.2, -0.1, 0.5, 0.6])).unwrap();
        for u in 0..2 {
            for b in 0..4 {
                for c in 0..2 {
                    assert!(
                        (r0.reduced[u][b][c] - r1.reduced[u][b][c]).abs() < 1e-6,
                        "component ({u},{b},{c})"
                    );
                }
            }
        }
    }

    #[test]
    fn flat_obstruction_vanishes() {
        let dist = flat();
        for k in 0..10 {
            let p = dist.domain().sample(k, 11);
            let r = s_tensor(&dist, &p).unwrap();
            assert!(r.norm < 1e-7, "S norm {} at {}", r.norm, p);
            assert!(r.reduced_norm < 1e-7, "Sigma norm {} at {}", r.reduced_norm, p);
        }
    }

    #[test]
    fn cubic_obstruction_does_not_vanish() {
        let dist = cubic();
        let p = Point([0.0, 0.3, 0.0, 0.0, 0.0, 0.0]);
        let r = s_tensor(&dist, &p).unwrap();
        assert!(r.norm > 1e-3, "norm {}", r.norm);
        assert!(r.reduced_norm > 1e-3);
        assert!(r.k_residual < 1e-8);
        // The closed-form witness component is nonzero here.
        let (a1, _) = a1_a2_closed_form(0.3).unwrap();
        assert!(a1.abs() > 1e-4);
    }

    #[test]
    fn obstruction_is_invariant_under_root_conjugation() {
        let dist = cubic();
        let p = Point([0.1, 0.3, -0.2, 0.4, 0.0, 0.0]);
        let up = StructureField::new(&dist, RootBranch::Upper);
        let down = StructureField::new(&dist, RootBranch::Lower);
        let du = structure_at(&up, &p).unwrap();
        let dl = structure_at(&down, &p).unwrap();
        for u in 0..2 {
            for b in 0..4 {
                let su = du.s_value(KConvention::Canonical, u, b);
                let sl = dl.s_value(KConvention::Canonical, u, b);
                for c in 0..2 {
                    assert!(
                        (su[c] - sl[c]).abs() < 1e-7,
                        "S must not depend on the root branch: ({u},{b},{c})"
                    );
                }
            }
        }
    }

    #[test]
    fn closed_forms_at_distinguished_points() {
        let (a1, a2) = a1_a2_closed_form(0.0).unwrap();
        assert_eq!(a1, 0.0);
        assert_eq!(a2, 0.0);
        let r = (2.0f64.sqrt() - 1.0).sqrt();
        let (a1, _) = a1_a2_closed_form(r).unwrap();
        assert!(a1.abs() < 1e-12, "A1({r}) = {a1}");
        assert!(a1_a2_closed_form(1.0).is_err());
        assert!(a1_a2_closed_form(-1.2).is_err());
    }

    #[test]
    fn zero_set_finds_exactly_the_three_roots() {
        let roots = zero_set_a1(-0.99, 0.99, 1e-10).unwrap();
        assert_eq!(roots.len(), 3, "{roots:?}");
        let r = (2.0f64.sqrt() - 1.0).sqrt();
        assert!((roots[0] + r).abs() < 1e-9);
        assert!(roots[1].abs() < 1e-9);
        assert!((roots[2] - r).abs() < 1e-9);
    }

    #[test]
    fn zero_set_is_empty_off_the_roots() {
        let roots = zero_set_a1(0.1, 0.5, 1e-10).unwrap();
        assert!(roots.is_empty(), "{roots:?}");
    }

    #[test]
    fn zero_set_rejects_bad_intervals() {
        assert!(zero_set_a1(0.5, 0.1, 1e-10).is_err());
        assert!(zero_set_a1(-1.5, 0.5, 1e-10).is_err());
        assert!(zero_set_a1(0.1, 0.5, 0.0).is_err());
    }
}
