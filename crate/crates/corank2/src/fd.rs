//! Central finite differences for fields that are only defined pointwise.
//!
//! The almost complex structure is built fiberwise, so fields like `J u`
//! have no symbolic expression; their derivatives come from second-order
//! central stencils. With coefficients of order one the step below keeps
//! truncation near 1e-10, comfortably inside every tolerance used here.

use crate::scalar::Point;
use crate::Result;

/// Step used for brackets of pointwise fields.
pub const BRACKET_STEP: f64 = 1e-5;

/// Radius around a base point that must stay elliptic before a stencil is
/// trusted.
pub const GUARD_RADIUS: f64 = 1e-4;

/// Central derivative of a scalar function along coordinate `i`.
pub fn central_derivative(
    f: &dyn Fn(&Point) -> Result<f64>,
    p: &Point,
    i: usize,
    h: f64,
) -> Result<f64> {
    let plus = f(&p.shifted(i, h))?;
    let minus = f(&p.shifted(i, -h))?;
    Ok((plus - minus) / (2.0 * h))
}

/// Lie bracket with the `h^2` truncation term cancelled by Richardson
/// extrapolation of two central stencils. The remaining error is the
/// rounding floor of the component functions divided by `h`, which is
/// what matters when the components are themselves computed numerically.
pub fn bracket_refined(
    a: &dyn Fn(&Point) -> Result<[f64; 6]>,
    b: &dyn Fn(&Point) -> Result<[f64; 6]>,
    p: &Point,
    h: f64,
) -> Result<[f64; 6]> {
    let coarse = bracket(a, b, p, h)?;
    let fine = bracket(a, b, p, 0.5 * h)?;
    Ok(std::array::from_fn(|k| {
        (4.0 * fine[k] - coarse[k]) / 3.0
    }))
}

/// Lie bracket `[a, b]` of two pointwise fields at `p`, via central
/// differences of both component functions.
pub fn bracket(
    a: &dyn Fn(&Point) -> Result<[f64; 6]>,
    b: &dyn Fn(&Point) -> Result<[f64; 6]>,
    p: &Point,
    h: f64,
) -> Result<[f64; 6]> {
    let av = a(p)?;
    let bv = b(p)?;
    let mut out = [0.0; 6];
    for j in 0..6 {
        let ap = a(&p.shifted(j, h))?;
        let am = a(&p.shifted(j, -h))?;
        let bp = b(&p.shifted(j, h))?;
        let bm = b(&p.shifted(j, -h))?;
        for k in 0..6 {
            let da = (ap[k] - am[k]) / (2.0 * h);
            let db = (bp[k] - bm[k]) / (2.0 * h);
            out[k] += av[j] * db - bv[j] * da;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exterior::VectorField;
    use crate::parse::parse_vector_field;

    #[test]
    fn numeric_bracket_matches_symbolic() {
        let a = parse_vector_field("@x1 + y1*@z1 + x1*x2*@y2").unwrap();
        let b = parse_vector_field("@y1 + (x2^3/3 + x2 + 2*x1)*@z1").unwrap();
        let sym = a.lie_bracket(&b);
        let p = Point([0.3, -0.4, 0.2, 0.1, 0.0, 0.0]);
        let want = sym.eval(&p).unwrap();

        let fa = |q: &Point| -> Result<[f64; 6]> { Ok(a.eval(q)?) };
        let fb = |q: &Point| -> Result<[f64; 6]> { Ok(b.eval(q)?) };
        let got = bracket(&fa, &fb, &p, BRACKET_STEP).unwrap();
        for k in 0..6 {
            assert!((got[k] - want[k]).abs() < 1e-9, "component {k}");
        }
    }

    #[test]
    fn derivative_of_vanishing_field_is_clean() {
        let z = VectorField::zero();
        let f = |q: &Point| -> Result<[f64; 6]> { Ok(z.eval(q)?) };
        let p = Point::origin();
        let br = bracket(&f, &f, &p, BRACKET_STEP).unwrap();
        assert_eq!(br, [0.0; 6]);
    }
}
