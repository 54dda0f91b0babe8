//! Rank-4 distributions on R^6 cut out by two independent 1-forms.
//!
//! A [`Distribution`] bundles the defining forms `lambda1, lambda2`, a
//! symbolic framing `X1..X4` of their common kernel, an optional pair of
//! transverse fields, and a working box. The quotient `Q = TM/D` is
//! two-dimensional; throughout the crate its basis is the class pair
//! `([Z1], [Z2])` dual to the defining forms, so projecting a vector to `Q`
//! means evaluating the two forms on it.

use std::sync::OnceLock;

use crate::exterior::{Form, VectorField};
use crate::sample::{Box6, SampleOptions, DEFAULT_SEED};
use crate::scalar::{Point, ScalarExpr};
use crate::{Error, Result};

/// Symbolic bracket and curvature data over the framing, built once.
pub struct LeviSymbols {
    /// `brackets[i][j] = [X_i, X_j]` (antisymmetric, diagonal zero).
    pub brackets: Vec<Vec<VectorField>>,
    /// `lambda_of_bracket[i][j][k] = lambda_k([X_i, X_j])`.
    pub lambda_of_bracket: Vec<Vec<[ScalarExpr; 2]>>,
    /// `dlambda_on_framing[i][j][k] = d lambda_k (X_i, X_j)`.
    pub dlambda_on_framing: Vec<Vec<[ScalarExpr; 2]>>,
}

/// A corank-2 distribution with its framing and working box.
pub struct Distribution {
    forms: [Form; 2],
    dforms: [Form; 2],
    framing: [VectorField; 4],
    transverse: Option<[VectorField; 2]>,
    domain: Box6,
    levi: OnceLock<Box<LeviSymbols>>,
    pairing: OnceLock<[[ScalarExpr; 2]; 2]>,
}

impl Distribution {
    /// The defining 1-forms.
    pub fn forms(&self) -> &[Form; 2] {
        &self.forms
    }

    /// Exterior derivatives of the defining forms, cached.
    pub fn dforms(&self) -> &[Form; 2] {
        &self.dforms
    }

    /// The symbolic framing `X1..X4` of the kernel.
    pub fn framing(&self) -> &[VectorField; 4] {
        &self.framing
    }

    /// The transverse pair `Z1, Z2`, when one was supplied.
    pub fn transverse(&self) -> Option<&[VectorField; 2]> {
        self.transverse.as_ref()
    }

    /// Working box used by sampled checks.
    pub fn domain(&self) -> &Box6 {
        &self.domain
    }

    /// Quotient components `(lambda1(v), lambda2(v))` of a vector at `p`.
    pub fn project_vector(&self, p: &Point, v: &[f64; 6]) -> Result<[f64; 2]> {
        let mut out = [0.0; 2];
        for (k, form) in self.forms.iter().enumerate() {
            let mut acc = 0.0;
            for (mask, c) in form.terms() {
                let i = mask.trailing_zeros() as usize;
                acc += c.eval_real(p)? * v[i];
            }
            out[k] = acc;
        }
        Ok(out)
    }

    /// Quotient components of a field at `p`.
    pub fn project_field(&self, p: &Point, x: &VectorField) -> Result<[f64; 2]> {
        self.project_vector(p, &x.eval(p)?)
    }

    /// Symbolic quotient components of a field.
    pub fn project_field_symbolic(&self, x: &VectorField) -> [ScalarExpr; 2] {
        std::array::from_fn(|k| {
            ScalarExpr::sum((0..6).map(|i| {
                self.forms[k].coefficient(1 << i) * x.component(i).clone()
            }))
        })
    }

    /// Coefficient rows of the defining forms at `p`:
    /// `rows[k][i] = lambda_k(e_i)`.
    pub fn form_rows(&self, p: &Point) -> Result<[[f64; 6]; 2]> {
        let mut rows = [[0.0; 6]; 2];
        for k in 0..2 {
            for i in 0..6 {
                rows[k][i] = self.forms[k].coefficient(1 << i).eval_real(p)?;
            }
        }
        Ok(rows)
    }

    /// The framing evaluated at `p`, as four coordinate vectors.
    pub fn framing_matrix(&self, p: &Point) -> Result<[[f64; 6]; 4]> {
        let mut m = [[0.0; 6]; 4];
        for (i, x) in self.framing.iter().enumerate() {
            m[i] = x.eval(p)?;
        }
        Ok(m)
    }

    /// Bracket and curvature symbols over the framing, built on first use.
    pub fn levi_symbols(&self) -> &LeviSymbols {
        self.levi.get_or_init(|| {
            let mut brackets = vec![vec![VectorField::zero(); 4]; 4];
            let mut lob = vec![vec![[ScalarExpr::zero(), ScalarExpr::zero()]; 4]; 4];
            let mut dof = vec![vec![[ScalarExpr::zero(), ScalarExpr::zero()]; 4]; 4];
            for i in 0..4 {
                for j in (i + 1)..4 {
                    let b = self.framing[i].lie_bracket(&self.framing[j]);
                    lob[i][j] = self.project_field_symbolic(&b);
                    lob[j][i] = std::array::from_fn(|k| -lob[i][j][k].clone());
                    brackets[j][i] = b.scale(ScalarExpr::constant(-1.0));
                    brackets[i][j] = b;
                    for k in 0..2 {
                        let d = self.dforms[k]
                            .eval_on_fields(&[&self.framing[i], &self.framing[j]]);
                        dof[i][j][k] = d.clone();
                        dof[j][i][k] = -d;
                    }
                }
            }
            Box::new(LeviSymbols {
                brackets,
                lambda_of_bracket: lob,
                dlambda_on_framing: dof,
            })
        })
    }

    pub(crate) fn pairing_cache(&self) -> &OnceLock<[[ScalarExpr; 2]; 2]> {
        &self.pairing
    }
}

fn sample_points(domain: &Box6, n: usize, seed: u64) -> Vec<Point> {
    domain.samples(n, seed)
}

/// Kernel framing from Gaussian elimination on the coefficient rows.
///
/// Pivot columns are chosen by largest absolute value at the box center;
/// each non-pivot coordinate direction is then corrected by the symbolic
/// solution of the 2x2 pivot system so that both forms annihilate it.
fn auto_framing(forms: &[Form; 2], domain: &Box6) -> Result<[VectorField; 4]> {
    let center = domain.center();
    let coeff =
        |k: usize, i: usize| -> ScalarExpr { forms[k].coefficient(1u8 << i) };
    let at_center: [[f64; 6]; 2] = {
        let mut m = [[0.0; 6]; 2];
        for k in 0..2 {
            for i in 0..6 {
                m[k][i] = coeff(k, i).eval_real(&center)?;
            }
        }
        m
    };

    // Pivot for the first row, then for the second with the first column
    // eliminated.
    let p1 = (0..6)
        .max_by(|a, b| at_center[0][*a].abs().total_cmp(&at_center[0][*b].abs()))
        .unwrap();
    let mut reduced = at_center[1];
    if at_center[0][p1].abs() > 0.0 {
        let r = at_center[1][p1] / at_center[0][p1];
        for i in 0..6 {
            reduced[i] -= r * at_center[0][i];
        }
    }
    let p2 = (0..6)
        .filter(|i| *i != p1)
        .max_by(|a, b| reduced[*a].abs().total_cmp(&reduced[*b].abs()))
        .unwrap();
    let minor = (at_center[0][p1] * at_center[1][p2]
        - at_center[0][p2] * at_center[1][p1])
        .abs();
    if minor < 1e-9 {
        return Err(Error::FormsNotIndependent {
            point: center,
            minor,
        });
    }

    // Symbolic 2x2 system over the pivot columns.
    let a = coeff(0, p1);
    let b = coeff(0, p2);
    let c = coeff(1, p1);
    let d = coeff(1, p2);
    let det = a.clone() * d.clone() - b.clone() * c.clone();

    let mut fields = Vec::with_capacity(4);
    for i in 0..6 {
        if i == p1 || i == p2 {
            continue;
        }
        let r0 = coeff(0, i);
        let r1 = coeff(1, i);
        // Solve [a b; c d] [u; v] = [r0; r1].
        let u = (d.clone() * r0.clone() - b.clone() * r1.clone()) / det.clone();
        let v = (a.clone() * r1 - c.clone() * r0) / det.clone();
        let mut comps: [ScalarExpr; 6] = std::array::from_fn(|_| ScalarExpr::zero());
        comps[i] = ScalarExpr::one();
        comps[p1] = -u;
        comps[p2] = -v;
        fields.push(VectorField(comps));
    }
    Ok(fields.try_into().expect("exactly four kernel directions"))
}

/// Builds a distribution from two 1-forms, checking independence, kernel
/// tangency of the framing (computing one when none is given), and duality
/// of the optional transverse pair, all by sampling the working box.
pub fn build_distribution(
    forms: [Form; 2],
    framing: Option<[VectorField; 4]>,
    transverse: Option<[VectorField; 2]>,
    domain: Box6,
) -> Result<Distribution> {
    for f in &forms {
        if f.degree() != 1 {
            return Err(Error::Invalid(format!(
                "defining forms must have degree 1, found degree {}",
                f.degree()
            )));
        }
    }

    let points = sample_points(&domain, 20, DEFAULT_SEED);

    // Independence: some 2x2 minor of the coefficient rows must stay away
    // from zero at every sampled point.
    for p in &points {
        let mut rows = [[0.0; 6]; 2];
        for k in 0..2 {
            for i in 0..6 {
                rows[k][i] = forms[k].coefficient(1 << i).eval_real(p)?;
            }
        }
        let mut best = 0.0f64;
        for i in 0..6 {
            for j in (i + 1)..6 {
                best = best.max((rows[0][i] * rows[1][j] - rows[0][j] * rows[1][i]).abs());
            }
        }
        if best < 1e-9 {
            return Err(Error::FormsNotIndependent { point: *p, minor: best });
        }
    }

    let framing = match framing {
        Some(f) => f,
        None => auto_framing(&forms, &domain)?,
    };

    let dist = Distribution {
        dforms: std::array::from_fn(|k| forms[k].exterior_derivative()),
        forms,
        framing,
        transverse,
        domain,
        levi: OnceLock::new(),
        pairing: OnceLock::new(),
    };

    // Tangency and non-degeneracy of the framing.
    for p in &points {
        for (j, x) in dist.framing.iter().enumerate() {
            let q = dist.project_field(p, x)?;
            let residual = q[0].abs().max(q[1].abs());
            if residual > 1e-9 {
                return Err(Error::FramingNotTangent {
                    index: j + 1,
                    point: *p,
                    residual,
                });
            }
        }
        let m = dist.framing_matrix(p)?;
        let minor = largest_minor_4x6(&m);
        if minor < 1e-9 {
            return Err(Error::FramingSingular { point: *p, minor });
        }
    }

    // Duality of a supplied transverse pair.
    if let Some(z) = &dist.transverse {
        for p in &points {
            for (i, form) in dist.forms.iter().enumerate() {
                for (j, zj) in z.iter().enumerate() {
                    let v =
                        form.eval_on_fields(&[zj]).eval_real(p)?;
                    let expect = if i == j { 1.0 } else { 0.0 };
                    if (v - expect).abs() > 1e-9 {
                        return Err(Error::Invalid(format!(
                            "transverse pair is not dual to the defining forms at {} \
                             (lambda{}(Z{}) = {})",
                            p,
                            i + 1,
                            j + 1,
                            v
                        )));
                    }
                }
            }
        }
    }

    Ok(dist)
}

/// Largest absolute 4x4 minor of a 4x6 matrix.
fn largest_minor_4x6(m: &[[f64; 6]; 4]) -> f64 {
    let mut best = 0.0f64;
    for a in 0..6 {
        for b in (a + 1)..6 {
            for c in (b + 1)..6 {
                for d in (c + 1)..6 {
                    let cols = [a, b, c, d];
                    let mut sub = [[0.0; 4]; 4];
                    for i in 0..4 {
                        for j in 0..4 {
                            sub[i][j] = m[i][cols[j]];
                        }
                    }
                    best = best.max(det4(&sub).abs());
                }
            }
        }
    }
    best
}

fn det4(m: &[[f64; 4]; 4]) -> f64 {
    let mut a = *m;
    let mut det = 1.0;
    for c in 0..4 {
        let piv = (c..4).max_by(|i, j| a[*i][c].abs().total_cmp(&a[*j][c].abs())).unwrap();
        if a[piv][c] == 0.0 {
            return 0.0;
        }
        if piv != c {
            a.swap(piv, c);
            det = -det;
        }
        det *= a[c][c];
        for r in (c + 1)..4 {
            let f = a[r][c] / a[c][c];
            for k in c..4 {
                a[r][k] -= f * a[c][k];
            }
        }
    }
    det
}

/// Determinant of six coordinate vectors (columns).
pub fn det6(cols: &[[f64; 6]; 6]) -> f64 {
    let mut a = *cols;
    let mut det = 1.0;
    for c in 0..6 {
        let piv = (c..6).max_by(|i, j| a[*i][c].abs().total_cmp(&a[*j][c].abs())).unwrap();
        if a[piv][c] == 0.0 {
            return 0.0;
        }
        if piv != c {
            a.swap(piv, c);
            det = -det;
        }
        det *= a[c][c];
        for r in (c + 1)..6 {
            let f = a[r][c] / a[c][c];
            for k in c..6 {
                a[r][k] -= f * a[c][k];
            }
        }
    }
    det
}

/// Curvature of a defining form restricted to the framing:
/// `entries[i][j] = d alpha (X_i, X_j)` symbolically.
pub fn dual_curvature(dist: &Distribution, alpha: &Form) -> Result<Vec<Vec<ScalarExpr>>> {
    if alpha.degree() != 1 {
        return Err(Error::Invalid(format!(
            "dual curvature expects a 1-form, found degree {}",
            alpha.degree()
        )));
    }
    let d = alpha.exterior_derivative();
    let mut out = vec![vec![ScalarExpr::zero(); 4]; 4];
    for i in 0..4 {
        for j in (i + 1)..4 {
            let e = d.eval_on_fields(&[&dist.framing[i], &dist.framing[j]]);
            out[j][i] = -e.clone();
            out[i][j] = e;
        }
    }
    Ok(out)
}

/// Per-condition outcome of a transverse-pair verification.
#[derive(Debug, Clone)]
pub struct ConditionReport {
    pub name: &'static str,
    pub residual: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Result of [`verify_reeb`].
#[derive(Debug, Clone)]
pub struct ReebReport {
    pub conditions: Vec<ConditionReport>,
    /// Smallest |det| of the combined frame over the sample points.
    pub min_frame_det: f64,
    pub points: usize,
    pub pass: bool,
}

/// Checks that a pair of fields is a commuting dual transversal along which
/// both curvature forms degenerate. Four conditions, each sampled:
///
/// 1. `X1..X4, Z1, Z2` frames R^6 (|det| above `det_floor`);
/// 2. `lambda_i(Z_j) = delta_ij`;
/// 3. `d lambda_j (Z_i, v) = 0` for `v` among the framing, i.e. the
///    curvature forms degenerate along the pair when restricted to the
///    kernel;
/// 4. `[Z1, Z2] = 0`.
pub fn verify_reeb(
    dist: &Distribution,
    pair: &[VectorField; 2],
    opts: &SampleOptions,
) -> Result<ReebReport> {
    let points = sample_points(dist.domain(), opts.count, opts.seed);
    verify_reeb_at(dist, pair, &points, opts.tol)
}

/// Same four conditions, checked on an explicit point list.
pub fn verify_reeb_at(
    dist: &Distribution,
    pair: &[VectorField; 2],
    points: &[Point],
    tol: f64,
) -> Result<ReebReport> {
    let det_floor = 1e-10;

    let mut min_det = f64::INFINITY;
    let mut duality = 0.0f64;
    let mut curvature = 0.0f64;
    let mut commutator = 0.0f64;

    let bracket = pair[0].lie_bracket(&pair[1]);

    for p in points {
        let frame = dist.framing_matrix(p)?;
        let z0 = pair[0].eval(p)?;
        let z1 = pair[1].eval(p)?;
        let cols = [frame[0], frame[1], frame[2], frame[3], z0, z1];
        min_det = min_det.min(det6(&cols).abs());

        for (i, form) in dist.forms.iter().enumerate() {
            for (j, zj) in pair.iter().enumerate() {
                let v = form.eval_on_fields(&[zj]).eval_real(p)?;
                let expect = if i == j { 1.0 } else { 0.0 };
                duality = duality.max((v - expect).abs());
            }
        }

        for dform in dist.dforms() {
            for zi in pair.iter() {
                let contracted = dform.interior_product(zi);
                for x in dist.framing().iter() {
                    let v = contracted.eval_on_fields(&[x]).eval_real(p)?;
                    curvature = curvature.max(v.abs());
                }
            }
        }

        let bv = bracket.eval(p)?;
        for comp in bv {
            commutator = commutator.max(comp.abs());
        }
    }

    let conditions = vec![
        ConditionReport {
            name: "frame-transversality",
            residual: if min_det.is_finite() { min_det } else { 0.0 },
            tol: det_floor,
            pass: min_det > det_floor,
        },
        ConditionReport {
            name: "duality",
            residual: duality,
            tol,
            pass: duality <= tol,
        },
        ConditionReport {
            name: "curvature-degeneracy",
            residual: curvature,
            tol,
            pass: curvature <= tol,
        },
        ConditionReport {
            name: "commutation",
            residual: commutator,
            tol,
            pass: commutator <= tol,
        },
    ];
    let pass = conditions.iter().all(|c| c.pass);
    Ok(ReebReport {
        conditions,
        min_frame_det: min_det,
        points: points.len(),
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::{parse_one_form, parse_vector_field};
    use crate::scalar::Coordinate;

    fn cubic_forms() -> [Form; 2] {
        [
            parse_one_form("dz1 - y1*dx1 - y2*dx2 - (x2^3/3 + x2 + 2*x1)*dy1").unwrap(),
            parse_one_form("dz2 - y2*dx1 - y1*dx2").unwrap(),
        ]
    }

    fn build_cubic() -> Distribution {
        build_distribution(cubic_forms(), None, None, Box6::symmetric(0.9)).unwrap()
    }

    #[test]
    fn auto_framing_matches_hand_framing() {
        let dist = build_cubic();
        let expected = [
            parse_vector_field("@x1 + y1*@z1 + y2*@z2").unwrap(),
            parse_vector_field("@x2 + y2*@z1 + y1*@z2").unwrap(),
            parse_vector_field("@y1 + (x2^3/3 + x2 + 2*x1)*@z1").unwrap(),
            parse_vector_field("@y2").unwrap(),
        ];
        let p = Point([0.3, -0.2, 0.5, 0.1, 0.0, 0.7]);
        for (got, want) in dist.framing().iter().zip(&expected) {
            let g = got.eval(&p).unwrap();
            let w = want.eval(&p).unwrap();
            for i in 0..6 {
                assert!((g[i] - w[i]).abs() < 1e-12, "component {i}: {g:?} vs {w:?}");
            }
        }
    }

    #[test]
    fn framing_is_tangent_everywhere_sampled() {
        let dist = build_cubic();
        for k in 0..30 {
            let p = dist.domain().sample(k, 7);
            for x in dist.framing() {
                let q = dist.project_field(&p, x).unwrap();
                assert!(q[0].abs() < 1e-12 && q[1].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bracket_x1_x3_is_first_transverse_direction() {
        let dist = build_cubic();
        let levi = dist.levi_symbols();
        let p = Point([0.1, 0.4, -0.3, 0.2, 0.0, 0.0]);
        let b = &levi.brackets[0][2];
        let v = b.eval(&p).unwrap();
        assert_eq!(v, [0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        // lambda_k([X1, X3]) = (1, 0), and agrees with -d lambda_k(X1, X3).
        let lb = &levi.lambda_of_bracket[0][2];
        assert!((lb[0].eval_real(&p).unwrap() - 1.0).abs() < 1e-12);
        assert!(lb[1].eval_real(&p).unwrap().abs() < 1e-12);
        let df = &levi.dlambda_on_framing[0][2];
        assert!((df[0].eval_real(&p).unwrap() + 1.0).abs() < 1e-12);
        assert!(df[1].eval_real(&p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn curvature_identity_on_framing() {
        // d alpha (X, Y) = -alpha([X, Y]) whenever alpha kills X and Y.
        let dist = build_cubic();
        let levi = dist.levi_symbols();
        for k in 0..10 {
            let p = dist.domain().sample(k, 3);
            for i in 0..4 {
                for j in 0..4 {
                    for f in 0..2 {
                        let a = levi.lambda_of_bracket[i][j][f].eval_real(&p).unwrap();
                        let b = levi.dlambda_on_framing[i][j][f].eval_real(&p).unwrap();
                        assert!((a + b).abs() < 1e-9, "entry ({i},{j},{f})");
                    }
                }
            }
        }
    }

    #[test]
    fn reeb_pair_verifies_for_cubic_model() {
        let dist = build_cubic();
        let pair = [
            VectorField::basis(Coordinate::Z1),
            VectorField::basis(Coordinate::Z2),
        ];
        let report = verify_reeb(&dist, &pair, &SampleOptions {
            count: 25,
            ..SampleOptions::default()
        })
        .unwrap();
        assert!(report.pass, "{report:?}");
        assert!(report.min_frame_det > 0.5);
    }

    #[test]
    fn shifted_pair_fails_verification() {
        let dist = build_cubic();
        // Z1 contaminated by a kernel direction: duality still holds, but
        // the curvature condition must fail.
        let z1 = parse_vector_field("@z1 + @y2").unwrap();
        let pair = [z1, VectorField::basis(Coordinate::Z2)];
        let report = verify_reeb(&dist, &pair, &SampleOptions::default()).unwrap();
        assert!(!report.pass);
        let curv = report
            .conditions
            .iter()
            .find(|c| c.name == "curvature-degeneracy")
            .unwrap();
        assert!(!curv.pass);
    }

    #[test]
    fn degenerate_forms_are_rejected() {
        let forms = [
            parse_one_form("dz1 - y1*dx1").unwrap(),
            parse_one_form("2*dz1 - 2*y1*dx1").unwrap(),
        ];
        let err = build_distribution(forms, None, None, Box6::symmetric(0.9));
        assert!(matches!(err, Err(Error::FormsNotIndependent { .. })));
    }
}
