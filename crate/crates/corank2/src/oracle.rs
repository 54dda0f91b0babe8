//! Independent numeric verification path.
//!
//! The structure pipeline differentiates coefficient expressions
//! symbolically: exterior derivatives for the curvature table, symbolic
//! Lie brackets where fields admit expressions. This module rebuilds the
//! same chain with every derivative replaced by a central difference of
//! coefficient values: curvature from finite-difference brackets of the
//! framing, the pairing from numeric wedge products, then root,
//! factorization, complex structure, correction, and obstruction from
//! those floating-point tables alone. Small deltas between the two paths
//! catch sign slips and misplaced terms that a single implementation
//! would happily reproduce on both sides of a test.
//!
//! The module also certifies the band-to-line globalization: the global
//! model's forms agree with the band model's forms carried along the
//! inverse map, and the global model stays elliptic with a verified
//! transverse pair far out on the line.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::rc::Rc;

use nalgebra::{DMatrix, DVector, Matrix6};
use num_complex::Complex64;

use crate::almost_complex::{
    canonical_j, factor_dpsi, find_root, j_on_d, j_on_q, mat2_apply, mat6_apply, RootBranch,
};
use crate::catalog::{band_to_line_map, load_model};
use crate::distribution::{det6, verify_reeb_at, ConditionReport, Distribution};
use crate::ellipticity::{classify_matrix, pairing_at, Classification};
use crate::exterior::CoordinateMap;
use crate::fd::{bracket, bracket_refined, BRACKET_STEP};
use crate::obstruction::s_tensor;
use crate::sample::{Box6, DEFAULT_SEED};
use crate::scalar::{Coordinate, Point};
use crate::{Error, Result};

/// Everything the numeric path derives at one point, with deltas against
/// the symbolic path.
#[derive(Debug, Clone)]
pub struct OracleResult {
    pub point: Point,
    /// Root branch the numeric path selected by orientation.
    pub branch: RootBranch,
    /// Classification of the finite-difference pairing matrix.
    pub classification: Classification,
    pub pairing: [[f64; 2]; 2],
    /// Corrected full structure from the numeric chain.
    pub j_full: [[f64; 6]; 6],
    /// Obstruction values from the numeric chain.
    pub s_values: [[[f64; 2]; 4]; 2],
    /// Largest entry difference against the symbolic pairing.
    pub pairing_delta: f64,
    /// Largest entry difference against the symbolic corrected structure.
    pub j_delta: f64,
    /// Largest difference against the symbolic obstruction values.
    pub s_delta: f64,
    /// Whether the two paths agreed on the classification kind.
    pub kind_agrees: bool,
    /// Whether the two paths selected the same root branch.
    pub branch_agrees: bool,
}

impl OracleResult {
    pub fn max_delta(&self) -> f64 {
        self.pairing_delta.max(self.j_delta).max(self.s_delta)
    }
}

/// Step for the nested brackets in [`numeric_structure`], whose operand
/// components are themselves finite-difference results. Wider than
/// [`BRACKET_STEP`] so the inherited rounding floor shrinks faster than
/// the truncation term grows.
const EXTENSION_STEP: f64 = 1e-4;

/// Per-point data the numeric path shares between stencil evaluations.
struct NumericFiber {
    frame: [[f64; 6]; 6],
    levi: [[[f64; 2]; 4]; 4],
    pairing: [[f64; 2]; 2],
    j_d: [[f64; 4]; 4],
    j_q: [[f64; 2]; 2],
    j_tilde: [[f64; 6]; 6],
    orientation: f64,
}

/// Curvature table from finite-difference brackets of the framing. The
/// refined stencil keeps the table at the rounding floor, because the
/// nested differentiation in [`numeric_structure`] divides whatever error
/// is left here by its own step.
fn fd_levi(dist: &Distribution, p: &Point) -> Result<[[[f64; 2]; 4]; 4]> {
    let mut levi = [[[0.0; 2]; 4]; 4];
    for a in 0..4 {
        for b in (a + 1)..4 {
            let xa = &dist.framing()[a];
            let xb = &dist.framing()[b];
            let fa = |q: &Point| -> Result<[f64; 6]> { Ok(xa.eval(q)?) };
            let fb = |q: &Point| -> Result<[f64; 6]> { Ok(xb.eval(q)?) };
            let br = bracket_refined(&fa, &fb, p, BRACKET_STEP)?;
            let l = dist.project_vector(p, &br)?;
            levi[a][b] = l;
            levi[b][a] = [-l[0], -l[1]];
        }
    }
    Ok(levi)
}

/// Pairing matrix from a curvature table: wedge products of the two
/// curvature forms over the framing volume, symmetrized.
fn pairing_from_levi(levi: &[[[f64; 2]; 4]; 4]) -> [[f64; 2]; 2] {
    // Curvature form tables d(lambda_k)(X_a, X_b) = -lambda_k([X_a, X_b]).
    let dl: [[[f64; 4]; 4]; 2] =
        std::array::from_fn(|k| std::array::from_fn(|a| std::array::from_fn(|b| -levi[a][b][k])));
    let pair = |a: &[[f64; 4]; 4], b: &[[f64; 4]; 4]| -> f64 {
        a[0][1] * b[2][3] - a[0][2] * b[1][3] + a[0][3] * b[1][2] + a[2][3] * b[0][1]
            - a[1][3] * b[0][2]
            + a[1][2] * b[0][3]
    };
    let mut pairing = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            pairing[i][j] = pair(&dl[i], &dl[j]);
        }
    }
    let off = 0.5 * (pairing[0][1] + pairing[1][0]);
    pairing[0][1] = off;
    pairing[1][0] = off;
    pairing
}

/// Finite-difference pairing matrix and its largest entry difference
/// against the symbolic one. Works on any distribution, elliptic or not.
pub fn numeric_pairing(dist: &Distribution, p: &Point) -> Result<([[f64; 2]; 2], f64)> {
    let pairing = pairing_from_levi(&fd_levi(dist, p)?);
    let symbolic = pairing_at(dist, p)?;
    let mut delta = 0.0f64;
    for i in 0..2 {
        for j in 0..2 {
            delta = delta.max((pairing[i][j] - symbolic[i][j]).abs());
        }
    }
    Ok((pairing, delta))
}

fn numeric_fiber(dist: &Distribution, p: &Point, branch: RootBranch) -> Result<NumericFiber> {
    let Some(z_pair) = dist.transverse() else {
        return Err(Error::Invalid(
            "the numeric path needs a transverse pair (Z1, Z2)".into(),
        ));
    };

    let fm = dist.framing_matrix(p)?;
    let z0 = z_pair[0].eval(p)?;
    let z1 = z_pair[1].eval(p)?;
    let frame = [fm[0], fm[1], fm[2], fm[3], z0, z1];

    let levi = fd_levi(dist, p)?;
    let dl: [[[f64; 4]; 4]; 2] =
        std::array::from_fn(|k| std::array::from_fn(|a| std::array::from_fn(|b| -levi[a][b][k])));
    let pairing = pairing_from_levi(&levi);

    let root = find_root(&pairing, branch, p)?;
    let omega: [[Complex64; 4]; 4] = std::array::from_fn(|a| {
        std::array::from_fn(|b| Complex64::new(dl[0][a][b], 0.0) + root.t * dl[1][a][b])
    });
    let fact = factor_dpsi(&omega)?;
    let (j_d_factor, _, _) = j_on_d(&fact)?;
    let j_d: [[f64; 4]; 4] = std::array::from_fn(|r| std::array::from_fn(|c| -j_d_factor[r][c]));
    let j_q = j_on_q(root.t);

    let p_mat = Matrix6::from_fn(|r, c| frame[c][r]);
    let p_inv = p_mat.try_inverse().ok_or(Error::FramingSingular {
        point: *p,
        minor: 0.0,
    })?;
    let mut block = Matrix6::zeros();
    for r in 0..4 {
        for c in 0..4 {
            block[(r, c)] = j_d[r][c];
        }
    }
    for r in 0..2 {
        for c in 0..2 {
            block[(4 + r, 4 + c)] = j_q[r][c];
        }
    }
    let jt = p_mat * block * p_inv;
    let j_tilde: [[f64; 6]; 6] = std::array::from_fn(|r| std::array::from_fn(|c| jt[(r, c)]));

    let mut orientation = 0.0;
    let mut best = 0.0f64;
    for second in 1..4 {
        for zi in 0..2 {
            let v1 = frame[0];
            let v2 = frame[second];
            let v3 = frame[4 + zi];
            let cols = [
                v1,
                mat6_apply(&j_tilde, &v1),
                v2,
                mat6_apply(&j_tilde, &v2),
                v3,
                mat6_apply(&j_tilde, &v3),
            ];
            let d = det6(&cols);
            if d.abs() > best {
                best = d.abs();
                orientation = d.signum();
            }
        }
    }

    Ok(NumericFiber {
        frame,
        levi,
        pairing,
        j_d,
        j_q,
        j_tilde,
        orientation,
    })
}

/// Cache of numeric fibers, so stencil points are computed once.
struct NumericField<'a> {
    dist: &'a Distribution,
    branch: RootBranch,
    fibers: RefCell<BTreeMap<[u64; 6], Rc<NumericFiber>>>,
}

impl<'a> NumericField<'a> {
    fn new(dist: &'a Distribution, branch: RootBranch) -> NumericField<'a> {
        NumericField {
            dist,
            branch,
            fibers: RefCell::new(BTreeMap::new()),
        }
    }

    fn fiber(&self, p: &Point) -> Result<Rc<NumericFiber>> {
        let key = p.0.map(f64::to_bits);
        if let Some(hit) = self.fibers.borrow().get(&key) {
            return Ok(hit.clone());
        }
        let made = Rc::new(numeric_fiber(self.dist, p, self.branch)?);
        self.fibers.borrow_mut().insert(key, made.clone());
        Ok(made)
    }
}

/// The numeric chain at one point: extension defect, correction solve,
/// corrected structure, and obstruction values, all from
/// finite-difference tables.
fn numeric_structure(
    field: &NumericField<'_>,
    p: &Point,
) -> Result<(Rc<NumericFiber>, [[f64; 6]; 6], [[[f64; 2]; 4]; 2])> {
    let dist = field.dist;
    let fiber = field.fiber(p)?;
    let z_pair = dist.transverse().expect("checked by numeric_fiber");
    let h = EXTENSION_STEP;

    let j_of = |x: &'_ crate::exterior::VectorField| {
        let x = x.clone();
        move |q: &Point| -> Result<[f64; 6]> {
            let f = field.fiber(q)?;
            Ok(mat6_apply(&f.j_tilde, &x.eval(q)?))
        }
    };

    let mut stilde = [[[0.0; 2]; 4]; 2];
    let mut stilde_j = [[[0.0; 2]; 4]; 2];
    for u in 0..2 {
        let zu = &z_pair[u];
        let zu_fn = |q: &Point| -> Result<[f64; 6]> { Ok(zu.eval(q)?) };
        let jzu_fn = j_of(zu);
        for b in 0..4 {
            let xb = &dist.framing()[b];
            let xb_fn = |q: &Point| -> Result<[f64; 6]> { Ok(xb.eval(q)?) };
            let jxb_fn = j_of(xb);

            let br0 = bracket(&zu_fn, &xb_fn, p, h)?;
            let q0 = dist.project_vector(p, &br0)?;
            let br1 = bracket(&jzu_fn, &xb_fn, p, h)?;
            let q1 = mat2_apply(&fiber.j_q, &dist.project_vector(p, &br1)?);
            for c in 0..2 {
                stilde[u][b][c] = q0[c] + q1[c];
            }

            let br2 = bracket(&zu_fn, &jxb_fn, p, h)?;
            let q2 = dist.project_vector(p, &br2)?;
            let br3 = bracket(&jzu_fn, &jxb_fn, p, h)?;
            let q3 = mat2_apply(&fiber.j_q, &dist.project_vector(p, &br3)?);
            for c in 0..2 {
                stilde_j[u][b][c] = q2[c] + q3[c];
            }
        }
    }

    // Correction solve L(K Z_u, X_b) = (J S~(u, b) + S~(u, J b)) / 2,
    // with K constrained to anticommute with the complex structures, the
    // same parameterization the symbolic solve uses: the first column of
    // K determines the second, and both blocks of equations feed one
    // least-squares system.
    let jq = &fiber.j_q;
    let jd = &fiber.j_d;
    let transfer: [[f64; 4]; 4] = std::array::from_fn(|r| {
        std::array::from_fn(|c| -(jd[r][c] + if r == c { jq[0][0] } else { 0.0 }) / jq[1][0])
    });
    let mut m = DMatrix::<f64>::zeros(16, 4);
    for b in 0..4 {
        for c in 0..2 {
            for e in 0..4 {
                m[(2 * b + c, e)] = fiber.levi[e][b][c];
                m[(8 + 2 * b + c, e)] =
                    (0..4).map(|a| fiber.levi[a][b][c] * transfer[a][e]).sum();
            }
        }
    }
    let svd = m.clone().svd(true, true);
    let mut r = DVector::<f64>::zeros(16);
    for u in 0..2 {
        for b in 0..4 {
            let js = mat2_apply(jq, &stilde[u][b]);
            r[8 * u + 2 * b] = 0.5 * (js[0] + stilde_j[u][b][0]);
            r[8 * u + 2 * b + 1] = 0.5 * (js[1] + stilde_j[u][b][1]);
        }
    }
    let sol = svd
        .solve(&r, 1e-12)
        .map_err(|e| Error::Invalid(format!("numeric correction solve failed: {e}")))?;
    let k1 = [sol[0], sol[1], sol[2], sol[3]];
    let k2: [f64; 4] = std::array::from_fn(|a| (0..4).map(|e| transfer[a][e] * k1[e]).sum());
    let k = [k1, k2];

    // Obstruction values S(Z_u, X_b) = S~(Z_u, X_b) + J L(K Z_u, X_b).
    let mut s_values = [[[0.0; 2]; 4]; 2];
    for u in 0..2 {
        for b in 0..4 {
            let mut lk = [0.0; 2];
            for a in 0..4 {
                for c in 0..2 {
                    lk[c] += k[u][a] * fiber.levi[a][b][c];
                }
            }
            let jlk = mat2_apply(&fiber.j_q, &lk);
            for c in 0..2 {
                s_values[u][b][c] = stilde[u][b][c] + jlk[c];
            }
        }
    }

    // Corrected structure J = J~ + K q(.).
    let rows = dist.form_rows(p)?;
    let mut kvec = [[0.0f64; 6]; 2];
    for u in 0..2 {
        for a in 0..4 {
            for r in 0..6 {
                kvec[u][r] += k[u][a] * fiber.frame[a][r];
            }
        }
    }
    let mut j_full = fiber.j_tilde;
    for r in 0..6 {
        for c in 0..6 {
            for u in 0..2 {
                j_full[r][c] += kvec[u][r] * rows[u][c];
            }
        }
    }

    Ok((fiber, j_full, s_values))
}

/// Runs the numeric chain at `p` and compares it against the symbolic
/// modules: pairing entries, corrected structure entries, obstruction
/// values, classification kind, and branch choice.
pub fn numeric_oracle(dist: &Distribution, p: &Point) -> Result<OracleResult> {
    let probe = NumericField::new(dist, RootBranch::Upper);
    let branch = if probe.fiber(p)?.orientation >= 0.0 {
        RootBranch::Upper
    } else {
        RootBranch::Lower
    };
    let field = NumericField::new(dist, branch);
    let (fiber, j_full, s_values) = numeric_structure(&field, p)?;
    let classification = classify_matrix(&fiber.pairing, 1e-9);

    let sym_pairing = pairing_at(dist, p)?;
    let sym_class = classify_matrix(&sym_pairing, 1e-9);
    let sym = canonical_j(dist, p)?;
    let sym_s = s_tensor(dist, p)?;

    let mut pairing_delta = 0.0f64;
    for i in 0..2 {
        for j in 0..2 {
            pairing_delta = pairing_delta.max((fiber.pairing[i][j] - sym_pairing[i][j]).abs());
        }
    }
    let mut j_delta = 0.0f64;
    for r in 0..6 {
        for c in 0..6 {
            j_delta = j_delta.max((j_full[r][c] - sym.data.j_full[r][c]).abs());
        }
    }
    let mut s_delta = 0.0f64;
    for u in 0..2 {
        for b in 0..4 {
            for c in 0..2 {
                s_delta = s_delta.max((s_values[u][b][c] - sym_s.values[u][b][c]).abs());
            }
        }
    }

    Ok(OracleResult {
        point: *p,
        branch,
        classification,
        pairing: fiber.pairing,
        j_full,
        s_values,
        pairing_delta,
        j_delta,
        s_delta,
        kind_agrees: classification.kind == sym_class.kind,
        branch_agrees: branch == sym.branch,
    })
}

/// Report of the globalization checks.
#[derive(Debug, Clone)]
pub struct GlobalizationReport {
    pub items: Vec<ConditionReport>,
    pub pass: bool,
}

/// Certifies the band-to-line construction:
///
/// 1. the coordinate map round-trips on the band;
/// 2. each band form carried along the inverse map agrees with the
///    corresponding global form at 50 image points;
/// 3. the global model classifies elliptic along the whole line,
///    including far-out points;
/// 4. its transverse pair passes the four conditions at those points.
pub fn verify_globalization() -> Result<GlobalizationReport> {
    let band_model = load_model("cubic", None)?;
    let line_model = load_model("global", None)?;
    let map = band_to_line_map();

    let mut band_box = Box6::symmetric(0.9);
    band_box.0[1] = [-0.95, 0.95];
    let band_points = band_box.samples(50, DEFAULT_SEED);

    let mut items = Vec::new();

    let roundtrip = map.roundtrip_residual(&band_points)?;
    items.push(ConditionReport {
        name: "band map round trip",
        residual: roundtrip,
        tol: 1e-10,
        pass: roundtrip < 1e-10,
    });

    // The inverse map as a forward object, to carry forms band -> line.
    let inverse = CoordinateMap {
        forward: map.inverse.clone(),
        inverse: map.forward.clone(),
    };
    let names = ["first form carried to the line", "second form carried to the line"];
    for i in 0..2 {
        let carried = band_model.distribution.forms()[i].pullback(&inverse);
        let target = &line_model.distribution.forms()[i];
        let mut worst = 0.0f64;
        for p in &band_points {
            let q = map.apply(p)?;
            for bit in 0..6u8 {
                let a = carried.coefficient(1 << bit).eval_real(&q)?;
                let b = target.coefficient(1 << bit).eval_real(&q)?;
                worst = worst.max((a - b).abs() / a.abs().max(b.abs()).max(1.0));
            }
        }
        items.push(ConditionReport {
            name: names[i],
            residual: worst,
            tol: 1e-9,
            pass: worst < 1e-9,
        });
    }

    let mut line_points = line_model.distribution.domain().samples(50, DEFAULT_SEED);
    for far in [-500.0, 500.0] {
        line_points.push(Point::origin().with(Coordinate::X2, far));
    }

    let mut min_det = f64::INFINITY;
    let mut all_elliptic = true;
    for p in &line_points {
        let c = crate::ellipticity::classify_point(&line_model.distribution, p, 1e-9)?;
        min_det = min_det.min(c.det_normalized);
        all_elliptic &= c.kind == crate::ellipticity::Kind::Elliptic;
    }
    items.push(ConditionReport {
        name: "elliptic along the line",
        residual: min_det,
        tol: 1e-9,
        pass: all_elliptic,
    });

    let reeb = verify_reeb_at(
        &line_model.distribution,
        &line_model.expected.transverse,
        &line_points,
        1e-10,
    )?;
    let reeb_worst = reeb
        .conditions
        .iter()
        .filter(|c| c.name != "frame-transversality")
        .map(|c| c.residual)
        .fold(0.0f64, f64::max);
    items.push(ConditionReport {
        name: "transverse pair on the line",
        residual: reeb_worst,
        tol: 1e-10,
        pass: reeb.pass,
    });

    let pass = items.iter().all(|c| c.pass);
    Ok(GlobalizationReport { items, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ellipticity::Kind;
    use crate::sample::DEFAULT_SEED;

    #[test]
    fn oracle_agrees_with_the_symbolic_path_on_the_cubic() {
        let model = load_model("cubic", None).unwrap();
        let points = model.oracle_domain.samples(4, DEFAULT_SEED);
        for p in &points {
            let r = numeric_oracle(&model.distribution, p).unwrap();
            assert!(r.kind_agrees);
            assert!(r.branch_agrees);
            assert!(r.pairing_delta < 1e-6, "pairing delta {}", r.pairing_delta);
            assert!(r.j_delta < 1e-6, "structure delta {}", r.j_delta);
            assert!(r.s_delta < 1e-5, "obstruction delta {}", r.s_delta);
        }
    }

    #[test]
    fn oracle_vanishes_on_the_flat_model() {
        let model = load_model("flat_elliptic", None).unwrap();
        let p = Point::origin();
        let r = numeric_oracle(&model.distribution, &p).unwrap();
        assert_eq!(r.classification.kind, Kind::Elliptic);
        let mut norm = 0.0f64;
        for u in 0..2 {
            for b in 0..4 {
                for c in 0..2 {
                    norm = norm.max(r.s_values[u][b][c].abs());
                }
            }
        }
        assert!(norm < 1e-7, "oracle obstruction norm {norm}");
    }

    #[test]
    fn oracle_rejects_the_hyperbolic_model() {
        let model = load_model("flat_hyperbolic", None).unwrap();
        let err = numeric_oracle(&model.distribution, &Point::origin()).unwrap_err();
        assert!(err.to_string().contains("non-elliptic"));
    }

    #[test]
    fn globalization_checks_pass() {
        let report = verify_globalization().unwrap();
        for item in &report.items {
            assert!(item.pass, "{}: residual {}", item.name, item.residual);
        }
        assert!(report.pass);
    }
}
