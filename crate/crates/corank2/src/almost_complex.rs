//! The canonical almost complex structure of an elliptic point.
//!
//! Pipeline, all pointwise over a fixed framing `X1..X4` and transverse
//! pair `Z1, Z2`:
//!
//! 1. `find_root`: the curvature pairing, as a quadratic in `t`, has a
//!    conjugate pair of complex roots; pick one branch.
//! 2. `factor_dpsi`: the root makes the restricted 2-form
//!    `d(lambda1 + t lambda2)` decomposable; split it as `alpha ^ beta`.
//! 3. `j_on_d`: the common kernel of `alpha, beta` is a complex 2-plane in
//!    the complexified kernel, so declaring it an eigenspace defines a
//!    real complex structure on the kernel. Both eigenvalue choices are
//!    almost complex and both appear downstream: the `+i` choice
//!    (`j_d_factor`) is the one classical worked forms are written in,
//!    while the `-i` choice (`j_d`) is the one that makes the curvature
//!    complex-bilinear against the quotient structure of step 4, as the
//!    constant-coefficient model shows. Only the latter admits the
//!    correction of step 6.
//! 4. `j_on_q`: the same root identifies the quotient with C.
//! 5. Extend through the frame, keeping the span of `Z1, Z2` invariant;
//!    one extension per kernel structure.
//! 6. `structure_at`: repair the bilinear extension by a map `K` from the
//!    quotient into the kernel, solved from the nondegenerate curvature.
//!
//! Two correction conventions are implemented; see [`KConvention`]. The
//! canonical one is the unique choice satisfying the bracket condition
//! `[u,v] + J[Ju,v] - J[u,Jv] + [Ju,Jv] tangent to the kernel` and making
//! the construction invariant under conjugating the root.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::rc::Rc;

use nalgebra::{DMatrix, DVector, Matrix4, Matrix6, Vector4};
use num_complex::Complex64;

use crate::distribution::{det6, Distribution};
use crate::ellipticity::pairing_at;
use crate::exterior::VectorField;
use crate::fd::{bracket, BRACKET_STEP, GUARD_RADIUS};
use crate::scalar::Point;
use crate::{Error, Result};

/// Which of the two conjugate roots of the pairing quadratic to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RootBranch {
    /// Root with positive imaginary part.
    #[default]
    Upper,
    /// Root with negative imaginary part.
    Lower,
}

impl RootBranch {
    /// The other branch.
    pub fn conjugate(self) -> RootBranch {
        match self {
            RootBranch::Upper => RootBranch::Lower,
            RootBranch::Lower => RootBranch::Upper,
        }
    }
}

/// A root of the pairing quadratic at a point.
#[derive(Debug, Clone, Copy)]
pub struct RootData {
    pub t: Complex64,
    /// The pairing matrix the root was computed from.
    pub pairing: [[f64; 2]; 2],
    /// Relative residual of the quadratic at `t`.
    pub residual: f64,
}

/// Solves `m11 + 2 m12 t + m22 t^2 = 0` for the requested branch.
///
/// Fails with [`Error::NonElliptic`] when the roots are not strictly
/// complex, i.e. when `det m <= 0`.
pub fn find_root(pairing: &[[f64; 2]; 2], branch: RootBranch, p: &Point) -> Result<RootData> {
    let (m11, m12, m22) = (pairing[0][0], pairing[0][1], pairing[1][1]);
    let det = m11 * m22 - m12 * m12;
    if det <= 0.0 {
        return Err(Error::NonElliptic { point: *p, det });
    }
    let re = -m12 / m22;
    let mut im = det.sqrt() / m22;
    if im < 0.0 {
        im = -im;
    }
    if branch == RootBranch::Lower {
        im = -im;
    }
    let t = Complex64::new(re, im);
    let scale = m11.abs().max(m12.abs()).max(m22.abs());
    let value = m11 + 2.0 * m12 * t.re + m22 * (t * t).re
        + Complex64::new(0.0, 2.0 * m12 * t.im + m22 * (t * t).im);
    let residual = value.norm() / (scale * t.norm_sqr().max(1.0));
    Ok(RootData {
        t,
        pairing: *pairing,
        residual,
    })
}

/// `d(lambda1 + t lambda2)` contracted with the framing pairs.
pub fn dpsi_on_framing(
    dist: &Distribution,
    p: &Point,
    t: Complex64,
) -> Result<[[Complex64; 4]; 4]> {
    let levi = dist.levi_symbols();
    let mut omega = [[Complex64::new(0.0, 0.0); 4]; 4];
    for a in 0..4 {
        for b in (a + 1)..4 {
            let d1 = levi.dlambda_on_framing[a][b][0].eval_real(p)?;
            let d2 = levi.dlambda_on_framing[a][b][1].eval_real(p)?;
            let v = Complex64::new(d1, 0.0) + t * d2;
            omega[a][b] = v;
            omega[b][a] = -v;
        }
    }
    Ok(omega)
}

/// A factorization `omega = alpha ^ beta` of a decomposable 2-form given on
/// the framing, coefficients in the dual coframe.
#[derive(Debug, Clone, Copy)]
pub struct Factorization {
    pub alpha: [Complex64; 4],
    pub beta: [Complex64; 4],
    /// Index pair whose entry served as pivot.
    pub pivot: (usize, usize),
    /// Relative reconstruction error `max |alpha_c beta_d - alpha_d beta_c - omega_cd|`.
    pub residual: f64,
}

/// Splits a decomposable antisymmetric 4x4 array as a wedge of two
/// covectors: `alpha = i_{X_a} omega` for the pivot row `a`, and `beta` the
/// matching multiple of `i_{X_b} omega`.
pub fn factor_dpsi(omega: &[[Complex64; 4]; 4]) -> Result<Factorization> {
    let mut pivot = (0usize, 1usize);
    let mut best = 0.0f64;
    for a in 0..4 {
        for b in (a + 1)..4 {
            if omega[a][b].norm() > best {
                best = omega[a][b].norm();
                pivot = (a, b);
            }
        }
    }
    if best < 1e-13 {
        return Err(Error::Invalid(
            "cannot factor a numerically zero 2-form".into(),
        ));
    }
    let (a, b) = pivot;
    let alpha: [Complex64; 4] = std::array::from_fn(|c| omega[a][c]);
    let beta: [Complex64; 4] = std::array::from_fn(|c| omega[b][c] / omega[a][b]);
    let mut residual = 0.0f64;
    for c in 0..4 {
        for d in (c + 1)..4 {
            let r = (alpha[c] * beta[d] - alpha[d] * beta[c] - omega[c][d]).norm();
            residual = residual.max(r / best);
        }
    }
    if residual > 1e-6 {
        return Err(Error::SelfCheck {
            what: "wedge factorization of the curvature root form".into(),
            residual,
        });
    }
    Ok(Factorization {
        alpha,
        beta,
        pivot,
        residual,
    })
}

/// Basis of the common kernel of two covectors on C^4.
fn kernel_basis(alpha: &[Complex64; 4], beta: &[Complex64; 4]) -> Result<[[Complex64; 4]; 2]> {
    let minor = |c1: usize, c2: usize| alpha[c1] * beta[c2] - alpha[c2] * beta[c1];
    let mut piv = (0usize, 1usize);
    let mut best = 0.0f64;
    for c1 in 0..4 {
        for c2 in (c1 + 1)..4 {
            if minor(c1, c2).norm() > best {
                best = minor(c1, c2).norm();
                piv = (c1, c2);
            }
        }
    }
    if best < 1e-13 {
        return Err(Error::SelfCheck {
            what: "rank of the factored covector pair".into(),
            residual: best,
        });
    }
    let (c1, c2) = piv;
    let det = minor(c1, c2);
    let free: Vec<usize> = (0..4).filter(|c| *c != c1 && *c != c2).collect();
    let mut out = [[Complex64::new(0.0, 0.0); 4]; 2];
    for (k, f) in free.iter().enumerate() {
        // Solve [alpha_c1 alpha_c2; beta_c1 beta_c2] (s, u)^T = (alpha_f, beta_f).
        let s = (beta[c2] * alpha[*f] - alpha[c2] * beta[*f]) / det;
        let u = (alpha[c1] * beta[*f] - beta[c1] * alpha[*f]) / det;
        out[k][*f] = Complex64::new(1.0, 0.0);
        out[k][c1] = -s;
        out[k][c2] = -u;
    }
    Ok(out)
}

/// Complex structure on the kernel from a factorization: the common kernel
/// of `alpha, beta` is declared the `+i` eigenspace.
///
/// Returns the real 4x4 matrix in the framing basis (columns are images),
/// the kernel basis, and the largest of the internal residuals (imaginary
/// leakage, `J^2 + I`, eigenvector defect).
pub fn j_on_d(fact: &Factorization) -> Result<([[f64; 4]; 4], [[Complex64; 4]; 2], f64)> {
    let w = kernel_basis(&fact.alpha, &fact.beta)?;
    let i = Complex64::new(0.0, 1.0);
    let cols = [
        Vector4::from_iterator(w[0].iter().copied()),
        Vector4::from_iterator(w[1].iter().copied()),
        Vector4::from_iterator(w[0].iter().map(|z| z.conj())),
        Vector4::from_iterator(w[1].iter().map(|z| z.conj())),
    ];
    let t_mat = Matrix4::from_columns(&cols);
    let t_inv = t_mat.try_inverse().ok_or_else(|| Error::SelfCheck {
        what: "invertibility of the eigenbasis matrix".into(),
        residual: f64::NAN,
    })?;
    let d = Matrix4::from_diagonal(&Vector4::new(i, i, -i, -i));
    let m = t_mat * d * t_inv;

    let mut j = [[0.0f64; 4]; 4];
    let mut residual = 0.0f64;
    for r in 0..4 {
        for c in 0..4 {
            j[r][c] = m[(r, c)].re;
            residual = residual.max(m[(r, c)].im.abs());
        }
    }
    // J^2 = -Id.
    for r in 0..4 {
        for c in 0..4 {
            let mut acc = 0.0;
            for s in 0..4 {
                acc += j[r][s] * j[s][c];
            }
            let expect = if r == c { -1.0 } else { 0.0 };
            residual = residual.max((acc - expect).abs());
        }
    }
    // J w = i w on the kernel basis.
    for wk in &w {
        for r in 0..4 {
            let mut acc = Complex64::new(0.0, 0.0);
            for c in 0..4 {
                acc += j[r][c] * wk[c];
            }
            residual = residual.max((acc - i * wk[r]).norm());
        }
    }
    Ok((j, w, residual))
}

/// Complex structure on the quotient induced by identifying it with C via
/// `v -> lambda1(v) + t lambda2(v)`.
pub fn j_on_q(t: Complex64) -> [[f64; 2]; 2] {
    let (re, im) = (t.re, t.im);
    [[-re / im, -(re * re + im * im) / im], [1.0 / im, re / im]]
}

/// Everything pointwise that does not involve the correction solve.
#[derive(Debug, Clone)]
pub struct FiberStructure {
    pub point: Point,
    pub root: RootData,
    pub factorization: Factorization,
    /// Kernel structure making the curvature complex-bilinear against
    /// `j_q` (factor kernel as `-i` eigenspace). Framing basis, columns
    /// are images. This is the one the correction solve is built on.
    pub j_d: [[f64; 4]; 4],
    /// Kernel structure with the factor kernel as `+i` eigenspace, the
    /// sign the classical worked forms use; equals `-j_d`.
    pub j_d_factor: [[f64; 4]; 4],
    /// Basis of the factor kernel (the `+i` eigenspace of `j_d_factor`).
    pub w_basis: [[Complex64; 4]; 2],
    /// Complex structure on the quotient in the `([Z1],[Z2])` basis.
    pub j_q: [[f64; 2]; 2],
    /// Frame columns `X1..X4, Z1, Z2` as coordinate vectors.
    pub frame: [[f64; 6]; 6],
    /// Extension of `(j_d, j_q)` in coordinates, columns are images.
    pub j_tilde: [[f64; 6]; 6],
    /// Extension of `(j_d_factor, j_q)`; feeds the reduced obstruction
    /// combination.
    pub j_tilde_factor: [[f64; 6]; 6],
    /// Orientation sign of a complex frame against the coordinate volume.
    pub orientation: f64,
    /// Largest internal residual of the fiberwise construction.
    pub residual: f64,
}

pub(crate) fn mat6_apply(m: &[[f64; 6]; 6], v: &[f64; 6]) -> [f64; 6] {
    std::array::from_fn(|r| (0..6).map(|c| m[r][c] * v[c]).sum())
}

pub(crate) fn mat2_apply(m: &[[f64; 2]; 2], v: &[f64; 2]) -> [f64; 2] {
    [
        m[0][0] * v[0] + m[0][1] * v[1],
        m[1][0] * v[0] + m[1][1] * v[1],
    ]
}

/// Builds the fiberwise structure (root, factorization, kernel and
/// quotient structures, extension) at `p`.
pub fn fiber_structure(
    dist: &Distribution,
    p: &Point,
    branch: RootBranch,
) -> Result<FiberStructure> {
    let Some(z_pair) = dist.transverse() else {
        return Err(Error::Invalid(
            "the construction needs a transverse pair (Z1, Z2)".into(),
        ));
    };
    let pairing = pairing_at(dist, p)?;
    let root = find_root(&pairing, branch, p)?;
    let omega = dpsi_on_framing(dist, p, root.t)?;
    let factorization = factor_dpsi(&omega)?;
    let (j_d_factor, w_basis, jd_residual) = j_on_d(&factorization)?;
    let j_d: [[f64; 4]; 4] = std::array::from_fn(|r| std::array::from_fn(|c| -j_d_factor[r][c]));
    let j_q = j_on_q(root.t);

    let fm = dist.framing_matrix(p)?;
    let z0 = z_pair[0].eval(p)?;
    let z1 = z_pair[1].eval(p)?;
    let frame = [fm[0], fm[1], fm[2], fm[3], z0, z1];

    let p_mat = Matrix6::from_fn(|r, c| frame[c][r]);
    let p_inv = p_mat.try_inverse().ok_or(Error::FramingSingular {
        point: *p,
        minor: 0.0,
    })?;
    let extend = |jd: &[[f64; 4]; 4]| -> [[f64; 6]; 6] {
        let mut block = Matrix6::zeros();
        for r in 0..4 {
            for c in 0..4 {
                block[(r, c)] = jd[r][c];
            }
        }
        for r in 0..2 {
            for c in 0..2 {
                block[(4 + r, 4 + c)] = j_q[r][c];
            }
        }
        let jt = p_mat * block * p_inv;
        std::array::from_fn(|r| std::array::from_fn(|c| jt[(r, c)]))
    };
    let j_tilde = extend(&j_d);
    let j_tilde_factor = extend(&j_d_factor);

    // J~^2 = -Id residual, for both extensions.
    let mut residual = jd_residual.max(root.residual).max(factorization.residual);
    for jt in [&j_tilde, &j_tilde_factor] {
        for r in 0..6 {
            for c in 0..6 {
                let mut acc = 0.0;
                for s in 0..6 {
                    acc += jt[r][s] * jt[s][c];
                }
                let expect = if r == c { -1.0 } else { 0.0 };
                residual = residual.max((acc - expect).abs());
            }
        }
    }

    // Orientation: determinant sign of (v, J~v) triples spanning R^6.
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
    if best < 1e-10 {
        return Err(Error::SelfCheck {
            what: "orientation frame for the extension".into(),
            residual: best,
        });
    }

    Ok(FiberStructure {
        point: *p,
        root,
        factorization,
        j_d,
        j_d_factor,
        w_basis,
        j_q,
        frame,
        j_tilde,
        j_tilde_factor,
        orientation,
        residual,
    })
}

/// How the correction `K` is solved from the brackets of the extension.
///
/// Writing `S~(u,v) = [u,v] + J[J~u,v] mod D` for the extension's defect,
/// the two conventions solve, for each quotient direction `u`,
///
/// * `Canonical`: `L(Ku, v) = (J S~(u,v) + S~(u,Jv)) / 2`, the unique
///   right-hand side for which `J = J~ + K` satisfies the bracket
///   condition and is odd under root conjugation;
/// * `Rotated`: `L(Ku, v) = (-S~(u,v) + J S~(u,Jv)) / 2`, which is `J`
///   applied to the canonical right-hand side. It is kept because the
///   reduced obstruction combination (see the obstruction module) is
///   defined through it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KConvention {
    #[default]
    Canonical,
    Rotated,
}

/// Fiberwise structures with a per-point cache, so finite-difference
/// stencils re-use evaluations.
pub struct StructureField<'a> {
    dist: &'a Distribution,
    branch: RootBranch,
    fibers: RefCell<BTreeMap<[u64; 6], Rc<FiberStructure>>>,
}

impl<'a> StructureField<'a> {
    pub fn new(dist: &'a Distribution, branch: RootBranch) -> StructureField<'a> {
        StructureField {
            dist,
            branch,
            fibers: RefCell::new(BTreeMap::new()),
        }
    }

    pub fn dist(&self) -> &'a Distribution {
        self.dist
    }

    pub fn branch(&self) -> RootBranch {
        self.branch
    }

    /// The fiber structure at `p`, cached.
    pub fn fiber(&self, p: &Point) -> Result<Rc<FiberStructure>> {
        let key = p.0.map(f64::to_bits);
        if let Some(hit) = self.fibers.borrow().get(&key) {
            return Ok(hit.clone());
        }
        let made = Rc::new(fiber_structure(self.dist, p, self.branch)?);
        self.fibers.borrow_mut().insert(key, made.clone());
        Ok(made)
    }

    /// Image of a symbolic field under the bilinear extension, as a
    /// pointwise field.
    fn j_tilde_of<'b>(
        &'b self,
        x: &'b VectorField,
    ) -> impl Fn(&Point) -> Result<[f64; 6]> + 'b {
        move |q: &Point| {
            let f = self.fiber(q)?;
            Ok(mat6_apply(&f.j_tilde, &x.eval(q)?))
        }
    }

    /// Image of a symbolic field under the factor-sign extension.
    pub(crate) fn j_tilde_factor_of<'b>(
        &'b self,
        x: &'b VectorField,
    ) -> impl Fn(&Point) -> Result<[f64; 6]> + 'b {
        move |q: &Point| {
            let f = self.fiber(q)?;
            Ok(mat6_apply(&f.j_tilde_factor, &x.eval(q)?))
        }
    }
}

/// The full structure at a point: extension plus correction data.
#[derive(Debug, Clone)]
pub struct StructureData {
    pub fiber: Rc<FiberStructure>,
    /// Curvature values `L(X_a, X_b)` at the point.
    pub levi_vals: [[[f64; 2]; 4]; 4],
    /// Extension defect `S~(Z_u, X_b)` in quotient components.
    pub stilde: [[[f64; 2]; 4]; 2],
    /// `S~(Z_u, J X_b)`.
    pub stilde_j: [[[f64; 2]; 4]; 2],
    /// Correction `K[Z_u]` in framing components, canonical convention.
    pub k: [[f64; 4]; 2],
    /// Correction under the rotated convention.
    pub k_rotated: [[f64; 4]; 2],
    /// Least-squares residuals of the two solves.
    pub k_residual: f64,
    pub k_rotated_residual: f64,
    /// `J = J~ + K compose quotient projection`, canonical convention.
    pub j_full: [[f64; 6]; 6],
    /// Same with the rotated correction.
    pub j_full_rotated: [[f64; 6]; 6],
}

impl StructureData {
    /// Curvature applied to `(K[Z_u], X_b)` for the given convention.
    pub fn l_of_k(&self, convention: KConvention, u: usize, b: usize) -> [f64; 2] {
        let k = match convention {
            KConvention::Canonical => &self.k,
            KConvention::Rotated => &self.k_rotated,
        };
        let mut out = [0.0; 2];
        for a in 0..4 {
            for c in 0..2 {
                out[c] += k[u][a] * self.levi_vals[a][b][c];
            }
        }
        out
    }

    /// The obstruction value `S(Z_u, X_b) = S~(Z_u, X_b) + J L(K Z_u, X_b)`
    /// in quotient components, for the given convention.
    pub fn s_value(&self, convention: KConvention, u: usize, b: usize) -> [f64; 2] {
        let lk = self.l_of_k(convention, u, b);
        let jlk = mat2_apply(&self.fiber.j_q, &lk);
        [
            self.stilde[u][b][0] + jlk[0],
            self.stilde[u][b][1] + jlk[1],
        ]
    }
}

/// Requires the pairing to stay elliptic on the stencil guard around `p`.
fn guard_elliptic(dist: &Distribution, p: &Point) -> Result<()> {
    for j in 0..6 {
        for s in [-1.0, 1.0] {
            let q = p.shifted(j, s * GUARD_RADIUS);
            let m = pairing_at(dist, &q)?;
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            if det <= 0.0 {
                return Err(Error::NonElliptic { point: q, det });
            }
        }
    }
    Ok(())
}

/// Builds the full structure at `p`: fiber data, extension defect, both
/// correction solves, and the corrected endomorphisms.
pub fn structure_at(field: &StructureField<'_>, p: &Point) -> Result<StructureData> {
    let dist = field.dist();
    guard_elliptic(dist, p)?;
    let fiber = field.fiber(p)?;
    let z_pair = dist.transverse().expect("checked by fiber_structure");

    let levi = dist.levi_symbols();
    let mut levi_vals = [[[0.0; 2]; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..2 {
                levi_vals[a][b][c] = levi.lambda_of_bracket[a][b][c].eval_real(p)?;
            }
        }
    }

    // Extension defect S~(Z_u, v) = q([Z_u, v]) + J_Q q([J~ Z_u, v]) for v
    // among the framing fields and their J images.
    let h = BRACKET_STEP;
    let mut stilde = [[[0.0; 2]; 4]; 2];
    let mut stilde_j = [[[0.0; 2]; 4]; 2];
    for u in 0..2 {
        let zu = &z_pair[u];
        let zu_fn = |q: &Point| -> Result<[f64; 6]> { Ok(zu.eval(q)?) };
        let jzu_fn = field.j_tilde_of(zu);
        for b in 0..4 {
            let xb = &dist.framing()[b];
            let xb_fn = |q: &Point| -> Result<[f64; 6]> { Ok(xb.eval(q)?) };
            let jxb_fn = field.j_tilde_of(xb);

            let sym = zu.lie_bracket(xb);
            let q_sym = dist.project_field(p, &sym)?;
            let br = bracket(&jzu_fn, &xb_fn, p, h)?;
            let q_br = mat2_apply(&fiber.j_q, &dist.project_vector(p, &br)?);
            for c in 0..2 {
                stilde[u][b][c] = q_sym[c] + q_br[c];
            }

            let br1 = bracket(&zu_fn, &jxb_fn, p, h)?;
            let q1 = dist.project_vector(p, &br1)?;
            let br2 = bracket(&jzu_fn, &jxb_fn, p, h)?;
            let q2 = mat2_apply(&fiber.j_q, &dist.project_vector(p, &br2)?);
            for c in 0..2 {
                stilde_j[u][b][c] = q1[c] + q2[c];
            }
        }
    }

    // Least-squares solve of L(K Z_u, X_b) = rhs_u(b) over the framing,
    // with K constrained to anticommute with the complex structures:
    // K(J_Q v) = -J_D(K v). In exact arithmetic the two right-hand sides
    // are compatible with that constraint, so solving them independently
    // would only break it at stencil-noise level; building the constraint
    // into the unknowns keeps the corrected structure squaring to -Id at
    // roundoff instead.
    let jq = &fiber.j_q;
    let jd = &fiber.j_d;
    // The constraint applied to the first quotient basis vector gives
    // k_2 = -(jq[0][0] k_1 + J_D k_1) / jq[1][0], and jq[1][0] = 1/Im(t)
    // never vanishes on the elliptic locus; the relation for the second
    // basis vector then follows from J_Q^2 = J_D^2 = -Id. So the first
    // column k_1 determines K, and both blocks of equations feed one
    // least-squares system in k_1.
    let transfer: [[f64; 4]; 4] = std::array::from_fn(|r| {
        std::array::from_fn(|c| -(jd[r][c] + if r == c { jq[0][0] } else { 0.0 }) / jq[1][0])
    });
    let mut m = DMatrix::<f64>::zeros(16, 4);
    for b in 0..4 {
        for c in 0..2 {
            for e in 0..4 {
                m[(2 * b + c, e)] = levi_vals[e][b][c];
                m[(8 + 2 * b + c, e)] =
                    (0..4).map(|a| levi_vals[a][b][c] * transfer[a][e]).sum();
            }
        }
    }
    let svd = m.clone().svd(true, true);
    let solve_for = |rhs_fn: &dyn Fn(usize, usize) -> [f64; 2]| -> Result<([[f64; 4]; 2], f64)> {
        let mut r = DVector::<f64>::zeros(16);
        for u in 0..2 {
            for b in 0..4 {
                let v = rhs_fn(u, b);
                r[8 * u + 2 * b] = v[0];
                r[8 * u + 2 * b + 1] = v[1];
            }
        }
        let k1 = svd
            .solve(&r, 1e-12)
            .map_err(|e| Error::Invalid(format!("correction solve failed: {e}")))?;
        let residual = (&m * &k1 - &r).amax();
        let first = [k1[0], k1[1], k1[2], k1[3]];
        let second =
            std::array::from_fn(|a| (0..4).map(|e| transfer[a][e] * first[e]).sum::<f64>());
        Ok(([first, second], residual))
    };

    let canonical = |u: usize, b: usize| -> [f64; 2] {
        let js = mat2_apply(jq, &stilde[u][b]);
        [
            0.5 * (js[0] + stilde_j[u][b][0]),
            0.5 * (js[1] + stilde_j[u][b][1]),
        ]
    };
    let rotated = |u: usize, b: usize| -> [f64; 2] {
        let jsj = mat2_apply(jq, &stilde_j[u][b]);
        [
            0.5 * (-stilde[u][b][0] + jsj[0]),
            0.5 * (-stilde[u][b][1] + jsj[1]),
        ]
    };
    let (k, k_residual) = solve_for(&canonical)?;
    let (k_rotated, k_rotated_residual) = solve_for(&rotated)?;

    // J = J~ + K q(.) in coordinates: K columns against the form rows.
    let rows = dist.form_rows(p)?;
    let assemble = |kk: &[[f64; 4]; 2]| -> [[f64; 6]; 6] {
        let mut kvec = [[0.0f64; 6]; 2];
        for u in 0..2 {
            for a in 0..4 {
                for r in 0..6 {
                    kvec[u][r] += kk[u][a] * fiber.frame[a][r];
                }
            }
        }
        let mut j = fiber.j_tilde;
        for r in 0..6 {
            for c in 0..6 {
                for u in 0..2 {
                    j[r][c] += kvec[u][r] * rows[u][c];
                }
            }
        }
        j
    };
    let j_full = assemble(&k);
    let j_full_rotated = assemble(&k_rotated);

    Ok(StructureData {
        fiber,
        levi_vals,
        stilde,
        stilde_j,
        k,
        k_rotated,
        k_residual,
        k_rotated_residual,
        j_full,
        j_full_rotated,
    })
}

/// Residuals of the four defining conditions at a point.
#[derive(Debug, Clone, Copy)]
pub struct ConditionResiduals {
    /// i) largest quotient component of `J X_b`.
    pub preserves_kernel: f64,
    /// ii) orientation sign of a complex frame (+1 expected).
    pub orientation: f64,
    /// iii) largest defect of complex bilinearity of the curvature.
    pub curvature_bilinear: f64,
    /// iv) largest quotient component of
    /// `[u,v] + J[Ju,v] - J[u,Jv] + [Ju,Jv]` over basis fields `u` and
    /// framing fields `v`.
    pub bracket_condition: f64,
    /// `J^2 + Id`, largest entry.
    pub j_squared: f64,
}

/// Evaluates the defining conditions for the structure assembled with the
/// given correction convention.
pub fn condition_residuals(
    field: &StructureField<'_>,
    data: &StructureData,
    convention: KConvention,
) -> Result<ConditionResiduals> {
    let dist = field.dist();
    let p = &data.fiber.point;
    let fiber = &data.fiber;
    let (j_full, k) = match convention {
        KConvention::Canonical => (&data.j_full, &data.k),
        KConvention::Rotated => (&data.j_full_rotated, &data.k_rotated),
    };
    let z_pair = dist.transverse().expect("structure requires the pair");

    // i) J preserves the kernel.
    let mut preserves = 0.0f64;
    for b in 0..4 {
        let v = dist.framing()[b].eval(p)?;
        let q = dist.project_vector(p, &mat6_apply(j_full, &v))?;
        preserves = preserves.max(q[0].abs()).max(q[1].abs());
    }

    // J^2 = -Id.
    let mut jsq = 0.0f64;
    for r in 0..6 {
        for c in 0..6 {
            let mut acc = 0.0;
            for s in 0..6 {
                acc += j_full[r][s] * j_full[s][c];
            }
            let expect = if r == c { -1.0 } else { 0.0 };
            jsq = jsq.max((acc - expect).abs());
        }
    }

    // iii) L(J u, v) = J L(u, v) = L(u, J v) on the framing, via the
    // tensorial curvature values.
    let mut bilinear = 0.0f64;
    for a in 0..4 {
        for b in 0..4 {
            let mut l_ja_b = [0.0; 2];
            let mut l_a_jb = [0.0; 2];
            for s in 0..4 {
                for c in 0..2 {
                    l_ja_b[c] += fiber.j_d[s][a] * data.levi_vals[s][b][c];
                    l_a_jb[c] += fiber.j_d[s][b] * data.levi_vals[a][s][c];
                }
            }
            let jl = mat2_apply(&fiber.j_q, &data.levi_vals[a][b]);
            for c in 0..2 {
                bilinear = bilinear.max((l_ja_b[c] - jl[c]).abs());
                bilinear = bilinear.max((l_a_jb[c] - jl[c]).abs());
            }
        }
    }

    // iv) the bracket condition, u over all six basis fields, v over the
    // framing. Corrections enter tensorially through the curvature, so
    // stencils only involve the extension.
    let h = BRACKET_STEP;
    let mut combo = 0.0f64;
    let basis_fields: Vec<(&VectorField, Option<usize>)> = dist
        .framing()
        .iter()
        .map(|x| (x, None))
        .chain(z_pair.iter().enumerate().map(|(i, z)| (z, Some(i))))
        .collect();
    for (u_field, zu_index) in &basis_fields {
        let ju_fn = field.j_tilde_of(u_field);
        let u_fn = |q: &Point| -> Result<[f64; 6]> { Ok(u_field.eval(q)?) };
        for b in 0..4 {
            let xb = &dist.framing()[b];
            let jxb_fn = field.j_tilde_of(xb);

            let q_uv = dist.project_field(p, &u_field.lie_bracket(xb))?;
            let br_ju_v = bracket(&ju_fn, &(|q: &Point| xb.eval(q).map_err(Into::into)), p, h)?;
            let mut q_ju_v = dist.project_vector(p, &br_ju_v)?;
            let br_u_jv = bracket(&u_fn, &jxb_fn, p, h)?;
            let q_u_jv = dist.project_vector(p, &br_u_jv)?;
            let br_ju_jv = bracket(&ju_fn, &jxb_fn, p, h)?;
            let mut q_ju_jv = dist.project_vector(p, &br_ju_jv)?;

            // K contributions reduce through the curvature: K q(u) is a
            // kernel field, so only its value at p matters.
            if let Some(i) = zu_index {
                for c in 0..2 {
                    let mut l_ku_v = 0.0;
                    let mut l_ku_jv = 0.0;
                    for a in 0..4 {
                        l_ku_v += k[*i][a] * data.levi_vals[a][b][c];
                        for s in 0..4 {
                            l_ku_jv +=
                                k[*i][a] * fiber.j_d[s][b] * data.levi_vals[a][s][c];
                        }
                    }
                    q_ju_v[c] += l_ku_v;
                    q_ju_jv[c] += l_ku_jv;
                }
            }

            let jq_ju_v = mat2_apply(&fiber.j_q, &q_ju_v);
            let jq_u_jv = mat2_apply(&fiber.j_q, &q_u_jv);
            for c in 0..2 {
                let val = q_uv[c] + jq_ju_v[c] - jq_u_jv[c] + q_ju_jv[c];
                combo = combo.max(val.abs());
            }
        }
    }

    Ok(ConditionResiduals {
        preserves_kernel: preserves,
        orientation: fiber.orientation,
        curvature_bilinear: bilinear,
        bracket_condition: combo,
        j_squared: jsq,
    })
}

/// The canonical structure at a point, with branch bookkeeping.
#[derive(Debug, Clone)]
pub struct CanonicalStructure {
    pub data: StructureData,
    pub branch: RootBranch,
    /// True when the upper root produced the wrong orientation and the
    /// conjugate branch was substituted.
    pub root_flipped: bool,
}

/// Builds the canonical structure at `p`: upper root first, conjugated
/// when the orientation comes out negative.
pub fn canonical_j(dist: &Distribution, p: &Point) -> Result<CanonicalStructure> {
    let field = StructureField::new(dist, RootBranch::Upper);
    let fiber = field.fiber(p)?;
    if fiber.orientation >= 0.0 {
        let data = structure_at(&field, p)?;
        return Ok(CanonicalStructure {
            data,
            branch: RootBranch::Upper,
            root_flipped: false,
        });
    }
    let field = StructureField::new(dist, RootBranch::Lower);
    let data = structure_at(&field, p)?;
    Ok(CanonicalStructure {
        data,
        branch: RootBranch::Lower,
        root_flipped: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::build_distribution;
    use crate::exterior::Form;
    use crate::parse::{parse_one_form, parse_vector_field};
    use crate::sample::Box6;
    use crate::scalar::Coordinate;

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

    fn p03() -> Point {
        Point([0.0, 0.3, 0.0, 0.0, 0.0, 0.0])
    }

    #[test]
    fn root_of_cubic_pairing() {
        let a = 0.3f64 * 0.3 + 1.0;
        let m = [[2.0, -a], [-a, 2.0]];
        let r = find_root(&m, RootBranch::Upper, &p03()).unwrap();
        let delta = (4.0 - a * a).sqrt();
        assert!((r.t - Complex64::new(a / 2.0, delta / 2.0)).norm() < 1e-14);
        assert!(r.residual < 1e-14);
        // |t| = 1 for this family.
        assert!((r.t.norm() - 1.0).abs() < 1e-14);
        let lower = find_root(&m, RootBranch::Lower, &p03()).unwrap();
        assert!((lower.t - r.t.conj()).norm() < 1e-15);
    }

    #[test]
    fn nonelliptic_matrix_is_rejected() {
        let m = [[0.0, 1.0], [1.0, 0.0]];
        let e = find_root(&m, RootBranch::Upper, &Point::origin()).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("non-elliptic"), "{msg}");
        assert!(msg.contains("det=-1"), "{msg}");
    }

    #[test]
    fn factorization_reconstructs() {
        let dist = cubic();
        let p = p03();
        let pairing = pairing_at(&dist, &p).unwrap();
        let root = find_root(&pairing, RootBranch::Upper, &p).unwrap();
        let omega = dpsi_on_framing(&dist, &p, root.t).unwrap();
        let f = factor_dpsi(&omega).unwrap();
        assert!(f.residual < 1e-12);
        // The factor pair annihilates exactly the frozen kernel directions
        // u1 = X2 + (t - x2^2 - 1) X1 and u2 = X4 + t X3.
        let t = root.t;
        let a = Complex64::new(0.3f64 * 0.3 + 1.0, 0.0);
        let u1 = [t - a, Complex64::new(1.0, 0.0), 0.0.into(), 0.0.into()];
        let u2 = [0.0.into(), 0.0.into(), t, Complex64::new(1.0, 0.0)];
        for u in [u1, u2] {
            let av: Complex64 = (0..4).map(|c| f.alpha[c] * u[c]).sum();
            let bv: Complex64 = (0..4).map(|c| f.beta[c] * u[c]).sum();
            assert!(av.norm() < 1e-12 && bv.norm() < 1e-12);
        }
    }

    #[test]
    fn kernel_structure_matches_closed_form_cubic() {
        let dist = cubic();
        let p = p03();
        let f = fiber_structure(&dist, &p, RootBranch::Upper).unwrap();
        let a = 0.3f64 * 0.3 + 1.0;
        let delta = (4.0 - a * a).sqrt();
        let c = a / delta;
        let g = 2.0 / delta;
        // Factor-sign structure: J X2 = -g X1 + c X2 and friends.
        let expect = [
            [-c, -g, 0.0, 0.0],
            [g, c, 0.0, 0.0],
            [0.0, 0.0, c, -g],
            [0.0, 0.0, g, -c],
        ];
        for r in 0..4 {
            for cc in 0..4 {
                assert!(
                    (f.j_d_factor[r][cc] - expect[r][cc]).abs() < 1e-12,
                    "J_D_factor[{r}][{cc}] = {} want {}",
                    f.j_d_factor[r][cc],
                    expect[r][cc]
                );
                assert!((f.j_d[r][cc] + expect[r][cc]).abs() < 1e-12);
            }
        }
        // Quotient action on the second transverse direction.
        assert!((f.j_q[0][1] + g).abs() < 1e-12);
        assert!((f.j_q[1][1] - c).abs() < 1e-12);
        assert!(f.residual < 1e-12);
        assert!(f.orientation > 0.0);
    }

    #[test]
    fn bilinear_pairing_is_the_one_compatible_with_the_curvature() {
        // L(J u, v) = J L(u, v) must hold for j_d against j_q; the factor
        // sign satisfies it with a minus instead.
        let dist = cubic();
        let p = p03();
        let f = fiber_structure(&dist, &p, RootBranch::Upper).unwrap();
        let levi = dist.levi_symbols();
        let mut l = [[[0.0; 2]; 4]; 4];
        for a in 0..4 {
            for b in 0..4 {
                for k in 0..2 {
                    l[a][b][k] = levi.lambda_of_bracket[a][b][k].eval_real(&p).unwrap();
                }
            }
        }
        for a in 0..4 {
            for b in 0..4 {
                let mut l_ja_b = [0.0; 2];
                for s in 0..4 {
                    for k in 0..2 {
                        l_ja_b[k] += f.j_d[s][a] * l[s][b][k];
                    }
                }
                let jl = mat2_apply(&f.j_q, &l[a][b]);
                for k in 0..2 {
                    assert!(
                        (l_ja_b[k] - jl[k]).abs() < 1e-12,
                        "bilinearity defect at ({a},{b},{k})"
                    );
                }
            }
        }
    }

    #[test]
    fn flat_structure_is_multiplication_by_i() {
        let dist = flat();
        let p = Point([0.2, -0.1, 0.4, 0.3, 0.0, 0.0]);
        let f = fiber_structure(&dist, &p, RootBranch::Upper).unwrap();
        assert!((f.root.t - Complex64::new(0.0, 1.0)).norm() < 1e-14);
        // The bilinear structure is multiplication by i in the complex
        // chart x1 + i x2, y1 + i y2, z1 + i z2:
        // J X1 = X2, J X2 = -X1, J X3 = X4, J X4 = -X3.
        let expect = [
            [0.0, -1.0, 0.0, 0.0],
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, -1.0],
            [0.0, 0.0, 1.0, 0.0],
        ];
        for r in 0..4 {
            for c in 0..4 {
                assert!((f.j_d[r][c] - expect[r][c]).abs() < 1e-12);
                assert!((f.j_d_factor[r][c] + expect[r][c]).abs() < 1e-12);
            }
        }
        assert_eq!(f.j_q, [[0.0, -1.0], [1.0, 0.0]]);
        // Multiplication by i in coordinates, on the nose.
        let mult_i = {
            let mut m = [[0.0f64; 6]; 6];
            for pair in [(0, 1), (2, 3), (4, 5)] {
                m[pair.1][pair.0] = 1.0;
                m[pair.0][pair.1] = -1.0;
            }
            m
        };
        for r in 0..6 {
            for c in 0..6 {
                assert!((f.j_tilde[r][c] - mult_i[r][c]).abs() < 1e-12);
            }
        }
        assert!(f.orientation > 0.0);
    }

    #[test]
    fn flat_correction_vanishes() {
        let dist = flat();
        let field = StructureField::new(&dist, RootBranch::Upper);
        let data = structure_at(&field, &Point([0.2, -0.1, 0.4, 0.3, 0.1, -0.2])).unwrap();
        for u in 0..2 {
            for a in 0..4 {
                assert!(data.k[u][a].abs() < 1e-8, "k[{u}][{a}] = {}", data.k[u][a]);
            }
        }
        assert!(data.k_residual < 1e-8);
    }

    #[test]
    fn canonical_correction_satisfies_bracket_condition() {
        let dist = cubic();
        let field = StructureField::new(&dist, RootBranch::Upper);
        let data = structure_at(&field, &p03()).unwrap();
        assert!(data.k_residual < 1e-8, "lsq residual {}", data.k_residual);

        let good = condition_residuals(&field, &data, KConvention::Canonical).unwrap();
        assert!(good.preserves_kernel < 1e-10);
        assert!(good.j_squared < 1e-9);
        assert!(good.curvature_bilinear < 1e-10);
        assert!(good.bracket_condition < 1e-6, "{good:?}");
        assert!(good.orientation > 0.0);

        // The rotated convention leaves an order-one defect in the bracket
        // condition; that is what singles the canonical one out.
        let bad = condition_residuals(&field, &data, KConvention::Rotated).unwrap();
        assert!(bad.bracket_condition > 1e-2, "{bad:?}");
    }

    #[test]
    fn conjugating_the_root_negates_the_canonical_correction() {
        let dist = cubic();
        let p = p03();
        let up = StructureField::new(&dist, RootBranch::Upper);
        let down = StructureField::new(&dist, RootBranch::Lower);
        let du = structure_at(&up, &p).unwrap();
        let dl = structure_at(&down, &p).unwrap();
        for u in 0..2 {
            for a in 0..4 {
                assert!(
                    (dl.k[u][a] + du.k[u][a]).abs() < 1e-7,
                    "canonical correction must be odd under conjugation"
                );
                assert!(
                    (dl.k_rotated[u][a] - du.k_rotated[u][a]).abs() < 1e-7,
                    "rotated correction is even under conjugation"
                );
            }
        }
        // Odd correction + odd extension = odd structure.
        for r in 0..6 {
            for c in 0..6 {
                assert!((dl.j_full[r][c] + du.j_full[r][c]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn guard_rejects_near_degenerate_points() {
        let dist = cubic();
        let field = StructureField::new(&dist, RootBranch::Upper);
        // x2 within the guard radius of the degeneracy locus |x2| = 1.
        let p = Point([0.0, 1.0 - 0.5 * GUARD_RADIUS, 0.0, 0.0, 0.0, 0.0]);
        let e = structure_at(&field, &p).unwrap_err();
        assert!(matches!(e, Error::NonElliptic { .. }));
    }

    #[test]
    fn degree_checked_in_build() {
        let bad = Form::zero(2);
        let ok = parse_one_form("dz2 - y2*dx1").unwrap();
        let e = build_distribution([bad, ok], None, None, Box6::symmetric(0.5));
        assert!(e.is_err());
    }

    #[test]
    fn extension_of_second_transverse_direction_cubic() {
        // J~ Z2 = (-2/Delta) Z1 + ((x2^2+1)/Delta) Z2 at x2 = 0.3.
        let dist = cubic();
        let f = fiber_structure(&dist, &p03(), RootBranch::Upper).unwrap();
        let z2 = [0.0, 0.0, 0.0, 0.0, 0.0, 1.0];
        let img = mat6_apply(&f.j_tilde, &z2);
        let a = 0.3f64 * 0.3 + 1.0;
        let delta = (4.0 - a * a).sqrt();
        let expect = [0.0, 0.0, 0.0, 0.0, -2.0 / delta, a / delta];
        for i in 0..6 {
            assert!((img[i] - expect[i]).abs() < 1e-12, "component {i}");
        }
    }

    #[test]
    fn canonical_j_reports_branch() {
        let dist = cubic();
        let c = canonical_j(&dist, &p03()).unwrap();
        assert_eq!(c.branch, RootBranch::Upper);
        assert!(!c.root_flipped);
        assert!(c.data.fiber.orientation > 0.0);
    }

    #[test]
    fn parse_helper_used_by_tests_is_sane() {
        let v = parse_vector_field("@z1").unwrap();
        assert_eq!(v.eval(&Point::origin()).unwrap(), [0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    }
}
