//! Pointwise classification of the curvature pairing.
//!
//! The symmetric 2x2 matrix `m[i][j] = (d lambda_i ^ d lambda_j)(X1..X4)`
//! represents the wedge-square pairing on the quotient dual, relative to
//! the volume induced by the framing. Rescaling the framing or the forms
//! rescales the matrix conformally, so classification uses the matrix
//! normalized by its largest entry; the raw determinant is reported
//! alongside because its sign pattern along a path is still meaningful.

use crate::distribution::Distribution;
use crate::scalar::{Coordinate, Point, ScalarExpr};
use crate::{Error, Result};

/// Classification of a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Elliptic,
    Hyperbolic,
    Degenerate,
}

impl Kind {
    /// Lower-case label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            Kind::Elliptic => "elliptic",
            Kind::Hyperbolic => "hyperbolic",
            Kind::Degenerate => "degenerate",
        }
    }
}

/// Pointwise classification data.
#[derive(Debug, Clone, Copy)]
pub struct Classification {
    pub kind: Kind,
    /// Pairing matrix at the point (raw scale).
    pub matrix: [[f64; 2]; 2],
    /// Determinant of the raw matrix.
    pub det_raw: f64,
    /// Determinant after dividing the matrix by its largest |entry|.
    pub det_normalized: f64,
    /// The normalization scale (largest |entry|).
    pub scale: f64,
}

/// The symbolic pairing matrix, built once per distribution.
pub fn pairing_matrix(dist: &Distribution) -> &[[ScalarExpr; 2]; 2] {
    dist.pairing_cache().get_or_init(|| {
        let x: [&crate::exterior::VectorField; 4] =
            std::array::from_fn(|i| &dist.framing()[i]);
        std::array::from_fn(|i| {
            std::array::from_fn(|j| {
                dist.dforms()[i]
                    .wedge(&dist.dforms()[j])
                    .eval_on_fields(&x)
            })
        })
    })
}

/// The pairing matrix evaluated at a point.
pub fn pairing_at(dist: &Distribution, p: &Point) -> Result<[[f64; 2]; 2]> {
    let sym = pairing_matrix(dist);
    let mut m = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            m[i][j] = sym[i][j].eval_real(p)?;
        }
    }
    let asym = (m[0][1] - m[1][0]).abs();
    let scale = m.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    if asym > 1e-9 * scale.max(1.0) {
        return Err(Error::SelfCheck {
            what: "curvature pairing symmetry".into(),
            residual: asym,
        });
    }
    // Force exact symmetry for downstream root finding.
    let off = 0.5 * (m[0][1] + m[1][0]);
    m[0][1] = off;
    m[1][0] = off;
    Ok(m)
}

/// Classifies the pairing at `p`. `tol` bounds the normalized determinant
/// below which the point counts as degenerate.
pub fn classify_point(dist: &Distribution, p: &Point, tol: f64) -> Result<Classification> {
    let m = pairing_at(dist, p)?;
    Ok(classify_matrix(&m, tol))
}

/// Classifies an already evaluated pairing matrix.
pub fn classify_matrix(m: &[[f64; 2]; 2], tol: f64) -> Classification {
    let det_raw = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let scale = m.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    let det_normalized = if scale > 0.0 {
        det_raw / (scale * scale)
    } else {
        0.0
    };
    let kind = if scale == 0.0 || det_normalized.abs() <= tol {
        Kind::Degenerate
    } else if det_normalized > 0.0 {
        Kind::Elliptic
    } else {
        Kind::Hyperbolic
    };
    Classification {
        kind,
        matrix: *m,
        det_raw,
        det_normalized,
        scale,
    }
}

/// One grid cell of a scan.
#[derive(Debug, Clone, Copy)]
pub struct ScanSample {
    pub value: f64,
    pub det_raw: f64,
    pub det_normalized: f64,
    pub kind: Kind,
}

/// Classifies along a coordinate segment through `base`, inclusive of both
/// endpoints, with `n` evenly spaced samples (`n >= 2`).
pub fn scan_interval(
    dist: &Distribution,
    coord: Coordinate,
    lo: f64,
    hi: f64,
    n: usize,
    base: &Point,
    tol: f64,
) -> Result<Vec<ScanSample>> {
    if n < 2 {
        return Err(Error::Invalid("a scan needs at least two samples".into()));
    }
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let value = lo + (hi - lo) * (k as f64) / ((n - 1) as f64);
        let p = base.with(coord, value);
        let c = classify_point(dist, &p, tol)?;
        out.push(ScanSample {
            value,
            det_raw: c.det_raw,
            det_normalized: c.det_normalized,
            kind: c.kind,
        });
    }
    Ok(out)
}
