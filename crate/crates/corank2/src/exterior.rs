//! Exterior algebra on R^6 with symbolic coefficients.
//!
//! A differential form is stored as a sparse map from an index-set bitmask
//! (bit `i` set means the factor `dx_i` is present, indices in coordinate
//! order) to its symbolic coefficient. All graded signs are derived from the
//! bitmask combinatorics in one place, so wedge, exterior derivative and
//! interior product stay consistent with each other.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;

use crate::scalar::{Coordinate, EvalError, EvalMode, Point, ScalarExpr};

/// Sign accumulated when moving `dx_b` leftwards past the factors of `mask`
/// that have index below `b`.
fn sign_below(mask: u8, b: u8) -> f64 {
    let below = mask & ((1u8 << b) - 1);
    if below.count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Sign of merging the sorted factor lists `ma` and `mb` into one sorted
/// list, or `None` when they share a factor.
fn merge_sign(ma: u8, mb: u8) -> Option<f64> {
    if ma & mb != 0 {
        return None;
    }
    let mut inversions = 0u32;
    for b in 0..6u8 {
        if mb & (1 << b) != 0 {
            inversions += (ma >> (b + 1)).count_ones();
        }
    }
    Some(if inversions % 2 == 0 { 1.0 } else { -1.0 })
}

/// A differential form of fixed degree with symbolic coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Form {
    degree: u8,
    terms: BTreeMap<u8, ScalarExpr>,
}

impl Form {
    /// The zero form of the given degree (0..=6).
    pub fn zero(degree: u8) -> Form {
        assert!(degree <= 6, "degree out of range");
        Form {
            degree,
            terms: BTreeMap::new(),
        }
    }

    /// A 0-form wrapping a scalar expression.
    pub fn scalar(e: ScalarExpr) -> Form {
        let mut f = Form::zero(0);
        f.add_term(0, e);
        f
    }

    /// The coordinate differential `dx_c`.
    pub fn d_coord(c: Coordinate) -> Form {
        let mut f = Form::zero(1);
        f.add_term(1 << c.index(), ScalarExpr::one());
        f
    }

    /// A 1-form from its six coefficients (coefficient `i` multiplies `dx_i`).
    pub fn one_form(coeffs: [ScalarExpr; 6]) -> Form {
        let mut f = Form::zero(1);
        for (i, c) in coeffs.into_iter().enumerate() {
            f.add_term(1 << i, c);
        }
        f
    }

    /// Builds a form of `degree` from `(bitmask, coefficient)` pairs.
    ///
    /// Panics when a mask's popcount disagrees with `degree`.
    pub fn from_terms(degree: u8, terms: impl IntoIterator<Item = (u8, ScalarExpr)>) -> Form {
        let mut f = Form::zero(degree);
        for (mask, c) in terms {
            f.add_term(mask, c);
        }
        f
    }

    fn add_term(&mut self, mask: u8, coeff: ScalarExpr) {
        assert_eq!(
            mask.count_ones() as u8, self.degree,
            "term mask does not match form degree"
        );
        assert!(mask < 64, "mask out of range");
        if coeff.is_zero() {
            return;
        }
        match self.terms.remove(&mask) {
            None => {
                self.terms.insert(mask, coeff);
            }
            Some(old) => {
                let s = old + coeff;
                if !s.is_zero() {
                    self.terms.insert(mask, s);
                }
            }
        }
    }

    /// Degree of the form.
    pub fn degree(&self) -> u8 {
        self.degree
    }

    /// True when no term survived simplification.
    pub fn is_structurally_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Iterates over `(bitmask, coefficient)` pairs in mask order.
    pub fn terms(&self) -> impl Iterator<Item = (u8, &ScalarExpr)> {
        self.terms.iter().map(|(m, c)| (*m, c))
    }

    /// Coefficient of the given mask (zero when absent).
    pub fn coefficient(&self, mask: u8) -> ScalarExpr {
        self.terms.get(&mask).cloned().unwrap_or_else(ScalarExpr::zero)
    }

    /// Sum of two forms of equal degree.
    pub fn add(&self, other: &Form) -> Form {
        assert_eq!(self.degree, other.degree, "degree mismatch in sum");
        let mut f = self.clone();
        for (mask, c) in other.terms() {
            f.add_term(mask, c.clone());
        }
        f
    }

    /// Difference of two forms of equal degree.
    pub fn sub(&self, other: &Form) -> Form {
        self.add(&other.scale(ScalarExpr::constant(-1.0)))
    }

    /// Multiplies every coefficient by `e`.
    pub fn scale(&self, e: ScalarExpr) -> Form {
        let mut f = Form::zero(self.degree);
        for (mask, c) in self.terms() {
            f.add_term(mask, e.clone() * c.clone());
        }
        f
    }

    /// Wedge product. Degrees add; above top degree the result is zero.
    pub fn wedge(&self, other: &Form) -> Form {
        let degree = self.degree + other.degree;
        if degree > 6 {
            return Form::zero(6);
        }
        let mut f = Form::zero(degree);
        for (ma, ca) in self.terms() {
            for (mb, cb) in other.terms() {
                if let Some(sign) = merge_sign(ma, mb) {
                    f.add_term(
                        ma | mb,
                        ScalarExpr::product([
                            ScalarExpr::constant(sign),
                            ca.clone(),
                            cb.clone(),
                        ]),
                    );
                }
            }
        }
        f
    }

    /// Exterior derivative.
    pub fn exterior_derivative(&self) -> Form {
        if self.degree == 6 {
            return Form::zero(6);
        }
        let mut f = Form::zero(self.degree + 1);
        for (mask, c) in self.terms() {
            for k in 0..6u8 {
                if mask & (1 << k) != 0 {
                    continue;
                }
                let dc = c.differentiate(Coordinate::from_index(k as usize));
                if dc.is_zero() {
                    continue;
                }
                let sign = sign_below(mask, k);
                f.add_term(
                    mask | (1 << k),
                    ScalarExpr::product([ScalarExpr::constant(sign), dc]),
                );
            }
        }
        f
    }

    /// Interior product (contraction with `field` in the first slot).
    pub fn interior_product(&self, field: &VectorField) -> Form {
        if self.degree == 0 {
            return Form::zero(0);
        }
        let mut f = Form::zero(self.degree - 1);
        for (mask, c) in self.terms() {
            for b in 0..6u8 {
                if mask & (1 << b) == 0 {
                    continue;
                }
                let comp = field.component(b as usize);
                if comp.is_zero() {
                    continue;
                }
                let sign = sign_below(mask, b);
                f.add_term(
                    mask & !(1 << b),
                    ScalarExpr::product([
                        ScalarExpr::constant(sign),
                        comp.clone(),
                        c.clone(),
                    ]),
                );
            }
        }
        f
    }

    /// Fully contracts a degree-k form with k fields, symbolically.
    pub fn eval_on_fields(&self, fields: &[&VectorField]) -> ScalarExpr {
        assert_eq!(
            fields.len(),
            self.degree as usize,
            "field count must match degree"
        );
        let mut f = self.clone();
        for x in fields {
            f = f.interior_product(x);
        }
        f.coefficient(0)
    }

    /// Numerically contracts a degree-k form with k complex vectors at `p`.
    pub fn eval_on_vectors(
        &self,
        p: &Point,
        vectors: &[[Complex64; 6]],
    ) -> Result<Complex64, EvalError> {
        assert_eq!(
            vectors.len(),
            self.degree as usize,
            "vector count must match degree"
        );
        // Contract one vector at a time over numeric coefficients.
        let mut terms: BTreeMap<u8, Complex64> = BTreeMap::new();
        for (mask, c) in self.terms() {
            terms.insert(mask, c.eval(p, EvalMode::Complex)?);
        }
        for v in vectors {
            let mut next: BTreeMap<u8, Complex64> = BTreeMap::new();
            for (mask, coeff) in terms {
                for b in 0..6u8 {
                    if mask & (1 << b) == 0 {
                        continue;
                    }
                    let contribution = sign_below(mask, b) * v[b as usize] * coeff;
                    *next.entry(mask & !(1 << b))
                        .or_insert(Complex64::new(0.0, 0.0)) += contribution;
                }
            }
            terms = next;
        }
        Ok(terms.get(&0).copied().unwrap_or(Complex64::new(0.0, 0.0)))
    }

    /// Numerically contracts with real vectors, requiring a real result.
    pub fn eval_on_real_vectors(
        &self,
        p: &Point,
        vectors: &[[f64; 6]],
    ) -> Result<f64, EvalError> {
        let lifted: Vec<[Complex64; 6]> = vectors
            .iter()
            .map(|v| v.map(|x| Complex64::new(x, 0.0)))
            .collect();
        let z = self.eval_on_vectors(p, &lifted)?;
        Ok(z.re)
    }

    /// Pullback along `map` (coefficients composed with the map, coordinate
    /// differentials replaced by the differentials of its components).
    pub fn pullback(&self, map: &CoordinateMap) -> Form {
        let d_components: [Form; 6] = std::array::from_fn(|k| {
            Form::one_form(Coordinate::ALL.map(|c| map.forward[k].differentiate(c)))
        });
        let mut out = Form::zero(self.degree);
        for (mask, c) in self.terms() {
            let mut piece = Form::scalar(c.substitute(&map.forward));
            for b in 0..6u8 {
                if mask & (1 << b) != 0 {
                    piece = piece.wedge(&d_components[b as usize]);
                }
            }
            out = out.add(&piece);
        }
        out
    }
}

impl fmt::Display for Form {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (mask, c)) in self.terms().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            if self.degree == 0 {
                write!(f, "{}", c)?;
                continue;
            }
            write!(f, "({}) ", c)?;
            let mut first = true;
            for b in 0..6u8 {
                if mask & (1 << b) != 0 {
                    if !first {
                        f.write_str("^")?;
                    }
                    write!(f, "d{}", Coordinate::from_index(b as usize))?;
                    first = false;
                }
            }
        }
        Ok(())
    }
}

/// A vector field on R^6, components in coordinate order.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField(pub [ScalarExpr; 6]);

impl VectorField {
    /// The zero field.
    pub fn zero() -> VectorField {
        VectorField(std::array::from_fn(|_| ScalarExpr::zero()))
    }

    /// The coordinate basis field along `c`.
    pub fn basis(c: Coordinate) -> VectorField {
        let mut f = VectorField::zero();
        f.0[c.index()] = ScalarExpr::one();
        f
    }

    /// Component `i` of the field.
    pub fn component(&self, i: usize) -> &ScalarExpr {
        &self.0[i]
    }

    /// Sum of two fields.
    pub fn add(&self, other: &VectorField) -> VectorField {
        VectorField(std::array::from_fn(|i| {
            self.0[i].clone() + other.0[i].clone()
        }))
    }

    /// Multiplies every component by `e`.
    pub fn scale(&self, e: ScalarExpr) -> VectorField {
        VectorField(std::array::from_fn(|i| e.clone() * self.0[i].clone()))
    }

    /// Evaluates the components at `p`, requiring real values.
    pub fn eval(&self, p: &Point) -> Result<[f64; 6], EvalError> {
        let mut out = [0.0; 6];
        for i in 0..6 {
            out[i] = self.0[i].eval_real(p)?;
        }
        Ok(out)
    }

    /// Evaluates the components at `p` over C.
    pub fn eval_complex(&self, p: &Point) -> Result<[Complex64; 6], EvalError> {
        let mut out = [Complex64::new(0.0, 0.0); 6];
        for i in 0..6 {
            out[i] = self.0[i].eval(p, EvalMode::Complex)?;
        }
        Ok(out)
    }

    /// Directional derivative of a scalar along the field.
    pub fn apply_to_scalar(&self, f: &ScalarExpr) -> ScalarExpr {
        ScalarExpr::sum(
            Coordinate::ALL
                .map(|c| self.0[c.index()].clone() * f.differentiate(c)),
        )
    }

    /// Lie bracket `[self, other]`.
    pub fn lie_bracket(&self, other: &VectorField) -> VectorField {
        VectorField(std::array::from_fn(|k| {
            self.apply_to_scalar(&other.0[k]) - other.apply_to_scalar(&self.0[k])
        }))
    }
}

impl fmt::Display for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for c in Coordinate::ALL {
            let comp = &self.0[c.index()];
            if comp.is_zero() {
                continue;
            }
            if !first {
                f.write_str(" + ")?;
            }
            write!(f, "({}) @{}", comp, c)?;
            first = false;
        }
        if first {
            f.write_str("0")?;
        }
        Ok(())
    }
}

/// A diffeomorphism of R^6 given by explicit forward and inverse components.
#[derive(Debug, Clone)]
pub struct CoordinateMap {
    /// Components of the map: new coordinates as functions of the old.
    pub forward: [ScalarExpr; 6],
    /// Components of the inverse map.
    pub inverse: [ScalarExpr; 6],
}

impl CoordinateMap {
    /// The identity map.
    pub fn identity() -> CoordinateMap {
        let id = Coordinate::ALL.map(ScalarExpr::coord);
        CoordinateMap {
            forward: id.clone(),
            inverse: id,
        }
    }

    /// Applies the forward map to a point.
    pub fn apply(&self, p: &Point) -> Result<Point, EvalError> {
        let mut out = [0.0; 6];
        for i in 0..6 {
            out[i] = self.forward[i].eval_real(p)?;
        }
        Ok(Point(out))
    }

    /// Applies the inverse map to a point.
    pub fn apply_inverse(&self, p: &Point) -> Result<Point, EvalError> {
        let mut out = [0.0; 6];
        for i in 0..6 {
            out[i] = self.inverse[i].eval_real(p)?;
        }
        Ok(Point(out))
    }

    /// Pushforward of a vector field along the map.
    pub fn pushforward(&self, field: &VectorField) -> VectorField {
        VectorField(std::array::from_fn(|k| {
            let jk = ScalarExpr::sum(Coordinate::ALL.map(|c| {
                self.forward[k].differentiate(c) * field.0[c.index()].clone()
            }));
            jk.substitute(&self.inverse)
        }))
    }

    /// Largest round-trip error of `inverse(forward(p))` over sample points.
    pub fn roundtrip_residual(&self, points: &[Point]) -> Result<f64, EvalError> {
        let mut worst = 0.0f64;
        for p in points {
            let q = self.apply(p)?;
            let r = self.apply_inverse(&q)?;
            for i in 0..6 {
                worst = worst.max((r.0[i] - p.0[i]).abs());
            }
        }
        Ok(worst)
    }
}
