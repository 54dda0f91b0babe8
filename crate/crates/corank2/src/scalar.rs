//! Symbolic scalar expressions over the six fixed coordinates of R^6.
//!
//! Expressions are immutable trees behind `Arc`, so clones are cheap and
//! subtrees are shared. Construction goes through smart constructors that
//! fold constants and strip neutral elements; anything heavier (polynomial
//! normalization, cancellation) is intentionally out of scope, since
//! equality is decided by sampled evaluation, not by structure.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use thiserror::Error;

/// The six coordinates, in their fixed order (x1, x2, y1, y2, z1, z2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Coordinate {
    X1,
    X2,
    Y1,
    Y2,
    Z1,
    Z2,
}

impl Coordinate {
    /// All coordinates in index order.
    pub const ALL: [Coordinate; 6] = [
        Coordinate::X1,
        Coordinate::X2,
        Coordinate::Y1,
        Coordinate::Y2,
        Coordinate::Z1,
        Coordinate::Z2,
    ];

    /// Position in the fixed coordinate order, 0..6.
    pub fn index(self) -> usize {
        match self {
            Coordinate::X1 => 0,
            Coordinate::X2 => 1,
            Coordinate::Y1 => 2,
            Coordinate::Y2 => 3,
            Coordinate::Z1 => 4,
            Coordinate::Z2 => 5,
        }
    }

    /// Inverse of [`Coordinate::index`]. Panics if `i >= 6`.
    pub fn from_index(i: usize) -> Coordinate {
        Coordinate::ALL[i]
    }

    /// Lower-case name, e.g. `"x1"`.
    pub fn name(self) -> &'static str {
        ["x1", "x2", "y1", "y2", "z1", "z2"][self.index()]
    }

    /// Parses a coordinate name.
    pub fn parse(s: &str) -> Option<Coordinate> {
        Coordinate::ALL.into_iter().find(|c| c.name() == s)
    }
}

impl fmt::Display for Coordinate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A point of R^6, components in coordinate order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point(pub [f64; 6]);

impl Point {
    /// The origin.
    pub fn origin() -> Point {
        Point([0.0; 6])
    }

    /// Component along `c`.
    pub fn get(&self, c: Coordinate) -> f64 {
        self.0[c.index()]
    }

    /// Copy of `self` with the component along `c` replaced.
    pub fn with(&self, c: Coordinate, value: f64) -> Point {
        let mut q = *self;
        q.0[c.index()] = value;
        q
    }

    /// Copy of `self` shifted by `h` along coordinate `i`.
    pub fn shifted(&self, i: usize, h: f64) -> Point {
        let mut q = *self;
        q.0[i] += h;
        q
    }

    /// True when every component is finite.
    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {}, {}, {}, {})",
            self.0[0], self.0[1], self.0[2], self.0[3], self.0[4], self.0[5]
        )
    }
}

/// Unary analytic functions available in expressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryFn {
    Sqrt,
    Sin,
    Cos,
    Tan,
    Atan,
    Exp,
}

impl UnaryFn {
    /// Function name as written in the expression grammar.
    pub fn name(self) -> &'static str {
        match self {
            UnaryFn::Sqrt => "sqrt",
            UnaryFn::Sin => "sin",
            UnaryFn::Cos => "cos",
            UnaryFn::Tan => "tan",
            UnaryFn::Atan => "atan",
            UnaryFn::Exp => "exp",
        }
    }

    /// Looks a function up by grammar name.
    pub fn parse(s: &str) -> Option<UnaryFn> {
        [
            UnaryFn::Sqrt,
            UnaryFn::Sin,
            UnaryFn::Cos,
            UnaryFn::Tan,
            UnaryFn::Atan,
            UnaryFn::Exp,
        ]
        .into_iter()
        .find(|f| f.name() == s)
    }

    fn apply(self, z: Complex64) -> Complex64 {
        match self {
            UnaryFn::Sqrt => z.sqrt(),
            UnaryFn::Sin => z.sin(),
            UnaryFn::Cos => z.cos(),
            UnaryFn::Tan => z.tan(),
            UnaryFn::Atan => z.atan(),
            UnaryFn::Exp => z.exp(),
        }
    }
}

#[derive(Debug, PartialEq)]
enum Node {
    Const(Complex64),
    Coord(Coordinate),
    Sum(Vec<ScalarExpr>),
    Product(Vec<ScalarExpr>),
    Neg(ScalarExpr),
    Pow(ScalarExpr, i32),
    Quot(ScalarExpr, ScalarExpr),
    Func(UnaryFn, ScalarExpr),
}

/// Immutable symbolic expression; cheap to clone.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarExpr(Arc<Node>);

/// Whether evaluation works over the reals or over C.
///
/// `Real` reports an error when a square root is taken of a negative real
/// number; `Complex` takes the principal branch instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvalMode {
    #[default]
    Real,
    Complex,
}

/// Evaluation failure, carrying the offending subexpression.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("division by zero in `{expr}`")]
    DivisionByZero { expr: String },
    #[error("sqrt of negative real {value} in `{expr}` (real mode)")]
    NegativeSqrt { value: f64, expr: String },
    #[error("non-finite value from `{expr}`")]
    NonFinite { expr: String },
    #[error("complex value {value} where a real was required, from `{expr}`")]
    ComplexValue { value: Complex64, expr: String },
}

/// Clips an expression rendering for use inside error messages.
fn excerpt(e: &ScalarExpr) -> String {
    let s = e.to_string();
    if s.len() <= 80 {
        s
    } else {
        format!("{}...", &s[..77])
    }
}

impl ScalarExpr {
    fn new(node: Node) -> ScalarExpr {
        ScalarExpr(Arc::new(node))
    }

    /// The constant zero.
    pub fn zero() -> ScalarExpr {
        ScalarExpr::constant(0.0)
    }

    /// The constant one.
    pub fn one() -> ScalarExpr {
        ScalarExpr::constant(1.0)
    }

    /// The imaginary unit.
    pub fn i() -> ScalarExpr {
        ScalarExpr::constant(Complex64::new(0.0, 1.0))
    }

    /// A constant (real or complex).
    pub fn constant(value: impl Into<Complex64>) -> ScalarExpr {
        ScalarExpr::new(Node::Const(value.into()))
    }

    /// The coordinate function `c`.
    pub fn coord(c: Coordinate) -> ScalarExpr {
        ScalarExpr::new(Node::Coord(c))
    }

    /// The constant value if this expression is a bare constant.
    pub fn as_const(&self) -> Option<Complex64> {
        match &*self.0 {
            Node::Const(v) => Some(*v),
            _ => None,
        }
    }

    /// True when this expression is the literal constant 0.
    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(Complex64::new(0.0, 0.0))
    }

    /// Sum of `terms`, flattened, with constants folded and zeros dropped.
    pub fn sum(terms: impl IntoIterator<Item = ScalarExpr>) -> ScalarExpr {
        let mut parts: Vec<ScalarExpr> = Vec::new();
        let mut acc = Complex64::new(0.0, 0.0);
        let mut stack: Vec<ScalarExpr> = terms.into_iter().collect();
        stack.reverse();
        while let Some(t) = stack.pop() {
            match &*t.0 {
                Node::Sum(inner) => {
                    for u in inner.iter().rev() {
                        stack.push(u.clone());
                    }
                }
                Node::Const(v) => acc += v,
                _ => parts.push(t),
            }
        }
        // Constants go last so sums print like `x + 1`.
        if acc != Complex64::new(0.0, 0.0) || parts.is_empty() {
            parts.push(ScalarExpr::constant(acc));
        }
        if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            ScalarExpr::new(Node::Sum(parts))
        }
    }

    /// Product of `factors`, flattened, with constants folded into a single
    /// leading coefficient; a zero factor collapses the whole product.
    pub fn product(factors: impl IntoIterator<Item = ScalarExpr>) -> ScalarExpr {
        let mut parts: Vec<ScalarExpr> = Vec::new();
        let mut coeff = Complex64::new(1.0, 0.0);
        let mut stack: Vec<ScalarExpr> = factors.into_iter().collect();
        stack.reverse();
        while let Some(t) = stack.pop() {
            match &*t.0 {
                Node::Product(inner) => {
                    for u in inner.iter().rev() {
                        stack.push(u.clone());
                    }
                }
                Node::Const(v) => coeff *= v,
                _ => parts.push(t),
            }
        }
        if coeff == Complex64::new(0.0, 0.0) {
            return ScalarExpr::zero();
        }
        if parts.is_empty() {
            return ScalarExpr::constant(coeff);
        }
        if coeff == Complex64::new(-1.0, 0.0) {
            let inner = if parts.len() == 1 {
                parts.pop().unwrap()
            } else {
                ScalarExpr::new(Node::Product(parts))
            };
            return ScalarExpr::neg(inner);
        }
        if coeff != Complex64::new(1.0, 0.0) {
            parts.insert(0, ScalarExpr::constant(coeff));
        }
        if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            ScalarExpr::new(Node::Product(parts))
        }
    }

    /// Negation, folding constants and double negations.
    pub fn neg(e: ScalarExpr) -> ScalarExpr {
        match &*e.0 {
            Node::Const(v) => ScalarExpr::constant(-v),
            Node::Neg(inner) => inner.clone(),
            _ => ScalarExpr::new(Node::Neg(e)),
        }
    }

    /// Integer power. `pow(e, 0)` is 1 and `pow(e, 1)` is `e`.
    pub fn pow(&self, n: i32) -> ScalarExpr {
        if n == 0 {
            return ScalarExpr::one();
        }
        if n == 1 {
            return self.clone();
        }
        if let Some(v) = self.as_const() {
            let w = v.powi(n);
            if w.is_finite() {
                return ScalarExpr::constant(w);
            }
        }
        ScalarExpr::new(Node::Pow(self.clone(), n))
    }

    /// Quotient. Constant denominators are folded into a coefficient.
    pub fn quot(num: ScalarExpr, den: ScalarExpr) -> ScalarExpr {
        if let Some(d) = den.as_const() {
            if d != Complex64::new(0.0, 0.0) {
                let inv = Complex64::new(1.0, 0.0) / d;
                if inv.is_finite() {
                    return ScalarExpr::product([ScalarExpr::constant(inv), num]);
                }
            }
        }
        if num.is_zero() {
            return ScalarExpr::zero();
        }
        ScalarExpr::new(Node::Quot(num, den))
    }

    /// Applies a unary analytic function.
    pub fn func(f: UnaryFn, arg: ScalarExpr) -> ScalarExpr {
        ScalarExpr::new(Node::Func(f, arg))
    }

    /// `sqrt(self)`.
    pub fn sqrt(&self) -> ScalarExpr {
        ScalarExpr::func(UnaryFn::Sqrt, self.clone())
    }

    /// `sin(self)`.
    pub fn sin(&self) -> ScalarExpr {
        ScalarExpr::func(UnaryFn::Sin, self.clone())
    }

    /// `cos(self)`.
    pub fn cos(&self) -> ScalarExpr {
        ScalarExpr::func(UnaryFn::Cos, self.clone())
    }

    /// `tan(self)`.
    pub fn tan(&self) -> ScalarExpr {
        ScalarExpr::func(UnaryFn::Tan, self.clone())
    }

    /// `atan(self)`.
    pub fn atan(&self) -> ScalarExpr {
        ScalarExpr::func(UnaryFn::Atan, self.clone())
    }

    /// `exp(self)`.
    pub fn exp(&self) -> ScalarExpr {
        ScalarExpr::func(UnaryFn::Exp, self.clone())
    }

    /// Evaluates at `p`. See [`EvalMode`] for branch handling.
    pub fn eval(&self, p: &Point, mode: EvalMode) -> Result<Complex64, EvalError> {
        let v = match &*self.0 {
            Node::Const(v) => *v,
            Node::Coord(c) => Complex64::new(p.get(*c), 0.0),
            Node::Sum(terms) => {
                let mut acc = Complex64::new(0.0, 0.0);
                for t in terms {
                    acc += t.eval(p, mode)?;
                }
                acc
            }
            Node::Product(factors) => {
                let mut acc = Complex64::new(1.0, 0.0);
                for t in factors {
                    acc *= t.eval(p, mode)?;
                }
                acc
            }
            Node::Neg(e) => -e.eval(p, mode)?,
            Node::Pow(e, n) => {
                let base = e.eval(p, mode)?;
                if *n < 0 && base.norm() == 0.0 {
                    return Err(EvalError::DivisionByZero { expr: excerpt(self) });
                }
                base.powi(*n)
            }
            Node::Quot(a, b) => {
                let den = b.eval(p, mode)?;
                if den.norm() == 0.0 {
                    return Err(EvalError::DivisionByZero { expr: excerpt(self) });
                }
                a.eval(p, mode)? / den
            }
            Node::Func(f, e) => {
                let arg = e.eval(p, mode)?;
                if *f == UnaryFn::Sqrt
                    && mode == EvalMode::Real
                    && arg.im.abs() <= 1e-14 * arg.norm().max(1.0)
                    && arg.re < 0.0
                {
                    return Err(EvalError::NegativeSqrt {
                        value: arg.re,
                        expr: excerpt(self),
                    });
                }
                f.apply(arg)
            }
        };
        if !v.is_finite() {
            return Err(EvalError::NonFinite { expr: excerpt(self) });
        }
        Ok(v)
    }

    /// Evaluates at `p` in real mode and insists the value is real.
    pub fn eval_real(&self, p: &Point) -> Result<f64, EvalError> {
        let v = self.eval(p, EvalMode::Real)?;
        if v.im.abs() > 1e-12 * v.norm().max(1.0) {
            return Err(EvalError::ComplexValue {
                value: v,
                expr: excerpt(self),
            });
        }
        Ok(v.re)
    }

    /// Partial derivative with respect to `c`.
    pub fn differentiate(&self, c: Coordinate) -> ScalarExpr {
        match &*self.0 {
            Node::Const(_) => ScalarExpr::zero(),
            Node::Coord(d) => {
                if *d == c {
                    ScalarExpr::one()
                } else {
                    ScalarExpr::zero()
                }
            }
            Node::Sum(terms) => ScalarExpr::sum(terms.iter().map(|t| t.differentiate(c))),
            Node::Product(factors) => {
                let mut terms = Vec::with_capacity(factors.len());
                for (i, f) in factors.iter().enumerate() {
                    let df = f.differentiate(c);
                    if df.is_zero() {
                        continue;
                    }
                    let parts = factors
                        .iter()
                        .enumerate()
                        .map(|(j, g)| if i == j { df.clone() } else { g.clone() });
                    terms.push(ScalarExpr::product(parts));
                }
                ScalarExpr::sum(terms)
            }
            Node::Neg(e) => ScalarExpr::neg(e.differentiate(c)),
            Node::Pow(e, n) => ScalarExpr::product([
                ScalarExpr::constant(f64::from(*n)),
                e.pow(n - 1),
                e.differentiate(c),
            ]),
            Node::Quot(a, b) => {
                let num = ScalarExpr::sum([
                    ScalarExpr::product([a.differentiate(c), b.clone()]),
                    ScalarExpr::neg(ScalarExpr::product([a.clone(), b.differentiate(c)])),
                ]);
                ScalarExpr::quot(num, b.pow(2))
            }
            Node::Func(f, e) => {
                let de = e.differentiate(c);
                if de.is_zero() {
                    return ScalarExpr::zero();
                }
                match f {
                    UnaryFn::Sqrt => ScalarExpr::quot(
                        de,
                        ScalarExpr::product([ScalarExpr::constant(2.0), e.sqrt()]),
                    ),
                    UnaryFn::Sin => ScalarExpr::product([de, e.cos()]),
                    UnaryFn::Cos => ScalarExpr::neg(ScalarExpr::product([de, e.sin()])),
                    UnaryFn::Tan => ScalarExpr::product([
                        de,
                        ScalarExpr::sum([ScalarExpr::one(), e.tan().pow(2)]),
                    ]),
                    UnaryFn::Atan => ScalarExpr::quot(
                        de,
                        ScalarExpr::sum([ScalarExpr::one(), e.pow(2)]),
                    ),
                    UnaryFn::Exp => ScalarExpr::product([de, e.exp()]),
                }
            }
        }
    }

    /// Gradient with respect to all six coordinates.
    pub fn gradient(&self) -> [ScalarExpr; 6] {
        Coordinate::ALL.map(|c| self.differentiate(c))
    }

    /// Substitutes `subs[i]` for coordinate `i` throughout.
    pub fn substitute(&self, subs: &[ScalarExpr; 6]) -> ScalarExpr {
        match &*self.0 {
            Node::Const(_) => self.clone(),
            Node::Coord(c) => subs[c.index()].clone(),
            Node::Sum(terms) => ScalarExpr::sum(terms.iter().map(|t| t.substitute(subs))),
            Node::Product(factors) => {
                ScalarExpr::product(factors.iter().map(|t| t.substitute(subs)))
            }
            Node::Neg(e) => ScalarExpr::neg(e.substitute(subs)),
            Node::Pow(e, n) => e.substitute(subs).pow(*n),
            Node::Quot(a, b) => ScalarExpr::quot(a.substitute(subs), b.substitute(subs)),
            Node::Func(f, e) => ScalarExpr::func(*f, e.substitute(subs)),
        }
    }

    /// True when coordinate `c` occurs anywhere in the tree.
    pub fn depends_on(&self, c: Coordinate) -> bool {
        match &*self.0 {
            Node::Const(_) => false,
            Node::Coord(d) => *d == c,
            Node::Sum(v) | Node::Product(v) => v.iter().any(|e| e.depends_on(c)),
            Node::Neg(e) | Node::Func(_, e) => e.depends_on(c),
            Node::Pow(e, _) => e.depends_on(c),
            Node::Quot(a, b) => a.depends_on(c) || b.depends_on(c),
        }
    }

    fn precedence(&self) -> u8 {
        match &*self.0 {
            Node::Sum(_) => 1,
            Node::Product(_) | Node::Quot(_, _) => 2,
            Node::Neg(_) => 3,
            Node::Pow(_, _) => 4,
            Node::Const(v) => {
                // Negative or genuinely complex constants need parentheses
                // in product/power positions.
                if v.im == 0.0 && v.re >= 0.0 {
                    5
                } else if v.re == 0.0 && v.im > 0.0 {
                    5
                } else {
                    0
                }
            }
            _ => 5,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        let needs_parens = self.precedence() < min_prec;
        if needs_parens {
            f.write_str("(")?;
        }
        match &*self.0 {
            Node::Const(v) => {
                if v.im == 0.0 {
                    write!(f, "{}", v.re)?;
                } else if v.re == 0.0 {
                    write!(f, "{}i", v.im)?;
                } else if v.im < 0.0 {
                    write!(f, "{} - {}i", v.re, -v.im)?;
                } else {
                    write!(f, "{} + {}i", v.re, v.im)?;
                }
            }
            Node::Coord(c) => write!(f, "{}", c)?,
            Node::Sum(terms) => {
                for (i, t) in terms.iter().enumerate() {
                    if i == 0 {
                        t.fmt_prec(f, 0)?;
                        continue;
                    }
                    if let Node::Neg(inner) = &*t.0 {
                        f.write_str(" - ")?;
                        inner.fmt_prec(f, 2)?;
                        continue;
                    }
                    if let Some(v) = t.as_const() {
                        if v.im == 0.0 && v.re < 0.0 {
                            write!(f, " - {}", -v.re)?;
                            continue;
                        }
                    }
                    f.write_str(" + ")?;
                    t.fmt_prec(f, 2)?;
                }
            }
            Node::Product(factors) => {
                for (i, t) in factors.iter().enumerate() {
                    if i > 0 {
                        f.write_str("*")?;
                    }
                    t.fmt_prec(f, 2)?;
                }
            }
            Node::Neg(e) => {
                f.write_str("-")?;
                e.fmt_prec(f, 3)?;
            }
            Node::Pow(e, n) => {
                e.fmt_prec(f, 5)?;
                write!(f, "^{}", n)?;
            }
            Node::Quot(a, b) => {
                a.fmt_prec(f, 2)?;
                f.write_str("/")?;
                b.fmt_prec(f, 3)?;
            }
            Node::Func(fun, e) => {
                write!(f, "{}(", fun.name())?;
                e.fmt_prec(f, 0)?;
                f.write_str(")")?;
            }
        }
        if needs_parens {
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl fmt::Display for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

impl From<f64> for ScalarExpr {
    fn from(v: f64) -> ScalarExpr {
        ScalarExpr::constant(v)
    }
}

impl From<Coordinate> for ScalarExpr {
    fn from(c: Coordinate) -> ScalarExpr {
        ScalarExpr::coord(c)
    }
}

impl std::ops::Add for ScalarExpr {
    type Output = ScalarExpr;
    fn add(self, rhs: ScalarExpr) -> ScalarExpr {
        ScalarExpr::sum([self, rhs])
    }
}

impl std::ops::Sub for ScalarExpr {
    type Output = ScalarExpr;
    fn sub(self, rhs: ScalarExpr) -> ScalarExpr {
        ScalarExpr::sum([self, ScalarExpr::neg(rhs)])
    }
}

impl std::ops::Mul for ScalarExpr {
    type Output = ScalarExpr;
    fn mul(self, rhs: ScalarExpr) -> ScalarExpr {
        ScalarExpr::product([self, rhs])
    }
}

impl std::ops::Div for ScalarExpr {
    type Output = ScalarExpr;
    fn div(self, rhs: ScalarExpr) -> ScalarExpr {
        ScalarExpr::quot(self, rhs)
    }
}

impl std::ops::Neg for ScalarExpr {
    type Output = ScalarExpr;
    fn neg(self) -> ScalarExpr {
        ScalarExpr::neg(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(c: Coordinate) -> ScalarExpr {
        ScalarExpr::coord(c)
    }

    #[test]
    fn constant_folding_in_sums_and_products() {
        let e = ScalarExpr::sum([
            ScalarExpr::constant(2.0),
            x(Coordinate::X1),
            ScalarExpr::constant(3.0),
        ]);
        assert_eq!(e.to_string(), "x1 + 5");

        let z = ScalarExpr::product([x(Coordinate::X1), ScalarExpr::zero()]);
        assert!(z.is_zero());

        let m = ScalarExpr::product([ScalarExpr::constant(-1.0), x(Coordinate::Y2)]);
        assert_eq!(m.to_string(), "-y2");
    }

    #[test]
    fn eval_reports_offenders() {
        let p = Point::origin();
        let e = ScalarExpr::quot(ScalarExpr::one(), x(Coordinate::X1));
        match e.eval(&p, EvalMode::Real) {
            Err(EvalError::DivisionByZero { expr }) => assert!(expr.contains("x1")),
            other => panic!("expected division error, got {other:?}"),
        }

        let s = (x(Coordinate::X1) - ScalarExpr::one()).sqrt();
        assert!(matches!(
            s.eval(&p, EvalMode::Real),
            Err(EvalError::NegativeSqrt { .. })
        ));
        let z = s.eval(&p, EvalMode::Complex).unwrap();
        assert!((z - Complex64::new(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn derivative_spot_checks() {
        // d/dx2 of x2^3/3 + x2 is x2^2 + 1.
        let e = x(Coordinate::X2).pow(3) / ScalarExpr::constant(3.0) + x(Coordinate::X2);
        let d = e.differentiate(Coordinate::X2);
        let p = Point([0.0, 0.7, 0.0, 0.0, 0.0, 0.0]);
        let got = d.eval_real(&p).unwrap();
        assert!((got - (0.49 + 1.0)).abs() < 1e-12);

        // Chain rule through atan.
        let a = x(Coordinate::X1).atan();
        let da = a.differentiate(Coordinate::X1);
        let q = Point([2.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!((da.eval_real(&q).unwrap() - 1.0 / 5.0).abs() < 1e-12);
    }

    #[test]
    fn display_precedence() {
        let e = (x(Coordinate::X1) + x(Coordinate::X2)) * x(Coordinate::Y1);
        assert_eq!(e.to_string(), "(x1 + x2)*y1");
        let q = x(Coordinate::X1) / (x(Coordinate::X2) + ScalarExpr::one());
        assert_eq!(q.to_string(), "x1/(x2 + 1)");
        let n = -(x(Coordinate::X1) * x(Coordinate::X2));
        assert_eq!(n.to_string(), "-(x1*x2)");
    }

    #[test]
    fn substitution() {
        let e = x(Coordinate::X2).pow(2) + x(Coordinate::Z1);
        let mut subs = Coordinate::ALL.map(ScalarExpr::coord);
        subs[Coordinate::X2.index()] = x(Coordinate::Y1) + ScalarExpr::one();
        let s = e.substitute(&subs);
        let p = Point([0.0, 9.0, 2.0, 0.0, 5.0, 0.0]);
        assert!((s.eval_real(&p).unwrap() - 14.0).abs() < 1e-12);
    }
}
