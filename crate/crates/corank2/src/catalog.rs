//! Built-in models: the flat elliptic and hyperbolic structures, the
//! cubic model whose obstruction tensor is nonzero, its globalization to
//! all of R^6, and the perturbed cubic family.
//!
//! Every loaded model carries the facts it is expected to satisfy (its
//! classification law, a transverse pair, whether the obstruction tensor
//! vanishes), and [`load_model`] re-checks them on a handful of sample
//! points so that a mistyped coefficient fails at load time instead of
//! deep inside a pipeline.

use std::fmt;

use crate::distribution::{build_distribution, verify_reeb, Distribution};
use crate::ellipticity::{classify_point, Kind};
use crate::exterior::{CoordinateMap, Form, VectorField};
use crate::obstruction::s_tensor;
use crate::parse::{parse_one_form, parse_scalar, parse_vector_field};
use crate::sample::{Box6, SampleOptions, DEFAULT_SEED};
use crate::scalar::{Coordinate, Point, ScalarExpr};
use crate::{Error, Result};

/// Identifiers of the built-in models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelName {
    /// Kernel of the standard complex contact pair; obstruction-free.
    FlatElliptic,
    /// Product of two contact structures; everywhere hyperbolic.
    FlatHyperbolic,
    /// The model with cubic coefficient x2^3/3; elliptic on |x2| < 1 with
    /// nonvanishing obstruction tensor.
    Cubic,
    /// The cubic model carried onto all of R^6 by x2 -> tan(pi x2 / 2).
    Global,
    /// The cubic model sheared by an arbitrary function kappa(y1).
    Perturbed,
}

impl ModelName {
    pub const ALL: [ModelName; 5] = [
        ModelName::FlatElliptic,
        ModelName::FlatHyperbolic,
        ModelName::Cubic,
        ModelName::Global,
        ModelName::Perturbed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelName::FlatElliptic => "flat_elliptic",
            ModelName::FlatHyperbolic => "flat_hyperbolic",
            ModelName::Cubic => "cubic",
            ModelName::Global => "global",
            ModelName::Perturbed => "perturbed",
        }
    }

    pub fn parse(s: &str) -> Option<ModelName> {
        ModelName::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

impl fmt::Display for ModelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Classification a model must produce at every point of its domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassificationLaw {
    EllipticEverywhere,
    HyperbolicEverywhere,
    /// Elliptic exactly on the band |x2| < 1, degenerate on its walls,
    /// hyperbolic outside.
    EllipticBand,
}

impl ClassificationLaw {
    pub fn expected_kind(self, p: &Point) -> Kind {
        match self {
            ClassificationLaw::EllipticEverywhere => Kind::Elliptic,
            ClassificationLaw::HyperbolicEverywhere => Kind::Hyperbolic,
            ClassificationLaw::EllipticBand => {
                let x2 = p.get(Coordinate::X2).abs();
                if (x2 - 1.0).abs() <= 1e-12 {
                    Kind::Degenerate
                } else if x2 < 1.0 {
                    Kind::Elliptic
                } else {
                    Kind::Hyperbolic
                }
            }
        }
    }
}

/// Facts a model is expected to satisfy; re-checked on load.
#[derive(Debug, Clone)]
pub struct Expected {
    pub law: ClassificationLaw,
    /// Candidate transverse pair, verified against the four conditions.
    pub transverse: [VectorField; 2],
    /// `Some(true)`: the obstruction tensor vanishes identically.
    /// `Some(false)`: it is certified nonzero at `witness`.
    /// `None`: the structure pipeline refuses the model (non-elliptic).
    pub obstruction_vanishes: Option<bool>,
    /// Point at which a nonvanishing obstruction is certified.
    pub witness: Option<Point>,
}

/// A built-in model together with its expected facts.
pub struct CatalogModel {
    pub name: ModelName,
    pub distribution: Distribution,
    pub expected: Expected,
    /// Where the double-stencil numeric path stays well conditioned: its
    /// noise floor is the fiberwise rounding error divided by the stencil
    /// step, amplified wherever the structure coefficients steepen, so
    /// pointwise comparisons against it sample from this box rather than
    /// from the full `domain`.
    pub oracle_domain: Box6,
    /// The shear function, present exactly for `Perturbed`.
    pub kappa: Option<ScalarExpr>,
}

fn field(src: &str) -> VectorField {
    parse_vector_field(src).expect("built-in field must parse")
}

fn one_form(src: &str) -> Form {
    parse_one_form(src).expect("built-in form must parse")
}

fn flat_elliptic_parts() -> ([Form; 2], [VectorField; 4]) {
    (
        [
            one_form("dz1 - y1*dx1 + y2*dx2"),
            one_form("dz2 - y1*dx2 - y2*dx1"),
        ],
        [
            field("@x1 + y1*@z1 + y2*@z2"),
            field("@x2 - y2*@z1 + y1*@z2"),
            field("@y1"),
            field("@y2"),
        ],
    )
}

fn flat_hyperbolic_parts() -> ([Form; 2], [VectorField; 4]) {
    (
        [one_form("dz1 - y1*dx1"), one_form("dz2 - y2*dx2")],
        [
            field("@x1 + y1*@z1"),
            field("@x2 + y2*@z2"),
            field("@y1"),
            field("@y2"),
        ],
    )
}

fn cubic_parts() -> ([Form; 2], [VectorField; 4]) {
    (
        [
            one_form("dz1 - y1*dx1 - y2*dx2 - (x2^3/3 + x2 + 2*x1)*dy1"),
            one_form("dz2 - y2*dx1 - y1*dx2"),
        ],
        [
            field("@x1 + y1*@z1 + y2*@z2"),
            field("@x2 + y2*@z1 + y1*@z2"),
            field("@y1 + (x2^3/3 + x2 + 2*x1)*@z1"),
            field("@y2"),
        ],
    )
}

/// The diffeomorphism x2 -> tan(pi x2 / 2) carrying the open band
/// |x2| < 1 onto the whole line, identity on every other coordinate.
pub fn band_to_line_map() -> CoordinateMap {
    let mut forward = Coordinate::ALL.map(ScalarExpr::coord);
    let mut inverse = forward.clone();
    let x2 = ScalarExpr::coord(Coordinate::X2);
    forward[1] = (ScalarExpr::constant(std::f64::consts::FRAC_PI_2) * x2.clone()).tan();
    inverse[1] = ScalarExpr::constant(std::f64::consts::FRAC_2_PI) * x2.atan();
    CoordinateMap { forward, inverse }
}

fn global_parts() -> ([Form; 2], [VectorField; 4]) {
    let x1 = ScalarExpr::coord(Coordinate::X1);
    let x2 = ScalarExpr::coord(Coordinate::X2);
    let y1 = ScalarExpr::coord(Coordinate::Y1);
    let y2 = ScalarExpr::coord(Coordinate::Y2);
    let one = ScalarExpr::one();
    let pi = std::f64::consts::PI;

    // 2 / (pi (1 + x2^2)), the derivative of (2/pi) atan(x2).
    let shrink = ScalarExpr::quot(
        ScalarExpr::constant(2.0 / pi),
        one + x2.clone() * x2.clone(),
    );
    let arc = x2.atan();
    let stack = ScalarExpr::constant(8.0 / (3.0 * pi.powi(3))) * arc.pow(3)
        + ScalarExpr::constant(2.0 / pi) * arc
        + ScalarExpr::constant(2.0) * x1;

    let dx1 = 1u8 << 0;
    let dx2 = 1u8 << 1;
    let dy1 = 1u8 << 2;
    let dz1 = 1u8 << 4;
    let dz2 = 1u8 << 5;

    let beta1 = Form::from_terms(
        1,
        [
            (dz1, ScalarExpr::one()),
            (dx1, -y1.clone()),
            (dx2, -(y2.clone() * shrink.clone())),
            (dy1, -stack.clone()),
        ],
    );
    let beta2 = Form::from_terms(
        1,
        [
            (dz2, ScalarExpr::one()),
            (dx1, -y2.clone()),
            (dx2, -(y1.clone() * shrink.clone())),
        ],
    );

    let z1 = VectorField::basis(Coordinate::Z1);
    let z2 = VectorField::basis(Coordinate::Z2);
    let framing = [
        field("@x1 + y1*@z1 + y2*@z2"),
        VectorField::basis(Coordinate::X2)
            .add(&z1.scale(y2 * shrink.clone()))
            .add(&z2.scale(y1 * shrink)),
        VectorField::basis(Coordinate::Y1).add(&z1.scale(stack)),
        VectorField::basis(Coordinate::Y2),
    ];
    ([beta1, beta2], framing)
}

fn perturbed_parts(kappa: &ScalarExpr) -> ([Form; 2], [VectorField; 4]) {
    let ([l1, l2], [f1, f2, f3, f4]) = cubic_parts();
    let shear1 = l1.sub(&Form::d_coord(Coordinate::Y1).scale(kappa.clone()));
    let sheared3 = f3.add(&VectorField::basis(Coordinate::Z1).scale(kappa.clone()));
    ([shear1, l2], [f1, f2, sheared3, f4])
}

fn transverse_pair() -> [VectorField; 2] {
    [
        VectorField::basis(Coordinate::Z1),
        VectorField::basis(Coordinate::Z2),
    ]
}

fn domain_for(name: ModelName) -> Box6 {
    match name {
        // The x2 axis is unbounded by construction; cap sampling where
        // tan/atan conditioning stays harmless.
        ModelName::Global => Box6([
            [-0.9, 0.9],
            [-1000.0, 1000.0],
            [-0.9, 0.9],
            [-0.9, 0.9],
            [-0.9, 0.9],
            [-0.9, 0.9],
        ]),
        _ => Box6::symmetric(0.9),
    }
}

/// Bounds measured so the numeric-path deltas keep at least a 2x margin
/// under their tolerances at twice the usual sample count. The flat
/// models sit at the rounding floor everywhere; the band models lose
/// accuracy toward the band edge, the global model toward the ends of
/// the line, where its structure components grow without bound.
fn oracle_domain_for(name: ModelName) -> Box6 {
    let x2_range = match name {
        ModelName::FlatElliptic | ModelName::FlatHyperbolic => return Box6::symmetric(0.9),
        ModelName::Cubic => [-0.7, 0.7],
        ModelName::Perturbed => [-0.6, 0.6],
        ModelName::Global => [-0.5, 0.5],
    };
    let mut bx = Box6::symmetric(0.9);
    bx.0[1] = x2_range;
    bx
}

fn expected_for(name: ModelName) -> Expected {
    let witness_band = Point::origin().with(Coordinate::X2, 0.3);
    let (law, vanishes, witness) = match name {
        ModelName::FlatElliptic => (ClassificationLaw::EllipticEverywhere, Some(true), None),
        ModelName::FlatHyperbolic => (ClassificationLaw::HyperbolicEverywhere, None, None),
        ModelName::Cubic => (ClassificationLaw::EllipticBand, Some(false), Some(witness_band)),
        ModelName::Global => (
            ClassificationLaw::EllipticEverywhere,
            Some(false),
            // Image of the band point x2 = 0.5 under tan(pi x2 / 2).
            Some(Point::origin().with(Coordinate::X2, 1.0)),
        ),
        ModelName::Perturbed => (ClassificationLaw::EllipticBand, Some(false), Some(witness_band)),
    };
    Expected {
        law,
        transverse: transverse_pair(),
        obstruction_vanishes: vanishes,
        witness,
    }
}

fn check_expected(model: &CatalogModel) -> Result<()> {
    let dist = &model.distribution;
    let expected = &model.expected;
    let points = dist.domain().samples(10, DEFAULT_SEED);

    for p in &points {
        let c = classify_point(dist, p, 1e-9)?;
        let want = expected.law.expected_kind(p);
        if c.kind != want {
            return Err(Error::Invalid(format!(
                "model {}: classified {} at {:?}, expected {}",
                model.name,
                c.kind.label(),
                p.0,
                want.label()
            )));
        }
    }

    let report = verify_reeb(
        dist,
        &expected.transverse,
        &SampleOptions {
            count: 10,
            seed: DEFAULT_SEED,
            tol: 1e-8,
            retry_budget: 200,
        },
    )?;
    if !report.pass {
        let worst = report
            .conditions
            .iter()
            .map(|c| c.residual)
            .fold(0.0f64, f64::max);
        return Err(Error::SelfCheck {
            what: format!("transverse pair verification on load for {}", model.name),
            residual: worst,
        });
    }

    match expected.obstruction_vanishes {
        Some(true) => {
            for p in points.iter().take(3) {
                let s = s_tensor(dist, p)?;
                if s.norm > 1e-6 {
                    return Err(Error::SelfCheck {
                        what: format!("obstruction expected to vanish for {}", model.name),
                        residual: s.norm,
                    });
                }
            }
        }
        Some(false) => {
            let witness = expected.witness.expect("nonvanishing models carry a witness");
            let s = s_tensor(dist, &witness)?;
            if s.norm < 1e-5 {
                return Err(Error::SelfCheck {
                    what: format!("obstruction expected nonzero for {}", model.name),
                    residual: s.norm,
                });
            }
        }
        None => {}
    }

    Ok(())
}

/// Builds a catalog model by name and re-checks its expected facts.
///
/// `kappa` selects the shear of the `perturbed` family; it must be given
/// exactly for that model and may depend on `y1` only.
pub fn load_model(name: &str, kappa: Option<&str>) -> Result<CatalogModel> {
    let model_name = ModelName::parse(name).ok_or_else(|| {
        let known: Vec<&str> = ModelName::ALL.iter().map(|m| m.as_str()).collect();
        Error::Invalid(format!(
            "unknown model {name:?}; known models: {}",
            known.join(", ")
        ))
    })?;

    let kappa_expr = match (model_name, kappa) {
        (ModelName::Perturbed, Some(src)) => {
            let e = parse_scalar(src)?;
            for c in Coordinate::ALL {
                if c != Coordinate::Y1 && e.depends_on(c) {
                    return Err(Error::Invalid(format!(
                        "kappa must be a function of y1 only, found {c:?} in {src:?}"
                    )));
                }
            }
            Some(e)
        }
        (ModelName::Perturbed, None) => {
            return Err(Error::Invalid(
                "model perturbed needs a shear function; pass kappa (use \"0\" for none)".into(),
            ));
        }
        (_, Some(_)) => {
            return Err(Error::Invalid(format!(
                "kappa only applies to the perturbed model, not to {model_name}"
            )));
        }
        (_, None) => None,
    };

    let (forms, framing) = match model_name {
        ModelName::FlatElliptic => flat_elliptic_parts(),
        ModelName::FlatHyperbolic => flat_hyperbolic_parts(),
        ModelName::Cubic => cubic_parts(),
        ModelName::Global => global_parts(),
        ModelName::Perturbed => perturbed_parts(kappa_expr.as_ref().unwrap()),
    };

    let distribution = build_distribution(
        forms,
        Some(framing),
        Some(transverse_pair()),
        domain_for(model_name),
    )?;

    let model = CatalogModel {
        name: model_name,
        distribution,
        expected: expected_for(model_name),
        oracle_domain: oracle_domain_for(model_name),
        kappa: kappa_expr,
    };
    check_expected(&model)?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ellipticity::pairing_matrix;
    use crate::sample::expr_equal_sampled;

    fn kappa_for(name: ModelName) -> Option<&'static str> {
        (name == ModelName::Perturbed).then_some("sin(y1)")
    }

    #[test]
    fn names_roundtrip() {
        for name in ModelName::ALL {
            assert_eq!(ModelName::parse(name.as_str()), Some(name));
        }
        assert_eq!(ModelName::parse("nonesuch"), None);
    }

    #[test]
    fn every_model_loads_and_passes_its_own_checks() {
        for name in ModelName::ALL {
            let model = load_model(name.as_str(), kappa_for(name)).unwrap();
            assert_eq!(model.name, name);
            assert_eq!(model.kappa.is_some(), name == ModelName::Perturbed);
        }
    }

    #[test]
    fn kappa_argument_is_validated() {
        assert!(load_model("cubic", Some("y1")).is_err());
        assert!(load_model("perturbed", None).is_err());
        assert!(load_model("perturbed", Some("x1*y1")).is_err());
        assert!(load_model("perturbed", Some("sin(")).is_err());
        assert!(load_model("nonesuch", None).is_err());
    }

    #[test]
    fn cubic_classification_follows_the_band_law() {
        let model = load_model("cubic", None).unwrap();
        for (x2, kind) in [
            (0.5, Kind::Elliptic),
            (-0.5, Kind::Elliptic),
            (1.5, Kind::Hyperbolic),
            (1.0, Kind::Degenerate),
        ] {
            let p = Point::origin().with(Coordinate::X2, x2);
            let c = classify_point(&model.distribution, &p, 1e-9).unwrap();
            assert_eq!(c.kind, kind, "x2 = {x2}");
            assert_eq!(model.expected.law.expected_kind(&p), kind);
        }
    }

    #[test]
    fn perturbed_pairing_matches_cubic_for_any_shear() {
        let cubic = load_model("cubic", None).unwrap();
        let perturbed = load_model("perturbed", Some("atan(y1)")).unwrap();
        let a = pairing_matrix(&cubic.distribution);
        let b = pairing_matrix(&perturbed.distribution);
        let opts = SampleOptions {
            count: 30,
            tol: 1e-10,
            ..SampleOptions::default()
        };
        for i in 0..2 {
            for j in 0..2 {
                let cmp =
                    expr_equal_sampled(&a[i][j], &b[i][j], cubic.distribution.domain(), &opts)
                        .unwrap();
                assert!(cmp.equal, "entry ({i},{j}): delta {}", cmp.max_delta);
            }
        }
    }

    #[test]
    fn band_map_roundtrips() {
        let map = band_to_line_map();
        let pts = Box6::symmetric(0.9).samples(50, DEFAULT_SEED);
        assert!(map.roundtrip_residual(&pts).unwrap() < 1e-10);
        let image = map
            .apply(&Point::origin().with(Coordinate::X2, 0.5))
            .unwrap();
        assert!((image.get(Coordinate::X2) - 1.0).abs() < 1e-12);
    }
}
