//! Deterministic sample-point generation and sampled expression equality.
//!
//! Sampling uses Halton low-discrepancy sequences (one prime base per
//! coordinate) rather than a PRNG: runs are reproducible byte for byte, a
//! seed simply offsets the sequence index, and coverage of a box is even
//! for the small sample counts used in verification.

use num_complex::Complex64;
use thiserror::Error;

use crate::scalar::{EvalMode, Point, ScalarExpr};

/// Default seed used across the tool.
pub const DEFAULT_SEED: u64 = 0x5EED;

const BASES: [u64; 6] = [2, 3, 5, 7, 11, 13];

/// The `index`-th element of the Halton sequence in the given base, in (0,1).
pub fn halton(mut index: u64, base: u64) -> f64 {
    let mut factor = 1.0 / base as f64;
    let mut value = 0.0;
    while index > 0 {
        value += factor * (index % base) as f64;
        index /= base;
        factor /= base as f64;
    }
    value
}

/// An axis-aligned box in R^6: `[lo, hi]` per coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box6(pub [[f64; 2]; 6]);

impl Box6 {
    /// The box `[-r, r]^6`.
    pub fn symmetric(r: f64) -> Box6 {
        Box6([[-r, r]; 6])
    }

    /// Center of the box.
    pub fn center(&self) -> Point {
        Point(self.0.map(|[lo, hi]| 0.5 * (lo + hi)))
    }

    /// True when `p` lies inside the box (inclusive).
    pub fn contains(&self, p: &Point) -> bool {
        (0..6).all(|i| p.0[i] >= self.0[i][0] && p.0[i] <= self.0[i][1])
    }

    /// The `k`-th deterministic sample point for the given seed.
    pub fn sample(&self, k: usize, seed: u64) -> Point {
        let offset = seed % 1_000_003;
        let index = offset + k as u64 + 1;
        Point(std::array::from_fn(|i| {
            let [lo, hi] = self.0[i];
            lo + (hi - lo) * halton(index, BASES[i])
        }))
    }

    /// The first `n` sample points for the given seed.
    pub fn samples(&self, n: usize, seed: u64) -> Vec<Point> {
        (0..n).map(|k| self.sample(k, seed)).collect()
    }
}

/// Options for sampled comparisons.
#[derive(Debug, Clone, Copy)]
pub struct SampleOptions {
    /// Number of points that must evaluate successfully.
    pub count: usize,
    /// Sequence seed.
    pub seed: u64,
    /// Tolerance, relative to `max(1, |a|, |b|)` at each point.
    pub tol: f64,
    /// Maximum number of points to try before giving up; points where
    /// either side fails to evaluate are skipped but count against this.
    pub retry_budget: usize,
}

impl Default for SampleOptions {
    fn default() -> SampleOptions {
        SampleOptions {
            count: 100,
            seed: DEFAULT_SEED,
            tol: 1e-9,
            retry_budget: 1000,
        }
    }
}

/// Outcome of a sampled comparison.
#[derive(Debug, Clone, Copy)]
pub struct SampledComparison {
    /// True when every sampled deviation stayed within tolerance.
    pub equal: bool,
    /// Largest deviation seen.
    pub max_delta: f64,
    /// Points that evaluated successfully.
    pub samples: usize,
    /// Points skipped because evaluation failed on either side.
    pub skipped: usize,
}

/// Sampling could not produce enough evaluable points.
#[derive(Debug, Clone, Error)]
#[error("only {obtained} of {required} sample points evaluated within a budget of {budget}")]
pub struct SampleExhausted {
    pub required: usize,
    pub obtained: usize,
    pub budget: usize,
}

/// Compares two expressions by evaluation on deterministic sample points.
pub fn expr_equal_sampled(
    a: &ScalarExpr,
    b: &ScalarExpr,
    domain: &Box6,
    opts: &SampleOptions,
) -> Result<SampledComparison, SampleExhausted> {
    let mut ok = 0usize;
    let mut skipped = 0usize;
    let mut max_delta = 0.0f64;
    let mut equal = true;
    for k in 0..opts.retry_budget {
        if ok == opts.count {
            break;
        }
        let p = domain.sample(k, opts.seed);
        let va = a.eval(&p, EvalMode::Complex);
        let vb = b.eval(&p, EvalMode::Complex);
        match (va, vb) {
            (Ok(x), Ok(y)) => {
                ok += 1;
                let scale = x.norm().max(y.norm()).max(1.0);
                let delta = (x - y).norm() / scale;
                max_delta = max_delta.max(delta);
                if delta > opts.tol {
                    equal = false;
                }
            }
            _ => skipped += 1,
        }
    }
    if ok < opts.count {
        return Err(SampleExhausted {
            required: opts.count,
            obtained: ok,
            budget: opts.retry_budget,
        });
    }
    Ok(SampledComparison {
        equal,
        max_delta,
        samples: ok,
        skipped,
    })
}

/// Convenience wrapper: sampled equality of complex values of two closures.
pub fn values_equal_sampled(
    a: impl Fn(&Point) -> Option<Complex64>,
    b: impl Fn(&Point) -> Option<Complex64>,
    domain: &Box6,
    opts: &SampleOptions,
) -> Result<SampledComparison, SampleExhausted> {
    let mut ok = 0usize;
    let mut skipped = 0usize;
    let mut max_delta = 0.0f64;
    let mut equal = true;
    for k in 0..opts.retry_budget {
        if ok == opts.count {
            break;
        }
        let p = domain.sample(k, opts.seed);
        match (a(&p), b(&p)) {
            (Some(x), Some(y)) => {
                ok += 1;
                let scale = x.norm().max(y.norm()).max(1.0);
                let delta = (x - y).norm() / scale;
                max_delta = max_delta.max(delta);
                if delta > opts.tol {
                    equal = false;
                }
            }
            _ => skipped += 1,
        }
    }
    if ok < opts.count {
        return Err(SampleExhausted {
            required: opts.count,
            obtained: ok,
            budget: opts.retry_budget,
        });
    }
    Ok(SampledComparison {
        equal,
        max_delta,
        samples: ok,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Coordinate;

    #[test]
    fn halton_basics() {
        assert!((halton(1, 2) - 0.5).abs() < 1e-15);
        assert!((halton(2, 2) - 0.25).abs() < 1e-15);
        assert!((halton(3, 2) - 0.75).abs() < 1e-15);
        assert!((halton(1, 3) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn samples_are_deterministic_and_inside() {
        let b = Box6::symmetric(0.9);
        let p1 = b.sample(7, DEFAULT_SEED);
        let p2 = b.sample(7, DEFAULT_SEED);
        assert_eq!(p1, p2);
        assert!(b.contains(&p1));
        let q = b.sample(7, 1234);
        assert_ne!(p1, q);
    }

    #[test]
    fn equality_detects_difference() {
        let a = ScalarExpr::coord(Coordinate::X1) * ScalarExpr::coord(Coordinate::X2);
        let b = ScalarExpr::coord(Coordinate::X2) * ScalarExpr::coord(Coordinate::X1);
        let c = a.clone() + ScalarExpr::constant(1e-6);
        let domain = Box6::symmetric(0.9);
        let opts = SampleOptions::default();
        assert!(expr_equal_sampled(&a, &b, &domain, &opts).unwrap().equal);
        assert!(!expr_equal_sampled(&a, &c, &domain, &opts).unwrap().equal);
    }

    #[test]
    fn singular_points_are_skipped() {
        // 1/x1 vs itself: the axis x1 = 0 is almost surely missed by the
        // sampler, but the budget machinery must tolerate failures anyway.
        let a = ScalarExpr::one() / ScalarExpr::coord(Coordinate::X1);
        let domain = Box6::symmetric(0.9);
        let opts = SampleOptions::default();
        let r = expr_equal_sampled(&a, &a, &domain, &opts).unwrap();
        assert!(r.equal);
        assert_eq!(r.samples, opts.count);
    }
}
