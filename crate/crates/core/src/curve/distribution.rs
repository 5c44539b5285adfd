use serde::{Deserialize, Serialize};

use super::CurveError;
use crate::Scalar;

/// Residues smaller than this fraction of the operands are snapped to zero
/// when levels are combined, so that burning exactly what was minted leaves
/// an empty distribution.
const DUST: f64 = 1e-12;

/// Piecewise-constant liquidity over price.
///
/// `levels[k]` applies on `[breakpoints[k], breakpoints[k + 1])`. Evaluation
/// is right-continuous: a price sitting exactly on a breakpoint reads the
/// level of the interval above it. Outside the declared support the
/// liquidity is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiquidityDistribution<S> {
    breakpoints: Vec<S>,
    levels: Vec<S>,
}

impl<S: Scalar> Default for LiquidityDistribution<S> {
    fn default() -> Self {
        Self::zero()
    }
}

impl<S: Scalar> LiquidityDistribution<S> {
    pub fn zero() -> Self {
        Self {
            breakpoints: Vec::new(),
            levels: Vec::new(),
        }
    }

    pub fn new(breakpoints: Vec<S>, levels: Vec<S>) -> Result<Self, CurveError> {
        let dist = Self {
            breakpoints,
            levels,
        };
        dist.validate()?;
        Ok(dist)
    }

    /// A single interval `[lower, upper)` carrying `level`.
    pub fn interval(lower: S, upper: S, level: S) -> Result<Self, CurveError> {
        Self::new(vec![lower, upper], vec![level])
    }

    pub fn validate(&self) -> Result<(), CurveError> {
        if self.breakpoints.is_empty() && self.levels.is_empty() {
            return Ok(());
        }
        if self.levels.len() + 1 != self.breakpoints.len() {
            return Err(CurveError::InvalidDistribution(format!(
                "{} breakpoints for {} levels",
                self.breakpoints.len(),
                self.levels.len()
            )));
        }
        if self.breakpoints.iter().any(|b| b.is_nan() || *b < S::zero()) {
            return Err(CurveError::InvalidDistribution(
                "breakpoints must be non-negative numbers".into(),
            ));
        }
        if self.breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CurveError::InvalidDistribution(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        if self.levels.iter().any(|l| !l.is_finite() || *l < S::zero()) {
            return Err(CurveError::InvalidDistribution(
                "levels must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn breakpoints(&self) -> &[S] {
        &self.breakpoints
    }

    pub fn levels(&self) -> &[S] {
        &self.levels
    }

    /// True when no interval carries positive liquidity.
    pub fn is_zero(&self) -> bool {
        self.levels.iter().all(|l| *l == S::zero())
    }

    /// `(lower, upper, level)` for every interval, in price order.
    pub fn intervals(&self) -> impl Iterator<Item = (S, S, S)> + '_ {
        self.breakpoints
            .windows(2)
            .zip(&self.levels)
            .map(|(w, l)| (w[0], w[1], *l))
    }

    /// L(p), right-continuous at breakpoints and zero outside the support.
    pub fn level_at(&self, price: S) -> S {
        let idx = self.breakpoints.partition_point(|b| *b <= price);
        if idx == 0 || idx >= self.breakpoints.len() {
            S::zero()
        } else {
            self.levels[idx - 1]
        }
    }

    /// Lowest and highest breakpoint, if any.
    pub fn support(&self) -> Option<(S, S)> {
        Some((*self.breakpoints.first()?, *self.breakpoints.last()?))
    }

    pub fn scaled(&self, factor: S) -> Self {
        if factor == S::zero() {
            return Self::zero();
        }
        Self {
            breakpoints: self.breakpoints.clone(),
            levels: self.levels.iter().map(|l| *l * factor).collect(),
        }
    }

    /// Pointwise sum over the union of both breakpoint sets.
    pub fn add(&self, other: &Self) -> Self {
        self.combine(other, |a, b| Ok::<S, ()>(a + b))
            .expect("addition is infallible")
    }

    pub fn sum<'a, I>(dists: I) -> Self
    where
        I: IntoIterator<Item = &'a Self>,
    {
        let dists: Vec<&Self> = dists.into_iter().collect();
        let mut breakpoints: Vec<S> = dists
            .iter()
            .flat_map(|d| d.breakpoints.iter().copied())
            .collect();
        breakpoints.sort_by(|a, b| a.partial_cmp(b).expect("breakpoints are not NaN"));
        breakpoints.dedup();
        if breakpoints.len() < 2 {
            return Self::zero();
        }
        let levels = breakpoints[..breakpoints.len() - 1]
            .iter()
            .map(|b| dists.iter().map(|d| d.level_at(*b)).fold(S::zero(), |a, v| a + v))
            .collect();
        Self {
            breakpoints,
            levels,
        }
        .compact()
    }

    /// Adds `delta` on `[lower, upper)`. Fails if any level would become
    /// negative; residues within dust of zero are snapped to zero.
    pub fn apply_delta(&self, lower: S, upper: S, delta: S) -> Result<Self, CurveError> {
        let patch = Self {
            breakpoints: vec![lower, upper],
            levels: vec![delta],
        };
        if lower >= upper || lower < S::zero() {
            return Err(CurveError::InvalidDistribution(format!(
                "interval [{lower}, {upper}) is empty"
            )));
        }
        let dust = S::lit(DUST);
        self.combine(&patch, |a, b| {
            let v = a + b;
            if v.abs() <= dust * a.abs().max(b.abs()) {
                Ok(S::zero())
            } else if v < S::zero() {
                Err(CurveError::NegativeLevel { level: v.as_f64() })
            } else {
                Ok(v)
            }
        })
    }

    fn combine<E>(&self, other: &Self, op: impl Fn(S, S) -> Result<S, E>) -> Result<Self, E> {
        let mut breakpoints = Vec::with_capacity(self.breakpoints.len() + other.breakpoints.len());
        let (mut i, mut j) = (0, 0);
        while i < self.breakpoints.len() || j < other.breakpoints.len() {
            let next = match (self.breakpoints.get(i), other.breakpoints.get(j)) {
                (Some(a), Some(b)) if a < b => {
                    i += 1;
                    *a
                }
                (Some(a), Some(b)) if b < a => {
                    j += 1;
                    *b
                }
                (Some(a), Some(_)) => {
                    i += 1;
                    j += 1;
                    *a
                }
                (Some(a), None) => {
                    i += 1;
                    *a
                }
                (None, Some(b)) => {
                    j += 1;
                    *b
                }
                (None, None) => unreachable!(),
            };
            breakpoints.push(next);
        }
        if breakpoints.len() < 2 {
            return Ok(Self::zero());
        }
        let mut levels = Vec::with_capacity(breakpoints.len() - 1);
        for b in &breakpoints[..breakpoints.len() - 1] {
            levels.push(op(self.level_at(*b), other.level_at(*b))?);
        }
        Ok(Self {
            breakpoints,
            levels,
        }
        .compact())
    }

    /// Merges equal neighbours and trims zero-level intervals at both ends.
    fn compact(self) -> Self {
        let Self {
            breakpoints,
            levels,
        } = self;
        let Some(first) = levels.iter().position(|l| *l != S::zero()) else {
            return Self::zero();
        };
        let last = levels
            .iter()
            .rposition(|l| *l != S::zero())
            .expect("a non-zero level exists");
        let mut out_bp = vec![breakpoints[first]];
        let mut out_lv: Vec<S> = Vec::new();
        for k in first..=last {
            if out_lv.last() == Some(&levels[k]) {
                *out_bp.last_mut().expect("non-empty") = breakpoints[k + 1];
            } else {
                out_lv.push(levels[k]);
                out_bp.push(breakpoints[k + 1]);
            }
        }
        Self {
            breakpoints: out_bp,
            levels: out_lv,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_step() -> LiquidityDistribution<f64> {
        LiquidityDistribution::new(vec![1.0, 4.0, 9.0], vec![100.0, 30.0]).unwrap()
    }

    #[test]
    fn right_continuous_evaluation() {
        let d = two_step();
        assert_eq!(d.level_at(0.5), 0.0);
        assert_eq!(d.level_at(1.0), 100.0);
        assert_eq!(d.level_at(3.999), 100.0);
        assert_eq!(d.level_at(4.0), 30.0);
        assert_eq!(d.level_at(9.0), 0.0);
        assert_eq!(d.level_at(100.0), 0.0);
    }

    #[test]
    fn rejects_malformed() {
        assert!(LiquidityDistribution::new(vec![1.0, 1.0], vec![1.0]).is_err());
        assert!(LiquidityDistribution::new(vec![1.0, 2.0], vec![-1.0]).is_err());
        assert!(LiquidityDistribution::new(vec![1.0, 2.0, 3.0], vec![1.0]).is_err());
        assert!(LiquidityDistribution::<f64>::new(vec![], vec![]).is_ok());
    }

    #[test]
    fn addition_refines_breakpoints() {
        let a = LiquidityDistribution::interval(1.0, 4.0, 10.0).unwrap();
        let b = LiquidityDistribution::interval(2.0, 9.0, 5.0).unwrap();
        let s = a.add(&b);
        assert_eq!(s.breakpoints(), &[1.0, 2.0, 4.0, 9.0]);
        assert_eq!(s.levels(), &[10.0, 15.0, 5.0]);
    }

    #[test]
    fn adjacent_equal_levels_merge() {
        let a = LiquidityDistribution::interval(1.0, 2.0, 3.0).unwrap();
        let b = LiquidityDistribution::interval(2.0, 5.0, 3.0).unwrap();
        let s = a.add(&b);
        assert_eq!(s.breakpoints(), &[1.0, 5.0]);
        assert_eq!(s.levels(), &[3.0]);
    }

    #[test]
    fn burn_to_zero_and_overdraw() {
        let d = LiquidityDistribution::interval(1.0, 4.0, 0.1)
            .unwrap()
            .apply_delta(1.0, 4.0, 0.2)
            .unwrap();
        let burned = d
            .apply_delta(1.0, 4.0, -0.1)
            .unwrap()
            .apply_delta(1.0, 4.0, -0.2)
            .unwrap();
        assert!(burned.breakpoints().is_empty());
        let err = LiquidityDistribution::interval(1.0, 4.0, 100.0)
            .unwrap()
            .apply_delta(1.0, 4.0, -150.0)
            .unwrap_err();
        assert!(matches!(err, CurveError::NegativeLevel { .. }));
    }

    #[test]
    fn partial_burn_splits_interval() {
        let d = LiquidityDistribution::interval(1.0, 9.0, 10.0)
            .unwrap()
            .apply_delta(4.0, 9.0, -10.0)
            .unwrap();
        assert_eq!(d.breakpoints(), &[1.0, 4.0]);
        assert_eq!(d.levels(), &[10.0]);
    }

    #[test]
    fn sum_matches_pairwise_add() {
        let a = LiquidityDistribution::interval(1.0, 4.0, 10.0).unwrap();
        let b = LiquidityDistribution::interval(2.0, 9.0, 5.0).unwrap();
        let c = LiquidityDistribution::interval(0.5, 3.0, 1.0).unwrap();
        assert_eq!(LiquidityDistribution::sum([&a, &b, &c]), a.add(&b).add(&c));
        assert_eq!(LiquidityDistribution::<f64>::sum([]), LiquidityDistribution::zero());
    }

    #[test]
    fn scaling_by_zero_is_empty() {
        assert!(two_step().scaled(0.0).breakpoints().is_empty());
        assert_eq!(two_step().scaled(2.0).levels(), &[200.0, 60.0]);
    }
}
