//! Real-valued functions on the points of a space.

use crate::error::{Error, Result};
use crate::space::MetricMeasureSpace;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Values of a function at the points of a [`MetricMeasureSpace`], in point order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GridFunction(pub Vec<f64>);

impl GridFunction {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn constant(space: &MetricMeasureSpace, c: f64) -> Self {
        Self(vec![c; space.len()])
    }

    /// Samples `f` at the cell centers of an interval space.
    pub fn from_fn(space: &MetricMeasureSpace, f: impl Fn(f64) -> f64) -> Result<Self> {
        let coords = space.coords().ok_or(Error::NotInterval {
            op: "GridFunction::from_fn",
            hint: "build the values explicitly for matrix spaces",
        })?;
        Ok(Self(coords.iter().map(|&x| f(x)).collect()))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self(self.0.iter().map(|&v| f(v)).collect())
    }

    /// Checks the length against `space` and that every value is finite.
    pub fn check(&self, space: &MetricMeasureSpace) -> Result<()> {
        if self.0.len() != space.len() {
            return Err(Error::LengthMismatch {
                expected: space.len(),
                got: self.0.len(),
            });
        }
        if let Some((index, &value)) = self.0.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { index, value });
        }
        Ok(())
    }

    pub fn oscillation(&self) -> f64 {
        let lo = self.0.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.0.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if lo.is_finite() && hi.is_finite() {
            hi - lo
        } else {
            0.0
        }
    }

    pub fn is_constant(&self) -> bool {
        self.0.windows(2).all(|w| w[0] == w[1])
    }
}

impl std::ops::Index<usize> for GridFunction {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Per-point maximum of the two one-sided difference quotients on an interval space.
pub(crate) fn max_one_sided_slope(space: &MetricMeasureSpace, f: &GridFunction) -> Result<GridFunction> {
    let h = space.cell_len().ok_or(Error::NotInterval {
        op: "one-sided slopes",
        hint: "slopes need the ordering of an interval space",
    })?;
    f.check(space)?;
    let v = f.values();
    let n = v.len();
    let out = (0..n)
        .map(|k| {
            let left = if k > 0 { (v[k] - v[k - 1]).abs() / h } else { 0.0 };
            let right = if k + 1 < n { (v[k + 1] - v[k]).abs() / h } else { 0.0 };
            left.max(right)
        })
        .collect();
    Ok(GridFunction(out))
}

/// Named function generators on the unit interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Generator {
    /// `slope * x + offset`.
    Ramp {
        #[serde(default = "one")]
        slope: f64,
        #[serde(default)]
        offset: f64,
    },
    /// Jump of `height` at `at`.
    Step {
        #[serde(default = "half")]
        at: f64,
        #[serde(default = "one")]
        height: f64,
    },
    /// Tent of `height` supported on `(left, right)`.
    Tent {
        left: f64,
        right: f64,
        #[serde(default = "one")]
        height: f64,
    },
    /// `x^power`.
    Power { power: f64 },
    /// Piecewise-linear interpolation of `(x, y)` knots.
    PiecewiseLinear { knots: Vec<(f64, f64)> },
    /// Fat-Cantor function of the given depth.
    Cantor { depth: u32 },
    /// Explicit values, one per point.
    Table { values: Vec<f64> },
}

fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}

impl Generator {
    pub fn build(&self, space: &MetricMeasureSpace) -> Result<GridFunction> {
        match self {
            Generator::Ramp { slope, offset } => GridFunction::from_fn(space, |x| slope * x + offset),
            Generator::Step { at, height } => GridFunction::from_fn(space, |x| if x < *at { 0.0 } else { *height }),
            Generator::Tent { left, right, height } => {
                if !(left < right) {
                    return Err(Error::InvalidParameter(format!("tent needs left < right, got ({left}, {right})")));
                }
                GridFunction::from_fn(space, |x| tent(x, *left, *right, *height))
            }
            Generator::Power { power } => GridFunction::from_fn(space, |x| x.powf(*power)),
            Generator::PiecewiseLinear { knots } => {
                if knots.len() < 2 || knots.windows(2).any(|w| !(w[0].0 < w[1].0)) {
                    return Err(Error::InvalidParameter(
                        "piecewise_linear needs at least two knots with increasing x".into(),
                    ));
                }
                GridFunction::from_fn(space, |x| interpolate(knots, x))
            }
            Generator::Cantor { depth } => {
                let spec = crate::cantor::fat_cantor(*depth)?;
                crate::cantor::cantor_function(&spec, space).map(|c| c.f)
            }
            Generator::Table { values } => {
                let f = GridFunction(values.clone());
                f.check(space)?;
                Ok(f)
            }
        }
    }
}

pub fn tent(x: f64, left: f64, right: f64, height: f64) -> f64 {
    let mid = 0.5 * (left + right);
    let half_width = 0.5 * (right - left);
    (height * (1.0 - (x - mid).abs() / half_width)).max(0.0)
}

fn interpolate(knots: &[(f64, f64)], x: f64) -> f64 {
    if x <= knots[0].0 {
        return knots[0].1;
    }
    for w in knots.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if x <= x1 {
            return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
        }
    }
    knots[knots.len() - 1].1
}

/// Random piecewise-linear knots on `[0, 1]` with `pieces` linear pieces,
/// each at least `0.5 / pieces` long, and values in `[-1, 1]`.
pub fn random_piecewise_linear<R: Rng>(rng: &mut R, pieces: usize) -> Generator {
    let pieces = pieces.max(1);
    let gap = 0.5 / pieces as f64;
    let mut xs: Vec<f64> = (0..pieces - 1).map(|_| rng.gen_range(0.0..1.0 - gap * pieces as f64)).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut knots = vec![(0.0, rng.gen_range(-1.0..1.0))];
    knots.extend(xs.into_iter().enumerate().map(|(k, x)| (x + gap * (k + 1) as f64, rng.gen_range(-1.0..1.0))));
    knots.push((1.0, rng.gen_range(-1.0..1.0)));
    Generator::PiecewiseLinear { knots }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::MetricMeasureSpace;

    #[test]
    fn generators_sample_cell_centers() {
        let s = MetricMeasureSpace::uniform_interval(4).unwrap();
        let f = Generator::Ramp { slope: 1.0, offset: 0.0 }.build(&s).unwrap();
        assert_eq!(f.values(), &[0.125, 0.375, 0.625, 0.875]);
        let step = Generator::Step { at: 0.5, height: 1.0 }.build(&s).unwrap();
        assert_eq!(step.values(), &[0.0, 0.0, 1.0, 1.0]);
        let t = Generator::Tent { left: 0.0, right: 1.0, height: 1.0 }.build(&s).unwrap();
        assert_eq!(t.values(), &[0.25, 0.75, 0.75, 0.25]);
    }

    #[test]
    fn table_length_is_checked() {
        let s = MetricMeasureSpace::uniform_interval(4).unwrap();
        let err = Generator::Table { values: vec![1.0; 3] }.build(&s).unwrap_err();
        assert!(matches!(err, Error::LengthMismatch { expected: 4, got: 3 }));
    }

    #[test]
    fn one_sided_slopes_of_a_step() {
        let s = MetricMeasureSpace::uniform_interval(8).unwrap();
        let f = Generator::Step { at: 0.5, height: 1.0 }.build(&s).unwrap();
        let g = max_one_sided_slope(&s, &f).unwrap();
        assert_eq!(g.values(), &[0.0, 0.0, 0.0, 8.0, 8.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn check_rejects_nan() {
        let s = MetricMeasureSpace::uniform_interval(3).unwrap();
        let f = GridFunction(vec![0.0, f64::NAN, 1.0]);
        assert!(matches!(f.check(&s), Err(Error::NonFinite { index: 1, .. })));
    }
}
