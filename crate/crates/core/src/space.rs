//! Discretized metric measure spaces.
//!
//! A space is a finite point set with a metric and strictly positive point
//! masses. Interval spaces are uniform cell grids on `[0, 1]` with the mass of
//! each cell (weight times cell length) placed at the cell center; distances
//! there are `|i - j| * h`, so every radius query reduces to an index offset.
//! Matrix spaces wrap an explicit distance matrix.
//!
//! Balls are open: `B(x, r) = { y : d(x, y) < r }`.

use crate::error::{Error, Result};
use crate::grid::{max_one_sided_slope, GridFunction};
use crate::reduce::{pairwise_sum, PairwiseAccumulator};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::borrow::Cow;
use std::sync::OnceLock;

/// Exhaustive triangle-inequality validation up to this many points.
pub const EXHAUSTIVE_TRIANGLE_LIMIT: usize = 512;
/// Number of random triples checked above [`EXHAUSTIVE_TRIANGLE_LIMIT`].
pub const SAMPLED_TRIPLES: usize = 100_000;

const METRIC_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
enum Geometry {
    Interval { cell_len: f64, weights: Vec<f64> },
    Matrix { dist: Vec<f64> },
}

/// Distances from one center, sorted ascending, with cumulative masses.
#[derive(Debug, Clone)]
struct SortedRow {
    dists: Vec<f64>,
    order: Vec<u32>,
    // cum[k] = mass of the first k entries
    cum: Vec<f64>,
}

/// Finite metric measure space with atomic masses.
#[derive(Debug)]
pub struct MetricMeasureSpace {
    geometry: Geometry,
    mass: Vec<f64>,
    prefix: Vec<f64>,
    diam: f64,
    rows: OnceLock<Vec<SortedRow>>,
}

impl Clone for MetricMeasureSpace {
    fn clone(&self) -> Self {
        Self {
            geometry: self.geometry.clone(),
            mass: self.mass.clone(),
            prefix: self.prefix.clone(),
            diam: self.diam,
            rows: OnceLock::new(),
        }
    }
}

fn prefix_sums(values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len() + 1);
    out.push(0.0);
    let mut acc = 0.0;
    for v in values {
        acc += v;
        out.push(acc);
    }
    out
}

impl MetricMeasureSpace {
    /// Weighted unit interval split into `weights.len()` cells.
    pub fn weighted_interval(weights: &[f64]) -> Result<Self> {
        let n = weights.len();
        if n < 2 {
            return Err(Error::InvalidSpace(format!("need at least 2 cells, got {n}")));
        }
        if let Some((k, w)) = weights.iter().enumerate().find(|(_, w)| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidSpace(format!("weight of cell {k} must be positive and finite, got {w}")));
        }
        let h = 1.0 / n as f64;
        let mass: Vec<f64> = weights.iter().map(|w| w * h).collect();
        let prefix = prefix_sums(&mass);
        Ok(Self {
            geometry: Geometry::Interval {
                cell_len: h,
                weights: weights.to_vec(),
            },
            mass,
            prefix,
            diam: 1.0,
            rows: OnceLock::new(),
        })
    }

    pub fn uniform_interval(n_cells: usize) -> Result<Self> {
        Self::weighted_interval(&vec![1.0; n_cells])
    }

    /// Wraps a row-major `N x N` distance matrix, validating the metric axioms.
    pub fn from_matrix(dist: Vec<f64>, mass: Vec<f64>) -> Result<Self> {
        Self::from_matrix_seeded(dist, mass, 0)
    }

    /// As [`Self::from_matrix`]; `seed` drives the sampled triangle check for large `N`.
    pub fn from_matrix_seeded(dist: Vec<f64>, mass: Vec<f64>, seed: u64) -> Result<Self> {
        let n = mass.len();
        if n < 2 {
            return Err(Error::InvalidSpace(format!("need at least 2 points, got {n}")));
        }
        if dist.len() != n * n {
            return Err(Error::LengthMismatch {
                expected: n * n,
                got: dist.len(),
            });
        }
        if let Some((k, m)) = mass.iter().enumerate().find(|(_, m)| !(**m > 0.0 && m.is_finite())) {
            return Err(Error::InvalidSpace(format!("mass of point {k} must be positive and finite, got {m}")));
        }
        let d = |i: usize, j: usize| dist[i * n + j];
        let mut diam: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let v = d(i, j);
                if !v.is_finite() || v < 0.0 || (i == j && v != 0.0) {
                    return Err(Error::InvalidEntry { i, j, value: v });
                }
                if j > i && v != d(j, i) {
                    return Err(Error::Asymmetric {
                        i,
                        j,
                        dij: v,
                        dji: d(j, i),
                    });
                }
                diam = diam.max(v);
            }
        }
        if diam <= 0.0 {
            return Err(Error::InvalidSpace("all points coincide (diameter 0)".into()));
        }
        let check = |i: usize, j: usize, k: usize| -> Result<()> {
            let via = d(i, j) + d(j, k);
            if d(i, k) > via + METRIC_TOL * diam {
                return Err(Error::TriangleViolation {
                    i,
                    j,
                    k,
                    dik: d(i, k),
                    via,
                });
            }
            Ok(())
        };
        if n <= EXHAUSTIVE_TRIANGLE_LIMIT {
            for i in 0..n {
                for k in i + 1..n {
                    for j in 0..n {
                        check(i, j, k)?;
                    }
                }
            }
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..SAMPLED_TRIPLES {
                check(rng.gen_range(0..n), rng.gen_range(0..n), rng.gen_range(0..n))?;
            }
        }
        let prefix = prefix_sums(&mass);
        Ok(Self {
            geometry: Geometry::Matrix { dist },
            mass,
            prefix,
            diam,
            rows: OnceLock::new(),
        })
    }

    /// Builds a matrix space from the Euclidean distances of `points`.
    pub fn from_points(points: &[Vec<f64>], mass: Vec<f64>) -> Result<Self> {
        let n = points.len();
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                dist[i * n + j] = points[i]
                    .iter()
                    .zip(&points[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
            }
        }
        for i in 0..n {
            for j in 0..i {
                dist[i * n + j] = dist[j * n + i];
            }
        }
        Self::from_matrix(dist, mass)
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn is_interval(&self) -> bool {
        matches!(self.geometry, Geometry::Interval { .. })
    }

    /// Cell length of an interval space.
    pub fn cell_len(&self) -> Option<f64> {
        match &self.geometry {
            Geometry::Interval { cell_len, .. } => Some(*cell_len),
            Geometry::Matrix { .. } => None,
        }
    }

    /// Cell weights (density against cell length) of an interval space.
    pub fn weights(&self) -> Option<&[f64]> {
        match &self.geometry {
            Geometry::Interval { weights, .. } => Some(weights),
            Geometry::Matrix { .. } => None,
        }
    }

    /// Cell-center coordinates of an interval space.
    pub fn coords(&self) -> Option<Vec<f64>> {
        let h = self.cell_len()?;
        Some((0..self.len()).map(|k| (k as f64 + 0.5) * h).collect())
    }

    pub fn coord(&self, i: usize) -> Option<f64> {
        self.cell_len().map(|h| (i as f64 + 0.5) * h)
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    #[inline]
    pub fn mass(&self, i: usize) -> f64 {
        self.mass[i]
    }

    pub fn total_mass(&self) -> f64 {
        pairwise_sum(&self.mass)
    }

    /// Diameter; for interval spaces this is the length of the underlying interval.
    pub fn diam(&self) -> f64 {
        self.diam
    }

    /// Smallest positive distance between two points.
    pub fn resolution(&self) -> f64 {
        match &self.geometry {
            Geometry::Interval { cell_len, .. } => *cell_len,
            Geometry::Matrix { dist } => dist.iter().cloned().filter(|&d| d > 0.0).fold(f64::INFINITY, f64::min),
        }
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        match &self.geometry {
            Geometry::Interval { .. } => self.offset_dist(i.abs_diff(j)),
            Geometry::Matrix { dist } => dist[i * self.mass.len() + j],
        }
    }

    /// Distance between interval cells `k` apart, as the correctly rounded `k / n`,
    /// so grid distances equal decimal radii that name the same fraction.
    pub(crate) fn offset_dist(&self, k: usize) -> f64 {
        k as f64 / self.len() as f64
    }

    /// Largest index offset `k` with `k / n < r` (or `<= r` when `inclusive`).
    pub(crate) fn reach(&self, r: f64, inclusive: bool) -> usize {
        let h = self.cell_len().expect("reach on interval space");
        if !(r > 0.0) {
            return 0;
        }
        let n = self.len();
        let inside = |k: usize| {
            let d = self.offset_dist(k);
            if inclusive {
                d <= r
            } else {
                d < r
            }
        };
        let guess = (r / h).floor();
        let mut k = if guess >= n as f64 { n } else { guess as usize };
        while k > 0 && !inside(k) {
            k -= 1;
        }
        while k < n && inside(k + 1) {
            k += 1;
        }
        k.min(n - 1)
    }

    fn sorted_rows(&self) -> &[SortedRow] {
        self.rows.get_or_init(|| {
            let n = self.len();
            (0..n)
                .map(|y| {
                    let mut order: Vec<u32> = (0..n as u32).collect();
                    order.sort_by(|&a, &b| {
                        self.dist(y, a as usize)
                            .partial_cmp(&self.dist(y, b as usize))
                            .unwrap()
                            .then(a.cmp(&b))
                    });
                    let dists = order.iter().map(|&x| self.dist(y, x as usize)).collect();
                    let cum = prefix_sums(&order.iter().map(|&x| self.mass[x as usize]).collect::<Vec<_>>());
                    SortedRow { dists, order, cum }
                })
                .collect()
        })
    }

    /// `mu(B(center, r))`.
    pub fn ball_mass(&self, center: usize, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::InvalidParameter(format!("ball radius must be positive, got {r}")));
        }
        if center >= self.len() {
            return Err(Error::InvalidParameter(format!("center {center} out of range")));
        }
        Ok(BallMeasure::full(self).ball_mass(center, r))
    }

    /// Calls `visit(x, d)` for every `x != y` with `d(x, y) < radius`
    /// (`<= radius` when `inclusive`), in ascending `x`.
    #[inline]
    pub(crate) fn for_each_neighbor(&self, y: usize, radius: Option<(f64, bool)>, mut visit: impl FnMut(usize, f64)) {
        let n = self.len();
        match (&self.geometry, radius) {
            (Geometry::Interval { .. }, Some((r, inclusive))) => {
                let k = self.reach(r, inclusive);
                let lo = y.saturating_sub(k);
                let hi = (y + k).min(n - 1);
                for x in lo..=hi {
                    if x != y {
                        visit(x, self.offset_dist(x.abs_diff(y)));
                    }
                }
            }
            (_, Some((r, inclusive))) => {
                for x in 0..n {
                    let d = self.dist(x, y);
                    if x != y && (d < r || (inclusive && d == r)) {
                        visit(x, d);
                    }
                }
            }
            (_, None) => {
                for x in 0..n {
                    if x != y {
                        visit(x, self.dist(x, y));
                    }
                }
            }
        }
    }
}

/// Ball-mass oracle over the full measure or its restriction to a mask.
#[derive(Debug, Clone)]
pub struct BallMeasure<'a> {
    space: &'a MetricMeasureSpace,
    prefix: Cow<'a, [f64]>,
    row_cum: Option<Vec<Vec<f64>>>,
}

impl<'a> BallMeasure<'a> {
    pub fn full(space: &'a MetricMeasureSpace) -> Self {
        Self {
            space,
            prefix: Cow::Borrowed(&space.prefix),
            row_cum: None,
        }
    }

    /// Ball masses of `mu` restricted to `mask`.
    pub fn restricted(space: &'a MetricMeasureSpace, mask: &DomainMask) -> Self {
        let masked: Vec<f64> = (0..space.len())
            .map(|i| if mask.contains(i) { space.mass(i) } else { 0.0 })
            .collect();
        let row_cum = if space.is_interval() {
            None
        } else {
            Some(
                space
                    .sorted_rows()
                    .iter()
                    .map(|row| prefix_sums(&row.order.iter().map(|&x| masked[x as usize]).collect::<Vec<_>>()))
                    .collect(),
            )
        };
        Self {
            space,
            prefix: Cow::Owned(prefix_sums(&masked)),
            row_cum,
        }
    }

    pub fn space(&self) -> &'a MetricMeasureSpace {
        self.space
    }

    /// Mass of the single point `y` under this measure.
    #[inline]
    pub fn point_mass(&self, y: usize) -> f64 {
        self.prefix[y + 1] - self.prefix[y]
    }

    /// Mass of the cells with index offset `< k` from `y` (interval spaces).
    #[inline]
    pub fn offset_mass(&self, y: usize, k: usize) -> f64 {
        if k == 0 {
            return 0.0;
        }
        let n = self.space.len();
        let lo = y.saturating_sub(k - 1);
        let hi = (y + k - 1).min(n - 1);
        self.prefix[hi + 1] - self.prefix[lo]
    }

    /// `mu(B(y, r))`, zero for `r <= 0`.
    #[inline]
    pub fn ball_mass(&self, y: usize, r: f64) -> f64 {
        if !(r > 0.0) {
            return 0.0;
        }
        if self.space.is_interval() {
            let k = self.space.reach(r, false);
            return self.offset_mass(y, k + 1);
        }
        let row = &self.space.sorted_rows()[y];
        let count = row.dists.partition_point(|&d| d < r);
        match &self.row_cum {
            Some(rows) => rows[y][count],
            None => row.cum[count],
        }
    }

    /// `mu(B(y, d(x, y)))`, using the index offset on interval spaces.
    #[inline]
    pub fn ball_mass_to(&self, y: usize, x: usize, d: f64) -> f64 {
        if self.space.is_interval() {
            self.offset_mass(y, x.abs_diff(y))
        } else {
            self.ball_mass(y, d)
        }
    }
}

/// Membership mask over the points of a space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DomainMask(Vec<bool>);

/// Direction of [`morph_mask`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MorphMode {
    Dilate,
    Erode,
}

impl DomainMask {
    pub fn new(membership: Vec<bool>) -> Self {
        Self(membership)
    }

    pub fn full(space: &MetricMeasureSpace) -> Self {
        Self(vec![true; space.len()])
    }

    pub fn empty(space: &MetricMeasureSpace) -> Self {
        Self(vec![false; space.len()])
    }

    /// Cells of an interval space whose center lies in `[a, b]`.
    pub fn interval(space: &MetricMeasureSpace, a: f64, b: f64) -> Result<Self> {
        let coords = space.coords().ok_or(Error::NotInterval {
            op: "DomainMask::interval",
            hint: "use DomainMask::new on matrix spaces",
        })?;
        Ok(Self(coords.iter().map(|&x| a <= x && x <= b).collect()))
    }

    /// Union of closed intervals on an interval space.
    pub fn intervals(space: &MetricMeasureSpace, parts: &[(f64, f64)]) -> Result<Self> {
        let mut mask = Self::empty(space);
        for &(a, b) in parts {
            mask = mask.union(&Self::interval(space, a, b)?);
        }
        Ok(mask)
    }

    #[inline]
    pub fn contains(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        !self.0.iter().any(|&b| b)
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    pub fn membership(&self) -> &[bool] {
        &self.0
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.0.iter().zip(&other.0).all(|(&a, &b)| !a || b)
    }

    pub fn union(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(&a, &b)| a || b).collect())
    }

    pub fn intersection(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(&a, &b)| a && b).collect())
    }

    pub fn complement(&self) -> Self {
        Self(self.0.iter().map(|&a| !a).collect())
    }

    pub fn measure(&self, space: &MetricMeasureSpace) -> f64 {
        let mut acc = PairwiseAccumulator::new();
        self.indices().for_each(|i| acc.add(space.mass(i)));
        acc.sum()
    }
}

/// Distance from every point to the nearest member of `set` (infinite if `set` is empty).
pub fn distance_to_set(space: &MetricMeasureSpace, set: &DomainMask) -> Vec<f64> {
    let n = space.len();
    if space.is_interval() {
        // two sweeps over the ordered cells
        let mut last: Option<usize> = None;
        let mut out = vec![f64::INFINITY; n];
        for i in 0..n {
            if set.contains(i) {
                last = Some(i);
            }
            if let Some(j) = last {
                out[i] = space.offset_dist(i - j);
            }
        }
        last = None;
        for i in (0..n).rev() {
            if set.contains(i) {
                last = Some(i);
            }
            if let Some(j) = last {
                out[i] = out[i].min(space.offset_dist(j - i));
            }
        }
        out
    } else {
        let members: Vec<usize> = set.indices().collect();
        (0..n)
            .map(|i| members.iter().map(|&j| space.dist(i, j)).fold(f64::INFINITY, f64::min))
            .collect()
    }
}

/// Dilation `{x : d(x, U) < delta}` or erosion `{x in U : d(x, X \ U) > delta}`.
pub fn morph_mask(space: &MetricMeasureSpace, mask: &DomainMask, delta: f64, mode: MorphMode) -> Result<DomainMask> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("morph radius must be positive, got {delta}")));
    }
    if mask.len() != space.len() {
        return Err(Error::LengthMismatch {
            expected: space.len(),
            got: mask.len(),
        });
    }
    Ok(match mode {
        MorphMode::Dilate => DomainMask(distance_to_set(space, mask).into_iter().map(|d| d < delta).collect()),
        MorphMode::Erode => {
            let outside = distance_to_set(space, &mask.complement());
            DomainMask(
                outside
                    .into_iter()
                    .enumerate()
                    .map(|(i, d)| mask.contains(i) && d > delta)
                    .collect(),
            )
        }
    })
}

/// Dyadic radii `diam / 2^j` for `j = 1..=4`.
pub fn default_doubling_scales(space: &MetricMeasureSpace) -> Vec<f64> {
    (1..=4).map(|j| space.diam() / f64::from(1u32 << j)).collect()
}

/// Largest observed `mu(B(x, 2r)) / mu(B(x, r))` over all centers and the given radii.
pub fn estimate_doubling(space: &MetricMeasureSpace, scales: &[f64]) -> Result<f64> {
    if scales.is_empty() || scales.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::InvalidParameter("doubling scales must be nonempty and positive".into()));
    }
    let balls = BallMeasure::full(space);
    let mut worst: f64 = 1.0;
    for x in 0..space.len() {
        for &r in scales {
            worst = worst.max(balls.ball_mass(x, 2.0 * r) / balls.ball_mass(x, r));
        }
    }
    Ok(worst)
}

/// Test function with its upper-gradient surrogate for [`estimate_poincare`].
#[derive(Debug, Clone)]
pub struct PoincareTest {
    pub f: GridFunction,
    pub g: Option<GridFunction>,
}

impl PoincareTest {
    /// Pairs `f` with its maximal one-sided slope on an interval space.
    pub fn with_slope(space: &MetricMeasureSpace, f: GridFunction) -> Result<Self> {
        let g = max_one_sided_slope(space, &f)?;
        Ok(Self { f, g: Some(g) })
    }
}

/// Empirical lower bound on the `(p, p)`-Poincaré constant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoincareEstimate {
    pub c_p: f64,
    pub lambda: f64,
    pub p: f64,
    pub n_tests: usize,
    pub n_balls: usize,
    /// Balls where the oscillation was positive but the gradient integral vanished.
    pub violations: usize,
}

/// Ratio `int_B |f - f_B|^p / (r^p int_{lambda B} g^p)` for one ball.
///
/// Returns `None` when both sides vanish and `Some(inf)` when only the
/// denominator does.
pub fn poincare_ratio(
    space: &MetricMeasureSpace,
    p: f64,
    test: &PoincareTest,
    center: usize,
    r: f64,
    lambda: f64,
) -> Result<Option<f64>> {
    let g = test
        .g
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("Poincaré test function is missing its gradient surrogate".into()))?;
    test.f.check(space)?;
    g.check(space)?;
    let mut in_ball = Vec::new();
    space.for_each_neighbor(center, Some((r, false)), |x, _| in_ball.push(x));
    in_ball.push(center);
    in_ball.sort_unstable();
    let mut mass = PairwiseAccumulator::new();
    let mut moment = PairwiseAccumulator::new();
    for &x in &in_ball {
        mass.add(space.mass(x));
        moment.add(space.mass(x) * test.f[x]);
    }
    let mean = moment.sum() / mass.sum();
    let mut num = PairwiseAccumulator::new();
    // a rounded mean must not turn a constant into a positive oscillation
    let first = test.f[in_ball[0]];
    if in_ball.iter().any(|&x| test.f[x] != first) {
        for &x in &in_ball {
            num.add((test.f[x] - mean).abs().powf(p) * space.mass(x));
        }
    }
    let mut den = PairwiseAccumulator::new();
    let mut add_g = |x: usize| den.add(g[x].powf(p) * space.mass(x));
    add_g(center);
    space.for_each_neighbor(center, Some((lambda * r, false)), |x, _| add_g(x));
    let (num, den) = (num.sum(), den.sum() * r.powf(p));
    Ok(match (num > 0.0, den > 0.0) {
        (false, false) => None,
        (true, false) => Some(f64::INFINITY),
        _ => Some(num / den),
    })
}

/// Lower bound on `C_P` from a library of test functions.
///
/// Balls are centered at up to 64 evenly strided points with radii
/// `diam / 2^j`, `j = 0..=5`, plus one ball covering the whole space.
pub fn estimate_poincare(space: &MetricMeasureSpace, p: f64, tests: &[PoincareTest], lambda: f64) -> Result<PoincareEstimate> {
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!("p must be >= 1, got {p}")));
    }
    if !(lambda >= 1.0) {
        return Err(Error::InvalidParameter(format!("lambda must be >= 1, got {lambda}")));
    }
    let n = space.len();
    let stride = n.div_ceil(64).max(1);
    let mut balls: Vec<(usize, f64)> = Vec::new();
    for c in (0..n).step_by(stride) {
        for j in 0..=5 {
            balls.push((c, space.diam() / f64::from(1u32 << j)));
        }
    }
    balls.push((n / 2, 2.0 * space.diam()));
    let mut c_p: f64 = 0.0;
    let mut violations = 0;
    for test in tests {
        for &(c, r) in &balls {
            match poincare_ratio(space, p, test, c, r, lambda)? {
                None => {}
                Some(v) if v.is_infinite() => violations += 1,
                Some(v) => c_p = c_p.max(v),
            }
        }
    }
    Ok(PoincareEstimate {
        c_p,
        lambda,
        p,
        n_tests: tests.len(),
        n_balls: balls.len(),
        violations,
    })
}

/// Ramps, one-cell smoothed steps and seeded random piecewise-linear functions.
pub fn poincare_test_library(space: &MetricMeasureSpace, seed: u64) -> Result<Vec<PoincareTest>> {
    use crate::grid::{random_piecewise_linear, Generator};
    let h = space.cell_len().ok_or(Error::NotInterval {
        op: "poincare_test_library",
        hint: "supply PoincareTest values with explicit gradients",
    })?;
    let mut gens = vec![
        Generator::Ramp { slope: 1.0, offset: 0.0 },
        Generator::Ramp { slope: -2.0, offset: 1.0 },
    ];
    for at in [0.25, 0.5, 0.7] {
        gens.push(Generator::PiecewiseLinear {
            knots: vec![(0.0, 0.0), (at - h, 0.0), (at, 1.0), (1.0, 1.0)],
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..5 {
        gens.push(random_piecewise_linear(&mut rng, 4));
    }
    gens.iter()
        .map(|g| PoincareTest::with_slope(space, g.build(space)?))
        .collect()
}

/// Cell weights in a space description: explicit, uniform, or generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightSpec {
    Named(String),
    Explicit(Vec<f64>),
    Generator(WeightGenerator),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightGenerator {
    pub generator: String,
    pub depth: u32,
}

/// JSON description of a space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpaceDescription {
    Interval {
        n_cells: usize,
        #[serde(default = "uniform_weights")]
        weights: WeightSpec,
    },
    Matrix {
        dist: Vec<Vec<f64>>,
        mass: Vec<f64>,
    },
}

fn uniform_weights() -> WeightSpec {
    WeightSpec::Named("uniform".into())
}

impl SpaceDescription {
    pub fn build(&self) -> Result<MetricMeasureSpace> {
        match self {
            SpaceDescription::Interval { n_cells, weights } => {
                let w = match weights {
                    WeightSpec::Named(name) if name == "uniform" => vec![1.0; *n_cells],
                    WeightSpec::Named(name) => {
                        return Err(Error::Config(format!("unknown weight name {name:?}; expected \"uniform\"")))
                    }
                    WeightSpec::Explicit(w) => {
                        if w.len() != *n_cells {
                            return Err(Error::LengthMismatch {
                                expected: *n_cells,
                                got: w.len(),
                            });
                        }
                        w.clone()
                    }
                    WeightSpec::Generator(g) if g.generator == "fat_cantor" => {
                        let spec = crate::cantor::fat_cantor(g.depth)?;
                        return crate::cantor::cantor_space(&spec, *n_cells);
                    }
                    WeightSpec::Generator(g) => {
                        return Err(Error::Config(format!(
                            "unknown weight generator {:?}; expected \"fat_cantor\"",
                            g.generator
                        )))
                    }
                };
                MetricMeasureSpace::weighted_interval(&w)
            }
            SpaceDescription::Matrix { dist, mass } => {
                let n = mass.len();
                if dist.len() != n || dist.iter().any(|row| row.len() != n) {
                    return Err(Error::InvalidSpace(format!("distance matrix must be {n} x {n}")));
                }
                MetricMeasureSpace::from_matrix(dist.concat(), mass.clone())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn unit(n: usize) -> MetricMeasureSpace {
        MetricMeasureSpace::uniform_interval(n).unwrap()
    }

    #[test]
    fn uniform_interval_layout() {
        let s = unit(4);
        assert_abs_diff_eq!(s.total_mass(), 1.0, epsilon = 1e-15);
        assert_eq!(s.dist(0, 3), 0.75);
        assert_eq!(s.coords().unwrap(), vec![0.125, 0.375, 0.625, 0.875]);
        let s2 = MetricMeasureSpace::weighted_interval(&[2.0, 2.0]).unwrap();
        assert_eq!(s2.total_mass(), 2.0);
    }

    #[test]
    fn interval_rejects_bad_input() {
        assert!(MetricMeasureSpace::weighted_interval(&[1.0]).is_err());
        assert!(MetricMeasureSpace::weighted_interval(&[1.0, 0.0, 1.0]).is_err());
        assert!(MetricMeasureSpace::weighted_interval(&[1.0, -1.0]).is_err());
    }

    #[test]
    fn matrix_space_validation() {
        let s = MetricMeasureSpace::from_matrix(vec![0.0, 0.5, 0.5, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(s.diam(), 0.5);

        let bad = vec![0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0];
        match MetricMeasureSpace::from_matrix(bad, vec![1.0; 3]) {
            Err(Error::TriangleViolation { i: 0, j: 1, k: 2, .. }) => {}
            other => panic!("expected triangle violation at (0,1,2), got {other:?}"),
        }

        let line = MetricMeasureSpace::from_points(&[vec![0.0], vec![0.5], vec![1.0]], vec![1.0; 3]).unwrap();
        assert_eq!(line.diam(), 1.0);

        let asym = vec![0.0, 1.0, 0.9, 0.0];
        assert!(matches!(
            MetricMeasureSpace::from_matrix(asym, vec![1.0; 2]),
            Err(Error::Asymmetric { i: 0, j: 1, .. })
        ));
        let neg = vec![0.0, -1.0, -1.0, 0.0];
        assert!(matches!(
            MetricMeasureSpace::from_matrix(neg, vec![1.0; 2]),
            Err(Error::InvalidEntry { .. })
        ));
    }

    #[test]
    fn ball_mass_examples() {
        let s = unit(1000);
        let mid = s.ball_mass(500, 0.1).unwrap();
        assert!((mid - 0.2).abs() <= 1e-3 + 1e-12, "{mid}");
        let edge = s.ball_mass(0, 0.1).unwrap();
        assert!((edge - 0.1).abs() <= 1e-3 + 1e-12, "{edge}");
        assert!(s.ball_mass(0, 0.0).is_err());
        assert!(s.ball_mass(0, -1.0).is_err());
        // strict inequality: a neighbour at exactly r is excluded
        let s4 = unit(4);
        assert_eq!(s4.ball_mass(0, 0.25).unwrap(), 0.25);
        assert_eq!(s4.ball_mass(0, 0.2500001).unwrap(), 0.5);
    }

    #[test]
    fn matrix_ball_mass_matches_brute_force() {
        let pts: Vec<Vec<f64>> = (0..20).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()]).collect();
        let mass: Vec<f64> = (0..20).map(|i| 1.0 + i as f64 * 0.1).collect();
        let s = MetricMeasureSpace::from_points(&pts, mass.clone()).unwrap();
        for y in 0..20 {
            for r in [0.05, 0.3, 0.7, 1.5, 3.0] {
                let brute: f64 = (0..20).filter(|&x| s.dist(x, y) < r).map(|x| mass[x]).sum();
                assert_abs_diff_eq!(s.ball_mass(y, r).unwrap(), brute, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn morph_examples() {
        let s = unit(1000);
        let u = DomainMask::interval(&s, 0.3, 0.7).unwrap();
        let e = morph_mask(&s, &u, 0.1, MorphMode::Erode).unwrap();
        let xs = s.coords().unwrap();
        let (lo, hi) = span(&e, &xs);
        assert!((lo - 0.4).abs() < 2e-3 && (hi - 0.6).abs() < 2e-3, "{lo} {hi}");
        let d = morph_mask(&s, &u, 0.1, MorphMode::Dilate).unwrap();
        let (lo, hi) = span(&d, &xs);
        assert!((lo - 0.2).abs() < 2e-3 && (hi - 0.8).abs() < 2e-3, "{lo} {hi}");
        assert!(morph_mask(&s, &u, 0.21, MorphMode::Erode).unwrap().is_empty());
        assert!(morph_mask(&s, &u, 0.0, MorphMode::Erode).is_err());
    }

    fn span(m: &DomainMask, xs: &[f64]) -> (f64, f64) {
        let idx: Vec<usize> = m.indices().collect();
        (xs[idx[0]], xs[*idx.last().unwrap()])
    }

    #[test]
    fn doubling_examples() {
        let s = unit(1000);
        let c = estimate_doubling(&s, &default_doubling_scales(&s)).unwrap();
        assert!(c >= 1.0 && c <= 2.0 + 10.0 / 1000.0, "{c}");
        assert_eq!(estimate_doubling(&s, &[s.diam()]).unwrap(), 1.0);
        assert!(estimate_doubling(&s, &[]).is_err());
    }

    #[test]
    fn poincare_whole_space_ratios() {
        let s = unit(2000);
        let f = GridFunction::from_fn(&s, |x| x).unwrap();
        let t = PoincareTest::with_slope(&s, f).unwrap();
        let r = 0.5 + 1e-3;
        let ratio = poincare_ratio(&s, 1.0, &t, 1000, r, 1.0).unwrap().unwrap();
        assert!((ratio - 0.25 / r).abs() < 1e-3, "{ratio}");
        let ratio2 = poincare_ratio(&s, 2.0, &t, 1000, r, 1.0).unwrap().unwrap();
        assert!((ratio2 - (1.0 / 12.0) / (r * r)).abs() < 1e-3, "{ratio2}");

        let c = PoincareTest::with_slope(&s, GridFunction::constant(&s, 3.0)).unwrap();
        assert_eq!(poincare_ratio(&s, 1.0, &c, 10, 0.1, 1.0).unwrap(), None);
        let est = estimate_poincare(&s, 1.0, &[c], 1.0).unwrap();
        assert_eq!(est.c_p, 0.0);

        let missing = PoincareTest {
            f: GridFunction::constant(&s, 1.0),
            g: None,
        };
        assert!(estimate_poincare(&s, 1.0, &[missing], 1.0).is_err());
    }

    #[test]
    fn poincare_library_gives_finite_bound() {
        let s = unit(256);
        let lib = poincare_test_library(&s, 7).unwrap();
        let est = estimate_poincare(&s, 1.0, &lib, 1.0).unwrap();
        assert_eq!(est.violations, 0);
        assert!(est.c_p >= 0.5 - 1e-2 && est.c_p.is_finite(), "{est:?}");
    }

    #[test]
    fn description_json() {
        let d: SpaceDescription = serde_json::from_str(r#"{"type":"interval","n_cells":8,"weights":"uniform"}"#).unwrap();
        assert_eq!(d.build().unwrap().len(), 8);
        let d: SpaceDescription =
            serde_json::from_str(r#"{"type":"interval","n_cells":1024,"weights":{"generator":"fat_cantor","depth":3}}"#)
                .unwrap();
        assert_abs_diff_eq!(d.build().unwrap().total_mass(), 1.5625, epsilon = 1e-12);
        let d: SpaceDescription =
            serde_json::from_str(r#"{"type":"matrix","dist":[[0,0.5],[0.5,0]],"mass":[1,1]}"#).unwrap();
        assert_eq!(d.build().unwrap().diam(), 0.5);
        assert!(serde_json::from_str::<SpaceDescription>(r#"{"type":"interval","n_cells":8,"bogus":1}"#).is_err());
    }

    proptest! {
        #[test]
        fn ball_mass_monotone_and_saturates(n in 2usize..300, c in 0usize..300, r1 in 1e-4f64..1.2, r2 in 1e-4f64..1.2) {
            let s = unit(n);
            let c = c % n;
            let (a, b) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
            prop_assert!(s.ball_mass(c, a).unwrap() <= s.ball_mass(c, b).unwrap());
            prop_assert!((s.ball_mass(c, s.diam() + 1e-9).unwrap() - s.total_mass()).abs() < 1e-12);
        }

        #[test]
        fn total_mass_is_weight_sum(w in proptest::collection::vec(0.01f64..10.0, 2..400)) {
            let s = MetricMeasureSpace::weighted_interval(&w).unwrap();
            let expect: f64 = w.iter().sum::<f64>() / w.len() as f64;
            prop_assert!((s.total_mass() - expect).abs() <= 1e-12 * w.len() as f64 * expect.max(1.0));
        }

        #[test]
        fn doubling_bounded_on_uniform(n in 64usize..3000) {
            let s = unit(n);
            let c = estimate_doubling(&s, &default_doubling_scales(&s)).unwrap();
            prop_assert!(c >= 1.0 && c <= 2.0 + 10.0 / n as f64, "n={} c={}", n, c);
        }

        #[test]
        fn morph_order_relations(n in 20usize..400, a in 0.0f64..0.5, len in 0.05f64..0.5, d1 in 0.005f64..0.2, d2 in 0.005f64..0.2) {
            let s = unit(n);
            let u = DomainMask::interval(&s, a, a + len).unwrap();
            let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            let e_lo = morph_mask(&s, &u, lo, MorphMode::Erode).unwrap();
            let e_hi = morph_mask(&s, &u, hi, MorphMode::Erode).unwrap();
            let g_lo = morph_mask(&s, &u, lo, MorphMode::Dilate).unwrap();
            let g_hi = morph_mask(&s, &u, hi, MorphMode::Dilate).unwrap();
            prop_assert!(e_lo.is_subset(&u) && u.is_subset(&g_lo));
            prop_assert!(e_hi.is_subset(&e_lo));
            prop_assert!(g_lo.is_subset(&g_hi));
            // dilate(erode(U)) stays inside U on the grid
            if !e_lo.is_empty() {
                prop_assert!(morph_mask(&s, &e_lo, lo, MorphMode::Dilate).unwrap().is_subset(&u));
            }
            // erode(dilate(U)) recovers U
            prop_assert!(u.is_subset(&morph_mask(&s, &g_lo, lo, MorphMode::Erode).unwrap()) || lo < s.resolution());
        }
    }
}
