//! Mollifier families, their kernels, and numerical admissibility checks.
//!
//! A family is an indexed sequence of kernels `rho_i(x, y)`. Kernels are bound
//! to a space and a ball-mass oracle before evaluation; the diagonal `x == y`
//! is always excluded.
//!
//! The admissibility checker tests four conditions per index on sampled
//! centers:
//!
//! * lower bound, via option A (`rho >= C^-1 d^p r^-p chi_B(y,r) / mu(B(y,r))`)
//!   or option B (`rho >= d^p nu((d, inf)) / mu(B(y, d))` with a declared `nu`);
//! * the `nu`-mass `int_0^delta t^p d nu_i`, whose lower limit must be positive;
//! * dyadic majorant sums, which must stay bounded along the index;
//! * tail integrals of `rho / d^p` outside `delta`-balls, which must decay.

use crate::error::{Error, Result};
use crate::quadrature::integrate_positive;
use crate::reduce::{PairwiseAccumulator, Workers};
use crate::space::{BallMeasure, DomainMask, MetricMeasureSpace};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Fractional,
    Window,
    Indicator,
    Custom,
}

/// Normalization of indicator kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Normalization {
    /// `chi_{d < r} / mu(B(y, r) \ {y})`.
    #[default]
    #[serde(rename = "mu_ball")]
    MuBall,
    /// `chi_{d <= r} / (2 r)`, a density against cell length.
    #[serde(rename = "lebesgue_1d")]
    Lebesgue1d,
}

/// User-supplied kernels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CustomKernel {
    /// `rho_i = value(i, j) / mu(B(y, 2^{1-j}))` on the dyadic shell `j` of `d`.
    Tabulated { entries: Vec<(usize, u32, f64)> },
    /// `rho_i = chi_{|d - center| < width} / normalizer`, the same for every index.
    Ring { center: f64, width: f64, normalizer: f64 },
}

/// Power-law term `coef * t^exponent` of a `nu` density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerTerm {
    pub coef: f64,
    pub exponent: f64,
}

/// Positive measure on `[0, inf)` for option B of the lower bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NuMeasure {
    /// Density `sum_k coef_k t^exponent_k` on `(0, inf)`.
    Density { terms: Vec<PowerTerm> },
    /// Point masses `(location, weight)`.
    Atoms { atoms: Vec<(f64, f64)> },
}

impl NuMeasure {
    fn validate(&self) -> Result<()> {
        let ok = match self {
            NuMeasure::Density { terms } => {
                !terms.is_empty() && terms.iter().all(|t| t.coef >= 0.0 && t.coef.is_finite() && t.exponent.is_finite())
            }
            NuMeasure::Atoms { atoms } => atoms.iter().all(|&(t, w)| t >= 0.0 && t.is_finite() && w >= 0.0 && w.is_finite()),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter("nu must be a nonnegative measure with finite parameters".into()))
        }
    }

    pub fn density(&self, t: f64) -> f64 {
        match self {
            NuMeasure::Density { terms } => terms.iter().map(|k| k.coef * t.powf(k.exponent)).sum(),
            NuMeasure::Atoms { .. } => 0.0,
        }
    }

    /// `int_0^delta t^p d nu`.
    pub fn moment(&self, p: f64, delta: f64) -> f64 {
        match self {
            NuMeasure::Density { .. } => integrate_positive(|t| t.powf(p) * self.density(t), 0.0, delta),
            NuMeasure::Atoms { atoms } => atoms.iter().filter(|a| a.0 <= delta).map(|&(t, w)| t.powf(p) * w).sum(),
        }
    }

    /// `nu((d, inf))`.
    pub fn tail(&self, d: f64) -> f64 {
        match self {
            NuMeasure::Density { .. } => integrate_positive(|t| self.density(t), d, f64::INFINITY),
            NuMeasure::Atoms { atoms } => atoms.iter().filter(|a| a.0 > d).map(|a| a.1).sum(),
        }
    }
}

/// Where a kernel may be nonzero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Support {
    /// Zero unless `d < r` (or `d <= r` when `inclusive`).
    Radius { r: f64, inclusive: bool },
    Unbounded,
}

impl Support {
    pub fn radius(&self) -> Option<f64> {
        match self {
            Support::Radius { r, .. } => Some(*r),
            Support::Unbounded => None,
        }
    }

    pub(crate) fn as_query(&self) -> Option<(f64, bool)> {
        match self {
            Support::Radius { r, inclusive } => Some((*r, *inclusive)),
            Support::Unbounded => None,
        }
    }
}

/// Indexed kernel sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct MollifierFamily {
    kind: FamilyKind,
    p: f64,
    params: Vec<f64>,
    normalization: Normalization,
    custom: Option<CustomKernel>,
    nu: Option<Vec<NuMeasure>>,
    // per index: shell -> value
    table: Vec<HashMap<u32, f64>>,
}

fn check_p(p: f64) -> Result<()> {
    if p >= 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("p must satisfy p >= 1, got {p}")))
    }
}

fn check_decreasing_radii(r: &[f64]) -> Result<()> {
    if r.is_empty() {
        return Err(Error::InvalidParameter("radius sequence is empty".into()));
    }
    if let Some(bad) = r.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidParameter(format!("radii must be positive, got {bad}")));
    }
    if r.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidParameter("radii must be strictly decreasing".into()));
    }
    Ok(())
}

/// Dyadic shell `j >= 1` with `2^-j <= d < 2^{1-j}`, or `None` for `d >= 1` or `d <= 0`.
pub fn shell_of(d: f64) -> Option<u32> {
    if !(d > 0.0 && d < 1.0) {
        return None;
    }
    let mut j = (-d.log2()).floor().max(0.0) as i32 + 1;
    while j > 1 && d >= 2f64.powi(1 - j) {
        j -= 1;
    }
    while d < 2f64.powi(-j) {
        j += 1;
    }
    Some(j as u32)
}

/// Outer radius `2^{1-j}` of shell `j`.
pub fn shell_outer(j: u32) -> f64 {
    2f64.powi(1 - j as i32)
}

impl MollifierFamily {
    /// `rho_i = (1 - s_i) d^{p(1 - s_i)} / mu(B(y, d))`, with
    /// `nu_i = p s_i (1 - s_i) t^{-p s_i - 1} dt` declared for the lower bound.
    pub fn fractional(p: f64, s: &[f64]) -> Result<Self> {
        check_p(p)?;
        if s.is_empty() {
            return Err(Error::InvalidParameter("s sequence is empty".into()));
        }
        if let Some(bad) = s.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
            return Err(Error::InvalidParameter(format!("s must lie in (0, 1), got {bad}")));
        }
        if s.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("s must be strictly increasing".into()));
        }
        let nu = s
            .iter()
            .map(|&s| NuMeasure::Density {
                terms: vec![PowerTerm {
                    coef: p * s * (1.0 - s),
                    exponent: -p * s - 1.0,
                }],
            })
            .collect();
        Ok(Self {
            kind: FamilyKind::Fractional,
            p,
            params: s.to_vec(),
            normalization: Normalization::MuBall,
            custom: None,
            nu: Some(nu),
            table: Vec::new(),
        })
    }

    /// `rho_i = r_i^{-p} d^p chi_{d < r_i} / mu(B(y, r_i))`.
    pub fn window(p: f64, r: &[f64]) -> Result<Self> {
        check_p(p)?;
        check_decreasing_radii(r)?;
        Ok(Self {
            kind: FamilyKind::Window,
            p,
            params: r.to_vec(),
            normalization: Normalization::MuBall,
            custom: None,
            nu: None,
            table: Vec::new(),
        })
    }

    /// Normalized indicators of `r_i`-balls.
    pub fn indicator(p: f64, r: &[f64], normalization: Normalization) -> Result<Self> {
        check_p(p)?;
        check_decreasing_radii(r)?;
        Ok(Self {
            kind: FamilyKind::Indicator,
            p,
            params: r.to_vec(),
            normalization,
            custom: None,
            nu: None,
            table: Vec::new(),
        })
    }

    /// Custom kernel; `labels` are the reported index parameters.
    pub fn custom(p: f64, labels: &[f64], kernel: CustomKernel) -> Result<Self> {
        check_p(p)?;
        if labels.is_empty() || labels.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("custom index labels must be nonempty and strictly increasing".into()));
        }
        let mut table = vec![HashMap::new(); labels.len()];
        match &kernel {
            CustomKernel::Tabulated { entries } => {
                for &(i, j, v) in entries {
                    if i >= labels.len() || j == 0 || !(v >= 0.0 && v.is_finite()) {
                        return Err(Error::InvalidParameter(format!(
                            "bad table entry ({i}, {j}, {v}): need index < {}, shell >= 1, value >= 0",
                            labels.len()
                        )));
                    }
                    table[i].insert(j, v);
                }
            }
            CustomKernel::Ring {
                center,
                width,
                normalizer,
            } => {
                if !(*center > 0.0 && *width > 0.0 && *normalizer > 0.0) {
                    return Err(Error::InvalidParameter("ring center, width and normalizer must be positive".into()));
                }
            }
        }
        Ok(Self {
            kind: FamilyKind::Custom,
            p,
            params: labels.to_vec(),
            normalization: Normalization::MuBall,
            custom: Some(kernel),
            nu: None,
            table,
        })
    }

    /// Ring kernel concentrated at distance `center`.
    pub fn ring(p: f64, n_indices: usize, center: f64, width: f64) -> Result<Self> {
        let labels: Vec<f64> = (1..=n_indices).map(|i| i as f64).collect();
        Self::custom(
            p,
            &labels,
            CustomKernel::Ring {
                center,
                width,
                normalizer: 4.0 * width,
            },
        )
    }

    /// Declares one `nu_i` per index for option B of the lower bound.
    pub fn with_nu(mut self, nu: Vec<NuMeasure>) -> Result<Self> {
        if nu.len() != self.params.len() {
            return Err(Error::LengthMismatch {
                expected: self.params.len(),
                got: nu.len(),
            });
        }
        for m in &nu {
            m.validate()?;
        }
        self.nu = Some(nu);
        Ok(self)
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn nu(&self, i: usize) -> Option<&NuMeasure> {
        self.nu.as_ref().map(|v| &v[i])
    }

    /// Radius `r_i` for families defined by radii.
    pub fn radius(&self, i: usize) -> Option<f64> {
        match self.kind {
            FamilyKind::Window | FamilyKind::Indicator => Some(self.params[i]),
            _ => None,
        }
    }

    pub fn support(&self, i: usize) -> Support {
        match (self.kind, &self.custom) {
            (FamilyKind::Fractional, _) => Support::Unbounded,
            (FamilyKind::Window, _) => Support::Radius {
                r: self.params[i],
                inclusive: false,
            },
            (FamilyKind::Indicator, _) => Support::Radius {
                r: self.params[i],
                inclusive: self.normalization == Normalization::Lebesgue1d,
            },
            (FamilyKind::Custom, Some(CustomKernel::Ring { center, width, .. })) => Support::Radius {
                r: center + width,
                inclusive: false,
            },
            (FamilyKind::Custom, _) => {
                let r = self.table[i]
                    .iter()
                    .filter(|(_, v)| **v > 0.0)
                    .map(|(j, _)| shell_outer(*j))
                    .fold(0.0, f64::max);
                Support::Radius { r, inclusive: false }
            }
        }
    }

    /// Binds index `i` to a space and a ball-mass oracle.
    pub fn kernel<'a>(&'a self, i: usize, balls: &'a BallMeasure<'a>) -> Result<Kernel<'a>> {
        if i >= self.len() {
            return Err(Error::InvalidParameter(format!("index {i} out of range for {} indices", self.len())));
        }
        if self.kind == FamilyKind::Indicator
            && self.normalization == Normalization::Lebesgue1d
            && !balls.space().is_interval()
        {
            return Err(Error::NotInterval {
                op: "lebesgue_1d normalization",
                hint: "use the mu_ball normalization on matrix spaces",
            });
        }
        Ok(Kernel {
            family: self,
            i,
            balls,
            param: self.params[i],
        })
    }
}

/// Kernel `rho_i` bound to a space.
#[derive(Debug, Clone)]
pub struct Kernel<'a> {
    family: &'a MollifierFamily,
    i: usize,
    balls: &'a BallMeasure<'a>,
    param: f64,
}

impl<'a> Kernel<'a> {
    pub fn support(&self) -> Support {
        self.family.support(self.i)
    }

    pub fn space(&self) -> &'a MetricMeasureSpace {
        self.balls.space()
    }

    /// `rho_i(x, y)`.
    pub fn eval(&self, x: usize, y: usize) -> f64 {
        if x == y {
            return 0.0;
        }
        self.row(y).eval(x, self.space().dist(x, y))
    }

    /// Kernel with `y` fixed and its `y`-dependent normalizer cached.
    #[inline]
    pub fn row(&self, y: usize) -> RowKernel<'_, 'a> {
        let f = self.family;
        let scale = match f.kind {
            FamilyKind::Window => {
                let m = self.balls.ball_mass(y, self.param);
                f64::powf(self.param, -f.p) / m
            }
            FamilyKind::Indicator => match f.normalization {
                Normalization::MuBall => {
                    let m = self.balls.ball_mass(y, self.param) - self.balls.point_mass(y);
                    if m > 0.0 {
                        1.0 / m
                    } else {
                        0.0
                    }
                }
                Normalization::Lebesgue1d => 0.5 / self.param,
            },
            FamilyKind::Fractional => 1.0 - self.param,
            FamilyKind::Custom => match &f.custom {
                Some(CustomKernel::Ring { normalizer, .. }) => 1.0 / normalizer,
                _ => 1.0,
            },
        };
        RowKernel { kernel: self, y, scale }
    }
}

/// [`Kernel`] restricted to a fixed second argument `y`.
#[derive(Debug, Clone)]
pub struct RowKernel<'k, 'a> {
    kernel: &'k Kernel<'a>,
    y: usize,
    scale: f64,
}

impl RowKernel<'_, '_> {
    /// `rho_i(x, y)` for `x != y` at distance `d`.
    #[inline]
    pub fn eval(&self, x: usize, d: f64) -> f64 {
        let k = self.kernel;
        let f = k.family;
        let r = k.param;
        match f.kind {
            FamilyKind::Window => {
                if d < r {
                    self.scale * d.powf(f.p)
                } else {
                    0.0
                }
            }
            FamilyKind::Indicator => {
                let inside = match f.normalization {
                    Normalization::MuBall => d < r,
                    Normalization::Lebesgue1d => d <= r,
                };
                if inside && d > 0.0 {
                    self.scale
                } else {
                    0.0
                }
            }
            FamilyKind::Fractional => {
                if d > 0.0 {
                    self.scale * d.powf(f.p * self.scale) / k.balls.ball_mass_to(self.y, x, d)
                } else {
                    0.0
                }
            }
            FamilyKind::Custom => match &f.custom {
                Some(CustomKernel::Ring { center, width, .. }) => {
                    if (d - center).abs() < *width {
                        self.scale
                    } else {
                        0.0
                    }
                }
                _ => match shell_of(d).and_then(|j| f.table[k.i].get(&j).map(|v| (j, *v))) {
                    Some((j, v)) if v > 0.0 => v / k.balls.ball_mass(self.y, shell_outer(j)),
                    _ => 0.0,
                },
            },
        }
    }
}

/// Evenly strided centers including both ends, or all points when `n <= max`.
pub fn sample_centers(n: usize, max: usize) -> Vec<usize> {
    if n <= max || max < 2 {
        return (0..n).collect();
    }
    let mut out: Vec<usize> = (0..max).map(|k| k * (n - 1) / (max - 1)).collect();
    out.dedup();
    out
}

/// Coefficients `d_{i,j}` of the dyadic majorant for one index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadicMajorant {
    pub index: usize,
    /// `coeffs[j - 1] = d_{i,j}` for shells `j = 1..=truncation_depth`.
    pub coeffs: Vec<f64>,
    pub sum: f64,
    /// Finest shell holding a representable distance.
    pub truncation_depth: u32,
    pub centers_sampled: usize,
}

impl DyadicMajorant {
    /// Majorant value `d_{i,j} / mu(B(y, 2^{1-j}))` at a pair in shell `j`.
    pub fn bound(&self, balls: &BallMeasure<'_>, y: usize, d: f64) -> f64 {
        match shell_of(d) {
            Some(j) => {
                let j = j.min(self.truncation_depth);
                self.coeffs[j as usize - 1] / balls.ball_mass(y, shell_outer(j))
            }
            None => 0.0,
        }
    }
}

/// Sampling controls for the admissibility checks.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckOptions {
    /// Centers `y` (and `x` for the transposed tail integral) used per index.
    #[serde(default = "default_max_centers")]
    pub max_centers: usize,
    /// Relative slack allowed in the option B comparison (covers quadrature error).
    #[serde(default = "default_option_b_slack")]
    pub option_b_slack: f64,
}

fn default_max_centers() -> usize {
    256
}
fn default_option_b_slack() -> f64 {
    1e-6
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            max_centers: default_max_centers(),
            option_b_slack: default_option_b_slack(),
        }
    }
}

fn truncation_depth(space: &MetricMeasureSpace) -> u32 {
    shell_of(space.resolution().min(0.999_999)).unwrap_or(1)
}

/// Dyadic majorant coefficients of `rho_i`, from pairs with `0 < d < 1`.
///
/// Distances below the grid resolution do not occur, so shells finer than the
/// resolution shell are empty and omitted.
pub fn dyadic_majorant(family: &MollifierFamily, space: &MetricMeasureSpace, i: usize, opts: &CheckOptions) -> Result<DyadicMajorant> {
    let balls = BallMeasure::full(space);
    let kernel = family.kernel(i, &balls)?;
    let depth = truncation_depth(space);
    let centers = sample_centers(space.len(), opts.max_centers);
    let mut coeffs = vec![0.0f64; depth as usize];
    let query = match kernel.support() {
        Support::Radius { r, inclusive } if r < 1.0 => Some((r, inclusive)),
        _ => Some((1.0, false)),
    };
    for &y in &centers {
        let row = kernel.row(y);
        let outer: Vec<f64> = (1..=depth).map(|j| balls.ball_mass(y, shell_outer(j))).collect();
        space.for_each_neighbor(y, query, |x, d| {
            if let Some(j) = shell_of(d) {
                let j = j.min(depth) as usize;
                let v = row.eval(x, d) * outer[j - 1];
                if v > coeffs[j - 1] {
                    coeffs[j - 1] = v;
                }
            }
        });
    }
    let mut acc = PairwiseAccumulator::new();
    coeffs.iter().for_each(|c| acc.add(*c));
    Ok(DyadicMajorant {
        index: i,
        coeffs,
        sum: acc.sum(),
        truncation_depth: depth,
        centers_sampled: centers.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LowerOption {
    A,
    B,
    #[serde(rename = "fail")]
    Fail,
}

/// Conditions reported by [`check_admissibility`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// Pointwise lower bound (option A or B) for every index.
    LowerBound,
    /// Positive lower limit of the `nu`-mass near zero.
    NuMass,
    /// Uniformly bounded dyadic majorant sums.
    Majorant,
    /// Decay of the off-diagonal tail integrals.
    TailDecay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

/// `nu`-mass per index at one probe radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuMassRow {
    pub delta: f64,
    /// `int_0^delta t^p d nu_i`; `None` where no `nu_i` is declared.
    pub values: Vec<Option<f64>>,
    /// Minimum over the last three declared values.
    pub liminf_proxy: Option<f64>,
}

/// Tail integrals per index at one probe radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub delta: f64,
    pub values: Vec<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub kind: FamilyKind,
    pub p: f64,
    pub params: Vec<f64>,
    pub lower_option: Vec<LowerOption>,
    /// Smallest `C` making option A hold, per index (`null` when option A is unavailable or fails).
    pub option_a_constant: Vec<Option<f64>>,
    pub nu_mass: Vec<NuMassRow>,
    pub majorant_coeffs: Vec<DyadicMajorant>,
    pub majorant_sums: Vec<f64>,
    pub tail_decay: Vec<TailRow>,
    /// Smallest constant consistent with the satisfied conditions.
    pub c_rho: f64,
    pub verdict: Verdict,
    pub failed: Vec<Condition>,
    pub centers_sampled: usize,
}

/// Decay rule for a tail sequence: last value below a tenth of the first (or
/// zero) and nonincreasing over the last three values.
pub fn tail_decays(values: &[f64]) -> bool {
    let (Some(&first), Some(&last)) = (values.first(), values.last()) else {
        return false;
    };
    let small = last == 0.0 || last < 0.1 * first;
    let k = values.len().saturating_sub(3);
    let trend = values[k..].windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    small && trend
}

struct IndexCheck {
    lower: LowerOption,
    c_a: Option<f64>,
    majorant: DyadicMajorant,
    tails: Vec<f64>,
}

fn check_index(
    family: &MollifierFamily,
    space: &MetricMeasureSpace,
    i: usize,
    deltas: &[f64],
    tail_domain: &DomainMask,
    opts: &CheckOptions,
) -> Result<IndexCheck> {
    let balls = BallMeasure::full(space);
    let kernel = family.kernel(i, &balls)?;
    let p = family.p;
    let centers = sample_centers(space.len(), opts.max_centers);

    // lower bound on pairs with d <= 1
    let mut option_b = family.nu(i).is_some();
    let mut nu_tail: HashMap<u64, f64> = HashMap::new();
    let mut c_a: Option<f64> = family.radius(i).map(|_| 0.0);
    let r_i = family.radius(i);
    for &y in &centers {
        let row = kernel.row(y);
        let ball_r = r_i.map(|r| balls.ball_mass(y, r));
        space.for_each_neighbor(y, Some((1.0, true)), |x, d| {
            let rho = row.eval(x, d);
            if let (Some(r), Some(m), Some(c)) = (r_i, ball_r, c_a.as_mut()) {
                if d < r {
                    let need = (d / r).powf(p) / m;
                    if rho > 0.0 {
                        *c = c.max(need / rho);
                    } else {
                        *c = f64::INFINITY;
                    }
                }
            }
            if option_b {
                let nu = family.nu(i).expect("declared");
                let t = *nu_tail.entry(d.to_bits()).or_insert_with(|| nu.tail(d));
                let need = d.powf(p) * t / balls.ball_mass_to(y, x, d);
                if rho < need * (1.0 - opts.option_b_slack) {
                    option_b = false;
                }
            }
        });
    }
    let c_a = c_a.filter(|c| c.is_finite());
    let lower = if option_b {
        LowerOption::B
    } else if c_a.is_some() {
        LowerOption::A
    } else {
        LowerOption::Fail
    };

    let majorant = dyadic_majorant(family, space, i, opts)?;

    // tail integrals, both orientations, restricted to the tail domain
    let mut tails = vec![0.0f64; deltas.len()];
    let tail_centers: Vec<usize> = centers.iter().copied().filter(|&c| tail_domain.contains(c)).collect();
    for &y in &tail_centers {
        let row = kernel.row(y);
        let mut acc: Vec<PairwiseAccumulator> = vec![PairwiseAccumulator::new(); deltas.len()];
        space.for_each_neighbor(y, kernel.support().as_query(), |x, d| {
            if tail_domain.contains(x) {
                let v = row.eval(x, d) / d.powf(p) * space.mass(x);
                for (k, &delta) in deltas.iter().enumerate() {
                    if d >= delta {
                        acc[k].add(v);
                    }
                }
            }
        });
        for (t, a) in tails.iter_mut().zip(&acc) {
            *t = t.max(a.sum());
        }
    }
    let mut transposed = vec![0.0f64; deltas.len()];
    for &x in &tail_centers {
        let mut acc: Vec<PairwiseAccumulator> = vec![PairwiseAccumulator::new(); deltas.len()];
        space.for_each_neighbor(x, kernel.support().as_query(), |y, d| {
            if tail_domain.contains(y) {
                let v = kernel.row(y).eval(x, d) / d.powf(p) * space.mass(y);
                for (k, &delta) in deltas.iter().enumerate() {
                    if d >= delta {
                        acc[k].add(v);
                    }
                }
            }
        });
        for (t, a) in transposed.iter_mut().zip(&acc) {
            *t = t.max(a.sum());
        }
    }
    for (t, u) in tails.iter_mut().zip(transposed) {
        *t += u;
    }
    Ok(IndexCheck {
        lower,
        c_a,
        majorant,
        tails,
    })
}

/// Checks the admissibility conditions on sampled centers.
///
/// `deltas` are the probe radii for the `nu`-mass and the tail integrals;
/// `tail_domain` restricts both variables of the tail integrals.
pub fn check_admissibility(
    family: &MollifierFamily,
    space: &MetricMeasureSpace,
    deltas: &[f64],
    tail_domain: &DomainMask,
    opts: &CheckOptions,
    workers: &Workers,
) -> Result<AdmissibilityReport> {
    if family.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "admissibility needs at least 3 indices, got {}",
            family.len()
        )));
    }
    if deltas.is_empty() || deltas.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::InvalidParameter("probe radii must be nonempty and positive".into()));
    }
    if tail_domain.len() != space.len() {
        return Err(Error::LengthMismatch {
            expected: space.len(),
            got: tail_domain.len(),
        });
    }
    let checks: Vec<Result<IndexCheck>> =
        workers.map_blocks(family.len(), |i| check_index(family, space, i, deltas, tail_domain, opts));
    let checks: Vec<IndexCheck> = checks.into_iter().collect::<Result<_>>()?;
    let n = family.len();
    let mut failed = Vec::new();
    let mut c_rho: f64 = 1.0;

    let lower_option: Vec<LowerOption> = checks.iter().map(|c| c.lower).collect();
    if lower_option.contains(&LowerOption::Fail) {
        failed.push(Condition::LowerBound);
    } else {
        for c in &checks {
            if c.lower == LowerOption::A {
                c_rho = c_rho.max(c.c_a.unwrap_or(1.0));
            }
        }
    }

    let uses_b = lower_option.contains(&LowerOption::B);
    let nu_mass: Vec<NuMassRow> = deltas
        .iter()
        .map(|&delta| {
            let values: Vec<Option<f64>> = (0..n).map(|i| family.nu(i).map(|nu| nu.moment(family.p, delta))).collect();
            let declared: Vec<f64> = values.iter().flatten().copied().collect();
            let liminf_proxy = if declared.is_empty() {
                None
            } else {
                declared[declared.len().saturating_sub(3)..].iter().copied().reduce(f64::min)
            };
            NuMassRow {
                delta,
                values,
                liminf_proxy,
            }
        })
        .collect();
    if uses_b {
        let proxies: Vec<Option<f64>> = nu_mass.iter().map(|r| r.liminf_proxy).collect();
        if proxies.iter().all(|p| matches!(p, Some(v) if *v > 0.0 && v.is_finite())) {
            for v in proxies.into_iter().flatten() {
                c_rho = c_rho.max(1.0 / v);
            }
        } else {
            failed.push(Condition::NuMass);
        }
    }

    let majorant_sums: Vec<f64> = checks.iter().map(|c| c.majorant.sum).collect();
    let head = majorant_sums[..3.min(n)].iter().copied().fold(0.0, f64::max);
    let tail = majorant_sums[n.saturating_sub(3)..].iter().copied().fold(0.0, f64::max);
    if majorant_sums.iter().all(|s| s.is_finite()) && tail <= 2.0 * head.max(f64::MIN_POSITIVE) {
        c_rho = c_rho.max(majorant_sums.iter().copied().fold(0.0, f64::max));
    } else {
        failed.push(Condition::Majorant);
    }

    let tail_decay: Vec<TailRow> = deltas
        .iter()
        .enumerate()
        .map(|(k, &delta)| {
            let values: Vec<f64> = checks.iter().map(|c| c.tails[k]).collect();
            let pass = tail_decays(&values);
            TailRow { delta, values, pass }
        })
        .collect();
    if tail_decay.iter().any(|r| !r.pass) {
        failed.push(Condition::TailDecay);
    }

    Ok(AdmissibilityReport {
        kind: family.kind,
        p: family.p,
        params: family.params.clone(),
        lower_option,
        option_a_constant: checks.iter().map(|c| c.c_a).collect(),
        nu_mass,
        majorant_sums,
        majorant_coeffs: checks.into_iter().map(|c| c.majorant).collect(),
        tail_decay,
        c_rho,
        verdict: if failed.is_empty() { Verdict::Pass } else { Verdict::Fail },
        failed,
        centers_sampled: sample_centers(space.len(), opts.max_centers).len(),
    })
}

/// Ring kernel description inside [`FamilyDescription`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RingDescription {
    pub center: f64,
    pub width: f64,
    pub normalizer: Option<f64>,
}

/// JSON description of a family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyDescription {
    pub kind: FamilyKind,
    /// Exponent; the experiment's `p` is used when absent.
    #[serde(default)]
    pub p: Option<f64>,
    /// `s_i` for fractional families, `r_i` for window and indicator
    /// families, index labels for custom kernels.
    pub params: Vec<f64>,
    #[serde(default)]
    pub normalization: Normalization,
    /// Custom kernel table of `(index, shell, value)` triples.
    #[serde(default)]
    pub table: Option<Vec<(usize, u32, f64)>>,
    #[serde(default)]
    pub ring: Option<RingDescription>,
    /// Declared `nu_i`, one per index.
    #[serde(default)]
    pub nu: Option<Vec<NuMeasure>>,
}

impl FamilyDescription {
    pub fn build(&self, default_p: f64) -> Result<MollifierFamily> {
        let p = self.p.unwrap_or(default_p);
        let family = match self.kind {
            FamilyKind::Fractional => MollifierFamily::fractional(p, &self.params)?,
            FamilyKind::Window => MollifierFamily::window(p, &self.params)?,
            FamilyKind::Indicator => MollifierFamily::indicator(p, &self.params, self.normalization)?,
            FamilyKind::Custom => {
                let kernel = match (&self.table, &self.ring) {
                    (Some(entries), None) => CustomKernel::Tabulated {
                        entries: entries.clone(),
                    },
                    (None, Some(ring)) => CustomKernel::Ring {
                        center: ring.center,
                        width: ring.width,
                        normalizer: ring.normalizer.unwrap_or(4.0 * ring.width),
                    },
                    _ => {
                        return Err(Error::Config(
                            "custom families need exactly one of \"table\" or \"ring\"".into(),
                        ))
                    }
                };
                MollifierFamily::custom(p, &self.params, kernel)?
            }
        };
        match &self.nu {
            Some(nu) => family.with_nu(nu.clone()),
            None => Ok(family),
        }
    }
}
