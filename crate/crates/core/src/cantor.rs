//! Fat Cantor set, its weighted interval space, and the comparison between
//! the nonlocal functional and the total variation on it.
//!
//! `A_0 = [0, 1]`; step `i` removes from every component of `A_{i-1}` the open
//! interval of length `2^{-2i}` centered at the component midpoint. All
//! endpoints are dyadic and stored exactly as multiples of `2^-32`.

use crate::energy::tv;
use crate::error::{Error, Result};
use crate::functional::{evaluate, EvalOptions};
use crate::grid::{Generator, GridFunction};
use crate::mollifier::{MollifierFamily, Normalization};
use crate::reduce::Workers;
use crate::space::{DomainMask, MetricMeasureSpace};
use serde::{Deserialize, Serialize};

const SCALE_BITS: u32 = 32;
const ONE: u64 = 1 << SCALE_BITS;
pub const MAX_DEPTH: u32 = 12;

/// Interval with endpoints `lo / 2^32` and `hi / 2^32`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DyadicInterval {
    pub lo: u64,
    pub hi: u64,
}

impl DyadicInterval {
    pub fn start(&self) -> f64 {
        self.lo as f64 / ONE as f64
    }

    pub fn end(&self) -> f64 {
        self.hi as f64 / ONE as f64
    }

    pub fn len(&self) -> f64 {
        (self.hi - self.lo) as f64 / ONE as f64
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }

    /// Position of `num / den` relative to the interval: `-1` left, `0` inside, `1` right.
    fn locate(&self, num: u128, den: u128, closed: bool) -> i8 {
        let x = num * u128::from(ONE);
        let (lo, hi) = (u128::from(self.lo) * den, u128::from(self.hi) * den);
        let (left, right) = if closed { (x < lo, x > hi) } else { (x <= lo, x >= hi) };
        if left {
            -1
        } else if right {
            1
        } else {
            0
        }
    }
}

fn contains_sorted(parts: &[DyadicInterval], num: u128, den: u128, closed: bool) -> bool {
    parts
        .binary_search_by(|iv| match iv.locate(num, den, closed) {
            -1 => std::cmp::Ordering::Greater,
            1 => std::cmp::Ordering::Less,
            _ => std::cmp::Ordering::Equal,
        })
        .is_ok()
}

/// Finite-depth fat Cantor construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FatCantorSpec {
    pub depth: u32,
    /// `components[i]`: the `2^i` closed intervals of `A_i`, for `i = 0..=depth`.
    pub components: Vec<Vec<DyadicInterval>>,
    /// `gaps[i - 1]`: the `2^{i-1}` open intervals of `D_i`, for `i = 1..=depth`.
    pub gaps: Vec<Vec<DyadicInterval>>,
    /// `lengths[i] = L_i`, the Lebesgue measure of `A_i`.
    pub lengths: Vec<f64>,
    /// `lim L_i`.
    pub limit: f64,
}

/// Builds the construction down to depth `m` (`1 <= m <= 12`).
pub fn fat_cantor(m: u32) -> Result<FatCantorSpec> {
    if !(1..=MAX_DEPTH).contains(&m) {
        return Err(Error::InvalidParameter(format!("depth must lie in 1..={MAX_DEPTH}, got {m}")));
    }
    let mut components = vec![vec![DyadicInterval { lo: 0, hi: ONE }]];
    let mut gaps = Vec::new();
    for i in 1..=m {
        let half_gap = 1u64 << (SCALE_BITS - 2 * i - 1);
        let mut next = Vec::new();
        let mut level = Vec::new();
        for c in &components[i as usize - 1] {
            let mid = c.lo + (c.hi - c.lo) / 2;
            debug_assert_eq!((c.hi - c.lo) % 2, 0);
            let gap = DyadicInterval {
                lo: mid - half_gap,
                hi: mid + half_gap,
            };
            next.push(DyadicInterval { lo: c.lo, hi: gap.lo });
            next.push(DyadicInterval { lo: gap.hi, hi: c.hi });
            level.push(gap);
        }
        components.push(next);
        gaps.push(level);
    }
    let lengths = components
        .iter()
        .map(|level| level.iter().map(|c| c.hi - c.lo).sum::<u64>() as f64 / ONE as f64)
        .collect();
    Ok(FatCantorSpec {
        depth: m,
        components,
        gaps,
        lengths,
        limit: 0.5,
    })
}

impl FatCantorSpec {
    /// `L_i`.
    pub fn length(&self, i: u32) -> f64 {
        self.lengths[i as usize]
    }

    /// Whether `num / den` lies in the closed set `A_depth`.
    pub fn in_set(&self, num: u128, den: u128) -> bool {
        contains_sorted(&self.components[self.depth as usize], num, den, true)
    }

    /// Whether `num / den` lies in the open set `D_i`.
    pub fn in_gap(&self, i: u32, num: u128, den: u128) -> bool {
        contains_sorted(&self.gaps[i as usize - 1], num, den, false)
    }

    /// Cell weights: 2 where the cell center lies in `A_depth`, 1 elsewhere.
    pub fn weights(&self, n_cells: usize) -> Vec<f64> {
        let den = 2 * n_cells as u128;
        (0..n_cells)
            .map(|k| if self.in_set(2 * k as u128 + 1, den) { 2.0 } else { 1.0 })
            .collect()
    }

    /// Minimum number of cells: four per finest gap.
    pub fn min_cells(&self) -> usize {
        1usize << (2 * self.depth + 2)
    }
}

/// Weighted interval carrying `w = 1 + chi_{A_m}`.
pub fn cantor_space(spec: &FatCantorSpec, n_cells: usize) -> Result<MetricMeasureSpace> {
    if n_cells < spec.min_cells() {
        return Err(Error::Resolution(format!(
            "depth {} needs at least {} cells (4 per finest gap), got {n_cells}",
            spec.depth,
            spec.min_cells()
        )));
    }
    MetricMeasureSpace::weighted_interval(&spec.weights(n_cells))
}

/// The Cantor function `f` and its approximants on a grid.
#[derive(Debug, Clone)]
pub struct CantorFunctions {
    /// `f(x) = int_0^x 2 chi_{A_m}`.
    pub f: GridFunction,
    /// `approximants[i - 1] = f_i`, `f_i(x) = int_0^x chi_{D_i} / (L_{i-1} - L_i)`.
    pub approximants: Vec<GridFunction>,
    /// `densities[i - 1] = g_i` sampled at cell centers.
    pub densities: Vec<GridFunction>,
}

fn cumulative_midpoint(g: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(g.len());
    let mut acc = 0.0;
    for &v in g {
        out.push(acc + 0.5 * v * h);
        acc += v * h;
    }
    out
}

/// Samples `f` and `f_1, ..., f_m` by midpoint sums over the cells of `space`.
pub fn cantor_function(spec: &FatCantorSpec, space: &MetricMeasureSpace) -> Result<CantorFunctions> {
    let (Some(h), Some(weights)) = (space.cell_len(), space.weights()) else {
        return Err(Error::NotInterval {
            op: "cantor_function",
            hint: "build the space with cantor_space",
        });
    };
    let n = space.len();
    let den = 2 * n as u128;
    let in_a: Vec<bool> = (0..n).map(|k| spec.in_set(2 * k as u128 + 1, den)).collect();
    if let Some(k) = (0..n).find(|&k| weights[k] != if in_a[k] { 2.0 } else { 1.0 }) {
        return Err(Error::Inconsistent(format!(
            "space weights do not match the depth-{} construction at cell {k}",
            spec.depth
        )));
    }
    let g: Vec<f64> = in_a.iter().map(|&a| if a { 2.0 } else { 0.0 }).collect();
    let f = GridFunction::new(cumulative_midpoint(&g, h));
    let mut approximants = Vec::new();
    let mut densities = Vec::new();
    for i in 1..=spec.depth {
        let height = 1.0 / (spec.length(i - 1) - spec.length(i));
        let gi: Vec<f64> = (0..n)
            .map(|k| if spec.in_gap(i, 2 * k as u128 + 1, den) { height } else { 0.0 })
            .collect();
        approximants.push(GridFunction::new(cumulative_midpoint(&gi, h)));
        densities.push(GridFunction::new(gi));
    }
    Ok(CantorFunctions {
        f,
        approximants,
        densities,
    })
}

/// Outcome of [`run_counterexample`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub depth: u32,
    pub n_cells: usize,
    pub total_mass: f64,
    /// Analytic total variation of the infinite-depth Cantor function.
    pub tv_reference: f64,
    pub tv_discrete_delta0: f64,
    pub tv_discrete_gapscale: f64,
    pub gap_scale: f64,
    /// Limit `8 L_m` of the functional for the depth-`m` function.
    pub closed_form: f64,
    pub radii: Vec<f64>,
    pub functional_values: Vec<f64>,
    /// Radii at or above `2^{-2m}`, where the construction is not resolved.
    pub unresolved_radii: Vec<f64>,
    pub epsilon: f64,
    /// `functional(min radius) >= 2 (1 - epsilon) tv_reference`.
    pub lower_bound_check: bool,
    pub bump_tv: f64,
    pub bump_functional: f64,
    pub bump_ratio: f64,
}

/// Builds the depth-`m` example on `n_cells` cells and evaluates the
/// `lebesgue_1d` indicator functional (`p = 1`) at each radius.
pub fn run_counterexample(m: u32, n_cells: usize, radii: &[f64], epsilon: f64, workers: &Workers) -> Result<CounterexampleReport> {
    let spec = fat_cantor(m)?;
    let space = cantor_space(&spec, n_cells)?;
    let h = 1.0 / n_cells as f64;
    if radii.is_empty() || radii.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidParameter("radii must be nonempty and strictly descending".into()));
    }
    let finest_gap = 2f64.powi(-2 * m as i32);
    let r_min = *radii.last().expect("nonempty");
    if r_min >= finest_gap {
        return Err(Error::Resolution(format!(
            "smallest radius {r_min} must be below the finest gap length {finest_gap}"
        )));
    }
    if r_min < 8.0 * h {
        return Err(Error::Resolution(format!(
            "radius {r_min} spans fewer than 8 cells of length {h}"
        )));
    }
    if !(epsilon >= 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon must lie in [0, 1), got {epsilon}")));
    }
    let f = cantor_function(&spec, &space)?.f;
    let family = MollifierFamily::indicator(1.0, radii, Normalization::Lebesgue1d)?;
    let omega = DomainMask::full(&space);
    let opts = EvalOptions::default();
    let functional_values = (0..radii.len())
        .map(|i| evaluate(&space, &f, &family, i, &omega, &opts, workers).map(|e| e.value))
        .collect::<Result<Vec<_>>>()?;
    let gap_scale = 2f64.powi(-(m as i32));
    let tv0 = tv(&f, &space, 0.0)?.value;
    let tv_gap = tv(&f, &space, gap_scale)?.value;

    let bump = Generator::Tent {
        left: 0.375,
        right: 0.625,
        height: 1.0,
    }
    .build(&space)?;
    let bump_tv = tv(&bump, &space, 0.0)?.value;
    let last = radii.len() - 1;
    let bump_functional = evaluate(&space, &bump, &family, last, &omega, &opts, workers)?.value;

    let tv_reference = 1.0;
    let value = functional_values[last];
    Ok(CounterexampleReport {
        depth: m,
        n_cells,
        total_mass: space.total_mass(),
        tv_reference,
        tv_discrete_delta0: tv0,
        tv_discrete_gapscale: tv_gap,
        gap_scale,
        closed_form: 8.0 * spec.length(m),
        radii: radii.to_vec(),
        unresolved_radii: radii.iter().copied().filter(|&r| r >= finest_gap).collect(),
        functional_values,
        epsilon,
        lower_bound_check: value >= 2.0 * (1.0 - epsilon) * tv_reference,
        bump_tv,
        bump_functional,
        bump_ratio: bump_functional / bump_tv,
    })
}
