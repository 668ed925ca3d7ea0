//! The nonlocal functional
//! `sum_{x != y in Omega} |f(x) - f(y)|^p / d(x, y)^p * rho_i(x, y) * mu(x) * mu(y)`,
//! sweeps along a family, and empirical comparability constants.

use crate::energy::EnergyReport;
use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::mollifier::{dyadic_majorant, CheckOptions, MollifierFamily, Support};
use crate::reduce::{PairwiseAccumulator, Workers};
use crate::space::{BallMeasure, DomainMask, MetricMeasureSpace};
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Pair enumeration strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Enumerate pairs within the kernel support, or within the majorant
    /// cutoff for unbounded kernels.
    #[default]
    Pruned,
    /// Enumerate every ordered pair.
    Dense,
}

/// Measure used for the ball masses inside kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BallScope {
    #[default]
    Full,
    /// `mu` restricted to the integration domain.
    Omega,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalOptions {
    #[serde(default)]
    pub mode: EvalMode,
    #[serde(default)]
    pub ball_scope: BallScope,
    /// Outer points per parallel block.
    #[serde(default = "default_block_len")]
    pub block_len: usize,
    /// Relative majorant mass below which far shells of unbounded kernels are dropped.
    #[serde(default = "default_cutoff_tol")]
    pub cutoff_tol: f64,
}

fn default_block_len() -> usize {
    64
}
fn default_cutoff_tol() -> f64 {
    1e-6
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            mode: EvalMode::Pruned,
            ball_scope: BallScope::Full,
            block_len: default_block_len(),
            cutoff_tol: default_cutoff_tol(),
        }
    }
}

/// Value of the functional at one index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub value: f64,
    /// Ordered pairs `(x, y)` in `Omega x Omega` that were enumerated.
    pub pairs: u64,
    /// Distance cutoff applied to an unbounded kernel, if any.
    pub cutoff: Option<f64>,
}

/// Cutoff radius for an unbounded kernel from its dyadic majorant.
///
/// Shell `j` can contribute at most `d_{i,j} 2^{jp}` times the oscillation
/// term; the farthest shells are dropped while their cumulative share stays
/// below `tol`.
fn majorant_cutoff(family: &MollifierFamily, space: &MetricMeasureSpace, i: usize, tol: f64) -> Result<Option<f64>> {
    if space.diam() >= 1.0 {
        return Ok(None);
    }
    let opts = CheckOptions {
        max_centers: 64,
        ..Default::default()
    };
    let maj = dyadic_majorant(family, space, i, &opts)?;
    let weights: Vec<f64> = maj
        .coeffs
        .iter()
        .enumerate()
        .map(|(k, d)| d * 2f64.powf((k + 1) as f64 * family.p()))
        .collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Ok(None);
    }
    let mut dropped = 0.0;
    let mut shells = 0;
    for w in &weights {
        if dropped + w < tol * total {
            dropped += w;
            shells += 1;
        } else {
            break;
        }
    }
    Ok((shells > 0).then(|| 2f64.powi(-shells)))
}

/// Evaluates the functional for index `i` over `Omega x Omega`.
pub fn evaluate(
    space: &MetricMeasureSpace,
    f: &GridFunction,
    family: &MollifierFamily,
    i: usize,
    omega: &DomainMask,
    opts: &EvalOptions,
    workers: &Workers,
) -> Result<Evaluation> {
    f.check(space)?;
    if omega.len() != space.len() {
        return Err(Error::LengthMismatch {
            expected: space.len(),
            got: omega.len(),
        });
    }
    let members: Vec<usize> = omega.indices().collect();
    if members.is_empty() {
        log::warn!("empty integration domain; functional is 0");
        return Ok(Evaluation {
            value: 0.0,
            pairs: 0,
            cutoff: None,
        });
    }
    let balls = match opts.ball_scope {
        BallScope::Full => BallMeasure::full(space),
        BallScope::Omega => BallMeasure::restricted(space, omega),
    };
    let kernel = family.kernel(i, &balls)?;
    let (query, cutoff) = match (opts.mode, kernel.support()) {
        (EvalMode::Dense, _) => (None, None),
        (EvalMode::Pruned, Support::Radius { r, inclusive }) => (Some((r, inclusive)), None),
        (EvalMode::Pruned, Support::Unbounded) => {
            let c = majorant_cutoff(family, space, i, opts.cutoff_tol)?;
            (c.map(|r| (r, false)), c)
        }
    };
    let p = family.p();
    let v = f.values();
    let block_len = opts.block_len.max(1);
    let n_blocks = members.len().div_ceil(block_len);
    let partials: Vec<(f64, u64)> = workers.map_blocks(n_blocks, |b| {
        let mut block = PairwiseAccumulator::new();
        let mut pairs = 0u64;
        for &y in &members[b * block_len..((b + 1) * block_len).min(members.len())] {
            let row = kernel.row(y);
            let fy = v[y];
            let mut acc = PairwiseAccumulator::new();
            space.for_each_neighbor(y, query, |x, d| {
                if omega.contains(x) {
                    pairs += 1;
                    let q = (v[x] - fy).abs() / d;
                    let q = if p == 1.0 { q } else { q.powf(p) };
                    acc.add(q * row.eval(x, d) * space.mass(x));
                }
            });
            block.add(acc.sum() * space.mass(y));
        }
        (block.sum(), pairs)
    });
    let sums: Vec<f64> = partials.iter().map(|p| p.0).collect();
    Ok(Evaluation {
        value: crate::reduce::pairwise_sum(&sums),
        pairs: partials.iter().map(|p| p.1).sum(),
        cutoff,
    })
}

/// Functional values along a family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// Index parameters (`s_i` or `r_i`).
    pub indices: Vec<f64>,
    pub values: Vec<f64>,
    pub pairs: Vec<u64>,
    pub cutoffs: Vec<Option<f64>>,
    /// Wall-clock seconds per index; not part of the reproducible output.
    #[serde(skip)]
    pub seconds: Vec<f64>,
    pub tail_lo: f64,
    pub tail_hi: f64,
    pub window: usize,
}

/// Evaluates every index and records the min and max over the last `window` values.
pub fn sweep(
    space: &MetricMeasureSpace,
    f: &GridFunction,
    family: &MollifierFamily,
    omega: &DomainMask,
    window: usize,
    opts: &EvalOptions,
    workers: &Workers,
) -> Result<SweepResult> {
    if window == 0 || family.len() < window {
        return Err(Error::InvalidParameter(format!(
            "sweep window {window} needs 1 <= window <= number of indices ({})",
            family.len()
        )));
    }
    let mut values = Vec::new();
    let mut pairs = Vec::new();
    let mut cutoffs = Vec::new();
    let mut seconds = Vec::new();
    for i in 0..family.len() {
        let start = Instant::now();
        let e = evaluate(space, f, family, i, omega, opts, workers)?;
        seconds.push(start.elapsed().as_secs_f64());
        values.push(e.value);
        pairs.push(e.pairs);
        cutoffs.push(e.cutoff);
    }
    let tail = &values[values.len() - window..];
    Ok(SweepResult {
        indices: family.params().to_vec(),
        tail_lo: tail.iter().copied().fold(f64::INFINITY, f64::min),
        tail_hi: tail.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        values,
        pairs,
        cutoffs,
        seconds,
        window,
    })
}

/// Empirical ratios of the functional tail to a reference energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantEstimate {
    /// `tail_lo / energy`; `None` when both vanish.
    pub c1_hat: Option<f64>,
    /// `tail_hi / energy`; `None` when both vanish.
    pub c2_hat: Option<f64>,
    pub degenerate: bool,
    pub energy_ref: EnergyReport,
}

/// `c1_hat = tail_lo / E`, `c2_hat = tail_hi / E`.
///
/// A zero energy with a zero functional is reported as degenerate; a zero
/// energy with a positive functional is an error.
pub fn estimate_constants(sweep: &SweepResult, energy: &EnergyReport) -> Result<ConstantEstimate> {
    let mut energy_ref = energy.clone();
    energy_ref.per_edge = None;
    if energy.value > 0.0 {
        return Ok(ConstantEstimate {
            c1_hat: Some(sweep.tail_lo / energy.value),
            c2_hat: Some(sweep.tail_hi / energy.value),
            degenerate: false,
            energy_ref,
        });
    }
    if sweep.tail_hi > 0.0 {
        return Err(Error::Inconsistent(format!(
            "reference energy is 0 but the functional tail reaches {}; check the energy oracle and the domain mask",
            sweep.tail_hi
        )));
    }
    Ok(ConstantEstimate {
        c1_hat: None,
        c2_hat: None,
        degenerate: true,
        energy_ref,
    })
}
