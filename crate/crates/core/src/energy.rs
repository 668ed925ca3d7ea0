//! Reference energies on interval spaces: weighted total variation for
//! `p = 1` and the Sobolev energy for `p > 1`.

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::reduce::{pairwise_sum, PairwiseAccumulator};
use crate::space::MetricMeasureSpace;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// How an [`EnergyReport`] value was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Variant {
    /// Edge weights `min(w_k, w_{k+1})`.
    Raw,
    /// Edge weights are minima over cells within `delta` of the edge.
    Lsc { delta: f64 },
    /// Relaxation over `L^1`-balls of the given radii.
    Relaxed { eps_schedule: Vec<f64> },
    Sobolev,
}

/// One point of the relaxation curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxPoint {
    pub eps: f64,
    pub value: f64,
    pub iterations: usize,
    pub relative_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub p: f64,
    pub variant: Variant,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Per-edge (total variation) or per-cell (Sobolev) contributions.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_edge: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curve: Option<Vec<RelaxPoint>>,
}

fn interval_only<'a>(space: &'a MetricMeasureSpace, op: &'static str, hint: &'static str) -> Result<(f64, &'a [f64])> {
    match (space.cell_len(), space.weights()) {
        (Some(h), Some(w)) => Ok((h, w)),
        _ => Err(Error::NotInterval { op, hint }),
    }
}

/// Minimum of `w` over `[lo(k), hi(k)]` for every `k`, with both bounds nondecreasing in `k`.
fn sliding_min(w: &[f64], count: usize, lo: impl Fn(usize) -> usize, hi: impl Fn(usize) -> usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    let mut window: VecDeque<usize> = VecDeque::new();
    let mut next = 0;
    for k in 0..count {
        while next <= hi(k) {
            while window.back().is_some_and(|&j| w[j] >= w[next]) {
                window.pop_back();
            }
            window.push_back(next);
            next += 1;
        }
        while window.front().is_some_and(|&j| j < lo(k)) {
            window.pop_front();
        }
        out.push(w[*window.front().expect("window is nonempty")]);
    }
    out
}

/// Edge weights: minimum cell weight over cells whose closed cell lies within
/// `delta` of the edge (`delta = 0` gives the two adjacent cells).
pub fn edge_weights(space: &MetricMeasureSpace, delta: f64) -> Result<Vec<f64>> {
    let (_, w) = interval_only(space, "edge_weights", "edge weights need an interval space")?;
    if !(delta >= 0.0) {
        return Err(Error::InvalidParameter(format!("envelope radius must be >= 0, got {delta}")));
    }
    let n = w.len();
    let m = if delta > 0.0 { space.reach(delta, true) } else { 0 };
    Ok(sliding_min(w, n - 1, |k| k.saturating_sub(m), |k| (k + 1 + m).min(n - 1)))
}

/// Weighted total variation `sum_k |f_{k+1} - f_k| * w_edge`.
pub fn tv(f: &GridFunction, space: &MetricMeasureSpace, delta: f64) -> Result<EnergyReport> {
    interval_only(space, "tv", "use tv_relax or a Sobolev energy on an interval space")?;
    f.check(space)?;
    let weights = edge_weights(space, delta)?;
    let v = f.values();
    let per_edge: Vec<f64> = weights.iter().enumerate().map(|(k, c)| (v[k + 1] - v[k]).abs() * c).collect();
    Ok(EnergyReport {
        p: 1.0,
        variant: if delta > 0.0 { Variant::Lsc { delta } } else { Variant::Raw },
        value: pairwise_sum(&per_edge),
        delta: Some(delta),
        per_edge: Some(per_edge),
        curve: None,
    })
}

/// Controls for [`tv_relax`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelaxOptions {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_tol() -> f64 {
    1e-4
}
fn default_max_iter() -> usize {
    200_000
}

impl Default for RelaxOptions {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_iter: default_max_iter(),
        }
    }
}

/// Euclidean projection of `v` onto `{z : ||z||_1 <= radius}`.
fn project_l1(v: &mut [f64], radius: f64, scratch: &mut Vec<f64>) {
    let norm: f64 = v.iter().map(|x| x.abs()).sum();
    if norm <= radius {
        return;
    }
    if radius <= 0.0 {
        v.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    scratch.clear();
    scratch.extend(v.iter().map(|x| x.abs()));
    scratch.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &u) in scratch.iter().enumerate() {
        cum += u;
        let t = (cum - radius) / (k + 1) as f64;
        if u > t {
            theta = t;
        } else {
            break;
        }
    }
    v.iter_mut().for_each(|x| *x = x.signum() * (x.abs() - theta).max(0.0));
}

fn weighted_tv(h: &[f64], c: &[f64]) -> f64 {
    let mut acc = PairwiseAccumulator::new();
    for k in 0..c.len() {
        acc.add((h[k + 1] - h[k]).abs() * c[k]);
    }
    acc.sum()
}

// (D^T y)_k = y_{k-1} - y_k with y_{-1} = y_{n-1} = 0
fn apply_dt(y: &[f64], out: &mut [f64]) {
    let n = out.len();
    for k in 0..n {
        let left = if k > 0 { y[k - 1] } else { 0.0 };
        let right = if k + 1 < n { y[k] } else { 0.0 };
        out[k] = left - right;
    }
}

/// Relaxed total variation: for each `eps`, minimizes
/// `sum_k |h_{k+1} - h_k| min(w_k, w_{k+1})` over `h` with
/// `sum_k |h_k - f_k| * cell_len <= eps`.
///
/// Solved by a primal-dual (Chambolle-Pock) iteration until the relative
/// duality gap drops below `opts.tol`; each radius is warm-started from the
/// previous solution.
pub fn tv_relax(f: &GridFunction, space: &MetricMeasureSpace, eps_schedule: &[f64], opts: &RelaxOptions) -> Result<EnergyReport> {
    let (cell, _) = interval_only(space, "tv_relax", "the relaxation is defined on interval spaces only")?;
    f.check(space)?;
    if eps_schedule.is_empty() || eps_schedule.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidParameter("eps schedule must be nonempty and positive".into()));
    }
    if eps_schedule.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidParameter("eps schedule must be strictly decreasing".into()));
    }
    let c = edge_weights(space, 0.0)?;
    let fv = f.values();
    let n = fv.len();
    let (tau, sigma) = (0.495, 0.495);

    let mut h = fv.to_vec();
    let mut y: Vec<f64> = (0..n - 1)
        .map(|k| c[k] * (fv[k + 1] - fv[k]).signum() * f64::from((fv[k + 1] - fv[k]) != 0.0))
        .collect();
    let mut hbar = h.clone();
    let mut dty = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut scratch = Vec::with_capacity(n);
    let mut curve = Vec::new();

    for &eps in eps_schedule {
        let radius = eps / cell;
        // keep the warm start feasible for the smaller ball
        for k in 0..n {
            z[k] = h[k] - fv[k];
        }
        project_l1(&mut z, radius, &mut scratch);
        for k in 0..n {
            h[k] = fv[k] + z[k];
            hbar[k] = h[k];
        }
        let mut iterations = 0;
        let mut best_primal = f64::INFINITY;
        let mut best_dual = f64::NEG_INFINITY;
        let mut best_h = h.clone();
        let gap = loop {
            if iterations % 10 == 0 {
                let primal = weighted_tv(&h, &c);
                if primal < best_primal {
                    best_primal = primal;
                    best_h.copy_from_slice(&h);
                }
                apply_dt(&y, &mut dty);
                let mut inner = PairwiseAccumulator::new();
                let mut sup: f64 = 0.0;
                for k in 0..n {
                    inner.add(fv[k] * dty[k]);
                    sup = sup.max(dty[k].abs());
                }
                best_dual = best_dual.max(inner.sum() - radius * sup);
                let gap = if best_primal > 0.0 {
                    ((best_primal - best_dual) / best_primal).max(0.0)
                } else {
                    0.0
                };
                if gap <= opts.tol {
                    break gap;
                }
                if iterations >= opts.max_iter {
                    return Err(Error::NotConverged {
                        iterations,
                        residual: gap,
                    });
                }
            }
            for k in 0..n - 1 {
                y[k] = (y[k] + sigma * (hbar[k + 1] - hbar[k])).clamp(-c[k], c[k]);
            }
            apply_dt(&y, &mut dty);
            for k in 0..n {
                z[k] = h[k] - tau * dty[k] - fv[k];
            }
            project_l1(&mut z, radius, &mut scratch);
            for k in 0..n {
                let next = fv[k] + z[k];
                hbar[k] = 2.0 * next - h[k];
                h[k] = next;
            }
            iterations += 1;
        };
        h.copy_from_slice(&best_h);
        hbar.copy_from_slice(&best_h);
        curve.push(RelaxPoint {
            eps,
            value: best_primal,
            iterations,
            relative_gap: gap,
        });
    }
    Ok(EnergyReport {
        p: 1.0,
        variant: Variant::Relaxed {
            eps_schedule: eps_schedule.to_vec(),
        },
        value: curve.last().expect("nonempty schedule").value,
        delta: None,
        per_edge: None,
        curve: Some(curve),
    })
}

/// Symmetric difference slopes, one-sided at the two endpoints.
pub fn slopes(f: &GridFunction, space: &MetricMeasureSpace) -> Result<GridFunction> {
    let (h, _) = interval_only(space, "slopes", "slopes need an interval space")?;
    f.check(space)?;
    let v = f.values();
    let n = v.len();
    Ok(GridFunction::new(
        (0..n)
            .map(|k| match k {
                0 => (v[1] - v[0]) / h,
                k if k == n - 1 => (v[k] - v[k - 1]) / h,
                k => (v[k + 1] - v[k - 1]) / (2.0 * h),
            })
            .collect(),
    ))
}

/// `sum_k |slope_k|^p * mass_k` for `p > 1`.
pub fn sobolev_energy(f: &GridFunction, space: &MetricMeasureSpace, p: f64) -> Result<EnergyReport> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "Sobolev energy needs p > 1, got {p}; use tv for p = 1"
        )));
    }
    let s = slopes(f, space)?;
    let per_cell: Vec<f64> = s.values().iter().zip(space.masses()).map(|(g, m)| g.abs().powf(p) * m).collect();
    Ok(EnergyReport {
        p,
        variant: Variant::Sobolev,
        value: pairwise_sum(&per_cell),
        delta: None,
        per_edge: Some(per_cell),
        curve: None,
    })
}

/// Total variation (with envelope radius `delta`) for `p = 1`, Sobolev energy for `p > 1`.
pub fn energy(f: &GridFunction, space: &MetricMeasureSpace, p: f64, delta: f64) -> Result<EnergyReport> {
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!("p must satisfy p >= 1, got {p}")));
    }
    if p == 1.0 {
        tv(f, space, delta)
    } else {
        sobolev_energy(f, space, p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Generator;

    fn unit(n: usize) -> MetricMeasureSpace {
        MetricMeasureSpace::uniform_interval(n).unwrap()
    }

    #[test]
    fn tv_examples() {
        let s = unit(1000);
        let step = Generator::Step { at: 0.5, height: 1.0 }.build(&s).unwrap();
        assert_eq!(tv(&step, &s, 0.0).unwrap().value, 1.0);
        // centers run from h/2 to 1 - h/2
        let ramp = GridFunction::from_fn(&s, |x| x).unwrap();
        assert!((tv(&ramp, &s, 0.0).unwrap().value - 0.999).abs() <= 1e-12);
        let m = MetricMeasureSpace::from_matrix(vec![0.0, 1.0, 1.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert!(matches!(tv(&GridFunction::new(vec![0.0, 1.0]), &m, 0.0), Err(Error::NotInterval { .. })));
    }

    #[test]
    fn envelope_weights() {
        let w = [2.0, 2.0, 1.0, 2.0, 2.0, 2.0, 2.0, 2.0];
        let s = MetricMeasureSpace::weighted_interval(&w).unwrap();
        assert_eq!(edge_weights(&s, 0.0).unwrap(), vec![2.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0]);
        // one cell (1/8) of reach on each side
        assert_eq!(edge_weights(&s, 0.125).unwrap(), vec![1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0]);
        assert_eq!(edge_weights(&s, 1.0).unwrap(), vec![1.0; 7]);
        assert!(edge_weights(&s, -1.0).is_err());
    }

    #[test]
    fn cantor_tv_at_depth_three() {
        let spec = crate::cantor::fat_cantor(3).unwrap();
        let s = crate::cantor::cantor_space(&spec, 1 << 16).unwrap();
        let f = crate::cantor::cantor_function(&spec, &s).unwrap().f;
        // each component boundary loses O(h) to the unit weight of its edge
        let v = tv(&f, &s, 0.0).unwrap().value;
        assert!((v - 2.25).abs() < 1e-3, "{v}");
        let e = energy(&f, &s, 1.0, 0.0).unwrap();
        assert_eq!(e.value, v);
        let gap = tv(&f, &s, 0.125).unwrap().value;
        assert!((gap - 1.125).abs() < 1e-3, "{gap}");
    }

    #[test]
    fn relaxation_of_unweighted_step() {
        let s = unit(64);
        let step = Generator::Step { at: 0.5, height: 1.0 }.build(&s).unwrap();
        let r = tv_relax(&step, &s, &[0.1, 0.01, 1e-4], &RelaxOptions::default()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-3, "{r:?}");
        assert_eq!(r.curve.as_ref().unwrap().len(), 3);
    }

    #[test]
    fn relaxation_moves_jump_off_heavy_cells() {
        let n = 16;
        let mut w = vec![1.0; n];
        w[7] = 2.0;
        w[8] = 2.0;
        let s = MetricMeasureSpace::weighted_interval(&w).unwrap();
        let f = GridFunction::new((0..n).map(|k| if k < 8 { 0.0 } else { 1.0 }).collect());
        assert_eq!(tv(&f, &s, 0.0).unwrap().value, 2.0);
        let cell = 1.0 / n as f64;
        let r = tv_relax(&f, &s, &[cell], &RelaxOptions::default()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-3, "{r:?}");
        let tiny = tv_relax(&f, &s, &[1e-12], &RelaxOptions::default()).unwrap();
        assert!((tiny.value - 2.0).abs() < 1e-3);
    }

    #[test]
    fn relaxation_reports_non_convergence() {
        let s = unit(64);
        let f = GridFunction::from_fn(&s, |x| (7.0 * x).sin()).unwrap();
        let opts = RelaxOptions { tol: 1e-12, max_iter: 5 };
        assert!(matches!(tv_relax(&f, &s, &[0.05], &opts), Err(Error::NotConverged { .. })));
        assert!(tv_relax(&f, &s, &[0.01, 0.05], &RelaxOptions::default()).is_err());
    }

    #[test]
    fn sobolev_examples() {
        let s = unit(1000);
        let x = GridFunction::from_fn(&s, |x| x).unwrap();
        assert!((sobolev_energy(&x, &s, 2.0).unwrap().value - 1.0).abs() <= 2e-3);
        let x2 = GridFunction::from_fn(&s, |x| x * x).unwrap();
        let v = sobolev_energy(&x2, &s, 2.0).unwrap().value;
        assert!((v / (4.0 / 3.0) - 1.0).abs() < 0.01, "{v}");
        assert_eq!(sobolev_energy(&GridFunction::constant(&s, 2.0), &s, 2.0).unwrap().value, 0.0);
        assert!(sobolev_energy(&x, &s, 1.0).is_err());
        assert!((energy(&x, &s, 2.0, 0.0).unwrap().value - 1.0).abs() < 2e-3);
    }

    #[test]
    fn l1_projection() {
        let mut v = vec![3.0, -1.0, 0.5];
        project_l1(&mut v, 2.0, &mut Vec::new());
        assert!((v.iter().map(|x| x.abs()).sum::<f64>() - 2.0).abs() < 1e-12);
        assert_eq!(v, vec![2.0, 0.0, 0.0]);
    }
}
