//! Bounded-overlap coverings, Lipschitz partitions of unity, discrete
//! convolutions, and the integral bound on their Lipschitz numbers.

use crate::error::{Error, Result};
use crate::grid::{max_one_sided_slope, GridFunction};
use crate::reduce::{PairwiseAccumulator, Workers};
use crate::space::{
    default_doubling_scales, distance_to_set, estimate_doubling, morph_mask, BallMeasure, DomainMask, MetricMeasureSpace,
    MorphMode,
};
use serde::{Deserialize, Serialize};

/// Balls `B_j = B(x_j, R)` covering `U(5R)`, built from disjoint seeds `B(x_j, R/5)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covering {
    pub centers: Vec<usize>,
    pub radius: f64,
    pub seed_radius: f64,
    /// The mask `U` the covering was built for.
    pub base: DomainMask,
    /// `U(5R)`, the covered set.
    pub target: DomainMask,
    /// Class of each ball `5B_j`; balls in one class are pairwise disjoint.
    pub overlap_classes: Vec<usize>,
    pub n_classes: usize,
    /// Largest number of balls `2B_j` containing one covered point.
    pub max_multiplicity: usize,
    pub cd_assumed: f64,
    pub cd_measured: f64,
    /// `3 C_d^8` with the assumed doubling constant.
    pub c0: f64,
}

/// Covers `U(5R)` by greedy selection in ascending point order: a point
/// becomes a center when it is at distance `>= 2R/5` from every earlier center.
///
/// With an ambient mask `omega`, requires `R < dist(U, X \ Omega) / 10`;
/// otherwise `R < diam`.
pub fn cover(space: &MetricMeasureSpace, u: &DomainMask, radius: f64, omega: Option<&DomainMask>, cd_assumed: f64) -> Result<Covering> {
    if u.len() != space.len() {
        return Err(Error::LengthMismatch {
            expected: space.len(),
            got: u.len(),
        });
    }
    if u.is_empty() {
        return Err(Error::InvalidParameter("covering target mask is empty".into()));
    }
    if !(cd_assumed >= 1.0) {
        return Err(Error::InvalidParameter(format!("doubling constant must be >= 1, got {cd_assumed}")));
    }
    match omega {
        Some(omega) => {
            let outside = distance_to_set(space, &omega.complement());
            let gap = u.indices().map(|i| outside[i]).fold(f64::INFINITY, f64::min);
            if !(radius > 0.0 && radius < gap / 10.0) {
                return Err(Error::InvalidParameter(format!(
                    "scale must satisfy 0 < R < dist(U, X \\ Omega)/10 = {}, got R = {radius}",
                    gap / 10.0
                )));
            }
        }
        None => {
            if !(radius > 0.0 && radius < space.diam()) {
                return Err(Error::InvalidParameter(format!(
                    "scale must satisfy 0 < R < diam = {}, got R = {radius}",
                    space.diam()
                )));
            }
        }
    }
    let target = morph_mask(space, u, 5.0 * radius, MorphMode::Dilate)?;
    let spacing = 2.0 * radius / 5.0;
    let mut centers: Vec<usize> = Vec::new();
    for x in target.indices() {
        let far = if space.is_interval() {
            // ascending order: the last center is the nearest one
            centers.last().is_none_or(|&c| space.dist(x, c) >= spacing)
        } else {
            centers.iter().all(|&c| space.dist(x, c) >= spacing)
        };
        if far {
            centers.push(x);
        }
    }

    let five = 5.0 * radius;
    let conflict = |a: usize, b: usize| -> bool {
        if space.is_interval() {
            let k = space.reach(five, false);
            a.abs_diff(b) <= 2 * k
        } else {
            (0..space.len()).any(|z| space.dist(z, a) < five && space.dist(z, b) < five)
        }
    };
    let mut overlap_classes = Vec::with_capacity(centers.len());
    for (j, &c) in centers.iter().enumerate() {
        let mut used = Vec::new();
        for k in (0..j).rev() {
            if conflict(centers[k], c) {
                used.push(overlap_classes[k]);
            } else if space.is_interval() {
                break;
            }
        }
        let class = (0..).find(|q| !used.contains(q)).expect("some class is free");
        overlap_classes.push(class);
    }
    let n_classes = overlap_classes.iter().map(|c| c + 1).max().unwrap_or(0);

    let mut multiplicity = vec![0usize; space.len()];
    for &c in &centers {
        multiplicity[c] += 1;
        space.for_each_neighbor(c, Some((2.0 * radius, false)), |x, _| multiplicity[x] += 1);
    }
    let max_multiplicity = target.indices().map(|x| multiplicity[x]).max().unwrap_or(0);
    let cd_measured = estimate_doubling(space, &default_doubling_scales(space))?;
    Ok(Covering {
        centers,
        radius,
        seed_radius: radius / 5.0,
        base: u.clone(),
        target,
        overlap_classes,
        n_classes,
        max_multiplicity,
        cd_assumed,
        cd_measured,
        c0: 3.0 * cd_assumed.powi(8),
    })
}

/// Normalized tents `phi_j` subordinate to a [`Covering`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionOfUnity {
    pub phi: Vec<GridFunction>,
    /// `C_0 / R`.
    pub lipschitz_bound: f64,
    /// Measured Lipschitz constant of each `phi_j` over covered points.
    pub measured_lipschitz: Vec<f64>,
}

fn lipschitz_on(space: &MetricMeasureSpace, g: &GridFunction, mask: &DomainMask) -> f64 {
    let pts: Vec<usize> = mask.indices().collect();
    let mut best: f64 = 0.0;
    if space.is_interval() {
        for w in pts.windows(2) {
            best = best.max((g[w[1]] - g[w[0]]).abs() / space.dist(w[0], w[1]));
        }
    } else {
        for (a, &x) in pts.iter().enumerate() {
            for &y in &pts[a + 1..] {
                best = best.max((g[x] - g[y]).abs() / space.dist(x, y));
            }
        }
    }
    best
}

/// `psi_j = max(0, 1 - dist(x, B_j) / R)`, normalized to sum to one on the covered set.
pub fn partition_of_unity(space: &MetricMeasureSpace, covering: &Covering) -> Result<PartitionOfUnity> {
    let n = space.len();
    let r = covering.radius;
    let mut psi: Vec<Vec<f64>> = Vec::with_capacity(covering.centers.len());
    let mut total = vec![0.0; n];
    for &c in &covering.centers {
        let mut v = vec![0.0; n];
        v[c] = 1.0;
        space.for_each_neighbor(c, Some((2.0 * r, false)), |x, d| {
            v[x] = (1.0 - (d - r).max(0.0) / r).max(0.0);
        });
        for x in 0..n {
            total[x] += v[x];
        }
        psi.push(v);
    }
    if let Some(x) = covering.target.indices().find(|&x| !(total[x] > 0.0)) {
        return Err(Error::Inconsistent(format!("covering defect: point {x} is in no ball 2B_j")));
    }
    let phi: Vec<GridFunction> = psi
        .into_iter()
        .map(|v| {
            GridFunction::new(
                (0..n)
                    .map(|x| if covering.target.contains(x) { v[x] / total[x] } else { 0.0 })
                    .collect(),
            )
        })
        .collect();
    let measured_lipschitz = phi.iter().map(|g| lipschitz_on(space, g, &covering.target)).collect();
    Ok(PartitionOfUnity {
        phi,
        lipschitz_bound: covering.c0 / r,
        measured_lipschitz,
    })
}

/// `mu`-averages of `f` over the balls `B_j`.
pub fn ball_averages(space: &MetricMeasureSpace, f: &GridFunction, covering: &Covering) -> Result<Vec<f64>> {
    f.check(space)?;
    Ok(covering
        .centers
        .iter()
        .map(|&c| {
            let mut mass = PairwiseAccumulator::new();
            let mut moment = PairwiseAccumulator::new();
            mass.add(space.mass(c));
            moment.add(space.mass(c) * f[c]);
            space.for_each_neighbor(c, Some((covering.radius, false)), |x, _| {
                mass.add(space.mass(x));
                moment.add(space.mass(x) * f[x]);
            });
            let m = mass.sum();
            assert!(m > 0.0, "ball contains its center");
            moment.sum() / m
        })
        .collect())
}

/// `h = sum_j f_{B_j} phi_j` on the covered set; `h = f` elsewhere.
pub fn discrete_convolve(space: &MetricMeasureSpace, f: &GridFunction, covering: &Covering, pou: &PartitionOfUnity) -> Result<GridFunction> {
    let averages = ball_averages(space, f, covering)?;
    let h = (0..space.len())
        .map(|x| {
            if covering.target.contains(x) {
                let mut acc = PairwiseAccumulator::new();
                for (a, phi) in averages.iter().zip(&pou.phi) {
                    acc.add(a * phi[x]);
                }
                acc.sum()
            } else {
                f[x]
            }
        })
        .collect();
    Ok(GridFunction::new(h))
}

/// Pointwise Lipschitz number: the larger of the two one-sided difference quotients.
pub fn lip_number(space: &MetricMeasureSpace, h: &GridFunction) -> Result<GridFunction> {
    max_one_sided_slope(space, h)
}

/// Both sides of the integral Lipschitz bound at scale `R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipBoundReport {
    pub radius: f64,
    pub p: f64,
    /// `int_U (Lip h)^p d mu`.
    pub lhs: f64,
    /// `(10R)^-p int int |f(x) - f(y)|^p chi_{B(y, 10R)}(x) / mu(B(y, 10R))`.
    pub rhs: f64,
    /// `lhs / rhs`; `None` when both vanish.
    pub measured_constant: Option<f64>,
    /// `(2 C_0^2 C_d^3)^p (10 C_0)^p C_d^2 C_0`.
    pub theoretical_constant: f64,
    pub cd_assumed: f64,
    pub cd_measured: f64,
    pub pass: bool,
}

/// Compares `int_U (Lip h)^p` with the averaged difference integral at scale `10R`.
pub fn verify_lip_bound(
    space: &MetricMeasureSpace,
    f: &GridFunction,
    covering: &Covering,
    pou: &PartitionOfUnity,
    p: f64,
    omega: Option<&DomainMask>,
    workers: &Workers,
) -> Result<LipBoundReport> {
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!("p must satisfy p >= 1, got {p}")));
    }
    let h = discrete_convolve(space, f, covering, pou)?;
    let lip = lip_number(space, &h)?;
    let mut lhs = PairwiseAccumulator::new();
    for x in covering.base.indices() {
        lhs.add(lip[x].powf(p) * space.mass(x));
    }
    // Lipschitz numbers at rounding level (a smoothed constant) count as zero
    let scale = f.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (64.0 * f64::EPSILON * scale / space.resolution()).powf(p) * covering.base.measure(space);
    let lhs = Some(lhs.sum()).filter(|&v| v > floor).unwrap_or(0.0);

    let full = DomainMask::full(space);
    let omega = omega.unwrap_or(&full);
    let t = 10.0 * covering.radius;
    let balls = BallMeasure::full(space);
    let members: Vec<usize> = omega.indices().collect();
    let rhs = workers.sum_indexed(members.len(), 64, |k| {
        let y = members[k];
        let mut acc = PairwiseAccumulator::new();
        space.for_each_neighbor(y, Some((t, false)), |x, _| {
            if omega.contains(x) {
                acc.add((f[x] - f[y]).abs().powf(p) * space.mass(x));
            }
        });
        acc.sum() * space.mass(y) / balls.ball_mass(y, t)
    }) / t.powf(p);

    let cd = covering.cd_assumed;
    let c0 = covering.c0;
    let theoretical_constant = (2.0 * c0 * c0 * cd.powi(3)).powf(p) * (10.0 * c0).powf(p) * cd * cd * c0;
    let measured_constant = match (lhs > 0.0, rhs > 0.0) {
        (false, true) => Some(0.0),
        (false, false) => None,
        (true, true) => Some(lhs / rhs),
        (true, false) => {
            return Err(Error::Inconsistent(format!(
                "Lipschitz integral {lhs} is positive but the difference integral vanishes"
            )))
        }
    };
    Ok(LipBoundReport {
        radius: covering.radius,
        p,
        lhs,
        rhs,
        pass: measured_constant.is_none_or(|m| m <= theoretical_constant),
        measured_constant,
        theoretical_constant,
        cd_assumed: cd,
        cd_measured: covering.cd_measured,
    })
}
