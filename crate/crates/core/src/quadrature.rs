//! One-dimensional quadrature for measures on `(0, inf)`.
//!
//! Integrands are integrated in the variable `u = ln t` with composite
//! Gauss-Legendre panels of unit width. Near `0` and `inf` the integrand is
//! replaced by the power law fitted through two sample points, which is exact
//! for the power-law densities used by the fractional family.

use std::sync::OnceLock;

const ORDER: usize = 16;
/// Decades of `t` resolved numerically on each side before the tail fit.
const LOG_SPAN: f64 = 8.0;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let n = order as f64;
    for k in 0..order.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=order {
                let j = j as f64;
                let p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            let step = p1 / dp;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[k] = -x;
        nodes[order - 1 - k] = x;
        weights[k] = w;
        weights[order - 1 - k] = w;
    }
    (nodes, weights)
}

fn rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(ORDER))
}

/// `int_{lo}^{hi} phi(e^u) e^u du` over `[lo, hi]` in log space.
fn integrate_log_range(phi: &impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let (nodes, weights) = rule();
    let panels = (hi - lo).ceil().max(1.0) as usize;
    let width = (hi - lo) / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let a = lo + k as f64 * width;
        let mid = a + 0.5 * width;
        let mut panel = 0.0;
        for (x, w) in nodes.iter().zip(weights) {
            let u = mid + 0.5 * width * x;
            let t = u.exp();
            panel += w * phi(t) * t;
        }
        total += 0.5 * width * panel;
    }
    total
}

/// Exponent `alpha` and coefficient `c` of `c t^alpha` through `(t, phi(t))`, `(2t, phi(2t))`.
fn power_fit(phi: &impl Fn(f64) -> f64, t: f64) -> Option<(f64, f64)> {
    let (a, b) = (phi(t), phi(2.0 * t));
    if a == 0.0 && b == 0.0 {
        return Some((0.0, 0.0));
    }
    if !(a > 0.0 && b > 0.0) {
        return None;
    }
    let alpha = (b / a).log2();
    Some((a / t.powf(alpha), alpha))
}

/// `int_a^b phi(t) dt` for a nonnegative integrand on `0 <= a < b <= inf`.
///
/// Returns `inf` when a fitted tail is not integrable.
pub fn integrate_positive(phi: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    assert!(a >= 0.0 && b > a, "integration bounds must satisfy 0 <= a < b");
    let scale = if a > 0.0 { a } else if b.is_finite() { b } else { 1.0 };
    let lo = if a > 0.0 { a.ln() } else { scale.ln() - LOG_SPAN * std::f64::consts::LN_10 };
    let hi = if b.is_finite() { b.ln() } else { scale.ln() + LOG_SPAN * std::f64::consts::LN_10 };
    let mut total = integrate_log_range(&phi, lo, hi);
    if a == 0.0 {
        let t0 = lo.exp();
        match power_fit(&phi, t0) {
            Some((c, _)) if c == 0.0 => {}
            Some((c, alpha)) if alpha > -1.0 => total += c * t0.powf(alpha + 1.0) / (alpha + 1.0),
            _ => return f64::INFINITY,
        }
    }
    if b.is_infinite() {
        let t1 = hi.exp();
        match power_fit(&phi, t1 / 2.0) {
            Some((c, _)) if c == 0.0 => {}
            Some((c, alpha)) if alpha < -1.0 => total += -c * t1.powf(alpha + 1.0) / (alpha + 1.0),
            _ => return f64::INFINITY,
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nodes_are_exact_for_polynomials() {
        let (x, w) = gauss_legendre(16);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        // degree 30 is integrated exactly
        let i: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(30)).sum();
        assert!((i - 2.0 / 31.0).abs() < 1e-14, "{i}");
        let (x3, _) = gauss_legendre(3);
        assert!((x3[2] - (0.6f64).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn power_laws_with_tails() {
        // int_0^1 t^{-0.5} dt = 2
        let v = integrate_positive(|t| t.powf(-0.5), 0.0, 1.0);
        assert!((v / 2.0 - 1.0).abs() < 1e-12, "{v}");
        // int_2^inf t^{-3} dt = 1/8
        let v = integrate_positive(|t| t.powi(-3), 2.0, f64::INFINITY);
        assert!((v / 0.125 - 1.0).abs() < 1e-12, "{v}");
        assert!(integrate_positive(|t| 1.0 / t, 0.0, 1.0).is_infinite());
    }

    #[test]
    fn smooth_integrand_on_finite_range() {
        let v = integrate_positive(|t| (-t).exp(), 0.0, f64::INFINITY);
        assert!((v - 1.0).abs() < 1e-10, "{v}");
        let v = integrate_positive(|t| t.sin(), 0.5, 3.0);
        assert!((v - (0.5f64.cos() - 3.0f64.cos())).abs() < 1e-12, "{v}");
    }
}
