//! Gauss–Legendre rules: fixed, adaptive 1-D, and tensor products on boxes.

use crate::error::{LceError, Result};
use crate::sum::Accumulator;

/// Nodes and weights of the `order`-point rule on `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Newton iteration on `P_order` from Chebyshev-like initial guesses.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "quadrature order must be positive");
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, z);
                dp = d;
                let dz = p / d;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, z);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn on_interval(&self, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        (
            self.nodes.iter().map(|t| mid + half * t).collect(),
            self.weights.iter().map(|w| w * half).collect(),
        )
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = Accumulator::new();
        for (t, w) in self.nodes.iter().zip(&self.weights) {
            acc.add(w * f(mid + half * t));
        }
        half * acc.value()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Adaptive bisection driven by the difference between the `order` rule
/// and the same rule on both halves. `tol` is absolute.
pub fn integrate_adaptive(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    order: usize,
    tol: f64,
    max_depth: usize,
) -> Result<f64> {
    let rule = GaussLegendre::new(order);
    let whole = rule.integrate(f, a, b);
    let mut acc = Accumulator::new();
    adaptive_rec(f, &rule, a, b, whole, tol, max_depth, &mut acc)?;
    Ok(acc.value())
}

#[allow(clippy::too_many_arguments)]
fn adaptive_rec(
    f: &dyn Fn(f64) -> f64,
    rule: &GaussLegendre,
    a: f64,
    b: f64,
    whole: f64,
    tol: f64,
    depth: usize,
    acc: &mut Accumulator,
) -> Result<()> {
    let m = 0.5 * (a + b);
    let left = rule.integrate(f, a, m);
    let right = rule.integrate(f, m, b);
    if (left + right - whole).abs() <= tol {
        acc.add(left);
        acc.add(right);
        return Ok(());
    }
    if depth == 0 {
        return Err(LceError::QuadratureNonConvergence(format!("interval [{a}, {b}]")));
    }
    adaptive_rec(f, rule, a, m, left, 0.5 * tol, depth - 1, acc)?;
    adaptive_rec(f, rule, m, b, right, 0.5 * tol, depth - 1, acc)
}

/// Adaptive integral over `[a, b]` split first at the given breakpoints.
pub fn integrate_piecewise(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    order: usize,
    tol: f64,
) -> Result<f64> {
    let mut cuts: Vec<f64> = std::iter::once(a)
        .chain(breakpoints.iter().copied().filter(|c| *c > a && *c < b))
        .chain(std::iter::once(b))
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let pieces = (cuts.len() - 1).max(1) as f64;
    let mut acc = Accumulator::new();
    for w in cuts.windows(2) {
        acc.add(integrate_adaptive(f, w[0], w[1], order, tol / pieces, 40)?);
    }
    Ok(acc.value())
}

/// Tensor-product rule of the given order on the box `[lo, hi]`.
pub fn tensor_integrate(f: &dyn Fn(&[f64]) -> f64, lo: &[f64], hi: &[f64], order: usize) -> f64 {
    let rule = GaussLegendre::new(order);
    let axes: Vec<(Vec<f64>, Vec<f64>)> = lo.iter().zip(hi).map(|(a, b)| rule.on_interval(*a, *b)).collect();
    let d = lo.len();
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0; d];
    let mut acc = Accumulator::new();
    if d == 0 {
        return f(&[]);
    }
    loop {
        let mut w = 1.0;
        for i in 0..d {
            x[i] = axes[i].0[idx[i]];
            w *= axes[i].1[idx[i]];
        }
        acc.add(w * f(&x));
        let mut i = d;
        loop {
            if i == 0 {
                return acc.value();
            }
            i -= 1;
            idx[i] += 1;
            if idx[i] < order {
                break;
            }
            idx[i] = 0;
        }
    }
}

/// Composite tensor rule over unit-ish sub-boxes: each axis of `[lo, hi]` is
/// cut into `pieces` equal intervals.
pub fn composite_tensor_integrate(
    f: &dyn Fn(&[f64]) -> f64,
    lo: &[f64],
    hi: &[f64],
    pieces: usize,
    order: usize,
) -> f64 {
    let d = lo.len();
    let h: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| (b - a) / pieces as f64).collect();
    let mut idx = vec![0usize; d];
    let mut acc = Accumulator::new();
    let mut a = vec![0.0; d];
    let mut b = vec![0.0; d];
    loop {
        for i in 0..d {
            a[i] = lo[i] + h[i] * idx[i] as f64;
            b[i] = a[i] + h[i];
        }
        acc.add(tensor_integrate(f, &a, &b, order));
        let mut i = d;
        loop {
            if i == 0 {
                return acc.value();
            }
            i -= 1;
            idx[i] += 1;
            if idx[i] < pieces {
                break;
            }
            idx[i] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rules_integrate_polynomials_exactly() {
        for n in 1..=20 {
            let r = GaussLegendre::new(n);
            assert!((r.weights.iter().sum::<f64>() - 2.0).abs() < 1e-13, "order {n}");
            for k in 0..2 * n {
                let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
                let got = r.integrate(|x| x.powi(k as i32), -1.0, 1.0);
                assert!((got - exact).abs() < 1e-13, "order {n}, degree {k}: {got} vs {exact}");
            }
        }
    }

    #[test]
    fn nodes_symmetric_and_sorted() {
        let r = GaussLegendre::new(9);
        assert!(r.nodes.windows(2).all(|w| w[0] < w[1]));
        for i in 0..9 {
            assert!((r.nodes[i] + r.nodes[8 - i]).abs() < 1e-15);
        }
    }

    #[test]
    fn adaptive_handles_log_singularity() {
        // -∫_0^1 u ln u du = 1/4
        let v = integrate_adaptive(&|u: f64| if u > 0.0 { -u * u.ln() } else { 0.0 }, 0.0, 1.0, 8, 1e-12, 50).unwrap();
        assert!((v - 0.25).abs() < 1e-11);
    }

    #[test]
    fn piecewise_splits_at_kinks() {
        let v = integrate_piecewise(&|x: f64| (-x.abs()).exp(), -30.0, 30.0, &[0.0], 8, 1e-12).unwrap();
        assert!((v - 2.0 * (1.0 - (-30f64).exp())).abs() < 1e-11);
    }

    #[test]
    fn tensor_rule_on_box() {
        let v = tensor_integrate(&|x: &[f64]| x[0] * x[0] * x[1], &[0.0, 1.0], &[1.0, 3.0], 4);
        assert!((v - (1.0 / 3.0) * 4.0).abs() < 1e-14);
        let g = composite_tensor_integrate(
            &|x: &[f64]| (-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp(),
            &[-10.0, -10.0],
            &[10.0, 10.0],
            20,
            8,
        );
        assert!((g - 2.0 * std::f64::consts::PI).abs() < 1e-10);
    }
}
