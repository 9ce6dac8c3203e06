//! Lattice sums against integrals for continuous log-concave densities.

use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::density::{sphere_directions, ContinuousDensity};
use crate::error::{invalid, LceError, Result};
use crate::geometry::ConvexBodySpec;
use crate::lattice::BoxDomain;
use crate::linalg::SquareMatrix;
use crate::quadrature::{composite_tensor_integrate, integrate_piecewise};
use crate::sum::Accumulator;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub sigma: f64,
    /// `Σ f(k) - ∫ f`.
    pub mass_gap: f64,
    /// `Σ k_i f(k) - ∫ x_i f`.
    pub mean_gap: Vec<f64>,
    /// `Σ k_i^2 f(k) - ∫ x_i^2 f`.
    pub second_moment_gap: Vec<f64>,
    /// `Σ k_i k_j f(k) - ∫ x_i x_j f` for `i < j`, row-major over pairs.
    pub cross_moment: Vec<f64>,
    /// `det Cov_Z - det Cov_R`, with `Cov_Z` the covariance of `f` restricted
    /// to the lattice and normalized.
    pub det_gap: f64,
    pub lattice_mass: f64,
    pub max_f: f64,
    /// `d = 1`: `|Σ f - ∫ f| <= max f`.
    pub quasi_concave_holds: Option<bool>,
    /// `d = 1`: `|∫ x f - Σ k f(k)| <= (e + 1) Σ f(k)`.
    pub covdis_holds: Option<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BridgeOptions {
    /// Sub-intervals per axis for the tensor-quadrature fallback; `None`
    /// disables the fallback.
    pub quadrature_pieces: Option<usize>,
    pub quadrature_order: usize,
}

impl Default for BridgeOptions {
    fn default() -> Self {
        Self { quadrature_pieces: None, quadrature_order: 10 }
    }
}

/// Sum `terms` pairing offset `o` with its mirror `N - 1 - o`: for an even
/// integrand on a symmetric box each pair cancels exactly.
fn mirrored_sum(terms: &[f64]) -> f64 {
    let n = terms.len();
    let mut acc = Accumulator::new();
    for o in 0..n / 2 {
        acc.add(terms[o] + terms[n - 1 - o]);
    }
    if n % 2 == 1 {
        acc.add(terms[n / 2]);
    }
    acc.value()
}

struct ContinuousMoments {
    mass: f64,
    first: Vec<f64>,
    second: SquareMatrix,
    cov: SquareMatrix,
}

fn continuous_moments(f: &ContinuousDensity, domain: &BoxDomain, opts: &BridgeOptions) -> Result<ContinuousMoments> {
    let d = f.dim;
    if let (Some(mass), Some(mean), Some(cov)) = (f.known_mass, &f.known_mean, &f.known_cov) {
        let c = cov.to_matrix();
        let mut second = c.clone();
        for i in 0..d {
            for j in 0..d {
                second[(i, j)] = mass * (c[(i, j)] + mean[i] * mean[j]);
            }
        }
        return Ok(ContinuousMoments { mass, first: mean.iter().map(|m| m * mass).collect(), second, cov: c });
    }
    let pieces = opts.quadrature_pieces.ok_or_else(|| {
        LceError::InvalidInput(format!("{} has no closed-form moments and no quadrature budget", f.name))
    })?;
    let lo: Vec<f64> = domain.lo().coords().iter().map(|v| *v as f64 - 0.5).collect();
    let hi: Vec<f64> = domain.hi().coords().iter().map(|v| *v as f64 + 0.5).collect();
    let q = |g: &dyn Fn(&[f64]) -> f64| composite_tensor_integrate(g, &lo, &hi, pieces, opts.quadrature_order);
    let mass = q(&|x| f.eval(x));
    let first: Vec<f64> = (0..d).map(|i| q(&|x| x[i] * f.eval(x))).collect();
    let mut second = SquareMatrix::zeros(d);
    for i in 0..d {
        for j in i..d {
            let v = q(&|x| x[i] * x[j] * f.eval(x));
            second[(i, j)] = v;
            second[(j, i)] = v;
        }
    }
    let mut cov = SquareMatrix::zeros(d);
    for i in 0..d {
        for j in 0..d {
            cov[(i, j)] = second[(i, j)] / mass - first[i] * first[j] / (mass * mass);
        }
    }
    Ok(ContinuousMoments { mass, first, second, cov })
}

/// Lattice sums of `f`, `x_i f`, `x_i x_j f` over `domain` against the
/// continuous integrals.
pub fn lattice_vs_integral_gaps(f: &ContinuousDensity, domain: &BoxDomain) -> Result<GapReport> {
    lattice_vs_integral_gaps_with(f, domain, &BridgeOptions::default())
}

pub fn lattice_vs_integral_gaps_with(
    f: &ContinuousDensity,
    domain: &BoxDomain,
    opts: &BridgeOptions,
) -> Result<GapReport> {
    let d = f.dim;
    if domain.dim() != d {
        return Err(LceError::DimensionMismatch { expected: d, found: domain.dim() });
    }
    let cont = continuous_moments(f, domain, opts)?;
    let n = domain.cell_count();
    let mut vals = Vec::with_capacity(n);
    let mut pts = Vec::with_capacity(n * d);
    let mut x = vec![0.0; d];
    domain.for_each_point(|_, k| {
        for i in 0..d {
            x[i] = k[i] as f64;
        }
        vals.push(f.eval(&x));
        pts.extend_from_slice(&x);
    });
    if vals.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(LceError::NonFinite("density on the lattice".into()));
    }
    let s0 = mirrored_sum(&vals);
    let mut s1 = vec![0.0; d];
    let mut terms = vec![0.0; n];
    for i in 0..d {
        for o in 0..n {
            terms[o] = pts[o * d + i] * vals[o];
        }
        s1[i] = mirrored_sum(&terms);
    }
    let mut s2 = SquareMatrix::zeros(d);
    for i in 0..d {
        for j in i..d {
            for o in 0..n {
                terms[o] = pts[o * d + i] * pts[o * d + j] * vals[o];
            }
            let v = mirrored_sum(&terms);
            s2[(i, j)] = v;
            s2[(j, i)] = v;
        }
    }
    let mass_gap = s0 - cont.mass;
    let mean_gap: Vec<f64> = (0..d).map(|i| s1[i] - cont.first[i]).collect();
    let second_moment_gap: Vec<f64> = (0..d).map(|i| s2[(i, i)] - cont.second[(i, i)]).collect();
    let mut cross_moment = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            cross_moment.push(s2[(i, j)] - cont.second[(i, j)]);
        }
    }
    let mut cov_z = SquareMatrix::zeros(d);
    for i in 0..d {
        for j in 0..d {
            cov_z[(i, j)] = s2[(i, j)] / s0 - (s1[i] / s0) * (s1[j] / s0);
        }
    }
    let det_gap = cov_z.det() - cont.cov.det();
    let lattice_max = vals.iter().cloned().fold(0.0, f64::max);
    let max_f = f.known_max.unwrap_or(lattice_max).max(lattice_max);
    let (quasi_concave_holds, covdis_holds) = if d == 1 {
        (Some(mass_gap.abs() <= max_f), Some(mean_gap[0].abs() <= (E + 1.0) * s0))
    } else {
        (None, None)
    };
    Ok(GapReport {
        sigma: f.scale,
        mass_gap,
        mean_gap,
        second_moment_gap,
        cross_moment,
        det_gap,
        lattice_mass: s0,
        max_f,
        quasi_concave_holds,
        covdis_holds,
    })
}

/// Box `center ± ceil(multiplier * scale)` around the density's mean.
pub fn default_box(f: &ContinuousDensity, multiplier: f64) -> Result<BoxDomain> {
    let c = f.center();
    let half = (multiplier * f.scale).ceil() as i64;
    let lo = c.iter().map(|v| v.round() as i64 - half).collect();
    let hi = c.iter().map(|v| v.round() as i64 + half).collect();
    BoxDomain::new(crate::lattice::IndexVector(lo), crate::lattice::IndexVector(hi))
}

/// `#(K ∩ Z^d) / |K|`.
pub fn lattice_count_ratio(k: &ConvexBodySpec) -> Result<f64> {
    let vol = k.volume()?;
    if !(vol > 0.0 && vol.is_finite()) {
        return invalid("body must have positive finite volume");
    }
    let (lo, hi) = k.bounding_box()?;
    let lo_i: Vec<i64> = lo.iter().map(|v| (v - 1e-9).ceil() as i64).collect();
    let hi_i: Vec<i64> = hi.iter().map(|v| (v + 1e-9).floor() as i64).collect();
    if lo_i.iter().zip(&hi_i).any(|(a, b)| a > b) {
        return Ok(0.0);
    }
    let domain = BoxDomain::new(crate::lattice::IndexVector(lo_i), crate::lattice::IndexVector(hi_i))?;
    let facets = match k {
        ConvexBodySpec::HPolytope { .. } | ConvexBodySpec::VPolytope { .. } => Some(k.polytope()?.facets),
        _ => None,
    };
    let mut count = 0u64;
    let mut x = vec![0.0; domain.dim()];
    let mut err = None;
    domain.for_each_point(|_, p| {
        for (xi, pi) in x.iter_mut().zip(p) {
            *xi = *pi as f64;
        }
        let inside = match &facets {
            Some(fs) => Ok(fs.iter().all(|(n, h)| crate::linalg::dot(n, &x) <= h + 1e-9)),
            None => k.contains(&x),
        };
        match inside {
            Ok(true) => count += 1,
            Ok(false) => {}
            Err(e) => {
                err.get_or_insert(e);
            }
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    Ok(count as f64 / vol)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub f0: f64,
    pub c_d: f64,
    /// `c_d / f(0)^{1/d}`.
    pub threshold_radius: f64,
    /// Largest `f(x) / (f(0) 2^{-|x| f(0)^{1/d} / c_d})` over sampled points.
    pub worst_ratio: f64,
    pub points_checked: usize,
    pub passed: bool,
}

/// `f(0) 2^{-r f(0)^{1/d} / c_d}`.
pub fn concentration_bound(f0: f64, d: usize, c_d: f64, r: f64) -> f64 {
    f0 * 2f64.powf(-r * f0.powf(1.0 / d as f64) / c_d)
}

/// Check `f(x) <= f(0) 2^{-|x| f(0)^{1/d} / c_d}` for `|x| >= c_d / f(0)^{1/d}`
/// on `rays` directions, radii spread over `[t_0, 4 t_0]`.
pub fn concentration_check(f: &ContinuousDensity, c_d: f64, rays: usize, samples_per_ray: usize) -> Result<ConcentrationReport> {
    if !(c_d > 0.0) {
        return invalid("c_d must be positive");
    }
    let d = f.dim;
    let f0 = f.eval(&vec![0.0; d]);
    if !(f0 > 0.0) {
        return invalid("concentration check needs f(0) > 0");
    }
    let t0 = c_d / f0.powf(1.0 / d as f64);
    let mut worst = 0.0f64;
    let mut count = 0;
    for dir in sphere_directions(d, rays) {
        for j in 0..samples_per_ray {
            let r = t0 * (1.0 + 3.0 * j as f64 / (samples_per_ray.max(2) - 1) as f64);
            let x: Vec<f64> = dir.iter().map(|u| u * r).collect();
            let bound = concentration_bound(f0, d, c_d, r);
            let v = f.eval(&x);
            let ratio = if bound > 0.0 { v / bound } else if v > 0.0 { f64::INFINITY } else { 0.0 };
            worst = worst.max(ratio);
            count += 1;
        }
    }
    Ok(ConcentrationReport { f0, c_d, threshold_radius: t0, worst_ratio: worst, points_checked: count, passed: worst <= 1.0 })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArgmaxMoment {
    /// `∫ x n_max(x) max_y f(x, y) dx`.
    pub integral: f64,
    /// `Σ_k k n_max(k) max_y f(k, y)`.
    pub lattice: f64,
    pub sigma: f64,
}

/// `(n_max(x), max_y f(x, y))` with `n_max` the smallest maximizer.
pub fn profile_argmax(f: &ContinuousDensity, x: f64) -> Result<(f64, f64)> {
    let g = |y: f64| f.eval(&[x, y]);
    let s = f.scale.max(1e-3);
    let c = f.center()[1];
    // Find a point where the slice is positive.
    let mut m = c;
    if g(m) <= 0.0 {
        let reach = 40.0 * s;
        let steps = 4000;
        let found = (0..=steps).map(|i| c - reach + 2.0 * reach * i as f64 / steps as f64).find(|y| g(*y) > 0.0);
        match found {
            Some(y) => m = y,
            None => return Ok((0.0, 0.0)),
        }
    }
    // Expand to a bracket a < m < b with g(a) < g(m) >= g(b), or a plateau edge.
    let mut h = s;
    let (mut a, mut b);
    if g(m + h) > g(m) {
        a = m;
        let mut mid = m + h;
        loop {
            h *= 2.0;
            let next = mid + h;
            if g(next) <= g(mid) {
                b = next;
                break;
            }
            a = mid;
            mid = next;
            if h > 1e8 * s {
                return Err(LceError::ArgmaxBracket(x));
            }
        }
    } else {
        b = m + h;
        let mut mid = m;
        loop {
            let next = mid - h;
            if g(next) < g(mid) {
                a = next;
                break;
            }
            b = mid;
            mid = next;
            h *= 2.0;
            if h > 1e8 * s {
                return Err(LceError::ArgmaxBracket(x));
            }
        }
    }
    // Golden-section search for the maximum on [a, b].
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c1 = b - phi * (b - a);
    let mut c2 = a + phi * (b - a);
    let (mut g1, mut g2) = (g(c1), g(c2));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-13 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if g1 >= g2 {
            b = c2;
            c2 = c1;
            g2 = g1;
            c1 = b - phi * (b - a);
            g1 = g(c1);
        } else {
            a = c1;
            c1 = c2;
            g1 = g2;
            c2 = a + phi * (b - a);
            g2 = g(c2);
        }
    }
    let (mut y, top) = if g1 >= g2 { (c1, g1) } else { (c2, g2) };
    // Plateau: move to its left end (infimum convention).
    let probe = y - 1e-9 * s;
    if g(probe) == top {
        let mut lo = y - 40.0 * s;
        while g(lo) == top {
            lo -= 40.0 * s;
        }
        let mut hi = y;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) == top {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        y = hi;
    }
    Ok((y, top))
}

/// Both sides of the first-moment identity for the argmax profile (`d = 2`).
pub fn argmax_profile_moment(f: &ContinuousDensity) -> Result<ArgmaxMoment> {
    if f.dim != 2 {
        return Err(LceError::DimensionMismatch { expected: 2, found: f.dim });
    }
    let s = f.scale;
    let c = f.center()[0];
    let reach = match f.tail_bound {
        Some(t) if t.amplitude > 0.0 => t.radius + 40.0 / t.rate,
        Some(t) => t.radius,
        None => 20.0 * s,
    } + 1.0;
    let err = std::cell::RefCell::new(None);
    let integrand = |x: f64| match profile_argmax(f, x) {
        Ok((y, m)) => x * y * m,
        Err(e) => {
            err.borrow_mut().get_or_insert(e);
            0.0
        }
    };
    let scale_val = f.known_max.unwrap_or(1.0) * s * s;
    let integral = integrate_piecewise(&integrand, c - reach, c + reach, &f.breakpoints, 10, 1e-10 * scale_val)?;
    if let Some(e) = err.into_inner() {
        return Err(e);
    }
    let kmax = (c.abs() + reach).ceil() as i64;
    let mut terms = Vec::with_capacity((2 * kmax + 1) as usize);
    for k in -kmax..=kmax {
        let (y, m) = profile_argmax(f, k as f64)?;
        terms.push(k as f64 * y * m);
    }
    Ok(ArgmaxMoment { integral, lattice: mirrored_sum(&terms), sigma: s })
}
