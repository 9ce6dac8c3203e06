//! Discrete entropy, moments, isotropy diagnostics and the discrete
//! entropy/covariance bounds.

use std::f64::consts::{E, PI};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, LceError, Result};
use crate::lattice::{IndexVector, LatticePmf};
use crate::linalg::SquareMatrix;
use crate::sum::Accumulator;

/// Symmetric `d x d` covariance, in squared lattice units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceMatrix {
    pub dim: usize,
    pub entries: Vec<Vec<f64>>,
}

impl CovarianceMatrix {
    pub fn from_matrix(m: &SquareMatrix) -> Self {
        let n = m.n();
        // Average with the transpose so the stored matrix is exactly symmetric.
        let entries = (0..n)
            .map(|i| (0..n).map(|j| 0.5 * (m[(i, j)] + m[(j, i)])).collect())
            .collect();
        Self { dim: n, entries }
    }

    pub fn to_matrix(&self) -> SquareMatrix {
        SquareMatrix::from_rows(&self.entries)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::from_matrix(&self.to_matrix().scale(s))
    }

    pub fn det(&self) -> f64 {
        self.to_matrix().det()
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.to_matrix().symmetric_eigen().0
    }

    /// `det^{1/(2d)}`, or 0 when the determinant is not positive.
    pub fn sigma_hat(&self) -> f64 {
        let det = self.det();
        if det > 0.0 {
            det.powf(1.0 / (2.0 * self.dim as f64))
        } else {
            0.0
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub mass: f64,
    pub mean: Vec<f64>,
    pub cov: CovarianceMatrix,
    pub max_value: f64,
    pub argmax: IndexVector,
    pub sigma_hat: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsotropyScore {
    pub op_norm_deviation: f64,
    pub normalized: f64,
}

/// Ratios used by the discrete max/covariance and entropy bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundRatios {
    /// `max p * sqrt(1 + 4 var)`, only for `d = 1`.
    pub max_times_sqrt_one_plus_4var: Option<f64>,
    /// `max p * det(Cov)^{1/2}`.
    pub ratio_ub: f64,
    /// `(d/2) log(2 pi e det(Cov + I/12)^{1/d}) - H(p)`.
    pub gaussmax_slack: f64,
    /// `det(Cov) <= 0`; the ratios above are then not meaningful.
    pub degenerate: bool,
}

fn check_nonnegative(p: &LatticePmf) -> Result<()> {
    if let Some((off, &v)) = p.values().iter().enumerate().find(|(_, v)| **v < 0.0) {
        return Err(LceError::NegativeMass { index: p.domain().point(off).0, value: v });
    }
    Ok(())
}

/// Shannon entropy in nats, `0 log 0 := 0`.
pub fn shannon_entropy(p: &LatticePmf) -> Result<f64> {
    check_nonnegative(p)?;
    let mut acc = Accumulator::new();
    for &v in p.values() {
        if v > 0.0 {
            acc.add(-v * v.ln());
        }
    }
    Ok(acc.value())
}

/// Mass, mean, covariance, max and `sigma_hat` by compensated finite sums.
///
/// Covariance uses the normalized definition (divides by the retained mass),
/// computed in two passes around the mean.
pub fn discrete_moments(p: &LatticePmf) -> MomentSummary {
    let d = p.dim();
    let vals = p.values();
    let mut mass = Accumulator::new();
    let mut first = vec![Accumulator::new(); d];
    let mut max_value = f64::NEG_INFINITY;
    let mut argmax = p.domain().lo().clone();
    p.domain().for_each_point(|off, k| {
        let v = vals[off];
        mass.add(v);
        for i in 0..d {
            first[i].add(v * k[i] as f64);
        }
        // Strict comparison keeps the lexicographically first maximizer.
        if v > max_value {
            max_value = v;
            argmax = IndexVector(k.to_vec());
        }
    });
    let m = mass.value();
    let mean: Vec<f64> = first.iter().map(|a| if m > 0.0 { a.value() / m } else { 0.0 }).collect();
    let mut second = vec![Accumulator::new(); d * d];
    p.domain().for_each_point(|off, k| {
        let v = vals[off];
        if v == 0.0 {
            return;
        }
        for i in 0..d {
            let di = k[i] as f64 - mean[i];
            for j in i..d {
                second[i * d + j].add(v * di * (k[j] as f64 - mean[j]));
            }
        }
    });
    let mut cov = SquareMatrix::zeros(d);
    for i in 0..d {
        for j in i..d {
            let c = if m > 0.0 { second[i * d + j].value() / m } else { 0.0 };
            cov[(i, j)] = c;
            cov[(j, i)] = c;
        }
    }
    let cov = CovarianceMatrix::from_matrix(&cov);
    let sigma_hat = cov.sigma_hat();
    MomentSummary { mass: m, mean, cov, max_value, argmax, sigma_hat }
}

/// `||Cov - sigma_hat^2 I||_op` and its ratio to `sigma_hat`.
pub fn isotropy_score(p: &LatticePmf) -> Result<IsotropyScore> {
    let m = discrete_moments(p);
    isotropy_score_of(&m.cov)
}

pub fn isotropy_score_of(cov: &CovarianceMatrix) -> Result<IsotropyScore> {
    let det = cov.det();
    if !(det > 0.0) {
        return Err(LceError::DegenerateCovariance(det));
    }
    let s = cov.sigma_hat();
    let diff = cov.to_matrix().sub(&SquareMatrix::identity(cov.dim).scale(s * s));
    let dev = diff.symmetric_op_norm();
    Ok(IsotropyScore { op_norm_deviation: dev, normalized: dev / s })
}

/// `max p * sqrt(1 + 4 var)` for a one-dimensional p.m.f.
pub fn max_times_sqrt_one_plus_4var(p: &LatticePmf) -> Result<f64> {
    if p.dim() != 1 {
        return invalid(format!("the one-dimensional max bound needs d = 1, got d = {}", p.dim()));
    }
    let m = discrete_moments(p);
    Ok(m.max_value * (1.0 + 4.0 * m.cov.entries[0][0]).sqrt())
}

pub fn entropy_covariance_bounds(p: &LatticePmf) -> Result<BoundRatios> {
    let d = p.dim();
    let m = discrete_moments(p);
    let h = shannon_entropy(p)?;
    let det = m.cov.det();
    let smoothed = m.cov.to_matrix().add(&SquareMatrix::identity(d).scale(1.0 / 12.0));
    let det_s = smoothed.det();
    let gaussmax_slack = 0.5 * d as f64 * (2.0 * PI * E * det_s.powf(1.0 / d as f64)).ln() - h;
    Ok(BoundRatios {
        max_times_sqrt_one_plus_4var: if d == 1 {
            Some(m.max_value * (1.0 + 4.0 * m.cov.entries[0][0]).sqrt())
        } else {
            None
        },
        ratio_ub: m.max_value * det.max(0.0).sqrt(),
        gaussmax_slack,
        degenerate: !(det > 0.0),
    })
}

/// `sum_k |p(k) - p(k - e_axis)|` over the box enlarged by one step.
pub fn variation_sum(p: &LatticePmf, axis: usize) -> Result<f64> {
    let d = p.dim();
    if axis >= d {
        return invalid(format!("axis {axis} out of range for d = {d}"));
    }
    let mut above = vec![0i64; d];
    above[axis] = 1;
    let big = p.domain().enlarge(&vec![0; d], &above)?;
    let mut acc = Accumulator::new();
    let mut prev = vec![0i64; d];
    big.for_each_point(|_, k| {
        prev.copy_from_slice(k);
        prev[axis] -= 1;
        acc.add((p.get(k) - p.get(&prev)).abs());
    });
    Ok(acc.value())
}

/// `sum_{l in Z^{d-j}} |l_1|^i max_{k in Z^j} p(k, l)`: the first `j` axes are
/// maximized, the remaining ones summed; `l_1` is axis `j`.
pub fn sum_of_maxima(p: &LatticePmf, i: u32, j: usize) -> Result<f64> {
    let d = p.dim();
    if i > 2 || j >= d {
        return invalid(format!("sum of maxima needs i <= 2 and j <= d - 1 (got i = {i}, j = {j}, d = {d})"));
    }
    let shape = p.domain().shape();
    let inner: usize = shape[j..].iter().product();
    let outer: usize = shape[..j].iter().product();
    let mut maxima = vec![0.0f64; inner];
    let vals = p.values();
    for o in 0..outer {
        for (t, m) in maxima.iter_mut().enumerate() {
            *m = m.max(vals[o * inner + t]);
        }
    }
    let lo_j = p.domain().lo().coords()[j];
    let stride: usize = shape[j + 1..].iter().product();
    let mut acc = Accumulator::new();
    for (t, &m) in maxima.iter().enumerate() {
        let l1 = lo_j + (t / stride) as i64;
        acc.add((l1.unsigned_abs() as f64).powi(i as i32) * m);
    }
    Ok(acc.value())
}
