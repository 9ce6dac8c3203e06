//! Convolution of lattice p.m.f.s, direct and by multidimensional FFT.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{LceError, Result};
use crate::lattice::{BoxDomain, LatticePmf};
use crate::sum::Accumulator;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvolveMethod {
    Direct,
    Fft,
    Auto,
}

impl std::str::FromStr for ConvolveMethod {
    type Err = LceError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Self::Direct),
            "fft" => Ok(Self::Fft),
            "auto" => Ok(Self::Auto),
            _ => Err(LceError::Unknown { kind: "convolution method", name: s.to_string() }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvolveOptions {
    pub method: ConvolveMethod,
    /// Cap on padded FFT cells (and result cells for the direct path).
    pub memory_cap: usize,
    /// Output cells re-checked against the direct sum after an FFT.
    pub verify_samples: usize,
    /// Largest `|p| * |q|` for which `Auto` picks the direct path.
    pub direct_threshold: usize,
}

impl Default for ConvolveOptions {
    fn default() -> Self {
        Self { method: ConvolveMethod::Auto, memory_cap: 1 << 25, verify_samples: 16, direct_threshold: 1 << 22 }
    }
}

impl ConvolveOptions {
    pub fn with_method(method: ConvolveMethod) -> Self {
        Self { method, ..Self::default() }
    }
}

/// `(p * q)(k) = sum_j p(j) q(k - j)` over the Minkowski sum of the boxes.
pub fn convolve(p: &LatticePmf, q: &LatticePmf, opts: &ConvolveOptions) -> Result<LatticePmf> {
    if p.dim() != q.dim() {
        return Err(LceError::DimensionMismatch { expected: p.dim(), found: q.dim() });
    }
    let out_box = p.domain().minkowski(q.domain())?;
    let cells = out_box.cell_count();
    if cells > opts.memory_cap {
        return Err(LceError::MemoryCap { cells: cells as u128, cap: opts.memory_cap as u128 });
    }
    let work = p.values().len().saturating_mul(q.values().len());
    let use_fft = match opts.method {
        ConvolveMethod::Direct => false,
        ConvolveMethod::Fft => true,
        ConvolveMethod::Auto => work > opts.direct_threshold,
    };
    let values = if use_fft {
        let v = fft_convolve(p, q, &out_box, opts.memory_cap)?;
        verify_subsample(p, q, &out_box, &v, opts.verify_samples)?;
        v
    } else {
        direct_convolve(p, q, &out_box)
    };
    let (dp, dq) = (p.deficit(), q.deficit());
    let deficit = dp + dq - dp * dq;
    Ok(LatticePmf::new(out_box, values, deficit)?
        .with_meta("method", if use_fft { "fft" } else { "direct" }))
}

/// `n`-fold convolution power by repeated convolution; `n = 1` is the identity.
pub fn self_convolve(p: &LatticePmf, n: usize, opts: &ConvolveOptions) -> Result<LatticePmf> {
    if n == 0 {
        return Err(LceError::InvalidInput("convolution power needs n >= 1".into()));
    }
    let mut acc = p.clone();
    for _ in 1..n {
        acc = convolve(&acc, p, opts)?;
    }
    Ok(acc)
}

/// Row-major strides of `shape`.
fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Offsets (in a target array of strides `target`) of every cell of `b`,
/// relative to `b.lo`.
fn relative_offsets(b: &BoxDomain, target: &[usize]) -> Vec<usize> {
    let lo = b.lo().coords().to_vec();
    let mut out = Vec::with_capacity(b.cell_count());
    b.for_each_point(|_, k| {
        out.push(k.iter().zip(&lo).zip(target).map(|((x, l), s)| (x - l) as usize * s).sum());
    });
    out
}

fn direct_convolve(p: &LatticePmf, q: &LatticePmf, out_box: &BoxDomain) -> Vec<f64> {
    let ostr = strides(&out_box.shape());
    let p_off = relative_offsets(p.domain(), &ostr);
    let q_off = relative_offsets(q.domain(), &ostr);
    let mut acc = vec![Accumulator::new(); out_box.cell_count()];
    for (pv, po) in p.values().iter().zip(&p_off) {
        if *pv == 0.0 {
            continue;
        }
        for (qv, qo) in q.values().iter().zip(&q_off) {
            acc[po + qo].add(pv * qv);
        }
    }
    acc.into_iter().map(|a| a.value()).collect()
}

/// In-place FFT along every axis of a row-major array.
fn fft_nd(data: &mut [Complex<f64>], shape: &[usize], planner: &mut FftPlanner<f64>, inverse: bool) {
    let st = strides(shape);
    let total = data.len();
    for (ax, &n) in shape.iter().enumerate() {
        if n == 1 {
            continue;
        }
        let fft = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
        let stride = st[ax];
        if stride == 1 {
            fft.process(data);
            continue;
        }
        let mut line = vec![Complex::new(0.0, 0.0); n];
        let block = stride * n;
        for start in (0..total).step_by(block) {
            for inner in 0..stride {
                let base = start + inner;
                for (t, slot) in line.iter_mut().enumerate() {
                    *slot = data[base + t * stride];
                }
                fft.process(&mut line);
                for (t, v) in line.iter().enumerate() {
                    data[base + t * stride] = *v;
                }
            }
        }
    }
}

fn fft_convolve(p: &LatticePmf, q: &LatticePmf, out_box: &BoxDomain, cap: usize) -> Result<Vec<f64>> {
    let out_shape = out_box.shape();
    let padded: Vec<usize> = out_shape.iter().map(|n| n.next_power_of_two()).collect();
    let total: usize = padded.iter().product();
    if total > cap {
        return Err(LceError::MemoryCap { cells: total as u128, cap: cap as u128 });
    }
    let pst = strides(&padded);
    let load = |m: &LatticePmf| -> Vec<Complex<f64>> {
        let mut buf = vec![Complex::new(0.0, 0.0); total];
        let offs = relative_offsets(m.domain(), &pst);
        for (v, o) in m.values().iter().zip(offs) {
            buf[o] = Complex::new(*v, 0.0);
        }
        buf
    };
    let mut planner = FftPlanner::new();
    let mut a = load(p);
    fft_nd(&mut a, &padded, &mut planner, false);
    {
        let mut b = load(q);
        fft_nd(&mut b, &padded, &mut planner, false);
        for (x, y) in a.iter_mut().zip(&b) {
            *x *= *y;
        }
    }
    fft_nd(&mut a, &padded, &mut planner, true);
    let scale = 1.0 / total as f64;
    let offs = relative_offsets(out_box, &pst);
    // Round-off leaves tiny negative values where the true mass is ~0.
    Ok(offs.into_iter().map(|o| (a[o].re * scale).max(0.0)).collect())
}

/// Compare a deterministic subsample of FFT outputs with the direct sum.
fn verify_subsample(
    p: &LatticePmf,
    q: &LatticePmf,
    out_box: &BoxDomain,
    values: &[f64],
    samples: usize,
) -> Result<()> {
    let n = values.len();
    if samples == 0 || n == 0 {
        return Ok(());
    }
    let tol = 1e-10 * (p.total_mass() * q.total_mass()).max(f64::MIN_POSITIVE);
    let mut picks: Vec<usize> = (0..samples as u64)
        .map(|s| ((s.wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 11) % n as u64) as usize)
        .collect();
    // Always include the heaviest cell, where cancellation errors are largest.
    if let Some((imax, _)) = values.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)) {
        picks.push(imax);
    }
    let mut j = vec![0i64; p.dim()];
    for off in picks {
        let k = out_box.point(off);
        let mut acc = Accumulator::new();
        p.domain().for_each_point(|po, pk| {
            let pv = p.values()[po];
            if pv == 0.0 {
                return;
            }
            for (t, slot) in j.iter_mut().enumerate() {
                *slot = k.0[t] - pk[t];
            }
            let qv = q.get(&j);
            if qv != 0.0 {
                acc.add(pv * qv);
            }
        });
        let diff = (acc.value() - values[off]).abs();
        if diff > tol {
            return Err(LceError::FftMismatch { index: k.0, discrepancy: diff });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::DensitySpec;
    use crate::lattice::{make_uniform_on_set, IndexVector, LatticeSet};
    use crate::moments::discrete_moments;
    use crate::quantize::{quantize_density, QuantizeOptions};

    fn bit() -> LatticePmf {
        make_uniform_on_set(&LatticeSet::from_coords(1, &[&[0], &[1]]).unwrap()).unwrap()
    }

    #[test]
    fn point_mass_shifts() {
        let p = make_uniform_on_set(&LatticeSet::from_coords(2, &[&[0, 0], &[1, 2], &[2, 1]]).unwrap()).unwrap();
        let delta = LatticePmf::point_mass(IndexVector(vec![3, -1])).unwrap();
        for m in [ConvolveMethod::Direct, ConvolveMethod::Fft] {
            let r = convolve(&delta, &p, &ConvolveOptions::with_method(m)).unwrap();
            let s = p.shift(&[3, -1]).unwrap();
            assert_eq!(r.domain(), s.domain());
            for (a, b) in r.values().iter().zip(s.values()) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn bits_make_binomials() {
        let r = convolve(&bit(), &bit(), &ConvolveOptions::default()).unwrap();
        assert_eq!(r.values(), &[0.25, 0.5, 0.25]);
        let r3 = self_convolve(&bit(), 3, &ConvolveOptions::default()).unwrap();
        assert_eq!(r3.values(), &[0.125, 0.375, 0.375, 0.125]);
        assert_eq!(self_convolve(&bit(), 1, &ConvolveOptions::default()).unwrap(), bit());
        assert!(self_convolve(&bit(), 0, &ConvolveOptions::default()).is_err());
    }

    #[test]
    fn direct_and_fft_agree_on_2d_gaussian() {
        let f = DensitySpec::Gaussian { sigma: 4.0, dim: 2 }.build().unwrap();
        let p = quantize_density(&f, &IndexVector(vec![0, 0]), QuantizeOptions::default()).unwrap();
        let a = convolve(&p, &p, &ConvolveOptions::with_method(ConvolveMethod::Direct)).unwrap();
        let b = convolve(&p, &p, &ConvolveOptions::with_method(ConvolveMethod::Fft)).unwrap();
        let worst = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-10, "max discrepancy {worst}");
        assert!(a.mass_error() < 1e-9 && b.mass_error() < 1e-9);
    }

    #[test]
    fn variance_doubles() {
        let f = DensitySpec::Gaussian { sigma: 3.0, dim: 1 }.build().unwrap();
        let p = quantize_density(&f, &IndexVector(vec![0]), QuantizeOptions::default()).unwrap();
        let s = self_convolve(&p, 2, &ConvolveOptions::default()).unwrap();
        let v1 = discrete_moments(&p).cov.entries[0][0];
        let v2 = discrete_moments(&s).cov.entries[0][0];
        assert!((v2 / (2.0 * v1) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn dimension_mismatch_and_cap() {
        let p2 = LatticePmf::point_mass(IndexVector(vec![0, 0])).unwrap();
        assert!(matches!(
            convolve(&bit(), &p2, &ConvolveOptions::default()),
            Err(LceError::DimensionMismatch { .. })
        ));
        let opts = ConvolveOptions { memory_cap: 2, ..Default::default() };
        assert!(matches!(convolve(&bit(), &bit(), &opts), Err(LceError::MemoryCap { .. })));
    }
}
