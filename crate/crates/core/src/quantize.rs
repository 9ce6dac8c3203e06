//! Restriction of a continuous density to `Z^d`, with an audited tail.

use crate::density::ContinuousDensity;
use crate::error::{invalid, LceError, Result};
use crate::lattice::{BoxDomain, IndexVector, LatticePmf};
use crate::sum::Accumulator;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuantizeOptions {
    pub radius_multiplier: f64,
    pub tail_tolerance: f64,
}

impl Default for QuantizeOptions {
    fn default() -> Self {
        Self { radius_multiplier: 12.0, tail_tolerance: 1e-12 }
    }
}

/// `p(k) ∝ f(k)` on `center ± ceil(radius_multiplier * scale)`.
///
/// The normalizer is the lattice sum over the box plus an upper bound on the
/// lattice sum outside it; that bound (divided by the normalizer) becomes
/// the deficit. Outside points closer than the tail envelope's radius are
/// summed exactly, farther shells use the envelope.
pub fn quantize_density(
    f: &ContinuousDensity,
    center: &IndexVector,
    opts: QuantizeOptions,
) -> Result<LatticePmf> {
    if center.dim() != f.dim {
        return Err(LceError::DimensionMismatch { expected: f.dim, found: center.dim() });
    }
    if !(opts.radius_multiplier > 0.0) {
        return invalid("radius_multiplier must be positive");
    }
    let tail = f
        .tail_bound
        .ok_or_else(|| LceError::InvalidInput(format!("{} has no declared tail bound", f.name)))?;
    let half = (opts.radius_multiplier * f.scale).ceil().max(0.0) as i64;
    let domain = BoxDomain::centered(center, half)?;

    let mut raw = Vec::with_capacity(domain.cell_count());
    let mut x = vec![0.0; f.dim];
    let mut bad = None;
    domain.for_each_point(|_, k| {
        for (xi, ki) in x.iter_mut().zip(k) {
            *xi = *ki as f64;
        }
        let v = f.eval(&x);
        if !v.is_finite() || v < 0.0 {
            bad.get_or_insert_with(|| IndexVector(k.to_vec()));
        }
        raw.push(v);
    });
    if let Some(k) = bad {
        return Err(LceError::NonFinite(format!("density value at {k}")));
    }
    let retained = {
        let mut a = Accumulator::new();
        a.extend(raw.iter().copied());
        a.value()
    };
    if !(retained > 0.0) {
        return invalid("density vanishes on the whole box");
    }

    let tail_mass = tail_sum_outside(f, center, half, &tail)?;
    let z = retained + tail_mass;
    let deficit = tail_mass / z;
    if !(deficit <= opts.tail_tolerance) {
        return Err(LceError::TailTooLarge { deficit, tolerance: opts.tail_tolerance });
    }
    let values = raw.into_iter().map(|v| v / z).collect();
    Ok(LatticePmf::new(domain, values, deficit)?
        .with_meta("family", f.name.clone())
        .with_meta("radius_multiplier", opts.radius_multiplier))
}

/// Upper bound on `sum f(k)` over lattice points with `||k - center||_inf > half`.
fn tail_sum_outside(
    f: &ContinuousDensity,
    center: &IndexVector,
    half: i64,
    tail: &crate::density::TailBound,
) -> Result<f64> {
    let d = f.dim as i32;
    let mean = f.center();
    let shift = center
        .coords()
        .iter()
        .zip(&mean)
        .fold(0.0f64, |m, (c, mu)| m.max((*c as f64 - mu).abs()));
    // Shell t (sup-distance from center) lies at sup-distance >= t - shift from the mean.
    let exact_limit = (tail.radius + shift).ceil() as i64;
    let mut acc = Accumulator::new();
    if exact_limit > half {
        let outer = BoxDomain::centered(center, exact_limit)?;
        let inner = BoxDomain::centered(center, half)?;
        let mut x = vec![0.0; f.dim];
        outer.for_each_point(|_, k| {
            if !inner.contains(k) {
                for (xi, ki) in x.iter_mut().zip(k) {
                    *xi = *ki as f64;
                }
                acc.add(f.eval(&x));
            }
        });
    }
    if tail.amplitude == 0.0 {
        return Ok(acc.value());
    }
    if !(tail.rate > 0.0) {
        return Err(LceError::TailTooLarge { deficit: f64::INFINITY, tolerance: 0.0 });
    }
    let mut t = half.max(exact_limit) + 1;
    loop {
        let shell = ((2 * t + 1) as f64).powi(d) - ((2 * t - 1) as f64).powi(d);
        let term = shell * tail.value_at(t as f64 - shift);
        acc.add(term);
        // Shell counts grow polynomially; once past the peak of t^{d-1} e^{-rate t}
        // and negligible, the remaining geometric-like tail is dominated.
        let past_peak = (t as f64) * tail.rate > (d - 1) as f64 + 1.0;
        if past_peak && term < 1e-30 * acc.value().max(1e-300) {
            let ratio = (-tail.rate).exp() * ((2 * t + 3) as f64 / (2 * t + 1) as f64).powi(d - 1);
            if ratio < 1.0 {
                acc.add(term * ratio / (1.0 - ratio));
                break;
            }
        }
        if term == 0.0 && past_peak {
            break;
        }
        t += 1;
        if t > half + 10_000_000 {
            return Err(LceError::QuadratureNonConvergence("tail series".into()));
        }
    }
    Ok(acc.value())
}
