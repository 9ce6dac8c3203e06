//! Continuous densities on `R^d` and the named density registry.

use std::f64::consts::{E, PI};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, LceError, Result};
use crate::linalg::SquareMatrix;
use crate::moments::CovarianceMatrix;

pub type Evaluator = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Exponential envelope for the far field: for `||x - center||_inf >= radius`,
/// `f(x) <= amplitude * exp(-rate * ||x - center||_inf)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailBound {
    pub amplitude: f64,
    pub rate: f64,
    pub radius: f64,
}

impl TailBound {
    pub fn value_at(&self, dist_inf: f64) -> f64 {
        if self.amplitude == 0.0 {
            0.0
        } else {
            self.amplitude * (-self.rate * dist_inf).exp()
        }
    }
}

/// A density on `R^d` with whatever closed-form metadata is known.
///
/// Evaluators are plain `Fn + Send + Sync`, so a density can be shared
/// across threads.
#[derive(Clone)]
pub struct ContinuousDensity {
    pub name: String,
    pub dim: usize,
    pub evaluate: Evaluator,
    pub known_mass: Option<f64>,
    pub known_mean: Option<Vec<f64>>,
    pub known_cov: Option<CovarianceMatrix>,
    pub known_max: Option<f64>,
    pub tail_bound: Option<TailBound>,
    pub logconcave: bool,
    /// Coordinates (applied on every axis) where the density is not smooth;
    /// quadrature splits intervals there.
    pub breakpoints: Vec<f64>,
    /// Characteristic length, `sqrt(lambda_max(cov))` when known.
    pub scale: f64,
}

impl fmt::Debug for ContinuousDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ContinuousDensity")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("known_mean", &self.known_mean)
            .field("tail_bound", &self.tail_bound)
            .field("scale", &self.scale)
            .finish_non_exhaustive()
    }
}

impl ContinuousDensity {
    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.evaluate)(x)
    }

    pub fn center(&self) -> Vec<f64> {
        self.known_mean.clone().unwrap_or_else(|| vec![0.0; self.dim])
    }

    /// `sigma^{-d} f(x / sigma)`: same shape, all lengths multiplied by `sigma`.
    pub fn rescaled(&self, sigma: f64) -> ContinuousDensity {
        let inner = self.evaluate.clone();
        let d = self.dim;
        let jac = sigma.powi(-(d as i32));
        let eval: Evaluator = Arc::new(move |x: &[f64]| {
            let y: Vec<f64> = x.iter().map(|v| v / sigma).collect();
            jac * inner(&y)
        });
        ContinuousDensity {
            name: format!("{}*{sigma}", self.name),
            dim: d,
            evaluate: eval,
            known_mass: self.known_mass,
            known_mean: self.known_mean.as_ref().map(|m| m.iter().map(|v| v * sigma).collect()),
            known_cov: self.known_cov.as_ref().map(|c| c.scaled(sigma * sigma)),
            known_max: self.known_max.map(|m| m * jac),
            tail_bound: self.tail_bound.map(|t| TailBound {
                amplitude: t.amplitude * jac,
                rate: t.rate / sigma,
                radius: t.radius * sigma,
            }),
            logconcave: self.logconcave,
            breakpoints: self.breakpoints.iter().map(|b| b * sigma).collect(),
            scale: self.scale * sigma,
        }
    }

    /// Density of `A^{-1} X` when `X ~ self`: `g(y) = |det A| f(A y)`.
    ///
    /// Moments are transported; the tail envelope is dropped unless
    /// recomputed by the caller.
    pub fn linear_pullback(&self, a: &SquareMatrix) -> Result<ContinuousDensity> {
        if a.n() != self.dim {
            return Err(LceError::DimensionMismatch { expected: self.dim, found: a.n() });
        }
        let det = a.det().abs();
        if det == 0.0 {
            return invalid("singular linear map");
        }
        let ainv = a.inverse().ok_or_else(|| LceError::InvalidInput("singular map".into()))?;
        let inner = self.evaluate.clone();
        let am = a.clone();
        let eval: Evaluator = Arc::new(move |y: &[f64]| det * inner(&am.mul_vec(y)));
        let cov = self.known_cov.as_ref().map(|c| {
            let m = ainv.mul(&c.to_matrix()).mul(&ainv.transpose());
            CovarianceMatrix::from_matrix(&m)
        });
        let scale = cov
            .as_ref()
            .map(|c| c.eigenvalues().last().copied().unwrap_or(0.0).max(0.0).sqrt())
            .unwrap_or(self.scale);
        Ok(ContinuousDensity {
            name: format!("{}∘A", self.name),
            dim: self.dim,
            evaluate: eval,
            known_mass: self.known_mass,
            known_mean: self.known_mean.as_ref().map(|m| ainv.mul_vec(m)),
            known_cov: cov,
            known_max: self.known_max.map(|m| m * det),
            tail_bound: None,
            logconcave: self.logconcave,
            breakpoints: Vec::new(),
            scale,
        })
    }

    /// Spot-check the tail envelope along `rays` deterministic directions.
    /// Returns the worst ratio `f(x) / envelope(x)` seen (must be `<= 1`).
    pub fn check_tail_bound(&self, rays: usize, samples_per_ray: usize) -> Result<f64> {
        let tb = self
            .tail_bound
            .ok_or_else(|| LceError::InvalidInput(format!("{} has no tail bound", self.name)))?;
        let center = self.center();
        let mut worst = 0.0f64;
        for dir in sphere_directions(self.dim, rays) {
            let inf = dir.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for j in 0..samples_per_ray {
                let t = tb.radius.max(1e-9) * (1.0 + 3.0 * j as f64 / samples_per_ray.max(1) as f64);
                // Scale the ray so its sup-norm distance equals t.
                let x: Vec<f64> = center.iter().zip(&dir).map(|(c, u)| c + u * t / inf).collect();
                let f = self.eval(&x);
                let env = tb.value_at(t);
                let ratio = if env > 0.0 { f / env } else if f > 0.0 { f64::INFINITY } else { 0.0 };
                worst = worst.max(ratio);
            }
        }
        Ok(worst)
    }
}

/// Deterministic, roughly uniform unit directions.
///
/// `d = 1`: alternates `+1, -1`. `d = 2`: equally spaced angles. `d >= 3`:
/// a Fibonacci-style spiral in the first two angles, extended by a
/// fixed low-discrepancy sequence in the remaining coordinates.
pub fn sphere_directions(dim: usize, count: usize) -> Vec<Vec<f64>> {
    match dim {
        1 => (0..count).map(|i| vec![if i % 2 == 0 { 1.0 } else { -1.0 }]).collect(),
        2 => (0..count)
            .map(|i| {
                let a = 2.0 * PI * (i as f64 + 0.5) / count as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => {
            let golden = (1.0 + 5f64.sqrt()) / 2.0;
            (0..count)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let phi = 2.0 * PI * i as f64 / golden;
                    let mut v = vec![r * phi.cos(), r * phi.sin(), z];
                    for k in 3..dim {
                        let frac = ((i as f64 + 1.0) * (k as f64 + 2.0).sqrt()).fract();
                        v.push(2.0 * frac - 1.0);
                    }
                    let n = crate::linalg::norm2(&v);
                    v.iter().map(|c| c / n).collect()
                })
                .collect()
        }
    }
}

/// Named, parameterized densities usable from config documents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum DensitySpec {
    /// Centered isotropic Gaussian with covariance `sigma^2 I`.
    Gaussian { sigma: f64, dim: usize },
    /// Centered Gaussian with diagonal covariance.
    AnisotropicGaussian { variances: Vec<f64> },
    /// Centered planar Gaussian with covariance `sigma^2 [[1, rho], [rho, 1]]`;
    /// with `whiten`, composed with the linear map that makes it isotropic.
    ShearedGaussian {
        sigma: f64,
        rho: f64,
        #[serde(default)]
        whiten: bool,
    },
    /// Product of Laplace densities `(rate/2) exp(-rate |x_i|)`.
    LaplaceProduct { rate: f64, dim: usize },
    /// One-sided exponential shifted to mean zero: `rate exp(-(rate x + 1))`
    /// on `x >= -1/rate`.
    ExponentialCentered { rate: f64 },
    /// Uniform density on the cube `[-half_width, half_width]^dim`.
    UniformCube { half_width: f64, dim: usize },
}

impl DensitySpec {
    /// Parse `name{k=v,...}` or `name` with defaults, e.g. `gaussian{sigma=2,dim=1}`.
    pub fn parse(s: &str) -> Result<Self> {
        let (name, params) = match s.find('{') {
            Some(i) if s.ends_with('}') => (&s[..i], &s[i + 1..s.len() - 1]),
            _ => (s, ""),
        };
        let mut kv = std::collections::BTreeMap::new();
        for part in params.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .or_else(|| part.split_once(':'))
                .ok_or_else(|| LceError::InvalidInput(format!("bad parameter `{part}`")))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let num = |k: &str, default: f64| -> Result<f64> {
            kv.get(k).map_or(Ok(default), |v| {
                v.parse::<f64>().map_err(|_| LceError::InvalidInput(format!("bad number for {k}: {v}")))
            })
        };
        let int = |k: &str, default: usize| -> Result<usize> { Ok(num(k, default as f64)? as usize) };
        Ok(match name.trim() {
            "gaussian" => DensitySpec::Gaussian { sigma: num("sigma", 1.0)?, dim: int("dim", 1)? },
            "anisotropic_gaussian" => {
                let variances = kv
                    .get("variances")
                    .map(|v| {
                        v.split(|c| c == ';' || c == ' ' || c == '/')
                            .filter(|s| !s.is_empty())
                            .map(|s| s.parse::<f64>())
                            .collect::<std::result::Result<Vec<_>, _>>()
                    })
                    .transpose()
                    .map_err(|_| LceError::InvalidInput("bad variances".into()))?
                    .unwrap_or_else(|| vec![1.0, 4.0]);
                DensitySpec::AnisotropicGaussian { variances }
            }
            "sheared_gaussian" => DensitySpec::ShearedGaussian {
                sigma: num("sigma", 1.0)?,
                rho: num("rho", 0.5)?,
                whiten: kv.get("whiten").map(|v| v == "true" || v == "1").unwrap_or(false),
            },
            "laplace_product" => DensitySpec::LaplaceProduct { rate: num("rate", 1.0)?, dim: int("dim", 1)? },
            "exponential_centered" => DensitySpec::ExponentialCentered { rate: num("rate", 1.0)? },
            "uniform_cube" => {
                DensitySpec::UniformCube { half_width: num("half_width", 0.5)?, dim: int("dim", 1)? }
            }
            other => return Err(LceError::Unknown { kind: "density", name: other.to_string() }),
        })
    }

    /// Same family with its scale parameter set to `sigma` (the standard
    /// deviation per axis, for families where that is meaningful).
    pub fn with_sigma(&self, sigma: f64) -> Self {
        match self {
            DensitySpec::Gaussian { dim, .. } => DensitySpec::Gaussian { sigma, dim: *dim },
            DensitySpec::AnisotropicGaussian { variances } => {
                let v0 = variances.iter().cloned().fold(f64::INFINITY, f64::min);
                DensitySpec::AnisotropicGaussian {
                    variances: variances.iter().map(|v| v / v0 * sigma * sigma).collect(),
                }
            }
            DensitySpec::ShearedGaussian { rho, whiten, .. } => {
                DensitySpec::ShearedGaussian { sigma, rho: *rho, whiten: *whiten }
            }
            DensitySpec::LaplaceProduct { dim, .. } => {
                DensitySpec::LaplaceProduct { rate: 2f64.sqrt() / sigma, dim: *dim }
            }
            DensitySpec::ExponentialCentered { .. } => DensitySpec::ExponentialCentered { rate: 1.0 / sigma },
            DensitySpec::UniformCube { dim, .. } => {
                DensitySpec::UniformCube { half_width: sigma * 3f64.sqrt(), dim: *dim }
            }
        }
    }

    /// Same family in dimension `dim`; families with a fixed dimension only
    /// accept their own.
    pub fn with_dim(&self, dim: usize) -> Result<Self> {
        Ok(match self {
            DensitySpec::Gaussian { sigma, .. } => DensitySpec::Gaussian { sigma: *sigma, dim },
            DensitySpec::LaplaceProduct { rate, .. } => DensitySpec::LaplaceProduct { rate: *rate, dim },
            DensitySpec::UniformCube { half_width, .. } => DensitySpec::UniformCube { half_width: *half_width, dim },
            DensitySpec::AnisotropicGaussian { variances } if variances.len() == dim => self.clone(),
            DensitySpec::ShearedGaussian { .. } if dim == 2 => self.clone(),
            DensitySpec::ExponentialCentered { .. } if dim == 1 => self.clone(),
            other => return invalid(format!("{other:?} has no dimension-{dim} member")),
        })
    }

    pub fn build(&self) -> Result<ContinuousDensity> {
        match *self {
            DensitySpec::Gaussian { sigma, dim } => {
                if !(sigma > 0.0) || dim == 0 {
                    return invalid("gaussian needs sigma > 0 and dim >= 1");
                }
                gaussian(&CovarianceMatrix::from_matrix(&SquareMatrix::identity(dim).scale(sigma * sigma)))
                    .map(|g| named(g, format!("gaussian{{sigma={sigma},dim={dim}}}")))
            }
            DensitySpec::AnisotropicGaussian { ref variances } => {
                if variances.is_empty() || variances.iter().any(|v| !(*v > 0.0)) {
                    return invalid("anisotropic gaussian needs positive variances");
                }
                gaussian(&CovarianceMatrix::from_matrix(&SquareMatrix::diagonal(variances)))
                    .map(|g| named(g, format!("anisotropic_gaussian{{variances={variances:?}}}")))
            }
            DensitySpec::ShearedGaussian { sigma, rho, whiten } => {
                if !(sigma > 0.0) || !(rho.abs() < 1.0) {
                    return invalid("sheared gaussian needs sigma > 0 and |rho| < 1");
                }
                let cov = SquareMatrix::from_rows(&[vec![1.0, rho], vec![rho, 1.0]]).scale(sigma * sigma);
                let g = gaussian(&CovarianceMatrix::from_matrix(&cov))?;
                let g = named(g, format!("sheared_gaussian{{sigma={sigma},rho={rho}}}"));
                if !whiten {
                    return Ok(g);
                }
                // y = A^{-1} x with A = Sigma^{1/2} / sigma has covariance sigma^2 I.
                let a = cov.symmetric_sqrt().scale(1.0 / sigma);
                let mut w = g.linear_pullback(&a)?;
                w.name = format!("sheared_gaussian{{sigma={sigma},rho={rho},whiten=true}}");
                w.tail_bound = Some(gaussian_tail(w.known_max.unwrap_or(0.0), sigma * sigma));
                Ok(w)
            }
            DensitySpec::LaplaceProduct { rate, dim } => {
                if !(rate > 0.0) || dim == 0 {
                    return invalid("laplace product needs rate > 0 and dim >= 1");
                }
                let amp = (rate / 2.0).powi(dim as i32);
                let var = 2.0 / (rate * rate);
                Ok(ContinuousDensity {
                    name: format!("laplace_product{{rate={rate},dim={dim}}}"),
                    dim,
                    evaluate: Arc::new(move |x: &[f64]| {
                        amp * (-rate * x.iter().map(|v| v.abs()).sum::<f64>()).exp()
                    }),
                    known_mass: Some(1.0),
                    known_mean: Some(vec![0.0; dim]),
                    known_cov: Some(CovarianceMatrix::from_matrix(&SquareMatrix::identity(dim).scale(var))),
                    known_max: Some(amp),
                    tail_bound: Some(TailBound { amplitude: amp, rate, radius: 0.0 }),
                    logconcave: true,
                    breakpoints: vec![0.0],
                    scale: var.sqrt(),
                })
            }
            DensitySpec::ExponentialCentered { rate } => {
                if !(rate > 0.0) {
                    return invalid("exponential needs rate > 0");
                }
                let left = -1.0 / rate;
                Ok(ContinuousDensity {
                    name: format!("exponential_centered{{rate={rate}}}"),
                    dim: 1,
                    evaluate: Arc::new(move |x: &[f64]| {
                        if x[0] >= left {
                            rate * (-(rate * x[0] + 1.0)).exp()
                        } else {
                            0.0
                        }
                    }),
                    known_mass: Some(1.0),
                    known_mean: Some(vec![0.0]),
                    known_cov: Some(CovarianceMatrix::from_matrix(&SquareMatrix::diagonal(&[
                        1.0 / (rate * rate),
                    ]))),
                    known_max: Some(rate),
                    tail_bound: Some(TailBound { amplitude: rate / E, rate, radius: (1.0 + 1e-12) / rate }),
                    logconcave: true,
                    breakpoints: vec![left],
                    scale: 1.0 / rate,
                })
            }
            DensitySpec::UniformCube { half_width, dim } => {
                if !(half_width > 0.0) || dim == 0 {
                    return invalid("uniform cube needs half_width > 0 and dim >= 1");
                }
                let h = half_width;
                let height = (2.0 * h).powi(-(dim as i32));
                Ok(ContinuousDensity {
                    name: format!("uniform_cube{{half_width={h},dim={dim}}}"),
                    dim,
                    evaluate: Arc::new(move |x: &[f64]| {
                        if x.iter().all(|v| v.abs() <= h) {
                            height
                        } else {
                            0.0
                        }
                    }),
                    known_mass: Some(1.0),
                    known_mean: Some(vec![0.0; dim]),
                    known_cov: Some(CovarianceMatrix::from_matrix(
                        &SquareMatrix::identity(dim).scale(h * h / 3.0),
                    )),
                    known_max: Some(height),
                    tail_bound: Some(TailBound { amplitude: 0.0, rate: 0.0, radius: h * (1.0 + 1e-12) }),
                    logconcave: true,
                    breakpoints: vec![-h, h],
                    scale: h / 3f64.sqrt(),
                })
            }
        }
    }
}

fn named(mut d: ContinuousDensity, name: String) -> ContinuousDensity {
    d.name = name;
    d
}

/// Gaussian envelope: with `t = ||x||_inf >= R = 6 sqrt(lambda_max)`,
/// `exp(-|x|^2 / 2 lambda_max) <= exp(-t^2 / 2 lambda_max) <= exp(-R t / 2 lambda_max)`.
fn gaussian_tail(peak: f64, lambda_max: f64) -> TailBound {
    let s = lambda_max.sqrt();
    TailBound { amplitude: peak, rate: 3.0 / s, radius: 6.0 * s }
}

/// Centered Gaussian density with the given covariance.
pub fn gaussian(cov: &CovarianceMatrix) -> Result<ContinuousDensity> {
    let m = cov.to_matrix();
    let d = m.n();
    let det = m.det();
    if !(det > 0.0) {
        return Err(LceError::DegenerateCovariance(det));
    }
    let prec = m.inverse().ok_or(LceError::DegenerateCovariance(det))?;
    let peak = ((2.0 * PI).powi(d as i32) * det).sqrt().recip();
    let lambda_max = *cov.eigenvalues().last().unwrap();
    let eval: Evaluator = Arc::new(move |x: &[f64]| {
        let px = prec.mul_vec(x);
        let q: f64 = x.iter().zip(&px).map(|(a, b)| a * b).sum();
        peak * (-0.5 * q).exp()
    });
    Ok(ContinuousDensity {
        name: "gaussian".into(),
        dim: d,
        evaluate: eval,
        known_mass: Some(1.0),
        known_mean: Some(vec![0.0; d]),
        known_cov: Some(cov.clone()),
        known_max: Some(peak),
        tail_bound: Some(gaussian_tail(peak, lambda_max)),
        logconcave: true,
        breakpoints: Vec::new(),
        scale: lambda_max.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_parses_and_builds() {
        let g = DensitySpec::parse("gaussian{sigma=2,dim=2}").unwrap();
        assert_eq!(g, DensitySpec::Gaussian { sigma: 2.0, dim: 2 });
        let f = g.build().unwrap();
        assert!((f.eval(&[0.0, 0.0]) - 1.0 / (2.0 * PI * 4.0)).abs() < 1e-15);
        assert!(DensitySpec::parse("nope").is_err());
        let s = DensitySpec::parse("sheared_gaussian{sigma=2,rho=0.5,whiten=true}").unwrap();
        assert!(matches!(s, DensitySpec::ShearedGaussian { whiten: true, .. }));
    }

    #[test]
    fn tail_bounds_dominate_on_rays() {
        for spec in [
            "gaussian{sigma=1,dim=1}",
            "gaussian{sigma=3,dim=2}",
            "gaussian{sigma=1.5,dim=3}",
            "sheared_gaussian{sigma=2,rho=0.5}",
            "sheared_gaussian{sigma=2,rho=0.5,whiten=true}",
            "laplace_product{rate=0.7,dim=2}",
            "exponential_centered{rate=2}",
            "uniform_cube{half_width=1,dim=2}",
            "anisotropic_gaussian{variances=1;4}",
        ] {
            let f = DensitySpec::parse(spec).unwrap().build().unwrap();
            let worst = f.check_tail_bound(64, 32).unwrap();
            assert!(worst <= 1.0 + 1e-12, "{spec}: {worst}");
        }
    }

    #[test]
    fn whitened_shear_is_isotropic() {
        let f = DensitySpec::ShearedGaussian { sigma: 2.0, rho: 0.5, whiten: true }.build().unwrap();
        let cov = f.known_cov.as_ref().unwrap().to_matrix();
        assert!(cov.sub(&SquareMatrix::identity(2).scale(4.0)).symmetric_op_norm() < 1e-12);
        let iso = DensitySpec::Gaussian { sigma: 2.0, dim: 2 }.build().unwrap();
        for x in [[0.3, -1.2], [2.0, 2.5], [-4.0, 0.1]] {
            assert!((f.eval(&x) - iso.eval(&x)).abs() < 1e-15);
        }
    }

    #[test]
    fn rescaling_preserves_mass_and_scales_lengths() {
        let f = DensitySpec::parse("laplace_product{rate=1,dim=2}").unwrap().build().unwrap();
        let g = f.rescaled(3.0);
        assert!((g.eval(&[3.0, -6.0]) - f.eval(&[1.0, -2.0]) / 9.0).abs() < 1e-16);
        assert!((g.scale - 3.0 * f.scale).abs() < 1e-14);
    }

    #[test]
    fn directions_are_unit() {
        for d in 1..=4 {
            for v in sphere_directions(d, 17) {
                assert!((crate::linalg::norm2(&v) - 1.0).abs() < 1e-12);
            }
        }
    }
}
