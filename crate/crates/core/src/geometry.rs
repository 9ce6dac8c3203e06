//! Convex bodies, ball bodies `K_p(f)`, inclusion constants, second-moment
//! and radius checks.

use std::f64::consts::{E, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::density::{sphere_directions, ContinuousDensity, DensitySpec};
use crate::error::{invalid, LceError, Result};
use crate::linalg::{dot, norm2, SquareMatrix};
use crate::quadrature::integrate_piecewise;
use crate::sum::Accumulator;

const GEOM_EPS: f64 = 1e-9;

/// A convex body description. Polytopes are supported for `d <= 3`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConvexBodySpec {
    /// `{x : a_i . x <= b_i}`.
    HPolytope { a: Vec<Vec<f64>>, b: Vec<f64> },
    VPolytope { vertices: Vec<Vec<f64>> },
    /// `{x : (x - c)^T Q^{-1} (x - c) <= 1}` with `Q` symmetric positive definite.
    Ellipsoid { center: Vec<f64>, shape: Vec<Vec<f64>> },
    /// `K_p(f)` for a registry density.
    BallBody { density: DensitySpec, p: f64 },
}

/// Vertices plus outward unit facet normals `(n, h)` with `n . x <= h`.
#[derive(Clone, Debug, PartialEq)]
pub struct Polytope {
    pub dim: usize,
    pub vertices: Vec<Vec<f64>>,
    pub facets: Vec<(Vec<f64>, f64)>,
}

impl ConvexBodySpec {
    /// `cube{d=2,side=1}`, `ball{d=2,r=1}`, `simplex{d=2}`, `ellipsoid{axes=1;2}`,
    /// `hpoly{a=1 0;-1 0;0 1;0 -1,b=1;1;1;1}`, `vpoly{v=0 0;1 0;0 1}`.
    pub fn parse(s: &str) -> Result<Self> {
        let (name, params) = match s.find('{') {
            Some(i) if s.ends_with('}') => (&s[..i], &s[i + 1..s.len() - 1]),
            _ => (s, ""),
        };
        let mut kv = std::collections::BTreeMap::new();
        for part in params.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| LceError::InvalidInput(format!("bad body parameter `{part}`")))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let num = |k: &str, default: f64| -> Result<f64> {
            kv.get(k).map_or(Ok(default), |v| {
                v.parse().map_err(|_| LceError::InvalidInput(format!("bad number for {k}: {v}")))
            })
        };
        let rows = |k: &str| -> Result<Vec<Vec<f64>>> {
            let v = kv.get(k).ok_or_else(|| LceError::InvalidInput(format!("missing `{k}`")))?;
            v.split(';')
                .map(|r| {
                    r.split_whitespace()
                        .map(|x| x.parse::<f64>().map_err(|_| LceError::InvalidInput(format!("bad entry {x}"))))
                        .collect()
                })
                .collect()
        };
        let d = num("d", 2.0)? as usize;
        match name.trim() {
            "cube" => Ok(cube(d, num("side", 1.0)?)),
            "ball" => Ok(ball(d, num("r", 1.0)?)),
            "simplex" => centered_simplex(d),
            "ellipsoid" => {
                let axes: Vec<f64> = rows("axes")?.into_iter().flatten().collect();
                Ok(ConvexBodySpec::Ellipsoid {
                    center: vec![0.0; axes.len()],
                    shape: SquareMatrix::diagonal(&axes.iter().map(|a| a * a).collect::<Vec<_>>()).rows(),
                })
            }
            "hpoly" => {
                let b: Vec<f64> = rows("b")?.into_iter().flatten().collect();
                Ok(ConvexBodySpec::HPolytope { a: rows("a")?, b })
            }
            "vpoly" => Ok(ConvexBodySpec::VPolytope { vertices: rows("v")? }),
            other => Err(LceError::Unknown { kind: "body", name: other.to_string() }),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexBodySpec::HPolytope { a, .. } => a.first().map_or(0, |r| r.len()),
            ConvexBodySpec::VPolytope { vertices } => vertices.first().map_or(0, |r| r.len()),
            ConvexBodySpec::Ellipsoid { center, .. } => center.len(),
            ConvexBodySpec::BallBody { density, .. } => density.build().map(|f| f.dim).unwrap_or(0),
        }
    }

    pub fn polytope(&self) -> Result<Polytope> {
        match self {
            ConvexBodySpec::HPolytope { a, b } => polytope_from_h(a, b),
            ConvexBodySpec::VPolytope { vertices } => polytope_from_v(vertices),
            _ => invalid("not a polytope"),
        }
    }

    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        match self {
            ConvexBodySpec::HPolytope { a, b } => Ok(a.iter().zip(b).all(|(ai, bi)| dot(ai, x) <= bi + GEOM_EPS)),
            ConvexBodySpec::VPolytope { .. } => {
                let p = self.polytope()?;
                Ok(p.facets.iter().all(|(n, h)| dot(n, x) <= h + GEOM_EPS))
            }
            ConvexBodySpec::Ellipsoid { center, shape } => {
                let q = SquareMatrix::from_rows(shape);
                let y: Vec<f64> = x.iter().zip(center).map(|(a, c)| a - c).collect();
                let z = q.solve(&y).ok_or_else(|| LceError::InvalidInput("singular ellipsoid".into()))?;
                Ok(dot(&y, &z) <= 1.0 + GEOM_EPS)
            }
            ConvexBodySpec::BallBody { density, p } => {
                let f = density.build()?;
                let r = norm2(x);
                if r == 0.0 {
                    return Ok(true);
                }
                let dir: Vec<f64> = x.iter().map(|v| v / r).collect();
                let rho = ball_body_radial(&f, *p, &[dir])?;
                Ok(r <= rho.radii[0] * (1.0 + GEOM_EPS))
            }
        }
    }

    pub fn volume(&self) -> Result<f64> {
        match self {
            ConvexBodySpec::Ellipsoid { shape, .. } => {
                let d = shape.len();
                Ok(unit_ball_volume(d) * SquareMatrix::from_rows(shape).det().sqrt())
            }
            ConvexBodySpec::BallBody { density, p } => {
                let f = density.build()?;
                if f.dim != 2 {
                    return invalid("ball-body volume is implemented for d = 2");
                }
                // |K| = (1/2) ∫ rho(θ)^2 dθ, trapezoid on a periodic integrand.
                let n = 256;
                let dirs: Vec<Vec<f64>> = (0..n)
                    .map(|i| {
                        let a = 2.0 * PI * i as f64 / n as f64;
                        vec![a.cos(), a.sin()]
                    })
                    .collect();
                let rho = ball_body_radial(&f, *p, &dirs)?;
                Ok(0.5 * rho.radii.iter().map(|r| r * r).sum::<f64>() * 2.0 * PI / n as f64)
            }
            _ => Ok(self.polytope()?.simplices().iter().map(|s| simplex_volume(s)).sum()),
        }
    }

    /// `∫_K x dx / |K|`.
    pub fn barycenter(&self) -> Result<Vec<f64>> {
        match self {
            ConvexBodySpec::Ellipsoid { center, .. } => Ok(center.clone()),
            ConvexBodySpec::BallBody { .. } => Ok(vec![0.0; self.dim()]),
            _ => {
                let p = self.polytope()?;
                let mut num = vec![Accumulator::new(); p.dim];
                let mut vol = Accumulator::new();
                for s in p.simplices() {
                    let v = simplex_volume(&s);
                    vol.add(v);
                    for i in 0..p.dim {
                        num[i].add(v * s.iter().map(|x| x[i]).sum::<f64>() / s.len() as f64);
                    }
                }
                Ok(num.iter().map(|a| a.value() / vol.value()).collect())
            }
        }
    }

    /// `∫_K x x^T dx / |K|` (about the origin).
    pub fn second_moment_matrix(&self) -> Result<SquareMatrix> {
        match self {
            ConvexBodySpec::Ellipsoid { center, shape } => {
                let d = center.len();
                let q = SquareMatrix::from_rows(shape).scale(1.0 / (d as f64 + 2.0));
                let mut cc = SquareMatrix::zeros(d);
                for i in 0..d {
                    for j in 0..d {
                        cc[(i, j)] = center[i] * center[j];
                    }
                }
                Ok(q.add(&cc))
            }
            ConvexBodySpec::BallBody { .. } => invalid("second moments of ball bodies are not implemented"),
            _ => {
                let p = self.polytope()?;
                let d = p.dim;
                let mut total = SquareMatrix::zeros(d);
                let mut vol = 0.0;
                for s in p.simplices() {
                    let v = simplex_volume(&s);
                    vol += v;
                    // ∫_S x x^T = |S| / ((d+1)(d+2)) (Σ v_i v_i^T + (Σ v_i)(Σ v_i)^T)
                    let sum: Vec<f64> = (0..d).map(|i| s.iter().map(|x| x[i]).sum()).collect();
                    let c = v / ((d as f64 + 1.0) * (d as f64 + 2.0));
                    for i in 0..d {
                        for j in 0..d {
                            let vv: f64 = s.iter().map(|x| x[i] * x[j]).sum();
                            total[(i, j)] += c * (vv + sum[i] * sum[j]);
                        }
                    }
                }
                Ok(total.scale(1.0 / vol))
            }
        }
    }

    pub fn covariance(&self) -> Result<SquareMatrix> {
        let m = self.second_moment_matrix()?;
        let b = self.barycenter()?;
        let d = b.len();
        let mut out = m;
        for i in 0..d {
            for j in 0..d {
                out[(i, j)] -= b[i] * b[j];
            }
        }
        Ok(out)
    }

    /// `h_K(u) = max_{x in K} <x, u>`.
    pub fn support_function(&self, u: &[f64]) -> Result<f64> {
        match self {
            ConvexBodySpec::Ellipsoid { center, shape } => {
                let q = SquareMatrix::from_rows(shape);
                Ok(dot(center, u) + dot(u, &q.mul_vec(u)).sqrt())
            }
            ConvexBodySpec::BallBody { .. } => invalid("support function of ball bodies is not implemented"),
            _ => Ok(self.polytope()?.vertices.iter().map(|v| dot(v, u)).fold(f64::NEG_INFINITY, f64::max)),
        }
    }

    /// Radius of the largest ball about the origin inside `K`.
    pub fn inradius(&self) -> Result<f64> {
        match self {
            ConvexBodySpec::Ellipsoid { center, shape } => {
                if norm2(center) > GEOM_EPS {
                    return invalid("inradius about the origin needs a centered ellipsoid");
                }
                Ok(SquareMatrix::from_rows(shape).symmetric_eigen().0[0].sqrt())
            }
            ConvexBodySpec::BallBody { .. } => invalid("inradius of ball bodies is not implemented"),
            _ => {
                let p = self.polytope()?;
                let r = p.facets.iter().map(|(_, h)| *h).fold(f64::INFINITY, f64::min);
                if r <= 0.0 {
                    return invalid("origin is not interior");
                }
                Ok(r)
            }
        }
    }

    /// Radius of the smallest ball about the origin containing `K`.
    pub fn circumradius(&self) -> Result<f64> {
        match self {
            ConvexBodySpec::Ellipsoid { center, shape } => {
                if norm2(center) > GEOM_EPS {
                    return invalid("circumradius about the origin needs a centered ellipsoid");
                }
                Ok(SquareMatrix::from_rows(shape).symmetric_eigen().0.last().copied().unwrap_or(0.0).sqrt())
            }
            ConvexBodySpec::BallBody { .. } => invalid("circumradius of ball bodies is not implemented"),
            _ => Ok(self.polytope()?.vertices.iter().map(|v| norm2(v)).fold(0.0, f64::max)),
        }
    }

    /// Axis-aligned bounding box.
    pub fn bounding_box(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        match self {
            ConvexBodySpec::Ellipsoid { center, shape } => {
                let half: Vec<f64> = (0..center.len()).map(|i| shape[i][i].sqrt()).collect();
                Ok((
                    center.iter().zip(&half).map(|(c, h)| c - h).collect(),
                    center.iter().zip(&half).map(|(c, h)| c + h).collect(),
                ))
            }
            ConvexBodySpec::BallBody { .. } => invalid("bounding box of ball bodies is not implemented"),
            _ => {
                let p = self.polytope()?;
                let lo = (0..p.dim).map(|i| p.vertices.iter().map(|v| v[i]).fold(f64::INFINITY, f64::min)).collect();
                let hi =
                    (0..p.dim).map(|i| p.vertices.iter().map(|v| v[i]).fold(f64::NEG_INFINITY, f64::max)).collect();
                Ok((lo, hi))
            }
        }
    }

    /// Linear image `s K`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        Ok(match self {
            ConvexBodySpec::HPolytope { a, b } => {
                ConvexBodySpec::HPolytope { a: a.clone(), b: b.iter().map(|v| v * s).collect() }
            }
            ConvexBodySpec::VPolytope { vertices } => ConvexBodySpec::VPolytope {
                vertices: vertices.iter().map(|v| v.iter().map(|x| x * s).collect()).collect(),
            },
            ConvexBodySpec::Ellipsoid { center, shape } => ConvexBodySpec::Ellipsoid {
                center: center.iter().map(|c| c * s).collect(),
                shape: SquareMatrix::from_rows(shape).scale(s * s).rows(),
            },
            ConvexBodySpec::BallBody { .. } => return invalid("ball bodies are rescaled through their density"),
        })
    }

    /// Image under an orthogonal (or any invertible) linear map `x -> A x`.
    pub fn transformed(&self, a: &SquareMatrix) -> Result<Self> {
        Ok(match self {
            ConvexBodySpec::HPolytope { .. } | ConvexBodySpec::VPolytope { .. } => {
                let p = self.polytope()?;
                ConvexBodySpec::VPolytope { vertices: p.vertices.iter().map(|v| a.mul_vec(v)).collect() }
            }
            ConvexBodySpec::Ellipsoid { center, shape } => ConvexBodySpec::Ellipsoid {
                center: a.mul_vec(center),
                shape: a.mul(&SquareMatrix::from_rows(shape)).mul(&a.transpose()).rows(),
            },
            ConvexBodySpec::BallBody { .. } => return invalid("ball bodies are transformed through their density"),
        })
    }

    /// `|K|^{-1/d} K`.
    pub fn volume_normalized(&self) -> Result<Self> {
        let v = self.volume()?;
        self.scaled(v.powf(-1.0 / self.dim() as f64))
    }
}

/// `[-side/2, side/2]^d`.
pub fn cube(d: usize, side: f64) -> ConvexBodySpec {
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..d {
        for s in [1.0, -1.0] {
            let mut row = vec![0.0; d];
            row[i] = s;
            a.push(row);
            b.push(side / 2.0);
        }
    }
    ConvexBodySpec::HPolytope { a, b }
}

pub fn ball(d: usize, r: f64) -> ConvexBodySpec {
    ConvexBodySpec::Ellipsoid { center: vec![0.0; d], shape: SquareMatrix::identity(d).scale(r * r).rows() }
}

/// `conv(0, e_1, ..., e_d)` translated so its barycenter is the origin.
pub fn centered_simplex(d: usize) -> Result<ConvexBodySpec> {
    if d == 0 || d > 3 {
        return invalid("simplex bodies are supported for 1 <= d <= 3");
    }
    let c = 1.0 / (d as f64 + 1.0);
    let mut vertices = vec![vec![-c; d]];
    for i in 0..d {
        let mut v = vec![-c; d];
        v[i] += 1.0;
        vertices.push(v);
    }
    Ok(ConvexBodySpec::VPolytope { vertices })
}

pub fn unit_ball_volume(d: usize) -> f64 {
    (0.5 * d as f64 * PI.ln() - ln_gamma(0.5 * d as f64 + 1.0)).exp()
}

fn simplex_volume(s: &[Vec<f64>]) -> f64 {
    let d = s.len() - 1;
    let rows: Vec<Vec<f64>> = (1..=d).map(|i| (0..d).map(|j| s[i][j] - s[0][j]).collect()).collect();
    let fact: f64 = (1..=d).map(|k| k as f64).product();
    SquareMatrix::from_rows(&rows).det().abs() / fact
}

fn check_polytope_dim(d: usize) -> Result<()> {
    if d == 0 || d > 3 {
        return invalid(format!("polytopes are supported for 1 <= d <= 3, got {d}"));
    }
    Ok(())
}

fn dedup_points(points: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for p in points {
        if !out.iter().any(|q| q.iter().zip(&p).all(|(a, b)| (a - b).abs() <= 1e-9 * (1.0 + a.abs()))) {
            out.push(p);
        }
    }
    out.sort_by(|a, b| a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
    out
}

/// All `size`-subsets of `0..n`.
fn subsets(n: usize, size: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, size: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, size, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, size, &mut Vec::new(), &mut out);
    out
}

fn polytope_from_h(a: &[Vec<f64>], b: &[f64]) -> Result<Polytope> {
    let d = a.first().map_or(0, |r| r.len());
    check_polytope_dim(d)?;
    if a.len() != b.len() || a.iter().any(|r| r.len() != d) {
        return invalid("inconsistent halfspace description");
    }
    if !h_bounded(a, b)? {
        return invalid("unbounded polyhedron");
    }
    let mut verts = Vec::new();
    for idx in subsets(a.len(), d) {
        let m = SquareMatrix::from_rows(&idx.iter().map(|&i| a[i].clone()).collect::<Vec<_>>());
        let rhs: Vec<f64> = idx.iter().map(|&i| b[i]).collect();
        if m.det().abs() < 1e-12 {
            continue;
        }
        if let Some(x) = m.solve(&rhs) {
            let tol = 1e-9 * (1.0 + norm2(&x));
            if a.iter().zip(b).all(|(ai, bi)| dot(ai, &x) <= bi + tol) {
                verts.push(x);
            }
        }
    }
    let verts = dedup_points(verts);
    if verts.len() < d + 1 {
        return invalid("halfspaces do not bound a full-dimensional body");
    }
    polytope_from_v(&verts)
}

/// Boundedness by LP: every coordinate must be bounded above and below.
fn h_bounded(a: &[Vec<f64>], b: &[f64]) -> Result<bool> {
    use crate::simplex::{solve, LpOutcome};
    let d = a[0].len();
    let m = a.len();
    // Variables: x+ (d), x- (d), slack (m).
    let rows: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let mut r = Vec::with_capacity(2 * d + m);
            r.extend(a[i].iter().copied());
            r.extend(a[i].iter().map(|v| -v));
            r.extend((0..m).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for i in 0..d {
        for s in [1.0, -1.0] {
            let mut c = vec![0.0; 2 * d + m];
            c[i] = s;
            c[d + i] = -s;
            match solve(&rows, b, &c) {
                LpOutcome::Unbounded => return Ok(false),
                LpOutcome::Infeasible { .. } => return invalid("empty polyhedron"),
                LpOutcome::Optimal { .. } => {}
            }
        }
    }
    Ok(true)
}

fn polytope_from_v(vertices: &[Vec<f64>]) -> Result<Polytope> {
    let d = vertices.first().map_or(0, |r| r.len());
    check_polytope_dim(d)?;
    if vertices.iter().any(|v| v.len() != d || v.iter().any(|x| !x.is_finite())) {
        return invalid("vertices must be finite and of equal dimension");
    }
    let pts = dedup_points(vertices.to_vec());
    let scale = pts.iter().map(|v| norm2(v)).fold(1.0, f64::max);
    let tol = 1e-9 * scale;
    let mut facets: Vec<(Vec<f64>, f64)> = Vec::new();
    for idx in subsets(pts.len(), d) {
        let normal = match d {
            1 => vec![1.0],
            2 => {
                let e = [pts[idx[1]][0] - pts[idx[0]][0], pts[idx[1]][1] - pts[idx[0]][1]];
                vec![e[1], -e[0]]
            }
            _ => {
                let u: Vec<f64> = (0..3).map(|i| pts[idx[1]][i] - pts[idx[0]][i]).collect();
                let v: Vec<f64> = (0..3).map(|i| pts[idx[2]][i] - pts[idx[0]][i]).collect();
                vec![u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]]
            }
        };
        let len = norm2(&normal);
        if len < 1e-12 * scale * scale {
            continue;
        }
        let n: Vec<f64> = normal.iter().map(|x| x / len).collect();
        let h = dot(&n, &pts[idx[0]]);
        for (sn, sh) in [(n.clone(), h), (n.iter().map(|x| -x).collect::<Vec<_>>(), -h)] {
            if pts.iter().all(|p| dot(&sn, p) <= sh + tol)
                && !facets.iter().any(|(fn_, fh)| {
                    fn_.iter().zip(&sn).all(|(a, b)| (a - b).abs() < 1e-9) && (fh - sh).abs() < tol
                })
            {
                facets.push((sn, sh));
            }
        }
    }
    // Keep only points that are vertices: on at least d facets.
    let verts: Vec<Vec<f64>> = pts
        .into_iter()
        .filter(|p| facets.iter().filter(|(n, h)| (dot(n, p) - h).abs() <= tol).count() >= d)
        .collect();
    if facets.len() < d + 1 || verts.len() < d + 1 {
        return invalid("vertices do not span a full-dimensional body");
    }
    Ok(Polytope { dim: d, vertices: verts, facets })
}

impl Polytope {
    /// Triangulation: cone from the vertex centroid over each facet, with
    /// three-dimensional facets fanned in angular order.
    pub fn simplices(&self) -> Vec<Vec<Vec<f64>>> {
        let d = self.dim;
        let c: Vec<f64> = (0..d).map(|i| self.vertices.iter().map(|v| v[i]).sum::<f64>() / self.vertices.len() as f64).collect();
        let scale = self.vertices.iter().map(|v| norm2(v)).fold(1.0, f64::max);
        let mut out = Vec::new();
        for (n, h) in &self.facets {
            let on: Vec<&Vec<f64>> = self.vertices.iter().filter(|v| (dot(n, v) - h).abs() <= 1e-9 * scale).collect();
            match d {
                1 => out.push(vec![c.clone(), on[0].clone()]),
                2 => {
                    if on.len() >= 2 {
                        out.push(vec![c.clone(), on[0].clone(), on[1].clone()]);
                    }
                }
                _ => {
                    let m: Vec<f64> = (0..3).map(|i| on.iter().map(|v| v[i]).sum::<f64>() / on.len() as f64).collect();
                    let e1: Vec<f64> = (0..3).map(|i| on[0][i] - m[i]).collect();
                    let e1n = norm2(&e1);
                    let e1: Vec<f64> = e1.iter().map(|x| x / e1n).collect();
                    let e2 = vec![n[1] * e1[2] - n[2] * e1[1], n[2] * e1[0] - n[0] * e1[2], n[0] * e1[1] - n[1] * e1[0]];
                    let mut ring: Vec<(f64, &Vec<f64>)> = on
                        .iter()
                        .map(|v| {
                            let w: Vec<f64> = (0..3).map(|i| v[i] - m[i]).collect();
                            (dot(&w, &e2).atan2(dot(&w, &e1)), *v)
                        })
                        .collect();
                    ring.sort_by(|a, b| a.0.total_cmp(&b.0));
                    for k in 1..ring.len().saturating_sub(1) {
                        out.push(vec![c.clone(), ring[0].1.clone(), ring[k].1.clone(), ring[k + 1].1.clone()]);
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub directions: Vec<Vec<f64>>,
    pub radii: Vec<f64>,
}

/// Adaptive radial quadrature tolerance (relative).
pub const RADIAL_TOL: f64 = 1e-12;

/// `∫_0^∞ p r^{p-1} f(r θ) dr` along one ray, truncated where the tail
/// envelope makes the remainder negligible.
pub fn radial_moment(f: &ContinuousDensity, p: f64, theta: &[f64]) -> Result<f64> {
    let d = f.dim;
    let tb = f
        .tail_bound
        .ok_or_else(|| LceError::InvalidInput(format!("{} has no tail bound", f.name)))?;
    let inf = theta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let center_off = norm2(&f.center());
    let integrand = |r: f64| {
        let x: Vec<f64> = theta.iter().map(|t| r * t).collect();
        p * r.powf(p - 1.0) * f.eval(&x)
    };
    // Beyond R the envelope gives f(rθ) <= A exp(-rate (r inf - off)).
    let base = (tb.radius + center_off) / inf.max(1e-300);
    let mut r_max = base.max(f.scale);
    let tail_at = |r: f64| -> f64 {
        if tb.amplitude == 0.0 {
            return 0.0;
        }
        let k = tb.rate * inf;
        // ∫_R^∞ p r^{p-1} A e^{rate off} e^{-k r} dr = p A e^{rate off} Γ(p) Q(p, kR) / k^p
        p * tb.amplitude * (tb.rate * center_off).exp() * (ln_gamma(p)).exp() * gamma_ur(p, k * r) / k.powf(p)
    };
    let mut breaks: Vec<f64> = Vec::new();
    for bp in &f.breakpoints {
        for t in theta {
            if t.abs() > 1e-15 {
                let r = bp / t;
                if r > 0.0 {
                    breaks.push(r);
                }
            }
        }
    }
    let head = integrate_piecewise(&integrand, 0.0, r_max, &breaks, 10, RADIAL_TOL * f.eval(&vec![0.0; d]).max(1e-300))?;
    let mut total = head;
    for _ in 0..200 {
        let tail = tail_at(r_max);
        if tail <= RADIAL_TOL * total.abs().max(1e-300) {
            return Ok(total);
        }
        let next = r_max * 1.5;
        total += integrate_piecewise(&integrand, r_max, next, &breaks, 10, RADIAL_TOL * total.abs().max(1e-300))?;
        r_max = next;
    }
    Err(LceError::QuadratureNonConvergence("radial tail".into()))
}

/// `ρ(θ) = ((1/f(0)) ∫_0^∞ p r^{p-1} f(rθ) dr)^{1/p}` per direction.
pub fn ball_body_radial(f: &ContinuousDensity, p: f64, dirs: &[Vec<f64>]) -> Result<RadialProfile> {
    if !(p > 0.0) {
        return invalid("ball-body order p must be positive");
    }
    let f0 = f.eval(&vec![0.0; f.dim]);
    if !(f0 > 0.0) {
        return invalid("ball bodies need f(0) > 0");
    }
    let mut radii = Vec::with_capacity(dirs.len());
    let mut directions = Vec::with_capacity(dirs.len());
    for dir in dirs {
        if dir.len() != f.dim {
            return Err(LceError::DimensionMismatch { expected: f.dim, found: dir.len() });
        }
        let n = norm2(dir);
        let u: Vec<f64> = dir.iter().map(|v| v / n).collect();
        let m = radial_moment(f, p, &u)?;
        radii.push((m / f0).powf(1.0 / p));
        directions.push(u);
    }
    Ok(RadialProfile { directions, radii })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InclusionConstants {
    pub p: f64,
    pub q: f64,
    pub lower: f64,
    pub upper: f64,
}

/// `lower = Γ(p+1)^{1/p} / Γ(q+1)^{1/q}`, `upper = e^{d/p - d/q}`.
pub fn inclusion_constants(d: usize, p: f64, q: f64) -> Result<InclusionConstants> {
    if !(p > 0.0 && p < q) {
        return invalid(format!("inclusion constants need 0 < p < q, got p = {p}, q = {q}"));
    }
    let lower = (ln_gamma(p + 1.0) / p - ln_gamma(q + 1.0) / q).exp();
    let upper = (d as f64 / p - d as f64 / q).exp();
    Ok(InclusionConstants { p, q, lower, upper })
}

/// `(c_1, c_2)`: min of the lower and max of the upper constants at
/// `(d, d+1)` and `(d+1, d+2)`.
pub fn c1_c2(d: usize) -> (f64, f64) {
    let a = inclusion_constants(d, d as f64, d as f64 + 1.0).expect("valid orders");
    let b = inclusion_constants(d, d as f64 + 1.0, d as f64 + 2.0).expect("valid orders");
    (a.lower.min(b.lower), a.upper.max(b.upper))
}

/// `C'_d = c_1^{d+2} / (sqrt(2π) e^{3/2})`.
pub fn radial_lower_constant(d: usize) -> f64 {
    let (c1, _) = c1_c2(d);
    c1.powi(d as i32 + 2) / ((2.0 * PI).sqrt() * E.powf(1.5))
}

/// `C_d = (d+1) c_2^{d+2} L_d`.
pub fn radial_upper_constant(d: usize, l_d: f64) -> f64 {
    let (_, c2) = c1_c2(d);
    (d as f64 + 1.0) * c2.powi(d as i32 + 2) * l_d
}

/// Concentration constant `3^{1/d} C_d`.
pub fn concentration_constant(d: usize, l_d: f64) -> f64 {
    3f64.powf(1.0 / d as f64) * radial_upper_constant(d, l_d)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InclusionCheck {
    pub constants: InclusionConstants,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub holds: bool,
}

/// Relative slack on the inclusion comparison; exponential rays attain the
/// lower constant exactly.
pub const INCLUSION_REL_TOL: f64 = 1e-12;

/// Direction-wise `lower <= ρ_p(θ)/ρ_q(θ) <= upper`.
pub fn check_inclusions(f: &ContinuousDensity, p: f64, q: f64, dirs: &[Vec<f64>]) -> Result<InclusionCheck> {
    let constants = inclusion_constants(f.dim, p, q)?;
    let rp = ball_body_radial(f, p, dirs)?;
    let rq = ball_body_radial(f, q, dirs)?;
    let ratios: Vec<f64> = rp.radii.iter().zip(&rq.radii).map(|(a, b)| a / b).collect();
    let min_ratio = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_ratio = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let holds = constants.lower * (1.0 - INCLUSION_REL_TOL) <= min_ratio
        && max_ratio <= constants.upper * (1.0 + INCLUSION_REL_TOL);
    Ok(InclusionCheck { constants, min_ratio, max_ratio, holds })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlsCheck {
    pub lhs: f64,
    pub mid: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `h_K(u)^2 / (d(d+2)) <= (1/|K|) ∫_K <x,u>^2 <= d h_K(u)^2 / (d+2)` with
/// the middle term computed exactly.
pub fn kls_second_moment_check(k: &ConvexBodySpec, u: &[f64]) -> Result<KlsCheck> {
    let (u, d) = kls_prepare(k, u)?;
    let m = k.second_moment_matrix()?;
    let mid = dot(&u, &m.mul_vec(&u));
    kls_finish(k, &u, d, mid)
}

fn kls_prepare(k: &ConvexBodySpec, u: &[f64]) -> Result<(Vec<f64>, usize)> {
    let d = k.dim();
    if u.len() != d {
        return Err(LceError::DimensionMismatch { expected: d, found: u.len() });
    }
    let b = k.barycenter()?;
    if norm2(&b) > GEOM_EPS {
        return invalid(format!("body is not centered (barycenter norm {:e})", norm2(&b)));
    }
    let n = norm2(u);
    if !(n > 0.0) {
        return invalid("direction must be nonzero");
    }
    Ok((u.iter().map(|v| v / n).collect(), d))
}

fn kls_finish(k: &ConvexBodySpec, u: &[f64], d: usize, mid: f64) -> Result<KlsCheck> {
    let h = k.support_function(u)?;
    let df = d as f64;
    let lhs = h * h / (df * (df + 2.0));
    let rhs = df * h * h / (df + 2.0);
    Ok(KlsCheck { lhs, mid, rhs, holds: lhs <= mid && mid <= rhs })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloMoment {
    pub mean: f64,
    pub standard_error: f64,
    pub accepted: usize,
}

/// `(1/|K|) ∫_K <x,u>^2` by rejection sampling in the bounding box.
pub fn monte_carlo_second_moment(k: &ConvexBodySpec, u: &[f64], samples: usize, seed: u64) -> Result<MonteCarloMoment> {
    let (lo, hi) = k.bounding_box()?;
    let facets = match k {
        ConvexBodySpec::HPolytope { .. } | ConvexBodySpec::VPolytope { .. } => Some(k.polytope()?.facets),
        _ => None,
    };
    let inside = |x: &[f64]| -> Result<bool> {
        match &facets {
            Some(fs) => Ok(fs.iter().all(|(n, h)| dot(n, x) <= h + GEOM_EPS)),
            None => k.contains(x),
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = Accumulator::new();
    let mut sq = Accumulator::new();
    let mut accepted = 0usize;
    let mut x = vec![0.0; lo.len()];
    let mut tries = 0usize;
    while accepted < samples {
        tries += 1;
        if tries > 1000 * samples.max(1) {
            return invalid("rejection sampler accepts too rarely");
        }
        for i in 0..x.len() {
            x[i] = rng.gen_range(lo[i]..=hi[i]);
        }
        if inside(&x)? {
            let v = dot(&x, u).powi(2);
            sum.add(v);
            sq.add(v * v);
            accepted += 1;
        }
    }
    let n = accepted as f64;
    let mean = sum.value() / n;
    let var = (sq.value() / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
    Ok(MonteCarloMoment { mean, standard_error: (var / n).sqrt(), accepted })
}

/// KLS chain with a Monte Carlo middle term; `holds` allows 3 standard errors.
pub fn kls_second_moment_check_mc(
    k: &ConvexBodySpec,
    u: &[f64],
    samples: usize,
    seed: u64,
) -> Result<(KlsCheck, MonteCarloMoment)> {
    let (u, d) = kls_prepare(k, u)?;
    let mc = monte_carlo_second_moment(k, &u, samples, seed)?;
    let mut chk = kls_finish(k, &u, d, mc.mean)?;
    let band = 3.0 * mc.standard_error;
    chk.holds = chk.lhs <= mc.mean + band && mc.mean - band <= chk.rhs;
    Ok((chk, mc))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialIntegralReport {
    /// `I(θ) = ∫_0^∞ d r^{d-1} f(rθ) dr`.
    pub integrals: Vec<f64>,
    pub lower_constant: f64,
    pub upper_constant: f64,
    pub mode: RadialMode,
    /// Isotropic: extremes of `I(θ)^{1/d}`. Anisotropic: extremes of
    /// `I(θ) / (f(0) λ_min^{d/2})` (min) and `I(θ) / (f(0) λ_max^{d/2})` (max).
    pub min_stat: f64,
    pub max_stat: f64,
    pub holds: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadialMode {
    Isotropic,
    Anisotropic,
}

/// Isotropic: `C'_d <= I(θ)^{1/d} <= C_d`. Anisotropic: the two normalized
/// ratios must lie in `[C'_d^d, C_d^d]`.
pub fn radial_integral_bounds(
    f: &ContinuousDensity,
    dirs: &[Vec<f64>],
    l_d: f64,
    mode: RadialMode,
) -> Result<RadialIntegralReport> {
    let d = f.dim;
    let df = d as f64;
    let lower = radial_lower_constant(d);
    let upper = radial_upper_constant(d, l_d);
    let mut integrals = Vec::with_capacity(dirs.len());
    for dir in dirs {
        let n = norm2(dir);
        let u: Vec<f64> = dir.iter().map(|v| v / n).collect();
        integrals.push(radial_moment(f, df, &u)?);
    }
    let (min_stat, max_stat, holds) = match mode {
        RadialMode::Isotropic => {
            let roots: Vec<f64> = integrals.iter().map(|i| i.powf(1.0 / df)).collect();
            let lo = roots.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = roots.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi, lower <= lo && hi <= upper)
        }
        RadialMode::Anisotropic => {
            let cov = f
                .known_cov
                .as_ref()
                .ok_or_else(|| LceError::InvalidInput("anisotropic mode needs covariance eigenvalues".into()))?;
            let ev = cov.eigenvalues();
            let f0 = f.eval(&vec![0.0; d]);
            let lmin = ev[0];
            let lmax = *ev.last().unwrap();
            let lo = integrals.iter().map(|i| i / (f0 * lmin.powf(df / 2.0))).fold(f64::INFINITY, f64::min);
            let hi = integrals.iter().map(|i| i / (f0 * lmax.powf(df / 2.0))).fold(f64::NEG_INFINITY, f64::max);
            (lo, hi, lower.powi(d as i32) <= lo && hi <= upper.powi(d as i32))
        }
    };
    Ok(RadialIntegralReport { integrals, lower_constant: lower, upper_constant: upper, mode, min_stat, max_stat, holds })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusReport {
    pub inradius: f64,
    pub circumradius: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// `(d+1) λ_max^{1/2} - R`.
    pub circumradius_margin: f64,
    /// `r - sqrt((d+2)/d) λ_min^{1/2}`.
    pub inradius_margin: f64,
    pub holds: bool,
}

/// Volume tolerance for the unit-volume precondition.
pub const UNIT_VOLUME_TOL: f64 = 1e-9;

/// `R <= (d+1) λ_max^{1/2}` and `r >= sqrt((d+2)/d) λ_min^{1/2}` for `|K| = 1`.
pub fn radius_bounds_check(k: &ConvexBodySpec) -> Result<RadiusReport> {
    let d = k.dim() as f64;
    let vol = k.volume()?;
    if (vol - 1.0).abs() > UNIT_VOLUME_TOL {
        return invalid(format!("radius bounds need |K| = 1, got {vol}"));
    }
    if !k.contains(&vec![0.0; k.dim()])? {
        return invalid("origin is not interior");
    }
    let r = k.inradius()?;
    let big_r = k.circumradius()?;
    let ev = k.covariance()?.symmetric_eigen().0;
    let lambda_min = ev[0];
    let lambda_max = *ev.last().unwrap();
    // Small negative margins within rounding count as equality.
    let slack = 1e-12;
    let circumradius_margin = (d + 1.0) * lambda_max.sqrt() - big_r;
    let inradius_margin = r - ((d + 2.0) / d).sqrt() * lambda_min.sqrt();
    Ok(RadiusReport {
        inradius: r,
        circumradius: big_r,
        lambda_min,
        lambda_max,
        circumradius_margin,
        inradius_margin,
        holds: circumradius_margin >= -slack && inradius_margin >= -slack,
    })
}

/// Deterministic directions for geometry checks.
pub fn directions(d: usize, count: usize) -> Vec<Vec<f64>> {
    sphere_directions(d, count)
}
