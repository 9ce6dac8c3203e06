//! `Z^d`-convexity of point sets and log-concave extensibility of p.m.f.s.
//!
//! Both questions reduce to hull-membership / lower-envelope linear programs
//! solved by the in-crate simplex. Floating-point answers for hull
//! membership are certified in exact rational arithmetic.

use std::collections::BTreeMap;

use num_rational::BigRational;
use num_traits::Signed;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LceError, Result};
use crate::lattice::{IndexVector, LatticePmf, LatticeSet};
use crate::simplex::{exact_solve, rational_from_int, solve, LpOutcome, LpScalar};

/// Envelope tolerance in log-mass units.
pub const DEFAULT_ENVELOPE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub is_convex: bool,
    /// Lattice points of `conv(A)` missing from `A`, lexicographic.
    pub witnesses: Vec<IndexVector>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtensibilityReport {
    pub is_extensible: bool,
    pub support_convex: bool,
    /// `V(k)` minus the lower envelope of the other lifted support points,
    /// clamped at zero. Serialized as `[point, gap]` pairs.
    #[serde(with = "gap_pairs")]
    pub envelope_gaps: BTreeMap<IndexVector, f64>,
    pub tolerance_used: f64,
}

mod gap_pairs {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serializer};

    use crate::lattice::IndexVector;

    pub fn serialize<S: Serializer>(m: &BTreeMap<IndexVector, f64>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(m.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<IndexVector, f64>, D::Error> {
        Ok(Vec::<(IndexVector, f64)>::deserialize(d)?.into_iter().collect())
    }
}

impl ExtensibilityReport {
    pub fn max_gap(&self) -> f64 {
        self.envelope_gaps.values().fold(0.0, |m, g| m.max(*g))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArithmeticMode {
    Float,
    Exact,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvexityOptions {
    /// Largest support handled by the per-point envelope LPs.
    pub lp_budget: usize,
    /// Largest bounding box scanned for hull membership.
    pub box_cap: usize,
    /// Largest support handled by the Carathéodory brute force.
    pub bruteforce_cap: usize,
}

impl Default for ConvexityOptions {
    fn default() -> Self {
        Self { lp_budget: 2500, box_cap: 4_000_000, bruteforce_cap: 24 }
    }
}

/// `{a + b}`, deduplicated.
pub fn minkowski_sum(a: &LatticeSet, b: &LatticeSet) -> Result<LatticeSet> {
    if a.dim() != b.dim() {
        return Err(LceError::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    LatticeSet::new(a.dim(), a.iter().flat_map(|x| b.iter().map(move |y| x.add(y))))
}

/// Hull membership of `z` in `conv(points)`.
///
/// Solved in floating point; a feasible basis is re-verified exactly, and
/// any answer that fails verification or sits near the feasibility boundary
/// is recomputed in rational arithmetic.
pub fn hull_contains(points: &[IndexVector], z: &IndexVector) -> bool {
    if points.is_empty() {
        return false;
    }
    let d = z.dim();
    let m = d + 1;
    let mut a = vec![Vec::with_capacity(points.len()); m];
    for p in points {
        for i in 0..d {
            a[i].push((p.0[i] - z.0[i]) as f64);
        }
        a[d].push(1.0);
    }
    let mut b = vec![0.0; m];
    b[d] = 1.0;
    let c = vec![0.0; points.len()];
    match solve(&a, &b, &c) {
        LpOutcome::Optimal { x, .. } => {
            let used: Vec<usize> = (0..x.len()).filter(|&j| x[j] > 1e-12).collect();
            if used.len() <= m && certify_combination(points, z, &used) {
                true
            } else {
                hull_contains_exact(points, z)
            }
        }
        LpOutcome::Infeasible { phase_one } if phase_one < 1e-6 => hull_contains_exact(points, z),
        _ => false,
    }
}

fn certify_combination(points: &[IndexVector], z: &IndexVector, used: &[usize]) -> bool {
    let d = z.dim();
    let rows: Vec<Vec<BigRational>> = (0..=d)
        .map(|i| {
            used.iter()
                .map(|&j| if i < d { rational_from_int(points[j].0[i]) } else { rational_from_int(1) })
                .collect()
        })
        .collect();
    let rhs: Vec<BigRational> =
        (0..=d).map(|i| if i < d { rational_from_int(z.0[i]) } else { rational_from_int(1) }).collect();
    match exact_solve(&rows, &rhs) {
        Some(lambda) => lambda.iter().all(|l| !l.is_negative()),
        None => false,
    }
}

fn hull_contains_exact(points: &[IndexVector], z: &IndexVector) -> bool {
    let d = z.dim();
    let mut a = vec![Vec::with_capacity(points.len()); d + 1];
    for p in points {
        for i in 0..d {
            a[i].push(rational_from_int(p.0[i] - z.0[i]));
        }
        a[d].push(rational_from_int(1));
    }
    let mut b = vec![rational_from_int(0); d + 1];
    b[d] = rational_from_int(1);
    let c = vec![rational_from_int(0); points.len()];
    matches!(solve(&a, &b, &c), LpOutcome::Optimal { .. })
}

/// Decide `A = conv(A) ∩ Z^d` by testing every bounding-box point outside `A`.
pub fn is_zd_convex(a: &LatticeSet) -> Result<ConvexityReport> {
    is_zd_convex_with(a, &ConvexityOptions::default())
}

pub fn is_zd_convex_with(a: &LatticeSet, opts: &ConvexityOptions) -> Result<ConvexityReport> {
    if a.is_empty() {
        return Err(LceError::Empty);
    }
    let bbox = a.bounding_box()?;
    if bbox.cell_count() > opts.box_cap {
        return Err(LceError::MemoryCap { cells: bbox.cell_count() as u128, cap: opts.box_cap as u128 });
    }
    let pts: Vec<IndexVector> = a.iter().cloned().collect();
    let mut witnesses = Vec::new();
    bbox.for_each_point(|_, k| {
        let z = IndexVector(k.to_vec());
        if !a.contains(&z) && hull_contains(&pts, &z) {
            witnesses.push(z);
        }
    });
    Ok(ConvexityReport { is_convex: witnesses.is_empty(), witnesses })
}

/// Convexity of `n A` for `n = 2..=n_max`, for a `Z^d`-convex `A`.
pub fn check_self_sum_convexity(a: &LatticeSet, n_max: usize) -> Result<Vec<ConvexityReport>> {
    let base = is_zd_convex(a)?;
    if !base.is_convex {
        return invalid("self-sum check needs a Z^d-convex set");
    }
    let mut out = Vec::new();
    let mut sum = a.clone();
    for _ in 2..=n_max {
        sum = minkowski_sum(&sum, a)?;
        out.push(is_zd_convex(&sum)?);
    }
    Ok(out)
}

fn support_points(p: &LatticePmf) -> Result<Vec<(IndexVector, f64)>> {
    let mut out = Vec::new();
    for k in p.support().iter() {
        let v = -p.get(k.coords()).ln();
        if !v.is_finite() {
            return Err(LceError::NonFinite(format!("V at {k}")));
        }
        out.push((k.clone(), v));
    }
    if out.is_empty() {
        return Err(LceError::Empty);
    }
    Ok(out)
}

/// Gap of `V(k)` above the lower envelope of the other lifted points, by LP.
fn envelope_gap<T: LpScalar>(pts: &[(IndexVector, f64)], idx: usize) -> f64 {
    let (k, vk) = &pts[idx];
    let d = k.dim();
    let others: Vec<usize> = (0..pts.len()).filter(|&j| j != idx).collect();
    if others.is_empty() {
        return 0.0;
    }
    let mut a: Vec<Vec<T>> = vec![Vec::with_capacity(others.len()); d + 1];
    let mut c = Vec::with_capacity(others.len());
    let vk_t = T::from_f64(*vk);
    for &j in &others {
        let (x, v) = &pts[j];
        for i in 0..d {
            a[i].push(T::from_f64((x.0[i] - k.0[i]) as f64));
        }
        a[d].push(T::one());
        c.push(T::from_f64(*v).sub(&vk_t));
    }
    let mut b = vec![T::zero(); d + 1];
    b[d] = T::one();
    match solve(&a, &b, &c) {
        // min sum lambda_j (V_j - V_k) = envelope - V(k)
        LpOutcome::Optimal { value, .. } => (-value.to_f64()).max(0.0),
        // k is a vertex of conv(support): the extension may bend up freely.
        LpOutcome::Infeasible { .. } | LpOutcome::Unbounded => 0.0,
    }
}

/// Decide whether `p = exp(-V)` with `V` the restriction of a convex function.
///
/// True iff the support is `Z^d`-convex and every support point lies on the
/// lower convex envelope of the lifted support within `tol`.
pub fn is_log_concave_extensible(p: &LatticePmf, tol: f64, mode: ArithmeticMode) -> Result<ExtensibilityReport> {
    is_log_concave_extensible_with(p, tol, mode, &ConvexityOptions::default())
}

pub fn is_log_concave_extensible_with(
    p: &LatticePmf,
    tol: f64,
    mode: ArithmeticMode,
    opts: &ConvexityOptions,
) -> Result<ExtensibilityReport> {
    let pts = support_points(p)?;
    if pts.len() > opts.lp_budget {
        return Err(LceError::LpBudget { size: pts.len(), budget: opts.lp_budget });
    }
    let support = LatticeSet::new(p.dim(), pts.iter().map(|(k, _)| k.clone()))?;
    let support_convex = is_zd_convex_with(&support, opts)?.is_convex;
    let mut envelope_gaps = BTreeMap::new();
    for idx in 0..pts.len() {
        let gap = match mode {
            ArithmeticMode::Float => envelope_gap::<f64>(&pts, idx),
            ArithmeticMode::Exact => envelope_gap::<BigRational>(&pts, idx),
        };
        envelope_gaps.insert(pts[idx].0.clone(), gap);
    }
    let is_extensible = support_convex && envelope_gaps.values().all(|g| *g <= tol);
    Ok(ExtensibilityReport { is_extensible, support_convex, envelope_gaps, tolerance_used: tol })
}

/// One-dimensional fast path: interval support and `p(k)^2 >= p(k-1) p(k+1)`.
/// Gaps are `V(k) - (V(k-1) + V(k+1)) / 2` at interior points.
pub fn log_concave_1d(p: &LatticePmf, tol: f64) -> Result<ExtensibilityReport> {
    if p.dim() != 1 {
        return Err(LceError::DimensionMismatch { expected: 1, found: p.dim() });
    }
    let pts = support_points(p)?;
    let first = pts[0].0 .0[0];
    let last = pts[pts.len() - 1].0 .0[0];
    let support_convex = (last - first + 1) as usize == pts.len();
    let mut envelope_gaps = BTreeMap::new();
    for (i, (k, v)) in pts.iter().enumerate() {
        let gap = if i == 0 || i + 1 == pts.len() || !support_convex {
            0.0
        } else {
            (v - 0.5 * (pts[i - 1].1 + pts[i + 1].1)).max(0.0)
        };
        envelope_gaps.insert(k.clone(), gap);
    }
    let is_extensible = support_convex && envelope_gaps.values().all(|g| *g <= tol);
    Ok(ExtensibilityReport { is_extensible, support_convex, envelope_gaps, tolerance_used: tol })
}

/// Carathéodory brute force: for each support point, the lower envelope of
/// the others is the minimum over all subsets of at most `d + 1` points whose
/// hull contains it (barycentric weights solved exactly).
pub fn envelope_gaps_bruteforce(p: &LatticePmf, cap: usize) -> Result<BTreeMap<IndexVector, f64>> {
    let pts = support_points(p)?;
    if pts.len() > cap {
        return Err(LceError::LpBudget { size: pts.len(), budget: cap });
    }
    let d = p.dim();
    let mut out = BTreeMap::new();
    for (idx, (k, vk)) in pts.iter().enumerate() {
        let others: Vec<usize> = (0..pts.len()).filter(|&j| j != idx).collect();
        let mut best: Option<f64> = None;
        let rhs: Vec<BigRational> =
            (0..=d).map(|i| if i < d { rational_from_int(k.0[i]) } else { rational_from_int(1) }).collect();
        for size in 1..=(d + 1).min(others.len()) {
            for subset in combinations(others.len(), size) {
                let cols: Vec<usize> = subset.iter().map(|&s| others[s]).collect();
                let rows: Vec<Vec<BigRational>> = (0..=d)
                    .map(|i| {
                        cols.iter()
                            .map(|&j| if i < d { rational_from_int(pts[j].0 .0[i]) } else { rational_from_int(1) })
                            .collect()
                    })
                    .collect();
                let Some(lambda) = exact_solve(&rows, &rhs) else { continue };
                if lambda.iter().any(|l| l.is_negative()) {
                    continue;
                }
                let val: f64 = lambda.iter().zip(&cols).map(|(l, &j)| LpScalar::to_f64(l) * pts[j].1).sum();
                best = Some(best.map_or(val, |b: f64| b.min(val)));
            }
        }
        let gap = best.map_or(0.0, |env| (vk - env).max(0.0));
        out.insert(k.clone(), gap);
    }
    Ok(out)
}

/// All `size`-subsets of `0..n`, lexicographic.
fn combinations(n: usize, size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..size).collect();
    if size > n {
        return out;
    }
    loop {
        out.push(cur.clone());
        let mut i = size;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < n - size + i {
                cur[i] += 1;
                for j in i + 1..size {
                    cur[j] = cur[j - 1] + 1;
                }
                break;
            }
        }
    }
}
