//! Probability mass functions on `Z^d`, stored densely over a bounding box.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, LceError, Result};
use crate::sum::{compensated_sum, Accumulator};

/// Tolerance on `|sum(values) + deficit - 1|` for a normalized p.m.f.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// A point of `Z^d`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IndexVector(pub Vec<i64>);

impl IndexVector {
    pub fn new(coords: Vec<i64>) -> Self {
        Self(coords)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn add(&self, other: &IndexVector) -> IndexVector {
        IndexVector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &IndexVector) -> IndexVector {
        IndexVector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }
}

impl From<Vec<i64>> for IndexVector {
    fn from(v: Vec<i64>) -> Self {
        Self(v)
    }
}

impl From<&[i64]> for IndexVector {
    fn from(v: &[i64]) -> Self {
        Self(v.to_vec())
    }
}

impl fmt::Display for IndexVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Axis-aligned box of lattice points with inclusive bounds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxDomain {
    lo: IndexVector,
    hi: IndexVector,
}

impl BoxDomain {
    pub fn new(lo: IndexVector, hi: IndexVector) -> Result<Self> {
        if lo.dim() == 0 {
            return invalid("box dimension must be at least 1");
        }
        if lo.dim() != hi.dim() {
            return Err(LceError::DimensionMismatch { expected: lo.dim(), found: hi.dim() });
        }
        if lo.0.iter().zip(&hi.0).any(|(l, h)| l > h) {
            return invalid(format!("box bounds out of order: lo {lo}, hi {hi}"));
        }
        let b = Self { lo, hi };
        if b.cell_count_u128() > usize::MAX as u128 / 16 {
            return Err(LceError::MemoryCap { cells: b.cell_count_u128(), cap: usize::MAX as u128 / 16 });
        }
        Ok(b)
    }

    /// Symmetric box `center ± half_width` on every axis.
    pub fn centered(center: &IndexVector, half_width: i64) -> Result<Self> {
        let lo = IndexVector(center.0.iter().map(|c| c - half_width).collect());
        let hi = IndexVector(center.0.iter().map(|c| c + half_width).collect());
        Self::new(lo, hi)
    }

    pub fn dim(&self) -> usize {
        self.lo.dim()
    }

    pub fn lo(&self) -> &IndexVector {
        &self.lo
    }

    pub fn hi(&self) -> &IndexVector {
        &self.hi
    }

    pub fn shape(&self) -> Vec<usize> {
        self.lo.0.iter().zip(&self.hi.0).map(|(l, h)| (h - l + 1) as usize).collect()
    }

    fn cell_count_u128(&self) -> u128 {
        self.lo.0.iter().zip(&self.hi.0).map(|(l, h)| (h - l + 1) as u128).product()
    }

    pub fn cell_count(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn contains(&self, k: &[i64]) -> bool {
        k.len() == self.dim()
            && k.iter().zip(self.lo.0.iter().zip(&self.hi.0)).all(|(x, (l, h))| l <= x && x <= h)
    }

    /// Row-major offset of `k` (last axis fastest), if inside.
    pub fn offset(&self, k: &[i64]) -> Option<usize> {
        if !self.contains(k) {
            return None;
        }
        let mut off = 0usize;
        for (i, &x) in k.iter().enumerate() {
            let extent = (self.hi.0[i] - self.lo.0[i] + 1) as usize;
            off = off * extent + (x - self.lo.0[i]) as usize;
        }
        Some(off)
    }

    pub fn point(&self, mut offset: usize) -> IndexVector {
        let shape = self.shape();
        let mut coords = vec![0i64; shape.len()];
        for i in (0..shape.len()).rev() {
            coords[i] = self.lo.0[i] + (offset % shape[i]) as i64;
            offset /= shape[i];
        }
        IndexVector(coords)
    }

    /// Visit every point in row-major order with its offset.
    pub fn for_each_point<F: FnMut(usize, &[i64])>(&self, mut f: F) {
        let d = self.dim();
        let mut k = self.lo.0.clone();
        let n = self.cell_count();
        for off in 0..n {
            f(off, &k);
            for ax in (0..d).rev() {
                if k[ax] < self.hi.0[ax] {
                    k[ax] += 1;
                    break;
                }
                k[ax] = self.lo.0[ax];
            }
        }
    }

    pub fn points(&self) -> Vec<IndexVector> {
        let mut out = Vec::with_capacity(self.cell_count());
        self.for_each_point(|_, k| out.push(IndexVector(k.to_vec())));
        out
    }

    pub fn minkowski(&self, other: &BoxDomain) -> Result<BoxDomain> {
        if self.dim() != other.dim() {
            return Err(LceError::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        BoxDomain::new(self.lo.add(&other.lo), self.hi.add(&other.hi))
    }

    pub fn enlarge(&self, below: &[i64], above: &[i64]) -> Result<BoxDomain> {
        let lo = IndexVector(self.lo.0.iter().zip(below).map(|(l, b)| l - b).collect());
        let hi = IndexVector(self.hi.0.iter().zip(above).map(|(h, a)| h + a).collect());
        BoxDomain::new(lo, hi)
    }
}

/// Finite set of lattice points, kept sorted lexicographically.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatticeSet {
    dim: usize,
    points: BTreeSet<IndexVector>,
}

#[derive(Serialize, Deserialize)]
struct LatticeSetDocument {
    dim: usize,
    points: Vec<Vec<i64>>,
}

impl LatticeSet {
    pub fn new(dim: usize, points: impl IntoIterator<Item = IndexVector>) -> Result<Self> {
        if dim == 0 {
            return invalid("set dimension must be at least 1");
        }
        let mut set = BTreeSet::new();
        for p in points {
            if p.dim() != dim {
                return Err(LceError::DimensionMismatch { expected: dim, found: p.dim() });
            }
            set.insert(p);
        }
        Ok(Self { dim, points: set })
    }

    pub fn from_coords(dim: usize, points: &[&[i64]]) -> Result<Self> {
        Self::new(dim, points.iter().map(|p| IndexVector(p.to_vec())))
    }

    pub fn from_box(b: &BoxDomain) -> Self {
        Self { dim: b.dim(), points: b.points().into_iter().collect() }
    }

    pub fn empty(dim: usize) -> Self {
        Self { dim, points: BTreeSet::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn contains(&self, k: &IndexVector) -> bool {
        self.points.contains(k)
    }

    pub fn iter(&self) -> impl Iterator<Item = &IndexVector> {
        self.points.iter()
    }

    /// Smallest box containing every point.
    pub fn bounding_box(&self) -> Result<BoxDomain> {
        let first = self.points.iter().next().ok_or(LceError::Empty)?;
        let mut lo = first.0.clone();
        let mut hi = first.0.clone();
        for p in &self.points {
            for i in 0..self.dim {
                lo[i] = lo[i].min(p.0[i]);
                hi[i] = hi[i].max(p.0[i]);
            }
        }
        BoxDomain::new(IndexVector(lo), IndexVector(hi))
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = LatticeSetDocument {
            dim: self.dim,
            points: self.points.iter().map(|p| p.0.clone()).collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: LatticeSetDocument = serde_json::from_str(s)?;
        Self::new(doc.dim, doc.points.into_iter().map(IndexVector))
    }
}

/// A p.m.f. on `Z^d`: dense nonnegative masses over a box plus the mass
/// known to lie outside it.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticePmf {
    domain: BoxDomain,
    values: Vec<f64>,
    deficit: f64,
    meta: BTreeMap<String, serde_json::Value>,
}

/// On-disk form of a [`LatticePmf`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PmfDocument {
    pub dim: usize,
    pub lo: Vec<i64>,
    pub hi: Vec<i64>,
    pub values: Vec<f64>,
    pub deficit: f64,
    #[serde(default)]
    pub meta: BTreeMap<String, serde_json::Value>,
}

impl LatticePmf {
    /// Build from raw parts. Values must be finite and nonnegative; no
    /// normalization is applied or checked.
    pub fn new(domain: BoxDomain, values: Vec<f64>, deficit: f64) -> Result<Self> {
        if values.len() != domain.cell_count() {
            return invalid(format!(
                "{} values for a box of {} cells",
                values.len(),
                domain.cell_count()
            ));
        }
        if !(deficit.is_finite() && deficit >= 0.0) {
            return invalid(format!("deficit must be finite and nonnegative, got {deficit}"));
        }
        for (off, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(LceError::NonFinite(format!("mass at {}", domain.point(off))));
            }
            if v < 0.0 {
                return Err(LceError::NegativeMass { index: domain.point(off).0, value: v });
            }
        }
        Ok(Self { domain, values, deficit, meta: BTreeMap::new() })
    }

    pub fn point_mass(at: IndexVector) -> Result<Self> {
        let domain = BoxDomain::new(at.clone(), at)?;
        Self::new(domain, vec![1.0], 0.0)
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn deficit(&self) -> f64 {
        self.deficit
    }

    pub fn meta(&self) -> &BTreeMap<String, serde_json::Value> {
        &self.meta
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.meta.insert(key.to_string(), value.into());
        self
    }

    /// Mass at `k`; zero outside the box.
    pub fn get(&self, k: &[i64]) -> f64 {
        self.domain.offset(k).map_or(0.0, |o| self.values[o])
    }

    /// Retained mass, compensated.
    pub fn total_mass(&self) -> f64 {
        compensated_sum(self.values.iter().copied())
    }

    /// `|sum + deficit - 1|`.
    pub fn mass_error(&self) -> f64 {
        let mut acc = Accumulator::new();
        acc.extend(self.values.iter().copied());
        acc.add(self.deficit);
        acc.add(-1.0);
        acc.value().abs()
    }

    pub fn is_normalized(&self) -> bool {
        self.mass_error() <= MASS_TOLERANCE
    }

    pub fn support(&self) -> LatticeSet {
        let mut pts = Vec::new();
        self.domain.for_each_point(|off, k| {
            if self.values[off] > 0.0 {
                pts.push(IndexVector(k.to_vec()));
            }
        });
        LatticeSet { dim: self.dim(), points: pts.into_iter().collect() }
    }

    /// Translate by an integer vector.
    pub fn shift(&self, by: &[i64]) -> Result<Self> {
        if by.len() != self.dim() {
            return Err(LceError::DimensionMismatch { expected: self.dim(), found: by.len() });
        }
        let lo = IndexVector(self.domain.lo.0.iter().zip(by).map(|(a, b)| a + b).collect());
        let hi = IndexVector(self.domain.hi.0.iter().zip(by).map(|(a, b)| a + b).collect());
        Ok(Self {
            domain: BoxDomain::new(lo, hi)?,
            values: self.values.clone(),
            deficit: self.deficit,
            meta: self.meta.clone(),
        })
    }

    /// Divide by the retained mass and drop the deficit. Recorded in `meta`.
    pub fn renormalized(&self) -> Result<Self> {
        let mass = self.total_mass();
        if mass <= 0.0 {
            return Err(LceError::Empty);
        }
        let mut out = Self::new(
            self.domain.clone(),
            self.values.iter().map(|v| v / mass).collect(),
            0.0,
        )?;
        out.meta = self.meta.clone();
        out.meta.insert("renormalized".into(), serde_json::Value::Bool(true));
        out.meta.insert("dropped_deficit".into(), self.deficit.into());
        Ok(out)
    }

    /// Same masses over a larger (or equal) box.
    pub fn embed(&self, target: &BoxDomain) -> Result<Self> {
        if target.dim() != self.dim() {
            return Err(LceError::DimensionMismatch { expected: self.dim(), found: target.dim() });
        }
        if !target.contains(self.domain.lo.coords()) || !target.contains(self.domain.hi.coords()) {
            return invalid("target box does not contain the p.m.f. box");
        }
        let mut values = vec![0.0; target.cell_count()];
        self.domain.for_each_point(|off, k| {
            values[target.offset(k).expect("contained")] = self.values[off];
        });
        let mut out = Self::new(target.clone(), values, self.deficit)?;
        out.meta = self.meta.clone();
        Ok(out)
    }

    pub fn to_document(&self) -> PmfDocument {
        PmfDocument {
            dim: self.dim(),
            lo: self.domain.lo.0.clone(),
            hi: self.domain.hi.0.clone(),
            values: self.values.clone(),
            deficit: self.deficit,
            meta: self.meta.clone(),
        }
    }

    pub fn from_document(doc: PmfDocument) -> Result<Self> {
        if doc.lo.len() != doc.dim || doc.hi.len() != doc.dim {
            return invalid("`lo`/`hi` length differs from `dim`");
        }
        let domain = BoxDomain::new(IndexVector(doc.lo), IndexVector(doc.hi))?;
        let mut out = Self::new(domain, doc.values, doc.deficit)?;
        out.meta = doc.meta;
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_document(serde_json::from_str(s)?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// Uniform p.m.f. on a finite nonempty set.
pub fn make_uniform_on_set(set: &LatticeSet) -> Result<LatticePmf> {
    if set.is_empty() {
        return Err(LceError::Empty);
    }
    let domain = set.bounding_box()?;
    let mass = 1.0 / set.len() as f64;
    let mut values = vec![0.0; domain.cell_count()];
    for p in set.iter() {
        values[domain.offset(p.coords()).expect("in bounding box")] = mass;
    }
    Ok(LatticePmf::new(domain, values, 0.0)?.with_meta("family", "uniform_on_set"))
}

/// Product of one-dimensional p.m.f.s, one per axis.
pub fn make_product(factors: &[LatticePmf]) -> Result<LatticePmf> {
    if factors.is_empty() {
        return invalid("product needs at least one factor");
    }
    for f in factors {
        if f.dim() != 1 {
            return Err(LceError::DimensionMismatch { expected: 1, found: f.dim() });
        }
    }
    let lo = IndexVector(factors.iter().map(|f| f.domain.lo.0[0]).collect());
    let hi = IndexVector(factors.iter().map(|f| f.domain.hi.0[0]).collect());
    let domain = BoxDomain::new(lo, hi)?;
    let mut values = Vec::with_capacity(domain.cell_count());
    domain.for_each_point(|_, k| {
        let v = factors.iter().zip(k).map(|(f, &x)| f.get(&[x])).product::<f64>();
        values.push(v);
    });
    // 1 - prod(1 - d_i) <= sum d_i
    let retained: f64 = factors.iter().map(|f| 1.0 - f.deficit).product();
    let deficit = (1.0 - retained).max(0.0);
    Ok(LatticePmf::new(domain, values, deficit)?.with_meta("family", "product"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(v: &[i64]) -> IndexVector {
        IndexVector(v.to_vec())
    }

    #[test]
    fn offsets_are_row_major_last_axis_fastest() {
        let b = BoxDomain::new(iv(&[0, 0]), iv(&[1, 2])).unwrap();
        assert_eq!(b.offset(&[0, 1]), Some(1));
        assert_eq!(b.offset(&[1, 0]), Some(3));
        assert_eq!(b.point(5), iv(&[1, 2]));
        let mut seen = Vec::new();
        b.for_each_point(|off, k| seen.push((off, k.to_vec())));
        assert_eq!(seen[4], (4, vec![1, 1]));
        assert_eq!(seen.len(), 6);
    }

    #[test]
    fn rejects_bad_boxes() {
        assert!(BoxDomain::new(iv(&[1]), iv(&[0])).is_err());
        assert!(BoxDomain::new(iv(&[0, 0]), iv(&[1])).is_err());
        assert!(BoxDomain::new(iv(&[]), iv(&[])).is_err());
    }

    #[test]
    fn uniform_on_point_and_diagonal() {
        let p = make_uniform_on_set(&LatticeSet::from_coords(1, &[&[0]]).unwrap()).unwrap();
        assert_eq!(p.values(), &[1.0]);
        let s1 = LatticeSet::from_coords(2, &[&[0, 0], &[1, 1]]).unwrap();
        let p = make_uniform_on_set(&s1).unwrap();
        assert_eq!(p.get(&[0, 0]), 0.5);
        assert_eq!(p.get(&[1, 1]), 0.5);
        assert_eq!(p.get(&[0, 1]), 0.0);
        assert_eq!(p.deficit(), 0.0);
        let sq = LatticeSet::from_box(&BoxDomain::new(iv(&[0, 0]), iv(&[1, 1])).unwrap());
        let p = make_uniform_on_set(&sq).unwrap();
        assert!(p.values().iter().all(|&v| v == 0.25));
        assert!(make_uniform_on_set(&LatticeSet::empty(2)).is_err());
    }

    #[test]
    fn product_of_uniform_bits() {
        let bit = make_uniform_on_set(&LatticeSet::from_coords(1, &[&[0], &[1]]).unwrap()).unwrap();
        let p = make_product(&[bit.clone(), bit]).unwrap();
        assert_eq!(p.values(), &[0.25; 4]);
        let delta = LatticePmf::point_mass(iv(&[0])).unwrap();
        let q = make_product(&[delta.clone(), delta]).unwrap();
        assert_eq!(q.values(), &[1.0]);
        assert_eq!(q.domain().lo(), &iv(&[0, 0]));
        assert!(make_product(&[]).is_err());
    }

    #[test]
    fn negative_and_nonfinite_masses_rejected() {
        let b = BoxDomain::new(iv(&[0]), iv(&[1])).unwrap();
        assert!(matches!(
            LatticePmf::new(b.clone(), vec![0.5, -0.1], 0.0),
            Err(LceError::NegativeMass { .. })
        ));
        assert!(LatticePmf::new(b, vec![0.5, f64::NAN], 0.0).is_err());
    }

    #[test]
    fn json_document_uses_fixed_field_names() {
        let p = make_uniform_on_set(&LatticeSet::from_coords(2, &[&[0, 0], &[1, 1]]).unwrap()).unwrap();
        let s = p.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        for key in ["dim", "lo", "hi", "values", "deficit", "meta"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["values"], serde_json::json!([0.5, 0.0, 0.0, 0.5]));
        assert_eq!(LatticePmf::from_json(&s).unwrap(), p);
    }

    #[test]
    fn renormalize_is_recorded() {
        let b = BoxDomain::new(iv(&[0]), iv(&[1])).unwrap();
        let p = LatticePmf::new(b, vec![0.25, 0.25], 0.5).unwrap();
        let q = p.renormalized().unwrap();
        assert_eq!(q.values(), &[0.5, 0.5]);
        assert_eq!(q.meta()["renormalized"], serde_json::Value::Bool(true));
        assert!(q.is_normalized());
    }

    #[test]
    fn set_json_roundtrip_and_dedup() {
        let s = LatticeSet::from_coords(2, &[&[1, 0], &[0, 1], &[1, 0]]).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.iter().next().unwrap(), &iv(&[0, 1]));
        assert_eq!(LatticeSet::from_json(&s.to_json().unwrap()).unwrap(), s);
    }
}
