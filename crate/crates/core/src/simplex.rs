//! Dense two-phase simplex for small equality-form LPs:
//! minimize `c.x` subject to `A x = b`, `x >= 0`.
//!
//! Generic over the scalar so the same routine runs in floating point (with
//! a pivot tolerance) and in exact rational arithmetic.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub trait LpScalar: Clone + Debug + PartialOrd {
    fn zero() -> Self;
    fn one() -> Self;
    fn from_f64(x: f64) -> Self;
    fn to_f64(&self) -> f64;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    /// Strictly positive beyond the pivot tolerance.
    fn is_pos(&self) -> bool;
    fn is_neg(&self) -> bool {
        self.neg().is_pos()
    }
    fn is_zero(&self) -> bool {
        !self.is_pos() && !self.is_neg()
    }
}

/// Pivot tolerance for the floating-point instance.
pub const F64_TOL: f64 = 1e-10;

impl LpScalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn is_pos(&self) -> bool {
        *self > F64_TOL
    }
}

impl LpScalar for BigRational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    /// Exact conversion of a finite double (every double is a dyadic rational).
    fn from_f64(x: f64) -> Self {
        BigRational::from_float(x).expect("finite input")
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn is_pos(&self) -> bool {
        self.is_positive()
    }
}

pub fn rational_from_int(v: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome<T> {
    Optimal { x: Vec<T>, value: T },
    Infeasible { phase_one: T },
    Unbounded,
}

struct Tableau<T> {
    rows: Vec<Vec<T>>, // each row: coefficients then rhs
    basis: Vec<usize>,
    cost: Vec<T>, // reduced costs, last entry = -objective
    width: usize, // number of columns excluding rhs
}

impl<T: LpScalar> Tableau<T> {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c].clone();
        for v in self.rows[r].iter_mut() {
            *v = v.div(&p);
        }
        let prow = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r || is_exact_zero(&row[c]) {
                continue;
            }
            let f = row[c].clone();
            for (v, pv) in row.iter_mut().zip(&prow) {
                *v = v.sub(&f.mul(pv));
            }
        }
        let f = self.cost[c].clone();
        for (v, pv) in self.cost.iter_mut().zip(&prow) {
            *v = v.sub(&f.mul(pv));
        }
        self.basis[r] = c;
    }

    /// Optimize over columns `< allowed`. Returns false when unbounded.
    fn run(&mut self, allowed: usize) -> bool {
        let bland_after = 50 * (self.rows.len() + self.width) + 100;
        let mut iter = 0usize;
        loop {
            iter += 1;
            let entering = if iter > bland_after {
                (0..allowed).find(|&j| self.cost[j].is_neg())
            } else {
                let mut best: Option<usize> = None;
                for j in 0..allowed {
                    if self.cost[j].is_neg() && best.map_or(true, |b| self.cost[j] < self.cost[b]) {
                        best = Some(j);
                    }
                }
                best
            };
            let Some(c) = entering else { return true };
            let rhs = self.width;
            let mut leave: Option<(usize, T)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if row[c].is_pos() {
                    let ratio = row[rhs].div(&row[c]);
                    let better = match &leave {
                        None => true,
                        Some((li, lr)) => ratio < *lr || (ratio == *lr && self.basis[i] < self.basis[*li]),
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((r, _)) = leave else { return false };
            self.pivot(r, c);
        }
    }
}

fn is_exact_zero<T: LpScalar>(v: &T) -> bool {
    *v == T::zero()
}

/// Solve `min c.x, A x = b, x >= 0` with `A` given row-wise.
pub fn solve<T: LpScalar>(a: &[Vec<T>], b: &[T], c: &[T]) -> LpOutcome<T> {
    let m = a.len();
    let n = c.len();
    let width = n + m;
    let mut rows = Vec::with_capacity(m);
    for (i, ai) in a.iter().enumerate() {
        assert_eq!(ai.len(), n, "row {i} has wrong length");
        let flip = b[i] < T::zero();
        let mut row: Vec<T> = ai.iter().map(|v| if flip { v.neg() } else { v.clone() }).collect();
        for k in 0..m {
            row.push(if k == i { T::one() } else { T::zero() });
        }
        row.push(if flip { b[i].neg() } else { b[i].clone() });
        rows.push(row);
    }
    // Phase one: minimize the sum of artificials.
    let mut cost = vec![T::zero(); width + 1];
    for row in &rows {
        for j in 0..n {
            cost[j] = cost[j].sub(&row[j]);
        }
        cost[width] = cost[width].sub(&row[width]);
    }
    let mut t = Tableau { rows, basis: (n..n + m).collect(), cost, width };
    t.run(width);
    let phase_one = t.cost[width].neg();
    if phase_one.is_pos() {
        return LpOutcome::Infeasible { phase_one };
    }
    // Drive artificials out of the basis; drop redundant rows.
    let mut r = 0;
    while r < t.rows.len() {
        if t.basis[r] >= n {
            match (0..n).find(|&j| !t.rows[r][j].is_zero()) {
                Some(j) => {
                    t.pivot(r, j);
                    r += 1;
                }
                None => {
                    t.rows.remove(r);
                    t.basis.remove(r);
                }
            }
        } else {
            r += 1;
        }
    }
    // Phase two.
    let mut cost = vec![T::zero(); width + 1];
    cost[..n].clone_from_slice(c);
    for (row, &bi) in t.rows.iter().zip(&t.basis) {
        let cb = c[bi].clone();
        if is_exact_zero(&cb) {
            continue;
        }
        for j in 0..=width {
            cost[j] = cost[j].sub(&cb.mul(&row[j]));
        }
    }
    t.cost = cost;
    if !t.run(n) {
        return LpOutcome::Unbounded;
    }
    let mut x = vec![T::zero(); n];
    for (row, &bi) in t.rows.iter().zip(&t.basis) {
        if bi < n {
            x[bi] = row[width].clone();
        }
    }
    let value = x.iter().zip(c).fold(T::zero(), |acc, (xi, ci)| acc.add(&xi.mul(ci)));
    LpOutcome::Optimal { x, value }
}

/// Solve the square or overdetermined system `M y = rhs` exactly; `None`
/// when `M` has rank below its column count or the system is inconsistent.
pub fn exact_solve(m: &[Vec<BigRational>], rhs: &[BigRational]) -> Option<Vec<BigRational>> {
    let rows = m.len();
    let cols = m.first().map_or(0, |r| r.len());
    let mut a: Vec<Vec<BigRational>> =
        m.iter().zip(rhs).map(|(r, b)| r.iter().cloned().chain(std::iter::once(b.clone())).collect()).collect();
    let mut pivot_row = 0;
    let mut pivots = Vec::new();
    for col in 0..cols {
        let Some(p) = (pivot_row..rows).find(|&i| !Zero::is_zero(&a[i][col])) else { return None };
        a.swap(pivot_row, p);
        let pv = a[pivot_row][col].clone();
        for v in a[pivot_row].iter_mut() {
            *v = &*v / &pv;
        }
        let prow = a[pivot_row].clone();
        for (i, row) in a.iter_mut().enumerate() {
            if i != pivot_row && !Zero::is_zero(&row[col]) {
                let f = row[col].clone();
                for (v, pv) in row.iter_mut().zip(&prow) {
                    *v = &*v - &(&f * pv);
                }
            }
        }
        pivots.push(col);
        pivot_row += 1;
    }
    // Remaining rows must be consistent (all-zero).
    for row in a.iter().skip(pivot_row) {
        if !Zero::is_zero(&row[cols]) {
            return None;
        }
    }
    Some((0..cols).map(|i| a[i][cols].clone()).collect())
}
