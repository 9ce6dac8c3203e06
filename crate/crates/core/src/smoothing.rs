//! Densities of `S + U_1 + ... + U_n` with `U_i` uniform on `[0,1)^d`, their
//! differential entropy, and how far they stray from the step density of `S`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, LceError, Result};
use crate::lattice::{BoxDomain, IndexVector, LatticePmf};
use crate::quadrature::GaussLegendre;
use crate::sum::Accumulator;

/// Cardinal B-spline of order `n`: the density of a sum of `n` independent
/// uniforms on `[0, 1)`. Support `[0, n)`; zero elsewhere.
///
/// Evaluated with the two-term recursion
/// `B_m(x) = (x B_{m-1}(x) + (m - x) B_{m-1}(x - 1)) / (m - 1)`.
pub fn bspline_eval(n: usize, x: f64) -> f64 {
    assert!(n >= 1, "B-spline order must be positive");
    if !(x >= 0.0 && x < n as f64) {
        return 0.0;
    }
    // level[j] holds B_m(x - j) for j = 0..=n-m.
    let mut level: Vec<f64> = (0..n)
        .map(|j| {
            let y = x - j as f64;
            if (0.0..1.0).contains(&y) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    for m in 2..=n {
        let mf = m as f64;
        for j in 0..=n - m {
            let y = x - j as f64;
            level[j] = (y * level[j] + (mf - y) * level[j + 1]) / (mf - 1.0);
        }
    }
    level[0]
}

/// `f_n(x) = sum_s p(s) prod_i B_n(x_i - s_i)`.
pub fn smoothed_density_eval(p: &LatticePmf, n: usize, x: &[f64]) -> Result<f64> {
    check_order(n)?;
    if x.len() != p.dim() {
        return Err(LceError::DimensionMismatch { expected: p.dim(), found: x.len() });
    }
    let d = p.dim();
    let base: Vec<i64> = x.iter().map(|v| v.floor() as i64).collect();
    let frac: Vec<f64> = x.iter().zip(&base).map(|(v, b)| v - *b as f64).collect();
    let tables: Vec<Vec<f64>> = frac.iter().map(|u| (0..n).map(|j| bspline_eval(n, u + j as f64)).collect()).collect();
    let mut acc = Accumulator::new();
    for_each_stencil(d, n, |j| {
        let s: Vec<i64> = base.iter().zip(j).map(|(b, ji)| b - *ji as i64).collect();
        let w: f64 = (0..d).map(|i| tables[i][j[i]]).product();
        acc.add(p.get(&s) * w);
    });
    Ok(acc.value())
}

/// `sum` of `p` over the `n^d` lattice points whose kernels cover `x`.
/// Dominates `f_n(x)` because `B_n <= 1`.
pub fn kernel_bound(p: &LatticePmf, n: usize, x: &[f64]) -> Result<f64> {
    check_order(n)?;
    let base: Vec<i64> = x.iter().map(|v| v.floor() as i64).collect();
    let mut acc = Accumulator::new();
    for_each_stencil(p.dim(), n, |j| {
        let s: Vec<i64> = base.iter().zip(j).map(|(b, ji)| b - *ji as i64).collect();
        acc.add(p.get(&s));
    });
    Ok(acc.value())
}

fn check_order(n: usize) -> Result<()> {
    if n == 0 {
        return invalid("smoothing order must be at least 1");
    }
    Ok(())
}

fn for_each_stencil(d: usize, n: usize, mut f: impl FnMut(&[usize])) {
    let mut j = vec![0usize; d];
    loop {
        f(&j);
        let mut i = d;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            j[i] += 1;
            if j[i] < n {
                break;
            }
            j[i] = 0;
        }
    }
}

/// Unit cells `k + [0,1)^d` on which `f_n` can be nonzero.
pub fn smoothed_cells(p: &LatticePmf, n: usize) -> Result<BoxDomain> {
    let up = vec![n as i64 - 1; p.dim()];
    p.domain().enlarge(&vec![0; p.dim()], &up)
}

/// Masses `p(k - j)` for `j in {0..n-1}^d`, row-major in `j`.
fn gather_stencil(p: &LatticePmf, n: usize, k: &[i64], out: &mut Vec<f64>) {
    out.clear();
    let mut s = vec![0i64; k.len()];
    for_each_stencil(k.len(), n, |j| {
        for i in 0..k.len() {
            s[i] = k[i] - j[i] as i64;
        }
        out.push(p.get(&s));
    });
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntropyOptions {
    /// Gauss–Legendre points per axis per cell; compared against twice that.
    pub order: usize,
    /// Absolute tolerance on the total.
    pub tol: f64,
    /// Bisection depth allowed per cell.
    pub max_depth: usize,
    /// Cells whose covering mass is below this are bounded, not integrated.
    pub floor: f64,
    pub max_n: usize,
}

impl Default for EntropyOptions {
    fn default() -> Self {
        Self { order: 8, tol: 1e-8, max_depth: 40, floor: 1e-30, max_n: 4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    /// `-∫ f_n log f_n` over the integrated cells (nats).
    pub value: f64,
    /// Bound on `|∫ f_n log f_n|` over skipped low-mass cells.
    pub skipped_bound: f64,
    pub cells_integrated: usize,
    pub cells_skipped: usize,
    pub deepest_bisection: usize,
}

/// Differential entropy of `S + U_1 + ... + U_n` for `S ~ p`.
pub fn differential_entropy(p: &LatticePmf, n: usize, quad_order: usize, tol: f64) -> Result<f64> {
    let opts = EntropyOptions { order: quad_order, tol, ..Default::default() };
    Ok(differential_entropy_report(p, n, &opts)?.value)
}

/// Cell-by-cell tensor Gauss–Legendre. Each cell is integrated at `order`
/// and `2 order`; if they disagree by more than the cell's share of `tol`
/// the cell is bisected along every axis and the halves are refined the
/// same way.
pub fn differential_entropy_report(p: &LatticePmf, n: usize, opts: &EntropyOptions) -> Result<EntropyReport> {
    check_order(n)?;
    if n > opts.max_n {
        return invalid(format!("smoothing order {n} exceeds the cap {}", opts.max_n));
    }
    if opts.order == 0 || !(opts.tol > 0.0) {
        return invalid("quadrature order and tolerance must be positive");
    }
    let d = p.dim();
    let cells = smoothed_cells(p, n)?;
    let mut stencil = Vec::with_capacity(n.pow(d as u32));

    let mut active = 0usize;
    cells.for_each_point(|_, k| {
        gather_stencil(p, n, k, &mut stencil);
        if stencil.iter().sum::<f64>() >= opts.floor {
            active += 1;
        }
    });

    let coarse = GaussLegendre::new(opts.order);
    let fine = GaussLegendre::new(2 * opts.order);
    let tol_cell = opts.tol / active.max(1) as f64;
    let mut ctx = CellIntegrator::new(d, n, &coarse, &fine, true);
    let mut total = Accumulator::new();
    let mut skipped = Accumulator::new();
    let mut cells_skipped = 0;
    let mut deepest = 0;
    let mut failure = None;
    cells.for_each_point(|_, k| {
        if failure.is_some() {
            return;
        }
        gather_stencil(p, n, k, &mut stencil);
        let mass: f64 = stencil.iter().sum();
        if mass < opts.floor {
            if mass > 0.0 {
                cells_skipped += 1;
                skipped.add(-mass * mass.ln());
            }
            return;
        }
        let lo = vec![0.0; d];
        let hi = vec![1.0; d];
        match ctx.refine(&stencil, &lo, &hi, &coarse, &fine, tol_cell, opts.max_depth, 0) {
            Ok((v, depth)) => {
                total.add(v);
                deepest = deepest.max(depth);
            }
            Err(e) => failure = Some((IndexVector(k.to_vec()), e)),
        }
    });
    if let Some((k, _)) = failure {
        return Err(LceError::QuadratureNonConvergence(format!("entropy cell {k}")));
    }
    Ok(EntropyReport {
        value: total.value(),
        skipped_bound: skipped.value(),
        cells_integrated: active,
        cells_skipped,
        deepest_bisection: deepest,
    })
}

/// `∫ f_n` by the same cell rules; exact up to rounding since `f_n` is a
/// polynomial of degree `n - 1` per axis on each cell.
pub fn smoothed_mass(p: &LatticePmf, n: usize) -> Result<f64> {
    check_order(n)?;
    let d = p.dim();
    let rule = GaussLegendre::new(n.div_ceil(2).max(1));
    let cells = smoothed_cells(p, n)?;
    let mut ctx = CellIntegrator::new(d, n, &rule, &rule, false);
    let mut stencil = Vec::new();
    let mut total = Accumulator::new();
    cells.for_each_point(|_, k| {
        gather_stencil(p, n, k, &mut stencil);
        total.add(ctx.integrate_unit(&stencil, false, Integrand::Density));
    });
    Ok(total.value())
}

#[derive(Clone, Copy)]
enum Integrand {
    Density,
    NegLog,
}

/// Kernel values `B_n(u + j)` and weights at the nodes of one axis.
#[derive(Clone, Debug)]
struct AxisTable {
    kernel: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

/// Nodes on `[a, b]`. With `graded`, the rule is pulled through
/// `u = a + (b - a) S(t)`, `S(t) = t^3 (10 - 15 t + 6 t^2)`, whose derivative
/// `30 t^2 (1 - t)^2` vanishes at both ends: `-f log f` keeps a bounded
/// derivative near edges where `f` vanishes, so the rule still converges fast.
fn axis_table(n: usize, rule: &GaussLegendre, a: f64, b: f64, graded: bool) -> AxisTable {
    let (ts, ws) = rule.on_interval(0.0, 1.0);
    let mut kernel = Vec::with_capacity(ts.len());
    let mut weights = Vec::with_capacity(ts.len());
    for (t, w) in ts.iter().zip(&ws) {
        let (s, ds) = if graded {
            (t * t * t * (10.0 - 15.0 * t + 6.0 * t * t), 30.0 * t * t * (1.0 - t) * (1.0 - t))
        } else {
            (*t, 1.0)
        };
        let u = a + (b - a) * s;
        kernel.push((0..n).map(|j| bspline_eval(n, u + j as f64)).collect());
        weights.push(w * (b - a) * ds);
    }
    AxisTable { kernel, weights }
}

/// Scratch buffers for contracting the stencil against per-axis kernel tables.
struct CellIntegrator {
    d: usize,
    n: usize,
    scratch: Vec<Vec<f64>>,
    unit_coarse: AxisTable,
    unit_fine: AxisTable,
}

impl CellIntegrator {
    fn new(d: usize, n: usize, coarse: &GaussLegendre, fine: &GaussLegendre, graded: bool) -> Self {
        let scratch = (0..d).map(|level| vec![0.0; n.pow((d - level - 1) as u32)]).collect();
        Self {
            d,
            n,
            scratch,
            unit_coarse: axis_table(n, coarse, 0.0, 1.0, graded),
            unit_fine: axis_table(n, fine, 0.0, 1.0, graded),
        }
    }

    fn integrate(&mut self, stencil: &[f64], axes: &[&AxisTable], what: Integrand) -> f64 {
        let mut sum = 0.0;
        contract(stencil, self.n, 0, self.d, axes, &mut self.scratch, 1.0, what, &mut sum);
        sum
    }

    fn integrate_unit(&mut self, stencil: &[f64], fine: bool, what: Integrand) -> f64 {
        let table = if fine { &self.unit_fine } else { &self.unit_coarse };
        let axes: Vec<&AxisTable> = vec![table; self.d];
        let mut sum = 0.0;
        contract(stencil, self.n, 0, self.d, &axes, &mut self.scratch, 1.0, what, &mut sum);
        sum
    }

    #[allow(clippy::too_many_arguments)]
    fn refine(
        &mut self,
        stencil: &[f64],
        lo: &[f64],
        hi: &[f64],
        coarse: &GaussLegendre,
        fine: &GaussLegendre,
        tol: f64,
        depth_left: usize,
        depth: usize,
    ) -> Result<(f64, usize)> {
        let (a, b) = if depth == 0 {
            (
                self.integrate_unit(stencil, false, Integrand::NegLog),
                self.integrate_unit(stencil, true, Integrand::NegLog),
            )
        } else {
            let tc: Vec<AxisTable> = (0..self.d).map(|i| axis_table(self.n, coarse, lo[i], hi[i], true)).collect();
            let tf: Vec<AxisTable> = (0..self.d).map(|i| axis_table(self.n, fine, lo[i], hi[i], true)).collect();
            let rc: Vec<&AxisTable> = tc.iter().collect();
            let rf: Vec<&AxisTable> = tf.iter().collect();
            (self.integrate(stencil, &rc, Integrand::NegLog), self.integrate(stencil, &rf, Integrand::NegLog))
        };
        if (a - b).abs() <= tol {
            return Ok((b, depth));
        }
        if depth_left == 0 {
            return Err(LceError::QuadratureNonConvergence("cell refinement".into()));
        }
        let d = self.d;
        let parts = 1usize << d;
        let mut acc = Accumulator::new();
        let mut deepest = depth;
        for mask in 0..parts {
            let mut sl = vec![0.0; d];
            let mut sh = vec![0.0; d];
            for i in 0..d {
                let mid = 0.5 * (lo[i] + hi[i]);
                if mask >> i & 1 == 0 {
                    sl[i] = lo[i];
                    sh[i] = mid;
                } else {
                    sl[i] = mid;
                    sh[i] = hi[i];
                }
            }
            let (v, dd) = self.refine(stencil, &sl, &sh, coarse, fine, tol / parts as f64, depth_left - 1, depth + 1)?;
            acc.add(v);
            deepest = deepest.max(dd);
        }
        Ok((acc.value(), deepest))
    }
}

/// Contract axis `axis` of the `n^(d-axis)` tensor `m` against every node of
/// that axis, recursing until a scalar density value remains.
#[allow(clippy::too_many_arguments)]
fn contract(
    m: &[f64],
    n: usize,
    axis: usize,
    d: usize,
    axes: &[&AxisTable],
    scratch: &mut [Vec<f64>],
    w: f64,
    what: Integrand,
    sum: &mut f64,
) {
    if axis == d {
        let f = m[0];
        *sum += match what {
            Integrand::Density => w * f,
            Integrand::NegLog => {
                if f > 0.0 {
                    -w * f * f.ln()
                } else {
                    0.0
                }
            }
        };
        return;
    }
    let stride = m.len() / n;
    let (head, tail) = scratch.split_at_mut(1);
    let buf = &mut head[0];
    for (row, wq) in axes[axis].kernel.iter().zip(&axes[axis].weights) {
        for s in 0..stride {
            let mut v = 0.0;
            for j in 0..n {
                v += row[j] * m[j * stride + s];
            }
            buf[s] = v;
        }
        contract(buf, n, axis + 1, d, axes, tail, w * wq, what, sum);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellDeviationReport {
    /// Cells `k + [0,1)^d` on which the deviation was measured.
    pub cells: BoxDomain,
    /// `sup |f_n - p(k)|` per cell, row-major over `cells`.
    pub per_cell: Vec<f64>,
    pub total: f64,
    /// False when the per-cell values are certified upper bounds rather
    /// than exact suprema.
    pub exact: bool,
}

/// Sample points per axis per cell used for `n >= 3`.
pub const DEVIATION_GRID: usize = 16;

/// `sup_x |f_n(x) - p(k)|` on every cell.
///
/// `n = 1`: zero. `n = 2`: `f_2` is multilinear on each cell, so the sup is
/// attained at a corner, where `f_2(k + c) = p(k + c - 1)`. `n >= 3`:
/// sampled at cell-grid midpoints and padded by `d L h / 2`, where `L` is
/// the covering mass (`|B_n'| <= 1` bounds every partial derivative by it).
pub fn cell_deviation(p: &LatticePmf, n: usize) -> Result<CellDeviationReport> {
    check_order(n)?;
    let d = p.dim();
    let cells = smoothed_cells(p, n)?;
    let mut per_cell = Vec::with_capacity(cells.cell_count());
    let mut total = Accumulator::new();
    let mut stencil = Vec::new();
    let h = 1.0 / DEVIATION_GRID as f64;
    let grid_tables: Vec<Vec<f64>> = (0..DEVIATION_GRID)
        .map(|g| {
            let u = (g as f64 + 0.5) * h;
            (0..n).map(|j| bspline_eval(n, u + j as f64)).collect()
        })
        .collect();
    cells.for_each_point(|_, k| {
        let pk = p.get(k);
        let dev = match n {
            1 => 0.0,
            2 => {
                let mut worst = 0.0f64;
                let mut corner = vec![0i64; d];
                for_each_stencil(d, 2, |c| {
                    for i in 0..d {
                        corner[i] = k[i] + c[i] as i64 - 1;
                    }
                    worst = worst.max((p.get(&corner) - pk).abs());
                });
                worst
            }
            _ => {
                gather_stencil(p, n, k, &mut stencil);
                let lip: f64 = stencil.iter().sum();
                let mut worst = 0.0f64;
                for_each_stencil(d, DEVIATION_GRID, |g| {
                    let mut f = 0.0;
                    let mut idx = 0;
                    for_each_stencil(d, n, |j| {
                        let w: f64 = (0..d).map(|i| grid_tables[g[i]][j[i]]).product();
                        f += stencil[idx] * w;
                        idx += 1;
                    });
                    worst = worst.max((f - pk).abs());
                });
                worst + d as f64 * lip * h / 2.0
            }
        };
        total.add(dev);
        per_cell.push(dev);
    });
    Ok(CellDeviationReport { cells, per_cell, total: total.value(), exact: n <= 2 })
}

/// `G(x) = -x log x - x log M`, with `0 log 0 = 0`.
pub fn elementary_g(x: f64, m: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        -x * x.ln() - x * m.ln()
    }
}

/// `(2 mu / M) log(1/mu) + |b - a| log(e D / mu)`, which dominates
/// `|G(b) - G(a)|` for `D, M >= 1`, `0 <= a, b <= D/M`, `0 < mu < 1/e`.
pub fn elementary_estimate(a: f64, b: f64, mu: f64, dd: f64, m: f64) -> Result<f64> {
    let finite = [a, b, mu, dd, m].iter().all(|v| v.is_finite());
    if !finite || dd < 1.0 || m < 1.0 {
        return invalid("elementary estimate needs finite inputs with D, M >= 1");
    }
    let cap = dd / m;
    if !(0.0..=cap).contains(&a) || !(0.0..=cap).contains(&b) {
        return invalid("elementary estimate needs 0 <= a, b <= D/M");
    }
    if !(mu > 0.0 && mu < (-1f64).exp()) {
        return invalid("elementary estimate needs 0 < mu < 1/e");
    }
    Ok(2.0 * mu / m * (1.0 / mu).ln() + (b - a).abs() * (std::f64::consts::E * dd / mu).ln())
}
