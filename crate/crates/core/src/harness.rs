//! Sweep driver: runs the verification checks over a family of p.m.f.s and
//! assembles a report document.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convexity::{is_log_concave_extensible, ArithmeticMode, ConvexityOptions};
use crate::convolve::{convolve, ConvolveMethod, ConvolveOptions};
use crate::density::DensitySpec;
use crate::error::{invalid, LceError, Result};
use crate::lattice::{make_uniform_on_set, BoxDomain, IndexVector, LatticePmf, LatticeSet, PmfDocument};
use crate::moments::{discrete_moments, isotropy_score_of, max_times_sqrt_one_plus_4var, shannon_entropy};
use crate::quantize::{quantize_density, QuantizeOptions};
use crate::smoothing::{differential_entropy_report, EntropyOptions};

pub const CHECK_EPI: &str = "epi";
pub const CHECK_DIFF_APPROX: &str = "diff_approx";
pub const CHECK_DISCRETE_UB: &str = "discrete_ub";
pub const CHECK_EXPLORE: &str = "explore_self_convolution";
pub const CHECK_IDS: [&str; 4] = [CHECK_EPI, CHECK_DIFF_APPROX, CHECK_DISCRETE_UB, CHECK_EXPLORE];

/// Where the sweep's p.m.f.s come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilySpec {
    /// A continuous density restricted to `Z^d` around the origin; its
    /// dimension and scale are overridden by the sweep.
    Quantized { density: DensitySpec },
    PointMass,
    /// Uniform on `{0, ..., m-1}^d`; ignores the sweep's sigma.
    UniformRange { m: i64 },
}

impl FamilySpec {
    /// `point_mass`, `uniform_range{m=25}`, or a density such as `gaussian`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "point_mass" {
            return Ok(FamilySpec::PointMass);
        }
        if let Some(rest) = s.strip_prefix("uniform_range") {
            let m = rest
                .trim_start_matches('{')
                .trim_end_matches('}')
                .split(',')
                .filter_map(|kv| kv.split_once('='))
                .find(|(k, _)| k.trim() == "m")
                .map(|(_, v)| v.trim().parse::<i64>())
                .transpose()
                .map_err(|_| LceError::InvalidInput(format!("bad family `{s}`")))?
                .unwrap_or(25);
            return Ok(FamilySpec::UniformRange { m });
        }
        let s = s.strip_prefix("quantized:").unwrap_or(s);
        Ok(FamilySpec::Quantized { density: DensitySpec::parse(s)? })
    }

    pub fn label(&self) -> String {
        match self {
            FamilySpec::Quantized { density } => {
                let name = serde_json::to_value(density)
                    .ok()
                    .and_then(|v| v.get("name").and_then(|n| n.as_str().map(str::to_string)))
                    .unwrap_or_else(|| "density".into());
                format!("quantized_{name}")
            }
            FamilySpec::PointMass => "point_mass".into(),
            FamilySpec::UniformRange { m } => format!("uniform_range_{m}"),
        }
    }

    pub fn instance(&self, d: usize, sigma: f64, radius_multiplier: f64) -> Result<LatticePmf> {
        let origin = IndexVector::zeros(d);
        match self {
            FamilySpec::Quantized { density } => {
                let f = density.with_dim(d)?.with_sigma(sigma).build()?;
                quantize_density(&f, &origin, QuantizeOptions { radius_multiplier, ..Default::default() })
            }
            FamilySpec::PointMass => LatticePmf::point_mass(origin),
            FamilySpec::UniformRange { m } => {
                if *m < 1 {
                    return invalid("uniform_range needs m >= 1");
                }
                let b = BoxDomain::new(origin, IndexVector(vec![m - 1; d]))?;
                make_uniform_on_set(&LatticeSet::from_box(&b))
            }
        }
    }

    fn is_isotropic_gaussian(&self) -> bool {
        matches!(self, FamilySpec::Quantized { density: DensitySpec::Gaussian { .. } })
    }
}

/// Numeric knobs of the checks; config documents may override any of them
/// by name.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    /// Largest EPI deficit `max(0, -Δ_n)` accepted at `sigma >= epi_min_sigma`.
    pub epi_floor: f64,
    pub epi_min_sigma: f64,
    /// `|h(S + U) - H(S)|` for a single uniform.
    pub diff_n1: f64,
    /// `δ <= diff_envelope * log σ̂ / σ̂` for `n >= 2`.
    pub diff_envelope: f64,
    pub ub_bound: f64,
    /// Relative distance of `max p sqrt(det Cov)` to `(2π)^{-d/2}`, isotropic
    /// Gaussian families only.
    pub ub_target_rel: f64,
    /// Largest `||Cov - σ̂² I|| / σ̂` before a point is flagged.
    pub isotropy: f64,
    pub entropy_tol: f64,
    pub radius_multiplier: f64,
    pub precheck_sigma: f64,
    pub envelope_tol: f64,
    /// Allowed increase in the monotone trend checks; entropies of
    /// multi-million-cell p.m.f.s carry rounding noise near `1e-12`.
    pub trend_slack: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            epi_floor: 1e-3,
            epi_min_sigma: 8.0,
            diff_n1: 1e-9,
            diff_envelope: 5.0,
            ub_bound: 1.0,
            ub_target_rel: 0.02,
            isotropy: 0.5,
            entropy_tol: 1e-8,
            radius_multiplier: 10.0,
            precheck_sigma: 1.0,
            envelope_tol: crate::convexity::DEFAULT_ENVELOPE_TOL,
            trend_slack: 1e-10,
        }
    }
}

impl Tolerances {
    pub fn resolve(overrides: &BTreeMap<String, f64>) -> Result<Self> {
        let mut t = Self::default();
        for (k, v) in overrides {
            let slot = match k.as_str() {
                "epi_floor" => &mut t.epi_floor,
                "epi_min_sigma" => &mut t.epi_min_sigma,
                "diff_n1" => &mut t.diff_n1,
                "diff_envelope" => &mut t.diff_envelope,
                "ub_bound" => &mut t.ub_bound,
                "ub_target_rel" => &mut t.ub_target_rel,
                "isotropy" => &mut t.isotropy,
                "entropy_tol" => &mut t.entropy_tol,
                "radius_multiplier" => &mut t.radius_multiplier,
                "precheck_sigma" => &mut t.precheck_sigma,
                "envelope_tol" => &mut t.envelope_tol,
                "trend_slack" => &mut t.trend_slack,
                other => return Err(LceError::Unknown { kind: "tolerance", name: other.to_string() }),
            };
            if !v.is_finite() {
                return invalid(format!("tolerance {k} must be finite"));
            }
            *slot = *v;
        }
        Ok(t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExploreConfig {
    /// Accepted random p.m.f.s per dimension.
    pub samples: usize,
    /// Supports live in `{0, ..., support}^d`.
    pub support: i64,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        Self { samples: 100, support: 4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub family: FamilySpec,
    pub dims: Vec<usize>,
    pub sigmas: Vec<f64>,
    pub n_values: Vec<usize>,
    pub checks: Vec<String>,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(default)]
    pub explore: ExploreConfig,
    /// `d = 3` sweeps need a lot of memory; they must be asked for.
    #[serde(default)]
    pub allow_d3: bool,
}

impl ExperimentConfig {
    /// Quantized isotropic Gaussians, `d ∈ {1, 2}`, `σ ∈ {4, 8, 16, 32}`,
    /// `n ∈ {1, 2}`, every check.
    pub fn default_suite(seed: u64) -> Self {
        Self {
            family: FamilySpec::Quantized { density: DensitySpec::Gaussian { sigma: 1.0, dim: 1 } },
            dims: vec![1, 2],
            sigmas: vec![4.0, 8.0, 16.0, 32.0],
            n_values: vec![1, 2],
            checks: CHECK_IDS.iter().map(|s| s.to_string()).collect(),
            tolerances: BTreeMap::new(),
            seed,
            output: None,
            csv: None,
            explore: ExploreConfig::default(),
            allow_d3: false,
        }
    }

    pub fn validate(&self) -> Result<Tolerances> {
        if self.dims.is_empty() || self.sigmas.is_empty() || self.n_values.is_empty() {
            return invalid("dims, sigmas and n_values must be nonempty");
        }
        let max_d = if self.allow_d3 { 3 } else { 2 };
        if let Some(d) = self.dims.iter().find(|d| **d == 0 || **d > max_d) {
            return invalid(format!("dimension {d} not allowed (max {max_d}; set allow_d3 for d = 3)"));
        }
        if self.sigmas.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return invalid("sigmas must be positive and finite");
        }
        if self.n_values.iter().any(|n| *n == 0) {
            return invalid("n_values must be >= 1");
        }
        if let Some(c) = self.checks.iter().find(|c| !CHECK_IDS.contains(&c.as_str())) {
            return Err(LceError::Unknown { kind: "check", name: c.clone() });
        }
        Tolerances::resolve(&self.tolerances)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    Flagged,
}

impl CheckStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::Flagged => "flagged",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub check_id: String,
    pub family: String,
    pub d: usize,
    pub sigma: f64,
    pub n: usize,
    pub measured: BTreeMap<String, f64>,
    /// Upper bounds: the check passes iff `measured[k] <= bound[k]` for every key.
    pub bound: BTreeMap<String, f64>,
    /// Key reported in the CSV columns.
    pub primary: String,
    pub status: CheckStatus,
    /// Why the point is outside the hypotheses of the statement it checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Full p.m.f. behind a failing exploration sample.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<PmfDocument>,
    pub runtime_ms: u64,
}

impl CheckResult {
    fn new(check_id: &str, family: &str, d: usize, sigma: f64, n: usize, primary: &str) -> Self {
        Self {
            check_id: check_id.to_string(),
            family: family.to_string(),
            d,
            sigma,
            n,
            measured: BTreeMap::new(),
            bound: BTreeMap::new(),
            primary: primary.to_string(),
            status: CheckStatus::Pass,
            flag: None,
            error: None,
            witness: None,
            runtime_ms: 0,
        }
    }

    /// Non-finite values are dropped; a bounded key without a measurement fails.
    fn measure(&mut self, key: &str, v: f64) {
        if v.is_finite() {
            self.measured.insert(key.to_string(), v);
        }
    }

    fn limit(&mut self, key: &str, v: f64) {
        self.bound.insert(key.to_string(), v);
    }

    /// Status implied by the flag, error, measured and bound fields.
    pub fn recomputed_status(&self) -> CheckStatus {
        if self.error.is_some() {
            return CheckStatus::Fail;
        }
        if self.flag.is_some() {
            return CheckStatus::Flagged;
        }
        let ok = self.bound.iter().all(|(k, b)| self.measured.get(k).is_some_and(|m| m <= b));
        if ok {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        }
    }

    fn finish(mut self, started: Instant) -> Self {
        self.status = self.recomputed_status();
        self.runtime_ms = started.elapsed().as_millis() as u64;
        self
    }

    fn failed(mut self, e: LceError, started: Instant) -> Self {
        self.error = Some(e.to_string());
        self.finish(started)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub total: usize,
    pub pass: usize,
    pub fail: usize,
    pub flagged: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub tool_version: String,
    pub config: ExperimentConfig,
    pub results: Vec<CheckResult>,
    pub summary: Summary,
}

pub const CSV_HEADER: [&str; 9] = ["check_id", "family", "d", "sigma", "n", "measured", "bound", "status", "runtime_ms"];

impl ReportDocument {
    fn assemble(config: ExperimentConfig, results: Vec<CheckResult>) -> Self {
        let mut summary = Summary { total: results.len(), ..Default::default() };
        for r in &results {
            match r.status {
                CheckStatus::Pass => summary.pass += 1,
                CheckStatus::Fail => summary.fail += 1,
                CheckStatus::Flagged => summary.flagged += 1,
            }
        }
        Self { tool_version: env!("CARGO_PKG_VERSION").to_string(), config, results, summary }
    }

    pub fn has_failures(&self) -> bool {
        self.summary.fail > 0
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// The document with every runtime field zeroed.
    pub fn without_runtime(&self) -> Self {
        let mut r = self.clone();
        for c in &mut r.results {
            c.runtime_ms = 0;
        }
        r
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER)?;
        for r in &self.results {
            let opt = |v: Option<&f64>| v.map(|x| x.to_string()).unwrap_or_default();
            w.write_record([
                r.check_id.clone(),
                r.family.clone(),
                r.d.to_string(),
                r.sigma.to_string(),
                r.n.to_string(),
                opt(r.measured.get(&r.primary)),
                opt(r.bound.get(&r.primary)),
                r.status.as_str().to_string(),
                r.runtime_ms.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| LceError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Runs the checks and writes the configured output files.
pub fn emit_report(config: &ExperimentConfig) -> Result<ReportDocument> {
    let report = run_config(config)?;
    if let Some(p) = &config.output {
        std::fs::write(p, report.to_json()?)?;
    }
    if let Some(p) = &config.csv {
        std::fs::write(p, report.to_csv()?)?;
    }
    Ok(report)
}

/// Executes every listed check; results follow the config order (check,
/// then dimension, then sigma, then n).
pub fn run_config(config: &ExperimentConfig) -> Result<ReportDocument> {
    let tol = config.validate()?;
    let wants = |id: &str| config.checks.iter().any(|c| c == id);
    let mut results = Vec::new();
    let family = config.family.label();
    let sweep_checks = [CHECK_EPI, CHECK_DIFF_APPROX, CHECK_DISCRETE_UB];
    if sweep_checks.iter().any(|c| wants(c)) {
        let prechecks: Vec<Precheck> =
            config.dims.par_iter().map(|&d| precheck(&config.family, d, &tol)).collect();
        let points: Vec<(usize, f64)> =
            config.dims.iter().flat_map(|&d| config.sigmas.iter().map(move |&s| (d, s))).collect();
        let per_point: Vec<PointResults> = points
            .par_iter()
            .map(|&(d, s)| {
                let pre = &prechecks[config.dims.iter().position(|x| *x == d).unwrap()];
                sweep_point(config, &tol, &family, pre, d, s, &wants)
            })
            .collect();
        for id in sweep_checks.iter().filter(|c| wants(c)) {
            for &d in &config.dims {
                let mut mine: Vec<CheckResult> = Vec::new();
                for (pt, pr) in points.iter().zip(&per_point) {
                    if pt.0 == d {
                        if let Some(v) = pr.get(*id) {
                            mine.extend(v.iter().cloned());
                        }
                    }
                }
                let trend = trend_results(*id, &mine, &family, d, &config.n_values, &tol);
                results.extend(mine);
                results.extend(trend);
            }
        }
    }
    if wants(CHECK_EXPLORE) {
        for &d in &config.dims {
            results.extend(explore_self_convolution(d, config.seed, &config.explore, &tol));
        }
    }
    Ok(ReportDocument::assemble(config.clone(), results))
}

struct Precheck {
    gap: Option<f64>,
    flag: Option<String>,
}

/// Extensibility of the family's smallest member, the statements' hypothesis.
fn precheck(family: &FamilySpec, d: usize, tol: &Tolerances) -> Precheck {
    let sigma = tol.precheck_sigma;
    let p = match family.instance(d, sigma, tol.radius_multiplier) {
        Ok(p) => p,
        Err(e) => return Precheck { gap: None, flag: Some(format!("precheck instance failed: {e}")) },
    };
    match is_log_concave_extensible(&p, tol.envelope_tol, ArithmeticMode::Float) {
        Ok(r) if r.is_extensible => Precheck { gap: Some(r.max_gap()), flag: None },
        Ok(r) => Precheck {
            gap: Some(r.max_gap()),
            flag: Some(format!("member at sigma={sigma} is not log-concave extensible (gap {:e})", r.max_gap())),
        },
        Err(LceError::LpBudget { .. }) => Precheck { gap: None, flag: None },
        Err(e) => Precheck { gap: None, flag: Some(format!("precheck failed: {e}")) },
    }
}

type PointResults = BTreeMap<&'static str, Vec<CheckResult>>;

fn rate_statistic(v: f64, sigma_hat: f64) -> f64 {
    if sigma_hat > 1.0 {
        v * sigma_hat / sigma_hat.ln()
    } else {
        f64::NAN
    }
}

fn hypothesis_flag(pre: &Precheck, sigma_hat: f64, isotropy: f64, tol: &Tolerances) -> Option<String> {
    if let Some(f) = &pre.flag {
        return Some(f.clone());
    }
    if !(sigma_hat > 0.0) {
        return Some("degenerate covariance (sigma_hat = 0)".into());
    }
    if isotropy > tol.isotropy {
        return Some(format!("not almost isotropic (||Cov - s^2 I|| / s = {isotropy})"));
    }
    None
}

fn sweep_point(
    config: &ExperimentConfig,
    tol: &Tolerances,
    family: &str,
    pre: &Precheck,
    d: usize,
    sigma: f64,
    wants: &dyn Fn(&str) -> bool,
) -> PointResults {
    let mut out: PointResults = BTreeMap::new();
    let started = Instant::now();
    let base = match config.family.instance(d, sigma, tol.radius_multiplier) {
        Ok(p) => p,
        Err(e) => {
            for id in [CHECK_EPI, CHECK_DIFF_APPROX, CHECK_DISCRETE_UB].iter().filter(|c| wants(c)) {
                let r = CheckResult::new(id, family, d, sigma, 1, "instance");
                out.entry(id).or_default().push(r.failed(LceError::InvalidInput(e.to_string()), started));
            }
            return out;
        }
    };
    // S_1, ..., S_{n_max + 1}, built lazily by repeated convolution.
    let n_needed = {
        let mut m = 1;
        if wants(CHECK_EPI) {
            m = m.max(config.n_values.iter().max().unwrap() + 1);
        }
        if wants(CHECK_DIFF_APPROX) {
            m = m.max(*config.n_values.iter().max().unwrap());
        }
        m
    };
    let conv = ConvolveOptions::with_method(ConvolveMethod::Auto);
    let mut sums: Vec<Result<LatticePmf>> = vec![Ok(base.clone())];
    for _ in 1..n_needed {
        let next = match sums.last().unwrap() {
            Ok(s) => convolve(s, &base, &conv),
            Err(e) => Err(LceError::InvalidInput(format!("earlier sum failed: {e}"))),
        };
        sums.push(next);
    }
    let sum = |n: usize| -> Result<&LatticePmf> {
        sums[n - 1].as_ref().map_err(|e| LceError::InvalidInput(e.to_string()))
    };
    if wants(CHECK_EPI) {
        for &n in &config.n_values {
            let t = Instant::now();
            let mut r = CheckResult::new(CHECK_EPI, family, d, sigma, n, "deficit");
            let res = (|| -> Result<()> {
                let (sn, sn1) = (sum(n)?, sum(n + 1)?);
                let delta = shannon_entropy(sn1)? - shannon_entropy(sn)?
                    - 0.5 * d as f64 * ((n as f64 + 1.0) / n as f64).ln();
                let m = discrete_moments(sn);
                let iso = isotropy_score_of(&m.cov).map(|s| s.normalized).unwrap_or(f64::INFINITY);
                r.measure("delta", delta);
                r.measure("deficit", (-delta).max(0.0));
                r.measure("sigma_hat", m.sigma_hat);
                r.measure("rate", rate_statistic(delta, m.sigma_hat));
                r.measure("isotropy", iso);
                if let Some(g) = pre.gap {
                    r.measure("precheck_gap", g);
                }
                if sigma >= tol.epi_min_sigma {
                    r.limit("deficit", tol.epi_floor);
                }
                r.flag = hypothesis_flag(pre, m.sigma_hat, iso, tol);
                Ok(())
            })();
            let r = match res {
                Ok(()) => r.finish(t),
                Err(e) => r.failed(e, t),
            };
            out.entry(CHECK_EPI).or_default().push(r);
        }
    }
    if wants(CHECK_DIFF_APPROX) {
        for &n in &config.n_values {
            let t = Instant::now();
            let mut r = CheckResult::new(CHECK_DIFF_APPROX, family, d, sigma, n, "delta");
            let res = (|| -> Result<()> {
                let sn = sum(n)?;
                let opts = EntropyOptions { tol: tol.entropy_tol, ..Default::default() };
                let h = differential_entropy_report(sn, n, &opts)?;
                let big_h = shannon_entropy(sn)?;
                let delta = (h.value - big_h).abs();
                let m = discrete_moments(sn);
                let iso = isotropy_score_of(&m.cov).map(|s| s.normalized).unwrap_or(f64::INFINITY);
                r.measure("delta", delta);
                r.measure("h", h.value);
                r.measure("shannon", big_h);
                r.measure("skipped_bound", h.skipped_bound);
                r.measure("sigma_hat", m.sigma_hat);
                r.measure("rate", rate_statistic(delta, m.sigma_hat));
                r.measure("isotropy", iso);
                if n == 1 {
                    r.limit("delta", tol.diff_n1);
                } else if m.sigma_hat > 1.0 {
                    r.limit("delta", tol.diff_envelope * m.sigma_hat.ln() / m.sigma_hat);
                }
                r.flag = hypothesis_flag(pre, m.sigma_hat, iso, tol);
                Ok(())
            })();
            let r = match res {
                Ok(()) => r.finish(t),
                Err(e) => r.failed(e, t),
            };
            out.entry(CHECK_DIFF_APPROX).or_default().push(r);
        }
    }
    if wants(CHECK_DISCRETE_UB) {
        let t = Instant::now();
        let mut r = CheckResult::new(CHECK_DISCRETE_UB, family, d, sigma, 1, "ratio_ub");
        let m = discrete_moments(&base);
        let det = m.cov.det();
        let iso = isotropy_score_of(&m.cov).map(|s| s.normalized).unwrap_or(f64::INFINITY);
        if det > 0.0 {
            let ratio = m.max_value * det.sqrt();
            r.measure("ratio_ub", ratio);
            r.limit("ratio_ub", tol.ub_bound);
            if config.family.is_isotropic_gaussian() {
                let target = (2.0 * std::f64::consts::PI).powf(-(d as f64) / 2.0);
                r.measure("target_rel_err", (ratio / target - 1.0).abs());
                r.limit("target_rel_err", tol.ub_target_rel);
            }
        }
        if d == 1 {
            if let Ok(v) = max_times_sqrt_one_plus_4var(&base) {
                r.measure("max_times_sqrt_one_plus_4var", v);
            }
        }
        r.measure("sigma_hat", m.sigma_hat);
        r.measure("isotropy", iso);
        r.flag = hypothesis_flag(pre, m.sigma_hat, iso, tol);
        out.entry(CHECK_DISCRETE_UB).or_default().push(r.finish(t));
    }
    out
}

/// Cross-sigma checks for one dimension: EPI deficits non-increasing in
/// sigma; for `n >= 2` the diff-approx rate statistic at the two largest
/// sigmas is at most its value at the smallest and non-increasing between them.
fn trend_results(
    id: &str,
    points: &[CheckResult],
    family: &str,
    d: usize,
    n_values: &[usize],
    tol: &Tolerances,
) -> Vec<CheckResult> {
    let mut out = Vec::new();
    for &n in n_values {
        let mut pts: Vec<&CheckResult> =
            points.iter().filter(|r| r.n == n && r.error.is_none() && r.flag.is_none()).collect();
        pts.sort_by(|a, b| a.sigma.total_cmp(&b.sigma));
        let t = Instant::now();
        match id {
            CHECK_EPI => {
                let deficits: Vec<f64> = pts.iter().filter_map(|r| r.measured.get("deficit").copied()).collect();
                if deficits.len() < 2 {
                    continue;
                }
                let mut r =
                    CheckResult::new("epi_trend", family, d, pts.last().unwrap().sigma, n, "deficit_increase");
                let inc = deficits.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
                r.measure("deficit_increase", inc);
                r.limit("deficit_increase", tol.trend_slack);
                out.push(r.finish(t));
            }
            CHECK_DIFF_APPROX if n >= 2 => {
                let rates: Vec<f64> = pts.iter().filter_map(|r| r.measured.get("rate").copied()).collect();
                if rates.len() < 2 || rates.len() != pts.len() {
                    continue;
                }
                let mut r =
                    CheckResult::new("diff_approx_trend", family, d, pts.last().unwrap().sigma, n, "rate_excess");
                let k = rates.len();
                let top = &rates[k.saturating_sub(2).max(1)..];
                let excess = top.iter().map(|v| v - rates[0]).fold(f64::NEG_INFINITY, f64::max);
                r.measure("rate_excess", excess);
                r.limit("rate_excess", tol.trend_slack);
                if k >= 3 {
                    r.measure("rate_increase_top", rates[k - 1] - rates[k - 2]);
                    r.limit("rate_increase_top", tol.trend_slack);
                }
                out.push(r.finish(t));
            }
            _ => {}
        }
    }
    out
}

/// `exp(-V)` on `{0..k}^d` cut by up to two random half-spaces, with `V` a
/// max of affine functions plus a quadratic; half the draws get pointwise
/// noise, which usually breaks extensibility and is then rejected.
pub fn random_log_concave_candidate(d: usize, k: i64, rng: &mut ChaCha8Rng) -> Result<LatticePmf> {
    let domain = BoxDomain::new(IndexVector::zeros(d), IndexVector(vec![k; d]))?;
    loop {
        let mut cuts: Vec<(Vec<i64>, i64)> = Vec::new();
        for _ in 0..rng.gen_range(0..=2) {
            let a: Vec<i64> = (0..d).map(|_| rng.gen_range(-2..=2)).collect();
            if a.iter().all(|x| *x == 0) {
                continue;
            }
            let span: i64 = a.iter().map(|x| x.abs() * k).sum();
            let base: i64 = a.iter().filter(|x| **x < 0).map(|x| x * k).sum();
            cuts.push((a, base + rng.gen_range(span / 3..=span)));
        }
        let pieces: Vec<(Vec<f64>, f64)> = (0..rng.gen_range(1..=3))
            .map(|_| ((0..d).map(|_| rng.gen_range(-1.5..1.5)).collect(), rng.gen_range(-1.0..1.0)))
            .collect();
        let curvature = rng.gen_range(0.0..0.5);
        let center: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..k as f64)).collect();
        let noisy = rng.gen_bool(0.5);
        let mut values = Vec::with_capacity(domain.cell_count());
        let mut support = 0;
        domain.for_each_point(|_, x| {
            let inside = cuts.iter().all(|(a, b)| a.iter().zip(x).map(|(ai, xi)| ai * xi).sum::<i64>() <= *b);
            if !inside {
                values.push(0.0);
                return;
            }
            let affine = pieces
                .iter()
                .map(|(a, b)| a.iter().zip(x).map(|(ai, xi)| ai * *xi as f64).sum::<f64>() + b)
                .fold(f64::NEG_INFINITY, f64::max);
            let quad: f64 = x.iter().zip(&center).map(|(xi, c)| (*xi as f64 - c).powi(2)).sum();
            values.push(0.0);
            let noise = if noisy { rng.gen_range(0.0..0.5) } else { 0.0 };
            *values.last_mut().unwrap() = (-(affine + curvature * quad + noise)).exp();
            support += 1;
        });
        if support < 2 {
            continue;
        }
        let total: f64 = values.iter().sum();
        values.iter_mut().for_each(|v| *v /= total);
        return LatticePmf::new(domain.clone(), values, 0.0)?.renormalized();
    }
}

/// Random extensible p.m.f.s and the extensibility of their 2- and 3-fold
/// self-convolutions. A non-extensible self-sum fails its result and carries
/// the p.m.f. as a witness.
pub fn explore_self_convolution(d: usize, seed: u64, cfg: &ExploreConfig, tol: &Tolerances) -> Vec<CheckResult> {
    let family = format!("random_log_concave_{}", cfg.support);
    let t = Instant::now();
    let mut tally = CheckResult::new(CHECK_EXPLORE, &family, d, 0.0, 0, "counterexamples");
    if d > 2 {
        tally.flag = Some("exploration runs for d <= 2 only".into());
        return vec![tally.finish(t)];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(d as u64));
    let mut accepted = Vec::new();
    let mut rejected = 0usize;
    let max_attempts = 50 * cfg.samples.max(1);
    while accepted.len() < cfg.samples && accepted.len() + rejected < max_attempts {
        let p = match random_log_concave_candidate(d, cfg.support, &mut rng) {
            Ok(p) => p,
            Err(e) => return vec![tally.failed(e, t)],
        };
        match is_log_concave_extensible(&p, tol.envelope_tol, ArithmeticMode::Float) {
            Ok(r) if r.is_extensible => accepted.push(p),
            Ok(_) => rejected += 1,
            Err(e) => return vec![tally.failed(e, t)],
        }
    }
    let conv = ConvolveOptions::with_method(ConvolveMethod::Direct);
    let lp = ConvexityOptions::default();
    let mut results: Vec<CheckResult> = accepted
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let t = Instant::now();
            let m = discrete_moments(p);
            let mut r = CheckResult::new(CHECK_EXPLORE, &family, d, m.sigma_hat, 3, "gap3");
            r.measure("sample", i as f64);
            r.measure("support", p.support().len() as f64);
            let res = (|| -> Result<()> {
                let p2 = convolve(p, p, &conv)?;
                let p3 = convolve(&p2, p, &conv)?;
                for (key, q) in [("gap2", &p2), ("gap3", &p3)] {
                    let rep = crate::convexity::is_log_concave_extensible_with(
                        q,
                        tol.envelope_tol,
                        ArithmeticMode::Float,
                        &lp,
                    )?;
                    r.measure(key, rep.max_gap());
                    r.limit(key, tol.envelope_tol);
                }
                Ok(())
            })();
            let mut r = match res {
                Ok(()) => r.finish(t),
                Err(e) => r.failed(e, t),
            };
            if r.status == CheckStatus::Fail && r.error.is_none() {
                r.witness = Some(p.to_document());
            }
            r
        })
        .collect();
    let counterexamples = results.iter().filter(|r| r.status == CheckStatus::Fail && r.witness.is_some()).count();
    tally.measure("accepted", accepted.len() as f64);
    tally.measure("rejected", rejected as f64);
    tally.measure("counterexamples", counterexamples as f64);
    results.insert(0, tally.finish(t));
    results
}
