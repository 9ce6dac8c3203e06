use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use lce_core::bridge::{self, BridgeOptions};
use lce_core::convexity::{self, ArithmeticMode, ConvexityOptions, DEFAULT_ENVELOPE_TOL};
use lce_core::geometry::{self, ConvexBodySpec, RadialMode};
use lce_core::harness::{self, ExperimentConfig, ExploreConfig, FamilySpec};
use lce_core::moments;
use lce_core::smoothing::{self, EntropyOptions};
use lce_core::{ConvolveMethod, ConvolveOptions, DensitySpec, LatticePmf, LatticeSet};

#[derive(Parser)]
#[command(name = "lce", version, about = "Discrete log-concavity on Z^d: constructions, decisions and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a p.m.f. from a family (quantized density, point mass, uniform range) or a lattice set.
    Gen {
        /// `gaussian`, `laplace_product`, `point_mass`, `uniform_range{m=25}`, ...
        #[arg(long, default_value = "gaussian")]
        family: String,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// Half-width of the quantization box in units of sigma.
        #[arg(long, default_value_t = 12.0)]
        radius: f64,
        /// Uniform distribution on the points of this lattice-set document instead.
        #[arg(long, conflicts_with = "family")]
        uniform_set: Option<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Convolve two p.m.f.s, or take an n-fold self-convolution.
    Convolve {
        #[arg(long)]
        pmf: PathBuf,
        #[arg(long, conflicts_with = "power")]
        with: Option<PathBuf>,
        #[arg(long)]
        power: Option<usize>,
        #[arg(long, default_value = "auto")]
        method: String,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Shannon entropy in nats.
    Entropy {
        #[arg(long)]
        pmf: PathBuf,
    },
    /// Mass, mean, covariance, maximum and sigma-hat; `--bounds` adds the bound ratios.
    Moments {
        #[arg(long)]
        pmf: PathBuf,
        #[arg(long)]
        bounds: bool,
    },
    /// Z^d-convexity, log-concave extensibility, or self-sum convexity.
    Check {
        /// P.m.f. document; its support is used by the set modes.
        #[arg(long, required_unless_present = "set")]
        pmf: Option<PathBuf>,
        /// Lattice-set document (`dim`, `points`).
        #[arg(long)]
        set: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = CheckMode::Extensible)]
        mode: CheckMode,
        #[arg(long, default_value_t = DEFAULT_ENVELOPE_TOL)]
        tol: f64,
        /// Decide in exact rational arithmetic.
        #[arg(long)]
        exact: bool,
        #[arg(long, default_value_t = 4)]
        n_max: usize,
    },
    /// Differential entropy of S + U_1 + ... + U_n.
    SmoothEntropy {
        #[arg(long)]
        pmf: PathBuf,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 8)]
        order: usize,
        /// Also report the summed per-cell deviation sup |f_n - p(k)|.
        #[arg(long)]
        deviation: bool,
    },
    /// Convex-body and Ball-body geometry checks.
    Geom {
        /// `cube{d=2,side=1}`, `ball{d=2,r=1}`, `simplex{d=2}`, `ellipsoid{axes=1;2}`, `hpoly{..}`, `vpoly{..}`.
        #[arg(long, default_value = "cube{d=2}")]
        body: String,
        #[arg(long, value_enum)]
        check: GeomCheck,
        /// Density for the ball-body and inclusion checks.
        #[arg(long, default_value = "gaussian{sigma=1,dim=2}")]
        density: String,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, default_value_t = 3.0)]
        q: f64,
        #[arg(long, default_value_t = 64)]
        directions: usize,
        /// Monte Carlo samples for bodies without exact second moments.
        #[arg(long, default_value_t = 200_000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Isotropic constant used by the radial-integral constants.
        #[arg(long, default_value_t = 1.0)]
        l_d: f64,
    },
    /// Lattice sums against integrals for a density over a sigma sweep.
    Bridge {
        #[arg(long, default_value = "gaussian{dim=1}")]
        density: String,
        /// Comma-separated sigmas.
        #[arg(long, value_delimiter = ',', default_value = "2,4,8")]
        sweep: Vec<f64>,
        /// Half-width of the summation box in units of sigma.
        #[arg(long, default_value_t = 12.0)]
        box_mult: f64,
        /// Sub-intervals per axis for densities without closed-form moments.
        #[arg(long)]
        quadrature_pieces: Option<usize>,
        /// Add the argmax-profile moment (d = 2).
        #[arg(long)]
        argmax: bool,
        /// Add the tail concentration check with this L_d.
        #[arg(long)]
        concentration: Option<f64>,
    },
    /// Run an experiment config document; exit code 1 if any check fails.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run a sweep described by flags; exit code 1 if any check fails.
    Sweep {
        #[arg(long, default_value = "gaussian")]
        family: String,
        #[arg(long, value_delimiter = ',', default_value = "1,2")]
        dims: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "4,8,16,32")]
        sigmas: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1,2")]
        n: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "epi,diff_approx,discrete_ub,explore_self_convolution")]
        checks: Vec<String>,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        explore_samples: usize,
        /// Allow d = 3 (memory hungry).
        #[arg(long)]
        d3: bool,
        /// Write the expanded config document here and exit.
        #[arg(long)]
        emit_config: Option<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum CheckMode {
    Zconvex,
    Extensible,
    Selfsum,
}

#[derive(Clone, Copy, ValueEnum)]
enum GeomCheck {
    Kls,
    Radius,
    Ballbody,
    Inclusions,
    Radial,
}

fn emit(value: &impl Serialize, out: Option<&PathBuf>) -> Result<()> {
    let s = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => std::fs::write(p, s + "\n").with_context(|| format!("writing {}", p.display())),
        None => print_text(&s),
    }
}

fn print_text(s: &str) -> Result<()> {
    match writeln!(std::io::stdout().lock(), "{s}") {
        // A closed pipe (`lce ... | head`) is not an error.
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn read_pmf(p: &PathBuf) -> Result<LatticePmf> {
    LatticePmf::read(p).with_context(|| format!("reading p.m.f. {}", p.display()))
}

fn read_set(p: &PathBuf) -> Result<LatticeSet> {
    let s = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
    Ok(LatticeSet::from_json(&s)?)
}

fn report_and_exit(report: &lce_core::ReportDocument, out: Option<&PathBuf>, csv: Option<&PathBuf>) -> Result<ExitCode> {
    if let Some(p) = csv {
        std::fs::write(p, report.to_csv()?).with_context(|| format!("writing {}", p.display()))?;
    }
    match out {
        Some(p) => std::fs::write(p, report.to_json()? + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => print_text(&report.to_json()?)?,
    }
    let s = report.summary;
    eprintln!("{} checks: {} pass, {} fail, {} flagged", s.total, s.pass, s.fail, s.flagged);
    Ok(if report.has_failures() { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Gen { family, dim, sigma, radius, uniform_set, out } => {
            let p = match uniform_set {
                Some(path) => lce_core::make_uniform_on_set(&read_set(&path)?)?,
                None => FamilySpec::parse(&family)?.instance(dim, sigma, radius)?,
            };
            match out {
                Some(path) => p.write(&path)?,
                None => print_text(&p.to_json()?)?,
            }
        }
        Command::Convolve { pmf, with, power, method, out } => {
            let p = read_pmf(&pmf)?;
            let opts = ConvolveOptions::with_method(method.parse::<ConvolveMethod>()?);
            let r = match (with, power) {
                (Some(q), _) => lce_core::convolve(&p, &read_pmf(&q)?, &opts)?,
                (None, Some(n)) => lce_core::self_convolve(&p, n, &opts)?,
                (None, None) => bail!("give --with FILE or --power N"),
            };
            match out {
                Some(path) => r.write(&path)?,
                None => print_text(&r.to_json()?)?,
            }
        }
        Command::Entropy { pmf } => {
            let p = read_pmf(&pmf)?;
            emit(&json!({ "entropy": moments::shannon_entropy(&p)?, "deficit": p.deficit() }), None)?;
        }
        Command::Moments { pmf, bounds } => {
            let p = read_pmf(&pmf)?;
            let m = moments::discrete_moments(&p);
            if bounds {
                emit(&json!({ "moments": m, "bounds": moments::entropy_covariance_bounds(&p)? }), None)?;
            } else {
                emit(&m, None)?;
            }
        }
        Command::Check { pmf, set, mode, tol, exact, n_max } => {
            let arith = if exact { ArithmeticMode::Exact } else { ArithmeticMode::Float };
            let support = || -> Result<LatticeSet> {
                match (&set, &pmf) {
                    (Some(s), _) => read_set(s),
                    (None, Some(p)) => Ok(read_pmf(p)?.support()),
                    (None, None) => bail!("give --pmf or --set"),
                }
            };
            match mode {
                CheckMode::Zconvex => emit(&convexity::is_zd_convex(&support()?)?, None)?,
                CheckMode::Selfsum => emit(&convexity::check_self_sum_convexity(&support()?, n_max)?, None)?,
                CheckMode::Extensible => {
                    let Some(path) = pmf else { bail!("extensibility needs --pmf") };
                    let p = read_pmf(&path)?;
                    let r =
                        convexity::is_log_concave_extensible_with(&p, tol, arith, &ConvexityOptions::default())?;
                    emit(&r, None)?;
                }
            }
        }
        Command::SmoothEntropy { pmf, n, tol, order, deviation } => {
            let p = read_pmf(&pmf)?;
            let h = smoothing::differential_entropy_report(&p, n, &EntropyOptions { order, tol, ..Default::default() })?;
            let shannon = moments::shannon_entropy(&p)?;
            let dev = if deviation { Some(smoothing::cell_deviation(&p, n)?) } else { None };
            emit(
                &json!({ "n": n, "entropy": h, "shannon": shannon, "difference": h.value - shannon, "deviation": dev }),
                None,
            )?;
        }
        Command::Geom { body, check, density, p, q, directions, samples, seed, l_d } => {
            let k = ConvexBodySpec::parse(&body)?;
            match check {
                GeomCheck::Kls => {
                    let k = k.volume_normalized()?;
                    let centered = {
                        let b = k.barycenter()?;
                        match &k {
                            ConvexBodySpec::Ellipsoid { .. } | ConvexBodySpec::HPolytope { .. } | ConvexBodySpec::VPolytope { .. } => {
                                translate(&k, &b)?
                            }
                            _ => k.clone(),
                        }
                    };
                    let mut rows = Vec::new();
                    for (i, u) in geometry::directions(centered.dim(), directions).iter().enumerate() {
                        match geometry::kls_second_moment_check(&centered, u) {
                            Ok(c) => rows.push(json!({ "direction": u, "check": c, "method": "exact" })),
                            Err(_) => {
                                let (c, mc) =
                                    geometry::kls_second_moment_check_mc(&centered, u, samples, seed + i as u64)?;
                                rows.push(json!({ "direction": u, "check": c, "monte_carlo": mc, "method": "monte_carlo" }))
                            }
                        }
                    }
                    let holds = rows.iter().all(|r| r["check"]["holds"] == json!(true));
                    emit(&json!({ "body": body, "holds": holds, "directions": rows }), None)?;
                }
                GeomCheck::Radius => emit(&geometry::radius_bounds_check(&k.volume_normalized()?)?, None)?,
                GeomCheck::Ballbody => {
                    let f = DensitySpec::parse(&density)?.build()?;
                    let dirs = geometry::directions(f.dim, directions);
                    emit(&geometry::ball_body_radial(&f, p, &dirs)?, None)?;
                }
                GeomCheck::Inclusions => {
                    let f = DensitySpec::parse(&density)?.build()?;
                    let dirs = geometry::directions(f.dim, directions);
                    emit(&geometry::check_inclusions(&f, p, q, &dirs)?, None)?;
                }
                GeomCheck::Radial => {
                    let f = DensitySpec::parse(&density)?.build()?;
                    let dirs = geometry::directions(f.dim, directions);
                    let mode = if f.known_cov.as_ref().is_some_and(|c| {
                        let ev = c.eigenvalues();
                        (ev[ev.len() - 1] - ev[0]).abs() > 1e-12 * ev[ev.len() - 1]
                    }) {
                        RadialMode::Anisotropic
                    } else {
                        RadialMode::Isotropic
                    };
                    emit(&geometry::radial_integral_bounds(&f, &dirs, l_d, mode)?, None)?;
                }
            }
        }
        Command::Bridge { density, sweep, box_mult, quadrature_pieces, argmax, concentration } => {
            let spec = DensitySpec::parse(&density)?;
            let opts = BridgeOptions { quadrature_pieces, ..Default::default() };
            let mut rows = Vec::new();
            for sigma in sweep {
                let f = spec.with_sigma(sigma).build()?;
                let b = bridge::default_box(&f, box_mult)?;
                let gaps = bridge::lattice_vs_integral_gaps_with(&f, &b, &opts)?;
                let mut row = json!({ "sigma": sigma, "gaps": gaps });
                if argmax {
                    row["argmax"] = serde_json::to_value(bridge::argmax_profile_moment(&f)?)?;
                }
                if let Some(l_d) = concentration {
                    let c = geometry::concentration_constant(f.dim, l_d);
                    row["concentration"] = serde_json::to_value(bridge::concentration_check(&f, c, 64, 32)?)?;
                }
                rows.push(row);
            }
            emit(&json!({ "density": density, "points": rows }), None)?;
        }
        Command::Verify { config, out, csv } => {
            let cfg = ExperimentConfig::read(&config).with_context(|| format!("reading {}", config.display()))?;
            let out = out.or_else(|| cfg.output.clone());
            let csv = csv.or_else(|| cfg.csv.clone());
            let report = harness::run_config(&cfg)?;
            return report_and_exit(&report, out.as_ref(), csv.as_ref());
        }
        Command::Sweep { family, dims, sigmas, n, checks, seed, explore_samples, d3, emit_config, out, csv } => {
            let cfg = ExperimentConfig {
                family: FamilySpec::parse(&family)?,
                dims,
                sigmas,
                n_values: n,
                checks,
                seed,
                explore: ExploreConfig { samples: explore_samples, ..Default::default() },
                allow_d3: d3,
                ..ExperimentConfig::default_suite(seed)
            };
            cfg.validate()?;
            if let Some(p) = emit_config {
                std::fs::write(&p, cfg.to_json()? + "\n")?;
                return Ok(ExitCode::SUCCESS);
            }
            let report = harness::run_config(&cfg)?;
            return report_and_exit(&report, out.as_ref(), csv.as_ref());
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// `K - b` for polytopes and ellipsoids.
fn translate(k: &ConvexBodySpec, b: &[f64]) -> Result<ConvexBodySpec> {
    Ok(match k {
        ConvexBodySpec::Ellipsoid { center, shape } => ConvexBodySpec::Ellipsoid {
            center: center.iter().zip(b).map(|(c, s)| c - s).collect(),
            shape: shape.clone(),
        },
        _ => {
            let poly = k.polytope()?;
            ConvexBodySpec::VPolytope {
                vertices: poly.vertices.iter().map(|v| v.iter().zip(b).map(|(x, s)| x - s).collect()).collect(),
            }
        }
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
