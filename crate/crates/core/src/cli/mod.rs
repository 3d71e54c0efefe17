//! Command-line front end: configuration, seeding, and CSV/JSON emission.
//!
//! Exit codes: 0 success, 1 failed verdict or runtime error, 2 configuration error.

pub mod report;

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bounds;
use crate::cones;
use crate::error::{KatokError, Result};
use crate::katok::KatokMap;
use crate::params::{EigenPoint, KatokParams, ParamsConfig, TorusPoint, LOG_LAMBDA};
use crate::symbolic::{self, PartitionConfig};
use crate::thermo::{self, Observable};
use crate::tower;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub params: ParamsConfig,
    pub seed: u64,
    pub partition: PartitionConfig,
    /// C̃ for the (Y4) distortion sums.
    pub distortion_sum_bound: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            params: ParamsConfig::default(),
            seed: 2024,
            partition: PartitionConfig::default(),
            distortion_sum_bound: 1.0,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| KatokError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| KatokError::Config(format!("{}: {e}", path.display())))
    }

    pub fn params(&self) -> Result<KatokParams> {
        KatokParams::from_config(&self.params)
    }

    /// `# alpha=… r0=… seed=… ode_tol=…`, the first line of every table.
    pub fn provenance(&self, command: &str) -> String {
        format!(
            "# katoklab {command} alpha={} r0={} seed={} ode_tol={:e}",
            self.params.alpha, self.params.r0, self.seed, self.params.ode_tol
        )
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "katoklab",
    version,
    about = "Numerical laboratory for the Katok map"
)]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (falls back to KATOKLAB_THREADS).
    #[arg(long, global = true, env = "KATOKLAB_THREADS")]
    pub threads: Option<usize>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides the configured slow-down radius.
    #[arg(long, global = true)]
    pub r0: Option<f64>,
    /// Overrides the configured exponent α.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Orbit of G_T2 (or G) from a point.
    Orbit {
        #[arg(long)]
        x: f64,
        #[arg(long)]
        y: f64,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        /// Iterate the slowed map G instead of G_T2.
        #[arg(long)]
        base: bool,
    },
    /// Slowed flow with its variational matrix, sampled at spacing dt.
    Flow {
        #[arg(long)]
        s1: f64,
        #[arg(long)]
        s2: f64,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 0.1)]
        dt: f64,
    },
    /// Cone invariance scan over D_r0.
    Cones {
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.5, 0.7, 0.9])]
        mu: Vec<f64>,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
    },
    /// Hessian, passage, pair, product and transit bounds.
    VerifyLemmas {
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0.5)]
        mu: f64,
    },
    /// Markov partition summary and the P-avoidance condition.
    Partition {
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        q: Option<usize>,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
    },
    /// S_n, the number of first-return words of length n.
    SnCount {
        #[arg(long)]
        nmax: Option<usize>,
    },
    /// Histogram of first-return times to P.
    ReturnTimes {
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = tower::RETURN_CAP)]
        cap: usize,
    },
    /// (Y3), (Y4) and K-stability verdicts from stable and unstable pairs.
    CheckTower {
        #[arg(long, default_value_t = 100)]
        pairs: usize,
    },
    /// Lyapunov exponent of the area from independent uniform starts.
    Lyapunov {
        #[arg(long, default_value_t = 100_000)]
        iters: usize,
        #[arg(long, default_value_t = 2)]
        runs: usize,
    },
    /// Pressure of the geometric potential from periodic orbits.
    Pressure {
        #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
        tmin: f64,
        #[arg(long, default_value_t = 2.0)]
        tmax: f64,
        #[arg(long, default_value_t = 12)]
        steps: usize,
        #[arg(long, default_value_t = 10)]
        nmax: usize,
    },
    /// Autocorrelation curves of the built-in observables.
    Correlations {
        #[arg(long, default_value_t = 50)]
        lags: usize,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
    },
    /// Normalized Birkhoff sums against the fitted Gaussian.
    Clt {
        #[arg(long, value_enum, default_value = "sin-y")]
        observable: ObservableArg,
        #[arg(long, value_delimiter = ',', default_values_t = vec![100, 1000, 10_000])]
        n: Vec<usize>,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
    },
    /// Every suite with a consolidated JSON verdict.
    Report {
        #[arg(long, value_enum, default_value = "full")]
        profile: report::Profile,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ObservableArg {
    CosX,
    SinY,
    CosXPlusY,
}

impl From<ObservableArg> for Observable {
    fn from(o: ObservableArg) -> Self {
        match o {
            ObservableArg::CosX => Observable::CosX,
            ObservableArg::SinY => Observable::SinY,
            ObservableArg::CosXPlusY => Observable::CosXPlusY,
        }
    }
}

/// What a command produced: the artifact text, a one-line summary, and its verdict.
struct Outcome {
    body: String,
    summary: String,
    ok: bool,
}

fn ok(body: String, summary: String) -> Outcome {
    Outcome {
        body,
        summary,
        ok: true,
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s
}

fn error_kind(e: &KatokError) -> &'static str {
    match e {
        KatokError::InvalidParams(_) | KatokError::Config(_) => "config",
        KatokError::ChartDomain { .. } | KatokError::ChartExit { .. } => "chart",
        KatokError::StepFailure { .. } => "step-failure",
        KatokError::RootBracket(_) | KatokError::Quadrature(_) => "numerics",
        KatokError::Blowup { .. } => "blowup",
        KatokError::HypothesisViolation(_) => "hypothesis",
        KatokError::NoValidElement { .. } => "no-valid-element",
        KatokError::InsufficientData(_) => "insufficient-data",
        KatokError::ReturnCapExceeded { .. } => "return-cap",
        KatokError::Convergence { .. } => "convergence",
        KatokError::NewtonDivergence { .. } => "newton",
        KatokError::CurveGrowth(_) => "curve-growth",
    }
}

fn exit_code(e: &KatokError) -> i32 {
    match e {
        KatokError::InvalidParams(_) | KatokError::Config(_) => 2,
        _ => 1,
    }
}

fn report_error(e: &KatokError) {
    let j = json!({ "error": error_kind(e), "message": e.to_string() });
    eprintln!("{j}");
}

/// Parses `argv` and runs; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(o) => {
            if let Err(e) = emit(&cli, &o.body) {
                report_error(&e);
                return 1;
            }
            eprintln!("{}", o.summary);
            if o.ok {
                0
            } else {
                1
            }
        }
        Err(e) => {
            report_error(&e);
            exit_code(&e)
        }
    }
}

fn emit(cli: &Cli, body: &str) -> Result<()> {
    match &cli.out {
        Some(path) => std::fs::write(path, body)
            .map_err(|e| KatokError::Config(format!("{}: {e}", path.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(body.as_bytes())
                .map_err(|e| KatokError::Config(format!("stdout: {e}")))
        }
    }
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(r0) = cli.r0 {
        cfg.params.r0 = r0;
    }
    if let Some(a) = cli.alpha {
        cfg.params.alpha = a;
    }
    cfg.params()?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<Outcome> {
    let cfg = resolve_config(cli)?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(KatokError::Config("--threads must be positive".into()));
        }
        // a second initialisation in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let params = cfg.params()?;
    let seed = cfg.seed;
    let name = command_name(&cli.command);
    let head = cfg.provenance(name);
    match &cli.command {
        Command::Orbit { x, y, steps, base } => {
            let map = KatokMap::new(params);
            let mut p = TorusPoint::new(*x, *y);
            let mut s = format!("{head}\nn,x,y,branch\n");
            for n in 0..=*steps {
                let ev = if *base {
                    map.apply_g(p)?
                } else {
                    map.apply_gt2(p)?
                };
                writeln!(
                    s,
                    "{n},{:.17e},{:.17e},{}",
                    p.x,
                    p.y,
                    branch_name(ev.branch)
                )
                .unwrap();
                p = ev.image;
            }
            Ok(ok(s, format!("orbit: {} points", steps + 1)))
        }
        Command::Flow { s1, s2, t, dt } => {
            let map = KatokMap::new(params);
            let states = map.flow.trace(EigenPoint::new(*s1, *s2), *t, *dt)?;
            let mut s = format!("{head}\nt,s1,s2,j11,j12,j21,j22\n");
            for st in &states {
                let j = st.jac;
                writeln!(
                    s,
                    "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                    st.t,
                    st.s.s1,
                    st.s.s2,
                    j[(0, 0)],
                    j[(0, 1)],
                    j[(1, 0)],
                    j[(1, 1)]
                )
                .unwrap();
            }
            Ok(ok(s, format!("flow: {} states", states.len())))
        }
        Command::Cones { mu, samples } => {
            let map = KatokMap::new(params);
            let scans = cones::scan_cone_invariance(&map, mu, *samples, seed)?;
            let fails: usize = scans.iter().map(|s| s.failures).sum();
            let body = to_json(
                &json!({ "provenance": head, "mu0": cones::mu0_analytic(cfg.params.alpha), "scans": scans }),
            );
            Ok(Outcome {
                body,
                summary: format!("cones: {fails} failures over {} points", samples),
                ok: fails == 0,
            })
        }
        Command::VerifyLemmas { samples, mu } => {
            let map = KatokMap::new(params.clone());
            let hess = bounds::check_hessian_bound(&params, *samples, seed);
            let pass = bounds::check_passages(&params, *samples, seed)?;
            let pairs = bounds::check_pairs(&params, *mu, *samples, seed)?;
            let prod = cones::check_product_bound(&map, *mu, *samples, seed, 1e-6)?;
            let transit = bounds::check_transit_bound(&params, *samples, seed)?;
            let verdicts = json!({
                "hessian": hess.passed(),
                "passages": pass.passed(),
                "pairs": pairs.passed(),
                "product": prod.violations == 0,
                "transit": transit.report.violations == 0,
            });
            let all = verdicts
                .as_object()
                .unwrap()
                .values()
                .all(|v| v.as_bool() == Some(true));
            let body = to_json(&json!({
                "provenance": head,
                "verdicts": verdicts,
                "hessian": hess,
                "passages": pass,
                "pairs": pairs,
                "product": prod,
                "transit": transit,
            }));
            Ok(Outcome {
                body,
                summary: format!(
                    "verify-lemmas: {}",
                    if all { "all hold" } else { "violations found" }
                ),
                ok: all,
            })
        }
        Command::Partition { delta, q, samples } => {
            let delta = delta.unwrap_or(cfg.partition.delta);
            let q = q.unwrap_or(cfg.partition.q);
            let part = symbolic::build_partition(delta, q, params.r0)?;
            let c10 = symbolic::verify_condition_10(&part, &params, q, *samples, seed)?;
            let root = symbolic::perron_root(&part.successors);
            let markov = part.check_markov();
            let p = &part.rectangles[part.p_index];
            let body = to_json(&json!({
                "provenance": head,
                "rectangles": part.len(),
                "max_diameter": part.max_diameter(),
                "perron_root": root,
                "markov": markov,
                "p_index": part.p_index,
                "p_area": p.area(),
                "p_vertices": p.vertices(),
                "condition_10": c10,
                "condition_10_p_holds": c10.p_holds(),
                "condition_10_collar_holds": c10.collar_holds(),
            }));
            Ok(Outcome {
                body,
                summary: format!(
                    "partition: {} rectangles, Perron root {root:.12}",
                    part.len()
                ),
                ok: markov.holds() && c10.p_holds(),
            })
        }
        Command::SnCount { nmax } => {
            let n_max = nmax.unwrap_or(cfg.partition.n_max);
            let part = symbolic::build_partition(cfg.partition.delta, cfg.partition.q, params.r0)?;
            let counts = symbolic::count_first_return_words(&part, n_max);
            let h = symbolic::estimate_h(&counts);
            let mut s = format!("{head}\nn,s_n\n");
            for c in &counts {
                writeln!(s, "{},{}", c.n, c.s_n).unwrap();
            }
            let summary = match &h {
                Ok(h) => format!("sn-count: h = {:.6}, log λ - h = {:.6}", h.h, h.margin),
                Err(e) => format!("sn-count: {e}"),
            };
            Ok(Outcome {
                body: s,
                summary,
                ok: h.map(|h| h.below_entropy()).unwrap_or(false),
            })
        }
        Command::ReturnTimes { samples, cap } => {
            let map = KatokMap::new(params);
            let (part, p) = tower::tower_base(map.r0())?;
            let rs = tower::sample_returns(&map, &part.rectangles[p], *samples, *cap, false, seed)?;
            let kac = tower::kac_report(&rs);
            let hist = tower::return_histogram(&rs)?;
            let mut s = format!("{head} cap={cap} discarded={}\ntau,count\n", rs.discarded);
            for (t, c) in &hist.counts {
                writeln!(s, "{t},{c}").unwrap();
            }
            Ok(ok(
                s,
                format!(
                    "return-times: mean τ {:.4} vs 1/m(P) {:.4} ({:+.2}%), {} discarded",
                    kac.mean_tau,
                    kac.inverse_area,
                    100.0 * kac.rel_error,
                    kac.discarded
                ),
            ))
        }
        Command::CheckTower { pairs } => {
            let map = KatokMap::new(params);
            let (part, p) = tower::tower_base(map.r0())?;
            let rep = tower::check_tower(
                &map,
                &part.rectangles[p],
                *pairs,
                cfg.distortion_sum_bound,
                seed,
            )?;
            let body = to_json(&json!({
                "provenance": head,
                "verdicts": {
                    "y3": rep.y3_holds(),
                    "y4": rep.y4_holds(),
                    "k_stable": rep.k_stable(0.2),
                },
                "a_stable": rep.a_stable,
                "a_unstable": rep.a_unstable,
                "distortion": rep.distortion,
                "k_half": rep.k_half,
                "k_full": rep.k_full,
                "markov_consistency": rep.markov_consistency,
                "stable": { "attempted": rep.stable.attempted, "infeasible": rep.stable.infeasible, "inconsistent": rep.stable.inconsistent, "kept": rep.stable.pairs.len() },
                "unstable": { "attempted": rep.unstable.attempted, "infeasible": rep.unstable.infeasible, "inconsistent": rep.unstable.inconsistent, "kept": rep.unstable.pairs.len() },
            }));
            Ok(Outcome {
                body,
                summary: format!(
                    "check-tower: a = {:.4}, κ = {:.4}, K = {:.4}",
                    rep.a_stable, rep.distortion.kappa, rep.k_full
                ),
                ok: rep.holds(),
            })
        }
        Command::Lyapunov { iters, runs } => {
            let map = KatokMap::new(params);
            let est = thermo::lyapunov_runs(&map, *iters, (*runs).max(1), seed)?;
            let chis: Vec<f64> = est.iter().map(|e| e.chi).collect();
            let chi = crate::numerics::stats::mean(&chis);
            let body = to_json(
                &json!({ "provenance": head, "runs": est, "chi": chi, "log_lambda": LOG_LAMBDA }),
            );
            Ok(ok(
                body,
                format!("lyapunov: χ = {chi:.6} (log λ = {LOG_LAMBDA:.6})"),
            ))
        }
        Command::Pressure {
            tmin,
            tmax,
            steps,
            nmax,
        } => {
            if *steps == 0 || tmax <= tmin {
                return Err(KatokError::Config(
                    "pressure grid needs tmax > tmin and steps > 0".into(),
                ));
            }
            let map = KatokMap::new(params);
            let grid: Vec<f64> = (0..=*steps)
                .map(|i| tmin + (tmax - tmin) * i as f64 / *steps as f64)
                .collect();
            let c = thermo::pressure_curve(&map, &grid, *nmax)?;
            let mut s = format!("{head} nmax={nmax}\nt");
            for n in &c.levels {
                write!(s, ",P_{n}").unwrap();
            }
            s.push_str(",P_extrap,drift\n");
            for (k, t) in c.t.iter().enumerate() {
                write!(s, "{t:.6}").unwrap();
                for row in &c.per_level {
                    write!(s, ",{:.12e}", row[k]).unwrap();
                }
                writeln!(s, ",{:.12e},{:.3e}", c.extrapolated[k], c.drift[k]).unwrap();
            }
            Ok(ok(
                s,
                format!(
                    "pressure: counts exact through n = {}, monotonicity defect {:.2e}, convexity defect {:.2e}",
                    c.counts_exact_through,
                    c.monotonicity_defect(),
                    c.convexity_defect()
                ),
            ))
        }
        Command::Correlations { lags, samples } => {
            let map = KatokMap::new(params);
            let curves = Observable::BUILTIN
                .iter()
                .map(|h| thermo::autocorrelation(&map, *h, *h, *lags, *samples, seed))
                .collect::<Result<Vec<_>>>()?;
            let mut s = format!("{head}\nlag");
            for c in &curves {
                write!(s, ",{0},{0}_noise", c.h1.name()).unwrap();
            }
            s.push('\n');
            for k in 0..=*lags {
                write!(s, "{k}").unwrap();
                for c in &curves {
                    write!(s, ",{:.12e},{:.6e}", c.c[k], c.noise[k]).unwrap();
                }
                s.push('\n');
            }
            Ok(ok(
                s,
                format!("correlations: {} observables, {} lags", curves.len(), lags),
            ))
        }
        Command::Clt {
            observable,
            n,
            samples,
        } => {
            let map = KatokMap::new(params);
            let rep = thermo::clt_diagnostic(&map, (*observable).into(), n, *samples, seed)?;
            let mut s = format!(
                "{head} observable={}\nn,variance,sup_distance\n",
                rep.h.name()
            );
            for l in &rep.levels {
                writeln!(s, "{},{:.12e},{:.12e}", l.n, l.variance, l.sup_distance).unwrap();
            }
            Ok(ok(
                s,
                format!(
                    "clt: sup-distance {:.4} at the largest n",
                    rep.final_distance()
                ),
            ))
        }
        Command::Report { profile } => {
            let rep = report::run(&cfg, *profile)?;
            let failed: Vec<usize> = rep
                .suites
                .iter()
                .filter(|s| !s.passed)
                .map(|s| s.suite)
                .collect();
            Ok(Outcome {
                body: to_json(&rep),
                summary: if failed.is_empty() {
                    "report: all suites pass".to_string()
                } else {
                    format!("report: failing suites {failed:?}")
                },
                ok: failed.is_empty(),
            })
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Orbit { .. } => "orbit",
        Command::Flow { .. } => "flow",
        Command::Cones { .. } => "cones",
        Command::VerifyLemmas { .. } => "verify-lemmas",
        Command::Partition { .. } => "partition",
        Command::SnCount { .. } => "sn-count",
        Command::ReturnTimes { .. } => "return-times",
        Command::CheckTower { .. } => "check-tower",
        Command::Lyapunov { .. } => "lyapunov",
        Command::Pressure { .. } => "pressure",
        Command::Correlations { .. } => "correlations",
        Command::Clt { .. } => "clt",
        Command::Report { .. } => "report",
    }
}

fn branch_name(b: crate::katok::Branch) -> &'static str {
    match b {
        crate::katok::Branch::Linear => "linear",
        crate::katok::Branch::Slowdown => "slowdown",
    }
}
