//! The consolidated run behind `katoklab report`: every suite at one of two sizes,
//! each reduced to a verdict plus the numbers it rests on.

use serde::Serialize;
use serde_json::{json, Value};

use super::RunConfig;
use crate::bounds;
use crate::cones;
use crate::error::Result;
use crate::katok::KatokMap;
use crate::params::{KatokParams, LOG_LAMBDA};
use crate::symbolic;
use crate::thermo::{self, Observable};
use crate::tower;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Desk-scale sizes matching the acceptance criteria.
    Full,
    /// Small samples for smoke runs and determinism checks.
    Quick,
}

struct Sizes {
    area: usize,
    cones: usize,
    hessian: usize,
    passages: usize,
    product: usize,
    kac: usize,
    pairs: usize,
    lyap_iters: [usize; 3],
    n_max: usize,
    corr_samples: usize,
    clt_samples: usize,
    clt_n: usize,
    ju_returns: usize,
}

impl Profile {
    fn sizes(self) -> Sizes {
        match self {
            Profile::Full => Sizes {
                area: 10_000,
                cones: 100_000,
                hessian: 10_000,
                passages: 1000,
                product: 1000,
                kac: 10_000,
                pairs: 100,
                lyap_iters: [100_000, 100_000, 1_000_000],
                n_max: 12,
                corr_samples: 20_000,
                clt_samples: 10_000,
                clt_n: 10_000,
                ju_returns: 500,
            },
            Profile::Quick => Sizes {
                area: 300,
                cones: 1000,
                hessian: 500,
                passages: 60,
                product: 60,
                kac: 300,
                pairs: 8,
                lyap_iters: [5000, 5000, 5000],
                n_max: 7,
                corr_samples: 400,
                clt_samples: 200,
                clt_n: 500,
                ju_returns: 40,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteVerdict {
    pub suite: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub profile: Profile,
    pub alpha: f64,
    pub r0: f64,
    pub seed: u64,
    pub ode_tol: f64,
    pub suites: Vec<SuiteVerdict>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }
}

fn verdict(suite: usize, name: &'static str, passed: bool, detail: Value) -> SuiteVerdict {
    SuiteVerdict {
        suite,
        name,
        passed,
        detail,
    }
}

/// The three slow-down radii compared by the Lyapunov and t₀ suites.
pub const R0_LADDER: [f64; 3] = [0.1, 0.05, 0.01];

pub fn run(cfg: &RunConfig, profile: Profile) -> Result<Report> {
    let z = profile.sizes();
    let params = cfg.params()?;
    let map = KatokMap::new(params.clone());
    let seed = cfg.seed;
    let mut suites = Vec::new();

    let area = map.area_defect(z.area, seed)?;
    suites.push(verdict(
        1,
        "area-preservation",
        area < 1e-7,
        json!({ "max_defect": area }),
    ));

    let nu = map.check_nu_invariance(z.area, seed)?;
    suites.push(verdict(
        2,
        "nu-invariance",
        nu < 1e-6,
        json!({ "max_residual": nu }),
    ));

    let scans = cones::scan_cone_invariance(&map, &[0.5, 0.7, 0.9], z.cones, seed)?;
    let cone_ok = scans.iter().all(|s| s.failures == 0);
    suites.push(verdict(
        3,
        "cone-invariance",
        cone_ok,
        serde_json::to_value(&scans).unwrap(),
    ));

    let hess = bounds::check_hessian_bound(&params, z.hessian, seed);
    suites.push(verdict(
        4,
        "hessian-bound",
        hess.passed(),
        serde_json::to_value(&hess).unwrap(),
    ));

    let pass = bounds::check_passages(&params, z.passages, seed)?;
    suites.push(verdict(
        5,
        "passage-bounds",
        pass.passed(),
        serde_json::to_value(&pass).unwrap(),
    ));

    let pairs = bounds::check_pairs(&params, 0.5, z.passages, seed)?;
    suites.push(verdict(
        6,
        "stable-pair-contraction",
        pairs.passed(),
        serde_json::to_value(&pairs).unwrap(),
    ));

    let prod = cones::check_product_bound(&map, 0.5, z.product, seed, 1e-6)?;
    let transit = bounds::check_transit_bound(&params, z.product, seed)?;
    suites.push(verdict(
        7,
        "product-and-transit",
        prod.violations == 0 && transit.report.violations == 0,
        json!({ "product": prod, "transit": transit }),
    ));

    let pc = &cfg.partition;
    let (sym, h_default) = symbolic_suite(pc.delta, pc.q, params.r0, pc.n_max)?;
    suites.push(sym);

    let (tpart, tp) = tower::tower_base(params.r0)?;
    let rect = &tpart.rectangles[tp];
    let returns = tower::sample_returns(&map, rect, z.kac, tower::RETURN_CAP, false, seed)?;
    let kac = tower::kac_report(&returns);
    let hist = tower::return_histogram(&returns).ok();
    let discarded_ok = (kac.discarded as f64) < 0.01 * kac.samples as f64;
    suites.push(verdict(
        9,
        "kac",
        kac.within(0.02) && discarded_ok,
        json!({
            "kac": kac,
            "tail_exponential_rate": hist.as_ref().map(|h| h.exponential_rate),
            "tail_power_exponent": hist.as_ref().map(|h| h.power_exponent),
            "kac_sum": hist.as_ref().map(|h| h.kac_sum),
        }),
    ));

    let tr = tower::check_tower(&map, rect, z.pairs, cfg.distortion_sum_bound, seed)?;
    suites.push(verdict(
        10,
        "tower-conditions",
        tr.holds(),
        json!({
            "a_stable": tr.a_stable,
            "a_unstable": tr.a_unstable,
            "distortion": tr.distortion,
            "k_half": tr.k_half,
            "k_full": tr.k_full,
            "markov_consistency": tr.markov_consistency,
            "stable_attempted": tr.stable.attempted,
            "stable_infeasible": tr.stable.infeasible,
            "unstable_attempted": tr.unstable.attempted,
            "unstable_infeasible": tr.unstable.infeasible,
        }),
    ));

    let mut chis = Vec::new();
    let mut lyap = Vec::new();
    for (k, &r0) in R0_LADDER.iter().enumerate() {
        let m = KatokMap::new(KatokParams::with_tolerance(
            params.alpha,
            r0,
            params.ode_tol,
            params.rng_seed,
        )?);
        let runs = thermo::lyapunov_runs(&m, z.lyap_iters[k], 2, seed)?;
        let chi = 0.5 * (runs[0].chi + runs[1].chi);
        chis.push((r0, chi, m));
        lyap.push(runs);
    }
    let last = chis[2].1;
    let monotone = chis.windows(2).all(|w| w[0].1 < w[1].1);
    let agree = lyap[2][0].chi - lyap[2][1].chi;
    let se = (lyap[2][0].std_err.powi(2) + lyap[2][1].std_err.powi(2)).sqrt();
    suites.push(verdict(
        11,
        "lyapunov",
        (last - LOG_LAMBDA).abs() < 0.05 && monotone,
        json!({ "runs": lyap, "monotone": monotone, "two_start_gap_in_se": agree.abs() / se }),
    ));

    let grid: Vec<f64> = (0..=12).map(|i| -1.0 + 0.25 * i as f64).collect();
    let pcurve = thermo::pressure_curve(&map, &grid, z.n_max)?;
    let p_at = |t: f64| pcurve.at(t).unwrap_or(f64::NAN);
    let pressure_ok = (p_at(0.0) - LOG_LAMBDA).abs() < 0.05
        && p_at(1.0).abs() < 0.05
        && p_at(2.0).abs() < 0.05
        && pcurve.monotonicity_defect() <= 1e-3
        && pcurve.convexity_defect() <= 1e-3
        && pcurve.counts_exact_through >= z.n_max.min(10);
    suites.push(verdict(
        12,
        "pressure",
        pressure_ok,
        serde_json::to_value(&pcurve).unwrap(),
    ));

    let mut t0s = Vec::new();
    for (r0, chi, m) in &chis {
        let (tp_part, tpi) = tower::tower_base(*r0)?;
        let counts = symbolic::count_first_return_words(&tp_part, cfg.partition.n_max);
        let h = symbolic::estimate_h(&counts)?.h;
        let recs = tower::sample_returns(
            m,
            &tp_part.rectangles[tpi],
            z.ju_returns,
            tower::RETURN_CAP,
            true,
            seed,
        )?;
        let ll1 = recs
            .records
            .iter()
            .filter_map(|r| r.log_ju_return.map(|l| l / r.tau as f64))
            .fold(f64::NEG_INFINITY, f64::max);
        t0s.push((*r0, thermo::t0_estimate(h, *chi, ll1)));
    }
    let t0_ok = t0s.iter().all(|(_, t)| matches!(t, Ok(e) if e.negative()))
        && t0s.windows(2).all(|w| match (&w[0].1, &w[1].1) {
            (Ok(a), Ok(b)) => b.t0 < a.t0,
            _ => false,
        });
    let t0_json: Vec<Value> = t0s
        .iter()
        .map(|(r0, t)| match t {
            Ok(e) => json!({ "r0": r0, "estimate": e }),
            Err(err) => json!({ "r0": r0, "error": err.to_string() }),
        })
        .collect();
    suites.push(verdict(
        13,
        "t0",
        t0_ok,
        json!({ "per_r0": t0_json, "h_default_partition": h_default }),
    ));

    let m01 = &chis[2].2;
    let mut corr = Vec::new();
    let mut corr_ok = true;
    for h in Observable::BUILTIN {
        let c = thermo::autocorrelation(m01, h, h, 50, z.corr_samples, seed)?;
        let c50 = c.c[50].abs();
        corr_ok &= c50 <= 3.0 * c.noise[50];
        corr.push(
            json!({ "observable": h.name(), "c0": c.c[0], "c50": c.c[50], "noise50": c.noise[50] }),
        );
    }
    let ns: Vec<usize> = [100, 1000, 10_000]
        .into_iter()
        .filter(|n| *n <= z.clt_n)
        .collect();
    // sin 2πy vanishes at the neutral point; cos 2πx does not, and its sums sit in the
    // borderline regime where the variance of the normalized sums keeps growing
    let clt = thermo::clt_diagnostic(m01, Observable::SinY, &ns, z.clt_samples, seed)?;
    suites.push(verdict(
        14,
        "correlations-clt",
        corr_ok && clt.final_distance() < 0.03,
        json!({ "correlations": corr, "clt": clt }),
    ));

    Ok(Report {
        profile,
        alpha: params.alpha,
        r0: params.r0,
        seed,
        ode_tol: params.ode_tol,
        suites,
    })
}

/// Suite 8 on the partition built for (δ, Q); also returns the fitted h.
fn symbolic_suite(delta: f64, q: usize, r0: f64, n_max: usize) -> Result<(SuiteVerdict, f64)> {
    let part = match symbolic::build_partition(delta, q, r0) {
        Ok(p) => p,
        Err(e) => {
            return Ok((
                verdict(8, "symbolic", false, json!({ "error": e.to_string() })),
                f64::NAN,
            ));
        }
    };
    let lam = symbolic::perron_root(&part.successors);
    let markov = part.check_markov();
    let counts = symbolic::count_first_return_words(&part, n_max);
    let h = symbolic::estimate_h(&counts)?;
    let ok = (lam - crate::params::LAMBDA).abs() < 1e-9 && markov.holds() && h.below_entropy();
    Ok((
        verdict(
            8,
            "symbolic",
            ok,
            json!({
                "rectangles": part.len(),
                "max_diameter": part.max_diameter(),
                "perron_root": lam,
                "markov": markov,
                "h": h,
                "p_area": part.rectangles[part.p_index].area(),
            }),
        ),
        h.h,
    ))
}
