//! Acceptance criteria 1-15, one line each.
//!
//! Two full `katoklab report` runs supply the measurements (and the determinism check);
//! every reference value they are judged against is recomputed here from scratch.
//! Criteria listed in KNOWN_FAILURES fail for documented reasons and are printed as
//! FAIL; any other failure fails the test.

use std::collections::BTreeSet;
use std::io::Write;
use std::process::Command;
use std::time::{Duration, Instant};

use katoklab::katok::KatokMap;
use katoklab::params::KatokParams;
use katoklab::symbolic::{self, MarkovPartition, PartitionConfig};
use katoklab::thermo;
use katoklab::tower;
use serde_json::Value;

/// 5: the stated total-time constant is below the exact one (ratio α·B(α/2, 1/2)/2).
/// 13: the measured t₀ is positive at the larger radii.
const KNOWN_FAILURES: [usize; 2] = [5, 13];

fn golden() -> f64 {
    (3.0 + 5f64.sqrt()) / 2.0
}

struct Line {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn full_report() -> (Vec<u8>, Duration) {
    let t = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_katoklab"))
        .args(["report", "--profile", "full"])
        .output()
        .expect("katoklab runs");
    let code = out.status.code();
    assert!(
        matches!(code, Some(0) | Some(1)) && !out.stdout.is_empty(),
        "report crashed ({code:?}): {}",
        String::from_utf8_lossy(&out.stderr)
    );
    (out.stdout, t.elapsed())
}

fn suite(rep: &Value, id: usize) -> &Value {
    rep["suites"]
        .as_array()
        .unwrap()
        .iter()
        .find(|s| s["suite"].as_u64() == Some(id as u64))
        .unwrap_or_else(|| panic!("suite {id} missing"))
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn passed(rep: &Value, id: usize) -> bool {
    suite(rep, id)["passed"].as_bool() == Some(true)
}

/// B(a, 1/2) = 2∫₀^{π/2} sin^{2a-1}θ dθ, with θ = v² to remove the endpoint singularity.
fn beta_half(a: f64) -> f64 {
    let top = (std::f64::consts::FRAC_PI_2).sqrt();
    let g = |v: f64| {
        if v == 0.0 {
            // sin(v²)^{2a-1}·2v → 2 v^{4a-1}; finite only for a ≥ 1/4
            if a == 0.25 {
                2.0
            } else {
                0.0
            }
        } else {
            2.0 * v * (v * v).sin().powf(2.0 * a - 1.0)
        }
    };
    let n = 200_000;
    let h = top / n as f64;
    let mut s = g(0.0) + g(top);
    for k in 1..n {
        s += g(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    2.0 * s * h / 3.0
}

/// Words P a₁ … a_{n-1} P with no interior P, by explicit enumeration.
fn brute_force_returns(part: &MarkovPartition, n_max: usize) -> Vec<u64> {
    fn dfs(part: &MarkovPartition, at: usize, len: usize, n_max: usize, out: &mut [u64]) {
        for &b in &part.successors[at] {
            if b == part.p_index {
                out[len] += 1;
            } else if len < n_max {
                dfs(part, b, len + 1, n_max, out);
            }
        }
    }
    let mut out = vec![0u64; n_max + 1];
    dfs(part, part.p_index, 1, n_max, &mut out);
    out
}

fn shoelace(v: &[[f64; 2]; 4]) -> f64 {
    let mut a = 0.0;
    for i in 0..4 {
        let (p, q) = (v[i], v[(i + 1) % 4]);
        a += p[0] * q[1] - q[0] * p[1];
    }
    0.5 * a.abs()
}

/// |Fix(Aⁿ)| = tr Aⁿ - 2 with tr Aⁿ = 3 tr Aⁿ⁻¹ - tr Aⁿ⁻².
fn fixed_count_oracle(n_max: usize) -> Vec<u128> {
    let mut tr = vec![2u128, 3];
    while tr.len() <= n_max {
        let k = tr.len();
        tr.push(3 * tr[k - 1] - tr[k - 2]);
    }
    tr.iter().map(|t| t - 2).collect()
}

#[test]
fn acceptance() {
    let (first, t_first) = full_report();
    let rep: Value = serde_json::from_slice(&first).expect("report is JSON");
    let log_lambda = golden().ln();
    let mut lines = Vec::new();

    let d1 = f(&suite(&rep, 1)["detail"]["max_defect"]);
    lines.push(Line {
        id: 1,
        name: "area preservation",
        pass: passed(&rep, 1) && d1 < 1e-7,
        detail: format!("max |det dG_T2 - 1| = {d1:.2e}"),
    });

    let d2 = f(&suite(&rep, 2)["detail"]["max_residual"]);
    lines.push(Line {
        id: 2,
        name: "nu-invariance",
        pass: passed(&rep, 2) && d2 < 1e-6,
        detail: format!("max residual {d2:.2e}"),
    });

    let mu0 = 2.0 - 3f64.sqrt();
    let scans = suite(&rep, 3)["detail"].as_array().unwrap();
    let cone_ok = scans.len() == 3
        && scans.iter().all(|s| {
            f(&s["mu"]) > mu0
                && s["failures"].as_u64() == Some(0)
                && s["samples"].as_u64() == Some(100_000)
        });
    lines.push(Line {
        id: 3,
        name: "cone invariance",
        pass: cone_ok && (katoklab::cones::mu0_analytic(0.5) - mu0).abs() < 1e-14,
        detail: format!(
            "mu0 = {mu0:.6}, failures {:?}",
            scans
                .iter()
                .map(|s| s["failures"].clone())
                .collect::<Vec<_>>()
        ),
    });

    let h4 = &suite(&rep, 4)["detail"];
    let ratio4 = f(&h4["observed_value"]) / f(&h4["bound_value"]);
    lines.push(Line {
        id: 4,
        name: "Hessian bound",
        pass: passed(&rep, 4) && ratio4 <= 1.0 && h4["samples"].as_u64() == Some(10_000),
        detail: format!("worst ratio {ratio4:.4}"),
    });

    let d5 = &suite(&rep, 5)["detail"];
    let slope = f(&d5["slope"]);
    let alpha = 0.5;
    let exact_over_stated = alpha * beta_half(alpha / 2.0) / 2.0;
    let failing: Vec<String> = d5["reports"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|r| r["violations"].as_u64() != Some(0))
        .map(|r| {
            format!(
                "{} ({} of {})",
                r["name"].as_str().unwrap(),
                r["violations"],
                r["samples"]
            )
        })
        .collect();
    lines.push(Line {
        id: 5,
        name: "passage inequalities and T-estimate",
        pass: passed(&rep, 5) && (slope + 2.0 * alpha).abs() <= 0.2,
        detail: format!(
            "slope {slope:.4} (target {:.1}); violated: {failing:?}; exact/stated T constant = {exact_over_stated:.4}",
            -2.0 * alpha
        ),
    });

    let d6 = &suite(&rep, 6)["detail"];
    lines.push(Line {
        id: 6,
        name: "stable-pair final bound",
        pass: passed(&rep, 6),
        detail: format!("{} admissible of {} pairs", d6["admissible"], d6["pairs"]),
    });

    let d7 = &suite(&rep, 7)["detail"];
    let t0_star = 16.0 * 2f64.powf(alpha) / log_lambda;
    lines.push(Line {
        id: 7,
        name: "product and transit bounds",
        pass: passed(&rep, 7) && (f(&d7["transit"]["bound"]) - t0_star).abs() < 1e-9,
        detail: format!(
            "product violations {}, transit violations {} (T0* = {t0_star:.4})",
            d7["product"]["violations"], d7["transit"]["report"]["violations"]
        ),
    });

    let pc = PartitionConfig::default();
    let part = symbolic::build_partition(pc.delta, pc.q, 0.1).expect("partition");
    let dp: Vec<u64> = symbolic::count_first_return_words(&part, 12)
        .iter()
        .map(|c| u64::try_from(&c.s_n).unwrap())
        .collect();
    let brute = brute_force_returns(&part, 12);
    let area_sum: f64 = part
        .rectangles
        .iter()
        .map(|r| shoelace(&r.vertices()))
        .sum();
    let d8 = &suite(&rep, 8)["detail"];
    let root = f(&d8["perron_root"]);
    let h8 = f(&d8["h"]["h"]);
    lines.push(Line {
        id: 8,
        name: "symbolic layer",
        pass: passed(&rep, 8)
            && (root - golden()).abs() < 1e-9
            && dp[..] == brute[1..]
            && h8 < log_lambda
            && (area_sum - 1.0).abs() < 1e-9,
        detail: format!(
            "Perron root error {:.1e}; S_1..12 = {:?} (DFS agrees: {}); h = {h8:.6}, log λ - h = {:.2e}",
            (root - golden()).abs(),
            dp,
            dp[..] == brute[1..],
            log_lambda - h8
        ),
    });

    let (tpart, tp) = tower::tower_base(0.1).unwrap();
    let inv_area = 1.0 / shoelace(&tpart.rectangles[tp].vertices());
    let k9 = &suite(&rep, 9)["detail"]["kac"];
    let mean = f(&k9["mean_tau"]);
    let discarded = k9["discarded"].as_u64().unwrap_or(u64::MAX);
    lines.push(Line {
        id: 9,
        name: "Kac formula",
        pass: passed(&rep, 9) && (mean * (1.0 / inv_area) - 1.0).abs() < 0.02 && discarded == 0,
        detail: format!(
            "mean τ {mean:.3} vs 1/m(P) {inv_area:.3} ({:+.2}%), {} samples, {discarded} discarded",
            100.0 * (mean / inv_area - 1.0),
            k9["samples"]
        ),
    });

    let d10 = &suite(&rep, 10)["detail"];
    let (kh, kf) = (f(&d10["k_half"]), f(&d10["k_full"]));
    lines.push(Line {
        id: 10,
        name: "tower conditions",
        pass: passed(&rep, 10)
            && f(&d10["a_stable"]) < 1.0
            && f(&d10["a_unstable"]) < 1.0
            && f(&d10["distortion"]["kappa"]) < 1.0
            && (kh / kf - 1.0).abs() <= 0.2,
        detail: format!(
            "a = {:.4} / {:.4}, κ = {:.4}, K half/full = {kh:.4}/{kf:.4}",
            f(&d10["a_stable"]),
            f(&d10["a_unstable"]),
            f(&d10["distortion"]["kappa"])
        ),
    });

    let runs = suite(&rep, 11)["detail"]["runs"].as_array().unwrap();
    let chis: Vec<f64> = runs
        .iter()
        .map(|r| {
            let r = r.as_array().unwrap();
            r.iter().map(|e| f(&e["chi"])).sum::<f64>() / r.len() as f64
        })
        .collect();
    let iters_last = runs[2][0]["iters"].as_u64().unwrap_or(0);
    lines.push(Line {
        id: 11,
        name: "Lyapunov exponent",
        pass: passed(&rep, 11)
            && (chis[2] - log_lambda).abs() < 0.05
            && chis.windows(2).all(|w| w[0] < w[1])
            && iters_last >= 1_000_000,
        detail: format!("χ over r0 = 0.1, 0.05, 0.01: {chis:.4?}; log λ = {log_lambda:.4}"),
    });

    let d12 = &suite(&rep, 12)["detail"];
    let ts: Vec<f64> = d12["t"].as_array().unwrap().iter().map(f).collect();
    let ps: Vec<f64> = d12["extrapolated"]
        .as_array()
        .unwrap()
        .iter()
        .map(f)
        .collect();
    let at = |t: f64| {
        ts.iter()
            .position(|x| (x - t).abs() < 1e-12)
            .map(|i| ps[i])
            .unwrap_or(f64::NAN)
    };
    let monotone = ps.windows(2).all(|w| w[1] <= w[0] + 1e-3);
    let convex = ps.windows(3).all(|w| w[0] - 2.0 * w[1] + w[2] >= -1e-3);
    let map = KatokMap::new(KatokParams::new(0.5, 0.1).unwrap());
    let levels = thermo::fixed_point_levels(&map, 10).expect("periodic orbits");
    let oracle = fixed_count_oracle(10);
    let counts_ok = levels
        .iter()
        .all(|l| l.found == oracle[l.n] && l.expected == oracle[l.n]);
    lines.push(Line {
        id: 12,
        name: "pressure",
        pass: passed(&rep, 12)
            && (at(0.0) - log_lambda).abs() < 0.05
            && at(1.0).abs() < 0.05
            && at(2.0).abs() < 0.05
            && monotone
            && convex
            && counts_ok,
        detail: format!(
            "P(0) = {:.4}, P(1) = {:.4}, P(2) = {:.4}; monotone {monotone}, convex {convex}; |Fix(G^n)| exact for n ≤ 10: {counts_ok}",
            at(0.0),
            at(1.0),
            at(2.0)
        ),
    });

    let per_r0 = suite(&rep, 13)["detail"]["per_r0"].as_array().unwrap();
    let t0s: Vec<f64> = per_r0
        .iter()
        .map(|e| {
            let e = &e["estimate"];
            let (h, hm, ll) = (f(&e["h"]), f(&e["h_mu1"]), f(&e["log_lambda1"]));
            let t0 = (h - hm) / (ll - hm);
            assert!(e.is_null() || (t0 - f(&e["t0"])).abs() < 1e-12);
            t0
        })
        .collect();
    lines.push(Line {
        id: 13,
        name: "t0",
        pass: passed(&rep, 13)
            && t0s.iter().all(|t| *t < 0.0)
            && t0s.windows(2).all(|w| w[1] < w[0]),
        detail: format!("t0 over r0 = 0.1, 0.05, 0.01: {t0s:.4?}"),
    });

    let d14 = &suite(&rep, 14)["detail"];
    let corr_ok = d14["correlations"]
        .as_array()
        .unwrap()
        .iter()
        .all(|c| f(&c["c50"]).abs() <= 3.0 * f(&c["noise50"]));
    let clt_levels = d14["clt"]["levels"].as_array().unwrap();
    let last = clt_levels.last().unwrap();
    let dist = f(&last["sup_distance"]);
    lines.push(Line {
        id: 14,
        name: "correlations and CLT",
        pass: passed(&rep, 14)
            && corr_ok
            && dist < 0.03
            && last["n"].as_u64() == Some(10_000)
            && d14["clt"]["samples"].as_u64() == Some(10_000),
        detail: format!(
            "|C_50| within 3 noise floors: {corr_ok}; sup-distance {dist:.4} at n = {}",
            last["n"]
        ),
    });

    let (second, t_second) = full_report();
    lines.push(Line {
        id: 15,
        name: "determinism",
        pass: first == second,
        detail: format!(
            "two full runs, {} bytes, identical: {} ({:.0} s and {:.0} s)",
            first.len(),
            first == second,
            t_first.as_secs_f64(),
            t_second.as_secs_f64()
        ),
    });

    let mut failed = BTreeSet::new();
    let mut err = std::io::stderr().lock();
    for l in &lines {
        // straight to the stderr handle: the harness captures only the print macros,
        // and these lines belong in every log, passing or not
        writeln!(
            err,
            "criterion {:>2} {} {}: {}",
            l.id,
            if l.pass { "PASS" } else { "FAIL" },
            l.name,
            l.detail
        )
        .unwrap();
        if !l.pass {
            failed.insert(l.id);
        }
    }
    let known: BTreeSet<usize> = KNOWN_FAILURES.into_iter().collect();
    let unexpected: Vec<_> = failed.difference(&known).collect();
    assert!(
        unexpected.is_empty(),
        "undocumented failures: {unexpected:?}"
    );
}
