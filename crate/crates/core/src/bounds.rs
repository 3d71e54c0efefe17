//! Sampled checks of the flow estimates inside the slow-down disk: the Hessian
//! bound, passage-time bounds, stable-pair contraction and annulus transit times.
//!
//! Every check returns a [`BoundReport`]. Samples that fail a lemma's hypotheses
//! are counted and skipped, never scored as violations.

use std::f64::consts::PI;

use nalgebra::Vector2;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{KatokError, Result};
use crate::numerics::quad::adaptive_gk15;
use crate::numerics::sample_rng;
use crate::numerics::stats::linear_fit;
use crate::params::{EigenPoint, KatokParams};
use crate::slowdown::SlowFlow;

/// Relative slack for the passage and pair inequalities.
pub const INEQ_SLACK: f64 = 1e-6;

/// Samples per passage at which the inequalities are evaluated.
pub const PASSAGE_SAMPLES: usize = 48;

/// Pair offsets shrink with the exit ratio |s2/s1| so second-order drift stays inside the cone.
pub const PAIR_DEPTH_SCALE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub name: String,
    pub samples: usize,
    pub hypotheses_met: usize,
    pub violations: usize,
    /// Bound at the tightest sample.
    pub bound_value: f64,
    /// Observed value at the tightest sample.
    pub observed_value: f64,
    /// min over admissible samples of (bound - observed) / |bound|
    pub margin: f64,
}

impl BoundReport {
    fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            samples: 0,
            hypotheses_met: 0,
            violations: 0,
            bound_value: f64::NAN,
            observed_value: f64::NAN,
            margin: f64::INFINITY,
        }
    }

    /// Records `observed <= bound` (with relative slack `slack`).
    fn record(&mut self, observed: f64, bound: f64, slack: f64) {
        let scale = bound.abs().max(f64::MIN_POSITIVE);
        let m = (bound - observed) / scale;
        if observed > bound + slack * scale + 1e-300 {
            self.violations += 1;
        }
        if m < self.margin {
            self.margin = m;
            self.bound_value = bound;
            self.observed_value = observed;
        }
    }

    fn merge(mut self, other: &BoundReport) -> Self {
        self.samples += other.samples;
        self.hypotheses_met += other.hypotheses_met;
        self.violations += other.violations;
        if other.margin < self.margin {
            self.margin = other.margin;
            self.bound_value = other.bound_value;
            self.observed_value = other.observed_value;
        }
        self
    }

    pub fn passed(&self) -> bool {
        self.violations == 0 && self.hypotheses_met > 0
    }
}

fn merge_all(name: &str, parts: &[BoundReport]) -> BoundReport {
    parts
        .iter()
        .fold(BoundReport::new(name), |acc, r| acc.merge(r))
}

// ---------------------------------------------------------------------------
// Hessian of s2 ψ(s1² + s2²)

/// Closed-form second partials (d11, d12, d22) in the power-law region.
pub fn hessian_closed_form(p: &KatokParams, s: EigenPoint) -> [f64; 3] {
    let a = p.alpha;
    let u = s.u();
    let k = 2.0 * a / p.r0.powf(a) * u.powf(a - 1.0);
    [
        k * s.s2 * (1.0 + 2.0 * (a - 1.0) * s.s1 * s.s1 / u),
        k * s.s1 * (1.0 + 2.0 * (a - 1.0) * s.s2 * s.s2 / u),
        3.0 * k * s.s2 * (1.0 + 2.0 / 3.0 * (a - 1.0) * s.s2 * s.s2 / u),
    ]
}

/// Central-difference second partials of s2 ψ(u), step h = 1e-5·max(‖s‖, 1e-3).
pub fn hessian_fd(flow: &SlowFlow, s: EigenPoint) -> [f64; 3] {
    let f = |a: f64, b: f64| b * flow.psi.psi(a * a + b * b);
    let h = 1e-5 * s.u().sqrt().max(1e-3);
    let (x, y) = (s.s1, s.s2);
    let c = f(x, y);
    let d11 = (f(x + h, y) - 2.0 * c + f(x - h, y)) / (h * h);
    let d22 = (f(x, y + h) - 2.0 * c + f(x, y - h)) / (h * h);
    let d12 =
        (f(x + h, y + h) - f(x + h, y - h) - f(x - h, y + h) + f(x - h, y - h)) / (4.0 * h * h);
    [d11, d12, d22]
}

pub fn hessian_bound(p: &KatokParams, s: EigenPoint) -> f64 {
    6.0 * p.alpha / p.r0.powf(p.alpha) * s.u().powf(p.alpha - 0.5)
}

/// Worst ratio max|d_ij| / bound over `n` uniform points of D_{r0/2}.
pub fn check_hessian_bound(p: &KatokParams, n: usize, seed: u64) -> BoundReport {
    let flow = SlowFlow::new(p);
    let half = 0.5 * p.r0;
    let parts: Vec<BoundReport> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = BoundReport::new("hessian");
            let mut rng = sample_rng(p.rng_seed ^ seed, 31, i);
            let s = crate::cones::sample_disk(&mut rng, half);
            r.samples = 1;
            if s.u() == 0.0 {
                return r;
            }
            r.hypotheses_met = 1;
            let d = hessian_fd(&flow, s);
            let worst = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            r.record(worst, hessian_bound(p, s) * (1.0 + 1e-3), 0.0);
            r
        })
        .collect();
    merge_all("hessian", &parts)
}

// ---------------------------------------------------------------------------
// Passages through D_{r0/2}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PassageRecord {
    pub entry: EigenPoint,
    pub exit: EigenPoint,
    pub t_total: f64,
    /// crossing time of the diagonal |s1| = |s2|
    pub t1: f64,
    /// (t, s(t)) on a uniform grid of [0, T] with T1 inserted
    pub samples: Vec<(f64, EigenPoint)>,
}

impl PassageRecord {
    pub fn s1_t1(&self) -> f64 {
        // the product s1 s2 is conserved and |s1| = |s2| at T1
        (self.entry.s1 * self.entry.s2).abs().sqrt()
    }
}

/// Entry point on ∂D_{r0/2} with |s1(0)| = `s1`, in the quadrant given by the signs.
pub fn passage_entry(r0: f64, s1: f64, sign1: f64, sign2: f64) -> Result<EigenPoint> {
    let half = 0.5 * r0;
    if !(s1 > 0.0 && s1 * s1 < 0.5 * half) {
        return Err(KatokError::HypothesisViolation(format!(
            "entry s1 = {s1} does not give an inward passage"
        )));
    }
    Ok(EigenPoint::new(sign1 * s1, sign2 * (half - s1 * s1).sqrt()))
}

/// Integrates a full passage of D_{r0/2} from an inward entry point on its boundary.
pub fn passage(flow: &SlowFlow, r0: f64, entry: EigenPoint) -> Result<PassageRecord> {
    let half = 0.5 * r0;
    if (entry.u() - half).abs() > 1e-12 * half || entry.s1.abs() >= entry.s2.abs() {
        return Err(KatokError::HypothesisViolation(
            "entry not inward on the boundary".into(),
        ));
    }
    let (t1, diag) = flow
        .flow_to_event(entry, 1e7, |s| s.s1.abs() - s.s2.abs())?
        .ok_or_else(|| KatokError::HypothesisViolation("no diagonal crossing".into()))?;
    // searched from the diagonal, where u < r0/2 strictly; from the entry the
    // event function starts at zero and a shallow passage can slip past it
    let (t_rest, exit) = flow
        .flow_to_event(diag, 1e7, |s| s.u() - half)?
        .ok_or_else(|| KatokError::HypothesisViolation("passage did not exit".into()))?;
    let t_total = t1 + t_rest;
    let mut times: Vec<f64> = (0..=PASSAGE_SAMPLES)
        .map(|k| t_total * k as f64 / PASSAGE_SAMPLES as f64)
        .collect();
    times.push(t1);
    times.sort_by(f64::total_cmp);
    let mut samples = Vec::with_capacity(times.len());
    let mut cur = (0.0, entry);
    for &t in &times {
        let s = flow.flow(cur.1, t - cur.0)?;
        cur = (t, s);
        samples.push(cur);
    }
    Ok(PassageRecord {
        entry,
        exit,
        t_total,
        t1,
        samples,
    })
}

fn pow_bound(base: f64, inner: f64, expo: f64) -> f64 {
    if inner <= 0.0 {
        f64::INFINITY
    } else {
        base * inner.powf(expo)
    }
}

/// Stated bound T <= r0^α s1(T1)^{-2α} / (α 2^α log λ).
///
/// The exact deep-passage time is T ~ (r0/2)^α B(α/2, 1/2) / (2 log λ) s1(T1)^{-2α},
/// which exceeds this for α < 1 (ratio ≈ 1.31 at α = 1/2).
pub fn t_estimate(p: &KatokParams, s1_t1: f64) -> f64 {
    let a = p.alpha;
    p.r0.powf(a) / (a * 2f64.powf(a) * p.log_lambda) * s1_t1.powf(-2.0 * a)
}

/// Blow-up time of the lower comparison for s1 on both halves, T <= 2 / (C1 s1(T1)^{2α}).
pub fn t_estimate_comparison(p: &KatokParams, s1_t1: f64) -> f64 {
    2.0 / (p.c1 * s1_t1.powf(2.0 * p.alpha))
}

/// The five displayed inequalities and the total-time estimate for one record.
pub fn check_passage_bounds(p: &KatokParams, rec: &PassageRecord) -> Result<[BoundReport; 6]> {
    if rec.samples.iter().any(|(_, s)| s.s1 == 0.0 || s.s2 == 0.0) {
        return Err(KatokError::HypothesisViolation(
            "orbit meets an axis".into(),
        ));
    }
    let (a, c1) = (p.alpha, p.c1);
    let e = -0.5 / a;
    let pa = 2f64.powf(a);
    let t1 = rec.t1;
    let s1_t1 = rec
        .samples
        .iter()
        .find(|(t, _)| *t == t1)
        .map(|(_, s)| s.s1.abs())
        .unwrap_or_else(|| rec.s1_t1());
    let names = [
        "s2_lower",
        "s2_upper",
        "s1_lower",
        "s1_upper_after_t1",
        "s1_upper_backward",
        "t_estimate",
    ];
    let mut out = names.map(BoundReport::new);
    for r in out.iter_mut() {
        r.samples = 1;
        r.hypotheses_met = 1;
    }
    let tol = 1e-9 * rec.t_total.max(1.0);
    for (i, &(ta, sa)) in rec.samples.iter().enumerate() {
        for &(tb, sb) in &rec.samples[i..] {
            let dt = tb - ta;
            let (s1a, s2a, s1b, s2b) = (sa.s1.abs(), sa.s2.abs(), sb.s1.abs(), sb.s2.abs());
            if tb <= t1 + tol {
                // |s2(t)| >= ...  written as  -|s2(t)| <= -bound
                let lower = pow_bound(s2a, 1.0 + pa * c1 * s2a.powf(2.0 * a) * dt, e);
                out[0].record(-s2b, -lower, INEQ_SLACK);
            }
            out[1].record(
                s2b,
                pow_bound(s2a, 1.0 + c1 * s2a.powf(2.0 * a) * dt, e),
                INEQ_SLACK,
            );
            let lower1 = pow_bound(s1a, 1.0 - c1 * s1a.powf(2.0 * a) * dt, e);
            if lower1.is_finite() {
                out[2].record(-s1b, -lower1, INEQ_SLACK);
            }
            // fifth: t = ta <= b = tb
            out[4].record(
                s1a,
                pow_bound(s1b, 1.0 + c1 * s1b.powf(2.0 * a) * dt, e),
                INEQ_SLACK,
            );
        }
        if ta >= t1 - tol {
            let upper = pow_bound(s1_t1, 1.0 - pa * c1 * s1_t1.powf(2.0 * a) * (ta - t1), e);
            out[3].record(sa.s1.abs(), upper, INEQ_SLACK);
        }
    }
    out[5].record(rec.t_total, t_estimate(p, s1_t1), INEQ_SLACK);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PassageSummary {
    pub reports: Vec<BoundReport>,
    /// least-squares slope of log T against log s1(T1)
    pub slope: f64,
    pub slope_target: f64,
    pub max_half_time_error: f64,
    /// T against the comparison-principle bound, which is not part of `passed`
    pub comparison_t_bound: BoundReport,
}

impl PassageSummary {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(BoundReport::passed)
            && (self.slope - self.slope_target).abs() <= 0.2
    }
}

/// `n` passages from entries with s1(0) log-uniform over five decades, starting one below
/// the diagonal so T follows its deep-passage scaling.
pub fn sample_passages(p: &KatokParams, n: usize, seed: u64) -> Result<Vec<PassageRecord>> {
    sample_passages_in(p, n, seed, 1.0, 5.0)
}

/// Entries with s1(0) = √(r0/4) · 10^{-skip - decades·U}.
pub fn sample_passages_in(
    p: &KatokParams,
    n: usize,
    seed: u64,
    skip: f64,
    decades: f64,
) -> Result<Vec<PassageRecord>> {
    let flow = SlowFlow::new(p);
    let top = (0.25 * p.r0).sqrt();
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(p.rng_seed ^ seed, 32, i);
            let s1 = top * 10f64.powf(-skip - decades * rng.gen::<f64>()) * (1.0 - 1e-9);
            let sg = |b: bool| if b { 1.0 } else { -1.0 };
            let entry = passage_entry(p.r0, s1, sg(rng.gen()), sg(rng.gen()))?;
            passage(&flow, p.r0, entry)
        })
        .collect()
}

pub fn check_passages(p: &KatokParams, n: usize, seed: u64) -> Result<PassageSummary> {
    let recs = sample_passages(p, n, seed)?;
    let per: Vec<[BoundReport; 6]> = recs
        .par_iter()
        .map(|r| check_passage_bounds(p, r))
        .collect::<Result<_>>()?;
    let reports = (0..6)
        .map(|k| {
            let parts: Vec<BoundReport> = per.iter().map(|r| r[k].clone()).collect();
            merge_all(&format!("passage_{}", parts[0].name), &parts)
        })
        .collect();
    let xs: Vec<f64> = recs.iter().map(|r| r.s1_t1().ln()).collect();
    let ys: Vec<f64> = recs.iter().map(|r| r.t_total.ln()).collect();
    let slope = linear_fit(&xs, &ys).slope;
    let max_half_time_error = recs
        .iter()
        .map(|r| (r.t1 - 0.5 * r.t_total).abs() / r.t_total)
        .fold(0.0, f64::max);
    let mut comparison_t_bound = BoundReport::new("t_estimate_comparison");
    for r in &recs {
        comparison_t_bound.samples += 1;
        comparison_t_bound.hypotheses_met += 1;
        comparison_t_bound.record(r.t_total, t_estimate_comparison(p, r.s1_t1()), INEQ_SLACK);
    }
    Ok(PassageSummary {
        reports,
        slope,
        slope_target: -2.0 * p.alpha,
        max_half_time_error,
        comparison_t_bound,
    })
}

// ---------------------------------------------------------------------------
// Stable pairs

#[derive(Debug, Clone, PartialEq)]
pub struct PairRecord {
    pub base: PassageRecord,
    pub mu: f64,
    /// Δs(t) = s̃(t) - s(t) at the base sample times
    pub delta: Vec<Vector2<f64>>,
}

/// Perturbation exponent stated with the lemma and the one its proof produces.
pub fn pair_exponents(alpha: f64, mu: f64) -> (f64, f64) {
    let beta = (1.0 - mu) / 2f64.powf(alpha + 2.0);
    (beta, beta / alpha)
}

/// Partner of a passage whose offset ends in the stable cone, so Δs stays there.
///
/// `rel` sets Δs2(0)/s2(0); `tilt` ∈ [-1, 1] positions the final offset inside K⁻.
pub fn stable_pair(
    flow: &SlowFlow,
    base: &PassageRecord,
    mu: f64,
    rel: f64,
    tilt: f64,
) -> Result<PairRecord> {
    let (_, j) = flow.flow_with_jacobian(base.entry, base.t_total)?;
    let inv = j
        .try_inverse()
        .ok_or_else(|| KatokError::HypothesisViolation("singular passage Jacobian".into()))?;
    // orient so that Δs2 has the sign of s2 (the lemma's Δs2 > 0 after reflection)
    let sgn = base.entry.s2.signum();
    let end = Vector2::new(tilt * 0.5 * mu, sgn);
    let w = inv * end;
    let d0 = w * (rel * base.entry.s2.abs() / w[1].abs());
    let start = EigenPoint::new(base.entry.s1 + d0[0], base.entry.s2 + d0[1]);
    let mut delta = Vec::with_capacity(base.samples.len());
    let mut cur = (0.0, start);
    for &(t, s) in &base.samples {
        let q = flow.flow(cur.1, t - cur.0)?;
        cur = (t, q);
        delta.push(Vector2::new(q.s1 - s.s1, q.s2 - s.s2));
    }
    Ok(PairRecord {
        base: base.clone(),
        mu,
        delta,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairCheck {
    pub hypotheses_met: bool,
    pub stated_exponent: [BoundReport; 2],
    pub final_bound: BoundReport,
    pub ratio_at_t1: BoundReport,
    /// whether the proof's larger exponent β/α also held on this pair
    pub proof_exponent_holds: bool,
}

pub fn check_pair_contraction(p: &KatokParams, pair: &PairRecord) -> PairCheck {
    let (a, c1, mu) = (p.alpha, p.c1, pair.mu);
    let pa = 2f64.powf(a);
    let rec = &pair.base;
    // reflect to the first quadrant: Δs_i ↦ Δs_i · sign(s_i)
    let refl = |k: usize| {
        let (s, d) = (rec.samples[k].1, pair.delta[k]);
        (
            s.s1.abs(),
            s.s2.abs(),
            d[0] * s.s1.signum(),
            d[1] * s.s2.signum(),
        )
    };
    let n = rec.samples.len();
    let (_, s20, d10, d20) = refl(0);
    let admissible = (0..n).all(|k| {
        let (_, _, d1, d2) = refl(k);
        d2 > 0.0 && d1.abs() <= mu * d2
    }) && (d20 / s20).abs() < (1.0 - mu) / 72.0;
    let mk = |name: &str| {
        let mut r = BoundReport::new(name);
        r.samples = 1;
        r.hypotheses_met = admissible as usize;
        r
    };
    let mut stated = [mk("delta_s2_before_t1"), mk("delta_s2_after_t1")];
    let mut final_bound = mk("final_bound");
    let mut ratio = mk("ratio_at_t1");
    let mut proof_ok = true;
    if admissible {
        let (beta, beta_proof) = pair_exponents(a, mu);
        let k1 = rec
            .samples
            .iter()
            .position(|(t, _)| *t == rec.t1)
            .unwrap_or(n / 2);
        let (s1t1, s2t1, _, d2t1) = refl(k1);
        for k in 0..n {
            let t = rec.samples[k].0;
            let (s1, s2, _, d2) = refl(k);
            let (lim, lim_proof) = if k <= k1 {
                let x = 1.0 + pa * c1 * s20.powf(2.0 * a) * t;
                let b = d20 / s20 * s2;
                (b * x.powf(-beta), b * x.powf(-beta_proof))
            } else {
                let x = 1.0 - pa * c1 * s1t1.powf(2.0 * a) * (t - rec.t1);
                let b = d2t1 / s1t1 * s1;
                (pow_bound(b, x, -beta), pow_bound(b, x, -beta_proof))
            };
            stated[(k > k1) as usize].record(d2, lim, INEQ_SLACK);
            proof_ok &= d2 <= lim_proof * (1.0 + INEQ_SLACK);
        }
        let (s1_end, _, d1e, d2e) = refl(n - 1);
        let norm0 = (d10 * d10 + d20 * d20).sqrt();
        let bound = (1.0 + mu * mu).sqrt() * s1_end / s20 * norm0;
        final_bound.record((d1e * d1e + d2e * d2e).sqrt(), bound, INEQ_SLACK);
        ratio.record(d2t1 / s2t1, d20 / s20, INEQ_SLACK);
    } else {
        stated.iter_mut().for_each(|r| r.hypotheses_met = 0);
    }
    PairCheck {
        hypotheses_met: admissible,
        stated_exponent: stated,
        final_bound,
        ratio_at_t1: ratio,
        proof_exponent_holds: proof_ok,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairSummary {
    pub mu: f64,
    pub pairs: usize,
    pub admissible: usize,
    pub reports: Vec<BoundReport>,
    pub proof_exponent_failures: usize,
    /// partners the integrator could not follow, excluded from the reports
    pub step_failures: usize,
}

impl PairSummary {
    pub fn passed(&self) -> bool {
        self.admissible > 0 && self.reports.iter().all(|r| r.violations == 0)
    }
}

pub fn check_pairs(p: &KatokParams, mu: f64, n: usize, seed: u64) -> Result<PairSummary> {
    let flow = SlowFlow::new(p);
    let recs = sample_passages_in(p, n, seed, 0.0, 3.0)?;
    let checks: Vec<Option<PairCheck>> = recs
        .par_iter()
        .enumerate()
        .map(|(i, rec)| {
            let mut rng = sample_rng(p.rng_seed ^ seed, 33, i as u64);
            // second-order drift in Δs1 must stay below μ Δs2 at the exit
            let depth = (rec.exit.s2 / rec.exit.s1).abs();
            let rel = (1.0 - mu) / 72.0
                * rng.gen_range(0.01..0.9)
                * (PAIR_DEPTH_SCALE * mu * depth).min(1.0);
            match stable_pair(&flow, rec, mu, rel, rng.gen_range(-1.0..1.0)) {
                Ok(pair) => Ok(Some(check_pair_contraction(p, &pair))),
                // a partner grazing the axis can stall the integrator; it is not admissible
                Err(KatokError::StepFailure { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let step_failures = checks.iter().filter(|c| c.is_none()).count();
    let checks: Vec<PairCheck> = checks.into_iter().flatten().collect();
    let collect = |f: &dyn Fn(&PairCheck) -> BoundReport, name: &str| {
        let parts: Vec<BoundReport> = checks.iter().map(f).collect();
        merge_all(name, &parts)
    };
    Ok(PairSummary {
        mu,
        pairs: n,
        admissible: checks.iter().filter(|c| c.hypotheses_met).count(),
        reports: vec![
            collect(&|c| c.stated_exponent[0].clone(), "pair_delta_s2_before_t1"),
            collect(&|c| c.stated_exponent[1].clone(), "pair_delta_s2_after_t1"),
            collect(&|c| c.final_bound.clone(), "pair_final_bound"),
            collect(&|c| c.ratio_at_t1.clone(), "pair_ratio_at_t1"),
        ],
        proof_exponent_failures: checks
            .iter()
            .filter(|c| c.hypotheses_met && !c.proof_exponent_holds)
            .count(),
        step_failures,
    })
}

// ---------------------------------------------------------------------------
// Annulus transit

/// max(2·2^α, 16·2^α)/log λ, the larger of the two case constants.
pub fn transit_bound(p: &KatokParams) -> f64 {
    16.0 * 2f64.powf(p.alpha) / p.log_lambda
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Transit {
    pub start: EigenPoint,
    pub time: f64,
    /// 4 s1² s2² > r0²/8
    pub case2: bool,
}

/// Continuous time spent in D_{r0} \ D_{r0/2} from `start` on ∂D_{r0} until the
/// orbit reaches D_{r0/2} or leaves D_{r0}.
pub fn annulus_transit(flow: &SlowFlow, r0: f64, start: EigenPoint) -> Result<Transit> {
    let half = 0.5 * r0;
    let c = 4.0 * (start.s1 * start.s2).powi(2);
    if start.s1.abs() >= start.s2.abs() {
        // already on the outgoing side
        return Ok(Transit {
            start,
            time: 0.0,
            case2: c > r0 * r0 / 8.0,
        });
    }
    // inner circle on the incoming side, outer circle on the outgoing side; negative
    // from the start, so near-diagonal entries that never dip inside still stop
    let g = |s: EigenPoint| {
        if s.s1.abs() > s.s2.abs() {
            s.u() - r0
        } else {
            half - s.u()
        }
    };
    let ev = flow.solver.integrate_to_event(
        |_, y: &[f64; 2]| flow.field(y),
        0.0,
        [start.s1, start.s2],
        1e4,
        |y| g(EigenPoint::new(y[0], y[1])),
    )?;
    let time = ev
        .map(|e| e.t)
        .ok_or_else(|| KatokError::HypothesisViolation("no transit".into()))?;
    Ok(Transit {
        start,
        time,
        case2: c > r0 * r0 / 8.0,
    })
}

/// Inward leg on the stable axis, by quadrature of du/dt = -2 u ψ(u) log λ.
pub fn stable_axis_transit_quadrature(flow: &SlowFlow, r0: f64) -> Result<f64> {
    adaptive_gk15(
        |u| 1.0 / (2.0 * u * flow.psi.psi(u) * flow.log_lambda),
        0.5 * r0,
        r0,
        1e-14,
        1e-13,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitSummary {
    pub report: BoundReport,
    pub max_case1: f64,
    pub max_case2: f64,
    pub bound: f64,
}

/// Transit times from uniform inward entries on ∂D_{r0}.
pub fn check_transit_bound(p: &KatokParams, n: usize, seed: u64) -> Result<TransitSummary> {
    let flow = SlowFlow::new(p);
    let r = p.r0.sqrt();
    let bound = transit_bound(p);
    let ts: Vec<Option<Transit>> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(p.rng_seed ^ seed, 34, i);
            // inward arcs of the circle, where |s1| < |s2|
            let th = PI / 4.0 + PI / 2.0 * rng.gen::<f64>() + PI * rng.gen_range(0..2) as f64;
            let s = EigenPoint::new(r * th.cos(), r * th.sin());
            if s.s1.abs() >= s.s2.abs() {
                return Ok(None);
            }
            annulus_transit(&flow, p.r0, s).map(Some)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = BoundReport::new("transit");
    let mut max1: f64 = 0.0;
    let mut max2: f64 = 0.0;
    for t in ts.iter() {
        report.samples += 1;
        if let Some(t) = t {
            report.hypotheses_met += 1;
            report.record(t.time, bound, 0.0);
            if t.case2 {
                max2 = max2.max(t.time);
            } else {
                max1 = max1.max(t.time);
            }
        }
    }
    Ok(TransitSummary {
        report,
        max_case1: max1,
        max_case2: max2,
        bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (KatokParams, SlowFlow) {
        let p = KatokParams::defaults();
        let f = SlowFlow::new(&p);
        (p, f)
    }

    #[test]
    fn closed_form_hessian_matches_differences() {
        let (p, f) = setup();
        for &(a, b) in &[(0.1, 0.12), (-0.05, 0.2), (0.15, -0.03), (0.01, 0.002)] {
            let s = EigenPoint::new(a, b);
            let cf = hessian_closed_form(&p, s);
            let fd = hessian_fd(&f, s);
            for k in 0..3 {
                assert!(
                    (cf[k] - fd[k]).abs() < 1e-5 * cf[k].abs().max(1.0),
                    "{k}: {} {}",
                    cf[k],
                    fd[k]
                );
            }
        }
        // odd in s2 ⇒ d11 vanishes on the s1 axis
        let d = hessian_fd(&f, EigenPoint::new(0.1, 0.0));
        assert!(d[0].abs() < 1e-6);
    }

    #[test]
    fn mixed_partial_on_the_diagonal() {
        let (p, _) = setup();
        let s = 0.1;
        let cf = hessian_closed_form(&p, EigenPoint::new(s, s));
        let a = p.alpha;
        let want = 2.0 * a / p.r0.powf(a) * (2.0 * s * s).powf(a - 1.0) * s * a;
        assert!((cf[1] - want).abs() < 1e-12);
    }

    #[test]
    fn symmetric_passage_has_half_time_crossing() {
        let (p, f) = setup();
        let e = passage_entry(p.r0, 0.02, 1.0, 1.0).unwrap();
        let rec = passage(&f, p.r0, e).unwrap();
        assert!((rec.t1 - 0.5 * rec.t_total).abs() < 1e-8 * rec.t_total);
        assert!((rec.exit.s1 - e.s2).abs() < 1e-9 && (rec.exit.s2 - e.s1).abs() < 1e-9);
        let r = check_passage_bounds(&p, &rec).unwrap();
        assert!(r.iter().all(|x| x.violations == 0), "{r:?}");
    }

    #[test]
    fn identical_pair_has_no_offset() {
        let (p, f) = setup();
        let rec = passage(&f, p.r0, passage_entry(p.r0, 0.05, 1.0, -1.0).unwrap()).unwrap();
        let pr = stable_pair(&f, &rec, 0.5, 0.0, 0.3).unwrap();
        assert!(pr.delta.iter().all(|d| d.norm() == 0.0));
    }

    #[test]
    fn stable_axis_transit_matches_quadrature() {
        let (p, f) = setup();
        let r = p.r0.sqrt();
        let t = annulus_transit(&f, p.r0, EigenPoint::new(0.0, r)).unwrap();
        let q = stable_axis_transit_quadrature(&f, p.r0).unwrap();
        assert!((t.time - q).abs() < 1e-6, "{} {}", t.time, q);
        assert!(t.time < transit_bound(&p));
    }

    #[test]
    fn transit_constant() {
        let (p, _) = setup();
        assert!((transit_bound(&p) - 16.0 * 2f64.sqrt() / p.log_lambda).abs() < 1e-12);
        assert!((transit_bound(&p) - 23.51).abs() < 0.01);
    }
}
