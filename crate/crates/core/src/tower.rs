//! First returns of G_T2 to the base element P: return times, Kac's formula,
//! and sampled checks of the tower conditions on pairs of returning points.
//!
//! Orbits run on G; a point of G_T2 is in P when its tabulated Φ-image is. Pair
//! offsets are measured through dΦ, so every distance is a G_T2 distance.

use nalgebra::Vector2;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{KatokError, Result};
use crate::katok::KatokMap;
use crate::numerics::sample_rng;
use crate::numerics::stats::{linear_fit, mean, pairwise_sum, variance};
use crate::params::{eigen_basis, in_disk, lift_eigen, Jacobian2, TorusPoint};
use crate::symbolic::{MarkovPartition, Rectangle};
use crate::thermo::{unstable_direction_base, DEFAULT_BACK};

/// Membership in Int P uses this inset (σ units).
pub const P_INSET: f64 = 1e-9;

/// Default cap on the return time.
pub const RETURN_CAP: usize = 100_000;

/// Refinement level of the partition whose element serves as tower base.
pub const TOWER_LEVEL: usize = 2;

/// Largest G_T2 offset used for a pair.
pub const PAIR_MAX_OFFSET: f64 = 1e-4;

/// Smallest offset kept at the far end of a pair construction.
pub const PAIR_MIN_OFFSET: f64 = 1e-10;

/// The base element P: a rectangle of the level-[`TOWER_LEVEL`] partition chosen for r0.
pub fn tower_base(r0: f64) -> Result<(MarkovPartition, usize)> {
    let mut part = MarkovPartition::level(TOWER_LEVEL);
    let p = part
        .select_p(r0)
        .ok_or(KatokError::NoValidElement { q: 1, achieved: 0 })?;
    Ok((part, p))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReturnRecord {
    pub start: TorusPoint,
    pub tau: usize,
    /// Times at which D_{r1} membership changes, framed by 0 and τ.
    pub itinerary: Vec<usize>,
    pub starts_inside: bool,
    /// log Jᵘ of F = G_T2^τ at `start`, when requested.
    pub log_ju_return: Option<f64>,
}

impl ReturnRecord {
    /// Number k of visits to D_{r1}.
    pub fn visits(&self) -> usize {
        let changes = self.itinerary.len() - 2;
        (changes + self.starts_inside as usize).div_ceil(2)
    }
}

struct Orbit {
    xs: Vec<TorusPoint>,
    jacs: Vec<Jacobian2>,
    itinerary: Vec<usize>,
    starts_inside: bool,
}

/// G-orbit from the base point `x0` until its Φ-image enters Int P.
fn run_to_return(
    map: &KatokMap,
    rect: &Rectangle,
    x0: TorusPoint,
    cap: usize,
    keep: bool,
) -> Result<Orbit> {
    let r1 = map.params.r1;
    let inside = |x: TorusPoint| in_disk(lift_eigen(x), r1);
    let starts_inside = inside(x0);
    let mut state = starts_inside;
    let mut itinerary = vec![0];
    let mut xs = vec![x0];
    let mut jacs = Vec::new();
    let mut x = x0;
    for n in 1..=cap {
        if keep {
            let ev = map.apply_g(x)?;
            jacs.push(ev.jacobian);
            x = ev.image;
            xs.push(x);
        } else {
            x = map.g_point(x)?;
        }
        if rect.contains(map.phi_fast(x)?, P_INSET) {
            itinerary.push(n);
            if !keep {
                xs.push(x);
            }
            return Ok(Orbit {
                xs,
                jacs,
                itinerary,
                starts_inside,
            });
        }
        if inside(x) != state {
            state = !state;
            itinerary.push(n);
        }
    }
    Err(KatokError::ReturnCapExceeded { cap })
}

/// log ‖dΦ(x) v‖ for a unit vector v.
fn log_dphi(map: &KatokMap, x: TorusPoint, v: Vector2<f64>) -> Result<f64> {
    let (_, j) = map.phi_with_jac(x)?;
    Ok((j * v).norm().ln())
}

/// First return of the G_T2 point `p ∈ Int P`.
pub fn first_return(
    map: &KatokMap,
    rect: &Rectangle,
    p: TorusPoint,
    cap: usize,
    with_ju: bool,
) -> Result<ReturnRecord> {
    if !rect.contains(p, P_INSET) {
        return Err(KatokError::HypothesisViolation(
            "start is not in Int P".into(),
        ));
    }
    let x0 = map.phi_inv(p)?;
    let orbit = run_to_return(map, rect, x0, cap, with_ju)?;
    let tau = *orbit.itinerary.last().unwrap();
    let log_ju_return = if with_ju {
        let (v0, _) = unstable_direction_base(map, x0, DEFAULT_BACK)?;
        let mut v = v0;
        let mut acc = 0.0;
        for j in &orbit.jacs {
            v = j * v;
            let s = v.norm();
            acc += s.ln();
            v /= s;
        }
        Some(acc + log_dphi(map, orbit.xs[tau], v)? - log_dphi(map, x0, v0)?)
    } else {
        None
    };
    Ok(ReturnRecord {
        start: p,
        tau,
        itinerary: orbit.itinerary,
        starts_inside: orbit.starts_inside,
        log_ju_return,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReturnSample {
    pub records: Vec<ReturnRecord>,
    pub discarded: usize,
    pub area: f64,
}

/// Uniform starts in P (area measure), one stream per sample.
pub fn sample_returns(
    map: &KatokMap,
    rect: &Rectangle,
    samples: usize,
    cap: usize,
    with_ju: bool,
    seed: u64,
) -> Result<ReturnSample> {
    let out = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, 81, i);
            let mut p = rect.sample(&mut rng);
            while !rect.contains(p, P_INSET) {
                p = rect.sample(&mut rng);
            }
            match first_return(map, rect, p, cap, with_ju) {
                Ok(r) => Ok(Some(r)),
                Err(KatokError::ReturnCapExceeded { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let discarded = out.iter().filter(|r| r.is_none()).count();
    Ok(ReturnSample {
        records: out.into_iter().flatten().collect(),
        discarded,
        area: rect.area(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KacReport {
    pub samples: usize,
    pub discarded: usize,
    pub mean_tau: f64,
    pub std_err: f64,
    pub inverse_area: f64,
    pub rel_error: f64,
}

impl KacReport {
    pub fn within(&self, tol: f64) -> bool {
        self.rel_error.abs() < tol
    }
}

pub fn kac_report(s: &ReturnSample) -> KacReport {
    let taus: Vec<f64> = s.records.iter().map(|r| r.tau as f64).collect();
    let m = mean(&taus);
    let inv = 1.0 / s.area;
    KacReport {
        samples: s.records.len() + s.discarded,
        discarded: s.discarded,
        mean_tau: m,
        std_err: (variance(&taus) / taus.len() as f64).sqrt(),
        inverse_area: inv,
        rel_error: (m - inv) / inv,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReturnHistogram {
    /// (τ, count), increasing τ.
    pub counts: Vec<(usize, u64)>,
    pub samples: usize,
    pub discarded: usize,
    /// Σ freq, equal to 1 - discarded fraction.
    pub total_frequency: f64,
    /// Σ τ·freq over the observed records.
    pub kac_sum: f64,
    /// Σ_{τ ≤ n} τ·freq at n = 2^k, the convergence diagnostic for the mean.
    pub partial_sums: Vec<(usize, f64)>,
    /// Slope of log P(τ > n) against n on the upper half of the support.
    pub exponential_rate: f64,
    /// Slope of log P(τ > n) against log n on the same range.
    pub power_exponent: f64,
}

pub fn return_histogram(s: &ReturnSample) -> Result<ReturnHistogram> {
    let n = s.records.len();
    if n < 1000 {
        return Err(KatokError::InsufficientData(format!("{n} return records")));
    }
    let total = n + s.discarded;
    let mut taus: Vec<usize> = s.records.iter().map(|r| r.tau).collect();
    taus.sort_unstable();
    let mut counts: Vec<(usize, u64)> = Vec::new();
    for t in &taus {
        match counts.last_mut() {
            Some((v, c)) if v == t => *c += 1,
            _ => counts.push((*t, 1)),
        }
    }
    let freq = |c: u64| c as f64 / total as f64;
    let terms: Vec<f64> = counts.iter().map(|(t, c)| *t as f64 * freq(*c)).collect();
    let mut partial_sums = Vec::new();
    let mut k = 1;
    while k <= taus[n - 1] {
        let upto: Vec<f64> = counts
            .iter()
            .zip(&terms)
            .filter(|((t, _), _)| *t <= k)
            .map(|(_, v)| *v)
            .collect();
        partial_sums.push((k, pairwise_sum(&upto)));
        k *= 2;
    }
    // survival function on a geometric grid between the median and the 99.9% quantile
    let lo = taus[n / 2].max(2);
    let hi = taus[(n * 999) / 1000].max(lo + 2);
    let mut xs = Vec::new();
    let mut logs = Vec::new();
    let mut logy = Vec::new();
    let mut m = lo as f64;
    while m <= hi as f64 {
        let t = m as usize;
        let surv = taus.len() - taus.partition_point(|v| *v <= t);
        if surv > 0 {
            xs.push(t as f64);
            logs.push((t as f64).ln());
            logy.push((surv as f64 / total as f64).ln());
        }
        m *= 1.15;
    }
    if xs.len() < 3 {
        return Err(KatokError::InsufficientData(
            "return-time tail too short".into(),
        ));
    }
    Ok(ReturnHistogram {
        counts: counts.clone(),
        samples: total,
        discarded: s.discarded,
        total_frequency: counts.iter().map(|(_, c)| freq(*c)).sum(),
        kac_sum: pairwise_sum(&terms),
        partial_sums,
        exponential_rate: linear_fit(&xs, &logy).slope,
        power_exponent: linear_fit(&logs, &logy).slope,
    })
}

/// Stable direction of G at `x`: the eigenvector of A pulled back from `n_fwd` steps ahead.
pub fn stable_direction_base(map: &KatokMap, x: TorusPoint, n_fwd: usize) -> Result<Vector2<f64>> {
    let mut jacs = Vec::with_capacity(n_fwd);
    let mut q = x;
    for _ in 0..n_fwd {
        let ev = map.apply_g(q)?;
        jacs.push(ev.jacobian);
        q = ev.image;
    }
    let (_, e_s) = eigen_basis();
    let mut v = e_s;
    for j in jacs.iter().rev() {
        let back = j.try_inverse().unwrap_or_else(Jacobian2::identity);
        v = back * v;
        v /= v.norm();
    }
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PairKind {
    Stable,
    Unstable,
}

/// One pair (x, y) in a common s-set, followed through a full return.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairRecord {
    pub kind: PairKind,
    pub tau: usize,
    /// G_T2 distance of G^j x and G^j y for j = 0..=τ.
    pub distances: Vec<f64>,
    /// |log JᵘF(x) - log JᵘF(y)|
    pub distortion: f64,
}

impl PairRecord {
    /// d(Fx, Fy)/d(x, y).
    pub fn ratio(&self) -> f64 {
        self.distances[self.tau] / self.distances[0]
    }

    /// max_j d(Gʲx, Gʲy) / max(d(x,y), d(Fx,Fy)).
    pub fn expansion_k(&self) -> f64 {
        let top = self.distances.iter().copied().fold(0.0, f64::max);
        top / self.distances[0].max(self.distances[self.tau])
    }

    /// Distortion per unit G_T2 distance at the start.
    pub fn distortion_rate(&self) -> f64 {
        self.distortion / self.distances[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairOutcome {
    Kept,
    /// The offset needed at the far end falls below [`PAIR_MIN_OFFSET`].
    Infeasible,
    /// The partner returned at another time or with another itinerary.
    Inconsistent,
}

fn log_ju_along(jacs: &[Jacobian2], v0: Vector2<f64>) -> (f64, Vector2<f64>) {
    let mut v = v0;
    let mut acc = 0.0;
    for j in jacs {
        v = j * v;
        let s = v.norm();
        acc += s.ln();
        v /= s;
    }
    (acc, v)
}

fn log_ju_return(map: &KatokMap, orbit: &Orbit) -> Result<f64> {
    let x0 = orbit.xs[0];
    let (v0, _) = unstable_direction_base(map, x0, DEFAULT_BACK)?;
    let (acc, v) = log_ju_along(&orbit.jacs, v0);
    Ok(acc + log_dphi(map, *orbit.xs.last().unwrap(), v)? - log_dphi(map, x0, v0)?)
}

fn same_s_set(a: &Orbit, b: &Orbit) -> bool {
    a.itinerary == b.itinerary && a.starts_inside == b.starts_inside
}

/// Builds the stable or unstable partner of the G_T2 point `p` and follows both through F.
pub fn build_pair(
    map: &KatokMap,
    rect: &Rectangle,
    p: TorusPoint,
    kind: PairKind,
    cap: usize,
) -> Result<(PairOutcome, Option<PairRecord>)> {
    let x0 = map.phi_inv(p)?;
    let orbit = run_to_return(map, rect, x0, cap, true)?;
    let tau = orbit.xs.len() - 1;
    let dphi: Vec<Jacobian2> = orbit
        .xs
        .iter()
        .map(|x| map.phi_with_jac(*x).map(|(_, j)| j))
        .collect::<Result<_>>()?;
    // tangent offsets w_j along the orbit, unit G_T2 length at the small end
    let mut w = vec![Vector2::zeros(); tau + 1];
    let ys: Vec<TorusPoint> = match kind {
        PairKind::Stable => {
            let e = stable_direction_base(map, orbit.xs[tau], DEFAULT_BACK)?;
            w[tau] = e / (dphi[tau] * e).norm();
            for j in (0..tau).rev() {
                w[j] = orbit.jacs[j]
                    .try_inverse()
                    .unwrap_or_else(Jacobian2::identity)
                    * w[j + 1];
            }
            let scale = (PAIR_MAX_OFFSET / (dphi[0] * w[0]).norm()).min(PAIR_MAX_OFFSET);
            if scale < PAIR_MIN_OFFSET {
                return Ok((PairOutcome::Infeasible, None));
            }
            let mut y = TorusPoint::new(
                orbit.xs[tau].x + scale * w[tau][0],
                orbit.xs[tau].y + scale * w[tau][1],
            );
            let mut ys = vec![y];
            for _ in 0..tau {
                y = map.apply_g_inv(y)?.image;
                ys.push(y);
            }
            ys.reverse();
            ys
        }
        PairKind::Unstable => {
            let (e, _) = unstable_direction_base(map, x0, DEFAULT_BACK)?;
            w[0] = e / (dphi[0] * e).norm();
            for j in 0..tau {
                w[j + 1] = orbit.jacs[j] * w[j];
            }
            let scale = (PAIR_MAX_OFFSET / (dphi[tau] * w[tau]).norm()).min(PAIR_MAX_OFFSET);
            if scale < PAIR_MIN_OFFSET {
                return Ok((PairOutcome::Infeasible, None));
            }
            let y0 = TorusPoint::new(x0.x + scale * w[0][0], x0.y + scale * w[0][1]);
            let mut y = y0;
            let mut ys = vec![y];
            for _ in 0..tau {
                y = map.g_point(y)?;
                ys.push(y);
            }
            ys
        }
    };
    // the partner must lie in the same s-set
    let partner = match run_to_return(map, rect, ys[0], tau, true) {
        Ok(o) => o,
        Err(KatokError::ReturnCapExceeded { .. }) => return Ok((PairOutcome::Inconsistent, None)),
        Err(e) => return Err(e),
    };
    if partner.xs.len() != tau + 1 || !same_s_set(&orbit, &partner) {
        return Ok((PairOutcome::Inconsistent, None));
    }
    let distances = (0..=tau)
        .map(|j| (dphi[j] * orbit.xs[j].delta_to(&ys[j])).norm())
        .collect();
    let distortion = (log_ju_return(map, &orbit)? - log_ju_return(map, &partner)?).abs();
    Ok((
        PairOutcome::Kept,
        Some(PairRecord {
            kind,
            tau,
            distances,
            distortion,
        }),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairSample {
    pub kind: PairKind,
    pub attempted: usize,
    pub infeasible: usize,
    pub inconsistent: usize,
    pub pairs: Vec<PairRecord>,
}

/// Pairs started from uniform points of P; attempts continue until `want` pairs are kept
/// or `max_attempts` is reached.
pub fn sample_pairs(
    map: &KatokMap,
    rect: &Rectangle,
    kind: PairKind,
    want: usize,
    max_attempts: usize,
    seed: u64,
) -> Result<PairSample> {
    let stream = match kind {
        PairKind::Stable => 82,
        PairKind::Unstable => 83,
    };
    let mut out = PairSample {
        kind,
        attempted: 0,
        infeasible: 0,
        inconsistent: 0,
        pairs: Vec::new(),
    };
    let chunk = 64;
    while out.pairs.len() < want && out.attempted < max_attempts {
        let base = out.attempted as u64;
        let n = chunk.min(max_attempts - out.attempted) as u64;
        let batch = (base..base + n)
            .into_par_iter()
            .map(|i| {
                let mut rng = sample_rng(seed, stream, i);
                let mut p = rect.sample(&mut rng);
                while !rect.contains(p, P_INSET) {
                    p = rect.sample(&mut rng);
                }
                match build_pair(map, rect, p, kind, RETURN_CAP) {
                    Err(KatokError::ReturnCapExceeded { .. }) => {
                        Ok((PairOutcome::Infeasible, None))
                    }
                    r => r,
                }
            })
            .collect::<Result<Vec<_>>>()?;
        for (outcome, rec) in batch {
            if out.pairs.len() >= want {
                break;
            }
            out.attempted += 1;
            match outcome {
                PairOutcome::Kept => out.pairs.extend(rec),
                PairOutcome::Infeasible => out.infeasible += 1,
                PairOutcome::Inconsistent => out.inconsistent += 1,
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DistortionReport {
    /// max |log JᵘF(x)/JᵘF(y)| / d(x,y) over stable pairs.
    pub rate_max: f64,
    /// Geometric decay constant of the distortion along tower iterates.
    pub kappa: f64,
    /// max over pairs of Σₙ distortion at Fⁿ, from rate_max · d · κⁿ.
    pub sum_max: f64,
    /// Σ bound allowed by the configuration.
    pub sum_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TowerReport {
    pub stable: PairSample,
    pub unstable: PairSample,
    /// Empirical (Y3) constant over stable pairs.
    pub a_stable: f64,
    /// d(x,y)/d(Fx,Fy) over unstable pairs.
    pub a_unstable: f64,
    pub distortion: DistortionReport,
    /// K from the first half of the pairs and from all of them.
    pub k_half: f64,
    pub k_full: f64,
    /// Fraction of attempted stable partners that stayed in the s-set of their point.
    pub markov_consistency: f64,
}

impl TowerReport {
    pub fn y3_holds(&self) -> bool {
        !self.stable.pairs.is_empty() && self.a_stable < 1.0 && self.a_unstable < 1.0
    }

    pub fn y4_holds(&self) -> bool {
        self.distortion.kappa < 1.0 && self.distortion.sum_max < self.distortion.sum_bound
    }

    pub fn k_stable(&self, tol: f64) -> bool {
        self.k_full.is_finite() && (self.k_full - self.k_half).abs() <= tol * self.k_half
    }

    pub fn holds(&self) -> bool {
        self.y3_holds() && self.y4_holds() && self.k_stable(0.2)
    }
}

fn max_of<I: Iterator<Item = f64>>(it: I) -> f64 {
    it.fold(0.0, f64::max)
}

/// (Y3), (Y4) and K stability from `pairs` stable and unstable pairs.
pub fn check_tower(
    map: &KatokMap,
    rect: &Rectangle,
    pairs: usize,
    sum_bound: f64,
    seed: u64,
) -> Result<TowerReport> {
    let attempts = pairs * 40;
    let stable = sample_pairs(map, rect, PairKind::Stable, pairs, attempts, seed)?;
    let unstable = sample_pairs(map, rect, PairKind::Unstable, pairs, attempts, seed)?;
    let a_stable = max_of(stable.pairs.iter().map(|p| p.ratio()));
    let a_unstable = max_of(unstable.pairs.iter().map(|p| 1.0 / p.ratio()));
    let rate_max = max_of(stable.pairs.iter().map(|p| p.distortion_rate()));
    // successive returns contract stable distances by the ratios seen on single returns,
    // so the distortion at Fⁿ is at most rate · d · κⁿ with κ their geometric mean
    let logs: Vec<f64> = stable.pairs.iter().map(|p| p.ratio().ln()).collect();
    let kappa = mean(&logs).exp();
    let d_max = max_of(stable.pairs.iter().map(|p| p.distances[0]));
    let sum_max = if kappa < 1.0 {
        rate_max * d_max / (1.0 - kappa)
    } else {
        f64::INFINITY
    };
    let all: Vec<&PairRecord> = stable.pairs.iter().chain(&unstable.pairs).collect();
    let half_s = stable.pairs.len() / 2;
    let half_u = unstable.pairs.len() / 2;
    let k_half = max_of(
        stable.pairs[..half_s]
            .iter()
            .chain(&unstable.pairs[..half_u])
            .map(|p| p.expansion_k()),
    );
    let k_full = max_of(all.iter().map(|p| p.expansion_k()));
    let feasible = stable.attempted - stable.infeasible;
    let markov_consistency = if feasible > 0 {
        stable.pairs.len() as f64 / feasible as f64
    } else {
        f64::NAN
    };
    Ok(TowerReport {
        a_stable,
        a_unstable,
        distortion: DistortionReport {
            rate_max,
            kappa,
            sum_max,
            sum_bound,
        },
        k_half,
        k_full,
        markov_consistency,
        stable,
        unstable,
    })
}

/// Uniform point of P for callers outside the crate.
pub fn sample_in(rect: &Rectangle, rng: &mut impl Rng) -> TorusPoint {
    loop {
        let p = rect.sample(rng);
        if rect.contains(p, P_INSET) {
            return p;
        }
    }
}
