//! Unstable directions, Lyapunov exponents, periodic orbits and the pressure of
//! the geometric potential -t log|dG_T2|Eᵘ|, plus correlation and CLT diagnostics
//! for the area.
//!
//! Most work happens on the slowed map G. Φ conjugates G to G_T2 exactly, so
//! periodic orbits, multipliers and Birkhoff sums of log Jᵘ agree up to the two
//! endpoint factors of dΦ, which are only applied where a G_T2 quantity is
//! reported pointwise.

use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{KatokError, Result};
use crate::katok::KatokMap;
use crate::numerics::sample_rng;
use crate::numerics::stats::{batch_means_se, gaussian_sup_distance, mean, pairwise_sum, variance};
use crate::params::{eigen_basis, lift_eigen, Jacobian2, TorusPoint, LOG_LAMBDA};
use crate::symbolic::{fixed_point_count, primitive_orbits};

/// History used for unstable directions unless the caller asks otherwise.
pub const DEFAULT_BACK: usize = 50;

/// Residual accepted by [`unstable_direction`].
pub const SETTLE_TOL: f64 = 1e-8;

/// Longest history tried; histories lingering near the fixed point settle only polynomially.
pub const MAX_BACK: usize = 1600;

/// Newton stops once every shooting residual is below this.
pub const NEWTON_TOL: f64 = 1e-12;

const NEWTON_MAX_ITERS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UnstableDirection {
    pub p: TorusPoint,
    pub e_u: [f64; 2],
    pub settle_iters: usize,
    /// Change in the direction when one more step of history is used.
    pub residual: f64,
}

fn unit(v: Vector2<f64>) -> Vector2<f64> {
    let v = v / v.norm();
    // fix the sign so directions from different histories compare
    if v[0] < 0.0 || (v[0] == 0.0 && v[1] < 0.0) {
        -v
    } else {
        v
    }
}

/// Unstable direction of G at `x` (standard coordinates) with its settling residual.
///
/// Pulls `x` back `n_back` steps and pushes the eigenvector of A forward; a second
/// push started one step later gives the residual.
pub fn unstable_direction_base(
    map: &KatokMap,
    x: TorusPoint,
    n_back: usize,
) -> Result<(Vector2<f64>, f64)> {
    let n_back = n_back.max(1);
    // inverse Jacobians dG⁻¹ at x_{-k+1}, k = 1..n
    let mut inv = Vec::with_capacity(n_back);
    let mut q = x;
    for _ in 0..n_back {
        let ev = map.apply_g_inv(q)?;
        inv.push(ev.jacobian);
        q = ev.image;
    }
    let (e_u, _) = eigen_basis();
    let mut long = e_u;
    let mut short = e_u;
    for (k, j) in inv.iter().enumerate().rev() {
        let fwd = j.try_inverse().unwrap_or_else(Matrix2::identity);
        long = unit(fwd * long);
        if k < n_back - 1 {
            short = unit(fwd * short);
        }
    }
    if n_back == 1 {
        short = e_u;
    }
    Ok((long, (long - short).norm()))
}

/// Eᵘ of G_T2 at `p`, doubling the history from `n_back` until the residual reaches
/// [`SETTLE_TOL`]; fails past [`MAX_BACK`].
pub fn unstable_direction(
    map: &KatokMap,
    p: TorusPoint,
    n_back: usize,
) -> Result<UnstableDirection> {
    if n_back == 0 {
        return Err(KatokError::InvalidParams(
            "n_back must be at least 1".into(),
        ));
    }
    let x = map.phi_inv(p)?;
    let mut n_back = n_back;
    let (v, residual) = loop {
        let (v, residual) = unstable_direction_base(map, x, n_back)?;
        if residual <= SETTLE_TOL {
            break (v, residual);
        }
        if n_back >= MAX_BACK {
            return Err(KatokError::Convergence { residual });
        }
        n_back = (2 * n_back).min(MAX_BACK);
    };
    let (_, dphi) = map.phi_with_jac(x)?;
    let e = unit(dphi * v);
    Ok(UnstableDirection {
        p,
        e_u: [e[0], e[1]],
        settle_iters: n_back,
        residual,
    })
}

/// log ‖dG_T2(p) eᵘ(p)‖; 0 at the neutral fixed point.
pub fn log_ju(map: &KatokMap, p: TorusPoint) -> Result<f64> {
    if p == TorusPoint::ORIGIN {
        return Ok(0.0);
    }
    let d = unstable_direction(map, p, DEFAULT_BACK)?;
    let j = map.dgt2(p)?;
    Ok((j * Vector2::new(d.e_u[0], d.e_u[1])).norm().ln())
}

/// log ‖dG_T2ⁿ(p) eᵘ(p)‖, the left side of the cocycle identity.
pub fn log_ju_sum(map: &KatokMap, p: TorusPoint, n: usize) -> Result<f64> {
    if p == TorusPoint::ORIGIN {
        return Ok(0.0);
    }
    let d = unstable_direction(map, p, DEFAULT_BACK)?;
    let mut v = Vector2::new(d.e_u[0], d.e_u[1]);
    let mut q = p;
    let mut acc = 0.0;
    for _ in 0..n {
        let ev = map.apply_gt2(q)?;
        v = ev.jacobian * v;
        let s = v.norm();
        acc += s.ln();
        v /= s;
        q = ev.image;
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LyapunovEstimate {
    pub chi: f64,
    pub std_err: f64,
    pub iters: usize,
    pub start: TorusPoint,
}

/// Birkhoff average of log Jᵘ along the orbit of the G_T2 point `p0`.
pub fn lyapunov_exponent(map: &KatokMap, p0: TorusPoint, iters: usize) -> Result<LyapunovEstimate> {
    if iters < 100 {
        return Err(KatokError::InsufficientData(format!("{iters} iterates")));
    }
    let mut x = map.phi_inv(p0)?;
    let (mut v, _) = unstable_direction_base(map, x, DEFAULT_BACK)?;
    let mut incr = Vec::with_capacity(iters);
    for _ in 0..iters {
        let ev = map.apply_g(x)?;
        v = ev.jacobian * v;
        let s = v.norm();
        incr.push(s.ln());
        v /= s;
        x = ev.image;
    }
    Ok(LyapunovEstimate {
        chi: mean(&incr),
        std_err: batch_means_se(&incr, 50),
        iters,
        start: p0,
    })
}

/// Independent uniform starts, one per seed index.
pub fn lyapunov_runs(
    map: &KatokMap,
    iters: usize,
    runs: usize,
    seed: u64,
) -> Result<Vec<LyapunovEstimate>> {
    (0..runs as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, 61, i);
            lyapunov_exponent(map, TorusPoint::new(rng.gen(), rng.gen()), iters)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodicOrbit {
    /// Orbit points of G, in order.
    pub points: Vec<TorusPoint>,
    /// log of the unstable multiplier over one period.
    pub log_multiplier: f64,
    pub residual: f64,
    /// Seed point of A.
    pub seed: TorusPoint,
}

impl PeriodicOrbit {
    pub fn period(&self) -> usize {
        self.points.len()
    }
}

fn log_spectral_radius(m: &Jacobian2) -> f64 {
    let tr = m.trace();
    let det = m.determinant();
    let disc = tr * tr - 4.0 * det;
    if disc <= 0.0 {
        return 0.5 * det.abs().ln();
    }
    ((tr.abs() + disc.sqrt()) * 0.5).ln()
}

fn shooting_residuals(
    map: &KatokMap,
    xs: &[TorusPoint],
) -> Result<(Vec<Vector2<f64>>, Vec<Jacobian2>)> {
    let d = xs.len();
    let mut r = Vec::with_capacity(d);
    let mut j = Vec::with_capacity(d);
    for i in 0..d {
        let ev = map.apply_g(xs[i])?;
        r.push(xs[(i + 1) % d].delta_to(&ev.image));
        j.push(ev.jacobian);
    }
    Ok((r, j))
}

fn max_norm(r: &[Vector2<f64>]) -> f64 {
    r.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Multiple-shooting Newton for a G-orbit of minimal period `seed.len()`.
pub fn refine_orbit(map: &KatokMap, seed: &[TorusPoint]) -> Result<PeriodicOrbit> {
    let d = seed.len();
    if seed.contains(&TorusPoint::ORIGIN) {
        return Ok(PeriodicOrbit {
            points: vec![TorusPoint::ORIGIN],
            log_multiplier: 0.0,
            residual: 0.0,
            seed: TorusPoint::ORIGIN,
        });
    }
    let mut xs = seed.to_vec();
    let (mut r, mut js) = shooting_residuals(map, &xs)?;
    let mut res = max_norm(&r);
    let mut iters = 0;
    while res > NEWTON_TOL {
        iters += 1;
        if iters > NEWTON_MAX_ITERS {
            return Err(KatokError::NewtonDivergence {
                x: seed[0].x,
                y: seed[0].y,
            });
        }
        // dx_{i+1} = J_i dx_i + r_i around the loop: (I - M) dx_0 = R
        let mut m = Matrix2::identity();
        let mut acc = Vector2::zeros();
        for i in 0..d {
            m = js[i] * m;
            acc = js[i] * acc + r[i];
        }
        let lhs = Matrix2::identity() - m;
        let Some(dx0) = lhs.lu().solve(&acc) else {
            return Err(KatokError::NewtonDivergence {
                x: seed[0].x,
                y: seed[0].y,
            });
        };
        let mut dx = Vec::with_capacity(d);
        let mut cur = dx0;
        for i in 0..d {
            dx.push(cur);
            cur = js[i] * cur + r[i];
        }
        let mut step = 1.0;
        loop {
            let trial: Vec<TorusPoint> = xs
                .iter()
                .zip(&dx)
                .map(|(p, v)| TorusPoint::new(p.x + step * v[0], p.y + step * v[1]))
                .collect();
            let (r2, j2) = shooting_residuals(map, &trial)?;
            let res2 = max_norm(&r2);
            if res2 < res || step < 1.0 / 256.0 {
                xs = trial;
                r = r2;
                js = j2;
                res = res2;
                break;
            }
            step *= 0.5;
        }
    }
    let m = js.iter().fold(Matrix2::identity(), |m, j| j * m);
    Ok(PeriodicOrbit {
        points: xs,
        log_multiplier: log_spectral_radius(&m),
        residual: res,
        seed: seed[0],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrimitiveLevel {
    pub period: usize,
    pub orbits: Vec<PeriodicOrbit>,
    /// Seeds whose Newton run failed or landed on an orbit found already.
    pub unresolved: usize,
}

fn orbit_keys(o: &PeriodicOrbit) -> Vec<(i64, i64)> {
    o.points
        .iter()
        .map(|p| {
            let k = |v: f64| ((v * 1e8).round() as i64).rem_euclid(100_000_000);
            (k(p.x), k(p.y))
        })
        .collect()
}

/// G-orbits of minimal period `d`, one Newton run per A-orbit.
pub fn primitive_level(map: &KatokMap, d: usize) -> Result<PrimitiveLevel> {
    let seeds = primitive_orbits(d as u32)?;
    let found: Vec<Option<PeriodicOrbit>> = seeds
        .par_iter()
        .map(|s| refine_orbit(map, s).ok())
        .collect();
    let mut seen = std::collections::HashSet::new();
    let mut orbits = Vec::with_capacity(found.len());
    let mut unresolved = 0;
    for o in found {
        match o {
            Some(o) if o.period() == d && !orbit_keys(&o).iter().any(|k| seen.contains(k)) => {
                seen.extend(orbit_keys(&o));
                orbits.push(o);
            }
            _ => unresolved += 1,
        }
    }
    Ok(PrimitiveLevel {
        period: d,
        orbits,
        unresolved,
    })
}

/// Periodic points of G_T2 of period `n`, with the multiplier log over n steps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPoints {
    pub n: usize,
    pub expected: u128,
    pub found: u128,
    pub points: Vec<TorusPoint>,
    pub log_multipliers: Vec<f64>,
}

impl FixedPoints {
    pub fn complete(&self) -> bool {
        self.found == self.expected
    }
}

fn fixed_points_from(
    levels: &[PrimitiveLevel],
    n: usize,
    with_points: bool,
    map: &KatokMap,
) -> Result<FixedPoints> {
    let mut points = Vec::new();
    let mut logs = Vec::new();
    for lvl in levels.iter().filter(|l| n.is_multiple_of(l.period)) {
        let reps = (n / lvl.period) as f64;
        for o in &lvl.orbits {
            for p in &o.points {
                if with_points {
                    points.push(map.phi(*p)?);
                }
                logs.push(reps * o.log_multiplier);
            }
        }
    }
    Ok(FixedPoints {
        n,
        expected: fixed_point_count(n as u32)?,
        found: logs.len() as u128,
        points,
        log_multipliers: logs,
    })
}

/// Fix(G_T2ⁿ) in G_T2 coordinates.
pub fn periodic_orbits(map: &KatokMap, n: usize) -> Result<FixedPoints> {
    let levels = (1..=n)
        .filter(|d| n.is_multiple_of(*d))
        .map(|d| primitive_level(map, d))
        .collect::<Result<Vec<_>>>()?;
    fixed_points_from(&levels, n, true, map)
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let terms: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    m + pairwise_sum(&terms).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PressureCurve {
    pub t: Vec<f64>,
    pub levels: Vec<usize>,
    /// per_level[i][k] = (1/n_i) log Z_{n_i}(t_k)
    pub per_level: Vec<Vec<f64>>,
    /// max(0, log(Zʰ_n / Zʰ_{n-1})) at the top level, Zʰ omitting the neutral fixed point.
    pub extrapolated: Vec<f64>,
    /// Change of the hyperbolic ratio between the two top levels, per t.
    pub drift: Vec<f64>,
    pub counts_exact_through: usize,
    pub unresolved: usize,
}

impl PressureCurve {
    /// Largest increase between neighbouring grid values.
    pub fn monotonicity_defect(&self) -> f64 {
        self.extrapolated
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Most negative second difference.
    pub fn convexity_defect(&self) -> f64 {
        self.extrapolated
            .windows(3)
            .map(|w| -(w[0] - 2.0 * w[1] + w[2]))
            .fold(0.0, f64::max)
    }

    pub fn at(&self, t: f64) -> Option<f64> {
        self.t
            .iter()
            .position(|v| (v - t).abs() < 1e-12)
            .map(|i| self.extrapolated[i])
    }
}

/// log Z_n(t) = log Σ_{p ∈ Fix(Gⁿ)} exp(-t log Jᵘ_n(p)).
pub fn log_partition(fp: &FixedPoints, t: f64) -> f64 {
    let w: Vec<f64> = fp.log_multipliers.iter().map(|l| -t * l).collect();
    log_sum_exp(&w)
}

/// Same sum without the neutral fixed point, which is always listed first.
pub fn log_partition_hyperbolic(fp: &FixedPoints, t: f64) -> f64 {
    let w: Vec<f64> = fp.log_multipliers[1..].iter().map(|l| -t * l).collect();
    log_sum_exp(&w)
}

pub fn pressure_estimate(map: &KatokMap, t: f64, n: usize) -> Result<f64> {
    let fp = periodic_orbits(map, n)?;
    Ok(log_partition(&fp, t) / n as f64)
}

/// Fix(Gⁿ) multipliers for n = 1..=n_max, sharing the Newton work between levels.
pub fn fixed_point_levels(map: &KatokMap, n_max: usize) -> Result<Vec<FixedPoints>> {
    let prim = (1..=n_max)
        .map(|d| primitive_level(map, d))
        .collect::<Result<Vec<_>>>()?;
    (1..=n_max)
        .map(|n| fixed_points_from(&prim, n, false, map))
        .collect()
}

/// Periodic-orbit pressure on `t_grid` from all periods up to `n_max`.
pub fn pressure_curve(map: &KatokMap, t_grid: &[f64], n_max: usize) -> Result<PressureCurve> {
    if n_max < 4 {
        return Err(KatokError::InsufficientData(format!("n_max = {n_max}")));
    }
    let fps = fixed_point_levels(map, n_max)?;
    let logz: Vec<Vec<f64>> = fps
        .iter()
        .map(|fp| t_grid.iter().map(|&t| log_partition(fp, t)).collect())
        .collect();
    let per_level = logz
        .iter()
        .enumerate()
        .map(|(i, row)| row.iter().map(|z| z / (i + 1) as f64).collect())
        .collect();
    // δ₀ has pressure exactly 0, so P = max(0, pressure of the remaining orbits);
    // the level ratio cancels the constant prefactor of Zʰ_n
    let logzh: Vec<Vec<f64>> = fps
        .iter()
        .map(|fp| {
            t_grid
                .iter()
                .map(|&t| log_partition_hyperbolic(fp, t))
                .collect()
        })
        .collect();
    let top = n_max - 1;
    let ratio = |n: usize, k: usize| logzh[n][k] - logzh[n - 1][k];
    let extrapolated: Vec<f64> = (0..t_grid.len()).map(|k| ratio(top, k).max(0.0)).collect();
    let drift = (0..t_grid.len())
        .map(|k| (ratio(top, k) - ratio(top - 1, k)).abs())
        .collect();
    let counts_exact_through = fps.iter().take_while(|f| f.complete()).count();
    Ok(PressureCurve {
        t: t_grid.to_vec(),
        levels: (1..=n_max).collect(),
        per_level,
        extrapolated,
        drift,
        counts_exact_through,
        unresolved: fps.iter().map(|f| (f.expected - f.found) as usize).sum(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct T0Estimate {
    pub h: f64,
    pub h_mu1: f64,
    pub log_lambda1: f64,
    pub t0: f64,
}

impl T0Estimate {
    pub fn negative(&self) -> bool {
        self.t0 < 0.0
    }
}

/// t₀ = (h - h_μ₁)/(log λ₁ - h_μ₁).
pub fn t0_estimate(h: f64, h_mu1: f64, log_lambda1: f64) -> Result<T0Estimate> {
    if log_lambda1.partial_cmp(&h_mu1) != Some(std::cmp::Ordering::Greater) {
        return Err(KatokError::InsufficientData(format!(
            "log λ₁ = {log_lambda1} does not exceed h_μ₁ = {h_mu1}"
        )));
    }
    Ok(T0Estimate {
        h,
        h_mu1,
        log_lambda1,
        t0: (h - h_mu1) / (log_lambda1 - h_mu1),
    })
}

/// Trig observables with zero area mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Observable {
    CosX,
    SinY,
    CosXPlusY,
    Zero,
}

impl Observable {
    pub const BUILTIN: [Observable; 3] =
        [Observable::CosX, Observable::SinY, Observable::CosXPlusY];

    pub fn eval(&self, p: TorusPoint) -> f64 {
        use std::f64::consts::TAU;
        match self {
            Observable::CosX => (TAU * p.x).cos(),
            Observable::SinY => (TAU * p.y).sin(),
            Observable::CosXPlusY => (TAU * (p.x + p.y)).cos(),
            Observable::Zero => 0.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Observable::CosX => "cos-x",
            Observable::SinY => "sin-y",
            Observable::CosXPlusY => "cos-x-plus-y",
            Observable::Zero => "zero",
        }
    }
}

/// Orbit of the uniform point `q` under G_T2, evaluated through G and the tabulated Φ.
fn gt2_orbit<F: FnMut(usize, TorusPoint)>(
    map: &KatokMap,
    q: TorusPoint,
    n: usize,
    mut f: F,
) -> Result<()> {
    let mut x = map.phi_inv(q)?;
    f(0, q);
    for k in 1..=n {
        x = map.g_point(x)?;
        f(k, map.phi_fast(x)?);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationCurve {
    pub h1: Observable,
    pub h2: Observable,
    pub samples: usize,
    pub c: Vec<f64>,
    /// Batch-means standard error of each Ĉ_n.
    pub noise: Vec<f64>,
}

impl CorrelationCurve {
    /// First lag from which |Ĉ_n| stays below `k` noise floors.
    pub fn settles_by(&self, k: f64) -> Option<usize> {
        let n = self.c.len();
        (0..n)
            .rev()
            .take_while(|&i| self.c[i].abs() <= k * self.noise[i])
            .last()
    }
}

/// Ĉ_n = mean h1(G_T2ⁿ x) h2(x) - mean h1 · mean h2 over uniform x, for n ≤ max_lag.
pub fn autocorrelation(
    map: &KatokMap,
    h1: Observable,
    h2: Observable,
    max_lag: usize,
    samples: usize,
    seed: u64,
) -> Result<CorrelationCurve> {
    let rows = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, 71, i);
            let q = TorusPoint::new(rng.gen(), rng.gen());
            let mut row = vec![0.0; max_lag + 1];
            gt2_orbit(map, q, max_lag, |k, p| row[k] = h1.eval(p))?;
            Ok((row, h2.eval(q)))
        })
        .collect::<Result<Vec<_>>>()?;
    let b: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let mb = mean(&b);
    let mut c = Vec::with_capacity(max_lag + 1);
    let mut noise = Vec::with_capacity(max_lag + 1);
    for k in 0..=max_lag {
        let a: Vec<f64> = rows.iter().map(|r| r.0[k]).collect();
        let prod: Vec<f64> = rows.iter().map(|r| r.0[k] * r.1).collect();
        c.push(mean(&prod) - mean(&a) * mb);
        noise.push(batch_means_se(&prod, 20));
    }
    Ok(CorrelationCurve {
        h1,
        h2,
        samples,
        c,
        noise,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CltLevel {
    pub n: usize,
    pub variance: f64,
    pub sup_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CltReport {
    pub h: Observable,
    pub samples: usize,
    pub levels: Vec<CltLevel>,
}

impl CltReport {
    pub fn final_distance(&self) -> f64 {
        self.levels.last().map_or(f64::NAN, |l| l.sup_distance)
    }
}

/// n^{-1/2} Birkhoff sums of `h` (empirically centered) at each n in `ns`, from shared orbits.
pub fn clt_diagnostic(
    map: &KatokMap,
    h: Observable,
    ns: &[usize],
    samples: usize,
    seed: u64,
) -> Result<CltReport> {
    let n_max = ns.iter().copied().max().unwrap_or(0);
    let sums = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, 72, i);
            let q = TorusPoint::new(rng.gen(), rng.gen());
            let mut acc = 0.0;
            let mut out = vec![0.0; ns.len()];
            gt2_orbit(map, q, n_max.saturating_sub(1), |k, p| {
                acc += h.eval(p);
                for (slot, &n) in ns.iter().enumerate() {
                    if k + 1 == n {
                        out[slot] = acc;
                    }
                }
            })?;
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let levels = ns
        .iter()
        .enumerate()
        .map(|(slot, &n)| {
            let raw: Vec<f64> = sums.iter().map(|s| s[slot]).collect();
            let m = mean(&raw);
            let z: Vec<f64> = raw.iter().map(|s| (s - m) / (n as f64).sqrt()).collect();
            CltLevel {
                n,
                variance: variance(&z),
                sup_distance: gaussian_sup_distance(&z),
            }
        })
        .collect();
    Ok(CltReport { h, samples, levels })
}

/// Fraction of uniform points whose G-lift falls inside D_r (area measure, base chart).
pub fn disk_frequency(map: &KatokMap, r: f64, n: usize, seed: u64) -> Result<f64> {
    let hits = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, 73, i);
            let x = map.sample_nu(&mut rng)?;
            Ok((lift_eigen(x).u() <= r) as usize)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(hits.iter().sum::<usize>() as f64 / n as f64)
}

/// log λ, the value log Jᵘ takes on orbits that never meet the slow-down.
pub fn linear_log_ju() -> f64 {
    LOG_LAMBDA
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::KatokParams;

    fn map() -> KatokMap {
        KatokMap::new(KatokParams::defaults())
    }

    #[test]
    fn t0_arithmetic() {
        let t = t0_estimate(0.8, 0.9, 0.96).unwrap();
        assert!((t.t0 + 5.0 / 3.0).abs() < 1e-12);
        assert!(t0_estimate(0.8, 0.9, 0.9).is_err());
    }

    #[test]
    fn far_from_the_disk_the_direction_is_the_eigenvector() {
        let m = map();
        let (e_u, _) = eigen_basis();
        // a periodic orbit of A that never enters the slowed region
        let orbit = primitive_orbits(6)
            .unwrap()
            .into_iter()
            .find(|o| o.iter().all(|p| m.slowdown_lift(*p).is_none()))
            .unwrap();
        let p = orbit[0];
        let (v, res) = unstable_direction_base(&m, p, 60).unwrap();
        assert!(res < 1e-10);
        assert!((v - unit(e_u)).norm() < 1e-8, "{v}");
    }

    #[test]
    fn low_periods_are_complete() {
        let m = map();
        let one = periodic_orbits(&m, 1).unwrap();
        assert_eq!(one.points, vec![TorusPoint::ORIGIN]);
        let two = periodic_orbits(&m, 2).unwrap();
        assert!(two.complete());
        let lvl = primitive_level(&m, 2).unwrap();
        for o in &lvl.orbits {
            assert!(o.residual < 1e-10);
        }
    }

    #[test]
    fn zero_observable_has_zero_correlation() {
        let m = map();
        let c = autocorrelation(&m, Observable::Zero, Observable::CosX, 3, 40, 1).unwrap();
        assert!(c.c.iter().all(|v| *v == 0.0));
    }
}
