//! Cone fields K± in the eigen chart, their invariance under dG, the slope
//! equation along the slowed flow and the angle-contraction factor γ.
//!
//! All angles and slopes are measured in the orthonormal eigen chart.

use nalgebra::Vector2;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{KatokError, Result};
use crate::katok::KatokMap;
use crate::numerics::ode::Control;
use crate::numerics::sample_rng;
use crate::params::{from_eigen, lift_eigen, standard_to_eigen, EigenPoint, Jacobian2, LAMBDA};
use crate::slowdown::SlowFlow;

/// Slopes beyond this leave the chart of slopes used by [`eta_flow`].
pub const ETA_LIMIT: f64 = 10.0;

/// Directions sampled across a cone by the invariance check.
pub const CONE_DIRECTIONS: usize = 32;

/// Directions in the coarse γ grid (refined afterwards).
pub const GAMMA_DIRECTIONS: usize = 64;

/// φ(η) = η/(2α) - (η-1)²/2.
pub fn cone_quadratic(eta: f64, alpha: f64) -> f64 {
    eta / (2.0 * alpha) - 0.5 * (eta - 1.0) * (eta - 1.0)
}

/// Positive root below 1 of φ; cones with μ above it are invariant.
pub fn mu0_analytic(alpha: f64) -> f64 {
    let b = 1.0 + 0.5 / alpha;
    // b - sqrt(b² - 1) = 1 / (b + sqrt(b² - 1)) avoids cancellation
    1.0 / (b + (b * b - 1.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Unstable,
    Stable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cone {
    pub mu: f64,
    pub orientation: Orientation,
}

impl Cone {
    pub fn new(mu: f64, orientation: Orientation) -> Result<Self> {
        if !(mu > 0.0 && mu < 1.0) {
            return Err(KatokError::InvalidParams(format!(
                "cone slope {mu} not in (0,1)"
            )));
        }
        Ok(Self { mu, orientation })
    }

    pub fn unstable(mu: f64) -> Result<Self> {
        Self::new(mu, Orientation::Unstable)
    }

    pub fn stable(mu: f64) -> Result<Self> {
        Self::new(mu, Orientation::Stable)
    }

    /// |v2/v1| for K⁺, |v1/v2| for K⁻.
    pub fn slope(&self, v: Vector2<f64>) -> f64 {
        match self.orientation {
            Orientation::Unstable => (v[1] / v[0]).abs(),
            Orientation::Stable => (v[0] / v[1]).abs(),
        }
    }

    pub fn contains(&self, v: Vector2<f64>) -> bool {
        self.slope(v) < self.mu
    }

    /// `n` directions with slopes evenly spread over [-μ, μ], boundary included.
    pub fn directions(&self, n: usize) -> Vec<Vector2<f64>> {
        (0..n)
            .map(|k| {
                let t = self.mu * (2.0 * k as f64 / (n - 1) as f64 - 1.0);
                self.direction(t)
            })
            .collect()
    }

    fn direction(&self, t: f64) -> Vector2<f64> {
        let v = match self.orientation {
            Orientation::Unstable => Vector2::new(1.0, t),
            Orientation::Stable => Vector2::new(t, 1.0),
        };
        v.normalize()
    }

    /// Largest slope of `j v` over the sampled directions of the cone.
    pub fn image_slope(&self, j: &Jacobian2, n: usize) -> f64 {
        self.directions(n)
            .into_iter()
            .map(|v| self.slope(j * v))
            .fold(0.0, f64::max)
    }
}

/// Result of the invariance check at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConeCheck {
    pub mu: f64,
    /// max slope of dG·K⁺(p) relative to K⁺(G p)
    pub forward_slope: f64,
    /// max slope of dG⁻¹·K⁻(p) relative to K⁻(G⁻¹ p)
    pub backward_slope: f64,
}

impl ConeCheck {
    pub fn holds(&self) -> bool {
        self.forward_slope < self.mu && self.backward_slope < self.mu
    }

    pub fn margin(&self) -> f64 {
        self.mu - self.forward_slope.max(self.backward_slope)
    }
}

/// dG(p) and dG⁻¹(p) in the eigen chart.
pub fn eigen_jacobians(map: &KatokMap, p: crate::TorusPoint) -> Result<(Jacobian2, Jacobian2)> {
    let f = map.apply_g(p)?.jacobian;
    let b = map.apply_g_inv(p)?.jacobian;
    Ok((standard_to_eigen(&f), standard_to_eigen(&b)))
}

fn check_from_jacobians(fwd: &Jacobian2, bwd: &Jacobian2, mu: f64) -> Result<ConeCheck> {
    Ok(ConeCheck {
        mu,
        forward_slope: Cone::unstable(mu)?.image_slope(fwd, CONE_DIRECTIONS),
        backward_slope: Cone::stable(mu)?.image_slope(bwd, CONE_DIRECTIONS),
    })
}

pub fn cone_check(map: &KatokMap, p: crate::TorusPoint, mu: f64) -> Result<ConeCheck> {
    let (f, b) = eigen_jacobians(map, p)?;
    check_from_jacobians(&f, &b, mu)
}

/// dG K⁺(p) ⊂ K⁺(G p) and dG⁻¹ K⁻(p) ⊂ K⁻(G⁻¹ p) on the direction grid.
pub fn check_cone_invariance(map: &KatokMap, p: crate::TorusPoint, mu: f64) -> Result<bool> {
    Ok(cone_check(map, p, mu)?.holds())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConeScan {
    pub mu: f64,
    pub samples: usize,
    pub failures: usize,
    pub worst_margin: f64,
}

/// Uniform point of D_r in the eigen chart.
pub fn sample_disk(rng: &mut impl Rng, r: f64) -> EigenPoint {
    let rho = (r * rng.gen::<f64>()).sqrt();
    let th = std::f64::consts::TAU * rng.gen::<f64>();
    EigenPoint::new(rho * th.cos(), rho * th.sin())
}

/// Invariance scan over `n` uniform points of D_{r0}, sharing the Jacobians across `mus`.
pub fn scan_cone_invariance(
    map: &KatokMap,
    mus: &[f64],
    n: usize,
    seed: u64,
) -> Result<Vec<ConeScan>> {
    let r0 = map.r0();
    let checks = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, 21, i);
            let p = from_eigen(sample_disk(&mut rng, r0));
            let (f, b) = eigen_jacobians(map, p)?;
            mus.iter()
                .map(|&mu| check_from_jacobians(&f, &b, mu))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(mus
        .iter()
        .enumerate()
        .map(|(k, &mu)| ConeScan {
            mu,
            samples: n,
            failures: checks.iter().filter(|c| !c[k].holds()).count(),
            worst_margin: checks
                .iter()
                .map(|c| c[k].margin())
                .fold(f64::INFINITY, f64::min),
        })
        .collect())
}

/// Right-hand side of the slope equation.
pub fn eta_rate(flow: &SlowFlow, s: EigenPoint, eta: f64) -> f64 {
    let u = s.u();
    let (p, dp) = (flow.psi.psi(u), flow.psi.psi_prime(u));
    -2.0 * flow.log_lambda * ((p + u * dp) * eta + s.s1 * s.s2 * dp * (eta * eta + 1.0))
}

/// Integrates the slope η of a tangent vector alongside the flow for time `t`.
pub fn eta_flow(flow: &SlowFlow, s0: EigenPoint, eta0: f64, t: f64) -> Result<(EigenPoint, f64)> {
    if eta0.abs() > ETA_LIMIT {
        return Err(KatokError::Blowup { eta: eta0 });
    }
    let (_, y) = flow.solver.integrate_observed(
        |_, y: &[f64; 3]| {
            let f = flow.field(&[y[0], y[1]]);
            [
                f[0],
                f[1],
                eta_rate(flow, EigenPoint::new(y[0], y[1]), y[2]),
            ]
        },
        0.0,
        [s0.s1, s0.s2, eta0],
        t,
        |_, y| {
            if y[2].abs() > ETA_LIMIT {
                Err(KatokError::Blowup { eta: y[2] })
            } else {
                Ok(Control::Continue)
            }
        },
    )?;
    Ok((EigenPoint::new(y[0], y[1]), y[2]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaEstimate {
    pub value: f64,
    /// max on the coarse grid alone
    pub grid_value: f64,
    /// slope in K⁺ where the max is attained
    pub argmax_slope: f64,
}

/// Angular stretch of `j` at slope `t`: dθ'/dθ = det j / |j v|².
fn angular_stretch(j: &Jacobian2, t: f64) -> f64 {
    let v = Vector2::new(1.0, t).normalize();
    j.determinant().abs() / (j * v).norm_squared()
}

/// γ for a linear map on K⁺ of slope μ.
///
/// For two directions the angle ratio is the mean of the angular stretch over the
/// arc between them, so the supremum over pairs is the supremum of the stretch.
pub fn gamma_of_jacobian(j: &Jacobian2, mu: f64, n: usize) -> GammaEstimate {
    let h = 2.0 * mu / (n - 1) as f64;
    let (mut best_k, mut best) = (0, f64::MIN);
    for k in 0..n {
        let g = angular_stretch(j, -mu + h * k as f64);
        if g > best {
            best = g;
            best_k = k;
        }
    }
    let grid_value = best;
    // golden-section search on the bracketing cells
    let mut a = (-mu + h * (best_k as f64 - 1.0)).max(-mu);
    let mut b = (-mu + h * (best_k as f64 + 1.0)).min(mu);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (angular_stretch(j, c), angular_stretch(j, d));
    for _ in 0..60 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = angular_stretch(j, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = angular_stretch(j, d);
        }
    }
    let t = 0.5 * (a + b);
    let refined = angular_stretch(j, t);
    if refined > grid_value {
        GammaEstimate {
            value: refined,
            grid_value,
            argmax_slope: t,
        }
    } else {
        GammaEstimate {
            value: grid_value,
            grid_value,
            argmax_slope: -mu + h * best_k as f64,
        }
    }
}

pub fn gamma_factor(map: &KatokMap, p: crate::TorusPoint, mu: f64) -> Result<GammaEstimate> {
    let j = standard_to_eigen(&map.apply_g(p)?.jacobian);
    Ok(gamma_of_jacobian(&j, mu, GAMMA_DIRECTIONS))
}

/// Exact γ of A on K⁺: the stretch is largest on the cone boundary.
pub fn gamma_linear(mu: f64) -> f64 {
    (1.0 + mu * mu) / (LAMBDA * LAMBDA + mu * mu / (LAMBDA * LAMBDA))
}

/// One orbit segment for the product bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProductSample {
    pub k: usize,
    pub s2_0: f64,
    pub product: f64,
    pub bound: f64,
}

impl ProductSample {
    pub fn holds(&self, tol: f64) -> bool {
        self.product <= self.bound * (1.0 + tol)
    }
}

/// ∏_{j≤k} γ(G^j x) for the maximal k with G^j x ∈ D_{r0/2}, and (1 + C₁ s₂(0)^{2α} k)^{-1/α}.
pub fn product_bound_sample(map: &KatokMap, s0: EigenPoint, mu: f64) -> Result<ProductSample> {
    let half = 0.5 * map.r0();
    if s0.u() > half {
        return Err(KatokError::HypothesisViolation(
            "start outside D_{r0/2}".into(),
        ));
    }
    let (alpha, c1) = (map.params.alpha, map.params.c1);
    let mut p = from_eigen(s0);
    let mut log_prod = 0.0;
    let mut k = 0usize;
    loop {
        let ev = map.apply_g(p)?;
        let g = gamma_of_jacobian(&standard_to_eigen(&ev.jacobian), mu, GAMMA_DIRECTIONS);
        log_prod += g.value.ln();
        if lift_eigen(ev.image).u() > half {
            break;
        }
        p = ev.image;
        k += 1;
        if k > 1_000_000 {
            return Err(KatokError::ReturnCapExceeded { cap: k });
        }
    }
    let s2 = s0.s2.abs();
    Ok(ProductSample {
        k,
        s2_0: s2,
        product: log_prod.exp(),
        bound: (1.0 + c1 * s2.powf(2.0 * alpha) * k as f64).powf(-1.0 / alpha),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProductReport {
    pub samples: usize,
    pub violations: usize,
    /// max of product / bound
    pub worst_ratio: f64,
    pub tolerance: f64,
}

/// Product-bound scan from uniform starts in D_{r0/2}.
pub fn check_product_bound(
    map: &KatokMap,
    mu: f64,
    n: usize,
    seed: u64,
    tol: f64,
) -> Result<ProductReport> {
    let half = 0.5 * map.r0();
    let samples = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, 22, i);
            product_bound_sample(map, sample_disk(&mut rng, half), mu)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProductReport {
        samples: n,
        violations: samples.iter().filter(|s| !s.holds(tol)).count(),
        worst_ratio: samples
            .iter()
            .map(|s| s.product / s.bound)
            .fold(0.0, f64::max),
        tolerance: tol,
    })
}
