//! The slowed map G, the area-correcting change of coordinates Φ and the
//! Katok map G_T2 = Φ ∘ G ∘ Φ⁻¹.
//!
//! G is the time-one map of the slowed flow on the lift of the torus. A point is
//! slowed iff its linear trajectory over [0,1] meets D_{r0}; that set (the
//! influence region S) is disjoint from its integer translates, so the lift to use
//! is unique. Outside S, G = A exactly.
//!
//! Φ = Θ ∘ φ_loc: the radial chart φ_loc sends the invariant density κ/κ₀ of G to
//! χ̃/κ₀, and the Moser transport Θ finishes the job globally.

pub mod green;
pub mod local;
pub mod moser;

use std::sync::OnceLock;

use nalgebra::Vector2;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::numerics::sample_rng;
use crate::params::{
    a_inv_matrix, a_matrix, eigen_to_standard, from_eigen, lift_eigen, EigenPoint, Jacobian2,
    KatokParams, TorusPoint, LAMBDA,
};
use crate::slowdown::{PsiProfile, SlowFlow};
use local::LocalChart;
use moser::{Moser, ThetaTable};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Linear,
    Slowdown,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapEvaluation {
    pub image: TorusPoint,
    pub jacobian: Jacobian2,
    pub branch: Branch,
}

/// Grid resolution of the cached Θ table.
pub const THETA_TABLE_N: usize = 128;

pub struct KatokMap {
    pub params: KatokParams,
    pub psi: PsiProfile,
    pub flow: SlowFlow,
    pub local: LocalChart,
    pub moser: Moser,
    table: OnceLock<ThetaTable>,
}

impl std::fmt::Debug for KatokMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KatokMap")
            .field("params", &self.params)
            .finish_non_exhaustive()
    }
}

/// min over e ∈ [1, λ²] of a e + b / e.
fn min_hyperbolic(a: f64, b: f64) -> f64 {
    let l2 = LAMBDA * LAMBDA;
    let e = if a == 0.0 {
        l2
    } else {
        (b / a).sqrt().clamp(1.0, l2)
    };
    a * e + b / e
}

impl KatokMap {
    pub fn new(params: KatokParams) -> Self {
        let psi = params.psi();
        let flow = SlowFlow::new(&params);
        let local = LocalChart::new(psi);
        let moser = Moser::new(local, params.ode_tol);
        Self {
            params,
            psi,
            flow,
            local,
            moser,
            table: OnceLock::new(),
        }
    }

    pub fn r0(&self) -> f64 {
        self.params.r0
    }

    /// Does the forward linear trajectory of `s` over [0,1] meet D_{r0}?
    pub fn in_influence(&self, s: EigenPoint) -> bool {
        let r0 = self.params.r0;
        if s.s1.abs() > r0.sqrt() || s.s2.abs() > LAMBDA * r0.sqrt() {
            return false;
        }
        min_hyperbolic(s.s1 * s.s1, s.s2 * s.s2) <= r0
    }

    /// Same for the backward trajectory (the image region G(S)).
    pub fn in_influence_inverse(&self, s: EigenPoint) -> bool {
        self.in_influence(EigenPoint::new(s.s2, s.s1))
    }

    fn find_lift(&self, p: TorusPoint, inverse: bool) -> Option<EigenPoint> {
        let base = p.lift();
        for kx in -1..=1 {
            for ky in -1..=1 {
                let s = EigenPoint::from_plane(base + Vector2::new(kx as f64, ky as f64));
                let hit = if inverse {
                    self.in_influence_inverse(s)
                } else {
                    self.in_influence(s)
                };
                if hit {
                    return Some(s);
                }
            }
        }
        None
    }

    /// Lift of `p` inside S, if any.
    pub fn slowdown_lift(&self, p: TorusPoint) -> Option<EigenPoint> {
        self.find_lift(p, false)
    }

    pub fn apply_g(&self, p: TorusPoint) -> Result<MapEvaluation> {
        match self.find_lift(p, false) {
            Some(s) => {
                let (t, j) = self.flow.flow_with_jacobian(s, 1.0)?;
                Ok(MapEvaluation {
                    image: from_eigen(t),
                    jacobian: eigen_to_standard(&j),
                    branch: Branch::Slowdown,
                })
            }
            None => Ok(MapEvaluation {
                image: TorusPoint::new(2.0 * p.x + p.y, p.x + p.y),
                jacobian: a_matrix(),
                branch: Branch::Linear,
            }),
        }
    }

    /// G without its differential.
    pub fn g_point(&self, p: TorusPoint) -> Result<TorusPoint> {
        match self.find_lift(p, false) {
            Some(s) => Ok(from_eigen(self.flow.flow(s, 1.0)?)),
            None => Ok(TorusPoint::new(2.0 * p.x + p.y, p.x + p.y)),
        }
    }

    pub fn apply_g_inv(&self, q: TorusPoint) -> Result<MapEvaluation> {
        match self.find_lift(q, true) {
            Some(s) => {
                let (t, j) = self.flow.flow_with_jacobian(s, -1.0)?;
                Ok(MapEvaluation {
                    image: from_eigen(t),
                    jacobian: eigen_to_standard(&j),
                    branch: Branch::Slowdown,
                })
            }
            None => Ok(MapEvaluation {
                image: TorusPoint::new(q.x - q.y, 2.0 * q.y - q.x),
                jacobian: a_inv_matrix(),
                branch: Branch::Linear,
            }),
        }
    }

    /// Invariant density κ of G (unnormalised): 1/ψ inside D_{r0}, 1 outside.
    pub fn kappa(&self, p: TorusPoint) -> f64 {
        let u = lift_eigen(p).u();
        if u < self.params.r0 {
            1.0 / self.psi.psi(u)
        } else {
            1.0
        }
    }

    pub fn kappa0(&self) -> f64 {
        self.params.kappa0
    }

    /// |det dG(p) κ(G p) / κ(p) - 1|.
    pub fn nu_residual(&self, p: TorusPoint) -> Result<f64> {
        let ev = self.apply_g(p)?;
        Ok((ev.jacobian.determinant() * self.kappa(ev.image) / self.kappa(p) - 1.0).abs())
    }

    pub fn phi_loc(&self, p: TorusPoint) -> Result<(TorusPoint, Jacobian2)> {
        let (y, j) = self.local.forward(p.lift())?;
        Ok((TorusPoint::from_vec(y), j))
    }

    pub fn phi_loc_inv(&self, p: TorusPoint) -> Result<(TorusPoint, Jacobian2)> {
        let (x, j) = self.local.inverse_with_jac(p.lift())?;
        Ok((TorusPoint::from_vec(x), j))
    }

    /// Φ = Θ ∘ φ_loc.
    pub fn phi(&self, p: TorusPoint) -> Result<TorusPoint> {
        let (y, _) = self.phi_loc(p)?;
        self.moser.forward(y)
    }

    pub fn phi_inv(&self, q: TorusPoint) -> Result<TorusPoint> {
        let y = self.moser.inverse(q)?;
        Ok(TorusPoint::from_vec(self.local.inverse(y.lift())?))
    }

    pub fn phi_with_jac(&self, p: TorusPoint) -> Result<(TorusPoint, Jacobian2)> {
        let (y, jl) = self.phi_loc(p)?;
        let (q, jt) = self.moser.forward_with_jac(y)?;
        Ok((q, jt * jl))
    }

    pub fn phi_inv_with_jac(&self, q: TorusPoint) -> Result<(TorusPoint, Jacobian2)> {
        let (y, jt) = self.moser.inverse_with_jac(q)?;
        let (x, jl) = self.phi_loc_inv(y)?;
        Ok((x, jl * jt))
    }

    /// Table-based Φ (about 1e-6 at the default grid); used inside long orbit loops.
    pub fn phi_fast(&self, p: TorusPoint) -> Result<TorusPoint> {
        let (y, _) = self.phi_loc(p)?;
        Ok(self.theta_table()?.forward(y))
    }

    pub fn theta_table(&self) -> Result<&ThetaTable> {
        if let Some(t) = self.table.get() {
            return Ok(t);
        }
        let t = ThetaTable::build(&self.moser, THETA_TABLE_N)?;
        Ok(self.table.get_or_init(|| t))
    }

    /// Bound on |Φ(p) - p| outside D_{r0}, where φ_loc is the identity.
    pub fn max_theta_shift(&self) -> Result<f64> {
        Ok(self.theta_table()?.max_displacement * 1.05 + 1e-6)
    }

    pub fn apply_gt2(&self, q: TorusPoint) -> Result<MapEvaluation> {
        if q == TorusPoint::ORIGIN {
            return Ok(MapEvaluation {
                image: q,
                jacobian: Jacobian2::identity(),
                branch: Branch::Slowdown,
            });
        }
        let (x, j_in) = self.phi_inv_with_jac(q)?;
        let ev = self.apply_g(x)?;
        let (q2, j_out) = self.phi_with_jac(ev.image)?;
        Ok(MapEvaluation {
            image: q2,
            jacobian: j_out * ev.jacobian * j_in,
            branch: ev.branch,
        })
    }

    pub fn apply_gt2_inv(&self, q: TorusPoint) -> Result<MapEvaluation> {
        if q == TorusPoint::ORIGIN {
            return Ok(MapEvaluation {
                image: q,
                jacobian: Jacobian2::identity(),
                branch: Branch::Slowdown,
            });
        }
        let (x, j_in) = self.phi_inv_with_jac(q)?;
        let ev = self.apply_g_inv(x)?;
        let (q2, j_out) = self.phi_with_jac(ev.image)?;
        Ok(MapEvaluation {
            image: q2,
            jacobian: j_out * ev.jacobian * j_in,
            branch: ev.branch,
        })
    }

    pub fn dgt2(&self, q: TorusPoint) -> Result<Jacobian2> {
        Ok(self.apply_gt2(q)?.jacobian)
    }

    /// Worst |det dGT2 - 1| over `n` uniform points, skipping ‖s‖² < 1e-8.
    pub fn area_defect(&self, n: usize, seed: u64) -> Result<f64> {
        let worst = (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = sample_rng(seed, 11, i);
                let q = TorusPoint::new(rng.gen(), rng.gen());
                if lift_eigen(q).u() < 1e-8 {
                    return Ok(0.0);
                }
                Ok((self.dgt2(q)?.determinant() - 1.0).abs())
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(worst.into_iter().fold(0.0, f64::max))
    }

    /// max of [`Self::nu_residual`] over `n` uniform points (same exclusion).
    pub fn check_nu_invariance(&self, n: usize, seed: u64) -> Result<f64> {
        let r = (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = sample_rng(seed, 12, i);
                let q = TorusPoint::new(rng.gen(), rng.gen());
                if lift_eigen(q).u() < 1e-8 {
                    return Ok(0.0);
                }
                self.nu_residual(q)
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(r.into_iter().fold(0.0, f64::max))
    }

    /// Samples the ν-distribution of G: a uniform point pulled back by Φ.
    pub fn sample_nu(&self, rng: &mut impl Rng) -> Result<TorusPoint> {
        self.phi_inv(TorusPoint::new(rng.gen(), rng.gen()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map() -> KatokMap {
        KatokMap::new(KatokParams::defaults())
    }

    #[test]
    fn linear_example() {
        let m = map();
        let ev = m.apply_g(TorusPoint::new(0.25, 0.25)).unwrap();
        assert_eq!(ev.branch, Branch::Linear);
        assert!(ev.image.dist(&TorusPoint::new(0.75, 0.5)) < 1e-15);
    }

    #[test]
    fn origin_is_neutral() {
        let m = map();
        let ev = m.apply_g(TorusPoint::ORIGIN).unwrap();
        assert_eq!(ev.image, TorusPoint::ORIGIN);
        assert!((ev.jacobian - Jacobian2::identity()).norm() < 1e-15);
    }

    #[test]
    fn g_inverse_roundtrip() {
        let m = map();
        for i in 0..300u64 {
            let mut rng = sample_rng(1, 0, i);
            let p = if i % 2 == 0 {
                TorusPoint::new(rng.gen(), rng.gen())
            } else {
                from_eigen(EigenPoint::new(
                    rng.gen_range(-0.3..0.3),
                    rng.gen_range(-0.8..0.8),
                ))
            };
            let q = m.apply_g(p).unwrap();
            let back = m.apply_g_inv(q.image).unwrap();
            assert!(back.image.dist(&p) < 1e-9, "{p:?}");
            assert_eq!(back.branch, q.branch);
            assert!((back.jacobian * q.jacobian - Jacobian2::identity()).norm() < 1e-8);
        }
    }

    #[test]
    fn influence_translates_disjoint() {
        let m = map();
        let r = m.r0().sqrt();
        let mut hits = 0;
        for i in 0..200 {
            for j in 0..600 {
                let s = EigenPoint::new(
                    -r + 2.0 * r * i as f64 / 199.0,
                    LAMBDA * r * (-1.0 + 2.0 * j as f64 / 599.0),
                );
                if !m.in_influence(s) {
                    continue;
                }
                let x = s.to_plane();
                for kx in -2..=2 {
                    for ky in -2..=2 {
                        if kx == 0 && ky == 0 {
                            continue;
                        }
                        let t = EigenPoint::from_plane(x + Vector2::new(kx as f64, ky as f64));
                        if m.in_influence(t) {
                            hits += 1;
                        }
                    }
                }
            }
        }
        assert_eq!(hits, 0);
    }

    #[test]
    fn continuity_across_influence_boundary() {
        // the flow agrees with A where the trajectory only grazes D_{r0}
        let m = map();
        for k in 0..40 {
            let e = 1.0 + (LAMBDA * LAMBDA - 1.0) * (k as f64 / 39.0);
            // a point whose linear trajectory touches ∂D_{r0} at e
            let s = EigenPoint::new((m.r0() / (2.0 * e)).sqrt(), (m.r0() * e / 2.0).sqrt());
            for &scale in &[1.0 - 1e-6, 1.0 + 1e-6] {
                let p = from_eigen(EigenPoint::new(s.s1 * scale, s.s2 * scale));
                let ev = m.apply_g(p).unwrap();
                let lin = TorusPoint::new(2.0 * p.x + p.y, p.x + p.y);
                assert!(ev.image.dist(&lin) < 1e-9, "{k} {scale}");
            }
        }
    }

    #[test]
    fn nu_invariance_small_sample() {
        let m = map();
        assert!(m.check_nu_invariance(500, 3).unwrap() < 1e-6);
    }

    #[test]
    fn phi_roundtrip_and_origin() {
        let m = map();
        assert_eq!(
            m.phi(TorusPoint::ORIGIN).unwrap().dist(&TorusPoint::ORIGIN),
            0.0
        );
        for &(x, y) in &[(0.1, 0.2), (0.6, 0.3), (0.95, 0.02), (0.5, 0.5)] {
            let p = TorusPoint::new(x, y);
            let q = m.phi(p).unwrap();
            assert!(m.phi_inv(q).unwrap().dist(&p) < 1e-10);
        }
    }

    #[test]
    fn gt2_area_preserving_sample() {
        let m = map();
        let d = m.area_defect(200, 5).unwrap();
        assert!(d < 1e-7, "{d}");
    }

    #[test]
    fn gt2_inverse_roundtrip() {
        let m = map();
        for i in 0..50u64 {
            let mut rng = sample_rng(2, 0, i);
            let q = TorusPoint::new(rng.gen(), rng.gen());
            let f = m.apply_gt2(q).unwrap();
            let b = m.apply_gt2_inv(f.image).unwrap();
            assert!(b.image.dist(&q) < 1e-9);
        }
    }

    #[test]
    fn gt2_jacobian_matches_differences() {
        let m = map();
        for &(x, y) in &[(0.1, 0.05), (0.3, 0.8), (0.9, 0.15)] {
            let q = TorusPoint::new(x, y);
            let j = m.dgt2(q).unwrap();
            let h = 1e-6;
            for k in 0..2 {
                let (dx, dy) = if k == 0 { (h, 0.0) } else { (0.0, h) };
                let a = m.apply_gt2(TorusPoint::new(x + dx, y + dy)).unwrap().image;
                let b = m.apply_gt2(TorusPoint::new(x - dx, y - dy)).unwrap().image;
                let fd = b.delta_to(&a) / (2.0 * h);
                assert!((fd - j.column(k)).norm() < 1e-5 * j.norm(), "{x} {y}");
            }
        }
    }
}
