//! Moser transport Θ taking the density χ̃/κ₀ to Lebesgue measure on the torus.
//!
//! With ρ_s = (1-s) χ̃/κ₀ + s and a field w solving div w = χ̃/κ₀ - 1, the flow of
//! V_s = w/ρ_s over s ∈ [0,1] pushes ρ₀ to ρ₁ = 1. Because χ̃ - 1 is radial and
//! supported in D_{r0}, w has a closed form through the torus Green function:
//!
//!   κ₀ w(x) = e(v) x + E ∇H(x),   e(v) = (X(v) - v) / 2v,   E = κ₀ - 1,
//!
//! valid on the minimal-image cell (shell theorem for the log part, mean-value
//! property for the harmonic remainder). `det dΘ(y) = χ̃(|y|²)/κ₀`.

use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;

use super::green;
use super::local::LocalChart;
use crate::error::Result;
use crate::numerics::ode::Dopri5;
use crate::params::{Jacobian2, TorusPoint};

#[derive(Debug, Clone, Copy)]
pub struct Moser {
    pub local: LocalChart,
    pub kappa0: f64,
    pub excess: f64,
    pub solver: Dopri5,
}

fn wrap(x: Vector2<f64>) -> Vector2<f64> {
    Vector2::new(x[0] - x[0].round(), x[1] - x[1].round())
}

impl Moser {
    pub fn new(local: LocalChart, ode_tol: f64) -> Self {
        let excess = local.excess_mass();
        Self {
            local,
            kappa0: 1.0 + excess,
            excess,
            solver: Dopri5::new(ode_tol),
        }
    }

    /// Source density ρ₀ = χ̃/κ₀.
    pub fn source_density(&self, x: Vector2<f64>) -> f64 {
        self.local.chi(wrap(x).norm_squared()) / self.kappa0
    }

    /// The stationary field w and its differential.
    pub fn potential_field(&self, x: Vector2<f64>) -> (Vector2<f64>, Matrix2<f64>) {
        let m = wrap(x);
        let v = m.norm_squared();
        let (e, de) = if v <= self.local.v_a {
            (0.5 * (self.local.kappa_bar - 1.0), 0.0)
        } else {
            let big_x = self.local.chi_integral(v);
            (
                (big_x - v) / (2.0 * v),
                (self.local.chi(v) * v - big_x) / (2.0 * v * v),
            )
        };
        let (gh, hh) = green::grad_hess_h(m);
        let w = (m * e + gh * self.excess) / self.kappa0;
        let dw = (Matrix2::identity() * e + m * m.transpose() * (2.0 * de) + hh * self.excess)
            / self.kappa0;
        (w, dw)
    }

    /// Velocity V_s and its differential.
    pub fn velocity(&self, s: f64, x: Vector2<f64>) -> (Vector2<f64>, Matrix2<f64>) {
        let m = wrap(x);
        let v = m.norm_squared();
        let (w, dw) = self.potential_field(m);
        let rho = (1.0 - s) * self.local.chi(v) / self.kappa0 + s;
        let drho = m * ((1.0 - s) * self.local.chi_prime(v) * 2.0 / self.kappa0);
        (w / rho, dw / rho - w * drho.transpose() / (rho * rho))
    }

    fn rhs(&self, s: f64, y: &[f64; 6]) -> [f64; 6] {
        let (v, dv) = self.velocity(s, Vector2::new(y[0], y[1]));
        [
            v[0],
            v[1],
            dv[(0, 0)] * y[2] + dv[(0, 1)] * y[4],
            dv[(0, 0)] * y[3] + dv[(0, 1)] * y[5],
            dv[(1, 0)] * y[2] + dv[(1, 1)] * y[4],
            dv[(1, 0)] * y[3] + dv[(1, 1)] * y[5],
        ]
    }

    fn transport(&self, p: TorusPoint, s0: f64, s1: f64) -> Result<(TorusPoint, Jacobian2)> {
        let x = p.lift();
        let y = self.solver.integrate(
            |s, y: &[f64; 6]| self.rhs(s, y),
            s0,
            [x[0], x[1], 1.0, 0.0, 0.0, 1.0],
            s1,
        )?;
        Ok((
            TorusPoint::new(y[0], y[1]),
            Matrix2::new(y[2], y[3], y[4], y[5]),
        ))
    }

    fn transport_point(&self, p: TorusPoint, s0: f64, s1: f64) -> Result<TorusPoint> {
        let x = p.lift();
        let y = self.solver.integrate(
            |s, y: &[f64; 2]| self.velocity(s, Vector2::new(y[0], y[1])).0.into(),
            s0,
            [x[0], x[1]],
            s1,
        )?;
        Ok(TorusPoint::new(y[0], y[1]))
    }

    pub fn forward(&self, p: TorusPoint) -> Result<TorusPoint> {
        self.transport_point(p, 0.0, 1.0)
    }

    pub fn inverse(&self, p: TorusPoint) -> Result<TorusPoint> {
        self.transport_point(p, 1.0, 0.0)
    }

    pub fn forward_with_jac(&self, p: TorusPoint) -> Result<(TorusPoint, Jacobian2)> {
        self.transport(p, 0.0, 1.0)
    }

    /// Θ⁻¹(p) together with dΘ⁻¹(p).
    pub fn inverse_with_jac(&self, p: TorusPoint) -> Result<(TorusPoint, Jacobian2)> {
        self.transport(p, 1.0, 0.0)
    }
}

/// Bicubic Hermite table of the displacement Θ(y) - y, for bulk statistics.
///
/// Node values and first derivatives are exact (from the variational flow); the
/// cross derivative is a central difference of the exact ones.
#[derive(Debug, Clone)]
pub struct ThetaTable {
    n: usize,
    // per node: [d, d_x, d_y, d_xy] for each of the two components
    nodes: Vec<[[f64; 4]; 2]>,
    pub max_displacement: f64,
}

fn h00(t: f64) -> f64 {
    (2.0 * t - 3.0) * t * t + 1.0
}
fn h10(t: f64) -> f64 {
    ((t - 2.0) * t + 1.0) * t
}
fn h01(t: f64) -> f64 {
    (3.0 - 2.0 * t) * t * t
}
fn h11(t: f64) -> f64 {
    (t - 1.0) * t * t
}

impl ThetaTable {
    pub fn build(m: &Moser, n: usize) -> Result<Self> {
        let raw: Vec<(Vector2<f64>, Jacobian2)> = (0..n * n)
            .into_par_iter()
            .map(|k| {
                let p = TorusPoint::new((k / n) as f64 / n as f64, (k % n) as f64 / n as f64);
                let (q, j) = m.forward_with_jac(p)?;
                Ok((p.delta_to(&q), j - Jacobian2::identity()))
            })
            .collect::<Result<_>>()?;
        let at = |i: usize, j: usize| &raw[(i % n) * n + (j % n)];
        let h = 1.0 / n as f64;
        let mut nodes = Vec::with_capacity(n * n);
        let mut max_displacement: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let (d, dj) = at(i, j);
                max_displacement = max_displacement.max(d.norm());
                let up = at(i, j + 1).1;
                let dn = at(i, j + n - 1).1;
                let mut node = [[0.0; 4]; 2];
                for c in 0..2 {
                    node[c] = [
                        d[c],
                        dj[(c, 0)],
                        dj[(c, 1)],
                        (up[(c, 0)] - dn[(c, 0)]) / (2.0 * h),
                    ];
                }
                nodes.push(node);
            }
        }
        Ok(Self {
            n,
            nodes,
            max_displacement,
        })
    }

    pub fn displacement(&self, p: TorusPoint) -> Vector2<f64> {
        let n = self.n;
        let h = 1.0 / n as f64;
        let fx = p.x * n as f64;
        let fy = p.y * n as f64;
        let (i, j) = ((fx as usize).min(n - 1), (fy as usize).min(n - 1));
        let (t, u) = (fx - i as f64, fy - j as f64);
        let corners = [
            (i, j, h00(t), h10(t), h00(u), h10(u)),
            ((i + 1) % n, j, h01(t), h11(t), h00(u), h10(u)),
            (i, (j + 1) % n, h00(t), h10(t), h01(u), h11(u)),
            ((i + 1) % n, (j + 1) % n, h01(t), h11(t), h01(u), h11(u)),
        ];
        let mut out = Vector2::zeros();
        for &(a, b, v0, v1, w0, w1) in &corners {
            let node = &self.nodes[a * n + b];
            for c in 0..2 {
                let [f, fxv, fyv, fxy] = node[c];
                out[c] += f * v0 * w0 + h * (fxv * v1 * w0 + fyv * v0 * w1) + h * h * fxy * v1 * w1;
            }
        }
        out
    }

    pub fn forward(&self, p: TorusPoint) -> TorusPoint {
        let d = self.displacement(p);
        TorusPoint::new(p.x + d[0], p.y + d[1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::KatokParams;

    fn moser() -> Moser {
        let p = KatokParams::defaults();
        Moser::new(LocalChart::new(p.psi()), p.ode_tol)
    }

    #[test]
    fn divergence_matches_density_defect() {
        let m = moser();
        for &(x, y) in &[
            (0.05, 0.1),
            (0.2, 0.15),
            (0.4, -0.45),
            (0.0, 0.25),
            (0.31, 0.0),
        ] {
            let p = Vector2::new(x, y);
            let (_, dw) = m.potential_field(p);
            let want = m.source_density(p) - 1.0;
            assert!((dw.trace() - want).abs() < 1e-12, "{x} {y}");
        }
    }

    #[test]
    fn field_is_continuous_across_cell_edges() {
        let m = moser();
        let a = m.potential_field(Vector2::new(0.5 - 1e-12, 0.2)).0;
        let b = m.potential_field(Vector2::new(-0.5 + 1e-12, 0.2)).0;
        assert!((a - b).norm() < 1e-9);
    }

    #[test]
    fn determinant_is_source_density() {
        let m = moser();
        for &(x, y) in &[(0.05, 0.1), (0.2, 0.15), (0.7, 0.6), (0.01, 0.99)] {
            let p = TorusPoint::new(x, y);
            let (_, j) = m.forward_with_jac(p).unwrap();
            let want = m.source_density(p.lift());
            assert!((j.determinant() - want).abs() < 1e-9, "{x} {y}");
            let (q, _) = m.forward_with_jac(p).unwrap();
            let back = m.inverse(q).unwrap();
            assert!(back.dist(&p) < 1e-11);
        }
    }

    #[test]
    fn origin_is_fixed() {
        let m = moser();
        let (q, _) = m.forward_with_jac(TorusPoint::ORIGIN).unwrap();
        assert!(q.dist(&TorusPoint::ORIGIN) < 1e-15);
    }

    #[test]
    fn table_interpolates_accurately() {
        let m = moser();
        let worst = |n: usize| {
            let t = ThetaTable::build(&m, n).unwrap();
            (0..200)
                .map(|k| {
                    let p = TorusPoint::new(0.013 + 0.0197 * k as f64, (0.77 * k as f64) % 1.0);
                    t.forward(p).dist(&m.forward(p).unwrap())
                })
                .fold(0.0, f64::max)
        };
        let (coarse, fine) = (worst(64), worst(128));
        eprintln!("{coarse:e} {fine:e}");
        assert!(fine < coarse / 4.0 && fine < 2e-6, "{coarse} {fine}");
    }
}
