//! Regular part of the zero-mean Green function of the unit square torus.
//!
//! G solves ΔG = δ₀ - 1 and G(x) = log|x| / 2π + H(x) near 0. With z = x + iy,
//! ∇G = conj(F(z)) / 2π where F(z) = ζ(z) - π z̄ for the Weierstrass ζ of the
//! lattice Z + iZ; in theta form F(z) = π θ₁'/θ₁(πz) + 2πi Im z with nome e^{-π}.
//! `R = F - 1/z` is smooth on the minimal-image cell and ∇H = conj(R) / 2π.

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use std::f64::consts::PI;

const TERMS: usize = 16;

fn coeffs() -> [f64; TERMS] {
    let q2 = (-2.0 * PI).exp();
    let mut c = [0.0; TERMS];
    let mut qn = 1.0;
    for slot in c.iter_mut() {
        qn *= q2;
        *slot = qn / (1.0 - qn);
    }
    c
}

/// cot v - 1/v, with a Taylor branch near 0.
fn cot_minus_inv(v: Complex64) -> Complex64 {
    if v.norm() < 0.1 {
        let v2 = v * v;
        -v * (1.0 / 3.0
            + v2 * (1.0 / 45.0 + v2 * (2.0 / 945.0 + v2 * (1.0 / 4725.0 + v2 * 2.0 / 93555.0))))
    } else {
        v.cos() / v.sin() - 1.0 / v
    }
}

/// 1/v² - csc² v.
fn inv_sq_minus_csc_sq(v: Complex64) -> Complex64 {
    if v.norm() < 0.1 {
        let v2 = v * v;
        -(1.0 / 3.0
            + v2 * (1.0 / 15.0 + v2 * (2.0 / 189.0 + v2 * (1.0 / 675.0 + v2 * 2.0 / 10395.0))))
    } else {
        let s = v.sin();
        1.0 / (v * v) - 1.0 / (s * s)
    }
}

/// R(z) and ∂R/∂z (the antiholomorphic derivative is the constant -π).
pub fn regular_part(z: Complex64) -> (Complex64, Complex64) {
    let c = coeffs();
    let v = z * PI;
    let mut r = cot_minus_inv(v) * PI;
    let mut rz = inv_sq_minus_csc_sq(v) * (PI * PI) + PI;
    for (k, cn) in c.iter().enumerate() {
        let n = (k + 1) as f64;
        let arg = v * (2.0 * n);
        r += arg.sin() * (4.0 * PI * cn);
        rz += arg.cos() * (8.0 * PI * PI * n * cn);
    }
    r += Complex64::new(0.0, 2.0 * PI * z.im);
    (r, rz)
}

/// F(z) = R(z) + 1/z, the periodic complex gradient of G.
pub fn full(z: Complex64) -> Complex64 {
    regular_part(z).0 + 1.0 / z
}

/// ∇H and the Hessian of H at a point of the minimal-image cell.
pub fn grad_hess_h(x: Vector2<f64>) -> (Vector2<f64>, Matrix2<f64>) {
    let (r, rz) = regular_part(Complex64::new(x[0], x[1]));
    let g = Vector2::new(r.re, -r.im) / (2.0 * PI);
    // d(conj R)/2π = (conj(R_z) dz̄ + conj(R_z̄) dz)/2π with R_z̄ = -π
    let (br, bi) = (rz.re / (2.0 * PI), -rz.im / (2.0 * PI));
    let a = -0.5;
    (g, Matrix2::new(a + br, bi, bi, a - br))
}

/// ∇G itself, valid anywhere off the lattice (reduces to the minimal image first).
pub fn grad_g(x: Vector2<f64>) -> Vector2<f64> {
    let m = Vector2::new(x[0] - x[0].round(), x[1] - x[1].round());
    let f = full(Complex64::new(m[0], m[1]));
    Vector2::new(f.re, -f.im) / (2.0 * PI)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periodic_in_both_directions() {
        for &(x, y) in &[(0.13, 0.21), (-0.4, 0.05), (0.3, -0.35), (0.02, 0.41)] {
            let z = Complex64::new(x, y);
            let f = full(z);
            // shifts that keep |Im| < 1/2 and avoid poles
            let f1 = full(z + 1.0);
            let f2 = full(z - 1.0);
            assert!((f - f1).norm() < 1e-12, "{x} {y}");
            assert!((f - f2).norm() < 1e-12);
        }
        // the theta series is only used for |Im z| <= 1/2, so compare across that edge
        for &x in &[0.13, -0.3, 0.2, 0.5] {
            let top = full(Complex64::new(x, 0.5));
            let bottom = full(Complex64::new(x, -0.5));
            assert!((top - bottom).norm() < 1e-12, "{x}");
        }
    }

    #[test]
    fn hessian_matches_differences_and_trace() {
        for &(x, y) in &[(0.1, 0.2), (-0.3, 0.4), (0.45, -0.45), (0.01, -0.02)] {
            let p = Vector2::new(x, y);
            let (_, h) = grad_hess_h(p);
            assert!((h.trace() + 1.0).abs() < 1e-13);
            let e = 1e-6;
            for k in 0..2 {
                let mut d = Vector2::zeros();
                d[k] = e;
                let fd = (grad_hess_h(p + d).0 - grad_hess_h(p - d).0) / (2.0 * e);
                assert!(
                    (fd - h.column(k)).norm() < 1e-8,
                    "{x} {y}: {fd} vs {}",
                    h.column(k)
                );
            }
        }
    }

    #[test]
    fn odd_and_vanishing_at_origin() {
        let (g0, _) = grad_hess_h(Vector2::zeros());
        assert!(g0.norm() < 1e-15);
        let p = Vector2::new(0.17, -0.23);
        assert!((grad_hess_h(p).0 + grad_hess_h(-p).0).norm() < 1e-14);
    }

    #[test]
    fn square_symmetry() {
        // rotating by 90° commutes with ∇G on the square lattice
        let p = Vector2::new(0.21, 0.07);
        let rot = Vector2::new(-p[1], p[0]);
        let a = grad_g(p);
        let b = grad_g(rot);
        assert!((Vector2::new(-a[1], a[0]) - b).norm() < 1e-12);
    }

    #[test]
    fn flux_through_cell_boundary_balances_area() {
        // ∮ ∇G·n over a circle of radius r around 0 = 1 - π r² by ΔG = δ - 1
        let r = 0.3;
        let n = 400;
        let mut flux = 0.0;
        for k in 0..n {
            let t = 2.0 * PI * (k as f64 + 0.5) / n as f64;
            let nrm = Vector2::new(t.cos(), t.sin());
            flux += grad_g(nrm * r).dot(&nrm) * r * 2.0 * PI / n as f64;
        }
        assert!((flux - (1.0 - PI * r * r)).abs() < 1e-12, "{flux}");
    }
}
