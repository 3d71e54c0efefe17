//! The profile ψ and the slowed-down hyperbolic flow
//! ds1/dt = s1 ψ(u) log λ, ds2/dt = -s2 ψ(u) log λ, with u = s1² + s2².

use nalgebra::Matrix2;
use serde::Serialize;

use crate::error::{KatokError, Result};
use crate::numerics::ode::{Control, Dopri5, Event};
use crate::numerics::{quad, roots};
use crate::params::{EigenPoint, Jacobian2, KatokParams, PsiBlend, LOG_LAMBDA};

/// Below this squared radius the state is frozen: the field is under roundoff.
pub const FREEZE_U: f64 = 1e-12;
/// Squared radius beyond which a planar trajectory is considered to have left the chart.
pub const CHART_EXIT_U: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PsiProfile {
    pub alpha: f64,
    pub r0: f64,
    pub blend: PsiBlend,
}

impl PsiProfile {
    pub fn new(p: &KatokParams) -> Self {
        Self {
            alpha: p.alpha,
            r0: p.r0,
            blend: p.psi_blend,
        }
    }

    /// Chooses the exponent `p` of the blend so that ψ reaches 1 exactly at r0.
    ///
    /// The blend rises by ψ'(r0/2)·(r0/2)·∫₀¹(1-w^p)² dw, which must equal 1 - 2^{-α}.
    pub fn solve_blend(alpha: f64) -> Result<PsiBlend> {
        let slope_scale = alpha * 2f64.powf(-alpha);
        let target = (1.0 - 2f64.powf(-alpha)) / slope_scale;
        let mass = |p: f64| 1.0 - 2.0 / (p + 1.0) + 1.0 / (2.0 * p + 1.0);
        if !(target > mass(1.0) && target < 1.0) {
            return Err(KatokError::InvalidParams(format!(
                "no concave blend for alpha = {alpha}"
            )));
        }
        let p = roots::bisect(|p| mass(p) - target, 1.0, 1e9, 1e-15)?;
        Ok(PsiBlend { p, slope_scale })
    }

    #[inline]
    fn w(&self, u: f64) -> f64 {
        (u - 0.5 * self.r0) / (0.5 * self.r0)
    }

    pub fn psi(&self, u: f64) -> f64 {
        if u <= 0.0 {
            0.0
        } else if u <= 0.5 * self.r0 {
            (u / self.r0).powf(self.alpha)
        } else if u < self.r0 {
            let w = self.w(u);
            let p = self.blend.p;
            let wp1 = w.powf(p + 1.0);
            2f64.powf(-self.alpha)
                + self.blend.slope_scale
                    * (w - 2.0 * wp1 / (p + 1.0) + wp1 * w.powf(p) / (2.0 * p + 1.0))
        } else {
            1.0
        }
    }

    pub fn psi_prime(&self, u: f64) -> f64 {
        if u <= 0.0 {
            f64::INFINITY
        } else if u <= 0.5 * self.r0 {
            self.alpha / self.r0 * (u / self.r0).powf(self.alpha - 1.0)
        } else if u < self.r0 {
            let q = 1.0 - self.w(u).powf(self.blend.p);
            self.blend.slope_scale / (0.5 * self.r0) * q * q
        } else {
            0.0
        }
    }

    pub fn psi_second(&self, u: f64) -> f64 {
        if u <= 0.0 {
            f64::NEG_INFINITY
        } else if u <= 0.5 * self.r0 {
            self.alpha * (self.alpha - 1.0) / (self.r0 * self.r0)
                * (u / self.r0).powf(self.alpha - 2.0)
        } else if u < self.r0 {
            let w = self.w(u);
            let p = self.blend.p;
            let h = 0.5 * self.r0;
            -2.0 * self.blend.slope_scale / (h * h) * (1.0 - w.powf(p)) * p * w.powf(p - 1.0)
        } else {
            0.0
        }
    }

    /// `u ψ'(u)`, finite at 0.
    pub fn u_psi_prime(&self, u: f64) -> f64 {
        if u <= 0.0 {
            0.0
        } else {
            u * self.psi_prime(u)
        }
    }

    /// I(u) = ∫₀^u dv/ψ(v).
    pub fn inv_integral(&self, u: f64) -> f64 {
        let a = 0.5 * self.r0;
        let core =
            |v: f64| self.r0.powf(self.alpha) * v.powf(1.0 - self.alpha) / (1.0 - self.alpha);
        if u <= a {
            return core(u.max(0.0));
        }
        let top = u.min(self.r0);
        let mid = 0.5 * (a + top);
        let g = |v: f64| 1.0 / self.psi(v);
        let blend = quad::gauss_legendre20(g, a, mid) + quad::gauss_legendre20(g, mid, top);
        core(a) + blend + (u - top).max(0.0)
    }

    /// Inverse of [`Self::inv_integral`].
    pub fn inv_integral_inverse(&self, target: f64) -> Result<f64> {
        if target <= 0.0 {
            return Ok(0.0);
        }
        let a = 0.5 * self.r0;
        let ia = self.inv_integral(a);
        if target <= ia {
            let v = target * (1.0 - self.alpha) / self.r0.powf(self.alpha);
            return Ok(v.powf(1.0 / (1.0 - self.alpha)));
        }
        let ir = self.inv_integral(self.r0);
        if target >= ir {
            return Ok(self.r0 + target - ir);
        }
        roots::newton_bracketed(
            |u| (self.inv_integral(u) - target, 1.0 / self.psi(u)),
            a,
            self.r0,
            1e-16,
        )
    }

    /// (K1)–(K4) on a grid: ψ' > 0 and non-increasing on (0, r0), continuity at the seams.
    pub fn validate(&self) -> Result<()> {
        let n = 10_000;
        let mut prev = f64::INFINITY;
        for i in 1..n {
            let u = self.r0 * i as f64 / n as f64;
            let d = self.psi_prime(u);
            if d.is_nan() || d <= 0.0 || d > prev * (1.0 + 1e-12) {
                return Err(KatokError::InvalidParams(format!(
                    "psi' not positive and decreasing at u = {u}"
                )));
            }
            prev = d;
        }
        let eps = 1e-13 * self.r0;
        for &u in &[0.5 * self.r0, self.r0] {
            let jump = (self.psi(u + eps) - self.psi(u - eps)).abs();
            let djump = (self.psi_prime(u + eps) - self.psi_prime(u - eps)).abs();
            if jump > 1e-12 || djump > 1e-9 * self.psi_prime(0.5 * self.r0) {
                return Err(KatokError::InvalidParams(format!(
                    "psi not C^1 at u = {u} (jumps {jump:e}, {djump:e})"
                )));
            }
        }
        Ok(())
    }
}

/// The flow of the slowed field and its variational equation.
#[derive(Debug, Clone, Copy)]
pub struct SlowFlow {
    pub psi: PsiProfile,
    pub solver: Dopri5,
    pub log_lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowState {
    pub s: EigenPoint,
    pub jac: Jacobian2,
    pub t: f64,
}

impl SlowFlow {
    pub fn new(p: &KatokParams) -> Self {
        Self {
            psi: PsiProfile::new(p),
            solver: Dopri5::new(p.ode_tol),
            log_lambda: LOG_LAMBDA,
        }
    }

    pub fn field(&self, s: &[f64; 2]) -> [f64; 2] {
        let u = s[0] * s[0] + s[1] * s[1];
        if u < FREEZE_U {
            return [0.0, 0.0];
        }
        let k = self.psi.psi(u) * self.log_lambda;
        [s[0] * k, -s[1] * k]
    }

    /// Coefficient matrix of the variational equation at `s`.
    pub fn variational_matrix(&self, s: EigenPoint) -> Jacobian2 {
        let u = s.u();
        if u < FREEZE_U {
            return Matrix2::zeros();
        }
        let p = self.psi.psi(u);
        let dp = self.psi.psi_prime(u);
        let l = self.log_lambda;
        Matrix2::new(
            l * (p + 2.0 * s.s1 * s.s1 * dp),
            l * 2.0 * s.s1 * s.s2 * dp,
            -l * 2.0 * s.s1 * s.s2 * dp,
            -l * (p + 2.0 * s.s2 * s.s2 * dp),
        )
    }

    fn field_jac(&self, y: &[f64; 6]) -> [f64; 6] {
        let s = EigenPoint::new(y[0], y[1]);
        let f = self.field(&[y[0], y[1]]);
        let d = self.variational_matrix(s);
        [
            f[0],
            f[1],
            d[(0, 0)] * y[2] + d[(0, 1)] * y[4],
            d[(0, 0)] * y[3] + d[(0, 1)] * y[5],
            d[(1, 0)] * y[2] + d[(1, 1)] * y[4],
            d[(1, 0)] * y[3] + d[(1, 1)] * y[5],
        ]
    }

    fn chart_guard(t: f64, u: f64) -> Result<Control> {
        if u > CHART_EXIT_U {
            Err(KatokError::ChartExit { u, t })
        } else {
            Ok(Control::Continue)
        }
    }

    pub fn flow(&self, s0: EigenPoint, t: f64) -> Result<EigenPoint> {
        if s0.u() < FREEZE_U {
            return Ok(s0);
        }
        let (_, y) = self.solver.integrate_observed(
            |_, y: &[f64; 2]| self.field(y),
            0.0,
            [s0.s1, s0.s2],
            t,
            |t, y| Self::chart_guard(t, y[0] * y[0] + y[1] * y[1]),
        )?;
        Ok(EigenPoint::new(y[0], y[1]))
    }

    pub fn flow_with_jacobian(&self, s0: EigenPoint, t: f64) -> Result<(EigenPoint, Jacobian2)> {
        if s0.u() < FREEZE_U {
            return Ok((s0, Jacobian2::identity()));
        }
        let (_, y) = self.solver.integrate_observed(
            |_, y: &[f64; 6]| self.field_jac(y),
            0.0,
            [s0.s1, s0.s2, 1.0, 0.0, 0.0, 1.0],
            t,
            |t, y| Self::chart_guard(t, y[0] * y[0] + y[1] * y[1]),
        )?;
        Ok((
            EigenPoint::new(y[0], y[1]),
            Matrix2::new(y[2], y[3], y[4], y[5]),
        ))
    }

    /// Flow with states recorded at every integer time and at `t`.
    pub fn trace(&self, s0: EigenPoint, t: f64, dt: f64) -> Result<Vec<FlowState>> {
        let mut out = vec![FlowState {
            s: s0,
            jac: Jacobian2::identity(),
            t: 0.0,
        }];
        let n = (t / dt).ceil().max(1.0) as usize;
        let mut cur = (s0, Jacobian2::identity());
        for k in 1..=n {
            let tk = (k as f64 * dt).min(t);
            let dtk = tk - out.last().unwrap().t;
            let (s, j) = self.flow_with_jacobian(cur.0, dtk)?;
            cur = (s, j * cur.1);
            out.push(FlowState {
                s: cur.0,
                jac: cur.1,
                t: tk,
            });
        }
        Ok(out)
    }

    /// Integrates until g(s) changes from negative to non-negative (or `t_max`).
    pub fn flow_to_event<G: Fn(EigenPoint) -> f64>(
        &self,
        s0: EigenPoint,
        t_max: f64,
        g: G,
    ) -> Result<Option<(f64, EigenPoint)>> {
        let ev: Option<Event<2>> = self.solver.integrate_to_event(
            |_, y: &[f64; 2]| self.field(y),
            0.0,
            [s0.s1, s0.s2],
            t_max,
            |y| g(EigenPoint::new(y[0], y[1])),
        )?;
        Ok(ev.map(|e| (e.t, EigenPoint::new(e.y[0], e.y[1]))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::ode::rk4_fixed;
    use crate::params::LAMBDA;

    fn setup() -> (KatokParams, SlowFlow) {
        let p = KatokParams::defaults();
        let f = SlowFlow::new(&p);
        (p, f)
    }

    #[test]
    fn psi_values() {
        let (p, _) = setup();
        let psi = p.psi();
        assert_eq!(psi.psi(0.0), 0.0);
        assert!((psi.psi(0.05) - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(psi.psi(0.2), 1.0);
        assert!((psi.psi(0.1 - 1e-15) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn blend_exists_across_alpha() {
        for &a in &[0.05, 0.2, 0.5, 0.8, 0.95] {
            let p = KatokParams::new(a, 0.05).unwrap();
            p.psi().validate().unwrap();
        }
    }

    #[test]
    fn psi_prime_matches_difference_quotient() {
        let (p, _) = setup();
        let psi = p.psi();
        for i in 1..200 {
            let u = 0.1 * i as f64 / 200.0;
            let h = 1e-7;
            let fd = (psi.psi(u + h) - psi.psi(u - h)) / (2.0 * h);
            assert!(
                (fd - psi.psi_prime(u)).abs() < 1e-5 * (1.0 + psi.psi_prime(u)),
                "u={u}"
            );
            let fd2 = (psi.psi_prime(u + h) - psi.psi_prime(u - h)) / (2.0 * h);
            if (u - 0.05).abs() > 1e-6 {
                assert!(
                    (fd2 - psi.psi_second(u)).abs() < 1e-4 * (1.0 + psi.psi_second(u).abs()),
                    "u={u}"
                );
            }
        }
    }

    #[test]
    fn inv_integral_closed_form_and_inverse() {
        let (p, _) = setup();
        let psi = p.psi();
        let u: f64 = 0.02;
        let closed = 0.1f64.sqrt() * u.sqrt() / 0.5;
        assert!((psi.inv_integral(u) - closed).abs() < 1e-15);
        let full = quad::adaptive_gk15(|v| 1.0 / psi.psi(v), 0.05, 0.08, 1e-15, 1e-15).unwrap();
        assert!((psi.inv_integral(0.08) - psi.inv_integral(0.05) - full).abs() < 1e-14);
        for &u in &[1e-9, 0.01, 0.06, 0.09, 0.13] {
            let back = psi.inv_integral_inverse(psi.inv_integral(u)).unwrap();
            assert!((back - u).abs() < 1e-13 * (1.0 + u), "{u} {back}");
        }
    }

    #[test]
    fn origin_is_fixed() {
        let (_, f) = setup();
        assert_eq!(f.flow(EigenPoint::ORIGIN, 3.0).unwrap(), EigenPoint::ORIGIN);
        let (s, j) = f.flow_with_jacobian(EigenPoint::ORIGIN, 2.0).unwrap();
        assert_eq!(s, EigenPoint::ORIGIN);
        assert_eq!(j, Jacobian2::identity());
    }

    #[test]
    fn linear_region_is_hyperbolic_time_one() {
        let (_, f) = setup();
        // min over the time-1 linear path of u is 2 s1 s2 = 0.27 > r0
        let s = EigenPoint::new(0.3, 0.45);
        let (out, j) = f.flow_with_jacobian(s, 1.0).unwrap();
        assert!((out.s1 - LAMBDA * 0.3).abs() < 1e-12);
        assert!((out.s2 - 0.45 / LAMBDA).abs() < 1e-12);
        assert!((j - Matrix2::new(LAMBDA, 0.0, 0.0, 1.0 / LAMBDA)).norm() < 1e-11);
    }

    #[test]
    fn rk4_oracle() {
        let (_, f) = setup();
        let s = EigenPoint::new(0.03, 0.04);
        let out = f.flow(s, 1.0).unwrap();
        let o = rk4_fixed(
            |_, y: &[f64; 2]| f.field(y),
            0.0,
            [0.03, 0.04],
            1.0,
            100_000,
        );
        assert!((out.s1 - o[0]).abs() < 1e-8 && (out.s2 - o[1]).abs() < 1e-8);
    }

    #[test]
    fn variational_sign_matches_field_differences() {
        let (_, f) = setup();
        let s = EigenPoint::new(0.07, -0.11);
        let d = f.variational_matrix(s);
        let h = 1e-7;
        for j in 0..2 {
            let mut a = [s.s1, s.s2];
            let mut b = a;
            a[j] += h;
            b[j] -= h;
            let (fa, fb) = (f.field(&a), f.field(&b));
            for i in 0..2 {
                let fd = (fa[i] - fb[i]) / (2.0 * h);
                assert!(
                    (fd - d[(i, j)]).abs() < 1e-6,
                    "({i},{j}) {fd} {}",
                    d[(i, j)]
                );
            }
        }
        assert!(d[(1, 1)] < 0.0);
    }
}
