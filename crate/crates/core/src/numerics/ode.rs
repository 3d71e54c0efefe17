//! Dormand–Prince 5(4) with step rejection, for fixed-size states.

use crate::error::{KatokError, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth minus fourth order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Debug, Clone, Copy)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

/// Returned by an observer after each accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Copy)]
pub struct Event<const N: usize> {
    pub t: f64,
    pub y: [f64; N],
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        let hc = h * c;
        for i in 0..N {
            out[i] += hc * k[i];
        }
    }
    out
}

impl Dopri5 {
    pub fn new(rtol: f64) -> Self {
        Self {
            rtol,
            atol: rtol * 1e-4,
            max_steps: 2_000_000,
        }
    }

    /// One step of size `h`; returns (y_new, f(y_new), scaled error norm).
    pub fn step<const N: usize, F>(
        &self,
        f: &mut F,
        t: f64,
        y: &[f64; N],
        k1: &[f64; N],
        h: f64,
    ) -> ([f64; N], [f64; N], f64)
    where
        F: FnMut(f64, &[f64; N]) -> [f64; N],
    {
        let k2 = f(t + C2 * h, &axpy(y, h, &[(A21, k1)]));
        let k3 = f(t + C3 * h, &axpy(y, h, &[(A31, k1), (A32, &k2)]));
        let k4 = f(
            t + C4 * h,
            &axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]),
        );
        let k5 = f(
            t + C5 * h,
            &axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        );
        let k6 = f(
            t + h,
            &axpy(
                y,
                h,
                &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            ),
        );
        let y5 = axpy(
            y,
            h,
            &[(B1, k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
        );
        let k7 = f(t + h, &y5);
        let mut acc = 0.0;
        for i in 0..N {
            let e =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = self.atol + self.rtol * y[i].abs().max(y5[i].abs());
            acc += (e / sc) * (e / sc);
        }
        (y5, k7, (acc / N as f64).sqrt())
    }

    pub fn integrate<const N: usize, F>(
        &self,
        f: F,
        t0: f64,
        y0: [f64; N],
        t1: f64,
    ) -> Result<[f64; N]>
    where
        F: FnMut(f64, &[f64; N]) -> [f64; N],
    {
        self.integrate_observed(f, t0, y0, t1, |_, _| Ok(Control::Continue))
            .map(|(_, y)| y)
    }

    /// Integrates from t0 towards t1, calling `obs` after each accepted step.
    /// Returns the final (t, y); t < t1 in magnitude only when the observer stopped.
    pub fn integrate_observed<const N: usize, F, O>(
        &self,
        mut f: F,
        t0: f64,
        y0: [f64; N],
        t1: f64,
        mut obs: O,
    ) -> Result<(f64, [f64; N])>
    where
        F: FnMut(f64, &[f64; N]) -> [f64; N],
        O: FnMut(f64, &[f64; N]) -> Result<Control>,
    {
        let span = t1 - t0;
        if span == 0.0 {
            return Ok((t0, y0));
        }
        let dir = span.signum();
        let mut t = t0;
        let mut y = y0;
        let mut k1 = f(t, &y);
        let mut h = self.initial_step(&k1, &y, span.abs()) * dir;
        let h_min = 1e-13 * (1.0 + t0.abs().max(t1.abs()));
        let mut steps = 0usize;
        while (t1 - t) * dir > 0.0 {
            if steps >= self.max_steps {
                return Err(KatokError::StepFailure { t, h });
            }
            steps += 1;
            let last = (t + h - t1) * dir >= 0.0;
            let h_try = if last { t1 - t } else { h };
            let (yn, k7, err) = self.step(&mut f, t, &y, &k1, h_try);
            if !err.is_finite() {
                h *= 0.25;
                if h.abs() < h_min {
                    return Err(KatokError::StepFailure { t, h });
                }
                continue;
            }
            if err <= 1.0 {
                t = if last { t1 } else { t + h_try };
                y = yn;
                k1 = k7;
                let fac = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                // the shortened last step says nothing about the natural step size
                if !last || fac < 1.0 {
                    h = h_try * fac;
                }
                if obs(t, &y)? == Control::Stop {
                    return Ok((t, y));
                }
            } else {
                h = h_try * (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
                if h.abs() < h_min {
                    return Err(KatokError::StepFailure { t, h });
                }
            }
        }
        Ok((t, y))
    }

    fn initial_step<const N: usize>(&self, k1: &[f64; N], y: &[f64; N], span: f64) -> f64 {
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for i in 0..N {
            let sc = self.atol + self.rtol * y[i].abs();
            d0 += (y[i] / sc).powi(2);
            d1 += (k1[i] / sc).powi(2);
        }
        let (d0, d1) = ((d0 / N as f64).sqrt(), (d1 / N as f64).sqrt());
        let h = if d0 < 1e-5 || d1 < 1e-5 {
            1e-3
        } else {
            0.01 * d0 / d1
        };
        h.min(span).max(1e-10 * span)
    }

    /// Integrates until `g(y)` crosses from negative to non-negative, or until `t_max`.
    /// The crossing is located by bisection on the length of a single step from the
    /// last accepted point, which keeps the fifth-order accuracy of the scheme.
    pub fn integrate_to_event<const N: usize, F, G>(
        &self,
        mut f: F,
        t0: f64,
        y0: [f64; N],
        t_max: f64,
        g: G,
    ) -> Result<Option<Event<N>>>
    where
        F: FnMut(f64, &[f64; N]) -> [f64; N],
        G: Fn(&[f64; N]) -> f64,
    {
        let mut prev = (t0, y0);
        // last sample below the surface and first one above it
        let mut hit: Option<[(f64, [f64; N]); 2]> = None;
        // a trajectory starting exactly on the surface must first move below it
        let mut armed = g(&y0) < 0.0;
        self.integrate_observed(&mut f, t0, y0, t_max, |t, y| {
            let gv = g(y);
            if armed && gv >= 0.0 {
                hit = Some([prev, (t, *y)]);
                return Ok(Control::Stop);
            }
            if gv < 0.0 {
                armed = true;
            }
            prev = (t, *y);
            Ok(Control::Continue)
        })?;
        let Some([(ta, ya), (tb, yb)]) = hit else {
            return Ok(None);
        };
        let ka = f(ta, &ya);
        let (mut lo, mut hi) = (0.0, tb - ta);
        let mut y_hi = yb;
        for _ in 0..200 {
            if (hi - lo).abs() <= 1e-15 * (1.0 + tb.abs()) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let (ym, _, _) = self.step(&mut f, ta, &ya, &ka, mid);
            if g(&ym) >= 0.0 {
                hi = mid;
                y_hi = ym;
            } else {
                lo = mid;
            }
        }
        Ok(Some(Event {
            t: ta + hi,
            y: y_hi,
        }))
    }
}

/// Classical RK4 with a fixed step; used as an independent oracle in tests.
pub fn rk4_fixed<const N: usize, F>(mut f: F, t0: f64, y0: [f64; N], t1: f64, n: usize) -> [f64; N]
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let h = (t1 - t0) / n as f64;
    let mut y = y0;
    let mut t = t0;
    for _ in 0..n {
        let k1 = f(t, &y);
        let k2 = f(t + h / 2.0, &axpy(&y, h, &[(0.5, &k1)]));
        let k3 = f(t + h / 2.0, &axpy(&y, h, &[(0.5, &k2)]));
        let k4 = f(t + h, &axpy(&y, h, &[(1.0, &k3)]));
        y = axpy(
            &y,
            h,
            &[
                (1.0 / 6.0, &k1),
                (1.0 / 3.0, &k2),
                (1.0 / 3.0, &k3),
                (1.0 / 6.0, &k4),
            ],
        );
        t += h;
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_growth() {
        let s = Dopri5::new(1e-12);
        let y = s
            .integrate(|_, y: &[f64; 1]| [y[0]], 0.0, [1.0], 3.0)
            .unwrap();
        assert!((y[0] - 3f64.exp()).abs() < 1e-10 * 3f64.exp());
        let back = s.integrate(|_, y: &[f64; 1]| [y[0]], 3.0, y, 0.0).unwrap();
        assert!((back[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn harmonic_oscillator_event() {
        let s = Dopri5::new(1e-12);
        // x = cos t, v = -sin t; the event -x >= 0 first fires at t = π/2
        let ev = s
            .integrate_to_event(
                |_, y: &[f64; 2]| [y[1], -y[0]],
                0.0,
                [1.0, 0.0],
                10.0,
                |y| -y[0],
            )
            .unwrap()
            .unwrap();
        assert!(
            (ev.t - std::f64::consts::FRAC_PI_2).abs() < 1e-10,
            "{}",
            ev.t
        );
    }

    #[test]
    fn rk4_oracle_agrees() {
        let f = |t: f64, y: &[f64; 1]| [t.cos() * y[0]];
        let a = rk4_fixed(f, 0.0, [1.0], 2.0, 20_000)[0];
        let b = Dopri5::new(1e-12).integrate(f, 0.0, [1.0], 2.0).unwrap()[0];
        assert!((a - 2f64.sin().exp()).abs() < 1e-12);
        assert!((a - b).abs() < 1e-11);
    }
}
