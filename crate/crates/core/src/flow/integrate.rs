use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    Euler,
    Rk4,
    /// Adaptive Dormand-Prince 5(4) with local error control.
    Dopri5,
}

pub(crate) struct Stepper {
    kind: Integrator,
    h: f64,
    tol: f64,
}

// Dormand-Prince tableau
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

impl Stepper {
    pub(crate) fn new(kind: Integrator, h: f64, tol: f64) -> Self {
        Self { kind, h, tol }
    }

    /// Advances `y` by one accepted step. `k1` is the field at `y`.
    /// Returns the new state and the step length taken.
    pub(crate) fn step(
        &mut self,
        y: &[f64],
        k1: &[f64],
        f: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    ) -> Result<(Vec<f64>, f64)> {
        let h = self.h;
        match self.kind {
            Integrator::Euler => Ok((combine(y, h, &[(1.0, k1)]), h)),
            Integrator::Rk4 => {
                let k2 = f(&combine(y, h, &[(0.5, k1)]))?;
                let k3 = f(&combine(y, h, &[(0.5, &k2)]))?;
                let k4 = f(&combine(y, h, &[(1.0, &k3)]))?;
                let next = combine(
                    y,
                    h,
                    &[(1.0 / 6.0, k1), (1.0 / 3.0, &k2), (1.0 / 3.0, &k3), (1.0 / 6.0, &k4)],
                );
                Ok((next, h))
            }
            Integrator::Dopri5 => self.dopri5(y, k1, f),
        }
    }

    fn dopri5(
        &mut self,
        y: &[f64],
        k1: &[f64],
        f: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    ) -> Result<(Vec<f64>, f64)> {
        loop {
            let h = self.h;
            if !(h > 1e-300) {
                return Err(Error::NonFinite("adaptive step size underflow".into()));
            }
            let mut k: Vec<Vec<f64>> = vec![k1.to_vec()];
            let mut failed = false;
            for a in A.iter().skip(1) {
                let terms: Vec<(f64, &[f64])> = k.iter().zip(a.iter()).map(|(ki, ai)| (*ai, ki.as_slice())).collect();
                match f(&combine(y, h, &terms)) {
                    Ok(v) if v.iter().all(|x| x.is_finite()) => k.push(v),
                    // a stage left the domain: shrink and retry
                    _ => {
                        failed = true;
                        break;
                    }
                }
            }
            if failed {
                self.h *= 0.25;
                continue;
            }
            let terms5: Vec<(f64, &[f64])> = k.iter().zip(B5).map(|(ki, b)| (b, ki.as_slice())).collect();
            let y5 = combine(y, h, &terms5);
            let mut err = 0.0f64;
            for i in 0..y.len() {
                let e: f64 = h * k.iter().zip(B5.iter().zip(B4)).map(|(ki, (b5, b4))| (b5 - b4) * ki[i]).sum::<f64>();
                let sc = self.tol * (1.0 + y[i].abs().max(y5[i].abs()));
                err = err.max((e / sc).abs());
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            if err <= 1.0 && y5.iter().all(|v| v.is_finite()) {
                self.h = h * factor;
                return Ok((y5, h));
            }
            self.h = h * factor.min(0.9);
        }
    }
}

fn combine(y: &[f64], h: f64, terms: &[(f64, &[f64])]) -> Vec<f64> {
    let mut out = y.to_vec();
    for (c, k) in terms {
        if *c != 0.0 {
            let s = h * c;
            for (o, v) in out.iter_mut().zip(k.iter()) {
                *o += s * v;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay(y: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![-y[0]])
    }

    fn integrate(kind: Integrator, h: f64, t_end: f64) -> f64 {
        let mut st = Stepper::new(kind, h, 1e-12);
        let mut y = vec![1.0];
        let mut t = 0.0;
        while t < t_end - 1e-12 {
            st.h = st.h.min(t_end - t);
            let k1 = decay(&y).unwrap();
            let (next, dt) = st.step(&y, &k1, &decay).unwrap();
            y = next;
            t += dt;
        }
        y[0]
    }

    #[test]
    fn orders_of_accuracy() {
        let exact = (-1f64).exp();
        let e1 = (integrate(Integrator::Euler, 1e-2, 1.0) - exact).abs();
        let e2 = (integrate(Integrator::Euler, 5e-3, 1.0) - exact).abs();
        assert!((e1 / e2 - 2.0).abs() < 0.1);
        let r1 = (integrate(Integrator::Rk4, 1e-1, 1.0) - exact).abs();
        let r2 = (integrate(Integrator::Rk4, 5e-2, 1.0) - exact).abs();
        assert!((r1 / r2 - 16.0).abs() < 1.5);
        let d = (integrate(Integrator::Dopri5, 1e-1, 1.0) - exact).abs();
        assert!(d < 1e-10);
    }
}
