//! Dormand-Prince 5(4) integrator with continuous output.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rtol: 1e-10,
            atol: 1e-12,
        }
    }
}

impl Tolerances {
    pub fn uniform(tol: f64) -> Self {
        Tolerances {
            rtol: tol,
            atol: tol * 1e-2,
        }
    }
}

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
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Piecewise quartic interpolant over the accepted steps.
#[derive(Debug, Clone)]
pub struct DenseSolution {
    dim: usize,
    starts: Vec<f64>,
    steps: Vec<f64>,
    // five coefficient vectors per step, concatenated
    coef: Vec<f64>,
    t_end: f64,
    y_end: Vec<f64>,
}

impl DenseSolution {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn t_start(&self) -> f64 {
        self.starts.first().copied().unwrap_or(self.t_end)
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn end_state(&self) -> &[f64] {
        &self.y_end
    }

    /// Step boundaries of the accepted mesh, including the final time.
    pub fn mesh(&self) -> Vec<f64> {
        let mut m = self.starts.clone();
        m.push(self.t_end);
        m
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out);
        out
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        if self.starts.is_empty() {
            out.copy_from_slice(&self.y_end);
            return;
        }
        let idx = match self.starts.partition_point(|&s| s <= t) {
            0 => 0,
            k => k - 1,
        };
        let h = self.steps[idx];
        let th = ((t - self.starts[idx]) / h).clamp(0.0, 1.0);
        let th1 = 1.0 - th;
        let n = self.dim;
        let c = &self.coef[idx * 5 * n..(idx + 1) * 5 * n];
        for i in 0..n {
            out[i] = c[i]
                + th * (c[n + i] + th1 * (c[2 * n + i] + th * (c[3 * n + i] + th1 * c[4 * n + i])));
        }
    }
}

/// Integrate `y' = f(t, y)` from `t0` to `t1 > t0`.
///
/// `inside` is checked on every accepted state; the first violation is
/// located on the interpolant and reported as [`Error::DomainExit`].
pub fn integrate<F, D>(
    mut f: F,
    inside: D,
    t0: f64,
    y0: &[f64],
    t1: f64,
    tol: Tolerances,
) -> Result<DenseSolution>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    D: Fn(&[f64]) -> bool,
{
    let n = y0.len();
    let mut sol = DenseSolution {
        dim: n,
        starts: Vec::new(),
        steps: Vec::new(),
        coef: Vec::new(),
        t_end: t0,
        y_end: y0.to_vec(),
    };
    if t1 <= t0 {
        return Ok(sol);
    }
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut y = y0.to_vec();
    let mut t = t0;
    f(t, &y, &mut k[0])?;

    let span = t1 - t0;
    let mut h = initial_step(&mut f, t, &y, &k[0], span, tol)
        .unwrap_or(span * 1e-3)
        .min(span);
    let mut rejected_last = false;
    let mut n_steps = 0usize;
    while t < t1 {
        n_steps += 1;
        if n_steps > 2_000_000 || h < 1e-14 * t.abs().max(1.0) {
            return Err(Error::Integration { t, h });
        }
        let last = t + h >= t1;
        if last {
            h = t1 - t;
        }
        let stage = (|| -> Result<f64> {
            let (k1, rest) = k.split_first_mut().unwrap();
            let (k2, rest) = rest.split_first_mut().unwrap();
            let (k3, rest) = rest.split_first_mut().unwrap();
            let (k4, rest) = rest.split_first_mut().unwrap();
            let (k5, rest) = rest.split_first_mut().unwrap();
            let (k6, rest) = rest.split_first_mut().unwrap();
            let k7 = &mut rest[0];
            for i in 0..n {
                tmp[i] = y[i] + h * A21 * k1[i];
            }
            f(t + C2 * h, &tmp, k2)?;
            for i in 0..n {
                tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
            }
            f(t + C3 * h, &tmp, k3)?;
            for i in 0..n {
                tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            f(t + C4 * h, &tmp, k4)?;
            for i in 0..n {
                tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            f(t + C5 * h, &tmp, k5)?;
            for i in 0..n {
                tmp[i] = y[i]
                    + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            f(t + h, &tmp, k6)?;
            for i in 0..n {
                ynew[i] = y[i]
                    + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
            }
            f(t + h, &ynew, k7)?;
            let mut err = 0.0;
            for i in 0..n {
                let e = h
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = tol.atol + tol.rtol * y[i].abs().max(ynew[i].abs());
                err += (e / sc) * (e / sc);
            }
            Ok((err / n as f64).sqrt())
        })();
        let err = match stage {
            Ok(e) if e.is_finite() => e,
            Ok(_)
            | Err(Error::ConicDomain)
            | Err(Error::Degenerate { .. })
            | Err(Error::NonPositiveSqrt(_)) => {
                // a stage left the domain of the right-hand side
                h *= 0.25;
                rejected_last = true;
                if h < 1e-12 * span {
                    return Err(Error::DomainExit { t });
                }
                continue;
            }
            Err(e) => return Err(e),
        };
        if err <= 1.0 {
            // build continuous output
            let base = sol.coef.len();
            sol.coef.resize(base + 5 * n, 0.0);
            let c = &mut sol.coef[base..];
            for i in 0..n {
                let ydiff = ynew[i] - y[i];
                let bspl = h * k[0][i] - ydiff;
                c[i] = y[i];
                c[n + i] = ydiff;
                c[2 * n + i] = bspl;
                c[3 * n + i] = ydiff - h * k[6][i] - bspl;
                c[4 * n + i] = h
                    * (D1 * k[0][i]
                        + D3 * k[2][i]
                        + D4 * k[3][i]
                        + D5 * k[4][i]
                        + D6 * k[5][i]
                        + D7 * k[6][i]);
            }
            sol.starts.push(t);
            sol.steps.push(h);
            let t_new = if last { t1 } else { t + h };
            if !inside(&ynew) {
                let t_exit = locate_exit(&sol, &inside, t, t_new);
                sol.t_end = t_exit;
                return Err(Error::DomainExit { t: t_exit });
            }
            t = t_new;
            y.copy_from_slice(&ynew);
            let k7 = k[6].clone();
            k[0].copy_from_slice(&k7);
            let fac = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h *= if rejected_last { fac.min(1.0) } else { fac };
            rejected_last = false;
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
            rejected_last = true;
        }
    }
    sol.t_end = t1;
    sol.y_end = y;
    Ok(sol)
}

fn locate_exit<D: Fn(&[f64]) -> bool>(
    sol: &DenseSolution,
    inside: &D,
    mut a: f64,
    mut b: f64,
) -> f64 {
    for _ in 0..60 {
        let m = 0.5 * (a + b);
        if inside(&sol.eval(m)) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

fn initial_step<F>(
    f: &mut F,
    t: f64,
    y: &[f64],
    f0: &[f64],
    span: f64,
    tol: Tolerances,
) -> Option<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y.len();
    let sc: Vec<f64> = y.iter().map(|v| tol.atol + tol.rtol * v.abs()).collect();
    let rms = |v: &[f64]| {
        (v.iter()
            .zip(&sc)
            .map(|(a, s)| (a / s) * (a / s))
            .sum::<f64>()
            / n as f64)
            .sqrt()
    };
    let d0 = rms(y);
    let d1 = rms(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let h0 = h0.min(span);
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
    let mut f1 = vec![0.0; n];
    f(t + h0, &y1, &mut f1).ok()?;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Some((100.0 * h0).min(h1))
}
