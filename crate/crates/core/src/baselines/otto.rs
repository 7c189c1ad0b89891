//! Four-stroke Otto cycle of the oscillator engine.
//!
//! The moments `(H, L, D)` evolve affinely under every stroke, so a stroke
//! is a 3x3 affine map, the cycle is their composition and its periodic
//! state is the fixed point of that composition.

use nalgebra::Matrix3;

use super::{evaluate_cycle, EvalOptions};
use crate::env::{oscillator_thermal_energy, CycleProtocol, EnvConfig, HybridAction};
use crate::error::{Error, Result};
use crate::quantum::{BathChoice, BathCoupling, Model};

/// Largest stroke duration of the grid search, in steps.
pub const OTTO_MAX_STEPS: usize = 40;

#[derive(Clone, Copy, Debug, PartialEq)]
struct Affine {
    a: [[f64; 3]; 3],
    b: [f64; 3],
}

impl Affine {
    fn identity() -> Self {
        let mut a = [[0.0; 3]; 3];
        for (i, row) in a.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Self { a, b: [0.0; 3] }
    }

    fn apply(&self, x: &[f64; 3]) -> [f64; 3] {
        let mut y = self.b;
        for i in 0..3 {
            for j in 0..3 {
                y[i] += self.a[i][j] * x[j];
            }
        }
        y
    }

    /// `next ∘ self`.
    fn then(&self, next: &Affine) -> Affine {
        let mut a = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    a[i][j] += next.a[i][k] * self.a[k][j];
                }
            }
        }
        Affine { a, b: next.apply(&self.b) }
    }

    /// Instantaneous frequency change.
    fn jump(u_old: f64, u_new: f64) -> Self {
        let r = (u_new / u_old).powi(2);
        Affine {
            a: [
                [0.5 * (1.0 + r), 0.5 * (1.0 - r), 0.0],
                [0.5 * (1.0 - r), 0.5 * (1.0 + r), 0.0],
                [0.0, 0.0, 1.0],
            ],
            b: [0.0; 3],
        }
    }

    /// Evolution at angular frequency `omega` for time `tau`, optionally in
    /// contact with a bath of rate `rate` and equilibrium energy `h_eq`.
    fn evolve(omega: f64, tau: f64, bath: Option<(f64, f64)>) -> Self {
        let (f, h_eq) = match bath {
            Some((rate, h_eq)) => ((-rate * tau).exp(), h_eq),
            None => (1.0, 0.0),
        };
        let (c, s) = ((2.0 * omega * tau).cos(), (2.0 * omega * tau).sin());
        Affine {
            a: [
                [f, 0.0, 0.0],
                [0.0, f * c, -f * 0.5 * omega * s],
                [0.0, f * 2.0 * s / omega, f * c],
            ],
            b: [(1.0 - f) * h_eq, 0.0, 0.0],
        }
    }

    fn spectral_radius(&self) -> f64 {
        let m = Matrix3::from_fn(|i, j| self.a[i][j]);
        m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Fixed point of `x = A x + b`, provided iterating the map converges to it.
    fn fixed_point(&self) -> Option<[f64; 3]> {
        if !(self.spectral_radius() < 1.0) {
            return None;
        }
        let mut m = [[0.0; 4]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = if i == j { 1.0 } else { 0.0 } - self.a[i][j];
            }
            m[i][3] = self.b[i];
        }
        for col in 0..3 {
            let pivot = (col..3).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))?;
            if m[pivot][col].abs() < 1e-300 {
                return None;
            }
            m.swap(col, pivot);
            for row in 0..3 {
                if row != col {
                    let f = m[row][col] / m[col][col];
                    for k in col..4 {
                        m[row][k] -= f * m[col][k];
                    }
                }
            }
        }
        Some([m[0][3] / m[0][0], m[1][3] / m[1][1], m[2][3] / m[2][2]])
    }
}

/// Controls and stroke durations (hot isochore, expansion ramp, cold
/// isochore, compression ramp), in time units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OttoSpec {
    pub u_cold: f64,
    pub u_hot: f64,
    pub durations: [f64; 4],
}

/// Power and heats of one Otto cycle at its periodic steady state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OttoPoint {
    pub power: f64,
    pub heat_hot: f64,
    pub heat_cold: f64,
}

/// Closed-form evaluator. Ramps are linear in `u`, approximated by
/// `ramp_pieces` sudden jumps each followed by free evolution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OttoEvaluator {
    pub omega0: f64,
    pub u_cold: f64,
    pub u_hot: f64,
    hot: (f64, f64),
    cold: (f64, f64),
    pub ramp_pieces: usize,
}

impl OttoEvaluator {
    pub fn new(config: &EnvConfig, u_cold: f64, u_hot: f64) -> Result<Self> {
        let omega0 = match &config.model {
            Model::Oscillator(o) => o.omega0,
            _ => return Err(Error::Unsupported("the Otto baseline needs the oscillator model".into())),
        };
        let rate = |c: &BathCoupling| match c {
            BathCoupling::Rate(g) => Ok(*g),
            _ => Err(Error::Unsupported("the Otto baseline needs flat bath rates".into())),
        };
        for u in [u_cold, u_hot] {
            if !config.actions.contains(u) {
                return Err(Error::InvalidParameter(format!("Otto control {u} outside the control interval")));
            }
        }
        if !(u_hot > u_cold) {
            return Err(Error::InvalidParameter("Otto cycle needs u_hot > u_cold".into()));
        }
        let b = &config.baths;
        Ok(Self {
            omega0,
            u_cold,
            u_hot,
            hot: (rate(&b.hot.coupling)?, oscillator_thermal_energy(u_hot * omega0, b.hot.beta)),
            cold: (rate(&b.cold.coupling)?, oscillator_thermal_energy(u_cold * omega0, b.cold.beta)),
            ramp_pieces: 32,
        })
    }

    fn isochore(&self, hot: bool, tau: f64) -> Affine {
        let (u, bath) = if hot { (self.u_hot, self.hot) } else { (self.u_cold, self.cold) };
        Affine::evolve(u * self.omega0, tau, Some(bath))
    }

    fn ramp(&self, from: f64, to: f64, tau: f64) -> Affine {
        let n = self.ramp_pieces;
        let mut map = Affine::identity();
        let mut u_prev = from;
        for k in 1..=n {
            let u = from + (to - from) * k as f64 / n as f64;
            map = map
                .then(&Affine::jump(u_prev, u))
                .then(&Affine::evolve(u * self.omega0, tau / n as f64, None));
            u_prev = u;
        }
        map
    }

    fn cycle(&self, strokes: [&Affine; 4], total_time: f64) -> Option<OttoPoint> {
        let [hot, expand, cold, compress] = strokes;
        let full = hot.then(expand).then(cold).then(compress);
        let x0 = full.fixed_point()?;
        let x1 = hot.apply(&x0);
        let x2 = expand.apply(&x1);
        let x3 = cold.apply(&x2);
        let heat_hot = x1[0] - x0[0];
        let heat_cold = x3[0] - x2[0];
        let power = (heat_hot + heat_cold) / total_time;
        power.is_finite().then_some(OttoPoint {
            power,
            heat_hot,
            heat_cold,
        })
    }

    pub fn evaluate(&self, durations: [f64; 4]) -> Option<OttoPoint> {
        if durations.iter().any(|&t| !(t > 0.0)) {
            return None;
        }
        let strokes = [
            self.isochore(true, durations[0]),
            self.ramp(self.u_hot, self.u_cold, durations[1]),
            self.isochore(false, durations[2]),
            self.ramp(self.u_cold, self.u_hot, durations[3]),
        ];
        self.cycle([&strokes[0], &strokes[1], &strokes[2], &strokes[3]], durations.iter().sum())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OttoOptimum {
    /// Reported cycle, durations on the step grid.
    pub spec: OttoSpec,
    pub steps: [usize; 4],
    pub power: f64,
    pub heat_hot: f64,
    pub heat_cold: f64,
    /// Best grid point and its power.
    pub grid_steps: [usize; 4],
    pub grid_power: f64,
    /// Optimum of the continuous relaxation.
    pub continuous: [f64; 4],
    pub continuous_power: f64,
    /// Set when Newton was abandoned for coordinate ascent.
    pub newton_fallback: bool,
}

fn power_or_worst(ev: &OttoEvaluator, t: [f64; 4]) -> f64 {
    ev.evaluate(t).map_or(f64::NEG_INFINITY, |p| p.power)
}

fn gradient_and_hessian(ev: &OttoEvaluator, t: [f64; 4]) -> ([f64; 4], [[f64; 4]; 4]) {
    let h: [f64; 4] = t.map(|x| 1e-4 * x.max(1e-2));
    let f = |d: [f64; 4]| power_or_worst(ev, d);
    let shift = |mut d: [f64; 4], i: usize, s: f64| {
        d[i] += s;
        d
    };
    let f0 = f(t);
    let mut g = [0.0; 4];
    let mut hess = [[0.0; 4]; 4];
    for i in 0..4 {
        let fp = f(shift(t, i, h[i]));
        let fm = f(shift(t, i, -h[i]));
        g[i] = (fp - fm) / (2.0 * h[i]);
        hess[i][i] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let pp = f(shift(shift(t, i, h[i]), j, h[j]));
            let pm = f(shift(shift(t, i, h[i]), j, -h[j]));
            let mp = f(shift(shift(t, i, -h[i]), j, h[j]));
            let mm = f(shift(shift(t, i, -h[i]), j, -h[j]));
            let v = (pp - pm - mp + mm) / (4.0 * h[i] * h[j]);
            hess[i][j] = v;
            hess[j][i] = v;
        }
    }
    (g, hess)
}

/// Solves `-H x = g` by Cholesky; `None` unless `-H` is positive definite.
fn newton_direction(g: [f64; 4], hess: [[f64; 4]; 4]) -> Option<[f64; 4]> {
    let mut l = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..=i {
            let mut s = -hess[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut y = [0.0; 4];
    for i in 0..4 {
        let mut s = g[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut x = [0.0; 4];
    for i in (0..4).rev() {
        let mut s = y[i];
        for k in i + 1..4 {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    Some(x)
}

const MIN_DURATION: f64 = 1e-3;

/// Damped Newton ascent; returns the point, its power and whether the
/// Hessian forced a switch to coordinate ascent.
fn refine(ev: &OttoEvaluator, start: [f64; 4], scale: f64) -> ([f64; 4], f64, bool) {
    let mut t = start;
    let mut p = power_or_worst(ev, t);
    for _ in 0..100 {
        let (g, hess) = gradient_and_hessian(ev, t);
        let Some(dir) = newton_direction(g, hess) else {
            let (t2, p2) = coordinate_ascent(ev, t, p, scale);
            return (t2, p2, true);
        };
        let mut alpha = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let cand = std::array::from_fn(|i| (t[i] + alpha * dir[i]).max(MIN_DURATION));
            let pc = power_or_worst(ev, cand);
            if pc > p {
                t = cand;
                p = pc;
                moved = true;
                break;
            }
            alpha *= 0.5;
        }
        let step = dir.iter().map(|d| (alpha * d).abs()).fold(0.0, f64::max);
        if !moved || step < 1e-10 * scale {
            break;
        }
    }
    (t, p, false)
}

fn coordinate_ascent(ev: &OttoEvaluator, mut t: [f64; 4], mut p: f64, scale: f64) -> ([f64; 4], f64) {
    let mut step = scale;
    while step > 1e-9 * scale {
        let mut improved = false;
        for i in 0..4 {
            for s in [step, -step] {
                let mut cand = t;
                cand[i] = (cand[i] + s).max(MIN_DURATION);
                let pc = power_or_worst(ev, cand);
                if pc > p {
                    t = cand;
                    p = pc;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (t, p)
}

/// Grid search over stroke durations of `1..=max_steps` steps, followed by
/// Newton refinement of the continuous relaxation. The reported cycle is on
/// the step grid and is never worse than the best grid point.
pub fn optimize_otto(config: &EnvConfig, u_cold: f64, u_hot: f64, max_steps: usize) -> Result<OttoOptimum> {
    let ev = OttoEvaluator::new(config, u_cold, u_hot)?;
    if max_steps == 0 {
        return Err(Error::InvalidParameter("Otto grid needs at least one step per stroke".into()));
    }
    let dt = config.dt;
    let tau = |n: usize| n as f64 * dt;
    let hot: Vec<Affine> = (1..=max_steps).map(|n| ev.isochore(true, tau(n))).collect();
    let cold: Vec<Affine> = (1..=max_steps).map(|n| ev.isochore(false, tau(n))).collect();
    let expand: Vec<Affine> = (1..=max_steps).map(|n| ev.ramp(u_hot, u_cold, tau(n))).collect();
    let compress: Vec<Affine> = (1..=max_steps).map(|n| ev.ramp(u_cold, u_hot, tau(n))).collect();

    let mut best = ([1usize; 4], f64::NEG_INFINITY);
    for (i, h) in hot.iter().enumerate() {
        for (j, e) in expand.iter().enumerate() {
            let he = h.then(e);
            for (k, c) in cold.iter().enumerate() {
                let hec = he.then(c);
                for (l, r) in compress.iter().enumerate() {
                    let steps = [i + 1, j + 1, k + 1, l + 1];
                    let total = tau(steps.iter().sum());
                    let full = hec.then(r);
                    let Some(x0) = full.fixed_point() else { continue };
                    let x1 = h.apply(&x0);
                    let x2 = e.apply(&x1);
                    let x3 = c.apply(&x2);
                    let power = (x1[0] - x0[0] + x3[0] - x2[0]) / total;
                    if power > best.1 {
                        best = (steps, power);
                    }
                }
            }
        }
    }
    let (grid_steps, grid_power) = best;
    if !grid_power.is_finite() {
        return Err(Error::NonFinite("Otto grid search".into()));
    }

    let start = grid_steps.map(tau);
    let (continuous, continuous_power, newton_fallback) = refine(&ev, start, dt);
    let rounded = continuous.map(|t| ((t / dt).round() as usize).max(1));
    let rounded_power = power_or_worst(&ev, rounded.map(tau));
    let (steps, power) = if rounded_power > grid_power {
        (rounded, rounded_power)
    } else {
        (grid_steps, grid_power)
    };
    let point = ev.evaluate(steps.map(tau)).expect("evaluated above");
    Ok(OttoOptimum {
        spec: OttoSpec {
            u_cold,
            u_hot,
            durations: steps.map(tau),
        },
        steps,
        power,
        heat_hot: point.heat_hot,
        heat_cold: point.heat_cold,
        grid_steps,
        grid_power,
        continuous,
        continuous_power,
        newton_fallback,
    })
}

/// The Otto cycle on the environment's step grid: ramps become staircases
/// with one control value per step.
pub fn otto_protocol(steps: [usize; 4], u_cold: f64, u_hot: f64) -> Result<CycleProtocol> {
    let mut actions = Vec::new();
    actions.extend(std::iter::repeat_n(HybridAction::new(u_hot, BathChoice::Hot), steps[0]));
    for k in 1..=steps[1] {
        let u = u_hot + (u_cold - u_hot) * k as f64 / steps[1] as f64;
        actions.push(HybridAction::new(u, BathChoice::None));
    }
    actions.extend(std::iter::repeat_n(HybridAction::new(u_cold, BathChoice::Cold), steps[2]));
    for k in 1..=steps[3] {
        let u = u_cold + (u_hot - u_cold) * k as f64 / steps[3] as f64;
        actions.push(HybridAction::new(u, BathChoice::None));
    }
    CycleProtocol::from_actions(&actions)
}

/// Power of [`otto_protocol`] in the environment itself.
pub fn otto_protocol_power(config: &EnvConfig, steps: [usize; 4], u_cold: f64, u_hot: f64) -> Result<f64> {
    Ok(evaluate_cycle(config, &otto_protocol(steps, u_cold, u_hot)?, &EvalOptions::default())?.power)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_composition_order() {
        let a = Affine::jump(0.5, 1.0);
        let b = Affine::evolve(2.0, 0.3, Some((0.6, 1.5)));
        let x = [1.2, -0.3, 0.4];
        let lhs = a.then(&b).apply(&x);
        let rhs = b.apply(&a.apply(&x));
        for i in 0..3 {
            assert!((lhs[i] - rhs[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn fixed_point_solves() {
        let m = Affine::evolve(1.0, 0.7, Some((0.6, 2.0))).then(&Affine::jump(1.0, 0.5));
        let x = m.fixed_point().unwrap();
        let y = m.apply(&x);
        for i in 0..3 {
            assert!((x[i] - y[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_direction() {
        let hess = [[-2.0, 0.5, 0.0, 0.0], [0.5, -3.0, 0.0, 0.0], [0.0, 0.0, -1.0, 0.0], [0.0, 0.0, 0.0, -4.0]];
        let g = [1.0, 2.0, 3.0, 4.0];
        let x = newton_direction(g, hess).unwrap();
        for i in 0..4 {
            let r: f64 = (0..4).map(|j| -hess[i][j] * x[j]).sum();
            assert!((r - g[i]).abs() < 1e-12);
        }
        let mut bad = hess;
        bad[0][0] = 1.0;
        assert!(newton_direction(g, bad).is_none());
    }
}
