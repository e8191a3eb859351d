//! Minimum transmit power for a rate target by successive convex
//! approximation in the log-power domain `x = ln P`.
//!
//! Each user's `ln(1 + z)` is replaced by `v ln z + u`. The desired-signal
//! amplitude (a sum of exponentials in `x` when a user is fed by several
//! LEDs) is condensed into a monomial with arithmetic–geometric weights, and
//! the interference-plus-noise term stays as an exact log-sum-exp. Both
//! steps produce a concave under-estimator of the true rate that is tight at
//! the linearisation point, so every surrogate solution is feasible for the
//! real constraints and the power can only go down.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector};

use super::barrier::{self, BarrierOptions, ConvexProgram, Smooth};
use super::{sca_constant, SolverOptions};
use crate::channel::ChannelState;
use crate::error::{Error, Result};
use crate::metrics::{
    rate, sinr_from_gains, AllocationMatrix, EffectiveGains, PowerAllocation, Receiver,
    RATE_SNR_SCALE,
};
use crate::scenario::Scenario;

/// Slack given to every surrogate target so that a point sitting exactly
/// on a constraint still counts as strictly feasible.
const TARGET_RELAXATION: f64 = 1e-10;
/// Powers are kept above `P_max * e^-60`.
const LOG_FLOOR_SPAN: f64 = 60.0;
const PHASE_ONE_ITERS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct PowerOutcome {
    pub power: PowerAllocation,
    /// `tr(P)` after every accepted SCA step, starting with the first
    /// feasible point.
    pub trace_history: Vec<f64>,
    pub iterations: usize,
    /// Duality-gap bound of the last convex subproblem.
    pub kkt_gap: f64,
    pub stationarity: f64,
}

/// Concave surrogate of one user's rate (bits/s/Hz) around a given point.
#[derive(Debug, Clone)]
struct UserSurrogate {
    /// `v / (2 ln 2)`
    scale: f64,
    /// Everything that does not depend on `x`.
    offset: f64,
    /// `(l, w_l)` AM-GM weights of the desired signal.
    weights: Vec<(usize, f64)>,
    /// Per interferer, `(l, a[l,i] h[l,k])`.
    interferers: Vec<Vec<(usize, f64)>>,
    d2: f64,
    sigma2: f64,
}

impl UserSurrogate {
    fn build(
        s: &Scenario,
        gains: &EffectiveGains,
        k: usize,
        p_hat: &[f64],
        z_hat: f64,
    ) -> Self {
        let (l_count, k_count) = gains.los.shape();
        let d2 = s.pd_sensitivity * s.pd_sensitivity;
        let interferers = (0..k_count)
            .filter(|&i| i != k)
            .map(|i| {
                (0..l_count)
                    .filter(|&l| s.assigned(l, i) && gains.los[(l, k)] > 0.0)
                    .map(|l| (l, gains.los[(l, k)]))
                    .collect::<Vec<_>>()
            })
            .filter(|v| !v.is_empty())
            .collect();
        let (v, u) = sca_constant(z_hat);
        let mut out = UserSurrogate {
            scale: v / (2.0 * LN_2),
            offset: u / (2.0 * LN_2),
            weights: Vec::new(),
            interferers,
            d2,
            sigma2: s.noise_power,
        };
        if v == 0.0 {
            return out;
        }
        let terms: Vec<(usize, f64)> = (0..l_count)
            .filter(|&l| s.assigned(l, k))
            .map(|l| (l, gains.signal_gain(l, k)))
            .filter(|&(_, c)| c > 0.0)
            .collect();
        let total: f64 = terms.iter().map(|&(l, c)| c * p_hat[l]).sum();
        let mut constant = (RATE_SNR_SCALE * d2).ln();
        for &(l, c) in &terms {
            let w = c * p_hat[l] / total;
            if w > 0.0 {
                constant += 2.0 * w * (c.ln() - w.ln());
                out.weights.push((l, w));
            }
        }
        out.offset += out.scale * constant;
        out
    }

    /// `ln D` with gradient and Hessian, `D = σ² + δ² Σ_i I_i²`.
    fn log_noise(&self, x: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let n = x.len();
        let mut d = self.sigma2;
        let mut grad = DVector::zeros(n);
        let mut hess = DMatrix::zeros(n, n);
        for terms in &self.interferers {
            let jac: Vec<(usize, f64)> = terms.iter().map(|&(l, a)| (l, a * x[l].exp())).collect();
            let i_amp: f64 = jac.iter().map(|&(_, j)| j).sum();
            d += self.d2 * i_amp * i_amp;
            for &(l, jl) in &jac {
                grad[l] += 2.0 * self.d2 * i_amp * jl;
                hess[(l, l)] += 2.0 * self.d2 * i_amp * jl;
                for &(m, jm) in &jac {
                    hess[(l, m)] += 2.0 * self.d2 * jl * jm;
                }
            }
        }
        let g = &grad / d;
        let h = hess / d - &g * g.transpose();
        (d.ln(), g, h)
    }

    fn eval(&self, x: &DVector<f64>) -> Smooth {
        let n = x.len();
        if self.scale == 0.0 {
            return Smooth::linear(self.offset, DVector::zeros(n));
        }
        let (ln_d, g_d, h_d) = self.log_noise(x);
        let mut value = self.offset - self.scale * ln_d;
        let mut grad = -g_d * self.scale;
        for &(l, w) in &self.weights {
            value += self.scale * 2.0 * w * x[l];
            grad[l] += self.scale * 2.0 * w;
        }
        Smooth {
            value,
            grad,
            hess: -h_d * self.scale,
        }
    }
}

/// `min Σ e^{x_l}` (or `max s` in phase one) under the surrogate rate
/// constraints, the budget and the log-power floor.
struct PowerProgram {
    users: Vec<UserSurrogate>,
    leds: usize,
    user_target: f64,
    sum_target: f64,
    log_cap: f64,
    x_floor: f64,
    phase_one: bool,
}

impl PowerProgram {
    fn slack(&self, x: &DVector<f64>) -> f64 {
        if self.phase_one {
            x[self.leds]
        } else {
            0.0
        }
    }

    fn with_slack(&self, mut c: Smooth) -> Smooth {
        if self.phase_one {
            c.grad[self.leds] = 1.0;
        }
        c
    }

    fn power_part(&self, x: &DVector<f64>) -> DVector<f64> {
        x.rows(0, self.leds).into_owned()
    }

    fn pad(&self, c: Smooth) -> Smooth {
        let n = self.dim();
        if c.grad.len() == n {
            return c;
        }
        let mut grad = DVector::zeros(n);
        grad.rows_mut(0, self.leds).copy_from(&c.grad);
        let mut hess = DMatrix::zeros(n, n);
        hess.view_mut((0, 0), (self.leds, self.leds)).copy_from(&c.hess);
        Smooth {
            value: c.value,
            grad,
            hess,
        }
    }

    fn user_margins(&self, x: &DVector<f64>) -> Vec<f64> {
        let px = self.power_part(x);
        let mut r: Vec<f64> = self.users.iter().map(|u| u.eval(&px).value - self.user_target).collect();
        let total: f64 = r.iter().sum::<f64>() + self.user_target * self.users.len() as f64;
        r.push(total - self.sum_target);
        r
    }
}

impl ConvexProgram for PowerProgram {
    fn dim(&self) -> usize {
        self.leds + usize::from(self.phase_one)
    }

    fn num_constraints(&self) -> usize {
        self.users.len() + 2 + self.leds + usize::from(self.phase_one)
    }

    fn objective(&self, x: &DVector<f64>) -> Smooth {
        let n = self.dim();
        if self.phase_one {
            let mut grad = DVector::zeros(n);
            grad[self.leds] = -1.0;
            return Smooth::linear(-x[self.leds], grad);
        }
        let e = x.map(f64::exp);
        Smooth {
            value: e.sum(),
            grad: e.clone(),
            hess: DMatrix::from_diagonal(&e),
        }
    }

    fn constraint(&self, j: usize, x: &DVector<f64>) -> Smooth {
        let k_count = self.users.len();
        let n = self.dim();
        let px = self.power_part(x);
        let s = self.slack(x);
        if j < k_count {
            let r = self.users[j].eval(&px);
            let c = Smooth {
                value: self.user_target - r.value + s,
                grad: -r.grad,
                hess: -r.hess,
            };
            return self.with_slack(self.pad(c));
        }
        if j == k_count {
            let mut value = self.sum_target + s;
            let mut grad = DVector::zeros(self.leds);
            let mut hess = DMatrix::zeros(self.leds, self.leds);
            for u in &self.users {
                let r = u.eval(&px);
                value -= r.value;
                grad -= r.grad;
                hess -= r.hess;
            }
            return self.with_slack(self.pad(Smooth { value, grad, hess }));
        }
        if j == k_count + 1 {
            // log-sum-exp form keeps the budget well scaled for any P_max.
            let m = px.max();
            let e = px.map(|v| (v - m).exp());
            let sum = e.sum();
            let p = &e / sum;
            let hess = DMatrix::from_diagonal(&p) - &p * p.transpose();
            return self.pad(Smooth {
                value: m + sum.ln() - self.log_cap,
                grad: p,
                hess,
            });
        }
        let idx = j - k_count - 2;
        let mut grad = DVector::zeros(n);
        if idx < self.leds {
            grad[idx] = -1.0;
            return Smooth::linear(self.x_floor - x[idx], grad);
        }
        // phase-one slack cap s <= 1
        grad[self.leds] = 1.0;
        Smooth::linear(s - 1.0, grad)
    }
}

fn true_rates(s: &Scenario, gains: &EffectiveGains, p: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let pa = PowerAllocation::new(p.to_vec());
    let sinr = sinr_from_gains(gains, &pa, &s.led_user_assignment, Receiver::of(s))?;
    let rates = sinr.iter().map(|&g| rate(g, None)).collect();
    Ok((sinr, rates))
}

fn feasible(rates: &[f64], r_min: f64, epsilon: f64, tol: f64) -> bool {
    rates.iter().all(|&r| r >= r_min - tol) && rates.iter().sum::<f64>() >= epsilon - tol
}

fn surrogates(s: &Scenario, gains: &EffectiveGains, p: &[f64]) -> Result<Vec<UserSurrogate>> {
    let (sinr, _) = true_rates(s, gains, p)?;
    Ok((0..s.num_users())
        .map(|k| UserSurrogate::build(s, gains, k, p, RATE_SNR_SCALE * sinr[k]))
        .collect())
}

/// Minimum-power `P` with `R_tot >= epsilon`, every `R_k >= r_min` and
/// `tr(P) <= P_max`, for fixed allocation and channel.
pub fn solve_power(
    s: &Scenario,
    cs: &ChannelState,
    b: &AllocationMatrix,
    start: &PowerAllocation,
    epsilon: f64,
    opts: &SolverOptions,
) -> Result<PowerOutcome> {
    let l_count = s.num_leds();
    if start.per_led_watts.len() != l_count {
        return Err(Error::DimensionMismatch("start power length".into()));
    }
    let gains = EffectiveGains::new(cs, b)?;
    let p_max = s.p_max();
    let x_floor = p_max.ln() - LOG_FLOOR_SPAN;
    let floor_watts = x_floor.exp();
    let log_cap = p_max.ln() + 1e-12;
    let bopts = BarrierOptions::default();

    let mut p: Vec<f64> = start
        .per_led_watts
        .iter()
        .map(|&w| w.max(floor_watts * 1e3))
        .collect();
    let tr: f64 = p.iter().sum();
    if tr >= p_max {
        let f = p_max * (1.0 - 1e-12) / tr;
        p.iter_mut().for_each(|w| *w *= f);
    }

    let program = |users, phase_one| PowerProgram {
        users,
        leds: l_count,
        user_target: s.r_min - TARGET_RELAXATION,
        sum_target: epsilon - TARGET_RELAXATION,
        log_cap,
        x_floor,
        phase_one,
    };

    // Phase one: push the worst surrogate margin above zero.
    let (_, rates) = true_rates(s, &gains, &p)?;
    if !feasible(&rates, s.r_min, epsilon, 0.0) {
        let mut best_margin = f64::NEG_INFINITY;
        let mut found = false;
        for _ in 0..PHASE_ONE_ITERS {
            let prog = program(surrogates(s, &gains, &p)?, true);
            let x0 = DVector::from_iterator(l_count, p.iter().map(|w| w.ln()));
            let margin0 = prog
                .user_margins(&x0)
                .into_iter()
                .fold(f64::INFINITY, f64::min);
            let z0 = x0.insert_row(l_count, (margin0 - 1.0).min(0.0));
            let sol = barrier::minimize(&prog, z0, &bopts)?;
            let slack = sol.x[l_count];
            p = sol.x.rows(0, l_count).iter().map(|v| v.exp()).collect();
            let (_, rates) = true_rates(s, &gains, &p)?;
            if slack > 0.0 || feasible(&rates, s.r_min, epsilon, 0.0) {
                found = true;
                break;
            }
            if slack <= best_margin + 1e-12 * best_margin.abs().max(1.0) {
                break;
            }
            best_margin = slack;
        }
        if !found {
            return Err(Error::Infeasible(format!(
                "rate target {epsilon:.6} or per-user floor {:.6} unattainable within P_max",
                s.r_min
            )));
        }
    }

    let mut history = vec![p.iter().sum::<f64>()];
    let mut gap = 0.0;
    let mut stationarity = 0.0;
    for it in 1..=opts.max_inner_iters {
        let prog = program(surrogates(s, &gains, &p)?, false);
        let x0 = DVector::from_iterator(l_count, p.iter().map(|w| w.ln()));
        let sol = match barrier::minimize(&prog, x0, &bopts) {
            Ok(sol) => sol,
            // The current point sits numerically on the boundary of its own
            // surrogate; nothing further can be gained.
            Err(Error::Infeasible(_)) => break,
            Err(e) => return Err(e),
        };
        let next: Vec<f64> = sol.x.iter().map(|v| v.exp()).collect();
        let tr_next: f64 = next.iter().sum();
        let tr_now = *history.last().unwrap();
        let change = next
            .iter()
            .zip(&p)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let (_, rates) = true_rates(s, &gains, &next)?;
        if tr_next > tr_now || !feasible(&rates, s.r_min, epsilon, 2.0 * TARGET_RELAXATION) {
            break;
        }
        p = next;
        gap = sol.gap;
        stationarity = sol.stationarity;
        history.push(tr_next);
        if change < opts.inner_tolerance {
            return Ok(finish(p, p_max, history, it, gap, stationarity));
        }
    }
    if history.len() > opts.max_inner_iters {
        return Err(Error::NoConvergence {
            what: "power SCA",
            iterations: opts.max_inner_iters,
        });
    }
    let iterations = history.len() - 1;
    Ok(finish(p, p_max, history, iterations, gap, stationarity))
}

fn finish(
    mut p: Vec<f64>,
    p_max: f64,
    mut history: Vec<f64>,
    iterations: usize,
    kkt_gap: f64,
    stationarity: f64,
) -> PowerOutcome {
    let tr: f64 = p.iter().sum();
    if tr > p_max {
        let f = p_max / tr;
        p.iter_mut().for_each(|w| *w *= f);
        if let Some(last) = history.last_mut() {
            *last = p.iter().sum();
        }
    }
    PowerOutcome {
        power: PowerAllocation::new(p),
        trace_history: history,
        iterations,
        kkt_gap,
        stationarity,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_channel_state, OrientationSet};
    use crate::geometry::Vec3;
    use crate::metrics::evaluate;
    use crate::scenario::reference_scenario;

    fn reference_setup() -> (Scenario, ChannelState, AllocationMatrix) {
        let s = reference_scenario();
        let cs = build_channel_state(&s, &OrientationSet::zeros(4), Vec3::new(0.0, 4.0, 1.5)).unwrap();
        let b = AllocationMatrix::round_robin(120, 4);
        (s, cs, b)
    }

    #[test]
    fn qos_point_is_feasible_and_cheap() {
        let (s, cs, b) = reference_setup();
        let start = PowerAllocation::uniform(4, s.p_max());
        let eps = 4.0 * s.r_min;
        let out = solve_power(&s, &cs, &b, &start, eps, &SolverOptions::default()).unwrap();
        let m = evaluate(&s, &cs, &out.power, &b).unwrap();
        assert!(m.rate_bits.iter().all(|&r| r >= s.r_min - 1e-6), "{:?}", m.rate_bits);
        assert!(out.power.trace() < s.p_max());
        assert!(out.power.trace() <= s.p_max() + 1e-12);
        for w in out.trace_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(out.kkt_gap <= 1e-8 * (1.0 + out.power.trace()));
    }

    #[test]
    fn unattainable_target_is_infeasible() {
        let (s, cs, b) = reference_setup();
        let start = PowerAllocation::uniform(4, s.p_max());
        let r = solve_power(&s, &cs, &b, &start, 1e3, &SolverOptions::default());
        assert!(matches!(r, Err(Error::Infeasible(_))));
    }

    #[test]
    fn recovers_from_infeasible_start() {
        let (s, cs, b) = reference_setup();
        let start = PowerAllocation::uniform(4, 1e-9);
        let out = solve_power(&s, &cs, &b, &start, 2.5, &SolverOptions::default()).unwrap();
        let m = evaluate(&s, &cs, &out.power, &b).unwrap();
        assert!(m.r_tot_bits >= 2.5 - 1e-6);
    }
}
