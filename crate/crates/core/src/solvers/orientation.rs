//! Receiver orientation by the augmented-Lagrangian method.
//!
//! With power, allocation and placement frozen, user `k`'s rate depends on
//! its own `(Ω_k, φ_k)` only:
//!
//! ```text
//! S_k = cos Ω_k · A_k + cos φ_k · B_k,    D_k = σ² + δ² cos² Ω_k · Q_k
//! ```
//!
//! where `A_k`, `B_k` are the powered direct and reflected amplitudes and
//! `Q_k` the interference power at normal incidence. The descent uses the
//! closed-form gradient of that reduction; [`orientation_objective`] always
//! goes through a full channel rebuild.

use std::f64::consts::{FRAC_PI_2, LN_2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{MultiplierState, SolverOptions};
use crate::channel::{ChannelModel, OrientationSet};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, AllocationMatrix, PowerAllocation, RATE_SNR_SCALE};
use crate::scenario::Scenario;

/// Stop once every constraint is met to this tolerance.
pub const VIOLATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
struct UserCoeffs {
    direct: f64,
    reflected: f64,
    interference: f64,
}

/// Everything the orientation block holds fixed.
#[derive(Debug, Clone)]
pub struct OrientationContext<'a> {
    pub scenario: &'a Scenario,
    pub model: &'a ChannelModel,
    pub power: &'a PowerAllocation,
    pub allocation: &'a AllocationMatrix,
    pub epsilon: f64,
    coeffs: Vec<UserCoeffs>,
}

impl<'a> OrientationContext<'a> {
    pub fn new(
        scenario: &'a Scenario,
        model: &'a ChannelModel,
        power: &'a PowerAllocation,
        allocation: &'a AllocationMatrix,
        epsilon: f64,
    ) -> Self {
        let (l_count, k_count) = (scenario.num_leds(), scenario.num_users());
        let p = &power.per_led_watts;
        let elements: Vec<f64> = (0..l_count).map(|l| allocation.b.column(l).sum()).collect();
        let coeffs = (0..k_count)
            .map(|k| {
                let mut direct = 0.0;
                let mut reflected = 0.0;
                for l in (0..l_count).filter(|&l| scenario.assigned(l, k)) {
                    direct += p[l] * model.los_base(l, k);
                    reflected += p[l] * elements[l] * model.nlos_base(l, k);
                }
                let interference = (0..k_count)
                    .filter(|&i| i != k)
                    .map(|i| {
                        let amp: f64 = (0..l_count)
                            .filter(|&l| scenario.assigned(l, i))
                            .map(|l| p[l] * model.los_base(l, k))
                            .sum();
                        amp * amp
                    })
                    .sum();
                UserCoeffs {
                    direct,
                    reflected,
                    interference,
                }
            })
            .collect();
        OrientationContext {
            scenario,
            model,
            power,
            allocation,
            epsilon,
            coeffs,
        }
    }

    fn fovs(&self) -> (f64, f64) {
        (self.scenario.fov_incidence_rad(), self.scenario.fov_oirs_rad())
    }

    /// Per-user rate and its partial derivatives in `(Ω_k, φ_k)`.
    fn rate_and_slopes(&self, k: usize, omega: f64, phi: f64) -> (f64, f64, f64) {
        let s = self.scenario;
        let c = self.coeffs[k];
        let d2 = s.pd_sensitivity * s.pd_sensitivity;
        let u = self.model.incidence_factor(omega);
        let v = self.model.reflection_factor(phi);
        let sig = u * c.direct + v * c.reflected;
        let noise = s.noise_power + d2 * u * u * c.interference;
        let gamma = d2 * sig * sig / noise;
        let rate = 0.5 * (RATE_SNR_SCALE * gamma).ln_1p() / LN_2;
        let dr_dgamma = RATE_SNR_SCALE / (2.0 * LN_2 * (1.0 + RATE_SNR_SCALE * gamma));
        let d_omega = if u == 0.0 && omega > self.fovs().0 {
            0.0
        } else {
            let dg_du = d2 * (2.0 * sig * c.direct * noise - sig * sig * 2.0 * d2 * u * c.interference)
                / (noise * noise);
            dr_dgamma * dg_du * -omega.sin()
        };
        let d_phi = if v == 0.0 && phi > self.fovs().1 {
            0.0
        } else {
            let dg_dv = d2 * 2.0 * sig * c.reflected / noise;
            dr_dgamma * dg_dv * -phi.sin()
        };
        (rate, d_omega, d_phi)
    }

    /// Rates from the reduced model.
    pub fn rates(&self, lambda: &OrientationSet) -> Vec<f64> {
        (0..self.coeffs.len())
            .map(|k| self.rate_and_slopes(k, lambda.omega[k], lambda.phi[k]).0)
            .collect()
    }

    /// Rates through a full channel rebuild and metric evaluation.
    pub fn exact_rates(&self, lambda: &OrientationSet) -> Result<Vec<f64>> {
        let cs = self.model.build(lambda);
        Ok(evaluate(self.scenario, &cs, self.power, self.allocation)?.rate_bits)
    }

    /// Largest violation of the rate target, the floors and the FoV box.
    pub fn violation(&self, lambda: &OrientationSet, rates: &[f64]) -> f64 {
        let (fi, fo) = self.fovs();
        let total: f64 = rates.iter().sum();
        let qos = rates.iter().map(|r| self.scenario.r_min - r).fold(0.0, f64::max);
        qos.max(self.epsilon - total).max(lambda.fov_violation(fi, fo))
    }
}

fn lagrangian(
    ctx: &OrientationContext,
    lambda: &OrientationSet,
    rates: &[f64],
    mult: &MultiplierState,
) -> f64 {
    let (fi, fo) = ctx.fovs();
    let z = mult.zeta;
    let total: f64 = rates.iter().sum();
    let sq = |m: f64, g: f64| (m + z * g).max(0.0).powi(2) - m * m;
    let mut value = ctx.power.trace() + sq(mult.kappa, ctx.epsilon - total) / (2.0 * z);
    for k in 0..rates.len() {
        value += sq(mult.rho[k], ctx.scenario.r_min - rates[k]);
        value += sq(mult.omega_mul[k], lambda.omega[k] - fi);
        value += sq(mult.varpi[k], lambda.phi[k] - fo);
    }
    value
}

/// The augmented Lagrangian `L_ζ(Λ)`, evaluated through a full channel
/// rebuild.
pub fn orientation_objective(
    lambda: &OrientationSet,
    mult: &MultiplierState,
    ctx: &OrientationContext,
) -> Result<f64> {
    let rates = ctx.exact_rates(lambda)?;
    Ok(lagrangian(ctx, lambda, &rates, mult))
}

fn objective_fast(ctx: &OrientationContext, lambda: &OrientationSet, mult: &MultiplierState) -> f64 {
    lagrangian(ctx, lambda, &ctx.rates(lambda), mult)
}

/// Gradient of `L_ζ` used by the descent, flattened `[∂Ω..., ∂φ...]`.
pub fn orientation_gradient(
    lambda: &OrientationSet,
    mult: &MultiplierState,
    ctx: &OrientationContext,
) -> Vec<f64> {
    let (fi, fo) = ctx.fovs();
    let z = mult.zeta;
    let k_count = lambda.num_users();
    let parts: Vec<(f64, f64, f64)> = (0..k_count)
        .map(|k| ctx.rate_and_slopes(k, lambda.omega[k], lambda.phi[k]))
        .collect();
    let total: f64 = parts.iter().map(|p| p.0).sum();
    let m_kappa = (mult.kappa + z * (ctx.epsilon - total)).max(0.0);
    let mut grad = vec![0.0; 2 * k_count];
    for (k, &(rate, d_omega, d_phi)) in parts.iter().enumerate() {
        let m_rho = (mult.rho[k] + z * (ctx.scenario.r_min - rate)).max(0.0);
        let w = -m_kappa - 2.0 * z * m_rho;
        let m_omega = (mult.omega_mul[k] + z * (lambda.omega[k] - fi)).max(0.0);
        let m_varpi = (mult.varpi[k] + z * (lambda.phi[k] - fo)).max(0.0);
        grad[k] = w * d_omega + 2.0 * z * m_omega;
        grad[k_count + k] = w * d_phi + 2.0 * z * m_varpi;
    }
    grad
}

/// One max{0, ·} step for every multiplier, then grows `ζ`.
pub fn update_multipliers(
    mult: &MultiplierState,
    ctx: &OrientationContext,
    lambda: &OrientationSet,
    rates: &[f64],
    opts: &SolverOptions,
) -> MultiplierState {
    let (fi, fo) = ctx.fovs();
    let z = mult.zeta;
    let total: f64 = rates.iter().sum();
    let k_count = rates.len();
    MultiplierState {
        kappa: (mult.kappa + z * (ctx.epsilon - total)).max(0.0),
        rho: (0..k_count)
            .map(|k| (mult.rho[k] + z * (ctx.scenario.r_min - rates[k])).max(0.0))
            .collect(),
        omega_mul: (0..k_count)
            .map(|k| (mult.omega_mul[k] + z * (lambda.omega[k] - fi)).max(0.0))
            .collect(),
        varpi: (0..k_count)
            .map(|k| (mult.varpi[k] + z * (lambda.phi[k] - fo)).max(0.0))
            .collect(),
        zeta: (z * opts.zeta_growth).min(opts.zeta_max),
    }
}

fn project_box(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = v.clamp(0.0, FRAC_PI_2));
}

/// Projected gradient descent of `L_ζ` on `[0, π/2]^{2K}`.
fn descend(
    ctx: &OrientationContext,
    start: &OrientationSet,
    mult: &MultiplierState,
    opts: &SolverOptions,
) -> OrientationSet {
    let mut x = start.to_vec();
    project_box(&mut x);
    let mut lambda = OrientationSet::from_slice(&x);
    let mut value = objective_fast(ctx, &lambda, mult);
    let mut step = f64::NAN;
    for _ in 0..opts.max_descent_steps {
        let g = orientation_gradient(&lambda, mult, ctx);
        let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(gmax > 0.0) {
            break;
        }
        if step.is_nan() {
            step = 0.1 / gmax;
        }
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - step * gi).collect();
            project_box(&mut trial);
            let decrease: f64 = g.iter().zip(x.iter().zip(&trial)).map(|(gi, (a, b))| gi * (a - b)).sum();
            let tl = OrientationSet::from_slice(&trial);
            let tv = objective_fast(ctx, &tl, mult);
            if tv <= value - 1e-4 * decrease && decrease > 0.0 {
                accepted = Some((trial, tl, tv));
                break;
            }
            step *= 0.5;
        }
        let Some((next, nl, nv)) = accepted else {
            break;
        };
        let moved = next
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        x = next;
        lambda = nl;
        value = nv;
        step *= 2.0;
        if moved < 1e-12 {
            break;
        }
    }
    lambda
}

const POLISH_GRID_OMEGA: usize = 81;
const POLISH_GRID_PHI: usize = 41;

fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - r * (hi - lo);
    let mut b = lo + r * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..80 {
        if fa >= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - r * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + r * (hi - lo);
            fb = f(b);
        }
    }
    if fa >= fb {
        (a, fa)
    } else {
        (b, fb)
    }
}

/// Raises every user's rate inside the FoV box. Each rate depends on that
/// user's own angles only, so the search is separable: a coarse grid, then
/// golden-section refinement of each angle around the best node. A user's
/// angles change only if its rate strictly improves, so no requirement
/// that held before can be broken.
pub fn maximize_sum_rate(ctx: &OrientationContext, start: &OrientationSet) -> OrientationSet {
    let (fi, fo) = ctx.fovs();
    let mut out = clamp_to_fov(ctx, start);
    for k in 0..out.num_users() {
        let rate = |om: f64, ph: f64| ctx.rate_and_slopes(k, om, ph).0;
        let current = rate(out.omega[k], out.phi[k]);
        let (mut bo, mut bp, mut br) = (out.omega[k], out.phi[k], current);
        let (h_om, h_ph) = (fi / (POLISH_GRID_OMEGA - 1) as f64, fo / (POLISH_GRID_PHI - 1) as f64);
        for i in 0..POLISH_GRID_OMEGA {
            for j in 0..POLISH_GRID_PHI {
                let (om, ph) = (i as f64 * h_om, j as f64 * h_ph);
                let r = rate(om, ph);
                if r > br {
                    (bo, bp, br) = (om, ph, r);
                }
            }
        }
        for _ in 0..2 {
            let (om, r) = golden_max(|x| rate(x, bp), (bo - h_om).max(0.0), (bo + h_om).min(fi));
            if r > br {
                (bo, br) = (om, r);
            }
            let (ph, r) = golden_max(|x| rate(bo, x), (bp - h_ph).max(0.0), (bp + h_ph).min(fo));
            if r > br {
                (bp, br) = (ph, r);
            }
        }
        if br > current {
            out.omega[k] = bo;
            out.phi[k] = bp;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrientationOutcome {
    pub lambda: OrientationSet,
    pub multipliers: Vec<MultiplierState>,
    pub outer_iterations: usize,
    pub sum_rate: f64,
}

fn clamp_to_fov(ctx: &OrientationContext, lambda: &OrientationSet) -> OrientationSet {
    let (fi, fo) = ctx.fovs();
    OrientationSet {
        omega: lambda.omega.iter().map(|v| v.clamp(0.0, fi)).collect(),
        phi: lambda.phi.iter().map(|v| v.clamp(0.0, fo)).collect(),
    }
}

fn single_start(ctx: &OrientationContext, start: &OrientationSet, opts: &SolverOptions) -> Result<OrientationOutcome> {
    let k_count = ctx.scenario.num_users();
    let mut mult = MultiplierState::new(k_count, opts.kappa_initial, opts.zeta_initial);
    let mut history = vec![mult.clone()];
    let mut lambda = start.clone();
    let mut outer = 0;
    let mut converged = false;
    while outer < opts.max_orientation_outer {
        outer += 1;
        lambda = descend(ctx, &lambda, &mult, opts);
        let rates = ctx.rates(&lambda);
        let violation = ctx.violation(&lambda, &rates);
        mult = update_multipliers(&mult, ctx, &lambda, &rates, opts);
        history.push(mult.clone());
        if violation < VIOLATION_TOLERANCE {
            converged = true;
            break;
        }
    }
    let mut lambda = clamp_to_fov(ctx, &lambda);
    if ctx.violation(&lambda, &ctx.rates(&lambda)) < VIOLATION_TOLERANCE {
        // The Lagrangian is flat once feasible; spend the remaining freedom
        // on sum rate.
        lambda = maximize_sum_rate(ctx, &lambda);
    }
    let rates = ctx.exact_rates(&lambda)?;
    if !converged && ctx.violation(&lambda, &rates) >= VIOLATION_TOLERANCE {
        return Err(Error::NoConvergence {
            what: "orientation augmented Lagrangian",
            iterations: outer,
        });
    }
    Ok(OrientationOutcome {
        sum_rate: rates.iter().sum(),
        lambda,
        multipliers: history,
        outer_iterations: outer,
    })
}

/// Random orientation inside the field-of-view box.
pub fn random_orientation(s: &Scenario, rng: &mut ChaCha8Rng) -> OrientationSet {
    let k = s.num_users();
    let (fi, fo) = (s.fov_incidence_rad(), s.fov_oirs_rad());
    OrientationSet {
        omega: (0..k).map(|_| rng.random_range(0.0..=fi)).collect(),
        phi: (0..k).map(|_| rng.random_range(0.0..=fo)).collect(),
    }
}

/// Orientation meeting the rate requirements and FoV limits, steered
/// toward higher sum rate. Extra random starts come from `opts.rng_seed`;
/// the feasible result with the largest sum rate wins, earliest start on
/// ties.
pub fn solve_orientation(
    ctx: &OrientationContext,
    start: &OrientationSet,
    opts: &SolverOptions,
) -> Result<OrientationOutcome> {
    if start.num_users() != ctx.scenario.num_users() {
        return Err(Error::DimensionMismatch("orientation start length".into()));
    }
    let mut starts = vec![start.clone()];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.rng_seed);
    starts.extend((0..opts.multistart_count).map(|_| random_orientation(ctx.scenario, &mut rng)));
    let mut best: Option<OrientationOutcome> = None;
    let mut last_err = None;
    for st in &starts {
        match single_start(ctx, st, opts) {
            Ok(out) => {
                if best.as_ref().is_none_or(|b| out.sum_rate > b.sum_rate) {
                    best = Some(out);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.expect("at least one start"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::scenario::reference_scenario;

    fn context_parts() -> (Scenario, ChannelModel, PowerAllocation, AllocationMatrix) {
        let s = reference_scenario();
        let model = ChannelModel::new(&s, Vec3::new(0.0, 4.0, 1.5)).unwrap();
        let p = PowerAllocation::uniform(4, s.p_max());
        let b = AllocationMatrix::round_robin(120, 4);
        (s, model, p, b)
    }

    #[test]
    fn reduced_rates_match_rebuild() {
        let (s, model, p, b) = context_parts();
        let ctx = OrientationContext::new(&s, &model, &p, &b, 2.0);
        let lambda = OrientationSet {
            omega: vec![0.1, 0.5, 1.0, 1.3],
            phi: vec![0.2, 0.0, 0.7, 1.2],
        };
        let fast = ctx.rates(&lambda);
        let exact = ctx.exact_rates(&lambda).unwrap();
        for (a, b) in fast.iter().zip(&exact) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn satisfied_constraints_leave_trace_only() {
        let (s, model, p, b) = context_parts();
        let ctx = OrientationContext::new(&s, &model, &p, &b, 0.0);
        let mult = MultiplierState::zeros(4, 1.0);
        let v = orientation_objective(&OrientationSet::zeros(4), &mult, &ctx).unwrap();
        assert_eq!(v, p.trace());
    }

    #[test]
    fn fov_overshoot_penalty() {
        let (s, model, p, b) = context_parts();
        let ctx = OrientationContext::new(&s, &model, &p, &b, 0.0);
        let zeta = 3.0;
        let mult = MultiplierState::zeros(4, zeta);
        let d = 0.05;
        let mut lambda = OrientationSet::zeros(4);
        lambda.phi[2] = s.fov_oirs_rad() + d;
        // user 2 keeps its direct path, so its floor stays met
        let v = orientation_objective(&lambda, &mult, &ctx).unwrap();
        assert!((v - p.trace() - (zeta * d).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn kappa_stays_zero_when_target_exceeded() {
        let (s, model, p, b) = context_parts();
        let ctx = OrientationContext::new(&s, &model, &p, &b, 0.1);
        let lambda = OrientationSet::zeros(4);
        let rates = ctx.rates(&lambda);
        let mult = MultiplierState::new(4, 1e-3, 1.0);
        let next = update_multipliers(&mult, &ctx, &lambda, &rates, &SolverOptions::default());
        assert_eq!(next.kappa, 0.0);
        assert_eq!(next.zeta, 2.0);
    }

    #[test]
    fn lone_user_under_led_faces_up() {
        let mut s = reference_scenario();
        s.led_positions.truncate(1);
        s.user_positions = vec![Vec3::new(2.0, 2.0, 0.85)];
        s.led_user_assignment = vec![vec![1]];
        s.r_min = 0.0;
        let model = ChannelModel::new(&s, Vec3::new(0.0, 4.0, 1.5)).unwrap();
        let p = PowerAllocation::uniform(1, s.p_max());
        let b = AllocationMatrix::round_robin(120, 1);
        let ctx = OrientationContext::new(&s, &model, &p, &b, 0.0);
        let start = OrientationSet {
            omega: vec![0.4],
            phi: vec![0.3],
        };
        let out = solve_orientation(&ctx, &start, &SolverOptions::default()).unwrap();
        assert!(out.lambda.omega[0].abs() < 1e-6, "{:?}", out.lambda);
        assert!(out.multipliers.iter().all(MultiplierState::is_nonnegative));
    }
}
