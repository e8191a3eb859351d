//! Element-to-LED allocation: projected-gradient ascent of the sum rate over
//! row-stochastic `B`, argmax rounding, then greedy single-row moves.

use std::f64::consts::LN_2;

use nalgebra::DMatrix;

use super::SolverOptions;
use crate::channel::ChannelState;
use crate::error::{Error, Result};
use crate::metrics::{AllocationMatrix, PowerAllocation, RATE_SNR_SCALE};
use crate::scenario::Scenario;

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationOutcome {
    pub b: AllocationMatrix,
    /// Relaxed sum rate after every accepted projected-gradient step.
    pub relaxed_history: Vec<f64>,
    pub repair_moves: usize,
    pub improvement_moves: usize,
}

/// Euclidean projection onto the probability simplex, in place.
pub fn project_simplex(row: &mut [f64]) {
    let mut sorted: Vec<f64> = row.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, &v) in sorted.iter().enumerate() {
        cumulative += v;
        let t = (cumulative - 1.0) / (i + 1) as f64;
        if v - t > 0.0 {
            theta = t;
        }
    }
    for v in row.iter_mut() {
        *v = (*v - theta).max(0.0);
    }
}

/// Rates as a function of the aggregated reflected gains, with power,
/// direct gains and assignment frozen.
struct RateModel<'a> {
    s: &'a Scenario,
    cs: &'a ChannelState,
    p: &'a [f64],
    /// `Σ_{i≠k} I_{k,i}²` per user.
    interference: Vec<f64>,
    d2: f64,
}

impl<'a> RateModel<'a> {
    fn new(s: &'a Scenario, cs: &'a ChannelState, p: &'a PowerAllocation) -> Self {
        let (l_count, k_count) = cs.los.shape();
        let p = &p.per_led_watts[..];
        let interference = (0..k_count)
            .map(|k| {
                (0..k_count)
                    .filter(|&i| i != k)
                    .map(|i| {
                        let amp: f64 = (0..l_count)
                            .filter(|&l| s.assigned(l, i))
                            .map(|l| p[l] * cs.los[(l, k)])
                            .sum();
                        amp * amp
                    })
                    .sum()
            })
            .collect();
        RateModel {
            s,
            cs,
            p,
            interference,
            d2: s.pd_sensitivity * s.pd_sensitivity,
        }
    }

    /// `reflected[l, k] = Σ_n b[n, l] g[l, n, k]`
    fn reflected(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let (l_count, k_count) = self.cs.los.shape();
        DMatrix::from_fn(l_count, k_count, |l, k| self.cs.nlos[k].column(l).dot(&b.column(l)))
    }

    fn signal(&self, reflected: &DMatrix<f64>, k: usize) -> f64 {
        (0..self.cs.los.nrows())
            .filter(|&l| self.s.assigned(l, k))
            .map(|l| self.p[l] * (self.cs.los[(l, k)] + reflected[(l, k)]))
            .sum()
    }

    fn rates(&self, reflected: &DMatrix<f64>) -> Vec<f64> {
        (0..self.cs.los.ncols())
            .map(|k| {
                let sig = self.signal(reflected, k);
                let gamma = self.d2 * sig * sig / (self.s.noise_power + self.d2 * self.interference[k]);
                0.5 * (RATE_SNR_SCALE * gamma).ln_1p() / LN_2
            })
            .collect()
    }

    fn sum_rate(&self, reflected: &DMatrix<f64>) -> f64 {
        self.rates(reflected).iter().sum()
    }

    /// Gradient of `R_tot` with respect to `B` (N x L).
    fn gradient(&self, reflected: &DMatrix<f64>) -> DMatrix<f64> {
        let (l_count, k_count) = self.cs.los.shape();
        let n = self.cs.num_elements();
        let mut grad = DMatrix::zeros(n, l_count);
        for k in 0..k_count {
            let sig = self.signal(reflected, k);
            let noise = self.s.noise_power + self.d2 * self.interference[k];
            let gamma = self.d2 * sig * sig / noise;
            let d_rate = RATE_SNR_SCALE * self.d2 * sig / (LN_2 * noise * (1.0 + RATE_SNR_SCALE * gamma));
            for l in (0..l_count).filter(|&l| self.s.assigned(l, k)) {
                let c = d_rate * self.p[l];
                for row in 0..n {
                    grad[(row, l)] += c * self.cs.nlos[k][(row, l)];
                }
            }
        }
        grad
    }

    fn violation(&self, rates: &[f64], epsilon: f64) -> f64 {
        let qos = rates.iter().map(|r| self.s.r_min - r).fold(0.0, f64::max);
        qos.max(epsilon - rates.iter().sum::<f64>())
    }

    /// Reflected gains after moving element `n` from LED `from` to `to`.
    fn moved(&self, reflected: &DMatrix<f64>, n: usize, from: usize, to: usize) -> DMatrix<f64> {
        let mut r = reflected.clone();
        for k in 0..r.ncols() {
            r[(from, k)] -= self.cs.nlos[k][(n, from)];
            r[(to, k)] += self.cs.nlos[k][(n, to)];
        }
        r
    }
}

fn relaxed_ascent(model: &RateModel, start: &DMatrix<f64>, opts: &SolverOptions) -> (DMatrix<f64>, Vec<f64>) {
    let mut b = start.clone();
    let mut value = model.sum_rate(&model.reflected(&b));
    let mut history = vec![value];
    let mut step = f64::NAN;
    for _ in 0..opts.max_allocation_steps {
        let grad = model.gradient(&model.reflected(&b));
        let gmax = grad.amax();
        if !(gmax > 0.0) {
            break;
        }
        if step.is_nan() {
            step = 1.0 / gmax;
        }
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial = &b + &grad * step;
            for mut row in trial.row_iter_mut() {
                let mut v: Vec<f64> = row.iter().copied().collect();
                project_simplex(&mut v);
                row.iter_mut().zip(v).for_each(|(dst, src)| *dst = src);
            }
            let delta = &trial - &b;
            let predicted = grad.dot(&delta);
            let tv = model.sum_rate(&model.reflected(&trial));
            if tv >= value + 1e-4 * predicted && tv >= value {
                accepted = Some((trial, tv, delta.norm()));
                break;
            }
            step *= 0.5;
        }
        let Some((next, nv, moved)) = accepted else {
            break;
        };
        b = next;
        value = nv;
        history.push(value);
        step *= 2.0;
        if moved < 1e-10 {
            break;
        }
    }
    (b, history)
}

fn round_rows(b: &DMatrix<f64>) -> Vec<usize> {
    AllocationMatrix { b: b.clone() }.argmax_rows()
}

/// Binary allocation maximising the sum rate for fixed `P` and channel,
/// subject to the rate target and per-user floor.
pub fn solve_allocation(
    s: &Scenario,
    cs: &ChannelState,
    p: &PowerAllocation,
    start: &AllocationMatrix,
    epsilon: f64,
    opts: &SolverOptions,
) -> Result<AllocationOutcome> {
    let (n, l_count) = (cs.num_elements(), cs.num_leds());
    if start.num_elements() != n || start.num_leds() != l_count {
        return Err(Error::DimensionMismatch("start allocation shape".into()));
    }
    let model = RateModel::new(s, cs, p);
    let (relaxed, relaxed_history) = relaxed_ascent(&model, &start.b, opts);
    let mut owner = round_rows(&relaxed);
    let mut reflected = model.reflected(&AllocationMatrix::from_assignment(&owner, l_count).b);
    let mut rates = model.rates(&reflected);

    // Repair: raise whichever requirement is worst violated.
    let mut repair_moves = 0;
    while model.violation(&rates, epsilon) > 0.0 && repair_moves < n {
        let worst = (0..rates.len())
            .map(|k| (k, s.r_min - rates[k]))
            .filter(|&(_, v)| v > 0.0)
            .fold(None, |acc: Option<(usize, f64)>, (k, v)| match acc {
                Some((_, bv)) if bv >= v => acc,
                _ => Some((k, v)),
            })
            .map(|(k, _)| k);
        let score = |r: &[f64]| match worst {
            Some(k) => r[k],
            None => r.iter().sum::<f64>(),
        };
        let current = score(&rates);
        let mut best: Option<(usize, usize, DMatrix<f64>, f64)> = None;
        for row in 0..n {
            for to in (0..l_count).filter(|&to| to != owner[row]) {
                let trial = model.moved(&reflected, row, owner[row], to);
                let sc = score(&model.rates(&trial));
                if sc > current && best.as_ref().is_none_or(|b| sc > b.3) {
                    best = Some((row, to, trial, sc));
                }
            }
        }
        let Some((row, to, trial, _)) = best else {
            break;
        };
        owner[row] = to;
        reflected = trial;
        rates = model.rates(&reflected);
        repair_moves += 1;
    }
    if model.violation(&rates, epsilon) > 0.0 {
        return Err(Error::Infeasible(format!(
            "no binary allocation meets the rate requirements (violation {:.3e})",
            model.violation(&rates, epsilon)
        )));
    }

    // Greedy improvement: single-row moves that raise R_tot and stay
    // feasible.
    let mut improvement_moves = 0;
    let mut total: f64 = rates.iter().sum();
    while improvement_moves < n {
        let mut best: Option<(usize, usize, DMatrix<f64>, f64)> = None;
        for row in 0..n {
            for to in (0..l_count).filter(|&to| to != owner[row]) {
                let trial = model.moved(&reflected, row, owner[row], to);
                let r = model.rates(&trial);
                let t: f64 = r.iter().sum();
                if t > total * (1.0 + 1e-12)
                    && model.violation(&r, epsilon) <= 0.0
                    && best.as_ref().is_none_or(|b| t > b.3)
                {
                    best = Some((row, to, trial, t));
                }
            }
        }
        let Some((row, to, trial, t)) = best else {
            break;
        };
        owner[row] = to;
        reflected = trial;
        total = t;
        improvement_moves += 1;
    }

    Ok(AllocationOutcome {
        b: AllocationMatrix::from_assignment(&owner, l_count),
        relaxed_history,
        repair_moves,
        improvement_moves,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_channel_state, OrientationSet};
    use crate::geometry::Vec3;
    use crate::metrics::evaluate;
    use crate::scenario::reference_scenario;
    use proptest::prelude::*;

    #[test]
    fn simplex_projection_examples() {
        let mut r = vec![0.5, 0.5];
        project_simplex(&mut r);
        assert_eq!(r, vec![0.5, 0.5]);
        let mut r = vec![2.0, 0.0, 0.0];
        project_simplex(&mut r);
        assert_eq!(r, vec![1.0, 0.0, 0.0]);
        let mut r = vec![0.2, 0.2, 0.2];
        project_simplex(&mut r);
        for v in r {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn uniform_relaxation_rounds_to_lowest_index() {
        let b = DMatrix::from_element(6, 3, 1.0 / 3.0);
        assert_eq!(round_rows(&b), vec![0; 6]);
    }

    #[test]
    fn dominant_led_takes_single_element() {
        let mut s = reference_scenario();
        s.led_positions.truncate(2);
        s.user_positions = vec![Vec3::new(1.0, 4.0, 0.85)];
        s.led_user_assignment = vec![vec![1], vec![1]];
        s.oirs_element_count = 1;
        s.r_min = 0.0;
        // LED 0 at (2,2,3) is far closer to the wall point than LED 1 moved away.
        s.led_positions[1] = Vec3::new(7.5, 7.5, 3.0);
        let cs = build_channel_state(&s, &OrientationSet::zeros(1), Vec3::new(0.0, 3.0, 2.0)).unwrap();
        let p = PowerAllocation::uniform(2, s.p_max());
        let start = AllocationMatrix::from_assignment(&[1], 2);
        let out = solve_allocation(&s, &cs, &p, &start, 0.0, &SolverOptions::default()).unwrap();
        assert_eq!(out.b.argmax_rows(), vec![0]);
    }

    #[test]
    fn reference_allocation_is_one_hot_and_not_worse() {
        let s = reference_scenario();
        let cs = build_channel_state(&s, &OrientationSet::zeros(4), Vec3::new(0.0, 4.0, 1.5)).unwrap();
        let p = PowerAllocation::uniform(4, s.p_max());
        let start = AllocationMatrix::round_robin(120, 4);
        let before = evaluate(&s, &cs, &p, &start).unwrap().r_tot_bits;
        let out = solve_allocation(&s, &cs, &p, &start, 2.0, &SolverOptions::default()).unwrap();
        assert!(out.b.is_one_hot());
        let after = evaluate(&s, &cs, &p, &out.b).unwrap().r_tot_bits;
        assert!(after >= before - 1e-12, "{after} < {before}");
        for w in out.relaxed_history.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn impossible_target_is_infeasible() {
        let s = reference_scenario();
        let cs = build_channel_state(&s, &OrientationSet::zeros(4), Vec3::new(0.0, 4.0, 1.5)).unwrap();
        let p = PowerAllocation::uniform(4, s.p_max());
        let start = AllocationMatrix::round_robin(120, 4);
        let r = solve_allocation(&s, &cs, &p, &start, 1e3, &SolverOptions::default());
        assert!(matches!(r, Err(Error::Infeasible(_))));
    }

    proptest! {
        #[test]
        fn projection_lands_on_simplex(v in proptest::collection::vec(-5.0f64..5.0, 1..8)) {
            let mut r = v.clone();
            project_simplex(&mut r);
            prop_assert!(r.iter().all(|&x| x >= 0.0));
            prop_assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
