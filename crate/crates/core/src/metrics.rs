//! SINR, the achievable-rate lower bound and the efficiency totals.

use std::f64::consts::{E, LN_2, PI};

use nalgebra::DMatrix;

use crate::channel::ChannelState;
use crate::error::{Error, Result};
use crate::scenario::Scenario;

/// `e / 2π`, the constant inside the rate bound.
pub const RATE_SNR_SCALE: f64 = E / (2.0 * PI);

pub fn dbm_to_watt(p_dbm: f64) -> f64 {
    10f64.powf((p_dbm - 30.0) / 10.0)
}

/// Diagonal of the LED power matrix, W.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    pub per_led_watts: Vec<f64>,
}

impl PowerAllocation {
    pub fn new(per_led_watts: Vec<f64>) -> Self {
        PowerAllocation { per_led_watts }
    }

    pub fn uniform(leds: usize, total: f64) -> Self {
        PowerAllocation::new(vec![total / leds as f64; leds])
    }

    pub fn trace(&self) -> f64 {
        self.per_led_watts.iter().sum()
    }

    pub fn distance(&self, other: &PowerAllocation) -> f64 {
        self.per_led_watts
            .iter()
            .zip(&other.per_led_watts)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// `N x L` element-to-LED association. Rows sum to one; entries are binary
/// except inside the relaxed allocation phase.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationMatrix {
    pub b: DMatrix<f64>,
}

impl AllocationMatrix {
    /// Element `n` goes to LED `n mod L`.
    pub fn round_robin(elements: usize, leds: usize) -> Self {
        AllocationMatrix {
            b: DMatrix::from_fn(elements, leds, |n, l| f64::from(u8::from(n % leds == l))),
        }
    }

    /// One-hot matrix from per-element LED indices.
    pub fn from_assignment(leds_of_elements: &[usize], leds: usize) -> Self {
        AllocationMatrix {
            b: DMatrix::from_fn(leds_of_elements.len(), leds, |n, l| {
                f64::from(u8::from(leds_of_elements[n] == l))
            }),
        }
    }

    pub fn num_elements(&self) -> usize {
        self.b.nrows()
    }

    pub fn num_leds(&self) -> usize {
        self.b.ncols()
    }

    /// LED index of each row's largest entry, lowest index on ties.
    pub fn argmax_rows(&self) -> Vec<usize> {
        (0..self.b.nrows())
            .map(|n| {
                let mut best = 0;
                for l in 1..self.b.ncols() {
                    if self.b[(n, l)] > self.b[(n, best)] {
                        best = l;
                    }
                }
                best
            })
            .collect()
    }

    pub fn is_one_hot(&self) -> bool {
        self.b.row_iter().all(|row| {
            let ones = row.iter().filter(|&&v| v == 1.0).count();
            let zeros = row.iter().filter(|&&v| v == 0.0).count();
            ones == 1 && ones + zeros == row.len()
        })
    }

    /// Frobenius distance.
    pub fn distance(&self, other: &AllocationMatrix) -> f64 {
        (&self.b - &other.b).norm()
    }
}

/// Per-link aggregate `c[l, k] = h[l, k] + Σ_n b[n, l] g[l, n, k]` together
/// with the direct gains, which alone carry interference.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveGains {
    pub los: DMatrix<f64>,
    pub reflected: DMatrix<f64>,
}

impl EffectiveGains {
    pub fn new(cs: &ChannelState, b: &AllocationMatrix) -> Result<Self> {
        let (l_count, k_count) = (cs.num_leds(), cs.num_users());
        if b.num_leds() != l_count || b.num_elements() != cs.num_elements() {
            return Err(Error::DimensionMismatch(format!(
                "allocation is {}x{}, channel expects {}x{}",
                b.num_elements(),
                b.num_leds(),
                cs.num_elements(),
                l_count
            )));
        }
        let reflected = DMatrix::from_fn(l_count, k_count, |l, k| {
            cs.nlos[k].column(l).dot(&b.b.column(l))
        });
        Ok(EffectiveGains {
            los: cs.los.clone(),
            reflected,
        })
    }

    pub fn signal_gain(&self, l: usize, k: usize) -> f64 {
        self.los[(l, k)] + self.reflected[(l, k)]
    }
}

/// Physical constants the SINR needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Receiver {
    pub sensitivity: f64,
    pub noise_power: f64,
}

impl Receiver {
    pub fn of(s: &Scenario) -> Self {
        Receiver {
            sensitivity: s.pd_sensitivity,
            noise_power: s.noise_power,
        }
    }
}

/// Desired-signal amplitude and interference power of user `k`, before the
/// `δ²` factor: `(S_k, Σ_{i≠k} I_{k,i}²)`.
pub fn signal_and_interference(
    gains: &EffectiveGains,
    p: &PowerAllocation,
    assignment: &[Vec<u8>],
    k: usize,
) -> (f64, f64) {
    let l_count = gains.los.nrows();
    let k_count = gains.los.ncols();
    let mut signal = 0.0;
    for l in 0..l_count {
        if assignment[l][k] == 1 {
            signal += p.per_led_watts[l] * gains.signal_gain(l, k);
        }
    }
    let mut interference = 0.0;
    for i in (0..k_count).filter(|&i| i != k) {
        let amp: f64 = (0..l_count)
            .filter(|&l| assignment[l][i] == 1)
            .map(|l| p.per_led_watts[l] * gains.los[(l, k)])
            .sum();
        interference += amp * amp;
    }
    (signal, interference)
}

fn sinr_from_gains_inner(
    gains: &EffectiveGains,
    p: &PowerAllocation,
    assignment: &[Vec<u8>],
    rx: Receiver,
) -> Vec<f64> {
    let d2 = rx.sensitivity * rx.sensitivity;
    (0..gains.los.ncols())
        .map(|k| {
            let (sig, intf) = signal_and_interference(gains, p, assignment, k);
            d2 * sig * sig / (rx.noise_power + d2 * intf)
        })
        .collect()
}

/// Per-user SINR from precomputed link gains.
pub fn sinr_from_gains(
    gains: &EffectiveGains,
    p: &PowerAllocation,
    assignment: &[Vec<u8>],
    rx: Receiver,
) -> Result<Vec<f64>> {
    if !(rx.noise_power > 0.0) {
        return Err(Error::NonPositiveNoise);
    }
    if p.per_led_watts.len() != gains.los.nrows() || assignment.len() != gains.los.nrows() {
        return Err(Error::DimensionMismatch("power or assignment length".into()));
    }
    Ok(sinr_from_gains_inner(gains, p, assignment, rx))
}

/// Per-user SINR. Reflected paths add to the desired signal only.
pub fn sinr(
    cs: &ChannelState,
    p: &PowerAllocation,
    assignment: &[Vec<u8>],
    b: &AllocationMatrix,
    delta: f64,
    sigma2: f64,
) -> Result<Vec<f64>> {
    let gains = EffectiveGains::new(cs, b)?;
    sinr_from_gains(
        &gains,
        p,
        assignment,
        Receiver {
            sensitivity: delta,
            noise_power: sigma2,
        },
    )
}

/// Rate lower bound `½ log2(1 + e γ / 2π)` in bits/s/Hz, or bits/s when
/// `bandwidth` is given.
pub fn rate(gamma: f64, bandwidth: Option<f64>) -> f64 {
    let per_hz = 0.5 * (RATE_SNR_SCALE * gamma).ln_1p() / LN_2;
    match bandwidth {
        Some(c) => c * per_hz,
        None => per_hz,
    }
}

/// Evaluated figures for one operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub sinr: Vec<f64>,
    /// bits/s/Hz per user
    pub rate_bits: Vec<f64>,
    pub r_tot_bits: f64,
    /// bits/s/Hz
    pub se: f64,
    /// W
    pub p_tot: f64,
    /// bits/J/Hz
    pub ee: f64,
    /// Absolute sum throughput, bits/s.
    pub throughput_bps: f64,
}

impl MetricsReport {
    pub fn min_rate(&self) -> f64 {
        self.rate_bits.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest violation of the rate target and per-user floor.
    pub fn rate_violation(&self, epsilon: f64, r_min: f64) -> f64 {
        let qos = self
            .rate_bits
            .iter()
            .map(|r| r_min - r)
            .fold(0.0, f64::max);
        qos.max(epsilon - self.r_tot_bits)
    }
}

pub fn totals(
    sinr: Vec<f64>,
    rates: Vec<f64>,
    p: &PowerAllocation,
    p_cir: f64,
    bandwidth: f64,
) -> Result<MetricsReport> {
    let p_tot = p.trace() + p_cir;
    if p_tot == 0.0 {
        return Err(Error::ZeroTotalPower);
    }
    let r_tot: f64 = rates.iter().sum();
    Ok(MetricsReport {
        sinr,
        rate_bits: rates,
        r_tot_bits: r_tot,
        se: r_tot,
        p_tot,
        ee: r_tot / p_tot,
        throughput_bps: r_tot * bandwidth,
    })
}

/// Full evaluation from link gains.
pub fn evaluate_gains(
    s: &Scenario,
    gains: &EffectiveGains,
    p: &PowerAllocation,
) -> Result<MetricsReport> {
    let sinr = sinr_from_gains(gains, p, &s.led_user_assignment, Receiver::of(s))?;
    let rates = sinr.iter().map(|&g| rate(g, None)).collect();
    totals(sinr, rates, p, s.circuit_power, s.bandwidth)
}

/// Full evaluation from a channel state.
pub fn evaluate(
    s: &Scenario,
    cs: &ChannelState,
    p: &PowerAllocation,
    b: &AllocationMatrix,
) -> Result<MetricsReport> {
    evaluate_gains(s, &EffectiveGains::new(cs, b)?, p)
}

/// Sum rate only; the allocation and placement searches call this in their
/// inner loops.
pub(crate) fn sum_rate_unchecked(s: &Scenario, gains: &EffectiveGains, p: &PowerAllocation) -> (f64, f64) {
    let sinr = sinr_from_gains_inner(gains, p, &s.led_user_assignment, Receiver::of(s));
    let rates = sinr.iter().map(|&g| rate(g, None));
    rates.fold((0.0, f64::INFINITY), |(sum, min), r| (sum + r, min.min(r)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn one_link(h: f64, g_total: f64) -> (ChannelState, AllocationMatrix) {
        let cs = ChannelState {
            los: DMatrix::from_element(1, 1, h),
            nlos: vec![DMatrix::from_element(1, 1, g_total)],
            lambertian_order: 1.0,
        };
        (cs, AllocationMatrix::round_robin(1, 1))
    }

    #[test]
    fn dbm_conversions() {
        assert_relative_eq!(dbm_to_watt(30.0), 1.0);
        assert_relative_eq!(dbm_to_watt(0.0), 1e-3);
        assert_relative_eq!(dbm_to_watt(-120.0), 1e-15, max_relative = 1e-12);
    }

    #[test]
    fn zero_gains_give_zero_sinr() {
        let (cs, b) = one_link(0.0, 0.0);
        let g = sinr(&cs, &PowerAllocation::new(vec![1.0]), &[vec![1]], &b, 1.0, 1e-15).unwrap();
        assert_eq!(g, vec![0.0]);
    }

    #[test]
    fn single_user_hand_sinr() {
        let (cs, b) = one_link(1e-6, 1e-6);
        let p = PowerAllocation::new(vec![1.0]);
        let g = sinr(&cs, &p, &[vec![1]], &b, 1.0, 1e-15).unwrap();
        assert_relative_eq!(g[0], 4000.0, max_relative = 1e-12);
        let g2 = sinr(&cs, &p, &[vec![1]], &b, 2.0, 1e-15).unwrap();
        assert_relative_eq!(g2[0], 4.0 * g[0], max_relative = 1e-12);
    }

    #[test]
    fn nonpositive_noise() {
        let (cs, b) = one_link(1e-6, 0.0);
        let p = PowerAllocation::new(vec![1.0]);
        assert_eq!(sinr(&cs, &p, &[vec![1]], &b, 1.0, 0.0), Err(Error::NonPositiveNoise));
    }

    #[test]
    fn rate_values() {
        assert_eq!(rate(0.0, None), 0.0);
        assert_relative_eq!(rate(2.0 * PI / E, None), 0.5, epsilon = 1e-15);
        assert_relative_eq!(rate(4000.0, None), 5.378_908_318, epsilon = 1e-8);
        assert_relative_eq!(rate(4000.0, Some(20e6)), 20e6 * rate(4000.0, None));
    }

    #[test]
    fn totals_definitions() {
        let p = PowerAllocation::new(vec![0.25; 4]);
        let m = totals(vec![0.0; 4], vec![0.0; 4], &p, 6.7, 20e6).unwrap();
        assert_eq!(m.ee, 0.0);
        assert_relative_eq!(m.p_tot, 7.7);
        let m = totals(vec![1.0; 3], vec![1.0; 3], &p, 6.7, 20e6).unwrap();
        assert_relative_eq!(m.ee * m.p_tot, 3.0, epsilon = 1e-12);
        assert_eq!(m.se, m.r_tot_bits);
        let zero = PowerAllocation::new(vec![0.0]);
        assert_eq!(totals(vec![0.0], vec![0.0], &zero, 0.0, 1.0), Err(Error::ZeroTotalPower));
    }

    fn two_user_state(h: [[f64; 2]; 2], g: [[f64; 2]; 2]) -> (ChannelState, AllocationMatrix) {
        let cs = ChannelState {
            los: DMatrix::from_fn(2, 2, |l, k| h[l][k]),
            // one element per user-LED pair
            nlos: (0..2).map(|k| DMatrix::from_fn(2, 2, |_, l| g[l][k])).collect(),
            lambertian_order: 1.0,
        };
        (cs, AllocationMatrix::from_assignment(&[0, 1], 2))
    }

    #[test]
    fn interference_from_other_users_leds() {
        let (cs, b) = two_user_state([[2e-6, 1e-6], [0.5e-6, 3e-6]], [[0.0; 2]; 2]);
        let p = PowerAllocation::new(vec![1.0, 2.0]);
        let a = vec![vec![1, 0], vec![0, 1]];
        let g = sinr(&cs, &p, &a, &b, 1.0, 1e-15).unwrap();
        // user 0: signal 1*2e-6, interference from LED 1 (user 1's) = 2*0.5e-6
        assert_relative_eq!(g[0], (2e-6f64).powi(2) / (1e-15 + (1e-6f64).powi(2)), max_relative = 1e-12);
        assert_relative_eq!(g[1], (6e-6f64).powi(2) / (1e-15 + (1e-6f64).powi(2)), max_relative = 1e-12);
    }

    proptest! {
        #[test]
        fn sinr_homogeneous(
            h in proptest::array::uniform4(1e-7f64..1e-5),
            g in proptest::array::uniform4(0.0f64..1e-6),
            c in 0.1f64..10.0,
        ) {
            let (cs, b) = two_user_state([[h[0], h[1]], [h[2], h[3]]], [[g[0], g[1]], [g[2], g[3]]]);
            let p = PowerAllocation::new(vec![0.7, 1.3]);
            let a = vec![vec![1, 0], vec![0, 1]];
            let base = sinr(&cs, &p, &a, &b, 1.0, 1e-13).unwrap();
            let scaled_cs = ChannelState {
                los: &cs.los * c,
                nlos: cs.nlos.iter().map(|m| m * c).collect(),
                lambertian_order: 1.0,
            };
            let scaled = sinr(&scaled_cs, &p, &a, &b, 1.0, 1e-13 * c * c).unwrap();
            for (x, y) in base.iter().zip(&scaled) {
                prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
            }
        }

        #[test]
        fn rate_nondecreasing(g1 in 0.0f64..1e6, dg in 0.0f64..1e6) {
            prop_assert!(rate(g1 + dg, None) >= rate(g1, None));
        }

        #[test]
        fn more_elements_never_hurt_served_user(h in 1e-7f64..1e-5, g in 1e-9f64..1e-6, extra in 1usize..5) {
            let make = |count: usize| {
                let cs = ChannelState {
                    los: DMatrix::from_element(1, 1, h),
                    nlos: vec![DMatrix::from_element(6, 1, g)],
                    lambertian_order: 1.0,
                };
                let b = AllocationMatrix { b: DMatrix::from_fn(6, 1, |n, _| f64::from(u8::from(n < count))) };
                sinr(&cs, &PowerAllocation::new(vec![1.0]), &[vec![1]], &b, 1.0, 1e-15).unwrap()[0]
            };
            prop_assert!(make(extra) >= make(extra - 1));
        }

        #[test]
        fn sum_rate_permutation_invariant(r in proptest::collection::vec(0.0f64..5.0, 1..8)) {
            let p = PowerAllocation::new(vec![1.0]);
            let a = totals(vec![0.0; r.len()], r.clone(), &p, 6.7, 1.0).unwrap();
            let mut rev = r.clone();
            rev.reverse();
            let b = totals(vec![0.0; r.len()], rev, &p, 6.7, 1.0).unwrap();
            prop_assert!((a.r_tot_bits - b.r_tot_bits).abs() < 1e-12);
        }
    }
}
