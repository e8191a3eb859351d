//! Exhaustive reference solver over discretised decision variables, for
//! desk-sized instances only.

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelModel, OrientationSet};
use crate::error::{Error, Result};
use crate::geometry::{plane_membership, RoomBounds, Vec3};
use crate::metrics::{evaluate_gains, AllocationMatrix, EffectiveGains, MetricsReport, PowerAllocation};
use crate::orchestrator::{run_from_every_wall, RunOutcome, SolutionState};
use crate::scenario::{validate_scenario, Scenario};
use crate::solvers::orientation::VIOLATION_TOLERANCE;
use crate::solvers::SolverOptions;

/// Enumeration guard.
pub const ORACLE_LIMIT: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleGrids {
    /// Candidate per-LED powers, W.
    pub power_levels: Vec<f64>,
    /// Candidate values for every `Ω_k` and `φ_k`, radians.
    pub angle_levels: Vec<f64>,
    pub placement_points: Vec<Vec3>,
}

impl OracleGrids {
    /// Reads `power_levels`, `angle_levels` and `placement_points` from a
    /// TOML document.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    pub fn validate(&self, s: &Scenario) -> Result<()> {
        if self.power_levels.is_empty() || self.angle_levels.is_empty() || self.placement_points.is_empty() {
            return Err(Error::DimensionMismatch("oracle grids must be nonempty".into()));
        }
        for &q in &self.placement_points {
            plane_membership(q, &s.room)?;
        }
        Ok(())
    }

    /// `|P|^L · L^N · |A|^{2K} · |Q|`, saturating.
    pub fn size(&self, s: &Scenario) -> u128 {
        let pow = |base: usize, exp: usize| (base as u128).checked_pow(exp as u32).unwrap_or(u128::MAX);
        [
            pow(self.power_levels.len(), s.num_leds()),
            pow(s.num_leds(), s.num_elements()),
            pow(self.angle_levels.len(), 2 * s.num_users()),
            self.placement_points.len() as u128,
        ]
        .into_iter()
        .fold(1u128, |a, b| a.saturating_mul(b))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub state: SolutionState,
    pub metrics: MetricsReport,
    /// Grid indices `(power, allocation, angles, placement)` of the winner.
    pub key: (Vec<usize>, Vec<usize>, Vec<usize>, usize),
    pub evaluated: u128,
}

/// Mixed-radix counter: `digits[i]` runs over `0..radix`.
fn digits(mut index: usize, radix: usize, len: usize) -> Vec<usize> {
    let mut d = vec![0; len];
    for slot in d.iter_mut().rev() {
        *slot = index % radix;
        index /= radix;
    }
    d
}

type Key = (Vec<usize>, Vec<usize>, Vec<usize>, usize);

struct Candidate {
    trace: f64,
    key: Key,
}

fn better(a: &Candidate, b: &Option<Candidate>) -> bool {
    match b {
        None => true,
        Some(b) => a.trace < b.trace || (a.trace == b.trace && a.key < b.key),
    }
}

fn search_placement(
    s: &Scenario,
    grids: &OracleGrids,
    epsilon: f64,
    qi: usize,
) -> Result<Option<Candidate>> {
    let (l_count, k_count, n) = (s.num_leds(), s.num_users(), s.num_elements());
    let model = ChannelModel::new(s, grids.placement_points[qi])?;
    let na = grids.angle_levels.len();
    let np = grids.power_levels.len();
    let angle_combos = na.pow(2 * k_count as u32);
    let alloc_combos = l_count.pow(n as u32);
    let power_combos = np.pow(l_count as u32);
    let powers: Vec<(Vec<usize>, PowerAllocation)> = (0..power_combos)
        .map(|pi| {
            let d = digits(pi, np, l_count);
            let p = PowerAllocation::new(d.iter().map(|&i| grids.power_levels[i]).collect());
            (d, p)
        })
        .collect();
    let mut best: Option<Candidate> = None;
    for ai in 0..angle_combos {
        let ad = digits(ai, na, 2 * k_count);
        let lambda = OrientationSet::from_slice(&ad.iter().map(|&i| grids.angle_levels[i]).collect::<Vec<_>>());
        let cs = model.build(&lambda);
        for bi in 0..alloc_combos {
            let bd = digits(bi, l_count, n);
            let b = AllocationMatrix::from_assignment(&bd, l_count);
            let gains = EffectiveGains::new(&cs, &b)?;
            for (pd, p) in &powers {
                let trace = p.trace();
                if best.as_ref().is_some_and(|b| trace > b.trace) {
                    continue;
                }
                let m = evaluate_gains(s, &gains, p)?;
                if m.rate_violation(epsilon, s.r_min) > 0.0 {
                    continue;
                }
                let cand = Candidate {
                    trace,
                    key: (pd.clone(), bd.clone(), ad.clone(), qi),
                };
                if better(&cand, &best) {
                    best = Some(cand);
                }
            }
        }
    }
    Ok(best)
}

#[cfg(feature = "parallel")]
fn per_placement(s: &Scenario, grids: &OracleGrids, epsilon: f64) -> Vec<Result<Option<Candidate>>> {
    use rayon::prelude::*;
    (0..grids.placement_points.len())
        .into_par_iter()
        .map(|qi| search_placement(s, grids, epsilon, qi))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn per_placement(s: &Scenario, grids: &OracleGrids, epsilon: f64) -> Vec<Result<Option<Candidate>>> {
    (0..grids.placement_points.len())
        .map(|qi| search_placement(s, grids, epsilon, qi))
        .collect()
}

/// Minimum `tr(P)` over the full grid subject to `R_tot >= epsilon` and
/// every `R_k >= r_min`. Ties go to the lexicographically smallest grid
/// key, so the answer does not depend on enumeration order.
pub fn brute_force(s: &Scenario, grids: &OracleGrids, epsilon: f64) -> Result<OracleResult> {
    validate_scenario(s)?;
    grids.validate(s)?;
    let size = grids.size(s);
    if size > ORACLE_LIMIT {
        return Err(Error::TooLarge {
            size,
            limit: ORACLE_LIMIT,
        });
    }
    let mut best: Option<Candidate> = None;
    for c in per_placement(s, grids, epsilon) {
        if let Some(c) = c? {
            if better(&c, &best) {
                best = Some(c);
            }
        }
    }
    let best = best.ok_or_else(|| Error::Infeasible("no grid point meets the requirements".into()))?;
    let (pd, bd, ad, qi) = best.key.clone();
    let state = SolutionState {
        power: PowerAllocation::new(pd.iter().map(|&i| grids.power_levels[i]).collect()),
        allocation: AllocationMatrix::from_assignment(&bd, s.num_leds()),
        orientation: OrientationSet::from_slice(&ad.iter().map(|&i| grids.angle_levels[i]).collect::<Vec<_>>()),
        placement: grids.placement_points[qi],
    };
    let cs = ChannelModel::new(s, state.placement)?.build(&state.orientation);
    let metrics = crate::metrics::evaluate(s, &cs, &state.power, &state.allocation)?;
    Ok(OracleResult {
        state,
        metrics,
        key: best.key,
        evaluated: size,
    })
}

/// Relative band within which the continuous pipeline must match the
/// grid optimum.
pub const ORACLE_BAND: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleComparison {
    pub epsilon: f64,
    pub room: RoomBounds,
    pub oracle: OracleResult,
    pub solver: RunOutcome,
    /// Largest rate shortfall of the solver's answer under exact metrics.
    pub solver_violation: f64,
    /// `tr(P_solver) / tr(P_oracle)`.
    pub ratio: f64,
}

impl OracleComparison {
    pub fn within_band(&self) -> bool {
        self.solver_violation <= VIOLATION_TOLERANCE && self.ratio <= 1.0 + ORACLE_BAND
    }
}

/// Runs the block-coordinate pipeline (started from every wall, see
/// [`run_from_every_wall`]) and the exhaustive search at the same rate
/// target.
pub fn compare_with_pipeline(
    s: &Scenario,
    grids: &OracleGrids,
    epsilon: f64,
    opts: &SolverOptions,
) -> Result<OracleComparison> {
    let oracle = brute_force(s, grids, epsilon)?;
    let solver = run_from_every_wall(s, epsilon, opts)?;
    let solver_violation = solver.metrics.rate_violation(epsilon, s.r_min);
    let ratio = solver.state.power.trace() / oracle.state.power.trace();
    Ok(OracleComparison {
        epsilon,
        room: s.room,
        oracle,
        solver,
        solver_violation,
        ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::reference_scenario;

    fn single_link() -> Scenario {
        let mut s = reference_scenario();
        s.led_positions.truncate(1);
        s.user_positions.truncate(1);
        s.led_user_assignment = vec![vec![1]];
        s.oirs_element_count = 1;
        s
    }

    #[test]
    fn picks_smallest_feasible_power() {
        let s = single_link();
        let grids = OracleGrids {
            power_levels: vec![1e-6, 1e-2, 1.0],
            angle_levels: vec![0.0],
            placement_points: vec![Vec3::new(0.0, 4.0, 1.5)],
        };
        // 10 mW gives SINR ~3.9 (0.72 bit); 1 µW is far below the floor.
        let r = brute_force(&s, &grids, 0.6).unwrap();
        assert_eq!(r.state.power.per_led_watts, vec![1e-2]);
        assert!(r.metrics.r_tot_bits >= 0.6);
    }

    #[test]
    fn empty_feasible_set() {
        let s = single_link();
        let grids = OracleGrids {
            power_levels: vec![1e-12],
            angle_levels: vec![0.0],
            placement_points: vec![Vec3::new(0.0, 4.0, 1.5)],
        };
        assert!(matches!(brute_force(&s, &grids, 5.0), Err(Error::Infeasible(_))));
    }

    #[test]
    fn full_instance_is_too_large() {
        let s = reference_scenario();
        let grids = OracleGrids {
            power_levels: vec![1.0; 5],
            angle_levels: vec![0.0; 5],
            placement_points: vec![Vec3::new(0.0, 4.0, 1.5)],
        };
        assert!(matches!(brute_force(&s, &grids, 1.0), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn mixed_radix_digits() {
        assert_eq!(digits(5, 2, 4), vec![0, 1, 0, 1]);
        assert_eq!(digits(0, 3, 2), vec![0, 0]);
    }
}
