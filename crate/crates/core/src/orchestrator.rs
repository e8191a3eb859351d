//! The outer block-coordinate loop (power → allocation → orientation →
//! placement), the sum-rate ceiling estimate, and the sweep drivers built
//! on top of them.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{ChannelModel, OrientationSet};
use crate::error::{Error, Result};
use crate::geometry::{PlaneTag, Vec3};
use crate::metrics::{evaluate, AllocationMatrix, MetricsReport, PowerAllocation};
use crate::scenario::{validate_scenario, Scenario};
use crate::solvers::orientation::random_orientation;
use crate::solvers::{
    maximize_sum_rate, solve_allocation, solve_orientation, solve_placement, solve_power,
    OrientationContext, SolverOptions,
};

/// Relative sum-rate gain a block must deliver to replace the incumbent.
const ACCEPT_MARGIN: f64 = 1e-12;

/// One iterate of the decision variables.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionState {
    pub power: PowerAllocation,
    pub allocation: AllocationMatrix,
    pub orientation: OrientationSet,
    pub placement: Vec3,
}

/// Uniform `P_max / L` per LED, round-robin elements, receivers facing up,
/// surface at the centre of wall H1.
pub fn default_init(s: &Scenario) -> SolutionState {
    SolutionState {
        power: PowerAllocation::uniform(s.num_leds(), s.p_max()),
        allocation: AllocationMatrix::round_robin(s.num_elements(), s.num_leds()),
        orientation: OrientationSet::zeros(s.num_users()),
        placement: s.room.wall(PlaneTag::H1).center(&s.room),
    }
}

/// What one outer iteration looked like once all four blocks had run.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateRecord {
    pub iteration: usize,
    pub trace_power: f64,
    pub r_tot: f64,
    pub ee: f64,
    /// `ε / P_tot`: the objective of the rate-target problem, normalised so
    /// that larger is better.
    pub figure_of_merit: f64,
    pub max_violation: f64,
    pub delta_p: f64,
    pub delta_b: f64,
    pub delta_lambda: f64,
    pub delta_q: f64,
    /// Sum rate after the power, allocation, orientation and placement
    /// blocks of this iteration.
    pub block_r_tot: [f64; 4],
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterateTrace {
    pub records: Vec<IterateRecord>,
}

impl IterateTrace {
    pub fn figure_of_merit(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.figure_of_merit).collect()
    }

    /// Largest drop between consecutive figures of merit (0 if monotone).
    pub fn worst_decrease(&self) -> f64 {
        self.figure_of_merit()
            .windows(2)
            .map(|w| w[0] - w[1])
            .fold(0.0, f64::max)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub state: SolutionState,
    pub metrics: MetricsReport,
    pub trace: IterateTrace,
    /// `false` when `s_max` was reached before every block change fell
    /// below its threshold; the state is still the last (feasible) iterate.
    pub converged: bool,
}

impl RunOutcome {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

/// Which blocks run and whether the surface exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockSet {
    pub surface: bool,
    pub power: bool,
    pub allocation: bool,
    pub orientation: bool,
    pub placement: bool,
}

impl BlockSet {
    pub const ALL: BlockSet = BlockSet {
        surface: true,
        power: true,
        allocation: true,
        orientation: true,
        placement: true,
    };
}

struct Evaluator<'a> {
    s: &'a Scenario,
    blocks: BlockSet,
}

impl Evaluator<'_> {
    fn model(&self, q: Vec3) -> Result<ChannelModel> {
        ChannelModel::with_surface(self.s, q, self.blocks.surface)
    }

    fn metrics(&self, st: &SolutionState) -> Result<MetricsReport> {
        let cs = self.model(st.placement)?.build(&st.orientation);
        evaluate(self.s, &cs, &st.power, &st.allocation)
    }

    fn improves(&self, candidate: f64, incumbent: f64) -> bool {
        candidate > incumbent + ACCEPT_MARGIN * incumbent.abs().max(1.0)
    }
}

fn relaxed(s: &Scenario) -> Scenario {
    Scenario {
        r_min: 0.0,
        ..s.clone()
    }
}

/// Non-power blocks tuned for sum rate only, from `state`, until no block
/// improves. Returns the final state and its sum rate.
fn maximize_rate(
    s: &Scenario,
    mut state: SolutionState,
    blocks: BlockSet,
    opts: &SolverOptions,
) -> Result<(SolutionState, f64)> {
    let free = relaxed(s);
    let ev = Evaluator { s: &free, blocks };
    let mut best = ev.metrics(&state)?.r_tot_bits;
    for _ in 0..opts.s_max {
        let before = best;
        if blocks.allocation && blocks.surface {
            let cs = ev.model(state.placement)?.build(&state.orientation);
            if let Ok(out) = solve_allocation(&free, &cs, &state.power, &state.allocation, 0.0, opts) {
                let cand = SolutionState {
                    allocation: out.b,
                    ..state.clone()
                };
                let r = ev.metrics(&cand)?.r_tot_bits;
                if ev.improves(r, best) {
                    state = cand;
                    best = r;
                }
            }
        }
        if blocks.orientation {
            let model = ev.model(state.placement)?;
            let ctx = OrientationContext::new(&free, &model, &state.power, &state.allocation, 0.0);
            let cand = SolutionState {
                orientation: maximize_sum_rate(&ctx, &state.orientation),
                ..state.clone()
            };
            let r = ev.metrics(&cand)?.r_tot_bits;
            if ev.improves(r, best) {
                state = cand;
                best = r;
            }
        }
        if blocks.placement && blocks.surface {
            if let Ok(out) = solve_placement(&free, &state.power, &state.allocation, &state.orientation, 0.0, opts) {
                let cand = SolutionState {
                    placement: out.q,
                    ..state.clone()
                };
                let r = ev.metrics(&cand)?.r_tot_bits;
                if ev.improves(r, best) {
                    state = cand;
                    best = r;
                }
            }
        }
        if !ev.improves(best, before) {
            break;
        }
    }
    Ok((state, best))
}

/// Sum-rate ceiling estimate: full uniform power, then allocation,
/// orientation and placement tuned for sum rate until stagnation. A lower
/// bound on the true maximum.
pub fn compute_r_max(s: &Scenario, opts: &SolverOptions) -> Result<f64> {
    compute_r_max_with(s, BlockSet::ALL, opts)
}

pub fn compute_r_max_with(s: &Scenario, blocks: BlockSet, opts: &SolverOptions) -> Result<f64> {
    validate_scenario(s)?;
    let (_, r) = maximize_rate(s, default_init(s), blocks, opts)?;
    Ok(r)
}

/// The block-coordinate algorithm with every block enabled.
pub fn run_algorithm1(
    s: &Scenario,
    epsilon: f64,
    init: SolutionState,
    opts: &SolverOptions,
) -> Result<RunOutcome> {
    run_blocks(s, epsilon, init, BlockSet::ALL, opts)
}

/// [`default_init`] with the surface moved to the centre of each wall in
/// turn, H1 first.
pub fn wall_starts(s: &Scenario) -> Vec<SolutionState> {
    PlaneTag::ALL
        .iter()
        .map(|&tag| SolutionState {
            placement: s.room.wall(tag).center(&s.room),
            ..default_init(s)
        })
        .collect()
}

/// [`run_algorithm1`] from every [`wall_starts`] point, keeping the run with the
/// smallest `tr(P)` (earliest start on ties). Infeasible starts are
/// skipped; the call fails only when every start does.
pub fn run_from_every_wall(s: &Scenario, epsilon: f64, opts: &SolverOptions) -> Result<RunOutcome> {
    let runs = par_map(&wall_starts(s), |init| run_algorithm1(s, epsilon, init.clone(), opts));
    let mut best: Option<RunOutcome> = None;
    let mut last_err = None;
    for r in runs {
        match r {
            Ok(out) => {
                if best
                    .as_ref()
                    .is_none_or(|b| out.state.power.trace() < b.state.power.trace())
                {
                    best = Some(out);
                }
            }
            Err(e @ (Error::Infeasible(_) | Error::NoConvergence { .. })) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    best.ok_or_else(|| last_err.expect("at least one start"))
}

/// The block-coordinate algorithm over the enabled blocks.
///
/// The power block is kept when it is feasible and does not raise `tr(P)`;
/// each other block is kept when it is feasible and strictly raises the sum
/// rate. Power is therefore non-increasing, and so `ε / P_tot` is
/// non-decreasing, over the recorded iterations.
pub fn run_blocks(
    s: &Scenario,
    epsilon: f64,
    init: SolutionState,
    blocks: BlockSet,
    opts: &SolverOptions,
) -> Result<RunOutcome> {
    validate_scenario(s)?;
    opts.validate()?;
    check_state(s, &init)?;
    let ev = Evaluator { s, blocks };
    let mut state = init;
    let mut trace = IterateTrace::default();
    let mut converged = false;

    for iteration in 1..=opts.s_max {
        let prev = state.clone();
        let mut block_r_tot = [0.0; 4];

        if blocks.power {
            let cs = ev.model(state.placement)?.build(&state.orientation);
            match solve_power(s, &cs, &state.allocation, &state.power, epsilon, opts) {
                Ok(out) if out.power.trace() <= state.power.trace() || iteration == 1 => {
                    state.power = out.power;
                }
                Ok(_) => {}
                Err(Error::Infeasible(_)) if iteration == 1 => {
                    // Bootstrap: let the other blocks lift the sum rate at
                    // full power, then retry.
                    let boosted = SolutionState {
                        power: PowerAllocation::uniform(s.num_leds(), s.p_max()),
                        ..state.clone()
                    };
                    let (boosted, _) = maximize_rate(s, boosted, blocks, opts)?;
                    let cs = ev.model(boosted.placement)?.build(&boosted.orientation);
                    let out = solve_power(s, &cs, &boosted.allocation, &boosted.power, epsilon, opts)?;
                    state = SolutionState {
                        power: out.power,
                        ..boosted
                    };
                }
                Err(Error::Infeasible(_)) | Err(Error::NoConvergence { .. }) => {}
                Err(e) => return Err(e),
            }
        } else if iteration == 1 && ev.metrics(&state)?.rate_violation(epsilon, s.r_min) > 1e-9 {
            let (boosted, _) = maximize_rate(s, state.clone(), blocks, opts)?;
            state = boosted;
            if ev.metrics(&state)?.rate_violation(epsilon, s.r_min) > 1e-9 {
                return Err(Error::Infeasible(
                    "requirements unattainable with the power held fixed".into(),
                ));
            }
        }
        let mut current = ev.metrics(&state)?.r_tot_bits;
        block_r_tot[0] = current;

        if blocks.allocation && blocks.surface {
            let cs = ev.model(state.placement)?.build(&state.orientation);
            match solve_allocation(s, &cs, &state.power, &state.allocation, epsilon, opts) {
                Ok(out) => {
                    let cand = SolutionState {
                        allocation: out.b,
                        ..state.clone()
                    };
                    let r = ev.metrics(&cand)?.r_tot_bits;
                    if ev.improves(r, current) {
                        state = cand;
                        current = r;
                    }
                }
                Err(Error::Infeasible(_)) => {}
                Err(e) => return Err(e),
            }
        }
        block_r_tot[1] = current;

        if blocks.orientation {
            let model = ev.model(state.placement)?;
            let ctx = OrientationContext::new(s, &model, &state.power, &state.allocation, epsilon);
            match solve_orientation(&ctx, &state.orientation, opts) {
                Ok(out) => {
                    let cand = SolutionState {
                        orientation: out.lambda,
                        ..state.clone()
                    };
                    let m = ev.metrics(&cand)?;
                    if m.rate_violation(epsilon, s.r_min) <= 0.0 && ev.improves(m.r_tot_bits, current) {
                        state = cand;
                        current = m.r_tot_bits;
                    }
                }
                Err(Error::Infeasible(_)) | Err(Error::NoConvergence { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        block_r_tot[2] = current;

        if blocks.placement && blocks.surface {
            match solve_placement(s, &state.power, &state.allocation, &state.orientation, epsilon, opts) {
                Ok(out) => {
                    if ev.improves(out.sum_rate, current) {
                        state.placement = out.q;
                        current = ev.metrics(&state)?.r_tot_bits;
                    }
                }
                Err(Error::Infeasible(_)) => {}
                Err(e) => return Err(e),
            }
        }
        block_r_tot[3] = current;

        let m = ev.metrics(&state)?;
        let fov = state
            .orientation
            .fov_violation(s.fov_incidence_rad(), s.fov_oirs_rad());
        let record = IterateRecord {
            iteration,
            trace_power: state.power.trace(),
            r_tot: m.r_tot_bits,
            ee: m.ee,
            figure_of_merit: epsilon / m.p_tot,
            max_violation: m.rate_violation(epsilon, s.r_min).max(fov),
            delta_p: state.power.distance(&prev.power),
            delta_b: state.allocation.distance(&prev.allocation),
            delta_lambda: state.orientation.distance(&prev.orientation),
            delta_q: state.placement.distance(prev.placement),
            block_r_tot,
        };
        let small = [record.delta_p, record.delta_b, record.delta_lambda, record.delta_q]
            .iter()
            .zip(&opts.mu)
            .all(|(d, mu)| d <= mu);
        trace.records.push(record);
        if small {
            converged = true;
            break;
        }
    }

    let metrics = ev.metrics(&state)?;
    if metrics.rate_violation(epsilon, s.r_min) > 1e-6 {
        return Err(Error::Infeasible(format!(
            "final iterate misses the requirements by {:.3e}",
            metrics.rate_violation(epsilon, s.r_min)
        )));
    }
    Ok(RunOutcome {
        state,
        metrics,
        trace,
        converged,
    })
}

fn check_state(s: &Scenario, st: &SolutionState) -> Result<()> {
    if st.power.per_led_watts.len() != s.num_leds()
        || st.allocation.num_leds() != s.num_leds()
        || st.allocation.num_elements() != s.num_elements()
        || st.orientation.num_users() != s.num_users()
        || st.orientation.phi.len() != s.num_users()
    {
        return Err(Error::DimensionMismatch("initial state shape differs from scenario".into()));
    }
    crate::geometry::plane_membership(st.placement, &s.room)?;
    Ok(())
}

/// The proposed scheme or one of its ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineMode {
    Proposed,
    NoIrs,
    FixedP,
    RandomOrientation,
    RandomB,
}

impl BaselineMode {
    pub const BASELINES: [BaselineMode; 4] = [
        BaselineMode::FixedP,
        BaselineMode::RandomOrientation,
        BaselineMode::RandomB,
        BaselineMode::NoIrs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineMode::Proposed => "proposed",
            BaselineMode::NoIrs => "no_irs",
            BaselineMode::FixedP => "fixed_P",
            BaselineMode::RandomOrientation => "random_orientation",
            BaselineMode::RandomB => "random_B",
        }
    }

    pub fn blocks(self) -> BlockSet {
        let all = BlockSet::ALL;
        match self {
            BaselineMode::Proposed => all,
            BaselineMode::NoIrs => BlockSet {
                surface: false,
                allocation: false,
                placement: false,
                ..all
            },
            BaselineMode::FixedP => BlockSet { power: false, ..all },
            BaselineMode::RandomOrientation => BlockSet {
                orientation: false,
                ..all
            },
            BaselineMode::RandomB => BlockSet {
                allocation: false,
                ..all
            },
        }
    }

    /// Starting state: [`default_init`] with the frozen block drawn at
    /// random where the mode calls for it.
    pub fn init(self, s: &Scenario, seed: u64) -> SolutionState {
        let mut st = default_init(s);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match self {
            BaselineMode::RandomOrientation => st.orientation = random_orientation(s, &mut rng),
            BaselineMode::RandomB => {
                let owners: Vec<usize> = (0..s.num_elements())
                    .map(|_| rng.random_range(0..s.num_leds()))
                    .collect();
                st.allocation = AllocationMatrix::from_assignment(&owners, s.num_leds());
            }
            _ => {}
        }
        st
    }
}

impl fmt::Display for BaselineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineMode {
    type Err = Error;

    fn from_str(v: &str) -> Result<Self> {
        [BaselineMode::Proposed]
            .into_iter()
            .chain(BaselineMode::BASELINES)
            .find(|m| m.name() == v)
            .ok_or_else(|| Error::ConfigParse(format!("unknown mode `{v}`")))
    }
}

/// One point of the ε-sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoPoint {
    pub alpha: f64,
    pub epsilon: f64,
    pub se: f64,
    pub ee: f64,
    pub p_tot: f64,
    pub feasible: bool,
    pub iterations: usize,
    pub mode: BaselineMode,
    pub converged: bool,
}

fn point_from(alpha: f64, epsilon: f64, mode: BaselineMode, r: Result<RunOutcome>) -> Result<ParetoPoint> {
    match r {
        Ok(out) => Ok(ParetoPoint {
            alpha,
            epsilon,
            se: out.metrics.se,
            ee: out.metrics.ee,
            p_tot: out.metrics.p_tot,
            feasible: true,
            iterations: out.iterations(),
            mode,
            converged: out.converged,
        }),
        Err(Error::Infeasible(_)) | Err(Error::NoConvergence { .. }) => Ok(ParetoPoint {
            alpha,
            epsilon,
            se: f64::NAN,
            ee: f64::NAN,
            p_tot: f64::NAN,
            feasible: false,
            iterations: 0,
            mode,
            converged: false,
        }),
        Err(e) => Err(e),
    }
}

/// Mode `mode` at rate target `epsilon`. Random modes draw from `seed`.
pub fn baseline_run(
    s: &Scenario,
    mode: BaselineMode,
    alpha: f64,
    epsilon: f64,
    seed: u64,
    opts: &SolverOptions,
) -> Result<ParetoPoint> {
    let r = run_blocks(s, epsilon, mode.init(s, seed), mode.blocks(), opts);
    point_from(alpha, epsilon, mode, r)
}

#[cfg(feature = "parallel")]
fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    items.iter().map(f).collect()
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::ConfigParse(format!("alpha {alpha} outside (0, 1]")))
    }
}

/// ε = α·R_max for every α, each solved independently from the mode's
/// cold start; sorted by SE (infeasible points last, then by α).
pub fn pareto_sweep_mode(
    s: &Scenario,
    alphas: &[f64],
    mode: BaselineMode,
    r_max: f64,
    seed: u64,
    opts: &SolverOptions,
) -> Result<Vec<ParetoPoint>> {
    alphas.iter().try_for_each(|&a| check_alpha(a))?;
    let mut points = par_map(alphas, |&alpha| baseline_run(s, mode, alpha, alpha * r_max, seed, opts))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    points.sort_by(|a, b| {
        b.feasible
            .cmp(&a.feasible)
            .then(a.se.total_cmp(&b.se))
            .then(a.alpha.total_cmp(&b.alpha))
    });
    Ok(points)
}

pub fn pareto_sweep(s: &Scenario, alphas: &[f64], opts: &SolverOptions) -> Result<Vec<ParetoPoint>> {
    let r_max = compute_r_max(s, opts)?;
    pareto_sweep_mode(s, alphas, BaselineMode::Proposed, r_max, opts.rng_seed, opts)
}

/// Feasible points not dominated in (SE, EE) by another feasible point.
pub fn pareto_front(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    let feasible: Vec<&ParetoPoint> = points.iter().filter(|p| p.feasible).collect();
    feasible
        .iter()
        .filter(|p| {
            !feasible.iter().any(|q| {
                q.se >= p.se && q.ee >= p.ee && (q.se > p.se || q.ee > p.ee)
            })
        })
        .map(|p| (*p).clone())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerSweepPoint {
    pub pth_dbm: f64,
    pub r_max: f64,
    pub point: ParetoPoint,
}

/// For each average LED power, recompute R_max and solve at ε = α·R_max.
pub fn power_sweep(
    s: &Scenario,
    pth_dbm: &[f64],
    alpha: f64,
    mode: BaselineMode,
    seed: u64,
    opts: &SolverOptions,
) -> Result<Vec<PowerSweepPoint>> {
    check_alpha(alpha)?;
    if pth_dbm.is_empty() {
        return Err(Error::ConfigParse("empty power list".into()));
    }
    par_map(pth_dbm, |&dbm| {
        let sp = s.with_avg_led_power_dbm(dbm);
        let r_max = compute_r_max(&sp, opts)?;
        let point = baseline_run(&sp, mode, alpha, alpha * r_max, seed, opts)?;
        Ok(PowerSweepPoint {
            pth_dbm: dbm,
            r_max,
            point,
        })
    })
    .into_iter()
    .collect()
}
