//! Surface placement: grid search over the four wall planes followed by a
//! short coordinate-descent refinement in each plane's free coordinates.

use super::SolverOptions;
use crate::channel::{ChannelModel, OrientationSet};
use crate::error::{Error, Result};
use crate::geometry::{project_to_plane, PlaneTag, WallPlane, WALL_MARGIN};
use crate::metrics::{sum_rate_unchecked, AllocationMatrix, EffectiveGains, PowerAllocation};
use crate::scenario::Scenario;
use crate::Vec3;

/// Relative margin below which two sum rates count as tied.
const TIE_TOLERANCE: f64 = 1e-12;
const MAX_MOVES_PER_AXIS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct PlacementOutcome {
    pub q: Vec3,
    pub plane: PlaneTag,
    pub sum_rate: f64,
}

struct Evaluator<'a> {
    s: &'a Scenario,
    p: &'a PowerAllocation,
    b: &'a AllocationMatrix,
    lambda: &'a OrientationSet,
    epsilon: f64,
}

impl Evaluator<'_> {
    /// Sum rate at `q`, or `None` when the requirements fail there.
    fn feasible_rate(&self, q: Vec3) -> Result<Option<f64>> {
        let cs = ChannelModel::new(self.s, q)?.build(self.lambda);
        let gains = EffectiveGains::new(&cs, self.b)?;
        let (sum, min) = sum_rate_unchecked(self.s, &gains, self.p);
        Ok((min >= self.s.r_min && sum >= self.epsilon).then_some(sum))
    }
}

fn better(candidate: f64, incumbent: Option<f64>) -> bool {
    incumbent.is_none_or(|best| candidate > best + TIE_TOLERANCE * best.abs().max(1.0))
}

fn axis_points(lo: f64, hi: f64, pitch: f64) -> Vec<f64> {
    let (a, b) = (lo + WALL_MARGIN, hi - WALL_MARGIN);
    let n = ((b - a) / pitch).floor() as usize;
    (0..=n).map(|i| a + i as f64 * pitch).filter(|&u| u <= b).collect()
}

fn best_on_plane(ev: &Evaluator, plane: WallPlane, opts: &SolverOptions) -> Result<Option<(f64, f64, f64)>> {
    let room = &ev.s.room;
    let ((u_lo, u_hi), (v_lo, v_hi)) = plane.free_ranges(room);
    let pitch = opts.grid_resolution_placement;
    let mut best: Option<(f64, f64, f64)> = None;
    for &u in &axis_points(u_lo, u_hi, pitch) {
        for &v in &axis_points(v_lo, v_hi, pitch) {
            let q = project_to_plane(u, v, plane, room)?;
            if let Some(r) = ev.feasible_rate(q)? {
                if better(r, best.map(|b| b.2)) {
                    best = Some((u, v, r));
                }
            }
        }
    }
    let Some((mut u, mut v, mut r)) = best else {
        return Ok(None);
    };

    let h = pitch / 10.0;
    let inside = |x: f64, lo: f64, hi: f64| x > lo + WALL_MARGIN / 2.0 && x < hi - WALL_MARGIN / 2.0;
    for _ in 0..opts.placement_refine_rounds {
        let start = (u, v);
        for axis in 0..2 {
            for dir in [1.0, -1.0] {
                for _ in 0..MAX_MOVES_PER_AXIS {
                    let (nu, nv) = if axis == 0 { (u + dir * h, v) } else { (u, v + dir * h) };
                    if !inside(nu, u_lo, u_hi) || !inside(nv, v_lo, v_hi) {
                        break;
                    }
                    let q = project_to_plane(nu, nv, plane, room)?;
                    match ev.feasible_rate(q)? {
                        Some(nr) if better(nr, Some(r)) => (u, v, r) = (nu, nv, nr),
                        _ => break,
                    }
                }
            }
        }
        if (u, v) == start {
            break;
        }
    }
    Ok(Some((u, v, r)))
}

/// Wall point maximising the sum rate among placements where every
/// requirement holds. Planes are scanned H1..H4; ties keep the earlier
/// candidate.
pub fn solve_placement(
    s: &Scenario,
    p: &PowerAllocation,
    b: &AllocationMatrix,
    lambda: &OrientationSet,
    epsilon: f64,
    opts: &SolverOptions,
) -> Result<PlacementOutcome> {
    let ev = Evaluator {
        s,
        p,
        b,
        lambda,
        epsilon,
    };
    let mut best: Option<PlacementOutcome> = None;
    for tag in PlaneTag::ALL {
        let plane = s.room.wall(tag);
        if let Some((u, v, r)) = best_on_plane(&ev, plane, opts)? {
            if better(r, best.as_ref().map(|b| b.sum_rate)) {
                best = Some(PlacementOutcome {
                    q: project_to_plane(u, v, plane, &s.room)?,
                    plane: tag,
                    sum_rate: r,
                });
            }
        }
    }
    best.ok_or_else(|| Error::Infeasible("no wall placement meets the rate requirements".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::plane_membership;
    use crate::scenario::reference_scenario;

    fn fixed_blocks(s: &Scenario) -> (PowerAllocation, AllocationMatrix, OrientationSet) {
        (
            PowerAllocation::uniform(s.num_leds(), s.p_max()),
            AllocationMatrix::round_robin(s.num_elements(), s.num_leds()),
            OrientationSet::zeros(s.num_users()),
        )
    }

    #[test]
    fn returns_point_on_reported_plane() {
        let s = reference_scenario();
        let (p, b, l) = fixed_blocks(&s);
        let out = solve_placement(&s, &p, &b, &l, 0.0, &SolverOptions::default()).unwrap();
        assert_eq!(plane_membership(out.q, &s.room).unwrap().tag, out.plane);
    }

    #[test]
    fn mirror_symmetric_scene_prefers_lowest_tag() {
        let mut s = reference_scenario();
        s.user_positions = s
            .led_positions
            .iter()
            .map(|p| Vec3::new(p.x, p.y + 0.5, 0.85))
            .collect();
        let (p, b, l) = fixed_blocks(&s);
        let opts = SolverOptions::default();
        let ev = Evaluator {
            s: &s,
            p: &p,
            b: &b,
            lambda: &l,
            epsilon: 0.0,
        };
        let h1 = best_on_plane(&ev, s.room.wall(PlaneTag::H1), &opts).unwrap().unwrap();
        let h2 = best_on_plane(&ev, s.room.wall(PlaneTag::H2), &opts).unwrap().unwrap();
        assert!((h1.2 - h2.2).abs() <= 1e-9 * h1.2);
        let out = solve_placement(&s, &p, &b, &l, 0.0, &opts).unwrap();
        // H2 can only ever tie with H1, which is scanned first.
        assert_ne!(out.plane, PlaneTag::H2, "{out:?} h1={h1:?} h2={h2:?}");
    }

    #[test]
    fn user_near_west_wall_picks_h1() {
        let mut s = reference_scenario();
        s.led_positions = vec![Vec3::new(1.0, 4.0, 3.0)];
        s.user_positions = vec![Vec3::new(0.6, 4.5, 0.85)];
        s.led_user_assignment = vec![vec![1]];
        let (p, b, l) = fixed_blocks(&s);
        let out = solve_placement(&s, &p, &b, &l, 0.0, &SolverOptions::default()).unwrap();
        assert_eq!(out.plane, PlaneTag::H1);
    }

    #[test]
    fn impossible_floor_is_infeasible() {
        let mut s = reference_scenario();
        s.r_min = 100.0;
        let (p, b, l) = fixed_blocks(&s);
        let r = solve_placement(&s, &p, &b, &l, 0.0, &SolverOptions::default());
        assert!(matches!(r, Err(Error::Infeasible(_))));
    }
}
