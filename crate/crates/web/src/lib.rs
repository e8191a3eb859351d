//! Browser bindings: a floor coverage map, a wall sum-rate map for
//! surface placement, and a single optimisation run. Every entry point
//! takes the scenario as TOML text and returns JSON.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use owc_core::config::parse_config;
use owc_core::geometry::{project_to_plane, WALL_MARGIN};
use owc_core::metrics::{evaluate, PowerAllocation};
use owc_core::{
    compute_r_max, default_init, geometry::plane_membership, run_algorithm1, ChannelModel, OrientationSet, PlaneTag,
    Scenario, Vec3,
};

#[derive(Debug, Serialize)]
pub struct Grid {
    /// Axis labels for `values[row][col]`: rows run along `v`, columns along `u`.
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn plane_tag(name: &str) -> Result<PlaneTag, String> {
    PlaneTag::ALL
        .into_iter()
        .find(|t| t.name().eq_ignore_ascii_case(name))
        .ok_or_else(|| format!("unknown wall `{name}` (expected H1..H4)"))
}

fn load(config: &str) -> Result<owc_core::config::ConfigFile, String> {
    parse_config(config).map_err(|e| e.to_string())
}

/// SINR (dB) a single upward-facing receiver at height `z` would see at
/// each floor point when every LED transmits to it at `P_max / L` and
/// the surface sits at `q` with its elements shared round-robin.
pub fn floor_sinr_map(config: &str, z: f64, q: [f64; 3], n: usize) -> Result<Grid, String> {
    let base = load(config)?.scenario;
    let room = base.room;
    let xs = axis(room.x_min, room.x_max, n);
    let ys = axis(room.y_min, room.y_max, n);
    let init = default_init(&base);
    let mut values = Vec::with_capacity(ys.len());
    for &y in &ys {
        let mut row = Vec::with_capacity(xs.len());
        for &x in &xs {
            let probe = Scenario {
                user_positions: vec![Vec3::new(x, y, z)],
                led_user_assignment: vec![vec![1]; base.num_leds()],
                ..base.clone()
            };
            let cs = ChannelModel::new(&probe, Vec3::from(q))
                .map_err(|e| e.to_string())?
                .build(&OrientationSet::zeros(1));
            let m = evaluate(&probe, &cs, &init.power, &init.allocation).map_err(|e| e.to_string())?;
            row.push(10.0 * m.sinr[0].max(1e-30).log10());
        }
        values.push(row);
    }
    Ok(Grid { u: xs, v: ys, values })
}

/// Sum rate (bits/s/Hz) with the surface at each point of one wall, the
/// other blocks at their default starting values.
pub fn wall_rate_map(config: &str, wall: &str, n: usize) -> Result<Grid, String> {
    let s = load(config)?.scenario;
    let plane = s.room.wall(plane_tag(wall)?);
    let ((u0, u1), (v0, v1)) = plane.free_ranges(&s.room);
    let us = axis(u0 + WALL_MARGIN, u1 - WALL_MARGIN, n);
    let vs = axis(v0 + WALL_MARGIN, v1 - WALL_MARGIN, n);
    let init = default_init(&s);
    let mut values = Vec::with_capacity(vs.len());
    for &v in &vs {
        let mut row = Vec::with_capacity(us.len());
        for &u in &us {
            let q = project_to_plane(u, v, plane, &s.room).map_err(|e| e.to_string())?;
            let cs = ChannelModel::new(&s, q).map_err(|e| e.to_string())?.build(&init.orientation);
            row.push(evaluate(&s, &cs, &init.power, &init.allocation).map_err(|e| e.to_string())?.r_tot_bits);
        }
        values.push(row);
    }
    Ok(Grid { u: us, v: vs, values })
}

#[derive(Debug, Serialize)]
pub struct PointReport {
    pub alpha: f64,
    pub epsilon: f64,
    pub r_max: f64,
    pub se: f64,
    pub ee: f64,
    pub p_tot: f64,
    pub power_w: Vec<f64>,
    pub user_rates: Vec<f64>,
    pub plane: String,
    pub q: [f64; 3],
    pub omega_deg: Vec<f64>,
    pub phi_deg: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimum-power solution at `ε = α·R_max`.
pub fn solve_point(config: &str, alpha: f64) -> Result<PointReport, String> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(format!("alpha {alpha} outside (0, 1]"));
    }
    let cfg = load(config)?;
    let s = &cfg.scenario;
    let r_max = compute_r_max(s, &cfg.solver).map_err(|e| e.to_string())?;
    let epsilon = alpha * r_max;
    let out = run_algorithm1(s, epsilon, default_init(s), &cfg.solver).map_err(|e| e.to_string())?;
    let q = out.state.placement;
    let plane = plane_membership(q, &s.room).map_err(|e| e.to_string())?.tag;
    let PowerAllocation { per_led_watts } = out.state.power.clone();
    Ok(PointReport {
        alpha,
        epsilon,
        r_max,
        se: out.metrics.se,
        ee: out.metrics.ee,
        p_tot: out.metrics.p_tot,
        power_w: per_led_watts,
        user_rates: out.metrics.rate_bits.clone(),
        plane: plane.name().into(),
        q: q.into(),
        omega_deg: out.state.orientation.omega.iter().map(|r| r.to_degrees()).collect(),
        phi_deg: out.state.orientation.phi.iter().map(|r| r.to_degrees()).collect(),
        iterations: out.iterations(),
        converged: out.converged,
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = floorSinrMap)]
pub fn floor_sinr_map_js(config: &str, z: f64, qx: f64, qy: f64, qz: f64, n: usize) -> Result<String, JsValue> {
    to_js(floor_sinr_map(config, z, [qx, qy, qz], n))
}

#[wasm_bindgen(js_name = wallRateMap)]
pub fn wall_rate_map_js(config: &str, wall: &str, n: usize) -> Result<String, JsValue> {
    to_js(wall_rate_map(config, wall, n))
}

#[wasm_bindgen(js_name = solvePoint)]
pub fn solve_point_js(config: &str, alpha: f64) -> Result<String, JsValue> {
    to_js(solve_point(config, alpha))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = include_str!("../../../scenarios/tiny.cfg");

    #[test]
    fn floor_map_is_brightest_under_an_led() {
        let g = floor_sinr_map(TINY, 0.85, [0.0, 4.0, 1.5], 9).unwrap();
        assert_eq!(g.values.len(), 9);
        // x = 2, y = 4 sits directly below the first LED.
        let under = g.values[4][2];
        let corner = g.values[0][0];
        assert!(under > corner + 10.0, "{under} vs {corner}");
    }

    #[test]
    fn wall_map_covers_the_wall() {
        let g = wall_rate_map(TINY, "h3", 5).unwrap();
        assert_eq!((g.u.len(), g.v.len()), (5, 5));
        assert!(g.values.iter().flatten().all(|v| v.is_finite() && *v > 0.0));
        assert!(wall_rate_map(TINY, "H9", 5).is_err());
    }

    #[test]
    fn solve_point_reports_a_wall_placement() {
        let r = solve_point(TINY, 0.5).unwrap();
        assert!(r.se >= r.epsilon - 1e-6);
        assert!(r.plane.starts_with('H'));
        assert!(solve_point(TINY, 0.0).is_err());
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"plane\""));
    }
}
