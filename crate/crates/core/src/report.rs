//! CSV rendering. Numbers use 9 significant digits in the style of C's
//! `%.9g`, with `.` as the decimal separator regardless of locale.

use std::fmt::Write;

use crate::geometry::plane_membership;
use crate::orchestrator::{IterateTrace, ParetoPoint, PowerSweepPoint, SolutionState};
use crate::oracle::OracleComparison;

pub const PARETO_HEADER: &str = "alpha,epsilon_bits,se_bits,ee_bits_per_joule,p_tot_w,feasible,iterations,mode";
pub const POWER_SWEEP_HEADER: &str = "pth_dbm,ee_bits_per_joule,se_bits,p_tot_w,feasible,mode";
pub const TRACE_HEADER: &str =
    "iteration,trace_power_w,r_tot_bits,ee_bits_per_joule,figure_of_merit,max_violation,delta_p,delta_b,delta_lambda,delta_q";
pub const SOLUTION_HEADER: &str = "block,index,value";
pub const ORACLE_HEADER: &str = "source,epsilon_bits,trace_power_w,r_tot_bits,min_rate_bits,ee_bits_per_joule,plane,ratio_to_oracle,within_band";

/// `%.9g`.
pub fn g9(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..9).contains(&exp) {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (8 - exp) as usize;
    strip_zeros(&format!("{x:.decimals$}")).to_string()
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn pareto_csv(points: &[ParetoPoint]) -> String {
    let mut out = String::from(PARETO_HEADER);
    out.push('\n');
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            g9(p.alpha),
            g9(p.epsilon),
            g9(p.se),
            g9(p.ee),
            g9(p.p_tot),
            p.feasible,
            p.iterations,
            p.mode
        );
    }
    out
}

pub fn power_sweep_csv(points: &[PowerSweepPoint]) -> String {
    let mut out = String::from(POWER_SWEEP_HEADER);
    out.push('\n');
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            g9(p.pth_dbm),
            g9(p.point.ee),
            g9(p.point.se),
            g9(p.point.p_tot),
            p.point.feasible,
            p.point.mode
        );
    }
    out
}

pub fn trace_csv(trace: &IterateTrace) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in &trace.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.iteration,
            g9(r.trace_power),
            g9(r.r_tot),
            g9(r.ee),
            g9(r.figure_of_merit),
            g9(r.max_violation),
            g9(r.delta_p),
            g9(r.delta_b),
            g9(r.delta_lambda),
            g9(r.delta_q)
        );
    }
    out
}

/// Long format: `power_w` per LED, `allocation_led` per element (the LED
/// its row selects), `omega_rad` / `phi_rad` per user, `placement_m` for
/// x, y, z.
pub fn solution_csv(st: &SolutionState) -> String {
    let mut out = String::from(SOLUTION_HEADER);
    out.push('\n');
    for (i, w) in st.power.per_led_watts.iter().enumerate() {
        let _ = writeln!(out, "power_w,{i},{}", g9(*w));
    }
    for (n, l) in st.allocation.argmax_rows().iter().enumerate() {
        let _ = writeln!(out, "allocation_led,{n},{l}");
    }
    for (k, v) in st.orientation.omega.iter().enumerate() {
        let _ = writeln!(out, "omega_rad,{k},{}", g9(*v));
    }
    for (k, v) in st.orientation.phi.iter().enumerate() {
        let _ = writeln!(out, "phi_rad,{k},{}", g9(*v));
    }
    let q = st.placement;
    for (i, v) in [q.x, q.y, q.z].iter().enumerate() {
        let _ = writeln!(out, "placement_m,{i},{}", g9(*v));
    }
    out
}

/// Two rows, `oracle` then `solver`; the band verdict is repeated on both.
pub fn oracle_csv(c: &OracleComparison) -> String {
    let mut out = String::from(ORACLE_HEADER);
    out.push('\n');
    let rows = [
        ("oracle", &c.oracle.state, &c.oracle.metrics, 1.0),
        ("solver", &c.solver.state, &c.solver.metrics, c.ratio),
    ];
    for (name, st, m, ratio) in rows {
        let plane = plane_membership(st.placement, &c.room).map_or("none", |p| p.tag.name());
        let _ = writeln!(
            out,
            "{name},{},{},{},{},{},{plane},{},{}",
            g9(c.epsilon),
            g9(st.power.trace()),
            g9(m.r_tot_bits),
            g9(m.min_rate()),
            g9(m.ee),
            g9(ratio),
            c.within_band()
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(g9(1.0), "1");
        assert_eq!(g9(0.1), "0.1");
        assert_eq!(g9(1.0 / 3.0), "0.333333333");
        assert_eq!(g9(123456789.0), "123456789");
        assert_eq!(g9(1234567890.0), "1.23456789e+09");
        assert_eq!(g9(1e-15), "1e-15");
        assert_eq!(g9(0.0001234), "0.0001234");
        assert_eq!(g9(0.00001234), "1.234e-05");
        assert_eq!(g9(-2.5), "-2.5");
        assert_eq!(g9(5.378908318176), "5.37890832");
        assert_eq!(g9(f64::NAN), "nan");
        assert_eq!(g9(999999999.5), "1e+09");
    }
}
