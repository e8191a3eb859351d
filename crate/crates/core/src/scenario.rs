//! The immutable network description: room, LEDs, users, photodiode and
//! surface hardware, power and quality-of-service limits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, Distances, RoomBounds, Vec3};
use crate::metrics::dbm_to_watt;

/// Angles are stored in degrees as they appear in configuration files; the
/// `*_rad` accessors return radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub room: RoomBounds,
    pub led_positions: Vec<Vec3>,
    pub user_positions: Vec<Vec3>,
    /// Photodiode active area, m².
    pub pd_area: f64,
    /// Semi-angle at half power illuminance, degrees.
    pub semi_angle_half_power: f64,
    pub optical_filter_gain: f64,
    pub concentrator_gain: f64,
    /// Photodiode responsivity, A/W.
    pub pd_sensitivity: f64,
    /// Receiver field of view for the direct path, degrees.
    pub fov_incidence: f64,
    /// Receiver field of view for the reflected path, degrees.
    pub fov_oirs: f64,
    pub oirs_reflection_coeff: f64,
    pub oirs_element_count: usize,
    /// Area of a single mirror element, m².
    pub oirs_element_area: f64,
    /// Modulation bandwidth, Hz.
    pub bandwidth: f64,
    /// Receiver noise power, W.
    pub noise_power: f64,
    /// Fixed circuit power, W.
    pub circuit_power: f64,
    /// Average emitted optical power per LED, dBm.
    pub avg_led_power_dbm: f64,
    /// Per-user minimum rate, bits/s/Hz.
    pub r_min: f64,
    /// `L x K` binary matrix; entry `[l][k] = 1` when LED `l` carries user `k`'s data.
    pub led_user_assignment: Vec<Vec<u8>>,
}

impl Scenario {
    pub fn num_leds(&self) -> usize {
        self.led_positions.len()
    }

    pub fn num_users(&self) -> usize {
        self.user_positions.len()
    }

    pub fn num_elements(&self) -> usize {
        self.oirs_element_count
    }

    pub fn fov_incidence_rad(&self) -> f64 {
        geometry::deg_to_rad(self.fov_incidence)
    }

    pub fn fov_oirs_rad(&self) -> f64 {
        geometry::deg_to_rad(self.fov_oirs)
    }

    /// Total transmit power budget `L * P_th`, W.
    pub fn p_max(&self) -> f64 {
        self.num_leds() as f64 * dbm_to_watt(self.avg_led_power_dbm)
    }

    pub fn assigned(&self, led: usize, user: usize) -> bool {
        self.led_user_assignment[led][user] == 1
    }

    pub fn distances(&self, q: Vec3) -> Distances {
        geometry::distances(&self.led_positions, &self.user_positions, q)
    }

    /// The same network with a different per-LED power level.
    pub fn with_avg_led_power_dbm(&self, dbm: f64) -> Scenario {
        Scenario {
            avg_led_power_dbm: dbm,
            ..self.clone()
        }
    }

    pub fn validate(self) -> Result<Scenario> {
        validate_scenario(&self)?;
        Ok(self)
    }
}

/// Checks every structural and physical invariant of a scenario.
pub fn validate_scenario(s: &Scenario) -> Result<()> {
    let (l, k) = (s.num_leds(), s.num_users());
    if l == 0 || k == 0 || s.oirs_element_count == 0 {
        return Err(Error::DimensionMismatch(format!(
            "need at least one LED, user and element (got L={l}, K={k}, N={})",
            s.oirs_element_count
        )));
    }
    if !s.room.is_valid() {
        return Err(Error::DimensionMismatch("room bounds are not ordered".into()));
    }
    for (what, list) in [("led", &s.led_positions), ("user", &s.user_positions)] {
        for (i, p) in list.iter().enumerate() {
            if !s.room.contains(*p) {
                return Err(Error::OutOfRoom {
                    what: format!("{what}[{i}]"),
                    x: p.x,
                    y: p.y,
                    z: p.z,
                });
            }
        }
    }

    let a = &s.led_user_assignment;
    if a.len() != l || a.iter().any(|row| row.len() != k) {
        return Err(Error::DimensionMismatch(format!(
            "led_user_assignment must be {l}x{k}"
        )));
    }
    for (i, row) in a.iter().enumerate() {
        if row.iter().any(|&v| v > 1) {
            return Err(Error::DimensionMismatch(format!(
                "led_user_assignment row {i} is not binary"
            )));
        }
        let sum: u32 = row.iter().map(|&v| v as u32).sum();
        if sum != 1 {
            return Err(Error::DimensionMismatch(format!(
                "led_user_assignment row {i} sums to {sum}, expected 1"
            )));
        }
    }

    let positive = [
        ("pd_area", s.pd_area),
        ("semi_angle_half_power", s.semi_angle_half_power),
        ("optical_filter_gain", s.optical_filter_gain),
        ("concentrator_gain", s.concentrator_gain),
        ("pd_sensitivity", s.pd_sensitivity),
        ("fov_incidence", s.fov_incidence),
        ("fov_oirs", s.fov_oirs),
        ("oirs_reflection_coeff", s.oirs_reflection_coeff),
        ("oirs_element_area", s.oirs_element_area),
        ("bandwidth", s.bandwidth),
        ("noise_power", s.noise_power),
        ("circuit_power", s.circuit_power),
    ];
    for (name, value) in positive {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::NonPositiveConstant(name));
        }
    }
    if s.oirs_reflection_coeff > 1.0 {
        return Err(Error::NonPositiveConstant("oirs_reflection_coeff"));
    }
    if !s.avg_led_power_dbm.is_finite() {
        return Err(Error::NonPositiveConstant("avg_led_power_dbm"));
    }
    if !(s.r_min.is_finite() && s.r_min >= 0.0) {
        return Err(Error::NonPositiveConstant("r_min"));
    }
    Ok(())
}

/// Values used throughout the test-suites and the bundled configuration:
/// an 8 x 8 x 3 m room, four ceiling LEDs, four users at desk height.
///
/// User placement (desk height 0.85 m, a 0.5 m offset from each LED) is a
/// free choice, not part of the reference deployment.
pub fn reference_scenario() -> Scenario {
    let led_positions = vec![
        Vec3::new(2.0, 2.0, 3.0),
        Vec3::new(2.0, 6.0, 3.0),
        Vec3::new(6.0, 2.0, 3.0),
        Vec3::new(6.0, 6.0, 3.0),
    ];
    let user_positions = led_positions
        .iter()
        .map(|p| Vec3::new(p.x + 0.5, p.y + 0.5, 0.85))
        .collect();
    Scenario {
        room: RoomBounds::new((0.0, 8.0), (0.0, 8.0), (0.0, 3.0)),
        led_positions,
        user_positions,
        pd_area: 1e-4,
        semi_angle_half_power: 60.0,
        optical_filter_gain: 1.0,
        concentrator_gain: 1.0,
        pd_sensitivity: 1.0,
        fov_incidence: 80.0,
        fov_oirs: 80.0,
        oirs_reflection_coeff: 0.95,
        oirs_element_count: 120,
        oirs_element_area: 0.01,
        bandwidth: 20e6,
        noise_power: dbm_to_watt(-120.0),
        circuit_power: 6.7,
        avg_led_power_dbm: 30.0,
        r_min: 0.5,
        led_user_assignment: (0..4)
            .map(|l| (0..4).map(|k| u8::from(l == k)).collect())
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_is_valid() {
        let s = reference_scenario();
        validate_scenario(&s).unwrap();
        assert_eq!(s.num_leds(), 4);
        assert!((s.p_max() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn led_outside_room() {
        let mut s = reference_scenario();
        s.led_positions[0] = Vec3::new(9.0, 0.0, 0.0);
        assert!(matches!(validate_scenario(&s), Err(Error::OutOfRoom { .. })));
    }

    #[test]
    fn assignment_zero_row() {
        let mut s = reference_scenario();
        s.led_user_assignment[2] = vec![0, 0, 0, 0];
        assert!(matches!(
            validate_scenario(&s),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn assignment_wrong_shape() {
        let mut s = reference_scenario();
        s.led_user_assignment.pop();
        assert!(matches!(
            validate_scenario(&s),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn non_positive_constants() {
        let mut s = reference_scenario();
        s.noise_power = 0.0;
        assert_eq!(
            validate_scenario(&s),
            Err(Error::NonPositiveConstant("noise_power"))
        );
        let mut s = reference_scenario();
        s.oirs_reflection_coeff = 1.2;
        assert!(validate_scenario(&s).is_err());
    }
}
