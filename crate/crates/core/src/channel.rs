//! Lambertian line-of-sight gains and mirror-array reflected gains.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::{irradiance_angle_los, irradiance_angle_oirs, Vec3};
use crate::scenario::Scenario;

/// Path segments shorter than this are treated as coincident; the
/// reflected gain through them is gated to zero.
pub const DISTANCE_FLOOR: f64 = 1e-3;

/// Lambertian emission order `j = -ln 2 / ln(cos Φ½)`.
pub fn lambertian_order(semi_angle_half_power_deg: f64) -> Result<f64> {
    let phi = semi_angle_half_power_deg;
    if !(phi > 0.0 && phi < 90.0) {
        return Err(Error::DegenerateSemiAngle(phi));
    }
    let c = phi.to_radians().cos();
    Ok(-(2.0f64.ln()) / c.ln())
}

/// Receiver orientation angles, radians: `omega[k]` for the direct path,
/// `phi[k]` for the reflected path.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientationSet {
    pub omega: Vec<f64>,
    pub phi: Vec<f64>,
}

impl OrientationSet {
    pub fn zeros(k: usize) -> Self {
        OrientationSet {
            omega: vec![0.0; k],
            phi: vec![0.0; k],
        }
    }

    pub fn num_users(&self) -> usize {
        self.omega.len()
    }

    /// Flattened `[omega..., phi...]`.
    pub fn to_vec(&self) -> Vec<f64> {
        self.omega.iter().chain(&self.phi).copied().collect()
    }

    pub fn from_slice(v: &[f64]) -> Self {
        let k = v.len() / 2;
        OrientationSet {
            omega: v[..k].to_vec(),
            phi: v[k..].to_vec(),
        }
    }

    /// Euclidean distance between two orientation sets.
    pub fn distance(&self, other: &OrientationSet) -> f64 {
        self.to_vec()
            .iter()
            .zip(other.to_vec())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Largest violation of the field-of-view limits.
    pub fn fov_violation(&self, fov_incidence: f64, fov_oirs: f64) -> f64 {
        let om = self.omega.iter().map(|o| o - fov_incidence);
        let ph = self.phi.iter().map(|p| p - fov_oirs);
        om.chain(ph).fold(0.0, f64::max)
    }
}

/// Gains for one `(orientation, placement)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    /// `L x K` direct gains `h[l, k]`.
    pub los: DMatrix<f64>,
    /// One `N x L` matrix per user, entry `[n, l]` is the gain from LED `l`
    /// via element `n`.
    pub nlos: Vec<DMatrix<f64>>,
    pub lambertian_order: f64,
}

impl ChannelState {
    pub fn num_leds(&self) -> usize {
        self.los.nrows()
    }

    pub fn num_users(&self) -> usize {
        self.los.ncols()
    }

    pub fn num_elements(&self) -> usize {
        self.nlos.first().map_or(0, |g| g.nrows())
    }
}

fn clamped_cos_pow(angle: f64, order: f64) -> f64 {
    angle.cos().clamp(0.0, 1.0).powf(order)
}

fn lambertian_prefactor(s: &Scenario, order: f64, path: f64) -> f64 {
    s.pd_area * (order + 1.0) / (2.0 * PI * path * path)
        * s.optical_filter_gain
        * s.concentrator_gain
}

/// Direct gain without the receiver incidence factor `cos Ω`, but with the
/// transmitter-side gate.
fn los_base(s: &Scenario, order: f64, led: Vec3, user: Vec3) -> Result<f64> {
    let d = led.distance(user);
    let psi = irradiance_angle_los(led, user)?;
    if psi >= PI / 2.0 {
        return Ok(0.0);
    }
    Ok(lambertian_prefactor(s, order, d) * clamped_cos_pow(psi, order))
}

/// Reflected gain of one element without the receiver factor `cos φ`.
fn nlos_base(s: &Scenario, order: f64, led: Vec3, user: Vec3, q: Vec3) -> Result<f64> {
    let d_in = led.distance(q);
    let d_out = q.distance(user);
    if d_in < DISTANCE_FLOOR || d_out < DISTANCE_FLOOR {
        return Ok(0.0);
    }
    let theta = irradiance_angle_oirs(led, q)?;
    if theta >= PI / 2.0 {
        return Ok(0.0);
    }
    Ok(s.oirs_reflection_coeff
        * lambertian_prefactor(s, order, d_in + d_out)
        * clamped_cos_pow(theta, order))
}

/// Direct gain from LED `l` to user `k` at incidence angle `omega_k`.
pub fn los_gain(s: &Scenario, l: usize, k: usize, omega_k: f64) -> Result<f64> {
    let order = lambertian_order(s.semi_angle_half_power)?;
    let (led, user) = (s.led_positions[l], s.user_positions[k]);
    if led.distance(user) == 0.0 {
        return Err(Error::DegenerateGeometry(format!(
            "LED {l} coincides with user {k}"
        )));
    }
    if omega_k > s.fov_incidence_rad() {
        return Ok(0.0);
    }
    Ok(los_base(s, order, led, user)? * omega_k.cos().clamp(0.0, 1.0))
}

/// Gain from LED `l` through element `n` to user `k`, with the surface
/// centered at `q` and receiver angle `phi_k`. Every element sits at `q`,
/// so `n` only selects the element.
pub fn oirs_gain(s: &Scenario, l: usize, n: usize, k: usize, q: Vec3, phi_k: f64) -> Result<f64> {
    if n >= s.oirs_element_count {
        return Err(Error::DimensionMismatch(format!(
            "element index {n} out of range"
        )));
    }
    let order = lambertian_order(s.semi_angle_half_power)?;
    if phi_k > s.fov_oirs_rad() {
        return Ok(0.0);
    }
    let g = nlos_base(s, order, s.led_positions[l], s.user_positions[k], q)?;
    Ok(g * phi_k.cos().clamp(0.0, 1.0))
}

/// Geometry cache for one surface placement. Builds [`ChannelState`]s for
/// arbitrary orientations without redoing the distance and angle work.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    q: Vec3,
    order: f64,
    elements: usize,
    fov_incidence: f64,
    fov_oirs: f64,
    /// `[l][k]`
    los_base: Vec<Vec<f64>>,
    /// `[l][k]`, identical for every element.
    nlos_base: Vec<Vec<f64>>,
}

impl ChannelModel {
    pub fn new(s: &Scenario, q: Vec3) -> Result<Self> {
        Self::with_surface(s, q, true)
    }

    /// With `surface = false` every reflected gain is zero.
    pub fn with_surface(s: &Scenario, q: Vec3, surface: bool) -> Result<Self> {
        let order = lambertian_order(s.semi_angle_half_power)?;
        let mut los = Vec::with_capacity(s.num_leds());
        let mut nlos = Vec::with_capacity(s.num_leds());
        for (l, &led) in s.led_positions.iter().enumerate() {
            let mut los_row = Vec::with_capacity(s.num_users());
            let mut nlos_row = Vec::with_capacity(s.num_users());
            for (k, &user) in s.user_positions.iter().enumerate() {
                if led.distance(user) == 0.0 {
                    return Err(Error::DegenerateGeometry(format!(
                        "LED {l} coincides with user {k}"
                    )));
                }
                los_row.push(los_base(s, order, led, user)?);
                nlos_row.push(if surface {
                    nlos_base(s, order, led, user, q)?
                } else {
                    0.0
                });
            }
            los.push(los_row);
            nlos.push(nlos_row);
        }
        Ok(ChannelModel {
            q,
            order,
            elements: s.oirs_element_count,
            fov_incidence: s.fov_incidence_rad(),
            fov_oirs: s.fov_oirs_rad(),
            los_base: los,
            nlos_base: nlos,
        })
    }

    pub fn placement(&self) -> Vec3 {
        self.q
    }

    pub fn lambertian_order(&self) -> f64 {
        self.order
    }

    pub fn num_leds(&self) -> usize {
        self.los_base.len()
    }

    pub fn num_users(&self) -> usize {
        self.los_base.first().map_or(0, Vec::len)
    }

    pub fn num_elements(&self) -> usize {
        self.elements
    }

    /// Direct gain with `cos Ω = 1`.
    pub fn los_base(&self, l: usize, k: usize) -> f64 {
        self.los_base[l][k]
    }

    /// Per-element reflected gain with `cos φ = 1`.
    pub fn nlos_base(&self, l: usize, k: usize) -> f64 {
        self.nlos_base[l][k]
    }

    /// Receiver factor `cos Ω_k`, zero outside the field of view.
    pub fn incidence_factor(&self, omega: f64) -> f64 {
        if omega > self.fov_incidence {
            0.0
        } else {
            omega.cos().clamp(0.0, 1.0)
        }
    }

    pub fn reflection_factor(&self, phi: f64) -> f64 {
        if phi > self.fov_oirs {
            0.0
        } else {
            phi.cos().clamp(0.0, 1.0)
        }
    }

    pub fn build(&self, lambda: &OrientationSet) -> ChannelState {
        let (l_count, k_count) = (self.num_leds(), self.num_users());
        let los = DMatrix::from_fn(l_count, k_count, |l, k| {
            self.los_base[l][k] * self.incidence_factor(lambda.omega[k])
        });
        let nlos = (0..k_count)
            .map(|k| {
                let f = self.reflection_factor(lambda.phi[k]);
                DMatrix::from_fn(self.elements, l_count, |_, l| self.nlos_base[l][k] * f)
            })
            .collect();
        ChannelState {
            los,
            nlos,
            lambertian_order: self.order,
        }
    }
}

/// Assembles `H` and every `G_k` for orientation `lambda` and placement `q`.
pub fn build_channel_state(s: &Scenario, lambda: &OrientationSet, q: Vec3) -> Result<ChannelState> {
    if lambda.omega.len() != s.num_users() || lambda.phi.len() != s.num_users() {
        return Err(Error::DimensionMismatch(
            "orientation set length differs from user count".into(),
        ));
    }
    Ok(ChannelModel::new(s, q)?.build(lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RoomBounds;
    use crate::scenario::reference_scenario;
    use approx::assert_relative_eq;

    /// One LED 2 m above one user, unit optics, 1 cm² detector.
    fn single_link(xi: f64) -> Scenario {
        let mut s = reference_scenario();
        s.room = RoomBounds::new((0.0, 4.0), (0.0, 4.0), (0.0, 3.0));
        s.led_positions = vec![Vec3::new(2.0, 2.0, 3.0)];
        s.user_positions = vec![Vec3::new(2.0, 2.0, 1.0)];
        s.led_user_assignment = vec![vec![1]];
        s.oirs_element_count = 1;
        s.oirs_reflection_coeff = xi;
        s
    }

    #[test]
    fn lambertian_order_values() {
        assert_relative_eq!(lambertian_order(60.0).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(lambertian_order(30.0).unwrap(), 4.818_841_679_3, epsilon = 1e-9);
        assert!(matches!(lambertian_order(90.0), Err(Error::DegenerateSemiAngle(_))));
        assert!(matches!(lambertian_order(0.0), Err(Error::DegenerateSemiAngle(_))));
    }

    #[test]
    fn los_gain_hand_value() {
        let s = single_link(1.0);
        let h = los_gain(&s, 0, 0, 0.0).unwrap();
        assert_relative_eq!(h, 7.957_747_154_6e-6, max_relative = 1e-9);
        let over = s.fov_incidence_rad() + 0.01;
        assert_eq!(los_gain(&s, 0, 0, over).unwrap(), 0.0);
    }

    #[test]
    fn los_gain_grazing_is_zero() {
        let mut s = single_link(1.0);
        // user level with the LED: Ψ = π/2
        s.user_positions = vec![Vec3::new(0.5, 2.0, 3.0)];
        assert_eq!(los_gain(&s, 0, 0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn los_gain_degenerate() {
        let mut s = single_link(1.0);
        s.user_positions = vec![s.led_positions[0]];
        assert!(matches!(los_gain(&s, 0, 0, 0.0), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn oirs_gain_reduces_to_los() {
        // surface 1 m below the LED, user 1 m below the surface: total path 2 m, θ = 0
        let mut s = single_link(1.0);
        s.user_positions = vec![Vec3::new(2.0, 2.0, 1.0)];
        let q = Vec3::new(2.0, 2.0, 2.0);
        let g = oirs_gain(&s, 0, 0, 0, q, 0.0).unwrap();
        assert_relative_eq!(g, 7.957_747_154_6e-6, max_relative = 1e-9);
        let s95 = single_link(0.95);
        let g95 = oirs_gain(&s95, 0, 0, 0, q, 0.0).unwrap();
        assert_relative_eq!(g95, 7.559_859_796_9e-6, max_relative = 1e-9);
        assert_eq!(oirs_gain(&s, 0, 0, 0, q, s.fov_oirs_rad() + 1e-3).unwrap(), 0.0);
    }

    #[test]
    fn coincident_surface_is_gated() {
        let s = single_link(1.0);
        let q = s.user_positions[0];
        assert_eq!(oirs_gain(&s, 0, 0, 0, q, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn reference_shapes() {
        let s = reference_scenario();
        let cs = build_channel_state(&s, &OrientationSet::zeros(4), Vec3::new(0.0, 4.1, 2.0)).unwrap();
        assert_eq!((cs.los.nrows(), cs.los.ncols()), (4, 4));
        assert_eq!(cs.nlos.len(), 4);
        for g in &cs.nlos {
            assert_eq!((g.nrows(), g.ncols()), (120, 4));
        }
    }

    #[test]
    fn all_outside_fov_zeroes_los() {
        let s = reference_scenario();
        let beyond = s.fov_incidence_rad() + 0.05;
        let lambda = OrientationSet {
            omega: vec![beyond; 4],
            phi: vec![0.0; 4],
        };
        let cs = build_channel_state(&s, &lambda, Vec3::new(0.0, 4.0, 1.5)).unwrap();
        assert!(cs.los.iter().all(|&h| h == 0.0));
    }

    #[test]
    fn model_matches_scalar_gains() {
        let s = reference_scenario();
        let q = Vec3::new(0.0, 4.1, 2.0);
        let lambda = OrientationSet {
            omega: vec![0.1, 0.5, 1.2, 1.5],
            phi: vec![0.0, 0.3, 1.0, 1.45],
        };
        let cs = build_channel_state(&s, &lambda, q).unwrap();
        for l in 0..4 {
            for k in 0..4 {
                assert_eq!(cs.los[(l, k)], los_gain(&s, l, k, lambda.omega[k]).unwrap());
                for n in [0, 57, 119] {
                    assert_eq!(cs.nlos[k][(n, l)], oirs_gain(&s, l, n, k, q, lambda.phi[k]).unwrap());
                }
            }
        }
    }

    #[test]
    fn doubling_distance_quarters_gain() {
        let s = single_link(1.0);
        let mut far = s.clone();
        far.room.z_max = 5.0;
        far.led_positions = vec![Vec3::new(2.0, 2.0, 5.0)];
        far.user_positions = vec![Vec3::new(2.0, 2.0, 1.0)];
        let near = los_gain(&s, 0, 0, 0.0).unwrap();
        let d4 = los_gain(&far, 0, 0, 0.0).unwrap();
        assert_relative_eq!(near / d4, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn gate_one_sided_limit() {
        let s = single_link(1.0);
        let fov = s.fov_incidence_rad();
        let at = los_gain(&s, 0, 0, fov).unwrap();
        let base = los_gain(&s, 0, 0, 0.0).unwrap();
        assert_relative_eq!(at, fov.cos() * base, max_relative = 1e-12);
        assert_eq!(los_gain(&s, 0, 0, fov + 1e-12).unwrap(), 0.0);
    }

    #[test]
    fn los_gain_decreases_with_incidence() {
        let s = single_link(1.0);
        let fov = s.fov_incidence_rad();
        let mut prev = f64::INFINITY;
        for i in 0..50 {
            let h = los_gain(&s, 0, 0, fov * i as f64 / 50.0).unwrap();
            assert!(h < prev);
            prev = h;
        }
    }

    #[test]
    fn oirs_gain_increases_with_reflection_coeff() {
        let q = Vec3::new(0.0, 2.0, 2.0);
        let mut prev = 0.0;
        for i in 1..=10 {
            let s = single_link(i as f64 / 10.0);
            let g = oirs_gain(&s, 0, 0, 0, q, 0.2).unwrap();
            assert!(g > prev);
            prev = g;
        }
    }
}
