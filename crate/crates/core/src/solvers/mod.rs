//! The four block subproblems: transmit power, element-to-LED allocation,
//! receiver orientation and surface placement.

use serde::{Deserialize, Serialize};

pub(crate) mod barrier;
pub mod allocation;
pub mod orientation;
pub mod placement;
pub mod power;

pub use allocation::{solve_allocation, AllocationOutcome};
pub use orientation::{
    maximize_sum_rate, orientation_gradient, orientation_objective, solve_orientation,
    update_multipliers, OrientationContext, OrientationOutcome,
};
pub use placement::{solve_placement, PlacementOutcome};
pub use power::{solve_power, PowerOutcome};

/// Tolerances, caps and schedules shared by the block solvers and the
/// outer loop. Every field can be set from the `[solver]` section of a
/// configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Stop threshold for the SCA power loop (max-norm change, W).
    pub inner_tolerance: f64,
    pub max_inner_iters: usize,
    pub zeta_initial: f64,
    pub zeta_growth: f64,
    pub zeta_max: f64,
    /// Initial rate-target multiplier for the augmented Lagrangian.
    pub kappa_initial: f64,
    pub max_orientation_outer: usize,
    pub max_descent_steps: usize,
    pub max_allocation_steps: usize,
    pub grid_resolution_placement: f64,
    pub placement_refine_rounds: usize,
    /// Extra random starts for the orientation solve.
    pub multistart_count: usize,
    pub rng_seed: u64,
    /// Block-change thresholds for P, B, Λ and q.
    pub mu: [f64; 4],
    pub s_max: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            inner_tolerance: 1e-8,
            max_inner_iters: 500,
            zeta_initial: 1.0,
            zeta_growth: 2.0,
            zeta_max: 1e6,
            kappa_initial: 1.0,
            max_orientation_outer: 40,
            max_descent_steps: 200,
            max_allocation_steps: 200,
            grid_resolution_placement: 0.25,
            placement_refine_rounds: 3,
            multistart_count: 0,
            rng_seed: 0,
            mu: [1e-4; 4],
            s_max: 50,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> crate::Result<()> {
        let reals = [
            ("inner_tolerance", self.inner_tolerance),
            ("zeta_initial", self.zeta_initial),
            ("zeta_growth", self.zeta_growth),
            ("zeta_max", self.zeta_max),
            ("grid_resolution_placement", self.grid_resolution_placement),
        ];
        for (name, v) in reals {
            if !(v.is_finite() && v > 0.0) {
                return Err(crate::Error::NonPositiveConstant(name));
            }
        }
        if !(self.kappa_initial.is_finite() && self.kappa_initial >= 0.0) {
            return Err(crate::Error::NonPositiveConstant("kappa_initial"));
        }
        if self.mu.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(crate::Error::NonPositiveConstant("mu"));
        }
        let counts = [
            ("max_inner_iters", self.max_inner_iters),
            ("max_orientation_outer", self.max_orientation_outer),
            ("max_descent_steps", self.max_descent_steps),
            ("max_allocation_steps", self.max_allocation_steps),
            ("s_max", self.s_max),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(crate::Error::NonPositiveConstant(name));
            }
        }
        Ok(())
    }
}

/// Coefficients of the concave lower bound `v ln z + u <= ln(1 + z)`,
/// tight at `z = ẑ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaConstants {
    pub v: Vec<f64>,
    pub u: Vec<f64>,
    pub z_hat: Vec<f64>,
}

impl ScaConstants {
    /// Surrogate of `ln(1 + z)` for user `k`.
    pub fn bound(&self, k: usize, z: f64) -> f64 {
        if self.v[k] == 0.0 {
            return self.u[k];
        }
        self.v[k] * z.ln() + self.u[k]
    }
}

pub fn sca_constant(z_hat: f64) -> (f64, f64) {
    if z_hat <= 0.0 {
        return (0.0, 0.0);
    }
    let v = z_hat / (1.0 + z_hat);
    let u = z_hat.ln_1p() - v * z_hat.ln();
    (v, u)
}

pub fn sca_constants(z_hat: &[f64]) -> ScaConstants {
    let (v, u) = z_hat.iter().map(|&z| sca_constant(z)).unzip();
    ScaConstants {
        v,
        u,
        z_hat: z_hat.to_vec(),
    }
}

/// Augmented-Lagrangian multipliers and penalty weight.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierState {
    pub kappa: f64,
    pub rho: Vec<f64>,
    pub omega_mul: Vec<f64>,
    pub varpi: Vec<f64>,
    pub zeta: f64,
}

impl MultiplierState {
    pub fn new(users: usize, kappa: f64, zeta: f64) -> Self {
        MultiplierState {
            kappa,
            rho: vec![0.0; users],
            omega_mul: vec![0.0; users],
            varpi: vec![0.0; users],
            zeta,
        }
    }

    pub fn zeros(users: usize, zeta: f64) -> Self {
        Self::new(users, 0.0, zeta)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.kappa >= 0.0
            && self.zeta > 0.0
            && self
                .rho
                .iter()
                .chain(&self.omega_mul)
                .chain(&self.varpi)
                .all(|&m| m >= 0.0)
    }
}
