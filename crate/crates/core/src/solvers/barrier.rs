//! Small dense log-barrier interior-point method for smooth convex programs
//! `min f0(x) s.t. f_j(x) <= 0`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Value, gradient and Hessian of a twice-differentiable function.
#[derive(Debug, Clone)]
pub(crate) struct Smooth {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

impl Smooth {
    pub fn linear(value: f64, grad: DVector<f64>) -> Self {
        let n = grad.len();
        Smooth {
            value,
            grad,
            hess: DMatrix::zeros(n, n),
        }
    }
}

pub(crate) trait ConvexProgram {
    fn dim(&self) -> usize;
    fn num_constraints(&self) -> usize;
    fn objective(&self, x: &DVector<f64>) -> Smooth;
    /// Convex `f_j`, feasible when `<= 0`.
    fn constraint(&self, j: usize, x: &DVector<f64>) -> Smooth;

    fn constraint_value(&self, j: usize, x: &DVector<f64>) -> f64 {
        self.constraint(j, x).value
    }

    fn objective_value(&self, x: &DVector<f64>) -> f64 {
        self.objective(x).value
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct BarrierOptions {
    /// Stop once `m / t` falls below this times `max(1, |f0|)`.
    pub gap_tolerance: f64,
    pub t_growth: f64,
    pub newton_tolerance: f64,
    pub max_newton_steps: usize,
    pub max_outer: usize,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        BarrierOptions {
            gap_tolerance: 1e-10,
            t_growth: 20.0,
            newton_tolerance: 1e-14,
            max_newton_steps: 200,
            max_outer: 60,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct BarrierSolution {
    pub x: DVector<f64>,
    /// Duality-gap bound `m / t` at termination.
    pub gap: f64,
    /// Norm of the Lagrangian gradient with the central-path multipliers.
    /// Cancellation in the active slacks limits this to roughly
    /// `eps * |x| / slack`, so `gap` is the certificate to rely on.
    pub stationarity: f64,
}

fn strictly_feasible<P: ConvexProgram + ?Sized>(p: &P, x: &DVector<f64>) -> bool {
    x.iter().all(|v| v.is_finite())
        && (0..p.num_constraints()).all(|j| {
            let f = p.constraint_value(j, x);
            f.is_finite() && f < 0.0
        })
}

fn barrier_value<P: ConvexProgram + ?Sized>(p: &P, t: f64, x: &DVector<f64>) -> f64 {
    let mut v = t * p.objective_value(x);
    for j in 0..p.num_constraints() {
        v -= (-p.constraint_value(j, x)).ln();
    }
    v
}

fn newton_system<P: ConvexProgram + ?Sized>(
    p: &P,
    t: f64,
    x: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let obj = p.objective(x);
    let mut grad = obj.grad * t;
    let mut hess = obj.hess * t;
    for j in 0..p.num_constraints() {
        let c = p.constraint(j, x);
        let slack = -c.value;
        grad += &c.grad / slack;
        hess += &c.grad * c.grad.transpose() / (slack * slack) + &c.hess / slack;
    }
    (grad, hess)
}

fn solve_spd(hess: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = hess.diagonal().amax().max(1e-300);
    let mut reg = 0.0;
    for _ in 0..12 {
        let mut h = hess.clone();
        if reg > 0.0 {
            for i in 0..h.nrows() {
                h[(i, i)] += reg;
            }
        }
        if let Some(ch) = h.cholesky() {
            let step = ch.solve(rhs);
            if step.iter().all(|v| v.is_finite()) {
                return Some(step);
            }
        }
        reg = if reg == 0.0 { scale * 1e-14 } else { reg * 100.0 };
    }
    None
}

/// Minimizes from a strictly feasible starting point.
pub(crate) fn minimize<P: ConvexProgram + ?Sized>(
    p: &P,
    x0: DVector<f64>,
    opts: &BarrierOptions,
) -> Result<BarrierSolution> {
    if !strictly_feasible(p, &x0) {
        return Err(Error::Infeasible(
            "barrier start point is not strictly feasible".into(),
        ));
    }
    let m = p.num_constraints().max(1) as f64;
    let mut x = x0;
    let mut t = 1.0 / p.objective_value(&x).abs().max(1e-12);
    for _ in 0..opts.max_outer {
        for _ in 0..opts.max_newton_steps {
            let (grad, hess) = newton_system(p, t, &x);
            let Some(step) = solve_spd(&hess, &(-&grad)) else {
                break;
            };
            let decrement = -grad.dot(&step);
            if !(decrement > 2.0 * opts.newton_tolerance) {
                break;
            }
            let phi0 = barrier_value(p, t, &x);
            // Near the optimum the barrier value stops resolving the
            // decrease; fall back to a gradient-norm test there.
            let round_off = 1e-13 * phi0.abs().max(1.0);
            let grad_norm = grad.norm();
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..80 {
                let trial = &x + &step * alpha;
                if strictly_feasible(p, &trial) {
                    let phi = barrier_value(p, t, &trial);
                    let armijo = phi <= phi0 - 0.25 * alpha * decrement;
                    let flat = decrement <= 1e3 * round_off
                        && phi <= phi0 + round_off
                        && newton_system(p, t, &trial).0.norm() < grad_norm;
                    if phi.is_finite() && (armijo || flat) {
                        accepted = Some(trial);
                        break;
                    }
                }
                alpha *= 0.5;
            }
            match accepted {
                Some(next) => x = next,
                None => break,
            }
        }
        let f0 = p.objective_value(&x);
        if m / t <= opts.gap_tolerance * f0.abs().max(1.0) {
            break;
        }
        t *= opts.t_growth;
    }
    let obj = p.objective(&x);
    let mut lagrangian_grad = obj.grad.clone();
    for j in 0..p.num_constraints() {
        let c = p.constraint(j, &x);
        lagrangian_grad += &c.grad * (1.0 / (t * -c.value));
    }
    Ok(BarrierSolution {
        x,
        gap: m / t,
        stationarity: lagrangian_grad.norm(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// min x² + y² s.t. x + y >= 1  →  (½, ½)
    struct Disk;

    impl ConvexProgram for Disk {
        fn dim(&self) -> usize {
            2
        }
        fn num_constraints(&self) -> usize {
            1
        }
        fn objective(&self, x: &DVector<f64>) -> Smooth {
            Smooth {
                value: x.norm_squared(),
                grad: x * 2.0,
                hess: DMatrix::identity(2, 2) * 2.0,
            }
        }
        fn constraint(&self, _: usize, x: &DVector<f64>) -> Smooth {
            Smooth::linear(1.0 - x[0] - x[1], DVector::from_vec(vec![-1.0, -1.0]))
        }
    }

    #[test]
    fn solves_projection_onto_halfplane() {
        let sol = minimize(&Disk, DVector::from_vec(vec![2.0, 3.0]), &BarrierOptions::default()).unwrap();
        assert!((sol.x[0] - 0.5).abs() < 1e-8);
        assert!((sol.x[1] - 0.5).abs() < 1e-8);
        assert!(sol.gap <= 1e-9);
        assert!(sol.stationarity < 1e-4, "{}", sol.stationarity);
    }

    #[test]
    fn rejects_infeasible_start() {
        let r = minimize(&Disk, DVector::from_vec(vec![0.0, 0.0]), &BarrierOptions::default());
        assert!(matches!(r, Err(Error::Infeasible(_))));
    }
}
