use std::time::Instant;

use super::FomProblem;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};

/// Newton iterations allowed per implicit step.
pub const NEWTON_MAX_ITERS: usize = 25;

/// Full-order trajectory with force snapshots at the same instants.
#[derive(Debug, Clone)]
pub struct FomTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
    pub forces: Vec<Vector>,
    /// Seconds spent in the stepping loop only.
    pub wall_time: f64,
    pub newton_iters_total: usize,
}

impl FomTrajectory {
    pub fn final_state(&self) -> &Vector {
        self.states.last().expect("trajectory includes the initial state")
    }

    fn finish(fom: &FomProblem, times: Vec<f64>, states: Vec<Vector>, wall_time: f64, newton_iters_total: usize) -> Result<Self> {
        let forces = states.iter().zip(&times).map(|(y, &t)| fom.eval_force_full(y, t)).collect::<Result<_>>()?;
        Ok(FomTrajectory { times, states, forces, wall_time, newton_iters_total })
    }
}

fn check_steps(dt: f64, n_steps: usize) -> Result<()> {
    if n_steps == 0 {
        return Err(Error::invalid("zero-length run requested"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("time step {dt} must be positive")));
    }
    Ok(())
}

/// Backward Euler on `M (yⁿ⁺¹ − yⁿ)/Δt + A yⁿ⁺¹ = f(yⁿ⁺¹, tⁿ⁺¹)` with Newton
/// iterations on the analytic Jacobian.
pub fn fom_backward_euler(fom: &FomProblem, dt: f64, n_steps: usize, newton_tol: f64) -> Result<FomTrajectory> {
    check_steps(dt, n_steps)?;
    let mut times = vec![0.0];
    let mut states = vec![fom.initial_state.clone()];
    let mut iters_total = 0;
    let m_dt = &fom.mass / dt;
    let lhs_linear: Matrix = &m_dt + &fom.linear_op;

    let start = Instant::now();
    let mut y = fom.initial_state.clone();
    for step in 1..=n_steps {
        let t = step as f64 * dt;
        let rhs = &m_dt * &y;
        let tol = newton_tol * (1.0 + rhs.norm());
        let mut next = y.clone();
        let mut converged = false;
        let mut res_norm = f64::INFINITY;
        for _ in 0..NEWTON_MAX_ITERS {
            let residual = &lhs_linear * &next - &rhs - fom.eval_force_full(&next, t)?;
            res_norm = residual.norm();
            if res_norm <= tol {
                converged = true;
                break;
            }
            iters_total += 1;
            let jac = &lhs_linear - fom.force_jacobian(&next, t)?;
            let delta = jac.lu().solve(&residual).ok_or_else(|| Error::Singular(format!("Newton Jacobian at step {step}")))?;
            next -= delta;
            if !next.iter().all(|v| v.is_finite()) {
                return Err(Error::IntegrationBlowup { step });
            }
        }
        if !converged {
            return Err(Error::NewtonDiverged { step, iterations: NEWTON_MAX_ITERS, residual: res_norm });
        }
        y = next;
        times.push(t);
        states.push(y.clone());
    }
    let wall = start.elapsed().as_secs_f64();
    FomTrajectory::finish(fom, times, states, wall, iters_total)
}

/// Classical RK4 on `dy/dt = M⁻¹ (f(y, t) − A y)`.
pub fn fom_rk4(fom: &FomProblem, dt: f64, n_steps: usize) -> Result<FomTrajectory> {
    check_steps(dt, n_steps)?;
    let chol = fom.mass.clone().cholesky().ok_or_else(|| Error::Singular("mass matrix".into()))?;
    let rate = |y: &Vector, t: f64| -> Result<Vector> { Ok(chol.solve(&(fom.eval_force_full(y, t)? - &fom.linear_op * y))) };

    let mut times = vec![0.0];
    let mut states = vec![fom.initial_state.clone()];
    let start = Instant::now();
    let mut y = fom.initial_state.clone();
    for step in 1..=n_steps {
        let t = (step - 1) as f64 * dt;
        let k1 = rate(&y, t)?;
        let k2 = rate(&(&y + &k1 * (0.5 * dt)), t + 0.5 * dt)?;
        let k3 = rate(&(&y + &k2 * (0.5 * dt)), t + 0.5 * dt)?;
        let k4 = rate(&(&y + &k3 * dt), t + dt)?;
        y += (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (dt / 6.0);
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::IntegrationBlowup { step });
        }
        times.push(step as f64 * dt);
        states.push(y.clone());
    }
    let wall = start.elapsed().as_secs_f64();
    FomTrajectory::finish(fom, times, states, wall, 0)
}
