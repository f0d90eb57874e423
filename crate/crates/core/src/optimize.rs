//! Objective, optimality residual and the two adjoint-based control updates.
//!
//! Both iterations solve the state and the adjoint for the current control and
//! evaluate the residual `gₖ = 2αCₖ + Uₖᵀ M Wₖ` at every time node:
//!
//! * linear combination: `C ← βC + (1 − β)C̃` with `C̃ = −UᵀMW / (2α)`,
//!   stopping when `‖C_new − C‖ < tol`;
//! * gradient descent: `C ← max(0, C − γ g)`, stopping when `‖g‖ < tol`.
//!
//! Norms over time are trapezoid-weighted discrete `L²(0, T)` norms.

use std::fmt;

use log::{debug, info};

use crate::dynamics::{
    solve_adjoint, solve_sensitivity, solve_state, ControlTrajectory, Problem, SpaceTimeTrajectory,
};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_ITER: usize = 500;
pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_BETA: f64 = 0.5;
/// Initial constant dose used in the 1D benchmark.
pub const BENCHMARK_C0: f64 = 2.512566e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    LinearCombination,
    GradientDescent,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::LinearCombination => "linear_combination",
            Method::GradientDescent => "gradient_descent",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear_combination" => Ok(Method::LinearCombination),
            "gradient_descent" => Ok(Method::GradientDescent),
            other => Err(Error::invalid(format!(
                "unknown method {other:?} (expected linear_combination or gradient_descent)"
            ))),
        }
    }
}

/// Side-effect weight α of the objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveParams {
    alpha: f64,
}

impl ObjectiveParams {
    pub fn new(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(ObjectiveParams { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("alpha must be positive and finite, got {alpha}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeConfig {
    pub alpha: f64,
    pub method: Method,
    /// Mixing weight of the linear-combination update, in (0, 1).
    pub beta: f64,
    /// Gradient-descent step size.
    pub gamma: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub c0: ControlTrajectory,
}

impl OptimizeConfig {
    /// Defaults: β = 0.5, γ = 0.2/α, tol = 1e-8, 500 iterations.
    pub fn new(alpha: f64, method: Method, c0: ControlTrajectory) -> Self {
        OptimizeConfig {
            alpha,
            method,
            beta: DEFAULT_BETA,
            gamma: 0.2 / alpha,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            c0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        match self.method {
            Method::LinearCombination if !(self.beta > 0.0 && self.beta < 1.0) => {
                return Err(Error::invalid(format!("beta must lie in (0, 1), got {}", self.beta)))
            }
            Method::GradientDescent if !(self.gamma.is_finite() && self.gamma > 0.0) => {
                return Err(Error::invalid(format!("gamma must be positive, got {}", self.gamma)))
            }
            _ => {}
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::invalid(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    /// Objective at the control entering this iteration.
    pub objective: f64,
    /// `‖2αC + ∫uw‖` at the control entering this iteration.
    pub residual_norm: f64,
    /// `‖C_new − C‖` produced by this iteration.
    pub control_delta_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeReport {
    pub method: Method,
    pub iterations: usize,
    pub per_iter: Vec<IterationRecord>,
    pub final_control: ControlTrajectory,
    pub converged: bool,
}

/// Optimality residual at every time node plus its `L²(0,T)` norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub values: Vec<f64>,
    pub norm: f64,
}

/// Everything computed from one state + adjoint solve.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub state: SpaceTimeTrajectory,
    pub adjoint: SpaceTimeTrajectory,
    pub objective: f64,
    pub residual: Residual,
    /// `∫_Ω u w dx` at every time node.
    pub coupling: Vec<f64>,
}

/// `J = ∫₀ᵀ (∫_Ω u dx + αC²) dt` by the trapezoid rule in time.
pub fn evaluate_objective(
    problem: &Problem,
    state: &SpaceTimeTrajectory,
    control: &ControlTrajectory,
    alpha: f64,
) -> Result<f64> {
    check_alpha(alpha)?;
    check_time(problem, state, control)?;
    let disc = problem.discretization();
    let integrand: Vec<f64> = state
        .fields()
        .iter()
        .zip(control.values())
        .map(|(u, c)| disc.integral(u.values()) + alpha * c * c)
        .collect();
    Ok(problem.grid().integrate(&integrand))
}

/// Solves the state for `control` and evaluates the objective.
pub fn objective(problem: &Problem, control: &ControlTrajectory, alpha: f64) -> Result<f64> {
    let state = solve_state(problem, control)?;
    evaluate_objective(problem, &state, control, alpha)
}

fn check_time(problem: &Problem, traj: &SpaceTimeTrajectory, control: &ControlTrajectory) -> Result<()> {
    if traj.grid() != problem.grid() || traj.n_nodes() != problem.mesh().n_nodes() {
        return Err(Error::invalid("trajectory does not match the problem"));
    }
    control.check_on(problem.grid())
}

/// `∫_Ω uₖ wₖ dx` at every time node.
pub fn coupling(
    problem: &Problem,
    state: &SpaceTimeTrajectory,
    adjoint: &SpaceTimeTrajectory,
) -> Result<Vec<f64>> {
    if state.grid() != adjoint.grid() || state.n_nodes() != adjoint.n_nodes() {
        return Err(Error::invalid("state and adjoint live on different grids"));
    }
    let disc = problem.discretization();
    state
        .fields()
        .iter()
        .zip(adjoint.fields())
        .map(|(u, w)| disc.l2_inner(u.values(), w.values()))
        .collect()
}

/// `gₖ = 2αCₖ + ∫_Ω uₖ wₖ dx` and its trapezoid `L²(0,T)` norm.
pub fn optimality_residual(
    problem: &Problem,
    state: &SpaceTimeTrajectory,
    adjoint: &SpaceTimeTrajectory,
    control: &ControlTrajectory,
    alpha: f64,
) -> Result<Residual> {
    check_alpha(alpha)?;
    check_time(problem, state, control)?;
    check_time(problem, adjoint, control)?;
    let uw = coupling(problem, state, adjoint)?;
    Ok(residual_from_coupling(problem, &uw, control, alpha))
}

fn residual_from_coupling(problem: &Problem, uw: &[f64], control: &ControlTrajectory, alpha: f64) -> Residual {
    let values: Vec<f64> = control
        .values()
        .iter()
        .zip(uw)
        .map(|(c, uw)| 2.0 * alpha * c + uw)
        .collect();
    let norm = problem.grid().l2_norm(&values);
    Residual { values, norm }
}

/// Solves state and adjoint for `control` and evaluates objective and residual.
pub fn evaluate(problem: &Problem, control: &ControlTrajectory, alpha: f64) -> Result<Evaluation> {
    check_alpha(alpha)?;
    let state = solve_state(problem, control)?;
    let adjoint = solve_adjoint(problem, control, &state)?;
    let objective = evaluate_objective(problem, &state, control, alpha)?;
    let coupling = coupling(problem, &state, &adjoint)?;
    let residual = residual_from_coupling(problem, &coupling, control, alpha);
    Ok(Evaluation {
        state,
        adjoint,
        objective,
        residual,
        coupling,
    })
}

/// `C̃ = −(1/2α) ∫_Ω u w dx` at every time node.
pub fn intermediate_control(coupling: &[f64], alpha: f64) -> Vec<f64> {
    coupling.iter().map(|uw| -uw / (2.0 * alpha)).collect()
}

/// Runs the method selected in `config`.
pub fn run(problem: &Problem, config: &OptimizeConfig) -> Result<OptimizeReport> {
    match config.method {
        Method::LinearCombination => run_linear_combination(problem, config),
        Method::GradientDescent => run_gradient_descent(problem, config),
    }
}

fn check_config(problem: &Problem, config: &OptimizeConfig, method: Method) -> Result<()> {
    if config.method != method {
        return Err(Error::invalid(format!(
            "config selects {} but {method} was requested",
            config.method
        )));
    }
    config.validate()?;
    config.c0.check_on(problem.grid())
}

fn difference_norm(problem: &Problem, a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    problem.grid().l2_norm(&diff)
}

/// Linear-combination adjoint iteration.
pub fn run_linear_combination(problem: &Problem, config: &OptimizeConfig) -> Result<OptimizeReport> {
    check_config(problem, config, Method::LinearCombination)?;
    let (alpha, beta) = (config.alpha, config.beta);
    let mut control = config.c0.clone();
    let mut per_iter = Vec::new();
    let mut converged = false;
    for i in 0..config.max_iter {
        let eval = evaluate(problem, &control, alpha)?;
        let target = intermediate_control(&eval.coupling, alpha);
        // C̃ ≥ 0 whenever u ≥ 0 and w ≤ 0; the clamp only absorbs roundoff
        let next: Vec<f64> = control
            .values()
            .iter()
            .zip(&target)
            .map(|(c, t)| (beta * c + (1.0 - beta) * t).max(0.0))
            .collect();
        let delta = difference_norm(problem, &next, control.values());
        per_iter.push(IterationRecord {
            objective: eval.objective,
            residual_norm: eval.residual.norm,
            control_delta_norm: delta,
        });
        debug!(
            "linear_combination iter {i}: J = {:.12e}, |g| = {:.3e}, |dC| = {delta:.3e}",
            eval.objective, eval.residual.norm
        );
        control = ControlTrajectory::new(next)?;
        if delta < config.tol {
            converged = true;
            break;
        }
    }
    info!("linear_combination: {} iterations, converged = {converged}", per_iter.len());
    Ok(OptimizeReport {
        method: Method::LinearCombination,
        iterations: per_iter.len(),
        per_iter,
        final_control: control,
        converged,
    })
}

/// Projected gradient-descent adjoint iteration.
pub fn run_gradient_descent(problem: &Problem, config: &OptimizeConfig) -> Result<OptimizeReport> {
    check_config(problem, config, Method::GradientDescent)?;
    let (alpha, gamma) = (config.alpha, config.gamma);
    let mut control = config.c0.clone();
    let mut per_iter = Vec::new();
    let mut converged = false;
    for i in 0..config.max_iter {
        let eval = evaluate(problem, &control, alpha)?;
        let next: Vec<f64> = control
            .values()
            .iter()
            .zip(&eval.residual.values)
            .map(|(c, g)| (c - gamma * g).max(0.0))
            .collect();
        let delta = difference_norm(problem, &next, control.values());
        per_iter.push(IterationRecord {
            objective: eval.objective,
            residual_norm: eval.residual.norm,
            control_delta_norm: delta,
        });
        debug!(
            "gradient_descent iter {i}: J = {:.12e}, |g| = {:.3e}, |dC| = {delta:.3e}",
            eval.objective, eval.residual.norm
        );
        control = ControlTrajectory::new(next)?;
        if eval.residual.norm < config.tol {
            converged = true;
            break;
        }
    }
    info!("gradient_descent: {} iterations, converged = {converged}", per_iter.len());
    Ok(OptimizeReport {
        method: Method::GradientDescent,
        iterations: per_iter.len(),
        per_iter,
        final_control: control,
        converged,
    })
}

fn check_direction(problem: &Problem, eta: &[f64]) -> Result<()> {
    if eta.len() != problem.grid().n_nodes() {
        return Err(Error::invalid(format!(
            "direction has {} values but the time grid has {} nodes",
            eta.len(),
            problem.grid().n_nodes()
        )));
    }
    Ok(())
}

/// First variation `∫₀ᵀ η (2αC + ∫_Ω u w dx) dt` of the objective along `eta`.
pub fn directional_derivative(
    problem: &Problem,
    control: &ControlTrajectory,
    eta: &[f64],
    alpha: f64,
) -> Result<f64> {
    check_direction(problem, eta)?;
    let eval = evaluate(problem, control, alpha)?;
    let integrand: Vec<f64> = eta
        .iter()
        .zip(&eval.residual.values)
        .map(|(e, g)| e * g)
        .collect();
    Ok(problem.grid().integrate(&integrand))
}

/// Second variation along `eta`:
/// `∫₀ᵀ∫_Ω (2η + 2ρψ) ψ w dx dt + ∫₀ᵀ 2αη² dt`, with ψ the sensitivity along `eta`.
pub fn curvature_probe(
    problem: &Problem,
    control: &ControlTrajectory,
    eta: &[f64],
    alpha: f64,
) -> Result<f64> {
    check_alpha(alpha)?;
    check_direction(problem, eta)?;
    let state = solve_state(problem, control)?;
    let adjoint = solve_adjoint(problem, control, &state)?;
    let psi = solve_sensitivity(problem, control, &state, eta)?;
    let disc = problem.discretization();
    let rho = problem.rho();
    let integrand: Vec<f64> = (0..problem.grid().n_nodes())
        .map(|k| {
            let (p, w) = (psi.field(k).values(), adjoint.field(k).values());
            2.0 * eta[k] * disc.mass().bilinear(p, w)
                + 2.0 * rho * disc.triple_integral(p, p, w)
                + 2.0 * alpha * eta[k] * eta[k]
        })
        .collect();
    Ok(problem.grid().integrate(&integrand))
}
