//! Time integration of the state, adjoint and sensitivity equations.
//!
//! The state equation `u_t = ∇·(D∇u) + ρ(1 − u)u − C(t)u` with no-flux
//! boundaries is advanced by backward Euler, with the control value at the
//! right end of each step:
//!
//! ```text
//! [(1 + Δt(Cₖ₊₁ − ρ))M + Δt K] Uₖ₊₁ + Δtρ M(Uₖ₊₁) Uₖ₊₁ = M Uₖ
//! ```
//!
//! where `M(w) = ∫ w φᵢ φⱼ` is the state-weighted mass matrix. Each step runs
//! Newton's method from `Uₖ`; the first iterate is the scheme linearized about
//! the previous step. The Jacobian
//! `(1 − Δt(ρ − C))M + 2Δtρ M(U) + Δt K` is symmetric, and positive definite
//! for non-negative `U` whenever `Δtρ < 1`.
//!
//! The adjoint `w_t + ∇·(D∇w) + (ρ − 2ρu − C)w = 1`, `w(T) = 0` is marched
//! backward with the same Jacobian evaluated at `(Uₖ, Cₖ)`:
//!
//! ```text
//! [(1 − Δt(ρ − Cₖ))M + 2Δtρ M(Uₖ) + Δt K] Wₖ = M Wₖ₊₁ − Δt M 1
//! ```
//!
//! The sensitivity `ψ` uses the Jacobian at `(Uₖ₊₁, Cₖ₊₁)`, which makes it the
//! exact linearization of the discrete state step. At interior time nodes the
//! adjoint is then the exact discrete adjoint of the state step, so
//! `Σ τₖ ∫ψₖ` and `Σ τₖ ηₖ ∫uₖwₖ` differ only by end-point terms of size `O(Δt)`.

use log::debug;

use crate::error::{Error, Result};
use crate::fem::{CsrMatrix, DiffusionField, Discretization, FeField, SpdSolver};
use crate::mesh::Mesh;

/// Nodal values outside `[-BOUND_SLACK, 1 + BOUND_SLACK]` are logged.
const BOUND_SLACK: f64 = 1e-10;

/// Newton iterations stop once the largest nodal update is this small.
const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 25;

/// Uniform time grid `tₖ = k·Δt`, `k = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    final_time: f64,
    n_steps: usize,
}

impl TimeGrid {
    /// A grid with `n_steps = 0` holds only the node `t = 0`.
    pub fn new(final_time: f64, n_steps: usize) -> Result<Self> {
        if !(final_time.is_finite() && final_time > 0.0) {
            return Err(Error::invalid(format!("final time must be positive, got {final_time}")));
        }
        Ok(TimeGrid {
            final_time,
            n_steps,
        })
    }

    pub fn final_time(&self) -> f64 {
        self.final_time
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn dt(&self) -> f64 {
        if self.n_steps == 0 {
            0.0
        } else {
            self.final_time / self.n_steps as f64
        }
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.final_time
        } else {
            k as f64 * self.dt()
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_nodes()).map(|k| self.time(k))
    }

    /// Composite trapezoid weights over the time nodes.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let dt = self.dt();
        let mut w = vec![dt; self.n_nodes()];
        w[0] = 0.5 * dt;
        w[self.n_steps] = 0.5 * dt;
        if self.n_steps == 0 {
            w[0] = 0.0;
        }
        w
    }

    /// `∫₀ᵀ f dt` by the composite trapezoid rule.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.trapezoid_weights().iter().zip(f).map(|(w, v)| w * v).sum()
    }

    /// Trapezoid-weighted discrete `L²(0,T)` norm.
    pub fn l2_norm(&self, f: &[f64]) -> f64 {
        self.trapezoid_weights()
            .iter()
            .zip(f)
            .map(|(w, v)| w * v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Index of the node closest to `t` (clamped to `[0, T]`).
    pub fn nearest_node(&self, t: f64) -> usize {
        if self.n_steps == 0 {
            return 0;
        }
        let k = (t.clamp(0.0, self.final_time) / self.dt()).round() as usize;
        k.min(self.n_steps)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Proliferation rate ρ.
    pub rho: f64,
    pub diffusion: DiffusionField,
}

impl ModelParams {
    pub fn new(rho: f64, diffusion: DiffusionField) -> Result<Self> {
        if !(rho.is_finite() && rho >= 0.0) {
            return Err(Error::invalid(format!("rho must be finite and >= 0, got {rho}")));
        }
        diffusion.validate()?;
        Ok(ModelParams { rho, diffusion })
    }
}

/// Non-negative dosing values at the time nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlTrajectory(Vec<f64>);

impl ControlTrajectory {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(k) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid(format!(
                "control must be finite and non-negative, node {k} has {}",
                values[k]
            )));
        }
        Ok(ControlTrajectory(values))
    }

    pub fn constant(grid: &TimeGrid, value: f64) -> Result<Self> {
        Self::new(vec![value; grid.n_nodes()])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub(crate) fn check_on(&self, grid: &TimeGrid) -> Result<()> {
        if self.len() != grid.n_nodes() {
            return Err(Error::invalid(format!(
                "control has {} values but the time grid has {} nodes",
                self.len(),
                grid.n_nodes()
            )));
        }
        Ok(())
    }
}

/// Nodal fields at every time node.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeTrajectory {
    grid: TimeGrid,
    fields: Vec<FeField>,
}

impl SpaceTimeTrajectory {
    pub fn new(grid: TimeGrid, fields: Vec<FeField>) -> Result<Self> {
        if fields.len() != grid.n_nodes() {
            return Err(Error::invalid(format!(
                "trajectory has {} fields for {} time nodes",
                fields.len(),
                grid.n_nodes()
            )));
        }
        if fields.iter().any(|f| f.len() != fields[0].len()) {
            return Err(Error::invalid("trajectory fields have different lengths"));
        }
        Ok(SpaceTimeTrajectory { grid, fields })
    }

    /// Every time node carries the same field.
    pub fn frozen(grid: TimeGrid, field: FeField) -> Self {
        SpaceTimeTrajectory {
            grid,
            fields: vec![field; grid.n_nodes()],
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn fields(&self) -> &[FeField] {
        &self.fields
    }

    pub fn field(&self, k: usize) -> &FeField {
        &self.fields[k]
    }

    pub fn last(&self) -> &FeField {
        self.fields.last().expect("trajectory has at least one field")
    }

    pub fn n_nodes(&self) -> usize {
        self.fields[0].len()
    }

    /// Smallest and largest nodal value over all times.
    pub fn bounds(&self) -> (f64, f64) {
        self.fields
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), f| {
                (lo.min(f.min()), hi.max(f.max()))
            })
    }

    /// `∫_Ω field dx` at every time node.
    pub fn spatial_integrals(&self, disc: &Discretization) -> Vec<f64> {
        self.fields.iter().map(|f| disc.integral(f.values())).collect()
    }

    fn check_against(&self, problem: &Problem, what: &str) -> Result<()> {
        if self.grid != problem.grid || self.n_nodes() != problem.disc.n_nodes() {
            return Err(Error::invalid(format!(
                "{what} trajectory does not match the problem's mesh and time grid"
            )));
        }
        Ok(())
    }
}

/// Discretized model, time grid and initial state.
#[derive(Debug, Clone)]
pub struct Problem {
    disc: Discretization,
    rho: f64,
    grid: TimeGrid,
    u0: FeField,
    solver: SpdSolver,
}

impl Problem {
    pub fn new(mesh: Mesh, params: ModelParams, grid: TimeGrid, u0: FeField) -> Result<Self> {
        let ModelParams { rho, diffusion } = ModelParams::new(params.rho, params.diffusion)?;
        u0.check_on(&mesh)?;
        if let Some(i) = u0.values().iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid(format!(
                "initial state must lie in [0, 1], node {i} has {}",
                u0.values()[i]
            )));
        }
        if grid.dt() * rho >= 1.0 {
            return Err(Error::invalid(format!(
                "time step {} too large for rho = {rho}: need dt * rho < 1",
                grid.dt()
            )));
        }
        let disc = Discretization::new(mesh, diffusion)?;
        Ok(Problem {
            disc,
            rho,
            grid,
            u0,
            solver: SpdSolver::default(),
        })
    }

    pub fn with_solver(mut self, solver: SpdSolver) -> Self {
        self.solver = solver;
        self
    }

    pub fn discretization(&self) -> &Discretization {
        &self.disc
    }

    pub fn mesh(&self) -> &Mesh {
        self.disc.mesh()
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn initial_state(&self) -> &FeField {
        &self.u0
    }

    /// Same mesh and operators with a different initial state.
    pub fn with_initial_state(&self, u0: FeField) -> Result<Self> {
        u0.check_on(self.mesh())?;
        if u0.values().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("initial state must lie in [0, 1]"));
        }
        Ok(Problem {
            u0,
            ..self.clone()
        })
    }

    fn step_solve(
        &self,
        a: &CsrMatrix,
        rhs: &[f64],
        guess: &[f64],
        solve: &'static str,
        step: usize,
    ) -> Result<FeField> {
        let x = self.solver.solve(a, rhs, Some(guess))?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { solve, step });
        }
        Ok(FeField::from_raw(x))
    }
}

/// Forward solve of the state equation; `fields[0]` is the initial state.
pub fn solve_state(problem: &Problem, control: &ControlTrajectory) -> Result<SpaceTimeTrajectory> {
    let grid = problem.grid;
    control.check_on(&grid)?;
    let disc = &problem.disc;
    let (dt, rho) = (grid.dt(), problem.rho);
    let c = control.values();
    let mut jac = disc.zeros_like();
    let mut wm = disc.zeros_like();
    let mut fields = Vec::with_capacity(grid.n_nodes());
    fields.push(problem.u0.clone());
    for k in 0..grid.n_steps() {
        let prev = disc.mass().mul_vec(fields[k].values());
        let mut u = fields[k].values().to_vec();
        let mut converged = false;
        for _ in 0..NEWTON_MAX_ITER {
            disc.weighted_mass_into(&u, &mut wm);
            jac.assign_combination(&[
                (1.0 - dt * (rho - c[k + 1]), disc.mass()),
                (2.0 * dt * rho, &wm),
                (dt, disc.stiffness()),
            ]);
            // G(u) = J(u)u - Δtρ M(u)u - M Uₖ, since M(u)u is quadratic in u
            let ju = jac.mul_vec(&u);
            let nu = wm.mul_vec(&u);
            let g: Vec<f64> = (0..u.len()).map(|i| ju[i] - dt * rho * nu[i] - prev[i]).collect();
            let delta = problem.solver.solve(&jac, &g, None)?;
            let mut step = 0.0f64;
            for (ui, di) in u.iter_mut().zip(&delta) {
                *ui -= di;
                step = step.max(di.abs());
            }
            if !step.is_finite() {
                return Err(Error::Divergence {
                    solve: "state",
                    step: k + 1,
                });
            }
            if step <= NEWTON_TOL {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Divergence {
                solve: "state",
                step: k + 1,
            });
        }
        let next = FeField::from_raw(u);
        let (lo, hi) = (next.min(), next.max());
        if lo < -BOUND_SLACK || hi > 1.0 + BOUND_SLACK {
            debug!("state step {}: nodal range [{lo:e}, {hi}] leaves [0, 1]", k + 1);
        }
        fields.push(next);
    }
    SpaceTimeTrajectory::new(grid, fields)
}

/// Backward solve of the adjoint equation; `fields[n_steps]` is zero.
pub fn solve_adjoint(
    problem: &Problem,
    control: &ControlTrajectory,
    state: &SpaceTimeTrajectory,
) -> Result<SpaceTimeTrajectory> {
    let grid = problem.grid;
    control.check_on(&grid)?;
    state.check_against(problem, "state")?;
    let disc = &problem.disc;
    let (dt, rho) = (grid.dt(), problem.rho);
    let c = control.values();
    let n = grid.n_steps();
    let source: Vec<f64> = disc.mass_row_sums().iter().map(|m| dt * m).collect();
    let mut a = disc.zeros_like();
    let mut wm = disc.zeros_like();
    let mut fields = vec![FeField::zeros(disc.n_nodes()); grid.n_nodes()];
    for k in (0..n).rev() {
        disc.weighted_mass_into(state.fields[k].values(), &mut wm);
        a.assign_combination(&[
            (1.0 - dt * (rho - c[k]), disc.mass()),
            (2.0 * dt * rho, &wm),
            (dt, disc.stiffness()),
        ]);
        let next = fields[k + 1].values();
        let mut rhs = disc.mass().mul_vec(next);
        for (r, s) in rhs.iter_mut().zip(&source) {
            *r -= s;
        }
        let w = problem.step_solve(&a, &rhs, next, "adjoint", k)?;
        if w.max() > BOUND_SLACK {
            debug!("adjoint step {k}: max nodal value {} is positive", w.max());
        }
        fields[k] = w;
    }
    SpaceTimeTrajectory::new(grid, fields)
}

/// Forward solve of the sensitivity of the state to the control direction `eta`.
///
/// `eta` may take either sign. Each step solves
///
/// ```text
/// [(1 − Δt(ρ − Cₖ₊₁))M + 2Δtρ M(Uₖ₊₁) + Δt K] ψₖ₊₁ = M ψₖ − Δt ηₖ₊₁ M Uₖ₊₁
/// ```
pub fn solve_sensitivity(
    problem: &Problem,
    control: &ControlTrajectory,
    state: &SpaceTimeTrajectory,
    eta: &[f64],
) -> Result<SpaceTimeTrajectory> {
    let grid = problem.grid;
    control.check_on(&grid)?;
    state.check_against(problem, "state")?;
    if eta.len() != grid.n_nodes() {
        return Err(Error::invalid(format!(
            "direction has {} values but the time grid has {} nodes",
            eta.len(),
            grid.n_nodes()
        )));
    }
    if eta.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("direction must be finite"));
    }
    let disc = &problem.disc;
    let (dt, rho) = (grid.dt(), problem.rho);
    let c = control.values();
    let mut a = disc.zeros_like();
    let mut wm = disc.zeros_like();
    let mut fields = Vec::with_capacity(grid.n_nodes());
    fields.push(FeField::zeros(disc.n_nodes()));
    for k in 0..grid.n_steps() {
        let u_next = state.fields[k + 1].values();
        disc.weighted_mass_into(u_next, &mut wm);
        a.assign_combination(&[
            (1.0 - dt * (rho - c[k + 1]), disc.mass()),
            (2.0 * dt * rho, &wm),
            (dt, disc.stiffness()),
        ]);
        let psi = fields[k].values();
        let mut rhs = disc.mass().mul_vec(psi);
        let mu = disc.mass().mul_vec(u_next);
        for (r, m) in rhs.iter_mut().zip(&mu) {
            *r -= dt * eta[k + 1] * m;
        }
        let next = problem.step_solve(&a, &rhs, psi, "sensitivity", k + 1)?;
        fields.push(next);
    }
    SpaceTimeTrajectory::new(grid, fields)
}
