//! Implicit Euler time stepping in entropy variables.
//!
//! One step solves the finite-volume form of
//! `(u(w) - u(w_old))/tau - div(B(w) grad w) + tau^2 (w - lap w) = 0`
//! with `B = A (h'')^{-1}` face-averaged and the `tau^2` regularization
//! optional. The unknowns are the entropy variables per cell, so every state
//! the solver produces lies strictly inside the simplex; positivity and the
//! volume constraint are never enforced, they are structural.
//!
//! The inner solver iterates a frozen-coefficient linearized step: with
//! coefficients and the mass linearization taken at the current iterate `y`,
//! it solves a block-tridiagonal system whose fixed points are exactly the
//! scheme solutions. Iterating it with residual damping is a quasi-Newton
//! method on the step residual. The raw fixed-point map without the mass
//! term (the one whose coercivity needs the regularization) is kept as a
//! fallback mode for robustness studies.
//!
//! Every accepted step is audited: discrete entropy must not increase
//! (beyond round-off tolerance), masses must telescope exactly when the
//! regularization and reactions are off, and the dissipation quadratic is
//! recorded. A failed audit halves the step and retries.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::entropy::{gradient_into, hessian_into, invert_into, InversionWorkspace};
use crate::error::{Error, Result};
use crate::grid::{discrete_entropy, dissipation_functionals, DissipationReport, Field, Grid1D};
use crate::linalg::{lu_factor, lu_solve, BlockTridiag, SquareMat};
use crate::model::{ModelSpec, ReactionSpec};

/// Controls of the implicit stepper.
#[derive(Clone, Debug)]
pub struct SchemeParams {
    /// Target time step.
    pub tau: f64,
    /// Enable the tau^2 (w - lap w) regularization of the existence scheme.
    pub reg_enabled: bool,
    /// Residual tolerance (max norm) of the inner solve.
    pub picard_tol: f64,
    /// Iteration cap of the inner solve.
    pub picard_max: usize,
    /// Use the mass-linearized step (quasi-Newton). When false the raw
    /// frozen-coefficient map is iterated, which needs the regularization
    /// for a nonsingular system.
    pub newton_fallback: bool,
    /// Ramp the load factor eta through (0,1] instead of solving at 1
    /// directly.
    pub continuation_eta: bool,
    /// Smallest step the halving control may reach.
    pub tau_min: f64,
    /// Relative entropy-audit tolerance: a step is accepted when
    /// `H_new <= H_old + entropy_tol (1 + |H_old|)`.
    pub entropy_tol: f64,
    /// Keep every k-th accepted step in the trajectory (the final state is
    /// always kept).
    pub snapshot_every: usize,
    /// Relative jitter applied to the inner-solve starting iterate;
    /// exercised by the uniqueness experiment.
    pub guess_jitter: f64,
    pub jitter_seed: u64,
}

impl SchemeParams {
    pub fn with_tau(tau: f64) -> Self {
        Self {
            tau,
            reg_enabled: false,
            picard_tol: 1e-10,
            picard_max: 200,
            newton_fallback: true,
            continuation_eta: false,
            tau_min: tau / 1024.0,
            entropy_tol: 1e-9,
            snapshot_every: 1,
            guess_jitter: 0.0,
            jitter_seed: 0,
        }
    }
}

impl Default for SchemeParams {
    fn default() -> Self {
        Self::with_tau(1e-4)
    }
}

/// Convergence and invariant audit of one accepted step.
#[derive(Clone, Debug)]
pub struct StepReport {
    pub time: f64,
    pub tau_used: f64,
    pub inner_iterations: usize,
    pub final_residual: f64,
    pub entropy_before: f64,
    pub entropy_after: f64,
    /// Dissipation functionals and masses of the new state.
    pub dissipation: DissipationReport,
    /// Face sum of `grad w . B grad w dx` at the new state, the step term of
    /// the discrete entropy inequality.
    pub step_quadratic: f64,
    /// `int (|w|^2 + |grad w|^2)` of the new state; zero with the
    /// regularization off.
    pub reg_quadratic: f64,
    /// Mass change per species over the solve (relative to the
    /// post-reaction state when reactions are on).
    pub mass_drift: Vec<f64>,
    pub min_u: f64,
    pub min_vacancy: f64,
    pub accepted: bool,
}

/// Snapshots (decimated by the output stride) plus the per-step reports.
#[derive(Clone, Debug)]
pub struct Trajectory {
    /// Times of the stored snapshots, starting at 0.
    pub times: Vec<f64>,
    pub fields: Vec<Field>,
    /// One report per accepted step.
    pub reports: Vec<StepReport>,
}

impl Trajectory {
    pub fn final_field(&self) -> &Field {
        self.fields.last().expect("trajectory holds at least the initial state")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory holds at least the initial state")
    }
}

/// Explicit Lotka-Volterra source: the field increment `tau f(u)` applied to
/// the step right side before the inner solve (species-major layout).
/// Rejects `tau cf >= 1`, where the entropy absorption argument fails.
pub fn apply_reaction(u: &Field, reaction: &ReactionSpec, tau: f64) -> Result<Vec<f64>> {
    if tau * reaction.cf >= 1.0 {
        return Err(Error::Config(format!(
            "tau * cf = {} >= 1: the explicit reaction split needs a smaller step",
            tau * reaction.cf
        )));
    }
    let n = u.n_species();
    let cells = u.grid().cells();
    let mut out = vec![0.0; n * cells];
    let mut state = vec![0.0; n];
    let mut f = vec![0.0; n];
    for j in 0..cells {
        for i in 0..n {
            state[i] = u.get(i, j);
        }
        reaction.eval_into(&state, &mut f);
        for i in 0..n {
            out[i * cells + j] = tau * f[i];
        }
    }
    Ok(out)
}

/// The implicit stepper; owns all solver workspaces so stepping allocates
/// nothing per inner iteration beyond a few candidate vectors.
pub struct Stepper<'m> {
    model: &'m ModelSpec,
    grid: Grid1D,
    pub params: SchemeParams,
    n: usize,
    cells: usize,
    /// Accepted state, cell-major `[cell * n + i]`; warm start for
    /// inversions.
    u_cells: Vec<f64>,
    /// Iterate state used while solving.
    trial_u: Vec<f64>,
    /// Per-cell mobility matrices B at the iterate, flat `n*n` each.
    b_cells: Vec<f64>,
    inv_ws: InversionWorkspace,
    system: BlockTridiag,
    rhs: Vec<f64>,
    residual_buf: Vec<f64>,
    trial_w: Vec<f64>,
    scratch_a: SquareMat,
    scratch_h: SquareMat,
    scratch_p: Vec<f64>,
    scratch_chi: SquareMat,
    lu: Vec<f64>,
    piv: Vec<usize>,
    rng: ChaCha8Rng,
}

impl<'m> Stepper<'m> {
    pub fn new(model: &'m ModelSpec, grid: Grid1D, params: SchemeParams) -> Self {
        let n = model.n;
        let cells = grid.cells();
        let seed = params.jitter_seed;
        Self {
            model,
            grid,
            params,
            n,
            cells,
            u_cells: vec![0.5 / n as f64; n * cells],
            trial_u: vec![0.5 / n as f64; n * cells],
            b_cells: vec![0.0; n * n * cells],
            inv_ws: InversionWorkspace::new(n),
            system: BlockTridiag::zeros(cells, n),
            rhs: vec![0.0; n * cells],
            residual_buf: vec![0.0; n * cells],
            trial_w: vec![0.0; n * cells],
            scratch_a: SquareMat::zeros(n),
            scratch_h: SquareMat::zeros(n),
            scratch_p: vec![0.0; n],
            scratch_chi: SquareMat::zeros(n),
            lu: vec![0.0; n * n],
            piv: vec![0; n],
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn grid(&self) -> Grid1D {
        self.grid
    }

    /// Current accepted state as a field.
    pub fn current_field(&self) -> Field {
        self.field_from_cells(&self.u_cells)
    }

    /// Entropy variables of a field, with boundary cells pulled to the
    /// interior by a barycenter mix at weight 1e-8 before transforming.
    pub fn entropy_vars_of(&mut self, field: &Field) -> Vec<f64> {
        let n = self.n;
        let mut w = vec![0.0; n * self.cells];
        let bary = 0.5 / n as f64;
        for j in 0..self.cells {
            let mut u: Vec<f64> = (0..n).map(|i| field.get(i, j)).collect();
            let interior =
                u.iter().all(|&x| x > 1e-12) && u.iter().sum::<f64>() < 1.0 - 1e-12;
            if !interior {
                for x in u.iter_mut() {
                    *x = (1.0 - 1e-8) * *x + 1e-8 * bary;
                }
            }
            let vac = (1.0 - u.iter().sum::<f64>()).max(0.0);
            gradient_into(self.model, &u, vac, &mut w[j * n..(j + 1) * n]);
            self.u_cells[j * n..(j + 1) * n].copy_from_slice(&u);
        }
        w
    }

    /// Invert all cells of `w` into the trial state, warm-starting each cell
    /// from its current trial value.
    fn invert_cells(&mut self, w: &[f64]) -> Result<()> {
        let n = self.n;
        for j in 0..self.cells {
            invert_into(
                self.model,
                &w[j * n..(j + 1) * n],
                &mut self.trial_u[j * n..(j + 1) * n],
                &mut self.inv_ws,
            )?;
        }
        Ok(())
    }

    fn assemble_b_cells(&mut self) -> Result<()> {
        let n = self.n;
        let nn = n * n;
        for j in 0..self.cells {
            let u = &self.trial_u[j * n..(j + 1) * n];
            let vac = (1.0 - u.iter().sum::<f64>()).max(0.0);
            crate::diffusion::assemble_a_into(
                self.model,
                u,
                vac,
                &mut self.scratch_p,
                &mut self.scratch_chi,
                &mut self.scratch_a,
            );
            hessian_into(self.model, u, vac, &mut self.scratch_h);
            // B = A (h'')^{-1}: h'' is symmetric, so row r of B solves
            // h'' x = (row r of A)
            self.lu.copy_from_slice(self.scratch_h.as_slice());
            lu_factor(&mut self.lu, &mut self.piv, n)?;
            let mut col = [0.0_f64; 16];
            let col = &mut col[..n];
            for r in 0..n {
                for (c, v) in col.iter_mut().enumerate() {
                    *v = self.scratch_a.get(r, c);
                }
                lu_solve(&self.lu, &self.piv, col, n);
                for (c, v) in col.iter().enumerate() {
                    self.b_cells[j * nn + r * n + c] = *v;
                }
            }
        }
        Ok(())
    }

    #[inline]
    fn face_b(&self, face: usize, r: usize, c: usize) -> f64 {
        // arithmetic average of the two neighboring cell mobilities;
        // interior faces have index 1..cells-1 between cells face-1, face
        let nn = self.n * self.n;
        0.5 * (self.b_cells[(face - 1) * nn + r * self.n + c]
            + self.b_cells[face * nn + r * self.n + c])
    }

    /// Strong-form residual at `w` using the trial-state buffers (which the
    /// caller refreshed for this `w`). `u_base` is the pre-step state after
    /// any explicit reaction increment; `eta` scales the time-term load.
    fn residual_from_buffers(&mut self, w: &[f64], u_base: &[f64], tau: f64, eta: f64) {
        let n = self.n;
        let dx2 = self.grid.dx() * self.grid.dx();
        let reg = if self.params.reg_enabled { tau * tau } else { 0.0 };
        for j in 0..self.cells {
            for i in 0..n {
                let idx = j * n + i;
                let mut r = eta * (self.trial_u[idx] - u_base[idx]) / tau;
                let mut div = 0.0;
                if j + 1 < self.cells {
                    for m in 0..n {
                        div += self.face_b(j + 1, i, m) * (w[(j + 1) * n + m] - w[j * n + m]);
                    }
                }
                if j > 0 {
                    for m in 0..n {
                        div -= self.face_b(j, i, m) * (w[j * n + m] - w[(j - 1) * n + m]);
                    }
                }
                r -= div / dx2;
                if reg > 0.0 {
                    let mut lap = 0.0;
                    if j + 1 < self.cells {
                        lap += w[(j + 1) * n + i] - w[idx];
                    }
                    if j > 0 {
                        lap -= w[idx] - w[(j - 1) * n + i];
                    }
                    r += reg * (w[idx] - lap / dx2);
                }
                self.residual_buf[idx] = r;
            }
        }
    }

    /// Residual of the scheme at `w_new` given the previous entropy
    /// variables `w_old`, as a cell-major vector.
    pub fn residual(&mut self, w_new: &[f64], w_old: &[f64]) -> Result<Vec<f64>> {
        let tau = self.params.tau;
        self.invert_cells(w_old)?;
        let u_base = self.trial_u.clone();
        self.refresh_buffers(w_new)?;
        self.residual_from_buffers(w_new, &u_base, tau, 1.0);
        Ok(self.residual_buf.clone())
    }

    fn refresh_buffers(&mut self, w: &[f64]) -> Result<()> {
        self.invert_cells(w)?;
        self.assemble_b_cells()
    }

    fn residual_norm(&self) -> f64 {
        self.residual_buf.iter().fold(0.0_f64, |m, r| m.max(r.abs()))
    }

    /// Assemble the linearized block-tridiagonal system at the trial state:
    /// `[stabilized * (h'')^{-1}/tau + K_B + reg tau^2 (I + L)]`.
    fn assemble_system(&mut self, tau: f64, stabilized: bool) -> Result<()> {
        let n = self.n;
        let dx2 = self.grid.dx() * self.grid.dx();
        let reg = if self.params.reg_enabled { tau * tau } else { 0.0 };
        self.system.clear();
        for j in 0..self.cells {
            if stabilized {
                let u = &self.trial_u[j * n..(j + 1) * n];
                let vac = (1.0 - u.iter().sum::<f64>()).max(0.0);
                hessian_into(self.model, u, vac, &mut self.scratch_h);
                self.lu.copy_from_slice(self.scratch_h.as_slice());
                lu_factor(&mut self.lu, &mut self.piv, n)?;
                let mut col = [0.0_f64; 16];
                let col = &mut col[..n];
                for c in 0..n {
                    col.iter_mut().for_each(|v| *v = 0.0);
                    col[c] = 1.0;
                    lu_solve(&self.lu, &self.piv, col, n);
                    let d = self.system.diag_mut(j);
                    for r in 0..n {
                        d[r * n + c] += col[r] / tau;
                    }
                }
            }
            let degree = usize::from(j > 0) + usize::from(j + 1 < self.cells);
            {
                let d = self.system.diag_mut(j);
                for i in 0..n {
                    d[i * n + i] += reg * (1.0 + degree as f64 / dx2);
                }
            }
            if j + 1 < self.cells {
                for r in 0..n {
                    for c in 0..n {
                        let b = self.face_b(j + 1, r, c) / dx2;
                        self.system.diag_mut(j)[r * n + c] += b;
                        self.system.upper_mut(j)[r * n + c] -= b;
                    }
                    self.system.upper_mut(j)[r * n + r] -= reg / dx2;
                }
            }
            if j > 0 {
                for r in 0..n {
                    for c in 0..n {
                        let b = self.face_b(j, r, c) / dx2;
                        self.system.diag_mut(j)[r * n + c] += b;
                        self.system.lower_mut(j - 1)[r * n + c] -= b;
                    }
                    self.system.lower_mut(j - 1)[r * n + r] -= reg / dx2;
                }
            }
        }
        Ok(())
    }

    /// out := system * x (block-tridiagonal multiply).
    fn apply_system(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n;
        let nn = n * n;
        for j in 0..self.cells {
            for r in 0..n {
                let mut s = 0.0;
                for c in 0..n {
                    s += self.system.diag[j * nn + r * n + c] * x[j * n + c];
                }
                if j + 1 < self.cells {
                    for c in 0..n {
                        s += self.system.upper[j * nn + r * n + c] * x[(j + 1) * n + c];
                    }
                }
                if j > 0 {
                    for c in 0..n {
                        s += self.system.lower[(j - 1) * nn + r * n + c] * x[(j - 1) * n + c];
                    }
                }
                out[j * n + r] = s;
            }
        }
    }

    /// One frozen-coefficient linearized step from iterate `y`: coefficients
    /// `B(y)` frozen, load `-(eta/tau)(u(y) - u_base)`. With `stabilized`
    /// the cell mass linearization `(h'')^{-1}/tau` joins both sides, making
    /// the solve a quasi-Newton step whose fixed points are the scheme
    /// solutions; without it this is the raw map of the existence
    /// construction, solvable only with the regularization on.
    fn linearized_step(
        &mut self,
        y: &[f64],
        u_base: &[f64],
        tau: f64,
        eta: f64,
        stabilized: bool,
    ) -> Result<Vec<f64>> {
        let n = self.n;
        self.refresh_buffers(y)?;
        self.assemble_system(tau, stabilized)?;
        if stabilized {
            // rhs = J y - R(y), so the solution is y - J^{-1} R(y)
            self.residual_from_buffers(y, u_base, tau, eta);
            let mut jy = vec![0.0; n * self.cells];
            self.apply_system(y, &mut jy);
            for k in 0..n * self.cells {
                self.rhs[k] = jy[k] - self.residual_buf[k];
            }
        } else {
            for j in 0..self.cells {
                for i in 0..n {
                    self.rhs[j * n + i] =
                        -(eta / tau) * (self.trial_u[j * n + i] - u_base[j * n + i]);
                }
            }
        }
        let mut sol = self.rhs.clone();
        self.system.solve(&mut sol)?;
        Ok(sol)
    }

    /// The frozen-coefficient map of the inner solver, exposed for
    /// verification: fixed points are exactly the implicit-step solutions.
    /// With `newton_fallback` off and the regularization on this is the raw
    /// coercive map of the existence construction; the raw map without
    /// regularization yields a singular system.
    pub fn picard_step(&mut self, y: &[f64], w_old: &[f64]) -> Result<Vec<f64>> {
        let tau = self.params.tau;
        self.invert_cells(w_old)?;
        let u_base = self.trial_u.clone();
        let stabilized = self.params.newton_fallback;
        self.linearized_step(y, &u_base, tau, 1.0, stabilized)
    }

    /// Quasi-Newton inner solve at fixed tau and eta with residual-halving
    /// damping. Returns (iterations, final residual).
    fn solve_inner(
        &mut self,
        w: &mut [f64],
        u_base: &[f64],
        tau: f64,
        eta: f64,
    ) -> Result<(usize, f64)> {
        let tol = self.params.picard_tol;
        self.refresh_buffers(w)?;
        self.residual_from_buffers(w, u_base, tau, eta);
        let mut res = self.residual_norm();
        for iter in 0..self.params.picard_max {
            if res <= tol {
                return Ok((iter, res));
            }
            let cand = self.linearized_step(w, u_base, tau, eta, true)?;
            let mut alpha = 1.0_f64;
            let mut advanced = false;
            for _ in 0..30 {
                for k in 0..w.len() {
                    self.trial_w[k] = w[k] + alpha * (cand[k] - w[k]);
                }
                let tw = std::mem::take(&mut self.trial_w);
                let ok = self.refresh_buffers(&tw).is_ok();
                if ok {
                    self.residual_from_buffers(&tw, u_base, tau, eta);
                    let r_new = self.residual_norm();
                    if r_new.is_finite() && (r_new < res || r_new <= tol) {
                        w.copy_from_slice(&tw);
                        self.trial_w = tw;
                        res = r_new;
                        advanced = true;
                        break;
                    }
                }
                self.trial_w = tw;
                alpha *= 0.5;
            }
            if !advanced {
                return Err(Error::StepFailed {
                    time: f64::NAN,
                    reason: format!(
                        "inner solve stalled at residual {res:.3e} (tolerance {tol:.1e})"
                    ),
                });
            }
        }
        if res <= tol {
            Ok((self.params.picard_max, res))
        } else {
            Err(Error::StepFailed {
                time: f64::NAN,
                reason: format!(
                    "inner solve did not reach {tol:.1e} in {} iterations (residual {res:.3e})",
                    self.params.picard_max
                ),
            })
        }
    }

    /// Raw fixed-point iteration of the unstabilized map with damping 0.5 on
    /// non-decreasing residual; needs the regularization.
    fn solve_fixed_point(
        &mut self,
        w: &mut [f64],
        u_base: &[f64],
        tau: f64,
        eta: f64,
    ) -> Result<(usize, f64)> {
        let tol = self.params.picard_tol;
        self.refresh_buffers(w)?;
        self.residual_from_buffers(w, u_base, tau, eta);
        let mut res = self.residual_norm();
        let mut damping = 1.0_f64;
        for iter in 0..self.params.picard_max {
            if res <= tol {
                return Ok((iter, res));
            }
            let cand = self.linearized_step(w, u_base, tau, eta, false)?;
            for k in 0..w.len() {
                self.trial_w[k] = w[k] + damping * (cand[k] - w[k]);
            }
            let tw = std::mem::take(&mut self.trial_w);
            let mut r_new = f64::INFINITY;
            if self.refresh_buffers(&tw).is_ok() {
                self.residual_from_buffers(&tw, u_base, tau, eta);
                r_new = self.residual_norm();
            }
            if r_new.is_finite() && r_new < res {
                w.copy_from_slice(&tw);
                res = r_new;
            } else {
                damping = (0.5 * damping).max(1.0 / 1024.0);
            }
            self.trial_w = tw;
        }
        if res <= tol {
            Ok((self.params.picard_max, res))
        } else {
            Err(Error::StepFailed {
                time: f64::NAN,
                reason: format!("fixed-point iteration stalled at residual {res:.3e}"),
            })
        }
    }

    fn field_from_cells(&self, cells: &[f64]) -> Field {
        let n = self.n;
        let m = self.cells;
        let mut data = vec![0.0; n * m];
        for j in 0..m {
            for i in 0..n {
                data[i * m + j] = cells[j * n + i];
            }
        }
        Field::from_raw(self.grid, n, data).expect("inverted states are admissible")
    }

    /// Dissipation quadratic `sum_faces grad w . B_face grad w dx` with the
    /// mobilities at the trial state.
    fn step_quadratic(&self, w: &[f64]) -> f64 {
        let n = self.n;
        let dx = self.grid.dx();
        let mut total = 0.0;
        for face in 1..self.cells {
            for r in 0..n {
                let gr = (w[face * n + r] - w[(face - 1) * n + r]) / dx;
                for c in 0..n {
                    let gc = (w[face * n + c] - w[(face - 1) * n + c]) / dx;
                    total += gr * self.face_b(face, r, c) * gc;
                }
            }
        }
        total * dx
    }

    fn reg_quadratic(&self, w: &[f64]) -> f64 {
        if !self.params.reg_enabled {
            return 0.0;
        }
        let n = self.n;
        let dx = self.grid.dx();
        let mut total = 0.0;
        for j in 0..self.cells {
            for i in 0..n {
                total += w[j * n + i] * w[j * n + i] * dx;
            }
        }
        for face in 1..self.cells {
            for i in 0..n {
                let g = (w[face * n + i] - w[(face - 1) * n + i]) / dx;
                total += g * g * dx;
            }
        }
        total
    }

    /// Advance one accepted step from `w_old` at time `t`, halving the step
    /// on inner failure or audit violation down to `tau_min`.
    pub fn advance(&mut self, w_old: &[f64], t: f64) -> Result<(Vec<f64>, StepReport)> {
        self.advance_with_tau(w_old, t, self.params.tau)
    }

    /// Advance with an explicit target step (the driver clamps the last step
    /// to hit the horizon exactly).
    pub fn advance_with_tau(
        &mut self,
        w_old: &[f64],
        t: f64,
        tau_target: f64,
    ) -> Result<(Vec<f64>, StepReport)> {
        let n = self.n;
        self.invert_cells(w_old)?;
        let u_old = self.trial_u.clone();
        let field_old = self.field_from_cells(&u_old);
        let entropy_before = discrete_entropy(&field_old, self.model);
        let masses_old = field_old.masses();
        let dx = self.grid.dx();

        let mut tau = tau_target;
        let mut last_failure = String::new();
        while tau >= self.params.tau_min.min(tau_target) * (1.0 - 1e-12) {
            let u_base = match &self.model.reaction {
                Some(r) => {
                    let incr = apply_reaction(&field_old, r, tau)?;
                    let mut base = u_old.clone();
                    let cells = self.cells;
                    for j in 0..cells {
                        for i in 0..n {
                            base[j * n + i] += incr[i * cells + j];
                        }
                    }
                    base
                }
                None => u_old.clone(),
            };

            let mut w = w_old.to_vec();
            if self.params.guess_jitter > 0.0 {
                let jit = self.params.guess_jitter;
                for x in w.iter_mut() {
                    *x += jit * (self.rng.gen::<f64>() - 0.5) * (1.0 + x.abs());
                }
            }
            let etas: &[f64] =
                if self.params.continuation_eta { &[0.25, 0.5, 0.75, 1.0] } else { &[1.0] };
            let mut iterations = 0;
            let mut residual = f64::NAN;
            let mut failed = None;
            for &eta in etas {
                let out = if self.params.newton_fallback {
                    self.solve_inner(&mut w, &u_base, tau, eta)
                } else {
                    self.solve_fixed_point(&mut w, &u_base, tau, eta)
                };
                match out {
                    Ok((it, res)) => {
                        iterations += it;
                        residual = res;
                    }
                    Err(e) => {
                        failed = Some(e.to_string());
                        break;
                    }
                }
            }
            if let Some(reason) = failed {
                last_failure = reason;
                tau *= 0.5;
                continue;
            }

            self.refresh_buffers(&w)?;
            let field_new = self.field_from_cells(&self.trial_u);
            let entropy_after = discrete_entropy(&field_new, self.model);
            let dissipation = dissipation_functionals(&field_new, self.model);
            let masses_new = field_new.masses();
            let base_masses: Vec<f64> = match &self.model.reaction {
                Some(_) => {
                    let mut bm = vec![0.0; n];
                    for j in 0..self.cells {
                        for i in 0..n {
                            bm[i] += u_base[j * n + i] * dx;
                        }
                    }
                    bm
                }
                None => masses_old.clone(),
            };
            let mass_drift: Vec<f64> =
                masses_new.iter().zip(base_masses.iter()).map(|(a, b)| a - b).collect();

            let tol = self.params.entropy_tol * (1.0 + entropy_before.abs());
            let entropy_ok = match &self.model.reaction {
                None => entropy_after <= entropy_before + tol,
                Some(r) => {
                    entropy_after * (1.0 - tau * r.cf) <= entropy_before + tau * r.cf + tol
                }
            };
            let mass_ok = if self.params.reg_enabled || self.model.reaction.is_some() {
                true
            } else {
                mass_drift
                    .iter()
                    .zip(masses_new.iter())
                    .all(|(d, m)| d.abs() <= 1e-12 * (1.0 + m.abs()))
            };
            if entropy_ok && mass_ok {
                let report = StepReport {
                    time: t + tau,
                    tau_used: tau,
                    inner_iterations: iterations,
                    final_residual: residual,
                    entropy_before,
                    entropy_after,
                    step_quadratic: self.step_quadratic(&w),
                    reg_quadratic: self.reg_quadratic(&w),
                    dissipation,
                    mass_drift,
                    min_u: field_new.min_species_value(),
                    min_vacancy: field_new.min_vacancy(),
                    accepted: true,
                };
                self.u_cells.copy_from_slice(&self.trial_u);
                return Ok((w, report));
            }
            last_failure = format!(
                "invariant audit failed (entropy {} -> {}, worst mass drift {:.3e})",
                entropy_before,
                entropy_after,
                mass_drift.iter().fold(0.0_f64, |m, d| m.max(d.abs()))
            );
            tau *= 0.5;
        }
        Err(Error::StepFailed { time: t, reason: last_failure })
    }
}

/// Integrate from `u0` to `t_final`; snapshots are decimated by
/// `params.snapshot_every` (initial and final states always kept).
pub fn run_simulation(
    model: &ModelSpec,
    grid: Grid1D,
    u0: &Field,
    t_final: f64,
    params: &SchemeParams,
) -> Result<Trajectory> {
    if u0.n_species() != model.n || u0.grid() != grid {
        return Err(Error::Config("initial field does not match model/grid".into()));
    }
    u0.validate()?;
    let stride = params.snapshot_every.max(1);
    let mut stepper = Stepper::new(model, grid, params.clone());
    let mut w = stepper.entropy_vars_of(u0);
    let mut t = 0.0;
    let mut times = vec![0.0];
    let mut fields = vec![stepper.current_field()];
    let mut reports = Vec::new();
    let mut step_index = 0usize;
    while t < t_final - 1e-12 * t_final.max(1.0) {
        let tau = params.tau.min(t_final - t);
        let (w_new, report) = stepper.advance_with_tau(&w, t, tau)?;
        t = report.time;
        w = w_new;
        step_index += 1;
        let done = t >= t_final - 1e-12 * t_final.max(1.0);
        if step_index % stride == 0 || done {
            times.push(t);
            fields.push(stepper.current_field());
        }
        reports.push(report);
    }
    Ok(Trajectory { times, fields, reports })
}
