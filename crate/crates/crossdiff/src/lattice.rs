//! Random-walk master equation on a 1-D lattice and its diffusion limit.
//!
//! Species hop between neighboring cells with rates
//! `sigma0 p_i(u(source)) q(vacancy(destination))`, `sigma0 = 1/h^2`; the
//! occupancy factor is evaluated where the walker sits and the vacancy
//! factor where it wants to go, so motion into fully packed cells is
//! blocked. Rates through the two domain walls are zero together with their
//! paired loss terms, which keeps per-species lattice mass exactly
//! telescoping (the reflecting counterpart of the no-flux condition).
//!
//! Scaling the rates by `1/h^2` and refining the lattice reproduces the
//! cross-diffusion system; [`diffusion_limit_study`] measures that
//! convergence against a fine-grid solve of the continuum equations.

use crate::error::{Error, Result};
use crate::grid::{Field, Grid1D};
use crate::model::ModelSpec;
use crate::stepper::{run_simulation, SchemeParams};

/// Occupancies of `n` species on a uniform lattice of `sites` cells with
/// spacing `h`, stored species-major.
#[derive(Clone, Debug)]
pub struct LatticeState {
    n: usize,
    sites: usize,
    spacing: f64,
    sigma0: f64,
    occupancies: Vec<f64>,
}

impl LatticeState {
    pub fn from_profile(
        n: usize,
        sites: usize,
        spacing: f64,
        profile: impl Fn(usize, f64) -> f64,
    ) -> Result<Self> {
        if sites < 2 || !(spacing > 0.0) {
            return Err(Error::Config(format!(
                "lattice needs at least 2 sites and positive spacing (got {sites}, {spacing})"
            )));
        }
        let mut occupancies = vec![0.0; n * sites];
        for i in 0..n {
            for j in 0..sites {
                occupancies[i * sites + j] = profile(i, (j as f64 + 0.5) * spacing);
            }
        }
        let state = Self { n, sites, spacing, sigma0: 1.0 / (spacing * spacing), occupancies };
        state.check_occupancies(0.0)?;
        Ok(state)
    }

    pub fn n_species(&self) -> usize {
        self.n
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn sigma0(&self) -> f64 {
        self.sigma0
    }

    pub fn site_center(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.spacing
    }

    #[inline]
    pub fn get(&self, species: usize, site: usize) -> f64 {
        self.occupancies[species * self.sites + site]
    }

    pub fn occupancies(&self) -> &[f64] {
        &self.occupancies
    }

    pub fn vacancy_at(&self, site: usize) -> f64 {
        let mut sum = 0.0;
        for i in 0..self.n {
            sum += self.get(i, site);
        }
        (1.0 - sum).max(0.0)
    }

    fn site_state(&self, site: usize, buf: &mut [f64]) {
        for i in 0..self.n {
            buf[i] = self.get(i, site);
        }
    }

    /// Per-species lattice masses `sum_j u_ij h`.
    pub fn masses(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                self.occupancies[i * self.sites..(i + 1) * self.sites].iter().sum::<f64>()
                    * self.spacing
            })
            .collect()
    }

    /// Occupancy bounds with a slack for round-off; positivity is monitored,
    /// never enforced.
    fn check_occupancies(&self, slack: f64) -> Result<()> {
        for j in 0..self.sites {
            let mut sum = 0.0;
            for i in 0..self.n {
                let v = self.get(i, j);
                if !v.is_finite() || v < -slack {
                    return Err(Error::LatticeUnstable(format!(
                        "species {i}, site {j}: occupancy {v}; reduce dt"
                    )));
                }
                sum += v;
            }
            if sum > 1.0 + slack {
                return Err(Error::LatticeUnstable(format!(
                    "site {j}: total occupancy {sum}; reduce dt"
                )));
            }
        }
        Ok(())
    }
}

/// Hop rates per species and site: `plus` toward the right neighbor,
/// `minus` toward the left; zero through the domain walls.
#[derive(Clone, Debug)]
pub struct TransitionRates {
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
}

/// `sigma0 p_i(u(x_j)) q(u_{n+1}(x_{j +/- 1}))`: the occupancy factor at the
/// source site, the vacancy factor at the destination.
pub fn transition_rates(state: &LatticeState, model: &ModelSpec) -> TransitionRates {
    let n = state.n_species();
    let m = state.sites();
    let mut plus = vec![0.0; n * m];
    let mut minus = vec![0.0; n * m];
    let mut u = vec![0.0; n];
    let mut p = vec![0.0; n];
    let q_of: Vec<f64> = (0..m).map(|j| model.q.q(state.vacancy_at(j))).collect();
    for j in 0..m {
        state.site_state(j, &mut u);
        model.p_into(&u, &mut p);
        for i in 0..n {
            if j + 1 < m {
                plus[i * m + j] = state.sigma0() * p[i] * q_of[j + 1];
            }
            if j > 0 {
                minus[i * m + j] = state.sigma0() * p[i] * q_of[j - 1];
            }
        }
    }
    TransitionRates { plus, minus }
}

/// Right side of the master equation with the reflecting closure, assembled
/// wall by wall so each gain/loss pair cancels exactly in the species sum.
pub fn master_rhs(state: &LatticeState, model: &ModelSpec) -> Vec<f64> {
    let rates = transition_rates(state, model);
    let n = state.n_species();
    let m = state.sites();
    let mut rhs = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m - 1 {
            let net = rates.plus[i * m + j] * state.get(i, j)
                - rates.minus[i * m + j + 1] * state.get(i, j + 1);
            rhs[i * m + j] -= net;
            rhs[i * m + j + 1] += net;
        }
    }
    rhs
}

/// Lattice trajectory: strided snapshots plus the final state.
#[derive(Clone, Debug)]
pub struct LatticeTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<LatticeState>,
    pub steps: usize,
}

impl LatticeTrajectory {
    pub fn final_state(&self) -> &LatticeState {
        self.states.last().expect("holds at least the initial state")
    }
}

/// Classic four-stage explicit integration of the master equation. The step
/// is `min(dt, 0.2 h^2 / max(p q))`, recomputed each step; occupancies are
/// never clipped, violations abort.
pub fn integrate_lattice(
    state: &LatticeState,
    model: &ModelSpec,
    t_final: f64,
    dt: Option<f64>,
    snapshot_every: usize,
) -> Result<LatticeTrajectory> {
    let n = state.n_species();
    let m = state.sites();
    let mut y = state.clone();
    y.check_occupancies(0.0)?;
    let stride = snapshot_every.max(1);
    let mut times = vec![0.0];
    let mut states = vec![y.clone()];
    let mut t = 0.0;
    let mut steps = 0usize;

    let mut u = vec![0.0; n];
    let mut p = vec![0.0; n];
    while t < t_final - 1e-14 * t_final.max(1.0) {
        // an explicit dt is taken as given (meeting the stability bound is
        // the caller's precondition); otherwise use the adaptive rule
        // 0.2 h^2 / max(p q) recomputed from the current state
        let mut step = match dt {
            Some(user) => user,
            None => {
                let mut max_pq: f64 = 0.0;
                for j in 0..m {
                    y.site_state(j, &mut u);
                    model.p_into(&u, &mut p);
                    let q = model.q.q(y.vacancy_at(j));
                    for &pi in p.iter() {
                        max_pq = max_pq.max(pi * q);
                    }
                }
                0.2 * y.spacing * y.spacing / max_pq.max(1e-300)
            }
        };
        step = step.min(t_final - t);

        let k1 = master_rhs(&y, model);
        let stage = |base: &LatticeState, k: &[f64], factor: f64| -> LatticeState {
            let mut s = base.clone();
            for (v, dk) in s.occupancies.iter_mut().zip(k.iter()) {
                *v += factor * dk;
            }
            s
        };
        let k2 = master_rhs(&stage(&y, &k1, 0.5 * step), model);
        let k3 = master_rhs(&stage(&y, &k2, 0.5 * step), model);
        let k4 = master_rhs(&stage(&y, &k3, step), model);
        for idx in 0..n * m {
            y.occupancies[idx] +=
                step / 6.0 * (k1[idx] + 2.0 * k2[idx] + 2.0 * k3[idx] + k4[idx]);
        }
        y.check_occupancies(1e-12)?;
        t += step;
        steps += 1;
        let done = t >= t_final - 1e-14 * t_final.max(1.0);
        if steps % stride == 0 || done {
            times.push(t);
            states.push(y.clone());
        }
    }
    Ok(LatticeTrajectory { times, states, steps })
}

/// One spacing of the refinement study.
#[derive(Clone, Debug, serde::Serialize)]
pub struct DiffusionLimitRow {
    pub spacing: f64,
    pub err_max: f64,
    pub err_l2: f64,
    /// Error order against the previous (coarser) spacing.
    pub order_estimate: Option<f64>,
    /// Worst per-species lattice mass change over the integration.
    pub mass_drift: f64,
}

/// Linear interpolation of a reference species profile (cell centers) at x.
fn interp_reference(field: &Field, species: usize, x: f64) -> f64 {
    let grid = field.grid();
    let dx = grid.dx();
    let pos = x / dx - 0.5;
    let k = pos.floor();
    let frac = pos - k;
    let k = k as isize;
    let last = grid.cells() as isize - 1;
    if k < 0 {
        return field.get(species, 0);
    }
    if k >= last {
        return field.get(species, last as usize);
    }
    let a = field.get(species, k as usize);
    let b = field.get(species, k as usize + 1);
    a + frac * (b - a)
}

/// Integrate the lattice at each spacing and compare against a fine-grid
/// continuum reference at the final time. Errors are expected to decrease
/// monotonically in h; the acceptance check consumes the table.
#[allow(clippy::too_many_arguments)]
pub fn diffusion_limit_study(
    model: &ModelSpec,
    profile: &dyn Fn(usize, f64) -> f64,
    length: f64,
    t_final: f64,
    spacings: &[f64],
    ref_cells: usize,
    ref_tau: f64,
    ref_picard_tol: f64,
) -> Result<Vec<DiffusionLimitRow>> {
    if spacings.is_empty() {
        return Err(Error::Config("empty spacing list".into()));
    }
    let grid = Grid1D::new(length, ref_cells)?;
    let u0 = Field::from_profile(grid, model.n, profile)?;
    let mut params = SchemeParams::with_tau(ref_tau);
    params.picard_tol = ref_picard_tol;
    params.snapshot_every = usize::MAX / 2;
    let reference = run_simulation(model, grid, &u0, t_final, &params)?;
    let ref_field = reference.final_field();

    let mut rows: Vec<DiffusionLimitRow> = Vec::new();
    for &h in spacings {
        let sites = (length / h).round() as usize;
        if sites < 2 || (sites as f64 * h - length).abs() > 1e-9 * length {
            return Err(Error::Config(format!(
                "spacing {h} does not tile the domain of length {length}"
            )));
        }
        let lattice0 = LatticeState::from_profile(model.n, sites, h, profile)?;
        let masses0 = lattice0.masses();
        let traj = integrate_lattice(&lattice0, model, t_final, None, usize::MAX / 2)?;
        let last = traj.final_state();
        let mass_drift = last
            .masses()
            .iter()
            .zip(masses0.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        let mut err_max: f64 = 0.0;
        let mut err_l2_sq = 0.0;
        for i in 0..model.n {
            for j in 0..sites {
                let x = last.site_center(j);
                let diff = last.get(i, j) - interp_reference(ref_field, i, x);
                err_max = err_max.max(diff.abs());
                err_l2_sq += diff * diff * h;
            }
        }
        let err_l2 = err_l2_sq.sqrt();
        let order_estimate = rows.last().map(|prev: &DiffusionLimitRow| {
            (prev.err_max / err_max).ln() / (prev.spacing / h).ln()
        });
        rows.push(DiffusionLimitRow { spacing: h, err_max, err_l2, order_estimate, mass_drift });
    }
    Ok(rows)
}
