//! Experiment drivers: the plain run with invariant audits, decay-rate
//! fitting against the relative-entropy envelope, the two-solution
//! uniqueness probe, the lattice diffusion-limit study, and the positivity
//! probe for mobilities with divergent log integral.
//!
//! Every driver returns a serializable summary whose `passed` flag feeds the
//! CLI exit code: audits that fail are reported, not thrown.

use serde::Serialize;

use crate::config::{ExperimentKind, RunConfig};
use crate::entropy::StatePoint;
use crate::error::{Error, Result};
use crate::grid::{
    discrete_relative_entropy, gajewski_distance, hminus1_seminorm, Field,
};
use crate::lattice::{diffusion_limit_study, DiffusionLimitRow};
use crate::model::{compute_constants, ModelConstants, ModelSpec};
use crate::output;
use crate::stepper::{run_simulation, Trajectory};

/// Which component a diagnostic tracks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Component {
    /// Species index, 0-based.
    Species(usize),
    /// The unoccupied fraction `u_{n+1}`.
    Vacancy,
}

/// Component-wise mean of the initial data: the constant steady state of the
/// no-flux dynamics.
pub fn steady_state(u0: &Field) -> StatePoint {
    StatePoint::new(u0.means()).expect("means of an admissible field are admissible")
}

/// L2 distance of one component of a field from its steady value.
pub fn component_distance(field: &Field, uinf: &StatePoint, which: Component) -> f64 {
    let dx = field.grid().dx();
    let mut sum = 0.0;
    for j in 0..field.grid().cells() {
        let diff = match which {
            Component::Species(i) => field.get(i, j) - uinf.u()[i],
            Component::Vacancy => field.vacancy_at(j) - uinf.vacancy(),
        };
        sum += diff * diff * dx;
    }
    sum.sqrt()
}

/// Least-squares decay fit of one component over the trailing window, with
/// the relative-entropy envelope check.
#[derive(Clone, Debug, Serialize)]
pub struct DecayFit {
    pub lambda_hat: f64,
    pub c_hat: f64,
    pub r_squared: f64,
    /// Envelope prefactor `sqrt(2/gamma) sqrt(int h*(u0|uinf))`.
    pub c1: f64,
    /// Whether every snapshot obeys `d(t) <= 1.05 c1 exp(-lambda_hat t)`.
    pub envelope_ok: bool,
    /// `c0 q1 / (4 cs)` when the convex Sobolev constant is supplied.
    pub predicted_lambda1: Option<f64>,
    /// `c0 q0 / cl` when the logarithmic Sobolev constant is supplied.
    pub predicted_lambda2: Option<f64>,
}

pub struct FitParams {
    /// Fit window as fractions of the horizon, default (0.2, 1.0).
    pub window: (f64, f64),
    pub cs: Option<f64>,
    pub cl: Option<f64>,
}

impl Default for FitParams {
    fn default() -> Self {
        Self { window: (0.2, 1.0), cs: None, cl: None }
    }
}

/// Fit `log d(t)` linearly on the window; needs at least 10 snapshots and
/// strictly positive distances there.
pub fn decay_fit(
    trajectory: &Trajectory,
    uinf: &StatePoint,
    which: Component,
    model: &ModelSpec,
    params: &FitParams,
) -> Result<DecayFit> {
    if trajectory.times.len() < 10 {
        return Err(Error::FitWindow(format!(
            "need at least 10 snapshots, trajectory holds {}",
            trajectory.times.len()
        )));
    }
    let t_end = trajectory.final_time();
    let (lo, hi) = (params.window.0 * t_end, params.window.1 * t_end);
    let mut ts = Vec::new();
    let mut logs = Vec::new();
    let mut distances = Vec::new();
    for (t, field) in trajectory.times.iter().zip(trajectory.fields.iter()) {
        let d = component_distance(field, uinf, which);
        distances.push((*t, d));
        if *t >= lo && *t <= hi + 1e-15 {
            if d <= 1e-14 {
                return Err(Error::FitWindow(format!(
                    "distance {d:.3e} at t = {t} is too small to fit a rate"
                )));
            }
            ts.push(*t);
            logs.push(d.ln());
        }
    }
    if ts.len() < 2 {
        return Err(Error::FitWindow("fewer than 2 snapshots in the fit window".into()));
    }
    let m = ts.len() as f64;
    let tbar = ts.iter().sum::<f64>() / m;
    let lbar = logs.iter().sum::<f64>() / m;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (t, l) in ts.iter().zip(logs.iter()) {
        sxx += (t - tbar) * (t - tbar);
        sxy += (t - tbar) * (l - lbar);
        syy += (l - lbar) * (l - lbar);
    }
    if sxx == 0.0 {
        return Err(Error::FitWindow("degenerate fit window".into()));
    }
    let slope = sxy / sxx;
    let lambda_hat = -slope;
    let c_hat = (lbar - slope * tbar).exp();
    let r_squared = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };

    // envelope from the initial relative entropy
    let rel0 = discrete_relative_entropy(&trajectory.fields[0], uinf, model)?;
    let c1 = (2.0 / model.q.gamma).sqrt() * rel0.max(0.0).sqrt();
    let envelope_ok = distances
        .iter()
        .all(|(t, d)| *d <= 1.05 * c1 * (-lambda_hat * t).exp() + 1e-14);

    let constants = compute_constants(model);
    let rates_valid = !constants.degenerate_c0;
    let predicted_lambda1 = params
        .cs
        .filter(|_| rates_valid)
        .map(|cs| constants.c0 * constants.q1 / (4.0 * cs));
    let predicted_lambda2 = params
        .cl
        .filter(|_| rates_valid && constants.q0 > 0.0)
        .map(|cl| constants.c0 * constants.q0 / cl);
    Ok(DecayFit {
        lambda_hat,
        c_hat,
        r_squared,
        c1,
        envelope_ok,
        predicted_lambda1,
        predicted_lambda2,
    })
}

/// Echo of the resolved configuration carried in every summary.
#[derive(Clone, Debug, Serialize)]
pub struct ConfigEcho {
    pub model: String,
    pub species: usize,
    pub length: f64,
    pub cells: usize,
    pub tau: f64,
    pub t_final: f64,
    pub seed: u64,
    pub regularization: bool,
    pub picard_tol: f64,
    pub snapshot_every: usize,
}

impl ConfigEcho {
    fn new(cfg: &RunConfig) -> Self {
        Self {
            model: cfg.model_name.clone(),
            species: cfg.species,
            length: cfg.grid.length(),
            cells: cfg.grid.cells(),
            tau: cfg.scheme.tau,
            t_final: cfg.experiment.t_final,
            seed: cfg.experiment.seed,
            regularization: cfg.scheme.reg_enabled,
            picard_tol: cfg.scheme.picard_tol,
            snapshot_every: cfg.output.snapshot_every,
        }
    }
}

/// Invariant audits over a trajectory.
#[derive(Clone, Debug, Serialize)]
pub struct AuditFlags {
    pub entropy_nonincreasing: bool,
    pub rel_entropy_nonincreasing: bool,
    pub mass_conserved: bool,
    pub states_in_domain: bool,
    pub dissipation_nonnegative: bool,
    pub worst_mass_drift: f64,
}

impl AuditFlags {
    pub fn passed(&self) -> bool {
        self.entropy_nonincreasing
            && self.rel_entropy_nonincreasing
            && self.mass_conserved
            && self.states_in_domain
            && self.dissipation_nonnegative
    }
}

fn audit_trajectory(
    trajectory: &Trajectory,
    uinf: &StatePoint,
    model: &ModelSpec,
    entropy_tol: f64,
    conservative: bool,
) -> Result<AuditFlags> {
    let mut entropy_ok = true;
    let mut mass_ok = true;
    let mut domain_ok = true;
    let mut dissip_ok = true;
    let mut worst_drift: f64 = 0.0;
    for rep in &trajectory.reports {
        let tol = entropy_tol * (1.0 + rep.entropy_before.abs());
        entropy_ok &= rep.entropy_after <= rep.entropy_before + tol;
        domain_ok &= rep.min_u > 0.0 && rep.min_vacancy > 0.0;
        dissip_ok &= rep.dissipation.grad_sqrt_u_term >= 0.0
            && rep.dissipation.grad_sqrt_q_term >= 0.0
            && rep.step_quadratic >= -1e-15;
        for (d, m) in rep.mass_drift.iter().zip(rep.dissipation.masses.iter()) {
            worst_drift = worst_drift.max(d.abs());
            if conservative {
                mass_ok &= d.abs() <= 1e-12 * (1.0 + m.abs());
            }
        }
    }
    let mut rel_ok = true;
    let mut prev = f64::INFINITY;
    for field in &trajectory.fields {
        let rel = discrete_relative_entropy(field, uinf, model)?;
        rel_ok &= rel <= prev + entropy_tol * (1.0 + prev.abs().min(1e300));
        prev = rel;
    }
    Ok(AuditFlags {
        entropy_nonincreasing: entropy_ok,
        rel_entropy_nonincreasing: rel_ok,
        mass_conserved: mass_ok,
        states_in_domain: domain_ok,
        dissipation_nonnegative: dissip_ok,
        worst_mass_drift: worst_drift,
    })
}

#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub config: ConfigEcho,
    pub constants: ModelConstants,
    pub steps: usize,
    pub audits: AuditFlags,
    pub final_entropy: f64,
    pub passed: bool,
}

/// Plain simulation: snapshots, series, summary; audit flags decide the exit.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunSummary> {
    let model = cfg.build_model()?;
    let u0 = cfg.build_initial_field()?;
    let trajectory =
        run_simulation(&model, cfg.grid, &u0, cfg.experiment.t_final, &cfg.scheme)?;
    let uinf = steady_state(&u0);
    let conservative = !cfg.scheme.reg_enabled && model.reaction.is_none();
    let audits =
        audit_trajectory(&trajectory, &uinf, &model, cfg.scheme.entropy_tol, conservative)?;

    output::write_snapshots(cfg, &trajectory)?;
    output::write_series(cfg, &trajectory, &uinf, &model)?;
    let summary = RunSummary {
        config: ConfigEcho::new(cfg),
        constants: compute_constants(&model),
        steps: trajectory.reports.len(),
        passed: audits.passed(),
        final_entropy: trajectory
            .reports
            .last()
            .map(|r| r.entropy_after)
            .unwrap_or(f64::NAN),
        audits,
    };
    output::write_summary(cfg, &summary)?;
    Ok(summary)
}

#[derive(Debug, Serialize)]
pub struct DecaySummary {
    pub config: ConfigEcho,
    pub constants: ModelConstants,
    pub fit: DecayFit,
    pub audits: AuditFlags,
    pub passed: bool,
}

/// Run plus decay fit on the configured component.
pub fn decay_experiment(cfg: &RunConfig) -> Result<DecaySummary> {
    let model = cfg.build_model()?;
    let u0 = cfg.build_initial_field()?;
    let trajectory =
        run_simulation(&model, cfg.grid, &u0, cfg.experiment.t_final, &cfg.scheme)?;
    let uinf = steady_state(&u0);
    let fit = decay_fit(
        &trajectory,
        &uinf,
        cfg.experiment.component,
        &model,
        &FitParams {
            window: (cfg.experiment.fit_window, 1.0),
            cs: cfg.experiment.cs,
            cl: cfg.experiment.cl,
        },
    )?;
    let conservative = !cfg.scheme.reg_enabled && model.reaction.is_none();
    let audits =
        audit_trajectory(&trajectory, &uinf, &model, cfg.scheme.entropy_tol, conservative)?;
    output::write_series(cfg, &trajectory, &uinf, &model)?;
    let passed = audits.passed() && fit.lambda_hat > 0.0 && fit.envelope_ok;
    let summary = DecaySummary {
        config: ConfigEcho::new(cfg),
        constants: compute_constants(&model),
        fit,
        audits,
        passed,
    };
    output::write_summary(cfg, &summary)?;
    Ok(summary)
}

#[derive(Debug, Serialize)]
pub struct UniqueRow {
    pub t: f64,
    pub gajewski: f64,
    pub hminus1: f64,
    pub l2_gap: f64,
}

#[derive(Debug, Serialize)]
pub struct UniqueSummary {
    pub config: ConfigEcho,
    pub eps: f64,
    pub initial_gajewski: f64,
    pub final_l2_gap: f64,
    pub gajewski_nonincreasing: bool,
    pub hminus1_nonincreasing: bool,
    pub passed: bool,
}

/// Two runs from identical data with different inner tolerances and jitter
/// seeds; the Gajewski distance and the H^{-1} seminorm of the vacancy gap
/// must not increase, and the final gap must stay at solver-noise level.
pub fn unique_experiment(cfg: &RunConfig) -> Result<UniqueSummary> {
    let model = cfg.build_model()?;
    if !model.chi.is_zero {
        return Err(Error::Config(format!(
            "uniqueness probe requires unit occupancy factors (p = 1); model \
             '{}' has potential '{}'",
            model.name, model.chi.name
        )));
    }
    let u0 = cfg.build_initial_field()?;

    let mut params_a = cfg.scheme.clone();
    params_a.picard_tol = cfg.experiment.tol_a;
    params_a.guess_jitter = 1e-12;
    params_a.jitter_seed = cfg.experiment.seed;
    let mut params_b = cfg.scheme.clone();
    params_b.picard_tol = cfg.experiment.tol_b;
    params_b.guess_jitter = 1e-12;
    params_b.jitter_seed = cfg.experiment.seed.wrapping_add(1);

    let run_a = run_simulation(&model, cfg.grid, &u0, cfg.experiment.t_final, &params_a)?;
    let run_b = run_simulation(&model, cfg.grid, &u0, cfg.experiment.t_final, &params_b)?;
    if run_a.times.len() != run_b.times.len() {
        return Err(Error::Config(
            "perturbed runs produced different snapshot schedules".into(),
        ));
    }

    let eps = cfg.experiment.eps;
    let dx = cfg.grid.dx();
    let mut rows = Vec::new();
    for ((ta, fa), fb) in run_a.times.iter().zip(run_a.fields.iter()).zip(run_b.fields.iter()) {
        let gaj = gajewski_distance(fa, fb, eps)?;
        let vac_gap: Vec<f64> = (0..cfg.grid.cells())
            .map(|j| fa.vacancy_at(j) - fb.vacancy_at(j))
            .collect();
        let hm1 = hminus1_seminorm(&vac_gap, cfg.grid)?;
        let mut l2 = 0.0;
        for i in 0..model.n {
            for j in 0..cfg.grid.cells() {
                let d = fa.get(i, j) - fb.get(i, j);
                l2 += d * d * dx;
            }
        }
        rows.push(UniqueRow { t: *ta, gajewski: gaj, hminus1: hm1, l2_gap: l2.sqrt() });
    }

    let tol = 1e-9;
    let nonincreasing = |get: &dyn Fn(&UniqueRow) -> f64| -> bool {
        rows.windows(2).all(|w| get(&w[1]) <= get(&w[0]) + tol)
    };
    let gajewski_nonincreasing = nonincreasing(&|r| r.gajewski);
    let hminus1_nonincreasing = nonincreasing(&|r| r.hminus1);
    let final_l2_gap = rows.last().map(|r| r.l2_gap).unwrap_or(f64::NAN);
    let initial_gajewski = rows.first().map(|r| r.gajewski).unwrap_or(f64::NAN);
    let passed = gajewski_nonincreasing
        && hminus1_nonincreasing
        && final_l2_gap <= 1e-6
        && initial_gajewski == 0.0;

    output::write_unique_series(cfg, &rows)?;
    let summary = UniqueSummary {
        config: ConfigEcho::new(cfg),
        eps,
        initial_gajewski,
        final_l2_gap,
        gajewski_nonincreasing,
        hminus1_nonincreasing,
        passed,
    };
    output::write_summary(cfg, &summary)?;
    Ok(summary)
}

#[derive(Debug, Serialize)]
pub struct LatticeSummary {
    pub config: ConfigEcho,
    pub rows: Vec<DiffusionLimitRow>,
    pub errors_strictly_decrease: bool,
    pub min_order: f64,
    pub worst_mass_drift: f64,
    pub passed: bool,
}

/// Lattice diffusion-limit study against the continuum reference.
pub fn lattice_experiment(cfg: &RunConfig) -> Result<LatticeSummary> {
    let model = cfg.build_model()?;
    let initial = cfg.initial.clone();
    let species = cfg.species;
    let length = cfg.grid.length();
    let profile = move |i: usize, x: f64| -> f64 {
        match initial.profile {
            crate::config::Profile::Uniform => initial.mean[i],
            crate::config::Profile::Cosine { mode } => {
                initial.mean[i]
                    + initial.amplitude[i]
                        * (mode as f64 * std::f64::consts::PI * x / length).cos()
            }
        }
    };
    let _ = species;
    let rows = diffusion_limit_study(
        &model,
        &profile,
        length,
        cfg.experiment.t_final,
        &cfg.experiment.h_list,
        cfg.experiment.ref_cells,
        cfg.experiment.ref_tau,
        cfg.experiment.ref_picard_tol,
    )?;
    let errors_strictly_decrease = rows
        .windows(2)
        .all(|w| w[1].err_max < w[0].err_max && w[1].err_l2 < w[0].err_l2);
    let min_order = rows
        .iter()
        .filter_map(|r| r.order_estimate)
        .fold(f64::INFINITY, f64::min);
    let worst_mass_drift =
        rows.iter().map(|r| r.mass_drift).fold(0.0_f64, f64::max);
    let passed =
        errors_strictly_decrease && min_order >= 1.0 && worst_mass_drift <= 1e-10;
    output::write_lattice_table(cfg, &rows)?;
    let summary = LatticeSummary {
        config: ConfigEcho::new(cfg),
        rows,
        errors_strictly_decrease,
        min_order,
        worst_mass_drift,
        passed,
    };
    output::write_summary(cfg, &summary)?;
    Ok(summary)
}

#[derive(Debug, Serialize)]
pub struct PositivityRow {
    pub label: String,
    pub alpha: Option<f64>,
    pub min_vacancy: f64,
}

#[derive(Debug, Serialize)]
pub struct PositivitySummary {
    pub config: ConfigEcho,
    pub standard_min_vacancy: f64,
    pub sweep: Vec<PositivityRow>,
    pub control_min_vacancy: f64,
    pub passed: bool,
}

fn min_vacancy_over_run(
    model: &ModelSpec,
    cfg: &RunConfig,
    u0: &Field,
) -> Result<f64> {
    let trajectory = run_simulation(model, cfg.grid, u0, cfg.experiment.t_final, &cfg.scheme)?;
    let mut min = u0.min_vacancy();
    for rep in &trajectory.reports {
        min = min.min(rep.min_vacancy);
    }
    Ok(min)
}

/// Positivity probe: with a mobility whose log integral diverges at zero the
/// vacancy must stay strictly positive over space-time. The exponent sweep
/// and the linear-mobility control run are reported without assertion.
pub fn positivity_experiment(cfg: &RunConfig) -> Result<PositivitySummary> {
    let model = cfg.build_model()?;
    if !model.q.log_q_divergent_at_zero {
        return Err(Error::Config(format!(
            "positivity probe needs a mobility with divergent log integral at 0 \
             (e.g. vanishing-q:1); '{}' does not qualify",
            model.q.name
        )));
    }
    let u0 = cfg.build_initial_field()?;
    let standard_min_vacancy = min_vacancy_over_run(&model, cfg, &u0)?;

    let mut sweep = Vec::new();
    for &alpha in &cfg.experiment.alphas {
        let m = ModelSpec::by_name(&format!("vanishing-q:{alpha}"), cfg.species)?;
        let min = min_vacancy_over_run(&m, cfg, &u0)?;
        sweep.push(PositivityRow {
            label: m.q.name.clone(),
            alpha: Some(alpha),
            min_vacancy: min,
        });
    }
    let control = ModelSpec::by_name("ion-transport", cfg.species)?;
    let control_min_vacancy = min_vacancy_over_run(&control, cfg, &u0)?;

    let passed = standard_min_vacancy > 0.0;
    let summary = PositivitySummary {
        config: ConfigEcho::new(cfg),
        standard_min_vacancy,
        sweep,
        control_min_vacancy,
        passed,
    };
    output::write_summary(cfg, &summary)?;
    Ok(summary)
}

/// Dispatch on the configured kind; returns the process exit code.
pub fn run_configured(cfg: &RunConfig) -> Result<i32> {
    let passed = match cfg.experiment.kind {
        ExperimentKind::Run => {
            let s = run_experiment(cfg)?;
            println!("{}", serde_json::to_string_pretty(&s).expect("serializable summary"));
            s.passed
        }
        ExperimentKind::Decay => {
            let s = decay_experiment(cfg)?;
            println!("{}", serde_json::to_string_pretty(&s).expect("serializable summary"));
            s.passed
        }
        ExperimentKind::Unique => {
            let s = unique_experiment(cfg)?;
            println!("{}", serde_json::to_string_pretty(&s).expect("serializable summary"));
            s.passed
        }
        ExperimentKind::Lattice => {
            let s = lattice_experiment(cfg)?;
            println!("{}", serde_json::to_string_pretty(&s).expect("serializable summary"));
            s.passed
        }
        ExperimentKind::Positivity => {
            let s = positivity_experiment(cfg)?;
            println!("{}", serde_json::to_string_pretty(&s).expect("serializable summary"));
            s.passed
        }
    };
    Ok(if passed { 0 } else { 1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid1D;
    use crate::stepper::SchemeParams;
    use std::f64::consts::PI;

    #[test]
    fn steady_state_is_the_mean() {
        let grid = Grid1D::new(1.0, 64).unwrap();
        let f = Field::from_profile(grid, 2, |i, x| {
            [0.3, 0.2][i] + 0.1 * (PI * x).cos() * if i == 0 { 1.0 } else { -0.5 }
        })
        .unwrap();
        let s = steady_state(&f);
        assert!((s.u()[0] - 0.3).abs() < 1e-14);
        assert!((s.u()[1] - 0.2).abs() < 1e-14);
        assert!((s.vacancy() - 0.5).abs() < 1e-14);
        // uniform data is its own steady state (up to summation round-off)
        let uf = Field::uniform(grid, &s);
        for (a, b) in steady_state(&uf).u().iter().zip(s.u().iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn decay_fit_recovers_heat_rate() {
        // scalar ion transport IS the heat equation; the slowest Neumann
        // mode decays at pi^2
        let model = ModelSpec::by_name("ion-transport", 1).unwrap();
        let grid = Grid1D::new(1.0, 100).unwrap();
        let u0 = Field::from_profile(grid, 1, |_, x| 0.5 + 0.1 * (PI * x).cos()).unwrap();
        let mut params = SchemeParams::with_tau(5e-4);
        params.snapshot_every = 5;
        let traj = run_simulation(&model, grid, &u0, 0.2, &params).unwrap();
        let uinf = steady_state(&u0);
        let fit =
            decay_fit(&traj, &uinf, Component::Vacancy, &model, &FitParams::default()).unwrap();
        let pi2 = PI * PI;
        assert!(
            (fit.lambda_hat - pi2).abs() < 0.05 * pi2,
            "lambda {} vs {pi2}",
            fit.lambda_hat
        );
        assert!(fit.r_squared > 0.999);
        assert!(fit.envelope_ok);
        assert!(fit.predicted_lambda1.is_none());
        // species component decays at the same rate here
        let fit_u = decay_fit(&traj, &uinf, Component::Species(0), &model, &FitParams::default())
            .unwrap();
        assert!((fit_u.lambda_hat - pi2).abs() < 0.05 * pi2);
    }

    #[test]
    fn decay_fit_rejects_equilibrium_trajectory() {
        let model = ModelSpec::by_name("ion-transport", 1).unwrap();
        let grid = Grid1D::new(1.0, 16).unwrap();
        let u0 = Field::from_profile(grid, 1, |_, _| 0.4).unwrap();
        let params = SchemeParams::with_tau(1e-3);
        let traj = run_simulation(&model, grid, &u0, 2e-2, &params).unwrap();
        let uinf = steady_state(&u0);
        let out = decay_fit(&traj, &uinf, Component::Vacancy, &model, &FitParams::default());
        assert!(matches!(out, Err(Error::FitWindow(_))));
    }

    #[test]
    fn identical_seeds_give_identically_zero_distances() {
        let dir = std::env::temp_dir().join("xd-unique-same-seed");
        let text = format!(
            "[model]\nname = ion-transport\nspecies = 1\n\
             [grid]\ncells = 24\n\
             [initial]\nmean = 0.5\namplitude = 0.1\n\
             [scheme]\ntau = 1e-3\n\
             [experiment]\nkind = unique\nt_final = 5e-3\nseed = 3\n\
             tol_a = 1e-10\ntol_b = 1e-10\n\
             [output]\ndir = {}\n",
            dir.display()
        );
        let mut cfg = RunConfig::from_str(&text).unwrap();
        // force run B onto the same jitter stream as run A
        cfg.experiment.seed = 3;
        let model = cfg.build_model().unwrap();
        let u0 = cfg.build_initial_field().unwrap();
        let mut params = cfg.scheme.clone();
        params.picard_tol = 1e-10;
        params.guess_jitter = 1e-12;
        params.jitter_seed = 3;
        let a = run_simulation(&model, cfg.grid, &u0, 5e-3, &params).unwrap();
        let b = run_simulation(&model, cfg.grid, &u0, 5e-3, &params).unwrap();
        for (fa, fb) in a.fields.iter().zip(b.fields.iter()) {
            assert_eq!(
                gajewski_distance(fa, fb, 1e-6).unwrap(),
                0.0,
                "identical seeds must reproduce bitwise"
            );
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn decay_fit_predicted_rates_with_constants() {
        let model = ModelSpec::by_name("ion-transport", 1).unwrap();
        let grid = Grid1D::new(1.0, 50).unwrap();
        let u0 = Field::from_profile(grid, 1, |_, x| 0.5 + 0.1 * (PI * x).cos()).unwrap();
        let mut params = SchemeParams::with_tau(1e-3);
        params.snapshot_every = 2;
        let traj = run_simulation(&model, grid, &u0, 0.1, &params).unwrap();
        let uinf = steady_state(&u0);
        let fit = decay_fit(
            &traj,
            &uinf,
            Component::Vacancy,
            &model,
            &FitParams { window: (0.2, 1.0), cs: Some(0.05), cl: Some(1.0) },
        )
        .unwrap();
        // c0 = 2, q1 = 1: lambda1 = 2/(4 * 0.05) = 10
        assert!((fit.predicted_lambda1.unwrap() - 10.0).abs() < 1e-12);
        // q0 = 0 for the degenerate mobility: no lambda2 even with cl
        assert!(fit.predicted_lambda2.is_none());
    }
}
