//! CSV and JSON emission.
//!
//! All numbers go through the shortest-roundtrip float formatter, so a given
//! configuration (including its seed) produces byte-identical files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::entropy::StatePoint;
use crate::error::{Error, Result};
use crate::experiments::UniqueRow;
use crate::grid::{discrete_relative_entropy, dissipation_functionals};
use crate::lattice::DiffusionLimitRow;
use crate::model::ModelSpec;
use crate::stepper::Trajectory;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.display().to_string(), source }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(path))?;
    }
    std::fs::write(path, contents).map_err(io_err(path))
}

pub fn artifact_path(cfg: &RunConfig, suffix: &str) -> PathBuf {
    cfg.output.dir.join(format!("{}_{suffix}", cfg.output.prefix))
}

/// Snapshot table: `t,x,u_1..u_n,u_np1`, one row per (snapshot, cell).
pub fn write_snapshots(cfg: &RunConfig, trajectory: &Trajectory) -> Result<()> {
    let n = trajectory.fields[0].n_species();
    let mut out = String::from("t,x");
    for i in 1..=n {
        let _ = write!(out, ",u_{i}");
    }
    let _ = writeln!(out, ",u_{}", n + 1);
    for (t, field) in trajectory.times.iter().zip(trajectory.fields.iter()) {
        let grid = field.grid();
        for j in 0..grid.cells() {
            let _ = write!(out, "{t},{}", grid.cell_center(j));
            for i in 0..n {
                let _ = write!(out, ",{}", field.get(i, j));
            }
            let _ = writeln!(out, ",{}", field.vacancy_at(j));
        }
    }
    write_file(&artifact_path(cfg, "snapshots.csv"), &out)
}

/// Diagnostic series per snapshot:
/// `t,entropy,rel_entropy,dissipation_1,dissipation_2,mass_1..,dist_l2_1..`.
pub fn write_series(
    cfg: &RunConfig,
    trajectory: &Trajectory,
    uinf: &StatePoint,
    model: &ModelSpec,
) -> Result<()> {
    let n = trajectory.fields[0].n_species();
    let mut out = String::from("t,entropy,rel_entropy,dissipation_1,dissipation_2");
    for i in 1..=n {
        let _ = write!(out, ",mass_{i}");
    }
    for i in 1..=n + 1 {
        let _ = write!(out, ",dist_l2_{i}");
    }
    out.push('\n');
    for (t, field) in trajectory.times.iter().zip(trajectory.fields.iter()) {
        let d = dissipation_functionals(field, model);
        let rel = discrete_relative_entropy(field, uinf, model)?;
        let _ = write!(
            out,
            "{t},{},{rel},{},{}",
            d.entropy, d.grad_sqrt_u_term, d.grad_sqrt_q_term
        );
        for m in &d.masses {
            let _ = write!(out, ",{m}");
        }
        let dx = field.grid().dx();
        for i in 0..n {
            let mut sum = 0.0;
            for j in 0..field.grid().cells() {
                let diff = field.get(i, j) - uinf.u()[i];
                sum += diff * diff * dx;
            }
            let _ = write!(out, ",{}", sum.sqrt());
        }
        let mut sum = 0.0;
        for j in 0..field.grid().cells() {
            let diff = field.vacancy_at(j) - uinf.vacancy();
            sum += diff * diff * dx;
        }
        let _ = writeln!(out, ",{}", sum.sqrt());
    }
    write_file(&artifact_path(cfg, "series.csv"), &out)
}

/// Refinement table of the lattice study: `h,err_max,err_l2,order_estimate`
/// (the first row has no order).
pub fn write_lattice_table(cfg: &RunConfig, rows: &[DiffusionLimitRow]) -> Result<()> {
    let mut out = String::from("h,err_max,err_l2,order_estimate\n");
    for r in rows {
        let _ = write!(out, "{},{},{},", r.spacing, r.err_max, r.err_l2);
        match r.order_estimate {
            Some(o) => {
                let _ = writeln!(out, "{o}");
            }
            None => out.push('\n'),
        }
    }
    write_file(&artifact_path(cfg, "errors.csv"), &out)
}

/// Distance series of the uniqueness probe: `t,gajewski,hminus1,l2_gap`.
pub fn write_unique_series(cfg: &RunConfig, rows: &[UniqueRow]) -> Result<()> {
    let mut out = String::from("t,gajewski,hminus1,l2_gap\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.t, r.gajewski, r.hminus1, r.l2_gap);
    }
    write_file(&artifact_path(cfg, "distances.csv"), &out)
}

/// One JSON summary per run: config echo, constants, audit flags, results.
pub fn write_summary<S: Serialize>(cfg: &RunConfig, summary: &S) -> Result<()> {
    let json = serde_json::to_string_pretty(summary).expect("serializable summary");
    write_file(&artifact_path(cfg, "summary.json"), &json)
}

/// Convenience for tests and the CLI: read an artifact back.
pub fn read_artifact(cfg: &RunConfig, suffix: &str) -> Result<String> {
    let path = artifact_path(cfg, suffix);
    std::fs::read_to_string(&path).map_err(io_err(&path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;
    use crate::experiments::steady_state;
    use crate::model::ModelSpec;
    use crate::stepper::{run_simulation, SchemeParams};

    fn test_config(dir: &str) -> RunConfig {
        let text = format!(
            "[model]\nname = ion-transport\nspecies = 1\n\
             [grid]\ncells = 8\n\
             [initial]\nmean = 0.5\namplitude = 0.1\n\
             [experiment]\nt_final = 2e-3\n\
             [scheme]\ntau = 1e-3\n\
             [output]\ndir = {dir}\nprefix = t\n"
        );
        RunConfig::from_str(&text).unwrap()
    }

    #[test]
    fn snapshot_and_series_schema() {
        let dir = std::env::temp_dir().join("xd-output-test");
        let cfg = test_config(dir.to_str().unwrap());
        let model = ModelSpec::by_name("ion-transport", 1).unwrap();
        let u0 = cfg.build_initial_field().unwrap();
        let traj = run_simulation(&model, cfg.grid, &u0, 2e-3, &SchemeParams::with_tau(1e-3))
            .unwrap();
        let uinf = steady_state(&u0);
        write_snapshots(&cfg, &traj).unwrap();
        write_series(&cfg, &traj, &uinf, &model).unwrap();

        let snaps = read_artifact(&cfg, "snapshots.csv").unwrap();
        let mut lines = snaps.lines();
        assert_eq!(lines.next().unwrap(), "t,x,u_1,u_2");
        // row count: (snapshots) * cells
        assert_eq!(snaps.lines().count() - 1, traj.times.len() * 8);

        let series = read_artifact(&cfg, "series.csv").unwrap();
        assert_eq!(
            series.lines().next().unwrap(),
            "t,entropy,rel_entropy,dissipation_1,dissipation_2,mass_1,dist_l2_1,dist_l2_2"
        );
        // conservation column: mass_1 identical across rows
        let masses: Vec<&str> = series
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(5).unwrap())
            .collect();
        let first: f64 = masses[0].parse().unwrap();
        for m in &masses {
            let v: f64 = m.parse().unwrap();
            assert!((v - first).abs() <= 1e-12 * (1.0 + first.abs()));
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn determinism_byte_identical() {
        let dir = std::env::temp_dir().join("xd-output-det");
        let cfg = test_config(dir.to_str().unwrap());
        let model = ModelSpec::by_name("ion-transport", 1).unwrap();
        let u0 = cfg.build_initial_field().unwrap();
        let mut outputs = Vec::new();
        for _ in 0..2 {
            let traj =
                run_simulation(&model, cfg.grid, &u0, 2e-3, &cfg.scheme).unwrap();
            let uinf = steady_state(&u0);
            write_snapshots(&cfg, &traj).unwrap();
            write_series(&cfg, &traj, &uinf, &model).unwrap();
            outputs.push((
                read_artifact(&cfg, "snapshots.csv").unwrap(),
                read_artifact(&cfg, "series.csv").unwrap(),
            ));
        }
        assert_eq!(outputs[0], outputs[1]);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn empty_trajectory_gives_header_only_tables() {
        let dir = std::env::temp_dir().join("xd-output-empty");
        let mut cfg = test_config(dir.to_str().unwrap());
        cfg.output.prefix = "empty".into();
        write_lattice_table(&cfg, &[]).unwrap();
        let table = read_artifact(&cfg, "errors.csv").unwrap();
        assert_eq!(table, "h,err_max,err_l2,order_estimate\n");
        write_unique_series(&cfg, &[]).unwrap();
        assert_eq!(read_artifact(&cfg, "distances.csv").unwrap(), "t,gajewski,hminus1,l2_gap\n");
        std::fs::remove_dir_all(&dir).ok();
    }
}
