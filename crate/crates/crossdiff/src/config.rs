//! Run configuration: a flat sectioned key-value file.
//!
//! Sections are `[model]`, `[grid]`, `[initial]`, `[scheme]`, `[experiment]`
//! and `[output]`; keys are `name = value` with `#` comments. Unknown
//! sections or keys are errors, so typos fail loudly instead of silently
//! running defaults.
//!
//! ```text
//! [model]
//! name = ion-transport        # catalog name, see ModelSpec::by_name
//! species = 2
//!
//! [grid]
//! length = 1.0
//! cells = 200
//!
//! [initial]
//! profile = cosine            # cosine | uniform
//! mean = 0.25, 0.25           # per-species cell means
//! amplitude = -0.05, -0.05    # cosine amplitudes (zeros when omitted)
//! mode = 1                    # cosine wavenumber
//!
//! [scheme]
//! tau = 1e-4
//! regularization = off
//! picard_tol = 1e-10
//! picard_max = 200
//! newton_fallback = on
//! continuation_eta = off
//! entropy_tol = 1e-9
//! # tau_min = ...             # default tau / 1024
//!
//! [experiment]
//! kind = run                  # run | decay | unique | lattice | positivity
//! t_final = 0.1
//! seed = 42
//! # decay:       fit_window = 0.2, component = vacancy | species:<k>,
//! #              cs = ..., cl = ...         (optional Sobolev constants)
//! # unique:      eps = 1e-6, tol_a = 1e-10, tol_b = 1e-8
//! # lattice:     h_list = 0.04,0.02,0.01,0.005, ref_cells = 1000,
//! #              ref_tau = 1e-6, ref_picard_tol = 3e-9
//! # positivity:  alphas = 0.5,1,2
//!
//! [output]
//! dir = out
//! prefix = run
//! snapshot_every = 1
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::experiments::Component;
use crate::grid::{Field, Grid1D};
use crate::linalg::SquareMat;
use crate::model::{ModelSpec, ReactionSpec};
use crate::stepper::SchemeParams;

const SECTIONS: &[&str] = &["model", "grid", "initial", "scheme", "experiment", "output"];

/// Parsed but untyped config: remaining keys after extraction are errors.
struct Reader {
    entries: BTreeMap<(String, String), String>,
}

impl Reader {
    fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                let name = name.trim().to_lowercase();
                if !SECTIONS.contains(&name.as_str()) {
                    return Err(Error::Config(format!(
                        "line {}: unknown section [{name}]; known: {}",
                        lineno + 1,
                        SECTIONS.join(", ")
                    )));
                }
                section = name;
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected 'key = value', got '{line}'",
                    lineno + 1
                )));
            };
            if section.is_empty() {
                return Err(Error::Config(format!(
                    "line {}: key '{}' before any [section]",
                    lineno + 1,
                    key.trim()
                )));
            }
            let key = key.trim().to_lowercase();
            let prev = entries
                .insert((section.clone(), key.clone()), value.trim().to_string());
            if prev.is_some() {
                return Err(Error::Config(format!(
                    "line {}: duplicate key '{key}' in [{section}]",
                    lineno + 1
                )));
            }
        }
        Ok(Self { entries })
    }

    fn take(&mut self, section: &str, key: &str) -> Option<String> {
        self.entries.remove(&(section.to_string(), key.to_string()))
    }

    fn finish(self) -> Result<()> {
        if let Some(((section, key), _)) = self.entries.into_iter().next() {
            return Err(Error::Config(format!("unknown key '{key}' in [{section}]")));
        }
        Ok(())
    }
}

fn parse_f64(section: &str, key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .map_err(|_| Error::Config(format!("[{section}] {key}: '{v}' is not a number")))
}

fn parse_usize(section: &str, key: &str, v: &str) -> Result<usize> {
    v.parse::<usize>()
        .map_err(|_| Error::Config(format!("[{section}] {key}: '{v}' is not a count")))
}

fn parse_bool(section: &str, key: &str, v: &str) -> Result<bool> {
    match v.to_lowercase().as_str() {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("[{section}] {key}: '{v}' is not on/off"))),
    }
}

fn parse_list(section: &str, key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|s| parse_f64(section, key, s.trim()))
        .collect()
}

/// Named initial profiles.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub enum Profile {
    Uniform,
    Cosine { mode: usize },
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct InitialSpec {
    pub profile: Profile,
    pub mean: Vec<f64>,
    pub amplitude: Vec<f64>,
}

impl InitialSpec {
    pub fn build(&self, grid: Grid1D, n: usize) -> Result<Field> {
        if self.mean.len() != n || self.amplitude.len() != n {
            return Err(Error::Config(format!(
                "initial data lists {} means and {} amplitudes for {n} species",
                self.mean.len(),
                self.amplitude.len()
            )));
        }
        let length = grid.length();
        match self.profile {
            Profile::Uniform => Field::from_profile(grid, n, |i, _| self.mean[i]),
            Profile::Cosine { mode } => Field::from_profile(grid, n, |i, x| {
                self.mean[i]
                    + self.amplitude[i]
                        * (mode as f64 * std::f64::consts::PI * x / length).cos()
            }),
        }
        .map_err(|e| {
            Error::Config(format!("initial data leaves the admissible region: {e}"))
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub enum ExperimentKind {
    Run,
    Decay,
    Unique,
    Lattice,
    Positivity,
}

impl ExperimentKind {
    pub fn parse(v: &str) -> Result<Self> {
        match v {
            "run" => Ok(Self::Run),
            "decay" => Ok(Self::Decay),
            "unique" => Ok(Self::Unique),
            "lattice" => Ok(Self::Lattice),
            "positivity" => Ok(Self::Positivity),
            _ => Err(Error::Config(format!(
                "unknown experiment kind '{v}' (run|decay|unique|lattice|positivity)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Run => "run",
            Self::Decay => "decay",
            Self::Unique => "unique",
            Self::Lattice => "lattice",
            Self::Positivity => "positivity",
        }
    }
}

/// Experiment-specific knobs; irrelevant ones keep their defaults.
#[derive(Clone, Debug, serde::Serialize)]
pub struct ExperimentOpts {
    pub kind: ExperimentKind,
    pub t_final: f64,
    pub seed: u64,
    /// Decay: fraction of the horizon where the fit window starts.
    pub fit_window: f64,
    pub component: Component,
    pub cs: Option<f64>,
    pub cl: Option<f64>,
    /// Uniqueness: Gajewski regularization and the two inner tolerances.
    pub eps: f64,
    pub tol_a: f64,
    pub tol_b: f64,
    /// Lattice study: spacings and the continuum reference controls.
    pub h_list: Vec<f64>,
    pub ref_cells: usize,
    pub ref_tau: f64,
    pub ref_picard_tol: f64,
    /// Positivity probe: the mobility exponents to sweep.
    pub alphas: Vec<f64>,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub prefix: String,
    pub snapshot_every: usize,
}

/// Fully resolved run configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub model_name: String,
    pub species: usize,
    pub reaction: Option<(Vec<Vec<f64>>, f64)>,
    pub grid: Grid1D,
    pub initial: InitialSpec,
    pub scheme: SchemeParams,
    pub experiment: ExperimentOpts,
    pub output: OutputSpec,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_str(&text)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn from_str(text: &str) -> Result<Self> {
        let mut r = Reader::parse(text)?;

        let model_name = r
            .take("model", "name")
            .ok_or_else(|| Error::Config("[model] name is required".into()))?;
        let species = match r.take("model", "species") {
            Some(v) => parse_usize("model", "species", &v)?,
            None => 2,
        };
        let reaction = match r.take("model", "reaction_s") {
            Some(v) => {
                let rows: Vec<Vec<f64>> = v
                    .split(';')
                    .map(|row| parse_list("model", "reaction_s", row))
                    .collect::<Result<_>>()?;
                let cf = match r.take("model", "reaction_cf") {
                    Some(c) => parse_f64("model", "reaction_cf", &c)?,
                    None => {
                        return Err(Error::Config(
                            "[model] reaction_cf is required with reaction_s".into(),
                        ))
                    }
                };
                Some((rows, cf))
            }
            None => {
                if r.take("model", "reaction_cf").is_some() {
                    return Err(Error::Config(
                        "[model] reaction_cf given without reaction_s".into(),
                    ));
                }
                None
            }
        };

        let length = match r.take("grid", "length") {
            Some(v) => parse_f64("grid", "length", &v)?,
            None => 1.0,
        };
        let cells = match r.take("grid", "cells") {
            Some(v) => parse_usize("grid", "cells", &v)?,
            None => 200,
        };
        let grid = Grid1D::new(length, cells)?;

        let profile = match r.take("initial", "profile").as_deref() {
            None | Some("cosine") => Profile::Cosine {
                mode: match r.take("initial", "mode") {
                    Some(v) => parse_usize("initial", "mode", &v)?,
                    None => 1,
                },
            },
            Some("uniform") => Profile::Uniform,
            Some(other) => {
                return Err(Error::Config(format!(
                    "[initial] profile: unknown profile '{other}' (cosine|uniform)"
                )))
            }
        };
        let mean = match r.take("initial", "mean") {
            Some(v) => parse_list("initial", "mean", &v)?,
            None => return Err(Error::Config("[initial] mean is required".into())),
        };
        let amplitude = match r.take("initial", "amplitude") {
            Some(v) => parse_list("initial", "amplitude", &v)?,
            None => vec![0.0; mean.len()],
        };
        let initial = InitialSpec { profile, mean, amplitude };

        let tau = match r.take("scheme", "tau") {
            Some(v) => parse_f64("scheme", "tau", &v)?,
            None => 1e-4,
        };
        if !(tau > 0.0) {
            return Err(Error::Config(format!("[scheme] tau must be positive (got {tau})")));
        }
        let mut scheme = SchemeParams::with_tau(tau);
        if let Some(v) = r.take("scheme", "regularization") {
            scheme.reg_enabled = parse_bool("scheme", "regularization", &v)?;
        }
        if let Some(v) = r.take("scheme", "picard_tol") {
            scheme.picard_tol = parse_f64("scheme", "picard_tol", &v)?;
        }
        if let Some(v) = r.take("scheme", "picard_max") {
            scheme.picard_max = parse_usize("scheme", "picard_max", &v)?;
        }
        if let Some(v) = r.take("scheme", "newton_fallback") {
            scheme.newton_fallback = parse_bool("scheme", "newton_fallback", &v)?;
        }
        if let Some(v) = r.take("scheme", "continuation_eta") {
            scheme.continuation_eta = parse_bool("scheme", "continuation_eta", &v)?;
        }
        if let Some(v) = r.take("scheme", "tau_min") {
            scheme.tau_min = parse_f64("scheme", "tau_min", &v)?;
        }
        if let Some(v) = r.take("scheme", "entropy_tol") {
            scheme.entropy_tol = parse_f64("scheme", "entropy_tol", &v)?;
        }
        if !(scheme.picard_tol > 0.0) {
            return Err(Error::Config("[scheme] picard_tol must be positive".into()));
        }
        if !(scheme.tau_min > 0.0 && scheme.tau_min <= scheme.tau) {
            return Err(Error::Config(
                "[scheme] needs 0 < tau_min <= tau".into(),
            ));
        }

        let kind = match r.take("experiment", "kind") {
            Some(v) => ExperimentKind::parse(&v)?,
            None => ExperimentKind::Run,
        };
        let t_final = match r.take("experiment", "t_final") {
            Some(v) => parse_f64("experiment", "t_final", &v)?,
            None => 0.1,
        };
        let seed = match r.take("experiment", "seed") {
            Some(v) => v
                .parse::<u64>()
                .map_err(|_| Error::Config(format!("[experiment] seed: '{v}' is not a seed")))?,
            None => 0,
        };
        let fit_window = match r.take("experiment", "fit_window") {
            Some(v) => parse_f64("experiment", "fit_window", &v)?,
            None => 0.2,
        };
        let component = match r.take("experiment", "component").as_deref() {
            None | Some("vacancy") => Component::Vacancy,
            Some(other) => match other.strip_prefix("species:") {
                Some(idx) => Component::Species(parse_usize("experiment", "component", idx)?),
                None => {
                    return Err(Error::Config(format!(
                        "[experiment] component: '{other}' (vacancy|species:<k>)"
                    )))
                }
            },
        };
        let cs = r.take("experiment", "cs").map(|v| parse_f64("experiment", "cs", &v)).transpose()?;
        let cl = r.take("experiment", "cl").map(|v| parse_f64("experiment", "cl", &v)).transpose()?;
        let eps = match r.take("experiment", "eps") {
            Some(v) => parse_f64("experiment", "eps", &v)?,
            None => 1e-6,
        };
        let tol_a = match r.take("experiment", "tol_a") {
            Some(v) => parse_f64("experiment", "tol_a", &v)?,
            None => 1e-10,
        };
        let tol_b = match r.take("experiment", "tol_b") {
            Some(v) => parse_f64("experiment", "tol_b", &v)?,
            None => 1e-8,
        };
        let h_list = match r.take("experiment", "h_list") {
            Some(v) => parse_list("experiment", "h_list", &v)?,
            None => vec![0.04, 0.02, 0.01, 0.005],
        };
        let ref_cells = match r.take("experiment", "ref_cells") {
            Some(v) => parse_usize("experiment", "ref_cells", &v)?,
            None => 1000,
        };
        let ref_tau = match r.take("experiment", "ref_tau") {
            Some(v) => parse_f64("experiment", "ref_tau", &v)?,
            None => 1e-6,
        };
        let ref_picard_tol = match r.take("experiment", "ref_picard_tol") {
            Some(v) => parse_f64("experiment", "ref_picard_tol", &v)?,
            None => 3e-9,
        };
        let alphas = match r.take("experiment", "alphas") {
            Some(v) => parse_list("experiment", "alphas", &v)?,
            None => vec![0.5, 1.0, 2.0],
        };
        let experiment = ExperimentOpts {
            kind,
            t_final,
            seed,
            fit_window,
            component,
            cs,
            cl,
            eps,
            tol_a,
            tol_b,
            h_list,
            ref_cells,
            ref_tau,
            ref_picard_tol,
            alphas,
        };

        let output = OutputSpec {
            dir: PathBuf::from(r.take("output", "dir").unwrap_or_else(|| "out".into())),
            prefix: r.take("output", "prefix").unwrap_or_else(|| kind.name().into()),
            snapshot_every: match r.take("output", "snapshot_every") {
                Some(v) => parse_usize("output", "snapshot_every", &v)?.max(1),
                None => 1,
            },
        };
        scheme.snapshot_every = output.snapshot_every;
        scheme.jitter_seed = seed;

        r.finish()?;
        Ok(Self {
            model_name,
            species,
            reaction,
            grid,
            initial,
            scheme,
            experiment,
            output,
        })
    }

    pub fn build_model(&self) -> Result<ModelSpec> {
        let mut model = ModelSpec::by_name(&self.model_name, self.species)?;
        if let Some((rows, cf)) = &self.reaction {
            if rows.len() != self.species || rows.iter().any(|r| r.len() != self.species) {
                return Err(Error::Config(format!(
                    "[model] reaction_s must be a {0}x{0} matrix",
                    self.species
                )));
            }
            let mut s = SquareMat::zeros(self.species);
            for (i, row) in rows.iter().enumerate() {
                for (j, &v) in row.iter().enumerate() {
                    s.set(i, j, v);
                }
            }
            model = model.with_reaction(ReactionSpec::new(s, *cf)?)?;
        }
        Ok(model)
    }

    pub fn build_initial_field(&self) -> Result<Field> {
        self.initial.build(self.grid, self.species)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"
[model]
name = ion-transport
species = 2

[grid]
length = 1.0
cells = 64        # trailing comment

[initial]
profile = cosine
mean = 0.25, 0.25
amplitude = -0.05, -0.05

[scheme]
tau = 1e-3

[experiment]
kind = run
t_final = 0.01
seed = 7

[output]
dir = /tmp/xd-test
prefix = demo
snapshot_every = 2
"#;

    #[test]
    fn parses_a_complete_config() {
        let cfg = RunConfig::from_str(GOOD).unwrap();
        assert_eq!(cfg.model_name, "ion-transport");
        assert_eq!(cfg.species, 2);
        assert_eq!(cfg.grid.cells(), 64);
        assert_eq!(cfg.scheme.tau, 1e-3);
        assert_eq!(cfg.scheme.snapshot_every, 2);
        assert_eq!(cfg.experiment.kind, ExperimentKind::Run);
        assert_eq!(cfg.experiment.seed, 7);
        let model = cfg.build_model().unwrap();
        assert_eq!(model.n, 2);
        let f = cfg.build_initial_field().unwrap();
        assert_eq!(f.grid().cells(), 64);
        assert!((f.get(0, 0) - (0.25 - 0.05 * (std::f64::consts::PI * f.grid().cell_center(0)).cos())).abs() < 1e-12);
    }

    #[test]
    fn unknown_key_is_an_error() {
        let bad = GOOD.replace("snapshot_every = 2", "snapshotevery = 2");
        let err = RunConfig::from_str(&bad).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("snapshotevery"), "{err}");
    }

    #[test]
    fn unknown_section_is_an_error() {
        let bad = format!("{GOOD}\n[plotting]\nstyle = fancy\n");
        assert!(RunConfig::from_str(&bad).is_err());
    }

    #[test]
    fn duplicate_key_is_an_error() {
        let bad = format!("{GOOD}\n[scheme]\ntau = 2e-3\n");
        assert!(RunConfig::from_str(&bad).is_err());
    }

    #[test]
    fn inadmissible_initial_data_is_an_error() {
        let bad = GOOD.replace("mean = 0.25, 0.25", "mean = 0.7, 0.7");
        let cfg = RunConfig::from_str(&bad).unwrap();
        assert!(cfg.build_initial_field().is_err());
    }

    #[test]
    fn reaction_needs_both_keys() {
        let bad = GOOD.replace("species = 2", "species = 2\nreaction_cf = 1.0");
        assert!(RunConfig::from_str(&bad).is_err());
        let good = GOOD.replace(
            "species = 2",
            "species = 2\nreaction_s = 1, 0.5; 0.5, 1\nreaction_cf = 1.0",
        );
        let cfg = RunConfig::from_str(&good).unwrap();
        let model = cfg.build_model().unwrap();
        assert!(model.reaction.is_some());
    }

    #[test]
    fn defaults_fill_in() {
        let minimal = "[model]\nname = ion-transport\n[initial]\nmean = 0.3, 0.3\n";
        let cfg = RunConfig::from_str(minimal).unwrap();
        assert_eq!(cfg.species, 2);
        assert_eq!(cfg.grid.cells(), 200);
        assert_eq!(cfg.scheme.tau, 1e-4);
        assert_eq!(cfg.experiment.kind, ExperimentKind::Run);
        assert_eq!(cfg.initial.amplitude, vec![0.0, 0.0]);
    }
}
