//! Model configuration: the validated in-memory [`ModelConfig`], its TOML file
//! schema, and the built-in presets.
//!
//! File schema (all per-group arrays have one entry per group, in order):
//!
//! ```toml
//! horizon = 80.0            # T
//! dt = 0.016                # Euler step
//! contact = [[1.0]]         # K x K matrix w(k, l) in [0, 1]
//!
//! [solver]                  # optional, defaults shown
//! epsilon = 0.1
//! max_iterations = 500
//! damping = 1.0
//! awareness = false
//!
//! [groups]
//! names = ["population"]    # optional
//! mass = [1.0]
//! beta = [0.4]
//! gamma = [0.14285714285714285]
//! kappa = [0.005]
//! c_lambda = [1.0]
//! c_nu = [0.001]
//! c_I = [1.0]
//! c_pS = [0.0]              # optional, default 0
//! c_pI = [0.0]              # optional, default 0
//! initial = [[0.99, 0.01, 0.0]]
//!
//! [guidelines]              # each of S, I, R is a scalar (all groups),
//! S = 0.9                   # a per-group array, or per-group arrays with
//! I = 0.9                   # one value per grid point
//! R = 0.9
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{MfgError, Result};
use crate::model::{ContactMatrix, GroupParams, Guidelines, HealthState, TimeGrid};
use crate::solver::SolverSettings;

const TABLE1: &str = include_str!("../presets/table1.toml");
const TABLE2: &str = include_str!("../presets/table2.toml");

pub const PRESET_NAMES: [&str; 2] = ["table1", "table2"];

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub names: Vec<String>,
    pub groups: Vec<GroupParams>,
    pub guidelines: Guidelines,
    pub contact: ContactMatrix,
    pub initial: Vec<[f64; 3]>,
    pub grid: TimeGrid,
    pub solver: SolverSettings,
}

impl ModelConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let text = match name {
            "table1" => TABLE1,
            "table2" => TABLE2,
            other => {
                return Err(MfgError::Config(format!(
                    "unknown preset {other:?}, expected one of {PRESET_NAMES:?}"
                )))
            }
        };
        Self::from_toml_str(text, Path::new(name))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, path)
    }

    /// Parses and validates. `origin` is only used in error messages.
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| MfgError::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        let cfg = file.into_config()?;
        for w in cfg.validate()? {
            log::warn!("{}: {w}", origin.display());
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(&ConfigFile::from_config(self))
            .map_err(|e| MfgError::Internal(format!("config serialization failed: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }

    /// Hex SHA-256 of the canonical TOML serialization.
    pub fn content_hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml_string()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn masses(&self) -> Vec<f64> {
        self.groups.iter().map(|g| g.mass).collect()
    }

    /// Checks every invariant. Hard violations are errors; soft ones
    /// (regularity, awareness-vs-infection cost) come back as warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let k = self.groups.len();
        if k == 0 {
            return Err(MfgError::Validation(
                "at least one group is required".into(),
            ));
        }
        if self.names.len() != k {
            return Err(MfgError::Config(format!(
                "{} names for {k} groups",
                self.names.len()
            )));
        }
        for (i, g) in self.groups.iter().enumerate() {
            g.validate(i)?;
        }
        let total: f64 = self.masses().iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(MfgError::Validation(format!(
                "group masses sum to {total}, expected 1"
            )));
        }
        if self.contact.n_groups() != k {
            return Err(MfgError::Config(format!(
                "contact matrix is {0}x{0} but there are {k} groups",
                self.contact.n_groups()
            )));
        }
        if self.guidelines.n_groups() != k {
            return Err(MfgError::Config(format!(
                "guidelines cover {} groups but there are {k}",
                self.guidelines.n_groups()
            )));
        }
        self.guidelines.validate(&self.grid)?;
        if self.initial.len() != k {
            return Err(MfgError::Config(format!(
                "{} initial distributions for {k} groups",
                self.initial.len()
            )));
        }
        for (i, pi) in self.initial.iter().enumerate() {
            if pi.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(MfgError::Validation(format!(
                    "initial distribution of group {i} has entries outside [0, 1]: {pi:?}"
                )));
            }
            let s: f64 = pi.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(MfgError::Validation(format!(
                    "initial distribution of group {i} sums to {s}, expected 1"
                )));
            }
        }
        self.solver.validate()?;

        let mut warnings = Vec::new();
        for g in self.irregular_groups() {
            warnings.push(format!(
                "group {g} has no contact with an initially infected group; \
                 the aggregate may vanish"
            ));
        }
        if self.solver.awareness_enabled {
            for (i, g) in self.groups.iter().enumerate() {
                if g.c_aware_s >= g.c_inf {
                    warnings.push(format!(
                        "group {i}: c_pS = {} is not below c_I = {}; \
                         the one-jump vaccination structure is not guaranteed",
                        g.c_aware_s, g.c_inf
                    ));
                }
            }
        }
        Ok(warnings)
    }

    /// Groups `k` with no `l` such that `w(k, l) > 0` and `pi0^l(I) > 0`.
    pub fn irregular_groups(&self) -> Vec<usize> {
        let k = self.groups.len();
        (0..k)
            .filter(|&g| !(0..k).any(|l| self.contact.get(g, l) > 0.0 && self.initial[l][1] > 0.0))
            .collect()
    }

    pub fn is_regular(&self) -> bool {
        self.irregular_groups().is_empty()
    }

    /// Sets `c_pS = c_pI = cp` in every group and switches the awareness
    /// extension on.
    pub fn set_awareness(&mut self, cp: f64) {
        for g in &mut self.groups {
            g.c_aware_s = cp;
            g.c_aware_i = cp;
        }
        self.solver.awareness_enabled = true;
    }

    pub fn set_guideline(&mut self, state: HealthState, value: f64) {
        self.guidelines.set_constant(state, value);
    }

    /// Uniform vaccination cost for every group.
    pub fn set_vaccination_cost(&mut self, c_nu: f64) {
        for g in &mut self.groups {
            g.c_nu = c_nu;
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    horizon: f64,
    dt: f64,
    contact: Vec<Vec<f64>>,
    #[serde(default)]
    solver: SolverFile,
    groups: GroupsFile,
    guidelines: GuidelinesFile,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SolverFile {
    epsilon: f64,
    max_iterations: usize,
    damping: f64,
    awareness: bool,
}

impl Default for SolverFile {
    fn default() -> Self {
        let s = SolverSettings::default();
        Self {
            epsilon: s.epsilon,
            max_iterations: s.max_iterations,
            damping: s.damping,
            awareness: s.awareness_enabled,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupsFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    names: Option<Vec<String>>,
    mass: Vec<f64>,
    beta: Vec<f64>,
    gamma: Vec<f64>,
    kappa: Vec<f64>,
    c_lambda: Vec<f64>,
    c_nu: Vec<f64>,
    #[serde(rename = "c_I")]
    c_inf: Vec<f64>,
    #[serde(rename = "c_pS", default)]
    c_aware_s: Option<Vec<f64>>,
    #[serde(rename = "c_pI", default)]
    c_aware_i: Option<Vec<f64>>,
    initial: Vec<[f64; 3]>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GuidelinesFile {
    #[serde(rename = "S")]
    s: GuidelineSpec,
    #[serde(rename = "I")]
    i: GuidelineSpec,
    #[serde(rename = "R")]
    r: GuidelineSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum GuidelineSpec {
    Scalar(f64),
    PerGroup(Vec<f64>),
    Series(Vec<Vec<f64>>),
}

impl GuidelineSpec {
    fn expand(&self, k: usize, n_points: usize, state: HealthState) -> Result<Vec<Vec<f64>>> {
        match self {
            GuidelineSpec::Scalar(v) => Ok(vec![vec![*v; n_points]; k]),
            GuidelineSpec::PerGroup(vs) if vs.len() == k => {
                Ok(vs.iter().map(|v| vec![*v; n_points]).collect())
            }
            GuidelineSpec::Series(rows) if rows.len() == k => Ok(rows.clone()),
            _ => Err(MfgError::Config(format!(
                "guideline {state} must be a scalar, {k} values, or {k} series of {n_points} values"
            ))),
        }
    }

    fn compress(series: Vec<&[f64]>) -> Self {
        let constant = |s: &[f64]| s.iter().all(|v| *v == s[0]);
        if series.iter().all(|s| constant(s)) {
            let firsts: Vec<f64> = series.iter().map(|s| s[0]).collect();
            if firsts.iter().all(|v| *v == firsts[0]) {
                GuidelineSpec::Scalar(firsts[0])
            } else {
                GuidelineSpec::PerGroup(firsts)
            }
        } else {
            GuidelineSpec::Series(series.into_iter().map(|s| s.to_vec()).collect())
        }
    }
}

fn per_group(name: &str, v: Vec<f64>, k: usize) -> Result<Vec<f64>> {
    if v.len() == k {
        Ok(v)
    } else {
        Err(MfgError::Config(format!(
            "groups.{name} has {} entries, expected {k}",
            v.len()
        )))
    }
}

impl ConfigFile {
    fn into_config(self) -> Result<ModelConfig> {
        let grid = TimeGrid::new(self.horizon, self.dt)?;
        let g = self.groups;
        let k = g.mass.len();
        if k == 0 {
            return Err(MfgError::Validation(
                "at least one group is required".into(),
            ));
        }
        let names = match g.names {
            Some(n) if n.len() == k => n,
            Some(n) => {
                return Err(MfgError::Config(format!(
                    "groups.names has {} entries, expected {k}",
                    n.len()
                )))
            }
            None => (0..k).map(|i| format!("group{i}")).collect(),
        };
        let beta = per_group("beta", g.beta, k)?;
        let gamma = per_group("gamma", g.gamma, k)?;
        let kappa = per_group("kappa", g.kappa, k)?;
        let c_lambda = per_group("c_lambda", g.c_lambda, k)?;
        let c_nu = per_group("c_nu", g.c_nu, k)?;
        let c_inf = per_group("c_I", g.c_inf, k)?;
        let c_aware_s = per_group("c_pS", g.c_aware_s.unwrap_or_else(|| vec![0.0; k]), k)?;
        let c_aware_i = per_group("c_pI", g.c_aware_i.unwrap_or_else(|| vec![0.0; k]), k)?;
        if g.initial.len() != k {
            return Err(MfgError::Config(format!(
                "groups.initial has {} entries, expected {k}",
                g.initial.len()
            )));
        }
        let groups = (0..k)
            .map(|i| GroupParams {
                beta: beta[i],
                gamma: gamma[i],
                kappa: kappa[i],
                c_lambda: c_lambda[i],
                c_nu: c_nu[i],
                c_inf: c_inf[i],
                c_aware_s: c_aware_s[i],
                c_aware_i: c_aware_i[i],
                mass: g.mass[i],
            })
            .collect();

        let n_points = grid.n_points();
        let s = self.guidelines.s.expand(k, n_points, HealthState::S)?;
        let i = self.guidelines.i.expand(k, n_points, HealthState::I)?;
        let r = self.guidelines.r.expand(k, n_points, HealthState::R)?;
        let levels = s
            .into_iter()
            .zip(i)
            .zip(r)
            .map(|((s, i), r)| [s, i, r])
            .collect();
        let guidelines = Guidelines::from_series(levels, &grid)?;
        let contact = ContactMatrix::from_rows(&self.contact)?;
        let solver = SolverSettings {
            epsilon: self.solver.epsilon,
            max_iterations: self.solver.max_iterations,
            damping: self.solver.damping,
            awareness_enabled: self.solver.awareness,
        };
        let cfg = ModelConfig {
            names,
            groups,
            guidelines,
            contact,
            initial: g.initial,
            grid,
            solver,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn from_config(cfg: &ModelConfig) -> Self {
        let col = |f: fn(&GroupParams) -> f64| cfg.groups.iter().map(f).collect::<Vec<_>>();
        let k = cfg.n_groups();
        let spec = |state| {
            GuidelineSpec::compress((0..k).map(|g| cfg.guidelines.series(g, state)).collect())
        };
        ConfigFile {
            horizon: cfg.grid.horizon(),
            dt: cfg.grid.dt(),
            contact: cfg.contact.rows(),
            solver: SolverFile {
                epsilon: cfg.solver.epsilon,
                max_iterations: cfg.solver.max_iterations,
                damping: cfg.solver.damping,
                awareness: cfg.solver.awareness_enabled,
            },
            groups: GroupsFile {
                names: Some(cfg.names.clone()),
                mass: col(|g| g.mass),
                beta: col(|g| g.beta),
                gamma: col(|g| g.gamma),
                kappa: col(|g| g.kappa),
                c_lambda: col(|g| g.c_lambda),
                c_nu: col(|g| g.c_nu),
                c_inf: col(|g| g.c_inf),
                c_aware_s: Some(col(|g| g.c_aware_s)),
                c_aware_i: Some(col(|g| g.c_aware_i)),
                initial: cfg.initial.clone(),
            },
            guidelines: GuidelinesFile {
                s: spec(HealthState::S),
                i: spec(HealthState::I),
                r: spec(HealthState::R),
            },
        }
    }
}
