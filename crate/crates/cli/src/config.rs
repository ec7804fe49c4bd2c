//! Experiment configuration files (TOML).

use std::path::Path;

use qthermostat::effective_models::{AmplitudeProvider, ProviderKind, ProviderOptions};
use qthermostat::exact_scatter::TOL_U;
use qthermostat::linalg::{ComplexMatrix, C64};
use qthermostat::model::{build_two_qubit, InternalModel, ModelOptions, TwoQubitParams};
use qthermostat::reservoir::Reservoir;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Provider used by single-provider commands (`amplitudes`).
    #[serde(default = "default_provider")]
    pub model: ProviderKind,
    /// Providers compared by the sweep commands.
    #[serde(default = "default_providers")]
    pub providers: Vec<ProviderKind>,
    #[serde(default)]
    pub allow_broken_time_reversal: bool,
    pub hamiltonian: HamiltonianConfig,
    #[serde(default)]
    pub reservoir: ReservoirConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition: Option<TransitionConfig>,
    #[serde(default)]
    pub thermalize: ThermalizeConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitudes: Option<AmplitudesConfig>,
}

fn default_provider() -> ProviderKind {
    ProviderKind::Exact
}

fn default_providers() -> Vec<ProviderKind> {
    vec![ProviderKind::Exact, ProviderKind::Wvo, ProviderKind::Rit]
}

/// Either the two-qubit parameters, or `h0_diag` + `dim_s` + `h_us`, or
/// `unit_levels` + `system_levels` + `h_us`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianConfig {
    pub mass: f64,
    pub length: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_u: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j_x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j_y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h0_diag: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim_s: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit_levels: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_levels: Option<Vec<f64>>,
    /// Real part of the interaction, row-major.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_us: Option<Vec<Vec<f64>>>,
    /// Imaginary part; needs `allow_broken_time_reversal = true`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_us_imag: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReservoirConfig {
    pub t_kin: f64,
    pub t_int: f64,
}

impl Default for ReservoirConfig {
    fn default() -> Self {
        Self { t_kin: 1.0, t_int: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    KineticEnergy,
    P0,
    /// Common temperature of both reservoir degrees of freedom.
    Temperature,
    TKin,
}

impl SweepVariable {
    pub fn column(self) -> &'static str {
        match self {
            Self::KineticEnergy => "kinetic_energy",
            Self::P0 => "p0",
            Self::Temperature => "T",
            Self::TKin => "T_kin",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    #[default]
    Linear,
    Log,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub variable: SweepVariable,
    /// `[start, stop]`, inclusive.
    pub range: [f64; 2],
    pub steps: usize,
    #[serde(default)]
    pub scale: Scale,
}

impl SweepConfig {
    pub fn points(&self) -> Vec<f64> {
        let [a, b] = self.range;
        if self.steps == 1 {
            return vec![a];
        }
        let n = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|i| {
                let f = i as f64 / n;
                match self.scale {
                    Scale::Linear => a + (b - a) * f,
                    Scale::Log => (a.ln() + (b.ln() - a.ln()) * f).exp(),
                }
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub trajectories: usize,
    pub collisions: usize,
    pub burn_in_fraction: f64,
    pub unitarity_tol: f64,
    pub shift_rit: bool,
    /// Worker threads, 0 for the default pool.
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            trajectories: 500,
            collisions: 2000,
            burn_in_fraction: 0.5,
            unitarity_tol: TOL_U,
            shift_rit: true,
            threads: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Standard output when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default)]
    pub format: Format,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionConfig {
    pub from: String,
    pub to: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalizeConfig {
    /// `J_y` values for extra rit-packet columns (two-qubit models only).
    #[serde(default)]
    pub packet_j_y: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplitudesConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<f64>,
    /// Incident momentum and channel label, for providers that need them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub incident: Option<String>,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn dense(rows: &[Vec<f64>], name: &str) -> Result<Vec<f64>, CliError> {
    let n = rows.len();
    if let Some(r) = rows.iter().find(|r| r.len() != n) {
        return Err(config_err(format!(
            "{name} must be square: {n} rows but a row has {} entries",
            r.len()
        )));
    }
    Ok(rows.iter().flatten().copied().collect())
}

impl HamiltonianConfig {
    pub fn two_qubit(&self) -> Option<TwoQubitParams> {
        match (self.omega_s, self.omega_u, self.j_x, self.j_y) {
            (Some(s), Some(u), Some(x), Some(y)) => Some(TwoQubitParams::new(s, u, x, y)),
            _ => None,
        }
    }

    fn interaction(&self) -> Result<ComplexMatrix, CliError> {
        let re = self
            .h_us
            .as_ref()
            .ok_or_else(|| config_err("generic models need h_us"))?;
        let n = re.len();
        let re = dense(re, "h_us")?;
        let im = match &self.h_us_imag {
            Some(rows) => {
                if rows.len() != n {
                    return Err(config_err("h_us_imag must have the shape of h_us"));
                }
                dense(rows, "h_us_imag")?
            }
            None => vec![0.0; n * n],
        };
        let data: Vec<C64> = re.iter().zip(&im).map(|(&a, &b)| C64::new(a, b)).collect();
        Ok(ComplexMatrix::from_row_major(n, n, data))
    }

    pub fn build(&self, allow_broken_time_reversal: bool) -> Result<InternalModel, CliError> {
        let qubit_keys = [self.omega_s, self.omega_u, self.j_x, self.j_y];
        let any_qubit = qubit_keys.iter().any(Option::is_some);
        let diag_form = self.h0_diag.is_some() || self.dim_s.is_some();
        let level_form = self.unit_levels.is_some() || self.system_levels.is_some();
        let forms = [any_qubit, diag_form, level_form].iter().filter(|&&f| f).count();
        if forms != 1 {
            return Err(config_err(
                "[hamiltonian] needs exactly one of: omega_s/omega_u/j_x/j_y, h0_diag + dim_s + h_us, \
                 or unit_levels + system_levels + h_us",
            ));
        }
        let options = ModelOptions {
            allow_broken_time_reversal,
        };
        let model = if any_qubit {
            let p = self
                .two_qubit()
                .ok_or_else(|| config_err("two-qubit models need all of omega_s, omega_u, j_x, j_y"))?;
            if self.h_us.is_some() || self.h_us_imag.is_some() {
                return Err(config_err("h_us cannot be combined with two-qubit parameters"));
            }
            build_two_qubit(p, self.mass, self.length)
        } else if diag_form {
            let (Some(diag), Some(ds)) = (&self.h0_diag, self.dim_s) else {
                return Err(config_err("h0_diag and dim_s must be given together"));
            };
            InternalModel::from_h0_diag(diag, ds, self.interaction()?, self.mass, self.length, options)
        } else {
            let (Some(u), Some(s)) = (&self.unit_levels, &self.system_levels) else {
                return Err(config_err("unit_levels and system_levels must be given together"));
            };
            InternalModel::new(u.clone(), s.clone(), self.interaction()?, self.mass, self.length, options)
        };
        model.map_err(|e| config_err(format!("[hamiltonian]: {e}")))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization. Thread count and output path
    /// cannot change results and are left out.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.run.threads = 0;
        c.output.path = None;
        hex::encode(Sha256::digest(c.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model()?;
        if self.providers.is_empty() {
            return Err(config_err("providers must not be empty"));
        }
        let mut seen = self.providers.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.providers.len() {
            return Err(config_err("providers must not repeat"));
        }
        Reservoir::from_temperatures(self.reservoir.t_kin, self.reservoir.t_int)
            .map_err(|e| config_err(format!("[reservoir]: {e}")))?;
        if let Some(s) = &self.sweep {
            let [a, b] = s.range;
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(config_err(format!("[sweep] range must be strictly increasing, got [{a}, {b}]")));
            }
            if s.steps == 0 {
                return Err(config_err("[sweep] steps must be at least 1"));
            }
            if a <= 0.0 {
                return Err(config_err(format!("[sweep] {} values must be positive", s.variable.column())));
            }
        }
        let r = &self.run;
        if r.trajectories == 0 || r.collisions == 0 {
            return Err(config_err("[run] trajectories and collisions must be positive"));
        }
        if !(0.0..1.0).contains(&r.burn_in_fraction) {
            return Err(config_err("[run] burn_in_fraction must lie in [0, 1)"));
        }
        if !(r.unitarity_tol.is_finite() && r.unitarity_tol > 0.0) {
            return Err(config_err("[run] unitarity_tol must be positive"));
        }
        if !self.thermalize.packet_j_y.is_empty() && self.hamiltonian.two_qubit().is_none() {
            return Err(config_err("[thermalize] packet_j_y needs a two-qubit model"));
        }
        if let Some(t) = &self.transition {
            self.labels(t)?;
        }
        Ok(())
    }

    pub fn model(&self) -> Result<InternalModel, CliError> {
        self.hamiltonian.build(self.allow_broken_time_reversal)
    }

    pub fn provider_options(&self) -> ProviderOptions {
        ProviderOptions {
            unitarity_tol: self.run.unitarity_tol,
            shift_rit: self.run.shift_rit,
        }
    }

    pub fn provider(&self, kind: ProviderKind, model: InternalModel) -> AmplitudeProvider {
        AmplitudeProvider::with_options(kind, model, self.provider_options())
    }

    pub fn reservoir(&self) -> Reservoir {
        Reservoir::from_temperatures(self.reservoir.t_kin, self.reservoir.t_int).expect("validated")
    }

    /// Channel indices of the `[transition]` labels.
    pub fn labels(&self, t: &TransitionConfig) -> Result<(usize, usize), CliError> {
        let model = self.model()?;
        let find = |label: &str| {
            model.index_of_label(label).ok_or_else(|| {
                config_err(format!(
                    "unknown transition label '{label}', valid labels: {}",
                    model.labels().join(", ")
                ))
            })
        };
        Ok((find(&t.from)?, find(&t.to)?))
    }

    pub fn sweep_for(&self, allowed: &[SweepVariable], command: &str) -> Result<&SweepConfig, CliError> {
        let s = self
            .sweep
            .as_ref()
            .ok_or_else(|| config_err(format!("{command} needs a [sweep] section")))?;
        if !allowed.contains(&s.variable) {
            let names: Vec<&str> = allowed.iter().map(|v| v.column()).collect();
            return Err(config_err(format!(
                "{command} sweeps {}, not {}",
                names.join(" or "),
                s.variable.column()
            )));
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG2: &str = r#"
providers = ["exact", "wvo", "rit"]

[hamiltonian]
omega_s = 1.0
omega_u = 1.0
j_x = 1.0
j_y = 0.0
mass = 0.1
length = 50.0

[sweep]
variable = "kinetic_energy"
range = [0.05, 40.0]
steps = 5

[transition]
from = "00"
to = "11"
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = ExperimentConfig::from_toml(FIG2).unwrap();
        assert_eq!(cfg.run, RunConfig::default());
        let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.to_toml(), again.to_toml());
        assert_eq!(cfg.hash(), again.hash());
        assert_eq!(cfg.hash().len(), 64);
    }

    #[test]
    fn sweep_points_inclusive() {
        let s = SweepConfig {
            variable: SweepVariable::Temperature,
            range: [1.0, 100.0],
            steps: 3,
            scale: Scale::Log,
        };
        let p = s.points();
        assert!((p[1] - 10.0).abs() < 1e-12 && (p[2] - 100.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad_range = FIG2.replace("[0.05, 40.0]", "[40.0, 0.05]");
        assert!(matches!(ExperimentConfig::from_toml(&bad_range), Err(CliError::Config(_))));
        let bad_label = FIG2.replace("to = \"11\"", "to = \"22\"");
        let err = ExperimentConfig::from_toml(&bad_label).unwrap_err().to_string();
        assert!(err.contains("00, 01, 10, 11"), "{err}");
        let bad_mass = FIG2.replace("mass = 0.1", "mass = -1.0");
        assert!(ExperimentConfig::from_toml(&bad_mass).is_err());
        let unknown = format!("{FIG2}\nbogus = 1\n");
        assert!(ExperimentConfig::from_toml(&unknown).is_err());
        let mixed = FIG2.replace("length = 50.0", "length = 50.0\nh0_diag = [1.0, -1.0]\ndim_s = 2");
        assert!(ExperimentConfig::from_toml(&mixed).is_err());
    }

    #[test]
    fn generic_model_and_escape_hatch() {
        let text = r#"
allow_broken_time_reversal = true
[hamiltonian]
mass = 1.0
length = 2.0
h0_diag = [1.0, -1.0]
dim_s = 2
h_us = [[0.0, 0.3], [0.3, 0.0]]
h_us_imag = [[0.0, 0.2], [-0.2, 0.0]]
"#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert!(!cfg.model().unwrap().time_reversal_invariant());
        let strict = text.replace("allow_broken_time_reversal = true", "");
        assert!(ExperimentConfig::from_toml(&strict).is_err());
    }
}
