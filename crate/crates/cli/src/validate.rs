//! Invariant suite run by the `validate` subcommand.

use std::io::Write;

use qthermostat::effective_models::ProviderKind;
use qthermostat::exact_scatter::{channels, matched_solution, TOL_U_RELAXED};
use qthermostat::exec::Execution;
use qthermostat::model::InternalModel;
use qthermostat::reservoir::{detailed_balance_defect, effusion_ks, integrated_rates, sample_effusion, trajectory_rng, Reservoir};
use qthermostat::scattering_map::{build_map, choi_min_eigenvalue, kraus_set, micro_reversibility_defect};
use serde::Serialize;

use crate::config::{ExperimentConfig, Format, SweepVariable};
use crate::output::{format_float, write_json, Metadata};
use crate::CliError;

pub const SYMMETRY_TOL: f64 = 1e-8;
pub const MICRO_REVERSIBILITY_TOL: f64 = 1e-8;
pub const KRAUS_TOL: f64 = 1e-10;
pub const CHOI_TOL: f64 = -1e-8;
pub const DETAILED_BALANCE_TOL: f64 = 1e-5;
pub const KS_TOL: f64 = 0.002;
pub const KS_SAMPLES: usize = 1_000_000;
/// The rit-packet control must break micro-reversibility by at least this much.
pub const PACKET_VIOLATION: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pass => "pass",
            Self::Fail => "fail",
            Self::Skipped => "skipped",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub value: Option<f64>,
    pub tolerance: Option<f64>,
    pub detail: String,
}

impl Check {
    /// Passes when `value ≤ tolerance`.
    fn at_most(name: &str, value: f64, tolerance: f64, detail: String) -> Self {
        let status = if value <= tolerance { Status::Pass } else { Status::Fail };
        Self {
            name: name.into(),
            status,
            value: Some(value),
            tolerance: Some(tolerance),
            detail,
        }
    }

    fn at_least(name: &str, value: f64, tolerance: f64, detail: String) -> Self {
        let status = if value >= tolerance { Status::Pass } else { Status::Fail };
        Self {
            name: name.into(),
            status,
            value: Some(value),
            tolerance: Some(tolerance),
            detail,
        }
    }

    fn skipped(name: &str, why: &str) -> Self {
        Self {
            name: name.into(),
            status: Status::Skipped,
            value: None,
            tolerance: None,
            detail: why.into(),
        }
    }

    fn failed(name: &str, why: String) -> Self {
        Self {
            name: name.into(),
            status: Status::Fail,
            value: None,
            tolerance: None,
            detail: why,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub metadata: Metadata,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Total energies for the scattering checks: a grid spanning every
/// threshold, plus the sweep points seen from each incident channel.
fn sample_energies(cfg: &ExperimentConfig, model: &InternalModel) -> Vec<f64> {
    let e = model.energies();
    let lo = e.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = model.e_max();
    let span = (hi - lo).max(1.0);
    let mut out: Vec<f64> = (1..=24).map(|i| lo + (span + 10.0) * i as f64 / 24.0).collect();
    if let Some(s) = &cfg.sweep {
        let m = model.mass();
        for x in s.points() {
            let ke = match s.variable {
                SweepVariable::KineticEnergy => x,
                SweepVariable::P0 => x * x / (2.0 * m),
                _ => continue,
            };
            out.extend(e.iter().map(|ej| ke + ej));
        }
    }
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

/// Incident momenta for the micro-reversibility and map checks: kinetic
/// energies geometric from `0.05` to `40` times the level scale.
fn sample_momenta(model: &InternalModel, n: usize) -> Vec<f64> {
    let scale = model.energies().iter().map(|x| x.abs()).fold(1.0, f64::max);
    let m = model.mass();
    (0..n)
        .map(|i| {
            let f = i as f64 / (n - 1) as f64;
            let ke = scale * (0.05f64.ln() + (800f64).ln() * f).exp();
            (2.0 * m * ke).sqrt()
        })
        .collect()
}

fn scattering_checks(cfg: &ExperimentConfig, model: &InternalModel, report: &mut Report) {
    let tol = cfg.run.unitarity_tol;
    let mut unitarity: f64 = 0.0;
    let mut relaxed: f64 = 0.0;
    let mut reciprocity: f64 = 0.0;
    let mut mirror: f64 = 0.0;
    let mut failure = None;
    for e in sample_energies(cfg, model) {
        let cs = channels(model, e);
        if cs.open.is_empty() {
            continue;
        }
        match matched_solution(model, &cs) {
            Ok(sol) => {
                let d = sol.unitarity_defect();
                if cs.near_threshold() {
                    relaxed = relaxed.max(d);
                    report.warnings.push(format!(
                        "E = {} lies within {:e} of a channel threshold; unitarity checked at the relaxed tolerance {TOL_U_RELAXED:e}",
                        format_float(e),
                        qthermostat::exact_scatter::NEAR_THRESHOLD_BAND
                    ));
                } else {
                    unitarity = unitarity.max(d);
                }
                reciprocity = reciprocity.max(sol.reciprocity_defect());
                mirror = mirror.max(sol.mirror_defect());
            }
            Err(err) => {
                failure.get_or_insert(format!("E = {e}: {err}"));
            }
        }
    }
    if let Some(why) = failure {
        report.checks.push(Check::failed("unitarity", why));
        return;
    }
    let mut check = Check::at_most("unitarity", unitarity, tol, "max |S†S − I| over sampled energies".into());
    if relaxed > TOL_U_RELAXED {
        check.status = Status::Fail;
        check.detail = format!("near-threshold defect {relaxed:e} exceeds {TOL_U_RELAXED:e}");
    }
    report.checks.push(check);
    if model.time_reversal_invariant() {
        report.checks.push(Check::at_most(
            "t_r_symmetry",
            reciprocity,
            SYMMETRY_TOL,
            "max(|t − tᵀ|, |r − rᵀ|)".into(),
        ));
        report.checks.push(Check::at_most(
            "mirror_symmetry",
            mirror,
            SYMMETRY_TOL,
            "max(|S11 − S22|, |S12 − S21|)".into(),
        ));
    } else {
        report.checks.push(Check::skipped("t_r_symmetry", "time-reversal symmetry broken by h_us"));
        report.checks.push(Check::skipped("mirror_symmetry", "time-reversal symmetry broken by h_us"));
    }
}

fn micro_reversibility(cfg: &ExperimentConfig, model: &InternalModel, kind: ProviderKind, momenta: &[f64]) -> Result<f64, String> {
    let provider = cfg.provider(kind, model.clone());
    let defects = Execution::Parallel.try_map(momenta.len(), |i| micro_reversibility_defect(&provider, momenta[i]));
    defects
        .map(|d| d.into_iter().fold(0.0, f64::max))
        .map_err(|e| e.to_string())
}

fn reversibility_checks(cfg: &ExperimentConfig, model: &InternalModel, report: &mut Report) {
    let momenta = sample_momenta(model, 20);
    for kind in [ProviderKind::Exact, ProviderKind::Wvo, ProviderKind::Rit] {
        let name = format!("micro_reversibility_{}", kind.ident());
        if !model.time_reversal_invariant() {
            report.checks.push(Check::skipped(&name, "time-reversal symmetry broken by h_us"));
            continue;
        }
        report.checks.push(match micro_reversibility(cfg, model, kind, &momenta) {
            Ok(d) => Check::at_most(&name, d, MICRO_REVERSIBILITY_TOL, "max |P_J'J(p) − P_JJ'(p')|".into()),
            Err(e) => Check::failed(&name, e),
        });
    }
    let name = "rit_packet_breaks_micro_reversibility";
    if !model.time_reversal_invariant() {
        report.checks.push(Check::skipped(name, "time-reversal symmetry broken by h_us"));
    } else if model.h_us().max_abs() == 0.0 {
        report.checks.push(Check::skipped(name, "no interaction"));
    } else {
        report.checks.push(match micro_reversibility(cfg, model, ProviderKind::RitPacket, &momenta) {
            Ok(d) => Check::at_least(name, d, PACKET_VIOLATION, "expected violation of micro-reversibility".into()),
            Err(e) => Check::failed(name, e),
        });
    }
}

fn map_checks(cfg: &ExperimentConfig, model: &InternalModel, report: &mut Report) {
    let momenta = sample_momenta(model, 8);
    for kind in [ProviderKind::Wvo, ProviderKind::Rit] {
        let provider = cfg.provider(kind, model.clone());
        let mut completeness: f64 = 0.0;
        let mut choi = f64::INFINITY;
        let mut failure = None;
        for &p0 in &momenta {
            let r = kraus_set(&provider, p0).and_then(|k| {
                let c = k.completeness_defect();
                build_map(&provider, p0).and_then(|t| choi_min_eigenvalue(&t)).map(|e| (c, e))
            });
            match r {
                Ok((c, e)) => {
                    completeness = completeness.max(c);
                    choi = choi.min(e);
                }
                Err(e) => {
                    failure.get_or_insert(format!("p0 = {p0}: {e}"));
                }
            }
        }
        let id = kind.ident();
        if let Some(why) = failure {
            report.checks.push(Check::failed(&format!("kraus_completeness_{id}"), why));
            continue;
        }
        report.checks.push(Check::at_most(
            &format!("kraus_completeness_{id}"),
            completeness,
            KRAUS_TOL,
            "max |Σ M†M − I|".into(),
        ));
        report.checks.push(Check::at_least(
            &format!("choi_positivity_{id}"),
            choi,
            CHOI_TOL,
            "min eigenvalue of the Choi matrix".into(),
        ));
    }
}

fn detailed_balance_checks(cfg: &ExperimentConfig, model: &InternalModel, report: &mut Report) {
    let beta = 1.0 / cfg.reservoir.t_int;
    for kind in [ProviderKind::Exact, ProviderKind::Wvo, ProviderKind::Rit] {
        let name = format!("detailed_balance_{}", kind.ident());
        if !model.time_reversal_invariant() {
            report.checks.push(Check::skipped(&name, "time-reversal symmetry broken by h_us"));
            continue;
        }
        let provider = cfg.provider(kind, model.clone());
        let bath = Reservoir::equilibrium(beta).expect("validated temperature");
        report.checks.push(match integrated_rates(&provider, bath, Execution::Parallel) {
            Ok(r) => Check::at_most(
                &name,
                detailed_balance_defect(&r.full, model.energies(), beta, 1e-12),
                DETAILED_BALANCE_TOL,
                format!("relative rate-ratio defect at T = {}", cfg.reservoir.t_int),
            ),
            Err(e) => Check::failed(&name, e.to_string()),
        });
    }
}

fn effusion_check(cfg: &ExperimentConfig, model: &InternalModel, report: &mut Report) {
    let beta = 1.0 / cfg.reservoir.t_kin;
    let m = model.mass();
    let mut rng = trajectory_rng(cfg.run.seed, 0);
    let mut samples: Vec<f64> = (0..KS_SAMPLES).map(|_| sample_effusion(beta, m, &mut rng)).collect();
    let ks = effusion_ks(&mut samples, beta, m);
    report.checks.push(Check::at_most(
        "effusion_ks",
        ks,
        KS_TOL,
        format!("Kolmogorov–Smirnov distance over {KS_SAMPLES} samples"),
    ));
}

pub fn validate(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let model = cfg.model()?;
    let mut report = Report {
        metadata: Metadata::new("validate", cfg.hash(), cfg.run.seed),
        checks: Vec::new(),
        warnings: Vec::new(),
    };
    if !model.time_reversal_invariant() {
        report
            .warnings
            .push("h_us is complex: symmetry, micro-reversibility and detailed-balance checks are skipped".into());
    }
    scattering_checks(cfg, &model, &mut report);
    reversibility_checks(cfg, &model, &mut report);
    map_checks(cfg, &model, &mut report);
    detailed_balance_checks(cfg, &model, &mut report);
    effusion_check(cfg, &model, &mut report);
    Ok(report)
}

pub fn write_report<W: Write>(report: &Report, format: Format, out: W) -> Result<(), CliError> {
    if format == Format::Json {
        return write_json(report, out);
    }
    let mut out = out;
    let m = &report.metadata;
    writeln!(out, "# command: {}", m.command)?;
    writeln!(out, "# build: {}", m.build)?;
    writeln!(out, "# config_sha256: {}", m.config_sha256)?;
    writeln!(out, "# seed: {}", m.seed)?;
    for w in &report.warnings {
        writeln!(out, "# warning: {w}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["check", "status", "value", "tolerance", "detail"])?;
    for c in &report.checks {
        let num = |x: Option<f64>| x.map(format_float).unwrap_or_default();
        w.write_record([
            c.name.as_str(),
            c.status.as_str(),
            &num(c.value),
            &num(c.tolerance),
            &c.detail,
        ])?;
    }
    w.flush()?;
    Ok(())
}
