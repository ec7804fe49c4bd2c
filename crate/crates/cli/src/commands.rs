//! Sweep runners behind the `transition-prob`, `thermalize`, `entropy` and
//! `amplitudes` subcommands.

use std::io::Write;

use qthermostat::effective_models::{AmplitudeProvider, AmplitudeTable, ProviderKind};
use qthermostat::exec::Execution;
use qthermostat::model::{build_two_qubit, TwoQubitParams};
use qthermostat::reservoir::{
    entropy_from_heat, entropy_production, gibbs_weights, integrated_rates, mean_heat_from_rates, run_trajectories,
    steady_state, Reservoir, TrajectoryConfig,
};
use qthermostat::scattering_map::{transition_column, DensityMatrix};
use serde::Serialize;

use crate::config::{ExperimentConfig, Format, SweepVariable};
use crate::output::{format_float, write_json, Metadata, Table};
use crate::CliError;

fn numerical(e: impl std::fmt::Display) -> CliError {
    CliError::Numerical(e.to_string())
}

/// Seed for one (sweep point, column) Monte-Carlo run, so that columns and
/// points draw independent streams from a single user seed.
pub fn derive_seed(seed: u64, point: usize, column: usize) -> u64 {
    let mut z = seed ^ ((point as u64) << 20 | column as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn metadata(cfg: &ExperimentConfig, command: &str) -> Metadata {
    Metadata::new(command, cfg.hash(), cfg.run.seed)
}

pub fn transition_prob(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    let sweep = cfg.sweep_for(&[SweepVariable::KineticEnergy, SweepVariable::P0], "transition-prob")?;
    let t = cfg
        .transition
        .as_ref()
        .ok_or_else(|| CliError::Config("transition-prob needs a [transition] section".into()))?;
    let (from, to) = cfg.labels(t)?;
    let model = cfg.model()?;
    let m = model.mass();
    let e_from = model.energy(from);
    let providers: Vec<AmplitudeProvider> = cfg.providers.iter().map(|&k| cfg.provider(k, model.clone())).collect();
    let points = sweep.points();
    let rows = Execution::Parallel.try_map(points.len(), |i| {
        let (ke, p0) = match sweep.variable {
            SweepVariable::P0 => (points[i] * points[i] / (2.0 * m), points[i]),
            _ => (points[i], (2.0 * m * points[i]).sqrt()),
        };
        let mut row = vec![ke, p0, ke + e_from];
        for p in &providers {
            row.push(transition_column(p, p0, from).map_err(numerical)?[to]);
        }
        Ok::<_, CliError>(row)
    })?;
    let mut columns = vec!["kinetic_energy".to_string(), "p0".into(), "total_energy".into()];
    columns.extend(cfg.providers.iter().map(|k| format!("P_{}", k.ident())));
    Ok(Table {
        metadata: metadata(cfg, "transition-prob"),
        columns,
        rows,
    })
}

fn trajectory_config(cfg: &ExperimentConfig, seed: u64) -> TrajectoryConfig {
    TrajectoryConfig {
        n_trajectories: cfg.run.trajectories,
        n_collisions: cfg.run.collisions,
        burn_in_fraction: cfg.run.burn_in_fraction,
        seed,
        execution: Execution::Parallel,
    }
}

/// Ground-state population from the Monte-Carlo run and from the
/// stationary state of the integrated rates.
fn ground_population(
    cfg: &ExperimentConfig,
    provider: &AmplitudeProvider,
    bath: Reservoir,
    seed: u64,
) -> Result<[f64; 3], CliError> {
    let model = provider.model();
    let g = model.system_ground();
    let rho0 = DensityMatrix::maximally_mixed(model.dim_s());
    let stats = run_trajectories(provider, bath, &rho0, trajectory_config(cfg, seed)).map_err(numerical)?;
    let rates = integrated_rates(provider, bath, Execution::Parallel).map_err(numerical)?;
    let ss = steady_state(&rates.reduced).map_err(numerical)?;
    let me = ss.unique().map_or(f64::NAN, |pi| pi[g]);
    Ok([stats.populations[g], stats.populations_se[g], me])
}

pub fn thermalize(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    let sweep = cfg.sweep_for(&[SweepVariable::Temperature], "thermalize")?;
    let model = cfg.model()?;
    let mut columns_providers: Vec<(String, AmplitudeProvider)> = cfg
        .providers
        .iter()
        .map(|&k| (k.ident().to_string(), cfg.provider(k, model.clone())))
        .collect();
    if let Some(params) = cfg.hamiltonian.two_qubit() {
        for &j_y in &cfg.thermalize.packet_j_y {
            let p = TwoQubitParams::new(params.omega_s, params.omega_u, params.j_x, j_y);
            let packet_model =
                build_two_qubit(p, model.mass(), model.length()).map_err(|e| CliError::Config(e.to_string()))?;
            columns_providers.push((
                format!("rit_packet_jy={j_y}"),
                cfg.provider(ProviderKind::RitPacket, packet_model),
            ));
        }
    }
    let mut columns = vec![SweepVariable::Temperature.column().to_string()];
    for (name, _) in &columns_providers {
        columns.push(format!("pop_{name}"));
        columns.push(format!("se_{name}"));
        columns.push(format!("pop_me_{name}"));
    }
    columns.push("pop_gibbs".into());
    let ground = model.system_ground();
    let mut rows = Vec::new();
    for (i, &temp) in sweep.points().iter().enumerate() {
        let bath = Reservoir::equilibrium(1.0 / temp).map_err(|e| CliError::Config(e.to_string()))?;
        let mut row = vec![temp];
        for (c, (_, provider)) in columns_providers.iter().enumerate() {
            row.extend(ground_population(cfg, provider, bath, derive_seed(cfg.run.seed, i, c))?);
        }
        row.push(gibbs_weights(model.system_levels(), 1.0 / temp)[ground]);
        rows.push(row);
    }
    Ok(Table {
        metadata: metadata(cfg, "thermalize"),
        columns,
        rows,
    })
}

pub fn entropy(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    let sweep = cfg.sweep_for(&[SweepVariable::TKin], "entropy")?;
    let model = cfg.model()?;
    let t_int = cfg.reservoir.t_int;
    let providers: Vec<AmplitudeProvider> = cfg.providers.iter().map(|&k| cfg.provider(k, model.clone())).collect();
    let mut columns = vec![SweepVariable::TKin.column().to_string()];
    for k in &cfg.providers {
        let id = k.ident();
        columns.extend([
            format!("dS_{id}"),
            format!("dS_se_{id}"),
            format!("Q_{id}"),
            format!("Q_se_{id}"),
            format!("dS_me_{id}"),
        ]);
    }
    let rho0 = DensityMatrix::maximally_mixed(model.dim_s());
    let mut rows = Vec::new();
    for (i, &t_kin) in sweep.points().iter().enumerate() {
        let bath = Reservoir::from_temperatures(t_kin, t_int).map_err(|e| CliError::Config(e.to_string()))?;
        let mut row = vec![t_kin];
        for (c, provider) in providers.iter().enumerate() {
            let ep = entropy_production(provider, bath, &rho0, trajectory_config(cfg, derive_seed(cfg.run.seed, i, c)))
                .map_err(numerical)?;
            let rates = integrated_rates(provider, bath, Execution::Parallel).map_err(numerical)?;
            let ss = steady_state(&rates.reduced).map_err(numerical)?;
            let me = match ss.unique() {
                Some(pi) => entropy_from_heat(bath, mean_heat_from_rates(&model, &rates, pi)),
                None => f64::NAN,
            };
            row.extend([ep.delta_s, ep.delta_s_se, ep.heat, ep.heat_se, me]);
        }
        rows.push(row);
    }
    Ok(Table {
        metadata: metadata(cfg, "entropy"),
        columns,
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AmplitudeEntry {
    pub to: String,
    pub from: String,
    pub t_re: f64,
    pub t_im: f64,
    pub r_re: f64,
    pub r_im: f64,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AmplitudeDump {
    pub metadata: Metadata,
    pub provider: ProviderKind,
    pub total_energy: f64,
    pub open: Vec<String>,
    pub unitarity_defect: f64,
    pub entries: Vec<AmplitudeEntry>,
}

/// `t`/`r` tables either at a total energy or, for momentum-dependent
/// providers, at an incident momentum and channel.
pub fn amplitudes(
    cfg: &ExperimentConfig,
    energy: Option<f64>,
    p0: Option<f64>,
    incident: Option<&str>,
) -> Result<AmplitudeDump, CliError> {
    let model = cfg.model()?;
    let provider = cfg.provider(cfg.model, model.clone());
    let section = cfg.amplitudes.clone().unwrap_or_default();
    let energy = energy.or(section.energy);
    let p0 = p0.or(section.p0);
    let incident = incident.map(str::to_string).or(section.incident);
    let table: AmplitudeTable = match (energy, p0) {
        (Some(e), None) => provider.at_energy(e).map_err(numerical)?,
        (None, Some(p)) => {
            let label = incident.unwrap_or_else(|| model.label(0));
            let j = model.index_of_label(&label).ok_or_else(|| {
                CliError::Config(format!(
                    "unknown incident label '{label}', valid labels: {}",
                    model.labels().join(", ")
                ))
            })?;
            provider.amplitudes(p, j).map_err(numerical)?
        }
        _ => {
            return Err(CliError::Config(
                "amplitudes needs exactly one of --energy or --p0 (or [amplitudes] energy / p0)".into(),
            ))
        }
    };
    let n = model.dim();
    let mut entries = Vec::new();
    for from in (0..n).filter(|&j| table.is_open(j)) {
        for to in (0..n).filter(|&j| table.is_open(j)) {
            let t = table.transmission(to, from);
            let r = table.reflection(to, from);
            entries.push(AmplitudeEntry {
                to: model.label(to),
                from: model.label(from),
                t_re: t.re,
                t_im: t.im,
                r_re: r.re,
                r_im: r.im,
                probability: table.probability(to, from),
            });
        }
    }
    Ok(AmplitudeDump {
        metadata: metadata(cfg, "amplitudes"),
        provider: cfg.model,
        total_energy: table.total_e,
        open: (0..n).filter(|&j| table.is_open(j)).map(|j| model.label(j)).collect(),
        unitarity_defect: table.unitarity_defect,
        entries,
    })
}

pub fn write_amplitudes<W: Write>(dump: &AmplitudeDump, format: Format, out: W) -> Result<(), CliError> {
    if format == Format::Json {
        return write_json(dump, out);
    }
    let mut out = out;
    let m = &dump.metadata;
    writeln!(out, "# command: {}", m.command)?;
    writeln!(out, "# build: {}", m.build)?;
    writeln!(out, "# config_sha256: {}", m.config_sha256)?;
    writeln!(out, "# seed: {}", m.seed)?;
    writeln!(out, "# provider: {}", dump.provider)?;
    writeln!(out, "# total_energy: {}", format_float(dump.total_energy))?;
    writeln!(out, "# unitarity_defect: {}", format_float(dump.unitarity_defect))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["to", "from", "t_re", "t_im", "r_re", "r_im", "probability"])?;
    for e in &dump.entries {
        let nums = [e.t_re, e.t_im, e.r_re, e.r_im, e.probability].map(format_float);
        let mut rec = vec![e.to.clone(), e.from.clone()];
        rec.extend(nums);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
