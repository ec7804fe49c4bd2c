//! Thermal reservoir of units: sampling, integrated rates, steady states,
//! repeated-collision trajectories, heat and entropy production.
//!
//! Units arrive with momenta drawn from the effusion law at `β_kin` and
//! internal levels drawn from a Gibbs state at `β_int`. Rates follow the
//! convention `p'(J') = Σ_J p(J) p(J→J')`, i.e. the rate matrix is row
//! stochastic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::effective_models::{AmplitudeProvider, ProviderKind};
use crate::exec::Execution;
use crate::linalg::{solve, ComplexMatrix, LinalgError, RealMatrix, C64};
use crate::model::InternalModel;
use crate::quadrature::{integrate, QuadError, QuadOptions};
use crate::scattering_map::{transition_column, DensityMatrix, MapError};

/// Entries of a rate matrix at or below this count as absent when finding
/// communicating classes.
pub const SUPPORT_TOL: f64 = 1e-14;
/// Width of the integration range past the last breakpoint, in units of `k_B T_kin`.
pub const TAIL_WIDTH: f64 = 40.0;
const STEADY_RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReservoirError {
    #[error("invalid reservoir: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("rate {from}->{to}: {detail}")]
    Quadrature { from: usize, to: usize, detail: String },
    #[error("stationary distribution residual {0:e} exceeds tolerance")]
    NotStationary(f64),
    #[error("initial state has dimension {got}, the system has {expected} levels")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reservoir {
    pub beta_kin: f64,
    pub beta_int: f64,
}

impl Reservoir {
    pub fn new(beta_kin: f64, beta_int: f64) -> Result<Self, ReservoirError> {
        for (name, b) in [("beta_kin", beta_kin), ("beta_int", beta_int)] {
            if !(b.is_finite() && b > 0.0) {
                return Err(ReservoirError::InvalidSpec(format!(
                    "{name} must be positive and finite, got {b}"
                )));
            }
        }
        Ok(Self { beta_kin, beta_int })
    }

    pub fn from_temperatures(t_kin: f64, t_int: f64) -> Result<Self, ReservoirError> {
        Self::new(1.0 / t_kin, 1.0 / t_int)
    }

    pub fn equilibrium(beta: f64) -> Result<Self, ReservoirError> {
        Self::new(beta, beta)
    }

    pub fn t_kin(&self) -> f64 {
        1.0 / self.beta_kin
    }

    pub fn t_int(&self) -> f64 {
        1.0 / self.beta_int
    }
}

/// Draws a momentum from `μ(p) = (βp/m) e^{−βp²/2m}` by inverting its CDF.
pub fn sample_effusion<R: Rng + ?Sized>(beta_kin: f64, mass: f64, rng: &mut R) -> f64 {
    // 1 - [0, 1) = (0, 1], so ln u is finite
    let u = 1.0 - rng.random::<f64>();
    (-2.0 * mass * u.ln() / beta_kin).sqrt()
}

/// Kolmogorov–Smirnov distance between `samples` and the effusion CDF
/// `1 − e^{−βp²/2m}`.
pub fn effusion_ks(samples: &mut [f64], beta_kin: f64, mass: f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let cdf = 1.0 - (-beta_kin * p * p / (2.0 * mass)).exp();
            (cdf - i as f64 / n).abs().max(((i + 1) as f64 / n - cdf).abs())
        })
        .fold(0.0, f64::max)
}

/// Gibbs weights `e^{−βε}/Z`. `β = ∞` puts all weight on the lowest level
/// (shared equally on ties), `β = 0` is uniform.
pub fn gibbs_weights(levels: &[f64], beta: f64) -> Vec<f64> {
    let lo = levels.iter().cloned().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = if beta.is_infinite() {
        levels.iter().map(|&e| if e == lo { 1.0 } else { 0.0 }).collect()
    } else {
        levels.iter().map(|&e| (-beta * (e - lo)).exp()).collect()
    };
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / z).collect()
}

fn sample_discrete<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let x = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = i;
        if x < acc {
            return i;
        }
    }
    last
}

/// Draws a unit level from its Gibbs state at `beta_int` (0 and ∞ allowed).
pub fn sample_internal<R: Rng + ?Sized>(beta_int: f64, model: &InternalModel, rng: &mut R) -> usize {
    sample_discrete(&gibbs_weights(model.unit_levels(), beta_int), rng)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateMatrix {
    /// `full[(J, J')] = p(J→J')`, row stochastic.
    pub full: RealMatrix,
    /// `reduced[(j_S, j_S')] = Σ w(j_U) p(J→J')`, row stochastic.
    pub reduced: RealMatrix,
    pub bath: Reservoir,
    /// Largest relative quadrature error estimate over all entries.
    pub max_rel_error: f64,
}

/// Kinetic energies at which the integrand for incident channel `j` can
/// jump or kink.
fn kinetic_breakpoints(provider: &AmplitudeProvider, j: usize) -> Vec<f64> {
    let model = provider.model();
    let ej = model.energy(j);
    let sp = model.spectral();
    let mut pts: Vec<f64> = sp
        .e
        .iter()
        .chain(&sp.e_prime)
        .chain(std::iter::once(&sp.e_max))
        .map(|&e| e - ej)
        .collect();
    if provider.kind() == ProviderKind::RitPacket {
        pts.push(sp.e_max - provider.shift());
    }
    pts.retain(|&x| x > 0.0);
    pts
}

fn reduce(model: &InternalModel, full: &RealMatrix, beta_int: f64) -> RealMatrix {
    let w = gibbs_weights(model.unit_levels(), beta_int);
    let ds = model.dim_s();
    let mut red = RealMatrix::zeros(ds);
    for j in 0..model.dim() {
        for jp in 0..model.dim() {
            red[(model.system_index(j), model.system_index(jp))] += w[model.unit_index(j)] * full[(j, jp)];
        }
    }
    red
}

/// `p(J→J') = ∫ dp0 μ(p0) P_{J'J}(p0)` for every pair, by adaptive quadrature
/// in `u = β_kin p0²/2m` (weight `e^{−u}`), plus the system-level reduction.
pub fn integrated_rates(
    provider: &AmplitudeProvider,
    bath: Reservoir,
    exec: Execution,
) -> Result<RateMatrix, ReservoirError> {
    let model = provider.model();
    let n = model.dim();
    let m = model.mass();
    let beta = bath.beta_kin;
    let opts = QuadOptions {
        rel_tol: 1e-10,
        abs_tol: 1e-20,
        fail_rel_tol: 1e-6,
        max_panels: 6000,
    };
    let rows = exec.try_map(n, |j| {
        let mut pts: Vec<f64> = kinetic_breakpoints(provider, j).iter().map(|ke| beta * ke).collect();
        let top = pts.iter().cloned().fold(0.0, f64::max);
        pts.push(0.0);
        pts.push(top + TAIL_WIDTH);
        let f = |u: f64| -> Result<Vec<f64>, MapError> {
            let p0 = (2.0 * m * u / beta).sqrt();
            let w = (-u).exp();
            Ok(transition_column(provider, p0, j)?.into_iter().map(|p| w * p).collect())
        };
        let res = integrate(f, &pts, n, opts).map_err(|e| match e {
            QuadError::Integrand { source, .. } => ReservoirError::Map(source),
            QuadError::NotConverged { component, value, error } => ReservoirError::Quadrature {
                from: j,
                to: component,
                detail: format!("no convergence (value {value:e}, error {error:e})"),
            },
            QuadError::Dimension { expected, got } => ReservoirError::Quadrature {
                from: j,
                to: 0,
                detail: format!("integrand dimension {got}, expected {expected}"),
            },
        })?;
        let rel = res
            .value
            .iter()
            .zip(&res.error)
            .filter(|(v, _)| v.abs() > 0.0)
            .map(|(v, e)| e / v.abs())
            .fold(0.0, f64::max);
        Ok::<_, ReservoirError>((res.value, rel))
    })?;
    let mut full = RealMatrix::zeros(n);
    let mut max_rel_error: f64 = 0.0;
    for (j, (row, rel)) in rows.into_iter().enumerate() {
        max_rel_error = max_rel_error.max(rel);
        for (jp, v) in row.into_iter().enumerate() {
            full[(j, jp)] = v;
        }
    }
    let reduced = reduce(model, &full, bath.beta_int);
    Ok(RateMatrix {
        full,
        reduced,
        bath,
        max_rel_error,
    })
}

/// `max |p(i→j) − e^{−β(ε_j−ε_i)} p(j→i)| / max(p(i→j), e^{−β(ε_j−ε_i)} p(j→i))`
/// over pairs where either side exceeds `floor`.
pub fn detailed_balance_defect(rates: &RealMatrix, levels: &[f64], beta: f64, floor: f64) -> f64 {
    let n = rates.dim();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let a = rates[(i, j)];
            let b = (-beta * (levels[j] - levels[i])).exp() * rates[(j, i)];
            let scale = a.max(b);
            if scale > floor {
                worst = worst.max((a - b).abs() / scale);
            }
        }
    }
    worst
}

#[derive(Clone, Debug, PartialEq)]
pub struct SteadyState {
    /// Closed communicating classes, each ascending.
    pub classes: Vec<Vec<usize>>,
    /// One stationary distribution per closed class, full length.
    pub distributions: Vec<Vec<f64>>,
    pub residual: f64,
}

impl SteadyState {
    pub fn is_unique(&self) -> bool {
        self.classes.len() == 1
    }

    pub fn unique(&self) -> Option<&[f64]> {
        self.is_unique().then(|| self.distributions[0].as_slice())
    }
}

fn closed_classes(p: &RealMatrix) -> Vec<Vec<usize>> {
    let n = p.dim();
    let mut reach = vec![vec![false; n]; n];
    for (i, row) in reach.iter_mut().enumerate() {
        for (j, r) in row.iter_mut().enumerate() {
            *r = i == j || p[(i, j)] > SUPPORT_TOL;
        }
    }
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    let mut seen = vec![false; n];
    let mut classes = Vec::new();
    for i in 0..n {
        if seen[i] {
            continue;
        }
        let class: Vec<usize> = (0..n).filter(|&j| reach[i][j] && reach[j][i]).collect();
        for &j in &class {
            seen[j] = true;
        }
        let closed = class
            .iter()
            .all(|&a| (0..n).all(|b| !reach[a][b] || class.contains(&b)));
        if closed {
            classes.push(class);
        }
    }
    classes
}

/// Stationary distributions `π = πP` of a row-stochastic matrix, one per
/// closed communicating class, each solved directly.
pub fn steady_state(p: &RealMatrix) -> Result<SteadyState, ReservoirError> {
    let n = p.dim();
    let classes = closed_classes(p);
    let mut distributions = Vec::with_capacity(classes.len());
    let mut residual: f64 = 0.0;
    for class in &classes {
        let c = class.len();
        // (P_C − I)ᵀ π = 0 with the last equation replaced by Σπ = 1
        let mut a = ComplexMatrix::zeros(c, c);
        for (r, &i) in class.iter().enumerate() {
            for (s, &j) in class.iter().enumerate() {
                let v = p[(j, i)] - if i == j { 1.0 } else { 0.0 };
                a[(r, s)] = C64::new(v, 0.0);
            }
        }
        let mut b = ComplexMatrix::zeros(c, 1);
        for s in 0..c {
            a[(c - 1, s)] = C64::new(1.0, 0.0);
        }
        b[(c - 1, 0)] = C64::new(1.0, 0.0);
        let x = solve(&a, &b)?;
        let mut pi = vec![0.0; n];
        for (r, &i) in class.iter().enumerate() {
            pi[i] = x[(r, 0)].re.max(0.0);
        }
        let z: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|v| *v /= z);
        let res: f64 = (0..n)
            .map(|j| ((0..n).map(|i| pi[i] * p[(i, j)]).sum::<f64>() - pi[j]).abs())
            .sum();
        residual = residual.max(res);
        distributions.push(pi);
    }
    if residual > STEADY_RESIDUAL_TOL {
        return Err(ReservoirError::NotStationary(residual));
    }
    if classes.len() > 1 {
        log::warn!(
            "rate matrix is reducible: {} closed classes {:?}",
            classes.len(),
            classes
        );
    }
    Ok(SteadyState {
        classes,
        distributions,
        residual,
    })
}

/// Mean heat per collision from rates: `Σ π(j_S) w(j_U) p(J→J') (e_U − e_U')`.
pub fn mean_heat_from_rates(model: &InternalModel, rates: &RateMatrix, system_populations: &[f64]) -> f64 {
    let w = gibbs_weights(model.unit_levels(), rates.bath.beta_int);
    let u = model.unit_levels();
    let mut q = 0.0;
    for j in 0..model.dim() {
        let weight = system_populations[model.system_index(j)] * w[model.unit_index(j)];
        for jp in 0..model.dim() {
            q += weight * rates.full[(j, jp)] * (u[model.unit_index(j)] - u[model.unit_index(jp)]);
        }
    }
    q
}

/// Entropy production per collision `ΔS = Q (1/T_kin − 1/T_int)` for
/// heat `Q` leaving the units' internal degrees of freedom.
pub fn entropy_from_heat(bath: Reservoir, heat: f64) -> f64 {
    heat * (bath.beta_kin - bath.beta_int)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionRecord {
    pub p0: f64,
    pub unit_in: usize,
    pub unit_out: usize,
    pub system_in: usize,
    pub system_out: usize,
    /// `e_U(in) − e_U(out)`.
    pub heat_q: f64,
}

/// One repeated-collision trajectory of `n_coll` collisions starting from
/// system level `system_start`.
pub fn simulate_trajectory<R: Rng + ?Sized>(
    provider: &AmplitudeProvider,
    bath: Reservoir,
    system_start: usize,
    n_coll: usize,
    rng: &mut R,
) -> Result<Vec<CollisionRecord>, ReservoirError> {
    let model = provider.model();
    let unit_w = gibbs_weights(model.unit_levels(), bath.beta_int);
    let levels = model.unit_levels();
    let mut js = system_start;
    let mut out = Vec::with_capacity(n_coll);
    for _ in 0..n_coll {
        let p0 = sample_effusion(bath.beta_kin, model.mass(), rng);
        let ju = sample_discrete(&unit_w, rng);
        let j = model.index(ju, js);
        let jp = if p0 > 0.0 {
            let col = transition_column(provider, p0, j)?;
            sample_discrete(&col, rng)
        } else {
            // measure-zero draw u = 1: the unit never arrives
            j
        };
        let (ju_out, js_out) = (model.unit_index(jp), model.system_index(jp));
        out.push(CollisionRecord {
            p0,
            unit_in: ju,
            unit_out: ju_out,
            system_in: js,
            system_out: js_out,
            heat_q: levels[ju] - levels[ju_out],
        });
        js = js_out;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryConfig {
    pub n_trajectories: usize,
    pub n_collisions: usize,
    /// Fraction of each trajectory discarded before averaging.
    pub burn_in_fraction: f64,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            n_trajectories: 500,
            n_collisions: 2000,
            burn_in_fraction: 0.5,
            seed: 0,
            execution: Execution::Parallel,
        }
    }
}

/// Ensemble statistics. Standard errors are across trajectories, each
/// trajectory contributing its post-burn-in time average.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStats {
    pub n_trajectories: usize,
    pub n_collisions: usize,
    pub burn_in: usize,
    /// Steady-state system populations.
    pub populations: Vec<f64>,
    pub populations_se: Vec<f64>,
    pub mean_heat: f64,
    pub heat_se: f64,
    /// `series[c][j_S]`: fraction of trajectories in `j_S` after collision `c`.
    pub series: Vec<Vec<f64>>,
}

struct TrajectorySummary {
    occupancy: Vec<f64>,
    heat: f64,
    states: Vec<u32>,
}

/// Per-trajectory random stream: same seed, stream = trajectory index.
pub fn trajectory_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn mean_and_se(xs: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let mean = xs.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

pub fn run_trajectories(
    provider: &AmplitudeProvider,
    bath: Reservoir,
    rho0: &DensityMatrix,
    config: TrajectoryConfig,
) -> Result<TrajectoryStats, ReservoirError> {
    let model = provider.model();
    let ds = model.dim_s();
    if rho0.dim() != ds {
        return Err(ReservoirError::Dimension {
            expected: ds,
            got: rho0.dim(),
        });
    }
    if config.n_trajectories == 0 || config.n_collisions == 0 {
        return Err(ReservoirError::InvalidSpec("need at least one trajectory and one collision".into()));
    }
    if !(0.0..1.0).contains(&config.burn_in_fraction) {
        return Err(ReservoirError::InvalidSpec(format!(
            "burn_in_fraction must lie in [0, 1), got {}",
            config.burn_in_fraction
        )));
    }
    let burn_in = ((config.n_collisions as f64) * config.burn_in_fraction).floor() as usize;
    let kept = (config.n_collisions - burn_in) as f64;
    let initial = rho0.populations();
    let summaries = config.execution.try_map(config.n_trajectories, |i| {
        let mut rng = trajectory_rng(config.seed, i);
        let start = sample_discrete(&initial, &mut rng);
        let records = simulate_trajectory(provider, bath, start, config.n_collisions, &mut rng)?;
        let mut occupancy = vec![0.0; ds];
        let mut heat = 0.0;
        for r in &records[burn_in..] {
            occupancy[r.system_out] += 1.0;
            heat += r.heat_q;
        }
        occupancy.iter_mut().for_each(|o| *o /= kept);
        Ok::<_, ReservoirError>(TrajectorySummary {
            occupancy,
            heat: heat / kept,
            states: records.iter().map(|r| r.system_out as u32).collect(),
        })
    })?;
    let n = summaries.len();
    let mut populations = Vec::with_capacity(ds);
    let mut populations_se = Vec::with_capacity(ds);
    for s in 0..ds {
        let (m, se) = mean_and_se(summaries.iter().map(|t| t.occupancy[s]), n);
        populations.push(m);
        populations_se.push(se);
    }
    let (mean_heat, heat_se) = mean_and_se(summaries.iter().map(|t| t.heat), n);
    let mut series = vec![vec![0.0; ds]; config.n_collisions];
    for t in &summaries {
        for (c, &s) in t.states.iter().enumerate() {
            series[c][s as usize] += 1.0;
        }
    }
    for row in &mut series {
        row.iter_mut().for_each(|v| *v /= n as f64);
    }
    Ok(TrajectoryStats {
        n_trajectories: n,
        n_collisions: config.n_collisions,
        burn_in,
        populations,
        populations_se,
        mean_heat,
        heat_se,
        series,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyProduction {
    pub heat: f64,
    pub heat_se: f64,
    pub delta_s: f64,
    pub delta_s_se: f64,
}

/// Monte-Carlo heat per collision and entropy production in the steady state.
pub fn entropy_production(
    provider: &AmplitudeProvider,
    bath: Reservoir,
    rho0: &DensityMatrix,
    config: TrajectoryConfig,
) -> Result<EntropyProduction, ReservoirError> {
    let stats = run_trajectories(provider, bath, rho0, config)?;
    let factor = bath.beta_kin - bath.beta_int;
    Ok(EntropyProduction {
        heat: stats.mean_heat,
        heat_se: stats.heat_se,
        delta_s: entropy_from_heat(bath, stats.mean_heat),
        delta_s_se: stats.heat_se * factor.abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_two_qubit, TwoQubitParams};

    fn fig3(m: f64) -> InternalModel {
        build_two_qubit(TwoQubitParams::new(1.0, 1.0, 1.0, 0.0), m, 50.0).unwrap()
    }

    #[test]
    fn reservoir_validation() {
        assert!(Reservoir::new(1.0, 2.0).is_ok());
        assert!(Reservoir::new(0.0, 2.0).is_err());
        assert!(Reservoir::new(1.0, f64::INFINITY).is_err());
        let s = Reservoir::from_temperatures(4.0, 0.5).unwrap();
        assert_eq!((s.t_kin(), s.t_int()), (4.0, 0.5));
    }

    #[test]
    fn gibbs_limits() {
        assert_eq!(gibbs_weights(&[1.0, -1.0], f64::INFINITY), vec![0.0, 1.0]);
        assert_eq!(gibbs_weights(&[1.0, -1.0], 0.0), vec![0.5, 0.5]);
        let w = gibbs_weights(&[1.0, -1.0], 1.0);
        assert!((w[1] / w[0] - 2f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn internal_sampling_limits() {
        let m = fig3(0.1);
        let mut rng = trajectory_rng(1, 0);
        assert!((0..1000).all(|_| sample_internal(f64::INFINITY, &m, &mut rng) == 1));
        let ones = (0..20000)
            .filter(|_| sample_internal(0.0, &m, &mut rng) == 1)
            .count();
        assert!((ones as f64 / 20000.0 - 0.5).abs() < 0.02);
    }

    #[test]
    fn effusion_is_non_negative() {
        let mut rng = trajectory_rng(3, 0);
        assert!((0..1000).all(|_| sample_effusion(2.0, 0.5, &mut rng) >= 0.0));
    }

    #[test]
    fn two_state_steady_state() {
        let (a, b) = (0.3, 0.1);
        let p = RealMatrix::from_rows(&[vec![1.0 - a, a], vec![b, 1.0 - b]]);
        let ss = steady_state(&p).unwrap();
        let pi = ss.unique().unwrap();
        assert!((pi[0] - b / (a + b)).abs() < 1e-14);
        assert!((pi[1] - a / (a + b)).abs() < 1e-14);
    }

    #[test]
    fn identity_chain_is_reducible() {
        let ss = steady_state(&RealMatrix::identity(3)).unwrap();
        assert_eq!(ss.classes, vec![vec![0], vec![1], vec![2]]);
        assert!(ss.unique().is_none());
    }

    #[test]
    fn transient_state_gets_no_weight() {
        let p = RealMatrix::from_rows(&[vec![0.5, 0.5, 0.0], vec![0.0, 0.2, 0.8], vec![0.0, 0.6, 0.4]]);
        let ss = steady_state(&p).unwrap();
        let pi = ss.unique().unwrap();
        assert_eq!(pi[0], 0.0);
        assert!((pi[1] - 0.6 / 1.4).abs() < 1e-14);
    }

    #[test]
    fn gibbs_fixed_point_of_balanced_chain() {
        let beta: f64 = 0.7;
        // system ω_S = 1: levels (+1, -1); balanced chain
        let up = 0.2 * (-2.0 * beta).exp();
        let p = RealMatrix::from_rows(&[vec![0.8, 0.2], vec![up, 1.0 - up]]);
        let pi = steady_state(&p).unwrap().distributions[0].clone();
        let want = beta.exp() / (beta.exp() + (-beta).exp());
        assert!((pi[1] - want).abs() < 1e-14);
    }

    #[test]
    fn free_model_rates_are_identity() {
        let m = build_two_qubit(TwoQubitParams::new(1.0, 1.0, 0.0, 0.0), 0.1, 50.0).unwrap();
        let bath = Reservoir::equilibrium(1.0).unwrap();
        for kind in [ProviderKind::Wvo, ProviderKind::Rit] {
            let r = integrated_rates(&AmplitudeProvider::new(kind, m.clone()), bath, Execution::Sequential).unwrap();
            assert!(r.full.max_abs_diff(&RealMatrix::identity(4)) < 1e-12);
            assert!(r.reduced.max_abs_diff(&RealMatrix::identity(2)) < 1e-12);
        }
    }

    #[test]
    fn wvo_rates_obey_detailed_balance() {
        let m = fig3(0.1);
        let beta = 0.8;
        let bath = Reservoir::equilibrium(beta).unwrap();
        let r = integrated_rates(&AmplitudeProvider::new(ProviderKind::Wvo, m.clone()), bath, Execution::Parallel).unwrap();
        for s in r.full.row_sums() {
            assert!((s - 1.0).abs() < 1e-9);
        }
        assert!(detailed_balance_defect(&r.full, m.energies(), beta, 1e-14) < 1e-6);
        assert!(detailed_balance_defect(&r.reduced, m.system_levels(), beta, 1e-14) < 1e-6);
        let pi = steady_state(&r.reduced).unwrap();
        let g = gibbs_weights(m.system_levels(), beta);
        assert!((pi.unique().unwrap()[1] - g[1]).abs() < 1e-6);
    }

    #[test]
    fn equal_temperatures_carry_no_heat() {
        let m = fig3(0.1);
        let bath = Reservoir::equilibrium(1.0).unwrap();
        let r = integrated_rates(&AmplitudeProvider::new(ProviderKind::Rit, m.clone()), bath, Execution::Parallel).unwrap();
        let pi = steady_state(&r.reduced).unwrap().distributions[0].clone();
        assert!(mean_heat_from_rates(&m, &r, &pi).abs() < 1e-8);
    }

    #[test]
    fn trajectories_reproducible_across_execution_modes() {
        let m = fig3(0.1);
        let prov = AmplitudeProvider::new(ProviderKind::Wvo, m);
        let bath = Reservoir::equilibrium(1.0).unwrap();
        let rho0 = DensityMatrix::from_populations(&[1.0, 0.0]).unwrap();
        let cfg = TrajectoryConfig {
            n_trajectories: 8,
            n_collisions: 50,
            burn_in_fraction: 0.5,
            seed: 17,
            execution: Execution::Sequential,
        };
        let a = run_trajectories(&prov, bath, &rho0, cfg).unwrap();
        let b = run_trajectories(&prov, bath, &rho0, TrajectoryConfig { execution: Execution::Parallel, ..cfg }).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.burn_in, 25);
        assert_eq!(a.series.len(), 50);
    }

    #[test]
    fn heat_is_unit_energy_loss() {
        let m = fig3(0.1);
        let prov = AmplitudeProvider::new(ProviderKind::Rit, m.clone());
        let bath = Reservoir::new(0.5, 0.5).unwrap();
        let mut rng = trajectory_rng(5, 0);
        for r in simulate_trajectory(&prov, bath, 0, 200, &mut rng).unwrap() {
            let u = m.unit_levels();
            assert_eq!(r.heat_q, u[r.unit_in] - u[r.unit_out]);
        }
    }

    #[test]
    fn wrong_initial_dimension_rejected() {
        let prov = AmplitudeProvider::new(ProviderKind::Wvo, fig3(0.1));
        let bath = Reservoir::equilibrium(1.0).unwrap();
        let rho0 = DensityMatrix::maximally_mixed(4);
        assert!(matches!(
            run_trajectories(&prov, bath, &rho0, TrajectoryConfig::default()),
            Err(ReservoirError::Dimension { .. })
        ));
    }

    #[test]
    fn entropy_sign_convention() {
        let bath = Reservoir::from_temperatures(5.0, 20.0).unwrap();
        // hot internal bath: heat leaves the units, entropy is produced
        assert!(entropy_from_heat(bath, 0.01) > 0.0);
        let bath = Reservoir::from_temperatures(40.0, 20.0).unwrap();
        assert!(entropy_from_heat(bath, -0.01) > 0.0);
    }
}
