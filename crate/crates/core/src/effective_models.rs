//! Amplitude providers: the exact solver and the effective thermostat models.
//!
//! * `wvo`: wave-vector-operator model, `t = e^{−iL𝕂₀/2} e^{iL𝕂(E)} e^{−iL𝕂₀/2}`.
//! * `rit`: random-interaction-time model, unitary evolution under `H` for the
//!   classical crossing time `τ(E) = L/√(2E/m)`.
//! * `rit-packet`: the same evolution for `τ = Lm/p0`, fixed by the incident
//!   momentum instead of the total energy. It breaks micro-reversibility and
//!   exists as a negative control.
//!
//! The effective models never reflect and act as the identity when the
//! interaction cannot turn on (`E ≤ e_max`).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exact_scatter::{channels, matched_solution, ScatterError, EPS_THR, TOL_U};
use crate::linalg::{ComplexMatrix, C64};
use crate::model::{shift_energy_zero, InternalModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("incident momentum must be positive and finite, got {0}")]
    InvalidMomentum(f64),
    #[error("the rit-packet provider depends on the incident momentum, not only on the total energy")]
    NeedsMomentum,
    #[error(transparent)]
    Scatter(#[from] ScatterError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    Exact,
    Wvo,
    Rit,
    RitPacket,
}

impl ProviderKind {
    pub const ALL: [ProviderKind; 4] = [Self::Exact, Self::Wvo, Self::Rit, Self::RitPacket];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Exact => "exact",
            Self::Wvo => "wvo",
            Self::Rit => "rit",
            Self::RitPacket => "rit-packet",
        }
    }

    /// Column-name friendly form (`rit_packet`).
    pub fn ident(self) -> &'static str {
        match self {
            Self::RitPacket => "rit_packet",
            other => other.as_str(),
        }
    }
}

impl fmt::Display for ProviderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProviderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exact" => Ok(Self::Exact),
            "wvo" => Ok(Self::Wvo),
            "rit" => Ok(Self::Rit),
            "rit-packet" | "rit_packet" => Ok(Self::RitPacket),
            other => Err(format!(
                "unknown provider '{other}', expected one of exact, wvo, rit, rit-packet"
            )),
        }
    }
}

/// Transmission and reflection amplitudes at one total energy, indexed by
/// stored-basis states. Entries involving closed channels are zero.
#[derive(Clone, Debug)]
pub struct AmplitudeTable {
    pub total_e: f64,
    pub t: ComplexMatrix,
    /// `None` means no reflection.
    pub r: Option<ComplexMatrix>,
    pub open: Vec<bool>,
    /// `‖S̃†S̃ − I‖_max` for the exact solver, `‖t†t − I‖_max` otherwise.
    pub unitarity_defect: f64,
}

impl AmplitudeTable {
    pub fn dim(&self) -> usize {
        self.open.len()
    }

    pub fn is_open(&self, j: usize) -> bool {
        self.open[j]
    }

    pub fn transmission(&self, to: usize, from: usize) -> C64 {
        self.t[(to, from)]
    }

    pub fn reflection(&self, to: usize, from: usize) -> C64 {
        self.r.as_ref().map_or(C64::new(0.0, 0.0), |r| r[(to, from)])
    }

    /// `|t_{J'J}|² + |r_{J'J}|²`, zero unless both channels are open.
    pub fn probability(&self, to: usize, from: usize) -> f64 {
        if !(self.open[to] && self.open[from]) {
            return 0.0;
        }
        self.transmission(to, from).norm_sqr() + self.reflection(to, from).norm_sqr()
    }

    /// Largest reflected probability `Σ_{J'} |r_{J'J}|²` over incident channels.
    pub fn reflected_mass(&self) -> f64 {
        match &self.r {
            None => 0.0,
            Some(r) => (0..self.dim())
                .map(|j| (0..self.dim()).map(|jp| r[(jp, j)].norm_sqr()).sum::<f64>())
                .fold(0.0, f64::max),
        }
    }

    fn elastic(model: &InternalModel, total_e: f64) -> Self {
        Self {
            total_e,
            t: ComplexMatrix::identity(model.dim()),
            r: None,
            open: model.energies().iter().map(|&e| e <= total_e).collect(),
            unitarity_defect: 0.0,
        }
    }

    fn transmitting(model: &InternalModel, total_e: f64, t: ComplexMatrix, all_open: bool) -> Self {
        let unitarity_defect = t.unitarity_defect();
        Self {
            total_e,
            t,
            r: None,
            open: model
                .energies()
                .iter()
                .map(|&e| all_open || e <= total_e)
                .collect(),
            unitarity_defect,
        }
    }
}

/// Classical crossing time of the interaction region.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InteractionTime {
    pub tau: f64,
    pub energy_e: f64,
}

impl InteractionTime {
    /// `τ(E) = L/√(2E/m)`; `None` for `E ≤ 0`.
    pub fn at_energy(model: &InternalModel, energy_e: f64) -> Option<Self> {
        (energy_e > 0.0).then(|| Self {
            tau: model.length() / (2.0 * energy_e / model.mass()).sqrt(),
            energy_e,
        })
    }
}

/// `E ≤ e_max`, with `e_max` widened by [`EPS_THR`] so that rounding in the
/// computed spectrum cannot switch the interaction on at the threshold itself.
fn below_e_max(model: &InternalModel, energy: f64) -> bool {
    energy <= model.e_max() + EPS_THR
}

/// WVO transmission amplitudes at total energy `E`.
pub fn wvo_amplitudes(model: &InternalModel, total_e: f64) -> AmplitudeTable {
    if below_e_max(model, total_e) {
        return AmplitudeTable::elastic(model, total_e);
    }
    let m = model.mass();
    let l = model.length();
    let sp = model.spectral();
    let i = C64::new(0.0, 1.0);
    let prop: Vec<C64> = sp
        .e_prime
        .iter()
        .map(|&e| (i * l * (2.0 * m * (total_e - e)).sqrt()).exp())
        .collect();
    let half: Vec<C64> = sp
        .e
        .iter()
        .map(|&e| (-i * 0.5 * l * (2.0 * m * (total_e - e)).sqrt()).exp())
        .collect();
    let v = &sp.v_prime;
    let t = (&v.diag_mul_right(&prop) * &v.adjoint())
        .diag_mul_left(&half)
        .diag_mul_right(&half);
    AmplitudeTable::transmitting(model, total_e, t, false)
}

/// `e^{iτ(e_{J'}+e_J)/2} ⟨J'|e^{−iτH}|J⟩`.
fn timed_evolution(model: &InternalModel, tau: f64) -> ComplexMatrix {
    let sp = model.spectral();
    let i = C64::new(0.0, 1.0);
    let evo: Vec<C64> = sp.e_prime.iter().map(|&e| (-i * tau * e).exp()).collect();
    let half: Vec<C64> = sp.e.iter().map(|&e| (i * 0.5 * tau * e).exp()).collect();
    let v = &sp.v_prime;
    (&v.diag_mul_right(&evo) * &v.adjoint())
        .diag_mul_left(&half)
        .diag_mul_right(&half)
}

/// RIT transmission amplitudes at total energy `E`, evaluated on `model`
/// as given (callers normally pass the energy-shifted model and shifted `E`).
pub fn rit_amplitudes(model: &InternalModel, total_e: f64) -> AmplitudeTable {
    if below_e_max(model, total_e) {
        return AmplitudeTable::elastic(model, total_e);
    }
    let tau = InteractionTime::at_energy(model, total_e)
        .expect("E > e_max > 0")
        .tau;
    AmplitudeTable::transmitting(model, total_e, timed_evolution(model, tau), false)
}

/// RIT amplitudes with `τ = Lm/p0` for a unit incident on channel energy
/// `e_j`. The interaction is off when the incident kinetic energy does not
/// exceed `e_max`; otherwise every output channel is allowed, with no check
/// that the unit can pay for the jump.
pub fn rit_packet_amplitudes(model: &InternalModel, p0: f64, e_j: f64) -> AmplitudeTable {
    let m = model.mass();
    let kinetic = p0 * p0 / (2.0 * m);
    let total_e = kinetic + e_j;
    if below_e_max(model, kinetic) {
        return AmplitudeTable::elastic(model, total_e);
    }
    let tau = model.length() * m / p0;
    AmplitudeTable::transmitting(model, total_e, timed_evolution(model, tau), true)
}

/// Exact amplitudes from the matched-boundary scattering solve.
///
/// An energy in `(e_J, e_J + EPS_THR]` is evaluated at `e_J − EPS_THR`
/// instead, where channel `J` is cleanly closed; the flux it would carry
/// vanishes at threshold.
pub fn exact_amplitudes(model: &InternalModel, total_e: f64, unitarity_tol: f64) -> Result<AmplitudeTable, ScatterError> {
    let mut cs = channels(model, total_e);
    if !cs.at_threshold.is_empty() {
        let lowest = cs
            .at_threshold
            .iter()
            .map(|&j| model.energy(j))
            .fold(f64::INFINITY, f64::min);
        log::debug!("E = {total_e} nudged to {} below a channel threshold", lowest - EPS_THR);
        cs = channels(model, lowest - EPS_THR);
    }
    let total_e = cs.total_e;
    let n = model.dim();
    let mut open = vec![false; n];
    for &j in &cs.open {
        open[j] = true;
    }
    if cs.open.is_empty() {
        return Ok(AmplitudeTable {
            total_e,
            t: ComplexMatrix::zeros(n, n),
            r: Some(ComplexMatrix::zeros(n, n)),
            open,
            unitarity_defect: 0.0,
        });
    }
    let sol = matched_solution(model, &cs)?;
    let unitarity_defect = sol.check_unitarity(unitarity_tol)?;
    let (ts, rs) = (sol.t(), sol.r());
    let mut t = ComplexMatrix::zeros(n, n);
    let mut r = ComplexMatrix::zeros(n, n);
    for (a, &ja) in cs.open.iter().enumerate() {
        for (b, &jb) in cs.open.iter().enumerate() {
            t[(ja, jb)] = ts[(a, b)];
            r[(ja, jb)] = rs[(a, b)];
        }
    }
    Ok(AmplitudeTable {
        total_e,
        t,
        r: Some(r),
        open,
        unitarity_defect,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProviderOptions {
    /// Unitarity tolerance for the exact solver.
    pub unitarity_tol: f64,
    /// Evaluate RIT (and rit-packet) on the energy-shifted model.
    pub shift_rit: bool,
}

impl Default for ProviderOptions {
    fn default() -> Self {
        Self {
            unitarity_tol: TOL_U,
            shift_rit: true,
        }
    }
}

/// One of the four amplitude sources bound to a model.
#[derive(Clone, Debug)]
pub struct AmplitudeProvider {
    kind: ProviderKind,
    model: InternalModel,
    rit_model: InternalModel,
    shift: f64,
    options: ProviderOptions,
}

impl AmplitudeProvider {
    pub fn new(kind: ProviderKind, model: InternalModel) -> Self {
        Self::with_options(kind, model, ProviderOptions::default())
    }

    pub fn with_options(kind: ProviderKind, model: InternalModel, options: ProviderOptions) -> Self {
        let (rit_model, shift) = if options.shift_rit {
            shift_energy_zero(&model)
        } else {
            (model.clone(), 0.0)
        };
        Self {
            kind,
            model,
            rit_model,
            shift,
            options,
        }
    }

    pub fn kind(&self) -> ProviderKind {
        self.kind
    }

    pub fn model(&self) -> &InternalModel {
        &self.model
    }

    pub fn options(&self) -> ProviderOptions {
        self.options
    }

    /// Energy shift applied for the RIT variants.
    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// Whether the provider never reflects.
    pub fn reflectionless(&self) -> bool {
        self.kind != ProviderKind::Exact
    }

    /// Amplitudes at a total energy. Not available for `rit-packet`.
    pub fn at_energy(&self, total_e: f64) -> Result<AmplitudeTable, ProviderError> {
        match self.kind {
            ProviderKind::Exact => Ok(exact_amplitudes(&self.model, total_e, self.options.unitarity_tol)?),
            ProviderKind::Wvo => Ok(wvo_amplitudes(&self.model, total_e)),
            ProviderKind::Rit => {
                let mut table = rit_amplitudes(&self.rit_model, total_e - self.shift);
                table.total_e = total_e;
                table.open = self.model.energies().iter().map(|&e| e <= total_e).collect();
                Ok(table)
            }
            ProviderKind::RitPacket => Err(ProviderError::NeedsMomentum),
        }
    }

    /// Amplitudes for a unit with momentum `p0` incident in channel `j`,
    /// i.e. at total energy `p0²/2m + e_j`.
    pub fn amplitudes(&self, p0: f64, j: usize) -> Result<AmplitudeTable, ProviderError> {
        if !(p0.is_finite() && p0 > 0.0) {
            return Err(ProviderError::InvalidMomentum(p0));
        }
        let kinetic = p0 * p0 / (2.0 * self.model.mass());
        let e_j = self.model.energy(j);
        let total_e = kinetic + e_j;
        if kinetic <= EPS_THR {
            // a unit sitting at threshold does not reach the scatterer
            return Ok(AmplitudeTable::elastic(&self.model, total_e));
        }
        match self.kind {
            ProviderKind::RitPacket => {
                let mut table = rit_packet_amplitudes(&self.rit_model, p0, e_j - self.shift);
                table.total_e = total_e;
                Ok(table)
            }
            _ => self.at_energy(total_e),
        }
    }
}
