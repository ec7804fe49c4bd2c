//! Internal Hamiltonians of the unit-system pair and their spectral data.
//!
//! The stored basis is the product eigenbasis of `H0 = H_U ⊗ I + I ⊗ H_S`,
//! ordered with the unit index outermost: `J = j_U * dim_S + j_S`.
//! For two qubits this is `{|00⟩, |01⟩, |10⟩, |11⟩}` with the unit first.

use thiserror::Error;

use crate::linalg::{eig_hermitian, ComplexMatrix, LinalgError, C64};

/// Lower bound enforced on `e_max` after the RIT energy shift.
pub const EPS_POS: f64 = 1e-6;
/// System levels closer than this are reported as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-9;
/// Largest imaginary part tolerated in a time-reversal invariant model.
pub const TIME_REVERSAL_TOL: f64 = 1e-14;
const ADDITIVITY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("interaction Hamiltonian is not Hermitian (max asymmetry {0:e})")]
    NotHermitian(f64),
    #[error(
        "model breaks time-reversal invariance (max imaginary part {0:e}); \
         set allow_broken_time_reversal to accept it"
    )]
    TimeReversal(f64),
    #[error("h0 diagonal is not of the form e_U + e_S (defect {0:e})")]
    NotAdditive(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Two-qubit example: unit and system are single qubits coupled by an
/// XY exchange interaction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoQubitParams {
    pub omega_s: f64,
    pub omega_u: f64,
    pub j_x: f64,
    pub j_y: f64,
    /// `Ω = ω_S + ω_U`
    pub big_omega: f64,
    /// `Δω = ω_U − ω_S`
    pub delta_omega: f64,
    /// `Ξ = J_x + J_y`
    pub big_xi: f64,
    /// `ξ = J_x − J_y`
    pub small_xi: f64,
}

impl TwoQubitParams {
    pub fn new(omega_s: f64, omega_u: f64, j_x: f64, j_y: f64) -> Self {
        Self {
            omega_s,
            omega_u,
            j_x,
            j_y,
            big_omega: omega_s + omega_u,
            delta_omega: omega_u - omega_s,
            big_xi: j_x + j_y,
            small_xi: j_x - j_y,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SpectralData {
    /// Eigenvalues of `H0`, in stored-basis order.
    pub e: Vec<f64>,
    /// Eigenvalues of `H = H0 + H_US`, ascending.
    pub e_prime: Vec<f64>,
    pub e_max: f64,
    /// Eigenvectors of `H` as columns, matching `e_prime`.
    pub v_prime: ComplexMatrix,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ModelOptions {
    /// Accept complex (time-reversal breaking) interactions.
    pub allow_broken_time_reversal: bool,
}

#[derive(Clone, Debug)]
pub struct InternalModel {
    unit_levels: Vec<f64>,
    system_levels: Vec<f64>,
    h0: ComplexMatrix,
    h_us: ComplexMatrix,
    h: ComplexMatrix,
    mass: f64,
    length: f64,
    time_reversal_invariant: bool,
    spectral: SpectralData,
}

fn check_positive(name: &str, x: f64) -> Result<(), ModelError> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter(format!(
            "{name} must be positive and finite, got {x}"
        )))
    }
}

impl InternalModel {
    /// Builds a model from unit and system level energies and a dense
    /// interaction in the product basis.
    pub fn new(
        unit_levels: Vec<f64>,
        system_levels: Vec<f64>,
        h_us: ComplexMatrix,
        mass: f64,
        length: f64,
        options: ModelOptions,
    ) -> Result<Self, ModelError> {
        check_positive("mass", mass)?;
        check_positive("length", length)?;
        if unit_levels.is_empty() || system_levels.is_empty() {
            return Err(ModelError::Dimension("unit and system need at least one level".into()));
        }
        if let Some(x) = unit_levels.iter().chain(&system_levels).find(|x| !x.is_finite()) {
            return Err(ModelError::InvalidParameter(format!("level energy {x} is not finite")));
        }
        let n = unit_levels.len() * system_levels.len();
        if h_us.rows() != n || h_us.cols() != n {
            return Err(ModelError::Dimension(format!(
                "h_us is {}x{}, expected {n}x{n} (dim_U = {}, dim_S = {})",
                h_us.rows(),
                h_us.cols(),
                unit_levels.len(),
                system_levels.len()
            )));
        }
        if h_us.as_slice().iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(ModelError::InvalidParameter("h_us has non-finite entries".into()));
        }
        let defect = h_us.hermitian_defect();
        if defect > crate::linalg::HERMITIAN_TOL * h_us.max_abs().max(1.0) {
            return Err(ModelError::NotHermitian(defect));
        }
        let imag = h_us.max_imag();
        let time_reversal_invariant = imag <= TIME_REVERSAL_TOL;
        if !time_reversal_invariant && !options.allow_broken_time_reversal {
            return Err(ModelError::TimeReversal(imag));
        }
        warn_degenerate(&system_levels);

        let ds = system_levels.len();
        let e: Vec<f64> = (0..n)
            .map(|j| unit_levels[j / ds] + system_levels[j % ds])
            .collect();
        let h0 = ComplexMatrix::from_real_diag(&e);
        let h = &h0 + &h_us;
        let eig = eig_hermitian(&h)?;
        let e_max = e
            .iter()
            .chain(&eig.values)
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let spectral = SpectralData {
            e,
            e_prime: eig.values,
            e_max,
            v_prime: eig.vectors,
        };
        Ok(Self {
            unit_levels,
            system_levels,
            h0,
            h_us,
            h,
            mass,
            length,
            time_reversal_invariant,
            spectral,
        })
    }

    /// Builds a model from the diagonal of `H0` and the system dimension.
    /// The diagonal must split as `e_U + e_S`; the split is fixed by taking
    /// the first system level of the first unit block as the system zero.
    pub fn from_h0_diag(
        h0_diag: &[f64],
        dim_s: usize,
        h_us: ComplexMatrix,
        mass: f64,
        length: f64,
        options: ModelOptions,
    ) -> Result<Self, ModelError> {
        if dim_s == 0 || h0_diag.is_empty() || h0_diag.len() % dim_s != 0 {
            return Err(ModelError::Dimension(format!(
                "h0_diag of length {} cannot be split with dim_s = {dim_s}",
                h0_diag.len()
            )));
        }
        let du = h0_diag.len() / dim_s;
        let unit: Vec<f64> = (0..du).map(|ju| h0_diag[ju * dim_s]).collect();
        let system: Vec<f64> = (0..dim_s).map(|js| h0_diag[js] - h0_diag[0]).collect();
        let mut worst: f64 = 0.0;
        for ju in 0..du {
            for js in 0..dim_s {
                worst = worst.max((unit[ju] + system[js] - h0_diag[ju * dim_s + js]).abs());
            }
        }
        if worst > ADDITIVITY_TOL * (1.0 + h0_diag.iter().map(|x| x.abs()).fold(0.0, f64::max)) {
            return Err(ModelError::NotAdditive(worst));
        }
        Self::new(unit, system, h_us, mass, length, options)
    }

    pub fn dim(&self) -> usize {
        self.spectral.e.len()
    }

    pub fn dim_u(&self) -> usize {
        self.unit_levels.len()
    }

    pub fn dim_s(&self) -> usize {
        self.system_levels.len()
    }

    pub fn index(&self, j_u: usize, j_s: usize) -> usize {
        j_u * self.dim_s() + j_s
    }

    pub fn unit_index(&self, j: usize) -> usize {
        j / self.dim_s()
    }

    pub fn system_index(&self, j: usize) -> usize {
        j % self.dim_s()
    }

    /// Basis label `"<j_U><j_S>"`, e.g. `"01"`; multi-digit indices are
    /// separated by a comma.
    pub fn label(&self, j: usize) -> String {
        let (u, s) = (self.unit_index(j), self.system_index(j));
        if self.dim_u() <= 10 && self.dim_s() <= 10 {
            format!("{u}{s}")
        } else {
            format!("{u},{s}")
        }
    }

    pub fn index_of_label(&self, label: &str) -> Option<usize> {
        (0..self.dim()).find(|&j| self.label(j) == label.trim())
    }

    pub fn labels(&self) -> Vec<String> {
        (0..self.dim()).map(|j| self.label(j)).collect()
    }

    pub fn unit_levels(&self) -> &[f64] {
        &self.unit_levels
    }

    pub fn system_levels(&self) -> &[f64] {
        &self.system_levels
    }

    pub fn h0(&self) -> &ComplexMatrix {
        &self.h0
    }

    pub fn h_us(&self) -> &ComplexMatrix {
        &self.h_us
    }

    pub fn h(&self) -> &ComplexMatrix {
        &self.h
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn time_reversal_invariant(&self) -> bool {
        self.time_reversal_invariant
    }

    pub fn spectral(&self) -> &SpectralData {
        &self.spectral
    }

    /// `e_J`, the H0 energy of basis state `j`.
    pub fn energy(&self, j: usize) -> f64 {
        self.spectral.e[j]
    }

    pub fn energies(&self) -> &[f64] {
        &self.spectral.e
    }

    pub fn e_max(&self) -> f64 {
        self.spectral.e_max
    }

    /// Index of the lowest system level (first one on ties).
    pub fn system_ground(&self) -> usize {
        argmin(&self.system_levels)
    }

    pub fn unit_ground(&self) -> usize {
        argmin(&self.unit_levels)
    }

    /// Same model with `s` subtracted from every H0 energy.
    pub fn shifted(&self, s: f64) -> Self {
        let unit: Vec<f64> = self.unit_levels.iter().map(|u| u - s).collect();
        let e: Vec<f64> = self.spectral.e.iter().map(|x| x - s).collect();
        let h0 = ComplexMatrix::from_real_diag(&e);
        let shift = ComplexMatrix::identity(self.dim()).scale(C64::new(s, 0.0));
        let spectral = SpectralData {
            e,
            e_prime: self.spectral.e_prime.iter().map(|x| x - s).collect(),
            e_max: self.spectral.e_max - s,
            v_prime: self.spectral.v_prime.clone(),
        };
        Self {
            unit_levels: unit,
            system_levels: self.system_levels.clone(),
            h0,
            h_us: self.h_us.clone(),
            h: &self.h - &shift,
            mass: self.mass,
            length: self.length,
            time_reversal_invariant: self.time_reversal_invariant,
            spectral,
        }
    }

    pub fn with_length(&self, length: f64) -> Result<Self, ModelError> {
        check_positive("length", length)?;
        let mut m = self.clone();
        m.length = length;
        Ok(m)
    }

    pub fn with_mass(&self, mass: f64) -> Result<Self, ModelError> {
        check_positive("mass", mass)?;
        let mut m = self.clone();
        m.mass = mass;
        Ok(m)
    }
}

fn argmin(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x < xs[best] {
            best = i;
        }
    }
    best
}

fn warn_degenerate(levels: &[f64]) {
    for i in 0..levels.len() {
        for j in i + 1..levels.len() {
            if (levels[i] - levels[j]).abs() < DEGENERACY_TOL {
                log::warn!(
                    "system levels {i} and {j} are degenerate ({}); populations couple to \
                     coherences and population-only dynamics is not exact",
                    levels[i]
                );
            }
        }
    }
}

/// Two-qubit model with `H0 = ω_U σ_z^U + ω_S σ_z^S` and
/// `H_US = J_x σ_x σ_x + J_y σ_y σ_y`.
pub fn build_two_qubit(p: TwoQubitParams, mass: f64, length: f64) -> Result<InternalModel, ModelError> {
    for (name, x) in [("omega_s", p.omega_s), ("omega_u", p.omega_u), ("j_x", p.j_x), ("j_y", p.j_y)] {
        if !x.is_finite() {
            return Err(ModelError::InvalidParameter(format!("{name} = {x} is not finite")));
        }
    }
    let mut h_us = ComplexMatrix::zeros(4, 4);
    h_us[(0, 3)] = C64::new(p.small_xi, 0.0);
    h_us[(3, 0)] = C64::new(p.small_xi, 0.0);
    h_us[(1, 2)] = C64::new(p.big_xi, 0.0);
    h_us[(2, 1)] = C64::new(p.big_xi, 0.0);
    InternalModel::new(
        vec![p.omega_u, -p.omega_u],
        vec![p.omega_s, -p.omega_s],
        h_us,
        mass,
        length,
        ModelOptions::default(),
    )
}

pub fn spectral_data(model: &InternalModel) -> SpectralData {
    model.spectral().clone()
}

/// Shifts the energy zero to minimize the spectral norm of `H`, keeping
/// `e_max ≥ EPS_POS`. Returns the shifted model and the shift `s`
/// (shifted energies are `e − s`).
pub fn shift_energy_zero(model: &InternalModel) -> (InternalModel, f64) {
    let sp = model.spectral();
    let lo = sp.e_prime[0];
    let hi = *sp.e_prime.last().expect("non-empty spectrum");
    let mut s = 0.5 * (lo + hi);
    if sp.e_max - s < EPS_POS {
        s = sp.e_max - EPS_POS;
    }
    if s == 0.0 {
        return (model.clone(), 0.0);
    }
    (model.shifted(s), s)
}
