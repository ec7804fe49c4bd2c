//! Narrow-packet scattering map on the internal state of unit and system.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::effective_models::{AmplitudeProvider, AmplitudeTable, ProviderError};
use crate::linalg::{eig_hermitian, ComplexMatrix, LinalgError, RealMatrix, C64};
use crate::model::InternalModel;

/// Two Bohr frequencies closer than this are treated as equal.
pub const BOHR_TOL: f64 = 1e-9;
/// Ratio `σ_p / bound` below which a packet counts as narrow.
pub const NARROW_RATIO: f64 = 0.1;
const COLUMN_SUM_TOL: f64 = 1e-6;
const TRACE_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("invalid density matrix: {0}")]
    InvalidState(String),
    #[error("map output trace deviates from 1 by {0:e}")]
    TraceDefect(f64),
    #[error("transition probabilities out of channel {column} sum to {sum} (p0 = {p0})")]
    ColumnSum { column: usize, sum: f64, p0: f64 },
    #[error("dimension mismatch: state has dimension {state}, map has {map}")]
    Dimension { state: usize, map: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    rho: ComplexMatrix,
}

impl DensityMatrix {
    /// Validates Hermiticity (1e−12), unit trace (1e−10) and positivity (−1e−10).
    pub fn new(rho: ComplexMatrix) -> Result<Self, MapError> {
        Self::validated(rho, 1e-10)
    }

    fn validated(rho: ComplexMatrix, trace_tol: f64) -> Result<Self, MapError> {
        if !rho.is_square() {
            return Err(MapError::InvalidState("not square".into()));
        }
        let herm = rho.hermitian_defect();
        if herm > 1e-12 {
            return Err(MapError::InvalidState(format!("not Hermitian (defect {herm:e})")));
        }
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > trace_tol || tr.im.abs() > trace_tol {
            return Err(MapError::InvalidState(format!("trace {tr}")));
        }
        let low = eig_hermitian(&rho)?.values[0];
        if low < -1e-10 {
            return Err(MapError::InvalidState(format!("negative eigenvalue {low:e}")));
        }
        Ok(Self { rho })
    }

    pub fn pure(dim: usize, j: usize) -> Self {
        let mut rho = ComplexMatrix::zeros(dim, dim);
        rho[(j, j)] = C64::new(1.0, 0.0);
        Self { rho }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            rho: ComplexMatrix::identity(dim).scale(C64::new(1.0 / dim as f64, 0.0)),
        }
    }

    pub fn from_populations(p: &[f64]) -> Result<Self, MapError> {
        Self::new(ComplexMatrix::from_real_diag(p))
    }

    pub fn dim(&self) -> usize {
        self.rho.rows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.rho
    }

    pub fn populations(&self) -> Vec<f64> {
        self.rho.diagonal().iter().map(|z| z.re).collect()
    }

    /// `max_{J≠K} |ρ_JK|`.
    pub fn max_coherence(&self) -> f64 {
        let n = self.dim();
        let mut c: f64 = 0.0;
        for j in 0..n {
            for k in 0..n {
                if j != k {
                    c = c.max(self.rho[(j, k)].norm());
                }
            }
        }
        c
    }
}

/// Sparse 4-index tensor `𝕊^{JK}_{J'K'}`, keyed `(J', K', J, K)`.
#[derive(Clone, Debug)]
pub struct ScatteringMapTensor {
    pub dim: usize,
    pub p0: f64,
    pub entries: BTreeMap<(usize, usize, usize, usize), C64>,
}

impl ScatteringMapTensor {
    pub fn get(&self, jp: usize, kp: usize, j: usize, k: usize) -> C64 {
        self.entries
            .get(&(jp, kp, j, k))
            .copied()
            .unwrap_or(C64::new(0.0, 0.0))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Applies the map to an arbitrary (not necessarily physical) matrix.
    pub fn apply_raw(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.dim, self.dim);
        for (&(jp, kp, j, k), s) in &self.entries {
            out[(jp, kp)] += s * x[(j, k)];
        }
        out
    }
}

fn bohr_equal(model: &InternalModel, jp: usize, j: usize, kp: usize, k: usize) -> bool {
    let e = model.energies();
    ((e[jp] - e[j]) - (e[kp] - e[k])).abs() < BOHR_TOL
}

fn tables(provider: &AmplitudeProvider, p0: f64) -> Result<Vec<AmplitudeTable>, MapError> {
    (0..provider.model().dim())
        .map(|j| provider.amplitudes(p0, j).map_err(MapError::from))
        .collect()
}

/// Builds the scattering map for incident momentum `p0`. Row `J` of the
/// tensor uses amplitudes at total energy `p0²/2m + e_J`.
pub fn build_map(provider: &AmplitudeProvider, p0: f64) -> Result<ScatteringMapTensor, MapError> {
    let model = provider.model();
    let n = model.dim();
    let tabs = tables(provider, p0)?;
    let mut entries = BTreeMap::new();
    for j in 0..n {
        for k in 0..n {
            let (tj, tk) = (&tabs[j], &tabs[k]);
            for jp in (0..n).filter(|&jp| tj.is_open(jp)) {
                for kp in (0..n).filter(|&kp| tk.is_open(kp)) {
                    if !bohr_equal(model, jp, j, kp, k) {
                        continue;
                    }
                    let v = tj.transmission(jp, j) * tk.transmission(kp, k).conj()
                        + tj.reflection(jp, j) * tk.reflection(kp, k).conj();
                    entries.insert((jp, kp, j, k), v);
                }
            }
        }
    }
    Ok(ScatteringMapTensor { dim: n, p0, entries })
}

/// `ρ'_{J'K'} = Σ_{JK} 𝕊^{JK}_{J'K'} ρ_{JK}`.
pub fn apply_map(tensor: &ScatteringMapTensor, rho: &DensityMatrix) -> Result<DensityMatrix, MapError> {
    if rho.dim() != tensor.dim {
        return Err(MapError::Dimension {
            state: rho.dim(),
            map: tensor.dim,
        });
    }
    let out = tensor.apply_raw(rho.matrix());
    let dev = (out.trace() - C64::new(1.0, 0.0)).norm();
    if dev > TRACE_TOL {
        return Err(MapError::TraceDefect(dev));
    }
    DensityMatrix::validated(out, TRACE_TOL)
}

/// Column-stochastic `P[(J', J)] = |t_{J'J}|² + |r_{J'J}|²` at momentum `p0`.
pub fn transition_probabilities(provider: &AmplitudeProvider, p0: f64) -> Result<RealMatrix, MapError> {
    let n = provider.model().dim();
    let mut p = RealMatrix::zeros(n);
    for j in 0..n {
        let col = transition_column(provider, p0, j)?;
        for (jp, v) in col.into_iter().enumerate() {
            p[(jp, j)] = v;
        }
    }
    Ok(p)
}

/// Outgoing distribution `P_{·J}(p0)` for a unit incident in channel `j`.
pub fn transition_column(provider: &AmplitudeProvider, p0: f64, j: usize) -> Result<Vec<f64>, MapError> {
    let table = provider.amplitudes(p0, j)?;
    let col: Vec<f64> = (0..table.dim()).map(|jp| table.probability(jp, j)).collect();
    let sum: f64 = col.iter().sum();
    if (sum - 1.0).abs() > COLUMN_SUM_TOL {
        return Err(MapError::ColumnSum { column: j, sum, p0 });
    }
    Ok(col)
}

/// `max |P_{J'J}(p0) − P_{JJ'}(√(p0² − 2mΔ_{J'J}))|` over energetically
/// allowed pairs. Pairs whose reversed kinetic energy is within `1e−6` of
/// zero are skipped.
pub fn micro_reversibility_defect(provider: &AmplitudeProvider, p0: f64) -> Result<f64, MapError> {
    let model = provider.model();
    let m = model.mass();
    let e = model.energies();
    let forward = transition_probabilities(provider, p0)?;
    let mut worst: f64 = 0.0;
    for j in 0..model.dim() {
        for jp in 0..model.dim() {
            if j == jp {
                continue;
            }
            let back_ke = p0 * p0 / (2.0 * m) - (e[jp] - e[j]);
            if back_ke <= 1e-6 {
                continue;
            }
            let p_back = (2.0 * m * back_ke).sqrt();
            let reverse = transition_column(provider, p_back, jp)?[j];
            worst = worst.max((forward[(jp, j)] - reverse).abs());
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug)]
pub struct KrausSet {
    /// Distinct Bohr frequencies `Δ_l`, ascending.
    pub frequencies: Vec<f64>,
    pub operators: Vec<ComplexMatrix>,
    /// Largest reflected probability dropped when building from a reflecting provider.
    pub discarded_reflection: f64,
}

impl KrausSet {
    /// `Σ_l M_l ρ M_l†`.
    pub fn apply(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        let n = rho.rows();
        let mut out = ComplexMatrix::zeros(n, n);
        for m in &self.operators {
            out = &out + &(&(m * rho) * &m.adjoint());
        }
        out
    }

    /// `‖Σ_l M_l†M_l − I‖_max`.
    pub fn completeness_defect(&self) -> f64 {
        let n = self.operators[0].rows();
        let mut acc = ComplexMatrix::zeros(n, n);
        for m in &self.operators {
            acc = &acc + &(&m.adjoint() * m);
        }
        acc.max_abs_diff(&ComplexMatrix::identity(n))
    }
}

/// Distinct values of `e_{J'} − e_J`, ascending, merged within [`BOHR_TOL`].
pub fn bohr_frequencies(model: &InternalModel) -> Vec<f64> {
    let e = model.energies();
    let mut all: Vec<f64> = e.iter().flat_map(|a| e.iter().map(move |b| a - b)).collect();
    all.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::new();
    for d in all {
        if out.last().is_none_or(|&l| d - l >= BOHR_TOL) {
            out.push(d);
        }
    }
    out
}

/// Kraus operators `M_l = Σ t_{J'J}(p0²/2m + e_J) |J'⟩⟨J|` over pairs with
/// Bohr frequency `Δ_l`. Reflection amplitudes are dropped.
pub fn kraus_set(provider: &AmplitudeProvider, p0: f64) -> Result<KrausSet, MapError> {
    let model = provider.model();
    let n = model.dim();
    let tabs = tables(provider, p0)?;
    let frequencies = bohr_frequencies(model);
    let e = model.energies();
    let mut operators = vec![ComplexMatrix::zeros(n, n); frequencies.len()];
    for (j, tab) in tabs.iter().enumerate() {
        for jp in (0..n).filter(|&jp| tab.is_open(jp)) {
            let d = e[jp] - e[j];
            let l = frequencies
                .iter()
                .position(|&f| (f - d).abs() < BOHR_TOL)
                .expect("every gap is listed");
            operators[l][(jp, j)] = tab.transmission(jp, j);
        }
    }
    let discarded_reflection = tabs.iter().map(|t| t.reflected_mass()).fold(0.0, f64::max);
    if discarded_reflection > 0.0 {
        log::info!("Kraus set at p0 = {p0}: dropped reflected probability up to {discarded_reflection:e}");
    }
    Ok(KrausSet {
        frequencies,
        operators,
        discarded_reflection,
    })
}

/// Choi matrix `C[(J N + J'), (K N + K')] = 𝕊^{JK}_{J'K'}`.
pub fn choi_matrix(tensor: &ScatteringMapTensor) -> ComplexMatrix {
    let n = tensor.dim;
    let mut c = ComplexMatrix::zeros(n * n, n * n);
    for (&(jp, kp, j, k), s) in &tensor.entries {
        c[(j * n + jp, k * n + kp)] = *s;
    }
    c
}

pub fn choi_min_eigenvalue(tensor: &ScatteringMapTensor) -> Result<f64, MapError> {
    Ok(eig_hermitian(&choi_matrix(tensor))?.values[0])
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NarrowPacketReport {
    /// `min m|Δ − Δ'|/(2p0)` over distinct Bohr frequencies; `None` if there is only one.
    pub min_bound: Option<f64>,
    /// `σ_p / min_bound`, zero when unconstrained.
    pub ratio: f64,
    pub pass: bool,
}

/// Checks `σ_p ≪ m|Δ_{J'J} − Δ_{K'K}|/(2p0)` with "≪" read as a ratio below [`NARROW_RATIO`].
pub fn narrow_packet_check(model: &InternalModel, p0: f64, sigma_p: f64) -> NarrowPacketReport {
    let freqs = bohr_frequencies(model);
    let min_gap = freqs
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    if !min_gap.is_finite() {
        return NarrowPacketReport {
            min_bound: None,
            ratio: 0.0,
            pass: true,
        };
    }
    let bound = model.mass() * min_gap / (2.0 * p0);
    let ratio = sigma_p / bound;
    NarrowPacketReport {
        min_bound: Some(bound),
        ratio,
        pass: ratio < NARROW_RATIO,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effective_models::ProviderKind;
    use crate::model::{build_two_qubit, TwoQubitParams};

    fn fig2() -> InternalModel {
        build_two_qubit(TwoQubitParams::new(1.0, 1.0, 1.0, 0.0), 0.1, 50.0).unwrap()
    }

    fn p0_for(ke: f64, m: f64) -> f64 {
        (2.0 * m * ke).sqrt()
    }

    #[test]
    fn free_model_map_is_identity_on_populations() {
        let m = build_two_qubit(TwoQubitParams::new(1.0, 1.5, 0.0, 0.0), 0.1, 50.0).unwrap();
        for kind in [ProviderKind::Exact, ProviderKind::Wvo, ProviderKind::Rit] {
            let prov = AmplitudeProvider::new(kind, m.clone());
            let map = build_map(&prov, 2.0).unwrap();
            for j in 0..4 {
                assert!((map.get(j, j, j, j) - C64::new(1.0, 0.0)).norm() < 1e-12);
            }
            let p = transition_probabilities(&prov, 2.0).unwrap();
            assert!(p.max_abs_diff(&RealMatrix::identity(4)) < 1e-12);
            let k = kraus_set(&prov, 2.0).unwrap();
            let nonzero: Vec<_> = k.operators.iter().filter(|m| m.max_abs() > 1e-12).collect();
            assert_eq!(nonzero.len(), 1);
            assert!(nonzero[0].unitarity_defect() < 1e-12);
        }
    }

    #[test]
    fn populations_match_transition_probabilities() {
        let m = fig2();
        let prov = AmplitudeProvider::new(ProviderKind::Exact, m);
        let p0 = p0_for(10.0, 0.1);
        let map = build_map(&prov, p0).unwrap();
        let out = apply_map(&map, &DensityMatrix::pure(4, 0)).unwrap();
        let p = transition_probabilities(&prov, p0).unwrap();
        for jp in 0..4 {
            assert!((out.populations()[jp] - p[(jp, 0)]).abs() < 1e-12);
        }
    }

    #[test]
    fn maximally_mixed_keeps_trace() {
        let prov = AmplitudeProvider::new(ProviderKind::Wvo, fig2());
        let map = build_map(&prov, 1.7).unwrap();
        let out = apply_map(&map, &DensityMatrix::maximally_mixed(4)).unwrap();
        assert!((out.matrix().trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coherences_between_different_jumps_vanish() {
        // non-degenerate H0: a coherence between |00> and |11> maps only onto
        // pairs with the same Bohr frequency
        let m = build_two_qubit(TwoQubitParams::new(1.0, 1.7, 0.8, 0.1), 0.5, 3.0).unwrap();
        let prov = AmplitudeProvider::new(ProviderKind::Rit, m.clone());
        let map = build_map(&prov, 3.0).unwrap();
        for (&(jp, kp, j, k), _) in &map.entries {
            assert!(bohr_equal(&m, jp, j, kp, k));
            if jp == kp {
                // population outputs only see population inputs
                assert_eq!(j, k);
            }
        }
    }

    #[test]
    fn kraus_reproduces_tensor_for_reflectionless_providers() {
        let m = fig2();
        for kind in [ProviderKind::Wvo, ProviderKind::Rit] {
            let prov = AmplitudeProvider::new(kind, m.clone());
            let p0 = p0_for(3.0, 0.1);
            let map = build_map(&prov, p0).unwrap();
            let ks = kraus_set(&prov, p0).unwrap();
            assert!(ks.completeness_defect() < 1e-10);
            let mut rho = ComplexMatrix::zeros(4, 4);
            rho[(0, 0)] = C64::new(0.4, 0.0);
            rho[(3, 3)] = C64::new(0.6, 0.0);
            rho[(0, 3)] = C64::new(0.1, 0.2);
            rho[(3, 0)] = C64::new(0.1, -0.2);
            assert!(ks.apply(&rho).max_abs_diff(&map.apply_raw(&rho)) < 1e-12);
            assert!(choi_min_eigenvalue(&map).unwrap() > -1e-10);
        }
    }

    #[test]
    fn exact_kraus_reports_dropped_reflection() {
        let prov = AmplitudeProvider::new(ProviderKind::Exact, fig2());
        let ks = kraus_set(&prov, p0_for(0.6, 0.1)).unwrap();
        assert!(ks.discarded_reflection > 0.0);
    }

    #[test]
    fn bohr_frequencies_of_two_qubits() {
        assert_eq!(bohr_frequencies(&fig2()), vec![-4.0, -2.0, 0.0, 2.0, 4.0]);
    }

    #[test]
    fn narrow_packet_condition() {
        let m = fig2();
        let p0 = 2f64.sqrt();
        let r = narrow_packet_check(&m, p0, 0.005);
        assert!((r.min_bound.unwrap() - 0.1 * 2.0 / (2.0 * p0)).abs() < 1e-15);
        assert!(r.pass);
        assert!(!narrow_packet_check(&m, p0, 0.05).pass);
        assert!(narrow_packet_check(&m, p0, 1e-300).pass);
        let single = InternalModel::new(vec![0.0], vec![0.0], ComplexMatrix::zeros(1, 1), 1.0, 1.0, Default::default()).unwrap();
        assert!(narrow_packet_check(&single, 1.0, 10.0).pass);
    }

    #[test]
    fn invalid_states_rejected() {
        assert!(DensityMatrix::from_populations(&[0.5, 0.6]).is_err());
        assert!(DensityMatrix::from_populations(&[1.5, -0.5]).is_err());
        assert!(DensityMatrix::from_populations(&[0.25, 0.75]).is_ok());
    }
}
