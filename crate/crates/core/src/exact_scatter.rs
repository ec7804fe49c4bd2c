//! Exact multichannel scattering off a flat interaction region `|x| < L/2`.
//!
//! Two routes are provided. [`transfer_matrix`] and [`scattering_solution`]
//! follow the textbook construction: the transfer matrix
//! `ℳ = 𝕄⁻¹(L/2,𝕂₀) 𝕄(L/2,𝕂) 𝕄⁻¹(−L/2,𝕂) 𝕄(−L/2,𝕂₀)` and the scattering
//! matrix read off its blocks. This is exact in exact arithmetic but carries
//! factors `e^{±κL}` for evanescent channels, so it loses precision quickly for
//! long or opaque scatterers. [`matched_solution`] solves the same matching
//! conditions directly with amplitudes referenced to the nearest edge, which
//! keeps every matrix entry bounded; it is what the exact amplitude provider
//! uses.

use thiserror::Error;

use crate::linalg::{principal_sqrt, solve, ComplexMatrix, LinalgError, Lu, C64};
use crate::model::InternalModel;

/// Channels within this distance (energy units) of threshold are excluded.
pub const EPS_THR: f64 = 1e-8;
/// Default unitarity tolerance.
pub const TOL_U: f64 = 1e-8;
/// Unitarity tolerance used instead of [`TOL_U`] close to a threshold.
pub const TOL_U_RELAXED: f64 = 1e-6;
/// Energy distance to the nearest open threshold below which a solution is
/// treated as near-threshold.
pub const NEAR_THRESHOLD_BAND: f64 = 1e-5;
/// Largest `|Im k| |x|` accepted before `e^{|Im k| |x|}` is considered an overflow.
pub const MAX_EXPONENT: f64 = 700.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScatterError {
    #[error("exponent |Im k| x = {exponent:.1} exceeds {MAX_EXPONENT}; barrier too opaque for the transfer-matrix route")]
    Overflow { exponent: f64 },
    #[error("singular matching system at E = {energy} (channel threshold?): {source}")]
    Singular { energy: f64, source: LinalgError },
    #[error("scattering matrix not unitary: defect {defect:e} exceeds {tol:e} at E = {energy}")]
    NotUnitary { energy: f64, defect: f64, tol: f64 },
    #[error("energy {0} is not finite")]
    BadEnergy(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Wave vectors at a fixed total energy.
#[derive(Clone, Debug)]
pub struct ChannelSet {
    pub total_e: f64,
    /// `k_J = √(2m(E − e_J))`, stored-basis order.
    pub k: Vec<C64>,
    /// `k'_n = √(2m(E − e'_n))`, in the order of the eigenvalues of `H`.
    pub k_prime: Vec<C64>,
    /// Open channels, ascending.
    pub open: Vec<usize>,
    /// Channels with `e_J ≤ E` dropped because they sit within [`EPS_THR`] of threshold.
    pub at_threshold: Vec<usize>,
    /// Distance from `E` to the closest `e_J ≤ E`.
    pub threshold_gap: f64,
}

impl ChannelSet {
    pub fn n_open(&self) -> usize {
        self.open.len()
    }

    pub fn is_open(&self, j: usize) -> bool {
        self.open.binary_search(&j).is_ok()
    }

    pub fn near_threshold(&self) -> bool {
        self.threshold_gap < NEAR_THRESHOLD_BAND
    }
}

pub fn channels(model: &InternalModel, total_e: f64) -> ChannelSet {
    let m = model.mass();
    let sp = model.spectral();
    let k: Vec<C64> = sp
        .e
        .iter()
        .map(|&e| principal_sqrt(C64::new(2.0 * m * (total_e - e), 0.0)))
        .collect();
    let k_prime: Vec<C64> = sp
        .e_prime
        .iter()
        .map(|&e| principal_sqrt(C64::new(2.0 * m * (total_e - e), 0.0)))
        .collect();
    let mut open = Vec::new();
    let mut at_threshold = Vec::new();
    let mut gap = f64::INFINITY;
    for (j, &e) in sp.e.iter().enumerate() {
        if e <= total_e {
            gap = gap.min(total_e - e);
            if total_e - e > EPS_THR {
                open.push(j);
            } else {
                at_threshold.push(j);
            }
        }
    }
    if !at_threshold.is_empty() {
        log::warn!(
            "E = {total_e} lies within {EPS_THR:e} of threshold for channels {at_threshold:?}; excluded from the open set"
        );
    }
    ChannelSet {
        total_e,
        k,
        k_prime,
        open,
        at_threshold,
        threshold_gap: gap,
    }
}

/// `𝕂 = V diag(k) V†`; `vectors = None` means `V = I`.
#[derive(Clone, Debug)]
pub struct WaveVectorOperator {
    pub k: Vec<C64>,
    pub vectors: Option<ComplexMatrix>,
}

impl WaveVectorOperator {
    /// `𝕂₀(E)`, diagonal in the stored basis.
    pub fn free(cs: &ChannelSet) -> Self {
        Self {
            k: cs.k.clone(),
            vectors: None,
        }
    }

    /// `𝕂(E) = √(2m(E − H))`.
    pub fn interacting(model: &InternalModel, cs: &ChannelSet) -> Self {
        Self {
            k: cs.k_prime.clone(),
            vectors: Some(model.spectral().v_prime.clone()),
        }
    }

    pub fn dim(&self) -> usize {
        self.k.len()
    }

    fn lift(&self, d: &[C64]) -> ComplexMatrix {
        match &self.vectors {
            None => ComplexMatrix::from_diag(d),
            Some(v) => &v.diag_mul_right(d) * &v.adjoint(),
        }
    }

    pub fn matrix(&self) -> ComplexMatrix {
        self.lift(&self.k)
    }
}

/// `𝕄(x, 𝕂) = [[e^{i𝕂x}, e^{−i𝕂x}], [𝕂e^{i𝕂x}, −𝕂e^{−i𝕂x}]]`.
pub fn boundary_matrix(x: f64, op: &WaveVectorOperator) -> Result<ComplexMatrix, ScatterError> {
    let exponent = op.k.iter().map(|k| k.im.abs() * x.abs()).fold(0.0, f64::max);
    if exponent > MAX_EXPONENT {
        return Err(ScatterError::Overflow { exponent });
    }
    let i = C64::new(0.0, 1.0);
    let plus: Vec<C64> = op.k.iter().map(|k| (i * k * x).exp()).collect();
    let minus: Vec<C64> = op.k.iter().map(|k| (-i * k * x).exp()).collect();
    let kp: Vec<C64> = op.k.iter().zip(&plus).map(|(k, e)| k * e).collect();
    let km: Vec<C64> = op.k.iter().zip(&minus).map(|(k, e)| -k * e).collect();
    Ok(ComplexMatrix::from_blocks(
        &op.lift(&plus),
        &op.lift(&minus),
        &op.lift(&kp),
        &op.lift(&km),
    ))
}

fn singular(energy: f64) -> impl Fn(LinalgError) -> ScatterError {
    move |e| match e {
        LinalgError::Singular { .. } => ScatterError::Singular { energy, source: e },
        other => ScatterError::Linalg(other),
    }
}

/// Transfer matrix mapping `(α, β)` on the left to `(α'', β'')` on the right,
/// composed right to left with LU solves.
pub fn transfer_matrix(model: &InternalModel, cs: &ChannelSet) -> Result<ComplexMatrix, ScatterError> {
    let half = 0.5 * model.length();
    let k0 = WaveVectorOperator::free(cs);
    let k = WaveVectorOperator::interacting(model, cs);
    let err = singular(cs.total_e);
    let x = boundary_matrix(-half, &k0)?;
    let x = solve(&boundary_matrix(-half, &k)?, &x).map_err(&err)?;
    let x = &boundary_matrix(half, &k)? * &x;
    solve(&boundary_matrix(half, &k0)?, &x).map_err(&err)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Route {
    TransferMatrix,
    Matched,
}

#[derive(Clone, Debug)]
pub struct ScatteringSolution {
    pub total_e: f64,
    pub route: Route,
    /// `ℳ`, present for the transfer-matrix route.
    pub transfer: Option<ComplexMatrix>,
    /// Full `2N×2N` scattering matrix mapping incoming `(α, β'')` to
    /// outgoing `(β, α'')`. For the matched route amplitudes are referenced to
    /// the nearest edge of the scatterer instead of `x = 0`.
    pub s_full: ComplexMatrix,
    pub open: Vec<usize>,
    /// Flux-normalized scattering matrix on open channels,
    /// `[[r, t'], [t, r']]` with left channels first.
    pub s_tilde: ComplexMatrix,
    pub near_threshold: bool,
}

impl ScatteringSolution {
    pub fn n_open(&self) -> usize {
        self.open.len()
    }

    /// Reflection for incidence from the left, `r = S̃11`.
    pub fn r(&self) -> ComplexMatrix {
        let n = self.n_open();
        self.s_tilde.block(0, 0, n, n)
    }

    /// Transmission for incidence from the left, `t = S̃21`.
    pub fn t(&self) -> ComplexMatrix {
        let n = self.n_open();
        self.s_tilde.block(n, 0, n, n)
    }

    pub fn t_right(&self) -> ComplexMatrix {
        let n = self.n_open();
        self.s_tilde.block(0, n, n, n)
    }

    pub fn r_right(&self) -> ComplexMatrix {
        let n = self.n_open();
        self.s_tilde.block(n, n, n, n)
    }

    /// `‖S̃†S̃ − I‖_max`.
    pub fn unitarity_defect(&self) -> f64 {
        if self.n_open() == 0 {
            return 0.0;
        }
        self.s_tilde.unitarity_defect()
    }

    /// `max(‖S11 − S22‖, ‖S12 − S21‖)` on the open blocks.
    pub fn mirror_defect(&self) -> f64 {
        if self.n_open() == 0 {
            return 0.0;
        }
        self.r()
            .max_abs_diff(&self.r_right())
            .max(self.t().max_abs_diff(&self.t_right()))
    }

    /// `max(‖t − tᵀ‖, ‖r − rᵀ‖)`.
    pub fn reciprocity_defect(&self) -> f64 {
        if self.n_open() == 0 {
            return 0.0;
        }
        self.t().symmetry_defect().max(self.r().symmetry_defect())
    }

    /// Checks unitarity against `tol`, relaxed to [`TOL_U_RELAXED`] near threshold.
    pub fn check_unitarity(&self, tol: f64) -> Result<f64, ScatterError> {
        let defect = self.unitarity_defect();
        let mut tol = tol;
        if self.near_threshold && tol < TOL_U_RELAXED {
            if defect > tol {
                log::warn!(
                    "E = {} is near a channel threshold; unitarity tolerance relaxed to {TOL_U_RELAXED:e} (defect {defect:e})",
                    self.total_e
                );
            }
            tol = TOL_U_RELAXED;
        }
        if defect > tol {
            return Err(ScatterError::NotUnitary {
                energy: self.total_e,
                defect,
                tol,
            });
        }
        Ok(defect)
    }
}

/// Builds `S̃ = 𝕂₀^{1/2} 𝒮 𝕂₀^{−1/2}` on the open channels from the four
/// blocks of the full scattering matrix (already in `x = 0` phase reference
/// on open channels).
fn flux_normalize(s_blocks: [&ComplexMatrix; 4], cs: &ChannelSet) -> ComplexMatrix {
    let open = &cs.open;
    let n = open.len();
    let sq: Vec<f64> = open.iter().map(|&j| cs.k[j].re.sqrt()).collect();
    if n == 0 {
        return ComplexMatrix::zeros(1, 1);
    }
    let restricted: Vec<ComplexMatrix> = s_blocks
        .iter()
        .map(|b| {
            ComplexMatrix::from_fn(n, n, |a, c| b[(open[a], open[c])] * (sq[a] / sq[c]))
        })
        .collect();
    ComplexMatrix::from_blocks(&restricted[0], &restricted[1], &restricted[2], &restricted[3])
}

/// Scattering solution from the transfer matrix:
/// `S11 = −M22⁻¹M21`, `S12 = M22⁻¹`, `S21 = M11 − M12M22⁻¹M21`, `S22 = M12M22⁻¹`.
pub fn scattering_solution(model: &InternalModel, cs: &ChannelSet) -> Result<ScatteringSolution, ScatterError> {
    let transfer = transfer_matrix(model, cs)?;
    let n = model.dim();
    let m11 = transfer.block(0, 0, n, n);
    let m12 = transfer.block(0, n, n, n);
    let m21 = transfer.block(n, 0, n, n);
    let m22 = transfer.block(n, n, n, n);
    let lu = Lu::factor(&m22).map_err(singular(cs.total_e))?;
    if lu.condition_estimate > crate::linalg::CONDITION_WARN {
        log::warn!("M22 block ill-conditioned at E = {} (estimate {:e})", cs.total_e, lu.condition_estimate);
    }
    let s11 = -&lu.solve(&m21)?;
    let s12 = lu.solve(&ComplexMatrix::identity(n))?;
    let s21 = &m11 + &(&m12 * &s11);
    let s22 = &m12 * &s12;
    let s_full = ComplexMatrix::from_blocks(&s11, &s12, &s21, &s22);
    let s_tilde = flux_normalize([&s11, &s12, &s21, &s22], cs);
    Ok(ScatteringSolution {
        total_e: cs.total_e,
        route: Route::TransferMatrix,
        transfer: Some(transfer),
        s_full,
        open: cs.open.clone(),
        s_tilde,
        near_threshold: cs.near_threshold(),
    })
}

/// `sin(z)/z`, continuous through zero.
fn sinc(z: C64) -> C64 {
    if z.norm() < 1e-4 {
        C64::new(1.0, 0.0) - z * z / 6.0
    } else {
        z.sin() / z
    }
}

/// Edge values of the two interior basis functions of one eigen-channel of
/// `H`: `(f, f', g, g')` at `x = −L/2` and at `x = +L/2`.
struct EdgeValues {
    left: [C64; 4],
    right: [C64; 4],
}

fn interior_basis(kp: C64, length: f64) -> EdgeValues {
    let i = C64::new(0.0, 1.0);
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    if (kp * length).norm() >= 1.0 {
        // f = e^{ik'(x+L/2)}, g = e^{−ik'(x−L/2)}; |e^{ik'L}| ≤ 1 since Im k' ≥ 0
        let e = (i * kp * length).exp();
        EdgeValues {
            left: [one, i * kp, e, -i * kp * e],
            right: [e, i * kp * e, one, -i * kp],
        }
    } else {
        // f = cos(k'(x+L/2)), g = sin(k'(x+L/2))/k'
        let z = kp * length;
        let c = z.cos();
        EdgeValues {
            left: [one, zero, zero, one],
            right: [c, -kp * z.sin(), sinc(z) * length, c],
        }
    }
}

/// Scattering solution from a direct solve of the matching conditions at
/// `x = ±L/2`. Unknowns are the outgoing edge amplitudes and the interior
/// coefficients; no exponentially large factor ever appears.
pub fn matched_solution(model: &InternalModel, cs: &ChannelSet) -> Result<ScatteringSolution, ScatterError> {
    if !cs.total_e.is_finite() {
        return Err(ScatterError::BadEnergy(cs.total_e));
    }
    let n = model.dim();
    let length = model.length();
    let v = &model.spectral().v_prime;
    let i = C64::new(0.0, 1.0);
    let edges: Vec<EdgeValues> = cs.k_prime.iter().map(|&kp| interior_basis(kp, length)).collect();
    let ik0: Vec<C64> = cs.k.iter().map(|k| i * k).collect();

    // column layout: [B | A'' | c1 | c2]
    let mut a = ComplexMatrix::zeros(4 * n, 4 * n);
    for row in 0..n {
        a[(row, row)] = C64::new(1.0, 0.0);
        a[(n + row, row)] = -ik0[row];
        a[(2 * n + row, n + row)] = C64::new(1.0, 0.0);
        a[(3 * n + row, n + row)] = ik0[row];
        for (ch, ev) in edges.iter().enumerate() {
            let vr = v[(row, ch)];
            let [fl, dfl, gl, dgl] = ev.left;
            let [fr, dfr, gr, dgr] = ev.right;
            a[(row, 2 * n + ch)] = -vr * fl;
            a[(row, 3 * n + ch)] = -vr * gl;
            a[(n + row, 2 * n + ch)] = -vr * dfl;
            a[(n + row, 3 * n + ch)] = -vr * dgl;
            a[(2 * n + row, 2 * n + ch)] = -vr * fr;
            a[(2 * n + row, 3 * n + ch)] = -vr * gr;
            a[(3 * n + row, 2 * n + ch)] = -vr * dfr;
            a[(3 * n + row, 3 * n + ch)] = -vr * dgr;
        }
    }
    // right-hand sides: unit incoming A (left) in columns 0..n, B'' (right) in n..2n
    let mut rhs = ComplexMatrix::zeros(4 * n, 2 * n);
    for j in 0..n {
        rhs[(j, j)] = C64::new(-1.0, 0.0);
        rhs[(n + j, j)] = -ik0[j];
        rhs[(2 * n + j, n + j)] = C64::new(-1.0, 0.0);
        rhs[(3 * n + j, n + j)] = ik0[j];
    }
    let x = solve(&a, &rhs).map_err(singular(cs.total_e))?;
    let edge11 = x.block(0, 0, n, n);
    let edge12 = x.block(0, n, n, n);
    let edge21 = x.block(n, 0, n, n);
    let edge22 = x.block(n, n, n, n);
    let s_full = ComplexMatrix::from_blocks(&edge11, &edge12, &edge21, &edge22);

    // move the phase reference to x = 0 on open channels only; closed
    // channels would pick up e^{κL/2} and are never used downstream
    let ph: Vec<C64> = (0..n)
        .map(|j| {
            if cs.is_open(j) {
                (-i * cs.k[j] * (0.5 * length)).exp()
            } else {
                C64::new(1.0, 0.0)
            }
        })
        .collect();
    let rephase = |b: &ComplexMatrix| b.diag_mul_left(&ph).diag_mul_right(&ph);
    let blocks = [rephase(&edge11), rephase(&edge12), rephase(&edge21), rephase(&edge22)];
    let s_tilde = flux_normalize([&blocks[0], &blocks[1], &blocks[2], &blocks[3]], cs);
    Ok(ScatteringSolution {
        total_e: cs.total_e,
        route: Route::Matched,
        transfer: None,
        s_full,
        open: cs.open.clone(),
        s_tilde,
        near_threshold: cs.near_threshold(),
    })
}

/// `max_J |1 − Σ_{J'} (|r_{J'J}|² + |t_{J'J}|²)|` over incident open channels.
pub fn current_residual(sol: &ScatteringSolution) -> f64 {
    let n = sol.n_open();
    let (t, r) = (sol.t(), sol.r());
    (0..n)
        .map(|j| {
            let s: f64 = (0..n).map(|jp| t[(jp, j)].norm_sqr() + r[(jp, j)].norm_sqr()).sum();
            (1.0 - s).abs()
        })
        .fold(0.0, f64::max)
}

/// Largest entry of the full `𝒮` mapping a closed incoming channel to an
/// open outgoing one. Purely diagnostic: closed-channel inputs are
/// unphysical and never enter amplitude tables.
pub fn closed_to_open_leakage(sol: &ScatteringSolution) -> f64 {
    let n = sol.s_full.rows() / 2;
    let is_open = |j: usize| sol.open.binary_search(&(j % n)).is_ok();
    let mut worst: f64 = 0.0;
    for row in 0..2 * n {
        if !is_open(row) {
            continue;
        }
        for col in 0..2 * n {
            if !is_open(col) {
                worst = worst.max(sol.s_full[(row, col)].norm());
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_two_qubit, InternalModel, ModelOptions, TwoQubitParams};

    fn fig2(m: f64, l: f64) -> InternalModel {
        build_two_qubit(TwoQubitParams::new(1.0, 1.0, 1.0, 0.0), m, l).unwrap()
    }

    fn barrier(v0: f64, m: f64, l: f64) -> InternalModel {
        InternalModel::new(
            vec![0.0],
            vec![0.0],
            ComplexMatrix::from_real_diag(&[v0]),
            m,
            l,
            ModelOptions::default(),
        )
        .unwrap()
    }

    fn closed_form_barrier(e: f64, v0: f64, m: f64, l: f64) -> f64 {
        let kp = principal_sqrt(C64::new(2.0 * m * (e - v0), 0.0));
        let s = (kp * l).sin();
        let denom = C64::new(1.0, 0.0) + (s * s) * (v0 * v0 / (4.0 * e * (e - v0)));
        1.0 / denom.re
    }

    #[test]
    fn channel_wave_vectors() {
        let m = fig2(0.1, 50.0);
        let cs = channels(&m, 10.0);
        assert_eq!(cs.open, vec![0, 1, 2, 3]);
        assert!((cs.k[0] - C64::new(1.6f64.sqrt(), 0.0)).norm() < 1e-15);
        let cs = channels(&m, 1.0);
        assert_eq!(cs.open, vec![1, 2, 3]);
        assert!((cs.k[0] - C64::new(0.0, 0.2f64.sqrt())).norm() < 1e-15);
        let cs = channels(&m, 5f64.sqrt() + 0.5);
        assert!(cs.k_prime.iter().all(|k| k.im == 0.0 && k.re > 0.0));
        for (k, e) in cs.k.iter().zip(m.energies()) {
            assert!(((k * k).re / 0.2 + e - cs.total_e).abs() < 1e-12);
        }
    }

    #[test]
    fn threshold_channel_excluded() {
        let m = fig2(0.1, 50.0);
        let cs = channels(&m, 2.0 + 1e-10);
        assert_eq!(cs.open, vec![1, 2, 3]);
        assert_eq!(cs.at_threshold, vec![0]);
        assert!(cs.near_threshold());
    }

    #[test]
    fn boundary_matrix_at_origin() {
        let m = fig2(0.1, 50.0);
        let cs = channels(&m, 10.0);
        let op = WaveVectorOperator::interacting(&m, &cs);
        let b = boundary_matrix(0.0, &op).unwrap();
        let k = op.matrix();
        let id = ComplexMatrix::identity(4);
        assert!(b.block(0, 0, 4, 4).max_abs_diff(&id) < 1e-14);
        assert!(b.block(0, 4, 4, 4).max_abs_diff(&id) < 1e-14);
        assert!(b.block(4, 0, 4, 4).max_abs_diff(&k) < 1e-14);
        assert!(b.block(4, 4, 4, 4).max_abs_diff(&-&k) < 1e-14);
    }

    #[test]
    fn boundary_matrix_inverts() {
        let m = fig2(0.1, 5.0);
        let cs = channels(&m, 3.0);
        for op in [WaveVectorOperator::free(&cs), WaveVectorOperator::interacting(&m, &cs)] {
            let b = boundary_matrix(2.5, &op).unwrap();
            let back = solve(&b, &b).unwrap();
            assert!(back.max_abs_diff(&ComplexMatrix::identity(8)) < 1e-10);
        }
    }

    #[test]
    fn scalar_boundary_matrix() {
        let cs = channels(&barrier(0.0, 1.0, 2.0), 2.0);
        let b = boundary_matrix(1.0, &WaveVectorOperator::free(&cs)).unwrap();
        let k = 2.0;
        let e = C64::new(0.0, k).exp();
        assert!((b[(0, 0)] - e).norm() < 1e-15);
        assert!((b[(0, 1)] - e.conj()).norm() < 1e-15);
        assert!((b[(1, 0)] - e * k).norm() < 1e-15);
        assert!((b[(1, 1)] + e.conj() * k).norm() < 1e-15);
    }

    #[test]
    fn overflow_guarded() {
        let m = barrier(10.0, 1.0, 400.0);
        let cs = channels(&m, 1.0);
        assert!(matches!(transfer_matrix(&m, &cs), Err(ScatterError::Overflow { .. })));
        // the matched route is unaffected
        let sol = matched_solution(&m, &cs).unwrap();
        assert!(sol.unitarity_defect() < 1e-12);
        assert!(sol.t()[(0, 0)].norm() < 1e-100);
    }

    #[test]
    fn free_propagation() {
        let m = build_two_qubit(TwoQubitParams::new(1.0, 1.5, 0.0, 0.0), 0.3, 7.0).unwrap();
        let cs = channels(&m, 4.0);
        for sol in [scattering_solution(&m, &cs).unwrap(), matched_solution(&m, &cs).unwrap()] {
            assert!(sol.r().max_abs() < 1e-12);
            // plane waves referenced to x = 0 pass through unchanged
            assert!(sol.t().max_abs_diff(&ComplexMatrix::identity(4)) < 1e-12);
            assert!(current_residual(&sol) < 1e-13);
        }
    }

    #[test]
    fn square_barrier_matches_closed_form() {
        let m = barrier(1.0, 1.0, 3.0);
        let cs = channels(&m, 2.0);
        let want = closed_form_barrier(2.0, 1.0, 1.0, 3.0);
        for sol in [scattering_solution(&m, &cs).unwrap(), matched_solution(&m, &cs).unwrap()] {
            assert!((sol.t()[(0, 0)].norm_sqr() - want).abs() < 1e-12);
        }
        // tunnelling
        let m = barrier(3.0, 1.0, 2.0);
        let cs = channels(&m, 1.0);
        let want = closed_form_barrier(1.0, 3.0, 1.0, 2.0);
        let sol = matched_solution(&m, &cs).unwrap();
        assert!((sol.t()[(0, 0)].norm_sqr() - want).abs() < 1e-12);
    }

    #[test]
    fn barrier_at_interior_zero_wave_vector() {
        // E equal to the barrier height: k' = 0 inside
        let m = barrier(1.0, 1.0, 3.0);
        let cs = channels(&m, 1.0);
        let sol = matched_solution(&m, &cs).unwrap();
        // E -> V0 limit of the closed form: 1 / (1 + m V0 L² / 2)
        let want = 1.0 / (1.0 + 1.0 * 1.0 * 9.0 / 2.0);
        assert!((sol.t()[(0, 0)].norm_sqr() - want).abs() < 1e-12);
        assert!(sol.unitarity_defect() < 1e-13);
    }

    #[test]
    fn routes_agree_and_are_unitary() {
        let m = fig2(0.1, 5.0);
        for e in [1.3, 2.5, 3.7, 10.0] {
            let cs = channels(&m, e);
            let a = scattering_solution(&m, &cs).unwrap();
            let b = matched_solution(&m, &cs).unwrap();
            assert!(a.s_tilde.max_abs_diff(&b.s_tilde) < 1e-10, "E = {e}");
            assert!(b.unitarity_defect() < 1e-12);
            assert!(b.reciprocity_defect() < 1e-12);
            assert!(b.mirror_defect() < 1e-12);
        }
    }

    #[test]
    fn fig2_parameters_conserve_current() {
        let m = fig2(0.1, 50.0);
        let sol = matched_solution(&m, &channels(&m, 10.0)).unwrap();
        assert!(current_residual(&sol) < 1e-8);
        assert!(sol.check_unitarity(TOL_U).is_ok());
    }

    #[test]
    fn near_threshold_relaxes_tolerance() {
        let m = fig2(0.1, 50.0);
        let cs = channels(&m, 2.0 + 1e-7);
        let sol = matched_solution(&m, &cs).unwrap();
        assert!(sol.near_threshold);
        // a tolerance far below machine precision is replaced by the relaxed one
        assert!(sol.check_unitarity(1e-30).is_ok());
    }

    #[test]
    fn closed_channels_couple_in_full_matrix() {
        let m = fig2(0.1, 5.0);
        let cs = channels(&m, 1.3);
        let sol = scattering_solution(&m, &cs).unwrap();
        assert!(closed_to_open_leakage(&sol) > 0.0);
        assert!(sol.unitarity_defect() < 1e-10);
    }
}
