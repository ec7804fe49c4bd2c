//! Exact amplitudes against direct integration of the coupled stationary
//! Schrödinger equation `ψ'' = 2m(H(x) − E)ψ`.

use qthermostat::effective_models::{exact_amplitudes, AmplitudeProvider, ProviderKind};
use qthermostat::exact_scatter::{channels, TOL_U};
use qthermostat::linalg::{principal_sqrt, solve, ComplexMatrix, C64};
use qthermostat::model::{build_two_qubit, InternalModel, ModelOptions, TwoQubitParams};

/// Classical RK4 on `(ψ, ψ')` from `x0` to `x1` with `steps` steps.
fn integrate(a: &ComplexMatrix, psi: Vec<C64>, dpsi: Vec<C64>, x0: f64, x1: f64, steps: usize) -> (Vec<C64>, Vec<C64>) {
    let n = psi.len();
    let h = (x1 - x0) / steps as f64;
    let f = |p: &[C64], d: &[C64]| -> (Vec<C64>, Vec<C64>) {
        let acc: Vec<C64> = (0..n).map(|i| (0..n).map(|j| a[(i, j)] * p[j]).sum()).collect();
        (d.to_vec(), acc)
    };
    let axpy = |x: &[C64], y: &[C64], s: f64| -> Vec<C64> { x.iter().zip(y).map(|(a, b)| a + b * s).collect() };
    let (mut p, mut d) = (psi, dpsi);
    for _ in 0..steps {
        let (k1p, k1d) = f(&p, &d);
        let (k2p, k2d) = f(&axpy(&p, &k1p, h / 2.0), &axpy(&d, &k1d, h / 2.0));
        let (k3p, k3d) = f(&axpy(&p, &k2p, h / 2.0), &axpy(&d, &k2d, h / 2.0));
        let (k4p, k4d) = f(&axpy(&p, &k3p, h), &axpy(&d, &k3d, h));
        for i in 0..n {
            p[i] += (k1p[i] + k2p[i] * 2.0 + k3p[i] * 2.0 + k4p[i]) * (h / 6.0);
            d[i] += (k1d[i] + k2d[i] * 2.0 + k3d[i] * 2.0 + k4d[i]) * (h / 6.0);
        }
    }
    (p, d)
}

/// `P[(J', J)]` for left incidence by shooting outgoing-right solutions
/// (`e^{ik x}`, decaying for closed channels) back to the left edge.
fn ode_probabilities(model: &InternalModel, total_e: f64, steps: usize) -> Vec<Vec<f64>> {
    let n = model.dim();
    let m = model.mass();
    let half = model.length() / 2.0;
    let k: Vec<C64> = model
        .energies()
        .iter()
        .map(|e| principal_sqrt(C64::new(2.0 * m * (total_e - e), 0.0)))
        .collect();
    let shifted = model.h() - &ComplexMatrix::identity(n).scale(C64::new(total_e, 0.0));
    let a = shifted.scale(C64::new(2.0 * m, 0.0));
    let i = C64::new(0.0, 1.0);
    let mut incoming = ComplexMatrix::zeros(n, n);
    let mut outgoing = ComplexMatrix::zeros(n, n);
    for c in 0..n {
        let mut psi = vec![C64::new(0.0, 0.0); n];
        let mut dpsi = psi.clone();
        psi[c] = (i * k[c] * half).exp();
        dpsi[c] = i * k[c] * psi[c];
        let (p, d) = integrate(&a, psi, dpsi, half, -half, steps);
        for j in 0..n {
            // ψ_j = a e^{ikx} + b e^{−ikx} at x = −L/2
            let ikx = i * k[j] * -half;
            incoming[(j, c)] = (p[j] + d[j] / (i * k[j])) * 0.5 * (-ikx).exp();
            outgoing[(j, c)] = (p[j] - d[j] / (i * k[j])) * 0.5 * ikx.exp();
        }
    }
    let open: Vec<bool> = model.energies().iter().map(|&e| e < total_e).collect();
    let mut probs = vec![vec![0.0; n]; n];
    for j in (0..n).filter(|&j| open[j]) {
        let mut rhs = ComplexMatrix::zeros(n, 1);
        rhs[(j, 0)] = C64::new(1.0, 0.0);
        let alpha = solve(&incoming, &rhs).unwrap();
        let refl = &outgoing * &alpha;
        for jp in (0..n).filter(|&jp| open[jp]) {
            probs[jp][j] = k[jp].re / k[j].re * (alpha[(jp, 0)].norm_sqr() + refl[(jp, 0)].norm_sqr());
        }
    }
    probs
}

fn compare(model: &InternalModel, total_e: f64, steps: usize) -> f64 {
    let want = ode_probabilities(model, total_e, steps);
    let got = exact_amplitudes(model, total_e, TOL_U).unwrap();
    let mut worst: f64 = 0.0;
    for j in 0..model.dim() {
        for jp in 0..model.dim() {
            worst = worst.max((got.probability(jp, j) - want[jp][j]).abs());
        }
    }
    worst
}

#[test]
fn two_qubit_all_channels_open() {
    let model = build_two_qubit(TwoQubitParams::new(1.0, 1.0, 1.0, 0.0), 1.0, 50.0).unwrap();
    for e in [3.0, 4.0, 6.0] {
        let d = compare(&model, e, 40_000);
        assert!(d < 1e-7, "E = {e}: {d:e}");
    }
}

#[test]
fn two_qubit_anisotropic_low_mass() {
    let model = build_two_qubit(TwoQubitParams::new(1.0, 0.7, 0.6, -0.3), 0.1, 50.0).unwrap();
    for e in [1.9, 2.5, 8.0] {
        let d = compare(&model, e, 20_000);
        assert!(d < 1e-7, "E = {e}: {d:e}");
    }
}

#[test]
fn generic_model_with_closed_channels() {
    let h = ComplexMatrix::from_real_rows(&[
        vec![0.3, -0.5, 0.2],
        vec![-0.5, -0.1, 0.4],
        vec![0.2, 0.4, 0.6],
    ]);
    let model = InternalModel::new(vec![0.0], vec![-1.0, 0.5, 2.0], h, 0.8, 2.0, ModelOptions::default()).unwrap();
    for e in [-0.4, 1.0, 3.0] {
        assert!(channels(&model, e).n_open() >= 1);
        let d = compare(&model, e, 20_000);
        assert!(d < 1e-8, "E = {e}: {d:e}");
    }
}

#[test]
fn effective_models_approach_exact_at_high_energy() {
    let model = build_two_qubit(TwoQubitParams::new(1.0, 1.0, 1.0, 0.0), 0.1, 50.0).unwrap();
    let exact = AmplitudeProvider::new(ProviderKind::Exact, model.clone());
    let wvo = AmplitudeProvider::new(ProviderKind::Wvo, model.clone());
    let gap = |e: f64| {
        let a = exact.at_energy(e).unwrap();
        let b = wvo.at_energy(e).unwrap();
        (0..4)
            .flat_map(|j| (0..4).map(move |jp| (jp, j)))
            .map(|(jp, j)| (a.probability(jp, j) - b.probability(jp, j)).abs())
            .fold(0.0, f64::max)
    };
    assert!(gap(400.0) < gap(12.0));
    assert!(gap(400.0) < 1e-3);
}
