//! Globally adaptive Gauss–Kronrod (7/15) quadrature for vector-valued integrands.

use thiserror::Error;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
/// Gauss weights for the nodes `XGK[1], XGK[3], XGK[5], XGK[7]`.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError<E> {
    #[error("integrand failed at x = {x}: {source}")]
    Integrand { x: f64, source: E },
    #[error("quadrature did not converge for component {component}: value {value:e}, estimated error {error:e}")]
    NotConverged { component: usize, value: f64, error: f64 },
    #[error("integrand returned {got} components, expected {expected}")]
    Dimension { expected: usize, got: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadOptions {
    /// Refinement stops once every component meets `max(abs_tol, rel_tol |I|)`.
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Relative error above which an unconverged result is an error.
    pub fail_rel_tol: f64,
    pub max_panels: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-15,
            fail_rel_tol: 1e-6,
            max_panels: 4000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuadResult {
    pub value: Vec<f64>,
    pub error: Vec<f64>,
    pub panels: usize,
    pub evaluations: usize,
}

struct Panel {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: Vec<f64>,
}

fn kronrod_panel<E>(
    f: &impl Fn(f64) -> Result<Vec<f64>, E>,
    a: f64,
    b: f64,
    dim: usize,
) -> Result<Panel, QuadError<E>> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut k = vec![0.0; dim];
    let mut g = vec![0.0; dim];
    let eval = |x: f64| -> Result<Vec<f64>, QuadError<E>> {
        let y = f(x).map_err(|source| QuadError::Integrand { x, source })?;
        if y.len() != dim {
            return Err(QuadError::Dimension {
                expected: dim,
                got: y.len(),
            });
        }
        Ok(y)
    };
    let mid = eval(c)?;
    for i in 0..dim {
        k[i] += WGK[7] * mid[i];
        g[i] += WG[3] * mid[i];
    }
    for n in 0..7 {
        let lo = eval(c - h * XGK[n])?;
        let hi = eval(c + h * XGK[n])?;
        for i in 0..dim {
            let s = lo[i] + hi[i];
            k[i] += WGK[n] * s;
            if n % 2 == 1 {
                g[i] += WG[n / 2] * s;
            }
        }
    }
    let value: Vec<f64> = k.iter().map(|v| v * h).collect();
    let error: Vec<f64> = k.iter().zip(&g).map(|(kv, gv)| ((kv - gv) * h).abs()).collect();
    Ok(Panel { a, b, value, error })
}

/// Integrates `f` over `[points[0], points[last]]`, never placing a node on
/// an interior point of `points` (use them for kinks and discontinuities).
pub fn integrate<E>(
    f: impl Fn(f64) -> Result<Vec<f64>, E>,
    points: &[f64],
    dim: usize,
    opts: QuadOptions,
) -> Result<QuadResult, QuadError<E>> {
    let mut pts: Vec<f64> = points.iter().copied().filter(|x| x.is_finite()).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * a.abs().max(b.abs()).max(1.0));
    let mut panels = Vec::new();
    for w in pts.windows(2) {
        panels.push(kronrod_panel(&f, w[0], w[1], dim)?);
    }
    let mut evaluations = 15 * panels.len();
    if panels.is_empty() {
        return Ok(QuadResult {
            value: vec![0.0; dim],
            error: vec![0.0; dim],
            panels: 0,
            evaluations: 0,
        });
    }
    loop {
        let mut value = vec![0.0; dim];
        let mut error = vec![0.0; dim];
        for p in &panels {
            for i in 0..dim {
                value[i] += p.value[i];
                error[i] += p.error[i];
            }
        }
        let tol: Vec<f64> = value
            .iter()
            .map(|v| opts.abs_tol.max(opts.rel_tol * v.abs()))
            .collect();
        let done = (0..dim).all(|i| error[i] <= tol[i]);
        if done || panels.len() >= opts.max_panels {
            if !done {
                for i in 0..dim {
                    let limit = opts.abs_tol.max(opts.fail_rel_tol * value[i].abs());
                    if error[i] > limit {
                        return Err(QuadError::NotConverged {
                            component: i,
                            value: value[i],
                            error: error[i],
                        });
                    }
                }
            }
            return Ok(QuadResult {
                value,
                error,
                panels: panels.len(),
                evaluations,
            });
        }
        let score = |p: &Panel| {
            (0..dim)
                .map(|i| p.error[i] / tol[i])
                .fold(0.0, f64::max)
        };
        let worst = (0..panels.len())
            .max_by(|&x, &y| score(&panels[x]).total_cmp(&score(&panels[y])))
            .expect("non-empty");
        let p = panels.swap_remove(worst);
        let m = 0.5 * (p.a + p.b);
        if m <= p.a || m >= p.b {
            // cannot bisect further in floating point
            return Err(QuadError::NotConverged {
                component: 0,
                value: value[0],
                error: error[0],
            });
        }
        panels.push(kronrod_panel(&f, p.a, m, dim)?);
        panels.push(kronrod_panel(&f, m, p.b, dim)?);
        evaluations += 30;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    fn ok(v: Vec<f64>) -> Result<Vec<f64>, Infallible> {
        Ok(v)
    }

    #[test]
    fn polynomials_exact() {
        let r = integrate(|x| ok(vec![1.0, x, x * x * x * x]), &[0.0, 2.0], 3, QuadOptions::default()).unwrap();
        assert!((r.value[0] - 2.0).abs() < 1e-15);
        assert!((r.value[1] - 2.0).abs() < 1e-15);
        assert!((r.value[2] - 32.0 / 5.0).abs() < 1e-13);
        assert_eq!(r.panels, 1);
    }

    #[test]
    fn exponential_weight() {
        let r = integrate(|u| ok(vec![(-u).exp()]), &[0.0, 40.0], 1, QuadOptions::default()).unwrap();
        assert!((r.value[0] - (1.0 - (-40f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn step_at_breakpoint() {
        let f = |x: f64| ok(vec![if x < 1.0 { 0.0 } else { (-x).exp() }]);
        let r = integrate(f, &[0.0, 1.0, 30.0], 1, QuadOptions::default()).unwrap();
        let want = (-1f64).exp() - (-30f64).exp();
        assert!((r.value[0] - want).abs() < 1e-13);
    }

    #[test]
    fn oscillatory_refines() {
        let r = integrate(|x| ok(vec![(50.0 * x).sin().powi(2)]), &[0.0, 3.0], 1, QuadOptions::default()).unwrap();
        let want = 1.5 - (300f64).sin() / 200.0;
        assert!((r.value[0] - want).abs() < 1e-9);
        assert!(r.panels > 1);
    }

    #[test]
    fn sqrt_singularity_converges() {
        let r = integrate(|x: f64| ok(vec![x.sqrt()]), &[0.0, 1.0], 1, QuadOptions::default()).unwrap();
        assert!((r.value[0] - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn integrand_error_propagates() {
        let r = integrate(|x| if x > 0.5 { Err("boom") } else { Ok(vec![x]) }, &[0.0, 1.0], 1, QuadOptions::default());
        assert!(matches!(r, Err(QuadError::Integrand { .. })));
    }

    #[test]
    fn panel_budget_exhaustion_reported() {
        let opts = QuadOptions {
            max_panels: 2,
            ..QuadOptions::default()
        };
        let r = integrate(|x| ok(vec![(200.0 * x).cos()]), &[0.0, 3.0], 1, opts);
        assert!(matches!(r, Err(QuadError::NotConverged { .. })));
    }
}
