//! Proximal operators for the PDHG splitting and the spectral norm of the
//! comparison matrix.
//!
//! The primal term is `f(x) = γ‖x‖² + ι{1ᵀx = 0}` and the dual term is the
//! conjugate of `g(y) = Σ W_n log(1 + e^{1 - y_n})`, where `W_n` already
//! includes the entry's multiplicity.

use rand::Rng;

use crate::dataset::ComparisonDataset;
use crate::error::{Error, Result};
use crate::synthetic::rng_from_seed;

/// Residual tolerance for [`scalar_lse_prox`] inside the solver.
pub const SCALAR_PROX_TOL: f64 = 1e-12;
const SCALAR_PROX_MAX_ITERS: usize = 200;

/// `log(1 + e^t)` without overflow.
#[inline]
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// `1 / (1 + e^{-t})`.
#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxFParams {
    pub gamma: f64,
    pub tau: f64,
}

impl ProxFParams {
    pub fn new(gamma: f64, tau: f64) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) || !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "prox_f needs gamma >= 0 and tau > 0, got gamma={gamma}, tau={tau}"
            )));
        }
        Ok(ProxFParams { gamma, tau })
    }
}

/// `prox_{τf}(x)`: shrink by `1 + 2γτ`, then project onto `1ᵀx = 0`.
pub fn prox_f(x: &[f64], params: ProxFParams) -> Result<Vec<f64>> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("prox_f input"));
    }
    let mut out = x.to_vec();
    prox_f_in_place(&mut out, params);
    Ok(out)
}

pub(crate) fn prox_f_in_place(x: &mut [f64], params: ProxFParams) {
    if x.is_empty() {
        return;
    }
    let shrink = 1.0 / (1.0 + 2.0 * params.gamma * params.tau);
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    for v in x.iter_mut() {
        *v = (*v - mean) * shrink;
    }
}

/// Point and weight of one scalar prox problem
/// `argmin_u log(1 + e^{1-u}) + (u - x̃)² / (2 w̃)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarProxProblem {
    pub x_tilde: f64,
    pub w_tilde: f64,
}

impl ScalarProxProblem {
    /// Root-equation residual `-σ(1-u) + (u - x̃)/w̃`, written in terms of the
    /// offset `d = u - x̃` so that tiny weights keep full precision.
    pub fn residual_at_offset(&self, d: f64) -> f64 {
        d / self.w_tilde - sigmoid(1.0 - self.x_tilde - d)
    }

    pub fn residual(&self, u: f64) -> f64 {
        self.residual_at_offset(u - self.x_tilde)
    }

    /// Offset `d = u* - x̃ ∈ (0, w̃)` of the minimizer.
    ///
    /// Newton on the residual, kept inside a shrinking bracket; a step that
    /// leaves the bracket, or follows a step that failed to halve the
    /// residual, is replaced by bisection.
    pub fn solve_offset(&self, tol: f64) -> Result<f64> {
        let (x, w) = (self.x_tilde, self.w_tilde);
        if !(w > 0.0) || !x.is_finite() || !w.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "scalar prox needs finite x~ and w~ > 0, got x~={x}, w~={w}"
            )));
        }
        let (mut lo, mut hi) = (0.0, w);
        let mut d = w * sigmoid(1.0 - x);
        let mut prev_r = f64::INFINITY;
        for _ in 0..SCALAR_PROX_MAX_ITERS {
            let s = sigmoid(1.0 - x - d);
            let r = d / w - s;
            if r.abs() <= tol {
                return Ok(interior(d, w));
            }
            if r > 0.0 {
                hi = d;
            } else {
                lo = d;
            }
            let slope = 1.0 / w + s * (1.0 - s);
            let next = d - r / slope;
            // bisect when Newton leaves the bracket or stops halving the residual
            let newton_ok = next > lo && next < hi && r.abs() <= 0.5 * prev_r;
            prev_r = r.abs();
            d = if newton_ok { next } else { 0.5 * (lo + hi) };
            if hi - lo <= f64::EPSILON * hi.abs() {
                // bracket exhausted at machine precision
                return Ok(interior(d, w));
            }
        }
        Err(Error::ProxNotConverged { x_tilde: x, w_tilde: w })
    }
}

/// Keeps `d` inside the open bracket `(0, w)`. The rounded root can land on an
/// endpoint when the sigmoid saturates; the neighbouring float is as accurate.
fn interior(d: f64, w: f64) -> f64 {
    let (lo, hi) = (0f64.next_up(), w.next_down());
    if lo < hi {
        d.clamp(lo, hi)
    } else {
        d
    }
}

/// `prox_{w̃ h}(x̃)` for `h(u) = log(1 + e^{1-u})`; the root lies in `(x̃, x̃ + w̃)`.
pub fn scalar_lse_prox(p: ScalarProxProblem, tol: f64) -> Result<f64> {
    Ok(p.x_tilde + p.solve_offset(tol)?)
}

/// `prox_{σg*}(v)` by Moreau decomposition, componentwise:
/// `v_n - σ prox_{(W_n/σ) h}(v_n/σ)`, which simplifies to `-σ d_n`.
pub fn prox_g_star(v: &[f64], weights: &[f64], sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma must be > 0, got {sigma}")));
    }
    if v.len() != weights.len() {
        return Err(Error::LengthMismatch {
            expected: weights.len(),
            got: v.len(),
        });
    }
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0)) {
        return Err(Error::InvalidParameter(format!("weights must be > 0, got {w}")));
    }
    let mut out = v.to_vec();
    prox_g_star_in_place(&mut out, weights, sigma)?;
    Ok(out)
}

pub(crate) fn prox_g_star_in_place(v: &mut [f64], weights: &[f64], sigma: f64) -> Result<()> {
    for (vn, &wn) in v.iter_mut().zip(weights) {
        let p = ScalarProxProblem {
            x_tilde: *vn / sigma,
            w_tilde: wn / sigma,
        };
        *vn = -sigma * p.solve_offset(SCALAR_PROX_TOL)?;
    }
    Ok(())
}

/// Largest singular value of the comparison matrix `A` by power iteration on `AᵀA`.
///
/// Stops when the eigenvalue estimate changes by less than `tol` relative, or
/// after `max_iters`. The estimate approaches the true norm from below.
pub fn spectral_norm(dataset: &ComparisonDataset, tol: f64, max_iters: usize) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let m = dataset.num_items();
    // fixed start so step sizes are reproducible
    let mut rng = rng_from_seed(0x5eed_0fa5);
    let mut x: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut ax = vec![0.0; dataset.len()];
    let mut atax = vec![0.0; m];

    // the all-ones vector spans the null space; drop that component
    let center = |x: &mut [f64]| {
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        x.iter_mut().for_each(|v| *v -= mean);
    };
    let normalize = |x: &mut [f64]| {
        let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.0 {
            x.iter_mut().for_each(|v| *v /= n);
        }
        n
    };
    center(&mut x);
    if normalize(&mut x) == 0.0 {
        x[0] = 1.0;
    }

    let mut eig = 0.0;
    for _ in 0..max_iters {
        dataset.apply(&x, &mut ax);
        dataset.apply_transpose(&ax, &mut atax);
        let next = x.iter().zip(&atax).map(|(a, b)| a * b).sum::<f64>();
        x.copy_from_slice(&atax);
        normalize(&mut x);
        let converged = eig > 0.0 && ((next - eig) / next).abs() < tol;
        eig = next;
        if converged {
            break;
        }
    }
    Ok(eig.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Label, Observation};
    use approx::assert_relative_eq;

    /// Bisection on the root equation, independent of the Newton path.
    fn bisect(x: f64, w: f64) -> f64 {
        let (mut lo, mut hi) = (x, x + w);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let e = (1.0 - mid).exp();
            let r = -e / (1.0 + e) + (mid - x) / w;
            if r > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn softplus_and_sigmoid_are_stable() {
        assert_relative_eq!(softplus(0.0), std::f64::consts::LN_2);
        assert_relative_eq!(softplus(800.0), 800.0);
        assert_eq!(softplus(-800.0), 0.0);
        assert_relative_eq!(softplus(-49.0), 5.242885663363464e-22, max_relative = 1e-12);
        assert_relative_eq!(sigmoid(0.0), 0.5);
        assert_eq!(sigmoid(-800.0), 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
    }

    #[test]
    fn prox_f_examples() {
        let p = |g, t, x: &[f64]| prox_f(x, ProxFParams::new(g, t).unwrap()).unwrap();
        let out = p(0.0, 1.0, &[1.0, 2.0, 3.0]);
        assert_relative_eq!(out.as_slice(), [-1.0, 0.0, 1.0].as_slice(), epsilon = 1e-15);
        // frozen from a constrained numerical minimizer (scipy SLSQP): ±0.980392
        let out = p(0.01, 1.0, &[1.0, 2.0, 3.0]);
        assert_relative_eq!(
            out.as_slice(),
            [-0.98039216, 0.0, 0.98039216].as_slice(),
            epsilon = 1e-7
        );
        let centered = [0.5, -1.5, 1.0];
        assert_eq!(p(0.0, 0.3, &centered), centered.to_vec());
        assert!(prox_f(&[f64::NAN], ProxFParams::new(0.0, 1.0).unwrap()).is_err());
        assert!(ProxFParams::new(-1.0, 1.0).is_err());
        assert!(ProxFParams::new(0.0, 0.0).is_err());
    }

    #[test]
    fn scalar_prox_matches_bisection() {
        let u = scalar_lse_prox(
            ScalarProxProblem {
                x_tilde: 1.0,
                w_tilde: 1.0,
            },
            1e-12,
        )
        .unwrap();
        // bisection oracle, 200 halvings
        assert_relative_eq!(u, 1.401058137541547, epsilon = 1e-11);
        assert_relative_eq!(u, bisect(1.0, 1.0), epsilon = 1e-11);
    }

    #[test]
    fn scalar_prox_small_weight() {
        let p = ScalarProxProblem {
            x_tilde: 0.3,
            w_tilde: 1e-8,
        };
        let d = p.solve_offset(1e-12).unwrap();
        assert!(d > 0.0 && d <= 1e-8);
        assert!(p.residual_at_offset(d).abs() <= 1e-12);
    }

    #[test]
    fn scalar_prox_far_right() {
        for w in [1e-3, 0.1, 0.5, 1.0] {
            let p = ScalarProxProblem {
                x_tilde: 10.0,
                w_tilde: w,
            };
            let d = p.solve_offset(1e-12).unwrap();
            let bound = w * (-9.0f64).exp() / (1.0 + (-9.0f64).exp());
            assert!(d > 0.0 && d <= bound * (1.0 + 1e-12), "w={w}: {d} vs {bound}");
        }
    }

    #[test]
    fn scalar_prox_large_weight() {
        let p = ScalarProxProblem {
            x_tilde: -3.0,
            w_tilde: 5e6,
        };
        let d = p.solve_offset(1e-12).unwrap();
        assert!(p.residual_at_offset(d).abs() <= 1e-12);
        assert!(d > 0.0 && d < 5e6);
    }

    #[test]
    fn scalar_prox_rejects_bad_weight() {
        assert!(ScalarProxProblem {
            x_tilde: 0.0,
            w_tilde: 0.0
        }
        .solve_offset(1e-12)
        .is_err());
        assert!(ScalarProxProblem {
            x_tilde: f64::NAN,
            w_tilde: 1.0
        }
        .solve_offset(1e-12)
        .is_err());
    }

    #[test]
    fn prox_g_star_examples() {
        let out = prox_g_star(&[1.0], &[1.0], 1.0).unwrap();
        assert_relative_eq!(out[0], -0.401058137541547, epsilon = 1e-11);

        // as W -> 0 the primal prox tends to the identity, so its Moreau
        // complement tends to 0
        let v = [0.7, -2.0, 3.5];
        let sigma = 0.5;
        let out = prox_g_star(&v, &[1e-12; 3], sigma).unwrap();
        for (o, vi) in out.iter().zip(&v) {
            assert!(o.abs() <= 1e-12);
            let u = scalar_lse_prox(
                ScalarProxProblem {
                    x_tilde: vi / sigma,
                    w_tilde: 1e-12 / sigma,
                },
                1e-12,
            )
            .unwrap();
            assert_relative_eq!(sigma * u, *vi, epsilon = 1e-12);
        }
        assert!(prox_g_star(&[1.0], &[0.0], 1.0).is_err());
        assert!(prox_g_star(&[1.0], &[1.0], 0.0).is_err());
        assert!(prox_g_star(&[1.0, 2.0], &[1.0], 1.0).is_err());
    }

    #[test]
    fn spectral_norm_examples() {
        let one = ComparisonDataset::compress(2, &[Observation::new(0, 1, Label::Above)]).unwrap();
        assert_relative_eq!(spectral_norm(&one, 1e-10, 200).unwrap(), 2f64.sqrt(), epsilon = 1e-9);

        let k = 5;
        let copies = vec![Observation::new(0, 1, Label::Above); k];
        let raw = ComparisonDataset::uncompressed(2, &copies).unwrap();
        assert_relative_eq!(
            spectral_norm(&raw, 1e-10, 200).unwrap(),
            (2.0 * k as f64).sqrt(),
            epsilon = 1e-9
        );

        let tri = ComparisonDataset::compress(
            3,
            &[
                Observation::new(0, 1, Label::Above),
                Observation::new(0, 2, Label::Above),
                Observation::new(1, 2, Label::Below),
            ],
        )
        .unwrap();
        // brute-force 3x3 eigensolve (numpy eigvalsh): sqrt(3)
        assert_relative_eq!(
            spectral_norm(&tri, 1e-12, 500).unwrap(),
            1.7320508075688772,
            epsilon = 1e-6
        );
    }
}
