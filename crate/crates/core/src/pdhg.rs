//! Primal-dual hybrid gradient solver for one reweighted subproblem
//!
//! ```text
//! minimize  Σ ω_n m_n log(1 + e^{1 - a_nᵀx}) + γ‖x‖²   s.t. 1ᵀx = 0
//! ```
//!
//! split as `g(Ax) + f(x)` with `f` the ridge plus the zero-mean constraint.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{ComparisonDataset, RankScores};
use crate::error::{Error, Result};
use crate::prox::{prox_f_in_place, prox_g_star_in_place, sigmoid, softplus, spectral_norm, ProxFParams};
use crate::reweight::WeightVector;

pub const DEFAULT_GAMMA: f64 = 0.01;
pub const DEFAULT_EPS_IN: f64 = 0.01;
pub const DEFAULT_MAX_ITERS: usize = 10_000;
/// Beyond this many entries the cost is evaluated every [`THINNED_COST_STRIDE`] iterations.
pub const LARGE_PROBLEM_ENTRIES: usize = 1_000_000;
pub const THINNED_COST_STRIDE: usize = 10;

const NORM_TOL: f64 = 1e-6;
const NORM_MAX_ITERS: usize = 200;
const NORM_INFLATION: f64 = 1.01;
const STEP_SAFETY: f64 = 0.99;
const DIVERGENCE_FACTOR: f64 = 10.0;
/// Consecutive cost evaluations above the divergence threshold before giving up.
/// A warm start with freshly reweighted data overshoots for a handful of steps.
pub const DIVERGENCE_PATIENCE: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdhgConfig {
    pub tau: f64,
    pub sigma: f64,
    /// Relaxation, in `(0, 2)`.
    pub lambda: f64,
    /// Stop when the cost change falls below this fraction of the first decrease.
    pub eps_in: f64,
    pub max_iters: usize,
    /// Evaluate the cost every this many iterations; `None` picks by problem size.
    pub cost_stride: Option<usize>,
    /// Operator norm estimate the step sizes were checked against.
    pub operator_norm: f64,
}

impl PdhgConfig {
    /// Validates `λ ∈ (0, 2)` and `τσ‖A‖² ≤ 1`.
    pub fn new(tau: f64, sigma: f64, lambda: f64, eps_in: f64, max_iters: usize, operator_norm: f64) -> Result<Self> {
        if !(tau > 0.0 && sigma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "step sizes must be positive, got tau={tau}, sigma={sigma}"
            )));
        }
        if !(lambda > 0.0 && lambda < 2.0) {
            return Err(Error::InvalidParameter(format!(
                "lambda must lie in (0, 2), got {lambda}"
            )));
        }
        if !(eps_in >= 0.0) {
            return Err(Error::InvalidParameter(format!("eps_in must be >= 0, got {eps_in}")));
        }
        let product = tau * sigma * operator_norm * operator_norm;
        if !(product <= 1.0) {
            return Err(Error::StepSize(product));
        }
        Ok(PdhgConfig {
            tau,
            sigma,
            lambda,
            eps_in,
            max_iters,
            cost_stride: None,
            operator_norm,
        })
    }

    /// Symmetric steps `τ = σ = 0.99 / ‖A‖`, with the power-iteration estimate
    /// of `‖A‖` inflated by 1%.
    pub fn for_dataset(dataset: &ComparisonDataset, eps_in: f64) -> Result<Self> {
        let norm = spectral_norm(dataset, NORM_TOL, NORM_MAX_ITERS)? * NORM_INFLATION;
        let step = STEP_SAFETY / norm;
        Self::new(step, step, 1.0, eps_in, DEFAULT_MAX_ITERS, norm)
    }

    pub fn with_lambda(self, lambda: f64) -> Result<Self> {
        Self::new(
            self.tau,
            self.sigma,
            lambda,
            self.eps_in,
            self.max_iters,
            self.operator_norm,
        )
        .map(|c| PdhgConfig {
            cost_stride: self.cost_stride,
            ..c
        })
    }

    pub fn with_eps_in(mut self, eps_in: f64) -> Self {
        self.eps_in = eps_in;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    fn stride(&self, num_entries: usize) -> usize {
        self.cost_stride
            .unwrap_or(if num_entries > LARGE_PROBLEM_ENTRIES {
                THINNED_COST_STRIDE
            } else {
                1
            })
            .max(1)
    }
}

/// Iterate of the primal-dual pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PdhgState {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub iteration: usize,
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub cost: f64,
    pub wall_time_s: f64,
}

/// Cost at every evaluated iterate; the first point is the initial cost.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub points: Vec<TracePoint>,
    pub converged: bool,
}

impl ConvergenceTrace {
    pub fn iterations(&self) -> usize {
        self.points.last().map_or(0, |p| p.iteration)
    }

    pub fn final_cost(&self) -> Option<f64> {
        self.points.last().map(|p| p.cost)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["iteration", "cost", "wall_time_s"])?;
        for p in &self.points {
            wtr.serialize((p.iteration, p.cost, p.wall_time_s))?;
        }
        wtr.flush().map_err(|e| Error::io("<trace writer>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PdhgSolution {
    pub scores: RankScores,
    /// Final dual iterate, one value per dataset entry.
    pub dual: Vec<f64>,
    pub trace: ConvergenceTrace,
}

/// `ω_n · multiplicity_n` per entry.
pub fn effective_weights(dataset: &ComparisonDataset, weights: &WeightVector) -> Vec<f64> {
    dataset
        .entries()
        .iter()
        .zip(weights.values())
        .map(|(c, w)| w * c.multiplicity as f64)
        .collect()
}

/// `Σ ω_n m_n log(1 + e^{1 - a_nᵀx}) + γ‖x‖²`.
pub fn subproblem_cost(x: &[f64], dataset: &ComparisonDataset, weights: &WeightVector, gamma: f64) -> f64 {
    let data: f64 = dataset
        .entries()
        .iter()
        .zip(weights.values())
        .map(|(c, w)| w * c.multiplicity as f64 * softplus(1.0 - c.margin(x)))
        .sum();
    data + gamma * x.iter().map(|v| v * v).sum::<f64>()
}

fn cost_with(x: &[f64], dataset: &ComparisonDataset, eff: &[f64], gamma: f64) -> f64 {
    let data: f64 = dataset
        .entries()
        .iter()
        .zip(eff)
        .map(|(c, w)| w * softplus(1.0 - c.margin(x)))
        .sum();
    data + gamma * x.iter().map(|v| v * v).sum::<f64>()
}

/// Gradient of `g` at `Ax`: the dual point consistent with the primal `x`.
fn dual_at(x: &[f64], dataset: &ComparisonDataset, eff: &[f64]) -> Vec<f64> {
    dataset
        .entries()
        .iter()
        .zip(eff)
        .map(|(c, w)| -w * sigmoid(1.0 - c.margin(x)))
        .collect()
}

/// Runs PDHG from `x0` (default zero), projected onto `1ᵀx = 0`. The dual
/// starts at `∇g(A x0)` unless `v0` is given.
pub fn pdhg_solve(
    dataset: &ComparisonDataset,
    weights: &WeightVector,
    gamma: f64,
    cfg: &PdhgConfig,
    x0: Option<&[f64]>,
    v0: Option<&[f64]>,
) -> Result<PdhgSolution> {
    let m = dataset.num_items();
    let n = dataset.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if weights.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: weights.len(),
        });
    }
    if !(gamma >= 0.0) {
        return Err(Error::InvalidParameter(format!("gamma must be >= 0, got {gamma}")));
    }
    let prox_params = ProxFParams::new(gamma, cfg.tau)?;
    let eff = effective_weights(dataset, weights);

    let mut x = match x0 {
        Some(x0) if x0.len() != m => {
            return Err(Error::LengthMismatch {
                expected: m,
                got: x0.len(),
            })
        }
        Some(x0) => x0.to_vec(),
        None => vec![0.0; m],
    };
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial scores"));
    }
    let mean = x.iter().sum::<f64>() / m as f64;
    x.iter_mut().for_each(|v| *v -= mean);
    let mut v = match v0 {
        Some(v0) if v0.len() != n => {
            return Err(Error::LengthMismatch {
                expected: n,
                got: v0.len(),
            })
        }
        Some(v0) => v0.to_vec(),
        None => dual_at(&x, dataset, &eff),
    };

    let stride = cfg.stride(n);
    let start = Instant::now();
    let mut trace = ConvergenceTrace::default();
    let mut state = PdhgState {
        cost: cost_with(&x, dataset, &eff, gamma),
        x: Vec::new(),
        v: Vec::new(),
        iteration: 0,
    };
    trace.points.push(TracePoint {
        iteration: 0,
        cost: state.cost,
        wall_time_s: 0.0,
    });
    let mut min_cost = state.cost;
    let mut above = 0;
    // increases before the first decrease are warm-start overshoot
    let mut first_decrease: Option<f64> = None;

    let mut p = vec![0.0; m];
    let mut q = vec![0.0; n];
    let mut atv = vec![0.0; m];
    let mut xbar = vec![0.0; m];

    for k in 1..=cfg.max_iters {
        // p = prox_{τf}(x - τ Aᵀv)
        dataset.apply_transpose(&v, &mut atv);
        for ((pi, xi), ai) in p.iter_mut().zip(&x).zip(&atv) {
            *pi = xi - cfg.tau * ai;
        }
        prox_f_in_place(&mut p, prox_params);

        // q = prox_{σg*}(v + σ A(2p - x))
        for ((b, pi), xi) in xbar.iter_mut().zip(&p).zip(&x) {
            *b = 2.0 * pi - xi;
        }
        dataset.apply(&xbar, &mut q);
        for (qn, vn) in q.iter_mut().zip(&v) {
            *qn = vn + cfg.sigma * *qn;
        }
        prox_g_star_in_place(&mut q, &eff, cfg.sigma)?;

        if cfg.lambda == 1.0 {
            x.copy_from_slice(&p);
            v.copy_from_slice(&q);
        } else {
            for (xi, pi) in x.iter_mut().zip(&p) {
                *xi += cfg.lambda * (pi - *xi);
            }
            for (vn, qn) in v.iter_mut().zip(&q) {
                *vn += cfg.lambda * (qn - *vn);
            }
        }
        state.iteration = k;

        if k % stride != 0 && k != cfg.max_iters {
            continue;
        }
        let cost = cost_with(&x, dataset, &eff, gamma);
        if !cost.is_finite() {
            return Err(Error::NonFinite("subproblem cost"));
        }
        trace.points.push(TracePoint {
            iteration: k,
            cost,
            wall_time_s: start.elapsed().as_secs_f64(),
        });
        let change = (cost - state.cost).abs();
        min_cost = min_cost.min(cost);
        if min_cost > 0.0 && cost > DIVERGENCE_FACTOR * min_cost {
            above += 1;
        } else {
            above = 0;
        }
        if above >= DIVERGENCE_PATIENCE {
            return Err(Error::Diverged {
                iteration: k,
                cost,
                min_cost,
            });
        }
        match first_decrease {
            None if cost < state.cost => first_decrease = Some(state.cost - cost),
            // a stationary start: nothing to decrease
            None if cost == state.cost => {
                trace.converged = true;
                break;
            }
            None => {}
            Some(reference) if change < cfg.eps_in * reference => {
                trace.converged = true;
                break;
            }
            Some(_) => {}
        }
        state.cost = cost;
    }

    Ok(PdhgSolution {
        scores: RankScores(x),
        dual: v,
        trace,
    })
}
