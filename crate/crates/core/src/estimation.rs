//! Distributed state estimation: hierarchical push-sum as the consensus step,
//! dual averaging as the innovation step.
//!
//! Each agent observes `y = H w* + ξ`, feeds the stochastic gradient
//! `Hᵀ(H w[t-1] - y[t-1])` into its push-sum value `z`, and reads its estimate
//! through the proximal map `argmin_{‖w‖ ≤ r} <z/m, w> + ‖w‖²/(2η)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::faults::LinkSchedule;
use crate::hps::PushSum;
use crate::topology::NetworkSpec;

/// Linear observation model with per-agent observation matrices and
/// per-row Gaussian noise, truncated so that `‖Hᵀξ‖ <= B0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationModel {
    h: Vec<DMatrix<f64>>,
    noise_var: Vec<DVector<f64>>,
    noise_sigma_bar: f64,
    k: DMatrix<f64>,
    /// Eigenvalues of `K`, descending.
    eigenvalues: Vec<f64>,
    b0: f64,
}

impl ObservationModel {
    /// `h[j]` is agent `j`'s observation matrix (any number of rows, `d` columns);
    /// `noise_var[j]` holds one variance per row.
    pub fn new(h: Vec<DMatrix<f64>>, noise_var: Vec<DVector<f64>>, noise_sigma_bar: f64) -> Result<Self> {
        let dim = h.first().map(|m| m.ncols()).unwrap_or(0);
        if dim == 0 || h.len() != noise_var.len() {
            return Err(Error::ParameterOutOfRange("observation model needs agents and d >= 1".into()));
        }
        let mut k = DMatrix::zeros(dim, dim);
        let mut sigma_max: f64 = 0.0;
        let mut h_max: f64 = 0.0;
        for (hj, var) in h.iter().zip(&noise_var) {
            if hj.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: hj.ncols(),
                });
            }
            if var.len() != hj.nrows() {
                return Err(Error::DimensionMismatch {
                    expected: hj.nrows(),
                    got: var.len(),
                });
            }
            k += hj.transpose() * hj;
            sigma_max = var.iter().fold(sigma_max, |acc, &v| acc.max(v.sqrt()));
            if hj.nrows() > 0 {
                h_max = h_max.max(hj.clone().svd(false, false).singular_values.max());
            }
        }
        let mut eigenvalues: Vec<f64> = SymmetricEigen::new(k.clone()).eigenvalues.iter().copied().collect();
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        if eigenvalues[dim - 1] <= 0.0 {
            return Err(Error::ParameterOutOfRange(format!(
                "K is not positive definite (smallest eigenvalue {:e})",
                eigenvalues[dim - 1]
            )));
        }
        Ok(ObservationModel {
            h,
            noise_var,
            noise_sigma_bar,
            k,
            eigenvalues,
            b0: 6.0 * sigma_max * h_max,
        })
    }

    /// Draws each row's noise variance from `U(0, 2 σ̄)`.
    pub fn with_random_noise(h: Vec<DMatrix<f64>>, noise_sigma_bar: f64, rng: &mut impl Rng) -> Result<Self> {
        let noise_var = h
            .iter()
            .map(|hj| {
                DVector::from_fn(hj.nrows(), |_, _| {
                    if noise_sigma_bar > 0.0 {
                        rng.random_range(0.0..2.0 * noise_sigma_bar)
                    } else {
                        0.0
                    }
                })
            })
            .collect();
        Self::new(h, noise_var, noise_sigma_bar)
    }

    /// Every agent observes the full state directly.
    pub fn identity(num_agents: usize, dim: usize, noise_sigma_bar: f64, rng: &mut impl Rng) -> Result<Self> {
        Self::with_random_noise(vec![DMatrix::identity(dim, dim); num_agents], noise_sigma_bar, rng)
    }

    /// Every agent gets `d - 1` Gaussian rows. With two or more clusters the
    /// rows of a cluster are projected off a random blind direction, so no
    /// cluster observes the whole state while the global stack has full
    /// column rank. Resamples until the global rank condition holds.
    pub fn partial(spec: &NetworkSpec, dim: usize, noise_sigma_bar: f64, rng: &mut impl Rng) -> Result<Self> {
        let multi = spec.num_clusters() >= 2;
        let rows = dim.saturating_sub(1).max(1);
        for _ in 0..1000 {
            let mut h = vec![DMatrix::zeros(0, dim); spec.num_agents()];
            for members in spec.clusters() {
                let mut keep = DMatrix::identity(dim, dim);
                if multi {
                    let u = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal)).normalize();
                    keep -= &u * u.transpose();
                }
                for &j in members {
                    h[j] = DMatrix::from_fn(rows, dim, |_, _| rng.sample::<f64, _>(StandardNormal)) * &keep;
                }
            }
            let full_rank = {
                let k = h.iter().fold(DMatrix::zeros(dim, dim), |acc, hj| acc + hj.transpose() * hj);
                let eig = SymmetricEigen::new(k).eigenvalues;
                eig.min() > 1e-8 * eig.max()
            };
            if full_rank {
                return Self::with_random_noise(h, noise_sigma_bar, rng);
            }
        }
        Err(Error::ParameterOutOfRange(format!(
            "could not sample a globally observable model with d = {dim}"
        )))
    }

    pub fn dim(&self) -> usize {
        self.k.nrows()
    }

    pub fn num_agents(&self) -> usize {
        self.h.len()
    }

    pub fn h(&self, agent: usize) -> &DMatrix<f64> {
        &self.h[agent]
    }

    pub fn noise_variances(&self, agent: usize) -> &DVector<f64> {
        &self.noise_var[agent]
    }

    pub fn noise_sigma_bar(&self) -> f64 {
        self.noise_sigma_bar
    }

    /// `K = Σ_j H_jᵀ H_j`.
    pub fn k(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn lambda_min(&self) -> f64 {
        *self.eigenvalues.last().unwrap()
    }

    /// Bound on `‖Hᵀξ‖` enforced by truncation.
    pub fn b0(&self) -> f64 {
        self.b0
    }

    /// Gradient bound `2 R0 ‖K‖ + B0` for a feasible set of diameter `r0`.
    pub fn l0(&self, r0: f64) -> f64 {
        2.0 * r0 * self.lambda_max() + self.b0
    }

    /// `f(w) - f(w*) = ½ (w - w*)ᵀ K (w - w*)`.
    pub fn excess_risk(&self, w: &DVector<f64>, w_star: &DVector<f64>) -> f64 {
        let e = w - w_star;
        0.5 * e.dot(&(&self.k * &e))
    }

    /// `y = H w* + ξ`, resampling `ξ` until `‖Hᵀξ‖ <= B0`.
    pub fn sample_observation(&self, agent: usize, w_star: &DVector<f64>, rng: &mut impl Rng) -> DVector<f64> {
        let h = &self.h[agent];
        let var = &self.noise_var[agent];
        let clean = h * w_star;
        if var.iter().all(|&v| v == 0.0) {
            return clean;
        }
        loop {
            let xi = DVector::from_fn(var.len(), |r, _| var[r].sqrt() * rng.sample::<f64, _>(StandardNormal));
            if (h.transpose() * &xi).norm() <= self.b0 {
                return clean + xi;
            }
        }
    }

    /// `Hᵀ (H w - y_prev)`.
    pub fn stochastic_gradient(&self, agent: usize, w: &DVector<f64>, y_prev: &DVector<f64>) -> DVector<f64> {
        let h = &self.h[agent];
        h.transpose() * (h * w - y_prev)
    }
}

/// Projection of `-η z` onto the origin ball of radius `radius`; the
/// minimizer of `<z, w> + ‖w‖² / (2η)` over that ball.
pub fn dual_projection(z_over_m: &DVector<f64>, eta: f64, radius: f64) -> DVector<f64> {
    project_ball(&(-eta * z_over_m), radius)
}

/// Euclidean projection onto the origin-centered ball.
pub fn project_ball(x: &DVector<f64>, radius: f64) -> DVector<f64> {
    let norm = x.norm();
    if norm <= radius {
        x.clone()
    } else {
        x * (radius / norm)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationConfig {
    /// Multiplies the `η[0] = 1, η[t] = 1/√t` schedule.
    pub step_scale: f64,
    pub w_radius: f64,
}

impl EstimationConfig {
    pub fn eta(&self, t: usize) -> f64 {
        if t == 0 {
            self.step_scale
        } else {
            self.step_scale / (t as f64).sqrt()
        }
    }

    /// `R²` with `φ(w*) <= R²`, evaluated at the actual truth for `φ = ½‖·‖²`.
    pub fn r_squared(&self, w_star: &DVector<f64>) -> f64 {
        0.5 * w_star.norm_squared()
    }
}

/// Round-by-round dual-averaging estimator.
#[derive(Debug, Clone)]
pub struct Estimator<'a> {
    engine: PushSum,
    sched: &'a LinkSchedule,
    model: &'a ObservationModel,
    cfg: EstimationConfig,
    w_star: DVector<f64>,
    sync_period: Option<usize>,
    w: Vec<DVector<f64>>,
    w_sum: Vec<DVector<f64>>,
    y_prev: Vec<DVector<f64>>,
    rng: ChaCha8Rng,
}

impl<'a> Estimator<'a> {
    /// `sync_period = None` disables parameter-server fusion.
    pub fn new(
        spec: &NetworkSpec,
        sched: &'a LinkSchedule,
        model: &'a ObservationModel,
        cfg: EstimationConfig,
        w_star: DVector<f64>,
        sync_period: Option<usize>,
        seed: u64,
    ) -> Result<Self> {
        if model.num_agents() != spec.num_agents() {
            return Err(Error::DimensionMismatch {
                expected: spec.num_agents(),
                got: model.num_agents(),
            });
        }
        if w_star.len() != model.dim() {
            return Err(Error::DimensionMismatch {
                expected: model.dim(),
                got: w_star.len(),
            });
        }
        if sync_period == Some(0) || !(cfg.step_scale > 0.0) || !(cfg.w_radius > 0.0) {
            return Err(Error::ParameterOutOfRange(
                "need sync period >= 1, step scale > 0 and radius > 0".into(),
            ));
        }
        let n = spec.num_agents();
        let dim = model.dim();
        let engine = PushSum::new(spec, &vec![DVector::zeros(dim); n])?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y_prev = (0..n).map(|j| model.sample_observation(j, &w_star, &mut rng)).collect();
        Ok(Estimator {
            engine,
            sched,
            model,
            cfg,
            w_star,
            sync_period,
            w: vec![DVector::zeros(dim); n],
            w_sum: vec![DVector::zeros(dim); n],
            y_prev,
            rng,
        })
    }

    pub fn round(&self) -> usize {
        self.engine.round()
    }

    pub fn engine(&self) -> &PushSum {
        &self.engine
    }

    pub fn w_star(&self) -> &DVector<f64> {
        &self.w_star
    }

    pub fn iterate(&self, agent: usize) -> &DVector<f64> {
        &self.w[agent]
    }

    /// `ŵ[t] = (1/t) Σ_{r<=t} w[r]`.
    pub fn running_average(&self, agent: usize) -> DVector<f64> {
        let t = self.round().max(1) as f64;
        &self.w_sum[agent] / t
    }

    pub fn step(&mut self) -> Result<()> {
        let t = self.round() + 1;
        self.sched.check_covers(self.engine.spec(), t)?;
        let n = self.w.len();
        let grads: Vec<DVector<f64>> = (0..n)
            .map(|j| self.model.stochastic_gradient(j, &self.w[j], &self.y_prev[j]))
            .collect();
        for j in 0..n {
            self.y_prev[j] = self.model.sample_observation(j, &self.w_star, &mut self.rng);
        }
        self.engine.local_round(self.sched, t);
        let eta = self.cfg.eta(t - 1);
        for (j, g) in grads.iter().enumerate() {
            *self.engine.z_mut(j) += g;
            let w = dual_projection(&self.engine.estimate(j)?, eta, self.cfg.w_radius);
            self.w_sum[j] += &w;
            self.w[j] = w;
        }
        if self.sync_period.is_some_and(|p| t % p == 0) {
            self.engine.ps_fusion();
        }
        Ok(())
    }
}

/// Per-round errors of an estimation run; entry `t - 1` belongs to round `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationTrace {
    /// `‖ŵ_j[t] - w*‖` per agent.
    pub running_avg_errors: Vec<Vec<f64>>,
    /// `‖w_j[t] - w*‖` per agent.
    pub iterate_errors: Vec<Vec<f64>>,
    pub final_running_average: Vec<DVector<f64>>,
}

impl EstimationTrace {
    pub fn mean_error(&self, t: usize) -> f64 {
        let e = &self.running_avg_errors[t - 1];
        e.iter().sum::<f64>() / e.len() as f64
    }
}

#[allow(clippy::too_many_arguments)]
pub fn run_estimation(
    spec: &NetworkSpec,
    sched: &LinkSchedule,
    model: &ObservationModel,
    cfg: EstimationConfig,
    w_star: &DVector<f64>,
    rounds: usize,
    sync_period: Option<usize>,
    seed: u64,
) -> Result<EstimationTrace> {
    let mut est = Estimator::new(spec, sched, model, cfg, w_star.clone(), sync_period, seed)?;
    let n = spec.num_agents();
    let mut trace = EstimationTrace {
        running_avg_errors: Vec::with_capacity(rounds),
        iterate_errors: Vec::with_capacity(rounds),
        final_running_average: Vec::new(),
    };
    for _ in 0..rounds {
        est.step()?;
        trace
            .running_avg_errors
            .push((0..n).map(|j| (est.running_average(j) - w_star).norm()).collect());
        trace
            .iterate_errors
            .push((0..n).map(|j| (est.iterate(j) - w_star).norm()).collect());
    }
    trace.final_running_average = (0..n).map(|j| est.running_average(j)).collect();
    Ok(trace)
}
