//! Collaborative tracking of a linearly evolving target `w*[t] = A w*[t-1]`.
//!
//! Push-sum with `A` applied to the value side (`z`, `sigma`, `rho`), a
//! gradient step with `η[t] = 1/(λ₁ t)`, and projection of `z/m` onto the
//! feasible ball.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::estimation::{project_ball, ObservationModel};
use crate::faults::LinkSchedule;
use crate::hps::PushSum;
use crate::topology::{GraphConstants, NetworkSpec};

const SYMMETRY_TOL: f64 = 1e-12;

/// Target dynamics: symmetric PSD `A` with `‖A‖ <= 1` and initial truth.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsModel {
    a: DMatrix<f64>,
    w_star_0: DVector<f64>,
    norm: f64,
}

impl DynamicsModel {
    pub fn new(a: DMatrix<f64>, w_star_0: DVector<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::ParameterOutOfRange("A must be square".into()));
        }
        if a.nrows() != w_star_0.len() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                got: w_star_0.len(),
            });
        }
        if (&a - a.transpose()).amax() > SYMMETRY_TOL {
            return Err(Error::ParameterOutOfRange("A must be symmetric".into()));
        }
        let eig = SymmetricEigen::new(a.clone()).eigenvalues;
        let (lo, hi) = (eig.min(), eig.max());
        if lo < -SYMMETRY_TOL {
            return Err(Error::ParameterOutOfRange(format!(
                "A must be positive semi-definite (eigenvalue {lo:e})"
            )));
        }
        if hi > 1.0 + SYMMETRY_TOL {
            return Err(Error::ParameterOutOfRange(format!("‖A‖ = {hi} exceeds 1")));
        }
        Ok(DynamicsModel {
            a,
            w_star_0,
            norm: hi.max(0.0),
        })
    }

    /// `A = a I`.
    pub fn scalar(a: f64, w_star_0: DVector<f64>) -> Result<Self> {
        let d = w_star_0.len();
        Self::new(DMatrix::identity(d, d) * a, w_star_0)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn a_norm(&self) -> f64 {
        self.norm
    }

    pub fn w_star_0(&self) -> &DVector<f64> {
        &self.w_star_0
    }

    pub fn dim(&self) -> usize {
        self.w_star_0.len()
    }

    /// `w*[t] = A^t w*[0]`.
    pub fn truth(&self, t: usize) -> DVector<f64> {
        (0..t).fold(self.w_star_0.clone(), |w, _| &self.a * w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingConfig {
    /// Largest eigenvalue of `K`.
    pub lambda1: f64,
    pub w_radius: f64,
}

impl TrackingConfig {
    pub fn eta(&self, t: usize) -> f64 {
        if t == 0 {
            1.0 / self.lambda1
        } else {
            1.0 / (self.lambda1 * t as f64)
        }
    }
}

/// `b = ‖A‖ γ^{1/Γ}`, threshold `t0` (base-2 logs) and `t̄0 = max(t0, 2Γ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingConstants {
    pub b: f64,
    /// `ln b`; `-inf` when `A = 0`.
    pub ln_b: f64,
    /// `1 - b`, exact even when `b` rounds to 1.
    pub one_minus_b: f64,
    pub t0: f64,
    pub t_bar0: f64,
}

impl TrackingConstants {
    pub fn new(constants: &GraphConstants, a_norm: f64) -> Result<Self> {
        if !(0.0..=1.0 + SYMMETRY_TOL).contains(&a_norm) {
            return Err(Error::ParameterOutOfRange(format!("‖A‖ = {a_norm} outside [0, 1]")));
        }
        let gamma_period = 2.0 * constants.sync_period as f64;
        let ln_b = a_norm.min(1.0).ln() + constants.ln_gamma / constants.sync_period as f64;
        let t0 = if ln_b == f64::NEG_INFINITY {
            0.0
        } else {
            let x = -ln_b / std::f64::consts::LN_2;
            (2.0 / x) * (2.0 / x).log2()
        };
        Ok(TrackingConstants {
            b: ln_b.exp(),
            ln_b,
            one_minus_b: -ln_b.exp_m1(),
            t0,
            t_bar0: t0.max(gamma_period),
        })
    }
}

/// Round-by-round tracker.
#[derive(Debug, Clone)]
pub struct Tracker<'a> {
    engine: PushSum,
    sched: &'a LinkSchedule,
    model: &'a ObservationModel,
    dynamics: &'a DynamicsModel,
    cfg: TrackingConfig,
    sync_period: Option<usize>,
    w: Vec<DVector<f64>>,
    y_prev: Vec<DVector<f64>>,
    truth: DVector<f64>,
    injection: Vec<DVector<f64>>,
    rng: ChaCha8Rng,
}

impl<'a> Tracker<'a> {
    pub fn new(
        spec: &NetworkSpec,
        sched: &'a LinkSchedule,
        model: &'a ObservationModel,
        dynamics: &'a DynamicsModel,
        cfg: TrackingConfig,
        sync_period: Option<usize>,
        seed: u64,
    ) -> Result<Self> {
        if model.num_agents() != spec.num_agents() {
            return Err(Error::DimensionMismatch {
                expected: spec.num_agents(),
                got: model.num_agents(),
            });
        }
        if model.dim() != dynamics.dim() {
            return Err(Error::DimensionMismatch {
                expected: model.dim(),
                got: dynamics.dim(),
            });
        }
        if sync_period == Some(0) || !(cfg.lambda1 > 0.0) || !(cfg.w_radius > 0.0) {
            return Err(Error::ParameterOutOfRange(
                "need sync period >= 1, lambda1 > 0 and radius > 0".into(),
            ));
        }
        let n = spec.num_agents();
        let dim = dynamics.dim();
        let engine = PushSum::new(spec, &vec![DVector::zeros(dim); n])?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = dynamics.w_star_0().clone();
        let y_prev = (0..n).map(|j| model.sample_observation(j, &truth, &mut rng)).collect();
        Ok(Tracker {
            engine,
            sched,
            model,
            dynamics,
            cfg,
            sync_period,
            w: vec![DVector::zeros(dim); n],
            y_prev,
            truth,
            injection: vec![DVector::zeros(dim); n],
            rng,
        })
    }

    pub fn round(&self) -> usize {
        self.engine.round()
    }

    pub fn engine(&self) -> &PushSum {
        &self.engine
    }

    pub fn estimate(&self, agent: usize) -> &DVector<f64> {
        &self.w[agent]
    }

    /// Current truth `w*[t]`.
    pub fn truth(&self) -> &DVector<f64> {
        &self.truth
    }

    /// `η[t] g_j[t]` as subtracted from each agent's `z` in the last round.
    pub fn last_injection(&self) -> &[DVector<f64>] {
        &self.injection
    }

    /// `(1/N) Σ z` over every augmented node.
    pub fn z_bar(&self) -> DVector<f64> {
        self.engine.total_z() / self.w.len() as f64
    }

    pub fn step(&mut self) -> Result<()> {
        let t = self.round() + 1;
        self.sched.check_covers(self.engine.spec(), t)?;
        let n = self.w.len();
        let eta = self.cfg.eta(t);
        for j in 0..n {
            self.injection[j] = self.model.stochastic_gradient(j, &self.w[j], &self.y_prev[j]) * eta;
        }
        self.truth = self.dynamics.a() * &self.truth;
        for j in 0..n {
            self.y_prev[j] = self.model.sample_observation(j, &self.truth, &mut self.rng);
        }
        self.engine.mix_round(self.sched, t, Some(self.dynamics.a()));
        for j in 0..n {
            *self.engine.z_mut(j) -= &self.injection[j];
            self.w[j] = project_ball(&self.engine.estimate(j)?, self.cfg.w_radius);
        }
        if self.sync_period.is_some_and(|p| t % p == 0) {
            self.engine.ps_fusion();
        }
        Ok(())
    }
}

/// Per-round record of a tracking run; entry `t - 1` belongs to round `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingTrace {
    pub estimates: Vec<Vec<DVector<f64>>>,
    /// `w*[t]`, index `t - 1`.
    pub truth: Vec<DVector<f64>>,
    /// `‖w_j[t] - w*[t]‖`.
    pub errors: Vec<Vec<f64>>,
    /// `‖w_j[t] - z̄[t]‖` with `z̄ = (1/N) Σ z`.
    pub residuals: Vec<Vec<f64>>,
    pub total_mass: Vec<f64>,
}

impl TrackingTrace {
    pub fn rounds(&self) -> usize {
        self.errors.len()
    }

    pub fn mean_error(&self, t: usize) -> f64 {
        let e = &self.errors[t - 1];
        e.iter().sum::<f64>() / e.len() as f64
    }

    pub fn max_residual(&self, t: usize) -> f64 {
        self.residuals[t - 1].iter().copied().fold(0.0, f64::max)
    }

    /// Writes `round,agent,est_0..,truth_0..,l2_error`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let dim = self.truth.first().map(|v| v.len()).unwrap_or(0);
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["round".to_string(), "agent".into()];
        header.extend((0..dim).map(|k| format!("est_{k}")));
        header.extend((0..dim).map(|k| format!("truth_{k}")));
        header.push("l2_error".into());
        w.write_record(&header)?;
        for (t, ests) in self.estimates.iter().enumerate() {
            for (a, e) in ests.iter().enumerate() {
                let mut row = vec![(t + 1).to_string(), a.to_string()];
                row.extend(e.iter().map(|x| crate::fmt_f64(*x)));
                row.extend(self.truth[t].iter().map(|x| crate::fmt_f64(*x)));
                row.push(crate::fmt_f64(self.errors[t][a]));
                w.write_record(&row)?;
            }
        }
        w.flush().map_err(|e| Error::io("<tracking csv>", e))?;
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
pub fn run_tracking(
    spec: &NetworkSpec,
    sched: &LinkSchedule,
    model: &ObservationModel,
    dynamics: &DynamicsModel,
    cfg: TrackingConfig,
    rounds: usize,
    sync_period: Option<usize>,
    seed: u64,
) -> Result<TrackingTrace> {
    let mut tracker = Tracker::new(spec, sched, model, dynamics, cfg, sync_period, seed)?;
    let n = spec.num_agents();
    let mut trace = TrackingTrace {
        estimates: Vec::with_capacity(rounds),
        truth: Vec::with_capacity(rounds),
        errors: Vec::with_capacity(rounds),
        residuals: Vec::with_capacity(rounds),
        total_mass: Vec::with_capacity(rounds),
    };
    for _ in 0..rounds {
        tracker.step()?;
        let z_bar = tracker.z_bar();
        let truth = tracker.truth().clone();
        trace.errors.push((0..n).map(|j| (tracker.estimate(j) - &truth).norm()).collect());
        trace.residuals.push((0..n).map(|j| (tracker.estimate(j) - &z_bar).norm()).collect());
        trace.estimates.push(tracker.w.clone());
        trace.truth.push(truth);
        trace.total_mass.push(tracker.engine().total_mass());
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::faults::{always_on, geometric_schedule};
    use crate::topology::{derive_constants, generate_sbm};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn single() -> NetworkSpec {
        NetworkSpec::new(1, vec![vec![0]], vec![vec![]]).unwrap()
    }

    #[test]
    fn rejects_bad_dynamics() {
        let w = DVector::zeros(2);
        assert!(DynamicsModel::scalar(1.01, w.clone()).is_err());
        assert!(DynamicsModel::scalar(-0.5, w.clone()).is_err());
        let skew = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.5]);
        assert!(DynamicsModel::new(skew, w.clone()).is_err());
        assert!(DynamicsModel::scalar(1.0, w).is_ok());
    }

    #[test]
    fn truth_trajectory() {
        let dynamics = DynamicsModel::scalar(0.5, DVector::from_vec(vec![4.0, -2.0])).unwrap();
        assert_eq!(dynamics.truth(2), DVector::from_vec(vec![1.0, -0.5]));
    }

    #[test]
    fn constants_for_zero_dynamics() {
        let spec = generate_sbm(2, 3, 0.7, 1).unwrap();
        let gc = derive_constants(&spec, 2).unwrap();
        let tc = TrackingConstants::new(&gc, 0.0).unwrap();
        assert_eq!(tc.b, 0.0);
        assert_eq!(tc.t0, 0.0);
        assert_eq!(tc.t_bar0, 2.0 * gc.sync_period as f64);
        assert_eq!(tc.one_minus_b, 1.0);
    }

    #[test]
    fn constants_match_direct_formula() {
        let spec = NetworkSpec::new(2, vec![vec![0, 1]], vec![vec![(0, 1), (1, 0)]]).unwrap();
        let gc = derive_constants(&spec, 1).unwrap();
        let tc = TrackingConstants::new(&gc, 0.9).unwrap();
        let b = 0.9 * gc.gamma.powf(1.0 / gc.sync_period as f64);
        assert_relative_eq!(tc.b, b, max_relative = 1e-12);
        let x = (1.0 / b).log2();
        assert_relative_eq!(tc.t0, 2.0 / x * (2.0 / x).log2(), max_relative = 1e-10);
        assert!(tc.b < 1.0);
    }

    #[test]
    fn identity_dynamics_mix_like_plain_push_sum() {
        let spec = generate_sbm(2, 3, 0.6, 3).unwrap();
        let sched = geometric_schedule(&spec, 30, 3, 9);
        let init: Vec<DVector<f64>> = (0..6).map(|j| DVector::from_vec(vec![j as f64, 1.0 - j as f64])).collect();
        let mut a = PushSum::new(&spec, &init).unwrap();
        let mut b = a.clone();
        let eye = DMatrix::identity(2, 2);
        for t in 1..=30 {
            a.local_round(&sched, t);
            b.mix_round(&sched, t, Some(&eye));
            assert_eq!(a.states(), b.states());
        }
    }

    #[test]
    fn zero_truth_is_a_fixed_point() {
        let spec = generate_sbm(2, 3, 0.6, 4).unwrap();
        let sched = geometric_schedule(&spec, 40, 2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model = ObservationModel::identity(6, 2, 0.0, &mut rng).unwrap();
        let dynamics = DynamicsModel::scalar(0.99, DVector::zeros(2)).unwrap();
        let cfg = TrackingConfig {
            lambda1: model.lambda_max(),
            w_radius: 1.0,
        };
        let trace = run_tracking(&spec, &sched, &model, &dynamics, cfg, 40, Some(2), 0).unwrap();
        assert!(trace.errors.iter().flatten().all(|&e| e == 0.0));
    }

    #[test]
    fn single_agent_noiseless_tracks_truth() {
        let spec = single();
        let rounds = 2000;
        let sched = always_on(&spec, rounds);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = ObservationModel::identity(1, 2, 0.0, &mut rng).unwrap();
        let dynamics = DynamicsModel::scalar(0.99, DVector::from_vec(vec![1.0, 0.5])).unwrap();
        let cfg = TrackingConfig {
            lambda1: model.lambda_max(),
            w_radius: 2.0,
        };
        let trace = run_tracking(&spec, &sched, &model, &dynamics, cfg, rounds, Some(1), 0).unwrap();
        let scaled: Vec<f64> = (1..=rounds)
            .map(|t| trace.errors[t - 1][0] * t as f64 / ((t + 1) as f64).ln())
            .collect();
        let cap = scaled[..100].iter().copied().fold(0.0, f64::max);
        assert!(scaled.iter().all(|&s| s <= cap), "error·t/log(t+1) not bounded");
        assert!(trace.errors[rounds - 1][0] < 1e-6);
    }

    #[test]
    fn mass_is_untouched_by_dynamics() {
        let spec = generate_sbm(2, 4, 0.5, 5).unwrap();
        let sched = geometric_schedule(&spec, 100, 3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = ObservationModel::identity(8, 2, 0.2, &mut rng).unwrap();
        let dynamics = DynamicsModel::scalar(0.5, DVector::from_vec(vec![1.0, 1.0])).unwrap();
        let cfg = TrackingConfig {
            lambda1: model.lambda_max(),
            w_radius: 3.0,
        };
        let trace = run_tracking(&spec, &sched, &model, &dynamics, cfg, 100, Some(3), 7).unwrap();
        for m in trace.total_mass {
            assert_relative_eq!(m, 8.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn csv_layout() {
        let spec = single();
        let sched = always_on(&spec, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = ObservationModel::identity(1, 2, 0.0, &mut rng).unwrap();
        let dynamics = DynamicsModel::scalar(1.0, DVector::from_vec(vec![1.0, 0.0])).unwrap();
        let cfg = TrackingConfig {
            lambda1: 1.0,
            w_radius: 2.0,
        };
        let trace = run_tracking(&spec, &sched, &model, &dynamics, cfg, 2, None, 0).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("round,agent,est_0,est_1,truth_0,truth_1,l2_error"));
        assert_eq!(lines.count(), 2);
    }

    proptest! {
        #[test]
        fn projection_is_non_expansive(
            x in prop::collection::vec(-10.0f64..10.0, 3),
            y in prop::collection::vec(-10.0f64..10.0, 3),
            radius in 0.1f64..5.0,
        ) {
            let x = DVector::from_vec(x);
            let y = DVector::from_vec(y);
            let d = (project_ball(&x, radius) - project_ball(&y, radius)).norm();
            prop_assert!(d <= (&x - &y).norm() + 1e-12);
            prop_assert!(project_ball(&x, radius).norm() <= radius + 1e-12);
        }
    }
}
