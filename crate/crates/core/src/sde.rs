//! Controlled Itô SDEs `dx = f(x,u) dt + g(x,u) dw`, fixed-step
//! Euler–Maruyama integration, and Monte-Carlo return estimation.
//!
//! The diffusion is scalar and multiplies an isotropic `d`-dimensional Wiener
//! increment. Rollout `r` of an estimate seeded with `seed` always draws its
//! initial state and its increments from the same two streams, so returns of
//! different drift/reward candidates evaluated with one seed share their
//! random numbers.

use std::fmt;
use std::io::Write;
use std::ops::Deref;
use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, tag, SimRng};

/// Default number of integration steps over the horizon.
pub const DEFAULT_STEPS: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVec(pub Vec<f64>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlVec(pub Vec<f64>);

impl Deref for StateVec {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl Deref for ControlVec {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

type VectorFn = dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync;
type ScalarFn = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;
type PolicyFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;
type SamplerFn = dyn Fn(&mut SimRng, &mut [f64]) + Send + Sync;

/// A map `(x, u) -> R^dim`, used for drifts.
#[derive(Clone)]
pub struct VectorField {
    dim: usize,
    f: Arc<VectorFn>,
}

impl VectorField {
    pub fn new(dim: usize, f: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        Self {
            dim,
            f: Arc::new(f),
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(dim, |_, _, out| out.fill(0.0))
    }

    pub fn constant(value: Vec<f64>) -> Self {
        Self::new(value.len(), move |_, _, out| out.copy_from_slice(&value))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn eval_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        (self.f)(x, u, out)
    }

    pub fn eval(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(x, u, &mut out);
        out
    }

    /// `self + offset` componentwise.
    pub fn shifted(&self, offset: Vec<f64>) -> Self {
        let inner = self.clone();
        Self::new(self.dim, move |x, u, out| {
            inner.eval_into(x, u, out);
            for (o, s) in out.iter_mut().zip(&offset) {
                *o += s;
            }
        })
    }
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VectorField(dim = {})", self.dim)
    }
}

/// A map `(x, u) -> R`, used for diffusions and rewards.
#[derive(Clone)]
pub struct ScalarField(Arc<ScalarFn>);

impl ScalarField {
    pub fn new(f: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }

    pub fn constant(c: f64) -> Self {
        Self::new(move |_, _| c)
    }

    #[inline]
    pub fn eval(&self, x: &[f64], u: &[f64]) -> f64 {
        (self.0)(x, u)
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let inner = self.clone();
        Self::new(move |x, u| alpha * inner.eval(x, u))
    }
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ScalarField")
    }
}

/// Lipschitz constants of drift, reward, diffusion and policies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzConstants {
    pub l_f: f64,
    pub l_b: f64,
    pub l_g: f64,
    pub l_pi: f64,
}

impl LipschitzConstants {
    pub fn new(l_f: f64, l_b: f64, l_g: f64, l_pi: f64) -> Result<Self> {
        if [l_f, l_b, l_g, l_pi].iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::InvalidArgument(
                "Lipschitz constants must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { l_f, l_b, l_g, l_pi })
    }

    /// `K = 1 + (1+L_pi)^2 L_g^2 + 2 (1+L_pi)^2 L_f^2`.
    pub fn k(&self) -> f64 {
        self.k_with_dim(1)
    }

    /// Growth rate of the trajectory-gap bound when the Itô correction is
    /// summed over `d` noise coordinates: `1 + d (1+L_pi)^2 L_g^2 + 2 (1+L_pi)^2 L_f^2`.
    pub fn k_with_dim(&self, d: usize) -> f64 {
        let a = (1.0 + self.l_pi).powi(2);
        1.0 + d as f64 * a * self.l_g.powi(2) + 2.0 * a * self.l_f.powi(2)
    }

    /// `L = L_b (1 + L_pi)`.
    pub fn l(&self) -> f64 {
        self.l_b * (1.0 + self.l_pi)
    }
}

/// Deterministic, time-homogeneous feedback policy.
#[derive(Clone)]
pub struct Policy {
    pub id: usize,
    pub label: String,
    control_dim: usize,
    map: Arc<PolicyFn>,
}

impl Policy {
    pub fn new(
        id: usize,
        label: impl Into<String>,
        control_dim: usize,
        map: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self {
            id,
            label: label.into(),
            control_dim,
            map: Arc::new(map),
        }
    }

    pub fn constant(id: usize, u: Vec<f64>) -> Self {
        let label = format!("const{:?}", u);
        Self::new(id, label, u.len(), move |_, out| out.copy_from_slice(&u))
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    #[inline]
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        (self.map)(x, out)
    }

    pub fn apply(&self, x: &[f64]) -> ControlVec {
        let mut u = vec![0.0; self.control_dim];
        self.apply_into(x, &mut u);
        ControlVec(u)
    }
}

impl fmt::Debug for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Policy({}: {})", self.id, self.label)
    }
}

/// Distribution of the initial state.
#[derive(Clone)]
pub struct InitialDistribution {
    pub id: usize,
    pub label: String,
    state_dim: usize,
    deterministic: bool,
    sampler: Arc<SamplerFn>,
}

impl InitialDistribution {
    pub fn new(
        id: usize,
        label: impl Into<String>,
        state_dim: usize,
        sampler: impl Fn(&mut SimRng, &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self {
            id,
            label: label.into(),
            state_dim,
            deterministic: false,
            sampler: Arc::new(sampler),
        }
    }

    pub fn point_mass(id: usize, x0: Vec<f64>) -> Self {
        let label = format!("delta{:?}", x0);
        let mut q = Self::new(id, label, x0.len(), move |_, out| out.copy_from_slice(&x0));
        q.deterministic = true;
        q
    }

    /// Independent `N(mean_i, sd^2)` coordinates.
    pub fn gaussian(id: usize, mean: Vec<f64>, sd: f64) -> Self {
        let label = format!("normal{:?}~{sd}", mean);
        Self::new(id, label, mean.len(), move |rng, out| {
            for (o, m) in out.iter_mut().zip(&mean) {
                let z: f64 = StandardNormal.sample(rng);
                *o = m + sd * z;
            }
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn is_deterministic(&self) -> bool {
        self.deterministic
    }

    pub fn sample_into(&self, rng: &mut SimRng, out: &mut [f64]) {
        (self.sampler)(rng, out)
    }
}

impl fmt::Debug for InitialDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "InitialDistribution({}: {})", self.id, self.label)
    }
}

/// The environment `(f*, g*, b*, T)`.
#[derive(Clone, Debug)]
pub struct DynamicsSpec {
    pub drift: VectorField,
    pub diffusion: ScalarField,
    pub reward: ScalarField,
    pub horizon: f64,
    pub state_dim: usize,
    pub control_dim: usize,
    pub lipschitz: LipschitzConstants,
}

impl DynamicsSpec {
    /// Same diffusion and horizon with a candidate drift and reward, i.e. the
    /// model whose return is `R(pi, q, f, b)`.
    pub fn with_model(&self, drift: VectorField, reward: ScalarField) -> Self {
        Self {
            drift,
            reward,
            ..self.clone()
        }
    }

    pub fn steps_for(&self, dt: f64) -> Result<usize> {
        steps_for(self.horizon, dt)
    }

    pub fn default_dt(&self) -> f64 {
        self.horizon / DEFAULT_STEPS as f64
    }
}

/// Number of steps of size `dt` covering `[0, horizon]`; `dt` must divide the
/// horizon to within `1e-12`.
pub fn steps_for(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) || !(horizon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need dt > 0 and T > 0, got dt = {dt}, T = {horizon}"
        )));
    }
    let k = (horizon / dt).round();
    if k < 1.0 || (k * dt - horizon).abs() > 1e-12 * horizon.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "dt = {dt} does not divide the horizon T = {horizon}"
        )));
    }
    Ok(k as usize)
}

/// A simulated path on the grid `t_k = k dt`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub state_dim: usize,
    pub control_dim: usize,
    pub times: Vec<f64>,
    states: Vec<f64>,
    controls: Vec<f64>,
    increments: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.state_dim..(k + 1) * self.state_dim]
    }

    pub fn control(&self, k: usize) -> &[f64] {
        &self.controls[k * self.control_dim..(k + 1) * self.control_dim]
    }

    /// Wiener increment applied on `[t_k, t_{k+1}]`.
    pub fn increment(&self, k: usize) -> &[f64] {
        &self.increments[k * self.state_dim..(k + 1) * self.state_dim]
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.steps())
    }

    /// CSV with columns `t, x_0..x_{d-1}, u_0..u_{m-1}`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((0..self.state_dim).map(|i| format!("x_{i}")));
        header.extend((0..self.control_dim).map(|i| format!("u_{i}")));
        wtr.write_record(&header)?;
        for k in 0..self.len() {
            let mut row = vec![self.times[k].to_string()];
            row.extend(self.state(k).iter().map(f64::to_string));
            row.extend(self.control(k).iter().map(f64::to_string));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// One Euler–Maruyama step `x + f(x,u) dt + g(x,u) dw`.
pub fn euler_maruyama_step(
    x: &[f64],
    u: &[f64],
    drift: &VectorField,
    diffusion: &ScalarField,
    dt: f64,
    dw: &[f64],
) -> Result<StateVec> {
    let mut next = vec![0.0; x.len()];
    if !em_step_into(x, u, drift, diffusion, dt, dw, &mut next) {
        return Err(Error::IntegrationBlowup { index: 1, time: dt });
    }
    Ok(StateVec(next))
}

/// In-place step; returns `false` when the result is not finite.
#[inline]
pub(crate) fn em_step_into(
    x: &[f64],
    u: &[f64],
    drift: &VectorField,
    diffusion: &ScalarField,
    dt: f64,
    dw: &[f64],
    out: &mut [f64],
) -> bool {
    drift.eval_into(x, u, out);
    let g = diffusion.eval(x, u);
    let mut finite = true;
    for i in 0..out.len() {
        out[i] = x[i] + out[i] * dt + g * dw[i];
        finite &= out[i].is_finite();
    }
    finite
}

/// Streams one rollout through `visit(k, x_k, u_k)` for `k = 0..=steps`
/// without storing it. Increments come from `wiener`; `None` means zero noise.
pub(crate) fn rollout<F>(
    spec: &DynamicsSpec,
    policy: &Policy,
    x0: &[f64],
    dt: f64,
    steps: usize,
    mut wiener: Option<&mut SimRng>,
    mut visit: F,
) -> Result<()>
where
    F: FnMut(usize, &[f64], &[f64]),
{
    let d = spec.state_dim;
    let mut x = x0.to_vec();
    let mut next = vec![0.0; d];
    let mut u = vec![0.0; policy.control_dim()];
    let mut dw = vec![0.0; d];
    let sqrt_dt = dt.sqrt();
    for k in 0..steps {
        policy.apply_into(&x, &mut u);
        visit(k, &x, &u);
        match wiener.as_deref_mut() {
            Some(rng) => {
                for w in dw.iter_mut() {
                    let z: f64 = StandardNormal.sample(rng);
                    *w = sqrt_dt * z;
                }
            }
            None => dw.fill(0.0),
        }
        if !em_step_into(&x, &u, &spec.drift, &spec.diffusion, dt, &dw, &mut next) {
            return Err(Error::IntegrationBlowup {
                index: k + 1,
                time: (k + 1) as f64 * dt,
            });
        }
        std::mem::swap(&mut x, &mut next);
    }
    policy.apply_into(&x, &mut u);
    visit(steps, &x, &u);
    Ok(())
}

/// Advances `x` in place over `duration` using `ceil(duration / max_dt)`
/// equal Euler–Maruyama steps with increments drawn from `rng`.
pub(crate) fn advance(
    spec: &DynamicsSpec,
    policy: &Policy,
    x: &mut [f64],
    duration: f64,
    max_dt: f64,
    rng: &mut SimRng,
) -> Result<()> {
    if duration <= 0.0 {
        return Ok(());
    }
    let n = ((duration / max_dt) - 1e-9).ceil().max(1.0) as usize;
    let h = duration / n as f64;
    let sqrt_h = h.sqrt();
    let d = x.len();
    let mut u = vec![0.0; policy.control_dim()];
    let mut dw = vec![0.0; d];
    let mut next = vec![0.0; d];
    for k in 0..n {
        policy.apply_into(x, &mut u);
        for w in dw.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *w = sqrt_h * z;
        }
        if !em_step_into(x, &u, &spec.drift, &spec.diffusion, h, &dw, &mut next) {
            return Err(Error::IntegrationBlowup {
                index: k + 1,
                time: (k + 1) as f64 * h,
            });
        }
        x.copy_from_slice(&next);
    }
    Ok(())
}

/// Integrates from `x0` with caller-supplied increments (`steps * d` values,
/// row-major). Used to couple paths across step sizes or drifts.
pub fn integrate_with_increments(
    spec: &DynamicsSpec,
    policy: &Policy,
    x0: &[f64],
    dt: f64,
    increments: &[f64],
) -> Result<Trajectory> {
    let d = spec.state_dim;
    if x0.len() != d || !increments.len().is_multiple_of(d) {
        return Err(Error::InvalidArgument(
            "initial state or increments have the wrong dimension".into(),
        ));
    }
    let steps = increments.len() / d;
    let m = policy.control_dim();
    let mut traj = Trajectory {
        dt,
        state_dim: d,
        control_dim: m,
        times: (0..=steps).map(|k| k as f64 * dt).collect(),
        states: Vec::with_capacity((steps + 1) * d),
        controls: Vec::with_capacity((steps + 1) * m),
        increments: increments.to_vec(),
    };
    let mut x = x0.to_vec();
    let mut next = vec![0.0; d];
    let mut u = vec![0.0; m];
    for k in 0..steps {
        policy.apply_into(&x, &mut u);
        traj.states.extend_from_slice(&x);
        traj.controls.extend_from_slice(&u);
        let dw = &increments[k * d..(k + 1) * d];
        if !em_step_into(&x, &u, &spec.drift, &spec.diffusion, dt, dw, &mut next) {
            return Err(Error::IntegrationBlowup {
                index: k + 1,
                time: (k + 1) as f64 * dt,
            });
        }
        std::mem::swap(&mut x, &mut next);
    }
    policy.apply_into(&x, &mut u);
    traj.states.extend_from_slice(&x);
    traj.controls.extend_from_slice(&u);
    Ok(traj)
}

/// Draws `steps * d` increments `N(0, dt)` from `rng`.
pub fn wiener_increments(rng: &mut SimRng, steps: usize, d: usize, dt: f64) -> Vec<f64> {
    let s = dt.sqrt();
    (0..steps * d)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            s * z
        })
        .collect()
}

/// Initial state of rollout `rollout` under `seed`.
pub(crate) fn initial_state(q: &InitialDistribution, seed: u64, rollout: u64) -> Vec<f64> {
    let mut x0 = vec![0.0; q.state_dim()];
    let mut rng = rng::stream(seed, &[rollout, tag::INITIAL_STATE]);
    q.sample_into(&mut rng, &mut x0);
    x0
}

pub(crate) fn wiener_stream(seed: u64, rollout: u64) -> SimRng {
    rng::stream(seed, &[rollout, tag::WIENER])
}

/// Simulates `spec` under `policy` from `x(0) ~ q`, reproducibly from `seed`.
pub fn simulate_trajectory(
    spec: &DynamicsSpec,
    policy: &Policy,
    q: &InitialDistribution,
    dt: f64,
    seed: u64,
) -> Result<Trajectory> {
    simulate_rollout(spec, policy, q, dt, seed, 0)
}

/// Rollout `rollout` of the bundle identified by `seed`.
pub fn simulate_rollout(
    spec: &DynamicsSpec,
    policy: &Policy,
    q: &InitialDistribution,
    dt: f64,
    seed: u64,
    rollout: u64,
) -> Result<Trajectory> {
    let steps = spec.steps_for(dt)?;
    let x0 = initial_state(q, seed, rollout);
    let increments = wiener_increments(&mut wiener_stream(seed, rollout), steps, spec.state_dim, dt);
    integrate_with_increments(spec, policy, &x0, dt, &increments)
}

/// Left Riemann sum `sum_k b(x_k, u_k) dt` along one rollout.
pub(crate) fn rollout_return(
    spec: &DynamicsSpec,
    reward: &ScalarField,
    policy: &Policy,
    x0: &[f64],
    dt: f64,
    steps: usize,
    wiener: Option<&mut SimRng>,
) -> Result<f64> {
    let mut total = 0.0;
    rollout(spec, policy, x0, dt, steps, wiener, |k, x, u| {
        if k < steps {
            total += reward.eval(x, u) * dt;
        }
    })?;
    Ok(total)
}

/// Mean and standard error of a Monte-Carlo return estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReturnEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub rollouts: usize,
}

/// Monte-Carlo estimate of `R(pi, q, f, b)` where `f` and `b` are the drift
/// and reward stored in `spec` (use [`DynamicsSpec::with_model`] for
/// candidates).
pub fn estimate_return(
    spec: &DynamicsSpec,
    policy: &Policy,
    q: &InitialDistribution,
    dt: f64,
    n_rollouts: usize,
    seed: u64,
) -> Result<f64> {
    Ok(estimate_return_stats(spec, policy, q, dt, n_rollouts, seed)?.mean)
}

pub fn estimate_return_stats(
    spec: &DynamicsSpec,
    policy: &Policy,
    q: &InitialDistribution,
    dt: f64,
    n_rollouts: usize,
    seed: u64,
) -> Result<ReturnEstimate> {
    if n_rollouts == 0 {
        return Err(Error::InvalidArgument("n_rollouts must be at least 1".into()));
    }
    let steps = spec.steps_for(dt)?;
    let values = (0..n_rollouts as u64)
        .map(|r| {
            let x0 = initial_state(q, seed, r);
            let mut w = wiener_stream(seed, r);
            rollout_return(spec, &spec.reward, policy, &x0, dt, steps, Some(&mut w))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(crate::stats::mean_stderr(&values).into_estimate(n_rollouts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn ou(u_rate: f64) -> DynamicsSpec {
        DynamicsSpec {
            drift: VectorField::new(1, |x, u, out| out[0] = -u[0] * x[0]),
            diffusion: ScalarField::constant(2f64.sqrt()),
            reward: ScalarField::new(|x, _| x[0]),
            horizon: 1.0,
            state_dim: 1,
            control_dim: 1,
            lipschitz: LipschitzConstants::new(u_rate, 1.0, 0.0, 0.0).unwrap(),
        }
    }

    fn deterministic(drift: VectorField, reward: ScalarField) -> DynamicsSpec {
        DynamicsSpec {
            drift,
            diffusion: ScalarField::constant(0.0),
            reward,
            horizon: 1.0,
            state_dim: 1,
            control_dim: 1,
            lipschitz: LipschitzConstants::new(0.0, 1.0, 0.0, 0.0).unwrap(),
        }
    }

    #[test]
    fn zero_fields_leave_state_unchanged() {
        let x = [0.3, -1.2];
        let next = euler_maruyama_step(
            &x,
            &[0.0],
            &VectorField::zero(2),
            &ScalarField::constant(0.0),
            0.1,
            &[0.5, -0.7],
        )
        .unwrap();
        assert_eq!(next.0, x.to_vec());
    }

    #[test]
    fn ou_step_by_hand() {
        let spec = ou(1.0);
        let next =
            euler_maruyama_step(&[1.0], &[1.0], &spec.drift, &spec.diffusion, 0.1, &[0.2]).unwrap();
        // 1 - 0.1 + sqrt(2) * 0.2
        assert_abs_diff_eq!(next[0], 1.182_842_712_474_619, epsilon = 1e-12);
    }

    #[test]
    fn constant_drift_recovers_linear_flow() {
        let spec = deterministic(VectorField::constant(vec![0.75]), ScalarField::constant(0.0));
        let policy = Policy::constant(0, vec![0.0]);
        let q = InitialDistribution::point_mass(0, vec![0.5]);
        let traj = simulate_trajectory(&spec, &policy, &q, 1.0 / 64.0, 3).unwrap();
        assert_eq!(traj.steps(), 64);
        assert_abs_diff_eq!(traj.final_state()[0], 0.5 + 0.75, epsilon = 1e-12);
    }

    #[test]
    fn non_finite_state_reports_grid_index() {
        let spec = deterministic(
            VectorField::new(1, |x, _, out| out[0] = x[0] * x[0] * 1e200),
            ScalarField::constant(0.0),
        );
        let policy = Policy::constant(0, vec![0.0]);
        let q = InitialDistribution::point_mass(0, vec![1.0]);
        match simulate_trajectory(&spec, &policy, &q, 0.25, 0) {
            Err(Error::IntegrationBlowup { index, .. }) => assert_eq!(index, 2),
            other => panic!("expected blowup, got {other:?}"),
        }
    }

    #[test]
    fn dt_must_divide_horizon() {
        assert!(steps_for(1.0, 0.3).is_err());
        assert_eq!(steps_for(1.0, 1.0 / 512.0).unwrap(), 512);
        assert!(steps_for(1.0, 0.0).is_err());
    }

    #[test]
    fn deterministic_env_ignores_seed() {
        let spec = deterministic(
            VectorField::new(1, |x, u, out| out[0] = (u[0] - x[0]).tanh()),
            ScalarField::constant(0.0),
        );
        let policy = Policy::constant(0, vec![1.0]);
        let q = InitialDistribution::point_mass(0, vec![0.0]);
        let a = simulate_trajectory(&spec, &policy, &q, 1.0 / 128.0, 1).unwrap();
        let b = simulate_trajectory(&spec, &policy, &q, 1.0 / 128.0, 99).unwrap();
        assert_eq!(a.states, b.states);
    }

    #[test]
    fn constant_reward_returns_horizon() {
        let mut spec = ou(1.0);
        spec.reward = ScalarField::constant(1.0);
        let policy = Policy::constant(0, vec![1.0]);
        let q = InitialDistribution::gaussian(0, vec![0.0], 1.0);
        let r = estimate_return(&spec, &policy, &q, spec.default_dt(), 8, 5).unwrap();
        assert_eq!(r, 1.0);
        spec.reward = ScalarField::constant(0.0);
        assert_eq!(estimate_return(&spec, &policy, &q, spec.default_dt(), 8, 5).unwrap(), 0.0);
    }

    #[test]
    fn riemann_sum_of_linear_ramp() {
        // x(t) = t, so the integral of x over [0, 1] is 1/2; the left sum
        // undershoots by dt/2.
        let spec = deterministic(VectorField::constant(vec![1.0]), ScalarField::new(|x, _| x[0]));
        let policy = Policy::constant(0, vec![0.0]);
        let q = InitialDistribution::point_mass(0, vec![0.0]);
        for steps in [4usize, 64, 512] {
            let dt = 1.0 / steps as f64;
            let r = estimate_return(&spec, &policy, &q, dt, 1, 0).unwrap();
            assert!((r - 0.5).abs() <= dt / 2.0 + 1e-12, "dt = {dt}: {r}");
        }
    }

    #[test]
    fn deterministic_endpoint_error_is_first_order() {
        // dx = -x dt from x0 = 1: oracle x(1) = e^{-1}.
        let spec = deterministic(
            VectorField::new(1, |x, _, out| out[0] = -x[0]),
            ScalarField::constant(0.0),
        );
        let policy = Policy::constant(0, vec![0.0]);
        let q = InitialDistribution::point_mass(0, vec![1.0]);
        let err = |dt: f64| {
            let t = simulate_trajectory(&spec, &policy, &q, dt, 0).unwrap();
            (t.final_state()[0] - (-1f64).exp()).abs()
        };
        let (e1, e2) = (err(1.0 / 64.0), err(1.0 / 128.0));
        assert_abs_diff_eq!(e1 / e2, 2.0, epsilon = 0.05);
    }

    #[test]
    fn lipschitz_derived_constants() {
        let c = LipschitzConstants::new(0.5, 2.0, 0.25, 1.0).unwrap();
        // (1+1)^2 = 4: K = 1 + 4 * 0.0625 + 2 * 4 * 0.25
        assert_abs_diff_eq!(c.k(), 3.25, epsilon = 1e-15);
        assert_abs_diff_eq!(c.k_with_dim(3), 1.0 + 3.0 * 0.25 + 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.l(), 4.0, epsilon = 1e-15);
        assert!(LipschitzConstants::new(-1.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let spec = ou(1.0);
        let policy = Policy::constant(0, vec![1.0]);
        let q = InitialDistribution::point_mass(0, vec![0.0]);
        let traj = simulate_trajectory(&spec, &policy, &q, 0.25, 1).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "t,x_0,u_0");
        assert_eq!(lines.len(), 6);
    }

    #[test]
    fn wiener_increments_have_unit_rate_variance() {
        let dt = 0.01;
        let n = 100_000;
        let inc = wiener_increments(&mut rng::stream(11, &[0]), n, 1, dt);
        let (mean, var) = crate::stats::mean_var(&inc);
        let sigma = dt.sqrt();
        assert!(mean.abs() < 4.0 * sigma / (n as f64).sqrt());
        assert!((var / dt - 1.0).abs() < 0.1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn seeded_simulation_is_bit_identical(seed in any::<u64>(), x0 in -2.0f64..2.0) {
            let spec = ou(1.5);
            let policy = Policy::constant(0, vec![1.5]);
            let q = InitialDistribution::gaussian(0, vec![x0], 0.3);
            let a = simulate_trajectory(&spec, &policy, &q, 1.0 / 64.0, seed).unwrap();
            let b = simulate_trajectory(&spec, &policy, &q, 1.0 / 64.0, seed).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn return_is_linear_in_reward(alpha in -3.0f64..3.0, seed in any::<u64>()) {
            let spec = ou(1.0);
            let policy = Policy::constant(0, vec![1.0]);
            let q = InitialDistribution::gaussian(0, vec![0.5], 0.2);
            let dt = 1.0 / 128.0;
            let base = estimate_return(&spec, &policy, &q, dt, 4, seed).unwrap();
            let scaled = spec.with_model(spec.drift.clone(), spec.reward.scaled(alpha));
            let r = estimate_return(&scaled, &policy, &q, dt, 4, seed).unwrap();
            prop_assert!((r - alpha * base).abs() <= 1e-12 * (1.0 + base.abs()));
        }
    }
}
