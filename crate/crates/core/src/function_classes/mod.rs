//! Drift and reward hypothesis classes, least-squares losses, ERM, version
//! space confidence sets and their radii.

mod config;
mod eluder;
mod features;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::Measurement;
use crate::sde::{ScalarField, VectorField};

pub use config::{CandidateSpec, FiniteClassConfig};
pub use eluder::{
    distribution_means, eluder_exhaustive_length, eluder_greedy_estimate, EluderEstimate,
    WitnessStep,
};
pub use features::FeatureMap;

/// Ridge added to the normal equations of linear least squares.
pub const RIDGE: f64 = 1e-8;

/// Which part of a measurement a class explains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    /// Drift `f`, fitted to `y`.
    Drift,
    /// Reward `b`, fitted to `r`.
    Reward,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Target::Drift => "drift",
            Target::Reward => "reward",
        }
    }
}

/// A single drift or reward function.
#[derive(Clone, Debug)]
pub enum Hypothesis {
    Drift(VectorField),
    Reward(ScalarField),
}

impl Hypothesis {
    pub fn target(&self) -> Target {
        match self {
            Hypothesis::Drift(_) => Target::Drift,
            Hypothesis::Reward(_) => Target::Reward,
        }
    }

    pub fn as_drift(&self) -> Option<&VectorField> {
        match self {
            Hypothesis::Drift(f) => Some(f),
            Hypothesis::Reward(_) => None,
        }
    }

    pub fn as_reward(&self) -> Option<&ScalarField> {
        match self {
            Hypothesis::Reward(b) => Some(b),
            Hypothesis::Drift(_) => None,
        }
    }

    /// Squared error on the whole dataset.
    pub fn loss(&self, data: &[Measurement]) -> f64 {
        match self {
            Hypothesis::Drift(f) => empirical_loss_drift(f, data),
            Hypothesis::Reward(b) => empirical_loss_reward(b, data),
        }
    }

    /// `z -> ||h(z) - truth(z)||^2`, the estimation-error function of `h`.
    pub fn squared_difference(&self, truth: &Hypothesis) -> Result<ScalarField> {
        match (self, truth) {
            (Hypothesis::Drift(f), Hypothesis::Drift(g)) => {
                let (f, g) = (f.clone(), g.clone());
                Ok(ScalarField::new(move |x, u| {
                    let (a, b) = (f.eval(x, u), g.eval(x, u));
                    a.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum()
                }))
            }
            (Hypothesis::Reward(f), Hypothesis::Reward(g)) => {
                let (f, g) = (f.clone(), g.clone());
                Ok(ScalarField::new(move |x, u| (f.eval(x, u) - g.eval(x, u)).powi(2)))
            }
            _ => Err(Error::InvalidArgument(
                "difference between a drift and a reward".into(),
            )),
        }
    }
}

/// `sum_i ||f(x_i, u_i) - y_i||^2`.
pub fn empirical_loss_drift(f: &VectorField, data: &[Measurement]) -> f64 {
    let mut buf = vec![0.0; f.dim()];
    data.iter()
        .map(|m| {
            f.eval_into(&m.x, &m.u, &mut buf);
            buf.iter().zip(&m.y).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
        })
        .sum()
}

/// `sum_i (b(x_i, u_i) - r_i)^2`.
pub fn empirical_loss_reward(b: &ScalarField, data: &[Measurement]) -> f64 {
    data.iter().map(|m| (b.eval(&m.x, &m.u) - m.r).powi(2)).sum()
}

/// Output post-processing applied by linear hypotheses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Saturation {
    None,
    /// Rescale onto the unit ball when the norm exceeds 1.
    UnitBall,
    /// Clip to `[0, 1]`.
    UnitInterval,
}

impl Saturation {
    #[inline]
    fn apply(self, out: &mut [f64]) {
        match self {
            Saturation::None => {}
            Saturation::UnitBall => {
                let n = out.iter().map(|v| v * v).sum::<f64>().sqrt();
                if n > 1.0 {
                    out.iter_mut().for_each(|v| *v /= n);
                }
            }
            Saturation::UnitInterval => out.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0)),
        }
    }
}

/// `z -> sat(Theta phi(z))` with `Theta` stored row-major (`out_dim x p`).
pub fn linear_hypothesis(
    target: Target,
    features: FeatureMap,
    params: &[f64],
    out_dim: usize,
    saturation: Saturation,
) -> Hypothesis {
    let theta = params.to_vec();
    let eval = move |x: &[f64], u: &[f64], out: &mut [f64]| {
        let p = features.dim(x.len(), u.len());
        let mut stack = [0.0; 32];
        let mut heap = Vec::new();
        let phi = if p <= stack.len() {
            &mut stack[..p]
        } else {
            heap.resize(p, 0.0);
            &mut heap[..]
        };
        features.eval_into(x, u, phi);
        for (i, o) in out.iter_mut().enumerate() {
            *o = theta[i * p..(i + 1) * p].iter().zip(phi.iter()).map(|(a, b)| a * b).sum();
        }
        saturation.apply(out);
    };
    match target {
        Target::Drift => Hypothesis::Drift(VectorField::new(out_dim, eval)),
        Target::Reward => Hypothesis::Reward(ScalarField::new(move |x, u| {
            let mut o = [0.0];
            eval(x, u, &mut o);
            o[0]
        })),
    }
}

/// One member of a finite class.
#[derive(Clone, Debug)]
pub struct Candidate {
    pub label: String,
    pub params: Vec<f64>,
    pub hypothesis: Hypothesis,
}

/// Parametric class `{sat(Theta phi) : ||Theta||_F <= r_norm}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearClass {
    pub features: FeatureMap,
    pub state_dim: usize,
    pub control_dim: usize,
    /// Output dimension: `d` for drifts, 1 for rewards.
    pub out_dim: usize,
    pub r_norm: f64,
    pub saturation: Saturation,
}

impl LinearClass {
    pub fn n_features(&self) -> usize {
        self.features.dim(self.state_dim, self.control_dim)
    }

    pub fn n_params(&self) -> usize {
        self.out_dim * self.n_features()
    }
}

#[derive(Clone, Debug)]
pub enum ClassKind {
    Finite(Vec<Candidate>),
    Linear(LinearClass),
}

/// A drift or reward hypothesis class.
#[derive(Clone, Debug)]
pub struct FunctionClass {
    pub target: Target,
    pub kind: ClassKind,
    /// `log |class|` for finite classes, or the log size of an epsilon-net.
    pub log_cardinality: f64,
    /// Bound `L` on `||phi(z)||` (linear classes), `NaN` when unknown.
    pub feature_bound: f64,
}

impl FunctionClass {
    pub fn finite(target: Target, candidates: Vec<Candidate>) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "finite {} class must be non-empty",
                target.name()
            )));
        }
        if let Some(c) = candidates.iter().find(|c| c.hypothesis.target() != target) {
            return Err(Error::InvalidArgument(format!(
                "candidate `{}` is not a {} function",
                c.label,
                target.name()
            )));
        }
        Ok(Self {
            target,
            log_cardinality: (candidates.len() as f64).ln(),
            kind: ClassKind::Finite(candidates),
            feature_bound: f64::NAN,
        })
    }

    /// A linear class whose covering number is bounded by
    /// `p log(1 + 2 R L / eps)`, `p` the number of parameters.
    pub fn linear(
        target: Target,
        class: LinearClass,
        feature_bound: f64,
        epsilon: f64,
    ) -> Result<Self> {
        if target == Target::Reward && class.out_dim != 1 {
            return Err(Error::InvalidArgument("reward classes are scalar".into()));
        }
        if !(class.r_norm > 0.0 && feature_bound > 0.0 && epsilon > 0.0) {
            return Err(Error::InvalidArgument(
                "linear class needs positive radius, feature bound and epsilon".into(),
            ));
        }
        let p = class.n_params() as f64;
        Ok(Self {
            target,
            log_cardinality: p * (1.0 + 2.0 * class.r_norm * feature_bound / epsilon).ln(),
            kind: ClassKind::Linear(class),
            feature_bound,
        })
    }

    pub fn candidates(&self) -> Option<&[Candidate]> {
        match &self.kind {
            ClassKind::Finite(c) => Some(c),
            ClassKind::Linear(_) => None,
        }
    }

    /// Number of members of a finite class, `None` for linear classes.
    pub fn len(&self) -> Option<usize> {
        self.candidates().map(<[_]>::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == Some(0)
    }

    pub fn is_finite(&self) -> bool {
        matches!(self.kind, ClassKind::Finite(_))
    }

    pub fn hypothesis(&self, index: usize) -> Option<&Hypothesis> {
        self.candidates()?.get(index).map(|c| &c.hypothesis)
    }

    /// Loss of every finite-class member on `data`, in index order.
    pub fn losses(&self, data: &[Measurement]) -> Result<Vec<f64>> {
        let c = self.candidates().ok_or_else(|| {
            Error::InvalidArgument("per-member losses need a finite class".into())
        })?;
        Ok(c.iter().map(|c| c.hypothesis.loss(data)).collect())
    }

    /// Checks the output bounds (`||f|| <= 1`, `b in [0,1]`) of every finite
    /// member at the given points.
    pub fn audit_bounds(&self, points: &[(Vec<f64>, Vec<f64>)]) -> Result<()> {
        let Some(candidates) = self.candidates() else {
            return Ok(());
        };
        const TOL: f64 = 1e-12;
        for c in candidates {
            for (x, u) in points {
                let ok = match &c.hypothesis {
                    Hypothesis::Drift(f) => {
                        f.eval(x, u).iter().map(|v| v * v).sum::<f64>().sqrt() <= 1.0 + TOL
                    }
                    Hypothesis::Reward(b) => {
                        let v = b.eval(x, u);
                        (-TOL..=1.0 + TOL).contains(&v)
                    }
                };
                if !ok {
                    return Err(Error::InvalidArgument(format!(
                        "{} candidate `{}` leaves its bounds at x = {x:?}, u = {u:?}",
                        self.target.name(),
                        c.label
                    )));
                }
            }
        }
        Ok(())
    }

    /// Estimation-error functions `||h - h*||^2` for every finite member.
    pub fn difference_functions(&self, truth: &Hypothesis) -> Result<Vec<ScalarField>> {
        self.candidates()
            .ok_or_else(|| Error::InvalidArgument("difference class needs a finite class".into()))?
            .iter()
            .map(|c| c.hypothesis.squared_difference(truth))
            .collect()
    }
}

/// Append-only list of measurements.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    items: Vec<Measurement>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, m: Measurement) {
        self.items.push(m);
    }

    pub fn extend(&mut self, batch: impl IntoIterator<Item = Measurement>) {
        self.items.extend(batch);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn as_slice(&self) -> &[Measurement] {
        &self.items
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Measurement> {
        self.items.iter()
    }

    /// CSV with columns `episode,t,x_*,u_*,y_*,r`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        crate::measurement::write_measurements_csv(&self.items, w)
    }
}

impl std::ops::Deref for Dataset {
    type Target = [Measurement];
    fn deref(&self) -> &[Measurement] {
        &self.items
    }
}

/// Result of empirical risk minimisation.
#[derive(Clone, Debug)]
pub struct Fitted {
    /// Member index for finite classes.
    pub index: Option<usize>,
    pub params: Vec<f64>,
    pub hypothesis: Hypothesis,
    pub loss: f64,
}

/// Minimises the empirical loss over `class`. Finite classes are searched
/// exhaustively (lowest index wins ties). Linear classes use ridge least
/// squares on the unsaturated model followed by projection onto the
/// parameter ball.
pub fn erm_fit(class: &FunctionClass, data: &[Measurement]) -> Result<Fitted> {
    match &class.kind {
        ClassKind::Finite(candidates) => {
            let losses = class.losses(data)?;
            let index = argmin(&losses);
            let c = &candidates[index];
            Ok(Fitted {
                index: Some(index),
                params: c.params.clone(),
                hypothesis: c.hypothesis.clone(),
                loss: losses[index],
            })
        }
        ClassKind::Linear(lin) => {
            let params = linear_least_squares(class.target, lin, data)?;
            let hypothesis =
                linear_hypothesis(class.target, lin.features, &params, lin.out_dim, lin.saturation);
            let loss = hypothesis.loss(data);
            Ok(Fitted {
                index: None,
                params,
                hypothesis,
                loss,
            })
        }
    }
}

fn linear_least_squares(target: Target, lin: &LinearClass, data: &[Measurement]) -> Result<Vec<f64>> {
    let p = lin.n_features();
    let n = data.len();
    if n == 0 {
        return Ok(vec![0.0; lin.n_params()]);
    }
    let mut phi = DMatrix::<f64>::zeros(n, p);
    let mut ys = DMatrix::<f64>::zeros(n, lin.out_dim);
    let mut row = vec![0.0; p];
    for (i, m) in data.iter().enumerate() {
        lin.features.eval_into(&m.x, &m.u, &mut row);
        phi.row_mut(i).copy_from_slice(&row);
        match target {
            Target::Drift => ys.row_mut(i).copy_from_slice(&m.y),
            Target::Reward => ys[(i, 0)] = m.r,
        }
    }
    let gram = phi.transpose() * &phi + DMatrix::<f64>::identity(p, p) * RIDGE;
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Numeric("normal equations are singular".into()))?;
    // p x out_dim; column j holds row j of Theta.
    let sol = chol.solve(&(phi.transpose() * ys));
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("least-squares solution is not finite".into()));
    }
    let mut theta: Vec<f64> = (0..lin.out_dim)
        .flat_map(|j| sol.column(j).iter().copied().collect::<Vec<_>>())
        .collect();
    let norm = DVector::from_column_slice(&theta).norm();
    if norm > lin.r_norm {
        theta.iter_mut().for_each(|v| *v *= lin.r_norm / norm);
    }
    Ok(theta)
}

/// Index of the smallest value, lowest index on ties.
pub(crate) fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// Members with `loss <= min loss + beta`, ascending.
pub fn confidence_members(losses: &[f64], beta: f64) -> Vec<usize> {
    if losses.is_empty() {
        return Vec::new();
    }
    let threshold = losses[argmin(losses)] + beta;
    (0..losses.len()).filter(|&i| losses[i] <= threshold).collect()
}

/// Loss-threshold membership test for a linear class.
#[derive(Clone)]
pub struct LinearVersionSpace {
    pub target: Target,
    pub class: LinearClass,
    pub threshold: f64,
    data: Arc<[Measurement]>,
}

impl LinearVersionSpace {
    pub fn contains(&self, params: &[f64]) -> bool {
        if params.len() != self.class.n_params()
            || DVector::from_column_slice(params).norm() > self.class.r_norm * (1.0 + 1e-12)
        {
            return false;
        }
        let h = linear_hypothesis(
            self.target,
            self.class.features,
            params,
            self.class.out_dim,
            self.class.saturation,
        );
        h.loss(&self.data) <= self.threshold
    }
}

impl fmt::Debug for LinearVersionSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LinearVersionSpace(threshold = {})", self.threshold)
    }
}

#[derive(Clone, Debug)]
pub enum ConfidenceSet {
    Members(Vec<usize>),
    Predicate(LinearVersionSpace),
}

impl ConfidenceSet {
    pub fn members(&self) -> Option<&[usize]> {
        match self {
            ConfidenceSet::Members(m) => Some(m),
            ConfidenceSet::Predicate(_) => None,
        }
    }
}

/// `{h : L(h) <= min L + beta}`. For linear classes the minimum is the loss of
/// [`erm_fit`].
pub fn confidence_set(class: &FunctionClass, data: &[Measurement], beta: f64) -> Result<ConfidenceSet> {
    match &class.kind {
        ClassKind::Finite(_) => Ok(ConfidenceSet::Members(confidence_members(
            &class.losses(data)?,
            beta,
        ))),
        ClassKind::Linear(lin) => {
            let fit = erm_fit(class, data)?;
            Ok(ConfidenceSet::Predicate(LinearVersionSpace {
                target: class.target,
                class: lin.clone(),
                threshold: fit.loss + beta,
                data: data.into(),
            }))
        }
    }
}

/// Running per-member losses of a finite class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossTracker {
    losses: Vec<f64>,
}

impl LossTracker {
    pub fn new(class: &FunctionClass) -> Result<Self> {
        let n = class
            .len()
            .ok_or_else(|| Error::InvalidArgument("loss tracking needs a finite class".into()))?;
        Ok(Self {
            losses: vec![0.0; n],
        })
    }

    pub fn update(&mut self, class: &FunctionClass, batch: &[Measurement]) -> Result<()> {
        for (l, b) in self.losses.iter_mut().zip(class.losses(batch)?) {
            *l += b;
        }
        Ok(())
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn min_loss(&self) -> f64 {
        self.losses[argmin(&self.losses)]
    }

    pub fn erm_index(&self) -> usize {
        argmin(&self.losses)
    }

    pub fn members(&self, beta: f64) -> Vec<usize> {
        confidence_members(&self.losses, beta)
    }
}

/// Radii of the drift and reward confidence sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceRadii {
    pub beta_f: f64,
    pub beta_r: f64,
    pub delta: f64,
    pub n: usize,
    pub epsilon_net: f64,
    pub g: f64,
    pub c_scale: f64,
}

impl ConfidenceRadii {
    /// Evaluates, with `eps = 1/N^2` and `c = ln|class_eps|`,
    /// `beta_R = 8 (c - ln delta) + 2 eps N (8 + sqrt(8 (ln(4N^2) + c - ln delta)))`
    /// and `beta_F`, which carries a `G^2` factor on both log terms.
    pub fn from_log_cardinalities(
        n: usize,
        delta: f64,
        g: f64,
        log_card_f: f64,
        log_card_r: f64,
        c_scale: f64,
    ) -> Result<Self> {
        if n == 0 || !(delta > 0.0 && delta < 1.0) || !(g > 0.0) || !(c_scale >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "radii need N >= 1, 0 < delta < 1, G > 0, c_scale >= 0 (got N = {n}, delta = {delta}, G = {g}, c_scale = {c_scale})"
            )));
        }
        let nf = n as f64;
        let eps = 1.0 / (nf * nf);
        let log_4n2 = 4f64.ln() + 2.0 * nf.ln();
        let radius = |scale: f64, log_card: f64| {
            let confidence = log_card - delta.ln();
            8.0 * scale * confidence
                + 2.0 * eps * nf * (8.0 + (8.0 * scale * (log_4n2 + confidence)).sqrt())
        };
        Ok(Self {
            beta_f: c_scale * radius(g * g, log_card_f),
            beta_r: c_scale * radius(1.0, log_card_r),
            delta,
            n,
            epsilon_net: eps,
            g,
            c_scale,
        })
    }
}

pub fn compute_radii(
    n: usize,
    delta: f64,
    g: f64,
    class_f: &FunctionClass,
    class_r: &FunctionClass,
    c_scale: f64,
) -> Result<ConfidenceRadii> {
    ConfidenceRadii::from_log_cardinalities(
        n,
        delta,
        g,
        class_f.log_cardinality,
        class_r.log_cardinality,
        c_scale,
    )
}
