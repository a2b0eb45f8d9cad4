//! One-class scoring head trained with a boundary-aware outlier exposure
//! loss, plus a Mahalanobis baseline.
//!
//! The score is `f(G) = ‖tanh(W·x̃ + b) − c‖²`, where `x̃` is the graph
//! embedding standardized with ID training statistics and `c` is the mean
//! hidden representation of the ID training graphs at initialization. The
//! training objective is
//!
//! ```text
//! L = Σ_ID f(G) + β · Σ_OE ℓ(sigmoid(f(G')), τ)
//! ℓ(s, τ) = −(l − s)^γ · max(ln s, τ)
//! ```
//!
//! with `τ` an ID-derived threshold in log space (e.g. the smallest
//! `ln sigmoid(f(G))` over the ID training graphs).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::embed::{EmbeddingConfig, GraphEmbedder, GraphEmbedding};
use crate::error::{Error, Result};
use crate::graph::{Graph, Label};
use crate::math::{log_sigmoid, sigmoid};
use crate::rng;

/// How the threshold `τ` is derived from the ID training scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TauStrategy {
    #[default]
    Min,
    Mean,
    Max,
    /// `τ = −∞`: every outlier takes the `ln s` branch.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct LossParams {
    /// Must exceed 1 so that `l − s > 0` for every `s ∈ (0, 1)`.
    pub l: f64,
    pub gamma: f64,
    pub beta: f64,
    pub tau_strategy: TauStrategy,
}

impl Default for LossParams {
    fn default() -> Self {
        Self { l: 2.0, gamma: 2.0, beta: 1.0, tau_strategy: TauStrategy::Min }
    }
}

impl LossParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.l > 1.0 && self.l.is_finite()) {
            return Err(Error::Domain(format!("loss parameter l = {} must be a finite value > 1", self.l)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Domain(format!("gamma = {} must be finite and >= 0", self.gamma)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Domain(format!("beta = {} must be finite and >= 0", self.beta)));
        }
        Ok(())
    }
}

/// `−(l − s)^γ · max(ln s, τ)` given `s` and `ln s` separately, so callers
/// can supply a log computed without rounding `s` to 1.
fn loss_parts(s: f64, log_s: f64, tau: f64, l: f64, gamma: f64) -> f64 {
    -libm::pow(l - s, gamma) * log_s.max(tau)
}

/// Boundary-aware outlier exposure loss `ℓ(s, τ) = −(l − s)^γ · max(ln s, τ)`.
pub fn boundary_aware_loss(s: f64, tau: f64, l: f64, gamma: f64) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Domain(format!("normalized score {s} is outside (0, 1)")));
    }
    if l <= s {
        return Err(Error::Domain(format!("l = {l} must exceed the score {s}")));
    }
    Ok(loss_parts(s, libm::log(s), tau, l, gamma))
}

/// The same loss written per branch: `−(l − s)^γ ln s` when `ln s > τ`,
/// otherwise `−τ (l − s)^γ`.
pub fn boundary_aware_loss_piecewise(s: f64, tau: f64, l: f64, gamma: f64) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Domain(format!("normalized score {s} is outside (0, 1)")));
    }
    if l <= s {
        return Err(Error::Domain(format!("l = {l} must exceed the score {s}")));
    }
    let weight = libm::pow(l - s, gamma);
    let log_s = libm::log(s);
    Ok(if log_s > tau { -weight * log_s } else { -tau * weight })
}

/// Loss of an outlier with raw score `raw`, and its derivative in `raw`.
fn outlier_loss_and_slope(raw: f64, tau: f64, params: &LossParams) -> (f64, f64) {
    let s = sigmoid(raw);
    let one_minus_s = sigmoid(-raw);
    let log_s = log_sigmoid(raw);
    let (l, gamma) = (params.l, params.gamma);
    let loss = loss_parts(s, log_s, tau, l, gamma);
    let gap = l - s;
    let weight = libm::pow(gap, gamma);
    // γ·(l − s)^(γ−1), zero when γ = 0
    let weight_slope = if gamma == 0.0 { 0.0 } else { gamma * libm::pow(gap, gamma - 1.0) };
    let ds_draw = s * one_minus_s;
    let slope = if log_s > tau {
        // d/ds [−(l−s)^γ ln s] = γ(l−s)^(γ−1) ln s − (l−s)^γ / s
        weight_slope * log_s * ds_draw - weight * one_minus_s
    } else {
        weight_slope * tau * ds_draw
    };
    (loss, slope)
}

/// `τ` from raw ID scores: the chosen statistic of `ln sigmoid(f)`.
pub fn tau_from_raw_scores(raw: &[f64], strategy: TauStrategy) -> f64 {
    let logs = raw.iter().map(|&f| log_sigmoid(f));
    match strategy {
        TauStrategy::Min => logs.fold(f64::INFINITY, f64::min),
        TauStrategy::Max => logs.fold(f64::NEG_INFINITY, f64::max),
        TauStrategy::Mean => {
            let n = raw.len().max(1) as f64;
            logs.sum::<f64>() / n
        }
        TauStrategy::None => f64::NEG_INFINITY,
    }
}

/// Single-hidden-layer one-class scorer bound to an embedding configuration.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScoringModel {
    pub embedding: EmbeddingConfig,
    /// Node feature dimension of the graphs this model scores.
    pub feature_dim: usize,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub input_mean: Vec<f64>,
    pub input_scale: Vec<f64>,
    /// Row-major `hidden_dim × input_dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub center: Vec<f64>,
}

/// Parameter-shaped gradient of the training objective.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Gradient {
    fn zeros(model: &ScoringModel) -> Self {
        Self { weights: vec![0.0; model.weights.len()], bias: vec![0.0; model.bias.len()] }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights.iter().chain(&self.bias).copied()
    }
}

struct Forward {
    input: Vec<f64>,
    hidden: Vec<f64>,
    raw: f64,
}

impl ScoringModel {
    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.input_mean).zip(&self.input_scale).map(|((v, m), s)| (v - m) / s).collect()
    }

    fn hidden_of(&self, input: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.input_dim)
            .zip(&self.bias)
            .map(|(row, b)| libm::tanh(row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + b))
            .collect()
    }

    fn forward(&self, embedding: &[f64]) -> Forward {
        let input = self.standardize(embedding);
        let hidden = self.hidden_of(&input);
        let raw = hidden.iter().zip(&self.center).map(|(h, c)| (h - c) * (h - c)).sum();
        Forward { input, hidden, raw }
    }

    /// Hidden representation of an embedding.
    pub fn hidden(&self, embedding: &GraphEmbedding) -> Vec<f64> {
        self.hidden_of(&self.standardize(embedding.as_slice()))
    }

    /// Raw score `f(G) >= 0`.
    pub fn score(&self, embedding: &GraphEmbedding) -> f64 {
        self.forward(embedding.as_slice()).raw
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// All trainable parameters, weights first.
    pub fn parameters(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights.iter().chain(&self.bias).copied()
    }

    /// Mutable access to parameter `k` in [`Self::parameters`] order.
    pub fn parameter_mut(&mut self, k: usize) -> &mut f64 {
        if k < self.weights.len() {
            &mut self.weights[k]
        } else {
            &mut self.bias[k - self.weights.len()]
        }
    }

    fn apply(&mut self, gradient: &Gradient, step: f64) {
        self.weights.iter_mut().zip(&gradient.weights).for_each(|(p, g)| *p -= step * g);
        self.bias.iter_mut().zip(&gradient.bias).for_each(|(p, g)| *p -= step * g);
    }

    fn accumulate(&self, pass: &Forward, weight: f64, gradient: &mut Gradient) {
        for (i, (&h, &c)) in pass.hidden.iter().zip(&self.center).enumerate() {
            // ∂f/∂z_i = 2 (h_i − c_i)(1 − h_i²)
            let dz = weight * 2.0 * (h - c) * (1.0 - h * h);
            gradient.bias[i] += dz;
            let row = &mut gradient.weights[i * self.input_dim..(i + 1) * self.input_dim];
            row.iter_mut().zip(&pass.input).for_each(|(g, x)| *g += dz * x);
        }
    }
}

/// Standardization statistics, uniform weights in `±1/√fan_in` and the
/// one-class center, all from the ID training embeddings.
pub fn init_model(
    embedding: EmbeddingConfig,
    feature_dim: usize,
    hidden_dim: usize,
    seed: u64,
    id_embeddings: &[GraphEmbedding],
) -> Result<ScoringModel> {
    if id_embeddings.is_empty() {
        return Err(Error::Init("need at least one ID embedding".into()));
    }
    if hidden_dim == 0 {
        return Err(Error::Init("hidden_dim must be positive".into()));
    }
    let input_dim = embedding.dim();
    if let Some(e) = id_embeddings.iter().find(|e| e.dim() != input_dim) {
        return Err(Error::Dimension { expected: input_dim, found: e.dim() });
    }
    let n = id_embeddings.len() as f64;
    let mut input_mean = vec![0.0; input_dim];
    for e in id_embeddings {
        input_mean.iter_mut().zip(e.as_slice()).for_each(|(m, x)| *m += x / n);
    }
    let mut input_scale = vec![0.0; input_dim];
    for e in id_embeddings {
        for ((s, x), m) in input_scale.iter_mut().zip(e.as_slice()).zip(&input_mean) {
            *s += (x - m) * (x - m) / n;
        }
    }
    input_scale.iter_mut().for_each(|s| *s = if *s > 1e-12 { libm::sqrt(*s) } else { 1.0 });

    let mut rng = rng::stream(seed, rng::task::MODEL_INIT);
    let bound = 1.0 / libm::sqrt(input_dim as f64);
    let weights = (0..hidden_dim * input_dim).map(|_| rng.random_range(-bound..=bound)).collect();
    let bias = (0..hidden_dim).map(|_| rng.random_range(-bound..=bound)).collect();
    let mut model = ScoringModel {
        embedding,
        feature_dim,
        input_dim,
        hidden_dim,
        input_mean,
        input_scale,
        weights,
        bias,
        center: vec![0.0; hidden_dim],
    };
    let mut center = vec![0.0; hidden_dim];
    for e in id_embeddings {
        center.iter_mut().zip(model.hidden(e)).for_each(|(c, h)| *c += h / n);
    }
    model.center = center;
    Ok(model)
}

/// `τ` for the current model over the ID training embeddings.
pub fn compute_tau(model: &ScoringModel, id_embeddings: &[GraphEmbedding], strategy: TauStrategy) -> f64 {
    let raw: Vec<f64> = id_embeddings.iter().map(|e| model.score(e)).collect();
    tau_from_raw_scores(&raw, strategy)
}

/// Objective value split into its ID and (β-weighted) OE parts.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossBreakdown {
    pub total: f64,
    pub id_term: f64,
    pub oe_term: f64,
}

/// `Σ_ID f(G) + β Σ_OE ℓ(sigmoid(f(G')), τ)`.
pub fn total_loss(
    model: &ScoringModel,
    id_batch: &[GraphEmbedding],
    oe_batch: &[GraphEmbedding],
    params: &LossParams,
    tau: f64,
) -> LossBreakdown {
    let id_term: f64 = id_batch.iter().map(|e| model.score(e)).sum();
    let oe_term = if params.beta == 0.0 {
        0.0
    } else {
        params.beta * oe_batch.iter().map(|e| outlier_loss_and_slope(model.score(e), tau, params).0).sum::<f64>()
    };
    LossBreakdown { total: id_term + oe_term, id_term, oe_term }
}

/// Exact gradient of [`total_loss`] in the weights and biases; `τ` is held
/// constant.
pub fn gradient(
    model: &ScoringModel,
    id_batch: &[&GraphEmbedding],
    oe_batch: &[&GraphEmbedding],
    params: &LossParams,
    tau: f64,
) -> Gradient {
    let mut grad = Gradient::zeros(model);
    for e in id_batch {
        let pass = model.forward(e.as_slice());
        model.accumulate(&pass, 1.0, &mut grad);
    }
    if params.beta != 0.0 {
        for e in oe_batch {
            let pass = model.forward(e.as_slice());
            let (_, slope) = outlier_loss_and_slope(pass.raw, tau, params);
            model.accumulate(&pass, params.beta * slope, &mut grad);
        }
    }
    grad
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 100, lr: 1e-2, batch_size: 64, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: LossBreakdown,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub tau_current: f64,
    pub epoch: usize,
    pub loss_history: Vec<EpochRecord>,
}

/// Mini-batch SGD on the objective.
///
/// Each epoch refreshes `τ` from the full ID training set, shuffles ID and OE
/// graphs on independent streams, and pairs the `b`-th ID batch with the
/// `b`-th equal share of OE graphs. The step is `lr / |ID batch|` times the
/// batch gradient. The epoch's objective over all data is recorded after the
/// epoch's updates.
pub fn train(
    mut model: ScoringModel,
    id_train: &[GraphEmbedding],
    oe: &[GraphEmbedding],
    params: &LossParams,
    config: &TrainConfig,
) -> Result<(ScoringModel, TrainState)> {
    params.validate()?;
    if id_train.is_empty() {
        return Err(Error::Training("no ID training graphs".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::Training("batch_size must be positive".into()));
    }
    let mut id_rng = rng::stream(config.seed, rng::task::ID_BATCHES);
    let mut oe_rng = rng::stream(config.seed, rng::task::OE_BATCHES);
    let mut id_order: Vec<usize> = (0..id_train.len()).collect();
    let mut oe_order: Vec<usize> = (0..oe.len()).collect();
    let batches = id_train.len().div_ceil(config.batch_size);
    let mut state = TrainState { tau_current: 0.0, epoch: 0, loss_history: Vec::with_capacity(config.epochs) };

    for epoch in 0..config.epochs {
        let tau = compute_tau(&model, id_train, params.tau_strategy);
        state.tau_current = tau;
        id_order.shuffle(&mut id_rng);
        oe_order.shuffle(&mut oe_rng);
        for b in 0..batches {
            let id_idx = &id_order[b * config.batch_size..((b + 1) * config.batch_size).min(id_order.len())];
            let oe_idx = &oe_order[b * oe.len() / batches..(b + 1) * oe.len() / batches];
            let id_batch: Vec<&GraphEmbedding> = id_idx.iter().map(|&i| &id_train[i]).collect();
            let oe_batch: Vec<&GraphEmbedding> = oe_idx.iter().map(|&i| &oe[i]).collect();
            let grad = gradient(&model, &id_batch, &oe_batch, params, tau);
            model.apply(&grad, config.lr / id_batch.len() as f64);
        }
        let loss = total_loss(&model, id_train, oe, params, tau);
        if !loss.total.is_finite() || model.parameters().any(|p| !p.is_finite()) {
            return Err(Error::Training(format!(
                "non-finite objective at epoch {epoch} (id {}, oe {}); lower the learning rate",
                loss.id_term, loss.oe_term
            )));
        }
        state.epoch = epoch + 1;
        state.loss_history.push(EpochRecord { epoch, loss, tau });
    }
    Ok((model, state))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScoreRecord {
    pub graph_id: usize,
    pub raw: f64,
    pub normalized: f64,
    pub label: Option<Label>,
}

impl ScoreRecord {
    pub fn new(graph_id: usize, raw: f64, label: Option<Label>) -> Self {
        Self { graph_id, raw, normalized: sigmoid(raw), label }
    }
}

/// Scores graphs in input order through the model's embedding configuration.
pub fn score_dataset(model: &ScoringModel, graphs: &[Graph]) -> Result<Vec<ScoreRecord>> {
    graphs
        .iter()
        .map(|g| {
            if g.feature_dim() != model.feature_dim {
                return Err(Error::Dimension { expected: model.feature_dim, found: g.feature_dim() });
            }
            Ok(ScoreRecord::new(g.graph_id(), model.score(&model.embedding.embed(g)), None))
        })
        .collect()
}

/// Squared Mahalanobis distance of each query to the ID embeddings under a
/// ridge-regularized sample covariance.
pub fn mahalanobis_score(id: &[GraphEmbedding], queries: &[GraphEmbedding], ridge: f64) -> Result<Vec<f64>> {
    if id.len() < 2 {
        return Err(Error::Numeric(format!("need at least 2 ID embeddings, got {}", id.len())));
    }
    let dim = id[0].dim();
    let n = id.len() as f64;
    let mut mean = DVector::<f64>::zeros(dim);
    for e in id {
        mean += DVector::from_column_slice(e.as_slice());
    }
    mean /= n;
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    for e in id {
        let d = DVector::from_column_slice(e.as_slice()) - &mean;
        cov.ger(1.0, &d, &d, 1.0);
    }
    cov /= n - 1.0;
    for i in 0..dim {
        cov[(i, i)] += ridge;
    }
    let chol = cov
        .cholesky()
        .ok_or_else(|| Error::Numeric("regularized covariance is not positive definite".into()))?;
    queries
        .iter()
        .map(|q| {
            if q.dim() != dim {
                return Err(Error::Dimension { expected: dim, found: q.dim() });
            }
            let d = DVector::from_column_slice(q.as_slice()) - &mean;
            let y = chol.l().solve_lower_triangular(&d).ok_or_else(|| Error::Numeric("singular factor".into()))?;
            Ok(y.norm_squared())
        })
        .collect()
}
