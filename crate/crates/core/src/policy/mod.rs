//! The message-passing displacement policy.
//!
//! Per step: node features are embedded by a 3-layer MLP (f_a) followed by a
//! batch-normalization layer, edge features by a 2-layer MLP (f_b). One or
//! more message-passing rounds then update node and edge embeddings:
//!
//!   h_v' = lrelu(MLP(h_v || AGG_{u in N(v)} W_V (h_u || h_vu)))
//!   h_vu' = lrelu(MLP(h_vu || W_E (h_v || h_u)))
//!
//! with AGG = mean by default (sum behind a config switch). The displacement
//! head consumes h_v^L concatenated with the neighborhood mean of final node
//! embeddings and emits a d-vector per node through a 4-layer MLP, scaled by
//! a per-system factor. Actions are sampled from an isotropic Gaussian
//! centered at the prediction with fixed covariance alpha * I.
//!
//! Parameter shapes depend only on the feature widths, never on the atom
//! count, so one checkpoint serves any system size.

use ndarray::{Array1, Array2};

use crate::autodiff::{BnBatchStats, BnMode, NodeId, Tape};
use crate::error::{Error, Result};
use crate::graph::GraphState;
use crate::rng::RngStream;

/// Neighborhood aggregation for messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregation {
    Mean,
    Sum,
}

/// Architecture and action-distribution settings (checkpointed alongside
/// the weights).
#[derive(Debug, Clone)]
pub struct PolicyConfig {
    pub n_species: usize,
    pub width: usize,
    pub message_passing_steps: usize,
    pub aggregation: Aggregation,
    /// Fixed Gaussian covariance factor alpha (Sigma = alpha I).
    pub alpha: f64,
    /// Multiplies the raw head output before sampling.
    pub displacement_scale: f64,
    pub leaky_slope: f64,
    /// EMA decay for the batch-normalization statistics.
    pub bn_decay: f64,
}

impl PolicyConfig {
    pub fn new(n_species: usize, displacement_scale: f64) -> Self {
        PolicyConfig {
            n_species,
            width: 48,
            message_passing_steps: 1,
            aggregation: Aggregation::Mean,
            alpha: 1e-5,
            displacement_scale,
            leaky_slope: 0.01,
            bn_decay: 0.9,
        }
    }

    /// Node feature width: one-hot species + (U, Sum, Mean).
    pub fn node_feature_width(&self) -> usize {
        self.n_species + 3
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Array2<f64>,
    /// 1 x out bias row.
    pub b: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState {
    pub gamma: Array2<f64>,
    pub beta: Array2<f64>,
    pub ema_mean: Array1<f64>,
    pub ema_var: Array1<f64>,
}

/// All learnable weights plus batch-normalization EMA state.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParameters {
    pub config_meta: PolicyMeta,
    pub node_embed: Mlp,
    pub node_embed_norm: BatchNormState,
    pub edge_embed: Mlp,
    pub node_msg: Array2<f64>,
    pub node_update: Mlp,
    pub edge_msg: Array2<f64>,
    pub edge_update: Mlp,
    pub head: Mlp,
}

/// The subset of [`PolicyConfig`] that must travel with the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyMeta {
    pub n_species: usize,
    pub width: usize,
    pub message_passing_steps: usize,
    pub aggregation: Aggregation,
    pub alpha: f64,
    pub displacement_scale: f64,
    pub leaky_slope: f64,
    pub bn_decay: f64,
}

impl PolicyMeta {
    fn from_config(c: &PolicyConfig) -> Self {
        PolicyMeta {
            n_species: c.n_species,
            width: c.width,
            message_passing_steps: c.message_passing_steps,
            aggregation: c.aggregation,
            alpha: c.alpha,
            displacement_scale: c.displacement_scale,
            leaky_slope: c.leaky_slope,
            bn_decay: c.bn_decay,
        }
    }

    pub fn node_feature_width(&self) -> usize {
        self.n_species + 3
    }
}

const EDGE_FEATURE_WIDTH: usize = 4;

fn init_linear(rng: &mut RngStream, fan_in: usize, fan_out: usize) -> Linear {
    // scaled-uniform fan-in: U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero bias
    let bound = 1.0 / (fan_in as f64).sqrt();
    let w = Array2::from_shape_fn((fan_in, fan_out), |_| rng.uniform_in(-bound, bound));
    Linear {
        w,
        b: Array2::zeros((1, fan_out)),
    }
}

fn init_mlp(rng: &mut RngStream, dims: &[usize]) -> Mlp {
    let layers = dims
        .windows(2)
        .map(|pair| init_linear(rng, pair[0], pair[1]))
        .collect();
    Mlp { layers }
}

fn init_matrix(rng: &mut RngStream, fan_in: usize, fan_out: usize) -> Array2<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Array2::from_shape_fn((fan_in, fan_out), |_| rng.uniform_in(-bound, bound))
}

/// Fresh parameters. Weight draws consume the stream in a fixed order, so
/// the same (seed, stream) always yields byte-identical parameters.
pub fn init_params(rng: &mut RngStream, config: &PolicyConfig) -> Result<PolicyParameters> {
    if config.width == 0 || config.n_species == 0 {
        return Err(Error::InvalidParameter(
            "policy width and species count must be positive".into(),
        ));
    }
    if config.message_passing_steps == 0 {
        return Err(Error::InvalidParameter(
            "need at least one message passing step".into(),
        ));
    }
    let w = config.width;
    let d_s = config.node_feature_width();
    Ok(PolicyParameters {
        config_meta: PolicyMeta::from_config(config),
        node_embed: init_mlp(rng, &[d_s, w, w, w]),
        node_embed_norm: BatchNormState {
            gamma: Array2::ones((1, w)),
            beta: Array2::zeros((1, w)),
            ema_mean: Array1::zeros(w),
            ema_var: Array1::ones(w),
        },
        edge_embed: init_mlp(rng, &[EDGE_FEATURE_WIDTH, w, w]),
        node_msg: init_matrix(rng, 2 * w, w),
        node_update: init_mlp(rng, &[2 * w, w, w, w]),
        edge_msg: init_matrix(rng, 2 * w, w),
        edge_update: init_mlp(rng, &[2 * w, w, w, w]),
        head: init_mlp(rng, &[2 * w, w, w, w, 3]),
    })
}

impl PolicyParameters {
    /// Visit every learnable tensor in canonical order.
    pub fn visit(&self, f: &mut impl FnMut(&str, &Array2<f64>)) {
        visit_mlp(&self.node_embed, "node_embed", &mut |n, a| f(n, a));
        f("node_embed_norm.gamma", &self.node_embed_norm.gamma);
        f("node_embed_norm.beta", &self.node_embed_norm.beta);
        visit_mlp(&self.edge_embed, "edge_embed", &mut |n, a| f(n, a));
        f("node_msg", &self.node_msg);
        visit_mlp(&self.node_update, "node_update", &mut |n, a| f(n, a));
        f("edge_msg", &self.edge_msg);
        visit_mlp(&self.edge_update, "edge_update", &mut |n, a| f(n, a));
        visit_mlp(&self.head, "head", &mut |n, a| f(n, a));
    }

    pub fn visit_mut(&mut self, f: &mut impl FnMut(&str, &mut Array2<f64>)) {
        visit_mlp_mut(&mut self.node_embed, "node_embed", &mut |n, a| f(n, a));
        f("node_embed_norm.gamma", &mut self.node_embed_norm.gamma);
        f("node_embed_norm.beta", &mut self.node_embed_norm.beta);
        visit_mlp_mut(&mut self.edge_embed, "edge_embed", &mut |n, a| f(n, a));
        f("node_msg", &mut self.node_msg);
        visit_mlp_mut(&mut self.node_update, "node_update", &mut |n, a| f(n, a));
        f("edge_msg", &mut self.edge_msg);
        visit_mlp_mut(&mut self.edge_update, "edge_update", &mut |n, a| f(n, a));
        visit_mlp_mut(&mut self.head, "head", &mut |n, a| f(n, a));
    }

    pub fn n_parameters(&self) -> usize {
        let mut count = 0;
        self.visit(&mut |_, a| count += a.len());
        count
    }

    /// Fold one recorded batch statistic into the EMA state.
    pub fn update_bn_ema(&mut self, stats: &BnBatchStats) {
        let d = self.config_meta.bn_decay;
        let norm = &mut self.node_embed_norm;
        norm.ema_mean = d * &norm.ema_mean + (1.0 - d) * &stats.mean;
        norm.ema_var = d * &norm.ema_var + (1.0 - d) * &stats.var;
    }
}

fn visit_mlp(mlp: &Mlp, prefix: &str, f: &mut impl FnMut(&str, &Array2<f64>)) {
    for (i, layer) in mlp.layers.iter().enumerate() {
        f(&format!("{prefix}.{i}.w"), &layer.w);
        f(&format!("{prefix}.{i}.b"), &layer.b);
    }
}

fn visit_mlp_mut(mlp: &mut Mlp, prefix: &str, f: &mut impl FnMut(&str, &mut Array2<f64>)) {
    for (i, layer) in mlp.layers.iter_mut().enumerate() {
        f(&format!("{prefix}.{i}.w"), &mut layer.w);
        f(&format!("{prefix}.{i}.b"), &mut layer.b);
    }
}

/// A tape with the policy parameters bound as differentiable leaves.
/// One instance per trajectory; forward may be called repeatedly (one call
/// per MDP step) and gradients accumulate across calls on backward.
pub struct PolicyNet<'p> {
    pub params: &'p PolicyParameters,
    pub tape: Tape,
    bound: Vec<(String, NodeId)>,
}

impl<'p> PolicyNet<'p> {
    pub fn new(params: &'p PolicyParameters) -> Self {
        let mut tape = Tape::new();
        let mut bound = Vec::new();
        params.visit(&mut |name, value| {
            let id = tape.var(value.clone());
            bound.push((name.to_string(), id));
        });
        PolicyNet {
            params,
            tape,
            bound,
        }
    }

    fn id(&self, name: &str) -> NodeId {
        self.bound
            .iter()
            .find(|(n, _)| n == name)
            .unwrap_or_else(|| panic!("unbound parameter {name}"))
            .1
    }

    fn apply_mlp(&mut self, prefix: &str, n_layers: usize, mut x: NodeId, outer_act: bool) -> NodeId {
        let slope = self.params.config_meta.leaky_slope;
        for i in 0..n_layers {
            let w = self.id(&format!("{prefix}.{i}.w"));
            let b = self.id(&format!("{prefix}.{i}.b"));
            let lin = self.tape.matmul(x, w);
            x = self.tape.add_row(lin, b);
            let activate = i + 1 < n_layers || outer_act;
            if activate {
                x = self.tape.leaky_relu(x, slope);
            }
        }
        x
    }

    /// Run the network on one graph state. Returns the mu node (N x d,
    /// already scaled) plus the batch statistics recorded by the embedding
    /// batchnorm when in train mode.
    pub fn forward(&mut self, state: &GraphState, mode: BnMode) -> (NodeId, Option<BnBatchStats>) {
        let meta = &self.params.config_meta;
        assert_eq!(
            state.node_features.ncols(),
            meta.node_feature_width(),
            "graph state width does not match the policy's species count"
        );
        let n_nodes = state.graph.n_nodes;
        let senders = state.graph.senders.clone();
        let receivers = state.graph.receivers.clone();

        let node_in = self.tape.constant(state.node_features.clone());
        let edge_in = self.tape.constant(state.edge_features.clone());

        // initial embeddings
        let embedded = self.apply_mlp("node_embed", 3, node_in, false);
        let gamma = self.id("node_embed_norm.gamma");
        let beta = self.id("node_embed_norm.beta");
        let (mut h_node, bn_stats) = self.tape.batch_norm(
            embedded,
            gamma,
            beta,
            mode,
            &self.params.node_embed_norm.ema_mean,
            &self.params.node_embed_norm.ema_var,
        );
        let mut h_edge = self.apply_mlp("edge_embed", 2, edge_in, false);

        for _ in 0..meta.message_passing_steps {
            // node side: aggregate W_V (h_u || h_vu) over incoming edges
            let sender_h = self.tape.gather_rows(h_node, &senders);
            let msg_in = self.tape.concat(sender_h, h_edge);
            let node_msg_w = self.id("node_msg");
            let msg = self.tape.matmul(msg_in, node_msg_w);
            let agg = match meta.aggregation {
                Aggregation::Mean => self.tape.segment_mean(msg, &receivers, n_nodes),
                Aggregation::Sum => self.tape.segment_sum(msg, &receivers, n_nodes),
            };
            let node_cat = self.tape.concat(h_node, agg);
            let h_node_next = self.apply_mlp("node_update", 3, node_cat, true);

            // edge side: W_E (h_v || h_u) with the same-layer node embeddings
            let recv_h = self.tape.gather_rows(h_node, &receivers);
            let send_h = self.tape.gather_rows(h_node, &senders);
            let ends = self.tape.concat(recv_h, send_h);
            let edge_msg_w = self.id("edge_msg");
            let edge_lin = self.tape.matmul(ends, edge_msg_w);
            let edge_cat = self.tape.concat(h_edge, edge_lin);
            h_edge = self.apply_mlp("edge_update", 3, edge_cat, true);
            h_node = h_node_next;
        }

        // displacement head: own embedding || neighborhood mean of final embeddings
        let final_sender_h = self.tape.gather_rows(h_node, &senders);
        let nbr_mean = self.tape.segment_mean(final_sender_h, &receivers, n_nodes);
        let head_in = self.tape.concat(h_node, nbr_mean);
        let raw = self.apply_mlp("head", 4, head_in, false);
        let mu = self.tape.scale(raw, meta.displacement_scale);
        (mu, bn_stats)
    }

    /// Joint log-probability node of `actions` under N(mu, alpha I).
    pub fn log_prob(&mut self, mu: NodeId, actions: &Array2<f64>, alpha: f64) -> NodeId {
        self.tape.gaussian_log_prob(mu, actions, alpha)
    }

    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        self.tape.backward(loss)
    }

    /// Gradients for every bound parameter in canonical order (zero arrays
    /// for parameters the loss never touched).
    pub fn gradients(&self) -> Vec<(String, Array2<f64>)> {
        self.bound
            .iter()
            .map(|(name, id)| {
                let value_shape = self.tape.value(*id).dim();
                let grad = if self.grad_available(*id) {
                    self.tape.grad(*id).clone()
                } else {
                    Array2::zeros(value_shape)
                };
                (name.clone(), grad)
            })
            .collect()
    }

    fn grad_available(&self, id: NodeId) -> bool {
        // Tape::grad panics when absent; probe via catch-free bookkeeping
        self.tape.has_grad(id)
    }
}

/// Deterministic eval-mode forward pass that returns the mu matrix.
pub fn forward_eval(params: &PolicyParameters, state: &GraphState) -> Array2<f64> {
    let mut net = PolicyNet::new(params);
    let (mu, _) = net.forward(state, BnMode::Eval);
    net.tape.value(mu).clone()
}

/// Sample a = mu + sqrt(alpha) z with i.i.d. standard normal z.
pub fn sample_action(mu: &Array2<f64>, alpha: f64, rng: &mut RngStream) -> Array2<f64> {
    assert!(alpha >= 0.0, "alpha must be non-negative");
    let noise = alpha.sqrt();
    mu + Array2::from_shape_fn(mu.dim(), |_| noise * rng.normal())
}

/// Closed-form joint log-probability (the non-tape twin of
/// [`PolicyNet::log_prob`], used by tests and validation).
pub fn log_prob_value(actions: &Array2<f64>, mu: &Array2<f64>, alpha: f64) -> f64 {
    assert!(alpha > 0.0);
    assert_eq!(actions.dim(), mu.dim());
    let (n, d) = mu.dim();
    let mut sq = 0.0;
    for (a, m) in actions.iter().zip(mu.iter()) {
        sq += (a - m) * (a - m);
    }
    let d = d as f64;
    n as f64 * (-0.5 * d * (2.0 * std::f64::consts::PI).ln() - 0.5 * d * alpha.ln())
        - sq / (2.0 * alpha)
}

pub mod checkpoint;

#[cfg(test)]
mod tests;
