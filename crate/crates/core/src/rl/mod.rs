//! MDP rollouts, discounted returns, REINFORCE with a FIRE baseline, and
//! the training and adaptation loops.
//!
//! Rewards are per-step energy drops, R_t = U_t - U_{t+1}, over energies
//! taken from the per-atom partition of each step's graph state, so the
//! trajectory reward sum telescopes exactly to U_0 - U_T. The policy
//! gradient follows the REINFORCE estimator with a baseline: the loss is
//! -sum_t (D_t - b) log pi(a_t | S_t) with (D_t - b) held constant, and the
//! baseline b is the discounted return a FIRE run of the same length
//! achieves from the trajectory's initial state.
//!
//! Gradients are accumulated step by step on short-lived tapes (the loss is
//! linear in the per-step log-probabilities, so per-step backward passes sum
//! to the full-trajectory gradient); peak memory stays independent of the
//! trajectory length. [`reinforce_loss`] builds the equivalent
//! full-trajectory loss on one tape and is used to cross-check the stepwise
//! path in tests.

use ndarray::Array2;

use crate::autodiff::{BnBatchStats, BnMode, NodeId};
use crate::error::{Error, Result};
use crate::graph::GraphState;
use crate::optim::{minimize, FireParams, Method, MinimizeOptions};
use crate::policy::{log_prob_value, sample_action, PolicyNet, PolicyParameters};
use crate::potentials::PotentialModel;
use crate::rng::RngStream;
use crate::system::Configuration;

/// How actions are produced and which batchnorm statistics are used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RolloutMode {
    /// Sampled actions, batch statistics (learning rollouts).
    Train,
    /// Deterministic actions a = mu, EMA statistics (validation/inference).
    EvalDeterministic,
    /// Sampled actions with EMA statistics (config-gated validation).
    EvalSampled,
}

impl RolloutMode {
    fn bn_mode(self) -> BnMode {
        match self {
            RolloutMode::Train => BnMode::Train,
            _ => BnMode::Eval,
        }
    }

    fn samples(self) -> bool {
        !matches!(self, RolloutMode::EvalDeterministic)
    }
}

/// One rollout: states, actions, log-probability values, rewards, and
/// discounted returns.
pub struct Trajectory {
    pub states: Vec<(Configuration, GraphState)>,
    pub actions: Vec<Array2<f64>>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub returns: Vec<f64>,
    pub energies: Vec<f64>,
    pub truncated: bool,
    pub mode: RolloutMode,
}

impl Trajectory {
    pub fn initial_energy(&self) -> f64 {
        self.energies[0]
    }

    pub fn final_energy(&self) -> f64 {
        *self.energies.last().unwrap()
    }

    pub fn realized_steps(&self) -> usize {
        self.rewards.len()
    }
}

/// Roll the policy out for up to `t_steps` steps from `config0`.
///
/// A non-finite energy truncates the trajectory at the last finite state
/// (exploration can push atoms into near-overlap); realized steps keep
/// their rewards and actions. Forward passes run on throwaway tapes, so
/// memory does not grow with the trajectory length.
pub fn rollout(
    params: &PolicyParameters,
    model: &PotentialModel,
    config0: &Configuration,
    t_steps: usize,
    rng: &mut RngStream,
    mode: RolloutMode,
    gamma: f64,
    delta: Option<f64>,
) -> Result<Trajectory> {
    let alpha = params.config_meta.alpha;
    let state0 = GraphState::build(config0, model, delta)?;
    let e0 = state0.total_energy();
    if !e0.is_finite() {
        return Err(Error::NonFiniteEnergy("rollout initial state".into()));
    }
    let mut states = vec![(config0.clone(), state0)];
    let mut actions: Vec<Array2<f64>> = Vec::new();
    let mut log_probs = Vec::new();
    let mut energies = vec![e0];
    let mut rewards = Vec::new();
    let mut truncated = false;

    for _ in 0..t_steps {
        let prev_config = states.last().unwrap().0.clone();
        let (action, lp) = {
            let state_t = &states.last().unwrap().1;
            let mut net = PolicyNet::new(params);
            let (mu_id, _) = net.forward(state_t, mode.bn_mode());
            let mu = net.tape.value(mu_id).clone();
            let action = if mode.samples() {
                sample_action(&mu, alpha, rng)
            } else {
                mu.clone()
            };
            let lp = log_prob_value(&action, &mu, alpha);
            (action, lp)
        };

        let mut next = prev_config;
        for (i, row) in action.outer_iter().enumerate() {
            for k in 0..3 {
                next.positions[i][k] += row[k];
            }
        }
        let state_next = GraphState::build(&next, model, delta)?;
        let e_next = state_next.total_energy();
        if !e_next.is_finite() {
            truncated = true;
            break;
        }
        log_probs.push(lp);
        rewards.push(energies.last().unwrap() - e_next);
        energies.push(e_next);
        actions.push(action);
        states.push((next, state_next));
    }

    let returns = discounted_returns(&rewards, gamma);
    Ok(Trajectory {
        states,
        actions,
        log_probs,
        rewards,
        returns,
        energies,
        truncated,
        mode,
    })
}

/// Finite-horizon discounted returns D_t = sum_k gamma^k R_{t+k}, computed
/// exactly as written (the horizon is at most a few dozen steps).
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    assert!(gamma > 0.0 && gamma <= 1.0, "gamma must be in (0, 1]");
    (0..rewards.len())
        .map(|t| {
            let mut acc = 0.0;
            let mut weight = 1.0;
            for &r in &rewards[t..] {
                acc += weight * r;
                weight *= gamma;
            }
            acc
        })
        .collect()
}

/// What scalar the FIRE run contributes as the baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    /// Discounted return of the FIRE reward sequence from step 0.
    DiscountedReturn,
    /// Plain T-step energy drop U_0 - U_T.
    PlainDrop,
    /// b = 0 (vanilla REINFORCE).
    None,
}

/// Run FIRE for `t_steps` from `config0` and reduce its energy trace to a
/// single baseline scalar, used for every step of the learner's trajectory.
/// A diverging FIRE run degrades to b = 0 with a warning.
pub fn fire_baseline(
    config0: &Configuration,
    model: &PotentialModel,
    t_steps: usize,
    gamma: f64,
    kind: BaselineKind,
    fire: FireParams,
) -> f64 {
    if matches!(kind, BaselineKind::None) || t_steps == 0 {
        return 0.0;
    }
    let mut options = MinimizeOptions::new(Method::Fire, t_steps);
    options.fire = Some(fire);
    match minimize(config0, model, &options) {
        Ok((_, trace)) => match kind {
            BaselineKind::DiscountedReturn => {
                let rewards: Vec<f64> = trace.windows(2).map(|w| w[0] - w[1]).collect();
                discounted_returns(&rewards, gamma)[0]
            }
            BaselineKind::PlainDrop => trace[0] - trace[trace.len() - 1],
            BaselineKind::None => 0.0,
        },
        Err(e) => {
            eprintln!("warning: FIRE baseline diverged ({e}); using b = 0");
            0.0
        }
    }
}

/// REINFORCE gradients for one trajectory, accumulated per step: the loss
/// -sum_t (D_t - b) log pi(a_t | S_t) is linear in the per-step
/// log-probabilities, so each step runs forward and backward on its own
/// short-lived tape and the parameter gradients add up. Also recomputes and
/// returns the batchnorm batch statistics in step order.
pub fn reinforce_gradients(
    params: &PolicyParameters,
    trajectory: &Trajectory,
    baseline: f64,
) -> Result<(Vec<Array2<f64>>, Vec<BnBatchStats>)> {
    if trajectory.realized_steps() == 0 {
        return Err(Error::InvalidParameter(
            "reinforce gradients need at least one realized step".into(),
        ));
    }
    let alpha = params.config_meta.alpha;
    let mut total: Option<Vec<Array2<f64>>> = None;
    let mut all_stats = Vec::new();
    for t in 0..trajectory.realized_steps() {
        let state = &trajectory.states[t].1;
        let coeff = -(trajectory.returns[t] - baseline);
        let mut net = PolicyNet::new(params);
        let (mu, stats) = net.forward(state, BnMode::Train);
        let lp = net.log_prob(mu, &trajectory.actions[t], alpha);
        let loss = net.tape.scale(lp, coeff);
        net.backward(loss)?;
        match &mut total {
            Some(acc) => {
                for (slot, (_, g)) in acc.iter_mut().zip(net.gradients()) {
                    *slot += &g;
                }
            }
            None => total = Some(net.gradients().into_iter().map(|(_, g)| g).collect()),
        }
        if let Some(s) = stats {
            all_stats.push(s);
        }
    }
    Ok((total.unwrap(), all_stats))
}

/// Full-trajectory REINFORCE loss on a single tape; the reference
/// implementation the stepwise gradients are checked against, and the node
/// finite-difference tests differentiate. Forward passes replay the
/// trajectory's recorded states and actions.
pub fn reinforce_loss<'p>(
    params: &'p PolicyParameters,
    trajectory: &Trajectory,
    baseline: f64,
) -> Result<(PolicyNet<'p>, NodeId)> {
    if trajectory.realized_steps() == 0 {
        return Err(Error::InvalidParameter(
            "reinforce_loss needs at least one realized step".into(),
        ));
    }
    let alpha = params.config_meta.alpha;
    let mut net = PolicyNet::new(params);
    let mut acc: Option<NodeId> = None;
    for t in 0..trajectory.realized_steps() {
        let (mu, _) = net.forward(&trajectory.states[t].1, BnMode::Train);
        let lp = net.log_prob(mu, &trajectory.actions[t], alpha);
        let term = net.tape.scale(lp, -(trajectory.returns[t] - baseline));
        acc = Some(match acc {
            Some(a) => net.tape.add(a, term),
            None => term,
        });
    }
    Ok((net, acc.unwrap()))
}

// ------------------------------------------------------------------ training

/// Hyperparameters of the training loop.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub trajectory_length: usize,
    pub gamma: f64,
    pub batch_size: usize,
    pub grad_accum: usize,
    pub learning_rate: f64,
    pub grad_clip: f64,
    pub val_every: usize,
    pub val_trajectory_length: usize,
    pub train_fraction: f64,
    pub baseline: BaselineKind,
    pub sampled_validation: bool,
    pub fire: FireParams,
    pub delta: Option<f64>,
}

impl TrainConfig {
    pub fn defaults_for(system: crate::potentials::System) -> Self {
        TrainConfig {
            epochs: 200,
            trajectory_length: 15,
            gamma: 0.9,
            batch_size: 4,
            grad_accum: 2,
            learning_rate: 0.005,
            grad_clip: 0.1,
            val_every: 20,
            val_trajectory_length: 20,
            train_fraction: 0.75,
            baseline: BaselineKind::DiscountedReturn,
            sampled_validation: false,
            fire: FireParams::default_for(system),
            delta: None,
        }
    }
}

/// One log line per epoch (plus an epoch-0 line carrying the untrained
/// validation metric).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainLogRow {
    pub epoch: usize,
    pub mean_return: f64,
    pub val_metric: Option<f64>,
}

/// Adam over the policy parameter list, aligned with the canonical visit
/// order.
pub struct ParamAdam {
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl ParamAdam {
    pub fn new(params: &PolicyParameters, lr: f64) -> Self {
        let mut m = Vec::new();
        params.visit(&mut |_, a| m.push(Array2::zeros(a.dim())));
        let v = m.clone();
        ParamAdam {
            m,
            v,
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&mut self, params: &mut PolicyParameters, grads: &[Array2<f64>]) {
        self.step += 1;
        let b1t = 1.0 - self.beta1.powi(self.step as i32);
        let b2t = 1.0 - self.beta2.powi(self.step as i32);
        let mut slot = 0;
        params.visit_mut(&mut |_, value| {
            let g = &grads[slot];
            let m = &mut self.m[slot];
            let v = &mut self.v[slot];
            for ((mv, vv), (pv, gv)) in m
                .iter_mut()
                .zip(v.iter_mut())
                .zip(value.iter_mut().zip(g.iter()))
            {
                *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv;
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv;
                let m_hat = *mv / b1t;
                let v_hat = *vv / b2t;
                *pv -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            slot += 1;
        });
    }
}

/// Global-norm gradient clipping; returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut [Array2<f64>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .map(|g| g.iter().map(|x| x * x).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            g.mapv_inplace(|x| x * scale);
        }
    }
    norm
}

/// Split a dataset by `train_fraction` with a seeded shuffle. Returns
/// (train indices, validation indices); a dataset too small to hold
/// anything out validates on the training structures.
pub fn split_dataset(n: usize, train_fraction: f64, rng: &RngStream) -> (Vec<usize>, Vec<usize>) {
    let mut split_rng = rng.split(0x5EED);
    let perm = split_rng.permutation(n);
    let n_train = ((n as f64 * train_fraction).round() as usize).clamp(1, n);
    let train: Vec<usize> = perm[..n_train].to_vec();
    let val: Vec<usize> = if n_train < n {
        perm[n_train..].to_vec()
    } else {
        train.clone()
    };
    (train, val)
}

/// Policy-gradient training over a dataset of initial structures.
///
/// Each epoch runs `grad_accum` batches of `batch_size` rollouts; per-batch
/// losses are averaged over the batch, gradients averaged over accumulation
/// steps, clipped to `grad_clip` global norm, and applied with Adam.
/// Validation runs every `val_every` epochs on the held-out split.
/// `on_epoch` fires after every log row (checkpointing hook).
pub fn train(
    params: &mut PolicyParameters,
    model: &PotentialModel,
    dataset: &[Configuration],
    cfg: &TrainConfig,
    rng: &RngStream,
    mut on_epoch: impl FnMut(&PolicyParameters, &TrainLogRow),
) -> Result<Vec<TrainLogRow>> {
    if dataset.is_empty() {
        return Err(Error::InvalidParameter("training dataset is empty".into()));
    }
    let (train_idx, val_idx) = split_dataset(dataset.len(), cfg.train_fraction, rng);
    let val_set: Vec<&Configuration> = val_idx.iter().map(|&i| &dataset[i]).collect();
    let mut adam = ParamAdam::new(params, cfg.learning_rate);
    let mut log: Vec<TrainLogRow> = Vec::with_capacity(cfg.epochs + 1);

    let initial_metric = validate(
        params,
        model,
        &val_set,
        cfg.val_trajectory_length,
        cfg.sampled_validation,
        &rng.split(0xBA5E),
        cfg.delta,
    )?;
    log.push(TrainLogRow {
        epoch: 0,
        mean_return: 0.0,
        val_metric: Some(initial_metric),
    });
    on_epoch(params, log.last().unwrap());

    for epoch in 0..cfg.epochs {
        let epoch_rng = rng.split(0x10 + epoch as u64);
        let mut grad_sum: Option<Vec<Array2<f64>>> = None;
        let mut return_sum = 0.0;
        let mut return_count = 0usize;

        for acc_step in 0..cfg.grad_accum {
            let mut batch_rng = epoch_rng.split(acc_step as u64);
            let batch = sample_batch(&train_idx, cfg.batch_size, &mut batch_rng);

            for (slot, &structure) in batch.iter().enumerate() {
                let mut roll_rng = batch_rng.split(100 + slot as u64);
                let traj = rollout(
                    params,
                    model,
                    &dataset[structure],
                    cfg.trajectory_length,
                    &mut roll_rng,
                    RolloutMode::Train,
                    cfg.gamma,
                    cfg.delta,
                )?;
                if traj.realized_steps() == 0 {
                    continue; // diverged immediately; contributes nothing
                }
                let b = fire_baseline(
                    &traj.states[0].0,
                    model,
                    cfg.trajectory_length,
                    cfg.gamma,
                    cfg.baseline,
                    cfg.fire,
                );
                let (grads, stats) = reinforce_gradients(params, &traj, b)?;
                let w = 1.0 / cfg.batch_size as f64;
                match &mut grad_sum {
                    Some(acc) => {
                        for (slot, g) in acc.iter_mut().zip(grads) {
                            slot.zip_mut_with(&g, |a, b| *a += w * b);
                        }
                    }
                    None => {
                        grad_sum = Some(grads.into_iter().map(|g| g.mapv(|x| w * x)).collect())
                    }
                }
                return_sum += traj.returns[0];
                return_count += 1;
                for s in &stats {
                    params.update_bn_ema(s);
                }
            }
        }

        if let Some(mut grads) = grad_sum {
            let scale = 1.0 / cfg.grad_accum as f64;
            for g in grads.iter_mut() {
                g.mapv_inplace(|x| x * scale);
            }
            clip_global_norm(&mut grads, cfg.grad_clip);
            adam.step(params, &grads);
        }

        let epoch_1 = epoch + 1;
        let val_metric = if epoch_1 % cfg.val_every == 0 || epoch_1 == cfg.epochs {
            Some(validate(
                params,
                model,
                &val_set,
                cfg.val_trajectory_length,
                cfg.sampled_validation,
                &rng.split(0xBA5E + epoch_1 as u64),
                cfg.delta,
            )?)
        } else {
            None
        };
        log.push(TrainLogRow {
            epoch: epoch_1,
            mean_return: if return_count > 0 {
                return_sum / return_count as f64
            } else {
                0.0
            },
            val_metric,
        });
        on_epoch(params, log.last().unwrap());
    }
    Ok(log)
}

fn sample_batch(train_idx: &[usize], batch_size: usize, rng: &mut RngStream) -> Vec<usize> {
    if train_idx.len() >= batch_size {
        let perm = rng.permutation(train_idx.len());
        perm[..batch_size].iter().map(|&i| train_idx[i]).collect()
    } else {
        (0..batch_size)
            .map(|_| train_idx[rng.index(train_idx.len())])
            .collect()
    }
}

/// Mean energy change over `t_steps`-long rollouts on the validation set
/// (negative = the policy lowers energy). Deterministic unless `sampled`.
pub fn validate(
    params: &PolicyParameters,
    model: &PotentialModel,
    val_set: &[&Configuration],
    t_steps: usize,
    sampled: bool,
    rng: &RngStream,
    delta: Option<f64>,
) -> Result<f64> {
    if val_set.is_empty() {
        return Err(Error::InvalidParameter("validation set is empty".into()));
    }
    let mode = if sampled {
        RolloutMode::EvalSampled
    } else {
        RolloutMode::EvalDeterministic
    };
    let mut sum = 0.0;
    for (i, config) in val_set.iter().enumerate() {
        let mut r = rng.split(i as u64);
        let traj = rollout(params, model, config, t_steps, &mut r, mode, 1.0, delta)?;
        sum += traj.final_energy() - traj.initial_energy();
    }
    Ok(sum / val_set.len() as f64)
}

// ---------------------------------------------------------------- adaptation

/// Hyperparameters of the adaptation loop.
#[derive(Debug, Clone)]
pub struct AdaptConfig {
    pub epochs: usize,
    pub seeds: usize,
    pub trajectory_length: usize,
    pub gamma: f64,
    pub learning_rate: f64,
    pub grad_clip: f64,
    pub baseline: BaselineKind,
    pub fire: FireParams,
    pub delta: Option<f64>,
}

impl AdaptConfig {
    pub fn defaults_for(system: crate::potentials::System) -> Self {
        AdaptConfig {
            epochs: 1000,
            seeds: 10,
            trajectory_length: 15,
            gamma: 0.9,
            learning_rate: 0.005,
            grad_clip: 0.1,
            baseline: BaselineKind::DiscountedReturn,
            fire: FireParams::default_for(system),
            delta: None,
        }
    }
}

/// Outcome of adapting a trained policy to one target structure.
#[derive(Debug, Clone)]
pub struct AdaptOutcome {
    pub best_config: Configuration,
    pub best_energy: f64,
    /// Best-so-far energy after each epoch, per seed (each non-increasing).
    pub per_seed_traces: Vec<Vec<f64>>,
    pub per_seed_best: Vec<f64>,
}

/// Continue policy-gradient optimization on a single unseen structure.
///
/// Per seed and epoch: roll out T steps from the current target, apply one
/// REINFORCE update (single-structure batch), then resample the target as
/// the lowest-energy configuration among the last three trajectory states.
/// The best configuration ever visited is tracked globally; a diverged
/// trajectory restarts the next epoch from it.
pub fn adapt(
    params: &PolicyParameters,
    model: &PotentialModel,
    target: &Configuration,
    cfg: &AdaptConfig,
    rng: &RngStream,
) -> Result<AdaptOutcome> {
    let initial_energy = model.total_energy(target)?;
    if !initial_energy.is_finite() {
        return Err(Error::NonFiniteEnergy("adaptation target".into()));
    }
    let mut best_config = target.clone();
    let mut best_energy = initial_energy;
    let mut per_seed_traces = Vec::with_capacity(cfg.seeds);
    let mut per_seed_best = Vec::with_capacity(cfg.seeds);

    for seed in 0..cfg.seeds {
        let seed_rng = rng.split(0xADA0 + seed as u64);
        let mut seed_params = params.clone();
        let mut adam = ParamAdam::new(&seed_params, cfg.learning_rate);
        let mut current = target.clone();
        let mut seed_best = initial_energy;
        let mut seed_best_config = target.clone();
        let mut trace = Vec::with_capacity(cfg.epochs);

        for epoch in 0..cfg.epochs {
            let mut roll_rng = seed_rng.split(epoch as u64);
            let traj = rollout(
                &seed_params,
                model,
                &current,
                cfg.trajectory_length,
                &mut roll_rng,
                RolloutMode::Train,
                cfg.gamma,
                cfg.delta,
            )?;

            if traj.realized_steps() > 0 {
                let b = fire_baseline(
                    &traj.states[0].0,
                    model,
                    cfg.trajectory_length,
                    cfg.gamma,
                    cfg.baseline,
                    cfg.fire,
                );
                let (mut grads, stats) = reinforce_gradients(&seed_params, &traj, b)?;
                clip_global_norm(&mut grads, cfg.grad_clip);
                adam.step(&mut seed_params, &grads);
                for s in &stats {
                    seed_params.update_bn_ema(s);
                }
            }

            for (idx, &e) in traj.energies.iter().enumerate() {
                if e < seed_best {
                    seed_best = e;
                    seed_best_config = traj.states[idx].0.clone();
                }
            }

            current = if traj.truncated || traj.realized_steps() == 0 {
                seed_best_config.clone()
            } else {
                let n_states = traj.states.len();
                let window = 3.min(n_states);
                let start = n_states - window;
                let mut pick = start;
                for i in start..n_states {
                    if traj.energies[i] < traj.energies[pick] {
                        pick = i;
                    }
                }
                traj.states[pick].0.clone()
            };
            trace.push(seed_best);
        }

        if seed_best < best_energy {
            best_energy = seed_best;
            best_config = seed_best_config.clone();
        }
        per_seed_best.push(seed_best);
        per_seed_traces.push(trace);
    }

    Ok(AdaptOutcome {
        best_config,
        best_energy,
        per_seed_traces,
        per_seed_best,
    })
}
