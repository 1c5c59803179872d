use ndarray::Array2;

use super::*;
use crate::autodiff::BnMode;
use crate::graph::GraphState;
use crate::potentials::{LjParams, PotentialModel};
use crate::system::{Configuration, SimulationBox};

fn lj_model() -> PotentialModel {
    PotentialModel::BinaryLj(LjParams::default())
}

fn toy_config(n: usize, seed: u64) -> Configuration {
    let mut rng = RngStream::new(seed, 5);
    let l = (n as f64 / 1.2).cbrt();
    let side = (n as f64).cbrt().ceil() as usize;
    let spacing = l / side as f64;
    let mut positions = Vec::with_capacity(n);
    let mut species = Vec::with_capacity(n);
    'outer: for x in 0..side {
        for y in 0..side {
            for z in 0..side {
                if positions.len() == n {
                    break 'outer;
                }
                positions.push([
                    (x as f64 + 0.5) * spacing + 0.1 * spacing * (rng.uniform() - 0.5),
                    (y as f64 + 0.5) * spacing + 0.1 * spacing * (rng.uniform() - 0.5),
                    (z as f64 + 0.5) * spacing + 0.1 * spacing * (rng.uniform() - 0.5),
                ]);
                species.push(if positions.len() % 5 == 0 { 1 } else { 0 });
            }
        }
    }
    Configuration::new(positions, species, SimulationBox::cubic(l).unwrap()).unwrap()
}

fn toy_state(n: usize, seed: u64) -> GraphState {
    GraphState::build(&toy_config(n, seed), &lj_model(), None).unwrap()
}

fn small_config() -> PolicyConfig {
    let mut c = PolicyConfig::new(2, 2.0);
    c.width = 8;
    c
}

#[test]
fn init_is_deterministic() {
    let config = PolicyConfig::new(2, 2.0);
    let a = init_params(&mut RngStream::new(3, 1), &config).unwrap();
    let b = init_params(&mut RngStream::new(3, 1), &config).unwrap();
    assert_eq!(a, b);
    let c = init_params(&mut RngStream::new(4, 1), &config).unwrap();
    assert_ne!(a, c);
}

#[test]
fn parameter_count_depends_only_on_widths() {
    let config = PolicyConfig::new(2, 2.0);
    let params = init_params(&mut RngStream::new(3, 1), &config).unwrap();
    let w = config.width;
    let d_s = config.node_feature_width();
    let mlp = |dims: &[usize]| -> usize {
        dims.windows(2).map(|p| p[0] * p[1] + p[1]).sum()
    };
    let expected = mlp(&[d_s, w, w, w])            // f_a
        + 2 * w                                     // batchnorm gamma/beta
        + mlp(&[4, w, w])                           // f_b
        + 2 * w * w                                 // W_V
        + mlp(&[2 * w, w, w, w])                    // node update
        + 2 * w * w                                 // W_E
        + mlp(&[2 * w, w, w, w])                    // edge update
        + mlp(&[2 * w, w, w, w, 3]); // head
    assert_eq!(params.n_parameters(), expected);
}

#[test]
fn zero_width_request_is_an_error() {
    let mut config = PolicyConfig::new(2, 2.0);
    config.width = 0;
    assert!(init_params(&mut RngStream::new(0, 0), &config).is_err());
}

#[test]
fn forward_is_permutation_equivariant() {
    let config = small_config();
    let params = init_params(&mut RngStream::new(7, 2), &config).unwrap();
    let base = toy_config(12, 11);
    let state = GraphState::build(&base, &lj_model(), None).unwrap();
    let mu = forward_eval(&params, &state);

    let mut rng = RngStream::new(8, 0);
    let perm = rng.permutation(12);
    let permuted = Configuration::new(
        perm.iter().map(|&i| base.positions[i]).collect(),
        perm.iter().map(|&i| base.species[i]).collect(),
        base.box_,
    )
    .unwrap();
    let state_p = GraphState::build(&permuted, &lj_model(), None).unwrap();
    let mu_p = forward_eval(&params, &state_p);

    for (new_i, &old_i) in perm.iter().enumerate() {
        for k in 0..3 {
            let diff = (mu_p[[new_i, k]] - mu[[old_i, k]]).abs();
            assert!(diff <= 1e-9, "row {new_i}/{old_i} dim {k}: {diff}");
        }
    }
}

#[test]
fn symmetric_dimer_rows_swap_consistently() {
    let config = PolicyConfig::new(2, 2.0);
    let params = init_params(&mut RngStream::new(9, 2), &config).unwrap();
    let c = Configuration::new(
        vec![[5.0, 5.0, 5.0], [6.1, 5.0, 5.0]],
        vec![0, 0],
        SimulationBox::cubic(20.0).unwrap(),
    )
    .unwrap();
    let state = GraphState::build(&c, &lj_model(), None).unwrap();
    let mu = forward_eval(&params, &state);
    let swapped = Configuration::new(
        vec![[6.1, 5.0, 5.0], [5.0, 5.0, 5.0]],
        vec![0, 0],
        c.box_,
    )
    .unwrap();
    let state_s = GraphState::build(&swapped, &lj_model(), None).unwrap();
    let mu_s = forward_eval(&params, &state_s);
    for k in 0..3 {
        assert!((mu[[0, k]] - mu_s[[1, k]]).abs() < 1e-9);
        assert!((mu[[1, k]] - mu_s[[0, k]]).abs() < 1e-9);
    }
}

#[test]
fn one_checkpoint_serves_multiple_sizes() {
    let config = PolicyConfig::new(2, 2.0);
    let params = init_params(&mut RngStream::new(40, 1), &config).unwrap();
    for n in [4, 25, 100] {
        let state = toy_state(n, 50 + n as u64);
        let mu = forward_eval(&params, &state);
        assert_eq!(mu.dim(), (n, 3));
        assert!(mu.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn sample_action_zero_alpha_returns_mu() {
    let mu = Array2::from_shape_fn((5, 3), |(i, j)| (i * 3 + j) as f64 * 0.1);
    let mut rng = RngStream::new(5, 5);
    let a = sample_action(&mu, 0.0, &mut rng);
    assert_eq!(a, mu);
}

#[test]
fn sample_action_is_seed_deterministic() {
    let mu = Array2::zeros((4, 3));
    let a = sample_action(&mu, 1e-5, &mut RngStream::new(6, 6));
    let b = sample_action(&mu, 1e-5, &mut RngStream::new(6, 6));
    assert_eq!(a, b);
}

#[test]
fn sample_action_mean_approaches_mu() {
    // Monte Carlo oracle: mean over 1e5 draws within 4 sqrt(alpha/1e5)
    let mu = Array2::from_elem((1, 3), 0.25);
    let alpha = 1e-2;
    let n = 100_000;
    let mut rng = RngStream::new(7, 7);
    let mut acc = [0.0; 3];
    for _ in 0..n {
        let a = sample_action(&mu, alpha, &mut rng);
        for k in 0..3 {
            acc[k] += a[[0, k]];
        }
    }
    let bound = 4.0 * (alpha / n as f64).sqrt();
    for v in acc {
        assert!((v / n as f64 - 0.25).abs() < bound);
    }
}

#[test]
fn log_prob_matches_frozen_value() {
    let mu = Array2::zeros((1, 3));
    let lp = log_prob_value(&mu, &mu, 1e-5);
    assert!((lp - 14.512572597841324).abs() < 1e-9, "{lp}");
}

#[test]
fn log_prob_doubles_with_node_count() {
    let mu1 = Array2::from_elem((1, 3), 0.5);
    let a1 = Array2::from_elem((1, 3), 0.3);
    let mu2 = Array2::from_elem((2, 3), 0.5);
    let a2 = Array2::from_elem((2, 3), 0.3);
    let lp1 = log_prob_value(&a1, &mu1, 0.1);
    let lp2 = log_prob_value(&a2, &mu2, 0.1);
    assert!((lp2 - 2.0 * lp1).abs() < 1e-12);
}

#[test]
fn log_prob_is_maximized_at_mu() {
    let mu = Array2::from_elem((2, 3), 0.4);
    let at_mu = log_prob_value(&mu, &mu, 1e-3);
    let mut rng = RngStream::new(12, 0);
    for _ in 0..20 {
        let off = sample_action(&mu, 1e-3, &mut rng);
        assert!(log_prob_value(&off, &mu, 1e-3) <= at_mu + 1e-12);
    }
}

#[test]
fn log_prob_gradient_wrt_params_matches_finite_differences() {
    let config = small_config();
    let params = init_params(&mut RngStream::new(21, 4), &config).unwrap();
    let state = toy_state(4, 60);
    let actions = Array2::from_shape_fn((4, 3), |(i, j)| 0.01 * ((i + j) as f64 - 2.0));
    let alpha = 1e-2;

    let eval = |p: &PolicyParameters| -> f64 {
        let mut net = PolicyNet::new(p);
        let (mu, _) = net.forward(&state, BnMode::Train);
        let lp = net.log_prob(mu, &actions, alpha);
        net.tape.value(lp)[[0, 0]]
    };

    let mut net = PolicyNet::new(&params);
    let (mu, _) = net.forward(&state, BnMode::Train);
    let lp = net.log_prob(mu, &actions, alpha);
    net.backward(lp).unwrap();
    let grads = net.gradients();

    // probe a spread of parameter entries across every tensor
    let h = 1e-6;
    for (name, grad) in &grads {
        let probes = [(0usize, 0usize), (grad.nrows() - 1, grad.ncols() - 1)];
        for &(i, j) in &probes {
            let mut plus = params.clone();
            plus.visit_mut(&mut |n, a| {
                if n == name {
                    a[[i, j]] += h;
                }
            });
            let mut minus = params.clone();
            minus.visit_mut(&mut |n, a| {
                if n == name {
                    a[[i, j]] -= h;
                }
            });
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let an = grad[[i, j]];
            let tol = 1e-4 * an.abs().max(fd.abs()).max(1e-3);
            assert!((an - fd).abs() <= tol, "{name}[{i},{j}]: {an} vs {fd}");
        }
    }
}

#[test]
fn displacement_scale_is_exactly_linear() {
    let config = small_config();
    let params = init_params(&mut RngStream::new(23, 0), &config).unwrap();
    let state = toy_state(6, 61);
    let mu1 = forward_eval(&params, &state);
    let mut scaled = params.clone();
    scaled.config_meta.displacement_scale *= 3.0;
    let mu3 = forward_eval(&scaled, &state);
    for (a, b) in mu1.iter().zip(mu3.iter()) {
        assert_eq!(3.0 * a, *b);
    }
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let dir = std::env::temp_dir().join(format!("atomopt-ckpt-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("policy.ckpt");

    let config = PolicyConfig::new(2, 2.0);
    let mut params = init_params(&mut RngStream::new(31, 0), &config).unwrap();
    // perturb EMA so the reserved tensors round-trip too
    params.node_embed_norm.ema_mean[0] = 0.123456789012345678;
    params.node_embed_norm.ema_var[3] = 9.87e-13;

    checkpoint::save(&params, &path).unwrap();
    let back = checkpoint::load(&path).unwrap();
    assert_eq!(params, back);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn checkpoint_rejects_garbage() {
    let dir = std::env::temp_dir().join(format!("atomopt-ckpt-bad-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("bad.ckpt");
    std::fs::write(&path, b"definitely not a checkpoint").unwrap();
    assert!(checkpoint::load(&path).is_err());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn bn_ema_update_uses_decay() {
    let config = PolicyConfig::new(2, 2.0);
    let mut params = init_params(&mut RngStream::new(33, 0), &config).unwrap();
    let stats = crate::autodiff::BnBatchStats {
        mean: ndarray::Array1::from_elem(config.width, 1.0),
        var: ndarray::Array1::from_elem(config.width, 4.0),
    };
    params.update_bn_ema(&stats);
    // ema_mean: 0.9 * 0 + 0.1 * 1 = 0.1; ema_var: 0.9 * 1 + 0.1 * 4 = 1.3
    assert!((params.node_embed_norm.ema_mean[0] - 0.1).abs() < 1e-15);
    assert!((params.node_embed_norm.ema_var[0] - 1.3).abs() < 1e-15);
}
