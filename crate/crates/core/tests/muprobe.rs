use atomopt_core::graph::GraphState;
use atomopt_core::policy::*;
use atomopt_core::*;

#[test]
#[ignore]
fn probe_initial_mu() {
    let model = PotentialModel::BinaryLj(Default::default());
    let mut rng = rng::RngStream::new(91, 0).split(0x1271);
    let params = init_params(&mut rng, &PolicyConfig::new(2, 2.0)).unwrap();
    let (c, _) = xyz::read_config(std::path::Path::new(
        "/tmp/c9/data/structures/structure_0000.xyz",
    ))
    .unwrap();
    let state = GraphState::build(&c, &model, None).unwrap();
    let mu = forward_eval(&params, &state);
    let max = mu.iter().fold(0f64, |a, &b| a.max(b.abs()));
    let rms = (mu.iter().map(|x| x * x).sum::<f64>() / mu.len() as f64).sqrt();
    println!("initial mu: max |mu| = {max:.4}, rms = {rms:.4}");
}
