//! Shared fixtures for the criterion benches: deterministic liquid-like
//! configurations for each energy model.

use atomopt_core::potentials::{CshParams, LjParams, PotentialModel, SwParams};
use atomopt_core::rng::RngStream;
use atomopt_core::sampler::random_pack;
use atomopt_core::system::{Configuration, SimulationBox};

pub fn lj_fixture(n: usize) -> (PotentialModel, Configuration) {
    let model = PotentialModel::BinaryLj(LjParams::default());
    let box_ = SimulationBox::cubic((n as f64 / 1.2).cbrt()).unwrap();
    let mut rng = RngStream::new(1234, 1);
    let config = random_pack(n, box_, &[0.8, 0.2], 0.8, &mut rng).unwrap();
    (model, config)
}

pub fn sw_fixture(n: usize) -> (PotentialModel, Configuration) {
    let model = PotentialModel::SwSilicon(SwParams::default());
    let box_ = SimulationBox::cubic((n as f64 / 0.04996).cbrt()).unwrap();
    let mut rng = RngStream::new(1234, 2);
    let config = random_pack(n, box_, &[1.0], 2.0, &mut rng).unwrap();
    (model, config)
}

pub fn csh_fixture(n: usize) -> (PotentialModel, Configuration) {
    let model = PotentialModel::Csh(CshParams::default());
    let box_ = SimulationBox::cubic((n as f64 / 0.0076).cbrt()).unwrap();
    let mut rng = RngStream::new(1234, 3);
    let config = random_pack(n, box_, &[1.0], 4.0, &mut rng).unwrap();
    (model, config)
}
