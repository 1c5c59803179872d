//! High-temperature sampling of realistic high-energy configurations.
//!
//! Structures are produced by random packing (rejection sampling with a
//! minimum-separation constraint) followed by Langevin-thermostatted
//! velocity-Verlet dynamics (BAOAB splitting) at the target temperature.
//! With friction = 0 the integrator reduces to plain velocity Verlet and
//! conserves energy, which the tests use as a sanity check.

use crate::error::{Error, Result};
use crate::potentials::{PotentialModel, System};
use crate::rng::RngStream;
use crate::system::{Configuration, SimulationBox, Vec3};

/// Thermostat settings. Temperature is in the active system's units
/// (reduced T for LJ, Kelvin for SW and C-S-H); `friction` has units of
/// inverse time; `kb` converts temperature to energy and `mass` is uniform
/// per system in units where F/mass is an acceleration.
#[derive(Debug, Clone, Copy)]
pub struct ThermostatSpec {
    pub temperature: f64,
    pub friction: f64,
    pub dt: f64,
    pub mass: f64,
    pub kb: f64,
}

impl ThermostatSpec {
    /// Per-system defaults used by the dataset generator:
    /// LJ reduced units (T = 2.0, dt = 0.003, m = 1, kB = 1);
    /// SW silicon in eV/Angstrom/ps (T = 3500 K, dt = 0.001 ps, silicon mass
    /// 28.0855 amu = 2.91086e-3 eV ps^2/A^2, kB = 8.617333e-5 eV/K);
    /// C-S-H in kcal/mol/nm/ps (T = 1000 K, 5 nm grain mass ~= 2.45e4
    /// kcal/mol ps^2/nm^2, kB = 1.987204e-3 kcal/mol/K).
    pub fn default_for(system: System) -> Self {
        match system {
            System::Lj => ThermostatSpec {
                temperature: 2.0,
                friction: 1.0,
                dt: 0.003,
                mass: 1.0,
                kb: 1.0,
            },
            System::Sw => ThermostatSpec {
                temperature: 3500.0,
                friction: 2.0,
                dt: 0.001,
                mass: 28.0855 * 1.036_426_9e-4,
                kb: 8.617_333_262e-5,
            },
            System::Csh => ThermostatSpec {
                temperature: 1000.0,
                friction: 1.0,
                dt: 0.05,
                mass: 2.45e4,
                kb: 1.987_204_1e-3,
            },
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::InvalidParameter("temperature must be > 0".into()));
        }
        if self.friction < 0.0 {
            return Err(Error::InvalidParameter("friction must be >= 0".into()));
        }
        if !(self.dt > 0.0) || !(self.mass > 0.0) || !(self.kb > 0.0) {
            return Err(Error::InvalidParameter(
                "dt, mass, kb must all be > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Place `n` atoms uniformly in `box_` with no minimum-image pair closer
/// than `min_dist`. Species counts follow the largest-remainder rounding of
/// `species_mix` (fractions over species ids 0..mix.len()).
pub fn random_pack(
    n: usize,
    box_: SimulationBox,
    species_mix: &[f64],
    min_dist: f64,
    rng: &mut RngStream,
) -> Result<Configuration> {
    let species = mix_counts(n, species_mix);
    let mut positions: Vec<Vec3> = Vec::with_capacity(n);
    let max_attempts = 2000 * n.max(1);
    let mut attempts = 0;
    while positions.len() < n {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::PackingFailure {
                placed: positions.len(),
                requested: n,
                attempts,
            });
        }
        let candidate = [
            rng.uniform_in(0.0, box_.lengths[0]),
            rng.uniform_in(0.0, box_.lengths[1]),
            rng.uniform_in(0.0, box_.lengths[2]),
        ];
        let ok = positions.iter().all(|&p| {
            let d = box_.minimum_image(crate::system::vsub(candidate, p));
            crate::system::vdot(d, d) >= min_dist * min_dist
        });
        if ok {
            positions.push(candidate);
        }
    }
    Configuration::new(positions, species, box_)
}

/// Largest-remainder apportionment of `n` atoms over species fractions.
fn mix_counts(n: usize, fractions: &[f64]) -> Vec<u8> {
    let total: f64 = fractions.iter().sum();
    let mut counts: Vec<usize> = fractions
        .iter()
        .map(|f| (f / total * n as f64).floor() as usize)
        .collect();
    let mut remainders: Vec<(usize, f64)> = fractions
        .iter()
        .enumerate()
        .map(|(i, f)| (i, f / total * n as f64 - counts[i] as f64))
        .collect();
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let assigned: usize = counts.iter().sum();
    for k in 0..(n - assigned) {
        counts[remainders[k % remainders.len()].0] += 1;
    }
    let mut species = Vec::with_capacity(n);
    for (id, &c) in counts.iter().enumerate() {
        species.extend(std::iter::repeat_n(id as u8, c));
    }
    species
}

/// Result of an NVT run: the final configuration plus the per-step total
/// energy trace and the kinetic temperature averaged over the last tenth of
/// the run.
#[derive(Debug, Clone)]
pub struct NvtRun {
    pub config: Configuration,
    pub energy_trace: Vec<f64>,
    pub mean_tail_temperature: f64,
}

/// Langevin-thermostatted velocity-Verlet (BAOAB) for `steps` steps.
/// Velocities are drawn fresh from Maxwell-Boltzmann at the target
/// temperature. `steps = 0` returns the configuration unchanged.
pub fn nvt_run(
    config: &Configuration,
    model: &PotentialModel,
    spec: &ThermostatSpec,
    steps: usize,
    rng: &mut RngStream,
) -> Result<NvtRun> {
    spec.validate()?;
    let mut current = config.clone();
    if steps == 0 {
        return Ok(NvtRun {
            config: current,
            energy_trace: vec![],
            mean_tail_temperature: spec.temperature,
        });
    }
    let n = current.n_atoms();
    let dof = (3 * n) as f64;
    let sigma_v = (spec.kb * spec.temperature / spec.mass).sqrt();
    let mut velocities: Vec<Vec3> = (0..n)
        .map(|_| [sigma_v * rng.normal(), sigma_v * rng.normal(), sigma_v * rng.normal()])
        .collect();

    let e0 = model.total_energy(&current)?;
    if !e0.is_finite() {
        return Err(Error::NonFiniteEnergy("initial NVT state".into()));
    }
    let guard = 1e3 * e0.abs() + 1e4;
    let c1 = (-spec.friction * spec.dt).exp();
    let c2 = sigma_v * (1.0 - c1 * c1).sqrt();
    let half_dt = 0.5 * spec.dt;
    let inv_m = 1.0 / spec.mass;

    let mut forces = model.forces(&current)?;
    let mut energy_trace = Vec::with_capacity(steps);
    let tail_start = steps - (steps / 10).max(1).min(steps);
    let mut tail_temp_sum = 0.0;
    let mut tail_count = 0usize;

    for step in 0..steps {
        for i in 0..n {
            for k in 0..3 {
                velocities[i][k] += half_dt * forces[i][k] * inv_m;
                current.positions[i][k] += half_dt * velocities[i][k];
            }
        }
        if spec.friction > 0.0 {
            for v in velocities.iter_mut() {
                for vk in v.iter_mut() {
                    *vk = c1 * *vk + c2 * rng.normal();
                }
            }
        }
        for i in 0..n {
            for k in 0..3 {
                current.positions[i][k] += half_dt * velocities[i][k];
            }
        }
        forces = model.forces(&current)?;
        for i in 0..n {
            for k in 0..3 {
                velocities[i][k] += half_dt * forces[i][k] * inv_m;
            }
        }

        let potential = model.total_energy(&current)?;
        if !potential.is_finite() || potential.abs() > guard {
            return Err(Error::EnergyDiverged(format!(
                "|U| = {potential:.3e} at step {step} (unstable dt?)"
            )));
        }
        energy_trace.push(potential);
        if step >= tail_start {
            let ke: f64 = velocities
                .iter()
                .map(|v| 0.5 * spec.mass * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]))
                .sum();
            tail_temp_sum += 2.0 * ke / (dof * spec.kb);
            tail_count += 1;
        }
    }

    Ok(NvtRun {
        config: current,
        energy_trace,
        mean_tail_temperature: tail_temp_sum / tail_count.max(1) as f64,
    })
}

/// Microcanonical velocity-Verlet used by the energy-conservation test:
/// same integrator with friction 0 and externally supplied velocities.
pub fn nve_run(
    config: &Configuration,
    model: &PotentialModel,
    dt: f64,
    mass: f64,
    velocities: &mut Vec<Vec3>,
    steps: usize,
) -> Result<(Configuration, Vec<f64>)> {
    let mut current = config.clone();
    let n = current.n_atoms();
    let half_dt = 0.5 * dt;
    let inv_m = 1.0 / mass;
    let mut forces = model.forces(&current)?;
    let mut total_trace = Vec::with_capacity(steps);
    for _ in 0..steps {
        for i in 0..n {
            for k in 0..3 {
                velocities[i][k] += half_dt * forces[i][k] * inv_m;
                current.positions[i][k] += dt * velocities[i][k];
            }
        }
        forces = model.forces(&current)?;
        for i in 0..n {
            for k in 0..3 {
                velocities[i][k] += half_dt * forces[i][k] * inv_m;
            }
        }
        let ke: f64 = velocities
            .iter()
            .map(|v| 0.5 * mass * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]))
            .sum();
        total_trace.push(ke + model.total_energy(&current)?);
    }
    Ok((current, total_trace))
}

/// One sampled structure plus bookkeeping for the dataset manifest.
#[derive(Debug, Clone)]
pub struct Sample {
    pub config: Configuration,
    pub energy: f64,
}

/// Settings for [`sample_dataset`].
#[derive(Debug, Clone)]
pub struct DatasetSpec {
    pub n_structures: usize,
    pub equilibration_steps: usize,
    pub gap_steps: usize,
    pub thermostat: ThermostatSpec,
    pub min_dist: f64,
    pub species_mix: Vec<f64>,
}

/// Pack, equilibrate, then collect `n_structures` configurations separated
/// by `gap_steps` integration steps. Deterministic in the stream.
pub fn sample_dataset(
    n_atoms: usize,
    box_: SimulationBox,
    model: &PotentialModel,
    spec: &DatasetSpec,
    rng: &RngStream,
) -> Result<Vec<Sample>> {
    if spec.n_structures == 0 {
        return Ok(vec![]);
    }
    let mut pack_rng = rng.split(0xC0FFEE);
    let packed = random_pack(n_atoms, box_, &spec.species_mix, spec.min_dist, &mut pack_rng)?;
    let mut md_rng = rng.split(0xD1CE);
    let equilibrated = nvt_run(
        &packed,
        model,
        &spec.thermostat,
        spec.equilibration_steps,
        &mut md_rng,
    )?;
    let mut samples = Vec::with_capacity(spec.n_structures);
    let mut current = equilibrated.config;
    for _ in 0..spec.n_structures {
        let run = nvt_run(&current, model, &spec.thermostat, spec.gap_steps, &mut md_rng)?;
        current = run.config;
        let energy = model.total_energy(&current)?;
        samples.push(Sample {
            config: current.wrap(),
            energy,
        });
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::LjParams;

    fn lj_model() -> PotentialModel {
        PotentialModel::BinaryLj(LjParams::default())
    }

    fn vdot_t(v: &Vec3) -> f64 {
        v[0] * v[0] + v[1] * v[1] + v[2] * v[2]
    }

    fn ka_box(n: usize, density: f64) -> SimulationBox {
        SimulationBox::cubic((n as f64 / density).cbrt()).unwrap()
    }

    #[test]
    fn random_pack_respects_species_mix_and_min_dist() {
        let mut rng = RngStream::new(7, 0);
        let b = ka_box(100, 1.2);
        let c = random_pack(100, b, &[0.8, 0.2], 0.8, &mut rng).unwrap();
        assert_eq!(c.species.iter().filter(|&&s| s == 0).count(), 80);
        assert_eq!(c.species.iter().filter(|&&s| s == 1).count(), 20);
        for i in 0..100 {
            for j in (i + 1)..100 {
                let d = c.pair_displacement(i, j).unwrap();
                assert!(crate::system::vnorm(d) >= 0.8 - 1e-12);
            }
        }
    }

    #[test]
    fn random_pack_single_atom() {
        let mut rng = RngStream::new(7, 1);
        let c = random_pack(1, ka_box(1, 1.2), &[1.0], 0.9, &mut rng).unwrap();
        assert_eq!(c.n_atoms(), 1);
    }

    #[test]
    fn random_pack_infeasible_errors() {
        let mut rng = RngStream::new(7, 2);
        let b = SimulationBox::cubic(1.0).unwrap();
        // min_dist larger than the box diagonal: second atom can never fit
        assert!(matches!(
            random_pack(2, b, &[1.0], 2.0, &mut rng),
            Err(Error::PackingFailure { .. })
        ));
    }

    #[test]
    fn nvt_zero_steps_is_identity() {
        let mut rng = RngStream::new(8, 0);
        let b = ka_box(20, 1.2);
        let c = random_pack(20, b, &[0.8, 0.2], 0.8, &mut rng).unwrap();
        let run = nvt_run(&c, &lj_model(), &ThermostatSpec::default_for(System::Lj), 0, &mut rng)
            .unwrap();
        assert_eq!(run.config, c);
    }

    #[test]
    fn overdamped_cold_dynamics_descends() {
        let mut rng = RngStream::new(8, 1);
        let b = ka_box(20, 1.2);
        let c = random_pack(20, b, &[0.8, 0.2], 0.8, &mut rng).unwrap();
        let model = lj_model();
        let e0 = model.total_energy(&c).unwrap();
        let spec = ThermostatSpec {
            temperature: 1e-9,
            friction: 50.0,
            dt: 0.002,
            mass: 1.0,
            kb: 1.0,
        };
        let run = nvt_run(&c, &model, &spec, 2000, &mut rng).unwrap();
        let e1 = model.total_energy(&run.config).unwrap();
        assert!(e1 < e0, "{e1} !< {e0}");
    }

    #[test]
    fn nvt_reaches_target_temperature() {
        let mut rng = RngStream::new(8, 2);
        let b = ka_box(60, 1.2);
        let c = random_pack(60, b, &[0.8, 0.2], 0.8, &mut rng).unwrap();
        let spec = ThermostatSpec::default_for(System::Lj);
        let run = nvt_run(&c, &lj_model(), &spec, 4000, &mut rng).unwrap();
        let t = run.mean_tail_temperature;
        assert!(
            (t - spec.temperature).abs() < 0.2 * spec.temperature,
            "tail T = {t}"
        );
    }

    #[test]
    fn frictionless_integrator_conserves_energy() {
        // near a minimum with gentle velocities nothing crosses the cutoff,
        // so this isolates the integrator itself
        let mut rng = RngStream::new(8, 3);
        let b = ka_box(30, 1.0);
        let packed = random_pack(30, b, &[0.8, 0.2], 0.85, &mut rng).unwrap();
        let model = lj_model();
        let (relaxed, _) = crate::optim::minimize(
            &packed,
            &model,
            &crate::optim::MinimizeOptions::new(crate::optim::Method::Fire, 300),
        )
        .unwrap();
        let sigma_v = 0.1f64.sqrt();
        let mut velocities: Vec<crate::system::Vec3> = (0..30)
            .map(|_| {
                [
                    sigma_v * rng.normal(),
                    sigma_v * rng.normal(),
                    sigma_v * rng.normal(),
                ]
            })
            .collect();
        let ke0: f64 = velocities.iter().map(|v| 0.5 * vdot_t(v)).sum();
        let u0 = model.total_energy(&relaxed).unwrap();
        let scale = ke0.abs() + u0.abs();
        let (_, trace) = nve_run(&relaxed, &model, 0.001, 1.0, &mut velocities, 1000).unwrap();
        let first = trace[0];
        for e in &trace {
            // kinetic and potential parts nearly cancel in the total, so the
            // 1e-4 relative bound is taken against the energy scale
            assert!((e - first).abs() <= 1e-4 * scale, "drift: {e} vs {first}");
        }
    }

    #[test]
    fn dataset_is_deterministic_and_sized() {
        let model = lj_model();
        let spec = DatasetSpec {
            n_structures: 3,
            equilibration_steps: 200,
            gap_steps: 50,
            thermostat: ThermostatSpec::default_for(System::Lj),
            min_dist: 0.8,
            species_mix: vec![0.8, 0.2],
        };
        let b = ka_box(20, 1.2);
        let rng = RngStream::new(99, 0);
        let a = sample_dataset(20, b, &model, &spec, &rng).unwrap();
        let b2 = sample_dataset(20, b, &model, &spec, &rng).unwrap();
        assert_eq!(a.len(), 3);
        for (s1, s2) in a.iter().zip(&b2) {
            assert_eq!(s1.config, s2.config);
            assert_eq!(s1.energy, s2.energy);
        }
    }

    #[test]
    fn empty_dataset_is_fine() {
        let model = lj_model();
        let spec = DatasetSpec {
            n_structures: 0,
            equilibration_steps: 10,
            gap_steps: 10,
            thermostat: ThermostatSpec::default_for(System::Lj),
            min_dist: 0.8,
            species_mix: vec![0.8, 0.2],
        };
        let rng = RngStream::new(99, 1);
        let out = sample_dataset(10, ka_box(10, 1.2), &model, &spec, &rng).unwrap();
        assert!(out.is_empty());
    }
}
