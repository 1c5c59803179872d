use super::*;
use crate::graph::build_graph;
use crate::rng::RngStream;
use crate::system::{vadd, SimulationBox};

const ROOT6_2: f64 = 1.122_462_048_309_373; // 2^(1/6)

fn lj() -> LjParams {
    LjParams::default()
}

fn sw() -> SwParams {
    SwParams::default()
}

fn csh() -> CshParams {
    CshParams::default()
}

/// Jittered-lattice configuration: random but safely non-overlapping, the
/// substrate for finite-difference force checks.
pub(crate) fn jittered_config(
    n: usize,
    spacing: f64,
    jitter: f64,
    n_species: u8,
    seed: u64,
) -> Configuration {
    let cells = (n as f64).cbrt().ceil() as usize;
    let l = cells as f64 * spacing;
    let mut rng = RngStream::new(seed, 17);
    let mut positions = Vec::with_capacity(n);
    let mut species = Vec::with_capacity(n);
    'outer: for x in 0..cells {
        for y in 0..cells {
            for z in 0..cells {
                if positions.len() == n {
                    break 'outer;
                }
                positions.push([
                    (x as f64 + 0.5) * spacing + jitter * (rng.uniform() - 0.5),
                    (y as f64 + 0.5) * spacing + jitter * (rng.uniform() - 0.5),
                    (z as f64 + 0.5) * spacing + jitter * (rng.uniform() - 0.5),
                ]);
                species.push(rng.index(n_species as usize) as u8);
            }
        }
    }
    Configuration::new(positions, species, SimulationBox::cubic(l).unwrap()).unwrap()
}

pub(crate) fn test_models() -> Vec<(PotentialModel, Configuration)> {
    vec![
        (
            PotentialModel::BinaryLj(lj()),
            jittered_config(30, 1.1, 0.25, 2, 1),
        ),
        (
            PotentialModel::SwSilicon(sw()),
            jittered_config(30, 2.6, 0.45, 1, 2),
        ),
        (
            PotentialModel::Csh(csh()),
            jittered_config(30, 5.4, 1.0, 1, 3),
        ),
    ]
}

fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

// ---------------------------------------------------------------- LJ pair

#[test]
fn lj_pair_zero_at_sigma() {
    assert!(lj_pair_energy(1.0, 1.0, 1.0).abs() < 1e-14);
    assert!(lj_pair_energy(0.88, 0.5, 0.88).abs() < 1e-14);
}

#[test]
fn lj_pair_minimum_is_minus_epsilon() {
    assert!((lj_pair_energy(ROOT6_2, 1.0, 1.0) + 1.0).abs() < 1e-12);
    assert!((lj_pair_energy(ROOT6_2 * 0.8, 1.5, 0.8) + 1.5).abs() < 1e-12);
}

#[test]
fn lj_pair_at_cutoff_matches_oracle() {
    // direct evaluation: 4 (2.5^-12 - 2.5^-6)
    assert!((lj_pair_energy(2.5, 1.0, 1.0) - (-0.016316891136)).abs() < 1e-15);
}

#[test]
#[should_panic]
fn lj_pair_rejects_nonpositive_r() {
    lj_pair_energy(0.0, 1.0, 1.0);
}

// ------------------------------------------------------------- truncation

#[test]
fn truncated_pair_zero_beyond_cutoff() {
    let f = |r: f64| lj_pair_energy(r, 1.0, 1.0);
    assert_eq!(truncated_pair(f, 2.5, 2.5), 0.0);
    assert_eq!(truncated_pair(f, 3.0, 2.5), 0.0);
}

#[test]
fn truncated_pair_continuous_at_cutoff() {
    let f = |r: f64| lj_pair_energy(r, 1.0, 1.0);
    let just_inside = truncated_pair(f, 2.5 - 1e-9, 2.5);
    assert!(just_inside.abs() < 1e-8, "{just_inside}");
}

#[test]
fn truncated_ka_aa_at_minimum() {
    let f = |r: f64| lj_pair_energy(r, 1.0, 1.0);
    let v = truncated_pair(f, ROOT6_2, 2.5);
    assert!((v - (-0.983683108864)).abs() < 1e-12, "{v}");
}

// ------------------------------------------------------------------- SW

#[test]
fn sw_two_body_zero_at_and_beyond_cutoff() {
    let p = sw();
    assert_eq!(p.two_body(p.cutoff()), 0.0);
    assert_eq!(p.two_body(5.0), 0.0);
}

#[test]
fn sw_two_body_vanishes_smoothly_at_cutoff() {
    let p = sw();
    assert!(p.two_body(p.cutoff() - 1e-4).abs() < 1e-8);
    assert!(p.two_body(p.cutoff() - 1e-2).abs() < 1e-3);
}

#[test]
fn sw_two_body_golden_value() {
    // independent single-expression evaluation at r = 2.35 A
    let v = sw().two_body(2.35);
    assert!(rel_close(v, -2.168322583121376, 1e-12), "{v}");
}

#[test]
fn sw_three_body_zero_at_tetrahedral_angle() {
    let p = sw();
    assert_eq!(p.three_body(2.0, 2.2, -1.0 / 3.0), 0.0);
    assert_eq!(p.three_body(3.0, 2.5, -1.0 / 3.0), 0.0);
}

#[test]
fn sw_three_body_zero_beyond_cutoff() {
    let p = sw();
    assert_eq!(p.three_body(p.cutoff(), 2.0, 0.5), 0.0);
    assert_eq!(p.three_body(2.0, p.cutoff() + 0.1, 0.5), 0.0);
}

#[test]
fn sw_three_body_golden_value() {
    let v = sw().three_body(2.35, 2.35, 0.0);
    assert!(rel_close(v, 0.14707204884582398, 1e-12), "{v}");
}

// ------------------------------------------------------------------ CSH

#[test]
fn csh_zero_at_sigma_minimum_at_analytic_r() {
    let p = csh();
    assert!(csh_pair_energy(p.sigma, &p).abs() < 1e-9);
    let r_min = 2f64.powf(1.0 / 14.0) * p.sigma;
    assert!(rel_close(csh_pair_energy(r_min, &p), -p.epsilon, 1e-12));
}

#[test]
fn csh_golden_value_at_1p2_sigma() {
    let p = csh();
    let v = csh_pair_energy(1.2 * p.sigma, &p);
    assert!(rel_close(v, -0.28728099474801405 * p.epsilon, 1e-11), "{v}");
}

// ---------------------------------------------------- equilibrium lengths

#[test]
fn equilibrium_lengths() {
    let m = PotentialModel::BinaryLj(lj());
    assert!((m.equilibrium_length(0, 0) - ROOT6_2).abs() < 1e-12);
    assert!((m.equilibrium_length(0, 1) - ROOT6_2 * 0.8).abs() < 1e-12);

    let c = csh();
    assert!(
        (PotentialModel::Csh(c.clone()).equilibrium_length(0, 0)
            - 2f64.powf(1.0 / 14.0) * c.sigma)
            .abs()
            < 1e-12
    );
}

#[test]
fn sw_equilibrium_is_a_derivative_sign_change() {
    let p = sw();
    let r = p.equilibrium_length();
    assert!(r > 0.0 && r < p.cutoff());
    let h = 1e-6;
    let left = (p.two_body(r) - p.two_body(r - h)) / h;
    let right = (p.two_body(r + h) - p.two_body(r)) / h;
    assert!(left <= 0.0, "left slope {left}");
    assert!(right >= 0.0, "right slope {right}");
    // brute-force scan cannot find anything lower
    for k in 1..2000 {
        let rr = 1.5 + (p.cutoff() - 1.5) * k as f64 / 2000.0;
        assert!(p.two_body(rr) >= p.two_body(r) - 1e-9);
    }
}

// ------------------------------------------------------ energies & forces

#[test]
fn dimer_total_energy_is_shifted_well_depth() {
    let c = Configuration::new(
        vec![[1.0, 1.0, 1.0], [1.0 + ROOT6_2, 1.0, 1.0]],
        vec![0, 0],
        SimulationBox::cubic(20.0).unwrap(),
    )
    .unwrap();
    let m = PotentialModel::BinaryLj(lj());
    let e = m.total_energy(&c).unwrap();
    assert!((e - (-0.983683108864)).abs() < 1e-12, "{e}");
}

#[test]
fn atoms_beyond_cutoff_have_zero_energy() {
    let c = Configuration::new(
        vec![[1.0, 1.0, 1.0], [7.0, 1.0, 1.0]],
        vec![0, 0],
        SimulationBox::cubic(20.0).unwrap(),
    )
    .unwrap();
    assert_eq!(PotentialModel::BinaryLj(lj()).total_energy(&c).unwrap(), 0.0);
}

#[test]
fn equilateral_triangle_energy_is_three_bonds() {
    let r = ROOT6_2;
    let c = Configuration::new(
        vec![
            [1.0, 1.0, 1.0],
            [1.0 + r, 1.0, 1.0],
            [1.0 + 0.5 * r, 1.0 + r * 3f64.sqrt() / 2.0, 1.0],
        ],
        vec![0, 0, 0],
        SimulationBox::cubic(20.0).unwrap(),
    )
    .unwrap();
    let e = PotentialModel::BinaryLj(lj()).total_energy(&c).unwrap();
    // sides at the pair minimum; the r = 2^(1/6) * sqrt(3) diagonals don't exist here
    assert!((e - 3.0 * (-0.983683108864)).abs() < 1e-10, "{e}");
}

#[test]
fn per_atom_dimer_splits_half_half() {
    let c = Configuration::new(
        vec![[1.0, 1.0, 1.0], [1.0 + ROOT6_2, 1.0, 1.0]],
        vec![0, 0],
        SimulationBox::cubic(20.0).unwrap(),
    )
    .unwrap();
    let m = PotentialModel::BinaryLj(lj());
    let g = build_graph(&c, m.max_cutoff());
    let u = m.per_atom_energies(&c, &g).unwrap();
    assert!((u[0] - (-0.983683108864 / 2.0)).abs() < 1e-12);
    assert!((u[1] - u[0]).abs() < 1e-15);
}

#[test]
fn per_atom_isolated_atom_is_zero() {
    let c = Configuration::new(
        vec![[1.0, 1.0, 1.0]],
        vec![0],
        SimulationBox::cubic(20.0).unwrap(),
    )
    .unwrap();
    let m = PotentialModel::BinaryLj(lj());
    let g = build_graph(&c, m.max_cutoff());
    assert_eq!(m.per_atom_energies(&c, &g).unwrap(), vec![0.0]);
}

#[test]
fn per_atom_partition_sums_to_total_for_all_models() {
    for (model, config) in test_models() {
        let g = build_graph(&config.wrap(), model.max_cutoff());
        let u = model.per_atom_energies(&config.wrap(), &g).unwrap();
        let total = model.total_energy(&config).unwrap();
        let sum: f64 = u.iter().sum();
        assert!(
            rel_close(sum, total, 1e-10),
            "{:?}: {sum} vs {total}",
            model.system()
        );
    }
}

#[test]
fn forces_vanish_at_pair_minimum() {
    let c = Configuration::new(
        vec![[1.0, 1.0, 1.0], [1.0 + ROOT6_2, 1.0, 1.0]],
        vec![0, 0],
        SimulationBox::cubic(20.0).unwrap(),
    )
    .unwrap();
    let f = PotentialModel::BinaryLj(lj()).forces(&c).unwrap();
    for row in f {
        for v in row {
            assert!(v.abs() < 1e-10, "{v}");
        }
    }
}

#[test]
fn isolated_atom_feels_no_force() {
    let c = Configuration::new(
        vec![[1.0, 1.0, 1.0], [8.0, 8.0, 8.0]],
        vec![0, 1],
        SimulationBox::cubic(20.0).unwrap(),
    )
    .unwrap();
    let f = PotentialModel::BinaryLj(lj()).forces(&c).unwrap();
    assert_eq!(f, vec![[0.0; 3], [0.0; 3]]);
}

/// Central finite difference of total_energy, the independent oracle for
/// analytic forces. Shared with the acceptance suite.
pub fn finite_difference_force(
    model: &PotentialModel,
    config: &Configuration,
    atom: usize,
    dim: usize,
    h: f64,
) -> f64 {
    let mut plus = config.clone();
    plus.positions[atom][dim] += h;
    let mut minus = config.clone();
    minus.positions[atom][dim] -= h;
    let e_plus = model.total_energy(&plus).unwrap();
    let e_minus = model.total_energy(&minus).unwrap();
    -(e_plus - e_minus) / (2.0 * h)
}

pub fn max_force_fd_error(model: &PotentialModel, config: &Configuration, h: f64) -> f64 {
    let forces = model.forces(config).unwrap();
    let mut worst = 0.0f64;
    for atom in 0..config.n_atoms() {
        for dim in 0..3 {
            let fd = finite_difference_force(model, config, atom, dim, h);
            let analytic = forces[atom][dim];
            let denom = analytic.abs().max(fd.abs()).max(1e-4);
            let err = if (analytic - fd).abs() < 1e-10 {
                0.0
            } else {
                (analytic - fd).abs() / denom
            };
            worst = worst.max(err);
        }
    }
    worst
}

#[test]
fn forces_match_finite_differences() {
    for (model, config) in test_models() {
        let err = max_force_fd_error(&model, &config, 1e-5);
        assert!(err < 1e-6, "{:?}: max rel error {err}", model.system());
    }
}

#[test]
fn net_force_is_zero() {
    for (model, config) in test_models() {
        let f = model.forces(&config).unwrap();
        let mut net = [0.0; 3];
        for row in &f {
            for k in 0..3 {
                net[k] += row[k];
            }
        }
        for v in net {
            assert!(v.abs() < 1e-9, "{:?}: net {v}", model.system());
        }
    }
}

#[test]
fn translation_and_permutation_invariance() {
    for (model, config) in test_models() {
        let e0 = model.total_energy(&config).unwrap();

        let shifted = Configuration::new(
            config
                .positions
                .iter()
                .map(|&p| vadd(p, [3.7, -11.9, 0.4]))
                .collect(),
            config.species.clone(),
            config.box_,
        )
        .unwrap();
        let e1 = model.total_energy(&shifted).unwrap();
        assert!(rel_close(e0, e1, 1e-12), "translation: {e0} vs {e1}");

        let mut rng = RngStream::new(9, 0);
        let perm = rng.permutation(config.n_atoms());
        let permuted = Configuration::new(
            perm.iter().map(|&i| config.positions[i]).collect(),
            perm.iter().map(|&i| config.species[i]).collect(),
            config.box_,
        )
        .unwrap();
        let e2 = model.total_energy(&permuted).unwrap();
        assert!(rel_close(e0, e2, 1e-12), "permutation: {e0} vs {e2}");
    }
}

#[test]
fn cutoff_locality_moving_far_atom_changes_nothing() {
    for (model, config) in test_models() {
        // build a copy with an extra atom far away from everything, then move it
        let l = config.box_.lengths[0];
        let mut base = config.clone();
        // enlarge the box so "far from all" exists
        let big = SimulationBox::cubic(l + 4.0 * model.max_cutoff()).unwrap();
        base.box_ = big;
        let mut with_far = base.clone();
        with_far.positions.push([
            l + 2.0 * model.max_cutoff(),
            l + 2.0 * model.max_cutoff(),
            l + 2.0 * model.max_cutoff(),
        ]);
        with_far.species.push(0);

        let g = build_graph(&with_far.wrap(), model.max_cutoff());
        let u0 = model.per_atom_energies(&with_far.wrap(), &g).unwrap();
        let f0 = model.forces(&with_far).unwrap();

        let mut moved = with_far.clone();
        let n = moved.n_atoms();
        moved.positions[n - 1][0] += 0.7 * model.max_cutoff();
        let g1 = build_graph(&moved.wrap(), model.max_cutoff());
        let u1 = model.per_atom_energies(&moved.wrap(), &g1).unwrap();
        let f1 = model.forces(&moved).unwrap();

        for i in 0..n - 1 {
            assert!((u0[i] - u1[i]).abs() < 1e-12);
            for k in 0..3 {
                assert!((f0[i][k] - f1[i][k]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn sw_tetrahedral_triplet_contributes_nothing() {
    // apex at origin, two bonds at the tetrahedral angle (cos = -1/3)
    let p = sw();
    let r = 2.35;
    let cos: f64 = -1.0 / 3.0;
    let sin = (1.0 - cos * cos).sqrt();
    let c = Configuration::new(
        vec![
            [10.0, 10.0, 10.0],
            [10.0 + r, 10.0, 10.0],
            [10.0 + r * cos, 10.0 + r * sin, 10.0],
        ],
        vec![0, 0, 0],
        SimulationBox::cubic(40.0).unwrap(),
    )
    .unwrap();
    let model = PotentialModel::SwSilicon(p.clone());
    let total = model.total_energy(&c).unwrap();
    // the 1-2 separation r*sqrt(8/3) = 3.84 A exceeds the 3.77 A cutoff, so
    // only the two apex bonds contribute; the apex triplet itself is zero
    let d_jk = r * (2.0 * (1.0 - cos)).sqrt();
    assert!(d_jk > p.cutoff());
    let expected = 2.0 * p.two_body(r);
    assert!(rel_close(total, expected, 1e-10), "{total} vs {expected}");
}

#[test]
fn species_mismatch_is_rejected() {
    let c = Configuration::new(
        vec![[1.0, 1.0, 1.0]],
        vec![2],
        SimulationBox::cubic(10.0).unwrap(),
    )
    .unwrap();
    assert!(matches!(
        PotentialModel::BinaryLj(lj()).total_energy(&c),
        Err(crate::error::Error::UnknownSpecies(_))
    ));
}
