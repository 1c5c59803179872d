//! Binary Kob-Andersen Lennard-Jones mixture.
//!
//! V(r) = 4 eps [ (sigma/r)^12 - (sigma/r)^6 ], species-pair parameters
//! eps_AA = 1.0, eps_AB = 1.5, eps_BB = 0.5, sigma_AA = 1.0, sigma_AB = 0.8,
//! sigma_BB = 0.88, cutoff r_c = 2.5 sigma_pair. All quantities in reduced
//! units of the A-A pair.

use super::{for_each_pair, Truncation};
use crate::graph::NeighborGraph;
use crate::system::{vscale, Configuration, Vec3};

#[derive(Debug, Clone)]
pub struct LjParams {
    /// Symmetric 2x2 tables indexed by species pair.
    pub epsilon: [[f64; 2]; 2],
    pub sigma: [[f64; 2]; 2],
    /// r_c = cutoff_factor * sigma_pair.
    pub cutoff_factor: f64,
    pub truncation: Truncation,
}

impl Default for LjParams {
    fn default() -> Self {
        LjParams {
            epsilon: [[1.0, 1.5], [1.5, 0.5]],
            sigma: [[1.0, 0.8], [0.8, 0.88]],
            cutoff_factor: 2.5,
            truncation: Truncation::Shift,
        }
    }
}

/// Unshifted LJ pair energy.
pub fn lj_pair_energy(r: f64, eps: f64, sigma: f64) -> f64 {
    assert!(r > 0.0, "lj_pair_energy requires r > 0, got {r}");
    let sr6 = (sigma / r).powi(6);
    4.0 * eps * (sr6 * sr6 - sr6)
}

/// dV/dr of the unshifted LJ pair energy.
fn lj_pair_derivative(r: f64, eps: f64, sigma: f64) -> f64 {
    let sr6 = (sigma / r).powi(6);
    -24.0 * eps * (2.0 * sr6 * sr6 - sr6) / r
}

impl LjParams {
    fn eps(&self, si: u8, sj: u8) -> f64 {
        self.epsilon[si as usize][sj as usize]
    }

    fn sigma(&self, si: u8, sj: u8) -> f64 {
        self.sigma[si as usize][sj as usize]
    }

    fn cutoff(&self, si: u8, sj: u8) -> f64 {
        self.cutoff_factor * self.sigma(si, sj)
    }

    pub fn max_cutoff(&self) -> f64 {
        let mut rc: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                rc = rc.max(self.cutoff_factor * self.sigma[i][j]);
            }
        }
        rc
    }

    pub fn equilibrium_length(&self, si: u8, sj: u8) -> f64 {
        2f64.powf(1.0 / 6.0) * self.sigma(si, sj)
    }

    /// Truncated pair energy for one species pair; zero at or beyond r_c.
    /// Exactly overlapping atoms yield +infinity, which downstream rollout
    /// code treats as a truncation signal.
    pub fn pair_energy(&self, r: f64, si: u8, sj: u8) -> f64 {
        let rc = self.cutoff(si, sj);
        if r >= rc {
            return 0.0;
        }
        if r <= 0.0 {
            return f64::INFINITY;
        }
        let (eps, sig) = (self.eps(si, sj), self.sigma(si, sj));
        match self.truncation {
            Truncation::Shift => lj_pair_energy(r, eps, sig) - lj_pair_energy(rc, eps, sig),
            Truncation::Plain => lj_pair_energy(r, eps, sig),
        }
    }

    pub fn total_energy(&self, config: &Configuration) -> f64 {
        let mut total = 0.0;
        for_each_pair(config, |i, j, _d, r| {
            total += self.pair_energy(r, config.species[i], config.species[j]);
        });
        total
    }

    pub fn per_atom_energies(&self, config: &Configuration, graph: &NeighborGraph) -> Vec<f64> {
        let mut u = vec![0.0; config.n_atoms()];
        // Directed edges appear both ways, so each unordered pair is visited
        // twice; halve once more to split the pair term between endpoints.
        for (&s, &r_idx) in graph.senders.iter().zip(&graph.receivers) {
            let d = config.pair_displacement(r_idx, s).expect("edge index in range");
            let r = crate::system::vnorm(d);
            u[r_idx] += 0.5 * self.pair_energy(r, config.species[r_idx], config.species[s]);
        }
        u
    }

    pub fn forces(&self, config: &Configuration) -> Vec<Vec3> {
        let mut forces = vec![[0.0; 3]; config.n_atoms()];
        for_each_pair(config, |i, j, d, r| {
            let (si, sj) = (config.species[i], config.species[j]);
            if r >= self.cutoff(si, sj) {
                return;
            }
            // F_i = -dV/dr * (x_i - x_j)/r; the shift does not change dV/dr.
            let fscale = -lj_pair_derivative(r, self.eps(si, sj), self.sigma(si, sj)) / r;
            let f = vscale(d, fscale);
            for k in 0..3 {
                forces[i][k] += f[k];
                forces[j][k] -= f[k];
            }
        });
        forces
    }
}
