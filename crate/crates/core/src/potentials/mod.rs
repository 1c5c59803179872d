//! Empirical energy models: binary Kob-Andersen Lennard-Jones,
//! Stillinger-Weber silicon, and a coarse-grained C-S-H gel.
//!
//! Each model exposes total energy, an additive per-atom energy partition,
//! analytic forces, and equilibrium bond lengths. Pair terms are split
//! half/half between the two endpoints; the SW three-body term is assigned
//! wholly to the apex atom of the angle. Forces are hand-derived, not
//! autodiff-generated, so the autodiff module can be validated against them.

mod csh;
mod lj;
mod sw;

pub use csh::{csh_pair_energy, CshParams, CSH_EPSILON_KCAL_MOL};
pub use lj::{lj_pair_energy, LjParams};
pub use sw::SwParams;

use crate::error::{Error, Result};
use crate::graph::NeighborGraph;
use crate::system::{vnorm, Configuration, Vec3};

/// Which of the three systems a configuration belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum System {
    Lj,
    Sw,
    Csh,
}

impl System {
    pub fn tag(&self) -> &'static str {
        match self {
            System::Lj => "lj",
            System::Sw => "sw",
            System::Csh => "csh",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "lj" => Ok(System::Lj),
            "sw" => Ok(System::Sw),
            "csh" => Ok(System::Csh),
            other => Err(Error::MalformedFile(format!("unknown system `{other}`"))),
        }
    }
}

/// How a pair potential is cut off at its interaction radius.
///
/// `Shift` subtracts V(r_c) so the energy is continuous at the cutoff
/// (the force discontinuity there is accepted). `Plain` truncates without
/// shifting, which keeps the full well depth but makes the energy jump when
/// an edge crosses the cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Truncation {
    #[default]
    Shift,
    Plain,
}

/// Tagged union over the three parameterized models.
#[derive(Debug, Clone)]
pub enum PotentialModel {
    BinaryLj(LjParams),
    SwSilicon(SwParams),
    Csh(CshParams),
}

impl PotentialModel {
    pub fn system(&self) -> System {
        match self {
            PotentialModel::BinaryLj(_) => System::Lj,
            PotentialModel::SwSilicon(_) => System::Sw,
            PotentialModel::Csh(_) => System::Csh,
        }
    }

    /// Valid species names, indexed by the species id used in configurations.
    pub fn species_set(&self) -> &'static [&'static str] {
        match self {
            PotentialModel::BinaryLj(_) => &["A", "B"],
            PotentialModel::SwSilicon(_) => &["Si"],
            PotentialModel::Csh(_) => &["CSH"],
        }
    }

    pub fn n_species(&self) -> usize {
        self.species_set().len()
    }

    fn check_species(&self, config: &Configuration) -> Result<()> {
        let n = self.n_species() as u8;
        for &s in &config.species {
            if s >= n {
                return Err(Error::UnknownSpecies(format!("species id {s}")));
            }
        }
        Ok(())
    }

    /// Largest interaction cutoff over all species pairs. The default
    /// neighbor-graph threshold.
    pub fn max_cutoff(&self) -> f64 {
        match self {
            PotentialModel::BinaryLj(p) => p.max_cutoff(),
            PotentialModel::SwSilicon(p) => p.cutoff(),
            PotentialModel::Csh(p) => p.cutoff(),
        }
    }

    /// Distance at which an isolated pair of the given species sits at its
    /// energy minimum.
    pub fn equilibrium_length(&self, species_i: u8, species_j: u8) -> f64 {
        match self {
            PotentialModel::BinaryLj(p) => p.equilibrium_length(species_i, species_j),
            PotentialModel::SwSilicon(p) => p.equilibrium_length(),
            PotentialModel::Csh(p) => p.equilibrium_length(),
        }
    }

    /// Total potential energy of the configuration.
    pub fn total_energy(&self, config: &Configuration) -> Result<f64> {
        self.check_species(config)?;
        Ok(match self {
            PotentialModel::BinaryLj(p) => p.total_energy(config),
            PotentialModel::SwSilicon(p) => p.total_energy(config),
            PotentialModel::Csh(p) => p.total_energy(config),
        })
    }

    /// Additive per-atom energy partition over the edges of `graph`.
    /// Sums to `total_energy` (the graph must be built at this model's
    /// cutoff or wider).
    pub fn per_atom_energies(
        &self,
        config: &Configuration,
        graph: &NeighborGraph,
    ) -> Result<Vec<f64>> {
        self.check_species(config)?;
        Ok(match self {
            PotentialModel::BinaryLj(p) => p.per_atom_energies(config, graph),
            PotentialModel::SwSilicon(p) => p.per_atom_energies(config, graph),
            PotentialModel::Csh(p) => p.per_atom_energies(config, graph),
        })
    }

    /// Analytic forces, -dU/dx. Net force is zero by translation invariance.
    pub fn forces(&self, config: &Configuration) -> Result<Vec<Vec3>> {
        self.check_species(config)?;
        Ok(match self {
            PotentialModel::BinaryLj(p) => p.forces(config),
            PotentialModel::SwSilicon(p) => p.forces(config),
            PotentialModel::Csh(p) => p.forces(config),
        })
    }
}

/// Truncate `pair_fn` at `r_c`: shift by -pair_fn(r_c) inside the cutoff,
/// zero outside.
pub fn truncated_pair(pair_fn: impl Fn(f64) -> f64, r: f64, r_c: f64) -> f64 {
    if r < r_c {
        pair_fn(r) - pair_fn(r_c)
    } else {
        0.0
    }
}

/// Iterate unordered minimum-image pairs (i < j), yielding the displacement
/// x_i - x_j and its norm. O(N^2); fine at the atom counts this crate targets.
pub(crate) fn for_each_pair(config: &Configuration, mut f: impl FnMut(usize, usize, Vec3, f64)) {
    let n = config.n_atoms();
    for i in 0..n {
        for j in (i + 1)..n {
            let d = config
                .box_
                .minimum_image(crate::system::vsub(config.positions[i], config.positions[j]));
            f(i, j, d, vnorm(d));
        }
    }
}

#[cfg(test)]
mod tests;
