//! Configurations, periodic boxes, and minimum-image geometry.
//!
//! Positions are kept unwrapped during dynamics; [`Configuration::wrap`] is
//! applied at serialization and graph construction. All pair geometry goes
//! through the minimum-image convention, so energies and forces never depend
//! on which periodic replica a coordinate happens to sit in.

use crate::error::{Error, Result};

/// 3-vector helpers used throughout the crate.
pub type Vec3 = [f64; 3];

pub fn vadd(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn vsub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn vscale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn vdot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn vnorm(a: Vec3) -> f64 {
    vdot(a, a).sqrt()
}

/// Orthorhombic periodic box. Lengths are in the active system's length
/// units (reduced sigma for LJ, Angstrom for SW silicon, nm for C-S-H).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationBox {
    pub lengths: Vec3,
    pub periodic: [bool; 3],
}

impl SimulationBox {
    /// Fully periodic cubic box of side `l`.
    pub fn cubic(l: f64) -> Result<Self> {
        Self::new([l, l, l], [true, true, true])
    }

    pub fn new(lengths: Vec3, periodic: [bool; 3]) -> Result<Self> {
        if lengths.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "box lengths must be positive, got {lengths:?}"
            )));
        }
        Ok(SimulationBox { lengths, periodic })
    }

    pub fn volume(&self) -> f64 {
        self.lengths[0] * self.lengths[1] * self.lengths[2]
    }

    /// Map each component of `delta` into (-L/2, L/2] along periodic
    /// dimensions; non-periodic dimensions pass through unchanged.
    pub fn minimum_image(&self, delta: Vec3) -> Vec3 {
        let mut out = delta;
        for k in 0..3 {
            if self.periodic[k] {
                let l = self.lengths[k];
                let mut d = delta[k] - (delta[k] / l).round() * l;
                // round() maps the boundary to -L/2; fold it to +L/2.
                if d <= -0.5 * l {
                    d += l;
                }
                out[k] = d;
            }
        }
        out
    }

    /// Map a coordinate into [0, L) along periodic dimensions.
    pub fn wrap_point(&self, p: Vec3) -> Vec3 {
        let mut out = p;
        for k in 0..3 {
            if self.periodic[k] {
                let l = self.lengths[k];
                let mut x = p[k] - (p[k] / l).floor() * l;
                if x >= l {
                    x -= l;
                }
                if x < 0.0 {
                    x += l;
                }
                out[k] = x;
            }
        }
        out
    }
}

/// Free-function form of [`SimulationBox::minimum_image`].
pub fn minimum_image(delta: Vec3, b: &SimulationBox) -> Vec3 {
    b.minimum_image(delta)
}

/// Atom positions, species labels, and the periodic box.
///
/// Species are small integer identifiers, indices into the active model's
/// species set (for binary LJ: 0 = A, 1 = B).
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    pub positions: Vec<Vec3>,
    pub species: Vec<u8>,
    pub box_: SimulationBox,
}

impl Configuration {
    pub fn new(positions: Vec<Vec3>, species: Vec<u8>, box_: SimulationBox) -> Result<Self> {
        if positions.len() != species.len() {
            return Err(Error::InvalidParameter(format!(
                "positions ({}) and species ({}) length mismatch",
                positions.len(),
                species.len()
            )));
        }
        Ok(Configuration {
            positions,
            species,
            box_,
        })
    }

    pub fn n_atoms(&self) -> usize {
        self.positions.len()
    }

    /// Minimum-image displacement `x_i - x_j`.
    pub fn pair_displacement(&self, i: usize, j: usize) -> Result<Vec3> {
        let n = self.n_atoms();
        for &idx in &[i, j] {
            if idx >= n {
                return Err(Error::IndexOutOfRange {
                    index: idx,
                    n_atoms: n,
                });
            }
        }
        Ok(self
            .box_
            .minimum_image(vsub(self.positions[i], self.positions[j])))
    }

    /// Return a copy with all positions mapped into the primary cell.
    /// Pairwise minimum-image distances are unchanged.
    pub fn wrap(&self) -> Configuration {
        let positions = self
            .positions
            .iter()
            .map(|&p| self.box_.wrap_point(p))
            .collect();
        Configuration {
            positions,
            species: self.species.clone(),
            box_: self.box_,
        }
    }
}
