//! Stillinger-Weber silicon.
//!
//! Two-body term: A eps [B (sigma/r)^p - (sigma/r)^q] exp(sigma/(r - a sigma))
//! for r < a sigma, identically zero beyond (the exponential vanishes smoothly
//! at the cutoff, so no shift is applied). Three-body term over triplets with
//! apex i: lambda eps (cos theta_jik - cos theta0)^2 exp(gamma sigma/(r_ij - a
//! sigma)) exp(gamma sigma/(r_ik - a sigma)).

use crate::graph::NeighborGraph;
use crate::system::{vdot, vnorm, vsub, Configuration, Vec3};

/// SW parameter set. Constructed via [`SwParams::new`] so the equilibrium
/// bond length (located numerically) stays consistent with the parameters.
#[derive(Debug, Clone)]
pub struct SwParams {
    epsilon: f64,
    sigma: f64,
    big_a: f64,
    big_b: f64,
    p: f64,
    q: f64,
    a: f64,
    lambda: f64,
    gamma: f64,
    cos_theta0: f64,
    r_equi: f64,
}

impl Default for SwParams {
    fn default() -> Self {
        SwParams::new(
            2.1683, // eV
            2.0951, // Angstrom
            7.0495, 0.6022, 4.0, 0.0, 1.80, 21.0, 1.20, -1.0 / 3.0,
        )
    }
}

#[allow(clippy::too_many_arguments)]
impl SwParams {
    pub fn new(
        epsilon: f64,
        sigma: f64,
        big_a: f64,
        big_b: f64,
        p: f64,
        q: f64,
        a: f64,
        lambda: f64,
        gamma: f64,
        cos_theta0: f64,
    ) -> Self {
        let mut params = SwParams {
            epsilon,
            sigma,
            big_a,
            big_b,
            p,
            q,
            a,
            lambda,
            gamma,
            cos_theta0,
            r_equi: 0.0,
        };
        params.r_equi = params.locate_two_body_minimum();
        params
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn cos_theta0(&self) -> f64 {
        self.cos_theta0
    }

    /// Interaction cutoff a * sigma, shared by both terms.
    pub fn cutoff(&self) -> f64 {
        self.a * self.sigma
    }

    /// Numerically located minimum of the two-body term (cached).
    pub fn equilibrium_length(&self) -> f64 {
        self.r_equi
    }

    /// Golden-section search after a coarse bracketing scan.
    fn locate_two_body_minimum(&self) -> f64 {
        let lo = 0.3 * self.sigma;
        let hi = self.cutoff();
        let n = 4000usize;
        let mut best_k = 0usize;
        let mut best_v = f64::INFINITY;
        for k in 0..=n {
            let r = lo + (hi - lo) * k as f64 / n as f64;
            let v = self.two_body(r);
            if v < best_v {
                best_v = v;
                best_k = k;
            }
        }
        let step = (hi - lo) / n as f64;
        let mut a = lo + step * (best_k.saturating_sub(1)) as f64;
        let mut b = (lo + step * (best_k + 1) as f64).min(hi);
        let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
        while b - a > 1e-13 {
            let c = b - inv_phi * (b - a);
            let d = a + inv_phi * (b - a);
            if self.two_body(c) < self.two_body(d) {
                b = d;
            } else {
                a = c;
            }
        }
        0.5 * (a + b)
    }

    /// Two-body energy; exactly zero at and beyond the cutoff. Overlapping
    /// atoms yield +infinity rather than panicking.
    pub fn two_body(&self, r: f64) -> f64 {
        let rc = self.cutoff();
        if r >= rc {
            return 0.0;
        }
        if r <= 0.0 {
            return f64::INFINITY;
        }
        let sr = self.sigma / r;
        let radial = self.big_b * sr.powf(self.p) - sr.powf(self.q);
        self.big_a * self.epsilon * radial * (self.sigma / (r - rc)).exp()
    }

    /// d/dr of the two-body term.
    fn two_body_derivative(&self, r: f64) -> f64 {
        let rc = self.cutoff();
        if r >= rc {
            return 0.0;
        }
        let sr = self.sigma / r;
        let radial = self.big_b * sr.powf(self.p) - sr.powf(self.q);
        let radial_d = (-self.p * self.big_b * sr.powf(self.p) + self.q * sr.powf(self.q)) / r;
        let expo = (self.sigma / (r - rc)).exp();
        let expo_d = expo * (-self.sigma / ((r - rc) * (r - rc)));
        self.big_a * self.epsilon * (radial_d * expo + radial * expo_d)
    }

    /// Radial decay factor of the three-body term.
    fn h_radial(&self, r: f64) -> f64 {
        (self.gamma * self.sigma / (r - self.cutoff())).exp()
    }

    fn h_radial_derivative(&self, r: f64) -> f64 {
        let rc = self.cutoff();
        self.h_radial(r) * (-self.gamma * self.sigma / ((r - rc) * (r - rc)))
    }

    /// Three-body energy for a triplet with apex between bonds of lengths
    /// r_ij, r_ik and angle cosine cos_theta_jik. Zero if either bond
    /// reaches the cutoff.
    pub fn three_body(&self, r_ij: f64, r_ik: f64, cos_theta_jik: f64) -> f64 {
        let rc = self.cutoff();
        if r_ij >= rc || r_ik >= rc {
            return 0.0;
        }
        let dc = cos_theta_jik - self.cos_theta0;
        self.lambda * self.epsilon * dc * dc * self.h_radial(r_ij) * self.h_radial(r_ik)
    }

    pub fn total_energy(&self, config: &Configuration) -> f64 {
        let (pair_sum, triplet_sum) = self.accumulate(config, None);
        pair_sum + triplet_sum
    }

    pub fn per_atom_energies(&self, config: &Configuration, graph: &NeighborGraph) -> Vec<f64> {
        let n = config.n_atoms();
        let mut u = vec![0.0; n];
        for v in 0..n {
            let nbrs = graph.neighbors_of(v);
            // Half of every two-body bond touching v.
            for &j in nbrs {
                let r = vnorm(config.pair_displacement(v, j).expect("edge index"));
                u[v] += 0.5 * self.two_body(r);
            }
            // Whole three-body term for every angle with apex v.
            for (ai, &j) in nbrs.iter().enumerate() {
                let d_vj = config.pair_displacement(j, v).expect("edge index");
                let r_vj = vnorm(d_vj);
                if r_vj >= self.cutoff() {
                    continue;
                }
                for &k in &nbrs[ai + 1..] {
                    let d_vk = config.pair_displacement(k, v).expect("edge index");
                    let r_vk = vnorm(d_vk);
                    if r_vk >= self.cutoff() {
                        continue;
                    }
                    let cos_theta = vdot(d_vj, d_vk) / (r_vj * r_vk);
                    u[v] += self.three_body(r_vj, r_vk, cos_theta);
                }
            }
        }
        u
    }

    pub fn forces(&self, config: &Configuration) -> Vec<Vec3> {
        let n = config.n_atoms();
        let mut forces = vec![[0.0; 3]; n];
        self.accumulate(config, Some(&mut forces));
        forces
    }

    /// Shared energy/force walk: two-body over unordered pairs, three-body
    /// over apex-centered neighbor pairs. When `forces` is given, analytic
    /// gradients are accumulated into it.
    fn accumulate(&self, config: &Configuration, mut forces: Option<&mut Vec<Vec3>>) -> (f64, f64) {
        let n = config.n_atoms();
        let rc = self.cutoff();

        // Neighbor lists inside the cutoff; displacement d[i][m] = x_j - x_i.
        let mut nbrs: Vec<Vec<(usize, Vec3, f64)>> = vec![Vec::new(); n];
        let mut pair_sum = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let d = config
                    .box_
                    .minimum_image(vsub(config.positions[j], config.positions[i]));
                let r = vnorm(d);
                if r >= rc {
                    continue;
                }
                nbrs[i].push((j, d, r));
                nbrs[j].push((i, [-d[0], -d[1], -d[2]], r));
                pair_sum += self.two_body(r);
                if let Some(f) = forces.as_deref_mut() {
                    // U = phi2(|x_j - x_i|); dU/dx_j = phi2'(r) d/r.
                    let g = self.two_body_derivative(r) / r;
                    for m in 0..3 {
                        f[j][m] -= g * d[m];
                        f[i][m] += g * d[m];
                    }
                }
            }
        }

        let mut triplet_sum = 0.0;
        for i in 0..n {
            for aj in 0..nbrs[i].len() {
                let (j, d_ij, r_ij) = nbrs[i][aj];
                for ak in (aj + 1)..nbrs[i].len() {
                    let (k, d_ik, r_ik) = nbrs[i][ak];
                    let inv_rr = 1.0 / (r_ij * r_ik);
                    let c = vdot(d_ij, d_ik) * inv_rr;
                    let dc = c - self.cos_theta0;
                    let g_ij = self.h_radial(r_ij);
                    let g_ik = self.h_radial(r_ik);
                    let pref = self.lambda * self.epsilon;
                    triplet_sum += pref * dc * dc * g_ij * g_ik;

                    if let Some(f) = forces.as_deref_mut() {
                        let gp_ij = self.h_radial_derivative(r_ij);
                        let gp_ik = self.h_radial_derivative(r_ik);
                        // dU/dx_j and dU/dx_k; apex gets minus their sum.
                        for m in 0..3 {
                            let dcos_dj = d_ik[m] * inv_rr - c * d_ij[m] / (r_ij * r_ij);
                            let dcos_dk = d_ij[m] * inv_rr - c * d_ik[m] / (r_ik * r_ik);
                            let du_dj = pref
                                * (2.0 * dc * dcos_dj * g_ij * g_ik
                                    + dc * dc * gp_ij * (d_ij[m] / r_ij) * g_ik);
                            let du_dk = pref
                                * (2.0 * dc * dcos_dk * g_ij * g_ik
                                    + dc * dc * g_ij * gp_ik * (d_ik[m] / r_ik));
                            f[j][m] -= du_dj;
                            f[k][m] -= du_dk;
                            f[i][m] += du_dj + du_dk;
                        }
                    }
                }
            }
        }
        (pair_sum, triplet_sum)
    }
}
