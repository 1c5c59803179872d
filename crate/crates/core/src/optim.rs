//! Classical position-space minimizers: gradient descent, Adam, and FIRE.
//!
//! All three walk atom positions downhill on the potential energy surface
//! using analytic forces. FIRE follows the semi-implicit Euler form: velocity
//! mixing and the uphill reset happen before the integration substep, with
//! the mixing direction taken from the force unit vector over the full N x d
//! velocity/force flattening.

use crate::error::{Error, Result};
use crate::potentials::{PotentialModel, System};
use crate::system::{Configuration, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Gd,
    Adam,
    Fire,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::Gd => "gd",
            Method::Adam => "adam",
            Method::Fire => "fire",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "gd" => Ok(Method::Gd),
            "adam" => Ok(Method::Adam),
            "fire" => Ok(Method::Fire),
            other => Err(Error::InvalidParameter(format!(
                "unknown minimizer `{other}` (expected gd|adam|fire)"
            ))),
        }
    }
}

/// Per-system default learning rate for plain gradient descent.
pub fn gd_default_lr(system: System) -> f64 {
    match system {
        System::Lj => 5e-4,
        System::Sw => 1e-3,
        System::Csh => 5e-4,
    }
}

/// One steepest-descent step along the force.
pub fn gd_step(positions: &mut [Vec3], forces: &[Vec3], lr: f64) {
    assert!(lr > 0.0, "learning rate must be positive");
    for (p, f) in positions.iter_mut().zip(forces) {
        for k in 0..3 {
            p[k] += lr * f[k];
        }
    }
}

/// Adam over atom positions, gradient = -forces.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Vec3>,
    v: Vec<Vec3>,
    step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n_atoms: usize, lr: f64) -> Self {
        AdamState {
            m: vec![[0.0; 3]; n_atoms],
            v: vec![[0.0; 3]; n_atoms],
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn default_for(system: System, n_atoms: usize) -> Self {
        let lr = match system {
            System::Lj => 0.05,
            System::Sw => 0.1,
            System::Csh => 1.0,
        };
        AdamState::new(n_atoms, lr)
    }

    /// Bias-corrected Adam update applied in place.
    pub fn step(&mut self, positions: &mut [Vec3], forces: &[Vec3]) {
        self.step += 1;
        let b1t = 1.0 - self.beta1.powi(self.step as i32);
        let b2t = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..positions.len() {
            for k in 0..3 {
                let g = -forces[i][k];
                self.m[i][k] = self.beta1 * self.m[i][k] + (1.0 - self.beta1) * g;
                self.v[i][k] = self.beta2 * self.v[i][k] + (1.0 - self.beta2) * g * g;
                let m_hat = self.m[i][k] / b1t;
                let v_hat = self.v[i][k] / b2t;
                positions[i][k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// FIRE hyperparameters (shared defaults; dt_start is per system).
#[derive(Debug, Clone, Copy)]
pub struct FireParams {
    pub dt_start: f64,
    pub dt_max: f64,
    pub n_min: usize,
    pub f_alpha: f64,
    pub f_dec: f64,
    pub f_inc: f64,
    pub alpha_start: f64,
}

impl FireParams {
    pub fn default_for(system: System) -> Self {
        let dt_start = match system {
            System::Lj => 0.01,
            System::Sw => 0.5,
            System::Csh => 5e-3,
        };
        FireParams {
            dt_start,
            dt_max: 0.4,
            n_min: 5,
            f_alpha: 0.99,
            f_dec: 0.5,
            f_inc: 1.1,
            alpha_start: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FireState {
    pub velocities: Vec<Vec3>,
    pub dt: f64,
    pub alpha_mix: f64,
    pub n_pos: usize,
    pub params: FireParams,
}

impl FireState {
    /// dt starts at min(dt_start, dt_max) so dt stays in (0, dt_max].
    pub fn new(n_atoms: usize, params: FireParams) -> Self {
        FireState {
            velocities: vec![[0.0; 3]; n_atoms],
            dt: params.dt_start.min(params.dt_max),
            alpha_mix: params.alpha_start,
            n_pos: 0,
            params,
        }
    }

    /// One FIRE step: power check and velocity mixing, then semi-implicit
    /// Euler (v += dt F; x += dt v) with unit mass.
    pub fn step(&mut self, positions: &mut [Vec3], forces: &[Vec3]) {
        let p = self.power(forces);
        if p > 0.0 {
            self.n_pos += 1;
            let vnorm = flat_norm(&self.velocities);
            let fnorm = flat_norm(forces);
            if fnorm > 0.0 {
                let a = self.alpha_mix;
                for i in 0..self.velocities.len() {
                    for k in 0..3 {
                        self.velocities[i][k] =
                            (1.0 - a) * self.velocities[i][k] + a * vnorm * forces[i][k] / fnorm;
                    }
                }
            }
            if self.n_pos > self.params.n_min {
                self.dt = (self.dt * self.params.f_inc).min(self.params.dt_max);
                self.alpha_mix *= self.params.f_alpha;
            }
        } else {
            self.n_pos = 0;
            for v in self.velocities.iter_mut() {
                *v = [0.0; 3];
            }
            self.dt *= self.params.f_dec;
            self.alpha_mix = self.params.alpha_start;
        }
        for i in 0..positions.len() {
            for k in 0..3 {
                self.velocities[i][k] += self.dt * forces[i][k];
                positions[i][k] += self.dt * self.velocities[i][k];
            }
        }
    }

    fn power(&self, forces: &[Vec3]) -> f64 {
        self.velocities
            .iter()
            .zip(forces)
            .map(|(v, f)| v[0] * f[0] + v[1] * f[1] + v[2] * f[2])
            .sum()
    }
}

fn flat_norm(rows: &[Vec3]) -> f64 {
    rows.iter()
        .map(|r| r[0] * r[0] + r[1] * r[1] + r[2] * r[2])
        .sum::<f64>()
        .sqrt()
}

/// Settings for [`minimize`]; `lr` is ignored by FIRE, `fire` by GD/Adam.
#[derive(Debug, Clone)]
pub struct MinimizeOptions {
    pub method: Method,
    pub max_steps: usize,
    pub lr: Option<f64>,
    pub fire: Option<FireParams>,
}

impl MinimizeOptions {
    pub fn new(method: Method, max_steps: usize) -> Self {
        MinimizeOptions {
            method,
            max_steps,
            lr: None,
            fire: None,
        }
    }
}

/// Run a minimizer for up to `max_steps` steps, recording the energy at
/// every step (trace[0] is the initial energy). The returned configuration
/// is wrapped. Aborts with a diagnostic if the energy turns non-finite.
pub fn minimize(
    config: &Configuration,
    model: &PotentialModel,
    options: &MinimizeOptions,
) -> Result<(Configuration, Vec<f64>)> {
    let system = model.system();
    let mut current = config.clone();
    let mut trace = Vec::with_capacity(options.max_steps + 1);
    let e0 = model.total_energy(&current)?;
    if !e0.is_finite() {
        return Err(Error::NonFiniteEnergy(
            "initial configuration has non-finite energy (overlapping atoms?)".into(),
        ));
    }
    trace.push(e0);

    let mut adam = match options.method {
        Method::Adam => Some(match options.lr {
            Some(lr) => AdamState::new(current.n_atoms(), lr),
            None => AdamState::default_for(system, current.n_atoms()),
        }),
        _ => None,
    };
    let mut fire = match options.method {
        Method::Fire => Some(FireState::new(
            current.n_atoms(),
            options.fire.unwrap_or_else(|| FireParams::default_for(system)),
        )),
        _ => None,
    };
    let gd_lr = options.lr.unwrap_or_else(|| gd_default_lr(system));

    for step in 0..options.max_steps {
        let forces = model.forces(&current)?;
        match options.method {
            Method::Gd => gd_step(&mut current.positions, &forces, gd_lr),
            Method::Adam => adam.as_mut().unwrap().step(&mut current.positions, &forces),
            Method::Fire => fire.as_mut().unwrap().step(&mut current.positions, &forces),
        }
        let e = model.total_energy(&current)?;
        if !e.is_finite() {
            return Err(Error::NonFiniteEnergy(format!(
                "{} diverged at step {} (overlapping atoms or oversized step)",
                options.method.tag(),
                step + 1
            )));
        }
        trace.push(e);
    }
    Ok((current.wrap(), trace))
}
