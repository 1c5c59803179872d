//! Experiment configuration: key = value files with [section] headers,
//! schema-validated, with per-system defaults. Unknown keys are rejected;
//! command-line `--set section.key=value` overrides file values.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use atomopt_core::optim::{FireParams, Method};
use atomopt_core::policy::{Aggregation, PolicyConfig};
use atomopt_core::potentials::{CshParams, LjParams, PotentialModel, SwParams, System, Truncation};
use atomopt_core::rl::{AdaptConfig, BaselineKind, TrainConfig};
use atomopt_core::sampler::{DatasetSpec, ThermostatSpec};
use atomopt_core::system::SimulationBox;

/// One schema entry: defaults are per system (lj, sw, csh).
struct KeySpec {
    key: &'static str,
    defaults: [&'static str; 3],
    doc: &'static str,
}

/// Three equal defaults.
const fn same(v: &'static str) -> [&'static str; 3] {
    [v, v, v]
}

fn schema() -> Vec<KeySpec> {
    vec![
        KeySpec { key: "system.kind", defaults: same("lj"), doc: "active system: lj | sw | csh" },
        KeySpec { key: "system.n_atoms", defaults: ["100", "64", "200"], doc: "atom count for generated structures" },
        KeySpec { key: "system.density", defaults: ["1.2", "0.04996", "0.0076"], doc: "number density (reduced, 1/A^3, 1/nm^3); box side derived as (N/density)^(1/3)" },
        KeySpec { key: "system.box", defaults: same("auto"), doc: "explicit box lengths \"Lx Ly Lz\" (overrides density)" },
        KeySpec { key: "system.mix_a", defaults: same("0.8"), doc: "LJ only: fraction of A species" },
        KeySpec { key: "potential.truncation", defaults: same("shift"), doc: "pair cutoff handling: shift | plain" },
        KeySpec { key: "potential.lj_eps_aa", defaults: same("1.0"), doc: "LJ well depth, A-A pair" },
        KeySpec { key: "potential.lj_eps_ab", defaults: same("1.5"), doc: "LJ well depth, A-B pair" },
        KeySpec { key: "potential.lj_eps_bb", defaults: same("0.5"), doc: "LJ well depth, B-B pair" },
        KeySpec { key: "potential.lj_sigma_aa", defaults: same("1.0"), doc: "LJ diameter, A-A pair" },
        KeySpec { key: "potential.lj_sigma_ab", defaults: same("0.8"), doc: "LJ diameter, A-B pair" },
        KeySpec { key: "potential.lj_sigma_bb", defaults: same("0.88"), doc: "LJ diameter, B-B pair" },
        KeySpec { key: "potential.lj_cutoff_factor", defaults: same("2.5"), doc: "LJ cutoff in units of sigma_pair" },
        KeySpec { key: "potential.sw_epsilon", defaults: same("2.1683"), doc: "SW energy scale (eV)" },
        KeySpec { key: "potential.sw_sigma", defaults: same("2.0951"), doc: "SW length scale (A)" },
        KeySpec { key: "potential.sw_big_a", defaults: same("7.0495"), doc: "SW two-body prefactor A" },
        KeySpec { key: "potential.sw_big_b", defaults: same("0.6022"), doc: "SW two-body coefficient B" },
        KeySpec { key: "potential.sw_p", defaults: same("4"), doc: "SW repulsive exponent p" },
        KeySpec { key: "potential.sw_q", defaults: same("0"), doc: "SW attractive exponent q" },
        KeySpec { key: "potential.sw_a_cut", defaults: same("1.8"), doc: "SW cutoff factor a (r_c = a sigma)" },
        KeySpec { key: "potential.sw_lambda", defaults: same("21.0"), doc: "SW three-body strength lambda" },
        KeySpec { key: "potential.sw_gamma", defaults: same("1.2"), doc: "SW three-body decay gamma" },
        KeySpec { key: "potential.sw_cos_theta0", defaults: same("-0.3333333333333333"), doc: "SW reference angle cosine" },
        KeySpec { key: "potential.csh_epsilon", defaults: same("2668.9"), doc: "C-S-H well depth (kcal/mol), from A0 sigma^3" },
        KeySpec { key: "potential.csh_sigma", defaults: same("5.0"), doc: "C-S-H grain diameter (nm)" },
        KeySpec { key: "potential.csh_alpha", defaults: same("14"), doc: "C-S-H well-narrowness exponent" },
        KeySpec { key: "potential.csh_cutoff_factor", defaults: same("2.5"), doc: "C-S-H cutoff in units of sigma" },
        KeySpec { key: "sampler.temperature", defaults: ["2.0", "3500", "1000"], doc: "thermostat target (reduced T or Kelvin)" },
        KeySpec { key: "sampler.friction", defaults: ["1.0", "2.0", "1.0"], doc: "Langevin friction (1/time)" },
        KeySpec { key: "sampler.dt", defaults: ["0.003", "0.001", "0.05"], doc: "integration timestep" },
        KeySpec { key: "sampler.mass", defaults: ["1.0", "2.910865e-3", "2.45e4"], doc: "particle mass (energy time^2 / length^2 units)" },
        KeySpec { key: "sampler.kb", defaults: ["1.0", "8.617333262e-5", "1.9872041e-3"], doc: "Boltzmann constant in system units" },
        KeySpec { key: "sampler.equilibration_steps", defaults: same("10000"), doc: "NVT steps before sampling starts" },
        KeySpec { key: "sampler.gap_steps", defaults: same("1000"), doc: "NVT steps between samples" },
        KeySpec { key: "sampler.n_structures", defaults: same("100"), doc: "structures per generated dataset" },
        KeySpec { key: "sampler.min_dist", defaults: ["0.8", "2.0", "4.0"], doc: "packing minimum pair distance" },
        KeySpec { key: "graph.delta", defaults: same("auto"), doc: "neighbor cutoff; auto = potential cutoff" },
        KeySpec { key: "policy.width", defaults: same("48"), doc: "node/edge embedding size" },
        KeySpec { key: "policy.message_passing_steps", defaults: same("1"), doc: "message passing rounds L" },
        KeySpec { key: "policy.aggregation", defaults: same("mean"), doc: "edge-to-node aggregation: mean | sum" },
        KeySpec { key: "policy.alpha", defaults: same("1e-5"), doc: "Gaussian action covariance factor" },
        KeySpec { key: "policy.displacement_scale", defaults: ["2.0", "2.0", "5.0"], doc: "predicted displacement scaling factor" },
        KeySpec { key: "policy.leaky_slope", defaults: same("0.01"), doc: "leaky-ReLU negative slope" },
        KeySpec { key: "policy.bn_decay", defaults: same("0.9"), doc: "batch-norm EMA decay rate" },
        KeySpec { key: "train.epochs", defaults: same("200"), doc: "training epochs" },
        KeySpec { key: "train.trajectory_length", defaults: same("15"), doc: "rollout length T during training" },
        KeySpec { key: "train.gamma", defaults: same("0.9"), doc: "reward discount factor" },
        KeySpec { key: "train.batch_size", defaults: same("4"), doc: "structures per batch" },
        KeySpec { key: "train.grad_accum", defaults: same("2"), doc: "gradient accumulation steps" },
        KeySpec { key: "train.learning_rate", defaults: same("0.005"), doc: "Adam learning rate for policy weights" },
        KeySpec { key: "train.grad_clip", defaults: same("0.1"), doc: "global gradient-norm clip" },
        KeySpec { key: "train.val_every", defaults: same("20"), doc: "epochs between validations" },
        KeySpec { key: "train.val_trajectory_length", defaults: same("20"), doc: "rollout length during validation" },
        KeySpec { key: "train.train_fraction", defaults: same("0.75"), doc: "train share of the dataset split" },
        KeySpec { key: "train.baseline", defaults: same("discounted"), doc: "FIRE baseline kind: discounted | plain | none" },
        KeySpec { key: "train.sampled_validation", defaults: same("false"), doc: "sample actions during validation instead of a = mu" },
        KeySpec { key: "adapt.epochs", defaults: same("1000"), doc: "adaptation epochs per seed" },
        KeySpec { key: "adapt.seeds", defaults: same("10"), doc: "random seeds per adaptation target" },
        KeySpec { key: "adapt.trajectory_length", defaults: same("15"), doc: "rollout length during adaptation" },
        KeySpec { key: "gd.learning_rate", defaults: ["5e-4", "1e-3", "5e-4"], doc: "gradient-descent learning rate" },
        KeySpec { key: "adam.learning_rate", defaults: ["0.05", "0.1", "1.0"], doc: "Adam (positions) learning rate" },
        KeySpec { key: "adam.beta1", defaults: same("0.9"), doc: "Adam beta1" },
        KeySpec { key: "adam.beta2", defaults: same("0.999"), doc: "Adam beta2" },
        KeySpec { key: "adam.eps", defaults: same("1e-8"), doc: "Adam epsilon" },
        KeySpec { key: "fire.dt_start", defaults: ["0.01", "0.5", "5e-3"], doc: "FIRE initial timestep" },
        KeySpec { key: "fire.dt_max", defaults: same("0.4"), doc: "FIRE maximum timestep" },
        KeySpec { key: "fire.n_min", defaults: same("5"), doc: "FIRE latency before acceleration" },
        KeySpec { key: "fire.f_alpha", defaults: same("0.99"), doc: "FIRE mixing decay" },
        KeySpec { key: "fire.f_dec", defaults: same("0.5"), doc: "FIRE timestep decrease factor" },
        KeySpec { key: "fire.f_inc", defaults: same("1.1"), doc: "FIRE timestep increase factor" },
        KeySpec { key: "fire.alpha_start", defaults: same("0.1"), doc: "FIRE initial mixing parameter" },
        KeySpec { key: "minimize.method", defaults: same("fire"), doc: "minimizer: gd | adam | fire" },
        KeySpec { key: "minimize.max_steps", defaults: ["1000", "1000", "2000"], doc: "minimization steps" },
        KeySpec { key: "benchmark.n_structures", defaults: same("10"), doc: "held-out structures for the benchmark table" },
        KeySpec { key: "inductivity.sizes", defaults: same("25 50 100 250 500 1000"), doc: "atom counts for the inductivity sweep" },
    ]
}

/// Fully resolved configuration (defaults overlaid with file and CLI
/// overrides).
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    values: BTreeMap<String, String>,
    pub system: System,
}

impl ExperimentConfig {
    /// Resolve from an optional file plus `--set` overrides.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut file_values: BTreeMap<String, String> = BTreeMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read config file {}", path.display()))?;
            file_values = parse_ini(&text)?;
        }
        for (k, v) in overrides {
            file_values.insert(k.clone(), v.clone());
        }

        let known: Vec<&'static str> = schema().iter().map(|s| s.key).collect();
        for key in file_values.keys() {
            if !known.contains(&key.as_str()) {
                bail!("unknown config key `{key}`");
            }
        }

        let kind = file_values
            .get("system.kind")
            .map(String::as_str)
            .unwrap_or("lj");
        let system = System::from_tag(kind).map_err(|_| {
            anyhow!("system.kind must be lj, sw or csh (got `{kind}`)")
        })?;
        let sys_idx = match system {
            System::Lj => 0,
            System::Sw => 1,
            System::Csh => 2,
        };

        let mut values = BTreeMap::new();
        for spec in schema() {
            let v = file_values
                .get(spec.key)
                .cloned()
                .unwrap_or_else(|| spec.defaults[sys_idx].to_string());
            values.insert(spec.key.to_string(), v);
        }
        let config = ExperimentConfig { values, system };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        // typed parses happen in the accessors; walk them all once
        self.model()?;
        let t = self.thermostat()?;
        if t.temperature <= 0.0 || t.dt <= 0.0 || t.mass <= 0.0 || t.kb <= 0.0 {
            bail!("sampler temperature, dt, mass and kb must be positive");
        }
        if t.friction < 0.0 {
            bail!("sampler.friction must be non-negative");
        }
        self.dataset_spec()?;
        self.policy_config()?;
        self.train_config()?;
        self.adapt_config()?;
        self.fire_params()?;
        self.minimize_method()?;
        self.graph_delta()?;
        self.n_atoms()?;
        self.box_for(self.n_atoms()?)?;
        self.usize_key("benchmark.n_structures")?;
        self.inductivity_sizes()?;
        self.f64_key("gd.learning_rate")?;
        self.f64_key("adam.learning_rate")?;
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values
            .get(key)
            .unwrap_or_else(|| panic!("unknown config key `{key}`"))
    }

    fn f64_key(&self, key: &str) -> Result<f64> {
        self.get(key)
            .parse()
            .with_context(|| format!("config key {key} must be a number, got `{}`", self.get(key)))
    }

    fn usize_key(&self, key: &str) -> Result<usize> {
        self.get(key)
            .parse()
            .with_context(|| format!("config key {key} must be a count, got `{}`", self.get(key)))
    }

    fn bool_key(&self, key: &str) -> Result<bool> {
        match self.get(key) {
            "true" => Ok(true),
            "false" => Ok(false),
            other => bail!("config key {key} must be true or false, got `{other}`"),
        }
    }

    pub fn n_atoms(&self) -> Result<usize> {
        self.usize_key("system.n_atoms")
    }

    pub fn truncation(&self) -> Result<Truncation> {
        match self.get("potential.truncation") {
            "shift" => Ok(Truncation::Shift),
            "plain" => Ok(Truncation::Plain),
            other => bail!("potential.truncation must be shift or plain, got `{other}`"),
        }
    }

    pub fn model(&self) -> Result<PotentialModel> {
        let truncation = self.truncation()?;
        Ok(match self.system {
            System::Lj => {
                let eps_aa = self.f64_key("potential.lj_eps_aa")?;
                let eps_ab = self.f64_key("potential.lj_eps_ab")?;
                let eps_bb = self.f64_key("potential.lj_eps_bb")?;
                let sig_aa = self.f64_key("potential.lj_sigma_aa")?;
                let sig_ab = self.f64_key("potential.lj_sigma_ab")?;
                let sig_bb = self.f64_key("potential.lj_sigma_bb")?;
                PotentialModel::BinaryLj(LjParams {
                    epsilon: [[eps_aa, eps_ab], [eps_ab, eps_bb]],
                    sigma: [[sig_aa, sig_ab], [sig_ab, sig_bb]],
                    cutoff_factor: self.f64_key("potential.lj_cutoff_factor")?,
                    truncation,
                })
            }
            System::Sw => PotentialModel::SwSilicon(SwParams::new(
                self.f64_key("potential.sw_epsilon")?,
                self.f64_key("potential.sw_sigma")?,
                self.f64_key("potential.sw_big_a")?,
                self.f64_key("potential.sw_big_b")?,
                self.f64_key("potential.sw_p")?,
                self.f64_key("potential.sw_q")?,
                self.f64_key("potential.sw_a_cut")?,
                self.f64_key("potential.sw_lambda")?,
                self.f64_key("potential.sw_gamma")?,
                self.f64_key("potential.sw_cos_theta0")?,
            )),
            System::Csh => PotentialModel::Csh(CshParams {
                epsilon: self.f64_key("potential.csh_epsilon")?,
                sigma: self.f64_key("potential.csh_sigma")?,
                alpha: self.usize_key("potential.csh_alpha")? as u32,
                cutoff_factor: self.f64_key("potential.csh_cutoff_factor")?,
                truncation,
            }),
        })
    }

    pub fn species_mix(&self) -> Result<Vec<f64>> {
        Ok(match self.system {
            System::Lj => {
                let a = self.f64_key("system.mix_a")?;
                if !(0.0..=1.0).contains(&a) {
                    bail!("system.mix_a must be in [0, 1]");
                }
                vec![a, 1.0 - a]
            }
            _ => vec![1.0],
        })
    }

    pub fn box_for(&self, n_atoms: usize) -> Result<SimulationBox> {
        let spec = self.get("system.box");
        if spec != "auto" {
            let parts: Vec<f64> = spec
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| anyhow!("bad box length `{t}`")))
                .collect::<Result<_>>()?;
            if parts.len() != 3 {
                bail!("system.box needs 3 lengths");
            }
            return SimulationBox::new([parts[0], parts[1], parts[2]], [true; 3])
                .map_err(|e| anyhow!(e.to_string()));
        }
        let density = self.f64_key("system.density")?;
        if density <= 0.0 {
            bail!("system.density must be positive");
        }
        let l = (n_atoms as f64 / density).cbrt();
        SimulationBox::cubic(l).map_err(|e| anyhow!(e.to_string()))
    }

    pub fn thermostat(&self) -> Result<ThermostatSpec> {
        Ok(ThermostatSpec {
            temperature: self.f64_key("sampler.temperature")?,
            friction: self.f64_key("sampler.friction")?,
            dt: self.f64_key("sampler.dt")?,
            mass: self.f64_key("sampler.mass")?,
            kb: self.f64_key("sampler.kb")?,
        })
    }

    pub fn dataset_spec(&self) -> Result<DatasetSpec> {
        Ok(DatasetSpec {
            n_structures: self.usize_key("sampler.n_structures")?,
            equilibration_steps: self.usize_key("sampler.equilibration_steps")?,
            gap_steps: self.usize_key("sampler.gap_steps")?,
            thermostat: self.thermostat()?,
            min_dist: self.f64_key("sampler.min_dist")?,
            species_mix: self.species_mix()?,
        })
    }

    pub fn graph_delta(&self) -> Result<Option<f64>> {
        match self.get("graph.delta") {
            "auto" => Ok(None),
            other => {
                let v: f64 = other
                    .parse()
                    .with_context(|| format!("graph.delta must be auto or a number, got `{other}`"))?;
                if v <= 0.0 {
                    bail!("graph.delta must be positive");
                }
                Ok(Some(v))
            }
        }
    }

    pub fn policy_config(&self) -> Result<PolicyConfig> {
        let model = self.model()?;
        let aggregation = match self.get("policy.aggregation") {
            "mean" => Aggregation::Mean,
            "sum" => Aggregation::Sum,
            other => bail!("policy.aggregation must be mean or sum, got `{other}`"),
        };
        Ok(PolicyConfig {
            n_species: model.n_species(),
            width: self.usize_key("policy.width")?,
            message_passing_steps: self.usize_key("policy.message_passing_steps")?,
            aggregation,
            alpha: self.f64_key("policy.alpha")?,
            displacement_scale: self.f64_key("policy.displacement_scale")?,
            leaky_slope: self.f64_key("policy.leaky_slope")?,
            bn_decay: self.f64_key("policy.bn_decay")?,
        })
    }

    pub fn baseline_kind(&self) -> Result<BaselineKind> {
        Ok(match self.get("train.baseline") {
            "discounted" => BaselineKind::DiscountedReturn,
            "plain" => BaselineKind::PlainDrop,
            "none" => BaselineKind::None,
            other => bail!("train.baseline must be discounted, plain or none, got `{other}`"),
        })
    }

    pub fn fire_params(&self) -> Result<FireParams> {
        Ok(FireParams {
            dt_start: self.f64_key("fire.dt_start")?,
            dt_max: self.f64_key("fire.dt_max")?,
            n_min: self.usize_key("fire.n_min")?,
            f_alpha: self.f64_key("fire.f_alpha")?,
            f_dec: self.f64_key("fire.f_dec")?,
            f_inc: self.f64_key("fire.f_inc")?,
            alpha_start: self.f64_key("fire.alpha_start")?,
        })
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        Ok(TrainConfig {
            epochs: self.usize_key("train.epochs")?,
            trajectory_length: self.usize_key("train.trajectory_length")?,
            gamma: self.f64_key("train.gamma")?,
            batch_size: self.usize_key("train.batch_size")?,
            grad_accum: self.usize_key("train.grad_accum")?,
            learning_rate: self.f64_key("train.learning_rate")?,
            grad_clip: self.f64_key("train.grad_clip")?,
            val_every: self.usize_key("train.val_every")?,
            val_trajectory_length: self.usize_key("train.val_trajectory_length")?,
            train_fraction: self.f64_key("train.train_fraction")?,
            baseline: self.baseline_kind()?,
            sampled_validation: self.bool_key("train.sampled_validation")?,
            fire: self.fire_params()?,
            delta: self.graph_delta()?,
        })
    }

    pub fn adapt_config(&self) -> Result<AdaptConfig> {
        Ok(AdaptConfig {
            epochs: self.usize_key("adapt.epochs")?,
            seeds: self.usize_key("adapt.seeds")?,
            trajectory_length: self.usize_key("adapt.trajectory_length")?,
            gamma: self.f64_key("train.gamma")?,
            learning_rate: self.f64_key("train.learning_rate")?,
            grad_clip: self.f64_key("train.grad_clip")?,
            baseline: self.baseline_kind()?,
            fire: self.fire_params()?,
            delta: self.graph_delta()?,
        })
    }

    pub fn minimize_method(&self) -> Result<Method> {
        Method::from_tag(self.get("minimize.method")).map_err(|e| anyhow!(e.to_string()))
    }

    pub fn minimize_lr(&self, method: Method) -> Result<Option<f64>> {
        Ok(match method {
            Method::Gd => Some(self.f64_key("gd.learning_rate")?),
            Method::Adam => Some(self.f64_key("adam.learning_rate")?),
            Method::Fire => None,
        })
    }

    pub fn minimize_steps(&self) -> Result<usize> {
        self.usize_key("minimize.max_steps")
    }

    pub fn benchmark_structures(&self) -> Result<usize> {
        self.usize_key("benchmark.n_structures")
    }

    pub fn inductivity_sizes(&self) -> Result<Vec<usize>> {
        self.get("inductivity.sizes")
            .split_whitespace()
            .map(|t| {
                t.parse::<usize>()
                    .with_context(|| format!("bad size `{t}` in inductivity.sizes"))
            })
            .collect()
    }

    /// Canonical echo of every resolved key, for run provenance.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        let mut section = "";
        for (key, value) in &self.values {
            let (sec, name) = key.split_once('.').unwrap();
            if sec != section {
                if !section.is_empty() {
                    out.push('\n');
                }
                writeln!(out, "[{sec}]").unwrap();
                section = sec;
            }
            writeln!(out, "{name} = {value}").unwrap();
        }
        out
    }

    /// Schema listing with per-system defaults, embedded in `--help`.
    pub fn help_text() -> String {
        let mut out = String::from(
            "Config keys (key = value under [section] headers; defaults per system lj/sw/csh):\n",
        );
        for spec in schema() {
            let d = spec.defaults;
            let defaults = if d[0] == d[1] && d[1] == d[2] {
                d[0].to_string()
            } else {
                format!("{} | {} | {}", d[0], d[1], d[2])
            };
            writeln!(out, "  {:34} {}  [default: {}]", spec.key, spec.doc, defaults).unwrap();
        }
        out
    }
}

/// Parse `[section]` / `key = value` text. `#` and `;` start comments.
fn parse_ini(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut section = String::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split(['#', ';']).next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| anyhow!("line {}: unterminated section header", lineno + 1))?;
            section = name.trim().to_string();
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected key = value", lineno + 1))?;
        if section.is_empty() {
            bail!("line {}: key outside any [section]", lineno + 1);
        }
        out.insert(
            format!("{section}.{}", key.trim()),
            value.trim().trim_matches('"').to_string(),
        );
    }
    Ok(out)
}

/// Parse one `--set section.key=value` argument.
pub fn parse_override(arg: &str) -> Result<(String, String)> {
    let (key, value) = arg
        .split_once('=')
        .ok_or_else(|| anyhow!("--set expects section.key=value, got `{arg}`"))?;
    if !key.contains('.') {
        bail!("--set key must be section.key, got `{key}`");
    }
    Ok((key.trim().to_string(), value.trim().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve_for_each_system() {
        for kind in ["lj", "sw", "csh"] {
            let cfg = ExperimentConfig::load(
                None,
                &[("system.kind".to_string(), kind.to_string())],
            )
            .unwrap();
            assert_eq!(cfg.get("system.kind"), kind);
            cfg.model().unwrap();
        }
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = ExperimentConfig::load(
            None,
            &[("system.bogus".to_string(), "1".to_string())],
        )
        .unwrap_err();
        assert!(err.to_string().contains("unknown config key"));
    }

    #[test]
    fn per_system_defaults_differ() {
        let lj = ExperimentConfig::load(None, &[]).unwrap();
        let sw = ExperimentConfig::load(
            None,
            &[("system.kind".to_string(), "sw".to_string())],
        )
        .unwrap();
        assert_eq!(lj.get("fire.dt_start"), "0.01");
        assert_eq!(sw.get("fire.dt_start"), "0.5");
        assert_eq!(lj.get("adam.learning_rate"), "0.05");
        assert_eq!(sw.get("adam.learning_rate"), "0.1");
    }

    #[test]
    fn ini_parsing_and_overrides() {
        let dir = std::env::temp_dir().join(format!("atomopt-cfg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.cfg");
        std::fs::write(
            &path,
            "[system]\nkind = lj\nn_atoms = 25 # inline comment\n\n[train]\nepochs = 7\n",
        )
        .unwrap();
        let cfg = ExperimentConfig::load(
            Some(&path),
            &[("train.epochs".to_string(), "9".to_string())],
        )
        .unwrap();
        assert_eq!(cfg.n_atoms().unwrap(), 25);
        assert_eq!(cfg.train_config().unwrap().epochs, 9); // override wins
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn echo_is_deterministic_and_sectioned() {
        let cfg = ExperimentConfig::load(None, &[]).unwrap();
        let echo = cfg.echo();
        assert!(echo.contains("[system]"));
        assert!(echo.contains("kind = lj"));
        assert_eq!(echo, cfg.echo());
    }

    #[test]
    fn help_lists_every_key() {
        let help = ExperimentConfig::help_text();
        for spec in schema() {
            assert!(help.contains(spec.key), "missing {}", spec.key);
        }
    }

    #[test]
    fn bad_values_are_rejected() {
        for (key, value) in [
            ("train.epochs", "many"),
            ("policy.aggregation", "max"),
            ("potential.truncation", "smooth"),
            ("sampler.temperature", "-1"),
        ] {
            let result = ExperimentConfig::load(
                None,
                &[(key.to_string(), value.to_string())],
            );
            assert!(result.is_err(), "{key}={value} should fail");
        }
    }
}
