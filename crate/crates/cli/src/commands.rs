//! The six subcommands: generate, minimize, train, adapt, benchmark,
//! inductivity. Every command echoes its resolved config into the run
//! directory, writes CSV as the canonical output, and emits an SVG plot of
//! its primary trace. Outputs are bit-identical across reruns with the same
//! (config, inputs, seed).

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use atomopt_core::optim::{minimize, Method, MinimizeOptions};
use atomopt_core::policy::{checkpoint, init_params, PolicyParameters};
use atomopt_core::potentials::PotentialModel;
use atomopt_core::rl::{adapt, train, validate, AdaptOutcome};
use atomopt_core::rng::RngStream;
use atomopt_core::sampler::sample_dataset;
use atomopt_core::system::Configuration;
use atomopt_core::xyz;

use crate::config::ExperimentConfig;
use crate::plot::{write_line_plot, Series};
use crate::runner::{parallel_map, prepare_run_dir, write_csv, RunDir};

pub struct Ctx {
    pub cfg: ExperimentConfig,
    pub out: RunDir,
    pub seed: u64,
    pub threads: usize,
}

impl Ctx {
    pub fn new(cfg: ExperimentConfig, out: &Path, seed: u64, threads: usize) -> Result<Self> {
        let out = prepare_run_dir(out)?;
        out.write_echo(&cfg.echo())?;
        Ok(Ctx {
            cfg,
            out,
            seed,
            threads,
        })
    }

    fn rng(&self) -> RngStream {
        RngStream::new(self.seed, 0)
    }
}

/// Load every `*.xyz` under `dir` (sorted by file name) for the active
/// system.
pub fn load_dataset(dir: &Path, model: &PotentialModel) -> Result<Vec<Configuration>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("cannot read dataset directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "xyz"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no .xyz structures in {}", dir.display());
    }
    let mut out = Vec::with_capacity(paths.len());
    for path in &paths {
        let (config, system) = xyz::read_config(path)
            .map_err(|e| anyhow!("{}: {e}", path.display()))?;
        if system != model.system() {
            bail!(
                "{} is a {} structure but the config selects {}",
                path.display(),
                system.tag(),
                model.system().tag()
            );
        }
        out.push(config);
    }
    Ok(out)
}

// ---------------------------------------------------------------- generate

pub fn cmd_generate(ctx: &Ctx) -> Result<()> {
    let model = ctx.cfg.model()?;
    let n_atoms = ctx.cfg.n_atoms()?;
    let box_ = ctx.cfg.box_for(n_atoms)?;
    let spec = ctx.cfg.dataset_spec()?;
    let samples = sample_dataset(n_atoms, box_, &model, &spec, &ctx.rng())?;

    let mut rows = Vec::with_capacity(samples.len());
    for (i, sample) in samples.iter().enumerate() {
        let name = format!("structure_{i:04}.xyz");
        xyz::write_config(&sample.config, model.system(), &ctx.out.structure(&name))?;
        rows.push(format!(
            "{i},structures/{name},{},{}",
            sample.energy,
            sample.energy / n_atoms as f64
        ));
    }
    write_csv(
        &ctx.out.file("manifest.csv"),
        "index,path,energy,energy_per_atom",
        &rows,
    )?;
    let points: Vec<(f64, f64)> = samples
        .iter()
        .enumerate()
        .map(|(i, s)| (i as f64, s.energy / n_atoms as f64))
        .collect();
    write_line_plot(
        &ctx.out.file("generate.svg"),
        &format!("sampled structures ({})", model.system().tag()),
        "structure index",
        "energy per atom",
        &[Series {
            label: "sampled".into(),
            points,
        }],
    )?;
    println!("generated {} structures into {}", samples.len(), ctx.out.root.display());
    Ok(())
}

// ---------------------------------------------------------------- minimize

pub fn cmd_minimize(ctx: &Ctx, input: &Path) -> Result<()> {
    let model = ctx.cfg.model()?;
    let method = ctx.cfg.minimize_method()?;
    let max_steps = ctx.cfg.minimize_steps()?;
    let mut options = MinimizeOptions::new(method, max_steps);
    options.lr = ctx.cfg.minimize_lr(method)?;
    options.fire = Some(ctx.cfg.fire_params()?);

    let inputs: Vec<PathBuf> = if input.is_dir() {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(input)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "xyz"))
            .collect();
        paths.sort();
        paths
    } else {
        vec![input.to_path_buf()]
    };
    if inputs.is_empty() {
        bail!("no .xyz inputs under {}", input.display());
    }

    let mut first_trace: Option<Vec<f64>> = None;
    for path in &inputs {
        let (config, system) = xyz::read_config(path)?;
        if system != model.system() {
            bail!("{} is {} but config selects {}", path.display(), system.tag(), model.system().tag());
        }
        let (final_config, trace) = minimize(&config, &model, &options)?;
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("structure");
        let rows: Vec<String> = trace
            .iter()
            .enumerate()
            .map(|(step, e)| format!("{step},{e}"))
            .collect();
        write_csv(
            &ctx.out.file(&format!("{stem}_{}.csv", method.tag())),
            "step,energy",
            &rows,
        )?;
        xyz::write_config(
            &final_config,
            model.system(),
            &ctx.out.structure(&format!("{stem}_{}_final.xyz", method.tag())),
        )?;
        if first_trace.is_none() {
            first_trace = Some(trace);
        }
    }
    if let Some(trace) = first_trace {
        let points: Vec<(f64, f64)> = trace.iter().enumerate().map(|(i, e)| (i as f64, *e)).collect();
        write_line_plot(
            &ctx.out.file("minimize.svg"),
            &format!("{} minimization", method.tag()),
            "step",
            "energy",
            &[Series {
                label: method.tag().into(),
                points,
            }],
        )?;
    }
    println!("minimized {} structure(s) with {}", inputs.len(), method.tag());
    Ok(())
}

// ------------------------------------------------------------------- train

pub fn cmd_train(ctx: &Ctx, dataset_dir: &Path) -> Result<()> {
    let model = ctx.cfg.model()?;
    let dataset = load_dataset(dataset_dir, &model)?;
    let train_cfg = ctx.cfg.train_config()?;
    let policy_cfg = ctx.cfg.policy_config()?;
    let mut init_rng = ctx.rng().split(0x1271);
    let mut params = init_params(&mut init_rng, &policy_cfg)?;

    let ckpt_dir = ctx.out.root.join("checkpoints");
    let log = train(
        &mut params,
        &model,
        &dataset,
        &train_cfg,
        &ctx.rng(),
        |p, row| {
            if row.val_metric.is_some() {
                let name = format!("epoch_{:05}.ckpt", row.epoch);
                if let Err(e) = checkpoint::save(p, &ckpt_dir.join(name)) {
                    eprintln!("warning: checkpoint save failed: {e}");
                }
            }
        },
    )?;
    checkpoint::save(&params, &ctx.out.checkpoint("final.ckpt"))?;

    let rows: Vec<String> = log
        .iter()
        .map(|row| {
            let val = row
                .val_metric
                .map(|v| v.to_string())
                .unwrap_or_default();
            format!("{},{},{}", row.epoch, row.mean_return, val)
        })
        .collect();
    write_csv(&ctx.out.file("train_log.csv"), "epoch,mean_return,val_metric", &rows)?;

    let val_points: Vec<(f64, f64)> = log
        .iter()
        .filter_map(|r| r.val_metric.map(|v| (r.epoch as f64, v)))
        .collect();
    let return_points: Vec<(f64, f64)> = log
        .iter()
        .skip(1)
        .map(|r| (r.epoch as f64, r.mean_return))
        .collect();
    write_line_plot(
        &ctx.out.file("train.svg"),
        "training progress",
        "epoch",
        "validation <E_T - E_0> / mean return",
        &[
            Series {
                label: "val metric".into(),
                points: val_points,
            },
            Series {
                label: "mean return".into(),
                points: return_points,
            },
        ],
    )?;
    let last_val = log.iter().rev().find_map(|r| r.val_metric);
    println!(
        "trained {} epochs; final validation metric {:?}",
        train_cfg.epochs, last_val
    );
    Ok(())
}

// ------------------------------------------------------------------- adapt

pub fn cmd_adapt(ctx: &Ctx, checkpoint_path: &Path, target_path: &Path) -> Result<()> {
    let model = ctx.cfg.model()?;
    let params = checkpoint::load(checkpoint_path)?;
    let (target, system) = xyz::read_config(target_path)?;
    if system != model.system() {
        bail!("target is {} but config selects {}", system.tag(), model.system().tag());
    }
    let adapt_cfg = ctx.cfg.adapt_config()?;
    let outcome = adapt(&params, &model, &target, &adapt_cfg, &ctx.rng())?;
    write_adapt_outputs(ctx, &model, &outcome, "adapt")?;
    println!(
        "adaptation best energy {} ({} seeds x {} epochs)",
        outcome.best_energy, adapt_cfg.seeds, adapt_cfg.epochs
    );
    Ok(())
}

fn write_adapt_outputs(
    ctx: &Ctx,
    model: &PotentialModel,
    outcome: &AdaptOutcome,
    stem: &str,
) -> Result<()> {
    let mut rows = Vec::new();
    for (seed, trace) in outcome.per_seed_traces.iter().enumerate() {
        for (epoch, e) in trace.iter().enumerate() {
            rows.push(format!("{seed},{epoch},{e}"));
        }
    }
    write_csv(
        &ctx.out.file(&format!("{stem}_trace.csv")),
        "seed,epoch,best_energy",
        &rows,
    )?;
    xyz::write_config(
        &outcome.best_config,
        model.system(),
        &ctx.out.structure(&format!("{stem}_best.xyz")),
    )?;
    let series: Vec<Series> = outcome
        .per_seed_traces
        .iter()
        .enumerate()
        .map(|(seed, trace)| Series {
            label: format!("seed {seed}"),
            points: trace
                .iter()
                .enumerate()
                .map(|(i, e)| (i as f64, *e))
                .collect(),
        })
        .collect();
    write_line_plot(
        &ctx.out.file(&format!("{stem}.svg")),
        "adaptation best-so-far energy",
        "epoch",
        "energy",
        &series,
    )?;
    Ok(())
}

// --------------------------------------------------------------- benchmark

struct MethodSummary {
    label: String,
    finals: Vec<f64>,
    mean_trace: Vec<f64>,
}

/// Classical minimizers (plus optional policy adaptation) on freshly
/// sampled held-out structures; emits a Table-1-shaped summary CSV.
pub fn cmd_benchmark(ctx: &Ctx, checkpoint_path: Option<&Path>) -> Result<()> {
    let model = ctx.cfg.model()?;
    let n_atoms = ctx.cfg.n_atoms()?;
    let box_ = ctx.cfg.box_for(n_atoms)?;
    let mut spec = ctx.cfg.dataset_spec()?;
    spec.n_structures = ctx.cfg.benchmark_structures()?;
    let structures: Vec<Configuration> = sample_dataset(n_atoms, box_, &model, &spec, &ctx.rng())?
        .into_iter()
        .map(|s| s.config)
        .collect();
    for (i, s) in structures.iter().enumerate() {
        xyz::write_config(s, model.system(), &ctx.out.structure(&format!("heldout_{i:02}.xyz")))?;
    }

    let max_steps = ctx.cfg.minimize_steps()?;
    let mut summaries: Vec<MethodSummary> = Vec::new();
    for method in [Method::Gd, Method::Adam, Method::Fire] {
        let mut options = MinimizeOptions::new(method, max_steps);
        options.lr = ctx.cfg.minimize_lr(method)?;
        options.fire = Some(ctx.cfg.fire_params()?);
        let results = parallel_map(structures.len(), ctx.threads, |i| {
            minimize(&structures[i], &model, &options)
        });
        let mut finals = Vec::new();
        let mut traces = Vec::new();
        for r in results {
            let (_, trace) = r?;
            finals.push(*trace.last().unwrap());
            traces.push(trace);
        }
        summaries.push(MethodSummary {
            label: method.tag().to_string(),
            finals,
            mean_trace: mean_trace(&traces),
        });
    }

    if let Some(ckpt) = checkpoint_path {
        let params = checkpoint::load(ckpt)?;
        let adapt_cfg = ctx.cfg.adapt_config()?;
        let rng = ctx.rng();
        let results = parallel_map(structures.len(), ctx.threads, |i| {
            adapt(&params, &model, &structures[i], &adapt_cfg, &rng.split(0xBE0 + i as u64))
        });
        let mut finals = Vec::new();
        let mut traces = Vec::new();
        for r in results {
            let outcome = r?;
            finals.push(outcome.best_energy);
            // min over seeds of best-so-far at each epoch
            let epochs = adapt_cfg.epochs;
            let combined: Vec<f64> = (0..epochs)
                .map(|e| {
                    outcome
                        .per_seed_traces
                        .iter()
                        .map(|t| t[e])
                        .fold(f64::INFINITY, f64::min)
                })
                .collect();
            traces.push(combined);
        }
        summaries.push(MethodSummary {
            label: "policy".to_string(),
            finals,
            mean_trace: mean_trace(&traces),
        });
    }

    let mut rows = Vec::new();
    for s in &summaries {
        let min = s.finals.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        let mean = s.finals.iter().sum::<f64>() / s.finals.len() as f64;
        rows.push(format!("{},{},{min},{mean}", model.system().tag(), s.label));
    }
    write_csv(&ctx.out.file("benchmark.csv"), "system,method,min,mean", &rows)?;

    let mut detail = Vec::new();
    for s in &summaries {
        for (i, e) in s.finals.iter().enumerate() {
            detail.push(format!("{i},{},{e}", s.label));
        }
    }
    write_csv(
        &ctx.out.file("benchmark_detail.csv"),
        "structure,method,final_energy",
        &detail,
    )?;

    let series: Vec<Series> = summaries
        .iter()
        .map(|s| Series {
            label: s.label.clone(),
            points: s
                .mean_trace
                .iter()
                .enumerate()
                .map(|(i, e)| (i as f64, *e))
                .collect(),
        })
        .collect();
    write_line_plot(
        &ctx.out.file("benchmark.svg"),
        &format!("mean energy during minimization ({})", model.system().tag()),
        "step / epoch",
        "energy",
        &series,
    )?;
    for row in &rows {
        println!("{row}");
    }
    Ok(())
}

fn mean_trace(traces: &[Vec<f64>]) -> Vec<f64> {
    if traces.is_empty() {
        return vec![];
    }
    let len = traces.iter().map(Vec::len).min().unwrap_or(0);
    (0..len)
        .map(|i| traces.iter().map(|t| t[i]).sum::<f64>() / traces.len() as f64)
        .collect()
}

// ------------------------------------------------------------- inductivity

/// Adapt one fixed checkpoint across system sizes, reporting per-atom
/// energies in a Table-2 shape alongside the classical minimizers.
pub fn cmd_inductivity(ctx: &Ctx, checkpoint_path: &Path) -> Result<()> {
    let model = ctx.cfg.model()?;
    let params = checkpoint::load(checkpoint_path)?;
    let sizes = ctx.cfg.inductivity_sizes()?;
    let n_structures = ctx.cfg.benchmark_structures()?;
    let max_steps = ctx.cfg.minimize_steps()?;
    let adapt_cfg = ctx.cfg.adapt_config()?;

    let mut rows = Vec::new();
    let mut per_method_points: Vec<(String, Vec<(f64, f64)>)> = vec![
        ("gd".into(), vec![]),
        ("adam".into(), vec![]),
        ("fire".into(), vec![]),
        ("policy".into(), vec![]),
    ];

    for &n in &sizes {
        let box_ = ctx.cfg.box_for(n)?;
        let mut spec = ctx.cfg.dataset_spec()?;
        spec.n_structures = n_structures;
        let rng = ctx.rng().split(n as u64);
        let structures: Vec<Configuration> = sample_dataset(n, box_, &model, &spec, &rng)?
            .into_iter()
            .map(|s| s.config)
            .collect();

        let mut method_finals: Vec<(String, Vec<f64>)> = Vec::new();
        for method in [Method::Gd, Method::Adam, Method::Fire] {
            let mut options = MinimizeOptions::new(method, max_steps);
            options.lr = ctx.cfg.minimize_lr(method)?;
            options.fire = Some(ctx.cfg.fire_params()?);
            let results = parallel_map(structures.len(), ctx.threads, |i| {
                minimize(&structures[i], &model, &options)
            });
            let finals: Vec<f64> = results
                .into_iter()
                .map(|r| r.map(|(_, t)| *t.last().unwrap() / n as f64))
                .collect::<Result<_, _>>()?;
            method_finals.push((method.tag().to_string(), finals));
        }
        {
            let results = parallel_map(structures.len(), ctx.threads, |i| {
                adapt(&params, &model, &structures[i], &adapt_cfg, &rng.split(0xF00 + i as u64))
            });
            let finals: Vec<f64> = results
                .into_iter()
                .map(|r| r.map(|o| o.best_energy / n as f64))
                .collect::<Result<_, _>>()?;
            method_finals.push(("policy".to_string(), finals));
        }

        for (label, finals) in &method_finals {
            let min = finals.iter().fold(f64::INFINITY, |a, &b| a.min(b));
            let mean = finals.iter().sum::<f64>() / finals.len() as f64;
            rows.push(format!("{n},{label},{min},{mean}"));
            if let Some(slot) = per_method_points.iter_mut().find(|(l, _)| l == label) {
                slot.1.push((n as f64, mean));
            }
        }
    }

    write_csv(
        &ctx.out.file("inductivity.csv"),
        "n_atoms,method,min_per_atom,mean_per_atom",
        &rows,
    )?;
    let series: Vec<Series> = per_method_points
        .iter()
        .map(|(label, points)| Series {
            label: label.clone(),
            points: points.clone(),
        })
        .collect();
    write_line_plot(
        &ctx.out.file("inductivity.svg"),
        "per-atom energy across system sizes",
        "atoms",
        "mean energy per atom",
        &series,
    )?;
    for row in &rows {
        println!("{row}");
    }
    Ok(())
}

// ----------------------------------------------------------------- shared

/// Validation helper used by tests: run the metric on a directory of
/// structures with a given checkpoint.
pub fn evaluate_checkpoint(
    ctx: &Ctx,
    checkpoint_path: &Path,
    dataset_dir: &Path,
    t_steps: usize,
) -> Result<f64> {
    let model = ctx.cfg.model()?;
    let params: PolicyParameters = checkpoint::load(checkpoint_path)?;
    let dataset = load_dataset(dataset_dir, &model)?;
    let refs: Vec<&Configuration> = dataset.iter().collect();
    Ok(validate(
        &params,
        &model,
        &refs,
        t_steps,
        false,
        &ctx.rng().split(0xEA1),
        ctx.cfg.graph_delta()?,
    )?)
}
