//! Command-line surface: environment and route generation, task dataset
//! generation, training, evaluation, and report assembly.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use assistnav::anna::{build_route_system, load_routes, save_routes, save_vocabulary};
use assistnav::env::{generate_environment, load_environment, save_environment, SimConfig};
use assistnav::eval::{
    evaluate, generate_tasks, load_tasks, report_csv_header, report_csv_row, save_tasks,
    split_env_ids, EvalOptions, PolicyName, TaskDataset,
};
use assistnav::policy::{load_checkpoint, save_checkpoint, PolicyConfig, PolicyParameters};
use assistnav::teachers::TeacherConfig;
use assistnav::training::{curve_to_csv, train, TrainConfig, World};

#[derive(Parser)]
#[command(
    name = "assistnav",
    about = "Assisted-navigation benchmark: synthetic graph worlds, simulated assistants, imitation-trained agents"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random connected environment file.
    GenEnv {
        #[arg(long)]
        nodes: usize,
        /// Connectivity radius in meters.
        #[arg(long, default_value_t = 2.6)]
        radius: f64,
        #[arg(long = "object-types", default_value_t = 5)]
        object_types: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the assistant's route system for an environment.
    BuildRoutes {
        #[arg(long)]
        env: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the token vocabulary.
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
    /// Sample the five task splits from a directory of environments.
    GenTasks {
        /// Directory of environment JSON files; the trailing quarter of
        /// the sorted file list becomes the unseen pool.
        #[arg(long)]
        envs: PathBuf,
        #[arg(long = "per-split")]
        per_split: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the two policies with the retrospective teachers.
    Train {
        #[arg(long)]
        envs: PathBuf,
        /// Directory of `<env>.routes.json` files (built on the fly when
        /// missing).
        #[arg(long)]
        routes: Option<PathBuf>,
        #[arg(long)]
        tasks: PathBuf,
        /// Curiosity-encouraging weight.
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 2000)]
        iters: usize,
        #[arg(long, default_value_t = 1e-4)]
        lr: f64,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 32)]
        hidden: usize,
        /// Greedy-evaluation cadence on the val_seen split (0 = never).
        #[arg(long = "eval-every", default_value_t = 0)]
        eval_every: usize,
        /// Checkpoint output path.
        #[arg(long)]
        out: PathBuf,
        /// Learning-curve CSV path (defaults to `<out>.curve.csv`).
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// Evaluate a policy on one task split and write a CSV report.
    Eval {
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        envs: PathBuf,
        #[arg(long)]
        routes: Option<PathBuf>,
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        split: String,
        #[arg(long)]
        policy: String,
        #[arg(long = "forward-k", default_value_t = 7)]
        forward_k: usize,
        #[arg(long = "ask-k", default_value_t = 5)]
        ask_k: usize,
        #[arg(long = "ask-prob", default_value_t = 0.2)]
        ask_prob: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        report: PathBuf,
        /// Also write the metrics as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Merge evaluation CSVs into a markdown table.
    Report {
        #[arg(long, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> std::process::ExitCode {
    match run(Cli::parse()) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}

/// Environment files in a directory, sorted by file stem.
fn env_files(dir: &Path) -> anyhow::Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if !name.ends_with(".json") || name.ends_with(".routes.json") {
            continue;
        }
        let stem = name.trim_end_matches(".json").to_string();
        out.push((stem, path));
    }
    out.sort();
    if out.is_empty() {
        bail!("no environment files in {}", dir.display());
    }
    Ok(out)
}

fn load_worlds(
    envs_dir: &Path,
    routes_dir: Option<&Path>,
    sim: &SimConfig,
) -> anyhow::Result<Vec<World>> {
    let mut worlds = Vec::new();
    for (stem, path) in env_files(envs_dir)? {
        let env = load_environment(&path)?;
        let routes = match routes_dir {
            Some(dir) => {
                let routes_path = dir.join(format!("{stem}.routes.json"));
                if routes_path.exists() {
                    load_routes(&routes_path, &env, sim.eps_attn)?
                } else {
                    build_route_system(&env, 0, sim)?
                }
            }
            None => build_route_system(&env, 0, sim)?,
        };
        worlds.push(World {
            env_id: stem,
            env,
            routes,
        });
    }
    Ok(worlds)
}

fn split_tasks<'a>(dataset: &'a TaskDataset, split: &str) -> anyhow::Result<&'a [Task]> {
    dataset
        .split(split)
        .with_context(|| format!("unknown split '{split}' (expected one of {:?})", TaskDataset::SPLITS))
}

use assistnav::env::Task;

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenEnv {
            nodes,
            radius,
            object_types,
            seed,
            out,
        } => {
            let env = generate_environment(nodes, radius, object_types, seed)?;
            save_environment(&env, &out)?;
            println!(
                "wrote {} ({} nodes, {} edges, mean edge length {:.2} m)",
                out.display(),
                env.len(),
                env.edges.len(),
                env.mean_edge_length()
            );
        }
        Command::BuildRoutes {
            env,
            seed,
            out,
            vocab,
        } => {
            let sim = SimConfig::default();
            let graph = load_environment(&env)?;
            let routes = build_route_system(&graph, seed, &sim)?;
            save_routes(&routes, &out)?;
            println!("wrote {} ({} routes)", out.display(), routes.routes.len());
            if let Some(vocab_path) = vocab {
                save_vocabulary(&vocab_path)?;
                println!("wrote {}", vocab_path.display());
            }
        }
        Command::GenTasks {
            envs,
            per_split,
            seed,
            out,
        } => {
            let sim = SimConfig::default();
            let worlds = load_worlds(&envs, None, &sim)?;
            let ids: Vec<String> = worlds.iter().map(|w| w.env_id.clone()).collect();
            let (seen_ids, unseen_ids) = split_env_ids(&ids);
            let seen: Vec<&World> = worlds
                .iter()
                .filter(|w| seen_ids.contains(&w.env_id))
                .collect();
            let unseen: Vec<&World> = worlds
                .iter()
                .filter(|w| unseen_ids.contains(&w.env_id))
                .collect();
            let dataset = generate_tasks(&seen, &unseen, per_split, seed, &sim)?;
            save_tasks(&dataset, &out)?;
            println!(
                "wrote {} (seen envs: {seen_ids:?}, unseen envs: {unseen_ids:?})",
                out.display()
            );
        }
        Command::Train {
            envs,
            routes,
            tasks,
            alpha,
            iters,
            lr,
            batch,
            seed,
            hidden,
            eval_every,
            out,
            curve,
        } => {
            let mut sim = SimConfig::default();
            sim.feature_dim = hidden;
            let worlds = load_worlds(&envs, routes.as_deref(), &sim)?;
            let dataset = load_tasks(&tasks)?;
            let policy_cfg = PolicyConfig {
                hidden,
                feature_dim: hidden,
                action_emb_dim: hidden,
                ask_emb_dim: hidden,
                ..PolicyConfig::default()
            };
            let params = PolicyParameters::new(policy_cfg, seed)?;
            let cfg = TrainConfig {
                alpha,
                learning_rate: lr,
                iterations: iters,
                batch_size: batch,
                seed,
                eval_every,
                ..TrainConfig::default()
            };
            let eval_slice: Vec<Task> =
                dataset.val_seen.iter().take(50).cloned().collect();
            let outcome = train(&worlds, &dataset.train, &eval_slice, params, &cfg, &sim)?;
            save_checkpoint(&outcome.params, &out)?;
            let curve_path = curve.unwrap_or_else(|| {
                let mut p = out.as_os_str().to_owned();
                p.push(".curve.csv");
                PathBuf::from(p)
            });
            std::fs::write(&curve_path, curve_to_csv(&outcome.curve))
                .with_context(|| format!("writing {}", curve_path.display()))?;
            let last = outcome.curve.last();
            println!(
                "wrote {} and {} (final nav_nl {:.4})",
                out.display(),
                curve_path.display(),
                last.map(|r| r.nav_nl).unwrap_or(f64::NAN)
            );
        }
        Command::Eval {
            ckpt,
            envs,
            routes,
            tasks,
            split,
            policy,
            forward_k,
            ask_k,
            ask_prob,
            seed,
            report,
            json,
        } => {
            let policy: PolicyName = policy.parse()?;
            let params = match &ckpt {
                Some(path) => Some(load_checkpoint(path)?),
                None => None,
            };
            if policy.needs_checkpoint() && params.is_none() {
                bail!("policy '{}' requires --ckpt", policy.as_str());
            }
            let mut sim = SimConfig::default();
            if let Some(p) = &params {
                sim.feature_dim = p.cfg.feature_dim;
            }
            let worlds = load_worlds(&envs, routes.as_deref(), &sim)?;
            let dataset = load_tasks(&tasks)?;
            let task_list = split_tasks(&dataset, &split)?;
            let opts = EvalOptions {
                policy,
                forward_k,
                ask_k,
                ask_prob,
                budget: 0,
                seed,
                teacher: TeacherConfig::default(),
            };
            let outcome = evaluate(&worlds, task_list, params.as_ref(), &opts, &sim)?;
            let mut csv = report_csv_header();
            csv.push('\n');
            csv.push_str(&report_csv_row(&split, policy.as_str(), &outcome.metrics));
            csv.push('\n');
            std::fs::write(&report, &csv)
                .with_context(|| format!("writing {}", report.display()))?;
            if let Some(json_path) = json {
                let m = &outcome.metrics;
                let value = serde_json::json!({
                    "split": split,
                    "policy": policy.as_str(),
                    "tasks": m.tasks,
                    "sr": m.sr,
                    "spl": m.spl,
                    "nav_error": m.nav_error,
                    "requests_per_task": m.requests_per_task,
                    "nav_mistake_repeat": m.nav_mistake_repeat,
                    "help_request_repeat": m.help_request_repeat,
                });
                std::fs::write(&json_path, serde_json::to_string_pretty(&value)?)
                    .with_context(|| format!("writing {}", json_path.display()))?;
            }
            println!(
                "{} on {}: SR {:.2}%, SPL {:.2}%, nav err {:.2} m, requests/task {:.2}",
                policy.as_str(),
                split,
                outcome.metrics.sr,
                outcome.metrics.spl,
                outcome.metrics.nav_error,
                outcome.metrics.requests_per_task
            );
        }
        Command::Report { inputs, out } => {
            let mut rows: Vec<Vec<String>> = Vec::new();
            let mut header: Option<Vec<String>> = None;
            for input in &inputs {
                let mut reader = csv::Reader::from_path(input)
                    .with_context(|| format!("reading {}", input.display()))?;
                let file_header: Vec<String> =
                    reader.headers()?.iter().map(str::to_string).collect();
                match &header {
                    None => header = Some(file_header),
                    Some(h) if *h == file_header => {}
                    Some(_) => bail!("{} has a different column layout", input.display()),
                }
                for record in reader.records() {
                    rows.push(record?.iter().map(str::to_string).collect());
                }
            }
            let header = header.context("no input rows")?;
            let mut md = String::new();
            let shown = 9.min(header.len());
            md.push_str(&format!("| {} |\n", header[..shown].join(" | ")));
            md.push_str(&format!("|{}\n", "---|".repeat(shown)));
            for row in rows {
                let cells: Vec<String> = row[..shown.min(row.len())]
                    .iter()
                    .enumerate()
                    .map(|(i, c)| match (i >= 3, c.parse::<f64>()) {
                        // Metric columns render at two decimals; identity
                        // and count columns stay verbatim.
                        (true, Ok(v)) => format!("{v:.2}"),
                        _ => c.clone(),
                    })
                    .collect();
                md.push_str(&format!("| {} |\n", cells.join(" | ")));
            }
            std::fs::write(&out, md).with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}
