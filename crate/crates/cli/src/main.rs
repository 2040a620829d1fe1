//! abelia: check computation-graph specs before anything runs.
//!
//! Subcommands:
//! - `check <spec>`: elaborate a spec file; exit 0 accepted, 1 rejected,
//!   2 malformed.
//! - `cayley p q r`: print the geometric-product table of Cl(p,q,r).
//! - `sparsity p q r --grades A B`: nonzero/total products and the reachable
//!   grade set for two grade sets.
//! - `grad <spec> --seed id --inputs json`: forward-mode primal, tangent,
//!   dimensions, and the liveness trace.
//! - `mdl-verify`: randomized agreement between the unifier's free-variable
//!   count and a brute-force description-length oracle.
//! - `drift p q r`: structural-zero drift probe, exact vs rounded.
//! - `gate`: the consultation coherence criterion on two KL divergences.
//!
//! The environment variable `ABELIA_CONFIG` may point to a JSON config file;
//! command-line flags override it.

use std::collections::BTreeMap;
use std::fs;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use abelia::clifford::{build_cayley, GradeSet, Signature};
use abelia::coherence::{accept_consultation, Decision, Distribution, Divergence};
use abelia::diff::{derive_tangent_graph, evaluate_forward};
use abelia::dims::{format_dimension, Basis};
use abelia::graph::{elaborate, load_spec, Config, ReprMode};
use abelia::mdl::run_trials;
use abelia::numeric::{drift_probe, FloatFormat};

#[derive(Parser)]
#[command(name = "abelia", version, about = "design-time verification for typed computation graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Human,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReprFlag {
    Auto,
    Require,
    Off,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DriftFormat {
    F32,
    F64,
}

#[derive(Subcommand)]
enum Command {
    /// Elaborate a spec file and print the report.
    Check {
        spec: String,
        /// Emit the JSON report instead of the human rendering.
        #[arg(long)]
        json: bool,
        #[arg(long)]
        eps_budget: Option<f64>,
        #[arg(long)]
        stack_limit: Option<u64>,
        #[arg(long, value_enum)]
        repr: Option<ReprFlag>,
        /// Comma-separated base dimension symbols (used when the spec file
        /// declares none).
        #[arg(long)]
        basis: Option<String>,
    },
    /// Print the Cayley table of Cl(p,q,r).
    Cayley {
        p: u8,
        q: u8,
        r: u8,
        #[arg(long)]
        json: bool,
    },
    /// Sparsity of products between two grade sets.
    Sparsity {
        p: u8,
        q: u8,
        r: u8,
        /// Two grade sets, e.g. --grades 2 0,2,4
        #[arg(long, num_args = 2)]
        grades: Vec<String>,
        #[arg(long)]
        json: bool,
    },
    /// Forward-mode derivative of a spec along one seed input.
    Grad {
        spec: String,
        #[arg(long)]
        seed: String,
        /// Input bindings as JSON, e.g. '{"x": 3.0}' or '{"v": [1, 2]}'.
        #[arg(long)]
        inputs: String,
    },
    /// Randomized MAP-agreement trials for the description-length prior.
    MdlVerify {
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 4)]
        vars: usize,
        #[arg(long, default_value_t = 6)]
        bound: i64,
        #[arg(long, default_value_t = 0xab311a)]
        seed: u64,
    },
    /// Structural-zero drift probe: exact vs per-step-rounded accumulation.
    Drift {
        p: u8,
        q: u8,
        r: u8,
        #[arg(long, default_value_t = 10_000)]
        steps: u64,
        #[arg(long, value_enum, default_value = "f32")]
        format: DriftFormat,
    },
    /// Coherence gate: admit a consultation iff the state change is smaller
    /// than the disagreement that motivated it.
    Gate {
        #[arg(long)]
        before: String,
        #[arg(long)]
        after: String,
        #[arg(long)]
        domain: String,
    },
}

/// On-disk configuration; flags override any of these.
#[derive(Deserialize, Default)]
struct FileConfig {
    eps_budget: Option<f64>,
    stack_limit: Option<u64>,
    base_dims: Option<Vec<String>>,
    format: Option<String>,
}

fn load_file_config() -> Result<FileConfig, String> {
    let Ok(path) = std::env::var("ABELIA_CONFIG") else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(&path)
        .map_err(|e| format!("cannot read ABELIA_CONFIG {path}: {e}"))?;
    serde_json::from_str(&text).map_err(|e| format!("bad config {path}: {e}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<ExitCode, String> {
    let file_config = load_file_config()?;
    match command {
        Command::Check { spec, json, eps_budget, stack_limit, repr, basis } => {
            let text = fs::read_to_string(&spec)
                .map_err(|e| format!("cannot read {spec}: {e}"))?;
            let default_basis = match basis
                .map(|b| b.split(',').map(str::to_string).collect::<Vec<_>>())
                .or(file_config.base_dims)
            {
                Some(symbols) => {
                    Some(Basis::new(&symbols).map_err(|e| format!("bad basis: {e}"))?)
                }
                None => None,
            };
            let graph = match load_spec(&text, default_basis.as_ref()) {
                Ok(g) => g,
                Err(e) => return Err(format!("malformed spec: {e}")),
            };
            let config = Config {
                eps_budget: eps_budget
                    .or(file_config.eps_budget)
                    .unwrap_or(Config::default().eps_budget),
                stack_limit: stack_limit
                    .or(file_config.stack_limit)
                    .unwrap_or(Config::default().stack_limit),
                representations: match repr {
                    Some(ReprFlag::Auto) | None => ReprMode::Auto,
                    Some(ReprFlag::Require) => ReprMode::Require,
                    Some(ReprFlag::Off) => ReprMode::Off,
                },
            };
            let report = elaborate(&graph, &config);
            let json_out = json || file_config.format.as_deref() == Some("json");
            if json_out {
                println!("{}", report.to_json());
            } else {
                print!("{}", report.render_human());
            }
            Ok(if report.accepted { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Cayley { p, q, r, json } => {
            let sig = Signature::new(p, q, r).map_err(|e| e.to_string())?;
            let table = build_cayley(sig).map_err(|e| e.to_string())?;
            if json {
                let rows: Vec<serde_json::Value> = table
                    .blades()
                    .flat_map(|a| {
                        table.blades().map(move |b| (a, b))
                    })
                    .map(|(a, b)| {
                        let (sign, result) = table.product(a, b);
                        serde_json::json!({
                            "a": a.index(),
                            "b": b.index(),
                            "sign": sign,
                            "result": result.index(),
                        })
                    })
                    .collect();
                println!("{}", serde_json::to_string(&rows).expect("serializable"));
            } else {
                println!(
                    "{sig}: {} blades, {} entries",
                    table.blade_count(),
                    table.blade_count() * table.blade_count()
                );
                for a in table.blades() {
                    for b in table.blades() {
                        let (sign, result) = table.product(a, b);
                        let signed = match sign {
                            1 => format!("+{}", result.name()),
                            -1 => format!("-{}", result.name()),
                            _ => "0".to_string(),
                        };
                        println!("{:>6} * {:<6} = {}", a.name(), b.name(), signed);
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Sparsity { p, q, r, grades, json } => {
            let sig = Signature::new(p, q, r).map_err(|e| e.to_string())?;
            let table = build_cayley(sig).map_err(|e| e.to_string())?;
            let parse_set = |text: &str| -> Result<GradeSet, String> {
                let mut set = GradeSet::EMPTY;
                for part in text.split(',') {
                    let g: u8 = part
                        .trim()
                        .parse()
                        .map_err(|_| format!("bad grade `{part}`"))?;
                    if g > sig.total() {
                        return Err(format!("grade {g} exceeds {}", sig.total()));
                    }
                    set.insert(g);
                }
                Ok(set)
            };
            let a = parse_set(&grades[0])?;
            let b = parse_set(&grades[1])?;
            let (nonzero, total) = table.sparsity_count(a, b);
            let result = table.grade_product_set(a, b);
            if json {
                println!(
                    "{}",
                    serde_json::json!({
                        "signature": {"p": p, "q": q, "r": r},
                        "left": a.grades(),
                        "right": b.grades(),
                        "nonzero": nonzero,
                        "total": total,
                        "result_grades": result.grades(),
                    })
                );
            } else {
                println!("{sig}: grades {a} x {b}");
                println!("nonzero {nonzero} / total {total}");
                println!("result grades {result}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Grad { spec, seed, inputs } => {
            let text = fs::read_to_string(&spec)
                .map_err(|e| format!("cannot read {spec}: {e}"))?;
            let graph = load_spec(&text, None).map_err(|e| format!("malformed spec: {e}"))?;
            let raw: BTreeMap<String, serde_json::Value> =
                serde_json::from_str(&inputs).map_err(|e| format!("bad --inputs: {e}"))?;
            let mut bindings: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for (k, v) in raw {
                let vec = match v {
                    serde_json::Value::Number(n) => {
                        vec![n.as_f64().ok_or("non-finite input")?]
                    }
                    serde_json::Value::Array(items) => items
                        .into_iter()
                        .map(|x| x.as_f64().ok_or("non-finite input"))
                        .collect::<Result<Vec<_>, _>>()?,
                    _ => return Err(format!("input {k} must be a number or array")),
                };
                bindings.insert(k, vec);
            }
            let tg = derive_tangent_graph(&graph, &seed).map_err(|e| e.to_string())?;
            let result = evaluate_forward(&tg, &bindings).map_err(|e| e.to_string())?;
            let report = elaborate(&tg.graph, &Config::default());
            for (id, value) in &result.primal {
                let idx = tg.graph.node_idx(id).expect("output exists");
                let dim = format_dimension(
                    &report.solved_dims[idx],
                    &tg.graph.basis,
                    &tg.graph.vars,
                );
                let tangent = &result.tangent[id];
                let t_idx = tg.tangent_idx(idx).expect("tangent exists");
                let t_dim = format_dimension(
                    &report.solved_dims[t_idx],
                    &tg.graph.basis,
                    &tg.graph.vars,
                );
                println!("{id}: primal {value:?} ({dim}), tangent {tangent:?} ({t_dim})");
            }
            println!(
                "trace: peak live tangent buffers {}, nodes evaluated {}",
                result.trace.peak_live_tangent_buffers, result.trace.total_nodes_evaluated
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::MdlVerify { trials, vars, bound, seed } => {
            let stats = run_trials(trials, vars, bound, seed);
            println!(
                "trials {}: agree {}, disagree {}, both-unsolvable {}, skipped {}",
                stats.trials,
                stats.agreements,
                stats.disagreements,
                stats.both_unsolvable,
                stats.skipped
            );
            println!("agreement rate {:.4}", stats.agreement_rate());
            Ok(if stats.disagreements == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Drift { p, q, r, steps, format } => {
            let sig = Signature::new(p, q, r).map_err(|e| e.to_string())?;
            let table = build_cayley(sig).map_err(|e| e.to_string())?;
            let fmt = match format {
                DriftFormat::F32 => FloatFormat::Binary32,
                DriftFormat::F64 => FloatFormat::Binary64,
            };
            let report = drift_probe(&table, steps, fmt);
            println!("mode   max |structurally-zero coefficient| over {} steps", report.steps);
            println!("exact  {:e}", report.exact_max);
            println!("{}    {:e}", fmt.as_str(), report.naive_max);
            Ok(ExitCode::SUCCESS)
        }
        Command::Gate { before, after, domain } => {
            let load = |path: &str| -> Result<Distribution, String> {
                let text = fs::read_to_string(path)
                    .map_err(|e| format!("cannot read {path}: {e}"))?;
                let dist: Distribution = serde_json::from_str(&text)
                    .map_err(|e| format!("bad distribution {path}: {e}"))?;
                dist.validate().map_err(|e| format!("invalid distribution {path}: {e}"))?;
                Ok(dist)
            };
            let before = load(&before)?;
            let after = load(&after)?;
            let domain = load(&domain)?;
            let outcome =
                accept_consultation(&before, &after, &domain).map_err(|e| e.to_string())?;
            let show = |d: &Divergence| match d {
                Divergence::Finite(v) => format!("{v}"),
                Divergence::Infinite => "inf".to_string(),
            };
            println!("state change  KL(after || before)  = {}", show(&outcome.state_change));
            println!("disagreement  KL(before || domain) = {}", show(&outcome.disagreement));
            println!(
                "decision: {}",
                match outcome.decision {
                    Decision::Accept => "accept",
                    Decision::Reject => "reject",
                }
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}
