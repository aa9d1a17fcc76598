use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use era_core::audit::{read_traces, verify_traces};
use era_core::harness::artifacts::{write_json, BENCH_FILE};
use era_core::harness::pipeline::{self, load_bank, load_model};
use era_core::harness::{bench, MetricsReport, PolicyKind, RunConfig};
use era_core::sim::Difficulty;

#[derive(Parser, Debug)]
#[command(name = "era", version, about = "Event-retrieve-action collision avoidance harness")]
#[command(arg_required_else_help = true)]
struct Cli {
    /// key = value configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config file)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, default_value = "era-out")]
    out: PathBuf,
    /// Worker threads (0 = all cores)
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run expert episodes and write the demonstration dataset
    GenData {
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Train the encoder, build the expert bank and fit the latent dynamics
    Pretrain {
        /// Dataset file (default: <out>/dataset.jsonl)
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Run the adaptive curriculum with the retrieval controller
    Train {
        /// Directory holding model.json and bank.jsonl (default: <out>)
        #[arg(long)]
        artifacts: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
        /// Also write every decision trace
        #[arg(long)]
        traces: bool,
    },
    /// Evaluate on a fixed difficulty with a shared seed list
    Eval {
        #[arg(long)]
        artifacts: Option<PathBuf>,
        /// Bank file (default: trained bank if present, else the expert bank)
        #[arg(long)]
        bank: Option<PathBuf>,
        #[arg(long, default_value = "medium")]
        difficulty: Difficulty,
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long, value_enum, default_value_t = PolicyArg::Both)]
        policy: PolicyArg,
        /// Also write decision traces of the ERA run
        #[arg(long)]
        traces: bool,
    },
    /// Measure stage latencies, recall and scaling over padded banks
    Bench {
        #[arg(long)]
        artifacts: Option<PathBuf>,
        #[arg(long)]
        bank: Option<PathBuf>,
        /// Comma-separated bank sizes
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long)]
        queries: Option<usize>,
    },
    /// Pretty-print a decision trace file, optionally replaying it
    InspectTrace {
        file: PathBuf,
        /// Replay every decision against the bank and model
        #[arg(long)]
        verify: bool,
        #[arg(long)]
        artifacts: Option<PathBuf>,
        #[arg(long)]
        bank: Option<PathBuf>,
        /// Print at most this many decisions
        #[arg(long, default_value_t = 20)]
        limit: usize,
    },
    /// gen-data, pretrain, train and a medium evaluation of both policies
    RunAll,
    /// Print the effective configuration
    PrintConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PolicyArg {
    Era,
    Expert,
    Both,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::read(p)?,
        None => RunConfig::default().finish()?,
    };
    Ok(match cli.seed {
        Some(s) => cfg.with_seed(s)?,
        None => cfg,
    })
}

fn print_reports(reports: &[MetricsReport]) {
    for r in reports {
        println!(
            "{} {}: success {:.3} collision {:.3} timeout {:.3} warning {:.3} decisions {:.1} reaction {:.3} ms bank {}",
            r.policy.name(),
            r.difficulty.name(),
            r.success_rate,
            r.collision_rate,
            r.timeout_rate,
            r.warning_rate,
            r.avg_steps,
            r.reaction_ms,
            r.bank_size
        );
    }
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global()?;
    }
    let cfg = load_config(&cli)?;
    let master = cfg.harness.seed;
    let out = cli.out.as_path();

    match &cli.command {
        Command::PrintConfig => print!("{}", cfg.to_kv_string()),
        Command::GenData { episodes } => print_json(&pipeline::gen_data(&cfg, out, *episodes)?)?,
        Command::Pretrain { dataset } => print_json(&pipeline::pretrain(&cfg, out, dataset.as_deref())?)?,
        Command::Train { artifacts, episodes, traces } => {
            let dir = artifacts.as_deref().unwrap_or(out);
            let (logs, bank) = pipeline::train(&cfg, dir, out, *episodes, *traces)?;
            let successes = logs.iter().filter(|l| l.success).count();
            println!(
                "{} episodes, {successes} successes, bank {} -> {}",
                logs.len(),
                logs.first().map_or(bank.len(), |l| l.bank_size - l.inserted + l.pruned),
                bank.len()
            );
        }
        Command::Eval { artifacts, bank, difficulty, seeds, policy, traces } => {
            let dir = artifacts.as_deref().unwrap_or(out);
            let kinds: &[PolicyKind] = match policy {
                PolicyArg::Both => &[PolicyKind::Expert, PolicyKind::Era],
                PolicyArg::Era => &[PolicyKind::Era],
                PolicyArg::Expert => &[PolicyKind::Expert],
            };
            let reports = pipeline::eval(&cfg, dir, out, bank.as_deref(), *difficulty, *seeds, kinds, *traces)?;
            print_reports(&reports);
        }
        Command::RunAll => print_reports(&pipeline::run_all(&cfg, out)?),
        Command::Bench { artifacts, bank, sizes, queries } => {
            let dir = artifacts.as_deref().unwrap_or(out);
            let model = load_model(dir)?;
            let b = load_bank(dir, bank.as_deref())?;
            fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
            let report = bench(
                &b,
                &model.encoder(),
                &model.dynamics(),
                &cfg.controller,
                &cfg.episode,
                sizes.as_deref().unwrap_or(&cfg.harness.bench_sizes),
                queries.unwrap_or(cfg.harness.bench_queries),
                cfg.harness.bench_pad_noise,
                master,
            )?;
            write_json(&out.join(BENCH_FILE), &report)?;
            for s in &report.sizes {
                println!(
                    "size {:>7}: retrieve p50 {:.4} ms, ann p50 {:.4} ms, exact p50 {:.4} ms, decide p50 {:.4} ms, recall@{} {:.4}",
                    s.size,
                    s.stages.retrieve.p50,
                    s.ann_search.p50,
                    s.exact_search.p50,
                    s.stages.end_to_end.p50,
                    report.k,
                    s.recall_at_k
                );
            }
            if let Some(r) = report.scaling_ratio {
                println!("scaling ratio {r:.3}");
            }
        }
        Command::InspectTrace { file, verify, artifacts, bank, limit } => {
            let traces = read_traces(file)?;
            for (n, t) in traces.iter().take(*limit).enumerate() {
                println!("decision {n}: action {:?} ({:.3} ms)", t.action.to_array(), t.ms);
                for c in &t.cands {
                    println!(
                        "  cand {:>8} sim {:+.4} w {:.4} wf {:.4} dv {:+.3e} {}",
                        c.id,
                        c.sim,
                        c.weight,
                        c.final_weight,
                        c.delta_v,
                        if c.passed { "pass" } else { "reject" }
                    );
                }
                for (k, c) in t.clusters.iter().enumerate() {
                    let mark = if k as i64 == t.win { "*" } else { " " };
                    println!("  {mark}cluster {k}: W {:.4} ids {:?}", c.weight, c.ids);
                }
                if t.expert_fallback() {
                    println!("  expert fallback");
                }
            }
            if traces.len() > *limit {
                println!("... {} more", traces.len() - limit);
            }
            if *verify {
                let dir = artifacts.as_deref().unwrap_or(out);
                let model = load_model(dir)?;
                let b = load_bank(dir, bank.as_deref())?;
                let report = verify_traces(&traces, &b, &model.dynamics(), cfg.controller.margin, cfg.controller.v_max);
                print_json(&report)?;
                if !report.ok() {
                    bail!("{} replay violations", report.violations.len());
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
