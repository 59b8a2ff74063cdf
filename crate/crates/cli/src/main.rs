use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use coevo_core::agent::{replay_trajectory, AgentMode, HierarchicalAgent, PolicyExecutor, TemplateExecutor};
use coevo_core::experiments::{ablate, coevolve, evaluate, sweep, train_arm, Arm, RunConfig, Suite, SweepParam};
use coevo_core::io;
use coevo_core::planner::{corrupt_knowledge, srlr_loop, CorruptionKind, CorruptionScenario, KnowledgeBase};
use coevo_core::trainer::windowed_means;
use coevo_core::{Error, Result};

#[derive(Parser)]
#[command(name = "coevo", version, about = "Planner/executor co-evolution on a synthetic phone")]
struct Cli {
    /// TOML run configuration; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum ArmArg {
    Flat,
    FlatKb,
    Sft,
    Vanilla,
    Full,
}

impl From<ArmArg> for Arm {
    fn from(a: ArmArg) -> Arm {
        match a {
            ArmArg::Flat => Arm::NoHierarchy,
            ArmArg::FlatKb => Arm::NoHierarchyKb,
            ArmArg::Sft => Arm::HierarchySft,
            ArmArg::Vanilla => Arm::HierarchyVanilla,
            ArmArg::Full => Arm::Full,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Hierarchical,
    Flat,
    FlatKb,
}

#[derive(Clone, Copy, ValueEnum)]
enum CorruptArg {
    HardcodedParam,
    MissingStep,
    WrongElement,
    OverAbstraction,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write the built-in environment definition.
    GenEnv,
    /// Record the scripted expert on one task instance.
    RecordDemo { template: String },
    /// Record demonstrations and export single-step training samples.
    Decompose,
    /// Train one executor and write its checkpoint and metrics.
    Train {
        #[arg(long, value_enum, default_value = "full")]
        arm: ArmArg,
    },
    /// Run the self-evolution loop on one template.
    Evolve {
        template: String,
        /// Executor checkpoint; the literal plan executor when absent.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Plant a defect in the initial plan first.
        #[arg(long, value_enum)]
        corrupt: Option<CorruptArg>,
        /// Plan step the defect targets.
        #[arg(long, default_value_t = 0)]
        step: usize,
    },
    /// Alternate plan revision and executor training.
    Coevolve,
    /// Evaluate a checkpoint on the suite.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Knowledge file; fresh summaries when absent.
        #[arg(long)]
        kb: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "hierarchical")]
        mode: ModeArg,
        /// Also write every episode of the first seed group.
        #[arg(long)]
        trajectories: bool,
    },
    /// Train and evaluate the five configurations.
    Ablate,
    /// Train one executor per value of a curriculum knob.
    Sweep {
        #[arg(long, value_parser = ["beta_con", "temperature"])]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Re-run a recorded trajectory and check the outcome is reproduced.
    Replay { trajectory: PathBuf },
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_toml(&std::fs::read_to_string(p)?)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn json<T: serde::Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut b = serde_json::to_vec_pretty(v).map_err(|e| Error::Internal(e.to_string()))?;
    b.push(b'\n');
    Ok(b)
}

fn write(out: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let p = out.join(name);
    io::write_file(&p, bytes)?;
    println!("wrote {}", p.display());
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = load_config(&cli)?;
    let out = cli.out.as_path();
    match cli.cmd {
        Cmd::GenEnv => write(out, "env.json", cfg.env().definition().to_json().as_bytes())?,
        Cmd::RecordDemo { template } => {
            let s = Suite::prepare(&RunConfig { templates: vec![template.clone()], demo_seeds: 1, ..cfg.clone() })?;
            let task = s.suite.instantiate_task(&template, cfg.seed)?;
            let demo = s.suite.record_demonstration(&s.env, &task)?;
            write(out, &format!("demo_{}.json", demo.id()), &json(&demo)?)?;
        }
        Cmd::Decompose => {
            let s = Suite::prepare(&cfg)?;
            let data = s.hierarchical_dataset(&s.kbs)?;
            io::write_samples(out, &data.samples)?;
            write(out, "kb.json", &io::serialize_kb_store(&s.kbs)?)?;
            println!("{} samples from {} demonstrations", data.samples.len(), s.demos.len());
        }
        Cmd::Train { arm } => {
            let s = Suite::prepare(&cfg)?;
            let rep = train_arm(&s, &cfg, arm.into(), cfg.seed)?;
            write(out, "checkpoint.json", &io::serialize_checkpoint(&rep.params)?)?;
            write(out, "metrics.csv", io::metrics_csv(&rep.metrics)?.as_bytes())?;
            write(out, "kb.json", &io::serialize_kb_store(&s.kbs)?)?;
            let w = windowed_means(&rep.metrics, 100);
            println!("windowed mean reward: {}", w.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" "));
        }
        Cmd::Evolve { template, checkpoint, corrupt, step } => {
            let s = Suite::prepare(&RunConfig { templates: vec![template.clone()], ..cfg.clone() })?;
            let mut kb: KnowledgeBase = s.kbs[&template].clone();
            if let Some(c) = corrupt {
                let kind = match c {
                    CorruptArg::HardcodedParam => CorruptionKind::HardcodedParam,
                    CorruptArg::MissingStep => CorruptionKind::MissingStep,
                    CorruptArg::WrongElement => CorruptionKind::WrongElement,
                    CorruptArg::OverAbstraction => CorruptionKind::OverAbstraction,
                };
                kb = corrupt_knowledge(&kb, &CorruptionScenario::new(kind, step), s.env.definition())?;
            }
            let demo = s.reference(&template)?;
            let params = checkpoint.as_deref().map(|p| std::fs::read(p).map_err(Error::from).and_then(|b| io::parse_checkpoint(&b))).transpose()?;
            let (kb, rep) = match &params {
                Some(p) => srlr_loop(&s.suite, demo, &s.env, &PolicyExecutor { params: p }, &cfg.loop_cfg, Some(kb))?,
                None => srlr_loop(&s.suite, demo, &s.env, &TemplateExecutor, &cfg.loop_cfg, Some(kb))?,
            };
            write(out, &format!("kb_{template}.json"), &io::serialize_kb(&kb)?)?;
            write(out, &format!("loop_{template}.csv"), rep.to_csv()?.as_bytes())?;
            println!("converged: {} after {} iterations, {} revisions", rep.converged, rep.iterations.len(), rep.revisions().count());
            return Ok(rep.converged);
        }
        Cmd::Coevolve => {
            let rep = coevolve(&cfg)?;
            write(out, "kb.json", &io::serialize_kb_store(&rep.agent.kb_store)?)?;
            write(out, "checkpoint.json", &io::serialize_checkpoint(&rep.agent.policy)?)?;
            write(out, "coevolution.json", &json(&rep.rounds)?)?;
            for r in &rep.rounds {
                for l in &r.loops {
                    write(out, &format!("loops/round{}_{}.csv", r.round, l.task_template), l.to_csv()?.as_bytes())?;
                }
            }
            write(out, "report.md", io::coevolution_markdown(&rep).as_bytes())?;
        }
        Cmd::Eval { checkpoint, kb, mode, trajectories } => {
            let s = Suite::prepare(&cfg)?;
            let params = io::parse_checkpoint(&std::fs::read(&checkpoint)?)?;
            let kbs: BTreeMap<String, KnowledgeBase> = match &kb {
                Some(p) => io::parse_kb_store(&std::fs::read(p)?)?,
                None => s.kbs.clone(),
            };
            let mode = match mode {
                ModeArg::Hierarchical => AgentMode::Hierarchical,
                ModeArg::Flat => AgentMode::Flat,
                ModeArg::FlatKb => AgentMode::FlatKb,
            };
            let agent = HierarchicalAgent::new(kbs, params, mode);
            let groups = cfg.eval_seeds();
            let stats = evaluate(&agent, &s.env, &s.suite, &s.templates, &groups)?;
            write(out, "eval.json", &json(&stats)?)?;
            if trajectories {
                for t in &s.templates {
                    for &seed in groups.first().into_iter().flatten() {
                        let traj = agent.run_episode(&s.env, &s.suite.instantiate_task(t, seed)?, seed)?;
                        write(out, &format!("trajectories/{t}_{seed}.json"), &io::serialize_trajectory(&traj)?)?;
                    }
                }
            }
            println!("suite success {:.1}% +- {:.1}", 100.0 * stats.aggregate.mean, 100.0 * stats.aggregate.std);
        }
        Cmd::Ablate => {
            let tab = ablate(&cfg)?;
            write(out, "ablation.json", &json(&tab)?)?;
            write(out, "ablation.md", io::ablation_markdown(&tab).as_bytes())?;
        }
        Cmd::Sweep { param, values } => {
            let p = SweepParam::parse(&param).ok_or_else(|| Error::Usage(format!("unknown sweep parameter {param}")))?;
            let rep = sweep(&cfg, p, &values)?;
            write(out, &format!("sweep_{param}.json"), &json(&rep)?)?;
            write(out, &format!("sweep_{param}.md"), io::sweep_markdown(&rep).as_bytes())?;
        }
        Cmd::Replay { trajectory } => {
            let traj = io::parse_trajectory(&std::fs::read(&trajectory)?)?;
            let ok = replay_trajectory(&cfg.env(), &traj)?;
            println!("{}: {} steps, success {}, reproduced {ok}", trajectory.display(), traj.len(), traj.success);
            return Ok(ok);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
