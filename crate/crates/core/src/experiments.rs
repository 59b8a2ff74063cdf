//! Evaluation, the alternating co-evolution schedule, ablations and sweeps.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{flat_kb_prompt, AgentMode, HierarchicalAgent, PolicyExecutor};
use crate::env::{Action, MiniDroid, TerminateStatus, DEFAULT_HORIZON};
use crate::error::{Error, Result};
use crate::planner::{lcs_pairs, reference_demo, srlr_loop, summarize, KnowledgeBase, LoopConfig, LoopReport};
use crate::policy::{CopyPrior, PolicyParams};
use crate::reward::RewardConfig;
use crate::rng;
use crate::scalar::mean_std;
use crate::tasks::{camel, demo_timestamp, DemoRef, Demonstration, TaskSuite, TrainingSample, EVAL_SEED_BASE};
use crate::trainer::{
    terminal_reward, train, train_sft, windowed_means, CurriculumConfig, Dataset, StepMetrics, TrainConfig, TrainingReport,
};

/// Evaluation episodes use seeds from here on, clear of the loop seeds.
pub const EVAL_SEED_OFFSET: u64 = 10_000;
/// Fraction of training steps averaged for the terminal reward.
pub const TERMINAL_FRACTION: f64 = 0.2;

/// Every knob of an experiment run. Unknown keys in the file are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Training seeds of multi-seed experiments.
    pub seeds: Vec<u64>,
    /// Self-evolution iterations per task in each round.
    pub n_srlr: usize,
    pub rounds: usize,
    /// Demonstrations recorded per template, at seeds `0..demo_seeds`.
    pub demo_seeds: u64,
    /// Evaluation episodes per template in each seed group.
    pub episodes_per_eval: usize,
    pub eval_groups: usize,
    pub horizon: u32,
    /// Templates to use; empty means the whole suite.
    pub templates: Vec<String>,
    pub train: TrainConfig,
    pub curriculum: CurriculumConfig,
    pub reward: RewardConfig,
    #[serde(rename = "loop")]
    pub loop_cfg: LoopConfig,
    pub prior: CopyPrior,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            seeds: vec![0, 1, 2, 3, 4],
            n_srlr: 3,
            rounds: 4,
            demo_seeds: 3,
            episodes_per_eval: 5,
            eval_groups: 3,
            horizon: DEFAULT_HORIZON,
            templates: Vec::new(),
            train: TrainConfig::default(),
            curriculum: CurriculumConfig::default(),
            reward: RewardConfig::default(),
            loop_cfg: LoopConfig::default(),
            prior: CopyPrior::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Parse {
            offset: e.span().map_or(0, |s| s.start),
            message: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Internal(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_srlr == 0 {
            return Err(Error::Config("n_srlr must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if self.demo_seeds == 0 || self.horizon == 0 {
            return Err(Error::Config("demo_seeds and horizon must be positive".into()));
        }
        self.train.validate()?;
        self.curriculum.validate()?;
        self.reward.validate()?;
        self.loop_cfg.validate()
    }

    pub fn env(&self) -> MiniDroid {
        MiniDroid::builtin().with_horizon(self.horizon)
    }

    pub fn template_ids(&self, suite: &TaskSuite) -> Result<Vec<String>> {
        if self.templates.is_empty() {
            return Ok(suite.ids().into_iter().map(String::from).collect());
        }
        for t in &self.templates {
            suite.template(t)?;
        }
        Ok(self.templates.clone())
    }

    /// Seed groups of the evaluation protocol.
    pub fn eval_seeds(&self) -> Vec<Vec<u64>> {
        (0..self.eval_groups as u64)
            .map(|g| {
                (0..self.episodes_per_eval as u64).map(|i| EVAL_SEED_BASE + EVAL_SEED_OFFSET + g * 1000 + i).collect()
            })
            .collect()
    }

    pub fn init_policy(&self) -> PolicyParams<f64> {
        PolicyParams { prior: self.prior, ..PolicyParams::zeros() }
    }
}

/// Demonstrations, reference plans and training samples shared by the experiments.
#[derive(Clone, Debug)]
pub struct Suite {
    pub suite: TaskSuite,
    pub env: MiniDroid,
    pub templates: Vec<String>,
    pub demos: Vec<Demonstration>,
    pub kbs: BTreeMap<String, KnowledgeBase>,
}

impl Suite {
    pub fn prepare(cfg: &RunConfig) -> Result<Self> {
        let suite = TaskSuite::builtin();
        let env = cfg.env();
        let templates = cfg.template_ids(&suite)?;
        let mut demos = Vec::new();
        for t in &templates {
            for seed in 0..cfg.demo_seeds {
                demos.push(suite.record_demonstration(&env, &suite.instantiate_task(t, seed)?)?);
            }
        }
        let kbs = templates
            .iter()
            .map(|t| {
                let d = reference_demo(&demos, t).ok_or_else(|| Error::Internal(format!("no demonstration for {t}")))?;
                Ok((t.clone(), summarize(d)))
            })
            .collect::<Result<_>>()?;
        Ok(Suite { suite, env, templates, demos, kbs })
    }

    pub fn reference(&self, template: &str) -> Result<&Demonstration> {
        reference_demo(&self.demos, template).ok_or_else(|| Error::UnknownTemplate(template.to_string()))
    }

    /// Samples for the hierarchical executor, with instructions as the planner
    /// renders them from the current plans.
    pub fn hierarchical_dataset(&self, kbs: &BTreeMap<String, KnowledgeBase>) -> Result<Dataset> {
        let mut data = Dataset::from_demos(&self.demos);
        for s in &mut data.samples {
            let demo = &data.demos[&s.demo_ref.demo_id];
            let Some(kb) = kbs.get(&demo.task.template_id) else { continue };
            let mine = summarize(demo).steps;
            let pairs = lcs_pairs(&mine, &kb.steps, |a, b| {
                a.action_template.kind == b.action_template.kind && a.screen == b.screen
            });
            if let Some(&(_, j)) = pairs.iter().find(|(i, _)| *i == s.demo_ref.step) {
                s.instruction = kb.steps[j].render(&demo.task.params, Some(&s.observation))?;
            }
        }
        Ok(data)
    }

    /// Samples for the flat executor: every sub-goal is the task goal, or the
    /// goal followed by the plan text; a closing terminate is appended to
    /// each demonstration that does not end with an answer.
    pub fn flat_dataset(&self, with_kb: bool) -> Result<Dataset> {
        let mut data = Dataset::from_demos(&self.demos);
        let prompt = |demo: &Demonstration, s: &TrainingSample| -> Result<String> {
            if with_kb {
                flat_kb_prompt(&self.kbs[&demo.task.template_id], &demo.task, &s.observation)
            } else {
                Ok(demo.task.goal_text.clone())
            }
        };
        for s in &mut data.samples {
            let demo = &data.demos[&s.demo_ref.demo_id];
            s.instruction = prompt(demo, s)?;
        }
        for demo in &self.demos {
            let last = demo.steps.last().ok_or_else(|| Error::Internal(format!("{} is empty", demo.id())))?;
            if last.action.kind == crate::env::ActionKind::Answer {
                continue;
            }
            let k = demo.len();
            let mut s = TrainingSample {
                sample_id: format!("action_{}_step_{k}_{}", camel(&demo.task.template_id), demo_timestamp(demo)),
                task_goal: demo.task.goal_text.clone(),
                instruction: String::new(),
                observation: last.post_obs.clone(),
                expert_action: Action::terminate(TerminateStatus::Success),
                demo_ref: DemoRef { demo_id: demo.id(), step: k },
            };
            s.instruction = prompt(demo, &s)?;
            data.samples.push(s);
        }
        data.samples.sort_by(|a, b| a.demo_ref.demo_id.cmp(&b.demo_ref.demo_id).then(a.demo_ref.step.cmp(&b.demo_ref.step)));
        Ok(data)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return MeanStd::default();
        }
        let (mean, std) = mean_std(xs);
        MeanStd { mean, std }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SuccessStats {
    pub per_template: BTreeMap<String, MeanStd>,
    pub aggregate: MeanStd,
    /// Suite success rate of each seed group.
    pub group_rates: Vec<f64>,
    pub episodes: usize,
}

/// Success rates over templates and seed groups, mean and std across groups.
pub fn evaluate(agent: &HierarchicalAgent, env: &MiniDroid, suite: &TaskSuite, templates: &[String], seed_groups: &[Vec<u64>]) -> Result<SuccessStats> {
    let mut stats = SuccessStats::default();
    if templates.is_empty() || seed_groups.is_empty() {
        return Ok(stats);
    }
    let mut per: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for group in seed_groups {
        let (mut wins, mut total) = (0usize, 0usize);
        for t in templates {
            let mut w = 0usize;
            for &seed in group {
                let task = suite.instantiate_task(t, seed)?;
                w += agent.run_episode(env, &task, seed)?.success as usize;
            }
            per.entry(t.clone()).or_default().push(w as f64 / group.len().max(1) as f64);
            wins += w;
            total += group.len();
        }
        stats.episodes += total;
        stats.group_rates.push(wins as f64 / total.max(1) as f64);
    }
    stats.per_template = per.into_iter().map(|(k, v)| (k, MeanStd::of(&v))).collect();
    stats.aggregate = MeanStd::of(&stats.group_rates);
    Ok(stats)
}

// ---------------------------------------------------------------------------
// co-evolution

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub success: SuccessStats,
    pub loops: Vec<LoopReport>,
    pub revisions: u32,
    pub terminal_reward: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoevolutionReport {
    pub rounds: Vec<RoundReport>,
    pub agent: HierarchicalAgent,
}

impl CoevolutionReport {
    pub fn success_curve(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.success.aggregate.mean).collect()
    }
}

/// Round 0 evaluates the untrained executor; each later round runs `n_srlr`
/// self-evolution iterations per task with the current executor, then one
/// training phase on samples rendered from the revised plans.
pub fn coevolve(cfg: &RunConfig) -> Result<CoevolutionReport> {
    cfg.validate()?;
    let s = Suite::prepare(cfg)?;
    let groups = cfg.eval_seeds();
    let mut agent = HierarchicalAgent::new(s.kbs.clone(), cfg.init_policy(), AgentMode::Hierarchical);
    agent.reward_cfg = cfg.reward;
    agent.loop_cfg = cfg.loop_cfg;
    agent.train_cfg = cfg.train;
    let phase = LoopConfig { max_iter: cfg.n_srlr, success_thresh: cfg.loop_cfg.success_thresh };
    let mut rounds = vec![RoundReport {
        round: 0,
        success: evaluate(&agent, &s.env, &s.suite, &s.templates, &groups)?,
        loops: Vec::new(),
        revisions: 0,
        terminal_reward: None,
    }];
    for round in 1..=cfg.rounds {
        let exec = PolicyExecutor { params: &agent.policy };
        let mut loops = Vec::new();
        let mut store = agent.kb_store.clone();
        for t in &s.templates {
            let (kb, rep) = srlr_loop(&s.suite, s.reference(t)?, &s.env, &exec, &phase, Some(store[t].clone()))?;
            store.insert(t.clone(), kb);
            loops.push(rep);
        }
        let revisions = store.values().map(|k| k.revision).sum::<u32>() - agent.kb_store.values().map(|k| k.revision).sum::<u32>();
        agent.kb_store = store;
        let data = s.hierarchical_dataset(&agent.kb_store)?;
        let tc = TrainConfig { seed: rng::derive(cfg.seed, &[rng::tag("round"), round as u64]), ..cfg.train };
        let rep = train(&data, agent.policy.clone(), cfg.reward, tc, cfg.curriculum)?;
        agent.policy = rep.params;
        rounds.push(RoundReport {
            round,
            success: evaluate(&agent, &s.env, &s.suite, &s.templates, &groups)?,
            loops,
            revisions,
            terminal_reward: Some(terminal_reward(&rep.metrics, TERMINAL_FRACTION)),
        });
    }
    Ok(CoevolutionReport { rounds, agent })
}

// ---------------------------------------------------------------------------
// ablation

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    NoHierarchy,
    NoHierarchyKb,
    HierarchySft,
    HierarchyVanilla,
    Full,
}

impl Arm {
    pub const ALL: [Arm; 5] = [Arm::NoHierarchy, Arm::NoHierarchyKb, Arm::HierarchySft, Arm::HierarchyVanilla, Arm::Full];

    pub fn as_str(self) -> &'static str {
        match self {
            Arm::NoHierarchy => "no_hierarchy",
            Arm::NoHierarchyKb => "no_hierarchy_kb",
            Arm::HierarchySft => "hierarchy_sft",
            Arm::HierarchyVanilla => "hierarchy_vanilla_grpo",
            Arm::Full => "full",
        }
    }

    pub fn mode(self) -> AgentMode {
        match self {
            Arm::NoHierarchy => AgentMode::Flat,
            Arm::NoHierarchyKb => AgentMode::FlatKb,
            _ => AgentMode::Hierarchical,
        }
    }
}

/// Curriculum of the plain group-relative baseline: no injection, one pool.
pub fn vanilla_curriculum(base: &CurriculumConfig) -> CurriculumConfig {
    CurriculumConfig { temperature: 5.0, balancing: false, injection: false, ..base.with_beta_con(1.0) }
}

/// Work done by one arm, for the fairness check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub updates: u64,
    pub samples_per_update: usize,
    pub group_size: usize,
    pub eval_episodes: usize,
    /// Policy samples drawn, including error-rate estimation passes.
    pub rollouts: u64,
}

impl Budget {
    /// Everything but the rollout count, which differs by design between
    /// supervised and curriculum training.
    pub fn matched(&self, other: &Budget) -> bool {
        (self.updates, self.samples_per_update, self.group_size, self.eval_episodes)
            == (other.updates, other.samples_per_update, other.group_size, other.eval_episodes)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub success: f64,
    pub terminal_reward: f64,
    pub windowed_reward: Vec<f64>,
    pub budget: Budget,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub arm: Arm,
    pub runs: Vec<RunResult>,
    pub median_success: f64,
    pub median_terminal_reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub arms: Vec<ArmResult>,
}

impl AblationTable {
    pub fn arm(&self, arm: Arm) -> Option<&ArmResult> {
        self.arms.iter().find(|a| a.arm == arm)
    }
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Trains one executor for `arm` at training seed `seed`.
pub fn train_arm(s: &Suite, cfg: &RunConfig, arm: Arm, seed: u64) -> Result<TrainingReport<f64>> {
    let tc = TrainConfig { seed, ..cfg.train };
    let init = cfg.init_policy();
    match arm {
        Arm::NoHierarchy => train(&s.flat_dataset(false)?, init, cfg.reward, tc, cfg.curriculum),
        Arm::NoHierarchyKb => train(&s.flat_dataset(true)?, init, cfg.reward, tc, cfg.curriculum),
        Arm::HierarchySft => train_sft(&s.hierarchical_dataset(&s.kbs)?, init, cfg.reward, tc),
        Arm::HierarchyVanilla => train(&s.hierarchical_dataset(&s.kbs)?, init, cfg.reward, tc, vanilla_curriculum(&cfg.curriculum)),
        Arm::Full => train(&s.hierarchical_dataset(&s.kbs)?, init, cfg.reward, tc, cfg.curriculum),
    }
}

fn run_arm(s: &Suite, cfg: &RunConfig, arm: Arm, seed: u64) -> Result<RunResult> {
    let rep = train_arm(s, cfg, arm, seed)?;
    let mut agent = HierarchicalAgent::new(s.kbs.clone(), rep.params.clone(), arm.mode());
    agent.reward_cfg = cfg.reward;
    agent.train_cfg = cfg.train;
    let stats = evaluate(&agent, &s.env, &s.suite, &s.templates, &cfg.eval_seeds())?;
    Ok(RunResult {
        seed,
        success: stats.aggregate.mean,
        terminal_reward: terminal_reward(&rep.metrics, TERMINAL_FRACTION),
        windowed_reward: windowed_means(&rep.metrics, window_of(&rep.metrics)),
        budget: Budget {
            updates: rep.metrics.len() as u64,
            samples_per_update: cfg.train.batch_size(),
            group_size: cfg.train.group_size,
            eval_episodes: stats.episodes,
            rollouts: rep.rollouts,
        },
    })
}

/// Ten windows per run.
pub fn window_of(metrics: &[StepMetrics]) -> usize {
    (metrics.len() / 10).max(1)
}

/// The five configurations, step- and seed-matched, one job per (arm, seed).
pub fn ablate(cfg: &RunConfig) -> Result<AblationTable> {
    cfg.validate()?;
    let s = Suite::prepare(cfg)?;
    let jobs: Vec<(Arm, u64)> = Arm::ALL.iter().flat_map(|&a| cfg.seeds.iter().map(move |&sd| (a, sd))).collect();
    let results: Vec<RunResult> = jobs.par_iter().map(|&(a, sd)| run_arm(&s, cfg, a, sd)).collect::<Result<_>>()?;
    let arms = Arm::ALL
        .iter()
        .map(|&arm| {
            let runs: Vec<RunResult> =
                jobs.iter().zip(&results).filter(|((a, _), _)| *a == arm).map(|(_, r)| r.clone()).collect();
            let succ: Vec<f64> = runs.iter().map(|r| r.success).collect();
            let term: Vec<f64> = runs.iter().map(|r| r.terminal_reward).collect();
            ArmResult { arm, median_success: median(&succ), median_terminal_reward: median(&term), runs }
        })
        .collect();
    Ok(AblationTable { arms })
}

// ---------------------------------------------------------------------------
// sensitivity

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    BetaCon,
    Temperature,
}

impl SweepParam {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "beta_con" => Some(SweepParam::BetaCon),
            "temperature" | "T" => Some(SweepParam::Temperature),
            _ => None,
        }
    }

    pub fn apply(self, base: &CurriculumConfig, value: f64) -> CurriculumConfig {
        match self {
            SweepParam::BetaCon => base.with_beta_con(value),
            SweepParam::Temperature => CurriculumConfig { temperature: value, ..*base },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub terminal_rewards: Vec<f64>,
    pub median_terminal_reward: f64,
    /// Windowed mean reward per training seed.
    pub curves: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub param: SweepParam,
    pub points: Vec<SweepPoint>,
}

/// One full-curriculum executor per value and training seed.
pub fn sweep(cfg: &RunConfig, param: SweepParam, values: &[f64]) -> Result<SweepReport> {
    if values.is_empty() {
        return Err(Error::Usage("sweep needs at least one value".into()));
    }
    cfg.validate()?;
    let s = Suite::prepare(cfg)?;
    let data = s.hierarchical_dataset(&s.kbs)?;
    let jobs: Vec<(f64, u64)> = values.iter().flat_map(|&v| cfg.seeds.iter().map(move |&sd| (v, sd))).collect();
    let reps: Vec<Vec<StepMetrics>> = jobs
        .par_iter()
        .map(|&(v, sd)| {
            let cur = param.apply(&cfg.curriculum, v);
            train(&data, cfg.init_policy(), cfg.reward, TrainConfig { seed: sd, ..cfg.train }, cur).map(|r| r.metrics)
        })
        .collect::<Result<_>>()?;
    let points = values
        .iter()
        .enumerate()
        .map(|(i, &value)| {
            let mine = &reps[i * cfg.seeds.len()..(i + 1) * cfg.seeds.len()];
            let terminal_rewards: Vec<f64> = mine.iter().map(|m| terminal_reward(m, TERMINAL_FRACTION)).collect();
            SweepPoint {
                value,
                median_terminal_reward: median(&terminal_rewards),
                curves: mine.iter().map(|m| windowed_means(m, window_of(m))).collect(),
                terminal_rewards,
            }
        })
        .collect();
    Ok(SweepReport { param, points })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_and_stats() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        let m = MeanStd::of(&[0.5, 1.0, 0.0]);
        assert!((m.mean - 0.5).abs() < 1e-12);
        assert!((m.std - (1.0f64 / 6.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn config_round_trip_and_rejects() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
        let small = RunConfig::from_toml("n_srlr = 2\n[train]\nmax_steps = 10\n").unwrap();
        assert_eq!(small.n_srlr, 2);
        assert_eq!(small.train.max_steps, 10);
        assert_eq!(small.train.group_size, 8);
        assert!(matches!(RunConfig::from_toml("n_srlr = 0"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml("bogus = 1"), Err(Error::Parse { .. })));
    }

    #[test]
    fn readme_lists_the_defaults() {
        let readme = include_str!("../../../README.md");
        let block = readme.split("```toml\n").nth(1).unwrap().split("```").next().unwrap();
        assert_eq!(RunConfig::from_toml(block).unwrap(), RunConfig::default());
    }

    #[test]
    fn empty_template_list_gives_empty_stats() {
        let agent = HierarchicalAgent::new(BTreeMap::new(), PolicyParams::zeros(), AgentMode::Flat);
        let stats = evaluate(&agent, &MiniDroid::builtin(), &TaskSuite::builtin(), &[], &[vec![1]]).unwrap();
        assert_eq!(stats, SuccessStats::default());
    }

    #[test]
    fn flat_dataset_appends_terminal_samples() {
        let cfg = RunConfig { templates: vec!["notes_create".into(), "settings_query".into()], ..RunConfig::default() };
        let s = Suite::prepare(&cfg).unwrap();
        let hier = s.hierarchical_dataset(&s.kbs).unwrap();
        let flat = s.flat_dataset(false).unwrap();
        assert_eq!(flat.samples.len(), hier.samples.len() + 3);
        assert!(flat.samples.iter().all(|x| x.instruction == x.task_goal));
        let with_kb = s.flat_dataset(true).unwrap();
        assert!(with_kb.samples.iter().all(|x| x.instruction.starts_with(&x.task_goal) && x.instruction.contains("1. ")));
    }
}
