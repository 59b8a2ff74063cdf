//! Planner/executor composition and episode execution.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::env::{Action, MiniDroid, Screen, TerminateStatus};
use crate::error::{Error, Result};
use crate::planner::{next_subgoal, KnowledgeBase, LoopConfig, PlanStep, SubGoal};
use crate::policy::tokens::quoted_spans;
use crate::policy::{Context, PolicyParams};
use crate::reward::{RewardBreakdown, RewardConfig};
use crate::scalar::Scalar;
use crate::tasks::TaskSpec;
use crate::trainer::TrainConfig;

/// Sub-goal text of the planner's closing terminate.
pub const FINISH: &str = "Finish the task";

/// What the executor sees at one step.
#[derive(Clone, Copy, Debug)]
pub struct ExecRequest<'a> {
    pub observation: &'a Screen,
    pub task: &'a TaskSpec,
    pub sub_goal: &'a str,
    /// Plan step behind the sub-goal, when a planner is active.
    pub step: Option<&'a PlanStep>,
}

/// Low-level policy: one action per request, `None` for no well-formed action.
pub trait Executor {
    fn act(&self, req: &ExecRequest<'_>) -> Result<Option<Action>>;
}

/// Executes the plan step's action template literally, falling back to
/// tapping an element whose label is quoted in the sub-goal.
#[derive(Clone, Copy, Debug, Default)]
pub struct TemplateExecutor;

impl Executor for TemplateExecutor {
    fn act(&self, req: &ExecRequest<'_>) -> Result<Option<Action>> {
        if let Some(step) = req.step {
            if let Some(a) = step.ground(&req.task.params, req.observation)? {
                return Ok(Some(a));
            }
        }
        Ok(quoted_spans(req.sub_goal)
            .iter()
            .find_map(|s| req.observation.element_by_label(s))
            .map(|e| Action::click(e.bbox.anchor())))
    }
}

/// Greedy decoding of a learned policy.
#[derive(Clone, Copy, Debug)]
pub struct PolicyExecutor<'a, S> {
    pub params: &'a PolicyParams<S>,
}

impl<S: Scalar> Executor for PolicyExecutor<'_, S> {
    fn act(&self, req: &ExecRequest<'_>) -> Result<Option<Action>> {
        let ctx = Context {
            observation: req.observation.clone(),
            task_goal: req.task.goal_text.clone(),
            sub_goal: req.sub_goal.to_string(),
            injected_prefix: Vec::new(),
        };
        Ok(self.params.act(&ctx).1)
    }
}

/// How sub-goals are produced.
#[derive(Clone, Copy, Debug)]
pub enum PlannerMode<'a> {
    Hierarchical(&'a KnowledgeBase),
    /// The executor gets the task goal.
    Flat,
    /// The executor gets the task goal followed by the whole plan as text.
    FlatKb(&'a KnowledgeBase),
}

/// Prompt of the flat agent with knowledge.
pub fn flat_kb_prompt(kb: &KnowledgeBase, task: &TaskSpec, obs: &Screen) -> Result<String> {
    Ok(format!("{} {}", task.goal_text, kb.describe(&task.params, Some(obs))?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajStep {
    pub observation: Screen,
    pub post: Screen,
    pub sub_goal: String,
    pub plan_index: Option<usize>,
    /// `None` when the executor produced nothing; the device then idles.
    pub action: Option<Action>,
    pub transitioned: bool,
    #[serde(default)]
    pub reward: Option<RewardBreakdown>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task: TaskSpec,
    pub steps: Vec<TrajStep>,
    pub success: bool,
    pub seed: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Plays one episode from `reset(task, seed)` until the device reports done.
pub fn run_episode(
    env: &MiniDroid,
    mode: PlannerMode<'_>,
    executor: &dyn Executor,
    task: &TaskSpec,
    seed: u64,
) -> Result<Trajectory> {
    let mut state = env.reset(task, seed)?;
    let mut steps: Vec<TrajStep> = Vec::new();
    while !state.done {
        let obs = env.observe(&state);
        let (sub_goal, plan_index, step) = match mode {
            PlannerMode::Hierarchical(kb) => match next_subgoal(kb, &obs, &steps, task)? {
                SubGoal::Step { instruction, index } => (instruction, Some(index), Some(&kb.steps[index])),
                SubGoal::Done => (FINISH.to_string(), None, None),
            },
            PlannerMode::Flat => (task.goal_text.clone(), None, None),
            PlannerMode::FlatKb(kb) => (flat_kb_prompt(kb, task, &obs)?, None, None),
        };
        let action = if matches!(mode, PlannerMode::Hierarchical(_)) && plan_index.is_none() {
            Some(Action::terminate(TerminateStatus::Success))
        } else {
            executor.act(&ExecRequest { observation: &obs, task, sub_goal: &sub_goal, step })?
        };
        let (next, out) = match &action {
            Some(a) => env.step(&state, a)?,
            None => env.idle(&state)?,
        };
        steps.push(TrajStep {
            observation: obs,
            post: out.observation,
            sub_goal,
            plan_index,
            action,
            transitioned: out.transitioned,
            reward: None,
        });
        state = next;
    }
    let success = env.check_success(&state, task)?;
    Ok(Trajectory { task: task.clone(), steps, success, seed })
}

/// Replays the recorded actions and checks the outcome is reproduced.
pub fn replay_trajectory(env: &MiniDroid, traj: &Trajectory) -> Result<bool> {
    let mut state = env.reset(&traj.task, traj.seed)?;
    for s in &traj.steps {
        if state.done || env.observe(&state) != s.observation {
            return Ok(false);
        }
        let (next, out) = match &s.action {
            Some(a) => env.step(&state, a)?,
            None => env.idle(&state)?,
        };
        if out.observation != s.post {
            return Ok(false);
        }
        state = next;
    }
    Ok(state.done && env.check_success(&state, &traj.task)? == traj.success)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentMode {
    Hierarchical,
    Flat,
    FlatKb,
}

/// Planner knowledge plus executor parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierarchicalAgent {
    pub kb_store: BTreeMap<String, KnowledgeBase>,
    pub policy: PolicyParams<f64>,
    pub mode: AgentMode,
    pub reward_cfg: RewardConfig,
    pub loop_cfg: LoopConfig,
    pub train_cfg: TrainConfig,
}

impl HierarchicalAgent {
    pub fn new(kb_store: BTreeMap<String, KnowledgeBase>, policy: PolicyParams<f64>, mode: AgentMode) -> Self {
        HierarchicalAgent {
            kb_store,
            policy,
            mode,
            reward_cfg: RewardConfig::default(),
            loop_cfg: LoopConfig::default(),
            train_cfg: TrainConfig::default(),
        }
    }

    fn kb(&self, template: &str) -> Result<&KnowledgeBase> {
        self.kb_store
            .get(template)
            .ok_or_else(|| Error::Usage(format!("no knowledge base for template {template}")))
    }

    pub fn planner_mode(&self, template: &str) -> Result<PlannerMode<'_>> {
        Ok(match self.mode {
            AgentMode::Hierarchical => PlannerMode::Hierarchical(self.kb(template)?),
            AgentMode::Flat => PlannerMode::Flat,
            AgentMode::FlatKb => PlannerMode::FlatKb(self.kb(template)?),
        })
    }

    pub fn run_episode(&self, env: &MiniDroid, task: &TaskSpec, seed: u64) -> Result<Trajectory> {
        let exec = PolicyExecutor { params: &self.policy };
        run_episode(env, self.planner_mode(&task.template_id)?, &exec, task, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::summarize;
    use crate::tasks::TaskSuite;

    #[test]
    fn template_executor_solves_every_template() {
        let suite = TaskSuite::builtin();
        let env = MiniDroid::builtin();
        for id in suite.ids() {
            let demo = suite.record_demonstration(&env, &suite.instantiate_task(id, 0).unwrap()).unwrap();
            let kb = summarize(&demo);
            let task = suite.instantiate_task(id, 0).unwrap();
            let traj = run_episode(&env, PlannerMode::Hierarchical(&kb), &TemplateExecutor, &task, 0).unwrap();
            assert!(traj.success, "{id}");
            assert!(replay_trajectory(&env, &traj).unwrap());
            let again = run_episode(&env, PlannerMode::Hierarchical(&kb), &TemplateExecutor, &task, 0).unwrap();
            assert_eq!(traj, again);
        }
    }

    #[test]
    fn flat_untrained_agent_rarely_succeeds() {
        let suite = TaskSuite::builtin();
        let env = MiniDroid::builtin();
        let agent = HierarchicalAgent::new(BTreeMap::new(), PolicyParams::zeros(), AgentMode::Flat);
        let task = suite.instantiate_task("recorder_save", 10_000).unwrap();
        let traj = agent.run_episode(&env, &task, 10_000).unwrap();
        assert!(!traj.success);
        assert_eq!(traj.len() as u32, env.horizon().min(traj.len() as u32));
    }
}
