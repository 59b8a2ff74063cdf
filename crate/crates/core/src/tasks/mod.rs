//! Task templates, scripted experts, demonstrations and training samples.

mod templates;

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Action, ActionKind, ElementKind, MiniDroid, Screen, SystemButton, TerminateStatus, UiElement};
use crate::error::{Error, Result};
use crate::rng;

/// Number of seeds per template used for recorded demonstrations.
pub const DEFAULT_DEMO_SEEDS: u64 = 3;
/// Evaluation seeds start here, so they never collide with demonstration seeds.
pub const EVAL_SEED_BASE: u64 = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub fn from_steps(n: usize) -> Self {
        match n {
            0..=3 => Difficulty::Easy,
            4..=5 => Difficulty::Medium,
            _ => Difficulty::Hard,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub template_id: String,
    pub goal_text: String,
    pub params: BTreeMap<String, String>,
    pub difficulty: Difficulty,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug)]
pub enum ParamGen {
    Filename,
    Title,
    Person,
    Phone,
    DeviceName,
    /// Drawn without repeating a value already used by an earlier parameter.
    Choice(&'static [&'static str]),
}

const FILE_WORDS: &[&str] = &["presentation", "lecture", "meeting", "memo", "interview", "podcast", "story", "lesson"];
const TITLE_WORDS: &[&str] = &["Budget", "Reading", "Errands", "Ideas", "Travel plans", "Meeting notes"];
const FIRST: &[&str] = &["Ivy", "Jonas", "Kira", "Luca", "Mina", "Nils", "Omar", "Priya"];
const LAST: &[&str] = &["Adams", "Berg", "Costa", "Diaz", "Engel", "Fox"];
const DEVICE_WORDS: &[&str] = &["Falcon", "Harbor", "Juniper", "Nimbus", "Quartz", "Tundra"];
const ALNUM: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";

impl ParamGen {
    fn draw(self, r: &mut impl Rng, used: &[String]) -> String {
        let pick = |r: &mut _, xs: &[&str]| -> String { xs[rand::Rng::gen_range(r, 0..xs.len())].to_string() };
        loop {
            let v = match self {
                ParamGen::Filename => {
                    let tail: String = (0..4).map(|_| ALNUM[r.gen_range(0..ALNUM.len())] as char).collect();
                    format!("{}_{tail}.m4a", pick(r, FILE_WORDS))
                }
                ParamGen::Title => format!("{} {}", pick(r, TITLE_WORDS), r.gen_range(10..100)),
                ParamGen::Person => format!("{} {}", pick(r, FIRST), pick(r, LAST)),
                ParamGen::Phone => format!("555-{:04}", r.gen_range(0..10_000)),
                ParamGen::DeviceName => format!("{}-{}", pick(r, DEVICE_WORDS), r.gen_range(10..100)),
                ParamGen::Choice(xs) => pick(r, xs),
            };
            if !used.contains(&v) {
                return v;
            }
        }
    }
}

/// One scripted expert move. Element ids refer to the current screen;
/// `*Label` variants target the element labelled with a parameter's value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExpertAction {
    SwipeUp,
    Tap(&'static str),
    TapLabel(&'static str),
    LongPress(&'static str),
    LongPressLabel(&'static str),
    Type(&'static str),
    Back,
    /// Tap the toggle labelled with the parameter unless it is already on.
    EnsureOn(&'static str),
    /// Answer with state `key` of the element labelled with the parameter.
    AnswerState(&'static str, &'static str),
}

#[derive(Clone, Debug)]
pub struct TaskTemplate {
    pub id: &'static str,
    pub app: &'static str,
    pub goal: &'static str,
    pub params: Vec<(&'static str, ParamGen)>,
    pub script: Vec<ExpertAction>,
}

impl TaskTemplate {
    pub fn difficulty(&self) -> Difficulty {
        Difficulty::from_steps(self.script.len())
    }

    /// `recorder_save` -> `RecorderSave`
    pub fn camel_id(&self) -> String {
        camel(self.id)
    }
}

pub fn camel(id: &str) -> String {
    id.split('_')
        .map(|w| {
            let mut c = w.chars();
            c.next().map(|f| f.to_ascii_uppercase().to_string() + c.as_str()).unwrap_or_default()
        })
        .collect()
}

/// Immutable registry of task templates.
#[derive(Clone, Debug)]
pub struct TaskSuite {
    templates: Vec<TaskTemplate>,
}

impl Default for TaskSuite {
    fn default() -> Self {
        TaskSuite::builtin()
    }
}

impl TaskSuite {
    pub fn builtin() -> Self {
        TaskSuite { templates: templates::builtin() }
    }

    pub fn templates(&self) -> &[TaskTemplate] {
        &self.templates
    }

    pub fn ids(&self) -> Vec<&'static str> {
        self.templates.iter().map(|t| t.id).collect()
    }

    pub fn template(&self, id: &str) -> Result<&TaskTemplate> {
        self.templates.iter().find(|t| t.id == id).ok_or_else(|| Error::UnknownTemplate(id.to_string()))
    }

    pub fn instantiate_task(&self, template_id: &str, seed: u64) -> Result<TaskSpec> {
        let t = self.template(template_id)?;
        let mut r = rng::stream(seed, &[rng::tag("task"), rng::tag(t.id)]);
        let mut params = BTreeMap::new();
        let mut used = Vec::new();
        for (name, gen) in &t.params {
            let v = gen.draw(&mut r, &used);
            used.push(v.clone());
            params.insert(name.to_string(), v);
        }
        let goal_text = crate::env::template::render(t.goal, |k| params.get(k).cloned())
            .map_err(|e| Error::Internal(format!("{}: {e}", t.id)))?;
        Ok(TaskSpec { template_id: t.id.to_string(), goal_text, params, difficulty: t.difficulty(), seed })
    }

    pub fn record_demonstration(&self, env: &MiniDroid, task: &TaskSpec) -> Result<Demonstration> {
        let t = self.template(&task.template_id)?;
        let fail = |step: usize, reason: String| Error::ExpertFailed { template: t.id.to_string(), step, reason };
        let mut state = env.reset(task, task.seed)?;
        let mut steps = Vec::new();
        for (i, e) in t.script.iter().enumerate() {
            let obs = env.observe(&state);
            let Some((action, instruction)) = expert_move(*e, &obs, task).map_err(|r| fail(i, r))? else {
                continue;
            };
            let (next, out) = env.step(&state, &action).map_err(|err| fail(i, err.to_string()))?;
            if out.terminal && action.kind != ActionKind::Answer {
                return Err(fail(i, "episode ended early".into()));
            }
            steps.push(DemoStep { pre_obs: obs, post_obs: out.observation, instruction, action });
            state = next;
        }
        let demo = Demonstration { task: task.clone(), steps };
        if demo.steps.is_empty() {
            return Err(fail(0, "empty demonstration".into()));
        }
        if !replay_demo(env, &demo)? {
            return Err(fail(demo.steps.len() - 1, "did not reach success".into()));
        }
        Ok(demo)
    }

    /// Demonstrations for every template at seeds `0..per_template`.
    pub fn record_all(&self, env: &MiniDroid, per_template: u64) -> Result<Vec<Demonstration>> {
        let mut out = Vec::new();
        for t in &self.templates {
            for seed in 0..per_template {
                let task = self.instantiate_task(t.id, seed)?;
                out.push(self.record_demonstration(env, &task)?);
            }
        }
        Ok(out)
    }
}

fn by_label<'a>(obs: &'a Screen, task: &TaskSpec, param: &str) -> std::result::Result<&'a UiElement, String> {
    let v = task.params.get(param).ok_or_else(|| format!("missing param {param}"))?;
    obs.element_by_label(v).ok_or_else(|| format!("no element labelled {v:?} on {}", obs.screen_id))
}

fn by_id<'a>(obs: &'a Screen, id: &str) -> std::result::Result<&'a UiElement, String> {
    obs.element(id).ok_or_else(|| format!("no element {id} on {}", obs.screen_id))
}

pub const SWIPE_FROM: (i32, i32) = (585, 1850);
pub const SWIPE_TO: (i32, i32) = (585, 850);

/// Instruction text describing `action` on `obs`, in the style the planner emits.
pub fn describe(action: &Action, obs: &Screen) -> String {
    let target = action.coordinate.and_then(|p| obs.element_at(p));
    match (action.kind, target) {
        (ActionKind::Swipe, _) => {
            let (a, b) = (action.coordinate.unwrap_or_default(), action.coordinate2.unwrap_or_default());
            if b.y < a.y { "Swipe up on the screen to reveal more apps".into() } else { "Swipe down on the screen".into() }
        }
        (ActionKind::Click, Some(e)) => tap_phrase(e),
        (ActionKind::LongPress, Some(e)) if e.element_id == "backspace" => {
            "Long press the \"Backspace\" icon to delete the content in the input field".into()
        }
        (ActionKind::LongPress, Some(e)) => format!("Long press the \"{}\" {}", e.label, e.kind.noun()),
        (ActionKind::Click, None) | (ActionKind::LongPress, None) => "Tap the screen".into(),
        (ActionKind::Type, _) => format!("Type the text \"{}\"", action.text.as_deref().unwrap_or("")),
        (ActionKind::SystemButton, _) => match action.button {
            Some(SystemButton::Home) => "Press the system home button".into(),
            _ => "Press the system back button".into(),
        },
        (ActionKind::Answer, _) => format!("Answer \"{}\"", action.text.as_deref().unwrap_or("")),
        (ActionKind::Terminate, _) => "Finish the task".into(),
    }
}

fn tap_phrase(e: &UiElement) -> String {
    if e.kind == ElementKind::Toggle {
        format!("Tap the \"{}\" switch", e.label)
    } else {
        format!("Tap the \"{}\" {}", e.label, e.kind.noun())
    }
}

fn expert_move(
    e: ExpertAction,
    obs: &Screen,
    task: &TaskSpec,
) -> std::result::Result<Option<(Action, String)>, String> {
    let action = match e {
        ExpertAction::SwipeUp => Action::swipe(SWIPE_FROM.into(), SWIPE_TO.into()),
        ExpertAction::Tap(id) => Action::click(by_id(obs, id)?.bbox.anchor()),
        ExpertAction::TapLabel(p) => Action::click(by_label(obs, task, p)?.bbox.anchor()),
        ExpertAction::LongPress(id) => Action::long_press(by_id(obs, id)?.bbox.anchor()),
        ExpertAction::LongPressLabel(p) => Action::long_press(by_label(obs, task, p)?.bbox.anchor()),
        ExpertAction::Type(p) => {
            Action::type_text(task.params.get(p).ok_or_else(|| format!("missing param {p}"))?.clone())
        }
        ExpertAction::Back => Action::system(SystemButton::Back),
        ExpertAction::EnsureOn(p) => {
            let el = by_label(obs, task, p)?;
            if el.state.get("checked").map(String::as_str) == Some("on") {
                return Ok(None);
            }
            Action::click(el.bbox.anchor())
        }
        ExpertAction::AnswerState(p, key) => {
            let el = by_label(obs, task, p)?;
            Action::answer(el.state.get(key).cloned().ok_or_else(|| format!("{} has no {key}", el.element_id))?)
        }
    };
    let text = describe(&action, obs);
    Ok(Some((action, text)))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemoStep {
    pub pre_obs: Screen,
    pub post_obs: Screen,
    pub instruction: String,
    pub action: Action,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    pub task: TaskSpec,
    pub steps: Vec<DemoStep>,
}

impl Demonstration {
    pub fn id(&self) -> String {
        format!("{}_{}", self.task.template_id, self.task.seed)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Replays the demonstration from its recorded seed and reports task success.
/// Non-answer demonstrations get a final `terminate(success)`.
pub fn replay_demo(env: &MiniDroid, demo: &Demonstration) -> Result<bool> {
    let mut state = env.reset(&demo.task, demo.task.seed)?;
    for s in &demo.steps {
        if state.done {
            return Ok(false);
        }
        state = env.step(&state, &s.action)?.0;
    }
    if !state.done {
        state = env.step(&state, &Action::terminate(TerminateStatus::Success))?.0;
    }
    env.check_success(&state, &demo.task)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemoRef {
    pub demo_id: String,
    pub step: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub sample_id: String,
    pub task_goal: String,
    pub instruction: String,
    pub observation: Screen,
    pub expert_action: Action,
    pub demo_ref: DemoRef,
}

/// Deterministic stand-in for a recording timestamp.
pub fn demo_timestamp(demo: &Demonstration) -> u64 {
    1_700_000_000 + rng::derive(demo.task.seed, &[rng::tag(&demo.task.template_id)]) % 100_000_000
}

/// One sample per step whose action changed the observation or ended the episode.
pub fn decompose_demo(demo: &Demonstration) -> Vec<TrainingSample> {
    let ts = demo_timestamp(demo);
    let camel_id = camel(&demo.task.template_id);
    demo.steps
        .iter()
        .enumerate()
        .filter(|(_, s)| s.pre_obs != s.post_obs || s.action.kind.is_terminal())
        .map(|(k, s)| TrainingSample {
            sample_id: format!("action_{camel_id}_step_{k}_{ts}"),
            task_goal: demo.task.goal_text.clone(),
            instruction: s.instruction.clone(),
            observation: s.pre_obs.clone(),
            expert_action: s.action.clone(),
            demo_ref: DemoRef { demo_id: demo.id(), step: k },
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn camel_ids() {
        assert_eq!(camel("recorder_save"), "RecorderSave");
        assert_eq!(camel("messages_query_unread"), "MessagesQueryUnread");
    }

    #[test]
    fn instantiate_is_deterministic_and_inlines() {
        let suite = TaskSuite::builtin();
        let a = suite.instantiate_task("recorder_save", 1).unwrap();
        assert_eq!(a, suite.instantiate_task("recorder_save", 1).unwrap());
        let b = suite.instantiate_task("recorder_save", 2).unwrap();
        assert_ne!(a.params["filename"], b.params["filename"]);
        assert!(a.goal_text.contains(&a.params["filename"]));
        assert!(matches!(suite.instantiate_task("nope", 1), Err(Error::UnknownTemplate(_))));
    }

    #[test]
    fn distinct_choices() {
        let suite = TaskSuite::builtin();
        for seed in 0..50 {
            let t = suite.instantiate_task("settings_enable_two", seed).unwrap();
            assert_ne!(t.params["setting"], t.params["setting2"]);
        }
    }

    #[test]
    fn recorder_demo_ends_with_save() {
        let suite = TaskSuite::builtin();
        let env = MiniDroid::builtin();
        let task = suite.instantiate_task("recorder_save", 0).unwrap();
        let demo = suite.record_demonstration(&env, &task).unwrap();
        assert_eq!(demo.len(), 7);
        let last = demo.steps.last().unwrap();
        assert_eq!(last.pre_obs.element_at(last.action.coordinate.unwrap()).unwrap().label, "Save");
        assert_eq!(decompose_demo(&demo).len(), 7);
    }

    #[test]
    fn every_template_replays() {
        let suite = TaskSuite::builtin();
        let env = MiniDroid::builtin();
        assert!(suite.templates().len() >= 20);
        for t in suite.templates() {
            for seed in [0, 1, 2, 10_000, 10_001] {
                let task = suite.instantiate_task(t.id, seed).unwrap();
                let demo = suite.record_demonstration(&env, &task).unwrap();
                assert!(replay_demo(&env, &demo).unwrap(), "{} seed {seed}", t.id);
            }
        }
    }
}
