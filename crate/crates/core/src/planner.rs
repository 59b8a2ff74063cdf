//! High-level planner: a structured task knowledge base, sub-goal emission and
//! the summarize / locate / reflect / revise self-evolution loop.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::agent::{run_episode, Executor, PlannerMode, TrajStep, Trajectory};
use crate::env::{Action, ActionKind, EnvDefinition, MiniDroid, Point, Screen, SystemButton, TerminateStatus, UiElement};
use crate::error::{Error, Result};
use crate::tasks::{Demonstration, TaskSpec, TaskSuite, EVAL_SEED_BASE};

/// Marker prefixed to an instruction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Emphasis {
    Important,
    Critical,
    Note,
    PayAttention,
}

impl Emphasis {
    pub fn marker(self) -> &'static str {
        match self {
            Emphasis::Important => "IMPORTANT:",
            Emphasis::Critical => "CRITICAL:",
            Emphasis::Note => "NOTE:",
            Emphasis::PayAttention => "PAY ATTENTION:",
        }
    }
}

/// Symbolic element target, grounded to a coordinate at plan time.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "by", content = "value")]
pub enum Target {
    Element(String),
    /// Label template, may carry placeholders.
    Label(String),
    Point(Point),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionTemplate {
    pub kind: ActionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Target>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target2: Option<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub button: Option<SystemButton>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<TerminateStatus>,
}

impl ActionTemplate {
    fn needs_target(&self) -> bool {
        self.kind.coordinate_arity() > 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredicateKind {
    ScreenBecomes,
    ElementExists,
    ElementTextEquals,
    ElementTextContains,
    StateFlag,
}

/// Expected outcome of a plan step.
///
/// Element references are an element id or `label=<template>`. The pseudo
/// reference `@answer` in a `state_flag` matches the text of an answer action.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OutcomePredicate {
    pub kind: PredicateKind,
    pub args: Vec<String>,
}

pub const ANSWER_REF: &str = "@answer";

impl OutcomePredicate {
    pub fn new(kind: PredicateKind, args: &[&str]) -> Self {
        OutcomePredicate { kind, args: args.iter().map(|s| s.to_string()).collect() }
    }

    fn arity(&self) -> usize {
        match self.kind {
            PredicateKind::ScreenBecomes | PredicateKind::ElementExists => 1,
            PredicateKind::ElementTextEquals | PredicateKind::ElementTextContains => 2,
            PredicateKind::StateFlag => 3,
        }
    }

    /// Evaluates the predicate on `screen`; state placeholders resolve against `pre`.
    pub fn holds(&self, params: &BTreeMap<String, String>, screen: &Screen, pre: Option<&Screen>) -> Result<bool> {
        if self.args.len() != self.arity() {
            return Err(Error::Validation(format!("{:?} takes {} arguments", self.kind, self.arity())));
        }
        if self.args[0] == ANSWER_REF {
            return Ok(false);
        }
        let value = |i: usize| -> Result<Option<String>> { resolve(&self.args[i], params, pre) };
        if self.kind == PredicateKind::ScreenBecomes {
            return Ok(screen.screen_id == self.args[0]);
        }
        let Some(el) = find_ref(&self.args[0], params, screen)? else {
            return Ok(false);
        };
        Ok(match self.kind {
            PredicateKind::ElementExists => true,
            PredicateKind::ElementTextEquals => value(1)?.is_some_and(|v| el.text() == Some(v.as_str())),
            PredicateKind::ElementTextContains => value(1)?.is_some_and(|v| el.text().is_some_and(|t| t.contains(&v))),
            PredicateKind::StateFlag => {
                value(2)?.is_some_and(|v| el.state.get(&self.args[1]).map(String::as_str) == Some(v.as_str()))
            }
            PredicateKind::ScreenBecomes => unreachable!(),
        })
    }

    /// What the predicate looks at, as found on `screen`.
    fn observed(&self, params: &BTreeMap<String, String>, screen: &Screen, action: Option<&Action>) -> String {
        if self.args.first().map(String::as_str) == Some(ANSWER_REF) {
            return format!("answer {:?}", action.and_then(|a| a.text.as_deref()).unwrap_or(""));
        }
        if self.kind == PredicateKind::ScreenBecomes {
            return format!("screen {}", screen.screen_id);
        }
        match find_ref(&self.args[0], params, screen) {
            Ok(Some(el)) => match self.kind {
                PredicateKind::StateFlag => {
                    format!("{} {}={:?}", el.element_id, self.args[1], el.state.get(&self.args[1]).cloned().unwrap_or_default())
                }
                _ => format!("{} text={:?}", el.element_id, el.text().unwrap_or("")),
            },
            _ => format!("{} absent on {}", self.args[0], screen.screen_id),
        }
    }
}

impl fmt::Display for OutcomePredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = serde_json::to_value(self.kind).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
        write!(f, "{kind}({})", self.args.join(", "))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    pub instruction: String,
    /// Screen the step is expected to start on.
    pub screen: String,
    pub action_template: ActionTemplate,
    #[serde(default)]
    pub expected_outcome: Option<OutcomePredicate>,
    #[serde(default)]
    pub emphasis: Option<Emphasis>,
}

impl PlanStep {
    /// Highlighted steps are never skipped as already satisfied.
    pub fn mandatory(&self) -> bool {
        self.emphasis == Some(Emphasis::Critical)
    }

    fn key(&self) -> (ActionKind, &str) {
        (self.action_template.kind, self.screen.as_str())
    }

    fn emphasized(mut self, e: Emphasis) -> Self {
        self.emphasis = Some(e);
        self
    }

    fn must(mut self) -> Self {
        if !self.instruction.starts_with("You MUST") {
            let mut chars = self.instruction.chars();
            let first = chars.next().map(|c| c.to_lowercase().to_string()).unwrap_or_default();
            self.instruction = format!("You MUST {first}{}", chars.as_str());
        }
        self
    }

    /// Instruction with placeholders resolved and the emphasis marker prefixed.
    pub fn render(&self, params: &BTreeMap<String, String>, obs: Option<&Screen>) -> Result<String> {
        let text = resolve_lenient(&self.instruction, params, obs)?;
        Ok(match self.emphasis {
            Some(e) => format!("{} {text}", e.marker()),
            None => text,
        })
    }

    /// Grounds the template to a concrete action on `obs`.
    pub fn ground(&self, params: &BTreeMap<String, String>, obs: &Screen) -> Result<Option<Action>> {
        let t = &self.action_template;
        let point = match &t.target {
            Some(target) => match ground_target(target, params, obs)? {
                Some(p) => Some(p),
                None => return Ok(None),
            },
            None if t.needs_target() => return Ok(None),
            None => None,
        };
        let text = match &t.text {
            Some(tmpl) => match resolve(tmpl, params, Some(obs))? {
                Some(s) => Some(s),
                None => return Ok(None),
            },
            None => None,
        };
        let action = Action {
            kind: t.kind,
            coordinate: point,
            coordinate2: t.target2,
            text,
            button: t.button,
            status: t.status,
        };
        Ok(action.validate(obs.width, obs.height).is_ok().then_some(action))
    }
}

fn ground_target(target: &Target, params: &BTreeMap<String, String>, obs: &Screen) -> Result<Option<Point>> {
    Ok(match target {
        Target::Point(p) => Some(*p),
        Target::Element(id) => obs.element(id).map(|e| e.bbox.anchor()),
        Target::Label(tmpl) => resolve(tmpl, params, Some(obs))?
            .and_then(|l| obs.element_by_label(&l).map(|e| e.bbox.anchor())),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureCategory {
    MissingStep,
    WrongOrder,
    WrongElement,
    WrongLiteral,
    MissingPrecondition,
    Unexplained,
}

impl FailureCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureCategory::MissingStep => "missing_step",
            FailureCategory::WrongOrder => "wrong_order",
            FailureCategory::WrongElement => "wrong_element",
            FailureCategory::WrongLiteral => "wrong_literal",
            FailureCategory::MissingPrecondition => "missing_precondition",
            FailureCategory::Unexplained => "unexplained",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub t_star: Option<usize>,
    /// Plan position the failure is attributed to; may equal the plan length.
    pub plan_index: usize,
    /// Step of the reference plan summarized from the demonstration.
    pub reference_index: Option<usize>,
    pub observed: String,
    pub expected: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureCase {
    pub category: FailureCategory,
    pub evidence: Option<Evidence>,
    pub message: String,
}

impl FailureCase {
    fn unexplained(message: impl Into<String>, evidence: Option<Evidence>) -> Self {
        FailureCase { category: FailureCategory::Unexplained, evidence, message: message.into() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "op", content = "index")]
pub enum Operator {
    Add(usize),
    Delete(usize),
    Update(usize),
    Highlight(usize),
}

impl Operator {
    pub fn name(self) -> &'static str {
        match self {
            Operator::Add(_) => "add",
            Operator::Delete(_) => "delete",
            Operator::Update(_) => "update",
            Operator::Highlight(_) => "highlight",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Operator::Add(i) | Operator::Delete(i) | Operator::Update(i) | Operator::Highlight(i) => i,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevisionRecord {
    pub revision: u32,
    pub operator: Operator,
    pub category: FailureCategory,
    pub t_star: Option<usize>,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    pub task_template: String,
    pub steps: Vec<PlanStep>,
    pub revision: u32,
    pub provenance: Vec<RevisionRecord>,
    /// Parameters of the demonstration the plan was summarized from.
    #[serde(default)]
    pub demo_params: BTreeMap<String, String>,
}

impl KnowledgeBase {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::Validation(format!("knowledge base for {} has no steps", self.task_template)));
        }
        if self.provenance.len() != self.revision as usize {
            return Err(Error::Validation(format!(
                "revision {} with {} provenance records",
                self.revision,
                self.provenance.len()
            )));
        }
        Ok(())
    }

    /// Plan rendered as text, for the flat agent with knowledge.
    pub fn describe(&self, params: &BTreeMap<String, String>, obs: Option<&Screen>) -> Result<String> {
        let steps: Result<Vec<String>> =
            self.steps.iter().enumerate().map(|(i, s)| Ok(format!("{}. {}", i + 1, s.render(params, obs)?))).collect();
        Ok(steps?.join(" "))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopConfig {
    pub max_iter: usize,
    pub success_thresh: usize,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig { max_iter: 10, success_thresh: 3 }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 || self.success_thresh == 0 {
            return Err(Error::Config("max_iter and success_thresh must be at least 1".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// placeholders

/// Parses `KEY` or `KEY.state` from the inside of a `[...]` token.
fn parse_placeholder(inner: &str) -> Option<(String, Option<&str>)> {
    let (key, state) = match inner.split_once('.') {
        Some((k, s)) => (k, Some(s)),
        None => (inner, None),
    };
    let key_ok = !key.is_empty()
        && key.starts_with(|c: char| c.is_ascii_uppercase())
        && key.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_');
    let state_ok = state.is_none_or(|s| !s.is_empty() && s.chars().all(|c| c.is_ascii_lowercase() || c == '_'));
    (key_ok && state_ok).then(|| (key.to_ascii_lowercase(), state))
}

/// Placeholder tokens in `text`, without brackets.
pub fn placeholders(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find('[') {
        let after = &rest[start + 1..];
        let Some(end) = after.find(']') else { break };
        if parse_placeholder(&after[..end]).is_some() {
            out.push(&after[..end]);
        }
        rest = &after[end + 1..];
    }
    out
}

/// Resolves `[KEY]` against `params` and `[KEY.state]` against the element of
/// `obs` labelled with the parameter. `Ok(None)` when a state is not observable.
/// A missing parameter is an error.
pub fn resolve(text: &str, params: &BTreeMap<String, String>, obs: Option<&Screen>) -> Result<Option<String>> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find('[') {
        out.push_str(&rest[..start]);
        let after = &rest[start + 1..];
        let parsed = after.find(']').and_then(|end| parse_placeholder(&after[..end]).map(|p| (end, p)));
        let Some((end, (key, state))) = parsed else {
            out.push('[');
            rest = after;
            continue;
        };
        let value = params
            .get(&key)
            .ok_or_else(|| Error::Validation(format!("unresolvable placeholder [{}]", &after[..end])))?;
        match state {
            None => out.push_str(value),
            Some(s) => {
                let found = obs.and_then(|o| o.element_by_label(value)).and_then(|e| e.state.get(s));
                match found {
                    Some(v) => out.push_str(v),
                    None => return Ok(None),
                }
            }
        }
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(Some(out))
}

/// Like [`resolve`], but unobservable state placeholders stay as written.
fn resolve_lenient(text: &str, params: &BTreeMap<String, String>, obs: Option<&Screen>) -> Result<String> {
    if let Some(s) = resolve(text, params, obs)? {
        return Ok(s);
    }
    let mut out = text.to_string();
    for ph in placeholders(text) {
        if let Some((key, None)) = parse_placeholder(ph) {
            // parameters exist, checked by resolve above
            out = out.replace(&format!("[{ph}]"), &params[&key]);
        }
    }
    Ok(out)
}

fn placeholder_of(key: &str) -> String {
    format!("[{}]", key.to_ascii_uppercase())
}

/// Replaces verbatim parameter values by placeholders, longest value first.
pub fn generalize(text: &str, params: &BTreeMap<String, String>) -> String {
    let mut by_len: Vec<(&String, &String)> = params.iter().filter(|(_, v)| !v.is_empty()).collect();
    by_len.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(b.0)));
    let mut out = text.to_string();
    for (k, v) in by_len {
        out = out.replace(v.as_str(), &placeholder_of(k));
    }
    out
}

fn find_ref<'a>(r: &str, params: &BTreeMap<String, String>, screen: &'a Screen) -> Result<Option<&'a UiElement>> {
    Ok(match r.strip_prefix("label=") {
        Some(tmpl) => resolve(tmpl, params, Some(screen))?.and_then(|l| screen.element_by_label(&l)),
        None => screen.element(r),
    })
}

fn element_ref(e: &UiElement, params: &BTreeMap<String, String>) -> String {
    let g = generalize(&e.label, params);
    if g != e.label {
        format!("label={g}")
    } else {
        e.element_id.clone()
    }
}

// ---------------------------------------------------------------------------
// summarize

/// One-pass distillation of a demonstration into a plan.
pub fn summarize(demo: &Demonstration) -> KnowledgeBase {
    let params = &demo.task.params;
    let steps = demo.steps.iter().map(|s| summarize_step(&s.pre_obs, &s.post_obs, &s.action, &s.instruction, params, &demo.task.goal_text)).collect();
    KnowledgeBase {
        task_template: demo.task.template_id.clone(),
        steps,
        revision: 0,
        provenance: Vec::new(),
        demo_params: params.clone(),
    }
}

fn summarize_step(
    pre: &Screen,
    post: &Screen,
    a: &Action,
    instruction: &str,
    params: &BTreeMap<String, String>,
    goal: &str,
) -> PlanStep {
    let hit = a.coordinate.and_then(|p| pre.element_at(p));
    let target = match (a.kind, a.coordinate) {
        (ActionKind::Swipe, Some(p)) => Some(Target::Point(p)),
        (_, Some(p)) => Some(match hit {
            Some(e) => {
                let g = generalize(&e.label, params);
                if g != e.label {
                    Target::Label(g)
                } else {
                    Target::Element(e.element_id.clone())
                }
            }
            None => Target::Point(p),
        }),
        (_, None) => None,
    };
    let text = a.text.as_ref().map(|t| match a.kind {
        ActionKind::Answer => answer_template(t, pre, params, goal),
        _ => generalize(t, params),
    });
    let mut instr = generalize(instruction, params);
    if let (ActionKind::Answer, Some(raw), Some(tmpl)) = (a.kind, a.text.as_ref(), text.as_ref()) {
        instr = instr.replace(&format!("\"{raw}\""), &format!("\"{tmpl}\""));
    }
    PlanStep {
        instruction: instr,
        screen: pre.screen_id.clone(),
        action_template: ActionTemplate {
            kind: a.kind,
            target,
            target2: a.coordinate2,
            text,
            button: a.button,
            status: a.status,
        },
        expected_outcome: derive_outcome(pre, post, a, params, goal),
        emphasis: None,
    }
}

/// An answer equal to a state of a parameter-labelled element becomes `[KEY.state]`.
/// Among several matching states, one named in the goal wins.
fn answer_template(text: &str, pre: &Screen, params: &BTreeMap<String, String>, goal: &str) -> String {
    let goal = goal.to_lowercase();
    let mut best: Option<(bool, String)> = None;
    for (k, v) in params {
        let Some(e) = pre.element_by_label(v) else { continue };
        for (s, sv) in &e.state {
            if sv != text || s == "text" {
                continue;
            }
            let named = goal.contains(s.as_str());
            if best.as_ref().is_none_or(|(b, _)| named && !b) {
                best = Some((named, format!("[{}.{s}]", k.to_ascii_uppercase())));
            }
        }
    }
    best.map_or_else(|| generalize(text, params), |(_, t)| t)
}

fn derive_outcome(pre: &Screen, post: &Screen, a: &Action, params: &BTreeMap<String, String>, goal: &str) -> Option<OutcomePredicate> {
    if a.kind == ActionKind::Answer {
        let t = answer_template(a.text.as_deref().unwrap_or(""), pre, params, goal);
        return Some(OutcomePredicate::new(PredicateKind::StateFlag, &[ANSWER_REF, "text", &t]));
    }
    if pre.screen_id != post.screen_id {
        return Some(OutcomePredicate::new(PredicateKind::ScreenBecomes, &[&post.screen_id]));
    }
    for e in &post.elements {
        if let Some(before) = pre.element(&e.element_id) {
            if before.text() != e.text() {
                let t = generalize(e.text().unwrap_or(""), params);
                return Some(OutcomePredicate::new(PredicateKind::ElementTextEquals, &[&element_ref(e, params), &t]));
            }
        }
    }
    for e in &post.elements {
        if let Some(before) = pre.element(&e.element_id) {
            let changed = e.state.iter().find(|(k, v)| k.as_str() != "text" && before.state.get(*k) != Some(*v));
            if let Some((k, v)) = changed {
                let v = generalize(v, params);
                return Some(OutcomePredicate::new(PredicateKind::StateFlag, &[&element_ref(e, params), k, &v]));
            }
        }
    }
    post.elements
        .iter()
        .find(|e| pre.element(&e.element_id).is_none())
        .map(|e| OutcomePredicate::new(PredicateKind::ElementExists, &[&element_ref(e, params)]))
}

// ---------------------------------------------------------------------------
// planning and verification

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SubGoal {
    Step { instruction: String, index: usize },
    Done,
}

/// Pure check of the outcome of one transition against the plan step `index`.
pub fn verify(
    pre: &Screen,
    action: Option<&Action>,
    post: &Screen,
    kb: &KnowledgeBase,
    index: usize,
    goal: &TaskSpec,
) -> Result<bool> {
    let step = kb
        .steps
        .get(index)
        .ok_or_else(|| Error::Usage(format!("plan index {index} out of range for {} steps", kb.len())))?;
    let Some(pred) = &step.expected_outcome else {
        return Ok(false);
    };
    if pred.args.first().map(String::as_str) == Some(ANSWER_REF) {
        let Some(a) = action.filter(|a| a.kind == ActionKind::Answer) else {
            return Ok(false);
        };
        let expected = resolve(pred.args.get(2).map(String::as_str).unwrap_or(""), &goal.params, Some(pre))?;
        return Ok(expected.is_some() && a.text == expected);
    }
    pred.holds(&goal.params, post, Some(pre))
}

/// Whether an optional step is already achieved on its own screen. Screen
/// changes are never skipped: landing on the target screen early says
/// nothing about the step.
fn satisfied_on(step: &PlanStep, obs: &Screen, goal: &TaskSpec) -> Result<bool> {
    match &step.expected_outcome {
        Some(p) if !step.mandatory() && p.kind != PredicateKind::ScreenBecomes && obs.screen_id == step.screen => {
            p.holds(&goal.params, obs, Some(obs))
        }
        _ => Ok(false),
    }
}

/// Plan position reached after `history`: a step advances when a transition
/// satisfies its outcome, and optional steps already satisfied are skipped.
fn plan_cursor(kb: &KnowledgeBase, obs: &Screen, history: &[TrajStep], goal: &TaskSpec) -> Result<usize> {
    let skip = |mut c: usize, on: &Screen| -> Result<usize> {
        while c < kb.len() && satisfied_on(&kb.steps[c], on, goal)? {
            c += 1;
        }
        Ok(c)
    };
    let mut c = 0;
    for h in history {
        c = skip(c, &h.observation)?;
        if c >= kb.len() {
            break;
        }
        let advanced = match &kb.steps[c].expected_outcome {
            Some(_) => verify(&h.observation, h.action.as_ref(), &h.post, kb, c, goal)?,
            None => h.transitioned,
        };
        if advanced {
            c += 1;
        }
    }
    skip(c, obs)
}

/// Instruction of the first plan step not yet achieved, or `Done`.
pub fn next_subgoal(kb: &KnowledgeBase, obs: &Screen, history: &[TrajStep], goal: &TaskSpec) -> Result<SubGoal> {
    let c = plan_cursor(kb, obs, history, goal)?;
    match kb.steps.get(c) {
        None => Ok(SubGoal::Done),
        Some(step) => {
            for ph in placeholders(&step.instruction) {
                if let Some((key, _)) = parse_placeholder(ph) {
                    if !goal.params.contains_key(&key) {
                        return Err(Error::Validation(format!("unresolvable placeholder [{ph}]")));
                    }
                }
            }
            Ok(SubGoal::Step { instruction: step.render(&goal.params, Some(obs))?, index: c })
        }
    }
}

/// Matched index pairs of a longest common subsequence, earliest matches first.
pub fn lcs_pairs<A, B>(a: &[A], b: &[B], eq: impl Fn(&A, &B) -> bool) -> Vec<(usize, usize)> {
    let (n, m) = (a.len(), b.len());
    let mut dp = vec![vec![0usize; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            dp[i][j] = if eq(&a[i], &b[j]) { dp[i + 1][j + 1] + 1 } else { dp[i + 1][j].max(dp[i][j + 1]) };
        }
    }
    let (mut i, mut j, mut out) = (0, 0, Vec::new());
    while i < n && j < m {
        if eq(&a[i], &b[j]) && dp[i][j] == dp[i + 1][j + 1] + 1 {
            out.push((i, j));
            i += 1;
            j += 1;
        } else if dp[i + 1][j] >= dp[i][j + 1] {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

/// Index of the first decision point whose outcome was unexpected.
pub fn locate(traj: &Trajectory, kb: &KnowledgeBase) -> Result<Option<usize>> {
    if traj.success || traj.steps.is_empty() {
        return Ok(None);
    }
    for (t, s) in traj.steps.iter().enumerate() {
        if let Some(p) = s.plan_index.filter(|&p| p < kb.len()) {
            if !verify(&s.observation, s.action.as_ref(), &s.post, kb, p, &traj.task)? {
                return Ok(Some(t));
            }
        }
    }
    Ok(kind_divergence(traj, kb))
}

/// First trajectory index where the action kinds stop aligning with the plan.
fn kind_divergence(traj: &Trajectory, kb: &KnowledgeBase) -> Option<usize> {
    let kinds: Vec<Option<ActionKind>> = traj.steps.iter().map(|s| s.action.as_ref().map(|a| a.kind)).collect();
    let pairs = lcs_pairs(&kinds, &kb.steps, |k, s| *k == Some(s.action_template.kind));
    let (mut next_t, mut next_p) = (0, 0);
    for &(t, p) in &pairs {
        if t != next_t || p != next_p {
            return Some(next_t);
        }
        (next_t, next_p) = (t + 1, p + 1);
    }
    (next_t < kinds.len() || next_p < kb.len()).then_some(next_t.min(kinds.len() - 1))
}

/// For each plan step, the aligned step of `reference`.
fn align(kb: &[PlanStep], reference: &[PlanStep]) -> Vec<Option<usize>> {
    let mut out = vec![None; kb.len()];
    for (i, j) in lcs_pairs(kb, reference, |a, b| a.key() == b.key()) {
        out[i] = Some(j);
    }
    out
}

/// Reference steps not covered by the plan between plan positions `p - 1` and `p`.
fn gap_before(al: &[Option<usize>], p: usize, reference_len: usize) -> Option<usize> {
    let lo = al[..p.min(al.len())].iter().rev().find_map(|x| *x).map_or(0, |j| j + 1);
    let hi = al.get(p..).and_then(|rest| rest.iter().find_map(|x| *x)).unwrap_or(reference_len);
    (lo < hi).then_some(lo)
}

/// Deterministic root-cause classification of a failed episode.
pub fn reflect(
    traj: &Trajectory,
    kb: &KnowledgeBase,
    goal: &TaskSpec,
    demo: &Demonstration,
    t_star: Option<usize>,
) -> Result<FailureCase> {
    let reference = summarize(demo).steps;
    let al = align(&kb.steps, &reference);
    let params = &goal.params;
    let Some(t) = t_star.filter(|&t| t < traj.steps.len()) else {
        if let Some(j) = (0..=kb.len()).find_map(|p| gap_before(&al, p, reference.len()).map(|j| (p, j))) {
            let (p, j) = j;
            let ev = Evidence {
                t_star: None,
                plan_index: p,
                reference_index: Some(j),
                observed: "plan completed without reaching the goal".into(),
                expected: reference[j].instruction.clone(),
            };
            return Ok(FailureCase { category: FailureCategory::MissingStep, evidence: Some(ev), message: "plan lacks a demonstrated step".into() });
        }
        return Ok(FailureCase::unexplained("no divergence from the plan", None));
    };
    let st = &traj.steps[t];
    let p = st.plan_index.unwrap_or(kb.len()).min(kb.len());
    let step = kb.steps.get(p);
    let expected = step.and_then(|s| s.expected_outcome.as_ref());
    let mut ev = Evidence {
        t_star: Some(t),
        plan_index: p,
        reference_index: al.get(p).copied().flatten(),
        observed: match expected {
            Some(pr) => pr.observed(params, &st.post, st.action.as_ref()),
            None => format!("screen {}", st.post.screen_id),
        },
        expected: expected.map_or_else(|| "goal reached".to_string(), |pr| pr.to_string()),
    };
    let case = |category, ev: Evidence, message: &str| FailureCase { category, evidence: Some(ev), message: message.into() };

    if let Some(j) = gap_before(&al, p, reference.len()) {
        ev.reference_index = Some(j);
        return Ok(case(FailureCategory::MissingStep, ev, "a demonstrated step is absent from the plan before this point"));
    }
    let Some(step) = step else {
        return Ok(FailureCase::unexplained("failure after the last plan step", Some(ev)));
    };
    if step.expected_outcome.is_none() || (step.action_template.needs_target() && step.action_template.target.is_none()) {
        return Ok(case(FailureCategory::WrongElement, ev, "plan step does not name its element or outcome"));
    }
    let Some(j) = ev.reference_index else {
        let prev = al[..p].iter().rev().find_map(|x| *x);
        if let Some(j) = reference.iter().position(|r| r.key() == step.key()).filter(|&j| prev.is_some_and(|q| j <= q)) {
            ev.reference_index = Some(j);
            return Ok(case(FailureCategory::WrongOrder, ev, "step appears out of the demonstrated order"));
        }
        return Ok(FailureCase::unexplained("plan step has no demonstrated counterpart", Some(ev)));
    };
    let r = &reference[j];
    let pre = &st.observation;
    let executed = st.action.as_ref();
    let ref_action = r.ground(params, pre)?;

    let exec_text = executed.and_then(|a| a.text.clone());
    let ref_text = match &r.action_template.text {
        Some(tmpl) => resolve(tmpl, params, Some(pre))?,
        None => None,
    };
    let label_of = |s: &PlanStep| -> Result<Option<String>> {
        match &s.action_template.target {
            Some(Target::Label(l)) => resolve(l, params, Some(pre)),
            _ => Ok(None),
        }
    };
    let kb_label = label_of(step)?;
    let literal_text = executed.is_some_and(|a| a.kind.takes_text()) && exec_text != ref_text;
    let literal_label = kb_label.is_some() && kb_label != label_of(r)?;
    if literal_text || literal_label {
        return Ok(case(FailureCategory::WrongLiteral, ev, "executed literal differs from the task parameter"));
    }
    let hit = |a: Option<&Action>| a.and_then(|a| a.coordinate).and_then(|c| pre.element_at(c)).map(|e| e.element_id.clone());
    let elem_differs = match (executed, ref_action.as_ref()) {
        (Some(a), Some(b)) => a.kind != b.kind || (a.kind != ActionKind::Swipe && hit(Some(a)) != hit(Some(b))),
        (None, Some(_)) => true,
        _ => false,
    };
    if elem_differs {
        return Ok(case(FailureCategory::WrongElement, ev, "executed action targets a different element than demonstrated"));
    }
    let planned = step.ground(params, pre)?;
    if executed.is_some() && executed == planned.as_ref() && st.observation == st.post {
        return Ok(FailureCase::unexplained("action matched the plan but had no visible effect", Some(ev)));
    }
    if executed.is_some() && j > 0 {
        return Ok(case(FailureCategory::MissingPrecondition, ev, "action matched the plan but its outcome did not follow"));
    }
    Ok(FailureCase::unexplained("no rule explains the failure", Some(ev)))
}

/// Applies the single operator mapped from the failure category.
pub fn revise(kb: &KnowledgeBase, failure: &FailureCase, demo: &Demonstration) -> Result<KnowledgeBase> {
    if failure.category == FailureCategory::Unexplained {
        return Err(Error::RevisionRefused(failure.message.clone()));
    }
    let ev = failure
        .evidence
        .as_ref()
        .ok_or_else(|| Error::Validation(format!("{} failure without evidence", failure.category.as_str())))?;
    let reference = summarize(demo).steps;
    let r = |j: Option<usize>| -> Result<PlanStep> {
        j.and_then(|j| reference.get(j).cloned())
            .ok_or_else(|| Error::Validation("evidence lacks a reference step".into()))
    };
    let p = ev.plan_index;
    let in_plan = |p: usize| -> Result<usize> {
        (p < kb.len()).then_some(p).ok_or_else(|| Error::Validation(format!("plan index {p} out of range")))
    };
    let mut next = kb.clone();
    let op = match failure.category {
        FailureCategory::MissingStep => {
            let p = p.min(kb.len());
            next.steps.insert(p, r(ev.reference_index)?.must().emphasized(Emphasis::Important));
            Operator::Add(p)
        }
        FailureCategory::WrongLiteral => {
            next.steps[in_plan(p)?] = r(ev.reference_index)?.must().emphasized(Emphasis::Important);
            Operator::Update(p)
        }
        FailureCategory::WrongElement => {
            let mut s = r(ev.reference_index)?;
            s.emphasis = kb.steps[in_plan(p)?].emphasis;
            next.steps[p] = s;
            Operator::Update(p)
        }
        FailureCategory::WrongOrder => {
            let j = ev.reference_index.ok_or_else(|| Error::Validation("evidence lacks a reference step".into()))?;
            let al = align(&kb.steps, &reference);
            let fill = gap_before(&al, p, reference.len()).unwrap_or(j);
            next.steps[in_plan(p)?] = r(Some(fill))?.emphasized(Emphasis::Critical);
            Operator::Highlight(p)
        }
        FailureCategory::MissingPrecondition => {
            let j = ev.reference_index.filter(|&j| j > 0).ok_or_else(|| Error::Validation("no preceding reference step".into()))?;
            let p = p.min(kb.len());
            next.steps.insert(p, r(Some(j - 1))?.emphasized(Emphasis::Note));
            Operator::Add(p)
        }
        FailureCategory::Unexplained => unreachable!(),
    };
    next.revision += 1;
    next.provenance.push(RevisionRecord {
        revision: next.revision,
        operator: op,
        category: failure.category,
        t_star: ev.t_star,
        message: failure.message.clone(),
    });
    Ok(next)
}

// ---------------------------------------------------------------------------
// corruption scenarios

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    HardcodedParam,
    MissingStep,
    WrongElement,
    OverAbstraction,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorruptionScenario {
    pub scenario_id: String,
    pub kind: CorruptionKind,
    pub target_step: usize,
}

impl CorruptionScenario {
    pub fn new(kind: CorruptionKind, target_step: usize) -> Self {
        let name = serde_json::to_value(kind).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
        CorruptionScenario { scenario_id: format!("{name}_{target_step}"), kind, target_step }
    }
}

fn unplaceholder(text: &str, params: &BTreeMap<String, String>) -> String {
    let mut out = text.to_string();
    for ph in placeholders(text) {
        if let Some((key, None)) = parse_placeholder(ph) {
            if let Some(v) = params.get(&key) {
                out = out.replace(&format!("[{ph}]"), v);
            }
        }
    }
    out
}

/// Plants a scripted defect into a copy of the plan.
pub fn corrupt_knowledge(kb: &KnowledgeBase, scenario: &CorruptionScenario, def: &EnvDefinition) -> Result<KnowledgeBase> {
    let i = scenario.target_step;
    if i >= kb.len() {
        return Err(Error::Corruption(format!("target step {i} out of range for {} steps", kb.len())));
    }
    let mut out = kb.clone();
    let step = &mut out.steps[i];
    match scenario.kind {
        CorruptionKind::HardcodedParam => {
            let params = &kb.demo_params;
            let t = &mut step.action_template;
            let before = (t.text.clone(), t.target.clone());
            t.text = t.text.as_ref().map(|s| unplaceholder(s, params));
            if let Some(Target::Label(l)) = &t.target {
                t.target = Some(Target::Label(unplaceholder(l, params)));
            }
            if (t.text.clone(), t.target.clone()) == before {
                return Err(Error::Corruption(format!("step {i} has no placeholder to hard-code")));
            }
            step.instruction = unplaceholder(&step.instruction, params);
        }
        CorruptionKind::MissingStep => {
            out.steps.remove(i);
            if out.steps.is_empty() {
                return Err(Error::Corruption("cannot delete the only step".into()));
            }
        }
        CorruptionKind::WrongElement => {
            let Some(Target::Element(id)) = &step.action_template.target else {
                return Err(Error::Corruption(format!("step {i} does not target an element id")));
            };
            let screen = def
                .screen(&step.screen)
                .ok_or_else(|| Error::Corruption(format!("unknown screen {}", step.screen)))?;
            let cur = screen.elements.iter().find(|e| &e.id == id).map(|e| e.label.clone()).unwrap_or_default();
            let other = screen
                .elements
                .iter()
                .find(|e| &e.id != id && !e.on_click.is_empty() && !e.label.contains('{'))
                .ok_or_else(|| Error::Corruption(format!("no alternative element on {}", step.screen)))?;
            step.action_template.target = Some(Target::Element(other.id.clone()));
            step.instruction = if cur.is_empty() {
                format!("Tap the \"{}\" {}", other.label, other.kind.noun())
            } else {
                step.instruction.replace(&cur, &other.label)
            };
        }
        CorruptionKind::OverAbstraction => {
            step.expected_outcome = None;
            step.action_template.target = None;
            step.action_template.target2 = None;
            step.instruction = "Proceed to the next screen".into();
        }
    }
    Ok(out)
}

/// Five distinct scenarios for a template's plan, where applicable.
pub fn default_scenarios(kb: &KnowledgeBase) -> Vec<CorruptionScenario> {
    let mut out = Vec::new();
    let hardcodable = kb.steps.iter().position(|s| {
        let t = &s.action_template;
        t.text.as_deref().is_some_and(|x| placeholders(x).iter().any(|p| !p.contains('.')))
            || matches!(&t.target, Some(Target::Label(l)) if !placeholders(l).is_empty())
    });
    if let Some(i) = hardcodable {
        out.push(CorruptionScenario::new(CorruptionKind::HardcodedParam, i));
    }
    if kb.len() > 2 {
        out.push(CorruptionScenario::new(CorruptionKind::MissingStep, 1));
    }
    if kb.len() > 1 {
        out.push(CorruptionScenario::new(CorruptionKind::MissingStep, kb.len() - 1));
    }
    if let Some(i) = kb.steps.iter().position(|s| matches!(s.action_template.target, Some(Target::Element(_)))) {
        out.push(CorruptionScenario::new(CorruptionKind::WrongElement, i));
    }
    let abstractable = kb.steps.iter().position(|s| s.action_template.needs_target()).unwrap_or(0);
    out.push(CorruptionScenario::new(CorruptionKind::OverAbstraction, abstractable));
    out
}

// ---------------------------------------------------------------------------
// the self-evolution loop

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopIteration {
    pub iteration: usize,
    pub seed: u64,
    pub success: bool,
    pub t_star: Option<usize>,
    pub category: Option<FailureCategory>,
    pub operator: Option<Operator>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopReport {
    pub task_template: String,
    pub iterations: Vec<LoopIteration>,
    pub converged: bool,
    pub final_streak: usize,
}

impl LoopReport {
    pub fn revisions(&self) -> impl Iterator<Item = Operator> + '_ {
        self.iterations.iter().filter_map(|i| i.operator)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["iteration", "success", "t_star", "category", "operator"])?;
        for it in &self.iterations {
            w.write_record([
                it.iteration.to_string(),
                it.success.to_string(),
                it.t_star.map(|t| t.to_string()).unwrap_or_default(),
                it.category.map(|c| c.as_str().to_string()).unwrap_or_default(),
                it.operator.map(|o| format!("{}({})", o.name(), o.index())).unwrap_or_default(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Internal(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Internal(e.to_string()))
    }
}

/// Evaluation seed of loop iteration `iteration`.
pub fn loop_seed(demo_seed: u64, iteration: usize) -> u64 {
    demo_seed + EVAL_SEED_BASE + iteration as u64
}

/// Runs execute / locate / reflect / revise until `success_thresh` successes
/// in a row or `max_iter` episodes. Starts from `initial` or a fresh summary.
pub fn srlr_loop(
    suite: &TaskSuite,
    demo: &Demonstration,
    env: &MiniDroid,
    executor: &dyn Executor,
    cfg: &LoopConfig,
    initial: Option<KnowledgeBase>,
) -> Result<(KnowledgeBase, LoopReport)> {
    cfg.validate()?;
    let template = demo.task.template_id.clone();
    let mut kb = initial.unwrap_or_else(|| summarize(demo));
    let mut report = LoopReport { task_template: template.clone(), iterations: Vec::new(), converged: false, final_streak: 0 };
    let mut streak = 0;
    for iteration in 0..cfg.max_iter {
        let seed = loop_seed(demo.task.seed, iteration);
        let task = suite.instantiate_task(&template, seed)?;
        let traj = run_episode(env, PlannerMode::Hierarchical(&kb), executor, &task, seed)?;
        let mut it = LoopIteration { iteration, seed, success: traj.success, t_star: None, category: None, operator: None };
        if traj.success {
            streak += 1;
            report.iterations.push(it);
            if streak >= cfg.success_thresh {
                report.converged = true;
                break;
            }
            continue;
        }
        streak = 0;
        let t = locate(&traj, &kb)?;
        let case = reflect(&traj, &kb, &task, demo, t)?;
        it.t_star = t;
        it.category = Some(case.category);
        if case.category != FailureCategory::Unexplained {
            kb = revise(&kb, &case, demo)?;
            it.operator = kb.provenance.last().map(|r| r.operator);
        }
        report.iterations.push(it);
    }
    report.final_streak = streak;
    Ok((kb, report))
}

/// The longest demonstration of a template, which exercises every plan step.
pub fn reference_demo<'a>(demos: &'a [Demonstration], template: &str) -> Option<&'a Demonstration> {
    demos.iter().filter(|d| d.task.template_id == template).fold(None, |best: Option<&Demonstration>, d| match best {
        Some(b) if b.len() >= d.len() => Some(b),
        _ => Some(d),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::TemplateExecutor;

    fn setup(id: &str) -> (TaskSuite, MiniDroid, Demonstration) {
        let suite = TaskSuite::builtin();
        let env = MiniDroid::builtin();
        let demos: Vec<Demonstration> =
            (0..3).map(|s| suite.record_demonstration(&env, &suite.instantiate_task(id, s).unwrap()).unwrap()).collect();
        let demo = reference_demo(&demos, id).unwrap().clone();
        (suite, env, demo)
    }

    #[test]
    fn placeholder_resolution() {
        let p: BTreeMap<String, String> = [("filename".to_string(), "a.m4a".to_string())].into();
        assert_eq!(resolve("Type [FILENAME] [x] [", &p, None).unwrap().unwrap(), "Type a.m4a [x] [");
        assert!(resolve("[OTHER]", &p, None).is_err());
        assert_eq!(generalize("save a.m4a now", &p), "save [FILENAME] now");
        assert_eq!(placeholders("[A] [b] [C.checked]"), vec!["A", "C.checked"]);
    }

    #[test]
    fn summarize_generalizes_the_filename() {
        let (_, _, demo) = setup("recorder_save");
        let kb = summarize(&demo);
        assert_eq!(kb.len(), demo.len());
        let ty = &kb.steps[5];
        assert_eq!(ty.action_template.text.as_deref(), Some("[FILENAME]"));
        assert!(ty.instruction.contains("[FILENAME]"));
        assert_eq!(kb.steps[1].expected_outcome, Some(OutcomePredicate::new(PredicateKind::ScreenBecomes, &["recorder_main"])));
        assert_eq!(
            ty.expected_outcome,
            Some(OutcomePredicate::new(PredicateKind::ElementTextEquals, &["name_field", "[FILENAME]"]))
        );
    }

    #[test]
    fn text_equals_versus_contains() {
        let (_, _, demo) = setup("recorder_save");
        let mut post = demo.steps[5].post_obs.clone();
        let field = post.elements.iter_mut().find(|e| e.element_id == "name_field").unwrap();
        field.state.insert("text".into(), "Recording1X.m4a".into());
        let params: BTreeMap<String, String> = [("filename".to_string(), "X.m4a".to_string())].into();
        let eq = OutcomePredicate::new(PredicateKind::ElementTextEquals, &["name_field", "[FILENAME]"]);
        let contains = OutcomePredicate::new(PredicateKind::ElementTextContains, &["name_field", "[FILENAME]"]);
        assert!(!eq.holds(&params, &post, None).unwrap());
        assert!(contains.holds(&params, &post, None).unwrap());
    }

    #[test]
    fn lcs_alignment() {
        let a = [1, 2, 3, 5];
        let b = [1, 2, 3, 4, 5];
        assert_eq!(lcs_pairs(&a, &b, |x, y| x == y), vec![(0, 0), (1, 1), (2, 2), (3, 4)]);
        let al: Vec<Option<usize>> = vec![Some(0), Some(1), Some(2), Some(4)];
        assert_eq!(gap_before(&al, 3, 5), Some(3));
        assert_eq!(gap_before(&al, 2, 5), None);
        assert_eq!(gap_before(&al, 4, 6), Some(5));
    }

    #[test]
    fn uncorrupted_plans_converge_without_revisions() {
        let suite = TaskSuite::builtin();
        for id in suite.ids() {
            let (suite, env, demo) = setup(id);
            let (kb, report) = srlr_loop(&suite, &demo, &env, &TemplateExecutor, &LoopConfig::default(), None).unwrap();
            assert!(report.converged, "{id}: {report:?}");
            assert_eq!(report.iterations.len(), 3, "{id}");
            assert_eq!(kb.revision, 0);
        }
    }

    #[test]
    fn hardcoded_filename_is_repaired_by_update() {
        let (suite, env, demo) = setup("recorder_save");
        let kb = summarize(&demo);
        let bad = corrupt_knowledge(&kb, &CorruptionScenario::new(CorruptionKind::HardcodedParam, 5), env.definition()).unwrap();
        assert!(!bad.steps[5].instruction.contains("[FILENAME]"));
        assert!(bad.steps[5].instruction.contains(&demo.task.params["filename"]));
        let (fixed, report) = srlr_loop(&suite, &demo, &env, &TemplateExecutor, &LoopConfig::default(), Some(bad)).unwrap();
        assert!(report.converged, "{report:?}");
        assert_eq!(report.iterations[0].category, Some(FailureCategory::WrongLiteral));
        assert_eq!(report.iterations[0].operator, Some(Operator::Update(5)));
        assert_eq!(fixed.steps[5].action_template.text.as_deref(), Some("[FILENAME]"));
        assert!(fixed.steps[5].instruction.contains("MUST"));
        assert_eq!(fixed.provenance.len() as u32, fixed.revision);
    }

    #[test]
    fn missing_backspace_is_added_back() {
        let (suite, env, demo) = setup("recorder_save");
        let kb = summarize(&demo);
        let bad = corrupt_knowledge(&kb, &CorruptionScenario::new(CorruptionKind::MissingStep, 4), env.definition()).unwrap();
        assert_eq!(bad.len(), kb.len() - 1);
        let (fixed, report) = srlr_loop(&suite, &demo, &env, &TemplateExecutor, &LoopConfig::default(), Some(bad)).unwrap();
        assert!(report.converged, "{report:?}");
        assert_eq!(report.iterations[0].category, Some(FailureCategory::MissingStep));
        assert_eq!(fixed.len(), kb.len());
    }

    #[test]
    fn permanent_fault_exhausts_the_budget() {
        let (suite, env, demo) = setup("recorder_save");
        let env = env.with_faults(vec![crate::env::Fault { screen: "recorder_main".into(), element: Some("record".into()) }]);
        let (kb, report) = srlr_loop(&suite, &demo, &env, &TemplateExecutor, &LoopConfig::default(), None).unwrap();
        assert!(!report.converged);
        assert_eq!(report.iterations.len(), 10);
        assert!(report.iterations.iter().all(|i| i.category == Some(FailureCategory::Unexplained)));
        assert_eq!(kb.revision, 0);
    }

    #[test]
    fn revise_refuses_unexplained_and_is_deterministic() {
        let (_, _, demo) = setup("contacts_add");
        let kb = summarize(&demo);
        assert!(matches!(revise(&kb, &FailureCase::unexplained("x", None), &demo), Err(Error::RevisionRefused(_))));
        let case = FailureCase {
            category: FailureCategory::WrongElement,
            evidence: Some(Evidence { t_star: Some(1), plan_index: 1, reference_index: Some(1), observed: String::new(), expected: String::new() }),
            message: "m".into(),
        };
        assert_eq!(revise(&kb, &case, &demo).unwrap(), revise(&kb, &case, &demo).unwrap());
    }
}
