//! The interpreter that steps an [`EnvState`] through an [`EnvDefinition`].

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::action::{Action, ActionKind, SystemButton, TerminateStatus};
use super::definition::{Effect, ElementDef, EnvDefinition, RandomKind, ScreenDef, SuccessCheck};
use super::screen::{Screen, UiElement};
use super::template::render;
use crate::error::{Error, Result};
use crate::rng;
use crate::tasks::TaskSpec;

pub const DEFAULT_HORIZON: u32 = 30;

/// screen id -> element id -> key -> value
pub type AppStates = BTreeMap<String, BTreeMap<String, BTreeMap<String, String>>>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    Terminate(TerminateStatus),
    Answer,
    Horizon,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub template_id: String,
    pub current_screen: String,
    pub app_states: AppStates,
    pub step_count: u32,
    pub done: bool,
    pub answer_given: Option<String>,
    pub end: Option<EndReason>,
    pub seed: u64,
    pub discount: f64,
    /// Focused text field on `current_screen`.
    pub focused: Option<String>,
    pub params: BTreeMap<String, String>,
    pub rand: BTreeMap<String, String>,
    pub lists: BTreeMap<String, Vec<String>>,
    pub selected: BTreeMap<String, usize>,
    /// list name -> (screen, element) per list position
    pub slots: BTreeMap<String, Vec<(String, String)>>,
}

impl EnvState {
    fn list_element_state(&self, list: &str, index: usize, key: &str) -> Option<String> {
        let (s, e) = self.slots.get(list)?.get(index)?;
        self.element_state(s, e, key).map(str::to_string)
    }

    pub fn element_state(&self, screen: &str, element: &str, key: &str) -> Option<&str> {
        self.app_states.get(screen)?.get(element)?.get(key).map(String::as_str)
    }

    /// Everything except the step counter, for change detection.
    fn same_as(&self, other: &EnvState) -> bool {
        self.current_screen == other.current_screen
            && self.app_states == other.app_states
            && self.done == other.done
            && self.answer_given == other.answer_given
            && self.focused == other.focused
            && self.selected == other.selected
    }

    fn lookup(&self, token: &str, this: Option<&str>) -> Option<String> {
        let (head, rest) = token.split_once(':').unwrap_or((token, ""));
        match head {
            "param" => self.params.get(rest).cloned(),
            "rand" => self.rand.get(rest).cloned(),
            "list" => {
                let (name, idx) = rest.rsplit_once(':')?;
                self.lists.get(name)?.get(idx.parse::<usize>().ok()?).cloned()
            }
            "sel" => Some(
                self.selected
                    .get(rest)
                    .and_then(|&i| self.lists.get(rest)?.get(i).cloned())
                    .unwrap_or_default(),
            ),
            "selstate" => {
                let (list, key) = rest.split_once(':')?;
                Some(
                    self.selected
                        .get(list)
                        .and_then(|&i| self.list_element_state(list, i, key))
                        .unwrap_or_default(),
                )
            }
            "field" => {
                let mut parts = rest.splitn(3, '.');
                let (s, e, k) = (parts.next()?, parts.next()?, parts.next()?);
                Some(self.element_state(s, e, k).unwrap_or_default().to_string())
            }
            "self" => this.map(str::to_string),
            _ => None,
        }
    }

    fn render(&self, template: &str, this: Option<&str>) -> Result<String> {
        render(template, |t| self.lookup(t, this)).map_err(Error::Config)
    }
}

/// An invisible fault: actions hitting the element (or any swipe on the
/// screen when `element` is `None`) are silently dropped.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fault {
    pub screen: String,
    pub element: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub observation: Screen,
    pub transitioned: bool,
    pub terminal: bool,
    pub success: Option<bool>,
}

/// The synthetic device: an immutable definition plus horizon and faults.
#[derive(Clone, Debug)]
pub struct MiniDroid {
    def: Arc<EnvDefinition>,
    horizon: u32,
    faults: Vec<Fault>,
}

impl MiniDroid {
    pub fn new(def: EnvDefinition) -> Result<Self> {
        def.validate()?;
        Ok(MiniDroid { def: Arc::new(def), horizon: DEFAULT_HORIZON, faults: Vec::new() })
    }

    pub fn builtin() -> Self {
        MiniDroid::new(super::builtin::definition()).expect("built-in definition is valid")
    }

    pub fn with_horizon(mut self, horizon: u32) -> Self {
        self.horizon = horizon.max(1);
        self
    }

    pub fn with_faults(mut self, faults: Vec<Fault>) -> Self {
        self.faults = faults;
        self
    }

    pub fn definition(&self) -> &EnvDefinition {
        &self.def
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn reset(&self, task: &TaskSpec, seed: u64) -> Result<EnvState> {
        if self.def.task(&task.template_id).is_none() {
            return Err(Error::Config(format!("unknown task template `{}`", task.template_id)));
        }
        let mut r = rng::stream(seed, &[rng::tag("reset")]);
        let mut rand = BTreeMap::new();
        for slot in &self.def.random_slots {
            let value = match &slot.kind {
                RandomKind::IntRange { lo, hi } => r.gen_range(*lo..=*hi).to_string(),
                RandomKind::Choice { options } => options[r.gen_range(0..options.len())].clone(),
            };
            rand.insert(slot.name.clone(), value);
        }
        let mut lists = BTreeMap::new();
        for list in &self.def.lists {
            let bound: Vec<String> =
                list.bind.iter().filter_map(|k| task.params.get(k).cloned()).collect();
            let mut pool: Vec<&String> = list.pool.iter().filter(|p| !bound.contains(p)).collect();
            pool.shuffle(&mut r);
            let mut items: Vec<String> = bound.clone();
            items.extend(pool.into_iter().take(list.size.saturating_sub(bound.len())).cloned());
            if items.len() < list.size {
                return Err(Error::Config(format!("list {} cannot be filled", list.name)));
            }
            items.truncate(list.size);
            items.shuffle(&mut r);
            lists.insert(list.name.clone(), items);
        }
        let mut state = EnvState {
            template_id: task.template_id.clone(),
            current_screen: self.def.home_screen.clone(),
            app_states: AppStates::new(),
            step_count: 0,
            done: false,
            answer_given: None,
            end: None,
            seed,
            discount: 1.0,
            focused: None,
            params: task.params.clone(),
            rand,
            lists,
            selected: BTreeMap::new(),
            slots: BTreeMap::new(),
        };
        for list in &self.def.lists {
            let mut v = Vec::with_capacity(list.size);
            for i in 0..list.size {
                let (s, e) = self
                    .def
                    .list_element(&list.name, i)
                    .ok_or_else(|| Error::Config(format!("list {} slot {i} has no element", list.name)))?;
                v.push((s.id.clone(), e.id.clone()));
            }
            state.slots.insert(list.name.clone(), v);
        }
        let mut app_states = AppStates::new();
        for screen in &self.def.screens {
            let mut per = BTreeMap::new();
            for e in &screen.elements {
                let mut st = BTreeMap::new();
                for (k, v) in &e.state {
                    st.insert(k.clone(), state.render(v, Some(&e.id))?);
                }
                // labels must resolve too; fail here rather than at observation time
                state.render(&e.label, Some(&e.id))?;
                per.insert(e.id.clone(), st);
            }
            app_states.insert(screen.id.clone(), per);
        }
        state.app_states = app_states;
        Ok(state)
    }

    fn visible(state: &EnvState, screen: &ScreenDef, e: &ElementDef) -> bool {
        state.element_state(&screen.id, &e.id, "hidden") != Some("true")
    }

    pub fn observe(&self, state: &EnvState) -> Screen {
        let screen = self.def.screen(&state.current_screen).expect("current screen is declared");
        let elements = screen
            .elements
            .iter()
            .filter(|e| Self::visible(state, screen, e))
            .map(|e| UiElement {
                element_id: e.id.clone(),
                kind: e.kind,
                label: state.render(&e.label, Some(&e.id)).unwrap_or_else(|_| e.label.clone()),
                bbox: e.bbox,
                state: {
                    let mut st: BTreeMap<String, String> = state.app_states[&screen.id][&e.id]
                        .iter()
                        .filter(|(k, _)| k.as_str() != "hidden")
                        .map(|(k, v)| (k.clone(), v.clone()))
                        .collect();
                    if state.focused.as_deref() == Some(e.id.as_str()) {
                        st.insert("focused".into(), "true".into());
                    }
                    st
                },
            })
            .collect();
        Screen {
            screen_id: screen.id.clone(),
            elements,
            width: self.def.width,
            height: self.def.height,
        }
    }

    fn dropped(&self, screen: &str, element: Option<&str>) -> bool {
        self.faults
            .iter()
            .any(|f| f.screen == screen && (f.element.is_none() || f.element.as_deref() == element))
    }

    pub fn step(&self, state: &EnvState, action: &Action) -> Result<(EnvState, StepOutcome)> {
        if state.done {
            return Err(Error::Usage("step on a finished episode".into()));
        }
        action.validate(self.def.width, self.def.height)?;
        let mut next = state.clone();
        let screen = self.def.screen(&state.current_screen).expect("current screen is declared");
        match action.kind {
            ActionKind::Click | ActionKind::LongPress => {
                let p = action.coordinate.expect("validated");
                let hit = screen
                    .elements
                    .iter()
                    .find(|e| e.bbox.contains(p) && Self::visible(state, screen, e));
                if let Some(e) = hit {
                    if !self.dropped(&screen.id, Some(&e.id)) {
                        let effects =
                            if action.kind == ActionKind::Click { &e.on_click } else { &e.on_long_press };
                        self.apply(&mut next, effects, Some(e))?;
                    }
                }
            }
            ActionKind::Swipe => {
                let (a, b) = (action.coordinate.expect("validated"), action.coordinate2.expect("validated"));
                let (dx, dy) = (b.x - a.x, b.y - a.y);
                if !self.dropped(&screen.id, None) && dy.abs() >= dx.abs() && dy != 0 {
                    let effects = if dy < 0 { &screen.on_swipe_up } else { &screen.on_swipe_down };
                    self.apply(&mut next, effects, None)?;
                }
            }
            ActionKind::Type => {
                if let Some(f) = state.focused.clone() {
                    if !self.dropped(&screen.id, Some(&f)) {
                        let text = action.text.as_deref().expect("validated");
                        let slot = next
                            .app_states
                            .get_mut(&screen.id)
                            .and_then(|m| m.get_mut(&f))
                            .and_then(|m| m.get_mut("text"));
                        if let Some(v) = slot {
                            v.push_str(text);
                        }
                    }
                }
            }
            ActionKind::SystemButton => {
                let target = match action.button.expect("validated") {
                    SystemButton::Back => screen.back.clone(),
                    SystemButton::Home => Some(self.def.home_screen.clone()),
                };
                if let Some(t) = target {
                    if t != next.current_screen {
                        next.current_screen = t;
                        next.focused = None;
                    }
                }
            }
            ActionKind::Terminate => {
                next.done = true;
                next.end = Some(EndReason::Terminate(action.status.expect("validated")));
            }
            ActionKind::Answer => {
                next.done = true;
                next.answer_given = action.text.clone();
                next.end = Some(EndReason::Answer);
            }
        }
        Ok(self.finish(state, next))
    }

    /// Consumes one step without acting, used when the executor emits an
    /// undecodable output.
    pub fn idle(&self, state: &EnvState) -> Result<(EnvState, StepOutcome)> {
        if state.done {
            return Err(Error::Usage("step on a finished episode".into()));
        }
        Ok(self.finish(state, state.clone()))
    }

    fn finish(&self, prev: &EnvState, mut next: EnvState) -> (EnvState, StepOutcome) {
        next.step_count += 1;
        if !next.done && next.step_count >= self.horizon {
            next.done = true;
            next.end = Some(EndReason::Horizon);
        }
        let transitioned = !prev.same_as(&next);
        let success = next.done.then(|| self.success_of(&next));
        let outcome = StepOutcome {
            observation: self.observe(&next),
            transitioned,
            terminal: next.done,
            success,
        };
        (next, outcome)
    }

    fn apply(&self, st: &mut EnvState, effects: &[Effect], this: Option<&ElementDef>) -> Result<()> {
        let this_id = this.map(|e| e.id.as_str());
        for effect in effects {
            match effect {
                Effect::Goto { screen } => {
                    if st.current_screen != *screen {
                        st.current_screen = screen.clone();
                        st.focused = None;
                    }
                }
                Effect::Focus { element } => st.focused = Some(element.clone()),
                Effect::ClearFocused | Effect::BackspaceFocused => {
                    if let Some(f) = st.focused.clone() {
                        let cur = st.current_screen.clone();
                        if let Some(v) = st.app_states.get_mut(&cur).and_then(|m| m.get_mut(&f)).and_then(|m| m.get_mut("text")) {
                            if matches!(effect, Effect::ClearFocused) {
                                v.clear();
                            } else {
                                v.pop();
                            }
                        }
                    }
                }
                Effect::SetState { screen, element, key, value } => {
                    let v = st.render(value, this_id)?;
                    set(st, screen, element, key, v);
                }
                Effect::Toggle { screen, element, key } => {
                    let v = flip(st.element_state(screen, element, key));
                    set(st, screen, element, key, v);
                }
                Effect::ToggleSelf { key } => {
                    if let Some(e) = this {
                        let cur = st.current_screen.clone();
                        let v = flip(st.element_state(&cur, &e.id, key));
                        set(st, &cur, &e.id, key, v);
                    }
                }
                Effect::Select { list } => {
                    if let Some(slot) = this.and_then(|e| e.list.as_ref()).filter(|s| &s.list == list) {
                        st.selected.insert(list.clone(), slot.index);
                    }
                }
                Effect::SetSelected { list, key, value } => {
                    if let Some(&i) = st.selected.get(list) {
                        let v = st.render(value, this_id)?;
                        if let Some((s, e)) = self.def.list_element(list, i) {
                            let (s, e) = (s.id.clone(), e.id.clone());
                            set(st, &s, &e, key, v);
                        }
                    }
                }
                Effect::ToggleSelected { list, key } => {
                    if let Some(&i) = st.selected.get(list) {
                        if let Some((s, e)) = self.def.list_element(list, i) {
                            let (s, e) = (s.id.clone(), e.id.clone());
                            let v = flip(st.element_state(&s, &e, key));
                            set(st, &s, &e, key, v);
                        }
                    }
                }
                Effect::Append { screen, element, key, value } => {
                    let v = st.render(value, this_id)?;
                    let joined = match st.element_state(screen, element, key) {
                        Some(old) if !old.is_empty() => format!("{old}\n{v}"),
                        _ => v,
                    };
                    set(st, screen, element, key, joined);
                }
            }
        }
        Ok(())
    }

    fn success_of(&self, state: &EnvState) -> bool {
        match state.end {
            Some(EndReason::Horizon) | Some(EndReason::Terminate(TerminateStatus::Failure)) | None => false,
            _ => match self.def.task(&state.template_id) {
                Some(t) => self.eval_check(state, &t.success),
                None => false,
            },
        }
    }

    /// Evaluates the task's success predicate over a finished state.
    pub fn check_success(&self, state: &EnvState, task: &TaskSpec) -> Result<bool> {
        if !state.done {
            return Err(Error::Usage("check_success on a running episode".into()));
        }
        if self.def.task(&task.template_id).is_none() {
            return Err(Error::UnknownTemplate(task.template_id.clone()));
        }
        let mut view = state.clone();
        view.template_id = task.template_id.clone();
        view.params = task.params.clone();
        Ok(self.success_of(&view))
    }

    fn eval_check(&self, st: &EnvState, check: &SuccessCheck) -> bool {
        let r = |t: &str| st.render(t, None).ok();
        match check {
            SuccessCheck::Contains { screen, element, key, value } => {
                match (st.element_state(screen, element, key), r(value)) {
                    (Some(have), Some(want)) => have.split('\n').any(|x| x == want),
                    _ => false,
                }
            }
            SuccessCheck::Equals { screen, element, key, value } => {
                st.element_state(screen, element, key).is_some_and(|h| Some(h.to_string()) == r(value))
            }
            SuccessCheck::ItemState { list, item, key, value } => {
                match (self.item_state(st, list, item, key), r(value)) {
                    (Some(have), Some(want)) => have == want,
                    _ => false,
                }
            }
            SuccessCheck::Answer { value } => {
                st.end == Some(EndReason::Answer) && st.answer_given.as_deref().map(str::to_string) == r(value)
            }
            SuccessCheck::AnswerItemState { list, item, key } => {
                st.end == Some(EndReason::Answer)
                    && self.item_state(st, list, item, key).is_some_and(|v| st.answer_given.as_deref() == Some(v.as_str()))
            }
            SuccessCheck::All { checks } => checks.iter().all(|c| self.eval_check(st, c)),
        }
    }

    fn item_state(&self, st: &EnvState, list: &str, item: &str, key: &str) -> Option<String> {
        let item = st.render(item, None).ok()?;
        let idx = st.lists.get(list)?.iter().position(|x| *x == item)?;
        let (s, e) = self.def.list_element(list, idx)?;
        Some(st.element_state(&s.id, &e.id, key).unwrap_or_default().to_string())
    }
}

fn set(st: &mut EnvState, screen: &str, element: &str, key: &str, value: String) {
    st.app_states
        .entry(screen.to_string())
        .or_default()
        .entry(element.to_string())
        .or_default()
        .insert(key.to_string(), value);
}

fn flip(v: Option<&str>) -> String {
    if v == Some("on") { "off" } else { "on" }.to_string()
}
