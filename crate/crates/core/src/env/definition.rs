//! Data model of the environment definition file.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::screen::{BBox, ElementKind};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// Screens, elements, transition rules and task success predicates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvDefinition {
    pub format_version: u32,
    pub width: i32,
    pub height: i32,
    pub home_screen: String,
    pub screens: Vec<ScreenDef>,
    #[serde(default)]
    pub lists: Vec<ListDef>,
    #[serde(default)]
    pub random_slots: Vec<RandomSlot>,
    #[serde(default)]
    pub tasks: Vec<TaskDef>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScreenDef {
    pub id: String,
    /// Target of the system back button; `None` keeps the screen.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub back: Option<String>,
    pub elements: Vec<ElementDef>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub on_swipe_up: Vec<Effect>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub on_swipe_down: Vec<Effect>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElementDef {
    pub id: String,
    pub kind: ElementKind,
    /// Label template, rendered at observation time.
    pub label: String,
    pub bbox: BBox,
    /// Initial state templates, rendered at reset.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub state: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub list: Option<ListSlot>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub on_click: Vec<Effect>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub on_long_press: Vec<Effect>,
}

/// Binds an element to position `index` of a named list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListSlot {
    pub list: String,
    pub index: usize,
}

/// A list of labels filled at reset: task parameters named in `bind` land on
/// seed-chosen positions, the rest are drawn from `pool`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListDef {
    pub name: String,
    pub size: usize,
    pub pool: Vec<String>,
    #[serde(default)]
    pub bind: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomSlot {
    pub name: String,
    #[serde(flatten)]
    pub kind: RandomKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RandomKind {
    IntRange { lo: i64, hi: i64 },
    Choice { options: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskDef {
    pub template: String,
    pub success: SuccessCheck,
}

/// Transition rule applied when an element is clicked, long-pressed or the
/// screen is swiped. Value strings are templates.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Effect {
    Goto { screen: String },
    Focus { element: String },
    ClearFocused,
    BackspaceFocused,
    SetState { screen: String, element: String, key: String, value: String },
    Toggle { screen: String, element: String, key: String },
    ToggleSelf { key: String },
    Select { list: String },
    SetSelected { list: String, key: String, value: String },
    ToggleSelected { list: String, key: String },
    Append { screen: String, element: String, key: String, value: String },
}

/// Task success predicate over the final state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum SuccessCheck {
    /// Newline-separated `key` state contains `value` as a whole entry.
    Contains { screen: String, element: String, key: String, value: String },
    Equals { screen: String, element: String, key: String, value: String },
    /// The list element labelled `item` has state `key == value`.
    ItemState { list: String, item: String, key: String, value: String },
    Answer { value: String },
    /// The answer equals state `key` of the list element labelled `item`.
    AnswerItemState { list: String, item: String, key: String },
    All { checks: Vec<SuccessCheck> },
}

impl EnvDefinition {
    pub fn screen(&self, id: &str) -> Option<&ScreenDef> {
        self.screens.iter().find(|s| s.id == id)
    }

    pub fn list(&self, name: &str) -> Option<&ListDef> {
        self.lists.iter().find(|l| l.name == name)
    }

    pub fn task(&self, template: &str) -> Option<&TaskDef> {
        self.tasks.iter().find(|t| t.template == template)
    }

    /// Element bound to position `index` of `list`, with its screen id.
    pub fn list_element(&self, list: &str, index: usize) -> Option<(&ScreenDef, &ElementDef)> {
        self.screens.iter().find_map(|s| {
            s.elements
                .iter()
                .find(|e| e.list.as_ref().is_some_and(|l| l.list == list && l.index == index))
                .map(|e| (s, e))
        })
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let def: EnvDefinition =
            serde_json::from_slice(bytes).map_err(|e| Error::from_json(e, bytes))?;
        def.validate()?;
        Ok(def)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("definition serializes")
    }

    /// Checks referential integrity and the geometric screen invariants.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.format_version != FORMAT_VERSION {
            return bad(format!("unsupported format_version {}", self.format_version));
        }
        let ids: BTreeSet<&str> = self.screens.iter().map(|s| s.id.as_str()).collect();
        if ids.len() != self.screens.len() {
            return bad("duplicate screen id".into());
        }
        if !ids.contains(self.home_screen.as_str()) {
            return bad(format!("home screen {} not declared", self.home_screen));
        }
        let lists: BTreeSet<&str> = self.lists.iter().map(|l| l.name.as_str()).collect();
        for list in &self.lists {
            if list.pool.len() + list.bind.len() < list.size {
                return bad(format!("list {} pool too small", list.name));
            }
        }
        let check_effects = |effects: &[Effect], screen: &ScreenDef| -> Result<()> {
            for effect in effects {
                let (target_screen, element, list) = match effect {
                    Effect::Goto { screen } => (Some(screen), None, None),
                    Effect::Focus { element } => {
                        // focus targets the screen current at application time
                        if !self.screens.iter().any(|s| s.elements.iter().any(|e| &e.id == element)) {
                            return Err(Error::Config(format!("{}: unknown focus target {element}", screen.id)));
                        }
                        (None, None, None)
                    }
                    Effect::SetState { screen, element, .. }
                    | Effect::Toggle { screen, element, .. }
                    | Effect::Append { screen, element, .. } => {
                        (Some(screen), Some((screen, element)), None)
                    }
                    Effect::Select { list }
                    | Effect::SetSelected { list, .. }
                    | Effect::ToggleSelected { list, .. } => (None, None, Some(list)),
                    Effect::ClearFocused | Effect::BackspaceFocused | Effect::ToggleSelf { .. } => {
                        (None, None, None)
                    }
                };
                if let Some(s) = target_screen {
                    if !ids.contains(s.as_str()) {
                        return Err(Error::Config(format!("{}: unknown screen {s}", screen.id)));
                    }
                }
                if let Some((s, e)) = element {
                    let found = self
                        .screen(s)
                        .is_some_and(|sd| sd.elements.iter().any(|x| &x.id == e));
                    if !found {
                        return Err(Error::Config(format!("{}: unknown element {s}/{e}", screen.id)));
                    }
                }
                if let Some(l) = list {
                    if !lists.contains(l.as_str()) {
                        return Err(Error::Config(format!("{}: unknown list {l}", screen.id)));
                    }
                }
            }
            Ok(())
        };
        for screen in &self.screens {
            if let Some(b) = &screen.back {
                if !ids.contains(b.as_str()) {
                    return bad(format!("{}: unknown back target {b}", screen.id));
                }
            }
            check_effects(&screen.on_swipe_up, screen)?;
            check_effects(&screen.on_swipe_down, screen)?;
            let mut seen = BTreeSet::new();
            for (i, e) in screen.elements.iter().enumerate() {
                if !seen.insert(e.id.as_str()) {
                    return bad(format!("{}: duplicate element {}", screen.id, e.id));
                }
                let b = e.bbox;
                if b.w <= 0 || b.h <= 0 || b.x < 0 || b.y < 0 || b.x + b.w > self.width || b.y + b.h > self.height
                {
                    return bad(format!("{}/{}: bbox outside screen", screen.id, e.id));
                }
                if e.kind == ElementKind::TextField && !e.state.contains_key("text") {
                    return bad(format!("{}/{}: text field without text state", screen.id, e.id));
                }
                for other in &screen.elements[i + 1..] {
                    if b.intersects(&other.bbox) {
                        return bad(format!("{}: {} overlaps {}", screen.id, e.id, other.id));
                    }
                }
                if let Some(slot) = &e.list {
                    match self.list(&slot.list) {
                        Some(l) if slot.index < l.size => {}
                        _ => return bad(format!("{}/{}: bad list slot", screen.id, e.id)),
                    }
                }
                check_effects(&e.on_click, screen)?;
                check_effects(&e.on_long_press, screen)?;
            }
        }
        Ok(())
    }
}
