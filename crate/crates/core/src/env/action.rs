use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pixel coordinate on the device canvas. Serialized as `[x, y]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[i32; 2]", into = "[i32; 2]")]
pub struct Point {
    pub x: i32,
    pub y: i32,
}

impl Point {
    pub const fn new(x: i32, y: i32) -> Self {
        Point { x, y }
    }

    /// Euclidean distance in pixels.
    pub fn distance(self, other: Point) -> f64 {
        let dx = (self.x - other.x) as f64;
        let dy = (self.y - other.y) as f64;
        (dx * dx + dy * dy).sqrt()
    }
}

impl From<[i32; 2]> for Point {
    fn from(v: [i32; 2]) -> Self {
        Point::new(v[0], v[1])
    }
}

impl From<(i32, i32)> for Point {
    fn from(v: (i32, i32)) -> Self {
        Point::new(v.0, v.1)
    }
}

impl From<Point> for [i32; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Click,
    LongPress,
    Swipe,
    Type,
    SystemButton,
    Terminate,
    Answer,
}

impl ActionKind {
    pub const ALL: [ActionKind; 7] = [
        ActionKind::Click,
        ActionKind::LongPress,
        ActionKind::Swipe,
        ActionKind::Type,
        ActionKind::SystemButton,
        ActionKind::Terminate,
        ActionKind::Answer,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Ends the episode.
    pub fn is_terminal(self) -> bool {
        matches!(self, ActionKind::Terminate | ActionKind::Answer)
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::Click => "click",
            ActionKind::LongPress => "long_press",
            ActionKind::Swipe => "swipe",
            ActionKind::Type => "type",
            ActionKind::SystemButton => "system_button",
            ActionKind::Terminate => "terminate",
            ActionKind::Answer => "answer",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|k| k.as_str() == s)
    }

    /// Number of coordinate arguments the kind takes.
    pub fn coordinate_arity(self) -> usize {
        match self {
            ActionKind::Click | ActionKind::LongPress => 1,
            ActionKind::Swipe => 2,
            _ => 0,
        }
    }

    pub fn takes_text(self) -> bool {
        matches!(self, ActionKind::Type | ActionKind::Answer)
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemButton {
    Back,
    Home,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminateStatus {
    Success,
    Failure,
}

/// One atomic device action.
///
/// The argument set is dictated by `kind`; see [`Action::validate`].
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub kind: ActionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coordinate: Option<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coordinate2: Option<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub button: Option<SystemButton>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<TerminateStatus>,
}

impl Action {
    fn bare(kind: ActionKind) -> Self {
        Action {
            kind,
            coordinate: None,
            coordinate2: None,
            text: None,
            button: None,
            status: None,
        }
    }

    pub fn click(p: Point) -> Self {
        Action {
            coordinate: Some(p),
            ..Self::bare(ActionKind::Click)
        }
    }

    pub fn long_press(p: Point) -> Self {
        Action {
            coordinate: Some(p),
            ..Self::bare(ActionKind::LongPress)
        }
    }

    pub fn swipe(from: Point, to: Point) -> Self {
        Action {
            coordinate: Some(from),
            coordinate2: Some(to),
            ..Self::bare(ActionKind::Swipe)
        }
    }

    pub fn type_text(text: impl Into<String>) -> Self {
        Action {
            text: Some(text.into()),
            ..Self::bare(ActionKind::Type)
        }
    }

    pub fn system(button: SystemButton) -> Self {
        Action {
            button: Some(button),
            ..Self::bare(ActionKind::SystemButton)
        }
    }

    pub fn terminate(status: TerminateStatus) -> Self {
        Action {
            status: Some(status),
            ..Self::bare(ActionKind::Terminate)
        }
    }

    pub fn answer(text: impl Into<String>) -> Self {
        Action {
            text: Some(text.into()),
            ..Self::bare(ActionKind::Answer)
        }
    }

    /// Checks the per-kind argument contract and that coordinates are on screen.
    pub fn validate(&self, width: i32, height: i32) -> Result<()> {
        let arity = self.kind.coordinate_arity();
        let has = [self.coordinate.is_some(), self.coordinate2.is_some()];
        let expected = [arity >= 1, arity >= 2];
        if has != expected {
            return Err(Error::Validation(format!(
                "{} takes {} coordinate(s)",
                self.kind, arity
            )));
        }
        for p in [self.coordinate, self.coordinate2].into_iter().flatten() {
            if p.x < 0 || p.y < 0 || p.x >= width || p.y >= height {
                return Err(Error::Validation(format!(
                    "coordinate ({}, {}) outside {}x{} screen",
                    p.x, p.y, width, height
                )));
            }
        }
        let wants_text = self.kind.takes_text();
        match (&self.text, wants_text) {
            (Some(t), true) if t.is_empty() => {
                return Err(Error::Validation(format!("{} requires non-empty text", self.kind)))
            }
            (Some(_), true) | (None, false) => {}
            _ => {
                return Err(Error::Validation(format!(
                    "{} {} text",
                    self.kind,
                    if wants_text { "requires" } else { "takes no" }
                )))
            }
        }
        if self.button.is_some() != (self.kind == ActionKind::SystemButton) {
            return Err(Error::Validation(format!("{} button argument mismatch", self.kind)));
        }
        if self.status.is_some() != (self.kind == ActionKind::Terminate) {
            return Err(Error::Validation(format!("{} status argument mismatch", self.kind)));
        }
        Ok(())
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}", self.kind)?;
        if let Some(p) = self.coordinate {
            write!(f, ", ({}, {})", p.x, p.y)?;
        }
        if let Some(p) = self.coordinate2 {
            write!(f, ", ({}, {})", p.x, p.y)?;
        }
        if let Some(t) = &self.text {
            write!(f, ", {t:?}")?;
        }
        if let Some(b) = self.button {
            write!(f, ", {b:?}")?;
        }
        if let Some(s) = self.status {
            write!(f, ", {s:?}")?;
        }
        f.write_str("]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arity_rules() {
        assert!(Action::click(Point::new(10, 10)).validate(1080, 2400).is_ok());
        let mut swipe_one = Action::swipe(Point::new(1, 1), Point::new(2, 2));
        swipe_one.coordinate2 = None;
        assert!(swipe_one.validate(1080, 2400).is_err());
        assert!(Action::type_text("").validate(1080, 2400).is_err());
        assert!(Action::click(Point::new(1080, 5)).validate(1080, 2400).is_err());
        let mut bad = Action::system(SystemButton::Back);
        bad.text = Some("x".into());
        assert!(bad.validate(1080, 2400).is_err());
    }

    #[test]
    fn point_serializes_as_pair() {
        let json = serde_json::to_string(&Action::swipe(Point::new(546, 2000), Point::new(546, 800))).unwrap();
        assert_eq!(json, r#"{"kind":"swipe","coordinate":[546,2000],"coordinate2":[546,800]}"#);
    }
}
