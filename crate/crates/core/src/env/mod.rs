//! Deterministic synthetic GUI device.

pub mod action;
pub mod builtin;
pub mod definition;
pub mod screen;
pub mod sim;
pub mod template;

pub use action::{Action, ActionKind, Point, SystemButton, TerminateStatus};
pub use definition::{EnvDefinition, SuccessCheck};
pub use screen::{BBox, ElementKind, Screen, UiElement};
pub use sim::{EndReason, EnvState, Fault, MiniDroid, StepOutcome, DEFAULT_HORIZON};
