//! Step-level rewards and the error-class partition.

use serde::{Deserialize, Serialize};

use crate::env::{Action, ActionKind};
use crate::error::{Error, Result};
use crate::policy::tokens::{decode, Token, Vocab};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    /// Coordinate tolerance in pixels.
    pub epsilon: f64,
    pub lambda_fmt: f64,
    pub lambda_content: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig { epsilon: 50.0, lambda_fmt: 1.0, lambda_content: 1.0 }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        if self.lambda_fmt < 0.0 || self.lambda_content < 0.0 {
            return Err(Error::Config("reward weights must be non-negative".into()));
        }
        Ok(())
    }

    pub fn max_reward(&self) -> f64 {
        self.lambda_fmt + self.lambda_content
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorClass {
    Correct,
    TypeError,
    ParamError,
}

/// 1 iff the tokens decode to a well-formed action.
pub fn format_reward(tokens: &[Token], vocab: &Vocab) -> u8 {
    decode(tokens, vocab).is_some() as u8
}

fn params_match(a: &Action, expert: &Action, eps: f64) -> bool {
    let near = |p: Option<crate::env::Point>, q: Option<crate::env::Point>| match (p, q) {
        (Some(p), Some(q)) => p.distance(q) < eps,
        _ => false,
    };
    match a.kind {
        ActionKind::Click | ActionKind::LongPress => near(a.coordinate, expert.coordinate),
        ActionKind::Swipe => near(a.coordinate, expert.coordinate) && near(a.coordinate2, expert.coordinate2),
        ActionKind::Type | ActionKind::Answer => a.text == expert.text,
        ActionKind::SystemButton => a.button == expert.button,
        ActionKind::Terminate => a.status == expert.status,
    }
}

pub fn classify(a: &Action, expert: &Action, cfg: &RewardConfig) -> ErrorClass {
    if a.kind != expert.kind {
        ErrorClass::TypeError
    } else if params_match(a, expert, cfg.epsilon) {
        ErrorClass::Correct
    } else {
        ErrorClass::ParamError
    }
}

pub fn content_reward(a: &Action, expert: &Action, cfg: &RewardConfig) -> u8 {
    (classify(a, expert, cfg) == ErrorClass::Correct) as u8
}

/// Reward components of one candidate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_fmt: u8,
    pub r_content: u8,
    pub total: f64,
}

/// `lambda_fmt * r_fmt + lambda_content * r_content`; content needs format.
pub fn score(decoded: Option<&Action>, expert: &Action, cfg: &RewardConfig) -> RewardBreakdown {
    let r_fmt = decoded.is_some() as u8;
    let r_content = decoded.map_or(0, |a| content_reward(a, expert, cfg));
    RewardBreakdown { r_fmt, r_content, total: cfg.lambda_fmt * r_fmt as f64 + cfg.lambda_content * r_content as f64 }
}

pub fn total_reward(tokens: &[Token], vocab: &Vocab, expert: &Action, cfg: &RewardConfig) -> f64 {
    score(decode(tokens, vocab).as_ref(), expert, cfg).total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Point, TerminateStatus};

    #[test]
    fn examples() {
        let cfg = RewardConfig::default();
        let e = Action::click(Point::new(103, 104));
        assert_eq!(content_reward(&Action::click(Point::new(100, 100)), &e, &cfg), 1);
        assert_eq!(classify(&Action::swipe(Point::new(1, 1), Point::new(1, 900)), &e, &cfg), ErrorClass::TypeError);
        assert_eq!(classify(&Action::click(Point::new(303, 104)), &e, &cfg), ErrorClass::ParamError);
        let t = Action::type_text("presentation_fGwr.m4a");
        assert_eq!(content_reward(&t, &t, &cfg), 1);
        assert_eq!(content_reward(&Action::type_text("presentation_fGwR.m4a"), &t, &cfg), 0);
        let s = Action::terminate(TerminateStatus::Success);
        assert_eq!(score(Some(&s), &s, &cfg).total, 2.0);
        assert_eq!(score(Some(&e), &s, &cfg).total, 1.0);
        assert_eq!(score(None, &s, &cfg).total, 0.0);
    }
}
