//! Action tokenization: a grammar over kind, cell and text tokens.

use serde::{Deserialize, Serialize};

use crate::env::screen::{cell_center, cell_of, NUM_CELLS};
use crate::env::{Action, ActionKind, SystemButton, TerminateStatus};

/// Fixed text tokens; goal slots follow.
pub const END: usize = 0;
pub const LIT_BACK: usize = 1;
pub const LIT_HOME: usize = 2;
pub const LIT_SUCCESS: usize = 3;
pub const LIT_FAILURE: usize = 4;
pub const FIRST_SLOT: usize = 5;
pub const NUM_SLOTS: usize = 4;
pub const VOCAB_SIZE: usize = FIRST_SLOT + NUM_SLOTS;
/// Longest text, in slot tokens.
pub const MAX_TEXT: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "t", content = "v")]
pub enum Token {
    Kind(ActionKind),
    Cell(usize),
    Text(usize),
}

/// Position type inside the decoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Slot {
    Kind,
    Cell1,
    Cell2,
    Text(usize),
}

impl Slot {
    pub const COUNT: usize = 3 + MAX_TEXT;

    pub fn index(self) -> usize {
        match self {
            Slot::Kind => 0,
            Slot::Cell1 => 1,
            Slot::Cell2 => 2,
            Slot::Text(j) => 3 + j,
        }
    }
}

/// Spans enclosed in single or double quotes, in order of appearance.
pub fn quoted_spans(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut open: Option<(char, usize)> = None;
    for (i, c) in text.char_indices() {
        if c != '\'' && c != '"' {
            continue;
        }
        match open {
            None => open = Some((c, i + c.len_utf8())),
            Some((q, start)) if q == c => {
                out.push(text[start..i].to_string());
                open = None;
            }
            Some(_) => {}
        }
    }
    out
}

/// Text vocabulary of one context: fixed literals plus up to four goal slots.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Vocab {
    pub slots: Vec<String>,
}

impl Vocab {
    pub fn from_goal(goal: &str) -> Self {
        let mut slots: Vec<String> = Vec::new();
        for s in quoted_spans(goal) {
            if !s.is_empty() && !slots.contains(&s) && slots.len() < NUM_SLOTS {
                slots.push(s);
            }
        }
        Vocab { slots }
    }

    pub fn slot_value(&self, token: usize) -> Option<&str> {
        token.checked_sub(FIRST_SLOT).and_then(|j| self.slots.get(j)).map(String::as_str)
    }

    pub fn slot_of(&self, text: &str) -> Option<usize> {
        self.slots.iter().position(|s| s == text).map(|j| FIRST_SLOT + j)
    }

    /// Slot tokens spelling `text`, as one slot or up to MAX_TEXT slots joined by spaces.
    pub fn spell(&self, text: &str) -> Option<Vec<usize>> {
        if let Some(t) = self.slot_of(text) {
            return Some(vec![t]);
        }
        // greedy split on spaces into known slots
        let words: Vec<&str> = text.split(' ').collect();
        let mut out = Vec::new();
        let mut i = 0;
        while i < words.len() {
            let mut found = None;
            for j in (i + 1..=words.len()).rev() {
                if let Some(t) = self.slot_of(&words[i..j].join(" ")) {
                    found = Some((t, j));
                    break;
                }
            }
            let (t, j) = found?;
            out.push(t);
            i = j;
        }
        (out.len() <= MAX_TEXT && !out.is_empty()).then_some(out)
    }
}

/// Next decoder slot after `prefix`, or `None` when the sequence is complete.
/// Fails when `prefix` does not follow the grammar.
pub fn next_slot(prefix: &[Token]) -> Result<Option<Slot>, String> {
    let Some(first) = prefix.first() else { return Ok(Some(Slot::Kind)) };
    let Token::Kind(kind) = *first else { return Err("sequence must start with a kind token".into()) };
    let rest = &prefix[1..];
    let expect_cells = kind.coordinate_arity();
    for (i, t) in rest.iter().enumerate() {
        let ok = if i < expect_cells { matches!(t, Token::Cell(c) if *c < NUM_CELLS) } else { matches!(t, Token::Text(v) if *v < VOCAB_SIZE) };
        if !ok {
            return Err(format!("unexpected token {t:?} at position {}", i + 1));
        }
    }
    if rest.len() < expect_cells {
        return Ok(Some(if rest.is_empty() { Slot::Cell1 } else { Slot::Cell2 }));
    }
    let texts: Vec<usize> = rest[expect_cells..].iter().map(|t| if let Token::Text(v) = t { *v } else { 0 }).collect();
    match kind {
        ActionKind::Click | ActionKind::LongPress | ActionKind::Swipe => {
            if texts.is_empty() { Ok(None) } else { Err("coordinate action takes no text".into()) }
        }
        ActionKind::SystemButton | ActionKind::Terminate => match texts.len() {
            0 => Ok(Some(Slot::Text(0))),
            1 => Ok(None),
            _ => Err("literal action takes one token".into()),
        },
        ActionKind::Type | ActionKind::Answer => {
            for (j, &v) in texts.iter().enumerate() {
                let last = j + 1 == texts.len();
                if v < FIRST_SLOT && !last {
                    return Err("text continues after a terminating token".into());
                }
            }
            match texts.last() {
                Some(&v) if v < FIRST_SLOT => Ok(None),
                _ if texts.len() >= MAX_TEXT => Ok(None),
                _ => Ok(Some(Slot::Text(texts.len()))),
            }
        }
    }
}

/// Whether option `option` at the slot after `prefix` can still complete to a
/// decodable action. Sampling is restricted to admissible options.
pub fn admissible(prefix: &[Token], slot: Slot, option: usize, vocab: &Vocab) -> bool {
    let valued = |v: usize| vocab.slot_value(v).is_some();
    match slot {
        Slot::Kind => {
            !ActionKind::ALL[option].takes_text() || !vocab.slots.is_empty()
        }
        Slot::Cell1 | Slot::Cell2 => option < NUM_CELLS,
        Slot::Text(j) => match prefix.first() {
            Some(Token::Kind(ActionKind::SystemButton)) => option == LIT_BACK || option == LIT_HOME,
            Some(Token::Kind(ActionKind::Terminate)) => option == LIT_SUCCESS || option == LIT_FAILURE,
            _ => valued(option) || (j > 0 && option == END),
        },
    }
}

/// Decodes a complete token sequence; `None` for malformed outputs.
pub fn decode(tokens: &[Token], vocab: &Vocab) -> Option<Action> {
    if next_slot(tokens).ok()? .is_some() {
        return None;
    }
    let Token::Kind(kind) = tokens[0] else { return None };
    let cell = |i: usize| match tokens.get(i) {
        Some(Token::Cell(c)) => Some(cell_center(*c)),
        _ => None,
    };
    let text = |i: usize| match tokens.get(i) {
        Some(Token::Text(v)) => Some(*v),
        _ => None,
    };
    Some(match kind {
        ActionKind::Click => Action::click(cell(1)?),
        ActionKind::LongPress => Action::long_press(cell(1)?),
        ActionKind::Swipe => Action::swipe(cell(1)?, cell(2)?),
        ActionKind::SystemButton => Action::system(match text(1)? {
            LIT_BACK => SystemButton::Back,
            LIT_HOME => SystemButton::Home,
            _ => return None,
        }),
        ActionKind::Terminate => Action::terminate(match text(1)? {
            LIT_SUCCESS => TerminateStatus::Success,
            LIT_FAILURE => TerminateStatus::Failure,
            _ => return None,
        }),
        ActionKind::Type | ActionKind::Answer => {
            let mut parts = Vec::new();
            for t in &tokens[1..] {
                let Token::Text(v) = *t else { return None };
                if v == END {
                    break;
                }
                parts.push(vocab.slot_value(v)?.to_string());
            }
            if parts.is_empty() {
                return None;
            }
            let s = parts.join(" ");
            if kind == ActionKind::Type { Action::type_text(s) } else { Action::answer(s) }
        }
    })
}

/// Token sequence for a well-formed action. Coordinates map to their cell;
/// text must be spelled by the vocabulary.
pub fn encode(action: &Action, vocab: &Vocab) -> Option<Vec<Token>> {
    let mut out = vec![Token::Kind(action.kind)];
    match action.kind {
        ActionKind::Click | ActionKind::LongPress => out.push(Token::Cell(cell_of(action.coordinate?))),
        ActionKind::Swipe => {
            out.push(Token::Cell(cell_of(action.coordinate?)));
            out.push(Token::Cell(cell_of(action.coordinate2?)));
        }
        ActionKind::SystemButton => out.push(Token::Text(match action.button? {
            SystemButton::Back => LIT_BACK,
            SystemButton::Home => LIT_HOME,
        })),
        ActionKind::Terminate => out.push(Token::Text(match action.status? {
            TerminateStatus::Success => LIT_SUCCESS,
            TerminateStatus::Failure => LIT_FAILURE,
        })),
        ActionKind::Type | ActionKind::Answer => {
            let spelled = vocab.spell(action.text.as_deref()?)?;
            let n = spelled.len();
            out.extend(spelled.into_iter().map(Token::Text));
            if n < MAX_TEXT {
                out.push(Token::Text(END));
            }
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Point;

    fn vocab() -> Vocab {
        Vocab::from_goal("Reply 'See you' to 'Ivy Adams'. Answer 'yes' or 'no'.")
    }

    #[test]
    fn spans_and_vocab() {
        assert_eq!(quoted_spans("Tap the \"Save\" button and 'x'"), vec!["Save", "x"]);
        assert_eq!(vocab().slots, vec!["See you", "Ivy Adams", "yes", "no"]);
    }

    #[test]
    fn round_trips() {
        let v = vocab();
        let actions = [
            Action::click(cell_center(17)),
            Action::swipe(cell_center(222), cell_center(102)),
            Action::type_text("See you"),
            Action::type_text("See you Ivy Adams"),
            Action::answer("no"),
            Action::system(SystemButton::Back),
            Action::terminate(TerminateStatus::Failure),
        ];
        for a in actions {
            let t = encode(&a, &v).unwrap();
            assert_eq!(decode(&t, &v).unwrap(), a);
        }
    }

    #[test]
    fn grammar() {
        let v = vocab();
        assert_eq!(next_slot(&[]).unwrap(), Some(Slot::Kind));
        let swipe1 = [Token::Kind(ActionKind::Swipe), Token::Cell(3)];
        assert_eq!(next_slot(&swipe1).unwrap(), Some(Slot::Cell2));
        assert!(decode(&swipe1, &v).is_none());
        let empty_text = [Token::Kind(ActionKind::Type), Token::Text(END)];
        assert_eq!(next_slot(&empty_text).unwrap(), None);
        assert!(decode(&empty_text, &v).is_none());
        let bad_button = [Token::Kind(ActionKind::SystemButton), Token::Text(LIT_SUCCESS)];
        assert!(decode(&bad_button, &v).is_none());
        assert!(next_slot(&[Token::Cell(1)]).is_err());
        let p = Point::new(500, 500);
        assert_eq!(encode(&Action::click(p), &v).unwrap()[1], Token::Cell(cell_of(p)));
    }
}
