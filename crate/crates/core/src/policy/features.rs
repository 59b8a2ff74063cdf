//! Hand-crafted features standing in for perception.

use super::tokens::{encode, quoted_spans, Slot, Token, Vocab, FIRST_SLOT, NUM_SLOTS, VOCAB_SIZE};
use super::Context;
use crate::env::screen::{cell_of, ElementKind, GRID_COLS, GRID_ROWS, NUM_CELLS};
use crate::env::{ActionKind, UiElement};
use crate::rng::tag;
use crate::scalar::Scalar;

const VERBS: [&str; 12] =
    ["tap", "long", "press", "swipe", "type", "answer", "back", "home", "finish", "up", "down", "enter"];
const STOP: [&str; 14] =
    ["the", "a", "an", "to", "on", "in", "of", "and", "or", "is", "it", "as", "with", "for"];

const SG_BUCKETS: usize = 64;
const SCREEN_BUCKETS: usize = 32;
const GOAL_BUCKETS: usize = 32;
const KIND_NONE: usize = 7;

pub const OFF_BIAS: usize = 0;
pub const OFF_SLOTKIND: usize = OFF_BIAS + 1;
pub const OFF_PREV: usize = OFF_SLOTKIND + Slot::COUNT * 8;
pub const OFF_VERB: usize = OFF_PREV + VOCAB_SIZE;
pub const OFF_SG: usize = OFF_VERB + VERBS.len();
pub const OFF_SCREEN: usize = OFF_SG + SG_BUCKETS;
pub const OFF_GOAL: usize = OFF_SCREEN + SCREEN_BUCKETS;
pub const OFF_PREFIX: usize = OFF_GOAL + GOAL_BUCKETS;
pub const OFF_FOCUS: usize = OFF_PREFIX + 9;
/// Global feature dimension.
pub const F: usize = OFF_FOCUS + 2;

/// Per-cell feature indices.
pub mod cellf {
    pub const EXACT: usize = 0;
    pub const EXACT_BOX: usize = 1;
    pub const OVERLAP: usize = 2;
    pub const GOAL_EXACT: usize = 3;
    pub const GOAL_OVERLAP: usize = 4;
    pub const ANCHOR: usize = 5;
    pub const KIND: usize = 6;
    pub const INSIDE: usize = 12;
    pub const FC: usize = 13;
}

/// Per-token feature indices.
pub mod tokf {
    pub const IN_SUBGOAL: usize = 0;
    pub const STATE_OF_QUOTED: usize = 1;
    pub const IS_LABEL: usize = 2;
    pub const FV: usize = 3;
}

pub type Sparse<S> = Vec<(usize, S)>;

pub fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .filter(|w| !STOP.contains(&w.as_str()))
        .collect()
}

/// Text outside quotes.
fn unquoted(text: &str) -> String {
    let mut out = String::new();
    let mut open: Option<char> = None;
    for c in text.chars() {
        match (open, c) {
            (None, '\'' | '"') => open = Some(c),
            (Some(q), _) if q == c => open = None,
            (None, _) => out.push(c),
            _ => {}
        }
    }
    out
}

/// Fraction of the label's words present in `words`.
pub fn overlap(label: &str, words_of_text: &[String]) -> f64 {
    let lw = words(label);
    if lw.is_empty() {
        return 0.0;
    }
    lw.iter().filter(|w| words_of_text.contains(w)).count() as f64 / lw.len() as f64
}

fn bucket(s: &str, n: usize) -> usize {
    (tag(s) % n as u64) as usize
}

fn cells_of(e: &UiElement) -> impl Iterator<Item = usize> + '_ {
    let b = e.bbox;
    let cw = crate::env::screen::CELL_WIDTH;
    let ch = crate::env::screen::CELL_HEIGHT;
    let (c0, c1) = (b.x / cw, ((b.x + b.w - 1) / cw).min(GRID_COLS - 1));
    let (r0, r1) = (b.y / ch, ((b.y + b.h - 1) / ch).min(GRID_ROWS - 1));
    (r0..=r1).flat_map(move |r| (c0..=c1).map(move |c| (r * GRID_COLS + c) as usize))
}

/// Context-level features, computed once and reused for every slot.
#[derive(Clone, Debug)]
pub struct ContextFeatures<S> {
    pub vocab: Vocab,
    pub base: Sparse<S>,
    /// Tokens of the prefix action demonstrating the current sub-goal.
    pub copy: Option<Vec<Token>>,
    /// Cell features without the copy entry, indexed by cell.
    pub cells: Vec<Sparse<S>>,
    pub toks: Vec<Sparse<S>>,
}

impl<S: Scalar> ContextFeatures<S> {
    pub fn new(ctx: &Context) -> Self {
        let vocab = Vocab::from_goal(&ctx.task_goal);
        let one = S::one();
        let mut base: Sparse<S> = vec![(OFF_BIAS, one)];
        let sg_words = words(&ctx.sub_goal);
        let goal_words = words(&ctx.task_goal);
        for (i, v) in VERBS.iter().enumerate() {
            if sg_words.iter().any(|w| w == v) {
                base.push((OFF_VERB + i, one));
            }
        }
        let mut sg_b: Vec<usize> = words(&unquoted(&ctx.sub_goal)).iter().map(|w| bucket(w, SG_BUCKETS)).collect();
        sg_b.sort_unstable();
        sg_b.dedup();
        base.extend(sg_b.into_iter().map(|b| (OFF_SG + b, one)));
        base.push((OFF_SCREEN + bucket(&ctx.observation.screen_id, SCREEN_BUCKETS), one));
        let mut g_b: Vec<usize> = words(&unquoted(&ctx.task_goal)).iter().map(|w| bucket(w, GOAL_BUCKETS)).collect();
        g_b.sort_unstable();
        g_b.dedup();
        base.extend(g_b.into_iter().map(|b| (OFF_GOAL + b, one)));

        let copy = ctx
            .injected_prefix
            .iter()
            .find(|(ins, _)| *ins == ctx.sub_goal)
            .and_then(|(_, a)| encode(a, &vocab));
        if let Some((_, last)) = ctx.injected_prefix.last() {
            base.push((OFF_PREFIX, one));
            base.push((OFF_PREFIX + 1, S::of(ctx.injected_prefix.len() as f64 / 10.0)));
            base.push((OFF_PREFIX + 2 + last.kind.index(), one));
        }
        let sg_spans = quoted_spans(&ctx.sub_goal);
        let goal_spans = quoted_spans(&ctx.task_goal);
        let elements = &ctx.observation.elements;
        if elements.iter().any(|e| e.state.get("focused").is_some_and(|v| v == "true")) {
            base.push((OFF_FOCUS, one));
        }
        if sg_spans.iter().any(|s| !elements.iter().any(|e| &e.label == s)) {
            base.push((OFF_FOCUS + 1, one));
        }

        let mut dense = vec![[0.0f64; cellf::FC]; NUM_CELLS];
        for e in elements {
            let anchor = cell_of(e.bbox.anchor());
            let exact = sg_spans.contains(&e.label);
            for c in cells_of(e) {
                if c == anchor {
                    continue;
                }
                dense[c][cellf::INSIDE] = 1.0;
                if exact {
                    dense[c][cellf::EXACT_BOX] = 1.0;
                }
            }
            let d = &mut dense[anchor];
            d[cellf::ANCHOR] = 1.0;
            d[cellf::KIND + e.kind.index()] = 1.0;
            if exact {
                d[cellf::EXACT] = 1.0;
            }
            if goal_spans.contains(&e.label) {
                d[cellf::GOAL_EXACT] = 1.0;
            }
            d[cellf::OVERLAP] = d[cellf::OVERLAP].max(overlap(&e.label, &sg_words));
            d[cellf::GOAL_OVERLAP] = d[cellf::GOAL_OVERLAP].max(overlap(&e.label, &goal_words));
        }
        let cells = dense
            .iter()
            .map(|row| row.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, v)| (j, S::of(*v))).collect())
            .collect();

        let quoted_states: Vec<&String> = elements
            .iter()
            .filter(|e| sg_spans.contains(&e.label))
            .flat_map(|e| e.state.values())
            .collect();
        let toks = (0..VOCAB_SIZE)
            .map(|v| {
                let mut f: Sparse<S> = Vec::new();
                if let Some(val) = vocab.slot_value(v) {
                    if sg_spans.iter().any(|s| s == val) {
                        f.push((tokf::IN_SUBGOAL, one));
                    }
                    if quoted_states.iter().any(|s| *s == val) {
                        f.push((tokf::STATE_OF_QUOTED, one));
                    }
                    if elements.iter().any(|e| e.label == val) {
                        f.push((tokf::IS_LABEL, one));
                    }
                }
                f
            })
            .collect();
        debug_assert!(VOCAB_SIZE == FIRST_SLOT + NUM_SLOTS);
        ContextFeatures { vocab, base, copy, cells, toks }
    }

    /// Copy token for position `pos` if the sampled prefix agrees with the copy action's kind.
    pub fn copy_at(&self, pos: usize, chosen: Option<ActionKind>) -> Option<Token> {
        let copy = self.copy.as_ref()?;
        if pos > 0 && copy.first() != chosen.map(Token::Kind).as_ref() {
            return None;
        }
        copy.get(pos).copied()
    }

    /// Global features at a decoder slot.
    pub fn global(&self, slot: Slot, chosen: Option<ActionKind>, prev_text: Option<usize>) -> Sparse<S> {
        let mut x = self.base.clone();
        let k = chosen.map_or(KIND_NONE, ActionKind::index);
        x.push((OFF_SLOTKIND + slot.index() * 8 + k, S::one()));
        if let Some(p) = prev_text {
            x.push((OFF_PREV + p, S::one()));
        }
        x
    }
}

/// Fixed-length dense view: global features at the kind slot, cell
/// features and token features. The injected prefix only enters through the
/// copy prior, so it does not appear here.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector<S> {
    pub values: Vec<S>,
}

pub const FEATURE_DIM: usize = F + NUM_CELLS * cellf::FC + VOCAB_SIZE * tokf::FV;

pub fn featurize<S: Scalar>(ctx: &Context) -> FeatureVector<S> {
    let cf = ContextFeatures::<S>::new(ctx);
    let mut values = vec![S::zero(); FEATURE_DIM];
    for (i, v) in cf.global(Slot::Kind, None, None) {
        values[i] = v;
    }
    for (c, row) in cf.cells.iter().enumerate() {
        for &(j, v) in row {
            values[F + c * cellf::FC + j] = v;
        }
    }
    for (t, row) in cf.toks.iter().enumerate() {
        for &(j, v) in row {
            values[F + NUM_CELLS * cellf::FC + t * tokf::FV + j] = v;
        }
    }
    FeatureVector { values }
}

/// Index of the cell-feature entry `j` for cell `c` inside a [`FeatureVector`].
pub fn cell_feature_index(c: usize, j: usize) -> usize {
    F + c * cellf::FC + j
}

const _: () = assert!(cellf::KIND + ElementKind::ALL.len() == cellf::INSIDE);
