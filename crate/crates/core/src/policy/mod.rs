//! Factored log-linear executor policy over kind, cell and text tokens.

pub mod features;
pub mod tokens;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::screen::NUM_CELLS;
use crate::env::{Action, ActionKind, Screen};
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::{log_softmax_in_place, Scalar};
use features::{cellf, tokf, ContextFeatures, Sparse, F};
use tokens::{admissible, next_slot, Slot, Token, VOCAB_SIZE};

pub use features::{featurize, FeatureVector};
pub use tokens::{decode, encode, Vocab};

pub const NUM_KINDS: usize = 7;

/// Executor input: observation, goal, sub-goal and injected demonstration prefix.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Context {
    pub observation: Screen,
    pub task_goal: String,
    pub sub_goal: String,
    #[serde(default)]
    pub injected_prefix: Vec<(String, Action)>,
}

/// Parameter block sizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub f: usize,
    pub c: usize,
    pub v: usize,
    pub fc: usize,
    pub fv: usize,
}

pub const DIMS: Dims = Dims { f: F, c: NUM_CELLS, v: VOCAB_SIZE, fc: cellf::FC, fv: tokf::FV };

impl Dims {
    pub fn off_cell(&self) -> usize {
        self.f * NUM_KINDS
    }
    pub fn off_tok(&self) -> usize {
        self.off_cell() + self.f * self.c
    }
    pub fn off_ucell(&self) -> usize {
        self.off_tok() + self.f * self.v
    }
    pub fn off_utok(&self) -> usize {
        self.off_ucell() + self.fc
    }
    pub fn len(&self) -> usize {
        self.off_utok() + self.fv
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Fixed logit bonus for the action the injected prefix shows for the current
/// sub-goal. Not trained; stands in for in-context copying.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CopyPrior {
    pub kind: f64,
    pub cell: f64,
    pub text: f64,
}

impl Default for CopyPrior {
    fn default() -> Self {
        CopyPrior { kind: 3.0, cell: 6.0, text: 3.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct PolicyParams<S> {
    pub theta: Vec<S>,
    pub version: u64,
    pub prior: CopyPrior,
}

/// One sampled (or scored) output sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct ActionTokens<S> {
    pub tokens: Vec<Token>,
    pub per_token_logprobs: Vec<S>,
}

impl<S: Scalar> ActionTokens<S> {
    pub fn total(&self) -> S {
        self.per_token_logprobs.iter().copied().sum()
    }
}

struct SlotView<'a, S> {
    slot: Slot,
    x: Sparse<S>,
    logp: Vec<S>,
    /// Per-option shared features (cells or tokens); empty for the kind head.
    phi: &'a [Sparse<S>],
}

impl<S: Scalar> PolicyParams<S> {
    pub fn zeros() -> Self {
        PolicyParams { theta: vec![S::zero(); DIMS.len()], version: 0, prior: CopyPrior::default() }
    }

    pub fn dims(&self) -> Dims {
        DIMS
    }

    pub fn check(&self) -> Result<()> {
        if self.theta.len() != DIMS.len() {
            return Err(Error::Validation(format!("theta has {} entries, expected {}", self.theta.len(), DIMS.len())));
        }
        if self.theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::Validation("non-finite parameter".into()));
        }
        Ok(())
    }

    fn slot_view<'a>(&self, cf: &'a ContextFeatures<S>, slot: Slot, prefix: &[Token]) -> SlotView<'a, S> {
        let d = DIMS;
        let chosen = match prefix.first() {
            Some(Token::Kind(k)) => Some(*k),
            _ => None,
        };
        let prev_text = match prefix.last() {
            Some(Token::Text(v)) => Some(*v),
            _ => None,
        };
        let x = cf.global(slot, chosen, prev_text);
        let copy = cf.copy_at(prefix.len(), chosen);
        let th = &self.theta;
        let (mut logits, phi): (Vec<S>, &[Sparse<S>]) = match slot {
            Slot::Kind => {
                let mut l = vec![S::zero(); NUM_KINDS];
                for &(f, v) in &x {
                    let row = &th[f * NUM_KINDS..(f + 1) * NUM_KINDS];
                    for (k, w) in row.iter().enumerate() {
                        l[k] = l[k] + *w * v;
                    }
                }
                if let Some(Token::Kind(k)) = copy {
                    l[k.index()] = l[k.index()] + S::of(self.prior.kind);
                }
                (l, &[])
            }
            Slot::Cell1 | Slot::Cell2 => {
                let phi = &cf.cells;
                let copy_opt = match copy {
                    Some(Token::Cell(c)) => Some(c),
                    _ => None,
                };
                let mut l = vec![S::zero(); d.c];
                for &(f, v) in &x {
                    let off = d.off_cell() + f * d.c;
                    for (c, w) in th[off..off + d.c].iter().enumerate() {
                        l[c] = l[c] + *w * v;
                    }
                }
                let u = &th[d.off_ucell()..d.off_ucell() + d.fc];
                for (c, row) in phi.iter().enumerate() {
                    for &(j, v) in row {
                        l[c] = l[c] + u[j] * v;
                    }
                }
                if let Some(c) = copy_opt {
                    l[c] = l[c] + S::of(self.prior.cell);
                }
                (l, phi)
            }
            Slot::Text(_) => {
                let phi = &cf.toks;
                let copy_opt = match copy {
                    Some(Token::Text(t)) => Some(t),
                    _ => None,
                };
                let mut l = vec![S::zero(); d.v];
                for &(f, v) in &x {
                    let off = d.off_tok() + f * d.v;
                    for (t, w) in th[off..off + d.v].iter().enumerate() {
                        l[t] = l[t] + *w * v;
                    }
                }
                let u = &th[d.off_utok()..d.off_utok() + d.fv];
                for (t, row) in phi.iter().enumerate() {
                    for &(j, v) in row {
                        l[t] = l[t] + u[j] * v;
                    }
                }
                if let Some(t) = copy_opt {
                    l[t] = l[t] + S::of(self.prior.text);
                }
                (l, phi)
            }
        };
        for (o, l) in logits.iter_mut().enumerate() {
            if !admissible(prefix, slot, o, &cf.vocab) {
                *l = S::neg_infinity();
            }
        }
        log_softmax_in_place(&mut logits);
        SlotView { slot, x, logp: logits, phi }
    }

    fn option_index(slot: Slot, t: Token) -> Result<usize> {
        match (slot, t) {
            (Slot::Kind, Token::Kind(k)) => Ok(k.index()),
            (Slot::Cell1 | Slot::Cell2, Token::Cell(c)) if c < NUM_CELLS => Ok(c),
            (Slot::Text(_), Token::Text(v)) if v < VOCAB_SIZE => Ok(v),
            _ => Err(Error::Validation(format!("token {t:?} does not fit slot {slot:?}"))),
        }
    }

    /// Log-probability of a complete token sequence, total and per token.
    pub fn logprob(&self, ctx: &Context, tokens: &[Token]) -> Result<(S, Vec<S>)> {
        self.logprob_cf(&ContextFeatures::new(ctx), tokens)
    }

    pub fn logprob_cf(&self, cf: &ContextFeatures<S>, tokens: &[Token]) -> Result<(S, Vec<S>)> {
        let mut per = Vec::with_capacity(tokens.len());
        for i in 0..tokens.len() {
            let slot = next_slot(&tokens[..i]).map_err(Error::Validation)?.ok_or_else(|| {
                Error::Validation("tokens continue past the end of the action".into())
            })?;
            let view = self.slot_view(cf, slot, &tokens[..i]);
            let lp = view.logp[Self::option_index(slot, tokens[i])?];
            if !lp.is_finite() {
                return Err(Error::Validation(format!("token {:?} is not admissible here", tokens[i])));
            }
            per.push(lp);
        }
        if next_slot(tokens).map_err(Error::Validation)?.is_some() {
            return Err(Error::Validation("incomplete token sequence".into()));
        }
        Ok((per.iter().copied().sum(), per))
    }

    /// Adds `weights[t] * d log pi(token t) / d theta` into `grad` for every token.
    pub fn accumulate_grad(&self, cf: &ContextFeatures<S>, tokens: &[Token], weights: &[S], grad: &mut [S]) -> Result<()> {
        let d = DIMS;
        for i in 0..tokens.len() {
            let w = weights[i];
            if w == S::zero() {
                continue;
            }
            let slot = next_slot(&tokens[..i]).map_err(Error::Validation)?.ok_or_else(|| {
                Error::Validation("tokens continue past the end of the action".into())
            })?;
            let view = self.slot_view(cf, slot, &tokens[..i]);
            let chosen = Self::option_index(slot, tokens[i])?;
            let probs: Vec<S> = view.logp.iter().map(|l| l.exp()).collect();
            let (off, n) = match view.slot {
                Slot::Kind => (0, NUM_KINDS),
                Slot::Cell1 | Slot::Cell2 => (d.off_cell(), d.c),
                Slot::Text(_) => (d.off_tok(), d.v),
            };
            for &(f, xv) in &view.x {
                let base = off + f * n;
                let g = &mut grad[base..base + n];
                for (a, p) in probs.iter().enumerate() {
                    g[a] = g[a] - w * xv * *p;
                }
                g[chosen] = g[chosen] + w * xv;
            }
            if !view.phi.is_empty() {
                let (uoff, ulen) = match view.slot {
                    Slot::Text(_) => (d.off_utok(), d.fv),
                    _ => (d.off_ucell(), d.fc),
                };
                let mut expected = vec![S::zero(); ulen];
                for (a, row) in view.phi.iter().enumerate() {
                    for &(j, v) in row {
                        expected[j] = expected[j] + probs[a] * v;
                    }
                }
                for &(j, v) in &view.phi[chosen] {
                    grad[uoff + j] = grad[uoff + j] + w * v;
                }
                for (j, e) in expected.iter().enumerate() {
                    grad[uoff + j] = grad[uoff + j] - w * *e;
                }
            }
        }
        Ok(())
    }

    /// Exact gradient of the total log-probability.
    pub fn logprob_grad(&self, ctx: &Context, tokens: &[Token]) -> Result<Vec<S>> {
        let cf = ContextFeatures::new(ctx);
        let mut g = vec![S::zero(); DIMS.len()];
        self.accumulate_grad(&cf, tokens, &vec![S::one(); tokens.len()], &mut g)?;
        Ok(g)
    }

    fn generate(&self, cf: &ContextFeatures<S>, mut pick: impl FnMut(&[S]) -> usize) -> ActionTokens<S> {
        let mut tokens = Vec::new();
        let mut lps = Vec::new();
        while let Ok(Some(slot)) = next_slot(&tokens) {
            let view = self.slot_view(cf, slot, &tokens);
            let a = pick(&view.logp);
            lps.push(view.logp[a]);
            tokens.push(match slot {
                Slot::Kind => Token::Kind(ActionKind::ALL[a]),
                Slot::Cell1 | Slot::Cell2 => Token::Cell(a),
                Slot::Text(_) => Token::Text(a),
            });
        }
        ActionTokens { tokens, per_token_logprobs: lps }
    }

    /// `g` independent samples; a pure function of the arguments.
    pub fn sample_group(&self, ctx: &Context, g: usize, seed: u64) -> Vec<ActionTokens<S>> {
        self.sample_group_cf(&ContextFeatures::new(ctx), g, seed)
    }

    pub fn sample_group_cf(&self, cf: &ContextFeatures<S>, g: usize, seed: u64) -> Vec<ActionTokens<S>> {
        let mut r = rng::stream(seed, &[rng::tag("sample_group")]);
        (0..g)
            .map(|_| {
                self.generate(cf, |logp| {
                    let u: f64 = r.gen();
                    let mut acc = 0.0;
                    for (i, l) in logp.iter().enumerate() {
                        acc += l.as_f64().exp();
                        if u < acc {
                            return i;
                        }
                    }
                    // rounding left a sliver past the last option
                    logp.iter().rposition(|l| l.is_finite()).unwrap_or(0)
                })
            })
            .collect()
    }

    /// Greedy decode: argmax at every slot, ties to the lowest index.
    pub fn greedy(&self, ctx: &Context) -> ActionTokens<S> {
        let cf = ContextFeatures::new(ctx);
        self.generate(&cf, |logp| {
            let mut best = 0;
            for (i, l) in logp.iter().enumerate() {
                if *l > logp[best] {
                    best = i;
                }
            }
            best
        })
    }

    /// Greedy action, `None` when the argmax sequence is malformed.
    pub fn act(&self, ctx: &Context) -> (ActionTokens<S>, Option<Action>) {
        let t = self.greedy(ctx);
        let a = decode(&t.tokens, &Vocab::from_goal(&ctx.task_goal));
        (t, a)
    }

    /// Kind-head probabilities at the first slot.
    pub fn kind_probs(&self, ctx: &Context) -> Vec<S> {
        let cf = ContextFeatures::new(ctx);
        self.slot_view(&cf, Slot::Kind, &[]).logp.iter().map(|l| l.exp()).collect()
    }

    /// Probabilities of every option at the slot following `prefix`.
    pub fn slot_probs(&self, ctx: &Context, prefix: &[Token]) -> Result<Vec<S>> {
        let cf = ContextFeatures::new(ctx);
        let slot = next_slot(prefix).map_err(Error::Validation)?.ok_or_else(|| Error::Validation("complete sequence".into()))?;
        Ok(self.slot_view(&cf, slot, prefix).logp.iter().map(|l| l.exp()).collect())
    }

    pub fn cast<T: Scalar>(&self) -> PolicyParams<T> {
        PolicyParams { theta: self.theta.iter().map(|t| T::of(t.as_f64())).collect(), version: self.version, prior: self.prior }
    }
}
