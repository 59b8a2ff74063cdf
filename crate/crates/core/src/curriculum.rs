//! Error-decoupled replay balancing and annealed demonstration injection.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::Action;
use crate::error::{Error, Result};
use crate::policy::tokens::{decode, Token, Vocab};
use crate::policy::Context;
use crate::reward::{classify, ErrorClass, RewardConfig};
use crate::rng;
use crate::scalar::Scalar;
use crate::tasks::{Demonstration, TrainingSample};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct ErrorRates<S> {
    pub eta_type: S,
    pub eta_param: S,
}

impl<S: Scalar> ErrorRates<S> {
    pub fn difficulty(&self) -> S {
        self.eta_type + self.eta_param
    }
}

/// Error class of a raw candidate. A malformed output counts as a type error
/// unless its kind token matches the expert, in which case its parameters are wrong.
pub fn classify_tokens(tokens: &[Token], vocab: &Vocab, expert: &Action, cfg: &RewardConfig) -> ErrorClass {
    match decode(tokens, vocab) {
        Some(a) => classify(&a, expert, cfg),
        None => match tokens.first() {
            Some(Token::Kind(k)) if *k == expert.kind => ErrorClass::ParamError,
            _ => ErrorClass::TypeError,
        },
    }
}

pub fn rates_from_classes<S: Scalar>(classes: &[ErrorClass]) -> Result<ErrorRates<S>> {
    if classes.is_empty() {
        return Err(Error::Validation("empty candidate list".into()));
    }
    let n = S::of_usize(classes.len());
    let count = |c: ErrorClass| S::of_usize(classes.iter().filter(|x| **x == c).count());
    Ok(ErrorRates { eta_type: count(ErrorClass::TypeError) / n, eta_param: count(ErrorClass::ParamError) / n })
}

pub fn estimate_error_rates<S: Scalar>(candidates: &[Action], expert: &Action, cfg: &RewardConfig) -> Result<ErrorRates<S>> {
    let classes: Vec<ErrorClass> = candidates.iter().map(|a| classify(a, expert, cfg)).collect();
    rates_from_classes(&classes)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolId {
    Con,
    Type,
    Param,
}

impl PoolId {
    pub const ALL: [PoolId; 3] = [PoolId::Con, PoolId::Type, PoolId::Param];

    pub fn index(self) -> usize {
        self as usize
    }
}

pub fn assign_pool<S: Scalar>(rates: &ErrorRates<S>, tau: S) -> PoolId {
    if rates.eta_type >= tau && rates.eta_type >= rates.eta_param {
        PoolId::Type
    } else if rates.eta_param >= tau && rates.eta_param > rates.eta_type {
        PoolId::Param
    } else {
        PoolId::Con
    }
}

/// Dataset indices per pool with their cached error rates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct ReplayPools<S> {
    pub con: Vec<(usize, ErrorRates<S>)>,
    pub type_pool: Vec<(usize, ErrorRates<S>)>,
    pub param_pool: Vec<(usize, ErrorRates<S>)>,
    pub ratios: [S; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct BatchItem<S> {
    pub sample: usize,
    pub pool: PoolId,
    pub rates: ErrorRates<S>,
}

impl<S: Scalar> ReplayPools<S> {
    pub fn new(ratios: [S; 3]) -> Result<Self> {
        let sum: S = ratios.iter().copied().sum();
        if ratios.iter().any(|r| *r < S::zero()) || (sum - S::one()).abs() > S::of(1e-12) {
            return Err(Error::Config("pool ratios must be non-negative and sum to 1".into()));
        }
        Ok(ReplayPools { con: Vec::new(), type_pool: Vec::new(), param_pool: Vec::new(), ratios })
    }

    /// Assigns every sample by its rates; `balanced = false` puts everything in `con`.
    pub fn assign(ratios: [S; 3], rates: &[ErrorRates<S>], tau: S, balanced: bool) -> Result<Self> {
        let mut p = ReplayPools::new(ratios)?;
        for (i, r) in rates.iter().enumerate() {
            let id = if balanced { assign_pool(r, tau) } else { PoolId::Con };
            p.pool_mut(id).push((i, *r));
        }
        Ok(p)
    }

    pub fn pool(&self, id: PoolId) -> &[(usize, ErrorRates<S>)] {
        match id {
            PoolId::Con => &self.con,
            PoolId::Type => &self.type_pool,
            PoolId::Param => &self.param_pool,
        }
    }

    fn pool_mut(&mut self, id: PoolId) -> &mut Vec<(usize, ErrorRates<S>)> {
        match id {
            PoolId::Con => &mut self.con,
            PoolId::Type => &mut self.type_pool,
            PoolId::Param => &mut self.param_pool,
        }
    }

    pub fn sizes(&self) -> [usize; 3] {
        [self.con.len(), self.type_pool.len(), self.param_pool.len()]
    }

    /// Per-pool counts for a batch of `batch_size`.
    pub fn batch_counts(&self, batch_size: usize) -> Result<[usize; 3]> {
        let sizes = self.sizes();
        if sizes.iter().all(|s| *s == 0) {
            return Err(Error::Validation("all replay pools are empty".into()));
        }
        let ratios: [f64; 3] = [self.ratios[0].as_f64(), self.ratios[1].as_f64(), self.ratios[2].as_f64()];
        let mut counts = largest_remainder(&ratios, batch_size);
        if sizes[0] > 0 {
            for i in 1..3 {
                if sizes[i] == 0 {
                    counts[0] += counts[i];
                    counts[i] = 0;
                }
            }
        } else {
            // no consolidation pool to absorb the quota: re-split over the non-empty pools
            let mut w = [0.0; 3];
            for i in 1..3 {
                if sizes[i] > 0 {
                    w[i] = ratios[i];
                }
            }
            if w.iter().sum::<f64>() <= 0.0 {
                for i in 1..3 {
                    w[i] = (sizes[i] > 0) as u8 as f64;
                }
            }
            let s: f64 = w.iter().sum();
            counts = largest_remainder(&w.map(|x| x / s), batch_size);
        }
        Ok(counts)
    }

    pub fn sample_batch(&self, batch_size: usize, seed: u64) -> Result<Vec<BatchItem<S>>> {
        if batch_size == 0 {
            return Err(Error::Validation("batch_size must be positive".into()));
        }
        let counts = self.batch_counts(batch_size)?;
        let mut r = rng::stream(seed, &[rng::tag("sample_batch")]);
        let mut out = Vec::with_capacity(batch_size);
        for id in PoolId::ALL {
            let pool = self.pool(id);
            for _ in 0..counts[id.index()] {
                let (sample, rates) = pool[r.gen_range(0..pool.len())];
                out.push(BatchItem { sample, pool: id, rates });
            }
        }
        Ok(out)
    }
}

/// Integer quotas `floor(r_i n)` plus leftover units to the largest remainders
/// (ties to the earlier pool).
pub fn largest_remainder(ratios: &[f64; 3], n: usize) -> [usize; 3] {
    let exact = ratios.map(|r| r * n as f64);
    let mut counts = exact.map(|e| e.floor() as usize);
    let mut left = n - counts.iter().sum::<usize>().min(n);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub k_max: u64,
    pub temperature: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig { k_max: 1000, temperature: 0.5 }
    }
}

/// Linear annealing `max(0, 1 - k / k_max)`.
pub fn anneal<S: Scalar>(k: u64, k_max: u64) -> S {
    if k >= k_max {
        return S::zero();
    }
    S::one() - S::of(k as f64) / S::of(k_max as f64)
}

/// Difficulty gate `tanh(d / T)`.
pub fn gate<S: Scalar>(d: S, temperature: S) -> S {
    (d / temperature).tanh()
}

/// Injected prefix length `l = L * anneal(k) * gate(d)` and its floor.
pub fn injection_length<S: Scalar>(l_demo: usize, k: u64, d: S, sched: &ScheduleConfig) -> (S, usize) {
    let l = S::of_usize(l_demo) * anneal::<S>(k, sched.k_max) * gate(d, S::of(sched.temperature));
    let steps = l.floor().to_usize().unwrap_or(0).min(l_demo);
    (l, steps)
}

/// Executor context for a sample with the first `prefix_steps` demonstration
/// pairs injected.
pub fn build_context(sample: &TrainingSample, prefix_steps: usize, demo: &Demonstration) -> Result<Context> {
    if prefix_steps > demo.steps.len() {
        return Err(Error::Validation(format!(
            "prefix of {prefix_steps} exceeds demonstration length {}",
            demo.steps.len()
        )));
    }
    Ok(Context {
        observation: sample.observation.clone(),
        task_goal: sample.task_goal.clone(),
        sub_goal: sample.instruction.clone(),
        injected_prefix: demo.steps[..prefix_steps].iter().map(|s| (s.instruction.clone(), s.action.clone())).collect(),
    })
}
