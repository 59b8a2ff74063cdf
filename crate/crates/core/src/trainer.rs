//! Group-relative policy optimization with curriculum: advantages, the
//! clipped per-token surrogate with KL penalty, and the training loop.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::curriculum::{
    build_context, classify_tokens, injection_length, rates_from_classes, ErrorRates, ReplayPools, ScheduleConfig,
};
use crate::error::{Error, Result};
use crate::policy::features::ContextFeatures;
use crate::policy::tokens::{decode, Token};
use crate::policy::{ActionTokens, Context, PolicyParams};
use crate::reward::{score, RewardConfig};
use crate::rng;
use crate::scalar::{mean_std, Scalar};
use crate::tasks::{Demonstration, TrainingSample};

pub const ADV_DELTA: f64 = 1e-6;

/// `(r - mean) / (std + 1e-6)` with the population standard deviation.
pub fn group_advantages<S: Scalar>(rewards: &[S]) -> Result<Vec<S>> {
    if rewards.len() < 2 {
        return Err(Error::Validation("a group needs at least two rewards".into()));
    }
    let (mean, std) = mean_std(rewards);
    let denom = std + S::of(ADV_DELTA);
    Ok(rewards.iter().map(|r| (*r - mean) / denom).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct Candidate<S> {
    pub tokens: Vec<Token>,
    pub old_logprobs: Vec<S>,
    pub reward: S,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct GroupRollout<S> {
    pub context: Context,
    pub candidates: Vec<Candidate<S>>,
}

impl<S: Scalar> GroupRollout<S> {
    pub fn group_size(&self) -> usize {
        self.candidates.len()
    }

    pub fn from_samples(context: Context, samples: Vec<ActionTokens<S>>, rewards: &[S]) -> Self {
        let candidates = samples
            .into_iter()
            .zip(rewards)
            .map(|(s, r)| Candidate { tokens: s.tokens, old_logprobs: s.per_token_logprobs, reward: *r })
            .collect();
        GroupRollout { context, candidates }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: u32,
    pub per_device_batch: usize,
    pub grad_accum: usize,
    pub num_devices: usize,
    pub group_size: usize,
    pub kl_weight: f64,
    pub clip_eps: f64,
    pub max_steps: u64,
    /// Train for `epochs` dataset passes instead of `max_steps`.
    pub use_epochs: bool,
    pub seed: u64,
    /// Record wall-clock time in the metrics; off keeps outputs reproducible.
    pub wall_clock: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.5,
            epochs: 2,
            per_device_batch: 2,
            grad_accum: 2,
            num_devices: 2,
            group_size: 8,
            kl_weight: 0.04,
            clip_eps: 0.2,
            max_steps: 1000,
            use_epochs: false,
            seed: 0,
            wall_clock: false,
        }
    }
}

impl TrainConfig {
    pub fn batch_size(&self) -> usize {
        self.per_device_batch * self.grad_accum * self.num_devices
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size() == 0 || self.group_size < 2 {
            return bad("batch size must be positive and group_size at least 2");
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return bad("clip_eps must lie in (0, 1)");
        }
        if self.kl_weight < 0.0 {
            return bad("kl_weight must be non-negative");
        }
        if !self.use_epochs && self.max_steps == 0 || self.use_epochs && self.epochs == 0 {
            return bad("training budget must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SurrogateMetrics {
    pub objective: f64,
    pub clip_fraction: f64,
    pub kl: f64,
    pub tokens: usize,
}

/// Negated clipped objective minus KL penalty for one group, with its gradient.
/// `grad` receives `scale * d loss / d theta`.
pub fn surrogate_accumulate<S: Scalar>(
    params: &PolicyParams<S>,
    ref_params: &PolicyParams<S>,
    cf: &ContextFeatures<S>,
    rollout: &GroupRollout<S>,
    adv: &[S],
    cfg: &TrainConfig,
    scale: S,
    grad: &mut [S],
) -> Result<SurrogateMetrics> {
    let g = rollout.group_size();
    if adv.len() != g || g == 0 {
        return Err(Error::Validation("advantages do not match the group".into()));
    }
    let (lo, hi) = (S::one() - S::of(cfg.clip_eps), S::one() + S::of(cfg.clip_eps));
    let beta = S::of(cfg.kl_weight);
    let gs = S::of_usize(g);
    let mut m = SurrogateMetrics::default();
    let mut objective = S::zero();
    let mut clipped = 0usize;
    let mut kl_sum = S::zero();
    for (cand, &a) in rollout.candidates.iter().zip(adv) {
        let (_, lp) = params.logprob_cf(cf, &cand.tokens)?;
        let (_, lp_ref) = ref_params.logprob_cf(cf, &cand.tokens)?;
        if lp.len() != cand.old_logprobs.len() {
            return Err(Error::Validation("old log-probabilities do not match the tokens".into()));
        }
        let n = S::of_usize(lp.len());
        let mut weights = Vec::with_capacity(lp.len());
        for t in 0..lp.len() {
            let ratio = (lp[t] - cand.old_logprobs[t]).exp();
            let clip_r = ratio.max(lo).min(hi);
            let unclipped = ratio * a;
            let clipped_term = clip_r * a;
            let active_clip = clipped_term < unclipped;
            let surr = if active_clip { clipped_term } else { unclipped };
            let delta = lp_ref[t] - lp[t];
            let k3 = delta.exp() - delta - S::one();
            objective = objective + (surr - beta * k3) / (gs * n);
            kl_sum = kl_sum + k3;
            if active_clip {
                clipped += 1;
            }
            let d_surr = if active_clip { S::zero() } else { a * ratio };
            let d_kl = S::one() - delta.exp();
            // d loss / d lp = -(d_surr - beta * d_kl) / (G |o_i|)
            weights.push(-(d_surr - beta * d_kl) / (gs * n) * scale);
        }
        params.accumulate_grad(cf, &cand.tokens, &weights, grad)?;
        m.tokens += lp.len();
    }
    m.objective = objective.as_f64();
    m.clip_fraction = if m.tokens > 0 { clipped as f64 / m.tokens as f64 } else { 0.0 };
    m.kl = if m.tokens > 0 { kl_sum.as_f64() / m.tokens as f64 } else { 0.0 };
    Ok(m)
}

/// Loss and gradient of the negated objective for a single group.
pub fn surrogate_loss<S: Scalar>(
    params: &PolicyParams<S>,
    ref_params: &PolicyParams<S>,
    rollout: &GroupRollout<S>,
    adv: &[S],
    cfg: &TrainConfig,
) -> Result<(S, Vec<S>, SurrogateMetrics)> {
    let cf = ContextFeatures::new(&rollout.context);
    let mut grad = vec![S::zero(); params.theta.len()];
    let m = surrogate_accumulate(params, ref_params, &cf, rollout, adv, cfg, S::one(), &mut grad)?;
    Ok((S::of(-m.objective), grad, m))
}

/// Training data: decomposed samples and the demonstrations they came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub samples: Vec<TrainingSample>,
    pub demos: BTreeMap<String, Demonstration>,
}

impl Dataset {
    pub fn from_demos(demos: &[Demonstration]) -> Self {
        let samples = demos.iter().flat_map(crate::tasks::decompose_demo).collect();
        Dataset { samples, demos: demos.iter().map(|d| (d.id(), d.clone())).collect() }
    }

    pub fn demo_of(&self, s: &TrainingSample) -> Result<&Demonstration> {
        self.demos
            .get(&s.demo_ref.demo_id)
            .ok_or_else(|| Error::Validation(format!("sample {} references unknown demo", s.sample_id)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurriculumConfig {
    pub beta_con: f64,
    pub beta_type: f64,
    pub beta_param: f64,
    pub tau: f64,
    pub k_max: u64,
    pub temperature: f64,
    /// Steps between error-rate re-estimation; 0 keeps the initial assignment.
    pub refresh_interval: u64,
    /// `false` puts every sample in the consolidation pool (uniform replay).
    pub balancing: bool,
    /// `false` disables demonstration injection.
    pub injection: bool,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        CurriculumConfig {
            beta_con: 0.5,
            beta_type: 0.25,
            beta_param: 0.25,
            tau: 0.25,
            k_max: 1000,
            temperature: 0.5,
            refresh_interval: 100,
            balancing: true,
            injection: true,
        }
    }
}

impl CurriculumConfig {
    pub fn schedule(&self) -> ScheduleConfig {
        ScheduleConfig { k_max: self.k_max, temperature: self.temperature }
    }

    pub fn validate(&self) -> Result<()> {
        let sum = self.beta_con + self.beta_type + self.beta_param;
        if [self.beta_con, self.beta_type, self.beta_param].iter().any(|b| *b < 0.0) || (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Config("pool ratios must be non-negative and sum to 1".into()));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::Config("tau must lie in (0, 1)".into()));
        }
        if self.k_max == 0 || !(self.temperature > 0.0) {
            return Err(Error::Config("k_max must be >= 1 and temperature > 0".into()));
        }
        Ok(())
    }

    /// Ratios with `beta_type`/`beta_param` rescaled so the three sum to one
    /// after setting `beta_con`.
    pub fn with_beta_con(mut self, beta_con: f64) -> Self {
        let rest = self.beta_type + self.beta_param;
        let t = if rest > 0.0 { self.beta_type / rest } else { 0.5 };
        self.beta_con = beta_con;
        self.beta_type = (1.0 - beta_con) * t;
        self.beta_param = 1.0 - beta_con - self.beta_type;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: u64,
    pub mean_reward: f64,
    pub mean_abs_advantage: f64,
    pub clip_fraction: f64,
    pub kl_estimate: f64,
    pub mean_prefix_len: f64,
    pub pool_con: usize,
    pub pool_type: usize,
    pub pool_param: usize,
    pub wall_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct TrainingReport<S> {
    pub metrics: Vec<StepMetrics>,
    pub params: PolicyParams<S>,
    pub final_pool_sizes: [usize; 3],
    /// Sampled rollouts consumed, for budget accounting.
    pub rollouts: u64,
}

/// Mutable state of the training loop.
#[derive(Clone, Debug)]
pub struct Trainer<'a, S> {
    pub data: &'a Dataset,
    pub reward: RewardConfig,
    pub cfg: TrainConfig,
    pub curriculum: CurriculumConfig,
    pub params: PolicyParams<S>,
    pub ref_params: PolicyParams<S>,
    pub pools: ReplayPools<S>,
    pub k: u64,
    pub rollouts: u64,
    start: Option<std::time::Instant>,
}

impl<'a, S: Scalar> Trainer<'a, S> {
    /// Phase 1: estimates error rates with the initial policy and fills the pools.
    pub fn new(
        data: &'a Dataset,
        init: PolicyParams<S>,
        reward: RewardConfig,
        cfg: TrainConfig,
        curriculum: CurriculumConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        curriculum.validate()?;
        reward.validate()?;
        init.check()?;
        if data.samples.is_empty() {
            return Err(Error::Validation("empty training dataset".into()));
        }
        let ratios = [S::of(curriculum.beta_con), S::of(curriculum.beta_type), S::of(curriculum.beta_param)];
        let mut t = Trainer {
            data,
            reward,
            cfg,
            curriculum,
            ref_params: init.clone(),
            params: init,
            pools: ReplayPools::new(ratios)?,
            k: 0,
            rollouts: 0,
            start: cfg.wall_clock.then(std::time::Instant::now),
        };
        t.refresh_pools()?;
        Ok(t)
    }

    pub fn total_steps(&self) -> u64 {
        if self.cfg.use_epochs {
            let b = self.cfg.batch_size() as u64;
            (self.cfg.epochs as u64 * self.data.samples.len() as u64).div_ceil(b)
        } else {
            self.cfg.max_steps
        }
    }

    /// Error rates of every sample under the current policy, without injection.
    pub fn estimate_all(&mut self) -> Result<Vec<ErrorRates<S>>> {
        let g = self.cfg.group_size;
        let mut out = Vec::with_capacity(self.data.samples.len());
        for (i, s) in self.data.samples.iter().enumerate() {
            let ctx = build_context(s, 0, self.data.demo_of(s)?)?;
            let cf = ContextFeatures::new(&ctx);
            let seed = rng::derive(self.cfg.seed, &[rng::tag("estimate"), self.k, i as u64]);
            let classes: Vec<_> = self
                .params
                .sample_group_cf(&cf, g, seed)
                .iter()
                .map(|c| classify_tokens(&c.tokens, &cf.vocab, &s.expert_action, &self.reward))
                .collect();
            self.rollouts += g as u64;
            out.push(rates_from_classes(&classes)?);
        }
        Ok(out)
    }

    pub fn refresh_pools(&mut self) -> Result<()> {
        let rates = self.estimate_all()?;
        self.pools = ReplayPools::assign(self.pools.ratios, &rates, S::of(self.curriculum.tau), self.curriculum.balancing)?;
        Ok(())
    }

    /// One balanced, context-augmented update.
    pub fn train_step(&mut self) -> Result<StepMetrics> {
        let r = self.curriculum.refresh_interval;
        if r > 0 && self.k > 0 && self.k % r == 0 {
            self.refresh_pools()?;
        }
        let b = self.cfg.batch_size();
        let batch = self.pools.sample_batch(b, rng::derive(self.cfg.seed, &[rng::tag("batch"), self.k]))?;
        let sched = self.curriculum.schedule();
        let mut grad = vec![S::zero(); self.params.theta.len()];
        let scale = S::one() / S::of_usize(b);
        let (mut reward_sum, mut abs_adv, mut clip, mut kl, mut prefix_sum) = (0.0, 0.0, 0.0, 0.0, 0usize);
        let mut counts = [0usize; 3];
        let g = self.cfg.group_size;
        for (j, item) in batch.iter().enumerate() {
            counts[item.pool.index()] += 1;
            let sample = &self.data.samples[item.sample];
            let demo = self.data.demo_of(sample)?;
            let prefix = if self.curriculum.injection {
                injection_length(demo.len(), self.k, item.rates.difficulty(), &sched).1
            } else {
                0
            };
            prefix_sum += prefix;
            let ctx = build_context(sample, prefix, demo)?;
            let cf = ContextFeatures::new(&ctx);
            let seed = rng::derive(self.cfg.seed, &[rng::tag("rollout"), self.k, j as u64]);
            let samples = self.params.sample_group_cf(&cf, g, seed);
            self.rollouts += g as u64;
            let rewards: Vec<S> = samples
                .iter()
                .map(|c| S::of(score(decode(&c.tokens, &cf.vocab).as_ref(), &sample.expert_action, &self.reward).total))
                .collect();
            let adv = group_advantages(&rewards)?;
            reward_sum += rewards.iter().map(|r| r.as_f64()).sum::<f64>() / g as f64;
            abs_adv += adv.iter().map(|a| a.as_f64().abs()).sum::<f64>() / g as f64;
            let rollout = GroupRollout::from_samples(ctx, samples, &rewards);
            let m = surrogate_accumulate(&self.params, &self.ref_params, &cf, &rollout, &adv, &self.cfg, scale, &mut grad)?;
            clip += m.clip_fraction;
            kl += m.kl;
        }
        let lr = S::of(self.cfg.learning_rate);
        for (t, gr) in self.params.theta.iter_mut().zip(&grad) {
            *t = *t - lr * *gr;
        }
        self.params.version += 1;
        let bf = b as f64;
        let m = StepMetrics {
            step: self.k,
            mean_reward: reward_sum / bf,
            mean_abs_advantage: abs_adv / bf,
            clip_fraction: clip / bf,
            kl_estimate: kl / bf,
            mean_prefix_len: prefix_sum as f64 / bf,
            pool_con: counts[0],
            pool_type: counts[1],
            pool_param: counts[2],
            wall_ms: self.start.map_or(0, |s| s.elapsed().as_millis() as u64),
        };
        self.k += 1;
        Ok(m)
    }

    pub fn run(mut self) -> Result<TrainingReport<S>> {
        let n = self.total_steps();
        let mut metrics = Vec::with_capacity(n as usize);
        for _ in 0..n {
            metrics.push(self.train_step()?);
        }
        Ok(TrainingReport { metrics, final_pool_sizes: self.pools.sizes(), rollouts: self.rollouts, params: self.params })
    }
}

/// Full curriculum training from `init`.
pub fn train<S: Scalar>(
    data: &Dataset,
    init: PolicyParams<S>,
    reward: RewardConfig,
    cfg: TrainConfig,
    curriculum: CurriculumConfig,
) -> Result<TrainingReport<S>> {
    Trainer::new(data, init, reward, cfg, curriculum)?.run()
}

/// Supervised baseline: per-token cross-entropy on expert tokens, uniform
/// replay, same optimizer and step budget. Rewards of `G` policy samples are
/// still recorded so the curves are comparable.
pub fn train_sft<S: Scalar>(
    data: &Dataset,
    init: PolicyParams<S>,
    reward: RewardConfig,
    cfg: TrainConfig,
) -> Result<TrainingReport<S>> {
    cfg.validate()?;
    init.check()?;
    if data.samples.is_empty() {
        return Err(Error::Validation("empty training dataset".into()));
    }
    let all: Vec<ErrorRates<S>> = vec![ErrorRates { eta_type: S::zero(), eta_param: S::zero() }; data.samples.len()];
    let pools = ReplayPools::assign([S::one(), S::zero(), S::zero()], &all, S::of(0.25), false)?;
    let mut params = init;
    let b = cfg.batch_size();
    let g = cfg.group_size;
    let steps = if cfg.use_epochs { (cfg.epochs as u64 * data.samples.len() as u64).div_ceil(b as u64) } else { cfg.max_steps };
    let start = cfg.wall_clock.then(std::time::Instant::now);
    let mut metrics = Vec::new();
    let mut rollouts = 0u64;
    for k in 0..steps {
        let batch = pools.sample_batch(b, rng::derive(cfg.seed, &[rng::tag("batch"), k]))?;
        let mut grad = vec![S::zero(); params.theta.len()];
        let mut reward_sum = 0.0;
        for (j, item) in batch.iter().enumerate() {
            let sample = &data.samples[item.sample];
            let ctx = build_context(sample, 0, data.demo_of(sample)?)?;
            let cf = ContextFeatures::new(&ctx);
            let tokens = crate::policy::encode(&sample.expert_action, &cf.vocab)
                .ok_or_else(|| Error::Validation(format!("expert action of {} is not encodable", sample.sample_id)))?;
            let w = -S::one() / (S::of_usize(tokens.len()) * S::of_usize(b));
            params.accumulate_grad(&cf, &tokens, &vec![w; tokens.len()], &mut grad)?;
            let seed = rng::derive(cfg.seed, &[rng::tag("rollout"), k, j as u64]);
            let samples = params.sample_group_cf(&cf, g, seed);
            rollouts += g as u64;
            reward_sum += samples
                .iter()
                .map(|c| score(decode(&c.tokens, &cf.vocab).as_ref(), &sample.expert_action, &reward).total)
                .sum::<f64>()
                / g as f64;
        }
        let lr = S::of(cfg.learning_rate);
        for (t, gr) in params.theta.iter_mut().zip(&grad) {
            *t = *t - lr * *gr;
        }
        params.version += 1;
        metrics.push(StepMetrics {
            step: k,
            mean_reward: reward_sum / b as f64,
            mean_abs_advantage: 0.0,
            clip_fraction: 0.0,
            kl_estimate: 0.0,
            mean_prefix_len: 0.0,
            pool_con: b,
            pool_type: 0,
            pool_param: 0,
            wall_ms: start.map_or(0, |s| s.elapsed().as_millis() as u64),
        });
    }
    Ok(TrainingReport { metrics, final_pool_sizes: pools.sizes(), rollouts, params })
}

/// Means of consecutive non-overlapping windows of `mean_reward`.
pub fn windowed_means(metrics: &[StepMetrics], window: usize) -> Vec<f64> {
    metrics
        .chunks(window.max(1))
        .filter(|c| c.len() == window.max(1))
        .map(|c| c.iter().map(|m| m.mean_reward).sum::<f64>() / c.len() as f64)
        .collect()
}

/// Mean reward over the final `frac` of steps.
pub fn terminal_reward(metrics: &[StepMetrics], frac: f64) -> f64 {
    let n = ((metrics.len() as f64 * frac).ceil() as usize).clamp(1, metrics.len().max(1));
    let tail = &metrics[metrics.len().saturating_sub(n)..];
    tail.iter().map(|m| m.mean_reward).sum::<f64>() / tail.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn advantage_examples() {
        assert_eq!(group_advantages(&[1.0f64; 4]).unwrap(), vec![0.0; 4]);
        let a = group_advantages(&[2.0f64, 0.0]).unwrap();
        assert!((a[0] - 1.0).abs() < 1e-5 && (a[1] + 1.0).abs() < 1e-5);
        let a = group_advantages(&[2.0f64, 0., 0., 2., 2., 0., 2., 0.]).unwrap();
        for (r, x) in [2.0, 0., 0., 2., 2., 0., 2., 0.].iter().zip(a) {
            assert!((x - if *r > 1.0 { 1.0 } else { -1.0 }).abs() < 1e-5);
        }
        assert!(group_advantages(&[1.0f64]).is_err());
    }

    #[test]
    fn beta_con_rescale() {
        let c = CurriculumConfig::default().with_beta_con(0.7);
        assert!((c.beta_type - 0.15).abs() < 1e-12 && (c.beta_param - 0.15).abs() < 1e-12);
        c.validate().unwrap();
    }
}
