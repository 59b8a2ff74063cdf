//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use coevo_core::curriculum::build_context;
use coevo_core::env::{Action, ActionKind, MiniDroid, Point, SystemButton, TerminateStatus};
use coevo_core::policy::features::ContextFeatures;
use coevo_core::policy::{Context, PolicyParams};
use coevo_core::tasks::{decompose_demo, Demonstration, TaskSuite, TrainingSample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// double-double arithmetic, about 106 significant bits

#[derive(Clone, Copy, Debug)]
pub struct Dd(pub f64, pub f64);

fn two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let bb = s - a;
    Dd(s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd(s, b - (s - a))
}

impl Dd {
    pub fn from(x: f64) -> Dd {
        Dd(x, 0.0)
    }

    pub fn add(self, o: Dd) -> Dd {
        let s = two_sum(self.0, o.0);
        let t = two_sum(self.1, o.1);
        let s = quick_two_sum(s.0, s.1 + t.0);
        quick_two_sum(s.0, s.1 + t.1)
    }

    pub fn neg(self) -> Dd {
        Dd(-self.0, -self.1)
    }

    pub fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    pub fn mul(self, o: Dd) -> Dd {
        let p = self.0 * o.0;
        let e = self.0.mul_add(o.0, -p);
        quick_two_sum(p, e + (self.0 * o.1 + self.1 * o.0))
    }

    pub fn div(self, o: Dd) -> Dd {
        let q1 = self.0 / o.0;
        let r = self.sub(o.mul(Dd::from(q1)));
        let q2 = r.0 / o.0;
        let r = r.sub(o.mul(Dd::from(q2)));
        let q3 = r.0 / o.0;
        quick_two_sum(q1, q2).add(Dd::from(q3))
    }

    pub fn to_f64(self) -> f64 {
        self.0 + self.1
    }
}

const LN2: Dd = Dd(std::f64::consts::LN_2, 2.319046813846299558e-17);

/// `e^x` by reduction `x = k ln 2 + r`, `r / 2^10`, Taylor series, squaring.
pub fn dd_exp(x: Dd) -> Dd {
    let k = (x.0 / LN2.0).round();
    let r = x.sub(LN2.mul(Dd::from(k)));
    let r = r.mul(Dd::from(1.0 / 1024.0));
    let mut term = Dd::from(1.0);
    let mut sum = Dd::from(1.0);
    for n in 1..=24 {
        term = term.mul(r).div(Dd::from(n as f64));
        sum = sum.add(term);
    }
    for _ in 0..10 {
        sum = sum.mul(sum);
    }
    let scale = 2f64.powi(k as i32);
    Dd(sum.0 * scale, sum.1 * scale)
}

/// `tanh(z)` for `z >= 0` as `(1 - e^{-2z}) / (1 + e^{-2z})`.
pub fn dd_tanh(z: Dd) -> Dd {
    if z.0 == 0.0 {
        return Dd::from(0.0);
    }
    let e = dd_exp(z.mul(Dd::from(-2.0)));
    Dd::from(1.0).sub(e).div(Dd::from(1.0).add(e))
}

/// Injected prefix length evaluated in double-double from the same inputs.
pub fn injection_oracle(l_demo: usize, k: u64, k_max: u64, d: f64, t: f64) -> Dd {
    let sigma = if k >= k_max {
        Dd::from(0.0)
    } else {
        Dd::from(1.0).sub(Dd::from(k as f64).div(Dd::from(k_max as f64)))
    };
    let gate = dd_tanh(Dd::from(d).div(Dd::from(t)));
    Dd::from(l_demo as f64).mul(sigma).mul(gate)
}

// ---------------------------------------------------------------------------
// fixtures

pub fn demos(per_template: u64) -> Vec<Demonstration> {
    TaskSuite::builtin().record_all(&MiniDroid::builtin(), per_template).unwrap()
}

pub fn samples(demos: &[Demonstration]) -> Vec<(TrainingSample, &Demonstration)> {
    demos.iter().flat_map(|d| decompose_demo(d).into_iter().map(move |s| (s, d))).collect()
}

/// A random training context with a random injected prefix.
pub fn random_context(pool: &[(TrainingSample, &Demonstration)], r: &mut impl Rng) -> Context {
    let (s, d) = &pool[r.gen_range(0..pool.len())];
    build_context(s, r.gen_range(0..=d.len().min(3)), d).unwrap()
}

pub fn random_params(r: &mut impl Rng, scale: f64) -> PolicyParams<f64> {
    let mut p = PolicyParams::<f64>::zeros();
    for t in p.theta.iter_mut() {
        *t = r.gen_range(-scale..scale);
    }
    p
}

pub fn random_direction(r: &mut impl Rng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

pub fn shifted(p: &PolicyParams<f64>, v: &[f64], h: f64) -> PolicyParams<f64> {
    let mut q = p.clone();
    for (t, d) in q.theta.iter_mut().zip(v) {
        *t += h * d;
    }
    q
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    if d == 0.0 {
        0.0
    } else {
        d / a.abs().max(b.abs())
    }
}

/// Worst relative error of central differences of `f` against `grad`, along a
/// random direction and along the `coords` largest gradient entries.
pub fn fd_check(f: impl Fn(&PolicyParams<f64>) -> f64, p: &PolicyParams<f64>, grad: &[f64], h: f64, coords: usize, r: &mut impl Rng) -> f64 {
    let mut dirs = vec![random_direction(r, grad.len())];
    let mut order: Vec<usize> = (0..grad.len()).collect();
    order.sort_by(|&a, &b| grad[b].abs().total_cmp(&grad[a].abs()));
    for &i in order.iter().take(coords) {
        let mut e = vec![0.0; grad.len()];
        e[i] = 1.0;
        dirs.push(e);
    }
    dirs.iter()
        .map(|v| {
            let fd = (f(&shifted(p, v, h)) - f(&shifted(p, v, -h))) / (2.0 * h);
            rel_err(fd, dot(grad, v))
        })
        .fold(0.0, f64::max)
}

pub fn features(ctx: &Context) -> ContextFeatures<f64> {
    ContextFeatures::new(ctx)
}

// ---------------------------------------------------------------------------
// random actions

pub fn random_point(r: &mut impl Rng) -> Point {
    Point::new(r.gen_range(0..1080), r.gen_range(0..2400))
}

pub fn near(p: Point, r: &mut impl Rng, radius: i32) -> Point {
    Point::new(
        (p.x + r.gen_range(-radius..=radius)).clamp(0, 1079),
        (p.y + r.gen_range(-radius..=radius)).clamp(0, 2399),
    )
}

const WORDS: [&str; 5] = ["alpha", "beta", "on", "off", "Meeting notes"];

pub fn random_action(r: &mut impl Rng) -> Action {
    match r.gen_range(0..7) {
        0 => Action::click(random_point(r)),
        1 => Action::long_press(random_point(r)),
        2 => Action::swipe(random_point(r), random_point(r)),
        3 => Action::type_text(WORDS[r.gen_range(0..WORDS.len())]),
        4 => Action::system(if r.gen() { SystemButton::Back } else { SystemButton::Home }),
        5 => Action::terminate(if r.gen() { TerminateStatus::Success } else { TerminateStatus::Failure }),
        _ => Action::answer(WORDS[r.gen_range(0..WORDS.len())]),
    }
}

/// A candidate biased towards the expert so every class shows up often.
pub fn candidate_for(expert: &Action, r: &mut impl Rng) -> Action {
    if r.gen_bool(0.4) {
        return random_action(r);
    }
    let mut a = expert.clone();
    match expert.kind {
        ActionKind::Click | ActionKind::LongPress => a.coordinate = a.coordinate.map(|p| near(p, r, 70)),
        ActionKind::Swipe => {
            a.coordinate = a.coordinate.map(|p| near(p, r, 60));
            a.coordinate2 = a.coordinate2.map(|p| near(p, r, 60));
        }
        ActionKind::Type | ActionKind::Answer => {
            if r.gen_bool(0.5) {
                a.text = Some(WORDS[r.gen_range(0..WORDS.len())].to_string());
            }
        }
        ActionKind::SystemButton => a.button = Some(if r.gen() { SystemButton::Back } else { SystemButton::Home }),
        ActionKind::Terminate => {
            a.status = Some(if r.gen() { TerminateStatus::Success } else { TerminateStatus::Failure })
        }
    }
    a
}
