mod common;

use std::collections::BTreeMap;

use coevo_core::agent::{run_episode, PlannerMode, TemplateExecutor};
use coevo_core::curriculum::{injection_length, largest_remainder, ScheduleConfig};
use coevo_core::env::MiniDroid;
use coevo_core::io;
use coevo_core::planner::{generalize, resolve, summarize};
use coevo_core::reward::{classify, content_reward, ErrorClass, RewardConfig};
use coevo_core::tasks::TaskSuite;
use coevo_core::trainer::group_advantages;
use proptest::prelude::*;

use common::*;

proptest! {
    #[test]
    fn injection_shrinks_with_k_and_grows_with_d(
        l in 0usize..40, k in 0u64..1200, dk in 0u64..200,
        d in 0.0f64..=1.0, dd in 0.0f64..=1.0, t in 0.01f64..10.0,
    ) {
        let sched = ScheduleConfig { k_max: 1000, temperature: t };
        let (a, sa) = injection_length(l, k, d, &sched);
        let (b, sb) = injection_length(l, k + dk, d, &sched);
        prop_assert!(b <= a && sb <= sa);
        let d2 = (d + dd).min(1.0);
        let (c, sc) = injection_length(l, k, d2, &sched);
        prop_assert!(c >= a && sc >= sa);
        prop_assert!(sa <= l);
        prop_assert_eq!(injection_length(l, 1000, d, &sched).1, 0);
    }

    #[test]
    fn classes_partition_and_content_grows_with_epsilon(seed in any::<u64>(), eps in 1.0f64..200.0, extra in 0.0f64..200.0) {
        let mut r = rng(seed);
        let expert = random_action(&mut r);
        let a = candidate_for(&expert, &mut r);
        let cfg = RewardConfig { epsilon: eps, ..RewardConfig::default() };
        let c = classify(&a, &expert, &cfg);
        prop_assert_eq!(c == ErrorClass::TypeError, a.kind != expert.kind);
        prop_assert_eq!(c == ErrorClass::Correct, content_reward(&a, &expert, &cfg) == 1);
        let wider = RewardConfig { epsilon: eps + extra, ..cfg };
        prop_assert!(content_reward(&a, &expert, &wider) >= content_reward(&a, &expert, &cfg));
    }

    #[test]
    fn quotas_sum_to_batch(w in prop::array::uniform3(0.0f64..1.0), n in 0usize..64) {
        let total: f64 = w.iter().sum();
        prop_assume!(total > 1e-9);
        let ratios = w.map(|x| x / total);
        let q = largest_remainder(&ratios, n);
        prop_assert_eq!(q.iter().sum::<usize>(), n);
        for i in 0..3 {
            prop_assert!((q[i] as f64 - ratios[i] * n as f64).abs() < 1.0 + 1e-9);
        }
    }

    #[test]
    fn advantages_are_centred_and_shift_free(rs in prop::collection::vec(-5.0f64..5.0, 2..16), shift in -100.0f64..100.0) {
        let a = group_advantages(&rs).unwrap();
        prop_assert!((a.iter().sum::<f64>() / a.len() as f64).abs() < 1e-9);
        let moved: Vec<f64> = rs.iter().map(|x| x + shift).collect();
        let b = group_advantages(&moved).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn tool_calls_round_trip(seed in any::<u64>()) {
        let a = random_action(&mut rng(seed));
        prop_assert_eq!(io::parse_tool_call(&io::tool_call_text(&a)).unwrap(), a);
    }

    #[test]
    fn generalized_text_resolves_back(words in prop::collection::vec("[a-z]{3,8}", 1..4), filler in "[a-z ]{0,12}") {
        let params: BTreeMap<String, String> =
            words.iter().enumerate().map(|(i, w)| (format!("p{i}"), format!("{w}{i}"))).collect();
        let text = format!("{filler}{}", params.values().cloned().collect::<Vec<_>>().join(" then "));
        let g = generalize(&text, &params);
        prop_assert_eq!(resolve(&g, &params, None).unwrap(), Some(text));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn trajectories_round_trip(seed in 0u64..1000, which in 0usize..64) {
        let env = MiniDroid::builtin();
        let suite = TaskSuite::builtin();
        let ids = suite.ids();
        let id = &ids[which % ids.len()];
        let task = suite.instantiate_task(id, seed).unwrap();
        let demo = suite.record_demonstration(&env, &task).unwrap();
        let kb = summarize(&demo);
        let traj = run_episode(&env, PlannerMode::Hierarchical(&kb), &TemplateExecutor, &task, seed).unwrap();
        let bytes = io::serialize_trajectory(&traj).unwrap();
        let back = io::parse_trajectory(&bytes).unwrap();
        prop_assert_eq!(&back, &traj);
        prop_assert_eq!(io::serialize_trajectory(&back).unwrap(), bytes);
    }
}
