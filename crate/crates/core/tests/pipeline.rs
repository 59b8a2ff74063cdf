mod common;

use coevo_core::agent::{replay_trajectory, run_episode, PlannerMode, TemplateExecutor};
use coevo_core::experiments::{coevolve, sweep, RunConfig, Suite, SweepParam, TERMINAL_FRACTION};
use coevo_core::io;
use coevo_core::planner::summarize;
use coevo_core::trainer::{terminal_reward, train, TrainConfig};
use coevo_core::Error;

fn small() -> RunConfig {
    RunConfig {
        templates: vec!["recorder_save".into(), "settings_query".into(), "messages_send".into()],
        seeds: vec![0],
        rounds: 2,
        train: TrainConfig { max_steps: 200, ..TrainConfig::default() },
        ..RunConfig::default()
    }
}

#[test]
fn coevolution_is_reproducible_and_improves() {
    let cfg = small();
    let a = coevolve(&cfg).unwrap();
    let b = coevolve(&cfg).unwrap();
    let curve = a.success_curve();
    assert_eq!(curve, b.success_curve());
    assert_eq!(
        io::serialize_checkpoint(&a.agent.policy).unwrap(),
        io::serialize_checkpoint(&b.agent.policy).unwrap()
    );
    assert_eq!(curve.len(), 3);
    assert!(curve[0] < *curve.last().unwrap(), "{curve:?}");
    let drops = curve.windows(2).filter(|w| w[1] < w[0]).count();
    assert!(drops <= 1, "{curve:?}");
    assert!(a.rounds[0].terminal_reward.is_none());
    assert!(a.rounds[1..].iter().all(|r| r.terminal_reward.is_some()));
}

#[test]
fn single_point_sweep_matches_plain_training() {
    let cfg = RunConfig { train: TrainConfig { max_steps: 60, ..TrainConfig::default() }, ..small() };
    let rep = sweep(&cfg, SweepParam::Temperature, &[cfg.curriculum.temperature]).unwrap();
    let s = Suite::prepare(&cfg).unwrap();
    let data = s.hierarchical_dataset(&s.kbs).unwrap();
    let plain = train(&data, cfg.init_policy(), cfg.reward, TrainConfig { seed: 0, ..cfg.train }, cfg.curriculum).unwrap();
    assert_eq!(rep.points.len(), 1);
    assert_eq!(rep.points[0].terminal_rewards, vec![terminal_reward(&plain.metrics, TERMINAL_FRACTION)]);
    assert!(matches!(sweep(&cfg, SweepParam::BetaCon, &[]), Err(Error::Usage(_))));
}

#[test]
fn recorded_episodes_replay_and_truncation_is_rejected() {
    let s = Suite::prepare(&small()).unwrap();
    for t in &s.templates {
        let task = s.suite.instantiate_task(t, 41).unwrap();
        let kb = summarize(s.reference(t).unwrap());
        let traj = run_episode(&s.env, PlannerMode::Hierarchical(&kb), &TemplateExecutor, &task, 41).unwrap();
        assert!(traj.success, "{t}");
        assert!(replay_trajectory(&s.env, &traj).unwrap());

        let bytes = io::serialize_trajectory(&traj).unwrap();
        let cut = &bytes[..bytes.len() / 2];
        assert!(matches!(io::parse_trajectory(cut), Err(Error::Parse { .. })));

        let mut shorter = traj.clone();
        shorter.steps.pop();
        assert!(!replay_trajectory(&s.env, &shorter).unwrap());
    }
}

#[test]
fn bad_configs_are_rejected_with_positions() {
    let err = RunConfig::from_toml("seed = 1\nbogus = 2\n").unwrap_err();
    assert!(matches!(err, Error::Parse { offset, .. } if offset > 0), "{err:?}");
    let cfg = RunConfig { seeds: vec![], ..RunConfig::default() };
    assert!(cfg.validate().is_err());
    let cfg = RunConfig { templates: vec!["no_such".into()], ..RunConfig::default() };
    assert!(Suite::prepare(&cfg).is_err());
}
