//! On-disk formats: trajectories, training samples, plans, checkpoints,
//! metrics and reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::{TrajStep, Trajectory};
use crate::env::{Action, Screen};
use crate::error::{Error, Result};
use crate::experiments::{AblationTable, CoevolutionReport, SweepReport};
use crate::planner::KnowledgeBase;
use crate::policy::{CopyPrior, PolicyParams, DIMS};
use crate::reward::RewardBreakdown;
use crate::tasks::{DemoRef, TaskSpec, TrainingSample};
use crate::trainer::StepMetrics;

pub const TRAJECTORY_FORMAT: u32 = 1;
pub const CHECKPOINT_FORMAT: u32 = 1;
pub const KB_FORMAT: u32 = 1;

fn parse_json<T: DeserializeOwned>(bytes: &[u8]) -> Result<T> {
    serde_json::from_slice(bytes).map_err(|e| Error::from_json(e, bytes))
}

fn to_pretty<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(v).map_err(|e| Error::Internal(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

/// Writes `bytes` to `path`, creating parent directories.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Content address of a screen: hex SHA-256 of its compact JSON.
pub fn screen_ref(screen: &Screen) -> String {
    let bytes = serde_json::to_vec(screen).expect("screen serializes");
    hex::encode(Sha256::digest(&bytes))
}

/// Screens by content address.
pub type ScreenStore = BTreeMap<String, Screen>;

fn intern(store: &mut ScreenStore, screen: &Screen) -> String {
    let r = screen_ref(screen);
    store.entry(r.clone()).or_insert_with(|| screen.clone());
    r
}

fn lookup(store: &ScreenStore, r: &str) -> Result<Screen> {
    store.get(r).cloned().ok_or_else(|| Error::Validation(format!("unknown screen ref {r}")))
}

// ---------------------------------------------------------------------------
// trajectories

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StepRecord {
    observation: String,
    post: String,
    sub_goal: String,
    plan_index: Option<usize>,
    action: Option<Action>,
    transitioned: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reward: Option<RewardBreakdown>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrajectoryFile {
    format_version: u32,
    task: TaskSpec,
    seed: u64,
    success: bool,
    steps: Vec<StepRecord>,
    screens: ScreenStore,
}

pub fn serialize_trajectory(traj: &Trajectory) -> Result<Vec<u8>> {
    let mut screens = ScreenStore::new();
    let steps = traj
        .steps
        .iter()
        .map(|s| StepRecord {
            observation: intern(&mut screens, &s.observation),
            post: intern(&mut screens, &s.post),
            sub_goal: s.sub_goal.clone(),
            plan_index: s.plan_index,
            action: s.action.clone(),
            transitioned: s.transitioned,
            reward: s.reward,
        })
        .collect();
    to_pretty(&TrajectoryFile {
        format_version: TRAJECTORY_FORMAT,
        task: traj.task.clone(),
        seed: traj.seed,
        success: traj.success,
        steps,
        screens,
    })
}

pub fn parse_trajectory(bytes: &[u8]) -> Result<Trajectory> {
    let f: TrajectoryFile = parse_json(bytes)?;
    if f.format_version != TRAJECTORY_FORMAT {
        return Err(Error::Validation(format!("unsupported trajectory format_version {}", f.format_version)));
    }
    for (r, s) in &f.screens {
        if screen_ref(s) != *r {
            return Err(Error::Validation(format!("screen {r} does not match its content")));
        }
    }
    let steps = f
        .steps
        .into_iter()
        .map(|s| {
            Ok(TrajStep {
                observation: lookup(&f.screens, &s.observation)?,
                post: lookup(&f.screens, &s.post)?,
                sub_goal: s.sub_goal,
                plan_index: s.plan_index,
                action: s.action,
                transitioned: s.transitioned,
                reward: s.reward,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Trajectory { task: f.task, steps, success: f.success, seed: f.seed })
}

// ---------------------------------------------------------------------------
// training samples

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub from: String,
    pub value: String,
}

/// One exported training sample. `image` names the screen file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub id: String,
    pub task: String,
    pub conversations: Vec<Turn>,
    pub image: String,
    pub demo_ref: DemoRef,
}

const IMAGE_TAG: &str = "<image>\n";
const CALL_OPEN: &str = "<tool_call>\n";
const CALL_CLOSE: &str = "\n</tool_call>";

/// `{"arguments": {"action": <kind>, ...}}` wrapped in tool-call tags.
pub fn tool_call_text(action: &Action) -> String {
    let mut args = serde_json::Map::new();
    args.insert("action".into(), action.kind.as_str().into());
    if let serde_json::Value::Object(fields) = serde_json::to_value(action).expect("action serializes") {
        for (k, v) in fields {
            if k != "kind" {
                args.insert(k, v);
            }
        }
    }
    let body = serde_json::json!({ "arguments": args });
    format!("{CALL_OPEN}{body}{CALL_CLOSE}")
}

pub fn parse_tool_call(text: &str) -> Result<Action> {
    let inner = text
        .strip_prefix(CALL_OPEN)
        .and_then(|t| t.strip_suffix(CALL_CLOSE))
        .ok_or_else(|| Error::Parse { offset: 0, message: "missing tool_call tags".into() })?;
    let v: serde_json::Value = parse_json(inner.as_bytes()).map_err(|e| match e {
        Error::Parse { offset, message } => Error::Parse { offset: offset + CALL_OPEN.len(), message },
        e => e,
    })?;
    let mut args = match v.get("arguments") {
        Some(serde_json::Value::Object(m)) => m.clone(),
        _ => return Err(Error::Parse { offset: CALL_OPEN.len(), message: "missing arguments object".into() }),
    };
    let kind = args
        .remove("action")
        .ok_or_else(|| Error::Parse { offset: CALL_OPEN.len(), message: "missing action key".into() })?;
    args.insert("kind".into(), kind);
    serde_json::from_value(serde_json::Value::Object(args))
        .map_err(|e| Error::Parse { offset: CALL_OPEN.len(), message: e.to_string() })
}

pub fn image_path(r: &str) -> String {
    format!("screens/{r}.json")
}

/// Sample record plus the screen it refers to.
pub fn export_sample(sample: &TrainingSample, store: &mut ScreenStore) -> SampleRecord {
    let r = intern(store, &sample.observation);
    SampleRecord {
        id: sample.sample_id.clone(),
        task: sample.task_goal.clone(),
        conversations: vec![
            Turn { from: "human".into(), value: format!("{IMAGE_TAG}{}", sample.instruction) },
            Turn { from: "gpt".into(), value: tool_call_text(&sample.expert_action) },
        ],
        image: image_path(&r),
        demo_ref: sample.demo_ref.clone(),
    }
}

pub fn import_sample(rec: &SampleRecord, store: &ScreenStore) -> Result<TrainingSample> {
    let [human, gpt] = rec.conversations.as_slice() else {
        return Err(Error::Validation(format!("sample {} needs exactly two turns", rec.id)));
    };
    if human.from != "human" || gpt.from != "gpt" {
        return Err(Error::Validation(format!("sample {} has unexpected speakers", rec.id)));
    }
    let instruction = human
        .value
        .strip_prefix(IMAGE_TAG)
        .ok_or_else(|| Error::Validation(format!("sample {} lacks the image tag", rec.id)))?;
    let r = rec
        .image
        .strip_prefix("screens/")
        .and_then(|s| s.strip_suffix(".json"))
        .ok_or_else(|| Error::Validation(format!("bad image path {}", rec.image)))?;
    Ok(TrainingSample {
        sample_id: rec.id.clone(),
        task_goal: rec.task.clone(),
        instruction: instruction.to_string(),
        observation: lookup(store, r)?,
        expert_action: parse_tool_call(&gpt.value)?,
        demo_ref: rec.demo_ref.clone(),
    })
}

pub fn serialize_samples(samples: &[TrainingSample]) -> Result<(Vec<u8>, ScreenStore)> {
    let mut store = ScreenStore::new();
    let recs: Vec<SampleRecord> = samples.iter().map(|s| export_sample(s, &mut store)).collect();
    Ok((to_pretty(&recs)?, store))
}

pub fn parse_samples(bytes: &[u8], store: &ScreenStore) -> Result<Vec<TrainingSample>> {
    let recs: Vec<SampleRecord> = parse_json(bytes)?;
    recs.iter().map(|r| import_sample(r, store)).collect()
}

/// `samples.json` plus one file per screen under `screens/`.
pub fn write_samples(dir: &Path, samples: &[TrainingSample]) -> Result<()> {
    let (bytes, store) = serialize_samples(samples)?;
    write_file(&dir.join("samples.json"), &bytes)?;
    for (r, s) in &store {
        write_file(&dir.join(image_path(r)), &to_pretty(s)?)?;
    }
    Ok(())
}

pub fn read_samples(dir: &Path) -> Result<Vec<TrainingSample>> {
    let bytes = std::fs::read(dir.join("samples.json"))?;
    let recs: Vec<SampleRecord> = parse_json(&bytes)?;
    let mut store = ScreenStore::new();
    for rec in &recs {
        if let Some(r) = rec.image.strip_prefix("screens/").and_then(|s| s.strip_suffix(".json")) {
            if !store.contains_key(r) {
                let s: Screen = parse_json(&std::fs::read(dir.join(&rec.image))?)?;
                if screen_ref(&s) != r {
                    return Err(Error::Validation(format!("{} does not match its content", rec.image)));
                }
                store.insert(r.to_string(), s);
            }
        }
    }
    recs.iter().map(|r| import_sample(r, &store)).collect()
}

// ---------------------------------------------------------------------------
// knowledge bases

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KbFile {
    format_version: u32,
    knowledge: BTreeMap<String, KnowledgeBase>,
}

pub fn serialize_kb_store(store: &BTreeMap<String, KnowledgeBase>) -> Result<Vec<u8>> {
    to_pretty(&KbFile { format_version: KB_FORMAT, knowledge: store.clone() })
}

pub fn parse_kb_store(bytes: &[u8]) -> Result<BTreeMap<String, KnowledgeBase>> {
    let f: KbFile = parse_json(bytes)?;
    if f.format_version != KB_FORMAT {
        return Err(Error::Validation(format!("unsupported knowledge format_version {}", f.format_version)));
    }
    for kb in f.knowledge.values() {
        kb.validate()?;
    }
    Ok(f.knowledge)
}

pub fn serialize_kb(kb: &KnowledgeBase) -> Result<Vec<u8>> {
    to_pretty(kb)
}

pub fn parse_kb(bytes: &[u8]) -> Result<KnowledgeBase> {
    let kb: KnowledgeBase = parse_json(bytes)?;
    kb.validate()?;
    Ok(kb)
}

// ---------------------------------------------------------------------------
// checkpoints

/// Shape of the parameter vector, checked on load.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub global_features: usize,
    pub cells: usize,
    pub vocab: usize,
    pub cell_features: usize,
    pub token_features: usize,
    pub params: usize,
}

impl CheckpointHeader {
    pub fn current() -> Self {
        CheckpointHeader {
            format_version: CHECKPOINT_FORMAT,
            global_features: DIMS.f,
            cells: DIMS.c,
            vocab: DIMS.v,
            cell_features: DIMS.fc,
            token_features: DIMS.fv,
            params: DIMS.len(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    header: CheckpointHeader,
    version: u64,
    prior: CopyPrior,
    theta: Vec<f64>,
}

pub fn serialize_checkpoint(params: &PolicyParams<f64>) -> Result<Vec<u8>> {
    params.check()?;
    let mut out = serde_json::to_vec(&CheckpointFile {
        header: CheckpointHeader::current(),
        version: params.version,
        prior: params.prior,
        theta: params.theta.clone(),
    })
    .map_err(|e| Error::Internal(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

pub fn parse_checkpoint(bytes: &[u8]) -> Result<PolicyParams<f64>> {
    let f: CheckpointFile = parse_json(bytes)?;
    if f.header != CheckpointHeader::current() {
        return Err(Error::Validation(format!(
            "checkpoint shape {:?} does not match this build {:?}",
            f.header,
            CheckpointHeader::current()
        )));
    }
    let p = PolicyParams { theta: f.theta, version: f.version, prior: f.prior };
    p.check()?;
    Ok(p)
}

// ---------------------------------------------------------------------------
// CSV

pub fn metrics_csv(metrics: &[StepMetrics]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for m in metrics {
        w.serialize(m)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Internal(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Internal(e.to_string()))
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<StepMetrics>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let rows = r.deserialize().collect::<std::result::Result<Vec<StepMetrics>, _>>();
    rows.map_err(|e| Error::Parse {
        offset: e.position().map_or(0, |p| p.byte() as usize),
        message: e.to_string(),
    })
}

// ---------------------------------------------------------------------------
// Markdown

fn pct(x: f64) -> String {
    format!("{:.1}", 100.0 * x)
}

pub fn coevolution_markdown(rep: &CoevolutionReport) -> String {
    let mut s = String::from("# Co-evolution\n\n| round | success % | std | revisions | terminal reward |\n|---|---|---|---|---|\n");
    for r in &rep.rounds {
        let tr = r.terminal_reward.map_or("-".to_string(), |x| format!("{x:.4}"));
        let _ = writeln!(s, "| {} | {} | {} | {} | {tr} |", r.round, pct(r.success.aggregate.mean), pct(r.success.aggregate.std), r.revisions);
    }
    if let Some(last) = rep.rounds.last() {
        s.push_str("\n## Final round by template\n\n| template | success % |\n|---|---|\n");
        for (t, m) in &last.success.per_template {
            let _ = writeln!(s, "| {t} | {} |", pct(m.mean));
        }
    }
    s
}

pub fn ablation_markdown(tab: &AblationTable) -> String {
    let mut s = String::from(
        "# Ablation\n\n| configuration | median success % | median terminal reward | per-seed success % |\n|---|---|---|---|\n",
    );
    for a in &tab.arms {
        let per: Vec<String> = a.runs.iter().map(|r| pct(r.success)).collect();
        let _ = writeln!(s, "| {} | {} | {:.4} | {} |", a.arm.as_str(), pct(a.median_success), a.median_terminal_reward, per.join(", "));
    }
    s
}

pub fn sweep_markdown(rep: &SweepReport) -> String {
    let name = match rep.param {
        crate::experiments::SweepParam::BetaCon => "beta_con",
        crate::experiments::SweepParam::Temperature => "temperature",
    };
    let mut s = format!("# Sweep over {name}\n\n| value | median terminal reward | per-seed |\n|---|---|---|\n");
    for p in &rep.points {
        let per: Vec<String> = p.terminal_rewards.iter().map(|x| format!("{x:.4}")).collect();
        let _ = writeln!(s, "| {} | {:.4} | {} |", p.value, p.median_terminal_reward, per.join(", "));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{MiniDroid, Point};
    use crate::tasks::{decompose_demo, TaskSuite};

    #[test]
    fn tool_call_round_trip_keeps_coordinate2() {
        let a = Action::swipe(Point::new(546, 2000), Point::new(546, 800));
        let t = tool_call_text(&a);
        assert!(t.contains("\"coordinate2\":[546,800]"), "{t}");
        assert!(t.contains("\"action\":\"swipe\""));
        assert_eq!(parse_tool_call(&t).unwrap(), a);
        assert!(matches!(parse_tool_call("<tool_call>\n{\"arguments\": \n</tool_call>"), Err(Error::Parse { .. })));
    }

    #[test]
    fn samples_round_trip() {
        let suite = TaskSuite::builtin();
        let env = MiniDroid::builtin();
        let demo = suite.record_demonstration(&env, &suite.instantiate_task("notes_move", 1).unwrap()).unwrap();
        let samples = decompose_demo(&demo);
        let (bytes, store) = serialize_samples(&samples).unwrap();
        assert_eq!(parse_samples(&bytes, &store).unwrap(), samples);
        let dir = tempfile::tempdir().unwrap();
        write_samples(dir.path(), &samples).unwrap();
        assert_eq!(read_samples(dir.path()).unwrap(), samples);
    }

    #[test]
    fn checkpoint_is_exact() {
        let mut p = PolicyParams::<f64>::zeros();
        for (i, t) in p.theta.iter_mut().enumerate() {
            *t = (i as f64 * 0.7310585786300049).sin() / 3.0;
        }
        p.version = 17;
        let back = parse_checkpoint(&serialize_checkpoint(&p).unwrap()).unwrap();
        assert_eq!(back, p);
        let bytes = serialize_checkpoint(&p).unwrap();
        assert!(matches!(parse_checkpoint(&bytes[..bytes.len() / 2]), Err(Error::Parse { .. })));
    }
}
