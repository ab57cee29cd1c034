mod common;

use std::sync::mpsc;

use chrono::{TimeZone, Utc};
use tapwise::action::{ActionKind, Action};
use tapwise::corpus::{app_spec, file, reference_suite};
use tapwise::explorer::{
    explore, record_demo, DemoAck, DemoCommand, DemoEventRequest, ExplorationConfig, ExplorationReport,
    ExploreTermination,
};
use tapwise::kb::{counting_clock, DocSource, KnowledgeStore};
use tapwise::llm::{Script, ScriptedBackend};
use tapwise::operator::{run_task, RunConfig, Termination};
use tapwise::prompts::NO_DOCUMENTATION;
use tapwise::session::{EventLog, FieldError, NullObserver, Relevance, SessionEvent};
use tapwise::sim::SimDevice;

use common::dir_snapshot;

const MAIL_TASK: &str = "Send an email to bob@example.com.";
const FOREVER: &str = "Observation: A screen.\nThought: Keep going.\nAction: tap(1)\nSummary: Tapped the first element.";

fn store_at(dir: &std::path::Path) -> KnowledgeStore {
    KnowledgeStore::open_with_clock(dir, counting_clock(Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap())).unwrap()
}

fn script(app: &str, kind: &str) -> ScriptedBackend {
    ScriptedBackend::new(Script::parse(file(&format!("scripts/{app}.{kind}.script")).unwrap()).unwrap())
}

fn forever() -> ScriptedBackend {
    ScriptedBackend::new(Script { entries: Vec::new(), fallback: Some(FOREVER.into()) })
}

fn explore_mail(root: &std::path::Path) -> (ExplorationReport, EventLog) {
    let store = store_at(root);
    let mut device = SimDevice::new(app_spec("mail").unwrap());
    let mut log = EventLog::default();
    let model = script("mail", "explore");
    let report = explore(&ExplorationConfig::new(MAIL_TASK, "mail"), &mut device, &model, &store, &mut log).unwrap();
    (report, log)
}

#[test]
fn mail_exploration_documents_the_send_path() {
    let dir = tempfile::tempdir().unwrap();
    let (report, log) = explore_mail(dir.path());
    assert_eq!(report.termination, ExploreTermination::TaskComplete);

    let written: Vec<_> = report.docs_written.iter().map(|d| (d.element_id.as_str(), d.version)).collect();
    assert_eq!(
        written,
        [("com.example.mail:id/compose", 1), ("com.example.mail:id/recipient", 1), ("com.example.mail:id/send", 1)]
    );
    let store = KnowledgeStore::open(dir.path()).unwrap();
    for (id, _) in &written {
        let doc = store.get("mail", id).unwrap();
        assert_eq!((doc.version, doc.source), (1, DocSource::Autonomous));
    }
    assert!(store.get("mail", "com.example.mail:id/promo").is_none());

    // The advertisement is left with a logged, uncounted Back.
    assert_eq!(report.steps.len(), 5);
    assert_eq!(report.iterations, 5);
    assert_eq!(report.steps[0].relevance, Some(Relevance::Irrelevant));
    let automatic: Vec<_> = report.action_log.iter().filter(|a| a.automatic).collect();
    assert_eq!(automatic.len(), 1);
    assert_eq!((automatic[0].step, &automatic[0].action), (1, &Action::Back));
    assert_eq!(report.action_log.len(), 6);
    assert!(log.events.contains(&SessionEvent::AutoBack { after_step: 1 }));
    assert_eq!(log.events.last(), Some(&SessionEvent::Finished { termination: "task_complete".into() }));
}

#[test]
fn exploration_is_byte_identical_across_runs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ra, la) = explore_mail(a.path());
    let (rb, lb) = explore_mail(b.path());
    assert_eq!(ra.to_json(), rb.to_json());
    assert_eq!(la.events, lb.events);
    let (sa, sb) = (dir_snapshot(a.path()), dir_snapshot(b.path()));
    assert!(sa.len() >= 4, "{:?}", sa.keys());
    assert_eq!(sa, sb);
}

#[test]
fn unchanged_screen_is_not_documented() {
    let dir = tempfile::tempdir().unwrap();
    let store = store_at(dir.path());
    let mut device = SimDevice::new(app_spec("clock").unwrap());
    let model = script("clock", "explore");
    let config = ExplorationConfig::new("Set an alarm for 7 AM.", "clock");
    let report = explore(&config, &mut device, &model, &store, &mut NullObserver).unwrap();
    assert_eq!(report.termination, ExploreTermination::TaskComplete);
    let label = "com.example.clock:id/label_field";
    let step = report.steps.iter().find(|s| s.element_id.as_deref() == Some(label)).unwrap();
    assert_eq!((step.relevance, step.doc_written), (Some(Relevance::Unchanged), false));
    assert!(store.get("clock", label).is_none());
    // No relevance question was asked about it either.
    assert!(!model.prompts().iter().any(|p| p.contains(&format!("Relevance check for element: {label}\n"))));
}

#[test]
fn exploration_stops_at_the_step_cap() {
    for cap in [None, Some(7)] {
        let dir = tempfile::tempdir().unwrap();
        let store = store_at(dir.path());
        let mut device = SimDevice::new(app_spec("mail").unwrap());
        let mut config = ExplorationConfig::new(MAIL_TASK, "mail");
        if let Some(c) = cap {
            config.max_steps = c;
        }
        let report = explore(&config, &mut device, &forever(), &store, &mut NullObserver).unwrap();
        let expected = cap.unwrap_or(40);
        assert_eq!(report.termination, ExploreTermination::StepCap);
        assert_eq!(report.iterations, expected);
        assert_eq!(report.steps.len() as u32, expected);
    }
}

#[test]
fn exploration_gives_up_after_consecutive_failures() {
    let dir = tempfile::tempdir().unwrap();
    let store = store_at(dir.path());
    let mut device = SimDevice::new(app_spec("mail").unwrap());
    let model = ScriptedBackend::new(Script { entries: Vec::new(), fallback: Some("I would rather not.".into()) });
    let report = explore(&ExplorationConfig::new(MAIL_TASK, "mail"), &mut device, &model, &store, &mut NullObserver).unwrap();
    assert_eq!(report.termination, ExploreTermination::ErrorLimit);
    assert_eq!((report.iterations, report.failures.len(), report.steps.len()), (3, 3, 0));
    assert_eq!(device.state().current_page, "inbox");
}

#[test]
fn operator_stops_at_the_step_cap() {
    for cap in [None, Some(3)] {
        let mut device = SimDevice::new(app_spec("mail").unwrap());
        let mut config = RunConfig::new(MAIL_TASK, "mail");
        if let Some(c) = cap {
            config.max_steps = c;
        }
        let model = forever();
        let t = run_task(&config, &mut device, &model, None, &mut NullObserver).unwrap();
        let expected = cap.unwrap_or(10);
        assert_eq!(t.termination, Termination::StepCap);
        assert_eq!(t.steps.len() as u32, expected);
        assert_eq!(model.call_count() as u32, expected);
    }
}

#[test]
fn operator_reprompts_then_errors() {
    let mut device = SimDevice::new(app_spec("mail").unwrap());
    let config = RunConfig::new(MAIL_TASK, "mail");
    let model = ScriptedBackend::from_replies(["no idea", "Action: tap(99)", "still nothing"]);
    let t = run_task(&config, &mut device, &model, None, &mut NullObserver).unwrap();
    assert_eq!(t.termination, Termination::Error);
    assert!(t.steps.is_empty());
    assert_eq!(model.call_count(), 3);
    assert!(t.error.as_deref().unwrap().contains("re-prompts"));
    assert_eq!(device.state().current_page, "inbox");

    let mut device = SimDevice::new(app_spec("mail").unwrap());
    let exit = "Observation: Inbox.\nThought: Done.\nAction: exit()\nSummary: Stopped.";
    let model = ScriptedBackend::from_replies(["no idea", exit]);
    let t = run_task(&config, &mut device, &model, None, &mut NullObserver).unwrap();
    assert_eq!((t.termination, t.steps.len()), (Termination::ExitByAgent, 1));
    let prompts = model.prompts();
    assert!(prompts[1].starts_with(&prompts[0]) && prompts[1].len() > prompts[0].len());
}

#[test]
fn operator_without_store_sees_no_documents() {
    let suite = reference_suite().unwrap();
    let task = suite.tasks.iter().find(|t| t.app_id == "mail").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let store = store_at(dir.path());
    store.import_manual("mail", "com.example.mail:id/compose", "Starts a new email.").unwrap();
    let config = RunConfig::new(&task.goal_text, "mail");

    let before = store.read_count();
    let model = script("mail", "deploy");
    let mut device = SimDevice::new(app_spec("mail").unwrap());
    run_task(&config, &mut device, &model, None, &mut NullObserver).unwrap();
    assert_eq!(store.read_count(), before);
    let first = &model.prompts()[0];
    assert!(first.contains(&format!("Element 1: {NO_DOCUMENTATION}")));
    assert!(!first.contains("Starts a new email."));

    let model = script("mail", "deploy");
    let mut device = SimDevice::new(app_spec("mail").unwrap());
    run_task(&config, &mut device, &model, Some(&store), &mut NullObserver).unwrap();
    assert!(store.read_count() > before);
    assert!(model.prompts()[0].contains("Element 1: Starts a new email."));
}

/// Queues `requests` and a Stop, runs the session and collects the replies.
fn run_demo(
    store: &KnowledgeStore,
    device: &mut SimDevice,
    requests: Vec<DemoEventRequest>,
) -> (tapwise::explorer::DemoReport, Vec<Result<DemoAck, Vec<FieldError>>>) {
    let (tx, rx) = mpsc::channel();
    let mut replies = Vec::new();
    for request in requests {
        let (reply, answer) = mpsc::sync_channel(1);
        tx.send(DemoCommand::Event { request, reply }).unwrap();
        replies.push(answer);
    }
    tx.send(DemoCommand::Stop).unwrap();
    let model = script("mail", "explore");
    let report = record_demo("mail", device, &model, store, rx, &mut NullObserver).unwrap();
    (report, replies.into_iter().map(|r| r.recv().unwrap()).collect())
}

fn mail_demo() -> Vec<DemoEventRequest> {
    serde_json::from_str(file("demos/mail.demo.json").unwrap()).unwrap()
}

#[test]
fn demo_documents_each_demonstrated_element() {
    let dir = tempfile::tempdir().unwrap();
    let store = store_at(dir.path());
    let mut device = SimDevice::new(app_spec("mail").unwrap());
    let (report, acks) = run_demo(&store, &mut device, mail_demo());
    assert_eq!((report.events_accepted, report.events_rejected), (4, 0));
    assert_eq!(report.docs_written.len(), 4);
    for (i, ack) in acks.iter().enumerate() {
        let ack = ack.as_ref().unwrap();
        assert_eq!((ack.event_index, ack.doc_version, ack.duplicate), (i as u32 + 1, Some(1), false));
    }
    let docs = store.documents("mail");
    assert_eq!(docs.len(), 4);
    assert!(docs.iter().all(|d| d.source == DocSource::Demo));
}

#[test]
fn demo_rejects_bad_events_without_acting() {
    let dir = tempfile::tempdir().unwrap();
    let store = store_at(dir.path());
    let mut device = SimDevice::new(app_spec("mail").unwrap());
    let bad = DemoEventRequest {
        label: Some(99),
        identifier: None,
        kind: ActionKind::Swipe,
        direction: None,
        dist: None,
        text: Some("x".into()),
        client_token: None,
    };
    let (report, acks) = run_demo(&store, &mut device, vec![bad]);
    let errors = acks[0].as_ref().unwrap_err();
    let fields: Vec<_> = errors.iter().map(|e| e.field.as_str()).collect();
    for f in ["label", "direction", "dist", "text"] {
        assert!(fields.contains(&f), "{fields:?}");
    }
    assert_eq!((report.events_accepted, report.events_rejected), (0, 1));
    assert!(device.gestures().is_empty());
    assert!(store.documents("mail").is_empty());
}

#[test]
fn empty_demo_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let store = store_at(dir.path());
    let mut device = SimDevice::new(app_spec("mail").unwrap());
    let (report, _) = run_demo(&store, &mut device, Vec::new());
    assert_eq!((report.events_accepted, report.docs_written.len()), (0, 0));
    assert!(store.apps().is_empty());
}

#[test]
fn resubmitted_token_is_acknowledged_once() {
    let dir = tempfile::tempdir().unwrap();
    let store = store_at(dir.path());
    let mut device = SimDevice::new(app_spec("mail").unwrap());
    let mut first = mail_demo().remove(0);
    first.client_token = Some("t-1".into());
    let (report, acks) = run_demo(&store, &mut device, vec![first.clone(), first]);
    let (a, b) = (acks[0].as_ref().unwrap(), acks[1].as_ref().unwrap());
    assert!(!a.duplicate && b.duplicate);
    assert_eq!(DemoAck { duplicate: false, ..b.clone() }, *a);
    assert_eq!(report.events_accepted, 1);
    assert_eq!(device.gestures().len(), 1);
}

#[test]
fn closed_channel_aborts_but_keeps_documents() {
    let dir = tempfile::tempdir().unwrap();
    let store = store_at(dir.path());
    let mut device = SimDevice::new(app_spec("mail").unwrap());
    let (tx, rx) = mpsc::channel();
    let (reply, answer) = mpsc::sync_channel(1);
    tx.send(DemoCommand::Event { request: mail_demo().remove(0), reply }).unwrap();
    drop(tx);
    let model = script("mail", "explore");
    assert!(record_demo("mail", &mut device, &model, &store, rx, &mut NullObserver).is_err());
    assert!(answer.recv().unwrap().is_ok());
    assert_eq!(store.documents("mail").len(), 1);
}
