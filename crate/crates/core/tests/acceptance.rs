//! One pass/fail line per acceptance criterion. Criteria run one after the
//! other in a single test so their timings are not skewed by each other.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use chrono::{TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tapwise::action::{parse_action, Action, ActionKind, Direction, Distance};
use tapwise::bench::{run_reference, validate_reward_map, DocConfig};
use tapwise::corpus::{app_spec, file, reference_suite, APP_IDS};
use tapwise::device::{lower_action, Device};
use tapwise::explorer::{explore, ExplorationConfig, ExploreTermination};
use tapwise::kb::{counting_clock, DocSource, FaultPoint, KnowledgeStore};
use tapwise::llm::{pixel_digest, Script, ScriptedBackend};
use tapwise::operator::{run_task, RunConfig, Termination};
use tapwise::session::NullObserver;
use tapwise::sim::{page_registry, sim_step, SimDevice, SimState};
use tapwise::ui_model::{parse_hierarchy, Bounds, ElementRegistry, UiElement};

use common::{
    aggregate, brute_force_swipe, by_id, check_fixture, check_labels, dir_snapshot, hierarchy_fixtures,
    mutate_hierarchy, random_action, random_text, recompute_task, render_registry, shape,
};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: u64, what: &str) -> Result<(), String> {
    ensure(elapsed < Duration::from_secs(limit_s), || format!("{what} took {:.2} s, limit {limit_s} s", elapsed.as_secs_f64()))
}

// ------------------------------------------------------------ criteria

fn parser_suite() -> Outcome {
    let start = Instant::now();
    let fixtures = hierarchy_fixtures();
    ensure(fixtures.len() >= 20, || format!("only {} fixtures", fixtures.len()))?;
    for f in &fixtures {
        check_fixture(f)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let mut mutations = 0;
    while mutations < 1000 {
        for f in &fixtures {
            let base = shape(&parse_hierarchy(&f.xml, f.screen).map_err(|e| e.to_string())?);
            let mut xml = f.xml.clone();
            for _ in 0..5 {
                xml = mutate_hierarchy(&xml, &mut rng);
                mutations += 1;
                let reg = parse_hierarchy(&xml, f.screen).map_err(|e| format!("{}: {e}", f.name))?;
                ensure(shape(&reg) == base, || format!("{}: mutation changed the registry", f.name))?;
                check_labels(&reg).map_err(|e| format!("{}: {e}", f.name))?;
                let again = parse_hierarchy(&render_registry(&reg), f.screen).map_err(|e| e.to_string())?;
                ensure(shape(&again) == base, || format!("{}: reparse is not a fixpoint", f.name))?;
            }
        }
    }
    within(start.elapsed(), 5, "parser suite")?;
    Ok(format!("{} fixtures, {mutations} mutations", fixtures.len()))
}

fn action_round_trip() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(10_000);
    for _ in 0..10_000 {
        let a = random_action(&mut rng);
        ensure(parse_action(&a.to_string()) == Ok(a.clone()), || format!("round trip failed for {a}"))?;
    }
    for _ in 0..10_000 {
        let noise = if rng.random_bool(0.5) {
            random_text(&mut rng)
        } else {
            (0..rng.random_range(0..60)).map(|_| char::from_u32(rng.random_range(0..0x3000)).unwrap_or('?')).collect()
        };
        catch_unwind(|| parse_action(&noise)).map(drop).map_err(|_| format!("parser panicked on {noise:?}"))?;
    }
    within(start.elapsed(), 10, "round trip")?;
    Ok("10000 actions, 10000 fuzz inputs".into())
}

fn gesture_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    for _ in 0..500 {
        let screen = (rng.random_range(100..2000), rng.random_range(100..3000));
        let l = rng.random_range(0..screen.0 as i32 - 1);
        let t = rng.random_range(0..screen.1 as i32 - 1);
        let bounds = Bounds::new(l, t, rng.random_range(l + 1..=screen.0 as i32), rng.random_range(t + 1..=screen.1 as i32));
        let direction = [Direction::Up, Direction::Down, Direction::Left, Direction::Right][rng.random_range(0..4)];
        let dist = [Distance::Short, Distance::Medium, Distance::Long][rng.random_range(0..3)];
        let registry = ElementRegistry {
            elements: vec![UiElement {
                identifier: "e".into(),
                label: 1,
                bounds,
                class_name: "android.view.View".into(),
                text_content: String::new(),
                clickable: true,
                long_clickable: false,
                editable: false,
            }],
            screen_size: screen,
            source_hash: String::new(),
        };
        let g = lower_action(&Action::Swipe { element: 1, direction, dist }, &registry)
            .map_err(|e| e.to_string())?
            .ok_or("swipe lowered to nothing")?;
        let want = brute_force_swipe(bounds, screen, direction, dist);
        ensure((g.start, g.end) == want, || format!("{bounds} on {screen:?}: {:?} vs {want:?}", (g.start, g.end)))?;
    }
    Ok("500 tuples".into())
}

fn simulator_determinism() -> Outcome {
    let specs: Vec<_> = APP_IDS.iter().map(|id| app_spec(id).map_err(|e| e.to_string())).collect::<Result<_, _>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for run in 0..100 {
        let spec = specs[rng.random_range(0..specs.len())].clone();
        let actions: Vec<Action> = (0..50)
            .map(|_| match rng.random_range(0..6) {
                0..=2 => Action::Tap { element: rng.random_range(1..=6) },
                3 => Action::Swipe { element: rng.random_range(1..=6), direction: Direction::Up, dist: Distance::Medium },
                4 => Action::Text { text: "7".into() },
                _ => Action::Back,
            })
            .collect();
        let trace = || {
            let mut dev = SimDevice::new(spec.clone());
            let mut out = Vec::new();
            for a in &actions {
                let reg = page_registry(&spec, dev.state());
                let _ = dev.execute(a, &reg);
                out.push((dev.state().clone(), pixel_digest(&dev.capture_screenshot().unwrap())));
            }
            out
        };
        ensure(trace() == trace(), || format!("run {run} on {} diverged", spec.app_id))?;
    }
    let mut edges = 0;
    for spec in &specs {
        for (page, t) in spec.edges() {
            let mut page_stack = vec![spec.start_page.clone()];
            if page.page_id != spec.start_page {
                page_stack.push(page.page_id.clone());
            }
            let s = SimState { current_page: page.page_id.clone(), page_stack, ..SimState::initial(spec) };
            let label = page_registry(spec, &s).by_identifier(&t.element).ok_or("edge element missing")?.label;
            let a = match t.action {
                ActionKind::Tap => Action::Tap { element: label },
                ActionKind::LongPress => Action::LongPress { element: label },
                _ => Action::Swipe { element: label, direction: t.direction.unwrap_or(Direction::Up), dist: Distance::Medium },
            };
            let forward = sim_step(&s, spec, &a);
            ensure(forward.current_page == t.target && sim_step(&forward, spec, &Action::Back) == s, || {
                format!("{}: back after {} -> {} does not restore", spec.app_id, page.page_id, t.target)
            })?;
            edges += 1;
        }
    }
    Ok(format!("100 x 50-action replays, back undoes {edges} edges"))
}

fn explore_mail(root: &std::path::Path) -> Result<tapwise::explorer::ExplorationReport, String> {
    let store = KnowledgeStore::open_with_clock(root, counting_clock(Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()))
        .map_err(|e| e.to_string())?;
    let model = ScriptedBackend::new(Script::parse(file("scripts/mail.explore.script").unwrap()).map_err(|e| e.to_string())?);
    let mut device = SimDevice::new(app_spec("mail").map_err(|e| e.to_string())?);
    let config = ExplorationConfig::new("Send an email to bob@example.com.", "mail");
    explore(&config, &mut device, &model, &store, &mut NullObserver).map_err(|e| e.to_string())
}

fn end_to_end_exploration() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let report = explore_mail(a.path())?;
    ensure(report.termination == ExploreTermination::TaskComplete, || format!("termination {:?}", report.termination))?;
    let store = KnowledgeStore::open(a.path()).map_err(|e| e.to_string())?;
    let docs: Vec<_> = store.documents("mail").into_iter().map(|d| (d.element_id, d.version, d.source)).collect();
    let want: Vec<_> = ["compose", "recipient", "send"]
        .iter()
        .map(|n| (format!("com.example.mail:id/{n}"), 1, DocSource::Autonomous))
        .collect();
    ensure(docs == want, || format!("doc set {docs:?}"))?;
    let again = explore_mail(b.path())?;
    ensure(report.to_json() == again.to_json(), || "reports differ between runs".into())?;
    ensure(dir_snapshot(a.path()) == dir_snapshot(b.path()), || "stores differ between runs".into())?;
    Ok("3 docs at v1, task_complete, byte-identical re-run".into())
}

fn benchmark_ordering() -> Outcome {
    let start = Instant::now();
    let suite = reference_suite().map_err(|e| e.to_string())?;
    ensure(suite.apps.len() == 6 && suite.tasks.len() == 18, || "suite is not 6 apps / 18 tasks".into())?;
    let mut sr = BTreeMap::new();
    for config in DocConfig::ALL {
        let dir = tempfile::tempdir().unwrap();
        let report = run_reference(&suite, config, dir.path()).map_err(|e| e.to_string())?;
        let pin = suite.expected(config.as_str()).ok_or("no pin")?;
        ensure(
            (report.successes, report.reward_sum(), report.success_step_sum())
                == (pin.successes, pin.reward_sum, pin.success_step_sum),
            || format!("{} differs from its pin", config.as_str()),
        )?;
        sr.insert(config.as_str(), report.sr);
    }
    let (none, auto, demo, manual) = (sr["none"], sr["auto"], sr["demo"], sr["manual"]);
    ensure(auto > none && demo > none && manual > none, || format!("docs do not beat none: {sr:?}"))?;
    ensure(demo >= auto, || format!("demo below auto: {sr:?}"))?;
    within(start.elapsed(), 60, "benchmark")?;
    Ok(format!("SR none {:.1}% < auto {:.1}% <= demo {:.1}%, manual {:.1}%", none * 100.0, auto * 100.0, demo * 100.0, manual * 100.0))
}

fn metric_oracles() -> Outcome {
    let suite = reference_suite().map_err(|e| e.to_string())?;
    let specs = suite.specs();
    let tasks = by_id(&suite.tasks, |t| t.task_id.clone());
    let mut checked = 0;
    for config in DocConfig::ALL {
        let dir = tempfile::tempdir().unwrap();
        let report = run_reference(&suite, config, dir.path()).map_err(|e| e.to_string())?;
        let mut recount = Vec::new();
        for r in &report.results {
            let task = &tasks[&r.task_id];
            let o = recompute_task(task, &specs[&task.app_id], r.trajectory.as_ref().ok_or("missing trajectory")?);
            ensure((o.success, o.reward, o.steps) == (r.success, r.reward, r.steps), || format!("{} differs", r.task_id))?;
            recount.push(o);
            checked += 1;
        }
        let ((ok, n), (reward, _), (steps, _)) = aggregate(&recount);
        ensure(report.sr == ok as f64 / n as f64, || "SR differs".into())?;
        ensure(report.mean_reward == reward as f64 / n as f64, || "reward differs".into())?;
        ensure(report.avg_steps == (ok > 0).then(|| steps as f64 / ok as f64), || "avg steps differ".into())?;
    }
    for task in &suite.tasks {
        validate_reward_map(task, &specs[&task.app_id]).map_err(|e| e.to_string())?;
    }
    Ok(format!("{checked} task results recounted, {} reward maps valid", suite.tasks.len()))
}

fn step_caps() -> Outcome {
    let forever = "Observation: A screen.\nThought: Keep going.\nAction: tap(1)\nSummary: Tapped the first element.";
    let model = || ScriptedBackend::new(Script { entries: Vec::new(), fallback: Some(forever.into()) });
    let mut explored = Vec::new();
    let mut operated = Vec::new();
    for id in APP_IDS {
        let spec = app_spec(id).map_err(|e| e.to_string())?;
        let dir = tempfile::tempdir().unwrap();
        let store = KnowledgeStore::open(dir.path()).map_err(|e| e.to_string())?;
        let mut device = SimDevice::new(spec.clone());
        let r = explore(&ExplorationConfig::new("Never finish.", id), &mut device, &model(), &store, &mut NullObserver)
            .map_err(|e| e.to_string())?;
        ensure(r.iterations <= 40 && r.steps.len() <= 40, || format!("{id}: explorer took {} steps", r.steps.len()))?;
        ensure(r.termination == ExploreTermination::StepCap, || format!("{id}: explorer ended {:?}", r.termination))?;
        explored.push(r.steps.len());

        let mut device = SimDevice::new(spec);
        let t = run_task(&RunConfig::new("Never finish.", id), &mut device, &model(), None, &mut NullObserver)
            .map_err(|e| e.to_string())?;
        ensure(t.steps.len() <= 10, || format!("{id}: operator took {} steps", t.steps.len()))?;
        ensure(t.termination == Termination::StepCap, || format!("{id}: operator ended {:?}", t.termination))?;
        operated.push(t.steps.len());
    }
    Ok(format!("explorer max {} of 40, operator max {} of 10", explored.iter().max().unwrap(), operated.iter().max().unwrap()))
}

fn crash_safety() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let clock = || counting_clock(Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap());
    for trial in 0..100 {
        let dir = tempfile::tempdir().unwrap();
        let store = KnowledgeStore::open_with_clock(dir.path(), clock()).map_err(|e| e.to_string())?;
        for k in 0..rng.random_range(1..6) {
            store
                .upsert_doc("mail", "com.example.mail:id/send", &format!("Observation {k}."), DocSource::Autonomous, None, None)
                .map_err(|e| e.to_string())?;
        }
        let prior = store.get("mail", "com.example.mail:id/send");
        store.inject_fault(if trial % 2 == 0 { FaultPoint::PartialTempWrite } else { FaultPoint::BeforeRename });
        ensure(store.upsert_doc("mail", "com.example.mail:id/send", "Crash.", DocSource::Autonomous, None, None).is_err(), || {
            format!("trial {trial}: faulted write succeeded")
        })?;
        drop(store);
        let reopened = KnowledgeStore::open_with_clock(dir.path(), clock()).map_err(|e| format!("trial {trial}: {e}"))?;
        ensure(reopened.get("mail", "com.example.mail:id/send") == prior, || format!("trial {trial}: prior version lost"))?;
    }
    Ok("100 interrupted writes, prior version intact".into())
}

#[test]
fn acceptance() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 9] = [
        ("parser suite", parser_suite),
        ("action grammar round trip", action_round_trip),
        ("gesture lowering oracle", gesture_oracle),
        ("simulator determinism", simulator_determinism),
        ("end-to-end scripted exploration", end_to_end_exploration),
        ("benchmark ordering", benchmark_ordering),
        ("metric oracles", metric_oracles),
        ("step caps", step_caps),
        ("crash-safe knowledge store", crash_safety),
    ];
    let mut failed = Vec::new();
    println!();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {}. {name}: {detail} ({secs:.2} s)", i + 1),
            Err(why) => {
                println!("FAIL {}. {name}: {why} ({secs:.2} s)", i + 1);
                failed.push(*name);
            }
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
