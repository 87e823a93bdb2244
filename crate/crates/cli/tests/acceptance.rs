//! Acceptance suite. Prints one PASS/FAIL line per criterion with its
//! runtime against the budget, and exits nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use athena_core::engine::{replay, EventBody, FailureKind, RunConfig, RunStatus};
use athena_core::eval::{
    emit_comparison_table, extract_answer, load_baselines, parse_table, run_eval, score, EngineRunner, EvalItem,
    EvalRecord, FRAMEWORK_ROW,
};
use athena_core::llm::{BackendScript, MatchScope, Matcher, ScriptStep, ScriptedBackend, ToolCallRequest};
use athena_core::par::ExecutionMode;
use athena_core::testkit;
use athena_core::tools::arxiv::ArxivTool;
use athena_core::tools::calc::calculate;
use athena_core::tools::calendar::{CalendarEvent, CalendarStore};
use athena_core::tools::search::SearchTool;
use athena_core::tools::weather::WeatherTool;
use athena_core::tools::{default_registry, CallContext, ToolkitConfig, TransportMode};
use athena_core::transport::ReplayTransport;
use athena_core::{ArgumentMap, Engine, EngineConfig, ModelDecision, Run};
use chrono::{TimeZone, Utc};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};

type Outcome = Result<String, String>;
type Check = (&'static str, Duration, fn() -> Outcome);
type TableRows = [(&'static str, &'static str); 6];

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn core_fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn toolkit() -> ToolkitConfig {
    ToolkitConfig { transport: TransportMode::Replay(core_fixtures().join("http")), ..Default::default() }
}

fn engine_with(script: BackendScript, config: EngineConfig) -> Engine {
    Engine::new(Arc::new(default_registry(&toolkit()).unwrap()), Arc::new(ScriptedBackend::new(script)), config)
}

fn engine(script: BackendScript) -> Engine {
    engine_with(script, EngineConfig::default())
}

// Table reproduction

fn records(items: &[EvalItem], correct: usize) -> Vec<EvalRecord> {
    items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let letter = if i < correct { item.answer } else if item.answer == 'A' { 'B' } else { 'A' };
            EvalRecord {
                item_id: item.id.clone(),
                raw_completion: String::new(),
                extracted: Some(letter),
                correct: false,
                failure: None,
                detail: None,
            }
        })
        .collect()
}

fn tables() -> Outcome {
    let expected: [(&str, usize, TableRows); 2] = [
        (
            "math",
            83,
            [
                ("GPT-3.5", "0.36"),
                ("GPT-4o", "0.53"),
                ("LLaMA-Large", "0.67"),
                ("Mistral-Large", "0.57"),
                ("Phi-Large", "0.47"),
                (FRAMEWORK_ROW, "0.83"),
            ],
        ),
        (
            "science",
            88,
            [
                ("GPT-3.5", "0.56"),
                ("GPT-4o", "0.77"),
                ("LLaMA-Large", "0.79"),
                ("Mistral-Large", "0.66"),
                ("Phi-Large", "0.66"),
                (FRAMEWORK_ROW, "0.88"),
            ],
        ),
    ];
    for (name, correct, rows) in expected {
        let items: Vec<_> = testkit::arithmetic_mcq(100, 1, &[]).into_iter().map(|q| q.item).collect();
        let report = score(&items, records(&items, correct)).map_err(|e| e.to_string())?;
        let baselines = load_baselines(core_fixtures().join(format!("baselines/{name}.json"))).map_err(|e| e.to_string())?;
        let table = emit_comparison_table(report.accuracy, &baselines).map_err(|e| e.to_string())?;
        let got = parse_table(&table);
        let got: Vec<_> = got.iter().map(|(m, a)| (m.as_str(), a.as_str())).collect();
        ensure(got == rows, || format!("{name} table rows {got:?}"))?;
    }
    Ok("math and science tables match row for row".into())
}

// Tool-augmentation delta

fn tool_delta() -> Outcome {
    let questions = testkit::arithmetic_mcq(100, 2024, &[]);
    for q in &questions {
        ensure(q.item.option(q.item.answer) == q.gold.to_string(), || format!("{} gold mismatch", q.item.id))?;
    }
    let items: Vec<_> = questions.into_iter().map(|q| q.item).collect();
    let with_tools = EngineRunner::new(Arc::new(engine(testkit::calc_delegating_script())));
    let tooled = run_eval(&items, &with_tools, ExecutionMode::default()).map_err(|e| e.to_string())?;
    ensure(tooled.accuracy == 1.0, || format!("calculator-delegating accuracy {}", tooled.accuracy))?;

    let guess = engine_with(testkit::guess_a_script(), EngineConfig::default());
    let guessing = run_eval(&items, &EngineRunner::new(Arc::new(guess)), ExecutionMode::default()).map_err(|e| e.to_string())?;
    let share = items.iter().filter(|i| i.answer == 'A').count() as f64 / items.len() as f64;
    ensure(guessing.accuracy == share, || format!("fixed guess {} vs share of A {share}", guessing.accuracy))?;
    Ok(format!("with tools {:.2}, fixed guess {:.2} = share of A", tooled.accuracy, guessing.accuracy))
}

// Calculator oracle equivalence

fn calculator_oracle() -> Outcome {
    let mut finite = 0;
    for src in testkit::random_expressions(1000, 99) {
        match (calculate(&src), testkit::oracle_eval(&src)) {
            (Ok(got), Some(want)) => {
                ensure(testkit::close(got, want, 1e-9), || format!("{src}: {got} vs {want}"))?;
                finite += 1;
            }
            (Err(_), None) => {}
            (got, want) => return Err(format!("{src}: calculator {got:?}, reference {want:?}")),
        }
    }
    Ok(format!("1000 expressions agree ({finite} finite, rest rejected by both)"))
}

// Run-loop properties

fn random_args(rng: &mut StdRng) -> ArgumentMap {
    match rng.gen_range(0..6) {
        0 => ArgumentMap::new().with("expression", "17*23"),
        1 => ArgumentMap::new().with("expression", "1/0"),
        2 => ArgumentMap::new().with("expression", "2+"),
        3 => ArgumentMap::new().with("action", "list").with("start", "2026-01-01T00:00:00Z").with("end", "2027-01-01T00:00:00Z"),
        4 => ArgumentMap::new(),
        _ => ArgumentMap::new().with("expression", 5i64),
    }
}

fn random_decision(rng: &mut StdRng) -> ModelDecision {
    if rng.gen_bool(0.4) {
        let len = rng.gen_range(0..6);
        ModelDecision::FinalText((0..len).map(|_| rng.gen_range('a'..='z')).collect())
    } else {
        let calls = (0..rng.gen_range(1..4))
            .map(|_| ToolCallRequest {
                call_id: String::new(),
                tool_name: ["calculator", "calendar", "teleport"][rng.gen_range(0..3)].into(),
                arguments: random_args(rng),
            })
            .collect();
        ModelDecision::ToolCalls(calls)
    }
}

fn random_script(rng: &mut StdRng) -> BackendScript {
    let steps = (0..rng.gen_range(1..6))
        .map(|_| ScriptStep {
            matcher: Matcher::Substring(["", "result", "error", "391", "q", "events"][rng.gen_range(0..6)].into()),
            scope: [MatchScope::Latest, MatchScope::User, MatchScope::Turn][rng.gen_range(0..3)],
            decision: random_decision(rng),
        })
        .collect();
    BackendScript { steps, default_final_text: "fallback".into() }
}

fn check_run(run: &Run, max: u32) -> Result<(), String> {
    ensure(run.is_terminal(), || format!("run ended {}", run.status))?;
    ensure(run.iterations_used <= max && run.consultations() <= max as usize, || {
        format!("{} iterations with max {max}", run.iterations_used)
    })?;
    let mut status = RunStatus::Queued;
    let mut open: BTreeMap<String, i64> = BTreeMap::new();
    for e in &run.events {
        match &e.body {
            EventBody::StatusChanged { from, to, .. } => {
                ensure(*from == status && from.can_transition_to(*to), || format!("illegal {from} -> {to}"))?;
                status = *to;
            }
            EventBody::ToolCallIssued { call } => *open.entry(call.call_id.clone()).or_default() += 1,
            EventBody::ToolResultReceived { result } => *open.entry(result.call_id.clone()).or_default() -= 1,
            _ => {}
        }
    }
    ensure(status == run.status, || "final status event disagrees with run".into())?;
    ensure(open.values().all(|&n| n == 0), || format!("unpaired calls {open:?}"))?;
    let finals = run.events.iter().filter(|e| e.kind() == "final_answer").count();
    ensure(finals == usize::from(run.status == RunStatus::Completed), || format!("{finals} final answers"))?;
    let replayed = replay(&run.events).map_err(|e| e.to_string())?;
    ensure(replayed.snapshot() == run.snapshot() && replayed.final_answer == run.final_answer, || {
        "replay differs from the live run".into()
    })?;
    Ok(())
}

fn run_loop() -> Outcome {
    let mut rng = StdRng::seed_from_u64(500);
    let mut by_status: BTreeMap<String, usize> = BTreeMap::new();
    for i in 0..500 {
        let max = rng.gen_range(1..10);
        let config = EngineConfig { run: RunConfig { max_iterations: max, ..Default::default() }, ..Default::default() };
        let engine = engine_with(random_script(&mut rng), config);
        let session = engine.create_session().map_err(|e| e.to_string())?;
        let run = engine.ask(&session.id, "q: what is 17*23? list my events").map_err(|e| e.to_string())?;
        check_run(&run, max).map_err(|e| format!("script {i}: {e}"))?;
        *by_status.entry(run.status.to_string()).or_default() += 1;
    }

    let forever = BackendScript {
        steps: vec![ScriptStep {
            matcher: Matcher::Substring(String::new()),
            scope: MatchScope::Latest,
            decision: ModelDecision::ToolCalls(vec![ToolCallRequest {
                call_id: String::new(),
                tool_name: "calculator".into(),
                arguments: ArgumentMap::new().with("expression", "1+1"),
            }]),
        }],
        default_final_text: String::new(),
    };
    let engine = engine(forever);
    let session = engine.create_session().map_err(|e| e.to_string())?;
    let run = engine.ask(&session.id, "loop").map_err(|e| e.to_string())?;
    let kind = run.failure.as_ref().map(|f| f.kind);
    ensure(kind == Some(FailureKind::IterationLimit) && run.consultations() == 8 && run.iterations_used == 8, || {
        format!("tools-forever ended {:?} after {} consultations", kind, run.consultations())
    })?;
    Ok(format!("500 scripts {by_status:?}; tools-forever fails with IterationLimit at 8"))
}

// Extraction robustness

const FRAGMENTS: &[&str] = &[
    "{", "}", "\"answer\"", "'answer'", ":", "=", "\"A\"", "\"b\"", "\"E\"", ",", "```json", "'''", "\n", " ", "\"",
    "\\", "[", "]", "Option ", "null", "42", "é", "日本", "(C)", "answer", "{\"answer\": ", "\u{0}", "🙂",
];

fn fuzz_string(rng: &mut StdRng) -> String {
    let mut s = String::new();
    for _ in 0..rng.gen_range(0..24) {
        if rng.gen_bool(0.7) {
            s.push_str(FRAGMENTS[rng.gen_range(0..FRAGMENTS.len())]);
        } else {
            s.push(rng.gen::<char>());
        }
    }
    s
}

fn extraction() -> Outcome {
    let curated = testkit::curated_completions();
    ensure(curated.len() == 50, || format!("{} curated cases", curated.len()))?;
    for (text, expected) in &curated {
        let got = extract_answer(text);
        ensure(got == *expected, || format!("{text:?}: got {got:?}, expected {expected:?}"))?;
    }
    let mut rng = StdRng::seed_from_u64(10_000);
    let (mut letters, mut errors) = (0, 0);
    for _ in 0..10_000 {
        let s = fuzz_string(&mut rng);
        match catch_unwind(AssertUnwindSafe(|| extract_answer(&s))) {
            Ok(Ok('A'..='D')) => letters += 1,
            Ok(Ok(l)) => return Err(format!("{s:?} extracted {l:?}")),
            Ok(Err(_)) => errors += 1,
            Err(_) => return Err(format!("panic on {s:?}")),
        }
    }
    Ok(format!("50 curated pass; 10000 fuzzed: {letters} letters, {errors} typed errors, 0 panics"))
}

// Offline tool clients

fn offline_tools() -> Outcome {
    let transport = Arc::new(ReplayTransport::new(core_fixtures().join("http")));
    let ctx = CallContext::default();
    let keys = |v: &Value| v.as_object().map(|o| o.keys().cloned().collect::<Vec<_>>()).unwrap_or_default();
    let parse = |s: Result<String, _>| -> Result<Value, String> {
        serde_json::from_str(&s.map_err(|e: athena_core::tools::ToolError| e.to_string())?).map_err(|e| e.to_string())
    };
    use athena_core::Tool;

    let search = SearchTool::new(transport.clone(), None);
    let hits = parse(search.invoke(&ArgumentMap::new().with("query", "capital of France").with("max_results", 3i64), &ctx))?;
    ensure(hits.as_array().map(Vec::len) == Some(3) && keys(&hits[0]) == ["snippet", "title", "url"], || {
        format!("search shape {hits}")
    })?;

    let arxiv = ArxivTool::new(transport.clone());
    let papers = parse(arxiv.invoke(&ArgumentMap::new().with("query", "tool learning").with("max_results", 2i64), &ctx))?;
    ensure(
        papers.as_array().map(Vec::len) == Some(2)
            && keys(&papers[0]) == ["abstract", "authors", "identifier", "title"]
            && papers[0]["authors"].as_array().map(Vec::len) == Some(3),
        || format!("arxiv shape {papers}"),
    )?;

    let weather = WeatherTool::new(transport, None);
    let report = parse(weather.invoke(&ArgumentMap::new().with("location", "London"), &ctx))?;
    ensure(
        keys(&report) == ["conditions", "location", "resolved_coordinates", "temperature", "timestamp"]
            && report["resolved_coordinates"] == json!({"lat": 51.5073219, "lon": -0.1276474}),
        || format!("weather shape {report}"),
    )?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("calendar.jsonl");
    let store = CalendarStore::open(&path).map_err(|e| e.to_string())?;
    let mut rng = StdRng::seed_from_u64(200);
    let base = Utc.with_ymd_and_hms(2026, 1, 1, 0, 0, 0).unwrap();
    let mut created = Vec::new();
    for i in 0..200 {
        let start = base + chrono::Duration::minutes(rng.gen_range(0..525_600));
        let mut event = CalendarEvent::new(&format!("event {i} \"quoted\" ✓"), start, start + chrono::Duration::minutes(rng.gen_range(1..600)));
        if rng.gen_bool(0.5) {
            event.description = Some(format!("line one\nline {i}"));
        }
        created.push(store.create(event).map_err(|e| e.to_string())?);
    }
    let reopened = CalendarStore::open(&path).map_err(|e| e.to_string())?;
    created.sort_by(|a, b| a.start.cmp(&b.start).then_with(|| a.id.cmp(&b.id)));
    let all = reopened
        .list(Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap(), Utc.with_ymd_and_hms(2028, 1, 1, 0, 0, 0).unwrap())
        .map_err(|e| e.to_string())?;
    ensure(all == created, || "calendar round trip lost or changed events".into())?;
    Ok("search, arxiv and weather shapes match; 200 calendar events round-trip".into())
}

// Gateway contract

async fn gateway_contract() -> Outcome {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.map_err(|e| e.to_string())?;
    let base = format!("http://{}", listener.local_addr().map_err(|e| e.to_string())?);
    let engine = Arc::new(engine(testkit::weather_calendar_script()));
    tokio::spawn(athena_gateway::serve(listener, engine));
    let client = reqwest::Client::new();
    let err = |e: reqwest::Error| e.to_string();

    let created = client.post(format!("{base}/v1/sessions")).send().await.map_err(err)?;
    ensure(created.status() == 201, || format!("create session returned {}", created.status()))?;
    let session = created.json::<Value>().await.map_err(err)?["id"].as_str().unwrap_or_default().to_string();
    let other = client.post(format!("{base}/v1/sessions")).send().await.map_err(err)?.json::<Value>().await.map_err(err)?;
    ensure(other["id"] != json!(session), || "session ids repeat".into())?;

    let post = |sid: String, body: Value| {
        let client = client.clone();
        let base = base.clone();
        async move { client.post(format!("{base}/v1/sessions/{sid}/messages")).json(&body).send().await }
    };
    ensure(post("missing".into(), json!({"text": "hi"})).await.map_err(err)?.status() == 404, || "unknown session not 404".into())?;
    ensure(post(session.clone(), json!({"text": ""})).await.map_err(err)?.status() == 400, || "empty text not 400".into())?;
    let accepted = post(session.clone(), json!({"text": "Check the weather in London and book a picnic"})).await.map_err(err)?;
    ensure(accepted.status() == 202, || format!("post message returned {}", accepted.status()))?;
    let run_id = accepted.json::<Value>().await.map_err(err)?["run_id"].as_str().unwrap_or_default().to_string();

    let stream = |last: Option<u64>| {
        let (client, url) = (client.clone(), format!("{base}/v1/runs/{run_id}/events"));
        async move {
            let mut req = client.get(url);
            if let Some(id) = last {
                req = req.header("Last-Event-ID", id.to_string());
            }
            let resp = req.send().await?;
            let ct = resp.headers().get("content-type").and_then(|v| v.to_str().ok()).unwrap_or_default().to_string();
            Ok::<_, reqwest::Error>((ct, resp.text().await?))
        }
    };
    let (ct, body) = tokio::time::timeout(Duration::from_secs(10), stream(None)).await.map_err(|_| "stream never closed")?.map_err(err)?;
    ensure(ct.starts_with("text/event-stream"), || format!("content type {ct}"))?;
    let events = parse_sse(&body);

    let run: Value = client.get(format!("{base}/v1/runs/{run_id}")).send().await.map_err(err)?.json().await.map_err(err)?;
    ensure(run["status"] == "completed", || format!("run status {}", run["status"]))?;
    let logged = run["events"].as_array().cloned().unwrap_or_default();
    ensure(events.len() == logged.len() && !events.is_empty(), || format!("{} streamed vs {} logged", events.len(), logged.len()))?;
    for (i, ((kind, id, data), stored)) in events.iter().zip(&logged).enumerate() {
        ensure(*id == i as u64 && stored["kind"] == json!(kind) && stored["payload"] == *data, || format!("event {i} differs"))?;
    }
    ensure(events.last().map(|e| e.0.as_str()) == Some("final_answer"), || "stream did not end at final_answer".into())?;

    let (_, resumed) = stream(Some(3)).await.map_err(err)?;
    let resumed = parse_sse(&resumed);
    ensure(resumed.first().map(|e| e.1) == Some(4) && resumed[..] == events[4..], || "resume did not start at 4".into())?;

    let missing = client.get(format!("{base}/v1/runs/nope/events")).send().await.map_err(err)?;
    ensure(missing.status() == 404, || "unknown run stream not 404".into())?;
    let tools: Value = client.get(format!("{base}/v1/tools")).send().await.map_err(err)?.json().await.map_err(err)?;
    ensure(tools.as_array().is_some_and(|t| t.len() >= 5 && t.iter().any(|s| s["name"] == "calculator")), || "tool listing".into())?;
    Ok(format!("lifecycle, {} ordered events, resume from 4, 404s", events.len()))
}

fn parse_sse(text: &str) -> Vec<(String, u64, Value)> {
    text.split("\n\n")
        .filter_map(|block| {
            let (mut event, mut id, mut data) = (None, None, String::new());
            for line in block.lines() {
                if let Some(v) = line.strip_prefix("event:") {
                    event = Some(v.trim().to_string());
                } else if let Some(v) = line.strip_prefix("id:") {
                    id = v.trim().parse().ok();
                } else if let Some(v) = line.strip_prefix("data:") {
                    data.push_str(v.strip_prefix(' ').unwrap_or(v));
                }
            }
            Some((event?, id?, serde_json::from_str(&data).ok()?))
        })
        .collect()
}

fn gateway() -> Outcome {
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    rt.block_on(gateway_contract())
}

fn main() {
    let criteria: [Check; 7] = [
        ("table reproduction", Duration::from_secs(1), tables),
        ("tool-augmentation delta", Duration::from_secs(30), tool_delta),
        ("calculator oracle equivalence", Duration::from_secs(5), calculator_oracle),
        ("run-loop properties", Duration::from_secs(30), run_loop),
        ("extraction robustness", Duration::from_secs(10), extraction),
        ("offline tool clients", Duration::from_secs(5), offline_tools),
        ("gateway contract", Duration::from_secs(20), gateway),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        let started = Instant::now();
        let outcome = catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = started.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > budget => Err(format!("{detail}; over budget")),
            other => other,
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d.as_str()),
            Err(d) => ("FAIL", d.as_str()),
        };
        println!("{tag} {name} [{:.2}s / {}s] {detail}", elapsed.as_secs_f64(), budget.as_secs());
        failed += usize::from(outcome.is_err());
    }
    println!("{} of 7 criteria passed", 7 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
