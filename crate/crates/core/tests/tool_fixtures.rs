//! Network tool clients against committed response fixtures.
//!
//! Each fixture body lives under `fixtures/http/src/` with a readable name;
//! the replay transport serves copies named by request hash. Regenerate the
//! hashed copies after changing a request shape with
//! `cargo test -p athena-core --test tool_fixtures -- --ignored`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use athena_core::llm::{ChatMessage, HttpBackend, HttpBackendConfig, ModelDecision};
use athena_core::tools::arxiv::ArxivTool;
use athena_core::tools::calendar::{CalendarEvent, CalendarStore};
use athena_core::tools::search::SearchTool;
use athena_core::tools::weather::{
    Coordinates, WeatherTool, CURRENT_ENDPOINT, FORECAST_ENDPOINT, GEOCODING_ENDPOINT,
};
use athena_core::tools::{CallContext, Tool, ToolError};
use athena_core::transport::{HttpRequest, ReplayTransport};
use athena_core::{ArgumentMap, Backend};
use chrono::{DateTime, Duration, NaiveDate, TimeZone, Utc};
use rand::{Rng, SeedableRng};

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/http")
}

fn replay() -> Arc<ReplayTransport> {
    Arc::new(ReplayTransport::new(fixture_dir()))
}

const LONDON: Coordinates = Coordinates { lat: 51.5073219, lon: -0.1276474 };

fn chat_history() -> Vec<ChatMessage> {
    vec![ChatMessage::user("Will it rain in London tomorrow?")]
}

fn weather_schema() -> Vec<athena_core::ToolSchema> {
    vec![WeatherTool::new(replay(), None).schema()]
}

/// Every recorded request, paired with its readable source file.
fn fixture_requests() -> Vec<(&'static str, HttpRequest)> {
    let search = SearchTool::new(replay(), None);
    let arxiv = ArxivTool::new(replay());
    let geo = |q: &str| {
        WeatherTool::build_request(GEOCODING_ENDPOINT, &[("q", q.to_string()), ("limit", "1".into())], "replay").unwrap()
    };
    let point = |endpoint| WeatherTool::build_request(endpoint, &WeatherTool::point_params(LONDON), "replay").unwrap();
    let backend = HttpBackend::with_transport(HttpBackendConfig::new("https://api.openai.com/v1", "gpt-4o"), replay());
    vec![
        ("serper_capital_of_france.json", search.request("capital of France", 3).unwrap()),
        ("arxiv_tool_learning.xml", arxiv.request("tool learning", 2).unwrap()),
        ("arxiv_malformed.xml", arxiv.request("truncated feed", 5).unwrap()),
        ("geo_london.json", geo("London")),
        ("geo_xyzzyville.json", geo("Xyzzyville")),
        ("weather_london.json", point(CURRENT_ENDPOINT)),
        ("forecast_london.json", point(FORECAST_ENDPOINT)),
        ("chat_tool_call.json", backend.request(&chat_history(), &weather_schema()).unwrap()),
    ]
}

#[test]
#[ignore]
fn regenerate_hashed_fixtures() {
    let dir = fixture_dir();
    for (src, request) in fixture_requests() {
        let body = std::fs::read_to_string(dir.join("src").join(src)).unwrap();
        let target = ReplayTransport::fixture_path(&dir, &request);
        std::fs::write(&target, body).unwrap();
        println!("{src} -> {}", target.file_name().unwrap().to_string_lossy());
    }
}

#[test]
fn hashed_fixtures_match_sources() {
    let dir = fixture_dir();
    for (src, request) in fixture_requests() {
        let expected = std::fs::read_to_string(dir.join("src").join(src)).unwrap();
        let path = ReplayTransport::fixture_path(&dir, &request);
        let actual = std::fs::read_to_string(&path)
            .unwrap_or_else(|_| panic!("{} missing for {src}; run the ignored regenerate test", path.display()));
        assert_eq!(actual, expected, "{src} is stale");
    }
}

fn ctx() -> CallContext {
    CallContext::default()
}

#[test]
fn search_fixture_parses_to_hits() {
    let tool = SearchTool::new(replay(), None);
    let hits = tool.search("capital of France", 3, &ctx()).unwrap();
    assert_eq!(hits.len(), 3);
    assert_eq!(hits[0].title, "Paris - Wikipedia");
    assert_eq!(hits[0].url, "https://en.wikipedia.org/wiki/Paris");
    assert!(hits[0].snippet.contains("capital and largest city of France"));
    let json: serde_json::Value =
        serde_json::from_str(&tool.invoke(&ArgumentMap::new().with("query", "capital of France").with("max_results", 3i64), &ctx()).unwrap())
            .unwrap();
    let keys: Vec<_> = json[0].as_object().unwrap().keys().cloned().collect();
    assert_eq!(keys, ["snippet", "title", "url"]);
    assert_eq!(tool.search("capital of France", 0, &ctx()), Ok(vec![]));
}

#[test]
fn arxiv_fixture_parses_to_records() {
    let tool = ArxivTool::new(replay());
    let records = tool.lookup("tool learning", 2, &ctx()).unwrap();
    assert_eq!(records.len(), 2);
    assert_eq!(records[0].title, "Toolformer: Language Models Can Teach Themselves to Use Tools");
    assert_eq!(records[0].authors, ["Timo Schick", "Jane Dwivedi-Yu", "Roberto Dessì"]);
    assert_eq!(records[0].identifier, "2302.04761v1");
    assert!(records[0].abstract_text.starts_with("Language models (LMs) exhibit"));
    assert!(!records[0].abstract_text.contains('\n'));
    assert_eq!(records[1].identifier, "2304.08354v2");
    assert!(records[1].abstract_text.contains("limitations & explore"));

    let out: serde_json::Value =
        serde_json::from_str(&tool.invoke(&ArgumentMap::new().with("query", "tool learning").with("max_results", 2i64), &ctx()).unwrap())
            .unwrap();
    let keys: Vec<_> = out[0].as_object().unwrap().keys().cloned().collect();
    assert_eq!(keys, ["abstract", "authors", "identifier", "title"]);
}

#[test]
fn malformed_arxiv_feed_is_upstream_error() {
    let tool = ArxivTool::new(replay());
    assert!(matches!(tool.lookup("truncated feed", 5, &ctx()), Err(ToolError::Upstream { .. })));
}

#[test]
fn weather_fixture_resolves_and_reports() {
    let tool = WeatherTool::new(replay(), None);
    let report = tool.fetch("London", None, &ctx()).unwrap();
    assert_eq!(report.location, "London, England, GB");
    assert_eq!(report.resolved_coordinates, LONDON);
    assert_eq!(report.temperature, 14.62);
    assert_eq!(report.conditions, "broken clouds");
    assert_eq!(report.timestamp, Utc.with_ymd_and_hms(2026, 10, 17, 12, 0, 0).unwrap());

    let day = NaiveDate::from_ymd_opt(2026, 10, 18).unwrap();
    let forecast = tool.fetch("London", Some(day), &ctx()).unwrap();
    assert_eq!(forecast.conditions, "clear sky");
    assert_eq!(forecast.temperature, 16.4);
    assert_eq!(forecast.timestamp, Utc.with_ymd_and_hms(2026, 10, 18, 12, 0, 0).unwrap());

    let out: serde_json::Value =
        serde_json::from_str(&tool.invoke(&ArgumentMap::new().with("location", "London"), &ctx()).unwrap()).unwrap();
    let keys: Vec<_> = out.as_object().unwrap().keys().cloned().collect();
    assert_eq!(keys, ["conditions", "location", "resolved_coordinates", "temperature", "timestamp"]);
}

#[test]
fn unknown_place_is_unknown_location() {
    let tool = WeatherTool::new(replay(), None);
    assert_eq!(tool.fetch("Xyzzyville", None, &ctx()), Err(ToolError::UnknownLocation("Xyzzyville".into())));
}

#[test]
fn missing_fixture_surfaces_as_error() {
    let tool = WeatherTool::new(replay(), None);
    assert!(tool.fetch("Atlantis", None, &ctx()).is_err());
}

#[test]
fn chat_completion_fixture_decodes_tool_call() {
    let backend = HttpBackend::with_transport(HttpBackendConfig::new("https://api.openai.com/v1", "gpt-4o"), replay());
    let decision = backend.complete(&chat_history(), &weather_schema()).unwrap();
    let ModelDecision::ToolCalls(calls) = decision else { panic!("expected tool calls, got {decision:?}") };
    assert_eq!(calls.len(), 1);
    assert_eq!(calls[0].call_id, "call_Qm3kT8");
    assert_eq!(calls[0].tool_name, "weather");
    assert_eq!(calls[0].arguments.str("location"), Some("London"));
    assert_eq!(calls[0].arguments.str("date"), Some("2026-10-18"));
}

fn random_events(n: usize, seed: u64) -> Vec<CalendarEvent> {
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let base: DateTime<Utc> = Utc.with_ymd_and_hms(2026, 1, 1, 0, 0, 0).unwrap();
    (0..n)
        .map(|i| {
            let start = base + Duration::minutes(rng.gen_range(0..60 * 24 * 365));
            let end = start + Duration::minutes(rng.gen_range(1..600));
            let mut e = CalendarEvent::new(&format!("event {i} ✓ \"quoted\""), start, end);
            if rng.gen_bool(0.5) {
                e.description = Some(format!("notes\nline {i}"));
            }
            e
        })
        .collect()
}

#[test]
fn calendar_round_trips_generated_events() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("calendar.jsonl");
    let store = CalendarStore::open(&path).unwrap();
    let created: Vec<CalendarEvent> = random_events(200, 42).into_iter().map(|e| store.create(e).unwrap()).collect();

    let reopened = CalendarStore::open(&path).unwrap();
    assert_eq!(reopened.len(), 200);
    let all_start = Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap();
    let all_end = Utc.with_ymd_and_hms(2028, 1, 1, 0, 0, 0).unwrap();
    let mut expected = created.clone();
    expected.sort_by(|a, b| a.start.cmp(&b.start).then_with(|| a.id.cmp(&b.id)));
    assert_eq!(reopened.list(all_start, all_end).unwrap(), expected);

    // Windowed listing agrees with a brute-force overlap filter.
    let from = Utc.with_ymd_and_hms(2026, 6, 1, 0, 0, 0).unwrap();
    let to = from + Duration::days(30);
    let brute: Vec<_> = expected.iter().filter(|e| e.start < to && e.end > from).cloned().collect();
    assert_eq!(reopened.list(from, to).unwrap(), brute);
}
