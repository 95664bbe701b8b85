//! Helpers shared by the integration tests: a tiny HTTP stub, fixture paths
//! and proptest strategies.
#![allow(dead_code)]

use std::collections::{BTreeMap, VecDeque};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::thread;

use proptest::prelude::*;
use tapwise::device::{DeviceInfo, Driver};
use tapwise::eval::ingest_tasks;
use tapwise::trace::{ObsRef, Outcome, Phase, Step, Subset, TaskSpec, Verdict};
use tapwise::{bbox_center, Action, BoundingBox, Direction, EpisodeTrace};

pub fn asset(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("assets").join(rel)
}

pub fn fixture_tasks() -> Vec<TaskSpec> {
    ingest_tasks(&asset("tasks/all.tsv")).expect("fixture tasks parse")
}

#[derive(Debug, Clone)]
pub struct RecordedRequest {
    pub method: String,
    pub path: String,
    pub headers: BTreeMap<String, String>,
    pub body: Vec<u8>,
}

impl RecordedRequest {
    pub fn json(&self) -> serde_json::Value {
        serde_json::from_slice(&self.body).expect("request body is JSON")
    }
}

/// Answers each request with the next queued `(status, body)`; the last
/// response repeats once the queue runs dry.
pub struct StubServer {
    pub base_url: String,
    requests: Arc<Mutex<Vec<RecordedRequest>>>,
}

impl StubServer {
    pub fn start(responses: Vec<(u16, String)>) -> StubServer {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let base_url = format!("http://{}", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let log = requests.clone();
        let mut queue: VecDeque<(u16, String)> = responses.into();
        thread::spawn(move || {
            let mut last = (500, "{}".to_string());
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { break };
                let Some(req) = read_request(&mut stream) else { continue };
                log.lock().unwrap().push(req);
                if let Some(r) = queue.pop_front() {
                    last = r;
                }
                let (status, body) = &last;
                let reply = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                let _ = stream.write_all(reply.as_bytes());
            }
        });
        StubServer { base_url, requests }
    }

    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.requests.lock().unwrap().clone()
    }
}

fn read_request(stream: &mut std::net::TcpStream) -> Option<RecordedRequest> {
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    reader.read_line(&mut line).ok()?;
    let mut parts = line.split_whitespace();
    let method = parts.next()?.to_string();
    let path = parts.next()?.to_string();
    let mut headers = BTreeMap::new();
    loop {
        let mut h = String::new();
        reader.read_line(&mut h).ok()?;
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            headers.insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
        }
    }
    let len: usize = headers.get("content-length").and_then(|v| v.parse().ok()).unwrap_or(0);
    let mut body = vec![0; len];
    reader.read_exact(&mut body).ok()?;
    Some(RecordedRequest { method, path, headers, body })
}

// Single-line text that survives trimming.
fn line_text() -> impl Strategy<Value = String> {
    "[A-Za-z0-9@._'!?,-][A-Za-z0-9 @._'!?,:-]{0,38}[A-Za-z0-9@._'!?,-]|[A-Za-z0-9]"
}

pub fn arb_direction() -> impl Strategy<Value = Direction> {
    prop::sample::select(Direction::ALL.to_vec())
}

pub fn arb_action() -> impl Strategy<Value = Action> {
    prop_oneof![
        line_text().prop_map(|t| Action::click(t).unwrap()),
        line_text().prop_map(|t| Action::type_text(t).unwrap()),
        "[a-z][a-z0-9_]{0,10}(\\.[a-z][a-z0-9_]{0,10}){0,3}".prop_map(|t| Action::open_app(t).unwrap()),
        arb_direction().prop_map(Action::swipe),
    ]
}

pub fn arb_bbox() -> impl Strategy<Value = BoundingBox> {
    (0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64)
        .prop_map(|(a, b, c, d)| BoundingBox::new(a.min(c), b.min(d), a.max(c), b.max(d)).unwrap())
}

fn obs_ref(seed: u64, w: u32, h: u32, at: u64) -> ObsRef {
    ObsRef { digest: format!("{seed:064x}"), format_tag: "png".into(), screen_w: w, screen_h: h, captured_at_ms: at }
}

fn arb_step(w: u32, h: u32) -> impl Strategy<Value = Step> {
    (arb_action(), arb_bbox(), any::<bool>(), any::<u64>(), prop::array::uniform4(0u64..10_000), "[a-z ]{0,20}", 0u32..4)
        .prop_map(move |(action, b, miss, seed, ms, rationale, attempts)| {
            let (locator_box, tap_point, exec_error) = if action.is_click() {
                if miss {
                    (None, None, Some("element not found".to_string()))
                } else {
                    (Some(b), Some(bbox_center(&b, w, h).unwrap()), None)
                }
            } else {
                (None, None, None)
            };
            let resolved_app = match &action {
                Action::OpenApp { app_id } => Some(app_id.as_str().to_string()),
                _ => None,
            };
            Step {
                index: 0,
                pre_obs: obs_ref(seed, w, h, ms[0]),
                decision_raw: tapwise::render_action(&action),
                decide_attempts: attempts + 1,
                action,
                locator_box,
                tap_point,
                resolved_app,
                exec_error,
                post_obs: obs_ref(seed.wrapping_add(1), w, h, ms[1]),
                verdict: Verdict::failure(rationale),
                reflect_attempts: 1,
                decide_ms: ms[0],
                locate_ms: ms[1],
                execute_ms: ms[2],
                reflect_ms: ms[3],
            }
        })
}

pub fn arb_trace() -> impl Strategy<Value = EpisodeTrace> {
    (1u32..4000, 1u32..4000)
        .prop_flat_map(|(w, h)| {
            (
                Just((w, h)),
                prop::collection::vec(arb_step(w, h), 0..8),
                any::<u64>(),
                0u8..3,
                any::<bool>(),
                line_text(),
                prop::option::of("[a-z-]{1,12}:[a-z_]{1,16}"),
            )
        })
        .prop_map(|((w, h), mut steps, seed, outcome, cache_reset, instruction, goal)| {
            for (i, s) in steps.iter_mut().enumerate() {
                s.index = i;
            }
            let outcome = match outcome {
                0 if !steps.is_empty() => {
                    steps.last_mut().unwrap().verdict = Verdict::success("done");
                    Outcome::Success
                }
                2 => Outcome::Error { phase: Phase::Decide, message: "transport failure".into() },
                _ => Outcome::BudgetExhausted,
            };
            let mut task = TaskSpec::new("t-1", Subset::General, instruction);
            task.sim_goal = goal;
            let device = DeviceInfo { driver: Driver::Adb, screen_w: w, screen_h: h, serial_or_world_id: "emulator-5554".into(), source: None };
            let mut t = EpisodeTrace::new(task, "fp", seed, device, cache_reset, 20);
            t.total_ms = steps.iter().map(Step::phase_total_ms).sum();
            t.steps = steps;
            t.outcome = outcome;
            t
        })
}
