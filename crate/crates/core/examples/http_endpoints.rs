//! The OpenAI-compatible chat client and the locator client. Without
//! arguments both talk to a throwaway local server that prints what it
//! receives; with `MLLM_BASE_URL` (and optionally `MLLM_API_KEY`,
//! `LOCATOR_BASE_URL`) set they call real endpoints with a screenshot.
//!
//! ```bash
//! cargo run --example http_endpoints
//! MLLM_BASE_URL=http://localhost:8000/v1 LOCATOR_BASE_URL=http://localhost:8001 \
//!     cargo run --example http_endpoints -- screenshot.png "open Gmail"
//! ```

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;

use tapwise::action::UiCommand;
use tapwise::device::adb::{fake_png, png_dimensions};
use tapwise::gateway::http::{HttpLocator, OpenAiChatClient, ENV_LOCATOR_BASE_URL, ENV_MLLM_API_KEY, ENV_MLLM_BASE_URL};
use tapwise::gateway::{decide, ChatRequest, EndpointConfig, Locator, PromptBundle, Purpose, Secret};
use tapwise::trace::{Observation, Subset, TaskSpec, EMPTY_HISTORY};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let env = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());

    let (mllm_url, locator_url) = match env(ENV_MLLM_BASE_URL) {
        Some(url) => (url, env(ENV_LOCATOR_BASE_URL)),
        None => {
            let base = spawn_echo_server()?;
            (format!("{base}/v1"), Some(base))
        }
    };
    let png = match args.first() {
        Some(path) => std::fs::read(path)?,
        None => fake_png(1080, 2400),
    };
    let (w, h) = png_dimensions(&png).ok_or("not a PNG")?;
    let obs = Observation::new(png, "png", w, h, 0);
    let task = TaskSpec::new("demo", Subset::General, args.get(1).cloned().unwrap_or_else(|| "Open Gmail".into()));

    let mut ep = EndpointConfig::new(mllm_url, "InternVL2-76B");
    ep.api_key = env(ENV_MLLM_API_KEY).map(Secret::new);
    ep.max_retries = 1;
    let client = OpenAiChatClient::new(ep)?;

    // Full decision call: prompt rendering, completion, grammar parse, re-prompt.
    let prompts = PromptBundle::default();
    match decide(&client, &prompts, &task, EMPTY_HISTORY, &obs) {
        Ok(d) => println!("decision: {} (attempts {})", tapwise::render_action(&d.action).replace('\n', " | "), d.attempts),
        Err(e) => println!("decision failed: {e}"),
    }

    // A raw completion, for a look at the wire format.
    let req = ChatRequest {
        purpose: Purpose::Reflection,
        attempt: 0,
        system: "Answer with STATUS: SUCCESS or STATUS: FAILURE.",
        prompt: "Is the Gmail inbox open?",
        image: Some(&obs),
        task: &task,
        app_list: &[],
        app_hint: None,
    };
    println!("raw completion: {:?}", tapwise::gateway::ChatModel::complete(&client, &req));

    if let Some(url) = locator_url {
        let locator = HttpLocator::new(EndpointConfig::new(url, "OS-Atlas-Pro-7B"))?;
        let cmd = UiCommand::new("click on the Gmail icon.")?;
        println!("locator box: {:?}", locator.locate(&obs, &cmd).map(|b| b.as_array()));
    }
    Ok(())
}

/// Answers chat completions with a fixed decision and `/locate` with a fixed
/// box, printing a summary of each request body.
fn spawn_echo_server() -> std::io::Result<String> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let base = format!("http://{}", listener.local_addr()?);
    std::thread::spawn(move || {
        for stream in listener.incoming().flatten() {
            let mut reader = BufReader::new(stream);
            let mut request_line = String::new();
            if reader.read_line(&mut request_line).is_err() {
                continue;
            }
            let mut len = 0;
            loop {
                let mut h = String::new();
                if reader.read_line(&mut h).is_err() || h.trim().is_empty() {
                    break;
                }
                if let Some(v) = h.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap_or(0);
                }
            }
            let mut body = vec![0; len];
            let _ = reader.read_exact(&mut body);
            let json: serde_json::Value = serde_json::from_slice(&body).unwrap_or_default();
            let path = request_line.split_whitespace().nth(1).unwrap_or("").to_string();
            let reply = if path.ends_with("/chat/completions") {
                let parts = json.pointer("/messages/1/content").and_then(|c| c.as_array()).map(|a| a.len()).unwrap_or(0);
                println!("  [stub] {path}: model={} parts={parts}", json["model"]);
                let content = if json.pointer("/messages/1/content/0/text").and_then(|t| t.as_str()).is_some_and(|t| t.contains("Gmail inbox")) {
                    "STATUS: FAILURE\nThe inbox is not visible."
                } else {
                    "ACTION: OPEN_APP\nAPP: Gmail"
                };
                serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]})
            } else {
                println!("  [stub] {path}: command={} image_b64 bytes={}", json["command"], json["image_b64"].as_str().map_or(0, str::len));
                serde_json::json!({"x1": 0.29, "y1": 0.7, "x2": 0.46, "y2": 0.8})
            };
            let text = reply.to_string();
            let mut stream = reader.into_inner();
            let _ = write!(stream, "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}", text.len());
        }
    });
    Ok(base)
}
