//! The chat-completions wire client, exercised against a local mock server —
//! no network, no credentials of your own. The mock answers every request
//! with a fixed choice letter, which is enough to drive a real two-agent
//! dialogue through the LLM backend.
//!
//!     cargo run --example llm_endpoint
//!
//! Against a real endpoint instead:
//!
//!     export MAS_LLM_BASE_URL=https://api.example.com/v1
//!     export MAS_LLM_API_KEY=...
//!     # then build RunConfig with Backend::Llm(LlmEndpoint::from_env(...))

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;

use topolab::agents::{AgentSpec, TaskItem};
use topolab::llm::{LlmConfig, LlmEndpoint, ENV_API_KEY, ENV_BASE_URL};
use topolab::protocol::{run_dialogue, Aggregation, Backend, RunConfig};
use topolab::topology::Topology;

/// Minimal HTTP/1.1 responder: reads one request, replies with a canned
/// chat-completion whose content is always "Answer: B".
fn serve(listener: TcpListener, requests: usize) {
    for _ in 0..requests {
        let (mut sock, _) = listener.accept().expect("accept");
        let mut reader = BufReader::new(sock.try_clone().expect("clone"));
        let mut line = String::new();
        let mut content_length = 0usize;
        loop {
            line.clear();
            reader.read_line(&mut line).expect("headers");
            if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                content_length = v.trim().parse().unwrap_or(0);
            }
            if line == "\r\n" {
                break;
            }
        }
        let mut body = vec![0u8; content_length];
        reader.read_exact(&mut body).expect("body");
        let payload = r#"{"choices":[{"message":{"role":"assistant","content":"Answer: B"}}]}"#;
        let response = format!(
            "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\n\r\n{payload}",
            payload.len()
        );
        sock.write_all(response.as_bytes()).expect("respond");
    }
}

fn main() -> topolab::Result<()> {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind");
    let addr = listener.local_addr().expect("addr");
    // 2 agents × 2 rounds = 4 completions
    let server = std::thread::spawn(move || serve(listener, 4));

    std::env::set_var(ENV_BASE_URL, format!("http://{addr}"));
    std::env::set_var(ENV_API_KEY, "demo-key");
    let endpoint = LlmEndpoint::from_env(&LlmConfig {
        model: "demo-model".into(),
        temperature: 0.2,
        timeout_secs: 5,
    })?;

    let agents = AgentSpec::uniform(2, 0.9, 0.5)?;
    let mut t = Topology::empty(2)?;
    t.add_edge(1, 0)?;
    let task = TaskItem::new(
        "wire-0",
        "Which option is marked correct?",
        4,
        1,
        Some(vec!["alpha".into(), "bravo".into(), "charlie".into(), "delta".into()]),
    )?;
    let cfg = RunConfig {
        rounds: 2,
        aggregation: Aggregation::MajorityVote,
        seed: 0,
        backend: Backend::Llm(endpoint),
        store_prompts: false,
    };

    let outcome = run_dialogue(&t, &agents, &task, &cfg, None)?;
    server.join().expect("server thread");

    println!("mock endpoint at http://{addr} answered every prompt with \"Answer: B\"");
    for (r, row) in outcome.transcript.answers.iter().enumerate() {
        println!("round {}: parsed answers {row:?}", r + 1);
    }
    if let Some(texts) = &outcome.transcript.answer_texts {
        println!("raw round-1 replies: {:?}", texts[0]);
    }
    println!(
        "final answer {} (gold {}) — {}",
        outcome.final_answer,
        task.gold,
        if outcome.correct == 1 { "correct" } else { "incorrect" }
    );
    Ok(())
}
