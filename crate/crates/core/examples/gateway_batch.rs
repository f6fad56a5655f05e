//! Send a batch of prompts through the retrying client to an in-process
//! mock server that fails every third call once.
//!
//!     cargo run --example gateway_batch

#[path = "../tests/common/mock_llm.rs"]
mod mock_llm;

use std::time::Duration;

use medlogic::gateway::{GenRequest, LlmClient, RetryPolicy};
use mock_llm::{prompt_of, MockLlm, Reply};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mock = MockLlm::start(Duration::from_millis(20), |body, call| {
        if call % 3 == 2 {
            Reply::Status(503)
        } else {
            Reply::Text(format!("echo: {}", prompt_of(body)))
        }
    });
    let client = LlmClient::new(&mock.url, Some("demo-token".into())).with_retry(RetryPolicy {
        base_delay: Duration::from_millis(10),
        ..RetryPolicy::default()
    });
    let requests: Vec<GenRequest> = (0..8).map(|i| GenRequest::new("demo", format!("question {i}"))).collect();

    for (req, res) in requests.iter().zip(client.generate_batch(&requests, 3).await) {
        match res {
            Ok(r) => println!("{:<12} -> {:<22} attempts={} {} ms", req.prompt, r.text, r.attempt_count, r.latency_ms),
            Err(e) => println!("{:<12} -> error: {e}", req.prompt),
        }
    }
    println!("server saw {} call(s), peak concurrency {}", mock.calls(), mock.peak());
    Ok(())
}
