// Talks to a chat-completions endpoint for relations. Without
// `LCV_ENDPOINT_URL` set, a tiny local server stands in for the endpoint.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use lcv::providers::{
    reconstruct_relation, CachedRelationProvider, EndpointConfig, RelationCache, RemoteRelationProvider,
};

/// Serves canned chat replies on an ephemeral port. Returns the URL and a
/// request counter.
pub fn spawn_mock_endpoint(reply: &'static str) -> std::io::Result<(String, Arc<AtomicUsize>)> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let url = format!("http://{}/v1/chat/completions", listener.local_addr()?);
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming().flatten() {
            let mut reader = BufReader::new(stream);
            let mut length = 0;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap_or(0);
                }
            }
            let mut body = vec![0; length];
            if reader.read_exact(&mut body).is_err() {
                continue;
            }
            counter.fetch_add(1, Ordering::SeqCst);
            let payload = serde_json::json!({"choices": [{"message": {"role": "assistant", "content": reply}}]}).to_string();
            let mut stream = reader.into_inner();
            let _ = write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                payload.len()
            );
        }
    });
    Ok((url, hits))
}

/// Two passes over the same pair through a shared cache; returns the
/// relation and the number of endpoint requests seen by the mock (or
/// `None` for a real endpoint).
pub fn remote_endpoint() -> Result<(String, Option<usize>), Box<dyn std::error::Error>> {
    let (config, hits) = match EndpointConfig::from_env() {
        Ok(c) => (c, None),
        Err(_) => {
            let (url, hits) = spawn_mock_endpoint("  \"The school fund was cut.\"\nextra line")?;
            (EndpointConfig::new(url, "mock"), Some(hits))
        }
    };
    let cache = Arc::new(RelationCache::in_memory());
    let provider = CachedRelationProvider::new(RemoteRelationProvider::new(config), cache);
    let sentence = "The council approved the bridge budget.";
    let article = "The council approved the bridge budget and cut the school fund.";
    let first = reconstruct_relation(&provider, sentence, article)?;
    let second = reconstruct_relation(&provider, sentence, article)?;
    assert_eq!(first, second);
    let requests = hits.map(|h| h.load(Ordering::SeqCst));
    println!("relation: {first}");
    if let Some(n) = requests {
        println!("endpoint requests for two lookups: {n}");
    }
    Ok((first.to_string(), requests))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    remote_endpoint()?;
    Ok(())
}
