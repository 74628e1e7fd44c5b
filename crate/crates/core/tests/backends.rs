use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use expdesign_core::llm::{
    chat_with_retry, HttpBackend, LlmBackend, LlmError, RetryPolicy, SamplingParams, ScriptedBackend,
};

struct Captured {
    head: String,
    body: String,
}

/// Serves `replies` (status, body) to successive connections and reports
/// each request it saw.
fn serve(replies: Vec<(u16, String)>) -> (String, mpsc::Receiver<Captured>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut head = String::new();
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                head.push_str(&line);
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            tx.send(Captured {
                head,
                body: String::from_utf8(buf).unwrap(),
            })
            .unwrap();
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (url, rx)
}

fn completion(text: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
}

#[test]
fn http_backend_retries_rate_limit_then_succeeds() {
    let (url, rx) = serve(vec![
        (429, r#"{"error":"slow down"}"#.into()),
        (200, completion("**Solution:\n## MYC\n")),
    ]);
    let backend = HttpBackend::new(url, "test-model", Some("sk-test".into()), Duration::from_secs(10));
    let params = SamplingParams {
        temperature: 0.3,
        max_tokens: 100,
    };
    let text = chat_with_retry(&backend, "sys", "user prompt", &params, &RetryPolicy::immediate(3)).unwrap();
    assert_eq!(text, "**Solution:\n## MYC\n");

    let first = rx.recv().unwrap();
    assert!(first.head.starts_with("POST /v1/chat/completions"));
    assert!(first.head.to_ascii_lowercase().contains("authorization: bearer sk-test"));
    let body: serde_json::Value = serde_json::from_str(&first.body).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["messages"][0]["content"], "sys");
    assert_eq!(body["messages"][1]["role"], "user");
    assert_eq!(body["temperature"], 0.3);
    assert_eq!(body["max_tokens"], 100);
    assert!(rx.recv().is_ok());
}

#[test]
fn http_backend_does_not_retry_auth_failure() {
    let (url, rx) = serve(vec![(401, "{}".into()), (200, completion("never"))]);
    let backend = HttpBackend::new(url, "m", None, Duration::from_secs(10));
    let err = chat_with_retry(&backend, "s", "u", &SamplingParams::default(), &RetryPolicy::immediate(3)).unwrap_err();
    assert!(matches!(err, LlmError::Status { status: 401, .. }));
    assert!(!rx.recv().unwrap().head.to_ascii_lowercase().contains("authorization"));
    assert!(rx.recv_timeout(Duration::from_millis(200)).is_err());
}

#[test]
fn http_backend_flags_malformed_documents() {
    let (url, _rx) = serve(vec![(200, r#"{"choices": []}"#.into())]);
    let backend = HttpBackend::new(url, "m", None, Duration::from_secs(10));
    let err = backend.chat("s", "u", &SamplingParams::default()).unwrap_err();
    assert!(matches!(err, LlmError::Protocol(_)));
}

#[test]
fn unreachable_endpoint_exhausts_retries() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let backend = HttpBackend::new(format!("http://127.0.0.1:{port}/x"), "m", None, Duration::from_secs(2));
    let err = chat_with_retry(&backend, "s", "u", &SamplingParams::default(), &RetryPolicy::immediate(2)).unwrap_err();
    assert!(matches!(err, LlmError::Exhausted { attempts: 2, .. }), "{err:?}");
}

#[test]
fn scripted_fixtures_from_directory() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("round-1.txt"), "first").unwrap();
    std::fs::write(dir.path().join("round-3.txt"), "third").unwrap();
    std::fs::write(dir.path().join("notes.md"), "ignored").unwrap();
    let b = ScriptedBackend::from_dir(dir.path()).unwrap();
    let p = SamplingParams::default();
    assert_eq!(b.chat("", "This is round 3.", &p).unwrap(), "third");
    assert!(matches!(b.chat("", "This is round 2.", &p), Err(LlmError::Fixture(_))));
    assert!(ScriptedBackend::from_dir(&dir.path().join("missing")).is_err());
}
