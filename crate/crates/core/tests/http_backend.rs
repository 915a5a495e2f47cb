use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use relverb::backend::{
    BackendConfig, BackendError, BackendKind, BackoffPolicy, CompletionBackend, CompletionRequest,
    HttpBackend, ReplayBackend,
};

struct Captured {
    headers: Vec<String>,
    body: serde_json::Value,
}

/// Serves one scripted `(status, body)` per connection and records requests.
fn serve(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Captured>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut headers = Vec::new();
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end().to_owned();
                if line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                headers.push(line);
            }
            let mut raw = vec![0; length];
            reader.read_exact(&mut raw).unwrap();
            log.lock().unwrap().push(Captured {
                headers,
                body: serde_json::from_slice(&raw).unwrap(),
            });
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (url, seen)
}

fn ok_body(text: &str) -> String {
    serde_json::json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": text}}]}).to_string()
}

fn config(url: &str, key_env: &str) -> BackendConfig {
    BackendConfig {
        kind: BackendKind::Http,
        endpoint_url: url.to_owned(),
        model_name: "test-model".into(),
        max_tokens: 64,
        timeout: Duration::from_secs(5),
        transport_retries: 2,
        api_key_env: key_env.into(),
        backoff: BackoffPolicy {
            base: Duration::from_millis(10),
            factor: 2,
            cap: Duration::from_millis(40),
            max_attempts: 2,
        },
        ..BackendConfig::default()
    }
}

#[test]
fn request_has_single_user_turn_at_zero_temperature() {
    let (url, seen) = serve(vec![(200, ok_body("<subject> creator <object>"))]);
    std::env::set_var("RELVERB_TEST_KEY_SHAPE", "sk-test");
    let backend = HttpBackend::new(config(&url, "RELVERB_TEST_KEY_SHAPE")).unwrap();
    let text = backend.complete(&CompletionRequest::bare("hello prompt")).unwrap();
    assert_eq!(text, "<subject> creator <object>");

    let seen = seen.lock().unwrap();
    let body = &seen[0].body;
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["max_tokens"], 64);
    assert_eq!(body["messages"], serde_json::json!([{"role": "user", "content": "hello prompt"}]));
    assert!(seen[0]
        .headers
        .iter()
        .any(|h| h.eq_ignore_ascii_case("authorization: Bearer sk-test")));
}

#[test]
fn empty_choices_are_malformed() {
    let (url, seen) = serve(vec![(200, r#"{"choices": []}"#.into())]);
    let backend = HttpBackend::new(config(&url, "RELVERB_TEST_KEY_UNSET")).unwrap();
    let err = backend.complete(&CompletionRequest::bare("p")).unwrap_err();
    assert!(matches!(err, BackendError::MalformedResponse(_)), "{err:?}");
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn rate_limit_backs_off_then_succeeds() {
    let (url, seen) = serve(vec![
        (429, "{}".into()),
        (429, "{}".into()),
        (200, ok_body("done")),
    ]);
    let backend = HttpBackend::new(config(&url, "RELVERB_TEST_KEY_UNSET")).unwrap();
    let start = Instant::now();
    assert_eq!(backend.complete(&CompletionRequest::bare("p")).unwrap(), "done");
    assert!(start.elapsed() >= Duration::from_millis(30));
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn persistent_rate_limit_becomes_transport_error() {
    let (url, seen) = serve(vec![(429, "{}".into()), (429, "{}".into()), (429, "{}".into())]);
    let backend = HttpBackend::new(config(&url, "RELVERB_TEST_KEY_UNSET")).unwrap();
    let err = backend.complete(&CompletionRequest::bare("p")).unwrap_err();
    assert!(matches!(err, BackendError::Transport(_)), "{err:?}");
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn server_errors_are_retried_client_errors_are_not() {
    let (url, seen) = serve(vec![(500, "oops".into()), (200, ok_body("fine"))]);
    let backend = HttpBackend::new(config(&url, "RELVERB_TEST_KEY_UNSET")).unwrap();
    assert_eq!(backend.complete(&CompletionRequest::bare("p")).unwrap(), "fine");
    assert_eq!(seen.lock().unwrap().len(), 2);

    let (url, seen) = serve(vec![(400, "bad".into())]);
    let backend = HttpBackend::new(config(&url, "RELVERB_TEST_KEY_UNSET")).unwrap();
    assert!(matches!(
        backend.complete(&CompletionRequest::bare("p")),
        Err(BackendError::Transport(_))
    ));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn replay_records_once_and_then_serves_from_disk() {
    let (url, seen) = serve(vec![(200, ok_body("cached answer"))]);
    let dir = tempfile::tempdir().unwrap();
    let http: Arc<dyn CompletionBackend> =
        Arc::new(HttpBackend::new(config(&url, "RELVERB_TEST_KEY_UNSET")).unwrap());
    let replay = ReplayBackend::new(dir.path().to_owned(), "test-model".into(), Some(http)).unwrap();
    for _ in 0..3 {
        assert_eq!(replay.complete(&CompletionRequest::bare("p")).unwrap(), "cached answer");
    }
    assert_eq!(seen.lock().unwrap().len(), 1);

    let offline = ReplayBackend::new(dir.path().to_owned(), "test-model".into(), None).unwrap();
    assert_eq!(offline.complete(&CompletionRequest::bare("p")).unwrap(), "cached answer");
    assert!(matches!(
        offline.complete(&CompletionRequest::bare("other")),
        Err(BackendError::CacheMiss(_))
    ));
}
