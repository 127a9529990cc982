//! HTTP backend against scripted local servers.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use navwatch::gateway::{ChatBackend, ChatRequest, Gateway, GatewayError, LiveBackend, LiveConfig, RequestKind};

#[derive(Clone)]
enum Reply {
    Status(u16, &'static str),
    Stall(Duration),
}

struct Server {
    url: String,
    requests: Arc<Mutex<Vec<String>>>,
}

fn read_request(stream: &mut TcpStream) -> String {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut head = String::new();
    let mut len = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            break;
        }
        if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
            len = v.trim().parse().unwrap_or(0);
        }
        let end = line == "\r\n";
        head.push_str(&line);
        if end {
            break;
        }
    }
    let mut body = vec![0; len];
    let _ = reader.read_exact(&mut body);
    head + &String::from_utf8_lossy(&body)
}

/// Serves `script` in order, one reply per connection, repeating the last.
fn serve(script: Vec<Reply>) -> Server {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let requests = Arc::new(Mutex::new(Vec::new()));
    let log = requests.clone();
    thread::spawn(move || {
        for (i, stream) in listener.incoming().enumerate() {
            let Ok(mut stream) = stream else { break };
            let req = read_request(&mut stream);
            log.lock().unwrap().push(req);
            match script[i.min(script.len() - 1)].clone() {
                Reply::Status(code, body) => {
                    let _ = write!(
                        stream,
                        "HTTP/1.1 {code} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                        body.len()
                    );
                }
                Reply::Stall(d) => thread::sleep(d),
            }
        }
    });
    Server { url, requests }
}

fn backend(url: &str, retries: u32) -> LiveBackend {
    LiveBackend::new(LiveConfig {
        endpoint: url.to_string(),
        api_key: Some("test-key".into()),
        max_retries: retries,
        backoff_base_ms: 1,
        backoff_max_ms: 5,
        ..LiveConfig::default()
    })
}

fn request() -> ChatRequest {
    ChatRequest {
        call_id: 7,
        kind: RequestKind::Interest {
            prompt: "extract the object".into(),
            command: "find the nearest bench".into(),
        },
    }
}

const OK_BODY: &str = r#"{"choices":[{"message":{"role":"assistant","content":"{\"add\": \"bench\"}"}}],"usage":{"prompt_tokens":40,"completion_tokens":6}}"#;

#[test]
fn success_reports_usage_and_sends_credentials() {
    let server = serve(vec![Reply::Status(200, OK_BODY)]);
    let gw = Gateway::new(Arc::new(backend(&server.url, 0)));
    let (text, usage) = gw
        .complete(
            RequestKind::Interest {
                prompt: "extract".into(),
                command: "find bench".into(),
            },
            2000,
        )
        .unwrap();
    assert_eq!(text, r#"{"add": "bench"}"#);
    assert_eq!((usage.prompt_tokens, usage.completion_tokens, usage.total_tokens), (40, 6, 46));
    let reqs = server.requests.lock().unwrap();
    assert_eq!(reqs.len(), 1);
    let auth = if std::env::var_os(navwatch::gateway::API_KEY_ENV).is_some() {
        "authorization: bearer "
    } else {
        "authorization: bearer test-key"
    };
    assert!(reqs[0].to_ascii_lowercase().contains(auth));
    assert!(reqs[0].contains("\"model\":\"gpt-3.5-turbo\""));
}

#[test]
fn unreachable_endpoint_is_transport_after_retries() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let b = backend(&format!("http://127.0.0.1:{port}/v1/chat/completions"), 2);
    match b.chat(&request(), Duration::from_secs(2)) {
        Err(GatewayError::Transport { call_id, attempts, .. }) => {
            assert_eq!(call_id, 7);
            assert_eq!(attempts, 3);
        }
        other => panic!("expected transport error, got {other:?}"),
    }
}

#[test]
fn unauthorized_is_not_retried() {
    let server = serve(vec![Reply::Status(401, r#"{"error":"bad key"}"#)]);
    let b = backend(&server.url, 3);
    assert_eq!(b.chat(&request(), Duration::from_secs(2)), Err(GatewayError::Auth { call_id: 7, status: 401 }));
    assert_eq!(server.requests.lock().unwrap().len(), 1);
}

#[test]
fn server_errors_are_retried_then_succeed() {
    let server = serve(vec![Reply::Status(503, "{}"), Reply::Status(429, "{}"), Reply::Status(200, OK_BODY)]);
    let b = backend(&server.url, 3);
    let reply = b.chat(&request(), Duration::from_secs(2)).unwrap();
    assert_eq!(reply.completion_tokens, Some(6));
    assert_eq!(server.requests.lock().unwrap().len(), 3);
}

#[test]
fn client_errors_and_bad_payloads() {
    let server = serve(vec![Reply::Status(400, r#"{"error":"context too long"}"#)]);
    let b = backend(&server.url, 3);
    assert!(matches!(b.chat(&request(), Duration::from_secs(2)), Err(GatewayError::Rejected { status: 400, .. })));

    let server = serve(vec![Reply::Status(200, r#"{"choices":[]}"#)]);
    let b = backend(&server.url, 3);
    assert!(matches!(b.chat(&request(), Duration::from_secs(2)), Err(GatewayError::Protocol { call_id: 7, .. })));
}

#[test]
fn slow_server_times_out() {
    let server = serve(vec![Reply::Stall(Duration::from_secs(3))]);
    let b = backend(&server.url, 3);
    let started = std::time::Instant::now();
    assert_eq!(
        b.chat(&request(), Duration::from_millis(300)),
        Err(GatewayError::Timeout { call_id: 7, timeout_ms: 300 })
    );
    assert!(started.elapsed() < Duration::from_secs(2));
}
