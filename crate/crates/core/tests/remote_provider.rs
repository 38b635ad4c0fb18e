use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use groundqa::llm::*;
use serde_json::{json, Value};

struct Reply {
    status: u16,
    body: String,
    delay_ms: u64,
}

fn ok(content: &str, finish: &str) -> Reply {
    Reply {
        status: 200,
        body: json!({"choices": [{"message": {"role": "assistant", "content": content}, "finish_reason": finish}]}).to_string(),
        delay_ms: 0,
    }
}

fn status(code: u16) -> Reply {
    Reply {
        status: code,
        body: "{}".into(),
        delay_ms: 0,
    }
}

type Captured = Arc<Mutex<Vec<(String, Value)>>>;

/// One-connection-per-reply HTTP stub. Returns the base URL and the captured
/// `(headers, body)` of each request.
fn stub(replies: Vec<Reply>) -> (String, Captured) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for reply in replies {
            let Ok((stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut headers = String::new();
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                headers.push_str(&line);
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            log.lock().unwrap().push((headers, serde_json::from_slice(&body).unwrap_or(Value::Null)));
            thread::sleep(Duration::from_millis(reply.delay_ms));
            let mut stream = stream;
            let _ = write!(
                stream,
                "HTTP/1.1 {} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                reply.status,
                reply.body.len(),
                reply.body
            );
        }
    });
    (url, seen)
}

fn provider(url: &str, frequency: bool, timeout_ms: u64) -> RemoteChatProvider {
    RemoteChatProvider::new(RemoteConfig {
        id: "stub".into(),
        base_url: url.into(),
        model: "test-model".into(),
        api_key_env: "GROUNDQA_TEST_REMOTE_KEY".into(),
        timeout_ms,
        supports_frequency_penalty: frequency,
    })
}

fn transcript() -> ChatTranscript {
    ChatTranscript::prompt("reader", "Question: where is the spare wheel?".into())
}

#[test]
fn request_carries_preset_and_parses_reply() {
    std::env::set_var("GROUNDQA_TEST_REMOTE_KEY", "sk-test");
    let (url, seen) = stub(vec![ok("Under the boot floor.", "stop"), ok("cut", "length")]);
    let p = provider(&url, true, 5_000);
    let params = preset(PresetKind::Generator);
    let r = complete(&p, &transcript(), &params, &RetryPolicy::no_delay()).unwrap();
    assert_eq!(r.text, "Under the boot floor.");
    assert_eq!(r.finish_reason, FinishReason::Stop);
    assert_eq!(r.provider_id, "stub");

    let (headers, body) = seen.lock().unwrap()[0].clone();
    assert!(headers.starts_with("POST /v1/chat/completions"));
    assert!(headers.to_ascii_lowercase().contains("authorization: bearer sk-test"));
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["messages"][0]["role"], "user");
    assert_eq!(body["messages"][0]["content"], "Question: where is the spare wheel?");
    assert_eq!(body["temperature"], params.temperature);
    assert_eq!(body["top_p"], params.top_p);
    assert_eq!(body["presence_penalty"], params.presence_penalty);
    assert_eq!(body["max_tokens"], params.max_tokens);
    assert_eq!(body["frequency_penalty"], 0.0);

    let r = complete(&p, &transcript(), &preset(PresetKind::Reader), &RetryPolicy::no_delay()).unwrap();
    assert_eq!(r.finish_reason, FinishReason::Length);
}

#[test]
fn frequency_penalty_is_omitted_when_unsupported() {
    let p = provider("http://127.0.0.1:9/v1", false, 1_000);
    let body = p.request_body(&transcript(), &preset(PresetKind::Generator));
    assert!(body.get("frequency_penalty").is_none());
}

#[test]
fn server_errors_are_retried_and_client_errors_are_not() {
    let (url, seen) = stub(vec![status(503), status(500), ok("fine", "stop")]);
    let p = provider(&url, false, 5_000);
    let r = complete(&p, &transcript(), &preset(PresetKind::Reader), &RetryPolicy::no_delay()).unwrap();
    assert_eq!(r.text, "fine");
    assert_eq!(seen.lock().unwrap().len(), 3);

    let (url, seen) = stub(vec![status(400), ok("never", "stop")]);
    let p = provider(&url, false, 5_000);
    let err = complete(&p, &transcript(), &preset(PresetKind::Reader), &RetryPolicy::no_delay()).unwrap_err();
    assert!(matches!(err, ProviderError::Transport { retryable: false, attempts: 1, .. }), "{err:?}");
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn retries_are_bounded() {
    let (url, seen) = stub((0..6).map(|_| status(502)).collect());
    let p = provider(&url, false, 5_000);
    let policy = RetryPolicy {
        max_retries: 2,
        base_backoff_ms: 0,
    };
    let err = complete(&p, &transcript(), &preset(PresetKind::Reader), &policy).unwrap_err();
    assert!(matches!(err, ProviderError::Transport { attempts: 3, .. }), "{err:?}");
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn slow_endpoint_times_out() {
    let slow = Reply {
        delay_ms: 1_500,
        ..ok("late", "stop")
    };
    let (url, _) = stub(vec![slow]);
    let p = provider(&url, false, 200);
    let policy = RetryPolicy {
        max_retries: 0,
        base_backoff_ms: 0,
    };
    let err = complete(&p, &transcript(), &preset(PresetKind::Reader), &policy).unwrap_err();
    assert!(err.is_retryable());
    assert!(matches!(err, ProviderError::Timeout { attempts: 1 } | ProviderError::Transport { attempts: 1, .. }), "{err:?}");
}

#[test]
fn refusal_and_empty_content_are_not_usable() {
    let refusal = Reply {
        status: 200,
        body: json!({"choices": [{"message": {"content": null, "refusal": "no"}, "finish_reason": "stop"}]}).to_string(),
        delay_ms: 0,
    };
    let (url, _) = stub(vec![refusal, ok("   ", "stop")]);
    let p = provider(&url, false, 5_000);
    let r = complete(&p, &transcript(), &preset(PresetKind::Reader), &RetryPolicy::no_delay()).unwrap();
    assert_eq!(r.finish_reason, FinishReason::Filtered);
    assert!(r.usable_text().is_none());
    let r = complete(&p, &transcript(), &preset(PresetKind::Reader), &RetryPolicy::no_delay()).unwrap();
    assert_eq!(r.finish_reason, FinishReason::Error);
    assert!(r.usable_text().is_none());
}

#[test]
fn invalid_params_never_reach_the_network() {
    let p = provider("http://127.0.0.1:9/v1", false, 1_000);
    let mut params = preset(PresetKind::Reader);
    params.top_p = 1.5;
    assert!(matches!(
        complete(&p, &transcript(), &params, &RetryPolicy::no_delay()),
        Err(ProviderError::InvalidParams(_))
    ));
}
