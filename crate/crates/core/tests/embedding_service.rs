//! The HTTP embedding client against a local stand-in server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use serde_json::{json, Value};

use newsbench::error::Error;
use newsbench::features::{
    embed_texts, load_or_embed, EmbeddingProvider, EmbeddingService, ServiceConfig,
};

/// Serves `POST` requests with `respond(texts)` until the process exits.
/// Returns the URL and a request counter.
fn serve(respond: fn(&[String]) -> Value) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/embed", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = Arc::clone(&hits);
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap_or(0);
                }
            }
            let mut body = vec![0; length];
            if reader.read_exact(&mut body).is_err() {
                continue;
            }
            counter.fetch_add(1, Ordering::SeqCst);
            let req: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
            let texts: Vec<String> = req["texts"]
                .as_array()
                .map(|a| a.iter().filter_map(|t| t.as_str().map(String::from)).collect())
                .unwrap_or_default();
            let out = respond(&texts).to_string();
            let _ = write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{out}",
                out.len()
            );
        }
    });
    (url, hits)
}

fn by_length(texts: &[String]) -> Value {
    let vectors: Vec<Vec<f64>> = texts
        .iter()
        .map(|t| vec![t.chars().count() as f64, 1.0, -0.5])
        .collect();
    json!({ "vectors": vectors })
}

fn short_by_one(texts: &[String]) -> Value {
    let vectors: Vec<Vec<f64>> = texts.iter().skip(1).map(|_| vec![0.0, 0.0, 0.0]).collect();
    json!({ "vectors": vectors })
}

fn service(url: String, batch_size: usize) -> EmbeddingService {
    EmbeddingService::new(ServiceConfig {
        url,
        batch_size,
        timeout_secs: 10,
    })
    .unwrap()
}

fn pairs() -> Vec<(String, String)> {
    vec![
        ("a".into(), "one".into()),
        ("b".into(), "three".into()),
        ("a".into(), "one".into()),
        ("c".into(), "seventeen".into()),
        ("d".into(), "x".into()),
    ]
}

#[test]
fn batches_requests_and_deduplicates_keys() {
    let (url, hits) = serve(by_length);
    let svc = service(url, 2);
    let store = embed_texts(&pairs(), &svc).unwrap();
    assert_eq!(store.dim(), 3);
    assert_eq!(store.len(), 4);
    assert_eq!(store.get("c").unwrap(), &[9.0, 1.0, -0.5]);
    // Four unique texts in batches of two.
    assert_eq!(hits.load(Ordering::SeqCst), 2);
}

#[test]
fn cache_is_reused_once_complete() {
    let (url, hits) = serve(by_length);
    let svc = service(url, 8);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cache.emb");
    let first = load_or_embed(&path, &pairs(), &svc).unwrap();
    assert_eq!(hits.load(Ordering::SeqCst), 1);
    let second = load_or_embed(&path, &pairs(), &svc).unwrap();
    assert_eq!(first, second);
    assert_eq!(hits.load(Ordering::SeqCst), 1);

    let mut more = pairs();
    more.push(("e".into(), "fresh".into()));
    let third = load_or_embed(&path, &more, &svc).unwrap();
    assert_eq!(third.len(), 5);
    assert_eq!(hits.load(Ordering::SeqCst), 2);
}

#[test]
fn wrong_vector_count_is_a_service_error() {
    let (url, _) = serve(short_by_one);
    let err = service(url, 4).embed(&["p".into(), "q".into()]).unwrap_err();
    assert!(matches!(err, Error::Service(_)), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn unreachable_endpoint_is_a_service_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let err = service(format!("http://127.0.0.1:{port}/embed"), 4)
        .embed(&["p".into()])
        .unwrap_err();
    assert!(matches!(err, Error::Service(_)), "{err}");
}

#[test]
fn zero_batch_size_is_a_config_error() {
    let err = EmbeddingService::new(ServiceConfig {
        url: "http://127.0.0.1:1/".into(),
        batch_size: 0,
        timeout_secs: 1,
    })
    .err()
    .unwrap();
    assert!(matches!(err, Error::Config(_)));
}
