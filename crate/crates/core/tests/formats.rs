mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use common::*;
use proptest::prelude::*;
use zsmace::io::{read_embeddings, read_predictions, write_embeddings, write_predictions};
use zsmace::service::{fetch_embeddings, text_digest};
use zsmace::{validate_matrix, EmbeddingSet, Error, PredictionMatrix};

fn valid_matrix() -> impl Strategy<Value = (PredictionMatrix, usize)> {
    (1usize..15, 1usize..6, 2usize..5).prop_flat_map(|(items, annotators, k)| {
        (
            prop::collection::vec(prop::collection::vec(prop::option::weighted(0.7, 0..k), annotators), items),
            Just(k),
        )
            .prop_map(|(mut rows, k)| {
                for row in rows.iter_mut() {
                    if row.iter().all(Option::is_none) {
                        row[0] = Some(0);
                    }
                }
                for j in 0..rows[0].len() {
                    if rows.iter().all(|r| r[j].is_none()) {
                        rows[0][j] = Some(k - 1);
                    }
                }
                (matrix(rows), k)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn predictions_round_trip((m, k) in valid_matrix()) {
        let space = space(k);
        prop_assert!(validate_matrix(&m, &space).is_ok());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        write_predictions(&path, &m, &space).unwrap();
        prop_assert_eq!(read_predictions(&path, &space).unwrap(), m);
    }

    #[test]
    fn embeddings_round_trip_bit_exactly(
        vectors in (1usize..6, 1usize..8).prop_flat_map(|(n, d)| prop::collection::vec(
            prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, d), n))
    ) {
        let ids = (0..vectors.len()).map(|i| format!("e{i} \"quoted\"")).collect();
        let set = EmbeddingSet::new(ids, vectors).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.jsonl");
        write_embeddings(&path, &set).unwrap();
        let back = read_embeddings(&path).unwrap();
        prop_assert_eq!(back.ids(), set.ids());
        for (a, b) in back.vectors().iter().zip(set.vectors()) {
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(a), bits(b));
        }
    }
}

/// Minimal HTTP server answering `/embed` with `[len(text), index]` vectors.
struct MockService {
    url: String,
    requests: Arc<AtomicUsize>,
    bodies: Arc<Mutex<Vec<serde_json::Value>>>,
}

fn mock_service(malformed: bool) -> MockService {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let requests = Arc::new(AtomicUsize::new(0));
    let bodies = Arc::new(Mutex::new(Vec::new()));
    let (count, seen) = (requests.clone(), bodies.clone());
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
            }
            let mut body = vec![0; length];
            reader.read_exact(&mut body).unwrap();
            count.fetch_add(1, Ordering::SeqCst);
            assert!(request_line.starts_with("POST /embed "), "{request_line}");
            let json: serde_json::Value = serde_json::from_slice(&body).unwrap();
            let texts: Vec<String> = serde_json::from_value(json["texts"].clone()).unwrap();
            seen.lock().unwrap().push(json);
            let response = if malformed {
                "{\"embeddings\": []}".to_string()
            } else {
                let vectors: Vec<[f64; 2]> = texts
                    .iter()
                    .enumerate()
                    .map(|(i, t)| [t.len() as f64, i as f64 + 0.5])
                    .collect();
                serde_json::json!({ "vectors": vectors }).to_string()
            };
            write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                response.len(),
                response
            )
            .unwrap();
        }
    });
    MockService { url, requests, bodies }
}

#[test]
fn fetch_matches_mock_and_caches() {
    let service = mock_service(false);
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache").join("embeddings.jsonl");
    let texts = ["great", "terrible", "great"];

    let set = fetch_embeddings(&service.url, &texts, Some(&cache)).unwrap();
    assert_eq!(set.ids(), &["great", "terrible"]);
    assert_eq!(set.get("great"), Some(&[5.0, 0.5][..]));
    assert_eq!(set.get("terrible"), Some(&[8.0, 1.5][..]));
    assert_eq!(service.requests.load(Ordering::SeqCst), 1);
    assert_eq!(service.bodies.lock().unwrap()[0], serde_json::json!({ "texts": ["great", "terrible"] }));

    let cached = read_embeddings(&cache).unwrap();
    assert!(cached.get(&text_digest("great")).is_some());

    let again = fetch_embeddings(&service.url, &texts, Some(&cache)).unwrap();
    assert_eq!(again, set);
    assert_eq!(service.requests.load(Ordering::SeqCst), 1, "second call must be served from cache");

    // Only unseen texts go over the wire.
    let more = fetch_embeddings(&service.url, &["terrible", "awful"], Some(&cache)).unwrap();
    assert_eq!(more.get("awful"), Some(&[5.0, 0.5][..]));
    assert_eq!(service.requests.load(Ordering::SeqCst), 2);
    assert_eq!(service.bodies.lock().unwrap()[1], serde_json::json!({ "texts": ["awful"] }));
}

#[test]
fn malformed_response_is_a_service_error() {
    let service = mock_service(true);
    let err = fetch_embeddings(&service.url, &["x"], None).unwrap_err();
    assert!(matches!(err, Error::EmbeddingService(_)), "{err}");
}
