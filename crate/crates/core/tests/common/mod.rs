#![allow(dead_code)]

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use bioaug::corpus::{load_dataset, Dataset, DatasetFormat, NotionTable, Task};
use bioaug::reflection::{vars, PromptId, PromptVars};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name)
}

pub fn re10() -> Dataset {
    load_dataset(fixture("re10.jsonl"), DatasetFormat::CanonicalJsonl).unwrap()
}

pub fn mixed() -> Dataset {
    load_dataset(fixture("mixed.jsonl"), DatasetFormat::CanonicalJsonl).unwrap()
}

pub fn notions() -> NotionTable {
    NotionTable::load(fixture("notions.tsv")).unwrap()
}

pub fn wire_case(name: &str) -> serde_json::Value {
    let text = fs::read_to_string(golden_path(&format!("wire/{name}.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

/// A request seen by [`serve`].
#[derive(Debug, Clone)]
pub struct Seen {
    pub method: String,
    pub path: String,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

/// Answers `replies.len()` connections in order with `(status, body)` and
/// records each request.
pub fn serve(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    std::thread::spawn(move || {
        for (status, body) in replies {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let mut parts = request_line.split_whitespace();
            let method = parts.next().unwrap_or_default().to_string();
            let path = parts.next().unwrap_or_default().to_string();
            let mut headers = Vec::new();
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some((k, v)) = line.split_once(':') {
                    let (k, v) = (k.trim().to_ascii_lowercase(), v.trim().to_string());
                    if k == "content-length" {
                        len = v.parse().unwrap();
                    }
                    headers.push((k, v));
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(Seen {
                method,
                path,
                headers,
                body: String::from_utf8(buf).unwrap(),
            });
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
        }
    });
    (format!("http://{addr}"), seen)
}

pub const TOPIC: &str = "whether the augmented sentence keeps the facts of the original";
const GRADE_FORMAT: &str = "GRADE: <integer from 0 to 100>";
const PASSAGE: &str = "aspirin reduces fever in adults";

/// The variables each golden file was written with.
pub fn golden_cases() -> Vec<(PromptId, PromptVars)> {
    vec![
        (
            PromptId::DebateInitial,
            vars([("topic", TOPIC), ("answer_format", GRADE_FORMAT)]),
        ),
        (
            PromptId::DebateReview,
            vars([
                ("topic", TOPIC),
                ("initial_statement", "aspirin lowers fever"),
                ("answer_format", GRADE_FORMAT),
            ]),
        ),
        (
            PromptId::DebateRevision,
            vars([
                ("reviews", "agent-2: the verb changed"),
                ("answer_format", "REVISED: <sentence>"),
            ]),
        ),
        (
            PromptId::TaskAnswer(Task::Ner),
            vars([("sentence", PASSAGE)]),
        ),
        (
            PromptId::TaskAnswer(Task::Re),
            vars([("sentence", PASSAGE)]),
        ),
        (
            PromptId::TaskAnswer(Task::Tc),
            vars([
                ("categories", "proliferation, apoptosis"),
                ("sentence", "tumor cells evade apoptosis"),
            ]),
        ),
        (
            PromptId::TaskAnswer(Task::Qa),
            vars([
                ("passage", PASSAGE),
                ("question", "Does aspirin reduce fever?"),
            ]),
        ),
        (
            PromptId::Distinguish,
            vars([
                ("original", "aspirin reduces fever"),
                ("augmented", "aspirin lowers fever"),
            ]),
        ),
    ]
}
