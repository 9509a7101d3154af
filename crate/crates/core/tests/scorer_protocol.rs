//! Drives the external scorer against in-process mock servers.

use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

use oracle_forge::candidates::{Candidate, Provenance};
use oracle_forge::oracles::{AssertionForm, TestPrefix};
use oracle_forge::ranking::{
    decode_response, Endpoint, ExternalScorer, FallbackScorer, HeuristicScorer, ScoreRequest, Scorer, ScorerError,
    Task,
};
use oracle_forge::testlang::{parse_signature, UnitContext};

type Handler = dyn Fn(&[Value]) -> Vec<String> + Send + Sync;

#[derive(Default)]
struct Log {
    requests: Vec<Value>,
    batch_sizes: Vec<usize>,
    connections: usize,
}

/// Accepts connections one after another. Requests are gathered until the
/// client goes quiet, then the handler answers the whole batch.
fn serve(handler: Box<Handler>) -> (String, Arc<Mutex<Log>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let log = Arc::new(Mutex::new(Log::default()));
    let l = log.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { return };
            l.lock().unwrap().connections += 1;
            if handle(stream, &*handler, &l).is_err() {
                continue;
            }
        }
    });
    (addr, log)
}

fn handle(stream: TcpStream, handler: &Handler, log: &Mutex<Log>) -> std::io::Result<()> {
    stream.set_read_timeout(Some(Duration::from_millis(150)))?;
    let mut out = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    let mut batch = Vec::new();
    loop {
        let mut line = String::new();
        match reader.read_line(&mut line) {
            Ok(0) => return Ok(()),
            Ok(_) => batch.push(serde_json::from_str::<Value>(&line).unwrap()),
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                if batch.is_empty() {
                    continue;
                }
                let replies = handler(&batch);
                {
                    let mut g = log.lock().unwrap();
                    g.batch_sizes.push(batch.len());
                    g.requests.append(&mut batch);
                }
                for r in replies {
                    out.write_all(r.as_bytes())?;
                    out.write_all(b"\n")?;
                }
                out.flush()?;
            }
            Err(e) => return Err(e),
        }
    }
}

fn id(v: &Value) -> u64 {
    v["id"].as_u64().unwrap()
}

struct Fixture {
    prefix: TestPrefix,
    context: UnitContext,
    candidates: Vec<Candidate>,
}

fn fixture() -> Fixture {
    let mut context = parse_signature("public int compute(int n) throws java.io.IOException").unwrap();
    context.docstring = "Computes. @throws IOException on failure".into();
    Fixture {
        prefix: TestPrefix::parse("Widget w = new Widget();\nint r = w.compute(3);").unwrap(),
        context,
        candidates: ["assertEquals(0, r)", "assertEquals(1, r)", "assertEquals(3, r)", "assertEquals(-1, r)", "assertEquals(2, r)", "assertEquals(7, r)"]
            .iter()
            .map(|t| Candidate { form: AssertionForm::parse(t).unwrap(), provenance: Provenance::Global, global_rank: Some(0) })
            .collect(),
    }
}

impl Fixture {
    fn assertion_requests(&self) -> Vec<ScoreRequest<'_>> {
        self.candidates
            .iter()
            .map(|c| ScoreRequest { task: Task::Assertion, prefix: &self.prefix, context: &self.context, candidate: Some(c) })
            .collect()
    }

    fn exception_request(&self) -> ScoreRequest<'_> {
        ScoreRequest { task: Task::Exception, prefix: &self.prefix, context: &self.context, candidate: None }
    }
}

fn tcp(addr: &str, timeout_ms: u64, max_in_flight: usize) -> ExternalScorer {
    ExternalScorer::new(Endpoint::Tcp(addr.to_string()), Duration::from_millis(timeout_ms), max_in_flight)
}

/// Score derived from the candidate's expected value so answers can be matched to requests.
fn score_for(v: &Value) -> f64 {
    let c = v["candidate"].as_str().unwrap();
    let n: f64 = c["assertEquals(".len()..c.find(',').unwrap()].parse().unwrap();
    (n + 1.0) / 10.0
}

#[test]
fn out_of_order_replies_are_routed_by_id() {
    let (addr, log) = serve(Box::new(|batch| {
        batch.iter().rev().map(|r| json!({"id": id(r), "score": score_for(r)}).to_string()).collect()
    }));
    let f = fixture();
    let scores = tcp(&addr, 5000, 64).score_batch(&f.assertion_requests()).unwrap();
    let got: Vec<f64> = scores.iter().map(|s| s.value()).collect();
    assert_eq!(got, vec![0.1, 0.2, 0.4, 0.0, 0.3, 0.8]);
    assert_eq!(log.lock().unwrap().batch_sizes, vec![6]);
}

#[test]
fn in_flight_requests_never_exceed_the_limit() {
    let (addr, log) = serve(Box::new(|batch| {
        batch.iter().rev().map(|r| json!({"id": id(r), "score": score_for(r)}).to_string()).collect()
    }));
    let f = fixture();
    let scores = tcp(&addr, 5000, 2).score_batch(&f.assertion_requests()).unwrap();
    assert_eq!(scores.len(), 6);
    let sizes = log.lock().unwrap().batch_sizes.clone();
    assert_eq!(sizes.iter().sum::<usize>(), 6);
    assert!(sizes.iter().all(|n| *n <= 2), "{sizes:?}");
    assert!(sizes.contains(&2), "requests were not pipelined: {sizes:?}");
}

#[test]
fn request_frames_carry_protocol_fields() {
    let (addr, log) = serve(Box::new(|batch| batch.iter().map(|r| json!({"id": id(r), "score": 0.5}).to_string()).collect()));
    let f = fixture();
    let s = tcp(&addr, 5000, 8);
    s.score_batch(&[f.exception_request()]).unwrap();
    s.score_batch(&f.assertion_requests()[..1]).unwrap();
    let g = log.lock().unwrap();
    let (ex, asrt) = (&g.requests[0], &g.requests[1]);
    assert_eq!(ex["v"], 1);
    assert_eq!(ex["task"], "exception");
    assert!(ex.get("candidate").is_none());
    assert_eq!(ex["prefix"], f.prefix.text());
    assert_eq!(ex["signature"], f.context.signature_text());
    assert_eq!(ex["docstring"], "Computes. @throws IOException on failure");
    assert_eq!(asrt["task"], "assertion");
    assert_eq!(asrt["candidate"], "assertEquals(0, r)");
    assert_ne!(id(ex), id(asrt));
    // one connection serves both calls
    assert_eq!(g.connections, 1);
}

#[test]
fn error_frames_surface_as_remote_errors() {
    let (addr, _) = serve(Box::new(|batch| {
        batch.iter().map(|r| json!({"id": id(r), "error": "model not loaded"}).to_string()).collect()
    }));
    let f = fixture();
    let err = tcp(&addr, 5000, 8).score_batch(&[f.exception_request()]).unwrap_err();
    assert_eq!(err, ScorerError::Remote("model not loaded".into()));
}

#[test]
fn scores_outside_the_unit_interval_are_protocol_errors() {
    let (addr, _) = serve(Box::new(|batch| batch.iter().map(|r| json!({"id": id(r), "score": 1.5}).to_string()).collect()));
    let f = fixture();
    let err = tcp(&addr, 5000, 8).score_batch(&[f.exception_request()]).unwrap_err();
    assert!(matches!(err, ScorerError::Protocol(_)), "{err:?}");
}

#[test]
fn silence_times_out_as_unavailable() {
    let (addr, _) = serve(Box::new(|_| Vec::new()));
    let f = fixture();
    let err = tcp(&addr, 300, 8).score_batch(&[f.exception_request()]).unwrap_err();
    assert!(matches!(err, ScorerError::Unavailable(_)), "{err:?}");
}

fn dead_address() -> String {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    l.local_addr().unwrap().to_string()
}

#[test]
fn unreachable_server_is_unavailable_and_fallback_takes_over() {
    let f = fixture();
    let reqs = f.assertion_requests();
    let err = tcp(&dead_address(), 1000, 8).score_batch(&reqs).unwrap_err();
    assert!(matches!(err, ScorerError::Unavailable(_)), "{err:?}");

    let fb = FallbackScorer { primary: tcp(&dead_address(), 1000, 8), fallback: HeuristicScorer::default() };
    assert_eq!(fb.score_batch(&reqs).unwrap(), HeuristicScorer::default().score_batch(&reqs).unwrap());
}

#[test]
fn fallback_does_not_mask_protocol_errors() {
    let (addr, _) = serve(Box::new(|batch| batch.iter().map(|r| json!({"id": id(r), "score": -0.1}).to_string()).collect()));
    let f = fixture();
    let fb = FallbackScorer { primary: tcp(&addr, 5000, 8), fallback: HeuristicScorer::default() };
    assert!(matches!(fb.score_batch(&[f.exception_request()]), Err(ScorerError::Protocol(_))));
}

#[test]
fn reconnects_after_the_server_hangs_up() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    thread::spawn(move || {
        for stream in listener.incoming().take(2) {
            let stream = stream.unwrap();
            let mut out = stream.try_clone().unwrap();
            let mut line = String::new();
            BufReader::new(stream).read_line(&mut line).unwrap();
            let v: Value = serde_json::from_str(&line).unwrap();
            writeln!(out, "{}", json!({"id": id(&v), "score": 0.75})).unwrap();
            // dropping both halves closes the connection
        }
    });
    let f = fixture();
    let s = tcp(&addr, 5000, 8);
    assert_eq!(s.score_batch(&[f.exception_request()]).unwrap()[0].value(), 0.75);
    thread::sleep(Duration::from_millis(100));
    assert_eq!(s.score_batch(&[f.exception_request()]).unwrap()[0].value(), 0.75);
}

#[test]
fn exec_transport_speaks_over_stdio() {
    let cmd = r#"sed -u 's/.*"id":\([0-9]*\).*/{"id":\1,"score":0.25}/'"#;
    let s = ExternalScorer::new(Endpoint::Exec(cmd.into()), Duration::from_secs(5), 4);
    let f = fixture();
    let scores = s.score_batch(&f.assertion_requests()).unwrap();
    assert!(scores.iter().all(|x| x.value() == 0.25));
}

#[test]
fn exec_child_that_exits_is_unavailable() {
    let s = ExternalScorer::new(Endpoint::Exec("exit 0".into()), Duration::from_secs(2), 4);
    let f = fixture();
    let err = s.score_batch(&[f.exception_request()]).unwrap_err();
    assert!(matches!(err, ScorerError::Unavailable(_)), "{err:?}");
}

#[test]
fn response_decoding() {
    assert!(decode_response("not json").is_none());
    assert!(decode_response(r#"{"score":0.3}"#).is_none());
    let (i, r) = decode_response(r#"{"id":7,"score":0.3}"#).unwrap();
    assert_eq!((i, r.unwrap().value()), (7, 0.3));
    assert!(matches!(decode_response(r#"{"id":7}"#).unwrap().1, Err(ScorerError::Protocol(_))));
    assert!(matches!(decode_response(r#"{"id":7,"error":{"code":3}}"#).unwrap().1, Err(ScorerError::Remote(_))));
}

#[test]
fn endpoint_syntax() {
    assert_eq!(Endpoint::parse("tcp://127.0.0.1:9000").unwrap(), Endpoint::Tcp("127.0.0.1:9000".into()));
    assert_eq!(Endpoint::parse("exec:python3 s.py").unwrap(), Endpoint::Exec("python3 s.py".into()));
    for bad in ["tcp://", "exec:  ", "http://x", "heuristic"] {
        assert!(Endpoint::parse(bad).is_err(), "{bad}");
    }
}
