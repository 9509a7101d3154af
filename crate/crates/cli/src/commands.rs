use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, Context};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use oracle_forge::candidates::{build_global_constant_table, GlobalConstantTable};
use oracle_forge::datasets::{
    assertion_samples, exception_sample, ground_truth_assertions, strip_implementation, BuildReport, DropReason,
    RawSample,
};
use oracle_forge::evalharness::{aggregate, grammar_coverage, k_ablation, k_ablation_table, ExecutionRecord};
use oracle_forge::oracles::{strip_oracles, Stripped, TestPrefix};
use oracle_forge::ranking::{infer_oracle, Scorer, ScorerError};
use oracle_forge::testlang::{parse_method_signature, parse_test_method, UnitContext};

use crate::config::RunConfig;
use crate::{Command, DatasetKind};

/// Lines processed per parallel batch; output order always follows input order.
const BATCH: usize = 512;

pub enum CliError {
    Usage(String),
    Fatal(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Fatal(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Fatal(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Fatal(e)
    }
}

type Result<T, E = CliError> = std::result::Result<T, E>;

pub fn run(cmd: Command, cfg: &RunConfig) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| CliError::Fatal(anyhow!("cannot start worker pool: {e}")))?;
    pool.install(|| match cmd {
        Command::Parse { input, output } => cmd_parse(&input, output.as_deref(), cfg),
        Command::Dataset { kind, input, output, vocab, keep_oov, report } => {
            cmd_dataset(kind, &input, output.as_deref(), vocab.as_deref(), keep_oov, report.as_deref(), cfg)
        }
        Command::Vocab { input, output } => cmd_vocab(&input, output.as_deref(), cfg),
        Command::Infer { input, output, vocab } => cmd_infer(&input, output.as_deref(), vocab.as_deref(), cfg),
        Command::Eval { records, output } => cmd_eval(&records, output.as_deref(), cfg),
        Command::Coverage { input, output } => cmd_coverage(&input, output.as_deref()),
        Command::Ablate { input, vocab_corpus, ks, output } => {
            cmd_ablate(&input, vocab_corpus.as_deref(), &ks, output.as_deref(), cfg)
        }
    })
}

fn open_input(path: &Path) -> anyhow::Result<Box<dyn BufRead>> {
    if path == Path::new("-") {
        return Ok(Box::new(BufReader::new(io::stdin())));
    }
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(Box::new(BufReader::new(f)))
}

fn open_output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    match path {
        None => Ok(Box::new(BufWriter::new(io::stdout()))),
        Some(p) if p == Path::new("-") => Ok(Box::new(BufWriter::new(io::stdout()))),
        Some(p) => {
            let f = File::create(p).with_context(|| format!("cannot create {}", p.display()))?;
            Ok(Box::new(BufWriter::new(f)))
        }
    }
}

fn write_json(w: &mut dyn Write, v: &impl Serialize) -> anyhow::Result<()> {
    serde_json::to_writer(&mut *w, v)?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Reads non-blank lines in batches, maps each batch in parallel with its
/// 0-based record index and hands results to `sink` in input order.
fn stream<T: Send>(
    input: &Path,
    map: impl Fn(u64, &str) -> T + Sync,
    mut sink: impl FnMut(u64, T) -> Result<()>,
) -> Result<u64> {
    let reader = open_input(input)?;
    let mut lines = reader.lines();
    let mut next_index = 0u64;
    loop {
        let mut batch = Vec::with_capacity(BATCH);
        for line in lines.by_ref() {
            let line = line.with_context(|| format!("cannot read {}", input.display()))?;
            if line.trim().is_empty() {
                continue;
            }
            batch.push(line);
            if batch.len() == BATCH {
                break;
            }
        }
        if batch.is_empty() {
            return Ok(next_index);
        }
        let base = next_index;
        let results: Vec<T> = batch.par_iter().enumerate().map(|(i, l)| map(base + i as u64, l)).collect();
        for (i, r) in results.into_iter().enumerate() {
            sink(base + i as u64, r)?;
        }
        next_index += batch.len() as u64;
    }
}

fn record_error(cfg: &RunConfig, line: u64, msg: &str) -> Result<()> {
    if cfg.strict {
        return Err(CliError::Fatal(anyhow!("record {line}: {msg}")));
    }
    log::warn!("record {line}: {msg}");
    Ok(())
}

/// The test source of a record: a JSON string, or an object with `test`.
fn test_source(line: &str) -> Result<String, String> {
    match serde_json::from_str::<Value>(line).map_err(|e| format!("bad JSON: {e}"))? {
        Value::String(s) => Ok(s),
        Value::Object(m) => match m.get("test") {
            Some(Value::String(s)) => Ok(s.clone()),
            _ => Err("record has no string field `test`".into()),
        },
        _ => Err("record is neither a string nor an object".into()),
    }
}

fn cmd_parse(input: &Path, output: Option<&Path>, cfg: &RunConfig) -> Result<()> {
    let mut out = open_output(output)?;
    stream(
        input,
        |_, line| test_source(line).and_then(|src| parse_test_method(&src).map_err(|e| e.to_string())),
        |idx, r| {
            match r {
                Ok(ast) => write_json(&mut out, &json!({"line": idx, "ast": ast}))?,
                Err(msg) => {
                    write_json(&mut out, &json!({"line": idx, "error": msg}))?;
                    record_error(cfg, idx, &msg)?;
                }
            }
            Ok(())
        },
    )?;
    out.flush().context("write failed")?;
    Ok(())
}

fn load_vocab(path: &Path) -> anyhow::Result<GlobalConstantTable> {
    let reader = open_input(path)?;
    GlobalConstantTable::read_from(reader).with_context(|| format!("bad vocab file {}", path.display()))
}

fn cmd_dataset(
    kind: DatasetKind,
    input: &Path,
    output: Option<&Path>,
    vocab: Option<&Path>,
    keep_oov: bool,
    report_path: Option<&Path>,
    cfg: &RunConfig,
) -> Result<()> {
    let table = match (kind, vocab) {
        (DatasetKind::Assertions, None) => {
            return Err(CliError::Usage("`dataset assertions` requires --vocab <file>".into()))
        }
        (_, Some(p)) => Some(load_vocab(p)?),
        (DatasetKind::Exceptions, None) => None,
    };
    let mut out = open_output(output)?;
    let mut report = BuildReport::default();
    enum Row {
        Exception(Box<Result<oracle_forge::datasets::ExceptionSample, DropReason>>),
        Assertion(oracle_forge::datasets::AssertionOutcome),
        Bad(String),
    }
    stream(
        input,
        |idx, line| {
            let raw: RawSample = match serde_json::from_str(line) {
                Ok(r) => r,
                Err(e) => return Row::Bad(format!("bad record: {e}")),
            };
            match (&table, kind) {
                (Some(g), DatasetKind::Assertions) => Row::Assertion(assertion_samples(idx, &raw, g, keep_oov)),
                _ => Row::Exception(Box::new(exception_sample(idx, &raw))),
            }
        },
        |idx, row| {
            match row {
                Row::Bad(msg) => {
                    report.record_drop(DropReason::BadRecord);
                    record_error(cfg, idx, &msg)?;
                }
                Row::Exception(r) => {
                    report.record_exception(&r);
                    match *r {
                        Ok(s) => write_json(&mut out, &s)?,
                        Err(reason) => log::info!("record {idx} dropped: {}", reason.as_str()),
                    }
                }
                Row::Assertion(o) => {
                    report.record_assertion(&o);
                    match o.result {
                        Ok(samples) => {
                            for s in &samples {
                                write_json(&mut out, s)?;
                            }
                        }
                        Err(reason) => log::info!("record {idx} dropped: {}", reason.as_str()),
                    }
                }
            }
            Ok(())
        },
    )?;
    out.flush().context("write failed")?;
    match report_path {
        Some(p) => {
            let mut w = open_output(Some(p))?;
            write_json(&mut w, &report)?;
            w.flush().context("write failed")?;
        }
        None => eprintln!("{}", serde_json::to_string(&report).expect("report serializes")),
    }
    Ok(())
}

fn read_corpus(input: &Path, cfg: &RunConfig) -> Result<Vec<RawSample>> {
    let mut corpus = Vec::new();
    stream(
        input,
        |_, line| serde_json::from_str::<RawSample>(line).map_err(|e| format!("bad record: {e}")),
        |idx, r| {
            match r {
                Ok(raw) => corpus.push(raw),
                Err(msg) => record_error(cfg, idx, &msg)?,
            }
            Ok(())
        },
    )?;
    Ok(corpus)
}

fn cmd_vocab(input: &Path, output: Option<&Path>, cfg: &RunConfig) -> Result<()> {
    let corpus = read_corpus(input, cfg)?;
    let truths: Vec<_> = corpus.par_iter().flat_map_iter(ground_truth_assertions).collect();
    let table = build_global_constant_table(&truths, cfg.k);
    let mut out = open_output(output)?;
    table.write_to(&mut out).context("write failed")?;
    out.flush().context("write failed")?;
    Ok(())
}

/// What inference needs from one input record: the test (or a bare prefix)
/// and the focal method (or just its signature).
#[derive(serde::Deserialize)]
struct InferInput {
    #[serde(default)]
    test: Option<String>,
    #[serde(default)]
    prefix: Option<String>,
    #[serde(default)]
    focal_method: Option<String>,
    #[serde(default)]
    signature: Option<String>,
    #[serde(default)]
    docstring: String,
    #[serde(default)]
    class_name: String,
}

fn infer_inputs(line: &str) -> Result<(Vec<TestPrefix>, UnitContext), String> {
    let rec: InferInput = serde_json::from_str(line).map_err(|e| format!("bad record: {e}"))?;
    let mut context = match (&rec.focal_method, &rec.signature) {
        (Some(src), _) => strip_implementation(src, &rec.docstring).map_err(|e| format!("focal method: {e}"))?,
        (None, Some(sig)) => UnitContext {
            class_name: String::new(),
            signature: parse_method_signature(sig).map_err(|e| format!("signature: {e}"))?,
            docstring: rec.docstring.clone(),
            implementation_present: false,
        },
        (None, None) => return Err("record needs `focal_method` or `signature`".into()),
    };
    context.class_name = rec.class_name;
    let prefixes = match (&rec.test, &rec.prefix) {
        (Some(t), _) => {
            let test = parse_test_method(t).map_err(|e| format!("test: {e}"))?;
            match strip_oracles(&test) {
                Stripped::Oracles(r) if !r.is_expected_exception() && !r.per_oracle_prefixes.is_empty() => {
                    r.per_oracle_prefixes.into_iter().map(|(p, _)| p).collect()
                }
                Stripped::Oracles(r) => vec![r.prefix],
                Stripped::NoOracle { prefix } => vec![prefix],
            }
        }
        (None, Some(p)) => vec![TestPrefix::parse(p).map_err(|e| format!("prefix: {e}"))?],
        (None, None) => return Err("record needs `test` or `prefix`".into()),
    };
    if prefixes.iter().any(TestPrefix::is_empty) {
        return Err("empty test prefix".into());
    }
    Ok((prefixes, context))
}

enum InferFailure {
    Record(String),
    Scorer(ScorerError),
}

fn cmd_infer(input: &Path, output: Option<&Path>, vocab: Option<&Path>, cfg: &RunConfig) -> Result<()> {
    let table = match vocab {
        Some(p) => load_vocab(p)?,
        None => GlobalConstantTable::empty(cfg.k),
    };
    let scorer: Box<dyn Scorer> = cfg.binding().instantiate(cfg.fallback_heuristic);
    let ranker = cfg.ranker();
    let mut out = open_output(output)?;
    stream(
        input,
        |idx, line| -> Result<Vec<Value>, InferFailure> {
            let (prefixes, context) = infer_inputs(line).map_err(InferFailure::Record)?;
            let mut rows = Vec::with_capacity(prefixes.len());
            for (j, p) in prefixes.iter().enumerate() {
                let name = if prefixes.len() == 1 { format!("test{idx}") } else { format!("test{idx}_{j}") };
                let result =
                    infer_oracle(p, &context, &table, &ranker, scorer.as_ref()).map_err(InferFailure::Scorer)?;
                let test = result.render(p, &name).map_err(|e| InferFailure::Record(e.to_string()))?;
                rows.push(json!({
                    "line": idx,
                    "test_name": name,
                    "test": oracle_forge::testlang::render_test_method(&test),
                    "result": result,
                }));
            }
            Ok(rows)
        },
        |idx, r| {
            match r {
                Ok(rows) => {
                    for row in &rows {
                        write_json(&mut out, row)?;
                    }
                }
                // scorer failures are fatal, not per-record
                Err(InferFailure::Scorer(e)) => return Err(CliError::Fatal(e.into())),
                Err(InferFailure::Record(msg)) => {
                    write_json(&mut out, &json!({"line": idx, "error": msg}))?;
                    record_error(cfg, idx, &msg)?;
                }
            }
            Ok(())
        },
    )?;
    out.flush().context("write failed")?;
    Ok(())
}

fn cmd_eval(records: &Path, output: Option<&Path>, cfg: &RunConfig) -> Result<()> {
    let mut recs: Vec<ExecutionRecord> = Vec::new();
    stream(
        records,
        |_, line| serde_json::from_str::<ExecutionRecord>(line).map_err(|e| format!("bad record: {e}")),
        |idx, r| {
            match r {
                Ok(rec) => recs.push(rec),
                Err(msg) => record_error(cfg, idx, &msg)?,
            }
            Ok(())
        },
    )?;
    let report = aggregate(&recs);
    print!("{}", report.to_table());
    if let Some(p) = output {
        let mut w = open_output(Some(p))?;
        write_json(&mut w, &report)?;
        w.flush().context("write failed")?;
    }
    Ok(())
}

/// An assertion line: raw source, a JSON string, or an object with `assertion`.
fn assertion_text(line: &str) -> String {
    match serde_json::from_str::<Value>(line) {
        Ok(Value::String(s)) => s,
        Ok(Value::Object(m)) => m.get("assertion").and_then(Value::as_str).unwrap_or_default().to_string(),
        _ => line.to_string(),
    }
}

fn cmd_coverage(input: &Path, output: Option<&Path>) -> Result<()> {
    let mut lines = Vec::new();
    stream(input, |_, line| assertion_text(line), |_, a| {
        lines.push(a);
        Ok(())
    })?;
    let report = grammar_coverage(&lines);
    print!("{}", report.to_table());
    if let Some(p) = output {
        let mut w = open_output(Some(p))?;
        write_json(&mut w, &report)?;
        w.flush().context("write failed")?;
    }
    Ok(())
}

fn cmd_ablate(
    input: &Path,
    vocab_corpus: Option<&Path>,
    ks: &[usize],
    output: Option<&Path>,
    cfg: &RunConfig,
) -> Result<()> {
    if ks.is_empty() {
        return Err(CliError::Usage("--ks must list at least one value".into()));
    }
    let corpus = read_corpus(input, cfg)?;
    let vocab_src: Vec<RawSample> = match vocab_corpus {
        Some(p) => read_corpus(p, cfg)?,
        None => corpus.clone(),
    };
    let truths: Vec<_> = vocab_src.par_iter().flat_map_iter(ground_truth_assertions).collect();
    let scorer = cfg.binding().instantiate(cfg.fallback_heuristic);
    let rows = k_ablation(&truths, &corpus, ks, scorer.as_ref()).map_err(|e| CliError::Fatal(e.into()))?;
    print!("{}", k_ablation_table(&rows));
    if let Some(p) = output {
        let mut w = open_output(Some(p))?;
        for r in &rows {
            write_json(&mut w, r)?;
        }
        w.flush().context("write failed")?;
    }
    Ok(())
}
