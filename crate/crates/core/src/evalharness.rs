//! Measurement: grammar coverage of assertion corpora, lexical accuracy of
//! predicted assertions, exception classification metrics, the constant-table
//! size ablation, and bug-finding verdicts from execution records.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::{build_global_constant_table, create_candidate_templates, GlobalConstantTable, DEFAULT_K};
use crate::datasets::{strip_implementation, RawSample};
use crate::oracles::{classify_outline, strip_oracles, AssertionForm, Oracle, Stripped};
use crate::ranking::{rank_assertions, Scorer, ScorerError};
use crate::testlang::{parse_call_outline, parse_test_method};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    ExceptionRaised,
    ExceptionNotRaised,
    Assertion,
    PrefixOnly,
}

impl OracleKind {
    pub const ALL: [OracleKind; 4] =
        [OracleKind::ExceptionRaised, OracleKind::ExceptionNotRaised, OracleKind::Assertion, OracleKind::PrefixOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            OracleKind::ExceptionRaised => "exception-raised",
            OracleKind::ExceptionNotRaised => "exception-not-raised",
            OracleKind::Assertion => "assertion",
            OracleKind::PrefixOnly => "prefix-only",
        }
    }
}

/// Outcome of one generated test on the buggy and the fixed version of a unit.
///
/// For `prefix-only` tests the outcome is that of the implicit oracle: the
/// test fails iff the run raised an exception.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionRecord {
    pub test_id: String,
    pub bug_id: String,
    pub buggy: Outcome,
    pub fixed: Outcome,
    pub oracle_kind: OracleKind,
    /// Where the outcomes came from (tool, run).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    TP,
    FP,
    TN,
    FN,
}

/// Failing on the fixed version means the oracle is wrong; failing only on
/// the buggy version means it caught the bug.
pub fn judge(r: &ExecutionRecord) -> Verdict {
    match (r.buggy, r.fixed) {
        (Outcome::Fail, Outcome::Pass) => Verdict::TP,
        (Outcome::Fail, Outcome::Fail) => Verdict::FP,
        (Outcome::Pass, Outcome::Pass) => Verdict::TN,
        (Outcome::Pass, Outcome::Fail) => Verdict::FN,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictCounts {
    #[serde(rename = "TP")]
    pub tp: u64,
    #[serde(rename = "FP")]
    pub fp: u64,
    #[serde(rename = "TN")]
    pub tn: u64,
    #[serde(rename = "FN")]
    pub fn_: u64,
}

impl VerdictCounts {
    pub fn add(&mut self, v: Verdict) {
        match v {
            Verdict::TP => self.tp += 1,
            Verdict::FP => self.fp += 1,
            Verdict::TN => self.tn += 1,
            Verdict::FN => self.fn_ += 1,
        }
    }

    fn merge(mut self, o: VerdictCounts) -> Self {
        self.tp += o.tp;
        self.fp += o.fp;
        self.tn += o.tn;
        self.fn_ += o.fn_;
        self
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn fpr(&self) -> f64 {
        ratio(self.fp, self.fp + self.tn)
    }
}

fn ratio(n: u64, d: u64) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub records: u64,
    pub counts: VerdictCounts,
    pub fpr: f64,
    pub bugs_found: BTreeSet<String>,
    /// Found bugs per oracle kind; a bug caught by several kinds counts under each.
    pub bugs_by_oracle_kind: BTreeMap<OracleKind, u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classification: Option<ClassificationMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assertion: Option<LexicalAccuracy>,
}

#[derive(Default)]
struct Tally {
    counts: VerdictCounts,
    found: HashMap<String, BTreeSet<OracleKind>>,
}

impl Tally {
    fn add(mut self, r: &ExecutionRecord) -> Self {
        let v = judge(r);
        self.counts.add(v);
        if v == Verdict::TP {
            self.found.entry(r.bug_id.clone()).or_default().insert(r.oracle_kind);
        }
        self
    }

    fn merge(mut self, o: Tally) -> Self {
        self.counts = self.counts.merge(o.counts);
        for (bug, kinds) in o.found {
            self.found.entry(bug).or_default().extend(kinds);
        }
        self
    }
}

pub fn aggregate(records: &[ExecutionRecord]) -> MetricsReport {
    let tally = records.par_iter().fold(Tally::default, Tally::add).reduce(Tally::default, Tally::merge);
    let mut by_kind: BTreeMap<OracleKind, u64> = OracleKind::ALL.iter().map(|k| (*k, 0)).collect();
    for kinds in tally.found.values() {
        for k in kinds {
            *by_kind.entry(*k).or_default() += 1;
        }
    }
    MetricsReport {
        records: records.len() as u64,
        counts: tally.counts,
        fpr: tally.counts.fpr(),
        bugs_found: tally.found.into_keys().collect(),
        bugs_by_oracle_kind: by_kind,
        classification: None,
        assertion: None,
    }
}

fn table(rows: &[(String, String)]) -> String {
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let vwidth = rows.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (k, v) in rows {
        let _ = writeln!(out, "{k:<width$}  {v:>vwidth$}");
    }
    out
}

impl MetricsReport {
    /// Aligned two-column text rendering.
    pub fn to_table(&self) -> String {
        let mut rows = vec![
            ("records".to_string(), self.records.to_string()),
            ("TP".into(), self.counts.tp.to_string()),
            ("FP".into(), self.counts.fp.to_string()),
            ("TN".into(), self.counts.tn.to_string()),
            ("FN".into(), self.counts.fn_.to_string()),
            ("FPR".into(), format!("{:.4}", self.fpr)),
            ("bugs found".into(), self.bugs_found.len().to_string()),
        ];
        for (k, n) in &self.bugs_by_oracle_kind {
            rows.push((format!("bugs found by {}", k.as_str()), n.to_string()));
        }
        if let Some(c) = &self.classification {
            rows.push(("accuracy".into(), format!("{:.4}", c.accuracy)));
            rows.push(("precision".into(), format!("{:.4}", c.precision)));
            rows.push(("recall".into(), format!("{:.4}", c.recall)));
            rows.push(("F1".into(), format!("{:.4}", c.f1)));
        }
        if let Some(a) = &self.assertion {
            rows.push(("overall accuracy".into(), format!("{:.4}", a.overall)));
            rows.push(("in-vocab accuracy".into(), format!("{:.4}", a.in_vocab)));
        }
        table(&rows)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub total: u64,
    pub in_grammar: u64,
    pub out_by_reason: BTreeMap<String, u64>,
    pub parse_failures: u64,
    /// `in_grammar / (total - parse_failures)`, 0 when nothing parsed.
    pub fraction: f64,
}

impl CoverageReport {
    fn add(mut self, assertion: &str) -> Self {
        self.total += 1;
        match parse_call_outline(assertion) {
            Err(_) => self.parse_failures += 1,
            Ok(outline) => match classify_outline(&outline) {
                Ok(()) => self.in_grammar += 1,
                Err(reason) => *self.out_by_reason.entry(reason.as_str().to_string()).or_default() += 1,
            },
        }
        self
    }

    fn merge(mut self, o: CoverageReport) -> Self {
        self.total += o.total;
        self.in_grammar += o.in_grammar;
        self.parse_failures += o.parse_failures;
        for (k, n) in o.out_by_reason {
            *self.out_by_reason.entry(k).or_default() += n;
        }
        self
    }

    fn finish(mut self) -> Self {
        self.fraction = ratio(self.in_grammar, self.total - self.parse_failures);
        self
    }

    pub fn to_table(&self) -> String {
        let mut rows = vec![
            ("total".to_string(), self.total.to_string()),
            ("in grammar".into(), self.in_grammar.to_string()),
            ("parse failures".into(), self.parse_failures.to_string()),
        ];
        for (k, n) in &self.out_by_reason {
            rows.push((format!("out of grammar: {k}"), n.to_string()));
        }
        rows.push(("fraction".into(), format!("{:.4}", self.fraction)));
        table(&rows)
    }
}

/// Classifies assertion statements given as source text, one per item.
pub fn grammar_coverage<S: AsRef<str> + Sync>(assertions: &[S]) -> CoverageReport {
    assertions
        .par_iter()
        .fold(CoverageReport::default, |acc, a| acc.add(a.as_ref()))
        .reduce(CoverageReport::default, CoverageReport::merge)
        .finish()
}

/// Collapses whitespace runs to one space and drops spaces next to
/// punctuation and a trailing `;`. String and char literals are untouched.
pub fn canonicalize(text: &str) -> String {
    const PUNCT: &str = "()[]{},.;<>=!+-*/%&|?:";
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    let mut chars = text.trim().chars().peekable();
    while let Some(c) = chars.next() {
        if c.is_whitespace() {
            pending_space = true;
            continue;
        }
        if pending_space {
            let prev_punct = out.chars().last().is_some_and(|p| PUNCT.contains(p));
            if !prev_punct && !PUNCT.contains(c) {
                out.push(' ');
            }
            pending_space = false;
        }
        out.push(c);
        if c == '"' || c == '\'' {
            while let Some(d) = chars.next() {
                out.push(d);
                if d == '\\' {
                    if let Some(e) = chars.next() {
                        out.push(e);
                    }
                } else if d == c {
                    break;
                }
            }
        }
    }
    while out.ends_with(';') {
        out.pop();
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssertionPrediction {
    pub group_id: String,
    /// `None` when no assertion was emitted for the group.
    pub assertion: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssertionTruth {
    pub group_id: String,
    pub assertion: String,
    /// Whether the truth is among the group's candidates.
    pub in_vocab: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LexicalAccuracy {
    pub groups: u64,
    pub matched: u64,
    pub in_vocab_groups: u64,
    pub in_vocab_matched: u64,
    pub overall: f64,
    pub in_vocab: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("no ground truth for group {0}")]
    MissingTruth(String),
    #[error("duplicate ground truth for group {0}")]
    DuplicateTruth(String),
    #[error("{predictions} predictions but {truths} labels")]
    LengthMismatch { predictions: usize, truths: usize },
}

/// Exact match after [`canonicalize`]. Groups without a prediction count as
/// misses; predictions for groups without a truth are an error.
pub fn lexical_accuracy(
    predictions: &[AssertionPrediction],
    truth: &[AssertionTruth],
) -> Result<LexicalAccuracy, EvalError> {
    let mut by_group: HashMap<&str, &AssertionTruth> = HashMap::new();
    for t in truth {
        if by_group.insert(&t.group_id, t).is_some() {
            return Err(EvalError::DuplicateTruth(t.group_id.clone()));
        }
    }
    let mut matched_groups: HashMap<&str, bool> = HashMap::new();
    for p in predictions {
        let t = by_group.get(p.group_id.as_str()).ok_or_else(|| EvalError::MissingTruth(p.group_id.clone()))?;
        let hit = p.assertion.as_deref().is_some_and(|a| canonicalize(a) == canonicalize(&t.assertion));
        *matched_groups.entry(&t.group_id).or_default() |= hit;
    }
    let mut acc = LexicalAccuracy { groups: truth.len() as u64, ..Default::default() };
    for t in truth {
        let hit = matched_groups.get(t.group_id.as_str()).copied().unwrap_or(false);
        acc.matched += u64::from(hit);
        if t.in_vocab {
            acc.in_vocab_groups += 1;
            acc.in_vocab_matched += u64::from(hit);
        }
    }
    acc.overall = ratio(acc.matched, acc.groups);
    acc.in_vocab = ratio(acc.in_vocab_matched, acc.in_vocab_groups);
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn classification_metrics(pred: &[u8], truth: &[u8]) -> Result<ClassificationMetrics, EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch { predictions: pred.len(), truths: truth.len() });
    }
    let (mut tp, mut fp, mut fn_, mut correct) = (0u64, 0u64, 0u64, 0u64);
    for (&p, &t) in pred.iter().zip(truth) {
        let (p, t) = (p != 0, t != 0);
        correct += u64::from(p == t);
        tp += u64::from(p && t);
        fp += u64::from(p && !t);
        fn_ += u64::from(!p && t);
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    Ok(ClassificationMetrics { accuracy: ratio(correct, pred.len() as u64), precision, recall, f1 })
}

/// Predicts label 0 with probability `q`, independently per sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedCoin {
    pub q: f64,
    pub seed: u64,
}

impl WeightedCoin {
    pub fn predict(&self, n: usize) -> Vec<u8> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..n).map(|_| u8::from(!rng.gen_bool(self.q))).collect()
    }

    /// Expected accuracy on data whose negatives also occur with rate `q`.
    pub fn expected_accuracy(q: f64) -> f64 {
        q * q + (1.0 - q) * (1.0 - q)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KAblationRow {
    pub k: usize,
    pub default: bool,
    pub groups: u64,
    pub overall_accuracy: f64,
    pub in_vocab_fraction: f64,
    pub in_vocab_accuracy: f64,
}

struct Group {
    prefix: crate::oracles::TestPrefix,
    context: crate::testlang::UnitContext,
    truth: AssertionForm,
}

fn assertion_groups(corpus: &[RawSample]) -> Vec<Group> {
    let mut groups = Vec::new();
    for raw in corpus {
        let Ok(test) = parse_test_method(&raw.test) else { continue };
        let Ok(mut context) = strip_implementation(&raw.focal_method, &raw.docstring) else { continue };
        context.class_name = raw.class_name.clone();
        let Stripped::Oracles(r) = strip_oracles(&test) else { continue };
        for (prefix, oracle) in r.per_oracle_prefixes {
            if let Oracle::Assertion { form } = oracle {
                groups.push(Group { prefix, context: context.clone(), truth: form });
            }
        }
    }
    groups
}

/// For each `k`: rebuilds the constant table from `vocab_corpus` truncated to
/// `k`, regenerates candidates for every in-grammar assertion of `corpus`, and
/// predicts the top-ranked candidate. Groups whose prefix has no final
/// assignment have no candidates and count as out of vocab.
pub fn k_ablation(
    vocab_corpus: &[AssertionForm],
    corpus: &[RawSample],
    ks: &[usize],
    scorer: &dyn Scorer,
) -> Result<Vec<KAblationRow>, ScorerError> {
    let groups = assertion_groups(corpus);
    let max_k = ks.iter().copied().max().unwrap_or(0);
    let full = build_global_constant_table(vocab_corpus, max_k);
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let g: GlobalConstantTable = full.truncated(k);
        let evaluated: Vec<Result<(bool, bool), ScorerError>> = groups
            .par_iter()
            .map(|grp| {
                let Ok(cs) = create_candidate_templates(&g, k, &grp.prefix) else { return Ok((false, false)) };
                let in_vocab = cs.contains(&grp.truth);
                if cs.is_empty() {
                    return Ok((in_vocab, false));
                }
                let ranked = rank_assertions(&grp.prefix, &grp.context, cs.candidates(), scorer)?;
                let hit = canonicalize(&ranked[0].candidate.form.render()) == canonicalize(&grp.truth.render());
                Ok((in_vocab, hit))
            })
            .collect();
        let (mut in_vocab, mut matched, mut in_vocab_matched) = (0u64, 0u64, 0u64);
        for r in evaluated {
            let (iv, hit) = r?;
            in_vocab += u64::from(iv);
            matched += u64::from(hit);
            in_vocab_matched += u64::from(iv && hit);
        }
        let n = groups.len() as u64;
        rows.push(KAblationRow {
            k,
            default: k == DEFAULT_K,
            groups: n,
            overall_accuracy: ratio(matched, n),
            in_vocab_fraction: ratio(in_vocab, n),
            in_vocab_accuracy: ratio(in_vocab_matched, in_vocab),
        });
    }
    Ok(rows)
}

pub fn k_ablation_table(rows: &[KAblationRow]) -> String {
    let mut out = format!("{:>4}  {:>7}  {:>9}  {:>9}  {:>9}\n", "k", "groups", "in-vocab", "overall", "iv-acc");
    for r in rows {
        let _ = writeln!(
            out,
            "{:>4}  {:>7}  {:>9.4}  {:>9.4}  {:>9.4}{}",
            r.k,
            r.groups,
            r.in_vocab_fraction,
            r.overall_accuracy,
            r.in_vocab_accuracy,
            if r.default { "  (default)" } else { "" }
        );
    }
    out
}
