//! Two-stage oracle inference: decide whether the prefix should raise an
//! exception; if not, rank the candidate assertions and keep the best one
//! when its score clears the threshold.

mod external;
mod heuristic;

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use external::{decode_response, Endpoint, ExternalScorer, RequestFrame, PROTOCOL_VERSION};
pub use heuristic::{docstring_mentions_throwing, suspicious_arguments, HeuristicPriors, HeuristicScorer};

use crate::candidates::{create_candidate_templates, Candidate, CandidateError, GlobalConstantTable, DEFAULT_K};
use crate::oracles::{render_oracle_test, render_prefix_only, AssertionForm, Oracle, OracleError, TestPrefix};
use crate::testlang::{TestMethod, TypeName, UnitContext};

/// A confidence in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Score(f64);

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("score {0} is not in [0, 1]")]
pub struct ScoreOutOfRange(pub f64);

impl Score {
    pub const ZERO: Score = Score(0.0);
    pub const ONE: Score = Score(1.0);

    pub fn new(v: f64) -> Result<Score, ScoreOutOfRange> {
        if (0.0..=1.0).contains(&v) {
            Ok(Score(v))
        } else {
            Err(ScoreOutOfRange(v))
        }
    }

    /// Clamps into range; NaN becomes 0.
    pub fn clamped(v: f64) -> Score {
        if v.is_nan() {
            Score(0.0)
        } else {
            Score(v.clamp(0.0, 1.0))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Score {
    type Error = ScoreOutOfRange;

    fn try_from(v: f64) -> Result<Self, Self::Error> {
        Score::new(v)
    }
}

impl From<Score> for f64 {
    fn from(s: Score) -> f64 {
        s.0
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Exception,
    Assertion,
}

#[derive(Debug, Clone, Copy)]
pub struct ScoreRequest<'a> {
    pub task: Task,
    pub prefix: &'a TestPrefix,
    pub context: &'a UnitContext,
    /// Present for the assertion task.
    pub candidate: Option<&'a Candidate>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScorerError {
    #[error("scorer unavailable: {0}")]
    Unavailable(String),
    #[error("scorer protocol error: {0}")]
    Protocol(String),
    #[error("scorer reported an error: {0}")]
    Remote(String),
}

pub trait Scorer: Send + Sync {
    /// Scores each request independently; the result has one entry per request.
    fn score_batch(&self, reqs: &[ScoreRequest<'_>]) -> Result<Vec<Score>, ScorerError>;
}

/// Uses `fallback` whenever `primary` is unreachable. Other errors propagate.
pub struct FallbackScorer<P, F> {
    pub primary: P,
    pub fallback: F,
}

impl<P: Scorer, F: Scorer> Scorer for FallbackScorer<P, F> {
    fn score_batch(&self, reqs: &[ScoreRequest<'_>]) -> Result<Vec<Score>, ScorerError> {
        match self.primary.score_batch(reqs) {
            Err(ScorerError::Unavailable(why)) => {
                log::warn!("{why}; falling back to the built-in heuristic");
                self.fallback.score_batch(reqs)
            }
            other => other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScorerBinding {
    BuiltinHeuristic {
        /// Recorded for reproducibility; the heuristic itself draws no randomness.
        seed: u64,
        priors: HeuristicPriors,
    },
    External {
        endpoint: Endpoint,
        timeout_ms: u64,
        max_in_flight: usize,
    },
}

impl Default for ScorerBinding {
    fn default() -> Self {
        ScorerBinding::BuiltinHeuristic { seed: 0, priors: HeuristicPriors::default() }
    }
}

impl ScorerBinding {
    /// Instantiates the scorer. External endpoints are contacted lazily, on
    /// the first scoring call; with `fallback_heuristic` an unreachable
    /// endpoint degrades to the built-in heuristic instead of failing.
    pub fn instantiate(&self, fallback_heuristic: bool) -> Box<dyn Scorer> {
        match self {
            ScorerBinding::BuiltinHeuristic { priors, .. } => Box::new(HeuristicScorer::new(*priors)),
            ScorerBinding::External { endpoint, timeout_ms, max_in_flight } => {
                let ext = ExternalScorer::new(endpoint.clone(), Duration::from_millis(*timeout_ms), *max_in_flight);
                if fallback_heuristic {
                    Box::new(FallbackScorer { primary: ext, fallback: HeuristicScorer::default() })
                } else {
                    Box::new(ext)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankerConfig {
    pub threshold: f64,
    pub k: usize,
    pub exception_cutoff: f64,
}

impl Default for RankerConfig {
    fn default() -> Self {
        RankerConfig { threshold: 0.5, k: DEFAULT_K, exception_cutoff: 0.5 }
    }
}

impl RankerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(format!("threshold {} is not in [0, 1]", self.threshold));
        }
        if !(0.0..=1.0).contains(&self.exception_cutoff) {
            return Err(format!("exception cutoff {} is not in [0, 1]", self.exception_cutoff));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    #[serde(flatten)]
    pub candidate: Candidate,
    pub score: Score,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Decision {
    ExceptionOracle {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        exception_type: Option<TypeName>,
    },
    AssertionOracle {
        form: AssertionForm,
        score: Score,
    },
    PrefixOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceResult {
    pub decision: Decision,
    pub ranked: Vec<RankedCandidate>,
    pub exception_score: Score,
}

impl InferenceResult {
    pub fn oracle(&self) -> Option<Oracle> {
        match &self.decision {
            Decision::ExceptionOracle { exception_type } => Some(Oracle::expected_exception(exception_type.clone())),
            Decision::AssertionOracle { form, .. } => Some(Oracle::assertion(form.clone())),
            Decision::PrefixOnly => None,
        }
    }

    /// The prefix with the decided oracle attached.
    pub fn render(&self, p: &TestPrefix, name: &str) -> Result<TestMethod, OracleError> {
        match self.oracle() {
            Some(o) => render_oracle_test(p, &o, name),
            None => Ok(render_prefix_only(p, name)),
        }
    }
}

fn single(s: &dyn Scorer, req: ScoreRequest<'_>) -> Result<Score, ScorerError> {
    let mut v = s.score_batch(&[req])?;
    if v.len() != 1 {
        return Err(ScorerError::Protocol(format!("expected 1 score, got {}", v.len())));
    }
    Ok(v.remove(0))
}

pub fn classify_exception(
    p: &TestPrefix,
    c: &UnitContext,
    s: &dyn Scorer,
    cfg: &RankerConfig,
) -> Result<(u8, Score), ScorerError> {
    let score = single(s, ScoreRequest { task: Task::Exception, prefix: p, context: c, candidate: None })?;
    Ok((u8::from(score.value() >= cfg.exception_cutoff), score))
}

/// Scores every candidate and sorts by descending score. The sort is stable,
/// so equal scores keep candidate-set order.
pub fn rank_assertions(
    p: &TestPrefix,
    c: &UnitContext,
    candidates: &[Candidate],
    s: &dyn Scorer,
) -> Result<Vec<RankedCandidate>, ScorerError> {
    let reqs: Vec<_> = candidates
        .iter()
        .map(|cand| ScoreRequest { task: Task::Assertion, prefix: p, context: c, candidate: Some(cand) })
        .collect();
    let scores = s.score_batch(&reqs)?;
    if scores.len() != candidates.len() {
        return Err(ScorerError::Protocol(format!("expected {} scores, got {}", candidates.len(), scores.len())));
    }
    let mut ranked: Vec<_> =
        candidates.iter().zip(scores).map(|(cand, score)| RankedCandidate { candidate: cand.clone(), score }).collect();
    ranked.sort_by(|a, b| b.score.value().total_cmp(&a.score.value()));
    Ok(ranked)
}

/// The exception an expected-exception oracle should check for: the first
/// `@throws` tag of the docstring, else the first declared exception.
pub fn expected_exception_type(c: &UnitContext) -> Option<TypeName> {
    let mut words = c.docstring.split_whitespace();
    while let Some(w) = words.next() {
        if w == "@throws" || w == "@exception" {
            if let Some(ty) = words.next() {
                let ty = ty.trim_matches(|ch: char| !(ch.is_alphanumeric() || ch == '_' || ch == '.'));
                if !ty.is_empty() {
                    return Some(TypeName::new(ty));
                }
            }
        }
    }
    c.signature.throws.first().cloned()
}

pub fn infer_oracle(
    p: &TestPrefix,
    c: &UnitContext,
    g: &GlobalConstantTable,
    cfg: &RankerConfig,
    s: &dyn Scorer,
) -> Result<InferenceResult, ScorerError> {
    let (label, exception_score) = classify_exception(p, c, s, cfg)?;
    if label == 1 {
        return Ok(InferenceResult {
            decision: Decision::ExceptionOracle { exception_type: expected_exception_type(c) },
            ranked: Vec::new(),
            exception_score,
        });
    }
    let candidates = match create_candidate_templates(g, cfg.k, p) {
        Ok(cs) => cs,
        Err(CandidateError::NoAssignment | CandidateError::UndeclaredVariable(_)) => {
            return Ok(InferenceResult { decision: Decision::PrefixOnly, ranked: Vec::new(), exception_score })
        }
    };
    let ranked =
        if candidates.is_empty() { Vec::new() } else { rank_assertions(p, c, candidates.candidates(), s)? };
    let decision = match ranked.first() {
        Some(top) if top.score.value() >= cfg.threshold => {
            Decision::AssertionOracle { form: top.candidate.form.clone(), score: top.score }
        }
        _ => Decision::PrefixOnly,
    };
    Ok(InferenceResult { decision, ranked, exception_score })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candidates::{build_global_constant_table, Provenance};
    use crate::testlang::{parse_signature, parse_test_method, Expr, LiteralType};

    fn prefix(body: &str) -> TestPrefix {
        TestPrefix::new(parse_test_method(&format!("public void t() {{ {body} }}")).unwrap().statements)
    }

    fn ctx(sig: &str, doc: &str) -> UnitContext {
        let mut c = parse_signature(sig).unwrap();
        c.docstring = doc.into();
        c
    }

    fn ints(texts: &[&str]) -> GlobalConstantTable {
        let forms: Vec<_> = texts
            .iter()
            .map(|t| AssertionForm::Equals { expected: Expr::literal(LiteralType::Int, *t), actual: Expr::var("x") })
            .collect();
        build_global_constant_table(&forms, 8)
    }

    fn h() -> HeuristicScorer {
        HeuristicScorer::default()
    }

    fn cand(provenance: Provenance, global_rank: Option<usize>) -> Candidate {
        Candidate { form: AssertionForm::True(Expr::var("b")), provenance, global_rank }
    }

    fn assertion_score(c: &Candidate) -> f64 {
        let p = TestPrefix::default();
        let cx = ctx("int f()", "");
        h().score_one(&ScoreRequest { task: Task::Assertion, prefix: &p, context: &cx, candidate: Some(c) }).value()
    }

    #[test]
    fn score_range() {
        assert!(Score::new(1.5).is_err());
        assert!(Score::new(f64::NAN).is_err());
        assert_eq!(Score::clamped(1.7).value(), 1.0);
        assert!(serde_json::from_str::<Score>("-0.1").is_err());
    }

    #[test]
    fn assertion_heuristic_formula() {
        assert_eq!(assertion_score(&cand(Provenance::Local, None)), 0.5);
        assert_eq!(assertion_score(&cand(Provenance::Global, Some(0))), 0.5);
        assert!((assertion_score(&cand(Provenance::Global, Some(1))) - 0.4).abs() < 1e-12);
        assert_eq!(assertion_score(&cand(Provenance::Structural, None)), 0.4);
    }

    #[test]
    fn exception_heuristic() {
        let p = prefix("NumberUtils.createNumber(\"0XT\");");
        let c = ctx("static Number createNumber(String s)", "@throws NumberFormatException if the value cannot be converted");
        let cfg = RankerConfig::default();
        let (label, score) = classify_exception(&p, &c, &h(), &cfg).unwrap();
        assert_eq!(label, 1);
        assert!(score.value() >= 0.7 - 1e-12);

        let plain = ctx("int size()", "");
        let (label, score) = classify_exception(&prefix("Foo f = new Foo(); int n = f.size();"), &plain, &h(), &cfg).unwrap();
        assert_eq!((label, score.value()), (0, 0.2));

        let cutoff0 = RankerConfig { exception_cutoff: 0.0, ..cfg };
        assert_eq!(classify_exception(&prefix("go();"), &plain, &h(), &cutoff0).unwrap().0, 1);
    }

    #[test]
    fn argument_signals() {
        let c = ctx("public void removeValue(int i)", "");
        assert!(suspicious_arguments(&prefix("KeyedValues kv = new KeyedValues(); kv.removeValue(-1);"), &c));
        assert!(!suspicious_arguments(&prefix("KeyedValues kv = new KeyedValues(); kv.removeValue(1);"), &c));
        assert!(suspicious_arguments(&prefix("Foo f = new Foo(null);"), &c));
        let other = ctx("public void removeValue(int count)", "");
        assert!(!suspicious_arguments(&prefix("KeyedValues kv = new KeyedValues(); kv.removeValue(-1);"), &other));
    }

    #[test]
    fn keyed_values_ranking_and_inference() {
        let p = prefix("KeyedValues kv = new KeyedValues(); Short short0 = new Short(2); kv.insertValue(0, short0, 2); kv.removeValue(0); int int0 = kv.itemCount();");
        let c = ctx("public void removeValue(int i)", "");
        let r = infer_oracle(&p, &c, &ints(&["0", "0", "1"]), &RankerConfig::default(), &h()).unwrap();
        let order: Vec<_> = r.ranked.iter().map(|x| x.candidate.form.render()).collect();
        assert_eq!(order, ["assertEquals(0, int0)", "assertEquals(2, int0)", "assertEquals(1, int0)"]);
        match &r.decision {
            Decision::AssertionOracle { form, score } => {
                assert_eq!(form.render(), "assertEquals(0, int0)");
                assert_eq!(score.value(), 0.5);
            }
            other => panic!("unexpected {other:?}"),
        }
        let strict = RankerConfig { threshold: 1.0, ..RankerConfig::default() };
        let r = infer_oracle(&p, &c, &ints(&["0"]), &strict, &h()).unwrap();
        assert_eq!(r.decision, Decision::PrefixOnly);
    }

    #[test]
    fn no_assignment_gives_prefix_only() {
        let r = infer_oracle(&prefix("go();"), &ctx("void go()", ""), &ints(&[]), &RankerConfig::default(), &h()).unwrap();
        assert_eq!(r.decision, Decision::PrefixOnly);
        assert!(r.ranked.is_empty());
    }

    #[test]
    fn equal_scores_keep_candidate_order() {
        let cands: Vec<_> = (0..4).map(|_| cand(Provenance::Local, None)).enumerate()
            .map(|(i, mut c)| { c.form = AssertionForm::True(Expr::var(format!("b{i}"))); c })
            .collect();
        let ranked = rank_assertions(&TestPrefix::default(), &ctx("int f()", ""), &cands, &h()).unwrap();
        let got: Vec<_> = ranked.into_iter().map(|r| r.candidate).collect();
        assert_eq!(got, cands);
    }

    #[test]
    fn exception_type_from_docstring_then_signature() {
        assert_eq!(
            expected_exception_type(&ctx("Number f(String s)", "/**\n * @throws NumberFormatException if bad\n */")),
            Some(TypeName::new("NumberFormatException"))
        );
        assert_eq!(expected_exception_type(&ctx("void f() throws IOException", "")), Some(TypeName::new("IOException")));
        assert_eq!(expected_exception_type(&ctx("void f()", "")), None);
    }

    #[test]
    fn docstring_tokens() {
        assert!(docstring_mentions_throwing("@throws X"));
        assert!(docstring_mentions_throwing("an IllegalArgumentException is raised"));
        assert!(!docstring_mentions_throwing("returns the size"));
    }

    #[test]
    fn endpoint_parsing() {
        assert_eq!(Endpoint::parse("tcp://127.0.0.1:9"), Ok(Endpoint::Tcp("127.0.0.1:9".into())));
        assert_eq!(Endpoint::parse("exec:python3 serve.py"), Ok(Endpoint::Exec("python3 serve.py".into())));
        assert!(Endpoint::parse("http://x").is_err());
    }

    #[test]
    fn response_decoding() {
        assert_eq!(decode_response(r#"{"id":3,"score":0.25,"extra":true}"#), Some((3, Ok(Score::new(0.25).unwrap()))));
        assert!(matches!(decode_response(r#"{"id":3,"score":1.5}"#), Some((3, Err(ScorerError::Protocol(_))))));
        assert!(matches!(decode_response(r#"{"id":4,"error":"boom"}"#), Some((4, Err(ScorerError::Remote(_))))));
        assert_eq!(decode_response(r#"{"score":0.5}"#), None);
        assert_eq!(decode_response("not json"), None);
    }
}
