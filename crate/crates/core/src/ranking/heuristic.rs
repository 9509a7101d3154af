use serde::{Deserialize, Serialize};

use super::{Score, ScoreRequest, Scorer, ScorerError, Task};
use crate::candidates::Provenance;
use crate::oracles::TestPrefix;
use crate::testlang::{Expr, LiteralType, UnitContext};

/// Fixed weights of the built-in scorer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeuristicPriors {
    pub exception_prior: f64,
    pub docstring_bonus: f64,
    pub argument_bonus: f64,
    pub local: f64,
    pub global: f64,
    pub structural: f64,
    pub rank_bonus: f64,
}

impl Default for HeuristicPriors {
    fn default() -> Self {
        HeuristicPriors {
            exception_prior: 0.2,
            docstring_bonus: 0.5,
            argument_bonus: 0.2,
            local: 0.5,
            global: 0.3,
            structural: 0.4,
            rank_bonus: 0.2,
        }
    }
}

/// Deterministic stand-in for a learned scorer.
///
/// Exception task: a prior, raised when the docstring talks about throwing
/// and again when the prefix passes `null` or a negative index to the focal
/// method. Assertion task: a weight per candidate provenance plus a bonus
/// that decays with the candidate's global-table rank.
#[derive(Debug, Clone, Default)]
pub struct HeuristicScorer {
    pub priors: HeuristicPriors,
}

const INDEX_PARAMS: &[&str] = &["i", "index", "pos"];

pub fn docstring_mentions_throwing(doc: &str) -> bool {
    doc.split(|c: char| !(c.is_alphanumeric() || c == '@' || c == '_'))
        .map(str::to_lowercase)
        .any(|t| t == "@throws" || t == "throws" || t == "@exception" || t.ends_with("exception"))
}

fn is_null(e: &Expr) -> bool {
    matches!(e, Expr::Literal { literal_type: LiteralType::Null, .. })
}

fn is_negative(e: &Expr) -> bool {
    matches!(e, Expr::Literal { literal_type: LiteralType::Int | LiteralType::Long, text } if text.starts_with('-'))
}

/// True when some call passes `null`, or passes a negative literal to an
/// index-like parameter of the focal method.
pub fn suspicious_arguments(p: &TestPrefix, c: &UnitContext) -> bool {
    let mut hit = false;
    for stmt in p.statements() {
        stmt.walk(&mut |s| {
            for e in s.exprs() {
                e.walk(&mut |x| {
                    let args = match x {
                        Expr::MethodCall { args, .. } | Expr::New { args, .. } => args,
                        _ => return,
                    };
                    if args.iter().any(is_null) {
                        hit = true;
                    }
                    if let Expr::MethodCall { method, .. } = x {
                        if *method == c.signature.name {
                            let params = &c.signature.params;
                            hit |= args
                                .iter()
                                .zip(params)
                                .any(|(a, prm)| is_negative(a) && INDEX_PARAMS.contains(&prm.name.as_str()));
                        }
                    }
                });
            }
        });
    }
    hit
}

impl HeuristicScorer {
    pub fn new(priors: HeuristicPriors) -> Self {
        HeuristicScorer { priors }
    }

    pub fn score_one(&self, req: &ScoreRequest<'_>) -> Score {
        let w = &self.priors;
        let v = match req.task {
            Task::Exception => {
                let mut v = w.exception_prior;
                if docstring_mentions_throwing(&req.context.docstring) {
                    v += w.docstring_bonus;
                }
                if suspicious_arguments(req.prefix, req.context) {
                    v += w.argument_bonus;
                }
                v
            }
            Task::Assertion => match req.candidate {
                None => 0.0,
                Some(c) => {
                    let base = match c.provenance {
                        Provenance::Local => w.local,
                        Provenance::Global => w.global,
                        Provenance::Structural => w.structural,
                    };
                    base + c.global_rank.map_or(0.0, |r| w.rank_bonus / (1.0 + r as f64))
                }
            },
        };
        Score::clamped(v)
    }
}

impl Scorer for HeuristicScorer {
    fn score_batch(&self, reqs: &[ScoreRequest<'_>]) -> Result<Vec<Score>, ScorerError> {
        Ok(reqs.iter().map(|r| self.score_one(r)).collect())
    }
}
