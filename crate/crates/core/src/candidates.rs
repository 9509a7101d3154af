//! Type-constrained candidate assertions for a test prefix.
//!
//! The candidate set is built from the prefix's return value (the left-hand
//! side of its final assignment): structural assertions chosen by the value's
//! kind, then `assertEquals` against the most frequent corpus constants of the
//! value's type (global table), then against literals and variables of that
//! type appearing in the prefix (local table).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::oracles::{AssertionForm, TestPrefix};
use crate::testlang::{parse_expression, Expr, LiteralType, Statement, TypeName, NULL_TYPE};

pub const DEFAULT_K: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueKind {
    Boolean,
    PrimitiveNonBoolean,
    Object,
}

impl ValueKind {
    pub fn of(ty: &TypeName) -> ValueKind {
        match ty.as_str() {
            "boolean" => ValueKind::Boolean,
            _ if ty.is_primitive() => ValueKind::PrimitiveNonBoolean,
            _ => ValueKind::Object,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetVal {
    pub var_name: String,
    pub declared_type: TypeName,
    pub kind: ValueKind,
}

impl RetVal {
    pub fn type_key(&self) -> String {
        self.declared_type.canonical()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CandidateError {
    #[error("last prefix statement is not an assignment")]
    NoAssignment,
    #[error("assignment target `{0}` has no declaration in the prefix")]
    UndeclaredVariable(String),
}

pub fn extract_ret_val(p: &TestPrefix) -> Result<RetVal, CandidateError> {
    let (name, declared_type) = match p.statements().last() {
        Some(Statement::VarDecl { declared_type, name, init: Some(_) }) => (name.clone(), declared_type.clone()),
        Some(Statement::Assign { target, .. }) => {
            let ty = p
                .statements()
                .iter()
                .rev()
                .find_map(|s| match s {
                    Statement::VarDecl { declared_type, name, .. } if name == target => Some(declared_type.clone()),
                    _ => None,
                })
                .ok_or_else(|| CandidateError::UndeclaredVariable(target.clone()))?;
            (target.clone(), ty)
        }
        _ => return Err(CandidateError::NoAssignment),
    };
    let kind = ValueKind::of(&declared_type);
    Ok(RetVal { var_name: name, declared_type, kind })
}

/// Values seen in a prefix, keyed by canonical type, in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LocalValueTable {
    entries: BTreeMap<String, Vec<Expr>>,
}

impl LocalValueTable {
    pub fn get(&self, type_key: &str) -> &[Expr] {
        self.entries.get(type_key).map_or(&[], Vec::as_slice)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn types(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    fn push(&mut self, key: String, value: Expr) {
        let list = self.entries.entry(key).or_default();
        if !list.contains(&value) {
            list.push(value);
        }
    }
}

pub fn create_local_value_table(p: &TestPrefix) -> LocalValueTable {
    let excluded = extract_ret_val(p).ok().map(|r| r.var_name);
    let mut table = LocalValueTable::default();
    for stmt in p.statements() {
        // only top-level declarations are in scope where the assertion goes
        if let Statement::VarDecl { declared_type, name, .. } = stmt {
            if excluded.as_deref() != Some(name.as_str()) {
                table.push(declared_type.canonical(), Expr::var(name.clone()));
            }
        }
        stmt.walk(&mut |s| {
            for e in s.exprs() {
                e.walk(&mut |x| {
                    if let Expr::Literal { literal_type, .. } = x {
                        table.push(literal_type.type_key().to_string(), x.clone());
                    }
                });
            }
        });
    }
    table
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobalEntry {
    pub literal: Expr,
    pub count: u64,
}

impl GlobalEntry {
    pub fn text(&self) -> &str {
        match &self.literal {
            Expr::Literal { text, .. } => text,
            _ => unreachable!("global entries are literals"),
        }
    }
}

/// Most frequent `assertEquals` expected-value constants per type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlobalConstantTable {
    k: usize,
    entries: BTreeMap<String, Vec<GlobalEntry>>,
}

impl GlobalConstantTable {
    pub fn empty(k: usize) -> Self {
        GlobalConstantTable { k, entries: BTreeMap::new() }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, type_key: &str) -> &[GlobalEntry] {
        self.entries.get(type_key).map_or(&[], Vec::as_slice)
    }

    pub fn types(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Rank of `literal_text` in the list for `type_key`.
    pub fn rank_of(&self, type_key: &str, literal_text: &str) -> Option<usize> {
        self.get(type_key).iter().position(|e| e.text() == literal_text)
    }

    /// The same table cut down to the top `k` values per type.
    pub fn truncated(&self, k: usize) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|(ty, list)| (ty.clone(), list.iter().take(k).cloned().collect::<Vec<_>>()))
            .filter(|(_, list)| !list.is_empty())
            .collect();
        GlobalConstantTable { k: k.min(self.k), entries }
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{VOCAB_MAGIC} v1 k={}", self.k)?;
        for (ty, list) in &self.entries {
            for (rank, e) in list.iter().enumerate() {
                writeln!(w, "{ty}\t{rank}\t{}\t{}", e.text(), e.count)?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: impl BufRead) -> Result<Self, VocabError> {
        let mut lines = r.lines().enumerate();
        let (_, header) = lines.next().ok_or(VocabError::at(1, "missing header"))?;
        let header = header?;
        let k = header
            .strip_prefix(VOCAB_MAGIC)
            .and_then(|rest| rest.strip_prefix(" v1 k="))
            .and_then(|n| n.trim().parse::<usize>().ok())
            .ok_or_else(|| VocabError::at(1, &format!("expected `{VOCAB_MAGIC} v1 k=<k>`")))?;
        let mut entries: BTreeMap<String, Vec<GlobalEntry>> = BTreeMap::new();
        for (idx, line) in lines {
            let line = line?;
            let lineno = idx + 1;
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let [ty, rank, text, count] = cols.as_slice() else {
                return Err(VocabError::at(lineno, "expected 4 tab-separated columns"));
            };
            let rank: usize = rank.parse().map_err(|_| VocabError::at(lineno, "bad rank"))?;
            let count: u64 = count.parse().map_err(|_| VocabError::at(lineno, "bad count"))?;
            let literal = match parse_expression(text) {
                Ok(e @ Expr::Literal { .. }) => e,
                _ => return Err(VocabError::at(lineno, "literal text does not parse")),
            };
            let list = entries.entry(ty.to_string()).or_default();
            if rank != list.len() {
                return Err(VocabError::at(lineno, "ranks must be contiguous from 0"));
            }
            if rank >= k {
                return Err(VocabError::at(lineno, "more than k entries for type"));
            }
            if list.last().is_some_and(|prev| prev.count < count) {
                return Err(VocabError::at(lineno, "entries must be sorted by descending count"));
            }
            list.push(GlobalEntry { literal, count });
        }
        Ok(GlobalConstantTable { k, entries })
    }
}

pub const VOCAB_MAGIC: &str = "oracle-forge-vocab";

#[derive(Debug, thiserror::Error)]
pub enum VocabError {
    #[error("vocab line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl VocabError {
    fn at(line: usize, message: &str) -> Self {
        VocabError::Format { line, message: message.to_string() }
    }
}

/// Counts literal expected values of `assertEquals` forms per type and keeps
/// the top `k` of each, most frequent first, ties broken by literal text.
///
/// `null` and literals whose text contains a tab or newline (which the vocab
/// file cannot carry) are not counted.
pub fn build_global_constant_table<'a>(
    corpus: impl IntoIterator<Item = &'a AssertionForm>,
    k: usize,
) -> GlobalConstantTable {
    let mut counts: HashMap<(&'static str, String), (LiteralType, u64)> = HashMap::new();
    for form in corpus {
        if let AssertionForm::Equals { expected: Expr::Literal { literal_type, text }, .. } = form {
            if *literal_type == LiteralType::Null || text.contains(['\t', '\n', '\r']) {
                continue;
            }
            counts.entry((literal_type.type_key(), text.clone())).or_insert((*literal_type, 0)).1 += 1;
        }
    }
    let mut by_type: BTreeMap<String, Vec<(String, LiteralType, u64)>> = BTreeMap::new();
    for ((ty, text), (lt, n)) in counts {
        by_type.entry(ty.to_string()).or_default().push((text, lt, n));
    }
    let entries = by_type
        .into_iter()
        .filter_map(|(ty, mut list)| {
            list.sort_by(|a, b| b.2.cmp(&a.2).then_with(|| a.0.cmp(&b.0)));
            list.truncate(k);
            let list: Vec<_> = list
                .into_iter()
                .map(|(text, lt, count)| GlobalEntry { literal: Expr::literal(lt, text), count })
                .collect();
            (!list.is_empty()).then_some((ty, list))
        })
        .collect();
    GlobalConstantTable { k, entries }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Structural,
    Global,
    Local,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub form: AssertionForm,
    pub provenance: Provenance,
    /// Position in the global table, for global candidates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub global_rank: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CandidateSet {
    candidates: Vec<Candidate>,
}

impl CandidateSet {
    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn forms(&self) -> impl Iterator<Item = &AssertionForm> {
        self.candidates.iter().map(|c| &c.form)
    }

    /// Index of `form`, compared by canonical rendering.
    pub fn position(&self, form: &AssertionForm) -> Option<usize> {
        let text = form.render();
        self.candidates.iter().position(|c| c.form.render() == text)
    }

    pub fn contains(&self, form: &AssertionForm) -> bool {
        self.position(form).is_some()
    }
}

#[derive(Default)]
struct Builder {
    seen: HashSet<String>,
    out: Vec<Candidate>,
}

impl Builder {
    fn add(&mut self, form: AssertionForm, provenance: Provenance, global_rank: Option<usize>) {
        if self.seen.insert(form.render()) {
            self.out.push(Candidate { form, provenance, global_rank });
        }
    }
}

pub fn create_candidate_templates(
    g: &GlobalConstantTable,
    k: usize,
    p: &TestPrefix,
) -> Result<CandidateSet, CandidateError> {
    let ret = extract_ret_val(p)?;
    if ret.declared_type.as_str() == "void" {
        return Ok(CandidateSet::default());
    }
    let subject = Expr::var(ret.var_name.clone());
    let mut b = Builder::default();
    match ret.kind {
        ValueKind::Object => {
            b.add(AssertionForm::NotNull(subject.clone()), Provenance::Structural, None);
            b.add(AssertionForm::Null(subject.clone()), Provenance::Structural, None);
        }
        ValueKind::Boolean => {
            b.add(AssertionForm::True(subject.clone()), Provenance::Structural, None);
            b.add(AssertionForm::False(subject.clone()), Provenance::Structural, None);
        }
        ValueKind::PrimitiveNonBoolean => {}
    }
    let key = ret.type_key();
    if key != NULL_TYPE {
        for (rank, entry) in g.get(&key).iter().take(k).enumerate() {
            let form = AssertionForm::Equals { expected: entry.literal.clone(), actual: subject.clone() };
            b.add(form, Provenance::Global, Some(rank));
        }
        let local = create_local_value_table(p);
        for value in local.get(&key) {
            let form = AssertionForm::Equals { expected: value.clone(), actual: subject.clone() };
            b.add(form, Provenance::Local, None);
        }
    }
    Ok(CandidateSet { candidates: b.out })
}
