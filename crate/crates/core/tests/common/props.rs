//! Randomized checks shared by the property tests and the acceptance run.
//! Each `check_*` returns a description of the first disagreement.

use std::collections::{BTreeMap, BTreeSet};

use agentslice::eval::{
    ratio_metrics, score_instance, BenchmarkFile, BenchmarkInstance, FileLineSet, SourceTag,
};
use agentslice::protocol::{parse_slice_response, render_slice_answer, FileLines, SearchScope};
use agentslice::slice::{align_text_to_slice, merge_slices, strip_whitespace, CriterionRef, Slice};
use agentslice::workspace::{
    CodeRegion, Language, LineRef, RegionRole, SlicingCriterion, Span, Workspace,
};
use proptest::prelude::*;

// ---------- metrics ----------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineKind {
    Statement,
    Blank,
    Comment,
    Brace,
}

#[derive(Debug, Clone)]
pub struct MetricsCase {
    pub kinds: Vec<LineKind>,
    pub truth: Vec<bool>,
    pub predicted: Vec<bool>,
}

pub fn metrics_case() -> impl Strategy<Value = MetricsCase> {
    let kind = prop_oneof![
        6 => Just(LineKind::Statement),
        1 => Just(LineKind::Blank),
        1 => Just(LineKind::Comment),
        2 => Just(LineKind::Brace),
    ];
    (1usize..=200)
        .prop_flat_map(move |n| {
            (
                proptest::collection::vec(kind.clone(), n),
                proptest::collection::vec(any::<bool>(), n),
                proptest::collection::vec(any::<bool>(), n),
            )
        })
        .prop_map(|(kinds, truth, predicted)| MetricsCase { kinds, truth, predicted })
        .prop_filter("truth needs a statement", |c| {
            c.kinds.iter().zip(&c.truth).any(|(k, t)| *t && *k == LineKind::Statement)
        })
}

fn metrics_instance(c: &MetricsCase) -> BenchmarkInstance {
    let mut text = String::new();
    for (i, k) in c.kinds.iter().enumerate() {
        match k {
            LineKind::Statement => text.push_str(&format!("int v{i} = {i};")),
            LineKind::Blank => {}
            LineKind::Comment => text.push_str(&format!("// note {i}")),
            LineKind::Brace => text.push('}'),
        }
        text.push('\n');
    }
    let truth: Vec<usize> = (1..=c.kinds.len()).filter(|l| c.truth[l - 1]).collect();
    let criterion = *truth.first().unwrap();
    BenchmarkInstance {
        id: "random".into(),
        language: Language::Java,
        files: vec![BenchmarkFile {
            path: "R.java".into(),
            content: text,
        }],
        criterion: CriterionRef {
            file: "R.java".into(),
            line: criterion,
            variables: Vec::new(),
        },
        ground_truth: vec![FileLineSet {
            file: "R.java".into(),
            lines: truth,
        }],
        source_tag: SourceTag::Codenet,
        buggy_lines: None,
    }
}

/// Compares `score_instance` with a line-by-line count over the kinds the
/// case was generated from.
pub fn check_metrics(c: &MetricsCase) -> Result<(), String> {
    let inst = metrics_instance(c);
    let predicted: BTreeSet<LineRef> = (1..=c.kinds.len())
        .filter(|l| c.predicted[l - 1])
        .map(|l| LineRef::new("R.java", l))
        .collect();
    let (row, counts) = score_instance(&predicted, &inst);

    let (mut tp, mut fp, mut fneg, mut tn) = (0usize, 0usize, 0usize, 0usize);
    let mut exact = true;
    for i in 0..c.kinds.len() {
        if c.kinds[i] != LineKind::Statement {
            continue;
        }
        match (c.predicted[i], c.truth[i]) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => tn += 1,
        }
        exact &= c.predicted[i] == c.truth[i];
    }
    let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let r = tp as f64 / (tp + fneg) as f64;
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    let total = tp + fp + fneg + tn;
    let acc = (tp + tn) as f64 / total as f64;

    let got = (counts.tp, counts.fp, counts.fn_, counts.tn);
    if got != (tp, fp, fneg, tn) {
        return Err(format!("counts {got:?}, expected {:?}", (tp, fp, fneg, tn)));
    }
    let want = (p, r, f1, acc, exact);
    let have = (row.precision, row.recall, row.f1, row.accuracy, row.exact_match);
    if have != want {
        return Err(format!("metrics {have:?}, expected {want:?}"));
    }
    if ((row.accuracy * total as f64) - (tp + tn) as f64).abs() > 1e-9 {
        return Err("accuracy * |U| != tp + tn".into());
    }
    if row.exact_match && (row.precision, row.recall, row.f1, row.accuracy) != (1.0, 1.0, 1.0, 1.0) {
        return Err("exact match without perfect scores".into());
    }
    Ok(())
}

// ---------- ratios ----------

pub type RatioCase = Vec<(BTreeSet<usize>, BTreeSet<usize>)>;

pub fn ratio_case() -> impl Strategy<Value = RatioCase> {
    let lines = || proptest::collection::btree_set(1usize..40, 0..12);
    let buggy = proptest::collection::btree_set(1usize..40, 1..4);
    proptest::collection::vec((lines(), buggy), 1..30)
}

pub fn check_ratio(case: &RatioCase) -> Result<(), String> {
    let to_refs = |s: &BTreeSet<usize>| s.iter().map(|&l| LineRef::new("a.py", l)).collect::<BTreeSet<_>>();
    let input: Vec<_> = case.iter().map(|(s, b)| (to_refs(s), to_refs(b))).collect();
    let (r1, rall) = ratio_metrics(&input).map_err(|e| e.to_string())?;
    let mut one = 0;
    let mut all = 0;
    for (slice, buggy) in case {
        let hits = buggy.iter().filter(|b| slice.contains(b)).count();
        if hits >= 1 {
            one += 1;
        }
        if hits == buggy.len() {
            all += 1;
        }
    }
    let n = case.len() as f64;
    if (r1, rall) != (one as f64 / n, all as f64 / n) {
        return Err(format!("ratios ({r1}, {rall}), expected ({}, {})", one as f64 / n, all as f64 / n));
    }
    if rall > r1 {
        return Err("ratio_all above ratio_1".into());
    }
    Ok(())
}

// ---------- alignment ----------

pub const FUZZ_PY: &str = "\
import os

TOTAL = 0

def scan(root, limit):
    found = []
    for name in os.listdir(root):
        if name.endswith('.txt') and len(found) < limit:
            found.append(os.path.join(root, name))
    return found

def main():
    files = scan('.', 10)
    count = len(files)
    print('count:', count)
";

/// The running-max Java program plus a small Python module.
pub fn fuzz_workspace(java: &str) -> Workspace {
    agentslice::workspace::load_workspace(vec![
        agentslice::workspace::FileEntry::new("Main.java", java),
        agentslice::workspace::FileEntry::new("scan.py", FUZZ_PY),
    ])
    .unwrap()
}

/// Workspace lines whose whitespace-free text occurs once in the workspace.
pub fn unique_lines(ws: &Workspace) -> Vec<LineRef> {
    let mut seen: BTreeMap<String, Vec<LineRef>> = BTreeMap::new();
    for f in ws.files() {
        for (n, text) in f.lines() {
            let key = strip_whitespace(text);
            if !key.is_empty() {
                seen.entry(key).or_default().push(LineRef::new(f.path(), n));
            }
        }
    }
    let mut out: Vec<LineRef> = seen.into_values().filter(|v| v.len() == 1).flatten().collect();
    out.sort();
    out
}

const INDENTS: [&str; 5] = ["", "  ", "\t", "        ", " \t  "];
const GAPS: [&str; 5] = [" ", "  ", "\t", " \t ", ""];
const TAILS: [&str; 4] = ["", " ", "\t", "   "];

/// Rewrites the whitespace of `text` only, driven by `choices`.
pub fn mutate(text: &str, choices: &[u8]) -> String {
    let mut k = 0usize;
    let mut pick = |n: usize| {
        let c = choices[k % choices.len()] as usize;
        k += 1;
        c % n
    };
    let mut out = INDENTS[pick(INDENTS.len())].to_string();
    for (i, tok) in text.split_whitespace().enumerate() {
        if i > 0 {
            out.push_str(GAPS[pick(GAPS.len())]);
        }
        out.push_str(tok);
    }
    out.push_str(TAILS[pick(TAILS.len())]);
    out
}

#[derive(Debug, Clone)]
pub struct AlignCase {
    pub picks: Vec<bool>,
    pub choices: Vec<u8>,
}

pub fn align_case(unique: usize) -> impl Strategy<Value = AlignCase> {
    (
        proptest::collection::vec(any::<bool>(), unique),
        proptest::collection::vec(any::<u8>(), 1..64),
    )
        .prop_map(|(picks, choices)| AlignCase { picks, choices })
}

pub struct AlignFixture {
    pub ws: Workspace,
    pub unique: Vec<LineRef>,
    pub criterion: SlicingCriterion,
    pub scope: SearchScope,
}

impl AlignFixture {
    pub fn new(java: &str, criterion_line: usize) -> Self {
        let ws = fuzz_workspace(java);
        let unique = unique_lines(&ws);
        let criterion = SlicingCriterion::new(&ws, "Main.java", criterion_line, Vec::new()).unwrap();
        let mut scope = SearchScope::default();
        for f in ws.files() {
            scope.add(CodeRegion::new(f.path(), Span::new(1, f.line_count()), RegionRole::FunctionBody));
        }
        Self {
            ws,
            unique,
            criterion,
            scope,
        }
    }

    /// Renders the picked lines with mutated whitespace, parses the reply
    /// and aligns it; the result must be exactly the picked lines plus the
    /// criterion.
    pub fn check(&self, case: &AlignCase) -> Result<(), String> {
        let chosen: Vec<&LineRef> = self.unique.iter().zip(&case.picks).filter(|(_, p)| **p).map(|(l, _)| l).collect();
        let mut files: Vec<FileLines> = Vec::new();
        for (i, at) in chosen.iter().enumerate() {
            let text = self.ws.line_text(&at.file, at.line).unwrap();
            let mutated = mutate(text, &case.choices[i % case.choices.len()..]);
            match files.iter_mut().find(|f| f.file == at.file) {
                Some(f) => f.lines.push(mutated),
                None => files.push(FileLines {
                    file: at.file.clone(),
                    lines: vec![mutated],
                }),
            }
        }
        let mut expected: BTreeSet<LineRef> = chosen.into_iter().cloned().collect();
        expected.insert(self.criterion.line_ref());
        let raw = parse_slice_response(&render_slice_answer(&files)).map_err(|e| e.to_string())?;
        let (slice, report) = align_text_to_slice(&raw, &self.ws, &self.scope, None, &self.criterion)
            .map_err(|e| e.to_string())?;
        let got: BTreeSet<LineRef> = slice.line_refs().into_iter().collect();
        if got != expected {
            return Err(format!("aligned {got:?}, expected {expected:?}"));
        }
        if !report.hallucinated.is_empty() {
            return Err(format!("hallucinated {:?}", report.hallucinated));
        }
        slice.validate(&self.ws).map_err(|e| e.to_string())
    }
}

// ---------- merge ----------

pub fn slice_of(ws: &Workspace, c: &SlicingCriterion, all: &[LineRef], picks: &[bool]) -> Slice {
    let chosen: Vec<&LineRef> = all.iter().zip(picks).filter(|(_, p)| **p).map(|(l, _)| l).collect();
    Slice::from_lines(ws, c.clone(), chosen).unwrap()
}

pub fn check_merge_laws(a: &Slice, b: &Slice, c: &Slice, empty: &Slice) -> Result<(), String> {
    let m = |x: &Slice, y: &Slice| merge_slices(x, y).map_err(|e| e.to_string());
    if m(a, b)? != m(b, a)? {
        return Err("not commutative".into());
    }
    if m(&m(a, b)?, c)? != m(a, &m(b, c)?)? {
        return Err("not associative".into());
    }
    if m(a, a)? != *a {
        return Err("not idempotent".into());
    }
    if m(a, empty)? != *a {
        return Err("criterion-only slice is not an identity".into());
    }
    let union: BTreeSet<LineRef> = a.line_refs().into_iter().chain(b.line_refs()).collect();
    let merged: BTreeSet<LineRef> = m(a, b)?.line_refs().into_iter().collect();
    if union != merged {
        return Err("merge is not the union".into());
    }
    Ok(())
}
