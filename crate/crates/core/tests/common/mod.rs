//! Shared helpers for integration tests: the ACI fixture format and small
//! workspace/backend builders.
//!
//! A fixture file holds source files followed by expectations:
//!
//! ```text
//! --- file A.java
//! <source>
//! --- functions
//! A.java A.max/2 3-7 method B,C
//! --- scope A.java:5
//! A.java 3-7
//! --- calls A.java 4-6
//! max/2 this A.java:4
//! --- context A.java 5,6
//! A.java 1-1 structural
//! ```
//!
//! `functions` lists every record (`file qualified/arity start-end kind
//! [supertypes]`); `scope` gives the criterion region or `error`; `calls`
//! takes the workspace lines named in the header as the fragment and lists
//! call sites as `name/arity receiver-or-- file:line`; `context` treats the
//! named lines as the slice and lists the regions `module_context` returns.

#![allow(dead_code)]

pub mod oracle;
pub mod props;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use agentslice::workspace::{
    build_index, criterion_scope, extract_invocations, list_project_functions, load_workspace,
    module_context, CodeFragment, ExclusionPolicy, FileEntry, LineRef, SlicingCriterion,
    SyntaxIndex, Workspace,
};

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

#[derive(Debug)]
pub enum Expectation {
    Functions(Vec<String>),
    Scope { file: String, line: usize, expected: String },
    Calls { file: String, lines: Vec<usize>, expected: Vec<String> },
    Context { file: String, lines: Vec<usize>, expected: Vec<String> },
}

#[derive(Debug)]
pub struct AciFixture {
    pub name: String,
    pub files: Vec<(String, String)>,
    pub expectations: Vec<Expectation>,
}

/// `3-7` → [3..=7], `4,6` → [4, 6], `4` → [4], mixed forms allowed.
pub fn parse_lines(spec: &str) -> Vec<usize> {
    let mut out = Vec::new();
    for part in spec.split(',').filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => out.extend(a.parse::<usize>().unwrap()..=b.parse::<usize>().unwrap()),
            None => out.push(part.parse().unwrap()),
        }
    }
    out
}

fn split_at_line(spec: &str) -> (String, usize) {
    let (f, l) = spec.rsplit_once(':').expect("file:line");
    (f.to_string(), l.parse().expect("line number"))
}

pub fn parse_fixture(name: &str, text: &str) -> AciFixture {
    let mut files = Vec::new();
    let mut expectations = Vec::new();
    let mut header: Option<String> = None;
    let mut body: Vec<&str> = Vec::new();
    let mut flush = |header: Option<String>, body: &mut Vec<&str>| {
        let Some(h) = header else {
            assert!(body.iter().all(|l| l.trim().is_empty() || l.starts_with('#')), "{name}: text before first section");
            body.clear();
            return;
        };
        let mut words = h.split_whitespace();
        let kind = words.next().unwrap();
        let rest: Vec<&str> = words.collect();
        let entries = || -> Vec<String> {
            body.iter()
                .map(|l| l.split_whitespace().collect::<Vec<_>>().join(" "))
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .collect()
        };
        match kind {
            "file" => {
                let mut text = body.join("\n");
                text.push('\n');
                files.push((rest[0].to_string(), text));
            }
            "functions" => expectations.push(Expectation::Functions(entries())),
            "scope" => {
                let (file, line) = split_at_line(rest[0]);
                let e = entries();
                assert_eq!(e.len(), 1, "{name}: scope takes one line");
                expectations.push(Expectation::Scope { file, line, expected: e[0].clone() });
            }
            "calls" => expectations.push(Expectation::Calls {
                file: rest[0].to_string(),
                lines: parse_lines(rest[1]),
                expected: entries(),
            }),
            "context" => expectations.push(Expectation::Context {
                file: rest[0].to_string(),
                lines: parse_lines(rest[1]),
                expected: entries(),
            }),
            other => panic!("{name}: unknown section `{other}`"),
        }
        body.clear();
    };
    for line in text.lines() {
        if let Some(h) = line.strip_prefix("--- ") {
            flush(header.take(), &mut body);
            header = Some(h.trim().to_string());
        } else {
            body.push(line);
        }
    }
    flush(header, &mut body);
    AciFixture {
        name: name.to_string(),
        files,
        expectations,
    }
}

/// Every `*.fx` file under `dir`, sorted by name.
pub fn load_fixtures(dir: &Path) -> Vec<AciFixture> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "fx"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy().to_string();
            parse_fixture(&name, &std::fs::read_to_string(p).unwrap())
        })
        .collect()
}

pub fn workspace_of(files: &[(String, String)]) -> Workspace {
    load_workspace(files.iter().map(|(p, t)| FileEntry::new(p.clone(), t.clone())).collect()).unwrap()
}

/// Checks one fixture, returning a description of each disagreement.
pub fn check_fixture(fx: &AciFixture) -> Vec<String> {
    let ws = workspace_of(&fx.files);
    let index = build_index(&ws);
    let mut problems = Vec::new();
    let mut compare = |what: String, mut got: Vec<String>, mut want: Vec<String>, ordered: bool| {
        if !ordered {
            got.sort();
            want.sort();
        }
        if got != want {
            problems.push(format!("{}: {what}\n  expected {want:?}\n  got      {got:?}", fx.name));
        }
    };
    for e in &fx.expectations {
        match e {
            Expectation::Functions(want) => {
                let got = list_project_functions(&index)
                    .iter()
                    .map(|f| {
                        let mut s = format!(
                            "{} {}/{} {} {}",
                            f.file,
                            f.qualified_name,
                            f.arity(),
                            f.body_span,
                            f.kind
                        );
                        if !f.supertypes.is_empty() {
                            s.push(' ');
                            s.push_str(&f.supertypes.join(","));
                        }
                        s
                    })
                    .collect();
                compare("functions".into(), got, want.clone(), false);
            }
            Expectation::Scope { file, line, expected } => {
                let got = SlicingCriterion::new(&ws, file, *line, Vec::new())
                    .map_err(|e| e.to_string())
                    .and_then(|c| criterion_scope(&index, &c).map_err(|e| e.to_string()))
                    .map(|r| format!("{} {}", r.file, r.span))
                    .unwrap_or_else(|_| "error".into());
                compare(format!("scope {file}:{line}"), vec![got], vec![expected.clone()], true);
            }
            Expectation::Calls { file, lines, expected } => {
                let got = calls_of(&ws, &index, file, lines);
                compare(format!("calls {file} {lines:?}"), got, expected.clone(), true);
            }
            Expectation::Context { file, lines, expected } => {
                let slice: Vec<LineRef> = lines.iter().map(|&l| LineRef::new(file.clone(), l)).collect();
                let got = module_context(&ws, &index, &slice)
                    .iter()
                    .map(|r| format!("{} {} {}", r.file, r.span, r.role.as_str()))
                    .collect();
                compare(format!("context {file} {lines:?}"), got, expected.clone(), true);
            }
        }
    }
    problems
}

pub fn calls_of(ws: &Workspace, index: &SyntaxIndex, file: &str, lines: &[usize]) -> Vec<String> {
    let src = ws.file(file).unwrap_or_else(|| panic!("no file {file}"));
    let mut fragment = CodeFragment::new(src.language());
    for &l in lines {
        fragment.push(LineRef::new(file, l), src.line(l).unwrap_or(""));
    }
    extract_invocations(index, &fragment, &ExclusionPolicy::default())
        .iter()
        .map(|c| {
            format!(
                "{}/{} {} {}",
                c.callee_name,
                c.arity,
                c.receiver_hint.as_deref().unwrap_or("-"),
                c.at
            )
        })
        .collect()
}

/// Lines of a workspace file as a set of refs.
pub fn refs(file: &str, lines: &[usize]) -> BTreeSet<LineRef> {
    lines.iter().map(|&l| LineRef::new(file, l)).collect()
}
