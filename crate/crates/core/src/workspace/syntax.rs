//! Thin helpers over tree-sitter. Nothing outside the extractors sees a tree.

use tree_sitter::{Node, Parser, Tree};

use super::Language;

pub(crate) fn parse(language: Language, text: &str) -> Tree {
    let mut parser = Parser::new();
    let grammar: tree_sitter::Language = match language {
        Language::Java => tree_sitter_java::LANGUAGE.into(),
        Language::Python => tree_sitter_python::LANGUAGE.into(),
    };
    parser
        .set_language(&grammar)
        .expect("bundled grammar matches the tree-sitter ABI");
    // Only fails on cancellation or timeout, neither of which is configured.
    parser.parse(text, None).expect("parse without timeout")
}

/// Python source with the top-level chunks that hold syntax errors blanked
/// out, byte for byte, so that error recovery cannot swallow the definitions
/// that follow them. Returns `None` when there is nothing to blank.
pub(crate) fn mask_broken_chunks(text: &str) -> Option<String> {
    let mut masked = text.to_string();
    let mut changed = false;
    for _ in 0..16 {
        let tree = parse(Language::Python, &masked);
        let Some(row) = first_error_row(tree.root_node()) else {
            break;
        };
        let starts: Vec<(usize, usize)> = line_offsets(&masked)
            .into_iter()
            .enumerate()
            .filter(|(_, off)| {
                masked[*off..]
                    .chars()
                    .next()
                    .is_some_and(|c| !c.is_whitespace() && c != '#' && !")]}".contains(c))
            })
            .collect();
        let Some(&(first, from)) = starts.iter().rev().find(|(r, _)| *r <= row) else {
            break;
        };
        let to = starts
            .iter()
            .find(|(r, _)| *r > first)
            .map_or(masked.len(), |&(_, off)| off);
        if masked[from..to].chars().all(char::is_whitespace) {
            break;
        }
        // Multi-byte characters become several spaces so offsets stay put.
        let blank: String = masked[from..to]
            .chars()
            .map(|c| if c == '\n' { "\n".to_string() } else { " ".repeat(c.len_utf8()) })
            .collect();
        masked.replace_range(from..to, &blank);
        changed = true;
    }
    changed.then_some(masked)
}

fn line_offsets(text: &str) -> Vec<usize> {
    std::iter::once(0)
        .chain(text.match_indices('\n').map(|(i, _)| i + 1))
        .filter(|&i| i < text.len())
        .collect()
}

fn first_error_row(root: Node<'_>) -> Option<usize> {
    if !root.has_error() {
        return None;
    }
    let mut cursor = root.walk();
    let mut best: Option<usize> = None;
    let mut stack = vec![root];
    while let Some(node) = stack.pop() {
        if node.is_error() || node.is_missing() {
            let row = node.start_position().row;
            best = Some(best.map_or(row, |b| b.min(row)));
            continue;
        }
        if node.has_error() {
            stack.extend(node.children(&mut cursor));
        }
    }
    best
}

pub(crate) fn text<'a>(node: Node<'_>, src: &'a str) -> &'a str {
    &src[node.byte_range()]
}

/// 1-based first line of a node.
pub(crate) fn start_line(node: Node<'_>) -> usize {
    node.start_position().row + 1
}

/// 1-based last line of a node; a node ending at column 0 ends on the
/// previous line.
pub(crate) fn end_line(node: Node<'_>) -> usize {
    let start = node.start_position();
    let end = node.end_position();
    if end.column == 0 && end.row > start.row {
        end.row
    } else {
        end.row + 1
    }
}

pub(crate) fn field<'t>(node: Node<'t>, name: &str) -> Option<Node<'t>> {
    node.child_by_field_name(name)
}

pub(crate) fn named_children(node: Node<'_>) -> Vec<Node<'_>> {
    let mut cursor = node.walk();
    node.named_children(&mut cursor).collect()
}

pub(crate) fn children(node: Node<'_>) -> Vec<Node<'_>> {
    let mut cursor = node.walk();
    node.children(&mut cursor).collect()
}

pub(crate) fn is_comment(node: Node<'_>) -> bool {
    matches!(node.kind(), "comment" | "line_comment" | "block_comment")
}

/// Number of arguments in an argument list, ignoring comments.
pub(crate) fn arity(args: Node<'_>) -> usize {
    named_children(args)
        .into_iter()
        .filter(|n| !is_comment(*n))
        .count()
}

/// Collapses runs of whitespace to single spaces.
pub(crate) fn squash(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// `a.b.c`-style chains (including `this`/`self`/`super`) are kept as receiver
/// hints; anything more complex is dropped.
pub(crate) fn receiver_chain(s: &str) -> Option<String> {
    let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    let ok = !compact.is_empty()
        && compact.split('.').all(|seg| {
            !seg.is_empty()
                && seg
                    .chars()
                    .next()
                    .is_some_and(|c| c.is_alphabetic() || c == '_' || c == '$')
                && seg.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '$')
        });
    ok.then_some(compact)
}

/// Strips generic arguments: `Map<K, V>` becomes `Map`.
pub(crate) fn base_type_name(s: &str) -> String {
    let s = s.split('<').next().unwrap_or(s);
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

/// Raw call found in a parse, before exclusion filtering.
#[derive(Debug, Clone)]
pub(crate) struct RawCall {
    pub name: String,
    pub receiver: Option<String>,
    pub arity: usize,
    pub row: usize,
    pub byte: usize,
}
