//! A small line-level lexer: identifiers outside strings and comments, and
//! comment-only line detection. It never needs a full parse, so it works on
//! fragments and broken code alike.

use super::Language;

/// Callees that are never treated as project invocations in Java.
pub const JAVA_ALWAYS_EXCLUDED: &[&str] =
    &["println", "print", "printf", "format", "valueOf", "toString"];

/// Python built-in functions (3.12).
pub const PYTHON_BUILTINS: &[&str] = &[
    "__import__", "abs", "aiter", "all", "anext", "any", "ascii", "bin", "bool", "breakpoint",
    "bytearray", "bytes", "callable", "chr", "classmethod", "compile", "complex", "delattr",
    "dict", "dir", "divmod", "enumerate", "eval", "exec", "filter", "float", "format",
    "frozenset", "getattr", "globals", "hasattr", "hash", "help", "hex", "id", "input", "int",
    "isinstance", "issubclass", "iter", "len", "list", "locals", "map", "max", "memoryview",
    "min", "next", "object", "oct", "open", "ord", "pow", "print", "property", "range", "repr",
    "reversed", "round", "set", "setattr", "slice", "sorted", "staticmethod", "str", "sum",
    "super", "tuple", "type", "vars", "zip",
];

const PYTHON_KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class",
    "continue", "def", "del", "elif", "else", "except", "finally", "for", "from", "global", "if",
    "import", "in", "is", "lambda", "nonlocal", "not", "or", "pass", "raise", "return", "try",
    "while", "with", "yield", "self", "cls",
];

const JAVA_KEYWORDS: &[&str] = &[
    "abstract", "assert", "boolean", "break", "byte", "case", "catch", "char", "class", "const",
    "continue", "default", "do", "double", "else", "enum", "extends", "final", "finally", "float",
    "for", "goto", "if", "implements", "import", "instanceof", "int", "interface", "long",
    "native", "new", "package", "private", "protected", "public", "return", "short", "static",
    "strictfp", "super", "switch", "synchronized", "this", "throw", "throws", "transient", "try",
    "void", "volatile", "while", "var", "record", "yield", "true", "false", "null",
];

/// `java.lang` names and stream handles that are never slicing variables.
const JAVA_BUILTIN_NAMES: &[&str] = &[
    "System", "out", "err", "in", "String", "Math", "Integer", "Long", "Double", "Float",
    "Boolean", "Character", "Byte", "Short", "Object", "StringBuilder", "Arrays", "Collections",
    "Objects", "assertEquals", "assertTrue", "assertFalse", "assertNull", "assertNotNull",
    "assertSame", "assertThat", "fail",
];

/// Python `unittest`/`pytest` helpers treated like built-ins for criterion variables.
const PYTHON_ASSERT_HELPERS: &[&str] = &[
    "assertEqual", "assertTrue", "assertFalse", "assertIsNone", "assertIsNotNone", "assertIn",
    "assertRaises", "assertAlmostEqual", "assert_equal",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token<'a> {
    pub text: &'a str,
    /// Next non-space character is `(`.
    pub is_call: bool,
    /// Previous non-space character is `.`.
    pub after_dot: bool,
}

/// Identifiers in `line`, skipping string literals and trailing comments.
pub fn identifiers(line: &str, language: Language) -> Vec<Token<'_>> {
    let bytes = line.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b'#' if language == Language::Python => break,
            b'/' if language == Language::Java && bytes.get(i + 1) == Some(&b'/') => break,
            b'/' if language == Language::Java && bytes.get(i + 1) == Some(&b'*') => {
                match line[i + 2..].find("*/") {
                    Some(end) => i += end + 4,
                    None => break,
                }
            }
            b'"' | b'\'' => i = skip_string(bytes, i),
            c if is_ident_start(c) => {
                let start = i;
                while i < bytes.len() && is_ident_continue(bytes[i]) {
                    i += 1;
                }
                let text = &line[start..i];
                // string prefixes such as f"..." or rb'...'
                if language == Language::Python
                    && matches!(bytes.get(i), Some(b'"') | Some(b'\''))
                    && text.len() <= 2
                    && text.chars().all(|c| "rRbBfFuU".contains(c))
                {
                    i = skip_string(bytes, i);
                    continue;
                }
                let is_call = line[i..].trim_start().starts_with('(');
                let after_dot = line[..start].trim_end().ends_with('.');
                out.push(Token {
                    text,
                    is_call,
                    after_dot,
                });
            }
            c if c.is_ascii_digit() => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'.') {
                    i += 1;
                }
            }
            _ => i += 1,
        }
    }
    out
}

/// Variables named by a criterion statement: identifiers minus keywords,
/// built-ins, assertion helpers and call targets, deduplicated in order of
/// appearance.
pub fn criterion_variables(line: &str, language: Language) -> Vec<String> {
    let mut seen = Vec::<String>::new();
    for tok in identifiers(line, language) {
        if tok.is_call || is_keyword(tok.text, language) || is_builtin_name(tok.text, language) {
            continue;
        }
        if !seen.iter().any(|s| s == tok.text) {
            seen.push(tok.text.to_string());
        }
    }
    seen
}

pub fn is_keyword(word: &str, language: Language) -> bool {
    match language {
        Language::Java => JAVA_KEYWORDS.contains(&word),
        Language::Python => PYTHON_KEYWORDS.contains(&word),
    }
}

pub fn is_builtin_name(word: &str, language: Language) -> bool {
    match language {
        Language::Java => JAVA_BUILTIN_NAMES.contains(&word) || JAVA_ALWAYS_EXCLUDED.contains(&word),
        Language::Python => PYTHON_BUILTINS.contains(&word) || PYTHON_ASSERT_HELPERS.contains(&word),
    }
}

/// For each line of `text` (1-based index `i` maps to `result[i - 1]`),
/// whether it contains nothing but comments and whitespace. Blank lines are
/// not comment-only.
pub fn comment_only_lines(text: &str, language: Language) -> Vec<bool> {
    match language {
        Language::Python => text
            .split('\n')
            .map(|l| l.trim_start().starts_with('#'))
            .collect(),
        Language::Java => java_comment_only(text),
    }
}

fn java_comment_only(text: &str) -> Vec<bool> {
    let mut out = Vec::new();
    let mut in_block = false;
    for line in text.split('\n') {
        let bytes = line.as_bytes();
        let mut has_code = false;
        let mut has_comment = in_block;
        let mut i = 0;
        while i < bytes.len() {
            if in_block {
                match line[i..].find("*/") {
                    Some(end) => {
                        i += end + 2;
                        in_block = false;
                    }
                    None => break,
                }
                continue;
            }
            match bytes[i] {
                b'/' if bytes.get(i + 1) == Some(&b'/') => {
                    has_comment = true;
                    break;
                }
                b'/' if bytes.get(i + 1) == Some(&b'*') => {
                    has_comment = true;
                    in_block = true;
                    i += 2;
                }
                b'"' | b'\'' => {
                    has_code = true;
                    i = skip_string(bytes, i);
                }
                c if c.is_ascii_whitespace() => i += 1,
                _ => {
                    has_code = true;
                    i += 1;
                }
            }
        }
        out.push(has_comment && !has_code);
    }
    out
}

fn is_ident_start(c: u8) -> bool {
    c.is_ascii_alphabetic() || c == b'_' || c == b'$' || c >= 0x80
}

fn is_ident_continue(c: u8) -> bool {
    is_ident_start(c) || c.is_ascii_digit()
}

/// Index just past the string literal starting at `start`; unterminated
/// strings run to the end of the line.
fn skip_string(bytes: &[u8], start: usize) -> usize {
    let quote = bytes[start];
    let triple = bytes.len() >= start + 3 && bytes[start + 1] == quote && bytes[start + 2] == quote;
    let mut i = start + if triple { 3 } else { 1 };
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => i += 2,
            q if q == quote => {
                if !triple {
                    return i + 1;
                }
                if bytes.len() >= i + 3 && bytes[i + 1] == quote && bytes[i + 2] == quote {
                    return i + 3;
                }
                i += 1;
            }
            _ => i += 1,
        }
    }
    bytes.len()
}
