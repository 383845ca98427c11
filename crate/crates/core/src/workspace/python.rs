use std::collections::{BTreeMap, BTreeSet};

use tree_sitter::Node;

use super::index::{
    ClassRecord, FileExtract, FunctionKind, FunctionRecord, Param, Span, StructuralDecl,
    StructuralKind, VariableDecl, VariableScope,
};
use super::syntax::{self, children, end_line, field, named_children, start_line, RawCall};

/// Method names treated as in-place mutation of their receiver.
pub(crate) const MUTATORS: &[&str] = &[
    "append", "extend", "insert", "remove", "pop", "clear", "update", "setdefault", "add",
    "discard", "sort", "reverse", "popitem", "appendleft", "extendleft", "popleft",
];

#[derive(Clone, Copy)]
enum Container {
    Module,
    Class(usize),
    Function,
}

struct SelfAttr {
    class: usize,
    in_init: bool,
    name: String,
    span: Span,
}

struct Walker<'a> {
    path: &'a str,
    src: &'a str,
    out: FileExtract,
    chain: Vec<String>,
    class_names: Vec<String>,
    self_attrs: Vec<SelfAttr>,
}

pub(crate) fn extract(path: &str, src: &str, root: Node<'_>) -> FileExtract {
    let mut w = Walker {
        path,
        src,
        out: FileExtract::default(),
        chain: Vec::new(),
        class_names: Vec::new(),
        self_attrs: Vec::new(),
    };
    for child in children(root) {
        w.visit(child, Container::Module, None);
    }
    w.finish_self_attrs();
    w.out
}

impl<'a> Walker<'a> {
    fn text(&self, node: Node<'_>) -> &'a str {
        syntax::text(node, self.src)
    }

    fn qualify(&self, name: &str) -> String {
        let mut parts = self.chain.clone();
        parts.push(name.to_string());
        parts.join(".")
    }

    fn visit(&mut self, node: Node<'_>, container: Container, decorated_from: Option<usize>) {
        match node.kind() {
            "decorated_definition" => {
                let start = start_line(node);
                match field(node, "definition") {
                    Some(def) => self.visit(def, container, Some(start)),
                    None => self.visit_children(node, container),
                }
            }
            "class_definition" => self.class(node, container, decorated_from),
            "function_definition" => self.function(node, container, decorated_from),
            "import_statement" | "import_from_statement" | "future_import_statement" => {
                if !matches!(container, Container::Function) {
                    self.out.structural.push(StructuralDecl {
                        kind: StructuralKind::Import,
                        span: Span::new(start_line(node), end_line(node)),
                    });
                }
            }
            "expression_statement" if !matches!(container, Container::Function) => {
                let span = Span::new(start_line(node), end_line(node));
                for child in named_children(node) {
                    if child.kind() == "assignment" {
                        self.declare_assignment(child, container, span);
                    }
                }
                self.visit_children(node, container);
            }
            _ => self.visit_children(node, container),
        }
    }

    fn visit_children(&mut self, node: Node<'_>, container: Container) {
        for child in children(node) {
            self.visit(child, container, None);
        }
    }

    fn class(&mut self, node: Node<'_>, container: Container, decorated_from: Option<usize>) {
        let Some(name_node) = field(node, "name") else {
            return self.visit_children(node, container);
        };
        let name = self.text(name_node).to_string();
        let supertypes = field(node, "superclasses")
            .map(|args| {
                named_children(args)
                    .into_iter()
                    .filter(|a| matches!(a.kind(), "identifier" | "attribute"))
                    .map(|a| syntax::squash(self.text(a)))
                    .collect()
            })
            .unwrap_or_default();
        let start = decorated_from.unwrap_or_else(|| start_line(node));
        let header_end = children(node)
            .into_iter()
            .find(|c| c.kind() == ":")
            .map(end_line)
            .unwrap_or_else(|| start_line(node));
        let header = Span::new(start_line(node), header_end.max(start_line(node)));
        let idx = self.out.classes.len();
        self.out.classes.push(ClassRecord {
            file: self.path.to_string(),
            qualified_name: self.qualify(&name),
            name: name.clone(),
            supertypes,
            span: Span::new(start, end_line(node).max(start)),
            header,
        });
        self.out.structural.push(StructuralDecl {
            kind: StructuralKind::ClassHeader,
            span: header,
        });
        self.chain.push(name.clone());
        self.class_names.push(name);
        if let Some(body) = field(node, "body") {
            self.visit_children(body, Container::Class(idx));
        }
        self.class_names.pop();
        self.chain.pop();
    }

    fn function(&mut self, node: Node<'_>, container: Container, decorated_from: Option<usize>) {
        let Some(name_node) = field(node, "name") else {
            return self.visit_children(node, container);
        };
        let name = self.text(name_node).to_string();
        let params = field(node, "parameters")
            .map(|p| self.params(p))
            .unwrap_or_default();
        let (kind, supertypes, class) = match container {
            Container::Class(ci) => {
                let kind = if name == "__init__" {
                    FunctionKind::Constructor
                } else {
                    FunctionKind::Method
                };
                (kind, self.out.classes[ci].supertypes.clone(), Some(ci))
            }
            _ => (FunctionKind::Function, Vec::new(), None),
        };
        let start = decorated_from.unwrap_or_else(|| start_line(node));
        let record = FunctionRecord {
            file: self.path.to_string(),
            qualified_name: self.qualify(&name),
            name: name.clone(),
            params,
            supertypes,
            body_span: Span::new(start, end_line(node).max(start)),
            kind,
        };
        let writes = self.analyze_writes(node, &record, class);
        self.out.functions.push((record, writes));
        self.chain.push(name);
        if let Some(body) = field(node, "body") {
            self.visit_children(body, Container::Function);
        }
        self.chain.pop();
    }

    fn params(&self, node: Node<'_>) -> Vec<Param> {
        let mut out = Vec::new();
        for p in named_children(node) {
            let param = match p.kind() {
                "identifier" | "list_splat_pattern" | "dictionary_splat_pattern" => {
                    Param::new(self.text(p), "")
                }
                "typed_parameter" => {
                    let name = named_children(p)
                        .into_iter()
                        .find(|c| {
                            matches!(
                                c.kind(),
                                "identifier" | "list_splat_pattern" | "dictionary_splat_pattern"
                            )
                        })
                        .map(|c| self.text(c))
                        .unwrap_or("");
                    let ty = field(p, "type").map(|t| self.text(t)).unwrap_or("");
                    Param::new(name, syntax::squash(ty))
                }
                "default_parameter" | "typed_default_parameter" => {
                    let name = field(p, "name").map(|n| self.text(n)).unwrap_or("");
                    let ty = field(p, "type").map(|t| self.text(t)).unwrap_or("");
                    Param::new(name, syntax::squash(ty))
                }
                _ => continue,
            };
            out.push(param);
        }
        out
    }

    /// Module- and class-level assignment targets become declarations.
    fn declare_assignment(&mut self, assign: Node<'_>, container: Container, span: Span) {
        let (owner, scope) = match container {
            Container::Class(ci) => (
                Some(self.out.classes[ci].qualified_name.clone()),
                VariableScope::Member,
            ),
            _ => (None, VariableScope::Global),
        };
        let mut names = Vec::new();
        let mut current = Some(assign);
        while let Some(a) = current.filter(|a| a.kind() == "assignment") {
            if let Some(left) = field(a, "left") {
                self.target_names(left, &mut names);
            }
            current = field(a, "right");
        }
        for name in names {
            self.out.variables.push(VariableDecl {
                file: self.path.to_string(),
                name,
                owner: owner.clone(),
                scope,
                span,
            });
        }
    }

    fn target_names(&self, node: Node<'_>, out: &mut Vec<String>) {
        match node.kind() {
            "identifier" => out.push(self.text(node).to_string()),
            "pattern_list" | "tuple_pattern" | "list_pattern" | "tuple" | "list"
            | "parenthesized_expression" | "list_splat_pattern" => {
                for c in named_children(node) {
                    self.target_names(c, out);
                }
            }
            _ => {}
        }
    }

    /// Names this function assigns outside its own locals: declared
    /// `global`/`nonlocal` names, `self.x`/`Class.x` members, and in-place
    /// updates (`g[i] = ..`, `g.append(..)`) of non-local bases.
    fn analyze_writes(
        &mut self,
        func: Node<'_>,
        record: &FunctionRecord,
        class: Option<usize>,
    ) -> BTreeSet<String> {
        let mut globals = BTreeSet::new();
        let mut locals: BTreeSet<String> = record
            .params
            .iter()
            .map(|p| p.name.trim_start_matches('*').to_string())
            .collect();
        let Some(body) = field(func, "body") else {
            return BTreeSet::new();
        };
        let mut nodes = Vec::new();
        collect_own_nodes(body, &mut nodes);
        for n in &nodes {
            match n.kind() {
                "global_statement" | "nonlocal_statement" => {
                    for id in named_children(*n) {
                        if id.kind() == "identifier" {
                            globals.insert(self.text(id).to_string());
                        }
                    }
                }
                "assignment" | "augmented_assignment" | "for_statement" | "for_in_clause" => {
                    if let Some(left) = field(*n, "left") {
                        let mut names = Vec::new();
                        self.target_names(left, &mut names);
                        locals.extend(names);
                    }
                }
                "named_expression" => {
                    if let Some(name) = field(*n, "name") {
                        locals.insert(self.text(name).to_string());
                    }
                }
                "as_pattern_target" => {
                    let mut names = Vec::new();
                    self.target_names(*n, &mut names);
                    for c in named_children(*n) {
                        self.target_names(c, &mut names);
                    }
                    locals.extend(names);
                }
                _ => {}
            }
        }
        for g in &globals {
            locals.remove(g);
        }
        let ctx = WriteCtx {
            globals: &globals,
            locals: &locals,
        };
        let mut writes = BTreeSet::new();
        let in_init = record.name == "__init__";
        for n in &nodes {
            match n.kind() {
                "assignment" | "augmented_assignment" => {
                    if let Some(left) = field(*n, "left") {
                        self.resolve_target(left, &ctx, &mut writes);
                        if let Some(ci) = class {
                            self.note_self_attrs(left, *n, ci, in_init);
                        }
                    }
                }
                "call" => {
                    let callee = field(*n, "function").filter(|f| f.kind() == "attribute");
                    if let Some(attr) = callee {
                        let method = field(attr, "attribute").map(|a| self.text(a));
                        if method.is_some_and(|m| MUTATORS.contains(&m)) {
                            if let Some(obj) = field(attr, "object") {
                                self.resolve_base(obj, &ctx, &mut writes);
                            }
                        }
                    }
                }
                _ => {}
            }
        }
        writes
    }

    fn resolve_target(&self, node: Node<'_>, ctx: &WriteCtx<'_>, out: &mut BTreeSet<String>) {
        match node.kind() {
            "identifier" => {
                let name = self.text(node);
                if ctx.globals.contains(name) {
                    out.insert(name.to_string());
                }
            }
            "attribute" => self.resolve_member(node, out),
            "subscript" => {
                if let Some(v) = field(node, "value") {
                    self.resolve_base(v, ctx, out);
                }
            }
            "pattern_list" | "tuple_pattern" | "list_pattern" | "tuple" | "list"
            | "parenthesized_expression" | "list_splat_pattern" => {
                for c in named_children(node) {
                    self.resolve_target(c, ctx, out);
                }
            }
            _ => {}
        }
    }

    fn resolve_base(&self, node: Node<'_>, ctx: &WriteCtx<'_>, out: &mut BTreeSet<String>) {
        match node.kind() {
            "identifier" => {
                let name = self.text(node);
                if ctx.globals.contains(name) || !ctx.locals.contains(name) {
                    out.insert(name.to_string());
                }
            }
            "attribute" => self.resolve_member(node, out),
            "subscript" => {
                if let Some(v) = field(node, "value") {
                    self.resolve_base(v, ctx, out);
                }
            }
            _ => {}
        }
    }

    fn resolve_member(&self, attr: Node<'_>, out: &mut BTreeSet<String>) {
        let (Some(obj), Some(name)) = (field(attr, "object"), field(attr, "attribute")) else {
            return;
        };
        let obj = self.text(obj);
        if obj == "self" || obj == "cls" || self.class_names.iter().any(|c| c == obj) {
            out.insert(self.text(name).to_string());
        }
    }

    fn note_self_attrs(&mut self, left: Node<'_>, stmt: Node<'_>, class: usize, in_init: bool) {
        let mut attrs = Vec::new();
        collect_self_attrs(left, self.src, &mut attrs);
        if attrs.is_empty() {
            return;
        }
        let stmt = stmt
            .parent()
            .filter(|p| p.kind() == "expression_statement")
            .unwrap_or(stmt);
        let span = Span::new(start_line(stmt), end_line(stmt));
        for name in attrs {
            self.self_attrs.push(SelfAttr {
                class,
                in_init,
                name,
                span,
            });
        }
    }

    /// `self.x` assignments declare members: those in `__init__`, or else the
    /// first assignment in the class.
    fn finish_self_attrs(&mut self) {
        let mut by_key: BTreeMap<(usize, String), Vec<&SelfAttr>> = BTreeMap::new();
        for a in &self.self_attrs {
            by_key.entry((a.class, a.name.clone())).or_default().push(a);
        }
        for ((class, name), attrs) in by_key {
            let chosen: Vec<&SelfAttr> = if attrs.iter().any(|a| a.in_init) {
                attrs.into_iter().filter(|a| a.in_init).collect()
            } else {
                attrs.into_iter().take(1).collect()
            };
            for a in chosen {
                self.out.variables.push(VariableDecl {
                    file: self.path.to_string(),
                    name: name.clone(),
                    owner: Some(self.out.classes[class].qualified_name.clone()),
                    scope: VariableScope::Member,
                    span: a.span,
                });
            }
        }
        self.out
            .variables
            .sort_by(|a, b| (a.span, &a.name).cmp(&(b.span, &b.name)));
    }
}

struct WriteCtx<'s> {
    globals: &'s BTreeSet<String>,
    locals: &'s BTreeSet<String>,
}

fn collect_self_attrs(node: Node<'_>, src: &str, out: &mut Vec<String>) {
    match node.kind() {
        "attribute" => {
            let obj = field(node, "object").map(|o| syntax::text(o, src));
            if obj == Some("self") {
                if let Some(a) = field(node, "attribute") {
                    out.push(syntax::text(a, src).to_string());
                }
            }
        }
        "pattern_list" | "tuple_pattern" | "list_pattern" | "tuple" | "list" => {
            for c in named_children(node) {
                collect_self_attrs(c, src, out);
            }
        }
        _ => {}
    }
}

/// Descendants of `node` that belong to this function, not to nested
/// functions, classes or lambdas.
fn collect_own_nodes<'t>(node: Node<'t>, out: &mut Vec<Node<'t>>) {
    for child in children(node) {
        match child.kind() {
            "function_definition" | "class_definition" | "lambda" | "decorated_definition" => {}
            _ => {
                out.push(child);
                collect_own_nodes(child, out);
            }
        }
    }
}

/// Every call expression under `root`, in source order.
pub(crate) fn collect_calls(root: Node<'_>, src: &str, out: &mut Vec<RawCall>) {
    if root.kind() == "call" {
        if let Some(call) = call_site(root, src) {
            out.push(call);
        }
    }
    for child in children(root) {
        collect_calls(child, src, out);
    }
}

fn call_site(node: Node<'_>, src: &str) -> Option<RawCall> {
    let function = field(node, "function")?;
    let (name, receiver) = match function.kind() {
        "identifier" => (syntax::text(function, src).to_string(), None),
        "attribute" => {
            let attr = field(function, "attribute")?;
            let receiver = field(function, "object")
                .and_then(|o| syntax::receiver_chain(syntax::text(o, src)));
            (syntax::text(attr, src).to_string(), receiver)
        }
        _ => return None,
    };
    let arity = match field(node, "arguments") {
        Some(args) if args.kind() == "argument_list" => syntax::arity(args),
        Some(_) => 1,
        None => 0,
    };
    Some(RawCall {
        name,
        receiver,
        arity,
        row: node.start_position().row,
        byte: node.start_byte(),
    })
}
