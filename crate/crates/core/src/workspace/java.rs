use std::collections::{BTreeSet, HashMap};

use tree_sitter::Node;

use super::index::{
    ClassRecord, FileExtract, FunctionKind, FunctionRecord, Param, Span, StructuralDecl,
    StructuralKind, VariableDecl, VariableScope,
};
use super::syntax::{self, children, end_line, field, named_children, start_line, RawCall};

/// Method names treated as in-place mutation of their receiver.
pub(crate) const MUTATORS: &[&str] = &[
    "add", "addAll", "addFirst", "addLast", "append", "clear", "compute", "computeIfAbsent",
    "computeIfPresent", "insert", "merge", "offer", "offerFirst", "offerLast", "poll",
    "pollFirst", "pollLast", "pop", "push", "put", "putAll", "putIfAbsent", "remove",
    "removeAll", "removeFirst", "removeIf", "removeLast", "replaceAll", "retainAll", "set",
    "setLength", "sort", "delete", "deleteCharAt", "reverse",
];

const CLASS_KINDS: &[&str] = &[
    "class_declaration",
    "interface_declaration",
    "enum_declaration",
    "record_declaration",
    "annotation_type_declaration",
];

struct Walker<'a> {
    path: &'a str,
    src: &'a str,
    out: FileExtract,
    chain: Vec<String>,
    /// Supertypes of each open type scope; anonymous classes included.
    type_stack: Vec<(String, Vec<String>)>,
    used_names: HashMap<String, usize>,
}

pub(crate) fn extract(path: &str, src: &str, root: Node<'_>) -> FileExtract {
    let mut w = Walker {
        path,
        src,
        out: FileExtract::default(),
        chain: Vec::new(),
        type_stack: Vec::new(),
        used_names: HashMap::new(),
    };
    w.visit(root);
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

    fn visit(&mut self, node: Node<'_>) {
        let kind = node.kind();
        match kind {
            "package_declaration" => self.structural(node, StructuralKind::Package),
            "import_declaration" => self.structural(node, StructuralKind::Import),
            k if CLASS_KINDS.contains(&k) => self.class(node),
            "method_declaration" | "constructor_declaration" | "compact_constructor_declaration" => {
                self.method(node)
            }
            "lambda_expression" => self.lambda(node),
            "object_creation_expression" => self.creation(node),
            "field_declaration" | "constant_declaration" => {
                self.fields(node);
                self.visit_children(node);
            }
            _ => self.visit_children(node),
        }
    }

    fn visit_children(&mut self, node: Node<'_>) {
        for child in children(node) {
            self.visit(child);
        }
    }

    fn structural(&mut self, node: Node<'_>, kind: StructuralKind) {
        self.out.structural.push(StructuralDecl {
            kind,
            span: Span::new(start_line(node), end_line(node)),
        });
    }

    fn class(&mut self, node: Node<'_>) {
        let Some(name_node) = field(node, "name") else {
            return self.visit_children(node);
        };
        let name = self.text(name_node).to_string();
        let mut supertypes = Vec::new();
        for child in named_children(node) {
            match child.kind() {
                "superclass" | "super_interfaces" | "extends_interfaces" => {
                    self.type_names(child, &mut supertypes)
                }
                _ => {}
            }
        }
        let body = field(node, "body");
        let start = start_line(node);
        let header_end = body.map(start_line).unwrap_or(start).max(start);
        let header = Span::new(start, header_end);
        self.out.classes.push(ClassRecord {
            file: self.path.to_string(),
            qualified_name: self.qualify(&name),
            name: name.clone(),
            supertypes: supertypes.clone(),
            span: Span::new(start, end_line(node).max(start)),
            header,
        });
        self.out.structural.push(StructuralDecl {
            kind: StructuralKind::ClassHeader,
            span: header,
        });
        if node.kind() == "record_declaration" {
            // record components become members
            if let Some(params) = field(node, "parameters") {
                for p in named_children(params) {
                    if let Some(n) = field(p, "name") {
                        self.out.variables.push(VariableDecl {
                            file: self.path.to_string(),
                            name: self.text(n).to_string(),
                            owner: Some(self.qualify(&name)),
                            scope: VariableScope::Member,
                            span: Span::new(start_line(p), end_line(p)),
                        });
                    }
                }
            }
        }
        self.chain.push(name.clone());
        self.type_stack.push((name, supertypes));
        if let Some(body) = body {
            self.visit_children(body);
        }
        self.type_stack.pop();
        self.chain.pop();
    }

    fn type_names(&self, node: Node<'_>, out: &mut Vec<String>) {
        for child in named_children(node) {
            match child.kind() {
                "type_list" => self.type_names(child, out),
                "type_identifier" | "scoped_type_identifier" | "generic_type" => {
                    out.push(syntax::base_type_name(self.text(child)))
                }
                _ => {}
            }
        }
    }

    fn creation(&mut self, node: Node<'_>) {
        let body = named_children(node)
            .into_iter()
            .find(|c| c.kind() == "class_body");
        let Some(body) = body else {
            return self.visit_children(node);
        };
        for child in children(node) {
            if child.id() != body.id() {
                self.visit(child);
            }
        }
        let ty = field(node, "type")
            .map(|t| syntax::base_type_name(self.text(t)))
            .unwrap_or_default();
        let name = self.unique(format!("anon@{}", start_line(node)));
        self.chain.push(name.clone());
        self.type_stack.push((name, vec![ty]));
        self.visit_children(body);
        self.type_stack.pop();
        self.chain.pop();
    }

    fn unique(&mut self, base: String) -> String {
        let key = self.qualify(&base);
        let n = self.used_names.entry(key).or_insert(0);
        *n += 1;
        if *n == 1 {
            base
        } else {
            format!("{base}#{n}")
        }
    }

    fn method(&mut self, node: Node<'_>) {
        let Some(name_node) = field(node, "name") else {
            return self.visit_children(node);
        };
        let name = self.text(name_node).to_string();
        let params = field(node, "parameters")
            .map(|p| self.formal_params(p))
            .unwrap_or_default();
        let kind = if node.kind() == "method_declaration" {
            FunctionKind::Method
        } else {
            FunctionKind::Constructor
        };
        let supertypes = self
            .type_stack
            .last()
            .map(|(_, s)| s.clone())
            .unwrap_or_default();
        self.push_function(node, name, params, supertypes, kind);
    }

    fn lambda(&mut self, node: Node<'_>) {
        let mut params = Vec::new();
        if let Some(p) = field(node, "parameters") {
            match p.kind() {
                "identifier" => params.push(Param::new(self.text(p), "")),
                "formal_parameters" => params = self.formal_params(p),
                _ => {
                    for c in named_children(p) {
                        if c.kind() == "identifier" {
                            params.push(Param::new(self.text(c), ""));
                        } else if let Some(n) = field(c, "name") {
                            params.push(Param::new(self.text(n), ""));
                        }
                    }
                }
            }
        }
        let name = self.unique(format!("lambda@{}", start_line(node)));
        self.push_function(node, name, params, Vec::new(), FunctionKind::Function);
    }

    fn push_function(
        &mut self,
        node: Node<'_>,
        name: String,
        params: Vec<Param>,
        supertypes: Vec<String>,
        kind: FunctionKind,
    ) {
        let start = start_line(node);
        let record = FunctionRecord {
            file: self.path.to_string(),
            qualified_name: self.qualify(&name),
            name: name.clone(),
            params,
            supertypes,
            body_span: Span::new(start, end_line(node).max(start)),
            kind,
        };
        let writes = self.analyze_writes(node, &record);
        self.out.functions.push((record, writes));
        self.chain.push(name);
        if let Some(body) = field(node, "body") {
            self.visit(body);
        }
        self.chain.pop();
    }

    fn formal_params(&self, node: Node<'_>) -> Vec<Param> {
        let mut out = Vec::new();
        for p in named_children(node) {
            match p.kind() {
                "formal_parameter" => {
                    let name = field(p, "name").map(|n| self.text(n)).unwrap_or("");
                    let mut ty = field(p, "type")
                        .map(|t| syntax::squash(self.text(t)))
                        .unwrap_or_default();
                    if let Some(d) = field(p, "dimensions") {
                        ty.push_str(&syntax::squash(self.text(d)));
                    }
                    out.push(Param::new(name, ty));
                }
                "spread_parameter" => {
                    let ty = named_children(p)
                        .into_iter()
                        .find(|c| c.kind().ends_with("type") || c.kind() == "type_identifier")
                        .map(|t| syntax::squash(self.text(t)))
                        .unwrap_or_default();
                    let name = named_children(p)
                        .into_iter()
                        .find(|c| c.kind() == "variable_declarator")
                        .and_then(|d| field(d, "name"))
                        .map(|n| self.text(n))
                        .unwrap_or("");
                    out.push(Param::new(name, format!("{ty}...")));
                }
                _ => {}
            }
        }
        out
    }

    fn fields(&mut self, node: Node<'_>) {
        let owner = self.type_stack.last().map(|_| self.chain.join("."));
        let span = Span::new(start_line(node), end_line(node));
        for d in named_children(node) {
            if d.kind() != "variable_declarator" {
                continue;
            }
            if let Some(n) = field(d, "name") {
                self.out.variables.push(VariableDecl {
                    file: self.path.to_string(),
                    name: self.text(n).to_string(),
                    owner: owner.clone(),
                    scope: VariableScope::Member,
                    span,
                });
            }
        }
    }

    /// Fields and non-local names this function assigns or mutates in place.
    fn analyze_writes(&self, func: Node<'_>, record: &FunctionRecord) -> BTreeSet<String> {
        let Some(body) = field(func, "body") else {
            return BTreeSet::new();
        };
        let mut nodes = vec![body];
        collect_own_nodes(body, &mut nodes);
        let mut locals: BTreeSet<String> = record.params.iter().map(|p| p.name.clone()).collect();
        for n in &nodes {
            match n.kind() {
                "local_variable_declaration" => {
                    for d in named_children(*n) {
                        if d.kind() == "variable_declarator" {
                            if let Some(name) = field(d, "name") {
                                locals.insert(self.text(name).to_string());
                            }
                        }
                    }
                }
                "enhanced_for_statement" | "catch_formal_parameter" | "resource" => {
                    if let Some(name) = field(*n, "name") {
                        locals.insert(self.text(name).to_string());
                    }
                }
                "identifier" if n.parent().is_some_and(|p| p.kind() == "inferred_parameters") => {
                    locals.insert(self.text(*n).to_string());
                }
                _ => {}
            }
        }
        let mut writes = BTreeSet::new();
        for n in &nodes {
            match n.kind() {
                "assignment_expression" => {
                    if let Some(left) = field(*n, "left") {
                        self.resolve_base(left, &locals, &mut writes);
                    }
                }
                "update_expression" => {
                    if let Some(target) = named_children(*n).into_iter().next() {
                        self.resolve_base(target, &locals, &mut writes);
                    }
                }
                "method_invocation" => {
                    let name = field(*n, "name").map(|m| self.text(m));
                    if name.is_some_and(|m| MUTATORS.contains(&m)) {
                        if let Some(obj) = field(*n, "object") {
                            self.resolve_base(obj, &locals, &mut writes);
                        }
                    }
                }
                _ => {}
            }
        }
        writes
    }

    fn resolve_base(&self, node: Node<'_>, locals: &BTreeSet<String>, out: &mut BTreeSet<String>) {
        match node.kind() {
            "identifier" => {
                let name = self.text(node);
                if !locals.contains(name) {
                    out.insert(name.to_string());
                }
            }
            "field_access" => {
                let (Some(obj), Some(f)) = (field(node, "object"), field(node, "field")) else {
                    return;
                };
                let obj_text = self.text(obj);
                let is_type = self.type_stack.iter().any(|(n, _)| n == obj_text)
                    || self.chain.iter().any(|n| n == obj_text);
                if obj.kind() == "this" || obj.kind() == "super" || is_type {
                    out.insert(self.text(f).to_string());
                } else {
                    self.resolve_base(obj, locals, out);
                }
            }
            "array_access" => {
                if let Some(a) = field(node, "array") {
                    self.resolve_base(a, locals, out);
                }
            }
            "parenthesized_expression" => {
                for c in named_children(node) {
                    self.resolve_base(c, locals, out);
                }
            }
            _ => {}
        }
    }
}

/// Descendants that belong to this function, not to nested lambdas or classes.
fn collect_own_nodes<'t>(node: Node<'t>, out: &mut Vec<Node<'t>>) {
    for child in children(node) {
        match child.kind() {
            "lambda_expression" | "class_body" => {}
            k if CLASS_KINDS.contains(&k) => {}
            _ => {
                out.push(child);
                collect_own_nodes(child, out);
            }
        }
    }
}

/// Every method invocation and constructor call under `root`, in source order.
pub(crate) fn collect_calls(root: Node<'_>, src: &str, out: &mut Vec<RawCall>) {
    match root.kind() {
        "method_invocation" => {
            if let Some(name) = field(root, "name") {
                let receiver = field(root, "object")
                    .and_then(|o| syntax::receiver_chain(syntax::text(o, src)));
                out.push(RawCall {
                    name: syntax::text(name, src).to_string(),
                    receiver,
                    arity: field(root, "arguments").map(syntax::arity).unwrap_or(0),
                    row: root.start_position().row,
                    byte: root.start_byte(),
                });
            }
        }
        "object_creation_expression" => {
            if let Some(ty) = field(root, "type") {
                let base = syntax::base_type_name(syntax::text(ty, src));
                let name = base.rsplit('.').next().unwrap_or(&base).to_string();
                out.push(RawCall {
                    name,
                    receiver: None,
                    arity: field(root, "arguments").map(syntax::arity).unwrap_or(0),
                    row: root.start_position().row,
                    byte: root.start_byte(),
                });
            }
        }
        _ => {}
    }
    for child in children(root) {
        collect_calls(child, src, out);
    }
}
