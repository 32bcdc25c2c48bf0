//! Comment-embedded variability directives.
//!
//! A directive is a native comment of the host language whose body starts
//! with the marker `spl:` (optionally preceded by blanks):
//!
//! ```text
//! <!-- spl:if ImageFromURL -->        // spl:set editorKind = "markdown"
//! <!-- spl:elif ImageUploading -->    /* spl:val maxUploadMb */
//! <!-- spl:else -->                   # spl:uses postuses-fileuploader
//! <!-- spl:endif -->                  # spl:enduses
//! ```
//!
//! Files are handled as plain text. Which comment syntaxes count is decided
//! per file extension by a [`DelimiterTable`]; files with unmapped
//! extensions are directive-free.
//!
//! Scanning splits the text into segments that tile it exactly, so the
//! [`DirectiveTree`] always serialises back to the input bytes. A directive
//! alone on its line owns the whole line including the newline; resolution
//! drops that segment, leaving no blank line behind.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{EvalError, Expr, Scope};
use crate::value::{is_token, Value};

pub const MARKER: &str = "spl:";
pub const DELIMITERS_FILE: &str = "delimiters.json";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "style", rename_all = "lowercase", deny_unknown_fields)]
pub enum CommentStyle {
    Line { open: String },
    Block { open: String, close: String },
}

impl CommentStyle {
    pub fn line(open: &str) -> Self {
        CommentStyle::Line { open: open.into() }
    }

    pub fn block(open: &str, close: &str) -> Self {
        CommentStyle::Block {
            open: open.into(),
            close: close.into(),
        }
    }

    pub fn open(&self) -> &str {
        match self {
            CommentStyle::Line { open } | CommentStyle::Block { open, .. } => open,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DelimiterError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("extension `{0}` must start with `.`")]
    BadExtension(String),
    #[error("extension `{ext}`: {reason}")]
    BadStyle { ext: String, reason: String },
}

/// Comment syntaxes per lowercase file extension (with leading dot).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelimiterTable {
    map: BTreeMap<String, Vec<CommentStyle>>,
}

impl Default for DelimiterTable {
    fn default() -> Self {
        let html = vec![CommentStyle::block("<!--", "-->")];
        let curly = vec![CommentStyle::block("/*", "*/"), CommentStyle::line("//")];
        let hash = vec![CommentStyle::line("#")];
        let json = vec![CommentStyle::block("/*", "*/")];
        let mut map = BTreeMap::new();
        for ext in [".html", ".xml", ".md"] {
            map.insert(ext.to_owned(), html.clone());
        }
        for ext in [".js", ".java", ".scss", ".css"] {
            map.insert(ext.to_owned(), curly.clone());
        }
        for ext in [".yml", ".yaml", ".properties", ".sh"] {
            map.insert(ext.to_owned(), hash.clone());
        }
        map.insert(".json".to_owned(), json);
        DelimiterTable { map }
    }
}

impl DelimiterTable {
    pub fn empty() -> Self {
        DelimiterTable { map: BTreeMap::new() }
    }

    /// Default table, then `delimiters.json` from the platform root if present.
    pub fn load_dir(platform: &Path) -> Result<Self, DelimiterError> {
        let mut table = Self::default();
        let path = platform.join(DELIMITERS_FILE);
        if path.is_file() {
            let src = std::fs::read_to_string(&path).map_err(|e| DelimiterError::Syntax {
                line: 0,
                column: 0,
                message: e.to_string(),
            })?;
            table.apply_overrides(&src)?;
        }
        Ok(table)
    }

    /// Replaces or adds entries from a `{".ext": [styles]}` document.
    pub fn apply_overrides(&mut self, src: &str) -> Result<(), DelimiterError> {
        let raw: BTreeMap<String, Vec<CommentStyle>> =
            serde_json::from_str(src).map_err(|e| DelimiterError::Syntax {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?;
        for (ext, styles) in raw {
            self.insert(&ext, styles)?;
        }
        Ok(())
    }

    pub fn insert(&mut self, ext: &str, styles: Vec<CommentStyle>) -> Result<(), DelimiterError> {
        if !ext.starts_with('.') || ext.len() < 2 {
            return Err(DelimiterError::BadExtension(ext.into()));
        }
        let ext = ext.to_lowercase();
        let bad = |reason: String| DelimiterError::BadStyle {
            ext: ext.clone(),
            reason,
        };
        for s in &styles {
            if s.open().is_empty() {
                return Err(bad("empty opening delimiter".into()));
            }
            if let CommentStyle::Block { close, .. } = s {
                if close.is_empty() {
                    return Err(bad("empty closing delimiter".into()));
                }
            }
        }
        for (i, a) in styles.iter().enumerate() {
            for b in &styles[i + 1..] {
                if a.open().starts_with(b.open()) || b.open().starts_with(a.open()) {
                    return Err(bad(format!(
                        "openers `{}` and `{}` are prefix-ambiguous",
                        a.open(),
                        b.open()
                    )));
                }
            }
        }
        self.map.insert(ext, styles);
        Ok(())
    }

    pub fn styles(&self, ext: &str) -> Option<&[CommentStyle]> {
        self.map.get(&ext.to_lowercase()).map(Vec::as_slice)
    }

    pub fn styles_for_path(&self, path: &str) -> Option<&[CommentStyle]> {
        extension_of(path).and_then(|e| self.styles(&e))
    }

    pub fn extensions(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }
}

/// Lowercase extension with its leading dot, if the file name has one.
pub fn extension_of(path: &str) -> Option<String> {
    Path::new(path)
        .extension()
        .map(|e| format!(".{}", e.to_string_lossy().to_lowercase()))
}

#[derive(Debug, Clone, PartialEq)]
pub enum DirectiveKind {
    If(Expr),
    Elif(Expr),
    Else,
    Endif,
    Set { name: String, expr: Expr },
    Val { name: String },
    Uses { link: String },
    EndUses,
}

impl DirectiveKind {
    pub fn keyword(&self) -> &'static str {
        match self {
            DirectiveKind::If(_) => "if",
            DirectiveKind::Elif(_) => "elif",
            DirectiveKind::Else => "else",
            DirectiveKind::Endif => "endif",
            DirectiveKind::Set { .. } => "set",
            DirectiveKind::Val { .. } => "val",
            DirectiveKind::Uses { .. } => "uses",
            DirectiveKind::EndUses => "enduses",
        }
    }

    /// Directives that open a construct or stand alone; these are what
    /// annotation counts are made of.
    pub fn is_head(&self) -> bool {
        matches!(
            self,
            DirectiveKind::If(_) | DirectiveKind::Set { .. } | DirectiveKind::Val { .. } | DirectiveKind::Uses { .. }
        )
    }

    pub fn expr(&self) -> Option<&Expr> {
        match self {
            DirectiveKind::If(e) | DirectiveKind::Elif(e) | DirectiveKind::Set { expr: e, .. } => Some(e),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Directive {
    pub kind: DirectiveKind,
    /// Text after the keyword, trimmed.
    pub argument: String,
    /// From the comment opener through the end of the comment.
    pub span: Range<usize>,
    /// What the directive removes: the whole line when it stands alone,
    /// otherwise just `span`.
    pub segment: Range<usize>,
    pub whole_line: bool,
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Directive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{MARKER}{}", self.kind.keyword())?;
        if !self.argument.is_empty() {
            write!(f, " {}", self.argument)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub head: Directive,
    /// `None` for the `else` branch.
    pub cond: Option<Expr>,
    pub body: Vec<Node>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Text(Range<usize>),
    If { branches: Vec<Branch>, end: Directive },
    Uses { open: Directive, link: String, body: Vec<Node>, end: Directive },
    Set(Directive),
    Val(Directive),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnnotationError {
    #[error("line {line}, column {column}: unbalanced directive: {message}")]
    UnbalancedDirective {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}, column {column}: malformed directive: {message}")]
    MalformedDirective {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}, column {column}: bad expression: {message}")]
    BadExpression {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}, column {column}: {error}")]
    Eval {
        line: usize,
        column: usize,
        error: EvalError,
    },
    #[error("line {line}, column {column}: `{directive}` is not covered by any annotative variation point of this artifact")]
    InactiveDirective {
        line: usize,
        column: usize,
        directive: String,
    },
}

impl AnnotationError {
    pub fn position(&self) -> (usize, usize) {
        match self {
            AnnotationError::UnbalancedDirective { line, column, .. }
            | AnnotationError::MalformedDirective { line, column, .. }
            | AnnotationError::BadExpression { line, column, .. }
            | AnnotationError::Eval { line, column, .. }
            | AnnotationError::InactiveDirective { line, column, .. } => (*line, *column),
        }
    }
}

struct LineIndex {
    starts: Vec<usize>,
}

impl LineIndex {
    fn new(text: &str) -> Self {
        let mut starts = vec![0];
        starts.extend(text.match_indices('\n').map(|(i, _)| i + 1));
        LineIndex { starts }
    }

    /// 1-based line and byte column.
    fn position(&self, offset: usize) -> (usize, usize) {
        let line = self.starts.partition_point(|&s| s <= offset);
        (line, offset - self.starts[line - 1] + 1)
    }
}

/// The parsed form of one artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectiveTree {
    source: String,
    nodes: Vec<Node>,
}

/// Scans `text` with the comment styles mapped to `extension`. Unmapped
/// extensions yield a single text leaf.
pub fn scan_artifact(text: &str, extension: &str, table: &DelimiterTable) -> Result<DirectiveTree, AnnotationError> {
    match table.styles(extension) {
        Some(styles) => scan_with_styles(text, styles),
        None => Ok(DirectiveTree::plain(text)),
    }
}

pub fn scan_with_styles(text: &str, styles: &[CommentStyle]) -> Result<DirectiveTree, AnnotationError> {
    let index = LineIndex::new(text);
    let directives = find_directives(text, styles, &index)?;
    let nodes = build_tree(text, directives, &index)?;
    Ok(DirectiveTree {
        source: text.to_owned(),
        nodes,
    })
}

fn find_directives(text: &str, styles: &[CommentStyle], index: &LineIndex) -> Result<Vec<Directive>, AnnotationError> {
    let mut styles: Vec<&CommentStyle> = styles.iter().collect();
    styles.sort_by_key(|s| std::cmp::Reverse(s.open().len()));
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < text.len() {
        if !text.is_char_boundary(i) {
            i += 1;
            continue;
        }
        let rest = &text[i..];
        let hit = styles.iter().find_map(|s| {
            let after_open = rest.strip_prefix(s.open())?;
            let blanks = after_open.len() - after_open.trim_start_matches([' ', '\t']).len();
            after_open[blanks..]
                .starts_with(MARKER)
                .then(|| (*s, i + s.open().len() + blanks + MARKER.len()))
        });
        let Some((style, body_start)) = hit else {
            i += 1;
            continue;
        };
        let (line, column) = index.position(i);
        let (body, span_end) = match style {
            CommentStyle::Block { close, .. } => match text[body_start..].find(close.as_str()) {
                Some(rel) => (&text[body_start..body_start + rel], body_start + rel + close.len()),
                None => {
                    return Err(AnnotationError::MalformedDirective {
                        line,
                        column,
                        message: format!("comment is missing its closing `{close}`"),
                    })
                }
            },
            CommentStyle::Line { .. } => {
                let mut end = text[body_start..].find('\n').map_or(text.len(), |r| body_start + r);
                if end > body_start && bytes[end - 1] == b'\r' {
                    end -= 1;
                }
                (&text[body_start..end], end)
            }
        };
        let body_offset = body_start + (body.len() - body.trim_start().len());
        let (kind, argument) = parse_body(body.trim(), body_offset, index, (line, column))?;

        let line_start = text[..i].rfind('\n').map_or(0, |p| p + 1);
        let line_end = text[span_end..].find('\n').map_or(text.len(), |r| span_end + r);
        let blank = |s: &str| s.bytes().all(|b| b == b' ' || b == b'\t' || b == b'\r');
        let whole_line = blank(&text[line_start..i]) && blank(&text[span_end..line_end]);
        let segment = if whole_line {
            line_start..(line_end + 1).min(text.len())
        } else {
            i..span_end
        };
        let next = segment.end;
        out.push(Directive {
            kind,
            argument,
            span: i..span_end,
            segment,
            whole_line,
            line,
            column,
        });
        i = next;
    }
    Ok(out)
}

fn parse_body(
    body: &str,
    body_offset: usize,
    index: &LineIndex,
    (line, column): (usize, usize),
) -> Result<(DirectiveKind, String), AnnotationError> {
    let malformed = |message: String| AnnotationError::MalformedDirective { line, column, message };
    let kw_len = body
        .find(|c: char| !c.is_ascii_alphabetic())
        .unwrap_or(body.len());
    let keyword = &body[..kw_len];
    let arg_raw = &body[kw_len..];
    let arg = arg_raw.trim();
    let arg_offset = body_offset + kw_len + (arg_raw.len() - arg_raw.trim_start().len());
    let expr = |src: &str, offset: usize| {
        Expr::parse(src).map_err(|e| {
            let (line, column) = index.position(offset + e.offset.min(src.len()));
            AnnotationError::BadExpression {
                line,
                column,
                message: e.message,
            }
        })
    };
    let no_arg = |kind: DirectiveKind| {
        if arg.is_empty() {
            Ok((kind, String::new()))
        } else {
            Err(malformed(format!("`{keyword}` takes no argument, found `{arg}`")))
        }
    };
    let kind = match keyword {
        "if" | "elif" => {
            if arg.is_empty() {
                return Err(malformed(format!("`{keyword}` needs a condition")));
            }
            let e = expr(arg, arg_offset)?;
            if keyword == "if" {
                DirectiveKind::If(e)
            } else {
                DirectiveKind::Elif(e)
            }
        }
        "else" => return no_arg(DirectiveKind::Else),
        "endif" => return no_arg(DirectiveKind::Endif),
        "enduses" => return no_arg(DirectiveKind::EndUses),
        "set" => {
            let Some((name, rhs)) = split_assignment(arg) else {
                return Err(malformed("expected `set <name> = <expr>`".into()));
            };
            let rhs_offset = arg_offset + (arg.len() - rhs.len()) + (rhs.len() - rhs.trim_start().len());
            let e = expr(rhs.trim(), rhs_offset)?;
            DirectiveKind::Set {
                name: name.to_owned(),
                expr: e,
            }
        }
        "val" => {
            if !is_slot_name(arg) {
                return Err(malformed(format!("`{arg}` is not a slot name")));
            }
            DirectiveKind::Val { name: arg.to_owned() }
        }
        "uses" => {
            if !is_token(arg) {
                return Err(malformed(format!("`{arg}` is not a link id")));
            }
            DirectiveKind::Uses { link: arg.to_owned() }
        }
        other => return Err(malformed(format!("unknown directive `{MARKER}{other}`"))),
    };
    Ok((kind, arg.to_owned()))
}

fn is_slot_name(s: &str) -> bool {
    matches!(Expr::parse(s), Ok(Expr::Ident(n)) if n == s)
}

fn split_assignment(arg: &str) -> Option<(&str, &str)> {
    let eq = arg.find('=')?;
    if arg[eq + 1..].starts_with('=') {
        return None;
    }
    let name = arg[..eq].trim();
    is_slot_name(name).then(|| (name, &arg[eq + 1..]))
}

enum Frame {
    Root(Vec<Node>),
    If {
        done: Vec<Branch>,
        head: Directive,
        cond: Option<Expr>,
        body: Vec<Node>,
    },
    Uses {
        open: Directive,
        link: String,
        body: Vec<Node>,
    },
}

impl Frame {
    fn body(&mut self) -> &mut Vec<Node> {
        match self {
            Frame::Root(b) | Frame::If { body: b, .. } | Frame::Uses { body: b, .. } => b,
        }
    }
}

fn build_tree(text: &str, directives: Vec<Directive>, _index: &LineIndex) -> Result<Vec<Node>, AnnotationError> {
    let mut stack = vec![Frame::Root(Vec::new())];
    let mut pos = 0;
    let unbalanced = |d: &Directive, message: &str| AnnotationError::UnbalancedDirective {
        line: d.line,
        column: d.column,
        message: message.to_owned(),
    };
    for d in directives {
        if d.segment.start > pos {
            stack.last_mut().expect("root").body().push(Node::Text(pos..d.segment.start));
        }
        pos = d.segment.end;
        match &d.kind {
            DirectiveKind::If(e) => {
                let cond = Some(e.clone());
                stack.push(Frame::If {
                    done: Vec::new(),
                    head: d,
                    cond,
                    body: Vec::new(),
                });
            }
            DirectiveKind::Elif(_) | DirectiveKind::Else => {
                let Some(Frame::If { done, head, cond, body }) = stack.last_mut() else {
                    return Err(unbalanced(&d, &format!("`{}` outside of an `if` block", d)));
                };
                if cond.is_none() {
                    return Err(unbalanced(&d, &format!("`{}` after `else`", d)));
                }
                let new_cond = d.kind.expr().cloned();
                let prev_head = std::mem::replace(head, d);
                let prev_cond = std::mem::replace(cond, new_cond);
                done.push(Branch {
                    head: prev_head,
                    cond: prev_cond,
                    body: std::mem::take(body),
                });
                // `else` is tracked by a None condition; keep a sentinel so a
                // later elif/else is rejected
                if let Some(Frame::If { head, cond, .. }) = stack.last_mut() {
                    if head.kind == DirectiveKind::Else {
                        *cond = None;
                    }
                }
            }
            DirectiveKind::Endif => {
                let Some(Frame::If { .. }) = stack.last() else {
                    return Err(unbalanced(&d, "`endif` without a matching `if`"));
                };
                let Some(Frame::If { mut done, head, cond, body }) = stack.pop() else {
                    unreachable!()
                };
                done.push(Branch { head, cond, body });
                stack
                    .last_mut()
                    .expect("root")
                    .body()
                    .push(Node::If { branches: done, end: d });
            }
            DirectiveKind::Uses { link } => {
                let link = link.clone();
                stack.push(Frame::Uses {
                    open: d,
                    link,
                    body: Vec::new(),
                });
            }
            DirectiveKind::EndUses => {
                let Some(Frame::Uses { .. }) = stack.last() else {
                    return Err(unbalanced(&d, "`enduses` without a matching `uses`"));
                };
                let Some(Frame::Uses { open, link, body }) = stack.pop() else {
                    unreachable!()
                };
                stack.last_mut().expect("root").body().push(Node::Uses {
                    open,
                    link,
                    body,
                    end: d,
                });
            }
            DirectiveKind::Set { .. } => stack.last_mut().expect("root").body().push(Node::Set(d)),
            DirectiveKind::Val { .. } => stack.last_mut().expect("root").body().push(Node::Val(d)),
        }
    }
    if pos < text.len() {
        stack.last_mut().expect("root").body().push(Node::Text(pos..text.len()));
    }
    match stack.pop() {
        Some(Frame::Root(nodes)) if stack.is_empty() => Ok(nodes),
        Some(Frame::If { head, .. }) => Err(unbalanced(&head, &format!("`{head}` is never closed"))),
        Some(Frame::Uses { open, .. }) => Err(unbalanced(&open, &format!("`{open}` is never closed"))),
        _ => unreachable!("root frame is never popped early"),
    }
}

/// Which directives an artifact may carry under strict activation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Activation {
    /// `if` chains are declared by an existence variation point.
    pub existence: bool,
    /// Names `set`/`val` may touch.
    pub assignment_slots: BTreeSet<String>,
    /// Links whose `uses` blocks may appear.
    pub uses_links: BTreeSet<String>,
}

impl Activation {
    pub fn covers(&self, d: &Directive) -> bool {
        match &d.kind {
            DirectiveKind::If(_) | DirectiveKind::Elif(_) | DirectiveKind::Else | DirectiveKind::Endif => self.existence,
            DirectiveKind::Set { name, .. } | DirectiveKind::Val { name } => self.assignment_slots.contains(name),
            DirectiveKind::Uses { link } => self.uses_links.contains(link),
            DirectiveKind::EndUses => true,
        }
    }
}

/// Everything directive evaluation can see.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct EvalContext {
    /// Every feature id of the model; identifiers naming one evaluate to
    /// whether it is selected.
    pub features: BTreeSet<String>,
    pub selected: BTreeSet<String>,
    pub slot_values: BTreeMap<String, Value>,
    pub active_links: BTreeSet<String>,
}

impl EvalContext {
    fn is_feature(&self, name: &str) -> bool {
        self.features.contains(name) || self.selected.contains(name)
    }
}

impl Scope for EvalContext {
    fn lookup(&self, name: &str) -> Option<Value> {
        if self.is_feature(name) {
            return Some(Value::Bool(self.selected.contains(name)));
        }
        self.slot_values.get(name).cloned()
    }
}

/// Context plus the values assigned by `set` so far in one artifact.
struct LocalScope<'a> {
    ctx: &'a EvalContext,
    local: BTreeMap<String, Value>,
}

impl Scope for LocalScope<'_> {
    fn lookup(&self, name: &str) -> Option<Value> {
        if self.ctx.is_feature(name) {
            return Some(Value::Bool(self.ctx.selected.contains(name)));
        }
        self.local
            .get(name)
            .cloned()
            .or_else(|| self.ctx.slot_values.get(name).cloned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// `if` chain: index of the branch kept.
    Branch(usize),
    /// `if` chain with no true condition and no `else`.
    NoBranch,
    Kept,
    Dropped,
    Assigned,
    Rendered,
    /// Inside a region that was removed; never evaluated.
    Skipped,
}

/// One resolved directive head.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DirectiveRecord {
    pub keyword: &'static str,
    pub line: usize,
    pub column: usize,
    pub offset: usize,
    pub outcome: Outcome,
    /// Features and slots referenced, or the link for `uses`. For `set` and
    /// `val` the slot name comes first.
    pub symbols: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Resolved {
    pub text: String,
    pub records: Vec<DirectiveRecord>,
}

impl DirectiveTree {
    pub fn plain(text: &str) -> Self {
        let nodes = if text.is_empty() {
            Vec::new()
        } else {
            vec![Node::Text(0..text.len())]
        };
        DirectiveTree {
            source: text.to_owned(),
            nodes,
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Re-emits every segment in order; always equals the scanned input.
    pub fn serialize(&self) -> String {
        let mut out = String::with_capacity(self.source.len());
        fn walk(src: &str, nodes: &[Node], out: &mut String) {
            for n in nodes {
                match n {
                    Node::Text(r) => out.push_str(&src[r.clone()]),
                    Node::Set(d) | Node::Val(d) => out.push_str(&src[d.segment.clone()]),
                    Node::If { branches, end } => {
                        for b in branches {
                            out.push_str(&src[b.head.segment.clone()]);
                            walk(src, &b.body, out);
                        }
                        out.push_str(&src[end.segment.clone()]);
                    }
                    Node::Uses { open, body, end, .. } => {
                        out.push_str(&src[open.segment.clone()]);
                        walk(src, body, out);
                        out.push_str(&src[end.segment.clone()]);
                    }
                }
            }
        }
        walk(&self.source, &self.nodes, &mut out);
        out
    }

    /// Every directive in document order.
    pub fn directives(&self) -> Vec<&Directive> {
        fn walk<'a>(nodes: &'a [Node], out: &mut Vec<&'a Directive>) {
            for n in nodes {
                match n {
                    Node::Text(_) => {}
                    Node::Set(d) | Node::Val(d) => out.push(d),
                    Node::If { branches, end } => {
                        for b in branches {
                            out.push(&b.head);
                            walk(&b.body, out);
                        }
                        out.push(end);
                    }
                    Node::Uses { open, body, end, .. } => {
                        out.push(open);
                        walk(body, out);
                        out.push(end);
                    }
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.nodes, &mut out);
        out
    }

    /// Number of `if`, `set`, `val` and `uses` directives.
    pub fn annotation_count(&self) -> usize {
        self.directives().iter().filter(|d| d.kind.is_head()).count()
    }

    /// Resolves every directive. `activation` of `None` is lenient mode.
    pub fn resolve(&self, ctx: &EvalContext, activation: Option<&Activation>) -> Result<Resolved, AnnotationError> {
        if let Some(act) = activation {
            if let Some(d) = self.directives().into_iter().find(|d| !act.covers(d)) {
                return Err(AnnotationError::InactiveDirective {
                    line: d.line,
                    column: d.column,
                    directive: d.to_string(),
                });
            }
        }
        let mut r = Resolver {
            src: &self.source,
            scope: LocalScope {
                ctx,
                local: BTreeMap::new(),
            },
            out: String::with_capacity(self.source.len()),
            records: Vec::new(),
        };
        r.nodes(&self.nodes)?;
        Ok(Resolved {
            text: r.out,
            records: r.records,
        })
    }
}

struct Resolver<'a> {
    src: &'a str,
    scope: LocalScope<'a>,
    out: String,
    records: Vec<DirectiveRecord>,
}

fn eval_err(d: &Directive, error: EvalError) -> AnnotationError {
    AnnotationError::Eval {
        line: d.line,
        column: d.column,
        error,
    }
}

fn record(d: &Directive, outcome: Outcome) -> DirectiveRecord {
    let symbols = match &d.kind {
        DirectiveKind::If(e) | DirectiveKind::Elif(e) => e.symbols().into_iter().map(str::to_owned).collect(),
        DirectiveKind::Set { name, expr } => std::iter::once(name.clone())
            .chain(expr.symbols().into_iter().filter(|s| s != name).map(str::to_owned))
            .collect(),
        DirectiveKind::Val { name } => vec![name.clone()],
        DirectiveKind::Uses { link } => vec![link.clone()],
        _ => Vec::new(),
    };
    DirectiveRecord {
        keyword: d.kind.keyword(),
        line: d.line,
        column: d.column,
        offset: d.span.start,
        outcome,
        symbols,
    }
}

impl Resolver<'_> {
    fn nodes(&mut self, nodes: &[Node]) -> Result<(), AnnotationError> {
        for n in nodes {
            match n {
                Node::Text(r) => self.out.push_str(&self.src[r.clone()]),
                Node::If { branches, .. } => {
                    let mut taken = None;
                    for (i, b) in branches.iter().enumerate() {
                        let hit = match &b.cond {
                            None => true,
                            Some(c) => c.eval_condition(&self.scope).map_err(|e| eval_err(&b.head, e))?,
                        };
                        if hit {
                            taken = Some(i);
                            break;
                        }
                    }
                    let head = &branches[0].head;
                    self.records.push(record(head, taken.map_or(Outcome::NoBranch, Outcome::Branch)));
                    for (i, b) in branches.iter().enumerate() {
                        if Some(i) == taken {
                            self.nodes(&b.body)?;
                        } else {
                            self.skip(&b.body);
                        }
                    }
                }
                Node::Uses { open, link, body, .. } => {
                    if self.scope.ctx.active_links.contains(link) {
                        self.records.push(record(open, Outcome::Kept));
                        self.nodes(body)?;
                    } else {
                        self.records.push(record(open, Outcome::Dropped));
                        self.skip(body);
                    }
                }
                Node::Set(d) => {
                    let DirectiveKind::Set { name, expr } = &d.kind else {
                        unreachable!()
                    };
                    if self.scope.ctx.is_feature(name) {
                        return Err(AnnotationError::MalformedDirective {
                            line: d.line,
                            column: d.column,
                            message: format!("cannot assign to feature `{name}`"),
                        });
                    }
                    let v = expr.eval(&self.scope).map_err(|e| eval_err(d, e))?;
                    if let Some(old) = self.scope.lookup(name) {
                        if old.value_type() != v.value_type() {
                            return Err(eval_err(
                                d,
                                EvalError::TypeMismatch {
                                    op: "=",
                                    left: old.value_type(),
                                    right: Some(v.value_type()),
                                },
                            ));
                        }
                    }
                    self.scope.local.insert(name.clone(), v);
                    self.records.push(record(d, Outcome::Assigned));
                }
                Node::Val(d) => {
                    let DirectiveKind::Val { name } = &d.kind else {
                        unreachable!()
                    };
                    let v = self
                        .scope
                        .local
                        .get(name)
                        .or_else(|| self.scope.ctx.slot_values.get(name))
                        .ok_or_else(|| eval_err(d, EvalError::UnknownSymbol(name.clone())))?;
                    let rendered = v.to_string();
                    if d.whole_line {
                        self.out.push_str(&self.src[d.segment.start..d.span.start]);
                        self.out.push_str(&rendered);
                        self.out.push_str(&self.src[d.span.end..d.segment.end]);
                    } else {
                        self.out.push_str(&rendered);
                    }
                    self.records.push(record(d, Outcome::Rendered));
                }
            }
        }
        Ok(())
    }

    fn skip(&mut self, nodes: &[Node]) {
        for n in nodes {
            match n {
                Node::Text(_) => {}
                Node::Set(d) | Node::Val(d) => self.records.push(record(d, Outcome::Skipped)),
                Node::If { branches, .. } => {
                    self.records.push(record(&branches[0].head, Outcome::Skipped));
                    for b in branches {
                        self.skip(&b.body);
                    }
                }
                Node::Uses { open, body, .. } => {
                    self.records.push(record(open, Outcome::Skipped));
                    self.skip(body);
                }
            }
        }
    }
}

/// Scans and resolves in one step.
pub fn resolve_artifact(
    text: &str,
    extension: &str,
    table: &DelimiterTable,
    ctx: &EvalContext,
    activation: Option<&Activation>,
) -> Result<Resolved, AnnotationError> {
    scan_artifact(text, extension, table)?.resolve(ctx, activation)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AnnotationCounts {
    /// Directive heads per platform file; files that failed to scan are absent.
    pub per_artifact: BTreeMap<String, usize>,
    pub total: usize,
    pub annotated_artifacts: usize,
    /// Per-file scan problems, sorted by path.
    pub diagnostics: Vec<(String, String)>,
}

/// Counts directive heads in every platform file (declared artifacts and
/// common files). Scan failures are collected, not fatal.
pub fn count_annotations(manifest: &crate::base_model::BaseModelManifest, table: &DelimiterTable) -> AnnotationCounts {
    let files = manifest.all_files();
    let results = crate::par::map(&files, |path| -> (String, Result<usize, String>) {
        let path = path.to_string();
        let Some(styles) = table.styles_for_path(&path) else {
            return (path, Ok(0));
        };
        let bytes = match manifest.read(&path) {
            Ok(b) => b,
            Err(e) => return (path, Err(e.to_string())),
        };
        let Ok(text) = String::from_utf8(bytes) else {
            return (path, Err("not valid UTF-8; not scanned".into()));
        };
        let r = scan_with_styles(&text, styles).map(|t| t.annotation_count()).map_err(|e| e.to_string());
        (path, r)
    });
    let mut counts = AnnotationCounts::default();
    for (path, r) in results {
        match r {
            Ok(n) => {
                counts.total += n;
                if n > 0 {
                    counts.annotated_artifacts += 1;
                }
                counts.per_artifact.insert(path, n);
            }
            Err(e) => counts.diagnostics.push((path, e)),
        }
    }
    counts
}
