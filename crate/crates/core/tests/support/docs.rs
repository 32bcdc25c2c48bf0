//! Random annotated documents built from their own syntax tree, plus a
//! recursive interpreter over that tree.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

pub const FEATURES: [&str; 6] = ["F0", "F1", "F2", "F3", "F4", "F5"];
pub const EXTENSIONS: [&str; 12] = [
    ".html", ".xml", ".md", ".js", ".java", ".css", ".scss", ".yml", ".yaml", ".properties", ".sh", ".json",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Val {
    B(bool),
    I(i64),
    S(String),
}

impl Val {
    fn render(&self) -> String {
        match self {
            Val::B(b) => b.to_string(),
            Val::I(i) => i.to_string(),
            Val::S(s) => s.clone(),
        }
    }
}

/// Boolean expressions over features, the `flag`, `size` and `mode` slots.
#[derive(Debug, Clone)]
pub enum E {
    Feat(usize),
    Flag,
    Lit(bool),
    Not(Box<E>),
    And(Box<E>, Box<E>),
    Or(Box<E>, Box<E>),
    SizeCmp(&'static str, i64),
    ModeIs(bool, &'static str),
}

impl E {
    fn prec(&self) -> u8 {
        match self {
            E::Or(..) => 1,
            E::And(..) => 2,
            E::SizeCmp(..) | E::ModeIs(..) => 3,
            E::Not(_) => 4,
            _ => 5,
        }
    }

    fn wrap(&self, min: u8) -> String {
        if self.prec() < min {
            format!("({})", self.render())
        } else {
            self.render()
        }
    }

    pub fn render(&self) -> String {
        match self {
            E::Feat(i) => FEATURES[*i].to_string(),
            E::Flag => "flag".into(),
            E::Lit(b) => b.to_string(),
            E::Not(e) => format!("!{}", e.wrap(4)),
            E::And(a, b) => format!("{} && {}", a.wrap(2), b.wrap(3)),
            E::Or(a, b) => format!("{} || {}", a.wrap(1), b.wrap(2)),
            E::SizeCmp(op, n) => format!("size {op} {n}"),
            E::ModeIs(eq, s) => format!("mode {} \"{s}\"", if *eq { "==" } else { "!=" }),
        }
    }

    fn eval(&self, env: &Env) -> bool {
        match self {
            E::Feat(i) => env.selected[*i],
            E::Flag => env.get("flag") == Val::B(true),
            E::Lit(b) => *b,
            E::Not(e) => !e.eval(env),
            E::And(a, b) => a.eval(env) & b.eval(env),
            E::Or(a, b) => a.eval(env) | b.eval(env),
            E::SizeCmp(op, n) => {
                let Val::I(s) = env.get("size") else { unreachable!() };
                match *op {
                    "<" => s < *n,
                    "<=" => s <= *n,
                    ">" => s > *n,
                    ">=" => s >= *n,
                    "==" => s == *n,
                    _ => s != *n,
                }
            }
            E::ModeIs(eq, s) => (env.get("mode") == Val::S(s.to_string())) == *eq,
        }
    }
}

fn random_expr<R: Rng>(rng: &mut R, depth: u32) -> E {
    if depth == 0 || rng.gen_bool(0.35) {
        return match rng.gen_range(0..10) {
            0 => E::Flag,
            1 => E::Lit(rng.gen()),
            2 => E::SizeCmp(["<", "<=", ">", ">=", "==", "!="].choose(rng).unwrap(), rng.gen_range(0..6)),
            3 => E::ModeIs(rng.gen(), ["a", "b"].choose(rng).unwrap()),
            _ => E::Feat(rng.gen_range(0..FEATURES.len())),
        };
    }
    match rng.gen_range(0..3) {
        0 => E::Not(Box::new(random_expr(rng, depth - 1))),
        1 => E::And(Box::new(random_expr(rng, depth - 1)), Box::new(random_expr(rng, depth - 1))),
        _ => E::Or(Box::new(random_expr(rng, depth - 1)), Box::new(random_expr(rng, depth - 1))),
    }
}

#[derive(Debug, Clone)]
pub enum SetRhs {
    Size(i64),
    Mode(&'static str),
    Flag(E),
}

/// How a directive sits in its line. On its own line the whole line goes;
/// inline only the comment goes.
#[derive(Debug, Clone, Default)]
pub struct Layout {
    pub whole_line: bool,
    pub indent: String,
    pub trail: String,
}

#[derive(Debug, Clone)]
pub enum Node {
    Text(String),
    If(Vec<(Option<E>, Vec<Node>)>),
    Uses(usize, Vec<Node>),
    Set(SetRhs),
    Val(&'static str),
}

const WORDS: &[&str] = &[
    "alpha", "beta", "x = 1;", "<p>hi</p>", "# note", "// plain", "/* c */", "<!-- c -->", "-->", "*/", "spl", "if",
    "{", "}", "caf\u{e9}", "key: value", "\"quoted\"", "--", "*", "=", "spl-if",
];

fn random_text<R: Rng>(rng: &mut R) -> String {
    let mut s = String::new();
    for _ in 0..rng.gen_range(1..6) {
        s.push_str(WORDS.choose(rng).unwrap());
        s.push_str(["", " ", " ", "\n", "\n", "\r\n", "  "].choose(rng).unwrap());
    }
    s
}

fn random_body<R: Rng>(rng: &mut R, depth: u32) -> Vec<Node> {
    let n = rng.gen_range(0..4);
    (0..n).map(|_| random_node(rng, depth)).collect()
}

fn random_node<R: Rng>(rng: &mut R, depth: u32) -> Node {
    let pick = if depth == 0 { rng.gen_range(0..3) } else { rng.gen_range(0..6) };
    match pick {
        0 => Node::Text(random_text(rng)),
        1 => Node::Val(["size", "mode", "flag"].choose(rng).unwrap()),
        2 => Node::Set(match rng.gen_range(0..3) {
            0 => SetRhs::Size(rng.gen_range(0..6)),
            1 => SetRhs::Mode(["a", "b"].choose(rng).unwrap()),
            _ => SetRhs::Flag(random_expr(rng, 2)),
        }),
        3 => Node::Uses(rng.gen_range(0..FEATURES.len()), random_body(rng, depth - 1)),
        _ => {
            let mut branches = vec![(Some(random_expr(rng, 3)), random_body(rng, depth - 1))];
            for _ in 0..rng.gen_range(0..3) {
                branches.push((Some(random_expr(rng, 3)), random_body(rng, depth - 1)));
            }
            if rng.gen_bool(0.5) {
                branches.push((None, random_body(rng, depth - 1)));
            }
            Node::If(branches)
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Comment {
    Line(&'static str),
    Block(&'static str, &'static str),
}

fn styles_of(ext: &str) -> Vec<Comment> {
    match ext {
        ".html" | ".xml" | ".md" => vec![Comment::Block("<!--", "-->")],
        ".js" | ".java" | ".css" | ".scss" => vec![Comment::Block("/*", "*/"), Comment::Line("//")],
        ".json" => vec![Comment::Block("/*", "*/")],
        _ => vec![Comment::Line("#")],
    }
}

/// A rendered document: the text, and the tree with every piece of glue
/// text placed in the body it belongs to.
#[derive(Debug, Clone)]
pub struct Doc {
    pub ext: &'static str,
    pub text: String,
    pub tree: Vec<LNode>,
}

#[derive(Debug, Clone)]
pub enum LNode {
    Text(String),
    If(Vec<(Option<E>, Vec<LNode>)>),
    Uses(usize, Vec<LNode>),
    Set(SetRhs),
    Val(&'static str, Layout),
}

struct Writer<'r, R: Rng> {
    rng: &'r mut R,
    styles: Vec<Comment>,
    text: String,
    /// An inline line comment was just written and its line still needs
    /// ending.
    owe_newline: bool,
}

impl<R: Rng> Writer<'_, R> {
    fn push_text(&mut self, body: &mut Vec<LNode>, s: &str) {
        self.text.push_str(s);
        body.push(LNode::Text(s.to_string()));
    }

    fn settle(&mut self, body: &mut Vec<LNode>) {
        if self.owe_newline {
            self.owe_newline = false;
            let nl = if self.rng.gen_bool(0.2) { "\r\n" } else { "\n" };
            self.push_text(body, nl);
        }
    }

    fn line_has_content(&self) -> bool {
        let line = &self.text[self.text.rfind('\n').map_or(0, |p| p + 1)..];
        line.chars().any(|c| !matches!(c, ' ' | '\t' | '\r'))
    }

    /// Writes one directive, adding glue text to `body` as needed.
    fn directive(&mut self, body: &mut Vec<LNode>, content: &str) -> Layout {
        self.settle(body);
        let style = *self.styles.choose(self.rng).unwrap();
        let space = ["", " ", "  ", "\t"].choose(self.rng).unwrap().to_string();
        let comment = match style {
            Comment::Line(open) => format!("{open}{space}spl:{content}"),
            Comment::Block(open, close) => {
                let pad = ["", " "].choose(self.rng).unwrap();
                format!("{open}{space}spl:{content}{pad}{close}")
            }
        };
        if self.rng.gen_bool(0.6) {
            if !(self.text.is_empty() || self.text.ends_with('\n')) {
                self.push_text(body, "\n");
            }
            let indent = ["", "  ", "\t", " "].choose(self.rng).unwrap().to_string();
            let trail = match style {
                Comment::Line(_) => String::new(),
                Comment::Block(..) => ["", " ", "\t"].choose(self.rng).unwrap().to_string(),
            };
            let nl = if self.rng.gen_bool(0.2) { "\r\n" } else { "\n" };
            self.text.push_str(&format!("{indent}{comment}{trail}{nl}"));
            Layout {
                whole_line: true,
                indent,
                trail: format!("{trail}{nl}"),
            }
        } else {
            if !self.line_has_content() {
                self.push_text(body, "w");
            }
            if !self.text.ends_with(' ') {
                self.push_text(body, " ");
            }
            self.text.push_str(&comment);
            if matches!(style, Comment::Line(_)) {
                self.owe_newline = true;
            }
            Layout::default()
        }
    }

    fn nodes(&mut self, nodes: &[Node], out: &mut Vec<LNode>) {
        for n in nodes {
            match n {
                Node::Text(t) => {
                    self.settle(out);
                    self.push_text(out, t);
                }
                Node::Val(name) => {
                    let l = self.directive(out, &format!("val {name}"));
                    out.push(LNode::Val(name, l));
                }
                Node::Set(rhs) => {
                    let src = match rhs {
                        SetRhs::Size(n) => format!("set size = {n}"),
                        SetRhs::Mode(m) => format!("set mode= \"{m}\""),
                        SetRhs::Flag(e) => format!("set flag ={}", e.render()),
                    };
                    self.directive(out, &src);
                    out.push(LNode::Set(rhs.clone()));
                }
                Node::Uses(link, body) => {
                    let mut inner = Vec::new();
                    self.directive(out, &format!("uses L{link}"));
                    self.nodes(body, &mut inner);
                    self.directive(&mut inner, "enduses");
                    out.push(LNode::Uses(*link, inner));
                }
                Node::If(branches) => {
                    let mut laid: Vec<(Option<E>, Vec<LNode>)> = Vec::new();
                    for (i, (cond, body)) in branches.iter().enumerate() {
                        let head = match (i, cond) {
                            (0, Some(c)) => format!("if {}", c.render()),
                            (_, Some(c)) => format!("elif {}", c.render()),
                            (_, None) => "else".into(),
                        };
                        // glue before a later head closes the previous branch
                        match laid.last_mut() {
                            Some((_, prev)) => {
                                self.directive(prev, &head);
                            }
                            None => {
                                self.directive(out, &head);
                            }
                        }
                        let mut inner = Vec::new();
                        self.nodes(body, &mut inner);
                        laid.push((cond.clone(), inner));
                    }
                    let (_, last) = laid.last_mut().unwrap();
                    self.directive(last, "endif");
                    out.push(LNode::If(laid));
                }
            }
        }
    }
}

/// A random document of nesting depth at most `max_depth`.
pub fn random_doc<R: Rng>(rng: &mut R, max_depth: u32) -> Doc {
    let ext = *EXTENSIONS.choose(rng).unwrap();
    let nodes = random_body(rng, max_depth);
    let mut w = Writer {
        styles: styles_of(ext),
        rng,
        text: String::new(),
        owe_newline: false,
    };
    let mut tree = Vec::new();
    w.nodes(&nodes, &mut tree);
    w.settle(&mut tree);
    Doc {
        ext,
        text: w.text,
        tree,
    }
}

pub struct Env {
    pub selected: [bool; 6],
    pub base: BTreeMap<&'static str, Val>,
    pub local: BTreeMap<&'static str, Val>,
}

impl Env {
    pub fn new(mask: u32, base: BTreeMap<&'static str, Val>) -> Self {
        let mut selected = [false; 6];
        for (i, s) in selected.iter_mut().enumerate() {
            *s = mask & (1 << i) != 0;
        }
        Env {
            selected,
            base,
            local: BTreeMap::new(),
        }
    }

    fn get(&self, name: &str) -> Val {
        self.local.get(name).or_else(|| self.base.get(name)).cloned().unwrap()
    }
}

/// Expected product of `tree`; links `L<i>` are active exactly when `F<i>`
/// is selected.
pub fn interpret(tree: &[LNode], env: &mut Env, out: &mut String) {
    for n in tree {
        match n {
            LNode::Text(t) => out.push_str(t),
            LNode::If(branches) => {
                if let Some((_, body)) = branches.iter().find(|(c, _)| c.as_ref().is_none_or(|c| c.eval(env))) {
                    interpret(body, env, out);
                }
            }
            LNode::Uses(link, body) => {
                if env.selected[*link] {
                    interpret(body, env, out);
                }
            }
            LNode::Set(rhs) => {
                let (name, v) = match rhs {
                    SetRhs::Size(n) => ("size", Val::I(*n)),
                    SetRhs::Mode(m) => ("mode", Val::S(m.to_string())),
                    SetRhs::Flag(e) => ("flag", Val::B(e.eval(env))),
                };
                env.local.insert(name, v);
            }
            LNode::Val(name, layout) => {
                let v = env.get(name).render();
                if layout.whole_line {
                    out.push_str(&layout.indent);
                    out.push_str(&v);
                    out.push_str(&layout.trail);
                } else {
                    out.push_str(&v);
                }
            }
        }
    }
}
