//! Reference directive processor: a regex scanner, a token-list tree and an
//! evaluator that computes while it parses. Shares no code with the engine.

use std::collections::BTreeMap;

use regex::Regex;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum V {
    B(bool),
    I(i64),
    S(String),
}

impl V {
    pub fn render(&self) -> String {
        match self {
            V::B(b) => b.to_string(),
            V::I(i) => i.to_string(),
            V::S(s) => s.clone(),
        }
    }
}

/// Evaluates `src` against `lookup`, with both operands of every binary
/// operator always evaluated.
pub fn eval(src: &str, lookup: &dyn Fn(&str) -> Option<V>) -> Result<V, String> {
    let mut p = P {
        s: src.as_bytes(),
        i: 0,
        lookup,
    };
    let v = p.or()?;
    p.ws();
    if p.i != p.s.len() {
        return Err(format!("trailing input at {}", p.i));
    }
    Ok(v)
}

pub fn eval_bool(src: &str, lookup: &dyn Fn(&str) -> Option<V>) -> Result<bool, String> {
    match eval(src, lookup)? {
        V::B(b) => Ok(b),
        other => Err(format!("condition is {other:?}")),
    }
}

struct P<'a> {
    s: &'a [u8],
    i: usize,
    lookup: &'a dyn Fn(&str) -> Option<V>,
}

impl P<'_> {
    fn ws(&mut self) {
        while self.i < self.s.len() && b" \t\r\n".contains(&self.s[self.i]) {
            self.i += 1;
        }
    }

    fn eat(&mut self, t: &str) -> bool {
        self.ws();
        if self.s[self.i..].starts_with(t.as_bytes()) {
            self.i += t.len();
            true
        } else {
            false
        }
    }

    fn or(&mut self) -> Result<V, String> {
        let mut l = self.and()?;
        while self.eat("||") {
            let r = self.and()?;
            l = match (l, r) {
                (V::B(a), V::B(b)) => V::B(a | b),
                _ => return Err("|| on non-booleans".into()),
            };
        }
        Ok(l)
    }

    fn and(&mut self) -> Result<V, String> {
        let mut l = self.cmp()?;
        while self.eat("&&") {
            let r = self.cmp()?;
            l = match (l, r) {
                (V::B(a), V::B(b)) => V::B(a & b),
                _ => return Err("&& on non-booleans".into()),
            };
        }
        Ok(l)
    }

    fn cmp(&mut self) -> Result<V, String> {
        let mut l = self.unary()?;
        loop {
            let op = ["==", "!=", "<=", ">=", "<", ">"].into_iter().find(|op| self.eat(op));
            let Some(op) = op else { return Ok(l) };
            let r = self.unary()?;
            let ord = match (&l, &r) {
                (V::I(a), V::I(b)) => Some(a.cmp(b)),
                (V::S(a), V::S(b)) => Some(a.cmp(b)),
                _ => None,
            };
            let same_type = std::mem::discriminant(&l) == std::mem::discriminant(&r);
            l = V::B(match op {
                "==" if same_type => l == r,
                "!=" if same_type => l != r,
                "<" => ord.ok_or("bad <")?.is_lt(),
                "<=" => ord.ok_or("bad <=")?.is_le(),
                ">" => ord.ok_or("bad >")?.is_gt(),
                ">=" => ord.ok_or("bad >=")?.is_ge(),
                _ => return Err(format!("{op} across types")),
            });
        }
    }

    fn unary(&mut self) -> Result<V, String> {
        self.ws();
        if self.s.get(self.i) == Some(&b'!') && self.s.get(self.i + 1) != Some(&b'=') {
            self.i += 1;
            return match self.unary()? {
                V::B(b) => Ok(V::B(!b)),
                _ => Err("! on non-boolean".into()),
            };
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<V, String> {
        self.ws();
        let Some(&c) = self.s.get(self.i) else {
            return Err("unexpected end".into());
        };
        if c == b'(' {
            self.i += 1;
            let v = self.or()?;
            if !self.eat(")") {
                return Err("missing )".into());
            }
            return Ok(v);
        }
        if c == b'"' {
            let mut out = Vec::new();
            self.i += 1;
            loop {
                match self.s.get(self.i) {
                    None => return Err("open string".into()),
                    Some(b'"') => {
                        self.i += 1;
                        return Ok(V::S(String::from_utf8(out).unwrap()));
                    }
                    Some(b'\\') => {
                        out.push(self.s[self.i + 1]);
                        self.i += 2;
                    }
                    Some(&b) => {
                        out.push(b);
                        self.i += 1;
                    }
                }
            }
        }
        let start = self.i;
        while self.i < self.s.len() && (self.s[self.i].is_ascii_alphanumeric() || b"_.".contains(&self.s[self.i])) {
            self.i += 1;
        }
        let word = std::str::from_utf8(&self.s[start..self.i]).unwrap();
        if word.is_empty() {
            return Err(format!("unexpected `{}`", c as char));
        }
        if word.as_bytes()[0].is_ascii_digit() {
            return word.parse().map(V::I).map_err(|e| format!("{word}: {e}"));
        }
        match word {
            "true" => Ok(V::B(true)),
            "false" => Ok(V::B(false)),
            _ => (self.lookup)(word).ok_or_else(|| format!("unknown symbol {word}")),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Style {
    Line(String),
    Block(String, String),
}

impl Style {
    fn open(&self) -> &str {
        match self {
            Style::Line(o) | Style::Block(o, _) => o,
        }
    }
}

/// Comment styles per extension, written out by hand.
pub fn default_styles() -> BTreeMap<String, Vec<Style>> {
    let mut m = BTreeMap::new();
    for e in [".html", ".xml", ".md"] {
        m.insert(e.to_string(), vec![Style::Block("<!--".into(), "-->".into())]);
    }
    for e in [".js", ".java", ".css", ".scss"] {
        m.insert(e.to_string(), vec![Style::Block("/*".into(), "*/".into()), Style::Line("//".into())]);
    }
    for e in [".yml", ".yaml", ".properties", ".sh"] {
        m.insert(e.to_string(), vec![Style::Line("#".into())]);
    }
    m.insert(".json".into(), vec![Style::Block("/*".into(), "*/".into())]);
    m
}

#[derive(Debug, Clone)]
enum Piece {
    Text(String),
    Dir {
        kw: String,
        arg: String,
        /// Surroundings kept when a `val` is rendered on its own line.
        pre: String,
        post: String,
        whole_line: bool,
    },
}

fn pieces(text: &str, styles: &[Style]) -> Vec<Piece> {
    let mut sorted: Vec<&Style> = styles.iter().collect();
    sorted.sort_by_key(|s| std::cmp::Reverse(s.open().len()));
    let alts: Vec<String> = sorted
        .iter()
        .map(|s| match s {
            Style::Line(o) => format!("{}[ \\t]*spl:([^\\n]*)", regex::escape(o)),
            Style::Block(o, c) => format!("{}[ \\t]*spl:((?s:.*?)){}", regex::escape(o), regex::escape(c)),
        })
        .collect();
    let re = Regex::new(&alts.join("|")).unwrap();

    let mut out = Vec::new();
    let mut cursor = 0;
    for caps in re.captures_iter(text) {
        let m = caps.get(0).unwrap();
        let body = caps.iter().skip(1).flatten().next().unwrap().as_str();
        let mut end = m.end();
        let mut body = body.to_string();
        if body.ends_with('\r') && text[..end].ends_with('\r') {
            body.pop();
            end -= 1;
        }
        let line_start = text[..m.start()].rfind('\n').map_or(0, |p| p + 1);
        let line_end = text[end..].find('\n').map_or(text.len(), |p| end + p + 1);
        let blank = |s: &str| s.chars().all(|c| matches!(c, ' ' | '\t' | '\r' | '\n'));
        let pre = &text[line_start..m.start()];
        let post = &text[end..line_end];
        let whole_line = blank(pre) && blank(post);
        let (seg_start, seg_end) = if whole_line { (line_start, line_end) } else { (m.start(), end) };
        assert!(seg_start >= cursor, "overlapping directives");
        if seg_start > cursor {
            out.push(Piece::Text(text[cursor..seg_start].to_string()));
        }
        let body = body.trim();
        let kw_end = body.find(|c: char| !c.is_ascii_alphabetic()).unwrap_or(body.len());
        out.push(Piece::Dir {
            kw: body[..kw_end].to_string(),
            arg: body[kw_end..].trim().to_string(),
            pre: pre.to_string(),
            post: post.to_string(),
            whole_line,
        });
        cursor = seg_end;
    }
    if cursor < text.len() {
        out.push(Piece::Text(text[cursor..].to_string()));
    }
    out
}

/// Number of directives the reference scanner finds.
pub fn count_directives(text: &str, styles: &[Style]) -> usize {
    pieces(text, styles).iter().filter(|p| matches!(p, Piece::Dir { .. })).count()
}

/// Directives that open something or stand alone: `if`, `set`, `val`, `uses`.
pub fn count_heads(text: &str, styles: &[Style]) -> usize {
    pieces(text, styles)
        .iter()
        .filter(|p| matches!(p, Piece::Dir { kw, .. } if ["if", "set", "val", "uses"].contains(&kw.as_str())))
        .count()
}

pub struct Ctx {
    pub features: Vec<String>,
    pub selected: Vec<String>,
    pub slots: BTreeMap<String, V>,
    pub links: Vec<String>,
}

/// Resolves every directive of `text`, recursively over the piece list.
pub fn resolve(text: &str, styles: &[Style], ctx: &Ctx) -> Result<String, String> {
    let ps = pieces(text, styles);
    let mut st = Interp {
        ps: &ps,
        i: 0,
        ctx,
        local: BTreeMap::new(),
        out: String::new(),
    };
    if let Some((kw, _)) = st.block(true)? {
        return Err(format!("stray {kw}"));
    }
    Ok(st.out)
}

struct Interp<'a> {
    ps: &'a [Piece],
    i: usize,
    ctx: &'a Ctx,
    local: BTreeMap<String, V>,
    out: String,
}

impl Interp<'_> {
    fn value(&self, name: &str) -> Option<V> {
        if self.ctx.features.iter().any(|f| f == name) {
            return Some(V::B(self.ctx.selected.iter().any(|f| f == name)));
        }
        self.local.get(name).or_else(|| self.ctx.slots.get(name)).cloned()
    }

    fn cond(&self, src: &str) -> Result<bool, String> {
        eval_bool(src, &|n| self.value(n))
    }

    /// Runs pieces until a closing keyword and returns it with its argument.
    fn block(&mut self, live: bool) -> Result<Option<(String, String)>, String> {
        while self.i < self.ps.len() {
            let p = self.ps[self.i].clone();
            self.i += 1;
            match p {
                Piece::Text(t) => {
                    if live {
                        self.out.push_str(&t);
                    }
                }
                Piece::Dir {
                    kw,
                    arg,
                    pre,
                    post,
                    whole_line,
                } => match kw.as_str() {
                    "elif" | "else" | "endif" | "enduses" => return Ok(Some((kw, arg))),
                    "if" => {
                        let mut taken = false;
                        let mut hit = live && self.cond(&arg)?;
                        loop {
                            taken |= hit;
                            let stop = self.block(hit)?;
                            match stop {
                                Some((k, a)) if k == "elif" => hit = live && !taken && self.cond(&a)?,
                                Some((k, _)) if k == "else" => hit = live && !taken,
                                Some((k, _)) if k == "endif" => break,
                                other => return Err(format!("if closed by {other:?}")),
                            }
                        }
                    }
                    "uses" => {
                        let on = live && self.ctx.links.contains(&arg);
                        match self.block(on)? {
                            Some((k, _)) if k == "enduses" => {}
                            other => return Err(format!("uses closed by {other:?}")),
                        }
                    }
                    "set" => {
                        if live {
                            let (name, rhs) = arg.split_once('=').ok_or("set without =")?;
                            let v = eval(rhs.trim(), &|n| self.value(n))?;
                            self.local.insert(name.trim().to_string(), v);
                        }
                    }
                    "val" => {
                        if live {
                            let v = self.value(&arg).ok_or_else(|| format!("no value for {arg}"))?;
                            if whole_line {
                                self.out.push_str(&pre);
                                self.out.push_str(&v.render());
                                self.out.push_str(&post);
                            } else {
                                self.out.push_str(&v.render());
                            }
                        }
                    }
                    other => return Err(format!("unknown directive {other}")),
                },
            }
        }
        Ok(None)
    }
}
