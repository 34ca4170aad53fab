//! Text formats: domain theories (`.dt`), sequence diagrams (`.sd`) and
//! statecharts (`.sc`). `#` starts a comment in all three.
//!
//! The domain-theory grammar follows the usual OCL-ish layout:
//!
//! ```text
//! CoinInMachine, CoinInReturnSlot : Boolean
//! Coin : 0..1
//! SelectedCoffeeType : enum {none,Espresso,Cappuchino,Milk}
//!
//! context Enter Selection (CT : enum {none,Espresso,Cappuchino,Milk})
//!    pre:  CoffeeTypeSelected = F ;
//!    post: CoffeeTypeSelected = T and SelectedCoffeeType = CT ;
//! ```
//!
//! Sequence diagrams and statecharts are line oriented:
//!
//! ```text
//! sd SD1
//! objects User, Coffee-UI
//! msg 1 Coffee-UI -> User : Display Ready Light
//! msg 2 User -> Coffee-UI : Insert coin
//! assume no-loop 1 2
//! ```
//!
//! ```text
//! statechart Coffee-UI
//! state N1
//! state C1 {
//!   state N2
//!   initial N2
//! }
//! initial N1
//! N1 -> C1 : Insert coin [CoinInMachine = F] / Request Selection
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::model::{
    label_key, Atom, Condition, DomainTheory, Message, MessageSpec, NoLoop, Node, Operand, SequenceDiagram,
    StateVariable, Statechart, Transition, Value, VarDomain,
};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SourceSpan {
    pub file: Option<String>,
    pub line: usize,
    pub col_start: usize,
    pub col_end: usize,
}

impl SourceSpan {
    fn new(line: usize, col_start: usize, col_end: usize) -> Self {
        SourceSpan {
            file: None,
            line,
            col_start,
            col_end: col_end.max(col_start),
        }
    }
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(file) = &self.file {
            write!(f, "{file}:")?;
        }
        write!(f, "{}:{}", self.line, self.col_start)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{span}: {message}{}", .expected.as_ref().map(|e| format!(" (expected {e})")).unwrap_or_default())]
pub struct ParseError {
    pub span: SourceSpan,
    pub message: String,
    pub expected: Option<String>,
}

impl ParseError {
    fn at(span: SourceSpan, message: impl Into<String>) -> Self {
        ParseError {
            span,
            message: message.into(),
            expected: None,
        }
    }

    fn expected(span: SourceSpan, message: impl Into<String>, expected: impl Into<String>) -> Self {
        ParseError {
            span,
            message: message.into(),
            expected: Some(expected.into()),
        }
    }

    pub fn with_file(mut self, file: impl Into<String>) -> Self {
        self.span.file = Some(file.into());
        self
    }
}

type Result<T> = std::result::Result<T, ParseError>;

// ---------------------------------------------------------------------------
// Lexer (domain theories and guards)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(String),
    Punct(&'static str),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) | Tok::Int(s) => write!(f, "`{s}`"),
            Tok::Punct(p) => write!(f, "`{p}`"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    span: SourceSpan,
}

const PUNCTS: [&str; 13] = ["..", "->", ":", ",", "=", ";", "(", ")", "{", "}", "[", "]", "/"];

fn lex(text: &str, first_line: usize, first_col: usize) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + first_line;
        let col0 = if lineno == 0 { first_col } else { 1 };
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let col = col0 + i;
            if c == '#' {
                break;
            }
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            let start = i;
            if c.is_alphabetic() || c == '_' {
                i += 1;
                while i < chars.len() {
                    let d = chars[i];
                    let dash_word = d == '-' && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
                    if d.is_alphanumeric() || d == '_' || dash_word {
                        i += 1;
                    } else {
                        break;
                    }
                }
                let s: String = chars[start..i].iter().collect();
                out.push(Token {
                    tok: Tok::Ident(s),
                    span: SourceSpan::new(line_no, col, col0 + i - 1),
                });
                continue;
            }
            let negative = c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit());
            if c.is_ascii_digit() || negative {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let s: String = chars[start..i].iter().collect();
                out.push(Token {
                    tok: Tok::Int(s),
                    span: SourceSpan::new(line_no, col, col0 + i - 1),
                });
                continue;
            }
            let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
            match PUNCTS.iter().find(|p| rest.starts_with(**p)) {
                Some(p) => {
                    i += p.len();
                    out.push(Token {
                        tok: Tok::Punct(p),
                        span: SourceSpan::new(line_no, col, col + p.len() - 1),
                    });
                }
                None => {
                    return Err(ParseError::at(
                        SourceSpan::new(line_no, col, col),
                        format!("unexpected character `{c}`"),
                    ))
                }
            }
        }
    }
    Ok(out)
}

struct Cursor {
    toks: Vec<Token>,
    pos: usize,
    eof: SourceSpan,
}

impl Cursor {
    fn new(toks: Vec<Token>, text: &str) -> Self {
        let line = text.lines().count().max(1);
        let col = text.lines().last().map_or(1, |l| l.chars().count() + 1);
        Cursor {
            toks,
            pos: 0,
            eof: SourceSpan::new(line, col, col),
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k).map(|t| &t.tok)
    }

    fn span(&self) -> SourceSpan {
        self.toks
            .get(self.pos)
            .map_or_else(|| self.eof.clone(), |t| t.span.clone())
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == kw)
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Some(Tok::Punct(q)) if *q == p)
    }

    /// `pre:` / `post:` clause header ahead?
    fn at_clause(&self, kw: &str) -> bool {
        self.is_kw(kw) && matches!(self.peek_at(1), Some(Tok::Punct(":")))
    }

    fn found(&self) -> String {
        self.peek()
            .map_or_else(|| "end of input".to_string(), |t| format!("found {t}"))
    }

    fn expect_punct(&mut self, p: &'static str) -> Result<SourceSpan> {
        if self.is_punct(p) {
            Ok(self.next().unwrap().span)
        } else {
            Err(ParseError::expected(self.span(), self.found(), format!("`{p}`")))
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, SourceSpan)> {
        match self.peek() {
            Some(Tok::Ident(_)) => {
                let t = self.next().unwrap();
                let Tok::Ident(s) = t.tok else { unreachable!() };
                Ok((s, t.span))
            }
            _ => Err(ParseError::expected(self.span(), self.found(), what)),
        }
    }

    fn int(&mut self) -> Result<(i64, SourceSpan)> {
        match self.peek() {
            Some(Tok::Int(_)) => {
                let t = self.next().unwrap();
                let Tok::Int(s) = t.tok else { unreachable!() };
                let v = s
                    .parse()
                    .map_err(|_| ParseError::at(t.span.clone(), "integer out of range"))?;
                Ok((v, t.span))
            }
            _ => Err(ParseError::expected(self.span(), self.found(), "integer")),
        }
    }

    /// Literal token: identifier or integer.
    fn literal(&mut self) -> Result<(String, SourceSpan)> {
        match self.peek() {
            Some(Tok::Ident(_)) | Some(Tok::Int(_)) => {
                let t = self.next().unwrap();
                let (Tok::Ident(s) | Tok::Int(s)) = t.tok else {
                    unreachable!()
                };
                Ok((s, t.span))
            }
            _ => Err(ParseError::expected(self.span(), self.found(), "value")),
        }
    }
}

// ---------------------------------------------------------------------------
// Domain theory
// ---------------------------------------------------------------------------

fn parse_domain(cur: &mut Cursor) -> Result<VarDomain> {
    let span = cur.span();
    if let Some(Tok::Ident(s)) = cur.peek() {
        match s.as_str() {
            "Boolean" | "boolean" | "Bool" | "bool" => {
                cur.next();
                return Ok(VarDomain::Boolean);
            }
            "enum" => {
                cur.next();
                cur.expect_punct("{")?;
                let mut labels: Vec<String> = Vec::new();
                loop {
                    let (l, lspan) = cur.ident("enumeration label")?;
                    if l == "T" || l == "F" {
                        return Err(ParseError::at(lspan, "`T` and `F` are reserved for booleans"));
                    }
                    if labels.contains(&l) {
                        return Err(ParseError::at(lspan, format!("duplicate enumeration label `{l}`")));
                    }
                    labels.push(l);
                    if cur.is_punct(",") {
                        cur.next();
                    } else {
                        break;
                    }
                }
                cur.expect_punct("}")?;
                return Ok(VarDomain::Enum(labels));
            }
            _ => {}
        }
    }
    if let Some(Tok::Int(_)) = cur.peek() {
        let (lo, _) = cur.int()?;
        cur.expect_punct("..")?;
        let (hi, hspan) = cur.int()?;
        if lo > hi {
            return Err(ParseError::at(hspan, format!("empty range {lo}..{hi}")));
        }
        return Ok(VarDomain::Range { lo, hi });
    }
    Err(ParseError::expected(
        span,
        cur.found(),
        "`Boolean`, `lo..hi` or `enum {...}`",
    ))
}

fn parse_condition(cur: &mut Cursor, vars: &[StateVariable], params: &[(String, VarDomain)]) -> Result<Condition> {
    let mut atoms: Vec<Atom> = Vec::new();
    let at_end = |c: &Cursor| c.peek().is_none() || c.at_clause("post") || c.is_kw("context");
    if at_end(cur) {
        return Ok(Condition::default());
    }
    if cur.is_punct(";") {
        cur.next();
        return Ok(Condition::default());
    }
    loop {
        let (name, nspan) = cur.ident("state variable")?;
        let Some(var) = vars.iter().find(|v| v.name == name) else {
            return Err(ParseError::at(nspan, format!("unknown state variable `{name}`")));
        };
        if atoms.iter().any(|a| a.var == name) {
            return Err(ParseError::at(
                nspan,
                format!("variable `{name}` constrained twice in one condition"),
            ));
        }
        cur.expect_punct("=")?;
        let (lit, lspan) = cur.literal()?;
        let value = if let Some((_, pdom)) = params.iter().find(|(p, _)| *p == lit) {
            if !pdom.values().iter().all(|v| var.domain.contains(v)) {
                return Err(ParseError::at(
                    lspan,
                    format!("parameter `{lit}` ranges outside the domain of `{name}`"),
                ));
            }
            Operand::Param(lit)
        } else {
            match var.domain.parse_literal(&lit) {
                Some(v) => Operand::Value(v),
                None => {
                    return Err(ParseError::at(
                        lspan,
                        format!("`{lit}` is outside the domain {} of `{name}`", var.domain),
                    ))
                }
            }
        };
        atoms.push(Atom { var: name, value });
        if cur.is_kw("and") {
            cur.next();
            continue;
        }
        cur.expect_punct(";")?;
        return Ok(Condition { atoms });
    }
}

pub fn parse_domain_theory(text: &str) -> Result<DomainTheory> {
    let mut cur = Cursor::new(lex(text, 1, 1)?, text);
    let mut dt = DomainTheory::default();
    let mut seen_specs: HashSet<String> = HashSet::new();
    while cur.peek().is_some() {
        if cur.is_kw("context") {
            cur.next();
            let name_span = cur.span();
            let mut words = Vec::new();
            while let Some(tok) = cur.peek() {
                if cur.is_punct("(") || cur.at_clause("pre") || cur.at_clause("post") || cur.is_kw("context") {
                    break;
                }
                match tok {
                    Tok::Ident(s) | Tok::Int(s) => {
                        words.push(s.clone());
                        cur.next();
                    }
                    _ => break,
                }
            }
            if words.is_empty() {
                return Err(ParseError::expected(name_span, cur.found(), "context name"));
            }
            let name = words.join(" ");
            if !seen_specs.insert(label_key(&name)) {
                return Err(ParseError::at(name_span, format!("duplicate context `{name}`")));
            }
            let mut params: Vec<(String, VarDomain)> = Vec::new();
            if cur.is_punct("(") {
                cur.next();
                loop {
                    let (p, pspan) = cur.ident("parameter name")?;
                    if params.iter().any(|(q, _)| *q == p) {
                        return Err(ParseError::at(pspan, format!("duplicate parameter `{p}`")));
                    }
                    cur.expect_punct(":")?;
                    params.push((p, parse_domain(&mut cur)?));
                    if cur.is_punct(",") {
                        cur.next();
                    } else {
                        break;
                    }
                }
                cur.expect_punct(")")?;
            }
            let mut pre = Condition::default();
            let mut post = Condition::default();
            if cur.at_clause("pre") {
                cur.next();
                cur.next();
                pre = parse_condition(&mut cur, &dt.variables, &params)?;
            }
            if cur.at_clause("post") {
                cur.next();
                cur.next();
                post = parse_condition(&mut cur, &dt.variables, &params)?;
            }
            if cur.peek().is_some() && !cur.is_kw("context") {
                return Err(ParseError::expected(
                    cur.span(),
                    cur.found(),
                    "`pre:`, `post:` or `context`",
                ));
            }
            dt.specs.push(MessageSpec {
                name,
                params,
                pre,
                post,
            });
        } else {
            if !dt.specs.is_empty() {
                return Err(ParseError::expected(
                    cur.span(),
                    format!("{} after the first context", cur.found()),
                    "`context`",
                ));
            }
            let mut names = Vec::new();
            loop {
                names.push(cur.ident("state variable name")?);
                if cur.is_punct(",") {
                    cur.next();
                } else {
                    break;
                }
            }
            cur.expect_punct(":")?;
            let domain = parse_domain(&mut cur)?;
            for (name, span) in names {
                if dt.variables.iter().any(|v| v.name == name) {
                    return Err(ParseError::at(span, format!("duplicate state variable `{name}`")));
                }
                dt.variables.push(StateVariable {
                    index: dt.variables.len(),
                    name,
                    domain: domain.clone(),
                });
            }
        }
    }
    Ok(dt)
}

pub fn print_domain_theory(dt: &DomainTheory) -> String {
    let mut out = String::new();
    for v in &dt.variables {
        writeln!(out, "{} : {}", v.name, v.domain).unwrap();
    }
    for spec in &dt.specs {
        out.push('\n');
        write!(out, "context {}", spec.name).unwrap();
        if !spec.params.is_empty() {
            let ps: Vec<String> = spec.params.iter().map(|(p, d)| format!("{p} : {d}")).collect();
            write!(out, " ({})", ps.join(", ")).unwrap();
        }
        out.push('\n');
        for (kw, cond) in [("pre", &spec.pre), ("post", &spec.post)] {
            if cond.is_empty() {
                writeln!(out, "   {kw}:").unwrap();
            } else {
                writeln!(out, "   {kw}: {cond} ;").unwrap();
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Sequence diagrams
// ---------------------------------------------------------------------------

fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("")
}

fn col_of(line: &str, sub: &str) -> usize {
    // `sub` is a subslice of `line`
    let offset = sub.as_ptr() as usize - line.as_ptr() as usize;
    line[..offset].chars().count() + 1
}

fn span_of(line_no: usize, line: &str, sub: &str) -> SourceSpan {
    let c = col_of(line, sub);
    SourceSpan::new(line_no, c, c + sub.chars().count().saturating_sub(1))
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn valid_name(s: &str) -> bool {
    !s.is_empty()
        && !s
            .chars()
            .any(|c| c.is_whitespace() || "{}:,;#[]/()".contains(c) || c == '>')
}

const LABEL_FORBIDDEN: &str = "[]/;,:";

/// Split `Enter Selection(Espresso)` into label and arguments.
fn split_label(text: &str) -> (String, Vec<String>) {
    let t = text.trim();
    if let (Some(open), true) = (t.find('('), t.ends_with(')')) {
        let label = normalize_ws(&t[..open]);
        let inner = &t[open + 1..t.len() - 1];
        let args = if inner.trim().is_empty() {
            Vec::new()
        } else {
            inner.split(',').map(|a| a.trim().to_string()).collect()
        };
        (label, args)
    } else {
        (normalize_ws(t), Vec::new())
    }
}

pub fn parse_sd(text: &str) -> Result<SequenceDiagram> {
    let mut sd = SequenceDiagram::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw);
        let body = line.trim();
        if body.is_empty() {
            continue;
        }
        let (kw, rest) = body.split_once(char::is_whitespace).unwrap_or((body, ""));
        let rest = rest.trim();
        match kw {
            "sd" => sd.name = normalize_ws(rest),
            "objects" => {
                for name in rest.split(|c: char| c == ',' || c.is_whitespace()) {
                    if name.is_empty() {
                        continue;
                    }
                    let span = span_of(line_no, raw, name);
                    if !valid_name(name) {
                        return Err(ParseError::at(span, format!("invalid object name `{name}`")));
                    }
                    if sd.has_object(name) {
                        return Err(ParseError::at(span, format!("duplicate object `{name}`")));
                    }
                    sd.objects.push(name.to_string());
                }
            }
            "msg" => {
                let expected_id = sd.messages.len() + 1;
                let mut rest = rest;
                let first = rest.split_whitespace().next().unwrap_or("");
                if !first.is_empty() && first.chars().all(|c| c.is_ascii_digit()) {
                    let id: usize = first.parse().unwrap_or(0);
                    if id != expected_id {
                        return Err(ParseError::expected(
                            span_of(line_no, raw, first),
                            format!("message number {id} out of sequence"),
                            format!("{expected_id}"),
                        ));
                    }
                    rest = rest[first.len()..].trim_start();
                }
                let Some((sender, after)) = rest.split_once("->") else {
                    return Err(ParseError::expected(
                        span_of(line_no, raw, rest),
                        "malformed message",
                        "`sender -> receiver : label`",
                    ));
                };
                let Some((receiver, label_text)) = after.split_once(':') else {
                    return Err(ParseError::expected(
                        span_of(line_no, raw, after),
                        "missing label",
                        "`:`",
                    ));
                };
                let mut ends = Vec::new();
                for part in [sender, receiver] {
                    let name = part.trim();
                    let span = span_of(line_no, raw, if name.is_empty() { part } else { name });
                    if !sd.has_object(name) {
                        return Err(ParseError::at(span, format!("undeclared object `{name}`")));
                    }
                    ends.push(name.to_string());
                }
                let (label, args) = split_label(label_text);
                let lspan = span_of(line_no, raw, label_text);
                if label.is_empty() {
                    return Err(ParseError::expected(lspan, "empty message label", "label"));
                }
                if label
                    .chars()
                    .any(|c| LABEL_FORBIDDEN.contains(c) || c == '(' || c == ')')
                {
                    return Err(ParseError::at(
                        lspan,
                        format!("message label `{label}` contains a reserved character"),
                    ));
                }
                if args.iter().any(|a| !valid_name(a) && a.parse::<i64>().is_err()) {
                    return Err(ParseError::at(lspan, "malformed argument list"));
                }
                let receiver = ends.pop().unwrap();
                let sender = ends.pop().unwrap();
                sd.messages.push(Message {
                    id: expected_id,
                    label,
                    args,
                    sender,
                    receiver,
                });
            }
            "assume" => {
                let words: Vec<&str> = rest.split_whitespace().collect();
                let span = span_of(line_no, raw, body);
                if words.first() != Some(&"no-loop") || words.len() != 3 {
                    return Err(ParseError::expected(
                        span,
                        "malformed assumption",
                        "`assume no-loop i j`",
                    ));
                }
                let parse = |w: &str| -> Result<usize> {
                    w.parse::<usize>().ok().filter(|&n| n >= 1).ok_or_else(|| {
                        ParseError::expected(
                            span_of(line_no, raw, w),
                            format!("bad message number `{w}`"),
                            "positive integer",
                        )
                    })
                };
                let (a, b) = (parse(words[1])?, parse(words[2])?);
                sd.no_loops.push(NoLoop::new(a, b));
            }
            other => {
                return Err(ParseError::expected(
                    span_of(line_no, raw, other),
                    format!("unknown directive `{other}`"),
                    "`sd`, `objects`, `msg` or `assume`",
                ))
            }
        }
    }
    Ok(sd)
}

/// Parse and check message arguments against the theory's parameter lists.
pub fn parse_sd_with_theory(text: &str, dt: &DomainTheory) -> Result<SequenceDiagram> {
    let sd = parse_sd(text)?;
    let msg_lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| strip_comment(l).trim_start().starts_with("msg"))
        .map(|(i, l)| (i + 1, l))
        .collect();
    for (m, (line_no, raw)) in sd.messages.iter().zip(msg_lines) {
        if let Some(spec) = dt.spec_for(&m.label) {
            if spec.params.len() != m.args.len() {
                let label_at = raw.rfind(':').map_or(raw, |i| &raw[i + 1..]);
                return Err(ParseError::at(
                    span_of(line_no, raw, label_at),
                    format!(
                        "`{}` takes {} argument(s), {} given",
                        spec.name,
                        spec.params.len(),
                        m.args.len()
                    ),
                ));
            }
        }
    }
    Ok(sd)
}

pub fn print_sd(sd: &SequenceDiagram) -> String {
    let mut out = String::new();
    if !sd.name.is_empty() {
        writeln!(out, "sd {}", sd.name).unwrap();
    }
    if !sd.objects.is_empty() {
        writeln!(out, "objects {}", sd.objects.join(", ")).unwrap();
    }
    for m in &sd.messages {
        writeln!(out, "msg {} {} -> {} : {}", m.id, m.sender, m.receiver, m.text()).unwrap();
    }
    for n in &sd.no_loops {
        writeln!(out, "assume no-loop {} {}", n.first, n.last).unwrap();
    }
    out
}

// ---------------------------------------------------------------------------
// Statecharts
// ---------------------------------------------------------------------------

struct Scope {
    name: String,
    nodes: Vec<Node>,
    initial: Option<(String, SourceSpan)>,
    transitions: Vec<(Transition, SourceSpan)>,
    opened: SourceSpan,
}

impl Scope {
    fn new(name: String, opened: SourceSpan) -> Self {
        Scope {
            name,
            nodes: Vec::new(),
            initial: None,
            transitions: Vec::new(),
            opened,
        }
    }
}

fn parse_guard(text: &str, line_no: usize, col: usize) -> Result<Condition> {
    let mut cur = Cursor::new(lex(text, line_no, col)?, text);
    let mut atoms: Vec<Atom> = Vec::new();
    loop {
        let (var, vspan) = cur.ident("state variable")?;
        if atoms.iter().any(|a| a.var == var) {
            return Err(ParseError::at(
                vspan,
                format!("variable `{var}` constrained twice in one guard"),
            ));
        }
        cur.expect_punct("=")?;
        let (lit, _) = cur.literal()?;
        atoms.push(Atom {
            var,
            value: Operand::Value(Value::from_token(&lit)),
        });
        if cur.is_kw("and") {
            cur.next();
            continue;
        }
        if cur.peek().is_some() {
            return Err(ParseError::expected(cur.span(), cur.found(), "`and` or `]`"));
        }
        return Ok(Condition { atoms });
    }
}

/// Split at commas that are not inside parentheses.
fn split_actions(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    for c in s.chars() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(normalize_ws(&cur));
                cur.clear();
                continue;
            }
            _ => {}
        }
        cur.push(c);
    }
    out.push(normalize_ws(&cur));
    out.retain(|a| !a.is_empty());
    out
}

fn parse_transition_label(
    raw: &str,
    label: &str,
    line_no: usize,
) -> Result<(Option<String>, Option<Condition>, Vec<String>)> {
    let (head, actions) = match label.find('/') {
        Some(i) => (&label[..i], split_actions(&label[i + 1..])),
        None => (label, Vec::new()),
    };
    let (event_text, guard) = match head.find('[') {
        Some(open) => {
            let Some(close) = head.rfind(']') else {
                return Err(ParseError::expected(
                    span_of(line_no, raw, &head[open..]),
                    "unclosed guard",
                    "`]`",
                ));
            };
            if !head[close + 1..].trim().is_empty() {
                return Err(ParseError::at(
                    span_of(line_no, raw, &head[close + 1..]),
                    "text after guard",
                ));
            }
            let inner = &head[open + 1..close];
            let g = parse_guard(inner, line_no, col_of(raw, inner))?;
            (&head[..open], Some(g))
        }
        None => (head, None),
    };
    let event = normalize_ws(event_text);
    Ok(((!event.is_empty()).then_some(event), guard, actions))
}

pub fn parse_sc(text: &str) -> Result<Statechart> {
    let mut stack: Vec<Scope> = vec![Scope::new(String::new(), SourceSpan::new(1, 1, 1))];
    let mut declared: BTreeMap<String, SourceSpan> = BTreeMap::new();
    let mut pending: Vec<(Transition, SourceSpan)> = Vec::new();
    let mut chart_name = String::new();
    let mut seen_content = false;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw);
        let body = line.trim();
        if body.is_empty() {
            continue;
        }
        let (kw, rest) = body.split_once(char::is_whitespace).unwrap_or((body, ""));
        let rest = rest.trim();
        match kw {
            "statechart" if !seen_content && stack.len() == 1 => {
                chart_name = normalize_ws(rest);
            }
            "state" => {
                seen_content = true;
                let (name, opens) = match rest.strip_suffix('{') {
                    Some(n) => (n.trim(), true),
                    None => (rest, false),
                };
                let span = span_of(line_no, raw, if name.is_empty() { body } else { name });
                if !valid_name(name) {
                    return Err(ParseError::expected(
                        span,
                        format!("invalid state name `{name}`"),
                        "state name",
                    ));
                }
                if declared.contains_key(name) {
                    return Err(ParseError::at(span, format!("duplicate state `{name}`")));
                }
                declared.insert(name.to_string(), span.clone());
                if opens {
                    stack.push(Scope::new(name.to_string(), span));
                } else {
                    stack.last_mut().unwrap().nodes.push(Node::Simple(name.to_string()));
                }
            }
            "}" if rest.is_empty() => {
                let span = span_of(line_no, raw, body);
                if stack.len() == 1 {
                    return Err(ParseError::at(span, "unmatched `}`"));
                }
                let scope = stack.pop().unwrap();
                let chart = close_scope(scope, &mut pending)?;
                stack
                    .last_mut()
                    .unwrap()
                    .nodes
                    .push(Node::Composite(chart.name.clone(), chart));
            }
            "initial" => {
                seen_content = true;
                let span = span_of(line_no, raw, if rest.is_empty() { body } else { rest });
                let scope = stack.last_mut().unwrap();
                if scope.initial.is_some() {
                    return Err(ParseError::at(span, "initial state declared twice in this scope"));
                }
                if !valid_name(rest) {
                    return Err(ParseError::expected(span, "missing initial state name", "state name"));
                }
                scope.initial = Some((rest.to_string(), span));
            }
            _ => {
                seen_content = true;
                let Some((from, after)) = body.split_once("->") else {
                    return Err(ParseError::expected(
                        span_of(line_no, raw, kw),
                        format!("unknown directive `{kw}`"),
                        "`state`, `initial`, `}` or a transition",
                    ));
                };
                let (to, label) = after.split_once(':').unwrap_or((after, ""));
                let (from, to) = (from.trim(), to.trim());
                for name in [from, to] {
                    if !valid_name(name) {
                        return Err(ParseError::expected(
                            span_of(line_no, raw, if name.is_empty() { body } else { name }),
                            format!("invalid transition endpoint `{name}`"),
                            "state name",
                        ));
                    }
                }
                let (event, guard, actions) = parse_transition_label(raw, label, line_no)?;
                let t = Transition {
                    from: from.to_string(),
                    to: to.to_string(),
                    event,
                    guard,
                    actions,
                };
                stack
                    .last_mut()
                    .unwrap()
                    .transitions
                    .push((t, span_of(line_no, raw, body)));
            }
        }
    }
    if stack.len() > 1 {
        let open = stack.pop().unwrap();
        return Err(ParseError::expected(
            open.opened,
            format!("state `{}` is never closed", open.name),
            "`}`",
        ));
    }
    let mut root = stack.pop().unwrap();
    root.name = chart_name;
    let chart = close_scope(root, &mut pending)?;
    for (t, span) in pending {
        for end in [&t.from, &t.to] {
            if !declared.contains_key(end) {
                return Err(ParseError::at(
                    span,
                    format!("transition refers to undeclared state `{end}`"),
                ));
            }
        }
    }
    Ok(chart)
}

fn close_scope(scope: Scope, pending: &mut Vec<(Transition, SourceSpan)>) -> Result<Statechart> {
    let Some((initial, ispan)) = scope.initial else {
        let what = if scope.name.is_empty() {
            "statechart has no initial state".to_string()
        } else {
            format!("composite state `{}` has no initial state", scope.name)
        };
        return Err(ParseError::expected(scope.opened, what, "`initial <state>`"));
    };
    if !scope.nodes.iter().any(|n| n.name() == initial) {
        return Err(ParseError::at(
            ispan,
            format!("initial state `{initial}` is not declared in this scope"),
        ));
    }
    let mut transitions = Vec::new();
    for (t, span) in scope.transitions {
        pending.push((t.clone(), span));
        transitions.push(t);
    }
    Ok(Statechart {
        name: scope.name,
        nodes: scope.nodes,
        initial,
        transitions,
    })
}

fn write_transition(out: &mut String, indent: &str, t: &Transition) {
    write!(out, "{indent}{} -> {}", t.from, t.to).unwrap();
    let mut label = String::new();
    if let Some(e) = &t.event {
        label.push_str(e);
    }
    if let Some(g) = &t.guard {
        if !label.is_empty() {
            label.push(' ');
        }
        write!(label, "[{g}]").unwrap();
    }
    if !t.actions.is_empty() {
        if !label.is_empty() {
            label.push(' ');
        }
        write!(label, "/ {}", t.actions.join(", ")).unwrap();
    }
    if !label.is_empty() {
        write!(out, " : {label}").unwrap();
    }
    out.push('\n');
}

fn write_chart(out: &mut String, c: &Statechart, depth: usize, notes: &BTreeMap<String, String>) {
    let indent = "  ".repeat(depth);
    for n in &c.nodes {
        match n {
            Node::Simple(name) => {
                write!(out, "{indent}state {name}").unwrap();
                if let Some(note) = notes.get(name) {
                    write!(out, "  # {note}").unwrap();
                }
                out.push('\n');
            }
            Node::Composite(name, child) => {
                writeln!(out, "{indent}state {name} {{").unwrap();
                write_chart(out, child, depth + 1, notes);
                writeln!(out, "{indent}}}").unwrap();
            }
        }
    }
    writeln!(out, "{indent}initial {}", c.initial).unwrap();
    for t in &c.transitions {
        write_transition(out, &indent, t);
    }
}

pub fn print_sc(chart: &Statechart) -> String {
    print_sc_with_notes(chart, &BTreeMap::new())
}

/// Print with a trailing comment on selected simple states (used for the
/// state vectors of synthesized charts).
pub fn print_sc_with_notes(chart: &Statechart, notes: &BTreeMap<String, String>) -> String {
    let mut out = String::new();
    if !chart.name.is_empty() {
        writeln!(out, "statechart {}", chart.name).unwrap();
    }
    write_chart(&mut out, chart, 0, notes);
    out
}
