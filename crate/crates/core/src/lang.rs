//! ASCII surface syntax: lexer, parser and renderer for events, partial
//! orders, antecedents, rules and rule files.
//!
//! Operator priority, tightest first: relation operators, `->`, `!`,
//! quantifiers, `&`, `|`. Binary operators associate to the right.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::events::{AnswerValue, Event, Payload, Port, RequestKind, StreamIndex, StreamVar};
use crate::order::{Operand, OrderExpr, QuantKind, RelOp, Relation};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub message: String,
    pub line: usize,
    pub col: usize,
}

impl ParseError {
    pub fn new(message: impl Into<String>, line: usize, col: usize) -> ParseError {
        ParseError {
            message: message.into(),
            line,
            col,
        }
    }

    /// Re-anchors an error produced on a single line of a larger file.
    pub fn at_line(mut self, line: usize) -> ParseError {
        self.line = line;
        self
    }
}

/// Drops a trailing `#` comment.
pub fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(at) => &line[..at],
        None => line,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Num(u64),
    Arrow,
    LArrow,
    RArrow,
    Le,
    Ge,
    Ne,
    Assign,
    Lt,
    Gt,
    Eq,
    Bang,
    Amp,
    Pipe,
    LParen,
    RParen,
    LBrack,
    RBrack,
    LBrace,
    RBrace,
    Comma,
    Colon,
    Dot,
    Under,
    Prime,
    Plus,
    Minus,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Tok::Ident(s) => return write!(f, "`{s}`"),
            Tok::Num(n) => return write!(f, "`{n}`"),
            Tok::Arrow => "->",
            Tok::LArrow => "<=",
            Tok::RArrow => "=>",
            Tok::Le => "=<",
            Tok::Ge => ">=",
            Tok::Ne => "!=",
            Tok::Assign => ":=",
            Tok::Lt => "<",
            Tok::Gt => ">",
            Tok::Eq => "=",
            Tok::Bang => "!",
            Tok::Amp => "&",
            Tok::Pipe => "|",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBrack => "[",
            Tok::RBrack => "]",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::Comma => ",",
            Tok::Colon => ":",
            Tok::Dot => ".",
            Tok::Under => "_",
            Tok::Prime => "'",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Eof => return f.write_str("end of input"),
        };
        write!(f, "`{s}`")
    }
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    start: usize,
    end: usize,
}

fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let mut chars = src.char_indices().peekable();
    while let Some((start, c)) = chars.next() {
        if c.is_whitespace() {
            continue;
        }
        let mut next_is = |want: char| -> bool {
            if chars.peek().map(|(_, c)| *c) == Some(want) {
                chars.next();
                true
            } else {
                false
            }
        };
        let tok = match c {
            'a'..='z' | 'A'..='Z' => {
                let mut end = start + c.len_utf8();
                while let Some((at, c)) = chars.peek().copied() {
                    if c.is_ascii_alphanumeric() {
                        end = at + c.len_utf8();
                        chars.next();
                    } else {
                        break;
                    }
                }
                Tok::Ident(src[start..end].to_string())
            }
            '0'..='9' => {
                let mut end = start + 1;
                while let Some((at, c)) = chars.peek().copied() {
                    if c.is_ascii_digit() {
                        end = at + 1;
                        chars.next();
                    } else {
                        break;
                    }
                }
                let text = &src[start..end];
                let n = text.parse().map_err(|_| {
                    let (line, col) = line_col(src, start);
                    ParseError::new(format!("number `{text}` is too large"), line, col)
                })?;
                Tok::Num(n)
            }
            '-' if next_is('>') => Tok::Arrow,
            '-' => Tok::Minus,
            '<' if next_is('=') => Tok::LArrow,
            '<' => Tok::Lt,
            '=' if next_is('<') => Tok::Le,
            '=' if next_is('>') => Tok::RArrow,
            '=' => Tok::Eq,
            '>' if next_is('=') => Tok::Ge,
            '>' => Tok::Gt,
            '!' if next_is('=') => Tok::Ne,
            '!' => Tok::Bang,
            ':' if next_is('=') => Tok::Assign,
            ':' => Tok::Colon,
            '&' => Tok::Amp,
            '|' => Tok::Pipe,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '[' => Tok::LBrack,
            ']' => Tok::RBrack,
            '{' => Tok::LBrace,
            '}' => Tok::RBrace,
            ',' => Tok::Comma,
            '.' => Tok::Dot,
            '_' => Tok::Under,
            '\'' | '′' => Tok::Prime,
            '+' => Tok::Plus,
            '→' => Tok::Arrow,
            '∧' => Tok::Amp,
            '¬' => Tok::Bang,
            '⇐' => Tok::LArrow,
            '⇒' => Tok::RArrow,
            '≤' => Tok::Le,
            '≥' => Tok::Ge,
            '≠' => Tok::Ne,
            '∃' => Tok::Ident("exists".into()),
            '∀' => Tok::Ident("forall".into()),
            '⊤' => Tok::Ident("true".into()),
            '⊥' => Tok::Ident("false".into()),
            other => {
                let (line, col) = line_col(src, start);
                return Err(ParseError::new(
                    format!("unexpected character `{other}`"),
                    line,
                    col,
                ));
            }
        };
        let end = chars.peek().map_or(src.len(), |(at, _)| *at);
        out.push(Token { tok, start, end });
    }
    out.push(Token {
        tok: Tok::Eof,
        start: src.len(),
        end: src.len(),
    });
    Ok(out)
}

/// Category helpers that expand to a choice of concrete events.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Category {
    Terminate,
    Terminated,
    Request,
    Answer,
}

impl Category {
    fn from_name(name: &str) -> Option<Category> {
        Some(match name {
            "terminate" => Category::Terminate,
            "terminated" => Category::Terminated,
            "request" => Category::Request,
            "answer" => Category::Answer,
            _ => return None,
        })
    }

    /// The concrete alternatives for `var` at `port`, in canonical order.
    pub fn events(self, port: Option<&Port>, var: &StreamVar) -> Vec<Event> {
        match self {
            Category::Terminate => vec![
                Event::abort(port, var.clone()),
                Event::error(port, None, var.clone()),
            ],
            Category::Terminated => vec![
                Event::done(port, var.clone()),
                Event::err(port, var.clone()),
            ],
            Category::Request => {
                let mut out = vec![Event::ask(port, var.clone())];
                out.extend(Category::Terminate.events(port, var));
                out
            }
            Category::Answer => {
                let mut out = vec![Event::value(port, var.clone())];
                out.extend(Category::Terminated.events(port, var));
                out
            }
        }
    }

    /// The category as a choice expression, e.g. `(abort[x_i] | error[err, x_i])`.
    pub fn expr(self, port: Option<&Port>, var: &StreamVar) -> OrderExpr {
        OrderExpr::or_all(self.events(port, var).into_iter().map(OrderExpr::Event))
    }

    pub fn matches(self, e: &Event) -> bool {
        match (&e.payload, self) {
            (Payload::Request { kind, var: Some(_) }, Category::Terminate) => kind.is_terminate(),
            (
                Payload::Request {
                    kind: RequestKind::Ask | RequestKind::Abort | RequestKind::Error(_),
                    var: Some(_),
                },
                Category::Request,
            ) => true,
            (Payload::Answer { value, .. }, Category::Terminated) => value.is_terminated(),
            (
                Payload::Answer {
                    value: AnswerValue::Value { .. } | AnswerValue::Done | AnswerValue::Err(_),
                    ..
                },
                Category::Answer,
            ) => true,
            _ => false,
        }
    }
}

enum Atom {
    Event(Event),
    Macro(Category, Option<Port>, StreamVar),
}

struct Parser<'a> {
    src: &'a str,
    toks: Vec<Token>,
    pos: usize,
    flags: &'a BTreeSet<String>,
}

type PResult<T> = Result<T, ParseError>;

fn is_port_name(s: &str) -> bool {
    Port::valid_name(s)
}

impl<'a> Parser<'a> {
    fn new(src: &'a str, flags: &'a BTreeSet<String>) -> PResult<Parser<'a>> {
        Ok(Parser {
            src,
            toks: lex(src)?,
            pos: 0,
            flags,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let at = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[at].tok
    }

    fn bump(&mut self) -> Tok {
        let tok = self.toks[self.pos].tok.clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        tok
    }

    fn eat(&mut self, want: &Tok) -> bool {
        if self.peek() == want {
            self.bump();
            true
        } else {
            false
        }
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        let (line, col) = line_col(self.src, self.toks[self.pos].start);
        ParseError::new(message, line, col)
    }

    fn unexpected(&self, wanted: &str) -> ParseError {
        self.error(format!("expected {wanted}, found {}", self.peek()))
    }

    fn expect(&mut self, want: Tok) -> PResult<()> {
        if self.eat(&want) {
            Ok(())
        } else {
            Err(self.unexpected(&want.to_string()))
        }
    }

    fn expect_eof(&self) -> PResult<()> {
        if *self.peek() == Tok::Eof {
            Ok(())
        } else {
            Err(self.unexpected("end of input"))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.bump() {
            Tok::Ident(s) => Ok(s),
            _ => {
                self.pos -= 1;
                Err(self.unexpected("identifier"))
            }
        }
    }

    fn index(&mut self) -> PResult<StreamIndex> {
        match self.peek().clone() {
            Tok::Num(0) => Err(self.error("indexes start at 1")),
            Tok::Num(n) => {
                self.bump();
                u32::try_from(n)
                    .map(StreamIndex::Concrete)
                    .map_err(|_| self.error("index too large"))
            }
            Tok::Ident(name) if name.chars().all(|c| c.is_ascii_lowercase()) => {
                self.bump();
                Ok(StreamIndex::var(name))
            }
            Tok::LBrace => {
                self.bump();
                let ix = match self.bump() {
                    Tok::Num(n) if n > 0 => StreamIndex::Concrete(
                        u32::try_from(n).map_err(|_| self.error("index too large"))?,
                    ),
                    Tok::Ident(name) => {
                        let sign = match self.peek() {
                            Tok::Plus => 1,
                            Tok::Minus => -1,
                            _ => 0,
                        };
                        let mut offset = 0;
                        if sign != 0 {
                            self.bump();
                            match self.bump() {
                                Tok::Num(k) => {
                                    offset = sign
                                        * i32::try_from(k)
                                            .map_err(|_| self.error("offset too large"))?
                                }
                                _ => return Err(self.error("expected an offset")),
                            }
                        }
                        StreamIndex::var_offset(name, offset)
                    }
                    _ => return Err(self.error("expected an index expression")),
                };
                self.expect(Tok::RBrace)?;
                Ok(ix)
            }
            _ => Err(self.unexpected("an index")),
        }
    }

    fn primes(&mut self) -> PResult<u8> {
        let mut n: u8 = 0;
        while self.eat(&Tok::Prime) {
            n = n.checked_add(1).ok_or_else(|| self.error("too many primes"))?;
        }
        Ok(n)
    }

    fn stream_var(&mut self) -> PResult<StreamVar> {
        let name = self.ident()?;
        let mut chars = name.chars();
        let (Some(letter), None) = (chars.next(), chars.next()) else {
            return Err(self.error(format!("`{name}` is not a stream variable")));
        };
        let primes = self.primes()?;
        self.expect(Tok::Under)?;
        let index = self.index()?;
        Ok(StreamVar {
            letter,
            primes,
            index,
        })
    }

    fn port(&mut self) -> PResult<Option<Port>> {
        let Tok::Ident(name) = self.peek().clone() else {
            return Ok(None);
        };
        if !is_port_name(&name) {
            return Ok(None);
        }
        let save = self.pos;
        self.bump();
        let mut port = Port::new(&name);
        if self.eat(&Tok::Under) {
            port.index = Some(self.index()?);
        }
        if self.eat(&Tok::Colon) {
            Ok(Some(port))
        } else {
            self.pos = save;
            Ok(None)
        }
    }

    fn try_answer(&mut self, port: &Option<Port>) -> PResult<Option<Event>> {
        let save = self.pos;
        let var = match self.stream_var() {
            Ok(v) if *self.peek() == Tok::Assign => v,
            _ => {
                self.pos = save;
                return Ok(None);
            }
        };
        self.bump();
        let value = match self.ident()?.as_str() {
            "done" => AnswerValue::Done,
            "err" => AnswerValue::Err(self.err_tag()?),
            "v" if matches!(self.peek(), Tok::Prime | Tok::Under) => {
                let primes = self.primes()?;
                self.expect(Tok::Under)?;
                AnswerValue::Value {
                    primes,
                    index: self.index()?,
                }
            }
            other => AnswerValue::Symbol(other.to_string()),
        };
        Ok(Some(Event::answer(port.as_ref(), var, value)))
    }

    fn err_tag(&mut self) -> PResult<Option<u32>> {
        if *self.peek() == Tok::Under {
            self.bump();
            match self.bump() {
                Tok::Num(n) => Ok(Some(u32::try_from(n).map_err(|_| self.error("tag too large"))?)),
                _ => Err(self.error("expected an error tag number")),
            }
        } else {
            Ok(None)
        }
    }

    fn call_args(&mut self) -> PResult<Vec<String>> {
        let mut args = Vec::new();
        let mut depth = 0usize;
        let mut start = self.toks[self.pos].start;
        loop {
            match self.peek() {
                Tok::Eof => return Err(self.unexpected("`)`")),
                Tok::LParen | Tok::LBrack | Tok::LBrace => depth += 1,
                Tok::RParen if depth == 0 => {
                    let end = self.toks[self.pos].start;
                    let text = self.src[start..end].trim();
                    if text.is_empty() {
                        return Err(self.error("empty argument"));
                    }
                    args.push(text.to_string());
                    self.bump();
                    return Ok(args);
                }
                Tok::RParen | Tok::RBrack | Tok::RBrace => depth = depth.saturating_sub(1),
                Tok::Comma if depth == 0 => {
                    let end = self.toks[self.pos].start;
                    let text = self.src[start..end].trim();
                    if text.is_empty() {
                        return Err(self.error("empty argument"));
                    }
                    args.push(text.to_string());
                    start = self.toks[self.pos].end;
                }
                _ => {}
            }
            self.bump();
        }
    }

    fn atom_event(&mut self) -> PResult<Atom> {
        let port = self.port()?;
        if let Some(e) = self.try_answer(&port)? {
            return Ok(Atom::Event(e));
        }
        let name = self.ident()?;
        if name == "empty" {
            return if port.is_some() {
                Err(self.error("`empty` cannot carry a port"))
            } else {
                Ok(Atom::Event(Event::empty()))
            };
        }
        if let Some(cat) = Category::from_name(&name) {
            if self.eat(&Tok::LParen) {
                let var = self.stream_var()?;
                self.expect(Tok::RParen)?;
                return Ok(Atom::Macro(cat, port, var));
            }
        }
        if !name.starts_with(|c: char| c.is_ascii_lowercase()) {
            return Err(self.error(format!("`{name}` is not an event name")));
        }
        let kind = match name.as_str() {
            "ask" => RequestKind::Ask,
            "abort" => RequestKind::Abort,
            "error" => RequestKind::Error(None),
            _ => RequestKind::Named(name.clone()),
        };
        match self.peek() {
            Tok::LBrack => {
                self.bump();
                let (kind, var) = if let RequestKind::Error(_) = kind {
                    match self.ident()?.as_str() {
                        "err" => {}
                        other => {
                            return Err(self.error(format!("expected `err`, found `{other}`")))
                        }
                    }
                    let tag = self.err_tag()?;
                    let var = if self.eat(&Tok::Comma) {
                        Some(self.stream_var()?)
                    } else {
                        None
                    };
                    (RequestKind::Error(tag), var)
                } else {
                    (kind, Some(self.stream_var()?))
                };
                self.expect(Tok::RBrack)?;
                Ok(Atom::Event(Event::request(port.as_ref(), kind, var)))
            }
            Tok::Under => {
                self.bump();
                let index = self.index()?;
                let args = if self.eat(&Tok::LParen) {
                    self.call_args()?
                } else {
                    Vec::new()
                };
                Ok(Atom::Event(Event {
                    port,
                    payload: Payload::Call { name, index, args },
                }))
            }
            _ => Ok(Atom::Event(Event::request(port.as_ref(), kind, None))),
        }
    }

    fn single_event(&mut self) -> PResult<Event> {
        match self.atom_event()? {
            Atom::Event(e) => Ok(e),
            Atom::Macro(..) => Err(self.error("a category helper is not a single event")),
        }
    }

    fn or(&mut self) -> PResult<OrderExpr> {
        let left = self.and()?;
        if self.eat(&Tok::Pipe) {
            Ok(OrderExpr::or(left, self.or()?))
        } else {
            Ok(left)
        }
    }

    fn and(&mut self) -> PResult<OrderExpr> {
        let left = self.quant()?;
        if self.eat(&Tok::Amp) {
            Ok(OrderExpr::and(left, self.and()?))
        } else {
            Ok(left)
        }
    }

    fn quant_kind(&self) -> Option<QuantKind> {
        match self.peek() {
            Tok::Ident(s) if s == "exists" => Some(QuantKind::Exists),
            Tok::Ident(s) if s == "forall" => Some(QuantKind::Forall),
            _ => None,
        }
    }

    fn quant(&mut self) -> PResult<OrderExpr> {
        let Some(kind) = self.quant_kind() else {
            return self.not();
        };
        self.bump();
        let mut vars = vec![self.ident()?];
        loop {
            if self.eat(&Tok::Dot) {
                break;
            }
            self.eat(&Tok::Comma);
            vars.push(self.ident()?);
        }
        Ok(OrderExpr::Quant {
            kind,
            vars,
            body: Box::new(self.quant()?),
        })
    }

    fn not(&mut self) -> PResult<OrderExpr> {
        if self.eat(&Tok::Bang) {
            Ok(OrderExpr::not(self.not()?))
        } else {
            self.seq()
        }
    }

    fn seq(&mut self) -> PResult<OrderExpr> {
        let left = self.unary()?;
        if self.eat(&Tok::Arrow) {
            Ok(OrderExpr::seq(left, self.seq()?))
        } else {
            Ok(left)
        }
    }

    fn unary(&mut self) -> PResult<OrderExpr> {
        if self.eat(&Tok::Bang) {
            return Ok(OrderExpr::not(self.unary()?));
        }
        if self.quant_kind().is_some() {
            return self.quant();
        }
        self.atom()
    }

    fn is_rel_op(tok: &Tok) -> Option<RelOp> {
        Some(match tok {
            Tok::Eq => RelOp::Eq,
            Tok::Ne => RelOp::Ne,
            Tok::Lt => RelOp::Lt,
            Tok::Le | Tok::LArrow => RelOp::Le,
            Tok::Gt => RelOp::Gt,
            Tok::Ge => RelOp::Ge,
            _ => return None,
        })
    }

    fn operand(&mut self) -> PResult<Operand> {
        match self.bump() {
            Tok::Num(n) => Ok(Operand::Num(n)),
            Tok::Ident(name) if name.starts_with(|c: char| c.is_ascii_lowercase()) => {
                let sign = match self.peek() {
                    Tok::Plus => 1,
                    Tok::Minus => -1,
                    _ => return Ok(Operand::var(&name)),
                };
                self.bump();
                match self.bump() {
                    Tok::Num(k) => Ok(Operand::Var {
                        name,
                        offset: sign
                            * i64::try_from(k).map_err(|_| self.error("offset too large"))?,
                    }),
                    _ => {
                        self.pos -= 1;
                        Err(self.unexpected("a number"))
                    }
                }
            }
            _ => {
                self.pos -= 1;
                Err(self.unexpected("a relation operand"))
            }
        }
    }

    fn relation(&mut self) -> PResult<OrderExpr> {
        let first = self.operand()?;
        let mut rest = Vec::new();
        while let Some(op) = Parser::is_rel_op(self.peek()) {
            self.bump();
            rest.push((op, self.operand()?));
        }
        if rest.is_empty() {
            return Err(self.unexpected("a relation operator"));
        }
        Ok(OrderExpr::Rel(Relation { first, rest }))
    }

    fn atom(&mut self) -> PResult<OrderExpr> {
        match self.peek().clone() {
            Tok::LParen => {
                self.bump();
                let inner = self.or()?;
                self.expect(Tok::RParen)?;
                Ok(inner)
            }
            Tok::Num(_) => self.relation(),
            Tok::Ident(name) => {
                let next = self.peek_at(1).clone();
                match name.as_str() {
                    "true" => {
                        self.bump();
                        return Ok(OrderExpr::Bool(true));
                    }
                    "false" => {
                        self.bump();
                        return Ok(OrderExpr::Bool(false));
                    }
                    _ => {}
                }
                let lower = name.starts_with(|c: char| c.is_ascii_lowercase());
                if lower
                    && (Parser::is_rel_op(&next).is_some() || matches!(next, Tok::Plus | Tok::Minus))
                {
                    return self.relation();
                }
                let continues_event = matches!(
                    next,
                    Tok::LBrack | Tok::Under | Tok::LParen | Tok::Colon | Tok::Prime
                );
                if lower && self.flags.contains(&name) && !continues_event {
                    self.bump();
                    return Ok(OrderExpr::Flag(name));
                }
                Ok(match self.atom_event()? {
                    Atom::Event(e) => OrderExpr::from(e),
                    Atom::Macro(cat, port, var) => cat.expr(port.as_ref(), &var),
                })
            }
            _ => Err(self.unexpected("an expression")),
        }
    }
}

/// Parses one event.
pub fn parse_event(text: &str) -> Result<Event, ParseError> {
    let flags = BTreeSet::new();
    let mut p = Parser::new(text, &flags)?;
    let e = p.single_event()?;
    p.expect_eof()?;
    Ok(e)
}

/// Parses a partial order or antecedent.
pub fn parse_order(text: &str) -> Result<OrderExpr, ParseError> {
    parse_antecedent(text, &BTreeSet::new())
}

/// Parses an antecedent in which the names in `flags` denote boolean parameters.
pub fn parse_antecedent(text: &str, flags: &BTreeSet<String>) -> Result<OrderExpr, ParseError> {
    let mut p = Parser::new(text, flags)?;
    let x = p.or()?;
    p.expect_eof()?;
    Ok(x)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamKind {
    Nat,
    Bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
}

/// `antecedent => event`, stored forward whichever way it was written.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RuleAst {
    pub antecedent: OrderExpr,
    pub consequent: Event,
    /// Written as `event <= antecedent`; kept only for rendering.
    pub reversed: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RuleSet {
    pub name: String,
    pub params: Vec<Param>,
    pub rules: Vec<RuleAst>,
}

/// Index variables reserved for stream positions.
pub const INDEX_VARS: [&str; 2] = ["i", "j"];

impl RuleSet {
    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn flags(&self) -> BTreeSet<String> {
        self.params
            .iter()
            .filter(|p| p.kind == ParamKind::Bool)
            .map(|p| p.name.clone())
            .collect()
    }

    pub fn param_names(&self) -> BTreeSet<String> {
        self.params.iter().map(|p| p.name.clone()).collect()
    }
}

/// Variables of `x` that are neither bound by a quantifier nor in `exclude`,
/// in order of first appearance.
pub fn free_vars(x: &OrderExpr, exclude: &BTreeSet<String>) -> Vec<String> {
    fn walk(x: &OrderExpr, bound: &mut Vec<String>, exclude: &BTreeSet<String>, out: &mut Vec<String>) {
        let add = |v: &str, bound: &Vec<String>, out: &mut Vec<String>| {
            if !bound.iter().any(|b| b == v) && !exclude.contains(v) && !out.iter().any(|o| o == v)
            {
                out.push(v.to_string());
            }
        };
        match x {
            OrderExpr::Event(e) => {
                for v in e.variables() {
                    add(&v, bound, out);
                }
            }
            OrderExpr::Seq(a, b) | OrderExpr::And(a, b) | OrderExpr::Or(a, b) => {
                walk(a, bound, exclude, out);
                walk(b, bound, exclude, out);
            }
            OrderExpr::Not(a) => walk(a, bound, exclude, out),
            OrderExpr::Quant { vars, body, .. } => {
                let depth = bound.len();
                bound.extend(vars.iter().cloned());
                walk(body, bound, exclude, out);
                bound.truncate(depth);
            }
            OrderExpr::Rel(r) => {
                for o in r.operands() {
                    if let Operand::Var { name, .. } = o {
                        add(name, bound, out);
                    }
                }
            }
            OrderExpr::Bool(_) | OrderExpr::Flag(_) | OrderExpr::Empty => {}
        }
    }
    let mut out = Vec::new();
    walk(x, &mut Vec::new(), exclude, &mut out);
    out
}

/// Parses a single rule, `event <= antecedent` or `antecedent => event`.
pub fn parse_rule(text: &str, flags: &BTreeSet<String>) -> Result<RuleAst, ParseError> {
    let mut p = Parser::new(text, flags)?;
    let forward = p.toks.iter().any(|t| t.tok == Tok::RArrow);
    let rule = if forward {
        let antecedent = p.or()?;
        p.expect(Tok::RArrow)?;
        let consequent = p.single_event()?;
        RuleAst {
            antecedent,
            consequent,
            reversed: false,
        }
    } else {
        let consequent = p.single_event()?;
        p.expect(Tok::LArrow)?;
        let antecedent = p.or()?;
        RuleAst {
            antecedent,
            consequent,
            reversed: true,
        }
    };
    p.expect_eof()?;
    if rule.consequent.is_empty() {
        return Err(ParseError::new("a rule cannot produce `empty`", 1, 1));
    }
    Ok(rule)
}

fn validate_rule(rule: &RuleAst, params: &BTreeSet<String>) -> Result<(), String> {
    let known: BTreeSet<String> = free_vars(&rule.antecedent, params).into_iter().collect();
    for v in rule.consequent.variables() {
        if v != "i" && !known.contains(&v) && !params.contains(&v) {
            return Err(format!(
                "variable `{v}` of the consequent does not occur in the antecedent"
            ));
        }
    }
    Ok(())
}

/// Joins physical lines into statements: a trailing ` [` opens a vertical
/// choice that runs to a line starting with `]`, and a line ending (or the
/// next line starting) with an operator continues the statement.
fn statements(lines: &[(usize, String)]) -> Result<Vec<(usize, String)>, ParseError> {
    fn ends_with_op(s: &str) -> bool {
        ["&", "|", "->", "<=", "=>", "!", "(", ","]
            .iter()
            .any(|op| s.ends_with(op))
    }
    fn starts_with_op(s: &str) -> bool {
        ["&", "|", "->", "=>", "<=", ")"].iter().any(|op| s.starts_with(op))
    }
    fn opens_block(s: &str) -> bool {
        s == "[" || (s.ends_with('[') && !s[..s.len() - 1].ends_with(|c: char| c.is_alphanumeric()))
    }
    fn read(lines: &[(usize, String)], at: &mut usize) -> Result<String, ParseError> {
        let (start_line, first) = &lines[*at];
        *at += 1;
        let mut text = first.clone();
        loop {
            if opens_block(&text) {
                text.pop();
                let mut items = Vec::new();
                loop {
                    let Some((_, line)) = lines.get(*at) else {
                        return Err(ParseError::new("unclosed `[` block", *start_line, 1));
                    };
                    if let Some(rest) = line.strip_prefix(']') {
                        *at += 1;
                        if items.is_empty() {
                            return Err(ParseError::new("empty `[` block", *start_line, 1));
                        }
                        text.push_str(&format!("({})", items.join(" | ")));
                        text.push_str(rest);
                        break;
                    }
                    items.push(format!("({})", read(lines, at)?));
                }
                continue;
            }
            match lines.get(*at) {
                Some((_, next))
                    if (ends_with_op(&text) || starts_with_op(next)) && !next.starts_with(']') =>
                {
                    text.push(' ');
                    text.push_str(next);
                    *at += 1;
                }
                _ => return Ok(text),
            }
        }
    }
    let mut out = Vec::new();
    let mut at = 0;
    while at < lines.len() {
        let line_no = lines[at].0;
        let text = read(lines, &mut at)?;
        out.push((line_no, text));
    }
    Ok(out)
}

/// Parses a rule file: `module NAME`, `param NAME : nat|bool` lines, then rules.
pub fn parse_rules(text: &str) -> Result<RuleSet, ParseError> {
    let mut name = None;
    let mut params: Vec<Param> = Vec::new();
    let mut body = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let mut words = line.split_whitespace();
        match words.next() {
            Some("module") => {
                let Some(n) = words.next() else {
                    return Err(ParseError::new("`module` needs a name", line_no, 1));
                };
                if name.is_some() {
                    return Err(ParseError::new("duplicate `module` line", line_no, 1));
                }
                name = Some(n.to_string());
            }
            Some("param") => {
                let rest = line["param".len()..].trim();
                let Some((pname, kind)) = rest.split_once(':') else {
                    return Err(ParseError::new(
                        "expected `param NAME : nat|bool`",
                        line_no,
                        1,
                    ));
                };
                let pname = pname.trim();
                let kind = match kind.trim() {
                    "nat" => ParamKind::Nat,
                    "bool" => ParamKind::Bool,
                    other => {
                        return Err(ParseError::new(
                            format!("unknown parameter kind `{other}`"),
                            line_no,
                            1,
                        ))
                    }
                };
                if !pname.chars().all(|c| c.is_ascii_lowercase()) || pname.is_empty() {
                    return Err(ParseError::new(
                        format!("bad parameter name `{pname}`"),
                        line_no,
                        1,
                    ));
                }
                if INDEX_VARS.contains(&pname) {
                    return Err(ParseError::new(
                        format!("`{pname}` is reserved for stream indexes"),
                        line_no,
                        1,
                    ));
                }
                if params.iter().any(|p| p.name == pname) {
                    return Err(ParseError::new(
                        format!("duplicate parameter `{pname}`"),
                        line_no,
                        1,
                    ));
                }
                params.push(Param {
                    name: pname.to_string(),
                    kind,
                });
            }
            _ => body.push((line_no, line.to_string())),
        }
    }
    let set_params: BTreeSet<String> = params.iter().map(|p| p.name.clone()).collect();
    let flags: BTreeSet<String> = params
        .iter()
        .filter(|p| p.kind == ParamKind::Bool)
        .map(|p| p.name.clone())
        .collect();
    let mut rules = Vec::new();
    for (line_no, stmt) in statements(&body)? {
        let rule = parse_rule(&stmt, &flags).map_err(|e| {
            let col = if e.line == 1 { e.col } else { 1 };
            ParseError::new(e.message, line_no, col)
        })?;
        validate_rule(&rule, &set_params).map_err(|m| ParseError::new(m, line_no, 1))?;
        rules.push(rule);
    }
    Ok(RuleSet {
        name: name.unwrap_or_else(|| "rules".to_string()),
        params,
        rules,
    })
}

// Rendering. Levels follow the parser: a larger number binds tighter.
const LVL_OR: u8 = 1;
const LVL_AND: u8 = 2;
const LVL_QUANT: u8 = 3;
const LVL_NOT: u8 = 4;
const LVL_SEQ: u8 = 5;
const LVL_ATOM: u8 = 6;

fn level(x: &OrderExpr) -> u8 {
    match x {
        OrderExpr::Or(..) => LVL_OR,
        OrderExpr::And(..) => LVL_AND,
        OrderExpr::Quant { .. } => LVL_QUANT,
        OrderExpr::Not(..) => LVL_NOT,
        OrderExpr::Seq(..) => LVL_SEQ,
        _ => LVL_ATOM,
    }
}

fn render_into(x: &OrderExpr, out: &mut String) {
    let child = |c: &OrderExpr, min: u8, out: &mut String| {
        if level(c) < min {
            out.push('(');
            render_into(c, out);
            out.push(')');
        } else {
            render_into(c, out);
        }
    };
    let binary = |a: &OrderExpr, b: &OrderExpr, lvl: u8, op: &str, out: &mut String| {
        child(a, lvl + 1, out);
        out.push_str(op);
        child(b, lvl, out);
    };
    match x {
        OrderExpr::Event(e) => out.push_str(&e.to_string()),
        OrderExpr::Seq(a, b) => {
            // operands of `->` are atoms; negations and quantifiers need parens
            child(a, LVL_SEQ + 1, out);
            out.push_str(" -> ");
            child(b, LVL_SEQ, out);
        }
        OrderExpr::And(a, b) => binary(a, b, LVL_AND, " & ", out),
        OrderExpr::Or(a, b) => binary(a, b, LVL_OR, " | ", out),
        OrderExpr::Not(a) => {
            out.push('!');
            child(a, LVL_NOT, out);
        }
        OrderExpr::Quant { kind, vars, body } => {
            out.push_str(match kind {
                QuantKind::Exists => "exists ",
                QuantKind::Forall => "forall ",
            });
            out.push_str(&vars.join(", "));
            out.push_str(". ");
            child(body, LVL_QUANT, out);
        }
        OrderExpr::Rel(r) => {
            render_operand(&r.first, out);
            for (op, o) in &r.rest {
                out.push(' ');
                out.push_str(op.symbol());
                out.push(' ');
                render_operand(o, out);
            }
        }
        OrderExpr::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        OrderExpr::Flag(name) => out.push_str(name),
        OrderExpr::Empty => out.push_str("empty"),
    }
}

fn render_operand(o: &Operand, out: &mut String) {
    match o {
        Operand::Num(n) => out.push_str(&n.to_string()),
        Operand::Var { name, offset: 0 } => out.push_str(name),
        Operand::Var { name, offset } if *offset > 0 => out.push_str(&format!("{name} + {offset}")),
        Operand::Var { name, offset } => out.push_str(&format!("{name} - {}", -offset)),
    }
}

/// Renders an expression so that parsing the text yields the same AST.
pub fn render_order(x: &OrderExpr) -> String {
    let mut out = String::new();
    render_into(x, &mut out);
    out
}

pub fn render_rule(rule: &RuleAst) -> String {
    if rule.reversed {
        format!("{} <= {}", rule.consequent, render_order(&rule.antecedent))
    } else {
        format!("{} => {}", render_order(&rule.antecedent), rule.consequent)
    }
}

/// Renders a rule set in rule-file form.
pub fn render_rules(rs: &RuleSet) -> String {
    let mut out = format!("module {}\n", rs.name);
    for p in &rs.params {
        let kind = match p.kind {
            ParamKind::Nat => "nat",
            ParamKind::Bool => "bool",
        };
        out.push_str(&format!("param {} : {kind}\n", p.name));
    }
    out.push('\n');
    for r in &rs.rules {
        out.push_str(&render_rule(r));
        out.push('\n');
    }
    out
}

impl fmt::Display for RuleAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_rule(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> OrderExpr {
        parse_order(s).unwrap()
    }

    fn ev(s: &str) -> OrderExpr {
        OrderExpr::Event(parse_event(s).unwrap())
    }

    #[test]
    fn priorities() {
        assert_eq!(
            p("a & b | c"),
            OrderExpr::or(OrderExpr::and(ev("a"), ev("b")), ev("c"))
        );
        assert_eq!(
            p("x_1 -> y_1 & z_1"),
            OrderExpr::and(OrderExpr::seq(ev("x_1"), ev("y_1")), ev("z_1"))
        );
        assert_eq!(
            p("a -> b -> c"),
            OrderExpr::seq(ev("a"), OrderExpr::seq(ev("b"), ev("c")))
        );
        assert_eq!(p("!a -> b"), OrderExpr::not(OrderExpr::seq(ev("a"), ev("b"))));
        assert_eq!(p("(abort)"), ev("abort"));
    }

    #[test]
    fn relations_and_quantifiers() {
        let x = p("r < i =< n & I: ask[x_i]");
        let OrderExpr::And(rel, _) = &x else { panic!() };
        let OrderExpr::Rel(r) = &**rel else { panic!() };
        assert_eq!(r.rest.len(), 2);
        assert_eq!(p("i <= n"), p("i =< n"));
        assert_eq!(render_order(&p("i = n+1")), "i = n + 1");
        let q = p("exists i. I: ask[x_i]");
        assert!(matches!(q, OrderExpr::Quant { kind: QuantKind::Exists, .. }));
        assert!(parse_order("i").is_ok());
        assert!(parse_order("i < ").is_err());
    }

    #[test]
    fn category_helpers_expand() {
        assert_eq!(
            p("TI: terminate(x_i)"),
            OrderExpr::or(ev("TI: abort[x_i]"), ev("TI: error[err, x_i]"))
        );
        assert_eq!(
            p("O: answer(x_2)"),
            OrderExpr::or(
                ev("O: x_2 := v_2"),
                OrderExpr::or(ev("O: x_2 := done"), ev("O: x_2 := err"))
            )
        );
        let abort = parse_event("I: abort[x_2]").unwrap();
        assert!(Category::Terminate.matches(&abort));
        assert!(Category::Request.matches(&abort));
        let value = parse_event("O: x_2 := v_2").unwrap();
        assert!(!Category::Terminated.matches(&value));
        assert!(Category::Answer.matches(&value));
    }

    #[test]
    fn rules_both_directions() {
        let flags = BTreeSet::new();
        let r = parse_rule("S: x_i := pong <= C: ping[x_i]", &flags).unwrap();
        assert!(r.reversed);
        assert_eq!(r.consequent, parse_event("S: x_i := pong").unwrap());
        let f = parse_rule("C: ping[x_i] => S: x_i := pong", &flags).unwrap();
        assert!(!f.reversed);
        assert_eq!(f.antecedent, r.antecedent);

        let r = parse_rule("UO: x_i := v_i <= TI: ask[x_i] & i <= n", &flags).unwrap();
        assert!(matches!(r.antecedent, OrderExpr::And(..)));
        let r = parse_rule("DI: ask[x'_1] <= r > 0", &flags).unwrap();
        assert!(matches!(r.antecedent, OrderExpr::Rel(_)));
        assert!(parse_rule("S: x_i := pong C: ping[x_i]", &flags).is_err());
    }

    #[test]
    fn rule_files() {
        let text = "\
module demo   # comment
param n : nat
param err : bool

UO: x_i := done <= [
    TI: ask[x_i] & !err
        & i = n + 1
    TI: terminate(x_i)
]
UO: x_i := v_i <= TI: ask[x_i] &
    i =< n
";
        let rs = parse_rules(text).unwrap();
        assert_eq!(rs.name, "demo");
        assert_eq!(rs.params.len(), 2);
        assert_eq!(rs.rules.len(), 2);
        assert!(matches!(rs.rules[0].antecedent, OrderExpr::Or(..)));
        let again = parse_rules(&render_rules(&rs)).unwrap();
        assert_eq!(again, rs);
    }

    #[test]
    fn rule_file_errors() {
        let err = parse_rules("param i : nat\n").unwrap_err();
        assert_eq!(err.line, 1);
        let err = parse_rules("module m\n\nA: x_j := done <= B: ask[x_i]\n").unwrap_err();
        assert_eq!(err.line, 3);
        let err = parse_rules("A: x_1 := done <= [\n B: ask[x_1]\n").unwrap_err();
        assert!(err.message.contains("unclosed"));
        let err = parse_rules("A: x_1 := done <= B: ask[x_1\n").unwrap_err();
        assert_eq!(err.line, 1);
    }

    #[test]
    fn render_round_trip() {
        for text in [
            "a_1 -> (b_1 & c_1)",
            "(a_1 -> b_1) -> c_1",
            "!(a & b) & exists i, j. C: ping[x_i] -> S: x_j := pong",
            "a -> (!b) -> c",
            "(a | b) & c | empty",
            "I: ask[x_1] -> O: x_1 := v_1 -> I: ask[x_2] -> (O: x_2 := done | O: x_2 := err)",
            "i = 1 | UO: x_{i-1} := v_{i-1}",
            "!(exists i. a_i)",
        ] {
            let x = p(text);
            assert_eq!(p(&render_order(&x)), x, "{text}");
        }
    }

    #[test]
    fn syntax_errors_have_positions() {
        let err = parse_order("a ->\n  & b").unwrap_err();
        assert_eq!((err.line, err.col), (2, 3));
        assert!(parse_event("I: ask[x_0]").is_err());
        assert!(parse_event("I: ask[x_1] extra").is_err());
        assert!(parse_event("I: terminate(x_1)").is_err());
    }
}
