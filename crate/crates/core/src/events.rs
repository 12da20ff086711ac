//! Event vocabulary, histories and the primitive history relations.
//!
//! An [`Event`] is one occurrence at a [`Port`]: a request (`ask`, `abort`,
//! `error`, or a named request such as `ping`), an answer binding a stream
//! variable, or a method call. Events used as patterns inside rules may carry
//! index variables; events stored in a [`History`] are always concrete.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lang::{self, ParseError};

/// Position of a variable or value in a stream.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StreamIndex {
    /// A concrete position, starting at 1.
    Concrete(u32),
    /// An index variable with a constant offset, e.g. `i`, `i-1`, `r+1`.
    Var { name: String, offset: i32 },
}

impl StreamIndex {
    pub fn var(name: impl Into<String>) -> Self {
        StreamIndex::Var {
            name: name.into(),
            offset: 0,
        }
    }

    pub fn var_offset(name: impl Into<String>, offset: i32) -> Self {
        StreamIndex::Var {
            name: name.into(),
            offset,
        }
    }

    pub fn is_concrete(&self) -> bool {
        matches!(self, StreamIndex::Concrete(_))
    }

    pub fn concrete(&self) -> Option<u32> {
        match self {
            StreamIndex::Concrete(n) => Some(*n),
            StreamIndex::Var { .. } => None,
        }
    }

    /// Resolves the index under `lookup`. `Ok(None)` means the index falls
    /// below 1 and therefore names no event.
    pub fn resolve<F>(&self, lookup: &F) -> Result<Option<StreamIndex>, Unbound>
    where
        F: Fn(&str) -> Option<i64>,
    {
        match self {
            StreamIndex::Concrete(_) => Ok(Some(self.clone())),
            StreamIndex::Var { name, offset } => {
                let base = lookup(name).ok_or_else(|| Unbound(name.clone()))?;
                let value = base + i64::from(*offset);
                if value < 1 || value > i64::from(u32::MAX) {
                    Ok(None)
                } else {
                    Ok(Some(StreamIndex::Concrete(value as u32)))
                }
            }
        }
    }

    fn collect_vars(&self, out: &mut Vec<String>) {
        if let StreamIndex::Var { name, .. } = self {
            out.push(name.clone());
        }
    }
}

/// A variable that was referenced but has no value in the current binding.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("unbound variable `{0}`")]
pub struct Unbound(pub String);

/// Where an event is initiated, e.g. `UO`, `TI`, `SSU_1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Port {
    pub name: String,
    pub index: Option<StreamIndex>,
}

impl Port {
    /// Builds an unindexed port. Panics if `name` is not uppercase letters.
    pub fn new(name: &str) -> Port {
        assert!(
            Port::valid_name(name),
            "port name must be 1+ uppercase letters: {name:?}"
        );
        Port {
            name: name.to_string(),
            index: None,
        }
    }

    pub fn indexed(name: &str, index: u32) -> Port {
        let mut port = Port::new(name);
        port.index = Some(StreamIndex::Concrete(index));
        port
    }

    pub fn valid_name(name: &str) -> bool {
        !name.is_empty() && name.chars().all(|c| c.is_ascii_uppercase())
    }
}

/// A single-assignment stream variable such as `x_i` or `x'_2`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StreamVar {
    pub letter: char,
    /// Number of transformation stages the variable has passed.
    pub primes: u8,
    pub index: StreamIndex,
}

impl StreamVar {
    pub fn new(primes: u8, index: StreamIndex) -> StreamVar {
        StreamVar {
            letter: 'x',
            primes,
            index,
        }
    }

    pub fn at(primes: u8, index: u32) -> StreamVar {
        StreamVar::new(primes, StreamIndex::Concrete(index))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AnswerValue {
    /// A stream value `v_i`, primed once per transformation stage.
    Value { primes: u8, index: StreamIndex },
    Done,
    /// Stream failure, optionally tagged (`err_1`).
    Err(Option<u32>),
    /// Any other symbolic value, e.g. `pong`.
    Symbol(String),
}

impl AnswerValue {
    pub fn is_terminated(&self) -> bool {
        matches!(self, AnswerValue::Done | AnswerValue::Err(_))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RequestKind {
    Ask,
    Abort,
    /// `error[err, x_i]`, carrying the error tag.
    Error(Option<u32>),
    /// A request outside the pull-stream vocabulary, e.g. `ping`.
    Named(String),
}

impl RequestKind {
    pub fn is_terminate(&self) -> bool {
        matches!(self, RequestKind::Abort | RequestKind::Error(_))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Payload {
    Request {
        kind: RequestKind,
        var: Option<StreamVar>,
    },
    Answer {
        var: StreamVar,
        value: AnswerValue,
    },
    /// A call to a module method outside the base protocol. Arguments are
    /// kept as their rendered text.
    Call {
        name: String,
        index: StreamIndex,
        args: Vec<String>,
    },
    /// Placeholder used when writing orders; never stored in a history.
    Empty,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Event {
    pub port: Option<Port>,
    pub payload: Payload,
}

impl Event {
    fn with_port(port: Option<&Port>, payload: Payload) -> Event {
        Event {
            port: port.cloned(),
            payload,
        }
    }

    pub fn ask(port: Option<&Port>, var: StreamVar) -> Event {
        Event::with_port(
            port,
            Payload::Request {
                kind: RequestKind::Ask,
                var: Some(var),
            },
        )
    }

    pub fn abort(port: Option<&Port>, var: StreamVar) -> Event {
        Event::with_port(
            port,
            Payload::Request {
                kind: RequestKind::Abort,
                var: Some(var),
            },
        )
    }

    pub fn error(port: Option<&Port>, tag: Option<u32>, var: StreamVar) -> Event {
        Event::with_port(
            port,
            Payload::Request {
                kind: RequestKind::Error(tag),
                var: Some(var),
            },
        )
    }

    pub fn request(port: Option<&Port>, kind: RequestKind, var: Option<StreamVar>) -> Event {
        Event::with_port(port, Payload::Request { kind, var })
    }

    pub fn answer(port: Option<&Port>, var: StreamVar, value: AnswerValue) -> Event {
        Event::with_port(port, Payload::Answer { var, value })
    }

    /// `x_i := v_i` with the value primed like the variable.
    pub fn value(port: Option<&Port>, var: StreamVar) -> Event {
        let value = AnswerValue::Value {
            primes: var.primes,
            index: var.index.clone(),
        };
        Event::answer(port, var, value)
    }

    pub fn done(port: Option<&Port>, var: StreamVar) -> Event {
        Event::answer(port, var, AnswerValue::Done)
    }

    pub fn err(port: Option<&Port>, var: StreamVar) -> Event {
        Event::answer(port, var, AnswerValue::Err(None))
    }

    pub fn empty() -> Event {
        Event {
            port: None,
            payload: Payload::Empty,
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self.payload, Payload::Empty)
    }

    pub fn is_request(&self) -> bool {
        matches!(self.payload, Payload::Request { .. })
    }

    pub fn is_answer(&self) -> bool {
        matches!(self.payload, Payload::Answer { .. })
    }

    /// The stream variable the event creates or binds, if any.
    pub fn stream_var(&self) -> Option<&StreamVar> {
        match &self.payload {
            Payload::Request { var, .. } => var.as_ref(),
            Payload::Answer { var, .. } => Some(var),
            _ => None,
        }
    }

    fn indexes(&self) -> Vec<&StreamIndex> {
        let mut out = Vec::new();
        if let Some(Port { index: Some(ix), .. }) = &self.port {
            out.push(ix);
        }
        match &self.payload {
            Payload::Request { var, .. } => {
                if let Some(v) = var {
                    out.push(&v.index);
                }
            }
            Payload::Answer { var, value } => {
                out.push(&var.index);
                if let AnswerValue::Value { index, .. } = value {
                    out.push(index);
                }
            }
            Payload::Call { index, .. } => out.push(index),
            Payload::Empty => {}
        }
        out
    }

    /// True when the event has no index variables and is not `empty`.
    pub fn is_concrete(&self) -> bool {
        !self.is_empty() && self.indexes().iter().all(|ix| ix.is_concrete())
    }

    /// Largest concrete stream or port index mentioned by the event.
    pub fn max_index(&self) -> u32 {
        self.indexes()
            .into_iter()
            .filter_map(StreamIndex::concrete)
            .max()
            .unwrap_or(0)
    }

    /// Names of the index variables used by the event, in order of appearance.
    pub fn variables(&self) -> Vec<String> {
        let mut out = Vec::new();
        for ix in self.indexes() {
            ix.collect_vars(&mut out);
        }
        out
    }

    /// Substitutes every index variable. Returns `Ok(None)` when some index
    /// resolves below 1: such an event can never occur.
    pub fn instantiate<F>(&self, lookup: &F) -> Result<Option<Event>, Unbound>
    where
        F: Fn(&str) -> Option<i64>,
    {
        fn resolve<F: Fn(&str) -> Option<i64>>(
            ix: &StreamIndex,
            lookup: &F,
        ) -> Result<Option<StreamIndex>, Unbound> {
            ix.resolve(lookup)
        }
        fn var<F: Fn(&str) -> Option<i64>>(
            v: &StreamVar,
            lookup: &F,
        ) -> Result<Option<StreamVar>, Unbound> {
            Ok(resolve(&v.index, lookup)?.map(|index| StreamVar {
                letter: v.letter,
                primes: v.primes,
                index,
            }))
        }

        let port = match &self.port {
            None => None,
            Some(p) => match &p.index {
                None => Some(p.clone()),
                Some(ix) => match resolve(ix, lookup)? {
                    None => return Ok(None),
                    Some(index) => Some(Port {
                        name: p.name.clone(),
                        index: Some(index),
                    }),
                },
            },
        };
        let payload = match &self.payload {
            Payload::Request { kind, var: None } => Payload::Request {
                kind: kind.clone(),
                var: None,
            },
            Payload::Request { kind, var: Some(v) } => match var(v, lookup)? {
                None => return Ok(None),
                Some(v) => Payload::Request {
                    kind: kind.clone(),
                    var: Some(v),
                },
            },
            Payload::Answer { var: v, value } => {
                let Some(v) = var(v, lookup)? else {
                    return Ok(None);
                };
                let value = match value {
                    AnswerValue::Value { primes, index } => match resolve(index, lookup)? {
                        None => return Ok(None),
                        Some(index) => AnswerValue::Value {
                            primes: *primes,
                            index,
                        },
                    },
                    other => other.clone(),
                };
                Payload::Answer { var: v, value }
            }
            Payload::Call { name, index, args } => match resolve(index, lookup)? {
                None => return Ok(None),
                Some(index) => Payload::Call {
                    name: name.clone(),
                    index,
                    args: args.clone(),
                },
            },
            Payload::Empty => Payload::Empty,
        };
        Ok(Some(Event { port, payload }))
    }

    /// Applies `f` to the port and to the prime level of every variable and
    /// value. Used to re-wire rule sets onto concrete pipeline ports.
    pub fn map_ports<F>(&self, f: &F) -> Event
    where
        F: Fn(&Port) -> (Port, i16),
    {
        let Some(port) = &self.port else {
            return self.clone();
        };
        let (port, shift) = f(port);
        let shift_primes = |p: u8| -> u8 { (i16::from(p) + shift).clamp(0, 255) as u8 };
        let shift_var = |v: &StreamVar| StreamVar {
            letter: v.letter,
            primes: shift_primes(v.primes),
            index: v.index.clone(),
        };
        let payload = match &self.payload {
            Payload::Request { kind, var } => Payload::Request {
                kind: kind.clone(),
                var: var.as_ref().map(shift_var),
            },
            Payload::Answer { var, value } => Payload::Answer {
                var: shift_var(var),
                value: match value {
                    AnswerValue::Value { primes, index } => AnswerValue::Value {
                        primes: shift_primes(*primes),
                        index: index.clone(),
                    },
                    other => other.clone(),
                },
            },
            other => other.clone(),
        };
        Event {
            port: Some(port),
            payload,
        }
    }
}

impl fmt::Display for StreamIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StreamIndex::Concrete(n) => write!(f, "{n}"),
            StreamIndex::Var { name, offset: 0 } => write!(f, "{name}"),
            StreamIndex::Var { name, offset } if *offset > 0 => write!(f, "{{{name}+{offset}}}"),
            StreamIndex::Var { name, offset } => write!(f, "{{{name}-{}}}", -offset),
        }
    }
}

impl fmt::Display for Port {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)?;
        if let Some(ix) = &self.index {
            write!(f, "_{ix}")?;
        }
        Ok(())
    }
}

fn primes(n: u8) -> String {
    "'".repeat(usize::from(n))
}

impl fmt::Display for StreamVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}_{}", self.letter, primes(self.primes), self.index)
    }
}

fn write_err_tag(f: &mut fmt::Formatter<'_>, tag: Option<u32>) -> fmt::Result {
    match tag {
        None => f.write_str("err"),
        Some(n) => write!(f, "err_{n}"),
    }
}

impl fmt::Display for AnswerValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnswerValue::Value { primes: p, index } => write!(f, "v{}_{index}", primes(*p)),
            AnswerValue::Done => f.write_str("done"),
            AnswerValue::Err(tag) => write_err_tag(f, *tag),
            AnswerValue::Symbol(s) => f.write_str(s),
        }
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(port) = &self.port {
            write!(f, "{port}: ")?;
        }
        match &self.payload {
            Payload::Request { kind, var } => {
                let name = match kind {
                    RequestKind::Ask => "ask",
                    RequestKind::Abort => "abort",
                    RequestKind::Error(_) => "error",
                    RequestKind::Named(n) => n.as_str(),
                };
                f.write_str(name)?;
                match (kind, var) {
                    (RequestKind::Error(tag), Some(v)) => {
                        f.write_str("[")?;
                        write_err_tag(f, *tag)?;
                        write!(f, ", {v}]")
                    }
                    (RequestKind::Error(tag), None) if tag.is_some() => {
                        f.write_str("[")?;
                        write_err_tag(f, *tag)?;
                        f.write_str("]")
                    }
                    (_, Some(v)) => write!(f, "[{v}]"),
                    (_, None) => Ok(()),
                }
            }
            Payload::Answer { var, value } => write!(f, "{var} := {value}"),
            Payload::Call { name, index, args } => {
                write!(f, "{name}_{index}")?;
                if !args.is_empty() {
                    write!(f, "({})", args.join(", "))?;
                }
                Ok(())
            }
            Payload::Empty => f.write_str("empty"),
        }
    }
}

impl FromStr for Event {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_event(s)
    }
}

/// Parses one event in the ASCII surface syntax, e.g. `UO: x_1 := v_1`.
pub fn parse_event(text: &str) -> Result<Event, ParseError> {
    lang::parse_event(text)
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum HistoryError {
    #[error("`empty` cannot be part of a history")]
    EmptyEvent,
    #[error("event `{0}` is not concrete")]
    NotConcrete(Event),
    #[error("event `{0}` is already in the history")]
    Duplicate(Event),
    #[error("event `{0}` is not in the history")]
    Undefined(Event),
}

/// A finite sequence of past events, oldest first. Every event is concrete
/// and syntactically unique; histories only grow by appending.
#[derive(Clone, Debug, Default)]
pub struct History {
    events: Vec<Event>,
    positions: HashMap<Event, usize>,
    max_index: u32,
}

impl PartialEq for History {
    fn eq(&self, other: &Self) -> bool {
        self.events == other.events
    }
}

impl Eq for History {}

impl History {
    pub fn new() -> History {
        History::default()
    }

    pub fn from_events<I: IntoIterator<Item = Event>>(events: I) -> Result<History, HistoryError> {
        let mut h = History::new();
        for e in events {
            h.push(e)?;
        }
        Ok(h)
    }

    fn validate(e: &Event) -> Result<(), HistoryError> {
        if e.is_empty() {
            Err(HistoryError::EmptyEvent)
        } else if !e.is_concrete() {
            Err(HistoryError::NotConcrete(e.clone()))
        } else {
            Ok(())
        }
    }

    pub fn push(&mut self, e: Event) -> Result<(), HistoryError> {
        History::validate(&e)?;
        if self.positions.contains_key(&e) {
            return Err(HistoryError::Duplicate(e));
        }
        self.max_index = self.max_index.max(e.max_index());
        self.positions.insert(e.clone(), self.events.len());
        self.events.push(e);
        Ok(())
    }

    /// Returns a new history extended by `e`, leaving `self` untouched.
    pub fn appended(&self, e: Event) -> Result<History, HistoryError> {
        let mut next = self.clone();
        next.push(e)?;
        Ok(next)
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn last(&self) -> Option<&Event> {
        self.events.last()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Event> {
        self.events.iter()
    }

    /// Largest concrete index appearing in any event (0 for an empty history).
    pub fn max_index(&self) -> u32 {
        self.max_index
    }

    /// Zero-based position of `e`, if present.
    pub fn position(&self, e: &Event) -> Option<usize> {
        self.positions.get(e).copied()
    }

    /// `e ∈ H`.
    pub fn contains(&self, e: &Event) -> Result<bool, HistoryError> {
        History::validate(e)?;
        Ok(self.positions.contains_key(e))
    }

    /// Number of events strictly after `e`; the latest event has depth 0.
    pub fn depth(&self, e: &Event) -> Result<usize, HistoryError> {
        History::validate(e)?;
        self.position(e)
            .map(|pos| self.events.len() - 1 - pos)
            .ok_or_else(|| HistoryError::Undefined(e.clone()))
    }

    /// True iff `first` lies further in the past than `second`.
    pub fn before(&self, first: &Event, second: &Event) -> Result<bool, HistoryError> {
        Ok(self.depth(first)? > self.depth(second)?)
    }

    /// Restricts the history to the events initiated on one of `ports`.
    pub fn project(&self, ports: &[&Port]) -> History {
        History::from_events(
            self.events
                .iter()
                .filter(|e| e.port.as_ref().is_some_and(|p| ports.contains(&p)))
                .cloned(),
        )
        .expect("a sub-sequence of a history is a history")
    }
}

impl<'a> IntoIterator for &'a History {
    type Item = &'a Event;
    type IntoIter = std::slice::Iter<'a, Event>;

    fn into_iter(self) -> Self::IntoIter {
        self.events.iter()
    }
}

impl fmt::Display for History {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.events.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

/// A history read from a trace file, remembering the source line of each event.
#[derive(Clone, Debug)]
pub struct Trace {
    pub history: History,
    pub lines: Vec<usize>,
}

impl Trace {
    /// Source line of the event at `position`, or one past the last line.
    pub fn line_of(&self, position: usize) -> usize {
        self.lines
            .get(position)
            .copied()
            .unwrap_or_else(|| self.lines.last().map_or(1, |l| l + 1))
    }
}

/// Parses a trace file: one event per line, `#` comments, blank lines ignored.
pub fn parse_trace(text: &str) -> Result<Trace, ParseError> {
    let mut history = History::new();
    let mut lines = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lang::strip_comment(raw);
        if line.trim().is_empty() {
            continue;
        }
        let event = lang::parse_event(line).map_err(|e| e.at_line(lineno + 1))?;
        history
            .push(event)
            .map_err(|e| ParseError::new(e.to_string(), lineno + 1, 1))?;
        lines.push(lineno + 1);
    }
    Ok(Trace { history, lines })
}

/// Renders a history as a trace file.
pub fn render_trace(history: &History) -> String {
    let mut out = String::new();
    for e in history {
        out.push_str(&e.to_string());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str) -> Event {
        s.parse().unwrap()
    }

    fn hist(events: &[&str]) -> History {
        History::from_events(events.iter().map(|s| ev(s))).unwrap()
    }

    #[test]
    fn membership() {
        let h = hist(&["I: ask[x_1]"]);
        assert!(h.contains(&ev("I: ask[x_1]")).unwrap());
        assert!(!h.contains(&ev("I: ask[x_2]")).unwrap());

        let h = hist(&["C: ping[x_1]", "S: x_1 := pong"]);
        assert!(h.contains(&ev("C: ping[x_1]")).unwrap());
    }

    #[test]
    fn membership_rejects_patterns() {
        let h = hist(&["I: ask[x_1]"]);
        assert_eq!(h.contains(&Event::empty()), Err(HistoryError::EmptyEvent));
        assert!(matches!(
            h.contains(&ev("I: ask[x_i]")),
            Err(HistoryError::NotConcrete(_))
        ));
    }

    #[test]
    fn depth_counts_later_events() {
        let h = hist(&["a_1", "b_1", "c_1"]);
        assert_eq!(h.depth(&ev("c_1")).unwrap(), 0);
        assert_eq!(h.depth(&ev("b_1")).unwrap(), 1);
        assert_eq!(h.depth(&ev("a_1")).unwrap(), 2);
        assert!(matches!(
            h.depth(&ev("d_1")),
            Err(HistoryError::Undefined(_))
        ));
    }

    #[test]
    fn before_relation() {
        let h = hist(&["a_1", "b_1"]);
        assert!(h.before(&ev("a_1"), &ev("b_1")).unwrap());
        assert!(!h.before(&ev("b_1"), &ev("a_1")).unwrap());
        assert!(h.before(&ev("a_1"), &ev("z_1")).is_err());

        let h = hist(&["C: ping[x_1]", "S: x_1 := pong", "C: ping[x_2]"]);
        assert!(h.before(&ev("C: ping[x_1]"), &ev("C: ping[x_2]")).unwrap());
    }

    #[test]
    fn duplicates_rejected() {
        let mut h = hist(&["I: ask[x_1]"]);
        assert!(matches!(
            h.push(ev("I: ask[x_1]")),
            Err(HistoryError::Duplicate(_))
        ));
        assert!(h.push(Event::empty()).is_err());
    }

    #[test]
    fn surface_syntax() {
        let e = ev("UO: x_1 := v_1");
        assert_eq!(
            e,
            Event::value(Some(&Port::new("UO")), StreamVar::at(0, 1))
        );
        assert_eq!(e.to_string(), "UO: x_1 := v_1");

        let e = ev("DI: abort[x'_2]");
        assert_eq!(e, Event::abort(Some(&Port::new("DI")), StreamVar::at(1, 2)));
        assert_eq!(e.to_string(), "DI: abort[x'_2]");

        let e = ev("TI: error[err, x_3]");
        assert_eq!(
            e,
            Event::error(Some(&Port::new("TI")), None, StreamVar::at(0, 3))
        );
        assert_eq!(e.to_string(), "TI: error[err, x_3]");

        for text in [
            "SSU_1: lendStream_1",
            "A: m_2(v_1, err)",
            "abort",
            "S: x_4 := err_2",
            "O: x''_3 := done",
            "TI: abort[x_{i-1}]",
        ] {
            assert_eq!(ev(text).to_string(), text);
        }
    }

    #[test]
    fn trace_files() {
        let text = "# header\nI: ask[x_1]\n\nO: x_1 := v_1  # answer\n";
        let trace = parse_trace(text).unwrap();
        assert_eq!(trace.history.len(), 2);
        assert_eq!(trace.lines, vec![2, 4]);
        assert_eq!(render_trace(&trace.history), "I: ask[x_1]\nO: x_1 := v_1\n");

        let err = parse_trace("I: ask[x_1]\nI: ask[x_1\n").unwrap_err();
        assert_eq!(err.line, 2);
        let err = parse_trace("I: ask[x_1]\nI: ask[x_1]\n").unwrap_err();
        assert_eq!(err.line, 2);
    }

    #[test]
    fn instantiate_below_one_is_absent() {
        let e = ev("TI: abort[x_{i-1}]");
        let at = |v: i64| move |name: &str| (name == "i").then_some(v);
        assert_eq!(e.instantiate(&at(1)).unwrap(), None);
        assert_eq!(e.instantiate(&at(3)).unwrap(), Some(ev("TI: abort[x_2]")));
        assert!(e.instantiate(&|_: &str| None).is_err());
    }
}
